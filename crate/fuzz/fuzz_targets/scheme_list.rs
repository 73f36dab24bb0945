#![no_main]
use libfuzzer_sys::fuzz_target;
use wfsd::model::Preset;
use wfsd::scalar::{parse_scheme_list, SchemeId};

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(id) = s.parse::<SchemeId>() {
        assert_eq!(id.name().parse::<SchemeId>().unwrap(), id);
    }
    if let Ok(p) = s.parse::<Preset>() {
        assert_eq!(p.name().parse::<Preset>().unwrap(), p);
    }
    if let Ok(list) = parse_scheme_list(s) {
        assert!(!list.is_empty());
        let names: Vec<&str> = list.iter().map(|id| id.name()).collect();
        assert_eq!(parse_scheme_list(&names.join(",")).unwrap(), list);
    }
});
