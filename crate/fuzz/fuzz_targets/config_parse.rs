#![no_main]
use libfuzzer_sys::fuzz_target;
use wfsd::config::{parse_exponents, ConfigMap};

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = ConfigMap::parse(s) {
        // whatever parses must survive a write and re-read unchanged
        let again = ConfigMap::parse(&cfg.to_text()).expect("rendered config parses");
        assert_eq!(again, cfg);
        if let Some(e) = cfg.get("exps") {
            let _ = parse_exponents(e);
        }
        let _ = cfg.get_parsed::<u64>("seed");
        let _ = cfg.get_parsed::<f64>("k1");
    }
    let _ = parse_exponents(s);
});
