#![no_main]
use libfuzzer_sys::fuzz_target;
use wfsd::plot::render_svg;
use wfsd::table::{parse_table, write_table};

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok((manifest, rows)) = parse_table(s) {
        assert!(!rows.is_empty());
        let text = write_table(&manifest, &rows).expect("parsed rows serialise");
        let (_, back) = parse_table(&text).expect("written table parses");
        assert_eq!(back, rows);
        let svg = render_svg(&rows, &manifest, "fuzz");
        assert!(svg.ends_with("</svg>\n"));
    }
});
