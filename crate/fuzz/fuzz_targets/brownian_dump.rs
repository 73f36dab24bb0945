#![no_main]
use libfuzzer_sys::fuzz_target;
use wfsd::brownian::{decode_dump, encode_dump};

fuzz_target!(|data: &[u8]| {
    if let Ok((spec, stream)) = decode_dump(data) {
        assert_eq!(stream.dims(), spec.dims);
        let bytes = encode_dump(&spec, &stream).expect("decoded dump re-encodes");
        assert_eq!(bytes, data);
        if stream.steps() > 1 {
            let _ = stream.halve_once();
        }
    }
});
