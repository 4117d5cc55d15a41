#![no_main]

use std::io::Cursor;

use libfuzzer_sys::fuzz_target;
use ofdm_scss::dataset::{DatasetReader, Manifest};
use ofdm_scss::mixture::case_spec;

// Input: 1 byte case, 1 byte flags (bit 0 f32, bit 1 include b), 1 byte
// count, then the raw .bin payload.
fuzz_target!(|data: &[u8]| {
    let [case, flags, count, bin @ ..] = data else {
        return;
    };
    let Ok(spec) = case_spec(case % 4 + 1, 0) else {
        return;
    };
    let dtype = if flags & 1 == 1 { "f32" } else { "f64" }.parse().unwrap();
    let manifest = Manifest::for_spec(&spec, u64::from(*count % 4), dtype, flags & 2 != 0);
    if let Ok(mut reader) = DatasetReader::new(manifest, Cursor::new(bin)) {
        for rec in reader.records() {
            let rec = rec.expect("validated length");
            assert_eq!(rec.y.len(), 4096);
        }
        let _ = reader.record(u64::from(*count));
    }
});
