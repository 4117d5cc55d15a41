#![no_main]

use std::io::Cursor;

use libfuzzer_sys::fuzz_target;
use ofdm_scss::dataset::EstimatesReader;

// Input: 1 byte count, 1 byte series length, then the file contents.
fuzz_target!(|data: &[u8]| {
    let [count, n, body @ ..] = data else {
        return;
    };
    let (count, n) = (u64::from(*count % 8), usize::from(*n) + 1);
    if let Ok(mut reader) = EstimatesReader::new(Cursor::new(body), count, n) {
        for i in 0..count {
            assert_eq!(reader.series(i).expect("validated length").len(), n);
        }
        assert!(reader.series(count).is_err());
    }
});
