#![no_main]

use libfuzzer_sys::fuzz_target;
use ofdm_scss::dataset::Manifest;

fuzz_target!(|data: &[u8]| {
    if let Ok(manifest) = Manifest::from_json(data) {
        // anything accepted must survive a round trip
        let again = Manifest::from_json(manifest.to_json().as_bytes()).expect("re-parse");
        assert_eq!(again, manifest);
    }
});
