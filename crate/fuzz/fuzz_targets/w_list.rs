#![no_main]

use libfuzzer_sys::fuzz_target;
use ofdm_scss::kurtosis::parse_w_list;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(list) = parse_w_list(text) {
        assert!(list.windows(2).all(|w| w[0] < w[1]));
    }
});
