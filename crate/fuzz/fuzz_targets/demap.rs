#![no_main]

use libfuzzer_sys::fuzz_target;
use ofdm_scss::mixture::case_spec;
use ofdm_scss::oracle::SuperMap;
use ofdm_scss::Complex64;

// Input: 1 byte case selector, then (re, im) pairs of little-endian f64.
fuzz_target!(|data: &[u8]| {
    let Some((sel, rest)) = data.split_first() else {
        return;
    };
    let spec = case_spec(sel % 3 + 2, 0).unwrap();
    let map = SuperMap::for_spec(&spec).unwrap();
    for chunk in rest.chunks_exact(16) {
        let re = f64::from_le_bytes(chunk[..8].try_into().unwrap());
        let im = f64::from_le_bytes(chunk[8..].try_into().unwrap());
        let d = map.demap(Complex64::new(re, im));
        assert!(map.points().contains(&d.point));
        assert_eq!(map.soi_of(d.point), Some(d.symbol));
    }
});
