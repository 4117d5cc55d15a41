//! OFDM waveform synthesis and spectral coefficient extraction.
//!
//! Conventions: synthesis uses the positive exponent without normalization,
//! `s[n] = sum_k g_k exp(j 2 pi k n / K)`; the forward [`dft`] uses the
//! negative exponent and is unnormalized. The `1/K` factor that inverts
//! synthesis lives in [`extract_coefficients`].

use std::cell::RefCell;
use std::f64::consts::TAU;
use std::ops::Add;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::{Error, Result};

/// Frame geometry of an OFDM signal.
///
/// The general model lays out `symbols` OFDM symbols back to back, each a
/// body of `subcarriers` samples preceded by a `cyclic_prefix`-sample copy of
/// its tail. The real-valued periodic special case is one symbol whose prefix
/// fills everything but the last body, so the signal is `len / subcarriers`
/// whole periods.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OfdmConfig {
    subcarriers: usize,
    cyclic_prefix: usize,
    symbols: usize,
    len: usize,
}

impl OfdmConfig {
    pub fn general(subcarriers: usize, cyclic_prefix: usize, symbols: usize) -> Result<Self> {
        check_order(subcarriers)?;
        if symbols == 0 {
            return Err(Error::InvalidConfig("symbol count must be positive".into()));
        }
        let len = subcarriers
            .checked_add(cyclic_prefix)
            .and_then(|frame| frame.checked_mul(symbols))
            .ok_or_else(|| Error::InvalidConfig("frame length overflows".into()))?;
        Ok(Self {
            subcarriers,
            cyclic_prefix,
            symbols,
            len,
        })
    }

    /// Special case: one symbol, prefix `len - subcarriers`, `len` a multiple
    /// of `subcarriers`.
    pub fn periodic(subcarriers: usize, len: usize) -> Result<Self> {
        check_order(subcarriers)?;
        if len == 0 || !len.is_multiple_of(subcarriers) {
            return Err(Error::NotDivisible {
                len,
                order: subcarriers,
            });
        }
        Ok(Self {
            subcarriers,
            cyclic_prefix: len - subcarriers,
            symbols: 1,
            len,
        })
    }

    pub fn subcarriers(&self) -> usize {
        self.subcarriers
    }

    pub fn cyclic_prefix(&self) -> usize {
        self.cyclic_prefix
    }

    pub fn symbols(&self) -> usize {
        self.symbols
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_periodic(&self) -> bool {
        self.symbols == 1
            && self.len.is_multiple_of(self.subcarriers)
            && self.cyclic_prefix + self.subcarriers == self.len
    }
}

fn check_order(order: usize) -> Result<()> {
    if order < 2 || !order.is_multiple_of(2) {
        return Err(Error::InvalidConfig(format!(
            "subcarrier count must be even and >= 2, got {order}"
        )));
    }
    Ok(())
}

/// Symbol coefficients for the general model, `subcarriers` rows by
/// `symbols` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolGrid {
    subcarriers: usize,
    symbols: usize,
    // column-major: symbol p occupies data[p * subcarriers..(p + 1) * subcarriers]
    data: Vec<Complex64>,
}

impl SymbolGrid {
    pub fn zeros(subcarriers: usize, symbols: usize) -> Self {
        Self {
            subcarriers,
            symbols,
            data: vec![Complex64::default(); subcarriers * symbols],
        }
    }

    pub fn from_fn(
        subcarriers: usize,
        symbols: usize,
        mut f: impl FnMut(usize, usize) -> Complex64,
    ) -> Self {
        let mut grid = Self::zeros(subcarriers, symbols);
        for p in 0..symbols {
            for k in 0..subcarriers {
                grid.data[p * subcarriers + k] = f(k, p);
            }
        }
        grid
    }

    pub fn subcarriers(&self) -> usize {
        self.subcarriers
    }

    pub fn symbols(&self) -> usize {
        self.symbols
    }

    pub fn get(&self, k: usize, p: usize) -> Complex64 {
        assert!(k < self.subcarriers && p < self.symbols);
        self.data[p * self.subcarriers + k]
    }

    pub fn set(&mut self, k: usize, p: usize, value: Complex64) {
        assert!(k < self.subcarriers && p < self.symbols);
        self.data[p * self.subcarriers + k] = value;
    }

    fn column(&self, p: usize) -> &[Complex64] {
        &self.data[p * self.subcarriers..(p + 1) * self.subcarriers]
    }
}

/// The independent coefficients `g_1 .. g_{K/2-1}` of a conjugate-symmetric
/// spectrum of order `K`.
///
/// `g_0 = g_{K/2} = 0` and `g_{K-k} = conj(g_k)` are implied, never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfSpectrum {
    order: usize,
    coeffs: Vec<Complex64>,
}

impl HalfSpectrum {
    pub fn zeros(order: usize) -> Result<Self> {
        check_order(order)?;
        Ok(Self {
            order,
            coeffs: vec![Complex64::default(); order / 2 - 1],
        })
    }

    /// `coeffs[i]` is the coefficient of subcarrier `i + 1`.
    pub fn from_coeffs(order: usize, coeffs: Vec<Complex64>) -> Result<Self> {
        check_order(order)?;
        if coeffs.len() != order / 2 - 1 {
            return Err(Error::DimensionMismatch {
                what: "half-spectrum coefficient count",
                expected: order / 2 - 1,
                actual: coeffs.len(),
            });
        }
        Ok(Self { order, coeffs })
    }

    /// Keeps bins `1 .. K/2-1` of a full length-`K` spectrum.
    pub fn from_full(full: &[Complex64]) -> Result<Self> {
        check_order(full.len())?;
        Self::from_coeffs(full.len(), full[1..full.len() / 2].to_vec())
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Coefficient of bin `k` of the full spectrum, `0 <= k < K`.
    pub fn get(&self, k: usize) -> Complex64 {
        let half = self.order / 2;
        match k {
            0 => Complex64::default(),
            k if k < half => self.coeffs[k - 1],
            k if k == half => Complex64::default(),
            k if k < self.order => self.coeffs[self.order - k - 1].conj(),
            _ => panic!("bin {k} out of range for order {}", self.order),
        }
    }

    /// Sets subcarrier `k`, `1 <= k < K/2`.
    pub fn set(&mut self, k: usize, value: Complex64) {
        assert!(
            k >= 1 && k < self.order / 2,
            "subcarrier {k} is not an independent bin of order {}",
            self.order
        );
        self.coeffs[k - 1] = value;
    }

    pub fn to_full(&self) -> Vec<Complex64> {
        (0..self.order).map(|k| self.get(k)).collect()
    }

    /// Time-average power of the synthesized series, `2 * sum |g_k|^2`.
    pub fn power(&self) -> f64 {
        2.0 * self.coeffs.iter().map(Complex64::norm_sqr).sum::<f64>()
    }

    /// Indices of nonzero subcarriers.
    pub fn support(&self) -> Vec<usize> {
        self.coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != Complex64::default())
            .map(|(i, _)| i + 1)
            .collect()
    }
}

impl Add for &HalfSpectrum {
    type Output = HalfSpectrum;

    fn add(self, rhs: &HalfSpectrum) -> HalfSpectrum {
        assert_eq!(self.order, rhs.order, "spectrum orders differ");
        HalfSpectrum {
            order: self.order,
            coeffs: self
                .coeffs
                .iter()
                .zip(&rhs.coeffs)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

fn twiddles(order: usize) -> Vec<Complex64> {
    (0..order)
        .map(|i| Complex64::from_polar(1.0, TAU * i as f64 / order as f64))
        .collect()
}

/// General OFDM synthesis with cyclic prefix.
///
/// Each symbol body is evaluated once; its prefix samples are copies of the
/// body tail, so the cyclic-prefix property holds bit for bit.
pub fn synthesize_general(config: &OfdmConfig, grid: &SymbolGrid) -> Result<Vec<Complex64>> {
    let k_count = config.subcarriers;
    if grid.subcarriers != k_count {
        return Err(Error::DimensionMismatch {
            what: "symbol grid rows",
            expected: k_count,
            actual: grid.subcarriers,
        });
    }
    if grid.symbols != config.symbols {
        return Err(Error::DimensionMismatch {
            what: "symbol grid columns",
            expected: config.symbols,
            actual: grid.symbols,
        });
    }

    let tw = twiddles(k_count);
    let frame = k_count + config.cyclic_prefix;
    let mut out = Vec::with_capacity(config.len);
    let mut body = vec![Complex64::default(); k_count];
    for p in 0..config.symbols {
        let column = grid.column(p);
        for (m, sample) in body.iter_mut().enumerate() {
            *sample = column
                .iter()
                .enumerate()
                .map(|(k, g)| g * tw[(k * m) % k_count])
                .sum();
        }
        for i in 0..frame {
            let m = i as isize - config.cyclic_prefix as isize;
            out.push(body[m.rem_euclid(k_count as isize) as usize]);
        }
    }
    Ok(out)
}

/// One period (`K` samples) of the real series `2 Re(sum_{k=1}^{K/2-1} g_k exp(j 2 pi k n / K))`.
pub fn real_period(spec: &HalfSpectrum) -> Vec<f64> {
    let order = spec.order;
    let tw = twiddles(order);
    (0..order)
        .map(|n| {
            let acc: f64 = spec
                .coeffs
                .iter()
                .enumerate()
                .map(|(i, g)| {
                    let w = tw[((i + 1) * n) % order];
                    g.re * w.re - g.im * w.im
                })
                .sum();
            2.0 * acc
        })
        .collect()
}

/// Samples `offset .. offset + len` of the periodic real series for `spec`.
pub fn synthesize_window(spec: &HalfSpectrum, offset: usize, len: usize) -> Vec<f64> {
    let period = real_period(spec);
    (offset..offset + len)
        .map(|n| period[n % spec.order])
        .collect()
}

/// Real-valued periodic synthesis for the special case.
pub fn synthesize_periodic_real(config: &OfdmConfig, spec: &HalfSpectrum) -> Result<Vec<f64>> {
    if !config.is_periodic() {
        return Err(Error::InvalidConfig(
            "real synthesis needs the periodic single-symbol configuration".into(),
        ));
    }
    if spec.order != config.subcarriers {
        return Err(Error::DimensionMismatch {
            what: "spectrum order",
            expected: config.subcarriers,
            actual: spec.order,
        });
    }
    let period = real_period(spec);
    let mut out = Vec::with_capacity(config.len);
    for _ in 0..config.len / spec.order {
        out.extend_from_slice(&period);
    }
    Ok(out)
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Reusable forward transform of a fixed order.
#[derive(Clone)]
pub struct Dft {
    fft: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
}

impl Dft {
    pub fn new(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::EmptyInput);
        }
        let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(order));
        let scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        Ok(Self { fft, scratch })
    }

    pub fn order(&self) -> usize {
        self.fft.len()
    }

    /// In-place forward transform; `buffer.len()` must equal the order.
    pub fn process(&mut self, buffer: &mut [Complex64]) {
        assert_eq!(buffer.len(), self.fft.len(), "buffer length != order");
        self.fft.process_with_scratch(buffer, &mut self.scratch);
    }
}

/// Forward DFT `X_m = sum_n x[n] exp(-j 2 pi m n / W)`, unnormalized.
pub fn dft(x: &[Complex64]) -> Result<Vec<Complex64>> {
    let mut plan = Dft::new(x.len())?;
    let mut buf = x.to_vec();
    plan.process(&mut buf);
    Ok(buf)
}

pub fn dft_real(x: &[f64]) -> Result<Vec<Complex64>> {
    let buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    dft(&buf)
}

/// Recovers the length-`order` spectrum of a periodic real series by
/// averaging the DFT over all `len / order` periods and dividing by `order`.
pub fn extract_coefficients(y: &[f64], order: usize) -> Result<Vec<Complex64>> {
    if order == 0 {
        return Err(Error::InvalidConfig(
            "transform order must be positive".into(),
        ));
    }
    if y.is_empty() || !y.len().is_multiple_of(order) {
        return Err(Error::NotDivisible {
            len: y.len(),
            order,
        });
    }
    let periods = y.len() / order;
    // The DFT is linear, so summing periods first equals averaging per-period DFTs.
    let mut folded = vec![Complex64::default(); order];
    for chunk in y.chunks_exact(order) {
        for (acc, &v) in folded.iter_mut().zip(chunk) {
            acc.re += v;
        }
    }
    let mut plan = Dft::new(order)?;
    plan.process(&mut folded);
    let norm = 1.0 / (periods as f64 * order as f64);
    for c in &mut folded {
        *c *= norm;
    }
    Ok(folded)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn config_invariants() {
        assert!(OfdmConfig::general(3, 1, 1).is_err());
        assert!(OfdmConfig::general(0, 1, 1).is_err());
        assert!(OfdmConfig::general(4, 1, 0).is_err());
        assert_eq!(OfdmConfig::general(64, 16, 2).unwrap().len(), 160);
        assert!(OfdmConfig::periodic(64, 100).is_err());
        let cfg = OfdmConfig::periodic(64, 4096).unwrap();
        assert_eq!(cfg.cyclic_prefix(), 4032);
        assert!(cfg.is_periodic());
        assert!(!OfdmConfig::general(64, 16, 2).unwrap().is_periodic());
        // A general config that happens to have the special-case shape.
        assert!(OfdmConfig::general(4, 4, 1).unwrap().is_periodic());
    }

    #[test]
    fn general_single_tone() {
        let cfg = OfdmConfig::general(4, 1, 1).unwrap();
        let mut grid = SymbolGrid::zeros(4, 1);
        grid.set(1, 0, c(1.0, 0.0));
        let out = synthesize_general(&cfg, &grid).unwrap();
        let expected = [c(0., -1.), c(1., 0.), c(0., 1.), c(-1., 0.), c(0., -1.)];
        assert_eq!(out.len(), 5);
        for (a, b) in out.iter().zip(expected) {
            assert!(close(*a, b, 1e-15), "{a} vs {b}");
        }
        assert_eq!(out[0], out[4]);
    }

    #[test]
    fn general_zero_grid_is_zero() {
        let cfg = OfdmConfig::general(8, 3, 2).unwrap();
        let out = synthesize_general(&cfg, &SymbolGrid::zeros(8, 2)).unwrap();
        assert!(out.iter().all(|v| *v == Complex64::default()));
    }

    #[test]
    fn general_rejects_mismatched_grid() {
        let cfg = OfdmConfig::general(8, 3, 2).unwrap();
        assert!(matches!(
            synthesize_general(&cfg, &SymbolGrid::zeros(8, 3)),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(synthesize_general(&cfg, &SymbolGrid::zeros(4, 2)).is_err());
    }

    #[test]
    fn periodic_cosine_and_sine() {
        let cfg = OfdmConfig::periodic(4, 8).unwrap();
        let mut g = HalfSpectrum::zeros(4).unwrap();
        g.set(1, c(1.0, 0.0));
        let s = synthesize_periodic_real(&cfg, &g).unwrap();
        let expected = [2., 0., -2., 0., 2., 0., -2., 0.];
        for (a, b) in s.iter().zip(expected) {
            assert!((a - b).abs() < 1e-14);
        }

        g.set(1, c(0.0, 1.0));
        let s = synthesize_periodic_real(&cfg, &g).unwrap();
        let expected = [0., -2., 0., 2., 0., -2., 0., 2.];
        for (a, b) in s.iter().zip(expected) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn periodic_rejects_general_config() {
        let cfg = OfdmConfig::general(4, 1, 2).unwrap();
        let g = HalfSpectrum::zeros(4).unwrap();
        assert!(synthesize_periodic_real(&cfg, &g).is_err());
        let cfg = OfdmConfig::periodic(8, 16).unwrap();
        assert!(matches!(
            synthesize_periodic_real(&cfg, &g),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn half_spectrum_symmetry() {
        let mut g = HalfSpectrum::zeros(8).unwrap();
        g.set(1, c(1.0, 2.0));
        g.set(3, c(-0.5, 0.25));
        let full = g.to_full();
        assert_eq!(full[0], Complex64::default());
        assert_eq!(full[4], Complex64::default());
        assert_eq!(full[7], c(1.0, -2.0));
        assert_eq!(full[5], c(-0.5, -0.25));
        assert_eq!(HalfSpectrum::from_full(&full).unwrap(), g);
        assert_eq!(g.support(), vec![1, 3]);
        assert!(HalfSpectrum::from_coeffs(8, vec![Complex64::default(); 4]).is_err());
    }

    #[test]
    #[should_panic]
    fn half_spectrum_rejects_nyquist_write() {
        HalfSpectrum::zeros(8).unwrap().set(4, c(1.0, 0.0));
    }

    #[test]
    fn dft_small_cases() {
        let ones = dft_real(&[1., 1., 1., 1.]).unwrap();
        for (a, b) in ones.iter().zip([4., 0., 0., 0.]) {
            assert!(close(*a, c(b, 0.), 1e-14));
        }
        let impulse = dft_real(&[1., 0., 0., 0.]).unwrap();
        assert!(impulse.iter().all(|v| close(*v, c(1., 0.), 1e-14)));
        let sine = dft_real(&[0., 1., 0., -1.]).unwrap();
        let expected = [c(0., 0.), c(0., -2.), c(0., 0.), c(0., 2.)];
        for (a, b) in sine.iter().zip(expected) {
            assert!(close(*a, b, 1e-14));
        }
        assert!(matches!(dft(&[]), Err(Error::EmptyInput)));
    }

    #[test]
    fn extract_small_cases() {
        let cfg = OfdmConfig::periodic(4, 8).unwrap();
        let mut g = HalfSpectrum::zeros(4).unwrap();
        g.set(1, c(1.0, 0.0));
        let y = synthesize_periodic_real(&cfg, &g).unwrap();
        let a = extract_coefficients(&y, 4).unwrap();
        for (got, want) in a.iter().zip([0., 1., 0., 1.]) {
            assert!(close(*got, c(want, 0.), 1e-15));
        }
        let zero = extract_coefficients(&[0.0; 16], 4).unwrap();
        assert!(zero.iter().all(|v| *v == Complex64::default()));
    }

    #[test]
    fn extract_rejects_mismatched_order() {
        assert!(matches!(
            extract_coefficients(&[0.0; 10], 4),
            Err(Error::NotDivisible { len: 10, order: 4 })
        ));
        assert!(extract_coefficients(&[], 4).is_err());
        assert!(extract_coefficients(&[1.0], 0).is_err());
    }

    #[test]
    fn window_matches_full_series() {
        let mut g = HalfSpectrum::zeros(16).unwrap();
        g.set(2, c(0.3, -0.1));
        g.set(5, c(-1.0, 0.7));
        let full = synthesize_periodic_real(&OfdmConfig::periodic(16, 64).unwrap(), &g).unwrap();
        assert_eq!(synthesize_window(&g, 5, 40), full[5..45].to_vec());
    }
}
