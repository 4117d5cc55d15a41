//! Marginal kurtosis of windowed DFT coefficients versus window length.
//!
//! For every window length `W` a sweep draws fresh mixture spectra,
//! synthesizes only the `W` samples it needs, takes the `W`-order DFT and
//! accumulates the real part of every bin. Two statistics are reported:
//!
//! * per-bin kurtosis `m4 / m2^2`, averaged over bins whose variance is not
//!   negligible, and
//! * pooled kurtosis of all bins' coefficients taken together, which is the
//!   marginal distribution of a coefficient drawn from the whole latent
//!   vector and the one that grows heavy-tailed once `W` exceeds the symbol
//!   length.
//!
//! Realizations are processed in fixed-size blocks whose accumulators are
//! merged in block order, so results do not depend on the thread count.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};

use crate::mixture::CaseSpec;
use crate::ofdm::{synthesize_window, Dft};
use crate::rng::RngStream;
use crate::{Error, Result};

/// Bins with variance at or below this fraction of the average bin power are excluded.
pub const EXCLUSION_THRESHOLD: f64 = 1e-12;
const BLOCK: u64 = 2048;
const MAX_W_LIST: usize = 1 << 16;

/// Streaming central moments up to order four, mergeable across partitions.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MomentAccumulator {
    count: u64,
    mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
}

impl MomentAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        let n1 = self.count as f64;
        self.count += 1;
        let n = self.count as f64;
        let delta = x - self.mean;
        let delta_n = delta / n;
        let delta_n2 = delta_n * delta_n;
        let term1 = delta * delta_n * n1;
        self.mean += delta_n;
        self.m4 += term1 * delta_n2 * (n * n - 3.0 * n + 3.0) + 6.0 * delta_n2 * self.m2
            - 4.0 * delta_n * self.m3;
        self.m3 += term1 * delta_n * (n - 2.0) - 3.0 * delta_n * self.m2;
        self.m2 += term1;
    }

    pub fn merge(&mut self, other: &Self) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let na = self.count as f64;
        let nb = other.count as f64;
        let n = na + nb;
        let delta = other.mean - self.mean;
        let d2 = delta * delta;

        let m4 = self.m4
            + other.m4
            + d2 * d2 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n)
            + 6.0 * d2 * (na * na * other.m2 + nb * nb * self.m2) / (n * n)
            + 4.0 * delta * (na * other.m3 - nb * self.m3) / n;
        let m3 = self.m3
            + other.m3
            + d2 * delta * na * nb * (na - nb) / (n * n)
            + 3.0 * delta * (na * other.m2 - nb * self.m2) / n;
        let m2 = self.m2 + other.m2 + d2 * na * nb / n;

        self.count += other.count;
        self.mean += delta * nb / n;
        self.m2 = m2;
        self.m3 = m3;
        self.m4 = m4;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Population variance `m2 / n`.
    pub fn variance(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.m2 / self.count as f64
        }
    }

    /// `E[x^2]`.
    pub fn mean_power(&self) -> f64 {
        self.variance() + self.mean * self.mean
    }

    /// Pearson kurtosis `n * m4 / m2^2`; `None` for fewer than two samples
    /// or zero variance.
    pub fn kurtosis(&self) -> Option<f64> {
        if self.count < 2 || self.m2 <= 0.0 {
            return None;
        }
        Some(self.count as f64 * self.m4 / (self.m2 * self.m2))
    }
}

/// Where each realization's window starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OffsetPolicy {
    Fixed(usize),
    /// Uniform over all offsets that keep the window inside the series.
    Random,
}

impl Default for OffsetPolicy {
    fn default() -> Self {
        OffsetPolicy::Fixed(0)
    }
}

impl fmt::Display for OffsetPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OffsetPolicy::Fixed(o) => write!(f, "fixed({o})"),
            OffsetPolicy::Random => f.write_str("random"),
        }
    }
}

impl FromStr for OffsetPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "random" {
            return Ok(OffsetPolicy::Random);
        }
        if s == "fixed" {
            return Ok(OffsetPolicy::Fixed(0));
        }
        s.strip_prefix("fixed(")
            .and_then(|r| r.strip_suffix(')'))
            .and_then(|v| v.trim().parse().ok())
            .map(OffsetPolicy::Fixed)
            .ok_or_else(|| Error::Format(format!("bad offset policy {s:?}")))
    }
}

impl Serialize for OffsetPolicy {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for OffsetPolicy {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Parses a window list such as `15,21,31` or `16..200:4` (ranges are
/// inclusive, `:step` defaults to 1). The result is sorted and deduplicated.
pub fn parse_w_list(s: &str) -> Result<Vec<usize>> {
    let bad = |item: &str| Error::Format(format!("bad window list item {item:?}"));
    let mut out = Vec::new();
    for item in s.split(',').map(str::trim).filter(|i| !i.is_empty()) {
        if let Some((lo, rest)) = item.split_once("..") {
            let (hi, step) = match rest.split_once(':') {
                Some((hi, step)) => (hi, step),
                None => (rest, "1"),
            };
            let lo: usize = lo.trim().parse().map_err(|_| bad(item))?;
            let hi: usize = hi
                .trim()
                .trim_start_matches('=')
                .parse()
                .map_err(|_| bad(item))?;
            let step: usize = step.trim().parse().map_err(|_| bad(item))?;
            if step == 0 || lo > hi {
                return Err(bad(item));
            }
            if (hi - lo) / step + out.len() >= MAX_W_LIST {
                return Err(Error::Format("window list too long".into()));
            }
            out.extend((lo..=hi).step_by(step));
        } else {
            out.push(item.parse().map_err(|_| bad(item))?);
            if out.len() > MAX_W_LIST {
                return Err(Error::Format("window list too long".into()));
            }
        }
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub windows: Vec<usize>,
    pub realizations: u64,
    pub master_seed: u64,
    pub offset: OffsetPolicy,
    /// Replace mixture windows with i.i.d. standard Gaussian samples.
    pub gaussian_control: bool,
    /// Run every block on the calling thread. Output is bit-identical to the
    /// parallel path.
    pub strict_sequential: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            windows: Vec::new(),
            realizations: 100_000,
            master_seed: 0,
            offset: OffsetPolicy::default(),
            gaussian_control: false,
            strict_sequential: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowKurtosis {
    pub window: usize,
    pub realizations: u64,
    /// `None` for excluded bins.
    pub bin_kurtosis: Vec<Option<f64>>,
    pub mean_kurtosis: Option<f64>,
    pub min_bin_kurtosis: Option<f64>,
    pub max_bin_kurtosis: Option<f64>,
    pub excluded_bins: usize,
    pub pooled_kurtosis: Option<f64>,
}

impl WindowKurtosis {
    fn from_bins(window: usize, realizations: u64, bins: &[MomentAccumulator]) -> Self {
        let avg_power =
            bins.iter().map(MomentAccumulator::mean_power).sum::<f64>() / bins.len() as f64;
        let threshold = EXCLUSION_THRESHOLD * avg_power;
        let bin_kurtosis: Vec<Option<f64>> = bins
            .iter()
            .map(|b| (b.variance() > threshold).then(|| b.kurtosis()).flatten())
            .collect();
        let included: Vec<f64> = bin_kurtosis.iter().flatten().copied().collect();
        let mean_kurtosis =
            (!included.is_empty()).then(|| included.iter().sum::<f64>() / included.len() as f64);
        let min_bin_kurtosis = included.iter().copied().reduce(f64::min);
        let max_bin_kurtosis = included.iter().copied().reduce(f64::max);

        let mut pooled = MomentAccumulator::new();
        for b in bins {
            pooled.merge(b);
        }
        Self {
            window,
            realizations,
            excluded_bins: bins.len() - included.len(),
            bin_kurtosis,
            mean_kurtosis,
            min_bin_kurtosis,
            max_bin_kurtosis,
            pooled_kurtosis: pooled.kurtosis(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KurtosisSweep {
    pub case: u8,
    pub master_seed: u64,
    pub realizations: u64,
    pub offset: OffsetPolicy,
    pub gaussian_control: bool,
    /// Ascending by window length.
    pub windows: Vec<WindowKurtosis>,
}

/// Run manifest echoed next to exported sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepManifest {
    pub case: u8,
    pub seed: u64,
    pub n: u64,
    pub offset_policy: OffsetPolicy,
    #[serde(rename = "W_list")]
    pub w_list: Vec<usize>,
    pub gaussian_control: bool,
    pub statistic: String,
}

impl KurtosisSweep {
    pub fn window(&self, w: usize) -> Option<&WindowKurtosis> {
        self.windows.iter().find(|r| r.window == w)
    }

    pub fn manifest(&self) -> SweepManifest {
        SweepManifest {
            case: self.case,
            seed: self.master_seed,
            n: self.realizations,
            offset_policy: self.offset,
            w_list: self.windows.iter().map(|w| w.window).collect(),
            gaussian_control: self.gaussian_control,
            statistic: "real part of W-order DFT bins; mean_kurtosis = mean over bins with \
                        variance > 1e-12 x average bin power of m4/m2^2; \
                        pooled_kurtosis = m4/m2^2 of all bins together"
                .into(),
        }
    }
}

fn fill_window(spec: &CaseSpec, cfg: &SweepConfig, w: usize, r: u64, buf: &mut [Complex64]) {
    let mut rng = RngStream::kurtosis(cfg.master_seed, w, r, cfg.gaussian_control).rng();
    if cfg.gaussian_control {
        for b in buf.iter_mut() {
            *b = Complex64::new(rng.sample(StandardNormal), 0.0);
        }
        return;
    }
    let (g, h) = spec.draw_pair(&mut rng);
    let offset = match cfg.offset {
        OffsetPolicy::Fixed(o) => o,
        OffsetPolicy::Random => rng.random_range(0..=spec.len - w),
    };
    let samples = synthesize_window(&(&g + &h), offset, w);
    for (b, v) in buf.iter_mut().zip(samples) {
        *b = Complex64::new(v, 0.0);
    }
}

fn sweep_window(spec: &CaseSpec, cfg: &SweepConfig, w: usize) -> Result<WindowKurtosis> {
    let dft = Dft::new(w)?;
    let blocks = cfg.realizations.div_ceil(BLOCK);
    let run_block = |block: u64| {
        let mut dft = dft.clone();
        let mut acc = vec![MomentAccumulator::new(); w];
        let mut buf = vec![Complex64::default(); w];
        let end = cfg.realizations.min((block + 1) * BLOCK);
        for r in block * BLOCK..end {
            fill_window(spec, cfg, w, r, &mut buf);
            dft.process(&mut buf);
            for (a, x) in acc.iter_mut().zip(&buf) {
                a.push(x.re);
            }
        }
        acc
    };
    let parts: Vec<Vec<MomentAccumulator>> = if cfg.strict_sequential {
        (0..blocks).map(run_block).collect()
    } else {
        (0..blocks).into_par_iter().map(run_block).collect()
    };
    let mut total = vec![MomentAccumulator::new(); w];
    for part in &parts {
        for (t, p) in total.iter_mut().zip(part) {
            t.merge(p);
        }
    }
    Ok(WindowKurtosis::from_bins(w, cfg.realizations, &total))
}

/// Runs the kurtosis-versus-window sweep for `spec`.
pub fn kurtosis_sweep(spec: &CaseSpec, cfg: &SweepConfig) -> Result<KurtosisSweep> {
    if cfg.realizations == 0 || cfg.realizations >= 1 << 32 {
        return Err(Error::InvalidConfig(format!(
            "realization count must be in 1..2^32, got {}",
            cfg.realizations
        )));
    }
    let mut windows = cfg.windows.clone();
    windows.sort_unstable();
    windows.dedup();
    for &w in &windows {
        if w == 0 {
            return Err(Error::InvalidConfig(
                "window length must be positive".into(),
            ));
        }
        let reach = match cfg.offset {
            OffsetPolicy::Fixed(o) => o.saturating_add(w),
            OffsetPolicy::Random => w,
        };
        if reach > spec.len {
            return Err(Error::WindowTooLong {
                window: reach,
                len: spec.len,
            });
        }
    }
    let rows = windows
        .iter()
        .map(|&w| sweep_window(spec, cfg, w))
        .collect::<Result<Vec<_>>>()?;
    Ok(KurtosisSweep {
        case: spec.case.id(),
        master_seed: cfg.master_seed,
        realizations: cfg.realizations,
        offset: cfg.offset,
        gaussian_control: cfg.gaussian_control,
        windows: rows,
    })
}

pub const CSV_HEADER: [&str; 7] = [
    "W",
    "n",
    "mean_kurtosis",
    "min_bin_kurtosis",
    "max_bin_kurtosis",
    "excluded_bins",
    "pooled_kurtosis",
];

/// Writes one CSV row per window, ascending by `W`. Missing statistics are empty fields.
pub fn write_sweep_csv<W: Write>(sweep: &KurtosisSweep, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    for row in &sweep.windows {
        w.write_record([
            row.window.to_string(),
            row.realizations.to_string(),
            opt(row.mean_kurtosis),
            opt(row.min_bin_kurtosis),
            opt(row.max_bin_kurtosis),
            row.excluded_bins.to_string(),
            opt(row.pooled_kurtosis),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn export_sweep(sweep: &KurtosisSweep, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_sweep_csv(sweep, std::io::BufWriter::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixture::case_spec;

    fn naive_kurtosis(xs: &[f64]) -> f64 {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
        m4 / (m2 * m2)
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn accumulator_matches_two_pass() {
        let xs: Vec<f64> = (0..1000)
            .map(|i| ((i * 37 % 101) as f64).sin() * 3.0 + 1.0)
            .collect();
        let mut acc = MomentAccumulator::new();
        xs.iter().for_each(|x| acc.push(*x));
        assert!(rel(acc.kurtosis().unwrap(), naive_kurtosis(&xs)) < 1e-10);
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!(rel(acc.mean(), mean) < 1e-12);
    }

    #[test]
    fn accumulator_degenerate() {
        let mut acc = MomentAccumulator::new();
        assert_eq!(acc.kurtosis(), None);
        acc.push(2.0);
        assert_eq!(acc.kurtosis(), None);
        acc.push(2.0);
        assert_eq!(acc.kurtosis(), None);
        let mut empty = MomentAccumulator::new();
        empty.merge(&acc);
        assert_eq!(empty, acc);
    }

    #[test]
    fn offset_policy_round_trip() {
        for p in [
            OffsetPolicy::Fixed(0),
            OffsetPolicy::Fixed(17),
            OffsetPolicy::Random,
        ] {
            assert_eq!(p.to_string().parse::<OffsetPolicy>().unwrap(), p);
        }
        assert_eq!(
            "fixed".parse::<OffsetPolicy>().unwrap(),
            OffsetPolicy::Fixed(0)
        );
        assert!("sometimes".parse::<OffsetPolicy>().is_err());
        assert!("fixed(-1)".parse::<OffsetPolicy>().is_err());
    }

    #[test]
    fn w_list_parsing() {
        assert_eq!(parse_w_list("15,21, 31").unwrap(), vec![15, 21, 31]);
        assert_eq!(parse_w_list("16..28:4").unwrap(), vec![16, 20, 24, 28]);
        assert_eq!(parse_w_list("3..5,4,1").unwrap(), vec![1, 3, 4, 5]);
        assert_eq!(parse_w_list("").unwrap(), Vec::<usize>::new());
        assert_eq!(parse_w_list("16..200:4").unwrap().len(), 47);
        for bad in ["x", "5..3", "1..4:0", "1..", "-3", "0..99999999999"] {
            assert!(parse_w_list(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn sweep_rejects_bad_windows() {
        let spec = case_spec(4, 0).unwrap();
        let cfg = SweepConfig {
            windows: vec![4097],
            realizations: 10,
            ..Default::default()
        };
        assert!(matches!(
            kurtosis_sweep(&spec, &cfg),
            Err(Error::WindowTooLong { .. })
        ));
        let cfg = SweepConfig {
            windows: vec![100],
            offset: OffsetPolicy::Fixed(4000),
            realizations: 10,
            ..Default::default()
        };
        assert!(kurtosis_sweep(&spec, &cfg).is_err());
        let cfg = SweepConfig {
            windows: vec![0],
            realizations: 10,
            ..Default::default()
        };
        assert!(kurtosis_sweep(&spec, &cfg).is_err());
        let cfg = SweepConfig {
            windows: vec![8],
            realizations: 0,
            ..Default::default()
        };
        assert!(kurtosis_sweep(&spec, &cfg).is_err());
    }

    #[test]
    fn zero_bins_are_excluded_at_true_order() {
        let spec = case_spec(4, 0).unwrap();
        let cfg = SweepConfig {
            windows: vec![64],
            realizations: 3000,
            ..Default::default()
        };
        let sweep = kurtosis_sweep(&spec, &cfg).unwrap();
        let row = &sweep.windows[0];
        // bin 0, Nyquist and the unused subcarriers 29..=35
        assert_eq!(row.excluded_bins, 8);
        assert!(row.bin_kurtosis[0].is_none());
        assert!(row.bin_kurtosis[32].is_none());
        assert!(row.bin_kurtosis[1].is_some());
    }

    #[test]
    fn per_bin_kurtosis_at_true_order_matches_symbol_sum_distribution() {
        // At W = K bin k holds K * (g_k + h_k), so its kurtosis is that of the
        // 16-point superconstellation under uniform symbol priors.
        let spec = case_spec(4, 0).unwrap();
        let gs = spec.soi_alphabet.points().unwrap();
        let hs = spec.intf_alphabet.points().unwrap();
        let sums: Vec<f64> = gs
            .iter()
            .flat_map(|g| hs.iter().map(move |h| g + h))
            .collect();
        let exact = naive_kurtosis(&sums);

        let cfg = SweepConfig {
            windows: vec![64],
            realizations: 100_000,
            master_seed: 4,
            ..Default::default()
        };
        let sweep = kurtosis_sweep(&spec, &cfg).unwrap();
        let row = &sweep.windows[0];
        for k in 1..=28 {
            let got = row.bin_kurtosis[k].unwrap();
            assert!((got - exact).abs() < 0.03, "bin {k}: {got} vs {exact}");
        }
        // pooled over 56 equal-variance bins and 8 zero bins
        let pooled = row.pooled_kurtosis.unwrap();
        assert!((pooled - exact * 64.0 / 56.0).abs() < 0.03, "{pooled}");
    }

    #[test]
    fn parallel_equals_sequential() {
        let spec = case_spec(3, 0).unwrap();
        let mut cfg = SweepConfig {
            windows: vec![20, 64],
            realizations: 5000,
            master_seed: 9,
            offset: OffsetPolicy::Random,
            ..Default::default()
        };
        let par = kurtosis_sweep(&spec, &cfg).unwrap();
        cfg.strict_sequential = true;
        let seq = kurtosis_sweep(&spec, &cfg).unwrap();
        assert_eq!(par, seq);
    }

    #[test]
    fn csv_layout() {
        let spec = case_spec(4, 0).unwrap();
        let cfg = SweepConfig {
            windows: vec![64, 48],
            realizations: 200,
            ..Default::default()
        };
        let sweep = kurtosis_sweep(&spec, &cfg).unwrap();
        let mut buf = Vec::new();
        write_sweep_csv(&sweep, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(
            lines[0],
            "W,n,mean_kurtosis,min_bin_kurtosis,max_bin_kurtosis,excluded_bins,pooled_kurtosis"
        );
        assert!(lines[1].starts_with("48,200,"));
        assert!(lines[2].starts_with("64,200,"));

        let empty = KurtosisSweep {
            windows: vec![],
            ..sweep
        };
        let mut buf = Vec::new();
        write_sweep_csv(&empty, &mut buf).unwrap();
        assert_eq!(buf.iter().filter(|b| **b == b'\n').count(), 1);
    }

    #[test]
    fn manifest_echo() {
        let spec = case_spec(4, 0).unwrap();
        let cfg = SweepConfig {
            windows: vec![16],
            realizations: 50,
            master_seed: 3,
            offset: OffsetPolicy::Random,
            ..Default::default()
        };
        let m = kurtosis_sweep(&spec, &cfg).unwrap().manifest();
        let v = serde_json::to_value(&m).unwrap();
        assert_eq!(v["offset_policy"], "random");
        assert_eq!(v["W_list"], serde_json::json!([16]));
        assert_eq!(v["n"], 50);
        let back: SweepManifest = serde_json::from_value(v).unwrap();
        assert_eq!(back, m);
    }
}
