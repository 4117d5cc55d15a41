//! Model-based separation and MSE scoring.
//!
//! For the discrete cases every mixture coefficient `a_k = g_k + h_k` lies in
//! the superconstellation `G + H`. When each point of that set decomposes in
//! exactly one way the SOI symbol can be read back from the point, so
//! separation is exact: extract the spectrum with the true FFT size, demap
//! each SOI subcarrier, resynthesize. Case 1 has continuous amplitudes on
//! disjoint subcarriers and is separated by masking instead.

use std::fmt;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::dataset::{DatasetReader, EstimatesReader};
use crate::mixture::{Alphabet, CaseSpec};
use crate::ofdm::{extract_coefficients, synthesize_periodic_real, Dft, HalfSpectrum};
use crate::{Error, Result};

/// Two superconstellation points closer than this are the same point.
pub const COLLISION_TOLERANCE: f64 = 1e-9;

// Records scored per parallel batch.
const EVAL_BATCH: u64 = 256;

/// The Minkowski sum of two discrete alphabets and its map back to SOI symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperMap {
    points: Vec<f64>,
    soi_of: Vec<f64>,
    guard: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Demapped {
    pub symbol: f64,
    pub point: f64,
    pub ambiguous: bool,
}

/// Enumerates `scale * (g + h)` over both alphabets, failing if any point has
/// two decompositions with different SOI symbols.
pub fn build_supermap(soi: &Alphabet, intf: &Alphabet, scale: f64) -> Result<SuperMap> {
    let (Some(gs), Some(hs)) = (soi.points(), intf.points()) else {
        return Err(Error::NotDiscrete);
    };
    if !(scale.is_finite() && scale != 0.0) {
        return Err(Error::InvalidConfig(format!("bad scale {scale}")));
    }
    // (point, scaled g, scaled h); the sum is formed exactly as a mixture
    // coefficient is, so demapped symbols are bit-identical to the drawn ones.
    let mut sums: Vec<(f64, f64, f64)> = gs
        .iter()
        .flat_map(|g| {
            hs.iter().map(move |h| {
                let (g, h) = (scale * g, scale * h);
                (g + h, g, h)
            })
        })
        .collect();
    sums.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut points: Vec<f64> = Vec::with_capacity(sums.len());
    let mut soi_of: Vec<f64> = Vec::with_capacity(sums.len());
    let mut last: Option<(f64, f64, f64)> = None;
    for entry in sums {
        if let Some(prev) = last {
            if entry.0 - prev.0 <= COLLISION_TOLERANCE {
                if entry.1 != prev.1 {
                    return Err(Error::Collision {
                        point: prev.0,
                        soi_a: prev.1,
                        intf_a: prev.2,
                        soi_b: entry.1,
                        intf_b: entry.2,
                    });
                }
                continue;
            }
        }
        points.push(entry.0);
        soi_of.push(entry.1);
        last = Some(entry);
    }

    let guard = points
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min)
        / 2.0;
    Ok(SuperMap {
        points,
        soi_of,
        guard,
    })
}

impl SuperMap {
    pub fn for_spec(spec: &CaseSpec) -> Result<Self> {
        build_supermap(&spec.soi_alphabet, &spec.intf_alphabet, spec.scale)
    }

    /// Sorted ascending.
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// SOI symbol of each entry of [`points`](Self::points).
    pub fn soi_symbols(&self) -> &[f64] {
        &self.soi_of
    }

    pub fn guard(&self) -> f64 {
        self.guard
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// SOI symbol of the point exactly equal to `point`, if any.
    pub fn soi_of(&self, point: f64) -> Option<f64> {
        self.points
            .iter()
            .position(|p| *p == point)
            .map(|i| self.soi_of[i])
    }

    /// Index of the nearest point; equidistant ties go to the lower point.
    fn nearest(&self, x: f64) -> usize {
        if x.is_nan() {
            return 0;
        }
        let upper = self.points.partition_point(|p| *p < x);
        if upper == 0 {
            return 0;
        }
        if upper == self.points.len() {
            return upper - 1;
        }
        let lower = upper - 1;
        if x - self.points[lower] <= self.points[upper] - x {
            lower
        } else {
            upper
        }
    }

    /// Hard decision on the real part of `coeff`. Ambiguity is flagged when the
    /// coefficient sits outside the guard radius of its nearest point, in
    /// either the real or imaginary direction.
    pub fn demap(&self, coeff: Complex64) -> Demapped {
        let i = self.nearest(coeff.re);
        let point = self.points[i];
        let off_real = (coeff.re - point).abs();
        let ambiguous = !(off_real <= self.guard && coeff.im.abs() <= self.guard);
        Demapped {
            symbol: self.soi_of[i],
            point,
            ambiguous,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleOutput {
    pub estimate: Vec<f64>,
    pub symbols: HalfSpectrum,
    pub ambiguous: usize,
}

/// Perfect-knowledge separator for one case.
#[derive(Debug, Clone)]
pub struct Oracle {
    spec: CaseSpec,
    map: Option<SuperMap>,
}

impl Oracle {
    pub fn new(spec: CaseSpec) -> Result<Self> {
        let map = if spec.case.is_discrete() {
            Some(SuperMap::for_spec(&spec)?)
        } else {
            None
        };
        Ok(Self { spec, map })
    }

    pub fn spec(&self) -> &CaseSpec {
        &self.spec
    }

    pub fn supermap(&self) -> Option<&SuperMap> {
        self.map.as_ref()
    }

    pub fn separate(&self, y: &[f64]) -> Result<OracleOutput> {
        if y.len() != self.spec.len {
            return Err(Error::DimensionMismatch {
                what: "mixture length",
                expected: self.spec.len,
                actual: y.len(),
            });
        }
        let coeffs = extract_coefficients(y, self.spec.subcarriers)?;
        let mut symbols = HalfSpectrum::zeros(self.spec.subcarriers)?;
        let mut ambiguous = 0;
        for &k in &self.spec.soi_indices {
            match &self.map {
                Some(map) => {
                    let d = map.demap(coeffs[k]);
                    ambiguous += d.ambiguous as usize;
                    symbols.set(k, Complex64::new(d.symbol, 0.0));
                }
                None => symbols.set(k, coeffs[k]),
            }
        }
        let estimate = synthesize_periodic_real(&self.spec.config(), &symbols)?;
        Ok(OracleOutput {
            estimate,
            symbols,
            ambiguous,
        })
    }
}

pub fn oracle_separate(y: &[f64], spec: &CaseSpec) -> Result<OracleOutput> {
    Oracle::new(spec.clone())?.separate(y)
}

/// Linear MSE `(1/N) sum (est - reference)^2`.
pub fn mse(estimate: &[f64], reference: &[f64]) -> Result<f64> {
    if estimate.len() != reference.len() {
        return Err(Error::DimensionMismatch {
            what: "estimate length",
            expected: reference.len(),
            actual: estimate.len(),
        });
    }
    if reference.is_empty() {
        return Err(Error::EmptyInput);
    }
    let sum: f64 = estimate
        .iter()
        .zip(reference)
        .map(|(e, r)| (e - r) * (e - r))
        .sum();
    Ok(sum / reference.len() as f64)
}

pub fn mse_db(estimate: &[f64], reference: &[f64]) -> Result<MseDb> {
    mse(estimate, reference).map(MseDb::from_linear)
}

/// An MSE in decibels. Zero error is `-inf`, which serializes as the string
/// `"-inf"` since JSON has no infinities.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct MseDb(pub f64);

impl MseDb {
    pub fn from_linear(mse: f64) -> Self {
        Self(10.0 * mse.log10())
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_exact(self) -> bool {
        self.0 == f64::NEG_INFINITY
    }
}

impl fmt::Display for MseDb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_exact() {
            f.write_str("-inf")
        } else {
            write!(f, "{:.3} dB", self.0)
        }
    }
}

impl Serialize for MseDb {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            s.serialize_f64(self.0)
        } else if self.0 == f64::NEG_INFINITY {
            s.serialize_str("-inf")
        } else if self.0 == f64::INFINITY {
            s.serialize_str("inf")
        } else {
            s.serialize_str("nan")
        }
    }
}

impl<'de> Deserialize<'de> for MseDb {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(MseDb(v)),
            Raw::Str(s) => match s.as_str() {
                "-inf" => Ok(MseDb(f64::NEG_INFINITY)),
                "inf" => Ok(MseDb(f64::INFINITY)),
                "nan" => Ok(MseDb(f64::NAN)),
                other => Err(serde::de::Error::custom(format!("bad MSE value {other:?}"))),
            },
        }
    }
}

/// Scores of one separator over one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    pub case: u8,
    pub count: u64,
    pub mse_linear: f64,
    pub mse_db: MseDb,
    pub ambiguous: u64,
    #[serde(skip)]
    pub per_record: Vec<f64>,
}

impl SeparationReport {
    /// Aggregates per-record linear MSEs in order.
    pub fn from_records(case: u8, per_record: Vec<f64>, ambiguous: u64) -> Self {
        let mse_linear = per_record.iter().sum::<f64>() / per_record.len() as f64;
        Self {
            case,
            count: per_record.len() as u64,
            mse_linear,
            mse_db: MseDb::from_linear(mse_linear),
            ambiguous,
            per_record,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Separator<'a> {
    Oracle,
    /// Estimates file holding one SOI estimate per dataset record.
    Estimates(&'a Path),
}

/// Scores `separator` against the SOI stream of the dataset at `path`.
///
/// Records are processed in parallel batches; per-record MSEs are summed in
/// record order so reports are bit-identical for any thread count.
pub fn evaluate_dataset(path: &Path, separator: Separator<'_>) -> Result<SeparationReport> {
    let mut reader = DatasetReader::open(path)?;
    let manifest = reader.manifest().clone();
    if manifest.count == 0 {
        return Err(Error::EmptyInput);
    }

    let oracle = match separator {
        Separator::Oracle => Some(Oracle::new(manifest.case_spec()?)?),
        Separator::Estimates(_) => None,
    };
    let mut estimates = match separator {
        Separator::Estimates(p) => Some(EstimatesReader::open(p, manifest.count, manifest.n)?),
        Separator::Oracle => None,
    };

    let mut per_record = Vec::with_capacity(manifest.count as usize);
    let mut ambiguous = 0u64;
    let mut start = 0;
    while start < manifest.count {
        let records = reader.read_range(start, EVAL_BATCH)?;
        let scored: Vec<(f64, usize)> = match (&oracle, &mut estimates) {
            (Some(oracle), _) => records
                .par_iter()
                .map(|r| {
                    let out = oracle.separate(&r.y)?;
                    Ok((mse(&out.estimate, &r.s)?, out.ambiguous))
                })
                .collect::<Result<_>>()?,
            (None, Some(est)) => {
                let series = (start..start + records.len() as u64)
                    .map(|i| est.series(i))
                    .collect::<Result<Vec<_>>>()?;
                records
                    .par_iter()
                    .zip(series.par_iter())
                    .map(|(r, e)| Ok((mse(e, &r.s)?, 0)))
                    .collect::<Result<_>>()?
            }
            (None, None) => unreachable!(),
        };
        for (m, a) in scored {
            per_record.push(m);
            ambiguous += a as u64;
        }
        start += records.len() as u64;
    }
    Ok(SeparationReport::from_records(
        manifest.case_id,
        per_record,
        ambiguous,
    ))
}

/// Outcome of demapping with a transform order different from the true one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MismatchReport {
    pub case: u8,
    pub k_wrong: usize,
    pub records: u64,
    pub attempts: u64,
    pub ambiguous: u64,
    pub ambiguous_fraction: f64,
    /// RMS complex distance of the probed coefficients to their nearest point.
    pub rms_distance: f64,
}

/// Bin of a `k_wrong`-point DFT nearest to subcarrier `k` of order `order`.
fn nearest_bin(k: usize, order: usize, k_wrong: usize) -> usize {
    (2 * k * k_wrong + order) / (2 * order)
}

/// Demaps the first `k_wrong` samples of each record with a `k_wrong`-order
/// DFT (scaled by `1/k_wrong`), probing each SOI subcarrier at its nearest bin.
pub fn mismatch_probe<'a, I>(spec: &CaseSpec, k_wrong: usize, records: I) -> Result<MismatchReport>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    if k_wrong < 2 {
        return Err(Error::InvalidConfig(format!(
            "k_wrong must be >= 2, got {k_wrong}"
        )));
    }
    let map = SuperMap::for_spec(spec)?;
    let mut dft = Dft::new(k_wrong)?;
    let bins: Vec<usize> = spec
        .soi_indices
        .iter()
        .map(|&k| nearest_bin(k, spec.subcarriers, k_wrong))
        .collect();
    let norm = 1.0 / k_wrong as f64;

    let mut buf = vec![Complex64::default(); k_wrong];
    let (mut count, mut attempts, mut ambiguous) = (0u64, 0u64, 0u64);
    let mut sq_dist = 0.0;
    for y in records {
        if y.len() < k_wrong {
            return Err(Error::WindowTooLong {
                window: k_wrong,
                len: y.len(),
            });
        }
        for (b, &v) in buf.iter_mut().zip(&y[..k_wrong]) {
            *b = Complex64::new(v, 0.0);
        }
        dft.process(&mut buf);
        for &bin in &bins {
            let coeff = buf[bin] * norm;
            let d = map.demap(coeff);
            attempts += 1;
            ambiguous += d.ambiguous as u64;
            sq_dist += (coeff - Complex64::new(d.point, 0.0)).norm_sqr();
        }
        count += 1;
    }
    let (fraction, rms) = if attempts == 0 {
        (0.0, 0.0)
    } else {
        (
            ambiguous as f64 / attempts as f64,
            (sq_dist / attempts as f64).sqrt(),
        )
    };
    Ok(MismatchReport {
        case: spec.case.id(),
        k_wrong,
        records: count,
        attempts,
        ambiguous,
        ambiguous_fraction: fraction,
        rms_distance: rms,
    })
}

/// [`mismatch_probe`] over freshly generated records `0 .. n_records`.
pub fn mismatch_probe_generated(
    spec: &CaseSpec,
    k_wrong: usize,
    n_records: u64,
) -> Result<MismatchReport> {
    let mixtures: Vec<Vec<f64>> = (0..n_records)
        .into_par_iter()
        .map(|i| spec.make_mixture(i).y)
        .collect();
    mismatch_probe(spec, k_wrong, mixtures.iter().map(Vec::as_slice))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixture::case_spec;

    fn discrete(points: &[f64]) -> Alphabet {
        Alphabet::discrete(points.to_vec()).unwrap()
    }

    #[test]
    fn bpsk_supermap() {
        let map = build_supermap(&discrete(&[1., -1.]), &discrete(&[4., -4.]), 1.0).unwrap();
        assert_eq!(map.points(), &[-5., -3., 3., 5.]);
        assert_eq!(map.soi_symbols(), &[-1., 1., -1., 1.]);
        assert_eq!(map.soi_of(3.0), Some(-1.0));
        assert_eq!(map.guard(), 1.0);
    }

    #[test]
    fn symmetric_alphabets_collide() {
        let err = build_supermap(&discrete(&[1., -1.]), &discrete(&[1., -1.]), 1.0).unwrap_err();
        match err {
            Error::Collision {
                point,
                soi_a,
                soi_b,
                ..
            } => {
                assert_eq!(point, 0.0);
                assert_ne!(soi_a, soi_b);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn pam4_supermap_has_sixteen_odd_points() {
        let spec = case_spec(4, 0).unwrap();
        let map = build_supermap(&spec.soi_alphabet, &spec.intf_alphabet, 1.0).unwrap();
        let r5 = 5f64.sqrt();
        let want: Vec<f64> = (-15..=15).step_by(2).map(|v| v as f64 / r5).collect();
        assert_eq!(map.len(), 16);
        for (got, want) in map.points().iter().zip(&want) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn continuous_alphabet_has_no_supermap() {
        let spec = case_spec(1, 0).unwrap();
        assert!(matches!(SuperMap::for_spec(&spec), Err(Error::NotDiscrete)));
    }

    #[test]
    fn demap_cases() {
        let spec = case_spec(2, 0).unwrap();
        let a = spec.scale;
        let map = SuperMap::for_spec(&spec).unwrap();

        let d = map.demap(Complex64::new(3.0 * a + 1e-14, 0.0));
        assert_eq!(d.symbol, -a);
        assert!(!d.ambiguous);

        // Midpoint tie goes to the lower point, -3a = a + (-4a).
        let d = map.demap(Complex64::new(0.0, 0.0));
        assert_eq!(d.point, map.points()[1]);
        assert_eq!(d.symbol, a);
        assert!(d.ambiguous);

        let d = map.demap(Complex64::new(5.0 * a, 1.0));
        assert!(d.ambiguous);

        let d = map.demap(Complex64::new(f64::NAN, 0.0));
        assert!(d.ambiguous);
        let d = map.demap(Complex64::new(f64::INFINITY, 0.0));
        assert!(d.ambiguous);
        assert_eq!(d.point, *map.points().last().unwrap());
    }

    #[test]
    fn mse_db_arithmetic() {
        let s = vec![0.3; 100];
        let est: Vec<f64> = s.iter().map(|v| v + 0.1).collect();
        let db = mse_db(&est, &s).unwrap().value();
        assert!((db + 20.0).abs() < 1e-9, "{db}");
        assert!(mse_db(&s, &s).unwrap().is_exact());
        assert!(mse(&s, &s[..10]).is_err());
        assert!(mse(&[], &[]).is_err());
    }

    #[test]
    fn mse_db_serialization() {
        assert_eq!(
            serde_json::to_string(&MseDb(f64::NEG_INFINITY)).unwrap(),
            "\"-inf\""
        );
        assert_eq!(serde_json::to_string(&MseDb(-12.5)).unwrap(), "-12.5");
        let back: MseDb = serde_json::from_str("\"-inf\"").unwrap();
        assert!(back.is_exact());
        let back: MseDb = serde_json::from_str("3.25").unwrap();
        assert_eq!(back, MseDb(3.25));
        assert!(serde_json::from_str::<MseDb>("\"x\"").is_err());
    }

    #[test]
    fn oracle_recovers_symbols_exactly() {
        for id in 2..=4 {
            let spec = case_spec(id, 5).unwrap();
            let oracle = Oracle::new(spec.clone()).unwrap();
            for i in 0..20 {
                let rec = spec.make_mixture(i);
                let out = oracle.separate(&rec.y).unwrap();
                assert_eq!(out.ambiguous, 0);
                assert_eq!(out.symbols, rec.g, "case {id} record {i}");
                assert_eq!(out.estimate, rec.s);
            }
        }
    }

    #[test]
    fn case1_masking_is_near_exact() {
        let spec = case_spec(1, 5).unwrap();
        for i in 0..20 {
            let rec = spec.make_mixture(i);
            let out = oracle_separate(&rec.y, &spec).unwrap();
            assert!(mse_db(&out.estimate, &rec.s).unwrap().value() <= -250.0);
            // interference-free input is also recovered
            let out = oracle_separate(&rec.s, &spec).unwrap();
            assert!(mse_db(&out.estimate, &rec.s).unwrap().value() <= -250.0);
        }
    }

    #[test]
    fn interference_free_input_is_outside_the_model() {
        // A bare SOI is not a mixture of the model, so the superconstellation
        // demap misreads it. For BPSK every coefficient falls outside the guard;
        // for the PAM cases SOI symbols coincide with superconstellation points.
        let spec = case_spec(2, 5).unwrap();
        let rec = spec.make_mixture(0);
        let out = oracle_separate(&rec.s, &spec).unwrap();
        assert_eq!(out.ambiguous, spec.soi_indices.len());
        for id in 2..=4 {
            let spec = case_spec(id, 5).unwrap();
            let rec = spec.make_mixture(0);
            let out = oracle_separate(&rec.s, &spec).unwrap();
            assert_ne!(out.symbols, rec.g, "case {id}");
            assert!(mse_db(&out.estimate, &rec.s).unwrap().value() > -20.0);
        }
    }

    #[test]
    fn oracle_rejects_wrong_length() {
        let spec = case_spec(2, 0).unwrap();
        assert!(matches!(
            oracle_separate(&[0.0; 100], &spec),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn nearest_bin_mapping() {
        assert_eq!(nearest_bin(5, 64, 64), 5);
        assert_eq!(nearest_bin(5, 64, 128), 10);
        assert_eq!(nearest_bin(28, 64, 63), 28); // 27.5625 rounds up
        assert_eq!(nearest_bin(1, 64, 63), 1);
        assert_eq!(nearest_bin(20, 64, 65), 20);
    }

    #[test]
    fn mismatch_controls() {
        let spec = case_spec(4, 2).unwrap();
        let at_k = mismatch_probe_generated(&spec, 64, 50).unwrap();
        assert_eq!(at_k.ambiguous, 0);
        assert_eq!(at_k.attempts, 50 * 28);
        let at_2k = mismatch_probe_generated(&spec, 128, 50).unwrap();
        assert_eq!(at_2k.ambiguous, 0);
        assert!(at_2k.rms_distance < 1e-12);
        let off = mismatch_probe_generated(&spec, 63, 50).unwrap();
        assert!(off.ambiguous_fraction > 0.5);
        assert!(off.rms_distance > at_k.rms_distance);
    }

    #[test]
    fn mismatch_errors() {
        let spec = case_spec(4, 2).unwrap();
        assert!(mismatch_probe_generated(&spec, 1, 1).is_err());
        assert!(matches!(
            mismatch_probe(&spec, 64, [&[0.0; 10][..]]),
            Err(Error::WindowTooLong { .. })
        ));
        let c1 = case_spec(1, 2).unwrap();
        assert!(matches!(
            mismatch_probe_generated(&c1, 63, 1),
            Err(Error::NotDiscrete)
        ));
    }
}
