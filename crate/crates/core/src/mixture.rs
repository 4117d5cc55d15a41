//! The four benchmark mixture cases and record generation.
//!
//! Every case uses `K = 64` subcarriers, `N = 4096` samples and at most
//! `Ksc = 28` active subcarriers per source. One amplitude factor scales
//! both sources so the SOI has unit expected power; the interference
//! alphabets are built four times larger in amplitude, which makes its
//! expected power 16.

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ofdm::{synthesize_periodic_real, HalfSpectrum, OfdmConfig};
use crate::rng::{RngStream, CASE_SPLIT_STREAM};
use crate::{Error, Result};

pub const SUBCARRIERS: usize = 64;
pub const SERIES_LEN: usize = 4096;
pub const ACTIVE_SUBCARRIERS: usize = 28;
/// Case 1 gives each source this many of the active subcarriers.
pub const CASE1_SPLIT: usize = ACTIVE_SUBCARRIERS / 2;

/// A real symbol alphabet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Alphabet {
    Discrete { points: Vec<f64> },
    Uniform { lo: f64, hi: f64 },
}

impl Alphabet {
    pub fn discrete(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidConfig("empty alphabet".into()));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidConfig("non-finite alphabet point".into()));
        }
        for (i, a) in points.iter().enumerate() {
            if points[i + 1..].contains(a) {
                return Err(Error::InvalidConfig(format!(
                    "duplicate alphabet point {a}"
                )));
            }
        }
        Ok(Self::Discrete { points })
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidConfig(format!(
                "bad uniform bounds [{lo}, {hi}]"
            )));
        }
        Ok(Self::Uniform { lo, hi })
    }

    pub fn points(&self) -> Option<&[f64]> {
        match self {
            Self::Discrete { points } => Some(points),
            Self::Uniform { .. } => None,
        }
    }

    /// `E[x^2]` under the uniform prior.
    pub fn second_moment(&self) -> f64 {
        match self {
            Self::Discrete { points } => {
                points.iter().map(|p| p * p).sum::<f64>() / points.len() as f64
            }
            Self::Uniform { lo, hi } => (lo * lo + lo * hi + hi * hi) / 3.0,
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Discrete { points } => points[rng.random_range(0..points.len())],
            Self::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
        }
    }

    /// Validates the invariants of a deserialized alphabet.
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Discrete { points } => Self::discrete(points.clone()).map(|_| ()),
            Self::Uniform { lo, hi } => Self::uniform(*lo, *hi).map(|_| ()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Case {
    /// Disjoint subcarrier sets, continuous uniform amplitudes.
    Disjoint = 1,
    /// BPSK-like SOI and interference.
    Bpsk = 2,
    /// BPSK-like SOI, 4-PAM-like interference.
    Mixed = 3,
    /// 4-PAM-like SOI and interference.
    Pam4 = 4,
}

impl Case {
    pub const ALL: [Case; 4] = [Case::Disjoint, Case::Bpsk, Case::Mixed, Case::Pam4];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn is_discrete(self) -> bool {
        self != Case::Disjoint
    }
}

impl TryFrom<u8> for Case {
    type Error = Error;

    fn try_from(id: u8) -> Result<Self> {
        match id {
            1 => Ok(Case::Disjoint),
            2 => Ok(Case::Bpsk),
            3 => Ok(Case::Mixed),
            4 => Ok(Case::Pam4),
            other => Err(Error::UnknownCase(other)),
        }
    }
}

impl From<Case> for u8 {
    fn from(case: Case) -> u8 {
        case.id()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Soi,
    Interference,
}

/// Full generative description of one mixture case.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseSpec {
    pub case: Case,
    pub master_seed: u64,
    pub subcarriers: usize,
    pub len: usize,
    pub active: usize,
    pub soi_alphabet: Alphabet,
    pub intf_alphabet: Alphabet,
    /// Sorted, drawn from `1..=active`.
    pub soi_indices: Vec<usize>,
    pub intf_indices: Vec<usize>,
    pub scale: f64,
}

/// One generated mixture with its sources and post-scaling coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureRecord {
    pub case: Case,
    pub record_index: u64,
    pub master_seed: u64,
    pub y: Vec<f64>,
    pub s: Vec<f64>,
    pub b: Vec<f64>,
    pub g: HalfSpectrum,
    pub h: HalfSpectrum,
}

/// Builds the case definition for `case_id`. Only case 1 consumes `master_seed`, to
/// split the active subcarriers between the sources.
pub fn case_spec(case_id: u8, master_seed: u64) -> Result<CaseSpec> {
    let case = Case::try_from(case_id)?;
    let r5 = 5f64.sqrt();
    let r3 = 3f64.sqrt();
    let all: Vec<usize> = (1..=ACTIVE_SUBCARRIERS).collect();
    let pam_intf = || Alphabet::discrete(vec![12.0 / r5, 4.0 / r5, -4.0 / r5, -12.0 / r5]);

    let (soi_alphabet, intf_alphabet, soi_indices, intf_indices) = match case {
        Case::Disjoint => {
            let mut shuffled = all;
            shuffled.shuffle(&mut RngStream::new(master_seed, CASE_SPLIT_STREAM).rng());
            let (soi, intf) = shuffled.split_at(CASE1_SPLIT);
            let mut soi = soi.to_vec();
            let mut intf = intf.to_vec();
            soi.sort_unstable();
            intf.sort_unstable();
            (
                Alphabet::uniform(-r3, r3)?,
                Alphabet::uniform(-4.0 * r3, 4.0 * r3)?,
                soi,
                intf,
            )
        }
        Case::Bpsk => (
            Alphabet::discrete(vec![1.0, -1.0])?,
            Alphabet::discrete(vec![4.0, -4.0])?,
            all.clone(),
            all,
        ),
        Case::Mixed => (
            Alphabet::discrete(vec![1.0, -1.0])?,
            pam_intf()?,
            all.clone(),
            all,
        ),
        Case::Pam4 => (
            Alphabet::discrete(vec![3.0 / r5, 1.0 / r5, -1.0 / r5, -3.0 / r5])?,
            pam_intf()?,
            all.clone(),
            all,
        ),
    };

    let scale = 1.0 / (2.0 * soi_indices.len() as f64 * soi_alphabet.second_moment()).sqrt();
    Ok(CaseSpec {
        case,
        master_seed,
        subcarriers: SUBCARRIERS,
        len: SERIES_LEN,
        active: ACTIVE_SUBCARRIERS,
        soi_alphabet,
        intf_alphabet,
        soi_indices,
        intf_indices,
        scale,
    })
}

impl CaseSpec {
    pub fn config(&self) -> OfdmConfig {
        OfdmConfig::periodic(self.subcarriers, self.len).expect("case geometry is valid")
    }

    pub fn alphabet(&self, source: Source) -> &Alphabet {
        match source {
            Source::Soi => &self.soi_alphabet,
            Source::Interference => &self.intf_alphabet,
        }
    }

    pub fn indices(&self, source: Source) -> &[usize] {
        match source {
            Source::Soi => &self.soi_indices,
            Source::Interference => &self.intf_indices,
        }
    }

    /// Analytic expected time-average power `2 * |indices| * scale^2 * E[x^2]`.
    pub fn expected_power(&self, source: Source) -> f64 {
        2.0 * self.indices(source).len() as f64
            * self.scale
            * self.scale
            * self.alphabet(source).second_moment()
    }

    /// Draws the scaled SOI and interference spectra for one realization.
    /// SOI coefficients are drawn first, in index order, then interference.
    pub fn draw_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> (HalfSpectrum, HalfSpectrum) {
        let draw = |source: Source, rng: &mut R| {
            let mut spec = HalfSpectrum::zeros(self.subcarriers).expect("even order");
            let alphabet = self.alphabet(source);
            for &k in self.indices(source) {
                spec.set(k, Complex64::new(self.scale * alphabet.draw(rng), 0.0));
            }
            spec
        };
        let g = draw(Source::Soi, rng);
        let h = draw(Source::Interference, rng);
        (g, h)
    }

    /// Record `record_index`, a pure function of `(case, master_seed, record_index)`.
    pub fn make_mixture(&self, record_index: u64) -> MixtureRecord {
        let mut rng = RngStream::record(self.master_seed, record_index).rng();
        let (g, h) = self.draw_pair(&mut rng);
        let config = self.config();
        let s = synthesize_periodic_real(&config, &g).expect("spec matches config");
        let b = synthesize_periodic_real(&config, &h).expect("spec matches config");
        let y = s.iter().zip(&b).map(|(s, b)| s + b).collect();
        MixtureRecord {
            case: self.case,
            record_index,
            master_seed: self.master_seed,
            y,
            s,
            b,
            g,
            h,
        }
    }
}

/// Time-average power `(1/N) sum x[n]^2`.
pub fn power(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}
