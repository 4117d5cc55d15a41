//! Fixed-stride binary datasets with a JSON manifest.
//!
//! A dataset is a pair of files sharing a stem: `<stem>.json` holds the
//! [`Manifest`] and `<stem>.bin` holds
//!
//! ```text
//! "OFDMSCSS"            8 bytes magic
//! version               u32 little-endian
//! record 0 .. count-1   y[0..N], s[0..N], (b[0..N] if includes_interference)
//! ```
//!
//! with every value a little-endian IEEE-754 number of the manifest dtype and
//! no padding anywhere. Estimates files (separator outputs to be scored) use
//! the same header followed by one series of `N` values per record; their
//! dtype is inferred from the file size.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::mixture::{case_spec, Alphabet, CaseSpec};
use crate::{Error, Result};

pub const MAGIC: [u8; 8] = *b"OFDMSCSS";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: u64 = 12;

// Records generated in parallel per write batch.
const WRITE_BATCH: u64 = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    #[default]
    F64,
}

impl Dtype {
    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Dtype::F32 => "f32",
            Dtype::F64 => "f64",
        }
    }

    fn other(self) -> Self {
        match self {
            Dtype::F32 => Dtype::F64,
            Dtype::F64 => Dtype::F32,
        }
    }

    fn encode(self, values: &[f64], out: &mut Vec<u8>) {
        match self {
            Dtype::F32 => values
                .iter()
                .for_each(|v| out.extend_from_slice(&(*v as f32).to_le_bytes())),
            Dtype::F64 => values
                .iter()
                .for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
        }
    }

    fn decode(self, bytes: &[u8]) -> Vec<f64> {
        match self {
            Dtype::F32 => bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect(),
            Dtype::F64 => bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        }
    }
}

impl FromStr for Dtype {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" => Ok(Dtype::F32),
            "f64" => Ok(Dtype::F64),
            other => Err(Error::Format(format!("unknown dtype {other:?}"))),
        }
    }
}

/// How a dataset was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Creation {
    pub generator: String,
    pub rng: String,
    pub record_layout: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub case_id: u8,
    pub n: usize,
    pub k: usize,
    pub ksc: usize,
    pub count: u64,
    pub master_seed: u64,
    pub dtype: Dtype,
    pub includes_interference: bool,
    pub scale: f64,
    pub soi_alphabet: Alphabet,
    pub intf_alphabet: Alphabet,
    /// Present for case 1 only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub soi_indices: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intf_indices: Option<Vec<usize>>,
    pub creation: Creation,
}

impl Manifest {
    pub fn for_spec(spec: &CaseSpec, count: u64, dtype: Dtype, include_b: bool) -> Self {
        let disjoint = !spec.case.is_discrete();
        Self {
            format_version: FORMAT_VERSION,
            case_id: spec.case.id(),
            n: spec.len,
            k: spec.subcarriers,
            ksc: spec.active,
            count,
            master_seed: spec.master_seed,
            dtype,
            includes_interference: include_b,
            scale: spec.scale,
            soi_alphabet: spec.soi_alphabet.clone(),
            intf_alphabet: spec.intf_alphabet.clone(),
            soi_indices: disjoint.then(|| spec.soi_indices.clone()),
            intf_indices: disjoint.then(|| spec.intf_indices.clone()),
            creation: Creation {
                generator: concat!("ofdm-scss ", env!("CARGO_PKG_VERSION")).into(),
                rng: "chacha20; key=seed_from_u64(master_seed); stream=record_index".into(),
                record_layout: if include_b { "y,s,b" } else { "y,s" }.into(),
            },
        }
    }

    /// Parses and validates a manifest.
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let manifest: Manifest = serde_json::from_slice(bytes)?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn streams(&self) -> usize {
        if self.includes_interference {
            3
        } else {
            2
        }
    }

    fn record_bytes_for(&self, dtype: Dtype) -> Option<u64> {
        (self.n as u64)
            .checked_mul(self.streams() as u64)?
            .checked_mul(dtype.size() as u64)
    }

    fn file_len_for(&self, dtype: Dtype) -> Option<u64> {
        self.record_bytes_for(dtype)?
            .checked_mul(self.count)?
            .checked_add(HEADER_LEN)
    }

    /// Exact size of the `.bin` file.
    pub fn data_len(&self) -> Result<u64> {
        self.file_len_for(self.dtype)
            .ok_or_else(|| Error::Format("dataset size overflows u64".into()))
    }

    /// Rebuilds the generating spec and checks it agrees with the manifest.
    pub fn case_spec(&self) -> Result<CaseSpec> {
        let spec = case_spec(self.case_id, self.master_seed)?;
        let mismatch = |field: &str| {
            Err(Error::Format(format!(
                "manifest {field} disagrees with case {}",
                self.case_id
            )))
        };
        if self.n != spec.len || self.k != spec.subcarriers || self.ksc != spec.active {
            return mismatch("geometry");
        }
        if self.scale != spec.scale {
            return mismatch("scale");
        }
        if self.soi_alphabet != spec.soi_alphabet || self.intf_alphabet != spec.intf_alphabet {
            return mismatch("alphabets");
        }
        let indices_ok = |stored: &Option<Vec<usize>>, actual: &Vec<usize>| match stored {
            Some(v) => v == actual,
            None => spec.case.is_discrete(),
        };
        if !indices_ok(&self.soi_indices, &spec.soi_indices)
            || !indices_ok(&self.intf_indices, &spec.intf_indices)
        {
            return mismatch("subcarrier indices");
        }
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: self.format_version,
                supported: FORMAT_VERSION,
            });
        }
        self.soi_alphabet.validate()?;
        self.intf_alphabet.validate()?;
        self.case_spec()?;
        self.data_len()?;
        Ok(())
    }
}

/// Resolves `<stem>`, `<stem>.bin` or `<stem>.json` to the manifest and data paths.
pub fn dataset_paths(path: &Path) -> (PathBuf, PathBuf) {
    let stem = match path.extension().and_then(|e| e.to_str()) {
        Some("bin") | Some("json") => path.with_extension(""),
        _ => path.to_path_buf(),
    };
    let with = |ext: &str| {
        let mut os = stem.clone().into_os_string();
        os.push(ext);
        PathBuf::from(os)
    };
    (with(".json"), with(".bin"))
}

fn write_header<W: Write>(w: &mut W) -> io::Result<()> {
    w.write_all(&MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())
}

/// Generates `count` records of `spec` and writes the dataset pair at `out`.
///
/// Records are generated in parallel on the current rayon pool and written
/// in index order; the output does not depend on the thread count.
pub fn write_dataset(
    spec: &CaseSpec,
    count: u64,
    dtype: Dtype,
    include_b: bool,
    out: &Path,
) -> Result<Manifest> {
    let manifest = Manifest::for_spec(spec, count, dtype, include_b);
    manifest.data_len()?;
    let (manifest_path, data_path) = dataset_paths(out);

    let mut w = BufWriter::new(File::create(&data_path)?);
    write_header(&mut w)?;
    let mut bytes = Vec::new();
    let mut start = 0;
    while start < count {
        let end = count.min(start + WRITE_BATCH);
        let batch: Vec<_> = (start..end)
            .into_par_iter()
            .map(|i| spec.make_mixture(i))
            .collect();
        for rec in &batch {
            bytes.clear();
            dtype.encode(&rec.y, &mut bytes);
            dtype.encode(&rec.s, &mut bytes);
            if include_b {
                dtype.encode(&rec.b, &mut bytes);
            }
            w.write_all(&bytes)?;
        }
        start = end;
    }
    w.flush()?;

    std::fs::write(&manifest_path, manifest.to_json())?;
    Ok(manifest)
}

/// Checks magic and version, then returns the total stream length.
fn read_header<R: Read + Seek>(inner: &mut R) -> Result<u64> {
    let len = inner.seek(SeekFrom::End(0))?;
    inner.seek(SeekFrom::Start(0))?;
    if len < MAGIC.len() as u64 {
        return Err(Error::BadMagic);
    }
    let mut header = [0u8; HEADER_LEN as usize];
    let got = read_up_to(inner, &mut header)?;
    if header[..8] != MAGIC {
        return Err(Error::BadMagic);
    }
    if got < header.len() {
        return Err(Error::Truncated {
            expected: HEADER_LEN,
            actual: len,
        });
    }
    let version = u32::from_le_bytes(header[8..12].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    Ok(len)
}

fn read_up_to<R: Read>(inner: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match inner.read(&mut buf[filled..])? {
            0 => break,
            n => filled += n,
        }
    }
    Ok(filled)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub y: Vec<f64>,
    pub s: Vec<f64>,
    pub b: Option<Vec<f64>>,
}

/// Random-access reader over a dataset's `.bin` stream.
pub struct DatasetReader<R> {
    manifest: Manifest,
    inner: R,
    record_bytes: u64,
    buf: Vec<u8>,
}

impl DatasetReader<BufReader<File>> {
    pub fn open(path: &Path) -> Result<Self> {
        let (manifest_path, data_path) = dataset_paths(path);
        let manifest = Manifest::from_json(&std::fs::read(&manifest_path)?)?;
        Self::new(manifest, BufReader::new(File::open(&data_path)?))
    }
}

impl<R: Read + Seek> DatasetReader<R> {
    /// Validates `inner` against `manifest`: magic, version and exact size.
    pub fn new(manifest: Manifest, mut inner: R) -> Result<Self> {
        manifest.validate()?;
        let len = read_header(&mut inner)?;
        let expected = manifest.data_len()?;
        if len != expected {
            if manifest.file_len_for(manifest.dtype.other()) == Some(len) && manifest.count > 0 {
                return Err(Error::DtypeMismatch {
                    manifest: manifest.dtype.name(),
                    actual: manifest.dtype.other().name(),
                });
            }
            return Err(Error::Truncated {
                expected,
                actual: len,
            });
        }
        let record_bytes = manifest.record_bytes_for(manifest.dtype).unwrap();
        Ok(Self {
            manifest,
            inner,
            record_bytes,
            buf: Vec::new(),
        })
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn count(&self) -> u64 {
        self.manifest.count
    }

    pub fn record(&mut self, index: u64) -> Result<Record> {
        if index >= self.manifest.count {
            return Err(Error::RecordOutOfRange {
                index,
                count: self.manifest.count,
            });
        }
        self.inner
            .seek(SeekFrom::Start(HEADER_LEN + index * self.record_bytes))?;
        self.read_next()
    }

    fn read_next(&mut self) -> Result<Record> {
        self.buf.resize(self.record_bytes as usize, 0);
        self.inner.read_exact(&mut self.buf)?;
        let stream = self.manifest.n * self.manifest.dtype.size();
        let dtype = self.manifest.dtype;
        Ok(Record {
            y: dtype.decode(&self.buf[..stream]),
            s: dtype.decode(&self.buf[stream..2 * stream]),
            b: self
                .manifest
                .includes_interference
                .then(|| dtype.decode(&self.buf[2 * stream..3 * stream])),
        })
    }

    /// Reads records `start .. start + len` (clamped to the count).
    pub fn read_range(&mut self, start: u64, len: u64) -> Result<Vec<Record>> {
        let end = self.manifest.count.min(start.saturating_add(len));
        if start >= end {
            return Ok(Vec::new());
        }
        let mut out = Vec::with_capacity((end - start) as usize);
        out.push(self.record(start)?);
        for _ in start + 1..end {
            out.push(self.read_next()?);
        }
        Ok(out)
    }

    pub fn records(&mut self) -> Records<'_, R> {
        Records {
            reader: self,
            next: 0,
        }
    }
}

pub struct Records<'a, R> {
    reader: &'a mut DatasetReader<R>,
    next: u64,
}

impl<R: Read + Seek> Iterator for Records<'_, R> {
    type Item = Result<Record>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.next >= self.reader.count() {
            return None;
        }
        let item = self.reader.record(self.next);
        self.next += 1;
        Some(item)
    }
}

/// Opens a dataset and returns its manifest with a reader positioned at record 0.
pub fn read_dataset(path: &Path) -> Result<(Manifest, DatasetReader<BufReader<File>>)> {
    let reader = DatasetReader::open(path)?;
    Ok((reader.manifest().clone(), reader))
}

/// Writes one estimated SOI series per record in the estimates layout.
pub fn write_estimates(path: &Path, dtype: Dtype, estimates: &[Vec<f64>]) -> Result<()> {
    if let Some(first) = estimates.first() {
        if let Some(bad) = estimates.iter().find(|e| e.len() != first.len()) {
            return Err(Error::DimensionMismatch {
                what: "estimate series length",
                expected: first.len(),
                actual: bad.len(),
            });
        }
    }
    let mut w = BufWriter::new(File::create(path)?);
    write_header(&mut w)?;
    let mut bytes = Vec::new();
    for series in estimates {
        bytes.clear();
        dtype.encode(series, &mut bytes);
        w.write_all(&bytes)?;
    }
    w.flush()?;
    Ok(())
}

/// Reader over an estimates file holding `count` series of `n` values.
pub struct EstimatesReader<R> {
    inner: R,
    n: usize,
    count: u64,
    dtype: Dtype,
    buf: Vec<u8>,
}

impl EstimatesReader<BufReader<File>> {
    pub fn open(path: &Path, count: u64, n: usize) -> Result<Self> {
        Self::new(BufReader::new(File::open(path)?), count, n)
    }
}

impl<R: Read + Seek> EstimatesReader<R> {
    pub fn new(mut inner: R, count: u64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        let len = read_header(&mut inner)?;
        let size_for = |dtype: Dtype| {
            (n as u64)
                .checked_mul(dtype.size() as u64)
                .and_then(|r| r.checked_mul(count))
                .and_then(|b| b.checked_add(HEADER_LEN))
        };
        let dtype = [Dtype::F64, Dtype::F32]
            .into_iter()
            .find(|d| size_for(*d) == Some(len))
            .ok_or_else(|| {
                Error::Format(format!(
                    "estimates file has {len} bytes; {count} series of {n} values need {} (f64) or {} (f32)",
                    size_for(Dtype::F64).map_or("overflow".into(), |v| v.to_string()),
                    size_for(Dtype::F32).map_or("overflow".into(), |v| v.to_string()),
                ))
            })?;
        Ok(Self {
            inner,
            n,
            count,
            dtype,
            buf: Vec::new(),
        })
    }

    pub fn dtype(&self) -> Dtype {
        self.dtype
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn series(&mut self, index: u64) -> Result<Vec<f64>> {
        if index >= self.count {
            return Err(Error::RecordOutOfRange {
                index,
                count: self.count,
            });
        }
        let stride = (self.n * self.dtype.size()) as u64;
        self.inner
            .seek(SeekFrom::Start(HEADER_LEN + index * stride))?;
        self.buf.resize(stride as usize, 0);
        self.inner.read_exact(&mut self.buf)?;
        Ok(self.dtype.decode(&self.buf))
    }
}
