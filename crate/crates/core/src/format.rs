//! On-disk forms of harmonic sets, ARMA cascades and f0 tracks.
//!
//! Binary containers are little-endian: a 4-byte tag, a `u32` version, the
//! frame grid, then length-prefixed (`u64`) `f64` arrays. JSON documents carry
//! the same tag and version next to the data.

use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::arma::{ArmaCascade, ArmaFrame, ArmaOrders, ArmaSection};
use crate::error::{Error, Result};
use crate::harmonics::{F0Track, HarmonicSet};
use crate::signal::{FrameGrid, WindowKind};

pub const VERSION: u32 = 1;
const HARMONICS_TAG: &[u8; 4] = b"HSET";
const CASCADE_TAG: &[u8; 4] = b"ARMC";
const HARMONICS_NAME: &str = "harmvoc-harmonics";
const CASCADE_NAME: &str = "harmvoc-cascade";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FileFormat {
    #[default]
    Json,
    Bin,
}

impl std::str::FromStr for FileFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "json" => Ok(FileFormat::Json),
            "bin" | "binary" => Ok(FileFormat::Bin),
            other => Err(Error::Format(format!("unknown file format '{other}'"))),
        }
    }
}

impl FileFormat {
    pub fn extension(self) -> &'static str {
        match self {
            FileFormat::Json => "json",
            FileFormat::Bin => "bin",
        }
    }
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u64).to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn array(&mut self, v: &[f64]) {
        self.u64(v.len());
        for x in v {
            self.f64(*x);
        }
    }
    fn header(&mut self, tag: &[u8; 4], grid: &FrameGrid) {
        self.0.extend_from_slice(tag);
        self.u32(VERSION);
        self.u32(grid.sample_rate());
        self.f64(grid.frame_shift());
        self.f64(grid.half_window());
        let (kind, sigma) = match grid.window() {
            WindowKind::Hann => (0, 0.0),
            WindowKind::Hamming => (1, 0.0),
            WindowKind::Gaussian(s) => (2, s),
        };
        self.u32(kind);
        self.f64(sigma);
        self.array(grid.centers());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len());
        let end = end.ok_or_else(|| bad(format!("truncated container at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().unwrap());
        usize::try_from(v).map_err(|_| bad("length does not fit in memory"))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn array(&mut self) -> Result<Vec<f64>> {
        let n = self.u64()?;
        if n > (self.bytes.len() - self.pos) / 8 {
            return Err(bad(format!("array of {n} values overruns container")));
        }
        (0..n).map(|_| self.f64()).collect()
    }
    fn header(&mut self, tag: &[u8; 4]) -> Result<FrameGrid> {
        if self.take(4)? != tag {
            return Err(bad(format!("expected '{}' container", String::from_utf8_lossy(tag))));
        }
        let version = self.u32()?;
        if version != VERSION {
            return Err(bad(format!("unsupported container version {version}")));
        }
        let fs = self.u32()?;
        let shift = self.f64()?;
        let half = self.f64()?;
        let kind = self.u32()?;
        let sigma = self.f64()?;
        let window = match kind {
            0 => WindowKind::Hann,
            1 => WindowKind::Hamming,
            2 => WindowKind::Gaussian(sigma),
            k => return Err(bad(format!("unknown window tag {k}"))),
        };
        let centers = self.array()?;
        FrameGrid::new(centers, shift, half, window, fs)
    }
    fn finish(&self) -> Result<()> {
        if self.pos == self.bytes.len() {
            Ok(())
        } else {
            Err(bad(format!("{} trailing bytes", self.bytes.len() - self.pos)))
        }
    }
}

pub fn encode_harmonics(set: &HarmonicSet) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.header(HARMONICS_TAG, &set.grid);
    for l in 0..set.n_frames() {
        w.array(&set.frequencies[l]);
        w.array(&set.amplitudes[l]);
        w.array(&set.phases[l]);
        w.array(&set.compensations[l]);
    }
    w.0
}

pub fn decode_harmonics(bytes: &[u8]) -> Result<HarmonicSet> {
    let mut r = Reader { bytes, pos: 0 };
    let grid = r.header(HARMONICS_TAG)?;
    let n = grid.len();
    let (mut f, mut a, mut p, mut d) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        f.push(r.array()?);
        a.push(r.array()?);
        p.push(r.array()?);
        d.push(r.array()?);
    }
    r.finish()?;
    HarmonicSet::new(grid, f, a, p, d)
}

pub fn encode_cascade(cascade: &ArmaCascade) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.header(CASCADE_TAG, &cascade.grid);
    let o = cascade.orders;
    w.u64(o.p);
    w.u64(o.q);
    w.u64(o.r);
    for frame in &cascade.frames {
        w.f64(frame.gain);
        w.u64(frame.sections.len());
        for s in &frame.sections {
            w.array(&s.ar);
            w.array(&s.ma);
        }
    }
    w.0
}

pub fn decode_cascade(bytes: &[u8]) -> Result<ArmaCascade> {
    let mut r = Reader { bytes, pos: 0 };
    let grid = r.header(CASCADE_TAG)?;
    let orders = ArmaOrders::new(r.u64()?, r.u64()?, r.u64()?)?;
    let mut frames = Vec::with_capacity(grid.len());
    for _ in 0..grid.len() {
        let gain = r.f64()?;
        let n = r.u64()?;
        if n != orders.r {
            return Err(bad(format!("frame has {n} sections, header says {}", orders.r)));
        }
        let sections = (0..n)
            .map(|_| Ok(ArmaSection::new(r.array()?, r.array()?)))
            .collect::<Result<Vec<_>>>()?;
        frames.push(ArmaFrame { gain, sections });
    }
    r.finish()?;
    ArmaCascade::new(grid, orders, frames)
}

#[derive(Serialize, Deserialize)]
struct Document<T> {
    format: String,
    version: u32,
    data: T,
}

fn to_json<T: Serialize>(name: &str, data: &T) -> Result<Vec<u8>> {
    let doc = Document { format: name.to_string(), version: VERSION, data };
    let mut out = serde_json::to_vec_pretty(&doc)?;
    out.push(b'\n');
    Ok(out)
}

fn from_json<T: DeserializeOwned>(name: &str, bytes: &[u8]) -> Result<T> {
    let doc: Document<T> = serde_json::from_slice(bytes)?;
    if doc.format != name {
        return Err(bad(format!("expected a '{name}' document, found '{}'", doc.format)));
    }
    if doc.version != VERSION {
        return Err(bad(format!("unsupported document version {}", doc.version)));
    }
    Ok(doc.data)
}

/// Rebuild the grid through its validating constructor.
fn checked_grid(g: FrameGrid) -> Result<FrameGrid> {
    FrameGrid::new(g.centers().to_vec(), g.frame_shift(), g.half_window(), g.window(), g.sample_rate())
}

pub fn harmonics_to_bytes(set: &HarmonicSet, format: FileFormat) -> Result<Vec<u8>> {
    match format {
        FileFormat::Json => to_json(HARMONICS_NAME, set),
        FileFormat::Bin => Ok(encode_harmonics(set)),
    }
}

/// Accepts either form; binary is recognised by its tag.
pub fn harmonics_from_bytes(bytes: &[u8]) -> Result<HarmonicSet> {
    if bytes.starts_with(HARMONICS_TAG) {
        return decode_harmonics(bytes);
    }
    let set: HarmonicSet = from_json(HARMONICS_NAME, bytes)?;
    HarmonicSet::new(checked_grid(set.grid)?, set.frequencies, set.amplitudes, set.phases, set.compensations)
}

pub fn cascade_to_bytes(cascade: &ArmaCascade, format: FileFormat) -> Result<Vec<u8>> {
    match format {
        FileFormat::Json => to_json(CASCADE_NAME, cascade),
        FileFormat::Bin => Ok(encode_cascade(cascade)),
    }
}

pub fn cascade_from_bytes(bytes: &[u8]) -> Result<ArmaCascade> {
    if bytes.starts_with(CASCADE_TAG) {
        return decode_cascade(bytes);
    }
    let c: ArmaCascade = from_json(CASCADE_NAME, bytes)?;
    ArmaCascade::new(checked_grid(c.grid)?, ArmaOrders::new(c.orders.p, c.orders.q, c.orders.r)?, c.frames)
}

pub fn write_harmonics(path: &Path, set: &HarmonicSet, format: FileFormat) -> Result<()> {
    Ok(std::fs::write(path, harmonics_to_bytes(set, format)?)?)
}

pub fn read_harmonics(path: &Path) -> Result<HarmonicSet> {
    harmonics_from_bytes(&std::fs::read(path)?)
}

pub fn write_cascade(path: &Path, cascade: &ArmaCascade, format: FileFormat) -> Result<()> {
    Ok(std::fs::write(path, cascade_to_bytes(cascade, format)?)?)
}

pub fn read_cascade(path: &Path) -> Result<ArmaCascade> {
    cascade_from_bytes(&std::fs::read(path)?)
}

/// `time,f0` rows with a header line; values print in shortest
/// round-trip form.
pub fn f0_to_csv(track: &F0Track) -> String {
    let mut out = String::from("time,f0\n");
    for (t, v) in track.grid.centers().iter().zip(&track.values) {
        out.push_str(&format!("{t},{v}\n"));
    }
    out
}

/// Parse `time,f0` rows onto `grid`; times must sit within half a sample
/// of the grid centers.
pub fn f0_from_csv(text: &str, grid: &FrameGrid) -> Result<F0Track> {
    let mut values = Vec::with_capacity(grid.len());
    let tol = 0.5 / grid.sample_rate() as f64;
    let rows = text
        .lines()
        .enumerate()
        .map(|(i, line)| (i + 1, line.trim()))
        .filter(|(_, line)| !line.is_empty() && !line.starts_with('#'));
    for (line_no, line) in rows {
        let mut cols = line.split(',').map(str::trim);
        let (Some(t), Some(v), None) = (cols.next(), cols.next(), cols.next()) else {
            return Err(bad(format!("f0 csv line {line_no}: expected 'time,f0'")));
        };
        let (Ok(t), Ok(v)) = (t.parse::<f64>(), v.parse::<f64>()) else {
            if values.is_empty() && line_no == 1 {
                continue;
            }
            return Err(bad(format!("f0 csv line {line_no}: not numeric")));
        };
        let l = values.len();
        let Some(center) = grid.centers().get(l) else {
            return Err(bad(format!("f0 csv has more rows than the {} grid frames", grid.len())));
        };
        if (t - center).abs() > tol {
            return Err(bad(format!("f0 csv line {line_no}: time {t} off grid (frame {l} at {center})")));
        }
        values.push(v);
    }
    F0Track::new(grid.clone(), values)
}

pub fn write_f0(path: &Path, track: &F0Track) -> Result<()> {
    Ok(std::fs::write(path, f0_to_csv(track))?)
}

pub fn read_f0(path: &Path, grid: &FrameGrid) -> Result<F0Track> {
    f0_from_csv(&std::fs::read_to_string(path)?, grid)
}
