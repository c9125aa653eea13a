//! Binary and CSV interchange formats.
//!
//! GMCF layout, all little-endian:
//!
//! ```text
//! offset 0   "GMCF"
//!        4   version  u16
//!        6   d        u8
//!        7   kind     u8   (0 field, 1 Brownian path, 2 BES(3) path)
//!        8   count    u64  (number of points)
//!       16   count·d  f64  point coordinates (path times when d = 1)
//!            rows·count f64 values, one row per replica
//! ```

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::asymptotics::{LaplaceKind, LaplaceScan, TailScan};
use crate::bessel::{Path, PathKind};
use crate::field::FieldSample;
use crate::gmc::{GmcMassSample, Regime};
use crate::{Error, Result};

pub const GMCF_MAGIC: &[u8; 4] = b"GMCF";
pub const GMCF_VERSION: u16 = 1;
pub const GMCF_HEADER_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[repr(u8)]
pub enum GmcfKind {
    Field = 0,
    BmPath = 1,
    Bes3Path = 2,
}

impl GmcfKind {
    fn from_u8(v: u8) -> Result<Self> {
        match v {
            0 => Ok(GmcfKind::Field),
            1 => Ok(GmcfKind::BmPath),
            2 => Ok(GmcfKind::Bes3Path),
            _ => Err(Error::Format(format!("unknown GMCF kind tag {v}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gmcf {
    pub d: u8,
    pub kind: GmcfKind,
    /// `count·d` coordinates.
    pub coords: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
}

impl Gmcf {
    pub fn count(&self) -> usize {
        if self.d == 0 {
            0
        } else {
            self.coords.len() / self.d as usize
        }
    }
}

pub fn encode_gmcf(g: &Gmcf) -> Result<Vec<u8>> {
    if g.d == 0 || !g.coords.len().is_multiple_of(g.d as usize) {
        return Err(Error::Format("coordinates do not split into points of dimension d".into()));
    }
    let count = g.count();
    if g.rows.iter().any(|r| r.len() != count) {
        return Err(Error::Format("every row needs one value per point".into()));
    }
    let mut out = Vec::with_capacity(GMCF_HEADER_LEN + 8 * (g.coords.len() + count * g.rows.len()));
    out.extend_from_slice(GMCF_MAGIC);
    out.extend_from_slice(&GMCF_VERSION.to_le_bytes());
    out.push(g.d);
    out.push(g.kind as u8);
    out.extend_from_slice(&(count as u64).to_le_bytes());
    for v in g.coords.iter().chain(g.rows.iter().flatten()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_gmcf(bytes: &[u8]) -> Result<Gmcf> {
    if bytes.len() < GMCF_HEADER_LEN {
        return Err(Error::Format(format!("{} bytes is shorter than the GMCF header", bytes.len())));
    }
    if &bytes[..4] != GMCF_MAGIC {
        return Err(Error::Format("bad GMCF magic".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != GMCF_VERSION {
        return Err(Error::Format(format!("unsupported GMCF version {version}")));
    }
    let d = bytes[6];
    if !(1..=3).contains(&d) {
        return Err(Error::Format(format!("GMCF dimension {d} outside 1..=3")));
    }
    let kind = GmcfKind::from_u8(bytes[7])?;
    if kind != GmcfKind::Field && d != 1 {
        return Err(Error::Format("path records must have d = 1".into()));
    }
    let count = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let body = &bytes[GMCF_HEADER_LEN..];
    if !body.len().is_multiple_of(8) {
        return Err(Error::Format("GMCF body is not a whole number of f64 values".into()));
    }
    let floats = (body.len() / 8) as u64;
    let coord_len = count.checked_mul(d as u64).filter(|&c| c <= floats).ok_or_else(|| Error::Format(format!("point count {count} exceeds the body")))?;
    if count == 0 {
        if floats != 0 {
            return Err(Error::Format("values present with zero points".into()));
        }
        return Ok(Gmcf { d, kind, coords: vec![], rows: vec![] });
    }
    let rest = floats - coord_len;
    if !rest.is_multiple_of(count) {
        return Err(Error::Format("value block is not a whole number of rows".into()));
    }
    let vals: Vec<f64> = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let (coords, tail) = vals.split_at(coord_len as usize);
    let rows = tail.chunks_exact(count as usize).map(|r| r.to_vec()).collect();
    Ok(Gmcf { d, kind, coords: coords.to_vec(), rows })
}

pub fn fields_to_gmcf(samples: &[FieldSample]) -> Result<Gmcf> {
    let first = samples.first().ok_or_else(|| Error::EmptyInput("no field samples".into()))?;
    if samples.iter().any(|s| s.values.len() != first.values.len()) {
        return Err(Error::Format("field samples differ in length".into()));
    }
    Ok(Gmcf {
        d: first.grid.d as u8,
        kind: GmcfKind::Field,
        coords: first.grid.coords().to_vec(),
        rows: samples.iter().map(|s| s.values.clone()).collect(),
    })
}

pub fn path_to_gmcf(p: &Path) -> Gmcf {
    Gmcf {
        d: 1,
        kind: match p.kind {
            PathKind::Bm => GmcfKind::BmPath,
            PathKind::Bes3 => GmcfKind::Bes3Path,
        },
        coords: p.times.clone(),
        rows: vec![p.values.clone()],
    }
}

/// The first row of a path record. Level and base step are not stored.
pub fn gmcf_to_path(g: &Gmcf) -> Result<Path> {
    let kind = match g.kind {
        GmcfKind::BmPath => PathKind::Bm,
        GmcfKind::Bes3Path => PathKind::Bes3,
        GmcfKind::Field => return Err(Error::Format("record holds a field, not a path".into())),
    };
    let values = g.rows.first().ok_or_else(|| Error::Format("path record has no rows".into()))?.clone();
    let h = g.coords.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let p = Path { h: if h.is_finite() { h } else { 0.0 }, times: g.coords.clone(), start: values[0], values, kind, level: None };
    p.validate()?;
    Ok(p)
}

/// One row per replica, one column per grid point.
pub fn write_field_csv<W: Write>(w: W, samples: &[FieldSample]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let n = samples.first().map_or(0, |s| s.values.len());
    let mut head = vec!["replica".to_string()];
    head.extend((0..n).map(|i| format!("p{i}")));
    out.write_record(&head)?;
    for s in samples {
        let mut rec = vec![s.replica.to_string()];
        rec.extend(s.values.iter().map(|v| fmt_f64(*v)));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// Shortest round-trip decimal form.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassRow {
    pub replica: u64,
    pub epsilon: f64,
    /// `"critical"` or the value of `γ`.
    pub gamma_or_critical: String,
    pub value: f64,
}

impl From<&GmcMassSample> for MassRow {
    fn from(m: &GmcMassSample) -> Self {
        MassRow {
            replica: m.replica,
            epsilon: m.epsilon,
            gamma_or_critical: match m.regime {
                Regime::Critical { .. } => "critical".into(),
                Regime::Subcritical { gamma } => fmt_f64(gamma),
            },
            value: m.value,
        }
    }
}

pub fn write_mass_csv<W: Write>(w: W, rows: &[MassRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    if rows.is_empty() {
        out.write_record(["replica", "epsilon", "gamma_or_critical", "value"])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_mass_csv<R: Read>(r: R) -> Result<Vec<MassRow>> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let head = rd.headers()?.clone();
    if head.iter().collect::<Vec<_>>() != ["replica", "epsilon", "gamma_or_critical", "value"] {
        return Err(Error::Format("mass CSV header must be replica,epsilon,gamma_or_critical,value".into()));
    }
    let mut rows = Vec::new();
    for rec in rd.deserialize() {
        let row: MassRow = rec?;
        if row.gamma_or_critical != "critical" && row.gamma_or_critical.parse::<f64>().map_or(true, |g| !(g >= 0.0)) {
            return Err(Error::Format(format!("bad regime field {:?}", row.gamma_or_critical)));
        }
        if !(row.value >= 0.0) || !(row.epsilon > 0.0) {
            return Err(Error::Format("mass rows need value >= 0 and epsilon > 0".into()));
        }
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub quantity: String,
    pub lambda_or_t: f64,
    pub estimate: f64,
    pub stderr_or_ci_lo: f64,
    pub ci_hi: Option<f64>,
}

pub fn tail_scan_rows(quantity: &str, s: &TailScan) -> Vec<ScanRow> {
    (0..s.t.len())
        .map(|k| ScanRow { quantity: quantity.into(), lambda_or_t: s.t[k], estimate: s.p_hat[k], stderr_or_ci_lo: s.ci_lo[k], ci_hi: Some(s.ci_hi[k]) })
        .collect()
}

pub fn laplace_scan_rows(quantity: Option<&str>, s: &LaplaceScan) -> Vec<ScanRow> {
    let q = quantity.unwrap_or(match s.kind {
        LaplaceKind::Sq => "laplace_sq",
        LaplaceKind::Log => "laplace_log",
    });
    s.lambda
        .iter()
        .zip(&s.estimates)
        .map(|(&l, e)| ScanRow { quantity: q.into(), lambda_or_t: l, estimate: e.mean, stderr_or_ci_lo: e.stderr, ci_hi: None })
        .collect()
}

pub fn write_scan_csv<W: Write>(w: W, rows: &[ScanRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["quantity", "lambda_or_t", "estimate", "stderr_or_ci_lo", "ci_hi"])?;
    for r in rows {
        out.write_record([
            r.quantity.clone(),
            fmt_f64(r.lambda_or_t),
            fmt_f64(r.estimate),
            fmt_f64(r.stderr_or_ci_lo),
            r.ci_hi.map(fmt_f64).unwrap_or_default(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyRow {
    pub quantity: String,
    pub lambda_or_x: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub truncation: f64,
}

pub fn write_toy_csv<W: Write>(w: W, rows: &[ToyRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["quantity", "lambda_or_x", "estimate", "stderr", "truncation"])?;
    for r in rows {
        out.write_record([r.quantity.clone(), fmt_f64(r.lambda_or_x), fmt_f64(r.estimate), fmt_f64(r.stderr), fmt_f64(r.truncation)])?;
    }
    out.flush()?;
    Ok(())
}
