//! On-disk formats: binary arrays, PGM previews and metric tables.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use crate::error::{invalid, CoilError, Result};
use crate::geometry::Image;

pub const ARRAY_MAGIC: &[u8; 8] = b"COILA1\0\0";
pub const ARRAY_VERSION: u32 = 1;

/// Little-endian cursor over a byte buffer. Every read names what it was
/// reading so truncation errors say where the file ended.
pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub(crate) fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(CoilError::Format(format!(
                "truncated while reading {what}: need {n} bytes, {} left",
                self.remaining()
            )));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub(crate) fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    pub(crate) fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    pub(crate) fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let len = n.checked_mul(8).ok_or_else(|| CoilError::Format(format!("{what}: size overflow")))?;
        let raw = self.take(len, what)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }
}

pub fn encode_array(values: &[f64], dims: &[usize]) -> Result<Vec<u8>> {
    let count: usize = dims.iter().product();
    if count != values.len() {
        return Err(invalid(format!("dims {dims:?} describe {count} values, got {}", values.len())));
    }
    let mut out = Vec::with_capacity(16 + 4 * dims.len() + 8 * values.len());
    out.extend_from_slice(ARRAY_MAGIC);
    out.extend_from_slice(&ARRAY_VERSION.to_le_bytes());
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for &d in dims {
        let d = u32::try_from(d).map_err(|_| invalid(format!("dimension {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_array(bytes: &[u8]) -> Result<(Vec<f64>, Vec<usize>)> {
    let mut r = Reader::new(bytes);
    if r.take(8, "magic")? != ARRAY_MAGIC {
        return Err(CoilError::Format("bad magic: not a COILA1 array file".into()));
    }
    let version = r.u32("version")?;
    if version != ARRAY_VERSION {
        return Err(CoilError::Format(format!("unsupported array version {version}")));
    }
    let rank = r.u32("rank")? as usize;
    let dims = (0..rank).map(|_| r.u32("dims").map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| CoilError::Format("dims overflow".into()))?;
    let values = r.f64s(count, "payload")?;
    if r.remaining() != 0 {
        return Err(CoilError::Format(format!("{} trailing bytes after payload", r.remaining())));
    }
    Ok((values, dims))
}

pub fn write_array(values: &[f64], dims: &[usize], path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_array(values, dims)?)?;
    Ok(())
}

pub fn read_array(path: impl AsRef<Path>) -> Result<(Vec<f64>, Vec<usize>)> {
    decode_array(&std::fs::read(path)?)
}

/// 8-bit grey levels for `pixels` under the display window `[lo, hi]`.
///
/// Without a window the image range is used; a constant image maps to 0.
pub fn pgm_levels(pixels: &[f64], window: Option<(f64, f64)>) -> Result<Vec<u8>> {
    let (lo, hi) = match window {
        Some((lo, hi)) if hi > lo => (lo, hi),
        Some((lo, hi)) => return Err(invalid(format!("PGM window needs hi > lo, got ({lo}, {hi})"))),
        None => {
            let lo = pixels.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = pixels.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (lo, hi)
        }
    };
    if !(hi > lo) {
        return Ok(vec![0; pixels.len()]);
    }
    Ok(pixels
        .iter()
        .map(|&v| {
            let scaled = (v - lo) / (hi - lo) * 255.0;
            (scaled + 0.5).floor().clamp(0.0, 255.0) as u8
        })
        .collect())
}

/// Binary (P5) greymap of a `width × height` raster, row-major.
pub fn write_pgm(pixels: &[f64], width: usize, height: usize, path: impl AsRef<Path>, window: Option<(f64, f64)>) -> Result<()> {
    if width * height != pixels.len() {
        return Err(invalid("PGM raster size does not match the pixel count"));
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(pgm_levels(pixels, window)?);
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_image_pgm(image: &Image, path: impl AsRef<Path>, window: Option<(f64, f64)>) -> Result<()> {
    write_pgm(image.pixels(), image.side(), image.side(), path, window)
}

/// `%g`-style rendering with six significant digits; `inf`, `-inf` and
/// `nan` for the non-finite values. Independent of locale.
pub fn format_sig6(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (5 - exp) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub const METRICS_HEADER: &str = "experiment_id,num_views,input_snr_db,method,alpha,snr_db,wall_time_s";

/// One row of a results table.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRecord {
    pub experiment_id: String,
    pub num_views: usize,
    pub input_snr_db: f64,
    pub method: String,
    pub alpha: f64,
    pub snr_db: f64,
    pub wall_time_s: f64,
}

impl MetricRecord {
    pub fn to_csv_row(&self) -> Result<String> {
        for text in [&self.experiment_id, &self.method] {
            if text.contains([',', '\n', '\r', '"']) {
                return Err(invalid(format!("CSV text field {text:?} contains a separator or quote")));
            }
        }
        Ok(format!(
            "{},{},{},{},{},{},{}",
            self.experiment_id,
            self.num_views,
            format_sig6(self.input_snr_db),
            self.method,
            format_sig6(self.alpha),
            format_sig6(self.snr_db),
            format_sig6(self.wall_time_s)
        ))
    }
}

/// Append a row to a metrics table, writing the header first if the file
/// is new or empty. Each call issues a single write.
pub fn append_metrics_csv(record: &MetricRecord, path: impl AsRef<Path>) -> Result<()> {
    append_csv_row(&record.to_csv_row()?, path)
}

pub(crate) fn append_csv_row(row: &str, path: impl AsRef<Path>) -> Result<()> {
    let mut file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut text = String::new();
    if file.metadata()?.len() == 0 {
        text.push_str(METRICS_HEADER);
        text.push('\n');
    }
    text.push_str(row);
    text.push('\n');
    file.write_all(text.as_bytes())?;
    Ok(())
}
