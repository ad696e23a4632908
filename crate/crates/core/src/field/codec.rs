//! Binary field container.
//!
//! ```text
//! "COILNF1\0"
//! u32 version, u8 ffm mode, u32 L, u32 layer count
//! per layer: u32 rows, u32 cols, rows·cols f64 weights (row-major), rows f64 biases
//! ```
//!
//! All integers and floats little-endian.

use std::collections::BTreeSet;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{Dense, FfmConfig, FfmMode, MlpConfig, NeuralField};
use crate::error::{CoilError, Result};
use crate::io::Reader;

pub const FIELD_MAGIC: &[u8; 8] = b"COILNF1\0";
pub const FIELD_VERSION: u32 = 1;

pub fn encode_field(field: &NeuralField) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 13 + 8 * (field.num_params() + field.layers.len()));
    out.extend_from_slice(FIELD_MAGIC);
    out.extend_from_slice(&FIELD_VERSION.to_le_bytes());
    out.push(field.ffm.mode.code());
    out.extend_from_slice(&(field.ffm.num_frequencies as u32).to_le_bytes());
    out.extend_from_slice(&(field.layers.len() as u32).to_le_bytes());
    for layer in &field.layers {
        out.extend_from_slice(&(layer.weights.nrows() as u32).to_le_bytes());
        out.extend_from_slice(&(layer.weights.ncols() as u32).to_le_bytes());
        for w in layer.weights.iter().chain(layer.bias.iter()) {
            out.extend_from_slice(&w.to_le_bytes());
        }
    }
    out
}

fn format_err(msg: impl Into<String>) -> CoilError {
    CoilError::Format(msg.into())
}

pub fn decode_field(bytes: &[u8]) -> Result<NeuralField> {
    let mut r = Reader::new(bytes);
    if r.take(8, "magic")? != FIELD_MAGIC {
        return Err(format_err("bad magic: not a COILNF1 field file"));
    }
    let version = r.u32("version")?;
    if version != FIELD_VERSION {
        return Err(format_err(format!("unsupported field version {version}")));
    }
    let mode_code = r.u8("ffm mode")?;
    let mode = FfmMode::from_code(mode_code).ok_or_else(|| format_err(format!("unknown ffm mode {mode_code}")))?;
    let num_frequencies = r.u32("frequency count")? as usize;
    let ffm = FfmConfig::new(mode, num_frequencies).map_err(|e| format_err(e.to_string()))?;
    let count = r.u32("layer count")? as usize;
    if count < 3 {
        return Err(format_err(format!("a field needs at least 3 layers, found {count}")));
    }
    let mut layers = Vec::with_capacity(count);
    for i in 0..count {
        let rows = r.u32("layer rows")? as usize;
        let cols = r.u32("layer cols")? as usize;
        let n = rows
            .checked_mul(cols)
            .filter(|n| n.checked_add(rows).and_then(|t| t.checked_mul(8)).is_some_and(|b| b <= r.remaining()))
            .ok_or_else(|| format_err(format!("truncated: layer {i} does not fit in the file")))?;
        let weights = r.f64s(n, "layer weights")?;
        let bias = r.f64s(rows, "layer biases")?;
        layers.push(Dense {
            weights: Array2::from_shape_vec((rows, cols), weights).expect("length checked"),
            bias: Array1::from(bias),
        });
    }
    if r.remaining() != 0 {
        return Err(format_err(format!("{} trailing bytes after the last layer", r.remaining())));
    }

    let input_dim = ffm.output_dim();
    let hidden_width = layers[0].weights.nrows();
    let num_hidden_layers = count - 2;
    let skip_layers: BTreeSet<usize> = (1..num_hidden_layers)
        .filter(|&k| layers[k].weights.ncols() == hidden_width + input_dim)
        .collect();
    let mlp = MlpConfig {
        input_dim,
        hidden_width,
        num_hidden_layers,
        penultimate_width: layers[count - 2].weights.nrows(),
        skip_layers,
    };
    mlp.validate().map_err(|e| format_err(e.to_string()))?;
    let shapes: Vec<(usize, usize)> = layers.iter().map(|l| l.weights.dim()).collect();
    if shapes != mlp.layer_shapes() {
        return Err(format_err("layer shapes are inconsistent with a coordinate MLP"));
    }
    Ok(NeuralField { ffm, mlp, layers })
}

pub fn write_field(field: &NeuralField, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_field(field))?;
    Ok(())
}

pub fn read_field(path: impl AsRef<Path>) -> Result<NeuralField> {
    decode_field(&std::fs::read(path)?)
}
