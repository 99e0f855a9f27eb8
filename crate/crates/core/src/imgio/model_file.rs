//! `FCNFS1` model container.
//!
//! ```text
//! FCNFS1
//! conv1 7 7 3 12
//! conv2 5 5 12 6
//! full1 1 1 6 48
//! full2 1 1 50 192
//! full3 1 1 192 1
//! END
//! <payload>
//! ```
//!
//! Each layer line is `name kh kw cin cout`. The payload holds, per layer in header order,
//! the `kh*kw*cin*cout` weights (HWIO) followed by the `cout` biases, all little-endian f32.

use std::path::Path;

use crate::error::{Error, Result};
use crate::fcn::{FcnModel, Layer, ARCHITECTURE};

pub const MODEL_MAGIC: &str = "FCNFS1";

pub fn serialize_model(model: &FcnModel) -> Result<Vec<u8>> {
    model.validate()?;
    let mut out = format!("{MODEL_MAGIC}\n");
    for spec in &ARCHITECTURE {
        out.push_str(&format!(
            "{} {} {} {} {}\n",
            spec.name, spec.kernel, spec.kernel, spec.cin, spec.cout
        ));
    }
    out.push_str("END\n");
    let mut bytes = out.into_bytes();
    for layer in &model.layers {
        for v in layer.weights.iter().chain(&layer.bias) {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(bytes)
}

fn next_line<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a str> {
    let rest = &bytes[*pos..];
    let end = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::format("header", "unterminated header line"))?;
    *pos += end + 1;
    std::str::from_utf8(&rest[..end]).map_err(|_| Error::format("header", "non-ASCII header"))
}

pub fn deserialize_model(bytes: &[u8]) -> Result<FcnModel> {
    let mut pos = 0;
    let magic = next_line(bytes, &mut pos).map_err(|_| Error::format("magic", "missing magic line"))?;
    if magic != MODEL_MAGIC {
        return Err(Error::format("magic", format!("expected {MODEL_MAGIC}, found {magic:?}")));
    }
    for spec in &ARCHITECTURE {
        let line = next_line(bytes, &mut pos)?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        let expected = [spec.kernel, spec.kernel, spec.cin, spec.cout];
        let shape: Option<Vec<usize>> = fields.get(1..).map(|f| f.iter().filter_map(|s| s.parse().ok()).collect());
        if fields.first() != Some(&spec.name) || shape.as_deref() != Some(&expected[..]) {
            return Err(Error::format(
                spec.name,
                format!("shape line {line:?} does not match architecture {:?}", expected),
            ));
        }
    }
    let end = next_line(bytes, &mut pos)?;
    if end != "END" {
        return Err(Error::format("header", format!("expected END, found {end:?}")));
    }

    let payload = &bytes[pos..];
    let mut floats = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
    let mut layers = Vec::with_capacity(ARCHITECTURE.len());
    for spec in &ARCHITECTURE {
        let weights: Vec<f32> = floats.by_ref().take(spec.weight_len()).collect();
        let bias: Vec<f32> = floats.by_ref().take(spec.cout).collect();
        if weights.len() + bias.len() != spec.param_count() {
            return Err(Error::format(
                spec.name,
                format!("truncated payload: {} bytes total", payload.len()),
            ));
        }
        layers.push(Layer { weights, bias });
    }
    let used: usize = ARCHITECTURE.iter().map(|s| s.param_count() * 4).sum();
    if payload.len() != used {
        return Err(Error::format(
            "payload",
            format!("{} trailing bytes", payload.len() - used),
        ));
    }
    Ok(FcnModel { layers, seed: None })
}

pub fn write_model(model: &FcnModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, serialize_model(model)?).map_err(|e| Error::io(path, e))
}

pub fn read_model(path: impl AsRef<Path>) -> Result<FcnModel> {
    let path = path.as_ref();
    deserialize_model(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}
