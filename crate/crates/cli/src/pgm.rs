//! 16-bit binary PGM (`P5`, maxval 65535, big-endian samples).

use serde::{Deserialize, Serialize};

pub const MAXVAL: u16 = 65535;
/// Fill value for a map with no dynamic range.
pub const MID_GRAY: u16 = 32768;

/// How one component image was scaled, recorded in the sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub index: usize,
    pub min: f64,
    pub max: f64,
    pub degenerate: bool,
}

/// Min-max scales `values` (row-major `rows x cols`) to the full 16-bit range.
pub fn encode(index: usize, rows: usize, cols: usize, values: &[f64]) -> (Vec<u8>, Scaling) {
    assert_eq!(values.len(), rows * cols);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    let degenerate = !(range > 0.0 && range.is_finite());
    let mut out = format!("P5\n{cols} {rows}\n{MAXVAL}\n").into_bytes();
    out.reserve(values.len() * 2);
    for &v in values {
        let level = if degenerate {
            MID_GRAY
        } else {
            ((v - min) / range * f64::from(MAXVAL)).round().clamp(0.0, f64::from(MAXVAL)) as u16
        };
        out.extend_from_slice(&level.to_be_bytes());
    }
    (out, Scaling { index, min, max, degenerate })
}

/// Parses a `P5` image as written by [`encode`]; returns `(rows, cols, samples)`.
pub fn decode(bytes: &[u8]) -> Option<(usize, usize, Vec<u16>)> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return None;
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).ok()?);
    }
    if fields[0] != "P5" || fields[3] != "65535" {
        return None;
    }
    let cols: usize = fields[1].parse().ok()?;
    let rows: usize = fields[2].parse().ok()?;
    let data = bytes.get(pos + 1..)?;
    if data.len() != rows * cols * 2 {
        return None;
    }
    let px = data.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect();
    Some((rows, cols, px))
}
