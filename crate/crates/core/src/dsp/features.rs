//! Normalized active/reactive intensity features and their on-disk container.
//!
//! File layout (little-endian): magic `ADOA`, u32 version, u32 rows (6),
//! u32 frames, u32 bins, then `rows·frames·bins` f32 values, row-major.

use std::io::{Read, Write};
use std::path::Path;

use super::Spectrogram;
use crate::error::{Error, Result};

pub const FEATURE_ROWS: usize = 6;
const MAGIC: &[u8; 4] = b"ADOA";
const VERSION: u32 = 1;
const EPS: f64 = 1e-12;

/// Rows Ia_x, Ia_y, Ia_z, Ir_x, Ir_y, Ir_z over (frame, bin).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    frames: usize,
    bins: usize,
    values: Vec<f64>,
}

impl FeatureTensor {
    pub fn new(frames: usize, bins: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != FEATURE_ROWS * frames * bins {
            return Err(Error::Shape {
                expected: format!("{FEATURE_ROWS} x {frames} x {bins}"),
                actual: format!("{} values", values.len()),
            });
        }
        Ok(FeatureTensor {
            frames,
            bins,
            values,
        })
    }

    pub fn zeros(frames: usize, bins: usize) -> Self {
        FeatureTensor {
            frames,
            bins,
            values: vec![0.0; FEATURE_ROWS * frames * bins],
        }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn get(&self, row: usize, frame: usize, bin: usize) -> f64 {
        self.values[(row * self.frames + frame) * self.bins + bin]
    }
}

/// Per bin: I = conj(W)·(X, Y, Z); Ia = Re I, Ir = Im I, both divided by
/// |W|² + (|X|² + |Y|² + |Z|²)/3 + 1e-12.
pub fn intensity_features(spec: &Spectrogram) -> FeatureTensor {
    let (frames, bins) = (spec.frames(), spec.n_bins());
    let mut out = FeatureTensor::zeros(frames, bins);
    for t in 0..frames {
        for f in 0..bins {
            let w = spec.get(0, t, f);
            let xyz = [spec.get(1, t, f), spec.get(2, t, f), spec.get(3, t, f)];
            let denom = w.norm_sqr()
                + (xyz[0].norm_sqr() + xyz[1].norm_sqr() + xyz[2].norm_sqr()) / 3.0
                + EPS;
            for (axis, v) in xyz.iter().enumerate() {
                let i = w.conj() * v;
                out.values[(axis * frames + t) * bins + f] = i.re / denom;
                out.values[((axis + 3) * frames + t) * bins + f] = i.im / denom;
            }
        }
    }
    out
}

pub fn write_features(path: &Path, features: &FeatureTensor) -> Result<()> {
    let mut buf = Vec::with_capacity(20 + 4 * features.values.len());
    buf.extend_from_slice(MAGIC);
    for v in [VERSION, FEATURE_ROWS as u32, features.frames as u32, features.bins as u32] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for v in &features.values {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    std::fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

pub fn read_features(path: &Path) -> Result<FeatureTensor> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    let bad = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    if buf.len() < 20 || &buf[..4] != MAGIC {
        return Err(bad("missing ADOA header".into()));
    }
    let word = |i: usize| u32::from_le_bytes(buf[4 + 4 * i..8 + 4 * i].try_into().unwrap());
    let (version, rows, frames, bins) = (word(0), word(1), word(2) as usize, word(3) as usize);
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    if rows as usize != FEATURE_ROWS {
        return Err(bad(format!("expected {FEATURE_ROWS} rows, found {rows}")));
    }
    let count = FEATURE_ROWS * frames * bins;
    if buf.len() != 20 + 4 * count {
        return Err(bad(format!(
            "payload holds {} bytes, header implies {}",
            buf.len() - 20,
            4 * count
        )));
    }
    let values = buf[20..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    FeatureTensor::new(frames, bins, values)
}
