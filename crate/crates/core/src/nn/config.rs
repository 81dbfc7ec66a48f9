use serde::{Deserialize, Serialize};

use crate::dsp::{StftConfig, FEATURE_ROWS};
use crate::error::{Error, Result};
use crate::sphere::{Direction, SphereGrid};

/// Topology of the convolutional-recurrent estimator.
///
/// Each conv stage is a same-padded `kernel × kernel` convolution over
/// (frame, bin), a rectifier, batch normalization and max pooling over bins
/// by its pool factor. The pooled maps are flattened per frame and fed to
/// stacked bidirectional LSTM layers, then to two per-frame affine layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub frames: usize,
    pub freq_bins: usize,
    pub conv_channels: Vec<usize>,
    pub pool: Vec<usize>,
    pub kernel: usize,
    pub hidden: usize,
    pub recurrent_layers: usize,
    pub fc_width: usize,
    pub stft: StftConfig,
}

impl NetworkConfig {
    /// 6×25×513 input, stage outputs 64×25×64, 64×25×8, 64×25×2, a 128-wide
    /// frame vector, two bidirectional layers of 64 units and a 429-wide
    /// first affine layer.
    pub fn full() -> Self {
        NetworkConfig {
            frames: 25,
            freq_bins: 513,
            conv_channels: vec![64, 64, 64],
            pool: vec![8, 8, 4],
            kernel: 3,
            hidden: 64,
            recurrent_layers: 2,
            fc_width: 429,
            stft: StftConfig {
                window: 1024,
                hop: 512,
            },
        }
    }

    /// Same topology at laptop scale: 129 bins from a 256-point STFT.
    pub fn desk() -> Self {
        NetworkConfig {
            frames: 25,
            freq_bins: 129,
            conv_channels: vec![8, 8, 8],
            pool: vec![4, 4, 2],
            kernel: 3,
            hidden: 16,
            recurrent_layers: 2,
            fc_width: 64,
            stft: StftConfig {
                window: 256,
                hop: 128,
            },
        }
    }

    /// Small enough for exhaustive finite-difference checks.
    pub fn tiny() -> Self {
        NetworkConfig {
            frames: 3,
            freq_bins: 16,
            conv_channels: vec![2, 2, 2],
            pool: vec![2, 2, 2],
            kernel: 3,
            hidden: 8,
            recurrent_layers: 2,
            fc_width: 8,
            stft: StftConfig { window: 30, hop: 15 },
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "full" => Ok(Self::full()),
            "desk" => Ok(Self::desk()),
            "tiny" => Ok(Self::tiny()),
            other => Err(Error::InvalidConfig(format!("unknown preset {other:?}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.frames == 0 || self.freq_bins == 0 {
            return bad("frames and freq_bins must be positive".into());
        }
        if self.conv_channels.is_empty() || self.conv_channels.len() != self.pool.len() {
            return bad("conv_channels and pool must be non-empty and equally long".into());
        }
        if self.kernel % 2 == 0 {
            return bad(format!("kernel must be odd, got {}", self.kernel));
        }
        if self.conv_channels.contains(&0) || self.pool.contains(&0) {
            return bad("channel counts and pool factors must be positive".into());
        }
        if self.hidden == 0 || self.recurrent_layers == 0 || self.fc_width == 0 {
            return bad("hidden, recurrent_layers and fc_width must be positive".into());
        }
        if self.stft.n_bins() != self.freq_bins {
            return bad(format!(
                "STFT window {} gives {} bins, config expects {}",
                self.stft.window,
                self.stft.n_bins(),
                self.freq_bins
            ));
        }
        if self.pooled_bins().last().copied().unwrap_or(0) == 0 {
            return bad("pooling removes every frequency bin".into());
        }
        Ok(())
    }

    /// Bin count after each stage's pooling.
    pub fn pooled_bins(&self) -> Vec<usize> {
        let mut bins = self.freq_bins;
        self.pool
            .iter()
            .map(|p| {
                bins /= p;
                bins
            })
            .collect()
    }

    /// (channels, frames, bins) after each conv stage.
    pub fn stage_shapes(&self) -> Vec<[usize; 3]> {
        self.conv_channels
            .iter()
            .zip(self.pooled_bins())
            .map(|(c, b)| [*c, self.frames, b])
            .collect()
    }

    /// Per-frame width handed to the recurrent layers.
    pub fn frame_width(&self) -> usize {
        let last = self.stage_shapes()[self.conv_channels.len() - 1];
        last[0] * last[2]
    }

    pub fn input_rows(&self) -> usize {
        FEATURE_ROWS
    }
}

/// Output head of the estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Formulation {
    /// Sigmoid scores over the classes of a sphere grid, binary cross-entropy.
    Categorical { grid: SphereGrid },
    /// Unconstrained 3-vector, mean squared error.
    Cartesian,
    /// (azimuth, elevation) in radians, haversine loss.
    Spherical,
}

impl Formulation {
    pub fn categorical(resolution_deg: f64) -> Result<Self> {
        Ok(Formulation::Categorical {
            grid: SphereGrid::new(resolution_deg)?,
        })
    }

    pub fn parse(name: &str, resolution_deg: f64) -> Result<Self> {
        match name {
            "categorical" => Self::categorical(resolution_deg),
            "cartesian" => Ok(Formulation::Cartesian),
            "spherical" => Ok(Formulation::Spherical),
            other => Err(Error::InvalidConfig(format!("unknown formulation {other:?}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Formulation::Categorical { .. } => "categorical",
            Formulation::Cartesian => "cartesian",
            Formulation::Spherical => "spherical",
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Formulation::Categorical { grid } => grid.len(),
            Formulation::Cartesian => 3,
            Formulation::Spherical => 2,
        }
    }

    pub fn target(&self, label: &Direction) -> Target {
        match self {
            Formulation::Categorical { grid } => Target::Class(grid.nearest_class(label)),
            Formulation::Cartesian => Target::Vector(label.unit()),
            Formulation::Spherical => {
                let (a, e) = label.angles();
                Target::Angles(a, e)
            }
        }
    }
}

/// Training label in the form a formulation's loss expects.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    Class(usize),
    Vector([f64; 3]),
    Angles(f64, f64),
}
