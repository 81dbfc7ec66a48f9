//! WAV persistence: FOA buffers as 4-channel 32-bit float, channel order W, X, Y, Z.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::ambisonics::Foa;
use crate::error::{Error, Result};

pub fn write_foa(path: &Path, foa: &Foa) -> Result<()> {
    let spec = WavSpec {
        channels: 4,
        sample_rate: foa.sample_rate(),
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut writer = WavWriter::create(path, spec)?;
    for i in 0..foa.len() {
        for c in 0..4 {
            writer.write_sample(foa.channel(c)[i] as f32)?;
        }
    }
    writer.finalize()?;
    Ok(())
}

fn read_interleaved(path: &Path) -> Result<(Vec<f64>, u16, u32)> {
    let mut reader = WavReader::open(path)?;
    let spec = reader.spec();
    let samples: Vec<f64> = match spec.sample_format {
        SampleFormat::Float => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()?,
        SampleFormat::Int => {
            let full_scale = (1i64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 / full_scale))
                .collect::<std::result::Result<_, _>>()?
        }
    };
    Ok((samples, spec.channels, spec.sample_rate))
}

pub fn read_foa(path: &Path) -> Result<Foa> {
    let (samples, channels, rate) = read_interleaved(path)?;
    if channels != 4 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!("expected 4 channels (W, X, Y, Z), found {channels}"),
        });
    }
    let frames = samples.len() / 4;
    let chans = std::array::from_fn(|c| (0..frames).map(|i| samples[4 * i + c]).collect());
    Foa::new(chans, rate)
}

/// First channel of any WAV file, as floats in [−1, 1].
pub fn read_mono(path: &Path) -> Result<(Vec<f64>, u32)> {
    let (samples, channels, rate) = read_interleaved(path)?;
    let step = channels.max(1) as usize;
    Ok((samples.into_iter().step_by(step).collect(), rate))
}

pub fn write_mono(path: &Path, samples: &[f64], sample_rate: u32) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut writer = WavWriter::create(path, spec)?;
    for s in samples {
        writer.write_sample(*s as f32)?;
    }
    writer.finalize()?;
    Ok(())
}
