//! Dataset rendering: scene → arrivals → SRIR → reverberant speech → noise →
//! STFT → features, one ADOA file and one manifest row per scene.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acoustics::{image_source_paths, trace_paths, Scene, TraceParams};
use crate::ambisonics::{encode_srir, DEFAULT_SAMPLE_RATE};
use crate::dsp::{
    convolve_foa, intensity_features, mix_noise, read_features, sample_snr, speech_shaped_noise, stft,
    synthetic_speech, write_features, StftConfig,
};
use crate::error::{Error, Result};
use crate::nn::Sample;
use crate::sphere::Direction;
use crate::wav::read_mono;

/// Propagation model used to render a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Specular reflections only.
    Image,
    /// Stochastic ray tracing with diffuse reflections.
    Trace,
}

impl Method {
    pub fn parse(name: &str) -> Result<Method> {
        match name {
            "image" => Ok(Method::Image),
            "trace" => Ok(Method::Trace),
            other => Err(Error::InvalidConfig(format!("unknown method {other:?}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::Image => "image",
            Method::Trace => "trace",
        }
    }
}

/// Where dry source signals come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SpeechSource {
    /// Mono WAV files at the render sample rate.
    Directory { path: PathBuf },
    /// Built-in speech-like bursts.
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderConfig {
    pub method: Method,
    pub speech: SpeechSource,
    pub sample_rate: u32,
    pub stft: StftConfig,
    pub frames: usize,
    /// Length of the dry clip in seconds.
    pub clip_seconds: f64,
    /// Length of the rendered impulse response in seconds.
    pub ir_seconds: f64,
    pub image_order: u32,
    pub trace: TraceParams,
    /// Fixed SNR in dB; drawn per sample when absent.
    pub snr_db: Option<f64>,
    pub seed: u64,
}

impl RenderConfig {
    pub fn new(method: Method, stft: StftConfig, frames: usize, seed: u64) -> Self {
        RenderConfig {
            method,
            speech: SpeechSource::Synthetic,
            sample_rate: DEFAULT_SAMPLE_RATE,
            stft,
            frames,
            clip_seconds: 1.0,
            ir_seconds: 0.5,
            image_order: 12,
            trace: TraceParams::default(),
            snr_db: None,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        let clip = self.clip_len();
        if self.stft.samples_for(self.frames) > clip {
            return Err(Error::InvalidConfig(format!(
                "{} frames need {} samples but clips hold {clip}",
                self.frames,
                self.stft.samples_for(self.frames)
            )));
        }
        if !(self.ir_seconds > 0.0) || self.frames == 0 {
            return Err(Error::InvalidConfig("ir_seconds and frames must be positive".into()));
        }
        Ok(())
    }

    fn clip_len(&self) -> usize {
        (self.clip_seconds * self.sample_rate as f64).round() as usize
    }
}

/// One rendered example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    /// relative to the manifest's directory unless absolute
    pub features_path: PathBuf,
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    pub scene_id: usize,
    pub snr_db: f64,
    pub method: Method,
}

impl SampleRecord {
    pub fn label(&self) -> Direction {
        Direction::from_degrees(self.azimuth_deg, self.elevation_deg)
    }
}

/// Records of a JSON-lines manifest plus the directory their paths are relative to.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub records: Vec<SampleRecord>,
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Manifest> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut records = Vec::new();
        for (i, line) in file.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: SampleRecord = serde_json::from_str(&line).map_err(|e| Error::Format {
                path: path.to_path_buf(),
                reason: format!("line {}: {e}", i + 1),
            })?;
            records.push(rec);
        }
        if records.is_empty() {
            return Err(Error::Format {
                path: path.to_path_buf(),
                reason: "manifest has no records".into(),
            });
        }
        Ok(Manifest {
            records,
            base_dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.push(b'\n');
        }
        std::fs::File::create(path)?.write_all(&out)?;
        Ok(())
    }

    pub fn resolve(&self, record: &SampleRecord) -> PathBuf {
        if record.features_path.is_absolute() {
            record.features_path.clone()
        } else {
            self.base_dir.join(&record.features_path)
        }
    }

    /// Reads every feature file.
    pub fn load_samples(&self) -> Result<Vec<Sample>> {
        self.records
            .par_iter()
            .map(|r| {
                Ok(Sample {
                    features: read_features(&self.resolve(r))?,
                    label: r.label(),
                })
            })
            .collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Manifest {
        Manifest {
            records: indices.iter().map(|i| self.records[*i].clone()).collect(),
            base_dir: self.base_dir.clone(),
        }
    }
}

fn scene_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn list_wavs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no WAV files in {}; pass the synthetic speech option to render without a corpus",
            dir.display()
        )));
    }
    Ok(files)
}

/// A dry clip of exactly `len` samples.
fn dry_clip(cfg: &RenderConfig, wavs: &[PathBuf], rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let len = cfg.clip_len();
    if wavs.is_empty() {
        return Ok(synthetic_speech(len, rng.gen(), cfg.sample_rate));
    }
    let path = &wavs[rng.gen_range(0..wavs.len())];
    let (samples, rate) = read_mono(path)?;
    if rate != cfg.sample_rate {
        return Err(Error::SampleRate(rate, cfg.sample_rate));
    }
    let mut clip = if samples.len() > len {
        let start = rng.gen_range(0..=samples.len() - len);
        samples[start..start + len].to_vec()
    } else {
        samples
    };
    clip.resize(len, 0.0);
    Ok(clip)
}

/// Renders one scene; returns the features and the SNR used.
pub fn render_scene(
    scene: &Scene,
    index: usize,
    cfg: &RenderConfig,
    wavs: &[PathBuf],
) -> Result<(crate::dsp::FeatureTensor, f64)> {
    let mut rng = scene_rng(cfg.seed, index);
    let ir_len = (cfg.ir_seconds * cfg.sample_rate as f64).round() as usize;
    let limit = ir_len as f64 / cfg.sample_rate as f64;
    let trace_seed: u64 = rng.gen();
    let paths = match cfg.method {
        Method::Image => image_source_paths(scene, cfg.image_order)?,
        Method::Trace => trace_paths(
            scene,
            &TraceParams {
                rng_seed: trace_seed,
                max_time: Some(limit),
                ..cfg.trace
            },
        )?,
    };
    // keep arrivals that land inside the impulse response
    let half_sample = 0.5 / cfg.sample_rate as f64;
    let paths: Vec<_> = paths.into_iter().filter(|p| p.delay < limit - half_sample).collect();
    let ir = encode_srir(&paths, cfg.sample_rate, ir_len)?;
    let dry = dry_clip(cfg, wavs, &mut rng)?;
    let wet = convolve_foa(&dry, cfg.sample_rate, &ir)?;
    let clip = cfg.clip_len();
    let wet = crate::ambisonics::Foa::new(wet.into_channels().map(|mut c| {
        c.truncate(clip);
        c
    }), cfg.sample_rate)?;
    let snr = match cfg.snr_db {
        Some(s) => s,
        None => sample_snr(&mut rng),
    };
    let noise = speech_shaped_noise(clip, rng.gen(), cfg.sample_rate)?;
    let noisy = mix_noise(&wet, &noise, snr)?;
    let needed = cfg.stft.samples_for(cfg.frames);
    let max_start_frame = (clip - needed) / cfg.stft.hop;
    let start_frame = rng.gen_range(0..=max_start_frame);
    let total_frames = start_frame + cfg.frames;
    let spec = stft(&noisy, total_frames, cfg.stft)?.slice_frames(start_frame, cfg.frames)?;
    Ok((intensity_features(&spec), snr))
}

/// Renders every scene into `out_dir/features/` and writes `out_dir/manifest.jsonl`.
pub fn render_dataset(scenes: &[Scene], cfg: &RenderConfig, out_dir: &Path) -> Result<Manifest> {
    cfg.validate()?;
    if scenes.is_empty() {
        return Err(Error::InvalidInput("no scenes to render".into()));
    }
    let wavs = match &cfg.speech {
        SpeechSource::Directory { path } => list_wavs(path)?,
        SpeechSource::Synthetic => Vec::new(),
    };
    std::fs::create_dir_all(out_dir.join("features"))?;
    let records: Vec<SampleRecord> = scenes
        .par_iter()
        .enumerate()
        .map(|(i, scene)| {
            let (features, snr_db) = render_scene(scene, i, cfg, &wavs)?;
            let rel = PathBuf::from("features").join(format!("{i:05}.adoa"));
            write_features(&out_dir.join(&rel), &features)?;
            let (azimuth_deg, elevation_deg) = scene.label().degrees();
            Ok(SampleRecord {
                features_path: rel,
                azimuth_deg,
                elevation_deg,
                scene_id: i,
                snr_db,
                method: cfg.method,
            })
        })
        .collect::<Result<_>>()?;
    let manifest = Manifest {
        records,
        base_dir: out_dir.to_path_buf(),
    };
    manifest.save(&out_dir.join("manifest.jsonl"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acoustics::SceneSampler;

    fn scenes(n: usize) -> Vec<Scene> {
        SceneSampler {
            absorption: (0.6, 0.9),
            ..SceneSampler::default()
        }
        .sample(n, 3)
        .unwrap()
    }

    fn cfg(method: Method) -> RenderConfig {
        let mut c = RenderConfig::new(method, StftConfig { window: 256, hop: 128 }, 25, 11);
        c.ir_seconds = 0.2;
        c.image_order = 4;
        c.trace.n_rays = 300;
        c
    }

    #[test]
    fn renders_one_row_per_scene_with_matching_labels() {
        let dir = tempfile::tempdir().unwrap();
        let sc = scenes(6);
        let a = render_dataset(&sc, &cfg(Method::Image), &dir.path().join("a")).unwrap();
        let b = render_dataset(&sc, &cfg(Method::Trace), &dir.path().join("b")).unwrap();
        assert_eq!(a.records.len(), 6);
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert_eq!((ra.azimuth_deg, ra.elevation_deg), (rb.azimuth_deg, rb.elevation_deg));
            let u = ra.label().unit();
            assert!((crate::sphere::norm(&u) - 1.0).abs() < 1e-12);
        }
        let fa = a.load_samples().unwrap();
        let fb = b.load_samples().unwrap();
        assert_ne!(fa[0].features, fb[0].features);
        let back = Manifest::load(&dir.path().join("a/manifest.jsonl")).unwrap();
        assert_eq!(back.records, a.records);
    }

    #[test]
    fn rendering_is_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let sc = scenes(3);
        render_dataset(&sc, &cfg(Method::Trace), &dir.path().join("x")).unwrap();
        render_dataset(&sc, &cfg(Method::Trace), &dir.path().join("y")).unwrap();
        for f in ["manifest.jsonl", "features/00000.adoa", "features/00002.adoa"] {
            assert_eq!(
                std::fs::read(dir.path().join("x").join(f)).unwrap(),
                std::fs::read(dir.path().join("y").join(f)).unwrap()
            );
        }
    }

    #[test]
    fn empty_speech_dir_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = cfg(Method::Image);
        c.speech = SpeechSource::Directory {
            path: dir.path().to_path_buf(),
        };
        assert!(render_dataset(&scenes(1), &c, &dir.path().join("out")).is_err());
    }
}
