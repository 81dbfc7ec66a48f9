//! Shoebox room scenes and geometric propagation.

mod decay;
mod image_source;
mod tracer;

pub use decay::{energy_decay_curve, estimate_rt60, sabine_rt60};
pub use image_source::image_source_paths;
pub use tracer::{intercepted_energy, trace_paths, TraceParams};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sphere::{norm, sub, Vec3};

pub const SPEED_OF_SOUND: f64 = 343.0;

/// Minimum distance of source and listener from every wall.
pub const WALL_MARGIN: f64 = 0.5;

/// Wall indices: 0 = x-min, 1 = x-max, 2 = y-min, 3 = y-max, 4 = z-min, 5 = z-max.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Absorption {
    Uniform(f64),
    PerWall([f64; 6]),
}

impl Absorption {
    pub fn wall(&self, index: usize) -> f64 {
        match self {
            Absorption::Uniform(a) => *a,
            Absorption::PerWall(walls) => walls[index],
        }
    }

    fn values(&self) -> Vec<f64> {
        (0..6).map(|w| self.wall(w)).collect()
    }
}

fn default_speed() -> f64 {
    SPEED_OF_SOUND
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoomConfig {
    pub dims: Vec3,
    pub absorption: Absorption,
    pub scattering: f64,
    #[serde(default = "default_speed")]
    pub speed_of_sound: f64,
}

impl RoomConfig {
    pub fn new(dims: Vec3, absorption: f64, scattering: f64) -> Self {
        RoomConfig {
            dims,
            absorption: Absorption::Uniform(absorption),
            scattering,
            speed_of_sound: SPEED_OF_SOUND,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "room dimensions must be positive, got {:?}",
                self.dims
            )));
        }
        if self
            .absorption
            .values()
            .iter()
            .any(|a| !(0.0..=1.0).contains(a))
        {
            return Err(Error::InvalidConfig(format!(
                "absorption must lie in [0, 1], got {:?}",
                self.absorption
            )));
        }
        if !(0.0..=1.0).contains(&self.scattering) {
            return Err(Error::InvalidConfig(format!(
                "scattering must lie in [0, 1], got {}",
                self.scattering
            )));
        }
        if !(self.speed_of_sound > 0.0) {
            return Err(Error::InvalidConfig("speed of sound must be positive".into()));
        }
        Ok(())
    }

    pub fn volume(&self) -> f64 {
        self.dims.iter().product()
    }

    /// Areas of the six walls in wall-index order.
    pub fn wall_areas(&self) -> [f64; 6] {
        let [x, y, z] = self.dims;
        [y * z, y * z, x * z, x * z, x * y, x * y]
    }

    pub fn surface_area(&self) -> f64 {
        self.wall_areas().iter().sum()
    }

    pub(crate) fn contains_with_margin(&self, p: &Vec3, margin: f64) -> bool {
        p.iter()
            .zip(self.dims.iter())
            .all(|(c, d)| *c >= margin - 1e-12 && *c <= d - margin + 1e-12)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub room: RoomConfig,
    pub source: Vec3,
    pub listener: Vec3,
}

impl Scene {
    pub fn validate(&self) -> Result<()> {
        self.room.validate()?;
        for (name, p) in [("source", &self.source), ("listener", &self.listener)] {
            if !self.room.contains_with_margin(p, WALL_MARGIN) {
                return Err(Error::InvalidConfig(format!(
                    "{name} {p:?} is not at least {WALL_MARGIN} m inside room {:?}",
                    self.room.dims
                )));
            }
        }
        if self.distance() <= 0.0 {
            return Err(Error::InvalidConfig("source and listener coincide".into()));
        }
        Ok(())
    }

    pub fn distance(&self) -> f64 {
        norm(&sub(&self.source, &self.listener))
    }

    /// Ground-truth direction of arrival: listener towards source.
    pub fn label(&self) -> crate::sphere::Direction {
        crate::sphere::Direction::from_vector(sub(&self.source, &self.listener))
            .expect("validated scene has distinct source and listener")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathKind {
    Specular,
    Diffuse,
}

/// One arrival at the listener.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcousticPath {
    /// Unit vector from the listener towards where the sound comes from.
    pub direction: Vec3,
    pub delay: f64,
    pub amplitude: f64,
    pub order: u32,
    pub kind: PathKind,
}

/// Scene sampling ranges. Absorption and scattering are drawn per room.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneSampler {
    pub dims_min: Vec3,
    pub dims_max: Vec3,
    pub pairs_per_room: usize,
    pub absorption: (f64, f64),
    pub scattering: (f64, f64),
    pub min_separation: f64,
}

impl Default for SceneSampler {
    fn default() -> Self {
        SceneSampler {
            dims_min: [2.5, 2.5, 2.0],
            dims_max: [10.0, 10.0, 3.0],
            pairs_per_room: 3,
            absorption: (0.1, 0.7),
            scattering: (0.1, 0.5),
            min_separation: 0.5,
        }
    }
}

impl SceneSampler {
    fn validate(&self) -> Result<()> {
        if self.pairs_per_room == 0 {
            return Err(Error::InvalidConfig("pairs_per_room must be at least 1".into()));
        }
        for axis in 0..3 {
            let (lo, hi) = (self.dims_min[axis], self.dims_max[axis]);
            if !(lo <= hi) {
                return Err(Error::InvalidConfig(format!(
                    "dims_min {:?} exceeds dims_max {:?}",
                    self.dims_min, self.dims_max
                )));
            }
            if lo <= 2.0 * WALL_MARGIN {
                return Err(Error::InvalidConfig(format!(
                    "rejected configuration: dimension {lo} m leaves no room for the {WALL_MARGIN} m wall margin"
                )));
            }
        }
        let ranges = [self.absorption, self.scattering];
        if ranges
            .iter()
            .any(|(lo, hi)| !(0.0 <= *lo && lo <= hi && *hi <= 1.0))
        {
            return Err(Error::InvalidConfig(
                "absorption and scattering ranges must be ordered within [0, 1]".into(),
            ));
        }
        Ok(())
    }

    /// Draws `count` scenes; consecutive groups of `pairs_per_room` share a room.
    pub fn sample(&self, count: usize, seed: u64) -> Result<Vec<Scene>> {
        if count == 0 {
            return Err(Error::InvalidConfig("scene count must be at least 1".into()));
        }
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut scenes = Vec::with_capacity(count);
        while scenes.len() < count {
            let mut dims = [0.0; 3];
            for (axis, d) in dims.iter_mut().enumerate() {
                *d = uniform(&mut rng, self.dims_min[axis], self.dims_max[axis]);
            }
            let absorption = uniform(&mut rng, self.absorption.0, self.absorption.1);
            let scattering = uniform(&mut rng, self.scattering.0, self.scattering.1);
            let room = RoomConfig::new(dims, absorption, scattering);
            for _ in 0..self.pairs_per_room {
                if scenes.len() == count {
                    break;
                }
                let (source, listener) = loop {
                    let s = interior_point(&mut rng, &dims);
                    let l = interior_point(&mut rng, &dims);
                    if norm(&sub(&s, &l)) >= self.min_separation {
                        break (s, l);
                    }
                };
                scenes.push(Scene {
                    room,
                    source,
                    listener,
                });
            }
        }
        Ok(scenes)
    }
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

fn interior_point(rng: &mut ChaCha8Rng, dims: &Vec3) -> Vec3 {
    let mut p = [0.0; 3];
    for axis in 0..3 {
        p[axis] = uniform(rng, WALL_MARGIN, dims[axis] - WALL_MARGIN);
    }
    p
}

/// Scene sampling with default material ranges.
pub fn sample_scenes(
    count: usize,
    seed: u64,
    dims_min: Vec3,
    dims_max: Vec3,
    pairs_per_room: usize,
) -> Result<Vec<Scene>> {
    SceneSampler {
        dims_min,
        dims_max,
        pairs_per_room,
        ..SceneSampler::default()
    }
    .sample(count, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairEntry {
    pub source: Vec3,
    pub listener: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomEntry {
    pub dims: Vec3,
    pub absorption: Absorption,
    pub scattering: f64,
    #[serde(default = "default_speed")]
    pub speed_of_sound: f64,
    pub pairs: Vec<PairEntry>,
}

/// JSON scene manifest: `{rooms: [{dims, absorption, scattering, pairs: [{source, listener}]}], seed}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSet {
    pub rooms: Vec<RoomEntry>,
    pub seed: u64,
}

impl SceneSet {
    /// Groups consecutive scenes that share a room.
    pub fn from_scenes(scenes: &[Scene], seed: u64) -> Self {
        let mut rooms: Vec<RoomEntry> = Vec::new();
        for scene in scenes {
            let pair = PairEntry {
                source: scene.source,
                listener: scene.listener,
            };
            match rooms.last_mut() {
                Some(last)
                    if last.dims == scene.room.dims
                        && last.absorption == scene.room.absorption
                        && last.scattering == scene.room.scattering
                        && last.speed_of_sound == scene.room.speed_of_sound =>
                {
                    last.pairs.push(pair)
                }
                _ => rooms.push(RoomEntry {
                    dims: scene.room.dims,
                    absorption: scene.room.absorption,
                    scattering: scene.room.scattering,
                    speed_of_sound: scene.room.speed_of_sound,
                    pairs: vec![pair],
                }),
            }
        }
        SceneSet { rooms, seed }
    }

    pub fn scenes(&self) -> Vec<Scene> {
        self.rooms
            .iter()
            .flat_map(|r| {
                let room = RoomConfig {
                    dims: r.dims,
                    absorption: r.absorption,
                    scattering: r.scattering,
                    speed_of_sound: r.speed_of_sound,
                };
                r.pairs.iter().map(move |p| Scene {
                    room,
                    source: p.source,
                    listener: p.listener,
                })
            })
            .collect()
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let set: SceneSet = serde_json::from_str(&text)?;
        for scene in set.scenes() {
            scene.validate()?;
        }
        Ok(set)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}
