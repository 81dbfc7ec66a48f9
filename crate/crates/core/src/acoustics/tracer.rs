//! Monte-Carlo path tracing with specular and Lambertian reflection.
//!
//! Every ray starts with energy `4π / n_rays`, so that the traced intensity of
//! a free-field arrival at distance `d` converges to `1 / d²`, the same scale
//! as the image-source amplitudes `1 / d`.
//!
//! Two estimators feed the listener:
//! - a detection sphere of radius `receiver_radius` counts ray segments whose
//!   most recent reflection was specular (or that come straight from the
//!   source); the arrival is reconstructed from the virtual source on the
//!   unfolded ray, so a purely specular detection reproduces the image-source
//!   delay and direction exactly;
//! - at every wall hit a "diffuse rain" contribution connects the hit point to
//!   the listener with Lambertian weight `scattering · cosθ / (π d²)`.
//!
//! A ray leaving a wall diffusely is not counted by the sphere on its next
//! segment, since the rain already accounts for that event.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{AcousticPath, PathKind, Scene};
use crate::error::{Error, Result};
use crate::sphere::{dot, norm, scale, sub, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceParams {
    pub n_rays: usize,
    pub max_bounces: u32,
    pub receiver_radius: f64,
    pub rng_seed: u64,
    /// Arrivals later than this are dropped and rays stop once they pass it.
    pub max_time: Option<f64>,
}

impl Default for TraceParams {
    fn default() -> Self {
        TraceParams {
            n_rays: 2000,
            max_bounces: 60,
            receiver_radius: 0.25,
            rng_seed: 0,
            max_time: None,
        }
    }
}

struct RayOutput {
    /// (virtual source key, order, intensity, delay, direction)
    specular: Vec<(([i64; 3], u32), f64, f64, Vec3)>,
    diffuse: Vec<AcousticPath>,
}

pub fn trace_paths(scene: &Scene, params: &TraceParams) -> Result<Vec<AcousticPath>> {
    scene.validate()?;
    let min_dim = scene.room.dims.iter().cloned().fold(f64::INFINITY, f64::min);
    if params.n_rays == 0 {
        return Err(Error::InvalidConfig("n_rays must be at least 1".into()));
    }
    if !(params.receiver_radius > 0.0 && params.receiver_radius < min_dim / 4.0) {
        return Err(Error::InvalidConfig(format!(
            "receiver radius {} must be positive and below a quarter of the smallest room dimension ({min_dim})",
            params.receiver_radius
        )));
    }
    if scene.distance() <= params.receiver_radius {
        return Err(Error::InvalidConfig(
            "degenerate geometry: source lies inside the receiver sphere".into(),
        ));
    }

    let outputs: Vec<RayOutput> = (0..params.n_rays)
        .into_par_iter()
        .map(|ray| trace_ray(scene, params, ray as u64))
        .collect();

    // merge specular detections of the same virtual source in ray order
    let mut merged: BTreeMap<([i64; 3], u32), (f64, f64, Vec3)> = BTreeMap::new();
    let mut paths = Vec::new();
    for out in outputs {
        for (key, intensity, delay, direction) in out.specular {
            merged
                .entry(key)
                .and_modify(|e| e.0 += intensity)
                .or_insert((intensity, delay, direction));
        }
        paths.extend(out.diffuse);
    }
    paths.extend(
        merged
            .into_iter()
            .map(|((_, order), (intensity, delay, direction))| AcousticPath {
                direction,
                delay,
                amplitude: intensity.sqrt(),
                order,
                kind: PathKind::Specular,
            }),
    );
    paths.sort_by(|a, b| a.delay.total_cmp(&b.delay));
    Ok(paths)
}

/// Fraction of the emitted energy intercepted by a receiver of `radius`,
/// given traced arrivals in intensity units.
pub fn intercepted_energy(paths: &[AcousticPath], radius: f64) -> f64 {
    paths
        .iter()
        .map(|p| p.amplitude * p.amplitude * radius * radius / 4.0)
        .sum()
}

fn trace_ray(scene: &Scene, params: &TraceParams, ray: u64) -> RayOutput {
    let room = &scene.room;
    let c = room.speed_of_sound;
    let listener = scene.listener;
    let r2 = params.receiver_radius * params.receiver_radius;
    let max_len = params.max_time.map_or(f64::INFINITY, |t| t * c);
    let scattering = room.scattering;

    let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
    rng.set_stream(ray);

    let mut out = RayOutput {
        specular: Vec::new(),
        diffuse: Vec::new(),
    };

    let mut pos = scene.source;
    let mut dir = uniform_sphere(&mut rng);
    let mut energy = 4.0 * PI / params.n_rays as f64;
    let mut travelled = 0.0;
    let mut anchor_len = 0.0;
    let mut anchored_at_source = true;
    let mut last_diffuse = false;
    let mut bounces = 0u32;

    loop {
        let (seg_len, wall) = next_wall(&pos, &dir, &room.dims);

        if !last_diffuse {
            let to_listener = sub(&listener, &pos);
            let along = dot(&to_listener, &dir);
            if along >= 0.0 && along <= seg_len {
                let b2 = (dot(&to_listener, &to_listener) - along * along).max(0.0);
                if b2 <= r2 {
                    let since_anchor = travelled - anchor_len;
                    let virtual_source = sub(&pos, &scale(&dir, since_anchor));
                    let offset = sub(&virtual_source, &listener);
                    let dist = norm(&offset);
                    let total = anchor_len + dist;
                    if total <= max_len {
                        let intensity = energy / (PI * r2);
                        let direction = scale(&offset, 1.0 / dist);
                        if anchored_at_source {
                            let key = virtual_source.map(|v| (v * 1e4).round() as i64);
                            out.specular
                                .push(((key, bounces), intensity, total / c, direction));
                        } else {
                            out.diffuse.push(AcousticPath {
                                direction,
                                delay: total / c,
                                amplitude: random_sign(&mut rng) * intensity.sqrt(),
                                order: bounces,
                                kind: PathKind::Diffuse,
                            });
                        }
                    }
                }
            }
        }

        travelled += seg_len;
        pos = [0, 1, 2].map(|i| pos[i] + dir[i] * seg_len);
        bounces += 1;
        if bounces > params.max_bounces || travelled > max_len {
            break;
        }
        energy *= 1.0 - room.absorption.wall(wall);
        if energy <= 0.0 {
            break;
        }
        let normal = inward_normal(wall);

        if scattering > 0.0 {
            let to_listener = sub(&listener, &pos);
            let d = norm(&to_listener);
            let cos = dot(&normal, &to_listener) / d;
            let total = travelled + d;
            if cos > 0.0 && total <= max_len {
                let intensity = energy * scattering * cos / (PI * d * d);
                out.diffuse.push(AcousticPath {
                    direction: scale(&to_listener, -1.0 / d),
                    delay: total / c,
                    amplitude: random_sign(&mut rng) * intensity.sqrt(),
                    order: bounces,
                    kind: PathKind::Diffuse,
                });
            }
        }

        if scattering > 0.0 && rng.gen::<f64>() < scattering {
            dir = lambertian(&mut rng, &normal);
            last_diffuse = true;
            anchored_at_source = false;
            anchor_len = travelled;
        } else {
            let axis = wall / 2;
            dir[axis] = -dir[axis];
            last_diffuse = false;
        }
        // keep the point exactly on the wall plane
        let axis = wall / 2;
        pos[axis] = if wall % 2 == 0 { 0.0 } else { room.dims[axis] };
    }
    out
}

/// Distance to the next wall along `dir` and that wall's index.
fn next_wall(pos: &Vec3, dir: &Vec3, dims: &Vec3) -> (f64, usize) {
    let mut best = (f64::INFINITY, 0);
    for axis in 0..3 {
        let d = dir[axis];
        let (t, wall) = if d > 0.0 {
            ((dims[axis] - pos[axis]) / d, 2 * axis + 1)
        } else if d < 0.0 {
            (-pos[axis] / d, 2 * axis)
        } else {
            continue;
        };
        if t < best.0 {
            best = (t.max(0.0), wall);
        }
    }
    best
}

fn inward_normal(wall: usize) -> Vec3 {
    let mut n = [0.0; 3];
    n[wall / 2] = if wall % 2 == 0 { 1.0 } else { -1.0 };
    n
}

fn uniform_sphere(rng: &mut ChaCha8Rng) -> Vec3 {
    let z: f64 = rng.gen_range(-1.0..=1.0);
    let phi: f64 = rng.gen_range(0.0..2.0 * PI);
    let r = (1.0 - z * z).max(0.0).sqrt();
    [r * phi.cos(), r * phi.sin(), z]
}

/// Cosine-weighted direction in the hemisphere around `normal`.
fn lambertian(rng: &mut ChaCha8Rng, normal: &Vec3) -> Vec3 {
    let u1: f64 = rng.gen();
    let u2: f64 = rng.gen();
    let r = u1.sqrt();
    let phi = 2.0 * PI * u2;
    let local = [r * phi.cos(), r * phi.sin(), (1.0 - u1).max(0.0).sqrt()];
    // normal is axis-aligned: build the frame by permuting axes
    let axis = normal.iter().position(|v| *v != 0.0).unwrap_or(2);
    let sign = normal[axis];
    let mut out = [0.0; 3];
    out[axis] = sign * local[2];
    out[(axis + 1) % 3] = local[0];
    out[(axis + 2) % 3] = local[1];
    out
}

fn random_sign(rng: &mut ChaCha8Rng) -> f64 {
    if rng.gen::<bool>() {
        1.0
    } else {
        -1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acoustics::{image_source_paths, RoomConfig};

    fn scene(absorption: f64, scattering: f64) -> Scene {
        Scene {
            room: RoomConfig::new([4.0, 5.0, 3.0], absorption, scattering),
            source: [1.0, 1.0, 1.0],
            listener: [3.0, 4.0, 2.0],
        }
    }

    fn params(n_rays: usize, max_bounces: u32) -> TraceParams {
        TraceParams {
            n_rays,
            max_bounces,
            receiver_radius: 0.3,
            rng_seed: 17,
            max_time: None,
        }
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let s = scene(0.3, 0.4);
        let a = trace_paths(&s, &params(500, 20)).unwrap();
        let b = trace_paths(&s, &params(500, 20)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn full_absorption_leaves_only_direct_sound() {
        let s = scene(1.0, 0.5);
        let paths = trace_paths(&s, &params(20_000, 20)).unwrap();
        assert!(!paths.is_empty());
        let direct = 14f64.sqrt() / 343.0;
        for p in &paths {
            assert_eq!(p.order, 0);
            assert!((p.delay - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn direct_intensity_converges_to_inverse_square() {
        let s = scene(1.0, 0.0);
        let paths = trace_paths(&s, &params(200_000, 0)).unwrap();
        assert_eq!(paths.len(), 1);
        let expected = 1.0 / 14.0;
        let got = paths[0].amplitude.powi(2);
        assert!((got - expected).abs() / expected < 0.1, "{got} vs {expected}");
    }

    #[test]
    fn specular_detections_land_on_image_arrivals() {
        let s = scene(0.3, 0.0);
        let traced = trace_paths(&s, &params(20_000, 2)).unwrap();
        let images = image_source_paths(&s, 2).unwrap();
        for p in &traced {
            let nearest = images
                .iter()
                .map(|i| (i.delay - p.delay).abs())
                .fold(f64::INFINITY, f64::min);
            assert!(nearest < 1e-9, "traced arrival {p:?} has no image match");
        }
    }

    #[test]
    fn received_energy_never_exceeds_emitted() {
        for (a, s) in [(0.1, 0.0), (0.1, 0.9), (0.5, 0.5), (0.9, 1.0)] {
            let paths = trace_paths(&scene(a, s), &params(2000, 40)).unwrap();
            let e = intercepted_energy(&paths, 0.3);
            assert!(e <= 1.0, "absorption {a} scattering {s}: {e}");
        }
    }

    #[test]
    fn rejects_bad_receivers() {
        let s = scene(0.3, 0.1);
        let mut p = params(10, 2);
        p.receiver_radius = 0.0;
        assert!(trace_paths(&s, &p).is_err());
        p.receiver_radius = 0.8;
        assert!(trace_paths(&s, &p).is_err());
        let close = Scene {
            listener: [1.1, 1.0, 1.0],
            ..s
        };
        assert!(trace_paths(&close, &params(10, 2)).is_err());
    }

    #[test]
    fn lambertian_directions_point_into_the_room() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for wall in 0..6 {
            let n = inward_normal(wall);
            let mut mean_cos = 0.0;
            for _ in 0..4000 {
                let d = lambertian(&mut rng, &n);
                assert!((norm(&d) - 1.0).abs() < 1e-12);
                let c = dot(&d, &n);
                assert!(c >= 0.0);
                mean_cos += c / 4000.0;
            }
            // E[cosθ] = 2/3 under the cosine-weighted density
            assert!((mean_cos - 2.0 / 3.0).abs() < 0.02);
        }
    }
}
