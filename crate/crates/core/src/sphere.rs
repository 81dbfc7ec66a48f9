//! Directions on the unit sphere, great-circle geometry, and the ring grid
//! used as the class set of the categorical estimator.
//!
//! Azimuth is measured counter-clockwise from +x in the horizontal plane and
//! lies in (−π, π]; elevation is measured from the horizontal plane towards
//! +z and lies in [−π/2, π/2]. At the poles azimuth is defined as 0.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];

pub(crate) fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn norm(a: &Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn sub(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn scale(a: &Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

/// A direction of arrival, stored as a unit vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    unit: Vec3,
}

impl Direction {
    pub fn from_angles(azimuth: f64, elevation: f64) -> Self {
        Direction {
            unit: to_cartesian(azimuth, elevation),
        }
    }

    pub fn from_degrees(azimuth_deg: f64, elevation_deg: f64) -> Self {
        Self::from_angles(azimuth_deg.to_radians(), elevation_deg.to_radians())
    }

    /// Normalizes `v`; fails on a zero or non-finite vector.
    pub fn from_vector(v: Vec3) -> Result<Self> {
        let n = norm(&v);
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::InvalidInput(format!(
                "cannot take the direction of vector {v:?}"
            )));
        }
        Ok(Direction {
            unit: scale(&v, 1.0 / n),
        })
    }

    pub fn unit(&self) -> Vec3 {
        self.unit
    }

    pub fn azimuth(&self) -> f64 {
        self.angles().0
    }

    pub fn elevation(&self) -> f64 {
        self.angles().1
    }

    /// (azimuth, elevation) in radians.
    pub fn angles(&self) -> (f64, f64) {
        angles_of_unit(&self.unit)
    }

    pub fn degrees(&self) -> (f64, f64) {
        let (a, e) = self.angles();
        (a.to_degrees(), e.to_degrees())
    }
}

/// u = (cosθ cosφ, sinθ cosφ, sinφ).
pub fn to_cartesian(azimuth: f64, elevation: f64) -> Vec3 {
    let (sa, ca) = azimuth.sin_cos();
    let (se, ce) = elevation.sin_cos();
    [ca * ce, sa * ce, se]
}

/// Inverse of [`to_cartesian`]; `v` is normalized first.
pub fn to_spherical(v: Vec3) -> Result<(f64, f64)> {
    Ok(Direction::from_vector(v)?.angles())
}

fn angles_of_unit(u: &Vec3) -> (f64, f64) {
    let z = u[2].clamp(-1.0, 1.0);
    if z >= 1.0 {
        return (0.0, FRAC_PI_2);
    }
    if z <= -1.0 {
        return (0.0, -FRAC_PI_2);
    }
    let horizontal = u[0].hypot(u[1]);
    let elevation = z.atan2(horizontal);
    let azimuth = if horizontal == 0.0 {
        0.0
    } else {
        let a = u[1].atan2(u[0]);
        // atan2 yields [−π, π]; fold −π onto π
        if a <= -PI {
            PI
        } else {
            a
        }
    };
    (azimuth, elevation)
}

/// Haversine term h for two azimuth/elevation pairs.
pub fn haversine_h(az1: f64, el1: f64, az2: f64, el2: f64) -> f64 {
    let s_el = ((el2 - el1) / 2.0).sin();
    let s_az = ((az2 - az1) / 2.0).sin();
    s_el * s_el + el1.cos() * el2.cos() * s_az * s_az
}

/// Great-circle distance in radians on the unit sphere, by the haversine formula.
pub fn great_circle_angles(az1: f64, el1: f64, az2: f64, el2: f64) -> f64 {
    let h = haversine_h(az1, el1, az2, el2).clamp(0.0, 1.0);
    2.0 * h.sqrt().asin()
}

pub fn great_circle(a: &Direction, b: &Direction) -> f64 {
    let (az1, el1) = a.angles();
    let (az2, el2) = b.angles();
    great_circle_angles(az1, el1, az2, el2)
}

/// Quasi-uniform ring discretization of the sphere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereGrid {
    resolution_deg: f64,
    directions: Vec<Direction>,
}

impl SphereGrid {
    /// Elevation rings from −90° to +90°; the ring at elevation φ carries
    /// `max(1, round(360·cosφ / resolution))` equally spaced azimuths starting
    /// at 0. When `resolution` does not divide 180 the ring step shrinks to
    /// `180 / ceil(180 / resolution)` so both poles stay on the grid.
    pub fn new(resolution_deg: f64) -> Result<Self> {
        if !(resolution_deg > 0.0 && resolution_deg <= 180.0) {
            return Err(Error::InvalidConfig(format!(
                "grid resolution must lie in (0, 180] degrees, got {resolution_deg}"
            )));
        }
        let intervals = (180.0 / resolution_deg - 1e-9).ceil().max(1.0) as usize;
        let step = 180.0 / intervals as f64;
        let mut directions = Vec::new();
        for ring in 0..=intervals {
            let elevation = -90.0 + ring as f64 * step;
            let is_pole = ring == 0 || ring == intervals;
            let count = if is_pole {
                1
            } else {
                let c = (360.0 * elevation.to_radians().cos() / resolution_deg).round();
                (c as usize).max(1)
            };
            for k in 0..count {
                let mut azimuth = k as f64 * 360.0 / count as f64;
                if azimuth > 180.0 {
                    azimuth -= 360.0;
                }
                directions.push(Direction::from_degrees(azimuth, elevation));
            }
        }
        Ok(SphereGrid {
            resolution_deg,
            directions,
        })
    }

    pub fn resolution_deg(&self) -> f64 {
        self.resolution_deg
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn directions(&self) -> &[Direction] {
        &self.directions
    }

    pub fn center(&self, index: usize) -> Direction {
        self.directions[index]
    }

    /// Index of the closest class center; ties go to the lowest index.
    pub fn nearest_class(&self, d: &Direction) -> usize {
        self.nearest_to_vector(&d.unit)
    }

    /// Same as [`Self::nearest_class`] for any non-zero vector; the scan
    /// compares dot products, so the length of `v` does not matter.
    pub fn nearest_to_vector(&self, v: &Vec3) -> usize {
        let mut best = 0;
        let mut best_dot = f64::NEG_INFINITY;
        for (i, c) in self.directions.iter().enumerate() {
            let d = dot(&c.unit, v);
            if d > best_dot {
                best_dot = d;
                best = i;
            }
        }
        best
    }

    /// Largest angular distance (degrees) from any probe to its nearest center.
    pub fn coverage_radius_deg(&self, probes: &[Direction]) -> f64 {
        probes
            .iter()
            .map(|p| great_circle(p, &self.center(self.nearest_class(p))).to_degrees())
            .fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,azimuth_deg,elevation_deg\n");
        for (i, d) in self.directions.iter().enumerate() {
            let (a, e) = d.degrees();
            let _ = writeln!(out, "{i},{a:.6},{e:.6}");
        }
        out
    }
}

/// Uniform random direction (for probes and tests).
pub fn random_direction<R: rand::Rng + ?Sized>(rng: &mut R) -> Direction {
    let z: f64 = rng.gen_range(-1.0..=1.0);
    let azimuth: f64 = rng.gen_range(-PI..PI);
    let r = (1.0 - z * z).max(0.0).sqrt();
    Direction {
        unit: [r * azimuth.cos(), r * azimuth.sin(), z],
    }
}
