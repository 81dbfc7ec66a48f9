use super::{AcousticPath, PathKind, Scene};
use crate::error::Result;
use crate::sphere::{norm, scale, sub};

/// Specular arrivals by the image-source method, one per image up to `max_order`.
///
/// Along each axis the image coordinate is `(1 − 2q)·s + 2mL` for integers `m`
/// and `q ∈ {0, 1}`; it reflects `|m − q|` times off the low wall and `|m|`
/// times off the high wall.
pub fn image_source_paths(scene: &Scene, max_order: u32) -> Result<Vec<AcousticPath>> {
    scene.validate()?;
    let room = &scene.room;
    let c = room.speed_of_sound;
    let k = max_order as i64;

    // per-axis candidates: (coordinate, low-wall hits, high-wall hits)
    let mut axes: [Vec<(f64, u32, u32)>; 3] = Default::default();
    for axis in 0..3 {
        let s = scene.source[axis];
        let l = room.dims[axis];
        for m in -k..=k {
            for q in 0..=1i64 {
                let low = (m - q).unsigned_abs() as u32;
                let high = m.unsigned_abs() as u32;
                if low + high <= max_order {
                    let coord = (1 - 2 * q) as f64 * s + 2.0 * m as f64 * l;
                    axes[axis].push((coord, low, high));
                }
            }
        }
    }

    let mut paths = Vec::new();
    for &(x, xl, xh) in &axes[0] {
        for &(y, yl, yh) in &axes[1] {
            let order_xy = xl + xh + yl + yh;
            if order_xy > max_order {
                continue;
            }
            for &(z, zl, zh) in &axes[2] {
                let order = order_xy + zl + zh;
                if order > max_order {
                    continue;
                }
                let hits = [xl, xh, yl, yh, zl, zh];
                let gain: f64 = hits
                    .iter()
                    .enumerate()
                    .map(|(wall, n)| (1.0 - room.absorption.wall(wall)).sqrt().powi(*n as i32))
                    .product();
                let offset = sub(&[x, y, z], &scene.listener);
                let distance = norm(&offset);
                paths.push(AcousticPath {
                    direction: scale(&offset, 1.0 / distance),
                    delay: distance / c,
                    amplitude: gain / distance,
                    order,
                    kind: PathKind::Specular,
                });
            }
        }
    }
    paths.sort_by(|a, b| a.order.cmp(&b.order).then(a.delay.total_cmp(&b.delay)));
    Ok(paths)
}
