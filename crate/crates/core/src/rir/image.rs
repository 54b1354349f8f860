use serde::{Deserialize, Serialize};

use crate::{Room, Vec3};

/// Mirror image of a source in a shoebox room.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageSource {
    pub position: Vec3,
    pub reflection_order: u32,
    pub gain: f64,
}

/// Every image of `src` (room coordinates) on the Allen-Berkley lattice whose
/// distance to the array origin is at most `max_delay * c`.
///
/// Per axis an image sits at `(1 - 2q) s + 2 n L` with `q` in `{0, 1}` and
/// integer `n`, after `|2n - q|` wall reflections.
pub fn enumerate_image_sources(room: &Room, src: Vec3, max_delay: f64, c: f64) -> Vec<ImageSource> {
    let radius = max_delay * c;
    let origin = room.array_origin;
    let beta = room.reflection();

    // candidate (coordinate, reflections) per axis, already filtered to the
    // slab |x - origin_x| <= radius
    let axes: Vec<Vec<(f64, u32)>> = (0..3)
        .map(|i| {
            let l = room.dims.0[i];
            let s = src.0[i];
            let a = origin.0[i];
            let mut out = Vec::new();
            for q in 0..2i64 {
                let base = (1 - 2 * q) as f64 * s;
                let n_lo = ((a - radius - base) / (2.0 * l)).floor() as i64;
                let n_hi = ((a + radius - base) / (2.0 * l)).ceil() as i64;
                for n in n_lo..=n_hi {
                    let x = base + 2.0 * n as f64 * l;
                    if (x - a).abs() <= radius {
                        out.push((x, (2 * n - q).unsigned_abs() as u32));
                    }
                }
            }
            out
        })
        .collect();

    let r2 = radius * radius;
    let mut images = Vec::new();
    for &(x, ox) in &axes[0] {
        let dx2 = (x - origin.x()).powi(2);
        for &(y, oy) in &axes[1] {
            let dxy2 = dx2 + (y - origin.y()).powi(2);
            if dxy2 > r2 {
                continue;
            }
            for &(z, oz) in &axes[2] {
                if dxy2 + (z - origin.z()).powi(2) <= r2 {
                    let order = ox + oy + oz;
                    images.push(ImageSource {
                        position: Vec3::new(x, y, z),
                        reflection_order: order,
                        gain: beta.powi(order as i32),
                    });
                }
            }
        }
    }
    images
}

#[cfg(test)]
mod tests {
    use super::*;

    fn room() -> Room {
        Room::new(Vec3::new(5.0, 5.0, 4.0), 0.3, Vec3::new(2.5, 2.5, 1.5)).unwrap()
    }

    #[test]
    fn direct_path_only() {
        let r = room();
        let src = Vec3::new(1.0, 2.0, 1.0);
        let d = src.distance(&r.array_origin) / 343.0;
        let imgs = enumerate_image_sources(&r, src, d * 1.0001, 343.0);
        assert_eq!(imgs.len(), 1);
        assert_eq!(imgs[0].position, src);
        assert_eq!(imgs[0].reflection_order, 0);
        assert_eq!(imgs[0].gain, 1.0);
    }

    #[test]
    fn first_order_images() {
        let r = room();
        let src = Vec3::new(1.0, 2.0, 1.0);
        let imgs = enumerate_image_sources(&r, src, 100.0 / 343.0, 343.0);
        let first: Vec<_> = imgs.iter().filter(|i| i.reflection_order == 1).collect();
        assert_eq!(first.len(), 6);
        assert!(first.iter().any(|i| i.position == Vec3::new(-1.0, 2.0, 1.0)));
        assert!(first.iter().any(|i| i.position == Vec3::new(9.0, 2.0, 1.0)));
        assert!(first.iter().any(|i| i.position == Vec3::new(1.0, 2.0, 7.0)));
        let beta = (1.0f64 - 0.3).sqrt();
        for i in &first {
            assert!((i.gain - beta).abs() < 1e-15);
        }
    }

    #[test]
    fn no_duplicates_and_gain_law() {
        let r = room();
        let imgs = enumerate_image_sources(&r, Vec3::new(1.3, 0.7, 2.2), 0.1, 343.0);
        let mut keys: Vec<[i64; 3]> = imgs
            .iter()
            .map(|i| i.position.0.map(|v| (v * 1e6).round() as i64))
            .collect();
        keys.sort();
        let n = keys.len();
        keys.dedup();
        assert_eq!(keys.len(), n);
        let beta = r.reflection();
        for i in &imgs {
            assert!(i.gain > 0.0 && i.gain <= 1.0);
            assert!((i.gain - beta.powi(i.reflection_order as i32)).abs() < 1e-15);
            assert!(i.position.distance(&r.array_origin) <= 0.1 * 343.0 + 1e-9);
        }
    }

    /// Exhaustive lattice scan over a generous index box as an oracle for
    /// the pruned enumeration.
    #[test]
    fn matches_brute_force_lattice() {
        let r = room();
        let src = Vec3::new(4.1, 0.4, 3.3);
        let max_delay = 0.07;
        let radius = max_delay * 343.0;
        let mut expected = 0;
        for qx in 0..2i64 {
            for qy in 0..2i64 {
                for qz in 0..2i64 {
                    for nx in -10..=10i64 {
                        for ny in -10..=10i64 {
                            for nz in -10..=10i64 {
                                let p = Vec3::new(
                                    (1 - 2 * qx) as f64 * src.x() + 2.0 * nx as f64 * 5.0,
                                    (1 - 2 * qy) as f64 * src.y() + 2.0 * ny as f64 * 5.0,
                                    (1 - 2 * qz) as f64 * src.z() + 2.0 * nz as f64 * 4.0,
                                );
                                if p.distance(&r.array_origin) <= radius {
                                    expected += 1;
                                }
                            }
                        }
                    }
                }
            }
        }
        assert_eq!(enumerate_image_sources(&r, src, max_delay, 343.0).len(), expected);
    }

    #[test]
    fn room1_image_count() {
        let r = Room::room1();
        let src = r.array_origin + Vec3::new(2.0, 0.0, 0.0);
        let imgs = enumerate_image_sources(&r, src, 0.5, 343.0);
        assert!(imgs.len() > 80_000, "{}", imgs.len());
        assert!(imgs.iter().map(|i| i.reflection_order).max().unwrap() >= 40);
    }
}
