//! Edge thinning by non-maximum suppression along the edge normal.

use std::f32::consts::PI;

use crate::image::EdgeMap;

use super::filters::{centered_gradient, tri_blur};

/// Normal orientation in `[0, pi)` per pixel, from the dominant eigenvector
/// of the smoothed second-moment matrix of the strength map.
pub fn normal_orientation(edges: &EdgeMap) -> Vec<f32> {
    let (w, h) = (edges.width(), edges.height());
    let (gx, gy) = centered_gradient(edges.data(), w, h);
    let jxx: Vec<f32> = gx.iter().map(|g| g * g).collect();
    let jyy: Vec<f32> = gy.iter().map(|g| g * g).collect();
    let jxy: Vec<f32> = gx.iter().zip(&gy).map(|(a, b)| a * b).collect();
    let (jxx, jyy, jxy) = (
        tri_blur(&jxx, w, h, 2),
        tri_blur(&jyy, w, h, 2),
        tri_blur(&jxy, w, h, 2),
    );
    (0..w * h)
        .map(|i| {
            let t = 0.5 * (2.0 * jxy[i]).atan2(jxx[i] - jyy[i]);
            t.rem_euclid(PI)
        })
        .collect()
}

/// Bilinear sample; `None` outside the pixel grid.
#[inline]
fn sample(src: &[f32], w: usize, h: usize, x: f32, y: f32) -> Option<f32> {
    if x < 0.0 || y < 0.0 || x > (w - 1) as f32 || y > (h - 1) as f32 {
        return None;
    }
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (tx, ty) = (x - x0 as f32, y - y0 as f32);
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let a = src[y0 * w + x0] * (1.0 - tx) + src[y0 * w + x1] * tx;
    let b = src[y1 * w + x0] * (1.0 - tx) + src[y1 * w + x1] * tx;
    Some(a * (1.0 - ty) + b * ty)
}

/// True when some sample within `radius` along the normal exceeds `v`.
#[inline]
fn dominated(src: &[f32], w: usize, h: usize, x: usize, y: usize, theta: f32, radius: usize) -> bool {
    let v = src[y * w + x];
    // snap tiny components so axis-aligned normals sample exact pixels
    let snap = |c: f32| if c.abs() < 1e-6 { 0.0 } else { c };
    let (dx, dy) = (snap(theta.cos()), snap(theta.sin()));
    for k in 1..=radius {
        let k = k as f32;
        for s in [-1.0f32, 1.0] {
            let sx = x as f32 + s * k * dx;
            let sy = y as f32 + s * k * dy;
            if let Some(n) = sample(src, w, h, sx, sy) {
                if n > v {
                    return true;
                }
            }
        }
    }
    false
}

/// Suppresses every pixel that has a strictly greater (interpolated) value
/// within `radius` pixels along its normal direction, on either side.
///
/// Maps that already carry an orientation (the output of a previous pass)
/// reuse it, which makes the operation idempotent.
pub fn nms(edges: &EdgeMap, radius: usize) -> EdgeMap {
    let (w, h) = (edges.width(), edges.height());
    let orientation = match edges.orientation() {
        Some(o) => o.to_vec(),
        None => normal_orientation(edges),
    };
    let src = edges.data();
    let mut out = vec![0.0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if src[i] > 0.0 && !dominated(src, w, h, x, y, orientation[i], radius) {
                out[i] = src[i];
            }
        }
    }
    EdgeMap::from_clamped(w, h, out).with_thinning(orientation)
}

/// Checks the thinning invariant against the stored orientation.
pub fn is_locally_maximal(edges: &EdgeMap, radius: usize) -> bool {
    let Some(o) = edges.orientation() else {
        return false;
    };
    let (w, h) = (edges.width(), edges.height());
    let src = edges.data();
    (0..w * h).all(|i| src[i] <= 0.0 || !dominated(src, w, h, i % w, i / w, o[i], radius))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn map(w: usize, h: usize, mut f: impl FnMut(usize, usize) -> f32) -> EdgeMap {
        EdgeMap::new(w, h, (0..w * h).map(|i| f(i % w, i / w)).collect()).unwrap()
    }

    #[test]
    fn one_pixel_ridge_is_unchanged() {
        let e = map(9, 9, |x, _| if x == 4 { 0.8 } else { 0.0 });
        let t = nms(&e, 1);
        assert!(t.is_thinned());
        assert_eq!(t.data(), e.data());
    }

    #[test]
    fn triangle_profile_keeps_only_peak() {
        // brute-force 1D scan: only index 3 has no strictly larger neighbor
        let profile = [0.0, 0.2, 0.5, 1.0, 0.5, 0.2, 0.0];
        let oracle: Vec<usize> = (0..7)
            .filter(|&i| {
                profile[i] > 0.0 && (i == 0 || profile[i - 1] <= profile[i]) && (i == 6 || profile[i + 1] <= profile[i])
            })
            .collect();
        assert_eq!(oracle, vec![3]);
        let e = map(7, 9, |x, _| profile[x]);
        let t = nms(&e, 1);
        for y in 0..9 {
            for x in 0..7 {
                let expect = if oracle.contains(&x) { profile[x] } else { 0.0 };
                assert_eq!(t.get(x, y), expect, "({x},{y})");
            }
        }
    }

    #[test]
    fn constant_map_is_kept_by_tie_rule() {
        let e = map(8, 6, |_, _| 0.6);
        assert_eq!(nms(&e, 2).data(), e.data());
    }

    #[test]
    fn diagonal_orientation_is_detected() {
        // ridge along the anti-diagonal x + y = 8 -> normal at 45 degrees
        let e = map(9, 9, |x, y| {
            let d = (x as isize + y as isize - 8).unsigned_abs() as f32;
            (1.0 - 0.3 * d).max(0.0)
        });
        let o = normal_orientation(&e);
        assert!((o[4 * 9 + 4] - PI / 4.0).abs() < 1e-3);
        let t = nms(&e, 1);
        // the ridge stays one pixel thick
        for y in 1..8 {
            for x in 1..8 {
                assert_eq!(t.get(x, y) > 0.0, x + y == 8, "({x},{y})");
            }
        }
    }

    proptest! {
        #[test]
        fn idempotent_and_locally_maximal(
            w in 3usize..14, h in 3usize..14, seed in any::<u64>(), radius in 1usize..3
        ) {
            let mut s = seed;
            let e = map(w, h, |_, _| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 33) % 11) as f32 / 10.0
            });
            let once = nms(&e, radius);
            let twice = nms(&once, radius);
            prop_assert_eq!(once.data(), twice.data());
            prop_assert!(is_locally_maximal(&once, radius));
        }
    }
}
