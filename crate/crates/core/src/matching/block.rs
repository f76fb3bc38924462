use serde::{Deserialize, Serialize};

use super::{Match, MatchSet};
use crate::error::{invalid, Result};
use crate::image::Image;

/// Coarse-to-fine NCC block matcher with a forward/backward consistency check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlockMatchParams {
    pub grid_step: usize,
    pub patch_radius: usize,
    /// Full-resolution search radius in pixels.
    pub search_radius: usize,
    pub levels: usize,
    /// Minimum intensity variance of a source patch.
    pub min_texture: f32,
    pub fwd_bwd_tol: f32,
}

impl Default for BlockMatchParams {
    fn default() -> Self {
        BlockMatchParams {
            grid_step: 4,
            patch_radius: 4,
            search_radius: 32,
            levels: 3,
            min_texture: 1e-4,
            fwd_bwd_tol: 2.0,
        }
    }
}

impl BlockMatchParams {
    pub fn validate(&self) -> Result<()> {
        if self.grid_step == 0 || self.patch_radius == 0 || self.levels == 0 {
            return Err(invalid!("grid_step, patch_radius and levels must be positive"));
        }
        if !(self.min_texture >= 0.0) || !(self.fwd_bwd_tol >= 0.0) {
            return Err(invalid!("min_texture and fwd_bwd_tol must be non-negative"));
        }
        Ok(())
    }
}

struct Plane {
    w: usize,
    h: usize,
    v: Vec<f32>,
}

impl Plane {
    #[inline]
    fn at(&self, x: isize, y: isize) -> f32 {
        let x = x.clamp(0, self.w as isize - 1) as usize;
        let y = y.clamp(0, self.h as isize - 1) as usize;
        self.v[y * self.w + x]
    }

    fn half(&self) -> Plane {
        let (w, h) = (self.w.div_ceil(2), self.h.div_ceil(2));
        let mut v = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                let (x0, y0) = (2 * x as isize, 2 * y as isize);
                v[y * w + x] =
                    0.25 * (self.at(x0, y0) + self.at(x0 + 1, y0) + self.at(x0, y0 + 1) + self.at(x0 + 1, y0 + 1));
            }
        }
        Plane { w, h, v }
    }
}

fn pyramid(img: &Image, levels: usize) -> Vec<Plane> {
    let (w, h, c) = (img.width(), img.height(), img.channels());
    let v = (0..w * h)
        .map(|i| (0..c).map(|k| img.plane(k)[i]).sum::<f32>() / c as f32)
        .collect();
    let mut pyr = vec![Plane { w, h, v }];
    while pyr.len() < levels {
        let last = pyr.last().unwrap();
        if last.w < 8 || last.h < 8 {
            break;
        }
        let next = last.half();
        pyr.push(next);
    }
    pyr
}

fn patch(p: &Plane, cx: isize, cy: isize, r: isize, out: &mut Vec<f32>) {
    out.clear();
    for dy in -r..=r {
        for dx in -r..=r {
            out.push(p.at(cx + dx, cy + dy));
        }
    }
}

/// Zero-mean, unit-norm copy; `None` when the patch is flat.
fn normalize(v: &mut [f32]) -> Option<f32> {
    let n = v.len() as f32;
    let mean = v.iter().sum::<f32>() / n;
    let mut ss = 0.0;
    for x in v.iter_mut() {
        *x -= mean;
        ss += *x * *x;
    }
    if ss <= 1e-12 {
        return None;
    }
    let inv = ss.sqrt().recip();
    v.iter_mut().for_each(|x| *x *= inv);
    Some(ss / n)
}

fn ncc(src_norm: &[f32], dst: &Plane, cx: isize, cy: isize, r: isize, buf: &mut Vec<f32>) -> f32 {
    patch(dst, cx, cy, r, buf);
    if normalize(buf).is_none() {
        return -1.0;
    }
    src_norm.iter().zip(buf.iter()).map(|(a, b)| a * b).sum()
}

/// Best integer displacement of the patch at (`x`, `y`) on level 0 of `src`.
fn match_point(src: &[Plane], dst: &[Plane], x: usize, y: usize, p: &BlockMatchParams) -> Option<(usize, usize, f32)> {
    let levels = src.len().min(dst.len());
    let r = p.patch_radius as isize;
    let mut sp = Vec::new();
    let mut buf = Vec::new();
    let (mut dx, mut dy) = (0isize, 0isize);
    let mut best_score = -1.0f32;
    for l in (0..levels).rev() {
        let (s, d) = (&src[l], &dst[l]);
        let (cx, cy) = ((x >> l) as isize, (y >> l) as isize);
        patch(s, cx, cy, r, &mut sp);
        normalize(&mut sp)?;
        let lim = p.search_radius.div_ceil(1 << l) as isize;
        let (centre, reach) = if l == levels - 1 {
            ((0, 0), lim)
        } else {
            ((2 * dx, 2 * dy), 2)
        };
        best_score = -2.0;
        let mut best = centre;
        for ey in -reach..=reach {
            for ex in -reach..=reach {
                let (ddx, ddy) = (centre.0 + ex, centre.1 + ey);
                if ddx.abs() > lim || ddy.abs() > lim {
                    continue;
                }
                let (tx, ty) = (cx + ddx, cy + ddy);
                // coarse levels clamp at the border, the finest level does not
                let m = if l == 0 { r } else { 0 };
                if tx < m || ty < m || tx >= d.w as isize - m || ty >= d.h as isize - m {
                    continue;
                }
                let score = ncc(&sp, d, tx, ty, r, &mut buf);
                if score > best_score {
                    best_score = score;
                    best = (ddx, ddy);
                }
            }
        }
        (dx, dy) = best;
    }
    let (tx, ty) = (x as isize + dx, y as isize + dy);
    let d0 = &dst[0];
    if best_score <= -1.0 || tx < 0 || ty < 0 || tx >= d0.w as isize || ty >= d0.h as isize {
        return None;
    }
    Some((tx as usize, ty as usize, best_score))
}

/// Matches a regular grid of textured patches of `a` into `b`. Patches on
/// the finest level lie fully inside both frames. Scores are
/// the NCC of the final match clamped to `[0, 1]`.
pub fn block_match(a: &Image, b: &Image, params: &BlockMatchParams) -> Result<MatchSet> {
    params.validate()?;
    if a.channels() != b.channels() {
        return Err(invalid!("frames differ in channel count"));
    }
    let pa = pyramid(a, params.levels);
    let pb = pyramid(b, params.levels);
    let (w, h) = (a.width(), a.height());
    let r = params.patch_radius as isize;
    let mut out = Vec::new();
    let mut sp = Vec::new();
    let start = (params.grid_step / 2).max(params.patch_radius);
    let (xend, yend) = (
        w.saturating_sub(params.patch_radius),
        h.saturating_sub(params.patch_radius),
    );
    for y in (start..yend).step_by(params.grid_step) {
        for x in (start..xend).step_by(params.grid_step) {
            patch(&pa[0], x as isize, y as isize, r, &mut sp);
            match normalize(&mut sp) {
                Some(var) if var >= params.min_texture => {}
                _ => continue,
            }
            let Some((tx, ty, score)) = match_point(&pa, &pb, x, y, params) else {
                continue;
            };
            let Some((bx, by, _)) = match_point(&pb, &pa, tx, ty, params) else {
                continue;
            };
            let err = (bx as f32 - x as f32).hypot(by as f32 - y as f32);
            if err > params.fwd_bwd_tol {
                continue;
            }
            out.push(Match {
                x1: x as f32,
                y1: y as f32,
                x2: tx as f32,
                y2: ty as f32,
                score: score.clamp(0.0, 1.0),
            });
        }
    }
    MatchSet::new(out, (w, h), (b.width(), b.height()))
}
