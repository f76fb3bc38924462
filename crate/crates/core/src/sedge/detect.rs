use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::{FeatureSource, LABEL, LABEL_OFFSET, PAD, PATCH, SHRINK};
use super::forest::{seg_edges, StructuredForest};
use crate::error::{invalid, Result};
use crate::image::{resize_plane, EdgeMap, Image};
use crate::imgproc::filters::{pad_reflect, tri_blur};
use crate::imgproc::rgb_to_luv;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectOptions {
    pub scales: Vec<f32>,
    /// Rounds of leaf segmentation re-fitting to local color; 0 disables.
    pub sharpen: usize,
    /// Patch stride in pixels; must be a positive multiple of 2.
    pub stride: usize,
}

impl Default for DetectOptions {
    fn default() -> Self {
        DetectOptions {
            scales: vec![0.5, 1.0, 2.0],
            sharpen: 2,
            stride: 2,
        }
    }
}

impl DetectOptions {
    pub fn validate(&self) -> Result<()> {
        if self.scales.is_empty() || self.scales.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(invalid!("scales must be a non-empty list of positive numbers"));
        }
        if self.stride == 0 || !self.stride.is_multiple_of(SHRINK) {
            return Err(invalid!("stride must be a positive multiple of {SHRINK}"));
        }
        Ok(())
    }
}

// Scales whose shorter side falls below this are skipped.
const MIN_SCALED_SIDE: usize = 16;

// Responses at or above this quantile map to 1.
const NORM_QUANTILE: f32 = 0.99;

pub(crate) fn detect_forest(forest: &StructuredForest, img: &Image, opts: &DetectOptions) -> Result<EdgeMap> {
    opts.validate()?;
    if img.channels() != 3 {
        return Err(invalid!("edge detection needs a 3-channel image"));
    }
    let (w, h) = (img.width(), img.height());
    if w < PATCH || h < PATCH {
        return Err(invalid!("image {w}x{h} is smaller than the {PATCH}x{PATCH} patch"));
    }
    let mut total = vec![0.0f32; w * h];
    let mut used = 0usize;
    for &s in &opts.scales {
        let (sw, sh) = (
            ((w as f32 * s).round() as usize).max(1),
            ((h as f32 * s).round() as usize).max(1),
        );
        if sw.min(sh) < MIN_SCALED_SIDE {
            continue;
        }
        let scaled = if (sw, sh) == (w, h) {
            img.clone()
        } else {
            img.resized(sw, sh)
        };
        let e = detect_single_scale(forest, &scaled, opts)?;
        let e = if (sw, sh) == (w, h) {
            e
        } else {
            resize_plane(&e, sw, sh, w, h)
        };
        total.iter_mut().zip(&e).for_each(|(t, v)| *t += v);
        used += 1;
    }
    if used == 0 {
        return Err(invalid!("no detection scale leaves at least {MIN_SCALED_SIDE} pixels"));
    }
    // strengths are relative to a high percentile rather than the single
    // strongest response, so a few saturated pixels cannot dim the rest
    let mut e = tri_blur(&total, w, h, 1);
    let mut sorted = e.clone();
    let k = ((sorted.len() - 1) as f32 * NORM_QUANTILE).round() as usize;
    let mut scale = *sorted.select_nth_unstable_by(k, f32::total_cmp).1;
    if scale <= 0.0 {
        scale = e.iter().copied().fold(0.0, f32::max);
    }
    if scale > 0.0 {
        e.iter_mut().for_each(|v| *v /= scale);
    }
    Ok(EdgeMap::from_clamped(w, h, e))
}

fn detect_single_scale(forest: &StructuredForest, img: &Image, opts: &DetectOptions) -> Result<Vec<f32>> {
    let (w, h) = (img.width(), img.height());
    let src = FeatureSource::new(img)?;
    let padded = pad_reflect(img, PAD);
    let pw = padded.width();
    let luv = if opts.sharpen > 0 {
        Some(rgb_to_luv(&padded))
    } else {
        None
    };
    let step = opts.stride / SHRINK;
    let (nx, ny) = src.origins();
    let n_trees = forest.trees.len() as u32;
    let rows: Vec<usize> = (0..ny).step_by(step).collect();
    // each origin row touches image rows [2 sy - 8, 2 sy + 8)
    let strips: Vec<(Vec<u32>, Vec<u32>)> = rows
        .par_iter()
        .map(|&sy| {
            let mut hits = vec![0u32; LABEL * w];
            let mut cover = vec![0u32; LABEL * w];
            let mut colors = [[0.0f32; 3]; LABEL * LABEL];
            for sx in (0..nx).step_by(step) {
                let (x0, y0) = (SHRINK * sx, SHRINK * sy);
                if let Some(luv) = &luv {
                    for j in 0..LABEL {
                        for i in 0..LABEL {
                            let p = (y0 + LABEL_OFFSET + j) * pw + x0 + LABEL_OFFSET + i;
                            colors[j * LABEL + i] = [luv[0][p], luv[1][p], luv[2][p]];
                        }
                    }
                }
                for tree in &forest.trees {
                    let seg = tree.leaf_seg(tree.route(&src, sx, sy));
                    if seg.iter().all(|&v| v == seg[0]) {
                        continue;
                    }
                    let edges = if luv.is_some() {
                        seg_edges(&sharpen(seg, &colors, opts.sharpen))
                    } else {
                        seg_edges(seg)
                    };
                    for j in 0..LABEL {
                        for i in 0..LABEL {
                            if !edges[j * LABEL + i] {
                                continue;
                            }
                            let x = (x0 + i) as isize - (LABEL / 2) as isize;
                            if x >= 0 && (x as usize) < w {
                                hits[j * w + x as usize] += 1;
                            }
                        }
                    }
                }
                for j in 0..LABEL {
                    for i in 0..LABEL {
                        let x = (x0 + i) as isize - (LABEL / 2) as isize;
                        if x >= 0 && (x as usize) < w {
                            cover[j * w + x as usize] += n_trees;
                        }
                    }
                }
            }
            (hits, cover)
        })
        .collect();
    let mut hits = vec![0u32; w * h];
    let mut cover = vec![0u32; w * h];
    for (&sy, (sh, sc)) in rows.iter().zip(&strips) {
        for j in 0..LABEL {
            let y = (SHRINK * sy + j) as isize - (LABEL / 2) as isize;
            if y < 0 || y as usize >= h {
                continue;
            }
            let y = y as usize;
            for x in 0..w {
                hits[y * w + x] += sh[j * w + x];
                cover[y * w + x] += sc[j * w + x];
            }
        }
    }
    Ok(hits
        .iter()
        .zip(&cover)
        .map(|(&a, &c)| if c == 0 { 0.0 } else { a as f32 / c as f32 })
        .collect())
}

/// Re-fits a leaf segmentation to the patch colors: every pixel takes the
/// label, among its own and its 4-neighbours', whose mean color is closest.
pub(crate) fn sharpen(
    seg: &[u8; LABEL * LABEL],
    colors: &[[f32; 3]; LABEL * LABEL],
    rounds: usize,
) -> [u8; LABEL * LABEL] {
    let mut cur = *seg;
    let n_segs = *cur.iter().max().unwrap() as usize + 1;
    let mut sums = vec![[0.0f32; 4]; n_segs];
    for _ in 0..rounds {
        sums.iter_mut().for_each(|s| *s = [0.0; 4]);
        for (l, c) in cur.iter().zip(colors) {
            let s = &mut sums[*l as usize];
            s[0] += c[0];
            s[1] += c[1];
            s[2] += c[2];
            s[3] += 1.0;
        }
        let dist = |p: usize, l: u8| {
            let s = &sums[l as usize];
            if s[3] == 0.0 {
                return f32::INFINITY;
            }
            let c = &colors[p];
            (0..3).map(|k| (c[k] - s[k] / s[3]).powi(2)).sum::<f32>()
        };
        let mut next = cur;
        for y in 0..LABEL {
            for x in 0..LABEL {
                let p = y * LABEL + x;
                let mut best = (dist(p, cur[p]), cur[p]);
                let mut consider = |q: usize| {
                    let l = cur[q];
                    if l != best.1 {
                        let d = dist(p, l);
                        if d < best.0 {
                            best = (d, l);
                        }
                    }
                };
                if x > 0 {
                    consider(p - 1);
                }
                if x + 1 < LABEL {
                    consider(p + 1);
                }
                if y > 0 {
                    consider(p - LABEL);
                }
                if y + 1 < LABEL {
                    consider(p + LABEL);
                }
                next[p] = best.1;
            }
        }
        if next == cur {
            break;
        }
        cur = next;
    }
    cur
}
