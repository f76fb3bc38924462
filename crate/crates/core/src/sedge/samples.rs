use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::features::{FeatureSource, LABEL, SHRINK};
use crate::error::{invalid, Result};
use crate::image::{EdgeMap, Image, Mask};
use crate::imgproc::patch_segmentation;

/// Segmentation of a 16x16 label window, row-major.
pub type Seg = [u8; LABEL * LABEL];

/// A training patch: its source image, the half-resolution patch origin and
/// the structured label (`None` for a negative, i.e. a single segment).
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub source: u32,
    pub sx: u16,
    pub sy: u16,
    pub seg: Option<Box<Seg>>,
}

impl Sample {
    pub fn is_positive(&self) -> bool {
        self.seg.is_some()
    }

    pub fn seg_or_zero(&self) -> &Seg {
        const ZERO: Seg = [0; LABEL * LABEL];
        self.seg.as_deref().unwrap_or(&ZERO)
    }
}

/// Feature sources plus the samples drawn from them.
#[derive(Debug, Clone, Default)]
pub struct TrainingSet {
    pub sources: Vec<FeatureSource>,
    pub samples: Vec<Sample>,
}

impl TrainingSet {
    pub fn push_source(&mut self, src: FeatureSource) -> u32 {
        self.sources.push(src);
        (self.sources.len() - 1) as u32
    }

    pub fn counts(&self) -> (usize, usize) {
        let pos = self.samples.iter().filter(|s| s.is_positive()).count();
        (pos, self.samples.len() - pos)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleParams {
    pub n_pos: usize,
    pub n_neg: usize,
    pub pos_threshold: f32,
    pub neg_threshold: f32,
}

impl Default for SampleParams {
    fn default() -> Self {
        SampleParams {
            n_pos: 500,
            n_neg: 500,
            pos_threshold: 0.8,
            neg_threshold: 0.1,
        }
    }
}

/// Half-resolution origin of the patch whose label window contains the
/// pixel (`x`, `y`) at its centre, or `None` when the window would leave
/// the image.
pub fn origin_for(x: usize, y: usize, w: usize, h: usize) -> Option<(usize, usize)> {
    let (sx, sy) = (x / SHRINK, y / SHRINK);
    // label window covers [2 sx - 8, 2 sx + 8)
    let inside = |s: usize, n: usize| SHRINK * s >= LABEL / 2 && SHRINK * s + LABEL / 2 <= n;
    (inside(sx, w) && inside(sy, h)).then_some((sx, sy))
}

/// Binary label window of the patch at (`sx`, `sy`) taken from `mask`.
pub fn label_window(mask: &Mask, sx: usize, sy: usize) -> Vec<bool> {
    let (x0, y0) = (SHRINK * sx - LABEL / 2, SHRINK * sy - LABEL / 2);
    let mut out = Vec::with_capacity(LABEL * LABEL);
    for j in 0..LABEL {
        for i in 0..LABEL {
            out.push(mask.get(x0 + i, y0 + j));
        }
    }
    out
}

/// Draws positives among patches whose label window contains a supervision
/// pixel at or above `pos_threshold`, and negatives among patches whose
/// centre lies outside `exclusion` with supervision below `neg_threshold`.
/// Positives whose label window is a single segment are dropped. Every
/// patch origin is used at most once.
pub fn extract_samples(
    img: &Image,
    supervision: &EdgeMap,
    exclusion: &Mask,
    source: u32,
    params: &SampleParams,
    rng: &mut impl Rng,
) -> Result<Vec<Sample>> {
    let (w, h) = (img.width(), img.height());
    if (supervision.width(), supervision.height()) != (w, h) || (exclusion.width(), exclusion.height()) != (w, h) {
        return Err(invalid!("supervision, exclusion and image sizes differ"));
    }
    if !supervision.is_thinned() {
        return Err(invalid!("supervision must be thinned"));
    }
    let pos_mask = supervision.binarize(params.pos_threshold);
    // column-wise prefix counts make each window test O(LABEL)
    let mut col = vec![0u32; (h + 1) * w];
    for y in 0..h {
        for x in 0..w {
            col[(y + 1) * w + x] = col[y * w + x] + pos_mask.get(x, y) as u32;
        }
    }
    let window_has_edge = |sx: usize, sy: usize| {
        let (x0, y0) = (SHRINK * sx - LABEL / 2, SHRINK * sy - LABEL / 2);
        (x0..x0 + LABEL).any(|x| col[(y0 + LABEL) * w + x] > col[y0 * w + x])
    };
    let mut pos_sites = Vec::new();
    let mut neg_sites = Vec::new();
    for sy in 0..=h / SHRINK {
        for sx in 0..=w / SHRINK {
            let (x, y) = (SHRINK * sx, SHRINK * sy);
            if origin_for(x, y, w, h).is_none() {
                continue;
            }
            if window_has_edge(sx, sy) {
                pos_sites.push((sx, sy));
            } else if !exclusion.get(x, y) && supervision.get(x, y) < params.neg_threshold {
                neg_sites.push((sx, sy));
            }
        }
    }
    pos_sites.shuffle(rng);
    neg_sites.shuffle(rng);
    let mut out = Vec::with_capacity(params.n_pos + params.n_neg);
    let mut n_pos = 0;
    for (sx, sy) in pos_sites {
        if n_pos == params.n_pos {
            break;
        }
        let (seg, k) = patch_segmentation(&label_window(&pos_mask, sx, sy), LABEL);
        if k < 2 {
            continue;
        }
        out.push(Sample {
            source,
            sx: sx as u16,
            sy: sy as u16,
            seg: Some(Box::new(seg.try_into().expect("16x16 label"))),
        });
        n_pos += 1;
    }
    for (sx, sy) in neg_sites.into_iter().take(params.n_neg) {
        out.push(Sample {
            source,
            sx: sx as u16,
            sy: sy as u16,
            seg: None,
        });
    }
    Ok(out)
}

/// Convenience: feature source plus samples for one image.
pub fn add_image(
    set: &mut TrainingSet,
    img: &Image,
    supervision: &EdgeMap,
    exclusion: &Mask,
    params: &SampleParams,
    rng: &mut impl Rng,
) -> Result<usize> {
    let idx = set.sources.len() as u32;
    let samples = extract_samples(img, supervision, exclusion, idx, params, rng)?;
    if samples.is_empty() {
        return Ok(0);
    }
    set.sources.push(FeatureSource::new(img)?);
    let n = samples.len();
    set.samples.extend(samples);
    Ok(n)
}
