//! Patch features, computed lazily from per-image channel stacks.
//!
//! A 32x32 image patch maps to a 16x16 window of two channel stacks at half
//! resolution: the regular stack (triangle radius 1) contributes every value
//! (16*16*13), the self-similarity stack (triangle radius 4) contributes the
//! differences between all 300 pairs of a 5x5 grid of cell centres, per
//! channel (13*300).

use crate::error::Result;
use crate::image::Image;
use crate::imgproc::filters::pad_reflect;
use crate::imgproc::{raw_channels, ChannelStack, N_CHANNELS};

pub const PATCH: usize = 32;
pub const LABEL: usize = 16;
pub const SHRINK: usize = 2;
/// Image border added before feature extraction, so patch origins run over
/// `0..=width` in padded coordinates and label windows cover the image.
pub const PAD: usize = PATCH / 2;
/// Offset of the label window inside a patch.
pub const LABEL_OFFSET: usize = (PATCH - LABEL) / 2;
pub const RECIPE_VERSION: u16 = 1;

const CELLS: usize = 5;
const WIN: usize = PATCH / SHRINK;
pub const N_REG: usize = WIN * WIN * N_CHANNELS;
pub const N_PAIRS: usize = CELLS * CELLS * (CELLS * CELLS - 1) / 2;
pub const N_FEATURES: usize = N_REG + N_PAIRS * N_CHANNELS;

const REG_BLUR: usize = 1;
const SIM_BLUR: usize = 4;

fn cell_centre(i: usize) -> usize {
    ((i as f32 + 0.5) * WIN as f32 / CELLS as f32).floor() as usize
}

/// Window offsets of feature `f` inside the stacks: a single regular value
/// or the difference of two self-similarity values.
#[derive(Debug, Clone, Copy)]
enum Desc {
    Reg {
        c: usize,
        dx: usize,
        dy: usize,
    },
    Sim {
        c: usize,
        a: (usize, usize),
        b: (usize, usize),
    },
}

fn describe(f: usize) -> Desc {
    if f < N_REG {
        let c = f / (WIN * WIN);
        let r = f % (WIN * WIN);
        return Desc::Reg {
            c,
            dx: r % WIN,
            dy: r / WIN,
        };
    }
    let g = f - N_REG;
    let (c, pair) = (g / N_PAIRS, g % N_PAIRS);
    let (mut i, mut rest) = (0usize, pair);
    // pairs (i, j) with i < j enumerated row by row
    while rest >= CELLS * CELLS - 1 - i {
        rest -= CELLS * CELLS - 1 - i;
        i += 1;
    }
    let j = i + 1 + rest;
    let cell = |k: usize| (cell_centre(k % CELLS), cell_centre(k / CELLS));
    Desc::Sim {
        c,
        a: cell(i),
        b: cell(j),
    }
}

/// Channel stacks of one (padded) image.
#[derive(Debug, Clone)]
pub struct FeatureSource {
    reg: ChannelStack,
    sim: ChannelStack,
    /// Image size before padding.
    pub width: usize,
    pub height: usize,
}

impl FeatureSource {
    pub fn new(img: &Image) -> Result<Self> {
        let padded = pad_reflect(img, PAD);
        let raw = raw_channels(&padded, SHRINK)?;
        Ok(FeatureSource {
            reg: raw.blurred(REG_BLUR),
            sim: raw.blurred(SIM_BLUR),
            width: img.width(),
            height: img.height(),
        })
    }

    /// Feature `f` of the patch whose padded-coordinate origin is
    /// (`2 * sx`, `2 * sy`).
    #[inline]
    pub fn feature(&self, sx: usize, sy: usize, f: usize) -> f32 {
        self.eval(describe(f), sx, sy)
    }

    #[inline]
    fn eval(&self, d: Desc, sx: usize, sy: usize) -> f32 {
        match d {
            Desc::Reg { c, dx, dy } => self.reg.get(c, sx + dx, sy + dy),
            Desc::Sim { c, a, b } => self.sim.get(c, sx + a.0, sy + a.1) - self.sim.get(c, sx + b.0, sy + b.1),
        }
    }

    /// Number of patch origins along x and y, in half-resolution units.
    pub fn origins(&self) -> (usize, usize) {
        (self.width / SHRINK + 1, self.height / SHRINK + 1)
    }

    pub fn all_features(&self, sx: usize, sy: usize) -> Vec<f32> {
        (0..N_FEATURES).map(|f| self.feature(sx, sy, f)).collect()
    }
}

/// Precomputed descriptors for repeated evaluation of one feature.
#[derive(Debug, Clone, Copy)]
pub(crate) struct FeatureProbe(Desc);

impl FeatureProbe {
    pub(crate) fn new(f: usize) -> Self {
        FeatureProbe(describe(f))
    }

    #[inline]
    pub(crate) fn eval(&self, src: &FeatureSource, sx: usize, sy: usize) -> f32 {
        src.eval(self.0, sx, sy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feature_count() {
        assert_eq!(N_REG, 3328);
        assert_eq!(N_PAIRS, 300);
        assert_eq!(N_FEATURES, 7228);
        let centres: Vec<usize> = (0..CELLS).map(cell_centre).collect();
        assert_eq!(centres, vec![1, 4, 8, 11, 14]);
    }

    #[test]
    fn pair_enumeration_is_a_bijection() {
        let mut seen = std::collections::HashSet::new();
        for f in N_REG..N_FEATURES {
            let Desc::Sim { c, a, b } = describe(f) else { panic!() };
            assert_ne!(a, b);
            assert!(seen.insert((c, a, b)));
        }
        assert_eq!(seen.len(), N_PAIRS * N_CHANNELS);
    }

    #[test]
    fn features_of_a_patch() {
        let img = Image::from_fn(40, 36, 3, |x, y, c| ((x * 3 + y * 5 + c) % 17) as f32 / 16.0);
        let src = FeatureSource::new(&img).unwrap();
        assert_eq!(src.origins(), (21, 19));
        let v = src.all_features(20, 18);
        assert_eq!(v.len(), N_FEATURES);
        assert!(v.iter().all(|x| x.is_finite()));
        // the regular block is the stack window itself
        assert_eq!(v[0], src.reg.get(0, 20, 18));
        assert_eq!(v[WIN * WIN + 3 * WIN + 2], src.reg.get(1, 22, 21));
    }
}
