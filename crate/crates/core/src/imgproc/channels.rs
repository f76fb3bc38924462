//! Low-level feature channels for the structured forest.
//!
//! Recipe (version 1), 13 channels at `1/shrink` resolution:
//!
//! * 0..3   LUV color: the linear RGB -> XYZ map
//!          `X = .430574 R + .341550 G + .178325 B`,
//!          `Y = .222015 R + .706655 G + .071330 B`,
//!          `Z = .020183 R + .129553 G + .939180 B`,
//!          then `L = 116 Y^(1/3) - 16` (linear below `(6/29)^3`),
//!          `u = 13 L (u' - .197833)`, `v = 13 L (v' - .468331)`;
//!          all three divided by 270 and `u`, `v` offset by 88/270 and 134/270
//!          so they land roughly in `[0, 1]`.
//! * 3      normalized gradient magnitude, unblurred LUV
//! * 4..8   the same magnitude split into 4 orientation bins (0, 45, 90, 135 deg)
//! * 8      normalized gradient magnitude after a radius-2 triangle blur
//! * 9..13  orientation bins for the blurred scale
//!
//! Gradient magnitude is the max over the LUV channels of the centered
//! difference norm, divided by its radius-4 triangle average plus 0.01.

use std::f32::consts::PI;

use crate::error::{invalid, Result};
use crate::image::Image;

use super::filters::{centered_gradient, pool, tri_blur};

pub const N_CHANNELS: usize = 13;
pub const N_ORIENTS: usize = 4;
const GRAD_BLUR_RADII: [usize; 2] = [0, 2];
const NORM_RADIUS: usize = 4;
const NORM_CONST: f32 = 0.01;

/// Planar stack of feature channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStack {
    pub width: usize,
    pub height: usize,
    pub n_channels: usize,
    pub data: Vec<f32>,
}

impl ChannelStack {
    #[inline]
    pub fn get(&self, c: usize, x: usize, y: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    /// Triangle blur of every channel.
    pub fn blurred(&self, r: usize) -> ChannelStack {
        let data = (0..self.n_channels)
            .flat_map(|c| tri_blur(self.plane(c), self.width, self.height, r))
            .collect();
        ChannelStack { data, ..*self }
    }
}

/// RGB in `[0,1]` to the scaled LUV planes described in the module docs.
pub fn rgb_to_luv(img: &Image) -> [Vec<f32>; 3] {
    const Y0: f32 = (6.0 / 29.0) * (6.0 / 29.0) * (6.0 / 29.0);
    const A: f32 = (29.0 / 3.0) * (29.0 / 3.0) * (29.0 / 3.0);
    const UN: f32 = 0.197833;
    const VN: f32 = 0.468331;
    const MAXI: f32 = 1.0 / 270.0;
    let n = img.width() * img.height();
    let (r, g, b) = (img.plane(0), img.plane(1), img.plane(2));
    let mut out = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for i in 0..n {
        let x = 0.430574 * r[i] + 0.341550 * g[i] + 0.178325 * b[i];
        let y = 0.222015 * r[i] + 0.706655 * g[i] + 0.071330 * b[i];
        let z = 0.020183 * r[i] + 0.129553 * g[i] + 0.939180 * b[i];
        let l = if y > Y0 { 116.0 * y.cbrt() - 16.0 } else { y * A } * MAXI;
        let zz = 1.0 / (x + 15.0 * y + 3.0 * z + 1e-35);
        out[0][i] = l;
        out[1][i] = l * (13.0 * 4.0 * x * zz - 13.0 * UN) + 88.0 * MAXI;
        out[2][i] = l * (13.0 * 9.0 * y * zz - 13.0 * VN) + 134.0 * MAXI;
    }
    out
}

/// Unblurred channels (the input to both the regular and the
/// self-similarity feature stacks).
pub(crate) fn raw_channels(img: &Image, shrink: usize) -> Result<ChannelStack> {
    if img.channels() != 3 {
        return Err(invalid!(
            "feature channels need a 3-channel image, got {}",
            img.channels()
        ));
    }
    if shrink == 0 {
        return Err(invalid!("shrink must be positive"));
    }
    let (w, h) = (img.width(), img.height());
    let luv = rgb_to_luv(img);
    let mut planes: Vec<Vec<f32>> = Vec::with_capacity(N_CHANNELS);
    let (mut ow, mut oh) = (0, 0);
    for p in &luv {
        let (pooled, pw, ph) = pool(p, w, h, shrink);
        (ow, oh) = (pw, ph);
        planes.push(pooled);
    }
    for &r in &GRAD_BLUR_RADII {
        let smoothed: Vec<Vec<f32>> = luv.iter().map(|p| tri_blur(p, w, h, r)).collect();
        let mut mag = vec![0.0f32; w * h];
        let mut ori = vec![0.0f32; w * h];
        for p in &smoothed {
            let (gx, gy) = centered_gradient(p, w, h);
            for i in 0..w * h {
                let m = gx[i].hypot(gy[i]);
                if m > mag[i] {
                    mag[i] = m;
                    ori[i] = gy[i].atan2(gx[i]).rem_euclid(PI);
                }
            }
        }
        let norm = tri_blur(&mag, w, h, NORM_RADIUS);
        for (m, s) in mag.iter_mut().zip(&norm) {
            *m /= s + NORM_CONST;
        }
        planes.push(pool(&mag, w, h, shrink).0);
        for bin in 0..N_ORIENTS {
            let binned: Vec<f32> = mag
                .iter()
                .zip(&ori)
                .map(|(&m, &o)| if orient_bin(o) == bin { m } else { 0.0 })
                .collect();
            planes.push(pool(&binned, w, h, shrink).0);
        }
    }
    debug_assert_eq!(planes.len(), N_CHANNELS);
    Ok(ChannelStack {
        width: ow,
        height: oh,
        n_channels: N_CHANNELS,
        data: planes.concat(),
    })
}

#[inline]
fn orient_bin(theta: f32) -> usize {
    ((theta / (PI / N_ORIENTS as f32)).round() as usize) % N_ORIENTS
}

/// The 13-channel stack at `1/shrink` resolution, lightly blurred (triangle
/// radius 1).
pub fn feature_channels(img: &Image, shrink: usize) -> Result<ChannelStack> {
    Ok(raw_channels(img, shrink)?.blurred(1))
}
