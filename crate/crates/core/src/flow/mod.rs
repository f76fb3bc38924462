//! Dense flow from sparse matches, flow colorization, `.flo` I/O and
//! endpoint error.

mod color;
mod flo;
mod geodesic;
mod interp;

pub use color::{default_max_mag, flow_to_rgb, hsv_to_rgb, rgb_to_hue_sat};
pub use flo::{decode_flo, encode_flo, read_flo, write_flo};
pub use geodesic::{edge_cost_map, geodesic_knn, CostMap, GeodesicNeighbors, COST_EPS};
pub use interp::{interpolate, smooth_flow, InterpMode, InterpParams, SmoothParams};

use crate::error::{invalid, Result};
use crate::image::Mask;

/// Per-pixel displacement field. Pixels flagged invalid carry arbitrary
/// values.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    u: Vec<f32>,
    v: Vec<f32>,
    valid: Option<Vec<bool>>,
}

impl FlowField {
    pub fn new(width: usize, height: usize, u: Vec<f32>, v: Vec<f32>) -> Result<Self> {
        Self::with_valid(width, height, u, v, None)
    }

    pub fn with_valid(width: usize, height: usize, u: Vec<f32>, v: Vec<f32>, valid: Option<Vec<bool>>) -> Result<Self> {
        let n = width * height;
        if width == 0 || height == 0 {
            return Err(invalid!("flow field must be non-empty"));
        }
        if u.len() != n || v.len() != n || valid.as_ref().is_some_and(|m| m.len() != n) {
            return Err(invalid!("flow buffers do not match {width}x{height}"));
        }
        for i in 0..n {
            let ok = valid.as_ref().is_none_or(|m| m[i]);
            if ok && !(u[i].is_finite() && v[i].is_finite()) {
                return Err(invalid!("non-finite flow at pixel {i}"));
            }
        }
        Ok(FlowField {
            width,
            height,
            u,
            v,
            valid,
        })
    }

    pub fn constant(width: usize, height: usize, u: f32, v: f32) -> Self {
        FlowField {
            width,
            height,
            u: vec![u; width * height],
            v: vec![v; width * height],
            valid: None,
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> (f32, f32)) -> Result<Self> {
        let (mut u, mut v) = (Vec::with_capacity(width * height), Vec::with_capacity(width * height));
        for y in 0..height {
            for x in 0..width {
                let (a, b) = f(x, y);
                u.push(a);
                v.push(b);
            }
        }
        Self::new(width, height, u, v)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn u(&self) -> &[f32] {
        &self.u
    }

    pub fn v(&self) -> &[f32] {
        &self.v
    }

    pub fn valid(&self) -> Option<&[bool]> {
        self.valid.as_deref()
    }

    pub fn is_valid(&self, i: usize) -> bool {
        self.valid.as_ref().is_none_or(|m| m[i])
    }

    pub fn get(&self, x: usize, y: usize) -> (f32, f32) {
        let i = y * self.width + x;
        (self.u[i], self.v[i])
    }
}

/// Average endpoint error over pixels selected by `mask` (all pixels when
/// absent) where the ground truth is valid.
pub fn aee(pred: &FlowField, gt: &FlowField, mask: Option<&Mask>) -> Result<f64> {
    if (pred.width, pred.height) != (gt.width, gt.height) {
        return Err(invalid!(
            "flow sizes differ: {}x{} vs {}x{}",
            pred.width,
            pred.height,
            gt.width,
            gt.height
        ));
    }
    if let Some(m) = mask {
        if (m.width(), m.height()) != (gt.width, gt.height) {
            return Err(invalid!("mask size differs from flow size"));
        }
    }
    let mut sum = 0.0f64;
    let mut n = 0usize;
    for i in 0..gt.u.len() {
        if !gt.is_valid(i) || mask.is_some_and(|m| !m.bits()[i]) {
            continue;
        }
        let du = (pred.u[i] - gt.u[i]) as f64;
        let dv = (pred.v[i] - gt.v[i]) as f64;
        sum += du.hypot(dv);
        n += 1;
    }
    if n == 0 {
        return Err(invalid!("no pixels to evaluate"));
    }
    Ok(sum / n as f64)
}
