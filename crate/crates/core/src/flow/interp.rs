use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use super::geodesic::{edge_cost_map, geodesic_knn};
use super::FlowField;
use crate::error::{invalid, Result};
use crate::image::EdgeMap;
use crate::matching::MatchSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InterpMode {
    /// Nadaraya-Watson: kernel-weighted mean of neighbour displacements.
    Nw,
    /// Locally affine: weighted least-squares affine fit.
    La,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterpParams {
    pub mode: InterpMode,
    /// Neighbour count; `None` picks 25 for NW and 100 for LA.
    pub k: Option<usize>,
    pub alpha: f64,
    /// Kernel bandwidth; `None` means `0.7 * alpha`.
    pub kernel_bandwidth: Option<f64>,
}

impl Default for InterpParams {
    fn default() -> Self {
        InterpParams {
            mode: InterpMode::La,
            k: None,
            alpha: 100.0,
            kernel_bandwidth: None,
        }
    }
}

impl InterpParams {
    pub fn effective_k(&self) -> usize {
        self.k.unwrap_or(match self.mode {
            InterpMode::Nw => 25,
            InterpMode::La => 100,
        })
    }

    pub fn effective_bandwidth(&self) -> f64 {
        self.kernel_bandwidth.unwrap_or(0.7 * self.alpha)
    }

    pub fn validate(&self) -> Result<()> {
        if self.effective_k() == 0 {
            return Err(invalid!("k must be at least 1"));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(invalid!("alpha must be non-negative"));
        }
        let bw = self.effective_bandwidth();
        if !(bw > 0.0 && bw.is_finite()) {
            return Err(invalid!("kernel bandwidth must be positive, got {bw}"));
        }
        Ok(())
    }
}

const MAX_CONDITION: f64 = 1e8;

/// Dense flow over the source frame from the geodesically nearest matches.
pub fn interpolate(ms: &MatchSet, edges: &EdgeMap, params: &InterpParams) -> Result<FlowField> {
    params.validate()?;
    if ms.is_empty() {
        return Err(invalid!("cannot interpolate from an empty match set"));
    }
    let (w, h) = (edges.width(), edges.height());
    let cost = edge_cost_map(edges, params.alpha)?;
    let nb = geodesic_knn(&cost, ms, params.effective_k())?;
    let bw = params.effective_bandwidth();
    let m = ms.matches();
    let mut u = vec![0.0f32; w * h];
    let mut v = vec![0.0f32; w * h];
    let mut wts: Vec<(usize, f64)> = Vec::with_capacity(params.effective_k());
    for p in 0..w * h {
        wts.clear();
        let d0 = nb.get(p).next().map_or(0.0, |(_, d)| d);
        // shifting by the nearest distance leaves the normalized weights unchanged
        wts.extend(nb.get(p).map(|(i, d)| (i, (-(d - d0) / bw).exp())));
        let (px, py) = ((p % w) as f64, (p / w) as f64);
        let fit = match params.mode {
            InterpMode::La => affine_fit(&wts, m, px, py),
            InterpMode::Nw => None,
        };
        let (fu, fv) = fit.unwrap_or_else(|| {
            let (mut su, mut sv, mut sw) = (0.0, 0.0, 0.0);
            for &(i, wi) in &wts {
                let (du, dv) = m[i].displacement();
                su += wi * du as f64;
                sv += wi * dv as f64;
                sw += wi;
            }
            (su / sw, sv / sw)
        });
        u[p] = fu as f32;
        v[p] = fv as f32;
    }
    FlowField::new(w, h, u, v)
}

/// Weighted affine fit in coordinates centred on (`px`, `py`), so the fitted
/// value at the pixel is the intercept.
fn affine_fit(wts: &[(usize, f64)], m: &[crate::matching::Match], px: f64, py: f64) -> Option<(f64, f64)> {
    if wts.len() < 3 {
        return None;
    }
    let mut a = Matrix3::<f64>::zeros();
    let mut bu = Vector3::<f64>::zeros();
    let mut bv = Vector3::<f64>::zeros();
    for &(i, wi) in wts {
        let r = Vector3::new(1.0, m[i].x1 as f64 - px, m[i].y1 as f64 - py);
        let (du, dv) = m[i].displacement();
        a += wi * r * r.transpose();
        bu += (wi * du as f64) * r;
        bv += (wi * dv as f64) * r;
    }
    let eig = SymmetricEigen::new(a).eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    if !(lo > 0.0) || hi / lo > MAX_CONDITION {
        return None;
    }
    let chol = a.cholesky()?;
    Some((chol.solve(&bu)[0], chol.solve(&bv)[0]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoothParams {
    pub n_iters: usize,
    /// Edge stopping strength: neighbour weight `exp(-alpha * edge)`.
    pub alpha: f32,
}

impl Default for SmoothParams {
    fn default() -> Self {
        SmoothParams {
            n_iters: 5,
            alpha: 10.0,
        }
    }
}

const SMOOTH_STEP: f32 = 0.2;

/// Edge-stopped Jacobi diffusion. Each update moves a pixel towards its
/// in-bounds 4-neighbours with weights `exp(-alpha * mean edge)`; weights are
/// symmetric, so the mean is preserved and variance never increases.
pub fn smooth_flow(f: &FlowField, edges: &EdgeMap, params: &SmoothParams) -> Result<FlowField> {
    let (w, h) = (f.width(), f.height());
    if (edges.width(), edges.height()) != (w, h) {
        return Err(invalid!("edge map and flow sizes differ"));
    }
    if params.n_iters == 0 {
        return Ok(f.clone());
    }
    let e = edges.data();
    let weight = |p: usize, q: usize| (-params.alpha * 0.5 * (e[p] + e[q])).exp();
    // right and down neighbour weights
    let wr: Vec<f32> = (0..w * h)
        .map(|p| if p % w + 1 < w { weight(p, p + 1) } else { 0.0 })
        .collect();
    let wd: Vec<f32> = (0..w * h)
        .map(|p| if p / w + 1 < h { weight(p, p + w) } else { 0.0 })
        .collect();
    let valid = |p: usize| f.is_valid(p);
    let mut cur = [f.u().to_vec(), f.v().to_vec()];
    let mut next = cur.clone();
    for _ in 0..params.n_iters {
        for c in 0..2 {
            let (src, dst) = (&cur[c], &mut next[c]);
            for p in 0..w * h {
                if !valid(p) {
                    dst[p] = src[p];
                    continue;
                }
                let mut delta = 0.0f32;
                let mut add = |q: usize, wq: f32| {
                    if valid(q) {
                        delta += wq * (src[q] - src[p]);
                    }
                };
                if p % w + 1 < w {
                    add(p + 1, wr[p]);
                }
                if p % w > 0 {
                    add(p - 1, wr[p - 1]);
                }
                if p / w + 1 < h {
                    add(p + w, wd[p]);
                }
                if p >= w {
                    add(p - w, wd[p - w]);
                }
                dst[p] = src[p] + SMOOTH_STEP * delta;
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    let [u, v] = cur;
    FlowField::with_valid(w, h, u, v, f.valid().map(|m| m.to_vec()))
}
