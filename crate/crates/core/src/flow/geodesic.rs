//! Geodesic k-nearest matches under an edge-derived traversal cost.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{invalid, Result};
use crate::image::EdgeMap;
use crate::matching::MatchSet;

/// Base traversal cost of a pixel with zero edge strength.
pub const COST_EPS: f64 = 0.001;

#[derive(Debug, Clone, PartialEq)]
pub struct CostMap {
    pub width: usize,
    pub height: usize,
    pub cost: Vec<f64>,
}

impl CostMap {
    pub fn new(width: usize, height: usize, cost: Vec<f64>) -> Result<Self> {
        if cost.len() != width * height || width == 0 || height == 0 {
            return Err(invalid!("cost buffer does not match {width}x{height}"));
        }
        if cost.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(invalid!("costs must be finite and non-negative"));
        }
        Ok(CostMap { width, height, cost })
    }

    /// Cost of the step between 4-neighbours `p` and `q`.
    #[inline]
    pub fn step(&self, p: usize, q: usize) -> f64 {
        0.5 * (self.cost[p] + self.cost[q])
    }
}

/// `cost(p) = COST_EPS + alpha * edge(p)`.
pub fn edge_cost_map(edges: &EdgeMap, alpha: f64) -> Result<CostMap> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(invalid!("alpha must be non-negative, got {alpha}"));
    }
    let cost = edges.data().iter().map(|&e| COST_EPS + alpha * e as f64).collect();
    CostMap::new(edges.width(), edges.height(), cost)
}

/// Up to `k` (match index, distance) pairs per pixel, sorted by distance
/// and then match index.
#[derive(Debug, Clone)]
pub struct GeodesicNeighbors {
    k: usize,
    count: Vec<u32>,
    idx: Vec<u32>,
    dist: Vec<f64>,
}

impl GeodesicNeighbors {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self, pixel: usize) -> usize {
        self.count[pixel] as usize
    }

    pub fn get(&self, pixel: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let s = pixel * self.k;
        let n = self.count[pixel] as usize;
        self.idx[s..s + n]
            .iter()
            .zip(&self.dist[s..s + n])
            .map(|(&i, &d)| (i as usize, d))
    }
}

#[derive(PartialEq)]
struct Label {
    dist: f64,
    m: u32,
    p: u32,
}

impl Eq for Label {}

impl Ord for Label {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, o: &Self) -> Ordering {
        o.dist
            .total_cmp(&self.dist)
            .then(o.m.cmp(&self.m))
            .then(o.p.cmp(&self.p))
    }
}

impl PartialOrd for Label {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

/// Source pixel of a match: its rounded source location.
pub(crate) fn match_pixel(x: f32, y: f32, w: usize, h: usize) -> usize {
    let xi = (x.round() as usize).min(w - 1);
    let yi = (y.round() as usize).min(h - 1);
    yi * w + xi
}

/// Multi-source Dijkstra where every pixel keeps its first `k` distinct
/// settled sources. Each (pixel, match) label is settled at its exact
/// single-source shortest distance; labels leave the heap in
/// (distance, match index) order, which fixes ties.
pub fn geodesic_knn(cost: &CostMap, ms: &MatchSet, k: usize) -> Result<GeodesicNeighbors> {
    if k == 0 {
        return Err(invalid!("k must be at least 1"));
    }
    if ms.is_empty() {
        return Err(invalid!("cannot interpolate from an empty match set"));
    }
    let (w, h) = (cost.width, cost.height);
    if ms.source_dims() != (w, h) {
        return Err(invalid!("matches are for {:?}, cost map is {w}x{h}", ms.source_dims()));
    }
    let n = w * h;
    let mut out = GeodesicNeighbors {
        k,
        count: vec![0; n],
        idx: vec![0; n * k],
        dist: vec![0.0; n * k],
    };
    let mut heap = BinaryHeap::with_capacity(4 * ms.len());
    for (i, m) in ms.matches().iter().enumerate() {
        heap.push(Label {
            dist: 0.0,
            m: i as u32,
            p: match_pixel(m.x1, m.y1, w, h) as u32,
        });
    }
    while let Some(Label { dist, m, p }) = heap.pop() {
        let p = p as usize;
        let c = out.count[p] as usize;
        if c == k || out.idx[p * k..p * k + c].contains(&m) {
            continue;
        }
        out.idx[p * k + c] = m;
        out.dist[p * k + c] = dist;
        out.count[p] += 1;
        let (x, y) = (p % w, p / w);
        let mut relax = |q: usize| {
            let cq = out.count[q] as usize;
            if cq < k && !out.idx[q * k..q * k + cq].contains(&m) {
                heap.push(Label {
                    dist: dist + cost.step(p, q),
                    m,
                    p: q as u32,
                });
            }
        };
        if x > 0 {
            relax(p - 1);
        }
        if x + 1 < w {
            relax(p + 1);
        }
        if y > 0 {
            relax(p - w);
        }
        if y + 1 < h {
            relax(p + w);
        }
    }
    Ok(out)
}
