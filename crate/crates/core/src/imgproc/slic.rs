//! SLIC superpixels: k-means in (Lab color, scaled position) space from a
//! regular seed grid, followed by a connectivity pass.

use crate::error::{invalid, Result};
use crate::image::{EdgeMap, Image};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SlicParams {
    pub n_target: usize,
    pub compactness: f32,
    pub n_iters: usize,
}

impl Default for SlicParams {
    fn default() -> Self {
        SlicParams {
            n_target: 512,
            compactness: 10.0,
            n_iters: 10,
        }
    }
}

/// Segment labels in `[0, n_segments)`; every segment is 4-connected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuperpixelLabeling {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u32>,
    pub n_segments: usize,
}

impl SuperpixelLabeling {
    #[inline]
    pub fn label(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }
}

/// sRGB in `[0,1]` to CIE L*a*b* (D65). Gray images map to `L = 100 * I`.
fn lab_planes(img: &Image) -> [Vec<f32>; 3] {
    let n = img.width() * img.height();
    if img.channels() == 1 {
        return [
            img.plane(0).iter().map(|v| 100.0 * v).collect(),
            vec![0.0; n],
            vec![0.0; n],
        ];
    }
    let lin = |c: f32| {
        if c <= 0.04045 {
            c / 12.92
        } else {
            ((c + 0.055) / 1.055).powf(2.4)
        }
    };
    let f = |t: f32| {
        if t > 0.008856 {
            t.cbrt()
        } else {
            7.787 * t + 16.0 / 116.0
        }
    };
    let (r, g, b) = (img.plane(0), img.plane(1), img.plane(2));
    let mut out = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for i in 0..n {
        let (rl, gl, bl) = (lin(r[i]), lin(g[i]), lin(b[i]));
        let x = (0.412_456_4 * rl + 0.357_576_1 * gl + 0.180_437_5 * bl) / 0.950_47;
        let y = 0.212_672_9 * rl + 0.715_152_2 * gl + 0.072_175 * bl;
        let z = (0.019_333_9 * rl + 0.119_192 * gl + 0.950_304_1 * bl) / 1.088_83;
        let (fx, fy, fz) = (f(x), f(y), f(z));
        out[0][i] = 116.0 * fy - 16.0;
        out[1][i] = 500.0 * (fx - fy);
        out[2][i] = 200.0 * (fy - fz);
    }
    out
}

#[derive(Clone, Copy, Debug)]
struct Center {
    l: f32,
    a: f32,
    b: f32,
    x: f32,
    y: f32,
}

pub fn slic(img: &Image, params: &SlicParams) -> Result<SuperpixelLabeling> {
    let (w, h) = (img.width(), img.height());
    let n = w * h;
    if params.n_target == 0 {
        return Err(invalid!("n_target must be at least 1"));
    }
    if params.n_iters == 0 {
        return Err(invalid!("n_iters must be at least 1"));
    }
    if params.n_target > n {
        return Err(invalid!("n_target {} exceeds pixel count {n}", params.n_target));
    }
    let lab = lab_planes(img);
    let step = (n as f32 / params.n_target as f32).sqrt();
    let nx = ((w as f32 / step).round() as usize).clamp(1, w);
    let ny = ((h as f32 / step).round() as usize).clamp(1, h);
    let (sx, sy) = (w as f32 / nx as f32, h as f32 / ny as f32);
    let s = (sx * sy).sqrt();

    let mut centers = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let cx = (i as f32 + 0.5) * sx;
            let cy = (j as f32 + 0.5) * sy;
            let p = (cy as usize).min(h - 1) * w + (cx as usize).min(w - 1);
            centers.push(Center {
                l: lab[0][p],
                a: lab[1][p],
                b: lab[2][p],
                x: cx - 0.5,
                y: cy - 0.5,
            });
        }
    }
    // initial labels: the seed grid cell
    let mut labels: Vec<u32> = (0..n)
        .map(|p| {
            let (x, y) = (p % w, p / w);
            let i = ((x as f32 / sx) as usize).min(nx - 1);
            let j = ((y as f32 / sy) as usize).min(ny - 1);
            (j * nx + i) as u32
        })
        .collect();

    let spatial = (params.compactness / s).powi(2);
    let mut dist = vec![f32::INFINITY; n];
    for _ in 0..params.n_iters {
        dist.fill(f32::INFINITY);
        for (k, c) in centers.iter().enumerate() {
            let x0 = (c.x - sx).floor().max(0.0) as usize;
            let x1 = ((c.x + sx).ceil() as usize).min(w - 1);
            let y0 = (c.y - sy).floor().max(0.0) as usize;
            let y1 = ((c.y + sy).ceil() as usize).min(h - 1);
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let p = y * w + x;
                    let dc = (lab[0][p] - c.l).powi(2) + (lab[1][p] - c.a).powi(2) + (lab[2][p] - c.b).powi(2);
                    let ds = (x as f32 - c.x).powi(2) + (y as f32 - c.y).powi(2);
                    let d = dc + ds * spatial;
                    if d < dist[p] {
                        dist[p] = d;
                        labels[p] = k as u32;
                    }
                }
            }
        }
        let mut acc = vec![[0.0f64; 6]; centers.len()];
        for p in 0..n {
            let a = &mut acc[labels[p] as usize];
            a[0] += lab[0][p] as f64;
            a[1] += lab[1][p] as f64;
            a[2] += lab[2][p] as f64;
            a[3] += (p % w) as f64;
            a[4] += (p / w) as f64;
            a[5] += 1.0;
        }
        for (c, a) in centers.iter_mut().zip(&acc) {
            if a[5] > 0.0 {
                *c = Center {
                    l: (a[0] / a[5]) as f32,
                    a: (a[1] / a[5]) as f32,
                    b: (a[2] / a[5]) as f32,
                    x: (a[3] / a[5]) as f32,
                    y: (a[4] / a[5]) as f32,
                };
            }
        }
    }
    let min_size = ((s * s) / 8.0).floor().max(1.0) as usize;
    Ok(enforce_connectivity(w, h, &labels, min_size))
}

/// Keeps the largest 4-connected piece of every label (if it has at least
/// `min_size` pixels) and absorbs all other pieces into the largest
/// adjacent kept segment. Output labels are renumbered in raster order.
pub fn enforce_connectivity(w: usize, h: usize, labels: &[u32], min_size: usize) -> SuperpixelLabeling {
    let (comp, sizes) = components4(w, h, labels);
    let n_comp = sizes.len();
    let comp_label: Vec<u32> = {
        let mut v = vec![0; n_comp];
        for p in 0..w * h {
            v[comp[p] as usize] = labels[p];
        }
        v
    };
    // largest component per label
    let mut best: std::collections::HashMap<u32, usize> = Default::default();
    for c in 0..n_comp {
        let e = best.entry(comp_label[c]).or_insert(c);
        if sizes[c] > sizes[*e] {
            *e = c;
        }
    }
    let largest = (0..n_comp).max_by_key(|&c| (sizes[c], std::cmp::Reverse(c))).unwrap();
    let mut kept = vec![false; n_comp];
    for &c in best.values() {
        kept[c] = sizes[c] >= min_size;
    }
    kept[largest] = true;

    // adjacency between components
    let mut adj: Vec<Vec<u32>> = vec![Vec::new(); n_comp];
    for y in 0..h {
        for x in 0..w {
            let a = comp[y * w + x];
            if x + 1 < w {
                let b = comp[y * w + x + 1];
                if a != b {
                    adj[a as usize].push(b);
                    adj[b as usize].push(a);
                }
            }
            if y + 1 < h {
                let b = comp[(y + 1) * w + x];
                if a != b {
                    adj[a as usize].push(b);
                    adj[b as usize].push(a);
                }
            }
        }
    }
    for a in &mut adj {
        a.sort_unstable();
        a.dedup();
    }

    // union-find with kept roots; orphans attach to kept components
    let mut parent: Vec<usize> = (0..n_comp).collect();
    let mut size = sizes.clone();
    fn root(parent: &mut [usize], mut c: usize) -> usize {
        while parent[c] != c {
            parent[c] = parent[parent[c]];
            c = parent[c];
        }
        c
    }
    let mut pending: Vec<usize> = (0..n_comp).filter(|&c| !kept[c]).collect();
    while !pending.is_empty() {
        let mut next = Vec::new();
        let mut progressed = false;
        for &c in &pending {
            let mut target: Option<usize> = None;
            for &nb in &adj[c] {
                let r = root(&mut parent, nb as usize);
                if !kept[r] {
                    continue;
                }
                target = match target {
                    Some(t) if size[t] > size[r] || (size[t] == size[r] && t < r) => Some(t),
                    _ => Some(r),
                };
            }
            match target {
                Some(t) => {
                    parent[c] = t;
                    size[t] += size[c];
                    progressed = true;
                }
                None => next.push(c),
            }
        }
        assert!(progressed, "connectivity pass stalled");
        pending = next;
    }

    let mut remap: std::collections::HashMap<usize, u32> = Default::default();
    let mut out = vec![0u32; w * h];
    for p in 0..w * h {
        let r = root(&mut parent, comp[p] as usize);
        let next = remap.len() as u32;
        out[p] = *remap.entry(r).or_insert(next);
    }
    SuperpixelLabeling {
        width: w,
        height: h,
        labels: out,
        n_segments: remap.len(),
    }
}

/// 4-connected components of equal-label regions: per-pixel component id
/// and component sizes.
pub(crate) fn components4(w: usize, h: usize, labels: &[u32]) -> (Vec<u32>, Vec<usize>) {
    let mut comp = vec![u32::MAX; w * h];
    let mut sizes = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if comp[start] != u32::MAX {
            continue;
        }
        let id = sizes.len() as u32;
        let lab = labels[start];
        comp[start] = id;
        stack.push(start);
        let mut count = 0;
        while let Some(p) = stack.pop() {
            count += 1;
            let (x, y) = (p % w, p / w);
            let mut visit = |q: usize| {
                if comp[q] == u32::MAX && labels[q] == lab {
                    comp[q] = id;
                    stack.push(q);
                }
            };
            if x > 0 {
                visit(p - 1);
            }
            if x + 1 < w {
                visit(p + 1);
            }
            if y > 0 {
                visit(p - w);
            }
            if y + 1 < h {
                visit(p + w);
            }
        }
        sizes.push(count);
    }
    (comp, sizes)
}

/// Binary boundary map: 1 where a pixel has a 4-neighbor with a different label.
pub fn superpixel_edges(lab: &SuperpixelLabeling) -> EdgeMap {
    let (w, h) = (lab.width, lab.height);
    let mut out = vec![0.0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let l = lab.label(x, y);
            let differs = (x > 0 && lab.label(x - 1, y) != l)
                || (x + 1 < w && lab.label(x + 1, y) != l)
                || (y > 0 && lab.label(x, y - 1) != l)
                || (y + 1 < h && lab.label(x, y + 1) != l);
            if differs {
                out[y * w + x] = 1.0;
            }
        }
    }
    EdgeMap::from_clamped(w, h, out)
}
