//! Motion edges: edges of colorized flow, snapped to superpixel boundaries
//! and turned into training supervision.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bipartite::max_matching;
use crate::error::{invalid, Error, Result};
use crate::flow::{flow_to_rgb, FlowField};
use crate::image::{EdgeMap, Image, Mask};
use crate::imgproc::{slic, superpixel_edges, SlicParams};
use crate::sedge::{detect, DetectOptions, EdgeDetector};

/// Edges of the colorized flow. `max_mag` fixes the saturation scale
/// (default: the field's 99th-percentile magnitude).
pub fn motion_edges(det: &EdgeDetector, f: &FlowField, max_mag: Option<f32>, opts: &DetectOptions) -> Result<EdgeMap> {
    detect(det, &flow_to_rgb(f, max_mag)?, opts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignParams {
    /// Matching radius in pixels.
    pub tol: f32,
    /// Motion edge pixels below this strength are ignored.
    pub pre_threshold: f32,
    /// Image area per superpixel.
    pub area_per_superpixel: usize,
    pub compactness: f32,
    pub slic_iters: usize,
}

impl Default for AlignParams {
    fn default() -> Self {
        AlignParams {
            tol: 3.0,
            pre_threshold: 0.3,
            area_per_superpixel: 512,
            compactness: 10.0,
            slic_iters: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub iteration: usize,
    pub frame: String,
    /// Motion pixels that found a partner.
    pub matched: usize,
    /// Matched pixels whose partner is a different location.
    pub shifted: usize,
    pub discarded: usize,
    pub collisions: usize,
    pub candidates: usize,
    pub n_superpixels: usize,
    pub tol: f32,
    pub pre_threshold: f32,
    /// Saturation scale used to colorize the flow, when known.
    pub max_mag: Option<f32>,
}

/// Aligned motion edges plus how they were obtained.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionEdgeMap {
    pub edges: EdgeMap,
    pub provenance: Provenance,
}

impl MotionEdgeMap {
    /// Writes `<stem>.png` (8-bit strengths) and `<stem>.json` (provenance).
    pub fn write(&self, png: impl AsRef<Path>, json: impl AsRef<Path>) -> Result<()> {
        self.edges.write_png(png)?;
        let json = json.as_ref();
        let text = serde_json::to_string_pretty(&self.provenance)?;
        std::fs::write(json, text).map_err(|e| Error::io(json, e))
    }

    pub fn read(png: impl AsRef<Path>, json: impl AsRef<Path>) -> Result<Self> {
        let edges = EdgeMap::read_png(png)?.mark_thinned();
        let json = json.as_ref();
        let text = std::fs::read_to_string(json).map_err(|e| Error::io(json, e))?;
        Ok(MotionEdgeMap {
            edges,
            provenance: serde_json::from_str(&text)?,
        })
    }
}

/// Snaps the thinned motion edges `g` onto the boundaries of SLIC
/// superpixels of `img`.
pub fn align_motion_edges(g: &EdgeMap, img: &Image, params: &AlignParams) -> Result<MotionEdgeMap> {
    if (g.width(), g.height()) != (img.width(), img.height()) {
        return Err(invalid!("motion edges and image sizes differ"));
    }
    let n_target = (img.width() * img.height() / params.area_per_superpixel.max(1)).max(1);
    let sp = slic(
        img,
        &SlicParams {
            n_target,
            compactness: params.compactness,
            n_iters: params.slic_iters,
        },
    )?;
    let target = superpixel_edges(&sp).binarize(0.5);
    let mut out = align_to_mask(g, &target, params)?;
    out.provenance.n_superpixels = sp.n_segments;
    Ok(out)
}

/// Maximum one-to-one matching of motion edge pixels (strength at least
/// `pre_threshold`) to `target` pixels within `tol`. Matched pixels move to
/// their partner keeping their strength; unmatched ones are dropped.
///
/// Motion pixels are visited by decreasing strength and first take their
/// nearest free partner; augmenting paths then raise the matching to
/// maximum cardinality without unmatching anyone.
pub fn align_to_mask(g: &EdgeMap, target: &Mask, params: &AlignParams) -> Result<MotionEdgeMap> {
    if !g.is_thinned() {
        return Err(invalid!("motion edges must be thinned before alignment"));
    }
    if !(params.tol >= 0.0) {
        return Err(invalid!("tolerance must be non-negative"));
    }
    let (w, h) = (g.width(), g.height());
    if (target.width(), target.height()) != (w, h) {
        return Err(invalid!("target mask size differs"));
    }
    let mut motion: Vec<usize> = (0..w * h)
        .filter(|&i| g.data()[i] > 0.0 && g.data()[i] >= params.pre_threshold)
        .collect();
    motion.sort_by(|&a, &b| g.data()[b].total_cmp(&g.data()[a]).then(a.cmp(&b)));
    // right-hand vertices: target pixels, indexed densely
    let mut right_id = vec![usize::MAX; w * h];
    let mut right_px = Vec::new();
    for (i, &t) in target.bits().iter().enumerate() {
        if t {
            right_id[i] = right_px.len();
            right_px.push(i);
        }
    }
    let r = params.tol.floor() as isize;
    let tol2 = params.tol * params.tol;
    let mut offsets: Vec<(isize, isize, f32)> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy, (dx * dx + dy * dy) as f32)))
        .filter(|o| o.2 <= tol2)
        .collect();
    offsets.sort_by(|a, b| a.2.total_cmp(&b.2).then((a.1, a.0).cmp(&(b.1, b.0))));
    let adj: Vec<Vec<usize>> = motion
        .iter()
        .map(|&p| {
            let (x, y) = ((p % w) as isize, (p / w) as isize);
            offsets
                .iter()
                .filter_map(|&(dx, dy, _)| {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        return None;
                    }
                    let id = right_id[ny as usize * w + nx as usize];
                    (id != usize::MAX).then_some(id)
                })
                .collect()
        })
        .collect();
    let mut taken = vec![false; right_px.len()];
    let greedy: Vec<Option<usize>> = adj
        .iter()
        .map(|cands| {
            let v = cands.iter().copied().find(|&v| !taken[v]);
            if let Some(v) = v {
                taken[v] = true;
            }
            v
        })
        .collect();
    let matching = max_matching(&adj, right_px.len(), Some(&greedy));
    let mut strength = vec![0.0f32; w * h];
    let mut prov = Provenance {
        candidates: motion.len(),
        tol: params.tol,
        pre_threshold: params.pre_threshold,
        ..Default::default()
    };
    for (k, m) in matching.iter().enumerate() {
        let p = motion[k];
        match m {
            Some(v) => {
                let q = right_px[*v];
                prov.matched += 1;
                if q != p {
                    prov.shifted += 1;
                }
                if strength[q] > 0.0 {
                    prov.collisions += 1;
                }
                strength[q] = strength[q].max(g.data()[p]);
            }
            None => prov.discarded += 1,
        }
    }
    Ok(MotionEdgeMap {
        edges: EdgeMap::new(w, h, strength)?.mark_thinned(),
        provenance: prov,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarvestParams {
    pub pos_threshold: f32,
    /// Raw motion edges at or above this strength also block negatives.
    pub neg_threshold: f32,
    pub exclusion_radius: f32,
}

impl Default for HarvestParams {
    fn default() -> Self {
        HarvestParams {
            pos_threshold: 0.8,
            neg_threshold: 0.1,
            exclusion_radius: 8.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Harvest {
    /// Aligned strengths at or above the positive threshold, zero elsewhere.
    pub supervision: EdgeMap,
    /// Pixels where negatives must not be centred.
    pub exclusion: Mask,
}

/// Positives are the confident aligned edges; negatives stay at least
/// `exclusion_radius` away from every aligned edge and from every raw motion
/// edge of strength `neg_threshold` or more.
pub fn harvest_supervision(aligned: &MotionEdgeMap, raw: Option<&EdgeMap>, params: &HarvestParams) -> Result<Harvest> {
    let e = &aligned.edges;
    let (w, h) = (e.width(), e.height());
    let supervision = EdgeMap::new(
        w,
        h,
        e.data()
            .iter()
            .map(|&v| if v >= params.pos_threshold { v } else { 0.0 })
            .collect(),
    )?
    .mark_thinned();
    let mut blocked = Mask::new(w, h, e.data().iter().map(|&v| v > 0.0).collect())?;
    if let Some(raw) = raw {
        if (raw.width(), raw.height()) != (w, h) {
            return Err(invalid!("raw motion edge size differs"));
        }
        blocked = blocked.union(&raw.binarize(params.neg_threshold));
    }
    Ok(Harvest {
        supervision,
        exclusion: blocked.dilate(params.exclusion_radius),
    })
}
