use super::features::{FeatureProbe, FeatureSource, LABEL, RECIPE_VERSION};
use super::samples::Seg;
use super::train::ForestParams;

/// One decision tree. Node `i` is a leaf when `child[i] == 0`; otherwise its
/// children are `child[i]` (feature below threshold) and `child[i] + 1`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Tree {
    pub(crate) fid: Vec<u32>,
    pub(crate) thr: Vec<f32>,
    pub(crate) child: Vec<u32>,
    pub(crate) leaf: Vec<u32>,
    pub(crate) segs: Vec<Seg>,
}

pub(crate) const NO_LEAF: u32 = u32::MAX;

impl Tree {
    pub(crate) fn push_node(&mut self) -> u32 {
        self.fid.push(0);
        self.thr.push(0.0);
        self.child.push(0);
        self.leaf.push(NO_LEAF);
        (self.child.len() - 1) as u32
    }

    pub(crate) fn make_leaf(&mut self, id: u32, seg: Seg) {
        self.leaf[id as usize] = self.segs.len() as u32;
        self.segs.push(canonical(seg));
    }

    pub(crate) fn make_split(&mut self, id: u32, feature: u32, threshold: f32, left: u32) {
        let i = id as usize;
        self.fid[i] = feature;
        self.thr[i] = threshold;
        self.child[i] = left;
    }

    pub fn n_nodes(&self) -> usize {
        self.child.len()
    }

    pub fn n_leaves(&self) -> usize {
        self.segs.len()
    }

    pub fn depth(&self) -> usize {
        let mut best = 0;
        let mut stack = vec![(0usize, 0usize)];
        while let Some((n, d)) = stack.pop() {
            best = best.max(d);
            let c = self.child[n] as usize;
            if c != 0 {
                stack.push((c, d + 1));
                stack.push((c + 1, d + 1));
            }
        }
        best
    }

    /// Leaf index reached by the patch at (`sx`, `sy`) of `src`.
    #[inline]
    pub fn route(&self, src: &FeatureSource, sx: usize, sy: usize) -> usize {
        let mut n = 0usize;
        while self.child[n] != 0 {
            let v = FeatureProbe::new(self.fid[n] as usize).eval(src, sx, sy);
            n = self.child[n] as usize + (v >= self.thr[n]) as usize;
        }
        self.leaf[n] as usize
    }

    pub fn leaf_seg(&self, leaf: usize) -> &Seg {
        &self.segs[leaf]
    }
}

/// Relabels segments in raster order of first appearance.
pub(crate) fn canonical(seg: Seg) -> Seg {
    let mut map = [u8::MAX; 256];
    let mut next = 0u8;
    let mut out = seg;
    for v in out.iter_mut() {
        if map[*v as usize] == u8::MAX {
            map[*v as usize] = next;
            next += 1;
        }
        *v = map[*v as usize];
    }
    out
}

/// Boundary pixels of a segmentation: a pixel is an edge when its right or
/// lower neighbour carries a different label.
pub fn seg_edges(seg: &[u8]) -> [bool; LABEL * LABEL] {
    let mut e = [false; LABEL * LABEL];
    for y in 0..LABEL {
        for x in 0..LABEL {
            let i = y * LABEL + x;
            e[i] = (x + 1 < LABEL && seg[i] != seg[i + 1]) || (y + 1 < LABEL && seg[i] != seg[i + LABEL]);
        }
    }
    e
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructuredForest {
    pub(crate) trees: Vec<Tree>,
    pub(crate) params: ForestParams,
    pub(crate) seed: u64,
    pub(crate) recipe: u16,
}

impl StructuredForest {
    pub fn new(trees: Vec<Tree>, params: ForestParams, seed: u64) -> Self {
        StructuredForest {
            trees,
            params,
            seed,
            recipe: RECIPE_VERSION,
        }
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn recipe(&self) -> u16 {
        self.recipe
    }

    /// The same forest with `extra` appended to its trees.
    pub fn with_trees(&self, extra: Vec<Tree>) -> Self {
        let mut f = self.clone();
        f.trees.extend(extra);
        f
    }
}
