use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::{FeatureProbe, FeatureSource, LABEL, N_FEATURES};
use super::forest::{StructuredForest, Tree};
use super::samples::{Sample, Seg, TrainingSet};
use crate::error::{Error, Result};
use crate::rng::stream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub frac_per_tree: f32,
    pub min_leaf: usize,
    pub n_feature_probe: usize,
    /// Pixel pairs sampled per node for the structured-to-binary mapping.
    pub n_pixel_pairs: usize,
    pub n_thresholds: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 8,
            max_depth: 64,
            frac_per_tree: 0.25,
            min_leaf: 8,
            n_feature_probe: 1000,
            n_pixel_pairs: 256,
            n_thresholds: 8,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.n_trees == 0 {
            return bad("n_trees must be at least 1");
        }
        if self.max_depth == 0 || self.max_depth > u16::MAX as usize {
            return bad("max_depth must be in 1..=65535");
        }
        if !(self.frac_per_tree > 0.0 && self.frac_per_tree <= 1.0) {
            return bad("frac_per_tree must be in (0, 1]");
        }
        if self.min_leaf == 0 || self.n_feature_probe == 0 || self.n_pixel_pairs == 0 || self.n_thresholds == 0 {
            return bad("min_leaf, n_feature_probe, n_pixel_pairs and n_thresholds must be positive");
        }
        Ok(())
    }
}

// Samples used to estimate the principal direction and split thresholds.
const PCA_SUBSAMPLE: usize = 256;
const THRESHOLD_SUBSAMPLE: usize = 256;
const POWER_ITERS: usize = 30;

/// Trains every tree on its own balanced random subset. The result depends
/// only on the samples, the parameters and `seed`.
pub fn train_forest(set: &TrainingSet, params: &ForestParams, seed: u64) -> Result<StructuredForest> {
    params.validate()?;
    let pos: Vec<u32> = (0..set.samples.len() as u32)
        .filter(|&i| set.samples[i as usize].is_positive())
        .collect();
    let neg: Vec<u32> = (0..set.samples.len() as u32)
        .filter(|&i| !set.samples[i as usize].is_positive())
        .collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::Training(format!(
            "both classes are required ({} positives, {} negatives)",
            pos.len(),
            neg.len()
        )));
    }
    let per_class = ((params.frac_per_tree as f64 * pos.len().min(neg.len()) as f64).round() as usize).max(1);
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream(seed, &[0x7ee, t as u64]);
            let mut idx: Vec<u32> = sample_indices(&mut rng, pos.len(), per_class)
                .into_iter()
                .map(|i| pos[i])
                .collect();
            idx.extend(
                sample_indices(&mut rng, neg.len(), per_class)
                    .into_iter()
                    .map(|i| neg[i]),
            );
            idx.sort_unstable();
            TreeBuilder::new(set, params, rng).build(idx)
        })
        .collect();
    Ok(StructuredForest::new(trees, params.clone(), seed))
}

struct TreeBuilder<'a> {
    sources: &'a [FeatureSource],
    samples: &'a [Sample],
    p: &'a ForestParams,
    rng: ChaCha8Rng,
    tree: Tree,
}

enum Node {
    Leaf,
    Split { feature: usize, threshold: f32 },
}

impl<'a> TreeBuilder<'a> {
    fn new(set: &'a TrainingSet, p: &'a ForestParams, rng: ChaCha8Rng) -> Self {
        TreeBuilder {
            sources: &set.sources,
            samples: &set.samples,
            p,
            rng,
            tree: Tree::default(),
        }
    }

    fn build(mut self, root: Vec<u32>) -> Tree {
        // depth-first, left child first; node ids follow creation order
        let root_id = self.tree.push_node();
        let mut work = vec![(root_id, root, 0usize)];
        while let Some((id, idx, depth)) = work.pop() {
            let (z, pairs_ok) = self.pair_indicators(&idx);
            let decision = if depth >= self.p.max_depth || idx.len() < 2 * self.p.min_leaf || !pairs_ok {
                Node::Leaf
            } else {
                match self.pseudo_labels(&z, idx.len()) {
                    Some(labels) => self.best_split(&idx, &labels),
                    None => Node::Leaf,
                }
            };
            match decision {
                Node::Leaf => {
                    let seg = self.medoid(&idx, &z);
                    self.tree.make_leaf(id, seg);
                }
                Node::Split { feature, threshold } => {
                    let probe = FeatureProbe::new(feature);
                    let (left, right): (Vec<u32>, Vec<u32>) =
                        idx.iter().partition(|&&i| self.value(&probe, i) < threshold);
                    let l = self.tree.push_node();
                    let r = self.tree.push_node();
                    self.tree.make_split(id, feature as u32, threshold, l);
                    debug_assert_eq!(r, l + 1);
                    work.push((r, right, depth + 1));
                    work.push((l, left, depth + 1));
                }
            }
        }
        self.tree
    }

    #[inline]
    fn value(&self, probe: &FeatureProbe, i: u32) -> f32 {
        let s = &self.samples[i as usize];
        probe.eval(&self.sources[s.source as usize], s.sx as usize, s.sy as usize)
    }

    /// Per-sample indicator vectors `[seg(a) != seg(b)]` over freshly drawn
    /// pixel pairs, flattened row-major. The flag is false when every sample
    /// has the same vector (structurally pure node).
    fn pair_indicators(&mut self, idx: &[u32]) -> (Vec<u8>, bool) {
        let m = self.p.n_pixel_pairs;
        let n = LABEL * LABEL;
        let pairs: Vec<(usize, usize)> = (0..m)
            .map(|_| {
                let a = self.rng.gen_range(0..n);
                let mut b = self.rng.gen_range(0..n - 1);
                if b >= a {
                    b += 1;
                }
                (a, b)
            })
            .collect();
        let mut z = Vec::with_capacity(idx.len() * m);
        for &i in idx {
            let seg = self.samples[i as usize].seg_or_zero();
            z.extend(pairs.iter().map(|&(a, b)| (seg[a] != seg[b]) as u8));
        }
        let first = &z[..m];
        let varied = z.chunks(m).any(|row| row != first);
        (z, varied)
    }

    /// Sign of the projection on the first principal direction.
    fn pseudo_labels(&mut self, z: &[u8], n: usize) -> Option<Vec<bool>> {
        let m = self.p.n_pixel_pairs;
        let sub: Vec<usize> = if n > PCA_SUBSAMPLE {
            let mut s = sample_indices(&mut self.rng, n, PCA_SUBSAMPLE).into_vec();
            s.sort_unstable();
            s
        } else {
            (0..n).collect()
        };
        let mut mean = vec![0.0f64; m];
        for &r in &sub {
            for (acc, &v) in mean.iter_mut().zip(&z[r * m..(r + 1) * m]) {
                *acc += v as f64;
            }
        }
        mean.iter_mut().for_each(|v| *v /= sub.len() as f64);
        let centred: Vec<Vec<f64>> = sub
            .iter()
            .map(|&r| {
                z[r * m..(r + 1) * m]
                    .iter()
                    .zip(&mean)
                    .map(|(&v, mu)| v as f64 - mu)
                    .collect()
            })
            .collect();
        // power iteration on the scatter matrix C^T C
        let mut dir: Vec<f64> = (0..m).map(|j| 1.0 + (j % 7) as f64 * 0.01).collect();
        for _ in 0..POWER_ITERS {
            let proj: Vec<f64> = centred.iter().map(|row| dot(row, &dir)).collect();
            let mut next = vec![0.0; m];
            for (row, &p) in centred.iter().zip(&proj) {
                for (acc, &v) in next.iter_mut().zip(row) {
                    *acc += p * v;
                }
            }
            let norm = dot(&next, &next).sqrt();
            if norm < 1e-12 {
                return None;
            }
            dir = next.into_iter().map(|v| v / norm).collect();
        }
        let offset = dot(&mean, &dir);
        let labels: Vec<bool> = z
            .chunks(m)
            .map(|row| row.iter().zip(&dir).map(|(&v, d)| v as f64 * d).sum::<f64>() - offset > 0.0)
            .collect();
        let n_true = labels.iter().filter(|&&b| b).count();
        (n_true > 0 && n_true < labels.len()).then_some(labels)
    }

    fn best_split(&mut self, idx: &[u32], labels: &[bool]) -> Node {
        let n = idx.len();
        let n1 = labels.iter().filter(|&&b| b).count();
        let parent = gini(n1, n);
        let mut best: Option<(f64, usize, f32)> = None;
        let mut values = vec![0.0f32; n];
        let mut sub_vals = Vec::with_capacity(THRESHOLD_SUBSAMPLE);
        for _ in 0..self.p.n_feature_probe {
            let f = self.rng.gen_range(0..N_FEATURES);
            let probe = FeatureProbe::new(f);
            for (v, &i) in values.iter_mut().zip(idx) {
                *v = self.value(&probe, i);
            }
            sub_vals.clear();
            if n > THRESHOLD_SUBSAMPLE {
                for _ in 0..THRESHOLD_SUBSAMPLE {
                    sub_vals.push(values[self.rng.gen_range(0..n)]);
                }
            } else {
                sub_vals.extend_from_slice(&values);
            }
            sub_vals.sort_unstable_by(f32::total_cmp);
            let k = self.p.n_thresholds;
            let mut last = f32::NEG_INFINITY;
            for q in 0..k {
                let t = sub_vals[((q + 1) * sub_vals.len() / (k + 1)).min(sub_vals.len() - 1)];
                if t <= last {
                    continue;
                }
                last = t;
                let (mut nl, mut nl1) = (0usize, 0usize);
                for (v, &l) in values.iter().zip(labels) {
                    if *v < t {
                        nl += 1;
                        nl1 += l as usize;
                    }
                }
                let nr = n - nl;
                if nl < self.p.min_leaf || nr < self.p.min_leaf {
                    continue;
                }
                let gain =
                    parent - (nl as f64 / n as f64) * gini(nl1, nl) - (nr as f64 / n as f64) * gini(n1 - nl1, nr);
                if gain > 1e-12 && best.is_none_or(|b| gain > b.0) {
                    best = Some((gain, f, t));
                }
            }
        }
        match best {
            Some((_, feature, threshold)) => Node::Split { feature, threshold },
            None => Node::Leaf,
        }
    }

    /// Label of the sample whose indicator vector is closest to the mean.
    fn medoid(&self, idx: &[u32], z: &[u8]) -> Seg {
        let m = self.p.n_pixel_pairs;
        let mut mean = vec![0.0f64; m];
        for row in z.chunks(m) {
            for (acc, &v) in mean.iter_mut().zip(row) {
                *acc += v as f64;
            }
        }
        mean.iter_mut().for_each(|v| *v /= idx.len() as f64);
        let mut best = (f64::INFINITY, 0usize);
        for (r, row) in z.chunks(m).enumerate() {
            let d: f64 = row.iter().zip(&mean).map(|(&v, mu)| (v as f64 - mu).powi(2)).sum();
            if d < best.0 {
                best = (d, r);
            }
        }
        *self.samples[idx[best.1] as usize].seg_or_zero()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn gini(n1: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = n1 as f64 / n as f64;
    2.0 * p * (1.0 - p)
}
