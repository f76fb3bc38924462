//! Model container: magic "SEDG", format version (u16), feature recipe
//! version (u16), parameter block, per-tree arrays, CRC32 of everything
//! before it. All little-endian.

use std::path::Path;

use super::features::{LABEL, N_FEATURES, PATCH, RECIPE_VERSION};
use super::forest::{StructuredForest, Tree, NO_LEAF};
use super::train::ForestParams;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"SEDG";
pub const FORMAT_VERSION: u16 = 1;

pub fn model_to_bytes(f: &StructuredForest) -> Vec<u8> {
    let mut b = Vec::new();
    b.extend_from_slice(MAGIC);
    b.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    b.extend_from_slice(&f.recipe.to_le_bytes());
    let p = &f.params;
    for v in [PATCH as u32, LABEL as u32, N_FEATURES as u32] {
        b.extend_from_slice(&v.to_le_bytes());
    }
    for v in [
        p.n_trees,
        p.max_depth,
        p.min_leaf,
        p.n_feature_probe,
        p.n_pixel_pairs,
        p.n_thresholds,
    ] {
        b.extend_from_slice(&(v as u32).to_le_bytes());
    }
    b.extend_from_slice(&p.frac_per_tree.to_le_bytes());
    b.extend_from_slice(&f.seed.to_le_bytes());
    b.extend_from_slice(&(f.trees.len() as u32).to_le_bytes());
    for t in &f.trees {
        b.extend_from_slice(&(t.n_nodes() as u32).to_le_bytes());
        for i in 0..t.n_nodes() {
            b.extend_from_slice(&t.fid[i].to_le_bytes());
            b.extend_from_slice(&t.thr[i].to_le_bytes());
            b.extend_from_slice(&t.child[i].to_le_bytes());
            b.extend_from_slice(&t.leaf[i].to_le_bytes());
        }
        b.extend_from_slice(&(t.segs.len() as u32).to_le_bytes());
        for s in &t.segs {
            b.extend_from_slice(s);
        }
    }
    let crc = crc32fast::hash(&b);
    b.extend_from_slice(&crc.to_le_bytes());
    b
}

struct Reader<'a> {
    b: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.b.len() {
            return Err(Error::ModelFormat("truncated model".into()));
        }
        let s = &self.b[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<StructuredForest> {
    let bad = |m: String| Error::ModelFormat(m);
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(bad("not a model file (bad magic or too short)".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    if crc32fast::hash(body) != stored {
        return Err(bad("checksum mismatch (truncated or corrupted model)".into()));
    }
    let mut r = Reader { b: body, pos: 4 };
    let format = r.u16()?;
    if format != FORMAT_VERSION {
        return Err(Error::Version(format!(
            "container format {format}, expected {FORMAT_VERSION}"
        )));
    }
    let recipe = r.u16()?;
    if recipe != RECIPE_VERSION {
        return Err(Error::Version(format!(
            "feature recipe {recipe}, this build extracts {RECIPE_VERSION}"
        )));
    }
    let (patch, label, nf) = (r.u32()?, r.u32()?, r.u32()?);
    if (patch, label, nf) != (PATCH as u32, LABEL as u32, N_FEATURES as u32) {
        return Err(bad(format!(
            "unsupported geometry patch {patch}, label {label}, features {nf}"
        )));
    }
    let params = ForestParams {
        n_trees: r.u32()? as usize,
        max_depth: r.u32()? as usize,
        min_leaf: r.u32()? as usize,
        n_feature_probe: r.u32()? as usize,
        n_pixel_pairs: r.u32()? as usize,
        n_thresholds: r.u32()? as usize,
        frac_per_tree: r.f32()?,
    };
    let seed = r.u64()?;
    let n_trees = r.u32()? as usize;
    if n_trees == 0 {
        return Err(bad("model has no trees".into()));
    }
    let mut trees = Vec::with_capacity(n_trees);
    for t in 0..n_trees {
        let n = r.u32()? as usize;
        if n == 0 || n > body.len() {
            return Err(bad(format!("tree {t}: bad node count {n}")));
        }
        let mut tree = Tree::default();
        for _ in 0..n {
            tree.fid.push(r.u32()?);
            tree.thr.push(r.f32()?);
            tree.child.push(r.u32()?);
            tree.leaf.push(r.u32()?);
        }
        let n_leaves = r.u32()? as usize;
        for _ in 0..n_leaves {
            tree.segs.push(r.take(LABEL * LABEL)?.try_into().unwrap());
        }
        validate_tree(&tree).map_err(|m| bad(format!("tree {t}: {m}")))?;
        trees.push(tree);
    }
    if r.pos != body.len() {
        return Err(bad("trailing bytes after the last tree".into()));
    }
    Ok(StructuredForest {
        trees,
        params,
        seed,
        recipe,
    })
}

fn validate_tree(t: &Tree) -> std::result::Result<(), String> {
    let n = t.n_nodes();
    for i in 0..n {
        let c = t.child[i] as usize;
        if c == 0 {
            if t.leaf[i] == NO_LEAF || t.leaf[i] as usize >= t.segs.len() {
                return Err(format!("node {i}: bad leaf index"));
            }
        } else {
            if c <= i || c + 1 >= n {
                return Err(format!("node {i}: bad child {c}"));
            }
            if t.fid[i] as usize >= N_FEATURES {
                return Err(format!("node {i}: feature {} out of range", t.fid[i]));
            }
        }
    }
    Ok(())
}

pub fn save_model(f: &StructuredForest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, model_to_bytes(f)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<StructuredForest> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    model_from_bytes(&bytes)
}
