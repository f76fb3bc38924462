use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::matching::{block_match, filter_frame_pair, read_matches, write_matches, FrameVerdict, RejectReason};

/// Directory names under the dataset root that never hold frames.
const RESERVED_DIRS: [&str; 4] = ["gt", "matches", "flow", "run"];
const IMAGE_EXTS: [&str; 6] = ["png", "jpg", "jpeg", "ppm", "pgm", "bmp"];

/// An accepted pair of consecutive frames. Artifacts of the pair are keyed
/// by `id` and describe `frame_a`.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePair {
    pub id: String,
    pub frame_a: PathBuf,
    pub frame_b: PathBuf,
    pub matches: PathBuf,
    /// Ground-truth edges of `frame_a`: a PNG or a directory of per-annotator PNGs.
    pub gt: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub root: PathBuf,
    /// Accepted pairs sorted by id.
    pub pairs: Vec<FramePair>,
    pub rejected: Vec<(String, RejectReason)>,
    /// SHA-256 of the manifest, covering frame and match file contents.
    pub manifest_hash: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ManifestEntry {
    id: String,
    frame_a: String,
    frame_b: String,
    matches: String,
    frame_a_sha256: String,
    frame_b_sha256: String,
    matches_sha256: String,
    n_matches: usize,
    verdict: FrameVerdict,
}

struct Candidate {
    id: String,
    a: PathBuf,
    b: PathBuf,
    matches: Option<PathBuf>,
}

fn is_image(p: &Path) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTS.contains(&e.to_ascii_lowercase().as_str()))
}

fn id_for(root: &Path, frame: &Path) -> String {
    let rel = frame.strip_prefix(root).unwrap_or(frame).with_extension("");
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("_")
}

fn list_dir(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|e| Error::io(dir, e)))
        .collect::<Result<_>>()?;
    out.sort();
    Ok(out)
}

/// Consecutive frames of the root directory and of each immediate
/// subdirectory, in file name order.
fn scan_pairs(root: &Path) -> Result<Vec<Candidate>> {
    let mut dirs = vec![root.to_path_buf()];
    for p in list_dir(root)? {
        let reserved = p
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| RESERVED_DIRS.contains(&n));
        if p.is_dir() && !reserved {
            dirs.push(p);
        }
    }
    let mut out = Vec::new();
    for d in dirs {
        let frames: Vec<PathBuf> = list_dir(&d)?
            .into_iter()
            .filter(|p| p.is_file() && is_image(p))
            .collect();
        for w in frames.windows(2) {
            out.push(Candidate {
                id: id_for(root, &w[0]),
                a: w[0].clone(),
                b: w[1].clone(),
                matches: None,
            });
        }
    }
    Ok(out)
}

/// `pairs.txt`: one `frame_a frame_b [matches]` line per pair, paths
/// relative to the root; `#` starts a comment.
fn read_pair_manifest(root: &Path, path: &Path) -> Result<Vec<Candidate>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if !(2..=3).contains(&cols.len()) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                msg: "expected `frame_a frame_b [matches]`".into(),
            });
        }
        let a = root.join(cols[0]);
        out.push(Candidate {
            id: id_for(root, &a),
            a,
            b: root.join(cols[1]),
            matches: cols.get(2).map(|m| root.join(m)),
        });
    }
    Ok(out)
}

pub(crate) fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Reads a frame as a 3-channel image, replicating gray frames.
pub fn read_frame(path: &Path) -> Result<Image> {
    let img = Image::read(path).map_err(|e| Error::Ingestion(format!("{}: {e}", path.display())))?;
    if img.channels() == 3 {
        return Ok(img);
    }
    let g = img.plane(0).to_vec();
    Ok(Image::from_fn(img.width(), img.height(), 3, |x, y, _| {
        g[y * img.width() + x]
    }))
}

fn rel(root: &Path, p: &Path) -> String {
    p.strip_prefix(root).unwrap_or(p).to_string_lossy().replace('\\', "/")
}

fn ground_truth(root: &Path, id: &str) -> Option<PathBuf> {
    let dir = root.join("gt");
    let file = dir.join(format!("{id}.png"));
    if file.is_file() {
        return Some(file);
    }
    let sub = dir.join(id);
    sub.is_dir().then_some(sub)
}

/// Finds frame pairs under `root` (from `pairs.txt` if present, otherwise by
/// scanning), loads or computes their matches, filters them and writes
/// `<out>/manifest.json`. Computed matches go to `<out>/matches/<id>.txt`
/// and are reused on later calls.
pub fn ingest(root: impl AsRef<Path>, out: impl AsRef<Path>, cfg: &Config) -> Result<Dataset> {
    let (root, out) = (root.as_ref(), out.as_ref());
    if !root.is_dir() {
        return Err(Error::Ingestion(format!(
            "dataset root {} is not a directory",
            root.display()
        )));
    }
    let manifest = root.join("pairs.txt");
    let cands = if manifest.is_file() {
        read_pair_manifest(root, &manifest)?
    } else {
        scan_pairs(root)?
    };
    let mut seen = HashSet::new();
    for c in &cands {
        if !seen.insert(c.id.as_str()) {
            return Err(Error::Ingestion(format!("duplicate frame id {}", c.id)));
        }
    }
    let match_dir = out.join("matches");
    std::fs::create_dir_all(&match_dir).map_err(|e| Error::io(&match_dir, e))?;
    let mut entries: Vec<(ManifestEntry, FramePair)> = cands
        .par_iter()
        .map(|c| -> Result<(ManifestEntry, FramePair)> {
            let a = read_frame(&c.a)?;
            let b = read_frame(&c.b)?;
            let (da, db) = ((a.width(), a.height()), (b.width(), b.height()));
            if da != db {
                return Err(Error::Ingestion(format!("{}: frames differ in size", c.id)));
            }
            let given = c.matches.clone().or_else(|| {
                let p = root.join("matches").join(format!("{}.txt", c.id));
                p.is_file().then_some(p)
            });
            let (path, ms) = match given {
                Some(p) => {
                    let ms = read_matches(&p, da, db)?;
                    (p, ms)
                }
                None => {
                    let p = match_dir.join(format!("{}.txt", c.id));
                    if p.is_file() {
                        let ms = read_matches(&p, da, db)?;
                        (p, ms)
                    } else {
                        let ms = block_match(&a, &b, &cfg.matching.block)?;
                        write_matches(&ms, &p)?;
                        (p, ms)
                    }
                }
            };
            let verdict = filter_frame_pair(&ms, &cfg.matching.filter);
            let entry = ManifestEntry {
                id: c.id.clone(),
                frame_a: rel(root, &c.a),
                frame_b: rel(root, &c.b),
                matches: if path.starts_with(root) {
                    rel(root, &path)
                } else {
                    rel(out, &path)
                },
                frame_a_sha256: sha256_file(&c.a)?,
                frame_b_sha256: sha256_file(&c.b)?,
                matches_sha256: sha256_file(&path)?,
                n_matches: ms.len(),
                verdict,
            };
            let pair = FramePair {
                id: c.id.clone(),
                frame_a: c.a.clone(),
                frame_b: c.b.clone(),
                matches: path,
                gt: ground_truth(root, &c.id),
            };
            Ok((entry, pair))
        })
        .collect::<Result<_>>()?;
    entries.sort_by(|x, y| x.0.id.cmp(&y.0.id));
    let mut pairs = Vec::new();
    let mut rejected = Vec::new();
    for (e, p) in &entries {
        match e.verdict {
            FrameVerdict::Accept => pairs.push(p.clone()),
            FrameVerdict::Reject(r) => {
                log::info!("pair {} rejected: {r} ({} matches)", e.id, e.n_matches);
                rejected.push((e.id.clone(), r));
            }
        }
    }
    let list: Vec<&ManifestEntry> = entries.iter().map(|(e, _)| e).collect();
    let json = serde_json::to_vec_pretty(&list)?;
    let manifest_hash = hex::encode(Sha256::digest(&json));
    let mpath = out.join("manifest.json");
    std::fs::write(&mpath, &json).map_err(|e| Error::io(&mpath, e))?;
    if pairs.is_empty() {
        let mut counts = std::collections::BTreeMap::new();
        for (_, r) in &rejected {
            *counts.entry(r.as_str()).or_insert(0usize) += 1;
        }
        return Err(Error::Ingestion(format!(
            "zero accepted pairs ({} candidates, rejections {counts:?})",
            entries.len()
        )));
    }
    Ok(Dataset {
        root: root.to_path_buf(),
        pairs,
        rejected,
        manifest_hash,
    })
}
