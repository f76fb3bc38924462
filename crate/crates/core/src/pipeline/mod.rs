//! The iterative loop over a video corpus: dense flow from fixed matches
//! and the current edges, motion edges from the flow, a detector trained on
//! them, new edges from the detector.
//!
//! Layout under the output directory:
//!
//! ```text
//! manifest.json            accepted/rejected pairs with content hashes
//! matches/<id>.txt         computed matches (reused across runs)
//! run/config.toml          resolved configuration
//! run/metrics.json         per-iteration report
//! run/<t>/state.json       written last; marks iteration t complete
//! run/<t>/model.sedg       detector of iteration t (t >= 1)
//! run/<t>/frames/<id>.edgm edges of iteration t
//! run/<t>/frames/<id>.flo, .medge.png, .medge.json
//! ```

mod ingest;

pub use ingest::{ingest, read_frame, Dataset, FramePair};

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::eval::{benchmark, default_thresholds, read_annotations};
use crate::flow::{interpolate, smooth_flow, write_flo, FlowField};
use crate::image::{EdgeMap, Image, Mask};
use crate::imgproc::nms;
use crate::matching::{read_matches, MatchSet};
use crate::motionedge::{align_motion_edges, harvest_supervision, motion_edges, MotionEdgeMap};
use crate::rng::{id_of, stream};
use crate::sedge::{
    detect, extract_samples, load_model, save_model, train_forest, EdgeDetector, FeatureSource, Sample, SampleParams,
    TrainingSet,
};

/// Where a run lives and what drives it.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub out: PathBuf,
    pub cfg: Config,
    pub seed: u64,
}

impl RunContext {
    pub fn iter_dir(&self, t: usize) -> PathBuf {
        self.out.join("run").join(t.to_string())
    }

    fn frame_path(&self, t: usize, id: &str, ext: &str) -> PathBuf {
        self.iter_dir(t).join("frames").join(format!("{id}.{ext}"))
    }

    fn rel(&self, p: &Path) -> String {
        p.strip_prefix(&self.out)
            .unwrap_or(p)
            .to_string_lossy()
            .replace('\\', "/")
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameArtifacts {
    pub edges: Option<String>,
    pub flow: Option<String>,
    pub medge_png: Option<String>,
    pub medge_json: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub n_images: usize,
    pub ods: f64,
    pub ois: f64,
    pub ap: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub iteration: usize,
    pub n_frames: usize,
    pub n_failed: usize,
    pub n_train_frames: usize,
    pub n_pos: usize,
    pub n_neg: usize,
    pub matched: usize,
    pub shifted: usize,
    pub discarded: usize,
    /// Edge benchmark of this iteration's edges on frames with ground truth.
    pub eval: Option<EvalSummary>,
}

/// Everything needed to continue a run from iteration `iteration`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationState {
    pub iteration: usize,
    /// Detector checkpoint relative to the output directory; `None` is the
    /// gradient detector.
    pub detector: Option<String>,
    pub frames: BTreeMap<String, FrameArtifacts>,
    pub failed: Vec<String>,
    pub metrics: IterationMetrics,
    pub config_fingerprint: String,
    pub manifest_hash: String,
    pub seed: u64,
}

impl IterationState {
    pub fn read(path: impl AsRef<Path>) -> Result<IterationState> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, serde_json::to_string_pretty(self)?.as_bytes())
    }

    pub fn detector(&self, ctx: &RunContext) -> Result<EdgeDetector> {
        match &self.detector {
            None => Ok(EdgeDetector::Gradient),
            Some(p) => Ok(EdgeDetector::Forest(load_model(ctx.out.join(p))?)),
        }
    }

    /// Edges of frame `id` at this iteration, if computed.
    pub fn edges(&self, ctx: &RunContext, id: &str) -> Result<Option<EdgeMap>> {
        match self.frames.get(id).and_then(|a| a.edges.as_ref()) {
            Some(p) => Ok(Some(EdgeMap::read_raw(ctx.out.join(p))?)),
            None => Ok(None),
        }
    }

    fn artifacts_present(&self, ctx: &RunContext) -> bool {
        let files = self.detector.iter().chain(
            self.frames
                .values()
                .flat_map(|a| [&a.edges, &a.flow, &a.medge_png, &a.medge_json].into_iter().flatten()),
        );
        files.into_iter().all(|p| ctx.out.join(p).is_file())
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn mkdir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

/// Benchmarks the given edges against the frames' ground truth.
fn evaluate(ds: &Dataset, cfg: &Config, edges: &BTreeMap<String, EdgeMap>) -> Result<Option<EvalSummary>> {
    let mut preds = Vec::new();
    let mut gts = Vec::new();
    for p in &ds.pairs {
        if let (Some(gt), Some(e)) = (&p.gt, edges.get(&p.id)) {
            preds.push(e.clone());
            gts.push(read_annotations(gt)?);
        }
    }
    if preds.is_empty() {
        return Ok(None);
    }
    let r = benchmark(&preds, &gts, &default_thresholds(), cfg.pipeline.tolerance())?;
    Ok(Some(EvalSummary {
        n_images: preds.len(),
        ods: r.ods,
        ois: r.ois,
        ap: r.ap,
    }))
}

fn check_failures(ctx: &RunContext, t: usize, n: usize, failed: &[String]) -> Result<()> {
    if failed.len() as f32 > ctx.cfg.pipeline.max_failed_fraction * n as f32 {
        return Err(Error::Iteration(format!(
            "iteration {t}: {} of {n} frames failed (first: {})",
            failed.len(),
            failed[0]
        )));
    }
    Ok(())
}

/// Runs `det` over the frames (all of them, or only those with ground
/// truth) and persists the edges of iteration `t`.
fn detect_frames(
    ds: &Dataset,
    ctx: &RunContext,
    t: usize,
    det: &EdgeDetector,
    only_gt: bool,
) -> Result<(BTreeMap<String, FrameArtifacts>, BTreeMap<String, EdgeMap>, Vec<String>)> {
    mkdir(&ctx.iter_dir(t).join("frames"))?;
    let results: Vec<(String, Result<EdgeMap>)> = ds
        .pairs
        .par_iter()
        .filter(|p| !only_gt || p.gt.is_some())
        .map(|p| {
            let r = (|| {
                let img = read_frame(&p.frame_a)?;
                let e = detect(det, &img, &ctx.cfg.sedge.detect)?;
                e.write_raw(ctx.frame_path(t, &p.id, "edgm"))?;
                Ok(e)
            })();
            (p.id.clone(), r)
        })
        .collect();
    let mut arts = BTreeMap::new();
    let mut edges = BTreeMap::new();
    let mut failed = Vec::new();
    for (id, r) in results {
        match r {
            Ok(e) => {
                let a = FrameArtifacts {
                    edges: Some(ctx.rel(&ctx.frame_path(t, &id, "edgm"))),
                    ..Default::default()
                };
                arts.insert(id.clone(), a);
                if ds.pairs.iter().any(|p| p.id == id && p.gt.is_some()) {
                    edges.insert(id, e);
                }
            }
            Err(e) => {
                log::warn!("iteration {t}: edge detection failed on {id}: {e}");
                failed.push(id);
            }
        }
    }
    Ok((arts, edges, failed))
}

/// Iteration 0: gradient edges for every frame.
pub fn initial_state(ds: &Dataset, ctx: &RunContext) -> Result<IterationState> {
    let (frames, eval_edges, failed) = detect_frames(ds, ctx, 0, &EdgeDetector::Gradient, false)?;
    check_failures(ctx, 0, ds.pairs.len(), &failed)?;
    let metrics = IterationMetrics {
        iteration: 0,
        n_frames: frames.len(),
        n_failed: failed.len(),
        eval: evaluate(ds, &ctx.cfg, &eval_edges)?,
        ..Default::default()
    };
    let state = IterationState {
        iteration: 0,
        detector: None,
        frames,
        failed,
        metrics,
        config_fingerprint: ctx.cfg.fingerprint(),
        manifest_hash: ds.manifest_hash.clone(),
        seed: ctx.seed,
    };
    state.write(&ctx.iter_dir(0).join("state.json"))?;
    Ok(state)
}

struct FrameOutcome {
    arts: FrameArtifacts,
    matched: usize,
    shifted: usize,
    discarded: usize,
    samples: Option<(FeatureSource, Vec<Sample>)>,
}

/// Per-class sample budget of each training frame at iteration `t`.
fn per_frame_budget(cfg: &Config, t: usize, n_train: usize) -> usize {
    let mut total = cfg.pipeline.samples_per_iteration as f64;
    if t == cfg.pipeline.iterations {
        total *= cfg.pipeline.final_boost as f64;
    }
    (total / (2.0 * n_train.max(1) as f64)).ceil() as usize
}

/// Interpolated flow, smoothed when configured.
pub fn dense_flow(ms: &MatchSet, edges: &EdgeMap, cfg: &Config) -> Result<FlowField> {
    let flow = interpolate(ms, edges, &cfg.flow.interp)?;
    if cfg.flow.smooth_enabled {
        return smooth_flow(&flow, edges, &cfg.flow.smooth);
    }
    Ok(flow)
}

/// Thinned motion edges of `flow` and their alignment to the superpixel
/// boundaries of `img`.
pub fn frame_motion_edges(
    det: &EdgeDetector,
    flow: &FlowField,
    img: &Image,
    cfg: &Config,
) -> Result<(EdgeMap, MotionEdgeMap)> {
    let max_mag = (cfg.motionedge.max_mag > 0.0).then_some(cfg.motionedge.max_mag);
    let raw = nms(
        &motion_edges(det, flow, max_mag, &cfg.sedge.detect)?,
        cfg.motionedge.nms_radius,
    );
    let mut aligned = align_motion_edges(&raw, img, &cfg.motionedge.align)?;
    aligned.provenance.max_mag = max_mag;
    Ok((raw, aligned))
}

/// Flow, motion edges and (for training frames) samples of one frame.
fn process_frame(
    ctx: &RunContext,
    t: usize,
    pair: &FramePair,
    prev_edges: &EdgeMap,
    det: &EdgeDetector,
    budget: Option<usize>,
) -> Result<FrameOutcome> {
    let cfg = &ctx.cfg;
    let img = read_frame(&pair.frame_a)?;
    let dims = (img.width(), img.height());
    let ms = read_matches(&pair.matches, dims, dims)?;
    let flow = dense_flow(&ms, prev_edges, cfg)?;
    let (raw, mut aligned) = frame_motion_edges(det, &flow, &img, cfg)?;
    aligned.provenance.iteration = t;
    aligned.provenance.frame = pair.id.clone();
    let (flo, png, json) = (
        ctx.frame_path(t, &pair.id, "flo"),
        ctx.frame_path(t, &pair.id, "medge.png"),
        ctx.frame_path(t, &pair.id, "medge.json"),
    );
    write_flo(&flow, &flo)?;
    aligned.write(&png, &json)?;
    let samples = match budget {
        None => None,
        Some(n) => {
            let hv = harvest_supervision(&aligned, Some(&raw), &cfg.motionedge.harvest)?;
            let params = SampleParams {
                n_pos: n,
                n_neg: n,
                pos_threshold: cfg.motionedge.harvest.pos_threshold,
                neg_threshold: cfg.motionedge.harvest.neg_threshold,
            };
            let mut rng = stream(ctx.seed, &[t as u64, id_of(&pair.id)]);
            let s = extract_samples(&img, &hv.supervision, &hv.exclusion, 0, &params, &mut rng)?;
            if s.is_empty() {
                None
            } else {
                Some((FeatureSource::new(&img)?, s))
            }
        }
    };
    let p = &aligned.provenance;
    Ok(FrameOutcome {
        arts: FrameArtifacts {
            edges: None,
            flow: Some(ctx.rel(&flo)),
            medge_png: Some(ctx.rel(&png)),
            medge_json: Some(ctx.rel(&json)),
        },
        matched: p.matched,
        shifted: p.shifted,
        discarded: p.discarded,
        samples,
    })
}

/// One pass of the loop: from the state of iteration `prev.iteration` to
/// the next. Every artifact and the new checkpoint are on disk before the
/// new state is written.
pub fn run_iteration(ds: &Dataset, prev: &IterationState, ctx: &RunContext) -> Result<IterationState> {
    let t = prev.iteration + 1;
    let cfg = &ctx.cfg;
    if prev.manifest_hash != ds.manifest_hash {
        return Err(Error::Iteration(
            "dataset manifest changed since the previous iteration".into(),
        ));
    }
    let det = prev.detector(ctx)?;
    mkdir(&ctx.iter_dir(t).join("frames"))?;
    // frames with edges from the previous iteration, in id order
    let usable: Vec<&FramePair> = ds.pairs.iter().filter(|p| prev.frames.contains_key(&p.id)).collect();
    let mut order: Vec<usize> = (0..usable.len()).collect();
    order.shuffle(&mut stream(ctx.seed, &[t as u64, 0x7a1e]));
    order.truncate(cfg.pipeline.max_train_frames);
    let mut train = vec![false; usable.len()];
    order.iter().for_each(|&i| train[i] = true);
    let budget = per_frame_budget(cfg, t, order.len());
    log::info!("iteration {t}: {} frames, {} for training", usable.len(), order.len());
    let outcomes: Vec<(String, Result<FrameOutcome>)> = usable
        .par_iter()
        .zip(train.par_iter())
        .map(|(p, &is_train)| {
            let r = prev.edges(ctx, &p.id).and_then(|e| {
                let e = e.ok_or_else(|| Error::Iteration(format!("no previous edges for {}", p.id)))?;
                process_frame(ctx, t, p, &e, &det, is_train.then_some(budget))
            });
            (p.id.clone(), r)
        })
        .collect();
    let mut frames = BTreeMap::new();
    let mut failed = prev.failed.clone();
    let mut set = TrainingSet::default();
    let mut m = IterationMetrics {
        iteration: t,
        ..Default::default()
    };
    for (id, r) in outcomes {
        match r {
            Ok(o) => {
                m.matched += o.matched;
                m.shifted += o.shifted;
                m.discarded += o.discarded;
                if let Some((src, samples)) = o.samples {
                    let k = set.push_source(src);
                    set.samples
                        .extend(samples.into_iter().map(|s| Sample { source: k, ..s }));
                    m.n_train_frames += 1;
                }
                frames.insert(id, o.arts);
            }
            Err(e) => {
                log::warn!("iteration {t}: frame {id} skipped: {e}");
                failed.push(id);
            }
        }
    }
    check_failures(ctx, t, ds.pairs.len(), &failed)?;
    (m.n_pos, m.n_neg) = set.counts();
    if m.n_pos < cfg.pipeline.min_samples || m.n_neg == 0 {
        return Err(Error::Iteration(format!(
            "iteration {t}: {} positives and {} negatives from {} frames (need at least {} positives)",
            m.n_pos, m.n_neg, m.n_train_frames, cfg.pipeline.min_samples
        )));
    }
    log::info!(
        "iteration {t}: training on {} positives, {} negatives",
        m.n_pos,
        m.n_neg
    );
    let tree_seed: u64 = stream(ctx.seed, &[t as u64, 0xf0e5]).gen();
    let forest = train_forest(&set, &cfg.sedge.forest, tree_seed)?;
    drop(set);
    let model = ctx.iter_dir(t).join("model.sedg");
    save_model(&forest, &model)?;
    let det = EdgeDetector::Forest(forest);
    let only_gt = cfg.pipeline.lazy && t == cfg.pipeline.iterations;
    let (edge_arts, eval_edges, edge_failed) = detect_frames(ds, ctx, t, &det, only_gt)?;
    for (id, a) in edge_arts {
        frames.entry(id).or_default().edges = a.edges;
    }
    failed.extend(edge_failed);
    failed.sort();
    failed.dedup();
    check_failures(ctx, t, ds.pairs.len(), &failed)?;
    m.n_frames = frames.len();
    m.n_failed = failed.len();
    m.eval = evaluate(ds, cfg, &eval_edges)?;
    let state = IterationState {
        iteration: t,
        detector: Some(ctx.rel(&model)),
        frames,
        failed,
        metrics: m,
        config_fingerprint: cfg.fingerprint(),
        manifest_hash: ds.manifest_hash.clone(),
        seed: ctx.seed,
    };
    state.write(&ctx.iter_dir(t).join("state.json"))?;
    Ok(state)
}

/// Latest complete iteration of a compatible earlier run, if any.
pub fn resume_point(ds: &Dataset, ctx: &RunContext) -> Option<IterationState> {
    let fp = ctx.cfg.fingerprint();
    (0..=ctx.cfg.pipeline.iterations).rev().find_map(|t| {
        let s = IterationState::read(ctx.iter_dir(t).join("state.json")).ok()?;
        let ok = s.iteration == t
            && s.config_fingerprint == fp
            && s.manifest_hash == ds.manifest_hash
            && s.seed == ctx.seed
            && s.artifacts_present(ctx);
        ok.then_some(s)
    })
}

/// Runs the configured number of iterations, resuming after the last
/// complete one of an earlier run with the same configuration, seed and
/// dataset. Writes `run/config.toml` and `run/metrics.json`.
pub fn run(ds: &Dataset, ctx: &RunContext) -> Result<IterationState> {
    let cfg = &ctx.cfg;
    if cfg.pipeline.iterations == 0 {
        return Err(Error::Config("pipeline.iterations must be at least 1".into()));
    }
    let run_dir = ctx.out.join("run");
    mkdir(&run_dir)?;
    write_atomic(&run_dir.join("config.toml"), cfg.to_toml().as_bytes())?;
    let mut history = Vec::new();
    let mut state = match resume_point(ds, ctx) {
        Some(s) => {
            log::info!("resuming after iteration {}", s.iteration);
            for t in 0..s.iteration {
                history.push(IterationState::read(ctx.iter_dir(t).join("state.json"))?.metrics);
            }
            s
        }
        None => initial_state(ds, ctx)?,
    };
    history.push(state.metrics.clone());
    while state.iteration < cfg.pipeline.iterations {
        state = run_iteration(ds, &state, ctx)?;
        if let Some(e) = &state.metrics.eval {
            log::info!("iteration {}: ODS {:.4}", state.iteration, e.ods);
        }
        history.push(state.metrics.clone());
        write_atomic(
            &run_dir.join("metrics.json"),
            serde_json::to_string_pretty(&history)?.as_bytes(),
        )?;
    }
    write_atomic(
        &run_dir.join("metrics.json"),
        serde_json::to_string_pretty(&history)?.as_bytes(),
    )?;
    Ok(state)
}

/// Ground-truth masks of the frames that have them, keyed by frame id.
pub fn ground_truth(ds: &Dataset) -> Result<BTreeMap<String, Vec<Mask>>> {
    ds.pairs
        .iter()
        .filter_map(|p| p.gt.as_ref().map(|g| (p.id.clone(), g)))
        .map(|(id, g)| Ok((id, read_annotations(g)?)))
        .collect()
}
