use std::path::{Path, PathBuf};

use edgeflow::config::Config;
use edgeflow::eval::{benchmark, default_thresholds, read_annotations, Tolerance};
use edgeflow::flow::{aee, flow_to_rgb, read_flo, write_flo};
use edgeflow::matching::{block_match, filter_frame_pair, read_matches, write_matches};
use edgeflow::pipeline::{dense_flow, frame_motion_edges, ingest, read_frame, run, RunContext};
use edgeflow::rng::stream;
use edgeflow::sedge::{
    detect, extract_samples, load_model, save_model, train_forest, EdgeDetector, SampleParams, TrainingSet,
};
use edgeflow::synth::{write_corpus, SynthParams};
use edgeflow::{EdgeMap, Error, Mask};
use serde_json::json;

use crate::{Command, Failure};

type Outcome = Result<(), Failure>;

/// Reads `.edgm` full-precision maps and anything else as an 8-bit image.
pub fn read_edges(path: &Path) -> edgeflow::Result<EdgeMap> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("edgm") => EdgeMap::read_raw(path),
        _ => EdgeMap::read_png(path),
    }
}

fn detector(model: Option<&Path>) -> edgeflow::Result<EdgeDetector> {
    match model {
        None => Ok(EdgeDetector::Gradient),
        Some(p) => Ok(EdgeDetector::Forest(load_model(p)?)),
    }
}

fn emit_json(value: &serde_json::Value, out: Option<&Path>) -> Outcome {
    let text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    match out {
        Some(p) => std::fs::write(p, text + "\n").map_err(|e| {
            Failure::Data(Error::Io {
                path: p.into(),
                source: e,
            })
        }),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

pub fn dispatch(cmd: Command, cfg: Config) -> Outcome {
    match cmd {
        Command::Match { a, b, out } => {
            let ms = block_match(&read_frame(&a)?, &read_frame(&b)?, &cfg.matching.block)?;
            write_matches(&ms, &out)?;
            log::info!("{} matches written to {}", ms.len(), out.display());
            Ok(())
        }
        Command::Filter { matches, frame } => {
            let img = read_frame(&frame)?;
            let dims = (img.width(), img.height());
            let ms = read_matches(&matches, dims, dims)?;
            let verdict = filter_frame_pair(&ms, &cfg.matching.filter);
            emit_json(&json!({ "verdict": verdict, "n_matches": ms.len() }), None)
        }
        Command::Flow {
            matches,
            edges,
            frame,
            out,
        } => {
            let edges = match (edges, frame) {
                (Some(e), _) => read_edges(&e)?,
                (None, Some(f)) => {
                    let img = read_frame(&f)?;
                    EdgeMap::zeros(img.width(), img.height())
                }
                (None, None) => return Err(Failure::Usage("flow needs --edges or --frame".into())),
            };
            let dims = (edges.width(), edges.height());
            let ms = read_matches(&matches, dims, dims)?;
            write_flo(&dense_flow(&ms, &edges, &cfg)?, &out)?;
            Ok(())
        }
        Command::Colorize { flow, out, max_mag } => {
            if max_mag.is_some_and(|m| !(m > 0.0 && m.is_finite())) {
                return Err(Failure::Usage("--max-mag must be positive".into()));
            }
            flow_to_rgb(&read_flo(&flow)?, max_mag)?.write(&out)?;
            Ok(())
        }
        Command::MotionEdges {
            model,
            flow,
            image,
            out,
            json,
        } => {
            let det = detector(model.as_deref())?;
            let img = read_frame(&image)?;
            let (_, aligned) = frame_motion_edges(&det, &read_flo(&flow)?, &img, &cfg)?;
            let json = json.unwrap_or_else(|| out.with_extension("json"));
            aligned.write(&out, &json)?;
            Ok(())
        }
        Command::Detect { model, input, out, raw } => {
            let e = detect(&detector(model.as_deref())?, &read_frame(&input)?, &cfg.sedge.detect)?;
            e.write_png(&out)?;
            if let Some(r) = raw {
                e.write_raw(&r)?;
            }
            Ok(())
        }
        Command::Train { samples, out, seed } => train(&samples, &out, seed, &cfg),
        Command::Pipeline { root, out, iters, seed } => {
            let mut cfg = cfg;
            if let Some(t) = iters {
                cfg.pipeline.iterations = t;
            }
            std::fs::create_dir_all(&out).map_err(|e| {
                Failure::Data(Error::Io {
                    path: out.clone(),
                    source: e,
                })
            })?;
            let ds = ingest(&root, &out, &cfg)?;
            log::info!("{} pairs accepted, {} rejected", ds.pairs.len(), ds.rejected.len());
            let ctx = RunContext {
                out: out.clone(),
                cfg,
                seed,
            };
            let state = run(&ds, &ctx)?;
            let metrics_path = out.join("run").join("metrics.json");
            let history: serde_json::Value =
                serde_json::from_str(&std::fs::read_to_string(&metrics_path).map_err(|e| {
                    Failure::Data(Error::Io {
                        path: metrics_path.clone(),
                        source: e,
                    })
                })?)
                .map_err(Error::from)?;
            emit_json(&json!({ "model": state.detector, "iterations": history }), None)
        }
        Command::EvalEdges { pred, gt, tol, out } => {
            let (preds, gts) = load_edge_eval(&pred, &gt)?;
            let tol = match tol {
                Some(t) if t > 0.0 => Tolerance::Pixels(t),
                Some(_) => return Err(Failure::Usage("--tol must be positive".into())),
                None => cfg.pipeline.tolerance(),
            };
            let r = benchmark(&preds, &gts, &default_thresholds(), tol)?;
            emit_json(&serde_json::to_value(&r).map_err(Error::from)?, out.as_deref())
        }
        Command::EvalFlow { pred, gt } => {
            let v = aee(&read_flo(&pred)?, &read_flo(&gt)?, None)?;
            emit_json(&json!({ "aee": v }), None)
        }
        Command::Synth {
            out,
            sequences,
            seed,
            params,
        } => {
            let p = match params {
                Some(path) => {
                    let text = std::fs::read_to_string(&path).map_err(|e| {
                        Failure::Data(Error::Io {
                            path: path.clone(),
                            source: e,
                        })
                    })?;
                    toml::from_str::<SynthParams>(&text)
                        .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?
                }
                None => SynthParams::default(),
            };
            write_corpus(&out, &p, sequences, seed)?;
            Ok(())
        }
    }
}

fn train(manifest: &Path, out: &Path, seed: u64, cfg: &Config) -> Outcome {
    let text = std::fs::read_to_string(manifest).map_err(|e| {
        Failure::Data(Error::Io {
            path: manifest.into(),
            source: e,
        })
    })?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let cols: Vec<PathBuf> = line.split_whitespace().map(|c| base.join(c)).collect();
        if !(2..=3).contains(&cols.len()) {
            return Err(Failure::Data(Error::Parse {
                path: manifest.into(),
                line: n + 1,
                msg: "expected `image supervision [exclusion]`".into(),
            }));
        }
        rows.push(cols);
    }
    if rows.is_empty() {
        return Err(Failure::Data(Error::Training(format!(
            "{} lists no images",
            manifest.display()
        ))));
    }
    let h = &cfg.motionedge.harvest;
    let n = cfg.pipeline.samples_per_iteration.div_ceil(2 * rows.len());
    let params = SampleParams {
        n_pos: n,
        n_neg: n,
        pos_threshold: h.pos_threshold,
        neg_threshold: h.neg_threshold,
    };
    let mut set = TrainingSet::default();
    for (i, cols) in rows.iter().enumerate() {
        let img = read_frame(&cols[0])?;
        let sup = read_edges(&cols[1])?.mark_thinned();
        let excl = match cols.get(2) {
            Some(p) => Mask::read_png(p)?,
            None => sup.binarize(h.neg_threshold).dilate(h.exclusion_radius),
        };
        let mut rng = stream(seed, &[0x5a, i as u64]);
        let k = set.sources.len() as u32;
        let s = extract_samples(&img, &sup, &excl, k, &params, &mut rng)?;
        if !s.is_empty() {
            set.push_source(edgeflow::sedge::FeatureSource::new(&img)?);
            set.samples.extend(s);
        }
    }
    let (p, q) = set.counts();
    log::info!("training on {p} positives and {q} negatives");
    save_model(&train_forest(&set, &cfg.sedge.forest, seed)?, out)?;
    Ok(())
}

const EDGE_EXTS: [&str; 2] = ["png", "edgm"];

fn load_edge_eval(pred: &Path, gt: &Path) -> Result<(Vec<EdgeMap>, Vec<Vec<Mask>>), Failure> {
    if !pred.is_dir() {
        return Ok((vec![read_edges(pred)?], vec![read_annotations(gt)?]));
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(pred)
        .map_err(|e| {
            Failure::Data(Error::Io {
                path: pred.into(),
                source: e,
            })
        })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| EDGE_EXTS.contains(&e))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Failure::Data(Error::InvalidInput(format!(
            "no edge maps in {}",
            pred.display()
        ))));
    }
    let mut preds = Vec::new();
    let mut gts = Vec::new();
    for f in files {
        let stem = f.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        let file = gt.join(format!("{stem}.png"));
        let dir = gt.join(&stem);
        let annotations = if file.is_file() {
            read_annotations(&file)?
        } else if dir.is_dir() {
            read_annotations(&dir)?
        } else {
            return Err(Failure::Data(Error::InvalidInput(format!(
                "no ground truth for {stem} in {}",
                gt.display()
            ))));
        };
        preds.push(read_edges(&f)?);
        gts.push(annotations);
    }
    Ok((preds, gts))
}
