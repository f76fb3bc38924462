use std::path::Path;

use edgeflow::config::Config;
use edgeflow::flow::read_flo;
use edgeflow::image::Image;
use edgeflow::imgproc::{slic, superpixel_edges, SlicParams};
use edgeflow::motionedge::MotionEdgeMap;
use edgeflow::pipeline::{ingest, initial_state, read_frame, run, run_iteration, IterationState, RunContext};
use edgeflow::synth::{write_corpus, SynthParams};
use edgeflow::Error;

fn small_config(iterations: usize) -> Config {
    let mut cfg = Config::default();
    for s in [
        "sedge.forest.n_trees=2",
        "sedge.forest.n_feature_probe=64",
        "sedge.detect.scales=[1.0]",
        "pipeline.samples_per_iteration=4000",
        "pipeline.min_samples=10",
        "pipeline.final_boost=1.0",
        "motionedge.harvest.pos_threshold=0.3",
    ] {
        cfg.set(s).unwrap();
    }
    cfg.pipeline.iterations = iterations;
    cfg
}

fn corpus(root: &Path, n_seq: usize, n_frames: usize) {
    let p = SynthParams {
        n_frames,
        min_speed: 3.5,
        texture_contrast: 0.5,
        ..Default::default()
    };
    write_corpus(root, &p, n_seq, 1).unwrap();
}

fn bytes(p: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

#[test]
fn translating_objects_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("ds");
    let p = SynthParams {
        n_frames: 10,
        min_speed: 3.0,
        max_speed: 3.0,
        max_spin: 0.0,
        texture_contrast: 0.5,
        ..Default::default()
    };
    write_corpus(&root, &p, 1, 3).unwrap();
    let ds = ingest(&root, dir.path().join("out"), &Config::default()).unwrap();
    assert_eq!(ds.pairs.len(), 9, "rejected: {:?}", ds.rejected);
    assert!(ds.rejected.is_empty());
    assert!(ds.pairs.iter().all(|p| p.gt.is_some()));
    assert_eq!(ds.pairs[0].id, "seq000_f000");
}

#[test]
fn static_scene_has_no_accepted_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("ds");
    let p = SynthParams {
        n_frames: 4,
        min_speed: 0.0,
        max_speed: 0.0,
        max_spin: 0.0,
        pan_speed: 0.0,
        texture_contrast: 0.5,
        ..Default::default()
    };
    write_corpus(&root, &p, 1, 3).unwrap();
    match ingest(&root, dir.path().join("out"), &Config::default()) {
        Err(Error::Ingestion(m)) => {
            assert!(m.contains("zero accepted pairs"), "{m}");
            assert!(m.contains("slow"), "{m}");
        }
        other => panic!("expected an ingestion error, got {other:?}"),
    }
}

#[test]
fn reingestion_reuses_matches_and_keeps_the_hash() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("ds");
    corpus(&root, 2, 3);
    let out = dir.path().join("out");
    let a = ingest(&root, &out, &Config::default()).unwrap();
    let m = &a.pairs[0].matches;
    let before = std::fs::metadata(m).unwrap().modified().unwrap();
    let b = ingest(&root, &out, &Config::default()).unwrap();
    assert_eq!(a, b);
    assert_eq!(std::fs::metadata(m).unwrap().modified().unwrap(), before);
    // a different output directory recomputes the same matches
    let c = ingest(&root, dir.path().join("other"), &Config::default()).unwrap();
    assert_eq!(a.manifest_hash, c.manifest_hash);
}

#[test]
fn explicit_pair_list() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("ds");
    corpus(&root, 2, 3);
    std::fs::write(root.join("pairs.txt"), "# one pair\nseq001/f000.png seq001/f001.png\n").unwrap();
    let ds = ingest(&root, dir.path().join("out"), &Config::default()).unwrap();
    assert_eq!(ds.pairs.len() + ds.rejected.len(), 1);
    std::fs::write(root.join("pairs.txt"), "seq001/f000.png\n").unwrap();
    assert!(matches!(
        ingest(&root, dir.path().join("out"), &Config::default()),
        Err(Error::Parse { line: 1, .. })
    ));
}

#[test]
fn first_iteration_persists_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("ds");
    corpus(&root, 3, 3);
    let out = dir.path().join("out");
    let cfg = small_config(1);
    let ds = ingest(&root, &out, &cfg).unwrap();
    let ctx = RunContext {
        out: out.clone(),
        cfg,
        seed: 11,
    };
    let s0 = initial_state(&ds, &ctx).unwrap();
    assert_eq!(s0.detector, None);
    let s1 = run_iteration(&ds, &s0, &ctx).unwrap();
    assert_eq!(s1.iteration, 1);
    assert!(out.join("run/1/model.sedg").is_file());
    assert_eq!(s1.manifest_hash, s0.manifest_hash);
    assert_eq!(s1.config_fingerprint, s0.config_fingerprint);
    assert_eq!(IterationState::read(out.join("run/1/state.json")).unwrap(), s1);
    for pair in &ds.pairs {
        let a = &s1.frames[&pair.id];
        let flow = read_flo(out.join(a.flow.as_ref().unwrap())).unwrap();
        let img = read_frame(&pair.frame_a).unwrap();
        assert_eq!((flow.width(), flow.height()), (img.width(), img.height()));
        assert!(out.join(a.edges.as_ref().unwrap()).is_file());
        let m = MotionEdgeMap::read(
            out.join(a.medge_png.as_ref().unwrap()),
            out.join(a.medge_json.as_ref().unwrap()),
        )
        .unwrap();
        assert_eq!(m.provenance.iteration, 1);
        assert_eq!(m.provenance.frame, pair.id);
        // supervision only ever sits on superpixel boundaries of its frame
        let sp = slic(
            &img,
            &SlicParams {
                n_target: (img.width() * img.height() / 512).max(1),
                compactness: 10.0,
                n_iters: 10,
            },
        )
        .unwrap();
        let boundary = superpixel_edges(&sp).binarize(0.5);
        for (i, &v) in m.edges.data().iter().enumerate() {
            if v > 0.0 {
                assert!(
                    boundary.bits()[i],
                    "{}: motion edge off the superpixel boundary",
                    pair.id
                );
            }
        }
    }
    assert!(s1.metrics.n_pos >= 10);
    assert!(s1.metrics.eval.is_some());
}

#[test]
fn starved_iteration_reports_counts() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("ds");
    corpus(&root, 1, 3);
    let out = dir.path().join("out");
    let mut cfg = small_config(1);
    cfg.pipeline.min_samples = 1_000_000;
    let ds = ingest(&root, &out, &cfg).unwrap();
    let ctx = RunContext { out, cfg, seed: 1 };
    let s0 = initial_state(&ds, &ctx).unwrap();
    match run_iteration(&ds, &s0, &ctx) {
        Err(Error::Iteration(m)) => assert!(m.contains("positives"), "{m}"),
        other => panic!("expected an iteration error, got {other:?}"),
    }
}

#[test]
fn single_iteration_run_equals_one_step() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("ds");
    corpus(&root, 2, 3);
    let cfg = small_config(1);
    let (o1, o2) = (dir.path().join("o1"), dir.path().join("o2"));
    let ds1 = ingest(&root, &o1, &cfg).unwrap();
    let ctx1 = RunContext {
        out: o1.clone(),
        cfg: cfg.clone(),
        seed: 3,
    };
    let s = run(&ds1, &ctx1).unwrap();
    let ds2 = ingest(&root, &o2, &cfg).unwrap();
    let ctx2 = RunContext {
        out: o2.clone(),
        cfg,
        seed: 3,
    };
    let t = run_iteration(&ds2, &initial_state(&ds2, &ctx2).unwrap(), &ctx2).unwrap();
    assert_eq!(s, t);
    assert_eq!(bytes(o1.join("run/1/model.sedg")), bytes(o2.join("run/1/model.sedg")));
    let metrics: serde_json::Value = serde_json::from_slice(&bytes(o1.join("run/metrics.json"))).unwrap();
    assert_eq!(metrics.as_array().unwrap().len(), 2);
    assert_eq!(bytes(o1.join("run/config.toml")), ctx1.cfg.to_toml().into_bytes());
}

#[test]
fn resumed_run_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("ds");
    corpus(&root, 2, 3);
    let cfg = small_config(2);
    let full = dir.path().join("full");
    let ds = ingest(&root, &full, &cfg).unwrap();
    run(
        &ds,
        &RunContext {
            out: full.clone(),
            cfg: cfg.clone(),
            seed: 5,
        },
    )
    .unwrap();

    // interrupted after iteration 1: state of iteration 2 never written
    let part = dir.path().join("part");
    let ds = ingest(&root, &part, &cfg).unwrap();
    run(
        &ds,
        &RunContext {
            out: part.clone(),
            cfg: cfg.clone(),
            seed: 5,
        },
    )
    .unwrap();
    std::fs::remove_dir_all(part.join("run/2")).unwrap();
    let model1 = bytes(part.join("run/1/model.sedg"));
    let resumed = run(
        &ds,
        &RunContext {
            out: part.clone(),
            cfg: cfg.clone(),
            seed: 5,
        },
    )
    .unwrap();
    assert_eq!(bytes(part.join("run/1/model.sedg")), model1);
    assert_eq!(
        bytes(part.join("run/2/model.sedg")),
        bytes(full.join("run/2/model.sedg"))
    );
    assert_eq!(resumed, IterationState::read(full.join("run/2/state.json")).unwrap());
    for id in resumed.frames.keys() {
        for ext in ["flo", "medge.png", "medge.json", "edgm"] {
            let rel = format!("run/2/frames/{id}.{ext}");
            assert_eq!(bytes(part.join(&rel)), bytes(full.join(&rel)), "{rel}");
        }
    }

    // a different seed does not resume from the other run's states
    let other = run(
        &ds,
        &RunContext {
            out: part.clone(),
            cfg,
            seed: 6,
        },
    )
    .unwrap();
    assert_eq!(other.seed, 6);
    assert_ne!(
        bytes(part.join("run/2/model.sedg")),
        bytes(full.join("run/2/model.sedg"))
    );
}

#[test]
fn frames_are_three_channel() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("g.png");
    Image::filled(40, 36, 1, 0.5).write(&p).unwrap();
    let img = read_frame(&p).unwrap();
    assert_eq!(img.channels(), 3);
    assert!(img.data().iter().all(|&v| (v - 0.5).abs() < 0.01));
}
