//! Boundary benchmark: tolerance-based one-to-one correspondence between
//! predicted and ground-truth edge pixels, precision/recall sweeps and the
//! ODS / OIS / AP / P20 summaries.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bipartite::max_matching;
use crate::error::{invalid, Error, Result};
use crate::image::{EdgeMap, Mask};
use crate::imgproc::nms;

/// Matching radius, either absolute or relative to the image diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tolerance {
    Pixels(f32),
    DiagonalFraction(f32),
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance::DiagonalFraction(0.0075)
    }
}

impl Tolerance {
    pub fn pixels(&self, w: usize, h: usize) -> f32 {
        match *self {
            Tolerance::Pixels(p) => p,
            Tolerance::DiagonalFraction(f) => f * ((w * w + h * h) as f32).sqrt(),
        }
    }
}

/// Raw correspondence counts. With several annotators a prediction counts
/// as matched when any annotator matches it, while ground-truth counts are
/// summed over annotators.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub matched_pred: usize,
    pub n_pred: usize,
    pub matched_gt: usize,
    pub n_gt: usize,
}

impl Counts {
    pub fn tp(&self) -> usize {
        self.matched_pred
    }

    pub fn fp(&self) -> usize {
        self.n_pred - self.matched_pred
    }

    pub fn fn_(&self) -> usize {
        self.n_gt - self.matched_gt
    }

    pub fn precision(&self) -> f64 {
        if self.n_pred == 0 {
            1.0
        } else {
            self.matched_pred as f64 / self.n_pred as f64
        }
    }

    pub fn recall(&self) -> f64 {
        if self.n_gt == 0 {
            1.0
        } else {
            self.matched_gt as f64 / self.n_gt as f64
        }
    }

    pub fn f_measure(&self) -> f64 {
        f_measure(self.precision(), self.recall())
    }
}

impl std::ops::Add for Counts {
    type Output = Counts;
    fn add(self, o: Counts) -> Counts {
        Counts {
            matched_pred: self.matched_pred + o.matched_pred,
            n_pred: self.n_pred + o.n_pred,
            matched_gt: self.matched_gt + o.matched_gt,
            n_gt: self.n_gt + o.n_gt,
        }
    }
}

impl std::ops::Sub for Counts {
    type Output = Counts;
    fn sub(self, o: Counts) -> Counts {
        Counts {
            matched_pred: self.matched_pred - o.matched_pred,
            n_pred: self.n_pred - o.n_pred,
            matched_gt: self.matched_gt - o.matched_gt,
            n_gt: self.n_gt - o.n_gt,
        }
    }
}

pub fn f_measure(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Maximum one-to-one matching between `pred` and `gt` pixels at Euclidean
/// distance at most `tol`. Returns the partner of every predicted pixel in
/// row-major order, as an index into `gt.points()`.
fn match_pixels(pred: &[(usize, usize)], gt: &Mask, tol: f32) -> (Vec<Option<usize>>, usize) {
    let (w, h) = (gt.width(), gt.height());
    let mut gt_id = vec![usize::MAX; w * h];
    let mut n_gt = 0;
    for (i, &b) in gt.bits().iter().enumerate() {
        if b {
            gt_id[i] = n_gt;
            n_gt += 1;
        }
    }
    let r = tol.max(0.0).floor() as isize;
    let tol2 = tol * tol;
    let mut offsets: Vec<(isize, isize, isize)> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dx * dx + dy * dy, dy, dx)))
        .filter(|o| o.0 as f32 <= tol2)
        .collect();
    offsets.sort();
    let adj: Vec<Vec<usize>> = pred
        .iter()
        .map(|&(x, y)| {
            offsets
                .iter()
                .filter_map(|&(_, dy, dx)| {
                    let (nx, ny) = (x as isize + dx, y as isize + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        return None;
                    }
                    let id = gt_id[ny as usize * w + nx as usize];
                    (id != usize::MAX).then_some(id)
                })
                .collect()
        })
        .collect();
    (max_matching(&adj, n_gt, None), n_gt)
}

/// Correspondence counts of a binary thinned prediction against one or more
/// ground-truth annotations.
pub fn correspond(pred: &Mask, gts: &[Mask], tol: f32) -> Result<Counts> {
    let (w, h) = (pred.width(), pred.height());
    if let Some(g) = gts.iter().find(|g| (g.width(), g.height()) != (w, h)) {
        return Err(invalid!(
            "ground truth is {}x{}, prediction is {w}x{h}",
            g.width(),
            g.height()
        ));
    }
    let pts = pred.points();
    let mut hit = vec![false; pts.len()];
    let mut c = Counts {
        n_pred: pts.len(),
        ..Default::default()
    };
    for g in gts {
        let (m, n_gt) = match_pixels(&pts, g, tol);
        c.n_gt += n_gt;
        for (k, v) in m.iter().enumerate() {
            if v.is_some() {
                hit[k] = true;
                c.matched_gt += 1;
            }
        }
    }
    c.matched_pred = hit.iter().filter(|&&b| b).count();
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f32,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
}

impl PrPoint {
    fn new(threshold: f32, c: &Counts) -> Self {
        PrPoint {
            threshold,
            tp: c.tp(),
            fp: c.fp(),
            fn_: c.fn_(),
            precision: c.precision(),
            recall: c.recall(),
            f: c.f_measure(),
        }
    }
}

/// The 99 levels 0.01, 0.02, ..., 0.99.
pub fn default_thresholds() -> Vec<f32> {
    (1..100).map(|i| i as f32 / 100.0).collect()
}

fn check_corpus(preds: &[EdgeMap], gts: &[Vec<Mask>], thresholds: &[f32]) -> Result<()> {
    if preds.is_empty() || preds.len() != gts.len() {
        return Err(invalid!(
            "need one ground-truth set per prediction ({} predictions, {} ground truths)",
            preds.len(),
            gts.len()
        ));
    }
    if thresholds.is_empty() || thresholds.iter().any(|t| !t.is_finite()) {
        return Err(invalid!("thresholds must be a non-empty list of finite values"));
    }
    Ok(())
}

/// Counts per image and threshold. Predictions that are not thinned go
/// through non-maximum suppression once; each threshold then keeps pixels
/// at or above it.
pub fn image_counts(
    preds: &[EdgeMap],
    gts: &[Vec<Mask>],
    thresholds: &[f32],
    tol: Tolerance,
) -> Result<Vec<Vec<Counts>>> {
    check_corpus(preds, gts, thresholds)?;
    preds
        .par_iter()
        .zip(gts.par_iter())
        .map(|(p, g)| {
            let thin = if p.is_thinned() { p.clone() } else { nms(p, 1) };
            let t_px = tol.pixels(p.width(), p.height());
            thresholds
                .iter()
                .map(|&t| correspond(&thin.binarize(t), g, t_px))
                .collect()
        })
        .collect()
}

/// Corpus-level precision/recall at every threshold.
pub fn pr_curve(preds: &[EdgeMap], gts: &[Vec<Mask>], thresholds: &[f32], tol: Tolerance) -> Result<Vec<PrPoint>> {
    let per = image_counts(preds, gts, thresholds, tol)?;
    Ok(curve_from_counts(&per, thresholds))
}

fn curve_from_counts(per: &[Vec<Counts>], thresholds: &[f32]) -> Vec<PrPoint> {
    thresholds
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let total = per.iter().fold(Counts::default(), |a, c| a + c[k]);
            PrPoint::new(t, &total)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkResult {
    pub ods: f64,
    pub ods_threshold: f32,
    pub ois: f64,
    pub ap: f64,
    pub p20: f64,
    pub curve: Vec<PrPoint>,
    /// Threshold chosen for each image by the OIS search.
    pub image_thresholds: Vec<f32>,
}

pub fn benchmark(preds: &[EdgeMap], gts: &[Vec<Mask>], thresholds: &[f32], tol: Tolerance) -> Result<BenchmarkResult> {
    let per = image_counts(preds, gts, thresholds, tol)?;
    Ok(summarize(&per, thresholds))
}

/// Summaries from per-image counts (`per[image][threshold]`).
pub fn summarize(per: &[Vec<Counts>], thresholds: &[f32]) -> BenchmarkResult {
    let curve = curve_from_counts(per, thresholds);
    let best = (0..curve.len())
        .max_by(|&a, &b| curve[a].f.total_cmp(&curve[b].f).then(b.cmp(&a)))
        .expect("non-empty curve");
    let (ois, choice) = optimal_image_thresholds(per, best);
    BenchmarkResult {
        ods: curve[best].f,
        ods_threshold: thresholds[best],
        ois,
        ap: average_precision(&curve),
        p20: precision_at_recall(&curve, 0.2),
        image_thresholds: choice.iter().map(|&k| thresholds[k]).collect(),
        curve,
    }
}

/// Per-image thresholds maximizing the F-measure of the summed counts,
/// found by coordinate ascent from the common ODS threshold (so the result
/// is never below ODS).
fn optimal_image_thresholds(per: &[Vec<Counts>], start: usize) -> (f64, Vec<usize>) {
    let mut choice = vec![start; per.len()];
    let mut total = per.iter().fold(Counts::default(), |a, c| a + c[start]);
    let mut f = total.f_measure();
    for _ in 0..100 {
        let mut improved = false;
        for (i, counts) in per.iter().enumerate() {
            let rest = total - counts[choice[i]];
            for (k, c) in counts.iter().enumerate() {
                let cand = (rest + *c).f_measure();
                if cand > f + 1e-12 {
                    f = cand;
                    choice[i] = k;
                    total = rest + *c;
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
    (f, choice)
}

/// Area under the precision envelope (best precision at any recall at least
/// as high), integrated by trapezoids from recall 0 to the highest recall.
pub fn average_precision(curve: &[PrPoint]) -> f64 {
    let mut pts: Vec<(f64, f64)> = curve.iter().map(|p| (p.recall, p.precision)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    for i in (0..pts.len().saturating_sub(1)).rev() {
        pts[i].1 = pts[i].1.max(pts[i + 1].1);
    }
    let Some(&first) = pts.first() else { return 0.0 };
    let mut area = first.0 * first.1;
    for w in pts.windows(2) {
        area += (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0;
    }
    area
}

/// Precision at recall `r`, interpolated linearly between the two curve
/// points straddling it; 0 when the curve never reaches `r`.
pub fn precision_at_recall(curve: &[PrPoint], r: f64) -> f64 {
    let mut pts: Vec<(f64, f64)> = curve.iter().map(|p| (p.recall, p.precision)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
    match pts.iter().position(|p| p.0 >= r) {
        None => 0.0,
        Some(0) => pts[0].1,
        Some(i) => {
            let (a, b) = (pts[i - 1], pts[i]);
            if b.0 == a.0 {
                b.1
            } else {
                a.1 + (b.1 - a.1) * (r - a.0) / (b.0 - a.0)
            }
        }
    }
}

/// Ground-truth annotations of one image: a single PNG, or a directory of
/// PNGs (one per annotator, read in name order).
pub fn read_annotations(path: impl AsRef<Path>) -> Result<Vec<Mask>> {
    let path = path.as_ref();
    if !path.is_dir() {
        return Ok(vec![Mask::read_png(path)?]);
    }
    let mut files: Vec<_> = std::fs::read_dir(path)
        .map_err(|e| Error::io(path, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(invalid!("no annotation PNGs in {}", path.display()));
    }
    files.iter().map(Mask::read_png).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mask(w: usize, h: usize, pts: &[(usize, usize)]) -> Mask {
        let mut m = Mask::empty(w, h);
        for &(x, y) in pts {
            m.set(x, y, true);
        }
        m
    }

    /// Largest matching by trying every assignment.
    fn brute(pred: &[(usize, usize)], gt: &[(usize, usize)], tol: f32) -> usize {
        fn go(i: usize, pred: &[(usize, usize)], gt: &[(usize, usize)], used: &mut Vec<bool>, tol2: f32) -> usize {
            if i == pred.len() {
                return 0;
            }
            let mut best = go(i + 1, pred, gt, used, tol2);
            for j in 0..gt.len() {
                let (dx, dy) = (pred[i].0 as f32 - gt[j].0 as f32, pred[i].1 as f32 - gt[j].1 as f32);
                if !used[j] && dx * dx + dy * dy <= tol2 {
                    used[j] = true;
                    best = best.max(1 + go(i + 1, pred, gt, used, tol2));
                    used[j] = false;
                }
            }
            best
        }
        go(0, pred, gt, &mut vec![false; gt.len()], tol * tol)
    }

    #[test]
    fn identical_and_empty_predictions() {
        let g = mask(8, 8, &[(1, 1), (2, 2), (6, 3)]);
        let c = correspond(&g, std::slice::from_ref(&g), 1.0).unwrap();
        assert_eq!((c.tp(), c.fp(), c.fn_()), (3, 0, 0));
        let c = correspond(&Mask::empty(8, 8), std::slice::from_ref(&g), 1.0).unwrap();
        assert_eq!((c.tp(), c.fp(), c.fn_()), (0, 0, 3));
        assert_eq!(c.precision(), 1.0);
        assert_eq!(c.recall(), 0.0);
        assert!(correspond(&Mask::empty(8, 9), &[g], 1.0).is_err());
    }

    #[test]
    fn crafted_five_by_five() {
        // p0 reaches both gt pixels, p1 only the second: the maximum uses both
        let pred = mask(5, 5, &[(0, 0), (3, 0)]);
        let gt = mask(5, 5, &[(1, 1), (2, 2)]);
        let c = correspond(&pred, std::slice::from_ref(&gt), 2.9).unwrap();
        assert_eq!(c.tp(), brute(&pred.points(), &gt.points(), 2.9));
        assert_eq!((c.tp(), c.fp(), c.fn_()), (2, 0, 0));
        let c = correspond(&pred, &[gt], 1.5).unwrap();
        assert_eq!((c.tp(), c.fp(), c.fn_()), (1, 1, 1));
    }

    #[test]
    fn annotators_pool_predictions_and_sum_ground_truth() {
        let pred = mask(10, 4, &[(1, 1), (8, 1)]);
        let a = mask(10, 4, &[(1, 2)]);
        let b = mask(10, 4, &[(8, 2), (5, 2)]);
        let c = correspond(&pred, &[a, b], 1.0).unwrap();
        assert_eq!(
            c,
            Counts {
                matched_pred: 2,
                n_pred: 2,
                matched_gt: 2,
                n_gt: 3
            }
        );
    }

    #[test]
    fn perfect_detector_scores_one() {
        let g = mask(16, 16, &[(3, 2), (3, 3), (3, 4), (3, 5), (10, 9), (11, 9), (12, 9)]);
        let pred = g.to_edge_map().mark_thinned();
        let r = benchmark(&[pred], &[vec![g]], &default_thresholds(), Tolerance::Pixels(1.0)).unwrap();
        assert!(r.curve.iter().all(|p| p.precision == 1.0 && p.recall == 1.0));
        assert_eq!((r.ods, r.ois, r.ap, r.p20), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn zero_predictions_have_zero_recall() {
        let g = mask(12, 12, &[(4, 4), (5, 4)]);
        let r = benchmark(
            &[EdgeMap::zeros(12, 12)],
            &[vec![g]],
            &default_thresholds(),
            Tolerance::Pixels(1.0),
        )
        .unwrap();
        assert!(r.curve.iter().all(|p| p.recall == 0.0));
        assert_eq!((r.ods, r.p20), (0.0, 0.0));
    }

    #[test]
    fn hand_counted_sixteen_by_sixteen() {
        // 16 true pixels on a column; 12 predicted on it at 0.9, the other 4
        // missed; 8 spurious at 0.5 far away
        let gt = mask(16, 16, &(0..16).map(|y| (4, y)).collect::<Vec<_>>());
        let mut s = vec![0.0f32; 256];
        for y in 0..12 {
            s[y * 16 + 4] = 0.9;
        }
        for y in 0..8 {
            s[y * 16 + 13] = 0.5;
        }
        let pred = EdgeMap::new(16, 16, s).unwrap().mark_thinned();
        let th = [0.3, 0.7];
        let c = pr_curve(
            std::slice::from_ref(&pred),
            &[vec![gt.clone()]],
            &th,
            Tolerance::Pixels(1.0),
        )
        .unwrap();
        assert_eq!((c[0].tp, c[0].fp, c[0].fn_), (12, 8, 4));
        assert_eq!((c[1].tp, c[1].fp, c[1].fn_), (12, 0, 4));
        assert!((c[0].precision - 0.6).abs() < 1e-12 && (c[1].recall - 0.75).abs() < 1e-12);
        let r = benchmark(&[pred], &[vec![gt]], &th, Tolerance::Pixels(1.0)).unwrap();
        assert!((r.ods - 2.0 * 0.75 / 1.75).abs() < 1e-12);
        assert_eq!(r.ods_threshold, 0.7);
    }

    #[test]
    fn per_image_thresholds_beat_a_common_one() {
        // image A: true edge at 0.2, distractor at 0.8 -> wants a low threshold
        // image B: true edge at 0.8, distractor at 0.2 -> wants a high threshold
        let col = |x: usize| (0..10).map(|y| (x, y)).collect::<Vec<_>>();
        let make = |tx: usize, ts: f32, dx: usize, ds: f32| {
            let mut s = vec![0.0f32; 100];
            for y in 0..10 {
                s[y * 10 + tx] = ts;
                s[y * 10 + dx] = ds;
            }
            (EdgeMap::new(10, 10, s).unwrap().mark_thinned(), mask(10, 10, &col(tx)))
        };
        let (pa, ga) = make(2, 0.2, 7, 0.8);
        let (pb, gb) = make(2, 0.8, 7, 0.2);
        let th = [0.1, 0.5];
        let r = benchmark(&[pa, pb], &[vec![ga], vec![gb]], &th, Tolerance::Pixels(1.0)).unwrap();
        // common 0.1: P = 20/40, R = 1 -> F = 2/3; common 0.5: P = 10/20, R = 1/2 -> F = 1/2
        assert!((r.ods - 2.0 / 3.0).abs() < 1e-12);
        // best per image: A at 0.1 (10 tp, 10 fp), B at 0.5 (10 tp, 0 fp): P = 2/3, R = 1 -> F = 0.8
        assert!((r.ois - 0.8).abs() < 1e-12);
        assert_eq!(r.image_thresholds, vec![0.1, 0.5]);
    }

    #[test]
    fn p20_interpolates_between_straddling_points() {
        let pt = |r: f64, p: f64| PrPoint {
            threshold: 0.0,
            tp: 0,
            fp: 0,
            fn_: 0,
            precision: p,
            recall: r,
            f: 0.0,
        };
        let c = [pt(0.1, 0.9), pt(0.3, 0.7), pt(0.6, 0.4)];
        assert!((precision_at_recall(&c, 0.2) - 0.8).abs() < 1e-12);
        assert_eq!(precision_at_recall(&[pt(0.1, 0.9)], 0.2), 0.0);
        // envelope: 0.1*0.9 + (0.3-0.1)*0.8 + (0.6-0.3)*0.55
        assert!((average_precision(&c) - (0.09 + 0.16 + 0.165)).abs() < 1e-12);
    }

    #[test]
    fn tolerance_from_diagonal() {
        assert!((Tolerance::DiagonalFraction(0.01).pixels(300, 400) - 5.0).abs() < 1e-5);
        assert_eq!(Tolerance::Pixels(3.0).pixels(10, 10), 3.0);
    }

    fn random_case() -> impl Strategy<Value = (usize, usize, Vec<bool>, Vec<bool>, f32)> {
        (1usize..=12, 1usize..=12).prop_flat_map(|(w, h)| {
            (
                Just(w),
                Just(h),
                proptest::collection::vec(proptest::bool::weighted(0.12), w * h),
                proptest::collection::vec(proptest::bool::weighted(0.12), w * h),
                0.0f32..3.5,
            )
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]

        #[test]
        fn correspond_equals_brute_force((w, h, p, g, tol) in random_case()) {
            let (pred, gt) = (Mask::new(w, h, p).unwrap(), Mask::new(w, h, g).unwrap());
            prop_assume!(pred.count() <= 9 && gt.count() <= 9);
            let c = correspond(&pred, std::slice::from_ref(&gt), tol).unwrap();
            prop_assert_eq!(c.tp(), brute(&pred.points(), &gt.points(), tol));
            prop_assert_eq!(c.matched_pred, c.matched_gt);
        }

        #[test]
        fn sweep_is_monotone_and_order_free(vals in proptest::collection::vec(0.0f32..1.0, 2 * 100), seed in 0u64..1000) {
            let preds: Vec<EdgeMap> = vals.chunks(100).map(|v| EdgeMap::new(10, 10, v.to_vec()).unwrap()).collect();
            let gts: Vec<Vec<Mask>> = (0..2)
                .map(|k| vec![Mask::new(10, 10, (0..100).map(|i| (i as u64 * 7 + seed + k).is_multiple_of(5)).collect()).unwrap()])
                .collect();
            let th = [0.1, 0.3, 0.5, 0.7, 0.9];
            let per = image_counts(&preds, &gts, &th, Tolerance::Pixels(1.5)).unwrap();
            for counts in &per {
                for w in counts.windows(2) {
                    prop_assert!(w[1].n_pred <= w[0].n_pred);
                }
            }
            let a = benchmark(&preds, &gts, &th, Tolerance::Pixels(1.5)).unwrap();
            let rp: Vec<_> = preds.iter().rev().cloned().collect();
            let rg: Vec<_> = gts.iter().rev().cloned().collect();
            let b = benchmark(&rp, &rg, &th, Tolerance::Pixels(1.5)).unwrap();
            prop_assert_eq!(a.ods, b.ods);
            prop_assert_eq!(a.ap, b.ap);
            prop_assert!(a.ois >= a.ods);
        }
    }
}
