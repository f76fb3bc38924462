use serde::{Deserialize, Serialize};

use super::MatchSet;

/// Frame-pair rejection thresholds, in pixels unless noted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterParams {
    pub min_count: usize,
    /// Reject when no match moves more than this.
    pub slow_max: f32,
    /// Reject when the mean displacement exceeds this.
    pub large_mean: f32,
    /// Reject when one translation explains at least this fraction of matches.
    pub trans_frac: f32,
    pub trans_tol: f32,
}

impl Default for FilterParams {
    fn default() -> Self {
        FilterParams {
            min_count: 200,
            slow_max: 2.0,
            large_mean: 15.0,
            trans_frac: 0.9,
            trans_tol: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    Insufficient,
    Slow,
    Large,
    Translational,
}

impl RejectReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            RejectReason::Insufficient => "insufficient",
            RejectReason::Slow => "slow",
            RejectReason::Large => "large",
            RejectReason::Translational => "translational",
        }
    }
}

impl std::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameVerdict {
    Accept,
    Reject(RejectReason),
}

// Candidate translations are drawn from at most this many matches.
const MAX_TRANSLATION_CANDIDATES: usize = 2000;

/// Largest fraction of matches whose displacement lies within `tol` of a
/// single candidate translation taken from the matches themselves.
pub(crate) fn dominant_translation_fraction(ms: &MatchSet, tol: f32) -> f32 {
    let d: Vec<(f32, f32)> = ms.matches().iter().map(|m| m.displacement()).collect();
    if d.is_empty() {
        return 0.0;
    }
    let step = d.len().div_ceil(MAX_TRANSLATION_CANDIDATES);
    let tol2 = tol * tol;
    let best = d
        .iter()
        .step_by(step)
        .map(|&(cu, cv)| {
            d.iter()
                .filter(|&&(u, v)| (u - cu) * (u - cu) + (v - cv) * (v - cv) <= tol2)
                .count()
        })
        .max()
        .unwrap_or(0);
    best as f32 / d.len() as f32
}

/// Checks run in a fixed order and the first failing one is reported.
pub fn filter_frame_pair(ms: &MatchSet, p: &FilterParams) -> FrameVerdict {
    if ms.len() < p.min_count.max(1) {
        return FrameVerdict::Reject(RejectReason::Insufficient);
    }
    let norms: Vec<f32> = ms.matches().iter().map(|m| m.displacement_norm()).collect();
    let max = norms.iter().cloned().fold(0.0f32, f32::max);
    if max < p.slow_max {
        return FrameVerdict::Reject(RejectReason::Slow);
    }
    let mean = norms.iter().map(|&v| v as f64).sum::<f64>() / norms.len() as f64;
    if mean > p.large_mean as f64 {
        return FrameVerdict::Reject(RejectReason::Large);
    }
    if dominant_translation_fraction(ms, p.trans_tol) >= p.trans_frac {
        return FrameVerdict::Reject(RejectReason::Translational);
    }
    FrameVerdict::Accept
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matching::Match;

    fn set(disp: impl Fn(usize) -> (f32, f32), n: usize) -> MatchSet {
        let m = (0..n)
            .map(|i| {
                let (x, y) = ((i % 40) as f32 + 30.0, (i / 40) as f32 + 30.0);
                let (u, v) = disp(i);
                Match {
                    x1: x,
                    y1: y,
                    x2: x + u,
                    y2: y + v,
                    score: 1.0,
                }
            })
            .collect();
        MatchSet::new(m, (200, 200), (200, 200)).unwrap()
    }

    #[test]
    fn conformance_cases() {
        let p = FilterParams::default();
        let r = |reason| FrameVerdict::Reject(reason);
        assert_eq!(
            filter_frame_pair(&set(|_| (5.0, 0.0), 150), &p),
            r(RejectReason::Insufficient)
        );
        assert_eq!(
            filter_frame_pair(&set(|i| ((i % 3) as f32 * 0.5, 0.0), 400), &p),
            r(RejectReason::Slow)
        );
        assert_eq!(
            filter_frame_pair(&set(|i| (20.0 + (i % 7) as f32, 0.0), 400), &p),
            r(RejectReason::Large)
        );
        assert_eq!(
            filter_frame_pair(&set(|i| if i % 20 == 0 { (-6.0, 2.0) } else { (4.0, 1.0) }, 400), &p),
            r(RejectReason::Translational)
        );
        assert_eq!(
            filter_frame_pair(&set(|i| if i % 2 == 0 { (-3.0, 0.0) } else { (3.0, 0.0) }, 400), &p),
            FrameVerdict::Accept
        );
    }

    #[test]
    fn translation_fraction() {
        let ms = set(|i| if i < 30 { (1.0, 1.0) } else { (8.0, 0.0) }, 100);
        assert!((dominant_translation_fraction(&ms, 1.0) - 0.7).abs() < 1e-6);
    }
}
