//! Semi-dense correspondences between consecutive frames.
//!
//! Matches are fixed for a whole run. They are either read from text files
//! (including raw DeepMatching output) or computed with the built-in
//! coarse-to-fine NCC block matcher.

mod block;
mod filter;
mod io;

pub use block::{block_match, BlockMatchParams};
pub use filter::{filter_frame_pair, FilterParams, FrameVerdict, RejectReason};
pub use io::{format_matches, parse_matches, read_matches, write_matches};

use std::collections::HashSet;

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    pub x1: f32,
    pub y1: f32,
    pub x2: f32,
    pub y2: f32,
    pub score: f32,
}

impl Match {
    pub fn displacement(&self) -> (f32, f32) {
        (self.x2 - self.x1, self.y2 - self.y1)
    }

    pub fn displacement_norm(&self) -> f32 {
        let (u, v) = self.displacement();
        u.hypot(v)
    }
}

/// Width and height in pixels.
pub type Dims = (usize, usize);

#[derive(Debug, Clone, PartialEq)]
pub struct MatchSet {
    matches: Vec<Match>,
    source_dims: Dims,
    target_dims: Dims,
}

fn in_bounds(x: f32, y: f32, dims: Dims) -> bool {
    x >= 0.0 && y >= 0.0 && x < dims.0 as f32 && y < dims.1 as f32
}

impl MatchSet {
    /// Validates bounds, finiteness and uniqueness of source locations.
    pub fn new(matches: Vec<Match>, source_dims: Dims, target_dims: Dims) -> Result<Self> {
        let mut seen = HashSet::with_capacity(matches.len());
        for (i, m) in matches.iter().enumerate() {
            check_match(m, source_dims, target_dims).map_err(|msg| invalid!("match {i}: {msg}"))?;
            if !seen.insert((m.x1.to_bits(), m.y1.to_bits())) {
                return Err(invalid!("match {i}: duplicate source ({}, {})", m.x1, m.y1));
            }
        }
        Ok(MatchSet {
            matches,
            source_dims,
            target_dims,
        })
    }

    pub fn empty(source_dims: Dims, target_dims: Dims) -> Self {
        MatchSet {
            matches: Vec::new(),
            source_dims,
            target_dims,
        }
    }

    pub fn matches(&self) -> &[Match] {
        &self.matches
    }

    pub fn len(&self) -> usize {
        self.matches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }

    pub fn source_dims(&self) -> Dims {
        self.source_dims
    }

    pub fn target_dims(&self) -> Dims {
        self.target_dims
    }
}

pub(crate) fn check_match(m: &Match, src: Dims, dst: Dims) -> std::result::Result<(), String> {
    if ![m.x1, m.y1, m.x2, m.y2, m.score].iter().all(|v| v.is_finite()) {
        return Err("non-finite value".into());
    }
    if m.score < 0.0 {
        return Err(format!("negative score {}", m.score));
    }
    if !in_bounds(m.x1, m.y1, src) {
        return Err(format!("source ({}, {}) outside {}x{}", m.x1, m.y1, src.0, src.1));
    }
    if !in_bounds(m.x2, m.y2, dst) {
        return Err(format!("target ({}, {}) outside {}x{}", m.x2, m.y2, dst.0, dst.1));
    }
    Ok(())
}
