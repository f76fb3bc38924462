//! Plain-text match files: one `x1 y1 x2 y2 score` line per match, `#`
//! comments, extra trailing columns (as in DeepMatching output) ignored.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use super::{check_match, Dims, Match, MatchSet};
use crate::error::{Error, Result};

pub fn parse_matches(text: &str, path: &Path, source_dims: Dims, target_dims: Dims) -> Result<MatchSet> {
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut matches = Vec::new();
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() < 5 {
            return Err(err(lineno, format!("expected 5 columns, found {}", cols.len())));
        }
        let mut v = [0f32; 5];
        for (k, c) in cols[..5].iter().enumerate() {
            v[k] = c
                .parse()
                .map_err(|_| err(lineno, format!("cannot parse {c:?} as a number")))?;
        }
        let m = Match {
            x1: v[0],
            y1: v[1],
            x2: v[2],
            y2: v[3],
            score: v[4],
        };
        check_match(&m, source_dims, target_dims).map_err(|msg| err(lineno, msg))?;
        if !seen.insert((m.x1.to_bits(), m.y1.to_bits())) {
            return Err(err(lineno, format!("duplicate source ({}, {})", m.x1, m.y1)));
        }
        matches.push(m);
    }
    Ok(MatchSet::new(matches, source_dims, target_dims).expect("validated above"))
}

pub fn read_matches(path: impl AsRef<Path>, source_dims: Dims, target_dims: Dims) -> Result<MatchSet> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_matches(&text, path, source_dims, target_dims)
}

/// Values are written with the shortest representation that parses back to
/// the same `f32`, so the round trip is exact.
pub fn format_matches(ms: &MatchSet) -> String {
    let mut s = String::with_capacity(ms.len() * 32 + 64);
    let (sw, sh) = ms.source_dims();
    let (tw, th) = ms.target_dims();
    let _ = writeln!(s, "# x1 y1 x2 y2 score (source {sw}x{sh}, target {tw}x{th})");
    for m in ms.matches() {
        let _ = writeln!(s, "{} {} {} {} {}", m.x1, m.y1, m.x2, m.y2, m.score);
    }
    s
}

pub fn write_matches(ms: &MatchSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_matches(ms)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(text: &str) -> Result<MatchSet> {
        parse_matches(text, Path::new("m.txt"), (20, 20), (20, 20))
    }

    #[test]
    fn parses_a_line() {
        let ms = parse("# header\n10 12 13 12 0.9\n").unwrap();
        assert_eq!(
            ms.matches(),
            &[Match {
                x1: 10.0,
                y1: 12.0,
                x2: 13.0,
                y2: 12.0,
                score: 0.9
            }]
        );
    }

    #[test]
    fn out_of_bounds_names_the_line() {
        let e = parse("# c\n1 1 2 2 1\n10 12 25 12 0.9\n").unwrap_err();
        match e {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_and_duplicate_lines() {
        assert!(matches!(parse("1 2 3\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse("1 2 3 x 1\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(
            parse("1 2 3 4 1\n1 2 5 5 1\n"),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn accepts_deepmatching_columns() {
        let ms = parse("4 8 5 9 3.25 17\n").unwrap();
        assert_eq!(ms.matches()[0].score, 3.25);
    }

    proptest! {
        #[test]
        fn text_round_trip_is_exact(pts in proptest::collection::vec(
            (0f32..64.0, 0f32..48.0, 0f32..64.0, 0f32..48.0, 0f32..10.0), 0..60)
        ) {
            let mut seen = HashSet::new();
            let matches: Vec<Match> = pts.into_iter()
                .filter(|p| seen.insert((p.0.to_bits(), p.1.to_bits())))
                .map(|(x1, y1, x2, y2, score)| Match { x1, y1, x2, y2, score })
                .collect();
            let ms = MatchSet::new(matches, (64, 48), (64, 48)).unwrap();
            let back = parse_matches(&format_matches(&ms), Path::new("t"), (64, 48), (64, 48)).unwrap();
            prop_assert_eq!(back, ms);
        }
    }
}
