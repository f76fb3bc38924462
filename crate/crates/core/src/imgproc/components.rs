//! Edge patch to segmentation conversion.

/// Labels the 4-connected components of the non-edge pixels of a `size x
/// size` patch with `1..=k`; edge pixels get 0. Returns the labels and `k`.
///
/// 4-connectivity of the background is the dual of 8-connected edge
/// curves, so a one-pixel diagonal edge still splits the patch.
pub fn connected_components(edges: &[bool], size: usize) -> (Vec<u32>, usize) {
    assert_eq!(edges.len(), size * size, "patch must be square");
    let mut labels = vec![0u32; size * size];
    let mut k = 0u32;
    let mut stack = Vec::new();
    for start in 0..size * size {
        if edges[start] || labels[start] != 0 {
            continue;
        }
        k += 1;
        labels[start] = k;
        stack.push(start);
        while let Some(p) = stack.pop() {
            let (x, y) = (p % size, p / size);
            let mut visit = |q: usize| {
                if !edges[q] && labels[q] == 0 {
                    labels[q] = k;
                    stack.push(q);
                }
            };
            if x > 0 {
                visit(p - 1);
            }
            if x + 1 < size {
                visit(p + 1);
            }
            if y > 0 {
                visit(p - size);
            }
            if y + 1 < size {
                visit(p + size);
            }
        }
    }
    (labels, k as usize)
}

/// Full segmentation of an edge patch: background components as above, with
/// every edge pixel absorbed into the smallest adjacent component label
/// (repeated until all edge pixels are assigned). Labels start at 0.
pub fn patch_segmentation(edges: &[bool], size: usize) -> (Vec<u8>, usize) {
    let (mut labels, k) = connected_components(edges, size);
    if k == 0 {
        return (vec![0; size * size], 1);
    }
    loop {
        let mut changed = false;
        let snapshot = labels.clone();
        for p in 0..size * size {
            if snapshot[p] != 0 {
                continue;
            }
            let (x, y) = (p % size, p / size);
            let mut best = u32::MAX;
            let mut consider = |q: usize| {
                if snapshot[q] != 0 {
                    best = best.min(snapshot[q]);
                }
            };
            if x > 0 {
                consider(p - 1);
            }
            if x + 1 < size {
                consider(p + 1);
            }
            if y > 0 {
                consider(p - size);
            }
            if y + 1 < size {
                consider(p + size);
            }
            if best != u32::MAX {
                labels[p] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let seg = labels.iter().map(|&l| (l.max(1) - 1).min(255) as u8).collect();
    (seg, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn patch(rows: &[&str]) -> Vec<bool> {
        rows.iter().flat_map(|r| r.chars().map(|c| c == '#')).collect()
    }

    #[test]
    fn empty_patch_is_one_component() {
        assert_eq!(connected_components(&[false; 64], 8).1, 1);
    }

    #[test]
    fn full_width_line_splits() {
        let mut e = vec![false; 64];
        for x in 0..8 {
            e[3 * 8 + x] = true;
        }
        let (labels, k) = connected_components(&e, 8);
        assert_eq!(k, 2);
        assert_eq!(labels[0], 1);
        assert_eq!(labels[63], 2);
        assert_eq!(labels[3 * 8], 0);
    }

    #[test]
    fn stub_does_not_split() {
        // hand flood fill: the stub ends at column 4, so the region wraps around it
        let e = patch(&[
            "........", "........", "........", "#####...", "........", "........", "........", "........",
        ]);
        assert_eq!(connected_components(&e, 8).1, 1);
    }

    #[test]
    fn diagonal_line_splits() {
        let e: Vec<bool> = (0..64).map(|p| p % 8 == p / 8).collect();
        assert_eq!(connected_components(&e, 8).1, 2);
    }

    #[test]
    fn segmentation_assigns_every_pixel() {
        let mut e = vec![false; 256];
        for y in 0..16 {
            e[y * 16 + 7] = true;
        }
        let (seg, k) = patch_segmentation(&e, 16);
        assert_eq!(k, 2);
        for y in 0..16 {
            assert_eq!(seg[y * 16 + 6], 0);
            assert_eq!(seg[y * 16 + 7], 0);
            assert_eq!(seg[y * 16 + 8], 1);
        }
    }

    /// Independent oracle: recursive flood fill counting regions.
    fn brute_count(e: &[bool], n: usize) -> usize {
        fn fill(e: &[bool], seen: &mut [bool], n: usize, x: isize, y: isize) {
            if x < 0 || y < 0 || x >= n as isize || y >= n as isize {
                return;
            }
            let p = y as usize * n + x as usize;
            if e[p] || seen[p] {
                return;
            }
            seen[p] = true;
            fill(e, seen, n, x + 1, y);
            fill(e, seen, n, x - 1, y);
            fill(e, seen, n, x, y + 1);
            fill(e, seen, n, x, y - 1);
        }
        let mut seen = vec![false; n * n];
        let mut count = 0;
        for p in 0..n * n {
            if !e[p] && !seen[p] {
                count += 1;
                fill(e, &mut seen, n, (p % n) as isize, (p / n) as isize);
            }
        }
        count
    }

    proptest! {
        #[test]
        fn agrees_with_flood_fill(n in 1usize..=16, bits in proptest::collection::vec(any::<bool>(), 256)) {
            let e = &bits[..n * n];
            prop_assert_eq!(connected_components(e, n).1, brute_count(e, n));
        }
    }
}
