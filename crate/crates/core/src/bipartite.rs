//! Maximum-cardinality bipartite matching (Hopcroft-Karp).

use std::collections::VecDeque;

const FREE: usize = usize::MAX;

/// Maximum matching between `adj.len()` left vertices and `n_right` right
/// vertices. `adj[u]` lists the right neighbours of `u` in preference order.
///
/// A valid partial matching may be passed as a warm start; augmenting paths
/// never unmatch a vertex, so every left vertex matched initially stays
/// matched (possibly to a different partner).
pub fn max_matching(adj: &[Vec<usize>], n_right: usize, initial: Option<&[Option<usize>]>) -> Vec<Option<usize>> {
    let n_left = adj.len();
    let mut ml = vec![FREE; n_left];
    let mut mr = vec![FREE; n_right];
    if let Some(init) = initial {
        assert_eq!(init.len(), n_left, "initial matching has the wrong length");
        for (u, v) in init.iter().enumerate() {
            if let Some(v) = *v {
                assert!(adj[u].contains(&v) && mr[v] == FREE, "initial matching is invalid");
                ml[u] = v;
                mr[v] = u;
            }
        }
    }
    let mut dist = vec![0usize; n_left];
    let mut queue = VecDeque::new();
    let mut it = vec![0usize; n_left];
    let mut stack: Vec<usize> = Vec::new();
    loop {
        // BFS layering from free left vertices
        queue.clear();
        for u in 0..n_left {
            if ml[u] == FREE {
                dist[u] = 0;
                queue.push_back(u);
            } else {
                dist[u] = usize::MAX;
            }
        }
        let mut found = false;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                let w = mr[v];
                if w == FREE {
                    found = true;
                } else if dist[w] == usize::MAX {
                    dist[w] = dist[u] + 1;
                    queue.push_back(w);
                }
            }
        }
        if !found {
            break;
        }
        // iterative DFS along the layers
        it.iter_mut().for_each(|x| *x = 0);
        for root in 0..n_left {
            if ml[root] != FREE {
                continue;
            }
            stack.clear();
            stack.push(root);
            while let Some(&u) = stack.last() {
                if it[u] == adj[u].len() {
                    dist[u] = usize::MAX;
                    stack.pop();
                    if let Some(&parent) = stack.last() {
                        it[parent] += 1;
                    }
                    continue;
                }
                let v = adj[u][it[u]];
                let w = mr[v];
                if w == FREE {
                    // flip the path held on the stack
                    let mut v = v;
                    while let Some(u) = stack.pop() {
                        let prev = ml[u];
                        ml[u] = v;
                        mr[v] = u;
                        v = prev;
                    }
                } else if dist[w] == dist[u] + 1 {
                    stack.push(w);
                } else {
                    it[u] += 1;
                }
            }
        }
    }
    ml.into_iter().map(|v| (v != FREE).then_some(v)).collect()
}

pub fn matching_size(m: &[Option<usize>]) -> usize {
    m.iter().filter(|v| v.is_some()).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute(adj: &[Vec<usize>], n_right: usize) -> usize {
        fn go(u: usize, adj: &[Vec<usize>], used: &mut Vec<bool>) -> usize {
            if u == adj.len() {
                return 0;
            }
            let mut best = go(u + 1, adj, used);
            for &v in &adj[u] {
                if !used[v] {
                    used[v] = true;
                    best = best.max(1 + go(u + 1, adj, used));
                    used[v] = false;
                }
            }
            best
        }
        go(0, adj, &mut vec![false; n_right])
    }

    fn check_valid(adj: &[Vec<usize>], m: &[Option<usize>], n_right: usize) {
        let mut used = vec![false; n_right];
        for (u, v) in m.iter().enumerate() {
            if let Some(v) = *v {
                assert!(adj[u].contains(&v));
                assert!(!used[v]);
                used[v] = true;
            }
        }
    }

    #[test]
    fn needs_augmentation() {
        // greedy 0->0 blocks 1; optimum is 0->1, 1->0
        let adj = vec![vec![0, 1], vec![0]];
        let m = max_matching(&adj, 2, None);
        assert_eq!(matching_size(&m), 2);
        let m = max_matching(&adj, 2, Some(&[Some(0), None]));
        assert_eq!(m, vec![Some(1), Some(0)]);
    }

    proptest! {
        #[test]
        fn cardinality_matches_brute_force(
            n_left in 0usize..8, n_right in 1usize..8,
            edges in proptest::collection::vec((0usize..8, 0usize..8), 0..30),
        ) {
            let mut adj = vec![Vec::new(); n_left];
            for (u, v) in edges {
                if u < n_left && v < n_right && !adj[u].contains(&v) {
                    adj[u].push(v);
                }
            }
            let m = max_matching(&adj, n_right, None);
            check_valid(&adj, &m, n_right);
            prop_assert_eq!(matching_size(&m), brute(&adj, n_right));
        }

        #[test]
        fn warm_start_keeps_matched_vertices(
            n in 1usize..8,
            edges in proptest::collection::vec((0usize..8, 0usize..8), 0..30),
        ) {
            let mut adj = vec![Vec::new(); n];
            for (u, v) in edges {
                if u < n && v < n && !adj[u].contains(&v) {
                    adj[u].push(v);
                }
            }
            // greedy warm start
            let mut used = vec![false; n];
            let init: Vec<Option<usize>> = adj.iter().map(|a| {
                let v = a.iter().copied().find(|&v| !used[v]);
                if let Some(v) = v { used[v] = true; }
                v
            }).collect();
            let m = max_matching(&adj, n, Some(&init));
            check_valid(&adj, &m, n);
            prop_assert_eq!(matching_size(&m), brute(&adj, n));
            for (a, b) in init.iter().zip(&m) {
                if a.is_some() { prop_assert!(b.is_some()); }
            }
        }
    }
}
