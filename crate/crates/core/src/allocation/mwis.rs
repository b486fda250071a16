use std::cmp::Ordering;

use super::graph::ConflictGraph;
use crate::Scalar;

/// Minimum gain for a local-search move to be accepted.
pub const MIN_IMPROVEMENT: f64 = 1e-12;

/// Vertices sorted by descending weight, ties by ascending cell id.
pub fn priority_order<T: Scalar>(graph: &ConflictGraph, weights: &[T]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..graph.len()).collect();
    order.sort_by(|&a, &b| {
        weights[b]
            .partial_cmp(&weights[a])
            .unwrap_or(Ordering::Equal)
            .then(graph.candidate_ids[a].cmp(&graph.candidate_ids[b]))
    });
    order
}

/// Greedy maximum-weight independent set: take vertices in priority order,
/// skipping any that conflict with an earlier pick, until `n` are chosen.
/// Returns vertex indices in the order they were picked.
pub fn greedy_mwis<T: Scalar>(graph: &ConflictGraph, weights: &[T], n: usize) -> Vec<usize> {
    assert_eq!(weights.len(), graph.len(), "one weight per candidate");
    let mut blocked = vec![false; graph.len()];
    let mut selected = Vec::with_capacity(n.min(graph.len()));
    for v in priority_order(graph, weights) {
        if selected.len() >= n {
            break;
        }
        if blocked[v] {
            continue;
        }
        selected.push(v);
        blocked[v] = true;
        for &u in &graph.adjacency[v] {
            blocked[u] = true;
        }
    }
    selected
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalSearchOutcome {
    pub selection: Vec<usize>,
    /// Passes executed, including the final pass that found no move.
    pub passes: usize,
    pub swaps: usize,
}

/// First-improvement 1-swap local search.
///
/// Each pass visits the selection in its current order and, for every
/// selected vertex `s`, scans non-selected vertices `t` in priority order;
/// the first `t` whose weight exceeds `s`'s by more than
/// [`MIN_IMPROVEMENT`] and that conflicts with no other selected vertex
/// replaces `s` in place. When fewer than `n` vertices are selected, a pass
/// also adds any free vertex of positive weight. Stops after a pass with no
/// move or after `max_iters` passes.
pub fn swap_local_search<T: Scalar>(
    graph: &ConflictGraph,
    weights: &[T],
    selection: &[usize],
    n: usize,
    max_iters: usize,
) -> LocalSearchOutcome {
    let order = priority_order(graph, weights);
    let mut selection = selection.to_vec();
    let mut in_set = vec![false; graph.len()];
    // number of selected neighbours of each vertex
    let mut conflicts = vec![0usize; graph.len()];
    for &s in &selection {
        in_set[s] = true;
        for &u in &graph.adjacency[s] {
            conflicts[u] += 1;
        }
    }
    let threshold = T::lit(MIN_IMPROVEMENT);
    let mut passes = 0;
    let mut swaps = 0;
    while passes < max_iters {
        passes += 1;
        let mut moved = false;
        for pos in 0..selection.len() {
            let s = selection[pos];
            let candidate = order.iter().copied().find(|&t| {
                if in_set[t] || weights[t] - weights[s] <= threshold {
                    return false;
                }
                let via_s = usize::from(graph.adjacency[t].binary_search(&s).is_ok());
                conflicts[t] == via_s
            });
            if let Some(t) = candidate {
                in_set[s] = false;
                for &u in &graph.adjacency[s] {
                    conflicts[u] -= 1;
                }
                in_set[t] = true;
                for &u in &graph.adjacency[t] {
                    conflicts[u] += 1;
                }
                selection[pos] = t;
                swaps += 1;
                moved = true;
            }
        }
        for &t in &order {
            if selection.len() >= n {
                break;
            }
            if !in_set[t] && conflicts[t] == 0 && weights[t] > threshold {
                in_set[t] = true;
                for &u in &graph.adjacency[t] {
                    conflicts[u] += 1;
                }
                selection.push(t);
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
    LocalSearchOutcome {
        selection,
        passes,
        swaps,
    }
}

pub fn is_independent(graph: &ConflictGraph, selection: &[usize]) -> bool {
    let mut in_set = vec![false; graph.len()];
    for &s in selection {
        if in_set[s] {
            return false;
        }
        in_set[s] = true;
    }
    selection
        .iter()
        .all(|&s| graph.adjacency[s].iter().all(|&u| !in_set[u]))
}

pub fn total_weight<T: Scalar>(weights: &[T], selection: &[usize]) -> T {
    selection.iter().map(|&i| weights[i]).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn path3() -> ConflictGraph {
        ConflictGraph::from_adjacency(vec![10, 11, 12], vec![vec![1], vec![0, 2], vec![1]]).unwrap()
    }

    /// Exhaustive maximum-weight independent set with at most `n` vertices.
    fn exact(graph: &ConflictGraph, w: &[f64], n: usize) -> f64 {
        let m = graph.len();
        let mut best = 0.0f64;
        for mask in 0u32..(1 << m) {
            if mask.count_ones() as usize > n {
                continue;
            }
            let sel: Vec<usize> = (0..m).filter(|i| mask >> i & 1 == 1).collect();
            if is_independent(graph, &sel) {
                best = best.max(total_weight(w, &sel));
            }
        }
        best
    }

    #[test]
    fn edgeless_takes_top_n() {
        let g = ConflictGraph::from_adjacency((0..5).collect(), vec![vec![]; 5]).unwrap();
        let w = [0.1, 0.9, 0.5, 0.7, 0.3];
        assert_eq!(greedy_mwis(&g, &w, 3), vec![1, 3, 2]);
    }

    #[test]
    fn path_greedy_is_suboptimal_and_one_swap_cannot_fix() {
        let g = path3();
        let w = [5.0, 9.0, 5.0];
        let greedy = greedy_mwis(&g, &w, 2);
        assert_eq!(greedy, vec![1]);
        assert_eq!(exact(&g, &w, 2), 10.0);
        let ls = swap_local_search(&g, &w, &greedy, 2, 50);
        assert_eq!(ls.selection, vec![1]);
        assert_eq!(ls.swaps, 0);
    }

    #[test]
    fn ties_broken_by_cell_id() {
        let g = ConflictGraph::from_adjacency(vec![7, 3, 5, 1], vec![vec![]; 4]).unwrap();
        let w = [1.0; 4];
        assert_eq!(greedy_mwis(&g, &w, 2), vec![3, 1]);
        assert_eq!(greedy_mwis(&g, &w, 2), greedy_mwis(&g, &w, 2));
    }

    #[test]
    fn zero_iterations_is_noop() {
        let g = path3();
        let w = [5.0, 4.0, 5.0];
        let ls = swap_local_search(&g, &w, &[1], 3, 0);
        assert_eq!(ls.selection, vec![1]);
        assert_eq!(ls.passes, 0);
    }

    #[test]
    fn swap_improves_star() {
        // centre 0 adjacent to 1 and 2; 1-2 not adjacent; n=1
        let g = ConflictGraph::from_adjacency(vec![0, 1, 2], vec![vec![1, 2], vec![0], vec![0]]).unwrap();
        let w = [3.0, 4.0, 1.0];
        let ls = swap_local_search(&g, &w, &[0], 1, 10);
        assert_eq!(ls.selection, vec![1]);
    }

    #[test]
    fn optimum_is_a_fixed_point() {
        use rand::Rng;
        let mut rng = crate::seed::rng(77);
        for _ in 0..20 {
            let m = 10;
            let mut adj = vec![Vec::new(); m];
            for a in 0..m {
                for b in a + 1..m {
                    if rng.random_bool(0.3) {
                        adj[a].push(b);
                        adj[b].push(a);
                    }
                }
            }
            let g = ConflictGraph::from_adjacency((0..m).collect(), adj).unwrap();
            let w: Vec<f64> = (0..m).map(|_| rng.random_range(0.1..1.0)).collect();
            // recover one optimal set
            let best = exact(&g, &w, m);
            let opt: Vec<usize> = (0u32..(1 << m))
                .map(|mask| (0..m).filter(|i| mask >> i & 1 == 1).collect::<Vec<_>>())
                .find(|s| is_independent(&g, s) && (total_weight(&w, s) - best).abs() < 1e-12)
                .unwrap();
            let ls = swap_local_search(&g, &w, &opt, m, 50);
            assert_eq!(ls.selection, opt);
        }
    }
}
