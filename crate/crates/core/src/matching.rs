//! Streaming maximum matching through the Tutte matrix with all
//! indeterminates set to 1: edge updates become a pair of skew matrix
//! updates, recovery either rebuilds the whole graph (then an offline
//! blossom search finds an exact maximum matching) or soundly declares
//! the matching larger than the budget.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::lowrank::{recover_matrix, MatrixRecovery, SolverConfig};
use crate::sketch::{RealSketch, SisSketch, StreamUpdate};
use crate::RecoveryOutcome;

/// Edge insertion (+1) or deletion (-1), vertices 0-based with u < v.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeUpdate {
    pub u: usize,
    pub v: usize,
    pub delta: i64,
}

impl EdgeUpdate {
    pub fn new(u: usize, v: usize, delta: i64) -> Result<Self> {
        if u >= v {
            return Err(Error::Parameter(format!("edge ({u},{v}) must have u < v")));
        }
        if delta != 1 && delta != -1 {
            return Err(Error::Parameter("edge delta must be +1 or -1".into()));
        }
        Ok(EdgeUpdate { u, v, delta })
    }
}

/// Sketch state for the signed adjacency matrix A' with A'_{uv}=1,
/// A'_{vu}=-1 per live edge.
#[derive(Debug, Clone)]
pub struct TutteSketch {
    pub inner: MatrixRecovery,
    pub k_prime: usize,
}

impl TutteSketch {
    /// `max_edges` bounds the number of edge operations (each edge op is
    /// two matrix updates).
    pub fn new(n: usize, k_prime: usize, max_edges: u64, seed: [u8; 32], c: f64) -> Result<Self> {
        let inner = MatrixRecovery::new(n, 2 * k_prime, 1, 2 * max_edges.max(1), seed, c)?;
        Ok(TutteSketch { inner, k_prime })
    }

    pub fn n(&self) -> usize {
        self.inner.n()
    }

    pub fn finalize(&mut self) {
        self.inner.finalize();
    }
}

/// Forwards one edge update to the matrix sketches as the skew pair
/// (u,v,+delta), (v,u,-delta).
pub fn tutte_stream_update(state: &mut TutteSketch, e: &EdgeUpdate) -> Result<()> {
    if e.v >= state.n() {
        return Err(Error::UpdateOutOfShape {
            index: vec![e.u, e.v],
            shape: state.inner.sis.params.shape.clone(),
        });
    }
    state.inner.update(&StreamUpdate::new(vec![e.u, e.v], e.delta))?;
    state.inner.update(&StreamUpdate::new(vec![e.v, e.u], -e.delta))
}

/// Verdict of the matching query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MatchingOutcome {
    /// The maximum matching size exceeds k'.
    LargerThan(usize),
    /// Exact maximum matching of the recovered graph, edges as (u,v), u < v.
    MaximumMatching(Vec<(usize, usize)>),
}

/// Recover the signed adjacency matrix with rank budget 2k'; on failure
/// soundly declare the matching larger than k' (rank(A') <= 2 * max
/// matching), on success rebuild the graph and match it exactly offline.
pub fn max_matching(
    sis: &SisSketch,
    w: &RealSketch,
    k_prime: usize,
    config: &SolverConfig,
) -> Result<MatchingOutcome> {
    let a = match recover_matrix(sis, w, 2 * k_prime, 1, config)? {
        RecoveryOutcome::NotInClass(_) => return Ok(MatchingOutcome::LargerThan(k_prime)),
        RecoveryOutcome::Recovered(a, _) => a,
    };
    let n = a.n;
    let mut adjacency = vec![vec![false; n]; n];
    for u in 0..n {
        if a.get(u, u) != 0 {
            return Err(Error::Integrity(format!("nonzero diagonal at vertex {u}")));
        }
        for v in u + 1..n {
            let upper = a.get(u, v);
            if !(upper == 0 || upper == 1) || a.get(v, u) != -upper {
                return Err(Error::Integrity(format!(
                    "entries at ({u},{v}) are not skew sign-consistent"
                )));
            }
            if upper == 1 {
                adjacency[u][v] = true;
                adjacency[v][u] = true;
            }
        }
    }
    let mate = blossom_maximum_matching(&adjacency);
    let mut edges: Vec<(usize, usize)> = mate
        .iter()
        .enumerate()
        .filter_map(|(u, &m)| m.filter(|&v| u < v).map(|v| (u, v)))
        .collect();
    edges.sort_unstable();
    Ok(MatchingOutcome::MaximumMatching(edges))
}

/// Classic O(V^3) blossom algorithm for maximum matching in a general
/// graph. Returns the mate of each vertex.
pub fn blossom_maximum_matching(adjacency: &[Vec<bool>]) -> Vec<Option<usize>> {
    const NONE: usize = usize::MAX;
    let n = adjacency.len();
    let mut mate = vec![NONE; n];
    let mut parent = vec![NONE; n];
    let mut base: Vec<usize> = (0..n).collect();

    let lca = |mate: &[usize], parent: &[usize], base: &[usize], a: usize, b: usize| {
        let mut seen = vec![false; n];
        let mut a = a;
        loop {
            a = base[a];
            seen[a] = true;
            if mate[a] == NONE {
                break;
            }
            a = parent[mate[a]];
        }
        let mut b = b;
        loop {
            b = base[b];
            if seen[b] {
                return b;
            }
            b = parent[mate[b]];
        }
    };

    fn mark_path(
        mate: &[usize],
        parent: &mut [usize],
        base: &[usize],
        blossom: &mut [bool],
        mut v: usize,
        b: usize,
        mut child: usize,
    ) {
        while base[v] != b {
            blossom[base[v]] = true;
            blossom[base[mate[v]]] = true;
            parent[v] = child;
            child = mate[v];
            v = parent[mate[v]];
        }
    }

    for root in 0..n {
        if mate[root] != NONE {
            continue;
        }
        // BFS for an augmenting path from this exposed root
        parent.iter_mut().for_each(|p| *p = NONE);
        for (i, b) in base.iter_mut().enumerate() {
            *b = i;
        }
        let mut used = vec![false; n];
        used[root] = true;
        let mut queue = VecDeque::from([root]);
        let mut finish = NONE;
        'bfs: while let Some(v) = queue.pop_front() {
            for to in 0..n {
                if !adjacency[v][to] || base[v] == base[to] || mate[v] == to {
                    continue;
                }
                if to == root || (mate[to] != NONE && parent[mate[to]] != NONE) {
                    // odd cycle: contract the blossom
                    let cur_base = lca(&mate, &parent, &base, v, to);
                    let mut blossom = vec![false; n];
                    mark_path(&mate, &mut parent, &base, &mut blossom, v, cur_base, to);
                    mark_path(&mate, &mut parent, &base, &mut blossom, to, cur_base, v);
                    for i in 0..n {
                        if blossom[base[i]] {
                            base[i] = cur_base;
                            if !used[i] {
                                used[i] = true;
                                queue.push_back(i);
                            }
                        }
                    }
                } else if parent[to] == NONE {
                    parent[to] = v;
                    if mate[to] == NONE {
                        finish = to;
                        break 'bfs;
                    }
                    used[mate[to]] = true;
                    queue.push_back(mate[to]);
                }
            }
        }
        // flip matched/unmatched edges along the augmenting path
        let mut v = finish;
        while v != NONE {
            let pv = parent[v];
            let next = mate[pv];
            mate[v] = pv;
            mate[pv] = v;
            v = next;
        }
    }
    mate.into_iter().map(|m| (m != NONE).then_some(m)).collect()
}

/// Exhaustive maximum-matching size for small graphs; test oracle only.
pub fn brute_force_matching_size(adjacency: &[Vec<bool>]) -> Result<usize> {
    let n = adjacency.len();
    if n > 20 {
        return Err(Error::Capacity(format!("brute-force matching on {n} > 20 vertices")));
    }
    fn go(adjacency: &[Vec<bool>], free: u32, n: usize) -> usize {
        let Some(u) = (0..n).find(|&u| free & (1 << u) != 0) else {
            return 0;
        };
        // either leave u unmatched...
        let mut best = go(adjacency, free & !(1 << u), n);
        // ...or match it to any free neighbor
        for v in u + 1..n {
            if adjacency[u][v] && free & (1 << v) != 0 {
                best = best.max(1 + go(adjacency, free & !(1 << u) & !(1 << v), n));
            }
        }
        best
    }
    Ok(go(adjacency, (1u32 << n) - 1, n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lowrank::IntMatrix;
    use crate::oracle::ByteStream;

    fn edge(u: usize, v: usize, d: i64) -> EdgeUpdate {
        EdgeUpdate::new(u, v, d).unwrap()
    }

    fn stream_edges(state: &mut TutteSketch, edges: &[(usize, usize)]) {
        for &(u, v) in edges {
            tutte_stream_update(state, &edge(u, v, 1)).unwrap();
        }
    }

    fn query(state: &TutteSketch) -> MatchingOutcome {
        max_matching(
            &state.inner.sis,
            &state.inner.real,
            state.k_prime,
            &SolverConfig::default(),
        )
        .unwrap()
    }

    #[test]
    fn edge_update_validation() {
        assert!(EdgeUpdate::new(2, 2, 1).is_err());
        assert!(EdgeUpdate::new(3, 1, 1).is_err());
        assert!(EdgeUpdate::new(0, 1, 2).is_err());
        assert!(EdgeUpdate::new(0, 1, -1).is_ok());
    }

    #[test]
    fn insert_then_delete_returns_to_zero() {
        let mut state = TutteSketch::new(4, 1, 16, [61; 32], 3.0).unwrap();
        let fresh = state.clone();
        tutte_stream_update(&mut state, &edge(0, 1, 1)).unwrap();
        tutte_stream_update(&mut state, &edge(0, 1, -1)).unwrap();
        assert_eq!(state.inner.sis.residues(), fresh.inner.sis.residues());
        assert_eq!(state.inner.real.measurements(), fresh.inner.real.measurements());
    }

    #[test]
    fn single_edge_recovers_skew_pair() {
        let mut state = TutteSketch::new(4, 1, 16, [62; 32], 3.0).unwrap();
        tutte_stream_update(&mut state, &edge(0, 1, 1)).unwrap();
        let out = recover_matrix(
            &state.inner.sis,
            &state.inner.real,
            2,
            1,
            &SolverConfig::default(),
        )
        .unwrap();
        let a = out.recovered().unwrap();
        let mut expected = IntMatrix::zero(4);
        expected.data[1] = 1;
        expected.data[4] = -1;
        assert_eq!(a, &expected);
    }

    #[test]
    fn triangle_has_rank_two() {
        // signed adjacency of the triangle with all indeterminates at 1
        let a = IntMatrix::from_rows(&[vec![0, 1, 1], vec![-1, 0, 1], vec![-1, -1, 0]]).unwrap();
        assert_eq!(a.exact_rank(), 2);
    }

    #[test]
    fn empty_graph_matches_empty() {
        let state = TutteSketch::new(4, 1, 16, [63; 32], 3.0).unwrap();
        assert_eq!(query(&state), MatchingOutcome::MaximumMatching(vec![]));
    }

    #[test]
    fn path_of_three_edges() {
        let mut state = TutteSketch::new(4, 2, 16, [64; 32], 3.0).unwrap();
        stream_edges(&mut state, &[(0, 1), (1, 2), (2, 3)]);
        match query(&state) {
            MatchingOutcome::MaximumMatching(m) => assert_eq!(m, vec![(0, 1), (2, 3)]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn three_disjoint_edges_exceed_budget_one() {
        let mut state = TutteSketch::new(6, 1, 16, [65; 32], 3.0).unwrap();
        stream_edges(&mut state, &[(0, 1), (2, 3), (4, 5)]);
        assert_eq!(query(&state), MatchingOutcome::LargerThan(1));
    }

    #[test]
    fn malformed_stream_raises_integrity_error() {
        // a lone (u,v,+1) without its skew partner is not a valid A'
        let mut state = TutteSketch::new(4, 1, 16, [66; 32], 3.0).unwrap();
        state.inner.update(&StreamUpdate::new(vec![0, 1], 1)).unwrap();
        assert!(matches!(
            max_matching(&state.inner.sis, &state.inner.real, 1, &SolverConfig::default()),
            Err(Error::Integrity(_))
        ));
    }

    fn random_graph(stream: &mut ByteStream, n: usize, density_num: u64) -> Vec<(usize, usize)> {
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if stream.next_u64() % 10 < density_num {
                    edges.push((u, v));
                }
            }
        }
        edges
    }

    fn adjacency_of(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<bool>> {
        let mut adjacency = vec![vec![false; n]; n];
        for &(u, v) in edges {
            adjacency[u][v] = true;
            adjacency[v][u] = true;
        }
        adjacency
    }

    #[test]
    fn blossom_matches_brute_force_on_random_graphs() {
        let mut stream = ByteStream::new(&[71; 32], b"matching-unit");
        for trial in 0..40 {
            let n = 4 + (stream.next_u64() % 7) as usize;
            let edges = random_graph(&mut stream, n, 4);
            let adjacency = adjacency_of(n, &edges);
            let mate = blossom_maximum_matching(&adjacency);
            let size = mate.iter().flatten().count() / 2;
            // validity: mutual mates along real edges
            for (u, &m) in mate.iter().enumerate() {
                if let Some(v) = m {
                    assert!(adjacency[u][v], "trial {trial}: matched non-edge");
                    assert_eq!(mate[v], Some(u), "trial {trial}: mates not mutual");
                }
            }
            assert_eq!(
                size,
                brute_force_matching_size(&adjacency).unwrap(),
                "trial {trial}: blossom not maximum on {edges:?}"
            );
        }
    }

    #[test]
    fn signed_rank_bounded_by_twice_matching() {
        let mut stream = ByteStream::new(&[72; 32], b"matching-unit-2");
        for _ in 0..30 {
            let n = 4 + (stream.next_u64() % 7) as usize;
            let edges = random_graph(&mut stream, n, 3);
            let mut a = IntMatrix::zero(n);
            for &(u, v) in &edges {
                a.data[u * n + v] = 1;
                a.data[v * n + u] = -1;
            }
            let matching = brute_force_matching_size(&adjacency_of(n, &edges)).unwrap();
            assert!(a.exact_rank() <= 2 * matching);
        }
    }

    #[test]
    fn end_to_end_matches_brute_force() {
        let mut stream = ByteStream::new(&[73; 32], b"matching-unit-3");
        for trial in 0..10u8 {
            let n = 5 + (stream.next_u64() % 4) as usize;
            let edges = random_graph(&mut stream, n, 3);
            let truth = brute_force_matching_size(&adjacency_of(n, &edges)).unwrap();
            let k_prime = (stream.next_u64() % 4) as usize;
            let mut state = TutteSketch::new(n, k_prime, 64, [trial; 32], 3.0).unwrap();
            stream_edges(&mut state, &edges);
            match query(&state) {
                MatchingOutcome::LargerThan(k) => {
                    assert!(truth > k, "trial {trial}: unsound declaration")
                }
                MatchingOutcome::MaximumMatching(m) => {
                    assert_eq!(m.len(), truth, "trial {trial}: not maximum");
                    let mut seen = vec![false; n];
                    for &(u, v) in &m {
                        assert!(edges.contains(&(u, v)), "trial {trial}: phantom edge");
                        assert!(!seen[u] && !seen[v], "trial {trial}: not disjoint");
                        seen[u] = true;
                        seen[v] = true;
                    }
                }
            }
        }
    }
}
