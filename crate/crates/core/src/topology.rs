//! Undirected communication graphs: ring lattices and Watts-Strogatz
//! small worlds.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("invalid topology parameter: {0}")]
    InvalidParameter(String),
    #[error("node {index} out of range for graph with {n} nodes")]
    OutOfRange { index: usize, n: usize },
}

/// Undirected simple graph stored as sorted adjacency lists.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    adjacency: Vec<Vec<usize>>,
}

impl Graph {
    /// Graph with `n` nodes and no edges.
    pub fn empty(n: usize) -> Self {
        Graph {
            adjacency: vec![Vec::new(); n],
        }
    }

    fn from_sets(sets: Vec<BTreeSet<usize>>) -> Self {
        Graph {
            adjacency: sets.into_iter().map(|s| s.into_iter().collect()).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    /// Neighbours of `i` in ascending order.
    pub fn neighbors(&self, i: usize) -> Result<&[usize], TopologyError> {
        self.adjacency
            .get(i)
            .map(Vec::as_slice)
            .ok_or(TopologyError::OutOfRange { index: i, n: self.n() })
    }

    pub(crate) fn adjacent(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    /// Edges `(i, j)` with `i < j`, ascending.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(i, nbrs)| nbrs.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
    }

    /// Number of connected components.
    pub fn component_count(&self) -> usize {
        let mut seen = vec![false; self.n()];
        let mut components = 0;
        let mut stack = Vec::new();
        for start in 0..self.n() {
            if seen[start] {
                continue;
            }
            components += 1;
            seen[start] = true;
            stack.push(start);
            while let Some(v) = stack.pop() {
                for &w in &self.adjacency[v] {
                    if !seen[w] {
                        seen[w] = true;
                        stack.push(w);
                    }
                }
            }
        }
        components
    }

    pub fn is_connected(&self) -> bool {
        self.component_count() <= 1
    }

    /// One `i j` line per edge, `i < j`, ascending.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for (i, j) in self.edges() {
            writeln!(out, "{i} {j}").unwrap();
        }
        out
    }

    pub fn parse_edge_list(n: usize, text: &str) -> Result<Self, TopologyError> {
        let mut sets = vec![BTreeSet::new(); n];
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let parsed: Option<(usize, usize)> = line
                .split_once(' ')
                .and_then(|(a, b)| Some((a.trim().parse().ok()?, b.trim().parse().ok()?)));
            let (i, j) =
                parsed.ok_or_else(|| TopologyError::InvalidParameter(format!("line {}: {line:?}", lineno + 1)))?;
            if i >= n || j >= n || i == j {
                return Err(TopologyError::InvalidParameter(format!(
                    "line {}: bad edge {i} {j}",
                    lineno + 1
                )));
            }
            sets[i].insert(j);
            sets[j].insert(i);
        }
        Ok(Graph::from_sets(sets))
    }
}

fn check_lattice(n: usize, k: usize) -> Result<(), TopologyError> {
    if n < 3 {
        return Err(TopologyError::InvalidParameter(format!(
            "need at least 3 nodes, got {n}"
        )));
    }
    if !k.is_multiple_of(2) {
        return Err(TopologyError::InvalidParameter(format!(
            "degree k must be even, got {k}"
        )));
    }
    if k >= n {
        return Err(TopologyError::InvalidParameter(format!(
            "degree k = {k} must be below n = {n}"
        )));
    }
    Ok(())
}

fn lattice_sets(n: usize, k: usize) -> Vec<BTreeSet<usize>> {
    let mut sets = vec![BTreeSet::new(); n];
    for i in 0..n {
        for offset in 1..=k / 2 {
            let j = (i + offset) % n;
            sets[i].insert(j);
            sets[j].insert(i);
        }
    }
    sets
}

/// Ring of `n` nodes, each joined to its `k/2` nearest neighbours per side.
pub fn ring_lattice(n: usize, k: usize) -> Result<Graph, TopologyError> {
    check_lattice(n, k)?;
    Ok(Graph::from_sets(lattice_sets(n, k)))
}

/// Watts-Strogatz rewiring of `ring_lattice(n, k)`.
///
/// Lattice edges `(i, i + offset)` are visited in order of offset, then `i`.
/// Each is rewired with probability `p_rewire` by keeping `i` and moving the
/// far endpoint to a uniformly chosen node that is neither `i` nor already
/// adjacent to it. When `i` is adjacent to everyone the edge stays put.
pub fn watts_strogatz<R: Rng + ?Sized>(n: usize, k: usize, p_rewire: f64, rng: &mut R) -> Result<Graph, TopologyError> {
    check_lattice(n, k)?;
    if !(0.0..=1.0).contains(&p_rewire) {
        return Err(TopologyError::InvalidParameter(format!(
            "rewiring probability {p_rewire} outside [0, 1]"
        )));
    }
    let mut sets = lattice_sets(n, k);
    if p_rewire == 0.0 {
        return Ok(Graph::from_sets(sets));
    }
    let mut candidates = Vec::with_capacity(n);
    for offset in 1..=k / 2 {
        for i in 0..n {
            let j = (i + offset) % n;
            if !sets[i].contains(&j) {
                // already moved away by an earlier rewiring
                continue;
            }
            if rng.random::<f64>() >= p_rewire {
                continue;
            }
            candidates.clear();
            candidates.extend((0..n).filter(|&c| c != i && !sets[i].contains(&c)));
            if candidates.is_empty() {
                continue;
            }
            let target = candidates[rng.random_range(0..candidates.len())];
            sets[i].remove(&j);
            sets[j].remove(&i);
            sets[i].insert(target);
            sets[target].insert(i);
        }
    }
    Ok(Graph::from_sets(sets))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn assert_simple_symmetric(g: &Graph) {
        for i in 0..g.n() {
            let nbrs = g.neighbors(i).unwrap();
            assert!(nbrs.windows(2).all(|w| w[0] < w[1]), "unsorted or duplicate at {i}");
            for &j in nbrs {
                assert_ne!(i, j, "self-loop at {i}");
                assert!(g.neighbors(j).unwrap().contains(&i), "asymmetric edge {i}-{j}");
            }
        }
    }

    #[test]
    fn ring_is_cycle() {
        let g = ring_lattice(50, 2).unwrap();
        assert!((0..50).all(|i| g.degree(i) == 2));
        assert_eq!(g.edge_count(), 50);
        assert!(g.is_connected());
    }

    #[test]
    fn saturated_ring_is_complete() {
        let g = ring_lattice(5, 4).unwrap();
        for i in 0..5 {
            let expected: Vec<usize> = (0..5).filter(|&j| j != i).collect();
            assert_eq!(g.neighbors(i).unwrap(), expected.as_slice());
        }
        assert_eq!(g.neighbors(2).unwrap(), &[0, 1, 3, 4]);
    }

    #[test]
    fn ring_neighbors_are_ascending() {
        let g = ring_lattice(5, 2).unwrap();
        assert_eq!(g.neighbors(0).unwrap(), &[1, 4]);
        assert_eq!(g.neighbors(5), Err(TopologyError::OutOfRange { index: 5, n: 5 }));
    }

    #[test]
    fn lattice_parameter_errors() {
        assert!(ring_lattice(50, 3).is_err());
        assert!(ring_lattice(4, 4).is_err());
        assert!(ring_lattice(2, 0).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(watts_strogatz(50, 2, 1.5, &mut rng).is_err());
    }

    #[test]
    fn no_rewiring_reproduces_ring() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        assert_eq!(
            watts_strogatz(50, 2, 0.0, &mut rng).unwrap(),
            ring_lattice(50, 2).unwrap()
        );
    }

    #[test]
    fn rewiring_preserves_edges_over_many_seeds() {
        for seed in 0..1000 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = watts_strogatz(50, 2, 0.2, &mut rng).unwrap();
            assert_eq!(g.edge_count(), 50);
            assert_simple_symmetric(&g);
        }
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = watts_strogatz(50, 2, 1.0, &mut rng).unwrap();
            let degree_sum: usize = (0..50).map(|i| g.degree(i)).sum();
            assert_eq!(degree_sum, 100);
        }
    }

    #[test]
    fn generation_is_pure_in_seed() {
        let a = watts_strogatz(50, 4, 0.2, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        let b = watts_strogatz(50, 4, 0.2, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn edge_list_format() {
        let g = ring_lattice(4, 2).unwrap();
        assert_eq!(g.to_edge_list(), "0 1\n0 3\n1 2\n2 3\n");
        assert_eq!(Graph::parse_edge_list(4, &g.to_edge_list()).unwrap(), g);
    }

    proptest! {
        #[test]
        fn watts_strogatz_invariants(n in 3usize..60, half_k in 0usize..4, p in 0.0..=1.0f64, seed in any::<u64>()) {
            let k = 2 * half_k;
            prop_assume!(k < n);
            let g = watts_strogatz(n, k, p, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            prop_assert_eq!(g.edge_count(), n * k / 2);
            assert_simple_symmetric(&g);
            prop_assert_eq!(Graph::parse_edge_list(n, &g.to_edge_list()).unwrap(), g);
        }
    }
}
