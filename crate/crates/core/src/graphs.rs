//! Directed communication graphs, connectivity checks and column-stochastic weights.
//!
//! Nodes are 0-indexed in memory. An edge `(j, i)` means node `j` can send to
//! node `i`; every digraph carries all self-loops `(i, i)`.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Digraph {
    node_count: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl Digraph {
    /// Builds a digraph from `(from, to)` pairs and adds every self-loop.
    pub fn new(node_count: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::InvalidArgument("a digraph needs at least one node".into()));
        }
        let mut set: BTreeSet<(usize, usize)> = (0..node_count).map(|i| (i, i)).collect();
        for (j, i) in edges {
            if j >= node_count || i >= node_count {
                return Err(Error::InvalidArgument(format!("edge ({j},{i}) out of range for {node_count} nodes")));
            }
            set.insert((j, i));
        }
        Ok(Self { node_count, edges: set })
    }

    /// Directed cycle `0 -> 1 -> ... -> n-1 -> 0` plus self-loops.
    pub fn cycle(node_count: usize) -> Result<Self> {
        Self::new(node_count, (0..node_count).map(|i| (i, (i + 1) % node_count)))
    }

    /// Every ordered pair is an edge.
    pub fn complete(node_count: usize) -> Result<Self> {
        let n = node_count;
        Self::new(n, (0..n).flat_map(|j| (0..n).map(move |i| (j, i))))
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.edges.contains(&(from, to))
    }

    /// In-neighbors of `i`, itself included.
    pub fn in_neighbors(&self, i: usize) -> Vec<usize> {
        self.edges.iter().filter(|&&(_, to)| to == i).map(|&(from, _)| from).collect()
    }

    pub fn out_neighbors(&self, j: usize) -> Vec<usize> {
        self.edges.range((j, 0)..(j + 1, 0)).map(|&(_, to)| to).collect()
    }

    /// Out-degree counting the self-loop.
    pub fn out_degree(&self, j: usize) -> usize {
        self.edges.range((j, 0)..(j + 1, 0)).count()
    }

    pub fn is_symmetric(&self) -> bool {
        self.edges.iter().all(|&(j, i)| self.edges.contains(&(i, j)))
    }

    fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.node_count];
        for &(j, i) in &self.edges {
            if i != j {
                adj[j].push(i);
            }
        }
        adj
    }

    /// Strongly connected components (Tarjan, iterative).
    pub fn strongly_connected_components(&self) -> Vec<Vec<usize>> {
        tarjan_scc(&self.adjacency())
    }

    pub fn is_strongly_connected(&self) -> bool {
        self.strongly_connected_components().len() == 1
    }

    /// Subgraph induced by one round of block selections: edge `(j, i)` survives
    /// iff `selections[j] == block`. Self-loops are always kept.
    pub fn block_subgraph(&self, selections: &[usize], block: usize) -> Digraph {
        let edges = self.edges.iter().copied().filter(|&(j, i)| j == i || selections[j] == block).collect();
        Digraph { node_count: self.node_count, edges }
    }

    /// Second-smallest eigenvalue of the Laplacian of the underlying undirected graph.
    pub fn algebraic_connectivity(&self) -> f64 {
        let n = self.node_count;
        if n < 2 {
            return 0.0;
        }
        let mut adj = DMatrix::<f64>::zeros(n, n);
        for &(j, i) in &self.edges {
            if i != j {
                adj[(i, j)] = 1.0;
                adj[(j, i)] = 1.0;
            }
        }
        let mut lap = -adj.clone();
        for i in 0..n {
            lap[(i, i)] = adj.row(i).sum();
        }
        let mut eig: Vec<f64> = SymmetricEigen::new(lap).eigenvalues.iter().copied().collect();
        eig.sort_by(f64::total_cmp);
        eig[1]
    }

    /// Edge-list text: first line `N`, then one `j i` line per edge, 1-indexed.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("{}\n", self.node_count);
        for &(j, i) in &self.edges {
            let _ = writeln!(out, "{} {}", j + 1, i + 1);
        }
        out
    }

    pub fn from_edge_list(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::InvalidArgument(format!("edge list: {msg}"));
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let n: usize = lines
            .next()
            .ok_or_else(|| bad("missing node count".into()))?
            .parse()
            .map_err(|e| bad(format!("node count: {e}")))?;
        let mut edges = Vec::new();
        for line in lines {
            let mut parts = line.split_whitespace();
            let mut next = || -> Result<usize> {
                let tok = parts.next().ok_or_else(|| bad(format!("short line '{line}'")))?;
                let v: usize = tok.parse().map_err(|e| bad(format!("'{tok}': {e}")))?;
                if v == 0 {
                    return Err(bad("node ids are 1-indexed".into()));
                }
                Ok(v - 1)
            };
            let j = next()?;
            let i = next()?;
            if parts.next().is_some() {
                return Err(bad(format!("trailing tokens in '{line}'")));
            }
            edges.push((j, i));
        }
        Self::new(n, edges)
    }

    pub fn write_edge_list(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_edge_list())?;
        Ok(())
    }

    pub fn read_edge_list(path: &Path) -> Result<Self> {
        Self::from_edge_list(&std::fs::read_to_string(path)?)
    }
}

fn tarjan_scc(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    const UNSEEN: usize = usize::MAX;
    let n = adj.len();
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut comps = Vec::new();
    let mut counter = 0;

    for root in 0..n {
        if index[root] != UNSEEN {
            continue;
        }
        // (node, next child position)
        let mut call = vec![(root, 0usize)];
        index[root] = counter;
        low[root] = counter;
        counter += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(&mut (v, ref mut pos)) = call.last_mut() {
            if let Some(&w) = adj[v].get(*pos) {
                *pos += 1;
                if index[w] == UNSEEN {
                    index[w] = counter;
                    low[w] = counter;
                    counter += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                let mut comp = Vec::new();
                loop {
                    let w = stack.pop().expect("tarjan stack underflow");
                    on_stack[w] = false;
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                comps.push(comp);
            }
        }
    }
    comps
}

fn check_probability(p: f64) -> Result<()> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidArgument(format!("edge probability {p} not in (0,1]")));
    }
    Ok(())
}

/// Directed Erdős–Rényi sample: each ordered pair `(j, i)`, `j != i`, is an
/// edge with probability `p`. Resampled until strongly connected.
pub fn gen_erdos_renyi<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R, max_retries: usize) -> Result<Digraph> {
    check_probability(p)?;
    for _ in 0..max_retries.max(1) {
        let mut edges = Vec::new();
        for j in 0..n {
            for i in 0..n {
                if i != j && rng.random_bool(p) {
                    edges.push((j, i));
                }
            }
        }
        let g = Digraph::new(n, edges)?;
        if g.is_strongly_connected() {
            return Ok(g);
        }
    }
    Err(Error::RetriesExhausted(max_retries))
}

/// Undirected Erdős–Rényi sample stored as a symmetric digraph.
pub fn gen_erdos_renyi_undirected<R: Rng + ?Sized>(
    n: usize,
    p: f64,
    rng: &mut R,
    max_retries: usize,
) -> Result<Digraph> {
    check_probability(p)?;
    for _ in 0..max_retries.max(1) {
        let mut edges = Vec::new();
        for j in 0..n {
            for i in (j + 1)..n {
                if rng.random_bool(p) {
                    edges.push((j, i));
                    edges.push((i, j));
                }
            }
        }
        let g = Digraph::new(n, edges)?;
        if g.is_strongly_connected() {
            return Ok(g);
        }
    }
    Err(Error::RetriesExhausted(max_retries))
}

/// Column-stochastic matrix; `entry(i, j)` is the weight agent `i` puts on
/// what it receives from `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightMatrix {
    entries: DMatrix<f64>,
    kappa: f64,
}

impl WeightMatrix {
    pub fn from_matrix(entries: DMatrix<f64>, kappa: f64) -> Self {
        Self { entries, kappa }
    }

    pub fn identity(n: usize) -> Self {
        Self { entries: DMatrix::identity(n, n), kappa: 1.0 }
    }

    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.entries.column(j).iter().copied().collect()
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn column_sums(&self) -> Vec<f64> {
        self.entries.column_iter().map(|c| c.sum()).collect()
    }

    /// Largest `|column sum - 1|`.
    pub fn stochasticity_error(&self) -> f64 {
        self.column_sums().iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max)
    }

    /// True iff positive entries are exactly the edges of `g` (including self-loops).
    pub fn matches(&self, g: &Digraph) -> bool {
        let n = g.node_count();
        if self.size() != n {
            return false;
        }
        (0..n).all(|i| (0..n).all(|j| (self.entries[(i, j)] > 0.0) == g.has_edge(j, i)))
    }

    /// Nonzero `(sender, weight)` pairs for receiver `i`, in ascending sender order.
    pub fn row_support(&self, i: usize) -> Vec<(usize, f64)> {
        self.entries.row(i).iter().enumerate().filter(|(_, &a)| a != 0.0).map(|(j, &a)| (j, a)).collect()
    }
}

/// Uniform out-degree weights: `a_ij = 1 / outdeg(j)` for every edge `(j, i)`.
pub fn base_weights(g: &Digraph) -> WeightMatrix {
    let n = g.node_count();
    let mut entries = DMatrix::zeros(n, n);
    let mut max_deg = 1;
    for j in 0..n {
        let deg = g.out_degree(j);
        max_deg = max_deg.max(deg);
        let w = 1.0 / deg as f64;
        for i in g.out_neighbors(j) {
            entries[(i, j)] = w;
        }
    }
    WeightMatrix { entries, kappa: 1.0 / max_deg as f64 }
}

/// Builds the per-round block subgraphs for `block` over a window of rounds
/// (`window[tau][agent]` is the agent's selection) and checks that their union
/// is strongly connected.
pub fn verify_t_strong_connectivity(g: &Digraph, window: &[Vec<usize>], block: usize) -> bool {
    let n = g.node_count();
    let mut union = BTreeSet::new();
    for selections in window {
        union.extend(g.block_subgraph(selections, block).edges());
    }
    Digraph::new(n, union).map(|u| u.is_strongly_connected()).unwrap_or(false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_node_graph() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = gen_erdos_renyi(1, 0.5, &mut rng, 10).unwrap();
        assert_eq!(g.edge_count(), 1);
        assert!(g.has_edge(0, 0));
        assert!(g.is_strongly_connected());
        assert_eq!(base_weights(&g).entry(0, 0), 1.0);
    }

    #[test]
    fn p_one_is_complete() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = gen_erdos_renyi(2, 1.0, &mut rng, 1).unwrap();
        assert_eq!(g, Digraph::complete(2).unwrap());
        let w = base_weights(&g);
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(w.entry(i, j), 0.5);
            }
        }
    }

    #[test]
    fn sampled_graph_is_strongly_connected_and_reproducible() {
        let a = gen_erdos_renyi(5, 0.5, &mut ChaCha8Rng::seed_from_u64(7), 100).unwrap();
        let b = gen_erdos_renyi(5, 0.5, &mut ChaCha8Rng::seed_from_u64(7), 100).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.strongly_connected_components().len(), 1);
        let u = gen_erdos_renyi_undirected(8, 0.4, &mut ChaCha8Rng::seed_from_u64(3), 100).unwrap();
        assert!(u.is_symmetric());
        assert!(u.is_strongly_connected());
    }

    #[test]
    fn bad_probability_and_exhausted_retries() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(gen_erdos_renyi(3, 0.0, &mut rng, 5), Err(Error::InvalidArgument(_))));
        assert!(matches!(gen_erdos_renyi(3, 1.5, &mut rng, 5), Err(Error::InvalidArgument(_))));
        // 40 nodes at p=1e-6 essentially never yields a strongly connected sample
        assert!(matches!(gen_erdos_renyi(40, 1e-6, &mut rng, 3), Err(Error::RetriesExhausted(3))));
    }

    #[test]
    fn connectivity_examples() {
        assert!(Digraph::new(1, []).unwrap().is_strongly_connected());
        assert!(!Digraph::new(2, [(0, 1)]).unwrap().is_strongly_connected());
        assert!(Digraph::cycle(3).unwrap().is_strongly_connected());
        let two_cycles = Digraph::new(4, [(0, 1), (1, 0), (2, 3), (3, 2), (1, 2)]).unwrap();
        assert_eq!(two_cycles.strongly_connected_components().len(), 2);
    }

    #[test]
    fn cycle_weights_are_halves() {
        let w = base_weights(&Digraph::cycle(3).unwrap());
        for j in 0..3 {
            let col = w.column(j);
            assert_eq!(col.iter().filter(|&&a| a == 0.5).count(), 2);
            assert_eq!(col.iter().filter(|&&a| a == 0.0).count(), 1);
        }
        assert_eq!(w.kappa(), 0.5);
    }

    #[test]
    fn weights_match_support_and_are_column_stochastic() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = gen_erdos_renyi(9, 0.3, &mut rng, 1000).unwrap();
            let w = base_weights(&g);
            assert!(w.stochasticity_error() <= 1e-12);
            assert!(w.matches(&g));
            for i in 0..9 {
                for (_, a) in w.row_support(i) {
                    assert!(a >= w.kappa());
                }
            }
        }
    }

    #[test]
    fn window_union_connectivity() {
        let g = Digraph::cycle(4).unwrap();
        let all_one = vec![vec![1; 4]; 3];
        assert!(verify_t_strong_connectivity(&g, &all_one, 1));
        let none = vec![vec![0; 4]; 3];
        assert!(!verify_t_strong_connectivity(&g, &none, 1));
        // round robin over B = 2 with offsets
        let window: Vec<Vec<usize>> = (0..2).map(|t| (0..4).map(|i| (t + i) % 2).collect()).collect();
        assert!(verify_t_strong_connectivity(&g, &window, 0));
        assert!(verify_t_strong_connectivity(&g, &window, 1));
        assert!(!verify_t_strong_connectivity(&g, &window[..1], 0));
    }

    #[test]
    fn edge_list_round_trip() {
        let g = Digraph::new(3, [(0, 1), (1, 2), (2, 0)]).unwrap();
        let text = g.to_edge_list();
        assert!(text.starts_with("3\n"));
        assert!(text.contains("\n1 2\n"));
        assert_eq!(Digraph::from_edge_list(&text).unwrap(), g);
        assert!(Digraph::from_edge_list("2\n0 1\n").is_err());
        assert!(Digraph::from_edge_list("2\n1 3\n").is_err());
    }

    #[test]
    fn algebraic_connectivity_of_complete_graph() {
        // K_n Laplacian spectrum is {0, n, ..., n}
        let g = Digraph::complete(5).unwrap();
        assert!((g.algebraic_connectivity() - 5.0).abs() < 1e-10);
        assert!(Digraph::new(3, [(0, 1), (1, 0)]).unwrap().algebraic_connectivity().abs() < 1e-10);
    }
}
