//! Stationary distributions of the weighted random walk on a contribution graph.
//!
//! The walk follows out-edges in proportion to their weight and restarts at
//! the seed distribution with probability `alpha`. Mass sitting on a node
//! without outgoing weight is sent back to the seed, so the restart operator
//! used everywhere in this module is
//!
//! ```text
//! pr = alpha * s + (1 - alpha) * (pr * P + (sum of pr over dangling nodes) * s)
//! ```
//!
//! [`pagerank`] solves it by power iteration in row-vector orientation;
//! [`pagerank_direct`] solves the same linear system by dense LU and exists
//! to check the iterative solver.

mod direct;

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{ContributionGraph, Kind, NodeId};
use crate::numfmt::sig12;

pub use direct::{pagerank_direct, DIRECT_MAX_NODES};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RankError {
    #[error("power iteration did not converge: residual {residual:e} after {iterations} iterations")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("dense solve limited to {max} nodes, graph has {nodes}")]
    TooLarge { nodes: usize, max: usize },
    #[error("singular system in dense solve")]
    Singular,
    #[error("anchor set is empty")]
    EmptyAnchorSet,
    #[error("anchor set carries zero rank mass")]
    ZeroAnchorMass,
    #[error("anchor {0} is not a node of the ranked graph")]
    UnknownAnchor(NodeId),
    #[error("invalid seed: {0}")]
    InvalidSeed(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Sparse row-stochastic transition matrix in CSR layout.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionOperator {
    ids: Vec<NodeId>,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    probs: Vec<f64>,
    dangling: Vec<bool>,
}

impl TransitionOperator {
    /// Row `i` holds node `i`'s out-edge weights divided by their sum.
    /// Nodes whose out-weights sum to zero are dangling and get an empty row.
    pub fn from_graph(graph: &ContributionGraph) -> Self {
        let n = graph.node_count();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::with_capacity(graph.edge_count());
        let mut probs = Vec::with_capacity(graph.edge_count());
        let mut dangling = Vec::with_capacity(n);
        row_ptr.push(0);
        for i in 0..n {
            let degree: f64 = graph.out_edges(i).map(|(_, w)| w).sum();
            if degree > 0.0 {
                for (j, w) in graph.out_edges(i) {
                    cols.push(j);
                    probs.push(w / degree);
                }
            }
            dangling.push(degree <= 0.0);
            row_ptr.push(cols.len());
        }
        let ids = graph.nodes().iter().map(|n| n.id.clone()).collect();
        TransitionOperator { ids, row_ptr, cols, probs, dangling }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }

    pub fn index_of(&self, id: &NodeId) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    pub fn is_dangling(&self, i: usize) -> bool {
        self.dangling[i]
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[span.clone()].iter().copied().zip(self.probs[span].iter().copied())
    }

    /// `P(i, j)`, zero when there is no edge.
    pub fn prob(&self, i: usize, j: usize) -> f64 {
        self.row(i).filter(|&(c, _)| c == j).map(|(_, p)| p).sum()
    }

    /// One application of the restart operator to `x`, written into `out`.
    fn step(&self, x: &[f64], seed: &[f64], alpha: f64, out: &mut [f64]) {
        let dangling_mass: f64 = x.iter().zip(&self.dangling).filter(|(_, &d)| d).map(|(v, _)| v).sum();
        let restart = alpha + (1.0 - alpha) * dangling_mass;
        for (o, s) in out.iter_mut().zip(seed) {
            *o = restart * s;
        }
        for (i, &xi) in x.iter().enumerate() {
            if self.dangling[i] || xi == 0.0 {
                continue;
            }
            let flow = (1.0 - alpha) * xi;
            for (j, p) in self.row(i) {
                out[j] += flow * p;
            }
        }
    }

    /// `|| x - F(x) ||_1` for the restart operator `F`.
    pub fn residual(&self, x: &[f64], seed: &SeedVector, alpha: f64) -> f64 {
        let mut fx = vec![0.0; x.len()];
        self.step(x, &seed.mass, alpha, &mut fx);
        l1_distance(x, &fx)
    }
}

fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Restart distribution aligned with an operator's node order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedVector {
    mass: Vec<f64>,
}

impl SeedVector {
    pub fn uniform(n: usize) -> Self {
        SeedVector { mass: vec![1.0 / n as f64; n] }
    }

    /// Checks non-negativity and unit total within 1e-12.
    pub fn new(mass: Vec<f64>) -> Result<Self, RankError> {
        if mass.iter().any(|m| !m.is_finite() || *m < 0.0) {
            return Err(RankError::InvalidSeed("entries must be finite and non-negative".into()));
        }
        let total: f64 = mass.iter().sum();
        if !mass.is_empty() && (total - 1.0).abs() > 1e-12 {
            return Err(RankError::InvalidSeed(format!("entries sum to {total}, not 1")));
        }
        Ok(SeedVector { mass })
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PageRankParams {
    /// Restart probability.
    pub alpha: f64,
    /// L1 convergence tolerance.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PageRankParams {
    fn default() -> Self {
        PageRankParams { alpha: 0.15, tol: 1e-10, max_iter: 10_000 }
    }
}

impl PageRankParams {
    pub fn validate(&self) -> Result<(), RankError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(RankError::InvalidParameter(format!("alpha {} not in (0, 1)", self.alpha)));
        }
        if !(self.tol > 0.0) {
            return Err(RankError::InvalidParameter(format!("tol {} must be positive", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(RankError::InvalidParameter("max_iter must be positive".into()));
        }
        Ok(())
    }
}

/// Stationary distribution over an operator's nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankVector {
    pub ids: Vec<NodeId>,
    pub scores: Vec<f64>,
    /// L1 change of the final iteration (power iteration) or the fixed-point
    /// residual (direct solve).
    pub residual: f64,
    pub iterations: usize,
    /// Iterations after the first whose residual grew.
    pub nonmonotone_steps: usize,
}

impl RankVector {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn get(&self, id: &NodeId) -> Option<f64> {
        self.ids.iter().position(|x| x == id).map(|i| self.scores[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&NodeId, f64)> {
        self.ids.iter().zip(self.scores.iter().copied())
    }

    pub fn total(&self) -> f64 {
        self.scores.iter().sum()
    }

    /// `node_id,kind,score` rows, score with 12 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("node_id,kind,score\n");
        for (id, s) in self.iter() {
            let _ = writeln!(out, "{id},{},{}", id.kind(), sig12(s));
        }
        out
    }
}

/// Power iteration from `seed` (or `init`, if given) until the L1 change
/// drops to `params.tol`.
pub fn pagerank(
    op: &TransitionOperator,
    seed: &SeedVector,
    params: &PageRankParams,
    init: Option<&[f64]>,
) -> Result<RankVector, RankError> {
    params.validate()?;
    let n = op.len();
    if seed.len() != n {
        return Err(RankError::InvalidSeed(format!("seed has {} entries for {n} nodes", seed.len())));
    }
    if n == 0 {
        return Ok(RankVector { ids: vec![], scores: vec![], residual: 0.0, iterations: 0, nonmonotone_steps: 0 });
    }
    let mut x = match init {
        Some(v) if v.len() == n => v.to_vec(),
        Some(v) => return Err(RankError::InvalidSeed(format!("initial iterate has {} entries for {n} nodes", v.len()))),
        None => seed.mass.clone(),
    };
    let mut next = vec![0.0; n];
    let mut prev_residual = f64::INFINITY;
    let mut nonmonotone = 0;
    for iter in 1..=params.max_iter {
        op.step(&x, &seed.mass, params.alpha, &mut next);
        let residual = l1_distance(&x, &next);
        std::mem::swap(&mut x, &mut next);
        if iter > 1 && residual > prev_residual {
            nonmonotone += 1;
        }
        prev_residual = residual;
        if residual <= params.tol {
            return Ok(RankVector {
                ids: op.ids.clone(),
                scores: x,
                residual,
                iterations: iter,
                nonmonotone_steps: nonmonotone,
            });
        }
    }
    Err(RankError::NoConvergence { iterations: params.max_iter, residual: prev_residual })
}

/// Seed proportional to `base` on the anchors and zero elsewhere.
pub fn personalized_seed(base: &RankVector, anchors: &BTreeSet<NodeId>) -> Result<SeedVector, RankError> {
    if anchors.is_empty() {
        return Err(RankError::EmptyAnchorSet);
    }
    if let Some(missing) = anchors.iter().find(|a| !base.ids.contains(a)) {
        return Err(RankError::UnknownAnchor(missing.clone()));
    }
    let anchor_mass: f64 = base.iter().filter(|(id, _)| anchors.contains(id)).map(|(_, s)| s).sum();
    if !(anchor_mass > 0.0) {
        return Err(RankError::ZeroAnchorMass);
    }
    let mass = base
        .iter()
        .map(|(id, s)| if anchors.contains(id) { s / anchor_mass } else { 0.0 })
        .collect();
    Ok(SeedVector { mass })
}

/// Node kinds whose nodes receive restart mass in the personalized pass.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchorKinds(pub BTreeSet<Kind>);

impl Default for AnchorKinds {
    /// Users and courselets.
    fn default() -> Self {
        AnchorKinds([Kind::User, Kind::Courselet].into_iter().collect())
    }
}

impl AnchorKinds {
    pub fn select(&self, ids: &[NodeId]) -> BTreeSet<NodeId> {
        ids.iter().filter(|id| self.0.contains(id.kind())).cloned().collect()
    }
}

/// Two-pass personalized PageRank: a uniform-seed pass, then a pass seeded by
/// the first pass's mass restricted to the anchors.
pub fn personalized_pagerank(
    op: &TransitionOperator,
    anchors: &AnchorKinds,
    params: &PageRankParams,
) -> Result<RankVector, RankError> {
    if op.is_empty() {
        return pagerank(op, &SeedVector::uniform(0), params, None);
    }
    let base = pagerank(op, &SeedVector::uniform(op.len()), params, None)?;
    let seed = personalized_seed(&base, &anchors.select(op.ids()))?;
    pagerank(op, &seed, params, Some(&base.scores))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{ingest_events, ContributionEvent, EventKind, NodeKind, WeightConfig};

    fn one_courselet() -> ContributionGraph {
        let events = vec![
            ContributionEvent::new(EventKind::CreateCourselet, "alice", "CL0", 0),
            ContributionEvent::new(EventKind::Order, "bob", "CL0", 1),
            ContributionEvent::new(EventKind::Review, "john", "CL0", 2),
            ContributionEvent::new(EventKind::View, "bob", "CL0", 3),
        ];
        ingest_events(&events, &WeightConfig::default()).unwrap()
    }

    fn graph_from(n: usize, edges: &[(usize, usize, f64)]) -> ContributionGraph {
        let mut g = ContributionGraph::new();
        for i in 0..n {
            g.add_node(NodeId::user(i.to_string()), NodeKind::User, 0);
        }
        for &(s, t, w) in edges {
            g.add_edge(s, t, w);
        }
        g
    }

    #[test]
    fn courselet_row_matches_propagation_example() {
        let g = one_courselet();
        let op = TransitionOperator::from_graph(&g);
        let cl0 = g.index_of(&NodeId::courselet("CL0")).unwrap();
        let alice = g.index_of(&NodeId::user("alice")).unwrap();
        let to_author = op.prob(cl0, alice);
        assert!((to_author - 16.0 / 18.0).abs() < 1e-15);
        assert_eq!(format!("{to_author:.2}"), "0.89");
        let row: f64 = op.row(cl0).map(|(_, p)| p).sum();
        assert!((row - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_node_is_dangling() {
        let op = TransitionOperator::from_graph(&graph_from(1, &[]));
        assert!(op.is_dangling(0));
        assert_eq!(op.row(0).count(), 0);
        let pr = pagerank(&op, &SeedVector::uniform(1), &PageRankParams::default(), None).unwrap();
        assert!((pr.scores[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_graph() {
        let op = TransitionOperator::from_graph(&ContributionGraph::new());
        assert!(op.is_empty());
        let pr = pagerank(&op, &SeedVector::uniform(0), &PageRankParams::default(), None).unwrap();
        assert!(pr.is_empty());
    }

    #[test]
    fn two_cycle_is_symmetric() {
        let op = TransitionOperator::from_graph(&graph_from(2, &[(0, 1, 1.0), (1, 0, 1.0)]));
        let pr = pagerank(&op, &SeedVector::uniform(2), &PageRankParams::default(), None).unwrap();
        assert!((pr.scores[0] - 0.5).abs() < 1e-12 && (pr.scores[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn star_courselet_dominates() {
        let mut g = ContributionGraph::new();
        let c = g.add_node(NodeId::courselet("c"), NodeKind::Courselet, 0);
        for u in 0..3 {
            let i = g.add_node(NodeId::user(u.to_string()), NodeKind::User, 0);
            g.add_edge(i, c, 1.0);
        }
        let op = TransitionOperator::from_graph(&g);
        let pr = pagerank(&op, &SeedVector::uniform(4), &PageRankParams::default(), None).unwrap();
        assert!(pr.scores[1..].iter().all(|&s| s < pr.scores[0]));
    }

    #[test]
    fn no_convergence_reports_diagnostics() {
        let op = TransitionOperator::from_graph(&graph_from(2, &[(0, 1, 1.0), (1, 0, 1.0)]));
        let seed = SeedVector::new(vec![1.0, 0.0]).unwrap();
        let params = PageRankParams { alpha: 0.01, tol: 1e-300, max_iter: 5 };
        match pagerank(&op, &seed, &params, None) {
            Err(RankError::NoConvergence { iterations: 5, residual }) => assert!(residual > 0.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parameter_validation() {
        let op = TransitionOperator::from_graph(&graph_from(1, &[]));
        let seed = SeedVector::uniform(1);
        for params in [
            PageRankParams { alpha: 0.0, ..Default::default() },
            PageRankParams { alpha: 1.0, ..Default::default() },
            PageRankParams { tol: 0.0, ..Default::default() },
        ] {
            assert!(matches!(pagerank(&op, &seed, &params, None), Err(RankError::InvalidParameter(_))));
        }
        assert!(SeedVector::new(vec![0.5, 0.6]).is_err());
        assert!(SeedVector::new(vec![-0.5, 1.5]).is_err());
    }

    #[test]
    fn seed_proportional_on_anchors() {
        let ids: Vec<NodeId> = (0..4).map(|i| NodeId::user(i.to_string())).collect();
        let base = RankVector { ids: ids.clone(), scores: vec![0.25; 4], residual: 0.0, iterations: 0, nonmonotone_steps: 0 };
        let anchors: BTreeSet<NodeId> = ids[..2].iter().cloned().collect();
        let seed = personalized_seed(&base, &anchors).unwrap();
        assert_eq!(seed.mass(), &[0.5, 0.5, 0.0, 0.0]);

        let skewed = RankVector { scores: vec![0.1, 0.2, 0.3, 0.4], ..base.clone() };
        let all: BTreeSet<NodeId> = ids.iter().cloned().collect();
        let seed = personalized_seed(&skewed, &all).unwrap();
        for (a, b) in seed.mass().iter().zip(&skewed.scores) {
            assert!((a - b).abs() < 1e-15);
        }

        assert_eq!(personalized_seed(&base, &BTreeSet::new()), Err(RankError::EmptyAnchorSet));
        let zero = RankVector { scores: vec![0.0, 0.0, 0.5, 0.5], ..base.clone() };
        assert_eq!(personalized_seed(&zero, &anchors), Err(RankError::ZeroAnchorMass));
        let stranger: BTreeSet<NodeId> = [NodeId::user("x")].into_iter().collect();
        assert!(matches!(personalized_seed(&base, &stranger), Err(RankError::UnknownAnchor(_))));
    }

    #[test]
    fn personalized_seed_on_toy_graph_skips_non_anchors() {
        let g = one_courselet();
        let op = TransitionOperator::from_graph(&g);
        let base = pagerank(&op, &SeedVector::uniform(op.len()), &PageRankParams::default(), None).unwrap();
        let seed = personalized_seed(&base, &AnchorKinds::default().select(op.ids())).unwrap();
        assert!((seed.mass().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (id, m) in op.ids().iter().zip(seed.mass()) {
            match id.kind() {
                Kind::User | Kind::Courselet => assert!(*m > 0.0, "{id}"),
                _ => assert_eq!(*m, 0.0, "{id}"),
            }
        }
    }

    #[test]
    fn csv_rows() {
        let op = TransitionOperator::from_graph(&graph_from(2, &[(0, 1, 1.0), (1, 0, 1.0)]));
        let pr = pagerank(&op, &SeedVector::uniform(2), &PageRankParams::default(), None).unwrap();
        assert_eq!(pr.to_csv(), "node_id,kind,score\nuser:0,user,0.5\nuser:1,user,0.5\n");
    }
}
