//! Time-resolved reputation over an epoch graph sequence.
//!
//! Every `G_k` is ranked with the two-pass personalized PageRank. A user's
//! raw score at period `k` is the decayed sum of the ranks its epoch nodes
//! hold in `G_k`:
//!
//! ```text
//! S*_i = sum_{t <= k} c^(k - t) * pr_k(epoch node of i at t)
//! ```
//!
//! and the published reputation rescales the raw scores of the contributors
//! `C_k` (users owning at least one epoch node) so they sum to the Cred
//! minted in `G_k` plus a fixed base:
//!
//! ```text
//! S_i = S*_i / sum_{j in C_k} S*_j * (M_k + base)
//! ```

use std::collections::HashMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{ContributionGraph, EpochGraphSequence, Kind, NodeId, NodeKind, WeightConfig};
use crate::numfmt::sig12;
use crate::rank::{personalized_pagerank, AnchorKinds, PageRankParams, RankError, RankVector, TransitionOperator};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CredRankError {
    #[error("period {period}: {source}")]
    Rank { period: u32, source: RankError },
    #[error("epoch sequence is empty")]
    EmptySequence,
    #[error("period {0} is outside the scored sequence")]
    UnknownPeriod(u32),
    #[error("node {0} is not in the period graph")]
    UnknownNode(NodeId),
    #[error("decay factor {0} not in [0, 1]")]
    InvalidDecay(f64),
    #[error("period {0} has no contributors")]
    NoContributors(u32),
    #[error("period {0}: contributor scores sum to zero")]
    ZeroTotalScore(u32),
}

/// Whether `M_k` counts every minting node in `G_k` or only those added in period `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum MintMode {
    #[default]
    Cumulative,
    Period,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CredRankParams {
    pub pagerank: PageRankParams,
    pub anchors: AnchorKinds,
    /// Decay factor `c` in `[0, 1]`.
    pub decay: f64,
    pub base: f64,
    pub mint_mode: MintMode,
}

impl Default for CredRankParams {
    fn default() -> Self {
        CredRankParams {
            pagerank: PageRankParams::default(),
            anchors: AnchorKinds::default(),
            decay: 1.0,
            base: 1000.0,
            mint_mode: MintMode::Cumulative,
        }
    }
}

/// Personalized rank of every `G_k`, with the node periods needed for decay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochScoreSeries {
    ranks: Vec<RankVector>,
    periods: Vec<Vec<u32>>,
}

impl EpochScoreSeries {
    /// Assembles a series from per-period ranks; `periods[k-1][i]` is the
    /// period node `i` of `ranks[k-1]` appeared in.
    pub fn from_parts(ranks: Vec<RankVector>, periods: Vec<Vec<u32>>) -> Self {
        assert_eq!(ranks.len(), periods.len());
        for (r, p) in ranks.iter().zip(&periods) {
            assert_eq!(r.len(), p.len());
        }
        EpochScoreSeries { ranks, periods }
    }

    pub fn len(&self) -> usize {
        self.ranks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranks.is_empty()
    }

    /// Rank vector of `G_k`.
    pub fn rank(&self, k: u32) -> Option<&RankVector> {
        k.checked_sub(1).and_then(|i| self.ranks.get(i as usize))
    }

    /// `pr_k(v)`, if `v` is in `G_k`.
    pub fn score(&self, k: u32, node: &NodeId) -> Option<f64> {
        self.rank(k)?.get(node)
    }
}

/// Ranks every period graph. Periods are independent and run in parallel.
pub fn epoch_scores(seq: &EpochGraphSequence, params: &CredRankParams) -> Result<EpochScoreSeries, CredRankError> {
    if seq.is_empty() {
        return Err(CredRankError::EmptySequence);
    }
    let results: Vec<Result<(RankVector, Vec<u32>), CredRankError>> = seq
        .graphs
        .par_iter()
        .map(|eg| {
            let op = TransitionOperator::from_graph(&eg.graph);
            let rank = personalized_pagerank(&op, &params.anchors, &params.pagerank)
                .map_err(|source| CredRankError::Rank { period: eg.period, source })?;
            let periods = eg.graph.nodes().iter().map(|n| n.period).collect();
            Ok((rank, periods))
        })
        .collect();
    let mut ranks = Vec::with_capacity(results.len());
    let mut periods = Vec::with_capacity(results.len());
    for r in results {
        let (rank, p) = r?;
        ranks.push(rank);
        periods.push(p);
    }
    Ok(EpochScoreSeries { ranks, periods })
}

/// Decayed score `S*` of `node` at period `k`.
///
/// For a user this sums its epoch nodes, `c^(k-t) * pr_k(v^t)`; absent epochs
/// contribute nothing. Any other node contributes its own rank discounted from
/// the period it appeared in.
pub fn aggregate_score(series: &EpochScoreSeries, node: &NodeId, decay: f64, k: u32) -> Result<f64, CredRankError> {
    if !(0.0..=1.0).contains(&decay) {
        return Err(CredRankError::InvalidDecay(decay));
    }
    let rank = series.rank(k).ok_or(CredRankError::UnknownPeriod(k))?;
    let periods = &series.periods[k as usize - 1];
    let node_idx = rank.ids.iter().position(|id| id == node).ok_or_else(|| CredRankError::UnknownNode(node.clone()))?;
    let discount = |t: u32| decay.powi((k - t) as i32);
    if *node.kind() != Kind::User {
        return Ok(discount(periods[node_idx].max(1)) * rank.scores[node_idx]);
    }
    let mut total = 0.0;
    for t in 1..=k {
        if let Some(i) = rank.ids.iter().position(|id| *id == NodeId::epoch(node.key(), t)) {
            total += discount(t) * rank.scores[i];
        }
    }
    Ok(total)
}

/// `M_k`: sum of mint weights over every node of the graph.
pub fn mint_total(graph: &ContributionGraph, weights: &WeightConfig) -> f64 {
    graph.nodes().iter().map(|n| weights.mint(&n.kind.tag())).sum()
}

/// Mint weights of the nodes that appeared in period `k` only.
pub fn mint_in_period(graph: &ContributionGraph, weights: &WeightConfig, k: u32) -> f64 {
    graph.nodes().iter().filter(|n| n.period == k).map(|n| weights.mint(&n.kind.tag())).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContributorScore {
    pub user: NodeId,
    pub s_star: f64,
    pub score: f64,
}

/// Normalized reputation of every contributor at one period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReputationScore {
    pub period: u32,
    pub minted: f64,
    pub base: f64,
    pub contributors: Vec<ContributorScore>,
}

impl ReputationScore {
    pub fn get(&self, user: &NodeId) -> Option<&ContributorScore> {
        self.contributors.iter().find(|c| &c.user == user)
    }

    pub fn total(&self) -> f64 {
        self.contributors.iter().map(|c| c.score).sum()
    }
}

/// Users owning at least one epoch node, in order of first appearance.
pub fn contributors(graph: &ContributionGraph) -> Vec<NodeId> {
    let mut seen = std::collections::HashSet::new();
    graph
        .nodes()
        .iter()
        .filter_map(|n| match &n.kind {
            NodeKind::EpochContributor { user, .. } if seen.insert(user.clone()) => Some(NodeId::user(user.clone())),
            _ => None,
        })
        .collect()
}

/// Rescales raw scores `S*` so they sum to `minted + base`.
pub fn normalize_scores(
    period: u32,
    raw: &[(NodeId, f64)],
    minted: f64,
    base: f64,
) -> Result<ReputationScore, CredRankError> {
    if raw.is_empty() {
        return Err(CredRankError::NoContributors(period));
    }
    let total: f64 = raw.iter().map(|(_, s)| s).sum();
    if !(total > 0.0) {
        return Err(CredRankError::ZeroTotalScore(period));
    }
    let budget = minted + base;
    let contributors = raw
        .iter()
        .map(|(user, s_star)| ContributorScore { user: user.clone(), s_star: *s_star, score: s_star / total * budget })
        .collect();
    Ok(ReputationScore { period, minted, base, contributors })
}

/// Normalized reputation at period `k` of `seq`.
pub fn reputation_scores(
    series: &EpochScoreSeries,
    seq: &EpochGraphSequence,
    weights: &WeightConfig,
    params: &CredRankParams,
    k: u32,
) -> Result<ReputationScore, CredRankError> {
    let graph = &seq.get(k).ok_or(CredRankError::UnknownPeriod(k))?.graph;
    let rank = series.rank(k).ok_or(CredRankError::UnknownPeriod(k))?;
    if !(0.0..=1.0).contains(&params.decay) {
        return Err(CredRankError::InvalidDecay(params.decay));
    }
    // One pass over the rank vector instead of a lookup per (user, epoch).
    let users = contributors(graph);
    let slot: HashMap<String, usize> = users.iter().enumerate().map(|(i, u)| (u.key().to_string(), i)).collect();
    let mut raw: Vec<(NodeId, f64)> = users.into_iter().map(|u| (u, 0.0)).collect();
    for (node, score) in graph.nodes().iter().zip(&rank.scores) {
        if let NodeKind::EpochContributor { user, epoch } = &node.kind {
            raw[slot[user.as_str()]].1 += params.decay.powi((k - epoch) as i32) * score;
        }
    }
    let minted = match params.mint_mode {
        MintMode::Cumulative => mint_total(graph, weights),
        MintMode::Period => mint_in_period(graph, weights, k),
    };
    normalize_scores(k, &raw, minted, params.base)
}

/// Scores of every period that has contributors; periods before the first
/// contribution are skipped.
pub fn score_all_periods(
    seq: &EpochGraphSequence,
    weights: &WeightConfig,
    params: &CredRankParams,
) -> Result<(EpochScoreSeries, Vec<ReputationScore>), CredRankError> {
    let series = epoch_scores(seq, params)?;
    let mut out = Vec::new();
    for eg in &seq.graphs {
        match reputation_scores(&series, seq, weights, params, eg.period) {
            Ok(r) => out.push(r),
            Err(CredRankError::NoContributors(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok((series, out))
}

/// `period,node_id,s_star,s_normalized` rows.
pub fn scores_to_csv(scores: &[ReputationScore]) -> String {
    let mut out = String::from("period,node_id,s_star,s_normalized\n");
    for r in scores {
        for c in &r.contributors {
            let _ = writeln!(out, "{},{},{},{}", r.period, c.user, sig12(c.s_star), sig12(c.score));
        }
    }
    out
}
