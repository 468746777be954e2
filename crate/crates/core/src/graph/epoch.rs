//! Epoch-discretized contribution graphs.
//!
//! History is cut into `count` periods of fixed length starting at `origin`.
//! For each period `k`, the contributions created in that period are added
//! to the graph, and every author of one of them gets an epoch contributor
//! node `epoch:<user>@k`. The contribution-to-author edge of those events
//! points at the epoch node instead of the persistent user node, and each
//! epoch node forwards to its user with the `(epoch, user)` weight. `G_k` is
//! `G_{k-1}` plus the period's additions, so each graph contains the previous
//! one as a subgraph.

use serde::{Deserialize, Serialize};

use super::{apply_event, sorted_events, AuthorSink, ContributionEvent, ContributionGraph, GraphError, Kind, NodeId, NodeKind, WeightConfig};

/// One week in seconds.
pub const DEFAULT_PERIOD: i64 = 7 * 24 * 3600;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochConfig {
    pub origin: i64,
    /// Period length in seconds.
    pub period: i64,
    /// Number of periods `T`.
    pub count: u32,
    /// Link consecutive epoch nodes of the same user in both directions with
    /// the `(epoch, epoch)` weight. Off by default.
    pub webbing: bool,
}

impl EpochConfig {
    pub fn new(origin: i64, period: i64, count: u32) -> Result<Self, GraphError> {
        let config = EpochConfig { origin, period, count, webbing: false };
        config.validate()?;
        Ok(config)
    }

    /// Smallest configuration starting at `origin` that covers every event.
    pub fn covering(events: &[ContributionEvent], origin: i64, period: i64) -> Result<Self, GraphError> {
        let mut config = EpochConfig::new(origin, period, 1)?;
        if let Some(last) = events.iter().map(|e| e.ts).max() {
            config.count = config.period_of(last)?;
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        if self.period <= 0 {
            return Err(GraphError::InvalidEpochConfig(format!("period length {} must be positive", self.period)));
        }
        if self.count == 0 {
            return Err(GraphError::InvalidEpochConfig("period count must be at least 1".into()));
        }
        Ok(())
    }

    /// 1-based period index of a timestamp, unbounded above.
    fn period_of(&self, ts: i64) -> Result<u32, GraphError> {
        if ts < self.origin {
            return Err(GraphError::EventBeforeOrigin { ts, origin: self.origin });
        }
        let k = (ts - self.origin) / self.period + 1;
        u32::try_from(k).map_err(|_| GraphError::EventOutsideHorizon { ts, end: i64::MAX })
    }

    /// 1-based period index of a timestamp within `1..=count`.
    pub fn period_index(&self, ts: i64) -> Result<u32, GraphError> {
        let k = self.period_of(ts)?;
        if k > self.count {
            return Err(GraphError::EventOutsideHorizon { ts, end: self.end() });
        }
        Ok(k)
    }

    /// First timestamp after the last period.
    pub fn end(&self) -> i64 {
        self.origin.saturating_add(self.period.saturating_mul(i64::from(self.count)))
    }
}

/// `G_k` with the contributions and epoch contributor nodes it gained in period `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochGraph {
    pub period: u32,
    pub graph: ContributionGraph,
    /// `A_k^new`
    pub new_contributions: Vec<NodeId>,
    /// `C_k^new`
    pub new_epoch_nodes: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochGraphSequence {
    pub config: EpochConfig,
    pub graphs: Vec<EpochGraph>,
}

impl EpochGraphSequence {
    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    /// `G_k`, 1-based.
    pub fn get(&self, k: u32) -> Option<&EpochGraph> {
        k.checked_sub(1).and_then(|i| self.graphs.get(i as usize))
    }

    /// `A_k`: every contribution up to period `k`.
    pub fn contributions(&self, k: u32) -> Vec<NodeId> {
        self.graphs.iter().take(k as usize).flat_map(|g| g.new_contributions.iter().cloned()).collect()
    }

    /// `C_k`: every epoch contributor node up to period `k`.
    pub fn epoch_nodes(&self, k: u32) -> Vec<NodeId> {
        self.graphs.iter().take(k as usize).flat_map(|g| g.new_epoch_nodes.iter().cloned()).collect()
    }
}

/// Builds `G_1, ..., G_T` from an event list (sorted here by timestamp, ties
/// by input order).
pub fn build_epoch_sequence(
    events: &[ContributionEvent],
    epochs: &EpochConfig,
    weights: &WeightConfig,
) -> Result<EpochGraphSequence, GraphError> {
    epochs.validate()?;
    weights.validate()?;
    let sorted = sorted_events(events);
    let mut periods = Vec::with_capacity(sorted.len());
    for e in &sorted {
        periods.push(epochs.period_index(e.ts)?);
    }

    let mut graph = ContributionGraph::new();
    // Latest epoch node per user, for webbing.
    let mut last_epoch: std::collections::HashMap<String, usize> = Default::default();
    let mut graphs = Vec::with_capacity(epochs.count as usize);
    let mut cursor = 0;
    for k in 1..=epochs.count {
        let mut new_contributions = Vec::new();
        let mut new_epoch_nodes = Vec::new();
        while cursor < sorted.len() && periods[cursor] == k {
            let event = sorted[cursor];
            let before = graph.node_count();
            apply_event(&mut graph, cursor, event, weights, k, |g, user| {
                let id = NodeId::epoch(&event.actor, k);
                if let Some(idx) = g.index_of(&id) {
                    return Ok(AuthorSink::Node(idx));
                }
                let forward = weights.edge(&Kind::Epoch, &Kind::User)?;
                let webbing = if epochs.webbing { Some(weights.edge(&Kind::Epoch, &Kind::Epoch)?) } else { None };
                let idx = g.add_node(id.clone(), NodeKind::EpochContributor { user: event.actor.clone(), epoch: k }, k);
                g.add_edge(idx, user, forward);
                if let (Some(w), Some(&prev)) = (webbing, last_epoch.get(&event.actor)) {
                    g.add_edge(prev, idx, w);
                    g.add_edge(idx, prev, w);
                }
                last_epoch.insert(event.actor.clone(), idx);
                new_epoch_nodes.push(id);
                Ok(AuthorSink::Node(idx))
            })?;
            new_contributions.extend(
                graph.nodes()[before..].iter().filter(|n| n.id.kind().is_contribution()).map(|n| n.id.clone()),
            );
            cursor += 1;
        }
        graphs.push(EpochGraph { period: k, graph: graph.clone(), new_contributions, new_epoch_nodes });
    }
    Ok(EpochGraphSequence { config: epochs.clone(), graphs })
}
