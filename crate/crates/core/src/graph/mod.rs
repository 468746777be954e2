//! Contribution graph construction.
//!
//! Users and their contributions become nodes of a directed weighted graph.
//! Every event creates one contribution node and the weighted edges the
//! event grammar prescribes for its kind; edge weights come from a
//! [`WeightConfig`]. Repeated `(source, target)` pairs accumulate on a single
//! edge whose weight is the table entry times the number of occurrences.

mod epoch;
mod events;
mod weights;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use epoch::{build_epoch_sequence, EpochConfig, EpochGraph, EpochGraphSequence, DEFAULT_PERIOD};
pub use events::{parse_jsonl, to_jsonl, ContributionEvent, EventKind};
pub use weights::WeightConfig;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("no weight for edge kind ({from}, {to})")]
    UnknownEdgeKind { from: Kind, to: Kind },
    #[error("event {event}: target courselet {target:?} does not exist")]
    DanglingTarget { event: usize, target: String },
    #[error("event {event}: courselet {target:?} already exists")]
    DuplicateCourselet { event: usize, target: String },
    #[error("event {event}: invalid event ({message})")]
    InvalidEvent { event: usize, message: String },
    #[error("event at ts {ts} falls after the last period (horizon ends before {end})")]
    EventOutsideHorizon { ts: i64, end: i64 },
    #[error("event at ts {ts} precedes the epoch origin {origin}")]
    EventBeforeOrigin { ts: i64, origin: i64 },
    #[error("invalid epoch configuration: {0}")]
    InvalidEpochConfig(String),
    #[error("weight {key} = {value} must be finite and non-negative")]
    NegativeWeight { key: String, value: f64 },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Node category, also the key space of the weight table.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Kind {
    User,
    Courselet,
    Order,
    Review,
    View,
    Epoch,
    Custom(String),
}

impl Kind {
    pub fn as_str(&self) -> &str {
        match self {
            Kind::User => "user",
            Kind::Courselet => "courselet",
            Kind::Order => "order",
            Kind::Review => "review",
            Kind::View => "view",
            Kind::Epoch => "epoch",
            Kind::Custom(name) => name,
        }
    }

    /// Contributions are every kind except identities and epoch nodes.
    pub fn is_contribution(&self) -> bool {
        !matches!(self, Kind::User | Kind::Epoch)
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Kind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "user" => Kind::User,
            "courselet" => Kind::Courselet,
            "order" => Kind::Order,
            "review" => Kind::Review,
            "view" => Kind::View,
            "epoch" => Kind::Epoch,
            other => {
                let ok = !other.is_empty()
                    && other.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_' || b == b'-');
                if !ok {
                    return Err(format!("invalid kind {other:?}"));
                }
                Kind::Custom(other.to_string())
            }
        })
    }
}

impl From<Kind> for String {
    fn from(k: Kind) -> String {
        k.as_str().to_string()
    }
}

impl TryFrom<String> for Kind {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// Graph-unique node identifier, rendered as `kind:key`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct NodeId {
    kind: Kind,
    key: String,
}

impl NodeId {
    pub fn new(kind: Kind, key: impl Into<String>) -> Self {
        NodeId { kind, key: key.into() }
    }

    pub fn user(key: impl Into<String>) -> Self {
        NodeId::new(Kind::User, key)
    }

    pub fn courselet(key: impl Into<String>) -> Self {
        NodeId::new(Kind::Courselet, key)
    }

    /// Epoch contributor node of `user` for period `epoch`.
    pub fn epoch(user: &str, epoch: u32) -> Self {
        NodeId::new(Kind::Epoch, format!("{user}@{epoch}"))
    }

    pub fn kind(&self) -> &Kind {
        &self.kind
    }

    pub fn key(&self) -> &str {
        &self.key
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind, self.key)
    }
}

impl FromStr for NodeId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, key) = s.split_once(':').ok_or_else(|| format!("node id {s:?} lacks a kind prefix"))?;
        if key.is_empty() {
            return Err(format!("node id {s:?} has an empty key"));
        }
        Ok(NodeId::new(kind.parse()?, key))
    }
}

impl From<NodeId> for String {
    fn from(id: NodeId) -> String {
        id.to_string()
    }
}

impl TryFrom<String> for NodeId {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// Node category with the payload epoch contributor nodes carry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeKind {
    User,
    Courselet,
    Order,
    Review,
    View,
    Custom(String),
    EpochContributor { user: String, epoch: u32 },
}

impl NodeKind {
    pub fn tag(&self) -> Kind {
        match self {
            NodeKind::User => Kind::User,
            NodeKind::Courselet => Kind::Courselet,
            NodeKind::Order => Kind::Order,
            NodeKind::Review => Kind::Review,
            NodeKind::View => Kind::View,
            NodeKind::Custom(name) => Kind::Custom(name.clone()),
            NodeKind::EpochContributor { .. } => Kind::Epoch,
        }
    }

    fn for_contribution(kind: &Kind) -> NodeKind {
        match kind {
            Kind::Courselet => NodeKind::Courselet,
            Kind::Order => NodeKind::Order,
            Kind::Review => NodeKind::Review,
            Kind::View => NodeKind::View,
            Kind::Custom(name) => NodeKind::Custom(name.clone()),
            Kind::User | Kind::Epoch => unreachable!("not a contribution kind"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    /// Period the node appeared in; 0 for graphs built without epochs.
    pub period: u32,
}

/// Accumulated edge: table weight times occurrence count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeWeight {
    pub unit: f64,
    pub count: u64,
}

impl EdgeWeight {
    pub fn weight(&self) -> f64 {
        self.unit * self.count as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub source: usize,
    pub target: usize,
    pub weight: EdgeWeight,
}

/// Directed weighted contribution graph. Nodes keep insertion order.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(from = "GraphRepr", into = "GraphRepr")]
pub struct ContributionGraph {
    nodes: Vec<Node>,
    index: HashMap<NodeId, usize>,
    edges: BTreeMap<(usize, usize), EdgeWeight>,
    horizon: Option<i64>,
}

impl PartialEq for ContributionGraph {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.edges == other.edges && self.horizon == other.horizon
    }
}

impl ContributionGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Latest event timestamp ingested.
    pub fn horizon(&self) -> Option<i64> {
        self.horizon
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, idx: usize) -> &Node {
        &self.nodes[idx]
    }

    pub fn index_of(&self, id: &NodeId) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn contains(&self, id: &NodeId) -> bool {
        self.index.contains_key(id)
    }

    /// Edges in `(source, target)` index order.
    pub fn edges(&self) -> impl Iterator<Item = Edge> + '_ {
        self.edges.iter().map(|(&(source, target), &weight)| Edge { source, target, weight })
    }

    pub fn out_edges(&self, source: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.edges.range((source, 0)..(source + 1, 0)).map(|(&(_, t), w)| (t, w.weight()))
    }

    pub fn edge_weight(&self, source: &NodeId, target: &NodeId) -> Option<f64> {
        let s = self.index_of(source)?;
        let t = self.index_of(target)?;
        self.edges.get(&(s, t)).map(EdgeWeight::weight)
    }

    /// Inserts the node if absent and returns its index.
    pub fn add_node(&mut self, id: NodeId, kind: NodeKind, period: u32) -> usize {
        if let Some(&idx) = self.index.get(&id) {
            return idx;
        }
        let idx = self.nodes.len();
        self.index.insert(id.clone(), idx);
        self.nodes.push(Node { id, kind, period });
        idx
    }

    /// Adds one occurrence of `source -> target` with the given table weight.
    pub fn add_edge(&mut self, source: usize, target: usize, unit: f64) {
        assert!(source < self.nodes.len() && target < self.nodes.len(), "edge endpoint out of range");
        let entry = self.edges.entry((source, target)).or_insert(EdgeWeight { unit, count: 0 });
        debug_assert_eq!(entry.unit, unit, "one edge pair always maps to one table entry");
        entry.count += 1;
    }

    fn observe_ts(&mut self, ts: i64) {
        self.horizon = Some(self.horizon.map_or(ts, |h| h.max(ts)));
    }

    /// Checks the structural invariants.
    pub fn validate(&self) -> Result<(), String> {
        if self.index.len() != self.nodes.len() {
            return Err("duplicate node ids".into());
        }
        for (&(s, t), w) in &self.edges {
            if s >= self.nodes.len() || t >= self.nodes.len() {
                return Err(format!("edge ({s}, {t}) has a missing endpoint"));
            }
            if !w.unit.is_finite() || w.unit < 0.0 || w.count == 0 {
                return Err(format!("edge {} -> {} has invalid weight", self.nodes[s].id, self.nodes[t].id));
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct GraphRepr {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    horizon: Option<i64>,
}

impl From<GraphRepr> for ContributionGraph {
    fn from(r: GraphRepr) -> Self {
        let index = r.nodes.iter().enumerate().map(|(i, n)| (n.id.clone(), i)).collect();
        let edges = r.edges.into_iter().map(|e| ((e.source, e.target), e.weight)).collect();
        ContributionGraph { nodes: r.nodes, index, edges, horizon: r.horizon }
    }
}

impl From<ContributionGraph> for GraphRepr {
    fn from(g: ContributionGraph) -> Self {
        let edges = g.edges().collect();
        GraphRepr { nodes: g.nodes, edges, horizon: g.horizon }
    }
}

/// Endpoint roles in the per-event edge grammar.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Actor,
    Contribution,
    Target,
}

/// Edges an event of the given kind materializes.
fn grammar(kind: &EventKind) -> &'static [(Role, Role)] {
    use Role::*;
    match kind {
        EventKind::CreateCourselet => &[(Contribution, Actor), (Actor, Contribution)],
        EventKind::View => &[(Contribution, Target)],
        EventKind::Order | EventKind::Review | EventKind::Custom(_) => {
            &[(Actor, Contribution), (Contribution, Actor), (Contribution, Target), (Target, Contribution)]
        }
    }
}

/// Key of the contribution node created by the `seq`-th event (in sorted order).
pub(crate) fn contribution_id(event: &ContributionEvent, seq: usize) -> NodeId {
    match event.kind {
        EventKind::CreateCourselet => NodeId::courselet(event.target.clone()),
        _ => NodeId::new(event.kind.contribution_kind(), seq.to_string()),
    }
}

/// Stable sort by timestamp; ties keep input order.
pub(crate) fn sorted_events(events: &[ContributionEvent]) -> Vec<&ContributionEvent> {
    let mut sorted: Vec<&ContributionEvent> = events.iter().collect();
    sorted.sort_by_key(|e| e.ts);
    sorted
}

/// Where the contribution-to-author edge of an event lands.
pub(crate) enum AuthorSink {
    /// The persistent user node.
    User,
    /// A per-period node, resolved by the caller.
    Node(usize),
}

/// Materializes one event into `graph`. `author_sink` is called once, only for
/// event kinds whose grammar has a contribution-to-author edge.
pub(crate) fn apply_event(
    graph: &mut ContributionGraph,
    seq: usize,
    event: &ContributionEvent,
    weights: &WeightConfig,
    period: u32,
    mut author_sink: impl FnMut(&mut ContributionGraph, usize) -> Result<AuthorSink, GraphError>,
) -> Result<(), GraphError> {
    event.validate().map_err(|message| GraphError::InvalidEvent { event: seq, message })?;
    let contribution = contribution_id(event, seq);
    let contribution_kind = event.kind.contribution_kind();

    // Resolve every weight up front so a failing event leaves the graph untouched.
    let rules = grammar(&event.kind);
    let kind_of = |role: Role| match role {
        Role::Actor => Kind::User,
        Role::Contribution => contribution_kind.clone(),
        Role::Target => Kind::Courselet,
    };
    let mut units = Vec::with_capacity(rules.len());
    for &(s, t) in rules {
        units.push(weights.edge(&kind_of(s), &kind_of(t))?);
    }

    let target = match event.kind {
        EventKind::CreateCourselet => {
            if graph.contains(&contribution) {
                return Err(GraphError::DuplicateCourselet { event: seq, target: event.target.clone() });
            }
            None
        }
        _ => {
            let id = NodeId::courselet(event.target.clone());
            Some(graph.index_of(&id).ok_or_else(|| GraphError::DanglingTarget {
                event: seq,
                target: event.target.clone(),
            })?)
        }
    };

    let actor = graph.add_node(NodeId::user(event.actor.clone()), NodeKind::User, period);
    let contrib = graph.add_node(contribution, NodeKind::for_contribution(&contribution_kind), period);
    for (&(s, t), unit) in rules.iter().zip(units) {
        let source = match s {
            Role::Actor => actor,
            Role::Contribution => contrib,
            Role::Target => target.expect("grammar only references a target for non-creating events"),
        };
        let dest = match t {
            Role::Actor => match author_sink(graph, actor)? {
                AuthorSink::User => actor,
                AuthorSink::Node(idx) => idx,
            },
            Role::Contribution => contrib,
            Role::Target => target.expect("grammar only references a target for non-creating events"),
        };
        graph.add_edge(source, dest, unit);
    }
    graph.observe_ts(event.ts);
    Ok(())
}

/// Builds the contribution graph from an event list.
///
/// Events are applied in timestamp order (ties by input order). Each event
/// adds its contribution node and the edges of its grammar:
///
/// | event     | edges                                                         |
/// |-----------|---------------------------------------------------------------|
/// | courselet | courselet→user, user→courselet                                |
/// | order     | user→order, order→user, order→courselet, courselet→order      |
/// | review    | user→review, review→user, review→courselet, courselet→review  |
/// | view      | view→courselet                                                |
/// | custom x  | user→x, x→user, x→courselet, courselet→x                      |
pub fn ingest_events(events: &[ContributionEvent], weights: &WeightConfig) -> Result<ContributionGraph, GraphError> {
    weights.validate()?;
    let mut graph = ContributionGraph::new();
    for (seq, event) in sorted_events(events).into_iter().enumerate() {
        apply_event(&mut graph, seq, event, weights, 0, |_, _| Ok(AuthorSink::User))?;
    }
    Ok(graph)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(kind: EventKind, actor: &str, target: &str, ts: i64) -> ContributionEvent {
        ContributionEvent::new(kind, actor, target, ts)
    }

    /// Alice publishes CL0, Bob orders it, John reviews it, Bob views it.
    pub(crate) fn toy_events() -> Vec<ContributionEvent> {
        vec![
            ev(EventKind::CreateCourselet, "alice", "CL0", 0),
            ev(EventKind::Order, "bob", "CL0", 10),
            ev(EventKind::Review, "john", "CL0", 20),
            ev(EventKind::View, "bob", "CL0", 30),
        ]
    }

    #[test]
    fn courselet_out_edges_follow_table() {
        let g = ingest_events(&toy_events(), &WeightConfig::default()).unwrap();
        let cl0 = g.index_of(&NodeId::courselet("CL0")).unwrap();
        let mut out: Vec<(String, f64)> = g.out_edges(cl0).map(|(t, w)| (g.node(t).id.to_string(), w)).collect();
        out.sort_by(|a, b| a.0.cmp(&b.0));
        assert_eq!(
            out,
            vec![("order:1".into(), 1.0 / 16.0), ("review:2".into(), 1.0 / 16.0), ("user:alice".into(), 1.0)]
        );
        assert_eq!(g.node_count(), 7);
        assert_eq!(g.edge_count(), 2 + 4 + 4 + 1);
        assert_eq!(g.horizon(), Some(30));
    }

    #[test]
    fn empty_events_give_empty_graph() {
        let g = ingest_events(&[], &WeightConfig::default()).unwrap();
        assert_eq!((g.node_count(), g.edge_count()), (0, 0));
        assert_eq!(g.horizon(), None);
    }

    #[test]
    fn each_event_gets_its_own_contribution_node() {
        let mut events = toy_events();
        events.push(ev(EventKind::View, "bob", "CL0", 40));
        let g = ingest_events(&events, &WeightConfig::default()).unwrap();
        assert_eq!(g.nodes().iter().filter(|n| n.id.kind().is_contribution()).count(), events.len());
        assert!(g.edges().all(|e| e.weight.count == 1));
    }

    #[test]
    fn parallel_edges_accumulate() {
        let mut g = ContributionGraph::new();
        let a = g.add_node(NodeId::user("a"), NodeKind::User, 0);
        let c = g.add_node(NodeId::courselet("c"), NodeKind::Courselet, 0);
        assert_eq!(g.add_node(NodeId::user("a"), NodeKind::User, 3), a);
        for _ in 0..3 {
            g.add_edge(a, c, 1e-5);
        }
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.edge_weight(&NodeId::user("a"), &NodeId::courselet("c")), Some(1e-5 * 3.0));
    }

    #[test]
    fn dangling_and_duplicate_targets() {
        let w = WeightConfig::default();
        let err = ingest_events(&[ev(EventKind::Review, "john", "CL9", 0)], &w).unwrap_err();
        assert_eq!(err, GraphError::DanglingTarget { event: 0, target: "CL9".into() });
        let dup = [ev(EventKind::CreateCourselet, "a", "CL0", 0), ev(EventKind::CreateCourselet, "b", "CL0", 1)];
        assert!(matches!(ingest_events(&dup, &w), Err(GraphError::DuplicateCourselet { event: 1, .. })));
    }

    #[test]
    fn unknown_edge_kind() {
        let events = [ev(EventKind::CreateCourselet, "a", "CL0", 0), ev(EventKind::Custom("cite".into()), "b", "CL0", 1)];
        let err = ingest_events(&events, &WeightConfig::default()).unwrap_err();
        assert!(matches!(err, GraphError::UnknownEdgeKind { .. }));

        let mut w = WeightConfig::default();
        w.remove_edge(&Kind::Review, &Kind::User);
        let err = ingest_events(&toy_events(), &w).unwrap_err();
        assert_eq!(err, GraphError::UnknownEdgeKind { from: Kind::Review, to: Kind::User });
    }

    #[test]
    fn custom_kind_with_weights() {
        let w = WeightConfig::from_kv_str(
            "edge.user.cite = 0.125\nedge.cite.user = 1\nedge.cite.courselet = 3\nedge.courselet.cite = 0.0625\nmint.cite = 2",
        )
        .unwrap();
        let events = [ev(EventKind::CreateCourselet, "a", "CL0", 0), ev(EventKind::Custom("cite".into()), "b", "CL0", 1)];
        let g = ingest_events(&events, &w).unwrap();
        assert_eq!(g.edge_weight(&NodeId::new(Kind::Custom("cite".into()), "1"), &NodeId::courselet("CL0")), Some(3.0));
    }

    #[test]
    fn out_of_order_input_is_sorted() {
        let mut events = toy_events();
        events.reverse();
        let g = ingest_events(&events, &WeightConfig::default()).unwrap();
        let expected = ingest_events(&toy_events(), &WeightConfig::default()).unwrap();
        assert_eq!(g, expected);
    }

    #[test]
    fn ids_round_trip() {
        for s in ["user:alice", "courselet:CL0", "epoch:bob@3", "cite:4"] {
            assert_eq!(s.parse::<NodeId>().unwrap().to_string(), s);
        }
        assert!("nokind".parse::<NodeId>().is_err());
        assert!("user:".parse::<NodeId>().is_err());
    }

    #[test]
    fn serde_round_trip() {
        let g = ingest_events(&toy_events(), &WeightConfig::default()).unwrap();
        let json = serde_json::to_string(&g).unwrap();
        let back: ContributionGraph = serde_json::from_str(&json).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.index_of(&NodeId::user("john")), g.index_of(&NodeId::user("john")));
    }
}
