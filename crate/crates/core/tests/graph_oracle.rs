use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use qnar_core::graph::{
    build_epoch_sequence, ingest_events, ContributionEvent, ContributionGraph, EpochConfig, EventKind, WeightConfig,
};
use qnar_core::rank::TransitionOperator;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The shipped table, written out independently of `WeightConfig::default`.
fn table(source: &str, target: &str) -> f64 {
    match (source, target) {
        ("view", "courselet") => 1e-5,
        ("courselet", "user") => 1.0,
        ("user", "courselet") => 0.125,
        ("order", "courselet") => 5.0,
        ("courselet", "order") => 0.0625,
        ("user", "order") => 0.125,
        ("order", "user") => 1.0,
        ("user", "review") => 0.125,
        ("review", "user") => 1.0,
        ("review", "courselet") => 2.0,
        ("courselet", "review") => 0.0625,
        ("epoch", "user") => 1.0,
        other => panic!("no weight for {other:?}"),
    }
}

fn kind_name(k: &EventKind) -> &'static str {
    match k {
        EventKind::CreateCourselet => "courselet",
        EventKind::Order => "order",
        EventKind::Review => "review",
        EventKind::View => "view",
        EventKind::Custom(_) => unreachable!(),
    }
}

#[derive(Default, Debug, PartialEq)]
struct Naive {
    nodes: BTreeSet<String>,
    edges: BTreeMap<(String, String), f64>,
}

impl Naive {
    fn edge(&mut self, s: &str, t: &str, weight_kinds: (&str, &str)) {
        *self.edges.entry((s.to_string(), t.to_string())).or_insert(0.0) += table(weight_kinds.0, weight_kinds.1);
    }

    /// Per-event dictionary updates. `period` maps a timestamp to its epoch,
    /// or `None` for the flat graph.
    fn build(events: &[ContributionEvent], period: Option<&dyn Fn(i64) -> u32>) -> Naive {
        let mut sorted: Vec<&ContributionEvent> = events.iter().collect();
        sorted.sort_by_key(|e| e.ts);
        let mut g = Naive::default();
        for (seq, e) in sorted.into_iter().enumerate() {
            let kind = kind_name(&e.kind);
            let user = format!("user:{}", e.actor);
            let target = format!("courselet:{}", e.target);
            let contribution = if kind == "courselet" { target.clone() } else { format!("{kind}:{seq}") };
            g.nodes.insert(user.clone());
            g.nodes.insert(contribution.clone());
            // Views have no author edge, hence no epoch node.
            let author = match period {
                Some(p) if kind != "view" => {
                    let epoch = format!("epoch:{}@{}", e.actor, p(e.ts));
                    if g.nodes.insert(epoch.clone()) {
                        g.edge(&epoch, &user, ("epoch", "user"));
                    }
                    epoch
                }
                _ => user.clone(),
            };
            match kind {
                "courselet" => {
                    g.edge(&contribution, &author, ("courselet", "user"));
                    g.edge(&user, &contribution, ("user", "courselet"));
                }
                "view" => g.edge(&contribution, &target, ("view", "courselet")),
                _ => {
                    g.edge(&user, &contribution, ("user", kind));
                    g.edge(&contribution, &author, (kind, "user"));
                    g.edge(&contribution, &target, (kind, "courselet"));
                    g.edge(&target, &contribution, ("courselet", kind));
                }
            }
        }
        g
    }

    fn of(graph: &ContributionGraph) -> Naive {
        Naive {
            nodes: graph.nodes().iter().map(|n| n.id.to_string()).collect(),
            edges: graph
                .edges()
                .map(|e| ((graph.node(e.source).id.to_string(), graph.node(e.target).id.to_string()), e.weight.weight()))
                .collect(),
        }
    }
}

fn assert_same(actual: &Naive, expected: &Naive) {
    assert_eq!(actual.nodes, expected.nodes);
    assert_eq!(actual.edges.len(), expected.edges.len());
    for (pair, w) in &expected.edges {
        let got = actual.edges.get(pair).unwrap_or_else(|| panic!("missing edge {pair:?}"));
        assert!((got - w).abs() <= 1e-12 * w.abs(), "{pair:?}: {got} vs {w}");
    }
}

/// A valid log of `n` events with distinct timestamps, returned in shuffled
/// order. Every reference points at a courselet created earlier.
fn random_events(n: usize, users: usize, max_gap: i64, rng: &mut impl Rng) -> Vec<ContributionEvent> {
    let mut events = Vec::with_capacity(n);
    let mut courselets = 0usize;
    let mut ts = 0i64;
    for i in 0..n {
        let actor = format!("u{}", rng.random_range(0..users));
        let kind = if i == 0 || rng.random_bool(0.15) {
            EventKind::CreateCourselet
        } else {
            [EventKind::Order, EventKind::Review, EventKind::View][rng.random_range(0..3)].clone()
        };
        let target = if kind == EventKind::CreateCourselet {
            courselets += 1;
            format!("T{}", courselets - 1)
        } else {
            format!("T{}", rng.random_range(0..courselets))
        };
        events.push(ContributionEvent::new(kind, actor, target, ts));
        ts += rng.random_range(1..=max_gap);
    }
    events.shuffle(rng);
    events
}

#[test]
fn thousand_events_match_naive_builder() {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let events = random_events(1000, 40, 50, &mut rng);
    let graph = ingest_events(&events, &WeightConfig::default()).unwrap();
    let naive = Naive::build(&events, None);
    assert_eq!(graph.node_count(), naive.nodes.len());
    assert_eq!(graph.edge_count(), naive.edges.len());
    assert_same(&Naive::of(&graph), &naive);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn flat_graph_matches_naive_builder(seed in any::<u64>(), n in 1usize..120, users in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let events = random_events(n, users, 5, &mut rng);
        let graph = ingest_events(&events, &WeightConfig::default()).unwrap();
        assert_same(&Naive::of(&graph), &Naive::build(&events, None));
        let contributions = graph.nodes().iter().filter(|n| n.id.kind().is_contribution()).count();
        prop_assert_eq!(contributions, events.len());
    }

    #[test]
    fn epoch_graphs_match_naive_builder(seed in any::<u64>(), n in 1usize..120, users in 1usize..8, period in 1i64..200) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let events = random_events(n, users, 20, &mut rng);
        let cfg = EpochConfig::covering(&events, 0, period).unwrap();
        let seq = build_epoch_sequence(&events, &cfg, &WeightConfig::default()).unwrap();
        prop_assert_eq!(seq.len(), cfg.count as usize);
        for k in 1..=cfg.count {
            let upto: Vec<ContributionEvent> =
                events.iter().filter(|e| (e.ts / period + 1) as u32 <= k).cloned().collect();
            let naive = Naive::build(&upto, Some(&|ts| (ts / period + 1) as u32));
            // A period prefix is a prefix of the sorted log, so sequence numbers agree.
            assert_same(&Naive::of(&seq.get(k).unwrap().graph), &naive);
        }
    }

    #[test]
    fn epoch_graphs_accumulate_monotonically(seed in any::<u64>(), n in 1usize..80, period in 1i64..100) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let events = random_events(n, 5, 10, &mut rng);
        let cfg = EpochConfig::covering(&events, 0, period).unwrap();
        let seq = build_epoch_sequence(&events, &cfg, &WeightConfig::default()).unwrap();
        for pair in seq.graphs.windows(2) {
            let (a, b) = (Naive::of(&pair[0].graph), Naive::of(&pair[1].graph));
            prop_assert!(a.nodes.is_subset(&b.nodes));
            for (edge, w) in &a.edges {
                prop_assert!(b.edges.get(edge).is_some_and(|v| v >= w), "edge {:?} lost", edge);
            }
        }
    }

    #[test]
    fn reordering_equal_inputs_gives_identical_bytes(seed in any::<u64>(), n in 1usize..100) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let events = random_events(n, 6, 4, &mut rng);
        let mut other = events.clone();
        other.sort_by_key(|e| e.ts);
        let a = serde_json::to_vec(&ingest_events(&events, &WeightConfig::default()).unwrap()).unwrap();
        let b = serde_json::to_vec(&ingest_events(&other, &WeightConfig::default()).unwrap()).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn transition_rows_match_naive_normalization(seed in any::<u64>(), n in 1usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let events = random_events(n, 4, 3, &mut rng);
        let graph = ingest_events(&events, &WeightConfig::default()).unwrap();
        let naive = Naive::of(&graph);
        let op = TransitionOperator::from_graph(&graph);
        for (i, id) in op.ids().iter().enumerate() {
            let id = id.to_string();
            let out: Vec<(&String, f64)> = naive.edges.iter().filter(|((s, _), _)| *s == id).map(|((_, t), w)| (t, *w)).collect();
            let degree: f64 = out.iter().map(|(_, w)| w).sum();
            prop_assert_eq!(op.is_dangling(i), out.is_empty());
            let row_sum: f64 = op.row(i).map(|(_, p)| p).sum();
            prop_assert!(out.is_empty() || (row_sum - 1.0).abs() <= 1e-12);
            for (t, w) in out {
                let j = op.ids().iter().position(|x| x.to_string() == *t).unwrap();
                prop_assert!((op.prob(i, j) - w / degree).abs() <= 1e-15);
            }
        }
    }
}

#[test]
fn propagation_example_transition() {
    let text = include_str!("fixtures/one_courselet.jsonl");
    let events = qnar_core::graph::parse_jsonl(text).unwrap();
    let graph = ingest_events(&events, &WeightConfig::default()).unwrap();
    let op = TransitionOperator::from_graph(&graph);
    let id = |s: &str| op.ids().iter().position(|x| x.to_string() == s).unwrap();
    let p = op.prob(id("courselet:CL0"), id("user:alice"));
    assert!((p - 16.0 / 18.0).abs() < 1e-15);
    assert_eq!(format!("{p:.2}"), "0.89");
}
