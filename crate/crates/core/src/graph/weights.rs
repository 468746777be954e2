use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{GraphError, Kind};

/// Edge weights keyed by `(source kind, target kind)` plus per-kind mint weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightConfig {
    #[serde(with = "edge_map")]
    edges: BTreeMap<(Kind, Kind), f64>,
    mint: BTreeMap<Kind, f64>,
}

impl Default for WeightConfig {
    /// The shipped community table.
    fn default() -> Self {
        use Kind::*;
        let edges = [
            ((View, Courselet), 1e-5),
            ((Courselet, User), 1.0),
            ((User, Courselet), 1.0 / 8.0),
            ((Order, Courselet), 5.0),
            ((Courselet, Order), 1.0 / 16.0),
            ((User, Order), 1.0 / 8.0),
            ((Order, User), 1.0),
            ((User, Review), 1.0 / 8.0),
            ((Review, User), 1.0),
            ((Review, Courselet), 2.0),
            ((Courselet, Review), 1.0 / 16.0),
            ((Epoch, User), 1.0),
            ((Epoch, Epoch), 1.0),
        ];
        let mint = [(Courselet, 10.0), (Review, 1.0), (Order, 1.0), (View, 0.0), (User, 0.0), (Epoch, 0.0)];
        WeightConfig {
            edges: edges.into_iter().collect(),
            mint: mint.into_iter().collect(),
        }
    }
}

impl WeightConfig {
    /// A table with no entries at all.
    pub fn empty() -> Self {
        WeightConfig { edges: BTreeMap::new(), mint: BTreeMap::new() }
    }

    pub fn edge(&self, source: &Kind, target: &Kind) -> Result<f64, GraphError> {
        self.edges
            .get(&(source.clone(), target.clone()))
            .copied()
            .ok_or_else(|| GraphError::UnknownEdgeKind { from: source.clone(), to: target.clone() })
    }

    /// Missing mint entries mint nothing.
    pub fn mint(&self, kind: &Kind) -> f64 {
        self.mint.get(kind).copied().unwrap_or(0.0)
    }

    pub fn set_edge(&mut self, source: Kind, target: Kind, weight: f64) -> Result<(), GraphError> {
        check_weight(&format!("edge.{source}.{target}"), weight)?;
        self.edges.insert((source, target), weight);
        Ok(())
    }

    pub fn remove_edge(&mut self, source: &Kind, target: &Kind) -> Option<f64> {
        self.edges.remove(&(source.clone(), target.clone()))
    }

    pub fn set_mint(&mut self, kind: Kind, weight: f64) -> Result<(), GraphError> {
        check_weight(&format!("mint.{kind}"), weight)?;
        self.mint.insert(kind, weight);
        Ok(())
    }

    pub fn edges(&self) -> impl Iterator<Item = (&Kind, &Kind, f64)> {
        self.edges.iter().map(|((s, t), w)| (s, t, *w))
    }

    pub fn mints(&self) -> impl Iterator<Item = (&Kind, f64)> {
        self.mint.iter().map(|(k, w)| (k, *w))
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        for ((s, t), w) in &self.edges {
            check_weight(&format!("edge.{s}.{t}"), *w)?;
        }
        for (k, w) in &self.mint {
            check_weight(&format!("mint.{k}"), *w)?;
        }
        Ok(())
    }

    /// Parses the flat `key = value` format on top of the defaults.
    ///
    /// Keys are `edge.<source>.<target>` or `mint.<kind>`; values are decimal
    /// or `a/b` fractions. `#` starts a comment.
    pub fn from_kv_str(text: &str) -> Result<Self, GraphError> {
        let mut config = WeightConfig::default();
        config.apply_kv_str(text)?;
        Ok(config)
    }

    pub fn apply_kv_str(&mut self, text: &str) -> Result<(), GraphError> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |msg: String| GraphError::Parse { line: lineno + 1, message: msg };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_err(format!("expected `key = value`, got {line:?}")))?;
            let key = key.trim();
            let value = parse_weight(value.trim())
                .ok_or_else(|| parse_err(format!("invalid weight {:?} for {key}", value.trim())))?;
            let parts: Vec<&str> = key.split('.').collect();
            match parts.as_slice() {
                ["edge", s, t] => {
                    let (s, t) = (parse_kind(s, lineno)?, parse_kind(t, lineno)?);
                    self.set_edge(s, t, value)?
                }
                ["mint", k] => self.set_mint(parse_kind(k, lineno)?, value)?,
                _ => return Err(parse_err(format!("unknown weight key {key:?}"))),
            }
        }
        Ok(())
    }

    pub fn to_kv_string(&self) -> String {
        let mut out = String::new();
        for ((s, t), w) in &self.edges {
            let _ = writeln!(out, "edge.{s}.{t} = {w:?}");
        }
        for (k, w) in &self.mint {
            let _ = writeln!(out, "mint.{k} = {w:?}");
        }
        out
    }
}

fn parse_kind(s: &str, lineno: usize) -> Result<Kind, GraphError> {
    s.parse().map_err(|_| GraphError::Parse { line: lineno + 1, message: format!("invalid node kind {s:?}") })
}

fn check_weight(key: &str, w: f64) -> Result<(), GraphError> {
    if !w.is_finite() || w < 0.0 {
        return Err(GraphError::NegativeWeight { key: key.to_string(), value: w });
    }
    Ok(())
}

fn parse_weight(s: &str) -> Option<f64> {
    match s.split_once('/') {
        Some((n, d)) => {
            let n: f64 = n.trim().parse().ok()?;
            let d: f64 = d.trim().parse().ok()?;
            (d != 0.0).then(|| n / d)
        }
        None => s.parse().ok(),
    }
}

mod edge_map {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::graph::Kind;

    pub fn serialize<S: Serializer>(map: &BTreeMap<(Kind, Kind), f64>, ser: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<(&Kind, &Kind, f64)> = map.iter().map(|((s, t), w)| (s, t, *w)).collect();
        rows.serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<BTreeMap<(Kind, Kind), f64>, D::Error> {
        let rows: Vec<(Kind, Kind, f64)> = Vec::deserialize(de)?;
        Ok(rows.into_iter().map(|(s, t, w)| ((s, t), w)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_community_table() {
        let w = WeightConfig::default();
        assert_eq!(w.edge(&Kind::View, &Kind::Courselet).unwrap(), 1e-5);
        assert_eq!(w.edge(&Kind::Courselet, &Kind::Review).unwrap(), 0.0625);
        assert_eq!(w.edge(&Kind::User, &Kind::Order).unwrap(), 0.125);
        assert_eq!(w.edge(&Kind::Order, &Kind::Courselet).unwrap(), 5.0);
        assert_eq!(w.mint(&Kind::Courselet), 10.0);
        assert_eq!(w.mint(&Kind::View), 0.0);
        assert!(w.edge(&Kind::User, &Kind::View).is_err());
    }

    #[test]
    fn kv_overrides() {
        let w = WeightConfig::from_kv_str("# tweak\nedge.user.review = 0.25\nmint.courselet = 12 # more\nedge.cite.courselet = 1/4\n").unwrap();
        assert_eq!(w.edge(&Kind::User, &Kind::Review).unwrap(), 0.25);
        assert_eq!(w.mint(&Kind::Courselet), 12.0);
        assert_eq!(w.edge(&Kind::Custom("cite".into()), &Kind::Courselet).unwrap(), 0.25);
    }

    #[test]
    fn kv_rejects_negative_and_garbage() {
        assert!(matches!(
            WeightConfig::from_kv_str("edge.user.review = -1"),
            Err(GraphError::NegativeWeight { .. })
        ));
        assert!(matches!(WeightConfig::from_kv_str("edge.user = 1"), Err(GraphError::Parse { line: 1, .. })));
        assert!(matches!(WeightConfig::from_kv_str("\nmint.view = x"), Err(GraphError::Parse { line: 2, .. })));
    }

    #[test]
    fn kv_round_trip() {
        let w = WeightConfig::default();
        assert_eq!(WeightConfig::from_kv_str(&w.to_kv_string()).unwrap(), w);
    }
}
