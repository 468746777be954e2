use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{GraphError, Kind};

/// What a contribution event does. Custom kinds follow the same edge grammar
/// as orders and reviews, with weights looked up under their own name.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EventKind {
    CreateCourselet,
    Order,
    Review,
    View,
    Custom(String),
}

impl EventKind {
    /// Kind of the contribution node the event creates.
    pub fn contribution_kind(&self) -> Kind {
        match self {
            EventKind::CreateCourselet => Kind::Courselet,
            EventKind::Order => Kind::Order,
            EventKind::Review => Kind::Review,
            EventKind::View => Kind::View,
            EventKind::Custom(name) => Kind::Custom(name.clone()),
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EventKind::CreateCourselet => "courselet",
            EventKind::Order => "order",
            EventKind::Review => "review",
            EventKind::View => "view",
            EventKind::Custom(name) => name,
        })
    }
}

impl FromStr for EventKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "courselet" => EventKind::CreateCourselet,
            "order" => EventKind::Order,
            "review" => EventKind::Review,
            "view" => EventKind::View,
            other => match other.parse::<Kind>() {
                Ok(Kind::Custom(name)) => EventKind::Custom(name),
                _ => return Err(format!("invalid event kind {other:?}")),
            },
        })
    }
}

/// One timestamped contribution. `actor` is a user key; `target` is the key
/// of the courselet the event creates or refers to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContributionEvent {
    pub kind: EventKind,
    pub actor: String,
    pub target: String,
    pub ts: i64,
}

impl ContributionEvent {
    pub fn new(kind: EventKind, actor: impl Into<String>, target: impl Into<String>, ts: i64) -> Self {
        ContributionEvent { kind, actor: actor.into(), target: target.into(), ts }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.actor.is_empty() || self.actor.contains(':') {
            return Err(format!("invalid actor {:?}", self.actor));
        }
        if self.target.is_empty() || self.target.contains(':') {
            return Err(format!("invalid target {:?}", self.target));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EventLine {
    kind: String,
    actor: String,
    target: String,
    ts: i64,
}

/// Parses a JSONL event log. Blank lines are skipped; a `courselet:` prefix on
/// the target is accepted and stripped.
pub fn parse_jsonl(text: &str) -> Result<Vec<ContributionEvent>, GraphError> {
    let mut events = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| GraphError::Parse { line: i + 1, message };
        let raw: EventLine = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        let kind: EventKind = raw.kind.parse().map_err(err)?;
        let target = raw.target.strip_prefix("courselet:").unwrap_or(&raw.target).to_string();
        let event = ContributionEvent { kind, actor: raw.actor, target, ts: raw.ts };
        event.validate().map_err(err)?;
        events.push(event);
    }
    Ok(events)
}

pub fn to_jsonl(events: &[ContributionEvent]) -> String {
    let mut out = String::new();
    for e in events {
        let line = EventLine { kind: e.kind.to_string(), actor: e.actor.clone(), target: e.target.clone(), ts: e.ts };
        out.push_str(&serde_json::to_string(&line).expect("event serializes"));
        out.push('\n');
    }
    out
}
