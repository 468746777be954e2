//! JSONL round journal: one `{phase, action, payload, ts}` object per line,
//! where `phase` is the round phase after the action.

use std::fmt::Write as _;

use serde::de::Error as _;
use serde::ser::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::value::RawValue;
use thiserror::Error;

use super::{fmt_signed_ratio, AuctionConfig, AuctionError, AuctionRound, Bank, Bid, Commitment, Phase, Settlement};
use crate::token::TokenAmount;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Setup,
    Open,
    Reveal,
    Settled,
}

impl From<Phase> for Stage {
    fn from(p: Phase) -> Self {
        match p {
            Phase::Open => Stage::Open,
            Phase::Reveal => Stage::Reveal,
            Phase::Settled => Stage::Settled,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", content = "payload", rename_all = "lowercase")]
pub enum Event {
    Fund { account: String, amount: TokenAmount },
    Open { proposer: String, deposit: TokenAmount, config: AuctionConfig },
    Commit { staker: String, commitment: Commitment, escrow: TokenAmount },
    Close {},
    Reveal { bid: Bid },
    Settle { settlement: Settlement },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JournalLine {
    pub phase: Stage,
    pub event: Event,
    pub ts: i64,
}

// Wire form. The payload is kept as raw text so 128-bit amounts never pass
// through serde's buffered representation.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireLine {
    phase: Stage,
    action: String,
    payload: Box<RawValue>,
    ts: i64,
}

#[derive(Deserialize)]
struct Tagged {
    action: String,
    payload: Box<RawValue>,
}

impl Serialize for JournalLine {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let text = serde_json::to_string(&self.event).map_err(S::Error::custom)?;
        let tagged: Tagged = serde_json::from_str(&text).map_err(S::Error::custom)?;
        WireLine { phase: self.phase, action: tagged.action, payload: tagged.payload, ts: self.ts }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for JournalLine {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let wire = WireLine::deserialize(d)?;
        let text = format!(
            "{{\"action\":{},\"payload\":{}}}",
            serde_json::to_string(&wire.action).map_err(D::Error::custom)?,
            wire.payload.get()
        );
        let event = serde_json::from_str(&text).map_err(D::Error::custom)?;
        Ok(JournalLine { phase: wire.phase, event, ts: wire.ts })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct ReplayError {
    pub line: usize,
    pub message: String,
}

/// A bank and a single round, journaling every state change.
#[derive(Debug, Clone, Default)]
pub struct JournaledAuction {
    bank: Bank,
    round: Option<AuctionRound>,
    lines: Vec<JournalLine>,
    notes: Vec<String>,
}

impl JournaledAuction {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bank(&self) -> &Bank {
        &self.bank
    }

    pub fn round(&self) -> Option<&AuctionRound> {
        self.round.as_ref()
    }

    pub fn lines(&self) -> &[JournalLine] {
        &self.lines
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for line in &self.lines {
            out.push_str(&serde_json::to_string(line).expect("journal line serializes"));
            out.push('\n');
        }
        out
    }

    fn stage(&self) -> Stage {
        self.round.as_ref().map_or(Stage::Setup, |r| r.phase().into())
    }

    fn record(&mut self, event: Event, ts: i64) {
        let phase = self.stage();
        self.lines.push(JournalLine { phase, event, ts });
    }

    fn round_mut(&mut self, op: &'static str) -> Result<&mut AuctionRound, AuctionError> {
        self.round.as_mut().ok_or(AuctionError::InvalidConfig(format!("{op} before open")))
    }

    pub fn fund(&mut self, account: &str, amount: TokenAmount, ts: i64) -> Result<(), AuctionError> {
        if self.round.is_some() {
            return Err(AuctionError::InvalidConfig("fund after open".into()));
        }
        self.bank.fund(account, amount)?;
        self.record(Event::Fund { account: account.into(), amount }, ts);
        Ok(())
    }

    pub fn open(&mut self, proposer: &str, deposit: TokenAmount, config: AuctionConfig, ts: i64) -> Result<(), AuctionError> {
        if self.round.is_some() {
            return Err(AuctionError::InvalidConfig("round already open".into()));
        }
        self.round = Some(AuctionRound::open(&mut self.bank, proposer, deposit, config, ts)?);
        self.record(Event::Open { proposer: proposer.into(), deposit, config }, ts);
        Ok(())
    }

    pub fn commit(&mut self, staker: &str, commitment: Commitment, escrow: TokenAmount, ts: i64) -> Result<(), AuctionError> {
        let round = self.round.as_mut().ok_or(AuctionError::InvalidConfig("commit before open".into()))?;
        round.commit(&mut self.bank, staker, commitment, escrow, ts)?;
        self.record(Event::Commit { staker: staker.into(), commitment, escrow }, ts);
        Ok(())
    }

    pub fn close(&mut self, ts: i64) -> Result<(), AuctionError> {
        self.round_mut("close")?.close(ts)?;
        self.record(Event::Close {}, ts);
        Ok(())
    }

    /// A forfeiting reveal is journaled and its error returned.
    pub fn reveal(&mut self, bid: &Bid, ts: i64) -> Result<(), AuctionError> {
        let result = self.round_mut("reveal")?.reveal(bid);
        match &result {
            Ok(()) => {}
            Err(e) if e.is_forfeit() => self.notes.push(e.to_string()),
            Err(_) => return result,
        }
        self.record(Event::Reveal { bid: bid.clone() }, ts);
        result
    }

    pub fn settle(&mut self, ts: i64) -> Result<Settlement, AuctionError> {
        let round = self.round.as_mut().ok_or(AuctionError::InvalidConfig("settle before open".into()))?;
        let settlement = round.settle(&mut self.bank)?.clone();
        self.record(Event::Settle { settlement: settlement.clone() }, ts);
        Ok(settlement)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayReport {
    pub settlement: Settlement,
    pub bank: Bank,
    /// Reveal failures that forfeited a stake.
    pub notes: Vec<String>,
}

impl ReplayReport {
    pub fn render(&self) -> String {
        let s = &self.settlement;
        let mut out = String::new();
        let outcome = match s.outcome {
            super::Outcome::Accepted => "accepted",
            super::Outcome::Denied => "denied",
        };
        let _ = writeln!(out, "outcome: {outcome}{}", if s.tie { " (tie)" } else { "" });
        let sum = num_rational::BigRational::new(s.decision_sum.into(), crate::token::SUBUNITS.into());
        let _ = writeln!(out, "decision sum: {}", fmt_signed_ratio(&sum).trim_start_matches('+'));
        for e in &s.entries {
            let delta = s.exact_delta(&e.staker).expect("entry exists");
            let _ = writeln!(out, "{}: {}", e.staker, fmt_signed_ratio(&delta));
        }
        for f in &s.forfeits {
            let _ = writeln!(out, "{}: forfeit {}", f.staker, f.amount);
        }
        for note in &self.notes {
            let _ = writeln!(out, "note: {note}");
        }
        let _ = writeln!(out, "minted: {}", s.minted);
        let _ = writeln!(out, "burned: {}", s.burned);
        out
    }
}

pub fn parse_journal(text: &str) -> Result<Vec<(usize, JournalLine)>, ReplayError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map(|j| (i + 1, j)).map_err(|e| ReplayError { line: i + 1, message: e.to_string() })
        })
        .collect()
}

/// Re-executes a journal and checks the recomputed settlement against the
/// journaled one.
pub fn replay(lines: &[(usize, JournalLine)]) -> Result<ReplayReport, ReplayError> {
    let Some(&(last_line, _)) = lines.last() else {
        return Err(ReplayError { line: 0, message: "empty journal".into() });
    };
    let mut auction = JournaledAuction::new();
    let mut result = None;
    for (line, entry) in lines {
        let fail = |message: String| ReplayError { line: *line, message };
        if result.is_some() {
            return Err(fail("event after settlement".into()));
        }
        let outcome = match &entry.event {
            Event::Fund { account, amount } => auction.fund(account, *amount, entry.ts),
            Event::Open { proposer, deposit, config } => auction.open(proposer, *deposit, *config, entry.ts),
            Event::Commit { staker, commitment, escrow } => auction.commit(staker, *commitment, *escrow, entry.ts),
            Event::Close {} => auction.close(entry.ts),
            Event::Reveal { bid } => match auction.reveal(bid, entry.ts) {
                Err(e) if e.is_forfeit() => Ok(()),
                other => other,
            },
            Event::Settle { settlement } => auction.settle(entry.ts).and_then(|recomputed| {
                if &recomputed != settlement {
                    return Err(AuctionError::InvalidConfig("settlement differs from the journaled one".into()));
                }
                result = Some(recomputed);
                Ok(())
            }),
        };
        outcome.map_err(|e| fail(e.to_string()))?;
        if auction.stage() != entry.phase {
            return Err(fail(format!("journal says phase {:?}, round is in {:?}", entry.phase, auction.stage())));
        }
    }
    let settlement = result.ok_or_else(|| ReplayError {
        line: last_line,
        message: format!("journal ends in phase {:?} without a settlement", auction.stage()),
    })?;
    Ok(ReplayReport { settlement, bank: auction.bank, notes: auction.notes })
}

pub fn replay_text(text: &str) -> Result<ReplayReport, ReplayError> {
    replay(&parse_journal(text)?)
}
