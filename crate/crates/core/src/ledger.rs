//! Cred (QNAR) to Grain (QLET) payouts and the account ledger.
//!
//! All ledger state is in exact fixed-point [`TokenAmount`]s. Real-valued
//! inputs (reputation scores, RECENT decay weights) are rounded to subunits
//! once, at the boundary.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::NodeId;
use crate::token::{split_pro_rata, TokenAmount, TokenError};

pub type Balances = BTreeMap<NodeId, TokenAmount>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LedgerError {
    #[error("balance of {account} would leave the fixed-point range")]
    OverflowGuard { account: NodeId },
    #[error("RECENT decay {0} not in (0, 1]")]
    InvalidDecay(f64),
    #[error("conversion rate must have a positive denominator")]
    InvalidRate,
    #[error("journal line {line}: {message}")]
    Journal { line: usize, message: String },
    #[error(transparent)]
    Token(#[from] TokenError),
}

/// QLET minted per QNAR, as `qlet / qnar`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversionRate {
    pub qlet: u64,
    pub qnar: u64,
}

impl Default for ConversionRate {
    fn default() -> Self {
        ConversionRate { qlet: 1, qnar: 1 }
    }
}

impl ConversionRate {
    pub fn convert(&self, qnar: TokenAmount) -> Result<TokenAmount, LedgerError> {
        if self.qnar == 0 {
            return Err(LedgerError::InvalidRate);
        }
        let out = qnar.subunits() * u128::from(self.qlet) / u128::from(self.qnar);
        Ok(TokenAmount::from_subunits(out)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Strategy {
    Immediate,
    Balanced,
    /// Per-period weight decay in `(0, 1]`.
    Recent { decay: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PayoutPolicy {
    pub strategy: Strategy,
    /// Grain distributed per period by BALANCED and RECENT.
    pub budget: TokenAmount,
    pub rate: ConversionRate,
}

impl Default for PayoutPolicy {
    fn default() -> Self {
        PayoutPolicy {
            strategy: Strategy::Balanced,
            budget: TokenAmount::from_tokens(100).expect("in range"),
            rate: ConversionRate::default(),
        }
    }
}

/// One QLET per QNAR earned in the period.
pub fn payout_immediate(period_qnar: &Balances) -> Balances {
    period_qnar.clone()
}

/// Splits `budget` over accounts in proportion to how far their lifetime
/// payout lags their lifetime target (`lifetime QNAR * rate`). Never pays
/// more than the total shortfall.
pub fn payout_balanced(
    lifetime_qnar: &Balances,
    lifetime_paid: &Balances,
    budget: TokenAmount,
    rate: ConversionRate,
) -> Result<Balances, LedgerError> {
    let mut accounts = Vec::with_capacity(lifetime_qnar.len());
    let mut shortfall = Vec::with_capacity(lifetime_qnar.len());
    for (account, qnar) in lifetime_qnar {
        let target = rate.convert(*qnar)?;
        let paid = lifetime_paid.get(account).copied().unwrap_or_default();
        accounts.push(account.clone());
        shortfall.push(target.saturating_sub(paid));
    }
    let required = crate::token::checked_sum(shortfall.iter().copied())?;
    let pot = budget.min(required);
    Ok(accounts.into_iter().zip(split_pro_rata(pot, &shortfall)).collect())
}

/// Splits `budget` in proportion to decayed QNAR history. `history` is
/// oldest first; the last entry is the current period and is undecayed.
pub fn payout_recent(history: &[Balances], decay: f64, budget: TokenAmount) -> Result<Balances, LedgerError> {
    if !(decay > 0.0 && decay <= 1.0) {
        return Err(LedgerError::InvalidDecay(decay));
    }
    let now = history.len();
    let mut weight: BTreeMap<&NodeId, f64> = BTreeMap::new();
    for (t, period) in history.iter().enumerate() {
        let factor = decay.powi((now - 1 - t) as i32);
        for (account, q) in period {
            *weight.entry(account).or_default() += factor * q.subunits() as f64;
        }
    }
    let accounts: Vec<NodeId> = weight.keys().map(|a| (*a).clone()).collect();
    let weights = weight
        .values()
        .map(|w| TokenAmount::from_subunits(w.round() as u128))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(accounts.into_iter().zip(split_pro_rata(budget, &weights)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PeriodEntry {
    pub qnar: TokenAmount,
    pub qlet: TokenAmount,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub periods: BTreeMap<u32, PeriodEntry>,
    pub lifetime_qnar: TokenAmount,
    pub lifetime_qlet: TokenAmount,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Movement {
    Qnar,
    Qlet,
}

/// One line of the append-only journal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JournalEntry {
    pub period: u32,
    pub kind: Movement,
    pub account: NodeId,
    /// Subunits.
    pub amount: TokenAmount,
}

/// Per-account QNAR earned and QLET paid, by period and lifetime.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Ledger {
    accounts: BTreeMap<NodeId, LedgerEntry>,
    journal: Vec<JournalEntry>,
}

impl Ledger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entry(&self, account: &NodeId) -> Option<&LedgerEntry> {
        self.accounts.get(account)
    }

    pub fn accounts(&self) -> impl Iterator<Item = (&NodeId, &LedgerEntry)> {
        self.accounts.iter()
    }

    pub fn journal(&self) -> &[JournalEntry] {
        &self.journal
    }

    pub fn lifetime_qnar(&self) -> Balances {
        self.accounts.iter().map(|(a, e)| (a.clone(), e.lifetime_qnar)).collect()
    }

    pub fn lifetime_qlet(&self) -> Balances {
        self.accounts.iter().map(|(a, e)| (a.clone(), e.lifetime_qlet)).collect()
    }

    /// QNAR earned in each period so far, oldest first, through `period`.
    pub fn qnar_history(&self, period: u32) -> Vec<Balances> {
        let first = self.accounts.values().flat_map(|e| e.periods.keys().next().copied()).min().unwrap_or(period);
        (first..=period)
            .map(|t| {
                self.accounts
                    .iter()
                    .filter_map(|(a, e)| e.periods.get(&t).map(|p| (a.clone(), p.qnar)))
                    .collect()
            })
            .collect()
    }

    pub fn record_qnar(&mut self, period: u32, earned: &Balances) -> Result<(), LedgerError> {
        self.post(period, Movement::Qnar, earned)
    }

    pub fn apply_payout(&mut self, period: u32, payouts: &Balances) -> Result<(), LedgerError> {
        self.post(period, Movement::Qlet, payouts)
    }

    /// All-or-nothing: amounts are range-checked before any entry changes.
    fn post(&mut self, period: u32, kind: Movement, amounts: &Balances) -> Result<(), LedgerError> {
        for (account, amount) in amounts {
            let current = self.accounts.get(account).map(|e| match kind {
                Movement::Qnar => e.lifetime_qnar,
                Movement::Qlet => e.lifetime_qlet,
            });
            current
                .unwrap_or_default()
                .checked_add(*amount)
                .map_err(|_| LedgerError::OverflowGuard { account: account.clone() })?;
        }
        for (account, amount) in amounts {
            if amount.is_zero() {
                continue;
            }
            let entry = self.accounts.entry(account.clone()).or_default();
            let slot = entry.periods.entry(period).or_default();
            let (per_period, lifetime) = match kind {
                Movement::Qnar => (&mut slot.qnar, &mut entry.lifetime_qnar),
                Movement::Qlet => (&mut slot.qlet, &mut entry.lifetime_qlet),
            };
            // Both sums are bounded by the lifetime total checked above.
            *per_period = per_period.checked_add(*amount)?;
            *lifetime = lifetime.checked_add(*amount)?;
            self.journal.push(JournalEntry { period, kind, account: account.clone(), amount: *amount });
        }
        Ok(())
    }

    /// Records a period's QNAR and pays QLET under `policy`.
    pub fn settle_period(&mut self, period: u32, earned: &Balances, policy: &PayoutPolicy) -> Result<Balances, LedgerError> {
        self.record_qnar(period, earned)?;
        let payouts = match policy.strategy {
            Strategy::Immediate => earned
                .iter()
                .map(|(a, q)| Ok((a.clone(), policy.rate.convert(*q)?)))
                .collect::<Result<Balances, LedgerError>>()?,
            Strategy::Balanced => {
                payout_balanced(&self.lifetime_qnar(), &self.lifetime_qlet(), policy.budget, policy.rate)?
            }
            Strategy::Recent { decay } => payout_recent(&self.qnar_history(period), decay, policy.budget)?,
        };
        self.apply_payout(period, &payouts)?;
        Ok(payouts)
    }

    pub fn replay(entries: &[JournalEntry]) -> Result<Ledger, LedgerError> {
        let mut ledger = Ledger::new();
        for e in entries {
            let one: Balances = [(e.account.clone(), e.amount)].into_iter().collect();
            ledger.post(e.period, e.kind, &one)?;
        }
        Ok(ledger)
    }

    /// `account,lifetime_qnar,lifetime_qlet` in subunits.
    pub fn snapshot_csv(&self) -> String {
        let mut out = String::from("account,lifetime_qnar,lifetime_qlet\n");
        for (a, e) in &self.accounts {
            let _ = writeln!(out, "{a},{},{}", e.lifetime_qnar.subunits(), e.lifetime_qlet.subunits());
        }
        out
    }

    pub fn journal_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.journal {
            out.push_str(&serde_json::to_string(e).expect("journal entry serializes"));
            out.push('\n');
        }
        out
    }

    pub fn parse_journal(text: &str) -> Result<Vec<JournalEntry>, LedgerError> {
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| LedgerError::Journal { line: i + 1, message: e.to_string() }))
            .collect()
    }
}

/// QNAR earned since the last recorded lifetime total: the positive part of
/// `score - lifetime`, rounded to subunits.
pub fn qnar_gains(scores: &[(NodeId, f64)], lifetime: &Balances) -> Result<Balances, LedgerError> {
    let mut out = Balances::new();
    for (account, score) in scores {
        let level = TokenAmount::from_real(score.max(0.0))?;
        let have = lifetime.get(account).copied().unwrap_or_default();
        let gain = level.saturating_sub(have);
        if !gain.is_zero() {
            out.insert(account.clone(), gain);
        }
    }
    Ok(out)
}
