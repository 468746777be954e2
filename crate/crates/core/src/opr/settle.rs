use num_bigint::BigInt;
use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use super::{AuctionError, Bid, Vote};
use crate::token::{checked_sum, split_pro_rata, TokenAmount, SUBUNITS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Accepted,
    Denied,
}

impl Outcome {
    pub fn winning_vote(self) -> Vote {
        match self {
            Outcome::Accepted => Vote::Accept,
            Outcome::Denied => Vote::Deny,
        }
    }
}

/// Outcome of a zero bid-weighted vote. Bids are refunded either way.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TieRule {
    #[default]
    Deny,
    Accept,
}

/// Where a proposer deposit goes when the proposal is denied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DepositSink {
    #[default]
    Burn,
    ToWinners,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InflationMode {
    /// Every valid revealer is minted the full inflation amount.
    #[default]
    PerParticipant,
    /// The inflation amount is split evenly over valid revealers.
    TotalSplit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuctionConfig {
    /// Seconds from opening until commits close.
    pub maturity: i64,
    pub inflation: TokenAmount,
    pub min_deposit: TokenAmount,
    #[serde(default)]
    pub tie_rule: TieRule,
    #[serde(default)]
    pub deposit_sink: DepositSink,
    #[serde(default)]
    pub inflation_mode: InflationMode,
}

impl Default for AuctionConfig {
    fn default() -> Self {
        AuctionConfig {
            maturity: 604_800,
            inflation: TokenAmount::from_tokens(1).expect("in range"),
            min_deposit: TokenAmount::from_tokens(1).expect("in range"),
            tie_rule: TieRule::Deny,
            deposit_sink: DepositSink::Burn,
            inflation_mode: InflationMode::PerParticipant,
        }
    }
}

impl AuctionConfig {
    pub fn validate(&self) -> Result<(), AuctionError> {
        if self.maturity <= 0 {
            return Err(AuctionError::InvalidConfig(format!("maturity {} must be positive", self.maturity)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub outcome: Outcome,
    /// `Σ s_i v_i` in subunits.
    pub sum: i128,
    pub tie: bool,
}

impl Decision {
    /// An externally fixed outcome (no tie handling).
    pub fn fixed(outcome: Outcome, bids: &[(TokenAmount, Vote)]) -> Decision {
        Decision { outcome, sum: weighted_sum(bids), tie: false }
    }
}

fn weighted_sum(bids: &[(TokenAmount, Vote)]) -> i128 {
    // Each bid is below 2^64 so the sum of any realistic count fits.
    bids.iter().map(|(s, v)| s.subunits() as i128 * i128::from(v.sign())).sum()
}

/// Sign of the bid-weighted vote.
pub fn decide(bids: &[(TokenAmount, Vote)], tie_rule: TieRule) -> Result<Decision, AuctionError> {
    if bids.is_empty() {
        return Err(AuctionError::NoValidReveals);
    }
    let sum = weighted_sum(bids);
    let (outcome, tie) = match sum.signum() {
        1 => (Outcome::Accepted, false),
        -1 => (Outcome::Denied, false),
        _ => match tie_rule {
            TieRule::Deny => (Outcome::Denied, true),
            TieRule::Accept => (Outcome::Accepted, true),
        },
    };
    Ok(Decision { outcome, sum, tie })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Winner,
    Loser,
    Refunded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DepositFate {
    Returned,
    Burned,
    ToWinners,
}

/// Index-aligned settlement of anonymous bids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoreSettlement {
    pub sides: Vec<Side>,
    pub receipts: Vec<TokenAmount>,
    pub mints: Vec<TokenAmount>,
    pub deposit_shares: Vec<TokenAmount>,
    pub deposit_fate: DepositFate,
    pub sum_winners: TokenAmount,
    pub sum_losers: TokenAmount,
}

/// Winners split the whole pot (their own bids plus the losers') pro rata by
/// bid; losers receive nothing. A tie, or an empty winning side, refunds
/// every bid. `decision` is `None` when nobody revealed validly.
pub fn settle_core(
    bids: &[(TokenAmount, Vote)],
    decision: Option<&Decision>,
    deposit: TokenAmount,
    config: &AuctionConfig,
) -> Result<CoreSettlement, AuctionError> {
    let n = bids.len();
    let zero = vec![TokenAmount::ZERO; n];
    let Some(decision) = decision else {
        return Ok(CoreSettlement {
            sides: Vec::new(),
            receipts: Vec::new(),
            mints: Vec::new(),
            deposit_shares: Vec::new(),
            deposit_fate: DepositFate::Burned,
            sum_winners: TokenAmount::ZERO,
            sum_losers: TokenAmount::ZERO,
        });
    };
    let winning = decision.outcome.winning_vote();
    let sum_winners = checked_sum(bids.iter().filter(|(_, v)| *v == winning).map(|(s, _)| *s))?;
    let sum_losers = checked_sum(bids.iter().filter(|(_, v)| *v != winning).map(|(s, _)| *s))?;

    let refund = decision.tie || sum_winners.is_zero();
    let (sides, receipts) = if refund {
        (vec![Side::Refunded; n], bids.iter().map(|(s, _)| *s).collect())
    } else {
        let pot = sum_winners.checked_add(sum_losers)?;
        let weights: Vec<TokenAmount> =
            bids.iter().map(|(s, v)| if *v == winning { *s } else { TokenAmount::ZERO }).collect();
        let sides = bids.iter().map(|(_, v)| if *v == winning { Side::Winner } else { Side::Loser }).collect();
        (sides, split_pro_rata(pot, &weights))
    };

    let mints = match config.inflation_mode {
        InflationMode::PerParticipant => vec![config.inflation; n],
        InflationMode::TotalSplit => split_pro_rata(config.inflation, &vec![TokenAmount::from_subunits(1)?; n]),
    };

    let (deposit_fate, deposit_shares) = match decision.outcome {
        Outcome::Accepted => (DepositFate::Returned, zero),
        Outcome::Denied if refund || config.deposit_sink == DepositSink::Burn || deposit.is_zero() => {
            (DepositFate::Burned, zero)
        }
        Outcome::Denied => {
            let weights: Vec<TokenAmount> =
                bids.iter().zip(&sides).map(|((s, _), side)| if *side == Side::Winner { *s } else { TokenAmount::ZERO }).collect();
            (DepositFate::ToWinners, split_pro_rata(deposit, &weights))
        }
    };
    Ok(CoreSettlement { sides, receipts, mints, deposit_shares, deposit_fate, sum_winners, sum_losers })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SettlementEntry {
    pub staker: String,
    pub bid: TokenAmount,
    pub vote: Vote,
    pub side: Side,
    pub receipt: TokenAmount,
    pub minted: TokenAmount,
    pub deposit_share: TokenAmount,
    /// `receipt + minted + deposit_share - bid`, in subunits.
    pub delta: i128,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Forfeit {
    pub staker: String,
    pub amount: TokenAmount,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Settlement {
    pub outcome: Outcome,
    /// `Σ s_i v_i` in subunits.
    pub decision_sum: i128,
    pub tie: bool,
    pub sum_winners: TokenAmount,
    pub sum_losers: TokenAmount,
    pub entries: Vec<SettlementEntry>,
    pub forfeits: Vec<Forfeit>,
    pub deposit: TokenAmount,
    pub deposit_fate: DepositFate,
    pub minted: TokenAmount,
    pub burned: TokenAmount,
}

impl Settlement {
    pub fn entry(&self, staker: &str) -> Option<&SettlementEntry> {
        self.entries.iter().find(|e| e.staker == staker)
    }

    /// Change in total supply caused by the round, in subunits.
    pub fn supply_change(&self) -> i128 {
        self.minted.subunits() as i128 - self.burned.subunits() as i128
    }

    /// `Σ_L / Σ_W`, when there is a winning side.
    pub fn ratio(&self) -> Option<BigRational> {
        (!self.sum_winners.is_zero())
            .then(|| BigRational::new(big(self.sum_losers.subunits()), big(self.sum_winners.subunits())))
    }

    /// Exact wealth change of a revealer in tokens, before rounding the pot
    /// split to subunits.
    pub fn exact_delta(&self, staker: &str) -> Option<BigRational> {
        let e = self.entry(staker)?;
        let profit = match e.side {
            Side::Refunded => BigRational::from_integer(0.into()),
            Side::Loser => -BigRational::from_integer(big(e.bid.subunits())),
            Side::Winner => {
                BigRational::new(big(e.bid.subunits()) * big(self.sum_losers.subunits()), big(self.sum_winners.subunits()))
            }
        };
        let extra = big(e.minted.subunits() + e.deposit_share.subunits());
        Some((profit + BigRational::from_integer(extra)) / BigRational::from_integer(big(SUBUNITS)))
    }
}

fn big(x: u128) -> BigInt {
    BigInt::from(x)
}

/// Settles validly revealed bids plus forfeits. With no valid reveals the
/// proposal is denied and every escrow is forfeited.
pub fn settle(
    reveals: &[Bid],
    forfeits: Vec<Forfeit>,
    deposit: TokenAmount,
    config: &AuctionConfig,
) -> Result<Settlement, AuctionError> {
    let bids: Vec<(TokenAmount, Vote)> = reveals.iter().map(|b| (b.amount, b.vote)).collect();
    let decision = match decide(&bids, config.tie_rule) {
        Ok(d) => Some(d),
        Err(AuctionError::NoValidReveals) => None,
        Err(e) => return Err(e),
    };
    let core = settle_core(&bids, decision.as_ref(), deposit, config)?;
    let entries: Vec<SettlementEntry> = reveals
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let credit = core.receipts[i].subunits() + core.mints[i].subunits() + core.deposit_shares[i].subunits();
            SettlementEntry {
                staker: b.staker.clone(),
                bid: b.amount,
                vote: b.vote,
                side: core.sides[i],
                receipt: core.receipts[i],
                minted: core.mints[i],
                deposit_share: core.deposit_shares[i],
                delta: credit as i128 - b.amount.subunits() as i128,
            }
        })
        .collect();
    let minted = checked_sum(core.mints.iter().copied())?;
    let mut burned = checked_sum(forfeits.iter().map(|f| f.amount))?;
    if core.deposit_fate == DepositFate::Burned {
        burned = burned.checked_add(deposit)?;
    }
    Ok(Settlement {
        outcome: decision.map_or(Outcome::Denied, |d| d.outcome),
        decision_sum: decision.map_or(0, |d| d.sum),
        tie: decision.is_some_and(|d| d.tie),
        sum_winners: core.sum_winners,
        sum_losers: core.sum_losers,
        entries,
        forfeits,
        deposit,
        deposit_fate: core.deposit_fate,
        minted,
        burned,
    })
}

/// `(s_i / Σ_W) · (Σ_L / Σ_W)`: a winner's profit per unit of winning stake.
pub fn profit_ratio(settlement: &Settlement, staker: &str) -> Result<BigRational, AuctionError> {
    let e = settlement
        .entry(staker)
        .filter(|e| e.side == Side::Winner)
        .ok_or_else(|| AuctionError::NotAWinner(staker.to_string()))?;
    let w = big(settlement.sum_winners.subunits());
    Ok(BigRational::new(big(e.bid.subunits()) * big(settlement.sum_losers.subunits()), w.clone() * w))
}

/// Formats an exact token amount as `+2/3`, `-2` or `0`.
pub fn fmt_signed_ratio(x: &BigRational) -> String {
    let sign = if x > &BigRational::from_integer(0.into()) { "+" } else { "" };
    if x.is_integer() {
        format!("{sign}{}", x.numer())
    } else {
        format!("{sign}{}/{}", x.numer(), x.denom())
    }
}
