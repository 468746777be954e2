use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::settle::{settle, AuctionConfig, DepositFate, Forfeit, Settlement};
use super::{AuctionError, Bank, Bid, Commitment};
use crate::token::TokenAmount;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Open,
    Reveal,
    Settled,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Open => "open",
            Phase::Reveal => "reveal",
            Phase::Settled => "settled",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
enum Status {
    Sealed,
    Revealed(Bid),
    Forfeited,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Sealed {
    commitment: Commitment,
    escrow: TokenAmount,
    status: Status,
}

/// One proposal's commit, reveal and settle cycle. Funds move only through
/// the [`Bank`] passed to each call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuctionRound {
    proposer: String,
    deposit: TokenAmount,
    config: AuctionConfig,
    opened_at: i64,
    phase: Phase,
    sealed: BTreeMap<String, Sealed>,
    settlement: Option<Settlement>,
}

impl AuctionRound {
    pub fn open(
        bank: &mut Bank,
        proposer: &str,
        deposit: TokenAmount,
        config: AuctionConfig,
        now: i64,
    ) -> Result<AuctionRound, AuctionError> {
        config.validate()?;
        if deposit < config.min_deposit {
            return Err(AuctionError::DepositTooSmall { deposit, minimum: config.min_deposit });
        }
        bank.lock(proposer, deposit)?;
        Ok(AuctionRound {
            proposer: proposer.to_string(),
            deposit,
            config,
            opened_at: now,
            phase: Phase::Open,
            sealed: BTreeMap::new(),
            settlement: None,
        })
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn proposer(&self) -> &str {
        &self.proposer
    }

    pub fn deposit(&self) -> TokenAmount {
        self.deposit
    }

    pub fn config(&self) -> &AuctionConfig {
        &self.config
    }

    pub fn deadline(&self) -> i64 {
        self.opened_at.saturating_add(self.config.maturity)
    }

    pub fn settlement(&self) -> Option<&Settlement> {
        self.settlement.as_ref()
    }

    pub fn committed(&self) -> impl Iterator<Item = &str> {
        self.sealed.keys().map(String::as_str)
    }

    /// Funds this round currently holds locked in `bank`.
    pub fn locked_total(&self) -> TokenAmount {
        if self.phase == Phase::Settled {
            return TokenAmount::ZERO;
        }
        self.sealed.values().map(|s| s.escrow).chain([self.deposit]).sum()
    }

    fn require(&self, op: &'static str, phase: Phase) -> Result<(), AuctionError> {
        if self.phase == phase {
            Ok(())
        } else {
            Err(AuctionError::WrongPhase { op, phase: self.phase })
        }
    }

    /// Seals a bid and locks `escrow`, the most the staker may later reveal.
    pub fn commit(
        &mut self,
        bank: &mut Bank,
        staker: &str,
        commitment: Commitment,
        escrow: TokenAmount,
        now: i64,
    ) -> Result<(), AuctionError> {
        self.require("commit", Phase::Open)?;
        if now >= self.deadline() {
            return Err(AuctionError::WrongPhase { op: "commit", phase: self.phase });
        }
        if self.sealed.contains_key(staker) {
            return Err(AuctionError::DuplicateCommit(staker.to_string()));
        }
        bank.lock(staker, escrow)?;
        self.sealed.insert(staker.to_string(), Sealed { commitment, escrow, status: Status::Sealed });
        Ok(())
    }

    /// Ends the commit window; allowed once maturity has passed.
    pub fn close(&mut self, now: i64) -> Result<(), AuctionError> {
        self.require("close", Phase::Open)?;
        if now < self.deadline() {
            return Err(AuctionError::WrongPhase { op: "close", phase: self.phase });
        }
        self.phase = Phase::Reveal;
        Ok(())
    }

    /// Records a reveal. A bid that does not open its commitment, is zero, or
    /// exceeds the escrow forfeits the escrow; the error reports which.
    pub fn reveal(&mut self, bid: &Bid) -> Result<(), AuctionError> {
        self.require("reveal", Phase::Reveal)?;
        let sealed = self.sealed.get_mut(&bid.staker).ok_or_else(|| AuctionError::NoSuchCommitment(bid.staker.clone()))?;
        if sealed.status != Status::Sealed {
            return Err(AuctionError::AlreadyRevealed(bid.staker.clone()));
        }
        let failure = if bid.commitment() != sealed.commitment {
            Some(AuctionError::DigestMismatch(bid.staker.clone()))
        } else if bid.amount.is_zero() {
            Some(AuctionError::ZeroBid(bid.staker.clone()))
        } else if bid.amount > sealed.escrow {
            Some(AuctionError::ExceedsEscrow { staker: bid.staker.clone(), amount: bid.amount, escrow: sealed.escrow })
        } else {
            None
        };
        match failure {
            Some(e) => {
                sealed.status = Status::Forfeited;
                Err(e)
            }
            None => {
                sealed.status = Status::Revealed(bid.clone());
                Ok(())
            }
        }
    }

    /// Decides and pays out. Unrevealed commitments are forfeited.
    pub fn settle(&mut self, bank: &mut Bank) -> Result<&Settlement, AuctionError> {
        self.require("settle", Phase::Reveal)?;
        let mut reveals = Vec::new();
        let mut forfeits = Vec::new();
        for (staker, sealed) in &self.sealed {
            match &sealed.status {
                Status::Revealed(bid) => reveals.push(bid.clone()),
                Status::Sealed | Status::Forfeited => forfeits.push(Forfeit { staker: staker.clone(), amount: sealed.escrow }),
            }
        }
        let settlement = settle(&reveals, forfeits, self.deposit, &self.config)?;

        // Applied to a copy so a failure leaves the bank untouched.
        let mut next = bank.clone();
        for f in &settlement.forfeits {
            next.burn_locked(&f.staker, f.amount)?;
        }
        for e in &settlement.entries {
            let escrow = self.sealed[&e.staker].escrow;
            next.unlock(&e.staker, escrow.checked_sub(e.bid)?)?;
            next.take_locked(&e.staker, e.bid)?;
            next.credit(&e.staker, e.receipt.checked_add(e.deposit_share)?)?;
            next.mint(&e.staker, e.minted)?;
        }
        match settlement.deposit_fate {
            DepositFate::Returned => next.unlock(&self.proposer, self.deposit)?,
            DepositFate::Burned => next.burn_locked(&self.proposer, self.deposit)?,
            DepositFate::ToWinners => next.take_locked(&self.proposer, self.deposit)?,
        }
        *bank = next;
        self.phase = Phase::Settled;
        Ok(self.settlement.insert(settlement))
    }
}
