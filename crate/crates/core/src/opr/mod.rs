//! The open peer review auction.
//!
//! Stakers commit to a sealed `(amount, vote)` bid, reveal it after the
//! commit window closes, and the proposal is decided by the sign of the
//! bid-weighted vote `Σ s_i v_i`.
//!
//! Payoff: with winners `W`, losers `L` and `r = Σ_L / Σ_W`, winner `i` earns
//! the profit `(s_i / Σ_W) · Σ_L`, so its profit per unit of winning stake is
//! `(s_i / Σ_W) · r`. Equivalently each winner receives `(s_i / Σ_W) · (Σ_W +
//! Σ_L)`, its pro-rata share of the whole pot. For bids 1 and 2 accepting
//! against 2 denying, the winners receive `1/3 · 5` and `2/3 · 5`.

mod bank;
mod commit;
pub mod journal;
mod round;
mod settle;

use thiserror::Error;

pub use bank::Bank;
pub use commit::{Bid, Commitment, Nonce, Vote};
pub use round::{AuctionRound, Phase};
pub use settle::{
    decide, fmt_signed_ratio, profit_ratio, settle, settle_core, AuctionConfig, CoreSettlement, Decision, DepositFate,
    DepositSink, Forfeit, InflationMode, Outcome, Settlement, SettlementEntry, Side, TieRule,
};

use crate::token::{TokenAmount, TokenError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AuctionError {
    #[error("deposit {deposit} below minimum {minimum}")]
    DepositTooSmall { deposit: TokenAmount, minimum: TokenAmount },
    #[error("{account} has {available} available, needs {needed}")]
    InsufficientBalance { account: String, available: TokenAmount, needed: TokenAmount },
    #[error("{op} not allowed in phase {phase}")]
    WrongPhase { op: &'static str, phase: Phase },
    #[error("{0} already committed")]
    DuplicateCommit(String),
    #[error("no commitment from {0}")]
    NoSuchCommitment(String),
    #[error("{0} already revealed or forfeited")]
    AlreadyRevealed(String),
    #[error("reveal by {0} does not match its commitment; stake forfeited")]
    DigestMismatch(String),
    #[error("bid of {amount} by {staker} exceeds its escrow {escrow}; stake forfeited")]
    ExceedsEscrow { staker: String, amount: TokenAmount, escrow: TokenAmount },
    #[error("zero bid by {0}; stake forfeited")]
    ZeroBid(String),
    #[error("no valid reveals")]
    NoValidReveals,
    #[error("{0} is not a winner")]
    NotAWinner(String),
    #[error("invalid auction config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Token(#[from] TokenError),
}

impl AuctionError {
    /// Reveal failures that still change the round by recording a forfeit.
    pub fn is_forfeit(&self) -> bool {
        matches!(self, AuctionError::DigestMismatch(_) | AuctionError::ExceedsEscrow { .. } | AuctionError::ZeroBid(_))
    }
}
