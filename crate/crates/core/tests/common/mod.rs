//! Random auction drivers shared by the fuzz tests and the acceptance run.
#![allow(dead_code)]

use std::collections::BTreeMap;

use qnar_core::opr::{
    AuctionConfig, AuctionError, AuctionRound, Bank, Bid, DepositSink, InflationMode, Outcome, Phase, Side, TieRule, Vote,
};
use qnar_core::token::TokenAmount;
use rand::Rng;

pub const STAKERS: [&str; 5] = ["S0", "S1", "S2", "S3", "S4"];
const PROPOSER: &str = "P";

fn sub(x: u128) -> TokenAmount {
    TokenAmount::from_subunits(x).unwrap()
}

pub fn random_config(rng: &mut impl Rng) -> AuctionConfig {
    AuctionConfig {
        maturity: rng.random_range(1..100),
        inflation: sub(rng.random_range(0..3) * rng.random_range(0..2_000_000_000)),
        min_deposit: sub(rng.random_range(0..1_000_000_000)),
        tie_rule: if rng.random_bool(0.5) { TieRule::Deny } else { TieRule::Accept },
        deposit_sink: if rng.random_bool(0.5) { DepositSink::Burn } else { DepositSink::ToWinners },
        inflation_mode: if rng.random_bool(0.5) { InflationMode::PerParticipant } else { InflationMode::TotalSplit },
    }
}

fn funded_bank(rng: &mut impl Rng) -> Bank {
    let mut bank = Bank::new();
    for who in STAKERS.iter().chain([&PROPOSER]) {
        bank.fund(who, sub(rng.random_range(0..10_000_000_000))).unwrap();
    }
    bank
}

fn check_books(bank: &Bank, round: &AuctionRound) -> Result<(), String> {
    let supply = bank.supply().map_err(|e| e.to_string())?.subunits() as i128;
    let expected = (bank.funded().subunits() + bank.minted().subunits()) as i128 - bank.burned().subunits() as i128;
    if supply != expected {
        return Err(format!("supply {supply} != funded + minted - burned {expected}"));
    }
    let locked: u128 = bank.accounts().map(|a| bank.locked(a).subunits()).sum();
    if locked != round.locked_total().subunits() {
        return Err(format!("bank holds {locked} locked, round accounts for {}", round.locked_total()));
    }
    if (round.phase() == Phase::Settled) != round.settlement().is_some() {
        return Err(format!("settlement presence disagrees with phase {}", round.phase()));
    }
    Ok(())
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Status {
    Sealed,
    Revealed,
    Forfeited,
}

/// Committed bid as the model sees it.
#[derive(Clone, Debug)]
struct Entry {
    bid: Bid,
    escrow: TokenAmount,
    status: Status,
}

/// How far a fuzzed sequence got.
#[derive(Debug, Clone, Copy)]
pub struct Trace {
    pub calls: usize,
    /// `None` when opening was rejected.
    pub reached: Option<Phase>,
}

/// Drives one round through a random sequence of up to `ops` calls, checking
/// every result against a reference model of the protocol and the books after
/// every step.
pub fn fuzz_sequence(rng: &mut impl Rng, ops: usize) -> Result<Trace, String> {
    let config = random_config(rng);
    let mut bank = funded_bank(rng);
    let deposit = sub(rng.random_range(0..2_000_000_000));
    let mut now: i64 = rng.random_range(-50..50);
    let proposer_funds = bank.available(PROPOSER);
    let round = AuctionRound::open(&mut bank, PROPOSER, deposit, config, now);
    let mut round = match (round, deposit < config.min_deposit, deposit > proposer_funds) {
        (Err(AuctionError::DepositTooSmall { .. }), true, _) | (Err(AuctionError::InsufficientBalance { .. }), false, true) => {
            return Ok(Trace { calls: 1, reached: None })
        }
        (Ok(r), false, false) => r,
        (other, small, poor) => return Err(format!("open: {other:?} (too small {small}, too poor {poor})")),
    };
    let deadline = now + config.maturity;
    let mut phase = Phase::Open;
    let mut model: BTreeMap<String, Entry> = BTreeMap::new();
    check_books(&bank, &round)?;

    for step in 1..=ops {
        now += rng.random_range(0..=config.maturity / 3 + 1);
        let before = (round.clone(), bank.clone());
        let fail = |what: String| Err(format!("step {step}: {what}"));
        let mut rejected = false;
        match rng.random_range(0..10) {
            0..=4 => {
                let staker = STAKERS[rng.random_range(0..STAKERS.len())];
                let amount = sub(rng.random_range(0..3_000_000_000));
                let escrow = match rng.random_range(0..4) {
                    0 => amount.saturating_sub(sub(1)),
                    _ => amount.checked_add(sub(rng.random_range(0..500_000_000))).unwrap(),
                };
                let vote = if rng.random_bool(0.5) { Vote::Accept } else { Vote::Deny };
                let bid = Bid::new(staker, amount, vote, rng.random());
                let available = bank.available(staker);
                let got = round.commit(&mut bank, staker, bid.commitment(), escrow, now);
                let expected = if phase != Phase::Open || now >= deadline {
                    "wrong-phase"
                } else if model.contains_key(staker) {
                    "duplicate"
                } else if available < escrow {
                    "insufficient"
                } else {
                    "ok"
                };
                match (&got, expected) {
                    (Ok(()), "ok") => {
                        model.insert(staker.into(), Entry { bid, escrow, status: Status::Sealed });
                    }
                    (Err(AuctionError::WrongPhase { .. }), "wrong-phase")
                    | (Err(AuctionError::DuplicateCommit(_)), "duplicate")
                    | (Err(AuctionError::InsufficientBalance { .. }), "insufficient") => rejected = true,
                    _ => return fail(format!("commit by {staker}: got {got:?}, model says {expected}")),
                }
            }
            5 => {
                let got = round.close(now);
                match (&got, phase == Phase::Open && now >= deadline) {
                    (Ok(()), true) => phase = Phase::Reveal,
                    (Err(AuctionError::WrongPhase { .. }), false) => rejected = true,
                    _ => return fail(format!("close at {now} (deadline {deadline}, phase {phase}): {got:?}")),
                }
            }
            6..=8 => {
                let target = STAKERS[rng.random_range(0..STAKERS.len())];
                let honest = model.get(target).map(|e| e.bid.clone()).unwrap_or_else(|| Bid::new(target, sub(1), Vote::Accept, [0; 32]));
                let mut bid = honest.clone();
                match rng.random_range(0..6) {
                    0 => bid.amount = bid.amount.checked_add(sub(1)).unwrap(),
                    1 => bid.vote = if bid.vote == Vote::Accept { Vote::Deny } else { Vote::Accept },
                    2 => bid.nonce[rng.random_range(0..32)] ^= 1 << rng.random_range(0..8),
                    _ => {}
                }
                let tampered = bid != honest;
                let got = round.reveal(&bid);
                let entry = model.get_mut(target);
                let ok = match (&got, phase, entry) {
                    (Err(AuctionError::WrongPhase { .. }), p, _) => p != Phase::Reveal,
                    (Err(AuctionError::NoSuchCommitment(_)), Phase::Reveal, None) => true,
                    (Err(AuctionError::AlreadyRevealed(_)), Phase::Reveal, Some(e)) => e.status != Status::Sealed,
                    (result, Phase::Reveal, Some(e)) if e.status == Status::Sealed => {
                        let verdict = match result {
                            Err(AuctionError::DigestMismatch(_)) => tampered,
                            Err(AuctionError::ZeroBid(_)) => !tampered && e.bid.amount.is_zero(),
                            Err(AuctionError::ExceedsEscrow { .. }) => !tampered && e.bid.amount > e.escrow,
                            Ok(()) => !tampered && !e.bid.amount.is_zero() && e.bid.amount <= e.escrow,
                            _ => false,
                        };
                        e.status = if result.is_ok() { Status::Revealed } else { Status::Forfeited };
                        verdict
                    }
                    _ => false,
                };
                if !ok {
                    return fail(format!("reveal for {target} in {phase} (tampered {tampered}): {got:?}"));
                }
                rejected = got.as_ref().is_err_and(|e| !e.is_forfeit());
            }
            _ => {
                let supply_before = bank.supply().unwrap().subunits() as i128;
                let balances: BTreeMap<&str, u128> =
                    STAKERS.iter().map(|s| (*s, bank.balance(s).subunits())).collect();
                let got = round.settle(&mut bank).cloned();
                match (&got, phase) {
                    (Err(AuctionError::WrongPhase { .. }), p) if p != Phase::Reveal => rejected = true,
                    (Ok(s), Phase::Reveal) => {
                        phase = Phase::Settled;
                        let change = bank.supply().unwrap().subunits() as i128 - supply_before;
                        if change != s.supply_change() {
                            return fail(format!("supply moved {change}, settlement says {}", s.supply_change()));
                        }
                        let valid: Vec<&Entry> = model.values().filter(|e| e.status == Status::Revealed).collect();
                        let forfeited: u128 =
                            model.values().filter(|e| e.status != Status::Revealed).map(|e| e.escrow.subunits()).sum();
                        let burned_forfeits: u128 = s.forfeits.iter().map(|f| f.amount.subunits()).sum();
                        if forfeited != burned_forfeits || s.entries.len() != valid.len() {
                            return fail(format!("forfeits {burned_forfeits} vs model {forfeited}"));
                        }
                        if valid.is_empty() && s.outcome != Outcome::Denied {
                            return fail("no valid reveals must deny".into());
                        }
                        let pot: u128 = valid.iter().map(|e| e.bid.amount.subunits()).sum();
                        let paid: u128 = s.entries.iter().map(|e| e.receipt.subunits()).sum();
                        if pot != paid {
                            return fail(format!("receipts {paid} != revealed bids {pot}"));
                        }
                        for e in &s.entries {
                            let bad = match e.side {
                                Side::Winner => e.receipt < e.bid,
                                Side::Loser => !e.receipt.is_zero(),
                                Side::Refunded => e.receipt != e.bid,
                            };
                            if bad {
                                return fail(format!("{} as {:?} received {} on {}", e.staker, e.side, e.receipt, e.bid));
                            }
                            let after = bank.balance(&e.staker).subunits() as i128;
                            if after - balances[e.staker.as_str()] as i128 != e.delta {
                                return fail(format!("{} balance moved by {}, entry says {}", e.staker, after - balances[e.staker.as_str()] as i128, e.delta));
                            }
                        }
                    }
                    _ => return fail(format!("settle in {phase}: {got:?}")),
                }
            }
        }
        if rejected && (round.clone(), bank.clone()) != before {
            return Err(format!("step {step}: a rejected call changed state"));
        }
        check_books(&bank, &round).map_err(|e| format!("step {step}: {e}"))?;
        if phase == Phase::Settled && rng.random_bool(0.3) {
            return Ok(Trace { calls: step + 1, reached: Some(phase) });
        }
    }
    Ok(Trace { calls: ops + 1, reached: Some(phase) })
}

/// Outcome of one randomized, honestly driven round.
pub struct RoundCheck {
    pub supply_change: i128,
    pub minted: u128,
    pub burned: u128,
    pub forfeits: usize,
}

/// Opens a random round, commits random bids (some later tampered or left
/// unrevealed when `allow_forfeits`), settles, and checks the books.
pub fn random_round(
    rng: &mut impl Rng,
    config: AuctionConfig,
    deposit: TokenAmount,
    allow_forfeits: bool,
) -> Result<RoundCheck, String> {
    let mut bank = Bank::new();
    bank.fund(PROPOSER, deposit.checked_add(sub(1)).unwrap()).unwrap();
    let n = rng.random_range(1..=STAKERS.len());
    let mut bids = Vec::new();
    for who in &STAKERS[..n] {
        let amount = sub(rng.random_range(1..5_000_000_000));
        bank.fund(who, amount).unwrap();
        bids.push(Bid::new(*who, amount, if rng.random_bool(0.5) { Vote::Accept } else { Vote::Deny }, rng.random()));
    }
    let start = bank.supply().unwrap().subunits() as i128;
    let mut round = AuctionRound::open(&mut bank, PROPOSER, deposit, config, 0).map_err(|e| e.to_string())?;
    for b in &bids {
        round.commit(&mut bank, &b.staker, b.commitment(), b.amount, 0).map_err(|e| e.to_string())?;
    }
    round.close(config.maturity).map_err(|e| e.to_string())?;
    for b in &bids {
        if allow_forfeits && rng.random_bool(0.1) {
            continue;
        }
        let mut shown = b.clone();
        if allow_forfeits && rng.random_bool(0.1) {
            shown.vote = if shown.vote == Vote::Accept { Vote::Deny } else { Vote::Accept };
        }
        match round.reveal(&shown) {
            Ok(()) => {}
            Err(e) if e.is_forfeit() => {}
            Err(e) => return Err(e.to_string()),
        }
    }
    let s = round.settle(&mut bank).map_err(|e| e.to_string())?.clone();
    let end = bank.supply().unwrap().subunits() as i128;
    check_books(&bank, &round)?;
    let check = RoundCheck {
        supply_change: end - start,
        minted: s.minted.subunits(),
        burned: s.burned.subunits(),
        forfeits: s.forfeits.len(),
    };
    if check.supply_change != check.minted as i128 - check.burned as i128 {
        return Err(format!("supply moved {} but minted {} and burned {}", check.supply_change, check.minted, check.burned));
    }
    Ok(check)
}
