//! Monte Carlo population of unskilled stakers playing repeated auctions.
//!
//! Wealth is exact fixed point; returns and their summaries are `f64`.
//! Replication `r` draws from ChaCha8 keyed by `sha256(seed ‖ r)`: stream 0
//! for exogenous truths, stream `i + 1` for staker `i`'s votes and a separate
//! stream for initial stakes, so results do not depend on scheduling.

use num_integer::Integer;
use rand::distr::Bernoulli;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Pareto, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::sync::atomic::{AtomicBool, Ordering};
use thiserror::Error;

use crate::numfmt::sig12;
use crate::opr::{decide, settle_core, AuctionConfig, AuctionError, Decision, InflationMode, Outcome, TieRule, Vote};
use crate::token::{TokenAmount, SUBUNITS};

const INIT_STREAM: u64 = u64::MAX;
const TRUTH_STREAM: u64 = 0;
/// Rounds between checks of the stop flag.
const STOP_POLL: u32 = 256;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("invalid distribution parameters: {0}")]
    InvalidDistributionParams(String),
    #[error("fewer than two solvent stakers")]
    NotEnoughPlayers,
    #[error("returns are degenerate (fewer than two or zero spread)")]
    DegenerateReturns,
    #[error("division by zero")]
    DivisionByZero,
    #[error("interrupted")]
    Interrupted,
    #[error(transparent)]
    Auction(#[from] AuctionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InitialDistribution {
    Uniform { lo: f64, hi: f64 },
    Pareto { shape: f64, scale: f64 },
}

impl InitialDistribution {
    /// U(0.5, 1.5), mean 1.
    pub const UNIFORM: InitialDistribution = InitialDistribution::Uniform { lo: 0.5, hi: 1.5 };
    /// Pareto with shape 2 and scale 0.5, mean 1.
    pub const PARETO: InitialDistribution = InitialDistribution::Pareto { shape: 2.0, scale: 0.5 };

    pub fn name(&self) -> &'static str {
        match self {
            InitialDistribution::Uniform { .. } => "uniform",
            InitialDistribution::Pareto { .. } => "pareto",
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let ok = match *self {
            InitialDistribution::Uniform { lo, hi } => lo > 0.0 && hi >= lo && hi.is_finite(),
            InitialDistribution::Pareto { shape, scale } => shape > 1.0 && scale > 0.0 && shape.is_finite() && scale.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(SimError::InvalidDistributionParams(format!("{self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OutcomeMode {
    /// Decided by the sign of the bid-weighted vote.
    Endogenous,
    /// Decided by an independent draw; winners are those who voted for it.
    Exogenous { p_accept: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub n_stakers: usize,
    pub n_rounds: u32,
    pub distribution: InitialDistribution,
    /// Probability of an Accept vote.
    pub vote_p: f64,
    /// Share of current wealth bid each round.
    pub bid_fraction: f64,
    pub inflation: TokenAmount,
    pub inflation_mode: InflationMode,
    pub outcome_mode: OutcomeMode,
    pub replications: u32,
    pub seed: u64,
    /// Round counts at which metrics are also reported; `n_rounds` always is.
    pub checkpoints: Vec<u32>,
    pub record_paths: bool,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            n_stakers: 10,
            n_rounds: 100,
            distribution: InitialDistribution::UNIFORM,
            vote_p: 0.5,
            bid_fraction: 0.1,
            inflation: TokenAmount::from_tokens(1).expect("in range"),
            inflation_mode: InflationMode::PerParticipant,
            outcome_mode: OutcomeMode::Endogenous,
            replications: 100,
            seed: 0,
            checkpoints: Vec::new(),
            record_paths: false,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        if self.n_stakers < 2 {
            return bad(format!("n = {} must be at least 2", self.n_stakers));
        }
        if self.n_rounds < 1 {
            return bad("rounds must be at least 1".into());
        }
        if self.replications < 1 {
            return bad("replications must be at least 1".into());
        }
        if !(self.bid_fraction > 0.0 && self.bid_fraction <= 1.0) {
            return bad(format!("f = {} not in (0, 1]", self.bid_fraction));
        }
        if self.fraction().0 == 0 {
            return bad(format!("f = {} rounds to zero", self.bid_fraction));
        }
        if !(0.0..=1.0).contains(&self.vote_p) {
            return bad(format!("p = {} not in [0, 1]", self.vote_p));
        }
        if let OutcomeMode::Exogenous { p_accept } = self.outcome_mode {
            if !(0.0..=1.0).contains(&p_accept) {
                return bad(format!("p_accept = {p_accept} not in [0, 1]"));
            }
        }
        self.distribution.validate()
    }

    /// `f` as a reduced fraction of parts per billion.
    fn fraction(&self) -> (u64, u64) {
        let mut num = (self.bid_fraction * SUBUNITS as f64).round() as u64;
        let mut den = SUBUNITS as u64;
        let g = num.gcd(&den);
        num /= g;
        den /= g;
        (num, den)
    }

    /// Sorted checkpoints within range, ending at `n_rounds`.
    pub fn resolved_checkpoints(&self) -> Vec<u32> {
        let mut out: Vec<u32> = self.checkpoints.iter().copied().filter(|&c| c >= 1 && c < self.n_rounds).collect();
        out.push(self.n_rounds);
        out.sort_unstable();
        out.dedup();
        out
    }

    fn auction_config(&self) -> AuctionConfig {
        AuctionConfig {
            inflation: self.inflation,
            inflation_mode: self.inflation_mode,
            min_deposit: TokenAmount::ZERO,
            tie_rule: TieRule::Deny,
            ..AuctionConfig::default()
        }
    }

    fn replication_key(&self, replication: u32) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(replication.to_le_bytes());
        h.finalize().into()
    }
}

/// `n` i.i.d. positive stakes, rounded to subunits (at least one).
pub fn init_stakes(n: usize, distribution: InitialDistribution, rng: &mut impl Rng) -> Result<Vec<TokenAmount>, SimError> {
    distribution.validate()?;
    let draw: Box<dyn FnMut(&mut dyn rand::RngCore) -> f64> = match distribution {
        InitialDistribution::Uniform { lo, hi } => {
            let d = Uniform::new_inclusive(lo, hi).map_err(|e| SimError::InvalidDistributionParams(e.to_string()))?;
            Box::new(move |r| d.sample(r))
        }
        InitialDistribution::Pareto { shape, scale } => {
            let d = Pareto::new(scale, shape).map_err(|e| SimError::InvalidDistributionParams(e.to_string()))?;
            Box::new(move |r| d.sample(r))
        }
    };
    let mut draw = draw;
    (0..n)
        .map(|_| {
            let x = draw(rng);
            TokenAmount::from_real(x)
                .map(|t| t.max(TokenAmount::from_subunits(1).expect("in range")))
                .map_err(|e| SimError::InvalidDistributionParams(format!("stake {x}: {e}")))
        })
        .collect()
}

fn bid_of(wealth: TokenAmount, num: u64, den: u64) -> TokenAmount {
    // Wealth is below 2^64 subunits; stay in 64-bit arithmetic when possible.
    let w = wealth.subunits() as u64;
    match w.checked_mul(num) {
        Some(p) => TokenAmount::from_subunits(u128::from(p / den)).expect("below wealth"),
        None => wealth.mul_div_floor(num.into(), den.into()),
    }
}

/// One auction among the living. `wealth` and `alive` are updated in place;
/// returns the per-staker return (`0` for those sitting out).
pub fn play_round(
    wealth: &mut [TokenAmount],
    alive: &mut [bool],
    votes: &[Vote],
    truth: Option<Outcome>,
    config: &SimulationConfig,
) -> Result<Vec<f64>, SimError> {
    let (num, den) = config.fraction();
    let mut players = Vec::with_capacity(wealth.len());
    let mut bids = Vec::with_capacity(wealth.len());
    for i in 0..wealth.len() {
        if !alive[i] {
            continue;
        }
        let bid = bid_of(wealth[i], num, den);
        if bid.is_zero() {
            alive[i] = false;
            continue;
        }
        players.push(i);
        bids.push((bid, votes[i]));
    }
    if players.len() < 2 {
        return Err(SimError::NotEnoughPlayers);
    }
    let decision = match truth {
        None => decide(&bids, TieRule::Deny)?,
        Some(outcome) => Decision::fixed(outcome, &bids),
    };
    let core = settle_core(&bids, Some(&decision), TokenAmount::ZERO, &config.auction_config())?;
    let mut returns = vec![0.0; wealth.len()];
    for (k, &i) in players.iter().enumerate() {
        let before = wealth[i];
        let after = before
            .checked_sub(bids[k].0)
            .and_then(|w| w.checked_add(core.receipts[k]))
            .and_then(|w| w.checked_add(core.mints[k]))
            .map_err(AuctionError::from)?;
        wealth[i] = after;
        returns[i] = (after.subunits() as f64 - before.subunits() as f64) / before.subunits() as f64;
    }
    Ok(returns)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMetrics {
    pub rounds: u32,
    /// Rounds actually played up to this checkpoint.
    pub rounds_played: u32,
    pub exp_return: f64,
    pub std: f64,
    pub sharpe: Option<f64>,
    pub survivors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Paths {
    /// `wealth[t][i]` after round `t`; row 0 is the initial allocation.
    pub wealth: Vec<Vec<TokenAmount>>,
    pub votes: Vec<Vec<Vote>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationResult {
    pub replication: u32,
    pub initial: Vec<TokenAmount>,
    pub final_wealth: Vec<TokenAmount>,
    /// Rounds played before dropping out, `None` if still solvent.
    pub death_round: Vec<Option<u32>>,
    /// Round at which fewer than two stakers could bid.
    pub truncated_at: Option<u32>,
    pub minted: TokenAmount,
    pub checkpoints: Vec<CheckpointMetrics>,
    pub paths: Option<Paths>,
}

impl ReplicationResult {
    pub fn at(&self, rounds: u32) -> Option<&CheckpointMetrics> {
        self.checkpoints.iter().find(|c| c.rounds == rounds)
    }

    pub fn survival(&self) -> Vec<u32> {
        let played = self.truncated_at.map_or(self.checkpoints.last().map_or(0, |c| c.rounds), |t| t - 1);
        self.death_round.iter().map(|d| d.unwrap_or(played)).collect()
    }
}

/// Pooled mean and sum of squared deviations, merged one round at a time.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    count: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn merge_batch(&mut self, xs: &[f64]) {
        let n = xs.len() as f64;
        if n == 0.0 {
            return;
        }
        let mean = xs.iter().sum::<f64>() / n;
        let m2: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
        let total = self.count + n;
        let delta = mean - self.mean;
        self.mean += delta * n / total;
        self.m2 += m2 + delta * delta * self.count * n / total;
        self.count = total;
    }

    fn std(&self) -> f64 {
        if self.count < 2.0 {
            return 0.0;
        }
        (self.m2 / (self.count - 1.0)).sqrt()
    }

    fn sharpe(&self) -> Option<f64> {
        let sd = self.std();
        // A spread within rounding of the mean is a constant series.
        let spread = sd > 8.0 * f64::EPSILON * self.mean.abs();
        (self.count >= 2.0 && sd > 0.0 && spread).then(|| self.mean / sd).filter(|s| s.is_finite())
    }
}

/// Runs one replication with staker `i` drawing votes from `streams[i]`.
pub fn run_replication_with_streams(
    config: &SimulationConfig,
    replication: u32,
    streams: &[u64],
) -> Result<ReplicationResult, SimError> {
    replicate(config, replication, streams, None)
}

fn replicate(
    config: &SimulationConfig,
    replication: u32,
    streams: &[u64],
    stop: Option<&AtomicBool>,
) -> Result<ReplicationResult, SimError> {
    config.validate()?;
    let n = config.n_stakers;
    if streams.len() != n {
        return Err(SimError::InvalidConfig(format!("{} vote streams for {n} stakers", streams.len())));
    }
    let key = config.replication_key(replication);
    let rng_on = |stream: u64| {
        let mut r = ChaCha8Rng::from_seed(key);
        r.set_stream(stream);
        r
    };
    let initial = init_stakes(n, config.distribution, &mut rng_on(INIT_STREAM))?;
    let mut vote_rngs: Vec<ChaCha8Rng> = streams.iter().map(|&s| rng_on(s)).collect();
    let mut truth_rng = rng_on(TRUTH_STREAM);
    let accept = Bernoulli::new(config.vote_p).map_err(|e| SimError::InvalidConfig(e.to_string()))?;
    let truth_dist = match config.outcome_mode {
        OutcomeMode::Endogenous => None,
        OutcomeMode::Exogenous { p_accept } => {
            Some(Bernoulli::new(p_accept).map_err(|e| SimError::InvalidConfig(e.to_string()))?)
        }
    };

    let mut wealth = initial.clone();
    let mut alive = vec![true; n];
    let mut death_round = vec![None; n];
    let mut votes = vec![Vote::Accept; n];
    let mut moments = Moments::default();
    let mut truncated_at = None;
    let mut minted = TokenAmount::ZERO;
    let mut paths = config.record_paths.then(|| Paths { wealth: vec![initial.clone()], votes: Vec::new() });
    let checkpoints = config.resolved_checkpoints();
    let mut metrics = Vec::with_capacity(checkpoints.len());
    let mut next_checkpoint = 0;
    let mut rounds_played = 0;

    for round in 1..=config.n_rounds {
        if round % STOP_POLL == 0 && stop.is_some_and(|s| s.load(Ordering::Relaxed)) {
            return Err(SimError::Interrupted);
        }
        // Every stream advances every round so runs stay aligned whatever
        // happens to individual stakers.
        for (v, r) in votes.iter_mut().zip(&mut vote_rngs) {
            *v = if accept.sample(r) { Vote::Accept } else { Vote::Deny };
        }
        let truth = truth_dist.map(|d| if d.sample(&mut truth_rng) { Outcome::Accepted } else { Outcome::Denied });

        if truncated_at.is_none() {
            let was_alive = alive.clone();
            let before: TokenAmount = wealth.iter().copied().sum();
            match play_round(&mut wealth, &mut alive, &votes, truth, config) {
                Ok(returns) => {
                    moments.merge_batch(&returns);
                    rounds_played = round;
                    let after: TokenAmount = wealth.iter().copied().sum();
                    minted = minted.checked_add(after.checked_sub(before).map_err(AuctionError::from)?).map_err(AuctionError::from)?;
                }
                Err(SimError::NotEnoughPlayers) => truncated_at = Some(round),
                Err(e) => return Err(e),
            }
            for i in 0..n {
                if was_alive[i] && !alive[i] {
                    death_round[i] = Some(round - 1);
                }
            }
            if let Some(p) = paths.as_mut() {
                if truncated_at.is_none() {
                    p.wealth.push(wealth.clone());
                    p.votes.push(votes.clone());
                }
            }
        }

        if checkpoints.get(next_checkpoint) == Some(&round) {
            metrics.push(CheckpointMetrics {
                rounds: round,
                rounds_played,
                exp_return: moments.mean,
                std: moments.std(),
                sharpe: moments.sharpe(),
                survivors: alive.iter().filter(|a| **a).count(),
            });
            next_checkpoint += 1;
        }
        if truncated_at.is_some() && paths.is_none() && next_checkpoint == checkpoints.len() {
            break;
        }
    }
    while next_checkpoint < checkpoints.len() {
        metrics.push(CheckpointMetrics {
            rounds: checkpoints[next_checkpoint],
            rounds_played,
            exp_return: moments.mean,
            std: moments.std(),
            sharpe: moments.sharpe(),
            survivors: alive.iter().filter(|a| **a).count(),
        });
        next_checkpoint += 1;
    }

    Ok(ReplicationResult {
        replication,
        initial,
        final_wealth: wealth,
        death_round,
        truncated_at,
        minted,
        checkpoints: metrics,
        paths,
    })
}

pub fn run_replication(config: &SimulationConfig, replication: u32) -> Result<ReplicationResult, SimError> {
    let streams: Vec<u64> = (1..=config.n_stakers as u64).collect();
    run_replication_with_streams(config, replication, &streams)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub config: SimulationConfig,
    pub replications: Vec<ReplicationResult>,
    /// Set when a stop request cut the run short; `replications` is then the
    /// completed prefix `0..k`.
    #[serde(default)]
    pub interrupted: bool,
}

pub const REPORT_HEADER: &str = "n,rounds,dist,replication,exp_return,std,sharpe,survivors";

impl SimulationReport {
    pub fn metrics(&self, rounds: u32) -> impl Iterator<Item = &CheckpointMetrics> {
        self.replications.iter().filter_map(move |r| r.at(rounds))
    }

    /// Median Sharpe over replications where it is defined.
    pub fn median_sharpe(&self, rounds: u32) -> Option<f64> {
        median(self.metrics(rounds).filter_map(|m| m.sharpe).collect())
    }

    pub fn mean_exp_return(&self, rounds: u32) -> Option<f64> {
        let xs: Vec<f64> = self.metrics(rounds).map(|m| m.exp_return).collect();
        (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
    }

    /// CSV rows (no header), one per replication and checkpoint.
    pub fn csv_rows(&self) -> String {
        let mut out = String::new();
        let c = &self.config;
        for r in &self.replications {
            for m in &r.checkpoints {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{}",
                    c.n_stakers,
                    m.rounds,
                    c.distribution.name(),
                    r.replication,
                    sig12(m.exp_return),
                    sig12(m.std),
                    m.sharpe.map(sig12).unwrap_or_default(),
                    m.survivors
                );
            }
        }
        out
    }

    /// `replication,round,staker,wealth` with wealth in subunits.
    pub fn paths_csv(&self) -> Option<String> {
        let mut out = String::from("replication,round,staker,wealth\n");
        for r in &self.replications {
            for (t, row) in r.paths.as_ref()?.wealth.iter().enumerate() {
                for (i, w) in row.iter().enumerate() {
                    let _ = writeln!(out, "{},{t},{i},{}", r.replication, w.subunits());
                }
            }
        }
        Some(out)
    }
}

pub fn run_simulation(config: &SimulationConfig) -> Result<SimulationReport, SimError> {
    config.validate()?;
    let replications = (0..config.replications)
        .into_par_iter()
        .map(|r| run_replication(config, r))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SimulationReport { config: config.clone(), replications, interrupted: false })
}

/// Like [`run_simulation`], but stops early once `stop` is set. Replications
/// poll the flag every few hundred rounds.
pub fn run_simulation_until(config: &SimulationConfig, stop: &AtomicBool) -> Result<SimulationReport, SimError> {
    config.validate()?;
    let streams: Vec<u64> = (1..=config.n_stakers as u64).collect();
    let results: Vec<Result<ReplicationResult, SimError>> = (0..config.replications)
        .into_par_iter()
        .map(|r| {
            if stop.load(Ordering::Relaxed) {
                return Err(SimError::Interrupted);
            }
            replicate(config, r, &streams, Some(stop))
        })
        .collect();
    let mut replications = Vec::with_capacity(results.len());
    let mut interrupted = false;
    for r in results {
        match r {
            Ok(rep) if !interrupted => replications.push(rep),
            Ok(_) => {}
            Err(SimError::Interrupted) => interrupted = true,
            Err(e) => return Err(e),
        }
    }
    Ok(SimulationReport { config: config.clone(), replications, interrupted })
}

pub fn median(mut xs: Vec<f64>) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    Some(if xs.len() % 2 == 1 { xs[m] } else { (xs[m - 1] + xs[m]) / 2.0 })
}

/// Percentile bootstrap interval for `statistic` at confidence `level`.
pub fn bootstrap_ci(
    xs: &[f64],
    statistic: impl Fn(&[f64]) -> f64,
    resamples: usize,
    level: f64,
    seed: u64,
) -> Option<(f64, f64)> {
    if xs.is_empty() || resamples == 0 || !(0.0..1.0).contains(&level) {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buf = vec![0.0; xs.len()];
    let mut stats: Vec<f64> = (0..resamples)
        .map(|_| {
            for b in buf.iter_mut() {
                *b = xs[rng.random_range(0..xs.len())];
            }
            statistic(&buf)
        })
        .collect();
    stats.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    let idx = |q: f64| ((q * (resamples - 1) as f64).round() as usize).min(resamples - 1);
    Some((stats[idx(tail)], stats[idx(1.0 - tail)]))
}

/// Mean over standard deviation (sample, `n - 1`), per observation.
pub fn sharpe(returns: &[f64]) -> Result<f64, SimError> {
    let mut m = Moments::default();
    m.merge_batch(returns);
    m.sharpe().ok_or(SimError::DegenerateReturns)
}

/// `(1 - β) R / (β R + α)`, evaluated as written. Not bounded by 1.
pub fn ppv(beta: f64, alpha: f64, r: f64) -> Result<f64, SimError> {
    if beta < 0.0 || alpha < 0.0 || r < 0.0 {
        return Err(SimError::InvalidConfig("PPV inputs must be non-negative".into()));
    }
    let denom = beta * r + alpha;
    if denom == 0.0 {
        return Err(SimError::DivisionByZero);
    }
    Ok((1.0 - beta) * r / denom)
}
