//! C ABI over `qnar-core`.
//!
//! Every function returns a [`QnarStatus`]; on failure the message is kept in
//! thread-local storage and read with [`qnar_last_error_message`]. Strings
//! handed out by the library must be released with [`qnar_string_free`],
//! handles with their matching `_free`. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use qnar_core::credrank::{score_all_periods, scores_to_csv, CredRankError, CredRankParams};
use qnar_core::graph::{
    build_epoch_sequence, ingest_events, parse_jsonl, ContributionEvent, ContributionGraph, EpochConfig, NodeId,
    WeightConfig,
};
use qnar_core::opr::{journal, Bid, Vote};
use qnar_core::rank::{RankError, TransitionOperator};
use qnar_core::sim::{self, InitialDistribution, SimError, SimulationConfig, REPORT_HEADER};
use qnar_core::token::TokenAmount;

/// Result of every call. Values are stable.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QnarStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    /// Malformed or invalid input (parse errors, bad parameters).
    InvalidInput = 3,
    /// Non-convergence or a degenerate numerical case.
    Numerical = 4,
    /// Auction protocol violation during replay.
    Protocol = 5,
    /// A bug inside the library; the call had no effect.
    Panic = 6,
}

/// Initial stake distribution for [`qnar_simulate`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QnarDistribution {
    /// Uniform on [0.5, 1.5].
    Uniform = 0,
    /// Pareto, shape 2 and mean 1.
    Pareto = 1,
}

/// Opaque contribution graph built from an event log.
pub struct QnarGraph {
    events: Vec<ContributionEvent>,
    weights: WeightConfig,
    graph: ContributionGraph,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(QnarStatus, String);

fn set_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, recording any failure or panic in the thread-local slot.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> QnarStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => QnarStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(&message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            QnarStatus::Panic
        }
    }
}

fn input(e: impl ToString) -> Failure {
    Failure(QnarStatus::InvalidInput, e.to_string())
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(QnarStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure(QnarStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

fn out_arg<T>(p: *mut T, name: &str) -> Result<&mut T, Failure> {
    unsafe { p.as_mut() }.ok_or_else(|| Failure(QnarStatus::NullArgument, format!("{name} is null")))
}

fn give_string(s: String, out: *mut *mut c_char) -> Result<(), Failure> {
    let slot = out_arg(out, "out")?;
    *slot = CString::new(s).map_err(input)?.into_raw();
    Ok(())
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into the library on the same thread; do not free.
#[no_mangle]
pub extern "C" fn qnar_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn qnar_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses a JSONL event log and builds its contribution graph. `weights_kv`
/// may be null for the default weights.
///
/// # Safety
/// String arguments must be null or nul-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qnar_graph_from_events(
    events_jsonl: *const c_char,
    weights_kv: *const c_char,
    out: *mut *mut QnarGraph,
) -> QnarStatus {
    guard(|| {
        let slot = out_arg(out, "out")?;
        let events = parse_jsonl(str_arg(events_jsonl, "events_jsonl")?).map_err(input)?;
        if events.is_empty() {
            return Err(input("no events"));
        }
        let weights = if weights_kv.is_null() {
            WeightConfig::default()
        } else {
            WeightConfig::from_kv_str(str_arg(weights_kv, "weights_kv")?).map_err(input)?
        };
        let graph = ingest_events(&events, &weights).map_err(input)?;
        *slot = Box::into_raw(Box::new(QnarGraph { events, weights, graph }));
        Ok(())
    })
}

/// # Safety
/// `graph` must be null or a handle from [`qnar_graph_from_events`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qnar_graph_free(graph: *mut QnarGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// # Safety
/// `graph` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qnar_graph_node_count(graph: *const QnarGraph, out: *mut usize) -> QnarStatus {
    guard(|| {
        let g = graph.as_ref().ok_or_else(|| Failure(QnarStatus::NullArgument, "graph is null".into()))?;
        *out_arg(out, "out")? = g.graph.node_count();
        Ok(())
    })
}

/// One-step transition probability between two nodes, named `kind:key`
/// (for example `courselet:CL0` and `user:alice`).
///
/// # Safety
/// `graph` must be a live handle; strings nul-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qnar_graph_transition(
    graph: *const QnarGraph,
    from: *const c_char,
    to: *const c_char,
    out: *mut f64,
) -> QnarStatus {
    guard(|| {
        let g = graph.as_ref().ok_or_else(|| Failure(QnarStatus::NullArgument, "graph is null".into()))?;
        let slot = out_arg(out, "out")?;
        let op = TransitionOperator::from_graph(&g.graph);
        let find = |s: &str| -> Result<usize, Failure> {
            let id: NodeId = s.parse().map_err(input)?;
            op.index_of(&id).ok_or_else(|| input(format!("no node {s}")))
        };
        *slot = op.prob(find(str_arg(from, "from")?)?, find(str_arg(to, "to")?)?);
        Ok(())
    })
}

/// Scores the graph's events over `count` periods of `period` seconds from the
/// first event (`count = 0` covers every event) with default scoring
/// parameters, and returns the `period,node_id,s_star,s_normalized` CSV.
///
/// # Safety
/// `graph` must be a live handle; `out_csv` writable.
#[no_mangle]
pub unsafe extern "C" fn qnar_score(
    graph: *const QnarGraph,
    period: i64,
    count: u32,
    out_csv: *mut *mut c_char,
) -> QnarStatus {
    guard(|| {
        let g = graph.as_ref().ok_or_else(|| Failure(QnarStatus::NullArgument, "graph is null".into()))?;
        let origin = g.events.iter().map(|e| e.ts).min().expect("non-empty");
        let epochs = if count == 0 {
            EpochConfig::covering(&g.events, origin, period)
        } else {
            EpochConfig::new(origin, period, count)
        }
        .map_err(input)?;
        let seq = build_epoch_sequence(&g.events, &epochs, &g.weights).map_err(input)?;
        let (_, scores) = score_all_periods(&seq, &g.weights, &CredRankParams::default()).map_err(|e| match &e {
            CredRankError::Rank { source: RankError::NoConvergence { .. }, .. } | CredRankError::ZeroTotalScore(_) => {
                Failure(QnarStatus::Numerical, e.to_string())
            }
            _ => input(e),
        })?;
        give_string(scores_to_csv(&scores), out_csv)
    })
}

/// Runs the staker simulation with otherwise default settings (endogenous
/// outcome, Bernoulli(0.5) votes, 1 token inflation per participant) and
/// returns the report CSV with its header.
///
/// # Safety
/// `out_csv` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qnar_simulate(
    n_stakers: usize,
    n_rounds: u32,
    replications: u32,
    seed: u64,
    distribution: QnarDistribution,
    bid_fraction: f64,
    out_csv: *mut *mut c_char,
) -> QnarStatus {
    guard(|| {
        let config = SimulationConfig {
            n_stakers,
            n_rounds,
            replications,
            seed,
            bid_fraction,
            distribution: match distribution {
                QnarDistribution::Uniform => InitialDistribution::UNIFORM,
                QnarDistribution::Pareto => InitialDistribution::PARETO,
            },
            ..SimulationConfig::default()
        };
        let report = sim::run_simulation(&config).map_err(|e| match e {
            SimError::InvalidConfig(_) | SimError::InvalidDistributionParams(_) => input(e),
            _ => Failure(QnarStatus::Numerical, e.to_string()),
        })?;
        give_string(format!("{REPORT_HEADER}\n{}", report.csv_rows()), out_csv)
    })
}

/// Replays an auction journal and returns the printed settlement report.
///
/// # Safety
/// `journal_jsonl` nul-terminated; `out_report` writable.
#[no_mangle]
pub unsafe extern "C" fn qnar_auction_replay(journal_jsonl: *const c_char, out_report: *mut *mut c_char) -> QnarStatus {
    guard(|| {
        let lines = journal::parse_journal(str_arg(journal_jsonl, "journal_jsonl")?).map_err(input)?;
        let report = journal::replay(&lines).map_err(|e| Failure(QnarStatus::Protocol, e.to_string()))?;
        give_string(report.render(), out_report)
    })
}

/// Sealed-bid commitment digest. `vote` is 1 for accept, -1 for deny;
/// `amount` is in subunits (1e-9 token).
///
/// # Safety
/// `staker` nul-terminated; `nonce` 32 readable bytes; `out` 32 writable bytes.
#[no_mangle]
pub unsafe extern "C" fn qnar_commitment_digest(
    staker: *const c_char,
    amount: u64,
    vote: i32,
    nonce: *const u8,
    out: *mut u8,
) -> QnarStatus {
    guard(|| {
        let staker = str_arg(staker, "staker")?;
        if nonce.is_null() || out.is_null() {
            return Err(Failure(QnarStatus::NullArgument, "nonce and out must be non-null".into()));
        }
        let vote = match vote {
            1 => Vote::Accept,
            -1 => Vote::Deny,
            v => return Err(input(format!("vote must be 1 or -1, got {v}"))),
        };
        let mut n = [0u8; 32];
        n.copy_from_slice(std::slice::from_raw_parts(nonce, 32));
        let amount = TokenAmount::from_subunits(u128::from(amount)).map_err(input)?;
        let digest = Bid::new(staker, amount, vote, n).commitment();
        std::slice::from_raw_parts_mut(out, 32).copy_from_slice(&digest.0);
        Ok(())
    })
}

/// `(1 - beta) R / (beta R + alpha)`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qnar_ppv(beta: f64, alpha: f64, r: f64, out: *mut f64) -> QnarStatus {
    guard(|| {
        let slot = out_arg(out, "out")?;
        *slot = sim::ppv(beta, alpha, r).map_err(|e| Failure(QnarStatus::Numerical, e.to_string()))?;
        Ok(())
    })
}

/// Per-observation Sharpe ratio (mean over sample standard deviation).
///
/// # Safety
/// `returns` must point at `len` readable doubles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qnar_sharpe(returns: *const f64, len: usize, out: *mut f64) -> QnarStatus {
    guard(|| {
        let slot = out_arg(out, "out")?;
        if returns.is_null() && len > 0 {
            return Err(Failure(QnarStatus::NullArgument, "returns is null".into()));
        }
        let xs = if len == 0 { &[][..] } else { std::slice::from_raw_parts(returns, len) };
        *slot = sim::sharpe(xs).map_err(|e| Failure(QnarStatus::Numerical, e.to_string()))?;
        Ok(())
    })
}
