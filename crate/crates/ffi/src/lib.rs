//! C interface to the pgmcts engine.
//!
//! Every fallible function returns a [`PgmctsStatus`]; on failure the message is
//! available from [`pgmcts_last_error`] on the same thread. Handles are opaque
//! and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use pgmcts::harness::{self, RunConfig, Session};
use pgmcts::hdp::{evaluate_exact, solve_optimal, TabularHdp, UniformPolicy};
use pgmcts::mixture::{self, Schedule};
use pgmcts::{numerics, Error};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PgmctsStatus {
    Ok = 0,
    InvalidArgument = 1,
    Numeric = 2,
    TooLarge = 3,
    Config = 4,
    Io = 5,
    Internal = 6,
    NullPointer = 7,
    Panic = 8,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> PgmctsStatus {
    match e {
        Error::InvalidArgument(_) | Error::NotOnTree(_) => PgmctsStatus::InvalidArgument,
        Error::NonFinite { .. } | Error::NonFiniteUpdate { .. } | Error::NonFiniteReward { .. } => {
            PgmctsStatus::Numeric
        }
        Error::TooLarge { .. } => PgmctsStatus::TooLarge,
        Error::Config { .. } | Error::Parse { .. } => PgmctsStatus::Config,
        Error::Io(_) => PgmctsStatus::Io,
        Error::Episode { source, .. } => status_of(source),
        _ => PgmctsStatus::Internal,
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (PgmctsStatus, String)>) -> PgmctsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PgmctsStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            PgmctsStatus::Panic
        }
    }
}

fn lift(e: Error) -> (PgmctsStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (PgmctsStatus, String) {
    (PgmctsStatus::NullPointer, format!("{what} is null"))
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (PgmctsStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (PgmctsStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (PgmctsStatus, String)> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn in_slice<'a>(p: *const f64, n: usize, what: &str) -> Result<&'a [f64], (PgmctsStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn out_slice<'a>(p: *mut f64, n: usize, what: &str) -> Result<&'a mut [f64], (PgmctsStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, n))
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pgmcts_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pgmcts_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// A multi-run experiment described by a configuration text.
pub struct PgmctsExperiment {
    config: RunConfig,
}

/// Parses `config_text` (`key = value` lines) into a new experiment.
///
/// # Safety
/// `config_text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pgmcts_experiment_new(
    config_text: *const c_char,
    out: *mut *mut PgmctsExperiment,
) -> PgmctsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let text = read_str(config_text, "config_text")?;
        let config = RunConfig::from_text(text).map_err(lift)?;
        *out = Box::into_raw(Box::new(PgmctsExperiment { config }));
        Ok(())
    })
}

/// Redirects the experiment's output files.
///
/// # Safety
/// `exp` must come from `pgmcts_experiment_new`; `dir` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn pgmcts_experiment_set_output(exp: *mut PgmctsExperiment, dir: *const c_char) -> PgmctsStatus {
    guard(|| {
        let exp = out_ref(exp, "experiment")?;
        exp.config.out = PathBuf::from(read_str(dir, "dir")?);
        Ok(())
    })
}

/// Runs every seed on `workers` threads and reports the final aggregate point.
///
/// # Safety
/// `exp` must come from `pgmcts_experiment_new`; outputs must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn pgmcts_experiment_run(
    exp: *mut PgmctsExperiment,
    workers: usize,
    final_mean: *mut f64,
    final_stderr: *mut f64,
) -> PgmctsStatus {
    guard(|| {
        let exp = out_ref(exp, "experiment")?;
        let mean = out_ref(final_mean, "final_mean")?;
        let se = out_ref(final_stderr, "final_stderr")?;
        let result = harness::run_experiment(&exp.config, workers).map_err(lift)?;
        let last = result
            .aggregate
            .last()
            .ok_or((PgmctsStatus::Internal, "experiment produced no evaluations".to_string()))?;
        *mean = last.mean;
        *se = last.stderr;
        Ok(())
    })
}

/// # Safety
/// `exp` must come from `pgmcts_experiment_new` or be null.
#[no_mangle]
pub unsafe extern "C" fn pgmcts_experiment_free(exp: *mut PgmctsExperiment) {
    if !exp.is_null() {
        drop(Box::from_raw(exp));
    }
}

/// A single learner trained step by step.
pub struct PgmctsAgent {
    session: Session,
}

/// Builds run `run_id` of the configuration as a trainable agent.
///
/// # Safety
/// `config_text` must be NUL-terminated and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pgmcts_agent_new(
    config_text: *const c_char,
    run_id: usize,
    out: *mut *mut PgmctsAgent,
) -> PgmctsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let config = RunConfig::from_text(read_str(config_text, "config_text")?).map_err(lift)?;
        let session = Session::new(&config, run_id).map_err(lift)?;
        *out = Box::into_raw(Box::new(PgmctsAgent { session }));
        Ok(())
    })
}

/// # Safety
/// `agent` must come from `pgmcts_agent_new`.
#[no_mangle]
pub unsafe extern "C" fn pgmcts_agent_train(agent: *mut PgmctsAgent, episodes: u64) -> PgmctsStatus {
    guard(|| out_ref(agent, "agent")?.session.train(episodes).map_err(lift))
}

/// Mean evaluation metric over `episodes` episodes without learning.
///
/// # Safety
/// `agent` must come from `pgmcts_agent_new`; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pgmcts_agent_evaluate(agent: *mut PgmctsAgent, episodes: usize, out: *mut f64) -> PgmctsStatus {
    guard(|| {
        let agent = out_ref(agent, "agent")?;
        let out = out_ref(out, "out")?;
        if episodes == 0 {
            return Err((PgmctsStatus::InvalidArgument, "episodes must be positive".into()));
        }
        *out = agent.session.evaluate(episodes).map_err(lift)?;
        Ok(())
    })
}

/// Number of training episodes so far.
///
/// # Safety
/// `agent` must come from `pgmcts_agent_new`; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pgmcts_agent_episodes(agent: *const PgmctsAgent, out: *mut u64) -> PgmctsStatus {
    guard(|| {
        let agent = agent.as_ref().ok_or_else(|| null("agent"))?;
        *out_ref(out, "out")? = agent.session.episodes();
        Ok(())
    })
}

/// # Safety
/// `agent` must come from `pgmcts_agent_new` or be null.
#[no_mangle]
pub unsafe extern "C" fn pgmcts_agent_free(agent: *mut PgmctsAgent) {
    if !agent.is_null() {
        drop(Box::from_raw(agent));
    }
}

/// Floored importance weight of a parametric-policy step.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pgmcts_importance_weight(
    pg_prob: f64,
    mix_prob: f64,
    lambda: f64,
    floor: f64,
    out: *mut f64,
) -> PgmctsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let ok = (0.0..=1.0).contains(&lambda)
            && (0.0..=1.0).contains(&pg_prob)
            && (lambda == 0.0 || (mix_prob > 0.0 && mix_prob <= 1.0))
            && floor.is_finite();
        if !ok {
            return Err((PgmctsStatus::InvalidArgument, "probabilities must lie in [0, 1] with a positive behaviour probability".into()));
        }
        *out = mixture::importance_weight(pg_prob, mix_prob, lambda, floor);
        Ok(())
    })
}

/// `(1 - lambda) pg + lambda tree`, elementwise over `n` actions.
///
/// # Safety
/// All arrays must hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn pgmcts_mixture_probs(
    pg: *const f64,
    tree: *const f64,
    n: usize,
    lambda: f64,
    out: *mut f64,
) -> PgmctsStatus {
    guard(|| {
        let pg = in_slice(pg, n, "pg")?;
        let tree = in_slice(tree, n, "tree")?;
        let out = out_slice(out, n, "out")?;
        mixture::mixture_probs(pg, tree, lambda, out).map_err(lift)
    })
}

/// Numerically stable softmax of `n` logits.
///
/// # Safety
/// Both arrays must hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn pgmcts_softmax(logits: *const f64, n: usize, out: *mut f64) -> PgmctsStatus {
    guard(|| {
        let logits = in_slice(logits, n, "logits")?;
        let out = out_slice(out, n, "out")?;
        numerics::softmax_stable(logits, out).map_err(lift)
    })
}

/// Step sizes at episode `n >= 1`. With `convergent` nonzero the parametric rate
/// is `alpha0 / (1 + c n ln(1 + n))`, otherwise the constant `alpha0`.
///
/// # Safety
/// Outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn pgmcts_schedule_rates(
    convergent: i32,
    alpha0: f64,
    c: f64,
    n: u64,
    alpha: *mut f64,
    beta: *mut f64,
) -> PgmctsStatus {
    guard(|| {
        let a = out_ref(alpha, "alpha")?;
        let b = out_ref(beta, "beta")?;
        let s = if convergent != 0 {
            Schedule::Convergent { alpha0, c }
        } else {
            Schedule::Constant { alpha: alpha0 }
        };
        (*a, *b) = s.rates(n).map_err(lift)?;
        Ok(())
    })
}

/// Exact optimal value and uniform-policy value of a tabular instance.
///
/// # Safety
/// `table_text` must be NUL-terminated; outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn pgmcts_oracle_solve(
    table_text: *const c_char,
    optimal: *mut f64,
    uniform: *mut f64,
) -> PgmctsStatus {
    guard(|| {
        let text = read_str(table_text, "table_text")?;
        let opt = out_ref(optimal, "optimal")?;
        let uni = out_ref(uniform, "uniform")?;
        let mut env = TabularHdp::from_text(text).map_err(lift)?;
        let n_actions = env.shape.n_actions;
        *opt = solve_optimal(&mut env).map_err(lift)?.0;
        *uni = evaluate_exact(&mut env, &UniformPolicy { n_actions }).map_err(lift)?;
        Ok(())
    })
}
