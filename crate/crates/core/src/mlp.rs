//! Full-history recursive multilevel Picard (MLP) estimator.
//!
//! For depth `n ≥ 1` and base `M`, the estimator at stream key `θ` is
//!
//! ```text
//! U_{n,M}^θ(t, x) = Σ_{k=1}^{n-1} t/M^{n-k} Σ_{m=1}^{M^{n-k}} [ f(U_{k,M}^{(θ,k,m)}(tR, X)) − f(U_{k-1,M}^{(θ,-k,m)}(tR, X)) ]
//!                 + 1/M^n Σ_{m=1}^{M^n} [ g(X_{0,t,x}^{(θ,0,-m)}) + t f(0) ]
//! ```
//!
//! with `R = R^{(θ,k,m)}` uniform on `[0, 1]`, `X = X_{tR,t,x}^{(θ,k,m)}`, and
//! `U_0 = 0`. Within a level summand the same `R` and `X` feed both nested
//! estimators; their keys are `(θ,k,m)` and `(θ,−k,m)`.
//!
//! Key layout: the level summand `(k, m)` draws `R` from slot 0 and the
//! Gaussian increment from slot 1 of key `(θ,k,m)`; terminal summand `m`
//! draws its Gaussian from slot 1 of key `(θ,0,−m)`.

use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::model::{CostLedger, SemilinearProblem};
use crate::parallel::{ordered_map, RunningMean};
use crate::rng::StreamKey;

pub const DEFAULT_DEPTH_GUARD: u32 = 10;

/// Picard depth `n` and Monte Carlo base `M`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MlpLevel {
    pub n: u32,
    pub m: u32,
}

impl MlpLevel {
    pub fn new(n: u32, m: u32) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("M", "Monte Carlo base must satisfy M >= 1"));
        }
        Ok(Self { n, m })
    }

    /// The diagonal schedule `n = M = k`.
    pub fn diagonal(k: u32) -> Result<Self> {
        Self::new(k, k)
    }

    fn samples(&self, exponent: u32) -> Result<u64> {
        (self.m as u64).checked_pow(exponent).ok_or_else(|| Error::Overflow {
            context: format!("computing M^{exponent} for M = {}", self.m),
        })
    }
}

impl std::fmt::Display for MlpLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "n={} M={}", self.n, self.m)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MlpOptions {
    /// Largest admissible `n`.
    pub depth_guard: u32,
    /// Evaluate `f(0)` once per estimator call instead of once per terminal
    /// summand. Changes the ledger, so it must stay off when checking the
    /// cost model.
    pub hoist_f_zero: bool,
}

impl Default for MlpOptions {
    fn default() -> Self {
        Self {
            depth_guard: DEFAULT_DEPTH_GUARD,
            hoist_f_zero: false,
        }
    }
}

/// Output of one solver run.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimateRecord {
    pub value: f64,
    pub level: MlpLevel,
    pub ledger: CostLedger,
    pub wall_time: Duration,
    pub root_seed: u64,
    pub key_path: Vec<i64>,
    pub problem_id: String,
    pub t: f64,
    pub x: Vec<f64>,
    pub threads: usize,
    pub caveats: Vec<&'static str>,
}

/// MLP estimator bound to one problem.
#[derive(Clone, Copy, Debug)]
pub struct MlpSolver<'a> {
    problem: &'a SemilinearProblem,
    options: MlpOptions,
}

impl<'a> MlpSolver<'a> {
    pub fn new(problem: &'a SemilinearProblem) -> Self {
        Self {
            problem,
            options: MlpOptions::default(),
        }
    }

    pub fn with_options(mut self, options: MlpOptions) -> Self {
        self.options = options;
        self
    }

    pub fn problem(&self) -> &SemilinearProblem {
        self.problem
    }

    fn validate(&self, t: f64, x: &[f64], level: MlpLevel) -> Result<()> {
        let horizon = self.problem.horizon();
        if !(t >= 0.0 && t <= horizon) {
            return Err(Error::TimeOutOfRange { t, horizon });
        }
        if x.len() != self.problem.dimension() {
            return Err(Error::invalid(
                "x",
                format!("point has dimension {} but d = {}", x.len(), self.problem.dimension()),
            ));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite("evaluation point"));
        }
        if level.m == 0 {
            return Err(Error::invalid("M", "Monte Carlo base must satisfy M >= 1"));
        }
        if level.n > self.options.depth_guard {
            return Err(Error::DepthGuard {
                n: level.n,
                guard: self.options.depth_guard,
            });
        }
        level.samples(level.n)?;
        Ok(())
    }

    /// One realisation of `U_{n,M}^θ(t, x)`, single-threaded.
    pub fn estimate(&self, t: f64, x: &[f64], level: MlpLevel, key: &StreamKey, ledger: &mut CostLedger) -> Result<f64> {
        self.validate(t, x, level)?;
        self.recurse(level.n, level.m, t, x, key, ledger, false)
    }

    /// Same value as [`estimate`](Self::estimate), with the outer summands
    /// spread over `threads` workers.
    pub fn estimate_parallel(&self, t: f64, x: &[f64], level: MlpLevel, key: &StreamKey, threads: usize) -> Result<EstimateRecord> {
        if threads == 0 {
            return Err(Error::invalid("threads", "need at least one thread"));
        }
        self.validate(t, x, level)?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::invalid("threads", e.to_string()))?;
        let start = Instant::now();
        let mut ledger = CostLedger::ZERO;
        let value = pool.install(|| self.recurse(level.n, level.m, t, x, key, &mut ledger, true))?;
        Ok(EstimateRecord {
            value,
            level,
            ledger,
            wall_time: start.elapsed(),
            root_seed: key.root_seed(),
            key_path: key.path().to_vec(),
            problem_id: self.problem.id().to_string(),
            t,
            x: x.to_vec(),
            threads,
            caveats: self.problem.theorem_caveats(),
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn recurse(&self, n: u32, m: u32, t: f64, x: &[f64], key: &StreamKey, ledger: &mut CostLedger, parallel: bool) -> Result<f64> {
        if n == 0 {
            return Ok(0.0);
        }
        let problem = self.problem;
        let diffusion = problem.diffusion();
        let d = x.len();
        let mut total = 0.0;

        for k in 1..n {
            let count = (m as u64).pow(n - k);
            let pos = key.derive(k as i64);
            let neg = key.derive(-(k as i64));
            let mut mean = RunningMean::default();
            let summand = |idx: u64, l: &mut CostLedger| -> Result<f64> {
                let index = idx as i64 + 1;
                let inner = pos.derive(index);
                let inner_neg = neg.derive(index);
                let r = inner.uniform01(0, l);
                let s = t * r;
                let mut z = vec![0.0; d];
                inner.fill_gaussian(1, &mut z, l);
                let mut y = vec![0.0; d];
                diffusion.transition_into(t - s, x, &z, &mut y);
                let upper = self.recurse(k, m, s, &y, &inner, l, false)?;
                let lower = self.recurse(k - 1, m, s, &y, &inner_neg, l, false)?;
                Ok(problem.evaluate_f(upper, l)? - problem.evaluate_f(lower, l)?)
            };
            *ledger += ordered_map(count, parallel, summand, |v| mean.push(v))?;
            total += t * mean.value();
        }

        let hoisted = if self.options.hoist_f_zero {
            Some(problem.evaluate_f(0.0, ledger)?)
        } else {
            None
        };
        let terminal_key = key.derive(0);
        let mut mean = RunningMean::default();
        let summand = |idx: u64, l: &mut CostLedger| -> Result<f64> {
            let inner = terminal_key.derive(-(idx as i64) - 1);
            let mut z = vec![0.0; d];
            inner.fill_gaussian(1, &mut z, l);
            let mut y = vec![0.0; d];
            diffusion.transition_into(t, x, &z, &mut y);
            let g = problem.evaluate_g(&y, l)?;
            let f0 = match hoisted {
                Some(v) => v,
                None => problem.evaluate_f(0.0, l)?,
            };
            Ok(g + t * f0)
        };
        *ledger += ordered_map((m as u64).pow(n), parallel, summand, |v| mean.push(v))?;
        total += mean.value();

        if !total.is_finite() {
            return Err(Error::non_finite(format!(
                "MLP estimate at depth {n} (f may have left its working interval)"
            )));
        }
        Ok(total)
    }
}

/// One realisation of the MLP estimator; see [`MlpSolver::estimate`].
pub fn mlp_estimate(
    problem: &SemilinearProblem,
    t: f64,
    x: &[f64],
    level: MlpLevel,
    key: &StreamKey,
    ledger: &mut CostLedger,
) -> Result<f64> {
    MlpSolver::new(problem).estimate(t, x, level, key, ledger)
}

pub fn mlp_estimate_parallel(
    problem: &SemilinearProblem,
    t: f64,
    x: &[f64],
    level: MlpLevel,
    key: &StreamKey,
    threads: usize,
) -> Result<EstimateRecord> {
    MlpSolver::new(problem).estimate_parallel(t, x, level, key, threads)
}

/// Exact work of one realisation, from the structure of the recursion:
///
/// ```text
/// f(n) = Mⁿ + Σ_{k=1}^{n-1} M^{n-k} (2 + f(k) + f(k-1))
/// g(n) = Mⁿ + Σ_{k=1}^{n-1} M^{n-k} (g(k) + g(k-1))
/// r(n) = Mⁿ d + Σ_{k=1}^{n-1} M^{n-k} (d + 1 + r(k) + r(k-1))
/// ```
pub fn predict_cost(level: MlpLevel, d: usize) -> Result<CostLedger> {
    if level.m == 0 {
        return Err(Error::invalid("M", "Monte Carlo base must satisfy M >= 1"));
    }
    let overflow = || Error::Overflow {
        context: format!("predicting cost for {level}, d = {d}"),
    };
    let add = |a: u64, b: u64| a.checked_add(b).ok_or_else(overflow);
    let mul = |a: u64, b: u64| a.checked_mul(b).ok_or_else(overflow);
    let d = d as u64;

    let mut table = vec![CostLedger::ZERO];
    for n in 1..=level.n {
        let top = level.samples(n)?;
        let mut cost = CostLedger::new(top, top, mul(top, d)?);
        for k in 1..n {
            let count = level.samples(n - k)?;
            let (hi, lo) = (table[k as usize], table[k as usize - 1]);
            cost.f_evals = add(cost.f_evals, mul(count, add(2, add(hi.f_evals, lo.f_evals)?)?)?)?;
            cost.g_evals = add(cost.g_evals, mul(count, add(hi.g_evals, lo.g_evals)?)?)?;
            let draws = add(add(d, 1)?, add(hi.scalar_draws, lo.scalar_draws)?)?;
            cost.scalar_draws = add(cost.scalar_draws, mul(count, draws)?)?;
        }
        table.push(cost);
    }
    Ok(table[level.n as usize])
}

/// Diagonal schedule `n = M = ⌈ln(1/ε)⌉ + 1`. A heuristic: the complexity
/// theorem only asserts that some schedule exists.
pub fn theorem_schedule(epsilon: f64) -> Result<MlpLevel> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::invalid("epsilon", "need epsilon in (0, 1]"));
    }
    let k = (1.0 / epsilon).ln().ceil() as u32 + 1;
    MlpLevel::diagonal(k)
}
