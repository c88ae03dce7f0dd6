//! Convergence studies: RMSE over seeds per level, empirical error-vs-cost
//! exponent, and the measured-vs-predicted cost check.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mlp::{mlp_estimate, predict_cost, MlpLevel};
use crate::model::{CostLedger, InitialValue, SemilinearProblem};
use crate::oracles::{feynman_kac, ode_picard_oracle, quadrature_fixed_point_1d, QuadratureGrid, QuadratureOptions};
use crate::rng::StreamKey;

pub const ROWS_HEADER: [&str; 14] = [
    "problem",
    "d",
    "T",
    "t",
    "n",
    "M",
    "seed",
    "estimate",
    "reference",
    "abs_error",
    "f_evals",
    "g_evals",
    "scalar_draws",
    "wall_ms",
];

pub const SUMMARY_HEADER: [&str; 5] = ["n", "M", "rmse", "mean_cost_total", "slope_fit_running"];

/// Where the reference value of a study comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum Reference {
    /// A known value, e.g. a closed form.
    Exact(f64),
    /// Converged 1-d quadrature fixed point.
    Quadrature(QuadratureOptions),
    /// Converged deterministic Picard iteration; needs a constant `g`.
    OdePicard,
    /// Linear Monte Carlo with the given sample count; needs `f ≡ 0`.
    FeynmanKac { samples: u64 },
    /// Mean over the study's seed count of MLP runs at `n = M = k` on
    /// independent keys. Self-referential.
    SelfLevel(u32),
}

impl Reference {
    pub fn default_quadrature() -> QuadratureOptions {
        QuadratureOptions::new(
            QuadratureGrid {
                time_steps: 60,
                space_points: 321,
                space_radius: 8.0,
            },
            200,
        )
    }

    /// Parses `exact:<v>`, `quadrature`, `ode`, `feynman-kac[:<samples>]`
    /// or `self:n=M=<k>`.
    pub fn parse(spec: &str) -> Result<Self> {
        let bad = || Error::Config {
            key: "reference".into(),
            reason: format!("cannot parse `{spec}`"),
        };
        let spec = spec.trim();
        if let Some(v) = spec.strip_prefix("exact:") {
            return v.parse().map(Reference::Exact).map_err(|_| bad());
        }
        if let Some(k) = spec.strip_prefix("self:n=M=") {
            return k.parse().map(Reference::SelfLevel).map_err(|_| bad());
        }
        if let Some(s) = spec.strip_prefix("feynman-kac:") {
            return s.parse().map(|samples| Reference::FeynmanKac { samples }).map_err(|_| bad());
        }
        match spec {
            "quadrature" => Ok(Reference::Quadrature(Self::default_quadrature())),
            "ode" => Ok(Reference::OdePicard),
            "feynman-kac" => Ok(Reference::FeynmanKac { samples: 1_000_000 }),
            _ => Err(bad()),
        }
    }

    pub fn is_self_referential(&self) -> bool {
        matches!(self, Reference::SelfLevel(_))
    }
}

impl fmt::Display for Reference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Reference::Exact(v) => write!(f, "exact:{v}"),
            Reference::Quadrature(o) => write!(
                f,
                "quadrature(time_steps={},space_points={},space_radius={})",
                o.grid.time_steps, o.grid.space_points, o.grid.space_radius
            ),
            Reference::OdePicard => write!(f, "ode"),
            Reference::FeynmanKac { samples } => write!(f, "feynman-kac:{samples}"),
            Reference::SelfLevel(k) => write!(f, "self:n=M={k}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyConfig {
    pub problem: SemilinearProblem,
    pub t: f64,
    pub x: Vec<f64>,
    pub levels: Vec<MlpLevel>,
    pub seeds: u32,
    pub root_seed: u64,
    pub reference: Reference,
    pub threads: usize,
}

impl StudyConfig {
    /// Diagonal levels `n = M ∈ {1, …, 5}`, 20 seeds, evaluated at `(T, 0)`.
    pub fn new(problem: SemilinearProblem, reference: Reference) -> Self {
        let d = problem.dimension();
        let t = problem.horizon();
        Self {
            problem,
            t,
            x: vec![0.0; d],
            levels: (1..=5).map(|k| MlpLevel { n: k, m: k }).collect(),
            seeds: 20,
            root_seed: 0,
            reference,
            threads: default_threads(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(Error::invalid("levels", "need at least one level"));
        }
        if self.seeds < 2 {
            return Err(Error::invalid("seeds", "need at least 2 seeds"));
        }
        if self.threads == 0 {
            return Err(Error::invalid("threads", "need at least one thread"));
        }
        Ok(())
    }
}

pub fn default_threads() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyRow {
    pub level: MlpLevel,
    pub seed: u32,
    pub estimate: f64,
    pub reference: f64,
    pub abs_error: f64,
    pub ledger: CostLedger,
    pub wall_time: Duration,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LevelSummary {
    pub level: MlpLevel,
    pub rmse: f64,
    pub mean_cost_total: f64,
    pub mean_wall_time: Duration,
    /// Slope of the rate fit over this and all earlier levels, once three
    /// points with positive RMSE are available.
    pub slope_fit_running: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyResult {
    pub reference_value: f64,
    pub self_referential: bool,
    pub rows: Vec<StudyRow>,
    pub summary: Vec<LevelSummary>,
}

impl StudyResult {
    /// `(mean cost, RMSE)` pairs for [`fit_rate`].
    pub fn cost_error_points(&self) -> Vec<(f64, f64)> {
        self.summary.iter().map(|s| (s.mean_cost_total, s.rmse)).collect()
    }
}

/// Evaluates the configured reference at `(config.t, config.x)`.
pub fn reference_value(config: &StudyConfig) -> Result<f64> {
    let problem = &config.problem;
    let wrap = |e: Error| Error::Reference(e.to_string());
    match &config.reference {
        Reference::Exact(v) => Ok(*v),
        Reference::Quadrature(options) => {
            if config.t != problem.horizon() {
                return Err(Error::Reference("quadrature reference is evaluated at t = T".into()));
            }
            let sol = quadrature_fixed_point_1d(problem, options).map_err(wrap)?;
            Ok(sol.final_value(config.x[0]))
        }
        Reference::OdePicard => {
            let InitialValue::Constant(g0) = problem.initial_value() else {
                return Err(Error::Reference("ode reference needs a constant initial value".into()));
            };
            let f = problem.nonlinearity();
            let eval = |u: f64| f.eval(u);
            let mut depth = 8;
            let mut value = ode_picard_oracle(&eval, *g0, config.t, depth).map_err(wrap)?;
            loop {
                depth *= 2;
                let next = ode_picard_oracle(&eval, *g0, config.t, depth).map_err(wrap)?;
                if (next - value).abs() <= 1e-12 * next.abs().max(1.0) {
                    return Ok(next);
                }
                if depth >= 512 {
                    return Err(Error::Reference(format!("Picard iteration unconverged at depth {depth}")));
                }
                value = next;
            }
        }
        Reference::FeynmanKac { samples } => {
            let key = StreamKey::new(config.root_seed).derive(i64::MIN);
            let mut ledger = CostLedger::ZERO;
            let est = feynman_kac(problem, config.t, &config.x, *samples, &key, &mut ledger).map_err(wrap)?;
            Ok(est.mean)
        }
        Reference::SelfLevel(k) => {
            let level = MlpLevel::diagonal(*k)?;
            let root = StreamKey::new(config.root_seed);
            let pool = pool(config.threads)?;
            let values: Vec<Result<f64>> = pool.install(|| {
                (0..config.seeds)
                    .into_par_iter()
                    .map(|s| {
                        let mut l = CostLedger::ZERO;
                        mlp_estimate(problem, config.t, &config.x, level, &root.derive(-(s as i64) - 1), &mut l)
                    })
                    .collect()
            });
            let mut sum = 0.0;
            for v in values {
                sum += v.map_err(wrap)?;
            }
            Ok(sum / config.seeds as f64)
        }
    }
}

fn pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::invalid("threads", e.to_string()))
}

/// Runs every `(level, seed)` cell and summarises per level. Seed `s` uses
/// stream key `(s)` below the root seed, shared across levels.
pub fn run_study(config: &StudyConfig) -> Result<StudyResult> {
    config.validate()?;
    let reference = reference_value(config)?;
    let root = StreamKey::new(config.root_seed);
    let cells: Vec<(MlpLevel, u32)> = config
        .levels
        .iter()
        .flat_map(|&level| (0..config.seeds).map(move |s| (level, s)))
        .collect();
    let pool = pool(config.threads)?;
    let results: Vec<Result<StudyRow>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(level, seed)| {
                let mut ledger = CostLedger::ZERO;
                let start = Instant::now();
                let estimate = mlp_estimate(&config.problem, config.t, &config.x, level, &root.derive(seed as i64), &mut ledger)?;
                Ok(StudyRow {
                    level,
                    seed,
                    estimate,
                    reference,
                    abs_error: (estimate - reference).abs(),
                    ledger,
                    wall_time: start.elapsed(),
                })
            })
            .collect()
    });
    let rows = results.into_iter().collect::<Result<Vec<_>>>()?;
    let summary = summarize(&config.levels, &rows);
    Ok(StudyResult {
        reference_value: reference,
        self_referential: config.reference.is_self_referential(),
        rows,
        summary,
    })
}

/// Per-level RMSE, mean cost and mean wall time, in `levels` order.
pub fn summarize(levels: &[MlpLevel], rows: &[StudyRow]) -> Vec<LevelSummary> {
    let mut summary: Vec<LevelSummary> = Vec::with_capacity(levels.len());
    let mut points = Vec::new();
    for &level in levels {
        let cell: Vec<&StudyRow> = rows.iter().filter(|r| r.level == level).collect();
        let count = cell.len().max(1) as f64;
        let rmse = (cell.iter().map(|r| r.abs_error * r.abs_error).sum::<f64>() / count).sqrt();
        let mean_cost_total = cell.iter().map(|r| r.ledger.total() as f64).sum::<f64>() / count;
        let wall: Duration = cell.iter().map(|r| r.wall_time).sum();
        if rmse > 0.0 && mean_cost_total > 0.0 {
            points.push((mean_cost_total, rmse));
        }
        let slope_fit_running = fit_rate(&points).ok().map(|f| f.slope);
        summary.push(LevelSummary {
            level,
            rmse,
            mean_cost_total,
            mean_wall_time: wall.div_f64(count),
            slope_fit_running,
        });
    }
    summary
}

/// Least-squares line through `(log cost, log rmse)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn fit_rate(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 3 {
        return Err(Error::invalid("points", format!("need at least 3 points, got {}", points.len())));
    }
    if points.iter().any(|&(c, e)| !(c > 0.0 && e > 0.0 && c.is_finite() && e.is_finite())) {
        return Err(Error::invalid("points", "cost and rmse must be positive and finite"));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(c, e)| (c.ln(), e.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = logs.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("points", "all costs are equal"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = logs.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    Ok(RateFit {
        slope,
        intercept,
        r_squared,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CostCheck {
    pub level: MlpLevel,
    pub d: usize,
    pub measured: CostLedger,
    pub predicted: Option<CostLedger>,
    pub error: Option<String>,
}

impl CostCheck {
    pub fn pass(&self) -> bool {
        self.error.is_none() && self.predicted == Some(self.measured)
    }
}

impl fmt::Display for CostCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n={} M={} d={} measured={}", self.level.n, self.level.m, self.d, self.measured)?;
        match self.predicted {
            Some(p) => write!(f, " predicted={p}")?,
            None => write!(f, " predicted=unavailable")?,
        }
        write!(f, " {}", if self.pass() { "PASS" } else { "FAIL" })?;
        if let Some(e) = &self.error {
            write!(f, " ({e})")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CostReport {
    pub checks: Vec<CostCheck>,
}

impl CostReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(CostCheck::pass)
    }
}

impl fmt::Display for CostReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        write!(f, "overall {}", if self.pass() { "PASS" } else { "FAIL" })
    }
}

/// Runs one instrumented estimate per level and compares the ledger with
/// [`predict_cost`]. Failures become report entries.
pub fn verify_cost_model(problem: &SemilinearProblem, levels: &[MlpLevel], root_seed: u64) -> CostReport {
    let d = problem.dimension();
    let x = vec![0.0; d];
    let key = StreamKey::new(root_seed);
    let checks = levels
        .iter()
        .map(|&level| {
            let mut measured = CostLedger::ZERO;
            let run = mlp_estimate(problem, problem.horizon(), &x, level, &key, &mut measured);
            let predicted = predict_cost(level, d);
            let error = match (&run, &predicted) {
                (Err(e), _) | (_, Err(e)) => Some(e.to_string()),
                _ => None,
            };
            CostCheck {
                level,
                d,
                measured,
                predicted: predicted.ok(),
                error,
            }
        })
        .collect();
    CostReport { checks }
}

/// Identifier of this build, echoed into output metadata.
pub fn build_id() -> String {
    let profile = if cfg!(debug_assertions) { "debug" } else { "release" };
    format!("{} {} ({profile})", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"))
}

fn write_metadata(out: &mut impl Write, metadata: &[(String, String)]) -> Result<()> {
    writeln!(out, "# build={}", build_id())?;
    for (k, v) in metadata {
        writeln!(out, "# {k}={v}")?;
    }
    Ok(())
}

fn format_x(v: f64) -> String {
    format!("{v}")
}

/// Writes one line per [`StudyRow`], preceded by `#` metadata lines.
pub fn write_rows_csv(path: &Path, config: &StudyConfig, result: &StudyResult, metadata: &[(String, String)]) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_metadata(&mut file, metadata)?;
    writeln!(
        file,
        "# reference_value={} self_referential={}",
        result.reference_value, result.self_referential
    )?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(ROWS_HEADER)?;
    let p = &config.problem;
    for r in &result.rows {
        w.write_record([
            p.id().to_string(),
            p.dimension().to_string(),
            format_x(p.horizon()),
            format_x(config.t),
            r.level.n.to_string(),
            r.level.m.to_string(),
            r.seed.to_string(),
            format_x(r.estimate),
            format_x(r.reference),
            format_x(r.abs_error),
            r.ledger.f_evals.to_string(),
            r.ledger.g_evals.to_string(),
            r.ledger.scalar_draws.to_string(),
            format_x(r.wall_time.as_secs_f64() * 1e3),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_csv(path: &Path, result: &StudyResult, metadata: &[(String, String)]) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_metadata(&mut file, metadata)?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(SUMMARY_HEADER)?;
    for s in &result.summary {
        w.write_record([
            s.level.n.to_string(),
            s.level.m.to_string(),
            format_x(s.rmse),
            format_x(s.mean_cost_total),
            s.slope_fit_running.map(format_x).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `(mean_cost_total, rmse)` pairs back from a summary CSV.
pub fn read_summary_csv(path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let headers = reader.headers()?.clone();
    let column = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Config {
            key: "input".into(),
            reason: format!("summary CSV has no `{name}` column"),
        })
    };
    let (rmse_col, cost_col) = (column("rmse")?, column("mean_cost_total")?);
    let mut points = Vec::new();
    for record in reader.records() {
        let record = record?;
        let parse = |i: usize| -> Result<f64> {
            record[i].trim().parse().map_err(|_| Error::Config {
                key: "input".into(),
                reason: format!("bad number `{}`", &record[i]),
            })
        };
        points.push((parse(cost_col)?, parse(rmse_col)?));
    }
    Ok(points)
}
