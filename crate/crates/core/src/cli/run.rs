use std::io::Write;

use crate::bench::{fit_rate, read_summary_csv, run_study, verify_cost_model, write_rows_csv, write_summary_csv, StudyConfig};
use crate::error::{Error, Result};
use crate::mlp::{MlpOptions, MlpSolver};
use crate::model::{CostLedger, InitialValue};
use crate::oracles::{cole_hopf_hjb, feynman_kac, hopf_hj, ode_picard_oracle, quadrature_fixed_point_1d, ConvexTerm, HopfOptions};
use crate::rng::StreamKey;

use super::config::{CliConfig, OracleKind, Subcommand};

/// Executes a validated command. Data goes to `out`, warnings to `err`.
/// Returns the process exit status.
pub fn run(config: &CliConfig, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    match config.command {
        Subcommand::Solve => solve(config, out, err),
        Subcommand::Study => study(config, out, err),
        Subcommand::Rate => rate(config, out),
        Subcommand::VerifyCost => verify_cost(config, out),
        Subcommand::Oracle => oracle(config, out),
    }
}

fn echo(config: &CliConfig, out: &mut dyn Write) -> Result<()> {
    writeln!(out, "# build={}", crate::bench::build_id())?;
    for (k, v) in &config.effective {
        writeln!(out, "# {k}={v}")?;
    }
    Ok(())
}

fn ledger_line(out: &mut dyn Write, ledger: &CostLedger) -> Result<()> {
    writeln!(
        out,
        "ledger f_evals={} g_evals={} scalar_draws={} total={}",
        ledger.f_evals,
        ledger.g_evals,
        ledger.scalar_draws,
        ledger.total()
    )?;
    Ok(())
}

fn warn_caveats(config: &CliConfig, err: &mut dyn Write) -> Result<()> {
    for caveat in config.problem.theorem_caveats() {
        writeln!(err, "warning: {caveat}")?;
    }
    Ok(())
}

fn solve(config: &CliConfig, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let options = MlpOptions {
        depth_guard: config.depth_guard,
        ..MlpOptions::default()
    };
    let solver = MlpSolver::new(&config.problem).with_options(options);
    let key = StreamKey::new(config.root_seed);
    let record = solver.estimate_parallel(config.t, &config.x, config.levels[0], &key, config.threads)?;
    warn_caveats(config, err)?;
    echo(config, out)?;
    writeln!(out, "estimate={}", record.value)?;
    writeln!(out, "level={}", record.level)?;
    ledger_line(out, &record.ledger)?;
    writeln!(out, "wall_ms={:.3}", record.wall_time.as_secs_f64() * 1e3)?;
    Ok(0)
}

fn study(config: &CliConfig, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let dir = config.output.as_ref().expect("validated");
    let study = StudyConfig {
        problem: config.problem.clone(),
        t: config.t,
        x: config.x.clone(),
        levels: config.levels.clone(),
        seeds: config.seeds,
        root_seed: config.root_seed,
        reference: config.reference.clone(),
        threads: config.threads,
    };
    let result = run_study(&study)?;
    warn_caveats(config, err)?;
    if result.self_referential {
        writeln!(
            err,
            "warning: reference is self-referential; errors are relative to a deeper MLP run"
        )?;
    }
    std::fs::create_dir_all(dir)?;
    let rows = dir.join("rows.csv");
    let summary = dir.join("summary.csv");
    write_rows_csv(&rows, &study, &result, &config.effective)?;
    write_summary_csv(&summary, &result, &config.effective)?;
    echo(config, out)?;
    writeln!(out, "reference={}", result.reference_value)?;
    writeln!(out, "{:>4} {:>4} {:>14} {:>16} {:>10}", "n", "M", "rmse", "mean_cost", "slope")?;
    for s in &result.summary {
        let slope = s.slope_fit_running.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
        writeln!(
            out,
            "{:>4} {:>4} {:>14.6e} {:>16.1} {:>10}",
            s.level.n, s.level.m, s.rmse, s.mean_cost_total, slope
        )?;
    }
    writeln!(out, "rows={}", rows.display())?;
    writeln!(out, "summary={}", summary.display())?;
    Ok(0)
}

fn rate(config: &CliConfig, out: &mut dyn Write) -> Result<i32> {
    let path = config.input.as_ref().expect("validated");
    let points = read_summary_csv(path)?;
    let fit = fit_rate(&points)?;
    writeln!(out, "points={}", points.len())?;
    writeln!(out, "slope={}", fit.slope)?;
    writeln!(out, "intercept={}", fit.intercept)?;
    writeln!(out, "r_squared={}", fit.r_squared)?;
    Ok(0)
}

fn verify_cost(config: &CliConfig, out: &mut dyn Write) -> Result<i32> {
    let report = verify_cost_model(&config.problem, &config.levels, config.root_seed);
    writeln!(out, "{report}")?;
    Ok(if report.pass() { 0 } else { 1 })
}

fn oracle(config: &CliConfig, out: &mut dyn Write) -> Result<i32> {
    let problem = &config.problem;
    let key = StreamKey::new(config.root_seed);
    let mut ledger = CostLedger::ZERO;
    echo(config, out)?;
    match config.oracle.expect("validated") {
        OracleKind::FeynmanKac => {
            let est = feynman_kac(problem, config.t, &config.x, config.samples, &key, &mut ledger)?;
            writeln!(out, "mean={}\nstd_error={}\nsamples={}", est.mean, est.std_error, est.samples)?;
            ledger_line(out, &ledger)?;
        }
        OracleKind::ColeHopf => {
            let est = cole_hopf_hjb(
                problem.initial_value(),
                config.lambda,
                config.t,
                &config.x,
                config.samples,
                &key,
                &mut ledger,
            )?;
            writeln!(out, "mean={}\nstd_error={}\nsamples={}", est.mean, est.std_error, est.samples)?;
            ledger_line(out, &ledger)?;
        }
        OracleKind::Hopf => {
            let g = |y: &[f64]| problem.initial_value().eval(y);
            let h_star = |p: &[f64]| 0.5 * p.iter().map(|v| v * v).sum::<f64>();
            let h_star_grad = |p: &[f64]| p.to_vec();
            let options = HopfOptions {
                seed: config.root_seed,
                ..HopfOptions::default()
            };
            let sol = hopf_hj(
                ConvexTerm::new(&g),
                ConvexTerm::new(&h_star).with_gradient(&h_star_grad),
                config.t,
                &config.x,
                &options,
            )?;
            let minimizer: Vec<String> = sol.minimizer.iter().map(f64::to_string).collect();
            writeln!(
                out,
                "value={}\nminimizer={}\nconverged_starts={}",
                sol.value,
                minimizer.join(","),
                sol.converged_starts
            )?;
        }
        OracleKind::OdePicard => {
            let InitialValue::Constant(g0) = problem.initial_value() else {
                return Err(Error::Config {
                    key: "g".into(),
                    reason: "ode-picard needs constant:<c>".into(),
                });
            };
            let f = problem.nonlinearity();
            let eval = |u: f64| f.eval(u);
            let n = config.levels[0].n;
            let value = ode_picard_oracle(&eval, *g0, config.t, n)?;
            writeln!(out, "value={value}\nn={n}")?;
        }
        OracleKind::Quadrature => {
            let sol = quadrature_fixed_point_1d(problem, &config.quadrature)?;
            let steps = config.quadrature.grid.time_steps as f64;
            let position = config.t / problem.horizon() * steps;
            if (position - position.round()).abs() > 1e-9 {
                return Err(Error::Config {
                    key: "t".into(),
                    reason: format!("must lie on the time grid (multiples of T/{steps})"),
                });
            }
            let value = sol.value_at(position.round() as usize, config.x[0]);
            writeln!(out, "value={value}\niterations={}\nresidual={:e}", sol.iterations, sol.residual)?;
        }
    }
    Ok(0)
}
