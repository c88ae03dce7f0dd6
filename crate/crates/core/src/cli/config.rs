use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::bench::{default_threads, Reference};
use crate::error::{Error, Result};
use crate::mlp::{MlpLevel, DEFAULT_DEPTH_GUARD};
use crate::model::{DefaultRisk, DiffusionModel, InitialValue, Interval, Nonlinearity, SemilinearProblem};
use crate::oracles::{QuadratureGrid, QuadratureOptions};

/// Every key accepted in config files and as `--<key>` flags.
pub const KEYS: &[&str] = &[
    "problem",
    "mu",
    "sigma",
    "d",
    "T",
    "f",
    "interval",
    "clamp",
    "g",
    "t",
    "x",
    "n",
    "M",
    "levels",
    "seeds",
    "seed",
    "threads",
    "output",
    "reference",
    "depth_guard",
    "samples",
    "lambda",
    "oracle",
    "input",
    "time_steps",
    "space_points",
    "space_radius",
    "picard_iters",
];

pub const SEED_ENV: &str = "MLPPDE_SEED";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Subcommand {
    Solve,
    Study,
    Rate,
    VerifyCost,
    Oracle,
}

impl Subcommand {
    pub fn name(&self) -> &'static str {
        match self {
            Subcommand::Solve => "solve",
            Subcommand::Study => "study",
            Subcommand::Rate => "rate",
            Subcommand::VerifyCost => "verify-cost",
            Subcommand::Oracle => "oracle",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OracleKind {
    FeynmanKac,
    ColeHopf,
    Hopf,
    OdePicard,
    Quadrature,
}

impl FromStr for OracleKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "feynman-kac" => Ok(OracleKind::FeynmanKac),
            "cole-hopf" => Ok(OracleKind::ColeHopf),
            "hopf" => Ok(OracleKind::Hopf),
            "ode-picard" => Ok(OracleKind::OdePicard),
            "quadrature" => Ok(OracleKind::Quadrature),
            _ => Err("expected feynman-kac, cole-hopf, hopf, ode-picard or quadrature".into()),
        }
    }
}

/// Raw `key = value` settings, flags layered over the config file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RawConfig {
    values: BTreeMap<String, String>,
}

impl RawConfig {
    /// Parses flat `key = value` text. Blank lines and `#` comments are skipped.
    pub fn parse_file_text(text: &str) -> Result<Self> {
        let mut raw = RawConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config {
                    key: format!("line {}", i + 1),
                    reason: format!("expected `key = value`, got `{line}`"),
                });
            };
            raw.set(key.trim(), value.trim())?;
        }
        Ok(raw)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
            key: "config".into(),
            reason: format!("cannot read {}: {e}", path.display()),
        })?;
        Self::parse_file_text(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !KEYS.contains(&key) {
            return Err(Error::Config {
                key: key.into(),
                reason: "unknown key".into(),
            });
        }
        self.values.insert(key.into(), value.into());
        Ok(())
    }

    /// Applies every entry of `other`, replacing existing values.
    pub fn overlay(&mut self, other: &RawConfig) {
        for (k, v) in &other.values {
            self.values.insert(k.clone(), v.clone());
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn parsed<T: FromStr>(&self, key: &str, what: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| {
                v.parse::<T>().map_err(|_| Error::Config {
                    key: key.into(),
                    reason: format!("expected {what}, got `{v}`"),
                })
            })
            .transpose()
    }
}

/// Fully validated configuration of one command.
#[derive(Clone, Debug, PartialEq)]
pub struct CliConfig {
    pub command: Subcommand,
    pub problem: SemilinearProblem,
    pub t: f64,
    pub x: Vec<f64>,
    pub levels: Vec<MlpLevel>,
    pub seeds: u32,
    pub root_seed: u64,
    pub threads: usize,
    pub output: Option<PathBuf>,
    pub reference: Reference,
    /// Grid used by the quadrature reference and oracle.
    pub quadrature: QuadratureOptions,
    pub depth_guard: u32,
    pub samples: u64,
    pub lambda: f64,
    pub oracle: Option<OracleKind>,
    pub input: Option<PathBuf>,
    /// Effective settings, echoed into output metadata.
    pub effective: Vec<(String, String)>,
}

fn config_err(key: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        key: key.into(),
        reason: reason.into(),
    }
}

fn number(key: &str, s: &str) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| config_err(key, format!("expected a number, got `{s}`")))?;
    if !v.is_finite() {
        return Err(config_err(key, "must be finite"));
    }
    Ok(v)
}

fn number_list(key: &str, s: &str, sep: char) -> Result<Vec<f64>> {
    s.split(sep).map(|p| number(key, p)).collect()
}

fn parse_bool(key: &str, s: &str) -> Result<bool> {
    match s {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(config_err(key, format!("expected true or false, got `{s}`"))),
    }
}

fn parse_interval(s: &str) -> Result<Interval> {
    let v = number_list("interval", s, ';')?;
    if v.len() != 2 {
        return Err(config_err("interval", "expected `lo;hi`"));
    }
    Interval::new(v[0], v[1]).map_err(|e| config_err("interval", e.to_string()))
}

fn parse_nonlinearity(spec: &str, interval: Option<Interval>, clamp: bool) -> Result<Nonlinearity> {
    let (name, arg) = match spec.split_once(':') {
        Some((n, a)) => (n, Some(a)),
        None => (spec, None),
    };
    let keyed = |e: Error| config_err("f", e.to_string());
    let f = match (name, arg) {
        ("zero", None) => Nonlinearity::zero(),
        ("linear", Some(a)) => Nonlinearity::linear(number("f", a)?).map_err(keyed)?,
        ("allen-cahn", None) => Nonlinearity::allen_cahn(interval.unwrap_or(Interval { lo: -2.0, hi: 2.0 })),
        ("default-risk", Some(a)) => {
            let p = number_list("f", a, ';')?;
            if p.len() != 6 {
                return Err(config_err("f", "default-risk takes δ;R;γ_h;γ_l;v_h;v_l"));
            }
            Nonlinearity::default_risk(DefaultRisk::new(p[0], p[1], p[2], p[3], p[4], p[5]).map_err(keyed)?)
        }
        _ => {
            return Err(config_err(
                "f",
                format!("unknown nonlinearity `{spec}` (zero, linear:<a>, allen-cahn, default-risk:<δ;R;γ_h;γ_l;v_h;v_l>)"),
            ))
        }
    };
    let f = match interval {
        Some(iv) if name != "allen-cahn" => f.with_interval(iv),
        _ => f,
    };
    if clamp {
        f.clamped().map_err(|e| config_err("clamp", e.to_string()))
    } else {
        Ok(f)
    }
}

/// Parses `3` (n = M = 3), `2:5` (diagonal 2 through 5) or a comma list of
/// either, where a single item may also be `n/M`.
pub fn parse_levels(s: &str) -> Result<Vec<MlpLevel>> {
    let bad = || config_err("levels", format!("cannot parse `{s}`"));
    let int = |p: &str| p.trim().parse::<u32>().map_err(|_| bad());
    let mut levels = Vec::new();
    for item in s.split(',') {
        if let Some((a, b)) = item.split_once(':') {
            let (a, b) = (int(a)?, int(b)?);
            if a > b {
                return Err(config_err("levels", format!("empty range `{item}`")));
            }
            for k in a..=b {
                levels.push(MlpLevel::diagonal(k).map_err(|e| config_err("levels", e.to_string()))?);
            }
        } else if let Some((n, m)) = item.split_once('/') {
            levels.push(MlpLevel::new(int(n)?, int(m)?).map_err(|e| config_err("levels", e.to_string()))?);
        } else {
            levels.push(MlpLevel::diagonal(int(item)?).map_err(|e| config_err("levels", e.to_string()))?);
        }
    }
    Ok(levels)
}

fn build_problem(raw: &RawConfig) -> Result<SemilinearProblem> {
    let d: i64 = raw.parsed("d", "an integer")?.unwrap_or(1);
    if d < 1 {
        return Err(config_err("d", "dimension must satisfy d >= 1"));
    }
    let horizon = raw.get("T").map(|v| number("T", v)).transpose()?.unwrap_or(1.0);
    let diffusion = match raw.get("problem").unwrap_or("heat") {
        "heat" => DiffusionModel::ScaledHeat,
        "gbm" => {
            let mu = raw.get("mu").map(|v| number("mu", v)).transpose()?.unwrap_or(0.0);
            let sigma = raw.get("sigma").map(|v| number("sigma", v)).transpose()?.unwrap_or(1.0);
            DiffusionModel::geometric_bm(mu, sigma).map_err(|e| config_err("sigma", e.to_string()))?
        }
        other => return Err(config_err("problem", format!("expected heat or gbm, got `{other}`"))),
    };
    let interval = raw.get("interval").map(parse_interval).transpose()?;
    let clamp = raw.get("clamp").map(|v| parse_bool("clamp", v)).transpose()?.unwrap_or(false);
    let f = parse_nonlinearity(raw.get("f").unwrap_or("zero"), interval, clamp)?;
    let g = InitialValue::parse(raw.get("g").unwrap_or("constant:0")).map_err(|e| match e {
        Error::InvalidArgument { reason, .. } => config_err("g", reason),
        other => other,
    })?;
    SemilinearProblem::new(d as usize, horizon, diffusion, f, g)
}

fn quadrature_options(raw: &RawConfig) -> Result<QuadratureOptions> {
    let mut o = Reference::default_quadrature();
    if let Some(v) = raw.parsed::<usize>("time_steps", "a positive integer")? {
        o.grid.time_steps = v;
    }
    if let Some(v) = raw.parsed::<usize>("space_points", "a positive integer")? {
        o.grid.space_points = v;
    }
    if let Some(v) = raw.get("space_radius") {
        o.grid.space_radius = number("space_radius", v)?;
    }
    if let Some(v) = raw.parsed::<usize>("picard_iters", "a positive integer")? {
        o.picard_iters = v;
    }
    let QuadratureGrid {
        time_steps,
        space_points,
        space_radius,
    } = o.grid;
    if time_steps == 0 {
        return Err(config_err("time_steps", "must be at least 1"));
    }
    if space_points == 0 {
        return Err(config_err("space_points", "must be at least 1"));
    }
    if space_radius <= 0.0 {
        return Err(config_err("space_radius", "must be positive"));
    }
    if o.picard_iters == 0 {
        return Err(config_err("picard_iters", "must be at least 1"));
    }
    Ok(o)
}

fn root_seed(raw: &RawConfig, env_seed: Option<&str>) -> Result<u64> {
    if let Some(v) = raw.parsed::<u64>("seed", "a decimal 64-bit unsigned integer")? {
        return Ok(v);
    }
    match env_seed {
        Some(v) => v
            .trim()
            .parse()
            .map_err(|_| config_err(SEED_ENV, format!("expected a decimal 64-bit unsigned integer, got `{v}`"))),
        None => Ok(0),
    }
}

impl CliConfig {
    /// Validates every setting. `env_seed` is the value of `MLPPDE_SEED`, if set.
    pub fn from_raw(command: Subcommand, raw: &RawConfig, env_seed: Option<&str>) -> Result<Self> {
        let problem = build_problem(raw)?;
        let d = problem.dimension();

        let t = raw.get("t").map(|v| number("t", v)).transpose()?.unwrap_or(problem.horizon());
        if !(0.0..=problem.horizon()).contains(&t) {
            return Err(config_err("t", format!("must lie in [0, {}]", problem.horizon())));
        }
        let x = match raw.get("x") {
            None => vec![0.0; d],
            Some(v) => {
                let list = number_list("x", v, ',')?;
                match list.len() {
                    1 => vec![list[0]; d],
                    n if n == d => list,
                    n => return Err(config_err("x", format!("has {n} coordinates, expected 1 or d = {d}"))),
                }
            }
        };

        let n: Option<u32> = raw.parsed("n", "a non-negative integer")?;
        let m: Option<u32> = raw.parsed("M", "a positive integer")?;
        let levels = match (n, m, raw.get("levels")) {
            (Some(n), Some(m), _) => vec![MlpLevel::new(n, m).map_err(|e| config_err("M", e.to_string()))?],
            (Some(n), None, _) if command == Subcommand::Oracle => vec![MlpLevel::new(n, 1).map_err(|e| config_err("n", e.to_string()))?],
            (Some(_), None, _) => return Err(config_err("M", "must be given together with n")),
            (None, Some(_), _) => return Err(config_err("n", "must be given together with M")),
            (None, None, Some(l)) => parse_levels(l)?,
            (None, None, None) => match command {
                Subcommand::Solve => return Err(config_err("n", "required by `solve` (with M, or use levels)")),
                Subcommand::VerifyCost => return Err(config_err("n", "required by `verify-cost` (with M, or use levels)")),
                _ => parse_levels("1:5")?,
            },
        };
        if command == Subcommand::Solve && levels.len() != 1 {
            return Err(config_err("levels", "solve takes exactly one level"));
        }

        let seeds: u32 = raw.parsed("seeds", "a positive integer")?.unwrap_or(20);
        if seeds < 2 && command == Subcommand::Study {
            return Err(config_err("seeds", "need at least 2 seeds"));
        }
        let root_seed = root_seed(raw, env_seed)?;
        let threads: usize = raw.parsed("threads", "a positive integer")?.unwrap_or_else(default_threads);
        if threads == 0 {
            return Err(config_err("threads", "need at least one thread"));
        }
        let depth_guard: u32 = raw.parsed("depth_guard", "a non-negative integer")?.unwrap_or(DEFAULT_DEPTH_GUARD);
        let samples: u64 = raw.parsed("samples", "a positive integer")?.unwrap_or(100_000);
        if samples < 2 {
            return Err(config_err("samples", "need at least 2 samples"));
        }
        let lambda = raw.get("lambda").map(|v| number("lambda", v)).transpose()?.unwrap_or(1.0);
        if lambda <= 0.0 {
            return Err(config_err("lambda", "must be positive"));
        }

        let quadrature = quadrature_options(raw)?;
        let reference = match raw.get("reference") {
            None | Some("quadrature") => Reference::Quadrature(quadrature),
            Some(spec) => Reference::parse(spec)?,
        };

        let output = raw.get("output").map(PathBuf::from);
        let input = raw.get("input").map(PathBuf::from);
        let oracle = raw
            .get("oracle")
            .map(|v| v.parse::<OracleKind>().map_err(|reason| config_err("oracle", reason)))
            .transpose()?;
        match command {
            Subcommand::Study if output.is_none() => return Err(config_err("output", "required by `study`")),
            Subcommand::Rate if input.is_none() => return Err(config_err("input", "required by `rate`")),
            Subcommand::Oracle if oracle.is_none() => return Err(config_err("oracle", "required by `oracle`")),
            _ => {}
        }
        if command == Subcommand::Oracle && oracle == Some(OracleKind::OdePicard) && n.is_none() && raw.get("levels").is_none() {
            return Err(config_err("n", "required by the ode-picard oracle"));
        }

        let mut effective: Vec<(String, String)> = vec![
            ("command".into(), command.name().into()),
            ("problem_id".into(), problem.id().into()),
            ("diffusion".into(), format!("{:?}", problem.diffusion())),
            ("d".into(), d.to_string()),
            ("T".into(), problem.horizon().to_string()),
            ("f".into(), problem.nonlinearity().to_string()),
            ("g".into(), problem.initial_value().to_string()),
            ("t".into(), t.to_string()),
            ("x".into(), x.iter().map(f64::to_string).collect::<Vec<_>>().join(";")),
            (
                "levels".into(),
                levels.iter().map(|l| format!("{}/{}", l.n, l.m)).collect::<Vec<_>>().join(";"),
            ),
            ("seeds".into(), seeds.to_string()),
            ("root_seed".into(), root_seed.to_string()),
            ("threads".into(), threads.to_string()),
            ("depth_guard".into(), depth_guard.to_string()),
        ];
        match command {
            Subcommand::Study => effective.push(("reference".into(), reference.to_string())),
            Subcommand::Oracle => {
                effective.push(("oracle".into(), raw.get("oracle").unwrap_or_default().into()));
                effective.push(("samples".into(), samples.to_string()));
                effective.push(("lambda".into(), lambda.to_string()));
            }
            Subcommand::Rate => effective.push(("input".into(), raw.get("input").unwrap_or_default().into())),
            _ => {}
        }
        if let Some(o) = raw.get("output") {
            effective.push(("output".into(), o.into()));
        }

        Ok(Self {
            command,
            problem,
            t,
            x,
            levels,
            seeds,
            root_seed,
            threads,
            output,
            reference,
            quadrature,
            depth_guard,
            samples,
            lambda,
            oracle,
            input,
            effective,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(pairs: &[(&str, &str)]) -> RawConfig {
        let mut r = RawConfig::default();
        for (k, v) in pairs {
            r.set(k, v).unwrap();
        }
        r
    }

    fn key_of(e: Error) -> String {
        match e {
            Error::Config { key, .. } => key,
            Error::InvalidArgument { name, .. } => name.into(),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn full_solve_config() {
        let r = raw(&[
            ("problem", "heat"),
            ("d", "10"),
            ("T", "1"),
            ("f", "allen-cahn"),
            ("g", "constant:0.5"),
            ("n", "3"),
            ("M", "3"),
            ("seed", "42"),
        ]);
        let c = CliConfig::from_raw(Subcommand::Solve, &r, None).unwrap();
        assert_eq!(c.problem.dimension(), 10);
        assert_eq!(c.levels, vec![MlpLevel { n: 3, m: 3 }]);
        assert_eq!(c.root_seed, 42);
        assert_eq!(c.x, vec![0.0; 10]);
        assert_eq!(c.t, 1.0);
    }

    #[test]
    fn zero_dimension_names_d() {
        let r = raw(&[("d", "0"), ("n", "1"), ("M", "1")]);
        let e = CliConfig::from_raw(Subcommand::Solve, &r, None).unwrap_err();
        assert!(e.to_string().contains("d >= 1"));
        assert_eq!(key_of(e), "d");
    }

    #[test]
    fn unknown_key_rejected() {
        let e = RawConfig::parse_file_text("d = 3\nbogus = 1\n").unwrap_err();
        assert_eq!(key_of(e), "bogus");
    }

    #[test]
    fn file_comments_and_override() {
        let mut r = RawConfig::parse_file_text("# study\nseeds = 20 # default\n\noutput = out\n").unwrap();
        r.overlay(&raw(&[("seeds", "5")]));
        let c = CliConfig::from_raw(Subcommand::Study, &r, None).unwrap();
        assert_eq!(c.seeds, 5);
    }

    #[test]
    fn type_mismatch_and_missing() {
        let e = CliConfig::from_raw(Subcommand::Solve, &raw(&[("n", "two"), ("M", "2")]), None).unwrap_err();
        assert_eq!(key_of(e), "n");
        let e = CliConfig::from_raw(Subcommand::Solve, &raw(&[]), None).unwrap_err();
        assert_eq!(key_of(e), "n");
        let e = CliConfig::from_raw(Subcommand::Rate, &raw(&[]), None).unwrap_err();
        assert_eq!(key_of(e), "input");
        let e = CliConfig::from_raw(Subcommand::Solve, &raw(&[("n", "1"), ("M", "1"), ("x", "1,2")]), None).unwrap_err();
        assert_eq!(key_of(e), "x");
    }

    #[test]
    fn seed_precedence() {
        let base = raw(&[("n", "1"), ("M", "1")]);
        assert_eq!(CliConfig::from_raw(Subcommand::Solve, &base, None).unwrap().root_seed, 0);
        assert_eq!(CliConfig::from_raw(Subcommand::Solve, &base, Some("17")).unwrap().root_seed, 17);
        let mut with_flag = base.clone();
        with_flag.set("seed", "3").unwrap();
        assert_eq!(CliConfig::from_raw(Subcommand::Solve, &with_flag, Some("17")).unwrap().root_seed, 3);
        let e = CliConfig::from_raw(Subcommand::Solve, &base, Some("abc")).unwrap_err();
        assert_eq!(key_of(e), SEED_ENV);
    }

    #[test]
    fn levels_syntax() {
        let l = parse_levels("2:4,3/1").unwrap();
        assert_eq!(
            l,
            vec![
                MlpLevel { n: 2, m: 2 },
                MlpLevel { n: 3, m: 3 },
                MlpLevel { n: 4, m: 4 },
                MlpLevel { n: 3, m: 1 }
            ]
        );
        assert!(parse_levels("5:2").is_err());
        assert!(parse_levels("0").is_err());
        assert!(parse_levels("2/0").is_err());
    }

    #[test]
    fn nonlinearity_specs() {
        let f = parse_nonlinearity("default-risk:0.667;0.02;0.2;0.02;50;70", None, false).unwrap();
        assert!(f.to_string().starts_with("default-risk:"));
        let f = parse_nonlinearity("allen-cahn", Some(Interval::new(-1.0, 1.0).unwrap()), true).unwrap();
        assert!(f.is_clamped());
        assert_eq!(key_of(parse_nonlinearity("linear", None, false).unwrap_err()), "f");
        assert_eq!(key_of(parse_nonlinearity("zero", None, true).unwrap_err()), "clamp");
    }
}
