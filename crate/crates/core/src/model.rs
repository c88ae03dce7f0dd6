//! Problem instances for `∂ₜu = 𝓛u + f(u)`, `u(0, ·) = g`, together with the
//! diffusion models that realise `𝓛` through exact transition sampling and the
//! cost ledger every estimator reports into.

use std::fmt;
use std::ops::{Add, AddAssign};

use crate::error::{Error, Result};
use crate::rng::GaussianVector;

/// Work counters: evaluations of `f`, evaluations of `g`, scalar random draws.
///
/// One `d`-dimensional Gaussian vector adds `d` draws, one uniform adds one.
/// Evaluating `g` counts once regardless of `d`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct CostLedger {
    pub f_evals: u64,
    pub g_evals: u64,
    pub scalar_draws: u64,
}

impl CostLedger {
    pub const ZERO: CostLedger = CostLedger {
        f_evals: 0,
        g_evals: 0,
        scalar_draws: 0,
    };

    pub fn new(f_evals: u64, g_evals: u64, scalar_draws: u64) -> Self {
        Self {
            f_evals,
            g_evals,
            scalar_draws,
        }
    }

    /// Componentwise sum.
    pub fn merge(self, other: CostLedger) -> CostLedger {
        self + other
    }

    /// Sum of the three counters, the scalar cost used in rate fits.
    pub fn total(&self) -> u64 {
        self.f_evals + self.g_evals + self.scalar_draws
    }
}

impl Add for CostLedger {
    type Output = CostLedger;

    fn add(self, rhs: CostLedger) -> CostLedger {
        CostLedger {
            f_evals: self.f_evals + rhs.f_evals,
            g_evals: self.g_evals + rhs.g_evals,
            scalar_draws: self.scalar_draws + rhs.scalar_draws,
        }
    }
}

impl AddAssign for CostLedger {
    fn add_assign(&mut self, rhs: CostLedger) {
        *self = *self + rhs;
    }
}

impl std::iter::Sum for CostLedger {
    fn sum<I: Iterator<Item = CostLedger>>(iter: I) -> Self {
        iter.fold(CostLedger::ZERO, Add::add)
    }
}

impl fmt::Display for CostLedger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.f_evals, self.g_evals, self.scalar_draws)
    }
}

/// Diffusion driving the linear part of the equation. Both variants admit
/// exact transition sampling, so no time stepping is involved.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DiffusionModel {
    /// `X_{s,t,x} = x + √2 (W_t − W_s)`, the generator of `Δ`.
    ScaledHeat,
    /// Componentwise geometric Brownian motion
    /// `X_t = x ⊙ exp((μ − σ²/2)(t − s) + σ (W_t − W_s))`.
    GeometricBm { drift: f64, volatility: f64 },
}

impl DiffusionModel {
    pub fn geometric_bm(drift: f64, volatility: f64) -> Result<Self> {
        if !drift.is_finite() {
            return Err(Error::invalid("mu", "drift must be finite"));
        }
        if !(volatility > 0.0 && volatility.is_finite()) {
            return Err(Error::invalid("sigma", "volatility must be > 0"));
        }
        Ok(DiffusionModel::GeometricBm { drift, volatility })
    }

    pub fn name(&self) -> &'static str {
        match self {
            DiffusionModel::ScaledHeat => "heat",
            DiffusionModel::GeometricBm { .. } => "gbm",
        }
    }

    /// True for the process the complexity theorem is stated for.
    pub fn is_heat(&self) -> bool {
        matches!(self, DiffusionModel::ScaledHeat)
    }

    /// Exact-law sample of `X_{s,t,x}` driven by the standard normal `draw`.
    pub fn sample_transition(&self, s: f64, t: f64, x: &[f64], draw: &GaussianVector) -> Result<Vec<f64>> {
        if !(s.is_finite() && t.is_finite()) {
            return Err(Error::non_finite("transition times"));
        }
        if s > t {
            return Err(Error::TimeOrder { s, t });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite("transition start point"));
        }
        if draw.len() != x.len() {
            return Err(Error::invalid(
                "draw",
                format!("dimension {} does not match point dimension {}", draw.len(), x.len()),
            ));
        }
        let mut out = vec![0.0; x.len()];
        self.transition_into(t - s, x, draw.as_slice(), &mut out);
        Ok(out)
    }

    /// Unchecked transition over a span `dt ≥ 0`; writes into `out`.
    pub(crate) fn transition_into(&self, dt: f64, x: &[f64], z: &[f64], out: &mut [f64]) {
        match *self {
            DiffusionModel::ScaledHeat => {
                let scale = (2.0 * dt).sqrt();
                for ((o, &xi), &zi) in out.iter_mut().zip(x).zip(z) {
                    *o = xi + scale * zi;
                }
            }
            DiffusionModel::GeometricBm { drift, volatility } => {
                let mean = (drift - 0.5 * volatility * volatility) * dt;
                let scale = volatility * dt.sqrt();
                for ((o, &xi), &zi) in out.iter_mut().zip(x).zip(z) {
                    *o = xi * (mean + scale * zi).exp();
                }
            }
        }
    }
}

/// Closed interval `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::invalid("interval", format!("need finite lo < hi, got [{lo}, {hi}]")));
        }
        Ok(Interval { lo, hi })
    }

    pub fn contains(&self, u: f64) -> bool {
        self.lo <= u && u <= self.hi
    }

    pub fn clamp(&self, u: f64) -> f64 {
        u.clamp(self.lo, self.hi)
    }
}

/// Parameters of the default-risk valuation nonlinearity
/// `f(u) = −(1 − δ) Q(u) u − R u`, with `Q` piecewise linear:
/// `γ_h` below `v_h`, `γ_l` above `v_l`, linear in between.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DefaultRisk {
    pub recovery_loss: f64,
    pub rate: f64,
    pub gamma_high: f64,
    pub gamma_low: f64,
    pub v_high: f64,
    pub v_low: f64,
}

impl DefaultRisk {
    pub fn new(recovery_loss: f64, rate: f64, gamma_high: f64, gamma_low: f64, v_high: f64, v_low: f64) -> Result<Self> {
        let all = [recovery_loss, rate, gamma_high, gamma_low, v_high, v_low];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("default-risk", "parameters must be finite"));
        }
        if v_high >= v_low {
            return Err(Error::invalid("default-risk", "need v_h < v_l"));
        }
        if !(gamma_high >= gamma_low && gamma_low >= 0.0) {
            return Err(Error::invalid("default-risk", "need γ_h ≥ γ_l ≥ 0"));
        }
        Ok(Self {
            recovery_loss,
            rate,
            gamma_high,
            gamma_low,
            v_high,
            v_low,
        })
    }

    /// Default intensity as a function of the value.
    pub fn intensity(&self, u: f64) -> f64 {
        if u < self.v_high {
            self.gamma_high
        } else if u > self.v_low {
            self.gamma_low
        } else {
            self.gamma_high + self.slope() * (u - self.v_high)
        }
    }

    fn slope(&self) -> f64 {
        (self.gamma_low - self.gamma_high) / (self.v_low - self.v_high)
    }

    fn eval(&self, u: f64) -> f64 {
        -(1.0 - self.recovery_loss) * self.intensity(u) * u - self.rate * u
    }

    /// Global Lipschitz constant. `Q(u) u` has derivative `γ_h`, `γ_l` on the
    /// flat pieces and an affine derivative in between, so the extremes sit
    /// at the kinks.
    fn lipschitz(&self) -> f64 {
        let s = self.slope();
        let inner = [
            self.gamma_high,
            self.gamma_low,
            (self.gamma_high + s * self.v_high).abs(),
            (self.gamma_low + s * self.v_low).abs(),
        ]
        .into_iter()
        .fold(0.0_f64, f64::max);
        (1.0 - self.recovery_loss).abs() * inner + self.rate.abs()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NonlinearityKind {
    Zero,
    Linear { slope: f64 },
    AllenCahn,
    DefaultRisk(DefaultRisk),
}

/// A scalar nonlinearity `f: ℝ → ℝ` with its Lipschitz certificate.
///
/// Non-globally-Lipschitz kinds (Allen-Cahn) carry a working interval on
/// which the reported constant holds. With `clamp` set, arguments are
/// projected onto that interval before evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Nonlinearity {
    kind: NonlinearityKind,
    interval: Option<Interval>,
    clamp: bool,
}

/// Lipschitz constant and, when not global, the interval it is valid on.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LipschitzBound {
    pub constant: f64,
    pub interval: Option<Interval>,
}

impl Nonlinearity {
    pub fn zero() -> Self {
        Self::global(NonlinearityKind::Zero)
    }

    pub fn linear(slope: f64) -> Result<Self> {
        if !slope.is_finite() {
            return Err(Error::invalid("linear", "slope must be finite"));
        }
        Ok(Self::global(NonlinearityKind::Linear { slope }))
    }

    /// `f(u) = u − u³` with its declared working interval.
    pub fn allen_cahn(interval: Interval) -> Self {
        Self {
            kind: NonlinearityKind::AllenCahn,
            interval: Some(interval),
            clamp: false,
        }
    }

    pub fn default_risk(params: DefaultRisk) -> Self {
        Self::global(NonlinearityKind::DefaultRisk(params))
    }

    fn global(kind: NonlinearityKind) -> Self {
        Self {
            kind,
            interval: None,
            clamp: false,
        }
    }

    /// Restrict to `interval`, replacing any declared one.
    pub fn with_interval(mut self, interval: Interval) -> Self {
        self.interval = Some(interval);
        self
    }

    /// Project arguments onto the working interval before evaluating.
    pub fn clamped(mut self) -> Result<Self> {
        if self.interval.is_none() {
            return Err(Error::invalid("clamp", "clamping needs a working interval"));
        }
        self.clamp = true;
        Ok(self)
    }

    pub fn kind(&self) -> NonlinearityKind {
        self.kind
    }

    pub fn interval(&self) -> Option<Interval> {
        self.interval
    }

    pub fn is_clamped(&self) -> bool {
        self.clamp
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, NonlinearityKind::Zero)
    }

    /// Whether the Lipschitz hypothesis of the complexity theorem holds on
    /// all of ℝ for the function actually evaluated.
    pub fn is_globally_lipschitz(&self) -> bool {
        self.clamp || !matches!(self.kind, NonlinearityKind::AllenCahn)
    }

    pub fn eval(&self, u: f64) -> f64 {
        let u = match (self.clamp, self.interval) {
            (true, Some(iv)) => iv.clamp(u),
            _ => u,
        };
        match self.kind {
            NonlinearityKind::Zero => 0.0,
            NonlinearityKind::Linear { slope } => slope * u,
            NonlinearityKind::AllenCahn => u - u * u * u,
            NonlinearityKind::DefaultRisk(p) => p.eval(u),
        }
    }

    pub fn lipschitz(&self) -> LipschitzBound {
        let on_interval = |iv: Interval| {
            let d = |u: f64| (1.0 - 3.0 * u * u).abs();
            let mut c = d(iv.lo).max(d(iv.hi));
            if iv.contains(0.0) {
                c = c.max(1.0);
            }
            c
        };
        let constant = match self.kind {
            NonlinearityKind::Zero => 0.0,
            NonlinearityKind::Linear { slope } => slope.abs(),
            NonlinearityKind::AllenCahn => on_interval(self.interval.expect("allen-cahn carries an interval")),
            NonlinearityKind::DefaultRisk(p) => p.lipschitz(),
        };
        let interval = if self.clamp { None } else { self.interval };
        LipschitzBound { constant, interval }
    }
}

impl fmt::Display for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            NonlinearityKind::Zero => write!(f, "zero")?,
            NonlinearityKind::Linear { slope } => write!(f, "linear:{slope}")?,
            NonlinearityKind::AllenCahn => write!(f, "allen-cahn")?,
            NonlinearityKind::DefaultRisk(p) => write!(
                f,
                "default-risk:{};{};{};{};{};{}",
                p.recovery_loss, p.rate, p.gamma_high, p.gamma_low, p.v_high, p.v_low
            )?,
        }
        if self.clamp {
            if let Some(iv) = self.interval {
                write!(f, "[clamp {};{}]", iv.lo, iv.hi)?;
            }
        }
        Ok(())
    }
}

/// Built-in initial values `g = u(0, ·)`.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialValue {
    /// `constant:<c>`
    Constant(f64),
    /// `sum`: `Σ xᵢ`
    Sum,
    /// `norm_sq`: `|x|²`
    NormSq,
    /// `log_half_one_plus_normsq`: `ln(½(1 + |x|²))`
    LogHalfOnePlusNormSq,
    /// `min_coord`: `minᵢ xᵢ`
    MinCoord,
    /// `half_exp_neg_normsq`: `½ exp(−|x|²)`
    HalfExpNegNormSq,
    /// `dot:<a1>;<a2>;…`: `⟨a, x⟩`
    Dot(Vec<f64>),
}

impl InitialValue {
    /// Parses the names accepted on the command line and in config files.
    pub fn parse(spec: &str) -> Result<Self> {
        let bad = |reason: String| Error::invalid("g", reason);
        let (name, arg) = match spec.split_once(':') {
            Some((n, a)) => (n.trim(), Some(a.trim())),
            None => (spec.trim(), None),
        };
        let g = match (name, arg) {
            ("constant", Some(a)) => {
                let c: f64 = a.parse().map_err(|_| bad(format!("bad constant `{a}`")))?;
                if !c.is_finite() {
                    return Err(bad("constant must be finite".into()));
                }
                InitialValue::Constant(c)
            }
            ("sum", None) => InitialValue::Sum,
            ("norm_sq", None) => InitialValue::NormSq,
            ("log_half_one_plus_normsq", None) => InitialValue::LogHalfOnePlusNormSq,
            ("min_coord", None) => InitialValue::MinCoord,
            ("half_exp_neg_normsq", None) => InitialValue::HalfExpNegNormSq,
            ("dot", Some(a)) => {
                let coeffs = a
                    .split(';')
                    .map(|s| s.trim().parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| bad(format!("bad coefficient list `{a}`")))?;
                if coeffs.is_empty() || coeffs.iter().any(|c| !c.is_finite()) {
                    return Err(bad("dot coefficients must be finite".into()));
                }
                InitialValue::Dot(coeffs)
            }
            _ => return Err(bad(format!("unknown initial value `{spec}`"))),
        };
        Ok(g)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let norm_sq = || x.iter().map(|v| v * v).sum::<f64>();
        match self {
            InitialValue::Constant(c) => *c,
            InitialValue::Sum => x.iter().sum(),
            InitialValue::NormSq => norm_sq(),
            InitialValue::LogHalfOnePlusNormSq => (0.5 * (1.0 + norm_sq())).ln(),
            InitialValue::MinCoord => x.iter().copied().fold(f64::INFINITY, f64::min),
            InitialValue::HalfExpNegNormSq => 0.5 * (-norm_sq()).exp(),
            InitialValue::Dot(a) => a.iter().zip(x).map(|(a, x)| a * x).sum(),
        }
    }

    /// Whether `g` is bounded on ℝ^d (the theorem's setting).
    pub fn is_bounded(&self) -> bool {
        matches!(self, InitialValue::Constant(_) | InitialValue::HalfExpNegNormSq)
    }
}

impl fmt::Display for InitialValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialValue::Constant(c) => write!(f, "constant:{c}"),
            InitialValue::Sum => write!(f, "sum"),
            InitialValue::NormSq => write!(f, "norm_sq"),
            InitialValue::LogHalfOnePlusNormSq => write!(f, "log_half_one_plus_normsq"),
            InitialValue::MinCoord => write!(f, "min_coord"),
            InitialValue::HalfExpNegNormSq => write!(f, "half_exp_neg_normsq"),
            InitialValue::Dot(a) => {
                write!(f, "dot:")?;
                for (i, c) in a.iter().enumerate() {
                    if i > 0 {
                        write!(f, ";")?;
                    }
                    write!(f, "{c}")?;
                }
                Ok(())
            }
        }
    }
}

/// One PDE instance. Immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct SemilinearProblem {
    id: String,
    dimension: usize,
    horizon: f64,
    diffusion: DiffusionModel,
    nonlinearity: Nonlinearity,
    initial_value: InitialValue,
}

impl SemilinearProblem {
    pub fn new(
        dimension: usize,
        horizon: f64,
        diffusion: DiffusionModel,
        nonlinearity: Nonlinearity,
        initial_value: InitialValue,
    ) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::invalid("d", "dimension must satisfy d >= 1"));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::invalid("T", "horizon must satisfy T > 0"));
        }
        if let InitialValue::Dot(a) = &initial_value {
            if a.len() != dimension {
                return Err(Error::invalid("g", format!("dot has {} coefficients but d = {dimension}", a.len())));
            }
        }
        let id = format!("{}/{}/{}", diffusion.name(), nonlinearity, initial_value);
        Ok(Self {
            id,
            dimension,
            horizon,
            diffusion,
            nonlinearity,
            initial_value,
        })
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn diffusion(&self) -> DiffusionModel {
        self.diffusion
    }

    pub fn nonlinearity(&self) -> &Nonlinearity {
        &self.nonlinearity
    }

    pub fn initial_value(&self) -> &InitialValue {
        &self.initial_value
    }

    /// `f(u)`, counted in `ledger`.
    pub fn evaluate_f(&self, u: f64, ledger: &mut CostLedger) -> Result<f64> {
        if !u.is_finite() {
            return Err(Error::non_finite("argument of f"));
        }
        ledger.f_evals += 1;
        Ok(self.nonlinearity.eval(u))
    }

    /// `g(x)`, counted in `ledger`.
    pub fn evaluate_g(&self, x: &[f64], ledger: &mut CostLedger) -> Result<f64> {
        if x.len() != self.dimension {
            return Err(Error::invalid(
                "x",
                format!("point has dimension {} but d = {}", x.len(), self.dimension),
            ));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite("argument of g"));
        }
        ledger.g_evals += 1;
        Ok(self.initial_value.eval(x))
    }

    /// Caveats that apply when the problem leaves the setting of the
    /// complexity theorem (heat diffusion, globally Lipschitz f).
    pub fn theorem_caveats(&self) -> Vec<&'static str> {
        let mut notes = Vec::new();
        if !self.diffusion.is_heat() {
            notes.push("extension: geometric Brownian motion diffusion");
        }
        if !self.nonlinearity.is_globally_lipschitz() {
            notes.push("empirical only: f is not globally Lipschitz and is not clamped");
        }
        notes
    }
}
