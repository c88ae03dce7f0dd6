use crate::error::{Error, Result};
use crate::model::{CostLedger, InitialValue};
use crate::parallel::{ordered_map, Welford};
use crate::rng::StreamKey;

use super::{check_samples, McEstimate};

/// `u = −(1/λ) ln E[exp(−λ g(x + √2 W_τ))]`, the log-transformed heat
/// representation of the LQG Hamilton-Jacobi-Bellman solution with
/// time-to-go `τ`.
///
/// The exponent is shifted by the sample minimum of `g`, so the average is
/// taken over values in `(0, 1]` and cannot overflow. The standard error is
/// propagated through the logarithm by the delta method:
/// `se(u) = se(m) / (λ m)`.
///
/// `g` must be bounded below for the expectation to exist; unbounded-below
/// choices give estimates that drift with the sample size.
pub fn cole_hopf_hjb(
    g: &InitialValue,
    lambda: f64,
    tau: f64,
    x: &[f64],
    samples: u64,
    key: &StreamKey,
    ledger: &mut CostLedger,
) -> Result<McEstimate> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::invalid("lambda", "need lambda > 0"));
    }
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::invalid("tau", "need tau >= 0"));
    }
    if x.is_empty() || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("x", "point must be non-empty and finite"));
    }
    if let InitialValue::Dot(a) = g {
        if a.len() != x.len() {
            return Err(Error::invalid("g", "dot coefficients must match the dimension"));
        }
    }
    check_samples(samples)?;

    let d = x.len();
    let scale = (2.0 * tau).sqrt();
    let mut values = Vec::with_capacity(samples as usize);
    let sample = |i: u64, l: &mut CostLedger| -> Result<f64> {
        let mut y = vec![0.0; d];
        key.derive(i as i64).fill_gaussian(0, &mut y, l);
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi = xi + scale * *yi;
        }
        l.g_evals += 1;
        let v = g.eval(&y);
        if !v.is_finite() {
            return Err(Error::non_finite("g inside the Cole-Hopf expectation; rescale g"));
        }
        Ok(v)
    };
    *ledger += ordered_map(samples, true, sample, |v| values.push(v))?;

    let shift = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mut acc = Welford::default();
    for v in &values {
        acc.push((-lambda * (v - shift)).exp());
    }
    let m = McEstimate::from_welford(&acc);
    Ok(McEstimate {
        mean: shift - m.mean.ln() / lambda,
        std_error: m.std_error / (lambda * m.mean),
        samples,
    })
}
