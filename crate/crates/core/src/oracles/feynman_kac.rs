use crate::error::{Error, Result};
use crate::model::{CostLedger, SemilinearProblem};
use crate::parallel::{ordered_map, Welford};
use crate::rng::StreamKey;

use super::{check_samples, McEstimate};

/// Source term `h(s, x)` of a linear equation `∂ₜu = 𝓛u + h`.
pub type SourceTerm<'a> = &'a (dyn Fn(f64, &[f64]) -> f64 + Sync);

/// Linear Feynman-Kac estimator
/// `u(t, x) = E[g(X_t) + ∫₀ᵗ h(t − r, X_r) dr]`, `X_0 = x`.
///
/// The time integral uses the midpoint rule on `substeps` equal pieces along
/// one simulated path; without a source term only `X_t` is sampled.
#[derive(Clone, Copy)]
pub struct FeynmanKac<'a> {
    problem: &'a SemilinearProblem,
    source: Option<SourceTerm<'a>>,
    substeps: usize,
}

impl<'a> FeynmanKac<'a> {
    pub fn new(problem: &'a SemilinearProblem) -> Self {
        Self {
            problem,
            source: None,
            substeps: 1,
        }
    }

    pub fn with_source(mut self, source: SourceTerm<'a>, substeps: usize) -> Self {
        self.source = Some(source);
        self.substeps = substeps;
        self
    }

    pub fn estimate(&self, t: f64, x: &[f64], samples: u64, key: &StreamKey, ledger: &mut CostLedger) -> Result<McEstimate> {
        let problem = self.problem;
        if !problem.nonlinearity().is_zero() {
            return Err(Error::SolutionDependentSource {
                name: problem.nonlinearity().to_string(),
            });
        }
        check_samples(samples)?;
        if self.substeps == 0 {
            return Err(Error::invalid("substeps", "need at least one substep"));
        }
        if !(t >= 0.0 && t <= problem.horizon()) {
            return Err(Error::TimeOutOfRange {
                t,
                horizon: problem.horizon(),
            });
        }
        if x.len() != problem.dimension() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("x", "point must be finite with dimension d"));
        }

        let diffusion = problem.diffusion();
        let d = x.len();
        let sample = |i: u64, l: &mut CostLedger| -> Result<f64> {
            let path_key = key.derive(i as i64);
            let mut pos = x.to_vec();
            let mut next = vec![0.0; d];
            let mut z = vec![0.0; d];
            let mut integral = 0.0;
            if let Some(h) = self.source {
                let k = self.substeps;
                let dt = t / k as f64;
                let mut clock = 0.0;
                for j in 0..k {
                    let r = (j as f64 + 0.5) * dt;
                    path_key.fill_gaussian(j as u64, &mut z, l);
                    diffusion.transition_into(r - clock, &pos, &z, &mut next);
                    std::mem::swap(&mut pos, &mut next);
                    clock = r;
                    l.f_evals += 1;
                    integral += dt * h(t - r, &pos);
                }
                path_key.fill_gaussian(k as u64, &mut z, l);
                diffusion.transition_into(t - clock, &pos, &z, &mut next);
            } else {
                path_key.fill_gaussian(0, &mut z, l);
                diffusion.transition_into(t, &pos, &z, &mut next);
            }
            Ok(problem.evaluate_g(&next, l)? + integral)
        };
        let mut acc = Welford::default();
        *ledger += ordered_map(samples, true, sample, |v| acc.push(v))?;
        Ok(McEstimate::from_welford(&acc))
    }
}

/// Feynman-Kac estimate of the source-free equation at `(t, x)`.
pub fn feynman_kac(
    problem: &SemilinearProblem,
    t: f64,
    x: &[f64],
    samples: u64,
    key: &StreamKey,
    ledger: &mut CostLedger,
) -> Result<McEstimate> {
    FeynmanKac::new(problem).estimate(t, x, samples, key, ledger)
}
