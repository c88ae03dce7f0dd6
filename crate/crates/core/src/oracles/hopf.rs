use crate::error::{Error, Result};
use crate::model::CostLedger;
use crate::rng::StreamKey;

pub type Gradient<'a> = &'a dyn Fn(&[f64]) -> Vec<f64>;

/// A function with an optional analytic gradient. Without one, central
/// differences are used.
#[derive(Clone, Copy)]
pub struct ConvexTerm<'a> {
    pub value: &'a dyn Fn(&[f64]) -> f64,
    pub gradient: Option<Gradient<'a>>,
}

impl<'a> ConvexTerm<'a> {
    pub fn new(value: &'a dyn Fn(&[f64]) -> f64) -> Self {
        Self { value, gradient: None }
    }

    pub fn with_gradient(mut self, gradient: Gradient<'a>) -> Self {
        self.gradient = Some(gradient);
        self
    }

    fn grad(&self, y: &[f64]) -> Vec<f64> {
        match self.gradient {
            Some(g) => g(y),
            None => central_difference(self.value, y),
        }
    }
}

fn central_difference(f: &dyn Fn(&[f64]) -> f64, y: &[f64]) -> Vec<f64> {
    let mut probe = y.to_vec();
    (0..y.len())
        .map(|i| {
            let h = f64::EPSILON.cbrt() * y[i].abs().max(1.0);
            probe[i] = y[i] + h;
            let up = f(&probe);
            probe[i] = y[i] - h;
            let down = f(&probe);
            probe[i] = y[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HopfOptions {
    /// Number of starting points drawn around `x`.
    pub starts: usize,
    /// Standard deviation of the starting cloud.
    pub spread: f64,
    /// Gradient-norm stopping threshold.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for HopfOptions {
    fn default() -> Self {
        Self {
            starts: 16,
            spread: 1.0,
            tolerance: 1e-8,
            max_iterations: 1000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HopfSolution {
    pub value: f64,
    pub minimizer: Vec<f64>,
    pub converged_starts: usize,
}

/// Hopf formula `u(x, t) = inf_y { g(y) + t H*((x − y)/t) }` for a
/// first-order Hamilton-Jacobi equation with convex Hamiltonian, where
/// `h_star` is the convex conjugate of the Hamiltonian.
///
/// Minimised by BFGS with Armijo backtracking from several starts; the best
/// converged start wins.
pub fn hopf_hj(g: ConvexTerm<'_>, h_star: ConvexTerm<'_>, t: f64, x: &[f64], options: &HopfOptions) -> Result<HopfSolution> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::invalid("t", "Hopf formula needs t > 0"));
    }
    if x.is_empty() || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("x", "point must be non-empty and finite"));
    }
    if options.starts == 0 {
        return Err(Error::invalid("starts", "need at least one start"));
    }
    let objective = |y: &[f64]| -> f64 {
        let q: Vec<f64> = x.iter().zip(y).map(|(xi, yi)| (xi - yi) / t).collect();
        (g.value)(y) + t * (h_star.value)(&q)
    };
    let gradient = |y: &[f64]| -> Vec<f64> {
        let q: Vec<f64> = x.iter().zip(y).map(|(xi, yi)| (xi - yi) / t).collect();
        let gg = g.grad(y);
        let gh = h_star.grad(&q);
        gg.iter().zip(&gh).map(|(a, b)| a - b).collect()
    };

    let key = StreamKey::new(options.seed);
    let mut ledger = CostLedger::ZERO;
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut best_any = f64::INFINITY;
    let mut converged = 0;
    for s in 0..options.starts {
        let z = key.derive(s as i64).gaussian_vector(0, x.len(), &mut ledger);
        let start: Vec<f64> = x.iter().zip(z.as_slice()).map(|(xi, zi)| xi + options.spread * zi).collect();
        let run = bfgs(&objective, &gradient, start, options.tolerance, options.max_iterations);
        best_any = best_any.min(run.value);
        if run.converged {
            converged += 1;
            if best.as_ref().is_none_or(|(v, _)| run.value < *v) {
                best = Some((run.value, run.point));
            }
        }
    }
    match best {
        Some((value, minimizer)) => Ok(HopfSolution {
            value,
            minimizer,
            converged_starts: converged,
        }),
        None => Err(Error::NonConvergence {
            method: "hopf minimisation",
            best: best_any,
            detail: format!("no start reached gradient norm {:e}", options.tolerance),
        }),
    }
}

struct Run {
    value: f64,
    point: Vec<f64>,
    converged: bool,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn bfgs(f: &dyn Fn(&[f64]) -> f64, grad: &dyn Fn(&[f64]) -> Vec<f64>, mut y: Vec<f64>, tol: f64, max_iter: usize) -> Run {
    let n = y.len();
    // Inverse Hessian approximation, row-major.
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = 1.0;
    }
    let mut fy = f(&y);
    let mut gy = grad(&y);
    for _ in 0..max_iter {
        if !fy.is_finite() {
            break;
        }
        if norm(&gy) < tol {
            return Run {
                value: fy,
                point: y,
                converged: true,
            };
        }
        let mut dir: Vec<f64> = (0..n).map(|i| -dot(&h[i * n..(i + 1) * n], &gy)).collect();
        let mut slope = dot(&dir, &gy);
        if slope >= 0.0 {
            // Lost positive definiteness; restart from steepest descent.
            h.iter_mut()
                .enumerate()
                .for_each(|(k, v)| *v = if k % (n + 1) == 0 { 1.0 } else { 0.0 });
            dir = gy.iter().map(|g| -g).collect();
            slope = -dot(&gy, &gy);
        }
        let mut step = 1.0;
        let mut next;
        let mut f_next;
        loop {
            next = y.iter().zip(&dir).map(|(a, b)| a + step * b).collect::<Vec<_>>();
            f_next = f(&next);
            if f_next <= fy + 1e-4 * step * slope {
                break;
            }
            step *= 0.5;
            if step < 1e-20 {
                return Run {
                    value: fy,
                    point: y,
                    converged: norm(&gy) < tol,
                };
            }
        }
        let g_next = grad(&next);
        let s: Vec<f64> = next.iter().zip(&y).map(|(a, b)| a - b).collect();
        let yk: Vec<f64> = g_next.iter().zip(&gy).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &yk);
        if sy > 1e-300 {
            let hy: Vec<f64> = (0..n).map(|i| dot(&h[i * n..(i + 1) * n], &yk)).collect();
            let yhy = dot(&yk, &hy);
            let rho = 1.0 / sy;
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
        }
        y = next;
        fy = f_next;
        gy = g_next;
    }
    Run {
        value: fy,
        converged: fy.is_finite() && norm(&gy) < tol,
        point: y,
    }
}
