//! Deterministic fixed-point solver for `u = Φ(u)` in one space dimension,
//!
//! ```text
//! Φ(u)(t, x) = E[g(x + √2 W_t)] + ∫₀ᵗ E[f(u(s, x + √2 W_{t−s}))] ds,
//! ```
//!
//! with Gauss-Hermite quadrature for the Gaussian expectations, four-point
//! Lagrange interpolation on a uniform space grid (constant extrapolation
//! outside it), and the trapezoid rule in time.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::num::NonZeroUsize;

use gauss_quad::GaussHermite;

use crate::error::{Error, Result};
use crate::model::SemilinearProblem;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureGrid {
    pub time_steps: usize,
    /// Number of space points; odd counts put a node at `x = 0`.
    pub space_points: usize,
    pub space_radius: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureOptions {
    pub grid: QuadratureGrid,
    pub picard_iters: usize,
    /// Sup-norm distance between successive iterates that counts as converged.
    pub tolerance: f64,
    pub hermite_nodes: usize,
}

impl QuadratureOptions {
    pub fn new(grid: QuadratureGrid, picard_iters: usize) -> Self {
        Self {
            grid,
            picard_iters,
            tolerance: 1e-9,
            hermite_nodes: 64,
        }
    }
}

/// Solution values `values[i][j] ≈ u(times[i], xs[j])`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    pub times: Vec<f64>,
    pub xs: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub iterations: usize,
    pub residual: f64,
}

impl GridFunction {
    /// Interpolated value at time row `time_index` and position `x`.
    pub fn value_at(&self, time_index: usize, x: f64) -> f64 {
        let row = &self.values[time_index];
        if self.xs.len() == 1 {
            return row[0];
        }
        let spacing = self.xs[1] - self.xs[0];
        let stencil = Stencil::new((x - self.xs[0]) / spacing);
        stencil.apply(row, 0)
    }

    /// Value at the final time `T`.
    pub fn final_value(&self, x: f64) -> f64 {
        self.value_at(self.times.len() - 1, x)
    }
}

/// Four-point Lagrange weights at fractional grid position `p`.
struct Stencil {
    base: i64,
    weights: [f64; 4],
}

impl Stencil {
    fn new(p: f64) -> Self {
        let base = p.floor();
        let s = p - base;
        let weights = [
            -s * (s - 1.0) * (s - 2.0) / 6.0,
            (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0,
            -(s + 1.0) * s * (s - 2.0) / 2.0,
            (s + 1.0) * s * (s - 1.0) / 6.0,
        ];
        Self {
            base: base as i64,
            weights,
        }
    }

    fn offsets(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.weights.iter().enumerate().map(move |(a, &w)| (self.base - 1 + a as i64, w))
    }

    fn apply(&self, row: &[f64], at: i64) -> f64 {
        let last = row.len() as i64 - 1;
        self.offsets().map(|(o, w)| w * row[(at + o).clamp(0, last) as usize]).sum()
    }
}

/// Heat-kernel expectation `x ↦ E[h(x + √2 W_τ)]` on the grid as a sparse
/// list of (index offset, weight) pairs.
fn kernel(tau: f64, spacing: f64, nodes: &[(f64, f64)], single_point: bool) -> Vec<(i64, f64)> {
    if tau == 0.0 || single_point {
        return vec![(0, 1.0)];
    }
    let mut merged: BTreeMap<i64, f64> = BTreeMap::new();
    let scale = 2.0 * tau.sqrt() / spacing;
    for &(xi, w) in nodes {
        let st = Stencil::new(scale * xi);
        for (o, lw) in st.offsets() {
            *merged.entry(o).or_insert(0.0) += w / PI.sqrt() * lw;
        }
    }
    merged.into_iter().collect()
}

fn apply_kernel(k: &[(i64, f64)], row: &[f64], out: &mut [f64], weight: f64) {
    let last = row.len() as i64 - 1;
    for (j, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for &(off, w) in k {
            acc += w * row[(j as i64 + off).clamp(0, last) as usize];
        }
        *o += weight * acc;
    }
}

/// Iterates `u ← Φ(u)` from `u ≡ 0` on the grid `[0, T] × [−R, R]`.
pub fn quadrature_fixed_point_1d(problem: &SemilinearProblem, options: &QuadratureOptions) -> Result<GridFunction> {
    if problem.dimension() != 1 {
        return Err(Error::invalid("d", "quadrature oracle needs d = 1"));
    }
    if !problem.diffusion().is_heat() {
        return Err(Error::invalid("diffusion", "quadrature oracle needs the heat diffusion"));
    }
    let QuadratureGrid {
        time_steps,
        space_points,
        space_radius,
    } = options.grid;
    if time_steps == 0 || space_points == 0 {
        return Err(Error::invalid("grid", "need at least one time step and one space point"));
    }
    if !(space_radius >= 0.0 && space_radius.is_finite()) || (space_points > 1 && space_radius == 0.0) {
        return Err(Error::invalid("grid", "space radius must be positive"));
    }
    let hermite = NonZeroUsize::new(options.hermite_nodes).ok_or_else(|| Error::invalid("hermite_nodes", "need at least one node"))?;
    let nodes: Vec<(f64, f64)> = GaussHermite::new(hermite).as_node_weight_pairs().to_vec();

    let horizon = problem.horizon();
    let dt = horizon / time_steps as f64;
    let times: Vec<f64> = (0..=time_steps).map(|i| i as f64 * dt).collect();
    let xs: Vec<f64> = if space_points == 1 {
        vec![0.0]
    } else {
        (0..space_points)
            .map(|j| -space_radius + 2.0 * space_radius * j as f64 / (space_points - 1) as f64)
            .collect()
    };
    let spacing = if space_points > 1 { xs[1] - xs[0] } else { 1.0 };
    let single = space_points == 1;
    let kernels: Vec<Vec<(i64, f64)>> = times.iter().map(|&tau| kernel(tau, spacing, &nodes, single)).collect();

    // The g part of Φ does not depend on u; g is evaluated off-grid exactly.
    let g = problem.initial_value();
    let free: Vec<Vec<f64>> = times
        .iter()
        .map(|&t| {
            xs.iter()
                .map(|&x| {
                    if t == 0.0 {
                        g.eval(&[x])
                    } else {
                        nodes.iter().map(|&(xi, w)| w * g.eval(&[x + 2.0 * t.sqrt() * xi])).sum::<f64>() / PI.sqrt()
                    }
                })
                .collect()
        })
        .collect();

    let f = problem.nonlinearity();
    let mut u = vec![vec![0.0; xs.len()]; times.len()];
    let mut residual = f64::INFINITY;
    for iteration in 1..=options.picard_iters {
        let forced: Vec<Vec<f64>> = u.iter().map(|row| row.iter().map(|&v| f.eval(v)).collect()).collect();
        let mut next = free.clone();
        for i in 1..=time_steps {
            for l in 0..=i {
                let w = if l == 0 || l == i { 0.5 * dt } else { dt };
                apply_kernel(&kernels[i - l], &forced[l], &mut next[i], w);
            }
        }
        residual = next
            .iter()
            .zip(&u)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max);
        if !residual.is_finite() {
            return Err(Error::non_finite("quadrature Picard iterate"));
        }
        u = next;
        if residual < options.tolerance {
            return Ok(GridFunction {
                times,
                xs,
                values: u,
                iterations: iteration,
                residual,
            });
        }
    }
    Err(Error::NonConvergence {
        method: "quadrature fixed point",
        best: u[time_steps][xs.len() / 2],
        detail: format!("residual {residual:e} after {} iterations", options.picard_iters),
    })
}
