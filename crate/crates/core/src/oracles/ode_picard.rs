//! Deterministic Picard iterates `v₀ ≡ 0`, `vₖ(s) = g₀ + ∫₀ˢ f(vₖ₋₁(r)) dr` of
//! the x-independent equation `u' = f(u)`, `u(0) = g₀`.
//!
//! Each iterate is stored by its values at Chebyshev-Lobatto nodes of a set of
//! panels covering `[0, t]`; integration is exact for the panel interpolant.
//! The panel count doubles until the result changes by less than 1e-12.

use std::f64::consts::PI;

use crate::error::{Error, Result};

const DEGREE: usize = 24;
const TOLERANCE: f64 = 1e-12;
const MAX_PANELS: usize = 1024;

/// `S[i][j]` maps values at the nodes `xⱼ = −cos(jπ/p)` to `∫₋₁^{xᵢ}`.
fn integration_matrix(p: usize) -> Vec<Vec<f64>> {
    let theta: Vec<f64> = (0..=p).map(|j| PI - j as f64 * PI / p as f64).collect();
    let mut s = vec![vec![0.0; p + 1]; p + 1];
    for j in 0..=p {
        // Chebyshev coefficients of the cardinal function at node j.
        let edge = if j == 0 || j == p { 0.5 } else { 1.0 };
        let c: Vec<f64> = (0..=p)
            .map(|k| {
                let end = if k == 0 || k == p { 0.5 } else { 1.0 };
                end * 2.0 / p as f64 * edge * (k as f64 * theta[j]).cos()
            })
            .collect();
        // Antiderivative coefficients.
        let mut big = vec![0.0; p + 2];
        for (k, &ck) in c.iter().enumerate() {
            match k {
                0 => big[1] += ck,
                1 => big[2] += ck / 4.0,
                _ => {
                    big[k + 1] += ck / (2.0 * (k + 1) as f64);
                    big[k - 1] -= ck / (2.0 * (k - 1) as f64);
                }
            }
        }
        let at_minus_one: f64 = big.iter().enumerate().map(|(k, b)| if k % 2 == 0 { *b } else { -*b }).sum();
        for i in 0..=p {
            let v: f64 = big.iter().enumerate().map(|(k, b)| b * (k as f64 * theta[i]).cos()).sum();
            s[i][j] = v - at_minus_one;
        }
    }
    s
}

fn iterate_on_panels(f: &dyn Fn(f64) -> f64, g0: f64, t: f64, n: u32, panels: usize, s: &[Vec<f64>]) -> f64 {
    let p = s.len() - 1;
    let width = t / panels as f64;
    let mut current = vec![0.0; panels * (p + 1)];
    let mut next = vec![0.0; panels * (p + 1)];
    for _ in 0..n {
        let mut base = g0;
        for q in 0..panels {
            let rows = q * (p + 1)..(q + 1) * (p + 1);
            let integrand: Vec<f64> = current[rows.clone()].iter().map(|&v| f(v)).collect();
            for (i, out) in next[rows].iter_mut().enumerate() {
                *out = base + 0.5 * width * s[i].iter().zip(&integrand).map(|(a, b)| a * b).sum::<f64>();
            }
            base = next[q * (p + 1) + p];
        }
        std::mem::swap(&mut current, &mut next);
    }
    current[panels * (p + 1) - 1]
}

/// `vₙ(t)` for the Picard iterates of `u' = f(u)`, `u(0) = g0`.
pub fn ode_picard_oracle(f: &dyn Fn(f64) -> f64, g0: f64, t: f64, n: u32) -> Result<f64> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::invalid("t", "need finite t >= 0"));
    }
    if !g0.is_finite() {
        return Err(Error::non_finite("initial value"));
    }
    if n == 0 {
        return Ok(0.0);
    }
    if t == 0.0 {
        return Ok(g0);
    }
    let s = integration_matrix(DEGREE);
    let mut panels = 1;
    let mut previous = iterate_on_panels(f, g0, t, n, panels, &s);
    while panels < MAX_PANELS {
        panels *= 2;
        let refined = iterate_on_panels(f, g0, t, n, panels, &s);
        if !refined.is_finite() {
            return Err(Error::non_finite("Picard iterate"));
        }
        if (refined - previous).abs() <= TOLERANCE * refined.abs().max(1.0) {
            return Ok(refined);
        }
        previous = refined;
    }
    Ok(previous)
}
