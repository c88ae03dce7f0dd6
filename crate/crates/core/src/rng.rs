//! Keyed, counter-based random streams indexed by finite integer paths.
//!
//! A [`StreamKey`] names one element `θ` of `∪ₙ ℤⁿ`. Every value drawn from a
//! key is a pure function of `(root_seed, path, slot, coordinate)`, so results
//! do not depend on generation order or on how work is split across threads.
//!
//! Mixing scheme (stable within this crate version):
//!
//! * `mix(z)` is the SplitMix64 finalizer
//!   `z ^= z >> 30; z *= 0xBF58476D1CE4E5B9; z ^= z >> 27; z *= 0x94D049BB133111EB; z ^= z >> 31`.
//! * root state: `a = mix(seed ^ 0x243F6A8885A308D3)`,
//!   `b = mix(seed + 0x9E3779B97F4A7C15 ^ 0x13198A2E03707344)`.
//! * `derive(c)`: `h = mix(c * 0x9E3779B97F4A7C15 ^ 0xA4093822299F31D0)`, then
//!   `a' = mix(a ^ h) + b`, `b' = mix(rotl(b + h, 23) ^ a)`.
//! * value `(slot, i)`: `c = a ^ (mix(slot ^ 0xA0761D6478BD642F) + i * 0x9E3779B97F4A7C15)`,
//!   bits `= mix(mix(c) ^ b)`.
//! * uniform: `((bits >> 11) + 0.5) · 2⁻⁵³`, which lies in the open interval (0, 1).
//! * normal: inverse standard normal CDF of the uniform for coordinate `i`.
//!
//! All arithmetic is wrapping 64-bit. Not suitable for cryptographic use.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::model::CostLedger;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Identifier of one independent random source.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct StreamKey {
    root_seed: u64,
    path: Vec<i64>,
    state: [u64; 2],
}

impl StreamKey {
    /// Root key with an empty path.
    pub fn new(root_seed: u64) -> Self {
        let a = mix(root_seed ^ 0x243F_6A88_85A3_08D3);
        let b = mix(root_seed.wrapping_add(GOLDEN) ^ 0x1319_8A2E_0370_7344);
        Self {
            root_seed,
            path: Vec::new(),
            state: [a, b],
        }
    }

    /// Root key extended by every component of `path`, in order.
    pub fn with_path(root_seed: u64, path: &[i64]) -> Self {
        path.iter().fold(Self::new(root_seed), |k, &c| k.derive(c))
    }

    pub fn root_seed(&self) -> u64 {
        self.root_seed
    }

    pub fn path(&self) -> &[i64] {
        &self.path
    }

    /// Child key whose path is this key's path followed by `component`.
    pub fn derive(&self, component: i64) -> StreamKey {
        let [a, b] = self.state;
        let h = mix((component as u64).wrapping_mul(GOLDEN) ^ 0xA409_3822_299F_31D0);
        let na = mix(a ^ h).wrapping_add(b);
        let nb = mix(b.wrapping_add(h).rotate_left(23) ^ a);
        let mut path = Vec::with_capacity(self.path.len() + 1);
        path.extend_from_slice(&self.path);
        path.push(component);
        StreamKey {
            root_seed: self.root_seed,
            path,
            state: [na, nb],
        }
    }

    #[inline]
    fn bits(&self, slot: u64, index: u64) -> u64 {
        let [a, b] = self.state;
        let c = a ^ mix(slot ^ 0xA076_1D64_78BD_642F).wrapping_add(index.wrapping_mul(GOLDEN));
        mix(mix(c) ^ b)
    }

    #[inline]
    fn open_uniform(&self, slot: u64, index: u64) -> f64 {
        ((self.bits(slot, index) >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform variate for `slot`; adds one scalar draw to `ledger`.
    pub fn uniform01(&self, slot: u64, ledger: &mut CostLedger) -> f64 {
        ledger.scalar_draws += 1;
        self.open_uniform(slot, 0)
    }

    /// `d` independent standard normals for `slot`; adds `d` scalar draws.
    pub fn gaussian_vector(&self, slot: u64, d: usize, ledger: &mut CostLedger) -> GaussianVector {
        let mut values = vec![0.0; d];
        self.fill_gaussian(slot, &mut values, ledger);
        GaussianVector(values)
    }

    /// Writes the Gaussian vector for `slot` into `out` without allocating.
    pub fn fill_gaussian(&self, slot: u64, out: &mut [f64], ledger: &mut CostLedger) {
        let normal = Normal::standard();
        for (i, v) in out.iter_mut().enumerate() {
            *v = normal.inverse_cdf(self.open_uniform(slot, i as u64));
        }
        ledger.scalar_draws += out.len() as u64;
    }
}

/// A vector of independent standard normal values.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianVector(Vec<f64>);

impl GaussianVector {
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("draw", "empty Gaussian vector"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite("Gaussian vector"));
        }
        Ok(GaussianVector(values))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn correlation(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn derive_is_deterministic_and_extends_path() {
        let k = StreamKey::new(42);
        assert_eq!(k.derive(3), k.derive(3));
        assert_ne!(k.derive(3), k.derive(-3));
        let kk = k.derive(1).derive(2);
        assert_eq!(kk.path(), &[1, 2]);
        assert_eq!(kk, StreamKey::with_path(42, &[1, 2]));
        assert_ne!(StreamKey::new(1).derive(0), StreamKey::new(2).derive(0));
    }

    #[test]
    fn sibling_streams_are_decorrelated() {
        let k = StreamKey::new(7);
        let mut ledger = CostLedger::ZERO;
        let pos = k.derive(3);
        let neg = k.derive(-3);
        let n = 100_000;
        let a: Vec<f64> = (0..n).map(|s| pos.uniform01(s, &mut ledger)).collect();
        let b: Vec<f64> = (0..n).map(|s| neg.uniform01(s, &mut ledger)).collect();
        assert!(correlation(&a, &b).abs() < 0.01);
        // Same slot across many sibling keys.
        let a: Vec<f64> = (0..n as i64).map(|i| k.derive(i).uniform01(0, &mut ledger)).collect();
        let b: Vec<f64> = (0..n as i64).map(|i| k.derive(i + 1).uniform01(0, &mut ledger)).collect();
        assert!(correlation(&a, &b).abs() < 0.01);
    }

    #[test]
    fn uniform_is_keyed_and_counted() {
        let k = StreamKey::with_path(5, &[0, -1]);
        let mut ledger = CostLedger::ZERO;
        assert_eq!(k.uniform01(9, &mut ledger), k.uniform01(9, &mut ledger));
        assert_eq!(ledger.scalar_draws, 2);

        let n = 100_000;
        let mean = (0..n).map(|s| k.uniform01(s, &mut ledger)).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.005, "mean {mean}");

        let root = StreamKey::new(11);
        let equal = (0..100)
            .filter(|&i| root.derive(2 * i).uniform01(0, &mut ledger) == root.derive(2 * i + 1).uniform01(0, &mut ledger))
            .count();
        assert_eq!(equal, 0);
    }

    #[test]
    fn uniforms_pass_kolmogorov_smirnov() {
        let k = StreamKey::new(2024).derive(1);
        let mut ledger = CostLedger::ZERO;
        let n = 10_000;
        let mut u: Vec<f64> = (0..n).map(|s| k.uniform01(s, &mut ledger)).collect();
        u.sort_by(f64::total_cmp);
        let nf = n as f64;
        let stat = u
            .iter()
            .enumerate()
            .map(|(i, &v)| (v - i as f64 / nf).max((i + 1) as f64 / nf - v))
            .fold(0.0, f64::max);
        // Asymptotic 1% critical value 1.628 / √n.
        assert!(stat < 1.628 / nf.sqrt(), "KS statistic {stat}");
    }

    #[test]
    fn gaussian_vector_contract() {
        let k = StreamKey::new(1).derive(4);
        let mut ledger = CostLedger::ZERO;
        let a = k.gaussian_vector(1, 7, &mut ledger);
        assert_eq!(ledger.scalar_draws, 7);
        assert_eq!(a, k.gaussian_vector(1, 7, &mut ledger));
        assert_eq!(a.len(), 7);

        let big = k.gaussian_vector(1, 100_000, &mut ledger);
        let v = big.as_slice();
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((0.98..=1.02).contains(&var), "variance {var}");
        assert!(v.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn generation_order_does_not_matter() {
        let root = StreamKey::new(99);
        let mut ledger = CostLedger::ZERO;
        let forward: Vec<f64> = (0..64).map(|i| root.derive(i).uniform01(0, &mut ledger)).collect();
        let mut backward: Vec<f64> = (0..64).rev().map(|i| root.derive(i).uniform01(0, &mut ledger)).collect();
        backward.reverse();
        assert_eq!(forward, backward);
    }

    #[test]
    fn gaussian_vector_rejects_non_finite() {
        assert!(GaussianVector::from_values(vec![0.0, f64::NAN]).is_err());
        assert!(GaussianVector::from_values(vec![]).is_err());
    }
}
