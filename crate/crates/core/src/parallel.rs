//! Order-preserving evaluation of independent keyed summands.
//!
//! Values are always reduced in index order, so a parallel run and a serial
//! run produce bit-identical sums.

use rayon::prelude::*;

use crate::error::Result;
use crate::model::CostLedger;

const BLOCK: u64 = 1024;

/// Streaming mean `mₖ = mₖ₋₁ + (vₖ − mₖ₋₁)/k`. Exact when all values are equal.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct RunningMean {
    mean: f64,
    count: u64,
}

impl RunningMean {
    #[inline]
    pub fn push(&mut self, v: f64) {
        self.count += 1;
        self.mean += (v - self.mean) / self.count as f64;
    }

    pub fn value(&self) -> f64 {
        self.mean
    }
}

/// Welford accumulator for mean and unbiased variance.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct Welford {
    mean: f64,
    m2: f64,
    count: u64,
}

impl Welford {
    #[inline]
    pub fn push(&mut self, v: f64) {
        self.count += 1;
        let delta = v - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (v - self.mean);
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }
}

/// Evaluates `summand(i)` for `i in 0..count` and feeds the values to `sink`
/// in index order. Returns the merged ledger of all summands.
pub(crate) fn ordered_map<F, S>(count: u64, parallel: bool, summand: F, mut sink: S) -> Result<CostLedger>
where
    F: Fn(u64, &mut CostLedger) -> Result<f64> + Sync,
    S: FnMut(f64),
{
    let mut ledger = CostLedger::ZERO;
    if !parallel || count < 2 {
        for i in 0..count {
            sink(summand(i, &mut ledger)?);
        }
        return Ok(ledger);
    }
    let mut start = 0;
    while start < count {
        let end = (start + BLOCK).min(count);
        let block: Vec<Result<(f64, CostLedger)>> = (start..end)
            .into_par_iter()
            .map(|i| {
                let mut local = CostLedger::ZERO;
                summand(i, &mut local).map(|v| (v, local))
            })
            .collect();
        for item in block {
            let (v, local) = item?;
            ledger += local;
            sink(v);
        }
        start = end;
    }
    Ok(ledger)
}
