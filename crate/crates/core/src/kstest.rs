//! Test of equality of the two marginals from unordered pairs.
//!
//! The statistic is the supremum over `u <= v` of the symmetrized process
//!
//! ```text
//! R(u, v) = sqrt(n) * [ Fn(u, v) + Fn(v, u) - Fn(u, u) - 2 Q(u) Q(v) + Q(u)^2 ]
//! ```
//!
//! where `Fn` is the bivariate ECDF of the (unobservable) ordered pairs and
//! `Q` is the pooled ECDF. For `u <= v` the three `Fn` terms add up to the
//! fraction of pairs with `min <= u` and `max <= v`, whichever coordinate is
//! the smaller one, so the process is computable from unordered data.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pillow::{self, PillowConfig, PillowSample};
use crate::sample::UnorderedPairSample;
use crate::SCHEMA_VERSION;

/// Significance levels reported by [`run_test`].
pub const DEFAULT_ALPHAS: [f64; 3] = [0.1, 0.05, 0.01];

fn check_region(u: f64, v: f64) -> Result<()> {
    if u <= v {
        Ok(())
    } else {
        Err(Error::BadRegion { u, v })
    }
}

/// Fraction of pairs with `min <= u` and `max <= v`.
pub fn sym_ecdf(sample: &UnorderedPairSample, u: f64, v: f64) -> Result<f64> {
    check_region(u, v)?;
    let hits = sample
        .pairs()
        .iter()
        .filter(|&&(lo, hi)| lo <= u && hi <= v)
        .count();
    Ok(hits as f64 / sample.len() as f64)
}

/// The symmetrized process at a single point `u <= v`.
pub fn rns_eval(sample: &UnorderedPairSample, u: f64, v: f64) -> Result<f64> {
    let joint = sym_ecdf(sample, u, v)?;
    let q = sample.pooled_ecdf();
    let (qu, qv) = (q.eval(u), q.eval(v));
    Ok((sample.len() as f64).sqrt() * (joint - 2.0 * qu * qv + qu * qu))
}

/// Supremum of `|R(u, v)|` over `u <= v`.
///
/// The process is a step function with jumps only at pooled sample values,
/// so the supremum is a maximum over pairs of distinct pooled values. Rows
/// `u = w_j` are swept in increasing order while a histogram of pair maxima
/// over pairs with `min <= w_j` is maintained; each row is then one prefix
/// sum, for `O(g^2 + n log n)` time and `O(g + n)` memory with `g` distinct
/// values.
pub fn sup_statistic(sample: &UnorderedPairSample) -> f64 {
    let grid = sample.pooled_grid();
    let w = grid.points();
    let g = w.len();
    let n = sample.len();
    let rank = |x: f64| w.partition_point(|&p| p < x);

    // pairs bucketed by the rank of their minimum, storing the rank of the maximum
    let mut row_start = vec![0usize; g + 1];
    let mut ranked: Vec<(usize, usize)> = sample
        .pairs()
        .iter()
        .map(|&(lo, hi)| (rank(lo), rank(hi)))
        .collect();
    ranked.sort_unstable();
    for &(r, _) in &ranked {
        row_start[r + 1] += 1;
    }
    for j in 0..g {
        row_start[j + 1] += row_start[j];
    }

    // pooled ECDF at each grid point
    let mut pooled = vec![0u64; g];
    for &(lo, hi) in &ranked {
        pooled[lo] += 1;
        pooled[hi] += 1;
    }
    let inv_2n = 1.0 / (2 * n) as f64;
    let mut acc = 0u64;
    let q: Vec<f64> = pooled
        .iter()
        .map(|&c| {
            acc += c;
            acc as f64 * inv_2n
        })
        .collect();

    let inv_n = 1.0 / n as f64;
    let mut max_hist = vec![0u32; g];
    // number of pairs with min <= w_j and max < w_j
    let mut below = 0u64;
    let mut best = 0.0f64;
    for j in 0..g {
        for &(_, hi) in &ranked[row_start[j]..row_start[j + 1]] {
            max_hist[hi] += 1;
        }
        let qu = q[j];
        let mut joint = below;
        for k in j..g {
            joint += max_hist[k] as u64;
            let val = joint as f64 * inv_n - qu * (2.0 * q[k] - qu);
            best = best.max(val.abs());
        }
        below += max_hist[j] as u64;
    }
    (n as f64).sqrt() * best
}

/// Reported quantile of the reference distribution and the resulting decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelDecision {
    pub alpha: f64,
    pub quantile: f64,
    /// `statistic > quantile`.
    pub reject: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub schema_version: u32,
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
    pub pillow_m: usize,
    pub pillow_reps: usize,
    pub seed: u64,
    pub quantiles: Vec<LevelDecision>,
}

/// Add-one Monte Carlo p-value: `(1 + #{replicates >= statistic}) / (reps + 1)`.
pub fn monte_carlo_p_value(statistic: f64, reference: &PillowSample) -> f64 {
    let values = reference.sup_values();
    let at_least = values.len() - values.partition_point(|&v| v < statistic);
    (1 + at_least) as f64 / (values.len() + 1) as f64
}

/// Builds a report from a statistic and an already generated reference.
pub fn report_from_reference(
    statistic: f64,
    n: usize,
    reference: &PillowSample,
    alphas: &[f64],
) -> Result<TestReport> {
    let table = pillow::quantiles(reference, alphas)?;
    let cfg = reference.config();
    Ok(TestReport {
        schema_version: SCHEMA_VERSION,
        statistic,
        p_value: monte_carlo_p_value(statistic, reference),
        n,
        pillow_m: cfg.m,
        pillow_reps: cfg.reps,
        seed: cfg.seed,
        quantiles: table
            .rows()
            .iter()
            .map(|row| LevelDecision {
                alpha: row.alpha,
                quantile: row.quantile,
                reject: statistic > row.quantile,
            })
            .collect(),
    })
}

/// Computes the statistic and compares it against the pillow reference,
/// loading or storing the reference in `cache_dir` when given.
pub fn run_test(
    sample: &UnorderedPairSample,
    pillow_cfg: &PillowConfig,
    alphas: &[f64],
    cache_dir: Option<&Path>,
) -> Result<TestReport> {
    let statistic = sup_statistic(sample);
    let reference = match cache_dir {
        Some(dir) => pillow::load_or_generate(pillow_cfg, dir)?.0,
        None => pillow::generate(pillow_cfg)?,
    };
    report_from_reference(statistic, sample.len(), &reference, alphas)
}
