//! Data generators and Monte Carlo studies for the estimators and the test.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{self, asymptotic_sd, Branch, MarginalEstimate};
use crate::kstest::sup_statistic;
use crate::pillow::{upper_quantile_index, PillowSample};
use crate::sample::{EvalGrid, UnorderedPairSample};
use crate::seed::{stream_rng, stream_seed, StreamRng};
use crate::special::beta_inc;
use crate::SCHEMA_VERSION;

/// Tolerance of the bisection used to invert the Beta CDF.
const BISECTION_TOL: f64 = 1e-10;

/// A continuous distribution on `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GeneratorSpec {
    Uniform,
    /// CDF `x^k`.
    Power { k: f64 },
    Beta { a: f64, b: f64 },
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            GeneratorSpec::Uniform => true,
            GeneratorSpec::Power { k } => k > 0.0 && k.is_finite(),
            GeneratorSpec::Beta { a, b } => a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("generator parameters must be positive: {self:?}")))
        }
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        let x = x.clamp(0.0, 1.0);
        match *self {
            GeneratorSpec::Uniform => Ok(x),
            GeneratorSpec::Power { k } => Ok(x.powf(k)),
            GeneratorSpec::Beta { a, b } => beta_inc(a, b, x),
        }
    }

    /// Inverse CDF at `p` in `[0, 1]`.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        match *self {
            GeneratorSpec::Uniform => Ok(p),
            GeneratorSpec::Power { k } => Ok(p.powf(1.0 / k)),
            GeneratorSpec::Beta { .. } => {
                let (mut lo, mut hi) = (0.0f64, 1.0f64);
                while hi - lo > BISECTION_TOL {
                    let mid = 0.5 * (lo + hi);
                    if self.cdf(mid)? < p {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                Ok(0.5 * (lo + hi))
            }
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        self.quantile(rng.random::<f64>())
    }
}

/// CDF of `g` at `x`.
pub fn true_cdf(g: &GeneratorSpec, x: f64) -> Result<f64> {
    g.cdf(x)
}

/// Draws `X ~ g1` then `Y ~ g2` independently and returns `(min, max)`.
pub fn sample_unordered_pair<R: Rng + ?Sized>(
    g1: &GeneratorSpec,
    g2: &GeneratorSpec,
    rng: &mut R,
) -> Result<(f64, f64)> {
    let x = g1.draw(rng)?;
    let y = g2.draw(rng)?;
    Ok(if x <= y { (x, y) } else { (y, x) })
}

pub fn sample_pairs<R: Rng + ?Sized>(
    g1: &GeneratorSpec,
    g2: &GeneratorSpec,
    n: usize,
    rng: &mut R,
) -> Result<UnorderedPairSample> {
    let rows = (0..n)
        .map(|_| sample_unordered_pair(g1, g2, rng))
        .collect::<Result<Vec<_>>>()?;
    UnorderedPairSample::from_rows(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySpec {
    pub gen1: GeneratorSpec,
    pub gen2: GeneratorSpec,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub grid: EvalGrid,
    /// Interval on which sup errors are measured.
    pub s_interval: Option<(f64, f64)>,
}

impl StudySpec {
    pub fn validate(&self) -> Result<()> {
        self.gen1.validate()?;
        self.gen2.validate()?;
        if self.n < 1 || self.reps < 1 {
            return Err(Error::InvalidConfig("study needs n >= 1 and reps >= 1".into()));
        }
        if let Some((lo, hi)) = self.s_interval {
            if !(lo < hi) {
                return Err(Error::InvalidConfig(format!("separation interval needs lo < hi, got [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    fn rng(&self, rep: usize) -> StreamRng {
        stream_rng(self.seed, rep as u64)
    }

    fn draw_sample(&self, rep: usize) -> Result<UnorderedPairSample> {
        sample_pairs(&self.gen1, &self.gen2, self.n, &mut self.rng(rep))
    }

    /// `(min(F1, F2), max(F1, F2))` at `x`.
    pub fn true_min_max(&self, x: f64) -> Result<(f64, f64)> {
        let (a, b) = (self.gen1.cdf(x)?, self.gen2.cdf(x)?);
        Ok((a.min(b), a.max(b)))
    }
}

/// Exact `sup |G1n - G1|` and `sup |G2n - G2|` over `[lo, hi]`.
///
/// The estimates are constant between pooled sample values and the targets
/// are continuous and nondecreasing, so on each piece the error is largest
/// at one of its two ends.
pub fn sup_errors_on_interval(
    sample: &UnorderedPairSample,
    truth: impl Fn(f64) -> Result<(f64, f64)>,
    lo: f64,
    hi: f64,
) -> Result<(f64, f64)> {
    let (min_ecdf, max_ecdf) = sample.min_max_ecdfs();
    let n = sample.len();
    let mut cuts: Vec<f64> = sample
        .pooled_values()
        .into_iter()
        .filter(|&x| x > lo && x <= hi)
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    let mut starts = Vec::with_capacity(cuts.len() + 1);
    starts.push(lo);
    starts.extend_from_slice(&cuts);
    let mut ends = cuts;
    ends.push(hi);

    let (mut e1, mut e2) = (0.0f64, 0.0f64);
    for (&a, &b) in starts.iter().zip(&ends) {
        let (g1, g2, _, _) = estimator::estimate_from_counts(min_ecdf.count_le(a), max_ecdf.count_le(a), n);
        for x in [a, b] {
            let (t1, t2) = truth(x)?;
            e1 = e1.max((g1 - t1).abs());
            e2 = e2.max((g2 - t2).abs());
        }
    }
    Ok((e1, e2))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub spec: StudySpec,
    /// Per-rep sup errors on the separation interval (empty without one).
    pub sup_err_g1: Vec<f64>,
    pub sup_err_g2: Vec<f64>,
    pub mean_g1: Vec<f64>,
    pub mean_g2: Vec<f64>,
    pub true_g1: Vec<f64>,
    pub true_g2: Vec<f64>,
    pub truncation_freq: Vec<f64>,
    pub curves: Vec<MarginalEstimate>,
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[mid] } else { 0.5 * (v[mid - 1] + v[mid]) })
}

impl StudyResult {
    pub fn median_sup_errors(&self) -> Option<(f64, f64)> {
        Some((median(&self.sup_err_g1)?, median(&self.sup_err_g2)?))
    }

    /// Long format: `rep,x,g1,g2,truncated`.
    pub fn write_curves_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "rep,x,g1,g2,truncated")?;
        for (rep, est) in self.curves.iter().enumerate() {
            for (j, &x) in est.grid.points().iter().enumerate() {
                writeln!(out, "{rep},{x},{},{},{}", est.g1[j], est.g2[j], est.truncated[j])?;
            }
        }
        Ok(())
    }

    pub fn summary_json(&self) -> serde_json::Value {
        let medians = self.median_sup_errors();
        serde_json::json!({
            "schema_version": SCHEMA_VERSION,
            "spec": self.spec,
            "median_sup_err_g1": medians.map(|m| m.0),
            "median_sup_err_g2": medians.map(|m| m.1),
            "sup_err_g1": self.sup_err_g1,
            "sup_err_g2": self.sup_err_g2,
            "grid": self.spec.grid,
            "mean_g1": self.mean_g1,
            "mean_g2": self.mean_g2,
            "true_g1": self.true_g1,
            "true_g2": self.true_g2,
            "truncation_freq": self.truncation_freq,
        })
    }
}

/// Draws `reps` samples, estimates on `spec.grid` and records sup errors on
/// `spec.s_interval`.
pub fn run_estimation_study(spec: &StudySpec) -> Result<StudyResult> {
    spec.validate()?;
    let per_rep: Vec<(MarginalEstimate, Option<(f64, f64)>)> = (0..spec.reps)
        .into_par_iter()
        .map(|rep| {
            let sample = spec.draw_sample(rep)?;
            let est = estimator::estimate_marginals(&sample, &spec.grid);
            let errs = match spec.s_interval {
                Some((lo, hi)) => Some(sup_errors_on_interval(&sample, |x| spec.true_min_max(x), lo, hi)?),
                None => None,
            };
            Ok((est, errs))
        })
        .collect::<Result<_>>()?;

    let g = spec.grid.len();
    let reps = spec.reps as f64;
    let mut mean_g1 = vec![0.0; g];
    let mut mean_g2 = vec![0.0; g];
    let mut truncation_freq = vec![0.0; g];
    for (est, _) in &per_rep {
        for j in 0..g {
            mean_g1[j] += est.g1[j] / reps;
            mean_g2[j] += est.g2[j] / reps;
            if est.truncated[j] {
                truncation_freq[j] += 1.0;
            }
        }
    }
    for f in &mut truncation_freq {
        *f /= reps;
    }
    let (true_g1, true_g2): (Vec<f64>, Vec<f64>) = spec
        .grid
        .points()
        .iter()
        .map(|&x| spec.true_min_max(x))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    let (sup_err_g1, sup_err_g2) = per_rep.iter().filter_map(|(_, e)| *e).unzip();
    Ok(StudyResult {
        spec: spec.clone(),
        sup_err_g1,
        sup_err_g2,
        mean_g1,
        mean_g2,
        true_g1,
        true_g2,
        truncation_freq,
        curves: per_rep.into_iter().map(|(e, _)| e).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CltCheck {
    pub x0: f64,
    /// Empirical variance of `sqrt(n) (G1n(x0) - G1(x0))` across reps.
    pub var_lower: f64,
    pub var_upper: f64,
    /// Delta-method variances from [`asymptotic_sd`].
    pub predicted_var_lower: f64,
    pub predicted_var_upper: f64,
}

fn sample_variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)
}

pub fn run_clt_check(spec: &StudySpec, x0: f64) -> Result<CltCheck> {
    spec.validate()?;
    let (t1, t2) = spec.true_min_max(x0)?;
    let (s, t) = estimator::forward_minmax(spec.gen1.cdf(x0)?, spec.gen2.cdf(x0)?)?;
    let predicted_var_lower = asymptotic_sd(s, t, Branch::Lower)?.powi(2);
    let predicted_var_upper = asymptotic_sd(s, t, Branch::Upper)?.powi(2);
    let root_n = (spec.n as f64).sqrt();
    let devs: Vec<(f64, f64)> = (0..spec.reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = spec.rng(rep);
            let (mut lo, mut hi) = (0usize, 0usize);
            for _ in 0..spec.n {
                let (u, v) = sample_unordered_pair(&spec.gen1, &spec.gen2, &mut rng)?;
                lo += (u <= x0) as usize;
                hi += (v <= x0) as usize;
            }
            let (g1, g2, _, _) = estimator::estimate_from_counts(lo, hi, spec.n);
            Ok((root_n * (g1 - t1), root_n * (g2 - t2)))
        })
        .collect::<Result<_>>()?;
    let (lower, upper): (Vec<f64>, Vec<f64>) = devs.into_iter().unzip();
    Ok(CltCheck {
        x0,
        var_lower: sample_variance(&lower),
        var_upper: sample_variance(&upper),
        predicted_var_lower,
        predicted_var_upper,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizePowerResult {
    pub alpha: f64,
    /// Reference quantile; `None` when `alpha <= 0` (never reject).
    pub threshold: Option<f64>,
    pub rejections: usize,
    pub reps: usize,
    pub rejection_rate: f64,
    pub statistics: Vec<f64>,
}

impl SizePowerResult {
    pub fn to_json(&self, spec: &StudySpec, reference: &PillowSample) -> serde_json::Value {
        serde_json::json!({
            "schema_version": SCHEMA_VERSION,
            "spec": spec,
            "pillow": reference.config(),
            "alpha": self.alpha,
            "threshold": self.threshold,
            "rejections": self.rejections,
            "reps": self.reps,
            "rejection_rate": self.rejection_rate,
        })
    }
}

/// Fraction of simulated samples whose statistic exceeds the upper
/// `alpha` quantile of `reference`.
pub fn run_size_power_study(spec: &StudySpec, alpha: f64, reference: &PillowSample) -> Result<SizePowerResult> {
    spec.validate()?;
    if !(alpha < 1.0) || alpha.is_nan() {
        return Err(Error::InvalidConfig(format!("alpha must be below 1, got {alpha}")));
    }
    let threshold = (alpha > 0.0).then(|| {
        let values = reference.sup_values();
        values[upper_quantile_index(alpha, values.len()) - 1]
    });
    let statistics: Vec<f64> = (0..spec.reps)
        .into_par_iter()
        .map(|rep| Ok(sup_statistic(&spec.draw_sample(rep)?)))
        .collect::<Result<_>>()?;
    let rejections = match threshold {
        Some(q) => statistics.iter().filter(|&&s| s > q).count(),
        None => 0,
    };
    Ok(SizePowerResult {
        alpha,
        threshold,
        rejections,
        reps: spec.reps,
        rejection_rate: rejections as f64 / spec.reps as f64,
        statistics,
    })
}

/// One rung of the shrinking-separation ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShrinkingRow {
    pub n: usize,
    /// Exponent `k` of the power alternative `x^k`.
    pub power: f64,
    /// Gap threshold defining the shrinking region: half the maximal gap.
    pub gap_threshold: f64,
    pub s_lo: f64,
    pub s_hi: f64,
    pub median_sup_err_g1: f64,
    pub median_sup_err_g2: f64,
    /// Fraction of (rep, grid point in region) with a truncated discriminant.
    pub truncation_freq: f64,
}

/// Superlevel set `{x : x - x^k >= threshold}` of the concave gap on
/// `[0, 1]`, located by bisection either side of the maximizer.
fn gap_region(k: f64) -> (f64, f64, f64) {
    let gap = |x: f64| x - x.powf(k);
    let peak = (1.0 / k).powf(1.0 / (k - 1.0));
    let threshold = 0.5 * gap(peak);
    let solve = |mut inside: f64, mut outside: f64| {
        for _ in 0..100 {
            let mid = 0.5 * (inside + outside);
            if gap(mid) >= threshold {
                inside = mid;
            } else {
                outside = mid;
            }
        }
        inside
    };
    (threshold, solve(peak, 0.0), solve(peak, 1.0))
}

/// Uniform against `power(1 + c n^{-(1/4 - delta)})` over a ladder of sample
/// sizes. The measurement region at each `n` is where the true gap is at
/// least half its maximum, so it shrinks with the alternative.
pub fn shrinking_separation_study(
    base: &StudySpec,
    c: f64,
    delta: f64,
    ladder: &[usize],
) -> Result<Vec<ShrinkingRow>> {
    if !(c > 0.0) || !(delta > 0.0 && delta <= 0.25) {
        return Err(Error::InvalidConfig(format!("need c > 0 and 0 < delta <= 1/4, got c = {c}, delta = {delta}")));
    }
    if ladder.is_empty() {
        return Err(Error::InvalidConfig("sample-size ladder is empty".into()));
    }
    ladder
        .iter()
        .enumerate()
        .map(|(idx, &n)| {
            let k = 1.0 + c * (n as f64).powf(-(0.25 - delta));
            let (gap_threshold, s_lo, s_hi) = gap_region(k);
            let spec = StudySpec {
                gen1: GeneratorSpec::Uniform,
                gen2: GeneratorSpec::Power { k },
                n,
                s_interval: Some((s_lo, s_hi)),
                seed: stream_seed(base.seed, idx as u64),
                ..base.clone()
            };
            let result = run_estimation_study(&spec)?;
            let (m1, m2) = result.median_sup_errors().expect("interval is set");
            let inside: Vec<usize> = spec
                .grid
                .points()
                .iter()
                .enumerate()
                .filter(|(_, &x)| x >= s_lo && x <= s_hi)
                .map(|(j, _)| j)
                .collect();
            let truncation_freq = if inside.is_empty() {
                0.0
            } else {
                inside.iter().map(|&j| result.truncation_freq[j]).sum::<f64>() / inside.len() as f64
            };
            Ok(ShrinkingRow {
                n,
                power: k,
                gap_threshold,
                s_lo,
                s_hi,
                median_sup_err_g1: m1,
                median_sup_err_g2: m2,
                truncation_freq,
            })
        })
        .collect()
}
