//! Estimation of the pointwise minimum and maximum of the two marginal CDFs
//! from the ECDFs of the pair minima and maxima.
//!
//! With independent components, the minimum and maximum of a pair have CDFs
//! `s = F1 + F2 - F1*F2` and `t = F1*F2`. The map is inverted by the two roots
//! of `z^2 - (s + t) z + t = 0`, which recover `min(F1, F2)` and
//! `max(F1, F2)` wherever the discriminant `(s + t)^2 - 4t` is nonnegative.
//! Plugging in the empirical `s` and `t` gives the estimators; a negative
//! empirical discriminant is truncated to zero.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sample::{EvalGrid, UnorderedPairSample};
use crate::SCHEMA_VERSION;

/// Floor applied to `sqrt(discriminant)` before dividing by it.
const SQRT_DISC_FLOOR: f64 = 1e-12;

fn check_unit(x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::DomainError(x))
    }
}

/// CDFs of the pair minimum and maximum at a point where the marginals are
/// `f1` and `f2`.
pub fn forward_minmax(f1: f64, f2: f64) -> Result<(f64, f64)> {
    check_unit(f1)?;
    check_unit(f2)?;
    let t = f1 * f2;
    Ok((f1 + f2 - t, t))
}

/// `(s + t)^2 - 4t`.
pub fn discriminant(s: f64, t: f64) -> f64 {
    let sum = s + t;
    sum * sum - 4.0 * t
}

/// Roots `(alpha, beta)` of `z^2 - (s + t) z + t` for a known nonnegative
/// discriminant. The smaller root is taken as `t / beta` to avoid
/// cancellation.
fn roots(s: f64, t: f64, disc: f64) -> (f64, f64) {
    let beta = 0.5 * (s + t + disc.max(0.0).sqrt());
    let alpha = if beta > 0.0 { t / beta } else { 0.0 };
    let beta = beta.clamp(0.0, 1.0);
    (alpha.clamp(0.0, beta), beta)
}

/// Inverse of [`forward_minmax`] up to the order of the marginals.
pub fn alpha_beta(s: f64, t: f64) -> Result<(f64, f64)> {
    check_unit(s)?;
    check_unit(t)?;
    let disc = discriminant(s, t);
    if disc < 0.0 {
        return Err(Error::OutsideDomain {
            s,
            t,
            discriminant: disc,
        });
    }
    Ok(roots(s, t, disc))
}

/// Weights of the minimum/maximum ECDF fluctuations in the linearization of
/// the lower (`*_minus`) and upper (`*_plus`) estimators. Each is twice the
/// matching partial derivative of the inverse map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HWeights {
    pub h1_minus: f64,
    pub h2_minus: f64,
    pub h1_plus: f64,
    pub h2_plus: f64,
}

impl HWeights {
    pub fn pair(&self, branch: Branch) -> (f64, f64) {
        match branch {
            Branch::Lower => (self.h1_minus, self.h2_minus),
            Branch::Upper => (self.h1_plus, self.h2_plus),
        }
    }
}

/// Which of the two estimators: the lower CDF `min(F1, F2)` or the upper
/// CDF `max(F1, F2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Lower,
    Upper,
}

fn interior_sqrt_disc(s: f64, t: f64) -> Result<f64> {
    check_unit(s)?;
    check_unit(t)?;
    let disc = discriminant(s, t);
    if disc <= 0.0 {
        return Err(Error::OutsideDomain {
            s,
            t,
            discriminant: disc,
        });
    }
    Ok(disc.sqrt().max(SQRT_DISC_FLOOR))
}

pub fn h_weights(s: f64, t: f64) -> Result<HWeights> {
    let root = interior_sqrt_disc(s, t)?;
    let a = (s + t) / root;
    let b = (s + t - 2.0) / root;
    Ok(HWeights {
        h1_minus: 1.0 - a,
        h2_minus: 1.0 - b,
        h1_plus: 1.0 + a,
        h2_plus: 1.0 + b,
    })
}

/// Pointwise standard deviation of the limit of `sqrt(n) (G_n - G)` at a
/// point where the minimum and maximum CDFs equal `(s, t)`.
///
/// The indicator covariance is `Cov(1{U<=x}, 1{V<=x}) = t (1 - s)`, since
/// `{V <= x}` is contained in `{U <= x}`.
pub fn asymptotic_sd(s: f64, t: f64, branch: Branch) -> Result<f64> {
    let (h1, h2) = h_weights(s, t)?.pair(branch);
    let var = 0.25 * (h1 * h1 * s * (1.0 - s) + h2 * h2 * t * (1.0 - t) + 2.0 * h1 * h2 * t * (1.0 - s));
    Ok(var.max(0.0).sqrt())
}

/// Least-squares nondecreasing fit (pool adjacent violators, unit weights).
pub fn isotonize(values: &[f64]) -> Vec<f64> {
    // blocks of (mean, weight)
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(values.len());
    for &v in values {
        blocks.push((v, 1));
        while blocks.len() >= 2 {
            let (m2, w2) = blocks[blocks.len() - 1];
            let (m1, w1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            blocks.pop();
            let w = w1 + w2;
            *blocks.last_mut().unwrap() = ((m1 * w1 as f64 + m2 * w2 as f64) / w as f64, w);
        }
    }
    blocks
        .into_iter()
        .flat_map(|(m, w)| std::iter::repeat_n(m, w))
        .collect()
}

/// Estimates of `min(F1, F2)` (`g1`) and `max(F1, F2)` (`g2`) on a grid.
///
/// `discriminant` holds the raw empirical discriminant; `truncated[j]` is set
/// exactly when it is negative, in which case both estimates equal the
/// pooled ECDF value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalEstimate {
    pub grid: EvalGrid,
    pub g1: Vec<f64>,
    pub g2: Vec<f64>,
    pub discriminant: Vec<f64>,
    pub truncated: Vec<bool>,
    /// Set when `g1`/`g2` were passed through [`isotonize`]; the truncation
    /// coherence `g1 == g2` then no longer holds pointwise.
    #[serde(default)]
    pub isotonic: bool,
}

impl MarginalEstimate {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn isotonized(&self) -> Self {
        Self {
            g1: isotonize(&self.g1),
            g2: isotonize(&self.g2),
            isotonic: true,
            ..self.clone()
        }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "x,g1,g2,d_n,truncated")?;
        for j in 0..self.len() {
            writeln!(
                out,
                "{},{},{},{},{}",
                self.grid.points()[j],
                self.g1[j],
                self.g2[j],
                self.discriminant[j],
                self.truncated[j]
            )?;
        }
        Ok(())
    }

    pub fn to_json(&self, n: usize) -> serde_json::Value {
        let rows: Vec<_> = (0..self.len())
            .map(|j| {
                serde_json::json!({
                    "x": self.grid.points()[j],
                    "g1": self.g1[j],
                    "g2": self.g2[j],
                    "d_n": self.discriminant[j],
                    "truncated": self.truncated[j],
                })
            })
            .collect();
        serde_json::json!({
            "schema_version": SCHEMA_VERSION,
            "n": n,
            "isotonic": self.isotonic,
            "truncated_count": self.truncated.iter().filter(|&&t| t).count(),
            "points": rows,
        })
    }
}

/// Empirical estimates at a single point from the counts of minima and
/// maxima `<= x` out of `n` pairs. The sign of the discriminant is decided
/// in exact integer arithmetic.
pub(crate) fn estimate_from_counts(lo: usize, hi: usize, n: usize) -> (f64, f64, f64, bool) {
    let (a, b, n_i) = (lo as i128, hi as i128, n as i128);
    let scaled = (a + b) * (a + b) - 4 * b * n_i;
    let nf = n as f64;
    let disc = scaled as f64 / (nf * nf);
    let s = lo as f64 / nf;
    let t = hi as f64 / nf;
    if scaled < 0 {
        let avg = 0.5 * (s + t);
        (avg, avg, disc, true)
    } else {
        let (g1, g2) = roots(s, t, disc);
        (g1, g2, disc, false)
    }
}

pub fn estimate_marginals(sample: &UnorderedPairSample, grid: &EvalGrid) -> MarginalEstimate {
    let (lo, hi) = sample.min_max_ecdfs();
    let n = sample.len();
    let m = grid.len();
    let mut est = MarginalEstimate {
        grid: grid.clone(),
        g1: Vec::with_capacity(m),
        g2: Vec::with_capacity(m),
        discriminant: Vec::with_capacity(m),
        truncated: Vec::with_capacity(m),
        isotonic: false,
    };
    for &x in grid.points() {
        let (g1, g2, d, tr) = estimate_from_counts(lo.count_le(x), hi.count_le(x), n);
        est.g1.push(g1);
        est.g2.push(g2);
        est.discriminant.push(d);
        est.truncated.push(tr);
    }
    est
}

/// Estimates on the sorted distinct pooled sample values.
pub fn estimate_on_pooled_grid(sample: &UnorderedPairSample) -> MarginalEstimate {
    estimate_marginals(sample, &sample.pooled_grid())
}

/// Grid indices where the estimated gap `g2 - g1` is at least `margin`.
pub fn separation_set(est: &MarginalEstimate, margin: f64) -> Vec<usize> {
    est.g1
        .iter()
        .zip(&est.g2)
        .enumerate()
        .filter(|(_, (a, b))| *b - *a >= margin)
        .map(|(j, _)| j)
        .collect()
}
