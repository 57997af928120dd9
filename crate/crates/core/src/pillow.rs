//! Monte Carlo reference distribution for the symmetrized test statistic.
//!
//! A lattice approximation of the Brownian pillow on `[0, 1]^2`:
//!
//! 1. draw `m^2` iid `N(0, 1/m^2)` variables `xi[i][j]` (row-major);
//! 2. take 2-D partial sums `eta[k][l] = sum_{i<=k, j<=l} xi[i][j]`;
//! 3. pin the field to zero on the far edges,
//!    `zeta[k][l] = eta[k][l] - (l/m) eta[k][m] - (k/m) eta[m][l] + (k l / m^2) eta[m][m]`;
//! 4. symmetrize, `zeta_s[k][l] = zeta[k][l] + zeta[l][k] - zeta[k][k]` for `k <= l`.
//!
//! The statistic of one replicate is `max_{k <= l} |zeta_s[k][l]|`.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use log::info;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::stream_rng;
use crate::SCHEMA_VERSION;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PillowConfig {
    /// Lattice size per axis.
    pub m: usize,
    /// Number of Monte Carlo replicates.
    pub reps: usize,
    pub seed: u64,
}

impl PillowConfig {
    pub fn new(m: usize, reps: usize, seed: u64) -> Result<Self> {
        let cfg = Self { m, reps, seed };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::InvalidConfig(format!("pillow lattice size m must be >= 2, got {}", self.m)));
        }
        if self.reps < 1 {
            return Err(Error::InvalidConfig("pillow replicate count must be >= 1".into()));
        }
        Ok(())
    }
}

/// Row-major `m x m` lattice field, index `(k, l)` for `0 <= k, l < m`
/// corresponding to lattice points `((k + 1)/m, (l + 1)/m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    m: usize,
    values: Vec<f64>,
}

impl Field {
    pub fn size(&self) -> usize {
        self.m
    }

    pub fn get(&self, k: usize, l: usize) -> f64 {
        self.values[k * self.m + l]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `max_{k <= l} |zeta[k][l] + zeta[l][k] - zeta[k][k]|`.
    pub fn symmetrized_sup(&self) -> f64 {
        let m = self.m;
        let mut best = 0.0f64;
        for k in 0..m {
            let diag = self.get(k, k);
            for l in k..m {
                best = best.max((self.get(k, l) + self.get(l, k) - diag).abs());
            }
        }
        best
    }
}

/// Fills `buf` (length `m^2`) with the 2-D partial sums of standard normal
/// draws taken row-major from `draw`. No scaling is applied.
fn partial_sums_into(m: usize, buf: &mut [f64], mut draw: impl FnMut() -> f64) {
    debug_assert_eq!(buf.len(), m * m);
    let mut prev: Option<usize> = None;
    for i in 0..m {
        let row = i * m;
        let mut run = 0.0;
        match prev {
            None => {
                for cell in &mut buf[row..row + m] {
                    run += draw();
                    *cell = run;
                }
            }
            Some(p) => {
                let (above, current) = buf.split_at_mut(row);
                let above = &above[p..p + m];
                for (cell, &up) in current[..m].iter_mut().zip(above) {
                    run += draw();
                    *cell = run + up;
                }
            }
        }
        prev = Some(row);
    }
}

/// One pinned field (steps 1 to 3) with noise taken from `draw`, which must
/// return standard normal variates.
pub fn pillow_field_with(m: usize, draw: impl FnMut() -> f64) -> Field {
    assert!(m >= 2, "lattice size must be at least 2");
    let mut eta = vec![0.0; m * m];
    partial_sums_into(m, &mut eta, draw);
    let scale = 1.0 / m as f64;
    for v in &mut eta {
        *v *= scale;
    }
    let frac: Vec<f64> = (1..=m).map(|i| i as f64 / m as f64).collect();
    let last_row: Vec<f64> = eta[(m - 1) * m..].to_vec();
    let corner = last_row[m - 1];
    for k in 0..m {
        let row = &mut eta[k * m..(k + 1) * m];
        let row_end = row[m - 1];
        let fk = frac[k];
        for l in 0..m {
            row[l] = row[l] - frac[l] * row_end - fk * last_row[l] + fk * frac[l] * corner;
        }
    }
    Field { m, values: eta }
}

/// One pinned field from a random stream.
pub fn pillow_field<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Field {
    pillow_field_with(m, || rng.sample(StandardNormal))
}

/// Symmetrized sup of one replicate, reading `eta` (unscaled partial sums)
/// without materializing the pinned field.
///
/// With `r_k = eta[k][m-1]`, `c_l = eta[m-1][l]`, corner `e` and
/// `f_k = (k + 1)/m`, the pinned field is
/// `m zeta[k][l] = eta[k][l] - f_l r_k - f_k c_l + f_k f_l e`, so for `k <= l`
///
/// ```text
/// m zeta_s[k][l] = eta[k][l] + eta[l][k] + f_l (2 f_k e - p_k) - f_k p_l - m zeta[k][k]
/// ```
///
/// with `p = r + c`. The square is walked in tiles, each transposed tile
/// copied into a contiguous buffer.
fn symmetrized_sup_from_partial_sums(m: usize, eta: &[f64], scratch: &mut SupScratch) -> f64 {
    let SupScratch {
        frac,
        p,
        diag,
        tile,
        ..
    } = scratch;
    let corner = eta[m * m - 1];
    for k in 0..m {
        let r = eta[k * m + m - 1];
        let c = eta[(m - 1) * m + k];
        p[k] = r + c;
        diag[k] = eta[k * m + k] - frac[k] * r - frac[k] * c + frac[k] * frac[k] * corner;
    }

    let (mut hi, mut lo) = (0.0f64, 0.0f64);
    for kb in (0..m).step_by(TILE) {
        let k_end = (kb + TILE).min(m);
        for lb in (kb..m).step_by(TILE) {
            let l_end = (lb + TILE).min(m);
            let width = l_end - lb;
            // tile[(k - kb) * TILE + (l - lb)] = eta[l][k]
            for l in lb..l_end {
                let src = &eta[l * m + kb..l * m + k_end];
                for (dk, &v) in src.iter().enumerate() {
                    tile[dk * TILE + (l - lb)] = v;
                }
            }
            for k in kb..k_end {
                let fk = frac[k];
                let slope = 2.0 * fk * corner - p[k];
                let offset = diag[k];
                let from = lb.max(k);
                let row = &eta[k * m + from..k * m + l_end];
                let col = &tile[(k - kb) * TILE + (from - lb)..(k - kb) * TILE + width];
                let fr = &frac[from..l_end];
                let pr = &p[from..l_end];
                for i in 0..row.len() {
                    let v = row[i] + col[i] + fr[i] * slope - fk * pr[i] - offset;
                    hi = if v > hi { v } else { hi };
                    lo = if v < lo { v } else { lo };
                }
            }
        }
    }
    hi.max(-lo) / m as f64
}

const TILE: usize = 64;

struct SupScratch {
    eta: Vec<f64>,
    frac: Vec<f64>,
    p: Vec<f64>,
    diag: Vec<f64>,
    tile: Vec<f64>,
}

impl SupScratch {
    fn new(m: usize) -> Self {
        Self {
            eta: vec![0.0; m * m],
            frac: (1..=m).map(|i| i as f64 / m as f64).collect(),
            p: vec![0.0; m],
            diag: vec![0.0; m],
            tile: vec![0.0; TILE * TILE],
        }
    }

    fn sup_with(&mut self, m: usize, draw: impl FnMut() -> f64) -> f64 {
        let mut eta = std::mem::take(&mut self.eta);
        partial_sums_into(m, &mut eta, draw);
        let sup = symmetrized_sup_from_partial_sums(m, &eta, self);
        self.eta = eta;
        sup
    }
}

/// Symmetrized sup of one replicate with noise from `draw`.
pub fn pillow_sup_once_with(m: usize, draw: impl FnMut() -> f64) -> f64 {
    assert!(m >= 2, "lattice size must be at least 2");
    SupScratch::new(m).sup_with(m, draw)
}

pub fn pillow_sup_once<R: Rng + ?Sized>(m: usize, rng: &mut R) -> f64 {
    pillow_sup_once_with(m, || rng.sample(StandardNormal))
}

/// Sorted replicates of the symmetrized sup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PillowSample {
    config: PillowConfig,
    sup_values: Vec<f64>,
}

impl PillowSample {
    /// Wraps precomputed replicate values; sorts them.
    pub fn from_values(config: PillowConfig, mut sup_values: Vec<f64>) -> Result<Self> {
        config.validate()?;
        if sup_values.len() != config.reps {
            return Err(Error::InvalidConfig(format!(
                "expected {} replicate values, got {}",
                config.reps,
                sup_values.len()
            )));
        }
        if sup_values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidConfig("replicate values must be finite and >= 0".into()));
        }
        sup_values.sort_by(f64::total_cmp);
        Ok(Self { config, sup_values })
    }

    pub fn config(&self) -> &PillowConfig {
        &self.config
    }

    pub fn sup_values(&self) -> &[f64] {
        &self.sup_values
    }
}

/// Replicate `r` uses the stream derived from `(seed, r)`; results do not
/// depend on the rayon pool size.
pub fn generate(cfg: &PillowConfig) -> Result<PillowSample> {
    cfg.validate()?;
    let m = cfg.m;
    let values: Vec<f64> = (0..cfg.reps)
        .into_par_iter()
        .map_init(
            || SupScratch::new(m),
            |scratch, r| {
                let mut rng = stream_rng(cfg.seed, r as u64);
                scratch.sup_with(m, || rng.sample(StandardNormal))
            },
        )
        .collect();
    PillowSample::from_values(*cfg, values)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileRow {
    pub alpha: f64,
    pub quantile: f64,
}

/// Upper quantiles keyed by level, in the order the levels were requested.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileTable {
    rows: Vec<QuantileRow>,
}

impl QuantileTable {
    pub fn rows(&self) -> &[QuantileRow] {
        &self.rows
    }

    pub fn get(&self, alpha: f64) -> Option<f64> {
        self.rows.iter().find(|r| r.alpha == alpha).map(|r| r.quantile)
    }

    pub fn to_json(&self, cfg: &PillowConfig) -> serde_json::Value {
        serde_json::json!({
            "schema_version": SCHEMA_VERSION,
            "m": cfg.m,
            "reps": cfg.reps,
            "seed": cfg.seed,
            "quantiles": self.rows,
        })
    }

    /// Aligned plain-text rendering.
    pub fn to_text(&self, cfg: &PillowConfig) -> String {
        let mut out = format!("m = {}, reps = {}, seed = {}\n", cfg.m, cfg.reps, cfg.seed);
        out.push_str(&format!("{:>8}  {:>10}\n", "alpha", "quantile"));
        for row in &self.rows {
            out.push_str(&format!("{:>8}  {:>10.4}\n", row.alpha, row.quantile));
        }
        out
    }
}

/// 1-based order statistic index `ceil((1 - alpha) reps)`, clamped to
/// `[1, reps]`.
pub fn upper_quantile_index(alpha: f64, reps: usize) -> usize {
    // absorb rounding in (1 - alpha) * reps, e.g. 0.95 * 100
    let raw = ((1.0 - alpha) * reps as f64 - 1e-9).ceil();
    (raw.max(1.0) as usize).min(reps)
}

pub fn quantiles(sample: &PillowSample, alphas: &[f64]) -> Result<QuantileTable> {
    let values = sample.sup_values();
    if values.is_empty() {
        return Err(Error::EmptySample);
    }
    let rows = alphas
        .iter()
        .map(|&alpha| {
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(Error::InvalidConfig(format!("alpha must lie in (0, 1), got {alpha}")));
            }
            let idx = upper_quantile_index(alpha, values.len());
            Ok(QuantileRow {
                alpha,
                quantile: values[idx - 1],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(QuantileTable { rows })
}

const CACHE_MAGIC: &[u8; 8] = b"BPPILLOW";
const CACHE_VERSION: u32 = 1;

pub fn cache_path(dir: &Path, cfg: &PillowConfig) -> PathBuf {
    dir.join(format!("pillow_m{}_r{}_s{}.bin", cfg.m, cfg.reps, cfg.seed))
}

/// Binary cache layout, little endian: magic `BPPILLOW`, `u32` format
/// version, `u64` m, `u64` reps, `u64` seed, then `reps` sorted `f64` values.
pub fn write_cache<W: Write>(sample: &PillowSample, out: W) -> std::io::Result<()> {
    let mut out = BufWriter::new(out);
    let cfg = sample.config();
    out.write_all(CACHE_MAGIC)?;
    out.write_all(&CACHE_VERSION.to_le_bytes())?;
    out.write_all(&(cfg.m as u64).to_le_bytes())?;
    out.write_all(&(cfg.reps as u64).to_le_bytes())?;
    out.write_all(&cfg.seed.to_le_bytes())?;
    for v in sample.sup_values() {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()
}

/// Reads a cache file and checks its header against `expected`.
pub fn read_cache(path: &Path, expected: &PillowConfig) -> Result<PillowSample> {
    let mismatch = |reason: String| Error::CacheMismatch {
        path: path.to_path_buf(),
        reason,
    };
    let mut rdr = BufReader::new(fs::File::open(path)?);
    let mut magic = [0u8; 8];
    let mut u32buf = [0u8; 4];
    let mut u64buf = [0u8; 8];
    let mut read_u64 = |rdr: &mut BufReader<fs::File>| -> Result<u64> {
        rdr.read_exact(&mut u64buf)
            .map_err(|e| mismatch(format!("truncated header: {e}")))?;
        Ok(u64::from_le_bytes(u64buf))
    };
    rdr.read_exact(&mut magic)
        .map_err(|e| mismatch(format!("truncated header: {e}")))?;
    if &magic != CACHE_MAGIC {
        return Err(mismatch("bad magic".into()));
    }
    rdr.read_exact(&mut u32buf)
        .map_err(|e| mismatch(format!("truncated header: {e}")))?;
    let version = u32::from_le_bytes(u32buf);
    if version != CACHE_VERSION {
        return Err(mismatch(format!("format version {version}, expected {CACHE_VERSION}")));
    }
    let m = read_u64(&mut rdr)?;
    let reps = read_u64(&mut rdr)?;
    let seed = read_u64(&mut rdr)?;
    if (m, reps, seed) != (expected.m as u64, expected.reps as u64, expected.seed) {
        return Err(mismatch(format!(
            "header has (m, reps, seed) = ({m}, {reps}, {seed}), expected ({}, {}, {})",
            expected.m, expected.reps, expected.seed
        )));
    }
    let mut body = Vec::new();
    rdr.read_to_end(&mut body)?;
    if body.len() != expected.reps * 8 {
        return Err(mismatch(format!(
            "body holds {} bytes, expected {}",
            body.len(),
            expected.reps * 8
        )));
    }
    let values: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if values.windows(2).any(|w| w[0] > w[1]) {
        return Err(mismatch("values are not sorted".into()));
    }
    PillowSample::from_values(*expected, values).map_err(|e| mismatch(e.to_string()))
}

/// Loads the reference from `dir` if cached, else generates and stores it.
/// The flag is true on a cache hit.
pub fn load_or_generate(cfg: &PillowConfig, dir: &Path) -> Result<(PillowSample, bool)> {
    cfg.validate()?;
    let path = cache_path(dir, cfg);
    if path.exists() {
        let sample = read_cache(&path, cfg)?;
        info!("pillow cache hit: {}", path.display());
        return Ok((sample, true));
    }
    info!(
        "pillow cache miss, generating m = {}, reps = {}, seed = {}",
        cfg.m, cfg.reps, cfg.seed
    );
    let sample = generate(cfg)?;
    fs::create_dir_all(dir)?;
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    let written = fs::File::create(&tmp).and_then(|f| write_cache(&sample, f));
    if let Err(e) = written.and_then(|_| fs::rename(&tmp, &path)) {
        let _ = fs::remove_file(&tmp);
        return Err(e.into());
    }
    info!("pillow cache stored: {}", path.display());
    Ok((sample, false))
}
