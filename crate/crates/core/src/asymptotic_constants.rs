//! Limit covariances of the estimators: `sigma_ij(H)`, `Sigma^{(p)}(H)`,
//! `Gamma(H)`, and the CLT variances built from them.
//!
//! `Gamma` is a rapidly converging lattice series. `sigma_ij` has no closed
//! form and is estimated by Monte Carlo, lag by lag, from the exact Gaussian
//! law of the four variations involved. Both are tabulated over an `H` grid
//! and cached on disk.

use std::path::{Path, PathBuf};
use std::time::Instant;

use faer::{Mat, Side};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{centered_log_indices, CovarianceModel, EstimatorKind};
use crate::filters::Filter;
use crate::fractional_kernels::{
    fbm_cross_covariance, lambda2_derivative, lambda2_dilated, HurstValue,
};
use crate::gaussian_sampler::{SeedLineage, Stream};

/// Default truncation of the `Gamma` lattice series.
pub const GAMMA_TRUNCATION: usize = 2000;

/// Relative eigenvalue floor used to repair `Sigma^{(p)}`.
pub const EIGEN_FLOOR: f64 = 1e-8;

/// Environment variable overriding the table cache directory.
pub const CACHE_ENV: &str = "HURSTLAB_TABLE_CACHE";

const LAG_SLOTS: u64 = 1 << 12;

/// `Gamma(H)` together with an estimate of the neglected series tail.
#[derive(Debug, Clone)]
pub struct GammaMatrix {
    pub matrix: Mat<f64>,
    pub truncation_error: f64,
}

/// `Gamma_{i1 i2}(H) = 2 / (i1^{2H} i2^{2H}) sum_{|j| <= J} (num(j) / den)^2`.
pub fn gamma_matrix(h: HurstValue, p: usize, f: &Filter, truncation: usize) -> Result<GammaMatrix> {
    if truncation < 100 {
        return Err(Error::InvalidConfig(format!(
            "truncation {truncation} < 100"
        )));
    }
    if p == 0 {
        return Err(Error::InvalidConfig("p must be >= 1".into()));
    }
    let two_h = 2.0 * h.get();
    let a = f.coeffs();
    let pw = |x: i64| -> f64 {
        if x == 0 {
            0.0
        } else {
            (x.abs() as f64).powf(two_h)
        }
    };
    let mut den = 0.0;
    for (k1, a1) in a.iter().enumerate() {
        for (k2, a2) in a.iter().enumerate() {
            den += a1 * a2 * pw(k1 as i64 - k2 as i64);
        }
    }
    let mut m = Mat::<f64>::zeros(p, p);
    let mut tail = 0.0f64;
    let jmax = truncation as i64;
    let decay = 4.0 * h.get() - 8.0;
    for i1 in 1..=p {
        for i2 in i1..=p {
            let term = |j: i64| -> f64 {
                let mut num = 0.0;
                for (k1, a1) in a.iter().enumerate() {
                    for (k2, a2) in a.iter().enumerate() {
                        num += a1 * a2 * pw((i1 * k1) as i64 - (i2 * k2) as i64 + j);
                    }
                }
                (num / den).powi(2)
            };
            let sum: f64 = (-jmax..=jmax).map(term).sum();
            let scale = 2.0 / ((i1 as f64).powf(two_h) * (i2 as f64).powf(two_h));
            let v = scale * sum;
            m[(i1 - 1, i2 - 1)] = v;
            m[(i2 - 1, i1 - 1)] = v;
            // Terms decay like |j|^{4H-8}: fit the constant on the last term
            // and integrate the two tails.
            let last = 0.5 * (term(jmax) + term(-jmax));
            let jf = jmax as f64;
            let c = last / jf.powf(decay);
            tail = tail.max(scale * 2.0 * c * jf.powf(decay + 1.0) / (-(decay + 1.0)));
        }
    }
    Ok(GammaMatrix {
        matrix: m,
        truncation_error: tail,
    })
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub stderr: f64,
}

/// Factor `A` with `A A' = C` for a PSD 4x4 covariance.
fn psd_sqrt4(c: &Mat<f64>, lag: i64) -> Result<[[f64; 4]; 4]> {
    let eig = c
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| Error::NonPositiveDefiniteLagCov {
            lag,
            eigenvalue: f64::NAN,
        })?;
    let s = eig.S();
    let u = eig.U();
    let trace = (0..4).map(|i| c[(i, i)]).sum::<f64>();
    let mut a = [[0.0; 4]; 4];
    for k in 0..4 {
        let lam = s[k];
        if lam < -1e-10 * trace {
            return Err(Error::NonPositiveDefiniteLagCov {
                lag,
                eigenvalue: lam,
            });
        }
        let r = lam.max(0.0).sqrt();
        for (i, row) in a.iter_mut().enumerate() {
            row[k] = u[(i, k)] * r;
        }
    }
    Ok(a)
}

fn psi(x: f64, y: f64) -> f64 {
    let d = x.abs() + y.abs();
    if d == 0.0 {
        1.0
    } else {
        (x + y).abs() / d
    }
}

/// `Cov(psi_i(0), psi_j(lag))` by Monte Carlo, returning (mean, variance of
/// the mean).
fn lag_covariance(
    h: HurstValue,
    fi: &Filter,
    fj: &Filter,
    means: (f64, f64),
    lag: i64,
    samples: usize,
    seed: SeedLineage,
) -> Result<(f64, f64)> {
    // Components: V_i(0), V_i(1), V_j(lag), V_j(lag + 1).
    let comps = [(fi, 0i64), (fi, 1), (fj, lag), (fj, lag + 1)];
    let var = |f: &Filter| fbm_cross_covariance(f, f, h, 0);
    let sd: Vec<f64> = comps.iter().map(|(f, _)| var(f).sqrt()).collect();
    let c = Mat::<f64>::from_fn(4, 4, |r, s| {
        let (fr, tr) = comps[r];
        let (fs, ts) = comps[s];
        fbm_cross_covariance(fr, fs, h, ts - tr) / (sd[r] * sd[s])
    });
    let a = psd_sqrt4(&c, lag)?;
    let mut rng = seed.rng();
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..samples {
        let z: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let x: [f64; 4] = std::array::from_fn(|r| (0..4).map(|k| a[r][k] * z[k]).sum());
        let prod = (psi(x[0], x[1]) - means.0) * (psi(x[2], x[3]) - means.1);
        sum += prod;
        sum_sq += prod * prod;
    }
    let nf = samples as f64;
    let mean = sum / nf;
    let var = (sum_sq / nf - mean * mean).max(0.0) / (nf - 1.0);
    Ok((mean, var))
}

/// `sigma_ij(H) = sum_{|k| <= K} Cov(psi_i(0), psi_j(k))`, where
/// `psi_i(k) = psi(V^{a(i)}(k), V^{a(i)}(k + 1))` for the `i`-dilated
/// second difference.
pub fn sigma_ij(
    h: HurstValue,
    i: usize,
    j: usize,
    k: usize,
    samples: usize,
    seed: SeedLineage,
) -> Result<McEstimate> {
    if k < 10 || k as u64 >= LAG_SLOTS / 2 {
        return Err(Error::InvalidConfig(format!(
            "lag truncation K = {k} outside [10, {})",
            LAG_SLOTS / 2
        )));
    }
    if samples < 2 {
        return Err(Error::InvalidConfig("need at least 2 samples".into()));
    }
    if i == 0 || j == 0 {
        return Err(Error::InvalidConfig("dilatation indices start at 1".into()));
    }
    let base = Filter::second_difference();
    let (fi, fj) = (base.dilate(i)?, base.dilate(j)?);
    let means = (lambda2_dilated(i, h), lambda2_dilated(j, h));
    let kk = k as i64;
    let parts = (-kk..=kk)
        .into_par_iter()
        .map(|lag| {
            let slot =
                seed.replication.wrapping_mul(LAG_SLOTS) + (lag + LAG_SLOTS as i64 / 2) as u64;
            let lineage = SeedLineage::new(seed.master_seed, slot, Stream::AsymptoticMc);
            lag_covariance(h, &fi, &fj, means, lag, samples, lineage)
        })
        .collect::<Result<Vec<_>>>()?;
    let value = parts.iter().map(|p| p.0).sum();
    let var: f64 = parts.iter().map(|p| p.1).sum();
    Ok(McEstimate {
        value,
        stderr: var.sqrt(),
    })
}

/// `sigma^2(H)` of the base IR estimator; identical to `sigma_11`.
pub fn sigma2(h: HurstValue, k: usize, samples: usize, seed: SeedLineage) -> Result<McEstimate> {
    sigma_ij(h, 1, 1, k, samples, seed)
}

/// `Sigma^{(p)}(H)` with the raw `sigma_ij` estimates it was built from.
#[derive(Debug, Clone)]
pub struct SigmaP {
    pub matrix: Mat<f64>,
    pub sigma: Mat<f64>,
    pub sigma_stderr: Mat<f64>,
    /// Eigenvalues were floored to restore positive definiteness.
    pub repaired: bool,
}

fn cell_seed(seed: SeedLineage, h_index: u64, i: usize, j: usize) -> SeedLineage {
    SeedLineage::new(
        seed.master_seed,
        ((seed.replication * 4096 + h_index) * 64 + i as u64) * 64 + j as u64,
        Stream::AsymptoticMc,
    )
}

/// Symmetrizes and floors eigenvalues at `EIGEN_FLOOR * trace`.
pub fn repair_positive_definite(m: &Mat<f64>) -> Result<(Mat<f64>, bool)> {
    let p = m.nrows();
    let sym = Mat::<f64>::from_fn(p, p, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]));
    let trace: f64 = (0..p).map(|i| sym[(i, i)]).sum();
    let eig = sym
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| Error::Domain("eigendecomposition failed".into()))?;
    let floor = EIGEN_FLOOR * trace.abs();
    let s = eig.S();
    if (0..p).all(|k| s[k] > floor) {
        return Ok((sym, false));
    }
    let u = eig.U();
    let fixed = Mat::<f64>::from_fn(p, p, |i, j| {
        (0..p)
            .map(|k| u[(i, k)] * s[k].max(floor) * u[(j, k)])
            .sum()
    });
    Ok((fixed, true))
}

fn sigma_p_at(
    h: HurstValue,
    h_index: u64,
    p: usize,
    k: usize,
    samples: usize,
    seed: SeedLineage,
) -> Result<SigmaP> {
    let mut sigma = Mat::<f64>::zeros(p, p);
    let mut se = Mat::<f64>::zeros(p, p);
    for i in 1..=p {
        for j in i..=p {
            let est = sigma_ij(h, i, j, k, samples, cell_seed(seed, h_index, i, j))?;
            sigma[(i - 1, j - 1)] = est.value;
            sigma[(j - 1, i - 1)] = est.value;
            se[(i - 1, j - 1)] = est.stderr;
            se[(j - 1, i - 1)] = est.stderr;
        }
    }
    let d: Vec<f64> = (1..=p).map(|i| lambda2_derivative(h, i)).collect();
    let raw = Mat::<f64>::from_fn(p, p, |i, j| sigma[(i, j)] / (d[i] * d[j]));
    let (matrix, repaired) = repair_positive_definite(&raw)?;
    if repaired {
        log::warn!(
            "Sigma^(p) at H = {} repaired by eigenvalue flooring",
            h.get()
        );
    }
    Ok(SigmaP {
        matrix,
        sigma,
        sigma_stderr: se,
        repaired,
    })
}

/// `Sigma^{(p)}_{ij}(H) = sigma_ij(H) / (Lambda2^{(i)}'(H) Lambda2^{(j)}'(H))`.
pub fn sigma_p_matrix(
    h: HurstValue,
    p: usize,
    k: usize,
    samples: usize,
    seed: SeedLineage,
) -> Result<SigmaP> {
    sigma_p_at(h, 0, p, k, samples, seed)
}

/// `A' Gamma A / (4 (A' A)^2)`.
pub fn qv_variance(gamma: &Mat<f64>) -> f64 {
    let p = gamma.nrows();
    let a = centered_log_indices(p);
    let aa: f64 = a.iter().map(|x| x * x).sum();
    let mut q = 0.0;
    for i in 0..p {
        for j in 0..p {
            q += a[i] * gamma[(i, j)] * a[j];
        }
    }
    q / (4.0 * aa * aa)
}

/// `(1' Sigma^{-1} 1)^{-1}`.
pub fn ir2_variance(sigma: &Mat<f64>) -> Result<f64> {
    let p = sigma.nrows();
    let llt = sigma
        .llt(Side::Lower)
        .map_err(|_| Error::SingularWeightMatrix)?;
    let x = faer::linalg::solvers::Solve::solve(&llt, Mat::<f64>::from_fn(p, 1, |_, _| 1.0));
    let s: f64 = (0..p).map(|i| x[(i, 0)]).sum();
    Ok(1.0 / s)
}

/// Slope entry of `1/4 (Z Gamma^{-1} Z')^{-1}` with rows `Z = (log i, 1)`.
pub fn qv2_variance(gamma: &Mat<f64>) -> Result<f64> {
    let p = gamma.nrows();
    let llt = gamma
        .llt(Side::Lower)
        .map_err(|_| Error::SingularWeightMatrix)?;
    let z = Mat::<f64>::from_fn(
        p,
        2,
        |i, j| if j == 0 { ((i + 1) as f64).ln() } else { 1.0 },
    );
    let gz = faer::linalg::solvers::Solve::solve(&llt, &z);
    let mut g = [[0.0; 2]; 2];
    for r in 0..2 {
        for c in 0..2 {
            g[r][c] = (0..p).map(|i| z[(i, r)] * gz[(i, c)]).sum();
        }
    }
    let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
    if !(det > 0.0) {
        return Err(Error::SingularWeightMatrix);
    }
    Ok(0.25 * g[1][1] / det)
}

/// Parameters identifying a table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableConfig {
    pub h_min: f64,
    pub h_max: f64,
    pub h_step: f64,
    pub p: usize,
    pub lag_truncation: usize,
    pub samples: usize,
    pub seed: u64,
    pub gamma_truncation: usize,
}

impl TableConfig {
    /// Coarse grid for desk-scale work.
    pub fn desk(p: usize) -> Self {
        Self {
            h_min: 0.05,
            h_max: 0.95,
            h_step: 0.05,
            p,
            lag_truncation: 20,
            samples: 100_000,
            seed: 20_110_101,
            gamma_truncation: GAMMA_TRUNCATION,
        }
    }

    /// Fine grid with `2e6` samples per lag.
    pub fn full(p: usize) -> Self {
        Self {
            h_min: 0.01,
            h_max: 0.99,
            h_step: 0.01,
            samples: 2_000_000,
            ..Self::desk(p)
        }
    }

    pub fn grid(&self) -> Vec<f64> {
        let m = ((self.h_max - self.h_min) / self.h_step).round() as usize;
        (0..=m)
            .map(|k| self.h_min + k as f64 * self.h_step)
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if !(self.h_min > 0.0 && self.h_max < 1.0 && self.h_min < self.h_max && self.h_step > 0.0) {
            return Err(Error::InvalidConfig("bad H grid".into()));
        }
        if self.p == 0 {
            return Err(Error::InvalidConfig("p must be >= 1".into()));
        }
        Ok(())
    }

    /// File stem used in the cache directory.
    pub fn cache_key(&self) -> String {
        format!(
            "table_p{}_k{}_n{}_s{}_h{}-{}-{}_j{}",
            self.p,
            self.lag_truncation,
            self.samples,
            self.seed,
            self.h_min,
            self.h_max,
            self.h_step,
            self.gamma_truncation
        )
    }
}

/// Build and quality information stored with a table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McMeta {
    pub config: TableConfig,
    pub repaired_nodes: Vec<f64>,
    pub max_gamma_truncation_error: f64,
    pub build_seconds: f64,
    pub version: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CellRecord {
    h: f64,
    matrix: String,
    i: usize,
    j: usize,
    value: f64,
}

/// `Sigma^{(p)}` and `Gamma` on an `H` grid.
#[derive(Debug, Clone)]
pub struct AsymptoticTable {
    pub h_grid: Vec<f64>,
    pub p: usize,
    pub sigma_p: Vec<Mat<f64>>,
    pub sigma_raw: Vec<Mat<f64>>,
    pub sigma_stderr: Vec<Mat<f64>>,
    pub gamma: Vec<Mat<f64>>,
    pub mc_meta: McMeta,
}

impl AsymptoticTable {
    pub fn build(config: &TableConfig) -> Result<Self> {
        config.validate()?;
        let start = Instant::now();
        let grid = config.grid();
        let f = Filter::second_difference();
        let seed = SeedLineage::new(config.seed, 0, Stream::AsymptoticMc);
        let mut sigma_p = Vec::with_capacity(grid.len());
        let mut sigma_raw = Vec::with_capacity(grid.len());
        let mut sigma_stderr = Vec::with_capacity(grid.len());
        let mut gamma = Vec::with_capacity(grid.len());
        let mut repaired_nodes = Vec::new();
        let mut max_err = 0.0f64;
        for (idx, &h) in grid.iter().enumerate() {
            let hv = HurstValue::new(h)?;
            log::info!("asymptotic table: H = {h:.3} ({}/{})", idx + 1, grid.len());
            let s = sigma_p_at(
                hv,
                idx as u64,
                config.p,
                config.lag_truncation,
                config.samples,
                seed,
            )?;
            if s.repaired {
                repaired_nodes.push(h);
            }
            let g = gamma_matrix(hv, config.p, &f, config.gamma_truncation)?;
            if g.matrix.llt(Side::Lower).is_err() {
                return Err(Error::Domain(format!(
                    "Gamma not positive definite at H = {h}"
                )));
            }
            max_err = max_err.max(g.truncation_error);
            sigma_p.push(s.matrix);
            sigma_raw.push(s.sigma);
            sigma_stderr.push(s.sigma_stderr);
            gamma.push(g.matrix);
        }
        Ok(Self {
            h_grid: grid,
            p: config.p,
            sigma_p,
            sigma_raw,
            sigma_stderr,
            gamma,
            mc_meta: McMeta {
                config: config.clone(),
                repaired_nodes,
                max_gamma_truncation_error: max_err,
                build_seconds: start.elapsed().as_secs_f64(),
                version: env!("CARGO_PKG_VERSION").to_string(),
            },
        })
    }

    /// The cache directory: `$HURSTLAB_TABLE_CACHE` or a temp subdirectory.
    pub fn cache_dir() -> PathBuf {
        std::env::var_os(CACHE_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| std::env::temp_dir().join("hurstlab-tables"))
    }

    /// Loads the table for `config` from `dir`, building and storing it on a
    /// miss.
    pub fn load_or_build_in(config: &TableConfig, dir: &Path) -> Result<Self> {
        let key = config.cache_key();
        let csv_path = dir.join(format!("{key}.csv"));
        let json_path = dir.join(format!("{key}.json"));
        if csv_path.exists() && json_path.exists() {
            match Self::read(&csv_path, &json_path) {
                Ok(t) if t.mc_meta.config == *config => return Ok(t),
                Ok(_) => log::warn!("cached table {key} has a different configuration; rebuilding"),
                Err(e) => log::warn!("cannot read cached table {key}: {e}; rebuilding"),
            }
        }
        let table = Self::build(config)?;
        std::fs::create_dir_all(dir)?;
        table.write(&csv_path, &json_path)?;
        Ok(table)
    }

    pub fn load_or_build(config: &TableConfig) -> Result<Self> {
        Self::load_or_build_in(config, &Self::cache_dir())
    }

    pub fn write(&self, csv_path: &Path, json_path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(csv_path)?;
        let groups = [
            ("sigma_p", &self.sigma_p),
            ("sigma", &self.sigma_raw),
            ("sigma_stderr", &self.sigma_stderr),
            ("gamma", &self.gamma),
        ];
        for (idx, &h) in self.h_grid.iter().enumerate() {
            for (name, mats) in groups {
                let m = &mats[idx];
                for i in 0..self.p {
                    for j in 0..self.p {
                        w.serialize(CellRecord {
                            h,
                            matrix: name.to_string(),
                            i: i + 1,
                            j: j + 1,
                            value: m[(i, j)],
                        })?;
                    }
                }
            }
        }
        w.flush()?;
        std::fs::write(json_path, serde_json::to_string_pretty(&self.mc_meta)?)?;
        Ok(())
    }

    pub fn read(csv_path: &Path, json_path: &Path) -> Result<Self> {
        let meta: McMeta = serde_json::from_str(&std::fs::read_to_string(json_path)?)?;
        let grid = meta.config.grid();
        let p = meta.config.p;
        let blank = || vec![Mat::<f64>::zeros(p, p); grid.len()];
        let (mut sp, mut sr, mut se, mut g) = (blank(), blank(), blank(), blank());
        let mut seen = 0usize;
        for rec in csv::Reader::from_path(csv_path)?.deserialize::<CellRecord>() {
            let rec = rec?;
            let idx = grid
                .iter()
                .position(|x| (x - rec.h).abs() < 1e-12)
                .ok_or_else(|| Error::Io(format!("table node {} not on grid", rec.h)))?;
            if rec.i == 0 || rec.j == 0 || rec.i > p || rec.j > p {
                return Err(Error::Io("table index out of range".into()));
            }
            let target = match rec.matrix.as_str() {
                "sigma_p" => &mut sp,
                "sigma" => &mut sr,
                "sigma_stderr" => &mut se,
                "gamma" => &mut g,
                other => return Err(Error::Io(format!("unknown matrix `{other}`"))),
            };
            target[idx][(rec.i - 1, rec.j - 1)] = rec.value;
            seen += 1;
        }
        if seen != 4 * grid.len() * p * p {
            return Err(Error::Io("incomplete table file".into()));
        }
        Ok(Self {
            h_grid: grid,
            p,
            sigma_p: sp,
            sigma_raw: sr,
            sigma_stderr: se,
            gamma: g,
            mc_meta: meta,
        })
    }

    pub fn range(&self) -> (f64, f64) {
        (self.h_grid[0], self.h_grid[self.h_grid.len() - 1])
    }

    /// Bracketing nodes and weight for `h` clamped into the grid.
    fn locate(&self, h: f64) -> (usize, usize, f64) {
        let (lo, hi) = self.range();
        let h = h.clamp(lo, hi);
        let m = self.h_grid.len();
        if m == 1 {
            return (0, 0, 0.0);
        }
        let j = self.h_grid.partition_point(|&g| g <= h).clamp(1, m - 1);
        let (a, b) = (self.h_grid[j - 1], self.h_grid[j]);
        (j - 1, j, ((h - a) / (b - a)).clamp(0.0, 1.0))
    }

    fn interp(&self, mats: &[Mat<f64>], h: f64, p: usize) -> Result<Mat<f64>> {
        if p > self.p {
            return Err(Error::InvalidConfig(format!(
                "table holds p = {}, {p} requested",
                self.p
            )));
        }
        let (i0, i1, w) = self.locate(h);
        Ok(Mat::<f64>::from_fn(p, p, |r, c| {
            (1.0 - w) * mats[i0][(r, c)] + w * mats[i1][(r, c)]
        }))
    }

    fn check_range(&self, h: f64) -> Result<()> {
        let (lo, hi) = self.range();
        if h < lo - 1e-12 || h > hi + 1e-12 {
            return Err(Error::OutOfTableRange { h, lo, hi });
        }
        Ok(())
    }

    /// `Sigma^{(p)}(h)` interpolated; `h` must lie in the grid range.
    pub fn sigma_p_at(&self, h: f64, p: usize) -> Result<Mat<f64>> {
        self.check_range(h)?;
        self.interp(&self.sigma_p, h, p)
    }

    /// `Gamma(h)` interpolated; `h` must lie in the grid range.
    pub fn gamma_at(&self, h: f64, p: usize) -> Result<Mat<f64>> {
        self.check_range(h)?;
        self.interp(&self.gamma, h, p)
    }
}

impl CovarianceModel for AsymptoticTable {
    /// Pilot values outside the grid use the nearest end node.
    fn sigma_p(&self, h: f64, p: usize) -> Result<Mat<f64>> {
        self.interp(&self.sigma_p, h, p)
    }

    fn gamma(&self, h: f64, p: usize) -> Result<Mat<f64>> {
        self.interp(&self.gamma, h, p)
    }
}

/// Limit variance `V` of `sqrt(2 n^{1-alpha}) (H_hat - H)` given the model
/// matrices at `h`.
pub fn limit_variance(
    estimator: EstimatorKind,
    h: f64,
    p: usize,
    model: &dyn CovarianceModel,
) -> Result<f64> {
    match estimator {
        EstimatorKind::Ir => Ok(model.sigma_p(h, 1)?[(0, 0)]),
        EstimatorKind::Qv => Ok(qv_variance(&model.gamma(h, p)?)),
        EstimatorKind::Ir2 => ir2_variance(&model.sigma_p(h, p)?),
        EstimatorKind::Qv2 => qv2_variance(&model.gamma(h, p)?),
    }
}

/// Predicted standard error `sqrt(V / (2 n^{1-alpha}))`.
pub fn clt_stderr(
    estimator: EstimatorKind,
    h: HurstValue,
    n: usize,
    alpha: f64,
    p: usize,
    table: &AsymptoticTable,
) -> Result<f64> {
    table.check_range(h.get())?;
    let v = limit_variance(estimator, h.get(), p, table)?;
    Ok((v / (2.0 * (n as f64).powf(1.0 - alpha))).sqrt())
}

/// Fills `curve.stderr` from the table at each valid estimate.
pub fn attach_stderr(
    curve: &mut crate::estimators::EstimateCurve,
    n: usize,
    table: &AsymptoticTable,
) {
    let cfg = curve.config.clone();
    let p = if cfg.estimator == EstimatorKind::Ir {
        1
    } else {
        cfg.p
    };
    let se = curve
        .h_hat
        .iter()
        .zip(&curve.valid)
        .map(|(&h, &ok)| {
            if !ok {
                return f64::NAN;
            }
            HurstValue::new(h)
                .and_then(|hv| clt_stderr(cfg.estimator, hv, n, cfg.alpha, p, table))
                .unwrap_or(f64::NAN)
        })
        .collect();
    curve.stderr = Some(se);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::IdentityModel;
    use crate::fractional_kernels::fbm_filtered_covariance;
    use std::f64::consts::LN_2;

    fn hv(h: f64) -> HurstValue {
        HurstValue::new(h).unwrap()
    }

    /// `2 sum_j corr(V^{a(i1)}(0), V^{a(i2)}(j))^2` from the generic
    /// filtered covariance.
    fn gamma_by_correlations(h: f64, i1: usize, i2: usize, jmax: i64) -> f64 {
        let a = Filter::second_difference();
        let (f1, f2) = (a.dilate(i1).unwrap(), a.dilate(i2).unwrap());
        let s1 = fbm_filtered_covariance(&f1, hv(h), 0).sqrt();
        let s2 = fbm_filtered_covariance(&f2, hv(h), 0).sqrt();
        2.0 * (-jmax..=jmax)
            .map(|j| (fbm_cross_covariance(&f1, &f2, hv(h), j) / (s1 * s2)).powi(2))
            .sum::<f64>()
    }

    #[test]
    fn gamma_brownian_value() {
        let g = gamma_matrix(hv(0.5), 1, &Filter::second_difference(), 100).unwrap();
        assert!((g.matrix[(0, 0)] - 3.0).abs() < 1e-12);
        assert!(g.truncation_error < 1e-10);
        assert!(gamma_matrix(hv(0.5), 1, &Filter::second_difference(), 50).is_err());
    }

    #[test]
    fn gamma_matches_fourth_moment_identity() {
        for k in 1..10 {
            let h = k as f64 / 10.0;
            let g = gamma_matrix(hv(h), 5, &Filter::second_difference(), 400).unwrap();
            for i1 in 1..=5 {
                for i2 in 1..=5 {
                    let oracle = gamma_by_correlations(h, i1, i2, 400);
                    assert!(
                        (g.matrix[(i1 - 1, i2 - 1)] - oracle).abs() < 1e-8,
                        "h={h} ({i1},{i2})"
                    );
                    assert_eq!(g.matrix[(i1 - 1, i2 - 1)], g.matrix[(i2 - 1, i1 - 1)]);
                }
            }
        }
    }

    #[test]
    fn gamma_tail_estimate_is_sane() {
        let f = Filter::second_difference();
        let coarse = gamma_matrix(hv(0.9), 2, &f, 100).unwrap();
        let fine = gamma_matrix(hv(0.9), 2, &f, 3000).unwrap();
        let mut diff = 0.0f64;
        for i in 0..2 {
            for j in 0..2 {
                diff = diff.max((fine.matrix[(i, j)] - coarse.matrix[(i, j)]).abs());
            }
        }
        assert!(
            diff <= 2.0 * coarse.truncation_error && diff >= 0.2 * coarse.truncation_error,
            "{diff} vs {}",
            coarse.truncation_error
        );
    }

    #[test]
    fn qv_variance_closed_forms() {
        let v = qv_variance(&Mat::identity(2, 2));
        assert!((v - 1.0 / (2.0 * LN_2 * LN_2)).abs() < 1e-14);
        assert!((ir2_variance(&Mat::identity(4, 4)).unwrap() - 0.25).abs() < 1e-15);
        // With identity weights the GLS and OLS slope variances coincide.
        for p in 2..6 {
            let id = Mat::<f64>::identity(p, p);
            assert!((qv2_variance(&id).unwrap() - qv_variance(&id)).abs() < 1e-12);
        }
        assert!(ir2_variance(&Mat::zeros(3, 3)).is_err());
    }

    #[test]
    fn limit_variance_with_identity_model() {
        assert!(
            (limit_variance(EstimatorKind::Ir2, 0.3, 4, &IdentityModel).unwrap() - 0.25).abs()
                < 1e-15
        );
        assert_eq!(
            limit_variance(EstimatorKind::Ir, 0.3, 4, &IdentityModel).unwrap(),
            1.0
        );
    }

    #[test]
    fn sigma_ij_is_deterministic_and_symmetric() {
        let seed = SeedLineage::new(3, 0, Stream::AsymptoticMc);
        let a = sigma_ij(hv(0.5), 1, 3, 10, 20_000, seed).unwrap();
        let b = sigma_ij(hv(0.5), 1, 3, 10, 20_000, seed).unwrap();
        assert_eq!(a, b);
        let c = sigma_ij(hv(0.5), 3, 1, 10, 20_000, seed.with_replication(1)).unwrap();
        let se = (a.stderr.powi(2) + c.stderr.powi(2)).sqrt();
        assert!(
            (a.value - c.value).abs() < 2.0 * se.max(1e-12),
            "{a:?} {c:?}"
        );
        assert!(sigma_ij(hv(0.5), 1, 1, 5, 1000, seed).is_err());
    }

    #[test]
    fn sigma_tail_is_negligible() {
        let seed = SeedLineage::new(4, 0, Stream::AsymptoticMc);
        let k15 = sigma2(hv(0.7), 15, 40_000, seed).unwrap();
        let k30 = sigma2(hv(0.7), 30, 40_000, seed).unwrap();
        // The extra lags add independent noise on top of the shared part.
        let extra = (k30.stderr.powi(2) - k15.stderr.powi(2)).max(0.0).sqrt();
        assert!(
            (k30.value - k15.value).abs() < 2.0 * extra.max(k15.stderr),
            "{k15:?} {k30:?}"
        );
    }

    #[test]
    fn sigma_p_properties() {
        let seed = SeedLineage::new(5, 0, Stream::AsymptoticMc);
        for h in [0.3, 0.5, 0.7] {
            let s = sigma_p_matrix(hv(h), 3, 10, 20_000, seed).unwrap();
            for i in 0..3 {
                assert!(s.matrix[(i, i)] > 0.0);
                for j in 0..3 {
                    assert_eq!(s.matrix[(i, j)], s.matrix[(j, i)]);
                }
            }
            let d = lambda2_derivative(hv(h), 1);
            assert!(
                (s.matrix[(0, 0)] - s.sigma[(0, 0)] / (d * d)).abs() < 1e-12 * s.matrix[(0, 0)]
            );
            // GLS never does worse than the best single dilatation.
            let v = ir2_variance(&s.matrix).unwrap();
            let best = (0..3)
                .map(|i| s.matrix[(i, i)])
                .fold(f64::INFINITY, f64::min);
            assert!(v <= best * (1.0 + 1e-12));
        }
    }

    #[test]
    fn sigma_p_reproducible_across_seeds() {
        let a = sigma_p_matrix(
            hv(0.6),
            2,
            10,
            30_000,
            SeedLineage::new(6, 0, Stream::AsymptoticMc),
        )
        .unwrap();
        let b = sigma_p_matrix(
            hv(0.6),
            2,
            10,
            30_000,
            SeedLineage::new(7, 0, Stream::AsymptoticMc),
        )
        .unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let di = lambda2_derivative(hv(0.6), i + 1);
                let dj = lambda2_derivative(hv(0.6), j + 1);
                let se = (a.sigma_stderr[(i, j)].powi(2) + b.sigma_stderr[(i, j)].powi(2)).sqrt()
                    / (di * dj).abs();
                assert!(
                    (a.matrix[(i, j)] - b.matrix[(i, j)]).abs() < 3.0 * se,
                    "({i},{j})"
                );
            }
        }
    }

    #[test]
    fn repair_floors_negative_eigenvalues() {
        let m = Mat::<f64>::from_fn(2, 2, |i, j| if i == j { 1.0 } else { 1.5 });
        let (fixed, repaired) = repair_positive_definite(&m).unwrap();
        assert!(repaired);
        assert!(fixed.llt(Side::Lower).is_ok());
        let (same, repaired) = repair_positive_definite(&Mat::identity(3, 3)).unwrap();
        assert!(!repaired && same == Mat::<f64>::identity(3, 3));
    }

    fn tiny_config() -> TableConfig {
        TableConfig {
            h_min: 0.3,
            h_max: 0.7,
            h_step: 0.2,
            p: 2,
            lag_truncation: 10,
            samples: 2_000,
            seed: 1,
            gamma_truncation: 200,
        }
    }

    #[test]
    fn table_cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config();
        let built = AsymptoticTable::load_or_build_in(&cfg, dir.path()).unwrap();
        let loaded = AsymptoticTable::load_or_build_in(&cfg, dir.path()).unwrap();
        assert_eq!(built.h_grid, loaded.h_grid);
        for k in 0..built.h_grid.len() {
            assert_eq!(built.sigma_p[k], loaded.sigma_p[k]);
            assert_eq!(built.gamma[k], loaded.gamma[k]);
        }
        assert_eq!(loaded.mc_meta.build_seconds, built.mc_meta.build_seconds);
    }

    #[test]
    fn table_interpolation_and_range() {
        let table = AsymptoticTable::build(&tiny_config()).unwrap();
        let mid = table.gamma_at(0.4, 2).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let expect = 0.5 * (table.gamma[0][(i, j)] + table.gamma[1][(i, j)]);
                assert!((mid[(i, j)] - expect).abs() < 1e-14);
            }
        }
        assert!(matches!(
            clt_stderr(EstimatorKind::Ir, hv(0.2), 1000, 0.3, 1, &table),
            Err(Error::OutOfTableRange { .. })
        ));
        let se = clt_stderr(EstimatorKind::Qv, hv(0.5), 1000, 0.3, 2, &table).unwrap();
        let v = qv_variance(&table.gamma[1]);
        assert!((se - (v / (2.0 * 1000f64.powf(0.7))).sqrt()).abs() < 1e-15);
        assert!(table.gamma_at(0.5, 3).is_err());
        // The model view clamps instead of failing.
        assert_eq!(
            CovarianceModel::gamma(&table, 0.1, 2).unwrap(),
            table.gamma[0]
        );
    }
}
