//! Local Hurst function estimators.
//!
//! * IR: inverts the mean of `psi(x, y) = |x + y| / (|x| + |y|)` over
//!   consecutive second-order variations in a neighborhood of `t`.
//! * QV: half the slope of the log mean squared dilated variations against
//!   the log dilatation index.
//! * IR2: GLS combination of the IR estimates for dilatations `1..=p`.
//! * QV2: GLS version of the QV log-regression, which also yields an
//!   intercept.
//!
//! The GLS weights are the limit covariances evaluated at the pilot (IR or
//! QV) estimate, supplied through [`CovarianceModel`].

use std::fmt;
use std::str::FromStr;

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::Filter;
use crate::fractional_kernels::{lambda2_inverse, EPS_H};
use crate::gaussian_sampler::SampledPath;

/// Slack on the neighborhood boundary, in lattice units.
const BOUNDARY_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Ir,
    Qv,
    Ir2,
    Qv2,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 4] = [
        EstimatorKind::Qv,
        EstimatorKind::Qv2,
        EstimatorKind::Ir,
        EstimatorKind::Ir2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Ir => "ir",
            EstimatorKind::Qv => "qv",
            EstimatorKind::Ir2 => "ir2",
            EstimatorKind::Qv2 => "qv2",
        }
    }

    pub fn needs_model(self) -> bool {
        matches!(self, EstimatorKind::Ir2 | EstimatorKind::Qv2)
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ir" => Ok(EstimatorKind::Ir),
            "qv" => Ok(EstimatorKind::Qv),
            "ir2" => Ok(EstimatorKind::Ir2),
            "qv2" => Ok(EstimatorKind::Qv2),
            _ => Err(Error::InvalidConfig(format!("unknown estimator `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub estimator: EstimatorKind,
    pub alpha: f64,
    pub p: usize,
    pub filter: Filter,
}

impl EstimatorConfig {
    pub fn new(estimator: EstimatorKind, alpha: f64, p: usize) -> Result<Self> {
        Self::with_filter(estimator, alpha, p, Filter::second_difference())
    }

    pub fn with_filter(
        estimator: EstimatorKind,
        alpha: f64,
        p: usize,
        filter: Filter,
    ) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha = {alpha} not in (0, 1)"
            )));
        }
        let min_p = if estimator == EstimatorKind::Ir { 1 } else { 2 };
        if p < min_p {
            return Err(Error::InvalidConfig(format!(
                "{estimator} needs p >= {min_p}, got {p}"
            )));
        }
        if matches!(estimator, EstimatorKind::Ir | EstimatorKind::Ir2)
            && !filter.is_second_difference()
        {
            return Err(Error::InvalidConfig(
                "IR estimators are defined for the (1, -2, 1) filter only".into(),
            ));
        }
        Ok(Self {
            estimator,
            alpha,
            p,
            filter,
        })
    }
}

/// Limit covariances used as GLS weights.
pub trait CovarianceModel: Send + Sync {
    /// `Sigma^{(p)}(h)`, the covariance of the per-dilatation IR estimates.
    fn sigma_p(&self, h: f64, p: usize) -> Result<Mat<f64>>;
    /// `Gamma(h)`, the covariance of the log mean squared variations.
    fn gamma(&self, h: f64, p: usize) -> Result<Mat<f64>>;
}

/// Unit weights; turns both GLS estimators into their OLS counterparts.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityModel;

impl CovarianceModel for IdentityModel {
    fn sigma_p(&self, _h: f64, p: usize) -> Result<Mat<f64>> {
        Ok(Mat::identity(p, p))
    }

    fn gamma(&self, _h: f64, p: usize) -> Result<Mat<f64>> {
        Ok(Mat::identity(p, p))
    }
}

/// Contiguous index set `{start, ..., end}` of lattice points `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Neighborhood {
    pub start: usize,
    pub end: usize,
}

impl Neighborhood {
    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn iter(&self) -> std::ops::RangeInclusive<usize> {
        self.start..=self.end
    }

    /// Restricts to `k <= max_k`.
    pub fn clip(&self, max_k: usize) -> Option<Self> {
        (max_k >= self.start).then(|| Self {
            start: self.start,
            end: self.end.min(max_k),
        })
    }
}

/// `{k in 1..=n-q-1 : |k/n - t| <= n^{-alpha}}`.
pub fn neighborhood(n: usize, alpha: f64, t: f64, q: usize) -> Result<Neighborhood> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::Domain(format!("t = {t} not in (0, 1)")));
    }
    let empty = || Error::EmptyNeighborhood { t, n, alpha };
    let nf = n as f64;
    let radius = nf.powf(-alpha);
    let lo = (nf * (t - radius) - BOUNDARY_SLACK).ceil().max(1.0) as usize;
    let hi = (nf * (t + radius) + BOUNDARY_SLACK).floor();
    let max_k = n.checked_sub(q + 1).ok_or_else(empty)?;
    if hi < 1.0 {
        return Err(empty());
    }
    let hi = (hi as usize).min(max_k);
    if lo > hi {
        return Err(empty());
    }
    Ok(Neighborhood { start: lo, end: hi })
}

/// `psi(x, y)`, equal to 1 when both arguments vanish.
pub fn psi(x: f64, y: f64) -> f64 {
    let den = x.abs() + y.abs();
    if den == 0.0 {
        1.0
    } else {
        (x + y).abs() / den
    }
}

/// Dilated variations of one path, shared by all estimators.
#[derive(Debug, Clone)]
pub struct VariationBank {
    n: usize,
    filter: Filter,
    /// `dilated[i - 1][k - 1]` is the `i`-dilated variation at lattice `k`.
    dilated: Vec<Vec<f64>>,
}

impl VariationBank {
    pub fn new(path: &SampledPath, filter: &Filter, p: usize) -> Result<Self> {
        let dilated = (1..=p)
            .map(|i| filter.dilate(i)?.apply(&path.values))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            n: path.n,
            filter: filter.clone(),
            dilated,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.dilated.len()
    }

    /// Variations at lattice indices `k in 1..=n-1-q i`.
    pub fn variations(&self, i: usize) -> &[f64] {
        &self.dilated[i - 1]
    }

    /// Neighborhood of `t` for the undilated filter.
    pub fn base_neighborhood(&self, alpha: f64, t: f64) -> Result<Neighborhood> {
        neighborhood(self.n, alpha, t, self.filter.q())
    }

    /// `S_n^{(i)}(t)` over pairs `(k, k + 1)` that fit in the path.
    pub fn ir_statistic(&self, i: usize, nbhd: &Neighborhood, t: f64, alpha: f64) -> Result<f64> {
        let v = self.variations(i);
        let nb = nbhd
            .clip(v.len().saturating_sub(1))
            .ok_or(Error::EmptyNeighborhood {
                t,
                n: self.n,
                alpha,
            })?;
        let sum: f64 = nb.iter().map(|k| psi(v[k - 1], v[k])).sum();
        Ok(sum / nb.len() as f64)
    }

    /// `(log mean_k |V^{a(i)}(k)|^2)_{i = 1..p}`.
    pub fn qv_log_vector(
        &self,
        p: usize,
        nbhd: &Neighborhood,
        t: f64,
        alpha: f64,
    ) -> Result<Vec<f64>> {
        (1..=p)
            .map(|i| {
                let v = self.variations(i);
                let nb = nbhd.clip(v.len()).ok_or(Error::EmptyNeighborhood {
                    t,
                    n: self.n,
                    alpha,
                })?;
                let ms = nb.iter().map(|k| v[k - 1] * v[k - 1]).sum::<f64>() / nb.len() as f64;
                if ms == 0.0 {
                    return Err(Error::DegenerateVariations { dilatation: i });
                }
                Ok(ms.ln())
            })
            .collect()
    }
}

/// `S_n(t)` for a path, an already dilated `a*` filter and a neighborhood.
pub fn ir_statistic(path: &SampledPath, f_dilated: &Filter, nbhd: &Neighborhood) -> Result<f64> {
    let v = f_dilated.apply(&path.values)?;
    let err = Error::EmptyNeighborhood {
        t: f64::NAN,
        n: path.n,
        alpha: f64::NAN,
    };
    let nb = nbhd.clip(v.len().saturating_sub(1)).ok_or(err)?;
    let sum: f64 = nb.iter().map(|k| psi(v[k - 1], v[k])).sum();
    Ok(sum / nb.len() as f64)
}

/// The log mean squared variation vector of `cfg.p` dilatations.
pub fn qv_log_vector(
    path: &SampledPath,
    cfg: &EstimatorConfig,
    nbhd: &Neighborhood,
) -> Result<Vec<f64>> {
    VariationBank::new(path, &cfg.filter, cfg.p)?.qv_log_vector(cfg.p, nbhd, f64::NAN, cfg.alpha)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateCurve {
    pub ts: Vec<f64>,
    /// `NaN` where `valid` is false.
    pub h_hat: Vec<f64>,
    pub clamp_flags: Vec<bool>,
    pub valid: Vec<bool>,
    /// The GLS weight matrix was singular and unit weights were used.
    pub fallback_flags: Vec<bool>,
    /// Predicted CLT standard errors, `NaN` where unavailable.
    pub stderr: Option<Vec<f64>>,
    /// QV2 intercept `C`.
    pub intercept: Option<Vec<f64>>,
    pub config: EstimatorConfig,
}

impl EstimateCurve {
    fn empty(cfg: &EstimatorConfig, ts: &[f64]) -> Self {
        let m = ts.len();
        Self {
            ts: ts.to_vec(),
            h_hat: vec![f64::NAN; m],
            clamp_flags: vec![false; m],
            valid: vec![false; m],
            fallback_flags: vec![false; m],
            stderr: None,
            intercept: None,
            config: cfg.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.ts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ts.is_empty()
    }
}

/// Per-point output of one estimator.
struct Point {
    h: f64,
    clamped: bool,
    fallback: bool,
    intercept: f64,
}

fn clamp_h(raw: f64) -> (f64, bool) {
    if raw < EPS_H {
        (EPS_H, true)
    } else if raw > 1.0 - EPS_H {
        (1.0 - EPS_H, true)
    } else {
        (raw, false)
    }
}

/// Centered log dilatation indices `A`.
pub fn centered_log_indices(p: usize) -> Vec<f64> {
    let logs: Vec<f64> = (1..=p).map(|i| (i as f64).ln()).collect();
    let mean = logs.iter().sum::<f64>() / p as f64;
    logs.iter().map(|l| l - mean).collect()
}

/// `1/2 (A . T) / (A . A)`.
pub fn qv_slope(log_vector: &[f64]) -> f64 {
    let a = centered_log_indices(log_vector.len());
    let num: f64 = a.iter().zip(log_vector).map(|(a, t)| a * t).sum();
    let den: f64 = a.iter().map(|a| a * a).sum();
    0.5 * num / den
}

/// `w = M^{-1} 1 / (1' M^{-1} 1)`, or `None` when `M` is not positive definite.
pub fn gls_mean_weights(m: &Mat<f64>) -> Option<Vec<f64>> {
    let p = m.nrows();
    let llt = m.llt(Side::Lower).ok()?;
    let x = llt.solve(Mat::<f64>::from_fn(p, 1, |_, _| 1.0));
    let total: f64 = (0..p).map(|i| x[(i, 0)]).sum();
    if !(total.is_finite() && total > 0.0) {
        return None;
    }
    Some((0..p).map(|i| x[(i, 0)] / total).collect())
}

/// GLS fit of `y` on columns `(x, 1)` with weight matrix `M^{-1}`; returns
/// `(slope, intercept)` or `None` when a system is singular.
pub fn gls_line(x: &[f64], y: &[f64], m: &Mat<f64>) -> Option<(f64, f64)> {
    let p = x.len();
    let llt = m.llt(Side::Lower).ok()?;
    let design = Mat::<f64>::from_fn(p, 2, |i, j| if j == 0 { x[i] } else { 1.0 });
    let mi_d = llt.solve(&design);
    let mi_y = llt.solve(Mat::<f64>::from_fn(p, 1, |i, _| y[i]));
    let mut g = [[0.0; 2]; 2];
    let mut b = [0.0; 2];
    for r in 0..2 {
        for c in 0..2 {
            g[r][c] = (0..p).map(|i| design[(i, r)] * mi_d[(i, c)]).sum();
        }
        b[r] = (0..p).map(|i| design[(i, r)] * mi_y[(i, 0)]).sum();
    }
    let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
    if !(det.abs() > 1e-300) || !det.is_finite() {
        return None;
    }
    let slope = (g[1][1] * b[0] - g[0][1] * b[1]) / det;
    let intercept = (g[0][0] * b[1] - g[1][0] * b[0]) / det;
    Some((slope, intercept))
}

fn ir_point(bank: &VariationBank, cfg: &EstimatorConfig, t: f64) -> Result<Point> {
    let nb = bank.base_neighborhood(cfg.alpha, t)?;
    let inv = lambda2_inverse(bank.ir_statistic(1, &nb, t, cfg.alpha)?, 1)?;
    Ok(Point {
        h: inv.h,
        clamped: inv.clamped,
        fallback: false,
        intercept: f64::NAN,
    })
}

fn qv_point(bank: &VariationBank, cfg: &EstimatorConfig, t: f64) -> Result<Point> {
    let nb = bank.base_neighborhood(cfg.alpha, t)?;
    let tv = bank.qv_log_vector(cfg.p, &nb, t, cfg.alpha)?;
    let (h, clamped) = clamp_h(qv_slope(&tv));
    Ok(Point {
        h,
        clamped,
        fallback: false,
        intercept: f64::NAN,
    })
}

fn ir2_point(
    bank: &VariationBank,
    cfg: &EstimatorConfig,
    t: f64,
    model: &dyn CovarianceModel,
) -> Result<Point> {
    let nb = bank.base_neighborhood(cfg.alpha, t)?;
    let mut hs = Vec::with_capacity(cfg.p);
    let mut any_clamped = false;
    for i in 1..=cfg.p {
        let inv = lambda2_inverse(bank.ir_statistic(i, &nb, t, cfg.alpha)?, i)?;
        any_clamped |= inv.clamped;
        hs.push(inv.h);
    }
    let sigma = model.sigma_p(hs[0], cfg.p)?;
    let (weights, fallback) = match gls_mean_weights(&sigma) {
        Some(w) => (w, false),
        None => {
            log::debug!("{}", Error::SingularWeightMatrix);
            (vec![1.0 / cfg.p as f64; cfg.p], true)
        }
    };
    let raw: f64 = weights.iter().zip(&hs).map(|(w, h)| w * h).sum();
    let (h, clamped) = clamp_h(raw);
    Ok(Point {
        h,
        clamped: clamped || any_clamped,
        fallback,
        intercept: f64::NAN,
    })
}

fn qv2_point(
    bank: &VariationBank,
    cfg: &EstimatorConfig,
    t: f64,
    model: &dyn CovarianceModel,
) -> Result<Point> {
    let nb = bank.base_neighborhood(cfg.alpha, t)?;
    let tv = bank.qv_log_vector(cfg.p, &nb, t, cfg.alpha)?;
    let (pilot, _) = clamp_h(qv_slope(&tv));
    let nf = bank.n() as f64;
    let x: Vec<f64> = (1..=cfg.p).map(|i| (i as f64 / nf).ln()).collect();
    let gamma = model.gamma(pilot, cfg.p)?;
    let (fit, fallback) = match gls_line(&x, &tv, &gamma) {
        Some(f) => (f, false),
        None => {
            log::debug!("{}", Error::SingularWeightMatrix);
            let id = Mat::<f64>::identity(cfg.p, cfg.p);
            (
                gls_line(&x, &tv, &id).ok_or(Error::SingularWeightMatrix)?,
                true,
            )
        }
    };
    let (h, clamped) = clamp_h(0.5 * fit.0);
    Ok(Point {
        h,
        clamped,
        fallback,
        intercept: fit.1,
    })
}

/// Evaluates `cfg.estimator` at each `t` on precomputed variations. Points
/// whose neighborhood is empty are marked invalid; other errors abort.
pub fn estimate_with_bank(
    bank: &VariationBank,
    cfg: &EstimatorConfig,
    ts: &[f64],
    model: Option<&dyn CovarianceModel>,
) -> Result<EstimateCurve> {
    let needed = if cfg.estimator == EstimatorKind::Ir {
        1
    } else {
        cfg.p
    };
    if bank.p() < needed {
        return Err(Error::InvalidConfig(format!(
            "variation bank holds {} dilatations, {needed} needed",
            bank.p()
        )));
    }
    if cfg.estimator.needs_model() && model.is_none() {
        return Err(Error::InvalidConfig(format!(
            "{} needs an asymptotic table",
            cfg.estimator
        )));
    }
    let mut curve = EstimateCurve::empty(cfg, ts);
    let mut intercept = vec![f64::NAN; ts.len()];
    for (j, &t) in ts.iter().enumerate() {
        let point = match cfg.estimator {
            EstimatorKind::Ir => ir_point(bank, cfg, t),
            EstimatorKind::Qv => qv_point(bank, cfg, t),
            EstimatorKind::Ir2 => ir2_point(bank, cfg, t, model.unwrap()),
            EstimatorKind::Qv2 => qv2_point(bank, cfg, t, model.unwrap()),
        };
        match point {
            Ok(pt) => {
                curve.h_hat[j] = pt.h;
                curve.clamp_flags[j] = pt.clamped;
                curve.fallback_flags[j] = pt.fallback;
                curve.valid[j] = true;
                intercept[j] = pt.intercept;
            }
            Err(Error::EmptyNeighborhood { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    if cfg.estimator == EstimatorKind::Qv2 {
        curve.intercept = Some(intercept);
    }
    Ok(curve)
}

fn check_kind(cfg: &EstimatorConfig, kind: EstimatorKind) -> Result<()> {
    if cfg.estimator != kind {
        return Err(Error::InvalidConfig(format!(
            "configuration is for {}, not {kind}",
            cfg.estimator
        )));
    }
    Ok(())
}

pub fn estimate_ir(path: &SampledPath, cfg: &EstimatorConfig, ts: &[f64]) -> Result<EstimateCurve> {
    check_kind(cfg, EstimatorKind::Ir)?;
    estimate_with_bank(&VariationBank::new(path, &cfg.filter, 1)?, cfg, ts, None)
}

pub fn estimate_qv(path: &SampledPath, cfg: &EstimatorConfig, ts: &[f64]) -> Result<EstimateCurve> {
    check_kind(cfg, EstimatorKind::Qv)?;
    estimate_with_bank(
        &VariationBank::new(path, &cfg.filter, cfg.p)?,
        cfg,
        ts,
        None,
    )
}

pub fn estimate_ir2(
    path: &SampledPath,
    cfg: &EstimatorConfig,
    ts: &[f64],
    model: &dyn CovarianceModel,
) -> Result<EstimateCurve> {
    check_kind(cfg, EstimatorKind::Ir2)?;
    estimate_with_bank(
        &VariationBank::new(path, &cfg.filter, cfg.p)?,
        cfg,
        ts,
        Some(model),
    )
}

pub fn estimate_qv2(
    path: &SampledPath,
    cfg: &EstimatorConfig,
    ts: &[f64],
    model: &dyn CovarianceModel,
) -> Result<EstimateCurve> {
    check_kind(cfg, EstimatorKind::Qv2)?;
    estimate_with_bank(
        &VariationBank::new(path, &cfg.filter, cfg.p)?,
        cfg,
        ts,
        Some(model),
    )
}

/// Dispatches on `cfg.estimator`.
pub fn estimate(
    path: &SampledPath,
    cfg: &EstimatorConfig,
    ts: &[f64],
    model: Option<&dyn CovarianceModel>,
) -> Result<EstimateCurve> {
    let p = if cfg.estimator == EstimatorKind::Ir {
        1
    } else {
        cfg.p
    };
    estimate_with_bank(&VariationBank::new(path, &cfg.filter, p)?, cfg, ts, model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fractional_kernels::{lambda2, HurstValue};
    use crate::gaussian_sampler::{PathSampler, SeedLineage};
    use proptest::prelude::*;
    use std::f64::consts::LN_2;

    fn cfg(kind: EstimatorKind, alpha: f64, p: usize) -> EstimatorConfig {
        EstimatorConfig::new(kind, alpha, p).unwrap()
    }

    fn fbm_path(h: f64, n: usize, seed: u64) -> SampledPath {
        PathSampler::fbm(HurstValue::new(h).unwrap(), n)
            .unwrap()
            .sample(SeedLineage::path(seed, 0))
    }

    /// Log mean squares exactly proportional to `i^{2h}`.
    fn exact_log_vector(h: f64, c: f64, p: usize) -> Vec<f64> {
        (1..=p).map(|i| 2.0 * h * (i as f64).ln() + c).collect()
    }

    #[test]
    fn config_validation() {
        assert!(EstimatorConfig::new(EstimatorKind::Ir, 0.0, 1).is_err());
        assert!(EstimatorConfig::new(EstimatorKind::Qv, 0.3, 1).is_err());
        assert!(EstimatorConfig::new(EstimatorKind::Ir2, 0.3, 1).is_err());
        assert!(EstimatorConfig::new(EstimatorKind::Ir, 0.3, 1).is_ok());
        let d1 = Filter::first_difference();
        assert!(EstimatorConfig::with_filter(EstimatorKind::Ir, 0.3, 1, d1.clone()).is_err());
        assert!(EstimatorConfig::with_filter(EstimatorKind::Qv, 0.3, 3, d1).is_ok());
        assert_eq!("IR2".parse::<EstimatorKind>().unwrap(), EstimatorKind::Ir2);
    }

    #[test]
    fn neighborhood_examples() {
        assert_eq!(
            neighborhood(100, 0.5, 0.5, 2).unwrap(),
            Neighborhood { start: 40, end: 60 }
        );
        let edge = neighborhood(100, 0.5, 0.005, 2).unwrap();
        assert_eq!((edge.start, edge.end, edge.len()), (1, 10, 10));
        let right = neighborhood(100, 0.5, 0.995, 2).unwrap();
        assert_eq!(right.end, 97);
        let n = 6000usize;
        let base = (2.0 * (n as f64).powf(0.7)).floor() as usize;
        for k in 1..50 {
            let v = neighborhood(n, 0.3, 0.2 + k as f64 * 0.012, 2)
                .unwrap()
                .len();
            assert!(v == base || v == base + 1, "{v} vs {base}");
        }
        assert!(matches!(
            neighborhood(100, 0.9, 0.999, 2),
            Err(Error::EmptyNeighborhood { .. })
        ));
        assert!(neighborhood(100, 0.5, 1.0, 2).is_err());
    }

    #[test]
    fn psi_limits() {
        assert_eq!(psi(0.0, 0.0), 1.0);
        assert_eq!(psi(2.0, 2.0), 1.0);
        assert_eq!(psi(2.0, -2.0), 0.0);
        assert_eq!(psi(-1.5, -0.5), psi(1.5, 0.5));
    }

    #[test]
    fn ir_statistic_extremes() {
        let a = Filter::second_difference();
        // Second differences of k^2 are all 2.
        let quad = SampledPath::from_values((1..40).map(|k| (k * k) as f64).collect()).unwrap();
        let nb = Neighborhood { start: 5, end: 20 };
        assert_eq!(ir_statistic(&quad, &a, &nb).unwrap(), 1.0);
        // Alternating path: second differences alternate in sign.
        let alt = SampledPath::from_values(
            (1..40)
                .map(|k| if k % 2 == 0 { 1.0 } else { -1.0 })
                .collect(),
        )
        .unwrap();
        assert_eq!(ir_statistic(&alt, &a, &nb).unwrap(), 0.0);
    }

    #[test]
    fn qv_log_vector_of_quadratic() {
        let n = 200;
        let path =
            SampledPath::from_values((1..n).map(|k| (k as f64 / n as f64).powi(2)).collect())
                .unwrap();
        let c = cfg(EstimatorKind::Qv, 0.5, 5);
        let nb = neighborhood(n, 0.5, 0.5, 2).unwrap();
        let tv = qv_log_vector(&path, &c, &nb).unwrap();
        for (i, t) in tv.iter().enumerate() {
            let i = (i + 1) as f64;
            let expect = ((2.0 * i * i / (n * n) as f64).powi(2)).ln();
            assert!((t - expect).abs() < 1e-9, "{t} vs {expect}");
        }
        let flat = SampledPath::from_values(vec![3.0; n - 1]).unwrap();
        assert!(matches!(
            qv_log_vector(&flat, &c, &nb),
            Err(Error::DegenerateVariations { dilatation: 1 })
        ));
    }

    #[test]
    fn qv_regression_closed_forms() {
        let a = centered_log_indices(2);
        assert!((a[0] + LN_2 / 2.0).abs() < 1e-15 && (a[1] - LN_2 / 2.0).abs() < 1e-15);
        let tv = [0.3, 1.1];
        assert!((qv_slope(&tv) - (tv[1] - tv[0]) / (2.0 * LN_2)).abs() < 1e-15);
        for &h in &[0.05, 0.3, 0.6, 0.95] {
            for &c in &[-40.0, 0.0, 7.5] {
                assert!((qv_slope(&exact_log_vector(h, c, 5)) - h).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gls_identities() {
        let p = 4;
        let id = Mat::<f64>::identity(p, p);
        let w = gls_mean_weights(&id).unwrap();
        assert!(w.iter().all(|x| (x - 0.25).abs() < 1e-15));
        let m = Mat::<f64>::from_fn(p, p, |i, j| if i == j { 2.0 + i as f64 } else { 0.3 });
        let w = gls_mean_weights(&m).unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        let hs = [0.41; 4];
        let est: f64 = w.iter().zip(&hs).map(|(w, h)| w * h).sum();
        assert!((est - 0.41).abs() < 1e-14);
        assert!(gls_mean_weights(&Mat::<f64>::zeros(p, p)).is_none());

        // GLS with exact line data recovers the line for any weights.
        let x: Vec<f64> = (1..=5).map(|i| (i as f64 / 1000.0).ln()).collect();
        let y: Vec<f64> = x.iter().map(|x| 1.2 * x - 3.0).collect();
        let m5 = Mat::<f64>::from_fn(5, 5, |i, j| 1.0 / (1.0 + (i as f64 - j as f64).abs()));
        let (s, c) = gls_line(&x, &y, &m5).unwrap();
        assert!((s - 1.2).abs() < 1e-10 && (c + 3.0).abs() < 1e-9);
        // Identity weights give OLS, whose slope is the centered-index regression.
        let y2 = [0.1, -0.3, 0.7, 0.2, 0.9];
        let (s, _) = gls_line(&x, &y2, &Mat::identity(5, 5)).unwrap();
        assert!((0.5 * s - qv_slope(&y2)).abs() < 1e-12);
    }

    #[test]
    fn identity_model_makes_ir2_an_average() {
        let path = fbm_path(0.6, 1024, 1);
        let c2 = cfg(EstimatorKind::Ir2, 0.3, 4);
        let bank = VariationBank::new(&path, &c2.filter, 4).unwrap();
        let t = 0.5;
        let nb = bank.base_neighborhood(0.3, t).unwrap();
        let mean = (1..=4)
            .map(|i| {
                lambda2_inverse(bank.ir_statistic(i, &nb, t, 0.3).unwrap(), i)
                    .unwrap()
                    .h
            })
            .sum::<f64>()
            / 4.0;
        let curve = estimate_ir2(&path, &c2, &[t], &IdentityModel).unwrap();
        assert!((curve.h_hat[0] - mean).abs() < 1e-15);
    }

    #[test]
    fn identity_model_makes_qv2_ols() {
        let path = fbm_path(0.4, 1024, 2);
        let ts = [0.3, 0.5, 0.7];
        let qv = estimate_qv(&path, &cfg(EstimatorKind::Qv, 0.4, 5), &ts).unwrap();
        let qv2 =
            estimate_qv2(&path, &cfg(EstimatorKind::Qv2, 0.4, 5), &ts, &IdentityModel).unwrap();
        for j in 0..3 {
            assert!((qv.h_hat[j] - qv2.h_hat[j]).abs() < 1e-12);
        }
        assert!(qv2
            .intercept
            .as_ref()
            .unwrap()
            .iter()
            .all(|c| c.is_finite()));
    }

    #[test]
    fn invalid_points_are_flagged() {
        let path = fbm_path(0.5, 256, 3);
        let curve = estimate_ir(&path, &cfg(EstimatorKind::Ir, 0.9, 1), &[0.999, 0.5]).unwrap();
        assert!(!curve.valid[0] && curve.h_hat[0].is_nan());
        assert!(curve.valid[1]);
        assert!(estimate_qv(&path, &cfg(EstimatorKind::Ir, 0.3, 1), &[0.5]).is_err());
    }

    #[test]
    fn ir_and_qv_are_consistent() {
        let n = 4096;
        let sampler = PathSampler::fbm(HurstValue::new(0.5).unwrap(), n).unwrap();
        let mut slopes = Vec::new();
        let mut s_mean = 0.0;
        let reps = 20;
        for r in 0..reps {
            let path = sampler.sample(SeedLineage::path(77, r));
            let c = cfg(EstimatorKind::Qv, 0.2, 5);
            let bank = VariationBank::new(&path, &c.filter, 5).unwrap();
            let nb = bank.base_neighborhood(0.2, 0.5).unwrap();
            let tv = bank.qv_log_vector(5, &nb, 0.5, 0.2).unwrap();
            slopes.push(2.0 * qv_slope(&tv));
            s_mean += bank.ir_statistic(1, &nb, 0.5, 0.2).unwrap() / reps as f64;
        }
        let mean_slope = slopes.iter().sum::<f64>() / reps as f64;
        assert!((mean_slope - 1.0).abs() < 0.1, "{mean_slope}");
        assert!(
            (s_mean - lambda2(HurstValue::new(0.5).unwrap())).abs() < 0.02,
            "{s_mean}"
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn ir_scale_and_sign_invariance(seed in 0u64..1000, c in prop_oneof![Just(-1.0), Just(2.0), Just(0.25), Just(5.0), -50.0f64..50.0]) {
            prop_assume!(c != 0.0);
            let path = fbm_path(0.35, 300, seed);
            let ts = [0.2, 0.5, 0.8];
            let scaled = path.scaled(c);
            for kind in [EstimatorKind::Ir, EstimatorKind::Ir2] {
                let cf = cfg(kind, 0.3, 3);
                let a = estimate(&path, &cf, &ts, Some(&IdentityModel)).unwrap();
                let b = estimate(&scaled, &cf, &ts, Some(&IdentityModel)).unwrap();
                for j in 0..ts.len() {
                    if c == -1.0 || (c.abs().log2().fract() == 0.0) {
                        prop_assert_eq!(a.h_hat[j], b.h_hat[j]);
                    } else {
                        prop_assert!((a.h_hat[j] - b.h_hat[j]).abs() < 1e-9);
                    }
                }
            }
        }

        #[test]
        fn qv_scale_invariance(seed in 0u64..1000, c in prop_oneof![Just(-3.0), Just(1e-3), 0.1f64..100.0]) {
            let path = fbm_path(0.65, 300, seed);
            let ts = [0.25, 0.5, 0.75];
            let scaled = path.scaled(c);
            for kind in [EstimatorKind::Qv, EstimatorKind::Qv2] {
                let cf = cfg(kind, 0.3, 4);
                let a = estimate(&path, &cf, &ts, Some(&IdentityModel)).unwrap();
                let b = estimate(&scaled, &cf, &ts, Some(&IdentityModel)).unwrap();
                for j in 0..ts.len() {
                    prop_assert!((a.h_hat[j] - b.h_hat[j]).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn estimates_stay_in_range(seed in 0u64..1000, h in 0.05f64..0.95) {
            let path = fbm_path(h, 200, seed);
            let ts: Vec<f64> = (1..10).map(|k| k as f64 / 10.0).collect();
            for kind in EstimatorKind::ALL {
                let curve = estimate(&path, &cfg(kind, 0.2, 3), &ts, Some(&IdentityModel)).unwrap();
                for (v, ok) in curve.h_hat.iter().zip(&curve.valid) {
                    if *ok {
                        prop_assert!((EPS_H..=1.0 - EPS_H).contains(v));
                    }
                }
            }
        }
    }
}
