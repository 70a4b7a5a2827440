//! Exact covariance of the normalized generalized multifractional Brownian
//! motion `X_{(a+, a-)}`.
//!
//! For `t <= t'` with `H = H(t)`, `H' = H(t')`, `S = H + H'`:
//!
//! ```text
//! Q = 1/2 (L11 t^S + L22 t'^S - L22 (t' - t)^S)                    S != 1
//! L11 = L cos(dbeta - pi S/2) / cos(pi S/2)
//! L22 = L cos(dbeta + pi S/2) / cos(pi S/2)
//! L   = K(H) K(H') / K(S/2)^2,     dbeta = beta(H') - beta(H)
//! ```
//!
//! The pole of `1/cos(pi S/2)` at `S = 1` is removable. Close to it the kernel
//! is evaluated through `omega = S - 1`:
//!
//! ```text
//! Q = 1/2 L cos(dbeta) (t^S + t'^S - (t' - t)^S)
//!   - 1/2 L sin(dbeta) omega/tan(omega pi/2)
//!       * (t e(t) - t' e(t') + (t' - t) e(t' - t)),    e(x) = (x^omega - 1)/omega
//! ```
//!
//! In the well-balanced case `a+ = a-` we have `beta = 0` and the kernel is
//! the classical MBM covariance `1/2 L (t^S + t'^S - |t' - t|^S)`.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::filters::Filter;
use crate::fractional_kernels::HurstValue;

/// `|H + H' - 1|` below which the continuation form is used.
pub const SEAM_SWITCH: f64 = 1e-4;

/// `|omega|` below which `omega / tan(omega pi / 2)` uses its Taylor series.
const COT_SERIES_SWITCH: f64 = 1e-3;

/// Points used to validate a Hurst field at construction.
const FIELD_CHECK_POINTS: usize = 10_000;

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum FieldKind {
    Closed(ScalarFn),
    Sampled { grid: Vec<f64>, values: Vec<f64> },
}

/// The function `t -> H(t)` on `(0, 1)`.
#[derive(Clone)]
pub struct HurstField {
    label: String,
    kind: FieldKind,
    eta: Option<f64>,
}

impl fmt::Debug for HurstField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.kind {
            FieldKind::Closed(_) => "closed_form".to_string(),
            FieldKind::Sampled { grid, .. } => format!("sampled({} nodes)", grid.len()),
        };
        f.debug_struct("HurstField")
            .field("label", &self.label)
            .field("kind", &kind)
            .field("eta", &self.eta)
            .finish()
    }
}

impl HurstField {
    /// A closed-form field. `eta` is the declared Holder regularity, `None`
    /// for smooth functions.
    pub fn closed_form<F>(label: impl Into<String>, f: F, eta: Option<f64>) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let field = Self {
            label: label.into(),
            kind: FieldKind::Closed(Arc::new(f)),
            eta,
        };
        field.validate()?;
        Ok(field)
    }

    /// A field known on an increasing grid, linearly interpolated between
    /// nodes and held constant beyond the end nodes.
    pub fn sampled(
        label: impl Into<String>,
        grid: Vec<f64>,
        values: Vec<f64>,
        eta: Option<f64>,
    ) -> Result<Self> {
        if grid.len() != values.len() || grid.len() < 2 {
            return Err(Error::InvalidConfig(
                "sampled Hurst field needs matching grid/value vectors of length >= 2".into(),
            ));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidConfig(
                "Hurst field grid must increase".into(),
            ));
        }
        let field = Self {
            label: label.into(),
            kind: FieldKind::Sampled { grid, values },
            eta,
        };
        field.validate()?;
        Ok(field)
    }

    pub fn constant(h: HurstValue) -> Self {
        let v = h.get();
        Self {
            label: format!("constant({v})"),
            kind: FieldKind::Closed(Arc::new(move |_| v)),
            eta: None,
        }
    }

    fn validate(&self) -> Result<()> {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for k in 1..=FIELD_CHECK_POINTS {
            let h = self.eval(k as f64 / (FIELD_CHECK_POINTS + 1) as f64);
            if !h.is_finite() {
                return Err(Error::Domain(format!(
                    "Hurst field `{}` is not finite",
                    self.label
                )));
            }
            lo = lo.min(h);
            hi = hi.max(h);
        }
        if !(lo > 0.0 && hi < 1.0) {
            return Err(Error::Domain(format!(
                "Hurst field `{}` ranges over [{lo}, {hi}], outside (0, 1)",
                self.label
            )));
        }
        Ok(())
    }

    pub fn eval(&self, t: f64) -> f64 {
        match &self.kind {
            FieldKind::Closed(f) => f(t),
            FieldKind::Sampled { grid, values } => {
                let last = grid.len() - 1;
                if t <= grid[0] {
                    return values[0];
                }
                if t >= grid[last] {
                    return values[last];
                }
                let j = grid.partition_point(|&g| g <= t);
                let (t0, t1) = (grid[j - 1], grid[j]);
                let w = (t - t0) / (t1 - t0);
                values[j - 1] + w * (values[j] - values[j - 1])
            }
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn eta(&self) -> Option<f64> {
        self.eta
    }

    pub fn is_sampled(&self) -> bool {
        matches!(self.kind, FieldKind::Sampled { .. })
    }
}

/// Covariance model of `sigma(t) X_{(a+, a-)}(t)`.
#[derive(Clone)]
pub struct MbmSpec {
    pub a_plus: f64,
    pub a_minus: f64,
    pub hurst: HurstField,
    scale: Option<ScalarFn>,
}

impl fmt::Debug for MbmSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MbmSpec")
            .field("a_plus", &self.a_plus)
            .field("a_minus", &self.a_minus)
            .field("hurst", &self.hurst)
            .field("scaled", &self.scale.is_some())
            .finish()
    }
}

impl MbmSpec {
    pub fn new(a_plus: f64, a_minus: f64, hurst: HurstField) -> Result<Self> {
        if !(a_plus.is_finite() && a_minus.is_finite()) || (a_plus == 0.0 && a_minus == 0.0) {
            return Err(Error::DegenerateSpec(format!(
                "(a+, a-) = ({a_plus}, {a_minus})"
            )));
        }
        Ok(Self {
            a_plus,
            a_minus,
            hurst,
            scale: None,
        })
    }

    /// The original MBM, `a+ = a- = 1`.
    pub fn standard(hurst: HurstField) -> Self {
        Self {
            a_plus: 1.0,
            a_minus: 1.0,
            hurst,
            scale: None,
        }
    }

    /// Multiplies the process by a positive deterministic function.
    pub fn with_scale<F>(mut self, scale: F) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        for k in 1..=FIELD_CHECK_POINTS {
            let s = scale(k as f64 / (FIELD_CHECK_POINTS + 1) as f64);
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::DegenerateSpec(
                    "scale function must be positive".into(),
                ));
            }
        }
        self.scale = Some(Arc::new(scale));
        Ok(self)
    }

    pub fn is_well_balanced(&self) -> bool {
        self.a_plus == self.a_minus
    }

    fn scale_at(&self, t: f64) -> f64 {
        self.scale.as_ref().map_or(1.0, |s| s(t))
    }

    pub fn label(&self) -> String {
        let mut s = format!(
            "mbm(a+={}, a-={}, H={})",
            self.a_plus,
            self.a_minus,
            self.hurst.label()
        );
        if self.scale.is_some() {
            s.push_str(" scaled");
        }
        s
    }
}

/// `K(H) = (H Gamma(2H) sin(pi H) / pi)^{1/2}`.
pub fn kconst(h: HurstValue) -> f64 {
    kconst_raw(h.get())
}

fn kconst_raw(h: f64) -> f64 {
    (h * libm::tgamma(2.0 * h) * (PI * h).sin() / PI).sqrt()
}

/// `beta(H) = Arg(a+ e^{-i(H+1/2)pi/2} + a- e^{i(H+1/2)pi/2})` in `[0, 2 pi)`;
/// zero in the well-balanced case.
pub fn beta(spec: &MbmSpec, h: HurstValue) -> Result<f64> {
    beta_raw(spec.a_plus, spec.a_minus, h.get())
}

fn beta_raw(a_plus: f64, a_minus: f64, h: f64) -> Result<f64> {
    if a_plus == a_minus {
        return Ok(0.0);
    }
    let theta = (h + 0.5) * FRAC_PI_2;
    let re = (a_plus + a_minus) * theta.cos();
    let im = (a_minus - a_plus) * theta.sin();
    if re.hypot(im) <= f64::MIN_POSITIVE {
        return Err(Error::DegenerateSpec(format!(
            "complex operand of beta vanishes at H = {h}"
        )));
    }
    let arg = im.atan2(re);
    Ok(if arg < 0.0 { arg + TAU } else { arg })
}

/// `L(H, H') = K(H) K(H') / K((H + H')/2)^2`; equals 1 on the diagonal.
pub fn l_factor(h: HurstValue, h2: HurstValue) -> f64 {
    kconst_raw(h.get()) * kconst_raw(h2.get()) / kconst_raw(0.5 * (h.get() + h2.get())).powi(2)
}

/// `omega / tan(omega pi / 2)`, continuous at zero.
fn omega_over_tan(omega: f64) -> f64 {
    if omega.abs() < COT_SERIES_SWITCH {
        let x2 = (omega * FRAC_PI_2).powi(2);
        (2.0 / PI) * (1.0 - x2 / 3.0 - x2 * x2 / 45.0)
    } else {
        omega / (omega * FRAC_PI_2).tan()
    }
}

/// `x (x^omega - 1) / omega`, continuous at `omega = 0` and zero at `x = 0`.
fn x_times_log_power(x: f64, omega: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let lx = x.ln();
    if omega == 0.0 {
        x * lx
    } else {
        x * (omega * lx).exp_m1() / omega
    }
}

/// Per-point quantities reused across kernel evaluations.
#[derive(Debug, Clone, Copy)]
struct Point {
    t: f64,
    h: f64,
    k: f64,
    beta: f64,
    scale: f64,
}

impl Point {
    fn new(spec: &MbmSpec, t: f64) -> Result<Self> {
        let h = HurstValue::new(spec.hurst.eval(t))?.get();
        Ok(Self {
            t,
            h,
            k: kconst_raw(h),
            beta: beta_raw(spec.a_plus, spec.a_minus, h)?,
            scale: spec.scale_at(t),
        })
    }
}

/// Generic (`S != 1`) form of the kernel for `t <= t'`.
fn q_generic(h: f64, hp: f64, l: f64, dbeta: f64, t: f64, tp: f64) -> f64 {
    let s = h + hp;
    let half = FRAC_PI_2 * s;
    let c = half.cos();
    let l11 = l * (dbeta - half).cos() / c;
    let l22 = l * (dbeta + half).cos() / c;
    0.5 * (l11 * t.powf(s) + l22 * tp.powf(s) - l22 * (tp - t).powf(s))
}

/// Continuation form around `S = 1` for `t <= t'`.
fn q_continuation(h: f64, hp: f64, l: f64, dbeta: f64, t: f64, tp: f64) -> f64 {
    let s = h + hp;
    let omega = s - 1.0;
    let d = tp - t;
    let sym = 0.5 * l * dbeta.cos() * (t.powf(s) + tp.powf(s) - d.powf(s));
    if dbeta == 0.0 {
        return sym;
    }
    let logs =
        x_times_log_power(t, omega) - x_times_log_power(tp, omega) + x_times_log_power(d, omega);
    sym - 0.5 * l * dbeta.sin() * omega_over_tan(omega) * logs
}

fn q_points(p: &Point, q: &Point) -> f64 {
    let (lo, hi) = if p.t <= q.t { (p, q) } else { (q, p) };
    let l = if lo.h == hi.h {
        1.0
    } else {
        lo.k * hi.k / kconst_raw(0.5 * (lo.h + hi.h)).powi(2)
    };
    let dbeta = hi.beta - lo.beta;
    let value = if (lo.h + hi.h - 1.0).abs() < SEAM_SWITCH {
        q_continuation(lo.h, hi.h, l, dbeta, lo.t, hi.t)
    } else {
        q_generic(lo.h, hi.h, l, dbeta, lo.t, hi.t)
    };
    value * lo.scale * hi.scale
}

/// `E[X(t) X(t2)]` for the process described by `spec`.
pub fn q_kernel(spec: &MbmSpec, t: f64, t2: f64) -> Result<f64> {
    for x in [t, t2] {
        if !(x > 0.0 && x < 1.0) {
            return Err(Error::Domain(format!("time {x} not in (0, 1)")));
        }
    }
    Ok(q_points(&Point::new(spec, t)?, &Point::new(spec, t2)?))
}

/// Dense symmetric matrix stored column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    /// Builds the matrix from its lower triangle, `f(i, j)` with `i >= j`.
    pub fn from_lower_fn<F>(dim: usize, f: F) -> Self
    where
        F: Fn(usize, usize) -> f64 + Sync,
    {
        let mut data = vec![0.0; dim * dim];
        if dim == 0 {
            return Self { dim, data };
        }
        data.par_chunks_mut(dim).enumerate().for_each(|(j, col)| {
            for (i, x) in col.iter_mut().enumerate().skip(j) {
                *x = f(i, j);
            }
        });
        for j in 0..dim {
            for i in j + 1..dim {
                data[i * dim + j] = data[j * dim + i];
            }
        }
        Self { dim, data }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_lower_fn(dim, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.dim + i]
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn max_diagonal(&self) -> f64 {
        (0..self.dim)
            .map(|i| self.get(i, i))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn as_faer(&self) -> faer::MatRef<'_, f64> {
        faer::MatRef::from_column_major_slice(&self.data, self.dim, self.dim)
    }

    pub(crate) fn into_data(self) -> Vec<f64> {
        self.data
    }
}

/// `[E X(k/n) X(k'/n)]_{k, k' = 1..n-1}`.
pub fn covariance_matrix(spec: &MbmSpec, n: usize) -> Result<SymMatrix> {
    if n < 8 {
        return Err(Error::Domain(format!("n = {n} must be >= 8")));
    }
    let points = (1..n)
        .map(|k| Point::new(spec, k as f64 / n as f64))
        .collect::<Result<Vec<_>>>()?;
    Ok(SymMatrix::from_lower_fn(n - 1, |i, j| {
        q_points(&points[i], &points[j])
    }))
}

/// `1/2 (s^{2H} + t^{2H} - |t - s|^{2H})` on the lattice `k/n`.
pub fn fbm_covariance_matrix(h: HurstValue, n: usize) -> SymMatrix {
    let two_h = 2.0 * h.get();
    let pw: Vec<f64> = (0..n).map(|k| (k as f64 / n as f64).powf(two_h)).collect();
    SymMatrix::from_lower_fn(n.saturating_sub(1), |i, j| {
        0.5 * (pw[i + 1] + pw[j + 1] - pw[i - j])
    })
}

/// Covariance of the variations `V(k) = sum_l a_l X((k + l)/n)` given the
/// covariance of `X(k/n)`, `k = 1..n-1`. Entry `(i, j)` pairs `V(i+1)` with
/// `V(j+1)`.
pub fn filtered_covariance(cov: &SymMatrix, f: &Filter) -> SymMatrix {
    let a = f.coeffs();
    let dim = cov.dim().saturating_sub(f.q());
    SymMatrix::from_lower_fn(dim, |i, j| {
        let mut acc = 0.0;
        for (p, ap) in a.iter().enumerate() {
            for (q, aq) in a.iter().enumerate() {
                acc += ap * aq * cov.get(i + p, j + q);
            }
        }
        acc
    })
}
