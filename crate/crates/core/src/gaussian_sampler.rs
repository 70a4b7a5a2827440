//! Exact Gaussian path sampling by Cholesky factorization, seeded random
//! streams, and the Hurst-field generators used by the Monte Carlo study.

use std::fmt;

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::llt::factor::{
    cholesky_in_place, cholesky_in_place_scratch, LltRegularization,
};
use faer::{MatMut, Par, Spec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fractional_kernels::HurstValue;
use crate::mbm_covariance::{
    covariance_matrix, fbm_covariance_matrix, HurstField, MbmSpec, SymMatrix,
};

/// Relative jitter levels tried, in order, after a failed factorization.
pub const JITTER_LADDER: [f64; 5] = [1e-12, 1e-11, 1e-10, 1e-9, 1e-8];

/// Lattice size on which random Hurst fields are generated.
pub const FIELD_GRID: usize = 6000;

/// Target range of integrated-FBM Hurst fields.
pub const INTEGRATED_FBM_RANGE: (f64, f64) = (0.1, 0.9);

/// Target range of FBM Hurst fields.
pub const FBM_FIELD_RANGE: (f64, f64) = (0.05, 0.55);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stream {
    Path,
    HurstField,
    AsymptoticMc,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Path => 0,
            Stream::HurstField => 1,
            Stream::AsymptoticMc => 2,
        }
    }
}

/// Identifies one independent random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedLineage {
    pub master_seed: u64,
    pub replication: u64,
    pub stream: Stream,
}

impl SeedLineage {
    pub fn new(master_seed: u64, replication: u64, stream: Stream) -> Self {
        Self {
            master_seed,
            replication,
            stream,
        }
    }

    pub fn path(master_seed: u64, replication: u64) -> Self {
        Self::new(master_seed, replication, Stream::Path)
    }

    pub fn with_replication(self, replication: u64) -> Self {
        Self {
            replication,
            ..self
        }
    }

    pub fn with_stream(self, stream: Stream) -> Self {
        Self { stream, ..self }
    }

    /// The generator for this lineage. Replications and streams map to
    /// disjoint ChaCha streams under the same key.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream((self.replication << 2) | self.stream.tag());
        rng
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub spec: String,
    pub seed: Option<SeedLineage>,
}

/// Values `Z(k/n)`, `k = 1..n-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledPath {
    pub values: Vec<f64>,
    pub n: usize,
    pub provenance: Provenance,
}

impl SampledPath {
    pub fn new(values: Vec<f64>, provenance: Provenance) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Domain("empty path".into()));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "path value at k = {} is not finite",
                k + 1
            )));
        }
        Ok(Self {
            n: values.len() + 1,
            values,
            provenance,
        })
    }

    /// An unlabelled path, e.g. one read from disk.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        Self::new(
            values,
            Provenance {
                spec: "external".into(),
                seed: None,
            },
        )
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| c * v).collect(),
            ..self.clone()
        }
    }

    /// `Z(k/n)` for `k` in `1..n`.
    pub fn at(&self, k: usize) -> f64 {
        self.values[k - 1]
    }
}

/// A diagonal shift applied during factorization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JitterEvent {
    pub failed_pivot: usize,
    pub jitter: f64,
}

/// Lower Cholesky factor of a covariance matrix.
#[derive(Clone)]
pub struct CholeskyFactor {
    dim: usize,
    data: Vec<f64>,
    jitter_log: Vec<JitterEvent>,
}

impl fmt::Debug for CholeskyFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CholeskyFactor")
            .field("dim", &self.dim)
            .field("jitter_log", &self.jitter_log)
            .finish()
    }
}

fn factor_in_place(data: &mut [f64], dim: usize) -> std::result::Result<(), usize> {
    let par = Par::Seq;
    let params = Spec::default();
    let mut buf = MemBuffer::new(cholesky_in_place_scratch::<f64>(dim, par, params));
    let stack = MemStack::new(&mut buf);
    let mat = MatMut::from_column_major_slice_mut(data, dim, dim);
    cholesky_in_place(mat, LltRegularization::default(), par, stack, params)
        .map(|_| ())
        .map_err(|e| match e {
            faer::linalg::cholesky::llt::factor::LltError::NonPositivePivot { index } => index,
        })
}

impl CholeskyFactor {
    /// Factors `cov`, retrying with diagonal jitter along [`JITTER_LADDER`]
    /// (relative to the largest diagonal entry) when it is not numerically
    /// positive definite.
    pub fn new(cov: SymMatrix) -> Result<Self> {
        let dim = cov.dim();
        if dim == 0 {
            return Err(Error::Domain("empty covariance matrix".into()));
        }
        let max_diag = cov.max_diagonal();
        let original = cov.into_data();
        let mut data = original.clone();
        let mut jitter_log = Vec::new();
        let mut pivot = match factor_in_place(&mut data, dim) {
            Ok(()) => {
                return Ok(Self {
                    dim,
                    data,
                    jitter_log,
                })
            }
            Err(p) => p,
        };
        for &level in &JITTER_LADDER {
            let jitter = level * max_diag;
            log::warn!(
                "Cholesky failed at pivot {pivot}; retrying with diagonal jitter {jitter:e}"
            );
            jitter_log.push(JitterEvent {
                failed_pivot: pivot,
                jitter,
            });
            // A failed attempt leaves both triangles overwritten.
            data.copy_from_slice(&original);
            for j in 0..dim {
                data[j * dim + j] += jitter;
            }
            match factor_in_place(&mut data, dim) {
                Ok(()) => {
                    return Ok(Self {
                        dim,
                        data,
                        jitter_log,
                    })
                }
                Err(p) => pivot = p,
            }
        }
        Err(Error::NotPositiveDefinite {
            pivot,
            jitter: JITTER_LADDER[JITTER_LADDER.len() - 1] * max_diag,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn jitter_log(&self) -> &[JitterEvent] {
        &self.jitter_log
    }

    /// `L[i, j]` for `i >= j`.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        assert!(i >= j);
        self.data[j * self.dim + i]
    }

    /// `L xi`.
    pub fn apply(&self, xi: &[f64]) -> Vec<f64> {
        assert_eq!(xi.len(), self.dim);
        let mut x = vec![0.0; self.dim];
        for (j, &w) in xi.iter().enumerate() {
            let col = &self.data[j * self.dim + j..(j + 1) * self.dim];
            for (xi, l) in x[j..].iter_mut().zip(col) {
                *xi += l * w;
            }
        }
        x
    }

    /// `dim` standard normals drawn from the lineage's stream.
    pub fn normals(&self, seed: &SeedLineage) -> Vec<f64> {
        let mut rng = seed.rng();
        (0..self.dim).map(|_| rng.sample(StandardNormal)).collect()
    }

    pub fn sample(&self, seed: SeedLineage, spec: &str) -> SampledPath {
        let values = self.apply(&self.normals(&seed));
        SampledPath {
            n: self.dim + 1,
            values,
            provenance: Provenance {
                spec: spec.to_string(),
                seed: Some(seed),
            },
        }
    }
}

/// `L xi` for the Cholesky factor `L` of `cov`.
pub fn sample_gaussian_path(cov: &SymMatrix, seed: SeedLineage) -> Result<SampledPath> {
    Ok(CholeskyFactor::new(cov.clone())?.sample(seed, "gaussian"))
}

/// A factored process on the lattice `k/n`, reusable across replications.
#[derive(Debug, Clone)]
pub struct PathSampler {
    n: usize,
    label: String,
    factor: CholeskyFactor,
}

impl PathSampler {
    pub fn mbm(spec: &MbmSpec, n: usize) -> Result<Self> {
        Ok(Self {
            n,
            label: spec.label(),
            factor: CholeskyFactor::new(covariance_matrix(spec, n)?)?,
        })
    }

    pub fn fbm(h: HurstValue, n: usize) -> Result<Self> {
        if n < 8 {
            return Err(Error::Domain(format!("n = {n} must be >= 8")));
        }
        Ok(Self {
            n,
            label: format!("fbm(H={})", h.get()),
            factor: CholeskyFactor::new(fbm_covariance_matrix(h, n))?,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn factor(&self) -> &CholeskyFactor {
        &self.factor
    }

    pub fn sample(&self, seed: SeedLineage) -> SampledPath {
        self.factor.sample(seed, &self.label)
    }
}

/// Exact FBM on `k/n`, `k = 1..n-1`.
pub fn sample_fbm(h: HurstValue, n: usize, seed: SeedLineage) -> Result<SampledPath> {
    Ok(PathSampler::fbm(h, n)?.sample(seed))
}

/// Exact MBM on `k/n`, `k = 1..n-1`.
pub fn sample_mbm(spec: &MbmSpec, n: usize, seed: SeedLineage) -> Result<SampledPath> {
    Ok(PathSampler::mbm(spec, n)?.sample(seed))
}

/// The Hurst functions of the simulation study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldCase {
    H1,
    H2,
    H3,
    H4,
    IntegratedFbm { h: f64 },
    Fbm { eta: f64 },
}

impl FieldCase {
    pub fn is_random(&self) -> bool {
        matches!(
            self,
            FieldCase::IntegratedFbm { .. } | FieldCase::Fbm { .. }
        )
    }

    pub fn label(&self) -> String {
        match self {
            FieldCase::H1 => "H1".into(),
            FieldCase::H2 => "H2".into(),
            FieldCase::H3 => "H3".into(),
            FieldCase::H4 => "H4".into(),
            FieldCase::IntegratedFbm { h } => format!("integrated_fbm({h})"),
            FieldCase::Fbm { eta } => format!("fbm({eta})"),
        }
    }

    /// Parses `H1`..`H4`, `integrated_fbm(h)`, `fbm(eta)`, and the regularity
    /// shorthands `C1.5` (integrated FBM with `h = 0.5`) and `C0.6`.
    pub fn parse(s: &str) -> Result<Self> {
        let t = s.trim();
        let lower = t.to_ascii_lowercase();
        let arg = |prefix: &str| -> Option<Result<f64>> {
            lower
                .strip_prefix(prefix)
                .and_then(|r| r.strip_suffix(')'))
                .map(|x| {
                    x.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::InvalidConfig(format!("bad parameter in `{t}`")))
                })
        };
        let case = match lower.as_str() {
            "h1" => FieldCase::H1,
            "h2" => FieldCase::H2,
            "h3" => FieldCase::H3,
            "h4" => FieldCase::H4,
            "c1.5" => FieldCase::IntegratedFbm { h: 0.5 },
            "c0.6" => FieldCase::Fbm { eta: 0.6 },
            _ => {
                if let Some(h) = arg("integrated_fbm(") {
                    FieldCase::IntegratedFbm { h: h? }
                } else if let Some(eta) = arg("fbm(") {
                    FieldCase::Fbm { eta: eta? }
                } else {
                    return Err(Error::InvalidConfig(format!(
                        "unknown Hurst field case `{t}`"
                    )));
                }
            }
        };
        if let FieldCase::IntegratedFbm { h: x } | FieldCase::Fbm { eta: x } = case {
            HurstValue::new(x)?;
        }
        Ok(case)
    }
}

impl fmt::Display for FieldCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

fn closed_field(case: FieldCase) -> Result<HurstField> {
    match case {
        FieldCase::H1 => HurstField::closed_form("H1", |_| 0.6, None),
        FieldCase::H2 => HurstField::closed_form("H2", |t| 0.1 + 0.8 * t, None),
        FieldCase::H3 => HurstField::closed_form("H3", |t| 0.5 + 0.4 * (5.0 * t).sin(), None),
        FieldCase::H4 => HurstField::closed_form(
            "H4",
            |t| 0.1 + 0.8 * (1.0 - t) * (10.0 * t).sin().powi(2),
            None,
        ),
        _ => unreachable!("random case"),
    }
}

fn rescale(values: &mut [f64], (lo, hi): (f64, f64)) -> Result<()> {
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(max > min) {
        return Err(Error::Domain("cannot rescale a constant trajectory".into()));
    }
    for v in values.iter_mut() {
        *v = lo + (hi - lo) * (*v - min) / (max - min);
    }
    Ok(())
}

/// Builds Hurst fields of one case, reusing the FBM factor across draws.
#[derive(Debug, Clone)]
pub struct FieldGenerator {
    case: FieldCase,
    grid: usize,
    sampler: Option<PathSampler>,
}

impl FieldGenerator {
    pub fn new(case: FieldCase, grid: usize) -> Result<Self> {
        let sampler = match case {
            FieldCase::IntegratedFbm { h } => Some(PathSampler::fbm(HurstValue::new(h)?, grid)?),
            FieldCase::Fbm { eta } => Some(PathSampler::fbm(HurstValue::new(eta)?, grid)?),
            _ => None,
        };
        Ok(Self {
            case,
            grid,
            sampler,
        })
    }

    pub fn case(&self) -> FieldCase {
        self.case
    }

    pub fn generate(&self, seed: Option<SeedLineage>) -> Result<HurstField> {
        let Some(sampler) = &self.sampler else {
            return closed_field(self.case);
        };
        let seed = seed
            .ok_or_else(|| Error::MissingSeed(self.case.label()))?
            .with_stream(Stream::HurstField);
        let path = sampler.sample(seed);
        let step = 1.0 / self.grid as f64;
        let grid: Vec<f64> = (0..self.grid).map(|k| k as f64 * step).collect();
        let mut values = Vec::with_capacity(self.grid);
        values.push(0.0);
        values.extend_from_slice(&path.values);
        let label = format!(
            "{}#{}:{}",
            self.case.label(),
            seed.master_seed,
            seed.replication
        );
        match self.case {
            FieldCase::IntegratedFbm { h } => {
                let mut acc = 0.0;
                for v in values.iter_mut() {
                    acc += *v * step;
                    *v = acc;
                }
                rescale(&mut values, INTEGRATED_FBM_RANGE)?;
                HurstField::sampled(label, grid, values, Some(1.0 + h))
            }
            FieldCase::Fbm { eta } => {
                rescale(&mut values, FBM_FIELD_RANGE)?;
                HurstField::sampled(label, grid, values, Some(eta))
            }
            _ => unreachable!(),
        }
    }
}

/// One Hurst field of the given case; random cases need a seed.
pub fn make_hurst_field(case: FieldCase, seed: Option<SeedLineage>) -> Result<HurstField> {
    if case.is_random() && seed.is_none() {
        return Err(Error::MissingSeed(case.label()));
    }
    FieldGenerator::new(case, FIELD_GRID)?.generate(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::Filter;
    use crate::fractional_kernels::rho2;

    fn hv(h: f64) -> HurstValue {
        HurstValue::new(h).unwrap()
    }

    fn mean_se(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, (v / n).sqrt())
    }

    #[test]
    fn identity_returns_raw_normals() {
        let seed = SeedLineage::path(11, 3);
        let path = sample_gaussian_path(&SymMatrix::identity(3), seed).unwrap();
        let mut rng = seed.rng();
        let raw: Vec<f64> = (0..3).map(|_| rng.sample(StandardNormal)).collect();
        assert_eq!(path.values, raw);
        assert_eq!(path.n, 4);
    }

    #[test]
    fn streams_are_distinct_and_reproducible() {
        let a = SeedLineage::path(5, 0);
        let draws = |s: SeedLineage| -> Vec<f64> {
            let mut r = s.rng();
            (0..4).map(|_| r.sample(StandardNormal)).collect()
        };
        assert_eq!(draws(a), draws(a));
        assert_ne!(draws(a), draws(a.with_replication(1)));
        assert_ne!(draws(a), draws(a.with_stream(Stream::HurstField)));
        assert_ne!(draws(a), draws(SeedLineage::path(6, 0)));
    }

    #[test]
    fn sampling_is_deterministic() {
        let sampler = PathSampler::fbm(hv(0.3), 128).unwrap();
        let seed = SeedLineage::path(42, 17);
        assert_eq!(sampler.sample(seed), sampler.sample(seed));
        assert_ne!(
            sampler.sample(seed).values,
            sampler.sample(seed.with_replication(18)).values
        );
    }

    #[test]
    fn factor_reproduces_matrix() {
        let cov = fbm_covariance_matrix(hv(0.7), 64);
        let f = CholeskyFactor::new(cov.clone()).unwrap();
        assert!(f.jitter_log().is_empty());
        for i in 0..63 {
            for j in 0..=i {
                let llt: f64 = (0..=j).map(|k| f.entry(i, k) * f.entry(j, k)).sum();
                assert!((llt - cov.get(i, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn jitter_rescues_singular_matrix() {
        // Rank-one matrix: the second pivot vanishes.
        let cov = SymMatrix::from_lower_fn(3, |_, _| 1.0);
        let f = CholeskyFactor::new(cov.clone()).unwrap();
        assert!(!f.jitter_log().is_empty());
        let last = f.jitter_log().last().unwrap().jitter;
        assert!(last <= 1e-8);
        for i in 0..3 {
            for j in 0..=i {
                let llt: f64 = (0..=j).map(|k| f.entry(i, k) * f.entry(j, k)).sum();
                let target = cov.get(i, j) + if i == j { last } else { 0.0 };
                assert!((llt - target).abs() < 1e-12, "({i},{j})");
            }
        }
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let cov = SymMatrix::from_lower_fn(2, |i, j| if i == j { 1.0 } else { 2.0 });
        assert!(matches!(
            CholeskyFactor::new(cov),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn brownian_terminal_variance() {
        let spec = MbmSpec::standard(HurstField::constant(hv(0.5)));
        let sampler = PathSampler::mbm(&spec, 512).unwrap();
        let sq: Vec<f64> = (0..500)
            .map(|r| sampler.sample(SeedLineage::path(1, r)).values[510].powi(2))
            .collect();
        let (m, se) = mean_se(&sq);
        assert!((m - 511.0 / 512.0).abs() < 3.0 * se, "{m} +- {se}");
    }

    #[test]
    fn brownian_increments_uncorrelated() {
        let sampler = PathSampler::fbm(hv(0.5), 256).unwrap();
        let prods: Vec<f64> = (0..200)
            .map(|r| {
                let p = sampler.sample(SeedLineage::path(2, r));
                let d = Filter::first_difference().apply(&p.values).unwrap();
                let (a, b) = (d[100] * 256f64.sqrt(), d[101] * 256f64.sqrt());
                a * b
            })
            .collect();
        let (m, se) = mean_se(&prods);
        assert!(m.abs() < 3.0 * se, "{m} +- {se}");
    }

    #[test]
    fn fbm_unit_variance_at_high_h() {
        let sampler = PathSampler::fbm(hv(0.9), 64).unwrap();
        let sq: Vec<f64> = (0..400)
            .map(|r| sampler.sample(SeedLineage::path(3, r)).values[62].powi(2))
            .collect();
        let (m, se) = mean_se(&sq);
        let target = (63.0f64 / 64.0).powf(1.8);
        assert!((m - target).abs() < 3.0 * se, "{m} +- {se}");
    }

    #[test]
    fn second_variation_correlation_matches_rho2() {
        let h = 0.7;
        let n = 2048;
        let sampler = PathSampler::fbm(hv(h), n).unwrap();
        let a = Filter::second_difference();
        let mut prods = Vec::new();
        for r in 0..40 {
            let v = a
                .apply(&sampler.sample(SeedLineage::path(4, r)).values)
                .unwrap();
            let var: f64 = v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64;
            // Widely spaced pairs are nearly independent.
            for k in (0..v.len() - 1).step_by(16) {
                prods.push(v[k] * v[k + 1] / var);
            }
        }
        let (m, se) = mean_se(&prods);
        assert!(
            (m - rho2(hv(h))).abs() < 3.0 * se,
            "{m} +- {se} vs {}",
            rho2(hv(h))
        );
    }

    #[test]
    fn empirical_covariance_matches_model() {
        let field = HurstField::closed_form("H3", |t| 0.5 + 0.4 * (5.0 * t).sin(), None).unwrap();
        let spec = MbmSpec::new(1.0, 0.4, field).unwrap();
        let n = 256;
        let cov = covariance_matrix(&spec, n).unwrap();
        let sampler = PathSampler::mbm(&spec, n).unwrap();
        let reps = 2000;
        let paths: Vec<Vec<f64>> = (0..reps)
            .map(|r| sampler.sample(SeedLineage::path(9, r)).values)
            .collect();
        let mut rng = SeedLineage::path(10, 0).rng();
        for _ in 0..50 {
            let i = rng.random_range(0..n - 1);
            let j = rng.random_range(0..n - 1);
            let prods: Vec<f64> = paths.iter().map(|p| p[i] * p[j]).collect();
            let (m, se) = mean_se(&prods);
            assert!(
                (m - cov.get(i, j)).abs() < 5.0 * se,
                "({i},{j}): {m} +- {se} vs {}",
                cov.get(i, j)
            );
        }
    }

    #[test]
    fn closed_form_fields() {
        assert!((make_hurst_field(FieldCase::H4, None).unwrap().eval(0.0) - 0.1).abs() < 1e-15);
        assert_eq!(
            make_hurst_field(FieldCase::H2, None).unwrap().eval(0.5),
            0.5
        );
        assert_eq!(
            make_hurst_field(FieldCase::H1, None).unwrap().eval(0.3),
            0.6
        );
        assert!(matches!(
            make_hurst_field(FieldCase::Fbm { eta: 0.6 }, None),
            Err(Error::MissingSeed(_))
        ));
    }

    #[test]
    fn random_fields_respect_ranges() {
        let seed = SeedLineage::new(7, 0, Stream::HurstField);
        let gen = FieldGenerator::new(FieldCase::Fbm { eta: 0.6 }, 600).unwrap();
        let f = gen.generate(Some(seed)).unwrap();
        let vals: Vec<f64> = (0..=1000).map(|k| f.eval(k as f64 / 1000.0)).collect();
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(lo >= 0.05 - 1e-15 && hi <= 0.55 + 1e-15);
        assert_eq!(f.eta(), Some(0.6));
        let g = FieldGenerator::new(FieldCase::IntegratedFbm { h: 0.5 }, 600)
            .unwrap()
            .generate(Some(seed))
            .unwrap();
        let vals: Vec<f64> = (0..=1000).map(|k| g.eval(k as f64 / 1000.0)).collect();
        assert!(vals.iter().all(|v| (0.1 - 1e-15..=0.9 + 1e-15).contains(v)));
        assert_eq!(g.eta(), Some(1.5));
        // Integrated paths are much smoother than their integrand.
        let rough = |v: &[f64]| {
            v.windows(2)
                .map(|w| (w[1] - w[0]).abs())
                .fold(0.0, f64::max)
        };
        assert!(rough(&vals) < 0.05);
        let again = gen.generate(Some(seed)).unwrap();
        assert_eq!(again.eval(0.37), f.eval(0.37));
    }

    #[test]
    fn case_parsing() {
        assert_eq!(FieldCase::parse("H3").unwrap(), FieldCase::H3);
        assert_eq!(
            FieldCase::parse("fbm(0.6)").unwrap(),
            FieldCase::Fbm { eta: 0.6 }
        );
        assert_eq!(
            FieldCase::parse("integrated_fbm(0.5)").unwrap(),
            FieldCase::IntegratedFbm { h: 0.5 }
        );
        assert_eq!(
            FieldCase::parse("C1.5").unwrap(),
            FieldCase::IntegratedFbm { h: 0.5 }
        );
        assert!(FieldCase::parse("H9").is_err());
        assert!(FieldCase::parse("fbm(1.4)").is_err());
    }
}
