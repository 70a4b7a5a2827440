//! Monte Carlo MISE study: replication runner, evaluation grid and the
//! reference MISE tables.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotic_constants::{AsymptoticTable, McMeta};
use crate::error::{Error, Result};
use crate::estimators::{estimate_with_bank, EstimatorConfig, EstimatorKind, VariationBank};
use crate::filters::Filter;
use crate::gaussian_sampler::{
    FieldCase, FieldGenerator, PathSampler, SeedLineage, Stream, FIELD_GRID,
};
use crate::mbm_covariance::{HurstField, MbmSpec};

/// `{n^-alpha + 0.01 k} <= min(1 - n^-alpha, n^-alpha + 0.99)`.
pub fn default_t_grid(n: usize, alpha: f64) -> Vec<f64> {
    let start = (n as f64).powf(-alpha);
    let end = (1.0 - start).min(start + 0.99);
    (0..)
        .map(|k| start + 0.01 * k as f64)
        .take_while(|t| *t <= end + 1e-12)
        .collect()
}

/// Sizes of a Monte Carlo study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Desk,
    Full,
}

impl Preset {
    pub fn reps(self) -> usize {
        match self {
            Preset::Desk => 50,
            Preset::Full => 100,
        }
    }

    pub fn n_fields(self) -> usize {
        match self {
            Preset::Desk => 10,
            Preset::Full => 50,
        }
    }

    pub fn default_n(self) -> usize {
        match self {
            Preset::Desk => 1024,
            Preset::Full => 6000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiseConfig {
    pub case: FieldCase,
    pub n: usize,
    pub alphas: Vec<f64>,
    pub estimators: Vec<EstimatorKind>,
    pub reps: usize,
    /// Hurst trajectories drawn for random cases; ignored otherwise.
    pub n_fields: usize,
    pub p: usize,
    pub master_seed: u64,
    pub field_grid: usize,
}

impl MiseConfig {
    pub fn new(
        case: FieldCase,
        n: usize,
        alpha: f64,
        estimator: EstimatorKind,
        reps: usize,
        master_seed: u64,
    ) -> Self {
        Self {
            case,
            n,
            alphas: vec![alpha],
            estimators: vec![estimator],
            reps,
            n_fields: Preset::Full.n_fields(),
            p: 5,
            master_seed,
            field_grid: FIELD_GRID,
        }
    }

    fn fields(&self) -> usize {
        if self.case.is_random() {
            self.n_fields
        } else {
            1
        }
    }

    fn validate(&self) -> Result<()> {
        if self.reps < 2 {
            return Err(Error::InvalidConfig(format!(
                "reps = {} must be >= 2",
                self.reps
            )));
        }
        if self.case.is_random() && self.n_fields == 0 {
            return Err(Error::InvalidConfig("n_fields must be >= 1".into()));
        }
        if self.alphas.is_empty() || self.estimators.is_empty() {
            return Err(Error::InvalidConfig("nothing to estimate".into()));
        }
        for &est in &self.estimators {
            for &alpha in &self.alphas {
                EstimatorConfig::new(est, alpha, self.p)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiseReport {
    pub case: String,
    pub n: usize,
    pub alpha: f64,
    pub estimator: EstimatorKind,
    pub p: usize,
    pub replications: usize,
    pub n_fields: usize,
    pub master_seed: u64,
    pub sqrt_mise: f64,
    /// Delta-method standard error of `sqrt_mise` from per-path ISEs.
    pub sqrt_mise_se: f64,
    pub t_grid: Vec<f64>,
    pub per_t_bias: Vec<f64>,
    pub per_t_var: Vec<f64>,
    pub runtime_seconds: f64,
    pub mc_meta: Option<McMeta>,
    pub version: String,
}

impl MiseReport {
    /// `sqrt(mean_t(bias_t^2 + var_t))`.
    pub fn recomputed_sqrt_mise(&self) -> f64 {
        mise_from_parts(&self.per_t_bias, &self.per_t_var).sqrt()
    }
}

fn mise_from_parts(bias: &[f64], var: &[f64]) -> f64 {
    bias.iter().zip(var).map(|(b, v)| b * b + v).sum::<f64>() / bias.len() as f64
}

/// Errors `H_hat(t) - H(t)` of every (alpha, estimator) pair for one path.
type PathErrors = Vec<Vec<f64>>;

/// Summarizes per-path errors; `errors[r][t]`.
fn summarize(errors: &[&Vec<f64>]) -> (Vec<f64>, Vec<f64>, f64, f64) {
    let r = errors.len() as f64;
    let m = errors[0].len();
    let bias: Vec<f64> = (0..m)
        .map(|t| errors.iter().map(|e| e[t]).sum::<f64>() / r)
        .collect();
    let var: Vec<f64> = (0..m)
        .map(|t| errors.iter().map(|e| (e[t] - bias[t]).powi(2)).sum::<f64>() / r)
        .collect();
    let mise = mise_from_parts(&bias, &var);
    let ise: Vec<f64> = errors
        .iter()
        .map(|e| e.iter().map(|x| x * x).sum::<f64>() / m as f64)
        .collect();
    let mean_ise = ise.iter().sum::<f64>() / r;
    let var_ise = ise.iter().map(|x| (x - mean_ise).powi(2)).sum::<f64>() / (r - 1.0);
    let sqrt_mise = mise.sqrt();
    let se = if sqrt_mise > 0.0 {
        (var_ise / r).sqrt() / (2.0 * sqrt_mise)
    } else {
        0.0
    };
    (bias, var, sqrt_mise, se)
}

/// Runs every (alpha, estimator) pair of `config` on shared paths and
/// returns one report per pair, alpha-major.
pub fn run_mise(config: &MiseConfig, table: Option<&AsymptoticTable>) -> Result<Vec<MiseReport>> {
    config.validate()?;
    if config.estimators.iter().any(|e| e.needs_model()) {
        match table {
            Some(t) if t.p >= config.p => {}
            _ => {
                return Err(Error::InvalidConfig(format!(
                    "PGLS estimators need an asymptotic table with p >= {}",
                    config.p
                )))
            }
        }
    }
    let start = Instant::now();
    let grids: Vec<Vec<f64>> = config
        .alphas
        .iter()
        .map(|&a| default_t_grid(config.n, a))
        .collect();
    let cfgs: Vec<Vec<EstimatorConfig>> = config
        .alphas
        .iter()
        .map(|&a| {
            config
                .estimators
                .iter()
                .map(|&e| EstimatorConfig::new(e, a, config.p))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let generator = FieldGenerator::new(config.case, config.field_grid)?;
    let filter = Filter::second_difference();
    let model = table.map(|t| t as &dyn crate::estimators::CovarianceModel);

    let mut all: Vec<PathErrors> = Vec::with_capacity(config.fields() * config.reps);
    for field_idx in 0..config.fields() {
        let field_seed = SeedLineage::new(config.master_seed, field_idx as u64, Stream::HurstField);
        let field = generator.generate(Some(field_seed))?;
        let truth: Vec<Vec<f64>> = grids
            .iter()
            .map(|g| g.iter().map(|&t| field.eval(t)).collect())
            .collect();
        let sampler = PathSampler::mbm(&MbmSpec::standard(field), config.n).map_err(|e| {
            Error::Replication {
                master_seed: config.master_seed,
                replication: (field_idx * config.reps) as u64,
                source: Box::new(e),
            }
        })?;
        log::info!(
            "{}: field {}/{} factored",
            config.case,
            field_idx + 1,
            config.fields()
        );
        let batch = (0..config.reps)
            .into_par_iter()
            .map(|r| {
                let replication = (field_idx * config.reps + r) as u64;
                let wrap = |e: Error| Error::Replication {
                    master_seed: config.master_seed,
                    replication,
                    source: Box::new(e),
                };
                let path = sampler.sample(SeedLineage::path(config.master_seed, replication));
                let bank = VariationBank::new(&path, &filter, config.p).map_err(wrap)?;
                let mut out = Vec::new();
                for (ai, grid) in grids.iter().enumerate() {
                    for cfg in &cfgs[ai] {
                        let curve = estimate_with_bank(&bank, cfg, grid, model).map_err(wrap)?;
                        if let Some(j) = curve.valid.iter().position(|v| !v) {
                            return Err(wrap(Error::EmptyNeighborhood {
                                t: grid[j],
                                n: config.n,
                                alpha: cfg.alpha,
                            }));
                        }
                        out.push(
                            curve
                                .h_hat
                                .iter()
                                .zip(&truth[ai])
                                .map(|(h, t)| h - t)
                                .collect(),
                        );
                    }
                }
                Ok(out)
            })
            .collect::<Result<Vec<PathErrors>>>()?;
        all.extend(batch);
    }

    let runtime = start.elapsed().as_secs_f64();
    let mut reports = Vec::new();
    let mut slot = 0;
    for (ai, &alpha) in config.alphas.iter().enumerate() {
        for &estimator in &config.estimators {
            let errors: Vec<&Vec<f64>> = all.iter().map(|pe| &pe[slot]).collect();
            let (bias, var, sqrt_mise, se) = summarize(&errors);
            reports.push(MiseReport {
                case: config.case.label(),
                n: config.n,
                alpha,
                estimator,
                p: config.p,
                replications: config.reps,
                n_fields: config.fields(),
                master_seed: config.master_seed,
                sqrt_mise,
                sqrt_mise_se: se,
                t_grid: grids[ai].clone(),
                per_t_bias: bias,
                per_t_var: var,
                runtime_seconds: runtime,
                mc_meta: if estimator.needs_model() {
                    table.map(|t| t.mc_meta.clone())
                } else {
                    None
                },
                version: env!("CARGO_PKG_VERSION").to_string(),
            });
            slot += 1;
        }
    }
    Ok(reports)
}

/// MISE of an estimator that is exact on the grid; used as a sanity oracle.
pub fn oracle_sqrt_mise(field: &HurstField, grid: &[f64]) -> f64 {
    let errors: Vec<f64> = grid
        .iter()
        .map(|&t| field.eval(t) - field.eval(t))
        .collect();
    let (_, _, s, _) = summarize(&[&errors, &errors]);
    s
}

/// Published `sqrt(MISE)` values. Rows: QV, QV2, IR, IR2; columns:
/// alpha = 0.2, 0.3, 0.4, 0.5.
pub const REFERENCE_ALPHAS: [f64; 4] = [0.2, 0.3, 0.4, 0.5];
pub const REFERENCE_NS: [usize; 2] = [2000, 6000];
pub const REFERENCE_ESTIMATORS: [EstimatorKind; 4] = [
    EstimatorKind::Qv,
    EstimatorKind::Qv2,
    EstimatorKind::Ir,
    EstimatorKind::Ir2,
];

type Block = [[f64; 4]; 4];

const REFERENCE: [(FieldCase, &str, [Block; 2]); 6] = [
    (
        FieldCase::H1,
        "table1",
        [
            [
                [0.044, 0.055, 0.073, 0.104],
                [0.041, 0.051, 0.069, 0.096],
                [0.111, 0.137, 0.186, 0.260],
                [0.061, 0.077, 0.106, 0.145],
            ],
            [
                [0.026, 0.035, 0.053, 0.079],
                [0.025, 0.033, 0.050, 0.074],
                [0.065, 0.091, 0.128, 0.202],
                [0.037, 0.049, 0.076, 0.115],
            ],
        ],
    ),
    (
        FieldCase::H2,
        "table1",
        [
            [
                [0.170, 0.076, 0.075, 0.101],
                [0.170, 0.073, 0.072, 0.096],
                [0.115, 0.143, 0.184, 0.247],
                [0.059, 0.071, 0.098, 0.135],
            ],
            [
                [0.115, 0.045, 0.051, 0.074],
                [0.114, 0.044, 0.048, 0.070],
                [0.070, 0.094, 0.134, 0.195],
                [0.036, 0.046, 0.069, 0.103],
            ],
        ],
    ),
    (
        FieldCase::H3,
        "table1",
        [
            [
                [0.362, 0.125, 0.084, 0.102],
                [0.362, 0.123, 0.080, 0.096],
                [0.129, 0.133, 0.171, 0.229],
                [0.093, 0.071, 0.091, 0.124],
            ],
            [
                [0.260, 0.078, 0.056, 0.077],
                [0.260, 0.077, 0.052, 0.072],
                [0.078, 0.089, 0.125, 0.180],
                [0.057, 0.047, 0.065, 0.097],
            ],
        ],
    ),
    (
        FieldCase::H4,
        "table1",
        [
            [
                [0.321, 0.165, 0.121, 0.120],
                [0.320, 0.164, 0.117, 0.112],
                [0.178, 0.138, 0.160, 0.210],
                [0.165, 0.098, 0.091, 0.112],
            ],
            [
                [0.251, 0.136, 0.074, 0.084],
                [0.251, 0.135, 0.071, 0.078],
                [0.158, 0.088, 0.115, 0.164],
                [0.148, 0.062, 0.067, 0.091],
            ],
        ],
    ),
    (
        FieldCase::IntegratedFbm { h: 0.5 },
        "table2",
        [
            [
                [0.261, 0.113, 0.088, 0.103],
                [0.261, 0.112, 0.085, 0.098],
                [0.139, 0.141, 0.175, 0.233],
                [0.098, 0.077, 0.093, 0.128],
            ],
            [
                [0.164, 0.067, 0.055, 0.074],
                [0.164, 0.066, 0.053, 0.070],
                [0.084, 0.094, 0.131, 0.186],
                [0.054, 0.047, 0.066, 0.098],
            ],
        ],
    ),
    (
        FieldCase::Fbm { eta: 0.6 },
        "table2",
        [
            [
                [0.140, 0.087, 0.083, 0.096],
                [0.140, 0.086, 0.081, 0.094],
                [0.148, 0.156, 0.192, 0.249],
                [0.088, 0.078, 0.096, 0.135],
            ],
            [
                [0.129, 0.067, 0.057, 0.074],
                [0.130, 0.067, 0.056, 0.071],
                [0.096, 0.106, 0.143, 0.201],
                [0.066, 0.052, 0.067, 0.103],
            ],
        ],
    ),
];

/// The cases covered by the reference tables, in table order.
pub fn reference_cases() -> Vec<FieldCase> {
    REFERENCE.iter().map(|r| r.0).collect()
}

/// Published `sqrt(MISE)` for a cell, if tabulated.
pub fn reference_value(
    case: FieldCase,
    n: usize,
    alpha: f64,
    estimator: EstimatorKind,
) -> Option<f64> {
    let (_, _, blocks) = REFERENCE.iter().find(|r| r.0 == case)?;
    let ni = REFERENCE_NS.iter().position(|&x| x == n)?;
    let ai = REFERENCE_ALPHAS
        .iter()
        .position(|&a| (a - alpha).abs() < 1e-12)?;
    let ei = REFERENCE_ESTIMATORS.iter().position(|&e| e == estimator)?;
    Some(blocks[ni][ei][ai])
}

fn reference_table_name(case: FieldCase) -> &'static str {
    REFERENCE.iter().find(|r| r.0 == case).map_or("", |r| r.1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReproduceConfig {
    pub cases: Vec<FieldCase>,
    pub ns: Vec<usize>,
    pub alphas: Vec<f64>,
    pub reps: usize,
    pub n_fields: usize,
    pub p: usize,
    pub master_seed: u64,
    pub field_grid: usize,
}

impl ReproduceConfig {
    pub fn from_preset(preset: Preset, master_seed: u64) -> Self {
        Self {
            cases: reference_cases(),
            ns: REFERENCE_NS.to_vec(),
            alphas: REFERENCE_ALPHAS.to_vec(),
            reps: preset.reps(),
            n_fields: preset.n_fields(),
            p: 5,
            master_seed,
            field_grid: FIELD_GRID,
        }
    }
}

/// One line of the reproduced tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub table: String,
    pub case: String,
    pub n: usize,
    pub alpha: f64,
    pub estimator: EstimatorKind,
    pub sqrt_mise: f64,
    pub mc_se: f64,
    pub reference: Option<f64>,
    pub diff: Option<f64>,
}

/// Runs the full (case, n, alpha, estimator) grid and writes
/// `mise_tables.csv` plus `mise_tables.json` to `out_dir`.
pub fn reproduce_tables(
    out_dir: &Path,
    config: &ReproduceConfig,
    table: &AsymptoticTable,
) -> Result<Vec<TableRow>> {
    std::fs::create_dir_all(out_dir)?;
    let mut rows = Vec::new();
    for (ci, &case) in config.cases.iter().enumerate() {
        for &n in &config.ns {
            let mc = MiseConfig {
                case,
                n,
                alphas: config.alphas.clone(),
                estimators: REFERENCE_ESTIMATORS.to_vec(),
                reps: config.reps,
                n_fields: config.n_fields,
                p: config.p,
                master_seed: config.master_seed.wrapping_add(1000 * ci as u64 + n as u64),
                field_grid: config.field_grid,
            };
            log::info!("reproducing {case} at n = {n}");
            for rep in run_mise(&mc, Some(table))? {
                let reference = reference_value(case, n, rep.alpha, rep.estimator);
                rows.push(TableRow {
                    table: reference_table_name(case).to_string(),
                    case: case.label(),
                    n,
                    alpha: rep.alpha,
                    estimator: rep.estimator,
                    sqrt_mise: rep.sqrt_mise,
                    mc_se: rep.sqrt_mise_se,
                    reference,
                    diff: reference.map(|r| rep.sqrt_mise - r),
                });
            }
        }
    }
    let mut w = csv::Writer::from_path(out_dir.join("mise_tables.csv"))?;
    for row in &rows {
        w.serialize(row)?;
    }
    w.flush()?;
    #[derive(Serialize)]
    struct Meta<'a> {
        config: &'a ReproduceConfig,
        asymptotic_table: &'a McMeta,
        version: &'static str,
    }
    let meta = Meta {
        config,
        asymptotic_table: &table.mc_meta,
        version: env!("CARGO_PKG_VERSION"),
    };
    std::fs::write(
        out_dir.join("mise_tables.json"),
        serde_json::to_string_pretty(&meta)?,
    )?;
    Ok(rows)
}
