//! The `hurstlab` command line.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::asymptotic_constants::{
    attach_stderr, gamma_matrix, limit_variance, AsymptoticTable, TableConfig, GAMMA_TRUNCATION,
};
use crate::error::{Error, Result};
use crate::estimators::{estimate, EstimatorConfig, EstimatorKind};
use crate::experiments::{
    default_t_grid, reproduce_tables, run_mise, MiseConfig, Preset, ReproduceConfig,
};
use crate::filters::Filter;
use crate::fractional_kernels::{lambda2_dilated, rho2_dilated, HurstValue};
use crate::gaussian_sampler::{
    FieldCase, FieldGenerator, PathSampler, SampledPath, SeedLineage, Stream, FBM_FIELD_RANGE,
    FIELD_GRID, INTEGRATED_FBM_RANGE,
};
use crate::mbm_covariance::MbmSpec;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(
    name = "hurstlab",
    version,
    about = "Simulate multifractional Brownian motion and estimate its local Hurst function"
)]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "subcommand", rename_all = "lowercase")]
pub enum Command {
    /// Sample one MBM path on k/n, k = 1..n-1.
    Simulate(SimulateArgs),
    /// Estimate H(t) from a path CSV.
    Estimate(EstimateArgs),
    /// Monte Carlo sqrt(MISE) of one estimator.
    Mise(MiseArgs),
    /// Dump kernel and asymptotic-constant tables.
    Tables(TablesArgs),
    /// Rerun the full MISE grid and compare with the reference values.
    Reproduce(ReproduceArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PresetArg {
    Desk,
    Full,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Desk => Preset::Desk,
            PresetArg::Full => Preset::Full,
        }
    }
}

impl PresetArg {
    fn table(self, p: usize) -> TableConfig {
        match self {
            PresetArg::Desk => TableConfig::desk(p),
            PresetArg::Full => TableConfig::full(p),
        }
    }
}

fn parse_case(s: &str) -> std::result::Result<FieldCase, String> {
    FieldCase::parse(s).map_err(|e| e.to_string())
}

fn parse_estimator(s: &str) -> std::result::Result<EstimatorKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    /// H1..H4, integrated_fbm(h), fbm(eta), C1.5 or C0.6.
    #[arg(long, value_parser = parse_case)]
    pub case: FieldCase,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 0)]
    pub replication: u64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub a_plus: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub a_minus: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct EstimateArgs {
    /// Path CSV with a `Z` column (as written by `simulate`).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_parser = parse_estimator)]
    pub estimator: EstimatorKind,
    #[arg(long)]
    pub alpha: f64,
    #[arg(long, default_value_t = 5)]
    pub p: usize,
    /// `default` or a comma-separated list of times.
    #[arg(long, default_value = "default")]
    pub t_grid: String,
    /// Attach CLT standard errors.
    #[arg(long)]
    pub stderr: bool,
    /// Asymptotic table preset used by IR2/QV2 and --stderr.
    #[arg(long, value_enum, default_value_t = PresetArg::Desk)]
    pub preset: PresetArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct MiseArgs {
    #[arg(long, value_parser = parse_case)]
    pub case: FieldCase,
    /// Defaults to the preset's n.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub alpha: f64,
    #[arg(long, value_parser = parse_estimator)]
    pub estimator: EstimatorKind,
    /// Defaults to the preset's replication count.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Hurst trajectories for random cases; defaults to the preset's.
    #[arg(long)]
    pub n_fields: Option<usize>,
    #[arg(long, default_value_t = 5)]
    pub p: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = PresetArg::Desk)]
    pub preset: PresetArg,
    /// Report JSON; the per-t CSV goes next to it. Printed to stdout if absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum TableKind {
    Lambda2,
    Rho2,
    SigmaP,
    Gamma,
    Clt,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct TablesArgs {
    #[arg(long, value_enum)]
    pub what: TableKind,
    #[arg(long, default_value_t = 5)]
    pub p: usize,
    /// `lo:hi:step` or a comma-separated list.
    #[arg(long, default_value = "0.01:0.99:0.01")]
    pub h_grid: String,
    /// Sample size for `clt`.
    #[arg(long, default_value_t = 6000)]
    pub n: usize,
    /// Bandwidth for `clt`.
    #[arg(long, default_value_t = 0.3)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value_t = PresetArg::Desk)]
    pub preset: PresetArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ReproduceArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = PresetArg::Desk)]
    pub preset: PresetArg,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

/// Everything needed to rerun a command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: Command,
    pub threads: Option<usize>,
    pub version: String,
}

impl RunConfig {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

fn sidecar(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(csv::Writer::from_path(path)?)
}

fn fmt_opt(x: f64) -> String {
    if x.is_finite() {
        x.to_string()
    } else {
        String::new()
    }
}

fn simulate(args: &SimulateArgs, rc: &RunConfig) -> Result<()> {
    if args.n < 8 {
        return Err(Error::InvalidConfig(format!("n = {} must be >= 8", args.n)));
    }
    let field_seed = SeedLineage::new(args.seed, args.replication, Stream::HurstField);
    let field = FieldGenerator::new(args.case, FIELD_GRID)?.generate(Some(field_seed))?;
    let spec = MbmSpec::new(args.a_plus, args.a_minus, field.clone())?;
    let sampler = PathSampler::mbm(&spec, args.n)?;
    let seed = SeedLineage::path(args.seed, args.replication);
    let path = sampler.sample(seed);
    let mut w = csv_writer(&args.out)?;
    w.write_record(["k", "t", "Z", "H"])?;
    for (i, z) in path.values.iter().enumerate() {
        let k = i + 1;
        let t = k as f64 / args.n as f64;
        w.write_record([
            k.to_string(),
            t.to_string(),
            z.to_string(),
            field.eval(t).to_string(),
        ])?;
    }
    w.flush()?;
    #[derive(Serialize)]
    struct Sidecar<'a> {
        run_config: &'a RunConfig,
        spec: String,
        seed: SeedLineage,
        hurst_field: &'a str,
        eta: Option<f64>,
        field_rescaling: Option<(f64, f64)>,
        jitter_log: &'a [crate::gaussian_sampler::JitterEvent],
    }
    let rescaling = match args.case {
        FieldCase::IntegratedFbm { .. } => Some(INTEGRATED_FBM_RANGE),
        FieldCase::Fbm { .. } => Some(FBM_FIELD_RANGE),
        _ => None,
    };
    write_json(
        &sidecar(&args.out),
        &Sidecar {
            run_config: rc,
            spec: spec.label(),
            seed,
            hurst_field: field.label(),
            eta: field.eta(),
            field_rescaling: rescaling,
            jitter_log: sampler.factor().jitter_log(),
        },
    )
}

/// Reads the `Z` column of a path CSV, or the single column of a headerless
/// file.
pub fn read_path_csv(path: &Path) -> Result<SampledPath> {
    let text = std::fs::read_to_string(path)?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(text.as_bytes());
    let mut records = rdr.records();
    let first = records
        .next()
        .ok_or_else(|| Error::InvalidConfig(format!("{} is empty", path.display())))??;
    let (col, mut values) = match first.iter().position(|h| h.trim() == "Z") {
        Some(c) => (c, Vec::new()),
        None if first.len() == 1 => {
            let v = first[0]
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidConfig("path CSV needs a `Z` column".into()))?;
            (0, vec![v])
        }
        None => return Err(Error::InvalidConfig("path CSV needs a `Z` column".into())),
    };
    for rec in records {
        let rec = rec?;
        let cell = rec
            .get(col)
            .ok_or_else(|| Error::InvalidConfig("ragged path CSV".into()))?;
        values.push(
            cell.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidConfig(format!("bad value `{cell}` in path CSV")))?,
        );
    }
    let mut p = SampledPath::from_values(values)?;
    p.provenance.spec = path.display().to_string();
    Ok(p)
}

fn parse_t_grid(spec: &str, n: usize, alpha: f64) -> Result<Vec<f64>> {
    if spec.trim() == "default" {
        return Ok(default_t_grid(n, alpha));
    }
    spec.split(',')
        .map(|s| {
            let t = s
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidConfig(format!("bad t value `{s}`")))?;
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::InvalidConfig(format!("t = {t} not in (0, 1)")));
            }
            Ok(t)
        })
        .collect()
}

fn parse_h_grid(spec: &str) -> Result<Vec<f64>> {
    let bad = || Error::InvalidConfig(format!("bad H grid `{spec}`"));
    let grid: Vec<f64> = if spec.contains(':') {
        let parts: Vec<f64> = spec
            .split(':')
            .map(|s| s.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        let [lo, hi, step] = parts[..] else {
            return Err(bad());
        };
        if !(step > 0.0 && hi >= lo) {
            return Err(bad());
        }
        let m = ((hi - lo) / step + 1e-9).floor() as usize;
        (0..=m).map(|k| lo + k as f64 * step).collect()
    } else {
        spec.split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_>>()?
    };
    for &h in &grid {
        HurstValue::new(h)?;
    }
    Ok(grid)
}

fn estimate_cmd(args: &EstimateArgs, rc: &RunConfig) -> Result<()> {
    let path = read_path_csv(&args.input)?;
    let cfg = EstimatorConfig::new(args.estimator, args.alpha, args.p)?;
    let ts = parse_t_grid(&args.t_grid, path.n, args.alpha)?;
    let table = if args.estimator.needs_model() || args.stderr {
        Some(AsymptoticTable::load_or_build(&args.preset.table(args.p))?)
    } else {
        None
    };
    let model = table
        .as_ref()
        .map(|t| t as &dyn crate::estimators::CovarianceModel);
    let mut curve = estimate(&path, &cfg, &ts, model)?;
    if let (true, Some(t)) = (args.stderr, &table) {
        attach_stderr(&mut curve, path.n, t);
    }
    let mut w = csv_writer(&args.out)?;
    w.write_record(["t", "h_hat", "clamped", "stderr", "estimator", "alpha", "p"])?;
    for j in 0..curve.len() {
        let se = curve.stderr.as_ref().map_or(f64::NAN, |s| s[j]);
        w.write_record([
            curve.ts[j].to_string(),
            fmt_opt(curve.h_hat[j]),
            curve.clamp_flags[j].to_string(),
            fmt_opt(se),
            args.estimator.to_string(),
            args.alpha.to_string(),
            args.p.to_string(),
        ])?;
    }
    w.flush()?;
    #[derive(Serialize)]
    struct Sidecar<'a> {
        run_config: &'a RunConfig,
        n: usize,
        invalid_points: usize,
        weight_fallbacks: usize,
        asymptotic_table: Option<&'a crate::asymptotic_constants::McMeta>,
    }
    write_json(
        &sidecar(&args.out),
        &Sidecar {
            run_config: rc,
            n: path.n,
            invalid_points: curve.valid.iter().filter(|v| !**v).count(),
            weight_fallbacks: curve.fallback_flags.iter().filter(|v| **v).count(),
            asymptotic_table: table.as_ref().map(|t| &t.mc_meta),
        },
    )
}

fn mise_cmd(args: &MiseArgs, rc: &RunConfig) -> Result<()> {
    let preset = Preset::from(args.preset);
    let config = MiseConfig {
        case: args.case,
        n: args.n.unwrap_or(preset.default_n()),
        alphas: vec![args.alpha],
        estimators: vec![args.estimator],
        reps: args.reps.unwrap_or(preset.reps()),
        n_fields: args.n_fields.unwrap_or(preset.n_fields()),
        p: args.p,
        master_seed: args.seed,
        field_grid: FIELD_GRID,
    };
    let table = if args.estimator.needs_model() {
        Some(AsymptoticTable::load_or_build(&args.preset.table(args.p))?)
    } else {
        None
    };
    let report = run_mise(&config, table.as_ref())?.remove(0);
    #[derive(Serialize)]
    struct Output<'a> {
        run_config: &'a RunConfig,
        report: &'a crate::experiments::MiseReport,
    }
    let out = Output {
        run_config: rc,
        report: &report,
    };
    match &args.out {
        Some(p) => {
            write_json(p, &out)?;
            let stem = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            let per_t = p.with_file_name(format!("{stem}_per_t.csv"));
            let mut w = csv_writer(&per_t)?;
            w.write_record(["t", "bias", "var"])?;
            for j in 0..report.t_grid.len() {
                w.write_record([
                    report.t_grid[j].to_string(),
                    report.per_t_bias[j].to_string(),
                    report.per_t_var[j].to_string(),
                ])?;
            }
            w.flush()?;
        }
        None => println!("{}", serde_json::to_string_pretty(&out)?),
    }
    Ok(())
}

fn tables_cmd(args: &TablesArgs, rc: &RunConfig) -> Result<()> {
    if args.p == 0 {
        return Err(Error::InvalidConfig("p must be >= 1".into()));
    }
    let grid = parse_h_grid(&args.h_grid)?;
    let mut w = csv_writer(&args.out)?;
    let mut meta = None;
    match args.what {
        TableKind::Lambda2 | TableKind::Rho2 => {
            w.write_record(["h", "i", "rho2", "lambda2"])?;
            for &h in &grid {
                let hv = HurstValue::new(h)?;
                for i in 1..=args.p {
                    w.write_record([
                        h.to_string(),
                        i.to_string(),
                        rho2_dilated(i, hv).to_string(),
                        lambda2_dilated(i, hv).to_string(),
                    ])?;
                }
            }
        }
        TableKind::Gamma => {
            w.write_record(["h", "i", "j", "gamma", "truncation_error"])?;
            let f = Filter::second_difference();
            for &h in &grid {
                let g = gamma_matrix(HurstValue::new(h)?, args.p, &f, GAMMA_TRUNCATION)?;
                for i in 0..args.p {
                    for j in 0..args.p {
                        w.write_record([
                            h.to_string(),
                            (i + 1).to_string(),
                            (j + 1).to_string(),
                            g.matrix[(i, j)].to_string(),
                            g.truncation_error.to_string(),
                        ])?;
                    }
                }
            }
        }
        TableKind::SigmaP => {
            let table = AsymptoticTable::load_or_build(&args.preset.table(args.p))?;
            w.write_record(["h", "i", "j", "sigma_p", "sigma", "sigma_stderr"])?;
            for (k, &h) in table.h_grid.iter().enumerate() {
                for i in 0..table.p {
                    for j in 0..table.p {
                        w.write_record([
                            h.to_string(),
                            (i + 1).to_string(),
                            (j + 1).to_string(),
                            table.sigma_p[k][(i, j)].to_string(),
                            table.sigma_raw[k][(i, j)].to_string(),
                            table.sigma_stderr[k][(i, j)].to_string(),
                        ])?;
                    }
                }
            }
            meta = Some(table.mc_meta);
        }
        TableKind::Clt => {
            let table = AsymptoticTable::load_or_build(&args.preset.table(args.p))?;
            let (lo, hi) = table.range();
            w.write_record(["h", "estimator", "variance", "stderr", "n", "alpha"])?;
            let scale = 2.0 * (args.n as f64).powf(1.0 - args.alpha);
            for &h in grid.iter().filter(|h| (lo..=hi).contains(*h)) {
                for est in [
                    EstimatorKind::Ir,
                    EstimatorKind::Qv,
                    EstimatorKind::Ir2,
                    EstimatorKind::Qv2,
                ] {
                    let v = limit_variance(est, h, args.p, &table)?;
                    w.write_record([
                        h.to_string(),
                        est.to_string(),
                        v.to_string(),
                        (v / scale).sqrt().to_string(),
                        args.n.to_string(),
                        args.alpha.to_string(),
                    ])?;
                }
            }
            meta = Some(table.mc_meta);
        }
    }
    w.flush()?;
    #[derive(Serialize)]
    struct Sidecar<'a> {
        run_config: &'a RunConfig,
        gamma_truncation: usize,
        asymptotic_table: Option<crate::asymptotic_constants::McMeta>,
    }
    write_json(
        &sidecar(&args.out),
        &Sidecar {
            run_config: rc,
            gamma_truncation: GAMMA_TRUNCATION,
            asymptotic_table: meta,
        },
    )
}

fn reproduce_cmd(args: &ReproduceArgs, rc: &RunConfig) -> Result<()> {
    let config = ReproduceConfig::from_preset(args.preset.into(), args.seed);
    let table = AsymptoticTable::load_or_build(&args.preset.table(config.p))?;
    let rows = reproduce_tables(&args.out_dir, &config, &table)?;
    write_json(&args.out_dir.join("run_config.json"), rc)?;
    println!(
        "wrote {} rows to {}",
        rows.len(),
        args.out_dir.join("mise_tables.csv").display()
    );
    Ok(())
}

fn dispatch(rc: &RunConfig) -> Result<()> {
    match &rc.command {
        Command::Simulate(a) => simulate(a, rc),
        Command::Estimate(a) => estimate_cmd(a, rc),
        Command::Mise(a) => mise_cmd(a, rc),
        Command::Tables(a) => tables_cmd(a, rc),
        Command::Reproduce(a) => reproduce_cmd(a, rc),
    }
}

/// Exit status for a library error: 2 for bad configurations, 1 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidConfig(_) => 2,
        _ => 1,
    }
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .try_init();
    let rc = RunConfig {
        command: cli.command,
        threads: cli.threads,
        version: VERSION.to_string(),
    };
    let result = match rc.threads {
        Some(k) => match rayon::ThreadPoolBuilder::new().num_threads(k).build() {
            Ok(pool) => pool.install(|| dispatch(&rc)),
            Err(e) => Err(Error::InvalidConfig(e.to_string())),
        },
        None => dispatch(&rc),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("hurstlab").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn run_config_round_trips() {
        let cli = parse(&[
            "--threads",
            "2",
            "mise",
            "--case",
            "fbm(0.6)",
            "--alpha",
            "0.3",
            "--estimator",
            "ir2",
        ]);
        let rc = RunConfig {
            command: cli.command,
            threads: cli.threads,
            version: VERSION.into(),
        };
        let back = RunConfig::from_json(&rc.to_json().unwrap()).unwrap();
        assert_eq!(rc, back);
    }

    #[test]
    fn grids_parse() {
        assert_eq!(parse_h_grid("0.1:0.3:0.1").unwrap().len(), 3);
        assert_eq!(parse_h_grid("0.2, 0.4").unwrap(), vec![0.2, 0.4]);
        assert!(parse_h_grid("0:0.5:0.1").is_err());
        assert!(parse_h_grid("x").is_err());
        assert_eq!(parse_t_grid("0.25,0.5", 100, 0.3).unwrap(), vec![0.25, 0.5]);
        assert_eq!(parse_t_grid("default", 10_000, 0.5).unwrap().len(), 99);
        assert!(parse_t_grid("1.5", 100, 0.3).is_err());
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(
            run([
                "hurstlab", "simulate", "--case", "H9", "--n", "100", "--seed", "1", "--out",
                "x.csv"
            ]),
            2
        );
        assert_eq!(run(["hurstlab", "bogus"]), 2);
        assert_eq!(run(["hurstlab", "--help"]), 0);
    }

    #[test]
    fn domain_errors_exit_one() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("flat.csv");
        std::fs::write(&input, "k,t,Z\n1,0.1,1\n2,0.2,1\n3,0.3,1\n4,0.4,1\n5,0.5,1\n6,0.6,1\n7,0.7,1\n8,0.8,1\n9,0.9,1\n").unwrap();
        let out = dir.path().join("h.csv");
        let code = run([
            "hurstlab",
            "estimate",
            "--input",
            input.to_str().unwrap(),
            "--estimator",
            "qv",
            "--alpha",
            "0.2",
            "--p",
            "2",
            "--t-grid",
            "0.5",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, 1);
    }

    #[test]
    fn reads_headerless_path() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("p.csv");
        std::fs::write(&f, "0.5\n1.5\n-2\n").unwrap();
        let p = read_path_csv(&f).unwrap();
        assert_eq!(p.values, vec![0.5, 1.5, -2.0]);
        assert_eq!(p.n, 4);
    }
}
