//! File formats and the `quasr` subcommands.
//!
//! Exit codes: `0` success, `2` bad input (nothing written), `3` solver did
//! not converge (outputs written, `converged: false` in diagnostics).

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::admm::{admm_fit, AdmmConfig};
use crate::cd::{cd_fit, CdConfig};
use crate::model::{group_norms, BasisKind, BasisSpec, Dataset, GroupKey, ParamBlocks, Support};
use crate::selection::{fit_path, lambda_start, select_index, Criterion, GridPolicy, PathEntry, PathSpec, Solver};
use crate::sim::{copula_transform, ExperimentConfig, GaussianModel, GraphModelSpec};
use crate::stats::{gaussian_nll, Statistics};
use crate::{QuasrError, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_BAD_INPUT: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "quasr", version, about = "Sparse pairwise graphical models by regularized score matching")]
pub struct Cli {
    /// Worker threads (falls back to QUASR_THREADS, then all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Single-threaded execution for bit-reproducible baselines.
    #[arg(long, global = true)]
    pub deterministic: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit one lambda or a path and write theta.json, edges.csv, diagnostics.json.
    Fit(FitArgs),
    /// Generate a random graph, precision matrix and data.
    Simulate(SimulateArgs),
    /// Run a replicated experiment from a JSON descriptor or preset.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisArg {
    Gaussian,
    Legendre,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverArg {
    Auto,
    Cd,
    Admm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CriterionArg {
    Hyvarinen,
    GaussianNll,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitArgs {
    /// CSV with one sample per row and an optional header.
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = BasisArg::Gaussian)]
    pub basis: BasisArg,
    #[arg(long, default_value_t = 2)]
    pub m1: usize,
    #[arg(long, default_value_t = 2)]
    pub m2: usize,
    #[arg(long, conflicts_with = "path")]
    pub lambda: Option<f64>,
    /// Fit a log-spaced lambda path and keep the held-out best.
    #[arg(long)]
    pub path: bool,
    #[arg(long, default_value_t = 30)]
    pub grid_count: usize,
    #[arg(long, default_value_t = 0.01)]
    pub grid_ratio: f64,
    #[arg(long)]
    pub holdout: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = CriterionArg::Hyvarinen)]
    pub criterion: CriterionArg,
    #[arg(long, value_enum, default_value_t = SolverArg::Auto)]
    pub solver: SolverArg,
    #[arg(long, default_value_t = 1.0)]
    pub rho: f64,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long, default_value_t = 20_000)]
    pub max_iters: usize,
    /// Center and scale columns to unit variance (real-line data only).
    #[arg(long)]
    pub standardize: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphArg {
    Tree,
    Er,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = GraphArg::Tree)]
    pub graph: GraphArg,
    /// Edge probability for `--graph er`.
    #[arg(long, default_value_t = 0.1)]
    pub p: f64,
    #[arg(long)]
    pub d: usize,
    #[arg(long)]
    pub n: usize,
    /// Transform to the unit cube with the copula map.
    #[arg(long)]
    pub copula: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ExperimentArgs {
    /// JSON experiment descriptor.
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Built-in descriptor: `table3` or `copula_tree`.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    let threads = if cli.deterministic {
        Some(1)
    } else {
        cli.threads.or_else(|| std::env::var("QUASR_THREADS").ok().and_then(|v| v.parse().ok()))
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads.unwrap_or(0)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_BAD_INPUT;
        }
    };
    let outcome = pool.install(|| match &cli.command {
        Command::Fit(a) => cmd_fit(a, &cli),
        Command::Simulate(a) => cmd_simulate(a, &cli),
        Command::Experiment(a) => cmd_experiment(a, &cli),
    });
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                QuasrError::NotConverged { .. } => EXIT_NOT_CONVERGED,
                _ => EXIT_BAD_INPUT,
            }
        }
    }
}

/// Reads a numeric CSV; a first row that does not parse as numbers is a header.
pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let mut reader =
        csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_path(path).map_err(csv_err)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(r) => rows.push(r),
            Err(_) if line == 0 => continue,
            Err(e) => return Err(QuasrError::Parse(format!("{}: row {}: {e}", path.display(), line + 1))),
        }
    }
    if rows.is_empty() {
        return Err(QuasrError::EmptyData);
    }
    let d = rows[0].len();
    if d == 0 {
        return Err(QuasrError::Parse(format!("{}: no columns", path.display())));
    }
    Ok(DMatrix::from_fn(rows.len(), d, |r, c| rows[r][c]))
}

fn csv_err(e: csv::Error) -> QuasrError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => QuasrError::Io(io),
        other => QuasrError::Parse(format!("{other:?}")),
    }
}

pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>, header: Option<&[String]>) -> Result<()> {
    let mut out = String::new();
    if let Some(h) = header {
        out.push_str(&h.join(","));
        out.push('\n');
    }
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|c| format!("{}", m[(r, c)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// On-disk form of [`ParamBlocks`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaFile {
    pub basis: BasisSpec,
    pub lambda: f64,
    pub d: usize,
    pub vertex_dim: usize,
    pub edge_dim: usize,
    pub vertices: Vec<Vec<f64>>,
    pub edges: Vec<EdgeBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeBlock {
    pub i: usize,
    pub j: usize,
    pub values: Vec<f64>,
}

impl ThetaFile {
    pub fn new(theta: &ParamBlocks, basis: BasisSpec, lambda: f64) -> Self {
        let mut vertices = Vec::with_capacity(theta.d());
        let mut edges = Vec::new();
        for (key, values) in theta.groups() {
            match key {
                GroupKey::Vertex(_) => vertices.push(values.to_vec()),
                GroupKey::Edge(i, j) => edges.push(EdgeBlock { i, j, values: values.to_vec() }),
            }
        }
        ThetaFile {
            basis,
            lambda,
            d: theta.d(),
            vertex_dim: theta.vertex_dim(),
            edge_dim: theta.edge_dim(),
            vertices,
            edges,
        }
    }

    pub fn to_params(&self) -> Result<ParamBlocks> {
        if self.vertices.len() != self.d {
            return Err(QuasrError::Parse(format!("{} vertex blocks for d={}", self.vertices.len(), self.d)));
        }
        let mut theta = ParamBlocks::zeros(self.d, self.vertex_dim, self.edge_dim);
        for (i, v) in self.vertices.iter().enumerate() {
            theta.set_block(GroupKey::Vertex(i), v.clone())?;
        }
        for e in &self.edges {
            if e.i >= e.j || e.j >= self.d {
                return Err(QuasrError::Parse(format!("bad edge ({}, {})", e.i, e.j)));
            }
            theta.set_block(GroupKey::Edge(e.i, e.j), e.values.clone())?;
        }
        Ok(theta)
    }
}

pub fn write_theta_json(path: &Path, theta: &ParamBlocks, basis: BasisSpec, lambda: f64) -> Result<()> {
    let text = serde_json::to_string_pretty(&ThetaFile::new(theta, basis, lambda)).map_err(json_err)?;
    fs::write(path, text + "\n")?;
    Ok(())
}

pub fn read_theta_json(path: &Path) -> Result<(ParamBlocks, ThetaFile)> {
    let file: ThetaFile = serde_json::from_str(&fs::read_to_string(path)?).map_err(json_err)?;
    Ok((file.to_params()?, file))
}

fn json_err(e: serde_json::Error) -> QuasrError {
    QuasrError::Parse(e.to_string())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(json_err)?;
    fs::write(path, text + "\n")?;
    Ok(())
}

fn edges_csv(theta: &ParamBlocks) -> String {
    let mut out = String::from("i,j,group_norm\n");
    for (key, norm) in group_norms(theta) {
        if let GroupKey::Edge(i, j) = key {
            if norm > 0.0 {
                out.push_str(&format!("{i},{j},{norm}\n"));
            }
        }
    }
    out
}

struct Timings(Vec<(String, f64)>, Instant);

impl Timings {
    fn new() -> Self {
        Timings(Vec::new(), Instant::now())
    }

    fn lap(&mut self, stage: &str) {
        self.0.push((stage.to_string(), self.1.elapsed().as_secs_f64()));
        self.1 = Instant::now();
    }

    fn to_json(&self) -> Value {
        Value::Object(self.0.iter().map(|(k, v)| (k.clone(), json!(v))).collect())
    }
}

fn write_manifest(dir: &Path, command: &str, config: Value, seed: u64, cli: &Cli, timings: &Timings) -> Result<()> {
    let manifest = json!({
        "command": command,
        "config": config,
        "seed": seed,
        "threads": cli.threads,
        "deterministic": cli.deterministic,
        "version": env!("CARGO_PKG_VERSION"),
        "wall_clock_seconds": timings.to_json(),
    });
    write_json(&dir.join("manifest.json"), &manifest)
}

fn to_value(v: &impl Serialize) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

fn load_dataset(path: &Path, basis: &BasisSpec, standardize: bool) -> Result<Dataset> {
    let data = Dataset::new(read_matrix_csv(path)?, basis.support())?;
    if standardize {
        if basis.support() != Support::RealLine {
            return Err(QuasrError::InvalidArgument("--standardize applies to real-line data only".into()));
        }
        data.standardize()
    } else {
        Ok(data)
    }
}

fn fit_basis(a: &FitArgs) -> Result<BasisSpec> {
    match a.basis {
        BasisArg::Gaussian => Ok(BasisSpec::gaussian()),
        BasisArg::Legendre => BasisSpec::legendre(a.m1, a.m2),
    }
}

fn entry_json(e: &PathEntry) -> Value {
    json!({
        "lambda": e.lambda,
        "m1": e.basis.m1,
        "m2": e.basis.m2,
        "edge_count": e.edge_count,
        "train_score": finite(e.train_score),
        "holdout_score": finite(e.holdout_score),
        "holdout_nll": e.holdout_nll.and_then(finite),
        "iterations": e.iterations,
        "kkt_residual": finite(e.kkt_residual),
        "converged": e.converged,
        "warm_from": e.warm_from,
        "error": e.error,
    })
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn cmd_fit(a: &FitArgs, cli: &Cli) -> Result<i32> {
    let mut timings = Timings::new();
    let basis = fit_basis(a)?;
    let data = load_dataset(&a.input, &basis, a.standardize)?;
    let holdout = a.holdout.as_deref().map(|p| load_dataset(p, &basis, a.standardize)).transpose()?;
    if let Some(h) = &holdout {
        if h.d() != data.d() {
            return Err(QuasrError::DimensionMismatch(format!("holdout has {} columns, data {}", h.d(), data.d())));
        }
    }
    if !(a.rho > 0.0) {
        return Err(QuasrError::InvalidArgument("--rho must be positive".into()));
    }
    let solver = match a.solver {
        SolverArg::Auto => Solver::Auto,
        SolverArg::Cd => Solver::Cd,
        SolverArg::Admm => Solver::Admm,
    };
    if solver == Solver::Cd && basis.kind != BasisKind::Gaussian {
        return Err(QuasrError::InvalidArgument("--solver cd needs --basis gaussian".into()));
    }
    timings.lap("read");

    let (theta, lambda, diagnostics, converged) = if a.path {
        let holdout = holdout.ok_or_else(|| QuasrError::InvalidArgument("--path needs --holdout".into()))?;
        let criterion = match a.criterion {
            CriterionArg::Hyvarinen => Criterion::HyvarinenHoldout,
            CriterionArg::GaussianNll => Criterion::GaussianNllHoldout,
        };
        let spec = PathSpec {
            grid: GridPolicy::LogSpaced { count: a.grid_count, ratio_min: a.grid_ratio },
            solver,
            rho: a.rho,
            rel_tol: a.tol,
            max_iters: a.max_iters,
            ..PathSpec::default()
        };
        let path = fit_path(&data, &basis, &spec, &holdout)?;
        let k = select_index(&path, criterion)?;
        let chosen = &path.entries[k];
        let diag = json!({
            "mode": "path",
            "lambda_start": path.lambda_start,
            "selected": k,
            "criterion": to_value(&a.criterion),
            "converged": path.all_converged(),
            "entries": path.entries.iter().map(entry_json).collect::<Vec<_>>(),
        });
        (chosen.theta.clone(), chosen.lambda, diag, path.all_converged())
    } else {
        let lambda = a.lambda.ok_or_else(|| QuasrError::InvalidArgument("give --lambda or --path".into()))?;
        let stats = Statistics::build(&data, &basis)?;
        let use_cd = match solver {
            Solver::Cd => true,
            Solver::Admm => false,
            Solver::Auto => basis.kind == BasisKind::Gaussian,
        };
        let fit = match (&stats, use_cd) {
            (Statistics::Gaussian(g), true) => {
                let cfg = CdConfig {
                    max_sweeps: a.max_iters,
                    rel_tol: a.tol.unwrap_or(CdConfig::new(lambda).rel_tol),
                    ..CdConfig::new(lambda)
                };
                cd_fit(g, &cfg, None)?
            }
            _ => {
                let cfg = AdmmConfig {
                    rho: a.rho,
                    max_iters: a.max_iters,
                    rel_tol: a.tol.unwrap_or(AdmmConfig::new(lambda).rel_tol),
                    ..AdmmConfig::new(lambda)
                };
                admm_fit(&stats.columns(), &basis, &cfg, None)?.result
            }
        };
        let holdout_stats = holdout.as_ref().map(|h| Statistics::build(h, &basis)).transpose()?;
        let holdout_score = holdout_stats.as_ref().map(|h| h.hyvarinen_score(&fit.theta)).transpose()?;
        let holdout_nll = match &holdout_stats {
            Some(Statistics::Gaussian(h)) => finite(gaussian_nll(&fit.theta.to_precision()?, &h.sigma_hat)),
            _ => None,
        };
        let diag = json!({
            "mode": "single",
            "lambda": lambda,
            "lambda_start": lambda_start(&stats),
            "iterations": fit.iterations,
            "kkt_residual": fit.kkt_residual,
            "converged": fit.converged,
            "last_change": finite(fit.last_change),
            "edge_count": fit.edges().edge_count(),
            "train_score": stats.hyvarinen_score(&fit.theta)?,
            "holdout_score": holdout_score,
            "holdout_nll": holdout_nll,
        });
        let converged = fit.converged;
        (fit.theta, lambda, diag, converged)
    };
    timings.lap("fit");

    fs::create_dir_all(&a.out)?;
    write_theta_json(&a.out.join("theta.json"), &theta, basis, lambda)?;
    fs::write(a.out.join("edges.csv"), edges_csv(&theta))?;
    write_json(&a.out.join("diagnostics.json"), &diagnostics)?;
    timings.lap("write");
    write_manifest(&a.out, "fit", to_value(a), a.seed, cli, &timings)?;
    if converged {
        Ok(EXIT_OK)
    } else {
        eprintln!("warning: solver did not converge; outputs are flagged");
        Ok(EXIT_NOT_CONVERGED)
    }
}

fn cmd_simulate(a: &SimulateArgs, cli: &Cli) -> Result<i32> {
    let mut timings = Timings::new();
    let spec = match a.graph {
        GraphArg::Tree => GraphModelSpec::tree(a.d),
        GraphArg::Er => GraphModelSpec::erdos_renyi(a.d, a.p),
    };
    if a.n == 0 {
        return Err(QuasrError::InvalidArgument("--n must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let model = GaussianModel::generate(&spec, &mut rng)?;
    let data = if a.copula {
        copula_transform(&model.copula_source(a.n, &mut rng)?)?
    } else {
        Dataset::new(model.sample(a.n, &mut rng)?, Support::RealLine)?.standardize()?
    };
    timings.lap("generate");

    fs::create_dir_all(&a.out)?;
    let header: Vec<String> = (0..a.d).map(|c| format!("x{c}")).collect();
    write_matrix_csv(&a.out.join("data.csv"), data.values(), Some(&header))?;
    let mut edges = String::from("i,j\n");
    for (i, j) in model.graph.edges() {
        edges.push_str(&format!("{i},{j}\n"));
    }
    fs::write(a.out.join("truth_edges.csv"), edges)?;
    write_matrix_csv(&a.out.join("precision.csv"), &model.precision, None)?;
    timings.lap("write");
    write_manifest(&a.out, "simulate", to_value(a), a.seed, cli, &timings)?;
    Ok(EXIT_OK)
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v}")).unwrap_or_default()
}

fn cmd_experiment(a: &ExperimentArgs, cli: &Cli) -> Result<i32> {
    let mut timings = Timings::new();
    let mut cfg = match (&a.config, &a.preset) {
        (Some(path), _) => serde_json::from_str::<ExperimentConfig>(&fs::read_to_string(path)?).map_err(json_err)?,
        (None, Some(name)) => ExperimentConfig::preset(name)
            .ok_or_else(|| QuasrError::InvalidArgument(format!("unknown preset {name}")))?,
        (None, None) => return Err(QuasrError::InvalidArgument("give --config or --preset".into())),
    };
    if let Some(r) = a.reps {
        cfg.reps = r;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let report = crate::sim::run_experiment(&cfg)?;
    timings.lap("experiment");

    fs::create_dir_all(&a.out)?;
    let mut metrics =
        String::from("rep,tp_rate,tn_rate,heldout_risk,selected_lambda,edge_count,min_eigenvalue,converged,error\n");
    for o in &report.outcomes {
        let error = o.error.as_deref().unwrap_or("").replace(['"', ',', '\n'], " ");
        metrics.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            o.rep,
            opt(o.tp_rate),
            opt(o.tn_rate),
            opt(o.heldout_risk),
            opt(o.selected_lambda),
            o.edge_count.map(|c| c.to_string()).unwrap_or_default(),
            opt(o.min_eigenvalue),
            o.converged,
            error
        ));
        if let Some(e) = &o.error {
            eprintln!("replication {} failed: {e}", o.rep);
        }
    }
    fs::write(a.out.join("metrics.csv"), metrics)?;
    let mut roc = String::from("index,lambda,fpr,tpr,reps\n");
    for r in &report.roc {
        roc.push_str(&format!("{},{},{},{},{}\n", r.index, r.lambda, r.fpr, r.tpr, r.reps));
    }
    fs::write(a.out.join("roc.csv"), roc)?;
    write_json(&a.out.join("summary.json"), &report.summary)?;
    timings.lap("write");
    write_manifest(&a.out, "experiment", to_value(&cfg), cfg.seed, cli, &timings)?;
    Ok(EXIT_OK)
}
