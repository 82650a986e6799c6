//! Synthetic graphs and data, edge-selection metrics and replicated experiments.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{edge_set_of, BasisKind, BasisSpec, Dataset, Graph, Support};
use crate::selection::{fit_path, select_index, Criterion, GridPolicy, PathResult, PathSpec, Solver};
use crate::{QuasrError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphKind {
    RandomSpanningTree,
    ErdosRenyi(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphModelSpec {
    pub kind: GraphKind,
    pub d: usize,
    /// Magnitudes of the off-diagonal precision entries; signs are random.
    #[serde(default = "default_weight_range")]
    pub edge_weight_range: (f64, f64),
    /// Added to the absolute row sums on the diagonal.
    #[serde(default = "default_boost")]
    pub diagonal_boost: f64,
}

fn default_weight_range() -> (f64, f64) {
    (0.2, 0.5)
}

fn default_boost() -> f64 {
    1.0
}

impl GraphModelSpec {
    pub fn tree(d: usize) -> Self {
        GraphModelSpec {
            kind: GraphKind::RandomSpanningTree,
            d,
            edge_weight_range: default_weight_range(),
            diagonal_boost: default_boost(),
        }
    }

    pub fn erdos_renyi(d: usize, p: f64) -> Self {
        GraphModelSpec { kind: GraphKind::ErdosRenyi(p), ..GraphModelSpec::tree(d) }
    }

    fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(QuasrError::InvalidArgument("d must be positive".into()));
        }
        if let GraphKind::ErdosRenyi(p) = self.kind {
            if !(p > 0.0 && p < 1.0) {
                return Err(QuasrError::InvalidArgument(format!("edge probability must be in (0, 1), got {p}")));
            }
        }
        let (lo, hi) = self.edge_weight_range;
        if !(lo >= 0.0 && hi >= lo && hi.is_finite()) {
            return Err(QuasrError::InvalidArgument(format!("bad edge weight range ({lo}, {hi})")));
        }
        if !(self.diagonal_boost > 0.0) {
            return Err(QuasrError::InvalidArgument("diagonal boost must be positive".into()));
        }
        Ok(())
    }
}

/// Uniform random labeled tree from a random Prüfer sequence.
pub fn random_tree<R: Rng>(d: usize, rng: &mut R) -> Graph {
    let mut g = Graph::empty(d);
    if d < 2 {
        return g;
    }
    let seq: Vec<usize> = (0..d - 2).map(|_| rng.random_range(0..d)).collect();
    let mut degree = vec![1usize; d];
    for &v in &seq {
        degree[v] += 1;
    }
    for &v in &seq {
        let leaf = (0..d).find(|&u| degree[u] == 1).expect("a leaf always exists");
        g.add_edge(leaf, v).expect("valid endpoints");
        degree[leaf] -= 1;
        degree[v] -= 1;
    }
    let rest: Vec<usize> = (0..d).filter(|&u| degree[u] == 1).collect();
    g.add_edge(rest[0], rest[1]).expect("valid endpoints");
    g
}

pub fn erdos_renyi<R: Rng>(d: usize, p: f64, rng: &mut R) -> Graph {
    let mut g = Graph::empty(d);
    for i in 0..d {
        for j in (i + 1)..d {
            if rng.random::<f64>() < p {
                g.add_edge(i, j).expect("valid endpoints");
            }
        }
    }
    g
}

/// A graph and a positive definite precision matrix supported on it.
#[derive(Debug, Clone)]
pub struct GaussianModel {
    pub graph: Graph,
    pub precision: DMatrix<f64>,
}

impl GaussianModel {
    pub fn generate<R: Rng>(spec: &GraphModelSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let d = spec.d;
        let graph = match spec.kind {
            GraphKind::RandomSpanningTree => random_tree(d, rng),
            GraphKind::ErdosRenyi(p) => erdos_renyi(d, p, rng),
        };
        let (lo, hi) = spec.edge_weight_range;
        let mut omega = DMatrix::zeros(d, d);
        for (i, j) in graph.edges() {
            let mag = if hi > lo { rng.random_range(lo..hi) } else { lo };
            let w = if rng.random::<bool>() { mag } else { -mag };
            omega[(i, j)] = w;
            omega[(j, i)] = w;
        }
        let mut boost = spec.diagonal_boost;
        for _ in 0..20 {
            let mut candidate = omega.clone();
            for i in 0..d {
                let row: f64 = (0..d).filter(|&j| j != i).map(|j| omega[(i, j)].abs()).sum();
                candidate[(i, i)] = row + boost;
            }
            if min_eigenvalue(&candidate) > 1e-6 {
                return Ok(GaussianModel { graph, precision: candidate });
            }
            boost *= 2.0;
        }
        Err(QuasrError::Factorization("precision matrix stayed indefinite after diagonal boosting".into()))
    }

    pub fn d(&self) -> usize {
        self.graph.d()
    }

    /// `n` raw draws from `N(0, precision^{-1})`, one per row.
    pub fn sample<R: Rng>(&self, n: usize, rng: &mut R) -> Result<DMatrix<f64>> {
        let d = self.d();
        let chol = nalgebra::Cholesky::new(self.precision.clone())
            .ok_or_else(|| QuasrError::Factorization("precision is not positive definite".into()))?;
        let upper = chol.l().transpose();
        let mut out = DMatrix::zeros(n, d);
        for r in 0..n {
            let z = nalgebra::DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
            // x = L^{-T} z has covariance (L L')^{-1}
            let x = upper
                .solve_upper_triangular(&z)
                .ok_or_else(|| QuasrError::Factorization("singular Cholesky factor".into()))?;
            out.set_row(r, &x.transpose());
        }
        Ok(out)
    }

    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        self.precision.clone().try_inverse().ok_or_else(|| QuasrError::Factorization("precision is singular".into()))
    }

    /// Precision of the unit-variance rescaling, `D^{1/2} Omega D^{1/2}` with
    /// `D = diag(Omega^{-1})`.
    pub fn correlation_precision(&self) -> Result<DMatrix<f64>> {
        let sd = self.covariance()?.diagonal().map(f64::sqrt);
        Ok(DMatrix::from_fn(self.d(), self.d(), |i, j| sd[i] * self.precision[(i, j)] * sd[j]))
    }

    /// Draws rescaled to unit marginal variance, then mapped to mean `0.5`
    /// and standard deviation `1/8`.
    pub fn copula_source<R: Rng>(&self, n: usize, rng: &mut R) -> Result<Dataset> {
        let sd = self.covariance()?.diagonal().map(f64::sqrt);
        let mut raw = self.sample(n, rng)?;
        for (c, mut col) in raw.column_iter_mut().enumerate() {
            col.apply(|x| *x = 0.5 + *x / sd[c] / 8.0);
        }
        Dataset::new(raw, Support::RealLine)
    }
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

/// Standardized Gaussian sample with its generating graph and precision.
#[derive(Debug, Clone)]
pub struct GaussianSample {
    pub data: Dataset,
    pub graph: Graph,
    pub precision: DMatrix<f64>,
}

/// Random graph, precision and `n` standardized samples; deterministic in `seed`.
pub fn gen_gaussian_graph(spec: &GraphModelSpec, n: usize, seed: u64) -> Result<GaussianSample> {
    if n == 0 {
        return Err(QuasrError::EmptyData);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = GaussianModel::generate(spec, &mut rng)?;
    let raw = model.sample(n, &mut rng)?;
    let data = Dataset::new(raw, Support::RealLine)?.standardize()?;
    Ok(GaussianSample { data, graph: model.graph, precision: model.precision })
}

const COPULA_EPS: f64 = 1e-9;

/// `y = sign(x - 0.5) |x - 0.5|^0.6 / 5 + 0.5`, clamped into `[eps, 1 - eps]`.
pub fn copula_value(x: f64) -> f64 {
    let t = x - 0.5;
    let y = t.signum() * t.abs().powf(0.6) / 5.0 + 0.5;
    let y = if t == 0.0 { 0.5 } else { y };
    y.clamp(COPULA_EPS, 1.0 - COPULA_EPS)
}

pub fn copula_transform(data: &Dataset) -> Result<Dataset> {
    Dataset::new(data.values().map(copula_value), Support::UnitCube)
}

/// True positive and true negative rates over unordered pairs.
///
/// A rate is `None` when its denominator is empty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeMetrics {
    pub tp_rate: Option<f64>,
    pub tn_rate: Option<f64>,
}

impl EdgeMetrics {
    /// `1 - TN`, the false positive rate.
    pub fn fpr(&self) -> Option<f64> {
        self.tn_rate.map(|t| 1.0 - t)
    }
}

pub fn edge_metrics(estimated: &Graph, truth: &Graph) -> Result<EdgeMetrics> {
    if estimated.d() != truth.d() {
        return Err(QuasrError::DimensionMismatch(format!("graphs on {} and {} vertices", estimated.d(), truth.d())));
    }
    let pairs = truth.pair_count();
    let positives = truth.edge_count();
    let hits = estimated.edges().filter(|&(i, j)| truth.contains(i, j)).count();
    let false_pos = estimated.edge_count() - hits;
    let negatives = pairs - positives;
    Ok(EdgeMetrics {
        tp_rate: (positives > 0).then(|| hits as f64 / positives as f64),
        tn_rate: (negatives > 0).then(|| (negatives - false_pos) as f64 / negatives as f64),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub lambda: f64,
    pub basis: BasisSpec,
    pub metrics: EdgeMetrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    /// Ordered by lambda descending.
    pub points: Vec<RocPoint>,
    /// Position in `points` of the entry `select_model` picks.
    pub selected: Option<usize>,
}

pub fn roc_curve(path: &PathResult, truth: &Graph, criterion: Criterion) -> Result<RocCurve> {
    if path.entries.is_empty() {
        return Err(QuasrError::InvalidArgument("empty path".into()));
    }
    let mut order: Vec<usize> = (0..path.entries.len()).collect();
    order.sort_by(|&a, &b| path.entries[b].lambda.total_cmp(&path.entries[a].lambda));
    let points = order
        .iter()
        .map(|&k| {
            let e = &path.entries[k];
            Ok(RocPoint {
                lambda: e.lambda,
                basis: e.basis,
                metrics: edge_metrics(&edge_set_of(&e.theta, 0.0), truth)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let selected = select_index(path, criterion).ok().and_then(|s| order.iter().position(|&k| k == s));
    Ok(RocCurve { points, selected })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub name: String,
    pub graph: GraphModelSpec,
    pub n: usize,
    pub n_holdout: usize,
    pub reps: usize,
    pub seed: u64,
    /// Transform the Gaussian draws to the unit cube before fitting.
    pub copula: bool,
    pub basis: BasisSpec,
    pub grid_count: usize,
    pub grid_ratio_min: f64,
    /// Overrides the log grid when present.
    pub lambdas: Option<Vec<f64>>,
    pub truncations: Option<Vec<(usize, usize)>>,
    pub criterion: CriterionName,
    pub solver: SolverName,
    pub rho: f64,
    pub rel_tol: Option<f64>,
    pub max_iters: usize,
    pub penalize_vertices: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriterionName {
    Hyvarinen,
    GaussianNll,
}

impl From<CriterionName> for Criterion {
    fn from(c: CriterionName) -> Self {
        match c {
            CriterionName::Hyvarinen => Criterion::HyvarinenHoldout,
            CriterionName::GaussianNll => Criterion::GaussianNllHoldout,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverName {
    Auto,
    Cd,
    Admm,
}

impl From<SolverName> for Solver {
    fn from(s: SolverName) -> Self {
        match s {
            SolverName::Auto => Solver::Auto,
            SolverName::Cd => Solver::Cd,
            SolverName::Admm => Solver::Admm,
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "experiment".into(),
            graph: GraphModelSpec::tree(10),
            n: 100,
            n_holdout: 100,
            reps: 1,
            seed: 0,
            copula: false,
            basis: BasisSpec::gaussian(),
            grid_count: 30,
            grid_ratio_min: 0.01,
            lambdas: None,
            truncations: None,
            criterion: CriterionName::GaussianNll,
            solver: SolverName::Auto,
            rho: 1.0,
            rel_tol: None,
            max_iters: 20_000,
            penalize_vertices: true,
        }
    }
}

impl ExperimentConfig {
    /// Tree graph, `d = 30`, `n = 100`, 25 replications, held-out likelihood.
    pub fn table3() -> Self {
        ExperimentConfig {
            name: "table3".into(),
            graph: GraphModelSpec::tree(30),
            n: 100,
            n_holdout: 100,
            reps: 25,
            seed: 2016,
            ..ExperimentConfig::default()
        }
    }

    /// Copula-transformed tree, `d = 10`, `n = 500`, Legendre `m1 = m2 = 2`.
    pub fn copula_tree() -> Self {
        ExperimentConfig {
            name: "copula_tree".into(),
            graph: GraphModelSpec::tree(10),
            n: 500,
            n_holdout: 500,
            reps: 1,
            seed: 7,
            copula: true,
            basis: BasisSpec { kind: BasisKind::LegendrePairwise, m1: 2, m2: 2 },
            criterion: CriterionName::Hyvarinen,
            ..ExperimentConfig::default()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "table3" => Some(Self::table3()),
            "copula_tree" => Some(Self::copula_tree()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.graph.validate()?;
        if self.n < 2 || self.n_holdout < 2 {
            return Err(QuasrError::InvalidArgument("n and n_holdout must be at least 2".into()));
        }
        if self.reps == 0 {
            return Err(QuasrError::InvalidArgument("reps must be positive".into()));
        }
        if self.copula != (self.basis.kind == BasisKind::LegendrePairwise) {
            return Err(QuasrError::InvalidArgument(
                "copula data pair with the Legendre basis and Gaussian data with the Gaussian basis".into(),
            ));
        }
        if self.basis.kind == BasisKind::LegendrePairwise {
            BasisSpec::legendre(self.basis.m1, self.basis.m2)?;
        }
        if self.criterion == CriterionName::GaussianNll && self.basis.kind != BasisKind::Gaussian {
            return Err(QuasrError::CriterionUnavailable("held-out likelihood needs the Gaussian basis".into()));
        }
        self.path_spec().grid.resolve(1.0)?;
        Ok(())
    }

    pub fn path_spec(&self) -> PathSpec {
        let grid = match &self.lambdas {
            Some(l) => GridPolicy::Explicit(l.clone()),
            None => GridPolicy::LogSpaced { count: self.grid_count, ratio_min: self.grid_ratio_min },
        };
        PathSpec {
            grid,
            truncations: self.truncations.clone(),
            solver: self.solver.into(),
            rho: self.rho,
            rel_tol: self.rel_tol,
            max_iters: self.max_iters,
            warm_start: true,
            penalize_vertices: self.penalize_vertices,
        }
    }
}

/// Outcome of one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepOutcome {
    pub rep: usize,
    pub tp_rate: Option<f64>,
    pub tn_rate: Option<f64>,
    /// Held-out criterion value at the selected model.
    pub heldout_risk: Option<f64>,
    pub selected_lambda: Option<f64>,
    pub edge_count: Option<usize>,
    /// Smallest eigenvalue of the selected precision (Gaussian basis only).
    pub min_eigenvalue: Option<f64>,
    pub converged: bool,
    pub error: Option<String>,
    /// ROC points ordered by lambda descending.
    #[serde(skip)]
    pub roc: Vec<RocPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocRow {
    pub index: usize,
    pub lambda: f64,
    pub fpr: f64,
    pub tpr: f64,
    pub reps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub reps: usize,
    pub failed: usize,
    pub tp_mean: Option<f64>,
    pub tp_sd: Option<f64>,
    pub tn_mean: Option<f64>,
    pub tn_sd: Option<f64>,
    pub risk_mean: Option<f64>,
    pub risk_sd: Option<f64>,
    pub positive_definite: Option<usize>,
    pub unconverged: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub outcomes: Vec<RepOutcome>,
    pub roc: Vec<RocRow>,
    pub summary: Summary,
}

fn rep_rng(seed: u64, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep as u64);
    rng
}

fn run_rep(cfg: &ExperimentConfig, rep: usize) -> Result<RepOutcome> {
    let mut rng = rep_rng(cfg.seed, rep);
    let model = GaussianModel::generate(&cfg.graph, &mut rng)?;
    let (train, holdout) = if cfg.copula {
        let a = copula_transform(&model.copula_source(cfg.n, &mut rng)?)?;
        let b = copula_transform(&model.copula_source(cfg.n_holdout, &mut rng)?)?;
        (a, b)
    } else {
        let a = Dataset::new(model.sample(cfg.n, &mut rng)?, Support::RealLine)?.standardize()?;
        let b = Dataset::new(model.sample(cfg.n_holdout, &mut rng)?, Support::RealLine)?.standardize()?;
        (a, b)
    };
    let path = fit_path(&train, &cfg.basis, &cfg.path_spec(), &holdout)?;
    let criterion: Criterion = cfg.criterion.into();
    let roc = roc_curve(&path, &model.graph, criterion)?;
    let k = select_index(&path, criterion)?;
    let chosen = &path.entries[k];
    let metrics = edge_metrics(&edge_set_of(&chosen.theta, 0.0), &model.graph)?;
    let risk = match criterion {
        Criterion::HyvarinenHoldout => chosen.holdout_score,
        Criterion::GaussianNllHoldout => chosen.holdout_nll.unwrap_or(f64::NAN),
    };
    let min_eig = match cfg.basis.kind {
        BasisKind::Gaussian => Some(min_eigenvalue(&chosen.theta.to_precision()?)),
        BasisKind::LegendrePairwise => None,
    };
    Ok(RepOutcome {
        rep,
        tp_rate: metrics.tp_rate,
        tn_rate: metrics.tn_rate,
        heldout_risk: Some(risk),
        selected_lambda: Some(chosen.lambda),
        edge_count: Some(chosen.edge_count),
        min_eigenvalue: min_eig,
        converged: path.all_converged(),
        error: None,
        roc: roc.points,
    })
}

fn mean_sd(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        Some((values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
    } else {
        None
    };
    (Some(mean), sd)
}

/// Runs `reps` independent replications in parallel; each replication draws
/// from its own ChaCha stream of `seed`, so results do not depend on the
/// thread count.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let outcomes: Vec<RepOutcome> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| {
            run_rep(cfg, rep).unwrap_or_else(|e| RepOutcome {
                rep,
                tp_rate: None,
                tn_rate: None,
                heldout_risk: None,
                selected_lambda: None,
                edge_count: None,
                min_eigenvalue: None,
                converged: false,
                error: Some(e.to_string()),
                roc: Vec::new(),
            })
        })
        .collect();

    let ok: Vec<&RepOutcome> = outcomes.iter().filter(|o| o.error.is_none()).collect();
    let collect = |f: &dyn Fn(&RepOutcome) -> Option<f64>| ok.iter().filter_map(|o| f(o)).collect::<Vec<f64>>();
    let (tp_mean, tp_sd) = mean_sd(&collect(&|o| o.tp_rate));
    let (tn_mean, tn_sd) = mean_sd(&collect(&|o| o.tn_rate));
    let (risk_mean, risk_sd) = mean_sd(&collect(&|o| o.heldout_risk.filter(|r| r.is_finite())));
    let positive_definite = (cfg.basis.kind == BasisKind::Gaussian)
        .then(|| ok.iter().filter(|o| o.min_eigenvalue.is_some_and(|m| m > 0.0)).count());

    let len = ok.iter().map(|o| o.roc.len()).max().unwrap_or(0);
    let roc = (0..len)
        .map(|k| {
            let pts: Vec<&RocPoint> = ok.iter().filter_map(|o| o.roc.get(k)).collect();
            let lambda = mean_sd(&pts.iter().map(|p| p.lambda).collect::<Vec<_>>()).0.unwrap_or(f64::NAN);
            let fpr = mean_sd(&pts.iter().filter_map(|p| p.metrics.fpr()).collect::<Vec<_>>()).0.unwrap_or(f64::NAN);
            let tpr = mean_sd(&pts.iter().filter_map(|p| p.metrics.tp_rate).collect::<Vec<_>>()).0.unwrap_or(f64::NAN);
            RocRow { index: k, lambda, fpr, tpr, reps: pts.len() }
        })
        .collect();

    let summary = Summary {
        name: cfg.name.clone(),
        reps: cfg.reps,
        failed: outcomes.len() - ok.len(),
        tp_mean,
        tp_sd,
        tn_mean,
        tn_sd,
        risk_mean,
        risk_sd,
        positive_definite,
        unconverged: ok.iter().filter(|o| !o.converged).count(),
    };
    Ok(ExperimentReport { outcomes, roc, summary })
}
