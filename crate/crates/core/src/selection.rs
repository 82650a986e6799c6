//! Regularization grids, warm-started paths and held-out model selection.

use nalgebra::{DMatrix, DVector};

use crate::admm::{augment_to_layout, AdmmConfig, AdmmProblem, AdmmState, ColumnFactor};
use crate::cd::{cd_fit, CdConfig};
use crate::model::{column_block_offset, l2_norm, BasisKind, BasisSpec, Dataset, FitResult, ParamBlocks};
use crate::stats::{gaussian_nll, ColumnStats, Statistics};
use crate::{QuasrError, Result};

/// Smallest `lambda` at which `theta = 0` is optimal: the largest group norm
/// of `K`, with edge blocks averaged over their two column copies.
pub fn lambda_start(stats: &Statistics) -> f64 {
    lambda_start_columns(&stats.columns(), &stats.basis())
}

pub fn lambda_start_columns(stats: &[ColumnStats], basis: &BasisSpec) -> f64 {
    let d = stats.len();
    let (vd, ed) = (basis.vertex_dim(), basis.edge_dim());
    let vertex = (0..d).map(|i| l2_norm(&stats[i].kvec.as_slice()[..vd])).fold(0.0, f64::max);
    let grads: Vec<DVector<f64>> = stats.iter().map(|s| s.kvec.clone()).collect();
    vertex.max(max_edge_gradient(&grads, vd, ed))
}

/// Smallest `lambda` at which every edge block is zero when vertex blocks
/// are unpenalized: the largest averaged edge gradient at the vertex-only fit
/// `theta_ii = -Gamma_vv^+ K_v`.
pub fn lambda_start_unpenalized_vertices(stats: &Statistics) -> f64 {
    let basis = stats.basis();
    let (vd, ed) = (basis.vertex_dim(), basis.edge_dim());
    let grads: Vec<DVector<f64>> = stats
        .columns()
        .iter()
        .map(|s| {
            let gvv = s.gamma.view((0, 0), (vd, vd)).into_owned();
            let kv = s.kvec.rows(0, vd).into_owned();
            let theta_v = -gvv.pseudo_inverse(1e-12).unwrap_or_else(|_| DMatrix::zeros(vd, vd)) * kv;
            s.gamma.columns(0, vd) * theta_v + &s.kvec
        })
        .collect();
    max_edge_gradient(&grads, vd, ed)
}

fn max_edge_gradient(grads: &[DVector<f64>], vd: usize, ed: usize) -> f64 {
    let d = grads.len();
    let mut best = 0.0f64;
    let mut buf = vec![0.0; ed];
    for i in 0..d {
        for j in (i + 1)..d {
            let oi = column_block_offset(vd, ed, i, j);
            let oj = column_block_offset(vd, ed, j, i);
            for (u, slot) in buf.iter_mut().enumerate() {
                *slot = 0.5 * (grads[i][oi + u] + grads[j][oj + u]);
            }
            best = best.max(l2_norm(&buf));
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub enum GridPolicy {
    /// `count` points log-spaced from `lambda_start` down to `ratio_min * lambda_start`.
    LogSpaced { count: usize, ratio_min: f64 },
    /// Strictly descending positive values.
    Explicit(Vec<f64>),
}

impl Default for GridPolicy {
    fn default() -> Self {
        GridPolicy::LogSpaced { count: 30, ratio_min: 0.01 }
    }
}

impl GridPolicy {
    pub fn resolve(&self, lambda_start: f64) -> Result<Vec<f64>> {
        match self {
            GridPolicy::LogSpaced { count, ratio_min } => {
                if *count == 0 || !(*ratio_min > 0.0 && *ratio_min <= 1.0) {
                    return Err(QuasrError::InvalidArgument(format!(
                        "log grid needs count >= 1 and ratio in (0, 1], got {count}, {ratio_min}"
                    )));
                }
                if !(lambda_start > 0.0) {
                    return Err(QuasrError::InvalidArgument("lambda_start is zero; supply an explicit grid".into()));
                }
                if *count == 1 {
                    return Ok(vec![lambda_start]);
                }
                let step = ratio_min.ln() / (*count as f64 - 1.0);
                Ok((0..*count).map(|k| lambda_start * (step * k as f64).exp()).collect())
            }
            GridPolicy::Explicit(values) => {
                if values.is_empty() {
                    return Err(QuasrError::InvalidArgument("empty lambda grid".into()));
                }
                if values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                    return Err(QuasrError::InvalidArgument("lambdas must be positive and finite".into()));
                }
                if values.windows(2).any(|w| w[1] >= w[0]) {
                    return Err(QuasrError::InvalidArgument("lambdas must be strictly descending".into()));
                }
                Ok(values.clone())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Solver {
    /// Coordinate descent for the Gaussian basis, ADMM otherwise.
    Auto,
    Cd,
    Admm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathSpec {
    pub grid: GridPolicy,
    /// Ascending `(m1, m2)` levels for the Legendre basis; `None` fits the given basis only.
    pub truncations: Option<Vec<(usize, usize)>>,
    pub solver: Solver,
    pub rho: f64,
    /// Solver default when `None`.
    pub rel_tol: Option<f64>,
    pub max_iters: usize,
    pub warm_start: bool,
    /// Penalize vertex blocks as well as edge blocks (ADMM; CD calls them the diagonal).
    pub penalize_vertices: bool,
}

impl Default for PathSpec {
    fn default() -> Self {
        PathSpec {
            grid: GridPolicy::default(),
            truncations: None,
            solver: Solver::Auto,
            rho: 1.0,
            rel_tol: None,
            max_iters: 20_000,
            warm_start: true,
            penalize_vertices: true,
        }
    }
}

impl PathSpec {
    pub fn with_grid(grid: GridPolicy) -> Self {
        PathSpec { grid, ..PathSpec::default() }
    }
}

/// One fitted `(lambda, truncation)` cell.
#[derive(Debug, Clone)]
pub struct PathEntry {
    pub lambda: f64,
    pub basis: BasisSpec,
    pub theta: ParamBlocks,
    pub edge_count: usize,
    pub train_score: f64,
    pub holdout_score: f64,
    /// Held-out Gaussian negative log-likelihood (Gaussian basis only).
    pub holdout_nll: Option<f64>,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub converged: bool,
    /// Index of the entry whose solution seeded this fit.
    pub warm_from: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct PathResult {
    pub lambda_start: f64,
    pub entries: Vec<PathEntry>,
}

impl PathResult {
    pub fn total_iterations(&self) -> usize {
        self.entries.iter().map(|e| e.iterations).sum()
    }

    pub fn all_converged(&self) -> bool {
        self.entries.iter().all(|e| e.converged && e.error.is_none())
    }
}

enum Warm {
    Cd(DMatrix<f64>),
    Admm(AdmmState),
}

struct Level {
    basis: BasisSpec,
    train: Statistics,
    holdout: Statistics,
}

/// Fits every `(lambda, truncation)` cell: lambda descends within a level
/// with warm starts, levels ascend with zero-padded warm starts and enlarged
/// cached factors.
pub fn fit_path(data: &Dataset, basis: &BasisSpec, spec: &PathSpec, holdout: &Dataset) -> Result<PathResult> {
    if holdout.n() == 0 || data.n() == 0 {
        return Err(QuasrError::EmptyData);
    }
    if holdout.d() != data.d() {
        return Err(QuasrError::DimensionMismatch("holdout has a different dimension".into()));
    }
    let bases = match &spec.truncations {
        None => vec![*basis],
        Some(levels) => {
            if basis.kind != BasisKind::LegendrePairwise {
                return Err(QuasrError::InvalidArgument("truncation paths need the Legendre basis".into()));
            }
            if levels.is_empty() {
                return Err(QuasrError::InvalidArgument("empty truncation list".into()));
            }
            let bases: Vec<BasisSpec> =
                levels.iter().map(|&(a, b)| BasisSpec::legendre(a, b)).collect::<Result<_>>()?;
            for w in bases.windows(2) {
                w[0].embedding_into(&w[1])?;
                if w[0] == w[1] {
                    return Err(QuasrError::InvalidArgument("truncations must be strictly ascending".into()));
                }
            }
            bases
        }
    };
    let solver = match (spec.solver, basis.kind) {
        (Solver::Cd, BasisKind::LegendrePairwise) => {
            return Err(QuasrError::InvalidArgument("coordinate descent needs the Gaussian basis".into()))
        }
        (Solver::Auto, BasisKind::Gaussian) => Solver::Cd,
        (Solver::Auto, _) => Solver::Admm,
        (s, _) => s,
    };

    let levels: Vec<Level> = bases
        .iter()
        .map(|b| Ok(Level { basis: *b, train: Statistics::build(data, b)?, holdout: Statistics::build(holdout, b)? }))
        .collect::<Result<_>>()?;
    let start_of = |l: &Level| {
        if spec.penalize_vertices {
            lambda_start(&l.train)
        } else {
            lambda_start_unpenalized_vertices(&l.train)
        }
    };
    let start = levels.iter().map(start_of).fold(0.0, f64::max);
    let lambdas = spec.grid.resolve(start)?;

    let mut entries: Vec<PathEntry> = Vec::with_capacity(lambdas.len() * levels.len());
    let mut prev_states: Vec<Option<Warm>> = Vec::new();
    let mut prev_factors: Option<Vec<ColumnFactor>> = None;

    for (li, level) in levels.iter().enumerate() {
        let d = data.d();
        let problem = if solver == Solver::Admm {
            let cols = level.train.columns().into_owned();
            let built = match (&prev_factors, li) {
                (Some(old), li) if li > 0 => {
                    let old_basis = levels[li - 1].basis;
                    cols.iter()
                        .zip(old)
                        .map(|(s, f)| augment_to_layout(f, s, &old_basis.column_embedding(&level.basis, d, s.i)?))
                        .collect::<Result<Vec<_>>>()
                        .and_then(|fs| AdmmProblem::with_factors(cols.clone(), &level.basis, fs))
                }
                _ => AdmmProblem::new(cols, &level.basis, spec.rho),
            };
            match built {
                Ok(p) => Some(p),
                Err(e) => {
                    for &lambda in &lambdas {
                        entries.push(failed_entry(lambda, level.basis, d, &e));
                    }
                    prev_states.clear();
                    prev_factors = None;
                    continue;
                }
            }
        } else {
            None
        };
        if let Some(p) = &problem {
            prev_factors = Some(p.factors().to_vec());
        }

        let mut states: Vec<Option<Warm>> = Vec::with_capacity(lambdas.len());
        let mut last: Option<(Warm, usize)> = None;
        for (k, &lambda) in lambdas.iter().enumerate() {
            let (warm, warm_from) = if !spec.warm_start {
                (None, None)
            } else if let Some((w, idx)) = last.take() {
                (Some(w), Some(idx))
            } else if li > 0 {
                match prev_states.get(k).and_then(|s| s.as_ref()) {
                    Some(w) => {
                        (pad_warm(w, &levels[li - 1].basis, &level.basis).ok(), Some((li - 1) * lambdas.len() + k))
                    }
                    None => (None, None),
                }
            } else {
                (None, None)
            };
            let warm_from = if warm.is_some() { warm_from } else { None };

            let outcome = match (&problem, &level.train) {
                (Some(p), _) => {
                    let cfg = AdmmConfig {
                        lambda,
                        rho: spec.rho,
                        max_iters: spec.max_iters,
                        rel_tol: spec.rel_tol.unwrap_or(AdmmConfig::new(lambda).rel_tol),
                        penalize_vertices: spec.penalize_vertices,
                    };
                    let w = match &warm {
                        Some(Warm::Admm(s)) => Some(s),
                        _ => None,
                    };
                    p.fit(&cfg, w).map(|f| (f.result, Warm::Admm(f.state)))
                }
                (None, Statistics::Gaussian(g)) => {
                    let cfg = CdConfig {
                        lambda,
                        max_sweeps: spec.max_iters,
                        rel_tol: spec.rel_tol.unwrap_or(CdConfig::new(lambda).rel_tol),
                        penalize_diagonal: spec.penalize_vertices,
                        ..CdConfig::new(lambda)
                    };
                    let init = match &warm {
                        Some(Warm::Cd(m)) => Some(m),
                        _ => None,
                    };
                    cd_fit(g, &cfg, init).and_then(|f| {
                        let omega = f.theta.to_precision()?;
                        Ok((f, Warm::Cd(omega)))
                    })
                }
                (None, Statistics::Columns { .. }) => unreachable!("coordinate descent is Gaussian only"),
            };

            let index = entries.len();
            match outcome {
                Ok((fit, next)) => {
                    entries.push(scored_entry(fit, level, warm_from)?);
                    if spec.warm_start {
                        states.push(Some(clone_warm(&next)));
                        last = Some((next, index));
                    } else {
                        states.push(None);
                    }
                }
                Err(e) => {
                    entries.push(PathEntry { warm_from, ..failed_entry(lambda, level.basis, d, &e) });
                    states.push(None);
                }
            }
        }
        prev_states = states;
    }
    Ok(PathResult { lambda_start: start, entries })
}

fn clone_warm(w: &Warm) -> Warm {
    match w {
        Warm::Cd(m) => Warm::Cd(m.clone()),
        Warm::Admm(s) => Warm::Admm(s.clone()),
    }
}

fn pad_warm(w: &Warm, old: &BasisSpec, new: &BasisSpec) -> Result<Warm> {
    match w {
        Warm::Cd(m) => Ok(Warm::Cd(m.clone())),
        Warm::Admm(s) => s.zero_padded(old, new).map(Warm::Admm),
    }
}

fn scored_entry(fit: FitResult, level: &Level, warm_from: Option<usize>) -> Result<PathEntry> {
    let train_score = level.train.hyvarinen_score(&fit.theta)?;
    let holdout_score = level.holdout.hyvarinen_score(&fit.theta)?;
    let holdout_nll = match &level.holdout {
        Statistics::Gaussian(h) => Some(gaussian_nll(&fit.theta.to_precision()?, &h.sigma_hat)),
        Statistics::Columns { .. } => None,
    };
    Ok(PathEntry {
        lambda: fit.lambda,
        basis: level.basis,
        edge_count: fit.edges().edge_count(),
        theta: fit.theta,
        train_score,
        holdout_score,
        holdout_nll,
        iterations: fit.iterations,
        kkt_residual: fit.kkt_residual,
        converged: fit.converged,
        warm_from,
        error: None,
    })
}

fn failed_entry(lambda: f64, basis: BasisSpec, d: usize, err: &QuasrError) -> PathEntry {
    PathEntry {
        lambda,
        basis,
        theta: ParamBlocks::for_basis(d, &basis),
        edge_count: 0,
        train_score: f64::NAN,
        holdout_score: f64::NAN,
        holdout_nll: None,
        iterations: 0,
        kkt_residual: f64::NAN,
        converged: false,
        warm_from: None,
        error: Some(err.to_string()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    HyvarinenHoldout,
    GaussianNllHoldout,
}

/// Index of the entry minimizing `criterion`; ties go to the larger lambda,
/// then to the earlier entry. Failed entries and non-finite values are skipped.
pub fn select_index(path: &PathResult, criterion: Criterion) -> Result<usize> {
    if path.entries.is_empty() {
        return Err(QuasrError::InvalidArgument("empty path".into()));
    }
    if criterion == Criterion::GaussianNllHoldout && path.entries.iter().any(|e| e.basis.kind != BasisKind::Gaussian) {
        return Err(QuasrError::CriterionUnavailable("held-out likelihood needs the Gaussian basis".into()));
    }
    let value = |e: &PathEntry| match criterion {
        Criterion::HyvarinenHoldout => e.holdout_score,
        Criterion::GaussianNllHoldout => e.holdout_nll.unwrap_or(f64::NAN),
    };
    let mut best: Option<(usize, f64)> = None;
    for (k, e) in path.entries.iter().enumerate() {
        let v = value(e);
        if e.error.is_some() || !v.is_finite() {
            continue;
        }
        best = match best {
            None => Some((k, v)),
            Some((b, bv)) => {
                let better = v < bv || (v == bv && e.lambda > path.entries[b].lambda);
                Some(if better { (k, v) } else { (b, bv) })
            }
        };
    }
    best.map(|(k, _)| k).ok_or_else(|| QuasrError::CriterionUnavailable("no entry has a finite criterion value".into()))
}

pub fn select_model(path: &PathResult, criterion: Criterion) -> Result<&PathEntry> {
    select_index(path, criterion).map(|k| &path.entries[k])
}
