//! Consensus ADMM for regularized score matching with any pairwise basis.
//!
//! Each column keeps its own copy `theta_{.,i}`; edge blocks appear in two
//! columns and are tied to a shared consensus block `z_ij`. One iteration:
//!
//! 1. `theta_i = (Gamma_i + rho I)^{-1} (-K_i - y_i + rho z_i)` per column,
//! 2. `z_ij = S((theta_ij + theta_ji + (y_ij + y_ji) / rho) / 2, lambda / rho)`
//!    per edge, `z_ii = S(theta_ii + y_ii / rho, lambda / rho)` per vertex,
//! 3. `y += rho (theta - z)`.
//!
//! The solve operator `(Gamma_i + rho I)^{-1}` does not depend on `lambda`,
//! so it is factored once and reused along a path.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};
use rayon::prelude::*;

use crate::model::{column_block_offset, l2_norm, BasisSpec, FitResult, GroupKey, ParamBlocks};
use crate::stats::ColumnStats;
use crate::{QuasrError, Result};

/// `(1 - lam / ||x||)_+ x`; returns an exact zero vector when `||x|| <= lam`.
pub fn group_shrink(x: &[f64], lam: f64) -> Vec<f64> {
    let norm = l2_norm(x);
    if norm <= lam || norm == 0.0 {
        return vec![0.0; x.len()];
    }
    let scale = 1.0 - lam / norm;
    x.iter().map(|v| scale * v).collect()
}

#[derive(Debug, Clone, Copy)]
pub struct AdmmConfig {
    pub lambda: f64,
    pub rho: f64,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub penalize_vertices: bool,
}

impl AdmmConfig {
    pub fn new(lambda: f64) -> Self {
        AdmmConfig { lambda, rho: 1.0, max_iters: 20_000, rel_tol: 1e-4, penalize_vertices: true }
    }

    fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) {
            return Err(QuasrError::InvalidArgument(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.rho > 0.0) {
            return Err(QuasrError::InvalidArgument("rho must be positive".into()));
        }
        if !(self.rel_tol > 0.0) {
            return Err(QuasrError::InvalidArgument("rel_tol must be positive".into()));
        }
        Ok(())
    }
}

/// Cached solve operator for `Gamma_i + rho I`.
#[derive(Debug, Clone)]
pub struct ColumnFactor {
    pub i: usize,
    rho: f64,
    inverse: DMatrix<f64>,
    eigen: Option<(DMatrix<f64>, DVector<f64>)>,
}

impl ColumnFactor {
    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn dim(&self) -> usize {
        self.inverse.nrows()
    }

    /// Dense `(Gamma_i + rho I)^{-1}`.
    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    /// Eigenvectors and eigenvalues of `Gamma_i` when the operator came from a
    /// spectral factorization (absent after augmentation).
    pub fn spectrum(&self) -> Option<(&DMatrix<f64>, &DVector<f64>)> {
        self.eigen.as_ref().map(|(q, l)| (q, l))
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.inverse * v
    }
}

fn check_finite(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(QuasrError::Factorization(format!("{what} has non-finite entries")))
    }
}

/// Factors `Gamma_i + rho I` as `Q diag(1 / (Lambda + rho)) Q'`.
///
/// With a data matrix `M` (rows `a_i(x_r)'`, so `Gamma_i = M'M / n`) and
/// `n < p`, the spectrum comes from the thin SVD of `M` instead; directions in
/// the null space of `M` get `1 / rho`.
pub fn build_column_factor(stats: &ColumnStats, rho: f64, data_matrix: Option<&DMatrix<f64>>) -> Result<ColumnFactor> {
    if !(rho > 0.0) {
        return Err(QuasrError::InvalidArgument("rho must be positive".into()));
    }
    let p = stats.dim();
    check_finite(&stats.gamma, "Gamma")?;
    match data_matrix {
        Some(m) if m.nrows() < p => {
            if m.ncols() != p {
                return Err(QuasrError::DimensionMismatch(format!(
                    "data matrix has {} columns, statistics {}",
                    m.ncols(),
                    p
                )));
            }
            check_finite(m, "data matrix")?;
            let n = m.nrows() as f64;
            let svd = SVD::new(m.clone(), false, true);
            let v_t = svd.v_t.ok_or_else(|| QuasrError::Factorization("SVD did not return singular vectors".into()))?;
            let q = v_t.transpose();
            let lam = svd.singular_values.map(|s| s * s / n);
            let scaled = DMatrix::from_fn(p, q.ncols(), |r, c| q[(r, c)] * (1.0 / (lam[c] + rho) - 1.0 / rho));
            let mut inverse = &scaled * &v_t;
            for k in 0..p {
                inverse[(k, k)] += 1.0 / rho;
            }
            Ok(ColumnFactor { i: stats.i, rho, inverse, eigen: Some((q, lam)) })
        }
        _ => {
            let eig = SymmetricEigen::new(stats.gamma.clone());
            let lam = eig.eigenvalues.map(|l| l.max(0.0));
            let q = eig.eigenvectors;
            let scaled = DMatrix::from_fn(p, p, |r, c| q[(r, c)] / (lam[c] + rho));
            let inverse = &scaled * q.transpose();
            check_finite(&inverse, "cached inverse")?;
            Ok(ColumnFactor { i: stats.i, rho, inverse, eigen: Some((q, lam)) })
        }
    }
}

/// Solve operator for `[[Gamma, b], [b', c]] + rho I` from the cached
/// `(Gamma + rho I)^{-1}`; only the Schur complement
/// `c + rho I - b' (Gamma + rho I)^{-1} b` is inverted. Old coordinates come
/// first, new ones last.
pub fn augment_factor(old: &ColumnFactor, b: &DMatrix<f64>, c: &DMatrix<f64>, rho: f64) -> Result<ColumnFactor> {
    if (rho - old.rho).abs() > 0.0 {
        return Err(QuasrError::InvalidArgument(format!("rho {rho} differs from the cached {}", old.rho)));
    }
    let p = old.dim();
    let q = c.nrows();
    if b.shape() != (p, q) || c.ncols() != q {
        return Err(QuasrError::DimensionMismatch(format!(
            "augmentation blocks b {:?}, c {:?} for cached dimension {p}",
            b.shape(),
            c.shape()
        )));
    }
    let a_inv = &old.inverse;
    let a_inv_b = a_inv * b;
    let mut schur = c - b.tr_mul(&a_inv_b);
    for k in 0..q {
        schur[(k, k)] += rho;
    }
    crate::stats::symmetrize(&mut schur);
    let schur_inv = nalgebra::Cholesky::new(schur)
        .ok_or_else(|| QuasrError::Factorization("Schur complement is not positive definite".into()))?
        .inverse();
    let off = -(&a_inv_b * &schur_inv);
    let top = a_inv - &off * a_inv_b.transpose();
    let mut inverse = DMatrix::zeros(p + q, p + q);
    inverse.view_mut((0, 0), (p, p)).copy_from(&top);
    inverse.view_mut((0, p), (p, q)).copy_from(&off);
    inverse.view_mut((p, 0), (q, p)).copy_from(&off.transpose());
    inverse.view_mut((p, p), (q, q)).copy_from(&schur_inv);
    check_finite(&inverse, "augmented inverse")?;
    Ok(ColumnFactor { i: old.i, rho, inverse, eigen: None })
}

/// Enlarges a cached factor to the statistics of a bigger truncation.
///
/// `old_positions[k]` is where old column entry `k` sits in the new column
/// (see [`BasisSpec::column_embedding`]).
pub fn augment_to_layout(old: &ColumnFactor, new_stats: &ColumnStats, old_positions: &[usize]) -> Result<ColumnFactor> {
    let p_new = new_stats.dim();
    if old_positions.len() != old.dim() {
        return Err(QuasrError::DimensionMismatch("embedding does not match the cached factor".into()));
    }
    let mut is_old = vec![false; p_new];
    for &k in old_positions {
        is_old[k] = true;
    }
    let added: Vec<usize> = (0..p_new).filter(|&k| !is_old[k]).collect();
    let g = &new_stats.gamma;
    let b = DMatrix::from_fn(old_positions.len(), added.len(), |r, c| g[(old_positions[r], added[c])]);
    let c = DMatrix::from_fn(added.len(), added.len(), |r, c| g[(added[r], added[c])]);
    let stacked = augment_factor(old, &b, &c, old.rho)?;
    let order: Vec<usize> = old_positions.iter().chain(&added).copied().collect();
    let mut inverse = DMatrix::zeros(p_new, p_new);
    for (a, &ra) in order.iter().enumerate() {
        for (bi, &rb) in order.iter().enumerate() {
            inverse[(ra, rb)] = stacked.inverse[(a, bi)];
        }
    }
    Ok(ColumnFactor { i: new_stats.i, rho: old.rho, inverse, eigen: None })
}

/// Full ADMM iterate: column copies, consensus blocks and scaled duals
/// (`y_cols[i]` holds `y_ij` for every block of column `i`).
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub theta_cols: Vec<DVector<f64>>,
    pub z: ParamBlocks,
    pub y_cols: Vec<DVector<f64>>,
}

impl AdmmState {
    pub fn zeros(d: usize, basis: &BasisSpec) -> Self {
        let p = basis.column_dim(d);
        AdmmState {
            theta_cols: vec![DVector::zeros(p); d],
            z: ParamBlocks::for_basis(d, basis),
            y_cols: vec![DVector::zeros(p); d],
        }
    }

    /// Re-lays the state inside a larger truncation with zeros in the added entries.
    pub fn zero_padded(&self, old: &BasisSpec, new: &BasisSpec) -> Result<AdmmState> {
        let d = self.z.d();
        let emb = old.embedding_into(new)?;
        let p = new.column_dim(d);
        let pad = |cols: &[DVector<f64>]| -> Result<Vec<DVector<f64>>> {
            cols.iter()
                .enumerate()
                .map(|(i, v)| {
                    let pos = old.column_embedding(new, d, i)?;
                    let mut out = DVector::zeros(p);
                    for (k, &x) in v.iter().enumerate() {
                        out[pos[k]] = x;
                    }
                    Ok(out)
                })
                .collect()
        };
        Ok(AdmmState {
            theta_cols: pad(&self.theta_cols)?,
            z: self.z.zero_padded(&emb, new.vertex_dim(), new.edge_dim()),
            y_cols: pad(&self.y_cols)?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct AdmmFit {
    pub result: FitResult,
    pub state: AdmmState,
    /// Largest `|theta_copy - z|` at exit.
    pub consensus_gap: f64,
}

/// Statistics plus cached column factors for one `(basis, rho)`.
#[derive(Debug, Clone)]
pub struct AdmmProblem {
    stats: Vec<ColumnStats>,
    factors: Vec<ColumnFactor>,
    basis: BasisSpec,
}

impl AdmmProblem {
    pub fn new(stats: Vec<ColumnStats>, basis: &BasisSpec, rho: f64) -> Result<Self> {
        check_layout(&stats, basis)?;
        let factors = stats.par_iter().map(|s| build_column_factor(s, rho, None)).collect::<Result<Vec<_>>>()?;
        Ok(AdmmProblem { stats, factors, basis: *basis })
    }

    pub fn with_factors(stats: Vec<ColumnStats>, basis: &BasisSpec, factors: Vec<ColumnFactor>) -> Result<Self> {
        check_layout(&stats, basis)?;
        if factors.len() != stats.len() || factors.iter().zip(&stats).any(|(f, s)| f.dim() != s.dim()) {
            return Err(QuasrError::DimensionMismatch("factors do not match statistics".into()));
        }
        if factors.windows(2).any(|w| w[0].rho != w[1].rho) {
            return Err(QuasrError::InvalidArgument("factors built with different rho".into()));
        }
        Ok(AdmmProblem { stats, factors, basis: *basis })
    }

    pub fn stats(&self) -> &[ColumnStats] {
        &self.stats
    }

    pub fn factors(&self) -> &[ColumnFactor] {
        &self.factors
    }

    pub fn basis(&self) -> &BasisSpec {
        &self.basis
    }

    pub fn rho(&self) -> f64 {
        self.factors.first().map_or(1.0, |f| f.rho)
    }

    pub fn d(&self) -> usize {
        self.stats.len()
    }

    pub fn fit(&self, cfg: &AdmmConfig, warm: Option<&AdmmState>) -> Result<AdmmFit> {
        cfg.validate()?;
        if (cfg.rho - self.rho()).abs() > 0.0 {
            return Err(QuasrError::InvalidArgument(format!(
                "config rho {} differs from the factored rho {}",
                cfg.rho,
                self.rho()
            )));
        }
        let d = self.d();
        let (vd, ed) = (self.basis.vertex_dim(), self.basis.edge_dim());
        let p = self.basis.column_dim(d);
        let rho = cfg.rho;

        let (mut theta, mut z, mut y) = match warm {
            Some(w) => {
                let ok = w.theta_cols.len() == d
                    && w.y_cols.len() == d
                    && w.theta_cols.iter().chain(&w.y_cols).all(|v| v.len() == p)
                    && w.z.d() == d
                    && w.z.vertex_dim() == vd
                    && w.z.edge_dim() == ed;
                if !ok {
                    return Err(QuasrError::DimensionMismatch("warm state does not match the problem".into()));
                }
                let z: Vec<DVector<f64>> = (0..d).map(|i| w.z.column_vector(i)).collect();
                (w.theta_cols.clone(), z, w.y_cols.clone())
            }
            None => (vec![DVector::zeros(p); d], vec![DVector::zeros(p); d], vec![DVector::zeros(p); d]),
        };

        // zero is certified optimal; (0, 0, -K) is the matching fixed point
        let zero = ParamBlocks::for_basis(d, &self.basis);
        if general_kkt_residual_with(&zero, &self.stats, cfg.lambda, cfg.penalize_vertices)? == 0.0 {
            return Ok(AdmmFit {
                result: FitResult {
                    lambda: cfg.lambda,
                    theta: zero.clone(),
                    iterations: 0,
                    kkt_residual: 0.0,
                    converged: true,
                    last_change: 0.0,
                    objective_trace: Vec::new(),
                },
                state: AdmmState {
                    theta_cols: vec![DVector::zeros(p); d],
                    z: zero,
                    y_cols: self.stats.iter().map(|s| -&s.kvec).collect(),
                },
                consensus_gap: 0.0,
            });
        }

        let vertex_lam = if cfg.penalize_vertices { cfg.lambda / rho } else { 0.0 };
        let edge_lam = cfg.lambda / rho;
        let mut iterations = 0;
        let mut converged = false;
        let mut last_change = f64::INFINITY;
        let mut gap = f64::INFINITY;
        let mut buf = vec![0.0; vd.max(ed)];

        while iterations < cfg.max_iters {
            iterations += 1;
            // (a) column solves
            let new_theta: Vec<DVector<f64>> = (0..d)
                .into_par_iter()
                .map(|i| {
                    let rhs = -&self.stats[i].kvec - &y[i] + &z[i] * rho;
                    self.factors[i].apply(&rhs)
                })
                .collect();
            let mut num = 0.0;
            let mut den = 0.0;
            for (new, old) in new_theta.iter().zip(&theta) {
                num += (new - old).lp_norm(1);
                den += new.lp_norm(1);
            }
            theta = new_theta;

            // (b) consensus
            let mut z_move = 0.0f64;
            for i in 0..d {
                let v = &mut buf[..vd];
                for (k, slot) in v.iter_mut().enumerate() {
                    *slot = theta[i][k] + y[i][k] / rho;
                }
                let shrunk = group_shrink(v, vertex_lam);
                for (k, s) in shrunk.into_iter().enumerate() {
                    z_move = z_move.max((z[i][k] - s).abs());
                    z[i][k] = s;
                }
                for j in (i + 1)..d {
                    let oi = column_block_offset(vd, ed, i, j);
                    let oj = column_block_offset(vd, ed, j, i);
                    let v = &mut buf[..ed];
                    for (u, slot) in v.iter_mut().enumerate() {
                        *slot = 0.5 * (theta[i][oi + u] + theta[j][oj + u] + (y[i][oi + u] + y[j][oj + u]) / rho);
                    }
                    let shrunk = group_shrink(v, edge_lam);
                    for (u, s) in shrunk.into_iter().enumerate() {
                        z_move = z_move.max((z[i][oi + u] - s).abs());
                        z[i][oi + u] = s;
                        z[j][oj + u] = s;
                    }
                }
            }

            // (c) duals
            gap = 0.0;
            let mut z_scale = 0.0f64;
            for i in 0..d {
                let r = &theta[i] - &z[i];
                gap = gap.max(r.amax());
                z_scale = z_scale.max(z[i].amax());
                y[i] += r * rho;
            }

            let scale = den.max(1.0);
            last_change = num / scale;
            let tol_abs = cfg.rel_tol * (1.0 + z_scale);
            if last_change < cfg.rel_tol && gap <= tol_abs && z_move <= tol_abs {
                converged = true;
                break;
            }
        }

        let mut z_blocks = ParamBlocks::for_basis(d, &self.basis);
        for (i, zi) in z.iter().enumerate() {
            z_blocks.set_block(GroupKey::Vertex(i), zi.rows(0, vd).iter().copied().collect())?;
            for j in (i + 1)..d {
                let oi = column_block_offset(vd, ed, i, j);
                let block: Vec<f64> = zi.rows(oi, ed).iter().copied().collect();
                if block.iter().any(|&x| x != 0.0) {
                    z_blocks.set_block(GroupKey::edge(i, j), block)?;
                }
            }
        }
        let kkt = general_kkt_residual_with(&z_blocks, &self.stats, cfg.lambda, cfg.penalize_vertices)?;
        Ok(AdmmFit {
            result: FitResult {
                lambda: cfg.lambda,
                theta: z_blocks.clone(),
                iterations,
                kkt_residual: kkt,
                converged,
                last_change,
                objective_trace: Vec::new(),
            },
            state: AdmmState { theta_cols: theta, z: z_blocks, y_cols: y },
            consensus_gap: gap,
        })
    }
}

fn check_layout(stats: &[ColumnStats], basis: &BasisSpec) -> Result<()> {
    let d = stats.len();
    let p = basis.column_dim(d);
    for (k, s) in stats.iter().enumerate() {
        if s.i != k {
            return Err(QuasrError::DimensionMismatch(format!("statistics for column {} at position {k}", s.i)));
        }
        if s.dim() != p || s.gamma.shape() != (p, p) {
            return Err(QuasrError::DimensionMismatch(format!(
                "column {k} statistics have dimension {}, basis expects {p}",
                s.dim()
            )));
        }
    }
    Ok(())
}

/// Builds the factors and runs one fit; see [`AdmmProblem`] to reuse factors.
pub fn admm_fit(
    stats: &[ColumnStats],
    basis: &BasisSpec,
    cfg: &AdmmConfig,
    warm: Option<&AdmmState>,
) -> Result<AdmmFit> {
    AdmmProblem::new(stats.to_vec(), basis, cfg.rho)?.fit(cfg, warm)
}

/// Largest violation of the optimality conditions `Gamma theta + K + lambda Z = 0`.
///
/// Edge gradients are averaged over the two column copies (the penalty counts
/// each edge once per orientation). Zero groups contribute
/// `(||g|| - lambda)_+`, nonzero groups `||g + lambda theta_g / ||theta_g|| ||`.
pub fn general_kkt_residual(theta: &ParamBlocks, stats: &[ColumnStats], lambda: f64) -> Result<f64> {
    general_kkt_residual_with(theta, stats, lambda, true)
}

pub fn general_kkt_residual_with(
    theta: &ParamBlocks,
    stats: &[ColumnStats],
    lambda: f64,
    penalize_vertices: bool,
) -> Result<f64> {
    let d = theta.d();
    if stats.len() != d {
        return Err(QuasrError::DimensionMismatch(format!("{} columns of statistics for d={d}", stats.len())));
    }
    let (vd, ed) = (theta.vertex_dim(), theta.edge_dim());
    let grads: Vec<DVector<f64>> = stats
        .iter()
        .map(|s| {
            let v = theta.column_vector(s.i);
            if v.len() != s.dim() {
                return Err(QuasrError::DimensionMismatch(format!("column {} length mismatch", s.i)));
            }
            Ok(&s.gamma * v + &s.kvec)
        })
        .collect::<Result<_>>()?;

    let violation = |g: &[f64], block: &[f64], lam: f64| -> f64 {
        let norm = l2_norm(block);
        if norm == 0.0 {
            (l2_norm(g) - lam).max(0.0)
        } else {
            g.iter().zip(block).map(|(gk, bk)| (gk + lam * bk / norm).powi(2)).sum::<f64>().sqrt()
        }
    };

    let mut worst = 0.0f64;
    for i in 0..d {
        let g: Vec<f64> = grads[i].rows(0, vd).iter().copied().collect();
        let lam = if penalize_vertices { lambda } else { 0.0 };
        worst = worst.max(violation(&g, &theta.block_values(GroupKey::Vertex(i)), lam));
        for j in (i + 1)..d {
            let oi = column_block_offset(vd, ed, i, j);
            let oj = column_block_offset(vd, ed, j, i);
            let g: Vec<f64> = (0..ed).map(|u| 0.5 * (grads[i][oi + u] + grads[j][oj + u])).collect();
            worst = worst.max(violation(&g, &theta.block_values(GroupKey::edge(i, j)), lambda));
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_stats(i: usize, p: usize) -> ColumnStats {
        ColumnStats { i, gamma: DMatrix::identity(p, p), kvec: DVector::from_element(p, -1.0), n: 1 }
    }

    #[test]
    fn group_shrink_examples() {
        assert_eq!(group_shrink(&[3.0, 4.0], 5.0), vec![0.0, 0.0]);
        assert_eq!(group_shrink(&[3.0, 4.0], 2.5), vec![1.5, 2.0]);
        assert_eq!(group_shrink(&[3.0, -4.0], 0.0), vec![3.0, -4.0]);
        assert_eq!(group_shrink(&[0.0, 0.0], 0.0), vec![0.0, 0.0]);
    }

    #[test]
    fn factor_examples() {
        let f = build_column_factor(&identity_stats(0, 3), 1.0, None).unwrap();
        let v = DVector::from_vec(vec![2.0, -4.0, 1.0]);
        assert!((f.apply(&v) - &v / 2.0).amax() < 1e-15);

        let s = ColumnStats {
            i: 0,
            gamma: DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0])),
            kvec: DVector::zeros(2),
            n: 1,
        };
        let f = build_column_factor(&s, 1.0, None).unwrap();
        let out = f.apply(&DVector::from_vec(vec![4.0, 4.0]));
        assert!((out - DVector::from_vec(vec![1.0, 2.0])).amax() < 1e-14);
        assert!(build_column_factor(&s, 0.0, None).is_err());
    }

    #[test]
    fn svd_path_matches_eigen_path_when_rank_deficient() {
        let m = DMatrix::from_row_slice(2, 4, &[1.0, 0.5, -0.2, 0.3, 0.1, -0.7, 0.4, 1.1]);
        let gamma = m.tr_mul(&m) / 2.0;
        let s = ColumnStats { i: 0, gamma: gamma.clone(), kvec: DVector::zeros(4), n: 2 };
        let via_svd = build_column_factor(&s, 0.7, Some(&m)).unwrap();
        let via_eig = build_column_factor(&s, 0.7, None).unwrap();
        assert!((via_svd.inverse() - via_eig.inverse()).amax() < 1e-12);
        let mut a = gamma;
        for k in 0..4 {
            a[(k, k)] += 0.7;
        }
        assert!((&a * via_svd.inverse() - DMatrix::identity(4, 4)).amax() < 1e-8);
    }

    #[test]
    fn first_theta_step() {
        // Gamma = I, K = -1, y = z = 0, rho = 1 -> theta = 0.5
        let stats: Vec<ColumnStats> = (0..2).map(|i| identity_stats(i, 2)).collect();
        let basis = BasisSpec::gaussian();
        let cfg = AdmmConfig { max_iters: 1, ..AdmmConfig::new(0.0) };
        let fit = admm_fit(&stats, &basis, &cfg, None).unwrap();
        for col in &fit.state.theta_cols {
            assert!((col - DVector::from_element(2, 0.5)).amax() < 1e-15);
        }
    }

    #[test]
    fn augmentation_with_decoupled_blocks() {
        let s = ColumnStats {
            i: 0,
            gamma: DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]),
            kvec: DVector::zeros(2),
            n: 1,
        };
        let old = build_column_factor(&s, 1.0, None).unwrap();
        let c = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 0.5]));
        let aug = augment_factor(&old, &DMatrix::zeros(2, 2), &c, 1.0).unwrap();
        let inv = aug.inverse();
        assert!((inv.view((0, 0), (2, 2)) - old.inverse()).amax() < 1e-15);
        assert!((inv[(2, 2)] - 0.25).abs() < 1e-15);
        assert!((inv[(3, 3)] - 1.0 / 1.5).abs() < 1e-15);
        assert_eq!(inv.view((0, 2), (2, 2)).amax(), 0.0);
        assert!(augment_factor(&old, &DMatrix::zeros(2, 2), &c, 2.0).is_err());
        assert!(augment_factor(&old, &DMatrix::zeros(3, 2), &c, 1.0).is_err());
    }

    #[test]
    fn kkt_residual_at_zero() {
        let stats: Vec<ColumnStats> = (0..2).map(|i| identity_stats(i, 2)).collect();
        let theta = ParamBlocks::zeros(2, 1, 1);
        assert_eq!(general_kkt_residual(&theta, &stats, 1.0).unwrap(), 0.0);
        assert!((general_kkt_residual(&theta, &stats, 0.5).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rejects_mismatched_warm_state() {
        let stats: Vec<ColumnStats> = (0..2).map(|i| identity_stats(i, 2)).collect();
        let warm = AdmmState::zeros(3, &BasisSpec::gaussian());
        let err = admm_fit(&stats, &BasisSpec::gaussian(), &AdmmConfig::new(0.1), Some(&warm)).unwrap_err();
        assert!(matches!(err, QuasrError::DimensionMismatch(_)));
    }
}
