//! Score-matching statistics.
//!
//! For a pairwise exponential family the empirical Hyvärinen score splits
//! into one quadratic form per column,
//! `h(theta) = sum_i 1/2 theta_i' Gamma_i theta_i + K_i' theta_i`, with
//! `Gamma_i` the average of `a_i(x) a_i(x)'` over the samples. On the unit
//! cube the weight `w = x_i (1 - x_i)` enters as
//! `a_i = w d phi_i / d x_i` and `K_i = -2 (2 x_i - 1) w d phi_i / d x_i + w^2 d^2 phi_i / d x_i^2`.

use std::borrow::Cow;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::legendre::{eval_legendre, LegendreEval};
use crate::model::{column_block_offset, BasisKind, BasisSpec, Dataset, ParamBlocks, Support};
use crate::{QuasrError, Result};

/// Sample second-moment matrix `(1/n) sum_r x_r x_r'` for the Gaussian family.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    pub sigma_hat: DMatrix<f64>,
    pub n: usize,
}

/// `Gamma_i` and `K_{.,i}` for one column.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnStats {
    pub i: usize,
    pub gamma: DMatrix<f64>,
    pub kvec: DVector<f64>,
    pub n: usize,
}

impl ColumnStats {
    pub fn dim(&self) -> usize {
        self.kvec.len()
    }

    /// `1/2 v' Gamma v + K' v`.
    pub fn quadratic(&self, v: &DVector<f64>) -> f64 {
        0.5 * v.dot(&(&self.gamma * v)) + self.kvec.dot(v)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct StatsOptions {
    /// Refuse columns longer than this (dense `Gamma_i` is `p^2` floats).
    pub max_column_dim: usize,
}

impl Default for StatsOptions {
    fn default() -> Self {
        StatsOptions { max_column_dim: 20_000 }
    }
}

pub fn gaussian_stats(data: &Dataset) -> Result<GaussianStats> {
    if data.support() != Support::RealLine {
        return Err(QuasrError::Support("Gaussian statistics need real-line data".into()));
    }
    if data.n() == 0 {
        return Err(QuasrError::EmptyData);
    }
    let x = data.values();
    let mut sigma_hat = x.tr_mul(x) / data.n() as f64;
    symmetrize(&mut sigma_hat);
    Ok(GaussianStats { sigma_hat, n: data.n() })
}

impl GaussianStats {
    pub fn d(&self) -> usize {
        self.sigma_hat.nrows()
    }

    /// Same statistics in the per-column layout: `Gamma_i` is `Sigma_hat`
    /// permuted to `(i, then j != i ascending)` and `K_{.,i} = (-1, 0, ..., 0)`.
    pub fn column_stats(&self) -> Vec<ColumnStats> {
        let d = self.d();
        (0..d)
            .map(|i| {
                let order: Vec<usize> = std::iter::once(i).chain((0..d).filter(|&j| j != i)).collect();
                let gamma = DMatrix::from_fn(d, d, |r, c| self.sigma_hat[(order[r], order[c])]);
                let mut kvec = DVector::zeros(d);
                kvec[0] = -1.0;
                ColumnStats { i, gamma, kvec, n: self.n }
            })
            .collect()
    }

    /// `trace(1/2 Omega Sigma_hat Omega - Omega)`.
    pub fn score(&self, omega: &DMatrix<f64>) -> Result<f64> {
        if omega.shape() != self.sigma_hat.shape() {
            return Err(QuasrError::DimensionMismatch(format!(
                "precision {:?} vs statistics {:?}",
                omega.shape(),
                self.sigma_hat.shape()
            )));
        }
        let os = omega * &self.sigma_hat;
        Ok(0.5 * os.component_mul(&omega.transpose()).sum() - omega.trace())
    }
}

/// Fills `a_i(x)` and `K_{.,i}(x)` for one sample in column layout.
///
/// `evals[j]` must hold the Legendre evaluation of coordinate `j` up to
/// `max(m1, m2)` when the basis is Legendre; it is ignored for Gaussian.
fn fill_column_features(
    basis: &BasisSpec,
    row: &[f64],
    evals: &[LegendreEval],
    i: usize,
    a: &mut [f64],
    k: &mut [f64],
) {
    let d = row.len();
    let (vd, ed) = (basis.vertex_dim(), basis.edge_dim());
    match basis.kind {
        BasisKind::Gaussian => {
            // phi_ii = -x_i^2 / 2, phi_ij = -x_i x_j
            for j in 0..d {
                a[column_block_offset(vd, ed, i, j)] = -row[j];
                k[column_block_offset(vd, ed, i, j)] = 0.0;
            }
            k[0] = -1.0;
        }
        BasisKind::LegendrePairwise => {
            let xi = row[i];
            let w = xi * (1.0 - xi);
            let drift = -2.0 * (2.0 * xi - 1.0) * w;
            let w2 = w * w;
            let ei = &evals[i];
            for deg in 1..=basis.m1 {
                a[deg - 1] = w * ei.d1[deg];
                k[deg - 1] = drift * ei.d1[deg] + w2 * ei.d2[deg];
            }
            let m2 = basis.m2;
            for j in (0..d).filter(|&j| j != i) {
                let ej = &evals[j];
                let off = column_block_offset(vd, ed, i, j);
                for kk in 1..=m2 {
                    for ll in 1..=m2 {
                        let u = (kk - 1) * m2 + (ll - 1);
                        // block (lo, hi) holds phi_kk(x_lo) phi_ll(x_hi)
                        let (d1, d2) = if i < j {
                            (ei.d1[kk] * ej.values[ll], ei.d2[kk] * ej.values[ll])
                        } else {
                            (ej.values[kk] * ei.d1[ll], ej.values[kk] * ei.d2[ll])
                        };
                        a[off + u] = w * d1;
                        k[off + u] = drift * d1 + w2 * d2;
                    }
                }
            }
        }
    }
}

fn check_basis_support(data: &Dataset, basis: &BasisSpec) -> Result<()> {
    if data.support() != basis.support() {
        return Err(QuasrError::Support(format!(
            "{:?} basis needs {:?} data, got {:?}",
            basis.kind,
            basis.support(),
            data.support()
        )));
    }
    Ok(())
}

fn row_evals(basis: &BasisSpec, row: &[f64]) -> Result<Vec<LegendreEval>> {
    match basis.kind {
        BasisKind::Gaussian => Ok(Vec::new()),
        BasisKind::LegendrePairwise => {
            let k_max = basis.m1.max(basis.m2);
            row.iter().map(|&x| eval_legendre(x, k_max)).collect()
        }
    }
}

/// Running sums of `a a'` and `K` for one column.
///
/// Accumulators over disjoint sample shards combine with [`ColumnAccumulator::merge`].
#[derive(Debug, Clone)]
pub struct ColumnAccumulator {
    i: usize,
    gamma_sum: DMatrix<f64>,
    k_sum: DVector<f64>,
    n: usize,
}

impl ColumnAccumulator {
    pub fn new(i: usize, dim: usize) -> Self {
        ColumnAccumulator { i, gamma_sum: DMatrix::zeros(dim, dim), k_sum: DVector::zeros(dim), n: 0 }
    }

    pub fn push(&mut self, a: &DVector<f64>, k: &DVector<f64>) {
        // lower triangle only; mirrored in finish()
        self.gamma_sum.syger(1.0, a, a, 1.0);
        self.k_sum += k;
        self.n += 1;
    }

    pub fn merge(&mut self, other: &ColumnAccumulator) {
        assert_eq!(self.i, other.i);
        self.gamma_sum += &other.gamma_sum;
        self.k_sum += &other.k_sum;
        self.n += other.n;
    }

    pub fn finish(self) -> Result<ColumnStats> {
        if self.n == 0 {
            return Err(QuasrError::EmptyData);
        }
        let nf = self.n as f64;
        let mut gamma = self.gamma_sum / nf;
        let p = gamma.nrows();
        for c in 0..p {
            for r in (c + 1)..p {
                gamma[(c, r)] = gamma[(r, c)];
            }
        }
        Ok(ColumnStats { i: self.i, gamma, kvec: self.k_sum / nf, n: self.n })
    }
}

/// Per-column statistics for any supported basis, in one pass over the data.
pub fn column_stats(data: &Dataset, basis: &BasisSpec) -> Result<Vec<ColumnStats>> {
    column_stats_with(data, basis, &StatsOptions::default())
}

pub fn column_stats_with(data: &Dataset, basis: &BasisSpec, opts: &StatsOptions) -> Result<Vec<ColumnStats>> {
    check_basis_support(data, basis)?;
    if data.n() == 0 {
        return Err(QuasrError::EmptyData);
    }
    let d = data.d();
    let p = basis.column_dim(d);
    if p > opts.max_column_dim {
        return Err(QuasrError::ColumnTooLarge { dim: p, cap: opts.max_column_dim });
    }
    let rows: Vec<Vec<f64>> = (0..data.n()).map(|r| data.row(r)).collect();
    let evals: Vec<Vec<LegendreEval>> = rows.iter().map(|r| row_evals(basis, r)).collect::<Result<_>>()?;
    (0..d)
        .into_par_iter()
        .map(|i| {
            let mut acc = ColumnAccumulator::new(i, p);
            let mut a = DVector::zeros(p);
            let mut k = DVector::zeros(p);
            for (row, ev) in rows.iter().zip(&evals) {
                fill_column_features(basis, row, ev, i, a.as_mut_slice(), k.as_mut_slice());
                acc.push(&a, &k);
            }
            acc.finish()
        })
        .collect()
}

/// Legendre statistics; rejects any other basis or off-cube data.
pub fn legendre_column_stats(data: &Dataset, basis: &BasisSpec) -> Result<Vec<ColumnStats>> {
    if basis.kind != BasisKind::LegendrePairwise {
        return Err(QuasrError::InvalidArgument("expected a Legendre basis".into()));
    }
    column_stats(data, basis)
}

/// Rows `a_i(x_r)'` stacked into an `n x p` matrix, plus `K_{.,i}`; then
/// `Gamma_i = M' M / n`.
pub fn column_design(data: &Dataset, basis: &BasisSpec, i: usize) -> Result<(DMatrix<f64>, DVector<f64>)> {
    check_basis_support(data, basis)?;
    if data.n() == 0 {
        return Err(QuasrError::EmptyData);
    }
    let p = basis.column_dim(data.d());
    let mut m = DMatrix::zeros(data.n(), p);
    let mut ksum = DVector::zeros(p);
    let mut a = vec![0.0; p];
    let mut k = vec![0.0; p];
    for r in 0..data.n() {
        let row = data.row(r);
        let ev = row_evals(basis, &row)?;
        fill_column_features(basis, &row, &ev, i, &mut a, &mut k);
        for c in 0..p {
            m[(r, c)] = a[c];
        }
        ksum += DVector::from_column_slice(&k);
    }
    Ok((m, ksum / data.n() as f64))
}

/// Statistics for either family, the input to scoring and `lambda_start`.
#[derive(Debug, Clone)]
pub enum Statistics {
    Gaussian(GaussianStats),
    Columns { basis: BasisSpec, columns: Vec<ColumnStats> },
}

impl Statistics {
    pub fn build(data: &Dataset, basis: &BasisSpec) -> Result<Self> {
        match basis.kind {
            BasisKind::Gaussian => gaussian_stats(data).map(Statistics::Gaussian),
            BasisKind::LegendrePairwise => {
                legendre_column_stats(data, basis).map(|columns| Statistics::Columns { basis: *basis, columns })
            }
        }
    }

    pub fn columns(&self) -> Cow<'_, [ColumnStats]> {
        match self {
            Statistics::Gaussian(g) => Cow::Owned(g.column_stats()),
            Statistics::Columns { columns, .. } => Cow::Borrowed(columns),
        }
    }

    pub fn basis(&self) -> BasisSpec {
        match self {
            Statistics::Gaussian(_) => BasisSpec::gaussian(),
            Statistics::Columns { basis, .. } => *basis,
        }
    }

    pub fn d(&self) -> usize {
        match self {
            Statistics::Gaussian(g) => g.d(),
            Statistics::Columns { columns, .. } => columns.len(),
        }
    }

    pub fn hyvarinen_score(&self, theta: &ParamBlocks) -> Result<f64> {
        match self {
            Statistics::Gaussian(g) => g.score(&theta.to_precision()?),
            Statistics::Columns { columns, .. } => hyvarinen_score(theta, columns),
        }
    }
}

/// Empirical Hyvärinen score `sum_i 1/2 theta_i' Gamma_i theta_i + K_i' theta_i`.
pub fn hyvarinen_score(theta: &ParamBlocks, stats: &[ColumnStats]) -> Result<f64> {
    if stats.len() != theta.d() {
        return Err(QuasrError::DimensionMismatch(format!(
            "{} columns of statistics for d={}",
            stats.len(),
            theta.d()
        )));
    }
    stats
        .iter()
        .map(|s| {
            let v = theta.column_vector(s.i);
            if v.len() != s.dim() {
                return Err(QuasrError::DimensionMismatch(format!(
                    "column {} has length {} but statistics have {}",
                    s.i,
                    v.len(),
                    s.dim()
                )));
            }
            Ok(s.quadratic(&v))
        })
        .sum()
}

/// Hyvärinen score of `theta` on statistics built from `holdout`.
pub fn score_on_holdout(theta: &ParamBlocks, holdout: &Dataset, basis: &BasisSpec) -> Result<f64> {
    Statistics::build(holdout, basis)?.hyvarinen_score(theta)
}

/// Gaussian negative log-likelihood per sample,
/// `-1/2 log det Omega + 1/2 trace(Omega Sigma) + d/2 log(2 pi)`.
///
/// Returns `+inf` when `omega` is not positive definite.
pub fn gaussian_nll(omega: &DMatrix<f64>, holdout_sigma: &DMatrix<f64>) -> f64 {
    let d = omega.nrows();
    let Some(chol) = nalgebra::Cholesky::new(omega.clone()) else {
        return f64::INFINITY;
    };
    let l = chol.l_dirty();
    let mut log_det = 0.0;
    for i in 0..d {
        let v = l[(i, i)];
        if !(v > 0.0 && v.is_finite()) {
            return f64::INFINITY;
        }
        log_det += 2.0 * v.ln();
    }
    let tr = (omega * holdout_sigma).trace();
    -0.5 * log_det + 0.5 * tr + 0.5 * d as f64 * (2.0 * std::f64::consts::PI).ln()
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let p = m.nrows();
    for r in 0..p {
        for c in (r + 1)..p {
            let v = 0.5 * (m[(r, c)] + m[(c, r)]);
            m[(r, c)] = v;
            m[(c, r)] = v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GroupKey;

    fn rows(v: &[&[f64]], support: Support) -> Dataset {
        Dataset::from_rows(&v.iter().map(|r| r.to_vec()).collect::<Vec<_>>(), support).unwrap()
    }

    #[test]
    fn gaussian_outer_products() {
        let s = gaussian_stats(&rows(&[&[1.0, 2.0]], Support::RealLine)).unwrap();
        assert_eq!(s.sigma_hat, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]));
        let s = gaussian_stats(&rows(&[&[1.0, 0.0], &[0.0, 1.0]], Support::RealLine)).unwrap();
        assert_eq!(s.sigma_hat, DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.5]));
    }

    #[test]
    fn gaussian_stats_rejects_empty_and_cube() {
        let empty = Dataset::new(DMatrix::zeros(0, 3), Support::RealLine).unwrap();
        assert!(matches!(gaussian_stats(&empty), Err(QuasrError::EmptyData)));
        let cube = rows(&[&[0.5]], Support::UnitCube);
        assert!(gaussian_stats(&cube).is_err());
    }

    #[test]
    fn gaussian_scores() {
        let s = GaussianStats { sigma_hat: DMatrix::from_element(1, 1, 4.0), n: 1 };
        assert_eq!(s.score(&DMatrix::from_element(1, 1, 2.0)).unwrap(), 6.0);
        assert_eq!(s.score(&DMatrix::zeros(1, 1)).unwrap(), 0.0);
        let s = GaussianStats { sigma_hat: DMatrix::identity(2, 2), n: 1 };
        assert_eq!(s.score(&DMatrix::identity(2, 2)).unwrap(), -1.0);
        assert!(s.score(&DMatrix::identity(3, 3)).is_err());
    }

    #[test]
    fn gaussian_column_machinery_reproduces_sigma_hat() {
        let data = rows(&[&[1.0, -0.5, 2.0], &[0.3, 0.7, -1.1], &[-2.0, 0.1, 0.4]], Support::RealLine);
        let direct = gaussian_stats(&data).unwrap().column_stats();
        let generic = column_stats(&data, &BasisSpec::gaussian()).unwrap();
        for (a, b) in direct.iter().zip(&generic) {
            assert!((&a.gamma - &b.gamma).amax() < 1e-12);
            assert_eq!(a.kvec, b.kvec);
        }

        let one = rows(&[&[1.5], &[-0.5]], Support::RealLine);
        let g = column_stats(&one, &BasisSpec::gaussian()).unwrap();
        assert!((g[0].gamma[(0, 0)] - gaussian_stats(&one).unwrap().sigma_hat[(0, 0)]).abs() < 1e-12);
        assert_eq!(g[0].kvec[0], -1.0);
    }

    #[test]
    fn gaussian_scores_agree_across_representations() {
        let data = rows(&[&[1.0, -0.5, 2.0], &[0.3, 0.7, -1.1], &[-2.0, 0.1, 0.4]], Support::RealLine);
        let omega = DMatrix::from_row_slice(3, 3, &[1.2, -0.3, 0.1, -0.3, 0.9, 0.0, 0.1, 0.0, 1.4]);
        let theta = ParamBlocks::from_precision(&omega).unwrap();
        let g = gaussian_stats(&data).unwrap();
        let a = g.score(&omega).unwrap();
        let b = hyvarinen_score(&theta, &g.column_stats()).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn single_midpoint_sample_features() {
        let basis = BasisSpec::legendre(1, 1).unwrap();
        let (m, _) = column_design(&rows(&[&[0.5, 0.5]], Support::UnitCube), &basis, 0).unwrap();
        assert!((m[(0, 0)] - 3f64.sqrt() / 2.0).abs() < 1e-15);
        assert_eq!(m[(0, 1)], 0.0);
    }

    #[test]
    fn boundary_samples_contribute_zero_rows() {
        let basis = BasisSpec::legendre(2, 2).unwrap();
        let data = rows(&[&[0.0, 0.4, 0.9], &[1.0, 0.2, 0.3]], Support::UnitCube);
        let stats = legendre_column_stats(&data, &basis).unwrap();
        assert_eq!(stats[0].gamma.amax(), 0.0);
        assert_eq!(stats[0].kvec.amax(), 0.0);
        assert!(stats[1].gamma.amax() > 0.0);
    }

    #[test]
    fn gamma_is_average_of_single_sample_gammas() {
        let basis = BasisSpec::legendre(2, 2).unwrap();
        let all: Vec<Vec<f64>> = vec![vec![0.1, 0.6, 0.35], vec![0.8, 0.25, 0.5], vec![0.45, 0.9, 0.05]];
        let full = legendre_column_stats(&Dataset::from_rows(&all, Support::UnitCube).unwrap(), &basis).unwrap();
        for i in 0..3 {
            let mut avg = DMatrix::zeros(full[i].dim(), full[i].dim());
            for r in &all {
                let single = legendre_column_stats(
                    &Dataset::from_rows(std::slice::from_ref(r), Support::UnitCube).unwrap(),
                    &basis,
                )
                .unwrap();
                avg += &single[i].gamma / 3.0;
            }
            assert!((&avg - &full[i].gamma).amax() < 1e-12);
        }
    }

    #[test]
    fn accumulator_shards_merge_to_full_pass() {
        let basis = BasisSpec::legendre(2, 1).unwrap();
        let all: Vec<Vec<f64>> = (0..7).map(|r| vec![(r as f64 + 0.5) / 8.0, ((r * 3) % 7) as f64 / 7.0]).collect();
        let data = Dataset::from_rows(&all, Support::UnitCube).unwrap();
        let (m, k) = column_design(&data, &basis, 1).unwrap();
        let p = m.ncols();
        let mut left = ColumnAccumulator::new(1, p);
        let mut right = ColumnAccumulator::new(1, p);
        for r in 0..7 {
            let a = m.row(r).transpose();
            let target = if r < 3 { &mut left } else { &mut right };
            target.push(&a, &DVector::zeros(p));
        }
        left.merge(&right);
        let merged = left.finish().unwrap();
        let full = column_stats(&data, &basis).unwrap().remove(1);
        assert!((&merged.gamma - &full.gamma).amax() < 1e-12);
        assert!((m.tr_mul(&m) / 7.0 - &full.gamma).amax() < 1e-12);
        assert!((k - &full.kvec).amax() < 1e-12);
    }

    #[test]
    fn edge_blocks_share_orientation_across_columns() {
        // a quadratic of theta_01 seen from column 0 and column 1 must use the
        // same coefficient ordering
        let basis = BasisSpec::legendre(1, 2).unwrap();
        let data = rows(&[&[0.3, 0.8]], Support::UnitCube);
        let (m0, _) = column_design(&data, &basis, 0).unwrap();
        let (m1, _) = column_design(&data, &basis, 1).unwrap();
        let e0 = crate::legendre::eval_legendre(0.3, 2).unwrap();
        let e1 = crate::legendre::eval_legendre(0.8, 2).unwrap();
        let w0 = 0.3 * 0.7;
        let w1 = 0.8 * 0.2;
        // u = (k=1, l=2) -> phi_1(x_0) phi_2(x_1)
        assert!((m0[(0, 1 + 1)] - w0 * e0.d1[1] * e1.values[2]).abs() < 1e-14);
        assert!((m1[(0, 1 + 1)] - w1 * e0.values[1] * e1.d1[2]).abs() < 1e-14);
    }

    #[test]
    fn column_cap_is_enforced() {
        let basis = BasisSpec::legendre(3, 3).unwrap();
        let data = rows(&[&[0.3, 0.8, 0.5]], Support::UnitCube);
        let err = column_stats_with(&data, &basis, &StatsOptions { max_column_dim: 10 }).unwrap_err();
        assert!(matches!(err, QuasrError::ColumnTooLarge { dim: 21, cap: 10 }));
    }

    #[test]
    fn holdout_scores() {
        let basis = BasisSpec::legendre(2, 2).unwrap();
        let data = rows(&[&[0.1, 0.6], &[0.7, 0.2], &[0.4, 0.5]], Support::UnitCube);
        let mut theta = ParamBlocks::for_basis(2, &basis);
        assert_eq!(score_on_holdout(&theta, &data, &basis).unwrap(), 0.0);
        theta.set_block(GroupKey::Vertex(0), vec![0.5, -1.0]).unwrap();
        theta.set_block(GroupKey::edge(0, 1), vec![0.2, 0.0, -0.3, 0.1]).unwrap();
        let train = hyvarinen_score(&theta, &legendre_column_stats(&data, &basis).unwrap()).unwrap();
        assert!((score_on_holdout(&theta, &data, &basis).unwrap() - train).abs() < 1e-12);
    }

    #[test]
    fn nll_examples() {
        let d = 3;
        let eye = DMatrix::identity(d, d);
        let expected = 1.5 + 1.5 * (2.0 * std::f64::consts::PI).ln();
        assert!((gaussian_nll(&eye, &eye) - expected).abs() < 1e-12);

        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert_eq!(gaussian_nll(&bad, &DMatrix::identity(2, 2)), f64::INFINITY);

        let v = gaussian_nll(&DMatrix::from_element(1, 1, 0.25), &DMatrix::from_element(1, 1, 4.0));
        let expected = 2f64.ln() + 0.5 + 0.5 * (2.0 * std::f64::consts::PI).ln();
        assert!((v - expected).abs() < 1e-12);
    }
}
