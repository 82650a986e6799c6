//! Coordinate-wise descent for Gaussian score matching,
//! `min_{Omega = Omega'} trace(1/2 Omega Sigma Omega - Omega) + lambda ||Omega||_1`.

use nalgebra::DMatrix;

use crate::model::{FitResult, ParamBlocks};
use crate::stats::GaussianStats;
use crate::{QuasrError, Result};

/// `max(|x| - lam, 0) * sign(x)`.
pub fn soft_threshold(x: f64, lam: f64) -> f64 {
    debug_assert!(lam >= 0.0);
    if x > lam {
        x - lam
    } else if x < -lam {
        x + lam
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CdConfig {
    pub lambda: f64,
    pub max_sweeps: usize,
    /// Stop once `sum |Omega_t - Omega_{t-1}| / sum |Omega_t|` over a sweep drops below this.
    pub rel_tol: f64,
    pub penalize_diagonal: bool,
    /// Record the penalized objective after every sweep.
    pub record_objective: bool,
}

impl CdConfig {
    pub fn new(lambda: f64) -> Self {
        CdConfig { lambda, max_sweeps: 10_000, rel_tol: 1e-8, penalize_diagonal: true, record_objective: false }
    }

    fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) {
            return Err(QuasrError::InvalidArgument(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.rel_tol > 0.0) {
            return Err(QuasrError::InvalidArgument("rel_tol must be positive".into()));
        }
        Ok(())
    }
}

/// Penalized objective for a symmetric `omega`.
pub fn objective(omega: &DMatrix<f64>, stats: &GaussianStats, lambda: f64, penalize_diagonal: bool) -> f64 {
    let smooth = stats.score(omega).expect("dimensions checked by caller");
    let mut l1: f64 = omega.iter().map(|v| v.abs()).sum();
    if !penalize_diagonal {
        l1 -= omega.diagonal().iter().map(|v| v.abs()).sum::<f64>();
    }
    smooth + lambda * l1
}

/// Runs cyclic coordinate descent from `init` (identity by default).
///
/// Each update is the exact minimizer in one symmetric entry:
/// `Omega_ij = S(-(c - 2 [i = j]), 2 lambda) / (Sigma_ii + Sigma_jj)` with
/// `c = Omega_{\j,i}' Sigma_{\j,j} + Omega_{\i,j}' Sigma_{\i,i}`.
pub fn cd_fit(stats: &GaussianStats, cfg: &CdConfig, init: Option<&DMatrix<f64>>) -> Result<FitResult> {
    cfg.validate()?;
    let sigma = &stats.sigma_hat;
    let d = stats.d();
    if let Some(i) = (0..d).find(|&i| !(sigma[(i, i)] > 0.0)) {
        return Err(QuasrError::InvalidArgument(format!("Sigma_hat has a nonpositive diagonal at {i}")));
    }
    let zero = DMatrix::zeros(d, d);
    if kkt_residual_with(&zero, stats, cfg.lambda, cfg.penalize_diagonal) == 0.0 {
        let trace = if cfg.record_objective { vec![0.0] } else { Vec::new() };
        return Ok(FitResult {
            lambda: cfg.lambda,
            theta: ParamBlocks::zeros(d, 1, 1),
            iterations: 0,
            kkt_residual: 0.0,
            converged: true,
            last_change: 0.0,
            objective_trace: trace,
        });
    }
    let mut omega = match init {
        Some(m) => {
            if m.shape() != (d, d) {
                return Err(QuasrError::DimensionMismatch("initial precision has the wrong shape".into()));
            }
            if (m - m.transpose()).amax() > 1e-12 * (1.0 + m.amax()) {
                return Err(QuasrError::InvalidArgument("initial precision must be symmetric".into()));
            }
            m.clone()
        }
        None => DMatrix::identity(d, d),
    };

    let mut trace = Vec::new();
    if cfg.record_objective {
        trace.push(objective(&omega, stats, cfg.lambda, cfg.penalize_diagonal));
    }
    let mut sweeps = 0;
    let mut converged = false;
    let mut last_change = f64::INFINITY;
    while sweeps < cfg.max_sweeps {
        sweeps += 1;
        let mut change = 0.0;
        for i in 0..d {
            for j in i..d {
                let new = coordinate_update(&omega, sigma, i, j, cfg);
                let old = omega[(i, j)];
                if new != old {
                    change += if i == j { (new - old).abs() } else { 2.0 * (new - old).abs() };
                    omega[(i, j)] = new;
                    omega[(j, i)] = new;
                }
            }
        }
        if cfg.record_objective {
            trace.push(objective(&omega, stats, cfg.lambda, cfg.penalize_diagonal));
        }
        let size: f64 = omega.iter().map(|x| x.abs()).sum();
        last_change = if size == 0.0 {
            if change == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            change / size
        };
        if last_change < cfg.rel_tol {
            converged = true;
            break;
        }
    }

    let kkt = kkt_residual_with(&omega, stats, cfg.lambda, cfg.penalize_diagonal);
    let mut theta = ParamBlocks::from_precision(&omega)?;
    theta.prune_zeros();
    Ok(FitResult {
        lambda: cfg.lambda,
        theta,
        iterations: sweeps,
        kkt_residual: kkt,
        converged,
        last_change,
        objective_trace: trace,
    })
}

fn coordinate_update(omega: &DMatrix<f64>, sigma: &DMatrix<f64>, i: usize, j: usize, cfg: &CdConfig) -> f64 {
    let d = omega.nrows();
    let mut c = 0.0;
    // skip structural zeros of Omega
    for k in 0..d {
        let o_ki = omega[(k, i)];
        if k != j && o_ki != 0.0 {
            c += o_ki * sigma[(k, j)];
        }
        let o_kj = omega[(k, j)];
        if k != i && o_kj != 0.0 {
            c += o_kj * sigma[(k, i)];
        }
    }
    let (offset, lam) =
        if i == j { (2.0, if cfg.penalize_diagonal { cfg.lambda } else { 0.0 }) } else { (0.0, cfg.lambda) };
    soft_threshold(-(c - offset), 2.0 * lam) / (sigma[(i, i)] + sigma[(j, j)])
}

/// Largest violation of `1/2 (Omega Sigma + Sigma Omega) - I + lambda Z = 0`,
/// `Z` in the subdifferential of `||Omega||_1`.
pub fn kkt_residual(omega: &DMatrix<f64>, stats: &GaussianStats, lambda: f64) -> f64 {
    kkt_residual_with(omega, stats, lambda, true)
}

pub fn kkt_residual_with(omega: &DMatrix<f64>, stats: &GaussianStats, lambda: f64, penalize_diagonal: bool) -> f64 {
    let d = omega.nrows();
    let os = omega * &stats.sigma_hat;
    let mut worst = 0.0f64;
    for i in 0..d {
        for j in 0..d {
            let grad = 0.5 * (os[(i, j)] + os[(j, i)]) - if i == j { 1.0 } else { 0.0 };
            let lam = if i == j && !penalize_diagonal { 0.0 } else { lambda };
            let w = omega[(i, j)];
            let r = if w == 0.0 { (grad.abs() - lam).max(0.0) } else { (grad + lam * w.signum()).abs() };
            worst = worst.max(r);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(m: DMatrix<f64>) -> GaussianStats {
        GaussianStats { sigma_hat: m, n: 1 }
    }

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-0.5, 1.0), 0.0);
        for x in [-2.5, 0.0, 1e-300, 7.0] {
            assert_eq!(soft_threshold(x, 0.0), x);
        }
    }

    #[test]
    fn scalar_penalized_solution() {
        let s = stats(DMatrix::from_element(1, 1, 1.0));
        let fit = cd_fit(&s, &CdConfig::new(0.25), None).unwrap();
        assert!((fit.theta.to_precision().unwrap()[(0, 0)] - 0.75).abs() < 1e-12);
        assert!(fit.converged);
    }

    #[test]
    fn identity_unpenalized() {
        let s = stats(DMatrix::identity(2, 2));
        let fit = cd_fit(&s, &CdConfig::new(0.0), None).unwrap();
        assert_eq!(fit.theta.to_precision().unwrap(), DMatrix::identity(2, 2));
    }

    #[test]
    fn zero_above_lambda_start() {
        let s = stats(DMatrix::from_row_slice(3, 3, &[1.0, 0.4, 0.1, 0.4, 1.0, -0.3, 0.1, -0.3, 1.0]));
        let fit = cd_fit(&s, &CdConfig::new(1.0), None).unwrap();
        assert_eq!(fit.theta.to_precision().unwrap(), DMatrix::zeros(3, 3));
        assert_eq!(fit.kkt_residual, 0.0);
    }

    #[test]
    fn kkt_examples() {
        let s = stats(DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]));
        let inv = s.sigma_hat.clone().try_inverse().unwrap();
        assert!(kkt_residual(&inv, &s, 0.0) < 1e-10);
        assert_eq!(kkt_residual(&DMatrix::zeros(2, 2), &s, 1.0), 0.0);
        assert!(kkt_residual(&DMatrix::zeros(2, 2), &s, 0.5) > 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let s = stats(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
        assert!(cd_fit(&s, &CdConfig::new(0.1), None).is_err());
        let s = stats(DMatrix::identity(2, 2));
        assert!(cd_fit(&s, &CdConfig::new(-0.1), None).is_err());
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(cd_fit(&s, &CdConfig::new(0.1), Some(&asym)).is_err());
    }

    #[test]
    fn reports_non_convergence() {
        let s = stats(DMatrix::from_row_slice(2, 2, &[1.0, 0.9, 0.9, 1.0]));
        let cfg = CdConfig { max_sweeps: 1, rel_tol: 1e-14, ..CdConfig::new(0.01) };
        let fit = cd_fit(&s, &cfg, None).unwrap();
        assert!(!fit.converged);
        assert!(matches!(fit.require_converged(), Err(QuasrError::NotConverged { iterations: 1, .. })));
    }

    #[test]
    fn diagonal_exemption_keeps_diagonal() {
        let s = stats(DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 1.0]));
        let cfg = CdConfig { penalize_diagonal: false, ..CdConfig::new(5.0) };
        let fit = cd_fit(&s, &cfg, None).unwrap();
        let omega = fit.theta.to_precision().unwrap();
        assert!((omega[(0, 0)] - 1.0).abs() < 1e-12 && omega[(0, 1)] == 0.0);
        assert!(kkt_residual_with(&omega, &s, 5.0, false) < 1e-10);
    }
}
