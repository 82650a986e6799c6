//! Orthonormal shifted Legendre polynomials on `[0, 1]`.
//!
//! `phi_k(x) = sqrt(2k + 1) * P_k(2x - 1)` where `P_k` is the classical
//! Legendre polynomial, so `int_0^1 phi_k phi_l = delta_kl` and
//! `|phi_k(x)| <= sqrt(2k + 1)`.

use crate::{QuasrError, Result};

/// Highest supported degree.
pub const MAX_DEGREE: usize = 50;

/// Values and first two derivatives of `phi_0 ..= phi_{k_max}` at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct LegendreEval {
    pub x: f64,
    pub values: Vec<f64>,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
}

impl LegendreEval {
    pub fn max_degree(&self) -> usize {
        self.values.len() - 1
    }
}

fn check_unit(x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(QuasrError::Domain { value: x })
    }
}

/// Evaluates `phi_k`, `phi_k'` and `phi_k''` for `k = 0..=k_max`.
///
/// Values use the three-term recurrence; derivatives use
/// `P'_{k+1} = P'_{k-1} + (2k+1) P_k` and `P''_{k+1} = P''_{k-1} + (2k+1) P'_k`,
/// which are exact at the endpoints as well.
pub fn eval_legendre(x: f64, k_max: usize) -> Result<LegendreEval> {
    check_unit(x)?;
    if k_max > MAX_DEGREE {
        return Err(QuasrError::InvalidArgument(format!("degree {k_max} above {MAX_DEGREE}")));
    }
    let t = 2.0 * x - 1.0;
    let len = k_max + 1;
    let mut p = vec![0.0; len];
    let mut dp = vec![0.0; len];
    let mut ddp = vec![0.0; len];
    p[0] = 1.0;
    if len > 1 {
        p[1] = t;
        dp[1] = 1.0;
    }
    for k in 1..k_max {
        let kf = k as f64;
        p[k + 1] = ((2.0 * kf + 1.0) * t * p[k] - kf * p[k - 1]) / (kf + 1.0);
        dp[k + 1] = dp[k - 1] + (2.0 * kf + 1.0) * p[k];
        ddp[k + 1] = ddp[k - 1] + (2.0 * kf + 1.0) * dp[k];
    }
    // chain rule for t = 2x - 1 plus the orthonormal scale
    let scale = |k: usize| (2.0 * k as f64 + 1.0).sqrt();
    Ok(LegendreEval {
        x,
        values: (0..len).map(|k| scale(k) * p[k]).collect(),
        d1: (0..len).map(|k| 2.0 * scale(k) * dp[k]).collect(),
        d2: (0..len).map(|k| 4.0 * scale(k) * ddp[k]).collect(),
    })
}

/// Tensor-product basis `phi_k(xi) phi_l(xj)` for `1 <= k, l <= m2`.
///
/// Entry `(k, l)` lives at index `(k - 1) * m2 + (l - 1)` of each field.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorEval {
    pub m2: usize,
    pub values: Vec<f64>,
    pub d_xi: Vec<f64>,
    pub d2_xi: Vec<f64>,
    pub d_xj: Vec<f64>,
    pub d2_xj: Vec<f64>,
}

impl TensorEval {
    /// Flat index of degrees `(k, l)`, both 1-based.
    pub fn index(&self, k: usize, l: usize) -> usize {
        (k - 1) * self.m2 + (l - 1)
    }
}

pub fn eval_tensor(xi: f64, xj: f64, m2: usize) -> Result<TensorEval> {
    let a = eval_legendre(xi, m2)?;
    let b = eval_legendre(xj, m2)?;
    let size = m2 * m2;
    let mut out = TensorEval {
        m2,
        values: Vec::with_capacity(size),
        d_xi: Vec::with_capacity(size),
        d2_xi: Vec::with_capacity(size),
        d_xj: Vec::with_capacity(size),
        d2_xj: Vec::with_capacity(size),
    };
    for k in 1..=m2 {
        for l in 1..=m2 {
            out.values.push(a.values[k] * b.values[l]);
            out.d_xi.push(a.d1[k] * b.values[l]);
            out.d2_xi.push(a.d2[k] * b.values[l]);
            out.d_xj.push(a.values[k] * b.d1[l]);
            out.d2_xj.push(a.values[k] * b.d2[l]);
        }
    }
    Ok(out)
}

/// Gauss–Legendre nodes and weights on `[0, 1]` (Newton iteration on `P_n`).
pub fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, t);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * t * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = nf * (t * p1 - p0) / (t * t - 1.0);
            let step = p1 / dp;
            t -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - t * t) * dp * dp);
        nodes[i] = 0.5 * (1.0 - t);
        nodes[n - 1 - i] = 0.5 * (1.0 + t);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}
