#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use quasr::admm::group_shrink;
use quasr::legendre::{eval_legendre, gauss_legendre_unit};
use quasr::model::column_block_offset;
use quasr::sim::{copula_transform, gen_gaussian_graph, GaussianModel, GraphModelSpec};
use quasr::stats::{gaussian_stats, ColumnStats, GaussianStats};
use quasr::{BasisSpec, Dataset, GroupKey, ParamBlocks};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Standardized Gaussian data from a random tree or sparse graph.
pub fn gaussian_instance(seed: u64, d: usize, n: usize) -> GaussianStats {
    let spec = if seed.is_multiple_of(2) { GraphModelSpec::tree(d) } else { GraphModelSpec::erdos_renyi(d, 0.2) };
    let sample = gen_gaussian_graph(&spec, n, seed).unwrap();
    gaussian_stats(&sample.data).unwrap()
}

pub fn copula_data(seed: u64, d: usize, n: usize) -> Dataset {
    let mut r = rng(seed);
    let model = GaussianModel::generate(&GraphModelSpec::tree(d), &mut r).unwrap();
    copula_transform(&model.copula_source(n, &mut r).unwrap()).unwrap()
}

/// Proximal gradient on `trace(1/2 W S W - W) + lambda ||W||_1` over symmetric `W`.
pub fn prox_gradient_gaussian(sigma: &DMatrix<f64>, lambda: f64, steps: usize) -> DMatrix<f64> {
    let d = sigma.nrows();
    let lmax = sigma.clone().symmetric_eigenvalues().max();
    let t = 1.0 / lmax;
    let mut w = DMatrix::<f64>::zeros(d, d);
    for _ in 0..steps {
        let ws = &w * sigma;
        let grad = (&ws + ws.transpose()) * 0.5 - DMatrix::identity(d, d);
        w = (&w - grad * t).map(|x| {
            let m = x.abs() - t * lambda;
            if m > 0.0 {
                m * x.signum()
            } else {
                0.0
            }
        });
    }
    w
}

/// Proximal gradient on the shared-block objective
/// `sum_i q_i(theta_i) + lambda (sum_i ||theta_ii|| + 2 sum_{i<j} ||theta_ij||)`.
pub fn prox_gradient_columns(stats: &[ColumnStats], basis: &BasisSpec, lambda: f64, steps: usize) -> ParamBlocks {
    let d = stats.len();
    let (vd, ed) = (basis.vertex_dim(), basis.edge_dim());
    let lmax = stats.iter().map(|s| s.gamma.clone().symmetric_eigenvalues().max()).fold(0.0, f64::max);
    let t = 1.0 / (2.0 * lmax);
    let mut theta = ParamBlocks::for_basis(d, basis);
    for _ in 0..steps {
        let grads: Vec<DVector<f64>> = stats.iter().map(|s| &s.gamma * theta.column_vector(s.i) + &s.kvec).collect();
        let mut next = theta.clone();
        for i in 0..d {
            let b = theta.block_values(GroupKey::Vertex(i));
            let v: Vec<f64> = (0..vd).map(|k| b[k] - t * grads[i][k]).collect();
            next.set_block(GroupKey::Vertex(i), group_shrink(&v, t * lambda)).unwrap();
            for j in (i + 1)..d {
                let oi = column_block_offset(vd, ed, i, j);
                let oj = column_block_offset(vd, ed, j, i);
                let b = theta.block_values(GroupKey::edge(i, j));
                let v: Vec<f64> = (0..ed).map(|u| b[u] - t * (grads[i][oi + u] + grads[j][oj + u])).collect();
                next.set_block(GroupKey::edge(i, j), group_shrink(&v, 2.0 * t * lambda)).unwrap();
            }
        }
        theta = next;
    }
    theta
}

/// `n` draws from the density proportional to `exp(sum_k theta_k phi_k(x))`
/// on `[0, 1]`, by inverting a tabulated CDF.
pub fn sample_legendre_density(theta: &[f64], n: usize, seed: u64) -> Vec<f64> {
    let m = theta.len();
    let cells = 4000;
    let (nodes, weights) = gauss_legendre_unit(8);
    let log_density = |x: f64| {
        let e = eval_legendre(x, m).unwrap();
        (1..=m).map(|k| theta[k - 1] * e.values[k]).sum::<f64>()
    };
    let mut cdf = vec![0.0; cells + 1];
    let h = 1.0 / cells as f64;
    for c in 0..cells {
        let mass: f64 = nodes.iter().zip(&weights).map(|(x, w)| w * h * log_density((c as f64 + x) * h).exp()).sum();
        cdf[c + 1] = cdf[c] + mass;
    }
    let total = cdf[cells];
    let mut r = rng(seed);
    (0..n)
        .map(|_| {
            let u = r.random::<f64>() * total;
            let c = cdf.partition_point(|&v| v <= u).clamp(1, cells) - 1;
            // invert within the cell by bisection on the exact cell integral
            let (mut lo, mut hi) = (c as f64 * h, (c + 1) as f64 * h);
            let target = u - cdf[c];
            for _ in 0..40 {
                let mid = 0.5 * (lo + hi);
                let width = mid - c as f64 * h;
                let mass: f64 = nodes
                    .iter()
                    .zip(&weights)
                    .map(|(x, w)| w * width * log_density(c as f64 * h + x * width).exp())
                    .sum();
                if mass < target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        })
        .collect()
}

pub fn relative_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

pub fn random_spd(p: usize, r: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(p + 3, p, |_, _| r.random::<f64>() - 0.5);
    a.tr_mul(&a) / (p + 3) as f64
}
