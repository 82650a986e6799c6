//! Grows a cached `(Gamma + rho I)^{-1}` to a larger basis through the
//! Schur complement and compares it with a direct inverse.

use nalgebra::DMatrix;
use quasr::admm::{augment_to_layout, build_column_factor};
use quasr::sim::{copula_transform, GaussianModel, GraphModelSpec};
use quasr::stats::column_stats;
use quasr::BasisSpec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> quasr::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let model = GaussianModel::generate(&GraphModelSpec::tree(4), &mut rng)?;
    let data = copula_transform(&model.copula_source(300, &mut rng)?)?;
    let (small, large) = (BasisSpec::legendre(1, 1)?, BasisSpec::legendre(3, 2)?);
    let rho = 1.0;

    let old = column_stats(&data, &small)?;
    let new = column_stats(&data, &large)?;
    for i in 0..4 {
        let cached = build_column_factor(&old[i], rho, None)?;
        let positions = small.column_embedding(&large, 4, i)?;
        let grown = augment_to_layout(&cached, &new[i], &positions)?;
        let p = new[i].dim();
        let direct =
            (&new[i].gamma + DMatrix::identity(p, p) * rho).try_inverse().expect("Gamma + rho I is invertible");
        let rel = (grown.inverse() - &direct).norm() / direct.norm();
        println!("column {i}: {} -> {} coordinates, relative discrepancy {rel:.2e}", cached.dim(), grown.dim());
    }
    Ok(())
}

fn main() -> quasr::Result<()> {
    run_example()
}
