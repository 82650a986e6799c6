//! Builds score-matching statistics for Gaussian and unit-cube data and
//! evaluates the empirical Hyvärinen score of a parameter.

use nalgebra::DMatrix;
use quasr::sim::{copula_transform, GaussianModel, GraphModelSpec};
use quasr::stats::{gaussian_stats, Statistics};
use quasr::{BasisSpec, Dataset, GroupKey, ParamBlocks, Support};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> quasr::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let model = GaussianModel::generate(&GraphModelSpec::tree(4), &mut rng)?;
    let data = Dataset::new(model.sample(500, &mut rng)?, Support::RealLine)?.standardize()?;

    let g = gaussian_stats(&data)?;
    println!("Sigma_hat =\n{:.3}", g.sigma_hat);
    // the Gaussian score at Omega is trace(1/2 Omega Sigma Omega - Omega)
    println!("score at identity: {:.4}", g.score(&DMatrix::identity(4, 4))?);

    let cube = copula_transform(&model.copula_source(500, &mut rng)?)?;
    let basis = BasisSpec::legendre(2, 2)?;
    let stats = Statistics::build(&cube, &basis)?;
    let cols = stats.columns();
    println!("Legendre column length {} (vertex {}, edge {})", cols[0].dim(), basis.vertex_dim(), basis.edge_dim());

    let mut theta = ParamBlocks::for_basis(4, &basis);
    theta.set_block(GroupKey::edge(0, 1), vec![0.2, 0.0, 0.0, 0.1])?;
    println!("Hyvärinen score of a single-edge parameter: {:.5}", stats.hyvarinen_score(&theta)?);
    Ok(())
}

fn main() -> quasr::Result<()> {
    run_example()
}
