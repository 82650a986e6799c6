//! Consensus ADMM on copula data with the Legendre pairwise basis.

use quasr::admm::{general_kkt_residual, AdmmConfig, AdmmProblem};
use quasr::model::edge_set_of;
use quasr::selection::lambda_start_columns;
use quasr::sim::{copula_transform, edge_metrics, GaussianModel, GraphModelSpec};
use quasr::stats::column_stats;
use quasr::BasisSpec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> quasr::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let model = GaussianModel::generate(&GraphModelSpec::tree(6), &mut rng)?;
    let data = copula_transform(&model.copula_source(1000, &mut rng)?)?;
    let basis = BasisSpec::legendre(2, 2)?;
    let stats = column_stats(&data, &basis)?;
    let start = lambda_start_columns(&stats, &basis);

    // factors are computed once and shared by every lambda
    let problem = AdmmProblem::new(stats.clone(), &basis, 1.0)?;
    let mut warm = None;
    for frac in [0.95, 0.85, 0.7] {
        let lambda = frac * start;
        let fit = problem.fit(&AdmmConfig::new(lambda), warm.as_ref())?;
        let g = edge_set_of(&fit.result.theta, 0.0);
        let m = edge_metrics(&g, &model.graph)?;
        println!(
            "lambda {lambda:.4}: {} iterations, kkt {:.1e}, {} edges, TP {:.2}, TN {:.2}",
            fit.result.iterations,
            general_kkt_residual(&fit.result.theta, &stats, lambda)?,
            g.edge_count(),
            m.tp_rate.unwrap_or(f64::NAN),
            m.tn_rate.unwrap_or(f64::NAN)
        );
        warm = Some(fit.state);
    }
    Ok(())
}

fn main() -> quasr::Result<()> {
    run_example()
}
