//! Sparse precision estimation by coordinate descent, certified by the KKT residual.

use quasr::cd::{cd_fit, kkt_residual, CdConfig};
use quasr::selection::lambda_start;
use quasr::sim::{edge_metrics, gen_gaussian_graph, GraphModelSpec};
use quasr::stats::{gaussian_stats, Statistics};

pub fn run_example() -> quasr::Result<()> {
    let sample = gen_gaussian_graph(&GraphModelSpec::tree(8), 400, 11)?;
    let stats = gaussian_stats(&sample.data)?;
    println!("lambda_start = {}", lambda_start(&Statistics::Gaussian(stats.clone())));

    for lambda in [0.5, 0.2, 0.1] {
        let fit = cd_fit(&stats, &CdConfig::new(lambda), None)?.require_converged()?;
        let omega = fit.theta.to_precision()?;
        let m = edge_metrics(&fit.edges(), &sample.graph)?;
        println!(
            "lambda {lambda:.2}: {} sweeps, kkt {:.1e}, {} edges, TP {:.2}, TN {:.2}",
            fit.iterations,
            kkt_residual(&omega, &stats, lambda),
            fit.edges().edge_count(),
            m.tp_rate.unwrap_or(f64::NAN),
            m.tn_rate.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}

fn main() -> quasr::Result<()> {
    run_example()
}
