//! Simulates a sparse Erdős–Rényi Gaussian graph and traces the ROC of the
//! lambda path against the true edges.

use quasr::selection::{fit_path, Criterion, PathSpec};
use quasr::sim::{gen_gaussian_graph, roc_curve, GraphModelSpec};
use quasr::BasisSpec;

pub fn run_example() -> quasr::Result<()> {
    let sample = gen_gaussian_graph(&GraphModelSpec::erdos_renyi(15, 0.15), 400, 31)?;
    println!("true graph: {} edges, max degree {}", sample.graph.edge_count(), sample.graph.max_degree());
    let (train, holdout) = sample.data.split_at(300);
    let path = fit_path(&train, &BasisSpec::gaussian(), &PathSpec::default(), &holdout)?;
    let roc = roc_curve(&path, &sample.graph, Criterion::GaussianNllHoldout)?;
    for (k, p) in roc.points.iter().enumerate().step_by(3) {
        println!(
            "#{k:2} lambda {:.4}  FPR {:.3}  TPR {:.3}",
            p.lambda,
            p.metrics.fpr().unwrap_or(f64::NAN),
            p.metrics.tp_rate.unwrap_or(f64::NAN)
        );
    }
    println!("selected point: {:?}", roc.selected);
    Ok(())
}

fn main() -> quasr::Result<()> {
    run_example()
}
