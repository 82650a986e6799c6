//! Replicated structure-learning experiment on random trees, summarized
//! by true-positive and true-negative rates.

use quasr::sim::{run_experiment, ExperimentConfig, GraphModelSpec};

pub fn run_example() -> quasr::Result<()> {
    let cfg = ExperimentConfig {
        name: "small_tree".into(),
        graph: GraphModelSpec::tree(15),
        n: 100,
        n_holdout: 100,
        reps: 5,
        seed: 2024,
        ..ExperimentConfig::default()
    };
    let report = run_experiment(&cfg)?;
    for o in &report.outcomes {
        println!(
            "rep {}: TP {:.3}  TN {:.3}  lambda {:.4}  min eigenvalue {:+.3}",
            o.rep,
            o.tp_rate.unwrap_or(f64::NAN),
            o.tn_rate.unwrap_or(f64::NAN),
            o.selected_lambda.unwrap_or(f64::NAN),
            o.min_eigenvalue.unwrap_or(f64::NAN)
        );
    }
    let s = &report.summary;
    println!("mean TP {:.3}, mean TN {:.3}", s.tp_mean.unwrap_or(f64::NAN), s.tn_mean.unwrap_or(f64::NAN));
    Ok(())
}

fn main() -> quasr::Result<()> {
    run_example()
}
