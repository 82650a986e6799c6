//! Warm-started lambda path with held-out selection, plus a truncation path
//! that grows the Legendre basis from (1, 1) to (2, 2).

use quasr::selection::{fit_path, select_model, Criterion, GridPolicy, PathSpec};
use quasr::sim::{copula_transform, gen_gaussian_graph, GaussianModel, GraphModelSpec};
use quasr::BasisSpec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> quasr::Result<()> {
    let sample = gen_gaussian_graph(&GraphModelSpec::tree(10), 300, 21)?;
    let (train, holdout) = sample.data.split_at(200);
    let spec = PathSpec::with_grid(GridPolicy::LogSpaced { count: 12, ratio_min: 0.05 });
    let path = fit_path(&train, &BasisSpec::gaussian(), &spec, &holdout)?;
    for e in &path.entries {
        println!(
            "lambda {:.4}  edges {:2}  train {:+.4}  holdout {:+.4}  nll {:.4}  iters {}",
            e.lambda,
            e.edge_count,
            e.train_score,
            e.holdout_score,
            e.holdout_nll.unwrap_or(f64::NAN),
            e.iterations
        );
    }
    let best = select_model(&path, Criterion::GaussianNllHoldout)?;
    println!("held-out likelihood picks lambda {:.4} with {} edges", best.lambda, best.edge_count);

    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let model = GaussianModel::generate(&GraphModelSpec::tree(5), &mut rng)?;
    let cube = copula_transform(&model.copula_source(600, &mut rng)?)?;
    let (train, holdout) = cube.split_at(400);
    let spec = PathSpec {
        truncations: Some(vec![(1, 1), (2, 2)]),
        ..PathSpec::with_grid(GridPolicy::LogSpaced { count: 5, ratio_min: 0.1 })
    };
    let path = fit_path(&train, &BasisSpec::legendre(2, 2)?, &spec, &holdout)?;
    for (k, e) in path.entries.iter().enumerate() {
        println!(
            "#{k:2} (m1, m2) = ({}, {})  lambda {:.4}  edges {}  warm from {:?}",
            e.basis.m1, e.basis.m2, e.lambda, e.edge_count, e.warm_from
        );
    }
    Ok(())
}

fn main() -> quasr::Result<()> {
    run_example()
}
