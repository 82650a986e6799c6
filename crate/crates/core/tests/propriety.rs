mod common;

use common::*;
use nalgebra::DMatrix;
use quasr::stats::{column_stats, score_on_holdout};
use quasr::{BasisSpec, Dataset, GroupKey, ParamBlocks, Support};

fn one_dim(xs: &[f64]) -> Dataset {
    Dataset::new(DMatrix::from_column_slice(xs.len(), 1, xs), Support::UnitCube).unwrap()
}

#[test]
fn score_minimizer_recovers_the_density_parameter() {
    let truth = [0.6, -0.4, 0.25];
    let basis = BasisSpec::legendre(3, 1).unwrap();
    let data = one_dim(&sample_legendre_density(&truth, 20_000, 17));
    let stats = column_stats(&data, &basis).unwrap();
    let s = &stats[0];
    let theta = s.gamma.clone().lu().solve(&(-&s.kvec)).unwrap();
    for k in 0..3 {
        assert!((theta[k] - truth[k]).abs() < 0.1, "coordinate {k}: {} vs {}", theta[k], truth[k]);
    }
}

#[test]
fn uniform_data_prefers_the_zero_parameter() {
    let basis = BasisSpec::legendre(2, 1).unwrap();
    let data = one_dim(&sample_legendre_density(&[0.0, 0.0], 20_000, 3));
    let zero = ParamBlocks::for_basis(1, &basis);
    let base = score_on_holdout(&zero, &data, &basis).unwrap();
    assert_eq!(base, 0.0);
    for delta in [-0.3, -0.1, 0.1, 0.3] {
        let mut p = zero.clone();
        p.set_block(GroupKey::Vertex(0), vec![delta, 0.0]).unwrap();
        assert!(score_on_holdout(&p, &data, &basis).unwrap() > base, "delta {delta}");
    }
}

#[test]
fn disjoint_halves_give_close_scores() {
    let data = copula_data(21, 5, 20_000);
    let basis = BasisSpec::legendre(2, 2).unwrap();
    let (a, b) = data.split_at(10_000);
    let mut theta = ParamBlocks::for_basis(5, &basis);
    theta.set_block(GroupKey::Vertex(0), vec![0.3, -0.2]).unwrap();
    theta.set_block(GroupKey::edge(0, 1), vec![0.2, 0.0, 0.1, -0.1]).unwrap();
    let sa = score_on_holdout(&theta, &a, &basis).unwrap();
    let sb = score_on_holdout(&theta, &b, &basis).unwrap();
    assert!((sa - sb).abs() < 0.1, "{sa} vs {sb}");
}
