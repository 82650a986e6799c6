//! Regularized quadratic scoring (QUASR) for sparse pairwise graphical models.
//!
//! The Hyvärinen score of a pairwise exponential family is a positive
//! semidefinite quadratic in the natural parameters. Adding a group penalty
//! over vertex and edge blocks gives a convex problem whose zero edge blocks
//! define the learned graph. This crate builds the score-matching statistics,
//! solves the problem with consensus ADMM (any basis) or coordinate descent
//! (Gaussian), walks warm-started regularization paths and ships a synthetic
//! experiment harness.
//!
//! | Module | Purpose |
//! |--------|---------|
//! | [`model`] | parameter blocks, column views, graphs, datasets, bases |
//! | [`legendre`] | orthonormal shifted Legendre polynomials on `[0, 1]` |
//! | [`stats`] | score-matching statistics and held-out scores |
//! | [`cd`] | Gaussian coordinate descent |
//! | [`admm`] | consensus ADMM with cached factorizations |
//! | [`selection`] | `lambda_start`, paths, model selection |
//! | [`sim`] | data generators and edge-selection metrics |
//! | [`cli`] | file formats and the `quasr` subcommands |

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod admm;
pub mod cd;
pub mod cli;
mod error;
pub mod legendre;
pub mod model;
pub mod selection;
pub mod sim;
pub mod stats;

pub use error::{QuasrError, Result};
pub use model::{BasisKind, BasisSpec, Dataset, FitResult, Graph, GroupKey, ParamBlocks, Support};
