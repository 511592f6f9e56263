//! Dropout for low-rank matrix factorization.
//!
//! The crate trains factorizations `X ~ U V^T` with column dropout, evaluates
//! the deterministic objective that dropout optimizes in expectation, and
//! provides the closed-form solver and quasi-norm machinery for the adaptive
//! retain rate `theta(d)`.
//!
//! ```
//! use dropfact::{gen_synthetic, nuclear_squared_solve, SynthSpec};
//!
//! let spec = SynthSpec { m: 8, n: 6, true_d: 2, factor_std: 0.1, noise_std: 0.0, seed: 7 };
//! let (x, _) = gen_synthetic(&spec).unwrap();
//! let y = nuclear_squared_solve(&x, 0.5).unwrap();
//! assert_eq!(y.shape(), (8, 6));
//! ```

/// Library version recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub mod check;
pub mod dropout;
pub mod error;
pub mod experiments;
pub mod matrix;
pub mod quasinorm;
pub mod rng;
pub mod solvers;
pub mod trainers;

pub use dropout::{
    deterministic_objective, exact_expected_objective, frob_loss, lambda_d, masked_objective,
    monte_carlo_objective, omega, regularized_objective, theta_adaptive, BernoulliMask,
    DropoutConfig, McEstimate, RatePolicy,
};
pub use error::{Error, Result};
pub use experiments::{
    gen_synthetic, numerical_rank, run_equivalence_study, run_spectrum_study, SpectrumReport,
    SynthSpec,
};
pub use matrix::{rel_frob_dist, DenseMatrix, FactorPair};
pub use quasinorm::{
    doubling_construction, envelope_gap, equalized_factorization, quasi_norm, quasi_norm_eval,
};
pub use solvers::{l1_squared_prox, nuclear_norm, nuclear_squared_solve, svd, SvdResult};
pub use trainers::{grad_deterministic, sgd_dropout_step, train_deterministic, train_stochastic, TrainTrace};
