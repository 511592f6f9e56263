//! Dropout objectives for matrix factorization and the retain-rate schedule.
//!
//! A mask `r` drops column k of both factors when `r_k = 0`; the surviving
//! product is rescaled by `1/theta` so that its expectation is `U V^T`. The
//! expected loss over masks equals the plain Frobenius loss plus
//! `(1 - theta)/theta * omega(U, V)`, which is what
//! [`deterministic_objective`] evaluates and what
//! [`exact_expected_objective`] checks by enumerating every mask.

use serde::{Deserialize, Serialize};

use crate::error::{check_open_unit, dim_err, Error, Result};
use crate::matrix::{DenseMatrix, FactorPair};
use crate::rng::{self, DropRng};

/// Largest width accepted by [`exact_expected_objective`] (2^20 masks).
pub const MAX_ENUMERATION_WIDTH: usize = 20;

/// One realization of the column mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BernoulliMask {
    bits: Vec<bool>,
}

impl BernoulliMask {
    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn ones(d: usize) -> Self {
        Self { bits: vec![true; d] }
    }

    pub fn zeros(d: usize) -> Self {
        Self { bits: vec![false; d] }
    }

    /// Mask whose bit k is bit k of `code`.
    pub fn from_code(d: usize, code: u64) -> Self {
        Self {
            bits: (0..d).map(|k| (code >> k) & 1 == 1).collect(),
        }
    }

    /// Draws `d` independent Bernoulli(`theta`) bits, one generator word each.
    pub fn sample(d: usize, theta: f64, rng: &mut DropRng) -> Self {
        Self {
            bits: (0..d).map(|_| rng::bernoulli(rng, theta)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn kept(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Bits as 0.0 / 1.0 weights.
    pub fn weights(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }

    /// Probability of this realization under i.i.d. Bernoulli(`theta`).
    pub fn probability(&self, theta: f64) -> f64 {
        let kept = self.kept() as i32;
        let dropped = self.len() as i32 - kept;
        theta.powi(kept) * (1.0 - theta).powi(dropped)
    }
}

/// How the retain probability is chosen for a factorization of width `d`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatePolicy {
    /// The same `theta` regardless of width.
    Fixed(f64),
    /// `theta(d)` from [`theta_adaptive`] with base rate `theta_bar`.
    Adaptive(f64),
}

impl RatePolicy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            RatePolicy::Fixed(t) => check_open_unit("theta", t),
            RatePolicy::Adaptive(t) => check_open_unit("theta_bar", t),
        }
    }

    /// Retain probability at width `d`.
    pub fn theta(&self, d: usize) -> Result<f64> {
        match *self {
            RatePolicy::Fixed(t) => {
                check_open_unit("theta", t)?;
                Ok(t)
            }
            RatePolicy::Adaptive(t) => theta_adaptive(d, t),
        }
    }

    /// Regularization weight `(1 - theta)/theta` at width `d`.
    pub fn lambda(&self, d: usize) -> Result<f64> {
        match *self {
            RatePolicy::Fixed(t) => {
                check_open_unit("theta", t)?;
                Ok((1.0 - t) / t)
            }
            RatePolicy::Adaptive(t) => lambda_d(d, t),
        }
    }
}

/// Settings for a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DropoutConfig {
    pub rate_policy: RatePolicy,
    pub seed: u64,
    pub iterations: usize,
    /// Initial step size; `None` resolves to `0.5 / ||X||_F` at train time.
    pub step0: Option<f64>,
    pub step_tau: f64,
}

impl DropoutConfig {
    pub const DEFAULT_STEP_TAU: f64 = 1000.0;

    pub fn new(rate_policy: RatePolicy, seed: u64, iterations: usize) -> Result<Self> {
        let cfg = Self {
            rate_policy,
            seed,
            iterations,
            step0: None,
            step_tau: Self::DEFAULT_STEP_TAU,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_step(mut self, step0: f64, step_tau: f64) -> Result<Self> {
        self.step0 = Some(step0);
        self.step_tau = step_tau;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.rate_policy.validate()?;
        if let Some(s) = self.step0 {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::Parameter {
                    name: "step0",
                    value: s,
                    reason: "must be positive".into(),
                });
            }
        }
        if !(self.step_tau.is_finite() && self.step_tau > 0.0) {
            return Err(Error::Parameter {
                name: "step_tau",
                value: self.step_tau,
                reason: "must be positive".into(),
            });
        }
        Ok(())
    }
}

/// `sum_k ||u_k||^2 ||v_k||^2`.
pub fn omega(f: &FactorPair) -> f64 {
    f.column_energies().into_iter().fold(0.0, |acc, e| acc + e)
}

/// `||X - U V^T||_F^2`.
pub fn frob_loss(x: &DenseMatrix, f: &FactorPair) -> Result<f64> {
    f.check_target(x, "frob_loss")?;
    Ok(x.sub(&f.product())?.frobenius_norm_sq())
}

/// `||X - U V^T||_F^2 + lambda * omega(U, V)`.
pub fn regularized_objective(x: &DenseMatrix, f: &FactorPair, lambda: f64) -> Result<f64> {
    Ok(frob_loss(x, f)? + lambda * omega(f))
}

/// Closed-form expectation of the dropout loss:
/// `||X - U V^T||_F^2 + (1 - theta)/theta * omega(U, V)`.
pub fn deterministic_objective(x: &DenseMatrix, f: &FactorPair, theta: f64) -> Result<f64> {
    check_open_unit("theta", theta)?;
    regularized_objective(x, f, (1.0 - theta) / theta)
}

/// `||X - U diag(mask) V^T / theta||_F^2` for one fixed mask.
pub fn masked_objective(
    x: &DenseMatrix,
    f: &FactorPair,
    mask: &BernoulliMask,
    theta: f64,
) -> Result<f64> {
    check_open_unit("theta", theta)?;
    masked_objective_unchecked(x, f, mask, theta)
}

/// Same as [`masked_objective`] without the range check on `theta`, so the
/// `theta = 1` limit can be evaluated directly.
pub fn masked_objective_unchecked(
    x: &DenseMatrix,
    f: &FactorPair,
    mask: &BernoulliMask,
    theta: f64,
) -> Result<f64> {
    f.check_target(x, "masked_objective")?;
    if mask.len() != f.width() {
        return Err(dim_err("masked_objective", f.width(), mask.len()));
    }
    let scaled: Vec<f64> = mask.weights().iter().map(|w| w / theta).collect();
    let pred = f.u().scale_columns(&scaled)?.matmul_t(f.v())?;
    Ok(x.sub(&pred)?.frobenius_norm_sq())
}

/// Brute-force expectation over all `2^d` masks.
pub fn exact_expected_objective(x: &DenseMatrix, f: &FactorPair, theta: f64) -> Result<f64> {
    check_open_unit("theta", theta)?;
    let d = f.width();
    if d > MAX_ENUMERATION_WIDTH {
        return Err(Error::Capacity {
            what: "factor width for mask enumeration",
            got: d,
            limit: MAX_ENUMERATION_WIDTH,
        });
    }
    let mut total = 0.0;
    for code in 0..(1u64 << d) {
        let mask = BernoulliMask::from_code(d, code);
        total += mask.probability(theta) * masked_objective(x, f, &mask, theta)?;
    }
    Ok(total)
}

/// Sample mean of the masked objective and its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
}

/// Monte-Carlo estimate of the dropout loss from `samples` fresh masks.
pub fn monte_carlo_objective(
    x: &DenseMatrix,
    f: &FactorPair,
    theta: f64,
    samples: usize,
    rng: &mut DropRng,
) -> Result<McEstimate> {
    check_open_unit("theta", theta)?;
    if samples == 0 {
        return Err(Error::Parameter {
            name: "samples",
            value: 0.0,
            reason: "need at least one sample".into(),
        });
    }
    // Welford
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for i in 0..samples {
        let mask = BernoulliMask::sample(f.width(), theta, rng);
        let value = masked_objective(x, f, &mask, theta)?;
        let delta = value - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (value - mean);
    }
    let std_error = if samples > 1 {
        (m2 / (samples - 1) as f64 / samples as f64).sqrt()
    } else {
        0.0
    };
    Ok(McEstimate { mean, std_error })
}

fn check_width(d: usize) -> Result<()> {
    if d == 0 {
        return Err(Error::Parameter {
            name: "d",
            value: 0.0,
            reason: "factorization width must be at least 1".into(),
        });
    }
    Ok(())
}

/// Width-dependent retain probability `theta_bar / (d - (d - 1) theta_bar)`.
pub fn theta_adaptive(d: usize, theta_bar: f64) -> Result<f64> {
    check_width(d)?;
    check_open_unit("theta_bar", theta_bar)?;
    let d = d as f64;
    Ok(theta_bar / (d - (d - 1.0) * theta_bar))
}

/// `(1 - theta(d)) / theta(d)`, evaluated in the simplified form
/// `d (1 - theta_bar) / theta_bar` so that `lambda_d(k d) = k lambda_d(d)`
/// holds to rounding.
pub fn lambda_d(d: usize, theta_bar: f64) -> Result<f64> {
    check_width(d)?;
    check_open_unit("theta_bar", theta_bar)?;
    Ok(d as f64 * ((1.0 - theta_bar) / theta_bar))
}
