//! Stochastic dropout SGD and gradient descent on the regularized objective.

use std::io::{self, Write};

use crate::dropout::{
    deterministic_objective, masked_objective, regularized_objective, BernoulliMask,
    DropoutConfig,
};
use crate::error::{check_open_unit, dim_err, Error, Result};
use crate::matrix::{DenseMatrix, FactorPair};
use crate::rng::{self, DropRng};

/// Standard deviation of the Gaussian factor initialization.
pub const INIT_STD: f64 = 0.1;
/// Decay of the exponential moving average recorded in traces.
pub const EMA_DECAY: f64 = 0.99;
/// Objectives above this abort the run.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

pub const TRACE_CSV_HEADER: &str = "iter,stochastic_obj,deterministic_obj,ema_obj,step";

/// `step(t) = step0 / (1 + t / tau)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepSchedule {
    pub step0: f64,
    pub tau: f64,
}

impl StepSchedule {
    pub fn new(step0: f64, tau: f64) -> Result<Self> {
        for (name, value) in [("step0", step0), ("step_tau", tau)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::Parameter {
                    name,
                    value,
                    reason: "must be positive".into(),
                });
            }
        }
        Ok(Self { step0, tau })
    }

    /// Resolves the schedule of `config` against the data; the default
    /// initial step is `0.5 / ||X||_F`.
    pub fn for_data(config: &DropoutConfig, x: &DenseMatrix) -> Result<Self> {
        let step0 = match config.step0 {
            Some(s) => s,
            None => {
                let norm = x.frobenius_norm();
                if norm == 0.0 {
                    return Err(Error::Parameter {
                        name: "step0",
                        value: 0.0,
                        reason: "no default step for an all-zero data matrix; set step0".into(),
                    });
                }
                0.5 / norm
            }
        };
        Self::new(step0, config.step_tau)
    }

    #[inline]
    pub fn step(&self, t: usize) -> f64 {
        self.step0 / (1.0 + t as f64 / self.tau)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    /// Masked objective of the mask drawn at this iteration (stochastic runs).
    pub stochastic_obj: Option<f64>,
    /// Deterministic objective of the iterate before this iteration's update.
    pub deterministic_obj: f64,
    pub ema_obj: f64,
    pub step: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainTrace {
    pub records: Vec<TraceRecord>,
    pub factors: FactorPair,
    /// Weight on omega in the deterministic objective that was tracked.
    pub lambda: f64,
    /// Retain probability, for stochastic runs.
    pub theta: Option<f64>,
}

/// Deviation of the smoothed stochastic objective from the deterministic one.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrackingStats {
    pub max_rel_dev: f64,
    pub mean_rel_dev: f64,
    /// `|mean(ema) - mean(det)| / mean(det)` over the window.
    pub rel_dev_of_means: f64,
    pub window: usize,
}

impl TrainTrace {
    pub fn final_objective(&self) -> Option<f64> {
        self.records.last().map(|r| r.deterministic_obj)
    }

    /// Compares `ema_obj` with `reference[t]` for every record after the first
    /// `burn_in_fraction` of the run.
    pub fn tracking_against(&self, reference: &[f64], burn_in_fraction: f64) -> TrackingStats {
        assert_eq!(reference.len(), self.records.len());
        let start = (burn_in_fraction * self.records.len() as f64).floor() as usize;
        let mut max_rel_dev = 0.0_f64;
        let mut sum_dev = 0.0;
        let mut sum_ema = 0.0;
        let mut sum_ref = 0.0;
        for (rec, &r) in self.records[start..].iter().zip(&reference[start..]) {
            let dev = (rec.ema_obj - r).abs() / r.abs();
            max_rel_dev = max_rel_dev.max(dev);
            sum_dev += dev;
            sum_ema += rec.ema_obj;
            sum_ref += r;
        }
        let window = self.records.len() - start;
        let n = window.max(1) as f64;
        TrackingStats {
            max_rel_dev,
            mean_rel_dev: sum_dev / n,
            rel_dev_of_means: (sum_ema - sum_ref).abs() / sum_ref.abs(),
            window,
        }
    }

    /// Tracking of the EMA against the deterministic objective of the same iterate.
    pub fn self_tracking(&self, burn_in_fraction: f64) -> TrackingStats {
        let reference: Vec<f64> = self.records.iter().map(|r| r.deterministic_obj).collect();
        self.tracking_against(&reference, burn_in_fraction)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{TRACE_CSV_HEADER}")?;
        for r in &self.records {
            let sto = r.stochastic_obj.map(|v| format!("{v:?}")).unwrap_or_default();
            writeln!(
                out,
                "{},{},{:?},{:?},{:?}",
                r.iter, sto, r.deterministic_obj, r.ema_obj, r.step
            )?;
        }
        Ok(())
    }
}

/// Gaussian factors with entries `N(0, INIT_STD^2)`; `U` is drawn first.
pub fn init_factors(m: usize, n: usize, d: usize, rng: &mut DropRng) -> FactorPair {
    let u = DenseMatrix::random_gaussian(m, d, INIT_STD, rng);
    let v = DenseMatrix::random_gaussian(n, d, INIT_STD, rng);
    FactorPair::new(u, v).expect("same width")
}

/// One stochastic step on the dropout loss for a fixed mask:
///
/// `U += (2 eps / theta) (X - U diag(r) V^T / theta) V diag(r)` and the
/// symmetric update for `V`, both using the pre-step factors. Columns whose
/// mask bit is 0 are copied through untouched.
pub fn sgd_dropout_step(
    x: &DenseMatrix,
    f: &FactorPair,
    mask: &BernoulliMask,
    theta: f64,
    step: f64,
) -> Result<FactorPair> {
    check_open_unit("theta", theta)?;
    f.check_target(x, "sgd_dropout_step")?;
    let d = f.width();
    if mask.len() != d {
        return Err(dim_err("sgd_dropout_step", d, mask.len()));
    }
    if mask.kept() == 0 {
        return Ok(f.clone());
    }
    let scaled: Vec<f64> = mask.weights().iter().map(|w| w / theta).collect();
    let residual = x.sub(&f.u().scale_columns(&scaled)?.matmul_t(f.v())?)?;
    let grad_u = residual.matmul(f.v())?;
    let grad_v = residual.t_matmul(f.u())?;
    let coeff = 2.0 * step / theta;

    let mut u = f.u().clone();
    let mut v = f.v().clone();
    for (k, &keep) in mask.bits().iter().enumerate() {
        if !keep {
            continue;
        }
        for i in 0..u.rows() {
            u[(i, k)] += coeff * grad_u[(i, k)];
        }
        for j in 0..v.rows() {
            v[(j, k)] += coeff * grad_v[(j, k)];
        }
    }
    FactorPair::new(u, v)
}

/// Gradient of `||X - U V^T||_F^2 + lambda * omega(U, V)`:
///
/// `gU = -2 (X - U V^T) V + 2 lambda U diag(||v_k||^2)`,
/// `gV = -2 (X - U V^T)^T U + 2 lambda V diag(||u_k||^2)`.
pub fn grad_deterministic(
    x: &DenseMatrix,
    f: &FactorPair,
    lambda: f64,
) -> Result<(DenseMatrix, DenseMatrix)> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::Parameter {
            name: "lambda",
            value: lambda,
            reason: "must be nonnegative".into(),
        });
    }
    f.check_target(x, "grad_deterministic")?;
    let residual = x.sub(&f.product())?;
    let d = f.width();
    let u_norms: Vec<f64> = (0..d).map(|k| 2.0 * lambda * f.u().column_norm_sq(k)).collect();
    let v_norms: Vec<f64> = (0..d).map(|k| 2.0 * lambda * f.v().column_norm_sq(k)).collect();
    let gu = residual
        .matmul(f.v())?
        .scale(-2.0)
        .add(&f.u().scale_columns(&v_norms)?)?;
    let gv = residual
        .t_matmul(f.u())?
        .scale(-2.0)
        .add(&f.v().scale_columns(&u_norms)?)?;
    Ok((gu, gv))
}

fn check_divergence(iter: usize, values: &[f64]) -> Result<()> {
    for &value in values {
        if !value.is_finite() || value > DIVERGENCE_LIMIT {
            return Err(Error::Divergence {
                iter,
                value,
                limit: DIVERGENCE_LIMIT,
            });
        }
    }
    Ok(())
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

fn ema_update(prev: Option<f64>, value: f64) -> f64 {
    match prev {
        Some(e) => EMA_DECAY * e + (1.0 - EMA_DECAY) * value,
        None => value,
    }
}

/// Dropout SGD with a fresh mask every iteration.
///
/// The generator stream of `config.seed` first initializes the factors and
/// then supplies the masks, so a run is fully determined by its config.
pub fn train_stochastic(x: &DenseMatrix, d: usize, config: &DropoutConfig) -> Result<TrainTrace> {
    config.validate()?;
    check_width(d)?;
    let theta = config.rate_policy.theta(d)?;
    let lambda = (1.0 - theta) / theta;
    let schedule = StepSchedule::for_data(config, x)?;
    let mut rng = rng::stream(config.seed, rng::TRAIN_STREAM);
    let mut f = init_factors(x.rows(), x.cols(), d, &mut rng);

    let mut records = Vec::with_capacity(config.iterations);
    let mut ema = None;
    for t in 0..config.iterations {
        let mask = BernoulliMask::sample(d, theta, &mut rng);
        let sto = masked_objective(x, &f, &mask, theta)?;
        let det = deterministic_objective(x, &f, theta)?;
        check_divergence(t, &[sto, det])?;
        let e = ema_update(ema, sto);
        ema = Some(e);
        let step = schedule.step(t);
        records.push(TraceRecord {
            iter: t,
            stochastic_obj: Some(sto),
            deterministic_obj: det,
            ema_obj: e,
            step,
        });
        f = sgd_dropout_step(x, &f, &mask, theta, step)?;
    }
    Ok(TrainTrace {
        records,
        factors: f,
        lambda,
        theta: Some(theta),
    })
}

/// Gradient descent on `||X - U V^T||_F^2 + lambda * omega(U, V)`.
///
/// Initialization matches [`train_stochastic`] for the same seed. The rate
/// policy of `config` is not consulted; `lambda` is explicit.
pub fn train_deterministic(
    x: &DenseMatrix,
    d: usize,
    lambda: f64,
    config: &DropoutConfig,
) -> Result<TrainTrace> {
    config.validate()?;
    check_width(d)?;
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::Parameter {
            name: "lambda",
            value: lambda,
            reason: "must be nonnegative".into(),
        });
    }
    let schedule = StepSchedule::for_data(config, x)?;
    let mut rng = rng::stream(config.seed, rng::TRAIN_STREAM);
    let mut f = init_factors(x.rows(), x.cols(), d, &mut rng);

    let mut records = Vec::with_capacity(config.iterations);
    let mut ema = None;
    for t in 0..config.iterations {
        let det = regularized_objective(x, &f, lambda)?;
        check_divergence(t, &[det])?;
        let e = ema_update(ema, det);
        ema = Some(e);
        let step = schedule.step(t);
        records.push(TraceRecord {
            iter: t,
            stochastic_obj: None,
            deterministic_obj: det,
            ema_obj: e,
            step,
        });
        let (gu, gv) = grad_deterministic(x, &f, lambda)?;
        f = FactorPair::new(f.u().sub(&gu.scale(step))?, f.v().sub(&gv.scale(step))?)?;
    }
    Ok(TrainTrace {
        records,
        factors: f,
        lambda,
        theta: None,
    })
}
