//! Synthetic studies: equivalence of the stochastic and deterministic
//! objectives, and singular spectra of fixed-rate, adaptive-rate and
//! closed-form solutions.

mod config;
mod output;

pub use config::{load_config, Experiment, Scale, StudyConfig};
pub use output::{
    trace_file_name, write_equivalence_outputs, write_spectrum_outputs, EQUIVALENCE_SUMMARY_HEADER,
    SPECTRA_HEADER, SPECTRUM_SUMMARY_HEADER,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dropout::{lambda_d, DropoutConfig, RatePolicy};
use crate::error::{check_open_unit, Error, Result};
use crate::matrix::{rel_frob_dist, DenseMatrix, FactorPair};
use crate::rng;
use crate::solvers::{nuclear_squared_solve, svd};
use crate::trainers::{train_deterministic, train_stochastic, TrackingStats, TrainTrace};

/// Relative tolerance used for rank-recovery claims.
pub const RANK_TOL: f64 = 1e-3;
/// Fraction of a run discarded before comparing EMA and deterministic curves.
pub const BURN_IN_FRACTION: f64 = 0.2;

/// Recipe for `X = U0 V0^T + Z0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub m: usize,
    pub n: usize,
    pub true_d: usize,
    pub factor_std: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 {
            return Err(Error::Config("m and n must be positive".into()));
        }
        if self.true_d == 0 || self.true_d > self.m.min(self.n) {
            return Err(Error::Config(format!(
                "true_d = {} must lie in 1..=min(m, n) = {}",
                self.true_d,
                self.m.min(self.n)
            )));
        }
        if !(self.factor_std.is_finite() && self.factor_std > 0.0) {
            return Err(Error::Config("factor_std must be positive".into()));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::Config("noise_std must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Draws `U0`, `V0` and `Z0` (in that order, row-major) from the data stream
/// of `spec.seed` and returns `X` with the ground-truth factors.
pub fn gen_synthetic(spec: &SynthSpec) -> Result<(DenseMatrix, FactorPair)> {
    spec.validate()?;
    let mut rng = rng::stream(spec.seed, rng::DATA_STREAM);
    let u0 = DenseMatrix::random_gaussian(spec.m, spec.true_d, spec.factor_std, &mut rng);
    let v0 = DenseMatrix::random_gaussian(spec.n, spec.true_d, spec.factor_std, &mut rng);
    let truth = FactorPair::new(u0, v0)?;
    let mut x = truth.product();
    if spec.noise_std > 0.0 {
        let z0 = DenseMatrix::random_gaussian(spec.m, spec.n, spec.noise_std, &mut rng);
        x = x.add(&z0)?;
    }
    Ok((x, truth))
}

/// Number of entries above `rel_tol * singulars[0]`; 0 for an all-zero vector.
pub fn numerical_rank(singulars: &[f64], rel_tol: f64) -> usize {
    match singulars.first() {
        Some(&top) if top > 0.0 => singulars.iter().filter(|&&s| s > rel_tol * top).count(),
        _ => 0,
    }
}

/// Optimizer settings shared by every cell of a study.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSettings {
    pub seed: u64,
    pub iterations: usize,
    pub step0: Option<f64>,
    pub step_tau: f64,
}

impl RunSettings {
    fn config(&self, policy: RatePolicy, seed: u64) -> Result<DropoutConfig> {
        let cfg = DropoutConfig {
            rate_policy: policy,
            seed,
            iterations: self.iterations,
            step0: self.step0,
            step_tau: self.step_tau,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Which data matrix each width of the equivalence grid factorizes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DataRank {
    /// The same `X` with this rank for every cell.
    Fixed(usize),
    /// A fresh `X` of rank `d` for each width `d`.
    MatchWidth,
}

/// One `(theta, d)` cell: a stochastic and a deterministic run started from
/// the same initialization.
#[derive(Clone, Debug)]
pub struct EquivalenceCell {
    pub theta: f64,
    pub d: usize,
    pub seed: u64,
    pub stochastic: TrainTrace,
    pub deterministic: TrainTrace,
}

impl EquivalenceCell {
    /// EMA of the stochastic objective against the deterministic objective
    /// of the same iterate.
    pub fn same_iterate_tracking(&self) -> TrackingStats {
        self.stochastic.self_tracking(BURN_IN_FRACTION)
    }

    /// EMA of the stochastic objective against the independent deterministic run.
    pub fn independent_tracking(&self) -> TrackingStats {
        let reference: Vec<f64> = self
            .deterministic
            .records
            .iter()
            .map(|r| r.deterministic_obj)
            .collect();
        self.stochastic.tracking_against(&reference, BURN_IN_FRACTION)
    }
}

fn data_for(base: &SynthSpec, rank: DataRank, d: usize) -> Result<DenseMatrix> {
    let spec = SynthSpec {
        true_d: match rank {
            DataRank::Fixed(r) => r,
            DataRank::MatchWidth => d.min(base.m.min(base.n)),
        },
        ..base.clone()
    };
    Ok(gen_synthetic(&spec)?.0)
}

/// Runs every `(theta, d)` pair; cells are ordered theta-major and each
/// trains from the seed `derive_seed(settings.seed, cell_index)`.
pub fn run_equivalence_study(
    base: &SynthSpec,
    rank: DataRank,
    thetas: &[f64],
    widths: &[usize],
    settings: &RunSettings,
) -> Result<Vec<EquivalenceCell>> {
    if thetas.is_empty() || widths.is_empty() {
        return Err(Error::Config("theta and d grids must be nonempty".into()));
    }
    for &t in thetas {
        check_open_unit("theta", t)?;
    }
    if widths.contains(&0) {
        return Err(Error::Config("d grid entries must be positive".into()));
    }
    let data: Vec<DenseMatrix> = widths
        .iter()
        .map(|&d| data_for(base, rank, d))
        .collect::<Result<_>>()?;
    let cells: Vec<(usize, f64, usize)> = thetas
        .iter()
        .flat_map(|&t| (0..widths.len()).map(move |w| (t, w)))
        .enumerate()
        .map(|(i, (t, w))| (i, t, w))
        .collect();

    cells
        .par_iter()
        .map(|&(index, theta, w)| {
            let d = widths[w];
            let x = &data[w];
            let seed = rng::derive_seed(settings.seed, index as u64);
            let cfg = settings.config(RatePolicy::Fixed(theta), seed)?;
            let stochastic = train_stochastic(x, d, &cfg)?;
            let deterministic = train_deterministic(x, d, (1.0 - theta) / theta, &cfg)?;
            Ok(EquivalenceCell {
                theta,
                d,
                seed,
                stochastic,
                deterministic,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Fixed,
    Adaptive,
    ClosedForm,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Fixed => "fixed",
            Method::Adaptive => "adaptive",
            Method::ClosedForm => "closed_form",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumReport {
    pub method: Method,
    pub d: usize,
    /// Nonincreasing, nonnegative.
    pub singulars: Vec<f64>,
    pub numerical_rank: usize,
    pub rel_frob_dist_to_closed_form: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct SpectrumStudy {
    pub theta_bar: f64,
    /// Weight used for the closed-form solve, `(1 - theta_bar) / theta_bar`.
    pub closed_form_lambda: f64,
    pub data_singulars: Vec<f64>,
    pub closed_form: DenseMatrix,
    /// Per width: fixed, adaptive, closed form.
    pub reports: Vec<SpectrumReport>,
    pub solutions: Vec<(Method, usize, DenseMatrix)>,
    /// Training seed of each width.
    pub seeds: Vec<(usize, u64)>,
}

impl SpectrumStudy {
    pub fn report(&self, method: Method, d: usize) -> Option<&SpectrumReport> {
        self.reports.iter().find(|r| r.method == method && r.d == d)
    }
}

fn spectrum_report(
    method: Method,
    d: usize,
    y: &DenseMatrix,
    closed: &DenseMatrix,
) -> Result<SpectrumReport> {
    let singulars = svd(y)?.singulars;
    Ok(SpectrumReport {
        method,
        d,
        numerical_rank: numerical_rank(&singulars, RANK_TOL),
        singulars,
        rel_frob_dist_to_closed_form: Some(rel_frob_dist(y, closed)?),
    })
}

/// For each width: deterministic training at the fixed weight
/// `(1 - theta_bar)/theta_bar` and at the adaptive weight `lambda_d`, plus the
/// closed-form squared-nuclear solution at `lambda_1`, which does not depend
/// on the width.
pub fn run_spectrum_study(
    spec: &SynthSpec,
    theta_bar: f64,
    widths: &[usize],
    settings: &RunSettings,
) -> Result<SpectrumStudy> {
    check_open_unit("theta_bar", theta_bar)?;
    if widths.is_empty() || widths.contains(&0) {
        return Err(Error::Config("d grid must be nonempty with positive entries".into()));
    }
    let (x, _) = gen_synthetic(spec)?;
    let lambda_fixed = (1.0 - theta_bar) / theta_bar;
    let closed = nuclear_squared_solve(&x, lambda_fixed)?;
    let data_singulars = svd(&x)?.singulars;

    let per_width: Vec<(usize, u64, DenseMatrix, DenseMatrix)> = widths
        .par_iter()
        .enumerate()
        .map(|(index, &d)| {
            let seed = rng::derive_seed(settings.seed, index as u64);
            let fixed_cfg = settings.config(RatePolicy::Fixed(theta_bar), seed)?;
            let adaptive_cfg = settings.config(RatePolicy::Adaptive(theta_bar), seed)?;
            let fixed = train_deterministic(&x, d, lambda_fixed, &fixed_cfg)?;
            let adaptive = train_deterministic(&x, d, lambda_d(d, theta_bar)?, &adaptive_cfg)?;
            Ok((d, seed, fixed.factors.product(), adaptive.factors.product()))
        })
        .collect::<Result<_>>()?;

    let mut reports = Vec::with_capacity(3 * widths.len());
    let mut solutions = Vec::with_capacity(3 * widths.len());
    let mut seeds = Vec::with_capacity(widths.len());
    for (d, seed, fixed, adaptive) in per_width {
        seeds.push((d, seed));
        reports.push(spectrum_report(Method::Fixed, d, &fixed, &closed)?);
        reports.push(spectrum_report(Method::Adaptive, d, &adaptive, &closed)?);
        reports.push(spectrum_report(Method::ClosedForm, d, &closed, &closed)?);
        solutions.push((Method::Fixed, d, fixed));
        solutions.push((Method::Adaptive, d, adaptive));
        solutions.push((Method::ClosedForm, d, closed.clone()));
    }
    Ok(SpectrumStudy {
        theta_bar,
        closed_form_lambda: lambda_fixed,
        data_singulars,
        closed_form: closed,
        reports,
        solutions,
        seeds,
    })
}
