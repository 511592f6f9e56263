//! JSON run configuration shared by `train`, `fig1` and `fig2`.
//!
//! A config file is overlaid on a preset chosen by experiment and scale, so
//! a file only needs the fields it changes. The resolved config is a complete
//! document and round-trips through [`load_config`] unchanged.

use serde::{Deserialize, Deserializer, Serialize};

use crate::dropout::{DropoutConfig, RatePolicy};
use crate::error::{Error, Result};

use super::{RunSettings, SynthSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Desk,
    Paper,
}

impl Scale {
    pub fn label(self) -> &'static str {
        match self {
            Scale::Desk => "desk",
            Scale::Paper => "paper",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    /// A single training run.
    Train,
    /// Stochastic vs deterministic objective over a (theta, d) grid.
    Fig1,
    /// Spectra of fixed-rate, adaptive-rate and closed-form solutions.
    Fig2,
}

impl Experiment {
    pub fn label(self) -> &'static str {
        match self {
            Experiment::Train => "train",
            Experiment::Fig1 => "fig1",
            Experiment::Fig2 => "fig2",
        }
    }
}

/// Fully resolved configuration.
///
/// `true_d = None` makes each width `d` of a fig1 grid factorize data of rank
/// `d`. `theta = None` selects the adaptive rate built on `theta_bar` for
/// training runs. `step0 = None` uses `0.5 / ||X||_F`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub m: usize,
    pub n: usize,
    pub true_d: Option<usize>,
    pub factor_std: f64,
    pub noise_std: f64,
    pub seed: u64,
    pub theta_grid: Vec<f64>,
    pub theta_bar: f64,
    pub theta: Option<f64>,
    pub d: usize,
    pub d_grid: Vec<usize>,
    pub iterations: usize,
    pub step0: Option<f64>,
    pub step_tau: f64,
    pub lambda: Option<f64>,
    pub scale: Scale,
}

// `Some(None)` records an explicit `null`, distinct from an absent key.
fn explicit<'de, D, T>(de: D) -> std::result::Result<Option<Option<T>>, D::Error>
where
    D: Deserializer<'de>,
    T: Deserialize<'de>,
{
    Option::<T>::deserialize(de).map(Some)
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialConfig {
    m: Option<usize>,
    n: Option<usize>,
    #[serde(default, deserialize_with = "explicit")]
    true_d: Option<Option<usize>>,
    factor_std: Option<f64>,
    noise_std: Option<f64>,
    seed: Option<u64>,
    theta_grid: Option<Vec<f64>>,
    theta_bar: Option<f64>,
    #[serde(default, deserialize_with = "explicit")]
    theta: Option<Option<f64>>,
    d: Option<usize>,
    d_grid: Option<Vec<usize>>,
    iterations: Option<usize>,
    #[serde(default, deserialize_with = "explicit")]
    step0: Option<Option<f64>>,
    step_tau: Option<f64>,
    #[serde(default, deserialize_with = "explicit")]
    lambda: Option<Option<f64>>,
    scale: Option<Scale>,
}

impl StudyConfig {
    pub fn preset(experiment: Experiment, scale: Scale) -> StudyConfig {
        let desk = StudyConfig {
            m: 20,
            n: 20,
            true_d: Some(4),
            factor_std: 0.1,
            noise_std: 0.0,
            seed: 1,
            theta_grid: vec![0.3, 0.7],
            theta_bar: 0.9,
            theta: Some(0.5),
            d: 8,
            d_grid: vec![4, 8],
            iterations: 5000,
            step0: Some(0.05),
            step_tau: 1000.0,
            lambda: None,
            scale: Scale::Desk,
        };
        let paper = StudyConfig {
            m: 100,
            n: 100,
            true_d: Some(10),
            noise_std: 0.01,
            theta_grid: vec![0.1, 0.3, 0.5, 0.7, 0.9],
            d: 40,
            d_grid: vec![10, 40, 160],
            iterations: 10_000,
            step0: Some(0.002),
            scale: Scale::Paper,
            ..desk.clone()
        };
        match (experiment, scale) {
            (Experiment::Train, Scale::Desk) => desk,
            (Experiment::Train, Scale::Paper) => paper,
            (Experiment::Fig1, Scale::Desk) => StudyConfig {
                true_d: None,
                ..desk
            },
            (Experiment::Fig1, Scale::Paper) => StudyConfig {
                true_d: None,
                ..paper
            },
            (Experiment::Fig2, Scale::Desk) => StudyConfig {
                m: 40,
                n: 40,
                true_d: Some(5),
                noise_std: 0.01,
                d_grid: vec![10, 20],
                iterations: 10_000,
                step0: None,
                ..desk
            },
            (Experiment::Fig2, Scale::Paper) => StudyConfig {
                step0: None,
                ..paper
            },
        }
    }

    pub fn synth_spec(&self, true_d: usize) -> SynthSpec {
        SynthSpec {
            m: self.m,
            n: self.n,
            true_d,
            factor_std: self.factor_std,
            noise_std: self.noise_std,
            seed: self.seed,
        }
    }

    pub fn run_settings(&self) -> RunSettings {
        RunSettings {
            seed: self.seed,
            iterations: self.iterations,
            step0: self.step0,
            step_tau: self.step_tau,
        }
    }

    /// Rate policy of a single training run.
    pub fn rate_policy(&self) -> RatePolicy {
        match self.theta {
            Some(t) => RatePolicy::Fixed(t),
            None => RatePolicy::Adaptive(self.theta_bar),
        }
    }

    /// Settings of a single training run.
    pub fn dropout_config(&self) -> Result<DropoutConfig> {
        let cfg = DropoutConfig {
            rate_policy: self.rate_policy(),
            seed: self.seed,
            iterations: self.iterations,
            step0: self.step0,
            step_tau: self.step_tau,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks every field needed by `experiment`; `src` is used to point
    /// at the offending line.
    pub fn validate(&self, experiment: Experiment, src: Option<&str>) -> Result<()> {
        let fail = |key: &str, msg: String| -> Result<()> {
            let at = src
                .and_then(|s| key_line(s, key))
                .map(|l| format!("line {l}: "))
                .unwrap_or_default();
            Err(Error::Config(format!("{at}{key}: {msg}")))
        };
        let unit = |v: f64| v > 0.0 && v < 1.0;

        if self.m == 0 {
            return fail("m", "must be positive".into());
        }
        if self.n == 0 {
            return fail("n", "must be positive".into());
        }
        let side = self.m.min(self.n);
        if let Some(r) = self.true_d {
            if r == 0 || r > side {
                return fail("true_d", format!("{r} must lie in 1..={side} (min(m, n))"));
            }
        } else if experiment != Experiment::Fig1 {
            return fail("true_d", "required for this command".into());
        }
        if !(self.factor_std.is_finite() && self.factor_std > 0.0) {
            return fail("factor_std", format!("{} must be positive", self.factor_std));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return fail("noise_std", format!("{} must be nonnegative", self.noise_std));
        }
        if !unit(self.theta_bar) {
            return fail(
                "theta_bar",
                format!("{} is outside the valid range (0, 1)", self.theta_bar),
            );
        }
        if let Some(t) = self.theta {
            if !unit(t) {
                return fail("theta", format!("{t} is outside the valid range (0, 1)"));
            }
        }
        if self.iterations == 0 {
            return fail("iterations", "must be at least 1".into());
        }
        if let Some(s) = self.step0 {
            if !(s.is_finite() && s > 0.0) {
                return fail("step0", format!("{s} must be positive"));
            }
        }
        if !(self.step_tau.is_finite() && self.step_tau > 0.0) {
            return fail("step_tau", format!("{} must be positive", self.step_tau));
        }
        if let Some(l) = self.lambda {
            if !(l.is_finite() && l >= 0.0) {
                return fail("lambda", format!("{l} must be nonnegative"));
            }
        }
        match experiment {
            Experiment::Train => {
                if self.d == 0 {
                    return fail("d", "must be positive".into());
                }
            }
            Experiment::Fig1 | Experiment::Fig2 => {
                if self.d_grid.is_empty() || self.d_grid.contains(&0) {
                    return fail("d_grid", "must be nonempty with positive entries".into());
                }
            }
        }
        if experiment == Experiment::Fig1 {
            if self.theta_grid.is_empty() {
                return fail("theta_grid", "must be nonempty".into());
            }
            if let Some(&t) = self.theta_grid.iter().find(|&&t| !unit(t)) {
                return fail(
                    "theta_grid",
                    format!("entry {t} is outside the valid range (0, 1)"),
                );
            }
        }
        Ok(())
    }

    fn overlay(mut self, p: PartialConfig) -> StudyConfig {
        macro_rules! take {
            ($($f:ident),*) => { $( if let Some(v) = p.$f { self.$f = v; } )* };
        }
        // `theta_bar` alone in a file asks for the adaptive rate.
        if p.theta_bar.is_some() && p.theta.is_none() {
            self.theta = None;
        }
        take!(
            m, n, true_d, factor_std, noise_std, seed, theta_grid, theta_bar, theta, d, d_grid,
            iterations, step0, step_tau, lambda, scale
        );
        self
    }
}

/// 1-based line of the first `"key":` occurrence.
fn key_line(src: &str, key: &str) -> Option<usize> {
    let quoted = format!("\"{key}\"");
    src.lines().enumerate().find_map(|(i, line)| {
        let at = line.find(&quoted)?;
        line[at + quoted.len()..]
            .trim_start()
            .starts_with(':')
            .then_some(i + 1)
    })
}

/// Parses `src` (a JSON object, possibly partial) over the preset for
/// `experiment`. The preset scale comes from `scale_override`, else the
/// file's `scale`, else desk; an explicit override also wins over the file.
pub fn load_config(
    src: &str,
    experiment: Experiment,
    scale_override: Option<Scale>,
) -> Result<StudyConfig> {
    let partial: PartialConfig = serde_json::from_str(src).map_err(|e| {
        Error::Config(format!("line {} column {}: {}", e.line(), e.column(), strip_position(&e)))
    })?;
    let scale = scale_override.or(partial.scale).unwrap_or(Scale::Desk);
    let mut cfg = StudyConfig::preset(experiment, scale).overlay(partial);
    cfg.scale = scale;
    cfg.validate(experiment, Some(src))?;
    Ok(cfg)
}

fn strip_position(e: &serde_json::Error) -> String {
    let full = e.to_string();
    match full.rfind(" at line ") {
        Some(i) => full[..i].to_string(),
        None => full,
    }
}
