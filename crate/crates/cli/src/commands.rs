//! Command implementations. Each returns the manifest it wrote.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use dropfact::check::{run_checks, CheckOptions};
use dropfact::experiments::{
    gen_synthetic, run_equivalence_study, run_spectrum_study, write_equivalence_outputs,
    write_spectrum_outputs, DataRank, Experiment, StudyConfig,
};
use dropfact::{nuclear_squared_solve, svd, train_deterministic, train_stochastic, Error};

use crate::manifest::{write_atomic, Invocation, Mode, RunManifest, SeedEntry, StudyName, Versions};
use crate::matrix_csv::{format_matrix, parse_matrix};

pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

pub const MANIFEST_NAME: &str = "manifest.json";
pub const TRACE_NAME: &str = "trace.csv";

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn failed(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_FAILURE,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::Parameter { .. } | Error::Capacity { .. } => EXIT_USAGE,
            Error::Dimension { .. }
            | Error::Contract(_)
            | Error::Numerical(_)
            | Error::Divergence { .. } => EXIT_FAILURE,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::failed(format!("{}: {e}", path.display()))
}

fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))
}

fn finish(dir: &Path, manifest: &RunManifest) -> Result<(), Failure> {
    let path = dir.join(MANIFEST_NAME);
    manifest.write_atomic(&path).map_err(|e| io_failure(&path, e))
}

/// Prints one line per suite; fails if any suite fails.
pub fn check(opts: CheckOptions) -> Result<(), Failure> {
    let reports = run_checks(opts);
    let mut failed = 0;
    for r in &reports {
        let status = if r.passed() { "PASS" } else { "FAIL" };
        println!(
            "{status} {:<22} cases={:<4} max_error={:.3e} tolerance={:.0e}{}",
            r.name,
            r.cases,
            r.max_error,
            r.tolerance,
            r.failure.as_deref().map(|m| format!(" error: {m}")).unwrap_or_default()
        );
        failed += usize::from(!r.passed());
    }
    println!("{} suites, {failed} failed", reports.len());
    if failed == 0 {
        Ok(())
    } else {
        Err(Failure::failed(format!("{failed} verification suite(s) failed")))
    }
}

pub fn train(config: StudyConfig, mode: Mode, out: &Path) -> Result<RunManifest, Failure> {
    config.validate(Experiment::Train, None)?;
    if mode == Mode::Stochastic && config.lambda.is_some() {
        return Err(Failure::usage(
            "lambda applies only to deterministic training; the stochastic objective is set by theta",
        ));
    }
    let start = Instant::now();
    let true_d = config.true_d.expect("validated");
    let (x, _) = gen_synthetic(&config.synth_spec(true_d))?;
    let dropout = config.dropout_config()?;
    let mut notes = Vec::new();
    let trace = match mode {
        Mode::Stochastic => {
            notes.push(("theta".to_string(), dropout.rate_policy.theta(config.d)?));
            train_stochastic(&x, config.d, &dropout)?
        }
        Mode::Deterministic => {
            let lambda = match config.lambda {
                Some(l) => l,
                None => dropout.rate_policy.lambda(config.d)?,
            };
            train_deterministic(&x, config.d, lambda, &dropout)?
        }
    };
    notes.push(("lambda".to_string(), trace.lambda));

    ensure_dir(out)?;
    let path = out.join(TRACE_NAME);
    let file = File::create(&path).map_err(|e| io_failure(&path, e))?;
    let mut w = BufWriter::new(file);
    trace
        .write_csv(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| io_failure(&path, e))?;

    let manifest = RunManifest {
        seeds: vec![SeedEntry {
            label: "train".into(),
            seed: config.seed,
        }],
        invocation: Invocation::Train { mode, config },
        versions: Versions::current(),
        outputs: vec![TRACE_NAME.into()],
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        notes,
    };
    finish(out, &manifest)?;
    Ok(manifest)
}

pub fn experiment(name: StudyName, config: StudyConfig, out: &Path) -> Result<RunManifest, Failure> {
    let start = Instant::now();
    ensure_dir(out)?;
    let (outputs, seeds, notes) = match name {
        StudyName::Fig1 => {
            config.validate(Experiment::Fig1, None)?;
            let rank = config.true_d.map_or(DataRank::MatchWidth, DataRank::Fixed);
            let cells = run_equivalence_study(
                &config.synth_spec(config.true_d.unwrap_or(1)),
                rank,
                &config.theta_grid,
                &config.d_grid,
                &config.run_settings(),
            )?;
            let outputs = write_equivalence_outputs(out, &cells).map_err(|e| io_failure(out, e))?;
            let seeds: Vec<SeedEntry> = cells
                .iter()
                .map(|c| SeedEntry {
                    label: format!("theta={},d={}", c.theta, c.d),
                    seed: c.seed,
                })
                .collect();
            (outputs, seeds, Vec::new())
        }
        StudyName::Fig2 => {
            config.validate(Experiment::Fig2, None)?;
            let spec = config.synth_spec(config.true_d.expect("validated"));
            let study =
                run_spectrum_study(&spec, config.theta_bar, &config.d_grid, &config.run_settings())?;
            let outputs = write_spectrum_outputs(out, &study).map_err(|e| io_failure(out, e))?;
            let seeds: Vec<SeedEntry> = study
                .seeds
                .iter()
                .map(|&(d, seed)| SeedEntry {
                    label: format!("d={d}"),
                    seed,
                })
                .collect();
            (outputs, seeds, vec![("closed_form_lambda".to_string(), study.closed_form_lambda)])
        }
    };
    let manifest = RunManifest {
        seeds: std::iter::once(SeedEntry {
            label: "master".into(),
            seed: config.seed,
        })
        .chain(seeds)
        .collect(),
        invocation: Invocation::Experiment { name, config },
        versions: Versions::current(),
        outputs,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        notes,
    };
    finish(out, &manifest)?;
    Ok(manifest)
}

/// Sibling files of the solve output: `<stem>_spectrum.csv` and
/// `<stem>_manifest.json`.
pub fn solve_sidecars(out: &Path) -> (PathBuf, PathBuf) {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "solution".into());
    let dir = out.parent().unwrap_or(Path::new(""));
    (
        dir.join(format!("{stem}_spectrum.csv")),
        dir.join(format!("{stem}_manifest.json")),
    )
}

pub fn solve(input: &Path, lambda: f64, out: &Path) -> Result<RunManifest, Failure> {
    let start = Instant::now();
    let input = fs::canonicalize(input).map_err(|e| Failure::usage(format!("{}: {e}", input.display())))?;
    let file = File::open(&input).map_err(|e| Failure::usage(format!("{}: {e}", input.display())))?;
    let x = parse_matrix(file).map_err(|e| Failure::usage(format!("{}: {e}", input.display())))?;
    let y = nuclear_squared_solve(&x, lambda)?;
    let singulars = svd(&y)?.singulars;

    if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    let (spectrum_path, manifest_path) = solve_sidecars(out);
    write_atomic(out, format_matrix(&y).as_bytes()).map_err(|e| io_failure(out, e))?;
    let mut spectrum = String::from("index,sigma\n");
    for (i, s) in singulars.iter().enumerate() {
        spectrum.push_str(&format!("{},{s:?}\n", i + 1));
    }
    write_atomic(&spectrum_path, spectrum.as_bytes()).map_err(|e| io_failure(&spectrum_path, e))?;

    let name = |p: &Path| p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let manifest = RunManifest {
        invocation: Invocation::Solve { input, lambda },
        versions: Versions::current(),
        seeds: Vec::new(),
        outputs: vec![name(out), name(&spectrum_path)],
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        notes: Vec::new(),
    };
    manifest
        .write_atomic(&manifest_path)
        .map_err(|e| io_failure(&manifest_path, e))?;
    Ok(manifest)
}

/// Repeats the command recorded in `manifest_path`. Without `out`, outputs
/// go where the original run put them.
pub fn replay(manifest_path: &Path, out: Option<&Path>) -> Result<RunManifest, Failure> {
    let manifest = RunManifest::read(manifest_path).map_err(Failure::usage)?;
    let home = manifest_path.parent().unwrap_or(Path::new("")).to_path_buf();
    match manifest.invocation {
        Invocation::Train { mode, config } => train(config, mode, out.unwrap_or(&home)),
        Invocation::Experiment { name, config } => experiment(name, config, out.unwrap_or(&home)),
        Invocation::Solve { input, lambda } => {
            let original = manifest
                .outputs
                .first()
                .map(|f| home.join(f))
                .ok_or_else(|| Failure::usage("solve manifest lists no outputs"))?;
            let target = match out {
                Some(dir) => dir.join(original.file_name().unwrap_or_default()),
                None => original,
            };
            solve(&input, lambda, &target)
        }
    }
}
