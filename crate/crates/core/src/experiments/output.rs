//! Plot-ready CSV for the studies. Every writer returns the file names it
//! created, relative to the output directory.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use super::{EquivalenceCell, SpectrumStudy};

pub const EQUIVALENCE_SUMMARY_HEADER: &str = "theta,d,seed,max_rel_dev,mean_rel_dev,\
rel_dev_of_means,independent_mean_rel_dev,final_stochastic_run_obj,final_deterministic_run_obj";
pub const SPECTRA_HEADER: &str = "method,d,index,sigma";
pub const SPECTRUM_SUMMARY_HEADER: &str = "method,d,numerical_rank,rel_frob_dist_to_closed_form";

fn create(dir: &Path, name: &str) -> io::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

pub fn trace_file_name(theta: f64, d: usize, mode: &str) -> String {
    format!("trace_theta{theta}_d{d}_{mode}.csv")
}

/// Two trace files per cell plus `summary.csv`. Deviation columns compare
/// the EMA of the stochastic objective with the deterministic objective after
/// burn-in: `max_rel_dev`, `mean_rel_dev` and `rel_dev_of_means` against the
/// same iterate, `independent_mean_rel_dev` against the deterministic run.
pub fn write_equivalence_outputs(dir: &Path, cells: &[EquivalenceCell]) -> io::Result<Vec<String>> {
    let mut written = Vec::with_capacity(2 * cells.len() + 1);
    for cell in cells {
        for (mode, trace) in [("stochastic", &cell.stochastic), ("deterministic", &cell.deterministic)] {
            let name = trace_file_name(cell.theta, cell.d, mode);
            let mut out = create(dir, &name)?;
            trace.write_csv(&mut out)?;
            out.flush()?;
            written.push(name);
        }
    }
    let mut out = create(dir, "summary.csv")?;
    writeln!(out, "{EQUIVALENCE_SUMMARY_HEADER}")?;
    for cell in cells {
        let same = cell.same_iterate_tracking();
        let indep = cell.independent_tracking();
        writeln!(
            out,
            "{},{},{},{:?},{:?},{:?},{:?},{:?},{:?}",
            cell.theta,
            cell.d,
            cell.seed,
            same.max_rel_dev,
            same.mean_rel_dev,
            same.rel_dev_of_means,
            indep.mean_rel_dev,
            cell.stochastic.final_objective().unwrap_or(f64::NAN),
            cell.deterministic.final_objective().unwrap_or(f64::NAN),
        )?;
    }
    out.flush()?;
    written.push("summary.csv".into());
    Ok(written)
}

/// `spectra.csv`, `summary.csv`, and `closed_form.csv` holding the weight of
/// the closed-form solve and the data spectrum.
pub fn write_spectrum_outputs(dir: &Path, study: &SpectrumStudy) -> io::Result<Vec<String>> {
    let mut out = create(dir, "spectra.csv")?;
    writeln!(out, "{SPECTRA_HEADER}")?;
    for r in &study.reports {
        for (i, s) in r.singulars.iter().enumerate() {
            writeln!(out, "{},{},{},{s:?}", r.method.label(), r.d, i + 1)?;
        }
    }
    out.flush()?;

    let mut out = create(dir, "summary.csv")?;
    writeln!(out, "{SPECTRUM_SUMMARY_HEADER}")?;
    for r in &study.reports {
        let dist = r
            .rel_frob_dist_to_closed_form
            .map(|v| format!("{v:?}"))
            .unwrap_or_default();
        writeln!(out, "{},{},{},{}", r.method.label(), r.d, r.numerical_rank, dist)?;
    }
    out.flush()?;

    let mut out = create(dir, "closed_form.csv")?;
    writeln!(out, "theta_bar,lambda,index,data_sigma")?;
    for (i, s) in study.data_singulars.iter().enumerate() {
        writeln!(out, "{},{:?},{},{s:?}", study.theta_bar, study.closed_form_lambda, i + 1)?;
    }
    out.flush()?;

    Ok(vec!["spectra.csv".into(), "summary.csv".into(), "closed_form.csv".into()])
}
