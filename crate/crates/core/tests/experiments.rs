use dropfact::experiments::{
    gen_synthetic, numerical_rank, run_equivalence_study, run_spectrum_study,
    write_equivalence_outputs, write_spectrum_outputs, DataRank, Method, RunSettings, SynthSpec,
    SPECTRA_HEADER, SPECTRUM_SUMMARY_HEADER,
};
use dropfact::svd;

fn spec(m: usize, n: usize, true_d: usize, noise_std: f64) -> SynthSpec {
    SynthSpec {
        m,
        n,
        true_d,
        factor_std: 0.1,
        noise_std,
        seed: 17,
    }
}

fn settings(iterations: usize) -> RunSettings {
    RunSettings {
        seed: 2,
        iterations,
        step0: None,
        step_tau: 1000.0,
    }
}

#[test]
fn synthetic_data_rank_and_determinism() {
    let (x, truth) = gen_synthetic(&spec(9, 7, 1, 0.0)).unwrap();
    assert_eq!(numerical_rank(&svd(&x).unwrap().singulars, 1e-10), 1);
    assert_eq!(truth.width(), 1);
    assert_eq!(gen_synthetic(&spec(9, 7, 1, 0.0)).unwrap().0, x);

    let (big, truth) = gen_synthetic(&spec(100, 100, 10, 0.01)).unwrap();
    assert_eq!(big.shape(), (100, 100));
    let signal = truth.product();
    let noise = big.sub(&signal).unwrap();
    let sd = (noise.frobenius_norm_sq() / 10_000.0).sqrt();
    assert!((sd - 0.01).abs() < 0.001, "noise sd {sd}");
}

#[test]
fn rank_counting_examples() {
    assert_eq!(numerical_rank(&[3.0, 2.0, 1e-12], 1e-6), 2);
    assert_eq!(numerical_rank(&[0.0; 4], 1e-6), 0);
    assert_eq!(numerical_rank(&[1.0, 0.5, 0.4], 0.45), 2);
}

#[test]
fn spectrum_study_structure() {
    let study = run_spectrum_study(&spec(12, 10, 2, 0.0), 0.9, &[3, 6], &settings(3000)).unwrap();
    assert_eq!(study.reports.len(), 6);
    for r in &study.reports {
        assert!(r.singulars.windows(2).all(|w| w[0] >= w[1]));
        assert!(r.singulars.iter().all(|&s| s >= 0.0));
    }
    let c3 = study.report(Method::ClosedForm, 3).unwrap();
    let c6 = study.report(Method::ClosedForm, 6).unwrap();
    assert_eq!(c3.singulars, c6.singulars);
    assert!((study.closed_form_lambda - 1.0 / 9.0).abs() < 1e-15);
    for d in [3, 6] {
        assert_eq!(study.report(Method::Adaptive, d).unwrap().numerical_rank, 2);
        assert!(study.report(Method::Adaptive, d).unwrap().rel_frob_dist_to_closed_form.unwrap() < 1e-2);
    }
    assert!(run_spectrum_study(&spec(5, 5, 1, 0.0), 1.0, &[2], &settings(10)).is_err());
}

#[test]
fn studies_are_bit_reproducible() {
    let a = run_spectrum_study(&spec(8, 8, 2, 0.01), 0.8, &[4], &settings(500)).unwrap();
    let b = run_spectrum_study(&spec(8, 8, 2, 0.01), 0.8, &[4], &settings(500)).unwrap();
    assert_eq!(a.reports, b.reports);

    let s = RunSettings {
        step0: Some(0.05),
        ..settings(300)
    };
    let c1 = run_equivalence_study(&spec(8, 8, 2, 0.0), DataRank::MatchWidth, &[0.3, 0.7], &[2, 3], &s)
        .unwrap();
    let c2 = run_equivalence_study(&spec(8, 8, 2, 0.0), DataRank::MatchWidth, &[0.3, 0.7], &[2, 3], &s)
        .unwrap();
    assert_eq!(c1.len(), 4);
    let order: Vec<(f64, usize)> = c1.iter().map(|c| (c.theta, c.d)).collect();
    assert_eq!(order, vec![(0.3, 2), (0.3, 3), (0.7, 2), (0.7, 3)]);
    for (x, y) in c1.iter().zip(&c2) {
        assert_eq!(x.stochastic, y.stochastic);
        assert_eq!(x.deterministic, y.deterministic);
    }
}

#[test]
fn writers_emit_expected_files() {
    let dir = tempfile::tempdir().unwrap();
    let study = run_spectrum_study(&spec(6, 6, 2, 0.0), 0.9, &[2], &settings(100)).unwrap();
    let files = write_spectrum_outputs(dir.path(), &study).unwrap();
    assert!(files.contains(&"spectra.csv".to_string()));
    let spectra = std::fs::read_to_string(dir.path().join("spectra.csv")).unwrap();
    assert_eq!(spectra.lines().next().unwrap(), SPECTRA_HEADER);
    assert_eq!(spectra.lines().count(), 1 + 3 * 6);
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().next().unwrap(), SPECTRUM_SUMMARY_HEADER);
    assert_eq!(summary.lines().count(), 4);

    let s = RunSettings {
        step0: Some(0.05),
        ..settings(50)
    };
    let cells = run_equivalence_study(&spec(6, 6, 2, 0.0), DataRank::Fixed(2), &[0.5], &[2], &s).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = write_equivalence_outputs(dir.path(), &cells).unwrap();
    assert_eq!(files.len(), 3);
    let trace = std::fs::read_to_string(dir.path().join(&files[0])).unwrap();
    assert_eq!(trace.lines().count(), 51);
}
