use ddfem_core::assembly::{ComponentLibrary, CouplingConfig, Formulation};
use ddfem_core::basis::Truncation;
use ddfem_core::eval::{
    emit_csv, reports_csv, run_basis_sweep, run_extrapolation_study, PoissonTest, ProblemSpec,
    StudyConfig, CSV_HEADER,
};
use ddfem_core::fom::BurgersParams;
use ddfem_core::sampler::SourceSample;
use ddfem_core::Error;

fn poisson_cfg(
    n_cells: usize,
    n_samples: usize,
    form: Formulation,
    trunc: Truncation<f64>,
) -> StudyConfig<f64> {
    StudyConfig {
        label: "test".into(),
        problem: ProblemSpec::Poisson {
            n_samples,
            test: PoissonTest::Sinusoidal(SourceSample {
                k: (0.2, -0.3),
                theta: 0.4,
            }),
        },
        n_cells,
        seed: 5,
        truncation: trunc,
        port_split: form != Formulation::DgPenalty,
        coupling: CouplingConfig::new(form),
        residual_tol: 1e-10,
        parallel: false,
    }
}

#[test]
fn layouts_are_reported_smallest_first_with_constant_dg_ratio() {
    let cfg = poisson_cfg(16, 40, Formulation::DgPenalty, Truncation::Fixed(12));
    let snaps = cfg.generate_snapshots().unwrap();
    let lib = ComponentLibrary::single(cfg.train(&snaps).unwrap()).unwrap();
    let reps =
        run_extrapolation_study(&cfg, &lib, &[(6, 6), (4, 4)], Formulation::DgPenalty).unwrap();
    assert_eq!((reps[0].rows, reps[1].rows), (4, 6));
    for r in &reps {
        assert_eq!(r.dof_reduced, r.rows * r.cols * 12);
        assert_eq!(r.dof_ratio, r.dof_fom as f64 / r.dof_reduced as f64);
        assert!(r.final_error().is_finite());
    }
    let drift = (reps[0].dof_ratio - reps[1].dof_ratio).abs() / reps[0].dof_ratio;
    assert!(drift <= 0.05, "ratio drift {drift}");
}

#[test]
fn parallel_study_matches_sequential() {
    let mut cfg = poisson_cfg(
        4,
        20,
        Formulation::StrongCondensation,
        Truncation::Energy(0.999),
    );
    let snaps = cfg.generate_snapshots().unwrap();
    let lib = ComponentLibrary::single(cfg.train(&snaps).unwrap()).unwrap();
    let layouts = [(3, 2), (2, 2), (1, 3)];
    let seq =
        run_extrapolation_study(&cfg, &lib, &layouts, Formulation::StrongCondensation).unwrap();
    cfg.parallel = true;
    let par =
        run_extrapolation_study(&cfg, &lib, &layouts, Formulation::StrongCondensation).unwrap();
    assert_eq!(reports_csv(&seq), reports_csv(&par));
}

#[test]
fn basis_sweep_is_sorted_and_exact_when_untruncated() {
    let cfg = poisson_cfg(4, 30, Formulation::StrongCondensation, Truncation::Full);
    let snaps = cfg.generate_snapshots().unwrap();
    let sweep = [
        Truncation::Full,
        Truncation::Energy(0.999),
        Truncation::Energy(0.9),
    ];
    let reps = run_basis_sweep(&cfg, &snaps, &sweep, (3, 3)).unwrap();
    let labels: Vec<&str> = reps.iter().map(|r| r.truncation.as_str()).collect();
    assert_eq!(labels, ["energy:0.9", "energy:0.999", "full"]);
    assert!(reps.windows(2).all(|w| w[0].basis_dim <= w[1].basis_dim));
    assert!(reps[2].final_error() <= 1e-8, "{}", reps[2].final_error());
    assert!(reps[2].max_jump <= 1e-12);
}

#[test]
fn burgers_study_reports_every_saved_time() {
    let params = BurgersParams {
        nu: 1e-2,
        dt: 0.01,
        t_final: 0.1,
        save_every: 5,
    };
    let cfg = StudyConfig {
        label: "burgers".into(),
        problem: ProblemSpec::Burgers {
            n_runs: 3,
            k_max: 2,
            params,
            test_seed: 9,
        },
        n_cells: 4,
        seed: 1,
        truncation: Truncation::Full,
        port_split: true,
        coupling: CouplingConfig::new(Formulation::ConstrainedResidual),
        residual_tol: 1e-10,
        parallel: false,
    };
    let snaps = cfg.generate_snapshots().unwrap();
    let lib = ComponentLibrary::single(cfg.train(&snaps).unwrap()).unwrap();
    let reps =
        run_extrapolation_study(&cfg, &lib, &[(2, 2)], Formulation::ConstrainedResidual).unwrap();
    let r = &reps[0];
    assert_eq!(r.times, vec![0.0, 0.05, 0.1]);
    assert_eq!(r.errors.len(), 3);
    assert!(r.max_error() <= 1e-8, "{:?}", r.errors);
    assert!(r.constraint_residual.unwrap() <= 1e-10);
    assert!(r.mean_drift.unwrap() <= 1e-8);
    assert_eq!(r.dof_fom, 2 * 8 * 8);

    let err = run_extrapolation_study(&cfg, &lib, &[(2, 2)], Formulation::DgPenalty).unwrap_err();
    assert!(matches!(
        err,
        Error::Layout {
            rows: 2,
            cols: 2,
            ..
        }
    ));
}

#[test]
fn csv_file_has_one_row_per_report() {
    let cfg = poisson_cfg(4, 10, Formulation::DgPenalty, Truncation::Energy(0.99));
    let snaps = cfg.generate_snapshots().unwrap();
    let lib = ComponentLibrary::single(cfg.train(&snaps).unwrap()).unwrap();
    let reps =
        run_extrapolation_study(&cfg, &lib, &[(2, 2), (2, 3)], Formulation::DgPenalty).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.csv");
    emit_csv(&reps, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let n_cols = CSV_HEADER.split(',').count();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines.iter().all(|l| l.split(',').count() == n_cols));
    assert!(emit_csv(&reps, &dir.path().join("missing/r.csv")).is_err());
}
