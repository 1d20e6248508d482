//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit status
//! when any criterion fails.

#![allow(clippy::needless_range_loop)]

use std::f64::consts::PI;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use ddfem_cli::pipeline::{
    cmd_gen_data, cmd_reproduce, cmd_solve, cmd_train, Reproduction, BASIS_FILE, FIELDS_DIR,
    REPORT_FILE, SNAPSHOTS_FILE,
};
use ddfem_core::archive::file_crc;
use ddfem_core::assembly::{ComponentLibrary, CouplingConfig, Formulation};
use ddfem_core::basis::{pod_of_matrix, Truncation};
use ddfem_core::eval::{run_basis_sweep, run_layouts, PoissonTest, ProblemSpec, StudyConfig};
use ddfem_core::fom::{
    solve_burgers_fom, solve_poisson_fom, BurgersParams, BurgersProblem, PoissonProblem,
};
use ddfem_core::grid::{build_layout, BoundaryKind, DofMap, ElementGrid};
use ddfem_core::linalg::Matrix;
use ddfem_core::sampler::{child_rng, sample_burgers_ic, BurgersIcSample};
use nalgebra::DMatrix;
use rand::Rng;

type Outcome = Result<String, String>;

fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn poisson_study(
    n_cells: usize,
    n_samples: usize,
    truncation: Truncation<f64>,
    coupling: CouplingConfig<f64>,
) -> StudyConfig<f64> {
    StudyConfig {
        label: "acceptance".into(),
        problem: ProblemSpec::Poisson {
            n_samples,
            test: PoissonTest::Spiral {
                omega: 0.45,
                gamma: 1.0,
            },
        },
        n_cells,
        seed: 42,
        truncation,
        port_split: coupling.formulation != Formulation::DgPenalty,
        coupling,
        residual_tol: 1e-10,
        parallel: false,
    }
}

fn library(cfg: &StudyConfig<f64>) -> ComponentLibrary<f64> {
    let snaps = cfg.generate_snapshots().expect("snapshots");
    ComponentLibrary::single(cfg.train(&snaps).expect("basis")).expect("library")
}

fn exactness() -> Outcome {
    let mut worst = 0.0f64;
    for form in [
        Formulation::StrongCondensation,
        Formulation::ConstrainedResidual,
    ] {
        let cfg = poisson_study(8, 40, Truncation::Full, CouplingConfig::new(form));
        let lib = library(&cfg);
        let outcomes =
            run_layouts(&cfg, &lib, &[(2, 2), (3, 3)], form).map_err(|e| e.to_string())?;
        for o in &outcomes {
            worst = worst.max(rel_l2(o.reduced.values(), o.reference.values()));
        }
    }
    verdict(
        worst <= 1e-8,
        format!("worst relative L2 error {worst:.3e} (bound 1e-8)"),
    )
}

fn dg_penalty() -> Outcome {
    let etas = [10.0, 1e2, 1e3, 1e4];
    let mut errors = Vec::new();
    let base = poisson_study(
        8,
        40,
        Truncation::Full,
        CouplingConfig::new(Formulation::DgPenalty),
    );
    let lib = library(&base);
    for eta in etas {
        let mut cfg = base.clone();
        cfg.coupling.eta = eta;
        let o = run_layouts(&cfg, &lib, &[(2, 2)], Formulation::DgPenalty)
            .map_err(|e| e.to_string())?;
        errors.push(rel_l2(o[0].reduced.values(), o[0].reference.values()));
    }
    let decreasing = errors.windows(2).all(|w| w[1] < w[0]);
    let last = errors[errors.len() - 1];
    let shown: Vec<String> = errors.iter().map(|e| format!("{e:.2e}")).collect();
    verdict(
        decreasing && last <= 1e-4,
        format!(
            "errors [{}], strictly decreasing {decreasing}, last <= 1e-4",
            shown.join(", ")
        ),
    )
}

/// Tail energy from the eigenvalues of the smaller Gram matrix.
fn gram_tail(x: &DMatrix<f64>, r: usize) -> f64 {
    let gram = if x.nrows() <= x.ncols() {
        x * x.transpose()
    } else {
        x.transpose() * x
    };
    let mut ev: Vec<f64> = gram
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .map(|v| v.max(0.0))
        .collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev[r..].iter().sum()
}

fn eckart_young() -> Outcome {
    let mut rng = child_rng(2024, 0);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let (m, n) = (rng.gen_range(2..=200), rng.gen_range(2..=200));
        let r = rng.gen_range(1..m.min(n));
        let vals: Vec<f64> = (0..m * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = Matrix::from_col_major(m, n, vals.clone());
        let (modes, _) = pod_of_matrix(&x, Truncation::Fixed(r)).map_err(|e| e.to_string())?;
        let coeffs = modes.tr_matmul(&x);
        let approx = modes.matmul(&coeffs);
        let err: f64 = x
            .as_slice()
            .iter()
            .zip(approx.as_slice())
            .map(|(a, b)| (a - b).powi(2))
            .sum();
        let tail = gram_tail(&DMatrix::from_column_slice(m, n, &vals), r);
        worst = worst.max((err - tail).abs() / tail);
    }
    verdict(
        worst <= 1e-9,
        format!("worst relative gap to the Gram oracle {worst:.3e} (bound 1e-9)"),
    )
}

fn poisson_generalisation(out: &Path) -> (Outcome, Outcome) {
    let done = match cmd_reproduce(Reproduction::PoissonSpiral, out, None) {
        Ok(d) => d,
        Err(e) => return (Err(e.to_string()), Err(e.to_string())),
    };
    let find = |name: &str| {
        done.checks
            .iter()
            .find(|c| c.name.starts_with(name))
            .expect("check present")
    };
    let (spiral, sinusoidal, ratio) = (find("spiral"), find("sinusoidal"), find("dof ratio"));
    let c4 = verdict(
        spiral.passed() && sinusoidal.passed(),
        format!(
            "spiral error {:.3e} (bound 5e-2), in-distribution sinusoidal error {:.3e} (bound 1e-2)",
            spiral.value, sinusoidal.value
        ),
    );
    let c7 = verdict(
        ratio.passed(),
        format!("dof_fom / dof_reduced = {:.2} (bound >= 10)", ratio.value),
    );
    (c4, c7)
}

fn burgers_extrapolation(out: &Path) -> Outcome {
    let done =
        cmd_reproduce(Reproduction::BurgersExtrapolation, out, None).map_err(|e| e.to_string())?;
    let r = &done.reports[0];
    let constraint = r.constraint_residual.unwrap_or(f64::NAN);
    verdict(
        r.final_error() <= 0.05 && constraint <= 1e-10,
        format!(
            "final-time error {:.3e} at t = {} (bound 5e-2), max constraint residual {:.3e} (bound 1e-10)",
            r.final_error(),
            r.times[r.times.len() - 1],
            constraint
        ),
    )
}

fn manufactured_error(n_cells: usize) -> f64 {
    let grid = ElementGrid::<f64>::new(n_cells).unwrap();
    let layout = build_layout(1, 1, "square", BoundaryKind::DirichletZero).unwrap();
    let f = |x: f64, y: f64| 2.0 * PI * PI * (PI * x).sin() * (PI * y).sin();
    let u = solve_poisson_fom(&PoissonProblem {
        layout: layout.clone(),
        grid: grid.clone(),
        source: &f,
    })
    .unwrap();
    let dm = DofMap::new(&layout, &grid);
    let exact: Vec<f64> = (0..dm.n_global())
        .map(|g| {
            let (x, y) = dm.global_coords::<f64>(g);
            (PI * x).sin() * (PI * y).sin()
        })
        .collect();
    rel_l2(u.values(), &exact)
}

/// Periodic 1-D Burgers with central differences and the midpoint rule.
fn burgers_1d(u0: &[f64], h: f64, nu: f64, dt: f64, steps: usize) -> Vec<f64> {
    let n = u0.len();
    let rhs = |u: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|j| {
                let e = u[(j + 1) % n];
                let w = u[(j + n - 1) % n];
                -(e * e - w * w) / (4.0 * h) + nu * (e - 2.0 * u[j] + w) / (h * h)
            })
            .collect()
    };
    let mut u = u0.to_vec();
    for _ in 0..steps {
        let k1 = rhs(&u);
        let mid: Vec<f64> = u.iter().zip(&k1).map(|(a, b)| a + 0.5 * dt * b).collect();
        let k2 = rhs(&mid);
        for (a, b) in u.iter_mut().zip(&k2) {
            *a += dt * b;
        }
    }
    u
}

fn fom_verification() -> Outcome {
    let errs: Vec<f64> = [8, 16, 32].iter().map(|&n| manufactured_error(n)).collect();
    let orders: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let order_ok = orders.iter().all(|o| (1.8..=2.2).contains(o));

    let grid = ElementGrid::<f64>::new(8).unwrap();
    let layout = build_layout(2, 2, "square", BoundaryKind::Periodic).unwrap();
    let params = BurgersParams {
        nu: 1e-3,
        dt: 0.01,
        t_final: 0.5,
        save_every: 10,
    };
    let ic: BurgersIcSample<f64> =
        sample_burgers_ic(&mut child_rng(77, 0), 4).map_err(|e| e.to_string())?;
    let prob = BurgersProblem::new(&layout, &grid, params, |x, y| ic.eval(x, y, (2.0, 2.0)))
        .map_err(|e| e.to_string())?;
    let traj = solve_burgers_fom(&prob).map_err(|e| e.to_string())?;
    let mut drift = 0.0f64;
    for c in 0..2 {
        let m0 = traj.states[0].mean(c);
        for s in &traj.states {
            drift = drift.max((s.mean(c) - m0).abs() / (1.0 + m0.abs()));
        }
    }

    let profile = |x: f64| 0.4 + 0.3 * (PI * x).sin() + 0.1 * (2.0 * PI * x).cos();
    let prob = BurgersProblem::new(&layout, &grid, params, |x, _| (profile(x), 0.0))
        .map_err(|e| e.to_string())?;
    let traj = solve_burgers_fom(&prob).map_err(|e| e.to_string())?;
    let nx = 16;
    let h = grid.h();
    let u0: Vec<f64> = (0..nx).map(|j| profile(j as f64 * h)).collect();
    let mut gap = 0.0f64;
    for (t, state) in traj.times.iter().zip(&traj.states) {
        let line = burgers_1d(
            &u0,
            h,
            params.nu,
            params.dt,
            (t / params.dt).round() as usize,
        );
        for i in 0..nx {
            for j in 0..nx {
                gap = gap.max((state.values()[i * nx + j] - line[j]).abs());
                gap = gap.max(state.component(1)[i * nx + j].abs());
            }
        }
    }
    verdict(
        order_ok && drift <= 1e-10 && gap <= 1e-10,
        format!(
            "orders [{:.3}, {:.3}] (in [1.8, 2.2]), mean drift {drift:.2e} (bound 1e-10), 2-D vs 1-D gap {gap:.2e} (bound 1e-10)",
            orders[0], orders[1]
        ),
    )
}

fn run_pipeline(out: &Path) -> Result<(), String> {
    let mut cfg = Reproduction::PoissonSpiral.config();
    cfg.output.dir = out.display().to_string();
    cmd_gen_data(&cfg, out).map_err(|e| e.to_string())?;
    cmd_train(&cfg, out).map_err(|e| e.to_string())?;
    cmd_solve(&cfg, out).map_err(|e| e.to_string())?;
    Ok(())
}

fn determinism(root: &Path) -> Outcome {
    let (a, b) = (root.join("run-a"), root.join("run-b"));
    run_pipeline(&a)?;
    run_pipeline(&b)?;
    let mut files = vec![SNAPSHOTS_FILE.to_string(), BASIS_FILE.to_string()];
    let mut dumps: Vec<String> = std::fs::read_dir(a.join(FIELDS_DIR))
        .map_err(|e| e.to_string())?
        .map(|d| format!("{FIELDS_DIR}/{}", d.unwrap().file_name().to_string_lossy()))
        .collect();
    dumps.sort();
    files.extend(dumps);
    let mut mismatched = Vec::new();
    for f in &files {
        let (ca, cb) = (file_crc(&a.join(f)), file_crc(&b.join(f)));
        if ca.is_err() || ca.ok() != cb.ok() {
            mismatched.push(f.clone());
        }
    }
    let csv_equal =
        std::fs::read(a.join(REPORT_FILE)).ok() == std::fs::read(b.join(REPORT_FILE)).ok();
    verdict(
        mismatched.is_empty() && csv_equal,
        format!(
            "{} archives compared, mismatched {mismatched:?}, report CSV identical {csv_equal}",
            files.len()
        ),
    )
}

fn basis_monotonicity() -> Outcome {
    let cfg = Reproduction::PoissonSpiral.config().study("sweep");
    let snaps = cfg.generate_snapshots().map_err(|e| e.to_string())?;
    let truncations = [
        Truncation::Energy(0.99),
        Truncation::Energy(0.999),
        Truncation::Energy(0.9999),
        Truncation::Full,
    ];
    let reports = run_basis_sweep(&cfg, &snaps, &truncations, (8, 8)).map_err(|e| e.to_string())?;
    let dims: Vec<usize> = reports.iter().map(|r| r.basis_dim).collect();
    let errors: Vec<f64> = reports.iter().map(|r| r.final_error()).collect();
    let dims_ok = dims.windows(2).all(|w| w[0] <= w[1]);
    let errors_ok = errors.windows(2).all(|w| w[1] <= 1.1 * w[0]);
    let full = errors[errors.len() - 1];
    let shown: Vec<String> = errors.iter().map(|e| format!("{e:.2e}")).collect();
    verdict(
        dims_ok && errors_ok && full <= 1e-8,
        format!(
            "r {dims:?}, errors [{}], untruncated error <= 1e-8",
            shown.join(", ")
        ),
    )
}

fn main() -> ExitCode {
    let dir = tempfile::tempdir().expect("temporary directory");
    let root = dir.path();
    let mut results: Vec<(usize, &str, Outcome, f64)> = Vec::new();
    let mut timed = |n: usize, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let outcome = f();
        results.push((n, name, outcome, t.elapsed().as_secs_f64()));
    };
    timed(1, "exactness oracle", &mut exactness);
    timed(2, "DG penalty consistency", &mut dg_penalty);
    timed(3, "Eckart-Young", &mut eckart_young);
    let t = Instant::now();
    let (c4, c7) = poisson_generalisation(&root.join("poisson"));
    let poisson_secs = t.elapsed().as_secs_f64();
    timed(5, "Burgers spatial extrapolation", &mut || {
        burgers_extrapolation(&root.join("burgers"))
    });
    timed(6, "FOM verification", &mut fom_verification);
    timed(8, "determinism", &mut || determinism(root));
    timed(9, "basis-size monotonicity", &mut basis_monotonicity);
    results.push((4, "Poisson source generalisation", c4, poisson_secs));
    results.push((7, "DOF reduction", c7, poisson_secs));
    results.sort_by_key(|r| r.0);

    let mut failed = 0;
    for (n, name, outcome, secs) in &results {
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} criterion {n} ({name}): {detail} [{secs:.1}s]");
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        results.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
