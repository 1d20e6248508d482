//! Error metrics, layout and basis-size studies, and CSV reports.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use crate::assembly::{
    assemble_constrained_transport, assemble_poisson, reduced_load, ComponentLibrary,
    CouplingConfig, Formulation, ReducedSystem,
};
use crate::basis::{compute_pod, split_port_basis, ElementBasis, Truncation};
use crate::error::{Error, Result};
use crate::fom::{
    solve_burgers_fom, BurgersParams, BurgersProblem, LinearSolverKind, PoissonFom, StateField,
};
use crate::grid::{build_layout, BoundaryKind, ElementGrid, GlobalLayout};
use crate::reduced_solver::{reconstruct_global, solve_poisson_reduced_tol, ReducedBurgers};
use crate::sampler::{
    child_rng, eval_sinusoidal_source, eval_spiral_source, generate_burgers_patch_snapshots,
    generate_poisson_patch_snapshots, sample_burgers_ic, BurgersIcSample, SnapshotSet,
    SourceSample, SpiralParams,
};
use crate::scalar::Real;

/// `‖approx − reference‖₂ / ‖reference‖₂` over all entries.
pub fn relative_l2_error<T: Real>(approx: &[T], reference: &[T]) -> Result<T> {
    if approx.len() != reference.len() {
        return Err(Error::DimensionMismatch(format!(
            "approx has {}, reference {}",
            approx.len(),
            reference.len()
        )));
    }
    let (num, den) = approx
        .iter()
        .zip(reference)
        .fold((T::zero(), T::zero()), |(n, d), (&a, &r)| {
            (n + (a - r) * (a - r), d + r * r)
        });
    if den == T::zero() {
        return Err(Error::UndefinedMetric);
    }
    Ok((num / den).sqrt())
}

/// Test forcing of a Poisson study.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PoissonTest<T> {
    /// Spiral centred on the layout.
    Spiral {
        omega: T,
        gamma: T,
    },
    Sinusoidal(SourceSample<T>),
}

impl<T: Real> PoissonTest<T> {
    /// Source function on a layout of the given extent.
    pub fn source(&self, layout: &GlobalLayout) -> Box<dyn Fn(T, T) -> T + Send + Sync> {
        match *self {
            PoissonTest::Spiral { omega, gamma } => {
                let (w, h) = layout.extent();
                let half = T::lit(0.5);
                let p = SpiralParams {
                    omega,
                    center: (T::from_usize_lossy(w) * half, T::from_usize_lossy(h) * half),
                    gamma,
                };
                Box::new(move |x, y| eval_spiral_source(&p, x, y))
            }
            PoissonTest::Sinusoidal(s) => Box::new(move |x, y| eval_sinusoidal_source(&s, x, y)),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PoissonTest::Spiral { .. } => "spiral",
            PoissonTest::Sinusoidal(_) => "sinusoidal",
        }
    }
}

/// Training data and test case of a study.
#[derive(Clone, Debug, PartialEq)]
pub enum ProblemSpec<T> {
    Poisson {
        n_samples: usize,
        test: PoissonTest<T>,
    },
    Burgers {
        n_runs: usize,
        k_max: usize,
        params: BurgersParams<T>,
        /// Seed of the test initial condition, which is periodic over the
        /// whole test layout.
        test_seed: u64,
    },
}

impl<T> ProblemSpec<T> {
    pub fn name(&self) -> &'static str {
        match self {
            ProblemSpec::Poisson { .. } => "poisson",
            ProblemSpec::Burgers { .. } => "burgers",
        }
    }

    pub fn n_train(&self) -> usize {
        match self {
            ProblemSpec::Poisson { n_samples, .. } => *n_samples,
            ProblemSpec::Burgers { n_runs, .. } => *n_runs,
        }
    }

    pub fn boundary(&self) -> BoundaryKind {
        match self {
            ProblemSpec::Poisson { .. } => BoundaryKind::DirichletZero,
            ProblemSpec::Burgers { .. } => BoundaryKind::Periodic,
        }
    }
}

/// Everything a study needs besides the layouts it is evaluated on.
#[derive(Clone, Debug, PartialEq)]
pub struct StudyConfig<T> {
    pub label: String,
    pub problem: ProblemSpec<T>,
    pub n_cells: usize,
    pub seed: u64,
    pub truncation: Truncation<T>,
    /// Interior/port/vertex blocks instead of one monolithic POD.
    pub port_split: bool,
    pub coupling: CouplingConfig<T>,
    /// Relative residual bound of the online linear solve.
    pub residual_tol: T,
    /// Evaluate layouts concurrently; report order is unchanged.
    pub parallel: bool,
}

/// Text form of a truncation rule, e.g. `energy:0.9999`, `fixed:12`, `full`.
pub fn truncation_label<T: Real>(t: Truncation<T>) -> String {
    match t {
        Truncation::Energy(e) => format!("energy:{}", e.as_f64()),
        Truncation::Fixed(r) => format!("fixed:{r}"),
        Truncation::Full => "full".into(),
    }
}

fn truncation_key<T: Real>(t: &Truncation<T>) -> (u8, f64) {
    match *t {
        Truncation::Energy(e) => (0, e.as_f64()),
        Truncation::Fixed(r) => (1, r as f64),
        Truncation::Full => (2, 0.0),
    }
}

impl<T: Real> StudyConfig<T> {
    pub fn grid(&self) -> Result<ElementGrid<T>> {
        ElementGrid::new(self.n_cells)
    }

    /// Runs the training patches of the study.
    pub fn generate_snapshots(&self) -> Result<SnapshotSet<T>> {
        let grid = self.grid()?;
        match &self.problem {
            ProblemSpec::Poisson { n_samples, .. } => {
                generate_poisson_patch_snapshots(*n_samples, &grid, self.seed)
            }
            ProblemSpec::Burgers {
                n_runs,
                k_max,
                params,
                ..
            } => generate_burgers_patch_snapshots(*n_runs, &grid, *params, *k_max, self.seed),
        }
    }

    /// Compresses snapshots with the configured truncation and basis form.
    pub fn train(&self, snapshots: &SnapshotSet<T>) -> Result<ElementBasis<T>> {
        train_basis(snapshots, self.truncation, self.port_split)
    }

    fn layout(&self, rows: usize, cols: usize) -> Result<GlobalLayout> {
        build_layout(rows, cols, "square", self.problem.boundary())
    }
}

pub fn train_basis<T: Real>(
    snapshots: &SnapshotSet<T>,
    trunc: Truncation<T>,
    port_split: bool,
) -> Result<ElementBasis<T>> {
    Ok(if port_split {
        ElementBasis::Split(split_port_basis(snapshots, trunc)?)
    } else {
        ElementBasis::Monolithic(compute_pod(snapshots, trunc)?)
    })
}

/// Named singular value spectra of a basis, one per compressed block.
pub fn basis_spectra<T: Real>(basis: &ElementBasis<T>) -> Vec<(String, Vec<f64>)> {
    let conv = |s: &[T]| s.iter().map(|v| v.as_f64()).collect::<Vec<_>>();
    let ty = basis.element_type();
    match basis {
        ElementBasis::Monolithic(b) => vec![(ty.to_string(), conv(&b.singular_values))],
        ElementBasis::Split(b) => b
            .fields
            .iter()
            .enumerate()
            .flat_map(|(f, blocks)| {
                [
                    (
                        format!("{ty}.f{f}.interior"),
                        conv(&blocks.interior.singular_values),
                    ),
                    (
                        format!("{ty}.f{f}.vertical"),
                        conv(&blocks.vertical.singular_values),
                    ),
                    (
                        format!("{ty}.f{f}.horizontal"),
                        conv(&blocks.horizontal.singular_values),
                    ),
                ]
            })
            .collect(),
    }
}

/// Outcome of one reduced solve compared with the full-order model.
#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub label: String,
    pub problem: String,
    pub formulation: Formulation,
    pub rows: usize,
    pub cols: usize,
    pub n_cells: usize,
    pub n_train: usize,
    pub seed: u64,
    pub truncation: String,
    pub eta: Option<f64>,
    pub constraint_tol: Option<f64>,
    /// Columns of the element bases, summed over element types.
    pub basis_dim: usize,
    pub dof_fom: usize,
    pub dof_reduced: usize,
    pub dof_ratio: f64,
    /// Saved times (a single `0` for Poisson).
    pub times: Vec<f64>,
    /// Relative L2 error at each saved time.
    pub errors: Vec<f64>,
    /// Largest disagreement between element copies of a node.
    pub max_jump: f64,
    /// Largest relative `‖C c‖ / ‖c‖` (constrained formulation).
    pub constraint_residual: Option<f64>,
    /// Largest change of a component mean between the first and last saved
    /// reduced states, relative to the RMS of the first (Burgers).
    pub mean_drift: Option<f64>,
    pub spectra: Vec<(String, Vec<f64>)>,
    /// Assembly of the reduced system.
    pub offline_seconds: f64,
    /// Reduced load, solve or integration, and reconstruction.
    pub online_seconds: f64,
    pub fom_seconds: f64,
}

impl RunReport {
    pub fn final_error(&self) -> f64 {
        self.errors.last().copied().unwrap_or(f64::NAN)
    }

    pub fn max_error(&self) -> f64 {
        self.errors.iter().copied().fold(f64::NAN, f64::max)
    }

    pub fn speedup(&self) -> f64 {
        self.fom_seconds / self.online_seconds
    }
}

/// Full-order reference on one layout.
pub enum Reference<T> {
    Poisson {
        field: StateField<T>,
        n_free: usize,
    },
    Burgers {
        initial: StateField<T>,
        times: Vec<T>,
        states: Vec<StateField<T>>,
    },
}

impl<T: Real> Reference<T> {
    /// Full-order field at the last saved time.
    pub fn final_field(&self) -> &StateField<T> {
        match self {
            Reference::Poisson { field, .. } => field,
            Reference::Burgers { states, .. } => states.last().expect("at least the initial state"),
        }
    }

    /// Unknowns of the full-order solve.
    pub fn n_dofs(&self) -> usize {
        match self {
            Reference::Poisson { n_free, .. } => *n_free,
            Reference::Burgers { initial, .. } => initial.values().len(),
        }
    }
}

/// Solves the full-order problem of a study on `layout`; returns the wall
/// time alongside.
pub fn compute_reference<T: Real>(
    cfg: &StudyConfig<T>,
    layout: &GlobalLayout,
) -> Result<(Reference<T>, f64)> {
    let grid = cfg.grid()?;
    let t = Instant::now();
    let r = match &cfg.problem {
        ProblemSpec::Poisson { test, .. } => {
            let fom = PoissonFom::new(layout, &grid, LinearSolverKind::Auto)?;
            let f = test.source(layout);
            Reference::Poisson {
                field: fom.solve_source(&*f)?,
                n_free: fom.n_free(),
            }
        }
        ProblemSpec::Burgers {
            k_max,
            params,
            test_seed,
            ..
        } => {
            let problem = burgers_test_problem(layout, &grid, *params, *k_max, *test_seed)?;
            let traj = solve_burgers_fom(&problem)?;
            Reference::Burgers {
                initial: problem.initial,
                times: traj.times,
                states: traj.states,
            }
        }
    };
    Ok((r, t.elapsed().as_secs_f64()))
}

/// Periodic test problem whose initial condition is drawn from `test_seed`
/// with the layout extent as period.
pub fn burgers_test_problem<T: Real>(
    layout: &GlobalLayout,
    grid: &ElementGrid<T>,
    params: BurgersParams<T>,
    k_max: usize,
    test_seed: u64,
) -> Result<BurgersProblem<T>> {
    let ic: BurgersIcSample<T> = sample_burgers_ic(&mut child_rng(test_seed, 0), k_max)?;
    let (w, h) = layout.extent();
    let period = (T::from_usize_lossy(w), T::from_usize_lossy(h));
    BurgersProblem::new(layout, grid, params, |x, y| ic.eval(x, y, period))
}

fn f64s<T: Real>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}

/// Assembles, solves and compares one layout against its reference.
pub fn evaluate_layout<T: Real>(
    cfg: &StudyConfig<T>,
    library: &ComponentLibrary<T>,
    layout: &GlobalLayout,
    formulation: Formulation,
    reference: &Reference<T>,
    fom_seconds: f64,
) -> Result<RunReport> {
    Ok(evaluate_layout_with_field(cfg, library, layout, formulation, reference, fom_seconds)?.0)
}

/// [`evaluate_layout`] that also returns the reconstructed reduced field at
/// the last saved time.
pub fn evaluate_layout_with_field<T: Real>(
    cfg: &StudyConfig<T>,
    library: &ComponentLibrary<T>,
    layout: &GlobalLayout,
    formulation: Formulation,
    reference: &Reference<T>,
    fom_seconds: f64,
) -> Result<(RunReport, StateField<T>)> {
    let coupling = CouplingConfig {
        formulation,
        ..cfg.coupling
    };
    coupling.validate()?;
    let t_off = Instant::now();
    let system = match &cfg.problem {
        ProblemSpec::Poisson { .. } => assemble_poisson(layout, library, &coupling)?,
        ProblemSpec::Burgers { .. } => {
            if formulation != Formulation::ConstrainedResidual {
                return Err(Error::Config(format!(
                    "Burgers supports constrained_residual only, got {formulation}"
                )));
            }
            assemble_constrained_transport(layout, library, coupling.constraint_tol)?
        }
    };
    let offline_seconds = t_off.elapsed().as_secs_f64();
    let t_on = Instant::now();
    let outcome = match (&cfg.problem, reference) {
        (ProblemSpec::Poisson { test, .. }, Reference::Poisson { field: u_ref, .. }) => {
            poisson_online(&system, layout, library, test, u_ref, cfg.residual_tol)?
        }
        (
            ProblemSpec::Burgers { params, .. },
            Reference::Burgers {
                initial,
                states,
                times,
            },
        ) => burgers_online(&system, *params, initial, times, states)?,
        _ => {
            return Err(Error::Config(
                "reference does not match the study problem".into(),
            ))
        }
    };
    let online_seconds = t_on.elapsed().as_secs_f64();
    if let Some(k) = outcome.errors.iter().position(|e| !e.is_finite()) {
        return Err(Error::Divergence { step: k });
    }
    let dof_fom = reference.n_dofs();
    let dof_reduced = system.n_red();
    let types: Vec<&str> = library.types().collect();
    let mut basis_dim = 0;
    let mut spectra = Vec::new();
    for t in types {
        let b = library.get(t)?;
        basis_dim += b.dim();
        spectra.extend(basis_spectra(b));
    }
    let report = RunReport {
        label: cfg.label.clone(),
        problem: cfg.problem.name().into(),
        formulation,
        rows: layout.rows(),
        cols: layout.cols(),
        n_cells: cfg.n_cells,
        n_train: cfg.problem.n_train(),
        seed: cfg.seed,
        truncation: truncation_label(cfg.truncation),
        eta: (formulation == Formulation::DgPenalty).then(|| coupling.eta.as_f64()),
        constraint_tol: (formulation == Formulation::ConstrainedResidual)
            .then(|| coupling.constraint_tol.as_f64()),
        basis_dim,
        dof_fom,
        dof_reduced,
        dof_ratio: dof_fom as f64 / dof_reduced as f64,
        times: outcome.times,
        errors: outcome.errors,
        max_jump: outcome.max_jump,
        constraint_residual: outcome.constraint_residual,
        mean_drift: outcome.mean_drift,
        spectra,
        offline_seconds,
        online_seconds,
        fom_seconds,
    };
    Ok((report, outcome.field))
}

struct Online<T> {
    field: StateField<T>,
    times: Vec<f64>,
    errors: Vec<f64>,
    max_jump: f64,
    constraint_residual: Option<f64>,
    mean_drift: Option<f64>,
}

fn constraint_violation<T: Real>(system: &ReducedSystem<T>, c: &[T]) -> Option<f64> {
    system.constraints().map(|k| {
        let n = crate::linalg::norm2(c);
        let r = k.residual(c);
        (if n > T::zero() { r / n } else { r }).as_f64()
    })
}

fn poisson_online<T: Real>(
    system: &ReducedSystem<T>,
    layout: &GlobalLayout,
    library: &ComponentLibrary<T>,
    test: &PoissonTest<T>,
    u_ref: &StateField<T>,
    tol: T,
) -> Result<Online<T>> {
    let f = test.source(layout);
    let load = reduced_load(layout, library, &*f)?;
    let state = solve_poisson_reduced_tol(system, &load, tol)?;
    let rec = reconstruct_global(system, &state);
    let err = relative_l2_error(rec.field.values(), u_ref.values())?;
    Ok(Online {
        field: rec.field,
        times: vec![0.0],
        errors: vec![err.as_f64()],
        max_jump: rec.max_jump.as_f64(),
        constraint_residual: constraint_violation(system, &state.coords),
        mean_drift: None,
    })
}

fn burgers_online<T: Real>(
    system: &ReducedSystem<T>,
    params: BurgersParams<T>,
    initial: &StateField<T>,
    times: &[T],
    states: &[StateField<T>],
) -> Result<Online<T>> {
    let integrator = ReducedBurgers::new(system, params)?;
    let traj = integrator.run(integrator.initial_state(initial)?)?;
    let mut errors = Vec::with_capacity(states.len());
    let mut max_jump = T::zero();
    let mut fields = Vec::with_capacity(states.len());
    for (s, u_ref) in traj.states.iter().zip(states) {
        let rec = reconstruct_global(system, s);
        errors.push(relative_l2_error(rec.field.values(), u_ref.values())?.as_f64());
        max_jump = max_jump.max(rec.max_jump);
        fields.push(rec.field);
    }
    let first = &fields[0];
    let last = &fields[fields.len() - 1];
    let rms = (first.values().iter().map(|&v| v * v).sum::<T>()
        / T::from_usize_lossy(first.values().len()))
    .sqrt();
    let drift = (0..first.n_components())
        .map(|c| (last.mean(c) - first.mean(c)).abs())
        .fold(T::zero(), T::max);
    let mean_drift = if rms > T::zero() { drift / rms } else { drift };
    let field = fields.pop().expect("at least the initial state");
    Ok(Online {
        field,
        times: f64s(times),
        errors,
        max_jump: max_jump.as_f64(),
        constraint_residual: Some(traj.max_constraint_residual.as_f64()),
        mean_drift: Some(mean_drift.as_f64()),
    })
}

/// Report of one layout with the final reduced and full-order fields.
#[derive(Clone, Debug)]
pub struct LayoutOutcome<T> {
    pub report: RunReport,
    pub reduced: StateField<T>,
    pub reference: StateField<T>,
}

/// Evaluates a trained library on each layout, smallest area first, keeping
/// the final fields. Errors carry the failing layout.
pub fn run_layouts<T: Real>(
    cfg: &StudyConfig<T>,
    library: &ComponentLibrary<T>,
    layouts: &[(usize, usize)],
    formulation: Formulation,
) -> Result<Vec<LayoutOutcome<T>>> {
    let mut order: Vec<(usize, usize)> = layouts.to_vec();
    order.sort_by_key(|&(m, n)| (m * n, m, n));
    order.dedup();
    let one = |&(rows, cols): &(usize, usize)| -> Result<LayoutOutcome<T>> {
        let wrap = |e| Error::Layout {
            rows,
            cols,
            source: Box::new(e),
        };
        let layout = cfg.layout(rows, cols).map_err(wrap)?;
        let (reference, fom_s) = compute_reference(cfg, &layout).map_err(wrap)?;
        let (report, reduced) =
            evaluate_layout_with_field(cfg, library, &layout, formulation, &reference, fom_s)
                .map_err(wrap)?;
        Ok(LayoutOutcome {
            report,
            reduced,
            reference: reference.final_field().clone(),
        })
    };
    if cfg.parallel {
        order.par_iter().map(one).collect()
    } else {
        order.iter().map(one).collect()
    }
}

/// Evaluates a trained library on each layout, smallest area first; each
/// report carries its own full-order comparison.
pub fn run_extrapolation_study<T: Real>(
    cfg: &StudyConfig<T>,
    library: &ComponentLibrary<T>,
    layouts: &[(usize, usize)],
    formulation: Formulation,
) -> Result<Vec<RunReport>> {
    Ok(run_layouts(cfg, library, layouts, formulation)?
        .into_iter()
        .map(|o| o.report)
        .collect())
}

/// Trains one basis per truncation rule from the same snapshots and
/// evaluates each on `layout`; reports are sorted by truncation (energy
/// thresholds ascending, then fixed sizes, then untruncated).
pub fn run_basis_sweep<T: Real>(
    cfg: &StudyConfig<T>,
    snapshots: &SnapshotSet<T>,
    truncations: &[Truncation<T>],
    (rows, cols): (usize, usize),
) -> Result<Vec<RunReport>> {
    let mut order = truncations.to_vec();
    order.sort_by(|a, b| {
        truncation_key(a)
            .partial_cmp(&truncation_key(b))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let wrap = |e| Error::Layout {
        rows,
        cols,
        source: Box::new(e),
    };
    let layout = cfg.layout(rows, cols).map_err(wrap)?;
    let (reference, fom_s) = compute_reference(cfg, &layout).map_err(wrap)?;
    let one = |t: &Truncation<T>| -> Result<RunReport> {
        let sub = StudyConfig {
            truncation: *t,
            ..cfg.clone()
        };
        let library = ComponentLibrary::single(sub.train(snapshots)?)?;
        evaluate_layout(
            &sub,
            &library,
            &layout,
            cfg.coupling.formulation,
            &reference,
            fom_s,
        )
        .map_err(wrap)
    };
    if cfg.parallel {
        order.par_iter().map(one).collect()
    } else {
        order.iter().map(one).collect()
    }
}

/// Columns of the report CSV, in order.
pub const CSV_HEADER: &str = "label,problem,formulation,rows,cols,n_cells,n_train,seed,truncation,eta,constraint_tol,\
basis_dim,dof_fom,dof_reduced,dof_ratio,final_time,final_error,max_error,max_jump,constraint_residual,mean_drift,errors";

/// Columns of the timing CSV, in order.
pub const TIMING_HEADER: &str =
    "label,problem,formulation,rows,cols,truncation,offline_seconds,online_seconds,fom_seconds";

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Report CSV text: fixed header, one row per report, 17 significant digits
/// for every float. `errors` holds the per-time errors separated by `;`.
pub fn reports_csv(reports: &[RunReport]) -> String {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in reports {
        let errors: Vec<String> = r.errors.iter().map(|&e| num(e)).collect();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            quote(&r.label),
            r.problem,
            r.formulation,
            r.rows,
            r.cols,
            r.n_cells,
            r.n_train,
            r.seed,
            r.truncation,
            opt(r.eta),
            opt(r.constraint_tol),
            r.basis_dim,
            r.dof_fom,
            r.dof_reduced,
            num(r.dof_ratio),
            num(r.times.last().copied().unwrap_or(0.0)),
            num(r.final_error()),
            num(r.max_error()),
            num(r.max_jump),
            opt(r.constraint_residual),
            opt(r.mean_drift),
            errors.join(";"),
        );
    }
    out
}

/// Wall-clock CSV, kept apart so the report CSV stays reproducible.
pub fn timings_csv(reports: &[RunReport]) -> String {
    let mut out = String::new();
    out.push_str(TIMING_HEADER);
    out.push('\n');
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            quote(&r.label),
            r.problem,
            r.formulation,
            r.rows,
            r.cols,
            r.truncation,
            num(r.offline_seconds),
            num(r.online_seconds),
            num(r.fom_seconds),
        );
    }
    out
}

pub fn emit_csv(reports: &[RunReport], path: &Path) -> Result<()> {
    std::fs::write(path, reports_csv(reports))?;
    Ok(())
}

pub fn emit_timings_csv(reports: &[RunReport], path: &Path) -> Result<()> {
    std::fs::write(path, timings_csv(reports))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn identical_fields_have_zero_error() {
        let a = [1.0, -2.0, 3.0];
        assert_eq!(relative_l2_error(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn scaled_reference_gives_scale_offset() {
        let r = [0.5, -1.5, 2.0, 4.0];
        let a: Vec<f64> = r.iter().map(|x| 1.01 * x).collect();
        assert!((relative_l2_error(&a, &r).unwrap() - 0.01).abs() < 1e-12);
    }

    #[test]
    fn zero_reference_is_undefined() {
        assert!(matches!(
            relative_l2_error(&[1.0], &[0.0]),
            Err(Error::UndefinedMetric)
        ));
        assert!(matches!(
            relative_l2_error(&[1.0, 2.0], &[1.0]),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn matches_reverse_order_summation() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let n = rng.gen_range(1..500);
            let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut num = 0.0;
            let mut den = 0.0;
            for i in (0..n).rev() {
                num += (a[i] - b[i]).powi(2);
                den += b[i].powi(2);
            }
            let oracle = (num / den).sqrt();
            let got = relative_l2_error(&a, &b).unwrap();
            assert!((got - oracle).abs() <= 1e-12 * oracle);
        }
    }

    fn report(label: &str, errors: Vec<f64>) -> RunReport {
        RunReport {
            label: label.into(),
            problem: "poisson".into(),
            formulation: Formulation::DgPenalty,
            rows: 2,
            cols: 3,
            n_cells: 4,
            n_train: 10,
            seed: 7,
            truncation: "energy:0.9999".into(),
            eta: Some(10.0),
            constraint_tol: None,
            basis_dim: 5,
            dof_fom: 77,
            dof_reduced: 30,
            dof_ratio: 77.0 / 30.0,
            times: (0..errors.len()).map(|i| i as f64 * 0.1).collect(),
            errors,
            max_jump: 1.0 / 3.0,
            constraint_residual: None,
            mean_drift: Some(std::f64::consts::PI * 1e-9),
            spectra: vec![],
            offline_seconds: 0.5,
            online_seconds: 0.25,
            fom_seconds: 1.0,
        }
    }

    #[test]
    fn empty_report_list_is_header_only() {
        assert_eq!(reports_csv(&[]), format!("{CSV_HEADER}\n"));
    }

    #[test]
    fn csv_rows_round_trip_floats() {
        let reps = vec![
            report("a", vec![0.1, 1.0 / 7.0]),
            report("b,c", vec![2.0f64.sqrt()]),
        ];
        let text = reports_csv(&reps);
        let header: Vec<&str> = CSV_HEADER.split(',').collect();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
        let row = lines[1].split(',').collect::<Vec<_>>();
        assert_eq!(row.len(), header.len());
        assert_eq!(row[col("dof_ratio")].parse::<f64>().unwrap(), 77.0 / 30.0);
        assert_eq!(row[col("max_jump")].parse::<f64>().unwrap(), 1.0 / 3.0);
        assert_eq!(
            row[col("mean_drift")].parse::<f64>().unwrap(),
            std::f64::consts::PI * 1e-9
        );
        let errs: Vec<f64> = row[col("errors")]
            .split(';')
            .map(|s| s.parse().unwrap())
            .collect();
        assert_eq!(errs, vec![0.1, 1.0 / 7.0]);
        assert_eq!(row[col("constraint_tol")], "");
        assert!(lines[2].starts_with("\"b,c\","));
    }

    #[test]
    fn timings_are_not_in_the_report_csv() {
        let a = report("a", vec![0.1]);
        let mut b = a.clone();
        b.online_seconds = 99.0;
        assert_eq!(
            reports_csv(std::slice::from_ref(&a)),
            reports_csv(&[b.clone()])
        );
        assert_ne!(timings_csv(&[a]), timings_csv(&[b]));
    }

    #[test]
    fn truncation_order() {
        let mut t = vec![
            Truncation::Full,
            Truncation::Energy(0.999),
            Truncation::Fixed(3),
            Truncation::Energy(0.99),
        ];
        t.sort_by(|a, b| truncation_key(a).partial_cmp(&truncation_key(b)).unwrap());
        let labels: Vec<String> = t.into_iter().map(truncation_label::<f64>).collect();
        assert_eq!(labels, ["energy:0.99", "energy:0.999", "fixed:3", "full"]);
    }
}
