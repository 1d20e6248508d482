//! Online solves on assembled reduced systems: SPD linear solves for Poisson
//! and null-space projected midpoint stepping for Burgers.

use crate::assembly::{Formulation, ReducedSystem};
use crate::error::{Error, Result};
use crate::fom::{
    default_cg_tol, default_residual_tol, max_speed, periodic_rhs, stability_bound, BurgersParams,
    PeriodicShape, StateField,
};
use crate::grid::BoundaryKind;
use crate::linalg::{conjugate_gradient, norm2, Cholesky, CsrMatrix};
use crate::scalar::Real;

/// Largest system solved by dense Cholesky.
pub const DENSE_LIMIT: usize = 4000;

/// Stacked per-element coordinates at time `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedState<T> {
    pub coords: Vec<T>,
    pub t: T,
}

impl<T: Real> ReducedState<T> {
    pub fn is_finite(&self) -> bool {
        self.coords.iter().all(|c| c.is_finite())
    }
}

fn relative_residual<T: Real>(k: &CsrMatrix<T>, x: &[T], b: &[T]) -> (Vec<T>, T) {
    let kx = k.mul_vec(x);
    let r: Vec<T> = b.iter().zip(&kx).map(|(&bi, &ki)| bi - ki).collect();
    let rel = norm2(&r) / norm2(b);
    (r, rel)
}

/// Solves `K x = b` for symmetric positive-definite `K`: dense Cholesky (with
/// up to three refinement sweeps) up to [`DENSE_LIMIT`] unknowns, Jacobi-CG
/// beyond. Fails unless `‖Kx − b‖ ≤ tol ‖b‖` with the default residual
/// tolerance.
pub fn solve_spd<T: Real>(k: &CsrMatrix<T>, b: &[T]) -> Result<Vec<T>> {
    solve_spd_tol(k, b, default_residual_tol())
}

/// [`solve_spd`] with an explicit relative residual bound.
pub fn solve_spd_tol<T: Real>(k: &CsrMatrix<T>, b: &[T], tol: T) -> Result<Vec<T>> {
    let n = b.len();
    if k.n_rows() != n || k.n_cols() != n {
        return Err(Error::DimensionMismatch(format!(
            "operator {}x{}, rhs {n}",
            k.n_rows(),
            k.n_cols()
        )));
    }
    if n == 0 || norm2(b) == T::zero() {
        return Ok(vec![T::zero(); n]);
    }
    if n <= DENSE_LIMIT {
        let chol = Cholesky::factor(&k.to_dense())?;
        let mut x = chol.solve(b);
        let (mut r, mut rel) = relative_residual(k, &x, b);
        for _ in 0..3 {
            if rel <= tol {
                break;
            }
            let dx = chol.solve(&r);
            x.iter_mut().zip(&dx).for_each(|(a, d)| *a += *d);
            (r, rel) = relative_residual(k, &x, b);
        }
        if !(rel <= tol) {
            return Err(Error::SolverFailure {
                iterations: 0,
                residual: rel.as_f64(),
            });
        }
        Ok(x)
    } else {
        let max_iter = ((10.0 * (n as f64).sqrt()).ceil() as usize).max(100);
        let out = conjugate_gradient(k, b, default_cg_tol::<T>().min(tol), max_iter)?;
        if !(out.relative_residual <= tol) {
            return Err(Error::SolverFailure {
                iterations: out.iterations,
                residual: out.relative_residual.as_f64(),
            });
        }
        Ok(out.x)
    }
}

/// Solves the online system of a Poisson reduced system for its native
/// unknowns (ports/vertices, DG coordinates, or null-space coordinates).
pub fn solve_linear_reduced<T: Real>(system: &ReducedSystem<T>, rhs: &[T]) -> Result<Vec<T>> {
    solve_linear_reduced_tol(system, rhs, default_residual_tol())
}

pub fn solve_linear_reduced_tol<T: Real>(
    system: &ReducedSystem<T>,
    rhs: &[T],
    tol: T,
) -> Result<Vec<T>> {
    let k = system
        .operator()
        .ok_or_else(|| Error::Config("system has no linear operator".into()))?;
    solve_spd_tol(k, rhs, tol)
}

/// Back-substitution of interior coordinates after a condensed solve.
pub fn recover_interior<T: Real>(
    system: &ReducedSystem<T>,
    ports: &[T],
    stacked_load: &[T],
) -> Result<ReducedState<T>> {
    Ok(ReducedState {
        coords: system.recover_interior(ports, stacked_load)?,
        t: T::zero(),
    })
}

/// Full Poisson online stage: from the stacked element load to stacked
/// element coordinates.
pub fn solve_poisson_reduced<T: Real>(
    system: &ReducedSystem<T>,
    stacked_load: &[T],
) -> Result<ReducedState<T>> {
    solve_poisson_reduced_tol(system, stacked_load, default_residual_tol())
}

/// [`solve_poisson_reduced`] with an explicit residual bound for the online
/// linear solve.
pub fn solve_poisson_reduced_tol<T: Real>(
    system: &ReducedSystem<T>,
    stacked_load: &[T],
    tol: T,
) -> Result<ReducedState<T>> {
    let rhs = system.system_rhs(stacked_load)?;
    let x = solve_linear_reduced_tol(system, &rhs, tol)?;
    let coords = match system.formulation() {
        Formulation::StrongCondensation => system.recover_interior(&x, stacked_load)?,
        Formulation::DgPenalty => x,
        Formulation::ConstrainedResidual => system.expand_constrained(&x),
    };
    Ok(ReducedState {
        coords,
        t: T::zero(),
    })
}

/// Reconstructed global field and the largest disagreement between element
/// copies of a node (zero for conforming couplings up to round-off).
#[derive(Clone, Debug, PartialEq)]
pub struct Reconstruction<T> {
    pub field: StateField<T>,
    pub max_jump: T,
}

/// Evaluates `B_e c_e` per element and gathers to global nodes; shared nodes
/// take the mean of their copies.
pub fn reconstruct_global<T: Real>(
    system: &ReducedSystem<T>,
    state: &ReducedState<T>,
) -> Reconstruction<T> {
    let locals = system.element_fields(&state.coords);
    let dm = system.dof_map();
    let nf = system.n_fields();
    let values = dm.gather(&locals, nf);
    Reconstruction {
        field: StateField::new(nf, dm.n_global(), values),
        max_jump: dm.max_copy_jump(&locals, nf),
    }
}

/// Reduced Burgers integrator over a constrained system with split or
/// monolithic two-component bases.
pub struct ReducedBurgers<'a, T> {
    system: &'a ReducedSystem<T>,
    params: BurgersParams<T>,
    shape: PeriodicShape,
}

/// Saved reduced states with their constraint residuals `‖C c‖ / ‖c‖`.
#[derive(Clone, Debug)]
pub struct ReducedTrajectory<T> {
    pub times: Vec<T>,
    pub states: Vec<ReducedState<T>>,
    pub constraint_residuals: Vec<T>,
    /// Largest relative constraint residual over every step.
    pub max_constraint_residual: T,
}

impl<'a, T: Real> ReducedBurgers<'a, T> {
    pub fn new(system: &'a ReducedSystem<T>, params: BurgersParams<T>) -> Result<Self> {
        params.validate()?;
        if system.constraints().is_none() || system.n_fields() != 2 {
            return Err(Error::Config(
                "reduced Burgers needs a two-component constrained_residual system".into(),
            ));
        }
        if system.layout().bc() != BoundaryKind::Periodic {
            return Err(Error::InvalidLayout(
                "reduced Burgers needs a periodic layout".into(),
            ));
        }
        let n = system.grid().n_cells();
        let shape = PeriodicShape {
            nx: system.layout().cols() * n,
            ny: system.layout().rows() * n,
        };
        Ok(Self {
            system,
            params,
            shape,
        })
    }

    /// `c₀ = Z Zᵀ [B_eᵀ u₀|_e]`.
    pub fn initial_state(&self, initial: &StateField<T>) -> Result<ReducedState<T>> {
        let dm = self.system.dof_map();
        if initial.n_components() != 2 || initial.n_nodes() != dm.n_global() {
            return Err(Error::DimensionMismatch(
                "initial field does not match the layout".into(),
            ));
        }
        let stacked = self
            .system
            .project_elements(&dm.scatter(initial.values(), 2));
        Ok(ReducedState {
            coords: self.constraints().project(&stacked),
            t: T::zero(),
        })
    }

    fn constraints(&self) -> &crate::assembly::Constraints<T> {
        self.system.constraints().expect("checked in new")
    }

    fn global(&self, c: &[T]) -> Vec<T> {
        self.system
            .dof_map()
            .gather(&self.system.element_fields(c), 2)
    }

    /// Projected right-hand side `Z Zᵀ [B_eᵀ f(u)|_e]`.
    fn rhs(&self, u: &[T]) -> Vec<T> {
        let f = periodic_rhs(u, self.shape, self.system.grid().h(), self.params.nu);
        let stacked = self
            .system
            .project_elements(&self.system.dof_map().scatter(&f, 2));
        self.constraints().project(&stacked)
    }

    /// One midpoint step; `step` only labels errors.
    pub fn step(&self, state: &ReducedState<T>, step: usize) -> Result<ReducedState<T>> {
        let p = self.params;
        let h = self.system.grid().h();
        let u = self.global(&state.coords);
        let bound = stability_bound(h, p.nu, max_speed(&u));
        if p.dt > bound {
            return Err(Error::Stability {
                step,
                dt: p.dt.as_f64(),
                bound: bound.as_f64(),
            });
        }
        let half = p.dt * T::lit(0.5);
        let k1 = self.rhs(&u);
        let mid: Vec<T> = state
            .coords
            .iter()
            .zip(&k1)
            .map(|(&a, &b)| a + half * b)
            .collect();
        let k2 = self.rhs(&self.global(&mid));
        let coords: Vec<T> = state
            .coords
            .iter()
            .zip(&k2)
            .map(|(&a, &b)| a + p.dt * b)
            .collect();
        let next = ReducedState {
            coords,
            t: T::from_usize_lossy(step) * p.dt,
        };
        if !next.is_finite() {
            return Err(Error::Divergence { step });
        }
        Ok(next)
    }

    fn relative_violation(&self, c: &[T]) -> T {
        let n = norm2(c);
        let r = self.constraints().residual(c);
        if n > T::zero() {
            r / n
        } else {
            r
        }
    }

    /// Integrates to `t_final`, saving on the same steps as the full model.
    pub fn run(&self, initial: ReducedState<T>) -> Result<ReducedTrajectory<T>> {
        let n_steps = self.params.n_steps();
        let first = self.relative_violation(&initial.coords);
        let mut traj = ReducedTrajectory {
            times: vec![T::zero()],
            states: vec![initial.clone()],
            constraint_residuals: vec![first],
            max_constraint_residual: first,
        };
        let mut state = initial;
        for step in 1..=n_steps {
            state = self.step(&state, step)?;
            let viol = self.relative_violation(&state.coords);
            traj.max_constraint_residual = traj.max_constraint_residual.max(viol);
            if step % self.params.save_every == 0 || step == n_steps {
                traj.times.push(state.t);
                traj.states.push(state.clone());
                traj.constraint_residuals.push(viol);
            }
        }
        Ok(traj)
    }
}

/// Advances one reduced Burgers step of size `params.dt`.
pub fn step_burgers_reduced<T: Real>(
    system: &ReducedSystem<T>,
    params: BurgersParams<T>,
    state: &ReducedState<T>,
) -> Result<ReducedState<T>> {
    let integrator = ReducedBurgers::new(system, params)?;
    let step = (state.t / params.dt).round().to_usize().unwrap_or(0) + 1;
    integrator.step(state, step)
}
