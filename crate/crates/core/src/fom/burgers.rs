use super::StateField;
use crate::error::{Error, Result};
use crate::grid::{BoundaryKind, DofMap, ElementGrid, GlobalLayout};
use crate::scalar::Real;

/// Physical and time-stepping parameters of a Burgers run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BurgersParams<T> {
    pub nu: T,
    pub dt: T,
    pub t_final: T,
    /// Keep every k-th step (t = 0 and t = T are always kept).
    pub save_every: usize,
}

impl<T: Real> BurgersParams<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.nu > T::zero()) {
            return Err(Error::Config(format!(
                "viscosity must be positive, got {}",
                self.nu
            )));
        }
        if !(self.dt > T::zero()) || !(self.dt <= self.t_final) {
            return Err(Error::Config(format!(
                "need 0 < dt <= t_final, got dt={} t_final={}",
                self.dt, self.t_final
            )));
        }
        if self.save_every == 0 {
            return Err(Error::Config("save_every must be at least 1".into()));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.t_final / self.dt)
            .round()
            .to_usize()
            .unwrap_or(0)
            .max(1)
    }

    /// Step indices at which states are stored.
    pub fn save_steps(&self) -> Vec<usize> {
        let n = self.n_steps();
        (0..=n)
            .filter(|&k| k % self.save_every == 0 || k == n)
            .collect()
    }
}

/// Node counts of a periodic global grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PeriodicShape {
    pub nx: usize,
    pub ny: usize,
}

/// Periodic velocity problem on a layout.
#[derive(Clone, Debug)]
pub struct BurgersProblem<T> {
    pub layout: GlobalLayout,
    pub grid: ElementGrid<T>,
    pub params: BurgersParams<T>,
    pub initial: StateField<T>,
}

impl<T: Real> BurgersProblem<T> {
    /// Evaluates `ic(x, y) -> (u, v)` on the global nodes.
    pub fn new(
        layout: &GlobalLayout,
        grid: &ElementGrid<T>,
        params: BurgersParams<T>,
        ic: impl Fn(T, T) -> (T, T),
    ) -> Result<Self> {
        let dof_map = DofMap::new(layout, grid);
        let ng = dof_map.n_global();
        let mut values = vec![T::zero(); 2 * ng];
        for g in 0..ng {
            let (x, y) = dof_map.global_coords::<T>(g);
            let (u, v) = ic(x, y);
            values[g] = u;
            values[ng + g] = v;
        }
        Self::from_state(layout, grid, params, StateField::new(2, ng, values))
    }

    pub fn from_state(
        layout: &GlobalLayout,
        grid: &ElementGrid<T>,
        params: BurgersParams<T>,
        initial: StateField<T>,
    ) -> Result<Self> {
        if layout.bc() != BoundaryKind::Periodic {
            return Err(Error::InvalidLayout(
                "Burgers needs a periodic layout".into(),
            ));
        }
        params.validate()?;
        let shape = Self::shape_of(layout, grid);
        if initial.n_components() != 2 || initial.n_nodes() != shape.nx * shape.ny {
            return Err(Error::DimensionMismatch(format!(
                "initial state has {}x{} values, layout needs 2x{}",
                initial.n_components(),
                initial.n_nodes(),
                shape.nx * shape.ny
            )));
        }
        Ok(Self {
            layout: layout.clone(),
            grid: grid.clone(),
            params,
            initial,
        })
    }

    fn shape_of(layout: &GlobalLayout, grid: &ElementGrid<T>) -> PeriodicShape {
        PeriodicShape {
            nx: layout.cols() * grid.n_cells(),
            ny: layout.rows() * grid.n_cells(),
        }
    }

    pub fn shape(&self) -> PeriodicShape {
        Self::shape_of(&self.layout, &self.grid)
    }
}

/// Semi-discrete right-hand side of the conservative Burgers system on a
/// periodic grid; `values` holds the u block followed by the v block.
pub fn periodic_rhs<T: Real>(values: &[T], shape: PeriodicShape, h: T, nu: T) -> Vec<T> {
    let PeriodicShape { nx, ny } = shape;
    let ng = nx * ny;
    assert_eq!(values.len(), 2 * ng);
    let (u, v) = values.split_at(ng);
    let mut out = vec![T::zero(); 2 * ng];
    let inv2h = T::one() / (h + h);
    let inv4h = inv2h * T::lit(0.5);
    let nu_h2 = nu / (h * h);
    for i in 0..ny {
        let north = ((i + 1) % ny) * nx;
        let south = ((i + ny - 1) % ny) * nx;
        let row = i * nx;
        for j in 0..nx {
            let east = (j + 1) % nx;
            let west = (j + nx - 1) % nx;
            let (c, e, w, n, s) = (row + j, row + east, row + west, north + j, south + j);
            let lap_u = u[e] + u[w] + u[n] + u[s] - T::lit(4.0) * u[c];
            let lap_v = v[e] + v[w] + v[n] + v[s] - T::lit(4.0) * v[c];
            out[c] = -((u[e] * u[e] - u[w] * u[w]) * inv4h + (u[n] * v[n] - u[s] * v[s]) * inv2h)
                + nu_h2 * lap_u;
            out[ng + c] = -((u[e] * v[e] - u[w] * v[w]) * inv2h
                + (v[n] * v[n] - v[s] * v[s]) * inv4h)
                + nu_h2 * lap_v;
        }
    }
    out
}

pub fn burgers_rhs<T: Real>(state: &StateField<T>, problem: &BurgersProblem<T>) -> StateField<T> {
    let rhs = periodic_rhs(
        state.values(),
        problem.shape(),
        problem.grid.h(),
        problem.params.nu,
    );
    StateField::new(2, state.n_nodes(), rhs)
}

/// Largest nodal speed component `max(|u|, |v|)`.
pub fn max_speed<T: Real>(values: &[T]) -> T {
    values.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
}

/// Explicit step limit `min(h²/(4ν), h/(2·max|velocity|))`.
pub fn stability_bound<T: Real>(h: T, nu: T, vmax: T) -> T {
    let diffusive = h * h / (T::lit(4.0) * nu);
    if vmax > T::zero() {
        diffusive.min(T::lit(0.5) * h / vmax)
    } else {
        diffusive
    }
}

/// Saved states of a time integration.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<T> {
    pub times: Vec<T>,
    pub states: Vec<StateField<T>>,
}

impl<T: Real> Trajectory<T> {
    pub fn last(&self) -> &StateField<T> {
        self.states
            .last()
            .expect("trajectory keeps at least the initial state")
    }
}

pub fn solve_burgers_fom<T: Real>(problem: &BurgersProblem<T>) -> Result<Trajectory<T>> {
    let p = problem.params;
    let shape = problem.shape();
    let h = problem.grid.h();
    let n_steps = p.n_steps();
    let half = p.dt * T::lit(0.5);
    let mut u = problem.initial.values().to_vec();
    let mut traj = Trajectory {
        times: vec![T::zero()],
        states: vec![problem.initial.clone()],
    };
    for step in 1..=n_steps {
        let bound = stability_bound(h, p.nu, max_speed(&u));
        if p.dt > bound {
            return Err(Error::Stability {
                step,
                dt: p.dt.as_f64(),
                bound: bound.as_f64(),
            });
        }
        let k1 = periodic_rhs(&u, shape, h, p.nu);
        let mid: Vec<T> = u.iter().zip(&k1).map(|(&a, &b)| a + half * b).collect();
        let k2 = periodic_rhs(&mid, shape, h, p.nu);
        for (a, b) in u.iter_mut().zip(&k2) {
            *a += p.dt * *b;
        }
        if u.iter().any(|x| !x.is_finite()) {
            return Err(Error::Divergence { step });
        }
        if step % p.save_every == 0 || step == n_steps {
            traj.times.push(T::from_usize_lossy(step) * p.dt);
            traj.states
                .push(StateField::new(2, shape.nx * shape.ny, u.clone()));
        }
    }
    Ok(traj)
}
