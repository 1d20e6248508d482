//! Full-order reference solvers: bilinear finite elements for Poisson and
//! conservative central differences with midpoint Runge–Kutta for Burgers.
//!
//! They produce the training snapshots and act as the validation oracle for
//! every reduced solve.

mod burgers;
mod poisson;

pub use burgers::{
    burgers_rhs, max_speed, periodic_rhs, solve_burgers_fom, stability_bound, BurgersParams,
    BurgersProblem, PeriodicShape, Trajectory,
};
pub use poisson::{
    assemble_poisson_operator, element_load, element_stiffness, solve_poisson_fom,
    LinearSolverKind, PoissonFom, PoissonOperator, PoissonProblem,
};

use crate::scalar::Real;

/// Nodal values over all global nodes, one contiguous block per component.
#[derive(Clone, Debug, PartialEq)]
pub struct StateField<T> {
    n_components: usize,
    n_nodes: usize,
    values: Vec<T>,
}

impl<T: Real> StateField<T> {
    pub fn new(n_components: usize, n_nodes: usize, values: Vec<T>) -> Self {
        assert_eq!(values.len(), n_components * n_nodes, "state field length");
        Self {
            n_components,
            n_nodes,
            values,
        }
    }

    pub fn zeros(n_components: usize, n_nodes: usize) -> Self {
        Self::new(
            n_components,
            n_nodes,
            vec![T::zero(); n_components * n_nodes],
        )
    }

    pub fn n_components(&self) -> usize {
        self.n_components
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn component(&self, c: usize) -> &[T] {
        &self.values[c * self.n_nodes..(c + 1) * self.n_nodes]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Arithmetic mean of one component over the nodes.
    pub fn mean(&self, c: usize) -> T {
        let s: T = self.component(c).iter().copied().sum();
        s / T::from_usize_lossy(self.n_nodes)
    }
}

/// Default linear-solve residual contract, relaxed for single precision.
pub fn default_residual_tol<T: Real>() -> T {
    T::lit(1e-10).max(T::epsilon() * T::lit(1e4))
}

/// Default conjugate-gradient stopping tolerance.
pub fn default_cg_tol<T: Real>() -> T {
    T::lit(1e-12).max(T::epsilon() * T::lit(10.0))
}
