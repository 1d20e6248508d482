use super::{default_cg_tol, default_residual_tol, StateField};
use crate::error::{Error, Result};
use crate::grid::{BoundaryKind, DofMap, ElementGrid, GlobalLayout};
use crate::linalg::{conjugate_gradient, norm2, BandCholesky, CsrMatrix, Matrix, TripletBuilder};
use crate::scalar::Real;

/// Laplace stiffness of one square bilinear cell (nodes BL, BR, TL, TR);
/// independent of the cell size in 2-D.
const CELL_STIFFNESS: [[f64; 4]; 4] = [
    [4.0, -1.0, -1.0, -2.0],
    [-1.0, 4.0, -2.0, -1.0],
    [-1.0, -2.0, 4.0, -1.0],
    [-2.0, -1.0, -1.0, 4.0],
];

fn cell_nodes<T: Real>(grid: &ElementGrid<T>, ci: usize, cj: usize) -> [usize; 4] {
    [
        grid.node(ci, cj),
        grid.node(ci, cj + 1),
        grid.node(ci + 1, cj),
        grid.node(ci + 1, cj + 1),
    ]
}

/// Neumann stiffness matrix of a whole reference element.
pub fn element_stiffness<T: Real>(grid: &ElementGrid<T>) -> Matrix<T> {
    let n = grid.n_cells();
    let mut a = Matrix::zeros(grid.n_nodes(), grid.n_nodes());
    let sixth = T::one() / T::lit(6.0);
    for ci in 0..n {
        for cj in 0..n {
            let nodes = cell_nodes(grid, ci, cj);
            for (p, &np) in nodes.iter().enumerate() {
                for (q, &nq) in nodes.iter().enumerate() {
                    a[(np, nq)] += T::lit(CELL_STIFFNESS[p][q]) * sixth;
                }
            }
        }
    }
    a
}

/// Consistent load `∫ f φ_i` over one element whose lower-left corner sits at
/// `origin`, by 2×2 Gauss quadrature per cell.
pub fn element_load<T: Real>(
    grid: &ElementGrid<T>,
    origin: (T, T),
    f: &(impl Fn(T, T) -> T + ?Sized),
) -> Vec<T> {
    let n = grid.n_cells();
    let h = grid.h();
    let half = T::lit(0.5);
    let g = T::lit(0.5 / 3f64.sqrt());
    let pts = [half - g, half + g];
    let w = h * h * T::lit(0.25);
    let mut b = vec![T::zero(); grid.n_nodes()];
    for ci in 0..n {
        for cj in 0..n {
            let nodes = cell_nodes(grid, ci, cj);
            let x0 = origin.0 + T::from_usize_lossy(cj) * h;
            let y0 = origin.1 + T::from_usize_lossy(ci) * h;
            for &sy in &pts {
                for &sx in &pts {
                    let fv = f(x0 + sx * h, y0 + sy * h) * w;
                    let shape = [
                        (T::one() - sx) * (T::one() - sy),
                        sx * (T::one() - sy),
                        (T::one() - sx) * sy,
                        sx * sy,
                    ];
                    for (k, &node) in nodes.iter().enumerate() {
                        b[node] += fv * shape[k];
                    }
                }
            }
        }
    }
    b
}

/// Global Poisson stiffness restricted to unconstrained nodes.
#[derive(Clone, Debug)]
pub struct PoissonOperator<T> {
    pub dof_map: DofMap,
    pub matrix: CsrMatrix<T>,
}

pub fn assemble_poisson_operator<T: Real>(
    layout: &GlobalLayout,
    grid: &ElementGrid<T>,
) -> Result<PoissonOperator<T>> {
    if layout.bc() != BoundaryKind::DirichletZero {
        return Err(Error::InvalidLayout(
            "Poisson operator needs a dirichlet_zero layout".into(),
        ));
    }
    let dof_map = DofMap::new(layout, grid);
    let n = grid.n_cells();
    let sixth = T::one() / T::lit(6.0);
    let mut t = TripletBuilder::new(dof_map.n_free(), dof_map.n_free());
    for e in 0..layout.n_elements() {
        let l2g = dof_map.local_to_global(e);
        for ci in 0..n {
            for cj in 0..n {
                let nodes = cell_nodes(grid, ci, cj);
                for (p, &np) in nodes.iter().enumerate() {
                    let Some(fp) = dof_map.free_index(l2g[np]) else {
                        continue;
                    };
                    for (q, &nq) in nodes.iter().enumerate() {
                        if let Some(fq) = dof_map.free_index(l2g[nq]) {
                            t.add(fp, fq, T::lit(CELL_STIFFNESS[p][q]) * sixth);
                        }
                    }
                }
            }
        }
    }
    Ok(PoissonOperator {
        dof_map,
        matrix: t.build(),
    })
}

impl<T: Real> PoissonOperator<T> {
    /// Assembles `Σ_e P_eᵀ b_e` restricted to free nodes.
    pub fn load(
        &self,
        layout: &GlobalLayout,
        grid: &ElementGrid<T>,
        f: &(impl Fn(T, T) -> T + ?Sized),
    ) -> Vec<T> {
        let mut b = vec![T::zero(); self.dof_map.n_free()];
        for e in 0..layout.n_elements() {
            let (r, c) = layout.element_cell(e);
            let be = element_load(grid, (T::from_usize_lossy(c), T::from_usize_lossy(r)), f);
            for (k, &g) in self.dof_map.local_to_global(e).iter().enumerate() {
                if let Some(i) = self.dof_map.free_index(g) {
                    b[i] += be[k];
                }
            }
        }
        b
    }

    /// Expands free-node values to all global nodes (Dirichlet nodes zero).
    pub fn expand(&self, free: &[T]) -> StateField<T> {
        let ng = self.dof_map.n_global();
        let values = (0..ng)
            .map(|g| self.dof_map.free_index(g).map_or(T::zero(), |i| free[i]))
            .collect();
        StateField::new(1, ng, values)
    }
}

/// Which linear solver backs the full-order Poisson solve.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LinearSolverKind {
    /// Band Cholesky when the band fits in memory, otherwise CG.
    Auto,
    Direct,
    Cg,
}

/// Band storage limit (entries) for the direct path.
const MAX_BAND_ENTRIES: usize = 50_000_000;

enum Backend<T> {
    Direct(BandCholesky<T>),
    Cg { tol: T, max_iter: usize },
}

/// Poisson operator with its solver prepared for repeated right-hand sides.
pub struct PoissonFom<T> {
    layout: GlobalLayout,
    grid: ElementGrid<T>,
    operator: PoissonOperator<T>,
    backend: Backend<T>,
    residual_tol: T,
}

impl<T: Real> PoissonFom<T> {
    pub fn new(
        layout: &GlobalLayout,
        grid: &ElementGrid<T>,
        kind: LinearSolverKind,
    ) -> Result<Self> {
        let operator = assemble_poisson_operator(layout, grid)?;
        let n = operator.dof_map.n_free();
        let bw = operator.matrix.half_bandwidth();
        let direct = match kind {
            LinearSolverKind::Direct => true,
            LinearSolverKind::Cg => false,
            LinearSolverKind::Auto => n.saturating_mul(bw + 1) <= MAX_BAND_ENTRIES,
        };
        let backend = if direct {
            let m = &operator.matrix;
            Backend::Direct(BandCholesky::factor(n, bw, |i, j| m.get(i, j))?)
        } else {
            let max_iter = ((10.0 * (n as f64).sqrt()).ceil() as usize).max(10);
            Backend::Cg {
                tol: default_cg_tol(),
                max_iter,
            }
        };
        Ok(Self {
            layout: layout.clone(),
            grid: grid.clone(),
            operator,
            backend,
            residual_tol: default_residual_tol(),
        })
    }

    pub fn operator(&self) -> &PoissonOperator<T> {
        &self.operator
    }

    pub fn layout(&self) -> &GlobalLayout {
        &self.layout
    }

    pub fn grid(&self) -> &ElementGrid<T> {
        &self.grid
    }

    pub fn n_free(&self) -> usize {
        self.operator.dof_map.n_free()
    }

    /// Solves `A u = b` on the free nodes, enforcing the residual contract.
    pub fn solve_free(&self, b: &[T]) -> Result<Vec<T>> {
        let b_norm = norm2(b);
        if b_norm == T::zero() {
            return Ok(vec![T::zero(); b.len()]);
        }
        let a = &self.operator.matrix;
        let (x, iterations) = match &self.backend {
            Backend::Direct(ch) => (ch.solve(b), 0),
            Backend::Cg { tol, max_iter } => {
                let out = conjugate_gradient(a, b, *tol, *max_iter)?;
                (out.x, out.iterations)
            }
        };
        let ax = a.mul_vec(&x);
        let r: Vec<T> = b.iter().zip(&ax).map(|(&bi, &ai)| bi - ai).collect();
        let rel = norm2(&r) / b_norm;
        if !(rel <= self.residual_tol) || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::SolverFailure {
                iterations,
                residual: rel.as_f64(),
            });
        }
        Ok(x)
    }

    pub fn solve_source(&self, f: &(impl Fn(T, T) -> T + ?Sized)) -> Result<StateField<T>> {
        let b = self.operator.load(&self.layout, &self.grid, f);
        let x = self.solve_free(&b)?;
        Ok(self.operator.expand(&x))
    }
}

/// Poisson problem `-Δu = f`, `u = 0` on the outer boundary.
pub struct PoissonProblem<'a, T> {
    pub layout: GlobalLayout,
    pub grid: ElementGrid<T>,
    pub source: &'a (dyn Fn(T, T) -> T + Sync),
}

pub fn solve_poisson_fom<T: Real>(problem: &PoissonProblem<'_, T>) -> Result<StateField<T>> {
    PoissonFom::new(&problem.layout, &problem.grid, LinearSolverKind::Auto)?
        .solve_source(problem.source)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_layout;

    fn layout(m: usize, n: usize) -> GlobalLayout {
        build_layout(m, n, "square", BoundaryKind::DirichletZero).unwrap()
    }

    #[test]
    fn single_free_node_entry() {
        // hand assembly: four cells each contribute 4/6 to the shared centre node
        let grid = ElementGrid::<f64>::new(2).unwrap();
        let op = assemble_poisson_operator(&layout(1, 1), &grid).unwrap();
        assert_eq!(op.matrix.n_rows(), 1);
        assert!((op.matrix.get(0, 0) - 8.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn operator_is_exactly_symmetric() {
        let grid = ElementGrid::<f64>::new(4).unwrap();
        let op = assemble_poisson_operator(&layout(2, 2), &grid).unwrap();
        let d = op.matrix.to_dense();
        assert_eq!(d.asymmetry(), 0.0);
    }

    #[test]
    fn element_stiffness_annihilates_constants() {
        let grid = ElementGrid::<f64>::new(3).unwrap();
        let a = element_stiffness(&grid);
        let ones = vec![1.0; grid.n_nodes()];
        assert!(a.mul_vec(&ones).iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn load_integrates_constant_source() {
        let grid = ElementGrid::<f64>::new(4).unwrap();
        let b = element_load(&grid, (0.0, 0.0), &|_, _| 3.0);
        let total: f64 = b.iter().sum();
        assert!((total - 3.0).abs() < 1e-14);
    }

    #[test]
    fn zero_source_zero_solution() {
        let grid = ElementGrid::<f64>::new(4).unwrap();
        let fom = PoissonFom::new(&layout(2, 2), &grid, LinearSolverKind::Auto).unwrap();
        let u = fom.solve_source(&|_, _| 0.0).unwrap();
        assert!(u.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cg_and_direct_agree() {
        let grid = ElementGrid::<f64>::new(6).unwrap();
        let f = |x: f64, y: f64| (x * 1.3).sin() + y * y;
        let a = PoissonFom::new(&layout(2, 3), &grid, LinearSolverKind::Direct)
            .unwrap()
            .solve_source(&f)
            .unwrap();
        let b = PoissonFom::new(&layout(2, 3), &grid, LinearSolverKind::Cg)
            .unwrap()
            .solve_source(&f)
            .unwrap();
        let diff: f64 = a
            .values()
            .iter()
            .zip(b.values())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-9, "{diff}");
    }

    #[test]
    fn single_precision_solve() {
        let grid = ElementGrid::<f32>::new(8).unwrap();
        let fom = PoissonFom::new(&layout(1, 1), &grid, LinearSolverKind::Auto).unwrap();
        let u = fom.solve_source(&|_, _| 1.0f32).unwrap();
        // centre value of -Δu = 1 on the unit square is about 0.0737
        let centre = u.values()[4 * 9 + 4];
        assert!((centre - 0.0737).abs() < 2e-3, "{centre}");
    }
}
