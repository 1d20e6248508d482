//! Global reduced systems built from a library of trained element bases.
//!
//! Three couplings are supported: static condensation onto shared port and
//! vertex coordinates, symmetric interior-penalty DG, and nodal continuity
//! constraints handled through an orthonormal null-space basis.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::basis::{ElementBasis, SplitBasis};
use crate::error::{Error, Result};
use crate::fom::{element_load, element_stiffness};
use crate::grid::{Corner, DofMap, ElementGrid, GlobalLayout, Side};
use crate::linalg::{
    jacobi_svd, orthogonal_complement, Cholesky, CsrMatrix, Matrix, TripletBuilder,
};
use crate::scalar::Real;

/// Trained bases keyed by element type, all on one reference grid.
#[derive(Clone, Debug)]
pub struct ComponentLibrary<T> {
    grid: ElementGrid<T>,
    entries: BTreeMap<String, ElementBasis<T>>,
}

impl<T: Real> ComponentLibrary<T> {
    pub fn new(bases: Vec<ElementBasis<T>>) -> Result<Self> {
        let first = bases
            .first()
            .ok_or_else(|| Error::Config("component library needs at least one basis".into()))?;
        let (n_cells, n_fields) = (first.n_cells(), first.n_fields());
        let mut entries = BTreeMap::new();
        for b in bases {
            b.check_grid(n_cells)?;
            if b.n_fields() != n_fields {
                return Err(Error::Incompatible(
                    "bases carry different field counts".into(),
                ));
            }
            entries.insert(b.element_type().to_string(), b);
        }
        Ok(Self {
            grid: ElementGrid::new(n_cells)?,
            entries,
        })
    }

    pub fn single(basis: ElementBasis<T>) -> Result<Self> {
        Self::new(vec![basis])
    }

    pub fn grid(&self) -> &ElementGrid<T> {
        &self.grid
    }

    pub fn n_cells(&self) -> usize {
        self.grid.n_cells()
    }

    pub fn n_fields(&self) -> usize {
        self.entries.values().next().map_or(1, |b| b.n_fields())
    }

    pub fn get(&self, element_type: &str) -> Result<&ElementBasis<T>> {
        self.entries.get(element_type).ok_or_else(|| {
            Error::Incompatible(format!(
                "no trained basis for element type '{element_type}'"
            ))
        })
    }

    pub fn types(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|s| s.as_str())
    }
}

/// Coupling formulation between elements.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Formulation {
    StrongCondensation,
    DgPenalty,
    ConstrainedResidual,
}

impl Formulation {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::StrongCondensation => "strong_condensation",
            Self::DgPenalty => "dg_penalty",
            Self::ConstrainedResidual => "constrained_residual",
        }
    }
}

impl fmt::Display for Formulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Formulation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strong_condensation" => Ok(Self::StrongCondensation),
            "dg_penalty" => Ok(Self::DgPenalty),
            "constrained_residual" => Ok(Self::ConstrainedResidual),
            other => Err(Error::Config(format!("unknown formulation '{other}'"))),
        }
    }
}

/// Default dimensionless DG penalty; the face coefficient is `eta / h`.
pub const DEFAULT_ETA: f64 = 10.0;
pub const DEFAULT_CONSTRAINT_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CouplingConfig<T> {
    pub formulation: Formulation,
    pub eta: T,
    pub constraint_tol: T,
}

impl<T: Real> CouplingConfig<T> {
    pub fn new(formulation: Formulation) -> Self {
        Self {
            formulation,
            eta: T::lit(DEFAULT_ETA),
            constraint_tol: T::lit(DEFAULT_CONSTRAINT_TOL),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > T::zero()) {
            return Err(Error::Config(format!(
                "eta must be positive, got {}",
                self.eta
            )));
        }
        if !(self.constraint_tol > T::zero() && self.constraint_tol < T::one()) {
            return Err(Error::Config(format!(
                "constraint_tol must lie in (0, 1), got {}",
                self.constraint_tol
            )));
        }
        Ok(())
    }
}

/// Continuity (and Dirichlet) constraints on the stacked element coordinates.
#[derive(Clone, Debug)]
pub struct Constraints<T> {
    /// One row per retained nodal pairing, `n_rows × n_stacked`.
    pub matrix: Matrix<T>,
    /// Orthonormal basis of the numerical null space of `matrix`.
    pub z: Matrix<T>,
    pub rank: usize,
}

impl<T: Real> Constraints<T> {
    /// `‖C c‖`.
    pub fn residual(&self, c: &[T]) -> T {
        crate::linalg::norm2(&self.matrix.mul_vec(c))
    }

    /// `Z Zᵀ x`.
    pub fn project(&self, x: &[T]) -> Vec<T> {
        self.z.mul_vec(&self.z.tr_mul_vec(x))
    }
}

#[derive(Clone, Debug)]
struct TypeCondensation<T> {
    interior: Vec<usize>,
    masters: Vec<usize>,
    kii: Cholesky<T>,
    /// `K_II⁻¹ K_IM`.
    kii_kim: Matrix<T>,
    schur: Matrix<T>,
}

#[derive(Clone, Debug)]
struct Condensation<T> {
    per_type: Vec<TypeCondensation<T>>,
    /// Per element, global master index of each local master (None = Dirichlet).
    master_map: Vec<Vec<Option<usize>>>,
    n_master: usize,
}

/// Assembled reduced system plus everything needed to map coordinates back to
/// nodal fields.
#[derive(Clone, Debug)]
pub struct ReducedSystem<T> {
    formulation: Formulation,
    layout: GlobalLayout,
    grid: ElementGrid<T>,
    dof_map: DofMap,
    n_fields: usize,
    type_names: Vec<String>,
    element_type: Vec<usize>,
    bases: Vec<Matrix<T>>,
    element_operators: Vec<Matrix<T>>,
    offsets: Vec<usize>,
    operator: Option<CsrMatrix<T>>,
    constraints: Option<Constraints<T>>,
    condensation: Option<Condensation<T>>,
    eta: Option<T>,
}

impl<T: Real> ReducedSystem<T> {
    pub fn formulation(&self) -> Formulation {
        self.formulation
    }

    pub fn layout(&self) -> &GlobalLayout {
        &self.layout
    }

    pub fn grid(&self) -> &ElementGrid<T> {
        &self.grid
    }

    pub fn dof_map(&self) -> &DofMap {
        &self.dof_map
    }

    pub fn n_fields(&self) -> usize {
        self.n_fields
    }

    /// Length of the stacked per-element coordinate vector.
    pub fn n_stacked(&self) -> usize {
        *self.offsets.last().expect("offsets")
    }

    /// Reduced dimension: port and vertex unknowns after condensation, the
    /// stacked element coordinates otherwise.
    pub fn n_red(&self) -> usize {
        match &self.condensation {
            Some(c) => c.n_master,
            None => self.n_stacked(),
        }
    }

    pub fn eta(&self) -> Option<T> {
        self.eta
    }

    /// Coordinate range of element `e` in the stacked vector.
    pub fn element_range(&self, e: usize) -> std::ops::Range<usize> {
        self.offsets[e]..self.offsets[e + 1]
    }

    /// Basis matrix `B_e` of element `e`.
    pub fn element_basis(&self, e: usize) -> &Matrix<T> {
        &self.bases[self.element_type[e]]
    }

    /// Projected element stiffness `B_eᵀ A_e B_e` (Poisson systems only).
    pub fn element_operator(&self, e: usize) -> Option<&Matrix<T>> {
        self.element_operators.get(self.element_type[e])
    }

    /// Operator solved online: the Schur complement (strong), the DG matrix,
    /// or `Zᵀ K Z` (constrained). `None` for transport systems.
    pub fn operator(&self) -> Option<&CsrMatrix<T>> {
        self.operator.as_ref()
    }

    pub fn constraints(&self) -> Option<&Constraints<T>> {
        self.constraints.as_ref()
    }

    pub fn type_names(&self) -> &[String] {
        &self.type_names
    }

    /// Block-diagonal `K = diag(B_eᵀ A_e B_e)` applied to stacked coordinates.
    pub fn apply_block_stiffness(&self, c: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); c.len()];
        for e in 0..self.layout.n_elements() {
            let rg = self.element_range(e);
            let k = &self.element_operators[self.element_type[e]];
            out[rg.clone()].copy_from_slice(&k.mul_vec(&c[rg]));
        }
        out
    }

    /// Per-element nodal vectors `B_e c_e`.
    pub fn element_fields(&self, c: &[T]) -> Vec<Vec<T>> {
        (0..self.layout.n_elements())
            .map(|e| self.element_basis(e).mul_vec(&c[self.element_range(e)]))
            .collect()
    }

    /// Stacked `B_eᵀ x_e`.
    pub fn project_elements(&self, locals: &[Vec<T>]) -> Vec<T> {
        let mut out = Vec::with_capacity(self.n_stacked());
        for (e, x) in locals.iter().enumerate() {
            out.extend(self.element_basis(e).tr_mul_vec(x));
        }
        out
    }

    /// Right-hand side of the online system from the stacked element load.
    pub fn system_rhs(&self, stacked: &[T]) -> Result<Vec<T>> {
        if stacked.len() != self.n_stacked() {
            return Err(Error::DimensionMismatch(format!(
                "reduced load has {} entries, system stacks {}",
                stacked.len(),
                self.n_stacked()
            )));
        }
        Ok(match self.formulation {
            Formulation::DgPenalty => stacked.to_vec(),
            Formulation::ConstrainedResidual => self
                .constraints
                .as_ref()
                .expect("constrained system")
                .z
                .tr_mul_vec(stacked),
            Formulation::StrongCondensation => {
                let cond = self.condensation.as_ref().expect("condensed system");
                let mut g = vec![T::zero(); cond.n_master];
                for e in 0..self.layout.n_elements() {
                    let tc = &cond.per_type[self.element_type[e]];
                    let f = &stacked[self.element_range(e)];
                    let fi: Vec<T> = tc.interior.iter().map(|&k| f[k]).collect();
                    let corr = tc.kii_kim.tr_mul_vec(&fi);
                    for (m, slot) in cond.master_map[e].iter().enumerate() {
                        if let Some(gm) = slot {
                            g[*gm] += f[tc.masters[m]] - corr[m];
                        }
                    }
                }
                g
            }
        })
    }

    /// Back-substitutes interior coordinates from solved port/vertex values
    /// and returns the full stacked coordinate vector.
    pub fn recover_interior(&self, masters: &[T], stacked_load: &[T]) -> Result<Vec<T>> {
        let cond = self.condensation.as_ref().ok_or_else(|| {
            Error::Config("interior recovery needs a strong_condensation system".into())
        })?;
        if masters.len() != cond.n_master || stacked_load.len() != self.n_stacked() {
            return Err(Error::DimensionMismatch(
                "recover_interior input lengths".into(),
            ));
        }
        let mut c = vec![T::zero(); self.n_stacked()];
        for e in 0..self.layout.n_elements() {
            let tc = &cond.per_type[self.element_type[e]];
            let rg = self.element_range(e);
            let f = &stacked_load[rg.clone()];
            let xm: Vec<T> = cond.master_map[e]
                .iter()
                .map(|s| s.map_or(T::zero(), |g| masters[g]))
                .collect();
            let fi: Vec<T> = tc.interior.iter().map(|&k| f[k]).collect();
            let base = tc.kii.solve(&fi);
            let corr = tc.kii_kim.mul_vec(&xm);
            let ce = &mut c[rg];
            for (i, &k) in tc.interior.iter().enumerate() {
                ce[k] = base[i] - corr[i];
            }
            for (m, &k) in tc.masters.iter().enumerate() {
                ce[k] = xm[m];
            }
        }
        Ok(c)
    }

    /// Maps online unknowns (null-space coordinates for the constrained
    /// formulation) to stacked element coordinates.
    pub fn expand_constrained(&self, y: &[T]) -> Vec<T> {
        self.constraints
            .as_ref()
            .expect("constrained system")
            .z
            .mul_vec(y)
    }
}

struct Common<T> {
    grid: ElementGrid<T>,
    dof_map: DofMap,
    type_names: Vec<String>,
    element_type: Vec<usize>,
    bases: Vec<Matrix<T>>,
    offsets: Vec<usize>,
}

fn common<T: Real>(layout: &GlobalLayout, library: &ComponentLibrary<T>) -> Result<Common<T>> {
    let grid = library.grid().clone();
    let mut type_names: Vec<String> = Vec::new();
    let mut element_type = Vec::with_capacity(layout.n_elements());
    for name in layout.element_types() {
        library.get(name)?;
        let idx = match type_names.iter().position(|t| t == name) {
            Some(i) => i,
            None => {
                type_names.push(name.clone());
                type_names.len() - 1
            }
        };
        element_type.push(idx);
    }
    let bases = type_names
        .par_iter()
        .map(|t| library.get(t).and_then(|b| b.matrix()))
        .collect::<Result<Vec<_>>>()?;
    let mut offsets = vec![0];
    for &t in &element_type {
        offsets.push(offsets.last().unwrap() + bases[t].cols());
    }
    Ok(Common {
        dof_map: DofMap::new(layout, &grid),
        grid,
        type_names,
        element_type,
        bases,
        offsets,
    })
}

fn require_scalar<T: Real>(library: &ComponentLibrary<T>) -> Result<()> {
    if library.n_fields() != 1 {
        return Err(Error::Incompatible(format!(
            "Poisson assembly needs scalar bases, library has {} fields",
            library.n_fields()
        )));
    }
    Ok(())
}

fn projected_stiffness<T: Real>(grid: &ElementGrid<T>, bases: &[Matrix<T>]) -> Vec<Matrix<T>> {
    let a = element_stiffness(grid);
    bases
        .par_iter()
        .map(|b| {
            let mut k = b.tr_matmul(&a.matmul(b));
            symmetrize(&mut k);
            k
        })
        .collect()
}

fn symmetrize<T: Real>(k: &mut Matrix<T>) {
    let half = T::lit(0.5);
    for j in 0..k.cols() {
        for i in 0..j {
            let v = (k[(i, j)] + k[(j, i)]) * half;
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
}

fn add_dense<T: Real>(t: &mut TripletBuilder<T>, r0: usize, c0: usize, m: &Matrix<T>) {
    for j in 0..m.cols() {
        for i in 0..m.rows() {
            let v = m[(i, j)];
            if v != T::zero() {
                t.add(r0 + i, c0 + j, v);
            }
        }
    }
}

/// Per element, the projected element load `B_eᵀ b_e`, stacked.
pub fn reduced_load<T: Real>(
    layout: &GlobalLayout,
    library: &ComponentLibrary<T>,
    source: &(dyn Fn(T, T) -> T + Sync),
) -> Result<Vec<T>> {
    require_scalar(library)?;
    let grid = library.grid();
    let mut bases: HashMap<&str, Matrix<T>> = HashMap::new();
    for t in layout.element_types() {
        if !bases.contains_key(t.as_str()) {
            bases.insert(t, library.get(t)?.matrix()?);
        }
    }
    let parts: Vec<Vec<T>> = (0..layout.n_elements())
        .into_par_iter()
        .map(|e| {
            let (r, c) = layout.element_cell(e);
            let be = element_load(
                grid,
                (T::from_usize_lossy(c), T::from_usize_lossy(r)),
                source,
            );
            bases[layout.element_types()[e].as_str()].tr_mul_vec(&be)
        })
        .collect();
    Ok(parts.concat())
}

/// Assembles the system for the requested formulation (Poisson).
pub fn assemble_poisson<T: Real>(
    layout: &GlobalLayout,
    library: &ComponentLibrary<T>,
    coupling: &CouplingConfig<T>,
) -> Result<ReducedSystem<T>> {
    coupling.validate()?;
    match coupling.formulation {
        Formulation::StrongCondensation => assemble_strong(layout, library),
        Formulation::DgPenalty => assemble_dg(layout, library, coupling.eta),
        Formulation::ConstrainedResidual => {
            assemble_constrained(layout, library, coupling.constraint_tol)
        }
    }
}

fn split_of<'a, T: Real>(
    library: &'a ComponentLibrary<T>,
    name: &str,
) -> Result<&'a SplitBasis<T>> {
    match library.get(name)? {
        ElementBasis::Split(s) => Ok(s),
        ElementBasis::Monolithic(_) => Err(Error::Incompatible(format!(
            "static condensation needs interior and port bases, '{name}' is monolithic"
        ))),
    }
}

/// Static condensation: interior coordinates are eliminated element by
/// element, leaving a Schur complement on shared port coordinates (one block
/// per geometric edge) and shared vertex values.
pub fn assemble_strong<T: Real>(
    layout: &GlobalLayout,
    library: &ComponentLibrary<T>,
) -> Result<ReducedSystem<T>> {
    require_scalar(library)?;
    let cm = common(layout, library)?;
    let splits: Vec<&SplitBasis<T>> = cm
        .type_names
        .iter()
        .map(|t| split_of(library, t))
        .collect::<Result<Vec<_>>>()?;
    let element_operators = projected_stiffness(&cm.grid, &cm.bases);

    let per_type = cm
        .type_names
        .par_iter()
        .enumerate()
        .map(|(t, name)| {
            let cols = &splits[t].field_columns()[0];
            let interior: Vec<usize> = cols.interior.clone().collect();
            let mut masters: Vec<usize> = cols.ports.iter().flat_map(|r| r.clone()).collect();
            masters.extend(cols.vertices);
            let k = &element_operators[t];
            let kii = Matrix::from_fn(interior.len(), interior.len(), |i, j| {
                k[(interior[i], interior[j])]
            });
            let kim = Matrix::from_fn(interior.len(), masters.len(), |i, j| {
                k[(interior[i], masters[j])]
            });
            let kmm = Matrix::from_fn(masters.len(), masters.len(), |i, j| {
                k[(masters[i], masters[j])]
            });
            let chol = Cholesky::factor(&kii).map_err(|e| Error::CondensationFailure {
                element_type: name.clone(),
                reason: e.to_string(),
            })?;
            let kii_kim = chol.solve_matrix(&kim);
            let mut schur = kmm;
            schur.add_block(0, 0, &kim.tr_matmul(&kii_kim), -T::one());
            symmetrize(&mut schur);
            Ok(TypeCondensation {
                interior,
                masters,
                kii: chol,
                kii_kim,
                schur,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    // global numbering: edge port blocks in interface order, then vertices
    let mut edge_of: HashMap<(usize, Side), usize> = HashMap::new();
    let mut edge_offset = Vec::with_capacity(layout.interfaces().len());
    let mut n_master = 0;
    for f in layout.interfaces() {
        let ea = layout.element_index(f.a.0, f.a.1);
        let eb = layout.element_index(f.b.0, f.b.1);
        let pa = splits[cm.element_type[ea]].fields[0].port(f.side_a());
        let pb = splits[cm.element_type[eb]].fields[0].port(f.side_b());
        if pa.modes != pb.modes {
            return Err(Error::Incompatible(format!(
                "elements on edge {} use different port bases; strong coupling needs a shared port basis",
                f.id
            )));
        }
        edge_of.insert((ea, f.side_a()), f.id);
        edge_of.insert((eb, f.side_b()), f.id);
        edge_offset.push(n_master);
        n_master += pa.r();
    }
    let mut vertex_id: BTreeMap<usize, usize> = BTreeMap::new();
    let mut master_map = Vec::with_capacity(layout.n_elements());
    for e in 0..layout.n_elements() {
        let t = cm.element_type[e];
        let blocks = &splits[t].fields[0];
        let mut map = Vec::with_capacity(per_type[t].masters.len());
        for side in Side::ALL {
            let r = blocks.port(side).r();
            match edge_of.get(&(e, side)) {
                Some(&id) => map.extend((0..r).map(|k| Some(edge_offset[id] + k))),
                None => map.extend(std::iter::repeat_n(None, r)),
            }
        }
        for corner in Corner::ALL {
            let g = cm.dof_map.local_to_global(e)[cm.grid.corner_node(corner)];
            if cm.dof_map.is_constrained(g) {
                map.push(None);
            } else {
                let next = n_master + vertex_id.len();
                map.push(Some(*vertex_id.entry(g).or_insert(next)));
            }
        }
        master_map.push(map);
    }
    n_master += vertex_id.len();

    let mut trip = TripletBuilder::new(n_master, n_master);
    for e in 0..layout.n_elements() {
        let s = &per_type[cm.element_type[e]].schur;
        let map = &master_map[e];
        for (j, gj) in map.iter().enumerate() {
            let Some(gj) = gj else { continue };
            for (i, gi) in map.iter().enumerate() {
                if let Some(gi) = gi {
                    let v = s[(i, j)];
                    if v != T::zero() {
                        trip.add(*gi, *gj, v);
                    }
                }
            }
        }
    }
    Ok(ReducedSystem {
        formulation: Formulation::StrongCondensation,
        layout: layout.clone(),
        grid: cm.grid,
        dof_map: cm.dof_map,
        n_fields: 1,
        type_names: cm.type_names,
        element_type: cm.element_type,
        bases: cm.bases,
        element_operators,
        offsets: cm.offsets,
        operator: Some(trip.build()),
        constraints: None,
        condensation: Some(Condensation {
            per_type,
            master_map,
            n_master,
        }),
        eta: None,
    })
}

/// 1-D linear mass matrix along an element edge.
fn edge_mass<T: Real>(grid: &ElementGrid<T>) -> Matrix<T> {
    let m = grid.nodes_per_edge();
    let h6 = grid.h() / T::lit(6.0);
    let mut mass = Matrix::zeros(m, m);
    for k in 0..m - 1 {
        mass[(k, k)] += h6 + h6;
        mass[(k + 1, k + 1)] += h6 + h6;
        mass[(k, k + 1)] += h6;
        mass[(k + 1, k)] += h6;
    }
    mass
}

/// Trace and outward normal-derivative trace of a basis on one side. The
/// normal derivative of a bilinear field is exact as a one-sided difference.
fn side_traces<T: Real>(
    grid: &ElementGrid<T>,
    b: &Matrix<T>,
    side: Side,
) -> (Matrix<T>, Matrix<T>) {
    let edge = grid.side_nodes(side);
    let inner = grid.side_inner_layer(side);
    let h = grid.h();
    let tr = Matrix::from_fn(edge.len(), b.cols(), |i, j| b[(edge[i], j)]);
    let dn = Matrix::from_fn(edge.len(), b.cols(), |i, j| {
        (b[(edge[i], j)] - b[(inner[i], j)]) / h
    });
    (tr, dn)
}

/// `−(JᵀMG + GᵀMJ) + σ JᵀMJ`.
fn face_block<T: Real>(j: &Matrix<T>, g: &Matrix<T>, mass: &Matrix<T>, sigma: T) -> Matrix<T> {
    let mj = mass.matmul(j);
    let mg = mass.matmul(g);
    let mut out = j.tr_matmul(&mj);
    out.scale(sigma);
    out.add_block(0, 0, &j.tr_matmul(&mg), -T::one());
    out.add_block(0, 0, &g.tr_matmul(&mj), -T::one());
    symmetrize(&mut out);
    out
}

/// Symmetric interior-penalty DG with face coefficient `eta / h`; outer
/// Dirichlet sides receive the matching Nitsche terms.
pub fn assemble_dg<T: Real>(
    layout: &GlobalLayout,
    library: &ComponentLibrary<T>,
    eta: T,
) -> Result<ReducedSystem<T>> {
    if !(eta > T::zero()) {
        return Err(Error::Config(format!("eta must be positive, got {eta}")));
    }
    require_scalar(library)?;
    let cm = common(layout, library)?;
    let element_operators = projected_stiffness(&cm.grid, &cm.bases);
    let grid = &cm.grid;
    let mass = edge_mass(grid);
    let sigma = eta / grid.h();
    let n = *cm.offsets.last().unwrap();
    let mut trip = TripletBuilder::new(n, n);
    for e in 0..layout.n_elements() {
        add_dense(
            &mut trip,
            cm.offsets[e],
            cm.offsets[e],
            &element_operators[cm.element_type[e]],
        );
    }
    let half = T::lit(0.5);
    for f in layout.interfaces() {
        let ea = layout.element_index(f.a.0, f.a.1);
        let eb = layout.element_index(f.b.0, f.b.1);
        let (ta, da) = side_traces(grid, &cm.bases[cm.element_type[ea]], f.side_a());
        let (tb, db) = side_traces(grid, &cm.bases[cm.element_type[eb]], f.side_b());
        let (ra, rb) = (ta.cols(), tb.cols());
        let m = ta.rows();
        // unknowns (c_a, c_b): jump = T_a c_a − T_b c_b, mean flux along n_a
        let j = Matrix::from_fn(m, ra + rb, |i, k| {
            if k < ra {
                ta[(i, k)]
            } else {
                -tb[(i, k - ra)]
            }
        });
        let g = Matrix::from_fn(m, ra + rb, |i, k| {
            if k < ra {
                half * da[(i, k)]
            } else {
                -half * db[(i, k - ra)]
            }
        });
        let blk = face_block(&j, &g, &mass, sigma);
        let idx: Vec<usize> = (0..ra)
            .map(|k| cm.offsets[ea] + k)
            .chain((0..rb).map(|k| cm.offsets[eb] + k))
            .collect();
        for q in 0..ra + rb {
            for p in 0..ra + rb {
                let v = blk[(p, q)];
                if v != T::zero() {
                    trip.add(idx[p], idx[q], v);
                }
            }
        }
    }
    for e in 0..layout.n_elements() {
        let (r, c) = layout.element_cell(e);
        for side in Side::ALL {
            if layout.is_outer(r, c, side) {
                let (t, d) = side_traces(grid, &cm.bases[cm.element_type[e]], side);
                add_dense(
                    &mut trip,
                    cm.offsets[e],
                    cm.offsets[e],
                    &face_block(&t, &d, &mass, sigma),
                );
            }
        }
    }
    Ok(ReducedSystem {
        formulation: Formulation::DgPenalty,
        layout: layout.clone(),
        grid: cm.grid,
        dof_map: cm.dof_map,
        n_fields: 1,
        type_names: cm.type_names,
        element_type: cm.element_type,
        bases: cm.bases,
        element_operators,
        offsets: cm.offsets,
        operator: Some(trip.build()),
        constraints: None,
        condensation: None,
        eta: Some(eta),
    })
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Merges two classes; false when they were already one.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra.max(rb)] = ra.min(rb);
        true
    }
}

fn constraints_from<T: Real>(
    layout: &GlobalLayout,
    cm: &Common<T>,
    n_fields: usize,
    tol: T,
) -> Result<Constraints<T>> {
    let grid = &cm.grid;
    let nn = grid.n_nodes();
    let n_el = layout.n_elements();
    let n = *cm.offsets.last().unwrap();
    let ground = n_fields * n_el * nn;
    let copy_id = |f: usize, e: usize, k: usize| (f * n_el + e) * nn + k;
    let mut uf = UnionFind::new(ground + 1);
    // (element, row in B_e, sign) terms per constraint row
    let mut rows: Vec<Vec<(usize, usize, T)>> = Vec::new();
    for f in 0..n_fields {
        for iface in layout.interfaces() {
            let ea = layout.element_index(iface.a.0, iface.a.1);
            let eb = layout.element_index(iface.b.0, iface.b.1);
            let (sa, sb) = cm.dof_map.interface_set(iface.id).expect("interface set");
            for (&ka, &kb) in sa.iter().zip(sb) {
                if uf.union(copy_id(f, ea, ka), copy_id(f, eb, kb)) {
                    rows.push(vec![
                        (ea, f * nn + ka, T::one()),
                        (eb, f * nn + kb, -T::one()),
                    ]);
                }
            }
        }
        for e in 0..n_el {
            for &k in cm.dof_map.boundary_set(e) {
                if uf.union(copy_id(f, e, k), ground) {
                    rows.push(vec![(e, f * nn + k, T::one())]);
                }
            }
        }
    }
    let mut c = Matrix::zeros(rows.len(), n);
    for (i, terms) in rows.iter().enumerate() {
        for &(e, row, s) in terms {
            let b = &cm.bases[cm.element_type[e]];
            for j in 0..b.cols() {
                c[(i, cm.offsets[e] + j)] += s * b[(row, j)];
            }
        }
    }
    if c.rows() == 0 {
        return Ok(Constraints {
            matrix: c,
            z: Matrix::identity(n),
            rank: 0,
        });
    }
    let svd = jacobi_svd(&c.transpose());
    let smax = svd.sigma[0];
    let rank = svd.sigma.iter().take_while(|&&s| s > tol * smax).count();
    if rank >= n {
        return Err(Error::InfeasibleCoupling);
    }
    let z = orthogonal_complement(&svd.u.leading_columns(rank));
    Ok(Constraints { matrix: c, z, rank })
}

/// Nodal continuity rows across every interface (and zero rows on outer
/// Dirichlet nodes), with the rank-filtered null-space basis `Z`.
pub fn build_continuity_constraints<T: Real>(
    layout: &GlobalLayout,
    library: &ComponentLibrary<T>,
    constraint_tol: T,
) -> Result<Constraints<T>> {
    let cm = common(layout, library)?;
    constraints_from(layout, &cm, library.n_fields(), constraint_tol)
}

/// Constrained formulation for Poisson: `(Zᵀ K Z) y = Zᵀ f` with
/// `K = diag(B_eᵀ A_e B_e)`.
pub fn assemble_constrained<T: Real>(
    layout: &GlobalLayout,
    library: &ComponentLibrary<T>,
    constraint_tol: T,
) -> Result<ReducedSystem<T>> {
    require_scalar(library)?;
    let cm = common(layout, library)?;
    let cons = constraints_from(layout, &cm, 1, constraint_tol)?;
    let element_operators = projected_stiffness(&cm.grid, &cm.bases);
    let z = &cons.z;
    let mut kz = Matrix::zeros(z.rows(), z.cols());
    for e in 0..layout.n_elements() {
        let k = &element_operators[cm.element_type[e]];
        let o = cm.offsets[e];
        for col in 0..z.cols() {
            let zc = &z.col(col)[o..o + k.cols()];
            let prod = k.mul_vec(zc);
            kz.col_mut(col)[o..o + k.rows()].copy_from_slice(&prod);
        }
    }
    let mut reduced = z.tr_matmul(&kz);
    symmetrize(&mut reduced);
    let mut trip = TripletBuilder::new(reduced.rows(), reduced.cols());
    add_dense(&mut trip, 0, 0, &reduced);
    Ok(ReducedSystem {
        formulation: Formulation::ConstrainedResidual,
        layout: layout.clone(),
        grid: cm.grid,
        dof_map: cm.dof_map,
        n_fields: 1,
        type_names: cm.type_names,
        element_type: cm.element_type,
        bases: cm.bases,
        element_operators,
        offsets: cm.offsets,
        operator: Some(trip.build()),
        constraints: Some(cons),
        condensation: None,
        eta: None,
    })
}

/// Constrained system for time-dependent transport (no stiffness operator).
pub fn assemble_constrained_transport<T: Real>(
    layout: &GlobalLayout,
    library: &ComponentLibrary<T>,
    constraint_tol: T,
) -> Result<ReducedSystem<T>> {
    let cm = common(layout, library)?;
    let n_fields = library.n_fields();
    let cons = constraints_from(layout, &cm, n_fields, constraint_tol)?;
    Ok(ReducedSystem {
        formulation: Formulation::ConstrainedResidual,
        layout: layout.clone(),
        grid: cm.grid,
        dof_map: cm.dof_map,
        n_fields,
        type_names: cm.type_names,
        element_type: cm.element_type,
        bases: cm.bases,
        element_operators: Vec::new(),
        offsets: cm.offsets,
        operator: None,
        constraints: Some(cons),
        condensation: None,
        eta: None,
    })
}
