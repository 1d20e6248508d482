//! Reference element discretisation, global tiling and index bookkeeping.
//!
//! Every element is the unit square carrying a uniform `(n+1) × (n+1)` nodal
//! grid. Local node `(i, j)` (row `i` along y, column `j` along x) has index
//! `i·(n+1) + j`. Element `(r, c)` of an `M × N` layout occupies
//! `[c, c+1] × [r, r+1]`, so the global domain is `[0, N] × [0, M]`.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Uniform nodal grid on the unit reference square.
#[derive(Clone, Debug, PartialEq)]
pub struct ElementGrid<T> {
    n_cells: usize,
    h: T,
    node_coords: Vec<(T, T)>,
}

/// Side of the reference square.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Left, Side::Right, Side::Bottom, Side::Top];
}

/// Corner of the reference square.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Corner {
    BottomLeft,
    BottomRight,
    TopLeft,
    TopRight,
}

impl Corner {
    pub const ALL: [Corner; 4] = [
        Corner::BottomLeft,
        Corner::BottomRight,
        Corner::TopLeft,
        Corner::TopRight,
    ];
}

pub fn build_element_grid<T: Real>(n_cells: usize) -> Result<ElementGrid<T>> {
    ElementGrid::new(n_cells)
}

impl<T: Real> ElementGrid<T> {
    pub fn new(n_cells: usize) -> Result<Self> {
        if n_cells < 2 {
            return Err(Error::InvalidResolution(n_cells));
        }
        let nf = T::from_usize_lossy(n_cells);
        let m = n_cells + 1;
        // coordinates by division so both endpoints are exact
        let node_coords = (0..m * m)
            .map(|k| {
                (
                    T::from_usize_lossy(k % m) / nf,
                    T::from_usize_lossy(k / m) / nf,
                )
            })
            .collect();
        Ok(Self {
            n_cells,
            h: T::one() / nf,
            node_coords,
        })
    }

    #[inline]
    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    #[inline]
    pub fn h(&self) -> T {
        self.h
    }

    /// Nodes along one edge, `n_cells + 1`.
    #[inline]
    pub fn nodes_per_edge(&self) -> usize {
        self.n_cells + 1
    }

    #[inline]
    pub fn n_nodes(&self) -> usize {
        self.nodes_per_edge() * self.nodes_per_edge()
    }

    pub fn node_coords(&self) -> &[(T, T)] {
        &self.node_coords
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize) -> usize {
        i * self.nodes_per_edge() + j
    }

    /// All nodes on a side, ordered by increasing coordinate along the side.
    pub fn side_nodes(&self, side: Side) -> Vec<usize> {
        let n = self.n_cells;
        (0..=n)
            .map(|k| match side {
                Side::Left => self.node(k, 0),
                Side::Right => self.node(k, n),
                Side::Bottom => self.node(0, k),
                Side::Top => self.node(n, k),
            })
            .collect()
    }

    /// Side nodes without the two end corners.
    pub fn side_interior_nodes(&self, side: Side) -> Vec<usize> {
        let all = self.side_nodes(side);
        all[1..all.len() - 1].to_vec()
    }

    /// Nodes one layer inside a side, paired with `side_nodes`.
    pub(crate) fn side_inner_layer(&self, side: Side) -> Vec<usize> {
        let n = self.n_cells;
        (0..=n)
            .map(|k| match side {
                Side::Left => self.node(k, 1),
                Side::Right => self.node(k, n - 1),
                Side::Bottom => self.node(1, k),
                Side::Top => self.node(n - 1, k),
            })
            .collect()
    }

    pub fn corner_node(&self, corner: Corner) -> usize {
        let n = self.n_cells;
        match corner {
            Corner::BottomLeft => self.node(0, 0),
            Corner::BottomRight => self.node(0, n),
            Corner::TopLeft => self.node(n, 0),
            Corner::TopRight => self.node(n, n),
        }
    }

    /// The `(n-1)²` nodes off the element boundary, row-major.
    pub fn inner_nodes(&self) -> Vec<usize> {
        let n = self.n_cells;
        (1..n)
            .flat_map(|i| (1..n).map(move |j| (i, j)))
            .map(|(i, j)| self.node(i, j))
            .collect()
    }
}

/// Outer boundary treatment of a layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryKind {
    DirichletZero,
    Periodic,
}

/// Direction of a shared edge. A vertical edge separates a left element `a`
/// from a right element `b`; a horizontal edge separates `a` (below) from `b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Orientation {
    Vertical,
    Horizontal,
}

/// Shared edge between two elements (possibly through a periodic wrap).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Interface {
    pub id: usize,
    pub orientation: Orientation,
    pub a: (usize, usize),
    pub b: (usize, usize),
    pub wrap: bool,
}

impl Interface {
    /// Side of element `a` lying on this edge.
    pub fn side_a(&self) -> Side {
        match self.orientation {
            Orientation::Vertical => Side::Right,
            Orientation::Horizontal => Side::Top,
        }
    }

    pub fn side_b(&self) -> Side {
        match self.orientation {
            Orientation::Vertical => Side::Left,
            Orientation::Horizontal => Side::Bottom,
        }
    }
}

/// `M × N` tiling of typed elements.
#[derive(Clone, Debug, PartialEq)]
pub struct GlobalLayout {
    rows: usize,
    cols: usize,
    element_types: Vec<String>,
    bc: BoundaryKind,
    self_wrap: bool,
    interfaces: Vec<Interface>,
}

pub fn build_layout(
    rows: usize,
    cols: usize,
    uniform_type: &str,
    bc: BoundaryKind,
) -> Result<GlobalLayout> {
    GlobalLayout::uniform(rows, cols, uniform_type, bc)
}

pub fn build_layout_with_types(
    rows: usize,
    cols: usize,
    types: &HashMap<(usize, usize), String>,
    bc: BoundaryKind,
) -> Result<GlobalLayout> {
    GlobalLayout::with_types(rows, cols, types, bc, false)
}

impl GlobalLayout {
    pub fn uniform(rows: usize, cols: usize, uniform_type: &str, bc: BoundaryKind) -> Result<Self> {
        Self::new(
            rows,
            cols,
            vec![uniform_type.to_string(); rows * cols],
            bc,
            false,
        )
    }

    pub fn with_types(
        rows: usize,
        cols: usize,
        types: &HashMap<(usize, usize), String>,
        bc: BoundaryKind,
        self_wrap: bool,
    ) -> Result<Self> {
        let mut list = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                let t = types
                    .get(&(r, c))
                    .ok_or(Error::LayoutIncomplete { row: r, col: c })?;
                list.push(t.clone());
            }
        }
        Self::new(rows, cols, list, bc, self_wrap)
    }

    /// `element_types` is row-major. `self_wrap` permits periodic layouts with
    /// a single row or column, where an element neighbours itself.
    pub fn new(
        rows: usize,
        cols: usize,
        element_types: Vec<String>,
        bc: BoundaryKind,
        self_wrap: bool,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidLayout(format!(
                "{rows}x{cols} has no elements"
            )));
        }
        if element_types.len() != rows * cols {
            let k = element_types.len();
            return Err(Error::LayoutIncomplete {
                row: k / cols,
                col: k % cols,
            });
        }
        if bc == BoundaryKind::Periodic && (rows < 2 || cols < 2) && !self_wrap {
            return Err(Error::InvalidLayout(format!(
                "periodic {rows}x{cols} layout wraps an element onto itself; self-wrap must be flagged"
            )));
        }
        let mut layout = Self {
            rows,
            cols,
            element_types,
            bc,
            self_wrap,
            interfaces: Vec::new(),
        };
        layout.interfaces = layout.enumerate_interfaces();
        Ok(layout)
    }

    fn enumerate_interfaces(&self) -> Vec<Interface> {
        let periodic = self.bc == BoundaryKind::Periodic;
        let mut out = Vec::new();
        for r in 0..self.rows {
            for c in 0..self.cols {
                if c + 1 < self.cols || periodic {
                    out.push(Interface {
                        id: out.len(),
                        orientation: Orientation::Vertical,
                        a: (r, c),
                        b: (r, (c + 1) % self.cols),
                        wrap: c + 1 == self.cols,
                    });
                }
            }
        }
        for r in 0..self.rows {
            if r + 1 < self.rows || periodic {
                for c in 0..self.cols {
                    out.push(Interface {
                        id: out.len(),
                        orientation: Orientation::Horizontal,
                        a: (r, c),
                        b: ((r + 1) % self.rows, c),
                        wrap: r + 1 == self.rows,
                    });
                }
            }
        }
        out
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn n_elements(&self) -> usize {
        self.rows * self.cols
    }

    pub fn bc(&self) -> BoundaryKind {
        self.bc
    }

    pub fn self_wrap(&self) -> bool {
        self.self_wrap
    }

    #[inline]
    pub fn element_index(&self, r: usize, c: usize) -> usize {
        r * self.cols + c
    }

    #[inline]
    pub fn element_cell(&self, e: usize) -> (usize, usize) {
        (e / self.cols, e % self.cols)
    }

    pub fn element_type(&self, r: usize, c: usize) -> &str {
        &self.element_types[self.element_index(r, c)]
    }

    pub fn element_types(&self) -> &[String] {
        &self.element_types
    }

    /// Internal (and, when periodic, wrap-around) interfaces; id = position.
    pub fn interfaces(&self) -> &[Interface] {
        &self.interfaces
    }

    pub fn interface(&self, edge_id: usize) -> Result<&Interface> {
        self.interfaces
            .get(edge_id)
            .ok_or(Error::UnknownEdge(edge_id))
    }

    /// Whether a side of element `(r, c)` lies on the outer Dirichlet boundary.
    pub fn is_outer(&self, r: usize, c: usize, side: Side) -> bool {
        if self.bc == BoundaryKind::Periodic {
            return false;
        }
        match side {
            Side::Left => c == 0,
            Side::Right => c + 1 == self.cols,
            Side::Bottom => r == 0,
            Side::Top => r + 1 == self.rows,
        }
    }

    /// Domain extent `(width, height) = (N, M)` in element units.
    pub fn extent(&self) -> (usize, usize) {
        (self.cols, self.rows)
    }
}

/// Global node numbering and per-element index partitions.
#[derive(Clone, Debug)]
pub struct DofMap {
    n_cells: usize,
    bc: BoundaryKind,
    global_nx: usize,
    global_ny: usize,
    local_to_global: Vec<Vec<usize>>,
    constrained: Vec<bool>,
    free_index: Vec<Option<usize>>,
    n_free: usize,
    /// Per interface id: (side-A local nodes, side-B local nodes), paired in order.
    interface_sets: Vec<(Vec<usize>, Vec<usize>)>,
    interior_sets: Vec<Vec<usize>>,
    element_interface_sets: Vec<Vec<usize>>,
    boundary_sets: Vec<Vec<usize>>,
    copies: Vec<Vec<(usize, usize)>>,
}

pub fn build_dof_map<T: Real>(layout: &GlobalLayout, grid: &ElementGrid<T>) -> DofMap {
    DofMap::new(layout, grid)
}

impl DofMap {
    pub fn new<T: Real>(layout: &GlobalLayout, grid: &ElementGrid<T>) -> Self {
        let n = grid.n_cells();
        let (gnx, gny) = match layout.bc() {
            BoundaryKind::DirichletZero => (layout.cols() * n + 1, layout.rows() * n + 1),
            BoundaryKind::Periodic => (layout.cols() * n, layout.rows() * n),
        };
        let n_global = gnx * gny;
        let m = grid.nodes_per_edge();
        let mut local_to_global = Vec::with_capacity(layout.n_elements());
        let mut copies = vec![Vec::new(); n_global];
        for e in 0..layout.n_elements() {
            let (r, c) = layout.element_cell(e);
            let map: Vec<usize> = (0..m * m)
                .map(|k| {
                    let (i, j) = (k / m, k % m);
                    let gi = (r * n + i) % gny;
                    let gj = (c * n + j) % gnx;
                    gi * gnx + gj
                })
                .collect();
            for (k, &g) in map.iter().enumerate() {
                copies[g].push((e, k));
            }
            local_to_global.push(map);
        }

        let mut constrained = vec![false; n_global];
        if layout.bc() == BoundaryKind::DirichletZero {
            for gi in 0..gny {
                for gj in 0..gnx {
                    if gi == 0 || gj == 0 || gi + 1 == gny || gj + 1 == gnx {
                        constrained[gi * gnx + gj] = true;
                    }
                }
            }
        }
        let mut free_index = vec![None; n_global];
        let mut n_free = 0;
        for g in 0..n_global {
            if !constrained[g] {
                free_index[g] = Some(n_free);
                n_free += 1;
            }
        }

        let interface_sets = layout
            .interfaces()
            .iter()
            .map(|f| (grid.side_nodes(f.side_a()), grid.side_nodes(f.side_b())))
            .collect();

        let mut interior_sets = Vec::new();
        let mut element_interface_sets = Vec::new();
        let mut boundary_sets = Vec::new();
        for e in 0..layout.n_elements() {
            let (r, c) = layout.element_cell(e);
            let mut kind = vec![0u8; m * m]; // 0 interior, 1 interface, 2 outer
            for side in Side::ALL {
                let tag = if layout.is_outer(r, c, side) { 2 } else { 1 };
                for k in grid.side_nodes(side) {
                    kind[k] = kind[k].max(tag);
                }
            }
            let pick = |t: u8| (0..m * m).filter(|&k| kind[k] == t).collect::<Vec<_>>();
            interior_sets.push(pick(0));
            element_interface_sets.push(pick(1));
            boundary_sets.push(pick(2));
        }

        Self {
            n_cells: n,
            bc: layout.bc(),
            global_nx: gnx,
            global_ny: gny,
            local_to_global,
            constrained,
            free_index,
            n_free,
            interface_sets,
            interior_sets,
            element_interface_sets,
            boundary_sets,
            copies,
        }
    }

    pub fn n_global(&self) -> usize {
        self.global_nx * self.global_ny
    }

    pub fn global_shape(&self) -> (usize, usize) {
        (self.global_nx, self.global_ny)
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn bc(&self) -> BoundaryKind {
        self.bc
    }

    pub fn n_elements(&self) -> usize {
        self.local_to_global.len()
    }

    pub fn local_to_global(&self, e: usize) -> &[usize] {
        &self.local_to_global[e]
    }

    pub fn is_constrained(&self, g: usize) -> bool {
        self.constrained[g]
    }

    /// Index among unconstrained nodes, `None` for Dirichlet nodes.
    pub fn free_index(&self, g: usize) -> Option<usize> {
        self.free_index[g]
    }

    pub fn n_free(&self) -> usize {
        self.n_free
    }

    pub fn interface_set(&self, edge_id: usize) -> Option<&(Vec<usize>, Vec<usize>)> {
        self.interface_sets.get(edge_id)
    }

    pub fn interior_set(&self, e: usize) -> &[usize] {
        &self.interior_sets[e]
    }

    /// Element nodes on a shared edge but not on the outer boundary.
    pub fn element_interface_set(&self, e: usize) -> &[usize] {
        &self.element_interface_sets[e]
    }

    pub fn boundary_set(&self, e: usize) -> &[usize] {
        &self.boundary_sets[e]
    }

    /// Every `(element, local node)` copy of a global node, element order.
    pub fn copies(&self, g: usize) -> &[(usize, usize)] {
        &self.copies[g]
    }

    /// Physical coordinates of a global node (periodic nodes are reported in
    /// the fundamental cell).
    pub fn global_coords<T: Real>(&self, g: usize) -> (T, T) {
        let nf = T::from_usize_lossy(self.n_cells);
        let (gi, gj) = (g / self.global_nx, g % self.global_nx);
        (T::from_usize_lossy(gj) / nf, T::from_usize_lossy(gi) / nf)
    }

    /// Splits a global field (`n_components` stacked blocks) into element-local
    /// vectors with the same component stacking.
    pub fn scatter<T: Real>(&self, global: &[T], n_components: usize) -> Vec<Vec<T>> {
        let ng = self.n_global();
        assert_eq!(
            global.len(),
            ng * n_components,
            "scatter: wrong global length"
        );
        self.local_to_global
            .iter()
            .map(|map| {
                (0..n_components)
                    .flat_map(|comp| map.iter().map(move |&g| global[comp * ng + g]))
                    .collect()
            })
            .collect()
    }

    /// Averages element-local copies back into a global field.
    pub fn gather<T: Real>(&self, locals: &[Vec<T>], n_components: usize) -> Vec<T> {
        let ng = self.n_global();
        let nl = self.local_to_global.first().map_or(0, |m| m.len());
        let mut out = vec![T::zero(); ng * n_components];
        for comp in 0..n_components {
            for g in 0..ng {
                let cs = &self.copies[g];
                let first = locals[cs[0].0][comp * nl + cs[0].1];
                out[comp * ng + g] = if cs.iter().all(|&(e, k)| locals[e][comp * nl + k] == first) {
                    first
                } else {
                    let sum: T = cs.iter().map(|&(e, k)| locals[e][comp * nl + k]).sum();
                    sum / T::from_usize_lossy(cs.len())
                };
            }
        }
        out
    }

    /// Largest difference between copies of the same global node.
    pub fn max_copy_jump<T: Real>(&self, locals: &[Vec<T>], n_components: usize) -> T {
        let nl = self.local_to_global.first().map_or(0, |m| m.len());
        let mut worst = T::zero();
        for comp in 0..n_components {
            for cs in &self.copies {
                let vals = cs.iter().map(|&(e, k)| locals[e][comp * nl + k]);
                let (lo, hi) = vals.fold((T::infinity(), T::neg_infinity()), |(lo, hi), v| {
                    (lo.min(v), hi.max(v))
                });
                if cs.len() > 1 {
                    worst = worst.max(hi - lo);
                }
            }
        }
        worst
    }
}

/// Local node pairs `(side A, side B)` across a shared edge.
pub fn interface_trace_indices<T: Real>(
    layout: &GlobalLayout,
    grid: &ElementGrid<T>,
    edge_id: usize,
) -> Result<Vec<(usize, usize)>> {
    let f = layout.interface(edge_id)?;
    let a = grid.side_nodes(f.side_a());
    let b = grid.side_nodes(f.side_b());
    Ok(a.into_iter().zip(b).collect())
}
