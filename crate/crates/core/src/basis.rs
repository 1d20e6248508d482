//! POD compression of snapshot sets into orthonormal element bases, either
//! monolithic or split into interior, port (edge) and vertex blocks.

use std::fs;
use std::path::Path;

use crate::archive::{write_file, Reader, Writer};
use crate::error::{Error, Result};
use crate::grid::{Corner, ElementGrid, Orientation, Side};
use crate::linalg::{dot, householder_r, jacobi_svd, norm2, symmetric_eigen, Matrix};
use crate::sampler::SnapshotSet;
use crate::scalar::Real;

/// Default retained energy.
pub const DEFAULT_EPSILON: f64 = 0.9999;

/// How many leading modes to keep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Truncation<T> {
    /// Smallest `r` whose energy fraction reaches `ε`.
    Energy(T),
    Fixed(usize),
    /// All `p = min(rows, cols)` modes.
    Full,
}

/// Truncated orthonormal basis with the full singular value spectrum.
#[derive(Clone, Debug, PartialEq)]
pub struct PodBasis<T> {
    pub element_type: String,
    pub n_cells: usize,
    /// `rows × r`, orthonormal columns.
    pub modes: Matrix<T>,
    /// All `p` singular values, non-increasing.
    pub singular_values: Vec<T>,
}

impl<T: Real> PodBasis<T> {
    pub fn r(&self) -> usize {
        self.modes.cols()
    }

    pub fn p(&self) -> usize {
        self.singular_values.len()
    }

    pub fn rows(&self) -> usize {
        self.modes.rows()
    }

    /// Retained fraction of the squared singular values.
    pub fn energy_fraction(&self) -> T {
        energy_fraction(&self.singular_values, self.r())
    }

    /// Coordinates `Φᵀx`.
    pub fn project(&self, x: &[T]) -> Result<Vec<T>> {
        project(&self.modes, x)
    }

    /// Field `Φc`.
    pub fn reconstruct(&self, c: &[T]) -> Result<Vec<T>> {
        reconstruct(&self.modes, c)
    }
}

/// Orthonormal basis for traces on one edge class, pooled over the two sides
/// of that orientation.
#[derive(Clone, Debug, PartialEq)]
pub struct PortBasis<T> {
    pub class: Orientation,
    /// `(n_cells - 1) × r_port`.
    pub modes: Matrix<T>,
    pub singular_values: Vec<T>,
}

impl<T: Real> PortBasis<T> {
    pub fn r(&self) -> usize {
        self.modes.cols()
    }
}

/// Interior and port blocks of one field component.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldBlocks<T> {
    pub interior: PodBasis<T>,
    pub vertical: PortBasis<T>,
    pub horizontal: PortBasis<T>,
}

impl<T: Real> FieldBlocks<T> {
    pub fn port(&self, side: Side) -> &PortBasis<T> {
        match side {
            Side::Left | Side::Right => &self.vertical,
            Side::Bottom | Side::Top => &self.horizontal,
        }
    }
}

/// Column ranges of one field inside the element basis matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FieldColumns {
    pub interior: std::ops::Range<usize>,
    /// Indexed like [`Side::ALL`].
    pub ports: [std::ops::Range<usize>; 4],
    /// Indexed like [`Corner::ALL`].
    pub vertices: [usize; 4],
}

/// Split basis: per component an interior POD block, one port basis per edge
/// orientation and nodal identity columns for the four vertices.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitBasis<T> {
    pub element_type: String,
    pub n_cells: usize,
    pub fields: Vec<FieldBlocks<T>>,
}

impl<T: Real> SplitBasis<T> {
    pub fn field_columns(&self) -> Vec<FieldColumns> {
        let mut off = 0;
        self.fields
            .iter()
            .map(|f| {
                let interior = off..off + f.interior.r();
                off = interior.end;
                let ports = Side::ALL.map(|s| {
                    let r = off..off + f.port(s).r();
                    off = r.end;
                    r
                });
                let vertices = [off, off + 1, off + 2, off + 3];
                off += 4;
                FieldColumns {
                    interior,
                    ports,
                    vertices,
                }
            })
            .collect()
    }
}

/// Reduced basis attached to one element type.
#[derive(Clone, Debug, PartialEq)]
pub enum ElementBasis<T> {
    Monolithic(PodBasis<T>),
    Split(SplitBasis<T>),
}

impl<T: Real> ElementBasis<T> {
    pub fn element_type(&self) -> &str {
        match self {
            Self::Monolithic(b) => &b.element_type,
            Self::Split(b) => &b.element_type,
        }
    }

    pub fn n_cells(&self) -> usize {
        match self {
            Self::Monolithic(b) => b.n_cells,
            Self::Split(b) => b.n_cells,
        }
    }

    /// Number of stacked field components per element vector.
    pub fn n_fields(&self) -> usize {
        match self {
            Self::Monolithic(b) => b.rows() / ((b.n_cells + 1) * (b.n_cells + 1)),
            Self::Split(b) => b.fields.len(),
        }
    }

    /// Columns of the element basis matrix.
    pub fn dim(&self) -> usize {
        match self {
            Self::Monolithic(b) => b.r(),
            Self::Split(b) => b
                .fields
                .iter()
                .map(|f| f.interior.r() + 2 * f.vertical.r() + 2 * f.horizontal.r() + 4)
                .sum(),
        }
    }

    /// Element basis matrix `B_e` over the stacked component vector. The
    /// blocks of a split basis occupy disjoint rows, so columns stay
    /// orthonormal.
    pub fn matrix(&self) -> Result<Matrix<T>> {
        match self {
            Self::Monolithic(b) => Ok(b.modes.clone()),
            Self::Split(b) => {
                let grid = ElementGrid::<T>::new(b.n_cells)?;
                let nn = grid.n_nodes();
                let cols = b.field_columns();
                let mut m = Matrix::zeros(nn * b.fields.len(), self.dim());
                for (f, (blocks, fc)) in b.fields.iter().zip(&cols).enumerate() {
                    let base = f * nn;
                    place(
                        &mut m,
                        &blocks.interior.modes,
                        &grid.inner_nodes(),
                        base,
                        fc.interior.start,
                    );
                    for (k, side) in Side::ALL.iter().enumerate() {
                        place(
                            &mut m,
                            &blocks.port(*side).modes,
                            &grid.side_interior_nodes(*side),
                            base,
                            fc.ports[k].start,
                        );
                    }
                    for (k, corner) in Corner::ALL.iter().enumerate() {
                        m[(base + grid.corner_node(*corner), fc.vertices[k])] = T::one();
                    }
                }
                Ok(m)
            }
        }
    }

    pub fn check_grid(&self, n_cells: usize) -> Result<()> {
        if self.n_cells() != n_cells {
            return Err(Error::Incompatible(format!(
                "basis for '{}' was trained with n_cells = {}, grid has {}",
                self.element_type(),
                self.n_cells(),
                n_cells
            )));
        }
        Ok(())
    }
}

fn place<T: Real>(m: &mut Matrix<T>, block: &Matrix<T>, rows: &[usize], base: usize, col0: usize) {
    for j in 0..block.cols() {
        for (i, &row) in rows.iter().enumerate() {
            m[(base + row, col0 + j)] = block[(i, j)];
        }
    }
}

pub fn energy_fraction<T: Real>(sigma: &[T], r: usize) -> T {
    let total: T = sigma.iter().map(|s| *s * *s).sum();
    if total == T::zero() {
        return T::one();
    }
    sigma[..r.min(sigma.len())]
        .iter()
        .map(|s| *s * *s)
        .sum::<T>()
        / total
}

/// `Φᵀx`.
pub fn project<T: Real>(modes: &Matrix<T>, x: &[T]) -> Result<Vec<T>> {
    if x.len() != modes.rows() {
        return Err(Error::DimensionMismatch(format!(
            "field has {} entries, basis has {} rows",
            x.len(),
            modes.rows()
        )));
    }
    Ok(modes.tr_mul_vec(x))
}

/// `Φc`.
pub fn reconstruct<T: Real>(modes: &Matrix<T>, c: &[T]) -> Result<Vec<T>> {
    if c.len() != modes.cols() {
        return Err(Error::DimensionMismatch(format!(
            "{} coordinates for {} modes",
            c.len(),
            modes.cols()
        )));
    }
    Ok(modes.mul_vec(c))
}

/// Leading left singular vectors and all `min(rows, cols)` singular values.
/// The vectors form a complete orthonormal set even when `s` is rank
/// deficient.
fn left_singular<T: Real>(s: &Matrix<T>) -> (Matrix<T>, Vec<T>) {
    let (m, n) = (s.rows(), s.cols());
    let (mut u, sigma) = if n <= m {
        // method of snapshots
        let eig = symmetric_eigen(&s.tr_matmul(s));
        let sigma: Vec<T> = eig
            .values
            .iter()
            .map(|&l| l.max(T::zero()).sqrt())
            .collect();
        let floor = sigma[0] * T::epsilon() * T::from_usize_lossy(m.max(n));
        let mut u = s.matmul(&eig.vectors);
        for (k, &sk) in sigma.iter().enumerate() {
            let col = u.col_mut(k);
            if sk > floor {
                col.iter_mut().for_each(|v| *v /= sk);
            } else {
                col.iter_mut().for_each(|v| *v = T::zero());
            }
        }
        (u, sigma)
    } else {
        let r = householder_r(&s.transpose());
        let svd = jacobi_svd(&r);
        (svd.v, svd.sigma)
    };
    orthonormalize(&mut u);
    (u, sigma)
}

/// Two passes of modified Gram–Schmidt; columns that collapse are replaced by
/// the first coordinate vectors that remain independent.
fn orthonormalize<T: Real>(u: &mut Matrix<T>) {
    let (m, k) = (u.rows(), u.cols());
    let mut next_unit = 0;
    for j in 0..k {
        let mut ok = false;
        if norm2(u.col(j)) > T::lit(0.5) {
            ok = gram_schmidt(u, j);
        }
        while !ok {
            assert!(next_unit < m, "cannot complete basis");
            let col = u.col_mut(j);
            col.iter_mut().for_each(|v| *v = T::zero());
            col[next_unit] = T::one();
            next_unit += 1;
            ok = gram_schmidt(u, j);
        }
    }
}

fn gram_schmidt<T: Real>(u: &mut Matrix<T>, j: usize) -> bool {
    let before = norm2(u.col(j));
    for _ in 0..2 {
        for i in 0..j {
            let (a, b) = u.col_pair_mut(i, j);
            let d = dot(a, b);
            b.iter_mut().zip(a.iter()).for_each(|(y, x)| *y -= d * *x);
        }
    }
    let nrm = norm2(u.col(j));
    if nrm <= T::lit(1e-3) * before {
        return false;
    }
    u.col_mut(j).iter_mut().for_each(|v| *v /= nrm);
    true
}

/// Largest-magnitude entry positive, lowest index on ties.
fn fix_signs<T: Real>(u: &mut Matrix<T>) {
    for j in 0..u.cols() {
        let col = u.col_mut(j);
        let mut best = 0;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < T::zero() {
            col.iter_mut().for_each(|v| *v = -*v);
        }
    }
}

fn retained<T: Real>(sigma: &[T], trunc: Truncation<T>) -> Result<usize> {
    let p = sigma.len();
    match trunc {
        Truncation::Full => Ok(p),
        Truncation::Fixed(r) if (1..=p).contains(&r) => Ok(r),
        Truncation::Fixed(r) => Err(Error::Config(format!("fixed rank {r} outside 1..={p}"))),
        Truncation::Energy(eps) if eps > T::zero() && eps <= T::one() => {
            let total: T = sigma.iter().map(|s| *s * *s).sum();
            let mut acc = T::zero();
            for (k, s) in sigma.iter().enumerate() {
                acc += *s * *s;
                if acc / total >= eps {
                    return Ok(k + 1);
                }
            }
            Ok(p)
        }
        Truncation::Energy(eps) => Err(Error::Config(format!(
            "energy threshold {eps} outside (0, 1]"
        ))),
    }
}

/// POD of the columns of `data`.
pub fn pod_of_matrix<T: Real>(
    data: &Matrix<T>,
    trunc: Truncation<T>,
) -> Result<(Matrix<T>, Vec<T>)> {
    if data.rows() == 0 || data.cols() == 0 {
        return Err(Error::DegenerateData("empty snapshot matrix".into()));
    }
    if !data.is_finite() {
        return Err(Error::DegenerateData("non-finite snapshot entry".into()));
    }
    if data.max_abs() == T::zero() {
        return Err(Error::DegenerateData("all snapshots are zero".into()));
    }
    let (u, sigma) = left_singular(data);
    let r = retained(&sigma, trunc)?;
    let mut modes = u.leading_columns(r);
    fix_signs(&mut modes);
    Ok((modes, sigma))
}

/// Monolithic POD basis over the whole stacked element vector.
pub fn compute_pod<T: Real>(
    snapshots: &SnapshotSet<T>,
    trunc: Truncation<T>,
) -> Result<PodBasis<T>> {
    let (modes, singular_values) = pod_of_matrix(&snapshots.data, trunc)?;
    Ok(PodBasis {
        element_type: snapshots.element_type.clone(),
        n_cells: snapshots.n_cells,
        modes,
        singular_values,
    })
}

fn clamp<T: Real>(trunc: Truncation<T>, p: usize) -> Truncation<T> {
    match trunc {
        Truncation::Fixed(r) => Truncation::Fixed(r.clamp(1, p)),
        t => t,
    }
}

/// Trains interior and port blocks per component. Port traces are the side
/// nodes without corners; the two sides of each orientation feed one basis.
pub fn split_port_basis<T: Real>(
    snapshots: &SnapshotSet<T>,
    trunc: Truncation<T>,
) -> Result<SplitBasis<T>> {
    let grid = ElementGrid::<T>::new(snapshots.n_cells)?;
    let nn = grid.n_nodes();
    let data = &snapshots.data;
    if data.rows() != nn * snapshots.fields_per_snapshot {
        return Err(Error::DimensionMismatch(format!(
            "snapshot rows {} for n_cells {}",
            data.rows(),
            snapshots.n_cells
        )));
    }
    let n_snap = data.cols();
    let mut fields = Vec::with_capacity(snapshots.fields_per_snapshot);
    for f in 0..snapshots.fields_per_snapshot {
        let restrict = |rows: &[usize]| {
            Matrix::from_fn(rows.len(), n_snap, |i, j| data[(f * nn + rows[i], j)])
        };
        let pooled = |a: Side, b: Side| {
            let (ra, rb) = (grid.side_interior_nodes(a), grid.side_interior_nodes(b));
            Matrix::from_fn(ra.len(), 2 * n_snap, |i, j| {
                let (rows, col) = if j < n_snap {
                    (&ra, j)
                } else {
                    (&rb, j - n_snap)
                };
                data[(f * nn + rows[i], col)]
            })
        };
        let block = |m: Matrix<T>, what: &str| -> Result<(Matrix<T>, Vec<T>)> {
            let p = m.rows().min(m.cols());
            pod_of_matrix(&m, clamp(trunc, p)).map_err(|e| match e {
                Error::DegenerateData(msg) => {
                    Error::DegenerateData(format!("{what} traces of field {f}: {msg}"))
                }
                other => other,
            })
        };
        let (modes, singular_values) = block(restrict(&grid.inner_nodes()), "interior")?;
        let interior = PodBasis {
            element_type: snapshots.element_type.clone(),
            n_cells: snapshots.n_cells,
            modes,
            singular_values,
        };
        let (vm, vs) = block(pooled(Side::Left, Side::Right), "vertical")?;
        let (hm, hs) = block(pooled(Side::Bottom, Side::Top), "horizontal")?;
        fields.push(FieldBlocks {
            interior,
            vertical: PortBasis {
                class: Orientation::Vertical,
                modes: vm,
                singular_values: vs,
            },
            horizontal: PortBasis {
                class: Orientation::Horizontal,
                modes: hm,
                singular_values: hs,
            },
        });
    }
    Ok(SplitBasis {
        element_type: snapshots.element_type.clone(),
        n_cells: snapshots.n_cells,
        fields,
    })
}

const BASIS_MAGIC: &[u8; 8] = b"DDFBAS01";

fn write_block<T: Real>(w: &mut Writer, modes: &Matrix<T>, sigma: &[T]) {
    w.u32(modes.rows() as u32);
    w.u32(modes.cols() as u32);
    w.u32(sigma.len() as u32);
    w.reals(sigma);
    w.reals(modes.as_slice());
}

fn read_block<T: Real>(r: &mut Reader) -> Result<(Matrix<T>, Vec<T>)> {
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    let p = r.u32()? as usize;
    let sigma = r.reals(p)?;
    let data = r.reals(
        rows.checked_mul(cols)
            .ok_or_else(|| Error::CorruptArchive("block size overflow".into()))?,
    )?;
    Ok((Matrix::from_col_major(rows, cols, data), sigma))
}

/// `DDFBAS01`: id, n_cells, n_fields, total r, total p, descriptor byte
/// (0 monolithic, 1 split), then per block rows/r/p, σ and column-major modes.
/// Split archives list interior, left, right, bottom, top per field.
pub fn encode_basis<T: Real>(basis: &ElementBasis<T>) -> Vec<u8> {
    let mut w = Writer::new(BASIS_MAGIC);
    w.str(basis.element_type());
    w.u32(basis.n_cells() as u32);
    w.u32(basis.n_fields() as u32);
    w.u32(basis.dim() as u32);
    match basis {
        ElementBasis::Monolithic(b) => {
            w.u32(b.p() as u32);
            w.u8(0);
            write_block(&mut w, &b.modes, &b.singular_values);
        }
        ElementBasis::Split(b) => {
            let p: usize = b
                .fields
                .iter()
                .map(|f| {
                    f.interior.p()
                        + 2 * f.vertical.singular_values.len()
                        + 2 * f.horizontal.singular_values.len()
                })
                .sum();
            w.u32(p as u32);
            w.u8(1);
            for f in &b.fields {
                write_block(&mut w, &f.interior.modes, &f.interior.singular_values);
                for side in Side::ALL {
                    let port = f.port(side);
                    write_block(&mut w, &port.modes, &port.singular_values);
                }
            }
        }
    }
    w.finish()
}

pub fn decode_basis<T: Real>(bytes: &[u8]) -> Result<ElementBasis<T>> {
    let mut r = Reader::open(bytes, BASIS_MAGIC)?;
    let element_type = r.str()?;
    let n_cells = r.u32()? as usize;
    let n_fields = r.u32()? as usize;
    let dim = r.u32()? as usize;
    let _p = r.u32()?;
    let basis = match r.u8()? {
        0 => {
            let (modes, singular_values) = read_block(&mut r)?;
            ElementBasis::Monolithic(PodBasis {
                element_type,
                n_cells,
                modes,
                singular_values,
            })
        }
        1 => {
            let mut fields = Vec::with_capacity(n_fields);
            for _ in 0..n_fields {
                let (modes, singular_values) = read_block(&mut r)?;
                let interior = PodBasis {
                    element_type: element_type.clone(),
                    n_cells,
                    modes,
                    singular_values,
                };
                let mut ports = Vec::with_capacity(4);
                for _ in 0..4 {
                    ports.push(read_block::<T>(&mut r)?);
                }
                if ports[0] != ports[1] || ports[2] != ports[3] {
                    return Err(Error::CorruptArchive("opposite port slots differ".into()));
                }
                let (hm, hs) = ports.pop().expect("4 ports");
                let (vm, vs) = ports.swap_remove(0);
                fields.push(FieldBlocks {
                    interior,
                    vertical: PortBasis {
                        class: Orientation::Vertical,
                        modes: vm,
                        singular_values: vs,
                    },
                    horizontal: PortBasis {
                        class: Orientation::Horizontal,
                        modes: hm,
                        singular_values: hs,
                    },
                });
            }
            ElementBasis::Split(SplitBasis {
                element_type,
                n_cells,
                fields,
            })
        }
        d => {
            return Err(Error::CorruptArchive(format!(
                "unknown block descriptor {d}"
            )))
        }
    };
    r.finish()?;
    if basis.dim() != dim || basis.n_fields() != n_fields {
        return Err(Error::CorruptArchive("header does not match blocks".into()));
    }
    Ok(basis)
}

pub fn save_basis<T: Real>(basis: &ElementBasis<T>, path: &Path) -> Result<()> {
    write_file(path, &encode_basis(basis))
}

pub fn load_basis<T: Real>(path: &Path) -> Result<ElementBasis<T>> {
    decode_basis(&fs::read(path)?)
}
