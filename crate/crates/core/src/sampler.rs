//! Randomised training configurations and element-restricted snapshots
//! harvested from 2×2 patch solves.
//!
//! Every sample index owns an independent ChaCha stream derived from the run
//! seed, so parallel generation produces the same columns in the same order as
//! a sequential run.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::archive::{write_file, Reader, Writer};
use crate::error::{Error, Result};
use crate::fom::{
    solve_burgers_fom, BurgersParams, BurgersProblem, LinearSolverKind, PoissonFom, StateField,
};
use crate::grid::{build_layout, BoundaryKind, DofMap, ElementGrid};
use crate::linalg::Matrix;
use crate::scalar::Real;

pub const SAMPLER_VERSION: &str = "ddfem-sampler/1";

/// Seeded generator for one sample index.
pub fn child_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Sinusoidal source `sin(2π(k·x + θ))`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SourceSample<T> {
    pub k: (T, T),
    pub theta: T,
}

/// Draws `k ∈ [-0.5, 0.5]²` and `θ ∈ [0, 1]` uniformly.
pub fn sample_poisson_source<T: Real, R: Rng + ?Sized>(rng: &mut R) -> SourceSample<T> {
    let k1 = rng.gen_range(-0.5..=0.5);
    let k2 = rng.gen_range(-0.5..=0.5);
    let theta = rng.gen_range(0.0..=1.0);
    SourceSample {
        k: (T::lit(k1), T::lit(k2)),
        theta: T::lit(theta),
    }
}

pub fn eval_sinusoidal_source<T: Real>(s: &SourceSample<T>, x: T, y: T) -> T {
    (T::TAU() * (s.k.0 * x + s.k.1 * y + s.theta)).sin()
}

/// Radially oscillating spiral used as an out-of-distribution source.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpiralParams<T> {
    /// Radial frequency ω (oscillations per unit radius).
    pub omega: T,
    pub center: (T, T),
    /// Swirl γ: number of arms.
    pub gamma: T,
}

/// `sin(2π(ω r + γ φ / 2π))` about `center`, with `φ := 0` at the centre.
pub fn eval_spiral_source<T: Real>(p: &SpiralParams<T>, x: T, y: T) -> T {
    let dx = x - p.center.0;
    let dy = y - p.center.1;
    let r = (dx * dx + dy * dy).sqrt();
    let phi = if r == T::zero() {
        T::zero()
    } else {
        dy.atan2(dx)
    };
    (T::TAU() * (p.omega * r + p.gamma * phi / T::TAU())).sin()
}

/// Truncated random Fourier series for a periodic velocity field.
#[derive(Clone, Debug, PartialEq)]
pub struct BurgersIcSample<T> {
    pub k_max: usize,
    /// `(m, n)` wavenumbers, `(0, 0)` excluded; shared by both components.
    pub modes: Vec<(usize, usize)>,
    /// `(a_mn, b_mn)` per mode for u and v (already rescaled).
    pub coeffs_u: Vec<(T, T)>,
    pub coeffs_v: Vec<(T, T)>,
    pub mean: (T, T),
}

/// Coefficients are zero-mean normal with standard deviation `1/(1+m²+n²)`,
/// mean offsets uniform in `[-0.25, 0.25]`. The whole field is then scaled so
/// that `|c| + Σ(|a| + |b|) ≤ 1` per component, which bounds `max|velocity|`
/// by one everywhere.
pub fn sample_burgers_ic<T: Real, R: Rng + ?Sized>(
    rng: &mut R,
    k_max: usize,
) -> Result<BurgersIcSample<T>> {
    if k_max < 1 {
        return Err(Error::Config("K_max must be at least 1".into()));
    }
    let modes: Vec<(usize, usize)> = (0..=k_max)
        .flat_map(|m| (0..=k_max).map(move |n| (m, n)))
        .filter(|&mn| mn != (0, 0))
        .collect();
    let draw = |rng: &mut R| -> Vec<(f64, f64)> {
        modes
            .iter()
            .map(|&(m, n)| {
                let amp = 1.0 / (1.0 + (m * m + n * n) as f64);
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = rng.sample(StandardNormal);
                (a * amp, b * amp)
            })
            .collect()
    };
    let cu = draw(rng);
    let cv = draw(rng);
    let mean = (rng.gen_range(-0.25..=0.25), rng.gen_range(-0.25..=0.25));
    let bound = |c: f64, co: &[(f64, f64)]| {
        c.abs() + co.iter().map(|(a, b)| a.abs() + b.abs()).sum::<f64>()
    };
    let worst = bound(mean.0, &cu).max(bound(mean.1, &cv));
    let s = if worst > 1.0 { 1.0 / worst } else { 1.0 };
    let conv = |co: Vec<(f64, f64)>| {
        co.into_iter()
            .map(|(a, b)| (T::lit(a * s), T::lit(b * s)))
            .collect()
    };
    Ok(BurgersIcSample {
        k_max,
        modes,
        coeffs_u: conv(cu),
        coeffs_v: conv(cv),
        mean: (T::lit(mean.0 * s), T::lit(mean.1 * s)),
    })
}

impl<T: Real> BurgersIcSample<T> {
    /// Velocity at `(x, y)` for a domain of size `period = (Lx, Ly)`.
    pub fn eval(&self, x: T, y: T, period: (T, T)) -> (T, T) {
        let (mut u, mut v) = self.mean;
        for (k, &(m, n)) in self.modes.iter().enumerate() {
            let arg = T::TAU()
                * (T::from_usize_lossy(m) * x / period.0 + T::from_usize_lossy(n) * y / period.1);
            let (s, c) = arg.sin_cos();
            u += self.coeffs_u[k].0 * c + self.coeffs_u[k].1 * s;
            v += self.coeffs_v[k].0 * c + self.coeffs_v[k].1 * s;
        }
        (u, v)
    }
}

/// Where a snapshot set came from.
#[derive(Clone, Debug, PartialEq)]
pub struct Provenance {
    pub seed: u64,
    pub sampler_version: String,
    /// `"poisson"` or `"burgers"`.
    pub family: String,
    /// Seconds since the Unix epoch; excluded from determinism checks.
    pub timestamp: Option<u64>,
}

/// Element-restricted solution samples, one column per snapshot.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotSet<T> {
    pub element_type: String,
    pub n_cells: usize,
    pub fields_per_snapshot: usize,
    pub data: Matrix<T>,
    pub provenance: Provenance,
}

impl<T: Real> SnapshotSet<T> {
    pub fn n_snapshots(&self) -> usize {
        self.data.cols()
    }

    /// Rows per column, `fields · (n_cells + 1)²`.
    pub fn element_dofs(&self) -> usize {
        self.data.rows()
    }

    /// Same data and metadata except the generation time.
    pub fn same_content(&self, other: &Self) -> bool {
        let mut a = self.provenance.clone();
        let mut b = other.provenance.clone();
        a.timestamp = None;
        b.timestamp = None;
        self.element_type == other.element_type
            && self.n_cells == other.n_cells
            && self.fields_per_snapshot == other.fields_per_snapshot
            && self.data == other.data
            && a == b
    }

    fn validate(&self) -> Result<()> {
        let expect = self.fields_per_snapshot * (self.n_cells + 1) * (self.n_cells + 1);
        if self.data.rows() != expect {
            return Err(Error::DimensionMismatch(format!(
                "snapshot rows {} != {expect}",
                self.data.rows()
            )));
        }
        if self.data.cols() == 0 {
            return Err(Error::DegenerateData("no snapshots".into()));
        }
        if !self.data.is_finite() {
            return Err(Error::DegenerateData("non-finite snapshot entry".into()));
        }
        Ok(())
    }
}

fn now_secs() -> Option<u64> {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .ok()
        .map(|d| d.as_secs())
}

/// Solver for the 2×2 zero-Dirichlet training patch, factorised once.
pub struct PoissonPatch<T> {
    fom: PoissonFom<T>,
}

impl<T: Real> PoissonPatch<T> {
    pub fn new(grid: &ElementGrid<T>) -> Result<Self> {
        let layout = build_layout(2, 2, "patch", BoundaryKind::DirichletZero)?;
        Ok(Self {
            fom: PoissonFom::new(&layout, grid, LinearSolverKind::Auto)?,
        })
    }

    /// Patch solution restricted to elements (0,0), (0,1), (1,0), (1,1).
    pub fn element_columns(&self, f: &(impl Fn(T, T) -> T + ?Sized)) -> Result<Vec<Vec<T>>> {
        let u = self.fom.solve_source(f)?;
        Ok(self.fom.operator().dof_map.scatter(u.values(), 1))
    }

    pub fn fom(&self) -> &PoissonFom<T> {
        &self.fom
    }
}

fn assemble_columns<T: Real>(rows: usize, blocks: Vec<Vec<Vec<T>>>) -> Matrix<T> {
    let cols: Vec<Vec<T>> = blocks.into_iter().flatten().collect();
    Matrix::from_columns(rows, &cols)
}

/// Solves `n_samples` random sinusoidal-source patches and keeps four element
/// columns per sample.
pub fn generate_poisson_patch_snapshots<T: Real>(
    n_samples: usize,
    grid: &ElementGrid<T>,
    seed: u64,
) -> Result<SnapshotSet<T>> {
    if n_samples == 0 {
        return Err(Error::Config("n_samples must be at least 1".into()));
    }
    let patch = PoissonPatch::new(grid)?;
    let blocks = (0..n_samples)
        .into_par_iter()
        .map(|s| {
            let src: SourceSample<T> = sample_poisson_source(&mut child_rng(seed, s as u64));
            patch
                .element_columns(&|x, y| eval_sinusoidal_source(&src, x, y))
                .map_err(|e| Error::Sample {
                    index: s,
                    source: Box::new(e),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    let set = SnapshotSet {
        element_type: "square".into(),
        n_cells: grid.n_cells(),
        fields_per_snapshot: 1,
        data: assemble_columns(grid.n_nodes(), blocks),
        provenance: Provenance {
            seed,
            sampler_version: SAMPLER_VERSION.into(),
            family: "poisson".into(),
            timestamp: now_secs(),
        },
    };
    set.validate()?;
    Ok(set)
}

/// Element columns `(u; v)` for every saved state of one periodic patch run.
pub fn burgers_patch_columns<T: Real>(
    grid: &ElementGrid<T>,
    params: BurgersParams<T>,
    ic: impl Fn(T, T) -> (T, T),
) -> Result<Vec<Vec<T>>> {
    let layout = build_layout(2, 2, "patch", BoundaryKind::Periodic)?;
    let problem = BurgersProblem::new(&layout, grid, params, ic)?;
    let traj = solve_burgers_fom(&problem)?;
    let dof_map = DofMap::new(&layout, grid);
    Ok(traj
        .states
        .iter()
        .flat_map(|s: &StateField<T>| dof_map.scatter(s.values(), 2))
        .collect())
}

/// Runs `n_runs` random-IC periodic 2×2 patches and keeps `4 · n_saves`
/// element columns per run.
pub fn generate_burgers_patch_snapshots<T: Real>(
    n_runs: usize,
    grid: &ElementGrid<T>,
    params: BurgersParams<T>,
    k_max: usize,
    seed: u64,
) -> Result<SnapshotSet<T>> {
    if n_runs == 0 {
        return Err(Error::Config("n_runs must be at least 1".into()));
    }
    params.validate()?;
    let period = (T::lit(2.0), T::lit(2.0));
    let blocks = (0..n_runs)
        .into_par_iter()
        .map(|s| {
            let ic: BurgersIcSample<T> = sample_burgers_ic(&mut child_rng(seed, s as u64), k_max)?;
            burgers_patch_columns(grid, params, |x, y| ic.eval(x, y, period)).map_err(|e| {
                Error::Sample {
                    index: s,
                    source: Box::new(e),
                }
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let set = SnapshotSet {
        element_type: "square".into(),
        n_cells: grid.n_cells(),
        fields_per_snapshot: 2,
        data: assemble_columns(2 * grid.n_nodes(), blocks),
        provenance: Provenance {
            seed,
            sampler_version: SAMPLER_VERSION.into(),
            family: "burgers".into(),
            timestamp: now_secs(),
        },
    };
    set.validate()?;
    Ok(set)
}

const SNAPSHOT_MAGIC: &[u8; 8] = b"DDFSNP01";

/// Serialises to the `DDFSNP01` archive layout.
pub fn encode_snapshots<T: Real>(set: &SnapshotSet<T>) -> Vec<u8> {
    let mut w = Writer::new(SNAPSHOT_MAGIC);
    w.str(&set.element_type);
    w.u32(set.n_cells as u32);
    w.u32(set.fields_per_snapshot as u32);
    w.u64(set.n_snapshots() as u64);
    w.u64(set.provenance.seed);
    w.reals(set.data.as_slice());
    w.finish()
}

pub fn decode_snapshots<T: Real>(bytes: &[u8]) -> Result<SnapshotSet<T>> {
    let mut r = Reader::open(bytes, SNAPSHOT_MAGIC)?;
    let element_type = r.str()?;
    let n_cells = r.u32()? as usize;
    let fields = r.u32()? as usize;
    let n_snap = r.u64()? as usize;
    let seed = r.u64()?;
    let rows = fields * (n_cells + 1) * (n_cells + 1);
    let data = r.reals(rows * n_snap)?;
    r.finish()?;
    let set = SnapshotSet {
        element_type,
        n_cells,
        fields_per_snapshot: fields,
        data: Matrix::from_col_major(rows, n_snap, data),
        provenance: Provenance {
            seed,
            sampler_version: SAMPLER_VERSION.into(),
            family: if fields == 2 { "burgers" } else { "poisson" }.into(),
            timestamp: None,
        },
    };
    set.validate()?;
    Ok(set)
}

pub fn save_snapshots<T: Real>(set: &SnapshotSet<T>, path: &Path) -> Result<()> {
    write_file(path, &encode_snapshots(set))
}

pub fn load_snapshots<T: Real>(path: &Path) -> Result<SnapshotSet<T>> {
    decode_snapshots(&std::fs::read(path)?)
}
