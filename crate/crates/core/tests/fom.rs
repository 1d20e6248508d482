#![allow(clippy::needless_range_loop)]

use std::f64::consts::PI;

use ddfem_core::fom::{
    assemble_poisson_operator, solve_burgers_fom, solve_poisson_fom, BurgersParams, BurgersProblem,
    LinearSolverKind, PoissonFom, PoissonProblem,
};
use ddfem_core::grid::{build_layout, BoundaryKind, DofMap, ElementGrid, GlobalLayout};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dirichlet(m: usize, n: usize) -> GlobalLayout {
    build_layout(m, n, "square", BoundaryKind::DirichletZero).unwrap()
}

fn periodic(m: usize, n: usize) -> GlobalLayout {
    build_layout(m, n, "square", BoundaryKind::Periodic).unwrap()
}

fn manufactured_error(n_cells: usize) -> f64 {
    let grid = ElementGrid::<f64>::new(n_cells).unwrap();
    let layout = dirichlet(1, 1);
    let f = |x: f64, y: f64| 2.0 * PI * PI * (PI * x).sin() * (PI * y).sin();
    let u = solve_poisson_fom(&PoissonProblem {
        layout: layout.clone(),
        grid: grid.clone(),
        source: &f,
    })
    .unwrap();
    let dm = DofMap::new(&layout, &grid);
    let (mut num, mut den) = (0.0, 0.0);
    for g in 0..dm.n_global() {
        let (x, y) = dm.global_coords::<f64>(g);
        let exact = (PI * x).sin() * (PI * y).sin();
        num += (u.values()[g] - exact).powi(2);
        den += exact * exact;
    }
    (num / den).sqrt()
}

#[test]
fn poisson_manufactured_convergence_order() {
    let errs: Vec<f64> = [8, 16, 32].iter().map(|&n| manufactured_error(n)).collect();
    for w in errs.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(
            (1.8..=2.2).contains(&order),
            "observed order {order} from {errs:?}"
        );
    }
}

#[test]
fn poisson_operator_is_spd_by_dense_eigensolver() {
    for (m, n, cells) in [(2, 2, 4), (1, 3, 4), (3, 3, 3)] {
        let grid = ElementGrid::<f64>::new(cells).unwrap();
        let op = assemble_poisson_operator(&dirichlet(m, n), &grid).unwrap();
        let d = op.matrix.to_dense();
        assert!(d.rows() <= 500);
        assert_eq!(d.asymmetry(), 0.0);
        let na = DMatrix::from_fn(d.rows(), d.cols(), |i, j| d[(i, j)]);
        let ev = na.symmetric_eigen().eigenvalues;
        let min = ev.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min > 0.0, "{m}x{n}: smallest eigenvalue {min}");
    }
}

#[test]
fn poisson_residual_contract_and_boundary() {
    let grid = ElementGrid::<f64>::new(8).unwrap();
    let layout = dirichlet(2, 3);
    for kind in [LinearSolverKind::Direct, LinearSolverKind::Cg] {
        let fom = PoissonFom::new(&layout, &grid, kind).unwrap();
        let f = |x: f64, y: f64| (2.0 * PI * (0.3 * x - 0.2 * y + 0.1)).sin();
        let b = fom.operator().load(&layout, &grid, &f);
        let x = fom.solve_free(&b).unwrap();
        let ax = fom.operator().matrix.mul_vec(&x);
        let r: f64 = b
            .iter()
            .zip(&ax)
            .map(|(p, q)| (p - q).powi(2))
            .sum::<f64>()
            .sqrt();
        let bn: f64 = b.iter().map(|p| p * p).sum::<f64>().sqrt();
        assert!(r / bn <= 1e-10);
        let u = fom.operator().expand(&x);
        let dm = &fom.operator().dof_map;
        for g in 0..dm.n_global() {
            if dm.is_constrained(g) {
                assert_eq!(u.values()[g], 0.0);
            }
        }
    }
}

#[test]
fn poisson_xy_symmetry() {
    let grid = ElementGrid::<f64>::new(6).unwrap();
    let layout = dirichlet(2, 2);
    let f = |x: f64, y: f64| (x * y).sin() + x + y;
    let u = solve_poisson_fom(&PoissonProblem {
        layout: layout.clone(),
        grid,
        source: &f,
    })
    .unwrap();
    let nx = 13;
    for i in 0..nx {
        for j in 0..nx {
            let a = u.values()[i * nx + j];
            let b = u.values()[j * nx + i];
            assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
        }
    }
}

/// Independent 1-D discretisation of u_t + (u²/2)_x = ν u_xx on a periodic
/// line, stepped with the same midpoint rule.
fn burgers_1d(u0: &[f64], h: f64, nu: f64, dt: f64, steps: usize) -> Vec<f64> {
    let n = u0.len();
    let rhs = |u: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|j| {
                let e = u[(j + 1) % n];
                let w = u[(j + n - 1) % n];
                -(e * e / 2.0 - w * w / 2.0) / (2.0 * h) + nu * (e - 2.0 * u[j] + w) / (h * h)
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

#[test]
fn burgers_reduces_to_1d_oracle() {
    let grid = ElementGrid::<f64>::new(8).unwrap();
    let layout = periodic(2, 2);
    let profile = |x: f64| 0.4 + 0.3 * (PI * x).sin() + 0.1 * (2.0 * PI * x).cos();
    let params = BurgersParams {
        nu: 1e-3,
        dt: 0.01,
        t_final: 0.5,
        save_every: 10,
    };
    let prob = BurgersProblem::new(&layout, &grid, params, |x, _| (profile(x), 0.0)).unwrap();
    let traj = solve_burgers_fom(&prob).unwrap();
    let nx = 16;
    let h = grid.h();
    let u0: Vec<f64> = (0..nx).map(|j| profile(j as f64 * h)).collect();
    for (k, (t, state)) in traj.times.iter().zip(&traj.states).enumerate() {
        let steps = (t / params.dt).round() as usize;
        let line = burgers_1d(&u0, h, params.nu, params.dt, steps);
        for i in 0..nx {
            for j in 0..nx {
                let got = state.values()[i * nx + j];
                assert!(
                    (got - line[j]).abs() <= 1e-10,
                    "save {k} node ({i},{j}): {got} vs {}",
                    line[j]
                );
                assert_eq!(state.component(1)[i * nx + j], 0.0);
            }
        }
    }
}

#[test]
fn burgers_conserves_mean_for_random_ic() {
    let grid = ElementGrid::<f64>::new(8).unwrap();
    let layout = periodic(2, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let coeffs: Vec<f64> = (0..8).map(|_| rng.gen_range(-0.12..0.12)).collect();
    let ic = |x: f64, y: f64| {
        let a = PI * x;
        let b = PI * y;
        (
            0.1 + coeffs[0] * a.sin()
                + coeffs[1] * b.cos()
                + coeffs[2] * (a + b).sin()
                + coeffs[3] * (2.0 * a).cos(),
            -0.05
                + coeffs[4] * a.cos()
                + coeffs[5] * b.sin()
                + coeffs[6] * (a - b).cos()
                + coeffs[7] * (2.0 * b).sin(),
        )
    };
    let params = BurgersParams {
        nu: 1e-3,
        dt: 0.01,
        t_final: 1.0,
        save_every: 25,
    };
    let prob = BurgersProblem::new(&layout, &grid, params, ic).unwrap();
    let traj = solve_burgers_fom(&prob).unwrap();
    assert_eq!(traj.times.len(), 5);
    for c in 0..2 {
        let m0 = traj.states[0].mean(c);
        for s in &traj.states {
            assert!(s.is_finite());
            assert!((s.mean(c) - m0).abs() <= 1e-10 * (1.0 + m0.abs()));
        }
    }
    // identical inputs give bit-identical trajectories
    assert_eq!(solve_burgers_fom(&prob).unwrap(), traj);
}

/// Fourier pseudo-spectral 1-D Burgers with a direct DFT and RK4 sub-steps.
fn spectral_1d(u0: &[f64], length: f64, nu: f64, t_final: f64, steps: usize) -> Vec<f64> {
    let n = u0.len();
    let wave = |k: usize| {
        let kk = if k <= n / 2 {
            k as f64
        } else {
            k as f64 - n as f64
        };
        2.0 * PI * kk / length
    };
    let dft = |u: &[f64]| -> Vec<(f64, f64)> {
        (0..n)
            .map(|k| {
                u.iter().enumerate().fold((0.0, 0.0), |(re, im), (j, &v)| {
                    let a = -2.0 * PI * (k * j) as f64 / n as f64;
                    (re + v * a.cos(), im + v * a.sin())
                })
            })
            .collect()
    };
    let idft = |c: &[(f64, f64)]| -> Vec<f64> {
        (0..n)
            .map(|j| {
                c.iter().enumerate().fold(0.0, |s, (k, &(re, im))| {
                    let a = 2.0 * PI * (k * j) as f64 / n as f64;
                    s + (re * a.cos() - im * a.sin()) / n as f64
                })
            })
            .collect()
    };
    let deriv = |u: &[f64], order: u32| -> Vec<f64> {
        let c = dft(u);
        let d: Vec<(f64, f64)> = c
            .iter()
            .enumerate()
            .map(|(k, &(re, im))| {
                let w = if n.is_multiple_of(2) && k == n / 2 && order == 1 {
                    0.0
                } else {
                    wave(k)
                };
                match order {
                    1 => (-w * im, w * re),
                    _ => (-w * w * re, -w * w * im),
                }
            })
            .collect();
        idft(&d)
    };
    let rhs = |u: &[f64]| -> Vec<f64> {
        let sq: Vec<f64> = u.iter().map(|v| v * v / 2.0).collect();
        let a = deriv(&sq, 1);
        let b = deriv(u, 2);
        a.iter().zip(&b).map(|(x, y)| -x + nu * y).collect()
    };
    let dt = t_final / steps as f64;
    let mut u = u0.to_vec();
    for _ in 0..steps {
        let k1 = rhs(&u);
        let s2: Vec<f64> = u.iter().zip(&k1).map(|(a, b)| a + 0.5 * dt * b).collect();
        let k2 = rhs(&s2);
        let s3: Vec<f64> = u.iter().zip(&k2).map(|(a, b)| a + 0.5 * dt * b).collect();
        let k3 = rhs(&s3);
        let s4: Vec<f64> = u.iter().zip(&k3).map(|(a, b)| a + dt * b).collect();
        let k4 = rhs(&s4);
        for j in 0..n {
            u[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
    }
    u
}

#[test]
fn burgers_diffusive_decay_matches_spectral_oracle() {
    let grid = ElementGrid::<f64>::new(8).unwrap();
    let layout = periodic(2, 2);
    let params = BurgersParams {
        nu: 0.5,
        dt: 0.005,
        t_final: 0.5,
        save_every: 100,
    };
    let prob = BurgersProblem::new(&layout, &grid, params, |x, _| {
        (0.5 + 0.1 * (2.0 * PI * x).sin(), 0.0)
    })
    .unwrap();
    let last = solve_burgers_fom(&prob).unwrap().last().clone();
    let dev = last
        .component(0)
        .iter()
        .map(|u| (u - 0.5).abs())
        .fold(0.0, f64::max);
    assert!(dev < 1e-3, "max deviation from mean {dev}");

    let nx = 16;
    let u0: Vec<f64> = (0..nx)
        .map(|j| 0.5 + 0.1 * (2.0 * PI * j as f64 / 8.0).sin())
        .collect();
    let oracle = spectral_1d(&u0, 2.0, 0.5, 0.5, 400);
    for j in 0..nx {
        assert!((last.values()[j] - oracle[j]).abs() < 1e-3);
    }
}
