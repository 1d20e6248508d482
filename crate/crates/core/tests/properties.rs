use ddfem_core::basis::{pod_of_matrix, Truncation};
use ddfem_core::eval::relative_l2_error;
use ddfem_core::grid::{build_dof_map, build_layout, BoundaryKind, ElementGrid};
use ddfem_core::linalg::Matrix;
use ddfem_core::sampler::{eval_sinusoidal_source, SourceSample};
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize, seed: &[f64]) -> Matrix<f64> {
    Matrix::from_fn(rows, cols, |i, j| {
        seed[(i * cols + j) % seed.len()] + (i as f64 - j as f64 * 0.3).sin()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn relative_error_is_scale_invariant(
        reference in prop::collection::vec(-10.0f64..10.0, 1..40),
        noise in -1.0f64..1.0,
        scale in 1e-3f64..1e3,
    ) {
        prop_assume!(reference.iter().any(|v| v.abs() > 1e-3));
        let approx: Vec<f64> = reference.iter().enumerate().map(|(i, v)| v + noise * (i as f64).cos()).collect();
        let base = relative_l2_error(&approx, &reference).unwrap();
        let sa: Vec<f64> = approx.iter().map(|v| v * scale).collect();
        let sr: Vec<f64> = reference.iter().map(|v| v * scale).collect();
        let scaled = relative_l2_error(&sa, &sr).unwrap();
        prop_assert!((base - scaled).abs() <= 1e-12 * (1.0 + base));
    }

    #[test]
    fn pod_modes_are_orthonormal_with_sorted_spectrum(
        rows in 2usize..24,
        cols in 1usize..16,
        seed in prop::collection::vec(-1.0f64..1.0, 8),
    ) {
        let data = matrix(rows, cols, &seed);
        prop_assume!(data.max_abs() > 0.0);
        let (modes, sigma) = pod_of_matrix(&data, Truncation::Energy(0.999)).unwrap();
        prop_assert!(sigma.windows(2).all(|w| w[0] >= w[1]));
        let gram = modes.tr_matmul(&modes);
        for i in 0..gram.rows() {
            for j in 0..gram.cols() {
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((gram[(i, j)] - want).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn scatter_then_gather_is_identity(
        rows in 2usize..5,
        cols in 2usize..5,
        n_cells in 2usize..5,
        periodic in any::<bool>(),
        phase in 0.0f64..6.0,
    ) {
        let bc = if periodic { BoundaryKind::Periodic } else { BoundaryKind::DirichletZero };
        let grid = ElementGrid::<f64>::new(n_cells).unwrap();
        let layout = build_layout(rows, cols, "s", bc).unwrap();
        let map = build_dof_map(&layout, &grid);
        let global: Vec<f64> = (0..map.n_global()).map(|k| (k as f64 + phase).sin()).collect();
        let locals = map.scatter(&global, 1);
        prop_assert_eq!(map.gather(&locals, 1), global);
        prop_assert_eq!(map.max_copy_jump(&locals, 1), 0.0);
    }

    #[test]
    fn sinusoidal_source_is_bounded(
        k1 in -0.5f64..0.5, k2 in -0.5f64..0.5, theta in 0.0f64..1.0,
        x in -10.0f64..10.0, y in -10.0f64..10.0,
    ) {
        let s = SourceSample { k: (k1, k2), theta };
        prop_assert!(eval_sinusoidal_source(&s, x, y).abs() <= 1.0);
    }
}
