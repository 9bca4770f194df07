mod common;

use std::f64::consts::PI;

use approx::assert_relative_eq;
use common::{dense, integrate_box, max_abs_diff, vec_diff, DenseOracle, PressureSides};
use mixwave::mesh::{BoundaryPartition, BoundaryTag};
use mixwave::mixed_spaces::{
    assemble_operators, pressure_error_l2, project_pressure, project_velocity, velocity_error_l2, MaterialField,
};
use mixwave::sparse::{cg_solve, schur_matrix, CsrMatrix, SolverConfig};
use mixwave::theta_scheme::{step, ProblemSpec, SchemeState, ThetaConfig};
use mixwave::verification::estimate_inverse_constant;
use mixwave::RectMesh;
use nalgebra::DVector;
use proptest::prelude::*;

fn tag(pressure: bool) -> BoundaryTag {
    if pressure {
        BoundaryTag::DirichletP
    } else {
        BoundaryTag::NeumannU
    }
}

struct Setup {
    mesh: RectMesh,
    bc: BoundaryPartition,
    material: MaterialField<f64>,
    oracle: DenseOracle,
}

fn setup(nx: usize, ny: usize, extents: [f64; 4], sides: [bool; 4], rho_amp: f64, lambda_amp: f64) -> Setup {
    let mesh = RectMesh::new(nx, ny, extents).unwrap();
    let bc = BoundaryPartition {
        left: tag(sides[0]),
        right: tag(sides[1]),
        bottom: tag(sides[2]),
        top: tag(sides[3]),
    };
    let material = MaterialField::from_fns(
        &mesh,
        |x, y| 1.0 + rho_amp * (3.0 * x + y).sin().abs(),
        |x, y| 1.0 + lambda_amp * (x - 2.0 * y).cos().abs(),
        [1.0, 1.0 + rho_amp, 1.0, 1.0 + lambda_amp],
    )
    .unwrap();
    let pressure = PressureSides {
        left: sides[0],
        right: sides[1],
        bottom: sides[2],
        top: sides[3],
    };
    let oracle = DenseOracle::build(nx, ny, extents, pressure, &material.rho, &material.lambda);
    Setup {
        mesh,
        bc,
        material,
        oracle,
    }
}

fn has_free_dof(nx: usize, ny: usize, sides: [bool; 4]) -> bool {
    nx > 1 || ny > 1 || sides.iter().any(|&s| s)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn operators_match_dense_oracle(
        nx in 1usize..4, ny in 1usize..4,
        sides in prop::array::uniform4(any::<bool>()),
        w in 0.5f64..2.0, hgt in 0.5f64..2.0,
        rho_amp in 0.0f64..3.0, lambda_amp in 0.0f64..3.0,
    ) {
        prop_assume!(has_free_dof(nx, ny, sides));
        let s = setup(nx, ny, [-0.3, -0.3 + w, 0.1, 0.1 + hgt], sides, rho_amp, lambda_amp);
        let ops = assemble_operators(&s.mesh, &s.bc, &s.material).unwrap();
        prop_assert_eq!(ops.dofs.free_edges(), &s.oracle.free[..]);
        prop_assert!(max_abs_diff(&dense(&ops.a), &s.oracle.a) <= 1e-12);
        prop_assert!(max_abs_diff(&dense(&ops.d), &s.oracle.d) <= 1e-12);
        prop_assert!(vec_diff(&ops.c_diag, &s.oracle.c) <= 1e-12);
    }

    #[test]
    fn theta_step_matches_saddle_point_solve(
        nx in 1usize..4, ny in 1usize..4,
        sides in prop::array::uniform4(any::<bool>()),
        theta in 0.0f64..=1.0, dt in 0.001f64..0.5,
        seed in prop::collection::vec(-1.0f64..1.0, 48),
    ) {
        prop_assume!(has_free_dof(nx, ny, sides));
        let s = setup(nx, ny, [0.0, 1.0, 0.0, 1.0], sides, 1.0, 0.5);
        let ops = assemble_operators(&s.mesh, &s.bc, &s.material).unwrap();
        let n = s.oracle.free.len();
        let u_prev: Vec<f64> = seed[..n].to_vec();
        let u_curr: Vec<f64> = seed[24..24 + n].to_vec();
        let p_of = |u: &[f64]| (&s.oracle.d * DVector::from_column_slice(u)).component_div(&s.oracle.c);
        let (p_prev, p_curr) = (p_of(&u_prev), p_of(&u_curr));
        let state = SchemeState {
            n: 1,
            u_prev: u_prev.clone(),
            u_curr: u_curr.clone(),
            p_prev: p_prev.iter().copied().collect(),
            p_curr: p_curr.iter().copied().collect(),
        };
        let problem = ProblemSpec::homogeneous(s.mesh.clone(), s.bc, s.material.clone());
        let cfg = ThetaConfig::fixed_steps(theta, dt, 2).unwrap();
        let solver = SolverConfig::new(1e-15, Some(1000)).unwrap();
        let (next, _) = step(&state, &ops, &cfg, &problem, &solver).unwrap();

        let uc = DVector::from_column_slice(&u_curr);
        let up = DVector::from_column_slice(&u_prev);
        let rhs = &s.oracle.a * (2.0 * &uc - &up)
            - dt * dt * s.oracle.d.transpose() * ((1.0 - 2.0 * theta) * &p_curr + theta * &p_prev);
        let (u_ref, p_ref) = s.oracle.saddle_solve(theta * dt * dt, &rhs);
        let scale = 1.0 + u_ref.amax() + p_ref.amax();
        prop_assert!(vec_diff(&next.u_curr, &u_ref) <= 1e-10 * scale);
        prop_assert!(vec_diff(&next.p_curr, &p_ref) <= 1e-10 * scale);
        prop_assert!(ops.constraint_residual(&next.u_curr, &next.p_curr) <= 1e-9 * scale);
    }

    #[test]
    fn cg_matches_dense_solve_on_step_matrix(
        n in 2usize..6, theta in 0.0f64..=1.0, dt in 0.001f64..0.3,
        rhs in prop::collection::vec(-1.0f64..1.0, 60),
    ) {
        let s = setup(n, n, [0.0, 1.0, 0.0, 1.0], [false; 4], 2.0, 1.0);
        let ops = assemble_operators(&s.mesh, &s.bc, &s.material).unwrap();
        let kappa = theta * dt * dt;
        let m = schur_matrix(&ops.a, &ops.d, &ops.c_diag, kappa).unwrap();
        let b: Vec<f64> = rhs.iter().cycle().take(m.nrows()).copied().collect();
        let x = cg_solve(&m, &b, &SolverConfig::new(1e-14, None).unwrap()).unwrap().x;
        let reference = s.oracle.schur(kappa).lu().solve(&DVector::from_column_slice(&b)).unwrap();
        prop_assert!(vec_diff(&x, &reference) <= 1e-10 * (1.0 + reference.amax()));
    }

    #[test]
    fn power_iteration_matches_dense_eigensolve(
        nx in 1usize..5, ny in 1usize..5,
        sides in prop::array::uniform4(any::<bool>()),
    ) {
        prop_assume!(has_free_dof(nx, ny, sides));
        let mesh = RectMesh::new(nx, ny, [0.0, 1.0, 0.0, 1.0]).unwrap();
        let bc = BoundaryPartition { left: tag(sides[0]), right: tag(sides[1]), bottom: tag(sides[2]), top: tag(sides[3]) };
        let unit = MaterialField::uniform(&mesh, 1.0, 1.0).unwrap();
        let ops = assemble_operators(&mesh, &bc, &unit).unwrap();
        let ones = vec![1.0; nx * ny];
        let pressure = PressureSides { left: sides[0], right: sides[1], bottom: sides[2], top: sides[3] };
        let oracle = DenseOracle::build(nx, ny, [0.0, 1.0, 0.0, 1.0], pressure, &ones, &ones);
        let est = estimate_inverse_constant(&mesh, &ops).unwrap();
        let c0 = mesh.h * oracle.max_generalized_eigenvalue().sqrt();
        prop_assert!((est.c0 - c0).abs() <= 1e-6 * c0, "power {} dense {}", est.c0, c0);
    }
}

#[test]
fn schur_matches_dense_triple_product() {
    let s = setup(3, 2, [0.0, 1.5, 0.0, 1.0], [true, false, false, true], 1.5, 2.0);
    let ops = assemble_operators(&s.mesh, &s.bc, &s.material).unwrap();
    for kappa in [0.0, 1e-4, 0.37, 12.0] {
        let m = schur_matrix(&ops.a, &ops.d, &ops.c_diag, kappa).unwrap();
        let reference = s.oracle.schur(kappa);
        assert!(max_abs_diff(&dense(&m), &reference) <= 1e-14 * (1.0 + reference.amax()));
        assert!(m.max_asymmetry() <= 1e-15 * (1.0 + reference.amax()));
    }
}

#[test]
fn cg_on_step_matrix_4x4() {
    let mesh = RectMesh::unit_square(4).unwrap();
    let unit = MaterialField::uniform(&mesh, 1.0, 1.0).unwrap();
    let ops = assemble_operators(&mesh, &BoundaryPartition::all_neumann(), &unit).unwrap();
    let m: CsrMatrix<f64> = schur_matrix(&ops.a, &ops.d, &ops.c_diag, 0.25 * 0.01 * 0.01).unwrap();
    let b: Vec<f64> = (0..m.nrows()).map(|i| ((i * 7 % 5) as f64 - 2.0) * 0.3).collect();
    let sol = cg_solve(&m, &b, &SolverConfig::default()).unwrap();
    let reference = dense(&m).lu().solve(&DVector::from_column_slice(&b)).unwrap();
    assert!(vec_diff(&sol.x, &reference) <= 1e-10);
    assert!(sol.relative_residual <= 1e-12);
}

#[test]
fn pressure_projection_is_the_exact_average() {
    let mesh = RectMesh::new(3, 2, [0.0, 1.0, 0.0, 1.0]).unwrap();
    let poly = project_pressure(&mesh, &|x, y| x * x * y);
    let trig = project_pressure(&mesh, &|x, _| (PI * x).sin());
    for e in 0..mesh.num_elements() {
        let (xa, ya) = mesh.element_origin(e);
        let (xb, yb) = (xa + mesh.hx, ya + mesh.hy);
        let exact = (xb.powi(3) - xa.powi(3)) / (3.0 * mesh.hx) * (yb * yb - ya * ya) / (2.0 * mesh.hy);
        assert_relative_eq!(poly[e], exact, epsilon = 1e-12);
        let exact = ((PI * xa).cos() - (PI * xb).cos()) / (PI * mesh.hx);
        assert_relative_eq!(trig[e], exact, epsilon = 1e-12);
    }
}

#[test]
fn commuting_projection_on_partial_boundary() {
    // z·ν = 0 on the rigid sides so the eliminated dofs carry no flux
    let z = |x: f64, y: f64| [(PI * x).sin() * y.exp(), (PI * y).sin() * (1.0 + x * x)];
    let div = |x: f64, y: f64| PI * (PI * x).cos() * y.exp() + PI * (PI * y).cos() * (1.0 + x * x);
    let mesh = RectMesh::unit_square(4).unwrap();
    let unit = MaterialField::uniform(&mesh, 1.0, 1.0).unwrap();
    let ops = assemble_operators(&mesh, &BoundaryPartition::all_neumann(), &unit).unwrap();
    let dpz = ops.d.spmv(&project_velocity(&mesh, &ops.dofs, &z)).unwrap();
    for (e, v) in dpz.iter().enumerate() {
        let (xa, ya) = mesh.element_origin(e);
        let exact = integrate_box(xa, xa + mesh.hx, ya, ya + mesh.hy, 4, &div);
        assert!((v - exact).abs() <= 1e-10);
    }
}

#[test]
fn interpolation_errors_are_first_order() {
    let u = |x: f64, y: f64| [(PI * x).sin() * (PI * y).cos(), x * y * (1.0 - y)];
    let p = |x: f64, y: f64| (2.0 * x + y).cos();
    let mut prev: Option<(f64, f64, f64)> = None;
    for n in [4usize, 8, 16, 32] {
        let mesh = RectMesh::unit_square(n).unwrap();
        let unit = MaterialField::uniform(&mesh, 1.0, 1.0).unwrap();
        let ops = assemble_operators(&mesh, &BoundaryPartition::all_dirichlet(), &unit).unwrap();
        let eu = velocity_error_l2(&mesh, &ops.dofs, &unit, &project_velocity(&mesh, &ops.dofs, &u), &u);
        let ep = pressure_error_l2(&mesh, &unit, &project_pressure(&mesh, &p), &p);
        if let Some((h0, eu0, ep0)) = prev {
            let ru = (eu0 / eu).ln() / (h0 / mesh.h).ln();
            let rp = (ep0 / ep).ln() / (h0 / mesh.h).ln();
            assert!(ru >= 0.9, "velocity interpolation order {ru}");
            assert!(rp >= 0.9, "pressure projection order {rp}");
        }
        prev = Some((mesh.h, eu, ep));
    }
}
