//! Inverse-inequality constant of the discrete velocity space and the
//! resulting CFL bound.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mesh::{BoundaryPartition, RectMesh};
use crate::mixed_spaces::{assemble_operators, MaterialField, MixedOperators};
use crate::scalar::{dot, norm2, Scalar};
use crate::sparse::{cg_solve, SolverConfig};

pub const POWER_TOLERANCE: f64 = 1e-8;
pub const POWER_MAX_ITERATIONS: usize = 50_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverseEstimate<T> {
    /// `C0 = h · sqrt(μ_max)`
    pub c0: T,
    /// Largest eigenvalue of `Dᵀ M_p⁻¹ D v = μ M_u v`.
    pub mu_max: T,
    pub iterations: usize,
}

/// Both stability quantities for one mesh and material.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityEstimate<T> {
    pub c0: T,
    pub h: T,
    pub rho0: T,
    pub lambda1: T,
}

impl<T: Scalar> StabilityEstimate<T> {
    pub fn dt_max(&self, theta: T) -> T {
        cfl_max_dt(theta, self.h, self.c0, self.rho0, self.lambda1)
    }
}

/// Largest stable step for the θ-scheme: `+∞` for `θ ≥ 1/4`, otherwise
/// `(h / C0) · sqrt(ρ0 / λ1) / sqrt(1/4 − θ)`.
pub fn cfl_max_dt<T: Scalar>(theta: T, h: T, c0: T, rho0: T, lambda1: T) -> T {
    let gap = T::of(0.25) - theta;
    if gap <= T::zero() {
        return T::infinity();
    }
    (h / c0) * (rho0 / lambda1).sqrt() / gap.sqrt()
}

/// Checkerboard on every edge, `(−1)^{i+j}`, restricted to the free dofs.
/// It is the top generalized eigenvector when no edge is constrained.
fn checkerboard_seed<T: Scalar>(mesh: &RectMesh<T>, ops: &MixedOperators<T>) -> Vec<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    ops.dofs
        .free_edges()
        .iter()
        .map(|&edge| {
            let (i, j) = mesh.edge_ij(edge);
            let s = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            // small jitter so the seed is never orthogonal to the top mode
            let jitter = 1e-3 * rng.random_range(-1.0..1.0);
            T::of(s + jitter)
        })
        .collect()
}

/// Power iteration on `M_u⁻¹ (Dᵀ M_p⁻¹ D)` for operators assembled with ρ = λ = 1.
pub fn estimate_inverse_constant<T: Scalar>(
    mesh: &RectMesh<T>,
    ops: &MixedOperators<T>,
) -> Result<InverseEstimate<T>> {
    let n = ops.num_velocity();
    if n == 0 {
        return Err(Error::InvalidConfig(
            "the inverse constant needs at least one free velocity dof".into(),
        ));
    }
    let solver = SolverConfig {
        rel_tolerance: T::of(1e-13).max(T::epsilon() * T::of(10.0)),
        max_iterations: Some(20 * n + 100),
    };
    let tol = T::of(POWER_TOLERANCE).max(T::epsilon() * T::of(100.0));
    let mut v = checkerboard_seed(mesh, ops);
    let scale = norm2(&v);
    v.iter_mut().for_each(|x| *x /= scale);

    let mut kv = vec![T::zero(); n];
    let mut av = vec![T::zero(); n];
    let mut mu_prev = T::zero();
    let mut change = T::infinity();
    for it in 1..=POWER_MAX_ITERATIONS {
        // K v = Dᵀ C⁻¹ D v
        let q = ops.pressure_from_velocity(&v);
        ops.d_t.spmv_into(&q, &mut kv);
        ops.a.spmv_into(&v, &mut av);
        let mu = dot(&v, &kv) / dot(&v, &av);
        change = (mu - mu_prev).abs() / mu.abs().max(T::min_positive_value());
        if it > 1 && change <= tol {
            return Ok(InverseEstimate {
                c0: mesh.h * mu.sqrt(),
                mu_max: mu,
                iterations: it,
            });
        }
        mu_prev = mu;
        if kv.iter().all(|&x| x == T::zero()) {
            return Err(Error::PowerIterationStagnation {
                iterations: it,
                change: 0.0,
            });
        }
        let next = cg_solve(&ops.a, &kv, &solver)?.x;
        let s = norm2(&next);
        v = next.into_iter().map(|x| x / s).collect();
    }
    Err(Error::PowerIterationStagnation {
        iterations: POWER_MAX_ITERATIONS,
        change: change.as_f64(),
    })
}

/// Assembles the unit-weight operators for `mesh`/`bc` and estimates `C0`.
pub fn inverse_constant_for<T: Scalar>(mesh: &RectMesh<T>, bc: &BoundaryPartition) -> Result<InverseEstimate<T>> {
    let unit = MaterialField::uniform(mesh, T::one(), T::one())?;
    let ops = assemble_operators(mesh, bc, &unit)?;
    estimate_inverse_constant(mesh, &ops)
}
