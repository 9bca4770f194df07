//! Closed-form solutions of `ρ u_tt − ∇p = f`, `p = λ ∇·u` on the unit square.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mesh::{BoundaryPartition, RectMesh};
use crate::mixed_spaces::MaterialField;
use crate::scalar::Scalar;
use crate::theta_scheme::{ExactSolution, ProblemSpec, SpaceTimeScalar, SpaceTimeVector};

/// Residual bound every manufactured solution must meet before a study runs.
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;

#[derive(Clone)]
pub struct ManufacturedSolution<T> {
    pub name: String,
    pub u: SpaceTimeVector<T>,
    pub u_t: SpaceTimeVector<T>,
    pub u_tt: SpaceTimeVector<T>,
    pub p: SpaceTimeScalar<T>,
    pub grad_p: SpaceTimeVector<T>,
    pub div_u: SpaceTimeScalar<T>,
    /// `None` when the solution is force free.
    pub f: Option<SpaceTimeVector<T>>,
    pub rho: T,
    pub lambda: T,
    pub bc: BoundaryPartition,
    /// Conserved continuous energy `½‖ρ^{1/2}u_t‖² + ½‖λ^{-1/2}p‖²` when `f = 0`.
    pub energy: Option<T>,
}

impl<T> std::fmt::Debug for ManufacturedSolution<T>
where
    T: std::fmt::Debug,
{
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ManufacturedSolution")
            .field("name", &self.name)
            .field("rho", &self.rho)
            .field("lambda", &self.lambda)
            .field("energy", &self.energy)
            .finish_non_exhaustive()
    }
}

/// Spatial profile `∇(cos πx cos πy)`.
fn profile<T: Scalar>(x: T, y: T) -> [T; 2] {
    let pi = T::PI();
    let (sx, cx) = (pi * x).sin_cos();
    let (sy, cy) = (pi * y).sin_cos();
    [-pi * sx * cy, -pi * cx * sy]
}

fn bump<T: Scalar>(x: T, y: T) -> T {
    let pi = T::PI();
    (pi * x).cos() * (pi * y).cos()
}

fn scaled<T: Scalar>(s: T, v: [T; 2]) -> [T; 2] {
    [s * v[0], s * v[1]]
}

/// Standing wave `u = cos(ωt) ∇(cos πx cos πy)` with ρ = λ = 1 and `u·ν = 0`
/// on the whole boundary, driven by `f = (2π² − ω²) cos(ωt) ∇(cos πx cos πy)`.
pub fn mms_forced<T: Scalar>(omega: T) -> ManufacturedSolution<T> {
    let two_pi2 = T::of(2.0) * T::PI() * T::PI();
    let amp = two_pi2 - omega * omega;
    ManufacturedSolution {
        name: format!("forced:{omega}"),
        u: Arc::new(move |x, y, t| scaled((omega * t).cos(), profile(x, y))),
        u_t: Arc::new(move |x, y, t| scaled(-omega * (omega * t).sin(), profile(x, y))),
        u_tt: Arc::new(move |x, y, t| scaled(-omega * omega * (omega * t).cos(), profile(x, y))),
        p: Arc::new(move |x, y, t| -two_pi2 * (omega * t).cos() * bump(x, y)),
        grad_p: Arc::new(move |x, y, t| scaled(-two_pi2 * (omega * t).cos(), profile(x, y))),
        div_u: Arc::new(move |x, y, t| -two_pi2 * (omega * t).cos() * bump(x, y)),
        f: Some(Arc::new(move |x, y, t| scaled(amp * (omega * t).cos(), profile(x, y)))),
        rho: T::one(),
        lambda: T::one(),
        bc: BoundaryPartition::all_neumann(),
        energy: None,
    }
}

/// Force-free standing wave with `ω = √2 π`; its energy is `π⁴/2` for all time.
pub fn mms_standing_wave<T: Scalar>() -> ManufacturedSolution<T> {
    let omega = T::SQRT_2() * T::PI();
    let pi2 = T::PI() * T::PI();
    ManufacturedSolution {
        name: "standing-wave".to_string(),
        f: None,
        energy: Some(pi2 * pi2 / T::of(2.0)),
        ..mms_forced(omega)
    }
}

impl<T: Scalar> ManufacturedSolution<T> {
    /// Largest of `|ρu_tt − ∇p − f|` and `|p − λ∇·u|` over random samples in
    /// `(0,1)² × (0,1)`.
    pub fn max_residual(&self, samples: usize, seed: u64) -> T {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = T::zero();
        for _ in 0..samples {
            let x = T::of(rng.random::<f64>());
            let y = T::of(rng.random::<f64>());
            let t = T::of(rng.random::<f64>());
            worst = worst.max(self.residual_at(x, y, t));
        }
        worst
    }

    pub fn residual_at(&self, x: T, y: T, t: T) -> T {
        let utt = (self.u_tt)(x, y, t);
        let gp = (self.grad_p)(x, y, t);
        let f = self.f.as_ref().map_or([T::zero(); 2], |f| f(x, y, t));
        let momentum = [
            self.rho * utt[0] - gp[0] - f[0],
            self.rho * utt[1] - gp[1] - f[1],
        ];
        let constitutive = (self.p)(x, y, t) - self.lambda * (self.div_u)(x, y, t);
        momentum[0].abs().max(momentum[1].abs()).max(constitutive.abs())
    }

    /// Fails unless the residual stays below [`RESIDUAL_TOLERANCE`] at 50 samples.
    pub fn verify(&self) -> Result<()> {
        let r = self.max_residual(50, 0x5eed);
        // scale with the working precision so f32 instances remain usable
        let tol = T::of(RESIDUAL_TOLERANCE).max(T::epsilon() * T::of(1e3));
        if r <= tol {
            Ok(())
        } else {
            Err(Error::ManufacturedResidual {
                name: self.name.clone(),
                residual: r.as_f64(),
            })
        }
    }

    /// The initial-boundary value problem on a uniform `nx × ny` grid of the unit square.
    pub fn problem_spec(&self, nx: usize, ny: usize) -> Result<ProblemSpec<T>> {
        let mesh = RectMesh::new(nx, ny, [T::zero(), T::one(), T::zero(), T::one()])?;
        let material = MaterialField::uniform(&mesh, self.rho, self.lambda)?;
        let (u, u_t, p) = (self.u.clone(), self.u_t.clone(), self.p.clone());
        Ok(ProblemSpec {
            mesh,
            bc: self.bc,
            material,
            force: self.f.clone(),
            u0: Arc::new(move |x, y| u(x, y, T::zero())),
            v0: Arc::new(move |x, y| u_t(x, y, T::zero())),
            p0: Arc::new(move |x, y| p(x, y, T::zero())),
            exact: Some(ExactSolution {
                u: self.u.clone(),
                p: self.p.clone(),
            }),
        })
    }
}
