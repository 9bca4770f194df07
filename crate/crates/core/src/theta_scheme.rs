//! The fully discrete three-level θ-scheme and its conserved discrete energy.
//!
//! With coefficient vectors `Uⁿ` (edge fluxes) and `Pⁿ` (element values) the
//! scheme reads
//!
//! ```text
//! A (Uⁿ⁺¹ − 2Uⁿ + Uⁿ⁻¹)/Δt² + Dᵀ P^{n;θ} = F^{n;θ}
//! C Pⁿ⁺¹ = D Uⁿ⁺¹
//! ```
//!
//! where `v^{n;θ} = θvⁿ⁺¹ + (1 − 2θ)vⁿ + θvⁿ⁻¹`. Eliminating `Pⁿ⁺¹` through the
//! diagonal `C` leaves one SPD solve per step with
//! `S = A + θΔt² Dᵀ C⁻¹ D`. The first level comes from a second-order Taylor
//! start in which `Pⁿ` again enters only through `C⁻¹ D`.

use std::sync::Arc;

use log::{debug, info, warn};

use crate::error::{Error, Result};
use crate::mesh::{BoundaryPartition, RectMesh};
use crate::mixed_spaces::{
    assemble_load, assemble_operators, pressure_error_l2, project_pressure, project_velocity,
    velocity_error_l2, MaterialField, MixedOperators,
};
use crate::scalar::{axpy, norm_inf, Scalar};
use crate::sparse::{cg_solve, schur_matrix, CsrMatrix, SolverConfig};

pub type SpaceTimeVector<T> = Arc<dyn Fn(T, T, T) -> [T; 2] + Send + Sync>;
pub type SpaceTimeScalar<T> = Arc<dyn Fn(T, T, T) -> T + Send + Sync>;
pub type SpatialVector<T> = Arc<dyn Fn(T, T) -> [T; 2] + Send + Sync>;
pub type SpatialScalar<T> = Arc<dyn Fn(T, T) -> T + Send + Sync>;

/// Velocity sup-norm beyond which a run is declared blown up.
pub const BLOWUP_THRESHOLD: f64 = 1e12;

/// Above this `‖C P⁰ − D U⁰‖_∞` the initial data are reported as incompatible.
pub const COMPATIBILITY_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaConfig<T> {
    pub theta: T,
    pub dt: T,
    pub num_steps: usize,
    pub final_time: T,
}

impl<T: Scalar> ThetaConfig<T> {
    pub fn new(theta: T, dt: T, num_steps: usize, final_time: T) -> Result<Self> {
        if !(theta >= T::zero() && theta <= T::one()) {
            return Err(Error::InvalidConfig(format!("theta = {theta} must lie in [0, 1]")));
        }
        if !(dt > T::zero()) || !dt.is_finite() {
            return Err(Error::InvalidConfig(format!("time step {dt} must be positive")));
        }
        if num_steps == 0 {
            return Err(Error::InvalidConfig("at least one time step is required".into()));
        }
        let implied = dt * T::of_usize(num_steps);
        // 1e-12 relative, widened to a few ulps for f32
        let rel_tol = T::of(1e-12).max(T::epsilon() * T::of(4.0));
        if !((implied - final_time).abs() <= rel_tol * final_time.abs()) {
            return Err(Error::InvalidConfig(format!(
                "final time {final_time} differs from {num_steps} x {dt} = {implied}"
            )));
        }
        Ok(Self {
            theta,
            dt,
            num_steps,
            final_time,
        })
    }

    /// `N` steps of size `T / N`.
    pub fn with_steps(theta: T, final_time: T, num_steps: usize) -> Result<Self> {
        if num_steps == 0 {
            return Err(Error::InvalidConfig("at least one time step is required".into()));
        }
        Self::new(theta, final_time / T::of_usize(num_steps), num_steps, final_time)
    }

    /// Smallest `N` with `T / N ≤ max_dt`.
    pub fn with_max_step(theta: T, final_time: T, max_dt: T) -> Result<Self> {
        if !(max_dt > T::zero()) || !(final_time > T::zero()) {
            return Err(Error::InvalidConfig(format!(
                "need positive final time and step bound, got {final_time} and {max_dt}"
            )));
        }
        let ratio = (final_time / max_dt).as_f64();
        // tolerate ratios that are integers up to rounding
        let mut n = (ratio - 1e-9).ceil().max(1.0) as usize;
        if final_time / T::of_usize(n) > max_dt * (T::one() + T::of(1e-12)) {
            n += 1;
        }
        Self::with_steps(theta, final_time, n)
    }

    /// Exactly `num_steps` steps of the given size.
    pub fn fixed_steps(theta: T, dt: T, num_steps: usize) -> Result<Self> {
        Self::new(theta, dt, num_steps, dt * T::of_usize(num_steps))
    }

    pub fn time(&self, n: usize) -> T {
        T::of_usize(n) * self.dt
    }
}

/// Exact displacement and pressure of a manufactured problem.
#[derive(Clone)]
pub struct ExactSolution<T> {
    pub u: SpaceTimeVector<T>,
    pub p: SpaceTimeScalar<T>,
}

/// Everything that defines one initial-boundary value problem.
#[derive(Clone)]
pub struct ProblemSpec<T> {
    pub mesh: RectMesh<T>,
    pub bc: BoundaryPartition,
    pub material: MaterialField<T>,
    /// `None` means `f ≡ 0`.
    pub force: Option<SpaceTimeVector<T>>,
    pub u0: SpatialVector<T>,
    pub v0: SpatialVector<T>,
    pub p0: SpatialScalar<T>,
    pub exact: Option<ExactSolution<T>>,
}

impl<T: Scalar> ProblemSpec<T> {
    /// Problem with vanishing data on the given mesh.
    pub fn homogeneous(mesh: RectMesh<T>, bc: BoundaryPartition, material: MaterialField<T>) -> Self {
        Self {
            mesh,
            bc,
            material,
            force: None,
            u0: Arc::new(|_, _| [T::zero(); 2]),
            v0: Arc::new(|_, _| [T::zero(); 2]),
            p0: Arc::new(|_, _| T::zero()),
            exact: None,
        }
    }

    pub fn assemble(&self) -> Result<MixedOperators<T>> {
        assemble_operators(&self.mesh, &self.bc, &self.material)
    }
}

impl<T> std::fmt::Debug for ProblemSpec<T>
where
    T: std::fmt::Debug,
{
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("mesh", &self.mesh)
            .field("bc", &self.bc)
            .field("forced", &self.force.is_some())
            .field("exact", &self.exact.is_some())
            .finish_non_exhaustive()
    }
}

/// Two consecutive time levels `(n − 1, n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeState<T> {
    pub n: usize,
    pub u_prev: Vec<T>,
    pub u_curr: Vec<T>,
    pub p_prev: Vec<T>,
    pub p_curr: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergySample<T> {
    /// Lower level of the pair, so the sample is `E^{n+1/2}`.
    pub n: usize,
    pub t_half: T,
    pub value: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepStatus {
    Advanced,
    BlowUp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Completed,
    /// Velocity sup-norm exceeded [`BLOWUP_THRESHOLD`] at this level.
    BlowUp { level: usize },
}

/// `θ vⁿ⁺¹ + (1 − 2θ) vⁿ + θ vⁿ⁻¹`
pub fn theta_average<T: Scalar>(theta: T, prev: &[T], curr: &[T], next: &[T]) -> Vec<T> {
    let mid = T::one() - T::of(2.0) * theta;
    prev.iter()
        .zip(curr)
        .zip(next)
        .map(|((&a, &b), &c)| theta * c + mid * b + theta * a)
        .collect()
}

/// The same average written as `Δt²(θ − ¼) ∂̄_tt vⁿ + ½(v^{n+1/2} + v^{n−1/2})`,
/// the split that exposes the discrete energy.
pub fn theta_average_split<T: Scalar>(theta: T, dt: T, prev: &[T], curr: &[T], next: &[T]) -> Vec<T> {
    let quarter = T::of(0.25);
    let half = T::of(0.5);
    prev.iter()
        .zip(curr)
        .zip(next)
        .map(|((&a, &b), &c)| {
            let dtt = (c - T::of(2.0) * b + a) / (dt * dt);
            let halves = half * ((c + b) * half + (b + a) * half);
            dt * dt * (theta - quarter) * dtt + halves
        })
        .collect()
}

/// `E^{n+1/2} = ½[ẋᵀAẋ + Δt²(θ − ¼) q̇ᵀCq̇ + q̄ᵀCq̄]` for the level pair `(n, n+1)`.
pub fn discrete_energy<T: Scalar>(
    ops: &MixedOperators<T>,
    cfg: &ThetaConfig<T>,
    n: usize,
    u_n: &[T],
    u_next: &[T],
    p_n: &[T],
    p_next: &[T],
) -> EnergySample<T> {
    let dt = cfg.dt;
    let half = T::of(0.5);
    let xdot: Vec<T> = u_next.iter().zip(u_n).map(|(&a, &b)| (a - b) / dt).collect();
    let qdot: Vec<T> = p_next.iter().zip(p_n).map(|(&a, &b)| (a - b) / dt).collect();
    let qbar: Vec<T> = p_next.iter().zip(p_n).map(|(&a, &b)| half * (a + b)).collect();
    let kinetic = ops.velocity_norm_sq(&xdot);
    let theta_term = (cfg.theta - T::of(0.25)) * dt * dt;
    let correction = if theta_term == T::zero() {
        T::zero()
    } else {
        theta_term * ops.pressure_norm_sq(&qdot)
    };
    let potential = ops.pressure_norm_sq(&qbar);
    EnergySample {
        n,
        t_half: cfg.time(n) + half * dt,
        value: half * (kinetic + correction + potential),
    }
}

/// Caches load vectors for the three levels a step touches.
struct LoadCache<T> {
    slots: Vec<(usize, Vec<T>)>,
}

impl<T: Scalar> LoadCache<T> {
    fn new() -> Self {
        Self { slots: Vec::with_capacity(3) }
    }

    fn get(&mut self, problem: &ProblemSpec<T>, ops: &MixedOperators<T>, cfg: &ThetaConfig<T>, level: usize) -> &[T] {
        if let Some(k) = self.slots.iter().position(|(l, _)| *l == level) {
            return &self.slots[k].1;
        }
        let load = match &problem.force {
            Some(f) => assemble_load(&problem.mesh, &ops.dofs, f.as_ref(), cfg.time(level)),
            None => vec![T::zero(); ops.num_velocity()],
        };
        if self.slots.len() == 3 {
            // evict the oldest level
            let oldest = (0..3).min_by_key(|&k| self.slots[k].0).expect("three slots");
            self.slots.swap_remove(oldest);
        }
        self.slots.push((level, load));
        &self.slots.last().expect("just pushed").1
    }
}

/// Result of the start-up phase.
#[derive(Debug, Clone)]
pub struct Startup<T> {
    pub state: SchemeState<T>,
    /// `‖C P⁰ − D U⁰‖_∞`
    pub compatibility_residual: T,
}

/// Stepping engine bound to one problem, one operator set and one configuration.
pub struct ThetaScheme<'a, T: Scalar> {
    problem: &'a ProblemSpec<T>,
    ops: &'a MixedOperators<T>,
    cfg: ThetaConfig<T>,
    solver: SolverConfig<T>,
    step_matrix: CsrMatrix<T>,
    loads: LoadCache<T>,
}

impl<'a, T: Scalar> ThetaScheme<'a, T> {
    pub fn new(
        problem: &'a ProblemSpec<T>,
        ops: &'a MixedOperators<T>,
        cfg: ThetaConfig<T>,
        solver: SolverConfig<T>,
    ) -> Result<Self> {
        let coeff = cfg.theta * cfg.dt * cfg.dt;
        let step_matrix = schur_matrix(&ops.a, &ops.d, &ops.c_diag, coeff)?;
        Ok(Self {
            problem,
            ops,
            cfg,
            solver,
            step_matrix,
            loads: LoadCache::new(),
        })
    }

    pub fn config(&self) -> &ThetaConfig<T> {
        &self.cfg
    }

    pub fn operators(&self) -> &MixedOperators<T> {
        self.ops
    }

    /// `S(θ, Δt) = A + θΔt² Dᵀ C⁻¹ D`
    pub fn step_matrix(&self) -> &CsrMatrix<T> {
        &self.step_matrix
    }

    /// Solves `M x = rhs` as a correction to `predictor`.
    fn solve_from(&self, m: &CsrMatrix<T>, rhs: &[T], mut predictor: Vec<T>) -> Result<Vec<T>> {
        let mut residual = rhs.to_vec();
        let mut mx = vec![T::zero(); rhs.len()];
        m.spmv_into(&predictor, &mut mx);
        axpy(-T::one(), &mx, &mut residual);
        let correction = cg_solve(m, &residual, &self.solver)?;
        debug!(
            "CG correction: {} iterations, relative residual {:e}",
            correction.iterations, correction.relative_residual
        );
        axpy(T::one(), &correction.x, &mut predictor);
        Ok(predictor)
    }

    fn initial_levels(&self) -> (Vec<T>, Vec<T>, Vec<T>, T) {
        let mesh = &self.problem.mesh;
        let u0 = project_velocity(mesh, &self.ops.dofs, self.problem.u0.as_ref());
        let v0 = project_velocity(mesh, &self.ops.dofs, self.problem.v0.as_ref());
        let p0 = project_pressure(mesh, self.problem.p0.as_ref());
        let residual = self.ops.constraint_residual(&u0, &p0);
        if residual > T::of(COMPATIBILITY_TOLERANCE) {
            warn!(
                "initial data violate C P0 = D U0 by {residual:e}; the scheme enforces the constraint from level 1 on"
            );
        }
        (u0, v0, p0, residual)
    }

    /// Levels 0 and 1: interpolated data and the Taylor start
    /// `S U¹ = AU⁰ + ΔtAV⁰ + (θΔt² − Δt²/2)DᵀP⁰ + (Δt²/2)F⁰ + θΔt²(F¹ − F⁰)`.
    pub fn initialize(&mut self) -> Result<Startup<T>> {
        let (u0, v0, p0, compatibility_residual) = self.initial_levels();
        let ops = self.ops;
        let dt = self.cfg.dt;
        let dt2 = dt * dt;
        let theta = self.cfg.theta;
        let half = T::of(0.5);

        let f0 = self.loads.get(self.problem, ops, &self.cfg, 0).to_vec();
        let f1 = self.loads.get(self.problem, ops, &self.cfg, 1).to_vec();

        let predictor: Vec<T> = u0.iter().zip(&v0).map(|(&u, &v)| u + dt * v).collect();
        let mut rhs = ops.a.spmv(&predictor)?;
        let dtp = ops.d_t.spmv(&p0)?;
        axpy(theta * dt2 - half * dt2, &dtp, &mut rhs);
        axpy(half * dt2 - theta * dt2, &f0, &mut rhs);
        axpy(theta * dt2, &f1, &mut rhs);

        let u1 = self.solve_from(&self.step_matrix, &rhs, predictor)?;
        let p1 = ops.pressure_from_velocity(&u1);
        Ok(Startup {
            state: SchemeState {
                n: 1,
                u_prev: u0,
                u_curr: u1,
                p_prev: p0,
                p_curr: p1,
            },
            compatibility_residual,
        })
    }

    /// θ = 0 start written out explicitly:
    /// `U¹ = U⁰ + ΔtV⁰ + (Δt²/2) A⁻¹(F⁰ − DᵀP⁰)`.
    pub fn initialize_explicit(&mut self) -> Result<Startup<T>> {
        self.require_explicit()?;
        let (u0, v0, p0, compatibility_residual) = self.initial_levels();
        let ops = self.ops;
        let dt = self.cfg.dt;
        let mut forcing = self.loads.get(self.problem, ops, &self.cfg, 0).to_vec();
        axpy(-T::one(), &ops.d_t.spmv(&p0)?, &mut forcing);
        let accel = cg_solve(&ops.a, &forcing, &self.solver)?.x;
        let half_dt2 = T::of(0.5) * dt * dt;
        let u1: Vec<T> = (0..u0.len())
            .map(|i| u0[i] + dt * v0[i] + half_dt2 * accel[i])
            .collect();
        let p1 = ops.pressure_from_velocity(&u1);
        Ok(Startup {
            state: SchemeState {
                n: 1,
                u_prev: u0,
                u_curr: u1,
                p_prev: p0,
                p_curr: p1,
            },
            compatibility_residual,
        })
    }

    /// Advances `(n − 1, n)` to `(n, n + 1)`:
    /// `S Uⁿ⁺¹ = A(2Uⁿ − Uⁿ⁻¹) − Δt²Dᵀ[(1 − 2θ)Pⁿ + θPⁿ⁻¹] + Δt²F^{n;θ}`.
    pub fn step(&mut self, state: &mut SchemeState<T>) -> Result<StepStatus> {
        if self.is_blown_up(&state.u_curr) {
            return Ok(StepStatus::BlowUp);
        }
        let ops = self.ops;
        let n = state.n;
        let theta = self.cfg.theta;
        let dt2 = self.cfg.dt * self.cfg.dt;
        let two = T::of(2.0);

        let predictor: Vec<T> = state
            .u_curr
            .iter()
            .zip(&state.u_prev)
            .map(|(&c, &p)| two * c - p)
            .collect();
        let mut rhs = ops.a.spmv(&predictor)?;
        let mid = T::one() - two * theta;
        let p_mix: Vec<T> = state
            .p_curr
            .iter()
            .zip(&state.p_prev)
            .map(|(&c, &p)| mid * c + theta * p)
            .collect();
        axpy(-dt2, &ops.d_t.spmv(&p_mix)?, &mut rhs);
        if self.problem.force.is_some() {
            let f_prev = self.loads.get(self.problem, ops, &self.cfg, n - 1).to_vec();
            let f_curr = self.loads.get(self.problem, ops, &self.cfg, n).to_vec();
            let f_next = self.loads.get(self.problem, ops, &self.cfg, n + 1).to_vec();
            let f_theta = theta_average(theta, &f_prev, &f_curr, &f_next);
            axpy(dt2, &f_theta, &mut rhs);
        }

        let u_next = self.solve_from(&self.step_matrix, &rhs, predictor)?;
        let p_next = ops.pressure_from_velocity(&u_next);
        Self::advance(state, u_next, p_next);
        Ok(if self.is_blown_up(&state.u_curr) {
            StepStatus::BlowUp
        } else {
            StepStatus::Advanced
        })
    }

    /// θ = 0 step written out explicitly:
    /// `Uⁿ⁺¹ = 2Uⁿ − Uⁿ⁻¹ + Δt² A⁻¹(Fⁿ − DᵀPⁿ)`.
    pub fn step_explicit(&mut self, state: &mut SchemeState<T>) -> Result<StepStatus> {
        self.require_explicit()?;
        if self.is_blown_up(&state.u_curr) {
            return Ok(StepStatus::BlowUp);
        }
        let ops = self.ops;
        let dt2 = self.cfg.dt * self.cfg.dt;
        let mut forcing = self.loads.get(self.problem, ops, &self.cfg, state.n).to_vec();
        axpy(-T::one(), &ops.d_t.spmv(&state.p_curr)?, &mut forcing);
        let accel = cg_solve(&ops.a, &forcing, &self.solver)?.x;
        let u_next: Vec<T> = (0..accel.len())
            .map(|i| T::of(2.0) * state.u_curr[i] - state.u_prev[i] + dt2 * accel[i])
            .collect();
        let p_next = ops.pressure_from_velocity(&u_next);
        Self::advance(state, u_next, p_next);
        Ok(if self.is_blown_up(&state.u_curr) {
            StepStatus::BlowUp
        } else {
            StepStatus::Advanced
        })
    }

    pub fn energy(&self, state: &SchemeState<T>) -> EnergySample<T> {
        discrete_energy(
            self.ops,
            &self.cfg,
            state.n - 1,
            &state.u_prev,
            &state.u_curr,
            &state.p_prev,
            &state.p_curr,
        )
    }

    fn require_explicit(&self) -> Result<()> {
        if self.cfg.theta != T::zero() {
            return Err(Error::InvalidConfig(format!(
                "the explicit update needs theta = 0, got {}",
                self.cfg.theta
            )));
        }
        Ok(())
    }

    fn is_blown_up(&self, u: &[T]) -> bool {
        let m = norm_inf(u);
        !(m <= T::of(BLOWUP_THRESHOLD))
    }

    fn advance(state: &mut SchemeState<T>, u_next: Vec<T>, p_next: Vec<T>) {
        state.u_prev = std::mem::replace(&mut state.u_curr, u_next);
        state.p_prev = std::mem::replace(&mut state.p_curr, p_next);
        state.n += 1;
    }
}

/// Free-function form of [`ThetaScheme::initialize`].
pub fn initialize<T: Scalar>(
    problem: &ProblemSpec<T>,
    ops: &MixedOperators<T>,
    cfg: &ThetaConfig<T>,
    solver: &SolverConfig<T>,
) -> Result<Startup<T>> {
    ThetaScheme::new(problem, ops, *cfg, *solver)?.initialize()
}

/// Free-function form of [`ThetaScheme::step`]; rebuilds the step matrix on
/// every call, so prefer the engine for long runs.
pub fn step<T: Scalar>(
    state: &SchemeState<T>,
    ops: &MixedOperators<T>,
    cfg: &ThetaConfig<T>,
    problem: &ProblemSpec<T>,
    solver: &SolverConfig<T>,
) -> Result<(SchemeState<T>, StepStatus)> {
    let mut next = state.clone();
    let status = ThetaScheme::new(problem, ops, *cfg, *solver)?.step(&mut next)?;
    Ok((next, status))
}

#[derive(Debug, Clone, Copy)]
pub struct RunOptions<T> {
    pub solver: SolverConfig<T>,
    /// Measure errors against the exact solution when one is attached.
    pub track_errors: bool,
}

impl<T: Scalar> Default for RunOptions<T> {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            track_errors: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelError<T> {
    pub n: usize,
    pub t: T,
    /// `‖ρ^{1/2}(uⁿ − Uⁿ)‖`
    pub err_u: T,
    /// `‖λ^{-1/2}(pⁿ − Pⁿ)‖`
    pub err_p: T,
}

#[derive(Debug, Clone)]
pub struct RunOutput<T> {
    pub energies: Vec<EnergySample<T>>,
    pub final_state: SchemeState<T>,
    pub status: RunStatus,
    /// One entry per level `0..=N` when errors are tracked, else empty.
    pub errors: Vec<LevelError<T>>,
    pub compatibility_residual: T,
    /// Largest `‖C Pⁿ − D Uⁿ‖_∞` over the computed levels.
    pub max_constraint_residual: T,
    pub config: ThetaConfig<T>,
}

impl<T: Scalar> RunOutput<T> {
    /// `max_n |E^{n+1/2} − E^{1/2}| / |E^{1/2}|`, or the absolute drift when `E^{1/2} = 0`.
    pub fn max_relative_drift(&self) -> T {
        max_relative_drift(&self.energies)
    }

    pub fn completed(&self) -> bool {
        self.status == RunStatus::Completed
    }
}

pub fn max_relative_drift<T: Scalar>(energies: &[EnergySample<T>]) -> T {
    let Some(first) = energies.first() else {
        return T::zero();
    };
    let scale = if first.value == T::zero() { T::one() } else { first.value.abs() };
    energies.iter().fold(T::zero(), |m, e| {
        let d = (e.value - first.value).abs() / scale;
        if d.is_nan() { T::nan() } else { m.max(d) }
    })
}

/// Observer of every computed level `(n, Uⁿ, Pⁿ)`, including level 0.
pub type LevelObserver<'o, T> = &'o mut dyn FnMut(usize, &[T], &[T]);

/// Assembles the operators, then runs [`run_with_operators`].
pub fn run<T: Scalar>(
    problem: &ProblemSpec<T>,
    cfg: &ThetaConfig<T>,
    options: &RunOptions<T>,
    observer: Option<LevelObserver<'_, T>>,
) -> Result<RunOutput<T>> {
    let ops = problem.assemble()?;
    run_with_operators(problem, &ops, cfg, options, observer)
}

/// Initializes, then takes `N − 1` steps, recording `E^{n+1/2}` for every
/// level pair and, when requested, the errors against the exact solution.
pub fn run_with_operators<T: Scalar>(
    problem: &ProblemSpec<T>,
    ops: &MixedOperators<T>,
    cfg: &ThetaConfig<T>,
    options: &RunOptions<T>,
    mut observer: Option<LevelObserver<'_, T>>,
) -> Result<RunOutput<T>> {
    let mut scheme = ThetaScheme::new(problem, ops, *cfg, options.solver)?;
    let startup = scheme.initialize()?;
    let mut state = startup.state;
    let exact = problem.exact.as_ref().filter(|_| options.track_errors);

    let mut errors = Vec::new();
    let mut record = |n: usize, u: &[T], p: &[T], errors: &mut Vec<LevelError<T>>| {
        if let Some(obs) = observer.as_mut() {
            obs(n, u, p);
        }
        if let Some(ex) = exact {
            let t = cfg.time(n);
            let uf = |x: T, y: T| (ex.u)(x, y, t);
            let pf = |x: T, y: T| (ex.p)(x, y, t);
            errors.push(LevelError {
                n,
                t,
                err_u: velocity_error_l2(&problem.mesh, &ops.dofs, &problem.material, u, &uf),
                err_p: pressure_error_l2(&problem.mesh, &problem.material, p, &pf),
            });
        }
    };
    record(0, &state.u_prev, &state.p_prev, &mut errors);
    record(1, &state.u_curr, &state.p_curr, &mut errors);

    let mut energies = vec![scheme.energy(&state)];
    let mut max_constraint = ops.constraint_residual(&state.u_curr, &state.p_curr);
    let mut status = RunStatus::Completed;
    while state.n < cfg.num_steps {
        match scheme.step(&mut state)? {
            StepStatus::Advanced => {}
            StepStatus::BlowUp => {
                info!("velocity exceeded the blow-up threshold at level {}", state.n);
                status = RunStatus::BlowUp { level: state.n };
                break;
            }
        }
        energies.push(scheme.energy(&state));
        max_constraint = max_constraint.max(ops.constraint_residual(&state.u_curr, &state.p_curr));
        record(state.n, &state.u_curr, &state.p_curr, &mut errors);
    }
    Ok(RunOutput {
        energies,
        final_state: state,
        status,
        errors,
        compatibility_residual: startup.compatibility_residual,
        max_constraint_residual: max_constraint.max(startup.compatibility_residual),
        config: *cfg,
    })
}
