//! Energy, stability and convergence drivers built on [`run_with_operators`].

use crate::error::{Error, Result};
use crate::mixed_spaces::{assemble_operators, MaterialField};
use crate::parallel::map_ordered;
use crate::scalar::Scalar;
use crate::sparse::SolverConfig;
use crate::theta_scheme::{run_with_operators, RunOptions, RunOutput, RunStatus, ThetaConfig};

use super::inverse::{estimate_inverse_constant, StabilityEstimate};
use super::mms::ManufacturedSolution;

/// Relative energy drift tolerated by a run classified as stable.
pub const STABLE_DRIFT: f64 = 1e-8;

/// Largest errors over all levels, `(‖ρ^{1/2}(u − U)‖_{l∞(L²)}, ‖λ^{-1/2}(p − P)‖_{l∞(L²)})`.
pub fn error_linf_l2<T: Scalar>(run: &RunOutput<T>) -> Result<(T, T)> {
    if run.errors.is_empty() {
        return Err(Error::MissingExactSolution);
    }
    Ok(run.errors.iter().fold((T::zero(), T::zero()), |(u, p), e| {
        (u.max(e.err_u), p.max(e.err_p))
    }))
}

/// Quantity the rates are measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateAxis {
    MeshSize,
    TimeStep,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow<T> {
    pub nx: usize,
    pub h: T,
    pub dt: T,
    pub err_u: T,
    pub err_p: T,
    pub rate_u: Option<T>,
    pub rate_p: Option<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable<T> {
    pub axis: RateAxis,
    pub rows: Vec<ConvergenceRow<T>>,
}

fn observed_order<T: Scalar>(e_coarse: T, e_fine: T, s_coarse: T, s_fine: T) -> T {
    (e_coarse / e_fine).ln() / (s_coarse / s_fine).ln()
}

impl<T: Scalar> ConvergenceTable<T> {
    /// Orders the rows from coarse to fine along `axis` and fills in the
    /// pairwise rates `ln(e_c / e_f) / ln(s_c / s_f)`, which is
    /// `log2(e_c / e_f)` under halving.
    pub fn from_rows(axis: RateAxis, mut rows: Vec<ConvergenceRow<T>>) -> Self {
        let key = |r: &ConvergenceRow<T>| match axis {
            RateAxis::MeshSize => r.h,
            RateAxis::TimeStep => r.dt,
        };
        rows.sort_by(|a, b| key(b).partial_cmp(&key(a)).unwrap_or(std::cmp::Ordering::Equal));
        for k in 0..rows.len() {
            if k == 0 {
                rows[k].rate_u = None;
                rows[k].rate_p = None;
                continue;
            }
            let (c, f) = (rows[k - 1], rows[k]);
            let (sc, sf) = (key(&c), key(&f));
            rows[k].rate_u = Some(observed_order(c.err_u, f.err_u, sc, sf));
            rows[k].rate_p = Some(observed_order(c.err_p, f.err_p, sc, sf));
        }
        Self { axis, rows }
    }

    /// Rates of the two finest rows.
    pub fn finest_rates(&self) -> Option<(T, T)> {
        let last = self.rows.last()?;
        Some((last.rate_u?, last.rate_p?))
    }
}

/// Runs the manufactured problem on every `nx × nx` level with
/// `Δt ≤ dt_rule(h)` (rounded so that `N Δt = T`) and tabulates the errors.
pub fn convergence_study<T: Scalar>(
    mms: &ManufacturedSolution<T>,
    theta: T,
    levels: &[usize],
    dt_rule: &(dyn Fn(T) -> T + Sync),
    final_time: T,
    solver: &SolverConfig<T>,
    workers: usize,
) -> Result<ConvergenceTable<T>> {
    mms.verify()?;
    let rows = map_ordered(levels, workers, |&nx| -> Result<ConvergenceRow<T>> {
        let problem = mms.problem_spec(nx, nx)?;
        let ops = problem.assemble()?;
        let cfg = ThetaConfig::with_max_step(theta, final_time, dt_rule(problem.mesh.h))?;
        let options = RunOptions {
            solver: *solver,
            track_errors: true,
        };
        let out = run_with_operators(&problem, &ops, &cfg, &options, None)?;
        let (err_u, err_p) = error_linf_l2(&out)?;
        Ok(ConvergenceRow {
            nx,
            h: problem.mesh.h,
            dt: cfg.dt,
            err_u,
            err_p,
            rate_u: None,
            rate_p: None,
        })
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(ConvergenceTable::from_rows(RateAxis::MeshSize, rows))
}

/// Temporal self-convergence on a fixed `nx × nx` mesh: each run with
/// `T / N` steps is compared, level by level, with a run using
/// `T / reference_steps`, in the `A`- and `C`-weighted norms.
pub fn temporal_study<T: Scalar>(
    mms: &ManufacturedSolution<T>,
    theta: T,
    nx: usize,
    final_time: T,
    step_counts: &[usize],
    reference_steps: usize,
    solver: &SolverConfig<T>,
    workers: usize,
) -> Result<ConvergenceTable<T>> {
    mms.verify()?;
    if let Some(&bad) = step_counts.iter().find(|&&n| n == 0 || !reference_steps.is_multiple_of(n)) {
        return Err(Error::InvalidConfig(format!(
            "reference step count {reference_steps} is not a multiple of {bad}"
        )));
    }
    let problem = mms.problem_spec(nx, nx)?;
    let ops = problem.assemble()?;
    let options = RunOptions {
        solver: *solver,
        track_errors: false,
    };

    // keep only the reference levels some coarse run lands on
    let keep = |level: usize| step_counts.iter().any(|&n| level.is_multiple_of(reference_steps / n));
    let mut reference: Vec<Option<(Vec<T>, Vec<T>)>> = vec![None; reference_steps + 1];
    {
        let cfg = ThetaConfig::with_steps(theta, final_time, reference_steps)?;
        let mut grab = |n: usize, u: &[T], p: &[T]| {
            if keep(n) {
                reference[n] = Some((u.to_vec(), p.to_vec()));
            }
        };
        let out = run_with_operators(&problem, &ops, &cfg, &options, Some(&mut grab))?;
        if !out.completed() {
            return Err(Error::InvalidConfig("reference run blew up".into()));
        }
    }

    let rows = map_ordered(step_counts, workers, |&steps| -> Result<ConvergenceRow<T>> {
        let cfg = ThetaConfig::with_steps(theta, final_time, steps)?;
        let stride = reference_steps / steps;
        let mut err_u = T::zero();
        let mut err_p = T::zero();
        let mut compare = |n: usize, u: &[T], p: &[T]| {
            let (ru, rp) = reference[n * stride].as_ref().expect("reference level retained");
            let du: Vec<T> = u.iter().zip(ru).map(|(&a, &b)| a - b).collect();
            let dp: Vec<T> = p.iter().zip(rp).map(|(&a, &b)| a - b).collect();
            err_u = err_u.max(ops.velocity_norm_sq(&du).sqrt());
            err_p = err_p.max(ops.pressure_norm_sq(&dp).sqrt());
        };
        run_with_operators(&problem, &ops, &cfg, &options, Some(&mut compare))?;
        Ok(ConvergenceRow {
            nx,
            h: problem.mesh.h,
            dt: cfg.dt,
            err_u,
            err_p,
            rate_u: None,
            rate_p: None,
        })
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(ConvergenceTable::from_rows(RateAxis::TimeStep, rows))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepStatus {
    /// Finished with relative energy drift within [`STABLE_DRIFT`].
    Stable,
    BlowUp,
    /// Finished without blowing up but the energy drifted.
    Drifted,
}

impl SweepStatus {
    pub fn label(self) -> &'static str {
        match self {
            SweepStatus::Stable => "Stable",
            SweepStatus::BlowUp => "BlowUp",
            SweepStatus::Drifted => "Drifted",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow<T> {
    pub theta: T,
    pub multiplier: T,
    pub dt: T,
    /// `Δt / Δt_max`, zero when the bound is infinite.
    pub dt_over_dtmax: T,
    pub status: SweepStatus,
    pub final_energy: T,
    pub drift: T,
    pub steps_taken: usize,
}

#[derive(Debug, Clone)]
pub struct StabilitySweep<T> {
    pub estimate: StabilityEstimate<T>,
    pub rows: Vec<SweepRow<T>>,
}

/// Runs `steps` steps for every `(θ, m)`: `Δt = m · Δt_max(θ)` when the
/// bound is finite and `Δt = m · 10h` otherwise.
pub fn stability_sweep<T: Scalar>(
    mms: &ManufacturedSolution<T>,
    thetas: &[T],
    multipliers: &[T],
    nx: usize,
    steps: usize,
    solver: &SolverConfig<T>,
    workers: usize,
) -> Result<StabilitySweep<T>> {
    mms.verify()?;
    let problem = mms.problem_spec(nx, nx)?;
    let ops = problem.assemble()?;
    let unit = MaterialField::uniform(&problem.mesh, T::one(), T::one())?;
    let unit_ops = assemble_operators(&problem.mesh, &problem.bc, &unit)?;
    let c0 = estimate_inverse_constant(&problem.mesh, &unit_ops)?.c0;
    let estimate = StabilityEstimate {
        c0,
        h: problem.mesh.h,
        rho0: problem.material.rho0,
        lambda1: problem.material.lambda1,
    };

    let cases: Vec<(T, T)> = thetas
        .iter()
        .flat_map(|&th| multipliers.iter().map(move |&m| (th, m)))
        .collect();
    let rows = map_ordered(&cases, workers, |&(theta, m)| -> Result<SweepRow<T>> {
        let dt_max = estimate.dt_max(theta);
        let (dt, ratio) = if dt_max.is_finite() {
            (m * dt_max, m)
        } else {
            (m * T::of(10.0) * estimate.h, T::zero())
        };
        let cfg = ThetaConfig::fixed_steps(theta, dt, steps)?;
        let options = RunOptions {
            solver: *solver,
            track_errors: false,
        };
        let out = run_with_operators(&problem, &ops, &cfg, &options, None)?;
        let drift = out.max_relative_drift();
        let status = match out.status {
            RunStatus::BlowUp { .. } => SweepStatus::BlowUp,
            RunStatus::Completed if drift <= T::of(STABLE_DRIFT) => SweepStatus::Stable,
            RunStatus::Completed => SweepStatus::Drifted,
        };
        Ok(SweepRow {
            theta,
            multiplier: m,
            dt,
            dt_over_dtmax: ratio,
            status,
            final_energy: out.energies.last().map_or(T::zero(), |e| e.value),
            drift,
            steps_taken: out.final_state.n,
        })
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(StabilitySweep { estimate, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(h: f64, eu: f64, ep: f64) -> ConvergenceRow<f64> {
        ConvergenceRow {
            nx: 0,
            h,
            dt: h,
            err_u: eu,
            err_p: ep,
            rate_u: None,
            rate_p: None,
        }
    }

    #[test]
    fn rates_from_table() {
        let t = ConvergenceTable::from_rows(
            RateAxis::MeshSize,
            vec![row(0.25, 0.25, 1.0), row(0.5, 0.5, 4.0), row(0.125, 0.125, 0.25)],
        );
        assert_eq!(t.rows[0].h, 0.5);
        assert_eq!(t.rows[0].rate_u, None);
        assert!((t.rows[1].rate_u.unwrap() - 1.0).abs() < 1e-14);
        assert!((t.rows[1].rate_p.unwrap() - 2.0).abs() < 1e-14);
        assert_eq!(t.finest_rates().map(|r| r.0.round()), Some(1.0));
    }

    #[test]
    fn single_row_has_no_rates() {
        let t = ConvergenceTable::from_rows(RateAxis::MeshSize, vec![row(0.1, 1.0, 2.0)]);
        assert_eq!(t.rows.len(), 1);
        assert_eq!(t.rows[0].err_u, 1.0);
        assert!(t.finest_rates().is_none());
    }
}
