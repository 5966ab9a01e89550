//! Newton time stepping for surface diffusion, curvature flow and
//! area-conserved curvature flow, and the simulation loop around it.

use serde::{Deserialize, Serialize};

use crate::anisotropy::{check_stability_condition, Anisotropy, StabilityReport};
use crate::assembly::{pack_unknowns, unpack_unknowns, ResidualSystem};
use crate::diagnostics::DiagnosticsRecord;
use crate::error::{Error, Result};
use crate::geometry::{mass_lumped_inner_scalar, polygon_area, ClosedCurve};
use crate::stabilization::StabilizerTable;

pub use crate::assembly::FlowKind;

/// Grid used when checking the energy-stability condition for a run.
pub const CONDITION_GRID: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NewtonSettings {
    /// Bound on the max-norm of the Newton increment.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Bound on the max-norm of the residual at the accepted iterate.
    pub residual_tolerance: f64,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        NewtonSettings {
            tolerance: 1e-12,
            max_iterations: 20,
            residual_tolerance: 1e-10,
        }
    }
}

impl NewtonSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0 && self.residual_tolerance > 0.0) || self.max_iterations == 0 {
            return Err(Error::InvalidInput(format!("invalid Newton settings {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub new_curve: ClosedCurve,
    pub mu: Vec<f64>,
    /// Newton updates that changed the iterate by more than the tolerance;
    /// the final solve that only confirms convergence is not counted.
    /// Always 1 for the linear semi-implicit system.
    pub newton_iterations: usize,
    /// Linear solves actually performed.
    pub linear_solves: usize,
    /// `λ^{m+1/2}` for the area-conserved flow, else 0.
    pub lambda: f64,
    pub residual_norm: f64,
}

/// Everything that stays fixed during a run.
#[derive(Debug, Clone)]
pub struct FlowProblem {
    pub flow: FlowKind,
    pub anisotropy: Anisotropy,
    pub ktable: StabilizerTable,
    pub tau: f64,
    pub newton: NewtonSettings,
    /// `false` freezes the half-step normal to the old normal.
    pub implicit: bool,
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Per-step data handed to run observers.
#[derive(Debug)]
pub struct StepEvent<'a> {
    /// 1-based index of the step just taken.
    pub step: usize,
    pub t: f64,
    pub old: &'a ClosedCurve,
    pub result: &'a StepResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: usize,
    pub t: f64,
    pub curve: ClosedCurve,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub final_curve: ClosedCurve,
    pub final_mu: Vec<f64>,
    /// Record 0 is the initial curve, record m follows step m.
    pub records: Vec<DiagnosticsRecord>,
    pub snapshots: Vec<Snapshot>,
}

impl RunOutput {
    pub fn max_abs_rel_area_loss(&self) -> f64 {
        self.records.iter().fold(0.0, |m, r| m.max(r.rel_area_loss.abs()))
    }

    /// `W^{m+1} <= W^m (1 + rel_tol)` for every step.
    pub fn energy_monotone(&self, rel_tol: f64) -> bool {
        self.records
            .windows(2)
            .all(|w| w[1].energy <= w[0].energy * (1.0 + rel_tol))
    }
}

/// Number of steps needed to reach `t_end`.
pub fn step_count(tau: f64, t_end: f64) -> usize {
    (t_end / tau - 1e-9).ceil().max(0.0) as usize
}

impl FlowProblem {
    pub fn check_condition(&self) -> StabilityReport {
        check_stability_condition(&self.anisotropy, CONDITION_GRID)
    }

    /// One time step from `curve`; `mu_guess` seeds Newton (zeros if `None`).
    pub fn step(&self, curve: &ClosedCurve, mu_guess: Option<&[f64]>) -> Result<StepResult> {
        self.newton.validate()?;
        let n = curve.len();
        let sys = ResidualSystem::new(
            self.flow,
            curve,
            &self.anisotropy,
            &self.ktable,
            self.tau,
            self.implicit,
        )?;
        let mu0 = match mu_guess {
            Some(mu) => {
                curve.expect_len(mu.len())?;
                mu.to_vec()
            }
            None => vec![0.0; n],
        };
        let mut u = pack_unknowns(curve.nodes(), &mu0);
        let mut r = sys.residual(&u)?;
        let mut increment = f64::INFINITY;
        let mut residual = max_abs(&r);
        let mut counted = 0;
        for solves in 1..=self.newton.max_iterations {
            let du = sys.jacobian(&u)?.solve(&r)?;
            for (ui, di) in u.iter_mut().zip(&du) {
                *ui -= di;
            }
            r = sys.residual(&u)?;
            increment = max_abs(&du);
            residual = max_abs(&r);
            if !(increment.is_finite() && residual.is_finite()) {
                return Err(Error::NonFinite(format!("Newton iterate at solve {solves}")));
            }
            let converged = increment <= self.newton.tolerance && residual <= self.newton.residual_tolerance;
            if increment > self.newton.tolerance || counted == 0 {
                counted += 1;
            }
            // the semi-implicit system is linear: one solve is exact
            if converged || (!self.implicit && residual <= self.newton.residual_tolerance) {
                let (nodes, mu) = unpack_unknowns(&u);
                let lambda = match self.flow {
                    FlowKind::AreaConservedCurvatureFlow => sys.lambda(&mu),
                    _ => 0.0,
                };
                return Ok(StepResult {
                    new_curve: ClosedCurve::new(nodes)?,
                    mu,
                    newton_iterations: counted,
                    linear_solves: solves,
                    lambda,
                    residual_norm: residual,
                });
            }
        }
        Err(Error::NewtonDiverged {
            iterations: self.newton.max_iterations,
            increment,
            residual,
        })
    }

    pub fn run(&self, initial: &ClosedCurve, t_end: f64, snapshot_every: usize) -> Result<RunOutput> {
        self.run_observed(initial, t_end, snapshot_every, |_| Ok(()))
    }

    /// [`FlowProblem::run`] with a callback after every step.
    pub fn run_observed(
        &self,
        initial: &ClosedCurve,
        t_end: f64,
        snapshot_every: usize,
        mut observer: impl FnMut(&StepEvent) -> Result<()>,
    ) -> Result<RunOutput> {
        if !(t_end > 0.0 && t_end.is_finite()) {
            return Err(Error::InvalidInput(format!("end time must be positive, got {t_end}")));
        }
        let steps = step_count(self.tau, t_end);
        let every = snapshot_every.max(1);
        let first = DiagnosticsRecord::evaluate(0.0, initial, &self.anisotropy, None, 0)?;
        let reference = Some((first.area, first.energy));
        let mut records = Vec::with_capacity(steps + 1);
        records.push(first);
        let mut snapshots = vec![Snapshot {
            step: 0,
            t: 0.0,
            curve: initial.clone(),
        }];
        let mut curve = initial.clone();
        let mut mu: Option<Vec<f64>> = None;
        for m in 1..=steps {
            let t = m as f64 * self.tau;
            let result = self.step(&curve, mu.as_deref())?;
            observer(&StepEvent {
                step: m,
                t,
                old: &curve,
                result: &result,
            })?;
            records.push(DiagnosticsRecord::evaluate(
                t,
                &result.new_curve,
                &self.anisotropy,
                reference,
                result.newton_iterations,
            )?);
            if m % every == 0 || m == steps {
                snapshots.push(Snapshot {
                    step: m,
                    t,
                    curve: result.new_curve.clone(),
                });
            }
            curve = result.new_curve;
            mu = Some(result.mu);
        }
        Ok(RunOutput {
            final_curve: curve,
            final_mu: mu.unwrap_or_else(|| vec![0.0; initial.len()]),
            records,
            snapshots,
        })
    }
}

/// Single step with a zero initial μ guess.
pub fn step(
    flow: FlowKind,
    curve: &ClosedCurve,
    a: &Anisotropy,
    ktable: &StabilizerTable,
    tau: f64,
    settings: NewtonSettings,
    implicit: bool,
) -> Result<StepResult> {
    FlowProblem {
        flow,
        anisotropy: a.clone(),
        ktable: ktable.clone(),
        tau,
        newton: settings,
        implicit,
    }
    .step(curve, None)
}

/// `λ = (μ, 1)^h / (1, 1)^h` on `curve`.
pub fn lambda_half_step(mu: &[f64], curve: &ClosedCurve) -> Result<f64> {
    let ones = vec![1.0; curve.len()];
    Ok(mass_lumped_inner_scalar(mu, &ones, curve)? / mass_lumped_inner_scalar(&ones, &ones, curve)?)
}

/// `(A^{m+1} - A^m)/τ + (μ^{m+1}, 1)^h` on the old curve.
pub fn area_decay_defect(old: &ClosedCurve, result: &StepResult, tau: f64) -> Result<f64> {
    let ones = vec![1.0; old.len()];
    Ok((polygon_area(&result.new_curve) - polygon_area(old)) / tau + mass_lumped_inner_scalar(&result.mu, &ones, old)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::discrete_energy;
    use crate::geometry::{circle, ellipse, Vec2};
    use crate::stabilization::build_stabilizer_table;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};

    fn problem(flow: FlowKind, a: Anisotropy, tau: f64, implicit: bool) -> FlowProblem {
        let ktable = build_stabilizer_table(&a, 20, 512, 1.0).unwrap();
        FlowProblem {
            flow,
            anisotropy: a,
            ktable,
            tau,
            newton: NewtonSettings::default(),
            implicit,
        }
    }

    fn three_fold() -> Anisotropy {
        Anisotropy::kfold(1.0 / 3.0, 3, 0.0).unwrap()
    }

    #[test]
    fn lambda_examples() {
        let c = ellipse(2.0, 1.0, 12).unwrap();
        assert_abs_diff_eq!(lambda_half_step(&vec![2.5; 12], &c).unwrap(), 2.5, epsilon = 1e-14);

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        let hex = ClosedCurve::new(
            (0..6)
                .map(|j| {
                    let phi = -std::f64::consts::PI * j as f64 / 3.0;
                    let r = rng.gen_range(0.5..1.5);
                    Vec2::new(r * phi.cos(), r * phi.sin())
                })
                .collect(),
        )
        .unwrap();
        let mu: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let l = hex.edge_lengths();
        let mut num = 0.0;
        let mut den = 0.0;
        for j in 0..6 {
            let prev = (j + 5) % 6;
            num += 0.5 * l[j] * (mu[prev] + mu[j]);
            den += l[j];
        }
        assert_abs_diff_eq!(lambda_half_step(&mu, &hex).unwrap(), num / den, epsilon = 1e-14);

        let centred: Vec<f64> = mu.iter().map(|m| m - num / den).collect();
        assert_abs_diff_eq!(lambda_half_step(&centred, &hex).unwrap(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn single_step_run_has_two_snapshots() {
        let p = problem(FlowKind::CurvatureFlow, Anisotropy::Isotropic, 1e-3, true);
        let out = p.run(&circle(1.0, 32).unwrap(), 1e-3, 100).unwrap();
        assert_eq!(out.records.len(), 2);
        assert_eq!(out.snapshots.len(), 2);
        assert_eq!(out.snapshots[1].step, 1);
    }

    #[test]
    fn shrinking_circle() {
        let p = problem(FlowKind::CurvatureFlow, Anisotropy::Isotropic, 1e-3, true);
        let out = p.run(&circle(1.0, 128).unwrap(), 0.2, 1000).unwrap();
        let r_exact = (1.0f64 - 2.0 * 0.2).sqrt();
        let centre = out.final_curve.centroid();
        for node in out.final_curve.nodes() {
            assert!(((*node - centre).norm() - r_exact).abs() < 5e-3);
        }
    }

    #[test]
    fn surface_diffusion_conserves_area_and_dissipates_energy() {
        for a in [three_fold(), Anisotropy::CaseI] {
            let p = problem(FlowKind::SurfaceDiffusion, a, 1.0 / 1024.0, true);
            let out = p.run(&ellipse(2.0, 0.5, 32).unwrap(), 0.05, 10).unwrap();
            assert!(
                out.max_abs_rel_area_loss() <= 1e-12,
                "{:e}",
                out.max_abs_rel_area_loss()
            );
            assert!(out.energy_monotone(1e-12));
        }
    }

    #[test]
    fn area_conserved_flow_conserves_area() {
        let p = problem(FlowKind::AreaConservedCurvatureFlow, three_fold(), 1.0 / 1024.0, true);
        let out = p.run(&ellipse(2.0, 0.5, 32).unwrap(), 0.05, 10).unwrap();
        assert!(out.max_abs_rel_area_loss() <= 1e-12);
        assert!(out.energy_monotone(1e-12));
    }

    #[test]
    fn curvature_flow_area_decay_identity() {
        let p = problem(FlowKind::CurvatureFlow, three_fold(), 1.0 / 1024.0, true);
        let mut worst: f64 = 0.0;
        let out = p
            .run_observed(&ellipse(2.0, 0.5, 32).unwrap(), 0.05, 10, |ev| {
                let scale = 1f64.max(polygon_area(ev.old) / p.tau);
                worst = worst.max(area_decay_defect(ev.old, ev.result, p.tau)?.abs() / scale);
                Ok(())
            })
            .unwrap();
        assert!(worst <= 1e-9, "{worst:e}");
        assert!(out.records.windows(2).all(|w| w[1].area < w[0].area));
        assert!(out.energy_monotone(1e-12));
    }

    #[test]
    fn semi_implicit_dissipates_energy_in_one_solve() {
        let p = problem(FlowKind::SurfaceDiffusion, three_fold(), 1.0 / 1024.0, false);
        let c = ellipse(2.0, 0.5, 32).unwrap();
        let r = p.step(&c, None).unwrap();
        assert_eq!((r.newton_iterations, r.linear_solves), (1, 1));
        let out = p.run(&c, 0.05, 10).unwrap();
        assert!(out.energy_monotone(1e-12));
        assert!(out.records.iter().skip(1).all(|r| r.newton_iterations == 1));
    }

    #[test]
    fn trajectory_translates_with_initial_curve() {
        let p = problem(FlowKind::SurfaceDiffusion, three_fold(), 1.0 / 512.0, true);
        let c = ellipse(2.0, 0.5, 24).unwrap();
        let shift = Vec2::new(1.5, -0.75);
        let a = p.run(&c, 0.02, 100).unwrap();
        let b = p.run(&c.translated(shift), 0.02, 100).unwrap();
        for (x, y) in a.final_curve.nodes().iter().zip(b.final_curve.nodes()) {
            assert!((*x + shift - *y).norm() < 1e-10);
        }
    }

    #[test]
    fn large_steps_remain_energy_stable() {
        let c = ellipse(2.0, 0.5, 32).unwrap();
        let h = 1.0 / 32.0;
        let p = problem(FlowKind::SurfaceDiffusion, three_fold(), 10.0 * h * h, true);
        let out = p.run(&c, 0.2, 100).unwrap();
        assert!(out.energy_monotone(1e-12));
        let w0 = discrete_energy(&c, &p.anisotropy).unwrap();
        assert!(out.records.last().unwrap().energy < w0);
    }

    #[test]
    fn newton_reports_divergence() {
        let mut p = problem(FlowKind::SurfaceDiffusion, three_fold(), 1.0 / 256.0, true);
        p.newton.max_iterations = 1;
        let r = p.step(&ellipse(2.0, 0.5, 32).unwrap(), None);
        assert!(matches!(r, Err(Error::NewtonDiverged { iterations: 1, .. })));
    }
}
