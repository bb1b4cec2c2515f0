//! Reduced-space conjugate gradients for the tracking-type control problem
//!
//! ```text
//!   min J = ½‖φ − φ_d‖² + ½‖d − d_d‖² + ½α_l‖l − l_d‖²   over l ∈ V_τh
//! ```
//!
//! subject to the discrete state equation. The reduced functional is
//! quadratic, so CG on H l = −∇j(0) in the weighted inner product
//! ⟨u, v⟩_σ = Σ_m τ_m u_mᵀ M_V v_m finds the discrete optimum. The gradient
//! is α_l(l − P l_d) + z with z the adjoint of the tracking residuals.

use std::sync::Arc;

use crate::adjoint::AdjointSolution;
use crate::forward::{ContractionRecord, Sampling, SpaceTimeData, SpaceTimeSolver, StateSolution};
use crate::harness::spacetime_l2_error;
use crate::mesh::SpaceKind;
use crate::par::axpy;
use crate::quadrature::QuadratureRule;
use crate::time::{SpaceTimeField, TimeFunction};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub cg_rel_tol: f64,
    pub max_cg_iter: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            cg_rel_tol: 1e-10,
            max_cg_iter: 500,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cg_rel_tol > 0.0) || self.max_cg_iter == 0 {
            return Err(Error::InvalidArgument(format!(
                "optimizer needs cg_rel_tol > 0 and max_cg_iter > 0, got {} and {}",
                self.cg_rel_tol, self.max_cg_iter
            )));
        }
        Ok(())
    }
}

/// Data of the control problem. Targets may be functions or discrete fields.
#[derive(Debug, Clone)]
pub struct ControlData {
    pub alpha_l: f64,
    pub desired_phi: SpaceTimeData,
    pub desired_d: SpaceTimeData,
    /// l_d; absent means zero.
    pub control_shift: Option<SpaceTimeData>,
    pub d0: TimeFunction,
}

/// A control problem bound to a discretization, with all sampled data cached.
pub struct ControlProblem {
    solver: Arc<SpaceTimeSolver>,
    data: ControlData,
    quadrature: QuadratureRule,
    phi_target: Vec<Vec<f64>>,
    d_target: Vec<Vec<f64>>,
    shift: Vec<Vec<f64>>,
    d_init: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcpHistory {
    /// J(l_k) for k = 0..=iterations.
    pub objective: Vec<f64>,
    /// ‖r_k‖_σ of the CG recursion, k = 0..=iterations.
    pub residual_norms: Vec<f64>,
    pub initial_gradient_norm: f64,
    /// ‖α_l(l − P l_d) + z‖_σ recomputed at the returned control.
    pub r_vd: f64,
    pub iterations: usize,
    /// Largest (observed ratio − bound) over every fixed-point step taken.
    pub contraction_excess: f64,
    /// Smallest forward stability slack at the optimum.
    pub min_stability_slack: f64,
}

#[derive(Debug, Clone)]
pub struct OcpSolution {
    pub control: SpaceTimeField,
    pub state: StateSolution,
    pub adjoint: AdjointSolution,
    pub history: OcpHistory,
}

impl ControlProblem {
    pub fn new(solver: Arc<SpaceTimeSolver>, data: ControlData) -> Result<Self> {
        if !(data.alpha_l > 0.0) || !data.alpha_l.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "alpha_l must be positive, got {}",
                data.alpha_l
            )));
        }
        let phi_target = Self::targets(&solver, &data.desired_phi, SpaceKind::FreeP1)?;
        let d_target = Self::targets(&solver, &data.desired_d, SpaceKind::FreeP1)?;
        let shift = match &data.control_shift {
            None => Self::targets(&solver, &SpaceTimeData::Zero, SpaceKind::DirichletP1)?,
            Some(s) => Self::targets(&solver, s, SpaceKind::DirichletP1)?,
        };
        let d_init = solver.initial_value(&data.d0)?;
        Ok(ControlProblem {
            solver,
            data,
            quadrature: QuadratureRule::default(),
            phi_target,
            d_target,
            shift,
            d_init,
        })
    }

    fn targets(
        solver: &SpaceTimeSolver,
        data: &SpaceTimeData,
        kind: SpaceKind,
    ) -> Result<Vec<Vec<f64>>> {
        let ctx = solver.context();
        let m_count = solver.grid().len();
        let dofs = ctx.space(kind).dof_count();
        match data {
            SpaceTimeData::Zero => Ok(vec![vec![0.0; dofs]; m_count]),
            SpaceTimeData::Function(f) => solver.sampled_field(f, kind),
            SpaceTimeData::Field(field) => {
                if &field.grid != solver.grid() {
                    return Err(Error::GridMismatch);
                }
                let own = ctx.space(field.kind).dof_count();
                if field.dofs() != own {
                    return Err(Error::DimensionMismatch {
                        expected: own,
                        found: field.dofs(),
                    });
                }
                field
                    .coeffs
                    .iter()
                    .map(|c| match (field.kind, kind) {
                        (a, b) if a == b => Ok(c.clone()),
                        (SpaceKind::DirichletP1, SpaceKind::FreeP1) => Ok(ctx.embed(c)),
                        _ => ctx.mass_solve(SpaceKind::DirichletP1, &ctx.mass_vx.mul_vec(c)),
                    })
                    .collect()
            }
        }
    }

    pub fn solver(&self) -> &SpaceTimeSolver {
        &self.solver
    }

    pub fn data(&self) -> &ControlData {
        &self.data
    }

    /// P l_d on V_h per interval.
    pub fn projected_shift(&self) -> SpaceTimeField {
        SpaceTimeField::from_coeffs(
            self.solver.grid(),
            SpaceKind::DirichletP1,
            self.shift.clone(),
        )
        .expect("cached shift matches the grid")
    }

    pub fn zero_control(&self) -> SpaceTimeField {
        SpaceTimeField::zeros(
            self.solver.grid(),
            SpaceKind::DirichletP1,
            self.solver.context().v_dofs(),
        )
    }

    /// ⟨u, v⟩_σ
    pub fn inner(&self, u: &SpaceTimeField, v: &SpaceTimeField) -> f64 {
        let ctx = self.solver.context();
        (1..=u.intervals())
            .map(|m| u.grid.tau(m) * ctx.mass_v.bilinear(u.on(m), v.on(m)))
            .sum()
    }

    pub fn norm(&self, u: &SpaceTimeField) -> f64 {
        self.inner(u, u).max(0.0).sqrt()
    }

    fn check_control(&self, l: &SpaceTimeField) -> Result<()> {
        if l.kind != SpaceKind::DirichletP1 {
            return Err(Error::SpaceMismatch);
        }
        if &l.grid != self.solver.grid() {
            return Err(Error::GridMismatch);
        }
        let v = self.solver.context().v_dofs();
        if l.dofs() != v {
            return Err(Error::DimensionMismatch {
                expected: v,
                found: l.dofs(),
            });
        }
        Ok(())
    }

    fn control_loads(&self, l: &SpaceTimeField) -> Vec<Vec<f64>> {
        l.coeffs
            .iter()
            .map(|c| self.solver.context().mass_v.mul_vec(c))
            .collect()
    }

    pub fn state(&self, l: &SpaceTimeField) -> Result<StateSolution> {
        self.check_control(l)?;
        self.solver
            .solve_state_loads(self.control_loads(l), self.d_init.clone(), Vec::new())
    }

    /// ½ squared distance of a state component to its target.
    fn tracking(&self, u: &SpaceTimeField, target: &SpaceTimeData, sampled: &[Vec<f64>]) -> f64 {
        let ctx = self.solver.context();
        let mass = ctx.mass(u.kind);
        match (self.solver.settings().sampling, target) {
            (Sampling::IntervalAverage, SpaceTimeData::Function(f)) => {
                0.5 * spacetime_l2_error(ctx, u, f, &self.quadrature).powi(2)
            }
            _ => {
                let restrict = |v: &[f64]| -> Vec<f64> {
                    if u.kind == SpaceKind::DirichletP1 && v.len() != u.dofs() {
                        ctx.restrict(v)
                    } else {
                        v.to_vec()
                    }
                };
                0.5 * (1..=u.intervals())
                    .map(|m| {
                        let t = restrict(&sampled[m - 1]);
                        let diff: Vec<f64> = u.on(m).iter().zip(&t).map(|(a, b)| a - b).collect();
                        u.grid.tau(m) * mass.bilinear(&diff, &diff)
                    })
                    .sum::<f64>()
            }
        }
    }

    fn objective_of(&self, l: &SpaceTimeField, state: &StateSolution) -> f64 {
        let shift = self
            .data
            .control_shift
            .clone()
            .unwrap_or(SpaceTimeData::Zero);
        self.tracking(
            &state.phi_nodal(self.solver.context()),
            &self.data.desired_phi,
            &self.phi_target,
        ) + self.tracking(&state.d, &self.data.desired_d, &self.d_target)
            + self.data.alpha_l * self.tracking(l, &shift, &self.shift)
    }

    /// J(S(l), l).
    pub fn objective(&self, l: &SpaceTimeField) -> Result<f64> {
        let state = self.state(l)?;
        Ok(self.objective_of(l, &state))
    }

    fn adjoint_of(&self, state: &StateSolution) -> Result<AdjointSolution> {
        let ctx = self.solver.context();
        let grid = self.solver.grid();
        let g1: Vec<Vec<f64>> = (1..=grid.len())
            .map(|m| {
                let mut load = ctx.mass_v.mul_vec(state.phi.on(m));
                axpy(
                    -1.0,
                    &ctx.mass_vx.mul_vec(&self.phi_target[m - 1]),
                    &mut load,
                );
                load
            })
            .collect();
        let g2: Vec<Vec<f64>> = (1..=grid.len())
            .map(|m| {
                let tau = grid.tau(m);
                state
                    .d
                    .on(m)
                    .iter()
                    .zip(&self.d_target[m - 1])
                    .map(|(a, b)| tau * (a - b))
                    .collect()
            })
            .collect();
        self.solver
            .solve_adjoint_loads(g1, g2, vec![0.0; ctx.x_dofs()])
    }

    fn gradient_from(&self, l: &SpaceTimeField, adj: &AdjointSolution) -> SpaceTimeField {
        let mut g = l.clone();
        for (m, c) in g.coeffs.iter_mut().enumerate() {
            for ((gi, si), zi) in c.iter_mut().zip(&self.shift[m]).zip(&adj.z.coeffs[m]) {
                *gi = self.data.alpha_l * (*gi - si) + zi;
            }
        }
        g.initial_trace = None;
        g
    }

    /// Riesz representative of j′(l) in ⟨·,·⟩_σ.
    pub fn reduced_gradient(&self, l: &SpaceTimeField) -> Result<SpaceTimeField> {
        let state = self.state(l)?;
        let adj = self.adjoint_of(&state)?;
        Ok(self.gradient_from(l, &adj))
    }

    fn hessian_with_records(
        &self,
        dl: &SpaceTimeField,
    ) -> Result<(SpaceTimeField, Vec<ContractionRecord>)> {
        self.check_control(dl)?;
        let ctx = self.solver.context();
        let grid = self.solver.grid();
        let st = self.solver.solve_state_loads(
            self.control_loads(dl),
            vec![0.0; ctx.x_dofs()],
            Vec::new(),
        )?;
        let g1: Vec<Vec<f64>> = st
            .phi
            .coeffs
            .iter()
            .map(|c| ctx.mass_v.mul_vec(c))
            .collect();
        let g2: Vec<Vec<f64>> = (1..=grid.len())
            .map(|m| st.d.on(m).iter().map(|v| grid.tau(m) * v).collect())
            .collect();
        let adj = self
            .solver
            .solve_adjoint_loads(g1, g2, vec![0.0; ctx.x_dofs()])?;
        let mut h = dl.scaled(self.data.alpha_l);
        for (hm, zm) in h.coeffs.iter_mut().zip(&adj.z.coeffs) {
            axpy(1.0, zm, hm);
        }
        let mut records = st.contraction;
        records.extend(adj.contraction);
        Ok((h, records))
    }

    /// H δl = α_l δl + z(δφ, δd).
    pub fn hessian_apply(&self, dl: &SpaceTimeField) -> Result<SpaceTimeField> {
        Ok(self.hessian_with_records(dl)?.0)
    }

    /// CG from l⁰ = 0 until ‖r‖_σ ≤ cg_rel_tol·‖∇j(0)‖_σ.
    pub fn solve(&self, config: &OptimizerConfig) -> Result<OcpSolution> {
        config.validate()?;
        let mut excess = f64::NEG_INFINITY;
        let mut track = |recs: &[ContractionRecord]| {
            for r in recs {
                excess = excess.max(r.max_ratio - r.bound);
            }
        };
        let mut l = self.zero_control();
        let state0 = self.state(&l)?;
        let j0 = self.objective_of(&l, &state0);
        let adj0 = self.adjoint_of(&state0)?;
        track(&state0.contraction);
        track(&adj0.contraction);
        let b = self.gradient_from(&l, &adj0).scaled(-1.0);
        let mut r = b.clone();
        let mut p = r.clone();
        let mut rr = self.inner(&r, &r);
        let r0 = rr.sqrt();
        let mut objective = vec![j0];
        let mut residual_norms = vec![r0];
        let mut iterations = 0;
        while rr.sqrt() > config.cg_rel_tol * r0 {
            if iterations == config.max_cg_iter {
                return Err(Error::OptimizerMaxIter {
                    iters: iterations,
                    relative_gradient: rr.sqrt() / r0,
                    best: Box::new(l),
                });
            }
            let (hp, recs) = self.hessian_with_records(&p)?;
            track(&recs);
            let curvature = self.inner(&p, &hp);
            if !(curvature > 0.0) {
                return Err(Error::NonConvergence {
                    iters: iterations,
                    residual: rr.sqrt(),
                });
            }
            let step = rr / curvature;
            l = l.add_scaled(step, &p)?;
            r = r.add_scaled(-step, &hp)?;
            let rr_new = self.inner(&r, &r);
            p = r.add_scaled(rr_new / rr, &p)?;
            rr = rr_new;
            iterations += 1;
            let br = b.add_scaled(1.0, &r)?;
            objective.push(j0 - 0.5 * self.inner(&br, &l));
            residual_norms.push(rr.sqrt());
        }
        let state = self.state(&l)?;
        let adjoint = self.adjoint_of(&state)?;
        track(&state.contraction);
        track(&adjoint.contraction);
        let r_vd = self.norm(&self.gradient_from(&l, &adjoint));
        let min_stability_slack = self.solver.stability_report(&state)?.min_slack();
        if let Some(last) = objective.last_mut() {
            *last = self.objective_of(&l, &state);
        }
        Ok(OcpSolution {
            control: l,
            state,
            adjoint,
            history: OcpHistory {
                objective,
                residual_norms,
                initial_gradient_norm: r0,
                r_vd,
                iterations,
                contraction_excess: if excess.is_finite() { excess } else { 0.0 },
                min_stability_slack,
            },
        })
    }
}

impl StateSolution {
    /// φ_τh as an X_h field (extended by zero to ∂Ω).
    pub fn phi_nodal(&self, ctx: &crate::fem::FeContext) -> SpaceTimeField {
        SpaceTimeField {
            grid: self.phi.grid.clone(),
            kind: SpaceKind::FreeP1,
            coeffs: self.phi.coeffs.iter().map(|c| ctx.embed(c)).collect(),
            initial_trace: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::FeContext;
    use crate::forward::{ModelParams, SolverSettings};
    use crate::time::TimeGrid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn problem(
        sampling: Sampling,
        data: impl FnOnce(&SpaceTimeSolver) -> ControlData,
    ) -> ControlProblem {
        let ctx = Arc::new(FeContext::new(4).unwrap());
        let settings = SolverSettings {
            sampling,
            ..SolverSettings::default()
        };
        let solver = Arc::new(
            SpaceTimeSolver::new(
                ctx,
                ModelParams::default(),
                TimeGrid::uniform(1.0, 4).unwrap(),
                settings,
            )
            .unwrap(),
        );
        let d = data(&solver);
        ControlProblem::new(solver, d).unwrap()
    }

    fn random_data(_: &SpaceTimeSolver) -> ControlData {
        ControlData {
            alpha_l: 0.5,
            desired_phi: SpaceTimeData::Function(TimeFunction::new(|t, x, y| {
                (1.0 + t) * x * (1.0 - y)
            })),
            desired_d: SpaceTimeData::Function(TimeFunction::new(|t, x, y| (t * x + y).sin())),
            control_shift: Some(SpaceTimeData::Function(TimeFunction::new(|t, x, y| {
                t * x * y * (1.0 - x)
            }))),
            d0: TimeFunction::stationary(|x, y| x + y),
        }
    }

    fn random_control(p: &ControlProblem, rng: &mut ChaCha8Rng) -> SpaceTimeField {
        let mut l = p.zero_control();
        l.coeffs
            .iter_mut()
            .flatten()
            .for_each(|v| *v = rng.gen_range(-1.0..1.0));
        l
    }

    #[test]
    fn gradient_matches_central_differences() {
        for sampling in [Sampling::EndpointNodal, Sampling::IntervalAverage] {
            let p = problem(sampling, random_data);
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            for _ in 0..3 {
                let l = random_control(&p, &mut rng);
                let dl = random_control(&p, &mut rng);
                let g = p.reduced_gradient(&l).unwrap();
                let eps = 1e-4;
                let jp = p.objective(&l.add_scaled(eps, &dl).unwrap()).unwrap();
                let jm = p.objective(&l.add_scaled(-eps, &dl).unwrap()).unwrap();
                let fd = (jp - jm) / (2.0 * eps);
                let j = p.objective(&l).unwrap();
                assert!((p.inner(&g, &dl) - fd).abs() <= 1e-6 * (1.0 + j.abs()));
            }
        }
    }

    #[test]
    fn hessian_is_symmetric_and_coercive() {
        let p = problem(Sampling::EndpointNodal, random_data);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_control(&p, &mut rng);
        let b = random_control(&p, &mut rng);
        let ha = p.hessian_apply(&a).unwrap();
        let hb = p.hessian_apply(&b).unwrap();
        assert!((p.inner(&ha, &b) - p.inner(&a, &hb)).abs() < 1e-9);
        assert!(p.inner(&ha, &a) >= 0.5 * p.inner(&a, &a));
        let h0 = p.hessian_apply(&p.zero_control()).unwrap();
        assert!(h0.coeffs.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn trivial_problem_has_zero_solution() {
        let p = problem(Sampling::IntervalAverage, |_| ControlData {
            alpha_l: 1.0,
            desired_phi: SpaceTimeData::Zero,
            desired_d: SpaceTimeData::Zero,
            control_shift: None,
            d0: TimeFunction::zero(),
        });
        let sol = p.solve(&OptimizerConfig::default()).unwrap();
        assert!(sol.control.coeffs.iter().flatten().all(|&v| v == 0.0));
        assert_eq!(sol.history.objective, vec![0.0]);
        assert_eq!(sol.history.iterations, 0);
    }

    #[test]
    fn gradient_at_reachable_target_is_shift_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let base = problem(Sampling::EndpointNodal, random_data);
        let l_star = random_control(&base, &mut rng);
        let st = base.state(&l_star).unwrap();
        let solver = Arc::new(
            SpaceTimeSolver::new(
                base.solver().shared_context(),
                *base.solver().params(),
                base.solver().grid().clone(),
                base.solver().settings().clone(),
            )
            .unwrap(),
        );
        let p = ControlProblem::new(
            solver,
            ControlData {
                desired_phi: SpaceTimeData::Field(st.phi.clone()),
                desired_d: SpaceTimeData::Field(st.d.clone()),
                ..random_data(base.solver())
            },
        )
        .unwrap();
        let g = p.reduced_gradient(&l_star).unwrap();
        let expect = l_star
            .add_scaled(-1.0, &p.projected_shift())
            .unwrap()
            .scaled(0.5);
        let diff = g.add_scaled(-1.0, &expect).unwrap();
        assert!(p.norm(&diff) < 1e-10 * (1.0 + p.norm(&expect)));
    }

    #[test]
    fn optimizer_reaches_stationarity() {
        let p = problem(Sampling::EndpointNodal, random_data);
        let cfg = OptimizerConfig::default();
        let sol = p.solve(&cfg).unwrap();
        let h = &sol.history;
        assert!(h.r_vd <= 10.0 * cfg.cg_rel_tol * h.initial_gradient_norm);
        assert!(h.objective.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        assert!(h.contraction_excess <= 1e-8);
        let j_opt = p.objective(&sol.control).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..3 {
            let dl = random_control(&p, &mut rng);
            let other = p
                .objective(&sol.control.add_scaled(1e-2, &dl).unwrap())
                .unwrap();
            assert!(j_opt <= other);
        }
    }

    #[test]
    fn iteration_cap_returns_best_iterate() {
        let p = problem(Sampling::EndpointNodal, random_data);
        let err = p
            .solve(&OptimizerConfig {
                cg_rel_tol: 1e-300,
                max_cg_iter: 1,
            })
            .unwrap_err();
        assert!(matches!(err, Error::OptimizerMaxIter { iters: 1, .. }));
        assert!(OptimizerConfig {
            cg_rel_tol: 0.0,
            max_cg_iter: 1
        }
        .validate()
        .is_err());
    }
}
