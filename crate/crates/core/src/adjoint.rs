//! Backward (adjoint) sweep and the space-time bilinear form.
//!
//! The adjoint (z, p) of the discrete state equation satisfies, for m = M..1
//! with p_{M+1} = p_T,
//!
//! ```text
//!   α(∇z_m, ∇ψ) + β(z_m, ψ) = (β/δ)(p_m, ψ) + (g1_m, ψ)     ∀ψ ∈ V_h
//!   (1 + q_m) p_m = p_{m+1} + τ_m β z_m + τ_m g2_m           nodally in X_h
//! ```
//!
//! which is the same coupled structure as the forward step, run backwards.

use crate::forward::{ContractionRecord, CoupledStep, SpaceTimeData, SpaceTimeSolver};
use crate::mesh::SpaceKind;
use crate::par::dot;
use crate::time::{SpaceTimeField, TimeFunction};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct AdjointSolution {
    /// z_τh on V_h.
    pub z: SpaceTimeField,
    /// p_τh on X_h, with `initial_trace` holding p_T.
    pub p: SpaceTimeField,
    pub contraction: Vec<ContractionRecord>,
}

impl SpaceTimeSolver {
    /// Adjoint solve for continuous or discrete data g1 (tested against V_h),
    /// g2 (tested against X_h) and terminal value p_T.
    pub fn solve_adjoint(
        &self,
        g1: &SpaceTimeData,
        g2: &SpaceTimeData,
        p_t: &TimeFunction,
    ) -> Result<AdjointSolution> {
        let loads = self.source_loads(g1)?;
        let r = self.ode_source(g2)?;
        let pt = self.nodal_value_at(p_t, self.grid().final_time())?;
        self.solve_adjoint_loads(loads, r, pt)
    }

    /// Adjoint sweep from per-interval loads (g1_m, ψ_i) on V_h, the nodal
    /// vectors τ_m·g2_m on X_h (empty if g2 = 0) and p_T on X_h.
    pub fn solve_adjoint_loads(
        &self,
        g1_loads: Vec<Vec<f64>>,
        g2_scaled: Vec<Vec<f64>>,
        p_t: Vec<f64>,
    ) -> Result<AdjointSolution> {
        let ctx = self.context();
        let grid = self.grid();
        let params = *self.params();
        let m_count = grid.len();
        if g1_loads.len() != m_count {
            return Err(Error::DimensionMismatch {
                expected: m_count,
                found: g1_loads.len(),
            });
        }
        if !g2_scaled.is_empty() && g2_scaled.len() != m_count {
            return Err(Error::DimensionMismatch {
                expected: m_count,
                found: g2_scaled.len(),
            });
        }
        if p_t.len() != ctx.x_dofs() {
            return Err(Error::DimensionMismatch {
                expected: ctx.x_dofs(),
                found: p_t.len(),
            });
        }
        if let Some(bad) = g1_loads.iter().find(|g| g.len() != ctx.v_dofs()) {
            return Err(Error::DimensionMismatch {
                expected: ctx.v_dofs(),
                found: bad.len(),
            });
        }
        let mut z: Vec<Vec<f64>> = vec![Vec::new(); m_count];
        let mut p: Vec<Vec<f64>> = vec![Vec::new(); m_count];
        let mut contraction = Vec::new();
        for m in (1..=m_count).rev() {
            let tau = grid.tau(m);
            let outcome = {
                let next = if m == m_count { &p_t } else { &p[m] };
                let guess = if m == m_count {
                    None
                } else {
                    Some(z[m].as_slice())
                };
                self.coupled_step(&CoupledStep {
                    interval: m,
                    tau,
                    source_scale: params.beta / params.delta,
                    update_scale: tau * params.beta,
                    y_prev: next,
                    load: &g1_loads[m - 1],
                    extra: g2_scaled.get(m - 1).map(Vec::as_slice),
                    guess,
                })?
            };
            contraction.extend(outcome.contraction);
            z[m - 1] = outcome.elliptic;
            p[m - 1] = outcome.nodal;
        }
        contraction.reverse();
        let z = SpaceTimeField::from_coeffs(grid, SpaceKind::DirichletP1, z)?;
        let mut p = SpaceTimeField::from_coeffs(grid, SpaceKind::FreeP1, p)?;
        p.initial_trace = Some(p_t);
        Ok(AdjointSolution { z, p, contraction })
    }

    /// Projection (or nodal interpolant, depending on the sampling) of a
    /// function at a fixed time.
    pub fn nodal_value_at(&self, f: &TimeFunction, t: f64) -> Result<Vec<f64>> {
        let ctx = self.context();
        if f.is_zero() {
            return Ok(vec![0.0; ctx.x_dofs()]);
        }
        match self.settings().sampling {
            crate::forward::Sampling::IntervalAverage => {
                ctx.project(SpaceKind::FreeP1, |x, y| f.eval(t, x, y))
            }
            crate::forward::Sampling::EndpointNodal => {
                Ok(ctx.interpolate(SpaceKind::FreeP1, |x, y| f.eval(t, x, y)))
            }
        }
    }

    /// B((φ, d), (ψ, λ)) for φ, ψ on V_h and d, λ on X_h.
    ///
    /// ```text
    /// B = Σ_m τ_m [ α(∇φ,∇ψ) + β(φ − d, ψ) + (β/δ)(d − φ, λ) ]_m
    ///     + Σ_{m≥2} (d_m − d_{m-1}, λ_m) + (d_1, λ_1)
    /// ```
    pub fn bilinear_form(
        &self,
        phi: &SpaceTimeField,
        d: &SpaceTimeField,
        psi: &SpaceTimeField,
        lambda: &SpaceTimeField,
    ) -> Result<f64> {
        let ctx = self.context();
        let params = self.params();
        self.check_pair(phi, d)?;
        self.check_pair(psi, lambda)?;
        let ratio = params.beta / params.delta;
        let mut total = 0.0;
        for m in 1..=self.grid().len() {
            let tau = self.grid().tau(m);
            let (ph, dm, ps, la) = (phi.on(m), d.on(m), psi.on(m), lambda.on(m));
            let k = ctx.stiff_v.bilinear(ps, ph);
            let mvv = ctx.mass_v.bilinear(ps, ph);
            let mvx = ctx.mass_vx.bilinear(ps, dm);
            let mx_d = ctx.mass_x.bilinear(la, dm);
            let mx_phi = ctx.mass_vx.bilinear(ph, la);
            total += tau * (params.alpha * k + params.beta * (mvv - mvx) + ratio * (mx_d - mx_phi));
            let jump: Vec<f64> = if m == 1 {
                dm.to_vec()
            } else {
                dm.iter().zip(d.on(m - 1)).map(|(a, b)| a - b).collect()
            };
            total += ctx.mass_x.bilinear(la, &jump);
        }
        Ok(total)
    }

    /// Σ τ_m ψ_m·load_m + (d_0, λ_1) + Σ (r_m, λ_m): the right-hand side of the
    /// forward problem with averaged loads, initial value and r_m = P_X∫_{I_m} f.
    pub fn forward_functional(
        &self,
        loads: &[Vec<f64>],
        d_init: &[f64],
        ode_source: &[Vec<f64>],
        psi: &SpaceTimeField,
        lambda: &SpaceTimeField,
    ) -> Result<f64> {
        let ctx = self.context();
        self.check_pair(psi, lambda)?;
        let mut total = ctx.mass_x.bilinear(lambda.on(1), d_init);
        for m in 1..=self.grid().len() {
            total += self.grid().tau(m) * dot(psi.on(m), &loads[m - 1]);
            if let Some(r) = ode_source.get(m - 1) {
                total += ctx.mass_x.bilinear(lambda.on(m), r);
            }
        }
        Ok(total)
    }

    /// Σ τ_m ψ_m·g1_m + Σ (τ_m g2_m, λ_m) + (p_T, λ_M): the adjoint right-hand
    /// side tested against (ψ, λ) in the first slot of B.
    pub fn adjoint_functional(
        &self,
        g1_loads: &[Vec<f64>],
        g2_scaled: &[Vec<f64>],
        p_t: &[f64],
        psi: &SpaceTimeField,
        lambda: &SpaceTimeField,
    ) -> Result<f64> {
        let ctx = self.context();
        self.check_pair(psi, lambda)?;
        let last = self.grid().len();
        let mut total = ctx.mass_x.bilinear(lambda.on(last), p_t);
        for m in 1..=last {
            total += self.grid().tau(m) * dot(psi.on(m), &g1_loads[m - 1]);
            if let Some(r) = g2_scaled.get(m - 1) {
                total += ctx.mass_x.bilinear(lambda.on(m), r);
            }
        }
        Ok(total)
    }

    fn check_pair(&self, v: &SpaceTimeField, x: &SpaceTimeField) -> Result<()> {
        let ctx = self.context();
        if v.kind != SpaceKind::DirichletP1 || x.kind != SpaceKind::FreeP1 {
            return Err(Error::SpaceMismatch);
        }
        if &v.grid != self.grid() || &x.grid != self.grid() {
            return Err(Error::GridMismatch);
        }
        if v.dofs() != ctx.v_dofs() {
            return Err(Error::DimensionMismatch {
                expected: ctx.v_dofs(),
                found: v.dofs(),
            });
        }
        if x.dofs() != ctx.x_dofs() {
            return Err(Error::DimensionMismatch {
                expected: ctx.x_dofs(),
                found: x.dofs(),
            });
        }
        Ok(())
    }
}
