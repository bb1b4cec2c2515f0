//! dG(0)-in-time / P1-in-space solver for the state equation.
//!
//! On every interval I_m the discrete equations decouple into
//!
//! ```text
//!   α(∇φ_m, ∇ψ) + β(φ_m, ψ) = β(d_m, ψ) + (l_m, ψ)      ∀ψ ∈ V_h
//!   (1 + q_m) d_m = d_{m-1} + q_m φ_m + P_X ∫_{I_m} f    nodally in X_h,  q_m = (β/δ)τ_m
//! ```
//!
//! The second line holds nodally because φ_m, d_m and d_{m-1} all live in X_h
//! (φ_m extended by zero on ∂Ω). The pair is solved either by the contraction
//! d ↦ (d_{m-1} + q_m Φ_h(l_m, d) + F_m)/(1 + q_m), whose factor is
//! q_m/(1 + q_m) < 1, or by eliminating d_m, which leaves the SPD system
//! (αK + β/(1+q_m) M) φ_m = β/(1+q_m) M_VX (d_{m-1} + F_m) + l_m.

use std::sync::Arc;

use crate::fem::FeContext;
use crate::linalg::{
    pcg_solve_with, Identity, Jacobi, PcgOutcome, Preconditioner, PreconditionerKind, SolverConfig,
};
use crate::mesh::SpaceKind;
use crate::multigrid::MultigridHierarchy;
use crate::par::axpy;
use crate::quadrature::GaussRule;
use crate::sparse::CsrMatrix;
use crate::time::{SpaceTimeField, TimeFunction, TimeGrid};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
    pub final_time: f64,
}

impl ModelParams {
    pub fn new(alpha: f64, beta: f64, delta: f64, final_time: f64) -> Result<Self> {
        let p = ModelParams {
            alpha,
            beta,
            delta,
            final_time,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("delta", self.delta),
            ("T", self.final_time),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// q_m = (β/δ)τ_m
    pub fn coupling(&self, tau: f64) -> f64 {
        self.beta / self.delta * tau
    }

    /// Contraction factor q_m/(1 + q_m) of the per-interval fixed-point map.
    pub fn contraction_factor(&self, tau: f64) -> f64 {
        let q = self.coupling(tau);
        q / (1.0 + q)
    }
}

impl Default for ModelParams {
    /// α = 1, β = 1, δ = 0.1, T = 1.
    fn default() -> Self {
        ModelParams {
            alpha: 1.0,
            beta: 1.0,
            delta: 0.1,
            final_time: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepMode {
    FixedPoint { tol: f64 },
    Monolithic,
}

impl Default for StepMode {
    fn default() -> Self {
        StepMode::FixedPoint { tol: 1e-13 }
    }
}

pub const FIXED_POINT_CAP: usize = 200;

/// How continuous data enter the discrete problem and how errors are measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sampling {
    /// Galerkin data: interval averages by Gauss quadrature, spatial loads by
    /// the degree-5 triangle rule, initial values by L² projection; errors in
    /// L²(I×Ω) by space-time quadrature.
    IntervalAverage,
    /// Data sampled at the right endpoint t_m of each interval and replaced by
    /// its nodal P1 interpolant; errors measured as √(Σ τ_m ‖I_h u(t_m) − u_m‖²).
    EndpointNodal,
}

impl Default for Sampling {
    fn default() -> Self {
        Sampling::EndpointNodal
    }
}

/// Source terms of the state equation.
#[derive(Debug, Clone)]
pub enum SpaceTimeData {
    Zero,
    Function(TimeFunction),
    Field(SpaceTimeField),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    pub mode: StepMode,
    pub pcg: SolverConfig,
    pub sampling: Sampling,
    pub time_rule: GaussRule,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            mode: StepMode::default(),
            pcg: SolverConfig {
                preconditioner: PreconditionerKind::Multigrid,
                ..SolverConfig::default()
            },
            sampling: Sampling::default(),
            time_rule: GaussRule::new(3),
        }
    }
}

/// a·K + c·M on V_h with its preconditioner.
pub struct EllipticOperator {
    pub matrix: CsrMatrix,
    pub coefficient: f64,
    precond: Box<dyn Preconditioner>,
    cfg: SolverConfig,
}

impl EllipticOperator {
    pub fn new(ctx: &FeContext, a: f64, c: f64, cfg: &SolverConfig) -> Result<Self> {
        let matrix = ctx.stiff_v.linear_combination(a, &ctx.mass_v, c)?;
        let precond: Box<dyn Preconditioner> = match cfg.preconditioner {
            PreconditionerKind::None => Box::new(Identity),
            PreconditionerKind::Jacobi => Box::new(Jacobi::new(&matrix)),
            PreconditionerKind::Multigrid => match MultigridHierarchy::new(&matrix, ctx.n(), a, c)?
            {
                Some(mg) => Box::new(mg),
                None => Box::new(Jacobi::new(&matrix)),
            },
        };
        Ok(EllipticOperator {
            matrix,
            coefficient: c,
            precond,
            cfg: *cfg,
        })
    }

    pub fn solve(&self, rhs: &[f64], guess: Option<&[f64]>) -> Result<PcgOutcome> {
        pcg_solve_with(&self.matrix, rhs, guess, &self.cfg, self.precond.as_ref())
    }

    /// Purely relative stopping, for right-hand sides that shrink geometrically.
    pub fn solve_relative(&self, rhs: &[f64]) -> Result<PcgOutcome> {
        let cfg = SolverConfig {
            abs_tol: f64::MIN_POSITIVE,
            ..self.cfg
        };
        pcg_solve_with(&self.matrix, rhs, None, &cfg, self.precond.as_ref())
    }
}

/// Fixed-point diagnostics for one interval.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractionRecord {
    pub interval: usize,
    /// q_m/(1 + q_m)
    pub bound: f64,
    /// Largest observed ‖Δ_{k+1}‖/‖Δ_k‖ (0 if fewer than two increments).
    pub max_ratio: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// Elliptic component on V_h.
    pub elliptic: Vec<f64>,
    /// Nodal component on X_h.
    pub nodal: Vec<f64>,
    pub contraction: Option<ContractionRecord>,
}

/// Coefficients of one interval's coupled problem
///   (αK + βM) x = s·M_VX y + load,   (1+q) y = y_prev + w·x + r.
pub(crate) struct CoupledStep<'a> {
    pub interval: usize,
    pub tau: f64,
    pub source_scale: f64,
    pub update_scale: f64,
    pub y_prev: &'a [f64],
    pub load: &'a [f64],
    pub extra: Option<&'a [f64]>,
    pub guess: Option<&'a [f64]>,
}

#[derive(Debug, Clone)]
pub struct StateSolution {
    /// φ_τh on V_h.
    pub phi: SpaceTimeField,
    /// d_τh on X_h, with `initial_trace` = d_τh,0.
    pub d: SpaceTimeField,
    /// Interval-averaged source loads (l_m, ψ_i) on V_h.
    pub source_loads: Vec<Vec<f64>>,
    /// P_X ∫_{I_m} f per interval (empty when f is absent).
    pub ode_source: Vec<Vec<f64>>,
    pub contraction: Vec<ContractionRecord>,
}

/// Holds the discretization (mesh, time grid, parameters) and the cached
/// elliptic operators. Immutable once built; share it freely across threads.
pub struct SpaceTimeSolver {
    ctx: Arc<FeContext>,
    params: ModelParams,
    grid: TimeGrid,
    settings: SolverSettings,
    phi_operator: EllipticOperator,
    coupled_operators: Vec<EllipticOperator>,
}

impl SpaceTimeSolver {
    pub fn new(
        ctx: Arc<FeContext>,
        params: ModelParams,
        grid: TimeGrid,
        settings: SolverSettings,
    ) -> Result<Self> {
        params.validate()?;
        settings.pcg.validate()?;
        if let StepMode::FixedPoint { tol } = settings.mode {
            if !(tol > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "fixed-point tolerance must be positive, got {tol}"
                )));
            }
        }
        if (grid.final_time() - params.final_time).abs() > 1e-12 * params.final_time {
            return Err(Error::InvalidArgument(format!(
                "time grid ends at {} but T = {}",
                grid.final_time(),
                params.final_time
            )));
        }
        let phi_operator = EllipticOperator::new(&ctx, params.alpha, params.beta, &settings.pcg)?;
        let mut coupled_operators: Vec<EllipticOperator> = Vec::new();
        if settings.mode == StepMode::Monolithic {
            for m in 1..=grid.len() {
                let c = params.beta / (1.0 + params.coupling(grid.tau(m)));
                if !coupled_operators
                    .iter()
                    .any(|op| same_coefficient(op.coefficient, c))
                {
                    coupled_operators.push(EllipticOperator::new(
                        &ctx,
                        params.alpha,
                        c,
                        &settings.pcg,
                    )?);
                }
            }
        }
        Ok(SpaceTimeSolver {
            ctx,
            params,
            grid,
            settings,
            phi_operator,
            coupled_operators,
        })
    }

    pub fn context(&self) -> &FeContext {
        &self.ctx
    }

    pub fn shared_context(&self) -> Arc<FeContext> {
        Arc::clone(&self.ctx)
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn settings(&self) -> &SolverSettings {
        &self.settings
    }

    /// Φ_h(l, d): solves α(∇φ,∇ψ) + β(φ,ψ) = (βd + l, ψ) for d on X_h and a load on V_h.
    pub fn solve_elliptic(&self, d: &[f64], load: &[f64]) -> Result<Vec<f64>> {
        self.check_len(d, self.ctx.x_dofs())?;
        self.check_len(load, self.ctx.v_dofs())?;
        let mut rhs = self.ctx.mass_vx.mul_vec(d);
        rhs.iter_mut()
            .zip(load)
            .for_each(|(r, l)| *r = self.params.beta * *r + l);
        Ok(self.phi_operator.solve(&rhs, None)?.x)
    }

    fn check_len(&self, v: &[f64], n: usize) -> Result<()> {
        if v.len() == n {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: n,
                found: v.len(),
            })
        }
    }

    pub(crate) fn coupled_step(&self, step: &CoupledStep<'_>) -> Result<StepOutcome> {
        let ctx = &*self.ctx;
        let q = self.params.coupling(step.tau);
        let inv = 1.0 / (1.0 + q);
        // y = (y_prev + w·E x + r)/(1+q)
        let update = |x: &[f64]| -> Vec<f64> {
            let ex = ctx.embed(x);
            let mut y = step.y_prev.to_vec();
            axpy(step.update_scale, &ex, &mut y);
            if let Some(r) = step.extra {
                axpy(1.0, r, &mut y);
            }
            y.iter_mut().for_each(|v| *v *= inv);
            y
        };
        match self.settings.mode {
            StepMode::Monolithic => {
                let c = self.params.beta * inv;
                let built;
                let op = match self
                    .coupled_operators
                    .iter()
                    .find(|op| same_coefficient(op.coefficient, c))
                {
                    Some(op) => op,
                    None => {
                        built =
                            EllipticOperator::new(ctx, self.params.alpha, c, &self.settings.pcg)?;
                        &built
                    }
                };
                let mut y0 = step.y_prev.to_vec();
                if let Some(r) = step.extra {
                    axpy(1.0, r, &mut y0);
                }
                let mut rhs = ctx.mass_vx.mul_vec(&y0);
                let s = step.source_scale * inv;
                rhs.iter_mut()
                    .zip(step.load)
                    .for_each(|(a, l)| *a = s * *a + l);
                let x = op.solve(&rhs, step.guess)?.x;
                let y = update(&x);
                Ok(StepOutcome {
                    elliptic: x,
                    nodal: y,
                    contraction: None,
                })
            }
            StepMode::FixedPoint { tol } => {
                let op = &self.phi_operator;
                let bound = q * inv;
                let mut y = step.y_prev.to_vec();
                let mut rhs = ctx.mass_vx.mul_vec(&y);
                rhs.iter_mut()
                    .zip(step.load)
                    .for_each(|(a, l)| *a = step.source_scale * *a + l);
                let mut x = op.solve(&rhs, step.guess)?.x;
                let mut delta: Vec<f64> = update(&x).iter().zip(&y).map(|(a, b)| a - b).collect();
                let mut prev_norm = 0.0;
                let mut max_ratio: f64 = 0.0;
                for k in 0..FIXED_POINT_CAP {
                    let norm = ctx.norm(SpaceKind::FreeP1, &delta);
                    if k > 0 && prev_norm > 0.0 {
                        max_ratio = max_ratio.max(norm / prev_norm);
                    }
                    axpy(1.0, &delta, &mut y);
                    let scale = ctx.norm(SpaceKind::FreeP1, &y).max(1.0);
                    if norm <= tol * scale {
                        return Ok(StepOutcome {
                            elliptic: x,
                            nodal: y,
                            contraction: Some(ContractionRecord {
                                interval: step.interval,
                                bound,
                                max_ratio,
                                iterations: k + 1,
                            }),
                        });
                    }
                    // increment form: Δx = Φ_h(0, Δy), Δy' = (w/(1+q))·E Δx
                    let mut drhs = ctx.mass_vx.mul_vec(&delta);
                    drhs.iter_mut().for_each(|v| *v *= step.source_scale);
                    let dx = op.solve_relative(&drhs)?.x;
                    axpy(1.0, &dx, &mut x);
                    delta = ctx.embed(&dx);
                    delta.iter_mut().for_each(|v| *v *= step.update_scale * inv);
                    prev_norm = norm;
                }
                Err(Error::FixedPointCap {
                    interval: step.interval,
                    iters: FIXED_POINT_CAP,
                    last_increment: prev_norm,
                })
            }
        }
    }

    /// One forward interval: returns (φ_m, d_m) from d_{m-1}, the averaged
    /// source load on V_h and the load of ∫_{I_m} f on X_h (if any).
    pub fn step_interval(
        &self,
        m: usize,
        d_prev: &[f64],
        load_l: &[f64],
        f_int: Option<&[f64]>,
        guess: Option<&[f64]>,
    ) -> Result<StepOutcome> {
        if m == 0 || m > self.grid.len() {
            return Err(Error::InvalidArgument(format!(
                "interval index {m} outside 1..={}",
                self.grid.len()
            )));
        }
        self.check_len(d_prev, self.ctx.x_dofs())?;
        self.check_len(load_l, self.ctx.v_dofs())?;
        let projected = match f_int {
            Some(load) => {
                self.check_len(load, self.ctx.x_dofs())?;
                Some(self.ctx.mass_solve(SpaceKind::FreeP1, load)?)
            }
            None => None,
        };
        let tau = self.grid.tau(m);
        self.coupled_step(&CoupledStep {
            interval: m,
            tau,
            source_scale: self.params.beta,
            update_scale: self.params.coupling(tau),
            y_prev: d_prev,
            load: load_l,
            extra: projected.as_deref(),
            guess,
        })
    }

    /// Averaged source loads on V_h for every interval.
    pub fn source_loads(&self, l: &SpaceTimeData) -> Result<Vec<Vec<f64>>> {
        let ctx = &*self.ctx;
        let m_count = self.grid.len();
        match l {
            SpaceTimeData::Zero => Ok(vec![vec![0.0; ctx.v_dofs()]; m_count]),
            SpaceTimeData::Function(f) if f.is_zero() => Ok(vec![vec![0.0; ctx.v_dofs()]; m_count]),
            SpaceTimeData::Function(f) => Ok((1..=m_count)
                .map(|m| self.sampled_load(f, m, SpaceKind::DirichletP1))
                .collect()),
            SpaceTimeData::Field(field) => {
                self.check_field(field)?;
                let mass = match field.kind {
                    SpaceKind::DirichletP1 => &ctx.mass_v,
                    SpaceKind::FreeP1 => &ctx.mass_vx,
                };
                Ok(field.coeffs.iter().map(|c| mass.mul_vec(c)).collect())
            }
        }
    }

    /// P_X ∫_{I_m} f for every interval, or an empty list when f vanishes.
    pub fn ode_source(&self, f: &SpaceTimeData) -> Result<Vec<Vec<f64>>> {
        let ctx = &*self.ctx;
        match f {
            SpaceTimeData::Zero => Ok(Vec::new()),
            SpaceTimeData::Function(func) if func.is_zero() => Ok(Vec::new()),
            SpaceTimeData::Function(func) => (1..=self.grid.len())
                .map(|m| match self.settings.sampling {
                    Sampling::EndpointNodal => {
                        let t = self.grid.interval(m).1;
                        let nodal = ctx.interpolate(SpaceKind::FreeP1, |x, y| func.eval(t, x, y));
                        Ok(nodal.iter().map(|v| v * self.grid.tau(m)).collect())
                    }
                    Sampling::IntervalAverage => {
                        let load = self.sampled_load(func, m, SpaceKind::FreeP1);
                        let avg = ctx.mass_solve(SpaceKind::FreeP1, &load)?;
                        Ok(avg.iter().map(|v| v * self.grid.tau(m)).collect())
                    }
                })
                .collect(),
            SpaceTimeData::Field(field) => {
                self.check_field(field)?;
                Ok((1..=self.grid.len())
                    .map(|m| {
                        let v = match field.kind {
                            SpaceKind::FreeP1 => field.on(m).to_vec(),
                            SpaceKind::DirichletP1 => ctx.embed(field.on(m)),
                        };
                        v.iter().map(|x| x * self.grid.tau(m)).collect()
                    })
                    .collect())
            }
        }
    }

    fn check_field(&self, field: &SpaceTimeField) -> Result<()> {
        if field.grid != self.grid {
            return Err(Error::GridMismatch);
        }
        let dofs = self.ctx.space(field.kind).dof_count();
        if field.dofs() != dofs {
            return Err(Error::DimensionMismatch {
                expected: dofs,
                found: field.dofs(),
            });
        }
        Ok(())
    }

    /// Load (f_m, ψ_i) of the data on interval m under the configured sampling.
    pub fn sampled_load(&self, f: &TimeFunction, m: usize, kind: SpaceKind) -> Vec<f64> {
        match self.settings.sampling {
            Sampling::IntervalAverage => {
                time_average_load(&self.ctx, kind, &self.grid, f, m, &self.settings.time_rule)
            }
            Sampling::EndpointNodal => {
                let t = self.grid.interval(m).1;
                let nodal = self
                    .ctx
                    .interpolate(SpaceKind::FreeP1, |x, y| f.eval(t, x, y));
                match kind {
                    SpaceKind::FreeP1 => self.ctx.mass_x.mul_vec(&nodal),
                    SpaceKind::DirichletP1 => self.ctx.mass_vx.mul_vec(&nodal),
                }
            }
        }
    }

    /// Per-interval representative of the data on the given space: L²
    /// projection of the interval average, or the nodal interpolant at t_m.
    pub fn sampled_field(&self, f: &TimeFunction, kind: SpaceKind) -> Result<Vec<Vec<f64>>> {
        (1..=self.grid.len())
            .map(|m| match (self.settings.sampling, kind) {
                (Sampling::EndpointNodal, _) => {
                    let t = self.grid.interval(m).1;
                    Ok(self.ctx.interpolate(kind, |x, y| f.eval(t, x, y)))
                }
                _ => self.ctx.mass_solve(kind, &self.sampled_load(f, m, kind)),
            })
            .collect()
    }

    /// d_τh,0: P_X d0, or the nodal interpolant of d0.
    pub fn initial_value(&self, d0: &TimeFunction) -> Result<Vec<f64>> {
        if d0.is_zero() {
            return Ok(vec![0.0; self.ctx.x_dofs()]);
        }
        match self.settings.sampling {
            Sampling::IntervalAverage => self
                .ctx
                .project(SpaceKind::FreeP1, |x, y| d0.eval(0.0, x, y)),
            Sampling::EndpointNodal => Ok(self
                .ctx
                .interpolate(SpaceKind::FreeP1, |x, y| d0.eval(0.0, x, y))),
        }
    }

    /// Forward sweep m = 1..M.
    pub fn solve_state(
        &self,
        l: &SpaceTimeData,
        d0: &TimeFunction,
        f: &SpaceTimeData,
    ) -> Result<StateSolution> {
        let loads = self.source_loads(l)?;
        let d_init = self.initial_value(d0)?;
        let ode = self.ode_source(f)?;
        self.solve_state_loads(loads, d_init, ode)
    }

    /// Forward sweep from precomputed per-interval data.
    pub fn solve_state_loads(
        &self,
        source_loads: Vec<Vec<f64>>,
        d_init: Vec<f64>,
        ode_source: Vec<Vec<f64>>,
    ) -> Result<StateSolution> {
        let ctx = &*self.ctx;
        let m_count = self.grid.len();
        if source_loads.len() != m_count {
            return Err(Error::DimensionMismatch {
                expected: m_count,
                found: source_loads.len(),
            });
        }
        if !ode_source.is_empty() && ode_source.len() != m_count {
            return Err(Error::DimensionMismatch {
                expected: m_count,
                found: ode_source.len(),
            });
        }
        self.check_len(&d_init, ctx.x_dofs())?;
        let mut phi = Vec::with_capacity(m_count);
        let mut d: Vec<Vec<f64>> = Vec::with_capacity(m_count);
        let mut contraction = Vec::new();
        for m in 1..=m_count {
            let tau = self.grid.tau(m);
            let outcome = self.coupled_step(&CoupledStep {
                interval: m,
                tau,
                source_scale: self.params.beta,
                update_scale: self.params.coupling(tau),
                y_prev: d.last().unwrap_or(&d_init),
                load: &source_loads[m - 1],
                extra: ode_source.get(m - 1).map(Vec::as_slice),
                guess: phi.last().map(Vec::as_slice),
            })?;
            contraction.extend(outcome.contraction);
            phi.push(outcome.elliptic);
            d.push(outcome.nodal);
        }
        let phi = SpaceTimeField::from_coeffs(&self.grid, SpaceKind::DirichletP1, phi)?;
        let mut d = SpaceTimeField::from_coeffs(&self.grid, SpaceKind::FreeP1, d)?;
        d.initial_trace = Some(d_init);
        Ok(StateSolution {
            phi,
            d,
            source_loads,
            ode_source,
            contraction,
        })
    }

    /// Per-step stability bookkeeping for a forward solution.
    pub fn stability_report(&self, sol: &StateSolution) -> Result<StabilityReport> {
        let ctx = &*self.ctx;
        let d0 = sol
            .d
            .initial_trace
            .clone()
            .unwrap_or_else(|| vec![0.0; ctx.x_dofs()]);
        let mut prev = ctx.norm(SpaceKind::FreeP1, &d0);
        let mut d_norms = Vec::with_capacity(sol.d.intervals());
        let mut slack = Vec::with_capacity(sol.d.intervals());
        let mut jump_sum = 0.0;
        for m in 1..=sol.d.intervals() {
            let tau = self.grid.tau(m);
            let cur = ctx.norm(SpaceKind::FreeP1, sol.d.on(m));
            let source = ctx.dual_norm(SpaceKind::DirichletP1, &sol.source_loads[m - 1])?;
            let ode = sol
                .ode_source
                .get(m - 1)
                .map_or(0.0, |f| ctx.norm(SpaceKind::FreeP1, f));
            slack.push(prev + tau / self.params.delta * source + ode - cur);
            let left = if m == 1 { &d0 } else { sol.d.on(m - 1) };
            let jump: Vec<f64> = sol.d.on(m).iter().zip(left).map(|(a, b)| a - b).collect();
            jump_sum += ctx.norm(SpaceKind::FreeP1, &jump).powi(2) / tau;
            d_norms.push(cur);
            prev = cur;
        }
        Ok(StabilityReport {
            max_d_norm: d_norms.iter().copied().fold(0.0, f64::max),
            d_norms,
            slack,
            weighted_jump_sum: jump_sum,
        })
    }
}

fn same_coefficient(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

/// Output of [`SpaceTimeSolver::stability_report`].
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub max_d_norm: f64,
    /// ‖d_m‖ for m = 1..M.
    pub d_norms: Vec<f64>,
    /// s_m = ‖d_{m-1}‖ + (τ_m/δ)‖l_m‖ + ‖P_X∫f‖ − ‖d_m‖, nonnegative in exact arithmetic.
    pub slack: Vec<f64>,
    /// Σ τ_m⁻¹ ‖[d]_{m-1}‖².
    pub weighted_jump_sum: f64,
}

impl StabilityReport {
    pub fn min_slack(&self) -> f64 {
        self.slack.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Load of the interval average (1/τ_m)∫_{I_m} l(t,·) dt by Gauss quadrature in time.
pub fn time_average_load(
    ctx: &FeContext,
    kind: SpaceKind,
    grid: &TimeGrid,
    l: &TimeFunction,
    m: usize,
    rule: &GaussRule,
) -> Vec<f64> {
    if l.is_time_independent() {
        return ctx.load(kind, |x, y| l.eval(0.0, x, y));
    }
    let (a, b) = grid.interval(m);
    let times: Vec<(f64, f64)> = rule
        .points
        .iter()
        .zip(&rule.weights)
        .map(|(s, w)| (a + s * (b - a), *w))
        .collect();
    ctx.load(kind, |x, y| {
        times.iter().map(|&(t, w)| w * l.eval(t, x, y)).sum()
    })
}
