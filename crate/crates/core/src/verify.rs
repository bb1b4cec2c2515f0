//! Independent checks of the solvers: a dense monolithic oracle built from the
//! space-time bilinear form, duality and gradient identities, and a property
//! suite used by the `verify` command.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fem::FeContext;
use crate::forward::{
    ModelParams, Sampling, SolverSettings, SpaceTimeData, SpaceTimeSolver, StepMode,
};
use crate::harness::ManufacturedCase;
use crate::linalg::{dense_solve, DenseMatrix};
use crate::mesh::SpaceKind;
use crate::optimizer::{ControlData, ControlProblem};
use crate::par::dot;
use crate::time::{SpaceTimeField, TimeFunction, TimeGrid};
use crate::Result;

/// The global space-time system assembled column by column from
/// [`SpaceTimeSolver::bilinear_form`] and solved by dense LU.
pub struct DenseOracle {
    matrix: DenseMatrix,
    v: usize,
    x: usize,
    m: usize,
}

/// max_i |a_i − b_i| / max_i |b_i| (0 when both vanish).
pub fn relative_difference(a: &[f64], b: &[f64]) -> f64 {
    let diff = a
        .iter()
        .zip(b)
        .map(|(u, v)| (u - v).abs())
        .fold(0.0, f64::max);
    let scale = b.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if diff == 0.0 {
        0.0
    } else {
        diff / scale.max(f64::MIN_POSITIVE)
    }
}

fn field_difference(a: &SpaceTimeField, b: &SpaceTimeField) -> f64 {
    let fa: Vec<f64> = a.coeffs.iter().flatten().copied().collect();
    let fb: Vec<f64> = b.coeffs.iter().flatten().copied().collect();
    relative_difference(&fa, &fb)
}

impl DenseOracle {
    pub fn new(solver: &SpaceTimeSolver) -> Result<Self> {
        let ctx = solver.context();
        let (v, x, m) = (ctx.v_dofs(), ctx.x_dofs(), solver.grid().len());
        let mut oracle = DenseOracle {
            matrix: DenseMatrix::zeros(0, 0),
            v,
            x,
            m,
        };
        let size = oracle.size();
        let basis: Vec<(SpaceTimeField, SpaceTimeField)> =
            (0..size).map(|j| oracle.unit(solver, j)).collect();
        let mut matrix = DenseMatrix::zeros(size, size);
        for (j, (phi, d)) in basis.iter().enumerate() {
            for (i, (psi, lambda)) in basis.iter().enumerate() {
                let b = solver.bilinear_form(phi, d, psi, lambda)?;
                if b != 0.0 {
                    matrix.set(i, j, b);
                }
            }
        }
        oracle.matrix = matrix;
        Ok(oracle)
    }

    pub fn size(&self) -> usize {
        self.m * (self.v + self.x)
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    fn unit(&self, solver: &SpaceTimeSolver, j: usize) -> (SpaceTimeField, SpaceTimeField) {
        let mut vec = vec![0.0; self.size()];
        vec[j] = 1.0;
        self.unpack(solver, &vec)
    }

    /// Unknowns ordered interval by interval as [φ_m (V), d_m (X)].
    fn unpack(&self, solver: &SpaceTimeSolver, u: &[f64]) -> (SpaceTimeField, SpaceTimeField) {
        let block = self.v + self.x;
        let mut phi = SpaceTimeField::zeros(solver.grid(), SpaceKind::DirichletP1, self.v);
        let mut d = SpaceTimeField::zeros(solver.grid(), SpaceKind::FreeP1, self.x);
        for k in 0..self.m {
            phi.coeffs[k].copy_from_slice(&u[k * block..k * block + self.v]);
            d.coeffs[k].copy_from_slice(&u[k * block + self.v..(k + 1) * block]);
        }
        (phi, d)
    }

    fn functional<F>(&self, solver: &SpaceTimeSolver, f: F) -> Result<Vec<f64>>
    where
        F: Fn(&SpaceTimeField, &SpaceTimeField) -> Result<f64>,
    {
        (0..self.size())
            .map(|i| {
                let (psi, lambda) = self.unit(solver, i);
                f(&psi, &lambda)
            })
            .collect()
    }

    pub fn solve_state(
        &self,
        solver: &SpaceTimeSolver,
        loads: &[Vec<f64>],
        d_init: &[f64],
        ode: &[Vec<f64>],
    ) -> Result<(SpaceTimeField, SpaceTimeField)> {
        let rhs = self.functional(solver, |psi, lambda| {
            solver.forward_functional(loads, d_init, ode, psi, lambda)
        })?;
        Ok(self.unpack(solver, &dense_solve(&self.matrix, &rhs)?))
    }

    pub fn solve_adjoint(
        &self,
        solver: &SpaceTimeSolver,
        g1: &[Vec<f64>],
        g2_scaled: &[Vec<f64>],
        p_t: &[f64],
    ) -> Result<(SpaceTimeField, SpaceTimeField)> {
        let rhs = self.functional(solver, |psi, lambda| {
            solver.adjoint_functional(g1, g2_scaled, p_t, psi, lambda)
        })?;
        Ok(self.unpack(solver, &dense_solve(&self.matrix.transpose(), &rhs)?))
    }
}

/// Random discrete data for one forward and one adjoint solve.
#[derive(Debug, Clone)]
pub struct RandomInstance {
    pub loads: Vec<Vec<f64>>,
    pub d_init: Vec<f64>,
    pub ode: Vec<Vec<f64>>,
    pub g1: Vec<Vec<f64>>,
    pub g2_scaled: Vec<Vec<f64>>,
    pub p_t: Vec<f64>,
}

fn uniform(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub fn random_instance(solver: &SpaceTimeSolver, rng: &mut ChaCha8Rng) -> RandomInstance {
    let ctx = solver.context();
    let m = solver.grid().len();
    let (v, x) = (ctx.v_dofs(), ctx.x_dofs());
    RandomInstance {
        loads: (0..m).map(|_| uniform(rng, v)).collect(),
        d_init: uniform(rng, x),
        ode: (0..m).map(|_| uniform(rng, x)).collect(),
        g1: (0..m).map(|_| uniform(rng, v)).collect(),
        g2_scaled: (0..m).map(|_| uniform(rng, x)).collect(),
        p_t: uniform(rng, x),
    }
}

/// Largest relative difference between time stepping and the dense oracle over
/// φ, d, z and p.
pub fn oracle_discrepancy(
    solver: &SpaceTimeSolver,
    oracle: &DenseOracle,
    inst: &RandomInstance,
) -> Result<f64> {
    let st = solver.solve_state_loads(inst.loads.clone(), inst.d_init.clone(), inst.ode.clone())?;
    let (phi, d) = oracle.solve_state(solver, &inst.loads, &inst.d_init, &inst.ode)?;
    let adj =
        solver.solve_adjoint_loads(inst.g1.clone(), inst.g2_scaled.clone(), inst.p_t.clone())?;
    let (z, p) = oracle.solve_adjoint(solver, &inst.g1, &inst.g2_scaled, &inst.p_t)?;
    Ok([
        field_difference(&st.phi, &phi),
        field_difference(&st.d, &d),
        field_difference(&adj.z, &z),
        field_difference(&adj.p, &p),
    ]
    .into_iter()
    .fold(0.0, f64::max))
}

/// Relative defect of Σ τ_m[(g1_m, δφ_m) + (g2_m, δd_m)] = Σ τ_m (δl_m, z_m)
/// for random δl, g1, g2 and p_T = 0.
pub fn duality_defect(solver: &SpaceTimeSolver, rng: &mut ChaCha8Rng) -> Result<f64> {
    let ctx = solver.context();
    let grid = solver.grid();
    let m = grid.len();
    let dl: Vec<Vec<f64>> = (0..m).map(|_| uniform(rng, ctx.v_dofs())).collect();
    let g1: Vec<Vec<f64>> = (0..m).map(|_| uniform(rng, ctx.v_dofs())).collect();
    let g2: Vec<Vec<f64>> = (0..m).map(|_| uniform(rng, ctx.x_dofs())).collect();
    let loads = dl.iter().map(|v| ctx.mass_v.mul_vec(v)).collect();
    let st = solver.solve_state_loads(loads, vec![0.0; ctx.x_dofs()], Vec::new())?;
    let g2_scaled = (1..=m)
        .map(|k| g2[k - 1].iter().map(|v| v * grid.tau(k)).collect())
        .collect();
    let adj = solver.solve_adjoint_loads(g1.clone(), g2_scaled, vec![0.0; ctx.x_dofs()])?;
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for k in 1..=m {
        let tau = grid.tau(k);
        lhs += tau * (dot(&g1[k - 1], st.phi.on(k)) + ctx.mass_x.bilinear(&g2[k - 1], st.d.on(k)));
        rhs += tau * ctx.mass_v.bilinear(&dl[k - 1], adj.z.on(k));
    }
    let scale = lhs.abs().max(rhs.abs());
    Ok(if scale == 0.0 {
        0.0
    } else {
        (lhs - rhs).abs() / scale
    })
}

/// A control problem with random discrete targets, shift and initial value.
pub fn random_control_problem(
    solver: Arc<SpaceTimeSolver>,
    rng: &mut ChaCha8Rng,
) -> Result<ControlProblem> {
    let ctx = solver.context();
    let grid = solver.grid().clone();
    let m = grid.len();
    let field = |rng: &mut ChaCha8Rng, kind: SpaceKind, dofs: usize| {
        SpaceTimeField::from_coeffs(&grid, kind, (0..m).map(|_| uniform(rng, dofs)).collect())
    };
    let desired_phi = field(rng, SpaceKind::FreeP1, ctx.x_dofs())?;
    let desired_d = field(rng, SpaceKind::FreeP1, ctx.x_dofs())?;
    let shift = field(rng, SpaceKind::DirichletP1, ctx.v_dofs())?;
    let (a, b) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    let alpha_l = rng.gen_range(0.1..2.0);
    ControlProblem::new(
        solver,
        ControlData {
            alpha_l,
            desired_phi: SpaceTimeData::Field(desired_phi),
            desired_d: SpaceTimeData::Field(desired_d),
            control_shift: Some(SpaceTimeData::Field(shift)),
            d0: TimeFunction::stationary(move |x, y| a * x + b * y * y),
        },
    )
}

pub fn random_control(problem: &ControlProblem, rng: &mut ChaCha8Rng) -> SpaceTimeField {
    let mut l = problem.zero_control();
    l.coeffs
        .iter_mut()
        .flatten()
        .for_each(|v| *v = rng.gen_range(-1.0..1.0));
    l
}

/// |⟨∇j(l), δl⟩_σ − (j(l+εδl) − j(l−εδl))/(2ε)| / (1 + |j(l)|) at ε = 10⁻⁴.
pub fn gradient_fd_defect(problem: &ControlProblem, rng: &mut ChaCha8Rng) -> Result<f64> {
    let l = random_control(problem, rng);
    let dl = random_control(problem, rng);
    let eps = 1e-4;
    let g = problem.reduced_gradient(&l)?;
    let jp = problem.objective(&l.add_scaled(eps, &dl)?)?;
    let jm = problem.objective(&l.add_scaled(-eps, &dl)?)?;
    let j = problem.objective(&l)?;
    Ok((problem.inner(&g, &dl) - (jp - jm) / (2.0 * eps)).abs() / (1.0 + j.abs()))
}

/// |⟨Hδl₁, δl₂⟩_σ − ⟨δl₁, Hδl₂⟩_σ| and the coercivity margin
/// ⟨Hδl, δl⟩_σ − α_l⟨δl, δl⟩_σ for random directions.
pub fn hessian_defects(problem: &ControlProblem, rng: &mut ChaCha8Rng) -> Result<(f64, f64)> {
    let a = random_control(problem, rng);
    let b = random_control(problem, rng);
    let ha = problem.hessian_apply(&a)?;
    let hb = problem.hessian_apply(&b)?;
    let asym = (problem.inner(&ha, &b) - problem.inner(&a, &hb)).abs();
    let margin = problem.inner(&ha, &a) - problem.data().alpha_l * problem.inner(&a, &a);
    Ok((asym, margin))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn small_solver(n: usize, m: usize, mode: StepMode, sampling: Sampling) -> Result<SpaceTimeSolver> {
    let ctx = Arc::new(FeContext::new(n)?);
    let settings = SolverSettings {
        mode,
        sampling,
        ..SolverSettings::default()
    };
    SpaceTimeSolver::new(
        ctx,
        ModelParams::default(),
        TimeGrid::uniform(1.0, m)?,
        settings,
    )
}

fn check<F>(name: &str, f: F) -> PropertyCheck
where
    F: FnOnce() -> Result<(bool, String)>,
{
    match f() {
        Ok((passed, detail)) => PropertyCheck {
            name: name.into(),
            passed,
            detail,
        },
        Err(e) => PropertyCheck {
            name: name.into(),
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

/// Runs the invariant suites on small problems. Deterministic for a given seed.
pub fn run_property_suite(seed: u64) -> Vec<PropertyCheck> {
    let mut out = Vec::new();
    out.push(check("manufactured residuals", || {
        let case = ManufacturedCase::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let worst = (0..100)
            .map(|_| {
                let (t, x, y) = (rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>());
                case.ode_residual(t, x, y)
                    .abs()
                    .max(case.elliptic_residual(t, x, y).abs())
            })
            .fold(0.0, f64::max);
        Ok((worst <= 1e-10, format!("max residual {worst:.3e}")))
    }));
    out.push(check("dense oracle equivalence", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
        let mut worst: f64 = 0.0;
        for n in [1, 2, 4] {
            for m in [1, 2, 4] {
                let solver = small_solver(n, m, StepMode::default(), Sampling::EndpointNodal)?;
                let oracle = DenseOracle::new(&solver)?;
                for _ in 0..3 {
                    worst = worst.max(oracle_discrepancy(
                        &solver,
                        &oracle,
                        &random_instance(&solver, &mut rng),
                    )?);
                }
            }
        }
        Ok((
            worst <= 1e-10,
            format!("max relative difference {worst:.3e}"),
        ))
    }));
    out.push(check("duality identity", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 2);
        let solver = small_solver(4, 4, StepMode::default(), Sampling::EndpointNodal)?;
        let worst = (0..10)
            .map(|_| duality_defect(&solver, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let worst = worst.into_iter().fold(0.0, f64::max);
        Ok((worst <= 1e-9, format!("max relative defect {worst:.3e}")))
    }));
    for sampling in [Sampling::EndpointNodal, Sampling::IntervalAverage] {
        out.push(check(
            &format!("reduced gradient vs finite differences ({sampling:?})"),
            || {
                let mut rng = ChaCha8Rng::seed_from_u64(seed + 3);
                let solver = Arc::new(small_solver(4, 4, StepMode::default(), sampling)?);
                let problem = random_control_problem(solver, &mut rng)?;
                let mut worst: f64 = 0.0;
                for _ in 0..3 {
                    worst = worst.max(gradient_fd_defect(&problem, &mut rng)?);
                }
                Ok((worst <= 1e-6, format!("max defect {worst:.3e}")))
            },
        ));
    }
    out.push(check("Hessian symmetry and coercivity", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 4);
        let solver = Arc::new(small_solver(
            4,
            4,
            StepMode::default(),
            Sampling::EndpointNodal,
        )?);
        let problem = random_control_problem(solver, &mut rng)?;
        let (asym, margin) = hessian_defects(&problem, &mut rng)?;
        Ok((
            asym <= 1e-9 && margin >= -1e-12,
            format!("asymmetry {asym:.3e}, coercivity margin {margin:.3e}"),
        ))
    }));
    out.push(check("stability and contraction on random data", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 5);
        let solver = small_solver(8, 6, StepMode::default(), Sampling::EndpointNodal)?;
        let inst = random_instance(&solver, &mut rng);
        let ode: Vec<Vec<f64>> = inst
            .ode
            .iter()
            .map(|v| v.iter().map(|x| x / 6.0).collect())
            .collect();
        let st = solver.solve_state_loads(inst.loads, inst.d_init, ode)?;
        let slack = solver.stability_report(&st)?.min_slack();
        let excess = st
            .contraction
            .iter()
            .map(|r| r.max_ratio - r.bound)
            .fold(f64::NEG_INFINITY, f64::max);
        Ok((
            slack >= -1e-10 && excess <= 1e-8,
            format!("min slack {slack:.3e}, max ratio excess {excess:.3e}"),
        ))
    }));
    out
}
