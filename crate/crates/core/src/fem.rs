//! P1 assembly on [`Mesh`]es: mass, stiffness, loads, projections.

use crate::linalg::{pcg_solve, PreconditionerKind, SolverConfig};
use crate::mesh::{build_unit_square_mesh, FeSpace, Mesh, SpaceKind};
use crate::par;
use crate::quadrature::TriangleRule;
use crate::sparse::CsrMatrix;
use crate::{Error, Result};

/// Exact P1 element mass matrix (A/12)·[[2,1,1],[1,2,1],[1,1,2]].
pub fn element_mass(area: f64) -> [[f64; 3]; 3] {
    let d = area / 6.0;
    let o = area / 12.0;
    [[d, o, o], [o, d, o], [o, o, d]]
}

/// Exact P1 element stiffness matrix ∫ ∇λ_j·∇λ_i.
pub fn element_stiffness(v: &[[f64; 2]; 3]) -> [[f64; 3]; 3] {
    let area = 0.5
        * ((v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1]));
    let mut b = [0.0; 3];
    let mut c = [0.0; 3];
    for i in 0..3 {
        let j = (i + 1) % 3;
        let k = (i + 2) % 3;
        b[i] = v[j][1] - v[k][1];
        c[i] = v[k][0] - v[j][0];
    }
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (b[i] * b[j] + c[i] * c[j]) / (4.0 * area.abs());
        }
    }
    out
}

fn assemble_pairs<F>(mesh: &Mesh, trial: &FeSpace, test: &FeSpace, element: F) -> Result<CsrMatrix>
where
    F: Fn(usize) -> [[f64; 3]; 3] + Sync + Send,
{
    trial.check_mesh(mesh)?;
    test.check_mesh(mesh)?;
    let local = par::map_collect(mesh.triangle_count(), element);
    let mut trip = Vec::with_capacity(9 * local.len());
    for (t, ke) in mesh.triangles().iter().zip(&local) {
        for a in 0..3 {
            let Some(row) = test.dof_of_node(t[a]) else {
                continue;
            };
            for b in 0..3 {
                if let Some(col) = trial.dof_of_node(t[b]) {
                    trip.push((row, col, ke[a][b]));
                }
            }
        }
    }
    CsrMatrix::from_triplets(test.dof_count(), trial.dof_count(), trip)
}

/// Rows indexed by `test` dofs, columns by `trial` dofs: ∫ ψ_j ψ_i.
pub fn assemble_mass(mesh: &Mesh, trial: &FeSpace, test: &FeSpace) -> Result<CsrMatrix> {
    assemble_pairs(mesh, trial, test, |t| {
        element_mass(mesh.signed_area(t).abs())
    })
}

/// ∫ ∇ψ_j·∇ψ_i on one space.
pub fn assemble_stiffness(mesh: &Mesh, space: &FeSpace) -> Result<CsrMatrix> {
    assemble_pairs(mesh, space, space, |t| element_stiffness(&mesh.vertices(t)))
}

fn element_load<F>(mesh: &Mesh, rule: &TriangleRule, f: &F, t: usize) -> [f64; 3]
where
    F: Fn(f64, f64) -> f64,
{
    let v = mesh.vertices(t);
    let area = mesh.signed_area(t).abs();
    let mut out = [0.0; 3];
    for (lam, w) in rule.points.iter().zip(&rule.weights) {
        let x = lam[0] * v[0][0] + lam[1] * v[1][0] + lam[2] * v[2][0];
        let y = lam[0] * v[0][1] + lam[1] * v[1][1] + lam[2] * v[2][1];
        let fw = w * area * f(x, y);
        for k in 0..3 {
            out[k] += fw * lam[k];
        }
    }
    out
}

fn scatter_load(mesh: &Mesh, space: &FeSpace, local: &[[f64; 3]]) -> Vec<f64> {
    let mut out = vec![0.0; space.dof_count()];
    for (t, le) in mesh.triangles().iter().zip(local) {
        for a in 0..3 {
            if let Some(i) = space.dof_of_node(t[a]) {
                out[i] += le[a];
            }
        }
    }
    out
}

/// (f, ψ_i) by the degree-5 triangle rule.
pub fn assemble_load<F>(mesh: &Mesh, space: &FeSpace, f: F) -> Result<Vec<f64>>
where
    F: Fn(f64, f64) -> f64 + Sync + Send,
{
    assemble_load_with_rule(mesh, space, &TriangleRule::degree5(), f)
}

pub fn assemble_load_with_rule<F>(
    mesh: &Mesh,
    space: &FeSpace,
    rule: &TriangleRule,
    f: F,
) -> Result<Vec<f64>>
where
    F: Fn(f64, f64) -> f64 + Sync + Send,
{
    space.check_mesh(mesh)?;
    let local = par::map_collect(mesh.triangle_count(), |t| element_load(mesh, rule, &f, t));
    Ok(scatter_load(mesh, space, &local))
}

/// Sequential twin of [`assemble_load_with_rule`], kept for benchmarking.
pub fn assemble_load_serial<F>(
    mesh: &Mesh,
    space: &FeSpace,
    rule: &TriangleRule,
    f: F,
) -> Result<Vec<f64>>
where
    F: Fn(f64, f64) -> f64,
{
    space.check_mesh(mesh)?;
    let local: Vec<[f64; 3]> = (0..mesh.triangle_count())
        .map(|t| element_load(mesh, rule, &f, t))
        .collect();
    Ok(scatter_load(mesh, space, &local))
}

fn mass_solver_config() -> SolverConfig {
    SolverConfig {
        rel_tol: 1e-14,
        abs_tol: 1e-300,
        max_iter: Some(1000),
        preconditioner: PreconditionerKind::Jacobi,
    }
}

/// L² projection of `f` onto the space: solves M x = (f, ψ_i).
pub fn l2_project<F>(mesh: &Mesh, space: &FeSpace, f: F) -> Result<Vec<f64>>
where
    F: Fn(f64, f64) -> f64 + Sync + Send,
{
    let m = assemble_mass(mesh, space, space)?;
    let load = assemble_load(mesh, space, f)?;
    Ok(pcg_solve(&m, &load, &mass_solver_config())?.x)
}

/// uᵀ M v for two coefficient vectors of `space`.
pub fn l2_inner_space(mesh: &Mesh, space: &FeSpace, u: &[f64], v: &[f64]) -> Result<f64> {
    let m = assemble_mass(mesh, space, space)?;
    if u.len() != m.nrows() || v.len() != m.nrows() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            found: u.len().min(v.len()),
        });
    }
    Ok(m.bilinear(u, v))
}

/// Nodal interpolant: coefficients f(node) for each dof.
pub fn interpolate<F>(mesh: &Mesh, space: &FeSpace, f: F) -> Vec<f64>
where
    F: Fn(f64, f64) -> f64,
{
    (0..space.dof_count())
        .map(|k| {
            let p = mesh.nodes()[space.node_of_dof(k)];
            f(p[0], p[1])
        })
        .collect()
}

/// A mesh together with both P1 spaces and every matrix the solvers need,
/// assembled once and shared read-only.
///
/// FreeP1 dofs coincide with mesh nodes, so X-space coefficient vectors are
/// nodal vectors.
#[derive(Debug, Clone)]
pub struct FeContext {
    mesh: Mesh,
    v_space: FeSpace,
    x_space: FeSpace,
    /// V×V mass
    pub mass_v: CsrMatrix,
    /// rows V, columns X
    pub mass_vx: CsrMatrix,
    /// X×X mass
    pub mass_x: CsrMatrix,
    /// V×V stiffness
    pub stiff_v: CsrMatrix,
    rule: TriangleRule,
}

impl FeContext {
    pub fn new(n: usize) -> Result<Self> {
        Self::from_mesh(build_unit_square_mesh(n)?)
    }

    pub fn from_mesh(mesh: Mesh) -> Result<Self> {
        let v_space = FeSpace::new(&mesh, SpaceKind::DirichletP1);
        let x_space = FeSpace::new(&mesh, SpaceKind::FreeP1);
        let mass_v = assemble_mass(&mesh, &v_space, &v_space)?;
        let mass_vx = assemble_mass(&mesh, &x_space, &v_space)?;
        let mass_x = assemble_mass(&mesh, &x_space, &x_space)?;
        let stiff_v = assemble_stiffness(&mesh, &v_space)?;
        Ok(FeContext {
            mesh,
            v_space,
            x_space,
            mass_v,
            mass_vx,
            mass_x,
            stiff_v,
            rule: TriangleRule::degree5(),
        })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn n(&self) -> usize {
        self.mesh.n()
    }

    pub fn space(&self, kind: SpaceKind) -> &FeSpace {
        match kind {
            SpaceKind::DirichletP1 => &self.v_space,
            SpaceKind::FreeP1 => &self.x_space,
        }
    }

    pub fn v_dofs(&self) -> usize {
        self.v_space.dof_count()
    }

    pub fn x_dofs(&self) -> usize {
        self.x_space.dof_count()
    }

    pub fn mass(&self, kind: SpaceKind) -> &CsrMatrix {
        match kind {
            SpaceKind::DirichletP1 => &self.mass_v,
            SpaceKind::FreeP1 => &self.mass_x,
        }
    }

    pub fn rule(&self) -> &TriangleRule {
        &self.rule
    }

    /// V coefficients extended by zero to all nodes (the embedding V_h ⊂ X_h).
    pub fn embed(&self, v: &[f64]) -> Vec<f64> {
        self.v_space.to_nodal(v)
    }

    /// X coefficients at interior nodes.
    pub fn restrict(&self, x: &[f64]) -> Vec<f64> {
        self.v_space.from_nodal(x)
    }

    pub fn inner(&self, kind: SpaceKind, u: &[f64], v: &[f64]) -> f64 {
        self.mass(kind).bilinear(u, v)
    }

    pub fn norm(&self, kind: SpaceKind, u: &[f64]) -> f64 {
        self.inner(kind, u, u).max(0.0).sqrt()
    }

    /// Riesz representative of a load vector: solves M x = load.
    pub fn mass_solve(&self, kind: SpaceKind, load: &[f64]) -> Result<Vec<f64>> {
        Ok(pcg_solve(self.mass(kind), load, &mass_solver_config())?.x)
    }

    /// L² norm of the Riesz representative of a load, √(bᵀ M⁻¹ b).
    pub fn dual_norm(&self, kind: SpaceKind, load: &[f64]) -> Result<f64> {
        let x = self.mass_solve(kind, load)?;
        Ok(x.iter()
            .zip(load)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            .max(0.0)
            .sqrt())
    }

    pub fn load<F>(&self, kind: SpaceKind, f: F) -> Vec<f64>
    where
        F: Fn(f64, f64) -> f64 + Sync + Send,
    {
        assemble_load_with_rule(&self.mesh, self.space(kind), &self.rule, f)
            .expect("space built on this mesh")
    }

    pub fn project<F>(&self, kind: SpaceKind, f: F) -> Result<Vec<f64>>
    where
        F: Fn(f64, f64) -> f64 + Sync + Send,
    {
        self.mass_solve(kind, &self.load(kind, f))
    }

    pub fn interpolate<F>(&self, kind: SpaceKind, f: F) -> Vec<f64>
    where
        F: Fn(f64, f64) -> f64,
    {
        interpolate(&self.mesh, self.space(kind), f)
    }

    /// Evaluates a P1 function given by nodal values at (x, y).
    pub fn evaluate_nodal(&self, nodal: &[f64], x: f64, y: f64) -> Option<f64> {
        let (t, lam) = self.mesh.locate(x, y)?;
        let tri = self.mesh.triangles()[t];
        Some((0..3).map(|k| lam[k] * nodal[tri[k]]).sum())
    }
}
