//! Geometric multigrid V-cycle for operators a·K + c·M on the Dirichlet P1
//! space of the uniform unit-square meshes.
//!
//! Halving n produces a nested mesh with the same diagonal orientation, so the
//! coarse P1 space is a subspace of the fine one and re-assembling on the
//! coarse mesh gives exactly the Galerkin operator Pᵀ A P. The cycle uses one
//! forward Gauss–Seidel sweep before and one backward sweep after the coarse
//! correction, which makes it a symmetric positive definite preconditioner.

use crate::fem::{assemble_mass, assemble_stiffness};
use crate::linalg::{DenseMatrix, Preconditioner};
use crate::mesh::{build_unit_square_mesh, FeSpace, SpaceKind};
use crate::sparse::CsrMatrix;
use crate::Result;

/// Coarse problems larger than this are not factored densely.
const MAX_COARSE_DOFS: usize = 1600;

struct Level {
    n: usize,
    a: CsrMatrix,
}

pub struct MultigridHierarchy {
    levels: Vec<Level>,
    coarse: DenseMatrix,
    sweeps: usize,
}

fn dirichlet_operator(n: usize, a: f64, c: f64) -> Result<CsrMatrix> {
    let mesh = build_unit_square_mesh(n)?;
    let v = FeSpace::new(&mesh, SpaceKind::DirichletP1);
    let k = assemble_stiffness(&mesh, &v)?;
    let m = assemble_mass(&mesh, &v, &v)?;
    k.linear_combination(a, &m, c)
}

impl MultigridHierarchy {
    /// Hierarchy for `a·K + c·M` on the n×n mesh, with `fine` the already
    /// assembled finest operator. Returns `Ok(None)` when n does not coarsen to
    /// a problem small enough for a direct solve.
    pub fn new(fine: &CsrMatrix, n: usize, a: f64, c: f64) -> Result<Option<Self>> {
        let mut sizes = vec![n];
        let mut m = n;
        while m % 2 == 0 && m >= 4 && (m - 1) * (m - 1) > 9 {
            m /= 2;
            sizes.push(m);
        }
        let coarse_n = *sizes.last().unwrap();
        if (coarse_n.saturating_sub(1)).pow(2) > MAX_COARSE_DOFS || coarse_n < 2 {
            return Ok(None);
        }
        let mut levels = vec![Level { n, a: fine.clone() }];
        for &nk in &sizes[1..] {
            levels.push(Level {
                n: nk,
                a: dirichlet_operator(nk, a, c)?,
            });
        }
        let coarse = match DenseMatrix::from(&levels.last().unwrap().a).cholesky() {
            Some(l) => l,
            None => return Ok(None),
        };
        Ok(Some(MultigridHierarchy {
            levels,
            coarse,
            sweeps: 1,
        }))
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    fn vcycle(&self, k: usize, r: &[f64], z: &mut [f64]) {
        if k + 1 == self.levels.len() {
            z.copy_from_slice(&self.coarse.cholesky_solve(r));
            return;
        }
        let level = &self.levels[k];
        z.iter_mut().for_each(|v| *v = 0.0);
        for _ in 0..self.sweeps {
            gauss_seidel(&level.a, r, z, false);
        }
        let az = level.a.mul_vec(z);
        let res: Vec<f64> = r.iter().zip(&az).map(|(a, b)| a - b).collect();
        let nc = self.levels[k + 1].n;
        let rc = restrict(&res, level.n, nc);
        let mut zc = vec![0.0; rc.len()];
        self.vcycle(k + 1, &rc, &mut zc);
        prolongate_add(&zc, nc, level.n, z);
        for _ in 0..self.sweeps {
            gauss_seidel(&level.a, r, z, true);
        }
    }
}

impl Preconditioner for MultigridHierarchy {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        self.vcycle(0, r, z);
    }
}

fn gauss_seidel(a: &CsrMatrix, b: &[f64], x: &mut [f64], backward: bool) {
    let n = a.nrows();
    let mut step = |i: usize| {
        let (cols, vals) = a.row(i);
        let mut s = b[i];
        let mut d = 0.0;
        for (&j, &v) in cols.iter().zip(vals) {
            if j == i {
                d = v;
            } else {
                s -= v * x[j];
            }
        }
        x[i] = s / d;
    };
    if backward {
        (0..n).rev().for_each(&mut step);
    } else {
        (0..n).for_each(&mut step);
    }
}

/// Interior index of grid node (i, j) on an n×n mesh, or None on the boundary.
#[inline]
fn interior(i: usize, j: usize, n: usize) -> Option<usize> {
    if i == 0 || j == 0 || i >= n || j >= n {
        None
    } else {
        Some((j - 1) * (n - 1) + (i - 1))
    }
}

/// Coarse nodes (with weights) that a fine node interpolates from.
#[inline]
fn parents(i: usize, j: usize) -> [((usize, usize), f64); 2] {
    match (i % 2, j % 2) {
        (0, 0) => [((i / 2, j / 2), 1.0), ((0, 0), 0.0)],
        (1, 0) => [(((i - 1) / 2, j / 2), 0.5), (((i + 1) / 2, j / 2), 0.5)],
        (0, 1) => [((i / 2, (j - 1) / 2), 0.5), ((i / 2, (j + 1) / 2), 0.5)],
        // cell centre lies on the lower-left to upper-right diagonal
        _ => [
            (((i - 1) / 2, (j - 1) / 2), 0.5),
            (((i + 1) / 2, (j + 1) / 2), 0.5),
        ],
    }
}

fn prolongate_add(coarse: &[f64], nc: usize, nf: usize, fine: &mut [f64]) {
    for j in 1..nf {
        for i in 1..nf {
            let f = interior(i, j, nf).unwrap();
            for ((ci, cj), w) in parents(i, j) {
                if w != 0.0 {
                    if let Some(c) = interior(ci, cj, nc) {
                        fine[f] += w * coarse[c];
                    }
                }
            }
        }
    }
}

fn restrict(fine: &[f64], nf: usize, nc: usize) -> Vec<f64> {
    let mut out = vec![0.0; (nc - 1) * (nc - 1)];
    for j in 1..nf {
        for i in 1..nf {
            let f = interior(i, j, nf).unwrap();
            for ((ci, cj), w) in parents(i, j) {
                if w != 0.0 {
                    if let Some(c) = interior(ci, cj, nc) {
                        out[c] += w * fine[f];
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::FeContext;
    use crate::linalg::{pcg_solve, pcg_solve_with, Jacobi, PreconditionerKind, SolverConfig};

    #[test]
    fn prolongation_reproduces_linear_functions() {
        // a linear function interpolated on the coarse grid prolongs exactly
        let (nc, nf) = (4, 8);
        let lin = |x: f64, y: f64| 2.0 * x + 3.0 * y;
        let mut coarse = vec![0.0; (nc - 1) * (nc - 1)];
        for j in 1..nc {
            for i in 1..nc {
                coarse[interior(i, j, nc).unwrap()] =
                    lin(i as f64 / nc as f64, j as f64 / nc as f64);
            }
        }
        let mut fine = vec![0.0; (nf - 1) * (nf - 1)];
        prolongate_add(&coarse, nc, nf, &mut fine);
        // nodes whose parents are all interior reproduce the linear function
        for j in 2..nf - 1 {
            for i in 2..nf - 1 {
                let v = fine[interior(i, j, nf).unwrap()];
                assert!((v - lin(i as f64 / nf as f64, j as f64 / nf as f64)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn rediscretization_is_galerkin() {
        // Pᵀ A_f P == A_c for nested P1 spaces
        let (nc, nf) = (4, 8);
        let af = dirichlet_operator(nf, 1.0, 3.0).unwrap();
        let ac = dirichlet_operator(nc, 1.0, 3.0).unwrap();
        let dim = (nc - 1) * (nc - 1);
        for col in 0..dim {
            let mut e = vec![0.0; dim];
            e[col] = 1.0;
            let mut pe = vec![0.0; (nf - 1) * (nf - 1)];
            prolongate_add(&e, nc, nf, &mut pe);
            let ape = af.mul_vec(&pe);
            let g = restrict(&ape, nf, nc);
            for row in 0..dim {
                assert!((g[row] - ac.get(row, col)).abs() < 1e-12, "({row},{col})");
            }
        }
    }

    #[test]
    fn multigrid_pcg_beats_jacobi() {
        let ctx = FeContext::new(64).unwrap();
        let a = ctx
            .stiff_v
            .linear_combination(1.0, &ctx.mass_v, 1.0)
            .unwrap();
        let mg = MultigridHierarchy::new(&a, 64, 1.0, 1.0).unwrap().unwrap();
        assert!(mg.depth() >= 4);
        let b = ctx.load(SpaceKind::DirichletP1, |x, y| (x * 7.0).sin() + y);
        let cfg = SolverConfig::default();
        let with_mg = pcg_solve_with(&a, &b, None, &cfg, &mg).unwrap();
        let with_jacobi = pcg_solve_with(&a, &b, None, &cfg, &Jacobi::new(&a)).unwrap();
        assert!(
            with_mg.iters * 4 < with_jacobi.iters,
            "{} vs {}",
            with_mg.iters,
            with_jacobi.iters
        );
        for (x, y) in with_mg.x.iter().zip(&with_jacobi.x) {
            assert!((x - y).abs() < 1e-10);
        }
        let plain = pcg_solve(
            &a,
            &b,
            &SolverConfig {
                preconditioner: PreconditionerKind::None,
                ..cfg
            },
        )
        .unwrap();
        assert!(with_jacobi.iters <= plain.iters);
    }

    #[test]
    fn odd_sizes_fall_back() {
        let a = dirichlet_operator(81, 1.0, 1.0).unwrap();
        assert!(MultigridHierarchy::new(&a, 81, 1.0, 1.0).unwrap().is_none());
        let a = dirichlet_operator(3, 1.0, 1.0).unwrap();
        assert!(MultigridHierarchy::new(&a, 3, 1.0, 1.0).unwrap().is_some());
    }
}
