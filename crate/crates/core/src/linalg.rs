//! Preconditioned conjugate gradients and a dense LU oracle.

use crate::par::{axpy, dot, norm2};
use crate::sparse::CsrMatrix;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PreconditionerKind {
    None,
    Jacobi,
    /// Geometric multigrid V-cycle; only available for elliptic operators on
    /// nested uniform meshes (see [`crate::multigrid`]). Falls back to Jacobi
    /// where no hierarchy exists.
    Multigrid,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// `None` means 10·√dofs + 100.
    pub max_iter: Option<usize>,
    pub preconditioner: PreconditionerKind,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            rel_tol: 1e-12,
            abs_tol: 1e-14,
            max_iter: None,
            preconditioner: PreconditionerKind::Jacobi,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) || !(self.abs_tol > 0.0) {
            return Err(Error::InvalidArgument(
                "solver tolerances must be positive".into(),
            ));
        }
        if self.max_iter == Some(0) {
            return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
        }
        Ok(())
    }

    pub fn iteration_cap(&self, dofs: usize) -> usize {
        self.max_iter
            .unwrap_or_else(|| 10 * (dofs as f64).sqrt().ceil() as usize + 100)
    }
}

/// Symmetric positive definite approximation of A⁻¹.
pub trait Preconditioner: Send + Sync {
    fn apply(&self, r: &[f64], z: &mut [f64]);
}

pub struct Identity;

impl Preconditioner for Identity {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
    }
}

pub struct Jacobi {
    inv_diag: Vec<f64>,
}

impl Jacobi {
    pub fn new(a: &CsrMatrix) -> Self {
        Jacobi {
            inv_diag: a
                .diagonal()
                .into_iter()
                .map(|d| if d != 0.0 { 1.0 / d } else { 1.0 })
                .collect(),
        }
    }
}

impl Preconditioner for Jacobi {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        for ((zi, ri), di) in z.iter_mut().zip(r).zip(&self.inv_diag) {
            *zi = ri * di;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcgOutcome {
    pub x: Vec<f64>,
    pub iters: usize,
    /// Euclidean norm of b - A x at exit.
    pub residual: f64,
}

/// Solves A x = b for SPD A, stopping once ‖b - A x‖ ≤ max(rel_tol·‖b‖, abs_tol).
pub fn pcg_solve(a: &CsrMatrix, b: &[f64], cfg: &SolverConfig) -> Result<PcgOutcome> {
    match cfg.preconditioner {
        PreconditionerKind::None => pcg_solve_with(a, b, None, cfg, &Identity),
        PreconditionerKind::Jacobi | PreconditionerKind::Multigrid => {
            pcg_solve_with(a, b, None, cfg, &Jacobi::new(a))
        }
    }
}

pub fn pcg_solve_with(
    a: &CsrMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    cfg: &SolverConfig,
    precond: &dyn Preconditioner,
) -> Result<PcgOutcome> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: a.ncols(),
        });
    }
    if b.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: b.len(),
        });
    }
    cfg.validate()?;
    let b_norm = norm2(b);
    let mut x = match x0 {
        Some(x0) if x0.len() == n => x0.to_vec(),
        Some(x0) => {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: x0.len(),
            })
        }
        None => vec![0.0; n],
    };
    if b_norm == 0.0 {
        return Ok(PcgOutcome {
            x: vec![0.0; n],
            iters: 0,
            residual: 0.0,
        });
    }
    let target = (cfg.rel_tol * b_norm).max(cfg.abs_tol);
    let cap = cfg.iteration_cap(n);

    let mut r = vec![0.0; n];
    let mut q = vec![0.0; n];
    let mut z = vec![0.0; n];
    let true_residual = |x: &[f64], r: &mut [f64], q: &mut [f64]| {
        a.mul_vec_into(x, q);
        for i in 0..n {
            r[i] = b[i] - q[i];
        }
        norm2(r)
    };
    let mut res = true_residual(&x, &mut r, &mut q);
    let mut iters = 0;
    // outer loop restarts from the true residual if the recursive one drifted
    loop {
        if res <= target {
            return Ok(PcgOutcome {
                x,
                iters,
                residual: res,
            });
        }
        precond.apply(&r, &mut z);
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        while iters < cap {
            a.mul_vec_into(&p, &mut q);
            let pq = dot(&p, &q);
            if !(pq > 0.0) {
                break;
            }
            let alpha = rz / pq;
            axpy(alpha, &p, &mut x);
            axpy(-alpha, &q, &mut r);
            iters += 1;
            if norm2(&r) <= target {
                break;
            }
            precond.apply(&r, &mut z);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for (pi, zi) in p.iter_mut().zip(&z) {
                *pi = zi + beta * *pi;
            }
        }
        let new_res = true_residual(&x, &mut r, &mut q);
        if new_res <= target {
            return Ok(PcgOutcome {
                x,
                iters,
                residual: new_res,
            });
        }
        if iters >= cap || new_res >= res {
            return Err(Error::NonConvergence {
                iters,
                residual: new_res,
            });
        }
        res = new_res;
    }
}

/// Row-major dense matrix for small oracle computations.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n: usize,
    m: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize, m: usize) -> Self {
        DenseMatrix {
            n,
            m,
            data: vec![0.0; n * m],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != m) {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: bad.len(),
            });
        }
        Ok(DenseMatrix {
            n,
            m,
            data: rows.concat(),
        })
    }

    pub fn nrows(&self) -> usize {
        self.n
    }

    pub fn ncols(&self) -> usize {
        self.m
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.m + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.m + j] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.m + j] += v;
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                self.data[i * self.m..(i + 1) * self.m]
                    .iter()
                    .zip(x)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = DenseMatrix::zeros(self.m, self.n);
        for i in 0..self.n {
            for j in 0..self.m {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Lower Cholesky factor; `None` if the matrix is not positive definite.
    pub fn cholesky(&self) -> Option<DenseMatrix> {
        if self.n != self.m {
            return None;
        }
        let n = self.n;
        let mut l = DenseMatrix::zeros(n, n);
        for j in 0..n {
            let mut s = self.get(j, j);
            for k in 0..j {
                s -= l.get(j, k) * l.get(j, k);
            }
            if !(s > 0.0) {
                return None;
            }
            let d = s.sqrt();
            l.set(j, j, d);
            for i in j + 1..n {
                let mut s = self.get(i, j);
                for k in 0..j {
                    s -= l.get(i, k) * l.get(j, k);
                }
                l.set(i, j, s / d);
            }
        }
        Some(l)
    }

    /// Solves L Lᵀ x = b with `self` the lower factor.
    pub fn cholesky_solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = b.to_vec();
        for i in 0..n {
            for k in 0..i {
                y[i] -= self.get(i, k) * y[k];
            }
            y[i] /= self.get(i, i);
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                y[i] -= self.get(k, i) * y[k];
            }
            y[i] /= self.get(i, i);
        }
        y
    }
}

impl From<&CsrMatrix> for DenseMatrix {
    fn from(a: &CsrMatrix) -> Self {
        DenseMatrix::from_rows(&a.to_dense()).expect("CSR rows have equal length")
    }
}

pub const DENSE_SOLVE_MAX_DIM: usize = 2000;

/// Gaussian elimination with partial pivoting.
pub fn dense_solve(a: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::InvalidArgument(format!(
            "dense_solve needs a square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    if n > DENSE_SOLVE_MAX_DIM {
        return Err(Error::InvalidArgument(format!(
            "dense_solve is limited to dimension {DENSE_SOLVE_MAX_DIM}, got {n}"
        )));
    }
    if b.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: b.len(),
        });
    }
    let threshold = 1e-14 * a.max_abs();
    let mut lu = a.clone();
    let mut x = b.to_vec();
    for col in 0..n {
        let (piv, pval) =
            (col..n)
                .map(|r| (r, lu.get(r, col).abs()))
                .fold(
                    (col, -1.0),
                    |best, cur| if cur.1 > best.1 { cur } else { best },
                );
        if pval <= threshold {
            return Err(Error::SingularMatrix {
                pivot: pval,
                column: col,
            });
        }
        if piv != col {
            for j in 0..n {
                let tmp = lu.get(col, j);
                lu.set(col, j, lu.get(piv, j));
                lu.set(piv, j, tmp);
            }
            x.swap(col, piv);
        }
        let d = lu.get(col, col);
        for r in col + 1..n {
            let f = lu.get(r, col) / d;
            if f != 0.0 {
                for j in col..n {
                    let v = lu.get(r, j) - f * lu.get(col, j);
                    lu.set(r, j, v);
                }
                x[r] -= f * x[col];
            }
        }
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for j in i + 1..n {
            s -= lu.get(i, j) * x[j];
        }
        x[i] = s / lu.get(i, i);
    }
    Ok(x)
}
