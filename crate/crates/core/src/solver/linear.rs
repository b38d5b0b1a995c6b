//! Sparse linear solvers: restarted GMRES with ILU(0) or Jacobi
//! preconditioning, preconditioned conjugate gradients for SPD systems, and a
//! sparse direct LU fallback.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use serde::{Deserialize, Serialize};

use crate::error::SolverError;
use crate::sparse::{axpy, dot, norm2, CsrMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preconditioner {
    #[default]
    Ilu0,
    Jacobi,
    /// Sparse LU factorization; the Krylov loop is skipped.
    Direct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub restart: usize,
    pub preconditioner: Preconditioner,
    /// Systems up to this many unknowns fall back to the direct solver
    /// when the Krylov iteration fails. Zero disables the fallback.
    pub direct_fallback_max_dofs: usize,
}

impl Default for LinearConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-5,
            max_iterations: 2000,
            restart: 60,
            preconditioner: Preconditioner::Ilu0,
            direct_fallback_max_dofs: 20_000,
        }
    }
}

impl LinearConfig {
    pub fn direct() -> Self {
        Self {
            preconditioner: Preconditioner::Direct,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.tolerance > 0.0 && self.tolerance < 1.0) {
            return Err(SolverError::Breakdown(format!(
                "linear tolerance must lie in (0, 1), got {}",
                self.tolerance
            )));
        }
        if self.restart == 0 || self.max_iterations == 0 {
            return Err(SolverError::Breakdown(
                "restart length and iteration cap must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// `||A x - b|| / ||b||`, recomputed from the returned solution.
    pub relative_residual: f64,
}

/// Incomplete LU factorization with the sparsity pattern of `A`.
#[derive(Debug, Clone)]
pub struct Ilu0 {
    lu: CsrMatrix,
    diag: Vec<usize>,
}

impl Ilu0 {
    pub fn new(a: &CsrMatrix) -> Result<Self, SolverError> {
        let mut lu = a.clone();
        let n = lu.n;
        let mut diag = Vec::with_capacity(n);
        for i in 0..n {
            diag.push(
                lu.position(i, i)
                    .ok_or_else(|| SolverError::Breakdown(format!("ILU(0): row {i} has no diagonal entry")))?,
            );
        }
        for i in 0..n {
            let end = lu.row_ptr[i + 1];
            for kk in lu.row_ptr[i]..diag[i] {
                let k = lu.col_idx[kk];
                let pivot = lu.values[diag[k]];
                if pivot == 0.0 {
                    return Err(SolverError::Breakdown(format!("ILU(0): zero pivot in row {k}")));
                }
                let l = lu.values[kk] / pivot;
                lu.values[kk] = l;
                // row_i[j] -= l * row_k[j] for j > k present in both rows
                let mut pk = diag[k] + 1;
                let k_end = lu.row_ptr[k + 1];
                let mut pi = kk + 1;
                while pi < end && pk < k_end {
                    let (ci, ck) = (lu.col_idx[pi], lu.col_idx[pk]);
                    if ci == ck {
                        lu.values[pi] -= l * lu.values[pk];
                        pi += 1;
                        pk += 1;
                    } else if ci < ck {
                        pi += 1;
                    } else {
                        pk += 1;
                    }
                }
            }
            if lu.values[diag[i]] == 0.0 {
                return Err(SolverError::Breakdown(format!("ILU(0): zero pivot in row {i}")));
            }
        }
        Ok(Self { lu, diag })
    }

    /// `z = (LU)^-1 r`
    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        let lu = &self.lu;
        for i in 0..lu.n {
            let mut s = r[i];
            for k in lu.row_ptr[i]..self.diag[i] {
                s -= lu.values[k] * z[lu.col_idx[k]];
            }
            z[i] = s;
        }
        for i in (0..lu.n).rev() {
            let mut s = z[i];
            for k in self.diag[i] + 1..lu.row_ptr[i + 1] {
                s -= lu.values[k] * z[lu.col_idx[k]];
            }
            z[i] = s / lu.values[self.diag[i]];
        }
    }
}

enum Precond {
    Ilu(Ilu0),
    Jacobi(Vec<f64>),
}

impl Precond {
    fn build(a: &CsrMatrix, kind: Preconditioner) -> Result<Self, SolverError> {
        match kind {
            Preconditioner::Jacobi => Ok(Precond::Jacobi(jacobi_inverse(a)?)),
            _ => Ok(Precond::Ilu(Ilu0::new(a)?)),
        }
    }

    fn apply(&self, r: &[f64], z: &mut [f64]) {
        match self {
            Precond::Ilu(ilu) => ilu.apply(r, z),
            Precond::Jacobi(d) => {
                for ((zi, ri), di) in z.iter_mut().zip(r).zip(d) {
                    *zi = ri * di;
                }
            }
        }
    }
}

fn jacobi_inverse(a: &CsrMatrix) -> Result<Vec<f64>, SolverError> {
    (0..a.n)
        .map(|i| {
            let d = a.get(i, i);
            if d == 0.0 {
                Err(SolverError::Breakdown(format!("zero diagonal in row {i}")))
            } else {
                Ok(1.0 / d)
            }
        })
        .collect()
}

fn relative_residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
    let mut r = a.mul(x);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let bn = norm2(b);
    if bn == 0.0 {
        norm2(&r)
    } else {
        norm2(&r) / bn
    }
}

/// Right-preconditioned restarted GMRES from a zero initial guess.
fn gmres(a: &CsrMatrix, b: &[f64], m: &Precond, cfg: &LinearConfig) -> Result<LinearSolution, SolverError> {
    let n = a.n;
    let bn = norm2(b);
    if bn == 0.0 {
        return Ok(LinearSolution {
            x: vec![0.0; n],
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let target = cfg.tolerance * bn;
    let restart = cfg.restart.min(n.max(1));
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut iterations = 0;
    let mut v: Vec<Vec<f64>> = vec![vec![0.0; n]; restart + 1];
    let mut z = vec![0.0; n];
    let mut h = vec![vec![0.0; restart]; restart + 1];
    let (mut cs, mut sn, mut g) = (vec![0.0; restart], vec![0.0; restart], vec![0.0; restart + 1]);

    loop {
        let beta = norm2(&r);
        if beta <= target {
            break;
        }
        if iterations >= cfg.max_iterations {
            return Err(SolverError::LinearNotConverged {
                iterations,
                relative_residual: beta / bn,
            });
        }
        for (vi, ri) in v[0].iter_mut().zip(&r) {
            *vi = ri / beta;
        }
        g.iter_mut().for_each(|x| *x = 0.0);
        g[0] = beta;
        let mut k = 0;
        while k < restart && iterations < cfg.max_iterations {
            m.apply(&v[k], &mut z);
            let (head, tail) = v.split_at_mut(k + 1);
            let w = &mut tail[0];
            a.matvec(&z, w);
            // modified Gram-Schmidt
            for (j, vj) in head.iter().enumerate() {
                let hj = dot(w, vj);
                h[j][k] = hj;
                axpy(-hj, vj, w);
            }
            let hn = norm2(w);
            h[k + 1][k] = hn;
            if hn > 0.0 {
                w.iter_mut().for_each(|x| *x /= hn);
            }
            for j in 0..k {
                let t = cs[j] * h[j][k] + sn[j] * h[j + 1][k];
                h[j + 1][k] = -sn[j] * h[j][k] + cs[j] * h[j + 1][k];
                h[j][k] = t;
            }
            let d = h[k][k].hypot(h[k + 1][k]);
            if d == 0.0 {
                return Err(SolverError::Breakdown("GMRES: singular Hessenberg matrix".into()));
            }
            cs[k] = h[k][k] / d;
            sn[k] = h[k + 1][k] / d;
            h[k][k] = d;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k += 1;
            iterations += 1;
            if g[k].abs() <= target || hn == 0.0 {
                break;
            }
        }
        // back substitution for the Krylov coefficients
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let s: f64 = (i + 1..k).map(|j| h[i][j] * y[j]).sum();
            y[i] = (g[i] - s) / h[i][i];
        }
        let mut update = vec![0.0; n];
        for (yi, vi) in y.iter().zip(&v) {
            axpy(*yi, vi, &mut update);
        }
        m.apply(&update, &mut z);
        axpy(1.0, &z, &mut x);
        a.matvec(&x, &mut r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        if !norm2(&r).is_finite() {
            return Err(SolverError::Breakdown("GMRES: non-finite residual".into()));
        }
    }
    let relative_residual = norm2(&r) / bn;
    Ok(LinearSolution {
        x,
        iterations,
        relative_residual,
    })
}

/// Jacobi-preconditioned conjugate gradients for symmetric positive-definite systems.
pub fn conjugate_gradient(
    a: &CsrMatrix,
    b: &[f64],
    tolerance: f64,
    max_iterations: usize,
) -> Result<LinearSolution, SolverError> {
    let n = a.n;
    let dinv = jacobi_inverse(a)?;
    let bn = norm2(b);
    let mut x = vec![0.0; n];
    if bn == 0.0 {
        return Ok(LinearSolution {
            x,
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&dinv).map(|(a, b)| a * b).collect();
    let mut p = z.clone();
    let mut q = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut iterations = 0;
    while norm2(&r) > tolerance * bn {
        if iterations >= max_iterations {
            return Err(SolverError::LinearNotConverged {
                iterations,
                relative_residual: norm2(&r) / bn,
            });
        }
        a.matvec(&p, &mut q);
        let pq = dot(&p, &q);
        if pq <= 0.0 {
            return Err(SolverError::Breakdown("CG: matrix is not positive definite".into()));
        }
        let step = rz / pq;
        axpy(step, &p, &mut x);
        axpy(-step, &q, &mut r);
        for ((zi, ri), di) in z.iter_mut().zip(&r).zip(&dinv) {
            *zi = ri * di;
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
        iterations += 1;
    }
    let relative_residual = relative_residual(a, &x, b);
    Ok(LinearSolution {
        x,
        iterations,
        relative_residual,
    })
}

/// Sparse LU of a CSR matrix. CSR storage of `A` is CSC storage of `A^T`,
/// so solves with `A` use faer's transposed solve.
pub struct DirectLu {
    lu: Lu<usize, f64>,
    n: usize,
}

impl DirectLu {
    pub fn new(a: &CsrMatrix) -> Result<Self, SolverError> {
        let sym = SymbolicSparseColMatRef::new_checked(a.n, a.n, &a.row_ptr, None, &a.col_idx);
        let symbolic =
            SymbolicLu::try_new(sym).map_err(|e| SolverError::Breakdown(format!("symbolic LU failed: {e:?}")))?;
        Self::with_symbolic(a, &symbolic)
    }

    fn with_symbolic(a: &CsrMatrix, symbolic: &SymbolicLu<usize>) -> Result<Self, SolverError> {
        let sym = SymbolicSparseColMatRef::new_checked(a.n, a.n, &a.row_ptr, None, &a.col_idx);
        let mat = SparseColMatRef::new(sym, &a.values);
        let lu = Lu::try_new_with_symbolic(symbolic.clone(), mat)
            .map_err(|e| SolverError::Breakdown(format!("LU factorization failed: {e:?}")))?;
        Ok(Self { lu, n: a.n })
    }

    fn solve_impl(&self, b: &[f64], transpose: bool) -> Vec<f64> {
        let mut rhs = faer::Mat::<f64>::from_fn(self.n, 1, |i, _| b[i]);
        if transpose {
            self.lu.solve_in_place(rhs.as_mut());
        } else {
            self.lu.solve_transpose_in_place(rhs.as_mut());
        }
        (0..self.n).map(|i| rhs[(i, 0)]).collect()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.solve_impl(b, false)
    }

    pub fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        self.solve_impl(b, true)
    }
}

/// Linear solver bound to one configuration. Keeps the symbolic LU between
/// calls since every system of a run shares one sparsity pattern.
pub struct LinearSolver {
    pub config: LinearConfig,
    symbolic: Option<(usize, usize, SymbolicLu<usize>)>,
}

impl LinearSolver {
    pub fn new(config: LinearConfig) -> Self {
        Self { config, symbolic: None }
    }

    fn direct(&mut self, a: &CsrMatrix) -> Result<DirectLu, SolverError> {
        let key = (a.n, a.nnz());
        match &self.symbolic {
            Some((n, nnz, s)) if (*n, *nnz) == key => DirectLu::with_symbolic(a, s),
            _ => {
                let sym = SymbolicSparseColMatRef::new_checked(a.n, a.n, &a.row_ptr, None, &a.col_idx);
                let s = SymbolicLu::try_new(sym)
                    .map_err(|e| SolverError::Breakdown(format!("symbolic LU failed: {e:?}")))?;
                let lu = DirectLu::with_symbolic(a, &s)?;
                self.symbolic = Some((key.0, key.1, s));
                Ok(lu)
            }
        }
    }

    fn solve_direct(&mut self, a: &CsrMatrix, b: &[f64], transpose: bool) -> Result<LinearSolution, SolverError> {
        let lu = self.direct(a)?;
        let x = if transpose { lu.solve_transpose(b) } else { lu.solve(b) };
        let check = if transpose {
            relative_residual(&a.transpose(), &x, b)
        } else {
            relative_residual(a, &x, b)
        };
        if !check.is_finite() {
            return Err(SolverError::Breakdown(
                "direct solve produced a non-finite result".into(),
            ));
        }
        Ok(LinearSolution {
            x,
            iterations: 1,
            relative_residual: check,
        })
    }

    pub fn solve(&mut self, a: &CsrMatrix, b: &[f64]) -> Result<LinearSolution, SolverError> {
        self.solve_with(a, b, false)
    }

    /// Solves `A^T x = b`.
    pub fn solve_transpose(&mut self, a: &CsrMatrix, b: &[f64]) -> Result<LinearSolution, SolverError> {
        self.solve_with(a, b, true)
    }

    fn solve_with(&mut self, a: &CsrMatrix, b: &[f64], transpose: bool) -> Result<LinearSolution, SolverError> {
        self.config.validate()?;
        if b.len() != a.n {
            return Err(SolverError::Breakdown(format!(
                "right-hand side has length {}, matrix has {} rows",
                b.len(),
                a.n
            )));
        }
        if self.config.preconditioner == Preconditioner::Direct {
            return self.solve_direct(a, b, transpose);
        }
        let at;
        let op = if transpose {
            at = a.transpose();
            &at
        } else {
            a
        };
        let krylov = Precond::build(op, self.config.preconditioner).and_then(|m| gmres(op, b, &m, &self.config));
        match krylov {
            Ok(sol) => Ok(sol),
            Err(e) if a.n <= self.config.direct_fallback_max_dofs => {
                log::debug!("Krylov solve failed ({e}); using the direct fallback");
                let mut sol = self.solve_direct(a, b, transpose)?;
                sol.iterations = self.config.max_iterations;
                Ok(sol)
            }
            Err(e) => Err(e),
        }
    }
}

pub fn linear_solve(a: &CsrMatrix, b: &[f64], cfg: &LinearConfig) -> Result<LinearSolution, SolverError> {
    LinearSolver::new(cfg.clone()).solve(a, b)
}
