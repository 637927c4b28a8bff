//! Linear solvers and eigenvalue iterations.
//!
//! Sparse factorizations are delegated to `faer`; small dense problems use
//! `nalgebra`. The conjugate-gradient and eigen-iterations are written out
//! here because their diagnostics (Ritz values, residuals) are reported.

use faer::linalg::solvers::Solve;
use faer::Side;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::sparse::{axpy, dot, norm2, OperatorMatrix};

fn to_col(x: &[f64]) -> faer::Col<f64> {
    faer::Col::from_fn(x.len(), |i| x[i])
}

fn from_col(c: &faer::Col<f64>) -> Vec<f64> {
    (0..c.nrows()).map(|i| c[i]).collect()
}

/// Sparse LU factorization with partial pivoting.
pub struct SparseLu {
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
    n: usize,
}

impl SparseLu {
    pub fn new(a: &OperatorMatrix) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::InvalidArgument("LU needs a square matrix".into()));
        }
        let lu = a
            .to_faer()
            .sp_lu()
            .map_err(|e| Error::SolverFailure(format!("sparse LU failed: {e:?}")))?;
        Ok(Self { lu, n: a.nrows() })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        from_col(&self.lu.solve(to_col(b)))
    }
}

/// Sparse Cholesky factorization of an SPD matrix.
pub struct SparseCholesky {
    llt: faer::sparse::linalg::solvers::Llt<usize, f64>,
    n: usize,
}

impl SparseCholesky {
    pub fn new(a: &OperatorMatrix) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::InvalidArgument("Cholesky needs a square matrix".into()));
        }
        let llt = a
            .to_faer()
            .sp_cholesky(Side::Lower)
            .map_err(|e| Error::SolverFailure(format!("sparse Cholesky failed (matrix not SPD?): {e:?}")))?;
        Ok(Self { llt, n: a.nrows() })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        from_col(&self.llt.solve(to_col(b)))
    }
}

/// Dense Cholesky with an error instead of `None` on failure.
pub fn dense_cholesky(a: &DMatrix<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    a.clone()
        .cholesky()
        .ok_or_else(|| Error::SolverFailure("dense Cholesky failed: matrix not SPD".into()))
}

/// Outcome of a conjugate-gradient run.
#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
    /// Smallest Ritz value of the Lanczos matrix built from the CG
    /// coefficients; positive for an SPD operator.
    pub min_ritz: f64,
}

/// Unpreconditioned conjugate gradients for an SPD operator `apply`.
pub fn conjugate_gradient(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    rel_tol: f64,
    max_iter: usize,
) -> Result<CgOutcome> {
    preconditioned_conjugate_gradient(apply, |r| r.to_vec(), b, rel_tol, max_iter)
}

/// Preconditioned conjugate gradients; `precond` applies an SPD
/// approximation of the inverse. Stops on the unpreconditioned relative
/// residual `‖b − A x‖ / ‖b‖`. The Ritz value refers to the preconditioned
/// operator.
pub fn preconditioned_conjugate_gradient(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    precond: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    rel_tol: f64,
    max_iter: usize,
) -> Result<CgOutcome> {
    let n = b.len();
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return Ok(CgOutcome { x: vec![0.0; n], iterations: 0, relative_residual: 0.0, min_ritz: f64::NAN });
    }
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut alphas = Vec::new();
    let mut betas = Vec::new();
    let mut iterations = 0;
    let mut rnorm = bnorm;
    while iterations < max_iter {
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::SolverFailure(format!(
                "CG breakdown: operator not positive definite (pᵀAp = {pap:e})"
            )));
        }
        let alpha = rz / pap;
        x = axpy(&x, alpha, &p);
        r = axpy(&r, -alpha, &ap);
        iterations += 1;
        alphas.push(alpha);
        rnorm = norm2(&r);
        if rnorm <= rel_tol * bnorm {
            break;
        }
        z = precond(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        betas.push(beta);
        rz = rz_new;
        p = axpy(&z, beta, &p);
    }
    let relative_residual = rnorm / bnorm;
    let min_ritz = lanczos_min_ritz(&alphas, &betas);
    if relative_residual > rel_tol {
        return Err(Error::SolverFailure(format!(
            "CG did not converge in {max_iter} iterations (relative residual {relative_residual:e})"
        )));
    }
    Ok(CgOutcome { x, iterations, relative_residual, min_ritz })
}

/// Smallest eigenvalue of the Lanczos tridiagonal matrix implied by CG
/// step lengths `alpha_k` and direction updates `beta_k`.
fn lanczos_min_ritz(alphas: &[f64], betas: &[f64]) -> f64 {
    let m = alphas.len();
    if m == 0 {
        return f64::NAN;
    }
    let mut t = DMatrix::zeros(m, m);
    for k in 0..m {
        let mut d = 1.0 / alphas[k];
        if k > 0 {
            d += betas[k - 1] / alphas[k - 1];
        }
        t[(k, k)] = d;
        if k + 1 < m {
            let off = betas[k].sqrt() / alphas[k];
            t[(k, k + 1)] = off;
            t[(k + 1, k)] = off;
        }
    }
    t.symmetric_eigenvalues().min()
}

/// Result of an eigen-iteration.
#[derive(Debug, Clone)]
pub struct EigenOutcome {
    pub value: f64,
    pub vector: Vec<f64>,
    pub iterations: usize,
    /// `‖A q − λ B q‖ / ‖A q‖` at exit.
    pub residual: f64,
}

/// Smallest eigenpair of `A q = λ B q` with `A`, `B` SPD, by subspace
/// inverse iteration with Rayleigh-Ritz extraction.
///
/// `solve_a` applies `A⁻¹`; `apply_a` and `apply_b` apply the matrices.
pub fn smallest_generalized_eigen(
    n: usize,
    solve_a: impl Fn(&[f64]) -> Vec<f64>,
    apply_a: impl Fn(&[f64]) -> Vec<f64>,
    apply_b: impl Fn(&[f64]) -> Vec<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<EigenOutcome> {
    if n == 0 {
        return Err(Error::InvalidArgument("empty eigenproblem".into()));
    }
    let block = n.min(8);
    // Deterministic start vectors.
    let mut q: Vec<Vec<f64>> = (0..block)
        .map(|k| {
            (0..n)
                .map(|i| 1.0 + ((i * (k + 3) + 7 * k) % 11) as f64 * 0.1 + (i as f64 * (k as f64 + 1.3)).sin())
                .collect()
        })
        .collect();
    let mut last = f64::INFINITY;
    for it in 1..=max_iter {
        let z: Vec<Vec<f64>> = q.iter().map(|v| solve_a(&apply_b(v))).collect();
        let z = b_orthonormalize(z, &apply_b)?;
        let az: Vec<Vec<f64>> = z.iter().map(|v| apply_a(v)).collect();
        let m = z.len();
        let mut small = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                small[(i, j)] = dot(&z[i], &az[j]);
            }
        }
        small = (&small + small.transpose()) * 0.5;
        let eig = small.symmetric_eigen();
        let lam = eig.eigenvalues.min();
        // Ritz vectors sorted ascending.
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        q = order
            .iter()
            .map(|&k| {
                let mut v = vec![0.0; n];
                for (i, zi) in z.iter().enumerate() {
                    let c = eig.eigenvectors[(i, k)];
                    v.iter_mut().zip(zi).for_each(|(a, b)| *a += c * b);
                }
                v
            })
            .collect();
        let aq = apply_a(&q[0]);
        let bq = apply_b(&q[0]);
        let res: Vec<f64> = aq.iter().zip(&bq).map(|(a, b)| a - lam * b).collect();
        let residual = norm2(&res) / norm2(&aq).max(f64::MIN_POSITIVE);
        if (lam - last).abs() <= tol * lam.abs() && residual <= 1e2 * tol.sqrt() {
            return Ok(EigenOutcome { value: lam, vector: q[0].clone(), iterations: it, residual });
        }
        last = lam;
    }
    Err(Error::SolverFailure(format!(
        "inverse iteration did not converge in {max_iter} iterations"
    )))
}

/// Largest eigenpair of `A q = λ B q` (`A` symmetric PSD, `B` SPD) by power
/// iteration on `B⁻¹ A`.
pub fn largest_generalized_eigen(
    n: usize,
    apply_a: impl Fn(&[f64]) -> Vec<f64>,
    solve_b: impl Fn(&[f64]) -> Vec<f64>,
    apply_b: impl Fn(&[f64]) -> Vec<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<EigenOutcome> {
    let mut q: Vec<f64> = (0..n).map(|i| 1.0 + 0.37 * ((i * 7 + 3) % 13) as f64 / 13.0).collect();
    let mut last = f64::NAN;
    for it in 1..=max_iter {
        let bq = apply_b(&q);
        let nrm = dot(&q, &bq).sqrt();
        q.iter_mut().for_each(|v| *v /= nrm);
        let aq = apply_a(&q);
        let lam = dot(&q, &aq);
        if lam == 0.0 {
            return Ok(EigenOutcome { value: 0.0, vector: q, iterations: it, residual: 0.0 });
        }
        if (lam - last).abs() <= tol * lam.abs() {
            let bq: Vec<f64> = apply_b(&q);
            let res: Vec<f64> = aq.iter().zip(&bq).map(|(a, b)| a - lam * b).collect();
            let residual = norm2(&res) / norm2(&aq);
            return Ok(EigenOutcome { value: lam, vector: q, iterations: it, residual });
        }
        last = lam;
        q = solve_b(&aq);
    }
    Err(Error::SolverFailure(format!("power iteration did not converge in {max_iter} iterations")))
}

fn b_orthonormalize(vs: Vec<Vec<f64>>, apply_b: &impl Fn(&[f64]) -> Vec<f64>) -> Result<Vec<Vec<f64>>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(vs.len());
    let mut bout: Vec<Vec<f64>> = Vec::with_capacity(vs.len());
    for mut v in vs {
        let scale0 = {
            let bv = apply_b(&v);
            dot(&v, &bv).sqrt()
        };
        // Two passes of modified Gram-Schmidt in the B inner product.
        for _ in 0..2 {
            for (u, bu) in out.iter().zip(&bout) {
                let c = dot(&v, bu);
                v.iter_mut().zip(u).for_each(|(a, b)| *a -= c * b);
            }
        }
        let bv = apply_b(&v);
        let nrm = dot(&v, &bv).sqrt();
        if !(nrm > 1e-10 * scale0) || !nrm.is_finite() {
            continue;
        }
        v.iter_mut().for_each(|a| *a /= nrm);
        out.push(v);
        bout.push(bv.into_iter().map(|a| a / nrm).collect());
    }
    if out.is_empty() {
        return Err(Error::SolverFailure("eigen-iteration subspace collapsed".into()));
    }
    Ok(out)
}

/// Smallest eigenpair of a dense SPD pencil `(a, b)`.
pub fn smallest_generalized_eigen_dense(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> Result<EigenOutcome> {
    let ca = dense_cholesky(a)?;
    smallest_generalized_eigen(
        a.nrows(),
        |x| ca.solve(&DVector::from_column_slice(x)).as_slice().to_vec(),
        |x| (a * DVector::from_column_slice(x)).as_slice().to_vec(),
        |x| (b * DVector::from_column_slice(x)).as_slice().to_vec(),
        tol,
        5000,
    )
}

/// All eigenvalues of the dense SPD pencil `(a, b)` in ascending order, via
/// Cholesky reduction to a standard symmetric problem. Used as an oracle.
pub fn generalized_eigenvalues_dense(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Vec<f64>> {
    let cb = dense_cholesky(b)?;
    let l = cb.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::SolverFailure("singular Cholesky factor".into()))?;
    let c = &linv * a * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let mut ev: Vec<f64> = c.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// Symmetric block-tridiagonal matrix with dense blocks, solved by block
/// Cholesky (block LDLᵀ) elimination.
#[derive(Debug, Clone)]
pub struct BlockTridiagonal {
    /// Diagonal blocks `D_k`.
    pub diag: Vec<DMatrix<f64>>,
    /// Sub-diagonal blocks `L_k` coupling block `k + 1` (rows) to `k` (cols).
    pub lower: Vec<DMatrix<f64>>,
}

impl BlockTridiagonal {
    pub fn block_size(&self) -> usize {
        self.diag.first().map_or(0, |d| d.nrows())
    }

    pub fn dim(&self) -> usize {
        self.diag.len() * self.block_size()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let m = self.block_size();
        let nb = self.diag.len();
        let blk = |k: usize| DVector::from_column_slice(&x[k * m..(k + 1) * m]);
        let mut y = vec![0.0; nb * m];
        for k in 0..nb {
            let mut yk = &self.diag[k] * blk(k);
            if k > 0 {
                yk += &self.lower[k - 1] * blk(k - 1);
            }
            if k + 1 < nb {
                yk += self.lower[k].transpose() * blk(k + 1);
            }
            y[k * m..(k + 1) * m].copy_from_slice(yk.as_slice());
        }
        y
    }

    /// Block Cholesky factorization: `S_k = D_k − L_{k-1} S_{k-1}⁻¹ L_{k-1}ᵀ`.
    pub fn factor(&self) -> Result<BlockTridiagonalFactor> {
        let mut facts: Vec<nalgebra::Cholesky<f64, nalgebra::Dyn>> = Vec::with_capacity(self.diag.len());
        for k in 0..self.diag.len() {
            let s = if k == 0 {
                self.diag[0].clone()
            } else {
                let l = &self.lower[k - 1];
                &self.diag[k] - l * facts[k - 1].solve(&l.transpose())
            };
            facts.push(dense_cholesky(&((&s + s.transpose()) * 0.5))?);
        }
        Ok(BlockTridiagonalFactor { facts, lower: self.lower.clone() })
    }

    /// Solves `self x = b` for SPD `self`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        Ok(self.factor()?.solve(b))
    }
}

/// Factorization produced by [`BlockTridiagonal::factor`].
#[derive(Debug, Clone)]
pub struct BlockTridiagonalFactor {
    facts: Vec<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
    lower: Vec<DMatrix<f64>>,
}

impl BlockTridiagonalFactor {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let nb = self.facts.len();
        let m = b.len() / nb.max(1);
        let mut y: Vec<DVector<f64>> = Vec::with_capacity(nb);
        for k in 0..nb {
            let mut rhs = DVector::from_column_slice(&b[k * m..(k + 1) * m]);
            if k > 0 {
                rhs -= &self.lower[k - 1] * self.facts[k - 1].solve(&y[k - 1]);
            }
            y.push(rhs);
        }
        let mut x: Vec<DVector<f64>> = vec![DVector::zeros(m); nb];
        for k in (0..nb).rev() {
            let mut rhs = y[k].clone();
            if k + 1 < nb {
                rhs -= self.lower[k].transpose() * &x[k + 1];
            }
            x[k] = self.facts[k].solve(&rhs);
        }
        x.iter().flat_map(|v| v.iter().copied()).collect()
    }
}
