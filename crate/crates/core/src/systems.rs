//! The three discrete systems and their solvers.
//!
//! Unknowns are ordered auxiliary block first (`λ` or `μ` over `Y^δ`), then
//! `u` over `X^δ`, each in tensor index order.

use std::fmt;
use std::str::FromStr;

use crate::assembly::{assemble_initial, assemble_load, assemble_st, ProblemDef, SpaceTimeSpace, StOp};
use crate::error::{invalid, Error, Result};
use crate::fe1d::{Constraint, FESpace1D, Family, Partition1D};
use nalgebra::DMatrix;

use crate::fe1d::{assemble_1d, pairing_matrix, FormKind, PairingKind};
use crate::linalg::{
    dense_cholesky, preconditioned_conjugate_gradient, BlockTridiagonal, BlockTridiagonalFactor, SparseCholesky, SparseLu,
};
use crate::sparse::{axpy, norm2, OperatorMatrix};

/// CG stopping tolerance on the relative residual.
pub const CG_TOL: f64 = 1e-10;
/// Accepted relative algebraic residual of a solve.
pub const RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    NewMixed,
    Andreev,
    Steinbach,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::NewMixed, Method::Andreev, Method::Steinbach];

    pub fn name(self) -> &'static str {
        match self {
            Method::NewMixed => "new_mixed",
            Method::Andreev => "andreev",
            Method::Steinbach => "steinbach",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method '{s}' (new_mixed, andreev, steinbach)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    Direct,
    SchurCg,
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(SolverKind::Direct),
            "schur_cg" => Ok(SolverKind::SchurCg),
            _ => invalid(format!("unknown solver '{s}' (direct, schur_cg)")),
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolverKind::Direct => "direct",
            SolverKind::SchurCg => "schur_cg",
        })
    }
}

/// Symmetric indefinite system `[[A, Bm], [Bmᵀ, −R]] [aux; u] = [f; h]`.
#[derive(Debug, Clone)]
pub struct SaddleSystem {
    pub method: Method,
    /// `A`: Gram of the auxiliary space, SPD.
    pub a: OperatorMatrix,
    /// `Bm`: rows over `Y^δ`, columns over `X^δ`.
    pub b: OperatorMatrix,
    /// `R`: the (1,1) block is `−R`.
    pub r: OperatorMatrix,
    pub rhs_aux: Vec<f64>,
    pub rhs_u: Vec<f64>,
    pub labels: [&'static str; 2],
}

impl SaddleSystem {
    pub fn dims(&self) -> (usize, usize) {
        (self.a.nrows(), self.r.nrows())
    }

    pub fn matrix(&self) -> OperatorMatrix {
        let (ny, nx) = self.dims();
        let bt = self.b.transpose();
        let neg_r = self.r.scaled(-1.0);
        OperatorMatrix::block2x2([[Some(&self.a), Some(&self.b)], [Some(&bt), Some(&neg_r)]], [ny, nx], [ny, nx])
            .expect("consistent blocks")
    }

    pub fn rhs(&self) -> Vec<f64> {
        self.rhs_aux.iter().chain(&self.rhs_u).copied().collect()
    }

    /// Symmetric by construction; checks the diagonal blocks.
    pub fn is_symmetric(&self) -> bool {
        self.a.is_symmetric(1e-12) && self.r.is_symmetric(1e-12)
    }

    pub fn nnz(&self) -> usize {
        self.a.nnz() + 2 * self.b.nnz() + self.r.nnz()
    }
}

fn check_spatial(x: &SpaceTimeSpace, y: &SpaceTimeSpace) -> Result<()> {
    if x.spatial() != y.spatial() {
        return invalid("trial and test spaces must share the spatial factor");
    }
    if x.temporal().family() != Family::P1Continuous || x.temporal().constraint() != Constraint::None {
        return invalid("the trial temporal factor must be unconstrained continuous P1");
    }
    Ok(())
}

/// Mixed system with blocks `[A_s^{YY}, C; Cᵀ, −(A_s^{XX} + Γ_T)]`.
pub fn build_new_mixed(xd: &SpaceTimeSpace, yd: &SpaceTimeSpace, problem: &ProblemDef) -> Result<SaddleSystem> {
    check_spatial(xd, yd)?;
    let beta = problem.beta;
    let a = assemble_st(yd, yd, StOp::As, beta)?;
    let b = assemble_st(xd, yd, StOp::C, beta)?;
    let r = assemble_st(xd, xd, StOp::As, beta)?.add(&assemble_st(xd, xd, StOp::GammaT, beta)?)?;
    let rhs_aux = assemble_load(yd, problem);
    let gx = assemble_load(xd, problem);
    let init = assemble_initial(xd, &*problem.u0)?;
    let rhs_u = gx.iter().zip(&init).map(|(g, i)| -(g + i)).collect();
    Ok(SaddleSystem { method: Method::NewMixed, a, b, r, rhs_aux, rhs_u, labels: ["lambda", "u"] })
}

/// Reduced mixed system with blocks `[A_s^{YY}, B; Bᵀ, −Γ_0]`; requires
/// `X^δ ⊆ Y^δ`.
pub fn build_andreev(xd: &SpaceTimeSpace, yd: &SpaceTimeSpace, problem: &ProblemDef) -> Result<SaddleSystem> {
    check_spatial(xd, yd)?;
    let yt = yd.temporal();
    if yt.family() != Family::P1Continuous
        || yt.constraint() != Constraint::None
        || !yt.partition().refines(xd.temporal().partition())
    {
        return invalid("the test space must contain the trial space (continuous P1 on a refined partition)");
    }
    let beta = problem.beta;
    let a = assemble_st(yd, yd, StOp::As, beta)?;
    let b = assemble_st(xd, yd, StOp::B, beta)?;
    let r = assemble_st(xd, xd, StOp::Gamma0, beta)?;
    let rhs_aux = assemble_load(yd, problem);
    let rhs_u = assemble_initial(xd, &*problem.u0)?.into_iter().map(|v| -v).collect();
    Ok(SaddleSystem { method: Method::Andreev, a, b, r, rhs_aux, rhs_u, labels: ["mu", "u"] })
}

/// Square Galerkin system over the trial space vanishing at `t = 0`.
#[derive(Debug, Clone)]
pub struct SteinbachSystem {
    pub matrix: OperatorMatrix,
    pub rhs: Vec<f64>,
    /// Constrained space `X^δ_0`.
    pub x0: SpaceTimeSpace,
    /// Unconstrained space `X^δ` carrying the reported solution.
    pub x: SpaceTimeSpace,
    /// Constant-in-time lift of the initial datum, over `x`.
    pub lift: Vec<f64>,
}

impl SteinbachSystem {
    /// `ū + E w` over the unconstrained space.
    pub fn assemble_solution(&self, w: &[f64]) -> Vec<f64> {
        let mut u = self.lift.clone();
        let off = self.x.spatial().dim();
        for (k, v) in w.iter().enumerate() {
            u[off + k] += v;
        }
        u
    }
}

/// Coefficients of `1 ⊗ u0` over `temporal ⊗ X_x` (unconstrained temporal
/// factor, so the constant function is representable).
pub fn steinbach_lift(temporal: &FESpace1D, u0_coeffs: &[f64]) -> Result<Vec<f64>> {
    if temporal.family() != Family::P1Continuous || temporal.constraint() != Constraint::None {
        return invalid("the lift needs an unconstrained continuous temporal factor");
    }
    Ok((0..temporal.dim()).flat_map(|_| u0_coeffs.iter().copied()).collect())
}

/// Galerkin scheme on `X^δ_0` with the constant-in-time lift of the
/// interpolated initial datum.
pub fn build_steinbach(xd0: &SpaceTimeSpace, problem: &ProblemDef) -> Result<SteinbachSystem> {
    let t0 = xd0.temporal();
    if t0.family() != Family::P1Continuous || t0.constraint() != Constraint::ZeroLeft {
        return invalid("the temporal factor must be continuous P1 vanishing at t = 0");
    }
    let sx = xd0.spatial();
    let len = sx.partition().length();
    let u0 = &problem.u0;
    let scale = sx.dof_nodes().iter().fold(1.0f64, |m, &x| m.max(u0(x).abs()));
    if u0(0.0).abs() > 1e-12 * scale || u0(len).abs() > 1e-12 * scale {
        return invalid("initial datum does not vanish on the boundary; no conforming lift available");
    }
    let x = SpaceTimeSpace::new(FESpace1D::p1(t0.partition().clone(), Constraint::None)?, sx.clone())?;
    let beta = problem.beta;
    let matrix = assemble_st(xd0, xd0, StOp::B, beta)?;
    let lift = steinbach_lift(x.temporal(), &sx.interpolate(|y| u0(y))?)?;
    let b_lift = assemble_st(&x, xd0, StOp::B, beta)?.mul_vec(&lift);
    let rhs = axpy(&assemble_load(xd0, problem), -1.0, &b_lift);
    Ok(SteinbachSystem { matrix, rhs, x0: xd0.clone(), x, lift })
}

#[derive(Debug, Clone, Default)]
pub struct SolveDiagnostics {
    pub solver: String,
    /// Relative residual of the assembled system.
    pub residual: f64,
    pub iterations: usize,
    /// Smallest Ritz value of the Schur complement (CG path only).
    pub min_ritz: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub method: Method,
    pub u_coeffs: Vec<f64>,
    pub aux_coeffs: Option<Vec<f64>>,
    pub diagnostics: SolveDiagnostics,
}

fn relative_residual(a: &OperatorMatrix, x: &[f64], b: &[f64]) -> f64 {
    let r = axpy(&a.mul_vec(x), -1.0, b);
    let bn = norm2(b);
    if bn == 0.0 {
        norm2(&r)
    } else {
        norm2(&r) / bn
    }
}

/// Sparse LU solve of a square system with a residual check.
pub fn solve_linear(a: &OperatorMatrix, b: &[f64]) -> Result<(Vec<f64>, f64)> {
    if a.nrows() != a.ncols() || a.nrows() != b.len() {
        return invalid("system must be square and match the right-hand side");
    }
    let lu = SparseLu::new(a)?;
    let mut x = lu.solve(b);
    let mut res = relative_residual(a, &x, b);
    // One step of iterative refinement.
    if res > RESIDUAL_TOL * 1e-2 && res.is_finite() {
        let r = axpy(b, -1.0, &a.mul_vec(&x));
        x = axpy(&x, 1.0, &lu.solve(&r));
        res = relative_residual(a, &x, b);
    }
    if !(res <= RESIDUAL_TOL) {
        return Err(Error::SolverFailure(format!(
            "direct solve left relative residual {res:.3e} (matrix numerically singular)"
        )));
    }
    Ok((x, res))
}

pub fn solve_direct(system: &SaddleSystem) -> Result<Solution> {
    let (ny, _) = system.dims();
    let (x, residual) = solve_linear(&system.matrix(), &system.rhs())?;
    Ok(Solution {
        method: system.method,
        u_coeffs: x[ny..].to_vec(),
        aux_coeffs: Some(x[..ny].to_vec()),
        diagnostics: SolveDiagnostics { solver: "direct".into(), residual, iterations: 1, min_ritz: None },
    })
}

pub fn solve_steinbach(system: &SteinbachSystem) -> Result<Solution> {
    let (w, residual) = solve_linear(&system.matrix, &system.rhs)?;
    Ok(Solution {
        method: Method::Steinbach,
        u_coeffs: system.assemble_solution(&w),
        aux_coeffs: None,
        diagnostics: SolveDiagnostics { solver: "direct".into(), residual, iterations: 1, min_ritz: None },
    })
}

/// The Schur complement `S = R + Bmᵀ A⁻¹ Bm` of a saddle system, applied
/// matrix-free with one sparse Cholesky solve per application.
pub struct SchurOperator<'a> {
    system: &'a SaddleSystem,
    a_chol: SparseCholesky,
}

impl<'a> SchurOperator<'a> {
    pub fn new(system: &'a SaddleSystem) -> Result<Self> {
        Ok(Self { system, a_chol: SparseCholesky::new(&system.a)? })
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let s = self.system;
        let w = self.a_chol.solve(&s.b.mul_vec(u));
        axpy(&s.r.mul_vec(u), 1.0, &s.b.tr_mul_vec(&w))
    }

    pub fn dim(&self) -> usize {
        self.system.r.nrows()
    }
}

/// Schur complement `R + B̂ᵀ (M̂_t ⊗ A_x)⁻¹ B̂` of the same bilinear form
/// tested with P0 in time on the test partition. `M̂_t` is diagonal, so the
/// result is block tridiagonal over the temporal nodes of `X^δ` with dense
/// spatial blocks and is factored once by block Cholesky. For a P0 temporal
/// test factor this is the exact Schur complement.
pub struct P0SchurPreconditioner {
    factor: BlockTridiagonalFactor,
}

impl P0SchurPreconditioner {
    pub fn new(system: &SaddleSystem, xd: &SpaceTimeSpace, yd: &SpaceTimeSpace, beta: f64) -> Result<Self> {
        let (xt, sx) = (xd.temporal(), xd.spatial());
        let yt = &FESpace1D::p0(yd.temporal().partition().clone())?;
        let nx = sx.dim();
        let ax = assemble_1d(sx, FormKind::Stiffness)?;
        let mx = assemble_1d(sx, FormKind::Mass)?.to_dense();
        let conv = assemble_1d(sx, FormKind::Convection)?.scaled(beta);
        let k = match system.method {
            Method::NewMixed => conv.to_dense(),
            Method::Andreev => ax.add(&conv)?.to_dense(),
            Method::Steinbach => return invalid("Steinbach's scheme has no Schur complement"),
        };
        let ainv = dense_cholesky(&ax.to_dense())?.inverse();
        let mam = &mx * &ainv * &mx;
        let mak = &mx * &ainv * &k;
        let kam = mak.transpose();
        let kak = k.transpose() * &ainv * &k;
        let d = pairing_matrix(yt, xt, PairingKind::ValueOfDerivative)?;
        let m = pairing_matrix(yt, xt, PairingKind::ValueValue)?;
        let lengths = yt.partition().element_lengths();
        let nt = xt.dim();
        let mut diag = vec![DMatrix::zeros(nx, nx); nt];
        let mut lower = vec![DMatrix::zeros(nx, nx); nt.saturating_sub(1)];
        let mut add_block = |p: usize, q: usize, blk: &DMatrix<f64>, scale: f64| -> Result<()> {
            if p == q {
                diag[p] += blk * scale;
            } else if p == q + 1 {
                lower[q] += blk * scale;
            } else if q != p + 1 {
                return Err(Error::Internal("Schur complement is not block tridiagonal".into()));
            }
            Ok(())
        };
        for j in 0..yt.dim() {
            let mut coef: Vec<(usize, f64, f64)> = d.row(j).map(|(p, v)| (p, v, 0.0)).collect();
            for (p, v) in m.row(j) {
                match coef.iter_mut().find(|c| c.0 == p) {
                    Some(c) => c.2 = v,
                    None => coef.push((p, 0.0, v)),
                }
            }
            let w = 1.0 / lengths[j];
            for &(p, dp, mp) in &coef {
                for &(q, dq, mq) in &coef {
                    let blk = &mam * (dp * dq) + &mak * (dp * mq) + &kam * (mp * dq) + &kak * (mp * mq);
                    add_block(p, q, &blk, w)?;
                }
            }
        }
        for (i, j, v) in system.r.triplets() {
            let mut unit = DMatrix::zeros(nx, nx);
            unit[(i % nx, j % nx)] = v;
            add_block(i / nx, j / nx, &unit, 1.0)?;
        }
        Ok(Self { factor: BlockTridiagonal { diag, lower }.factor()? })
    }

    pub fn apply_inverse(&self, r: &[f64]) -> Vec<f64> {
        self.factor.solve(r)
    }
}

/// Preconditioned conjugate gradients on the Schur complement, then
/// back-substitution for the auxiliary unknown.
pub fn solve_schur_cg(system: &SaddleSystem, xd: &SpaceTimeSpace, yd: &SpaceTimeSpace, beta: f64) -> Result<Solution> {
    let schur = SchurOperator::new(system)?;
    let n = schur.dim();
    if xd.dim() != n {
        return invalid("trial space does not match the system");
    }
    let precond = P0SchurPreconditioner::new(system, xd, yd, beta)?;
    // S u = Bmᵀ A⁻¹ f − h
    let af = schur.a_chol.solve(&system.rhs_aux);
    let rhs = axpy(&system.b.tr_mul_vec(&af), -1.0, &system.rhs_u);
    let max_iter = (10.0 * (n as f64).sqrt()).ceil() as usize;
    let cg = preconditioned_conjugate_gradient(|v| schur.apply(v), |r| precond.apply_inverse(r), &rhs, CG_TOL, max_iter)?;
    if cg.iterations > 0 && !(cg.min_ritz > 0.0) {
        return Err(Error::SolverFailure(format!(
            "Schur complement is not positive definite (smallest Ritz value {:.3e})",
            cg.min_ritz
        )));
    }
    let aux = schur.a_chol.solve(&axpy(&system.rhs_aux, -1.0, &system.b.mul_vec(&cg.x)));
    let full: Vec<f64> = aux.iter().chain(&cg.x).copied().collect();
    let residual = relative_residual(&system.matrix(), &full, &system.rhs());
    Ok(Solution {
        method: system.method,
        u_coeffs: cg.x,
        aux_coeffs: Some(aux),
        diagnostics: SolveDiagnostics {
            solver: "schur_cg".into(),
            residual,
            iterations: cg.iterations,
            min_ritz: (cg.iterations > 0).then_some(cg.min_ritz),
        },
    })
}

/// Trial and test spaces of a method on the uniform `n_t × n_x` mesh of
/// `(0, T) × (0, 1)`: `X^δ = P1 ⊗ X_x` and `Y^δ = P0 ⊗ X_x` (new_mixed),
/// `P1(refined) ⊗ X_x` (andreev) or `X^δ_0` (steinbach).
pub fn standard_spaces(method: Method, n_t: usize, n_x: usize, t_final: f64) -> Result<(SpaceTimeSpace, SpaceTimeSpace)> {
    let tp = Partition1D::uniform(n_t, t_final)?;
    let xx = FESpace1D::p1(Partition1D::uniform(n_x, 1.0)?, Constraint::ZeroBoth)?;
    let x = SpaceTimeSpace::new(FESpace1D::p1(tp.clone(), Constraint::None)?, xx.clone())?;
    let y_temporal = match method {
        Method::NewMixed => FESpace1D::p0(tp)?,
        Method::Andreev => FESpace1D::p1(tp.refine(2)?, Constraint::None)?,
        Method::Steinbach => FESpace1D::p1(tp, Constraint::ZeroLeft)?,
    };
    Ok((x, SpaceTimeSpace::new(y_temporal, xx)?))
}

/// One discretization and its solution: trial space `x`, test space `y`.
#[derive(Debug, Clone)]
pub struct Run {
    pub x: SpaceTimeSpace,
    pub y: SpaceTimeSpace,
    pub solution: Solution,
}

/// Builds and solves `method` on the uniform `n × n` mesh.
pub fn run_method(method: Method, problem: &ProblemDef, n: usize, solver: SolverKind) -> Result<Run> {
    let (x, y) = standard_spaces(method, n, n, problem.t_final)?;
    let solution = match method {
        Method::Steinbach => solve_steinbach(&build_steinbach(&y, problem)?)?,
        Method::NewMixed | Method::Andreev => {
            let system = if method == Method::NewMixed {
                build_new_mixed(&x, &y, problem)?
            } else {
                build_andreev(&x, &y, problem)?
            };
            match solver {
                SolverKind::Direct => solve_direct(&system)?,
                SolverKind::SchurCg => solve_schur_cg(&system, &x, &y, problem.beta)?,
            }
        }
    };
    Ok(Run { x, y, solution })
}
