//! Energy, dual and trace norms, error measurement against the exact
//! solution, and the best-approximation oracle.
//!
//! Dual norms of `∂_t e` are taken over the reference space
//! `Y_ref = P0(refined time) ⊗ P1(refined space)`, whose Gram is block
//! diagonal in time, so `‖f‖²_{Y_ref′} = Σ_k h_k⁻¹ f_kᵀ A_f⁻¹ f_k`.

use nalgebra::DMatrix;

use crate::assembly::{
    assemble_st, for_each_cell_point, spatial_load, ExactSolution, ProblemDef, SpaceTimeSpace, StOp, QUAD_ORDER,
};
use crate::error::{invalid, Result};
use crate::fe1d::{
    assemble_1d, hminus1_gram, pairing_matrix, Constraint, FESpace1D, Family, FormKind, PairingKind,
};
use crate::linalg::{BlockTridiagonal, SparseCholesky};
use crate::quadrature::GaussLegendre;
use crate::sparse::{dot, OperatorMatrix};
use crate::systems::{Method, Solution};

pub const DEFAULT_REF_FACTOR: usize = 4;

/// Error norms of one discrete solution.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub dim_x: usize,
    pub err_x: f64,
    pub err_y: f64,
    /// `‖e(T, ·)‖_{L2}`
    pub err_t: f64,
    /// `‖e(0, ·)‖_{L2}`
    pub err_0: f64,
    /// Reference-space value of `‖∂_t e‖_{Y′}`.
    pub err_dual: f64,
    /// `‖u − λ^δ‖_Y` (new_mixed) or `‖μ^δ‖_Y` (andreev).
    pub err_aux_y: Option<f64>,
    pub ref_refinement: usize,
}

/// `sqrt(cᵀ A_s c)`.
pub fn y_norm(space: &SpaceTimeSpace, coeffs: &[f64]) -> Result<f64> {
    if coeffs.len() != space.dim() {
        return invalid(format!("expected {} coefficients, got {}", space.dim(), coeffs.len()));
    }
    let a = assemble_st(space, space, StOp::As, 0.0)?;
    Ok(a.bilinear(coeffs, coeffs).max(0.0).sqrt())
}

/// `sqrt(fᵀ G⁻¹ f)` for an SPD Gram `G`.
pub fn dual_norm_discrete(gram: &OperatorMatrix, f: &[f64]) -> Result<f64> {
    if gram.nrows() != f.len() {
        return invalid("Gram and functional sizes differ");
    }
    if f.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    let chol = SparseCholesky::new(gram)?;
    Ok(dot(f, &chol.solve(f)).max(0.0).sqrt())
}

/// `‖u‖_{X,Y^δ}`: the X-norm with the dual norm of `∂_t u` taken over `Y^δ`.
pub fn mesh_dependent_norm(u: &[f64], xd: &SpaceTimeSpace, yd: &SpaceTimeSpace) -> Result<f64> {
    if u.len() != xd.dim() {
        return invalid("coefficient vector does not match the trial space");
    }
    let y2 = assemble_st(xd, xd, StOp::As, 0.0)?.bilinear(u, u);
    let t2 = assemble_st(xd, xd, StOp::GammaT, 0.0)?.bilinear(u, u);
    let f = assemble_st(xd, yd, StOp::Dt, 0.0)?.mul_vec(u);
    let d = dual_norm_discrete(&assemble_st(yd, yd, StOp::As, 0.0)?, &f)?;
    Ok((y2 + d * d + t2).max(0.0).sqrt())
}

/// Exact `‖u‖_X` of a discrete `u ∈ X^δ`: `∂_t u` is piecewise constant in
/// time, so its dual norm is `Σ_k h_k d_kᵀ W d_k` with `W` the exact
/// `H⁻¹` Gram of the spatial factor.
pub fn x_norm_discrete(xd: &SpaceTimeSpace, u: &[f64]) -> Result<f64> {
    let xt = xd.temporal();
    if xt.family() != Family::P1Continuous || xt.constraint() != Constraint::None {
        return invalid("the trial temporal factor must be unconstrained continuous P1");
    }
    if u.len() != xd.dim() {
        return invalid("coefficient vector does not match the trial space");
    }
    let y2 = assemble_st(xd, xd, StOp::As, 0.0)?.bilinear(u, u);
    let t2 = assemble_st(xd, xd, StOp::GammaT, 0.0)?.bilinear(u, u);
    let w = hminus1_gram(xd.spatial())?;
    let nx = xd.spatial().dim();
    let mut d2 = 0.0;
    for (k, h) in xt.partition().element_lengths().into_iter().enumerate() {
        let d = nalgebra::DVector::from_iterator(nx, (0..nx).map(|i| (u[(k + 1) * nx + i] - u[k * nx + i]) / h));
        d2 += h * d.dot(&(&w * &d));
    }
    Ok((y2 + d2 + t2).max(0.0).sqrt())
}

/// `Y_ref = P0(refined time) ⊗ P1(refined space)`.
pub fn reference_space(xd: &SpaceTimeSpace, ref_factor: usize) -> Result<SpaceTimeSpace> {
    if ref_factor < 1 {
        return invalid("reference refinement factor must be positive");
    }
    SpaceTimeSpace::new(
        FESpace1D::p0(xd.temporal().partition().refine(ref_factor)?)?,
        FESpace1D::p1(xd.spatial().partition().refine(ref_factor)?, Constraint::ZeroBoth)?,
    )
}

/// Slab loads `f_k[i] = ∫∫_{slab k} q(t, x) φ_i(x)` over `Y_ref`, where `q`
/// receives the quadrature point and the enclosing coarse cell of `X^δ`.
fn slab_loads(
    xd: &SpaceTimeSpace,
    yref: &SpaceTimeSpace,
    ref_factor: usize,
    breakline: bool,
    q: impl Fn(usize, usize, f64, f64) -> f64,
) -> Vec<Vec<f64>> {
    let nxf = yref.spatial().dim();
    let mut f = vec![vec![0.0; nxf]; yref.temporal().dim()];
    let _ = xd;
    for_each_cell_point(
        yref.temporal().partition(),
        yref.spatial().partition(),
        breakline,
        QUAD_ORDER,
        |p| {
            let val = q(p.et / ref_factor, p.ex / ref_factor, p.t, p.x);
            if val == 0.0 {
                return;
            }
            for (i, v, _) in yref.spatial().shapes(p.ex, p.x) {
                f[p.et][i] += p.w * val * v;
            }
        },
    );
    f
}

/// `Σ_k h_k⁻¹ f_kᵀ A_f⁻¹ f_k`.
fn slab_dual_sq(yref: &SpaceTimeSpace, f: &[Vec<f64>]) -> Result<f64> {
    let af = SparseCholesky::new(&assemble_1d(yref.spatial(), FormKind::Stiffness)?)?;
    let h = yref.temporal().partition().element_lengths();
    Ok(f.iter().zip(&h).map(|(fk, hk)| dot(fk, &af.solve(fk)) / hk).sum())
}

/// Error norms of the discrete function `coeffs ∈ X^δ` against the exact
/// solution: `(err_x, err_y, err_t, err_0, err_dual)`.
fn x_error(exact: &ExactSolution, t_final: f64, xd: &SpaceTimeSpace, coeffs: &[f64], ref_factor: usize) -> Result<[f64; 5]> {
    if coeffs.len() != xd.dim() {
        return invalid("coefficient vector does not match the trial space");
    }
    let (tp, xp) = (xd.temporal().partition(), xd.spatial().partition());
    let mut y2 = 0.0;
    for_each_cell_point(tp, xp, exact.singular_line, QUAD_ORDER, |p| {
        let ux = (exact.dx)(p.t, p.x) - xd.eval_on_cell(coeffs, p.et, p.ex, p.t, p.x)[2];
        y2 += p.w * ux * ux;
    });
    let trace_err = |s: f64| -> Result<f64> {
        let tr = xd.trace(coeffs, s)?;
        let gauss = GaussLegendre::new(QUAD_ORDER);
        let mut e2 = 0.0;
        for e in 0..xp.n_elements() {
            let (a, b) = xp.element(e);
            for (x, w) in gauss.on_interval(a, b) {
                let uh: f64 = xd.spatial().shapes(e, x).map(|(d, v, _)| tr[d] * v).sum();
                let diff = (exact.value)(s, x) - uh;
                e2 += w * diff * diff;
            }
        }
        Ok(e2.sqrt())
    };
    let err_t = trace_err(t_final)?;
    let err_0 = trace_err(0.0)?;
    let yref = reference_space(xd, ref_factor)?;
    let f = slab_loads(xd, &yref, ref_factor, exact.singular_line, |et, ex, t, x| {
        (exact.dt)(t, x) - xd.eval_on_cell(coeffs, et, ex, t, x)[1]
    });
    let d2 = slab_dual_sq(&yref, &f)?;
    let err_y = y2.sqrt();
    let err_dual = d2.max(0.0).sqrt();
    let err_x = (y2 + d2 + err_t * err_t).sqrt();
    Ok([err_x, err_y, err_t, err_0, err_dual])
}

/// `‖u − w‖_Y` for `w` in an arbitrary tensor space (breakline-aware).
fn y_error(exact: &ExactSolution, space: &SpaceTimeSpace, coeffs: &[f64]) -> f64 {
    let mut e2 = 0.0;
    for_each_cell_point(
        space.temporal().partition(),
        space.spatial().partition(),
        exact.singular_line,
        QUAD_ORDER,
        |p| {
            let d = (exact.dx)(p.t, p.x) - space.eval_on_cell(coeffs, p.et, p.ex, p.t, p.x)[2];
            e2 += p.w * d * d;
        },
    );
    e2.sqrt()
}

/// Errors of `sol` (trial space `xd`, auxiliary space `yd`) against the
/// exact solution of `problem`.
pub fn error_report(
    problem: &ProblemDef,
    sol: &Solution,
    xd: &SpaceTimeSpace,
    yd: &SpaceTimeSpace,
    ref_factor: usize,
) -> Result<ErrorReport> {
    if ref_factor < 2 {
        return invalid("reference refinement factor must be at least 2");
    }
    let [err_x, err_y, err_t, err_0, err_dual] = x_error(&problem.exact, problem.t_final, xd, &sol.u_coeffs, ref_factor)?;
    let err_aux_y = match (sol.method, &sol.aux_coeffs) {
        (Method::NewMixed, Some(aux)) => Some(y_error(&problem.exact, yd, aux)),
        (Method::Andreev, Some(aux)) => Some(y_norm(yd, aux)?),
        _ => None,
    };
    Ok(ErrorReport { dim_x: xd.dim(), err_x, err_y, err_t, err_0, err_dual, err_aux_y, ref_refinement: ref_factor })
}

/// Minimizer over `X^δ` of the X-norm error, with the dual part taken over
/// the reference space. Returns the coefficients and the error.
///
/// The Gram is `M_t ⊗ A_x + e_T e_Tᵀ ⊗ M_x + K_t ⊗ M_fcᵀ A_f⁻¹ M_fc`
/// (`K_t` the temporal derivative Gram, `M_fc` the fine-coarse spatial
/// mass), block tridiagonal in time.
pub fn best_approx_xnorm(problem: &ProblemDef, xd: &SpaceTimeSpace, ref_factor: usize) -> Result<(Vec<f64>, f64)> {
    if ref_factor < 2 {
        return invalid("reference refinement factor must be at least 2");
    }
    let xt = xd.temporal();
    if xt.family() != Family::P1Continuous || xt.constraint() != Constraint::None {
        return invalid("the trial temporal factor must be unconstrained continuous P1");
    }
    let exact = &problem.exact;
    let sx = xd.spatial();
    let nx = sx.dim();
    let nt = xt.dim();
    let yref = reference_space(xd, ref_factor)?;
    let fine_x = yref.spatial();
    let ax = assemble_1d(sx, FormKind::Stiffness)?.to_dense();
    let mx = assemble_1d(sx, FormKind::Mass)?.to_dense();
    let mt = assemble_1d(xt, FormKind::Mass)?;
    let kt = assemble_1d(xt, FormKind::Stiffness)?;
    let mfc = pairing_matrix(fine_x, sx, PairingKind::ValueValue)?;
    let af = SparseCholesky::new(&assemble_1d(fine_x, FormKind::Stiffness)?)?;
    let mfc_dense = mfc.to_dense();
    let mut af_inv_mfc = DMatrix::zeros(fine_x.dim(), nx);
    for j in 0..nx {
        let col: Vec<f64> = mfc_dense.column(j).iter().copied().collect();
        af_inv_mfc.set_column(j, &nalgebra::DVector::from_vec(af.solve(&col)));
    }
    let s = mfc_dense.transpose() * &af_inv_mfc;
    let s = (&s + s.transpose()) * 0.5;
    let block = |p: usize, q: usize| -> DMatrix<f64> {
        let mut b = &ax * mt.get(p, q) + &s * kt.get(p, q);
        if p == q && p + 1 == nt {
            b += &mx;
        }
        b
    };
    let gram = BlockTridiagonal {
        diag: (0..nt).map(|p| block(p, p)).collect(),
        lower: (0..nt - 1).map(|p| block(p + 1, p)).collect(),
    };
    // Right-hand side: Y part, trace part, dual part.
    let mut rhs = vec![0.0; xd.dim()];
    for_each_cell_point(xt.partition(), sx.partition(), exact.singular_line, QUAD_ORDER, |p| {
        let ux = (exact.dx)(p.t, p.x);
        let xs: Vec<_> = sx.shapes(p.ex, p.x).collect();
        for (kt_, vt, _) in xt.shapes(p.et, p.t) {
            for &(kx, _, gx) in &xs {
                rhs[xd.index(kt_, kx)] += p.w * ux * vt * gx;
            }
        }
    });
    let t_final = problem.t_final;
    let trace = spatial_load(sx, |x| (exact.value)(t_final, x));
    for (i, v) in trace.iter().enumerate() {
        rhs[(nt - 1) * nx + i] += v;
    }
    let f = slab_loads(xd, &yref, ref_factor, exact.singular_line, |_, _, t, x| (exact.dt)(t, x));
    let dt_ref = pairing_matrix(yref.temporal(), xt, PairingKind::ValueOfDerivative)?;
    let href = yref.temporal().partition().element_lengths();
    for (k, fk) in f.iter().enumerate() {
        let g: Vec<f64> = af.solve(fk).into_iter().map(|v| v / href[k]).collect();
        let coarse = mfc.tr_mul_vec(&g);
        for (p, d) in dt_ref.row(k) {
            for i in 0..nx {
                rhs[p * nx + i] += d * coarse[i];
            }
        }
    }
    let coeffs = gram.solve(&rhs)?;
    let err = x_error(exact, t_final, xd, &coeffs, ref_factor)?[0];
    Ok((coeffs, err))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fe1d::Partition1D;
    use crate::systems::{run_method, standard_spaces, SolverKind};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn y_norm_examples() {
        let (x, _) = standard_spaces(Method::NewMixed, 4, 64, 1.0).unwrap();
        assert_eq!(y_norm(&x, &vec![0.0; x.dim()]).unwrap(), 0.0);
        let c = x.interpolate(|_, y| (PI * y).sin()).unwrap();
        let v = y_norm(&x, &c).unwrap();
        assert_relative_eq!(v * v, PI * PI / 2.0, max_relative = 1e-2);
        let c2: Vec<f64> = c.iter().map(|v| 2.0 * v).collect();
        assert_relative_eq!(y_norm(&x, &c2).unwrap(), 2.0 * v, max_relative = 1e-14);
    }

    #[test]
    fn dual_norm_examples() {
        let id = OperatorMatrix::identity(3);
        assert_eq!(dual_norm_discrete(&id, &[0.0; 3]).unwrap(), 0.0);
        assert_relative_eq!(dual_norm_discrete(&id, &[3.0, 0.0, 4.0]).unwrap(), 5.0, epsilon = 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = DMatrix::from_fn(20, 20, |_, _| rng.gen_range(-1.0..1.0));
        let g = &a * a.transpose() + DMatrix::identity(20, 20);
        let f = random_vec(&mut rng, 20);
        let fv = nalgebra::DVector::from_vec(f.clone());
        let oracle = fv.dot(&g.clone().lu().solve(&fv).unwrap()).sqrt();
        assert_relative_eq!(dual_norm_discrete(&OperatorMatrix::from_dense(&g), &f).unwrap(), oracle, max_relative = 1e-12);
    }

    #[test]
    fn constant_in_time_has_no_dual_part() {
        let (x, y) = standard_spaces(Method::NewMixed, 4, 6, 1.0).unwrap();
        let c = x.interpolate(|_, s| s * (1.0 - s)).unwrap();
        let m = mesh_dependent_norm(&c, &x, &y).unwrap();
        let y2 = y_norm(&x, &c).unwrap().powi(2);
        let t2 = assemble_st(&x, &x, StOp::GammaT, 0.0).unwrap().bilinear(&c, &c);
        assert_relative_eq!(m * m, y2 + t2, max_relative = 1e-13);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn mesh_dependent_norm_bounds(seed in 0u64..1000, n in 2usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (x, y) = standard_spaces(Method::Andreev, n, n + 1, 1.0).unwrap();
            let (_, y_p0) = standard_spaces(Method::NewMixed, n, n + 1, 1.0).unwrap();
            let u = random_vec(&mut rng, x.dim());
            let full = x_norm_discrete(&x, &u).unwrap();
            let small = mesh_dependent_norm(&u, &x, &y).unwrap();
            let p0 = mesh_dependent_norm(&u, &x, &y_p0).unwrap();
            // P0 in time contains ∂_t X_t and is the exact dual norm in time.
            prop_assert!(small <= p0 * (1.0 + 1e-9));
            prop_assert!(p0 <= full * (1.0 + 1e-9));
            // Enlarging Y^δ in time never decreases the norm.
            let finer = SpaceTimeSpace::new(
                FESpace1D::p1(x.temporal().partition().refine(4).unwrap(), Constraint::None).unwrap(),
                x.spatial().clone(),
            ).unwrap();
            prop_assert!(mesh_dependent_norm(&u, &x, &finer).unwrap() >= small * (1.0 - 1e-9));
        }
    }

    #[test]
    fn inf_sup_identity_for_nested_pair() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [3, 6] {
            let (x, y) = standard_spaces(Method::Andreev, n, n, 1.0).unwrap();
            let b = assemble_st(&x, &y, StOp::B, 0.0).unwrap();
            let ay = assemble_st(&y, &y, StOp::As, 0.0).unwrap();
            let g0 = assemble_st(&x, &x, StOp::Gamma0, 0.0).unwrap();
            for _ in 0..10 {
                let u = random_vec(&mut rng, x.dim());
                let lhs = mesh_dependent_norm(&u, &x, &y).unwrap().powi(2);
                let sup = dual_norm_discrete(&ay, &b.mul_vec(&u)).unwrap().powi(2);
                assert_relative_eq!(lhs, sup + g0.bilinear(&u, &u), max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn exact_discrete_solution_has_zero_error() {
        let (x, y) = standard_spaces(Method::Andreev, 4, 4, 1.0).unwrap();
        let c = x.interpolate(|t, s| (1.0 + t) * (PI * s).sin()).unwrap();
        let problem = ProblemDef::new(1.0, 0.0, ExactSolution::discrete(&x, c.clone()).unwrap()).unwrap();
        let sol = Solution { method: Method::Andreev, u_coeffs: c, aux_coeffs: Some(vec![0.0; y.dim()]), diagnostics: Default::default() };
        let r = error_report(&problem, &sol, &x, &y, 2).unwrap();
        for v in [r.err_x, r.err_y, r.err_t, r.err_0, r.err_aux_y.unwrap()] {
            assert!(v < 1e-8, "{r:?}");
        }
        let (best, err) = best_approx_xnorm(&problem, &x, 4).unwrap();
        assert!(err < 1e-8);
        for (a, b) in best.iter().zip(&sol.u_coeffs) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn reference_dual_norm_of_discrete_function_matches_exact_h_minus_one() {
        // For e = −u^δ the reference dual norm approaches the exact one.
        let (x, _) = standard_spaces(Method::NewMixed, 3, 4, 1.0).unwrap();
        let c = x.interpolate(|t, s| t * t * s * (1.0 - s) + (PI * s).sin()).unwrap();
        let zero = ExactSolution::zero();
        let [err_x, ..] = x_error(&zero, 1.0, &x, &c, 16).unwrap();
        let exact = x_norm_discrete(&x, &c).unwrap();
        assert!(err_x <= exact * (1.0 + 1e-12));
        assert_relative_eq!(err_x, exact, max_relative = 1e-3);
    }

    #[test]
    fn report_parts_and_best_approximation() {
        for problem in [ProblemDef::smooth(0.0), ProblemDef::singular(0.0)] {
            let (_, best) = {
                let (x, _) = standard_spaces(Method::NewMixed, 8, 8, 1.0).unwrap();
                best_approx_xnorm(&problem, &x, 4).unwrap()
            };
            for method in Method::ALL {
                let run = run_method(method, &problem, 8, SolverKind::Direct).unwrap();
                let r = error_report(&problem, &run.solution, &run.x, &run.y, 4).unwrap();
                assert!(r.err_x * r.err_x >= r.err_y * r.err_y + r.err_t * r.err_t - 1e-12);
                assert!(best <= r.err_x * (1.0 + 1e-9), "{method}: best {best} vs {}", r.err_x);
                assert_eq!(r.err_aux_y.is_none(), method == Method::Steinbach);
            }
        }
    }

    #[test]
    fn reference_space_dimensions() {
        let (x, _) = standard_spaces(Method::NewMixed, 4, 4, 1.0).unwrap();
        let r = reference_space(&x, 4).unwrap();
        assert_eq!(r.temporal().dim(), 16);
        assert_eq!(r.spatial().dim(), 15);
        assert!(r.temporal().partition().refines(&Partition1D::uniform(4, 1.0).unwrap()));
    }
}
