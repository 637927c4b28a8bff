//! Space-time tensor-product spaces, operator matrices and load vectors.

use std::fmt;
use std::sync::Arc;

use crate::error::{invalid, Result};
use crate::fe1d::{
    assemble_1d, pairing_matrix, Constraint, FESpace1D, Family, FormKind, LocalShape, PairingKind, Partition1D,
};
use crate::quadrature::{GaussLegendre, TriangleRule};
use crate::sparse::OperatorMatrix;

/// Gauss points per direction on space-time cells.
pub const QUAD_ORDER: usize = 5;

/// Tensor product `temporal ⊗ spatial`; basis `(k_t, k_x) ↦ k_t·n_x + k_x`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeSpace {
    temporal: FESpace1D,
    spatial: FESpace1D,
}

impl SpaceTimeSpace {
    pub fn new(temporal: FESpace1D, spatial: FESpace1D) -> Result<Self> {
        if spatial.family() != Family::P1Continuous || spatial.constraint() != Constraint::ZeroBoth {
            return invalid("the spatial factor must be P1 vanishing at both ends");
        }
        Ok(Self { temporal, spatial })
    }

    pub fn temporal(&self) -> &FESpace1D {
        &self.temporal
    }

    pub fn spatial(&self) -> &FESpace1D {
        &self.spatial
    }

    pub fn dim(&self) -> usize {
        self.temporal.dim() * self.spatial.dim()
    }

    pub fn index(&self, kt: usize, kx: usize) -> usize {
        kt * self.spatial.dim() + kx
    }

    /// Inverse of [`index`](Self::index).
    pub fn split_index(&self, i: usize) -> (usize, usize) {
        (i / self.spatial.dim(), i % self.spatial.dim())
    }

    /// Value, time derivative and space derivative of the function with
    /// coefficients `coeffs`, using the polynomial pieces of cell `(et, ex)`.
    pub fn eval_on_cell(&self, coeffs: &[f64], et: usize, ex: usize, t: f64, x: f64) -> [f64; 3] {
        let xs: Vec<LocalShape> = self.spatial.shapes(ex, x).collect();
        let mut out = [0.0; 3];
        for (dt, vt, gt) in self.temporal.shapes(et, t) {
            for &(dx, vx, gx) in &xs {
                let c = coeffs[self.index(dt, dx)];
                out[0] += c * vt * vx;
                out[1] += c * gt * vx;
                out[2] += c * vt * gx;
            }
        }
        out
    }

    /// Point value of a coefficient vector (left-element convention in time).
    pub fn evaluate(&self, coeffs: &[f64], t: f64, x: f64) -> Result<f64> {
        if coeffs.len() != self.dim() {
            return invalid(format!("expected {} coefficients, got {}", self.dim(), coeffs.len()));
        }
        let (Some(et), Some(ex)) = (self.temporal.partition().locate(t), self.spatial.partition().locate(x)) else {
            return invalid(format!("point ({t}, {x}) outside the space-time cylinder"));
        };
        Ok(self.eval_on_cell(coeffs, et, ex, t, x)[0])
    }

    /// Spatial coefficients of the trace at time `s` (P1 temporal factor).
    pub fn trace(&self, coeffs: &[f64], s: f64) -> Result<Vec<f64>> {
        if self.temporal.family() != Family::P1Continuous {
            return invalid("traces need a continuous temporal factor");
        }
        let e = self.temporal.basis_values_at(s)?;
        let nx = self.spatial.dim();
        let mut out = vec![0.0; nx];
        for (kt, w) in e.iter().enumerate() {
            if *w != 0.0 {
                for (kx, o) in out.iter_mut().enumerate() {
                    *o += w * coeffs[kt * nx + kx];
                }
            }
        }
        Ok(out)
    }

    /// Nodal interpolant of `f` (both factors P1).
    pub fn interpolate(&self, f: impl Fn(f64, f64) -> f64) -> Result<Vec<f64>> {
        let tn = self.temporal.dof_nodes();
        let xn = self.spatial.dof_nodes();
        if self.temporal.family() != Family::P1Continuous {
            return invalid("nodal interpolation needs a continuous temporal factor");
        }
        Ok(tn.iter().flat_map(|&t| xn.iter().map(move |&x| (t, x))).map(|(t, x)| f(t, x)).collect())
    }
}

pub type Field = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
pub type Profile = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Prescribed solution `u(t, x)` with its classical partial derivatives.
#[derive(Clone)]
pub struct ExactSolution {
    pub value: Field,
    pub dt: Field,
    pub dx: Field,
    /// Marks `t = x` as a line across which `u` is only Lipschitz.
    pub singular_line: bool,
}

impl fmt::Debug for ExactSolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExactSolution").field("singular_line", &self.singular_line).finish_non_exhaustive()
    }
}

impl ExactSolution {
    /// `u = e^{-2t} sin πx`.
    pub fn smooth() -> Self {
        use std::f64::consts::PI;
        Self {
            value: Arc::new(|t, x| (-2.0 * t).exp() * (PI * x).sin()),
            dt: Arc::new(|t, x| -2.0 * (-2.0 * t).exp() * (PI * x).sin()),
            dx: Arc::new(|t, x| PI * (-2.0 * t).exp() * (PI * x).cos()),
            singular_line: false,
        }
    }

    /// `u = e^{-2t} |t - x| sin πx`.
    pub fn singular() -> Self {
        use std::f64::consts::PI;
        let sgn = |t: f64, x: f64| if t > x { 1.0 } else if t < x { -1.0 } else { 0.0 };
        Self {
            value: Arc::new(|t, x| (-2.0 * t).exp() * (t - x).abs() * (PI * x).sin()),
            dt: Arc::new(move |t, x| {
                (-2.0 * t).exp() * (-2.0 * (t - x).abs() + sgn(t, x)) * (PI * x).sin()
            }),
            dx: Arc::new(move |t, x| {
                (-2.0 * t).exp() * (-sgn(t, x) * (PI * x).sin() + (t - x).abs() * PI * (PI * x).cos())
            }),
            singular_line: true,
        }
    }

    pub fn zero() -> Self {
        Self {
            value: Arc::new(|_, _| 0.0),
            dt: Arc::new(|_, _| 0.0),
            dx: Arc::new(|_, _| 0.0),
            singular_line: false,
        }
    }

    /// The discrete function with coefficients `coeffs` in `space`.
    pub fn discrete(space: &SpaceTimeSpace, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != space.dim() {
            return invalid(format!("expected {} coefficients, got {}", space.dim(), coeffs.len()));
        }
        let data = Arc::new((space.clone(), coeffs));
        let eval = move |k: usize| -> Field {
            let data = Arc::clone(&data);
            Arc::new(move |t, x| {
                let (s, c) = &*data;
                let et = s.temporal().partition().locate(t).unwrap_or(0);
                let ex = s.spatial().partition().locate(x).unwrap_or(0);
                s.eval_on_cell(c, et, ex, t, x)[k]
            })
        };
        Ok(Self { value: eval(0), dt: eval(1), dx: eval(2), singular_line: false })
    }
}

/// Model problem: `u_t − u_xx + β u_x = g` on `(0, T) × (0, 1)` with data
/// generated from a prescribed exact solution.
#[derive(Clone)]
pub struct ProblemDef {
    pub t_final: f64,
    pub beta: f64,
    pub exact: ExactSolution,
    pub u0: Profile,
}

impl fmt::Debug for ProblemDef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemDef")
            .field("t_final", &self.t_final)
            .field("beta", &self.beta)
            .field("exact", &self.exact)
            .finish_non_exhaustive()
    }
}

impl ProblemDef {
    /// Problem whose initial datum is the exact solution at `t = 0`.
    pub fn new(t_final: f64, beta: f64, exact: ExactSolution) -> Result<Self> {
        if !(t_final > 0.0) || !t_final.is_finite() {
            return invalid(format!("final time must be positive, got {t_final}"));
        }
        if !beta.is_finite() {
            return invalid("convection coefficient must be finite");
        }
        let v = Arc::clone(&exact.value);
        Ok(Self { t_final, beta, exact, u0: Arc::new(move |x| v(0.0, x)) })
    }

    pub fn smooth(beta: f64) -> Self {
        Self::new(1.0, beta, ExactSolution::smooth()).expect("valid")
    }

    pub fn singular(beta: f64) -> Self {
        Self::new(1.0, beta, ExactSolution::singular()).expect("valid")
    }
}

/// Space-time operators, all represented as `[op(φ_j)(ψ_i)]` with `φ_j`
/// trial and `ψ_i` test basis functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StOp {
    /// `∫∫ φ_x ψ_x`
    As,
    /// `β ∫∫ φ_x ψ`
    Aa,
    /// `∫∫ φ_t ψ`
    Dt,
    /// `Dt + As + Aa`
    B,
    /// `B − As`
    C,
    /// `⟨φ(0), ψ(0)⟩`
    Gamma0,
    /// `⟨φ(T), ψ(T)⟩`
    GammaT,
}

fn check_pair(trial: &SpaceTimeSpace, test: &SpaceTimeSpace) -> Result<()> {
    if trial.spatial() != test.spatial() {
        return invalid("trial and test spaces must share the spatial factor");
    }
    Ok(())
}

fn trace_vector(space: &FESpace1D, s: f64) -> Result<OperatorMatrix> {
    if space.family() != Family::P1Continuous {
        return invalid("trace operators need continuous temporal factors");
    }
    let v = space.basis_values_at(s)?;
    let t: Vec<_> = v.iter().enumerate().filter(|(_, x)| **x != 0.0).map(|(i, x)| (i, 0, *x)).collect();
    Ok(OperatorMatrix::from_triplets(v.len(), 1, t))
}

/// Kronecker-structured assembly of `op` with rows indexed by `test` and
/// columns by `trial`.
pub fn assemble_st(trial: &SpaceTimeSpace, test: &SpaceTimeSpace, op: StOp, beta: f64) -> Result<OperatorMatrix> {
    check_pair(trial, test)?;
    let (tt, rt) = (test.temporal(), trial.temporal());
    let sx = test.spatial();
    let mt = || pairing_matrix(tt, rt, PairingKind::ValueValue);
    let dt = || pairing_matrix(tt, rt, PairingKind::ValueOfDerivative);
    let ax = || assemble_1d(sx, FormKind::Stiffness);
    let mx = || assemble_1d(sx, FormKind::Mass);
    let nx = || assemble_1d(sx, FormKind::Convection);
    let gamma = |s: f64| -> Result<OperatorMatrix> {
        let et = trace_vector(tt, s)?;
        let er = trace_vector(rt, s)?;
        let outer = et.matmul(&er.transpose())?;
        Ok(OperatorMatrix::kron(&outer, &mx()?))
    };
    Ok(match op {
        StOp::As => OperatorMatrix::kron(&mt()?, &ax()?),
        StOp::Aa => OperatorMatrix::kron(&mt()?, &nx()?).scaled(beta),
        StOp::Dt => OperatorMatrix::kron(&dt()?, &mx()?),
        StOp::B => {
            let spatial = ax()?.lin_comb(1.0, &nx()?, beta)?;
            OperatorMatrix::kron(&dt()?, &mx()?).add(&OperatorMatrix::kron(&mt()?, &spatial))?
        }
        StOp::C => OperatorMatrix::kron(&dt()?, &mx()?).add(&OperatorMatrix::kron(&mt()?, &nx()?).scaled(beta))?,
        StOp::Gamma0 => gamma(0.0)?,
        StOp::GammaT => gamma(tt.partition().length())?,
    })
}

/// Reference route for [`assemble_st`]: loops over space-time cells of the
/// finer temporal partition and sums closed-form local tensor integrals.
pub fn assemble_st_by_cells(
    trial: &SpaceTimeSpace,
    test: &SpaceTimeSpace,
    op: StOp,
    beta: f64,
) -> Result<OperatorMatrix> {
    check_pair(trial, test)?;
    if matches!(op, StOp::Gamma0 | StOp::GammaT) {
        return assemble_st(trial, test, op, beta);
    }
    let (tt, rt) = (test.temporal(), trial.temporal());
    if matches!(op, StOp::Dt | StOp::B | StOp::C) && rt.family() != Family::P1Continuous {
        return invalid("time derivatives need a continuous trial temporal factor");
    }
    let fine: &Partition1D = if tt.partition().refines(rt.partition()) {
        tt.partition()
    } else if rt.partition().refines(tt.partition()) {
        rt.partition()
    } else {
        return invalid("temporal partitions are neither equal nor nested");
    };
    let sx = test.spatial();
    let xp = sx.partition();
    // Weights of (value·value, derivative·value) temporal and
    // (value·value, derivative·derivative, derivative·value) spatial integrals.
    let (w_dt, w_as, w_aa) = match op {
        StOp::As => (0.0, 1.0, 0.0),
        StOp::Aa => (0.0, 0.0, beta),
        StOp::Dt => (1.0, 0.0, 0.0),
        StOp::B => (1.0, 1.0, beta),
        StOp::C => (1.0, 0.0, beta),
        StOp::Gamma0 | StOp::GammaT => unreachable!(),
    };
    let mut trip = Vec::new();
    for f in 0..fine.n_elements() {
        let (a, b) = fine.element(f);
        let ht = b - a;
        let mid = 0.5 * (a + b);
        let et = tt.partition().locate(mid).expect("inside");
        let er = rt.partition().locate(mid).expect("inside");
        let ta: Vec<_> = tt.shapes(et, a).collect();
        let tb: Vec<_> = tt.shapes(et, b).collect();
        let ra: Vec<_> = rt.shapes(er, a).collect();
        let rb: Vec<_> = rt.shapes(er, b).collect();
        for ex in 0..xp.n_elements() {
            let hx = xp.h(ex);
            let xa: Vec<_> = sx.shapes(ex, xp.element(ex).0).collect();
            let xb: Vec<_> = sx.shapes(ex, xp.element(ex).1).collect();
            for (ti, &(i_t, pa, _)) in ta.iter().enumerate() {
                let pb = tb[ti].1;
                for (rj, &(j_t, fa, df)) in ra.iter().enumerate() {
                    let fb = rb[rj].1;
                    let m_t = ht / 6.0 * (2.0 * fa * pa + fa * pb + fb * pa + 2.0 * fb * pb);
                    let d_t = df * ht * 0.5 * (pa + pb);
                    for (xi, &(i_x, qa, dq)) in xa.iter().enumerate() {
                        let qb = xb[xi].1;
                        for (xj, &(j_x, ga, dg)) in xa.iter().enumerate() {
                            let gb = xb[xj].1;
                            let m_x = hx / 6.0 * (2.0 * ga * qa + ga * qb + gb * qa + 2.0 * gb * qb);
                            let a_x = dg * dq * hx;
                            let n_x = dg * hx * 0.5 * (qa + qb);
                            let v = w_dt * d_t * m_x + m_t * (w_as * a_x + w_aa * n_x);
                            if v != 0.0 {
                                trip.push((test.index(i_t, i_x), trial.index(j_t, j_x), v));
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(OperatorMatrix::from_triplets(test.dim(), trial.dim(), trip))
}

/// A quadrature point inside space-time cell `(et, ex)` of some tensor mesh.
#[derive(Debug, Clone, Copy)]
pub struct CellPoint {
    pub et: usize,
    pub ex: usize,
    pub t: f64,
    pub x: f64,
    pub w: f64,
}

/// Clips a convex polygon to the half-plane `sign·(t − x) ≥ 0`.
fn clip(poly: &[(f64, f64)], sign: f64) -> Vec<(f64, f64)> {
    let side = |p: &(f64, f64)| sign * (p.0 - p.1);
    let mut out = Vec::with_capacity(poly.len() + 1);
    for k in 0..poly.len() {
        let (p, q) = (poly[k], poly[(k + 1) % poly.len()]);
        let (sp, sq) = (side(&p), side(&q));
        if sp >= 0.0 {
            out.push(p);
        }
        if (sp > 0.0 && sq < 0.0) || (sp < 0.0 && sq > 0.0) {
            let s = sp / (sp - sq);
            out.push((p.0 + s * (q.0 - p.0), p.1 + s * (q.1 - p.1)));
        }
    }
    out
}

fn polygon_area(poly: &[(f64, f64)]) -> f64 {
    let n = poly.len();
    0.5 * (0..n).map(|k| poly[k].0 * poly[(k + 1) % n].1 - poly[(k + 1) % n].0 * poly[k].1).sum::<f64>().abs()
}

/// Calls `f` at every quadrature point of the tensor mesh
/// `tpart × xpart`: tensor Gauss rules on ordinary cells and, when
/// `breakline` is set, triangle rules on both sides of `t = x` in cells the
/// line cuts through.
pub fn for_each_cell_point(
    tpart: &Partition1D,
    xpart: &Partition1D,
    breakline: bool,
    order: usize,
    mut f: impl FnMut(CellPoint),
) {
    let gauss = GaussLegendre::new(order);
    let tri = TriangleRule::new(order);
    let gx: Vec<Vec<(f64, f64)>> = (0..xpart.n_elements())
        .map(|ex| {
            let (a, b) = xpart.element(ex);
            gauss.on_interval(a, b).collect()
        })
        .collect();
    for et in 0..tpart.n_elements() {
        let (t0, t1) = tpart.element(et);
        let gt: Vec<(f64, f64)> = gauss.on_interval(t0, t1).collect();
        for ex in 0..xpart.n_elements() {
            let (x0, x1) = xpart.element(ex);
            let area = (t1 - t0) * (x1 - x0);
            let tol = 1e-13 * (t1 - t0).max(x1 - x0);
            let cut = breakline && (t0 - x1) < -tol && (t1 - x0) > tol;
            if !cut {
                for &(t, wt) in &gt {
                    for &(x, wx) in &gx[ex] {
                        f(CellPoint { et, ex, t, x, w: wt * wx });
                    }
                }
                continue;
            }
            let rect = [(t0, x0), (t1, x0), (t1, x1), (t0, x1)];
            for sign in [1.0, -1.0] {
                let poly = clip(&rect, sign);
                if poly.len() < 3 || polygon_area(&poly) <= 1e-14 * area {
                    continue;
                }
                for k in 1..poly.len() - 1 {
                    for (t, x, w) in tri.on_triangle(poly[0], poly[k], poly[k + 1]) {
                        f(CellPoint { et, ex, t, x, w });
                    }
                }
            }
        }
    }
}

/// Load vector `g(ψ_i) = (B u)(ψ_i) = ∫∫ u_t ψ_i + u_x ∂_xψ_i + β u_x ψ_i`
/// with `u` the exact solution of `problem`.
pub fn assemble_load(test: &SpaceTimeSpace, problem: &ProblemDef) -> Vec<f64> {
    let mut g = vec![0.0; test.dim()];
    let ex_sol = &problem.exact;
    let (tp, xp) = (test.temporal().partition(), test.spatial().partition());
    for_each_cell_point(tp, xp, ex_sol.singular_line, QUAD_ORDER, |p| {
        let ut = (ex_sol.dt)(p.t, p.x);
        let ux = (ex_sol.dx)(p.t, p.x);
        if ut == 0.0 && ux == 0.0 {
            return;
        }
        let xs: Vec<LocalShape> = test.spatial().shapes(p.ex, p.x).collect();
        for (kt, vt, _) in test.temporal().shapes(p.et, p.t) {
            for &(kx, vx, gx) in &xs {
                let psi = vt * vx;
                g[test.index(kt, kx)] += p.w * (ut * psi + ux * vt * gx + problem.beta * ux * psi);
            }
        }
    });
    g
}

/// Spatial load `[∫ f φ_i]` by Gauss quadrature on each spatial cell.
pub fn spatial_load(spatial: &FESpace1D, f: impl Fn(f64) -> f64) -> Vec<f64> {
    let gauss = GaussLegendre::new(QUAD_ORDER);
    let part = spatial.partition();
    let mut out = vec![0.0; spatial.dim()];
    for e in 0..part.n_elements() {
        let (a, b) = part.element(e);
        for (x, w) in gauss.on_interval(a, b) {
            let fx = f(x);
            for (d, v, _) in spatial.shapes(e, x) {
                out[d] += w * fx * v;
            }
        }
    }
    out
}

/// Vector `[⟨u0, ψ_i(0, ·)⟩]` over a test space with continuous temporal
/// factor.
pub fn assemble_initial(test: &SpaceTimeSpace, u0: impl Fn(f64) -> f64) -> Result<Vec<f64>> {
    if test.temporal().family() != Family::P1Continuous {
        return invalid("initial traces need a continuous temporal factor");
    }
    let e0 = test.temporal().basis_values_at(0.0)?;
    let fx = spatial_load(test.spatial(), u0);
    Ok(e0.iter().flat_map(|&a| fx.iter().map(move |&b| a * b)).collect())
}
