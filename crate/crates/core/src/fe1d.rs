//! One-dimensional partitions, finite element spaces and their matrices.
//!
//! Every space uses one canonical basis: nodal hat functions (value 1 at
//! their own node) for `P1Continuous` and unit characteristic functions of
//! the elements for `P0Discontinuous`. Basis indices follow breakpoint
//! order. All element integrals of polynomial forms are evaluated in closed
//! form.

use nalgebra::DMatrix;

use crate::error::{invalid, Result};
use crate::quadrature::GaussLegendre;
use crate::sparse::OperatorMatrix;

/// Relative tolerance used to decide whether two breakpoints coincide.
const POINT_TOL: f64 = 1e-12;

/// Strictly increasing breakpoints `0 = p_0 < p_1 < … < p_n = L`.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition1D {
    points: Vec<f64>,
}

impl Partition1D {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return invalid("a partition needs at least two points");
        }
        if points[0] != 0.0 {
            return invalid(format!("partition must start at 0, got {}", points[0]));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return invalid("partition points must be finite");
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return invalid("partition points must be strictly increasing");
        }
        Ok(Self { points })
    }

    /// `n` equal elements on `(0, length)`.
    pub fn uniform(n: usize, length: f64) -> Result<Self> {
        if n == 0 {
            return invalid("uniform partition needs at least one element");
        }
        if !(length > 0.0) || !length.is_finite() {
            return invalid(format!("interval length must be positive, got {length}"));
        }
        let mut points: Vec<f64> = (0..=n).map(|i| length * i as f64 / n as f64).collect();
        points[n] = length;
        Ok(Self { points })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn n_elements(&self) -> usize {
        self.points.len() - 1
    }

    pub fn length(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    /// Length of element `i`.
    pub fn h(&self, i: usize) -> f64 {
        self.points[i + 1] - self.points[i]
    }

    pub fn element_lengths(&self) -> Vec<f64> {
        self.points.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn element(&self, i: usize) -> (f64, f64) {
        (self.points[i], self.points[i + 1])
    }

    /// Splits every element into `factor` equal pieces.
    pub fn refine(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return invalid("refinement factor must be positive");
        }
        let mut pts = Vec::with_capacity(self.n_elements() * factor + 1);
        for w in self.points.windows(2) {
            for k in 0..factor {
                pts.push(w[0] + (w[1] - w[0]) * k as f64 / factor as f64);
            }
        }
        pts.push(self.length());
        Self::new(pts)
    }

    fn same_point(&self, a: f64, b: f64) -> bool {
        (a - b).abs() <= POINT_TOL * self.length()
    }

    pub fn same_as(&self, other: &Self) -> bool {
        self.points.len() == other.points.len()
            && self.points.iter().zip(&other.points).all(|(a, b)| self.same_point(*a, *b))
    }

    /// True when every breakpoint of `coarse` is a breakpoint of `self`.
    pub fn refines(&self, coarse: &Self) -> bool {
        if !self.same_point(self.length(), coarse.length()) {
            return false;
        }
        let mut k = 0;
        for &c in &coarse.points {
            while k < self.points.len() && self.points[k] < c && !self.same_point(self.points[k], c) {
                k += 1;
            }
            if k == self.points.len() || !self.same_point(self.points[k], c) {
                return false;
            }
        }
        true
    }

    /// Element containing `x`, with `x` on a breakpoint assigned to the
    /// element on its left (element 0 for `x = 0`).
    pub fn locate(&self, x: f64) -> Option<usize> {
        let n = self.n_elements();
        let tol = POINT_TOL * self.length();
        if x < -tol || x > self.length() + tol {
            return None;
        }
        // First index with points[i] >= x, minus one.
        let i = self.points.partition_point(|&p| p < x);
        Some(i.saturating_sub(1).min(n - 1))
    }
}

/// Polynomial family of a one-dimensional space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    P1Continuous,
    P0Discontinuous,
}

/// Homogeneous Dirichlet constraints at the interval ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constraint {
    None,
    ZeroLeft,
    ZeroRight,
    ZeroBoth,
}

impl Constraint {
    fn left(self) -> bool {
        matches!(self, Constraint::ZeroLeft | Constraint::ZeroBoth)
    }

    fn right(self) -> bool {
        matches!(self, Constraint::ZeroRight | Constraint::ZeroBoth)
    }
}

/// Basis function restricted to one element: `(dof, value, derivative)`.
pub type LocalShape = (usize, f64, f64);

#[derive(Debug, Clone, PartialEq)]
pub struct FESpace1D {
    partition: Partition1D,
    family: Family,
    constraint: Constraint,
}

impl FESpace1D {
    pub fn new(partition: Partition1D, family: Family, constraint: Constraint) -> Result<Self> {
        if family == Family::P0Discontinuous && constraint != Constraint::None {
            return invalid("boundary constraints apply to continuous spaces only");
        }
        let space = Self { partition, family, constraint };
        if space.dim() == 0 {
            return invalid("space has no degrees of freedom");
        }
        Ok(space)
    }

    pub fn p1(partition: Partition1D, constraint: Constraint) -> Result<Self> {
        Self::new(partition, Family::P1Continuous, constraint)
    }

    pub fn p0(partition: Partition1D) -> Result<Self> {
        Self::new(partition, Family::P0Discontinuous, Constraint::None)
    }

    pub fn partition(&self) -> &Partition1D {
        &self.partition
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn constraint(&self) -> Constraint {
        self.constraint
    }

    pub fn dim(&self) -> usize {
        let n = self.partition.n_elements();
        match self.family {
            Family::P0Discontinuous => n,
            Family::P1Continuous => {
                (n + 1) - usize::from(self.constraint.left()) - usize::from(self.constraint.right())
            }
        }
    }

    /// Degree of freedom of node `k` of a continuous space, if unconstrained.
    pub fn node_dof(&self, k: usize) -> Option<usize> {
        let n = self.partition.n_elements();
        if self.family != Family::P1Continuous || k > n {
            return None;
        }
        if (k == 0 && self.constraint.left()) || (k == n && self.constraint.right()) {
            return None;
        }
        Some(k - usize::from(self.constraint.left()))
    }

    /// Node coordinate carrying each degree of freedom (P1 only).
    pub fn dof_nodes(&self) -> Vec<f64> {
        let pts = self.partition.points();
        (0..pts.len()).filter(|&k| self.node_dof(k).is_some()).map(|k| pts[k]).collect()
    }

    /// Active basis functions on element `e`, evaluated at `x`. The
    /// polynomial piece of element `e` is used even when `x` lies outside it.
    pub fn shapes(&self, e: usize, x: f64) -> impl Iterator<Item = LocalShape> {
        let (a, b) = self.partition.element(e);
        let h = b - a;
        let mut out: [Option<LocalShape>; 2] = [None, None];
        match self.family {
            Family::P0Discontinuous => out[0] = Some((e, 1.0, 0.0)),
            Family::P1Continuous => {
                if let Some(d) = self.node_dof(e) {
                    out[0] = Some((d, (b - x) / h, -1.0 / h));
                }
                if let Some(d) = self.node_dof(e + 1) {
                    out[1] = Some((d, (x - a) / h, 1.0 / h));
                }
            }
        }
        out.into_iter().flatten()
    }

    /// Values of all basis functions at `x` (boundary point traces for P1).
    pub fn basis_values_at(&self, x: f64) -> Result<Vec<f64>> {
        let Some(e) = self.partition.locate(x) else {
            return invalid(format!("point {x} outside (0, {})", self.partition.length()));
        };
        let mut v = vec![0.0; self.dim()];
        for (d, val, _) in self.shapes(e, x) {
            v[d] = val;
        }
        Ok(v)
    }

    /// Nodal interpolant of `f` (P1 only).
    pub fn interpolate(&self, f: impl Fn(f64) -> f64) -> Result<Vec<f64>> {
        if self.family != Family::P1Continuous {
            return invalid("nodal interpolation needs a continuous P1 space");
        }
        Ok(self.dof_nodes().into_iter().map(f).collect())
    }
}

/// Bilinear forms assembled on a single space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormKind {
    /// `∫ φ_j φ_i`
    Mass,
    /// `∫ φ_j′ φ_i′`
    Stiffness,
    /// `∫ φ_j′ φ_i`
    Convection,
}

/// Pairings between a test space (rows) and a trial space (columns).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairingKind {
    /// `∫ φ_j ψ_i`
    ValueValue,
    /// `∫ φ_j′ ψ_i`
    ValueOfDerivative,
    /// `∫ φ_j′ ψ_i′`
    DerivativeDerivative,
}

/// Mass, stiffness or convection matrix of `space` from closed-form element
/// matrices.
pub fn assemble_1d(space: &FESpace1D, kind: FormKind) -> Result<OperatorMatrix> {
    let part = space.partition();
    let n = space.dim();
    let mut t = Vec::new();
    match space.family() {
        Family::P0Discontinuous => {
            if kind != FormKind::Mass {
                return invalid(format!("{kind:?} needs a continuous P1 space"));
            }
            for e in 0..part.n_elements() {
                t.push((e, e, part.h(e)));
            }
        }
        Family::P1Continuous => {
            for e in 0..part.n_elements() {
                let h = part.h(e);
                let local: [[f64; 2]; 2] = match kind {
                    FormKind::Mass => [[h / 3.0, h / 6.0], [h / 6.0, h / 3.0]],
                    FormKind::Stiffness => [[1.0 / h, -1.0 / h], [-1.0 / h, 1.0 / h]],
                    // row = test (i), column = trial (j): φ_j′ · ∫φ_i = φ_j′ h / 2
                    FormKind::Convection => [[-0.5, 0.5], [-0.5, 0.5]],
                };
                let dofs = [space.node_dof(e), space.node_dof(e + 1)];
                for (li, di) in dofs.iter().enumerate() {
                    for (lj, dj) in dofs.iter().enumerate() {
                        if let (Some(i), Some(j)) = (di, dj) {
                            t.push((*i, *j, local[li][lj]));
                        }
                    }
                }
            }
        }
    }
    Ok(OperatorMatrix::from_triplets(n, n, t))
}

/// Pairing matrix `[∫ b(φ_j, ψ_i)]` between a test space and a trial space
/// whose partitions are equal or nested (either may be the finer one).
pub fn pairing_matrix(test: &FESpace1D, trial: &FESpace1D, kind: PairingKind) -> Result<OperatorMatrix> {
    let needs_trial_derivative = matches!(kind, PairingKind::ValueOfDerivative | PairingKind::DerivativeDerivative);
    if needs_trial_derivative && trial.family() != Family::P1Continuous {
        return invalid(format!("{kind:?} needs a continuous P1 trial space"));
    }
    if kind == PairingKind::DerivativeDerivative && test.family() != Family::P1Continuous {
        return invalid("DerivativeDerivative needs a continuous P1 test space");
    }
    let (tp, rp) = (test.partition(), trial.partition());
    let fine = if tp.refines(rp) {
        tp
    } else if rp.refines(tp) {
        rp
    } else {
        return invalid("test and trial partitions are neither equal nor nested");
    };
    let mut t = Vec::new();
    for f in 0..fine.n_elements() {
        let (a, b) = fine.element(f);
        let h = b - a;
        let mid = 0.5 * (a + b);
        let et = tp.locate(mid).expect("midpoint inside");
        let er = rp.locate(mid).expect("midpoint inside");
        let test_a: Vec<LocalShape> = test.shapes(et, a).collect();
        let test_b: Vec<LocalShape> = test.shapes(et, b).collect();
        let trial_a: Vec<LocalShape> = trial.shapes(er, a).collect();
        let trial_b: Vec<LocalShape> = trial.shapes(er, b).collect();
        for (ti, &(i, pa, dpsi)) in test_a.iter().enumerate() {
            let pb = test_b[ti].1;
            for (rj, &(j, fa, dphi)) in trial_a.iter().enumerate() {
                let fb = trial_b[rj].1;
                let v = match kind {
                    PairingKind::ValueValue => h / 6.0 * (2.0 * fa * pa + fa * pb + fb * pa + 2.0 * fb * pb),
                    PairingKind::ValueOfDerivative => dphi * h * 0.5 * (pa + pb),
                    PairingKind::DerivativeDerivative => dphi * dpsi * h,
                };
                if v != 0.0 {
                    t.push((i, j, v));
                }
            }
        }
    }
    Ok(OperatorMatrix::from_triplets(test.dim(), trial.dim(), t))
}

/// Matrix mapping coefficients on `coarse` to the same function's
/// coefficients on `fine` (same family and constraint, nested partitions).
pub fn prolongation(coarse: &FESpace1D, fine: &FESpace1D) -> Result<OperatorMatrix> {
    if coarse.family() != fine.family() || coarse.constraint() != fine.constraint() {
        return invalid("prolongation needs matching family and constraint");
    }
    if !fine.partition().refines(coarse.partition()) {
        return invalid("fine partition does not refine the coarse partition");
    }
    let mut t = Vec::new();
    match fine.family() {
        Family::P1Continuous => {
            for (k, &x) in fine.partition().points().iter().enumerate() {
                let Some(row) = fine.node_dof(k) else { continue };
                let e = coarse.partition().locate(x).expect("inside");
                for (j, v, _) in coarse.shapes(e, x) {
                    if v.abs() > 1e-15 {
                        t.push((row, j, v));
                    }
                }
            }
        }
        Family::P0Discontinuous => {
            let fp = fine.partition();
            for f in 0..fp.n_elements() {
                let (a, b) = fp.element(f);
                let e = coarse.partition().locate(0.5 * (a + b)).expect("inside");
                t.push((f, e, 1.0));
            }
        }
    }
    Ok(OperatorMatrix::from_triplets(fine.dim(), coarse.dim(), t))
}

/// Exact `H⁻¹(0, L)` Gram matrix `W[i,j] = ⟨φ_i, φ_j⟩_{H⁻¹}` of the hat basis
/// of a P1 space with both ends constrained.
///
/// The Riesz representative `w_k ∈ H¹₀` of `φ_k` solves `−w_k″ = φ_k`, so
/// `w_k′ = c_k − Φ_k` with `Φ_k(x) = ∫₀ˣ φ_k` and `c_k = (1/L)∫₀ᴸ Φ_k`.
/// This yields `W[i,j] = ∫ Φ_i Φ_j − L c_i c_j`, integrated exactly with a
/// four-point Gauss rule per cell (the integrand is quartic).
pub fn hminus1_gram(space: &FESpace1D) -> Result<DMatrix<f64>> {
    if space.family() != Family::P1Continuous || space.constraint() != Constraint::ZeroBoth {
        return invalid("the H^-1 Gram needs a P1 space vanishing at both ends");
    }
    let part = space.partition();
    let pts = part.points();
    let n = space.dim();
    let big_l = part.length();
    // Antiderivative of the hat at interior node k.
    let antideriv = |k: usize, x: f64| -> f64 {
        let (xl, xc, xr) = (pts[k - 1], pts[k], pts[k + 1]);
        let (h1, h2) = (xc - xl, xr - xc);
        if x <= xl {
            0.0
        } else if x <= xc {
            (x - xl) * (x - xl) / (2.0 * h1)
        } else if x <= xr {
            0.5 * h1 + (h2 * h2 - (xr - x) * (xr - x)) / (2.0 * h2)
        } else {
            0.5 * (h1 + h2)
        }
    };
    let gauss = GaussLegendre::new(4);
    let mut gram = DMatrix::zeros(n, n);
    let mut mean = vec![0.0; n];
    let mut phi = vec![0.0; n];
    for e in 0..part.n_elements() {
        let (a, b) = part.element(e);
        for (x, w) in gauss.on_interval(a, b) {
            for (d, slot) in phi.iter_mut().enumerate() {
                *slot = antideriv(d + 1, x);
            }
            for i in 0..n {
                mean[i] += w * phi[i];
                if phi[i] == 0.0 {
                    continue;
                }
                let wi = w * phi[i];
                for j in 0..n {
                    gram[(i, j)] += wi * phi[j];
                }
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            gram[(i, j)] -= mean[i] * mean[j] / big_l;
        }
    }
    Ok((&gram + gram.transpose()) * 0.5)
}

/// Point values of the function with coefficients `coeffs` in `space`.
/// P0 functions take the left element's value at interior breakpoints.
pub fn evaluate(space: &FESpace1D, coeffs: &[f64], pts: &[f64]) -> Result<Vec<f64>> {
    if coeffs.len() != space.dim() {
        return invalid(format!("expected {} coefficients, got {}", space.dim(), coeffs.len()));
    }
    pts.iter()
        .map(|&x| {
            let Some(e) = space.partition().locate(x) else {
                return invalid(format!("point {x} outside (0, {})", space.partition().length()));
            };
            Ok(space.shapes(e, x).map(|(d, v, _)| coeffs[d] * v).sum())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SparseCholesky;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn unit(n: usize) -> Partition1D {
        Partition1D::uniform(n, 1.0).unwrap()
    }

    #[test]
    fn uniform_partition_examples() {
        assert_eq!(unit(1).points(), &[0.0, 1.0]);
        assert_eq!(unit(4).points(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        let p = Partition1D::uniform(2, 2.0).unwrap();
        assert!(p.element_lengths().iter().all(|&h| h == 1.0));
        assert!(Partition1D::uniform(0, 1.0).is_err());
        assert!(Partition1D::uniform(3, 0.0).is_err());
        assert!(Partition1D::uniform(3, -1.0).is_err());
    }

    #[test]
    fn invalid_partitions_rejected() {
        assert!(Partition1D::new(vec![0.0]).is_err());
        assert!(Partition1D::new(vec![0.0, 0.5, 0.5, 1.0]).is_err());
        assert!(Partition1D::new(vec![0.0, 0.7, 0.3]).is_err());
    }

    #[test]
    fn dimensions_follow_constraints() {
        let p = unit(5);
        assert_eq!(FESpace1D::p1(p.clone(), Constraint::None).unwrap().dim(), 6);
        assert_eq!(FESpace1D::p1(p.clone(), Constraint::ZeroLeft).unwrap().dim(), 5);
        assert_eq!(FESpace1D::p1(p.clone(), Constraint::ZeroRight).unwrap().dim(), 5);
        assert_eq!(FESpace1D::p1(p.clone(), Constraint::ZeroBoth).unwrap().dim(), 4);
        assert_eq!(FESpace1D::p0(p.clone()).unwrap().dim(), 5);
        assert!(FESpace1D::new(p, Family::P0Discontinuous, Constraint::ZeroLeft).is_err());
        assert!(FESpace1D::p1(unit(1), Constraint::ZeroBoth).is_err());
    }

    #[test]
    fn stiffness_and_mass_on_uniform_mesh() {
        let s = FESpace1D::p1(unit(4), Constraint::ZeroBoth).unwrap();
        let a = assemble_1d(&s, FormKind::Stiffness).unwrap();
        let m = assemble_1d(&s, FormKind::Mass).unwrap();
        let h = 0.25;
        for i in 0..3 {
            assert_relative_eq!(a.get(i, i), 8.0, epsilon = 1e-13);
            assert_relative_eq!(m.get(i, i), 4.0 * h / 6.0, epsilon = 1e-15);
            if i + 1 < 3 {
                assert_relative_eq!(a.get(i, i + 1), -4.0, epsilon = 1e-13);
                assert_relative_eq!(a.get(i + 1, i), -4.0, epsilon = 1e-13);
                assert_relative_eq!(m.get(i, i + 1), h / 6.0, epsilon = 1e-15);
            }
        }
        assert_eq!(a.get(0, 2), 0.0);
    }

    #[test]
    fn convection_is_skew_tridiagonal_independent_of_h() {
        for n in [4, 7, 16] {
            let s = FESpace1D::p1(unit(n), Constraint::ZeroBoth).unwrap();
            let c = assemble_1d(&s, FormKind::Convection).unwrap();
            for i in 0..s.dim() {
                assert!(c.get(i, i).abs() < 1e-15);
                if i + 1 < s.dim() {
                    assert_relative_eq!(c.get(i, i + 1), 0.5, epsilon = 1e-15);
                    assert_relative_eq!(c.get(i + 1, i), -0.5, epsilon = 1e-15);
                }
            }
            assert!(c.is_skew_symmetric(1e-13));
        }
    }

    #[test]
    fn p0_mass_is_diagonal_h() {
        let s = FESpace1D::p0(Partition1D::uniform(5, 2.0).unwrap()).unwrap();
        let m = assemble_1d(&s, FormKind::Mass).unwrap();
        for i in 0..5 {
            assert_relative_eq!(m.get(i, i), 0.4, epsilon = 1e-15);
        }
        assert_eq!(m.nnz(), 5);
        assert!(assemble_1d(&s, FormKind::Stiffness).is_err());
        assert!(assemble_1d(&s, FormKind::Convection).is_err());
    }

    #[test]
    fn stiffness_rows_vanish_for_unconstrained_space() {
        let p = Partition1D::new(vec![0.0, 0.1, 0.35, 0.4, 0.9, 1.3]).unwrap();
        let s = FESpace1D::p1(p, Constraint::None).unwrap();
        let a = assemble_1d(&s, FormKind::Stiffness).unwrap();
        let sums = a.mul_vec(&vec![1.0; s.dim()]);
        assert!(sums.iter().all(|v| v.abs() < 1e-12));
        assert!(a.is_symmetric(1e-13));
    }

    #[test]
    fn derivative_pairing_p1_to_p0_telescopes() {
        let p = unit(5);
        let trial = FESpace1D::p1(p.clone(), Constraint::None).unwrap();
        let test = FESpace1D::p0(p).unwrap();
        let d = pairing_matrix(&test, &trial, PairingKind::ValueOfDerivative).unwrap();
        for i in 0..5 {
            assert_relative_eq!(d.get(i, i), -1.0, epsilon = 1e-14);
            assert_relative_eq!(d.get(i, i + 1), 1.0, epsilon = 1e-14);
        }
        assert_eq!(d.nnz(), 10);
    }

    #[test]
    fn value_pairing_p1_to_p0_gives_half_h() {
        let p = unit(4);
        let trial = FESpace1D::p1(p.clone(), Constraint::None).unwrap();
        let test = FESpace1D::p0(p).unwrap();
        let m = pairing_matrix(&test, &trial, PairingKind::ValueValue).unwrap();
        for e in 0..4 {
            assert_relative_eq!(m.get(e, e), 0.125, epsilon = 1e-15);
            assert_relative_eq!(m.get(e, e + 1), 0.125, epsilon = 1e-15);
        }
    }

    #[test]
    fn scaled_pairing_reproduces_bidiagonal_g() {
        // Hats scaled to max h^{-1/2} against L2-normalized characteristics.
        let n = 4;
        let h = 0.25f64;
        let p = unit(n);
        let hats = FESpace1D::p1(p.clone(), Constraint::ZeroLeft).unwrap();
        let chars = FESpace1D::p0(p).unwrap();
        let g = pairing_matrix(&hats, &chars, PairingKind::ValueValue).unwrap().scaled(1.0 / h);
        for i in 0..n {
            for j in 0..n {
                let expected = if j == i || j == i + 1 { 0.5 } else { 0.0 };
                assert_relative_eq!(g.get(i, j), expected, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn pairing_rejects_unrelated_partitions_and_p0_derivatives() {
        let a = FESpace1D::p1(unit(3), Constraint::None).unwrap();
        let b = FESpace1D::p1(unit(4), Constraint::None).unwrap();
        assert!(pairing_matrix(&a, &b, PairingKind::ValueValue).is_err());
        let c = FESpace1D::p0(unit(3)).unwrap();
        assert!(pairing_matrix(&a, &c, PairingKind::ValueOfDerivative).is_err());
    }

    #[test]
    fn pairing_on_same_space_matches_element_assembly() {
        let p = Partition1D::new(vec![0.0, 0.2, 0.25, 0.6, 1.0]).unwrap();
        let s = FESpace1D::p1(p, Constraint::ZeroRight).unwrap();
        let pairs = [
            (FormKind::Mass, PairingKind::ValueValue),
            (FormKind::Stiffness, PairingKind::DerivativeDerivative),
            (FormKind::Convection, PairingKind::ValueOfDerivative),
        ];
        for (form, pk) in pairs {
            let a = assemble_1d(&s, form).unwrap();
            let b = pairing_matrix(&s, &s, pk).unwrap();
            assert!(a.max_abs_diff(&b) < 1e-14, "{form:?}");
        }
    }

    fn random_partition(cuts: Vec<f64>, length: f64) -> Partition1D {
        let mut pts: Vec<f64> = cuts.into_iter().map(|c| c * length).collect();
        pts.push(0.0);
        pts.push(length);
        pts.sort_by(f64::total_cmp);
        pts.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
        Partition1D::new(pts).unwrap()
    }

    proptest! {
        #[test]
        fn nested_pairing_equals_fine_matrix_times_prolongation(
            cuts in proptest::collection::vec(0.01f64..0.99, 1..6),
            factor in 2usize..4,
            kind_idx in 0usize..3,
            constraint_idx in 0usize..4,
        ) {
            let coarse_part = random_partition(cuts, 1.5);
            let fine_part = coarse_part.refine(factor).unwrap();
            let constraint = [Constraint::None, Constraint::ZeroLeft, Constraint::ZeroRight, Constraint::ZeroBoth][constraint_idx];
            let kind = [PairingKind::ValueValue, PairingKind::ValueOfDerivative, PairingKind::DerivativeDerivative][kind_idx];
            let Ok(trial) = FESpace1D::p1(coarse_part.clone(), constraint) else { return Ok(()) };
            let trial_fine = FESpace1D::p1(fine_part.clone(), constraint).unwrap();
            let tests = [
                FESpace1D::p1(fine_part.clone(), Constraint::None).unwrap(),
                FESpace1D::p0(fine_part.clone()).unwrap(),
            ];
            let prol = prolongation(&trial, &trial_fine).unwrap();
            for test in tests.iter() {
                if kind == PairingKind::DerivativeDerivative && test.family() == Family::P0Discontinuous {
                    continue;
                }
                let direct = pairing_matrix(test, &trial, kind).unwrap();
                let via_fine = pairing_matrix(test, &trial_fine, kind).unwrap().matmul(&prol).unwrap();
                prop_assert!(direct.max_abs_diff(&via_fine) < 1e-12);
            }
        }
    }

    #[test]
    fn evaluate_examples() {
        let p = Partition1D::new(vec![0.0, 0.3, 0.5, 1.0]).unwrap();
        let s = FESpace1D::p1(p.clone(), Constraint::None).unwrap();
        let v = evaluate(&s, &[1.0; 4], &[0.0, 0.1, 0.3, 0.77, 1.0]).unwrap();
        assert!(v.iter().all(|x| (x - 1.0).abs() < 1e-15));
        let s0 = FESpace1D::p1(p.clone(), Constraint::ZeroBoth).unwrap();
        assert_eq!(evaluate(&s0, &[3.0, -2.0], &[0.0]).unwrap(), vec![0.0]);
        let d = FESpace1D::p0(p).unwrap();
        let v = evaluate(&d, &[0.0, 1.0, 2.0], &[0.1, 0.4, 0.8, 0.5]).unwrap();
        assert_eq!(v, vec![0.0, 1.0, 2.0, 1.0]);
        assert!(evaluate(&d, &[0.0, 1.0, 2.0], &[1.5]).is_err());
        assert!(evaluate(&d, &[0.0, 1.0], &[0.5]).is_err());
    }

    /// Oracle: `Pᵀ M_f A_f⁻¹ M_f P` on nested fine meshes, Richardson
    /// extrapolated in the fine mesh size (the Galerkin error is `O(h_f²)`).
    fn fine_mesh_gram(space: &FESpace1D, factor: usize) -> DMatrix<f64> {
        let coarse = galerkin_gram(space, factor);
        let fine = galerkin_gram(space, 2 * factor);
        (fine * 4.0 - coarse) / 3.0
    }

    fn galerkin_gram(space: &FESpace1D, factor: usize) -> DMatrix<f64> {
        let fine = FESpace1D::p1(space.partition().refine(factor).unwrap(), Constraint::ZeroBoth).unwrap();
        let mf = assemble_1d(&fine, FormKind::Mass).unwrap();
        let af = SparseCholesky::new(&assemble_1d(&fine, FormKind::Stiffness).unwrap()).unwrap();
        let cross = mf.matmul(&prolongation(space, &fine).unwrap()).unwrap();
        let n = space.dim();
        let mut cols = Vec::with_capacity(n);
        for j in 0..n {
            let col: Vec<f64> = (0..fine.dim()).map(|i| cross.get(i, j)).collect();
            cols.push(af.solve(&col));
        }
        DMatrix::from_fn(n, n, |i, j| (0..fine.dim()).map(|k| cross.get(k, i) * cols[j][k]).sum())
    }

    #[test]
    fn hminus1_gram_single_hat_matches_fine_oracle() {
        let s = FESpace1D::p1(unit(2), Constraint::ZeroBoth).unwrap();
        let w = hminus1_gram(&s).unwrap();
        assert_relative_eq!(w[(0, 0)], 1.0 / 30.0, max_relative = 1e-13);
        let oracle = fine_mesh_gram(&s, 128);
        assert_relative_eq!(w[(0, 0)], oracle[(0, 0)], max_relative = 1e-9);
    }

    #[test]
    fn hminus1_gram_n8_matches_fine_oracle() {
        let s = FESpace1D::p1(unit(8), Constraint::ZeroBoth).unwrap();
        let w = hminus1_gram(&s).unwrap();
        let oracle = fine_mesh_gram(&s, 64);
        for i in 0..7 {
            for j in 0..7 {
                assert_relative_eq!(w[(i, j)], oracle[(i, j)], max_relative = 1e-8, epsilon = 1e-14);
            }
        }
        let diff = (&w - &oracle).norm() / w.norm();
        assert!(diff < 1e-9);
    }

    #[test]
    fn hminus1_gram_nonuniform_is_spd_and_matches_oracle() {
        let p = Partition1D::new(vec![0.0, 0.1, 0.45, 0.5, 0.8, 1.2]).unwrap();
        let s = FESpace1D::p1(p, Constraint::ZeroBoth).unwrap();
        let w = hminus1_gram(&s).unwrap();
        assert!(w.clone().cholesky().is_some());
        let oracle = fine_mesh_gram(&s, 128);
        assert!((&w - &oracle).norm() / w.norm() < 1e-8);
        let s1 = FESpace1D::p1(unit(3), Constraint::None).unwrap();
        assert!(hminus1_gram(&s1).is_err());
    }
}
