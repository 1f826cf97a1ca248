//! Truncated Taylor jets of order 3 in three chart coordinates.
//!
//! A [`Jet3`] stores the Taylor coefficients of a scalar quantity through
//! total degree 3 around a base point, in graded-lexicographic monomial
//! order. Arithmetic on jets is exact through degree 3, so second and third
//! partial derivatives of anything assembled from jets carry no truncation
//! error. Finite differences exist in this crate only as an independent
//! oracle (see [`crate::fd`]).

use std::sync::Arc;

use crate::error::{Error, Result};

/// Number of monomials of total degree ≤ 3 in three variables.
pub const JET_LEN: usize = 20;

/// Monomial exponents in graded-lexicographic order: degree first, then
/// lexicographic with x1 strongest. This ordering is part of the crate's
/// contract; coefficient slot `k` always refers to `MONOMIALS[k]`.
pub const MONOMIALS: [[u8; 3]; JET_LEN] = [
    [0, 0, 0],
    [1, 0, 0],
    [0, 1, 0],
    [0, 0, 1],
    [2, 0, 0],
    [1, 1, 0],
    [1, 0, 1],
    [0, 2, 0],
    [0, 1, 1],
    [0, 0, 2],
    [3, 0, 0],
    [2, 1, 0],
    [2, 0, 1],
    [1, 2, 0],
    [1, 1, 1],
    [1, 0, 2],
    [0, 3, 0],
    [0, 2, 1],
    [0, 1, 2],
    [0, 0, 3],
];

/// Total degree of each coefficient slot.
const DEGREE: [u8; JET_LEN] = degree_table();

/// `α! = α1!·α2!·α3!` for each slot; converts Taylor coefficients to
/// derivative values.
const FACTORIAL: [f64; JET_LEN] = factorial_table();

/// Slot lookup by exponent triple; -1 marks degree > 3.
const INDEX: [[[i8; 4]; 4]; 4] = index_table();

const fn degree_table() -> [u8; JET_LEN] {
    let mut out = [0u8; JET_LEN];
    let mut k = 0;
    while k < JET_LEN {
        let m = MONOMIALS[k];
        out[k] = m[0] + m[1] + m[2];
        k += 1;
    }
    out
}

const fn factorial_table() -> [f64; JET_LEN] {
    const FACT: [f64; 4] = [1.0, 1.0, 2.0, 6.0];
    let mut out = [0.0f64; JET_LEN];
    let mut k = 0;
    while k < JET_LEN {
        let m = MONOMIALS[k];
        out[k] = FACT[m[0] as usize] * FACT[m[1] as usize] * FACT[m[2] as usize];
        k += 1;
    }
    out
}

const fn index_table() -> [[[i8; 4]; 4]; 4] {
    let mut out = [[[-1i8; 4]; 4]; 4];
    let mut k = 0;
    while k < JET_LEN {
        let m = MONOMIALS[k];
        out[m[0] as usize][m[1] as usize][m[2] as usize] = k as i8;
        k += 1;
    }
    out
}

/// Slot index of the monomial with exponents `e`. Panics if the total
/// degree exceeds 3.
#[inline]
pub fn monomial_index(e: [u8; 3]) -> usize {
    let idx = INDEX[e[0] as usize][e[1] as usize][e[2] as usize];
    debug_assert!(idx >= 0, "monomial degree exceeds 3");
    idx as usize
}

/// Threshold below which a jet's value term counts as zero for division.
/// Chosen to detect true zeros rather than small values.
pub const DIV_THRESHOLD: f64 = 1e-300;

/// A scalar value with all partial derivatives through total order 3,
/// stored as Taylor coefficients around `base`.
///
/// `valid` is the highest total degree whose coefficients are exact.
/// Freshly lifted constants/coordinates are valid through 3; every call
/// to [`Jet3::derivative`] lowers it by one, and binary operations take
/// the minimum. Coefficient slots above the valid degree are kept at
/// exactly zero so that jet comparisons stay deterministic.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet3 {
    base: [f64; 3],
    coeffs: [f64; JET_LEN],
    valid: u8,
}

impl Jet3 {
    /// Lift a constant: value `c`, all derivative coefficients zero.
    pub fn constant(base: [f64; 3], c: f64) -> Self {
        let mut coeffs = [0.0; JET_LEN];
        coeffs[0] = c;
        Jet3 {
            base,
            coeffs,
            valid: 3,
        }
    }

    /// Lift the coordinate function `x_{axis}` (axis ∈ {0,1,2}).
    pub fn coordinate(base: [f64; 3], axis: usize) -> Self {
        assert!(axis < 3);
        let mut coeffs = [0.0; JET_LEN];
        coeffs[0] = base[axis];
        coeffs[1 + axis] = 1.0;
        Jet3 {
            base,
            coeffs,
            valid: 3,
        }
    }

    /// Build a jet from raw Taylor coefficients (valid through degree 3).
    pub fn from_coeffs(base: [f64; 3], coeffs: [f64; JET_LEN]) -> Self {
        Jet3 {
            base,
            coeffs,
            valid: 3,
        }
    }

    pub fn base_point(&self) -> [f64; 3] {
        self.base
    }

    pub fn coeffs(&self) -> &[f64; JET_LEN] {
        &self.coeffs
    }

    /// Highest total degree whose coefficients are exact.
    pub fn valid_degree(&self) -> u8 {
        self.valid
    }

    /// The value of the underlying quantity at the base point.
    #[inline]
    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    /// Extract the partial derivative `∂^α` (multi-index exponents `alpha`,
    /// |α| ≤ 3) as a plain number: Taylor coefficient times α!.
    pub fn extract(&self, alpha: [u8; 3]) -> f64 {
        let k = monomial_index(alpha);
        debug_assert!(
            DEGREE[k] <= self.valid,
            "extracting order {} from a jet valid through {}",
            DEGREE[k],
            self.valid
        );
        self.coeffs[k] * FACTORIAL[k]
    }

    /// First partial `∂_axis`.
    #[inline]
    pub fn d1(&self, axis: usize) -> f64 {
        self.coeffs[1 + axis]
    }

    /// Second partial `∂_a ∂_b`.
    pub fn d2(&self, a: usize, b: usize) -> f64 {
        let mut e = [0u8; 3];
        e[a] += 1;
        e[b] += 1;
        self.extract(e)
    }

    /// Gradient `(∂_1, ∂_2, ∂_3)` at the base point.
    pub fn gradient(&self) -> [f64; 3] {
        [self.coeffs[1], self.coeffs[2], self.coeffs[3]]
    }

    fn zero_above(&mut self, degree: u8) {
        for k in 0..JET_LEN {
            if DEGREE[k] > degree {
                self.coeffs[k] = 0.0;
            }
        }
    }

    fn assert_same_base(&self, other: &Jet3) {
        assert_eq!(
            self.base, other.base,
            "jet operands must share their base point"
        );
    }

    pub fn add(&self, rhs: &Jet3) -> Jet3 {
        self.assert_same_base(rhs);
        let mut out = *self;
        for k in 0..JET_LEN {
            out.coeffs[k] += rhs.coeffs[k];
        }
        out.valid = self.valid.min(rhs.valid);
        out.zero_above(out.valid);
        out
    }

    pub fn sub(&self, rhs: &Jet3) -> Jet3 {
        self.assert_same_base(rhs);
        let mut out = *self;
        for k in 0..JET_LEN {
            out.coeffs[k] -= rhs.coeffs[k];
        }
        out.valid = self.valid.min(rhs.valid);
        out.zero_above(out.valid);
        out
    }

    pub fn neg(&self) -> Jet3 {
        let mut out = *self;
        for c in out.coeffs.iter_mut() {
            *c = -*c;
        }
        out
    }

    pub fn scale(&self, s: f64) -> Jet3 {
        let mut out = *self;
        for c in out.coeffs.iter_mut() {
            *c *= s;
        }
        out
    }

    pub fn add_scalar(&self, s: f64) -> Jet3 {
        let mut out = *self;
        out.coeffs[0] += s;
        out
    }

    /// Truncated Taylor product, exact through the shared valid degree.
    pub fn mul(&self, rhs: &Jet3) -> Jet3 {
        self.assert_same_base(rhs);
        let mut coeffs = [0.0; JET_LEN];
        for i in 0..JET_LEN {
            let ai = self.coeffs[i];
            if ai == 0.0 {
                continue;
            }
            let mi = MONOMIALS[i];
            let di = DEGREE[i];
            for j in 0..JET_LEN {
                // MONOMIALS is sorted by degree, so we can stop early.
                if di + DEGREE[j] > 3 {
                    break;
                }
                let bj = rhs.coeffs[j];
                if bj == 0.0 {
                    continue;
                }
                let mj = MONOMIALS[j];
                let k = monomial_index([mi[0] + mj[0], mi[1] + mj[1], mi[2] + mj[2]]);
                coeffs[k] += ai * bj;
            }
        }
        let mut out = Jet3 {
            base: self.base,
            coeffs,
            valid: self.valid.min(rhs.valid),
        };
        out.zero_above(out.valid);
        out
    }

    pub fn square(&self) -> Jet3 {
        self.mul(self)
    }

    /// Truncated reciprocal via the geometric series around the value term.
    pub fn recip(&self) -> Result<Jet3> {
        let b0 = self.coeffs[0];
        if b0.abs() <= DIV_THRESHOLD {
            return Err(Error::JetDivisionByZero { point: self.base });
        }
        // s = self/b0 - 1 has zero value term; 1/self = (1 - s + s² - s³)/b0.
        let mut s = self.scale(1.0 / b0);
        s.coeffs[0] = 0.0;
        let s2 = s.mul(&s);
        let s3 = s2.mul(&s);
        let mut out = Jet3::constant(self.base, 1.0)
            .sub(&s)
            .add(&s2)
            .sub(&s3)
            .scale(1.0 / b0);
        out.valid = self.valid;
        out.zero_above(out.valid);
        Ok(out)
    }

    pub fn div(&self, rhs: &Jet3) -> Result<Jet3> {
        self.assert_same_base(rhs);
        Ok(self.mul(&rhs.recip()?))
    }

    /// Partial derivative as a jet. The result is exact one degree lower
    /// than the input; its top-degree slots are zeroed.
    pub fn derivative(&self, axis: usize) -> Jet3 {
        assert!(axis < 3);
        let mut coeffs = [0.0; JET_LEN];
        for k in 0..JET_LEN {
            let m = MONOMIALS[k];
            if m[axis] == 0 {
                continue;
            }
            let mut e = m;
            e[axis] -= 1;
            coeffs[monomial_index(e)] = self.coeffs[k] * m[axis] as f64;
        }
        let mut out = Jet3 {
            base: self.base,
            coeffs,
            valid: self.valid.saturating_sub(1),
        };
        out.zero_above(out.valid);
        out
    }

    /// Compose a univariate function (given by its value and first three
    /// derivatives at `self.value()`) with this jet, exactly through the
    /// jet's valid degree (Faà di Bruno in truncated-series form).
    pub fn compose_univariate(&self, outer: [f64; 4]) -> Jet3 {
        // h = self - value has zero constant term, so h⁴ vanishes in the
        // truncation and the cubic Taylor expansion of the outer function
        // composes exactly.
        let mut h = *self;
        h.coeffs[0] = 0.0;
        let h2 = h.mul(&h);
        let h3 = h2.mul(&h);
        let mut out = Jet3::constant(self.base, outer[0])
            .add(&h.scale(outer[1]))
            .add(&h2.scale(outer[2] / 2.0))
            .add(&h3.scale(outer[3] / 6.0));
        out.valid = self.valid;
        out.zero_above(out.valid);
        out
    }

    pub fn exp(&self) -> Jet3 {
        let e = self.value().exp();
        self.compose_univariate([e, e, e, e])
    }

    pub fn ln(&self) -> Result<Jet3> {
        let v = self.value();
        if v <= 0.0 {
            return Err(Error::JetDomain {
                func: "log",
                value: v,
                point: self.base,
            });
        }
        Ok(self.compose_univariate([v.ln(), 1.0 / v, -1.0 / (v * v), 2.0 / (v * v * v)]))
    }

    pub fn sin(&self) -> Jet3 {
        let (s, c) = self.value().sin_cos();
        self.compose_univariate([s, c, -s, -c])
    }

    pub fn cos(&self) -> Jet3 {
        let (s, c) = self.value().sin_cos();
        self.compose_univariate([c, -s, -c, s])
    }

    pub fn sinh(&self) -> Jet3 {
        let s = self.value().sinh();
        let c = self.value().cosh();
        self.compose_univariate([s, c, s, c])
    }

    pub fn cosh(&self) -> Jet3 {
        let s = self.value().sinh();
        let c = self.value().cosh();
        self.compose_univariate([c, s, c, s])
    }

    pub fn tanh(&self) -> Jet3 {
        let t = self.value().tanh();
        let u = 1.0 - t * t;
        // tanh' = 1-t², tanh'' = -2t(1-t²), tanh''' = (1-t²)(6t²-2)
        self.compose_univariate([t, u, -2.0 * t * u, u * (6.0 * t * t - 2.0)])
    }

    pub fn sqrt(&self) -> Result<Jet3> {
        let v = self.value();
        if v <= 0.0 {
            return Err(Error::JetDomain {
                func: "sqrt",
                value: v,
                point: self.base,
            });
        }
        let s = v.sqrt();
        Ok(self.compose_univariate([
            s,
            0.5 / s,
            -0.25 / (s * v),
            0.375 / (s * v * v),
        ]))
    }

    /// Real power `self^r`; requires a positive value term.
    pub fn powf(&self, r: f64) -> Result<Jet3> {
        let v = self.value();
        if v <= 0.0 {
            return Err(Error::JetDomain {
                func: "pow",
                value: v,
                point: self.base,
            });
        }
        let p = v.powf(r);
        Ok(self.compose_univariate([
            p,
            r * p / v,
            r * (r - 1.0) * p / (v * v),
            r * (r - 1.0) * (r - 2.0) * p / (v * v * v),
        ]))
    }
}

/// Axis-aligned chart box with per-axis interior margins.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ChartBox {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
    pub margins: [f64; 3],
}

impl ChartBox {
    pub fn new(lo: [f64; 3], hi: [f64; 3]) -> Self {
        ChartBox {
            lo,
            hi,
            margins: [0.0; 3],
        }
    }

    /// Margins set to `frac` of each axis length.
    pub fn with_margin_fraction(mut self, frac: f64) -> Self {
        for a in 0..3 {
            self.margins[a] = frac * (self.hi[a] - self.lo[a]);
        }
        self
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        (0..3).all(|a| p[a] >= self.lo[a] && p[a] <= self.hi[a])
    }

    /// Interior by at least the per-axis margin plus `extra` on every axis.
    pub fn interior(&self, p: [f64; 3], extra: f64) -> bool {
        (0..3).all(|a| {
            p[a] >= self.lo[a] + self.margins[a] + extra
                && p[a] <= self.hi[a] - self.margins[a] - extra
        })
    }

    pub fn lengths(&self) -> [f64; 3] {
        [
            self.hi[0] - self.lo[0],
            self.hi[1] - self.lo[1],
            self.hi[2] - self.lo[2],
        ]
    }
}

type FieldFn = dyn Fn([f64; 3]) -> Result<Jet3> + Send + Sync;

/// A scalar field on a chart box, evaluable as an order-3 jet at any
/// interior point. Evaluation is pure; repeated evaluation at the same
/// point is bitwise identical.
#[derive(Clone)]
pub struct ScalarField {
    eval: Arc<FieldFn>,
    pub domain: ChartBox,
}

impl ScalarField {
    pub fn new<F>(domain: ChartBox, eval: F) -> Self
    where
        F: Fn([f64; 3]) -> Result<Jet3> + Send + Sync + 'static,
    {
        ScalarField {
            eval: Arc::new(eval),
            domain,
        }
    }

    pub fn constant(domain: ChartBox, c: f64) -> Self {
        ScalarField::new(domain, move |p| Ok(Jet3::constant(p, c)))
    }

    /// Evaluate the field as a jet at `p`.
    pub fn jet(&self, p: [f64; 3]) -> Result<Jet3> {
        if !self.domain.contains(p) {
            return Err(Error::OutsideDomain { point: p });
        }
        let jet = (self.eval)(p)?;
        debug_assert_eq!(jet.base_point(), p, "field evaluator moved the base point");
        Ok(jet)
    }

    pub fn value(&self, p: [f64; 3]) -> Result<f64> {
        Ok(self.jet(p)?.value())
    }

    /// Same field on a replacement domain (used when charts are truncated
    /// by guards).
    pub fn with_domain(&self, domain: ChartBox) -> Self {
        ScalarField {
            eval: Arc::clone(&self.eval),
            domain,
        }
    }
}

impl std::fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScalarField")
            .field("domain", &self.domain)
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const P: [f64; 3] = [2.0, 3.0, 5.0];

    #[test]
    fn product_of_coordinates() {
        let x1 = Jet3::coordinate(P, 0);
        let x2 = Jet3::coordinate(P, 1);
        let prod = x1.mul(&x2);
        assert_eq!(prod.value(), 6.0);
        assert_eq!(prod.extract([1, 0, 0]), 3.0);
        assert_eq!(prod.extract([0, 1, 0]), 2.0);
        assert_eq!(prod.extract([1, 1, 0]), 1.0);
        for k in 0..JET_LEN {
            if DEGREE[k] == 3 {
                assert_eq!(prod.coeffs()[k], 0.0);
            }
        }
    }

    #[test]
    fn constant_identity() {
        let c = Jet3::constant(P, 4.25);
        let z = Jet3::constant(P, 0.0);
        let sum = c.add(&z);
        assert_eq!(sum, c);
        for k in 1..JET_LEN {
            assert_eq!(sum.coeffs()[k], 0.0);
        }
    }

    #[test]
    fn division_round_trip() {
        let base = [1.7, 0.0, 0.0];
        let x1 = Jet3::coordinate(base, 0);
        let sq_over = x1.mul(&x1).div(&x1).unwrap();
        for k in 0..JET_LEN {
            let expect = x1.coeffs()[k];
            let got = sq_over.coeffs()[k];
            assert!(
                (got - expect).abs() <= 1e-15 * (1.0 + expect.abs()),
                "slot {k}: {got} vs {expect}"
            );
        }
    }

    #[test]
    fn exp_series_coefficients() {
        let base = [0.0, 0.3, -0.2];
        let e = Jet3::coordinate(base, 0).exp();
        assert!((e.coeffs()[monomial_index([0, 0, 0])] - 1.0).abs() < 1e-15);
        assert!((e.coeffs()[monomial_index([1, 0, 0])] - 1.0).abs() < 1e-15);
        assert!((e.coeffs()[monomial_index([2, 0, 0])] - 0.5).abs() < 1e-15);
        assert!((e.coeffs()[monomial_index([3, 0, 0])] - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn trig_at_zero() {
        let z = Jet3::constant(P, 0.0);
        assert_eq!(z.sin().value(), 0.0);
        assert_eq!(z.cos().value(), 1.0);
        for k in 1..JET_LEN {
            assert_eq!(z.sin().coeffs()[k], 0.0);
            assert_eq!(z.cos().coeffs()[k], 0.0);
        }
    }

    #[test]
    fn compose_constant_outer() {
        let x3 = Jet3::coordinate(P, 2);
        let c = x3.compose_univariate([7.5, 0.0, 0.0, 0.0]);
        assert_eq!(c, Jet3::constant(P, 7.5));
    }

    #[test]
    fn compose_square_outer() {
        let x3 = Jet3::coordinate(P, 2);
        // u(t) = t² at t = 5: [25, 10, 2, 0]
        let sq = x3.compose_univariate([25.0, 10.0, 2.0, 0.0]);
        assert_eq!(sq, x3.mul(&x3));
    }

    #[test]
    fn compose_matches_elementary_tanh() {
        let base = [0.4, 1.1, -0.7];
        let inner = Jet3::coordinate(base, 2).scale(2.0);
        let t = inner.value().tanh();
        let u = 1.0 - t * t;
        let composed =
            inner.compose_univariate([t, u, -2.0 * t * u, u * (6.0 * t * t - 2.0)]);
        let direct = inner.tanh();
        for k in 0..JET_LEN {
            assert!((composed.coeffs()[k] - direct.coeffs()[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn tanh_partials_match_finite_differences() {
        // tanh of x₃ around base 1.0: first and second partials against
        // the central-difference oracle at 1e-6 relative.
        let domain = ChartBox::new([-2.0; 3], [2.0; 3]);
        let field = ScalarField::new(domain, |p| Ok(Jet3::coordinate(p, 2).tanh()));
        let point = [0.2, -0.4, 1.0];
        let jet = field.jet(point).unwrap();
        let fd = crate::fd::finite_difference_oracle(&field, point, 1e-4).unwrap();
        assert!((jet.d1(2) - fd.grad[2]).abs() <= 1e-6 * jet.d1(2).abs());
        assert!((jet.d2(2, 2) - fd.hess[2][2]).abs() <= 1e-6 * jet.d2(2, 2).abs().max(1.0));
    }

    #[test]
    fn division_by_zero_names_point() {
        let z = Jet3::constant(P, 0.0);
        let x = Jet3::coordinate(P, 0);
        match x.div(&z) {
            Err(Error::JetDivisionByZero { point }) => assert_eq!(point, P),
            other => panic!("expected division error, got {other:?}"),
        }
    }

    #[test]
    fn log_domain_error() {
        let neg = Jet3::constant(P, -1.0);
        match neg.ln() {
            Err(Error::JetDomain { func, .. }) => assert_eq!(func, "log"),
            other => panic!("expected domain error, got {other:?}"),
        }
    }

    #[test]
    fn derivative_of_jet_lowers_order() {
        let x1 = Jet3::coordinate(P, 0);
        let cube = x1.mul(&x1).mul(&x1);
        let d = cube.derivative(0);
        assert_eq!(d.valid_degree(), 2);
        assert_eq!(d.value(), 3.0 * P[0] * P[0]);
        assert_eq!(d.d1(0), 6.0 * P[0]);
        assert_eq!(d.d2(0, 0), 6.0);
    }

    #[test]
    fn field_evaluation_is_pure() {
        let domain = ChartBox::new([-1.0, -1.0, -1.0], [3.0, 4.0, 6.0]);
        let field = ScalarField::new(domain, |p| {
            Ok(Jet3::coordinate(p, 0).mul(&Jet3::coordinate(p, 1)).exp())
        });
        let a = field.jet(P).unwrap();
        let b = field.jet(P).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.base_point(), P);
    }

    #[test]
    fn field_outside_domain() {
        let domain = ChartBox::new([0.0; 3], [1.0; 3]);
        let field = ScalarField::constant(domain, 1.0);
        assert!(matches!(
            field.jet([2.0, 0.5, 0.5]),
            Err(Error::OutsideDomain { .. })
        ));
    }
}
