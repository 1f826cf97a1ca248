//! Property tests for the jet engine's algebraic invariants, plus the
//! randomized polynomial and composite-field agreement checks.

use proptest::prelude::*;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use riccidegen::fd::finite_difference_oracle;
use riccidegen::jet::{ChartBox, Jet3, ScalarField, JET_LEN, MONOMIALS};

fn jet_strategy() -> impl Strategy<Value = Jet3> {
    prop::collection::vec(-2.0f64..2.0, JET_LEN).prop_map(|v| {
        let mut coeffs = [0.0; JET_LEN];
        coeffs.copy_from_slice(&v);
        Jet3::from_coeffs([0.4, -0.3, 0.8], coeffs)
    })
}

proptest! {
    /// Ring distributivity holds on stored coefficients up to ulp-scale
    /// rounding: (a+b)·c equals a·c + b·c.
    #[test]
    fn distributivity(a in jet_strategy(), b in jet_strategy(), c in jet_strategy()) {
        let lhs = a.add(&b).mul(&c);
        let rhs = a.mul(&c).add(&b.mul(&c));
        for k in 0..JET_LEN {
            let (x, y) = (lhs.coeffs()[k], rhs.coeffs()[k]);
            let scale = 1.0 + x.abs().max(y.abs());
            prop_assert!((x - y).abs() <= 64.0 * f64::EPSILON * scale,
                "slot {}: {} vs {}", k, x, y);
        }
    }

    /// Partial-derivative extraction is linear in the jet.
    #[test]
    fn extraction_linearity(a in jet_strategy(), b in jet_strategy()) {
        let sum = a.add(&b);
        for mono in MONOMIALS {
            let lhs = sum.extract(mono);
            let rhs = a.extract(mono) + b.extract(mono);
            let scale = 1.0 + lhs.abs().max(rhs.abs());
            prop_assert!((lhs - rhs).abs() <= 16.0 * f64::EPSILON * scale);
        }
    }

    /// The degree-0 coefficient is the value.
    #[test]
    fn value_is_degree_zero(a in jet_strategy()) {
        prop_assert_eq!(a.value(), a.coeffs()[0]);
        prop_assert_eq!(a.extract([0, 0, 0]), a.value());
    }
}

/// Exact partial `∂^β p` of the polynomial with monomial coefficients
/// `coeffs` (graded-lex slots) at `x0` — the independent oracle.
fn exact_poly_partial(coeffs: &[f64; JET_LEN], x0: [f64; 3], beta: [u8; 3]) -> f64 {
    let mut total = 0.0;
    for (slot, alpha) in MONOMIALS.iter().enumerate() {
        if coeffs[slot] == 0.0 {
            continue;
        }
        let mut term = coeffs[slot];
        let mut ok = true;
        for i in 0..3 {
            if alpha[i] < beta[i] {
                ok = false;
                break;
            }
            // d^b/dx^b x^a = a!/(a-b)! x^(a-b)
            let mut fall = 1.0;
            for k in 0..beta[i] {
                fall *= (alpha[i] - k) as f64;
            }
            term *= fall * x0[i].powi((alpha[i] - beta[i]) as i32);
        }
        if ok {
            total += term;
        }
    }
    total
}

/// 200 random polynomial fields of total degree ≤ 3: jets assembled by
/// arithmetic from coordinate lifts must reproduce the exact polynomial
/// derivatives to 1e-12 relative.
#[test]
fn random_polynomials_are_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for trial in 0..200 {
        let mut coeffs = [0.0; JET_LEN];
        for c in coeffs.iter_mut() {
            *c = rng.random_range(-2.0..2.0);
        }
        let point = [
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ];
        // Assemble the polynomial jet through products of coordinates.
        let mut jet = Jet3::constant(point, 0.0);
        for (slot, alpha) in MONOMIALS.iter().enumerate() {
            let mut mono = Jet3::constant(point, coeffs[slot]);
            for i in 0..3 {
                for _ in 0..alpha[i] {
                    mono = mono.mul(&Jet3::coordinate(point, i));
                }
            }
            jet = jet.add(&mono);
        }
        for beta in MONOMIALS {
            let got = jet.extract(beta);
            let expect = exact_poly_partial(&coeffs, point, beta);
            assert!(
                (got - expect).abs() <= 1e-12 * (1.0 + expect.abs()),
                "trial {trial}, ∂^{beta:?}: {got} vs {expect}"
            );
        }
    }
}

/// 50 random elementary composites: jet first and second partials agree
/// with the central-difference oracle at step 1e-4 to 1e-6 relative
/// wherever the partial is not vanishingly small.
#[test]
fn random_composites_match_finite_differences() {
    let domain = ChartBox::new([-0.7; 3], [0.7; 3]);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..50 {
        let c0 = rng.random_range(-0.5..0.5);
        let lin: [f64; 3] = std::array::from_fn(|_| rng.random_range(-0.5..0.5));
        let quad: [f64; 3] = std::array::from_fn(|_| rng.random_range(-0.3..0.3));
        let kind = rng.random_range(0..6u32);
        let field = ScalarField::new(domain, move |p| {
            let mut inner = Jet3::constant(p, c0);
            for a in 0..3 {
                let x = Jet3::coordinate(p, a);
                inner = inner.add(&x.scale(lin[a])).add(&x.square().scale(quad[a]));
            }
            Ok(match kind {
                0 => inner.exp(),
                1 => inner.sin(),
                2 => inner.cos(),
                3 => inner.tanh(),
                4 => inner.add_scalar(2.5).sqrt()?,
                _ => inner.add_scalar(2.5).ln()?,
            })
        });
        let p = [
            rng.random_range(-0.45..0.45),
            rng.random_range(-0.45..0.45),
            rng.random_range(-0.45..0.45),
        ];
        let jet = field.jet(p).unwrap();
        let fd = finite_difference_oracle(&field, p, 1e-4).unwrap();
        for a in 0..3 {
            let j = jet.d1(a);
            if j.abs() > 1e-6 {
                assert!(
                    (j - fd.grad[a]).abs() <= 1e-6 * j.abs().max(1.0),
                    "trial {trial} ∂{a}: {j} vs {}",
                    fd.grad[a]
                );
            }
            for b in a..3 {
                let j2 = jet.d2(a, b);
                if j2.abs() > 1e-6 {
                    assert!(
                        (j2 - fd.hess[a][b]).abs() <= 1e-6 * j2.abs().max(1.0),
                        "trial {trial} ∂{a}∂{b}: {j2} vs {}",
                        fd.hess[a][b]
                    );
                }
            }
        }
    }
}

/// Repeated evaluation of a field is bitwise identical.
#[test]
fn evaluation_is_deterministic() {
    let domain = ChartBox::new([-1.0; 3], [1.0; 3]);
    let field = ScalarField::new(domain, |p| {
        Ok(Jet3::coordinate(p, 0)
            .sin()
            .mul(&Jet3::coordinate(p, 2).exp())
            .add(&Jet3::coordinate(p, 1).tanh()))
    });
    let p = [0.31, -0.62, 0.54];
    let a = field.jet(p).unwrap();
    for _ in 0..5 {
        let b = field.jet(p).unwrap();
        assert_eq!(a, b);
    }
}
