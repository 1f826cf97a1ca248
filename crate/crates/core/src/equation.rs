//! The geometric equation `∇df = ψ(f)·Rc + φ(f)·g` and its named
//! specializations. Every variant exposes ψ, φ and their f-derivatives both
//! as plain numbers and with full jet propagation through f.

use serde::{Deserialize, Serialize};

use crate::jet::Jet3;

/// Polynomial in f with ascending coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial(pub Vec<f64>);

impl Polynomial {
    pub fn eval(&self, x: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    pub fn eval_jet(&self, x: &Jet3) -> Jet3 {
        let base = x.base_point();
        self.0
            .iter()
            .rev()
            .fold(Jet3::constant(base, 0.0), |acc, c| {
                acc.mul(x).add_scalar(*c)
            })
    }

    pub fn derivative(&self) -> Polynomial {
        if self.0.len() <= 1 {
            return Polynomial(vec![0.0]);
        }
        Polynomial(
            self.0
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, c)| k as f64 * c)
                .collect(),
        )
    }
}

/// Which geometric equation is in force.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EquationSpec {
    /// ψ and φ given as polynomials in f (ascending coefficients).
    Generic { psi: Vec<f64>, phi: Vec<f64> },
    /// Gradient Ricci soliton `∇df + Rc = λg`: ψ ≡ −1, φ ≡ λ.
    Soliton { lambda: f64 },
    /// V-static `∇df = f(Rc − (R/2)g) − (κ/2)g`: ψ = f,
    /// φ = −(R/2)f − κ/2, with constant scalar curvature R.
    VStatic { kappa: f64, scalar_curvature: f64 },
    /// Critical point metric `∇df = f(Rc − (R/2)g) + Rc − (R/3)g`:
    /// ψ = f + 1, φ = −(R/2)f − R/3, constant scalar curvature R.
    CriticalPoint { scalar_curvature: f64 },
}

impl EquationSpec {
    pub fn psi_poly(&self) -> Polynomial {
        match self {
            EquationSpec::Generic { psi, .. } => Polynomial(psi.clone()),
            EquationSpec::Soliton { .. } => Polynomial(vec![-1.0]),
            EquationSpec::VStatic { .. } => Polynomial(vec![0.0, 1.0]),
            EquationSpec::CriticalPoint { .. } => Polynomial(vec![1.0, 1.0]),
        }
    }

    pub fn phi_poly(&self) -> Polynomial {
        match self {
            EquationSpec::Generic { phi, .. } => Polynomial(phi.clone()),
            EquationSpec::Soliton { lambda } => Polynomial(vec![*lambda]),
            EquationSpec::VStatic {
                kappa,
                scalar_curvature,
            } => Polynomial(vec![-kappa / 2.0, -scalar_curvature / 2.0]),
            EquationSpec::CriticalPoint { scalar_curvature } => Polynomial(vec![
                -scalar_curvature / 3.0,
                -scalar_curvature / 2.0,
            ]),
        }
    }

    pub fn psi(&self, f: f64) -> f64 {
        self.psi_poly().eval(f)
    }

    pub fn phi(&self, f: f64) -> f64 {
        self.phi_poly().eval(f)
    }

    pub fn psi_prime(&self, f: f64) -> f64 {
        self.psi_poly().derivative().eval(f)
    }

    pub fn phi_prime(&self, f: f64) -> f64 {
        self.phi_poly().derivative().eval(f)
    }

    /// ψ and φ with full jet propagation through f.
    pub fn eval_jets(&self, f_jet: &Jet3) -> (Jet3, Jet3) {
        (
            self.psi_poly().eval_jet(f_jet),
            self.phi_poly().eval_jet(f_jet),
        )
    }

    /// The claimed constant scalar curvature, where the variant has one.
    pub fn r_target(&self) -> Option<f64> {
        match self {
            EquationSpec::VStatic {
                scalar_curvature, ..
            }
            | EquationSpec::CriticalPoint { scalar_curvature } => Some(*scalar_curvature),
            _ => None,
        }
    }

    /// Constants (a1, a2) of the unified form
    /// `∇df = (a1 + f)Rc + (a2 − (R/2)f)g`.
    pub fn unified_constants(&self) -> Option<(f64, f64)> {
        match self {
            EquationSpec::VStatic { kappa, .. } => Some((0.0, -kappa / 2.0)),
            EquationSpec::CriticalPoint { scalar_curvature } => {
                Some((1.0, -scalar_curvature / 3.0))
            }
            _ => None,
        }
    }

    /// The constant `y = a2 + a1·R/2` driving the c-profile equation
    /// `b''c = b'c' + y`.
    pub fn codazzi_y(&self) -> Option<f64> {
        let (a1, a2) = self.unified_constants()?;
        Some(a2 + a1 * self.r_target()? / 2.0)
    }

    pub fn is_soliton(&self) -> bool {
        matches!(self, EquationSpec::Soliton { .. })
    }

    pub fn soliton_lambda(&self) -> Option<f64> {
        match self {
            EquationSpec::Soliton { lambda } => Some(*lambda),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EquationSpec::Generic { .. } => "generic",
            EquationSpec::Soliton { .. } => "soliton",
            EquationSpec::VStatic { .. } => "v_static",
            EquationSpec::CriticalPoint { .. } => "critical_point",
        }
    }
}

/// Evaluate (ψ, φ) of `spec` with full jet propagation through `f_jet`.
pub fn equation_spec_eval(spec: &EquationSpec, f_jet: &Jet3) -> (Jet3, Jet3) {
    spec.eval_jets(f_jet)
}
