//! Constructors for the classified metric families: the soliton cylinder,
//! the (q+b)⁻² family for V-static and critical point equations, the
//! p-profile critical point family, and the warped constant-curvature
//! branch. Each builder integrates the family's profile ODEs with initial
//! slopes derived from the first integrals, applies domain guards, and
//! assembles jet-evaluable metric and potential fields.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::equation::EquationSpec;
use crate::error::{Error, Result};
use crate::jet::{ChartBox, Jet3, ScalarField};
use crate::ode::{
    domain_guard, integrate, GuardConstraint, OdeSolution, OdeSystem1d, ProfileJet,
};
use crate::tensor::MetricField;

/// Fixed RK4 step for all profile ODEs.
pub const DEFAULT_STEP: f64 = 1e-3;
/// Chart margins as a fraction of each axis length.
pub const MARGIN_FRACTION: f64 = 0.05;
/// Profile slopes (q', b', k', p') are kept at or above this margin.
pub const SLOPE_MARGIN: f64 = 1e-3;
/// The conformal factor q+b is kept at or above this margin.
pub const Q_PLUS_B_MARGIN: f64 = 0.05;
/// ψ(f) is kept away from zero along warped integrations.
pub const PSI_MARGIN: f64 = 1e-6;
/// Warp factor h is kept at or above this margin.
pub const WARP_MARGIN: f64 = 1e-3;
/// Instances whose ODE drift exceeds this are rejected as unverifiable.
pub const DRIFT_LIMIT: f64 = 1e-8;
/// Metric components must exceed this at every sampled interior point.
pub const METRIC_POSITIVITY_MARGIN: f64 = 1e-10;

fn default_interval() -> [f64; 2] {
    [-1.0, 1.0]
}

fn one() -> f64 {
    1.0
}

/// Soliton cylinder family: g = dx₁² + k'(x₃)²dx₂² + dx₃² with
/// k'' = (k')²/2 − λk + C and potential f = (λ/2)x₁² + k(x₃).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CylinderParams {
    pub lambda: f64,
    /// The constant C in the profile equation.
    pub c_const: f64,
    pub k0: f64,
    pub k0_prime: f64,
    pub x3_interval: [f64; 2],
    #[serde(default = "default_interval")]
    pub x1_interval: [f64; 2],
    #[serde(default = "default_interval")]
    pub x2_interval: [f64; 2],
}

/// (q+b)⁻² family: g = (q+b)⁻²(dx₁² + (q')²dx₂² + dx₃²) with the q and b
/// profiles solving their conserved cubic equations and f = c/(q+b) − a1.
/// `kappa: Some(κ)` selects the V-static equation, `None` the critical
/// point equation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QbParams {
    pub m: f64,
    #[serde(default)]
    pub l: f64,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default)]
    pub k_const: f64,
    pub scalar_curvature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    pub q0: f64,
    #[serde(default = "one")]
    pub q0_sign: f64,
    pub b0: f64,
    #[serde(default = "one")]
    pub b0_sign: f64,
    pub c0: f64,
    pub x1_interval: [f64; 2],
    pub x3_interval: [f64; 2],
    #[serde(default = "default_interval")]
    pub x2_interval: [f64; 2],
}

impl QbParams {
    pub fn equation(&self) -> EquationSpec {
        match self.kappa {
            Some(kappa) => EquationSpec::VStatic {
                kappa,
                scalar_curvature: self.scalar_curvature,
            },
            None => EquationSpec::CriticalPoint {
                scalar_curvature: self.scalar_curvature,
            },
        }
    }
}

/// p-profile critical point family: g = p²dx₁² + (p')²dx₂² + dx₃² with
/// (p')² = β/p + γ, f = c₁(x₁)p(x₃) − 1 and c₁'' + γc₁ = 0. Forces the
/// critical point equation with R = 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PParams {
    pub beta: f64,
    pub gamma: f64,
    pub p0: f64,
    #[serde(default = "one")]
    pub p0_sign: f64,
    pub c1_0: f64,
    #[serde(default)]
    pub c1_prime_0: f64,
    pub x1_interval: [f64; 2],
    pub x3_interval: [f64; 2],
    #[serde(default = "default_interval")]
    pub x2_interval: [f64; 2],
}

/// Warped branch: g = ds² + h(s)²·g̃ over s = x₁ with a constant-curvature
/// fiber g̃ of curvature k̃, solving the coupled profile system for (f, h).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WarpedParams {
    pub equation: EquationSpec,
    pub k_tilde: f64,
    pub h0: f64,
    #[serde(default)]
    pub h0_prime: f64,
    pub f0: f64,
    #[serde(default)]
    pub f0_prime: f64,
    pub s_interval: [f64; 2],
    pub x2_interval: [f64; 2],
    #[serde(default = "default_interval")]
    pub x3_interval: [f64; 2],
}

/// Parameters of one constructed family instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum FamilySpec {
    SolitonCylinder(CylinderParams),
    Qb(QbParams),
    P(PParams),
    Warped(WarpedParams),
}

impl FamilySpec {
    pub fn build(&self) -> Result<MetricInstance> {
        match self {
            FamilySpec::SolitonCylinder(p) => build_soliton_cylinder(p),
            FamilySpec::Qb(p) => build_qb(p),
            FamilySpec::P(p) => build_p(p),
            FamilySpec::Warped(p) => build_warped(p),
        }
    }

    /// CLI-facing family name.
    pub fn cli_name(&self) -> &'static str {
        match self {
            FamilySpec::SolitonCylinder(_) => "soliton-cylinder",
            FamilySpec::Qb(p) => {
                if p.kappa.is_some() {
                    "qb-vstatic"
                } else {
                    "qb-cpm"
                }
            }
            FamilySpec::P(_) => "p-cpm",
            FamilySpec::Warped(_) => "warped",
        }
    }
}

/// Integration metadata recorded on construction.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Provenance {
    /// Max first-integral deviation over all profile runs.
    pub drift: f64,
    /// Why a chart axis is shorter than requested, when a guard fired.
    pub guard_notes: Vec<String>,
    /// Set when a step-halving re-run disagreed beyond the RK4 estimate.
    pub accuracy_flagged: bool,
}

/// A constructed metric with its potential, the equation it claims to
/// satisfy, and full provenance.
pub struct MetricInstance {
    pub metric: MetricField,
    potential_base: ScalarField,
    pub equation: EquationSpec,
    pub family: FamilySpec,
    pub chart: ChartBox,
    pub potential_scale: f64,
    pub provenance: Provenance,
    runs: Vec<(String, Arc<OdeSolution>)>,
}

impl MetricInstance {
    /// The potential field, including any applied scale factor.
    pub fn potential(&self) -> ScalarField {
        if self.potential_scale == 1.0 {
            self.potential_base.clone()
        } else {
            let s = self.potential_scale;
            let base = self.potential_base.clone();
            ScalarField::new(base.domain, move |p| Ok(base.jet(p)?.scale(s)))
        }
    }

    pub fn run(&self, name: &str) -> Option<&Arc<OdeSolution>> {
        self.runs
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, run)| run)
    }

    /// Same instance with a rescaled potential (negative controls and
    /// hand-edited instance files).
    pub fn with_potential_scale(mut self, scale: f64) -> MetricInstance {
        self.potential_scale = scale;
        self
    }

    /// Same instance claiming a different equation (negative controls).
    pub fn with_equation(mut self, equation: EquationSpec) -> MetricInstance {
        self.equation = equation;
        self
    }

    pub fn to_document(&self) -> InstanceDocument {
        InstanceDocument {
            format: INSTANCE_FORMAT.to_string(),
            family: self.family.clone(),
            potential_scale: self.potential_scale,
            chart: self.chart,
            drift: self.provenance.drift,
            guard_notes: self.provenance.guard_notes.clone(),
            ode_runs: self
                .runs
                .iter()
                .map(|(name, run)| OdeRunRecord {
                    name: name.clone(),
                    t0: run.t0(),
                    t1: run.t1(),
                    step: run.step(),
                    drift: run.drift(),
                    times: run.times().to_vec(),
                    states: run.states().to_vec(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_document(doc: &InstanceDocument) -> Result<MetricInstance> {
        if doc.format != INSTANCE_FORMAT {
            return Err(Error::InvalidParams(format!(
                "unsupported instance format `{}` (expected `{INSTANCE_FORMAT}`)",
                doc.format
            )));
        }
        let inst = doc.family.build()?;
        Ok(inst.with_potential_scale(doc.potential_scale))
    }

    pub fn from_json(json: &str) -> Result<MetricInstance> {
        let doc: InstanceDocument = serde_json::from_str(json)?;
        MetricInstance::from_document(&doc)
    }
}

pub const INSTANCE_FORMAT: &str = "riccidegen.instance.v1";

/// Serialized form of an instance: the family parameters are the source of
/// truth (instances are rebuilt from them on load); the dense ODE grids are
/// included for inspection and diffing.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InstanceDocument {
    pub format: String,
    pub family: FamilySpec,
    pub potential_scale: f64,
    pub chart: ChartBox,
    pub drift: f64,
    pub guard_notes: Vec<String>,
    pub ode_runs: Vec<OdeRunRecord>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OdeRunRecord {
    pub name: String,
    pub t0: f64,
    pub t1: f64,
    pub step: f64,
    pub drift: f64,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

fn check_interval(name: &str, iv: [f64; 2]) -> Result<()> {
    if !(iv[0].is_finite() && iv[1].is_finite() && iv[0] < iv[1]) {
        return Err(Error::InvalidParams(format!(
            "{name} must be a finite interval [lo, hi] with lo < hi, got {iv:?}"
        )));
    }
    Ok(())
}

/// Initial slope from a first integral: `slope² = radicand`.
fn slope_from_integral(name: &str, radicand: f64, sign: f64) -> Result<f64> {
    if radicand <= 0.0 {
        return Err(Error::InvalidParams(format!(
            "initial data for {name} gives slope² = {radicand} ≤ 0; \
             the first integral admits no real slope there"
        )));
    }
    if sign == 0.0 {
        return Err(Error::InvalidParams(format!(
            "{name} slope sign must be nonzero"
        )));
    }
    Ok(sign.signum() * radicand.sqrt())
}

/// First four entries of a profile jet, shifted: shift 0 gives the jet of
/// u, shift 1 the jet of u'.
fn profile4(run: &OdeSolution, t: f64, profile: usize, shift: usize) -> Result<[f64; 4]> {
    let j = run.profile_jet(t, profile)?;
    Ok([j[shift], j[shift + 1], j[shift + 2], j[shift + 3]])
}

/// Jet of the univariate function with derivative data `d` in coordinate
/// `axis` at base point `base`.
fn univariate(base: [f64; 3], axis: usize, d: [f64; 4]) -> Jet3 {
    Jet3::coordinate(base, axis).compose_univariate(d)
}

/// Run a guarded profile integration and return the solution together with
/// the surviving interval and a guard note.
fn guarded_run(
    name: &str,
    system: Arc<OdeSystem1d>,
    y0: &[f64],
    interval: [f64; 2],
    constraints: &[GuardConstraint],
) -> Result<(Arc<OdeSolution>, [f64; 2], Option<String>)> {
    let sol = integrate(system, y0, interval[0], interval[1], DEFAULT_STEP)?;
    let guarded = domain_guard(&sol, constraints)?;
    let note = guarded.truncated_by.as_ref().map(|g| {
        format!(
            "{name}: truncated at {:.6} by guard `{g}` (requested {:?})",
            guarded.hi, interval
        )
    });
    let len = guarded.hi - guarded.lo;
    if len < (10.0 * DEFAULT_STEP).max(1e-6) {
        return Err(Error::InvalidParams(format!(
            "guarded chart is empty on the {name} axis ({})",
            note.unwrap_or_else(|| "guard fired immediately".to_string())
        )));
    }
    Ok((Arc::new(sol), [guarded.lo, guarded.hi], note))
}

/// Sample the assembled fields on a coarse interior lattice: metric
/// positivity (margin 1e-10) and jet evaluability everywhere.
fn sanity_sample(metric: &MetricField, potential: &ScalarField, chart: &ChartBox) -> Result<()> {
    let n = 4;
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                let frac = |k: usize, axis: usize| {
                    let lo = chart.lo[axis] + chart.margins[axis];
                    let hi = chart.hi[axis] - chart.margins[axis];
                    lo + (hi - lo) * (k as f64 + 0.5) / n as f64
                };
                let p = [frac(a, 0), frac(b, 1), frac(c, 2)];
                let jets = metric.jets(p)?;
                for (comp, jet) in jets.iter().enumerate() {
                    if jet.value() < METRIC_POSITIVITY_MARGIN {
                        return Err(Error::DegenerateMetric {
                            component: comp,
                            value: jet.value(),
                            point: p,
                        });
                    }
                }
                potential.jet(p)?;
            }
        }
    }
    Ok(())
}

fn finish_instance(
    metric: MetricField,
    potential: ScalarField,
    equation: EquationSpec,
    family: FamilySpec,
    chart: ChartBox,
    runs: Vec<(String, Arc<OdeSolution>)>,
    guard_notes: Vec<String>,
) -> Result<MetricInstance> {
    sanity_sample(&metric, &potential, &chart)?;
    let drift = runs.iter().map(|(_, r)| r.drift()).fold(0.0f64, f64::max);
    let accuracy_flagged = runs.iter().any(|(_, r)| r.accuracy_flagged);
    if drift > DRIFT_LIMIT {
        return Err(Error::Unverifiable(format!(
            "first-integral drift {drift:.3e} exceeds {DRIFT_LIMIT:.1e}; \
             the instance would not certify its own ODE profiles"
        )));
    }
    Ok(MetricInstance {
        metric,
        potential_base: potential,
        equation,
        family,
        chart,
        potential_scale: 1.0,
        provenance: Provenance {
            drift,
            guard_notes,
            accuracy_flagged,
        },
        runs,
    })
}

// ---------------------------------------------------------------------------
// Soliton cylinder
// ---------------------------------------------------------------------------

fn cylinder_system(lambda: f64, c_const: f64) -> Arc<OdeSystem1d> {
    Arc::new(OdeSystem1d {
        dim: 2,
        rhs: Box::new(move |_, y, dy| {
            dy[0] = y[1];
            dy[1] = y[1] * y[1] / 2.0 - lambda * y[0] + c_const;
        }),
        deriv_recursion: Box::new(move |_, y| {
            let (k, kp) = (y[0], y[1]);
            let kpp = kp * kp / 2.0 - lambda * k + c_const;
            let kppp = kp * kpp - lambda * kp;
            let kpppp = kpp * kpp + kp * kppp - lambda * kpp;
            vec![[k, kp, kpp, kppp, kpppp]]
        }),
        profile_names: vec!["k"],
        state_profile_map: vec![(0, 0), (0, 1)],
        // (k')² = A·e^k + 2λ(k+1) − 2C along solutions, so
        // e^{−k}((k')² − 2λ(k+1) + 2C) is conserved.
        first_integrals: vec![Box::new(move |_, y| {
            (-y[0]).exp() * (y[1] * y[1] - 2.0 * lambda * (y[0] + 1.0) + 2.0 * c_const)
        })],
    })
}

/// Build a soliton-cylinder instance.
pub fn build_soliton_cylinder(params: &CylinderParams) -> Result<MetricInstance> {
    check_interval("x3_interval", params.x3_interval)?;
    check_interval("x1_interval", params.x1_interval)?;
    check_interval("x2_interval", params.x2_interval)?;
    if params.k0_prime == 0.0 {
        return Err(Error::InvalidParams(
            "k0_prime must be nonzero (the profile k' enters the metric as g22 = (k')²)"
                .to_string(),
        ));
    }

    let system = cylinder_system(params.lambda, params.c_const);
    // Sign-aware slope guard: once k' crosses zero every later grid node
    // violates it, so crossings narrower than the step cannot slip through.
    let slope_sign = params.k0_prime.signum();
    let guards = [GuardConstraint::new("k_prime", SLOPE_MARGIN, move |y| {
        slope_sign * y[1]
    })];
    let (run, x3, note) = guarded_run(
        "x3",
        system,
        &[params.k0, params.k0_prime],
        params.x3_interval,
        &guards,
    )?;

    let chart = ChartBox::new(
        [params.x1_interval[0], params.x2_interval[0], x3[0]],
        [params.x1_interval[1], params.x2_interval[1], x3[1]],
    )
    .with_margin_fraction(MARGIN_FRACTION);

    let g22 = {
        let run = run.clone();
        ScalarField::new(chart, move |p| {
            let kp = profile4(&run, p[2], 0, 1)?;
            Ok(univariate(p, 2, kp).square())
        })
    };
    let metric = MetricField::new(
        [
            ScalarField::constant(chart, 1.0),
            g22,
            ScalarField::constant(chart, 1.0),
        ],
        chart,
    );
    let lambda = params.lambda;
    let potential = {
        let run = run.clone();
        ScalarField::new(chart, move |p| {
            let k = profile4(&run, p[2], 0, 0)?;
            let quad = Jet3::coordinate(p, 0).square().scale(lambda / 2.0);
            Ok(quad.add(&univariate(p, 2, k)))
        })
    };

    finish_instance(
        metric,
        potential,
        EquationSpec::Soliton { lambda },
        FamilySpec::SolitonCylinder(params.clone()),
        chart,
        vec![("k".to_string(), run)],
        note.into_iter().collect(),
    )
}

// ---------------------------------------------------------------------------
// (q+b)⁻² family
// ---------------------------------------------------------------------------

fn q_system(m: f64, l: f64, alpha: f64, k_const: f64) -> Arc<OdeSystem1d> {
    Arc::new(OdeSystem1d {
        dim: 2,
        rhs: Box::new(move |_, y, dy| {
            dy[0] = y[1];
            dy[1] = 3.0 * m * y[0] * y[0] + l * y[0] - alpha / 2.0;
        }),
        deriv_recursion: Box::new(move |_, y| {
            let (q, qp) = (y[0], y[1]);
            let qpp = 3.0 * m * q * q + l * q - alpha / 2.0;
            let qppp = (6.0 * m * q + l) * qp;
            let qpppp = 6.0 * m * qp * qp + (6.0 * m * q + l) * qpp;
            vec![[q, qp, qpp, qppp, qpppp]]
        }),
        profile_names: vec!["q"],
        state_profile_map: vec![(0, 0), (0, 1)],
        first_integrals: vec![Box::new(move |_, y| {
            y[1] * y[1] - 2.0 * m * y[0].powi(3) - l * y[0] * y[0] + alpha * y[0] + k_const
        })],
    })
}

/// Coupled (b, c) system: state (b, b', c) with the c-profile integrated as
/// the first-order linear equation c' = (b''c − y)/b'.
fn bc_system(m: f64, l: f64, alpha: f64, k_const: f64, r: f64, y_const: f64) -> Arc<OdeSystem1d> {
    let b2 = move |b: f64| 3.0 * m * b * b - l * b - alpha / 2.0;
    Arc::new(OdeSystem1d {
        dim: 3,
        rhs: Box::new(move |_, y, dy| {
            dy[0] = y[1];
            dy[1] = b2(y[0]);
            dy[2] = (b2(y[0]) * y[2] - y_const) / y[1];
        }),
        deriv_recursion: Box::new(move |_, y| {
            let (b, bp, c) = (y[0], y[1], y[2]);
            let bpp = b2(b);
            let bppp = (6.0 * m * b - l) * bp;
            let bpppp = 6.0 * m * bp * bp + (6.0 * m * b - l) * bpp;
            let cp = (bpp * c - y_const) / bp;
            // b''c = b'c' + y propagates to c'' = (6mb − l)c.
            let cpp = (6.0 * m * b - l) * c;
            let cppp = 6.0 * m * bp * c + (6.0 * m * b - l) * cp;
            let cpppp = 6.0 * m * bpp * c + 12.0 * m * bp * cp + (6.0 * m * b - l) * cpp;
            vec![[b, bp, bpp, bppp, bpppp], [c, cp, cpp, cppp, cpppp]]
        }),
        profile_names: vec!["b", "c"],
        state_profile_map: vec![(0, 0), (0, 1), (1, 0)],
        first_integrals: vec![
            Box::new(move |_, y| {
                y[1] * y[1] - 2.0 * m * y[0].powi(3) + l * y[0] * y[0] + alpha * y[0] + r / 6.0
                    - k_const
            }),
            Box::new(move |_, y| {
                let cp = (b2(y[0]) * y[2] - y_const) / y[1];
                b2(y[0]) * y[2] - y[1] * cp - y_const
            }),
        ],
    })
}

/// Build a (q+b)⁻² instance (V-static or critical point, by `kappa`).
pub fn build_qb(params: &QbParams) -> Result<MetricInstance> {
    check_interval("x1_interval", params.x1_interval)?;
    check_interval("x2_interval", params.x2_interval)?;
    check_interval("x3_interval", params.x3_interval)?;
    if params.m == 0.0 {
        return Err(Error::InvalidParams(
            "m must be nonzero (the family degenerates at m = 0)".to_string(),
        ));
    }
    let equation = params.equation();
    let r = params.scalar_curvature;
    let (m, l, alpha, k_const) = (params.m, params.l, params.alpha, params.k_const);
    let y_const = equation
        .codazzi_y()
        .expect("qb equations always have unified constants");

    // Initial slopes from the conserved forms.
    let q0p = slope_from_integral(
        "q",
        2.0 * m * params.q0.powi(3) + l * params.q0 * params.q0 - alpha * params.q0 - k_const,
        params.q0_sign,
    )?;
    let b0p = slope_from_integral(
        "b",
        2.0 * m * params.b0.powi(3) - l * params.b0 * params.b0 - alpha * params.b0 - r / 6.0
            + k_const,
        params.b0_sign,
    )?;
    // b first: its guarded minimum feeds the q+b guard (b is monotone on
    // the guarded interval since |b'| stays positive there).
    let b_sign = b0p.signum();
    let bc_guards = [GuardConstraint::new("b_prime", SLOPE_MARGIN, move |y| {
        b_sign * y[1]
    })];
    let (bc_run, x1, b_note) = guarded_run(
        "x1",
        bc_system(m, l, alpha, k_const, r, y_const),
        &[params.b0, b0p, params.c0],
        params.x1_interval,
        &bc_guards,
    )?;
    let b_end = bc_run.state_at(x1[1])?[0];
    let b_min = params.b0.min(b_end);

    let q_sign = q0p.signum();
    let q_guards = [
        GuardConstraint::new("q_prime", SLOPE_MARGIN, move |y| q_sign * y[1]),
        GuardConstraint::new("q_plus_b", Q_PLUS_B_MARGIN, move |y| y[0] + b_min),
    ];
    let (q_run, x3, q_note) = guarded_run(
        "x3",
        q_system(m, l, alpha, k_const),
        &[params.q0, q0p],
        params.x3_interval,
        &q_guards,
    )?;

    let chart = ChartBox::new(
        [x1[0], params.x2_interval[0], x3[0]],
        [x1[1], params.x2_interval[1], x3[1]],
    )
    .with_margin_fraction(MARGIN_FRACTION);

    let conformal = |q_run: Arc<OdeSolution>, bc_run: Arc<OdeSolution>| {
        move |p: [f64; 3]| -> Result<Jet3> {
            let q = profile4(&q_run, p[2], 0, 0)?;
            let b = profile4(&bc_run, p[0], 0, 0)?;
            Ok(univariate(p, 2, q).add(&univariate(p, 0, b)))
        }
    };

    let g11 = {
        let w = conformal(q_run.clone(), bc_run.clone());
        ScalarField::new(chart, move |p| Ok(w(p)?.recip()?.square()))
    };
    let g22 = {
        let w = conformal(q_run.clone(), bc_run.clone());
        let q_run = q_run.clone();
        ScalarField::new(chart, move |p| {
            let qp = profile4(&q_run, p[2], 0, 1)?;
            Ok(univariate(p, 2, qp).square().mul(&w(p)?.recip()?.square()))
        })
    };
    let g33 = {
        let w = conformal(q_run.clone(), bc_run.clone());
        ScalarField::new(chart, move |p| Ok(w(p)?.recip()?.square()))
    };
    let metric = MetricField::new([g11, g22, g33], chart);

    let (a1, _) = equation.unified_constants().unwrap();
    let potential = {
        let w = conformal(q_run.clone(), bc_run.clone());
        let bc_run = bc_run.clone();
        ScalarField::new(chart, move |p| {
            let c = profile4(&bc_run, p[0], 1, 0)?;
            Ok(univariate(p, 0, c).div(&w(p)?)?.add_scalar(-a1))
        })
    };

    finish_instance(
        metric,
        potential,
        equation,
        FamilySpec::Qb(params.clone()),
        chart,
        vec![("q".to_string(), q_run), ("bc".to_string(), bc_run)],
        b_note.into_iter().chain(q_note).collect(),
    )
}

// ---------------------------------------------------------------------------
// p-profile critical point family
// ---------------------------------------------------------------------------

fn p_system(beta: f64, gamma: f64) -> Arc<OdeSystem1d> {
    Arc::new(OdeSystem1d {
        dim: 2,
        rhs: Box::new(move |_, y, dy| {
            dy[0] = y[1];
            dy[1] = -beta / (2.0 * y[0] * y[0]);
        }),
        deriv_recursion: Box::new(move |_, y| {
            let (p, pp) = (y[0], y[1]);
            let p2 = -beta / (2.0 * p * p);
            let p3 = beta * pp / (p * p * p);
            let p4 = beta * p2 / (p * p * p) - 3.0 * beta * pp * pp / (p * p * p * p);
            vec![[p, pp, p2, p3, p4]]
        }),
        profile_names: vec!["p"],
        state_profile_map: vec![(0, 0), (0, 1)],
        first_integrals: vec![Box::new(move |_, y| y[1] * y[1] - beta / y[0] - gamma)],
    })
}

fn c1_system(gamma: f64) -> Arc<OdeSystem1d> {
    Arc::new(OdeSystem1d {
        dim: 2,
        rhs: Box::new(move |_, y, dy| {
            dy[0] = y[1];
            dy[1] = -gamma * y[0];
        }),
        deriv_recursion: Box::new(move |_, y| {
            let (c, cp) = (y[0], y[1]);
            vec![[c, cp, -gamma * c, -gamma * cp, gamma * gamma * c]]
        }),
        profile_names: vec!["c1"],
        state_profile_map: vec![(0, 0), (0, 1)],
        first_integrals: vec![Box::new(move |_, y| y[1] * y[1] + gamma * y[0] * y[0])],
    })
}

/// Build a p-family instance. The equation is forced to the critical point
/// equation with R = 0.
pub fn build_p(params: &PParams) -> Result<MetricInstance> {
    check_interval("x1_interval", params.x1_interval)?;
    check_interval("x2_interval", params.x2_interval)?;
    check_interval("x3_interval", params.x3_interval)?;
    if params.beta >= 0.0 {
        return Err(Error::InvalidParams(format!(
            "beta must be negative, got {}",
            params.beta
        )));
    }
    if params.gamma <= 0.0 {
        return Err(Error::InvalidParams(format!(
            "gamma must be positive (real slopes need β/p + γ ≥ 0 with β < 0), got {}",
            params.gamma
        )));
    }
    let turning = -params.beta / params.gamma;
    if params.p0 <= turning {
        return Err(Error::InvalidParams(format!(
            "p0 must exceed the turning point −β/γ = {turning}, got {}",
            params.p0
        )));
    }

    let p0prime = slope_from_integral(
        "p",
        params.beta / params.p0 + params.gamma,
        params.p0_sign,
    )?;
    let p_sign = p0prime.signum();
    let p_guards = [
        GuardConstraint::new("p_prime", SLOPE_MARGIN, move |y| p_sign * y[1]),
        GuardConstraint::new("p_positive", SLOPE_MARGIN, |y| y[0]),
    ];
    let (p_run, x3, p_note) = guarded_run(
        "x3",
        p_system(params.beta, params.gamma),
        &[params.p0, p0prime],
        params.x3_interval,
        &p_guards,
    )?;

    let (c1_run, x1, c1_note) = guarded_run(
        "x1",
        c1_system(params.gamma),
        &[params.c1_0, params.c1_prime_0],
        params.x1_interval,
        &[],
    )?;

    let chart = ChartBox::new(
        [x1[0], params.x2_interval[0], x3[0]],
        [x1[1], params.x2_interval[1], x3[1]],
    )
    .with_margin_fraction(MARGIN_FRACTION);

    let g11 = {
        let run = p_run.clone();
        ScalarField::new(chart, move |p| {
            let pj = profile4(&run, p[2], 0, 0)?;
            Ok(univariate(p, 2, pj).square())
        })
    };
    let g22 = {
        let run = p_run.clone();
        ScalarField::new(chart, move |p| {
            let pj = profile4(&run, p[2], 0, 1)?;
            Ok(univariate(p, 2, pj).square())
        })
    };
    let metric = MetricField::new([g11, g22, ScalarField::constant(chart, 1.0)], chart);

    let potential = {
        let p_run = p_run.clone();
        let c1_run = c1_run.clone();
        ScalarField::new(chart, move |p| {
            let pj = profile4(&p_run, p[2], 0, 0)?;
            let c1 = profile4(&c1_run, p[0], 0, 0)?;
            Ok(univariate(p, 0, c1)
                .mul(&univariate(p, 2, pj))
                .add_scalar(-1.0))
        })
    };

    finish_instance(
        metric,
        potential,
        EquationSpec::CriticalPoint {
            scalar_curvature: 0.0,
        },
        FamilySpec::P(params.clone()),
        chart,
        vec![("p".to_string(), p_run), ("c1".to_string(), c1_run)],
        p_note.into_iter().chain(c1_note).collect(),
    )
}

// ---------------------------------------------------------------------------
// Warped constant-curvature branch
// ---------------------------------------------------------------------------

/// Truncated power series of order 4 in one variable; the Taylor recurrence
/// below determines the warped profile derivatives without hand-derived
/// third and fourth derivative formulas.
#[derive(Clone, Copy, Debug)]
struct Series5([f64; 5]);

impl Series5 {
    fn constant(c: f64) -> Self {
        Series5([c, 0.0, 0.0, 0.0, 0.0])
    }

    fn add(&self, rhs: &Series5) -> Series5 {
        let mut o = self.0;
        for k in 0..5 {
            o[k] += rhs.0[k];
        }
        Series5(o)
    }

    fn sub(&self, rhs: &Series5) -> Series5 {
        let mut o = self.0;
        for k in 0..5 {
            o[k] -= rhs.0[k];
        }
        Series5(o)
    }

    fn scale(&self, s: f64) -> Series5 {
        let mut o = self.0;
        for v in o.iter_mut() {
            *v *= s;
        }
        Series5(o)
    }

    fn mul(&self, rhs: &Series5) -> Series5 {
        let mut o = [0.0; 5];
        for i in 0..5 {
            for j in 0..(5 - i) {
                o[i + j] += self.0[i] * rhs.0[j];
            }
        }
        Series5(o)
    }

    fn recip(&self) -> Series5 {
        let a0 = self.0[0];
        let mut o = [0.0; 5];
        o[0] = 1.0 / a0;
        for k in 1..5 {
            let mut s = 0.0;
            for j in 1..=k {
                s += self.0[j] * o[k - j];
            }
            o[k] = -s / a0;
        }
        Series5(o)
    }

    /// Series of the derivative.
    fn derivative(&self) -> Series5 {
        let mut o = [0.0; 5];
        for k in 0..4 {
            o[k] = (k + 1) as f64 * self.0[k + 1];
        }
        Series5(o)
    }

    fn eval_poly(coeffs: &[f64], x: &Series5) -> Series5 {
        coeffs
            .iter()
            .rev()
            .fold(Series5::constant(0.0), |acc, c| {
                acc.mul(x).add(&Series5::constant(*c))
            })
    }
}

/// Order-4 Taylor recurrence for the warped system: given the state
/// (f, f', h, h') at a point, determine the series coefficients of f and h
/// degree by degree from the profile equations
///   h'' = (k̃ − h'²)/h + (φ(f)h − h'f')/ψ(f),
///   f'' = −2ψ(f)h''/h + φ(f).
fn warped_profile_jets(
    psi: &[f64],
    phi: &[f64],
    k_tilde: f64,
    state: &[f64],
) -> (ProfileJet, ProfileJet) {
    let mut fc = [state[0], state[1], 0.0, 0.0, 0.0];
    let mut hc = [state[2], state[3], 0.0, 0.0, 0.0];
    for stage in 0..3 {
        let fs = Series5(fc);
        let hs = Series5(hc);
        let fp = fs.derivative();
        let hp = hs.derivative();
        let psis = Series5::eval_poly(psi, &fs);
        let phis = Series5::eval_poly(phi, &fs);
        let hinv = hs.recip();
        let psiinv = psis.recip();
        let hpp = Series5::constant(k_tilde)
            .sub(&hp.mul(&hp))
            .mul(&hinv)
            .add(&phis.mul(&hs).sub(&hp.mul(&fp)).mul(&psiinv));
        let fpp = psis.scale(-2.0).mul(&hpp).mul(&hinv).add(&phis);
        // Coefficient `stage` of u'' equals (stage+1)(stage+2)·u_{stage+2}.
        let denom = ((stage + 1) * (stage + 2)) as f64;
        hc[stage + 2] = hpp.0[stage] / denom;
        fc[stage + 2] = fpp.0[stage] / denom;
    }
    let fact = [1.0, 1.0, 2.0, 6.0, 24.0];
    let mut fj = [0.0; 5];
    let mut hj = [0.0; 5];
    for k in 0..5 {
        fj[k] = fc[k] * fact[k];
        hj[k] = hc[k] * fact[k];
    }
    (fj, hj)
}

fn warped_system(equation: &EquationSpec, k_tilde: f64) -> Arc<OdeSystem1d> {
    let psi = equation.psi_poly().0;
    let phi = equation.phi_poly().0;
    let (psi_r, phi_r) = (psi.clone(), phi.clone());
    Arc::new(OdeSystem1d {
        dim: 4,
        rhs: Box::new(move |_, y, dy| {
            let (fj, hj) = warped_profile_jets(&psi_r, &phi_r, k_tilde, y);
            dy[0] = y[1];
            dy[1] = fj[2];
            dy[2] = y[3];
            dy[3] = hj[2];
        }),
        deriv_recursion: Box::new(move |_, y| {
            let (fj, hj) = warped_profile_jets(&psi, &phi, k_tilde, y);
            vec![fj, hj]
        }),
        profile_names: vec!["f", "h"],
        state_profile_map: vec![(0, 0), (0, 1), (1, 0), (1, 1)],
        first_integrals: vec![],
    })
}

/// Jet of the fiber profile u(x₂) with u'' + k̃u = 0, u(0) = 0, u'(0) = 1.
fn fiber_jet(base: [f64; 3], k_tilde: f64) -> Jet3 {
    let x2 = Jet3::coordinate(base, 1);
    if k_tilde > 0.0 {
        let s = k_tilde.sqrt();
        x2.scale(s).sin().scale(1.0 / s)
    } else if k_tilde < 0.0 {
        let s = (-k_tilde).sqrt();
        x2.scale(s).sinh().scale(1.0 / s)
    } else {
        x2
    }
}

/// Build a warped constant-curvature instance over s = x₁.
pub fn build_warped(params: &WarpedParams) -> Result<MetricInstance> {
    check_interval("s_interval", params.s_interval)?;
    check_interval("x2_interval", params.x2_interval)?;
    check_interval("x3_interval", params.x3_interval)?;
    if params.h0 <= 0.0 {
        return Err(Error::InvalidParams(format!(
            "h0 must be positive, got {}",
            params.h0
        )));
    }
    if params.equation.psi(params.f0).abs() < PSI_MARGIN {
        return Err(Error::InvalidParams(format!(
            "ψ(f0) = {} is within {PSI_MARGIN} of zero; the profile system \
             divides by ψ",
            params.equation.psi(params.f0)
        )));
    }
    // The fiber profile must stay positive on the x₂ interval.
    let [x2lo, x2hi] = params.x2_interval;
    let fiber_ok = if params.k_tilde > 0.0 {
        let period = std::f64::consts::PI / params.k_tilde.sqrt();
        x2lo > 0.0 && x2hi < period
    } else {
        x2lo > 0.0
    };
    if !fiber_ok {
        return Err(Error::InvalidParams(format!(
            "x2_interval {:?} leaves the region where the constant-curvature \
             fiber profile is positive",
            params.x2_interval
        )));
    }

    let equation = params.equation.clone();
    let eq_guard = equation.clone();
    let psi_sign = equation.psi(params.f0).signum();
    let guards = [
        GuardConstraint::new("psi", PSI_MARGIN, move |y| psi_sign * eq_guard.psi(y[0])),
        GuardConstraint::new("warp_h", WARP_MARGIN, |y| y[2]),
    ];
    let (run, s_iv, note) = guarded_run(
        "x1",
        warped_system(&equation, params.k_tilde),
        &[params.f0, params.f0_prime, params.h0, params.h0_prime],
        params.s_interval,
        &guards,
    )?;

    let chart = ChartBox::new(
        [s_iv[0], params.x2_interval[0], params.x3_interval[0]],
        [s_iv[1], params.x2_interval[1], params.x3_interval[1]],
    )
    .with_margin_fraction(MARGIN_FRACTION);

    let g22 = {
        let run = run.clone();
        ScalarField::new(chart, move |p| {
            let h = profile4(&run, p[0], 1, 0)?;
            Ok(univariate(p, 0, h).square())
        })
    };
    let k_tilde = params.k_tilde;
    let g33 = {
        let run = run.clone();
        ScalarField::new(chart, move |p| {
            let h = profile4(&run, p[0], 1, 0)?;
            Ok(univariate(p, 0, h)
                .square()
                .mul(&fiber_jet(p, k_tilde).square()))
        })
    };
    let metric = MetricField::new(
        [ScalarField::constant(chart, 1.0), g22, g33],
        chart,
    );
    let potential = {
        let run = run.clone();
        ScalarField::new(chart, move |p| {
            let f = profile4(&run, p[0], 0, 0)?;
            Ok(univariate(p, 0, f))
        })
    };

    finish_instance(
        metric,
        potential,
        equation,
        FamilySpec::Warped(params.clone()),
        chart,
        vec![("fh".to_string(), run)],
        note.into_iter().collect(),
    )
}

/// Exact flat Gaussian soliton on a cube (test fixture): flat metric,
/// f = (λ/2)|x|², satisfying the soliton equation to machine precision
/// with no ODE machinery involved.
#[cfg(test)]
pub(crate) fn analytic_gaussian_soliton(lambda: f64) -> MetricInstance {
    let chart = ChartBox::new([-1.0; 3], [1.0; 3]).with_margin_fraction(MARGIN_FRACTION);
    let metric = MetricField::new(
        [
            ScalarField::constant(chart, 1.0),
            ScalarField::constant(chart, 1.0),
            ScalarField::constant(chart, 1.0),
        ],
        chart,
    );
    let potential = ScalarField::new(chart, move |p| {
        let x = Jet3::coordinate(p, 0).square();
        let y = Jet3::coordinate(p, 1).square();
        let z = Jet3::coordinate(p, 2).square();
        Ok(x.add(&y).add(&z).scale(lambda / 2.0))
    });
    MetricInstance {
        metric,
        potential_base: potential,
        equation: EquationSpec::Soliton { lambda },
        family: FamilySpec::Warped(WarpedParams {
            equation: EquationSpec::Soliton { lambda },
            k_tilde: 0.0,
            h0: 1.0,
            h0_prime: 0.0,
            f0: 0.0,
            f0_prime: 0.0,
            s_interval: [-1.0, 1.0],
            x2_interval: [0.5, 1.0],
            x3_interval: [-1.0, 1.0],
        }),
        chart,
        potential_scale: 1.0,
        provenance: Provenance::default(),
        runs: Vec::new(),
    }
}

// ---------------------------------------------------------------------------
// Closed-form reference quantities
// ---------------------------------------------------------------------------

/// The family's closed-form Ricci eigenvalues at a point, with the profile
/// values they were computed from. `None` for families without closed
/// forms (the warped branch).
#[derive(Clone, Debug)]
pub struct ClosedFormEigen {
    pub lambda1: f64,
    pub lambda2: f64,
    pub profiles: Vec<(&'static str, f64)>,
}

pub fn closed_form_reference(
    instance: &MetricInstance,
    point: [f64; 3],
) -> Result<Option<ClosedFormEigen>> {
    match &instance.family {
        FamilySpec::SolitonCylinder(_) => {
            let run = instance.run("k").expect("cylinder instances carry a k run");
            let k = run.profile_jet(point[2], 0)?;
            Ok(Some(ClosedFormEigen {
                lambda1: 0.0,
                lambda2: -k[3] / k[1],
                profiles: vec![("k", k[0]), ("k_prime", k[1])],
            }))
        }
        FamilySpec::Qb(params) => {
            let q = instance
                .run("q")
                .expect("qb instances carry a q run")
                .profile_jet(point[2], 0)?;
            let bc = instance.run("bc").expect("qb instances carry a bc run");
            let b = bc.profile_jet(point[0], 0)?;
            let c = bc.profile_jet(point[0], 1)?;
            let r = params.scalar_curvature;
            let w3 = (q[0] + b[0]).powi(3);
            Ok(Some(ClosedFormEigen {
                lambda1: 2.0 * params.m * w3 + r / 3.0,
                lambda2: -params.m * w3 + r / 3.0,
                profiles: vec![("q", q[0]), ("b", b[0]), ("c", c[0])],
            }))
        }
        FamilySpec::P(_) => {
            let p = instance
                .run("p")
                .expect("p instances carry a p run")
                .profile_jet(point[2], 0)?;
            Ok(Some(ClosedFormEigen {
                lambda1: -2.0 * p[2] / p[0],
                lambda2: -p[2] / p[0] - p[3] / p[1],
                profiles: vec![("p", p[0]), ("p_prime", p[1])],
            }))
        }
        FamilySpec::Warped(_) => Ok(None),
    }
}
