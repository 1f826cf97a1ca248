//! Residual verification of constructed instances: the defining equation,
//! pointwise curvature identities, Codazzi structures, eigenvalue
//! degeneracy, scalar-curvature constancy, Cotton-tensor flatness and
//! structural coordinate checks, evaluated over a deterministic sample
//! grid and collected into a report.
//!
//! Tolerances follow the relative-plus-absolute scheme `τ·(1 + |reference|)`
//! with τ = 1e-7 unless a check states otherwise. Points where a check's
//! preconditions fail (ψ near zero, |∇f| small, isotropic spectra) are
//! skipped with accounting; a check with more than 20% of its points
//! skipped is reported inconclusive rather than passed.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::families::{closed_form_reference, FamilySpec, MetricInstance};
use crate::jet::{ChartBox, Jet3};
use crate::tensor::{
    generalized_eigen, rank3_g_norm, CurvatureJets, EigenLabel, GeneralizedEigen,
    HessianGradient, Sym2, ISOTROPY_GAP,
};

/// Default residual tolerance τ.
pub const TOL: f64 = 1e-7;
/// Pair-degeneracy tolerance |λ2 − λ3|.
pub const PAIR_TOL: f64 = 1e-8;
/// Required simple-pair gap |λ1 − λ2|.
pub const GAP_MIN: f64 = ISOTROPY_GAP;
/// ψ values below this are skipped in ψ-divided checks.
pub const PSI_SKIP: f64 = 1e-6;
/// |∇f| values below this are skipped in |∇f|-divided checks.
pub const GRAD_SKIP: f64 = 1e-3;
/// Fraction of skipped points beyond which a check is inconclusive.
pub const SKIP_FRACTION: f64 = 0.2;
/// Cotton-tensor non-flatness witness threshold for the (q+b)⁻² family.
pub const COTTON_WITNESS: f64 = 1e-6;

/// Deterministic sampling lattice, strictly interior to the chart by the
/// per-axis margins.
#[derive(Clone, Debug)]
pub struct SampleGrid {
    pub counts: [usize; 3],
    pub margins: [f64; 3],
    axes: [Vec<f64>; 3],
    points: Vec<[f64; 3]>,
}

impl SampleGrid {
    /// Lattice with the chart's own margins.
    pub fn new(chart: &ChartBox, counts: [usize; 3]) -> Result<SampleGrid> {
        Self::with_margins(chart, counts, chart.margins)
    }

    pub fn with_margins(
        chart: &ChartBox,
        counts: [usize; 3],
        margins: [f64; 3],
    ) -> Result<SampleGrid> {
        if counts.iter().any(|&n| n < 3) {
            return Err(Error::Usage(format!(
                "grid counts must be at least 3 per axis, got {counts:?}"
            )));
        }
        let mut axes: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
        for a in 0..3 {
            let lo = chart.lo[a] + margins[a];
            let hi = chart.hi[a] - margins[a];
            if !(lo < hi) {
                return Err(Error::Usage(format!(
                    "margins leave an empty interval on axis {a}"
                )));
            }
            axes[a] = (0..counts[a])
                .map(|k| lo + (hi - lo) * k as f64 / (counts[a] - 1) as f64)
                .collect();
        }
        let mut points = Vec::with_capacity(counts.iter().product());
        for &x1 in &axes[0] {
            for &x2 in &axes[1] {
                for &x3 in &axes[2] {
                    points.push([x1, x2, x3]);
                }
            }
        }
        Ok(SampleGrid {
            counts,
            margins,
            axes,
            points,
        })
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn axis(&self, a: usize) -> &[f64] {
        &self.axes[a]
    }

    /// Flat index of the lattice point (i, j, k).
    pub fn flat(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.counts[1] + j) * self.counts[2] + k
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

/// Outcome of one named check.
#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub max_residual: f64,
    pub mean_residual: f64,
    pub worst_point: [f64; 3],
    pub tolerance: f64,
    /// `max_residual <= tolerance`.
    pub pass: bool,
    /// Whether this check counts toward the report's overall verdict.
    pub mandatory: bool,
    pub skipped_points: usize,
    pub total_points: usize,
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Residual accumulator shared by all checks.
struct Stats {
    max: f64,
    sum: f64,
    n: usize,
    worst: [f64; 3],
    skipped: usize,
}

impl Stats {
    fn new() -> Stats {
        Stats {
            max: 0.0,
            sum: 0.0,
            n: 0,
            worst: [f64::NAN; 3],
            skipped: 0,
        }
    }

    fn add(&mut self, point: [f64; 3], r: f64) {
        if self.n == 0 || r > self.max {
            self.max = r;
            self.worst = point;
        }
        self.sum += r;
        self.n += 1;
    }

    fn skip(&mut self) {
        self.skipped += 1;
    }

    fn result(self, name: &str, tolerance: f64, mandatory: bool) -> CheckResult {
        let total = self.n + self.skipped;
        let pass = self.max <= tolerance;
        let inconclusive = total > 0 && (self.skipped as f64) > SKIP_FRACTION * total as f64;
        let verdict = if inconclusive {
            Verdict::Inconclusive
        } else if pass {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
        CheckResult {
            name: name.to_string(),
            max_residual: self.max,
            mean_residual: if self.n > 0 { self.sum / self.n as f64 } else { 0.0 },
            worst_point: self.worst,
            tolerance,
            pass,
            mandatory,
            skipped_points: self.skipped,
            total_points: total,
            verdict,
            note: None,
        }
    }
}

fn with_note(mut c: CheckResult, note: String) -> CheckResult {
    c.note = Some(note);
    c
}

/// Everything the checks need at one grid point, computed once.
pub struct PointData {
    pub point: [f64; 3],
    pub jets: CurvatureJets,
    pub metric_sym: Sym2,
    pub ginv: [f64; 3],
    pub ricci: Sym2,
    pub scalar: f64,
    pub f_jet: Jet3,
    pub psi_jet: Jet3,
    pub phi_jet: Jet3,
    pub hess: HessianGradient,
    pub eigen: GeneralizedEigen,
}

impl PointData {
    /// `Σ_l g^{ll} Ric_{il} w_l` (the Ricci contraction with a raised
    /// coordinate 1-form w).
    fn ricci_contract(&self, i: usize, w: [f64; 3]) -> f64 {
        (0..3).map(|l| self.ginv[l] * self.ricci.get(i, l) * w[l]).sum()
    }

    /// g-norm of a coordinate 1-form.
    fn one_form_norm(&self, w: [f64; 3]) -> f64 {
        (0..3)
            .map(|i| self.ginv[i] * w[i] * w[i])
            .sum::<f64>()
            .sqrt()
    }
}

/// Which Codazzi candidate tensor to test.
pub enum CodazziChoice {
    /// `e^{−f}(Rc − (R/2)g)` (solitons).
    SolitonT,
    /// `(a1+f)²Rc + (½|∇f|² − (a2+a1R)f − (R/4)f²)g` (V-static and
    /// critical point equations).
    VStaticD,
    /// `a·Rc + b·g` for caller-supplied coefficient jets.
    Custom(Box<dyn Fn(&PointData) -> (Jet3, Jet3)>),
}

impl CodazziChoice {
    fn name(&self) -> &'static str {
        match self {
            CodazziChoice::SolitonT => "codazzi.soliton_t",
            CodazziChoice::VStaticD => "codazzi.v_static_d",
            CodazziChoice::Custom(_) => "codazzi.custom",
        }
    }
}

/// Family discriminator for applicability routing.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Kind {
    Cylinder,
    Qb,
    P,
    Warped,
}

fn kind(family: &FamilySpec) -> Kind {
    match family {
        FamilySpec::SolitonCylinder(_) => Kind::Cylinder,
        FamilySpec::Qb(_) => Kind::Qb,
        FamilySpec::P(_) => Kind::P,
        FamilySpec::Warped(_) => Kind::Warped,
    }
}

/// Sampled eigenvalues of the Codazzi candidate, for the report.
#[derive(Clone, Debug, Serialize)]
pub struct CodazziEigenSample {
    pub point: [f64; 3],
    pub mu: [f64; 3],
}

#[derive(Clone, Debug, Serialize)]
pub struct VerificationReport {
    pub family: String,
    pub equation: String,
    pub chart: ChartBox,
    /// Why the chart is smaller than requested, when a guard fired.
    pub guard_notes: Vec<String>,
    pub drift: f64,
    pub grid_counts: [usize; 3],
    pub checks: Vec<CheckResult>,
    pub codazzi_eigenvalues: Vec<CodazziEigenSample>,
    /// Spread (max − min) of the degenerate Codazzi eigenvalue μ2 across
    /// the samples; reported, never asserted.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub codazzi_mu2_spread: Option<f64>,
    pub overall_pass: bool,
}

impl VerificationReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Names accepted by check selection (CLI `--checks`).
pub const CHECK_NAMES: [&str; 10] = [
    "equation",
    "degeneracy",
    "codazzi",
    "codazzi-coefficients",
    "pointwise",
    "soliton",
    "scalar-constancy",
    "cotton",
    "structural",
    "eigen-crosscheck",
];

/// A validated selection of check groups.
#[derive(Clone, Debug)]
pub struct CheckSelection(Option<Vec<String>>);

impl CheckSelection {
    pub fn all() -> CheckSelection {
        CheckSelection(None)
    }

    pub fn parse(list: &str) -> Result<CheckSelection> {
        if list.trim() == "all" {
            return Ok(CheckSelection::all());
        }
        let mut names = Vec::new();
        for raw in list.split(',') {
            let name = raw.trim().to_string();
            if !CHECK_NAMES.contains(&name.as_str()) {
                return Err(Error::Usage(format!(
                    "unknown check `{name}`; valid names: {}",
                    CHECK_NAMES.join(", ")
                )));
            }
            names.push(name);
        }
        if names.is_empty() {
            return Err(Error::Usage("empty check list".to_string()));
        }
        Ok(CheckSelection(Some(names)))
    }

    fn wants(&self, group: &str) -> bool {
        match &self.0 {
            None => true,
            Some(list) => list.iter().any(|n| n == group),
        }
    }

    fn is_explicit(&self) -> bool {
        self.0.is_some()
    }
}

/// Verification engine over one instance and sample grid: precomputes the
/// curvature pipeline at every grid point, then evaluates checks.
pub struct Suite<'a> {
    pub instance: &'a MetricInstance,
    pub grid: SampleGrid,
    points: Vec<PointData>,
    tol: f64,
}

impl<'a> Suite<'a> {
    pub fn new(instance: &'a MetricInstance, grid: SampleGrid) -> Result<Suite<'a>> {
        if instance.provenance.drift > crate::families::DRIFT_LIMIT {
            return Err(Error::Unverifiable(format!(
                "instance drift {} exceeds {}",
                instance.provenance.drift,
                crate::families::DRIFT_LIMIT
            )));
        }
        let potential = instance.potential();
        let mut points = Vec::with_capacity(grid.points().len());
        for &p in grid.points() {
            let jets = crate::tensor::curvature_jets(&instance.metric, p)?;
            let f_jet = potential.jet(p)?;
            let (psi_jet, phi_jet) = instance.equation.eval_jets(&f_jet);
            let hess = crate::tensor::hessian_from_jets(&jets, &f_jet);
            let ricci = jets.ricci_values();
            let metric_sym = jets.metric_values();
            let eigen = generalized_eigen(&ricci, &metric_sym)?;
            points.push(PointData {
                point: p,
                ginv: jets.ginv_values(),
                metric_sym,
                ricci,
                scalar: jets.scalar.value(),
                f_jet,
                psi_jet,
                phi_jet,
                hess,
                eigen,
                jets,
            });
        }
        Ok(Suite {
            instance,
            grid,
            points,
            tol: TOL,
        })
    }

    /// Override the default residual tolerance τ (criterion-pinned
    /// tolerances such as the 1e-8 pair split are unaffected).
    pub fn set_tolerance(&mut self, tol: f64) {
        assert!(tol > 0.0);
        self.tol = tol;
    }

    pub fn point_data(&self) -> &[PointData] {
        &self.points
    }

    /// Max over the grid of `‖∇df − ψ·Rc − φ·g‖_g`.
    pub fn equation_residual(&self) -> CheckResult {
        let mut stats = Stats::new();
        for d in &self.points {
            let psi = d.psi_jet.value();
            let phi = d.phi_jet.value();
            let resid = Sym2::from_fn(|i, j| {
                d.hess.hessian.get(i, j)
                    - psi * d.ricci.get(i, j)
                    - phi * d.metric_sym.get(i, j)
            });
            stats.add(d.point, resid.g_norm(d.ginv));
        }
        stats.result("equation_residual", self.tol, true)
    }

    /// Eigenvalue degeneracy: the pair split |λ2 − λ3|, the simple gap
    /// |λ1 − λ2| ≥ 1e-4 (as a shortfall residual), and g-orthogonality of
    /// the λ1-eigenvector to ∂₂.
    pub fn degeneracy_check(&self, mandatory: bool) -> Vec<CheckResult> {
        let mut pair = Stats::new();
        let mut gap = Stats::new();
        let mut orth = Stats::new();
        let mut isotropic_at = None;
        for d in &self.points {
            match d.eigen.label {
                EigenLabel::Split => {
                    pair.add(d.point, (d.eigen.values[1] - d.eigen.values[2]).abs());
                    let g = (d.eigen.values[0] - d.eigen.values[1]).abs();
                    gap.add(d.point, (GAP_MIN - g).max(0.0));
                    let v = d.eigen.vectors[0];
                    // g(v, ∂₂)/√g₂₂ = √g₂₂ · v².
                    let g22 = d.metric_sym.get(1, 1);
                    orth.add(d.point, g22.sqrt() * v[1].abs());
                }
                EigenLabel::Isotropic => {
                    // No honest 2+1 split: the gap clause fails here.
                    pair.add(d.point, (d.eigen.values[1] - d.eigen.values[2]).abs());
                    gap.add(d.point, GAP_MIN);
                    orth.skip();
                    isotropic_at.get_or_insert(d.point);
                }
            }
        }
        let mut out = vec![
            pair.result("degeneracy.pair", PAIR_TOL, mandatory),
            gap.result("degeneracy.gap", 0.0, mandatory),
            orth.result("degeneracy.e2_orthogonality", PSI_SKIP, mandatory),
        ];
        if let Some(p) = isotropic_at {
            out[1] = with_note(
                out[1].clone(),
                format!("isotropic point detected at ({}, {}, {})", p[0], p[1], p[2]),
            );
        }
        out
    }

    fn codazzi_jets(&self, choice: &CodazziChoice, d: &PointData) -> Result<[[Jet3; 3]; 3]> {
        let base = d.point;
        let zero = Jet3::constant(base, 0.0);
        let (a_jet, b_jet) = match choice {
            CodazziChoice::SolitonT => {
                if !self.instance.equation.is_soliton() {
                    return Err(Error::Usage(
                        "the soliton Codazzi tensor requires a soliton instance".to_string(),
                    ));
                }
                let a = d.f_jet.neg().exp();
                let b = a.mul(&d.jets.scalar).scale(-0.5);
                (a, b)
            }
            CodazziChoice::VStaticD => {
                let (a1, a2) =
                    self.instance.equation.unified_constants().ok_or_else(|| {
                        Error::Usage(
                            "the V-static Codazzi tensor requires a V-static or critical \
                             point instance"
                                .to_string(),
                        )
                    })?;
                let r = self.instance.equation.r_target().unwrap();
                let a = d.f_jet.add_scalar(a1).square();
                // ½|∇f|² − (a2 + a1·R)f − (R/4)f², with the equation's
                // constant R.
                let mut grad_sq = zero;
                for i in 0..3 {
                    let df = d.f_jet.derivative(i);
                    grad_sq = grad_sq.add(&d.jets.ginv[i].mul(&df.square()));
                }
                let b = grad_sq
                    .scale(0.5)
                    .sub(&d.f_jet.scale(a2 + a1 * r))
                    .sub(&d.f_jet.square().scale(r / 4.0));
                (a, b)
            }
            CodazziChoice::Custom(f) => f(d),
        };
        let mut t = [[zero; 3]; 3];
        for i in 0..3 {
            for j in i..3 {
                let mut v = a_jet.mul(&d.jets.ricci[i][j]);
                if i == j {
                    v = v.add(&b_jet.mul(&d.jets.g[i]));
                }
                t[i][j] = v;
                t[j][i] = v;
            }
        }
        Ok(t)
    }

    /// Max over the grid and index triples of `|∇_i C_{jk} − ∇_j C_{ik}|`
    /// for the chosen Codazzi candidate; also samples its eigenvalues.
    pub fn codazzi_residual(
        &self,
        choice: &CodazziChoice,
        mandatory: bool,
    ) -> Result<(CheckResult, Vec<CodazziEigenSample>)> {
        let mut stats = Stats::new();
        let mut samples = Vec::new();
        let n = self.points.len();
        let sample_idx: Vec<usize> = (0..5).map(|k| k * (n - 1) / 4).collect();
        for (idx, d) in self.points.iter().enumerate() {
            let t = self.codazzi_jets(choice, d)?;
            let grad = d.jets.covariant_derivative_sym2(&t);
            let mut worst = 0.0f64;
            for i in 0..3 {
                for j in (i + 1)..3 {
                    for k in 0..3 {
                        worst = worst.max((grad[i][j][k] - grad[j][i][k]).abs());
                    }
                }
            }
            stats.add(d.point, worst);
            if sample_idx.contains(&idx) {
                let c_vals = Sym2::from_fn(|i, j| t[i][j].value());
                let eig = generalized_eigen(&c_vals, &d.metric_sym)?;
                samples.push(CodazziEigenSample {
                    point: d.point,
                    mu: eig.values,
                });
            }
        }
        Ok((stats.result(choice.name(), self.tol, mandatory), samples))
    }

    /// The coefficient conditions for `a·Rc + b·g` to be Codazzi:
    /// `∇a/a = (∇ψ + ∇f)/ψ` and the matching condition on `∇b`.
    pub fn codazzi_coefficients<F>(&self, coeffs: F, mandatory: bool) -> CheckResult
    where
        F: Fn(&PointData) -> (Jet3, Jet3),
    {
        let mut stats = Stats::new();
        for d in &self.points {
            let psi = d.psi_jet.value();
            if psi.abs() < PSI_SKIP {
                stats.skip();
                continue;
            }
            let (a_jet, b_jet) = coeffs(d);
            let a = a_jet.value();
            if a.abs() < 1e-12 {
                stats.skip();
                continue;
            }
            let dpsi = d.psi_jet.gradient();
            let df = d.f_jet.gradient();
            let dr = d.jets.scalar.gradient();
            let w = [dpsi[0] + df[0], dpsi[1] + df[1], dpsi[2] + df[2]];
            let mut worst = 0.0f64;
            for i in 0..3 {
                // Condition on a: ∇a/a = (∇ψ + ∇f)/ψ.
                let lhs_a = a_jet.d1(i) / a;
                worst = worst.max((lhs_a - w[i] / psi).abs());
                // Condition on b: ∇b/a matches the Ricci contraction.
                let lhs_b = b_jet.d1(i) / a;
                let rhs_b = (0.5 * d.ricci_contract(i, w)
                    - d.scalar / 2.0 * w[i]
                    - dr[i] / 4.0 * psi)
                    / psi;
                worst = worst.max((lhs_b - rhs_b).abs());
            }
            stats.add(d.point, worst);
        }
        stats.result("codazzi_coefficients", self.tol, mandatory)
    }

    /// The canonical coefficient pair for the instance's equation.
    pub fn canonical_coefficients(&self) -> Result<impl Fn(&PointData) -> (Jet3, Jet3) + '_> {
        enum Which {
            Soliton,
            Unified(f64, f64, f64),
        }
        let which = if self.instance.equation.is_soliton() {
            Which::Soliton
        } else if let Some((a1, a2)) = self.instance.equation.unified_constants() {
            Which::Unified(a1, a2, self.instance.equation.r_target().unwrap())
        } else {
            return Err(Error::Usage(
                "no canonical Codazzi coefficients for a generic equation".to_string(),
            ));
        };
        Ok(move |d: &PointData| match which {
            Which::Soliton => {
                let a = d.f_jet.neg().exp();
                let b = a.mul(&d.jets.scalar).scale(-0.5);
                (a, b)
            }
            Which::Unified(a1, a2, r) => {
                let a = d.f_jet.add_scalar(a1).square();
                let mut grad_sq = Jet3::constant(d.point, 0.0);
                for i in 0..3 {
                    let df = d.f_jet.derivative(i);
                    grad_sq = grad_sq.add(&d.jets.ginv[i].mul(&df.square()));
                }
                let b = grad_sq
                    .scale(0.5)
                    .sub(&d.f_jet.scale(a2 + a1 * r))
                    .sub(&d.f_jet.square().scale(r / 4.0));
                (a, b)
            }
        })
    }

    /// Divergence identity (i) and the symmetry of the assembled
    /// third-order tensor (ii).
    pub fn pointwise_identities(&self) -> (CheckResult, CheckResult) {
        let mut first = Stats::new();
        let mut second = Stats::new();
        for d in &self.points {
            let psi = d.psi_jet.value();
            let dpsi = d.psi_jet.gradient();
            let dphi = d.phi_jet.gradient();
            let df = d.f_jet.gradient();
            let dr = d.jets.scalar.gradient();
            let r = d.scalar;

            // (i) 2(dψ)R + ψ(dR) + 4dφ − 2Rc(∇ψ − ∇f, ·) as a 1-form.
            let mut w = [0.0; 3];
            for i in 0..3 {
                let diff = [dpsi[0] - df[0], dpsi[1] - df[1], dpsi[2] - df[2]];
                w[i] = 2.0 * dpsi[i] * r + psi * dr[i] + 4.0 * dphi[i]
                    - 2.0 * d.ricci_contract(i, diff);
            }
            first.add(d.point, d.one_form_norm(w));

            // (ii) A_{ijk} symmetric in (i, j).
            let nr = d.jets.nabla_ricci();
            let sum = [dpsi[0] + df[0], dpsi[1] + df[1], dpsi[2] + df[2]];
            let mut a = [[[0.0f64; 3]; 3]; 3];
            for i in 0..3 {
                let contraction = d.ricci_contract(i, sum);
                for j in 0..3 {
                    for k in 0..3 {
                        let gjk = d.metric_sym.get(j, k);
                        a[i][j][k] = (d.ricci.get(j, k) - r / 2.0 * gjk) * sum[i]
                            + 0.5 * contraction * gjk
                            + psi * (nr[i][j][k] - dr[i] / 4.0 * gjk);
                    }
                }
            }
            let mut worst = 0.0f64;
            for i in 0..3 {
                for j in 0..3 {
                    for k in 0..3 {
                        worst = worst.max((a[i][j][k] - a[j][i][k]).abs());
                    }
                }
            }
            second.add(d.point, worst);
        }
        (
            first.result("pointwise.divergence", self.tol, true),
            second.result("pointwise.symmetry", self.tol, true),
        )
    }

    /// Soliton identities: (i) ½dR = Rc(∇f, ·); (ii) R + |∇f|² − 2λf is
    /// constant over the grid (standard deviation criterion).
    pub fn soliton_identities(&self) -> Result<(CheckResult, CheckResult)> {
        let lambda = self.instance.equation.soliton_lambda().ok_or_else(|| {
            Error::Usage("soliton identities require a soliton instance".to_string())
        })?;
        let mut first = Stats::new();
        let mut values = Vec::with_capacity(self.points.len());
        for d in &self.points {
            let dr = d.jets.scalar.gradient();
            let df = d.f_jet.gradient();
            let mut w = [0.0; 3];
            for i in 0..3 {
                w[i] = 0.5 * dr[i] - d.ricci_contract(i, df);
            }
            first.add(d.point, d.one_form_norm(w));
            values.push((
                d.point,
                d.scalar + d.hess.grad_norm_sq - 2.0 * lambda * d.f_jet.value(),
            ));
        }
        let mean = values.iter().map(|(_, v)| v).sum::<f64>() / values.len() as f64;
        let var = values
            .iter()
            .map(|(_, v)| (v - mean) * (v - mean))
            .sum::<f64>()
            / values.len() as f64;
        let std = var.sqrt();
        let mut second = Stats::new();
        let worst = values
            .iter()
            .max_by(|a, b| {
                (a.1 - mean)
                    .abs()
                    .partial_cmp(&(b.1 - mean).abs())
                    .unwrap()
            })
            .unwrap();
        second.add(worst.0, std);
        let tol = self.tol * (1.0 + mean.abs());
        let mut res = second.result("soliton.conserved", tol, true);
        res.total_points = values.len();
        Ok((
            first.result("soliton.scalar_gradient", self.tol, true),
            with_note(res, format!("constant value ≈ {mean:.12}")),
        ))
    }

    /// |R − R_target| over the grid for constant-scalar-curvature
    /// equations.
    pub fn scalar_constancy(&self, mandatory: bool) -> Result<CheckResult> {
        let r_target = self.instance.equation.r_target().ok_or_else(|| {
            Error::Usage(
                "scalar constancy applies to V-static and critical point instances only"
                    .to_string(),
            )
        })?;
        let mut stats = Stats::new();
        for d in &self.points {
            stats.add(d.point, (d.scalar - r_target).abs());
        }
        Ok(stats.result(
            "scalar_constancy",
            self.tol * (1.0 + r_target.abs()),
            mandatory,
        ))
    }

    /// Cotton-tensor norms. All families report the max g-norm; warped
    /// instances must be conformally flat, (q+b)⁻² instances must witness
    /// non-flatness at the grid max.
    pub fn cotton_norm(&self) -> Vec<CheckResult> {
        let mut stats = Stats::new();
        for d in &self.points {
            stats.add(d.point, rank3_g_norm(&d.jets.cotton(), d.ginv));
        }
        let k = kind(&self.instance.family);
        let mut out = Vec::new();
        match k {
            Kind::Warped => {
                out.push(stats.result("cotton.flat", self.tol, true));
            }
            Kind::Qb => {
                let max = stats.max;
                let worst = stats.worst;
                out.push(with_note(
                    stats.result("cotton.norm", f64::MAX, false),
                    "informational: max ‖Cotton‖ over the grid".to_string(),
                ));
                let mut witness = Stats::new();
                witness.add(worst, (COTTON_WITNESS - max).max(0.0));
                out.push(with_note(
                    witness.result("cotton.witness", 0.0, true),
                    format!("non-flatness witness: max ‖Cotton‖ = {max:.6e}"),
                ));
            }
            Kind::Cylinder | Kind::P => {
                out.push(with_note(
                    stats.result("cotton.norm", f64::MAX, false),
                    "informational: no conformal-flatness claim for this family".to_string(),
                ));
            }
        }
        out
    }

    /// Structural coordinate checks per family.
    pub fn structural_checks(&self) -> Vec<CheckResult> {
        let k = kind(&self.instance.family);
        let mut out = Vec::new();
        if matches!(k, Kind::Cylinder | Kind::Qb | Kind::P) {
            // (a) g22/g33 depends on x₃ only.
            let mut v_profile = Stats::new();
            for kk in 0..self.grid.counts[2] {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                let mut at = self.points[0].point;
                for i in 0..self.grid.counts[0] {
                    for j in 0..self.grid.counts[1] {
                        let d = &self.points[self.grid.flat(i, j, kk)];
                        let ratio =
                            d.metric_sym.get(1, 1) / d.metric_sym.get(2, 2);
                        lo = lo.min(ratio);
                        hi = hi.max(ratio);
                        at = d.point;
                    }
                }
                v_profile.add(at, hi - lo);
            }
            out.push(with_note(
                v_profile.result("structural.v_profile", 1e-9, true),
                "cross-variation of g22/g33 off the x3 axis".to_string(),
            ));

            // (a) ∂₂f = 0 identically.
            let mut df2 = Stats::new();
            for d in &self.points {
                df2.add(d.point, d.f_jet.d1(1).abs());
            }
            out.push(df2.result("structural.f_independent_of_x2", 1e-12, true));

            // (b) umbilic leaves: ⟨∇_{E₂}E₂, E₁⟩ = ⟨∇_{E₃}E₃, E₁⟩, and the
            // common value (−H/2) has no x₃ variation.
            let mut umbilic = Stats::new();
            let mut h_values = vec![0.0; self.points.len()];
            for (idx, d) in self.points.iter().enumerate() {
                let gam = d.jets.gamma_values();
                let g = d.metric_sym;
                let e2 = gam[0][1][1] * g.get(0, 0).sqrt() / g.get(1, 1);
                let e3 = gam[0][2][2] * g.get(0, 0).sqrt() / g.get(2, 2);
                umbilic.add(d.point, (e2 - e3).abs());
                h_values[idx] = 0.5 * (e2 + e3);
            }
            out.push(umbilic.result("structural.umbilic", 1e-8, true));

            let mut h_const = Stats::new();
            for i in 0..self.grid.counts[0] {
                for j in 0..self.grid.counts[1] {
                    let mut lo = f64::INFINITY;
                    let mut hi = f64::NEG_INFINITY;
                    let mut at = self.points[0].point;
                    for kk in 0..self.grid.counts[2] {
                        let idx = self.grid.flat(i, j, kk);
                        lo = lo.min(h_values[idx]);
                        hi = hi.max(h_values[idx]);
                        at = self.points[idx].point;
                    }
                    h_const.add(at, hi - lo);
                }
            }
            out.push(with_note(
                h_const.result("structural.h_x3_const", 1e-8, true),
                "x3-variation of the umbilic factor −H/2".to_string(),
            ));
        }
        if matches!(k, Kind::Qb) {
            // (c) ∂₃f/(g33·√v) depends on x₁ only.
            let mut c1 = Stats::new();
            for i in 0..self.grid.counts[0] {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                let mut at = self.points[0].point;
                for j in 0..self.grid.counts[1] {
                    for kk in 0..self.grid.counts[2] {
                        let d = &self.points[self.grid.flat(i, j, kk)];
                        let g22 = d.metric_sym.get(1, 1);
                        let g33 = d.metric_sym.get(2, 2);
                        let v = g22 / g33;
                        let s = d.f_jet.d1(2) / (g33 * v.sqrt());
                        lo = lo.min(s);
                        hi = hi.max(s);
                        at = d.point;
                    }
                }
                c1.add(at, hi - lo);
            }
            out.push(with_note(
                c1.result("structural.potential_profile", self.tol, true),
                "cross-variation of ∂₃f/(g33·√v) off the x1 axis".to_string(),
            ));
        }
        if matches!(k, Kind::Warped) {
            // (d) ⟨∇_{E_i}E_i, E₁⟩ = −(ψλ_i + φ)/|∇f| for fiber directions,
            // with E₁ = ∇f/|∇f|.
            let mut zeta = Stats::new();
            for d in &self.points {
                let grad_norm = d.hess.grad_norm_sq.sqrt();
                if grad_norm < GRAD_SKIP {
                    zeta.skip();
                    continue;
                }
                let sign = d.f_jet.d1(0).signum();
                let gam = d.jets.gamma_values();
                let g = d.metric_sym;
                let psi = d.psi_jet.value();
                let phi = d.phi_jet.value();
                let mut worst = 0.0f64;
                for i in 1..3 {
                    let lhs = sign * gam[0][i][i] * g.get(0, 0).sqrt() / g.get(i, i);
                    let lam = d.ricci.get(i, i) / g.get(i, i);
                    worst = worst.max((lhs + (psi * lam + phi) / grad_norm).abs());
                }
                zeta.add(d.point, worst);
            }
            out.push(zeta.result("structural.warped_zeta", self.tol, true));
        }
        out
    }

    /// Computed Ricci eigenvalues against the family's closed forms.
    pub fn crosscheck_eigen(&self) -> Result<CheckResult> {
        let mut stats = Stats::new();
        let mut supported = true;
        for d in &self.points {
            match closed_form_reference(self.instance, d.point)? {
                Some(cf) => {
                    let r1 = (d.eigen.values[0] - cf.lambda1).abs()
                        / (1.0 + cf.lambda1.abs());
                    let r2 = (d.eigen.values[1] - cf.lambda2).abs()
                        / (1.0 + cf.lambda2.abs());
                    let r3 = (d.eigen.values[2] - cf.lambda2).abs()
                        / (1.0 + cf.lambda2.abs());
                    stats.add(d.point, r1.max(r2).max(r3));
                }
                None => {
                    supported = false;
                    break;
                }
            }
        }
        if !supported {
            let mut empty = Stats::new();
            empty.add(self.points[0].point, 0.0);
            return Ok(with_note(
                empty.result("eigen_crosscheck", f64::MAX, false),
                "not applicable: no closed-form eigenvalues for this family".to_string(),
            ));
        }
        Ok(stats.result("eigen_crosscheck", self.tol, true))
    }

    /// Run the selected checks and assemble the report.
    pub fn run(&self, selection: &CheckSelection) -> Result<VerificationReport> {
        let k = kind(&self.instance.family);
        let eq = &self.instance.equation;
        let mut checks = Vec::new();
        let mut codazzi_eigenvalues = Vec::new();

        if selection.wants("equation") {
            checks.push(self.equation_residual());
        }
        if selection.wants("pointwise") {
            let (a, b) = self.pointwise_identities();
            checks.push(a);
            checks.push(b);
        }
        if selection.wants("soliton") {
            if eq.is_soliton() {
                let (a, b) = self.soliton_identities()?;
                checks.push(a);
                checks.push(b);
            } else if selection.is_explicit() {
                return Err(Error::Usage(
                    "check `soliton` applies only to soliton instances".to_string(),
                ));
            }
        }
        if selection.wants("scalar-constancy") {
            if eq.r_target().is_some() {
                // Mandatory for families that construct R to be constant;
                // informational for warped seeds, where R equals the target
                // only for consistent initial data.
                let mandatory = matches!(k, Kind::Qb | Kind::P);
                checks.push(self.scalar_constancy(mandatory)?);
            } else if selection.is_explicit() {
                return Err(Error::Usage(
                    "check `scalar-constancy` applies to V-static and critical point \
                     instances only"
                        .to_string(),
                ));
            }
        }
        if selection.wants("degeneracy") {
            let mandatory = !matches!(k, Kind::Warped);
            checks.extend(self.degeneracy_check(mandatory));
        }
        if selection.wants("codazzi") {
            let choice = if eq.is_soliton() {
                Some(CodazziChoice::SolitonT)
            } else if eq.unified_constants().is_some() {
                Some(CodazziChoice::VStaticD)
            } else {
                None
            };
            match choice {
                Some(choice) => {
                    let mandatory = !matches!(k, Kind::Warped) || eq.is_soliton();
                    let (res, samples) = self.codazzi_residual(&choice, mandatory)?;
                    checks.push(res);
                    codazzi_eigenvalues = samples;
                }
                None if selection.is_explicit() => {
                    return Err(Error::Usage(
                        "no Codazzi candidate tensor for a generic equation".to_string(),
                    ));
                }
                None => {}
            }
        }
        if selection.wants("codazzi-coefficients") {
            match self.canonical_coefficients() {
                Ok(coeffs) => {
                    let mandatory = !matches!(k, Kind::Warped) || eq.is_soliton();
                    checks.push(self.codazzi_coefficients(coeffs, mandatory));
                }
                Err(e) => {
                    if selection.is_explicit() {
                        return Err(e);
                    }
                }
            }
        }
        if selection.wants("cotton") {
            checks.extend(self.cotton_norm());
        }
        if selection.wants("structural") {
            checks.extend(self.structural_checks());
        }
        if selection.wants("eigen-crosscheck") {
            checks.push(self.crosscheck_eigen()?);
        }

        let overall_pass = checks
            .iter()
            .filter(|c| c.mandatory)
            .all(|c| c.verdict == Verdict::Pass);
        let codazzi_mu2_spread = if codazzi_eigenvalues.is_empty() {
            None
        } else {
            let mu2: Vec<f64> = codazzi_eigenvalues.iter().map(|s| s.mu[1]).collect();
            let lo = mu2.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = mu2.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            Some(hi - lo)
        };
        Ok(VerificationReport {
            family: self.instance.family.cli_name().to_string(),
            equation: eq.name().to_string(),
            chart: self.instance.chart,
            guard_notes: self.instance.provenance.guard_notes.clone(),
            drift: self.instance.provenance.drift,
            grid_counts: self.grid.counts,
            checks,
            codazzi_eigenvalues,
            codazzi_mu2_spread,
            overall_pass,
        })
    }
}

/// Convenience wrapper: default 7×7×7 grid, all applicable checks.
pub fn verify_instance(instance: &MetricInstance) -> Result<VerificationReport> {
    let grid = SampleGrid::new(&instance.chart, [7, 7, 7])?;
    Suite::new(instance, grid)?.run(&CheckSelection::all())
}
