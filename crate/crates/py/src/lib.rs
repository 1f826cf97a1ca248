//! Python bindings: construct metric-family instances, evaluate curvature
//! quantities pointwise, and run the verification suite from Python.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use riccidegen::equation::equation_spec_eval;
use riccidegen::families::{closed_form_reference, FamilySpec, MetricInstance};
use riccidegen::tensor::{self, generalized_eigen, EigenLabel};
use riccidegen::verify::{CheckSelection, SampleGrid, Suite, CHECK_NAMES};

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_family(family: &str, params_json: &str) -> PyResult<FamilySpec> {
    let fail = |e: serde_json::Error| err(format!("malformed parameter document: {e}"));
    match family {
        "soliton-cylinder" => Ok(FamilySpec::SolitonCylinder(
            serde_json::from_str(params_json).map_err(fail)?,
        )),
        "qb-vstatic" | "qb-cpm" => {
            let p: riccidegen::families::QbParams =
                serde_json::from_str(params_json).map_err(fail)?;
            if (family == "qb-vstatic") != p.kappa.is_some() {
                return Err(err(
                    "qb-vstatic requires `kappa`; qb-cpm must omit it".to_string()
                ));
            }
            Ok(FamilySpec::Qb(p))
        }
        "p-cpm" => Ok(FamilySpec::P(
            serde_json::from_str(params_json).map_err(fail)?,
        )),
        "warped" => Ok(FamilySpec::Warped(
            serde_json::from_str(params_json).map_err(fail)?,
        )),
        other => Err(err(format!(
            "unknown family `{other}`; valid: soliton-cylinder, qb-vstatic, qb-cpm, \
             p-cpm, warped"
        ))),
    }
}

/// A constructed metric instance: diagonal 3-metric, potential, and the
/// geometric equation it satisfies.
#[pyclass(name = "Instance")]
struct PyInstance {
    inner: MetricInstance,
}

#[pymethods]
impl PyInstance {
    /// Build an instance from a family name and a JSON parameter document.
    #[staticmethod]
    fn construct(family: &str, params_json: &str) -> PyResult<Self> {
        let spec = parse_family(family, params_json)?;
        Ok(PyInstance {
            inner: spec.build().map_err(err)?,
        })
    }

    /// Load an instance from its serialized JSON form.
    #[staticmethod]
    fn from_json(json: &str) -> PyResult<Self> {
        Ok(PyInstance {
            inner: MetricInstance::from_json(json).map_err(err)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }

    #[getter]
    fn family(&self) -> &'static str {
        self.inner.family.cli_name()
    }

    /// Chart box as (lo, hi) coordinate triples.
    #[getter]
    fn chart(&self) -> ([f64; 3], [f64; 3]) {
        (self.inner.chart.lo, self.inner.chart.hi)
    }

    /// Max first-integral drift recorded over the instance's ODE runs.
    #[getter]
    fn drift(&self) -> f64 {
        self.inner.provenance.drift
    }

    /// Same instance with the potential multiplied by `scale`.
    fn with_potential_scale(&self, scale: f64) -> PyResult<Self> {
        let json = self.inner.to_json().map_err(err)?;
        let rebuilt = MetricInstance::from_json(&json).map_err(err)?;
        Ok(PyInstance {
            inner: rebuilt.with_potential_scale(scale),
        })
    }

    fn potential_at(&self, point: [f64; 3]) -> PyResult<f64> {
        self.inner.potential().value(point).map_err(err)
    }

    fn metric_at(&self, point: [f64; 3]) -> PyResult<[f64; 3]> {
        let jets = self.inner.metric.jets(point).map_err(err)?;
        Ok([jets[0].value(), jets[1].value(), jets[2].value()])
    }

    fn scalar_curvature_at(&self, point: [f64; 3]) -> PyResult<f64> {
        Ok(tensor::curvature(&self.inner.metric, point)
            .map_err(err)?
            .scalar)
    }

    /// Ricci eigenvalues relative to g, simple eigenvalue first when a
    /// 2+1 split exists; the second element reports "split"/"isotropic".
    fn ricci_eigenvalues_at(&self, point: [f64; 3]) -> PyResult<([f64; 3], &'static str)> {
        let c = tensor::curvature(&self.inner.metric, point).map_err(err)?;
        let eig = generalized_eigen(&c.ricci, &c.metric_at_point).map_err(err)?;
        let label = match eig.label {
            EigenLabel::Split => "split",
            EigenLabel::Isotropic => "isotropic",
        };
        Ok((eig.values, label))
    }

    /// The family's closed-form eigenvalues (λ1, λ2) at a point, or None.
    fn closed_form_eigenvalues_at(&self, point: [f64; 3]) -> PyResult<Option<(f64, f64)>> {
        Ok(closed_form_reference(&self.inner, point)
            .map_err(err)?
            .map(|cf| (cf.lambda1, cf.lambda2)))
    }

    /// Pointwise g-norm of the master-equation residual ∇df − ψRc − φg.
    fn equation_residual_at(&self, point: [f64; 3]) -> PyResult<f64> {
        let jets = tensor::curvature_jets(&self.inner.metric, point).map_err(err)?;
        let f_jet = self.inner.potential().jet(point).map_err(err)?;
        let (psi, phi) = equation_spec_eval(&self.inner.equation, &f_jet);
        let hess = tensor::hessian_from_jets(&jets, &f_jet);
        let ricci = jets.ricci_values();
        let metric = jets.metric_values();
        let resid = tensor::Sym2::from_fn(|i, j| {
            hess.hessian.get(i, j) - psi.value() * ricci.get(i, j)
                - phi.value() * metric.get(i, j)
        });
        Ok(resid.g_norm(jets.ginv_values()))
    }

    /// Run the verification suite; returns the report as a JSON string.
    #[pyo3(signature = (grid = (7, 7, 7), checks = "all"))]
    fn verify(&self, grid: (usize, usize, usize), checks: &str) -> PyResult<String> {
        let selection = CheckSelection::parse(checks).map_err(err)?;
        let grid = SampleGrid::new(&self.inner.chart, [grid.0, grid.1, grid.2])
            .map_err(err)?;
        let suite = Suite::new(&self.inner, grid).map_err(err)?;
        let report = suite.run(&selection).map_err(err)?;
        report.to_json().map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Instance(family={:?}, chart={:?}..{:?}, drift={:.3e})",
            self.inner.family.cli_name(),
            self.inner.chart.lo,
            self.inner.chart.hi,
            self.inner.provenance.drift
        )
    }
}

/// Valid check-group names for `Instance.verify(checks=...)`.
#[pyfunction]
fn check_names() -> Vec<&'static str> {
    CHECK_NAMES.to_vec()
}

#[pymodule]
fn riccidegen_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyInstance>()?;
    m.add_function(wrap_pyfunction!(check_names, m)?)?;
    Ok(())
}
