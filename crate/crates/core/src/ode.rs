//! Fixed-step classical Runge–Kutta integration for the univariate profile
//! ODEs, with cubic-Hermite dense output, analytic derivative recursions
//! for the profile through order 4, and first-integral drift monitoring.
//!
//! Higher profile derivatives always come from the ODE's own recursion
//! evaluated on the interpolated state, never from differentiating the
//! interpolant, so the jets assembled downstream are exact functions of
//! the state.

use std::sync::Arc;

use crate::error::{Error, Result};

/// Value and derivatives through order 4 of one profile function.
pub type ProfileJet = [f64; 5];

/// Cap on steps per integration; intervals requiring more at the fixed
/// step are rejected instead of running unboundedly.
pub const MAX_STEPS: usize = 20_000_000;

type RhsFn = dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync;
type RecursionFn = dyn Fn(f64, &[f64]) -> Vec<ProfileJet> + Send + Sync;
type IntegralFn = dyn Fn(f64, &[f64]) -> f64 + Send + Sync;

/// A first-order ODE system in one independent variable, together with the
/// analytic derivative recursion of its designated profile components and
/// any first integrals to monitor.
pub struct OdeSystem1d {
    pub dim: usize,
    pub rhs: Box<RhsFn>,
    /// Derivatives of each named profile through order 4, as functions of
    /// (t, state). Order 0 must equal the corresponding state component
    /// and order 1 the matching rhs component.
    pub deriv_recursion: Box<RecursionFn>,
    pub profile_names: Vec<&'static str>,
    /// For each state component, the (profile, derivative-order) it equals;
    /// supplies exact second derivatives at grid nodes for dense output.
    pub state_profile_map: Vec<(usize, usize)>,
    pub first_integrals: Vec<Box<IntegralFn>>,
}

impl OdeSystem1d {
    fn rhs_vec(&self, t: f64, y: &[f64]) -> Vec<f64> {
        let mut dy = vec![0.0; self.dim];
        (self.rhs)(t, y, &mut dy);
        dy
    }
}

/// Result of a fixed-step integration: the grid of states, slopes for dense
/// output, recorded first-integral drift and a step-halving defect.
pub struct OdeSolution {
    system: Arc<OdeSystem1d>,
    /// Monotone grid times (t0 first; decreasing when t1 < t0).
    times: Vec<f64>,
    states: Vec<Vec<f64>>,
    /// rhs at each grid node.
    slopes: Vec<Vec<f64>>,
    /// Exact state second derivatives at each node, from the recursion.
    accels: Vec<Vec<f64>>,
    drift: f64,
    /// Max component difference at t1 between the run and a step/2 re-run.
    pub richardson_defect: f64,
    /// Set when the defect exceeds 16·h⁴·(1+|y(t1)|).
    pub accuracy_flagged: bool,
    step: f64,
}

/// Classical RK4 with fixed step from `t0` to `t1` (either direction).
///
/// A re-run at step/2 is compared at `t1`; if the difference exceeds
/// 16·step⁴·(1+|y(t1)|) the solution is flagged rather than rejected.
/// First-integral drift is recorded as the max deviation over grid nodes
/// from the value at `t0`.
pub fn integrate(
    system: Arc<OdeSystem1d>,
    y0: &[f64],
    t0: f64,
    t1: f64,
    step: f64,
) -> Result<OdeSolution> {
    assert!(step > 0.0, "step must be positive");
    assert!(t1 != t0, "empty integration interval");
    assert!(y0.len() == system.dim, "initial state dimension mismatch");
    if !y0.iter().all(|v| v.is_finite()) {
        return Err(Error::OdeNonFinite {
            t: t0,
            last_valid: t0,
        });
    }

    let (times, states, slopes) = run_rk4(&system, y0, t0, t1, step)?;

    // Exact second derivatives at nodes, for the quintic dense output.
    let accels: Vec<Vec<f64>> = times
        .iter()
        .zip(states.iter())
        .map(|(t, y)| {
            let jets = (system.deriv_recursion)(*t, y);
            system
                .state_profile_map
                .iter()
                .map(|&(profile, order)| jets[profile][order + 2])
                .collect()
        })
        .collect();

    // Step-halving agreement check at t1.
    let (_, states_half, _) = run_rk4(&system, y0, t0, t1, step / 2.0)?;
    let y_end = states.last().unwrap();
    let y_end_half = states_half.last().unwrap();
    let mut defect = 0.0f64;
    let mut norm = 0.0f64;
    for (a, b) in y_end.iter().zip(y_end_half.iter()) {
        defect = defect.max((a - b).abs());
        norm = norm.max(a.abs());
    }
    let flagged = defect > 16.0 * step.powi(4) * (1.0 + norm);

    // First-integral drift over grid nodes.
    let refs: Vec<f64> = system
        .first_integrals
        .iter()
        .map(|i| i(t0, y0))
        .collect();
    let mut drift = 0.0f64;
    for (t, y) in times.iter().zip(states.iter()) {
        for (integral, r) in system.first_integrals.iter().zip(refs.iter()) {
            drift = drift.max((integral(*t, y) - r).abs());
        }
    }

    Ok(OdeSolution {
        system,
        times,
        states,
        slopes,
        accels,
        drift,
        richardson_defect: defect,
        accuracy_flagged: flagged,
        step,
    })
}

#[allow(clippy::type_complexity)]
fn run_rk4(
    system: &OdeSystem1d,
    y0: &[f64],
    t0: f64,
    t1: f64,
    step: f64,
) -> Result<(Vec<f64>, Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let span = t1 - t0;
    let n_steps = (span.abs() / step).ceil() as usize;
    let n_steps = n_steps.max(1);
    if n_steps > MAX_STEPS {
        return Err(Error::InvalidParams(format!(
            "interval of length {} requires {n_steps} steps at step {step};              the limit is {MAX_STEPS}",
            span.abs()
        )));
    }
    let h = span / n_steps as f64;

    let mut times = Vec::with_capacity(n_steps + 1);
    let mut states = Vec::with_capacity(n_steps + 1);
    let mut slopes = Vec::with_capacity(n_steps + 1);

    let mut t = t0;
    let mut y = y0.to_vec();
    times.push(t);
    slopes.push(system.rhs_vec(t, &y));
    states.push(y.clone());

    let dim = system.dim;
    for i in 0..n_steps {
        let k1 = slopes.last().unwrap().clone();
        let mut ytmp = vec![0.0; dim];

        for d in 0..dim {
            ytmp[d] = y[d] + 0.5 * h * k1[d];
        }
        let k2 = system.rhs_vec(t + 0.5 * h, &ytmp);
        for d in 0..dim {
            ytmp[d] = y[d] + 0.5 * h * k2[d];
        }
        let k3 = system.rhs_vec(t + 0.5 * h, &ytmp);
        for d in 0..dim {
            ytmp[d] = y[d] + h * k3[d];
        }
        let k4 = system.rhs_vec(t + h, &ytmp);

        for d in 0..dim {
            y[d] += h / 6.0 * (k1[d] + 2.0 * k2[d] + 2.0 * k3[d] + k4[d]);
        }
        t = t0 + (i + 1) as f64 * h;
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::OdeNonFinite {
                t,
                last_valid: t - h,
            });
        }
        times.push(t);
        slopes.push(system.rhs_vec(t, &y));
        states.push(y.clone());
    }
    Ok((times, states, slopes))
}

impl OdeSolution {
    pub fn t0(&self) -> f64 {
        self.times[0]
    }

    pub fn t1(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn system(&self) -> &OdeSystem1d {
        &self.system
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }

    /// Recorded max first-integral deviation over grid nodes.
    pub fn drift(&self) -> f64 {
        self.drift
    }

    pub fn interval(&self) -> (f64, f64) {
        let a = self.times[0];
        let b = *self.times.last().unwrap();
        if a <= b {
            (a, b)
        } else {
            (b, a)
        }
    }

    fn locate(&self, t: f64) -> Result<usize> {
        let (lo, hi) = self.interval();
        let eps = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
        if t < lo - eps || t > hi + eps {
            return Err(Error::OdeOutsideInterval { t, lo, hi });
        }
        // Uniform grid lookup; clamp handles the endpoint.
        let h = self.times[1] - self.times[0];
        let idx = ((t - self.times[0]) / h).floor() as isize;
        Ok(idx.clamp(0, self.times.len() as isize - 2) as usize)
    }

    /// Dense-output state at `t` by two-point quintic Hermite
    /// interpolation (values, slopes and the recursion's exact second
    /// derivatives at the nodes), so the interpolant is C² across nodes
    /// and its second derivative carries only O(step⁴) error. At grid
    /// nodes this reproduces the stored state exactly.
    pub fn state_at(&self, t: f64) -> Result<Vec<f64>> {
        let i = self.locate(t)?;
        if t == self.times[i] {
            return Ok(self.states[i].clone());
        }
        if t == self.times[i + 1] {
            return Ok(self.states[i + 1].clone());
        }
        let h = self.times[i + 1] - self.times[i];
        let s = (t - self.times[i]) / h;
        let (y0, y1) = (&self.states[i], &self.states[i + 1]);
        let (m0, m1) = (&self.slopes[i], &self.slopes[i + 1]);
        let (a0, a1) = (&self.accels[i], &self.accels[i + 1]);
        let s2 = s * s;
        let s3 = s2 * s;
        let s4 = s3 * s;
        let s5 = s4 * s;
        let h0 = 1.0 - 10.0 * s3 + 15.0 * s4 - 6.0 * s5;
        let h1 = s - 6.0 * s3 + 8.0 * s4 - 3.0 * s5;
        let h2 = 0.5 * (s2 - 3.0 * s3 + 3.0 * s4 - s5);
        let h3 = 10.0 * s3 - 15.0 * s4 + 6.0 * s5;
        let h4 = -4.0 * s3 + 7.0 * s4 - 3.0 * s5;
        let h5 = 0.5 * (s3 - 2.0 * s4 + s5);
        Ok((0..self.system.dim)
            .map(|d| {
                h0 * y0[d]
                    + h * h1 * m0[d]
                    + h * h * h2 * a0[d]
                    + h3 * y1[d]
                    + h * h4 * m1[d]
                    + h * h * h5 * a1[d]
            })
            .collect())
    }

    /// Profile value and first three derivatives at `t`: orders 0–1
    /// reproduce the dense-output state and rhs, orders 2–3 are evaluated
    /// from the derivative recursion on the interpolated state.
    pub fn eval_with_derivatives(&self, t: f64, profile: usize) -> Result<[f64; 4]> {
        let j = self.profile_jet(t, profile)?;
        Ok([j[0], j[1], j[2], j[3]])
    }

    /// Full order-4 profile jet at `t` (drives the metric jets downstream).
    pub fn profile_jet(&self, t: f64, profile: usize) -> Result<ProfileJet> {
        let y = self.state_at(t)?;
        let jets = (self.system.deriv_recursion)(t, &y);
        Ok(jets[profile])
    }
}

/// A guard constraint: `eval` must stay ≥ `margin` along the run.
pub struct GuardConstraint {
    pub name: String,
    pub eval: Box<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    pub margin: f64,
}

impl GuardConstraint {
    pub fn new<F>(name: &str, margin: f64, eval: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        GuardConstraint {
            name: name.to_string(),
            eval: Box::new(eval),
            margin,
        }
    }
}

/// Outcome of [`domain_guard`]: the surviving sub-interval containing t0
/// and, when truncated, the violated constraint's name.
#[derive(Clone, Debug)]
pub struct GuardedInterval {
    pub lo: f64,
    pub hi: f64,
    pub truncated_by: Option<String>,
}

/// Largest sub-interval of the solution containing t0 on which every
/// constraint stays at or above its margin. Endpoints are refined by
/// bisection on the dense output to 1e-10.
pub fn domain_guard(
    solution: &OdeSolution,
    constraints: &[GuardConstraint],
) -> Result<GuardedInterval> {
    let t0 = solution.times[0];
    let y0 = &solution.states[0];
    for c in constraints {
        let v = (c.eval)(y0);
        if v < c.margin {
            return Err(Error::EmptyGuardInterval {
                name: c.name.clone(),
                value: v,
                margin: c.margin,
            });
        }
    }

    let ok_at = |t: f64| -> bool {
        let y = solution.state_at(t).expect("guard scan stays inside run");
        constraints.iter().all(|c| (c.eval)(&y) >= c.margin)
    };
    let violated_name = |t: f64| -> Option<String> {
        let y = solution.state_at(t).ok()?;
        constraints
            .iter()
            .find(|c| (c.eval)(&y) < c.margin)
            .map(|c| c.name.clone())
    };

    // Scan grid nodes outward from t0 (the grid runs from t0 to t1 in one
    // direction only), then bisect inside the first violating interval.
    let mut end = *solution.times.last().unwrap();
    let mut truncated_by = None;
    for w in 1..solution.times.len() {
        let t = solution.times[w];
        if !ok_at(t) {
            let mut good = solution.times[w - 1];
            let mut bad = t;
            while (bad - good).abs() > 1e-10 {
                let mid = 0.5 * (good + bad);
                if ok_at(mid) {
                    good = mid;
                } else {
                    bad = mid;
                }
            }
            truncated_by = violated_name(bad);
            end = good;
            break;
        }
    }

    let (lo, hi) = if end >= t0 { (t0, end) } else { (end, t0) };
    Ok(GuardedInterval {
        lo,
        hi,
        truncated_by,
    })
}
