//! Numerical tensor calculus for three-dimensional diagonal metrics, with
//! constructors for families of metrics solving `∇df = ψ(f)·Rc + φ(f)·g`
//! (gradient Ricci solitons, V-static spaces, critical point metrics) and a
//! verification suite that evaluates the defining equations, Codazzi
//! structures, curvature identities and Ricci-eigenvalue degeneracy on
//! sampled chart grids.
//!
//! Layout:
//! - [`jet`]: order-3 truncated Taylor jets in three coordinates, the
//!   derivative engine for every scalar field.
//! - [`fd`]: central-difference oracle (tests / `oracle` command only).
//! - [`ode`]: fixed-step RK4 with dense output, derivative recursions and
//!   first-integral drift monitoring for the profile ODEs.
//! - [`tensor`]: Christoffel symbols, Riemann/Ricci/scalar curvature,
//!   covariant derivatives, Cotton tensor, Hessians and the generalized
//!   Ricci eigenproblem for diagonal 3-metrics.
//! - [`equation`]: the geometric-equation variants (ψ, φ).
//! - [`families`]: metric-family constructors and instance (de)serialization.
//! - [`verify`]: residual checks and reports.
//! - [`cli`]: the `construct` / `verify` / `sweep` / `oracle` commands.
//!
//! # Example
//!
//! Construct a critical point instance on the p-profile family and verify
//! it on a 7×7×7 grid:
//!
//! ```
//! use riccidegen::families::{build_p, PParams};
//! use riccidegen::verify::verify_instance;
//!
//! let instance = build_p(&PParams {
//!     beta: -1.0,
//!     gamma: 1.0,
//!     p0: 2.0,
//!     p0_sign: 1.0,
//!     c1_0: 1.0,
//!     c1_prime_0: 0.0,
//!     x1_interval: [0.0, 1.2],
//!     x3_interval: [0.0, 1.5],
//!     x2_interval: [-1.0, 1.0],
//! })?;
//! let report = verify_instance(&instance)?;
//! assert!(report.overall_pass);
//! # Ok::<(), riccidegen::Error>(())
//! ```

#![allow(clippy::needless_range_loop)]

pub mod cli;
pub mod equation;
pub mod error;
pub mod families;
pub mod fd;
pub mod jet;
pub mod ode;
pub mod tensor;
pub mod verify;

pub use error::{Error, Result};
pub use jet::{ChartBox, Jet3, ScalarField};
