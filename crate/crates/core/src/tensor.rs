//! Levi-Civita connection and curvature of a diagonal 3-metric at a point,
//! computed entirely in jet arithmetic: Christoffel symbols, the Riemann,
//! Ricci and scalar curvature, ∇Ric, the Cotton tensor, Hessians of scalar
//! fields, and the Ricci eigenproblem relative to the metric.
//!
//! Curvature sign convention: `R_{ijkl} = ⟨∇_i∇_j ∂_k − ∇_j∇_i ∂_k, ∂_l⟩`
//! with `Ric_{jk} = Σ_i g^{ii} R_{ijki}`, normalized so the unit round
//! 3-sphere has `Ric = 2g`, `R = 6`.

use crate::error::{Error, Result};
use crate::jet::{ChartBox, Jet3, ScalarField};

/// Symmetric 2-tensor at a point, six stored components.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Sym2 {
    /// Order: (1,1), (1,2), (1,3), (2,2), (2,3), (3,3).
    c: [f64; 6],
}

const SYM2_SLOT: [[usize; 3]; 3] = [[0, 1, 2], [1, 3, 4], [2, 4, 5]];

impl Sym2 {
    pub fn from_fn(mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut c = [0.0; 6];
        for i in 0..3 {
            for j in i..3 {
                c[SYM2_SLOT[i][j]] = f(i, j);
            }
        }
        Sym2 { c }
    }

    pub fn diagonal(d: [f64; 3]) -> Self {
        let mut s = Sym2::default();
        s.set(0, 0, d[0]);
        s.set(1, 1, d[1]);
        s.set(2, 2, d[2]);
        s
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.c[SYM2_SLOT[i][j]]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.c[SYM2_SLOT[i][j]] = v;
    }

    pub fn components(&self) -> [f64; 6] {
        self.c
    }

    pub fn matrix(&self) -> [[f64; 3]; 3] {
        let mut m = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = self.get(i, j);
            }
        }
        m
    }

    pub fn add(&self, rhs: &Sym2) -> Sym2 {
        let mut out = *self;
        for k in 0..6 {
            out.c[k] += rhs.c[k];
        }
        out
    }

    pub fn sub(&self, rhs: &Sym2) -> Sym2 {
        let mut out = *self;
        for k in 0..6 {
            out.c[k] -= rhs.c[k];
        }
        out
    }

    pub fn scale(&self, s: f64) -> Sym2 {
        let mut out = *self;
        for k in 0..6 {
            out.c[k] *= s;
        }
        out
    }

    /// Coordinate-invariant norm `√(g^{ia} g^{jb} T_{ij} T_{ab})` for a
    /// diagonal inverse metric.
    pub fn g_norm(&self, ginv_diag: [f64; 3]) -> f64 {
        let mut s = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let t = self.get(i, j);
                s += ginv_diag[i] * ginv_diag[j] * t * t;
            }
        }
        s.sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.c.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Rank-3 coordinate tensor `T[i][j][k]`.
pub type Rank3 = [[[f64; 3]; 3]; 3];

/// g-norm of a rank-3 tensor for a diagonal inverse metric.
pub fn rank3_g_norm(t: &Rank3, ginv_diag: [f64; 3]) -> f64 {
    let mut s = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                s += ginv_diag[i] * ginv_diag[j] * ginv_diag[k] * t[i][j][k] * t[i][j][k];
            }
        }
    }
    s.sqrt()
}

pub fn rank3_max_abs(t: &Rank3) -> f64 {
    let mut m = 0.0f64;
    for p in t.iter().flatten().flatten() {
        m = m.max(p.abs());
    }
    m
}

/// Diagonal 3-metric: three positive component fields on a shared chart.
#[derive(Clone, Debug)]
pub struct MetricField {
    pub components: [ScalarField; 3],
    pub domain: ChartBox,
}

impl MetricField {
    pub fn new(components: [ScalarField; 3], domain: ChartBox) -> Self {
        MetricField { components, domain }
    }

    /// Jets of the three diagonal components, with positivity enforced.
    pub fn jets(&self, p: [f64; 3]) -> Result<[Jet3; 3]> {
        let mut out = [Jet3::constant(p, 0.0); 3];
        for (a, field) in self.components.iter().enumerate() {
            let jet = field.jet(p)?;
            if jet.value() <= 0.0 {
                return Err(Error::DegenerateMetric {
                    component: a,
                    value: jet.value(),
                    point: p,
                });
            }
            out[a] = jet;
        }
        Ok(out)
    }
}

/// Everything the curvature pipeline computes at one point, kept in jet
/// form so callers can extract first derivatives of curvature quantities.
///
/// Valid jet degrees: metric 3, Christoffel 2, Riemann/Ricci/scalar 1.
pub struct CurvatureJets {
    pub point: [f64; 3],
    pub g: [Jet3; 3],
    pub ginv: [Jet3; 3],
    /// `gamma[k][i][j] = Γ^k_{ij}` (symmetric in i, j).
    pub gamma: [[[Jet3; 3]; 3]; 3],
    /// Lowered Riemann components `R_{ijkl}` for the pairs
    /// (i,j) ∈ {(0,1), (0,2), (1,2)}: `riemann_low[pair][k][l]`.
    pub riemann_low: [[[Jet3; 3]; 3]; 3],
    pub ricci: [[Jet3; 3]; 3],
    pub scalar: Jet3,
}

const PAIRS: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];

impl CurvatureJets {
    /// Lowered Riemann value `R_{ijkl}` with the antisymmetries applied.
    pub fn riemann_value(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        let (pair, sign) = match (i, j) {
            (0, 1) => (0, 1.0),
            (1, 0) => (0, -1.0),
            (0, 2) => (1, 1.0),
            (2, 0) => (1, -1.0),
            (1, 2) => (2, 1.0),
            (2, 1) => (2, -1.0),
            _ => unreachable!(),
        };
        sign * self.riemann_low[pair][k][l].value()
    }

    pub fn ricci_values(&self) -> Sym2 {
        Sym2::from_fn(|i, j| self.ricci[i][j].value())
    }

    pub fn metric_values(&self) -> Sym2 {
        Sym2::diagonal([self.g[0].value(), self.g[1].value(), self.g[2].value()])
    }

    pub fn ginv_values(&self) -> [f64; 3] {
        [
            self.ginv[0].value(),
            self.ginv[1].value(),
            self.ginv[2].value(),
        ]
    }

    pub fn gamma_values(&self) -> [[[f64; 3]; 3]; 3] {
        let mut out = [[[0.0; 3]; 3]; 3];
        for k in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    out[k][i][j] = self.gamma[k][i][j].value();
                }
            }
        }
        out
    }

    /// `∇_i T_{jk}` values for a symmetric 2-tensor given as jets.
    pub fn covariant_derivative_sym2(&self, t: &[[Jet3; 3]; 3]) -> Rank3 {
        let gam = self.gamma_values();
        let mut out = [[[0.0; 3]; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    let mut v = t[j][k].d1(i);
                    for l in 0..3 {
                        v -= gam[l][i][j] * t[l][k].value();
                        v -= gam[l][i][k] * t[j][l].value();
                    }
                    out[i][j][k] = v;
                }
            }
        }
        out
    }

    /// `∇_i Ric_{jk}` values.
    pub fn nabla_ricci(&self) -> Rank3 {
        self.covariant_derivative_sym2(&self.ricci)
    }

    /// Cotton tensor values `C_{ijk} = ∇_i P_{jk} − ∇_j P_{ik}` with
    /// Schouten `P = Ric − (R/4)g` (three dimensions).
    pub fn cotton(&self) -> Rank3 {
        let mut p = self.ricci;
        for (i, row) in p.iter_mut().enumerate() {
            for (j, entry) in row.iter_mut().enumerate() {
                if i == j {
                    *entry = entry.sub(&self.scalar.mul(&self.g[i]).scale(0.25));
                }
            }
        }
        let grad_p = self.covariant_derivative_sym2(&p);
        let mut out = [[[0.0; 3]; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    out[i][j][k] = grad_p[i][j][k] - grad_p[j][i][k];
                }
            }
        }
        out
    }
}

/// Assemble Christoffel and curvature jets at `point`.
pub fn curvature_jets(metric: &MetricField, point: [f64; 3]) -> Result<CurvatureJets> {
    let g = metric.jets(point)?;
    let mut ginv = [Jet3::constant(point, 0.0); 3];
    for a in 0..3 {
        ginv[a] = g[a].recip()?;
    }

    // ∂_k g_{aa} as jets (valid through degree 2).
    let mut dg = [[Jet3::constant(point, 0.0); 3]; 3];
    for a in 0..3 {
        for k in 0..3 {
            dg[a][k] = g[a].derivative(k);
        }
    }

    // Γ^k_{ij} for the diagonal metric.
    let zero = Jet3::constant(point, 0.0);
    let mut gamma = [[[zero; 3]; 3]; 3];
    for k in 0..3 {
        for i in 0..3 {
            for j in 0..3 {
                gamma[k][i][j] = if i == k {
                    ginv[k].mul(&dg[k][j]).scale(0.5)
                } else if j == k {
                    ginv[k].mul(&dg[k][i]).scale(0.5)
                } else if i == j {
                    ginv[k].mul(&dg[i][k]).scale(-0.5)
                } else {
                    zero
                };
            }
        }
    }

    // R^l_{k ij} = ∂_i Γ^l_{jk} − ∂_j Γ^l_{ik} + Γ^l_{im}Γ^m_{jk} − Γ^l_{jm}Γ^m_{ik},
    // lowered with the diagonal metric: R_{ijkl} = g_{ll} R^l_{k ij}.
    let mut riemann_low = [[[zero; 3]; 3]; 3];
    for (pair, &(i, j)) in PAIRS.iter().enumerate() {
        for k in 0..3 {
            for l in 0..3 {
                let mut up = gamma[l][j][k]
                    .derivative(i)
                    .sub(&gamma[l][i][k].derivative(j));
                for m in 0..3 {
                    up = up
                        .add(&gamma[l][i][m].mul(&gamma[m][j][k]))
                        .sub(&gamma[l][j][m].mul(&gamma[m][i][k]));
                }
                riemann_low[pair][k][l] = g[l].mul(&up);
            }
        }
    }

    // Ric_{jk} = Σ_i g^{ii} R_{ijki}.
    let riemann_value_jet = |i: usize, j: usize, k: usize, l: usize| -> Jet3 {
        if i == j {
            return zero;
        }
        match (i, j) {
            (0, 1) => riemann_low[0][k][l],
            (1, 0) => riemann_low[0][k][l].neg(),
            (0, 2) => riemann_low[1][k][l],
            (2, 0) => riemann_low[1][k][l].neg(),
            (1, 2) => riemann_low[2][k][l],
            (2, 1) => riemann_low[2][k][l].neg(),
            _ => unreachable!(),
        }
    };
    let mut ricci = [[zero; 3]; 3];
    for j in 0..3 {
        for k in j..3 {
            let mut r = zero;
            for i in 0..3 {
                if i == j {
                    continue;
                }
                r = r.add(&ginv[i].mul(&riemann_value_jet(i, j, k, i)));
            }
            ricci[j][k] = r;
            ricci[k][j] = r;
        }
    }

    let mut scalar = zero;
    for j in 0..3 {
        scalar = scalar.add(&ginv[j].mul(&ricci[j][j]));
    }

    Ok(CurvatureJets {
        point,
        g,
        ginv,
        gamma,
        riemann_low,
        ricci,
        scalar,
    })
}

/// Christoffel symbol values `Γ^k_{ij}` at a point.
pub fn christoffel(metric: &MetricField, point: [f64; 3]) -> Result<[[[f64; 3]; 3]; 3]> {
    Ok(curvature_jets(metric, point)?.gamma_values())
}

/// The six independent lowered Riemann components.
#[derive(Clone, Copy, Debug, Default)]
pub struct RiemannComponents {
    pub r1212: f64,
    pub r1213: f64,
    pub r1223: f64,
    pub r1313: f64,
    pub r1323: f64,
    pub r2323: f64,
}

/// All curvature objects of the metric at one point.
#[derive(Clone, Copy, Debug)]
pub struct CurvaturePoint {
    pub point: [f64; 3],
    pub christoffel: [[[f64; 3]; 3]; 3],
    pub riemann: RiemannComponents,
    pub ricci: Sym2,
    pub scalar: f64,
    pub nabla_ricci: Rank3,
    pub metric_at_point: Sym2,
}

/// Full curvature evaluation at `point`.
pub fn curvature(metric: &MetricField, point: [f64; 3]) -> Result<CurvaturePoint> {
    let jets = curvature_jets(metric, point)?;
    Ok(CurvaturePoint {
        point,
        christoffel: jets.gamma_values(),
        riemann: RiemannComponents {
            r1212: jets.riemann_value(0, 1, 0, 1),
            r1213: jets.riemann_value(0, 1, 0, 2),
            r1223: jets.riemann_value(0, 1, 1, 2),
            r1313: jets.riemann_value(0, 2, 0, 2),
            r1323: jets.riemann_value(0, 2, 1, 2),
            r2323: jets.riemann_value(1, 2, 1, 2),
        },
        ricci: jets.ricci_values(),
        scalar: jets.scalar.value(),
        nabla_ricci: jets.nabla_ricci(),
        metric_at_point: jets.metric_values(),
    })
}

/// Hessian, gradient and gradient-norm of a potential at a point.
#[derive(Clone, Copy, Debug)]
pub struct HessianGradient {
    /// `∇df(∂_i, ∂_j) = ∂_i∂_j f − Γ^k_{ij} ∂_k f`.
    pub hessian: Sym2,
    /// `|∇f|²_g = g^{ii} (∂_i f)²`.
    pub grad_norm_sq: f64,
    /// Contravariant gradient components `g^{ii} ∂_i f`.
    pub grad_up: [f64; 3],
    /// Coordinate partials `∂_i f`.
    pub partials: [f64; 3],
}

pub fn hessian_and_gradient(
    metric: &MetricField,
    f: &ScalarField,
    point: [f64; 3],
) -> Result<HessianGradient> {
    let jets = curvature_jets(metric, point)?;
    let fj = f.jet(point)?;
    Ok(hessian_from_jets(&jets, &fj))
}

/// Same as [`hessian_and_gradient`] with the curvature jets already at hand.
pub fn hessian_from_jets(jets: &CurvatureJets, f_jet: &Jet3) -> HessianGradient {
    let gam = jets.gamma_values();
    let ginv = jets.ginv_values();
    let partials = f_jet.gradient();
    let hessian = Sym2::from_fn(|i, j| {
        let mut v = f_jet.d2(i, j);
        for k in 0..3 {
            v -= gam[k][i][j] * partials[k];
        }
        v
    });
    let mut grad_norm_sq = 0.0;
    let mut grad_up = [0.0; 3];
    for i in 0..3 {
        grad_up[i] = ginv[i] * partials[i];
        grad_norm_sq += ginv[i] * partials[i] * partials[i];
    }
    HessianGradient {
        hessian,
        grad_norm_sq,
        grad_up,
        partials,
    }
}

/// Covariant derivative `∇_i T_{jk}` of a symmetric 2-tensor field with jet
/// support at `point`.
pub fn covariant_derivative_sym2<F>(
    metric: &MetricField,
    tensor_jets: F,
    point: [f64; 3],
) -> Result<Rank3>
where
    F: Fn([f64; 3]) -> Result<[[Jet3; 3]; 3]>,
{
    let jets = curvature_jets(metric, point)?;
    let t = tensor_jets(point)?;
    Ok(jets.covariant_derivative_sym2(&t))
}

/// Cotton tensor values at `point`.
pub fn cotton(metric: &MetricField, point: [f64; 3]) -> Result<Rank3> {
    Ok(curvature_jets(metric, point)?.cotton())
}

/// Eigenvalue-degeneracy label for the Ricci spectrum.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EigenLabel {
    /// A 2+1 split: `values[0]` is the simple eigenvalue (largest gap).
    Split,
    /// All pairwise gaps below 1e-4; no honest 2+1 split exists.
    Isotropic,
}

/// Solution of `Ric·v = λ·g·v` at a point.
#[derive(Clone, Copy, Debug)]
pub struct GeneralizedEigen {
    /// `values[0]` is the simple eigenvalue λ1 when a split exists;
    /// `values[1], values[2]` are the (near-)degenerate pair.
    pub values: [f64; 3],
    /// g-orthonormal eigenvectors, one row per eigenvalue.
    pub vectors: [[f64; 3]; 3],
    pub label: EigenLabel,
}

/// Gap threshold below which the spectrum is reported isotropic.
pub const ISOTROPY_GAP: f64 = 1e-4;

/// Solve the generalized symmetric eigenproblem by congruence with the
/// Cholesky factor of `g`, a closed-form symmetric 3×3 eigensolver and one
/// Newton polish per eigenvalue.
pub fn generalized_eigen(ricci: &Sym2, metric: &Sym2) -> Result<GeneralizedEigen> {
    let l = cholesky3(&metric.matrix()).ok_or(Error::DegenerateMetric {
        component: 0,
        value: metric.get(0, 0),
        point: [f64::NAN; 3],
    })?;

    // B = L⁻¹ · Ric · L⁻ᵀ (symmetric congruence).
    let a = ricci.matrix();
    // First X = L⁻¹ A (forward substitution per column), then B = X L⁻ᵀ,
    // i.e. each row of B solves Lᵀ-systems; done as L(Bᵀ row) = X row.
    let mut x = [[0.0; 3]; 3];
    for col in 0..3 {
        let rhs = [a[0][col], a[1][col], a[2][col]];
        let sol = forward_sub(&l, rhs);
        for row in 0..3 {
            x[row][col] = sol[row];
        }
    }
    let mut b = [[0.0; 3]; 3];
    for row in 0..3 {
        let rhs = [x[row][0], x[row][1], x[row][2]];
        let sol = forward_sub(&l, rhs);
        b[row] = sol;
    }
    // Symmetrize against roundoff.
    for i in 0..3 {
        for j in (i + 1)..3 {
            let m = 0.5 * (b[i][j] + b[j][i]);
            b[i][j] = m;
            b[j][i] = m;
        }
    }

    let (vals, vecs) = sym_eigen3(&b);

    // Map eigenvectors back: v = L⁻ᵀ u; unit u gives vᵀ g v = 1.
    let mut gvecs = [[0.0; 3]; 3];
    for (r, u) in vecs.iter().enumerate() {
        gvecs[r] = backward_sub_t(&l, *u);
    }

    // Label: the simple eigenvalue is the one across the largest gap.
    let d01 = vals[1] - vals[0];
    let d12 = vals[2] - vals[1];
    let (order, label) = if d01.max(d12) < ISOTROPY_GAP {
        ([0, 1, 2], EigenLabel::Isotropic)
    } else if d01 >= d12 {
        ([0, 1, 2], EigenLabel::Split)
    } else {
        ([2, 0, 1], EigenLabel::Split)
    };
    Ok(GeneralizedEigen {
        values: [vals[order[0]], vals[order[1]], vals[order[2]]],
        vectors: [gvecs[order[0]], gvecs[order[1]], gvecs[order[2]]],
        label,
    })
}

fn cholesky3(m: &[[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let mut l = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..=i {
            let mut s = m[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                l[i][j] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Some(l)
}

fn forward_sub(l: &[[f64; 3]; 3], b: [f64; 3]) -> [f64; 3] {
    let y0 = b[0] / l[0][0];
    let y1 = (b[1] - l[1][0] * y0) / l[1][1];
    let y2 = (b[2] - l[2][0] * y0 - l[2][1] * y1) / l[2][2];
    [y0, y1, y2]
}

/// Solve Lᵀ x = b.
fn backward_sub_t(l: &[[f64; 3]; 3], b: [f64; 3]) -> [f64; 3] {
    let x2 = b[2] / l[2][2];
    let x1 = (b[1] - l[2][1] * x2) / l[1][1];
    let x0 = (b[0] - l[1][0] * x1 - l[2][0] * x2) / l[0][0];
    [x0, x1, x2]
}

/// Eigenvalues (ascending) and orthonormal eigenvectors of a symmetric 3×3
/// matrix: trigonometric closed form, one Newton polish step each, vectors
/// by cross products with a rotation fallback for degenerate pairs.
fn sym_eigen3(m: &[[f64; 3]; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
    let p1 = m[0][1] * m[0][1] + m[0][2] * m[0][2] + m[1][2] * m[1][2];
    let scale = m
        .iter()
        .flatten()
        .fold(0.0f64, |a, v| a.max(v.abs()))
        .max(1e-300);

    let mut vals;
    if p1 <= 1e-30 * scale * scale {
        vals = [m[0][0], m[1][1], m[2][2]];
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    } else {
        let q = (m[0][0] + m[1][1] + m[2][2]) / 3.0;
        let p2 = (m[0][0] - q).powi(2) + (m[1][1] - q).powi(2) + (m[2][2] - q).powi(2) + 2.0 * p1;
        let p = (p2 / 6.0).sqrt();
        let mut bm = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                bm[i][j] = (m[i][j] - if i == j { q } else { 0.0 }) / p;
            }
        }
        let r = (det3(&bm) / 2.0).clamp(-1.0, 1.0);
        let phi = r.acos() / 3.0;
        let e_hi = q + 2.0 * p * phi.cos();
        let e_lo = q + 2.0 * p * (phi + 2.0 * std::f64::consts::FRAC_PI_3).cos();
        let e_mid = 3.0 * q - e_hi - e_lo;
        vals = [e_lo, e_mid, e_hi];
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for v in vals.iter_mut() {
            *v = newton_polish(m, *v);
        }
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    }

    // Vectors. Identify the most isolated eigenvalue, get its vector by
    // cross products, then diagonalize the complementary 2×2 block.
    let d01 = vals[1] - vals[0];
    let d12 = vals[2] - vals[1];
    let tiny = 1e-12 * (1.0 + scale);
    if d01.max(d12) < tiny {
        // Numerically isotropic: any orthonormal basis works.
        return (vals, [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
    }
    let isolated = if d01 >= d12 { 0 } else { 2 };
    let v_iso = null_vector(m, vals[isolated]);
    let (u, w) = complement_basis(v_iso);
    // Restrict m to span{u, w} and rotate to diagonalize.
    let mu = mat_vec(m, u);
    let mw = mat_vec(m, w);
    let a = dot(u, mu);
    let bq = dot(u, mw);
    let c = dot(w, mw);
    let theta = 0.5 * (2.0 * bq).atan2(a - c);
    let (s, co) = theta.sin_cos();
    let p1v = [
        co * u[0] + s * w[0],
        co * u[1] + s * w[1],
        co * u[2] + s * w[2],
    ];
    let p2v = [
        -s * u[0] + co * w[0],
        -s * u[1] + co * w[1],
        -s * u[2] + co * w[2],
    ];
    // Rayleigh quotients decide which rotated vector belongs to which of
    // the two remaining eigenvalues.
    let r1 = dot(p1v, mat_vec(m, p1v));
    let (lo, hi) = if isolated == 0 {
        (1usize, 2usize)
    } else {
        (0usize, 1usize)
    };
    let mut vecs = [[0.0; 3]; 3];
    vecs[isolated] = v_iso;
    if (r1 - vals[lo]).abs() <= (r1 - vals[hi]).abs() {
        vecs[lo] = p1v;
        vecs[hi] = p2v;
    } else {
        vecs[lo] = p2v;
        vecs[hi] = p1v;
    }
    (vals, vecs)
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn newton_polish(m: &[[f64; 3]; 3], lambda: f64) -> f64 {
    // χ(λ) = -λ³ + tr·λ² - m2·λ + det, χ' = -3λ² + 2tr·λ - m2.
    let tr = m[0][0] + m[1][1] + m[2][2];
    let m2 = m[0][0] * m[1][1] - m[0][1] * m[1][0] + m[0][0] * m[2][2] - m[0][2] * m[2][0]
        + m[1][1] * m[2][2]
        - m[1][2] * m[2][1];
    let det = det3(m);
    let chi = -lambda.powi(3) + tr * lambda * lambda - m2 * lambda + det;
    let dchi = -3.0 * lambda * lambda + 2.0 * tr * lambda - m2;
    if dchi.abs() > 1e-100 {
        let polished = lambda - chi / dchi;
        if polished.is_finite() {
            return polished;
        }
    }
    lambda
}

fn mat_vec(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = dot(v, v).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

/// Unit null vector of `m - λI` via the largest cross product of rows.
fn null_vector(m: &[[f64; 3]; 3], lambda: f64) -> [f64; 3] {
    let rows = [
        [m[0][0] - lambda, m[0][1], m[0][2]],
        [m[1][0], m[1][1] - lambda, m[1][2]],
        [m[2][0], m[2][1], m[2][2] - lambda],
    ];
    let candidates = [
        cross(rows[0], rows[1]),
        cross(rows[0], rows[2]),
        cross(rows[1], rows[2]),
    ];
    let mut best = candidates[0];
    let mut best_n = dot(best, best);
    for c in &candidates[1..] {
        let n = dot(*c, *c);
        if n > best_n {
            best = *c;
            best_n = n;
        }
    }
    if best_n.sqrt() < 1e-150 {
        // Rank deficiency beyond 2: fall back to the complement of the
        // largest row.
        let mut row = rows[0];
        for r in &rows[1..] {
            if dot(*r, *r) > dot(row, row) {
                row = *r;
            }
        }
        if dot(row, row) < 1e-300 {
            return [1.0, 0.0, 0.0];
        }
        return complement_basis(normalize(row)).0;
    }
    normalize(best)
}

/// Orthonormal basis of the plane orthogonal to unit vector `v`.
fn complement_basis(v: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    let axis = if v[0].abs() <= v[1].abs() && v[0].abs() <= v[2].abs() {
        [1.0, 0.0, 0.0]
    } else if v[1].abs() <= v[2].abs() {
        [0.0, 1.0, 0.0]
    } else {
        [0.0, 0.0, 1.0]
    };
    let u = normalize(cross(axis, v));
    (u, cross(v, u))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field(
        domain: ChartBox,
        f: impl Fn([f64; 3]) -> Result<Jet3> + Send + Sync + 'static,
    ) -> ScalarField {
        ScalarField::new(domain, f)
    }

    fn flat_metric() -> MetricField {
        let d = ChartBox::new([-2.0; 3], [2.0; 3]);
        MetricField::new(
            [
                ScalarField::constant(d, 1.0),
                ScalarField::constant(d, 1.0),
                ScalarField::constant(d, 1.0),
            ],
            d,
        )
    }

    /// Unit round S³ chart: g = dx₁² + sin²x₁ dx₂² + sin²x₁ sin²x₂ dx₃².
    fn sphere_metric() -> MetricField {
        let d = ChartBox::new([0.2; 3], [2.9, 2.9, 6.0]);
        MetricField::new(
            [
                ScalarField::constant(d, 1.0),
                field(d, |p| Ok(Jet3::coordinate(p, 0).sin().square())),
                field(d, |p| {
                    Ok(Jet3::coordinate(p, 0)
                        .sin()
                        .square()
                        .mul(&Jet3::coordinate(p, 1).sin().square()))
                }),
            ],
            d,
        )
    }

    /// Hyperbolic chart: g = dx₁² + e^{2x₁}(dx₂² + dx₃²).
    fn hyperbolic_metric() -> MetricField {
        let d = ChartBox::new([-1.0; 3], [1.0; 3]);
        let e2 = |p: [f64; 3]| Ok(Jet3::coordinate(p, 0).scale(2.0).exp());
        MetricField::new(
            [ScalarField::constant(d, 1.0), field(d, e2), field(d, e2)],
            d,
        )
    }

    /// A generic analytic diagonal metric depending on all coordinates.
    fn generic_metric() -> MetricField {
        let d = ChartBox::new([-0.8; 3], [0.8; 3]);
        MetricField::new(
            [
                field(d, |p| {
                    let x2 = Jet3::coordinate(p, 1);
                    let x3 = Jet3::coordinate(p, 2);
                    Ok(Jet3::constant(p, 1.0)
                        .add(&x2.square().scale(0.1))
                        .add(&x3.square().scale(0.2)))
                }),
                field(d, |p| {
                    let x1 = Jet3::coordinate(p, 0);
                    let x3 = Jet3::coordinate(p, 2);
                    Ok(x1
                        .scale(0.3)
                        .exp()
                        .mul(&x3.square().scale(0.1).add_scalar(1.0)))
                }),
                field(d, |p| {
                    let x1 = Jet3::coordinate(p, 0);
                    let x2 = Jet3::coordinate(p, 1);
                    Ok(Jet3::constant(p, 2.0)
                        .add(&x1.sin().scale(0.2))
                        .add(&x2.scale(0.1)))
                }),
            ],
            d,
        )
    }

    #[test]
    fn flat_chart_is_flat() {
        let m = flat_metric();
        let c = curvature(&m, [0.3, -0.4, 0.9]).unwrap();
        assert!(c.ricci.max_abs() <= 1e-12);
        assert!(c.scalar.abs() <= 1e-12);
        assert!(rank3_max_abs(&c.nabla_ricci) <= 1e-12);
        assert!(rank3_max_abs(&cotton(&m, [0.3, -0.4, 0.9]).unwrap()) <= 1e-12);
        for k in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    assert_eq!(c.christoffel[k][i][j], 0.0);
                }
            }
        }
    }

    #[test]
    fn surface_of_revolution_christoffels() {
        // g = dx₁² + x₁² dx₂² + dx₃² at x₁ = 2: Γ¹₂₂ = −2, Γ²₁₂ = 1/2.
        let d = ChartBox::new([0.5, -2.0, -2.0], [4.0, 2.0, 2.0]);
        let m = MetricField::new(
            [
                ScalarField::constant(d, 1.0),
                field(d, |p| Ok(Jet3::coordinate(p, 0).square())),
                ScalarField::constant(d, 1.0),
            ],
            d,
        );
        let gam = christoffel(&m, [2.0, 0.0, 0.0]).unwrap();
        assert!((gam[0][1][1] - (-2.0)).abs() < 1e-14);
        assert!((gam[1][0][1] - 0.5).abs() < 1e-14);
        assert!((gam[1][1][0] - 0.5).abs() < 1e-14);
        let mut others = 0.0f64;
        for k in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    let named = (k == 0 && i == 1 && j == 1)
                        || (k == 1 && ((i, j) == (0, 1) || (i, j) == (1, 0)));
                    if !named {
                        others = others.max(gam[k][i][j].abs());
                    }
                }
            }
        }
        assert!(others <= 1e-14);
    }

    #[test]
    fn hyperbolic_christoffels_and_curvature() {
        let m = hyperbolic_metric();
        let p = [0.35, 0.1, -0.2];
        let gam = christoffel(&m, p).unwrap();
        let e2 = (2.0 * p[0]).exp();
        assert!((gam[0][1][1] + e2).abs() < 1e-12);
        assert!((gam[1][0][1] - 1.0).abs() < 1e-13);
        assert!((gam[2][0][2] - 1.0).abs() < 1e-13);

        let c = curvature(&m, p).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = -2.0 * c.metric_at_point.get(i, j);
                assert!((c.ricci.get(i, j) - expect).abs() < 1e-9, "Ricci({i},{j})");
            }
        }
        assert!((c.scalar + 6.0).abs() < 1e-9);
    }

    #[test]
    fn unit_sphere_chart_anchor() {
        let m = sphere_metric();
        for p in [[1.1, 0.9, 1.0], [0.7, 1.9, 4.0], [2.0, 1.2, 2.5]] {
            let c = curvature(&m, p).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    let expect = 2.0 * c.metric_at_point.get(i, j);
                    assert!(
                        (c.ricci.get(i, j) - expect).abs() < 1e-9,
                        "Ricci({i},{j}) at {p:?}: {} vs {}",
                        c.ricci.get(i, j),
                        expect
                    );
                }
            }
            assert!((c.scalar - 6.0).abs() < 1e-9);
            assert!(rank3_max_abs(&c.nabla_ricci) <= 1e-9);
        }
    }

    #[test]
    fn sphere_is_conformally_flat() {
        let m = sphere_metric();
        let ct = cotton(&m, [1.1, 0.9, 1.0]).unwrap();
        assert!(rank3_max_abs(&ct) <= 1e-9);
    }

    #[test]
    fn riemann_symmetries_and_first_bianchi() {
        let m = generic_metric();
        let jets = curvature_jets(&m, [0.31, -0.42, 0.17]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    for l in 0..3 {
                        let r = jets.riemann_value(i, j, k, l);
                        assert!((r - jets.riemann_value(k, l, i, j)).abs() < 1e-12);
                        assert!((r + jets.riemann_value(i, j, l, k)).abs() < 1e-12);
                        let b = r
                            + jets.riemann_value(i, k, l, j)
                            + jets.riemann_value(i, l, j, k);
                        assert!(b.abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn ricci_trace_matches_scalar() {
        let m = generic_metric();
        let jets = curvature_jets(&m, [0.2, 0.3, -0.5]).unwrap();
        let ginv = jets.ginv_values();
        let ricci = jets.ricci_values();
        let trace: f64 = (0..3).map(|j| ginv[j] * ricci.get(j, j)).sum();
        let scalar = jets.scalar.value();
        assert!((trace - scalar).abs() <= 1e-12 * (1.0 + scalar.abs()));
    }

    #[test]
    fn contracted_second_bianchi() {
        let m = generic_metric();
        for p in [[0.1, 0.2, 0.3], [-0.4, 0.5, -0.1], [0.6, -0.6, 0.4]] {
            let jets = curvature_jets(&m, p).unwrap();
            let nr = jets.nabla_ricci();
            let ginv = jets.ginv_values();
            for i in 0..3 {
                let dr = jets.scalar.d1(i);
                let div: f64 = (0..3).map(|j| ginv[j] * nr[j][j][i]).sum();
                assert!(
                    (dr - 2.0 * div).abs() <= 1e-8,
                    "∇R = 2 divRic fails at {p:?}, axis {i}: {dr} vs {}",
                    2.0 * div
                );
            }
        }
    }

    #[test]
    fn metric_compatibility() {
        let m = sphere_metric();
        let m2 = m.clone();
        let nabla_g = covariant_derivative_sym2(
            &m,
            move |p| {
                let jets = curvature_jets(&m2, p)?;
                let zero = Jet3::constant(p, 0.0);
                let mut t = [[zero; 3]; 3];
                for i in 0..3 {
                    t[i][i] = jets.g[i];
                }
                Ok(t)
            },
            [1.3, 0.8, 2.0],
        )
        .unwrap();
        assert!(rank3_max_abs(&nabla_g) <= 1e-11);
    }

    #[test]
    fn nabla_ricci_is_symmetric_in_last_indices() {
        let m = generic_metric();
        let c = curvature(&m, [0.25, -0.15, 0.45]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    assert!((c.nabla_ricci[i][j][k] - c.nabla_ricci[i][k][j]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn coordinate_rescaling_covariance() {
        // Pull back the generic metric by x₁ → 2x₁.
        let m = generic_metric();
        let d = ChartBox::new([-0.4, -0.8, -0.8], [0.4, 0.8, 0.8]);
        let phi = |p: [f64; 3]| [2.0 * p[0], p[1], p[2]];
        let pull = |orig: ScalarField, factor: f64| {
            ScalarField::new(d, move |p| {
                let q = phi(p);
                let j = orig.jet(q)?;
                // Jet of F(2x₁, x₂, x₃) around p from the jet of F around
                // φ(p): the x₁-degree-a coefficient scales by 2^a.
                let mut coeffs = [0.0; crate::jet::JET_LEN];
                for (slot, mono) in crate::jet::MONOMIALS.iter().enumerate() {
                    coeffs[slot] = j.coeffs()[slot] * 2.0f64.powi(mono[0] as i32) * factor;
                }
                Ok(Jet3::from_coeffs(p, coeffs))
            })
        };
        // g̃₁₁ = 4·g₁₁∘φ (dx₁ picks up the factor 2), other components
        // pull back unchanged.
        let pulled = MetricField::new(
            [
                pull(m.components[0].clone(), 4.0),
                pull(m.components[1].clone(), 1.0),
                pull(m.components[2].clone(), 1.0),
            ],
            d,
        );
        let p = [0.15, 0.22, -0.31];
        let r_orig = curvature(&m, phi(p)).unwrap().scalar;
        let r_pull = curvature(&pulled, p).unwrap().scalar;
        assert!(
            (r_orig - r_pull).abs() <= 1e-10 * (1.0 + r_orig.abs()),
            "{r_orig} vs {r_pull}"
        );
    }

    #[test]
    fn hessian_flat_quadratic() {
        let m = flat_metric();
        let f = field(m.domain, |p| Ok(Jet3::coordinate(p, 0).square()));
        let h = hessian_and_gradient(&m, &f, [1.2, 0.4, -0.3]).unwrap();
        assert!((h.hessian.get(0, 0) - 2.0).abs() < 1e-14);
        assert!(h.hessian.get(1, 1).abs() < 1e-14);
        assert!((h.grad_norm_sq - 4.0 * 1.2 * 1.2).abs() < 1e-12);
    }

    #[test]
    fn hessian_of_cosine_on_sphere() {
        // On the unit sphere, ∇d(cos x₁) = −cos x₁ · g.
        let m = sphere_metric();
        let f = field(m.domain, |p| Ok(Jet3::coordinate(p, 0).cos()));
        for p in [[1.0, 1.2, 2.0], [1.7, 0.8, 3.0]] {
            let h = hessian_and_gradient(&m, &f, p).unwrap();
            let c = curvature(&m, p).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    let expect = -p[0].cos() * c.metric_at_point.get(i, j);
                    assert!(
                        (h.hessian.get(i, j) - expect).abs() < 1e-9,
                        "({i},{j}) at {p:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn gaussian_soliton_hessian() {
        let m = flat_metric();
        let lambda = 0.8;
        let f = field(m.domain, move |p| {
            let x = Jet3::coordinate(p, 0).square();
            let y = Jet3::coordinate(p, 1).square();
            let z = Jet3::coordinate(p, 2).square();
            Ok(x.add(&y).add(&z).scale(lambda / 2.0))
        });
        let h = hessian_and_gradient(&m, &f, [0.3, -0.7, 1.1]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { lambda } else { 0.0 };
                assert!((h.hessian.get(i, j) - expect).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn eigen_isotropic() {
        let g = Sym2::diagonal([1.0, 4.0, 9.0]);
        let ric = g.scale(2.0);
        let e = generalized_eigen(&ric, &g).unwrap();
        assert_eq!(e.label, EigenLabel::Isotropic);
        for v in e.values {
            assert!((v - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn eigen_two_one_split() {
        // Frame-diagonal Ricci diag(a·g₁₁, b·g₂₂, b·g₃₃).
        let g = Sym2::diagonal([1.0, 4.0, 9.0]);
        let (a, b) = (5.0, -1.0);
        let ric = Sym2::diagonal([a * 1.0, b * 4.0, b * 9.0]);
        let e = generalized_eigen(&ric, &g).unwrap();
        assert_eq!(e.label, EigenLabel::Split);
        assert!((e.values[0] - a).abs() < 1e-12);
        assert!((e.values[1] - b).abs() < 1e-12);
        assert!((e.values[2] - b).abs() < 1e-12);
        // λ1-eigenvector along ∂₁/√g₁₁, g-orthonormal.
        let v = e.vectors[0];
        assert!((v[0].abs() - 1.0).abs() < 1e-12 && v[1].abs() < 1e-12 && v[2].abs() < 1e-12);
        let norm: f64 = (0..3).map(|i| g.get(i, i) * v[i] * v[i]).sum();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eigen_simple_above() {
        // Pair below, simple eigenvalue on top.
        let g = Sym2::diagonal([1.0, 1.0, 1.0]);
        let ric = Sym2::diagonal([-1.0, -1.0, 3.0]);
        let e = generalized_eigen(&ric, &g).unwrap();
        assert_eq!(e.label, EigenLabel::Split);
        assert!((e.values[0] - 3.0).abs() < 1e-13);
        assert!((e.values[1] + 1.0).abs() < 1e-13);
    }

    #[test]
    fn eigen_general_spd_metric() {
        // Non-diagonal SPD g; eigenvectors must be g-orthonormal and solve
        // Ric·v = λ·g·v.
        let g = Sym2::from_fn(|i, j| {
            let m = [[2.0, 0.3, 0.1], [0.3, 1.5, -0.2], [0.1, -0.2, 1.0]];
            m[i][j]
        });
        let ric = Sym2::from_fn(|i, j| {
            let m = [[1.0, 0.5, 0.0], [0.5, -0.7, 0.2], [0.0, 0.2, 0.9]];
            m[i][j]
        });
        let e = generalized_eigen(&ric, &g).unwrap();
        let gm = g.matrix();
        for r in 0..3 {
            let v = e.vectors[r];
            let rv = mat_vec(&ric.matrix(), v);
            let gv = mat_vec(&gm, v);
            for i in 0..3 {
                assert!(
                    (rv[i] - e.values[r] * gv[i]).abs() < 1e-10,
                    "eigenpair {r} residual"
                );
            }
            let norm = dot(v, gv);
            assert!((norm - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn degenerate_metric_is_rejected() {
        let d = ChartBox::new([-2.0; 3], [2.0; 3]);
        let m = MetricField::new(
            [
                ScalarField::constant(d, 1.0),
                field(d, |p| Ok(Jet3::coordinate(p, 0))),
                ScalarField::constant(d, 1.0),
            ],
            d,
        );
        assert!(matches!(
            curvature(&m, [-1.0, 0.0, 0.0]),
            Err(Error::DegenerateMetric { component: 1, .. })
        ));
    }
}
