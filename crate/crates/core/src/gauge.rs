//! Invariant gauges and their complex derivatives.
//!
//! * `φ(Z) = (Im z1)² + (Im z2)² + (Im z3 − Re z2·Im z1)²` on the complex
//!   Heisenberg group; it equals `|Θ|²` for `Z = exp(iΘ)·t` and is constant
//!   along right orbits of the real group.
//! * `φ̃(z0, Z) = (Im z0)² + φ(Z)` on the cylinder times the complex group.
//! * `Σ (Im z_k)²` on `ℂⁿ`, the abelian baseline.
//!
//! A [`GaugeModel`] pairs a gauge with a tube radius `ε`; its defining function
//! is `ρ = gauge − ε`, or `e^{λρ} − 1` for a rescaled model. Derivatives are
//! Wirtinger derivatives in the chart coordinates `z_k = x_k + i y_k`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::heisenberg::{factorize, ComplexGroupElement, GroupElement, C64};

pub type ChartPoint = DVector<C64>;

/// Relative width of the boundary band in [`tube_contains`].
pub const BOUNDARY_REL_TOL: f64 = 1e-9;

/// Point of `(ℂ/ℤ) × ℍ₃(ℂ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TubePoint {
    pub z0: C64,
    pub z: ComplexGroupElement,
}

impl TubePoint {
    /// Normalizes `Re z0` into `[0, 1)`.
    pub fn new(z0: C64, z: ComplexGroupElement) -> Self {
        let mut re = z0.re.rem_euclid(1.0);
        if re >= 1.0 {
            re = 0.0;
        }
        Self {
            z0: C64::new(re, z0.im),
            z,
        }
    }

    /// Right action `(z0, Z) ↦ (z0, Z·t)`.
    pub fn act(&self, t: &GroupElement) -> Self {
        Self {
            z0: self.z0,
            z: self.z * *t,
        }
    }

    /// Chart coordinates `(z0, z1, z2, z3)`.
    pub fn to_chart(&self) -> ChartPoint {
        DVector::from_column_slice(&[self.z0, self.z.z1, self.z.z2, self.z.z3])
    }

    pub fn from_chart(p: &ChartPoint) -> Self {
        Self::new(p[0], ComplexGroupElement::new(p[1], p[2], p[3]))
    }
}

pub fn phi(z: &ComplexGroupElement) -> f64 {
    let u = z.z3.im - z.z2.re * z.z1.im;
    z.z1.im * z.z1.im + z.z2.im * z.z2.im + u * u
}

pub fn phi_tilde(p: &TubePoint) -> f64 {
    p.z0.im * p.z0.im + phi(&p.z)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Membership {
    Inside,
    Boundary,
    Outside,
}

/// Classify `p` against `M̃_ε = {φ̃ < ε}` with a boundary band of `1e-9·ε`.
pub fn tube_contains(p: &TubePoint, epsilon: f64) -> Result<Membership> {
    if !(epsilon > 0.0) {
        return Err(invalid("epsilon", "tube radius must be positive"));
    }
    let gap = phi_tilde(p) - epsilon;
    let tol = BOUNDARY_REL_TOL * epsilon;
    Ok(if gap.abs() <= tol {
        Membership::Boundary
    } else if gap < 0.0 {
        Membership::Inside
    } else {
        Membership::Outside
    })
}

/// Equivariant projection `M̃ → G`: the real factor of `Z = exp(iΘ)·t`.
pub fn project_to_group(p: &TubePoint) -> Result<GroupElement> {
    factorize(&p.z).map(|(_, t)| t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GaugeKind {
    /// `φ` on `ℍ₃(ℂ)`; chart `(z1, z2, z3)`.
    Heisenberg,
    /// `φ̃` on `(ℂ/ℤ) × ℍ₃(ℂ)`; chart `(z0, z1, z2, z3)`.
    Thickened,
    /// `Σ (Im z_k)²` on `ℂⁿ`.
    Abelian { dim: usize },
}

impl GaugeKind {
    pub fn dim(&self) -> usize {
        match self {
            GaugeKind::Heisenberg => 3,
            GaugeKind::Thickened => 4,
            GaugeKind::Abelian { dim } => *dim,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaugeModel {
    pub kind: GaugeKind,
    pub epsilon: f64,
    /// `Some(λ)` for the rescaled defining function `e^{λρ} − 1`.
    pub lambda: Option<f64>,
}

/// Value and complex derivatives of a real function at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeBundle {
    pub value: f64,
    /// `∂ρ/∂z_k`.
    pub grad: DVector<C64>,
    /// `∂²ρ/∂z_j∂z_k`.
    pub holo_hessian: DMatrix<C64>,
    /// `∂²ρ/∂z_j∂z̄_k`.
    pub mixed_hessian: DMatrix<C64>,
}

impl DerivativeBundle {
    pub fn dim(&self) -> usize {
        self.grad.len()
    }

    /// Largest deviation of the mixed Hessian from Hermitian and of the
    /// holomorphic Hessian from symmetric.
    pub fn symmetry_defect(&self) -> f64 {
        let m = &self.mixed_hessian;
        let h = &self.holo_hessian;
        (m - m.adjoint()).camax().max((h - h.transpose()).camax())
    }

    /// Second-order Taylor term `Re(Σ ρ_jk w_j w_k) + Σ ρ_jk̄ w_j w̄_k`.
    pub fn quadratic_part(&self, w: &DVector<C64>) -> f64 {
        let holo = (w.transpose() * &self.holo_hessian * w)[(0, 0)].re;
        holo + levi_quadratic(&self.mixed_hessian, w)
    }

    /// Taylor polynomial of order two, `ρ + 2Re(Σρ_k w_k) + quadratic_part`.
    pub fn taylor2(&self, w: &DVector<C64>) -> f64 {
        self.value + 2.0 * self.grad.dot(w).re + self.quadratic_part(w)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        (self.value - other.value)
            .abs()
            .max((&self.grad - &other.grad).camax())
            .max((&self.holo_hessian - &other.holo_hessian).camax())
            .max((&self.mixed_hessian - &other.mixed_hessian).camax())
    }
}

/// `Σ_jk M_jk w_j w̄_k`, real for Hermitian `M`.
pub fn levi_quadratic(m: &DMatrix<C64>, w: &DVector<C64>) -> f64 {
    let wc = w.map(|z| z.conj());
    (w.transpose() * m * wc)[(0, 0)].re
}

/// Real gradient and Hessian in the ordering `(x_1, y_1, …, x_n, y_n)`.
struct RealJet {
    value: f64,
    grad: DVector<f64>,
    hess: DMatrix<f64>,
}

impl RealJet {
    fn zeros(dim: usize) -> Self {
        Self {
            value: 0.0,
            grad: DVector::zeros(2 * dim),
            hess: DMatrix::zeros(2 * dim, 2 * dim),
        }
    }

    fn add_square_of_y(&mut self, p: &ChartPoint, k: usize) {
        let y = p[k].im;
        self.value += y * y;
        self.grad[2 * k + 1] += 2.0 * y;
        self.hess[(2 * k + 1, 2 * k + 1)] += 2.0;
    }

    /// Adds `φ` for the group coordinates starting at chart index `o`.
    fn add_phi(&mut self, p: &ChartPoint, o: usize) {
        self.add_square_of_y(p, o);
        self.add_square_of_y(p, o + 1);
        let (ix2, iy1, iy3) = (2 * (o + 1), 2 * o + 1, 2 * (o + 2) + 1);
        let (x2, y1, y3) = (p[o + 1].re, p[o].im, p[o + 2].im);
        let u = y3 - x2 * y1;
        let mut du = DVector::zeros(self.grad.len());
        du[iy1] = -x2;
        du[ix2] = -y1;
        du[iy3] = 1.0;
        self.value += u * u;
        self.grad.axpy(2.0 * u, &du, 1.0);
        self.hess.ger(2.0, &du, &du, 1.0);
        self.hess[(iy1, ix2)] -= 2.0 * u;
        self.hess[(ix2, iy1)] -= 2.0 * u;
    }

    fn wirtinger(&self) -> DerivativeBundle {
        let n = self.grad.len() / 2;
        let h = &self.hess;
        let grad = DVector::from_fn(n, |k, _| {
            C64::new(0.5 * self.grad[2 * k], -0.5 * self.grad[2 * k + 1])
        });
        let holo = DMatrix::from_fn(n, n, |j, k| {
            let (xj, yj, xk, yk) = (2 * j, 2 * j + 1, 2 * k, 2 * k + 1);
            C64::new(
                0.25 * (h[(xj, xk)] - h[(yj, yk)]),
                -0.25 * (h[(xj, yk)] + h[(yj, xk)]),
            )
        });
        let mixed = DMatrix::from_fn(n, n, |j, k| {
            let (xj, yj, xk, yk) = (2 * j, 2 * j + 1, 2 * k, 2 * k + 1);
            C64::new(
                0.25 * (h[(xj, xk)] + h[(yj, yk)]),
                0.25 * (h[(xj, yk)] - h[(yj, xk)]),
            )
        });
        DerivativeBundle {
            value: self.value,
            grad,
            holo_hessian: holo,
            mixed_hessian: mixed,
        }
    }
}

impl GaugeModel {
    pub fn heisenberg(epsilon: f64) -> Self {
        Self {
            kind: GaugeKind::Heisenberg,
            epsilon,
            lambda: None,
        }
    }

    pub fn thickened(epsilon: f64) -> Self {
        Self {
            kind: GaugeKind::Thickened,
            epsilon,
            lambda: None,
        }
    }

    pub fn abelian(dim: usize, epsilon: f64) -> Self {
        Self {
            kind: GaugeKind::Abelian { dim },
            epsilon,
            lambda: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.kind.dim()
    }

    /// Replace `ρ` by `e^{λρ} − 1`. The zero set is unchanged.
    pub fn rescaled(&self, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(invalid("lambda", "rescaling strength must be positive and finite"));
        }
        Ok(Self {
            lambda: Some(lambda),
            ..*self
        })
    }

    /// The unrescaled model with the same gauge and radius.
    pub fn base(&self) -> Self {
        Self {
            lambda: None,
            ..*self
        }
    }

    /// The gauge itself (nonnegative, zero on the real locus).
    pub fn gauge(&self, p: &ChartPoint) -> f64 {
        match self.kind {
            GaugeKind::Heisenberg => phi(&ComplexGroupElement::new(p[0], p[1], p[2])),
            GaugeKind::Thickened => {
                p[0].im * p[0].im + phi(&ComplexGroupElement::new(p[1], p[2], p[3]))
            }
            GaugeKind::Abelian { .. } => p.iter().map(|z| z.im * z.im).sum(),
        }
    }

    /// The defining function: `gauge − ε`, or `e^{λ(gauge − ε)} − 1`.
    pub fn defining(&self, p: &ChartPoint) -> f64 {
        let rho = self.gauge(p) - self.epsilon;
        match self.lambda {
            None => rho,
            Some(l) => (l * rho).exp_m1(),
        }
    }

    /// Analytic derivative bundle of the defining function.
    pub fn derivatives(&self, p: &ChartPoint) -> DerivativeBundle {
        let n = self.dim();
        assert_eq!(p.len(), n, "chart point has wrong dimension");
        let mut jet = RealJet::zeros(n);
        match self.kind {
            GaugeKind::Heisenberg => jet.add_phi(p, 0),
            GaugeKind::Thickened => {
                jet.add_square_of_y(p, 0);
                jet.add_phi(p, 1);
            }
            GaugeKind::Abelian { dim } => (0..dim).for_each(|k| jet.add_square_of_y(p, k)),
        }
        jet.value -= self.epsilon;
        let base = jet.wirtinger();
        match self.lambda {
            None => base,
            Some(l) => rescale_bundle(&base, l),
        }
    }

    /// `z − x` in chart coordinates; the cylinder coordinate of the thickened
    /// chart is taken to the representative with real part in `[−½, ½)`.
    pub fn chart_diff(&self, z: &ChartPoint, x: &ChartPoint) -> DVector<C64> {
        let mut d = z - x;
        if self.kind == GaugeKind::Thickened {
            d[0].re -= (d[0].re + 0.5).floor();
        }
        d
    }
}

/// Chain rule for `g = e^{λρ} − 1`:
/// `g_j = λe^{λρ}ρ_j`, `g_jk = λe^{λρ}(ρ_jk + λρ_jρ_k)`,
/// `g_jk̄ = λe^{λρ}(ρ_jk̄ + λρ_jρ̄_k)`.
pub fn rescale_bundle(base: &DerivativeBundle, lambda: f64) -> DerivativeBundle {
    let e = (lambda * base.value).exp();
    let s = C64::from(lambda * e);
    let g = &base.grad;
    let gc = g.map(|z| z.conj());
    let outer_holo = g * g.transpose();
    let outer_mixed = g * gc.transpose();
    DerivativeBundle {
        value: (lambda * base.value).exp_m1(),
        grad: g * s,
        holo_hessian: (&base.holo_hessian + outer_holo * C64::from(lambda)) * s,
        mixed_hessian: (&base.mixed_hessian + outer_mixed * C64::from(lambda)) * s,
    }
}

/// Central finite-difference oracle for complex derivatives of a real
/// function of chart coordinates.
pub mod fd {
    use super::*;

    /// Default step on each real coordinate.
    pub const DEFAULT_STEP: f64 = 1e-5;

    fn shifted(p: &ChartPoint, moves: &[(usize, f64)]) -> ChartPoint {
        let mut q = p.clone();
        for &(r, h) in moves {
            if r % 2 == 0 {
                q[r / 2].re += h;
            } else {
                q[r / 2].im += h;
            }
        }
        q
    }

    /// Derivative bundle by central differences with step `h` on every real
    /// coordinate.
    pub fn bundle(f: impl Fn(&ChartPoint) -> f64, p: &ChartPoint, h: f64) -> DerivativeBundle {
        let n = p.len();
        let m = 2 * n;
        let f0 = f(p);
        let d1: Vec<f64> = (0..m)
            .map(|r| (f(&shifted(p, &[(r, h)])) - f(&shifted(p, &[(r, -h)]))) / (2.0 * h))
            .collect();
        let mut d2 = vec![vec![0.0; m]; m];
        for a in 0..m {
            d2[a][a] = (f(&shifted(p, &[(a, h)])) - 2.0 * f0 + f(&shifted(p, &[(a, -h)]))) / (h * h);
            for b in 0..a {
                let v = (f(&shifted(p, &[(a, h), (b, h)])) - f(&shifted(p, &[(a, h), (b, -h)]))
                    - f(&shifted(p, &[(a, -h), (b, h)]))
                    + f(&shifted(p, &[(a, -h), (b, -h)])))
                    / (4.0 * h * h);
                d2[a][b] = v;
                d2[b][a] = v;
            }
        }
        // ∂_z = (∂_x − i∂_y)/2, ∂_z̄ = (∂_x + i∂_y)/2
        let dz = |j: usize| [(2 * j, C64::new(0.5, 0.0)), (2 * j + 1, C64::new(0.0, -0.5))];
        let dzbar = |j: usize| [(2 * j, C64::new(0.5, 0.0)), (2 * j + 1, C64::new(0.0, 0.5))];
        let second = |a: [(usize, C64); 2], b: [(usize, C64); 2]| {
            let mut acc = C64::new(0.0, 0.0);
            for (ra, ca) in a {
                for (rb, cb) in b {
                    acc += ca * cb * d2[ra][rb];
                }
            }
            acc
        };
        DerivativeBundle {
            value: f0,
            grad: DVector::from_fn(n, |j, _| dz(j).iter().map(|(r, c)| c * d1[*r]).sum()),
            holo_hessian: DMatrix::from_fn(n, n, |j, k| second(dz(j), dz(k))),
            mixed_hessian: DMatrix::from_fn(n, n, |j, k| second(dz(j), dzbar(k))),
        }
    }
}
