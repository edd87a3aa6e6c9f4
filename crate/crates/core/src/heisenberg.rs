//! Exact coordinate algebra of the real and complex Heisenberg groups and of
//! the real Heisenberg Lie algebra.
//!
//! Elements are stored as the three off-diagonal entries of a 3×3 upper
//! unitriangular matrix
//!
//! ```text
//! | 1  z1  z3 |
//! | 0   1  z2 |
//! | 0   0   1 |
//! ```
//!
//! so the group law is `(a1+b1, a2+b2, a3+b3+a1·b2)`. Strictly upper
//! triangular algebra elements are nilpotent of order three, which makes the
//! exponential series terminate after the quadratic term.

use std::ops::Mul;

use nalgebra::Complex;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling;

pub type C64 = Complex<f64>;

/// Absolute tolerance for identities of the exact algebra in floating point.
pub const ALGEBRA_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GroupElement {
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ComplexGroupElement {
    pub z1: C64,
    pub z2: C64,
    pub z3: C64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AlgebraElement {
    pub theta1: f64,
    pub theta2: f64,
    pub theta3: f64,
}

impl GroupElement {
    pub const IDENTITY: Self = Self {
        t1: 0.0,
        t2: 0.0,
        t3: 0.0,
    };

    pub const fn new(t1: f64, t2: f64, t3: f64) -> Self {
        Self { t1, t2, t3 }
    }

    pub fn inverse(&self) -> Self {
        Self::new(-self.t1, -self.t2, -self.t3 + self.t1 * self.t2)
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.t1, self.t2, self.t3]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn is_finite(&self) -> bool {
        self.t1.is_finite() && self.t2.is_finite() && self.t3.is_finite()
    }

    /// Largest coordinate difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        (self.t1 - other.t1)
            .abs()
            .max((self.t2 - other.t2).abs())
            .max((self.t3 - other.t3).abs())
    }

    /// Homogeneous quasi-norm `((t1² + t2²)² + t3²)^{1/4}`.
    pub fn quasi_norm(&self) -> f64 {
        let r2 = self.t1 * self.t1 + self.t2 * self.t2;
        (r2 * r2 + self.t3 * self.t3).sqrt().sqrt()
    }

    /// Anisotropic dilation `(λt1, λt2, λ²t3)`; scales the quasi-norm by `λ`.
    pub fn dilate(&self, lambda: f64) -> Self {
        Self::new(lambda * self.t1, lambda * self.t2, lambda * lambda * self.t3)
    }
}

/// Right-invariant quasi-distance `N(x·y⁻¹)`.
pub fn quasi_distance(x: &GroupElement, y: &GroupElement) -> f64 {
    (*x * y.inverse()).quasi_norm()
}

impl Mul for GroupElement {
    type Output = GroupElement;

    fn mul(self, b: GroupElement) -> GroupElement {
        GroupElement::new(self.t1 + b.t1, self.t2 + b.t2, self.t3 + b.t3 + self.t1 * b.t2)
    }
}

impl ComplexGroupElement {
    pub const IDENTITY: Self = Self {
        z1: C64::new(0.0, 0.0),
        z2: C64::new(0.0, 0.0),
        z3: C64::new(0.0, 0.0),
    };

    pub const fn new(z1: C64, z2: C64, z3: C64) -> Self {
        Self { z1, z2, z3 }
    }

    /// Build from `(x1, y1, x2, y2, x3, y3)`.
    pub fn from_parts(x: [f64; 3], y: [f64; 3]) -> Self {
        Self::new(
            C64::new(x[0], y[0]),
            C64::new(x[1], y[1]),
            C64::new(x[2], y[2]),
        )
    }

    pub fn inverse(&self) -> Self {
        Self::new(-self.z1, -self.z2, -self.z3 + self.z1 * self.z2)
    }

    pub fn re(&self) -> [f64; 3] {
        [self.z1.re, self.z2.re, self.z3.re]
    }

    pub fn im(&self) -> [f64; 3] {
        [self.z1.im, self.z2.im, self.z3.im]
    }

    pub fn to_array(self) -> [C64; 3] {
        [self.z1, self.z2, self.z3]
    }

    pub fn from_array(a: [C64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array()
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        (self.z1 - other.z1)
            .norm()
            .max((self.z2 - other.z2).norm())
            .max((self.z3 - other.z3).norm())
    }

    /// Largest absolute coordinate.
    pub fn sup_norm(&self) -> f64 {
        self.z1.norm().max(self.z2.norm()).max(self.z3.norm())
    }
}

impl From<GroupElement> for ComplexGroupElement {
    fn from(t: GroupElement) -> Self {
        Self::new(C64::from(t.t1), C64::from(t.t2), C64::from(t.t3))
    }
}

impl Mul for ComplexGroupElement {
    type Output = ComplexGroupElement;

    fn mul(self, b: ComplexGroupElement) -> ComplexGroupElement {
        ComplexGroupElement::new(self.z1 + b.z1, self.z2 + b.z2, self.z3 + b.z3 + self.z1 * b.z2)
    }
}

/// Right action of the real group on its complexification.
impl Mul<GroupElement> for ComplexGroupElement {
    type Output = ComplexGroupElement;

    fn mul(self, t: GroupElement) -> ComplexGroupElement {
        ComplexGroupElement::new(
            C64::new(self.z1.re + t.t1, self.z1.im),
            C64::new(self.z2.re + t.t2, self.z2.im),
            self.z3 + t.t3 + self.z1 * t.t2,
        )
    }
}

impl AlgebraElement {
    pub const fn new(theta1: f64, theta2: f64, theta3: f64) -> Self {
        Self {
            theta1,
            theta2,
            theta3,
        }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.theta1, self.theta2, self.theta3]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    /// Sum of squared matrix entries, `tr(ΘᵀΘ)`.
    pub fn norm_sq(&self) -> f64 {
        self.theta1 * self.theta1 + self.theta2 * self.theta2 + self.theta3 * self.theta3
    }

    pub fn neg(&self) -> Self {
        Self::new(-self.theta1, -self.theta2, -self.theta3)
    }

    /// `exp(iΘ) = (iθ1, iθ2, iθ3 − θ1θ2/2)`.
    pub fn exp_i(&self) -> ComplexGroupElement {
        ComplexGroupElement::new(
            C64::new(0.0, self.theta1),
            C64::new(0.0, self.theta2),
            C64::new((self.theta1 * self.theta2) * -0.5, self.theta3),
        )
    }
}

/// Free-function form of [`AlgebraElement::exp_i`].
pub fn exp_i(theta: &AlgebraElement) -> ComplexGroupElement {
    theta.exp_i()
}

/// Unique decomposition `Z = exp(iΘ)·t` with `t` real.
///
/// `Θ` is read off from `YX⁻¹ = (y1, y2, y3 − x2·y1)`; `t` is computed as
/// `exp(−iΘ)·Z`, after which both the vanishing of `Im t` and the
/// reconstruction are checked.
pub fn factorize(z: &ComplexGroupElement) -> Result<(AlgebraElement, GroupElement)> {
    let theta = AlgebraElement::new(z.z1.im, z.z2.im, z.z3.im - z.z2.re * z.z1.im);
    let t = theta.neg().exp_i() * *z;
    let real = GroupElement::new(t.z1.re, t.z2.re, t.z3.re);
    let scale = 1.0 + z.sup_norm();
    let tol = ALGEBRA_TOL * scale * scale;
    let imag = t.z1.im.abs().max(t.z2.im.abs()).max(t.z3.im.abs());
    let back = theta.exp_i() * real;
    let residual = imag.max(back.max_abs_diff(z));
    if !(residual <= tol) {
        return Err(Error::Reconstruction { residual });
    }
    Ok((theta, real))
}

/// Axis-aligned box in group coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoordBox {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl CoordBox {
    pub fn new(lo: [f64; 3], hi: [f64; 3]) -> Self {
        Self { lo, hi }
    }

    pub fn unit() -> Self {
        Self::new([0.0; 3], [1.0; 3])
    }

    /// Cube of half-width `h` centered at `c`.
    pub fn centered(c: GroupElement, h: f64) -> Self {
        let c = c.to_array();
        Self::new([c[0] - h, c[1] - h, c[2] - h], [c[0] + h, c[1] + h, c[2] + h])
    }

    pub fn volume(&self) -> f64 {
        (0..3).map(|i| (self.hi[i] - self.lo[i]).max(0.0)).product()
    }

    pub fn contains(&self, t: &GroupElement) -> bool {
        let a = t.to_array();
        (0..3).all(|i| a[i] >= self.lo[i] && a[i] <= self.hi[i])
    }

    pub fn corners(&self) -> impl Iterator<Item = GroupElement> + '_ {
        (0..8u8).map(move |m| {
            let pick = |i: usize| if m & (1 << i) != 0 { self.hi[i] } else { self.lo[i] };
            GroupElement::new(pick(0), pick(1), pick(2))
        })
    }

    /// Smallest box containing the image of `self` under an affine map.
    /// Translations are affine in coordinates, so the corners suffice.
    pub fn image_bounds(&self, map: impl Fn(GroupElement) -> GroupElement) -> Self {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for c in self.corners() {
            let p = map(c).to_array();
            for i in 0..3 {
                lo[i] = lo[i].min(p[i]);
                hi[i] = hi[i].max(p[i]);
            }
        }
        Self::new(lo, hi)
    }

    pub fn union(&self, other: &Self) -> Self {
        let mut lo = self.lo;
        let mut hi = self.hi;
        for i in 0..3 {
            lo[i] = lo[i].min(other.lo[i]);
            hi[i] = hi[i].max(other.hi[i]);
        }
        Self::new(lo, hi)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> GroupElement {
        GroupElement::new(
            sampling::uniform(rng, self.lo[0], self.hi[0]),
            sampling::uniform(rng, self.lo[1], self.hi[1]),
            sampling::uniform(rng, self.lo[2], self.hi[2]),
        )
    }
}

/// Bi-invariant Haar measure: Lebesgue measure `dt1 dt2 dt3` times a constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HaarMeasure {
    pub normalization: f64,
}

impl Default for HaarMeasure {
    fn default() -> Self {
        Self { normalization: 1.0 }
    }
}

impl HaarMeasure {
    pub fn volume(&self, b: &CoordBox) -> f64 {
        self.normalization * b.volume()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UnimodularityReport {
    pub volume: f64,
    pub right_translate: f64,
    pub left_translate: f64,
    /// Largest pairwise relative discrepancy between the three estimates.
    pub discrepancy: f64,
}

/// Monte-Carlo comparison of `vol(B)`, `vol(B·t)` and `vol(t·B)`.
///
/// All three sets are estimated from the same uniform samples of a common
/// bounding box, by testing `p ∈ B`, `p·t⁻¹ ∈ B` and `t⁻¹·p ∈ B`.
pub fn unimodularity_check(
    b: &CoordBox,
    t: &GroupElement,
    samples: usize,
    seed: u64,
) -> Result<UnimodularityReport> {
    let volume = b.volume();
    if !(volume > 0.0) || !volume.is_finite() {
        return Err(Error::DegenerateBox { volume });
    }
    if samples < 1000 {
        return Err(crate::error::invalid("samples", "at least 10^3 samples required"));
    }
    let t_inv = t.inverse();
    let bounds = b
        .union(&b.image_bounds(|c| c * *t))
        .union(&b.image_bounds(|c| *t * c));
    let mut counts = [0u64; 3];
    let chunks = samples.div_ceil(sampling::CHUNK);
    for chunk in 0..chunks {
        let n = sampling::CHUNK.min(samples - chunk * sampling::CHUNK);
        let mut rng = sampling::chunk_stream(seed, 0x0A11, chunk as u64);
        for _ in 0..n {
            let p = bounds.sample(&mut rng);
            counts[0] += b.contains(&p) as u64;
            counts[1] += b.contains(&(p * t_inv)) as u64;
            counts[2] += b.contains(&(t_inv * p)) as u64;
        }
    }
    let scale = bounds.volume() / samples as f64;
    let v = counts.map(|c| c as f64 * scale);
    let rel = |a: f64, b: f64| (a - b).abs() / (0.5 * (a + b)).max(f64::MIN_POSITIVE);
    let discrepancy = rel(v[0], v[1]).max(rel(v[0], v[2])).max(rel(v[1], v[2]));
    Ok(UnimodularityReport {
        volume: v[0],
        right_translate: v[1],
        left_translate: v[2],
        discrepancy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix3;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn matrix(t: &GroupElement) -> Matrix3<f64> {
        Matrix3::new(1.0, t.t1, t.t3, 0.0, 1.0, t.t2, 0.0, 0.0, 1.0)
    }

    #[test]
    fn identity_and_inverse() {
        let s = GroupElement::new(0.3, -1.2, 4.0);
        assert_eq!(GroupElement::IDENTITY * s, s);
        assert_eq!(s * GroupElement::IDENTITY, s);
        let a = GroupElement::new(1.0, 2.0, 3.0);
        assert_eq!(a * a.inverse(), GroupElement::IDENTITY);
        assert_eq!(GroupElement::IDENTITY.inverse(), GroupElement::IDENTITY);
        assert_eq!(GroupElement::new(2.5, 0.0, 0.0).inverse(), GroupElement::new(-2.5, 0.0, 0.0));
    }

    #[test]
    fn product_matches_matrix_oracle() {
        let a = GroupElement::new(1.0, 0.0, 0.0);
        let b = GroupElement::new(0.0, 1.0, 0.0);
        let m = matrix(&a) * matrix(&b);
        let p = a * b;
        assert_eq!(p, GroupElement::new(1.0, 1.0, 1.0));
        assert_eq!((m[(0, 1)], m[(1, 2)], m[(0, 2)]), (p.t1, p.t2, p.t3));
    }

    #[test]
    fn inverse_matches_matrix_oracle() {
        let a = GroupElement::new(1.0, 1.0, 0.0);
        let inv = matrix(&a).try_inverse().unwrap();
        assert_eq!(a.inverse(), GroupElement::new(-1.0, -1.0, 1.0));
        assert!((inv[(0, 2)] - a.inverse().t3).abs() < 1e-15);
    }

    #[test]
    fn exp_i_examples() {
        let e = AlgebraElement::new(1.0, 1.0, 0.0).exp_i();
        assert_eq!(e, ComplexGroupElement::new(c(0.0, 1.0), c(0.0, 1.0), c(-0.5, 0.0)));
        let e = AlgebraElement::new(0.0, 0.0, 1.0).exp_i();
        assert_eq!(e, ComplexGroupElement::new(c(0.0, 0.0), c(0.0, 0.0), c(0.0, 1.0)));
        assert_eq!(AlgebraElement::default().exp_i(), ComplexGroupElement::IDENTITY);
    }

    #[test]
    fn factorize_examples() {
        let (th, t) = factorize(&ComplexGroupElement::IDENTITY).unwrap();
        assert_eq!((th, t), (AlgebraElement::default(), GroupElement::IDENTITY));

        let z = ComplexGroupElement::new(c(0.0, 1.0), c(0.0, 0.0), c(0.0, 0.0));
        let (th, t) = factorize(&z).unwrap();
        assert_eq!(th, AlgebraElement::new(1.0, 0.0, 0.0));
        assert_eq!(t, GroupElement::IDENTITY);

        let z = ComplexGroupElement::new(c(0.0, 0.0), c(1.0, 0.0), c(0.0, 1.0));
        let (th, t) = factorize(&z).unwrap();
        assert_eq!(th, AlgebraElement::new(0.0, 0.0, 1.0));
        assert_eq!(t, GroupElement::new(0.0, 1.0, 0.0));
        // oracle: exp(-iΘ)·Z by the coordinate product
        let direct = AlgebraElement::new(0.0, 0.0, -1.0).exp_i() * z;
        assert_eq!(direct, ComplexGroupElement::from(t));
    }

    #[test]
    fn unimodularity_identity_is_exact() {
        let r = unimodularity_check(&CoordBox::unit(), &GroupElement::IDENTITY, 1000, 0).unwrap();
        assert_eq!(r.discrepancy, 0.0);
    }

    #[test]
    fn unimodularity_rejects_degenerate_box() {
        let b = CoordBox::new([0.0; 3], [1.0, 0.0, 1.0]);
        assert!(matches!(
            unimodularity_check(&b, &GroupElement::IDENTITY, 1000, 0),
            Err(Error::DegenerateBox { .. })
        ));
        assert!(unimodularity_check(&CoordBox::unit(), &GroupElement::IDENTITY, 10, 0).is_err());
    }

    #[test]
    fn quasi_norm_is_homogeneous_and_right_invariant_distance() {
        let t = GroupElement::new(0.4, -1.1, 2.3);
        assert!((t.dilate(3.0).quasi_norm() - 3.0 * t.quasi_norm()).abs() < 1e-12);
        let (x, y, s) = (
            GroupElement::new(1.0, 2.0, -0.5),
            GroupElement::new(-0.3, 0.7, 1.9),
            GroupElement::new(5.0, -2.0, 3.0),
        );
        assert!((quasi_distance(&(x * s), &(y * s)) - quasi_distance(&x, &y)).abs() < 1e-12);
    }
}
