//! Levi forms, Levi polynomials and strong pseudoconvexity certificates.
//!
//! For a boundary point `x` of `{ρ < 0}` the Levi polynomial is
//! `f(z, x) = Σ a_k (z−x)_k + Σ b_jk (z−x)_j (z−x)_k` with `a = ∂ρ/∂z` and
//! `b = ½ ∂²ρ/∂z∂z` at `x`, so that
//! `ρ(z) = 2 Re f(z, x) + L_x(z−x) + O(|z−x|³)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::fit::{power_law_fit, LineFit};
use crate::gauge::{levi_quadratic, rescale_bundle, ChartPoint, DerivativeBundle, GaugeKind, GaugeModel, BOUNDARY_REL_TOL};
use crate::heisenberg::{AlgebraElement, ComplexGroupElement, CoordBox, C64};
use crate::sampling;

/// Largest rescaling strength tried by the full-space search.
pub const LAMBDA_CAP: f64 = (1u64 << 20) as f64;

/// `L_x(w) = Σ ρ_jk̄ w_j w̄_k`.
pub fn levi_form(model: &GaugeModel, x: &ChartPoint, w: &DVector<C64>) -> f64 {
    levi_quadratic(&model.derivatives(x).mixed_hessian, w)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeviPolynomial {
    pub model: GaugeModel,
    pub base: ChartPoint,
    pub a: DVector<C64>,
    pub b: DMatrix<C64>,
}

impl LeviPolynomial {
    /// Read the coefficients off the model's derivative bundle at a boundary
    /// point.
    pub fn new(model: &GaugeModel, x: &ChartPoint) -> Result<Self> {
        let gap = model.base().defining(x);
        let tol = BOUNDARY_REL_TOL * model.epsilon.max(f64::MIN_POSITIVE);
        if !(gap.abs() <= tol) {
            return Err(Error::NotOnBoundary { rho: gap, tol });
        }
        let d = model.derivatives(x);
        Ok(Self {
            model: *model,
            base: x.clone(),
            a: d.grad,
            b: d.holo_hessian * C64::from(0.5),
        })
    }

    /// `f` at a displacement `w = z − x`.
    pub fn eval_local(&self, w: &DVector<C64>) -> C64 {
        self.a.dot(w) + (w.transpose() * &self.b * w)[(0, 0)]
    }

    pub fn eval(&self, z: &ChartPoint) -> C64 {
        self.eval_local(&self.model.chart_diff(z, &self.base))
    }

    /// `f` at chart coordinates given as a slice, without allocating.
    pub fn eval_slice(&self, z: &[C64]) -> C64 {
        let n = self.a.len();
        let mut w = [C64::new(0.0, 0.0); 16];
        if n > w.len() {
            return self.eval(&DVector::from_column_slice(z));
        }
        for k in 0..n {
            w[k] = z[k] - self.base[k];
        }
        if self.model.kind == GaugeKind::Thickened {
            w[0].re -= (w[0].re + 0.5).floor();
        }
        let mut f = C64::new(0.0, 0.0);
        for j in 0..n {
            let mut row = self.a[j];
            for k in 0..n {
                row += self.b[(j, k)] * w[k];
            }
            f += row * w[j];
        }
        f
    }

    /// `f(z, x)^{−τ}` on the branch continuous in `Re f < 0`.
    pub fn eval_power(&self, z: &ChartPoint, tau: f64) -> Result<C64> {
        negative_power(self.eval(z), tau)
    }

    /// Remainder `|ρ(x+w) − 2Re f(x+w) − L_x(w)|` of the second-order
    /// expansion (the constant `ρ(x)` is included on the right).
    pub fn taylor_remainder(&self, w: &DVector<C64>) -> f64 {
        let z = &self.base + w;
        let d = self.model.derivatives(&self.base);
        let predicted = d.value + 2.0 * self.eval_local(w).re + levi_quadratic(&d.mixed_hessian, w);
        (self.model.defining(&z) - predicted).abs()
    }
}

/// `log f` with `arg f ∈ (π/2, 3π/2)`, so `log(−1) = iπ`.
pub fn branch_log(f: C64) -> Result<C64> {
    if !(f.re < 0.0) {
        return Err(Error::BranchDomain { re_f: f.re });
    }
    let mut arg = f.im.atan2(f.re);
    if arg < 0.0 {
        arg += std::f64::consts::TAU;
    }
    Ok(C64::new(f.norm().ln(), arg))
}

/// `f^{−τ} = exp(−τ log f)` on the left half-plane branch.
pub fn negative_power(f: C64, tau: f64) -> Result<C64> {
    Ok((branch_log(f)? * -tau).exp())
}

/// Fitted exponent of the Taylor remainder along `x + s·v` for dyadic `s`.
pub fn taylor_remainder_fit(poly: &LeviPolynomial, v: &DVector<C64>, scales: &[f64]) -> Option<LineFit> {
    let rem: Vec<f64> = scales.iter().map(|&s| poly.taylor_remainder(&(v * C64::from(s)))).collect();
    power_law_fit(scales, &rem)
}

/// Orthonormal basis (columns) of the holomorphic tangent plane
/// `{w : Σ ρ_k w_k = 0}`, the Hermitian complement of `conj(∂ρ)`.
pub fn tangent_basis(grad: &DVector<C64>) -> DMatrix<C64> {
    let n = grad.len();
    let normal = grad.map(|z| z.conj());
    let mut stacked = DMatrix::<C64>::zeros(n, n + 1);
    stacked.set_column(0, &normal);
    for k in 0..n {
        stacked[(k, k + 1)] = C64::from(1.0);
    }
    let q = stacked.qr().q();
    q.columns(1, n - 1).into_owned()
}

/// Smallest eigenvalue of the Levi form restricted to the tangent plane.
pub fn tangent_min_eigenvalue(bundle: &DerivativeBundle) -> f64 {
    let q = tangent_basis(&bundle.grad);
    let restricted = q.transpose() * &bundle.mixed_hessian * q.map(|z| z.conj());
    min_eigenvalue(&restricted)
}

/// Smallest eigenvalue of the Levi form on all of `ℂⁿ`.
pub fn full_min_eigenvalue(bundle: &DerivativeBundle) -> f64 {
    min_eigenvalue(&bundle.mixed_hessian)
}

fn min_eigenvalue(m: &DMatrix<C64>) -> f64 {
    let herm = (m + m.adjoint()) * C64::from(0.5);
    SymmetricEigen::new(herm).eigenvalues.min()
}

fn validate_epsilon(model: &GaugeModel) -> Result<()> {
    let eps = model.epsilon;
    let ok = match model.kind {
        GaugeKind::Heisenberg | GaugeKind::Thickened => eps > 0.0 && eps < 1.0,
        GaugeKind::Abelian { .. } => eps > 0.0 && eps.is_finite(),
    };
    if ok {
        Ok(())
    } else {
        Err(invalid("epsilon", format!("tube radius {eps} must lie in (0, 1) (ε < 1)")))
    }
}

/// A point on `{gauge = ε}`: fiber coordinates uniform on the sphere of radius
/// `√ε`, real coordinates uniform in the unit fundamental box, then a right
/// translation by a group element uniform in `[−1, 1]³`.
pub fn sample_boundary_point<R: Rng + ?Sized>(model: &GaugeModel, rng: &mut R) -> ChartPoint {
    let r = model.epsilon.sqrt();
    match model.kind {
        GaugeKind::Abelian { dim } => {
            let y = sampling::unit_sphere(rng, dim);
            DVector::from_fn(dim, |k, _| C64::new(rng.random::<f64>(), r * y[k]))
        }
        GaugeKind::Heisenberg | GaugeKind::Thickened => {
            let thick = model.kind == GaugeKind::Thickened;
            let dir = sampling::unit_sphere(rng, if thick { 4 } else { 3 });
            let off = thick as usize;
            let theta = AlgebraElement::new(r * dir[off], r * dir[off + 1], r * dir[off + 2]);
            let t = CoordBox::unit().sample(rng);
            let s = CoordBox::new([-1.0; 3], [1.0; 3]).sample(rng);
            let z: ComplexGroupElement = theta.exp_i() * (t * s);
            if thick {
                let z0 = C64::new(rng.random::<f64>(), r * dir[0]);
                DVector::from_column_slice(&[z0, z.z1, z.z2, z.z3])
            } else {
                DVector::from_column_slice(&[z.z1, z.z2, z.z3])
            }
        }
    }
}

/// The canonical base point `(i√ε, e)` (thickened), `(0, 0, i√ε)`
/// (unthickened) or `(i√ε, 0, …)` (abelian).
pub fn canonical_base_point(model: &GaugeModel) -> ChartPoint {
    let n = model.dim();
    let mut x = DVector::zeros(n);
    let idx = if model.kind == GaugeKind::Heisenberg { 2 } else { 0 };
    x[idx] = C64::new(0.0, model.epsilon.sqrt());
    x
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpcOptions {
    pub samples: usize,
    pub seed: u64,
    /// Also search `λ` so that `e^{λρ} − 1` is positive on all of `ℂⁿ`.
    pub full_space: bool,
}

impl Default for SpcOptions {
    fn default() -> Self {
        Self {
            samples: 10_000,
            seed: 0,
            full_space: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum SpcVerdict {
    Certified,
    Failed { witness: Vec<[f64; 2]>, eigenvalue: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpcCertificate {
    pub epsilon: f64,
    pub samples: usize,
    pub seed: u64,
    /// Smallest tangent-plane Levi eigenvalue over the grid.
    pub min_eigenvalue: f64,
    /// Smallest full-space eigenvalue of the rescaled function, if searched.
    pub full_space_min_eigenvalue: Option<f64>,
    /// `0` when no rescaling was used.
    pub lambda_used: f64,
    #[serde(flatten)]
    pub verdict: SpcVerdict,
}

impl SpcCertificate {
    pub fn is_certified(&self) -> bool {
        self.verdict == SpcVerdict::Certified
    }
}

fn witness(p: &ChartPoint) -> Vec<[f64; 2]> {
    p.iter().map(|z| [z.re, z.im]).collect()
}

/// Sample boundary points and certify positivity of the Levi form on the
/// holomorphic tangent plane (and, optionally, on all of `ℂⁿ` after
/// rescaling).
pub fn certify_spc(model: &GaugeModel, opts: &SpcOptions) -> Result<SpcCertificate> {
    validate_epsilon(model)?;
    if opts.samples == 0 {
        return Err(invalid("samples", "need at least one boundary sample"));
    }
    let base = model.base();
    let mut rng = sampling::stream(opts.seed, 0x5BC);
    let mut points = Vec::with_capacity(opts.samples);
    let mut bundles = Vec::with_capacity(opts.samples);
    let mut worst = (f64::INFINITY, 0usize);
    for i in 0..opts.samples {
        let p = sample_boundary_point(&base, &mut rng);
        let b = base.derivatives(&p);
        let ev = tangent_min_eigenvalue(&b);
        if ev < worst.0 || ev.is_nan() {
            worst = (ev, i);
        }
        points.push(p);
        bundles.push(b);
    }
    let mut cert = SpcCertificate {
        epsilon: model.epsilon,
        samples: opts.samples,
        seed: opts.seed,
        min_eigenvalue: worst.0,
        full_space_min_eigenvalue: None,
        lambda_used: 0.0,
        verdict: SpcVerdict::Certified,
    };
    if !(worst.0 > 0.0) {
        cert.verdict = SpcVerdict::Failed {
            witness: witness(&points[worst.1]),
            eigenvalue: worst.0,
        };
        return Ok(cert);
    }
    if opts.full_space {
        let mut lambda = 1.0;
        loop {
            let mut low = (f64::INFINITY, 0usize);
            for (i, b) in bundles.iter().enumerate() {
                let ev = full_min_eigenvalue(&rescale_bundle(b, lambda));
                if ev < low.0 || ev.is_nan() {
                    low = (ev, i);
                }
            }
            if low.0 > 0.0 {
                cert.lambda_used = lambda;
                cert.full_space_min_eigenvalue = Some(low.0);
                break;
            }
            if lambda >= LAMBDA_CAP {
                cert.lambda_used = lambda;
                cert.full_space_min_eigenvalue = Some(low.0);
                cert.verdict = SpcVerdict::Failed {
                    witness: witness(&points[low.1]),
                    eigenvalue: low.0,
                };
                break;
            }
            lambda *= 2.0;
        }
    }
    Ok(cert)
}

/// Random point uniform in the ball of radius `r` about `x` in `ℝ^{2n}`.
fn ball_point<R: Rng + ?Sized>(x: &ChartPoint, r: f64, rng: &mut R) -> DVector<C64> {
    let n = x.len();
    let u = sampling::unit_ball(rng, 2 * n);
    DVector::from_fn(n, |k, _| C64::new(r * u[2 * k], r * u[2 * k + 1]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundConstants {
    /// `min |f| / |z−x|²`.
    pub c_hat: f64,
    /// `max |f| / |z−x|`.
    pub d_hat: f64,
    pub accepted: usize,
}

/// Empirical constants of `C|w|² ≤ |f(x+w)| ≤ D|w|` over `M̄ ∩ ball(x, r)`.
pub fn bound_constants(poly: &LeviPolynomial, r: f64, samples: usize, seed: u64) -> Result<BoundConstants> {
    if !(r > 0.0) {
        return Err(invalid("radius", "must be positive"));
    }
    let mut rng = sampling::stream(seed, 0xB0D);
    let (mut c_hat, mut d_hat, mut accepted) = (f64::INFINITY, 0.0f64, 0usize);
    for _ in 0..samples {
        let w = ball_point(&poly.base, r, &mut rng);
        let norm = w.norm();
        if norm == 0.0 || poly.model.defining(&(&poly.base + &w)) > 0.0 {
            continue;
        }
        let f = poly.eval_local(&w).norm();
        c_hat = c_hat.min(f / (norm * norm));
        d_hat = d_hat.max(f / norm);
        accepted += 1;
    }
    if accepted == 0 {
        return Err(Error::EmptySample(format!("no points of the closed tube within radius {r}")));
    }
    Ok(BoundConstants { c_hat, d_hat, accepted })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RealPartReport {
    pub max_re_f: f64,
    pub accepted: usize,
}

/// Largest `Re f(z, x)` over interior points `z ∈ M ∩ ball(x, r)`.
pub fn negative_real_part_check(poly: &LeviPolynomial, r: f64, samples: usize, seed: u64) -> Result<RealPartReport> {
    let mut rng = sampling::stream(seed, 0x2EF);
    let (mut max_re_f, mut accepted) = (f64::NEG_INFINITY, 0usize);
    for _ in 0..samples {
        let w = ball_point(&poly.base, r, &mut rng);
        if poly.model.defining(&(&poly.base + &w)) >= 0.0 {
            continue;
        }
        max_re_f = max_re_f.max(poly.eval_local(&w).re);
        accepted += 1;
    }
    if accepted == 0 {
        return Err(Error::EmptySample(format!("no interior points within radius {r}")));
    }
    Ok(RealPartReport { max_re_f, accepted })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn levi_form_examples() {
        let ab = GaugeModel::abelian(3, 0.1);
        let x = DVector::zeros(3);
        let w = DVector::from_column_slice(&[c(0.6, 0.0), c(0.0, 0.8), c(0.0, 0.0)]);
        assert!((levi_form(&ab, &x, &w) - 0.5).abs() < 1e-15);
        assert_eq!(levi_form(&ab, &x, &DVector::zeros(3)), 0.0);
        let th = GaugeModel::thickened(0.1);
        let e1 = DVector::from_column_slice(&[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        assert!((levi_form(&th, &DVector::zeros(4), &e1) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn abelian_one_dimensional_polynomial() {
        let eps: f64 = 0.2;
        let m = GaugeModel::abelian(1, eps);
        let x = DVector::from_column_slice(&[c(0.0, eps.sqrt())]);
        let f = LeviPolynomial::new(&m, &x).unwrap();
        assert!((f.a[0] - c(0.0, -eps.sqrt())).norm() < 1e-15);
        assert!((f.b[(0, 0)] - c(-0.25, 0.0)).norm() < 1e-15);
        assert_eq!(f.eval(&x), c(0.0, 0.0));
        // closed form along z = i s √ε: f = ε(s−1)(1 + (s−1)/4)
        for s in [0.1, 0.5, 0.9, 0.999] {
            let z = DVector::from_column_slice(&[c(0.0, s * eps.sqrt())]);
            let v = f.eval(&z);
            let expect = eps * (s - 1.0) * (1.0 + (s - 1.0) / 4.0);
            assert!((v.re - expect).abs() < 1e-15 && v.im.abs() < 1e-15);
            assert!(v.re < 0.0);
        }
    }

    #[test]
    fn rejects_interior_base_point() {
        let m = GaugeModel::thickened(0.1);
        assert!(matches!(LeviPolynomial::new(&m, &DVector::zeros(4)), Err(Error::NotOnBoundary { .. })));
    }

    #[test]
    fn thickened_polynomial_matches_quadratic_form_up_to_scale() {
        // quadratic part is proportional to z0² + z1² + z2² + z3²
        let m = GaugeModel::thickened(0.1);
        let f = LeviPolynomial::new(&m, &canonical_base_point(&m)).unwrap();
        let ratio = f.b[(0, 0)];
        assert!((&f.b - DMatrix::identity(4, 4) * ratio).camax() < 1e-15);
        assert!((ratio - c(-0.25, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn slice_evaluation_matches_vector_path() {
        let m = GaugeModel::thickened(0.1);
        let f = LeviPolynomial::new(&m, &canonical_base_point(&m)).unwrap();
        let mut rng = sampling::stream(3, 0);
        for _ in 0..200 {
            let z = DVector::from_fn(4, |_, _| C64::new(sampling::uniform(&mut rng, -2.0, 2.0), sampling::normal(&mut rng)));
            assert!((f.eval(&z) - f.eval_slice(z.as_slice())).norm() < 1e-12 * (1.0 + f.eval(&z).norm()));
        }
    }

    #[test]
    fn branch_convention() {
        assert!((negative_power(c(-1.0, 0.0), 1.0).unwrap() - c(-1.0, 0.0)).norm() < 1e-15);
        assert!((negative_power(c(-1.0, 0.0), 2.0).unwrap() - c(1.0, 0.0)).norm() < 1e-15);
        assert!((branch_log(c(-1.0, 0.0)).unwrap().im - PI).abs() < 1e-15);
        // continuous across the negative real axis
        let above = branch_log(c(-1.0, 1e-12)).unwrap().im;
        let below = branch_log(c(-1.0, -1e-12)).unwrap().im;
        assert!((above - below).abs() < 1e-11);
        assert!(matches!(negative_power(c(0.0, 1.0), 1.0), Err(Error::BranchDomain { .. })));
        assert!(negative_power(c(0.5, -1.0), 1.0).is_err());
    }

    #[test]
    fn abelian_certificate_margin_is_half() {
        let cert = certify_spc(&GaugeModel::abelian(3, 0.3), &SpcOptions { samples: 200, ..Default::default() }).unwrap();
        assert!(cert.is_certified());
        assert!((cert.min_eigenvalue - 0.5).abs() < 1e-10);
    }

    #[test]
    fn epsilon_outside_range_rejected() {
        let r = certify_spc(&GaugeModel::thickened(1.5), &SpcOptions::default());
        assert!(matches!(r, Err(Error::InvalidParameter { name: "epsilon", .. })));
    }

    #[test]
    fn boundary_samples_lie_on_boundary() {
        let mut rng = sampling::stream(3, 3);
        for m in [GaugeModel::thickened(0.1), GaugeModel::heisenberg(0.2), GaugeModel::abelian(2, 0.5)] {
            for _ in 0..100 {
                let p = sample_boundary_point(&m, &mut rng);
                assert!(m.defining(&p).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn tangent_basis_is_orthonormal_and_tangent() {
        let g = DVector::from_column_slice(&[c(0.3, -0.2), c(0.0, 1.0), c(-0.5, 0.1)]);
        let q = tangent_basis(&g);
        assert_eq!(q.ncols(), 2);
        assert!((q.adjoint() * &q - DMatrix::identity(2, 2)).camax() < 1e-14);
        for k in 0..2 {
            let s: C64 = g.iter().zip(q.column(k).iter()).map(|(a, b)| a * b).sum();
            assert!(s.norm() < 1e-14);
        }
    }

    #[test]
    fn linear_case_d_hat_is_one() {
        // ρ = Im z − ε·… : the abelian model with b dropped has f = a·w, |a| = 1
        let m = GaugeModel::abelian(1, 1.0);
        let x = DVector::from_column_slice(&[c(0.0, 1.0)]);
        let mut f = LeviPolynomial::new(&m, &x).unwrap();
        f.b[(0, 0)] = c(0.0, 0.0);
        let k = bound_constants(&f, 0.1, 2000, 1).unwrap();
        assert!((k.d_hat - 1.0).abs() < 1e-12);
    }
}
