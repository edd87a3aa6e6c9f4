//! The right-regular representation `(t_*h)(z) = h(z·t)` on `L²` of the
//! thickened tube, escaping sequences, Gram growth of translates, the
//! quotient section and slice restriction.
//!
//! Test functions are smooth bumps in the product coordinates
//! `(x0, y0, Θ, t)` of `z = (x0 + iy0, exp(iΘ)·t)`; translating by `s` only
//! moves `t ↦ t·s`, so supports of translates are known in closed form.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::gauge::{project_to_group, TubePoint};
use crate::heisenberg::{factorize, AlgebraElement, ComplexGroupElement, CoordBox, GroupElement, C64};
use crate::quadrature::{
    adaptive, bump, fiber_box_volume, gauss_kronrod_15, sample_fiber_box, tube_integral, GroupRegion, QuadratureSpec,
};
use crate::sampling;

/// `h(z) = A·e^{2πi m x0}·β(|t − c|/r)·β(√(y0² + |Θ|²)/r_f)` with the
/// standard bump `β`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TestBump {
    pub center: GroupElement,
    pub radius: f64,
    pub fiber_radius: f64,
    #[serde(serialize_with = "super::serialize_complex")]
    pub amplitude: C64,
    pub frequency: i32,
}

fn euclid(a: &GroupElement, b: &GroupElement) -> f64 {
    ((a.t1 - b.t1).powi(2) + (a.t2 - b.t2).powi(2) + (a.t3 - b.t3).powi(2)).sqrt()
}

impl TestBump {
    pub fn new(center: GroupElement, radius: f64, fiber_radius: f64) -> Self {
        Self {
            center,
            radius,
            fiber_radius,
            amplitude: C64::new(1.0, 0.0),
            frequency: 0,
        }
    }

    /// Random bump with center in `[−½, ½]³`, radius in `[0.2, 0.5]` and
    /// fiber radius in `[0.5, 0.9]·√ε`.
    pub fn random<R: Rng + ?Sized>(epsilon: f64, rng: &mut R) -> Self {
        Self {
            center: CoordBox::new([-0.5; 3], [0.5; 3]).sample(rng),
            radius: sampling::uniform(rng, 0.2, 0.5),
            fiber_radius: epsilon.sqrt() * sampling::uniform(rng, 0.5, 0.9),
            amplitude: C64::from_polar(sampling::uniform(rng, 0.5, 2.0), sampling::uniform(rng, 0.0, 2.0 * PI)),
            frequency: rng.random_range(0..3),
        }
    }

    pub fn eval(&self, p: &TubePoint) -> Result<C64> {
        let (theta, t) = factorize(&p.z)?;
        Ok(self.eval_parts(p.z0, &theta, &t))
    }

    fn eval_parts(&self, z0: C64, theta: &AlgebraElement, t: &GroupElement) -> C64 {
        let b = bump(euclid(t, &self.center) / self.radius);
        if b == 0.0 {
            return C64::new(0.0, 0.0);
        }
        let f = bump((z0.im * z0.im + theta.norm_sq()).sqrt() / self.fiber_radius);
        self.amplitude * C64::from_polar(b * f, 2.0 * PI * self.frequency as f64 * z0.re)
    }

    pub fn support_box(&self) -> CoordBox {
        CoordBox::centered(self.center, self.radius)
    }

    /// `‖h‖²` from the product structure: `|A|²·(4π∫β(s/r)²s²ds)·(2π²∫β(ρ/r_f)²ρ³dρ)`.
    pub fn norm_sq(&self) -> f64 {
        let spec = QuadratureSpec::adaptive(1e-300, 1e-12);
        let radial = |r: f64, pow: i32| {
            adaptive(|x: &[f64]| bump(x[0] / r).powi(2) * x[0].powi(pow), &[0.0], &[r], &spec)
                .expect("valid radial integral")
                .value
        };
        self.amplitude.norm_sqr() * 4.0 * PI * radial(self.radius, 2) * 2.0 * PI * PI * radial(self.fiber_radius, 3)
    }
}

/// Translate `t_*h` as a function on the tube.
pub fn translate<'a>(h: &'a TestBump, t: &'a GroupElement) -> impl Fn(&TubePoint) -> Result<C64> + 'a {
    move |p| h.eval(&p.act(t))
}

/// Bounding box of the supports of `h` and of `t_*h` for every `t` given.
fn common_box(h: &TestBump, ts: &[GroupElement]) -> CoordBox {
    let b = h.support_box();
    ts.iter()
        .fold(b, |acc, t| acc.union(&b.image_bounds(|g| g * t.inverse())))
}

fn enlarge(b: &CoordBox, factor: f64) -> CoordBox {
    let mut lo = b.lo;
    let mut hi = b.hi;
    for k in 0..3 {
        let pad = 0.5 * (factor - 1.0) * (hi[k] - lo[k]);
        lo[k] -= pad;
        hi[k] += pad;
    }
    CoordBox::new(lo, hi)
}

fn in_layer(b: &CoordBox, inner: &CoordBox, t: &GroupElement) -> bool {
    b.contains(t) && !inner.contains(t)
}

/// Squared `L²` norm over `{t ∈ region}` of a tube function, with factorization
/// failures surfaced as errors.
fn norm_sq(
    u: impl Fn(&TubePoint) -> Result<C64>,
    epsilon: f64,
    region: &GroupRegion,
    spec: &QuadratureSpec,
) -> Result<crate::quadrature::Estimate<f64>> {
    let failure = std::cell::RefCell::new(None);
    let est = tube_integral(
        |p| match u(p) {
            Ok(v) => v.norm_sqr(),
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                0.0
            }
        },
        epsilon,
        region,
        spec,
    )?;
    match failure.into_inner() {
        Some(e) => Err(e),
        None => Ok(est),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnitarityReport {
    pub translation: GroupElement,
    pub norm_sq: f64,
    pub norm_sq_error: f64,
    pub translated_norm_sq: f64,
    pub translated_norm_sq_error: f64,
    /// `|‖t_*h‖ − ‖h‖| / ‖h‖`.
    pub relative_discrepancy: f64,
    /// `|‖t_*h‖² − ‖h‖²|` in units of the combined standard error.
    pub z_score: f64,
    /// Share of `‖h‖²` found in the outer layer of the sampled box.
    pub tail_fraction: f64,
    pub warning: Option<String>,
}

impl UnitarityReport {
    pub fn within(&self, sigmas: f64) -> bool {
        self.z_score <= sigmas
    }
}

/// Compare `‖t_*h‖₂` with `‖h‖₂`, both estimated by independent Monte-Carlo
/// runs over a common coordinate box containing both supports.
pub fn unitarity_check(
    h: &TestBump,
    t: &GroupElement,
    epsilon: f64,
    tail_bound: f64,
    spec: &QuadratureSpec,
) -> Result<UnitarityReport> {
    if h.fiber_radius >= epsilon.sqrt() {
        return Err(invalid("fiber_radius", "bump must sit inside the tube"));
    }
    let inner = common_box(h, &[*t]);
    let outer = enlarge(&inner, 1.1);
    let region = GroupRegion::boxed(outer);
    let identity = *t == GroupElement::IDENTITY;
    let a = norm_sq(|p| h.eval(p), epsilon, &region, &spec.derive(1))?;
    let b = if identity {
        a
    } else {
        norm_sq(translate(h, t), epsilon, &region, &spec.derive(2))?
    };
    let tail = norm_sq(
        |p| {
            let g = project_to_group(p)?;
            Ok(if in_layer(&outer, &inner, &g) { h.eval(p)? } else { C64::new(0.0, 0.0) })
        },
        epsilon,
        &region,
        &spec.derive(1),
    )?;
    let tail_fraction = if a.value > 0.0 { tail.value / a.value } else { 0.0 };
    let combined = (a.error * a.error + b.error * b.error).sqrt();
    let diff = (b.value - a.value).abs();
    Ok(UnitarityReport {
        translation: *t,
        norm_sq: a.value,
        norm_sq_error: a.error,
        translated_norm_sq: b.value,
        translated_norm_sq_error: b.error,
        relative_discrepancy: if a.value > 0.0 { (b.value.sqrt() - a.value.sqrt()).abs() / a.value.sqrt() } else { 0.0 },
        z_score: if diff == 0.0 { 0.0 } else { diff / combined.max(f64::MIN_POSITIVE) },
        tail_fraction,
        warning: (tail_fraction > tail_bound)
            .then(|| format!("mass fraction {tail_fraction:e} near the sampled box boundary exceeds {tail_bound:e}")),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContinuitySweep {
    pub direction: GroupElement,
    pub scales: Vec<f64>,
    pub distances: Vec<f64>,
    pub errors: Vec<f64>,
    pub monotone: bool,
}

/// `‖t_k*h − h‖₂` for `t_k = 2^{−k}·v`, `k = 1..=steps`, all on common
/// samples.
pub fn continuity_sweep(
    h: &TestBump,
    direction: &GroupElement,
    steps: usize,
    epsilon: f64,
    spec: &QuadratureSpec,
) -> Result<ContinuitySweep> {
    if steps == 0 {
        return Err(invalid("steps", "must be positive"));
    }
    let scales: Vec<f64> = (1..=steps).map(|k| 0.5f64.powi(k as i32)).collect();
    let ts: Vec<GroupElement> = scales
        .iter()
        .map(|s| GroupElement::new(s * direction.t1, s * direction.t2, s * direction.t3))
        .collect();
    let region = GroupRegion::boxed(enlarge(&common_box(h, &ts), 1.1));
    let mut distances = Vec::with_capacity(steps);
    let mut errors = Vec::with_capacity(steps);
    for t in &ts {
        let est = norm_sq(|p| Ok(h.eval(&p.act(t))? - h.eval(p)?), epsilon, &region, spec)?;
        let d = est.value.sqrt();
        distances.push(d);
        errors.push(if d > 0.0 { est.error / (2.0 * d) } else { est.error.sqrt() });
    }
    let monotone = distances.windows(2).all(|w| w[1] < w[0]);
    Ok(ContinuitySweep {
        direction: *direction,
        scales,
        distances,
        errors,
        monotone,
    })
}

/// Lower bounds `floor_j = first·ratio^{j−1}` for the quasi-norms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FloorSchedule {
    pub first: f64,
    pub ratio: f64,
}

impl Default for FloorSchedule {
    fn default() -> Self {
        Self { first: 1.0, ratio: 2.0 }
    }
}

impl FloorSchedule {
    pub fn floor(&self, j: usize) -> f64 {
        self.first * self.ratio.powi(j as i32 - 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EscapingSequence {
    pub elements: Vec<GroupElement>,
    pub norms: Vec<f64>,
}

/// Unit quasi-norm direction number `j`: the angles walk the circle by the
/// golden angle and the vertical share oscillates.
fn unit_direction(j: usize) -> GroupElement {
    let alpha = j as f64 * PI * (3.0 - 5f64.sqrt());
    let beta = 0.9 * (1.3 * j as f64).sin() * PI / 2.0;
    // (c²)² + s² = 1 with c = √cos β, s = sin β
    let c = beta.cos().sqrt();
    GroupElement::new(c * alpha.cos(), c * alpha.sin(), beta.sin())
}

/// `t_j = δ_{λ_j}(u_j)` with `N(u_j) = 1`, `λ_j ≥ floor_j` and `λ_j`
/// strictly increasing, so `N(t_j) = λ_j → ∞`.
pub fn escape_sequence(m: usize, schedule: &FloorSchedule) -> Result<EscapingSequence> {
    if m == 0 {
        return Err(invalid("m", "must be at least one"));
    }
    if !(schedule.first > 0.0 && schedule.ratio > 1.0) {
        return Err(invalid("schedule", "need first > 0 and ratio > 1"));
    }
    let mut elements = Vec::with_capacity(m);
    let mut norms = Vec::with_capacity(m);
    let mut prev = 0.0f64;
    for j in 1..=m {
        let lambda = schedule.floor(j).max(prev * 1.01);
        let t = unit_direction(j).dilate(lambda);
        let n = t.quasi_norm();
        prev = n;
        elements.push(t);
        norms.push(n);
    }
    Ok(EscapingSequence { elements, norms })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeparationReport {
    pub radius: f64,
    pub samples: usize,
    /// Fraction of sampled `k ∈ K` with `k·t ∈ K`, per element.
    pub overlaps: Vec<f64>,
    pub witness: Option<usize>,
    pub witness_element: Option<GroupElement>,
    /// Largest overlap fraction seen before the witness (or overall).
    pub max_overlap_before: f64,
    /// Every element after the witness is also a witness.
    pub monotone_after_witness: bool,
}

/// Uniform sample of `K = {N(k) < R}` by rejection from its bounding box.
fn sample_quasi_ball<R: Rng + ?Sized>(radius: f64, rng: &mut R) -> GroupElement {
    let r2 = radius * radius;
    loop {
        let k = GroupElement::new(
            sampling::uniform(rng, -radius, radius),
            sampling::uniform(rng, -radius, radius),
            sampling::uniform(rng, -r2, r2),
        );
        if k.quasi_norm() < radius {
            return k;
        }
    }
}

/// Search `L` for an element `t` with `K ∩ K·t⁻¹ = ∅`, i.e. no sampled
/// `k ∈ K` with `k·t ∈ K`.
pub fn separation_witness(radius: f64, seq: &EscapingSequence, samples: usize, seed: u64) -> Result<SeparationReport> {
    if !(radius > 0.0) {
        return Err(invalid("radius", "must be positive"));
    }
    if samples == 0 {
        return Err(invalid("samples", "must be positive"));
    }
    let mut overlaps = Vec::with_capacity(seq.elements.len());
    for (j, t) in seq.elements.iter().enumerate() {
        let mut rng = sampling::stream(seed, 0x5E9 + j as u64);
        let hits = (0..samples)
            .filter(|_| (sample_quasi_ball(radius, &mut rng) * *t).quasi_norm() < radius)
            .count();
        overlaps.push(hits as f64 / samples as f64);
    }
    let witness = overlaps.iter().position(|&o| o == 0.0);
    let before = witness.unwrap_or(overlaps.len());
    Ok(SeparationReport {
        radius,
        samples,
        max_overlap_before: overlaps[..before].iter().cloned().fold(0.0, f64::max),
        monotone_after_witness: witness.is_some_and(|w| overlaps[w..].iter().all(|&o| o == 0.0)),
        witness_element: witness.map(|w| seq.elements[w]),
        witness,
        overlaps,
    })
}

/// Relative eigenvalue threshold for the numerical rank.
pub const RANK_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GramReport {
    pub m: usize,
    /// Row-major `[re, im]` entries.
    pub gram: Vec<Vec<[f64; 2]>>,
    /// Standard errors of the entries.
    pub gram_error: Vec<Vec<f64>>,
    /// Descending.
    pub eigenvalues: Vec<f64>,
    pub rank: usize,
    /// Smallest retained over largest eigenvalue.
    pub retained_ratio: f64,
    pub positive_semidefinite: bool,
}

/// Gram matrix `⟨t_i*h, t_j*h⟩` of the first `m` elements of `L`.
///
/// The group variable is drawn from the equal-weight mixture of the
/// translated supports `{g : g·t_i ∈ supp h}` and reweighted by the mixture
/// density, so every term `w·v vᴴ` is positive semidefinite.
pub fn gram_rank(h: &TestBump, seq: &EscapingSequence, m: usize, epsilon: f64, spec: &QuadratureSpec) -> Result<GramReport> {
    if m == 0 || m > seq.elements.len() {
        return Err(invalid("m", "must be between 1 and the sequence length"));
    }
    if spec.samples < 2 {
        return Err(invalid("samples", "Monte-Carlo needs at least two samples"));
    }
    let ts = &seq.elements[..m];
    let support = h.support_box();
    let regions: Vec<GroupRegion> = ts.iter().map(|t| GroupRegion::translated(support, t.inverse())).collect();
    let fiber_volume = fiber_box_volume(epsilon);
    let mut sum = DMatrix::<C64>::zeros(m, m);
    let mut sum_sq = DMatrix::<f64>::zeros(m, m);
    let mut v = vec![C64::new(0.0, 0.0); m];
    let chunks = spec.samples.div_ceil(sampling::CHUNK);
    for chunk in 0..chunks {
        let n = sampling::CHUNK.min(spec.samples - chunk * sampling::CHUNK);
        let mut rng = sampling::chunk_stream(spec.seed, 0x6A, chunk as u64);
        let mut part = DMatrix::<C64>::zeros(m, m);
        let mut part_sq = DMatrix::<f64>::zeros(m, m);
        for _ in 0..n {
            let pick = rng.random_range(0..m);
            let g = regions[pick].sample(&mut rng);
            let q = sample_fiber_box(epsilon, &mut rng);
            if q.radius_sq() >= epsilon {
                continue;
            }
            let covering = ts.iter().filter(|t| support.contains(&(g * **t))).count().max(1);
            let weight = m as f64 * support.volume() * fiber_volume / covering as f64;
            let p = q.with_group(&g);
            for (i, t) in ts.iter().enumerate() {
                v[i] = h.eval(&p.act(t))?;
            }
            for i in 0..m {
                for j in 0..m {
                    let x = v[i] * v[j].conj() * weight;
                    part[(i, j)] += x;
                    part_sq[(i, j)] += x.norm_sqr();
                }
            }
        }
        sum += part;
        sum_sq += part_sq;
    }
    let n = spec.samples as f64;
    let mean = sum / C64::from(n);
    let gram_error: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            (0..m)
                .map(|j| ((sum_sq[(i, j)] / n - mean[(i, j)].norm_sqr()).max(0.0) / (n - 1.0)).sqrt())
                .collect()
        })
        .collect();
    // symmetrize exactly before the eigen-solve
    let hermitian = (&mean + mean.adjoint()) * C64::from(0.5);
    let trace: f64 = (0..m).map(|i| hermitian[(i, i)].re).sum();
    let mut eigenvalues: Vec<f64> = SymmetricEigen::new(hermitian).eigenvalues.iter().cloned().collect();
    eigenvalues.sort_by(|a, b| b.total_cmp(a));
    let largest = eigenvalues[0];
    let rank = eigenvalues.iter().filter(|&&e| e > RANK_THRESHOLD * largest).count();
    Ok(GramReport {
        m,
        gram: (0..m).map(|i| (0..m).map(|j| [mean[(i, j)].re, mean[(i, j)].im]).collect()).collect(),
        gram_error,
        retained_ratio: if largest > 0.0 { eigenvalues[rank.max(1) - 1] / largest } else { 0.0 },
        positive_semidefinite: eigenvalues.iter().all(|&e| e >= -1e-10 * trace.abs()),
        eigenvalues,
        rank,
    })
}

/// Representatives `(x0 + iy0, exp(iΘ))` of the quotient `M̃/G`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuotientSection {
    pub epsilon: f64,
}

impl QuotientSection {
    pub fn section(&self, x0: f64, y0: f64, theta: &AlgebraElement) -> Result<TubePoint> {
        if !(y0 * y0 + theta.norm_sq() < self.epsilon) {
            return Err(invalid("fiber", "quotient coordinates outside the solid torus"));
        }
        Ok(TubePoint::new(C64::new(x0, y0), theta.exp_i()))
    }

    /// Quotient coordinates of a tube point (inverse of `section` on orbits).
    pub fn coordinates(&self, p: &TubePoint) -> Result<(f64, f64, AlgebraElement)> {
        let (theta, _) = factorize(&p.z)?;
        Ok((p.z0.re, p.z0.im, theta))
    }
}

/// Partial application `z' ↦ F(z0, z')`, defined on the unthickened tube of
/// level `ε` when `(Im z0)² + ε ≤ δ`.
pub fn restrict_slice<'a, F>(f: &'a F, z0: C64, epsilon: f64, delta: f64) -> Result<impl Fn(&ComplexGroupElement) -> C64 + 'a>
where
    F: Fn(&TubePoint) -> C64,
{
    if !(epsilon > 0.0) {
        return Err(invalid("epsilon", "must be positive"));
    }
    if !(z0.im * z0.im + epsilon <= delta) {
        return Err(invalid("z0", format!("(Im z0)² + ε = {} exceeds δ = {delta}", z0.im * z0.im + epsilon)));
    }
    Ok(move |z: &ComplexGroupElement| f(&TubePoint::new(z0, *z)))
}

/// `F(z0, z) = β(y0/r0)(1 + ½cos 2πm x0) · β(|t − c|/r) β(|Θ|/r_Θ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProductBump {
    pub y0_radius: f64,
    pub frequency: i32,
    pub center: GroupElement,
    pub radius: f64,
    pub theta_radius: f64,
}

impl ProductBump {
    pub fn zero_factor(&self, z0: C64) -> f64 {
        bump(z0.im / self.y0_radius) * (1.0 + 0.5 * (2.0 * PI * self.frequency as f64 * z0.re).cos())
    }

    pub fn eval(&self, p: &TubePoint) -> C64 {
        let g = self.zero_factor(p.z0);
        if g == 0.0 {
            return C64::new(0.0, 0.0);
        }
        match factorize(&p.z) {
            Ok((theta, t)) => {
                C64::from(g * bump(euclid(&t, &self.center) / self.radius) * bump(theta.norm_sq().sqrt() / self.theta_radius))
            }
            Err(_) => C64::new(f64::NAN, f64::NAN),
        }
    }

    pub fn support_box(&self) -> CoordBox {
        CoordBox::centered(self.center, self.radius)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FubiniReport {
    pub total: f64,
    pub total_error: f64,
    pub sliced: f64,
    pub sliced_error: f64,
    pub slices: usize,
    pub z_score: f64,
}

/// Compare `‖F‖²` over the thickened tube of level `δ` with the integral over
/// `z0` of the slice norms `‖F(z0, ·)‖²` on the tubes of level `δ − y0²`.
///
/// The `z0` integral uses the trapezoid rule in the periodic `x0` (8 nodes)
/// and four Gauss–Kronrod panels in `y0`; each slice norm is a Monte-Carlo
/// estimate with `spec.samples / slices` points, errors propagated through
/// the weights.
pub fn fubini_check(
    f: &impl Fn(&TubePoint) -> C64,
    delta: f64,
    region: &GroupRegion,
    spec: &QuadratureSpec,
) -> Result<FubiniReport> {
    if !(delta > 0.0) {
        return Err(invalid("delta", "must be positive"));
    }
    let total = tube_integral(|p| f(p).norm_sqr(), delta, region, &spec.derive(1))?;
    let (nodes, weights) = gauss_kronrod_15();
    let x_nodes = 8;
    let panels = 4;
    let ry = delta.sqrt();
    let panel = 2.0 * ry / panels as f64;
    let slices = x_nodes * panels * nodes.len();
    let per_slice = (spec.samples / slices).max(2);
    let (mut sliced, mut var) = (0.0, 0.0);
    let mut index = 0u64;
    for ip in 0..panels {
        let mid = -ry + (ip as f64 + 0.5) * panel;
        for (&node, &w) in nodes.iter().zip(weights) {
            let y0 = mid + 0.5 * panel * node;
            let wy = 0.5 * panel * w;
            // slice tube level
            let level = delta - y0 * y0;
            for ix in 0..x_nodes {
                let x0 = (ix as f64 + 0.5) / x_nodes as f64;
                let wx = 1.0 / x_nodes as f64;
                index += 1;
                if level <= 0.0 {
                    continue;
                }
                let slice = restrict_slice(f, C64::new(x0, y0), level, delta)?;
                let r = level.sqrt();
                let vol = region.volume() * 4.0 / 3.0 * PI * r.powi(3);
                let est = crate::quadrature::monte_carlo(per_slice, spec.seed, 0xF0B + index, |rng| {
                    let t = region.sample(rng);
                    let u = sampling::unit_ball(rng, 3);
                    let theta = AlgebraElement::new(r * u[0], r * u[1], r * u[2]);
                    slice(&(theta.exp_i() * t)).norm_sqr()
                });
                sliced += wx * wy * vol * est.value;
                var += (wx * wy * vol * est.error).powi(2);
            }
        }
    }
    let sliced_error = var.sqrt();
    let combined = (total.error.powi(2) + var).sqrt();
    Ok(FubiniReport {
        total: total.value,
        total_error: total.error,
        sliced,
        sliced_error,
        slices,
        z_score: (total.value - sliced).abs() / combined.max(f64::MIN_POSITIVE),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_directions_have_unit_quasi_norm() {
        for j in 1..50 {
            assert!((unit_direction(j).quasi_norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn escape_sequence_respects_floors() {
        let seq = escape_sequence(8, &FloorSchedule { first: 2.0, ratio: 2.0 }).unwrap();
        for (j, n) in seq.norms.iter().enumerate() {
            assert!(*n >= 2f64.powi(j as i32 + 1) * (1.0 - 1e-12));
        }
        assert!(seq.norms.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(escape_sequence(1, &FloorSchedule::default()).unwrap().elements.len(), 1);
        assert!(escape_sequence(0, &FloorSchedule::default()).is_err());
    }

    #[test]
    fn identity_is_never_a_witness() {
        let seq = EscapingSequence {
            elements: vec![GroupElement::IDENTITY],
            norms: vec![0.0],
        };
        let rep = separation_witness(1.0, &seq, 1000, 0).unwrap();
        assert_eq!(rep.witness, None);
        assert_eq!(rep.overlaps[0], 1.0);
    }

    #[test]
    fn section_projects_to_identity() {
        let s = QuotientSection { epsilon: 0.1 };
        let mut rng = sampling::stream(1, 1);
        for _ in 0..1000 {
            let u = sampling::unit_ball(&mut rng, 4);
            let r = 0.3;
            let p = s.section(rng.random(), r * u[0], &AlgebraElement::new(r * u[1], r * u[2], r * u[3])).unwrap();
            assert_eq!(project_to_group(&p).unwrap(), GroupElement::IDENTITY);
        }
    }

    #[test]
    fn slice_rejects_violated_constraint() {
        let f = |_: &TubePoint| C64::new(1.0, 0.0);
        assert!(restrict_slice(&f, C64::new(0.0, 0.3), 0.05, 0.1).is_err());
        let s = restrict_slice(&f, C64::new(0.0, 0.2), 0.05, 0.1).unwrap();
        assert_eq!(s(&ComplexGroupElement::IDENTITY), C64::new(1.0, 0.0));
    }

    #[test]
    fn bump_norm_matches_monte_carlo() {
        let h = TestBump::new(GroupElement::IDENTITY, 0.4, 0.25);
        let est = norm_sq(|p| h.eval(p), 0.1, &GroupRegion::boxed(h.support_box()), &QuadratureSpec::monte_carlo(200_000, 2)).unwrap();
        assert!((est.value - h.norm_sq()).abs() < 4.0 * est.error, "{} vs {}", est.value, h.norm_sq());
    }
}
