//! Integration engine.
//!
//! Two modes share one [`QuadratureSpec`]:
//!
//! * adaptive: global adaptive bisection over boxes with a tensor-product
//!   Gauss–Kronrod rule (G7/K15 in one dimension, G3/K7 otherwise). Each
//!   region carries, per axis, the difference between the full Kronrod product
//!   and the product with that axis reduced to its embedded Gauss rule; the
//!   sum is the region's error estimate and the largest term picks the
//!   bisection axis.
//! * Monte-Carlo: mean ± standard error over seeded chunked streams.
//!
//! Neither mode regularizes singular integrands. When the budget runs out
//! before the tolerance is met the estimate is returned with `flagged` set.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::gauge::TubePoint;
use crate::heisenberg::{AlgebraElement, CoordBox, GroupElement, C64};
use crate::sampling;

pub trait Value: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> {
    fn zero() -> Self;
    fn magnitude(&self) -> f64;
}

impl Value for f64 {
    fn zero() -> Self {
        0.0
    }
    fn magnitude(&self) -> f64 {
        self.abs()
    }
}

impl Value for C64 {
    fn zero() -> Self {
        C64::new(0.0, 0.0)
    }
    fn magnitude(&self) -> f64 {
        self.norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Adaptive,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub mode: Mode,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
    pub samples: usize,
    pub seed: u64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            mode: Mode::Adaptive,
            abs_tol: 1e-8,
            rel_tol: 1e-6,
            max_subdivisions: 1 << 16,
            samples: 1_000_000,
            seed: 0,
        }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl QuadratureSpec {
    pub fn monte_carlo(samples: usize, seed: u64) -> Self {
        Self {
            mode: Mode::MonteCarlo,
            samples,
            seed,
            ..Self::default()
        }
    }

    pub fn adaptive(abs_tol: f64, rel_tol: f64) -> Self {
        Self {
            mode: Mode::Adaptive,
            abs_tol,
            rel_tol,
            ..Self::default()
        }
    }

    /// Same spec with an independent seed derived from `tag`.
    pub fn derive(&self, tag: u64) -> Self {
        Self {
            seed: splitmix(self.seed ^ splitmix(tag)),
            ..*self
        }
    }

    pub fn with_samples(&self, samples: usize) -> Self {
        Self { samples, ..*self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0) || !(self.rel_tol > 0.0) {
            return Err(invalid("tolerance", "abs_tol and rel_tol must be positive"));
        }
        if self.max_subdivisions == 0 {
            return Err(invalid("max_subdivisions", "must be positive"));
        }
        if self.mode == Mode::MonteCarlo && self.samples < 2 {
            return Err(invalid("samples", "Monte-Carlo needs at least two samples"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate<V> {
    pub value: V,
    /// Adaptive: summed local error estimates. Monte-Carlo: standard error.
    pub error: f64,
    pub evaluations: usize,
    /// Budget exhausted before the tolerance was met.
    pub flagged: bool,
}

impl<V: Value> Estimate<V> {
    pub fn map<W>(self, f: impl FnOnce(V) -> W) -> Estimate<W> {
        Estimate {
            value: f(self.value),
            error: self.error,
            evaluations: self.evaluations,
            flagged: self.flagged,
        }
    }
}

impl Estimate<f64> {
    /// Number of combined standard errors separating two estimates.
    pub fn z_score(&self, other: &Estimate<f64>) -> f64 {
        let se = (self.error * self.error + other.error * other.error).sqrt();
        (self.value - other.value).abs() / se.max(f64::MIN_POSITIVE)
    }
}

struct GaussKronrod {
    nodes: &'static [f64],
    kronrod: &'static [f64],
    gauss: &'static [f64],
}

// 15-point Kronrod extension of the 7-point Gauss rule; gauss weights sit on
// the odd-indexed nodes.
const GK15_NODES: [f64; 15] = [
    -0.991_455_371_120_812_6, -0.949_107_912_342_758_5, -0.864_864_423_359_769_1, -0.741_531_185_599_394_4,
    -0.586_087_235_467_691_1, -0.405_845_151_377_397_2, -0.207_784_955_007_898_5, 0.0, 0.207_784_955_007_898_5,
    0.405_845_151_377_397_2, 0.586_087_235_467_691_1, 0.741_531_185_599_394_4, 0.864_864_423_359_769_1,
    0.949_107_912_342_758_5, 0.991_455_371_120_812_6,
];
const GK15_KRONROD: [f64; 15] = [
    0.022_935_322_010_529_22, 0.063_092_092_629_978_55, 0.104_790_010_322_250_18, 0.140_653_259_715_525_92,
    0.169_004_726_639_267_9, 0.190_350_578_064_785_4, 0.204_432_940_075_298_9, 0.209_482_141_084_727_83,
    0.204_432_940_075_298_9, 0.190_350_578_064_785_4, 0.169_004_726_639_267_9, 0.140_653_259_715_525_92,
    0.104_790_010_322_250_18, 0.063_092_092_629_978_55, 0.022_935_322_010_529_22,
];
const GK15_GAUSS: [f64; 15] = [
    0.0, 0.129_484_966_168_869_7, 0.0, 0.279_705_391_489_276_7, 0.0, 0.381_830_050_505_118_9, 0.0,
    0.417_959_183_673_469_4, 0.0, 0.381_830_050_505_118_9, 0.0, 0.279_705_391_489_276_7, 0.0,
    0.129_484_966_168_869_7, 0.0,
];

const GK7_NODES: [f64; 7] = [
    -0.960_491_268_708_020_3, -0.774_596_669_241_483_4, -0.434_243_749_346_802_6, 0.0, 0.434_243_749_346_802_6,
    0.774_596_669_241_483_4, 0.960_491_268_708_020_3,
];
const GK7_KRONROD: [f64; 7] = [
    0.104_656_226_026_467_27, 0.268_488_089_868_333_44, 0.401_397_414_775_962_2, 0.450_916_538_658_474_14,
    0.401_397_414_775_962_2, 0.268_488_089_868_333_44, 0.104_656_226_026_467_27,
];
const GK7_GAUSS: [f64; 7] = [0.0, 5.0 / 9.0, 0.0, 8.0 / 9.0, 0.0, 5.0 / 9.0, 0.0];

static GK15: GaussKronrod = GaussKronrod {
    nodes: &GK15_NODES,
    kronrod: &GK15_KRONROD,
    gauss: &GK15_GAUSS,
};
static GK7: GaussKronrod = GaussKronrod {
    nodes: &GK7_NODES,
    kronrod: &GK7_KRONROD,
    gauss: &GK7_GAUSS,
};

/// Nodes and Kronrod weights of the 15-point rule on `[−1, 1]`.
pub fn gauss_kronrod_15() -> (&'static [f64], &'static [f64]) {
    (&GK15_NODES, &GK15_KRONROD)
}

struct Region<V> {
    lo: Vec<f64>,
    hi: Vec<f64>,
    value: V,
    error: f64,
    axis: usize,
    id: usize,
}

impl<V> PartialEq for Region<V> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<V> Eq for Region<V> {}
impl<V> PartialOrd for Region<V> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<V> Ord for Region<V> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error
            .total_cmp(&other.error)
            .then_with(|| other.id.cmp(&self.id))
    }
}

fn apply_rule<V: Value>(
    f: &mut impl FnMut(&[f64]) -> V,
    lo: &[f64],
    hi: &[f64],
    rule: &GaussKronrod,
    id: usize,
) -> Region<V> {
    let d = lo.len();
    let m = rule.nodes.len();
    let half: Vec<f64> = (0..d).map(|a| 0.5 * (hi[a] - lo[a])).collect();
    let mid: Vec<f64> = (0..d).map(|a| 0.5 * (hi[a] + lo[a])).collect();
    let jac: f64 = half.iter().product();
    let mut idx = vec![0usize; d];
    let mut x = vec![0.0; d];
    let mut full = V::zero();
    let mut reduced = vec![V::zero(); d];
    loop {
        for a in 0..d {
            x[a] = mid[a] + half[a] * rule.nodes[idx[a]];
        }
        let v = f(&x);
        let wk: f64 = idx.iter().map(|&i| rule.kronrod[i]).product();
        full = full + v * wk;
        for a in 0..d {
            let g = rule.gauss[idx[a]];
            if g != 0.0 {
                let others: f64 = (0..d).filter(|&b| b != a).map(|b| rule.kronrod[idx[b]]).product();
                reduced[a] = reduced[a] + v * (g * others);
            }
        }
        // odometer
        let mut a = 0;
        loop {
            if a == d {
                let axis_err: Vec<f64> = reduced.iter().map(|r| (full - *r).magnitude() * jac).collect();
                let error: f64 = axis_err.iter().sum();
                let axis = if error > 0.0 {
                    (0..d).max_by(|&i, &j| axis_err[i].total_cmp(&axis_err[j]).then(j.cmp(&i))).unwrap_or(0)
                } else {
                    (0..d).max_by(|&i, &j| half[i].total_cmp(&half[j]).then(j.cmp(&i))).unwrap_or(0)
                };
                return Region {
                    lo: lo.to_vec(),
                    hi: hi.to_vec(),
                    value: full * jac,
                    error,
                    axis,
                    id,
                };
            }
            idx[a] += 1;
            if idx[a] < m {
                break;
            }
            idx[a] = 0;
            a += 1;
        }
    }
}

/// Global adaptive cubature over the box `[lo, hi]`.
pub fn adaptive<V: Value>(
    mut f: impl FnMut(&[f64]) -> V,
    lo: &[f64],
    hi: &[f64],
    spec: &QuadratureSpec,
) -> Result<Estimate<V>> {
    spec.validate()?;
    let d = lo.len();
    if d == 0 || hi.len() != d {
        return Err(invalid("box", "bounds must be non-empty and of equal length"));
    }
    if (0..d).any(|a| !(hi[a] > lo[a]) || !lo[a].is_finite() || !hi[a].is_finite()) {
        return Err(invalid("box", "each side must be finite with lo < hi"));
    }
    let rule = if d == 1 { &GK15 } else { &GK7 };
    let per_region = rule.nodes.len().pow(d as u32);
    let mut next_id = 0usize;
    let first = apply_rule(&mut f, lo, hi, rule, next_id);
    next_id += 1;
    let mut total = first.value;
    let mut total_err = first.error;
    let mut heap = BinaryHeap::new();
    heap.push(first);
    let mut splits = 0usize;
    let mut evaluations = per_region;
    let tol = |v: V| spec.abs_tol.max(spec.rel_tol * v.magnitude());
    while total_err > tol(total) && splits < spec.max_subdivisions {
        let worst = heap.pop().expect("heap is never empty");
        let a = worst.axis;
        let cut = 0.5 * (worst.lo[a] + worst.hi[a]);
        let mut left_hi = worst.hi.clone();
        left_hi[a] = cut;
        let mut right_lo = worst.lo.clone();
        right_lo[a] = cut;
        let left = apply_rule(&mut f, &worst.lo, &left_hi, rule, next_id);
        let right = apply_rule(&mut f, &right_lo, &worst.hi, rule, next_id + 1);
        next_id += 2;
        evaluations += 2 * per_region;
        total = total - worst.value + left.value + right.value;
        total_err = total_err - worst.error + left.error + right.error;
        heap.push(left);
        heap.push(right);
        splits += 1;
    }
    let mut regions = heap.into_vec();
    regions.sort_by_key(|r| r.id);
    let value = regions.iter().fold(V::zero(), |acc, r| acc + r.value);
    let error: f64 = regions.iter().map(|r| r.error).sum();
    Ok(Estimate {
        value,
        error,
        evaluations,
        flagged: error > tol(value),
    })
}

/// Seeded Monte-Carlo mean of `draw`, which returns one weighted sample.
/// The error is the standard error of the mean.
pub fn monte_carlo<V: Value>(
    samples: usize,
    seed: u64,
    tag: u64,
    mut draw: impl FnMut(&mut ChaCha8Rng) -> V,
) -> Estimate<V> {
    let mut sum = V::zero();
    let mut sum_sq = 0.0;
    let chunks = samples.div_ceil(sampling::CHUNK);
    for chunk in 0..chunks {
        let n = sampling::CHUNK.min(samples - chunk * sampling::CHUNK);
        let mut rng = sampling::chunk_stream(seed, tag, chunk as u64);
        let mut part = V::zero();
        let mut part_sq = 0.0;
        for _ in 0..n {
            let v = draw(&mut rng);
            part = part + v;
            let m = v.magnitude();
            part_sq += m * m;
        }
        sum = sum + part;
        sum_sq += part_sq;
    }
    let n = samples.max(1) as f64;
    let mean = sum * (1.0 / n);
    let var = (sum_sq / n - mean.magnitude().powi(2)).max(0.0) * n / (n - 1.0).max(1.0);
    Estimate {
        value: mean,
        error: (var / n).sqrt(),
        evaluations: samples,
        flagged: false,
    }
}

/// Monte-Carlo means of `m` real integrands sharing the same samples.
/// `draw` fills one weighted sample per integrand; its first error aborts.
pub fn monte_carlo_vec(
    samples: usize,
    seed: u64,
    tag: u64,
    m: usize,
    mut draw: impl FnMut(&mut ChaCha8Rng, &mut [f64]) -> Result<()>,
) -> Result<Vec<Estimate<f64>>> {
    let mut sum = vec![0.0; m];
    let mut sum_sq = vec![0.0; m];
    let mut v = vec![0.0; m];
    let chunks = samples.div_ceil(sampling::CHUNK);
    for chunk in 0..chunks {
        let n = sampling::CHUNK.min(samples - chunk * sampling::CHUNK);
        let mut rng = sampling::chunk_stream(seed, tag, chunk as u64);
        let mut part = vec![0.0; m];
        let mut part_sq = vec![0.0; m];
        for _ in 0..n {
            v.iter_mut().for_each(|x| *x = 0.0);
            draw(&mut rng, &mut v)?;
            for i in 0..m {
                part[i] += v[i];
                part_sq[i] += v[i] * v[i];
            }
        }
        for i in 0..m {
            sum[i] += part[i];
            sum_sq[i] += part_sq[i];
        }
    }
    let n = samples.max(1) as f64;
    Ok((0..m)
        .map(|i| {
            let mean = sum[i] / n;
            let var = (sum_sq[i] / n - mean * mean).max(0.0) * n / (n - 1.0).max(1.0);
            Estimate {
                value: mean,
                error: (var / n).sqrt(),
                evaluations: samples,
                flagged: false,
            }
        })
        .collect())
}

/// Integrate over a box with either engine.
pub fn integrate_box<V: Value>(
    mut f: impl FnMut(&[f64]) -> V,
    lo: &[f64],
    hi: &[f64],
    spec: &QuadratureSpec,
) -> Result<Estimate<V>> {
    match spec.mode {
        Mode::Adaptive => adaptive(f, lo, hi, spec),
        Mode::MonteCarlo => {
            spec.validate()?;
            if lo.len() != hi.len() || (0..lo.len()).any(|a| !(hi[a] > lo[a])) {
                return Err(invalid("box", "each side must have lo < hi"));
            }
            let vol: f64 = (0..lo.len()).map(|a| hi[a] - lo[a]).product();
            let mut x = vec![0.0; lo.len()];
            let est = monte_carlo(spec.samples, spec.seed, 0xB0C5, |rng| {
                for a in 0..lo.len() {
                    x[a] = sampling::uniform(rng, lo[a], hi[a]);
                }
                f(&x)
            });
            Ok(Estimate {
                value: est.value * vol,
                error: est.error * vol,
                ..est
            })
        }
    }
}

/// Smooth profile equal to one on `[0, r_in]` and vanishing beyond `r_out`.
///
/// With `r_in = 0` it is the standard bump `exp(1 − 1/(1 − s²))`, `s = d/r_out`.
/// Otherwise the transition is the `C^∞` step built from `e^{−1/x}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothProfile {
    pub r_in: f64,
    pub r_out: f64,
}

pub fn bump(s: f64) -> f64 {
    if s.abs() < 1.0 {
        (1.0 - 1.0 / (1.0 - s * s)).exp()
    } else {
        0.0
    }
}

fn step_kernel(x: f64) -> f64 {
    if x > 0.0 {
        (-1.0 / x).exp()
    } else {
        0.0
    }
}

impl SmoothProfile {
    pub fn new(r_in: f64, r_out: f64) -> Result<Self> {
        if !(r_in >= 0.0 && r_out > r_in) {
            return Err(invalid("radii", "need 0 ≤ r_in < r_out"));
        }
        Ok(Self { r_in, r_out })
    }

    pub fn at(&self, d: f64) -> f64 {
        if self.r_in == 0.0 {
            return bump(d / self.r_out);
        }
        if d <= self.r_in {
            return 1.0;
        }
        if d >= self.r_out {
            return 0.0;
        }
        let u = (d - self.r_in) / (self.r_out - self.r_in);
        let a = step_kernel(1.0 - u);
        a / (a + step_kernel(u))
    }
}

/// Cut-off in chart coordinates: one near `center`, zero far away.
#[derive(Debug, Clone, PartialEq)]
pub struct CutoffFunction {
    pub center: crate::gauge::ChartPoint,
    pub profile: SmoothProfile,
    /// Wrap the first coordinate's real part to `[−½, ½)` (cylinder chart).
    pub periodic_first: bool,
}

impl CutoffFunction {
    pub fn new(center: crate::gauge::ChartPoint, r_in: f64, r_out: f64, periodic_first: bool) -> Result<Self> {
        Ok(Self {
            center,
            profile: SmoothProfile::new(r_in, r_out)?,
            periodic_first,
        })
    }

    pub fn distance(&self, p: &crate::gauge::ChartPoint) -> f64 {
        let mut d = p - &self.center;
        if self.periodic_first {
            d[0].re -= (d[0].re + 0.5).floor();
        }
        d.norm()
    }

    pub fn at(&self, p: &crate::gauge::ChartPoint) -> f64 {
        self.profile.at(self.distance(p))
    }

    /// Same as [`Self::at`] on a coordinate slice.
    pub fn at_slice(&self, p: &[C64]) -> f64 {
        let mut sq = 0.0;
        for (k, (z, c)) in p.iter().zip(self.center.iter()).enumerate() {
            let mut d = z - c;
            if k == 0 && self.periodic_first {
                d.re -= (d.re + 0.5).floor();
            }
            sq += d.norm_sqr();
        }
        self.profile.at(sq.sqrt())
    }
}

/// Smooth compactly supported kernel on the group, radial in coordinates
/// about `center`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvolutionKernel {
    pub center: GroupElement,
    pub profile: SmoothProfile,
    pub amplitude: f64,
}

impl ConvolutionKernel {
    pub fn bump(center: GroupElement, radius: f64, amplitude: f64) -> Result<Self> {
        Ok(Self {
            center,
            profile: SmoothProfile::new(0.0, radius)?,
            amplitude,
        })
    }

    pub fn at(&self, t: &GroupElement) -> f64 {
        let d = [t.t1 - self.center.t1, t.t2 - self.center.t2, t.t3 - self.center.t3];
        self.amplitude * self.profile.at((d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt())
    }

    pub fn support_box(&self) -> CoordBox {
        CoordBox::centered(self.center, self.profile.r_out)
    }

    fn radial_moment(&self, power: i32) -> f64 {
        let r_out = self.profile.r_out;
        let spec = QuadratureSpec::adaptive(1e-15, 1e-13);
        let est = adaptive(|x: &[f64]| self.profile.at(x[0]).powi(power) * x[0] * x[0], &[0.0], &[r_out], &spec)
            .expect("valid radial integral");
        4.0 * PI * est.value
    }

    /// `∫ Δ dt`.
    pub fn mass(&self) -> f64 {
        self.amplitude * self.radial_moment(1)
    }

    /// `‖Δ‖_{L²}`.
    pub fn l2_norm(&self) -> f64 {
        self.amplitude.abs() * self.radial_moment(2).sqrt()
    }

    /// Rescaled so that `∫ Δ dt = 1`.
    pub fn normalized(&self) -> Self {
        Self {
            amplitude: self.amplitude / self.mass(),
            ..*self
        }
    }
}

/// `(R_Δ u)(z) = ∫ Δ(t) u(z·t) dt`, integrated adaptively in spherical
/// coordinates about the kernel's center.
pub fn convolve<V: Value>(
    kernel: &ConvolutionKernel,
    u: impl Fn(&TubePoint) -> V,
    z: &TubePoint,
    spec: &QuadratureSpec,
) -> Result<Estimate<V>> {
    convolve_about(kernel, u, z, &kernel.center, spec)
}

/// Same integral in spherical coordinates about `focus`, over the ball about
/// `focus` that contains the kernel's support. Centering on a point
/// singularity of `t ↦ u(z·t)` makes it purely radial.
pub fn convolve_about<V: Value>(
    kernel: &ConvolutionKernel,
    u: impl Fn(&TubePoint) -> V,
    z: &TubePoint,
    focus: &GroupElement,
    spec: &QuadratureSpec,
) -> Result<Estimate<V>> {
    let c = *focus;
    let offset = ((c.t1 - kernel.center.t1).powi(2) + (c.t2 - kernel.center.t2).powi(2) + (c.t3 - kernel.center.t3).powi(2)).sqrt();
    let radius = offset + kernel.profile.r_out;
    let integrand = |x: &[f64]| {
        let (r, th, ph) = (x[0], x[1], x[2]);
        let (st, ct) = th.sin_cos();
        let (sp, cp) = ph.sin_cos();
        let t = GroupElement::new(c.t1 + r * st * cp, c.t2 + r * st * sp, c.t3 + r * ct);
        let w = kernel.at(&t);
        if w == 0.0 {
            return V::zero();
        }
        u(&z.act(&t)) * (w * r * r * st)
    };
    let lo = [0.0, 0.0, 0.0];
    let hi = [radius, PI, 2.0 * PI];
    match spec.mode {
        Mode::Adaptive => adaptive(integrand, &lo, &hi, spec),
        Mode::MonteCarlo => integrate_box(integrand, &lo, &hi, spec),
    }
}

/// Closed form of `∫₀^δ r² dr / (σ + 4r²)`: `δ/4 − (√σ/8)·arctan(2δ/√σ)`.
pub fn model_integral_closed_form(sigma: f64, delta: f64) -> f64 {
    if sigma == 0.0 {
        return delta / 4.0;
    }
    let s = sigma.sqrt();
    delta / 4.0 - s / 8.0 * (2.0 * delta / s).atan()
}

/// `∫₀^δ r^{n−1} dr / (σ + 4r²)^τ`.
///
/// Uses the closed form for `(n, τ) = (3, 1)`, the exact power law for
/// `σ = 0`, and adaptive quadrature otherwise.
pub fn model_integral(sigma: f64, n: u32, tau: f64, delta: f64, spec: &QuadratureSpec) -> Result<Estimate<f64>> {
    if !(delta > 0.0) {
        return Err(invalid("delta", "must be positive"));
    }
    if !(sigma >= 0.0) {
        return Err(invalid("sigma", "must be nonnegative"));
    }
    if n == 0 {
        return Err(invalid("n", "must be at least one"));
    }
    let nf = n as f64;
    if sigma == 0.0 {
        if nf - 2.0 * tau <= 0.0 {
            return Err(crate::error::Error::Divergent(format!(
                "σ = 0 with n = {n} ≤ 2τ = {}: r^{{n−1−2τ}} is not integrable at 0",
                2.0 * tau
            )));
        }
        let e = nf - 2.0 * tau;
        return Ok(Estimate {
            value: delta.powf(e) / (e * 4f64.powf(tau)),
            error: 0.0,
            evaluations: 0,
            flagged: false,
        });
    }
    if n == 3 && tau == 1.0 {
        return Ok(Estimate {
            value: model_integral_closed_form(sigma, delta),
            error: 0.0,
            evaluations: 0,
            flagged: false,
        });
    }
    model_integral_quadrature(sigma, n, tau, delta, spec)
}

/// Always by adaptive quadrature.
pub fn model_integral_quadrature(
    sigma: f64,
    n: u32,
    tau: f64,
    delta: f64,
    spec: &QuadratureSpec,
) -> Result<Estimate<f64>> {
    let spec = QuadratureSpec {
        mode: Mode::Adaptive,
        ..*spec
    };
    // geometric breakpoints resolve the scale √σ
    let mut edges = vec![0.0];
    let mut b = sigma.sqrt().min(delta) / 8.0;
    while b < delta {
        edges.push(b);
        b *= 4.0;
    }
    edges.push(delta);
    let mut total = Estimate {
        value: 0.0,
        error: 0.0,
        evaluations: 0,
        flagged: false,
    };
    let nm1 = n as i32 - 1;
    for w in edges.windows(2) {
        let piece = adaptive(
            |x: &[f64]| x[0].powi(nm1) / (sigma + 4.0 * x[0] * x[0]).powf(tau),
            &[w[0]],
            &[w[1]],
            &spec,
        )?;
        total.value += piece.value;
        total.error += piece.error;
        total.evaluations += piece.evaluations;
        total.flagged |= piece.flagged;
    }
    Ok(total)
}

/// `k`-th σ-derivative of the model integral by differentiating under the
/// integral sign: `(−1)^k (τ)_k ∫ r^{n−1} (σ + 4r²)^{−τ−k} dr`.
pub fn model_integral_sigma_derivative(
    sigma: f64,
    n: u32,
    tau: f64,
    delta: f64,
    k: u32,
    spec: &QuadratureSpec,
) -> Result<Estimate<f64>> {
    let pochhammer: f64 = (0..k).map(|j| tau + j as f64).product();
    let sign = if k.is_multiple_of(2) { 1.0 } else { -1.0 };
    let base = model_integral_quadrature(sigma, n, tau + k as f64, delta, spec)?;
    Ok(base.map(|v| sign * pochhammer * v))
}

/// Right translate `B·s` of a coordinate box; its Haar measure is `vol(B)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupRegion {
    pub domain: CoordBox,
    pub shift: GroupElement,
}

impl GroupRegion {
    pub fn boxed(domain: CoordBox) -> Self {
        Self {
            domain,
            shift: GroupElement::IDENTITY,
        }
    }

    pub fn translated(domain: CoordBox, shift: GroupElement) -> Self {
        Self { domain, shift }
    }

    pub fn volume(&self) -> f64 {
        self.domain.volume()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> GroupElement {
        self.domain.sample(rng) * self.shift
    }

    pub fn contains(&self, t: &GroupElement) -> bool {
        self.domain.contains(&(*t * self.shift.inverse()))
    }
}

/// Fiber coordinates `(x0, y0, θ1, θ2, θ3)` of a tube point; the tube is
/// `{y0² + |θ|² < ε}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiberPoint {
    pub x0: f64,
    pub y0: f64,
    pub theta: AlgebraElement,
}

impl FiberPoint {
    pub fn radius_sq(&self) -> f64 {
        self.y0 * self.y0 + self.theta.norm_sq()
    }

    pub fn with_group(&self, t: &GroupElement) -> TubePoint {
        TubePoint::new(C64::new(self.x0, self.y0), self.theta.exp_i() * *t)
    }
}

/// Volume of the solid-torus fiber `S¹ × B⁴(√ε)`: `π²ε²/2`.
pub fn fiber_volume(epsilon: f64) -> f64 {
    0.5 * PI * PI * epsilon * epsilon
}

/// Draw a fiber point uniformly from the bounding box of the solid torus.
pub fn sample_fiber_box<R: Rng + ?Sized>(epsilon: f64, rng: &mut R) -> FiberPoint {
    let r = epsilon.sqrt();
    FiberPoint {
        x0: rng.random::<f64>(),
        y0: sampling::uniform(rng, -r, r),
        theta: AlgebraElement::new(
            sampling::uniform(rng, -r, r),
            sampling::uniform(rng, -r, r),
            sampling::uniform(rng, -r, r),
        ),
    }
}

/// Bounding-box volume of the fiber, `1 · (2√ε)⁴`.
pub fn fiber_box_volume(epsilon: f64) -> f64 {
    16.0 * epsilon * epsilon
}

/// `∫ u dt ⊗ dQ` over `{t ∈ region} × {fiber with φ̃ < ε}` by Monte-Carlo,
/// the fiber sampled by rejection inside its bounding box.
pub fn tube_integral<V: Value>(
    u: impl Fn(&TubePoint) -> V,
    epsilon: f64,
    region: &GroupRegion,
    spec: &QuadratureSpec,
) -> Result<Estimate<V>> {
    if !(epsilon > 0.0) {
        return Err(invalid("epsilon", "tube radius must be positive"));
    }
    if spec.samples < 2 {
        return Err(invalid("samples", "Monte-Carlo needs at least two samples"));
    }
    let weight = region.volume() * fiber_box_volume(epsilon);
    let est = monte_carlo(spec.samples, spec.seed, 0x7BE, |rng| {
        let t = region.sample(rng);
        let q = sample_fiber_box(epsilon, rng);
        if q.radius_sq() >= epsilon {
            return V::zero();
        }
        u(&q.with_group(&t))
    });
    Ok(Estimate {
        value: est.value * weight,
        error: est.error * weight,
        ..est
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heisenberg::ComplexGroupElement;

    #[test]
    fn kronrod_tables_are_consistent() {
        for rule in [&GK15, &GK7] {
            assert!((rule.kronrod.iter().sum::<f64>() - 2.0).abs() < 1e-14);
            assert!((rule.gauss.iter().sum::<f64>() - 2.0).abs() < 1e-14);
            // Kronrod rule integrates x^k exactly up to high degree
            for k in [2, 4, 6, 8] {
                let q: f64 = rule.nodes.iter().zip(rule.kronrod).map(|(x, w)| w * x.powi(k)).sum();
                assert!((q - 2.0 / (k as f64 + 1.0)).abs() < 1e-14, "degree {k}");
            }
        }
    }

    #[test]
    fn constant_on_unit_cube() {
        let spec = QuadratureSpec::default();
        let e = integrate_box(|_: &[f64]| 1.0, &[0.0; 3], &[1.0; 3], &spec).unwrap();
        assert!((e.value - 1.0).abs() < 1e-14);
        assert!(e.error < 1e-14);
        let mc = integrate_box(|_: &[f64]| 1.0, &[0.0; 3], &[1.0; 3], &QuadratureSpec::monte_carlo(1000, 1)).unwrap();
        assert_eq!(mc.value, 1.0);
        assert_eq!(mc.error, 0.0);
    }

    #[test]
    fn polynomial_exactness() {
        let e = integrate_box(|x: &[f64]| x[0] * x[0], &[0.0], &[1.0], &QuadratureSpec::default()).unwrap();
        assert!((e.value - 1.0 / 3.0).abs() < 1e-15);
        assert!(!e.flagged);
    }

    #[test]
    fn budget_exhaustion_is_flagged() {
        let spec = QuadratureSpec {
            max_subdivisions: 3,
            abs_tol: 1e-14,
            rel_tol: 1e-14,
            ..QuadratureSpec::default()
        };
        let e = integrate_box(|x: &[f64]| 1.0 / x[0].sqrt(), &[0.0], &[1.0], &spec).unwrap();
        assert!(e.flagged);
        assert!(e.value.is_finite());
    }

    #[test]
    fn monte_carlo_is_deterministic() {
        let spec = QuadratureSpec::monte_carlo(50_000, 9);
        let f = |x: &[f64]| (x[0] * x[1]).sin() + x[2];
        let a = integrate_box(f, &[0.0; 3], &[1.0; 3], &spec).unwrap();
        let b = integrate_box(f, &[0.0; 3], &[1.0; 3], &spec).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(a.error.to_bits(), b.error.to_bits());
    }

    #[test]
    fn bump_is_smooth_and_compact() {
        assert_eq!(bump(0.0), 1.0);
        assert_eq!(bump(1.0), 0.0);
        assert!(bump(0.999) > 0.0 && bump(0.999) < 1e-200);
        let p = SmoothProfile::new(0.2, 0.5).unwrap();
        assert_eq!(p.at(0.1), 1.0);
        assert_eq!(p.at(0.6), 0.0);
        let mut prev = 1.0;
        for i in 0..=100 {
            let v = p.at(0.2 + 0.3 * i as f64 / 100.0);
            assert!(v <= prev + 1e-15);
            prev = v;
        }
        assert!(SmoothProfile::new(0.5, 0.2).is_err());
    }

    #[test]
    fn model_integral_examples() {
        let spec = QuadratureSpec::adaptive(1e-14, 1e-13);
        let v = model_integral(1.0, 3, 1.0, 1.0, &spec).unwrap().value;
        assert!((v - (0.25 - 2f64.atan() / 8.0)).abs() < 1e-15);
        assert!((v - 0.111_606_410_3).abs() < 1e-9);
        let q = model_integral_quadrature(1.0, 3, 1.0, 1.0, &spec).unwrap().value;
        assert!(((q - v) / v).abs() < 1e-12);
        assert!((model_integral(1e-14, 3, 1.0, 1.0, &spec).unwrap().value - 0.25).abs() < 1e-6);
        assert!(matches!(
            model_integral(0.0, 3, 2.0, 1.0, &spec),
            Err(crate::error::Error::Divergent(_))
        ));
    }

    #[test]
    fn convolution_of_constant_is_constant() {
        let k = ConvolutionKernel::bump(GroupElement::IDENTITY, 0.3, 1.0).unwrap().normalized();
        let z = TubePoint::new(C64::new(0.2, 0.1), ComplexGroupElement::IDENTITY);
        let e = convolve(&k, |_| C64::new(2.5, -1.0), &z, &QuadratureSpec::adaptive(1e-12, 1e-10)).unwrap();
        assert!((e.value - C64::new(2.5, -1.0)).norm() < 1e-9);
    }

    #[test]
    fn fiber_volume_by_rejection() {
        let eps = 0.1;
        let spec = QuadratureSpec::monte_carlo(400_000, 5);
        let e = tube_integral(|_| 1.0, eps, &GroupRegion::boxed(CoordBox::unit()), &spec).unwrap();
        assert!((e.value - fiber_volume(eps)).abs() < 4.0 * e.error);
    }
}
