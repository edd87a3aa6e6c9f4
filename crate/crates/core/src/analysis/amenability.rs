//! Convolution blow-up along the inward normal path.
//!
//! `F(s) = R_Δ(χ f^{−τ})(path(s))` is evaluated on the dyadic grid
//! `s_i = s*(1 − 2^{−i})` approaching the boundary height `s*`. Its `k`-th
//! derivative is taken by a central stencil with step `(s* − s_i)/8`, and
//! `|F^{(k)}(s_i)|` is fitted against `σ_i = |f(path(s_i), x)|` on log-log
//! axes.

use std::cell::RefCell;

use serde::Serialize;

use super::SingularSetup;
use crate::error::{invalid, Result};
use crate::fit::power_law_fit;
use crate::gauge::{GaugeKind, TubePoint};
use crate::heisenberg::{GroupElement, C64};
use crate::quadrature::{convolve_about, model_integral_sigma_derivative, ConvolutionKernel, QuadratureSpec};

/// Minimum number of consecutive growth steps for a blow-up verdict.
pub const MIN_GROWTH_STEPS: usize = 4;
/// Minimum `R²` of the log-log fit for a blow-up verdict.
pub const MIN_R_SQUARED: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlowupVerdict {
    Blowup,
    Bounded,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlowupReport {
    pub tau: f64,
    pub k: u32,
    pub s: Vec<f64>,
    pub sigma: Vec<f64>,
    pub step: Vec<f64>,
    pub derivative: Vec<f64>,
    /// Largest quadrature error estimate among the stencil evaluations at
    /// each path point.
    pub quadrature_error: Vec<f64>,
    /// `Σ|w_j|·err_j / h^k`: bound on the quadrature part of the stencil error.
    pub derivative_error: Vec<f64>,
    /// Fitted exponent of `|F^{(k)}|` against `σ`.
    pub exponent: f64,
    pub r_squared: f64,
    /// Consecutive growth steps ending at the deepest path point.
    pub growth_steps: usize,
    /// The same fit for the radial model integral at the same `σ`.
    pub model_exponent: f64,
    pub verdict: BlowupVerdict,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AmenabilityOptions {
    pub tau: f64,
    pub k: u32,
    /// Dyadic path levels `i`, inclusive.
    pub first_level: u32,
    pub last_level: u32,
    pub kernel: ConvolutionKernel,
}

impl AmenabilityOptions {
    /// Unit-mass bump kernel of radius `r_out`, centered slightly off the
    /// identity so the integrand has no rotational symmetry.
    pub fn standard(setup: &SingularSetup, tau: f64, k: u32) -> Result<Self> {
        let r = setup.r_out();
        let center = GroupElement::new(0.15 * r, -0.1 * r, 0.05 * r);
        Ok(Self {
            tau,
            k,
            first_level: 13,
            last_level: 20,
            kernel: ConvolutionKernel::bump(center, r, 1.0)?.normalized(),
        })
    }
}

/// Central-difference stencil `(offsets in units of h, weights, h-power)`.
fn stencil(k: u32) -> Result<(&'static [f64], &'static [f64], i32)> {
    Ok(match k {
        0 => (&[0.0], &[1.0], 0),
        1 => (&[1.0, -1.0], &[0.5, -0.5], 1),
        2 => (&[1.0, 0.0, -1.0], &[1.0, -2.0, 1.0], 2),
        3 => (&[2.0, 1.0, -1.0, -2.0], &[0.5, -1.0, 1.0, -0.5], 3),
        4 => (&[2.0, 1.0, 0.0, -1.0, -2.0], &[1.0, -4.0, 6.0, -4.0, 1.0], 4),
        _ => return Err(invalid("k", "derivative order must be at most 4")),
    })
}

fn longest_final_growth(values: &[f64]) -> usize {
    values.windows(2).rev().take_while(|w| w[1] > w[0]).count()
}

/// Classify a derivative sequence by its log-log fit against `σ`.
pub fn classify_blowup(exponent: f64, r_squared: f64, growth_steps: usize) -> BlowupVerdict {
    if growth_steps >= MIN_GROWTH_STEPS && r_squared >= MIN_R_SQUARED && exponent <= -0.1 {
        BlowupVerdict::Blowup
    } else if exponent >= -0.1 {
        BlowupVerdict::Bounded
    } else {
        BlowupVerdict::Inconclusive
    }
}

/// Run the convolution campaign on the thickened tube.
pub fn amenability_check(setup: &SingularSetup, opts: &AmenabilityOptions, spec: &QuadratureSpec) -> Result<BlowupReport> {
    if setup.model().kind != GaugeKind::Thickened {
        return Err(invalid("model", "convolution along group orbits needs the thickened tube"));
    }
    if !(opts.tau > 0.0) {
        return Err(invalid("tau", "must be positive"));
    }
    if opts.last_level < opts.first_level + 2 {
        return Err(invalid("levels", "need at least three path levels"));
    }
    let (offsets, weights, power) = stencil(opts.k)?;
    let top = setup.boundary_height();
    let failure = RefCell::new(None);
    let u = |p: &TubePoint| match setup.value(&[p.z0, p.z.z1, p.z.z2, p.z.z3], opts.tau) {
        Ok(v) => v,
        Err(e) => {
            failure.borrow_mut().get_or_insert(e);
            C64::new(0.0, 0.0)
        }
    };
    let mut report = BlowupReport {
        tau: opts.tau,
        k: opts.k,
        s: vec![],
        sigma: vec![],
        step: vec![],
        derivative: vec![],
        quadrature_error: vec![],
        derivative_error: vec![],
        exponent: f64::NAN,
        r_squared: f64::NAN,
        growth_steps: 0,
        model_exponent: f64::NAN,
        verdict: BlowupVerdict::Inconclusive,
        flagged: false,
    };
    for i in opts.first_level..=opts.last_level {
        let gap = top * 0.5f64.powi(i as i32);
        let s = top - gap;
        let h = gap / 8.0;
        let mut d = C64::new(0.0, 0.0);
        let mut err = 0.0f64;
        let mut bound = 0.0;
        for (&o, &wgt) in offsets.iter().zip(weights) {
            let z = TubePoint::from_chart(&setup.path_point(s + o * h));
            let est = convolve_about(&opts.kernel, u, &z, &GroupElement::IDENTITY, spec)?;
            report.flagged |= est.flagged;
            err = err.max(est.error);
            bound += wgt.abs() * est.error;
            d += est.value * wgt;
        }
        report.s.push(s);
        report.sigma.push(setup.path_sigma(s));
        report.step.push(h);
        report.derivative.push(d.norm() / h.powi(power));
        report.quadrature_error.push(err);
        report.derivative_error.push(bound / h.powi(power));
    }
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    if let Some(fit) = power_law_fit(&report.sigma, &report.derivative) {
        report.exponent = fit.slope;
        report.r_squared = fit.r_squared;
    }
    report.growth_steps = longest_final_growth(&report.derivative);
    report.verdict = classify_blowup(report.exponent, report.r_squared, report.growth_steps);

    let model_spec = QuadratureSpec::adaptive(1e-300, 1e-10);
    let model: Vec<f64> = report
        .sigma
        .iter()
        .map(|&sg| model_integral_sigma_derivative(sg, 3, opts.tau, 1.0, opts.k, &model_spec).map(|e| e.value))
        .collect::<Result<_>>()?;
    if let Some(fit) = power_law_fit(&report.sigma, &model) {
        report.model_exponent = fit.slope;
    }
    Ok(report)
}
