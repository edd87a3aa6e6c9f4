//! Integrability of `χ f^{−τ}` on the tube and along group orbits.
//!
//! Both studies split the integral into dyadic shells around the singular
//! set and watch the shell contributions: geometric decay means the integral
//! converges, flat or growing shells mean it diverges.
//!
//! Tube integrals use anisotropic shells in `q(w) = |w_ν| + |w'|²` (`ν` the
//! normal coordinate), for which `|f| ≍ q` on the domain. Shell `j` is the
//! image of shell `0` under `(w_ν, w') ↦ (2^{−j} w_ν, 2^{−j/2} w')`, whose
//! real Jacobian is `2^{−j(n+1)}`; shell `j` therefore scales like
//! `2^{j(τp − n − 1)}`.

use std::f64::consts::PI;

use nalgebra::DVector;
use serde::Serialize;

use super::{Integrability, RefinementStudy, SingularSetup};
use crate::error::{invalid, Result};
use crate::gauge::{GaugeKind, TubePoint};
use crate::heisenberg::{factorize, GroupElement, C64};
use crate::quadrature::{adaptive, monte_carlo_vec, QuadratureSpec};
use crate::sampling;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LpRow {
    pub tau: f64,
    pub study: RefinementStudy,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LpSweepReport {
    pub p: f64,
    /// Complex dimension of the chart.
    pub dim: usize,
    /// Shell `j` is `{Q0·2^{−j−1} < q ≤ Q0·2^{−j}}`.
    pub q0: f64,
    pub samples_per_shell: usize,
    pub rows: Vec<LpRow>,
}

impl LpSweepReport {
    pub fn verdict(&self, tau: f64) -> Option<Integrability> {
        self.rows.iter().find(|r| r.tau == tau).map(|r| r.study.verdict)
    }
}

fn log_volume_ball(dim: usize) -> f64 {
    // ln(π^{d/2} / Γ(d/2 + 1)) for even and odd d
    let half = dim as f64 / 2.0;
    let mut ln_gamma = 0.0;
    let mut x = half;
    while x > 0.25 {
        ln_gamma += x.ln();
        x -= 1.0;
    }
    if x < -0.25 {
        ln_gamma += 0.5 * PI.ln();
    }
    half * PI.ln() - ln_gamma
}

/// `∫_{M ∩ ball} |χ f^{−τ}|^p dV` for each `τ` at `levels` refinement levels.
///
/// Every shell, and the outer region `{q > Q0}`, gets `spec.samples`
/// Monte-Carlo samples shared by all `τ`.
pub fn lp_threshold_sweep(
    setup: &SingularSetup,
    taus: &[f64],
    p: f64,
    levels: usize,
    spec: &QuadratureSpec,
) -> Result<LpSweepReport> {
    if !(p >= 1.0) {
        return Err(invalid("p", "must be at least 1"));
    }
    if taus.iter().any(|t| !(*t >= 0.0)) {
        return Err(invalid("tau", "must be nonnegative"));
    }
    if levels < 2 {
        return Err(invalid("levels", "need at least two refinement levels"));
    }
    if spec.samples < 2 {
        return Err(invalid("samples", "Monte-Carlo needs at least two samples"));
    }
    let n = setup.dim();
    let nu = setup.normal_index;
    let x = setup.poly.base.clone();
    let model = *setup.model();
    let r = setup.r_out();
    let q0 = r * r;
    let q = |w: &[C64]| {
        w.iter()
            .enumerate()
            .map(|(k, c)| if k == nu { c.norm() } else { c.norm_sqr() })
            .sum::<f64>()
    };
    let m = taus.len();
    let mut z = DVector::from_element(n, C64::new(0.0, 0.0));
    let mut w = vec![C64::new(0.0, 0.0); n];

    let accumulate = |z: &DVector<C64>, weight: f64, out: &mut [f64]| -> Result<()> {
        if model.defining(z) >= 0.0 {
            return Ok(());
        }
        for (i, &tau) in taus.iter().enumerate() {
            out[i] = weight * setup.abs_power(z.as_slice(), tau, p)?;
        }
        Ok(())
    };

    let ball_volume = (log_volume_ball(2 * n) + (2 * n) as f64 * r.ln()).exp();
    let outer = monte_carlo_vec(spec.samples, spec.seed, 0x0, m, |rng, out| {
        let u = sampling::unit_ball(rng, 2 * n);
        for k in 0..n {
            w[k] = C64::new(r * u[2 * k], r * u[2 * k + 1]);
            z[k] = x[k] + w[k];
        }
        if q(&w) <= q0 {
            return Ok(());
        }
        accumulate(&z, ball_volume, out)
    })?;

    let sq0 = q0.sqrt();
    let box_volume = (2.0 * q0).powi(2) * (2.0 * sq0).powi(2 * (n as i32 - 1));
    let mut shells: Vec<Vec<(f64, f64)>> = vec![Vec::with_capacity(levels); m];
    for j in 0..levels {
        let d2 = 0.5f64.powi(j as i32);
        let d1 = d2.sqrt();
        let weight = box_volume * 0.5f64.powf(j as f64 * (n + 1) as f64);
        let est = monte_carlo_vec(spec.samples, spec.seed, 1 + j as u64, m, |rng, out| {
            for k in 0..n {
                let h = if k == nu { q0 } else { sq0 };
                w[k] = C64::new(sampling::uniform(rng, -h, h), sampling::uniform(rng, -h, h));
            }
            let qv = q(&w);
            if !(qv > 0.5 * q0 && qv <= q0) {
                return Ok(());
            }
            for k in 0..n {
                let s = if k == nu { d2 } else { d1 };
                z[k] = x[k] + w[k] * s;
            }
            accumulate(&z, weight, out)
        })?;
        for i in 0..m {
            shells[i].push((est[i].value, est[i].error));
        }
    }

    let rows = taus
        .iter()
        .enumerate()
        .map(|(i, &tau)| LpRow {
            tau,
            study: RefinementStudy::from_shells((outer[i].value, outer[i].error), &shells[i]),
        })
        .collect();
    Ok(LpSweepReport {
        p,
        dim: n,
        q0,
        samples_per_shell: spec.samples,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct L1Report {
    pub tau: f64,
    /// Center of the radial shells in the reduced group variable.
    pub center: GroupElement,
    pub radius: f64,
    pub study: RefinementStudy,
    pub flagged: bool,
}

/// `∫_G |χ f^{−τ}|(ξ·t) dt` on the thickened tube.
///
/// Writing `ξ = (z0, exp(iΘ)·g)` and substituting `h = g·t` (Haar measure is
/// invariant), the integrand is supported in the Euclidean ball of radius
/// `r_out` about `c = Re x + (0, 0, θ1θ2/2)`; that ball is split into dyadic
/// radial shells about `c`, each integrated adaptively in spherical
/// coordinates. On the singular orbit `ξ ∈ x·G` the singularity sits at `c`.
pub fn l1_group_norm(
    setup: &SingularSetup,
    xi: &TubePoint,
    tau: f64,
    levels: usize,
    spec: &QuadratureSpec,
) -> Result<L1Report> {
    if setup.model().kind != GaugeKind::Thickened {
        return Err(invalid("model", "orbit integrals need the thickened tube"));
    }
    if !(tau >= 0.0) {
        return Err(invalid("tau", "must be nonnegative"));
    }
    if levels < 2 {
        return Err(invalid("levels", "need at least two refinement levels"));
    }
    let (theta, _) = factorize(&xi.z)?;
    let section = TubePoint::new(xi.z0, theta.exp_i());
    let x = &setup.poly.base;
    let c = GroupElement::new(x[1].re, x[2].re, x[3].re + 0.5 * theta.theta1 * theta.theta2);
    let radius = setup.r_out();
    let spec = QuadratureSpec {
        mode: crate::quadrature::Mode::Adaptive,
        ..*spec
    };
    let mut failure = None;
    let mut flagged = false;
    let mut shells = Vec::with_capacity(levels);
    for j in 0..levels {
        let hi = radius * 0.5f64.powi(j as i32);
        let integrand = |v: &[f64]| {
            let (r, th, ph) = (v[0], v[1], v[2]);
            let (st, ct) = th.sin_cos();
            let (sp, cp) = ph.sin_cos();
            let h = GroupElement::new(c.t1 + r * st * cp, c.t2 + r * st * sp, c.t3 + r * ct);
            let p = section.act(&h);
            match setup.value(&[p.z0, p.z.z1, p.z.z2, p.z.z3], tau) {
                Ok(u) => u.norm() * r * r * st,
                Err(e) => {
                    failure.get_or_insert(e);
                    0.0
                }
            }
        };
        let est = adaptive(integrand, &[0.5 * hi, 0.0, 0.0], &[hi, PI, 2.0 * PI], &spec)?;
        if let Some(e) = failure.take() {
            return Err(e);
        }
        flagged |= est.flagged;
        shells.push((est.value, est.error));
    }
    Ok(L1Report {
        tau,
        center: c,
        radius,
        study: RefinementStudy::from_shells((0.0, 0.0), &shells),
        flagged,
    })
}
