//! Verification campaigns: integrability thresholds, convolution blow-up,
//! the right-regular representation, escaping sequences, Gram growth and
//! slice restriction.

mod amenability;
mod representation;
mod threshold;

pub use amenability::*;
pub use representation::*;
pub use threshold::*;

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::fit::linear_fit;
use crate::gauge::{ChartPoint, GaugeKind, GaugeModel};
use crate::heisenberg::C64;
use crate::levi::{canonical_base_point, negative_power, negative_real_part_check, LeviPolynomial};
use crate::quadrature::CutoffFunction;

/// Complex numbers as `[re, im]`.
pub(crate) fn serialize_complex<S: serde::Serializer>(c: &C64, s: S) -> std::result::Result<S::Ok, S::Error> {
    [c.re, c.im].serialize(s)
}

/// Relative change below which a refinement sequence counts as converged.
pub const CONVERGENCE_TOL: f64 = 1e-3;
/// Shell-growth slope (log₂ per level) at or above which a non-converged
/// sequence counts as divergent.
pub const DIVERGENCE_SLOPE: f64 = -0.1;

/// Levi polynomial at a boundary point together with a cut-off around it:
/// the ingredients of the local singular function `χ f^{−τ}`.
#[derive(Debug, Clone)]
pub struct SingularSetup {
    pub poly: LeviPolynomial,
    pub cutoff: CutoffFunction,
    /// Chart coordinate carrying the normal direction at the base point.
    pub normal_index: usize,
}

impl SingularSetup {
    /// `r_out` must be small enough that `Re f < 0` on the interior part of
    /// the cut-off's support; this is checked by sampling.
    pub fn new(model: &GaugeModel, base: ChartPoint, r_in: f64, r_out: f64) -> Result<Self> {
        let poly = LeviPolynomial::new(model, &base)?;
        let cutoff = CutoffFunction::new(base, r_in, r_out, model.kind == GaugeKind::Thickened)?;
        let normal_index = (0..poly.a.len())
            .max_by(|&i, &j| poly.a[i].norm().total_cmp(&poly.a[j].norm()).then(j.cmp(&i)))
            .ok_or_else(|| invalid("model", "empty chart"))?;
        let check = negative_real_part_check(&poly, r_out, 4096, 0x5E7)?;
        if !(check.max_re_f < 0.0) {
            return Err(Error::BranchDomain { re_f: check.max_re_f });
        }
        Ok(Self {
            poly,
            cutoff,
            normal_index,
        })
    }

    /// Canonical base point with `r_out = √ε/4`, `r_in = r_out/2`.
    pub fn canonical(model: &GaugeModel) -> Result<Self> {
        let r_out = 0.25 * model.epsilon.sqrt();
        Self::new(model, canonical_base_point(model), 0.5 * r_out, r_out)
    }

    pub fn model(&self) -> &GaugeModel {
        &self.poly.model
    }

    pub fn dim(&self) -> usize {
        self.poly.a.len()
    }

    pub fn r_out(&self) -> f64 {
        self.cutoff.profile.r_out
    }

    /// `χ f^{−τ}` at a chart point; zero off the cut-off's support.
    pub fn value(&self, z: &[C64], tau: f64) -> Result<C64> {
        let chi = self.cutoff.at_slice(z);
        if chi == 0.0 {
            return Ok(C64::new(0.0, 0.0));
        }
        Ok(negative_power(self.poly.eval_slice(z), tau)? * chi)
    }

    /// `|χ f^{−τ}|^p`.
    pub fn abs_power(&self, z: &[C64], tau: f64, p: f64) -> Result<f64> {
        let chi = self.cutoff.at_slice(z);
        if chi == 0.0 {
            return Ok(0.0);
        }
        let f = self.poly.eval_slice(z);
        let log = crate::levi::branch_log(f)?;
        Ok(chi.powf(p) * (-tau * p * log.re).exp())
    }

    /// Height of the base point along the inward normal path.
    pub fn boundary_height(&self) -> f64 {
        self.poly.base[self.normal_index].im
    }

    /// The path `s ↦ x + i(s − s*)e_normal`, inside the domain for `s < s*`.
    pub fn path_point(&self, s: f64) -> ChartPoint {
        let mut z: DVector<C64> = self.poly.base.clone();
        z[self.normal_index].im = s;
        z
    }

    /// `|f(path(s), x)|`.
    pub fn path_sigma(&self, s: f64) -> f64 {
        self.poly.eval(&self.path_point(s)).norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Integrability {
    Convergent,
    Divergent,
    Inconclusive,
}

/// One refinement level: the integral excluding a shrinking neighborhood of
/// the singular set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevelRow {
    pub level: usize,
    pub shell: f64,
    pub shell_error: f64,
    pub cumulative: f64,
    pub cumulative_error: f64,
    pub relative_change: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefinementStudy {
    pub outer: f64,
    pub outer_error: f64,
    pub levels: Vec<LevelRow>,
    /// Fitted `log₂` growth of the shell contributions per level.
    pub shell_slope: f64,
    pub verdict: Integrability,
}

impl RefinementStudy {
    /// Accumulate shells onto the outer part and classify.
    pub fn from_shells(outer: (f64, f64), shells: &[(f64, f64)]) -> Self {
        let mut cumulative = outer.0;
        let mut var = outer.1 * outer.1;
        let levels: Vec<LevelRow> = shells
            .iter()
            .enumerate()
            .map(|(level, &(shell, shell_error))| {
                cumulative += shell;
                var += shell_error * shell_error;
                LevelRow {
                    level,
                    shell,
                    shell_error,
                    cumulative,
                    cumulative_error: var.sqrt(),
                    relative_change: if cumulative != 0.0 { (shell / cumulative).abs() } else { 0.0 },
                }
            })
            .collect();
        let tail = &levels[levels.len() / 2..];
        let (xs, ys): (Vec<f64>, Vec<f64>) = tail
            .iter()
            .filter(|r| r.shell > 0.0)
            .map(|r| (r.level as f64, r.shell.log2()))
            .unzip();
        let shell_slope = if xs.len() >= 3 {
            linear_fit(&xs, &ys).map_or(f64::NAN, |f| f.slope)
        } else {
            f64::NAN
        };
        let n = levels.len();
        let converged = n >= 2 && levels[n - 2..].iter().all(|r| r.relative_change < CONVERGENCE_TOL);
        let verdict = if converged {
            Integrability::Convergent
        } else if shell_slope >= DIVERGENCE_SLOPE {
            Integrability::Divergent
        } else {
            Integrability::Inconclusive
        };
        Self {
            outer: outer.0,
            outer_error: outer.1,
            levels,
            shell_slope,
            verdict,
        }
    }

    pub fn value(&self) -> f64 {
        self.levels.last().map_or(self.outer, |r| r.cumulative)
    }

    pub fn error(&self) -> f64 {
        self.levels.last().map_or(self.outer_error, |r| r.cumulative_error)
    }
}
