//! Campaign dispatch: one command, one campaign, one report.
//!
//! Every campaign is a pure function of the configuration; randomness comes
//! from seeded streams derived from `seed`.

use grauert::analysis::{
    amenability_check, continuity_sweep, escape_sequence, fubini_check, gram_rank, l1_group_norm,
    lp_threshold_sweep, separation_witness, unitarity_check, AmenabilityOptions, BlowupVerdict, FloorSchedule,
    Integrability, ProductBump, RefinementStudy, SingularSetup, TestBump,
};
use grauert::fit::power_law_fit;
use grauert::gauge::{phi, phi_tilde, project_to_group, TubePoint};
use grauert::heisenberg::{factorize, AlgebraElement, ComplexGroupElement, CoordBox, GroupElement, C64};
use grauert::levi::{bound_constants, canonical_base_point, certify_spc, negative_real_part_check, LeviPolynomial, SpcOptions};
use grauert::quadrature::{GroupRegion, QuadratureSpec};
use grauert::sampling;
use rand::Rng;
use serde_json::json;
use thiserror::Error;

use crate::config::{Command, ConfigError, Expectation, ModelChoice, RunConfig};
use crate::report::{Report, Table};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("no command given (set `command` in the config or pass --command)")]
    NoCommand,
    #[error("`{command}` runs on the thickened tube only, not on the {model} model")]
    Unsupported { command: Command, model: ModelChoice },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("campaign failed: {0}")]
    Campaign(#[from] grauert::Error),
}

/// Residual bound for the exact-algebra checks.
pub const ALGEBRA_TOL: f64 = 1e-12;
/// Bound on `|φ(Zt) − φ(Z)|`.
pub const INVARIANCE_TOL: f64 = 1e-10;
/// Minimum remainder exponent of the gauge minus its quadratic part.
pub const SQS_MIN_EXPONENT: f64 = 2.9;
/// Relative drift allowed for the Levi bound constants under sample doubling.
pub const BOUND_STABILITY: f64 = 0.2;
/// Unitarity discrepancies are accepted within this many standard errors.
pub const UNITARITY_SIGMAS: f64 = 3.0;
/// Smallest fitted exponent of `‖t_*h − h‖` against the translation scale.
pub const CONTINUITY_MIN_SLOPE: f64 = 0.5;
/// Smallest retained Gram eigenvalue relative to the largest.
pub const GRAM_RETAINED_MIN: f64 = 1e-3;
/// Fubini comparison bound in combined standard errors.
pub const FUBINI_SIGMAS: f64 = 3.0;

/// Execute the configured campaign.
pub fn run(cfg: &RunConfig) -> Result<Report, RunError> {
    cfg.validate()?;
    let command = cfg.command.ok_or(RunError::NoCommand)?;
    let mut report = Report::new(command, cfg);
    match command {
        Command::GaugeCheck => gauge_check(cfg, &mut report),
        Command::CertifySpc => spc(cfg, &mut report)?,
        Command::LeviBounds => levi_bounds(cfg, &mut report)?,
        Command::LpSweep => lp_sweep(cfg, &mut report)?,
        Command::L1Group => l1_group(cfg, &mut report)?,
        Command::Amenability => amenability(cfg, &mut report)?,
        Command::RepUnitarity => rep_unitarity(cfg, &mut report)?,
        Command::RepContinuity => rep_continuity(cfg, &mut report)?,
        Command::GramRank => gram(cfg, &mut report)?,
        Command::SliceFubini => slice_fubini(cfg, &mut report)?,
    }
    Ok(report)
}

fn thickened_only(cfg: &RunConfig, command: Command) -> Result<(), RunError> {
    match cfg.model {
        ModelChoice::Thickened => Ok(()),
        model => Err(RunError::Unsupported { command, model }),
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("campaign output is serializable")
}

// ---------------------------------------------------------------------------
// gauge-check

fn random_group<R: Rng + ?Sized>(rng: &mut R) -> GroupElement {
    GroupElement::new(
        sampling::uniform(rng, -3.0, 3.0),
        sampling::uniform(rng, -3.0, 3.0),
        sampling::uniform(rng, -3.0, 3.0),
    )
}

fn random_complex<R: Rng + ?Sized>(rng: &mut R) -> ComplexGroupElement {
    let mut part = || [0; 3].map(|_| sampling::uniform(rng, -3.0, 3.0));
    let x = part();
    let y = part();
    ComplexGroupElement::from_parts(x, y)
}

fn random_algebra<R: Rng + ?Sized>(rng: &mut R) -> AlgebraElement {
    AlgebraElement::new(
        sampling::uniform(rng, -3.0, 3.0),
        sampling::uniform(rng, -3.0, 3.0),
        sampling::uniform(rng, -3.0, 3.0),
    )
}

/// Largest residual of `check` over `cases` seeded draws.
fn max_residual<R: Rng>(rng: &mut R, cases: usize, mut check: impl FnMut(&mut R) -> f64) -> f64 {
    (0..cases).map(|_| check(rng)).fold(0.0, |m, r| if r.is_nan() { f64::NAN } else { m.max(r) })
}

fn gauge_check(cfg: &RunConfig, report: &mut Report) {
    let cases = cfg.count.unwrap_or(10_000);
    let mut rng = sampling::stream(cfg.seed, 0x6A0);
    let mut table = Table::new("residuals", &["property", "cases", "max_residual", "tolerance"]);
    let mut record = |report: &mut Report, name: &str, residual: f64, tol: f64| {
        table.push(vec![name.into(), cases.into(), residual.into(), tol.into()]);
        report.check(name, residual <= tol, format!("max residual {residual:e} over {cases} cases (tolerance {tol:e})"));
    };

    let r = max_residual(&mut rng, cases, |g| {
        let (a, b, c) = (random_group(g), random_group(g), random_group(g));
        ((a * b) * c).max_abs_diff(&(a * (b * c)))
    });
    record(report, "associativity", r, ALGEBRA_TOL);
    let r = max_residual(&mut rng, cases, |g| {
        let a = random_group(g);
        (a * a.inverse())
            .max_abs_diff(&GroupElement::IDENTITY)
            .max((a.inverse() * a).max_abs_diff(&GroupElement::IDENTITY))
            .max((a * GroupElement::IDENTITY).max_abs_diff(&a))
    });
    record(report, "inverse-and-identity", r, ALGEBRA_TOL);
    let r = max_residual(&mut rng, cases, |g| {
        let (a, b, c) = (random_complex(g), random_complex(g), random_complex(g));
        ((a * b) * c).max_abs_diff(&(a * (b * c))) / (1.0 + a.sup_norm() * b.sup_norm() * c.sup_norm())
    });
    record(report, "complex-associativity", r, ALGEBRA_TOL);
    let r = max_residual(&mut rng, cases, |g| {
        let z = random_complex(g);
        match factorize(&z) {
            Ok((theta, t)) => (theta.exp_i() * ComplexGroupElement::from(t)).max_abs_diff(&z),
            Err(_) => f64::NAN,
        }
    });
    record(report, "exp-factorize-round-trip", r, ALGEBRA_TOL);
    let r = max_residual(&mut rng, cases, |g| {
        let (theta, t) = (random_algebra(g), random_group(g));
        match factorize(&(theta.exp_i() * ComplexGroupElement::from(t))) {
            Ok((th, tt)) => {
                let d = th.to_array().iter().zip(theta.to_array()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                d.max(tt.max_abs_diff(&t))
            }
            Err(_) => f64::NAN,
        }
    });
    record(report, "factorize-exp-round-trip", r, ALGEBRA_TOL);
    let r = max_residual(&mut rng, cases, |g| {
        let p = TubePoint::new(C64::new(g.random(), sampling::uniform(g, -0.3, 0.3)), random_complex(g));
        let t = random_group(g);
        match (project_to_group(&p.act(&t)), project_to_group(&p)) {
            (Ok(a), Ok(b)) => a.max_abs_diff(&(b * t)),
            _ => f64::NAN,
        }
    });
    record(report, "projection-equivariance", r, ALGEBRA_TOL);
    let r = max_residual(&mut rng, cases, |g| {
        let (z, t) = (random_complex(g), random_group(g));
        (phi(&(z * ComplexGroupElement::from(t))) - phi(&z)).abs()
    });
    record(report, "gauge-invariance", r, INVARIANCE_TOL);
    let r = max_residual(&mut rng, cases, |g| phi(&ComplexGroupElement::from(random_group(g))).abs());
    record(report, "gauge-vanishes-on-real-group", r, 0.0);
    let r = max_residual(&mut rng, cases, |g| {
        let p = TubePoint::new(C64::new(g.random(), sampling::uniform(g, -0.3, 0.3)), random_complex(g));
        let t = random_group(g);
        (phi_tilde(&p.act(&t)) - phi_tilde(&p)).abs()
    });
    record(report, "thickened-gauge-invariance", r, INVARIANCE_TOL);
    report.tables.push(table);

    // φ̃ minus its quadratic part Σ (Im z_k)² at the origin, along random
    // directions under dyadic scaling
    let scales: Vec<f64> = (8..16).map(|k| 0.5f64.powi(k)).collect();
    let mut sqs = Table::new("sum_of_squares", &["direction", "exponent", "r_squared"]);
    let mut worst = f64::INFINITY;
    let directions = 50usize;
    for d in 0..directions {
        let v = sampling::unit_sphere(&mut rng, 8);
        let rem: Vec<f64> = scales
            .iter()
            .map(|&s| {
                let c = |k: usize| C64::new(s * v[2 * k], s * v[2 * k + 1]);
                let p = TubePoint::new(c(0), ComplexGroupElement::new(c(1), c(2), c(3)));
                let squares: f64 = (0..4).map(|k| c(k).im * c(k).im).sum();
                (phi_tilde(&p) - squares).abs()
            })
            .collect();
        if rem.contains(&0.0) {
            continue;
        }
        if let Some(fit) = power_law_fit(&scales, &rem) {
            worst = worst.min(fit.slope);
            sqs.push(vec![d.into(), fit.slope.into(), fit.r_squared.into()]);
        }
    }
    report.check(
        "sum-of-squares-remainder",
        worst >= SQS_MIN_EXPONENT && !sqs.rows.is_empty(),
        format!("smallest fitted remainder exponent {worst:.4} over {} directions (need ≥ {SQS_MIN_EXPONENT})", sqs.rows.len()),
    );
    report.results = json!({ "cases": cases, "min_remainder_exponent": worst, "directions": sqs.rows.len() });
    report.tables.push(sqs);
}

// ---------------------------------------------------------------------------
// certify-spc, levi-bounds

fn spc(cfg: &RunConfig, report: &mut Report) -> Result<(), RunError> {
    let model = cfg.gauge_model();
    let opts = SpcOptions {
        samples: cfg.count.unwrap_or(10_000),
        seed: cfg.seed,
        full_space: true,
    };
    let cert = certify_spc(&model, &opts)?;
    let mut table = Table::new("certificate", &["model", "epsilon", "samples", "min_tangent_eigenvalue", "full_space_min_eigenvalue", "lambda"]);
    table.push(vec![
        cfg.model.to_string().into(),
        cert.epsilon.into(),
        cert.samples.into(),
        cert.min_eigenvalue.into(),
        cert.full_space_min_eigenvalue.unwrap_or(f64::NAN).into(),
        cert.lambda_used.into(),
    ]);
    report.tables.push(table);
    report.check(
        "levi-form-positive",
        cert.is_certified() && cert.min_eigenvalue > 0.0,
        format!("minimum tangential eigenvalue {:e} over {} boundary samples", cert.min_eigenvalue, cert.samples),
    );
    report.results = to_json(&cert);
    Ok(())
}

fn levi_bounds(cfg: &RunConfig, report: &mut Report) -> Result<(), RunError> {
    let model = cfg.gauge_model();
    let poly = LeviPolynomial::new(&model, &canonical_base_point(&model))?;
    let r = 0.05 * cfg.epsilon.sqrt();
    let n = cfg.count.unwrap_or(10_000);
    let single = bound_constants(&poly, r, n, cfg.seed)?;
    let double = bound_constants(&poly, r, 2 * n, cfg.seed)?;
    let re = negative_real_part_check(&poly, r, 2 * n, cfg.seed)?;
    let mut table = Table::new("bounds", &["samples", "accepted", "c_hat", "d_hat"]);
    for (samples, k) in [(n, &single), (2 * n, &double)] {
        table.push(vec![samples.into(), k.accepted.into(), k.c_hat.into(), k.d_hat.into()]);
    }
    report.tables.push(table);
    let drift = |a: f64, b: f64| (b / a - 1.0).abs();
    let (dc, dd) = (drift(single.c_hat, double.c_hat), drift(single.d_hat, double.d_hat));
    report.check(
        "lower-constant-positive",
        single.c_hat > 0.0 && double.c_hat > 0.0,
        format!("C_hat = {:e}", double.c_hat),
    );
    report.check("upper-constant-finite", double.d_hat.is_finite(), format!("D_hat = {:e}", double.d_hat));
    report.check(
        "constants-stable-under-doubling",
        dc <= BOUND_STABILITY && dd <= BOUND_STABILITY,
        format!("relative drift C {dc:.3e}, D {dd:.3e} (bound {BOUND_STABILITY})"),
    );
    report.check(
        "real-part-negative",
        re.max_re_f < 0.0 && re.accepted > 0,
        format!("max Re f = {:e} over {} interior samples", re.max_re_f, re.accepted),
    );
    report.results = json!({
        "radius": r,
        "single": to_json(&single),
        "double": to_json(&double),
        "real_part": to_json(&re),
    });
    Ok(())
}

// ---------------------------------------------------------------------------
// integrability thresholds

fn integrability_label(v: Integrability) -> &'static str {
    match v {
        Integrability::Convergent => "convergent",
        Integrability::Divergent => "divergent",
        Integrability::Inconclusive => "inconclusive",
    }
}

fn study_table(name: &str, rows: &[(f64, &RefinementStudy)]) -> Table {
    let mut t = Table::new(
        name,
        &["tau", "level", "shell", "shell_error", "cumulative", "cumulative_error", "relative_change"],
    );
    for (tau, study) in rows {
        for l in &study.levels {
            t.push(vec![
                (*tau).into(),
                l.level.into(),
                l.shell.into(),
                l.shell_error.into(),
                l.cumulative.into(),
                l.cumulative_error.into(),
                l.relative_change.into(),
            ]);
        }
    }
    t
}

/// Record the verdict check for one exponent, or a warning when no verdict
/// is expected.
fn verdict_check(report: &mut Report, name: String, got: Integrability, expected: Option<Integrability>, detail: String) {
    match expected {
        Some(e) => report.check(
            &name,
            got == e,
            format!("expected {}, got {}; {detail}", integrability_label(e), integrability_label(got)),
        ),
        None => report
            .warnings
            .push(format!("{name}: no verdict expected near the threshold; got {}; {detail}", integrability_label(got))),
    }
}

fn declared(cfg: &RunConfig) -> Option<Integrability> {
    match cfg.expect {
        Some(Expectation::Convergent) => Some(Integrability::Convergent),
        Some(Expectation::Divergent) => Some(Integrability::Divergent),
        _ => None,
    }
}

fn lp_sweep(cfg: &RunConfig, report: &mut Report) -> Result<(), RunError> {
    let setup = SingularSetup::canonical(&cfg.gauge_model())?;
    let taus = cfg.taus.clone().unwrap_or_else(|| vec![0.5, 1.0, 1.5, 2.5, 3.0]);
    let levels = cfg.levels.unwrap_or(12);
    let spec = QuadratureSpec::monte_carlo(cfg.quadrature.samples.unwrap_or(1 << 20), cfg.seed);
    let sweep = lp_threshold_sweep(&setup, &taus, cfg.p, levels, &spec)?;
    // |f|^{−τp} against the volume growth |w|^{2n}: integrable iff τp < n + 1
    let n = sweep.dim as f64;
    let mut summary = Table::new("verdicts", &["tau", "value", "error", "shell_slope", "verdict"]);
    for row in &sweep.rows {
        let s = &row.study;
        summary.push(vec![
            row.tau.into(),
            s.value().into(),
            s.error().into(),
            s.shell_slope.into(),
            integrability_label(s.verdict).into(),
        ]);
        let tp = row.tau * cfg.p;
        let rule = if tp <= n - 1.0 {
            Some(Integrability::Convergent)
        } else if tp >= n + 1.0 {
            Some(Integrability::Divergent)
        } else {
            None
        };
        let detail = format!("value {:e} ± {:e}, shell slope {:.3}", s.value(), s.error(), s.shell_slope);
        verdict_check(report, format!("lp-verdict-tau-{}", row.tau), s.verdict, declared(cfg).or(rule), detail);
    }
    let rows: Vec<(f64, &RefinementStudy)> = sweep.rows.iter().map(|r| (r.tau, &r.study)).collect();
    report.tables.push(summary);
    report.tables.push(study_table("refinement", &rows));
    report.results = to_json(&sweep);
    Ok(())
}

fn l1_group(cfg: &RunConfig, report: &mut Report) -> Result<(), RunError> {
    thickened_only(cfg, Command::L1Group)?;
    let setup = SingularSetup::canonical(&cfg.gauge_model())?;
    // ξ = x: the singular orbit
    let xi = TubePoint::new(C64::new(0.0, cfg.epsilon.sqrt()), ComplexGroupElement::IDENTITY);
    let levels = cfg.levels.unwrap_or(16);
    let spec = cfg.spec(QuadratureSpec::default().samples);
    let mut summary = Table::new("verdicts", &["tau", "value", "error", "shell_slope", "verdict", "flagged"]);
    let mut studies = vec![];
    let mut out = vec![];
    for tau in cfg.taus() {
        let rep = l1_group_norm(&setup, &xi, tau, levels, &spec)?;
        let s = &rep.study;
        summary.push(vec![
            tau.into(),
            s.value().into(),
            s.error().into(),
            s.shell_slope.into(),
            integrability_label(s.verdict).into(),
            rep.flagged.into(),
        ]);
        // |f|^{−τ} ~ ρ^{−2τ} against three-dimensional Haar volume
        let rule = if 2.0 * tau <= 2.5 {
            Some(Integrability::Convergent)
        } else if 2.0 * tau >= 3.0 {
            Some(Integrability::Divergent)
        } else {
            None
        };
        let detail = format!("value {:e} ± {:e}, shell slope {:.3}", s.value(), s.error(), s.shell_slope);
        verdict_check(report, format!("l1-verdict-tau-{tau}"), s.verdict, declared(cfg).or(rule), detail);
        if s.verdict == Integrability::Convergent {
            report.flag(rep.flagged, format!("l1-group τ = {tau}: adaptive budget exhausted"));
        }
        studies.push((tau, rep.study.clone()));
        out.push(rep);
    }
    let rows: Vec<(f64, &RefinementStudy)> = studies.iter().map(|(t, s)| (*t, s)).collect();
    report.tables.push(summary);
    report.tables.push(study_table("refinement", &rows));
    report.results = to_json(&out);
    Ok(())
}

// ---------------------------------------------------------------------------
// amenability

fn amenability(cfg: &RunConfig, report: &mut Report) -> Result<(), RunError> {
    thickened_only(cfg, Command::Amenability)?;
    let setup = SingularSetup::canonical(&cfg.gauge_model())?;
    let opts = AmenabilityOptions::standard(&setup, cfg.tau, cfg.k)?;
    let rep = amenability_check(&setup, &opts, &cfg.spec(QuadratureSpec::default().samples))?;
    let mut table = Table::new("path", &["s", "sigma", "step", "derivative", "derivative_error", "quadrature_error"]);
    for i in 0..rep.s.len() {
        table.push(vec![
            rep.s[i].into(),
            rep.sigma[i].into(),
            rep.step[i].into(),
            rep.derivative[i].into(),
            rep.derivative_error[i].into(),
            rep.quadrature_error[i].into(),
        ]);
    }
    report.tables.push(table);
    let expected = match cfg.expect {
        Some(Expectation::Blowup) => BlowupVerdict::Blowup,
        Some(Expectation::Bounded) => BlowupVerdict::Bounded,
        _ if cfg.k == 0 => BlowupVerdict::Bounded,
        _ => BlowupVerdict::Blowup,
    };
    let label = |v: BlowupVerdict| match v {
        BlowupVerdict::Blowup => "blowup",
        BlowupVerdict::Bounded => "bounded",
        BlowupVerdict::Inconclusive => "inconclusive",
    };
    report.check(
        "amenability-verdict",
        rep.verdict == expected,
        format!(
            "expected {}, got {}; exponent {:.4} (model {:.4}), R² {:.4}, {} growth steps",
            label(expected),
            label(rep.verdict),
            rep.exponent,
            rep.model_exponent,
            rep.r_squared,
            rep.growth_steps
        ),
    );
    if cfg.k > 0 && (rep.exponent - rep.model_exponent).abs() > 0.25 {
        report.warnings.push(format!(
            "fitted exponent {:.4} departs from the radial model exponent {:.4}",
            rep.exponent, rep.model_exponent
        ));
    }
    report.flag(rep.flagged, "amenability: adaptive budget exhausted");
    report.results = to_json(&rep);
    Ok(())
}

// ---------------------------------------------------------------------------
// representation

fn rep_unitarity(cfg: &RunConfig, report: &mut Report) -> Result<(), RunError> {
    thickened_only(cfg, Command::RepUnitarity)?;
    let trials = cfg.count.unwrap_or(20);
    let samples = cfg.quadrature.samples.unwrap_or(100_000);
    let mut rng = sampling::stream(cfg.seed, 0x0417);
    let mut table = Table::new(
        "unitarity",
        &["trial", "t1", "t2", "t3", "norm_sq", "norm_sq_error", "translated_norm_sq", "translated_norm_sq_error", "relative_discrepancy", "z_score"],
    );
    let mut out = vec![];
    let mut worst = 0.0f64;
    for i in 0..trials {
        let h = TestBump::random(cfg.epsilon, &mut rng);
        let t = CoordBox::new([-0.5; 3], [0.5; 3]).sample(&mut rng);
        let spec = QuadratureSpec::monte_carlo(samples, cfg.seed.wrapping_add(i as u64));
        let rep = unitarity_check(&h, &t, cfg.epsilon, 0.05, &spec)?;
        table.push(vec![
            i.into(),
            t.t1.into(),
            t.t2.into(),
            t.t3.into(),
            rep.norm_sq.into(),
            rep.norm_sq_error.into(),
            rep.translated_norm_sq.into(),
            rep.translated_norm_sq_error.into(),
            rep.relative_discrepancy.into(),
            rep.z_score.into(),
        ]);
        if let Some(w) = &rep.warning {
            report.warnings.push(format!("trial {i}: {w}"));
        }
        worst = worst.max(rep.z_score);
        out.push(rep);
    }
    report.tables.push(table);
    report.check(
        "translations-preserve-norms",
        worst <= UNITARITY_SIGMAS,
        format!("largest discrepancy {worst:.3} combined standard errors over {trials} trials (bound {UNITARITY_SIGMAS})"),
    );
    report.results = to_json(&out);
    Ok(())
}

fn rep_continuity(cfg: &RunConfig, report: &mut Report) -> Result<(), RunError> {
    thickened_only(cfg, Command::RepContinuity)?;
    let steps = cfg.count.unwrap_or(5);
    let h = TestBump::new(GroupElement::new(0.1, 0.0, -0.1), 0.4, 0.2);
    let dir = GroupElement::new(0.4, 0.3, -0.5);
    let spec = QuadratureSpec::monte_carlo(cfg.quadrature.samples.unwrap_or(200_000), cfg.seed);
    let sweep = continuity_sweep(&h, &dir, steps, cfg.epsilon, &spec)?;
    let mut table = Table::new("continuity", &["scale", "distance", "error"]);
    for i in 0..sweep.scales.len() {
        table.push(vec![sweep.scales[i].into(), sweep.distances[i].into(), sweep.errors[i].into()]);
    }
    report.tables.push(table);
    report.check("distances-monotone", sweep.monotone, format!("{:?}", sweep.distances));
    // ‖t_*h − h‖ ~ |t|^a with a > 0 means the distances vanish with the scale
    let slope = power_law_fit(&sweep.scales, &sweep.distances).map_or(f64::NAN, |f| f.slope);
    report.check(
        "distances-tend-to-zero",
        slope >= CONTINUITY_MIN_SLOPE,
        format!("distance ~ scale^{slope:.3} (need exponent ≥ {CONTINUITY_MIN_SLOPE})"),
    );
    report.results = to_json(&sweep);
    Ok(())
}

fn gram(cfg: &RunConfig, report: &mut Report) -> Result<(), RunError> {
    thickened_only(cfg, Command::GramRank)?;
    let largest = cfg.count.unwrap_or(8);
    let seq = escape_sequence(largest, &FloorSchedule::default())?;
    let h = TestBump::new(GroupElement::IDENTITY, 0.4, 0.2);
    let samples = cfg.quadrature.samples.unwrap_or(200_000);
    let mut sizes: Vec<usize> = std::iter::successors(Some(1usize), |m| Some(2 * m)).take_while(|&m| m <= largest).collect();
    if sizes.last() != Some(&largest) {
        sizes.push(largest);
    }
    let mut table = Table::new("gram", &["m", "rank", "smallest_eigenvalue", "largest_eigenvalue", "retained_ratio", "psd"]);
    let mut out = vec![];
    let mut prev = 0;
    for m in sizes {
        let spec = QuadratureSpec::monte_carlo(samples, cfg.seed.wrapping_add(m as u64));
        let rep = gram_rank(&h, &seq, m, cfg.epsilon, &spec)?;
        let lo = rep.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = rep.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        table.push(vec![m.into(), rep.rank.into(), lo.into(), hi.into(), rep.retained_ratio.into(), rep.positive_semidefinite.into()]);
        report.check(&format!("gram-psd-m-{m}"), rep.positive_semidefinite, format!("eigenvalues {:?}", rep.eigenvalues));
        report.check(
            &format!("gram-full-rank-m-{m}"),
            rep.rank == m && rep.rank >= prev && rep.retained_ratio >= GRAM_RETAINED_MIN,
            format!("rank {} of {m}, retained ratio {:e} (need ≥ {GRAM_RETAINED_MIN:e})", rep.rank, rep.retained_ratio),
        );
        prev = rep.rank;
        out.push(rep);
    }
    report.tables.push(table);

    // K ∩ K·t = ∅ for K the unit quasi-ball and t far along the sequence
    let escape = escape_sequence(10, &FloorSchedule::default())?;
    let sep = separation_witness(1.0, &escape, 100_000, cfg.seed)?;
    let mut overlaps = Table::new("separation", &["index", "quasi_norm", "overlap"]);
    for (i, (n, o)) in escape.norms.iter().zip(&sep.overlaps).enumerate() {
        overlaps.push(vec![i.into(), (*n).into(), (*o).into()]);
    }
    report.tables.push(overlaps);
    let clean = sep.witness.is_some_and(|w| sep.overlaps[w..].iter().all(|&v| v == 0.0));
    report.check(
        "separation-witness",
        clean,
        match sep.witness {
            Some(w) => format!("first witness at index {w}, zero sampled overlap from there on: {clean}"),
            None => format!("no witness among 10 elements; largest overlap {:e}", sep.max_overlap_before),
        },
    );
    report.results = json!({ "gram": to_json(&out), "separation": to_json(&sep) });
    Ok(())
}

// ---------------------------------------------------------------------------
// slice-fubini

fn slice_fubini(cfg: &RunConfig, report: &mut Report) -> Result<(), RunError> {
    thickened_only(cfg, Command::SliceFubini)?;
    let f = ProductBump {
        y0_radius: 0.8 * cfg.delta.sqrt(),
        frequency: 1,
        center: GroupElement::new(0.1, -0.1, 0.0),
        radius: 0.4,
        theta_radius: 0.2,
    };
    let g = |p: &TubePoint| f.eval(p);
    let region = GroupRegion::boxed(f.support_box());
    let spec = QuadratureSpec::monte_carlo(cfg.quadrature.samples.unwrap_or(1_000_000), cfg.seed);
    let rep = fubini_check(&g, cfg.delta, &region, &spec)?;
    let mut table = Table::new("fubini", &["total", "total_error", "sliced", "sliced_error", "slices", "z_score"]);
    table.push(vec![
        rep.total.into(),
        rep.total_error.into(),
        rep.sliced.into(),
        rep.sliced_error.into(),
        rep.slices.into(),
        rep.z_score.into(),
    ]);
    report.tables.push(table);
    report.check(
        "slice-norms-integrate-to-total",
        rep.z_score < FUBINI_SIGMAS,
        format!("|total − sliced| = {:.3} combined standard errors (bound {FUBINI_SIGMAS})", rep.z_score),
    );
    report.results = json!({ "bump": to_json(&f), "fubini": to_json(&rep) });
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(command: Command) -> RunConfig {
        RunConfig { command: Some(command), ..RunConfig::default() }
    }

    #[test]
    fn missing_command_is_an_error() {
        assert!(matches!(run(&RunConfig::default()), Err(RunError::NoCommand)));
    }

    #[test]
    fn orbit_campaigns_reject_other_models() {
        let cfg = RunConfig { model: ModelChoice::Heisenberg, ..config(Command::GramRank) };
        assert!(matches!(run(&cfg), Err(RunError::Unsupported { .. })));
    }

    #[test]
    fn gauge_check_passes_at_reduced_size() {
        let cfg = RunConfig { count: Some(500), ..config(Command::GaugeCheck) };
        let rep = run(&cfg).unwrap();
        assert!(rep.passed(), "{:?}", rep.failed_checks().collect::<Vec<_>>());
    }
}
