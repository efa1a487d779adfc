//! One function per subcommand. Each returns results, checks and an
//! optional CSV table; the driver handles the envelope and exit code.

use caprigid::analysis::{
    functionals, identity_report_from, quadratic_form, rigidity_certificate, spectrum,
    threshold_report, CertificateConfig, Domain, FieldSamples, IdentityReport, IdentityTag, Verdict,
};
use caprigid::curvature::{remainder_slope, Which};
use caprigid::gauge::{build_gauge_basis, slice_project};
use caprigid::geometry::background_check;
use serde_json::{json, to_value, Value};

use crate::config::RunConfig;
use crate::report::{Check, Outcome};
use crate::CliError;

fn value<T: serde::Serialize>(t: &T) -> Result<Value, CliError> {
    to_value(t).map_err(|e| CliError::Io(e.to_string()))
}

fn csv_f(x: f64) -> String {
    format!("{x:.17e}")
}

pub fn check_background(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let spec = cfg.spec()?;
    let r = background_check(&spec)?;
    let t = &cfg.tolerances;
    let checks = vec![
        Check::le("hessian_identity", r.hessian_max, t.background),
        Check::le("eikonal_identity", r.eikonal_max, t.background),
        Check::le("boundary_umbilic", r.umbilic_max, t.umbilic),
        Check::le(
            "volume_quadrature",
            (r.volume_quadrature - r.volume_closed).abs(),
            t.quadrature,
        ),
        Check::le(
            "area_quadrature",
            (r.area_quadrature - r.area_closed).abs(),
            t.quadrature,
        ),
    ];
    Ok(Outcome {
        results: json!({
            "background": value(&r)?,
            "rho0": spec.rho0,
            "hbar": spec.hbar(),
            "dnubar_f": spec.dnubar_f(),
            "geodesic_radius": spec.geodesic_radius(),
        }),
        checks,
        csv: None,
    })
}

pub fn expansion_order(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let which = match cfg.which.as_deref().unwrap_or("scalar") {
        "scalar" => Which::Scalar,
        "mean" => Which::Mean,
        other => {
            return Err(CliError::Config(format!(
                "--which must be `scalar` or `mean` for expansion-order, got {other:?}"
            )))
        }
    };
    let spec = cfg.spec()?;
    let h = cfg.field(&spec)?;
    let fit = remainder_slope(&spec, &h, &cfg.eps, which)?;
    let t = &cfg.tolerances;
    let name = match which {
        Which::Scalar => "scalar_remainder_slope",
        Which::Mean => "mean_remainder_slope",
    };
    let rows = fit
        .eps
        .iter()
        .zip(&fit.values)
        .zip(&fit.ratios)
        .map(|((e, v), r)| format!("{},{},{}", csv_f(*e), csv_f(*v), csv_f(*r)))
        .collect();
    Ok(Outcome {
        checks: vec![Check::within(name, fit.slope, t.slope_low, t.slope_high)],
        results: json!({ "which": which, "fit": value(&fit)? }),
        csv: Some(("eps,remainder,ratio".into(), rows)),
    })
}

pub fn project(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let spec = cfg.spec()?;
    let h = cfg.field(&spec)?;
    let basis = build_gauge_basis(&spec, cfg.gauge_degree)?;
    let p = slice_project(&h, &basis)?;
    let again = slice_project(&p.h_df, &basis)?;
    let t = &cfg.tolerances;
    let split = if p.h_norm > 0.0 {
        (p.h_norm.powi(2) - p.h_df_norm.powi(2) - p.gauge_norm.powi(2)).abs() / p.h_norm.powi(2)
    } else {
        0.0
    };
    let idem = if p.h_df_norm > 0.0 {
        again.gauge_norm / p.h_df_norm
    } else {
        0.0
    };
    let (div_h, _) = caprigid::gauge::divergence_residual(&h, basis.rule())?;
    let checks = vec![
        Check::le("orthogonality", p.normal_residual, t.gauge),
        Check::le("energy_split", split, t.gauge),
        Check::le("idempotence", idem, t.gauge),
        Check::le("tangential_boundary", p.tangential_max, t.exact_identity),
        Check::le("divergence_not_increased", p.div_l2 - div_h, t.exact_identity),
    ];
    Ok(Outcome {
        results: json!({
            "projection": value(&p.summary(&basis))?,
            "divergence_before": div_h,
            "gram_min_eig": basis.gram_min_eig,
        }),
        checks,
        csv: None,
    })
}

fn parse_tag(s: &str) -> Result<IdentityTag, CliError> {
    IdentityTag::ALL
        .into_iter()
        .find(|t| t.name() == s)
        .ok_or_else(|| {
            let names: Vec<&str> = IdentityTag::ALL.iter().map(|t| t.name()).collect();
            CliError::Config(format!("unknown identity {s:?}; expected one of {names:?}"))
        })
}

/// Identities stated for the raw field; the rest use the projected one.
fn on_raw_field(tag: IdentityTag) -> bool {
    matches!(tag, IdentityTag::Prop31 | IdentityTag::ZeroDivthm)
}

fn identity_checks(r: &IdentityReport, cfg: &RunConfig) -> Vec<Check> {
    let t = &cfg.tolerances;
    let name = r.tag.name();
    let c1 = r.details.get("c1").copied().unwrap_or(0.0);
    let mut out = Vec::new();
    match r.tag {
        IdentityTag::ZeroDivthm | IdentityTag::OmegaClosed => {
            out.push(Check::le(name, r.residual, t.exact_identity * c1.max(1.0)));
        }
        IdentityTag::Prop41 => {
            let bound = r.leakage_bound + t.exact_identity;
            out.push(Check::le("prop41_within_divergence_bound", r.residual, bound));
            if let Some(c) = r.corrected {
                out.push(Check::le("prop41_leakage_exact", c, t.exact_identity * c1.max(1.0)));
            }
            for key in ["umbilic_normal", "umbilic_tangential"] {
                let v = r.details.get(key).copied().unwrap_or(f64::NAN);
                out.push(Check::le(key, v, t.umbilic));
            }
        }
        _ => {
            let fit = if r.tag == IdentityTag::Prop31 {
                r.slope.as_ref()
            } else {
                r.corrected_slope.as_ref()
            };
            if let Some(fit) = fit {
                out.push(Check::within(
                    &format!("{name}_slope"),
                    fit.slope,
                    t.slope_low,
                    t.slope_high,
                ));
            }
        }
    }
    out
}

pub fn identities(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let tags = match cfg.which.as_deref() {
        None | Some("all") => IdentityTag::ALL.to_vec(),
        Some(s) => s.split(',').map(|t| parse_tag(t.trim())).collect::<Result<_, _>>()?,
    };
    let spec = cfg.spec()?;
    let domain = Domain::new(&spec)?;
    let h = cfg.field(&spec)?;
    let basis = build_gauge_basis(&spec, cfg.gauge_degree)?;
    let p = slice_project(&h, &basis)?;
    let raw = FieldSamples::new(&h, &domain)?;
    let df = FieldSamples::new(&p.h_df, &domain)?;
    let mut reports = Vec::new();
    let mut checks = Vec::new();
    let mut rows = Vec::new();
    for tag in tags {
        let samples = if on_raw_field(tag) { &raw } else { &df };
        let r = identity_report_from(&domain, samples, tag, Some(&cfg.eps))?;
        checks.extend(identity_checks(&r, cfg));
        let opt = |v: Option<f64>| v.map(csv_f).unwrap_or_default();
        rows.push(format!(
            "{},{},{},{},{},{},{}",
            tag.name(),
            csv_f(r.residual),
            csv_f(r.cubic),
            opt(r.leakage),
            opt(r.corrected),
            opt(r.slope.as_ref().map(|s| s.slope)),
            opt(r.corrected_slope.as_ref().map(|s| s.slope)),
        ));
        reports.push(r);
    }
    Ok(Outcome {
        results: json!({
            "projection": value(&p.summary(&basis))?,
            "identities": value(&reports)?,
        }),
        checks,
        csv: Some((
            "identity,residual,cubic,leakage,corrected,slope,corrected_slope".into(),
            rows,
        )),
    })
}

pub fn key_estimate(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let spec = cfg.spec()?;
    let domain = Domain::new(&spec)?;
    let h = cfg.field(&spec)?;
    let basis = build_gauge_basis(&spec, cfg.gauge_degree)?;
    let p = slice_project(&h, &basis)?;
    let samples = FieldSamples::new(&p.h_df, &domain)?;
    let key = identity_report_from(&domain, &samples, IdentityTag::Key, Some(&cfg.eps))?;
    let qf = quadratic_form(&domain, &p.h_df)?;
    let f = functionals(&domain, &p.h_df)?;
    let t = &cfg.tolerances;
    let tiny = t.coercivity;
    let mut checks = vec![
        Check::nonneg("t1_nonnegative", qf.t1, tiny),
        Check::nonneg("t2_nonnegative", qf.t2, tiny),
        Check::nonneg("t3_nonnegative", qf.t3, tiny),
        Check::nonneg("t4_nonnegative", qf.t4, tiny),
        Check::le("b1_nonpositive", qf.b1, tiny),
        Check::le("b2_nonpositive", qf.b2, tiny),
        Check::nonneg("b3_nonnegative", qf.b3, tiny),
        Check::nonneg("b4_nonnegative", qf.b4, tiny),
    ];
    if spec.c >= caprigid::analysis::cstar(spec.n)? {
        checks.push(Check::nonneg("normal_pair", qf.pair_normal, tiny));
        checks.push(Check::nonneg("tangential_pair", qf.pair_tangential, tiny));
        checks.push(Check::nonneg("q_minus_half_mass", qf.q - 0.5 * f.mass, tiny));
    }
    if let Some(fit) = &key.corrected_slope {
        checks.push(Check::within("key_corrected_slope", fit.slope, t.slope_low, t.slope_high));
    }
    let rows = key
        .corrected_slope
        .iter()
        .flat_map(|fit| {
            let raw = key.slope.as_ref().map(|s| s.values.clone()).unwrap_or_default();
            fit.eps
                .iter()
                .zip(&fit.values)
                .zip(raw)
                .map(|((e, v), r)| format!("{},{},{}", csv_f(*e), csv_f(r), csv_f(*v)))
                .collect::<Vec<_>>()
        })
        .collect();
    Ok(Outcome {
        results: json!({
            "quadratic_form": value(&qf)?,
            "mass": f.mass,
            "key": value(&key)?,
        }),
        checks,
        csv: Some(("eps,raw_residual,corrected_residual".into(), rows)),
    })
}

pub fn threshold(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let r = threshold_report(cfg.n, cfg.samples)?;
    let t = &cfg.tolerances;
    let beta_at = caprigid::analysis::beta_threshold(cfg.n, r.cstar_closed)?;
    let rows = r
        .c_samples
        .iter()
        .zip(&r.beta)
        .zip(&r.b2)
        .map(|((c, b), b2)| format!("{},{},{}", csv_f(*c), csv_f(*b), csv_f(*b2)))
        .collect();
    let checks = vec![
        Check::le("cstar_closed_form", (r.cstar - r.cstar_closed).abs(), t.threshold),
        Check::le("beta_vanishes_at_cstar", beta_at.abs(), t.threshold),
        Check::flag("beta_increasing", r.beta_increasing),
        Check::flag("b2_increasing", r.b2_increasing),
        Check::flag("b2_root_below_cstar", r.b2_root < r.cstar),
    ];
    Ok(Outcome {
        results: value(&r)?,
        checks,
        csv: Some(("c,beta,b2".into(), rows)),
    })
}

pub fn spectrum_cmd(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let spec = cfg.spec()?;
    let domain = Domain::new(&spec)?;
    let r = spectrum(&domain, cfg.degree, cfg.gauge_degree)?;
    let t = &cfg.tolerances;
    // Node coefficients vanish exactly at c*, up to rounding.
    let node_tol = 1e-12;
    let checks = vec![
        Check::nonneg("min_excess", r.min_excess, t.coercivity),
        Check::nonneg("min_random_excess", r.min_random_excess, t.coercivity),
        Check::ge("kappa", r.kappa, 0.5 - t.kappa),
        Check::nonneg("min_node_beta", r.min_node_beta, node_tol),
        Check::nonneg("min_node_b2", r.min_node_b2, node_tol),
    ];
    let rows = r
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(i, e)| format!("{i},{}", csv_f(*e)))
        .collect();
    Ok(Outcome {
        results: value(&r)?,
        checks,
        csv: Some(("index,eigenvalue".into(), rows)),
    })
}

pub fn certify(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let spec = cfg.spec()?;
    let domain = Domain::new(&spec)?;
    let h = cfg.field(&spec)?;
    let cc = CertificateConfig {
        gauge_degree: cfg.gauge_degree,
        c_fit: cfg.c_fit,
        ..CertificateConfig::default()
    };
    let cert = rigidity_certificate(&domain, &h, &cc)?;
    let sound = match cert.verdict {
        Verdict::RigidConsistent => cert.margin <= 0.0 && cert.hypotheses_hold && cert.c >= cert.cstar,
        Verdict::HypothesesViolated => !cert.hypotheses_hold,
        Verdict::Inconclusive => true,
    };
    let checks = vec![
        Check::flag("verdict_consistent", sound),
        Check::nonneg("mass_nonnegative", cert.mass, 0.0),
    ];
    Ok(Outcome {
        results: value(&cert)?,
        checks,
        csv: None,
    })
}
