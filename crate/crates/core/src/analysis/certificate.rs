//! Numerical rigidity certificate.
//!
//! The chain evaluated here: under `R_g ≥ n(n−1)` and `H_g ≥ H_ḡ`, both
//! deficit integrals are nonnegative, so `Q(h_df) ≤ |K − Λ| + |Λ| + slack`
//! where `K = I_R + I_H + Q` and `Λ` is the exact divergence leakage. For
//! `c ≥ c*` every boundary pair is nonnegative and `Q ≥ ½ M`, so
//! `½ M(h_df) ≤ C_fit · cubic + slack`. A positive margin
//! `κ M − (C_fit · cubic + slack)` contradicts the chain.

use serde::{Deserialize, Serialize};

use super::functionals::{functionals, Domain};
use super::threshold::cstar;
use crate::error::Result;
use crate::fields::SymTensorField;
use crate::gauge::{build_gauge_basis, slice_project, ProjectionSummary};

/// Coercivity constant guaranteed by the term signs for `c ≥ c*`.
pub const KAPPA_CERTIFIED: f64 = 0.5;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CertificateConfig {
    pub gauge_degree: usize,
    /// Tolerance on `min (R_g − n(n−1))`.
    pub tol_scalar: f64,
    /// Tolerance on `min (H_g − H_ḡ)`.
    pub tol_mean: f64,
    /// Tolerance on the tangential boundary block of `h`.
    pub tol_isometry: f64,
    /// Constant in `|K − Λ| ≤ C_fit · cubic`.
    pub c_fit: f64,
}

impl Default for CertificateConfig {
    fn default() -> Self {
        CertificateConfig {
            gauge_degree: 2,
            tol_scalar: 1e-8,
            tol_mean: 1e-8,
            tol_isometry: 1e-8,
            c_fit: 10.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    RigidConsistent,
    HypothesesViolated,
    Inconclusive,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RigidityCertificate {
    pub verdict: Verdict,
    pub reasons: Vec<String>,
    pub config: CertificateConfig,
    pub c: f64,
    pub cstar: f64,
    pub min_scalar_deficit: f64,
    pub min_mean_deficit: f64,
    pub isometry_residual: f64,
    pub hypotheses_hold: bool,
    pub projection: ProjectionSummary,
    pub q: f64,
    pub mass: f64,
    pub kappa: f64,
    pub cubic: f64,
    /// `|K − Λ| / cubic`, the constant this field itself would need.
    pub observed_ratio: f64,
    pub key_residual: f64,
    pub leakage: f64,
    pub slack: f64,
    /// `κ M − (C_fit · cubic + slack)`; rigid_consistent requires ≤ 0.
    pub margin: f64,
    pub c1: f64,
    pub w12_sq: f64,
    /// `κ / C_fit`, the smallness radius in the `C¹` surrogate.
    pub radius: f64,
}

pub fn rigidity_certificate(
    domain: &Domain,
    h: &SymTensorField,
    config: &CertificateConfig,
) -> Result<RigidityCertificate> {
    let spec = &domain.spec;
    let n = spec.n;
    let c = spec.c;
    let cs = cstar(n)?;
    let raw = functionals(domain, h)?;
    let min_r = raw.min_scalar_deficit;
    let min_h = raw.min_mean_deficit;
    let iso = raw.tangential_max;
    let mut reasons = Vec::new();
    if min_r < -config.tol_scalar {
        reasons.push(format!("R_g − n(n−1) reaches {min_r:.6e} at a volume node"));
    }
    if min_h < -config.tol_mean {
        reasons.push(format!("H_g − H_ḡ reaches {min_h:.6e} at a boundary node"));
    }
    if iso > config.tol_isometry {
        reasons.push(format!("boundary metrics differ by {iso:.6e}"));
    }
    let hypotheses_hold = reasons.is_empty();

    let basis = build_gauge_basis(spec, config.gauge_degree)?;
    let proj = slice_project(h, &basis)?;
    let f = functionals(domain, &proj.h_df)?;
    let cubic = f.cubic();
    let q = f.q();
    let key_residual = (f.key - f.lambda_key).abs();
    // I_R ≥ −tol_R ∫f and I_H ≥ −c tol_H ∮(2 − N) with |N| ≤ ½.
    let slack = config.tol_scalar * integral_f(domain)?
        + 2.5 * c * config.tol_mean * spec.boundary_area()
        + f.lambda_key.abs();
    let kappa = KAPPA_CERTIFIED;
    let margin = kappa * f.mass - (config.c_fit * cubic + slack);

    let verdict = if c < cs {
        reasons.push(format!("height {c} is below the threshold {cs:.12}"));
        Verdict::Inconclusive
    } else if !hypotheses_hold {
        Verdict::HypothesesViolated
    } else if margin <= 0.0 {
        Verdict::RigidConsistent
    } else {
        reasons.push(format!(
            "coercive lower bound exceeds the cubic bound by {margin:.6e}"
        ));
        Verdict::Inconclusive
    };
    Ok(RigidityCertificate {
        verdict,
        reasons,
        config: config.clone(),
        c,
        cstar: cs,
        min_scalar_deficit: min_r,
        min_mean_deficit: min_h,
        isometry_residual: iso,
        hypotheses_hold,
        projection: proj.summary(&basis),
        q,
        mass: f.mass,
        kappa,
        cubic,
        observed_ratio: if cubic > 0.0 { key_residual / cubic } else { 0.0 },
        key_residual,
        leakage: f.lambda_key,
        slack,
        margin,
        c1: f.c1,
        w12_sq: f.w12_sq,
        radius: kappa / config.c_fit,
    })
}

/// `∫_Ω f dvol`.
fn integral_f(domain: &Domain) -> Result<f64> {
    let v: Vec<f64> = domain.points.iter().map(|p| p.f).collect();
    crate::geometry::sum_volume(&domain.rule, &v)
}
