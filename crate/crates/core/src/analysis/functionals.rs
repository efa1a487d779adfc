//! Quadrature of the deficit integrals, the integral identities, the
//! quadratic form `Q` and the cubic bounds.
//!
//! Every functional is assembled from per-node integrands computed in one
//! pass over cached jets. Jets are linear in `h`, so an `ε` sweep only
//! rescales them.
//!
//! Conventions in the ḡ-orthonormal frame: `F = ∇̄f`, `N = h(ν̄,ν̄)`,
//! `a_a = h(e_a,ν̄)`, `D = ∇̄`, `δh_q = Σ_i D_i h_iq`. On `∂Ω` the weight
//! `f` is the constant `c`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::curvature::{boundary_data, fit_slope, mean_exact_jet, scalar_exact_jet, check_eps, SlopeFit};
use crate::error::{Error, Result};
use crate::fields::SymTensorField;
use crate::geometry::{
    background_unchecked, build_quadrature, eval_background, eval_boundary, par_map, sum_boundary,
    sum_volume, BoundaryEval, ChartSpec, PointEval, QuadratureRule,
};
use crate::jet::{jet_at_order, FieldJet};

/// Quadrature rule with the background evaluated once at every node.
#[derive(Clone, Debug)]
pub struct Domain {
    pub spec: ChartSpec,
    pub rule: QuadratureRule,
    pub points: Vec<PointEval>,
    pub boundary: Vec<BoundaryEval>,
}

impl Domain {
    pub fn new(spec: &ChartSpec) -> Result<Self> {
        let rule = build_quadrature(spec)?;
        let points = rule
            .volume
            .iter()
            .map(|v| eval_background(spec, &v.x))
            .collect::<Result<Vec<_>>>()?;
        let boundary = rule
            .boundary
            .iter()
            .map(|b| eval_boundary(spec, &b.angles))
            .collect::<Result<Vec<_>>>()?;
        Ok(Domain {
            spec: spec.clone(),
            rule,
            points,
            boundary,
        })
    }

    pub fn n(&self) -> usize {
        self.spec.n
    }

    pub fn meta(&self) -> ReportMeta {
        ReportMeta {
            n: self.spec.n,
            c: self.spec.c,
            radial: self.spec.quad.radial,
            angular: self.spec.quad.angular.clone(),
            volume_nodes: self.rule.volume.len(),
            boundary_nodes: self.rule.boundary.len(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ReportMeta {
    pub n: usize,
    pub c: f64,
    pub radial: usize,
    pub angular: Vec<usize>,
    pub volume_nodes: usize,
    pub boundary_nodes: usize,
}

/// Jets of one field at every node: second order in the volume, first
/// order on the boundary.
#[derive(Clone, Debug)]
pub struct FieldSamples {
    pub volume: Vec<FieldJet>,
    pub boundary: Vec<FieldJet>,
}

impl FieldSamples {
    pub fn new(field: &SymTensorField, domain: &Domain) -> Result<Self> {
        if field.n() != domain.n() {
            return Err(Error::Domain(format!(
                "field dimension {} does not match domain dimension {}",
                field.n(),
                domain.n()
            )));
        }
        let volume = par_map(&domain.points, |p| jet_at_order(field, p, true))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let boundary = par_map(&domain.boundary, |b| jet_at_order(field, &b.point, false))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        Ok(FieldSamples { volume, boundary })
    }

    /// Jets of `a·h`.
    pub fn scaled(&self, a: f64) -> Self {
        FieldSamples {
            volume: self.volume.iter().map(|j| j.scaled(a)).collect(),
            boundary: self.boundary.iter().map(|j| j.scaled(a)).collect(),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `Σ_j h_ij v_j` for frame components.
fn apply(j: &FieldJet, v: &[f64]) -> Vec<f64> {
    let n = j.n;
    (0..n).map(|i| (0..n).map(|k| j.hf(i, k) * v[k]).sum()).collect()
}

#[derive(Clone, Copy, Debug, Default)]
struct VolumeTerms {
    f: f64,
    rdev: f64,
    t1: f64,
    t2: f64,
    t3: f64,
    t4: f64,
    zero_div: f64,
    v31: f64,
    v32: f64,
    lam32: f64,
    cubic: f64,
    w12: f64,
    c1: f64,
    mass: f64,
    div2: f64,
}

fn volume_terms(j: &FieldJet, p: &PointEval) -> Result<VolumeTerms> {
    let n = j.n;
    let nf = n as f64;
    let f = p.f;
    let grad = p.gradf_frame();
    let rdev = scalar_exact_jet(j)? - nf * (nf - 1.0);
    let h2 = j.norm * j.norm;
    let dh2 = j.dnorm * j.dnorm;
    let t1 = 0.25 * dh2 * f;
    let t2 = 0.25 * dot(&j.dtrace, &j.dtrace) * f;
    let t3 = 0.5 * h2 * f;
    let t4 = 0.5 * j.trace * j.trace * f;

    let mut zero_div = (nf - 1.0) * j.trace * f;
    for i in 0..n {
        zero_div -= (j.dtrace[i] - j.div[i]) * grad[i];
    }

    // X1 = Σ D_i h_kp D_k h_ip, Y1 = Σ h_jl (D_i h_jl − D_l h_ij) F_i,
    // Y2 = Σ h_ik (D_k tr h − δh_k) F_i.
    let mut x1 = 0.0;
    let mut y1 = 0.0;
    for i in 0..n {
        for k in 0..n {
            for q in 0..n {
                x1 += j.dhf(i, k, q) * j.dhf(k, i, q);
                y1 += j.hf(k, q) * (j.dhf(i, k, q) - j.dhf(q, i, k)) * grad[i];
            }
        }
    }
    let hf_grad = apply(j, &grad);
    let y2: f64 = (0..n)
        .map(|k| hf_grad[k] * (j.dtrace[k] - j.div[k]))
        .sum();
    let v31 = (rdev - (nf - 1.0) * h2) * f + t1 + t2 - 0.5 * x1 * f + y1 + y2;
    let v32 = rdev * f + t1 + t2 + t3 + t4;

    // P32 − P31 for a field with δh ≠ 0:
    // −[½L1 + L2 + L3 + L4] (volume part), L1 = Σ h_kp D_k(δh)_p f,
    // L2 = ½ h(δh, F), L3 = −h(F, δh), L4 = −tr h δh(F).
    let lam32 = if j.has_second() {
        let mut l1 = 0.0;
        for k in 0..n {
            for q in 0..n {
                let ddiv: f64 = (0..n).map(|i| j.d2hf(k, i, i, q)).sum();
                l1 += j.hf(k, q) * ddiv;
            }
        }
        l1 *= f;
        let hdg = dot(&hf_grad, &j.div);
        let l2 = 0.5 * hdg;
        let l3 = -hdg;
        let l4 = -j.trace * dot(&j.div, &grad);
        -(0.5 * l1 + l2 + l3 + l4)
    } else {
        0.0
    };
    Ok(VolumeTerms {
        f,
        rdev,
        t1,
        t2,
        t3,
        t4,
        zero_div,
        v31,
        v32,
        lam32,
        cubic: j.norm * dh2 + j.norm.powi(3),
        w12: h2 + dh2,
        c1: j.norm + j.dnorm,
        mass: h2 * f,
        div2: dot(&j.div, &j.div),
    })
}

#[derive(Clone, Copy, Debug, Default)]
struct BoundaryTerms {
    hdiff: f64,
    ih: f64,
    b31: f64,
    b32: f64,
    lhs41: f64,
    rhs41: f64,
    leak41: f64,
    kappa_div: f64,
    div_norm: f64,
    c42: f64,
    omega_div: f64,
    umbilic1: f64,
    umbilic2: f64,
    lam32: f64,
    b1: f64,
    b2: f64,
    b3: f64,
    b4: f64,
    cubic: f64,
    c1: f64,
    tangential: f64,
}

fn boundary_terms(j: &FieldJet, b: &BoundaryEval, c: f64) -> Result<BoundaryTerms> {
    let n = j.n;
    let nf = n as f64;
    let nu = &b.nubar_frame;
    let e = &b.frame_unit;
    let hb = b.hbar;
    let dnf = b.dnubar_f;
    let d = boundary_data(j, b);
    let mean = mean_exact_jet(j, b)?;
    let nn = d.nn;
    let sa2: f64 = d.a.iter().map(|v| v * v).sum();
    let hdiff = mean.h_exact - hb;

    let dnu_tr = dot(&j.dtrace, nu);
    let hnu = apply(j, nu);
    let div_nu = dot(&j.div, nu);
    let h_nu_div = dot(&hnu, &j.div);
    let hnu_dtr = dot(&hnu, &j.dtrace);
    // Σ h_jl (D_ν h_jl − D_l h_jν)
    let mut curl = 0.0;
    // Σ h_kp D_k h_jp ν_j
    let mut hdh = 0.0;
    for p in 0..n {
        for l in 0..n {
            let dnu_h: f64 = (0..n).map(|k| nu[k] * j.dhf(k, p, l)).sum();
            let dl_hnu: f64 = (0..n).map(|q| j.dhf(l, p, q) * nu[q]).sum();
            curl += j.hf(p, l) * (dnu_h - dl_hnu);
            hdh += j.hf(l, p) * dl_hnu;
        }
    }
    let b31 = c * (dnu_tr - div_nu - curl - hnu_dtr + h_nu_div);
    let lhs41 = dnu_tr - 0.5 * hdh - curl - hnu_dtr;
    let rhs41 = -(1.0 - nn) * d.s
        + (1.0 - 0.5 * nn) * nn * hb
        + (3.0 * nf - 2.0) / (2.0 * (nf - 1.0)) * sa2 * hb;
    let div_e: Vec<f64> = e.iter().map(|ea| dot(&j.div, ea)).collect();
    let leak41 = (1.0 - 1.5 * nn) * div_nu - 1.5 * dot(&d.a, &div_e);
    let kappa_div = ((1.0 - 1.5 * nn).powi(2) + 2.25 * sa2).sqrt();

    let h2 = j.norm * j.norm;
    let b32 = 0.25 * (h2 + 3.0 * nn * nn) * dnf + c * lhs41;
    let c42 = (2.0 - nn) * hdiff - lhs41
        + 0.25 * nn * nn * hb
        + nf / (2.0 * (nf - 1.0)) * sa2 * hb;

    let mut da_anu = 0.0;
    let mut da_nunu_a = 0.0;
    let mut umbilic1: f64 = 0.0;
    let mut umbilic2: f64 = 0.0;
    for (ea, aa) in e.iter().zip(&d.a) {
        da_anu += j.dform(ea, ea, nu);
        da_nunu_a += j.dform(ea, nu, nu) * aa;
        let s1: f64 = e.iter().map(|eb| j.dform(eb, ea, eb)).sum();
        let s2: f64 = e.iter().map(|eb| j.dform(ea, eb, eb)).sum();
        umbilic1 = umbilic1.max((s1 - nf / (nf - 1.0) * aa * hb).abs());
        umbilic2 = umbilic2.max((s2 - 2.0 / (nf - 1.0) * aa * hb).abs());
    }
    let omega_div = (1.0 - 0.5 * nn) * da_anu - 0.5 * da_nunu_a - (1.0 - 0.5 * nn) * nn * hb
        - sa2 * hb / (nf - 1.0);

    Ok(BoundaryTerms {
        hdiff,
        ih: c * (2.0 - nn) * hdiff,
        b31,
        b32,
        lhs41,
        rhs41,
        leak41,
        kappa_div,
        div_norm: dot(&j.div, &j.div).sqrt(),
        c42,
        omega_div,
        umbilic1,
        umbilic2,
        lam32: c * (div_nu - h_nu_div),
        b1: nn * nn * dnf,
        b2: 0.5 * sa2 * dnf,
        b3: 0.25 * nn * nn * hb * c,
        b4: nf / (2.0 * (nf - 1.0)) * sa2 * hb * c,
        cubic: h2 * j.dnorm + j.norm.powi(3),
        c1: j.norm + j.dnorm,
        tangential: d.tangential,
    })
}

/// Every integrated quantity of one field.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Functionals {
    /// `∫(R_g − n(n−1)) f`.
    pub i_r: f64,
    /// `c ∮(2 − N)(H_g − H_ḡ)`.
    pub i_h: f64,
    pub t: [f64; 4],
    pub b: [f64; 4],
    pub zero_divthm: f64,
    /// Full displayed combination of the weighted scalar-curvature identity.
    pub p31: f64,
    /// The divergence-free variant of the same identity.
    pub p32: f64,
    /// Exact value of `p32 − p31` when `δ̄h ≠ 0`.
    pub lambda32: f64,
    pub lhs41: f64,
    pub rhs41: f64,
    /// Exact value of `lhs41 − rhs41` when `δ̄h ≠ 0`.
    pub leak41: f64,
    pub c42: f64,
    /// `I_R + I_H + Q`.
    pub key: f64,
    /// Exact leakage of `key`: `lambda32 − c·leak41`.
    pub lambda_key: f64,
    /// `∮ div_∂Ω ω`.
    pub omega_closure: f64,
    pub umbilic_normal: f64,
    pub umbilic_tangential: f64,
    pub cubic_volume: f64,
    pub cubic_boundary: f64,
    pub c1: f64,
    pub w12_sq: f64,
    /// `∫|h|² f`.
    pub mass: f64,
    pub div_l2: f64,
    pub div_sup: f64,
    /// `∮|δ̄h|`.
    pub div_boundary_l1: f64,
    pub kappa_div: f64,
    pub min_scalar_deficit: f64,
    pub min_mean_deficit: f64,
    pub tangential_max: f64,
}

impl Functionals {
    pub fn q(&self) -> f64 {
        self.t.iter().sum::<f64>() + self.b.iter().sum::<f64>()
    }

    pub fn cubic(&self) -> f64 {
        self.cubic_volume + self.cubic_boundary
    }

    /// `κ_div ∮|δ̄h|`, a bound for `|leak41|`.
    pub fn leak41_bound(&self) -> f64 {
        self.kappa_div * self.div_boundary_l1
    }
}

fn vsum<T>(domain: &Domain, items: &[T], g: impl Fn(&T) -> f64) -> Result<f64> {
    let v: Vec<f64> = items.iter().map(g).collect();
    sum_volume(&domain.rule, &v)
}

fn bsum<T>(domain: &Domain, items: &[T], g: impl Fn(&T) -> f64) -> Result<f64> {
    let v: Vec<f64> = items.iter().map(g).collect();
    sum_boundary(&domain.rule, &v)
}

fn max_of<T>(items: &[T], g: impl Fn(&T) -> f64) -> f64 {
    items.iter().map(g).fold(0.0, f64::max)
}

fn min_of<T>(items: &[T], g: impl Fn(&T) -> f64) -> f64 {
    items.iter().map(g).fold(f64::INFINITY, f64::min)
}

/// Integrates every functional from cached jets.
pub fn evaluate(domain: &Domain, samples: &FieldSamples) -> Result<Functionals> {
    let c = domain.spec.c;
    let vt = domain
        .points
        .iter()
        .zip(&samples.volume)
        .collect::<Vec<_>>();
    let vt = par_map(&vt, |(p, j)| volume_terms(j, p))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let bt = domain
        .boundary
        .iter()
        .zip(&samples.boundary)
        .collect::<Vec<_>>();
    let bt = par_map(&bt, |(b, j)| boundary_terms(j, b, c))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let i_r = vsum(domain, &vt, |v| v.rdev * v.f)?;
    let i_h = bsum(domain, &bt, |b| b.ih)?;
    let t = [
        vsum(domain, &vt, |v| v.t1)?,
        vsum(domain, &vt, |v| v.t2)?,
        vsum(domain, &vt, |v| v.t3)?,
        vsum(domain, &vt, |v| v.t4)?,
    ];
    let b = [
        bsum(domain, &bt, |b| b.b1)?,
        bsum(domain, &bt, |b| b.b2)?,
        bsum(domain, &bt, |b| b.b3)?,
        bsum(domain, &bt, |b| b.b4)?,
    ];
    let p31 = vsum(domain, &vt, |v| v.v31)? + bsum(domain, &bt, |b| b.b31)?;
    let p32 = vsum(domain, &vt, |v| v.v32)? + bsum(domain, &bt, |b| b.b32)?;
    let lambda32 = vsum(domain, &vt, |v| v.lam32)? + bsum(domain, &bt, |b| b.lam32)?;
    let lhs41 = bsum(domain, &bt, |b| b.lhs41)?;
    let rhs41 = bsum(domain, &bt, |b| b.rhs41)?;
    let leak41 = bsum(domain, &bt, |b| b.leak41)?;
    let c42 = bsum(domain, &bt, |b| b.c42)?;
    let div_l2 = vsum(domain, &vt, |v| v.div2)?.max(0.0).sqrt();
    let q = t.iter().sum::<f64>() + b.iter().sum::<f64>();
    Ok(Functionals {
        i_r,
        i_h,
        t,
        b,
        zero_divthm: vsum(domain, &vt, |v| v.zero_div)?,
        p31,
        p32,
        lambda32,
        lhs41,
        rhs41,
        leak41,
        c42,
        key: i_r + i_h + q,
        lambda_key: lambda32 - c * leak41,
        omega_closure: bsum(domain, &bt, |b| b.omega_div)?,
        umbilic_normal: max_of(&bt, |b| b.umbilic1),
        umbilic_tangential: max_of(&bt, |b| b.umbilic2),
        cubic_volume: vsum(domain, &vt, |v| v.cubic)?,
        cubic_boundary: bsum(domain, &bt, |b| b.cubic)?,
        c1: max_of(&vt, |v| v.c1).max(max_of(&bt, |b| b.c1)),
        w12_sq: vsum(domain, &vt, |v| v.w12)?,
        mass: vsum(domain, &vt, |v| v.mass)?,
        div_l2,
        div_sup: max_of(&vt, |v| v.div2).sqrt(),
        div_boundary_l1: bsum(domain, &bt, |b| b.div_norm)?,
        kappa_div: max_of(&bt, |b| b.kappa_div),
        min_scalar_deficit: min_of(&vt, |v| v.rdev),
        min_mean_deficit: min_of(&bt, |b| b.hdiff),
        tangential_max: max_of(&bt, |b| b.tangential),
    })
}

/// Per-boundary-node pair coefficients `(β-pair, b2-pair)` integrands:
/// `(∂_ν̄f + ¼H_ḡc) N²` and `(½∂_ν̄f + n/(2(n−1)) H_ḡ c) Σa²`.
pub fn boundary_pair_integrands(domain: &Domain, samples: &FieldSamples) -> Vec<(f64, f64)> {
    let c = domain.spec.c;
    let nf = domain.n() as f64;
    domain
        .boundary
        .iter()
        .zip(&samples.boundary)
        .map(|(b, j)| {
            let d = boundary_data(j, b);
            let sa2: f64 = d.a.iter().map(|v| v * v).sum();
            let beta = b.dnubar_f + 0.25 * b.hbar * c;
            let b2 = 0.5 * b.dnubar_f + nf / (2.0 * (nf - 1.0)) * b.hbar * c;
            (beta * d.nn * d.nn, b2 * sa2)
        })
        .collect()
}

pub fn functionals(domain: &Domain, h: &SymTensorField) -> Result<Functionals> {
    evaluate(domain, &FieldSamples::new(h, domain)?)
}

/// `I_R = ∫_Ω (R_g − n(n−1)) f dvol`.
pub fn deficit_scalar(domain: &Domain, h: &SymTensorField) -> Result<f64> {
    let vals = par_map(&domain.points, |p| {
        let j = jet_at_order(h, p, true)?;
        Ok((scalar_exact_jet(&j)? - (p.n * (p.n - 1)) as f64) * p.f)
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;
    sum_volume(&domain.rule, &vals)
}

/// `I_H = c ∮_∂Ω (2 − h(ν̄,ν̄))(H_g − H_ḡ) dσ`.
pub fn deficit_mean(domain: &Domain, h: &SymTensorField) -> Result<f64> {
    let c = domain.spec.c;
    let vals = par_map(&domain.boundary, |b| {
        let j = jet_at_order(h, &b.point, false)?;
        let m = mean_exact_jet(&j, b)?;
        Ok(c * (2.0 - j.form(&b.nubar_frame, &b.nubar_frame)) * (m.h_exact - b.hbar))
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;
    sum_boundary(&domain.rule, &vals)
}

/// `∫_Ω [(n−1) tr h f − Σ (D_i tr h − δh_i) F_i] dvol`, zero for admissible `h`.
pub fn zero_divthm_identity(domain: &Domain, h: &SymTensorField) -> Result<f64> {
    let vals = par_map(&domain.points, |p| {
        let j = jet_at_order(h, p, false)?;
        let grad = p.gradf_frame();
        let mut v = (p.n as f64 - 1.0) * j.trace * p.f;
        for i in 0..p.n {
            v -= (j.dtrace[i] - j.div[i]) * grad[i];
        }
        Ok(v)
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;
    sum_volume(&domain.rule, &vals)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QuadraticFormBreakdown {
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    pub t4: f64,
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    pub b4: f64,
    pub q: f64,
    pub i_r: f64,
    pub i_h: f64,
    /// `B1 + B3`.
    pub pair_normal: f64,
    /// `B2 + B4`.
    pub pair_tangential: f64,
    pub cubic_volume: f64,
    pub cubic_boundary: f64,
}

impl From<&Functionals> for QuadraticFormBreakdown {
    fn from(f: &Functionals) -> Self {
        QuadraticFormBreakdown {
            t1: f.t[0],
            t2: f.t[1],
            t3: f.t[2],
            t4: f.t[3],
            b1: f.b[0],
            b2: f.b[1],
            b3: f.b[2],
            b4: f.b[3],
            q: f.q(),
            i_r: f.i_r,
            i_h: f.i_h,
            pair_normal: f.b[0] + f.b[2],
            pair_tangential: f.b[1] + f.b[3],
            cubic_volume: f.cubic_volume,
            cubic_boundary: f.cubic_boundary,
        }
    }
}

pub fn quadratic_form(domain: &Domain, h: &SymTensorField) -> Result<QuadraticFormBreakdown> {
    Ok((&functionals(domain, h)?).into())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CubicBound {
    pub volume: f64,
    pub boundary: f64,
    /// `sup_nodes (|h| + |∇̄h|)`.
    pub c1: f64,
    /// `∫(|h|² + |∇̄h|²)`.
    pub w12_sq: f64,
    /// `(volume + boundary) / (c1 · w12_sq)`, zero for `h = 0`.
    pub trace_ratio: f64,
}

impl From<&Functionals> for CubicBound {
    fn from(f: &Functionals) -> Self {
        let den = f.c1 * f.w12_sq;
        CubicBound {
            volume: f.cubic_volume,
            boundary: f.cubic_boundary,
            c1: f.c1,
            w12_sq: f.w12_sq,
            trace_ratio: if den > 0.0 { f.cubic() / den } else { 0.0 },
        }
    }
}

/// Cubic bounds need only first-order jets.
pub fn cubic_bound(domain: &Domain, h: &SymTensorField) -> Result<CubicBound> {
    let vol = par_map(&domain.points, |p| {
        jet_at_order(h, p, false).map(|j| (j.norm, j.dnorm))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let bdy = par_map(&domain.boundary, |b| {
        jet_at_order(h, &b.point, false).map(|j| (j.norm, j.dnorm))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let volume = vsum(domain, &vol, |&(a, d)| a * d * d + a.powi(3))?;
    let boundary = bsum(domain, &bdy, |&(a, d)| a * a * d + a.powi(3))?;
    let w12_sq = vsum(domain, &vol, |&(a, d)| a * a + d * d)?;
    let c1 = max_of(&vol, |&(a, d)| a + d).max(max_of(&bdy, |&(a, d)| a + d));
    let den = c1 * w12_sq;
    Ok(CubicBound {
        volume,
        boundary,
        c1,
        w12_sq,
        trace_ratio: if den > 0.0 { (volume + boundary) / den } else { 0.0 },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdentityTag {
    Prop31,
    Prop32,
    Prop41,
    Cor42,
    Key,
    ZeroDivthm,
    OmegaClosed,
}

impl IdentityTag {
    pub const ALL: [IdentityTag; 7] = [
        IdentityTag::ZeroDivthm,
        IdentityTag::Prop31,
        IdentityTag::Prop32,
        IdentityTag::Prop41,
        IdentityTag::OmegaClosed,
        IdentityTag::Cor42,
        IdentityTag::Key,
    ];

    pub fn name(self) -> &'static str {
        match self {
            IdentityTag::Prop31 => "prop31",
            IdentityTag::Prop32 => "prop32",
            IdentityTag::Prop41 => "prop41",
            IdentityTag::Cor42 => "cor42",
            IdentityTag::Key => "key",
            IdentityTag::ZeroDivthm => "zero_divthm",
            IdentityTag::OmegaClosed => "omega_closed",
        }
    }

    /// Exact identities have no cubic scaling to fit.
    pub fn is_exact(self) -> bool {
        matches!(
            self,
            IdentityTag::Prop41 | IdentityTag::ZeroDivthm | IdentityTag::OmegaClosed
        )
    }

    /// Signed residual, its cubic bound, and the exact divergence leakage.
    fn pick(self, f: &Functionals) -> (f64, f64, Option<f64>) {
        match self {
            IdentityTag::Prop31 => (f.p31, f.cubic(), None),
            IdentityTag::Prop32 => (f.p32, f.cubic(), Some(f.lambda32)),
            IdentityTag::Prop41 => (f.lhs41 - f.rhs41, 0.0, Some(f.leak41)),
            IdentityTag::Cor42 => (f.c42, f.cubic_boundary, Some(-f.leak41)),
            IdentityTag::Key => (f.key, f.cubic(), Some(f.lambda_key)),
            IdentityTag::ZeroDivthm => (f.zero_divthm, 0.0, None),
            IdentityTag::OmegaClosed => (f.omega_closure, 0.0, None),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IdentityReport {
    pub tag: IdentityTag,
    /// `|residual|` at the given field.
    pub residual: f64,
    pub cubic: f64,
    /// `residual / cubic` (estimates only).
    pub ratio: Option<f64>,
    /// Exact contribution of `δ̄h ≠ 0` to the residual.
    pub leakage: Option<f64>,
    /// `|residual − leakage|`.
    pub corrected: Option<f64>,
    /// `κ_div ∮|δ̄h|`.
    pub leakage_bound: f64,
    pub slope: Option<SlopeFit>,
    pub corrected_slope: Option<SlopeFit>,
    pub div_l2: f64,
    pub div_sup: f64,
    pub meta: ReportMeta,
    pub details: BTreeMap<String, f64>,
}

fn details_of(f: &Functionals) -> BTreeMap<String, f64> {
    let mut d = BTreeMap::new();
    d.insert("i_r".into(), f.i_r);
    d.insert("i_h".into(), f.i_h);
    d.insert("q".into(), f.q());
    d.insert("p31".into(), f.p31);
    d.insert("p32".into(), f.p32);
    d.insert("lambda32".into(), f.lambda32);
    d.insert("lhs41".into(), f.lhs41);
    d.insert("rhs41".into(), f.rhs41);
    d.insert("leak41".into(), f.leak41);
    d.insert("c42".into(), f.c42);
    d.insert("umbilic_normal".into(), f.umbilic_normal);
    d.insert("umbilic_tangential".into(), f.umbilic_tangential);
    d.insert("kappa_div".into(), f.kappa_div);
    d.insert("c1".into(), f.c1);
    d
}

/// Evaluates one identity; with `eps`, also fits the scaling exponent of
/// the raw and the leakage-corrected residual under `h → εh`.
pub fn identity_report(
    domain: &Domain,
    h: &SymTensorField,
    tag: IdentityTag,
    eps: Option<&[f64]>,
) -> Result<IdentityReport> {
    let samples = FieldSamples::new(h, domain)?;
    identity_report_from(domain, &samples, tag, eps)
}

pub fn identity_report_from(
    domain: &Domain,
    samples: &FieldSamples,
    tag: IdentityTag,
    eps: Option<&[f64]>,
) -> Result<IdentityReport> {
    let f = evaluate(domain, samples)?;
    let (r, cubic, leak) = tag.pick(&f);
    let (slope, corrected_slope) = match eps {
        Some(eps) if !tag.is_exact() => {
            check_eps(eps)?;
            let mut raw = Vec::new();
            let mut cor = Vec::new();
            for &e in eps {
                let fe = evaluate(domain, &samples.scaled(e))?;
                let (re, _, le) = tag.pick(&fe);
                raw.push(re.abs());
                cor.push((re - le.unwrap_or(0.0)).abs());
            }
            let raw_fit = fit_slope(eps, raw, 0.0)?;
            let cor_fit = match leak {
                Some(_) => Some(fit_slope(eps, cor, 0.0)?),
                None => None,
            };
            (Some(raw_fit), cor_fit)
        }
        _ => (None, None),
    };
    Ok(IdentityReport {
        tag,
        residual: r.abs(),
        cubic,
        ratio: if tag.is_exact() || cubic == 0.0 {
            None
        } else {
            Some(r.abs() / cubic)
        },
        leakage: leak,
        corrected: leak.map(|l| (r - l).abs()),
        leakage_bound: f.leak41_bound(),
        slope,
        corrected_slope,
        div_l2: f.div_l2,
        div_sup: f.div_sup,
        meta: domain.meta(),
        details: details_of(&f),
    })
}

/// `div_∂Ω ω` at a boundary point by central differences of the extension
/// `W = (1 − ½N)(h(ν̄,·)♯ − N ν̄)` along the tangent frame, with
/// `ν̄ = x/|x|` on every sphere `|x| = const`.
pub fn omega_divergence_fd(h: &SymTensorField, b: &BoundaryEval, step: f64) -> f64 {
    let n = b.point.n;
    let w = |y: &[f64]| -> Vec<f64> {
        let lam = background_unchecked(y).lambda;
        let m = h.eval(y);
        let r = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        let nu: Vec<f64> = y.iter().map(|v| v / r).collect();
        let u: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|k| m[i * n + k] * nu[k]).sum::<f64>() / (lam * lam))
            .collect();
        let nn = dot(&u, &nu);
        (0..n)
            .map(|i| (1.0 - 0.5 * nn) * (u[i] - nn * nu[i]) / lam)
            .collect()
    };
    let x = b.x();
    let p = &b.point;
    let w0 = w(x);
    let mut div = 0.0;
    for e in &b.frame {
        let plus: Vec<f64> = x.iter().zip(e).map(|(a, d)| a + step * d).collect();
        let minus: Vec<f64> = x.iter().zip(e).map(|(a, d)| a - step * d).collect();
        let (wp, wm) = (w(&plus), w(&minus));
        for k in 0..n {
            let mut cov = (wp[k] - wm[k]) / (2.0 * step);
            for i in 0..n {
                for jj in 0..n {
                    cov += e[i] * p.gamma(k, i, jj) * w0[jj];
                }
            }
            div += p.lambda * p.lambda * cov * e[k];
        }
    }
    div
}

/// `div_∂Ω ω` from the jet, by the closed formula.
pub fn omega_divergence_formula(h: &SymTensorField, b: &BoundaryEval) -> Result<f64> {
    let j = jet_at_order(h, &b.point, false)?;
    let d = boundary_data(&j, b);
    let nf = j.n as f64;
    let nu = &b.nubar_frame;
    let sa2: f64 = d.a.iter().map(|v| v * v).sum();
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    for (ea, aa) in b.frame_unit.iter().zip(&d.a) {
        s1 += j.dform(ea, ea, nu);
        s2 += j.dform(ea, nu, nu) * aa;
    }
    Ok((1.0 - 0.5 * d.nn) * (s1 - d.nn * b.hbar) - 0.5 * s2 - sa2 * b.hbar / (nf - 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::make_admissible_field;
    use crate::geometry::QuadParams;

    fn domain(n: usize, c: f64) -> Domain {
        let spec = ChartSpec::new(n, c)
            .unwrap()
            .with_quad(QuadParams::coarse_for(n))
            .unwrap();
        Domain::new(&spec).unwrap()
    }

    #[test]
    fn zero_field_gives_zero_everywhere() {
        let d = domain(2, 0.9);
        let f = functionals(&d, &SymTensorField::zero(2)).unwrap();
        for v in [f.i_r, f.i_h, f.q(), f.p31, f.p32, f.lhs41, f.rhs41, f.c42, f.key, f.cubic()] {
            assert!(v.abs() < 1e-14, "{v}");
        }
    }

    #[test]
    fn leakage_functionals_are_exact() {
        let d = domain(2, 0.85);
        let h = make_admissible_field(&d.spec, 5, 0.1, 2).unwrap();
        let f = functionals(&d, &h).unwrap();
        let scale = f.t[0] + f.mass;
        assert!((f.p32 - f.p31 - f.lambda32).abs() < 1e-9 * scale, "{} vs {}", f.p32 - f.p31, f.lambda32);
        assert!((f.lhs41 - f.rhs41 - f.leak41).abs() < 1e-9 * scale);
        assert!(f.omega_closure.abs() < 1e-10);
    }

    #[test]
    fn omega_formula_matches_differences() {
        let d = domain(3, 0.8);
        let h = make_admissible_field(&d.spec, 9, 0.1, 2).unwrap();
        for b in d.boundary.iter().step_by(37) {
            let exact = omega_divergence_formula(&h, b).unwrap();
            let fd = omega_divergence_fd(&h, b, 1e-4 * d.spec.rho0);
            assert!((exact - fd).abs() < 1e-6, "{exact} vs {fd}");
        }
    }

    #[test]
    fn cubic_bound_is_homogeneous() {
        let d = domain(2, 0.9);
        let h = make_admissible_field(&d.spec, 2, 0.1, 2).unwrap();
        let a = cubic_bound(&d, &h).unwrap();
        let b = cubic_bound(&d, &h.scaled(0.5)).unwrap();
        assert!((b.volume - a.volume / 8.0).abs() < 1e-14 * a.volume.max(1e-300) + 1e-18);
        let f = functionals(&d, &h).unwrap();
        assert!((f.cubic_volume - a.volume).abs() <= 1e-12 * a.volume);
    }
}
