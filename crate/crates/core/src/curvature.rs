//! Scalar curvature of `g = ḡ + h` and mean curvature of `∂Ω` under `g`.
//!
//! The primary paths work on frame jets: the exact scalar curvature through
//! the connection-difference tensor `Γ = ∇^g − ∇̄`, and the exact boundary
//! mean curvature from the perturbed unit normal. Both have second-order
//! expansions and brute-force oracles that difference the chart metric
//! directly.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::SymTensorField;
use crate::geometry::{background_unchecked, BoundaryEval, ChartSpec, PointEval};
use crate::jet::{fd_weights, jet_at, jet_at_order, FieldJet};

/// Largest admissible `|h|_ḡ`.
pub const GATE: f64 = 0.5;
/// Tolerance on the tangential block for the boundary formulas.
pub const ADMISSIBLE_TOL: f64 = 1e-8;

/// Rejects jets with `|h|_ḡ > 1/2`.
pub fn check_gate(jet: &FieldJet) -> Result<()> {
    if jet.norm > GATE * (1.0 + 1e-12) {
        return Err(Error::Precondition(format!(
            "|h|_ḡ = {:.6} exceeds the smallness gate {GATE}",
            jet.norm
        )));
    }
    Ok(())
}

/// `ĝ^{-1}` in the orthonormal frame, row-major.
pub fn frame_metric_inverse(jet: &FieldJet) -> Result<Vec<f64>> {
    let n = jet.n;
    let g = DMatrix::from_fn(n, n, |i, j| jet.hf(i, j) + if i == j { 1.0 } else { 0.0 });
    let inv = g
        .cholesky()
        .ok_or_else(|| Error::Numeric("perturbed metric is not positive definite".into()))?
        .inverse();
    Ok(inv.as_slice().to_vec())
}

/// Connection difference `Γ^m_jk` in the frame, stored at `[(m*n+j)*n+k]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GammaTensor {
    pub n: usize,
    pub gamma: Vec<f64>,
}

impl GammaTensor {
    pub fn get(&self, m: usize, j: usize, k: usize) -> f64 {
        let n = self.n;
        self.gamma[(m * n + j) * n + k]
    }
}

/// `Γ^m_jk = ½ g^{lm} (∇̄_j h_kl + ∇̄_k h_jl − ∇̄_l h_jk)` with the full inverse.
pub fn gamma_tensor(jet: &FieldJet, g_inverse: &[f64]) -> GammaTensor {
    let n = jet.n;
    let mut lower = vec![0.0; n * n * n];
    for l in 0..n {
        for j in 0..n {
            for k in 0..n {
                lower[(l * n + j) * n + k] =
                    0.5 * (jet.dhf(j, k, l) + jet.dhf(k, j, l) - jet.dhf(l, j, k));
            }
        }
    }
    let mut gamma = vec![0.0; n * n * n];
    for m in 0..n {
        for j in 0..n {
            for k in 0..n {
                gamma[(m * n + j) * n + k] = (0..n)
                    .map(|l| g_inverse[m * n + l] * lower[(l * n + j) * n + k])
                    .sum();
            }
        }
    }
    GammaTensor { n, gamma }
}

/// Exact `R_g` from a second-order jet.
pub fn scalar_exact_jet(jet: &FieldJet) -> Result<f64> {
    check_gate(jet)?;
    if !jet.has_second() {
        return Err(Error::Config("scalar curvature needs a second-order jet".into()));
    }
    let n = jet.n;
    let gi = frame_metric_inverse(jet)?;
    let gam = gamma_tensor(jet, &gi);
    let gl = |p: usize, q: usize| jet.hf(p, q) + if p == q { 1.0 } else { 0.0 };
    let ginv = |a: usize, b: usize| gi[a * n + b];

    let mut ric = 0.0;
    for i in 0..n {
        ric += ginv(i, i);
    }
    ric *= n as f64 - 1.0;

    // Lowered Γ_{p,jk} = g_pq Γ^q_jk
    let mut low = vec![0.0; n * n * n];
    for p in 0..n {
        for j in 0..n {
            for k in 0..n {
                low[(p * n + j) * n + k] = (0..n).map(|q| gl(p, q) * gam.get(q, j, k)).sum();
            }
        }
    }
    // trace vector Γ^p_{ik} g^{ik}
    let tr: Vec<f64> = (0..n)
        .map(|p| {
            let mut s = 0.0;
            for i in 0..n {
                for k in 0..n {
                    s += ginv(i, k) * gam.get(p, i, k);
                }
            }
            s
        })
        .collect();
    let mut quad1 = 0.0;
    let mut quad2 = 0.0;
    let mut second = 0.0;
    for i in 0..n {
        for k in 0..n {
            let gik = ginv(i, k);
            for j in 0..n {
                for l in 0..n {
                    let gjl = ginv(j, l);
                    let w = gik * gjl;
                    if w == 0.0 {
                        continue;
                    }
                    for p in 0..n {
                        // g_pq Γ^q_il Γ^p_jk
                        quad1 += w * low[(p * n + i) * n + l] * gam.get(p, j, k);
                    }
                    second += w * (jet.d2hf(i, k, j, l) - jet.d2hf(i, l, j, k));
                }
            }
        }
    }
    for j in 0..n {
        for l in 0..n {
            let gjl = ginv(j, l);
            for p in 0..n {
                quad2 += gjl * low[(p * n + j) * n + l] * tr[p];
            }
        }
    }
    Ok(ric + quad1 - quad2 - second)
}

/// Exact `R_g` at a point.
pub fn scalar_exact(field: &SymTensorField, p: &PointEval) -> Result<f64> {
    scalar_exact_jet(&jet_at(field, p)?)
}

/// Second-order expansion of `R_g` from a jet.
pub fn scalar_quadratic(jet: &FieldJet) -> Result<f64> {
    check_gate(jet)?;
    if !jet.has_second() {
        return Err(Error::Config("scalar expansion needs a second-order jet".into()));
    }
    let n = jet.n;
    let nf = n as f64;
    let h2: f64 = jet.norm * jet.norm;
    let dh2: f64 = jet.dnorm * jet.dnorm;
    let mut cross = 0.0;
    for i in 0..n {
        for k in 0..n {
            for p in 0..n {
                cross += jet.dhf(i, k, p) * jet.dhf(k, i, p);
            }
        }
    }
    let dtr2: f64 = jet.dtrace.iter().map(|v| v * v).sum();
    let gi = frame_metric_inverse(jet)?;
    let ginv = |a: usize, b: usize| gi[a * n + b];
    // ∇̄_i g^{ab} = −g^{ac} (∇̄_i h_cd) g^{db}
    let dginv = |i: usize, a: usize, b: usize| {
        let mut s = 0.0;
        for c in 0..n {
            for d in 0..n {
                s -= ginv(a, c) * jet.dhf(i, c, d) * ginv(d, b);
            }
        }
        s
    };
    let w = |k: usize, j: usize, l: usize| jet.dhf(k, j, l) - jet.dhf(l, j, k);
    let dw = |i: usize, k: usize, j: usize, l: usize| jet.d2hf(i, k, j, l) - jet.d2hf(i, l, j, k);
    let mut div = 0.0;
    for i in 0..n {
        for k in 0..n {
            let gik = ginv(i, k);
            let dgik = dginv(i, i, k);
            for j in 0..n {
                for l in 0..n {
                    let gjl = ginv(j, l);
                    div += dgik * gjl * w(k, j, l)
                        + gik * dginv(i, j, l) * w(k, j, l)
                        + gik * gjl * dw(i, k, j, l);
                }
            }
        }
    }
    Ok(nf * (nf - 1.0) - (nf - 1.0) * jet.trace + (nf - 1.0) * h2 - 0.25 * dh2 + 0.5 * cross
        - 0.25 * dtr2
        - div)
}

/// Scalar curvature from the chart metric `g_ij = λ²δ_ij + h_ij` by finite
/// differences of the metric, Christoffel symbols and Riemann tensor.
pub fn scalar_oracle(field: &SymTensorField, x: &[f64], step: f64) -> Result<f64> {
    let n = x.len();
    let metric = |y: &[f64]| -> Vec<f64> {
        let lam = background_unchecked(y).lambda;
        let mut g = field.eval(y);
        for i in 0..n {
            g[i * n + i] += lam * lam;
        }
        g
    };
    let nn = n * n;
    let offs = [-2.0, -1.0, 0.0, 1.0, 2.0];
    let w1 = fd_weights(&offs, 1);
    let w2 = fd_weights(&offs, 2);
    let shifted = |k: usize, s: f64, l: usize, t: f64| {
        let mut y = x.to_vec();
        y[k] += s * step;
        y[l] += t * step;
        metric(&y)
    };
    let g0 = metric(x);
    let mut dg = vec![0.0; n * nn];
    let mut ddg = vec![0.0; nn * nn];
    for k in 0..n {
        for (m, &s) in offs.iter().enumerate() {
            let v = if s == 0.0 { g0.clone() } else { shifted(k, s, k, 0.0) };
            for (a, val) in v.iter().enumerate() {
                dg[k * nn + a] += w1[m] * val / step;
                ddg[(k * n + k) * nn + a] += w2[m] * val / (step * step);
            }
        }
        for l in (k + 1)..n {
            for (a_i, &s) in offs.iter().enumerate() {
                for (b_i, &t) in offs.iter().enumerate() {
                    let w = w1[a_i] * w1[b_i];
                    if w == 0.0 {
                        continue;
                    }
                    let v = shifted(k, s, l, t);
                    for (a, val) in v.iter().enumerate() {
                        let d = w * val / (step * step);
                        ddg[(k * n + l) * nn + a] += d;
                        ddg[(l * n + k) * nn + a] += d;
                    }
                }
            }
        }
    }
    let gmat = DMatrix::from_row_slice(n, n, &g0);
    let ginv = gmat
        .try_inverse()
        .ok_or_else(|| Error::Numeric("singular metric in oracle".into()))?;
    let gi = |a: usize, b: usize| ginv[(a, b)];
    let d1 = |e: usize, a: usize, b: usize| dg[e * nn + a * n + b];
    let d2 = |e: usize, f: usize, a: usize, b: usize| ddg[(e * n + f) * nn + a * n + b];

    // Γ^a_bc and ∂_e Γ^a_bc
    let mut gam = vec![0.0; n * nn];
    let mut dgam = vec![0.0; nn * nn];
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                let mut s = 0.0;
                for d in 0..n {
                    s += 0.5 * gi(a, d) * (d1(b, d, c) + d1(c, d, b) - d1(d, b, c));
                }
                gam[(a * n + b) * n + c] = s;
                for e in 0..n {
                    let mut t = 0.0;
                    for d in 0..n {
                        // ∂_e g^{ad} = −g^{ap} ∂_e g_pq g^{qd}
                        let mut dgi = 0.0;
                        for p in 0..n {
                            for q in 0..n {
                                dgi -= gi(a, p) * d1(e, p, q) * gi(q, d);
                            }
                        }
                        t += 0.5 * dgi * (d1(b, d, c) + d1(c, d, b) - d1(d, b, c))
                            + 0.5 * gi(a, d) * (d2(e, b, d, c) + d2(e, c, d, b) - d2(e, d, b, c));
                    }
                    dgam[((e * n + a) * n + b) * n + c] = t;
                }
            }
        }
    }
    let ga = |a: usize, b: usize, c: usize| gam[(a * n + b) * n + c];
    let dga = |e: usize, a: usize, b: usize, c: usize| dgam[((e * n + a) * n + b) * n + c];
    // R^a_bcd = ∂_c Γ^a_db − ∂_d Γ^a_cb + Γ^a_ce Γ^e_db − Γ^a_de Γ^e_cb, Ric_bd = R^a_bad
    let mut r = 0.0;
    for b in 0..n {
        for d in 0..n {
            let mut ric = 0.0;
            for a in 0..n {
                ric += dga(a, a, d, b) - dga(d, a, a, b);
                for e in 0..n {
                    ric += ga(a, a, e) * ga(e, d, b) - ga(a, d, e) * ga(e, a, b);
                }
            }
            r += gi(b, d) * ric;
        }
    }
    if !r.is_finite() {
        return Err(Error::Numeric(format!("non-finite oracle curvature at {x:?}")));
    }
    Ok(r)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CurvatureSample {
    pub x: Vec<f64>,
    pub r_exact: f64,
    pub r_oracle: f64,
    pub r_quadratic: f64,
    pub remainder: f64,
    /// `|h| |∇̄h|² + |h|³`.
    pub local_bound: f64,
}

/// All scalar-curvature evaluations at one point.
pub fn curvature_sample(field: &SymTensorField, p: &PointEval, step: f64) -> Result<CurvatureSample> {
    let jet = jet_at(field, p)?;
    let r_exact = scalar_exact_jet(&jet)?;
    let r_quadratic = scalar_quadratic(&jet)?;
    let r_oracle = scalar_oracle(field, &p.x, step)?;
    Ok(CurvatureSample {
        x: p.x.clone(),
        r_exact,
        r_oracle,
        r_quadratic,
        remainder: r_exact - r_quadratic,
        local_bound: jet.norm * jet.dnorm.powi(2) + jet.norm.powi(3),
    })
}

/// Boundary quantities of `h` in the adapted frame.
#[derive(Clone, Debug)]
pub struct BoundaryData {
    /// `h(ν̄, ν̄)`.
    pub nn: f64,
    /// `h(e_a, ν̄)`.
    pub a: Vec<f64>,
    /// `Σ_a (2(∇̄_{e_a}h)(e_a, ν̄) − (∇̄_ν̄ h)(e_a, e_a))`.
    pub s: f64,
    /// Largest `|h(e_a, e_b)|`.
    pub tangential: f64,
}

pub fn boundary_data(jet: &FieldJet, b: &BoundaryEval) -> BoundaryData {
    let nu = &b.nubar_frame;
    let e = &b.frame_unit;
    let nn = jet.form(nu, nu);
    let a: Vec<f64> = e.iter().map(|ea| jet.form(ea, nu)).collect();
    let mut s = 0.0;
    let mut tangential: f64 = 0.0;
    for ea in e {
        s += 2.0 * jet.dform(ea, ea, nu) - jet.dform(nu, ea, ea);
        for eb in e {
            tangential = tangential.max(jet.form(ea, eb).abs());
        }
    }
    BoundaryData {
        nn,
        a,
        s,
        tangential,
    }
}

fn check_admissible(d: &BoundaryData) -> Result<()> {
    if d.tangential > ADMISSIBLE_TOL {
        return Err(Error::Precondition(format!(
            "tangential boundary block {:.3e} exceeds {ADMISSIBLE_TOL:.0e}; field is not admissible",
            d.tangential
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MeanCurvSample {
    pub x: Vec<f64>,
    pub h_exact: f64,
    pub h_quadratic: f64,
    pub remainder: f64,
    /// Perturbed unit normal in chart components.
    pub nu: Vec<f64>,
    /// The same vector in the ḡ-orthonormal frame.
    pub nu_frame: Vec<f64>,
    /// `g(ν, ν̄)`.
    pub g_nu_nubar: f64,
    /// `g(ν, ν)`, equal to one up to rounding.
    pub g_nu_nu: f64,
    /// `|h|² |∇̄h| + |h|³`.
    pub local_bound: f64,
}

/// Exact mean curvature of `∂Ω` under `g` from a first-order jet.
pub fn mean_exact_jet(jet: &FieldJet, b: &BoundaryEval) -> Result<MeanCurvSample> {
    check_gate(jet)?;
    let d = boundary_data(jet, b);
    check_admissible(&d)?;
    let n = jet.n;
    let sa2: f64 = d.a.iter().map(|v| v * v).sum();
    let den2 = 1.0 + d.nn - sa2;
    if den2 <= 0.0 {
        return Err(Error::Numeric("perturbed normal has non-positive length".into()));
    }
    let den = den2.sqrt();
    let h_exact = (b.hbar * (1.0 + d.nn) - 0.5 * d.s) / den;
    let mut nu_frame = b.nubar_frame.clone();
    for (aa, ea) in d.a.iter().zip(&b.frame_unit) {
        for k in 0..n {
            nu_frame[k] -= aa * ea[k];
        }
    }
    for v in nu_frame.iter_mut() {
        *v /= den;
    }
    let gform = |u: &[f64], v: &[f64]| {
        let eu: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
        eu + jet.form(u, v)
    };
    let g_nu_nu = gform(&nu_frame, &nu_frame);
    let g_nu_nubar = gform(&nu_frame, &b.nubar_frame);
    let h_quadratic = mean_quadratic_from(&d, b.hbar);
    Ok(MeanCurvSample {
        x: b.point.x.clone(),
        h_exact,
        h_quadratic,
        remainder: h_exact - h_quadratic,
        nu: nu_frame.iter().map(|v| v / jet.lambda).collect(),
        nu_frame,
        g_nu_nubar,
        g_nu_nu,
        local_bound: jet.norm.powi(2) * jet.dnorm + jet.norm.powi(3),
    })
}

pub fn mean_exact(field: &SymTensorField, b: &BoundaryEval) -> Result<MeanCurvSample> {
    mean_exact_jet(&jet_at_order(field, &b.point, false)?, b)
}

fn mean_quadratic_from(d: &BoundaryData, hbar: f64) -> f64 {
    let sa2: f64 = d.a.iter().map(|v| v * v).sum();
    hbar + 0.5 * ((d.nn - 0.25 * d.nn * d.nn + sa2) * hbar - (1.0 - 0.5 * d.nn) * d.s)
}

/// Second-order expansion of `H_g`.
pub fn mean_quadratic(jet: &FieldJet, b: &BoundaryEval) -> Result<f64> {
    check_gate(jet)?;
    let d = boundary_data(jet, b);
    check_admissible(&d)?;
    Ok(mean_quadratic_from(&d, b.hbar))
}

/// Mean curvature of `|x| = ρ0` under `g` as `div_g ν_g`, where
/// `ν_g = g^{-1} dr / |dr|_g`, evaluated by finite differences of the chart
/// metric. Does not use the boundary condition.
pub fn mean_oracle(field: &SymTensorField, x: &[f64], step: f64) -> Result<f64> {
    let n = x.len();
    let metric = |y: &[f64]| -> DMatrix<f64> {
        let lam = background_unchecked(y).lambda;
        let h = field.eval(y);
        DMatrix::from_fn(n, n, |i, j| h[i * n + j] + if i == j { lam * lam } else { 0.0 })
    };
    let normal = |y: &[f64]| -> Result<Vec<f64>> {
        let g = metric(y);
        let gi = g
            .try_inverse()
            .ok_or_else(|| Error::Numeric("singular metric in mean oracle".into()))?;
        let r: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        let dr: Vec<f64> = y.iter().map(|v| v / r).collect();
        let up: Vec<f64> = (0..n).map(|k| (0..n).map(|l| gi[(k, l)] * dr[l]).sum()).collect();
        let len: f64 = up.iter().zip(&dr).map(|(a, b)| a * b).sum::<f64>().sqrt();
        Ok(up.iter().map(|v| v / len).collect())
    };
    let offs = [-2.0, -1.0, 1.0, 2.0];
    let w = [1.0 / 12.0, -2.0 / 3.0, 2.0 / 3.0, -1.0 / 12.0];
    let mut div = 0.0;
    let mut dlogdet = vec![0.0; n];
    let g0 = metric(x);
    let gi0 = g0
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numeric("singular metric in mean oracle".into()))?;
    for k in 0..n {
        let mut dgk = DMatrix::zeros(n, n);
        for (s, ws) in offs.iter().zip(w) {
            let mut y = x.to_vec();
            y[k] += s * step;
            div += ws * normal(&y)?[k] / step;
            dgk += metric(&y) * (ws / step);
        }
        // ∂_k log √det g = ½ g^{ab} ∂_k g_ab
        dlogdet[k] = 0.5 * (&gi0 * dgk).trace();
    }
    let nu = normal(x)?;
    div += nu.iter().zip(&dlogdet).map(|(a, b)| a * b).sum::<f64>();
    Ok(div)
}

/// Log-log regression of the sup-node remainder against `ε`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SlopeFit {
    pub eps: Vec<f64>,
    pub values: Vec<f64>,
    pub slope: f64,
    /// `value / ε³`.
    pub ratios: Vec<f64>,
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let m = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Validates an ε grid: at least three entries, positive, strictly decreasing.
pub fn check_eps(eps: &[f64]) -> Result<()> {
    if eps.len() < 3 {
        return Err(Error::Config("eps list needs at least 3 entries".into()));
    }
    if eps.iter().any(|&e| !(e > 0.0)) || eps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Config("eps list must be positive and strictly decreasing".into()));
    }
    Ok(())
}

/// Fits `y(ε)` against `ε` and refuses values at the rounding floor.
pub fn fit_slope(eps: &[f64], values: Vec<f64>, floor: f64) -> Result<SlopeFit> {
    if let Some(&v) = values.iter().find(|&&v| !(v > floor)) {
        return Err(Error::RoundingFloor { value: v });
    }
    let slope = loglog_slope(eps, &values);
    let ratios = eps.iter().zip(&values).map(|(e, v)| v / e.powi(3)).collect();
    Ok(SlopeFit {
        eps: eps.to_vec(),
        values,
        slope,
        ratios,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Which {
    Scalar,
    Mean,
}

/// Fitted exponent of the sup-node expansion remainder under `h → εh`.
/// Jets are linear in `h`, so they are computed once and rescaled.
pub fn remainder_slope(
    spec: &ChartSpec,
    field: &SymTensorField,
    eps: &[f64],
    which: Which,
) -> Result<SlopeFit> {
    check_eps(eps)?;
    let rule = crate::geometry::build_quadrature(spec)?;
    let values = match which {
        Which::Scalar => {
            let jets = rule
                .volume
                .iter()
                .map(|v| jet_at(field, &background_unchecked(&v.x)))
                .collect::<Result<Vec<_>>>()?;
            eps.iter()
                .map(|&e| {
                    let mut worst: f64 = 0.0;
                    for j in &jets {
                        let s = j.scaled(e);
                        worst = worst.max((scalar_exact_jet(&s)? - scalar_quadratic(&s)?).abs());
                    }
                    Ok(worst)
                })
                .collect::<Result<Vec<_>>>()?
        }
        Which::Mean => {
            let pts = rule
                .boundary
                .iter()
                .map(|b| crate::geometry::eval_boundary(spec, &b.angles))
                .collect::<Result<Vec<_>>>()?;
            let jets = pts
                .iter()
                .map(|b| jet_at_order(field, &b.point, false))
                .collect::<Result<Vec<_>>>()?;
            eps.iter()
                .map(|&e| {
                    let mut worst: f64 = 0.0;
                    for (j, b) in jets.iter().zip(&pts) {
                        worst = worst.max(mean_exact_jet(&j.scaled(e), b)?.remainder.abs());
                    }
                    Ok(worst)
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    let scale = match which {
        Which::Scalar => (spec.n * (spec.n - 1)) as f64,
        Which::Mean => spec.hbar().max(1.0),
    };
    fit_slope(eps, values, 1e-12 * scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{make_admissible_field, VectorField};
    use crate::geometry::{eval_background, eval_boundary};

    #[test]
    fn flat_perturbation_gives_round_values() {
        let spec = ChartSpec::new(2, 0.8).unwrap();
        let p = eval_background(&spec, &[0.1, 0.05]).unwrap();
        let h = SymTensorField::zero(2);
        assert!((scalar_exact(&h, &p).unwrap() - 2.0).abs() < 1e-14);
        assert!((scalar_oracle(&h, &p.x, 1e-3).unwrap() - 2.0).abs() < 1e-8);
        let b = eval_boundary(&spec, &[0.3]).unwrap();
        let m = mean_exact(&h, &b).unwrap();
        assert!((m.h_exact - spec.hbar()).abs() < 1e-14);
        assert!((mean_oracle(&h, b.x(), 1e-4).unwrap() - spec.hbar()).abs() < 1e-7);
    }

    #[test]
    fn conformal_scaling_law() {
        for (n, t) in [(2usize, 0.1), (3, 0.2)] {
            let spec = ChartSpec::new(n, 0.7).unwrap();
            let x = vec![0.05; n];
            let p = eval_background(&spec, &x).unwrap();
            let h = SymTensorField::conformal(n, t);
            let expect = (n * (n - 1)) as f64 / (1.0 + t);
            assert!((scalar_exact(&h, &p).unwrap() - expect).abs() < 1e-12);
            assert!((scalar_oracle(&h, &x, 1e-3).unwrap() - expect).abs() < 1e-6);
            let nf = n as f64;
            let quad = scalar_quadratic(&jet_at(&h, &p).unwrap()).unwrap();
            assert!((quad - nf * (nf - 1.0) * (1.0 - t + t * t)).abs() < 1e-12);
        }
    }

    #[test]
    fn gate_rejects_large_fields() {
        let p = background_unchecked(&[0.0, 0.0]);
        let h = SymTensorField::conformal(2, 0.4);
        assert!(matches!(scalar_exact(&h, &p), Err(Error::Precondition(_))));
    }

    #[test]
    fn gamma_defining_identity() {
        let spec = ChartSpec::new(3, 0.6).unwrap();
        let h = make_admissible_field(&spec, 4, 0.2, 2).unwrap();
        let p = eval_background(&spec, &[0.1, -0.2, 0.15]).unwrap();
        let jet = jet_at(&h, &p).unwrap();
        let gi = frame_metric_inverse(&jet).unwrap();
        let gam = gamma_tensor(&jet, &gi);
        let (x, y, z) = ([0.3, -1.0, 0.5], [1.0, 0.2, -0.7], [0.1, 0.4, 0.9]);
        let mut lhs = 0.0;
        for m in 0..3 {
            let mut gxy = 0.0;
            for j in 0..3 {
                for k in 0..3 {
                    gxy += gam.get(m, j, k) * x[j] * y[k];
                }
            }
            for q in 0..3 {
                lhs += (jet.hf(m, q) + if m == q { 1.0 } else { 0.0 }) * gxy * z[q];
            }
        }
        let rhs = 0.5 * (jet.dform(&x, &y, &z) + jet.dform(&y, &x, &z) - jet.dform(&z, &x, &y));
        assert!((lhs - rhs).abs() < 1e-13);
    }

    #[test]
    fn killing_field_deformation_is_trivial() {
        let spec = ChartSpec::new(3, 0.6).unwrap();
        let p = eval_background(&spec, &[0.1, 0.2, -0.1]).unwrap();
        let xi = VectorField::rotation(3, 0, 3).unwrap();
        let l = crate::fields::lie_derivative_metric(&xi).scaled(0.1);
        assert!((scalar_exact(&l, &p).unwrap() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn slope_helpers() {
        let eps = [0.1, 0.05, 0.025];
        let ys: Vec<f64> = eps.iter().map(|e: &f64| 2.0 * e.powi(3)).collect();
        assert!((loglog_slope(&eps, &ys) - 3.0).abs() < 1e-12);
        assert!(check_eps(&[0.1, 0.2, 0.05]).is_err());
        assert!(matches!(
            fit_slope(&eps, vec![1.0, 0.0, 1.0], 1e-14),
            Err(Error::RoundingFloor { .. })
        ));
    }
}
