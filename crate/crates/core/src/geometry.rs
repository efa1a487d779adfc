//! Round background geometry of the cap `Ω = {f ≥ c}` in one stereographic chart.
//!
//! Points of `S^n` are written as `X = (λx, λ − 1)` with `λ = 2/(1+|x|²)`,
//! i.e. stereographic projection from the south pole. The north pole sits at
//! `x = 0`, the round metric is `ḡ = λ² δ`, the height function is
//! `f = X_{n+1} = λ − 1`, and `Ω` becomes the Euclidean ball `|x| ≤ ρ0`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Node counts for the product quadrature and the finite-difference step
/// used by the cross-check paths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadParams {
    pub radial: usize,
    /// `[angle]` for n = 2, `[polar, azimuth]` for n = 3.
    pub angular: Vec<usize>,
    pub fd_step: f64,
}

impl QuadParams {
    pub fn default_for(n: usize) -> Self {
        match n {
            2 => QuadParams {
                radial: 48,
                angular: vec![96],
                fd_step: 1e-3,
            },
            _ => QuadParams {
                radial: 32,
                angular: vec![24, 48],
                fd_step: 1e-3,
            },
        }
    }

    /// Coarser grid for expensive sweeps; still spectrally accurate for
    /// low-degree polynomial fields.
    pub fn coarse_for(n: usize) -> Self {
        match n {
            2 => QuadParams {
                radial: 24,
                angular: vec![48],
                fd_step: 1e-3,
            },
            _ => QuadParams {
                radial: 14,
                angular: vec![12, 24],
                fd_step: 1e-3,
            },
        }
    }

    /// Doubles every node count.
    pub fn refined(&self) -> Self {
        QuadParams {
            radial: self.radial * 2,
            angular: self.angular.iter().map(|a| a * 2).collect(),
            fd_step: self.fd_step,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChartSpec {
    pub n: usize,
    pub c: f64,
    pub rho0: f64,
    pub quad: QuadParams,
}

/// Validates `(n, c)` and computes the chart radius `ρ0 = √((1−c)/(1+c))`.
pub fn build_chart(n: usize, c: f64, quad: QuadParams) -> Result<ChartSpec> {
    if n < 2 {
        return Err(Error::Domain(format!("dimension must be at least 2, got {n}")));
    }
    if !(c > 0.0 && c < 1.0) {
        return Err(Error::Domain(format!("boundary height must lie in (0,1), got {c}")));
    }
    if quad.radial < 4 || quad.angular.iter().any(|&a| a < 4) {
        return Err(Error::Config("quadrature node counts must be at least 4".into()));
    }
    let expected_angular = if n == 2 { 1 } else { 2 };
    if n <= 3 && quad.angular.len() != expected_angular {
        return Err(Error::Config(format!(
            "n = {n} needs {expected_angular} angular node counts, got {}",
            quad.angular.len()
        )));
    }
    if !(quad.fd_step > 0.0 && quad.fd_step.is_finite()) {
        return Err(Error::Config("finite-difference step must be positive".into()));
    }
    let rho0 = ((1.0 - c) / (1.0 + c)).sqrt();
    Ok(ChartSpec { n, c, rho0, quad })
}

impl ChartSpec {
    /// Chart with the default quadrature for `n`.
    pub fn new(n: usize, c: f64) -> Result<Self> {
        build_chart(n, c, QuadParams::default_for(n))
    }

    pub fn with_quad(&self, quad: QuadParams) -> Result<Self> {
        build_chart(self.n, self.c, quad)
    }

    /// Mean curvature of `∂Ω` in the round metric, `(n−1)c/√(1−c²)`.
    pub fn hbar(&self) -> f64 {
        (self.n as f64 - 1.0) * self.c / (1.0 - self.c * self.c).sqrt()
    }

    /// Normal derivative of `f` on `∂Ω`, `−√(1−c²)`.
    pub fn dnubar_f(&self) -> f64 {
        -(1.0 - self.c * self.c).sqrt()
    }

    /// Geodesic radius of the cap.
    pub fn geodesic_radius(&self) -> f64 {
        self.c.acos()
    }

    /// Closed-form `vol_ḡ(Ω)`.
    pub fn volume(&self) -> f64 {
        let r0 = self.geodesic_radius();
        match self.n {
            2 => 2.0 * PI * (1.0 - self.c),
            3 => 2.0 * PI * (r0 - r0.sin() * r0.cos()),
            n => sphere_area(n - 1) * simpson(|r| r.sin().powi(n as i32 - 1), 0.0, r0, 2000),
        }
    }

    /// Closed-form `σ_ḡ(∂Ω)`.
    pub fn boundary_area(&self) -> f64 {
        sphere_area(self.n - 1) * (1.0 - self.c * self.c).powf((self.n as f64 - 1.0) / 2.0)
    }
}

/// Area of the unit sphere `S^k ⊂ R^{k+1}`.
fn sphere_area(k: usize) -> f64 {
    match k {
        0 => 2.0,
        1 => 2.0 * PI,
        _ => 2.0 * PI / (k as f64 - 1.0) * sphere_area(k - 2),
    }
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, m: usize) -> f64 {
    let m = m + m % 2;
    let h = (b - a) / m as f64;
    let mut s = f(a) + f(b);
    for k in 1..m {
        s += if k % 2 == 1 { 4.0 } else { 2.0 } * f(a + k as f64 * h);
    }
    s * h / 3.0
}

/// Background geometry at one chart point. Tensor arrays are flattened
/// row-major: `gbar[i*n+j]`, `gammabar[(k*n+i)*n+j] = Γ̄^k_{ij}`,
/// `dgammabar[((l*n+k)*n+i)*n+j] = ∂_l Γ̄^k_{ij}`.
#[derive(Clone, Debug)]
pub struct PointEval {
    pub n: usize,
    pub x: Vec<f64>,
    pub lambda: f64,
    pub gbar: Vec<f64>,
    pub gammabar: Vec<f64>,
    pub dgammabar: Vec<f64>,
    pub f: f64,
    /// Components `∂_i f`.
    pub gradf: Vec<f64>,
    /// `∇̄²_{ij} f`.
    pub hessf: Vec<f64>,
    /// Radius of the chart ball the point was validated against
    /// (infinite for unchecked evaluations).
    pub chart_radius: f64,
}

impl PointEval {
    pub fn gamma(&self, k: usize, i: usize, j: usize) -> f64 {
        let n = self.n;
        self.gammabar[(k * n + i) * n + j]
    }

    pub fn dgamma(&self, l: usize, k: usize, i: usize, j: usize) -> f64 {
        let n = self.n;
        self.dgammabar[((l * n + k) * n + i) * n + j]
    }

    /// `|∇̄f|²_ḡ`.
    pub fn gradf_norm2(&self) -> f64 {
        self.gradf.iter().map(|v| v * v).sum::<f64>() / (self.lambda * self.lambda)
    }

    /// Gradient of `f` in the ḡ-orthonormal frame `E_i = λ^{-1} ∂_i`.
    pub fn gradf_frame(&self) -> Vec<f64> {
        self.gradf.iter().map(|v| v / self.lambda).collect()
    }
}

/// Closed-form background at `x`, which must satisfy `|x| ≤ ρ0`.
pub fn eval_background(spec: &ChartSpec, x: &[f64]) -> Result<PointEval> {
    if x.len() != spec.n {
        return Err(Error::Domain(format!(
            "point has {} coordinates, chart has n = {}",
            x.len(),
            spec.n
        )));
    }
    let r2: f64 = x.iter().map(|v| v * v).sum();
    if r2.sqrt() > spec.rho0 * (1.0 + 1e-12) {
        return Err(Error::Domain(format!(
            "point at radius {} lies outside the chart radius {}",
            r2.sqrt(),
            spec.rho0
        )));
    }
    let mut p = background_unchecked(x);
    p.chart_radius = spec.rho0;
    Ok(p)
}

/// Background at any point of `R^n` (the chart covers `S^n` minus the south pole).
pub fn background_unchecked(x: &[f64]) -> PointEval {
    let n = x.len();
    let r2: f64 = x.iter().map(|v| v * v).sum();
    let lambda = 2.0 / (1.0 + r2);
    let l2 = lambda * lambda;
    let delta = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };

    let mut gbar = vec![0.0; n * n];
    for i in 0..n {
        gbar[i * n + i] = l2;
    }
    // ∂_j log λ and its derivative
    let phi: Vec<f64> = x.iter().map(|&v| -lambda * v).collect();
    let dphi = |l: usize, j: usize| l2 * x[l] * x[j] - lambda * delta(l, j);

    let mut gammabar = vec![0.0; n * n * n];
    let mut dgammabar = vec![0.0; n * n * n * n];
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                gammabar[(k * n + i) * n + j] =
                    delta(k, i) * phi[j] + delta(k, j) * phi[i] - delta(i, j) * phi[k];
                for l in 0..n {
                    dgammabar[((l * n + k) * n + i) * n + j] = delta(k, i) * dphi(l, j)
                        + delta(k, j) * dphi(l, i)
                        - delta(i, j) * dphi(l, k);
                }
            }
        }
    }

    let f = lambda - 1.0;
    let gradf: Vec<f64> = x.iter().map(|&v| -l2 * v).collect();
    let mut hessf = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let second = -l2 * delta(i, j) + 2.0 * l2 * lambda * x[i] * x[j];
            let mut corr = 0.0;
            for k in 0..n {
                corr += gammabar[(k * n + i) * n + j] * gradf[k];
            }
            hessf[i * n + j] = second - corr;
        }
    }
    PointEval {
        n,
        x: x.to_vec(),
        lambda,
        gbar,
        gammabar,
        dgammabar,
        f,
        gradf,
        hessf,
        chart_radius: f64::INFINITY,
    }
}

/// Background data at a boundary point together with an adapted frame.
/// `nubar` and `frame` are chart components; `nubar_frame` and
/// `frame_unit` are the same vectors in the ḡ-orthonormal frame `λ^{-1}∂_i`,
/// where they are Euclidean unit vectors.
#[derive(Clone, Debug)]
pub struct BoundaryEval {
    pub point: PointEval,
    pub nubar: Vec<f64>,
    pub frame: Vec<Vec<f64>>,
    pub nubar_frame: Vec<f64>,
    pub frame_unit: Vec<Vec<f64>>,
    pub hbar: f64,
    pub dnubar_f: f64,
    pub area_weight: f64,
}

impl BoundaryEval {
    pub fn x(&self) -> &[f64] {
        &self.point.x
    }
}

/// Unit vector and tangent frame on the unit sphere from angular coordinates.
fn angular_frame(n: usize, angles: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    match n {
        2 => {
            let [t] = angles else {
                return Err(Error::Domain("n = 2 boundary needs one angle".into()));
            };
            Ok((vec![t.cos(), t.sin()], vec![vec![-t.sin(), t.cos()]]))
        }
        3 => {
            let [th, ph] = angles else {
                return Err(Error::Domain("n = 3 boundary needs (polar, azimuth)".into()));
            };
            if !(0.0..=PI).contains(th) {
                return Err(Error::Domain(format!("polar angle {th} outside [0, π]")));
            }
            let (st, ct, sp, cp) = (th.sin(), th.cos(), ph.sin(), ph.cos());
            Ok((
                vec![st * cp, st * sp, ct],
                vec![vec![ct * cp, ct * sp, -st], vec![-sp, cp, 0.0]],
            ))
        }
        _ => Err(Error::Domain(format!(
            "angular boundary parametrization implemented for n ∈ {{2,3}}, got {n}"
        ))),
    }
}

/// Boundary background at the point with the given angular coordinates.
pub fn eval_boundary(spec: &ChartSpec, angles: &[f64]) -> Result<BoundaryEval> {
    let (unit, tangents) = angular_frame(spec.n, angles)?;
    Ok(boundary_from_unit(spec, &unit, tangents))
}

/// Boundary background at an arbitrary point of `|x| = ρ0`, with a frame
/// obtained by Gram–Schmidt against the coordinate axes.
pub fn eval_boundary_at(spec: &ChartSpec, x: &[f64]) -> Result<BoundaryEval> {
    let r: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if x.len() != spec.n || (r - spec.rho0).abs() > 1e-10 * spec.rho0.max(1.0) {
        return Err(Error::Domain(format!(
            "point at radius {r} is not on the boundary radius {}",
            spec.rho0
        )));
    }
    let unit: Vec<f64> = x.iter().map(|v| v / r).collect();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for axis in 0..spec.n {
        let mut v = vec![0.0; spec.n];
        v[axis] = 1.0;
        for b in std::iter::once(&unit).chain(basis.iter()) {
            let d: f64 = v.iter().zip(b).map(|(a, c)| a * c).sum();
            for (vi, bi) in v.iter_mut().zip(b) {
                *vi -= d * bi;
            }
        }
        let norm: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-6 && basis.len() < spec.n - 1 {
            basis.push(v.iter().map(|a| a / norm).collect());
        }
    }
    Ok(boundary_from_unit(spec, &unit, basis))
}

fn boundary_from_unit(spec: &ChartSpec, unit: &[f64], tangents: Vec<Vec<f64>>) -> BoundaryEval {
    let x: Vec<f64> = unit.iter().map(|u| spec.rho0 * u).collect();
    let mut point = background_unchecked(&x);
    point.chart_radius = spec.rho0;
    let lam = point.lambda;
    let nubar = unit.iter().map(|u| u / lam).collect();
    let frame = tangents
        .iter()
        .map(|t| t.iter().map(|v| v / lam).collect())
        .collect();
    BoundaryEval {
        nubar,
        frame,
        nubar_frame: unit.to_vec(),
        frame_unit: tangents,
        hbar: spec.hbar(),
        dnubar_f: -lam * spec.rho0,
        area_weight: lam.powi(spec.n as i32 - 1),
        point,
    }
}

#[derive(Clone, Debug)]
pub struct VolumeNode {
    pub x: Vec<f64>,
    pub weight: f64,
}

#[derive(Clone, Debug)]
pub struct BoundaryNode {
    pub angles: Vec<f64>,
    pub x: Vec<f64>,
    pub weight: f64,
}

/// Product quadrature on `Ω` and `∂Ω`; weights include the ḡ densities
/// `λ^n r^{n-1}` and `λ^{n-1} ρ0^{n-1}`.
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    pub spec: ChartSpec,
    pub volume: Vec<VolumeNode>,
    pub boundary: Vec<BoundaryNode>,
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    for i in 0..m.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if m == 0 { 1.0 } else { p1 };
            let pm1 = p0;
            dp = m as f64 * (z * p - pm1) / (z * z - 1.0);
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[m - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        weights[i] = w;
        weights[m - 1 - i] = w;
    }
    (nodes, weights)
}

pub fn build_quadrature(spec: &ChartSpec) -> Result<QuadratureRule> {
    let n = spec.n;
    let q = &spec.quad;
    let (gr, gw) = gauss_legendre(q.radial);
    let half = spec.rho0 / 2.0;
    let radial: Vec<(f64, f64)> = gr
        .iter()
        .zip(&gw)
        .map(|(t, w)| {
            let r = half * (t + 1.0);
            let lam = 2.0 / (1.0 + r * r);
            (r, w * half * lam.powi(n as i32) * r.powi(n as i32 - 1))
        })
        .collect();

    let directions: Vec<(Vec<f64>, f64)> = match n {
        2 => {
            let m = q.angular[0];
            (0..m)
                .map(|k| (vec![2.0 * PI * k as f64 / m as f64], 2.0 * PI / m as f64))
                .collect()
        }
        3 => {
            let (ct, cw) = gauss_legendre(q.angular[0]);
            let m = q.angular[1];
            let mut dirs = Vec::with_capacity(ct.len() * m);
            for (t, w) in ct.iter().zip(&cw) {
                for k in 0..m {
                    dirs.push((
                        vec![t.acos(), 2.0 * PI * k as f64 / m as f64],
                        w * 2.0 * PI / m as f64,
                    ));
                }
            }
            dirs
        }
        _ => {
            return Err(Error::Config(format!(
                "product quadrature implemented for n ∈ {{2,3}}, got {n}"
            )))
        }
    };

    let mut volume = Vec::with_capacity(radial.len() * directions.len());
    for &(r, wr) in &radial {
        for (angles, wa) in &directions {
            let (unit, _) = angular_frame(n, angles)?;
            volume.push(VolumeNode {
                x: unit.iter().map(|u| r * u).collect(),
                weight: wr * wa,
            });
        }
    }
    let lam0 = 2.0 / (1.0 + spec.rho0 * spec.rho0);
    let bscale = (lam0 * spec.rho0).powi(n as i32 - 1);
    let mut boundary = Vec::with_capacity(directions.len());
    for (angles, wa) in &directions {
        let (unit, _) = angular_frame(n, angles)?;
        boundary.push(BoundaryNode {
            angles: angles.clone(),
            x: unit.iter().map(|u| spec.rho0 * u).collect(),
            weight: wa * bscale,
        });
    }
    Ok(QuadratureRule {
        spec: spec.clone(),
        volume,
        boundary,
    })
}

/// Pairwise (cascade) summation; the order of additions depends only on the
/// input length.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if values.len() <= BLOCK {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Parallel map over nodes preserving order.
pub(crate) fn par_map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    items.par_iter().map(f).collect()
}

fn weighted(values: &[f64], weights: impl Iterator<Item = f64>, what: &str) -> Result<f64> {
    let mut terms = Vec::with_capacity(values.len());
    for (i, (v, w)) in values.iter().zip(weights).enumerate() {
        if !v.is_finite() {
            return Err(Error::Numeric(format!("non-finite {what} integrand at node {i}: {v}")));
        }
        terms.push(v * w);
    }
    Ok(pairwise_sum(&terms))
}

/// `∫_Ω F dvol_ḡ`.
pub fn integrate_volume(
    rule: &QuadratureRule,
    field: impl Fn(&VolumeNode) -> f64 + Sync + Send,
) -> Result<f64> {
    let values = par_map(&rule.volume, field);
    weighted(&values, rule.volume.iter().map(|v| v.weight), "volume")
}

/// `∫_∂Ω F dσ_ḡ`.
pub fn integrate_boundary(
    rule: &QuadratureRule,
    field: impl Fn(&BoundaryNode) -> f64 + Sync + Send,
) -> Result<f64> {
    let values = par_map(&rule.boundary, field);
    weighted(&values, rule.boundary.iter().map(|v| v.weight), "boundary")
}

/// Sums precomputed per-node values against the volume weights.
pub fn sum_volume(rule: &QuadratureRule, values: &[f64]) -> Result<f64> {
    weighted(values, rule.volume.iter().map(|v| v.weight), "volume")
}

/// Sums precomputed per-node values against the boundary weights.
pub fn sum_boundary(rule: &QuadratureRule, values: &[f64]) -> Result<f64> {
    weighted(values, rule.boundary.iter().map(|v| v.weight), "boundary")
}

/// Residuals of the background identities over the quadrature nodes.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BackgroundReport {
    /// `max |∇̄²f + f ḡ|_ḡ` over volume nodes.
    pub hessian_max: f64,
    /// `max ||∇̄f|² + f² − 1|`.
    pub eikonal_max: f64,
    /// `max |∇̄_{e_a} ν̄ − (H_ḡ/(n−1)) e_a|_ḡ` over boundary nodes.
    pub umbilic_max: f64,
    pub volume_quadrature: f64,
    pub volume_closed: f64,
    pub area_quadrature: f64,
    pub area_closed: f64,
}

/// `∇̄_{e} ν̄` in chart components for the unit normal field `x/(|x|λ)` of
/// the spheres `|x| = const`.
fn normal_derivative(p: &PointEval, e: &[f64]) -> Vec<f64> {
    let n = p.n;
    let x = &p.x;
    let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let lam = p.lambda;
    let nu: Vec<f64> = x.iter().map(|v| v / (r * lam)).collect();
    (0..n)
        .map(|k| {
            let mut s = 0.0;
            for i in 0..n {
                let d = if i == k { 1.0 } else { 0.0 };
                // ∂_i λ = −λ² x_i
                let dnu = d / (r * lam) - x[k] * x[i] / (r.powi(3) * lam) + x[k] * x[i] / r;
                let mut g = 0.0;
                for j in 0..n {
                    g += p.gamma(k, i, j) * nu[j];
                }
                s += e[i] * (dnu + g);
            }
            s
        })
        .collect()
}

pub fn background_check(spec: &ChartSpec) -> Result<BackgroundReport> {
    let rule = build_quadrature(spec)?;
    let n = spec.n;
    let per_node = par_map(&rule.volume, |v| {
        let p = background_unchecked(&v.x);
        let l2 = p.lambda * p.lambda;
        let hess = (0..n * n)
            .map(|k| ((p.hessf[k] + p.f * p.gbar[k]) / l2).powi(2))
            .sum::<f64>()
            .sqrt();
        (hess, (p.gradf_norm2() + p.f * p.f - 1.0).abs())
    });
    let k = spec.hbar() / (n as f64 - 1.0);
    let mut umbilic_max: f64 = 0.0;
    for node in &rule.boundary {
        let b = eval_boundary(spec, &node.angles)?;
        for e in &b.frame {
            let d = normal_derivative(&b.point, e);
            let lam = b.point.lambda;
            let r = d
                .iter()
                .zip(e)
                .map(|(a, ei)| (lam * (a - k * ei)).powi(2))
                .sum::<f64>()
                .sqrt();
            umbilic_max = umbilic_max.max(r);
        }
    }
    Ok(BackgroundReport {
        hessian_max: per_node.iter().map(|t| t.0).fold(0.0, f64::max),
        eikonal_max: per_node.iter().map(|t| t.1).fold(0.0, f64::max),
        umbilic_max,
        volume_quadrature: integrate_volume(&rule, |_| 1.0)?,
        volume_closed: spec.volume(),
        area_quadrature: integrate_boundary(&rule, |_| 1.0)?,
        area_closed: spec.boundary_area(),
    })
}
