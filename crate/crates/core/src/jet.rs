//! Covariant jets of a perturbation at a point.
//!
//! Jets are stored in the ḡ-orthonormal frame `E_i = λ^{-1} ∂_i`, where the
//! background metric is the identity and every contraction is a plain sum.
//! Chart components follow from `T_{i…} = λ^{rank} T̂_{i…}`.

use crate::error::{Error, Result};
use crate::fields::{packed_pairs, Derivatives, SymTensorField};
use crate::geometry::PointEval;

#[derive(Clone, Debug)]
pub struct FieldJet {
    pub n: usize,
    pub lambda: f64,
    /// `ĥ_ij`, row-major.
    pub h: Vec<f64>,
    /// `(∇̄_k h)_ij` at `[(k*n+i)*n+j]`.
    pub dh: Vec<f64>,
    /// `∇̄²_{l,k} h_ij = (∇̄_l ∇̄_k h)_ij` at `[((l*n+k)*n+i)*n+j]`; empty for
    /// first-order jets.
    pub d2h: Vec<f64>,
    pub trace: f64,
    pub norm: f64,
    pub dnorm: f64,
    /// `(h²)_ik = Σ_j ĥ_ij ĥ_kj`.
    pub h2: Vec<f64>,
    /// `(δ̄h)_q = Σ_i (∇̄_i h)_iq`.
    pub div: Vec<f64>,
    /// `∇̄_k tr h`.
    pub dtrace: Vec<f64>,
    /// Set when a one-sided difference stencil had to be used.
    pub downgraded: bool,
}

impl FieldJet {
    pub fn from_parts(
        n: usize,
        lambda: f64,
        h: Vec<f64>,
        dh: Vec<f64>,
        d2h: Vec<f64>,
        downgraded: bool,
    ) -> Self {
        let trace = (0..n).map(|i| h[i * n + i]).sum();
        let norm = h.iter().map(|v| v * v).sum::<f64>().sqrt();
        let dnorm = dh.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut h2 = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                h2[i * n + k] = (0..n).map(|j| h[i * n + j] * h[k * n + j]).sum();
            }
        }
        let div = (0..n)
            .map(|q| (0..n).map(|i| dh[(i * n + i) * n + q]).sum())
            .collect();
        let dtrace = (0..n)
            .map(|k| (0..n).map(|i| dh[(k * n + i) * n + i]).sum())
            .collect();
        FieldJet {
            n,
            lambda,
            h,
            dh,
            d2h,
            trace,
            norm,
            dnorm,
            h2,
            div,
            dtrace,
            downgraded,
        }
    }

    pub fn zero(n: usize, lambda: f64, second: bool) -> Self {
        let d2 = if second { n * n * n * n } else { 0 };
        Self::from_parts(n, lambda, vec![0.0; n * n], vec![0.0; n * n * n], vec![0.0; d2], false)
    }

    /// `Σ a_k J_k`; all jets must share the point.
    pub fn combine(parts: &[(f64, &FieldJet)]) -> Self {
        let first = parts[0].1;
        let n = first.n;
        let second = parts.iter().all(|(_, j)| !j.d2h.is_empty());
        let mut h = vec![0.0; n * n];
        let mut dh = vec![0.0; n * n * n];
        let mut d2h = vec![0.0; if second { n * n * n * n } else { 0 }];
        let mut downgraded = false;
        for (a, j) in parts {
            axpy(&mut h, *a, &j.h);
            axpy(&mut dh, *a, &j.dh);
            if second {
                axpy(&mut d2h, *a, &j.d2h);
            }
            downgraded |= j.downgraded;
        }
        Self::from_parts(n, first.lambda, h, dh, d2h, downgraded)
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self::combine(&[(a, self)])
    }

    pub fn has_second(&self) -> bool {
        !self.d2h.is_empty()
    }

    pub fn hf(&self, i: usize, j: usize) -> f64 {
        self.h[i * self.n + j]
    }

    pub fn dhf(&self, k: usize, i: usize, j: usize) -> f64 {
        let n = self.n;
        self.dh[(k * n + i) * n + j]
    }

    pub fn d2hf(&self, l: usize, k: usize, i: usize, j: usize) -> f64 {
        let n = self.n;
        self.d2h[((l * n + k) * n + i) * n + j]
    }

    /// Chart component `h_ij`.
    pub fn h_chart(&self, i: usize, j: usize) -> f64 {
        self.lambda.powi(2) * self.hf(i, j)
    }

    /// Chart component `∇̄_k h_ij`.
    pub fn dh_chart(&self, k: usize, i: usize, j: usize) -> f64 {
        self.lambda.powi(3) * self.dhf(k, i, j)
    }

    /// Chart component `∇̄²_{l,k} h_ij`.
    pub fn d2h_chart(&self, l: usize, k: usize, i: usize, j: usize) -> f64 {
        self.lambda.powi(4) * self.d2hf(l, k, i, j)
    }

    /// `h(u, v)` for frame vectors.
    pub fn form(&self, u: &[f64], v: &[f64]) -> f64 {
        let n = self.n;
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += self.h[i * n + j] * u[i] * v[j];
            }
        }
        s
    }

    /// `(∇̄_w h)(u, v)` for frame vectors.
    pub fn dform(&self, w: &[f64], u: &[f64], v: &[f64]) -> f64 {
        let n = self.n;
        let mut s = 0.0;
        for k in 0..n {
            if w[k] == 0.0 {
                continue;
            }
            for i in 0..n {
                for j in 0..n {
                    s += w[k] * self.dh[(k * n + i) * n + j] * u[i] * v[j];
                }
            }
        }
        s
    }

    /// Largest violation of the commutation identity
    /// `∇̄²_{i,l}h_jq − ∇̄²_{l,i}h_jq = h_lq δ_ij − h_iq δ_jl + h_jl δ_iq − h_ij δ_lq`.
    pub fn commutation_residual(&self) -> f64 {
        let n = self.n;
        let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for l in 0..n {
                for j in 0..n {
                    for q in 0..n {
                        let lhs = self.d2hf(i, l, j, q) - self.d2hf(l, i, j, q);
                        let rhs = self.hf(l, q) * d(i, j) - self.hf(i, q) * d(j, l)
                            + self.hf(j, l) * d(i, q)
                            - self.hf(i, j) * d(l, q);
                        worst = worst.max((lhs - rhs).abs());
                    }
                }
            }
        }
        worst
    }
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Chart partial derivatives of the components: values `h[i*n+j]`,
/// `dh[(k*n+i)*n+j] = ∂_k h_ij`, `ddh[((l*n+k)*n+i)*n+j] = ∂_l∂_k h_ij`.
struct Partials {
    h: Vec<f64>,
    dh: Vec<f64>,
    ddh: Vec<f64>,
    downgraded: bool,
}

fn analytic_partials(field: &SymTensorField, x: &[f64], second: bool) -> Result<Partials> {
    let n = field.n();
    let order = if second { 2 } else { 1 };
    if field.max_order() < order {
        return Err(Error::Config(format!(
            "field supports derivatives up to order {}, {order} requested",
            field.max_order()
        )));
    }
    let comps = field.components(x, order);
    let mut h = vec![0.0; n * n];
    let mut dh = vec![0.0; n * n * n];
    let mut ddh = vec![0.0; if second { n.pow(4) } else { 0 }];
    for (c, (i, j)) in comps.iter().zip(packed_pairs(n)) {
        for (a, b) in [(i, j), (j, i)] {
            h[a * n + b] = c.value();
            for k in 0..n {
                dh[(k * n + a) * n + b] = c.d1(k);
                if second {
                    for l in 0..n {
                        ddh[((l * n + k) * n + a) * n + b] = c.d2(l, k);
                    }
                }
            }
        }
    }
    Ok(Partials {
        h,
        dh,
        ddh,
        downgraded: false,
    })
}

/// Finite-difference weights for derivative order `m` on the given offsets
/// (Fornberg's recursion, evaluated at 0).
pub fn fd_weights(offsets: &[f64], m: usize) -> Vec<f64> {
    let np = offsets.len();
    let mut c = vec![vec![0.0; m + 1]; np];
    let mut c1 = 1.0;
    let mut c4 = offsets[0];
    c[0][0] = 1.0;
    for i in 1..np {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = offsets[i];
        for j in 0..i {
            let c3 = offsets[i] - offsets[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[m]).collect()
}

const CENTERED: [f64; 5] = [-2.0, -1.0, 0.0, 1.0, 2.0];

fn inside(x: &[f64], radius: f64) -> bool {
    x.iter().map(|v| v * v).sum::<f64>().sqrt() <= radius * (1.0 + 1e-12)
}

/// Per-axis stencil offsets; axes whose centered stencil leaves the chart
/// ball are replaced by one-sided stencils pointing inward.
fn choose_offsets(x: &[f64], step: f64, radius: f64) -> (Vec<Vec<f64>>, bool) {
    let n = x.len();
    let mut offsets = vec![CENTERED.to_vec(); n];
    let mut shifted = vec![false; n];
    let point = |k: usize, s: f64, l: usize, t: f64| {
        let mut y = x.to_vec();
        y[k] += s * step;
        y[l] += t * step;
        y
    };
    for k in 0..n {
        if offsets[k].iter().any(|&s| !inside(&point(k, s, k, 0.0), radius)) {
            let dir = if x[k] > 0.0 { -1.0 } else { 1.0 };
            offsets[k] = (0..5).map(|m| dir * m as f64).collect();
            shifted[k] = true;
        }
    }
    for k in 0..n {
        for l in 0..n {
            if k == l || shifted[k] {
                continue;
            }
            let exits = offsets[k].iter().any(|&s| {
                offsets[l]
                    .iter()
                    .any(|&t| !inside(&point(k, s, l, t), radius))
            });
            if exits {
                let dir = if x[k] > 0.0 { -1.0 } else { 1.0 };
                offsets[k] = (0..5).map(|m| dir * m as f64).collect();
                shifted[k] = true;
            }
        }
    }
    (offsets, shifted.iter().any(|&s| s))
}

fn fd_partials(field: &SymTensorField, x: &[f64], step: f64, radius: f64, second: bool) -> Partials {
    let n = field.n();
    let (offsets, downgraded) = choose_offsets(x, step, radius);
    let eval = |k: usize, s: f64, l: usize, t: f64| {
        let mut y = x.to_vec();
        y[k] += s * step;
        y[l] += t * step;
        field.eval(&y)
    };
    let h = field.eval(x);
    let w1: Vec<Vec<f64>> = offsets.iter().map(|o| fd_weights(o, 1)).collect();
    let w2: Vec<Vec<f64>> = offsets.iter().map(|o| fd_weights(o, 2)).collect();
    let nn = n * n;
    let mut dh = vec![0.0; n * nn];
    let mut ddh = vec![0.0; if second { nn * nn } else { 0 }];
    for k in 0..n {
        for (s, &o) in offsets[k].iter().enumerate() {
            let v = eval(k, o, k, 0.0);
            axpy(&mut dh[k * nn..(k + 1) * nn], w1[k][s] / step, &v);
            if second {
                let at = (k * n + k) * nn;
                axpy(&mut ddh[at..at + nn], w2[k][s] / (step * step), &v);
            }
        }
    }
    if second {
        for k in 0..n {
            for l in (k + 1)..n {
                let mut acc = vec![0.0; nn];
                for (&s, &ws) in offsets[k].iter().zip(&w1[k]) {
                    for (&t, &wt) in offsets[l].iter().zip(&w1[l]) {
                        if ws * wt != 0.0 {
                            axpy(&mut acc, ws * wt / (step * step), &eval(k, s, l, t));
                        }
                    }
                }
                ddh[(k * n + l) * nn..(k * n + l + 1) * nn].copy_from_slice(&acc);
                ddh[(l * n + k) * nn..(l * n + k + 1) * nn].copy_from_slice(&acc);
            }
        }
    }
    Partials {
        h,
        dh,
        ddh,
        downgraded,
    }
}

/// Covariant jet from chart partials and the closed-form Christoffels.
fn covariant(p: &PointEval, part: Partials, second: bool) -> FieldJet {
    let n = p.n;
    let nn = n * n;
    let (h, ph) = (&part.h, &part.dh);
    let g = |k: usize, i: usize, j: usize| p.gammabar[(k * n + i) * n + j];
    let mut dh = vec![0.0; n * nn];
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let mut v = ph[(k * n + i) * n + j];
                for m in 0..n {
                    v -= g(m, k, i) * h[m * n + j] + g(m, k, j) * h[i * n + m];
                }
                dh[(k * n + i) * n + j] = v;
            }
        }
    }
    let mut d2h = Vec::new();
    if second {
        let pph = &part.ddh;
        let dg = |l: usize, k: usize, i: usize, j: usize| p.dgammabar[((l * n + k) * n + i) * n + j];
        d2h = vec![0.0; nn * nn];
        for l in 0..n {
            for k in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        // ∂_l (∇̄_k h_ij)
                        let mut v = pph[((l * n + k) * n + i) * n + j];
                        for m in 0..n {
                            v -= dg(l, m, k, i) * h[m * n + j]
                                + g(m, k, i) * ph[(l * n + m) * n + j]
                                + dg(l, m, k, j) * h[i * n + m]
                                + g(m, k, j) * ph[(l * n + i) * n + m];
                        }
                        for m in 0..n {
                            v -= g(m, l, k) * dh[(m * n + i) * n + j]
                                + g(m, l, i) * dh[(k * n + m) * n + j]
                                + g(m, l, j) * dh[(k * n + i) * n + m];
                        }
                        d2h[((l * n + k) * n + i) * n + j] = v;
                    }
                }
            }
        }
    }
    let lam = p.lambda;
    let hf: Vec<f64> = h.iter().map(|v| v / lam.powi(2)).collect();
    let dhf: Vec<f64> = dh.iter().map(|v| v / lam.powi(3)).collect();
    let d2hf: Vec<f64> = d2h.iter().map(|v| v / lam.powi(4)).collect();
    FieldJet::from_parts(n, lam, hf, dhf, d2hf, part.downgraded)
}

/// Jet with first and second covariant derivatives.
pub fn jet_at(field: &SymTensorField, p: &PointEval) -> Result<FieldJet> {
    jet_at_order(field, p, true)
}

/// Jet with second derivatives only when `second` is set.
pub fn jet_at_order(field: &SymTensorField, p: &PointEval, second: bool) -> Result<FieldJet> {
    if field.n() != p.n {
        return Err(Error::Domain(format!(
            "field dimension {} does not match point dimension {}",
            field.n(),
            p.n
        )));
    }
    if field.is_zero() {
        return Ok(FieldJet::zero(p.n, p.lambda, second));
    }
    let part = match field.derivatives {
        Derivatives::Analytic => analytic_partials(field, &p.x, second)?,
        Derivatives::FiniteDifference { step } => {
            fd_partials(field, &p.x, step, p.chart_radius, second)
        }
    };
    let jet = covariant(p, part, second);
    if jet.h.iter().chain(&jet.dh).chain(&jet.d2h).any(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("non-finite jet at x = {:?}", p.x)));
    }
    Ok(jet)
}

/// `x ↦ (δ̄h)_l` in chart components.
pub fn divergence_field(field: &SymTensorField) -> impl Fn(&PointEval) -> Result<Vec<f64>> + '_ {
    move |p| {
        let j = jet_at_order(field, p, false)?;
        Ok(j.div.iter().map(|v| v * j.lambda).collect())
    }
}

/// `x ↦ tr_ḡ h`.
pub fn trace_field(field: &SymTensorField) -> impl Fn(&PointEval) -> Result<f64> + '_ {
    move |p| Ok(jet_at_order(field, p, false)?.trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{background_unchecked, eval_background, ChartSpec};

    #[test]
    fn fornberg_reproduces_classic_stencils() {
        let w = fd_weights(&CENTERED, 1);
        let expect = [1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0];
        for (a, b) in w.iter().zip(expect) {
            assert!((a - b).abs() < 1e-14);
        }
        let w2 = fd_weights(&CENTERED, 2);
        let expect2 = [-1.0 / 12.0, 4.0 / 3.0, -5.0 / 2.0, 4.0 / 3.0, -1.0 / 12.0];
        for (a, b) in w2.iter().zip(expect2) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn conformal_jet_is_parallel() {
        let h = SymTensorField::conformal(3, 0.2);
        let p = background_unchecked(&[0.1, -0.2, 0.05]);
        let j = jet_at(&h, &p).unwrap();
        assert!((j.trace - 0.6).abs() < 1e-14);
        assert!(j.dh.iter().all(|v| v.abs() < 1e-13));
        assert!(j.d2h.iter().all(|v| v.abs() < 1e-12));
        assert!(j.div.iter().all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn zero_field_jet() {
        let p = background_unchecked(&[0.1, 0.2]);
        let j = jet_at(&SymTensorField::zero(2), &p).unwrap();
        assert_eq!(j.norm, 0.0);
        assert_eq!(j.dnorm, 0.0);
        assert_eq!(j.d2h.len(), 16);
    }

    #[test]
    fn one_sided_stencil_is_flagged() {
        let spec = ChartSpec::new(2, 0.9).unwrap();
        let h = SymTensorField::conformal(2, 0.1)
            .with_derivatives(Derivatives::FiniteDifference { step: 1e-3 });
        let edge = eval_background(&spec, &[spec.rho0 * 0.999, 0.0]).unwrap();
        assert!(jet_at(&h, &edge).unwrap().downgraded);
        let mid = eval_background(&spec, &[0.0, 0.0]).unwrap();
        let j = jet_at(&h, &mid).unwrap();
        assert!(!j.downgraded);
        assert!(j.dh.iter().all(|v| v.abs() < 1e-9));
    }
}
