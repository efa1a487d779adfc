//! Ritz discretization of the quadratic form `Q` on projected admissible
//! fields and its smallest generalized eigenvalue against the weighted mass.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::functionals::Domain;
use super::threshold::{b2_coefficient, beta_threshold, cstar};
use crate::error::{Error, Result};
use crate::fields::{admissible_generator, admissible_generators, SymTensorField};
use crate::gauge::{build_gauge_basis, pivoted_selection, volume_features};
use crate::jet::jet_at_order;

const CHUNK: usize = 128;
/// Pivot threshold for dropping numerically dependent basis vectors.
pub const DEPENDENCE_TOL: f64 = 1e-10;

/// `Q` and the mass matrix `M_αβ = ∫⟨h_α, h_β⟩ f`.
#[derive(Clone, Debug)]
pub struct FormMatrices {
    pub q: DMatrix<f64>,
    pub m: DMatrix<f64>,
}

/// Rows of weighted linear features of the jets at one volume node.
/// `Q_vol = AᵀA`, `M = 2 A_T3ᵀ A_T3`.
fn volume_rows(domain: &Domain, node: usize, jets: &[crate::jet::FieldJet]) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = domain.n();
    let p = &domain.points[node];
    let wf = domain.rule.volume[node].weight * p.f;
    let (s4, s2) = ((0.25 * wf).sqrt(), (0.5 * wf).sqrt());
    let rows = n * n * n + n + 1;
    let cols = jets.len();
    let mut a = DMatrix::zeros(rows, cols);
    let mut t3 = DMatrix::zeros(n * n, cols);
    for (c, j) in jets.iter().enumerate() {
        let mut r = 0;
        for v in &j.dh {
            a[(r, c)] = s4 * v;
            r += 1;
        }
        for v in &j.dtrace {
            a[(r, c)] = s4 * v;
            r += 1;
        }
        a[(r, c)] = s2 * j.trace;
        for (k, v) in j.h.iter().enumerate() {
            t3[(k, c)] = s2 * v;
        }
    }
    (a, t3)
}

/// Boundary rows `(N, a_1 … a_{n−1})` scaled by `√(w|coef|)`, with signs.
fn boundary_rows(domain: &Domain, node: usize, jets: &[crate::jet::FieldJet]) -> (DMatrix<f64>, Vec<f64>) {
    let n = domain.n();
    let nf = n as f64;
    let c = domain.spec.c;
    let b = &domain.boundary[node];
    let w = domain.rule.boundary[node].weight;
    let beta = b.dnubar_f + 0.25 * b.hbar * c;
    let b2 = 0.5 * b.dnubar_f + nf / (2.0 * (nf - 1.0)) * b.hbar * c;
    let mut signs = vec![beta.signum()];
    signs.extend(std::iter::repeat_n(b2.signum(), n - 1));
    let (sb, st) = ((w * beta.abs()).sqrt(), (w * b2.abs()).sqrt());
    let mut a = DMatrix::zeros(n, jets.len());
    for (col, j) in jets.iter().enumerate() {
        a[(0, col)] = sb * j.form(&b.nubar_frame, &b.nubar_frame);
        for (k, e) in b.frame_unit.iter().enumerate() {
            a[(k + 1, col)] = st * j.form(e, &b.nubar_frame);
        }
    }
    (a, signs)
}

/// Assembles `Q` and `M` for the columns of `fields · map`, using linearity
/// of every feature in the field. Chunks are reduced in a fixed order.
fn assemble_mapped(domain: &Domain, fields: &[SymTensorField], map: &DMatrix<f64>) -> Result<FormMatrices> {
    let k = map.ncols();
    let nv = domain.points.len();
    let nb = domain.boundary.len();
    let chunks: Vec<(bool, usize, usize)> = (0..nv)
        .step_by(CHUNK)
        .map(|s| (true, s, (s + CHUNK).min(nv)))
        .chain((0..nb).step_by(CHUNK).map(|s| (false, s, (s + CHUNK).min(nb))))
        .collect();
    let parts = chunks
        .par_iter()
        .map(|&(vol, s, e)| -> Result<(DMatrix<f64>, DMatrix<f64>)> {
            let mut q = DMatrix::zeros(k, k);
            let mut m = DMatrix::zeros(k, k);
            for node in s..e {
                let p = if vol { &domain.points[node] } else { &domain.boundary[node].point };
                let jets = fields
                    .iter()
                    .map(|f| jet_at_order(f, p, false))
                    .collect::<Result<Vec<_>>>()?;
                if vol {
                    let (a, t3) = volume_rows(domain, node, &jets);
                    let a = a * map;
                    let t3 = t3 * map;
                    q += a.transpose() * &a + t3.transpose() * &t3;
                    m += 2.0 * t3.transpose() * &t3;
                } else {
                    let (a, signs) = boundary_rows(domain, node, &jets);
                    let a = a * map;
                    for (r, s) in signs.iter().enumerate() {
                        let row = a.row(r);
                        q += *s * row.transpose() * row;
                    }
                }
            }
            Ok((q, m))
        })
        .collect::<Vec<_>>();
    let mut q = DMatrix::zeros(k, k);
    let mut m = DMatrix::zeros(k, k);
    for part in parts {
        let (pq, pm) = part?;
        q += pq;
        m += pm;
    }
    let q = (&q + q.transpose()) * 0.5;
    let m = (&m + m.transpose()) * 0.5;
    Ok(FormMatrices { q, m })
}

/// `Q_αβ` by polarization of the quadratic form and `M_αβ = ∫⟨h_α,h_β⟩f`.
pub fn assemble_q_matrix(domain: &Domain, fields: &[SymTensorField]) -> Result<FormMatrices> {
    if fields.is_empty() {
        return Err(Error::Config("empty basis".into()));
    }
    assemble_mapped(domain, fields, &DMatrix::identity(fields.len(), fields.len()))
}

fn diag_scale(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    m.diagonal()
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            if d > 0.0 {
                Ok(1.0 / d.sqrt())
            } else {
                Err(Error::BasisDependence(format!("basis vector {i} has zero mass")))
            }
        })
        .collect()
}

fn scaled(m: &DMatrix<f64>, s: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * s[i] * s[j])
}

/// Generalized eigenvalues of `(Q, M)` in increasing order; the first is κ.
pub fn min_eigenvalue(q: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<(f64, Vec<f64>)> {
    let s = diag_scale(m)?;
    let (qs, ms) = (scaled(q, &s), scaled(m, &s));
    let chol = ms.cholesky().ok_or_else(|| {
        Error::BasisDependence("mass matrix is not positive definite".into())
    })?;
    let l = chol.l();
    let pivot = l.diagonal().iter().fold(f64::INFINITY, |a, &b| a.min(b * b));
    if pivot < DEPENDENCE_TOL {
        return Err(Error::BasisDependence(format!(
            "mass matrix is numerically singular (smallest pivot {pivot:.3e})"
        )));
    }
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::BasisDependence("singular mass factor".into()))?;
    let c = &linv * qs * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let mut eig: Vec<f64> = SymmetricEigen::new(c).eigenvalues.iter().copied().collect();
    eig.sort_by(|a, b| a.total_cmp(b));
    Ok((eig[0], eig))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub n: usize,
    pub c: f64,
    pub cstar: f64,
    pub degree: usize,
    pub gauge_degree: usize,
    pub generators: usize,
    pub retained: usize,
    pub kappa: f64,
    pub eigenvalues: Vec<f64>,
    /// `(Q(h_α) − ½M(h_α))/M(h_α)` for every retained basis vector.
    pub excess: Vec<f64>,
    pub min_excess: f64,
    /// Same quantity over seeded random combinations.
    pub min_random_excess: f64,
    pub beta: f64,
    pub b2: f64,
    /// Smallest per-node pair coefficients over the boundary nodes.
    pub min_node_beta: f64,
    pub min_node_b2: f64,
}

/// Projects the admissible generators of the given degree, filters
/// dependence, and solves the generalized eigenproblem.
pub fn spectrum(domain: &Domain, degree: usize, gauge_degree: usize) -> Result<SpectrumReport> {
    let spec = &domain.spec;
    let n = spec.n;
    let gens: Vec<SymTensorField> = admissible_generators(n, degree)
        .iter()
        .map(|g| admissible_generator(spec, g))
        .collect();
    let basis = build_gauge_basis(spec, gauge_degree)?;
    let cols: Vec<Vec<f64>> = gens.iter().map(|g| volume_features(g, &domain.rule)).collect();
    let targets = DMatrix::from_fn(cols[0].len(), gens.len(), |r, c| cols[c][r]);
    let coef = basis.solve_features(&targets)?;
    let (g, l) = (gens.len(), basis.len());
    let map = DMatrix::from_fn(g + l, g, |r, c| {
        if r < g {
            if r == c { 1.0 } else { 0.0 }
        } else {
            -coef[(r - g, c)]
        }
    });
    let mut fields = gens.clone();
    fields.extend(basis.lie.iter().cloned());
    let full = assemble_mapped(domain, &fields, &map)?;
    let s = diag_scale(&full.m)?;
    let keep = pivoted_selection(&scaled(&full.m, &s), DEPENDENCE_TOL);
    let q = full.q.select_rows(&keep).select_columns(&keep);
    let m = full.m.select_rows(&keep).select_columns(&keep);
    let (kappa, eigenvalues) = min_eigenvalue(&q, &m)?;

    let excess: Vec<f64> = (0..keep.len())
        .map(|i| (q[(i, i)] - 0.5 * m[(i, i)]) / m[(i, i)])
        .collect();
    let min_excess = excess.iter().copied().fold(f64::INFINITY, f64::min);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut min_random_excess = f64::INFINITY;
    for _ in 0..32 {
        let v = nalgebra::DVector::from_fn(keep.len(), |i, _| rng.random_range(-1.0..=1.0) * s[keep[i]]);
        let qv = (v.transpose() * &q * &v)[(0, 0)];
        let mv = (v.transpose() * &m * &v)[(0, 0)];
        min_random_excess = min_random_excess.min((qv - 0.5 * mv) / mv);
    }
    let nf = n as f64;
    let mut min_node_beta = f64::INFINITY;
    let mut min_node_b2 = f64::INFINITY;
    for b in &domain.boundary {
        min_node_beta = min_node_beta.min(b.dnubar_f + 0.25 * b.hbar * spec.c);
        min_node_b2 = min_node_b2.min(0.5 * b.dnubar_f + nf / (2.0 * (nf - 1.0)) * b.hbar * spec.c);
    }
    Ok(SpectrumReport {
        n,
        c: spec.c,
        cstar: cstar(n)?,
        degree,
        gauge_degree,
        generators: gens.len(),
        retained: keep.len(),
        kappa,
        eigenvalues,
        excess,
        min_excess,
        min_random_excess,
        beta: beta_threshold(n, spec.c)?,
        b2: b2_coefficient(n, spec.c)?,
        min_node_beta,
        min_node_b2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::functionals::functionals;
    use crate::fields::make_admissible_field;
    use crate::geometry::{ChartSpec, QuadParams};

    fn domain(n: usize, c: f64) -> Domain {
        let spec = ChartSpec::new(n, c)
            .unwrap()
            .with_quad(QuadParams::coarse_for(n))
            .unwrap();
        Domain::new(&spec).unwrap()
    }

    #[test]
    fn single_vector_matches_quadratic_form() {
        let d = domain(2, 0.9);
        let h = make_admissible_field(&d.spec, 3, 0.1, 2).unwrap();
        let fm = assemble_q_matrix(&d, std::slice::from_ref(&h)).unwrap();
        let f = functionals(&d, &h).unwrap();
        assert!((fm.q[(0, 0)] - f.q()).abs() < 1e-12 * f.q().abs());
        assert!((fm.m[(0, 0)] - f.mass).abs() < 1e-12 * f.mass);
        let (k, _) = min_eigenvalue(&fm.q, &fm.m).unwrap();
        assert!((k - f.q() / f.mass).abs() < 1e-10);
    }

    #[test]
    fn dependent_basis_is_rejected() {
        let d = domain(2, 0.9);
        let h = make_admissible_field(&d.spec, 3, 0.1, 2).unwrap();
        let fm = assemble_q_matrix(&d, &[h.clone(), h.scaled(2.0)]).unwrap();
        assert!(matches!(min_eigenvalue(&fm.q, &fm.m), Err(Error::BasisDependence(_))));
    }
}
