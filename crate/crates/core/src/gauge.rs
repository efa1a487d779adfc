//! Linearized slice projection: remove from `h` its L²(dvol_ḡ)-closest Lie
//! derivative `L_ξ ḡ` over a finite space of boundary-vanishing `ξ`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{lie_derivative_metric, packed_pairs, SymTensorField, VectorField};
use crate::geometry::{
    background_unchecked, build_quadrature, eval_boundary, ChartSpec, QuadratureRule,
};
use crate::jet::jet_at_order;
use crate::poly::monomials;

/// Default pivot threshold for dropping dependent Lie derivatives.
pub const FILTER_TOL: f64 = 1e-10;
/// Largest accepted Gram condition number.
pub const MAX_COND: f64 = 1e12;

/// Weighted packed samples of a tensor field on the volume nodes, arranged
/// so that the Euclidean dot product of two sample vectors equals the
/// quadrature of `⟨h, k⟩_ḡ`.
pub fn volume_features(field: &SymTensorField, rule: &QuadratureRule) -> Vec<f64> {
    let n = rule.spec.n;
    let pairs = packed_pairs(n);
    let per_node = crate::geometry::par_map(&rule.volume, |v| {
        let lam2 = background_unchecked(&v.x).lambda.powi(2);
        let m = field.eval(&v.x);
        let sw = v.weight.sqrt();
        pairs
            .iter()
            .map(|&(i, j)| {
                let c = if i == j { 1.0 } else { std::f64::consts::SQRT_2 };
                sw * c * m[i * n + j] / lam2
            })
            .collect::<Vec<f64>>()
    });
    per_node.concat()
}

/// `∫_Ω ⟨a, b⟩_ḡ dvol`.
pub fn inner_volume(a: &SymTensorField, b: &SymTensorField, rule: &QuadratureRule) -> f64 {
    let fa = volume_features(a, rule);
    let fb = volume_features(b, rule);
    dot(&fa, &fb)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let prod: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    crate::geometry::pairwise_sum(&prod)
}

#[derive(Clone, Debug)]
pub struct GaugeBasis {
    pub spec: ChartSpec,
    pub degree: usize,
    /// Retained vector fields, in generation order.
    pub fields: Vec<VectorField>,
    pub lie: Vec<SymTensorField>,
    /// Number of raw candidates before filtering.
    pub raw: usize,
    /// Smallest eigenvalue of the diagonally normalized Gram matrix.
    pub gram_min_eig: f64,
    /// Condition number of the diagonally normalized Gram matrix.
    pub gram_cond: f64,
    rule: QuadratureRule,
    /// Columns: features of the retained Lie derivatives.
    features: DMatrix<f64>,
    gram: DMatrix<f64>,
}

/// Greedy diagonal-pivoted Cholesky on a symmetric PSD matrix with unit
/// diagonal; returns the indices whose pivots exceed `tol`, in input order.
pub fn pivoted_selection(gram: &DMatrix<f64>, tol: f64) -> Vec<usize> {
    let m = gram.nrows();
    let mut a = gram.clone();
    let mut chosen = Vec::new();
    let mut remaining: Vec<usize> = (0..m).collect();
    let mut l = DMatrix::<f64>::zeros(m, m);
    let mut col = 0;
    while !remaining.is_empty() {
        let (pos, &best) = remaining
            .iter()
            .enumerate()
            .max_by(|x, y| a[(*x.1, *x.1)].total_cmp(&a[(*y.1, *y.1)]).then(y.0.cmp(&x.0)))
            .expect("nonempty");
        let piv = a[(best, best)];
        if !(piv > tol) {
            break;
        }
        remaining.remove(pos);
        let root = piv.sqrt();
        for &r in &remaining {
            l[(r, col)] = a[(r, best)] / root;
        }
        for &r in &remaining {
            for &s in &remaining {
                a[(r, s)] -= l[(r, col)] * l[(s, col)];
            }
        }
        chosen.push(best);
        col += 1;
    }
    chosen.sort_unstable();
    chosen
}

fn normalized(g: &DMatrix<f64>) -> DMatrix<f64> {
    let d: Vec<f64> = (0..g.nrows()).map(|i| g[(i, i)].max(f64::MIN_POSITIVE).sqrt()).collect();
    DMatrix::from_fn(g.nrows(), g.ncols(), |i, j| g[(i, j)] / (d[i] * d[j]))
}

/// Deterministic `AᵀA` over row chunks.
fn gram_of(features: &DMatrix<f64>) -> DMatrix<f64> {
    const CHUNK: usize = 4096;
    let rows = features.nrows();
    let cols = features.ncols();
    let starts: Vec<usize> = (0..rows).step_by(CHUNK).collect();
    let parts: Vec<DMatrix<f64>> = starts
        .par_iter()
        .map(|&s| {
            let len = CHUNK.min(rows - s);
            let block = features.rows(s, len);
            block.transpose() * block
        })
        .collect();
    let mut acc = DMatrix::zeros(cols, cols);
    for p in parts {
        acc += p;
    }
    acc
}

pub fn build_gauge_basis(spec: &ChartSpec, degree: usize) -> Result<GaugeBasis> {
    build_gauge_basis_with(spec, degree, FILTER_TOL)
}

/// Monomial basis `(ρ0² − |x|²) y^β e_i`, `|β| ≤ degree`, filtered for
/// numerical dependence of the Lie derivatives.
pub fn build_gauge_basis_with(spec: &ChartSpec, degree: usize, tol: f64) -> Result<GaugeBasis> {
    let n = spec.n;
    let rule = build_quadrature(spec)?;
    let mut candidates = Vec::new();
    for e in monomials(n, degree) {
        for dir in 0..n {
            candidates.push(VectorField::bump_monomial(spec, e.clone(), dir));
        }
    }
    let raw = candidates.len();
    let lie: Vec<SymTensorField> = candidates.iter().map(lie_derivative_metric).collect();
    let cols: Vec<Vec<f64>> = lie.iter().map(|l| volume_features(l, &rule)).collect();
    let rows = cols[0].len();
    let all = DMatrix::from_fn(rows, raw, |r, c| cols[c][r]);
    let gram_all = gram_of(&all);
    let keep = pivoted_selection(&normalized(&gram_all), tol);
    if keep.is_empty() {
        return Err(Error::Config("gauge basis is empty after filtering".into()));
    }
    let features = all.select_columns(&keep);
    let gram = gram_all.select_rows(&keep).select_columns(&keep);
    let eig = SymmetricEigen::new(normalized(&gram)).eigenvalues;
    let min = eig.min();
    let max = eig.max();
    Ok(GaugeBasis {
        spec: spec.clone(),
        degree,
        fields: keep.iter().map(|&k| candidates[k].clone()).collect(),
        lie: keep.iter().map(|&k| lie[k].clone()).collect(),
        raw,
        gram_min_eig: min,
        gram_cond: if min > 0.0 { max / min } else { f64::INFINITY },
        rule,
        features,
        gram,
    })
}

impl GaugeBasis {
    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// Least-squares coefficients for several right-hand sides at once.
    /// Each column of `targets` holds the volume features of one field.
    pub fn solve_features(&self, targets: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if self.gram_cond > MAX_COND {
            return Err(Error::IllConditioned {
                cond: self.gram_cond,
                hint: "lower the gauge degree or refine the quadrature".into(),
            });
        }
        let rhs = self.features.transpose() * targets;
        let chol = self.gram.clone().cholesky().ok_or_else(|| Error::IllConditioned {
            cond: self.gram_cond,
            hint: "Gram matrix lost positive definiteness; lower the gauge degree".into(),
        })?;
        Ok(chol.solve(&rhs))
    }

    /// `Σ a_α L_{ξ_α} ḡ`.
    pub fn lie_combination(&self, coeffs: &[f64]) -> SymTensorField {
        let parts: Vec<(f64, &SymTensorField)> = coeffs.iter().copied().zip(&self.lie).collect();
        SymTensorField::linear_combination(self.spec.n, &parts)
    }

    pub fn vector_combination(&self, coeffs: &[f64]) -> Result<VectorField> {
        let parts: Vec<(f64, &VectorField)> = coeffs.iter().copied().zip(&self.fields).collect();
        VectorField::combine(&parts)
    }
}

#[derive(Clone, Debug)]
pub struct ProjectionResult {
    pub coefficients: Vec<f64>,
    pub xi: VectorField,
    pub h_df: SymTensorField,
    pub div_l2: f64,
    pub div_sup: f64,
    pub gram_cond: f64,
    /// `max_α |∫⟨h_df, L_α⟩| / (‖h_df‖‖L_α‖)`.
    pub normal_residual: f64,
    pub h_norm: f64,
    pub h_df_norm: f64,
    pub gauge_norm: f64,
    /// Largest tangential boundary component of `h_df`.
    pub tangential_max: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProjectionSummary {
    pub basis_size: usize,
    pub raw_basis_size: usize,
    pub degree: usize,
    pub coefficients: Vec<f64>,
    pub div_l2: f64,
    pub div_sup: f64,
    pub gram_cond: f64,
    pub normal_residual: f64,
    pub h_norm: f64,
    pub h_df_norm: f64,
    pub gauge_norm: f64,
    pub tangential_max: f64,
}

impl ProjectionResult {
    pub fn summary(&self, basis: &GaugeBasis) -> ProjectionSummary {
        ProjectionSummary {
            basis_size: basis.len(),
            raw_basis_size: basis.raw,
            degree: basis.degree,
            coefficients: self.coefficients.clone(),
            div_l2: self.div_l2,
            div_sup: self.div_sup,
            gram_cond: self.gram_cond,
            normal_residual: self.normal_residual,
            h_norm: self.h_norm,
            h_df_norm: self.h_df_norm,
            gauge_norm: self.gauge_norm,
            tangential_max: self.tangential_max,
        }
    }
}

/// Largest `|h(e_a, e_b)|_ḡ` over the boundary nodes.
pub fn tangential_max(field: &SymTensorField, spec: &ChartSpec, rule: &QuadratureRule) -> Result<f64> {
    let vals = rule
        .boundary
        .iter()
        .map(|b| {
            let be = eval_boundary(spec, &b.angles)?;
            let m = field.eval(be.x());
            let n = spec.n;
            let lam2 = be.point.lambda.powi(2);
            let mut worst: f64 = 0.0;
            for ea in &be.frame_unit {
                for eb in &be.frame_unit {
                    let mut s = 0.0;
                    for i in 0..n {
                        for j in 0..n {
                            s += m[i * n + j] * ea[i] * eb[j];
                        }
                    }
                    worst = worst.max((s / lam2).abs());
                }
            }
            Ok(worst)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(vals.into_iter().fold(0.0, f64::max))
}

/// `(‖δ̄h‖_{L²}, sup_nodes |δ̄h|_ḡ)`.
pub fn divergence_residual(field: &SymTensorField, rule: &QuadratureRule) -> Result<(f64, f64)> {
    let vals = crate::geometry::par_map(&rule.volume, |v| {
        jet_at_order(field, &background_unchecked(&v.x), false)
            .map(|j| j.div.iter().map(|d| d * d).sum::<f64>())
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;
    let l2 = crate::geometry::sum_volume(rule, &vals)?.max(0.0).sqrt();
    let sup = vals.iter().fold(0.0f64, |a, &b| a.max(b)).sqrt();
    Ok((l2, sup))
}

/// Projects `h` onto the L²-orthogonal complement of `{L_ξ ḡ}`.
pub fn slice_project(h: &SymTensorField, basis: &GaugeBasis) -> Result<ProjectionResult> {
    let rule = &basis.rule;
    let fh = volume_features(h, rule);
    let target = DMatrix::from_column_slice(fh.len(), 1, &fh);
    let sol = basis.solve_features(&target)?;
    let coeffs: Vec<f64> = sol.column(0).iter().copied().collect();
    let gauge = basis.lie_combination(&coeffs);
    let h_df = h
        .add_scaled(-1.0, &gauge)
        .with_recipe(crate::fields::FieldRecipe::Projected {
            base: Box::new(h.recipe.clone()),
            gauge_degree: basis.degree,
        });
    let fa = DVector::from_column_slice(&coeffs);
    let fgauge = &basis.features * &fa;
    let fdf: Vec<f64> = fh.iter().zip(fgauge.iter()).map(|(a, b)| a - b).collect();
    let h_norm = dot(&fh, &fh).sqrt();
    let h_df_norm = dot(&fdf, &fdf).sqrt();
    let gauge_norm = dot(fgauge.as_slice(), fgauge.as_slice()).sqrt();
    let mut normal_residual: f64 = 0.0;
    for c in 0..basis.len() {
        let col = basis.features.column(c);
        let lnorm = col.norm();
        let ip = dot(&fdf, col.as_slice());
        if h_df_norm > 0.0 && lnorm > 0.0 {
            normal_residual = normal_residual.max(ip.abs() / (h_df_norm * lnorm));
        }
    }
    let (div_l2, div_sup) = divergence_residual(&h_df, rule)?;
    let tangential = tangential_max(&h_df, &basis.spec, rule)?;
    Ok(ProjectionResult {
        xi: basis.vector_combination(&coeffs)?,
        coefficients: coeffs,
        h_df,
        div_l2,
        div_sup,
        gram_cond: basis.gram_cond,
        normal_residual,
        h_norm,
        h_df_norm,
        gauge_norm,
        tangential_max: tangential,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::QuadParams;

    fn spec2() -> ChartSpec {
        ChartSpec::new(2, 0.8)
            .unwrap()
            .with_quad(QuadParams::coarse_for(2))
            .unwrap()
    }

    #[test]
    fn degree_zero_basis_in_two_dimensions() {
        let b = build_gauge_basis(&spec2(), 0).unwrap();
        assert_eq!(b.raw, 2);
        assert_eq!(b.len(), 2);
        assert!(b.gram_min_eig > 0.0);
    }

    #[test]
    fn pivoting_drops_duplicates() {
        let g = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(pivoted_selection(&g, 1e-10), vec![0, 2]);
    }

    #[test]
    fn pure_gauge_is_annihilated() {
        let spec = spec2();
        let b = build_gauge_basis(&spec, 2).unwrap();
        let h = lie_derivative_metric(&b.fields[3]).scaled(0.05);
        let p = slice_project(&h, &b).unwrap();
        assert!(p.h_df_norm <= 1e-10 * p.h_norm, "{} vs {}", p.h_df_norm, p.h_norm);
    }

    #[test]
    fn zero_field_projection() {
        let spec = spec2();
        let b = build_gauge_basis(&spec, 1).unwrap();
        let p = slice_project(&SymTensorField::zero(2), &b).unwrap();
        assert_eq!(p.div_l2, 0.0);
        assert!(p.coefficients.iter().all(|&a| a == 0.0));
    }
}
