//! Perturbation tensors `h`, vector fields `ξ`, and the test-field families.
//!
//! A [`SymTensorField`] is a finite linear combination of analytic sources.
//! Each source returns its packed chart components `h_ij` (`i ≤ j`) as
//! truncated Taylor expansions, so derivatives are exact.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{background_unchecked, build_quadrature, ChartSpec};
use crate::poly::{monomials, Poly};
use crate::taylor::{self, Taylor};

/// Number of independent components of a symmetric `n×n` tensor.
pub fn packed_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Position of `(i, j)` in the packed upper-triangular layout.
pub fn sym_index(n: usize, i: usize, j: usize) -> usize {
    let (a, b) = if i <= j { (i, j) } else { (j, i) };
    a * n - a * (a + 1) / 2 + b
}

/// Packed index pairs in storage order.
pub fn packed_pairs(n: usize) -> Vec<(usize, usize)> {
    let mut v = Vec::with_capacity(packed_len(n));
    for i in 0..n {
        for j in i..n {
            v.push((i, j));
        }
    }
    v
}

/// Analytic symmetric two-tensor in chart components.
pub trait TensorSource: Send + Sync + fmt::Debug {
    fn nvars(&self) -> usize;
    /// Packed components expanded to `order` about `base`.
    fn components(&self, base: &[f64], order: usize) -> Vec<Taylor>;
    /// Highest expansion order the source can deliver.
    fn max_order(&self) -> usize {
        taylor::max_order(self.nvars())
    }
}

fn lambda_taylor(vars: &[Taylor]) -> Taylor {
    let n = vars[0].nvars();
    let order = vars[0].order();
    let mut r2 = Taylor::constant(n, order, 1.0);
    for v in vars {
        r2 += *v * *v;
    }
    r2.recip() * 2.0
}

fn r2_taylor(vars: &[Taylor]) -> Taylor {
    let mut r2 = Taylor::zero(vars[0].nvars(), vars[0].order());
    for v in vars {
        r2 += *v * *v;
    }
    r2
}

/// `h = t ḡ`.
#[derive(Debug)]
struct ConformalSource {
    n: usize,
    t: f64,
}

impl TensorSource for ConformalSource {
    fn nvars(&self) -> usize {
        self.n
    }
    fn components(&self, base: &[f64], order: usize) -> Vec<Taylor> {
        let vars = Taylor::variables(base, order);
        let lam = lambda_taylor(&vars);
        let diag = lam * lam * self.t;
        packed_pairs(self.n)
            .into_iter()
            .map(|(i, j)| if i == j { diag } else { Taylor::zero(self.n, order) })
            .collect()
    }
}

/// `h = (ρ0² − |x|²) s + sym(df ⊗ w)` with polynomial `s` (packed) and `w`.
#[derive(Debug, Clone)]
pub(crate) struct AdmissibleSource {
    pub n: usize,
    pub rho0: f64,
    pub s: Vec<Poly>,
    pub w: Vec<Poly>,
}

impl TensorSource for AdmissibleSource {
    fn nvars(&self) -> usize {
        self.n
    }
    fn components(&self, base: &[f64], order: usize) -> Vec<Taylor> {
        let n = self.n;
        let vars = Taylor::variables(base, order);
        let bump = (-r2_taylor(&vars)) + self.rho0 * self.rho0;
        let lam = lambda_taylor(&vars);
        let l2 = lam * lam;
        let df: Vec<Taylor> = vars.iter().map(|v| -(l2 * *v)).collect();
        let s_has = self.s.iter().any(|p| !p.is_zero());
        let w: Vec<Option<Taylor>> = self
            .w
            .iter()
            .map(|p| (!p.is_zero()).then(|| p.eval_taylor(&vars)))
            .collect();
        packed_pairs(n)
            .into_iter()
            .enumerate()
            .map(|(k, (i, j))| {
                let mut out = Taylor::zero(n, order);
                if s_has && !self.s[k].is_zero() {
                    out += bump * self.s[k].eval_taylor(&vars);
                }
                if let Some(wj) = w[j] {
                    out += df[i] * wj * 0.5;
                }
                if let Some(wi) = w[i] {
                    out += df[j] * wi * 0.5;
                }
                out
            })
            .collect()
    }
}

/// Ambient harmonic polynomial `Re` or `Im` of `(X_a + i X_b)^k`, restricted
/// to `S^n ⊂ R^{n+1}`. Index `n` is the vertical coordinate `X_{n+1} = f`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SphericalHarmonic {
    pub k: usize,
    pub a: usize,
    pub b: usize,
    pub imaginary: bool,
}

impl SphericalHarmonic {
    /// `Im (X_{n+1} + i X_1)^k`; for `k = 2` this is `2 X_1 X_{n+1}`.
    pub fn standard(n: usize, k: usize) -> Self {
        SphericalHarmonic {
            k,
            a: n,
            b: 0,
            imaginary: true,
        }
    }

    /// Eigenvalue `μ = k(k+n−1)` of `−Δ` on `S^n`.
    pub fn mu(&self, n: usize) -> f64 {
        (self.k * (self.k + n - 1)) as f64
    }

    /// Pointwise value on the sphere.
    pub fn value(&self, x: &[f64]) -> f64 {
        let vars: Vec<Taylor> = x.iter().map(|&v| Taylor::constant(x.len(), 0, v)).collect();
        self.taylor(&vars).value()
    }

    fn taylor(&self, vars: &[Taylor]) -> Taylor {
        let n = vars.len();
        let lam = lambda_taylor(vars);
        let ambient = |idx: usize| {
            if idx == n {
                lam + (-1.0)
            } else {
                lam * vars[idx]
            }
        };
        let (xa, xb) = (ambient(self.a), ambient(self.b));
        let order = vars[0].order();
        let mut re = Taylor::constant(n, order, 1.0);
        let mut im = Taylor::zero(n, order);
        for _ in 0..self.k {
            let nre = re * xa - im * xb;
            let nim = re * xb + im * xa;
            re = nre;
            im = nim;
        }
        if self.imaginary {
            im
        } else {
            re
        }
    }
}

/// `h = Hess_ḡ u + (μ − n + 1) u ḡ`.
#[derive(Debug)]
struct EigenSource {
    n: usize,
    harmonic: SphericalHarmonic,
}

impl TensorSource for EigenSource {
    fn nvars(&self) -> usize {
        self.n
    }
    fn max_order(&self) -> usize {
        taylor::max_order(self.n) - 2
    }
    fn components(&self, base: &[f64], order: usize) -> Vec<Taylor> {
        let n = self.n;
        let vars = Taylor::variables(base, order + 2);
        let u = self.harmonic.taylor(&vars);
        let lam = lambda_taylor(&vars);
        let shift = self.harmonic.mu(n) - n as f64 + 1.0;
        let du: Vec<Taylor> = (0..n).map(|k| u.derivative(k)).collect();
        // φ_j = ∂_j log λ = −λ x_j; Γ̄^k_ij = δ_ki φ_j + δ_kj φ_i − δ_ij φ_k
        let phi: Vec<Taylor> = vars.iter().map(|v| -(lam * *v)).collect();
        let diag = lam * lam * u * shift;
        packed_pairs(n)
            .into_iter()
            .map(|(i, j)| {
                let mut out = du[i].derivative(j);
                out -= phi[j] * du[i] + phi[i] * du[j];
                if i == j {
                    for k in 0..n {
                        out += phi[k] * du[k];
                    }
                    out += diag;
                }
                out.truncate(order)
            })
            .collect()
    }
}

/// Polynomial vector field in chart components, optionally multiplied by
/// the bump `ρ0² − |x|²` so that it vanishes on `∂Ω`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VectorField {
    pub n: usize,
    pub comps: Vec<Poly>,
    pub bump_radius: Option<f64>,
    pub boundary_vanishing: bool,
    pub label: String,
}

impl VectorField {
    pub fn zero(n: usize) -> Self {
        VectorField {
            n,
            comps: vec![Poly::zero(n); n],
            bump_radius: None,
            boundary_vanishing: true,
            label: "zero".into(),
        }
    }

    /// `(ρ0² − |x|²) (x/ρ0)^β e_dir`.
    pub fn bump_monomial(spec: &ChartSpec, exps: Vec<u32>, dir: usize) -> Self {
        let n = spec.n;
        let deg: u32 = exps.iter().sum();
        let mut comps = vec![Poly::zero(n); n];
        let label = format!("bump·y^{exps:?}·e{dir}");
        comps[dir] = Poly::monomial(exps, spec.rho0.powi(-(deg as i32)));
        VectorField {
            n,
            comps,
            bump_radius: Some(spec.rho0),
            boundary_vanishing: true,
            label,
        }
    }

    /// Generator of the ambient rotation in the `(X_a, X_b)` plane, where
    /// index `n` is the vertical axis.
    pub fn rotation(n: usize, a: usize, b: usize) -> Result<Self> {
        if a > n || b > n || a == b {
            return Err(Error::Domain(format!("invalid rotation plane ({a}, {b}) for n = {n}")));
        }
        let mut comps = vec![Poly::zero(n); n];
        let unit = |i: usize| {
            let mut e = vec![0u32; n];
            e[i] = 1;
            e
        };
        let (a, b, sign) = if a == n { (b, a, -1.0) } else { (a, b, 1.0) };
        if b < n {
            comps[a] = Poly::monomial(unit(b), -sign);
            comps[b] = Poly::monomial(unit(a), sign);
        } else {
            // X_{n+1} ∂_{X_a} − X_a ∂_{X_{n+1}} in the chart
            for (i, comp) in comps.iter_mut().enumerate() {
                let mut terms = Vec::new();
                let mut e = unit(a);
                e[i] += 1;
                terms.push((e, sign));
                if i == a {
                    terms.push((vec![0; n], 0.5 * sign));
                    for v in 0..n {
                        let mut e2 = vec![0u32; n];
                        e2[v] = 2;
                        terms.push((e2, -0.5 * sign));
                    }
                }
                *comp = Poly { nvars: n, terms };
            }
        }
        Ok(VectorField {
            n,
            comps,
            bump_radius: None,
            boundary_vanishing: false,
            label: format!("rotation({a},{b})"),
        })
    }

    /// Bump times a random polynomial vector of the given degree.
    pub fn random_boundary_vanishing(spec: &ChartSpec, seed: u64, degree: usize) -> Self {
        let n = spec.n;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let comps = (0..n)
            .map(|_| random_poly(&mut rng, n, degree, spec.rho0))
            .collect();
        VectorField {
            n,
            comps,
            bump_radius: Some(spec.rho0),
            boundary_vanishing: true,
            label: format!("random(seed={seed},degree={degree})"),
        }
    }

    pub fn components(&self, base: &[f64], order: usize) -> Vec<Taylor> {
        let vars = Taylor::variables(base, order);
        let bump = self
            .bump_radius
            .map(|r| (-r2_taylor(&vars)) + r * r);
        self.comps
            .iter()
            .map(|p| {
                if p.is_zero() {
                    return Taylor::zero(self.n, order);
                }
                let v = p.eval_taylor(&vars);
                match bump {
                    Some(b) => b * v,
                    None => v,
                }
            })
            .collect()
    }

    /// Chart components `ξ^i(x)`.
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        let bump = self.bump_radius.map_or(1.0, |r| r * r - r2);
        self.comps.iter().map(|p| bump * p.eval(x)).collect()
    }

    /// Component-wise linear combination (both fields must share the bump).
    pub fn combine(parts: &[(f64, &VectorField)]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Config("empty vector-field combination".into()))?
            .1;
        let n = first.n;
        let mut comps = vec![Poly::zero(n); n];
        for (a, v) in parts {
            if v.bump_radius != first.bump_radius || v.n != n {
                return Err(Error::Config("incompatible vector fields in combination".into()));
            }
            for (c, p) in comps.iter_mut().zip(&v.comps) {
                c.terms
                    .extend(p.terms.iter().map(|(e, coef)| (e.clone(), a * coef)));
            }
        }
        Ok(VectorField {
            n,
            comps,
            bump_radius: first.bump_radius,
            boundary_vanishing: parts.iter().all(|(_, v)| v.boundary_vanishing),
            label: "combination".into(),
        })
    }
}

/// `(L_ξ ḡ)_ij = ξ^k ∂_k(λ²) δ_ij + λ² (∂_i ξ^j + ∂_j ξ^i)`.
#[derive(Debug)]
struct LieSource {
    xi: VectorField,
}

impl TensorSource for LieSource {
    fn nvars(&self) -> usize {
        self.xi.n
    }
    fn max_order(&self) -> usize {
        taylor::max_order(self.xi.n) - 1
    }
    fn components(&self, base: &[f64], order: usize) -> Vec<Taylor> {
        let n = self.xi.n;
        let xi = self.xi.components(base, order + 1);
        let vars = Taylor::variables(base, order + 1);
        let lam = lambda_taylor(&vars);
        let l2 = lam * lam;
        let mut trans = Taylor::zero(n, order);
        for (k, x) in xi.iter().enumerate() {
            trans += x.truncate(order) * l2.derivative(k);
        }
        let l2o = l2.truncate(order);
        packed_pairs(n)
            .into_iter()
            .map(|(i, j)| {
                let mut out = l2o * (xi[j].derivative(i) + xi[i].derivative(j));
                if i == j {
                    out += trans;
                }
                out
            })
            .collect()
    }
}

/// How `jet_at` obtains partial derivatives of a field.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Derivatives {
    Analytic,
    /// Fourth-order central differences with the given step.
    FiniteDifference { step: f64 },
}

/// Replayable description of how a field was built.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldRecipe {
    Zero,
    Conformal {
        t: f64,
    },
    Admissible {
        seed: u64,
        degree: usize,
        amplitude: f64,
    },
    EigenDivFree {
        harmonic: SphericalHarmonic,
    },
    LieDerivative {
        xi: String,
    },
    Generator {
        label: String,
    },
    Scaled {
        factor: f64,
        base: Box<FieldRecipe>,
    },
    Combination {
        parts: Vec<(f64, FieldRecipe)>,
    },
    Projected {
        base: Box<FieldRecipe>,
        gauge_degree: usize,
    },
}

#[derive(Clone)]
pub struct SymTensorField {
    n: usize,
    terms: Vec<(f64, Arc<dyn TensorSource>)>,
    pub recipe: FieldRecipe,
    pub derivatives: Derivatives,
}

impl fmt::Debug for SymTensorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SymTensorField")
            .field("n", &self.n)
            .field("terms", &self.terms.len())
            .field("recipe", &self.recipe)
            .field("derivatives", &self.derivatives)
            .finish()
    }
}

impl SymTensorField {
    pub fn zero(n: usize) -> Self {
        SymTensorField {
            n,
            terms: Vec::new(),
            recipe: FieldRecipe::Zero,
            derivatives: Derivatives::Analytic,
        }
    }

    /// `h = t ḡ`.
    pub fn conformal(n: usize, t: f64) -> Self {
        Self::from_source(Arc::new(ConformalSource { n, t }), FieldRecipe::Conformal { t })
    }

    pub fn from_source(source: Arc<dyn TensorSource>, recipe: FieldRecipe) -> Self {
        SymTensorField {
            n: source.nvars(),
            terms: vec![(1.0, source)],
            recipe,
            derivatives: Derivatives::Analytic,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|(a, _)| *a == 0.0)
    }

    pub fn with_derivatives(mut self, d: Derivatives) -> Self {
        self.derivatives = d;
        self
    }

    pub fn with_recipe(mut self, recipe: FieldRecipe) -> Self {
        self.recipe = recipe;
        self
    }

    pub fn scaled(&self, factor: f64) -> Self {
        SymTensorField {
            n: self.n,
            terms: self.terms.iter().map(|(a, s)| (a * factor, s.clone())).collect(),
            recipe: FieldRecipe::Scaled {
                factor,
                base: Box::new(self.recipe.clone()),
            },
            derivatives: self.derivatives,
        }
    }

    /// `self + a · other`.
    pub fn add_scaled(&self, a: f64, other: &SymTensorField) -> Self {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().map(|(b, s)| (a * b, s.clone())));
        SymTensorField {
            n: self.n,
            terms,
            recipe: FieldRecipe::Combination {
                parts: vec![(1.0, self.recipe.clone()), (a, other.recipe.clone())],
            },
            derivatives: self.derivatives,
        }
    }

    /// `Σ a_k h_k`.
    pub fn linear_combination(n: usize, parts: &[(f64, &SymTensorField)]) -> Self {
        let mut terms = Vec::new();
        for (a, f) in parts {
            terms.extend(f.terms.iter().map(|(b, s)| (a * b, s.clone())));
        }
        SymTensorField {
            n,
            terms,
            recipe: FieldRecipe::Combination {
                parts: parts.iter().map(|(a, f)| (*a, f.recipe.clone())).collect(),
            },
            derivatives: parts.first().map_or(Derivatives::Analytic, |p| p.1.derivatives),
        }
    }

    pub fn max_order(&self) -> usize {
        self.terms
            .iter()
            .map(|(_, s)| s.max_order())
            .min()
            .unwrap_or(taylor::max_order(self.n))
    }

    /// Packed chart components expanded about `base`.
    pub fn components(&self, base: &[f64], order: usize) -> Vec<Taylor> {
        let mut out = vec![Taylor::zero(self.n, order); packed_len(self.n)];
        for (a, s) in &self.terms {
            if *a == 0.0 {
                continue;
            }
            for (o, c) in out.iter_mut().zip(s.components(base, order)) {
                *o += c * *a;
            }
        }
        out
    }

    /// Full `n×n` chart matrix `h_ij(x)`, row-major.
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n;
        let packed = self.components(x, 0);
        let mut m = vec![0.0; n * n];
        for (k, (i, j)) in packed_pairs(n).into_iter().enumerate() {
            m[i * n + j] = packed[k].value();
            m[j * n + i] = packed[k].value();
        }
        m
    }

    /// `|h|_ḡ` at `x`.
    pub fn norm_at(&self, x: &[f64]) -> f64 {
        let lam = background_unchecked(x).lambda;
        let m = self.eval(x);
        m.iter().map(|v| v * v).sum::<f64>().sqrt() / (lam * lam)
    }

    /// Largest `|h|_ḡ` over the volume and boundary quadrature nodes of `spec`.
    pub fn sup_norm(&self, spec: &ChartSpec) -> Result<f64> {
        let rule = build_quadrature(spec)?;
        let vol = crate::geometry::par_map(&rule.volume, |v| self.norm_at(&v.x));
        let bdy = crate::geometry::par_map(&rule.boundary, |b| self.norm_at(&b.x));
        Ok(vol.into_iter().chain(bdy).fold(0.0, f64::max))
    }

    /// Rescales so that `sup |h|_ḡ` over the quadrature nodes equals `amplitude`.
    pub fn normalized(&self, spec: &ChartSpec, amplitude: f64) -> Result<Self> {
        let sup = self.sup_norm(spec)?;
        if sup == 0.0 {
            return Ok(self.clone());
        }
        let recipe = self.recipe.clone();
        Ok(self.scaled(amplitude / sup).with_recipe(FieldRecipe::Scaled {
            factor: amplitude / sup,
            base: Box::new(recipe),
        }))
    }

    /// Rebuilds a field from its recipe where the recipe is self-contained.
    pub fn from_recipe(spec: &ChartSpec, recipe: &FieldRecipe) -> Result<Self> {
        match recipe {
            FieldRecipe::Zero => Ok(Self::zero(spec.n)),
            FieldRecipe::Conformal { t } => Ok(Self::conformal(spec.n, *t)),
            FieldRecipe::Admissible {
                seed,
                degree,
                amplitude,
            } => make_admissible_field(spec, *seed, *amplitude, *degree),
            FieldRecipe::EigenDivFree { harmonic } => eigen_divfree_with(spec.n, *harmonic),
            FieldRecipe::Scaled { factor, base } => {
                Ok(Self::from_recipe(spec, base)?.scaled(*factor))
            }
            FieldRecipe::Combination { parts } => {
                let built = parts
                    .iter()
                    .map(|(a, r)| Ok((*a, Self::from_recipe(spec, r)?)))
                    .collect::<Result<Vec<_>>>()?;
                let refs: Vec<(f64, &SymTensorField)> = built.iter().map(|(a, f)| (*a, f)).collect();
                Ok(Self::linear_combination(spec.n, &refs).with_recipe(recipe.clone()))
            }
            other => Err(Error::Config(format!(
                "recipe {other:?} is not self-contained; rebuild it through its pipeline"
            ))),
        }
    }
}

fn random_poly(rng: &mut ChaCha8Rng, n: usize, degree: usize, rho0: f64) -> Poly {
    Poly {
        nvars: n,
        terms: monomials(n, degree)
            .into_iter()
            .map(|e| {
                let d: u32 = e.iter().sum();
                let a: f64 = rng.random_range(-1.0..=1.0);
                (e, a * rho0.powi(-(d as i32)))
            })
            .collect(),
    }
}

fn scale_poly(p: &Poly, s: f64) -> Poly {
    Poly {
        nvars: p.nvars,
        terms: p.terms.iter().map(|(e, c)| (e.clone(), c * s)).collect(),
    }
}

/// Random admissible perturbation `h = (ρ0² − |x|²) s + sym(df ⊗ w)` with
/// polynomials of the given degree in `y = x/ρ0` and coefficients uniform in
/// `[−1, 1]`. Both parts are normalized to unit sup-norm before the sum is
/// scaled to `sup |h|_ḡ = amplitude` over the quadrature nodes.
pub fn make_admissible_field(
    spec: &ChartSpec,
    seed: u64,
    amplitude: f64,
    degree: usize,
) -> Result<SymTensorField> {
    if !(0.0..=0.5).contains(&amplitude) {
        return Err(Error::Precondition(format!(
            "amplitude {amplitude} outside [0, 1/2]"
        )));
    }
    let n = spec.n;
    let recipe = FieldRecipe::Admissible {
        seed,
        degree,
        amplitude,
    };
    if amplitude == 0.0 {
        return Ok(SymTensorField::zero(n).with_recipe(recipe));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s: Vec<Poly> = (0..packed_len(n))
        .map(|_| random_poly(&mut rng, n, degree, spec.rho0))
        .collect();
    let w: Vec<Poly> = (0..n)
        .map(|_| random_poly(&mut rng, n, degree, spec.rho0))
        .collect();
    let bulk = AdmissibleSource {
        n,
        rho0: spec.rho0,
        s: s.clone(),
        w: vec![Poly::zero(n); n],
    };
    let cross = AdmissibleSource {
        n,
        rho0: spec.rho0,
        s: vec![Poly::zero(n); packed_len(n)],
        w: w.clone(),
    };
    let sb = SymTensorField::from_source(Arc::new(bulk), recipe.clone()).sup_norm(spec)?;
    let sc = SymTensorField::from_source(Arc::new(cross), recipe.clone()).sup_norm(spec)?;
    let combined = AdmissibleSource {
        n,
        rho0: spec.rho0,
        s: s.iter().map(|p| scale_poly(p, 1.0 / sb)).collect(),
        w: w.iter().map(|p| scale_poly(p, 1.0 / sc)).collect(),
    };
    let field = SymTensorField::from_source(Arc::new(combined), recipe.clone());
    let sup = field.sup_norm(spec)?;
    Ok(field.scaled(amplitude / sup).with_recipe(recipe))
}

/// Bulk part only: `h = (ρ0² − |x|²) s`, vanishing on `∂Ω`.
pub fn bulk_admissible_field(
    spec: &ChartSpec,
    seed: u64,
    amplitude: f64,
    degree: usize,
) -> Result<SymTensorField> {
    let n = spec.n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = (0..packed_len(n))
        .map(|_| random_poly(&mut rng, n, degree, spec.rho0))
        .collect();
    let field = SymTensorField::from_source(
        Arc::new(AdmissibleSource {
            n,
            rho0: spec.rho0,
            s,
            w: vec![Poly::zero(n); n],
        }),
        FieldRecipe::Generator {
            label: format!("bulk(seed={seed},degree={degree})"),
        },
    );
    field.normalized(spec, amplitude)
}

/// `h_ij = a λ² x_i x_j = sym(df ⊗ (−a x))`, a pure normal stretch on every
/// sphere `|x| = const`.
pub fn radial_stretch_field(spec: &ChartSpec, a: f64) -> SymTensorField {
    let n = spec.n;
    let w = (0..n)
        .map(|i| {
            let mut e = vec![0u32; n];
            e[i] = 1;
            Poly::monomial(e, -a)
        })
        .collect();
    SymTensorField::from_source(
        Arc::new(AdmissibleSource {
            n,
            rho0: spec.rho0,
            s: vec![Poly::zero(n); packed_len(n)],
            w,
        }),
        FieldRecipe::Generator {
            label: format!("radial_stretch(a={a})"),
        },
    )
}

/// Admissible generator `(ρ0² − |x|²) y^β E_ij` (bulk) or `sym(df ⊗ y^β e_i)`.
pub fn admissible_generator(spec: &ChartSpec, generator: &Generator) -> SymTensorField {
    let n = spec.n;
    let mut s = vec![Poly::zero(n); packed_len(n)];
    let mut w = vec![Poly::zero(n); n];
    let (exps, label) = match generator {
        Generator::Bulk { exps, i, j } => (exps, format!("bulk y^{exps:?} E{i}{j}")),
        Generator::Cross { exps, i } => (exps, format!("df⊗y^{exps:?} e{i}")),
    };
    let deg: u32 = exps.iter().sum();
    let p = Poly::monomial(exps.clone(), spec.rho0.powi(-(deg as i32)));
    match *generator {
        Generator::Bulk { i, j, .. } => s[sym_index(n, i, j)] = p,
        Generator::Cross { i, .. } => w[i] = p,
    }
    SymTensorField::from_source(
        Arc::new(AdmissibleSource {
            n,
            rho0: spec.rho0,
            s,
            w,
        }),
        FieldRecipe::Generator { label },
    )
}

/// Monomial building block of the admissible space.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Generator {
    Bulk { exps: Vec<u32>, i: usize, j: usize },
    Cross { exps: Vec<u32>, i: usize },
}

/// All admissible monomial generators up to `degree`, cross terms first.
pub fn admissible_generators(n: usize, degree: usize) -> Vec<Generator> {
    let mons = monomials(n, degree);
    let mut out = Vec::new();
    for e in &mons {
        for i in 0..n {
            out.push(Generator::Cross { exps: e.clone(), i });
        }
    }
    for e in &mons {
        for (i, j) in packed_pairs(n) {
            out.push(Generator::Bulk {
                exps: e.clone(),
                i,
                j,
            });
        }
    }
    out
}

/// Exactly divergence-free field built from a degree-`k` spherical harmonic.
pub fn eigen_divfree_field(n: usize, k: usize) -> Result<SymTensorField> {
    eigen_divfree_with(n, SphericalHarmonic::standard(n, k))
}

pub fn eigen_divfree_with(n: usize, harmonic: SphericalHarmonic) -> Result<SymTensorField> {
    if harmonic.k <= 1 {
        return Err(Error::Domain(format!(
            "harmonic degree {} ≤ 1 gives the zero tensor",
            harmonic.k
        )));
    }
    hessian_shift_field(n, harmonic)
}

/// `Hess_ḡ u + (μ − n + 1) u ḡ` for any harmonic, including `k ≤ 1`.
pub fn hessian_shift_field(n: usize, harmonic: SphericalHarmonic) -> Result<SymTensorField> {
    if harmonic.a > n || harmonic.b > n || harmonic.a == harmonic.b {
        return Err(Error::Domain(format!("invalid harmonic plane {harmonic:?}")));
    }
    Ok(SymTensorField::from_source(
        Arc::new(EigenSource { n, harmonic }),
        FieldRecipe::EigenDivFree { harmonic },
    ))
}

/// `L_ξ ḡ` as a tensor field.
pub fn lie_derivative_metric(xi: &VectorField) -> SymTensorField {
    SymTensorField::from_source(
        Arc::new(LieSource { xi: xi.clone() }),
        FieldRecipe::LieDerivative {
            xi: xi.label.clone(),
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::eval_boundary;

    #[test]
    fn packed_layout() {
        assert_eq!(packed_len(3), 6);
        assert_eq!(sym_index(3, 0, 0), 0);
        assert_eq!(sym_index(3, 2, 1), 4);
        assert_eq!(sym_index(3, 2, 2), 5);
        for (k, (i, j)) in packed_pairs(3).into_iter().enumerate() {
            assert_eq!(sym_index(3, i, j), k);
        }
    }

    #[test]
    fn zero_amplitude_gives_zero_field() {
        let spec = ChartSpec::new(2, 0.9).unwrap();
        let h = make_admissible_field(&spec, 3, 0.0, 2).unwrap();
        assert!(h.is_zero());
        assert!(h.eval(&[0.1, 0.0]).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn admissible_field_is_tangentially_trivial() {
        let spec = ChartSpec::new(3, 0.7).unwrap();
        let h = make_admissible_field(&spec, 11, 0.1, 2).unwrap();
        for &(t, p) in &[(0.3, 0.1), (1.2, 2.0), (2.9, 4.0)] {
            let b = eval_boundary(&spec, &[t, p]).unwrap();
            let m = h.eval(b.x());
            let form = |u: &[f64], v: &[f64]| {
                let mut s = 0.0;
                for i in 0..3 {
                    for j in 0..3 {
                        s += m[i * 3 + j] * u[i] * v[j];
                    }
                }
                s
            };
            for a in 0..2 {
                for c in 0..2 {
                    assert!(form(&b.frame[a], &b.frame[c]).abs() < 1e-12);
                }
            }
            assert!(form(&b.nubar, &b.nubar).abs() > 1e-8);
        }
    }

    #[test]
    fn seed_42_normalization() {
        let spec = ChartSpec::new(2, 0.9).unwrap();
        let h = make_admissible_field(&spec, 42, 0.1, 2).unwrap();
        let sup = h.sup_norm(&spec).unwrap();
        assert!((0.05..=0.1 + 1e-12).contains(&sup), "sup = {sup}");
        let again = make_admissible_field(&spec, 42, 0.1, 2).unwrap();
        assert_eq!(h.eval(&[0.05, 0.1]), again.eval(&[0.05, 0.1]));
    }

    #[test]
    fn recipe_round_trip() {
        let spec = ChartSpec::new(2, 0.9).unwrap();
        let h = make_admissible_field(&spec, 5, 0.05, 2).unwrap().scaled(0.5);
        let json = serde_json::to_string(&h.recipe).unwrap();
        let back: FieldRecipe = serde_json::from_str(&json).unwrap();
        let h2 = SymTensorField::from_recipe(&spec, &back).unwrap();
        assert_eq!(h.eval(&[0.1, -0.05]), h2.eval(&[0.1, -0.05]));
    }

    #[test]
    fn eigen_rejects_low_degree() {
        assert!(matches!(eigen_divfree_field(3, 1), Err(Error::Domain(_))));
        assert!(eigen_divfree_field(3, 2).is_ok());
    }

    #[test]
    fn height_function_gives_zero_tensor() {
        let u = SphericalHarmonic {
            k: 1,
            a: 2,
            b: 0,
            imaginary: false,
        };
        assert!((u.value(&[0.2, 0.1]) - background_unchecked(&[0.2, 0.1]).f).abs() < 1e-15);
        let h = hessian_shift_field(2, u).unwrap();
        assert!(h.eval(&[0.2, 0.1]).iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn bump_fields_vanish_on_boundary() {
        let spec = ChartSpec::new(2, 0.8).unwrap();
        let xi = VectorField::random_boundary_vanishing(&spec, 9, 3);
        let b = eval_boundary(&spec, &[1.0]).unwrap();
        assert!(xi.eval(b.x()).iter().all(|v| v.abs() < 1e-14));
        assert!(xi.eval(&[0.1, 0.1]).iter().any(|v| v.abs() > 1e-6));
    }
}
