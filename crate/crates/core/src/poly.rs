//! Sparse real polynomials in the chart coordinates.

use serde::{Deserialize, Serialize};

use crate::taylor::Taylor;

/// All exponent vectors in `nvars` variables of total degree ≤ `degree`,
/// ordered by degree and then reverse-lexicographically.
pub fn monomials(nvars: usize, degree: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    for d in 0..=degree {
        let mut level = Vec::new();
        fill(nvars, d as u32, 0, &mut vec![0; nvars], &mut level);
        level.sort_by(|a: &Vec<u32>, b| b.cmp(a));
        out.extend(level);
    }
    out
}

fn fill(nvars: usize, left: u32, var: usize, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if var + 1 == nvars {
        cur[var] = left;
        out.push(cur.clone());
        return;
    }
    for k in 0..=left {
        cur[var] = k;
        fill(nvars, left - k, var + 1, cur, out);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Poly {
    pub nvars: usize,
    pub terms: Vec<(Vec<u32>, f64)>,
}

impl Poly {
    pub fn zero(nvars: usize) -> Self {
        Poly {
            nvars,
            terms: Vec::new(),
        }
    }

    pub fn constant(nvars: usize, value: f64) -> Self {
        Poly {
            nvars,
            terms: vec![(vec![0; nvars], value)],
        }
    }

    /// `coef · x^exps`.
    pub fn monomial(exps: Vec<u32>, coef: f64) -> Self {
        Poly {
            nvars: exps.len(),
            terms: vec![(exps, coef)],
        }
    }

    pub fn degree(&self) -> usize {
        self.terms
            .iter()
            .map(|(e, _)| e.iter().sum::<u32>() as usize)
            .max()
            .unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|(_, c)| *c == 0.0)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| {
                e.iter()
                    .zip(x)
                    .fold(*c, |acc, (&p, &v)| acc * v.powi(p as i32))
            })
            .sum()
    }

    /// Evaluates with Taylor-valued variables.
    pub fn eval_taylor(&self, vars: &[Taylor]) -> Taylor {
        let n = vars[0].nvars();
        let order = vars[0].order();
        let maxp = self
            .terms
            .iter()
            .flat_map(|(e, _)| e.iter().copied())
            .max()
            .unwrap_or(0) as usize;
        // powers[v][p] = vars[v]^p
        let powers: Vec<Vec<Taylor>> = vars
            .iter()
            .map(|v| {
                let mut p = vec![Taylor::constant(n, order, 1.0)];
                for k in 1..=maxp {
                    p.push(p[k - 1] * *v);
                }
                p
            })
            .collect();
        let mut out = Taylor::zero(n, order);
        for (e, c) in &self.terms {
            if *c == 0.0 {
                continue;
            }
            let mut m = Taylor::constant(n, order, *c);
            for (v, &p) in e.iter().enumerate() {
                if p > 0 {
                    m *= powers[v][p as usize];
                }
            }
            out += m;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monomial_counts() {
        assert_eq!(monomials(2, 0).len(), 1);
        assert_eq!(monomials(2, 3).len(), 10);
        assert_eq!(monomials(3, 2).len(), 10);
        assert_eq!(monomials(3, 2)[1], vec![1, 0, 0]);
    }

    #[test]
    fn taylor_evaluation_matches_pointwise() {
        let p = Poly {
            nvars: 2,
            terms: vec![(vec![2, 1], 3.0), (vec![0, 0], -1.0), (vec![0, 3], 0.5)],
        };
        let base = [0.3, -0.2];
        let t = p.eval_taylor(&Taylor::variables(&base, 2));
        assert!((t.value() - p.eval(&base)).abs() < 1e-15);
        // ∂_x p = 6xy
        assert!((t.d1(0) - 6.0 * 0.3 * -0.2).abs() < 1e-15);
        // ∂_y∂_y p = 3y
        assert!((t.d2(1, 1) - 3.0 * -0.2).abs() < 1e-15);
        assert_eq!(p.degree(), 3);
    }
}
