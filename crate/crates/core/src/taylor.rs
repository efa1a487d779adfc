//! Truncated multivariate Taylor arithmetic.
//!
//! A [`Taylor`] value holds the Taylor coefficients `f^(α)(x0) / α!` of a
//! function of `n` chart variables for all multi-indices `|α| ≤ order`.
//! Fields are written once against this type and every derivative the
//! curvature formulas need (up to second covariant derivatives of a tensor
//! built from first derivatives of a vector field) comes out exactly, with
//! no step-size error.
//!
//! Monomials are stored in graded order, so truncating to a lower order is a
//! prefix of the coefficient array.

use std::ops::{Add, AddAssign, Mul, MulAssign, Neg, Sub, SubAssign};
use std::sync::OnceLock;

/// Largest number of stored coefficients (n = 3, order 4).
pub const MAX_TERMS: usize = 35;
/// Largest supported number of variables.
pub const MAX_VARS: usize = 4;
/// Largest supported expansion order.
pub const MAX_ORDER: usize = 4;

struct Layout {
    exps: Vec<[u8; MAX_VARS]>,
    /// `count[k]` = number of monomials of total degree ≤ k.
    count: Vec<usize>,
    /// Product triples `(a, b, a+b)` sorted by the degree of `a+b`.
    mul: Vec<(u8, u8, u8)>,
    /// `mul_end[k]` = number of triples with result degree ≤ k.
    mul_end: Vec<usize>,
    /// Per variable: `(target, source, factor)` for the partial derivative.
    deriv: Vec<Vec<(u8, u8, f64)>>,
    /// Index of the monomial `x_i x_j`.
    second: [[u8; MAX_VARS]; MAX_VARS],
}

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Number of monomials of total degree ≤ `order` in `n` variables.
pub fn term_count(n: usize, order: usize) -> usize {
    binomial(n + order, order)
}

fn build_layout(n: usize) -> Layout {
    let mut max_order = MAX_ORDER;
    while term_count(n, max_order) > MAX_TERMS {
        max_order -= 1;
    }
    let mut exps: Vec<[u8; MAX_VARS]> = Vec::new();
    let mut count = Vec::new();
    for deg in 0..=max_order {
        let mut current = Vec::new();
        gen_exps(n, deg, 0, [0; MAX_VARS], &mut current);
        // reverse lexicographic within a degree: x0 powers first
        current.sort_by(|a, b| b.cmp(a));
        exps.extend(current);
        count.push(exps.len());
    }
    let index_of = |e: &[u8; MAX_VARS]| exps.iter().position(|x| x == e);
    let deg_of = |e: &[u8; MAX_VARS]| e.iter().map(|&v| v as usize).sum::<usize>();

    let mut mul = Vec::new();
    for (ia, a) in exps.iter().enumerate() {
        for (ib, b) in exps.iter().enumerate() {
            let mut s = [0u8; MAX_VARS];
            for v in 0..MAX_VARS {
                s[v] = a[v] + b[v];
            }
            if deg_of(&s) <= max_order {
                let ic = index_of(&s).expect("monomial present");
                mul.push((ia as u8, ib as u8, ic as u8));
            }
        }
    }
    mul.sort_by_key(|&(_, _, c)| deg_of(&exps[c as usize]));
    let mut mul_end = Vec::new();
    for deg in 0..=max_order {
        mul_end.push(
            mul.iter()
                .take_while(|&&(_, _, c)| deg_of(&exps[c as usize]) <= deg)
                .count(),
        );
    }

    let mut deriv = Vec::new();
    for v in 0..n {
        let mut table = Vec::new();
        for (ia, a) in exps.iter().enumerate() {
            if deg_of(a) < max_order {
                let mut up = *a;
                up[v] += 1;
                let src = index_of(&up).expect("monomial present");
                table.push((ia as u8, src as u8, (a[v] + 1) as f64));
            }
        }
        deriv.push(table);
    }
    let mut second = [[0u8; MAX_VARS]; MAX_VARS];
    if max_order >= 2 {
        for i in 0..n {
            for j in 0..n {
                let mut e = [0u8; MAX_VARS];
                e[i] += 1;
                e[j] += 1;
                second[i][j] = index_of(&e).expect("monomial present") as u8;
            }
        }
    }
    Layout {
        exps,
        count,
        mul,
        mul_end,
        deriv,
        second,
    }
}

fn gen_exps(n: usize, deg: usize, var: usize, cur: [u8; MAX_VARS], out: &mut Vec<[u8; MAX_VARS]>) {
    if var == n - 1 {
        let mut e = cur;
        e[var] = deg as u8;
        out.push(e);
        return;
    }
    for k in 0..=deg {
        let mut e = cur;
        e[var] = k as u8;
        gen_exps(n, deg - k, var + 1, e, out);
    }
}

fn layout(n: usize) -> &'static Layout {
    static LAYOUTS: OnceLock<Vec<Layout>> = OnceLock::new();
    let all = LAYOUTS.get_or_init(|| (1..=MAX_VARS).map(build_layout).collect());
    &all[n - 1]
}

/// Maximum order available for `n` variables.
pub fn max_order(n: usize) -> usize {
    layout(n).count.len() - 1
}

/// Truncated Taylor expansion in `n` variables about an implicit base point.
#[derive(Clone, Copy, Debug)]
pub struct Taylor {
    n: u8,
    order: u8,
    c: [f64; MAX_TERMS],
}

impl Taylor {
    fn check(n: usize, order: usize) {
        assert!((1..=MAX_VARS).contains(&n), "unsupported variable count {n}");
        assert!(order <= max_order(n), "order {order} unsupported for n = {n}");
    }

    pub fn constant(n: usize, order: usize, value: f64) -> Self {
        Self::check(n, order);
        let mut c = [0.0; MAX_TERMS];
        c[0] = value;
        Taylor {
            n: n as u8,
            order: order as u8,
            c,
        }
    }

    pub fn zero(n: usize, order: usize) -> Self {
        Self::constant(n, order, 0.0)
    }

    /// The coordinate function `x_var` expanded about `base`.
    pub fn variable(n: usize, order: usize, base: f64, var: usize) -> Self {
        let mut t = Self::constant(n, order, base);
        if order >= 1 {
            // degree-1 monomials follow the constant, ordered x0, x1, ...
            t.c[1 + var] = 1.0;
        }
        t
    }

    /// All coordinate functions about the point `base`.
    pub fn variables(base: &[f64], order: usize) -> Vec<Taylor> {
        let n = base.len();
        (0..n)
            .map(|i| Taylor::variable(n, order, base[i], i))
            .collect()
    }

    pub fn nvars(&self) -> usize {
        self.n as usize
    }

    pub fn order(&self) -> usize {
        self.order as usize
    }

    fn len(&self) -> usize {
        layout(self.n as usize).count[self.order as usize]
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.c[..self.len()]
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    /// First partial derivative `∂_i` at the base point.
    pub fn d1(&self, i: usize) -> f64 {
        debug_assert!(self.order >= 1);
        self.c[1 + i]
    }

    /// Second partial derivative `∂_i ∂_j` at the base point.
    pub fn d2(&self, i: usize, j: usize) -> f64 {
        debug_assert!(self.order >= 2);
        let idx = layout(self.n as usize).second[i][j] as usize;
        if i == j {
            2.0 * self.c[idx]
        } else {
            self.c[idx]
        }
    }

    /// Drops all terms above `order`.
    pub fn truncate(&self, order: usize) -> Taylor {
        assert!(order <= self.order as usize);
        let mut t = *self;
        t.order = order as u8;
        let len = t.len();
        for v in &mut t.c[len..] {
            *v = 0.0;
        }
        t
    }

    /// Exact partial derivative; the result has one order less.
    pub fn derivative(&self, var: usize) -> Taylor {
        assert!(self.order >= 1, "cannot differentiate an order-0 expansion");
        let n = self.n as usize;
        let lay = layout(n);
        let new_order = self.order as usize - 1;
        let len = lay.count[new_order];
        let mut c = [0.0; MAX_TERMS];
        for &(t, s, fac) in &lay.deriv[var] {
            if (t as usize) < len {
                c[t as usize] = fac * self.c[s as usize];
            }
        }
        Taylor {
            n: self.n,
            order: new_order as u8,
            c,
        }
    }

    fn binary_order(&self, other: &Taylor) -> u8 {
        debug_assert_eq!(self.n, other.n, "mixed variable counts");
        self.order.min(other.order)
    }

    /// Applies a scalar function given its Taylor coefficients `a_k` around
    /// the current value, i.e. `F(v0 + u) = Σ a_k u^k`.
    fn compose(&self, series: &[f64]) -> Taylor {
        let order = self.order as usize;
        let mut u = *self;
        u.c[0] = 0.0;
        let mut out = Taylor::constant(self.n as usize, order, series[0]);
        let mut power = Taylor::constant(self.n as usize, order, 1.0);
        for a in series.iter().skip(1).take(order) {
            power = power * u;
            out += power * *a;
        }
        out
    }

    pub fn recip(&self) -> Taylor {
        let v0 = self.value();
        assert!(v0 != 0.0, "reciprocal of a vanishing expansion");
        let order = self.order as usize;
        let mut series = Vec::with_capacity(order + 1);
        let mut a = 1.0 / v0;
        for _ in 0..=order {
            series.push(a);
            a *= -1.0 / v0;
        }
        self.compose(&series)
    }

    pub fn sqrt(&self) -> Taylor {
        let v0 = self.value();
        assert!(v0 > 0.0, "square root of a non-positive expansion");
        let order = self.order as usize;
        // sqrt(v0 + u) = sqrt(v0) Σ binom(1/2, k) (u/v0)^k
        let mut series = Vec::with_capacity(order + 1);
        let mut binom = 1.0;
        let root = v0.sqrt();
        for k in 0..=order {
            series.push(root * binom / v0.powi(k as i32));
            binom *= (0.5 - k as f64) / (k as f64 + 1.0);
        }
        self.compose(&series)
    }

    pub fn powi(&self, p: u32) -> Taylor {
        let mut out = Taylor::constant(self.n as usize, self.order as usize, 1.0);
        for _ in 0..p {
            out = out * *self;
        }
        out
    }

    /// Evaluates the truncated polynomial at a displacement `dx` from the base.
    pub fn eval_at(&self, dx: &[f64]) -> f64 {
        let lay = layout(self.n as usize);
        let mut s = 0.0;
        for (k, e) in lay.exps[..self.len()].iter().enumerate() {
            let mut m = self.c[k];
            for (v, &p) in e.iter().enumerate().take(self.n as usize) {
                m *= dx[v].powi(p as i32);
            }
            s += m;
        }
        s
    }
}

impl Add for Taylor {
    type Output = Taylor;
    fn add(self, rhs: Taylor) -> Taylor {
        let order = self.binary_order(&rhs);
        let mut out = self.truncate(order as usize);
        let len = out.len();
        for k in 0..len {
            out.c[k] += rhs.c[k];
        }
        out
    }
}

impl AddAssign for Taylor {
    fn add_assign(&mut self, rhs: Taylor) {
        *self = *self + rhs;
    }
}

impl Sub for Taylor {
    type Output = Taylor;
    fn sub(self, rhs: Taylor) -> Taylor {
        self + (-rhs)
    }
}

impl SubAssign for Taylor {
    fn sub_assign(&mut self, rhs: Taylor) {
        *self = *self - rhs;
    }
}

impl Neg for Taylor {
    type Output = Taylor;
    fn neg(mut self) -> Taylor {
        for v in self.c.iter_mut() {
            *v = -*v;
        }
        self
    }
}

impl Mul for Taylor {
    type Output = Taylor;
    fn mul(self, rhs: Taylor) -> Taylor {
        let order = self.binary_order(&rhs);
        let lay = layout(self.n as usize);
        let mut c = [0.0; MAX_TERMS];
        for &(a, b, r) in &lay.mul[..lay.mul_end[order as usize]] {
            c[r as usize] += self.c[a as usize] * rhs.c[b as usize];
        }
        Taylor { n: self.n, order, c }
    }
}

impl MulAssign for Taylor {
    fn mul_assign(&mut self, rhs: Taylor) {
        *self = *self * rhs;
    }
}

impl Mul<f64> for Taylor {
    type Output = Taylor;
    fn mul(mut self, rhs: f64) -> Taylor {
        for v in self.c.iter_mut() {
            *v *= rhs;
        }
        self
    }
}

impl Add<f64> for Taylor {
    type Output = Taylor;
    fn add(mut self, rhs: f64) -> Taylor {
        self.c[0] += rhs;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_grad(f: impl Fn(&[f64]) -> f64, x: &[f64], i: usize) -> f64 {
        let h = 1e-5;
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[i] += h;
        xm[i] -= h;
        (f(&xp) - f(&xm)) / (2.0 * h)
    }

    #[test]
    fn term_counts() {
        assert_eq!(term_count(2, 4), 15);
        assert_eq!(term_count(3, 4), 35);
        assert_eq!(max_order(3), 4);
        assert_eq!(max_order(4), 3);
    }

    #[test]
    fn product_and_derivatives_of_polynomial() {
        let x = Taylor::variables(&[0.3, -0.2], 3);
        // p = x^2 y + 3 y
        let p = x[0] * x[0] * x[1] + x[1] * 3.0;
        assert!((p.value() - (0.09 * -0.2 - 0.6)).abs() < 1e-15);
        assert!((p.d1(0) - 2.0 * 0.3 * -0.2).abs() < 1e-15);
        assert!((p.d1(1) - (0.09 + 3.0)).abs() < 1e-15);
        assert!((p.d2(0, 0) - 2.0 * -0.2).abs() < 1e-15);
        assert!((p.d2(0, 1) - 0.6).abs() < 1e-15);
        assert!(p.d2(1, 1).abs() < 1e-15);
        let dp = p.derivative(0);
        assert_eq!(dp.order(), 2);
        assert!((dp.d1(1) - 0.6).abs() < 1e-15);
    }

    #[test]
    fn recip_and_sqrt_match_finite_differences() {
        let base = [0.2, 0.1, -0.3];
        let x = Taylor::variables(&base, 2);
        let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
        let lam = (r2 + 1.0).recip() * 2.0;
        let s = (r2 + 0.5).sqrt();
        let flam = |p: &[f64]| 2.0 / (1.0 + p.iter().map(|v| v * v).sum::<f64>());
        let fs = |p: &[f64]| (0.5 + p.iter().map(|v| v * v).sum::<f64>()).sqrt();
        for i in 0..3 {
            assert!((lam.d1(i) - fd_grad(flam, &base, i)).abs() < 1e-9);
            assert!((s.d1(i) - fd_grad(fs, &base, i)).abs() < 1e-9);
        }
        // second derivative of 1/(1+r^2) along x0 at the base
        let h = 1e-4;
        let f0 = flam(&base);
        let fp = flam(&[base[0] + h, base[1], base[2]]);
        let fm = flam(&[base[0] - h, base[1], base[2]]);
        assert!((lam.d2(0, 0) - (fp - 2.0 * f0 + fm) / (h * h)).abs() < 1e-6);
    }

    #[test]
    fn eval_at_reproduces_polynomial() {
        let x = Taylor::variables(&[0.5, 0.5], 3);
        let p = x[0] * x[1] * x[1] - x[0];
        let dx = [0.1, -0.2];
        let exact = 0.6 * 0.3 * 0.3 - 0.6;
        assert!((p.eval_at(&dx) - exact).abs() < 1e-14);
    }
}
