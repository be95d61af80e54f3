//! Truncated multivariate Taylor polynomials.
//!
//! A [`TaylorPoly`] stores the Taylor coefficients of a function of
//! `nvars` variables up to a fixed total order. Pushing such polynomials
//! through an expression tree is forward-mode differentiation carried to
//! all orders at once: every mixed partial up to the truncation order comes
//! out exactly (up to floating-point rounding), with no step size.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;

/// Monomial enumeration and product table for a fixed `(nvars, order)`.
#[derive(Debug)]
pub struct Layout {
    nvars: usize,
    order: usize,
    monomials: Vec<Vec<u8>>,
    degree: Vec<usize>,
    index: HashMap<Vec<u8>, usize>,
    /// (a, b, a*b) for every pair whose product survives truncation.
    products: Vec<(u32, u32, u32)>,
    /// Multi-index factorial for each monomial.
    factorial: Vec<f64>,
}

impl Layout {
    fn build(nvars: usize, order: usize) -> Self {
        let mut monomials: Vec<Vec<u8>> = Vec::new();
        for deg in 0..=order {
            let mut cur = vec![0u8; nvars];
            push_degree(&mut monomials, &mut cur, 0, deg);
        }
        let degree: Vec<usize> = monomials
            .iter()
            .map(|m| m.iter().map(|&e| e as usize).sum())
            .collect();
        let index: HashMap<Vec<u8>, usize> = monomials
            .iter()
            .enumerate()
            .map(|(i, m)| (m.clone(), i))
            .collect();
        let mut products = Vec::new();
        for (a, ma) in monomials.iter().enumerate() {
            for (b, mb) in monomials.iter().enumerate() {
                if degree[a] + degree[b] > order {
                    continue;
                }
                let prod: Vec<u8> = ma.iter().zip(mb).map(|(x, y)| x + y).collect();
                products.push((a as u32, b as u32, index[&prod] as u32));
            }
        }
        let factorial = monomials
            .iter()
            .map(|m| m.iter().map(|&e| (1..=e as u32).product::<u32>() as f64).product())
            .collect();
        Self {
            nvars,
            order,
            monomials,
            degree,
            index,
            products,
            factorial,
        }
    }

    /// Shared layout for `(nvars, order)`; built once per process.
    pub fn get(nvars: usize, order: usize) -> Arc<Layout> {
        static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<Layout>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("layout cache poisoned");
        guard
            .entry((nvars, order))
            .or_insert_with(|| Arc::new(Layout::build(nvars, order)))
            .clone()
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    pub fn monomial(&self, i: usize) -> &[u8] {
        &self.monomials[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.degree[i]
    }

    pub fn index_of(&self, exponents: &[u8]) -> Option<usize> {
        self.index.get(exponents).copied()
    }

    /// Index of the monomial for a list of variable indices (with
    /// repetition, any order).
    pub fn index_of_vars(&self, vars: &[usize]) -> Option<usize> {
        let mut e = vec![0u8; self.nvars];
        for &v in vars {
            *e.get_mut(v)? += 1;
        }
        self.index_of(&e)
    }

    pub fn factorial(&self, i: usize) -> f64 {
        self.factorial[i]
    }
}

fn push_degree(out: &mut Vec<Vec<u8>>, cur: &mut Vec<u8>, pos: usize, remaining: usize) {
    if pos + 1 == cur.len() {
        cur[pos] = remaining as u8;
        out.push(cur.clone());
        cur[pos] = 0;
        return;
    }
    if cur.is_empty() {
        if remaining == 0 {
            out.push(Vec::new());
        }
        return;
    }
    for e in (0..=remaining).rev() {
        cur[pos] = e as u8;
        push_degree(out, cur, pos + 1, remaining - e);
    }
    cur[pos] = 0;
}

#[derive(Debug, Clone)]
pub struct TaylorPoly {
    layout: Arc<Layout>,
    coeffs: Vec<Complex64>,
}

impl TaylorPoly {
    pub fn constant(layout: &Arc<Layout>, c: Complex64) -> Self {
        let mut coeffs = vec![Complex64::new(0.0, 0.0); layout.len()];
        coeffs[0] = c;
        Self {
            layout: layout.clone(),
            coeffs,
        }
    }

    /// The variable `var` expanded around `value`.
    pub fn variable(layout: &Arc<Layout>, var: usize, value: Complex64) -> Self {
        let mut p = Self::constant(layout, value);
        if layout.order() >= 1 {
            let idx = layout.index_of_vars(&[var]).expect("variable index in range");
            p.coeffs[idx] = Complex64::new(1.0, 0.0);
        }
        p
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn value(&self) -> Complex64 {
        self.coeffs[0]
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    fn is_constant(&self) -> bool {
        self.coeffs[1..].iter().all(|c| c.re == 0.0 && c.im == 0.0)
    }

    pub fn add(&self, other: &Self) -> Self {
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect();
        Self {
            layout: self.layout.clone(),
            coeffs,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect();
        Self {
            layout: self.layout.clone(),
            coeffs,
        }
    }

    pub fn neg(&self) -> Self {
        self.scale(Complex64::new(-1.0, 0.0))
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self {
            layout: self.layout.clone(),
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        if other.is_constant() {
            return self.scale(other.coeffs[0]);
        }
        if self.is_constant() {
            return other.scale(self.coeffs[0]);
        }
        let mut out = vec![Complex64::new(0.0, 0.0); self.layout.len()];
        for &(a, b, r) in &self.layout.products {
            let x = self.coeffs[a as usize];
            if x.re == 0.0 && x.im == 0.0 {
                continue;
            }
            out[r as usize] += x * other.coeffs[b as usize];
        }
        Self {
            layout: self.layout.clone(),
            coeffs: out,
        }
    }

    /// `f(self)` given `derivs[k] = f^(k)(self.value())` for `k <= order`.
    pub fn compose(&self, derivs: &[Complex64]) -> Self {
        let order = self.layout.order();
        let mut h = self.clone();
        h.coeffs[0] = Complex64::new(0.0, 0.0);
        let mut out = Self::constant(&self.layout, derivs[0]);
        if h.is_constant() {
            return out;
        }
        let mut power = h.clone();
        let mut fact = 1.0;
        for (k, dk) in derivs.iter().enumerate().take(order + 1).skip(1) {
            fact *= k as f64;
            out = out.add(&power.scale(dk / fact));
            if k < order {
                power = power.mul(&h);
            }
        }
        out
    }

    /// Partial derivative for the multi-index given as a list of variables.
    pub fn partial(&self, vars: &[usize]) -> Complex64 {
        match self.layout.index_of_vars(vars) {
            Some(i) => self.coeffs[i] * self.layout.factorial(i),
            None => Complex64::new(0.0, 0.0),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn layout_sizes() {
        // C(nvars + order, order)
        assert_eq!(Layout::get(8, 4).len(), 495);
        assert_eq!(Layout::get(4, 3).len(), 35);
        assert_eq!(Layout::get(2, 0).len(), 1);
    }

    #[test]
    fn cube_derivatives() {
        let l = Layout::get(2, 4);
        let x = TaylorPoly::variable(&l, 0, c(2.0));
        let p = x.mul(&x).mul(&x).scale(c(1.0 / 6.0));
        assert!((p.partial(&[0]) - c(2.0)).norm() < 1e-15);
        assert!((p.partial(&[0, 0]) - c(2.0)).norm() < 1e-15);
        assert!((p.partial(&[0, 0, 0]) - c(1.0)).norm() < 1e-15);
        assert!(p.partial(&[0, 0, 0, 0]).norm() < 1e-15);
    }

    #[test]
    fn exp_of_product_mixed_partial() {
        // d^2/dxdy exp(xy) = (1 + xy) exp(xy)
        let l = Layout::get(2, 2);
        let (xv, yv) = (0.3, -0.7);
        let x = TaylorPoly::variable(&l, 0, c(xv));
        let y = TaylorPoly::variable(&l, 1, c(yv));
        let xy = x.mul(&y);
        let e = xy.value().exp();
        let f = xy.compose(&[e, e, e]);
        let want = (1.0 + xv * yv) * (xv * yv).exp();
        assert!((f.partial(&[0, 1]).re - want).abs() < 1e-14);
        assert_eq!(f.partial(&[0, 1]), f.partial(&[1, 0]));
    }
}
