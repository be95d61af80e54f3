//! Wall-crossing automorphisms of the twisted character torus, as truncated
//! power series with exact rational coefficients.
//!
//! Characters of the twisted torus multiply as `X_a X_b = (-1)^{<a,b>} X_{a+b}`.
//! A quadratic refinement `sigma` identifies them with ordinary characters,
//! `X_g = sigma(g) xi_g`, and all algebra here runs in the `xi` coordinates.
//! The positive cone is the orthant of the lattice basis, so a monomial is an
//! exponent vector `m` with nonnegative entries and degree `|m| = sum m_i`.
//! An automorphism is stored through its pullbacks
//! `a*(xi_{e_i}) = xi_{e_i} F_i` with `F_i = 1 + (terms of degree 1..N)`.
//! [`TorusAutomorphism::twisted_image_terms`] rewrites them on the twisted
//! characters, where `a*(X_{e_i}) = X_{e_i} (1 + sum_m c_m X_m)` and `c_m = sigma(m) d_m`.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::Serialize;

use crate::error::{Error, Result};

pub type Charge = Vec<i64>;
pub type Monomial = Vec<u32>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ChargeLattice {
    pairing: Vec<Vec<i64>>,
}

impl ChargeLattice {
    pub fn new(pairing: Vec<Vec<i64>>) -> Result<Self> {
        let n = pairing.len();
        if n == 0 || pairing.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension("pairing must be a non-empty square matrix".into()));
        }
        for i in 0..n {
            for j in 0..n {
                if pairing[i][j] != -pairing[j][i] {
                    return Err(Error::NotSkew(i, j));
                }
            }
        }
        Ok(Self { pairing })
    }

    /// Rank 2 with `<e_1, e_2> = k`.
    pub fn rank2(k: i64) -> Self {
        Self {
            pairing: vec![vec![0, k], vec![-k, 0]],
        }
    }

    pub fn rank(&self) -> usize {
        self.pairing.len()
    }

    pub fn matrix(&self) -> &[Vec<i64>] {
        &self.pairing
    }

    pub fn pair(&self, a: &[i64], b: &[i64]) -> i64 {
        let n = self.rank();
        let mut s = 0;
        for i in 0..n {
            for j in 0..n {
                s += a[i] * self.pairing[i][j] * b[j];
            }
        }
        s
    }
}

/// Sign function with `sigma(a + b) = (-1)^<a, b> sigma(a) sigma(b)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct QuadraticRefinement {
    basis_signs: Vec<i8>,
}

impl QuadraticRefinement {
    pub fn new(basis_signs: Vec<i8>) -> Result<Self> {
        if basis_signs.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::Invalid("refinement values must be +1 or -1".into()));
        }
        Ok(Self { basis_signs })
    }

    pub fn constant(rank: usize, sign: i8) -> Result<Self> {
        Self::new(vec![sign; rank])
    }

    pub fn basis_signs(&self) -> &[i8] {
        &self.basis_signs
    }

    /// `prod_i sigma(e_i)^{n_i} (-1)^{sum_{i<j} n_i n_j <e_i, e_j>}`.
    pub fn sigma(&self, lattice: &ChargeLattice, gamma: &[i64]) -> i8 {
        let n = lattice.rank();
        let mut odd = 0i64;
        for i in 0..n {
            if self.basis_signs[i] == -1 {
                odd += gamma[i];
            }
            for j in (i + 1)..n {
                odd += gamma[i] * gamma[j] * lattice.pairing[i][j];
            }
        }
        if odd.rem_euclid(2) == 0 {
            1
        } else {
            -1
        }
    }
}

/// Truncated power series in the cone monomials.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Series {
    terms: BTreeMap<Monomial, BigRational>,
}

fn degree(m: &[u32]) -> u32 {
    m.iter().sum()
}

impl Series {
    pub fn one(rank: usize) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(vec![0; rank], BigRational::one());
        Self { terms }
    }

    pub fn monomial(m: Monomial, c: BigRational) -> Self {
        let mut s = Self::default();
        s.add_term(m, c);
        s
    }

    pub fn terms(&self) -> &BTreeMap<Monomial, BigRational> {
        &self.terms
    }

    pub fn coefficient(&self, m: &[u32]) -> BigRational {
        self.terms.get(m).cloned().unwrap_or_else(BigRational::zero)
    }

    pub fn add_term(&mut self, m: Monomial, c: BigRational) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(m) {
            Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if o.get().is_zero() {
                    o.remove();
                }
            }
            Entry::Vacant(v) => {
                v.insert(c);
            }
        }
    }

    pub fn add(&self, other: &Series) -> Series {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), c.clone());
        }
        out
    }

    pub fn sub(&self, other: &Series) -> Series {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), -c.clone());
        }
        out
    }

    pub fn mul(&self, other: &Series, order: u32) -> Series {
        let mut out = Series::default();
        for (a, ca) in &self.terms {
            let da = degree(a);
            for (b, cb) in &other.terms {
                if da + degree(b) > order {
                    continue;
                }
                let m: Monomial = a.iter().zip(b).map(|(x, y)| x + y).collect();
                out.add_term(m, ca * cb);
            }
        }
        out
    }

    pub fn pow(&self, k: u32, order: u32, rank: usize) -> Series {
        let mut acc = Series::one(rank);
        for _ in 0..k {
            acc = acc.mul(self, order);
        }
        acc
    }

    /// `1 / self` for a series with constant term 1.
    pub fn reciprocal(&self, order: u32, rank: usize) -> Series {
        let g = self.sub(&Series::one(rank));
        let minus_g = g.scale(&-BigRational::one());
        let mut acc = Series::one(rank);
        let mut power = Series::one(rank);
        for _ in 0..order {
            power = power.mul(&minus_g, order);
            acc = acc.add(&power);
        }
        acc
    }

    pub fn scale(&self, c: &BigRational) -> Series {
        let mut out = Series::default();
        for (m, v) in &self.terms {
            out.add_term(m.clone(), v * c);
        }
        out
    }

    /// Largest `|coefficient|` of the series.
    pub fn max_abs(&self) -> BigRational {
        self.terms.values().map(|c| c.abs()).max().unwrap_or_else(BigRational::zero)
    }
}

/// `binom(k, j)` for any integer `k`.
fn binomial(k: i64, j: u32) -> BigRational {
    let mut num = BigInt::one();
    let mut den = BigInt::one();
    for t in 0..j as i64 {
        num *= BigInt::from(k - t);
        den *= BigInt::from(t + 1);
    }
    BigRational::new(num, den)
}

/// `(1 + c X^gamma)^k` truncated at `order`.
fn binomial_series(gamma: &[u32], c: &BigRational, k: i64, order: u32) -> Series {
    let rank = gamma.len();
    let dg = degree(gamma);
    let mut out = Series::one(rank);
    if k == 0 {
        return out;
    }
    let mut cpow = BigRational::one();
    for j in 1..=(order / dg) {
        cpow *= c;
        let m: Monomial = gamma.iter().map(|g| g * j).collect();
        out.add_term(m, binomial(k, j) * &cpow);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TorusAutomorphism {
    lattice: ChargeLattice,
    order: u32,
    /// `F_i` with `a*(xi_{e_i}) = xi_{e_i} F_i`.
    images: Vec<Series>,
}

/// Serializable form of one generator image.
#[derive(Debug, Clone, Serialize)]
pub struct ImageTerm {
    pub monomial: Monomial,
    pub coefficient: String,
}

impl TorusAutomorphism {
    pub fn identity(lattice: &ChargeLattice, order: u32) -> Self {
        Self {
            lattice: lattice.clone(),
            order,
            images: vec![Series::one(lattice.rank()); lattice.rank()],
        }
    }

    pub fn from_images(lattice: &ChargeLattice, order: u32, images: Vec<Series>) -> Result<Self> {
        let rank = lattice.rank();
        if images.len() != rank || images.iter().any(|s| s.terms.keys().any(|m| m.len() != rank)) {
            return Err(Error::Dimension("one image per generator, each over the lattice rank".into()));
        }
        if images.iter().any(|s| s.coefficient(&vec![0; rank]) != BigRational::one()) {
            return Err(Error::Invalid("correction factors must have constant term 1".into()));
        }
        let images = images
            .into_iter()
            .map(|s| Series {
                terms: s.terms.into_iter().filter(|(m, _)| degree(m) <= order).collect(),
            })
            .collect();
        Ok(Self {
            lattice: lattice.clone(),
            order,
            images,
        })
    }

    pub fn lattice(&self) -> &ChargeLattice {
        &self.lattice
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn rank(&self) -> usize {
        self.lattice.rank()
    }

    pub fn images(&self) -> &[Series] {
        &self.images
    }

    pub fn image_terms(&self) -> Vec<Vec<ImageTerm>> {
        self.images
            .iter()
            .map(|s| {
                s.terms
                    .iter()
                    .map(|(m, c)| ImageTerm {
                        monomial: m.clone(),
                        coefficient: c.to_string(),
                    })
                    .collect()
            })
            .collect()
    }

    /// Generator images on the twisted characters: the coefficient of `X_m`
    /// is `sigma(m)` times the coefficient of `xi^m`.
    pub fn twisted_images(&self, sigma: &QuadraticRefinement) -> Vec<Series> {
        self.images
            .iter()
            .map(|s| Series {
                terms: s
                    .terms
                    .iter()
                    .map(|(m, c)| {
                        let g: Charge = m.iter().map(|&x| x as i64).collect();
                        let c = if sigma.sigma(&self.lattice, &g) < 0 { -c } else { c.clone() };
                        (m.clone(), c)
                    })
                    .collect(),
            })
            .collect()
    }

    pub fn twisted_image_terms(&self, sigma: &QuadraticRefinement) -> Vec<Vec<ImageTerm>> {
        self.twisted_images(sigma)
            .iter()
            .map(|s| {
                s.terms
                    .iter()
                    .map(|(m, c)| ImageTerm {
                        monomial: m.clone(),
                        coefficient: c.to_string(),
                    })
                    .collect()
            })
            .collect()
    }

    /// Copy with `delta` added to the coefficient of `m` in `F_i`.
    pub fn perturbed(&self, i: usize, m: Monomial, delta: BigRational) -> Self {
        let mut out = self.clone();
        out.images[i].add_term(m, delta);
        out
    }

    /// `X^m -> X^m prod_j F_j^{m_j}`, applied to every term of `s`.
    fn substitute(&self, s: &Series) -> Series {
        let rank = self.rank();
        let n = self.order;
        let mut powers: Vec<Vec<Series>> = self.images.iter().map(|f| vec![Series::one(rank), f.clone()]).collect();
        let mut out = Series::default();
        for (m, c) in &s.terms {
            let mut term = Series::monomial(m.clone(), c.clone());
            let budget = n - degree(m);
            for j in 0..rank {
                let e = m[j] as usize;
                while powers[j].len() <= e {
                    let next = powers[j].last().expect("non-empty").mul(&self.images[j], n);
                    powers[j].push(next);
                }
                if e > 0 {
                    term = term.mul(&powers[j][e], degree(m) + budget);
                }
            }
            out = out.add(&term);
        }
        out
    }

    /// Pullback of a general character: `a*(X^beta) = X^beta prod_i F_i^{beta_i}`;
    /// returns the correction factor.
    pub fn character_factor(&self, beta: &[i64]) -> Series {
        let rank = self.rank();
        let mut acc = Series::one(rank);
        for (i, &b) in beta.iter().enumerate() {
            let f = if b >= 0 {
                self.images[i].pow(b as u32, self.order, rank)
            } else {
                self.images[i].reciprocal(self.order, rank).pow((-b) as u32, self.order, rank)
            };
            acc = acc.mul(&f, self.order);
        }
        acc
    }

    /// Inverse by fixed-point iteration `H_i = 1 / H(F_i)`.
    pub fn inverse(&self) -> Self {
        let rank = self.rank();
        let mut h = TorusAutomorphism::identity(&self.lattice, self.order);
        for _ in 0..=self.order {
            let images = self.images.iter().map(|f| h.substitute(f).reciprocal(self.order, rank)).collect();
            h = Self {
                lattice: self.lattice.clone(),
                order: self.order,
                images,
            };
        }
        h
    }

    /// Torus rescaling `X_gamma -> lambda^gamma X_gamma` carried through the coefficients.
    pub fn rescaled(&self, lambda: &[BigRational]) -> Self {
        let images = self
            .images
            .iter()
            .map(|s| {
                let mut out = Series::default();
                for (m, c) in &s.terms {
                    let mut w = c.clone();
                    for (l, &e) in lambda.iter().zip(m) {
                        for _ in 0..e {
                            w *= l;
                        }
                    }
                    out.add_term(m.clone(), w);
                }
                out
            })
            .collect();
        Self {
            lattice: self.lattice.clone(),
            order: self.order,
            images,
        }
    }

    /// Largest coefficient difference over all generator images.
    pub fn distance(&self, other: &TorusAutomorphism) -> Result<BigRational> {
        compatible(self, other)?;
        Ok(self
            .images
            .iter()
            .zip(&other.images)
            .map(|(a, b)| a.sub(b).max_abs())
            .max()
            .unwrap_or_else(BigRational::zero))
    }

    pub fn is_identity(&self) -> bool {
        let one = Series::one(self.rank());
        self.images.iter().all(|s| *s == one)
    }
}

fn compatible(a: &TorusAutomorphism, b: &TorusAutomorphism) -> Result<()> {
    if a.lattice != b.lattice || a.order != b.order {
        return Err(Error::IncompatibleTruncation);
    }
    Ok(())
}

/// `a o b` as maps of the torus, so `(a o b)* = b* o a*`: `b`'s images are
/// substituted into `a`'s series.
pub fn compose(a: &TorusAutomorphism, b: &TorusAutomorphism) -> Result<TorusAutomorphism> {
    compatible(a, b)?;
    let images = a
        .images
        .iter()
        .zip(&b.images)
        .map(|(fa, fb)| fb.mul(&b.substitute(fa), a.order))
        .collect();
    Ok(TorusAutomorphism {
        lattice: a.lattice.clone(),
        order: a.order,
        images,
    })
}

/// `(gamma, Omega(gamma))` pairs.
pub type RayContent = Vec<(Charge, i64)>;

fn primitive(g: &[i64]) -> Charge {
    fn gcd(a: i64, b: i64) -> i64 {
        if b == 0 {
            a.abs()
        } else {
            gcd(b, a % b)
        }
    }
    let d = g.iter().fold(0, |acc, &x| gcd(acc, x));
    g.iter().map(|x| x / d).collect()
}

fn validate_content(lattice: &ChargeLattice, content: &[(Charge, i64)], order: u32) -> Result<Vec<Monomial>> {
    if order < 1 {
        return Err(Error::TruncationTooSmall);
    }
    let mut ray: Option<(Charge, Charge)> = None;
    let mut monos = Vec::new();
    for (g, _) in content {
        if g.len() != lattice.rank() {
            return Err(Error::Dimension("charge length must equal the lattice rank".into()));
        }
        if g.iter().any(|&x| x < 0) || g.iter().all(|&x| x == 0) {
            return Err(Error::ConeViolation(g.clone()));
        }
        let p = primitive(g);
        match &ray {
            Some((r, first)) if *r != p => return Err(Error::MixedRays(first.clone(), g.clone())),
            Some(_) => {}
            None => ray = Some((p, g.clone())),
        }
        monos.push(g.iter().map(|&x| x as u32).collect());
    }
    Ok(monos)
}

/// `xi_beta -> xi_beta prod_gamma (1 + w_gamma xi_gamma)^{Omega(gamma) <gamma, beta>}`.
fn weighted_wall(lattice: &ChargeLattice, content: &[(Charge, i64, BigRational)], order: u32) -> Result<TorusAutomorphism> {
    let plain: Vec<(Charge, i64)> = content.iter().map(|(g, o, _)| (g.clone(), *o)).collect();
    let monos = validate_content(lattice, &plain, order)?;
    let rank = lattice.rank();
    let mut images = Vec::with_capacity(rank);
    for i in 0..rank {
        let mut e = vec![0i64; rank];
        e[i] = 1;
        let mut f = Series::one(rank);
        for ((g, omega, c), m) in content.iter().zip(&monos) {
            let k = omega * lattice.pair(g, &e);
            if k != 0 {
                f = f.mul(&binomial_series(m, c, k, order), order);
            }
        }
        images.push(f);
    }
    Ok(TorusAutomorphism {
        lattice: lattice.clone(),
        order,
        images,
    })
}

/// Wall-crossing automorphism of one ray:
/// `X_beta -> X_beta prod_gamma (1 + sigma(gamma) X_gamma)^{Omega(gamma) <gamma, beta>}`.
/// Since `sigma(gamma) X_gamma = xi_gamma`, every factor is `1 + xi_gamma`.
pub fn wall_automorphism(lattice: &ChargeLattice, sigma: &QuadraticRefinement, content: &[(Charge, i64)], order: u32) -> Result<TorusAutomorphism> {
    if sigma.basis_signs.len() != lattice.rank() {
        return Err(Error::Dimension("refinement must have one sign per generator".into()));
    }
    let weighted: Vec<(Charge, i64, BigRational)> = content.iter().map(|(g, o)| (g.clone(), *o, BigRational::one())).collect();
    weighted_wall(lattice, &weighted, order)
}

/// Same as [`wall_automorphism`] with `sigma(gamma)` replaced by `sigma(gamma) lambda^gamma`.
/// The refinement only fixes the sign convention of the reported coefficients.
pub fn rescaled_wall_automorphism(
    lattice: &ChargeLattice,
    sigma: &QuadraticRefinement,
    content: &[(Charge, i64)],
    lambda: &[BigRational],
    order: u32,
) -> Result<TorusAutomorphism> {
    if sigma.basis_signs.len() != lattice.rank() || lambda.len() != lattice.rank() {
        return Err(Error::Dimension("one sign and one scale per generator".into()));
    }
    let weighted: Vec<(Charge, i64, BigRational)> = content
        .iter()
        .map(|(g, o)| {
            let mut w = BigRational::one();
            for (l, &e) in lambda.iter().zip(g) {
                for _ in 0..e {
                    w *= l;
                }
            }
            (g.clone(), *o, w)
        })
        .collect();
    weighted_wall(lattice, &weighted, order)
}

/// Which composition order makes the pentagon identity hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PentagonBracketing {
    /// `S_{g1} o S_{g2} = S_{g2} o S_{g1+g2} o S_{g1}`
    FirstThenSecond,
    /// `S_{g2} o S_{g1} = S_{g1} o S_{g1+g2} o S_{g2}`
    SecondThenFirst,
}

#[derive(Debug, Clone, Serialize)]
pub struct PentagonReport {
    pub order: u32,
    /// Defect of the reported bracketing, as an exact rational string.
    pub defect: String,
    pub bracketing: PentagonBracketing,
    /// Defect of the other bracketing.
    pub other_defect: String,
}

/// Pentagon identity on the rank-2 lattice with `<g1, g2> = 1` and
/// `sigma(g1) = sigma(g2) = -1`; DT invariants `omega = (Omega(g1), Omega(g1+g2), Omega(g2))`.
pub fn pentagon_with(order: u32, omega: (i64, i64, i64)) -> Result<PentagonReport> {
    let lattice = ChargeLattice::rank2(1);
    let sigma = QuadraticRefinement::constant(2, -1)?;
    let s1 = wall_automorphism(&lattice, &sigma, &[(vec![1, 0], omega.0)], order)?;
    let s12 = wall_automorphism(&lattice, &sigma, &[(vec![1, 1], omega.1)], order)?;
    let s2 = wall_automorphism(&lattice, &sigma, &[(vec![0, 1], omega.2)], order)?;
    let a = compose(&s1, &s2)?.distance(&compose(&compose(&s2, &s12)?, &s1)?)?;
    let b = compose(&s2, &s1)?.distance(&compose(&compose(&s1, &s12)?, &s2)?)?;
    let (bracketing, defect, other) = if b < a {
        (PentagonBracketing::SecondThenFirst, b, a)
    } else {
        (PentagonBracketing::FirstThenSecond, a, b)
    };
    Ok(PentagonReport {
        order,
        defect: defect.to_string(),
        bracketing,
        other_defect: other.to_string(),
    })
}

/// Pentagon with all three DT invariants equal to 1.
pub fn pentagon_defect(order: u32) -> Result<PentagonReport> {
    if order < 2 {
        return Err(Error::TruncationTooSmall);
    }
    pentagon_with(order, (1, 1, 1))
}

/// `max |{a*X_a, a*X_b} - a*{X_a, X_b}|` over generator pairs, with
/// `{X_a, X_b} = <a, b> X_{a+b}`.
pub fn poisson_defect(aut: &TorusAutomorphism) -> BigRational {
    let rank = aut.rank();
    let lat = &aut.lattice;
    let n = aut.order;
    let mut worst = BigRational::zero();
    for i in 0..rank {
        for j in (i + 1)..rank {
            let (fi, fj) = (&aut.images[i], &aut.images[j]);
            let mut lhs = Series::default();
            for (m, c) in &fi.terms {
                for (k, d) in &fj.terms {
                    if degree(m) + degree(k) > n {
                        continue;
                    }
                    let mut p: Vec<i64> = m.iter().map(|&x| x as i64).collect();
                    p[i] += 1;
                    let mut q: Vec<i64> = k.iter().map(|&x| x as i64).collect();
                    q[j] += 1;
                    let w = lat.pair(&p, &q);
                    if w != 0 {
                        let mono = m.iter().zip(k).map(|(a, b)| a + b).collect();
                        lhs.add_term(mono, c * d * BigRational::from_integer(BigInt::from(w)));
                    }
                }
            }
            let pij = lat.pairing[i][j];
            let rhs = fi.mul(fj, n).scale(&BigRational::from_integer(BigInt::from(pij)));
            let d = lhs.sub(&rhs).max_abs();
            if d > worst {
                worst = d;
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    fn rank2() -> (ChargeLattice, QuadraticRefinement) {
        (ChargeLattice::rank2(1), QuadraticRefinement::constant(2, -1).unwrap())
    }

    #[test]
    fn lattice_validation() {
        assert!(matches!(ChargeLattice::new(vec![vec![0, 1], vec![1, 0]]), Err(Error::NotSkew(..))));
        assert!(QuadraticRefinement::new(vec![1, 0]).is_err());
    }

    #[test]
    fn printed_example() {
        let (lat, sig) = rank2();
        let s = wall_automorphism(&lat, &sig, &[(vec![1, 0], 1)], 6).unwrap();
        // X_{e2} -> X_{e2} (1 - X_{e1})
        let mut want = Series::one(2);
        want.add_term(vec![1, 0], q(-1, 1));
        assert_eq!(s.twisted_images(&sig)[1], want);
        assert_eq!(s.twisted_image_terms(&sig)[1][1].coefficient, "-1");
        // the same wall in the untwisted coordinates
        want.add_term(vec![1, 0], q(2, 1));
        assert_eq!(s.images()[1], want);
        assert_eq!(s.images()[0], Series::one(2));
        let zero = wall_automorphism(&lat, &sig, &[(vec![1, 0], 0)], 6).unwrap();
        assert!(zero.is_identity());
    }

    #[test]
    fn binomial_expansion_negative_exponent() {
        let (lat, sig) = rank2();
        let s = wall_automorphism(&lat, &sig, &[(vec![0, 1], 1)], 5).unwrap();
        // X_{e1} -> X_{e1} (1 - X_{e2})^{-1} = X_{e1} (1 + X2 + X2^2 + ...)
        let tw = &s.twisted_images(&sig)[0];
        for k in 0..=5u32 {
            assert_eq!(tw.coefficient(&[0, k]), q(1, 1));
            assert_eq!(s.images()[0].coefficient(&[0, k]), q(if k % 2 == 0 { 1 } else { -1 }, 1));
        }
        assert_eq!(tw.coefficient(&[0, 6]), q(0, 1));
    }

    #[test]
    fn content_errors() {
        let (lat, sig) = rank2();
        assert!(matches!(wall_automorphism(&lat, &sig, &[(vec![1, -1], 1)], 4), Err(Error::ConeViolation(_))));
        assert!(matches!(
            wall_automorphism(&lat, &sig, &[(vec![1, 0], 1), (vec![0, 1], 1)], 4),
            Err(Error::MixedRays(..))
        ));
        assert!(matches!(wall_automorphism(&lat, &sig, &[(vec![1, 0], 1)], 0), Err(Error::TruncationTooSmall)));
        let a = TorusAutomorphism::identity(&lat, 3);
        let b = TorusAutomorphism::identity(&lat, 4);
        assert!(matches!(compose(&a, &b), Err(Error::IncompatibleTruncation)));
    }

    #[test]
    fn same_ray_multiples_allowed() {
        let (lat, sig) = rank2();
        let s = wall_automorphism(&lat, &sig, &[(vec![1, 1], 1), (vec![2, 2], -2)], 8).unwrap();
        assert_eq!(poisson_defect(&s), q(0, 1));
    }

    #[test]
    fn composition_identities() {
        let (lat, sig) = rank2();
        let a = wall_automorphism(&lat, &sig, &[(vec![1, 2], 2)], 8).unwrap();
        let id = TorusAutomorphism::identity(&lat, 8);
        assert_eq!(compose(&id, &a).unwrap(), a);
        assert_eq!(compose(&a, &id).unwrap(), a);
        let a_inv = wall_automorphism(&lat, &sig, &[(vec![1, 2], -2)], 8).unwrap();
        assert!(compose(&a, &a_inv).unwrap().is_identity());
        assert_eq!(a.inverse(), a_inv);
    }

    #[test]
    fn general_inverse() {
        let (lat, sig) = rank2();
        let a = wall_automorphism(&lat, &sig, &[(vec![1, 0], 1)], 6).unwrap();
        let b = wall_automorphism(&lat, &sig, &[(vec![0, 1], 1)], 6).unwrap();
        let ab = compose(&a, &b).unwrap();
        assert!(compose(&ab, &ab.inverse()).unwrap().is_identity());
        assert!(compose(&ab.inverse(), &ab).unwrap().is_identity());
    }

    #[test]
    fn uncoupled_walls_commute() {
        let lat = ChargeLattice::new(vec![vec![0, 0, 1], vec![0, 0, 2], vec![-1, -2, 0]]).unwrap();
        let sig = QuadraticRefinement::new(vec![-1, 1, -1]).unwrap();
        let a = wall_automorphism(&lat, &sig, &[(vec![1, 0, 0], 1)], 8).unwrap();
        let b = wall_automorphism(&lat, &sig, &[(vec![0, 1, 0], 3)], 8).unwrap();
        assert!(!a.is_identity() && !b.is_identity());
        assert_eq!(compose(&a, &b).unwrap(), compose(&b, &a).unwrap());
        // coupled walls do not
        let (lat2, sig2) = rank2();
        let c = wall_automorphism(&lat2, &sig2, &[(vec![1, 0], 1)], 4).unwrap();
        let d = wall_automorphism(&lat2, &sig2, &[(vec![0, 1], 1)], 4).unwrap();
        assert_ne!(compose(&c, &d).unwrap(), compose(&d, &c).unwrap());
    }

    #[test]
    fn pentagon_order_twelve() {
        let r = pentagon_defect(12).unwrap();
        assert_eq!(r.defect, "0");
        assert_eq!(r.bracketing, PentagonBracketing::SecondThenFirst);
        assert_ne!(r.other_defect, "0");
    }

    #[test]
    fn pentagon_fails_with_untwisted_signs() {
        // taking 1 - X_g as an ordinary character ignores the twisted product
        let lat = ChargeLattice::rank2(1);
        let w = |g: Vec<i64>| weighted_wall(&lat, &[(g, 1, q(-1, 1))], 6).unwrap();
        let (s1, s12, s2) = (w(vec![1, 0]), w(vec![1, 1]), w(vec![0, 1]));
        let lhs = compose(&s2, &s1).unwrap();
        let rhs = compose(&compose(&s1, &s12).unwrap(), &s2).unwrap();
        assert!(lhs.distance(&rhs).unwrap() > q(0, 1));
    }

    #[test]
    fn pentagon_low_and_trivial() {
        let r = pentagon_defect(2).unwrap();
        assert_eq!(r.defect, "0");
        assert_ne!(r.other_defect, "0");
        let t = pentagon_with(6, (0, 0, 0)).unwrap();
        assert_eq!((t.defect.as_str(), t.other_defect.as_str()), ("0", "0"));
        assert!(pentagon_defect(1).is_err());
        // without the middle wall the identity fails
        assert_ne!(pentagon_with(4, (1, 0, 1)).unwrap().defect, "0");
    }

    #[test]
    fn poisson_compatibility() {
        let (lat, sig) = rank2();
        assert_eq!(poisson_defect(&TorusAutomorphism::identity(&lat, 8)), q(0, 1));
        let s = wall_automorphism(&lat, &sig, &[(vec![1, 0], 1)], 8).unwrap();
        assert_eq!(poisson_defect(&s), q(0, 1));
        let composed = compose(&s, &wall_automorphism(&lat, &sig, &[(vec![1, 1], 1)], 8).unwrap()).unwrap();
        assert_eq!(poisson_defect(&composed), q(0, 1));
        let bad = s.perturbed(1, vec![1, 1], q(1, 1));
        assert!(poisson_defect(&bad) > q(0, 1));
    }

    #[test]
    fn reordering_invariance() {
        let (lat, sig) = rank2();
        let c1 = [(vec![1, 1], 1), (vec![2, 2], 3), (vec![3, 3], -1)];
        let mut c2 = c1.to_vec();
        c2.reverse();
        assert_eq!(wall_automorphism(&lat, &sig, &c1, 9).unwrap(), wall_automorphism(&lat, &sig, &c2, 9).unwrap());
    }

    #[test]
    fn rescaling_commutes_with_formula() {
        let (lat, sig) = rank2();
        let lambda = [q(2, 3), q(-5, 1)];
        let content = [(vec![1, 2], 2)];
        let s = wall_automorphism(&lat, &sig, &content, 7).unwrap();
        let direct = rescaled_wall_automorphism(&lat, &sig, &content, &lambda, 7).unwrap();
        assert_eq!(s.rescaled(&lambda), direct);
        let t = wall_automorphism(&lat, &sig, &[(vec![1, 0], 1)], 7).unwrap();
        assert_eq!(compose(&s, &t).unwrap().rescaled(&lambda), compose(&s.rescaled(&lambda), &t.rescaled(&lambda)).unwrap());
    }

    #[test]
    fn character_factor_of_generators() {
        let (lat, sig) = rank2();
        let s = wall_automorphism(&lat, &sig, &[(vec![1, 0], 1)], 5).unwrap();
        assert_eq!(s.character_factor(&[0, 1]), s.images()[1]);
        let inv = s.character_factor(&[0, -1]);
        assert_eq!(inv.mul(&s.images()[1], 5), Series::one(2));
    }

    proptest! {
        #[test]
        fn sigma_extension_rule(
            a in proptest::collection::vec(-4i64..5, 3),
            b in proptest::collection::vec(-4i64..5, 3),
            signs in proptest::collection::vec(prop_oneof![Just(1i8), Just(-1i8)], 3),
        ) {
            let lat = ChargeLattice::new(vec![vec![0, 1, -2], vec![-1, 0, 3], vec![2, -3, 0]]).unwrap();
            let sig = QuadraticRefinement::new(signs).unwrap();
            let sum: Vec<i64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
            let parity = if lat.pair(&a, &b).rem_euclid(2) == 0 { 1 } else { -1 };
            prop_assert_eq!(sig.sigma(&lat, &sum), parity * sig.sigma(&lat, &a) * sig.sigma(&lat, &b));
        }
    }
}
