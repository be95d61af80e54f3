//! Plebanski functions `W(z, theta)`, points of `X = T_M`, and jets.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::{self, Domain, Expr, PointDomain, Var};
use crate::jet::{Layout, TaylorPoly};

pub const MAX_ORDER: usize = 4;

/// Default modulus below which a denominator counts as a pole.
pub const DEFAULT_POLE_GUARD: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct XPoint {
    pub z: Vec<Complex64>,
    pub theta: Vec<Complex64>,
}

impl XPoint {
    pub fn new(z: Vec<Complex64>, theta: Vec<Complex64>) -> Result<Self> {
        if z.len() != theta.len() {
            return Err(Error::Dimension(format!(
                "z has length {} but theta has length {}",
                z.len(),
                theta.len()
            )));
        }
        Ok(Self { z, theta })
    }

    pub fn from_real(z: &[f64], theta: &[f64]) -> Result<Self> {
        Self::new(
            z.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
            theta.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
        )
    }

    pub fn n(&self) -> usize {
        self.z.len()
    }

    /// Coordinate `k` of the combined vector `(z, theta)`.
    pub fn coord(&self, k: usize) -> Complex64 {
        let n = self.n();
        if k < n {
            self.z[k]
        } else {
            self.theta[k - n]
        }
    }

    /// The point shifted by `h` along combined coordinate `k`.
    pub fn shifted(&self, k: usize, h: Complex64) -> Self {
        let mut p = self.clone();
        let n = self.n();
        if k < n {
            p.z[k] += h;
        } else {
            p.theta[k - n] += h;
        }
        p
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SymmetryFlags {
    pub periodic: bool,
    pub homogeneous: bool,
    pub odd: bool,
}

type Predicate = Arc<dyn Fn(&XPoint) -> bool + Send + Sync>;

#[derive(Clone)]
pub struct PlebanskiFunction {
    expr: Arc<Expr>,
    n: usize,
    flags: SymmetryFlags,
    pole_guard: f64,
    extra_region: Option<Predicate>,
}

impl fmt::Debug for PlebanskiFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PlebanskiFunction")
            .field("expr", &self.expr.to_string())
            .field("n", &self.n)
            .field("flags", &self.flags)
            .field("pole_guard", &self.pole_guard)
            .finish()
    }
}

impl PlebanskiFunction {
    /// `W` on a base of dimension `n`.
    pub fn new(expr: Expr, n: usize) -> Result<Self> {
        if let Some(k) = expr.max_index() {
            if k >= n {
                return Err(Error::Dimension(format!(
                    "expression uses index {} but the base has dimension {n}",
                    k + 1
                )));
            }
        }
        Ok(Self {
            expr: Arc::new(expr),
            n,
            flags: SymmetryFlags::default(),
            pole_guard: DEFAULT_POLE_GUARD,
            extra_region: None,
        })
    }

    pub fn zero(n: usize) -> Self {
        Self::new(Expr::zero(), n).expect("zero has no variables")
    }

    /// Parse the text format. A line `#! periodic homogeneous odd` (any
    /// subset) declares symmetry flags; other `#` lines are comments.
    pub fn parse(src: &str, n: usize) -> Result<Self> {
        let mut flags = SymmetryFlags::default();
        for (li, line) in src.lines().enumerate() {
            if let Some(rest) = line.trim_start().strip_prefix("#!") {
                for word in rest.split_whitespace() {
                    match word {
                        "periodic" => flags.periodic = true,
                        "homogeneous" => flags.homogeneous = true,
                        "odd" => flags.odd = true,
                        other => {
                            return Err(Error::Parse {
                                line: li + 1,
                                column: line.find(other).map_or(1, |c| c + 1),
                                message: format!("unknown symmetry flag '{other}'"),
                            })
                        }
                    }
                }
            }
        }
        Ok(Self::new(expr::parse(src)?, n)?.with_flags(flags))
    }

    pub fn with_flags(mut self, flags: SymmetryFlags) -> Self {
        self.flags = flags;
        self
    }

    pub fn with_pole_guard(mut self, guard: f64) -> Self {
        self.pole_guard = guard;
        self
    }

    /// Restrict the declared regular region further.
    pub fn with_region(mut self, pred: impl Fn(&XPoint) -> bool + Send + Sync + 'static) -> Self {
        self.extra_region = Some(Arc::new(pred));
        self
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn flags(&self) -> SymmetryFlags {
        self.flags
    }

    pub fn depends_on_theta(&self) -> bool {
        self.expr.depends_on_theta()
    }

    fn check_point(&self, x: &XPoint) -> Result<()> {
        if x.n() != self.n {
            return Err(Error::Dimension(format!(
                "point has dimension {} but W expects {}",
                x.n(),
                self.n
            )));
        }
        if let Some(pred) = &self.extra_region {
            if !pred(x) {
                return Err(Error::PoleHit("point outside the declared region".into()));
            }
        }
        Ok(())
    }

    pub fn is_regular(&self, x: &XPoint) -> bool {
        self.value(x).is_ok()
    }

    pub fn value(&self, x: &XPoint) -> Result<Complex64> {
        self.check_point(x)?;
        let v = expr::evaluate(
            &self.expr,
            &PointDomain {
                z: &x.z,
                theta: &x.theta,
            },
            self.pole_guard,
        )?;
        if !(v.re.is_finite() && v.im.is_finite()) {
            return Err(Error::Overflow(format!("W = {v}")));
        }
        Ok(v)
    }
}

struct JetDomain<'a> {
    layout: Arc<Layout>,
    x: &'a XPoint,
}

impl Domain for JetDomain<'_> {
    type T = TaylorPoly;
    fn constant(&self, c: Complex64) -> TaylorPoly {
        TaylorPoly::constant(&self.layout, c)
    }
    fn var(&self, v: Var) -> TaylorPoly {
        let n = self.x.n();
        let (k, val) = match v {
            Var::Z(k) => (k, self.x.z[k]),
            Var::Theta(k) => (n + k, self.x.theta[k]),
        };
        TaylorPoly::variable(&self.layout, k, val)
    }
    fn value(&self, t: &TaylorPoly) -> Complex64 {
        t.value()
    }
    fn add(&self, a: &TaylorPoly, b: &TaylorPoly) -> TaylorPoly {
        a.add(b)
    }
    fn sub(&self, a: &TaylorPoly, b: &TaylorPoly) -> TaylorPoly {
        a.sub(b)
    }
    fn mul(&self, a: &TaylorPoly, b: &TaylorPoly) -> TaylorPoly {
        a.mul(b)
    }
    fn neg(&self, a: &TaylorPoly) -> TaylorPoly {
        a.neg()
    }
    fn order(&self) -> usize {
        self.layout.order()
    }
    fn apply(&self, a: &TaylorPoly, derivs: &[Complex64]) -> TaylorPoly {
        a.compose(derivs)
    }
}

/// All partial derivatives of `W` up to some order at one point.
///
/// Variables are indexed `0..n` for `z` and `n..2n` for `theta`.
#[derive(Debug, Clone)]
pub struct Jet {
    point: XPoint,
    poly: TaylorPoly,
}

impl Jet {
    pub fn point(&self) -> &XPoint {
        &self.point
    }

    pub fn order(&self) -> usize {
        self.poly.layout().order()
    }

    pub fn n(&self) -> usize {
        self.point.n()
    }

    pub fn value(&self) -> Complex64 {
        self.poly.value()
    }

    /// Partial derivative along the listed combined-coordinate indices.
    pub fn partial(&self, vars: &[usize]) -> Complex64 {
        assert!(vars.len() <= self.order(), "jet order {} too low for {vars:?}", self.order());
        self.poly.partial(vars)
    }

    /// `d^k W / dtheta_{a} ...` with zero-based fiber indices.
    pub fn d_theta(&self, idx: &[usize]) -> Complex64 {
        let n = self.n();
        let v: Vec<usize> = idx.iter().map(|&a| a + n).collect();
        self.partial(&v)
    }

    /// Mixed derivative with fiber indices `th` and base indices `z`.
    pub fn d_mixed(&self, th: &[usize], z: &[usize]) -> Complex64 {
        let n = self.n();
        let v: Vec<usize> = th.iter().map(|&a| a + n).chain(z.iter().copied()).collect();
        self.partial(&v)
    }

    /// Every partial as a map from sorted multi-index to value.
    pub fn partials(&self) -> BTreeMap<Vec<usize>, Complex64> {
        let layout = self.poly.layout();
        (0..layout.len())
            .map(|i| {
                let mut key = Vec::new();
                for (v, &e) in layout.monomial(i).iter().enumerate() {
                    key.extend(std::iter::repeat_n(v, e as usize));
                }
                (key, self.poly.coeffs()[i] * layout.factorial(i))
            })
            .collect()
    }
}

/// Exact partial derivatives of `W` at `x` up to `max_order`.
pub fn eval_jet(w: &PlebanskiFunction, x: &XPoint, max_order: usize) -> Result<Jet> {
    if max_order > MAX_ORDER {
        return Err(Error::OrderTooHigh(max_order));
    }
    w.check_point(x)?;
    let dom = JetDomain {
        layout: Layout::get(2 * w.n, max_order),
        x,
    };
    let poly = expr::evaluate(&w.expr, &dom, w.pole_guard)?;
    if !poly.is_finite() {
        return Err(Error::Overflow("non-finite partial derivative".into()));
    }
    Ok(Jet {
        point: x.clone(),
        poly,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn zero_function_has_zero_jet() {
        let w = PlebanskiFunction::zero(2);
        let x = XPoint::from_real(&[0.3, -1.0], &[2.0, 0.5]).unwrap();
        let j = eval_jet(&w, &x, 4).unwrap();
        assert!(j.partials().values().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn cubic_monomial() {
        let w = PlebanskiFunction::parse("t1^3/6", 2).unwrap();
        let x = XPoint::from_real(&[0.0, 0.0], &[2.0, 0.0]).unwrap();
        let j = eval_jet(&w, &x, 4).unwrap();
        assert!((j.d_theta(&[0]) - c(2.0)).norm() < 1e-14);
        assert!((j.d_theta(&[0, 0]) - c(2.0)).norm() < 1e-14);
        assert!((j.d_theta(&[0, 0, 0]) - c(1.0)).norm() < 1e-14);
        assert!(j.d_theta(&[0, 0, 0, 0]).norm() < 1e-14);
    }

    #[test]
    fn flags_and_dimension_checks() {
        let w = PlebanskiFunction::parse("#! odd homogeneous\nt1^3/z1", 2).unwrap();
        assert!(w.flags().odd && w.flags().homogeneous && !w.flags().periodic);
        assert!(matches!(PlebanskiFunction::parse("#! shiny\n1", 2), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(PlebanskiFunction::parse("z3", 2), Err(Error::Dimension(_))));
        assert!(matches!(eval_jet(&w, &XPoint::from_real(&[1.0, 1.0], &[0.0, 0.0]).unwrap(), 5), Err(Error::OrderTooHigh(5))));
    }

    #[test]
    fn pole_and_overflow() {
        let w = PlebanskiFunction::parse("t1^3/z1", 2).unwrap();
        let x = XPoint::from_real(&[0.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!(matches!(eval_jet(&w, &x, 3), Err(Error::PoleHit(_))));
        assert!(!w.is_regular(&x));
        let w = PlebanskiFunction::parse("exp(exp(z1))", 2).unwrap();
        let x = XPoint::from_real(&[800.0, 0.0], &[0.0, 0.0]).unwrap();
        assert!(matches!(eval_jet(&w, &x, 2), Err(Error::Overflow(_))));
        let w = PlebanskiFunction::parse("z1", 2).unwrap().with_region(|x| x.z[0].re < 1.0);
        assert!(matches!(w.value(&XPoint::from_real(&[2.0, 0.0], &[0.0, 0.0]).unwrap()), Err(Error::PoleHit(_))));
    }

    #[test]
    fn partials_are_permutation_symmetric() {
        let w = PlebanskiFunction::parse("exp(z1*t2) * t1^2 / (z2 + 3)", 2).unwrap();
        let x = XPoint::from_real(&[0.4, 0.2], &[-0.7, 1.3]).unwrap();
        let j = eval_jet(&w, &x, 4).unwrap();
        for a in 0..4 {
            for b in 0..4 {
                assert_eq!(j.partial(&[a, b]), j.partial(&[b, a]));
                for cc in 0..4 {
                    assert_eq!(j.partial(&[a, b, cc]), j.partial(&[cc, a, b]));
                }
            }
        }
    }

    /// Five-point central difference of order one along `k`, applied to
    /// `f`, with step `h`.
    fn fd1(f: &dyn Fn(&XPoint) -> Complex64, x: &XPoint, k: usize, h: f64) -> Complex64 {
        let e = |s: f64| f(&x.shifted(k, c(s * h)));
        (e(-2.0) - e(-1.0) * 8.0 + e(1.0) * 8.0 - e(2.0)) / (12.0 * h)
    }

    fn random_poly(coeffs: &[f64], exps: &[[u32; 4]]) -> String {
        coeffs
            .iter()
            .zip(exps)
            .map(|(cf, e)| format!("({cf})*z1^{}*z2^{}*t1^{}*t2^{}", e[0], e[1], e[2], e[3]))
            .collect::<Vec<_>>()
            .join(" + ")
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn degree5_partials_match_finite_differences(
            coeffs in prop::collection::vec(-2.0f64..2.0, 6),
            raw in prop::collection::vec(prop::array::uniform4(0u32..3), 6),
            pt in prop::array::uniform4(-1.0f64..1.0),
        ) {
            // keep total degree at most 5
            let exps: Vec<[u32; 4]> = raw.iter().map(|e| {
                let mut e = *e;
                while e.iter().sum::<u32>() > 5 { let m = (0..4).max_by_key(|&i| e[i]).unwrap(); e[m] -= 1; }
                e
            }).collect();
            let w = PlebanskiFunction::parse(&random_poly(&coeffs, &exps), 2).unwrap();
            let x = XPoint::from_real(&pt[..2], &pt[2..]).unwrap();
            let jet = eval_jet(&w, &x, 4).unwrap();
            let h = 1e-2;
            let g = |p: &XPoint| w.value(p).unwrap();
            for a in 0..4 {
                let want = jet.partial(&[a]);
                prop_assert!((fd1(&g, &x, a, h) - want).norm() <= 1e-6 * (1.0 + want.norm()));
                let ga = |p: &XPoint| fd1(&g, p, a, h);
                for b in 0..4 {
                    let want = jet.partial(&[a, b]);
                    prop_assert!((fd1(&ga, &x, b, h) - want).norm() <= 1e-6 * (1.0 + want.norm()));
                    let gab = |p: &XPoint| fd1(&ga, p, b, h);
                    for cc in 0..4 {
                        let want = jet.partial(&[a, b, cc]);
                        prop_assert!((fd1(&gab, &x, cc, h) - want).norm() <= 1e-6 * (1.0 + want.norm()));
                    }
                }
            }
        }
    }
}
