//! Adaptive Dormand-Prince 5(4) integration of complex systems over a real
//! parameter, generic over the real scalar so the same stepper runs in
//! double or double-double precision.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};

/// Working precision for computations that offer a choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    Double,
    /// Double-double arithmetic, about 32 significant digits.
    Extended,
}

impl std::str::FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "double" => Ok(Self::Double),
            "extended" | "quad" | "double-double" => Ok(Self::Extended),
            other => Err(Error::Invalid(format!("unknown precision mode '{other}'"))),
        }
    }
}

pub trait Real:
    Copy
    + Debug
    + PartialOrd
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;

    fn zero() -> Self {
        Self::from_f64(0.0)
    }

    fn one() -> Self {
        Self::from_f64(1.0)
    }

    /// `num / den`, correctly rounded in the working precision.
    fn ratio(num: i64, den: i64) -> Self {
        Self::from_f64(num as f64) / Self::from_f64(den as f64)
    }
}

impl Real for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
}

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi)/2`: about 32 digits.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl Dd {
    pub const fn new(hi: f64, lo: f64) -> Self {
        Self { hi, lo }
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, y: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, y.hi);
        let (t, f) = two_sum(self.lo, y.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Dd { hi, lo }
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd::new(-self.hi, -self.lo)
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, y: Dd) -> Dd {
        self + (-y)
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, y: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, y.hi);
        let e = e + (self.hi * y.lo + self.lo * y.hi);
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, y: Dd) -> Dd {
        let q1 = self.hi / y.hi;
        let r = self - y * Dd::from_f64(q1);
        let q2 = r.hi / y.hi;
        let r = r - y * Dd::from_f64(q2);
        let q3 = r.hi / y.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo } + Dd::from_f64(q3)
    }
}

impl Real for Dd {
    fn from_f64(x: f64) -> Self {
        Dd::new(x, 0.0)
    }
    fn to_f64(self) -> f64 {
        self.hi + self.lo
    }
}

/// Complex number over a [`Real`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cx<R> {
    pub re: R,
    pub im: R,
}

impl<R: Real> Cx<R> {
    pub fn new(re: R, im: R) -> Self {
        Self { re, im }
    }

    pub fn zero() -> Self {
        Self::new(R::zero(), R::zero())
    }

    pub fn one() -> Self {
        Self::new(R::one(), R::zero())
    }

    pub fn from_c64(z: Complex64) -> Self {
        Self::new(R::from_f64(z.re), R::from_f64(z.im))
    }

    pub fn to_c64(self) -> Complex64 {
        Complex64::new(self.re.to_f64(), self.im.to_f64())
    }

    pub fn scale(self, s: R) -> Self {
        Self::new(self.re * s, self.im * s)
    }

    pub fn conj(self) -> Self {
        Self::new(self.re, -self.im)
    }

    pub fn norm_sqr(self) -> R {
        self.re * self.re + self.im * self.im
    }

    pub fn inv(self) -> Self {
        let d = self.norm_sqr();
        Self::new(self.re / d, -self.im / d)
    }

    /// Modulus in double precision.
    pub fn abs_f64(self) -> f64 {
        self.re.to_f64().hypot(self.im.to_f64())
    }
}

impl<R: Real> Add for Cx<R> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.re + o.re, self.im + o.im)
    }
}

impl<R: Real> Sub for Cx<R> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.re - o.re, self.im - o.im)
    }
}

impl<R: Real> Neg for Cx<R> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.re, -self.im)
    }
}

impl<R: Real> Mul for Cx<R> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Self::new(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)
    }
}

impl<R: Real> Div for Cx<R> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        self * o.inv()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step as a fraction of the interval; chosen automatically if `None`.
    pub h_init: Option<f64>,
    pub max_steps: usize,
    /// Smallest step relative to the interval before giving up.
    pub h_min_rel: f64,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            atol: 1e-12,
            h_init: None,
            max_steps: 200_000,
            h_min_rel: 1e-14,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

#[derive(Debug, Clone)]
pub struct OdeSolution<R: Real> {
    pub y: Vec<Cx<R>>,
    pub stats: OdeStats,
    /// `(t, y)` after every accepted step when recording was requested.
    pub samples: Vec<(f64, Vec<Cx<R>>)>,
}

// Dormand-Prince tableau as exact ratios.
const C: [(i64, i64); 7] = [(0, 1), (1, 5), (3, 10), (4, 5), (8, 9), (1, 1), (1, 1)];
const A: [&[(i64, i64)]; 7] = [
    &[],
    &[(1, 5)],
    &[(3, 40), (9, 40)],
    &[(44, 45), (-56, 15), (32, 9)],
    &[(19372, 6561), (-25360, 2187), (64448, 6561), (-212, 729)],
    &[(9017, 3168), (-355, 33), (46732, 5247), (49, 176), (-5103, 18656)],
    &[(35, 384), (0, 1), (500, 1113), (125, 192), (-2187, 6784), (11, 84)],
];
// fifth-order weights equal the last row of A; error = b5 - b4
const E: [(i64, i64); 7] = [
    (71, 57600),
    (0, 1),
    (-71, 16695),
    (71, 1920),
    (-17253, 339200),
    (22, 525),
    (-1, 40),
];

/// Integrate `y' = f(t, y)` from `t0` to `t1 > t0`.
pub fn dopri5<R, F>(mut f: F, y0: &[Cx<R>], t0: R, t1: R, opts: &OdeOptions, record: bool) -> Result<OdeSolution<R>>
where
    R: Real,
    F: FnMut(R, &[Cx<R>]) -> Result<Vec<Cx<R>>>,
{
    let m = y0.len();
    let span = (t1 - t0).to_f64();
    if !(span > 0.0) {
        return Err(Error::StepFailure("empty or reversed interval".into()));
    }
    let a: Vec<Vec<R>> = A.iter().map(|row| row.iter().map(|&(p, q)| R::ratio(p, q)).collect()).collect();
    let c: Vec<R> = C.iter().map(|&(p, q)| R::ratio(p, q)).collect();
    let e: Vec<R> = E.iter().map(|&(p, q)| R::ratio(p, q)).collect();
    let mut stats = OdeStats::default();
    let mut samples = Vec::new();
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k0 = f(t, &y)?;
    stats.evaluations += 1;
    let mut h = opts.h_init.map_or_else(
        || {
            let ynorm = y.iter().map(|v| v.abs_f64()).fold(0.0, f64::max);
            let fnorm = k0.iter().map(|v| v.abs_f64()).fold(0.0, f64::max);
            let guess = if fnorm > 0.0 {
                0.01 * (ynorm.max(opts.atol / opts.rtol) / fnorm)
            } else {
                span * 1e-3
            };
            guess.clamp(span * 1e-10, span * 0.1)
        },
        |frac| frac * span,
    );
    let h_min = opts.h_min_rel * span;
    if record {
        samples.push((t.to_f64(), y.clone()));
    }
    let mut stage_y = vec![Cx::zero(); m];
    loop {
        let remaining = (t1 - t).to_f64();
        if remaining <= span * 1e-15 {
            break;
        }
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(Error::StepFailure(format!("exceeded {} steps", opts.max_steps)));
        }
        let last = h >= remaining;
        let hr = if last { t1 - t } else { R::from_f64(h) };
        let mut ks: Vec<Vec<Cx<R>>> = Vec::with_capacity(7);
        ks.push(k0.clone());
        for s in 1..7 {
            for idx in 0..m {
                let mut acc = y[idx];
                for (j, &aij) in a[s].iter().enumerate() {
                    acc = acc + ks[j][idx].scale(aij * hr);
                }
                stage_y[idx] = acc;
            }
            ks.push(f(t + c[s] * hr, &stage_y)?);
            stats.evaluations += 1;
        }
        // stage 7 was evaluated at the fifth-order solution
        let y_new = stage_y.clone();
        let mut err: f64 = 0.0;
        for idx in 0..m {
            let mut d = Cx::zero();
            for (j, kj) in ks.iter().enumerate() {
                d = d + kj[idx].scale(e[j] * hr);
            }
            let scale = opts.atol + opts.rtol * y[idx].abs_f64().max(y_new[idx].abs_f64());
            err = err.max(d.abs_f64() / scale);
        }
        if !err.is_finite() {
            stats.rejected += 1;
            h *= 0.25;
            if h < h_min {
                return Err(Error::StepFailure("non-finite derivative".into()));
            }
            continue;
        }
        let hf = hr.to_f64();
        if err <= 1.0 {
            t = if last { t1 } else { t + hr };
            y = y_new;
            k0 = ks.pop().expect("seven stages");
            stats.accepted += 1;
            if record {
                samples.push((t.to_f64(), y.clone()));
            }
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h = hf * fac;
        } else {
            stats.rejected += 1;
            h = hf * (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
            if h < h_min {
                return Err(Error::StepFailure(format!("step size underflow at t = {:e}", t.to_f64())));
            }
        }
    }
    Ok(OdeSolution { y, stats, samples })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dd_arithmetic() {
        let third = Dd::from_f64(1.0) / Dd::from_f64(3.0);
        let back = third * Dd::from_f64(3.0) - Dd::one();
        assert!(back.to_f64().abs() < 1e-31);
        // (1 + 2^-60) - 1 survives
        let tiny = Dd::from_f64(1.0) + Dd::from_f64(2f64.powi(-60));
        assert_eq!((tiny - Dd::one()).to_f64(), 2f64.powi(-60));
        assert!(Dd::from_f64(2.0) > Dd::from_f64(1.0));
        let r: Dd = Real::ratio(1, 10);
        assert!(((r * Dd::from_f64(10.0)) - Dd::one()).to_f64().abs() < 1e-31);
    }

    #[test]
    fn complex_ops() {
        let a = Cx::<f64>::new(1.0, 2.0);
        let b = Cx::<f64>::new(-0.5, 3.0);
        let w = (a * b / b - a).abs_f64();
        assert!(w < 1e-15);
        assert_eq!(a.conj().im, -2.0);
    }

    #[test]
    fn exponential_decay_and_rotation() {
        // y' = i y over [0, 2 pi]
        let sol = dopri5(
            |_t: f64, y: &[Cx<f64>]| Ok(vec![y[0] * Cx::new(0.0, 1.0)]),
            &[Cx::one()],
            0.0,
            2.0 * std::f64::consts::PI,
            &OdeOptions::default(),
            false,
        )
        .unwrap();
        assert!((sol.y[0] - Cx::one()).abs_f64() < 1e-8);
        assert!(sol.stats.accepted > 10);
    }

    #[test]
    fn error_scales_with_tolerance() {
        let run = |tol: f64| {
            let opts = OdeOptions {
                rtol: tol,
                atol: tol * 1e-3,
                ..Default::default()
            };
            let sol = dopri5(|t: f64, y: &[Cx<f64>]| Ok(vec![y[0].scale(-t)]), &[Cx::one()], 0.0, 3.0, &opts, false).unwrap();
            (sol.y[0].re - (-4.5f64).exp()).abs()
        };
        let (e6, e10) = (run(1e-6), run(1e-10));
        assert!(e6 < 1e-6 && e10 < 1e-10 && e10 < e6);
    }

    #[test]
    fn double_double_reaches_beyond_f64() {
        let opts = OdeOptions {
            rtol: 1e-24,
            atol: 1e-28,
            max_steps: 1_000_000,
            h_min_rel: 1e-30,
            ..Default::default()
        };
        let sol = dopri5(|_t: Dd, y: &[Cx<Dd>]| Ok(vec![y[0]]), &[Cx::one()], Dd::zero(), Dd::one(), &opts, false).unwrap();
        // e = 2.718281828459045 + 1.4456468917292502e-16
        let e = Dd::new(std::f64::consts::E, 1.4456468917292502e-16);
        let err = (sol.y[0].re - e).to_f64().abs();
        assert!(err < 1e-22, "{err:e}");
    }
}
