//! Seeded sample grids for pointwise checks.
//!
//! A grid is a tensor lattice in the fiber coordinates `theta`, with `per_axis`
//! points per axis on `[lo, hi]`. Each point gets its own base point `z`,
//! drawn uniformly from `[lo, hi] + i[lo, hi]`, and the lattice is jittered
//! by at most `jitter`. The same seed always gives the same points.

use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::plebanski::XPoint;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub per_axis: usize,
    pub lo: f64,
    pub hi: f64,
    pub jitter: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            per_axis: 3,
            lo: -1.0,
            hi: 1.0,
            jitter: 0.0,
        }
    }
}

impl FromStr for GridSpec {
    type Err = Error;

    /// `count[:lo:hi[:jitter]]`, e.g. `5` or `5:-1:1:0.01`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = |m: &str| Error::Invalid(format!("grid spec {s:?}: {m}"));
        let parts: Vec<&str> = s.trim().split(':').collect();
        if !matches!(parts.len(), 1 | 3 | 4) {
            return Err(bad("expected count, count:lo:hi or count:lo:hi:jitter"));
        }
        let per_axis: usize = parts[0].parse().map_err(|_| bad("count is not an integer"))?;
        let num = |t: &str| t.parse::<f64>().map_err(|_| bad("bound is not a number"));
        let mut g = GridSpec {
            per_axis,
            ..GridSpec::default()
        };
        if parts.len() >= 3 {
            g.lo = num(parts[1])?;
            g.hi = num(parts[2])?;
        }
        if parts.len() == 4 {
            g.jitter = num(parts[3])?;
        }
        g.validate()?;
        Ok(g)
    }
}

impl GridSpec {
    pub fn new(per_axis: usize, lo: f64, hi: f64, jitter: f64) -> Result<Self> {
        let g = Self { per_axis, lo, hi, jitter };
        g.validate()?;
        Ok(g)
    }

    fn validate(&self) -> Result<()> {
        if self.per_axis == 0 || !(self.lo < self.hi) || !(self.jitter >= 0.0) || !self.lo.is_finite() || !self.hi.is_finite() {
            return Err(Error::Invalid("grid needs a positive count, lo < hi and jitter >= 0".into()));
        }
        Ok(())
    }

    fn axis(&self, k: usize) -> f64 {
        if self.per_axis == 1 {
            0.5 * (self.lo + self.hi)
        } else {
            self.lo + (self.hi - self.lo) * k as f64 / (self.per_axis - 1) as f64
        }
    }

    /// `per_axis^n` points over a base of dimension `n`.
    pub fn points(&self, n: usize, seed: u64) -> Vec<XPoint> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let total = self.per_axis.pow(n as u32);
        let mut out = Vec::with_capacity(total);
        for idx in 0..total {
            let mut rest = idx;
            let theta: Vec<Complex64> = (0..n)
                .map(|_| {
                    let k = rest % self.per_axis;
                    rest /= self.per_axis;
                    let j = if self.jitter > 0.0 { rng.random_range(-self.jitter..=self.jitter) } else { 0.0 };
                    Complex64::new(self.axis(k) + j, 0.0)
                })
                .collect();
            let z: Vec<Complex64> = (0..n)
                .map(|_| Complex64::new(rng.random_range(self.lo..self.hi), rng.random_range(self.lo..self.hi)))
                .collect();
            out.push(XPoint::new(z, theta).expect("matching lengths"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_forms() {
        assert_eq!("5".parse::<GridSpec>().unwrap().per_axis, 5);
        let g: GridSpec = "4:-2:3:0.1".parse().unwrap();
        assert_eq!((g.per_axis, g.lo, g.hi, g.jitter), (4, -2.0, 3.0, 0.1));
        for bad in ["", "x", "0", "3:1:1", "3:0", "3:0:1:-1"] {
            assert!(bad.parse::<GridSpec>().is_err(), "{bad}");
        }
    }

    #[test]
    fn counts_and_determinism() {
        let g: GridSpec = "3:-1:1:0.05".parse().unwrap();
        let a = g.points(2, 11);
        assert_eq!(a.len(), 9);
        assert_eq!(a, g.points(2, 11));
        assert_ne!(a, g.points(2, 12));
        for p in &a {
            assert!(p.theta.iter().all(|t| t.re.abs() <= 1.05 && t.im == 0.0));
        }
        let one = GridSpec::new(1, 0.0, 2.0, 0.0).unwrap().points(3, 0);
        assert_eq!(one.len(), 1);
        assert!(one[0].theta.iter().all(|t| t.re == 1.0));
    }
}
