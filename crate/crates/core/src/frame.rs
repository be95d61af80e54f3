//! Darboux frames: the constant integral symplectic matrix `omega` on the
//! base and its exact rational inverse `eta`.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DarbouxFrame {
    d: usize,
    omega: Vec<Vec<i64>>,
    eta: Vec<Vec<BigRational>>,
    eta_f64: Vec<Vec<f64>>,
    default_block: bool,
}

impl DarbouxFrame {
    /// Frame of half-dimension `d`. Without `omega` the block frame
    /// `omega[p][p+d] = 1`, `omega[p+d][p] = -1` is used.
    pub fn new(d: usize, omega: Option<Vec<Vec<i64>>>) -> Result<Self> {
        if d == 0 {
            return Err(Error::Invalid("half-dimension must be positive".into()));
        }
        let n = 2 * d;
        let default = default_omega(d);
        let omega = omega.unwrap_or_else(|| default.clone());
        if omega.len() != n || omega.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension(format!("omega must be {n}x{n}")));
        }
        for p in 0..n {
            for q in 0..n {
                if omega[p][q] != -omega[q][p] {
                    return Err(Error::NotSkew(p, q));
                }
            }
        }
        let eta = rational_inverse(&omega).ok_or(Error::NonInvertible)?;
        let eta_f64 = eta
            .iter()
            .map(|r| r.iter().map(|x| x.to_f64().unwrap_or(f64::NAN)).collect())
            .collect();
        let default_block = omega == default;
        Ok(Self {
            d,
            omega,
            eta,
            eta_f64,
            default_block,
        })
    }

    pub fn standard(d: usize) -> Self {
        Self::new(d, None).expect("block frame is always valid")
    }

    /// Half-dimension.
    pub fn d(&self) -> usize {
        self.d
    }

    /// Dimension of the base, `2d`.
    pub fn n(&self) -> usize {
        2 * self.d
    }

    pub fn omega(&self) -> &[Vec<i64>] {
        &self.omega
    }

    pub fn omega_f64(&self, p: usize, q: usize) -> f64 {
        self.omega[p][q] as f64
    }

    pub fn eta(&self) -> &[Vec<BigRational>] {
        &self.eta
    }

    /// `eta[p][q]` as a double.
    #[inline]
    pub fn eta_f64(&self, p: usize, q: usize) -> f64 {
        self.eta_f64[p][q]
    }

    /// True when `omega` is the block frame of the same half-dimension.
    pub fn is_default_block(&self) -> bool {
        self.default_block
    }

    /// Whether `eta * omega` is the identity, checked in exact arithmetic.
    pub fn eta_times_omega_is_identity(&self) -> bool {
        let n = self.n();
        (0..n).all(|i| {
            (0..n).all(|j| {
                let s: BigRational = (0..n)
                    .map(|k| &self.eta[i][k] * BigRational::from_integer(BigInt::from(self.omega[k][j])))
                    .fold(BigRational::zero(), |a, b| a + b);
                if i == j {
                    s.is_one()
                } else {
                    s.is_zero()
                }
            })
        })
    }

    pub fn summary(&self) -> FrameSummary {
        FrameSummary {
            d: self.d,
            omega: self.omega.clone(),
            eta: self
                .eta
                .iter()
                .map(|r| r.iter().map(|x| x.to_string()).collect())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FrameSummary {
    pub d: usize,
    pub omega: Vec<Vec<i64>>,
    pub eta: Vec<Vec<String>>,
}

fn default_omega(d: usize) -> Vec<Vec<i64>> {
    let n = 2 * d;
    let mut m = vec![vec![0i64; n]; n];
    for p in 0..d {
        m[p][p + d] = 1;
        m[p + d][p] = -1;
    }
    m
}

/// Gauss-Jordan inverse over the rationals; `None` when singular.
pub(crate) fn rational_inverse(m: &[Vec<i64>]) -> Option<Vec<Vec<BigRational>>> {
    let n = m.len();
    let mut a: Vec<Vec<BigRational>> = m
        .iter()
        .map(|r| r.iter().map(|&x| BigRational::from_integer(BigInt::from(x))).collect())
        .collect();
    let mut inv: Vec<Vec<BigRational>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { BigRational::one() } else { BigRational::zero() })
                .collect()
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n).find(|&r| !a[r][col].is_zero())?;
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let p = a[col][col].clone();
        for j in 0..n {
            a[col][j] = &a[col][j] / &p;
            inv[col][j] = &inv[col][j] / &p;
        }
        for r in 0..n {
            if r != col && !a[r][col].is_zero() {
                let f = a[r][col].clone();
                for j in 0..n {
                    let t = &f * &a[col][j];
                    a[r][j] = &a[r][j] - t;
                    let t = &f * &inv[col][j];
                    inv[r][j] = &inv[r][j] - t;
                }
            }
        }
    }
    Some(inv)
}
