//! Coordinate Lagrangians `B = {z_{d+1} = c_1, ..., z_{2d} = c_d}`: the
//! goodness test, nondegeneracy, and the induced connection on the normal
//! bundle.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::frame::DarbouxFrame;
use crate::heavenly::lift_horizontal;
use crate::linalg::{CMat, ZERO};
use crate::plebanski::{eval_jet, PlebanskiFunction, XPoint};

#[derive(Debug, Clone)]
pub struct CoordinateLagrangian {
    frame: DarbouxFrame,
    values: Vec<Complex64>,
}

impl CoordinateLagrangian {
    /// The first `d` coordinates span `T_B`; the last `d` are fixed.
    pub fn new(frame: DarbouxFrame, values: Vec<Complex64>) -> Result<Self> {
        let d = frame.d();
        if values.len() != d {
            return Err(Error::Dimension(format!("expected {d} fixed values, got {}", values.len())));
        }
        let lagrangian = (0..d).all(|a| (0..d).all(|b| frame.omega()[a][b] == 0));
        if !lagrangian {
            return Err(Error::Invalid("the first d coordinates do not span a Lagrangian".into()));
        }
        Ok(Self { frame, values })
    }

    pub fn d(&self) -> usize {
        self.frame.d()
    }

    pub fn frame(&self) -> &DarbouxFrame {
        &self.frame
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    fn require_block(&self) -> Result<()> {
        if self.frame.is_default_block() {
            Ok(())
        } else {
            Err(Error::FrameMismatch)
        }
    }

    fn check_on_b(&self, x: &XPoint) -> Result<()> {
        let d = self.d();
        if x.n() != 2 * d {
            return Err(Error::Dimension("point dimension".into()));
        }
        if x.z[d..] != self.values[..] {
            return Err(Error::Invalid("point does not lie over B".into()));
        }
        Ok(())
    }

    /// The point of `X_B` over `base` with fiber coordinates
    /// `theta = (lift, normal)`.
    pub fn assemble(&self, base: &[Complex64], lift: &[Complex64], normal: &[Complex64]) -> Result<XPoint> {
        let d = self.d();
        if base.len() != d || lift.len() != d || normal.len() != d {
            return Err(Error::Dimension("base, lift and normal need length d".into()));
        }
        XPoint::new(
            base.iter().chain(&self.values).copied().collect(),
            lift.iter().chain(normal).copied().collect(),
        )
    }
}

/// `T[i][j][k] = d^3 W / dtheta_i dtheta_j dtheta_k`, `i, j, k < d`.
pub fn good_defect(w: &PlebanskiFunction, b: &CoordinateLagrangian, x: &XPoint) -> Result<Vec<Vec<Vec<Complex64>>>> {
    b.require_block()?;
    b.check_on_b(x)?;
    let d = b.d();
    let jet = eval_jet(w, x, 3)?;
    Ok((0..d)
        .map(|i| (0..d).map(|j| (0..d).map(|k| jet.d_theta(&[i, j, k])).collect()).collect())
        .collect())
}

/// Fourth fiber derivatives along `theta_1..theta_d`.
pub fn good_defect4(w: &PlebanskiFunction, b: &CoordinateLagrangian, x: &XPoint) -> Result<Vec<Vec<Vec<Vec<Complex64>>>>> {
    b.require_block()?;
    b.check_on_b(x)?;
    let d = b.d();
    let jet = eval_jet(w, x, 4)?;
    Ok((0..d)
        .map(|i| {
            (0..d)
                .map(|j| (0..d).map(|k| (0..d).map(|l| jet.d_theta(&[i, j, k, l])).collect()).collect())
                .collect()
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GoodVerdict {
    /// Largest cubic entry over the fiber samples.
    pub max_cubic: f64,
    /// Largest quartic entry over the fiber samples.
    pub max_quartic: f64,
    /// Largest cubic entry on the slice `theta_1 = .. = theta_d = 0`.
    pub max_cubic_on_slice: f64,
    pub good_by_cubic: bool,
    pub good_by_quartic: bool,
}

/// Decide goodness on a set of fiber points both ways. The quartic test
/// says the cubic derivatives are constant along `theta_1..theta_d`; it is
/// anchored by requiring them to vanish on the slice through the origin.
pub fn good_verdict(w: &PlebanskiFunction, b: &CoordinateLagrangian, samples: &[XPoint], tol: f64) -> Result<GoodVerdict> {
    let d = b.d();
    let (mut c3, mut c4, mut s3) = (0.0f64, 0.0f64, 0.0f64);
    let max3 = |a: &Vec<Vec<Vec<Complex64>>>| a.iter().flatten().flatten().fold(0.0f64, |m, z| m.max(z.norm()));
    for x in samples {
        c3 = c3.max(max3(&good_defect(w, b, x)?));
        c4 = c4.max(
            good_defect4(w, b, x)?
                .iter()
                .flatten()
                .flatten()
                .flatten()
                .fold(0.0f64, |m, z| m.max(z.norm())),
        );
        let mut y = x.clone();
        y.theta[..d].iter_mut().for_each(|t| *t = ZERO);
        s3 = s3.max(max3(&good_defect(w, b, &y)?));
    }
    Ok(GoodVerdict {
        max_cubic: c3,
        max_quartic: c4,
        max_cubic_on_slice: s3,
        good_by_cubic: c3 <= tol,
        good_by_quartic: c4 <= tol && s3 <= tol,
    })
}

/// Whether `zeta = sum i omega_pq dz_p ^ conj(dz_q)` restricts
/// non-degenerately to `T_B`. The real structure is the one fixing the real
/// span of the columns of `lattice` (the identity when `None`).
pub fn nondegenerate(b: &CoordinateLagrangian, lattice: Option<&CMat>) -> Result<bool> {
    Ok(zeta_on_b(b, lattice)?.0 == b.d())
}

/// Rank of `zeta` on `T_B` and its matrix.
pub fn zeta_on_b(b: &CoordinateLagrangian, lattice: Option<&CMat>) -> Result<(usize, CMat)> {
    let frame = b.frame();
    let (n, d) = (frame.n(), frame.d());
    let r = lattice.cloned().unwrap_or_else(|| CMat::identity(n, n));
    if r.nrows() != n || r.ncols() != n {
        return Err(Error::Dimension("lattice basis must be n x n".into()));
    }
    let r_inv = r.clone().try_inverse().ok_or(Error::NonInvertible)?;
    // conjugation fixing span_R(columns of r)
    let conj = |v: &CMat| &r * (&r_inv * v).map(|z| z.conj());
    let om = CMat::from_fn(n, n, |p, q| Complex64::new(frame.omega_f64(p, q), 0.0));
    let e = CMat::from_fn(n, d, |p, a| if p == a { Complex64::new(1.0, 0.0) } else { ZERO });
    let z = e.transpose() * om * conj(&e) * Complex64::new(0.0, 1.0);
    Ok((crate::linalg::rank(&z, 1e-10), z))
}

/// The projection to `N_B` of `h(d/dz_i)` at the point with the given
/// lift coordinates `theta_1..theta_d`.
pub fn normal_connection(
    w: &PlebanskiFunction,
    b: &CoordinateLagrangian,
    base: &[Complex64],
    normal: &[Complex64],
    direction: usize,
    lift: &[Complex64],
) -> Result<Vec<Complex64>> {
    normal_connection_eps(w, b, base, normal, direction, lift, ZERO)
}

pub(crate) fn normal_connection_eps(
    w: &PlebanskiFunction,
    b: &CoordinateLagrangian,
    base: &[Complex64],
    normal: &[Complex64],
    direction: usize,
    lift: &[Complex64],
    epsilon_inv: Complex64,
) -> Result<Vec<Complex64>> {
    b.require_block()?;
    let d = b.d();
    if direction >= d {
        return Err(Error::Dimension(format!("direction {direction} is not tangent to B")));
    }
    let x = b.assemble(base, lift, normal)?;
    let col = lift_horizontal(w, b.frame(), &x, epsilon_inv, direction)?;
    Ok((0..d).map(|p| col[2 * d + d + p]).collect())
}

/// Spread of `normal_connection` over several lifts, all directions.
pub fn lift_dependence(
    w: &PlebanskiFunction,
    b: &CoordinateLagrangian,
    base: &[Complex64],
    normal: &[Complex64],
    lifts: &[Vec<Complex64>],
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for dir in 0..b.d() {
        let ref_v = normal_connection(w, b, base, normal, dir, &lifts[0])?;
        for l in &lifts[1..] {
            let v = normal_connection(w, b, base, normal, dir, l)?;
            for (a, c) in v.iter().zip(&ref_v) {
                worst = worst.max((a - c).norm());
            }
        }
    }
    Ok(worst)
}

/// Holonomy of the normal connection around the square of side `side` in
/// the `(i, j)` base plane starting at `(base, normal)`: returns the normal
/// displacement divided by the enclosed area. The lift coordinates are held
/// at `lift`.
pub fn plaquette_holonomy(
    w: &PlebanskiFunction,
    b: &CoordinateLagrangian,
    base: &[Complex64],
    normal: &[Complex64],
    lift: &[Complex64],
    (i, j): (usize, usize),
    side: f64,
    steps_per_edge: usize,
) -> Result<f64> {
    let d = b.d();
    let mut pos = base.to_vec();
    let mut y = normal.to_vec();
    let edges = [(i, side), (j, side), (i, -side), (j, -side)];
    for (dir, len) in edges {
        let h = len / steps_per_edge as f64;
        for _ in 0..steps_per_edge {
            // dy/dt = len-direction normal component; RK4 in the edge parameter
            let rhs = |p: &[Complex64], yy: &[Complex64]| -> Result<Vec<Complex64>> {
                normal_connection(w, b, p, yy, dir, lift)
            };
            let shift = |p: &[Complex64], t: f64| -> Vec<Complex64> {
                let mut q = p.to_vec();
                q[dir] += Complex64::new(t, 0.0);
                q
            };
            let add = |a: &[Complex64], k: &[Complex64], s: f64| a.iter().zip(k).map(|(x, v)| x + v * s).collect::<Vec<_>>();
            let k1 = rhs(&pos, &y)?;
            let k2 = rhs(&shift(&pos, h / 2.0), &add(&y, &k1, h / 2.0))?;
            let k3 = rhs(&shift(&pos, h / 2.0), &add(&y, &k2, h / 2.0))?;
            let k4 = rhs(&shift(&pos, h), &add(&y, &k3, h))?;
            for m in 0..d {
                y[m] += (k1[m] + k2[m] * 2.0 + k3[m] * 2.0 + k4[m]) * (h / 6.0);
            }
            pos = shift(&pos, h);
        }
    }
    let disp = y.iter().zip(normal).map(|(a, c)| (a - c).norm()).fold(0.0, f64::max);
    Ok(disp / (side * side))
}
