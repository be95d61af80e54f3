//! Twistor lines as characteristic flows in `theta` at fixed `z`, and the
//! pointwise checks of the twisted relative symplectic form.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::frame::DarbouxFrame;
use crate::heavenly::{self, connection_matrix};
use crate::hyperkahler::build_hk;
use crate::linalg::{CMat, CVec, I, ONE, ZERO};
use crate::ode::{dopri5, Cx, OdeOptions};
use crate::plebanski::{eval_jet, PlebanskiFunction, XPoint};

/// Piecewise-linear path in the punctured `eps`-plane.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonPath {
    waypoints: Vec<Complex64>,
}

/// Distance from the origin to the segment `[a, b]`.
fn segment_distance(a: Complex64, b: Complex64) -> f64 {
    let d = b - a;
    let len2 = d.norm_sqr();
    if len2 == 0.0 {
        return a.norm();
    }
    let tau = (-(a * d.conj()).re / len2).clamp(0.0, 1.0);
    (a + d * tau).norm()
}

impl EpsilonPath {
    pub fn new(waypoints: Vec<Complex64>) -> Result<Self> {
        if waypoints.len() < 2 {
            return Err(Error::Invalid("a path needs at least two waypoints".into()));
        }
        if let Some(k) = waypoints.iter().position(|e| *e == ZERO || !e.is_finite()) {
            return Err(Error::Invalid(format!("waypoint {k} is zero or non-finite")));
        }
        if let Some(k) = waypoints.windows(2).position(|s| segment_distance(s[0], s[1]) == 0.0) {
            return Err(Error::Invalid(format!("segment {k} passes through eps = 0")));
        }
        Ok(Self { waypoints })
    }

    /// Polygon with `sides` vertices on the circle `|eps - center| = radius`, closed.
    pub fn circle(center: Complex64, radius: f64, sides: usize) -> Result<Self> {
        let mut pts: Vec<Complex64> = (0..sides)
            .map(|k| center + Complex64::from_polar(radius, 2.0 * std::f64::consts::PI * k as f64 / sides as f64))
            .collect();
        pts.push(pts[0]);
        Self::new(pts)
    }

    pub fn waypoints(&self) -> &[Complex64] {
        &self.waypoints
    }

    pub fn start(&self) -> Complex64 {
        self.waypoints[0]
    }

    pub fn end(&self) -> Complex64 {
        *self.waypoints.last().expect("non-empty")
    }

    pub fn reversed(&self) -> Self {
        let mut w = self.waypoints.clone();
        w.reverse();
        Self { waypoints: w }
    }

    pub fn scaled(&self, lambda: Complex64) -> Result<Self> {
        Self::new(self.waypoints.iter().map(|e| e * lambda).collect())
    }

    /// Closest approach of the path to `eps = 0`.
    pub fn min_distance(&self) -> f64 {
        self.waypoints
            .windows(2)
            .map(|s| segment_distance(s[0], s[1]))
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TwistorOptions {
    /// Relative local error tolerance.
    pub tol: f64,
    /// Guard radius as a multiple of the smallest nonzero `|z_i|`.
    pub guard_factor: f64,
    /// Integrate numerically even when a closed form is available.
    pub force_numeric: bool,
}

impl Default for TwistorOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            guard_factor: 1e-3,
            force_numeric: false,
        }
    }
}

impl TwistorOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }
}

#[derive(Debug, Clone)]
pub struct TwistorTrajectory {
    pub z: Vec<Complex64>,
    /// `(eps, theta(eps))`, starting with the initial condition.
    pub samples: Vec<(Complex64, Vec<Complex64>)>,
    pub steps: usize,
    pub rejected: usize,
    pub tol: f64,
    /// True when the closed form for `theta`-independent `W` was used.
    pub closed_form: bool,
}

impl TwistorTrajectory {
    pub fn final_theta(&self) -> &[Complex64] {
        &self.samples.last().expect("non-empty").1
    }

    pub fn final_epsilon(&self) -> Complex64 {
        self.samples.last().expect("non-empty").0
    }
}

fn guard_radius(z: &[Complex64], factor: f64) -> f64 {
    let m = z.iter().map(|v| v.norm()).filter(|&a| a > 0.0).fold(f64::INFINITY, f64::min);
    if m.is_finite() {
        factor * m
    } else {
        factor
    }
}

/// `d theta / d eps = -z / eps^2 - A(z, theta) z / eps` with `A` the connection matrix.
fn velocity(w: &PlebanskiFunction, frame: &DarbouxFrame, z: &[Complex64], theta: &[Complex64], eps: Complex64) -> Result<Vec<Complex64>> {
    let x = XPoint::new(z.to_vec(), theta.to_vec())?;
    let jet = eval_jet(w, &x, 2)?;
    let a = connection_matrix(&jet, frame);
    let zv = CVec::from_column_slice(z);
    let az = a * zv;
    let inv = eps.inv();
    Ok((0..z.len()).map(|q| -z[q] * inv * inv - az[q] * inv).collect())
}

/// Integrate the twistor-line equation from `path.start()` with initial fiber
/// point `x.theta`, holding `x.z` fixed.
pub fn twistor_flow(
    w: &PlebanskiFunction,
    frame: &DarbouxFrame,
    x: &XPoint,
    path: &EpsilonPath,
    opts: &TwistorOptions,
) -> Result<TwistorTrajectory> {
    let n = frame.n();
    if w.n() != n || x.n() != n {
        return Err(Error::Dimension("W, frame and point must share n".into()));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::Invalid("tolerance must be positive".into()));
    }
    let radius = guard_radius(&x.z, opts.guard_factor);
    if path.min_distance() < radius {
        return Err(Error::NearZeroEpsilon { radius });
    }
    w.value(x)?;
    let z = x.z.clone();
    let mut samples = vec![(path.start(), x.theta.clone())];

    if !w.depends_on_theta() && !opts.force_numeric {
        let e0 = path.start();
        for &e in &path.waypoints()[1..] {
            let shift = e.inv() - e0.inv();
            samples.push((e, x.theta.iter().zip(&z).map(|(t, zi)| t + zi * shift).collect()));
        }
        return Ok(TwistorTrajectory {
            z,
            samples,
            steps: 0,
            rejected: 0,
            tol: opts.tol,
            closed_form: true,
        });
    }

    let ode = OdeOptions {
        rtol: opts.tol,
        atol: opts.tol,
        ..OdeOptions::default()
    };
    let (mut steps, mut rejected) = (0, 0);
    let mut theta: Vec<Cx<f64>> = x.theta.iter().map(|&t| Cx::from_c64(t)).collect();
    for seg in path.waypoints().windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let d = b - a;
        let sol = dopri5(
            |tau: f64, y: &[Cx<f64>]| {
                let eps = a + d * tau;
                let th: Vec<Complex64> = y.iter().map(|c| c.to_c64()).collect();
                let v = velocity(w, frame, &z, &th, eps)?;
                Ok(v.into_iter().map(|c| Cx::from_c64(c * d)).collect())
            },
            &theta,
            0.0,
            1.0,
            &ode,
            true,
        )?;
        steps += sol.stats.accepted;
        rejected += sol.stats.rejected;
        for (tau, y) in sol.samples.into_iter().skip(1) {
            samples.push((a + d * tau, y.iter().map(|c| c.to_c64()).collect()));
        }
        theta = sol.y;
    }
    Ok(TwistorTrajectory {
        z,
        samples,
        steps,
        rejected,
        tol: opts.tol,
        closed_form: false,
    })
}

/// A function of `(eps, z, theta)` tracked along a trajectory.
#[derive(Clone)]
pub enum Observable {
    Theta(usize),
    /// `x_i = theta_i - z_i / eps`.
    Darboux(usize),
    /// `exp(x_i)`, single-valued on the torus fibers.
    ExpDarboux(usize),
    Custom(Arc<dyn Fn(Complex64, &[Complex64], &[Complex64]) -> Complex64 + Send + Sync>),
}

impl std::fmt::Debug for Observable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Theta(i) => write!(f, "Theta({i})"),
            Self::Darboux(i) => write!(f, "Darboux({i})"),
            Self::ExpDarboux(i) => write!(f, "ExpDarboux({i})"),
            Self::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl Observable {
    pub fn evaluate(&self, eps: Complex64, z: &[Complex64], theta: &[Complex64]) -> Complex64 {
        match self {
            Self::Theta(i) => theta[*i],
            Self::Darboux(i) => theta[*i] - z[*i] / eps,
            Self::ExpDarboux(i) => (theta[*i] - z[*i] / eps).exp(),
            Self::Custom(f) => f(eps, z, theta),
        }
    }
}

/// Largest drift of the observable from its initial value along `traj`.
pub fn conserved_coordinate_defect(traj: &TwistorTrajectory, obs: &Observable) -> f64 {
    let (e0, t0) = &traj.samples[0];
    let start = obs.evaluate(*e0, &traj.z, t0);
    traj.samples
        .iter()
        .map(|(e, t)| (obs.evaluate(*e, &traj.z, t) - start).norm())
        .fold(0.0, f64::max)
}

/// `s^2 Omega_- - 2ist Omega_I + t^2 Omega_+` at `x`, with the horizontal lift.
fn twisted_form(w: &PlebanskiFunction, frame: &DarbouxFrame, x: &XPoint, s: Complex64, t: Complex64) -> Result<(CMat, CMat)> {
    if s == ZERO && t == ZERO {
        return Err(Error::Invalid("(s, t) must not both vanish".into()));
    }
    let hk = build_hk(w, frame, x)?;
    let f = hk.forms();
    let omega = f.omega_minus * (s * s) - f.omega_i * (I * s * t * 2.0) + f.omega_plus * (t * t);
    Ok((omega, hk.adapted_basis))
}

/// max over `i` and basis `u` of `|Omega(s v(e_i) + t h(e_i), u)|`.
pub fn twisted_form_kernel_defect(w: &PlebanskiFunction, frame: &DarbouxFrame, x: &XPoint, s: Complex64, t: Complex64) -> Result<f64> {
    let (omega, basis) = twisted_form(w, frame, x, s, t)?;
    let n = frame.n();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let mut vec = basis.column(i).into_owned() * t;
        vec[n + i] += s;
        let row = vec.transpose() * &omega;
        worst = row.iter().fold(worst, |a, c| a.max(c.norm()));
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConsistency {
    /// Numerical dimension of `ker Omega(1, eps)`.
    pub kernel_dim: usize,
    /// Largest `|Omega(h_eps(e_i), -)| / |h_eps(e_i)|`.
    pub lift_in_kernel: f64,
    /// Largest distance of a unit kernel vector from `span h_eps`.
    pub kernel_in_lift: f64,
}

/// Compare `ker Omega(s, t)` at `t/s = eps` with the span of the pencil lift `h_eps`.
pub fn pencil_kernel_consistency(w: &PlebanskiFunction, frame: &DarbouxFrame, x: &XPoint, eps: Complex64, rel_tol: f64) -> Result<KernelConsistency> {
    if eps == ZERO {
        return Err(Error::Invalid("eps must be nonzero".into()));
    }
    let n = frame.n();
    let (omega, _) = twisted_form(w, frame, x, ONE, eps)?;
    let lift = heavenly::pencil_lift(w, frame, x, eps.inv())?.as_matrix();
    let mut lift_in_kernel: f64 = 0.0;
    for c in lift.column_iter() {
        let row = c.transpose() * &omega;
        let m = row.iter().fold(0.0, |a: f64, v| a.max(v.norm()));
        lift_in_kernel = lift_in_kernel.max(m / c.norm());
    }
    let svd = omega.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested");
    let top = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let null: Vec<CVec> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &sv)| sv <= rel_tol * top.max(1.0))
        .map(|(k, _)| v_t.row(k).transpose().map(|c| c.conj()))
        .collect();
    let q = lift.svd(true, false).u.expect("requested").columns(0, n).into_owned();
    let kernel_in_lift = null
        .iter()
        .map(|u| (u - &q * (q.adjoint() * u)).norm() / u.norm())
        .fold(0.0, f64::max);
    Ok(KernelConsistency {
        kernel_dim: null.len(),
        lift_in_kernel,
        kernel_in_lift,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::examples::{HESSIAN_SOLUTION, ODD_HOMOGENEOUS};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn path(pts: &[Complex64]) -> EpsilonPath {
        EpsilonPath::new(pts.to_vec()).unwrap()
    }

    #[test]
    fn flat_model_closed_form() {
        let w = PlebanskiFunction::zero(2);
        let frame = DarbouxFrame::standard(1);
        let x = XPoint::from_real(&[1.0, 0.0], &[0.0, 0.0]).unwrap();
        let p = path(&[c(1.0, 0.0), c(0.5, 0.0)]);
        let tr = twistor_flow(&w, &frame, &x, &p, &TwistorOptions::default()).unwrap();
        assert!(tr.closed_form);
        assert_eq!(tr.final_theta(), &[c(1.0, 0.0), ZERO]);
        let opts = TwistorOptions {
            force_numeric: true,
            ..Default::default()
        };
        let num = twistor_flow(&w, &frame, &x, &p, &opts).unwrap();
        assert!(!num.closed_form && num.steps > 0);
        assert!((num.final_theta()[0] - ONE).norm() < 1e-8);
    }

    #[test]
    fn flat_model_loop_returns() {
        let w = PlebanskiFunction::zero(2);
        let frame = DarbouxFrame::standard(1);
        let x = XPoint::from_real(&[0.7, -0.2], &[0.1, 0.3]).unwrap();
        let p = EpsilonPath::circle(c(2.0, 0.0), 0.5, 12).unwrap();
        let opts = TwistorOptions {
            force_numeric: true,
            ..Default::default()
        };
        let tr = twistor_flow(&w, &frame, &x, &p, &opts).unwrap();
        for (a, b) in tr.final_theta().iter().zip(&x.theta) {
            assert!((a - b).norm() < 1e-8);
        }
        let tr = twistor_flow(&w, &frame, &x, &p, &TwistorOptions::default()).unwrap();
        assert_eq!(tr.final_theta(), x.theta.as_slice());
    }

    #[test]
    fn guard_and_path_validation() {
        assert!(EpsilonPath::new(vec![c(1.0, 0.0), ZERO]).is_err());
        assert!(EpsilonPath::new(vec![c(1.0, 0.0), c(-1.0, 0.0)]).is_err());
        let w = PlebanskiFunction::zero(2);
        let frame = DarbouxFrame::standard(1);
        let x = XPoint::from_real(&[1.0, 0.0], &[0.0, 0.0]).unwrap();
        let p = path(&[c(1.0, 0.0), c(1e-4, 0.0)]);
        let err = twistor_flow(&w, &frame, &x, &p, &TwistorOptions::default()).unwrap_err();
        assert!(matches!(err, Error::NearZeroEpsilon { .. }));
    }

    /// For `W = c theta_1^3` and `z = (1, 0)`: `theta_1 = a + 1/eps` and
    /// `theta_2 = theta_2(eps0) + 6c (a ln(eps/eps0) - 1/eps + 1/eps0)`.
    #[test]
    fn cubic_closed_form_oracle() {
        let cc = 0.3;
        let w = PlebanskiFunction::parse("0.3*t1^3", 2).unwrap();
        let frame = DarbouxFrame::standard(1);
        let (e0, e1) = (c(1.0, 0.0), c(0.25, 0.0));
        let th0 = [c(0.2, 0.1), c(-0.4, 0.0)];
        let x = XPoint::new(vec![ONE, ZERO], th0.to_vec()).unwrap();
        let tol = 1e-10;
        let tr = twistor_flow(&w, &frame, &x, &path(&[e0, e1]), &TwistorOptions::with_tol(tol)).unwrap();
        let a = th0[0] - e0.inv();
        let want1 = a + e1.inv();
        let want2 = th0[1] + (a * (e1 / e0).ln() - e1.inv() + e0.inv()) * (6.0 * cc);
        let got = tr.final_theta();
        assert!((got[0] - want1).norm() < 10.0 * tol * want1.norm().max(1.0));
        assert!((got[1] - want2).norm() < 1e2 * tol * want2.norm().max(1.0), "{} vs {}", got[1], want2);
        assert!(conserved_coordinate_defect(&tr, &Observable::Darboux(0)) < 1e-8);
        assert!(conserved_coordinate_defect(&tr, &Observable::Darboux(1)) > 0.1);
    }

    #[test]
    fn step_halving_reference() {
        let w = PlebanskiFunction::parse("0.5*t2^3 + 0.2*t1^3", 2).unwrap();
        let frame = DarbouxFrame::standard(1);
        let x = XPoint::new(vec![c(1.0, 0.2), ZERO], vec![c(0.1, 0.0), c(0.0, 0.2)]).unwrap();
        let p = path(&[c(1.0, 0.0), c(0.25, 0.0)]);
        let tol = 1e-9;
        let coarse = twistor_flow(&w, &frame, &x, &p, &TwistorOptions::with_tol(tol)).unwrap();
        let fine = twistor_flow(&w, &frame, &x, &p, &TwistorOptions::with_tol(tol / 32.0)).unwrap();
        assert!(fine.steps > coarse.steps);
        for (a, b) in coarse.final_theta().iter().zip(fine.final_theta()) {
            assert!((a - b).norm() < 10.0 * tol * b.norm().max(1.0));
        }
    }

    #[test]
    fn reversibility() {
        let w = PlebanskiFunction::parse("0.2*t1^3 + 0.1*z2*t1^2", 2).unwrap();
        let frame = DarbouxFrame::standard(1);
        let x = XPoint::new(vec![c(0.8, 0.1), c(0.3, 0.0)], vec![c(0.1, 0.0), c(0.2, -0.1)]).unwrap();
        let p = path(&[c(1.0, 0.0), c(0.6, 0.4), c(0.3, 0.1)]);
        let tol = 1e-9;
        let fwd = twistor_flow(&w, &frame, &x, &p, &TwistorOptions::with_tol(tol)).unwrap();
        let mid = XPoint::new(x.z.clone(), fwd.final_theta().to_vec()).unwrap();
        let back = twistor_flow(&w, &frame, &mid, &p.reversed(), &TwistorOptions::with_tol(tol)).unwrap();
        for (a, b) in back.final_theta().iter().zip(&x.theta) {
            assert!((a - b).norm() < 10.0 * tol * fwd.final_theta()[0].norm().max(1.0));
        }
    }

    #[test]
    fn scaling_equivariance() {
        let w = PlebanskiFunction::parse(ODD_HOMOGENEOUS, 2).unwrap();
        let frame = DarbouxFrame::standard(1);
        let x = XPoint::new(vec![c(1.0, 0.3), c(0.5, 0.0)], vec![c(0.1, 0.0), c(0.0, 0.1)]).unwrap();
        let p = path(&[c(1.0, 0.0), c(0.5, 0.2)]);
        let lambda = c(2.0, 0.0);
        let tol = 1e-10;
        let a = twistor_flow(&w, &frame, &x, &p, &TwistorOptions::with_tol(tol)).unwrap();
        let xs = XPoint::new(x.z.iter().map(|v| v * lambda).collect(), x.theta.clone()).unwrap();
        let b = twistor_flow(&w, &frame, &xs, &p.scaled(lambda).unwrap(), &TwistorOptions::with_tol(tol)).unwrap();
        for (u, v) in a.final_theta().iter().zip(b.final_theta()) {
            assert!((u - v).norm() < 1e2 * tol * u.norm().max(1.0));
        }
    }

    #[test]
    fn periodic_observable_tracks_tolerance() {
        let w = PlebanskiFunction::parse("(exp(t1) + exp(-t1))/5", 2).unwrap();
        let frame = DarbouxFrame::standard(1);
        let x = XPoint::new(vec![c(1.0, 0.0), ZERO], vec![c(0.2, 0.0), c(0.1, 0.0)]).unwrap();
        let p = path(&[c(1.0, 0.0), c(0.8, 0.1)]);
        let defect = |tol: f64| {
            let tr = twistor_flow(&w, &frame, &x, &p, &TwistorOptions::with_tol(tol)).unwrap();
            conserved_coordinate_defect(&tr, &Observable::ExpDarboux(0))
        };
        let (d1, d2) = (defect(1e-7), defect(1e-10));
        assert!(d1 < 1e-5 && d2 < 1e-8, "{d1:e} {d2:e}");
        // shifting theta_1 by 2 pi i does not change exp(x_1)
        let shifted = Observable::ExpDarboux(0).evaluate(c(0.5, 0.0), &x.z, &[x.theta[0] + c(0.0, 2.0 * std::f64::consts::PI), x.theta[1]]);
        let base = Observable::ExpDarboux(0).evaluate(c(0.5, 0.0), &x.z, &x.theta);
        assert!((shifted - base).norm() < 1e-12);
    }

    #[test]
    fn twisted_form_kernels() {
        let frame = DarbouxFrame::standard(1);
        let zero = PlebanskiFunction::zero(2);
        let x = XPoint::from_real(&[0.3, 0.4], &[0.5, -0.2]).unwrap();
        assert_eq!(twisted_form_kernel_defect(&zero, &frame, &x, ONE, ZERO).unwrap(), 0.0);
        assert_eq!(twisted_form_kernel_defect(&zero, &frame, &x, ZERO, ONE).unwrap(), 0.0);
        let w = PlebanskiFunction::parse("0.7*t1^3", 2).unwrap();
        for s in [ONE, c(0.3, -1.0)] {
            assert!(twisted_form_kernel_defect(&w, &frame, &x, s, ONE).unwrap() < 1e-10);
        }
        assert!(twisted_form_kernel_defect(&w, &frame, &x, ZERO, ZERO).is_err());
    }

    #[test]
    fn kernel_matches_pencil() {
        let frame = DarbouxFrame::standard(2);
        let w = PlebanskiFunction::parse(HESSIAN_SOLUTION, 4).unwrap();
        let x = XPoint::from_real(&[0.3, -0.2, 0.5, 0.1], &[0.2, 0.4, -0.3, 0.6]).unwrap();
        for eps in [ONE, c(0.5, 0.5), c(-2.0, 0.1)] {
            let k = pencil_kernel_consistency(&w, &frame, &x, eps, 1e-10).unwrap();
            assert_eq!(k.kernel_dim, 4);
            assert!(k.lift_in_kernel < 1e-10 && k.kernel_in_lift < 1e-10, "{k:?}");
        }
    }
}
