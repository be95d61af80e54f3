//! Stokes data of `y' = (U/eps^2 + V/eps) y`: rays, canonical solutions on
//! half-planes, Stokes factors and the monodromy consistency check.
//!
//! Everything is computed in the eigenbasis of `U`, where the canonical
//! solution is written `Phi = Y(eps) exp(-D/eps)` with `Y -> id` as
//! `eps -> 0`. In `s = 1/eps` the gauge part satisfies
//! `dY/ds = -[D, Y] - V Y / s`, which has no essential singularity on
//! bounded `s`-paths.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{identity, inverse, max_abs, CMat, ONE, ZERO};
use crate::ode::{dopri5, Cx, Dd, OdeOptions, Precision, Real};

/// Angular tolerance for an angle to count as a Stokes angle.
pub const STOKES_ANGLE_TOL: f64 = 1e-8;
const MERGE_TOL: f64 = 1e-10;
const MAX_SERIES_TERMS: usize = 400;

#[derive(Debug, Clone)]
pub struct StokesProblem {
    u: CMat,
    v: CMat,
    eigenvalues: Vec<Complex64>,
    basis: CMat,
    basis_inv: CMat,
    v_eig: CMat,
}

fn eigen_basis(u: &CMat) -> Result<(Vec<Complex64>, CMat)> {
    let n = u.nrows();
    let diagonal = (0..n).all(|i| (0..n).all(|j| i == j || u[(i, j)] == ZERO));
    if diagonal {
        return Ok(((0..n).map(|i| u[(i, i)]).collect(), identity(n)));
    }
    let vals: Vec<Complex64> = u.clone().schur().eigenvalues().ok_or(Error::DegenerateEigenvalues)?.iter().copied().collect();
    let mut basis = CMat::zeros(n, n);
    for (k, lam) in vals.iter().enumerate() {
        let shifted = u - identity(n) * *lam;
        let svd = shifted.svd(false, true);
        let v_t = svd.v_t.expect("requested");
        let (pos, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |best, (i, &s)| if s < best.1 { (i, s) } else { best });
        let vec = v_t.row(pos).transpose().map(|c| c.conj());
        basis.set_column(k, &vec);
    }
    Ok((vals, basis))
}

impl StokesProblem {
    /// Requires `U` with distinct eigenvalues and `V` with zero diagonal in the `U`-eigenbasis.
    pub fn new(u: CMat, v: CMat) -> Result<Self> {
        let n = u.nrows();
        if n == 0 || u.ncols() != n || v.shape() != (n, n) {
            return Err(Error::Dimension("U and V must be square of the same size".into()));
        }
        let (eigenvalues, basis) = eigen_basis(&u)?;
        let scale = eigenvalues.iter().map(|z| z.norm()).fold(1.0, f64::max);
        for i in 0..n {
            for j in 0..i {
                if (eigenvalues[i] - eigenvalues[j]).norm() < 1e-8 * scale {
                    return Err(Error::DegenerateEigenvalues);
                }
            }
        }
        let basis_inv = inverse(&basis).ok_or(Error::DegenerateEigenvalues)?;
        let v_eig = &basis_inv * &v * &basis;
        let vscale = max_abs(&v).max(1.0);
        for i in 0..n {
            let dv = v_eig[(i, i)].norm();
            if dv > 1e-10 * vscale {
                return Err(Error::ResonantDiagonal(i, dv));
            }
        }
        Ok(Self {
            u,
            v,
            eigenvalues,
            basis,
            basis_inv,
            v_eig,
        })
    }

    pub fn diagonal(u: &[Complex64], v: CMat) -> Result<Self> {
        let n = u.len();
        Self::new(CMat::from_fn(n, n, |i, j| if i == j { u[i] } else { ZERO }), v)
    }

    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn u(&self) -> &CMat {
        &self.u
    }

    pub fn v(&self) -> &CMat {
        &self.v
    }

    pub fn eigenvalues(&self) -> &[Complex64] {
        &self.eigenvalues
    }

    /// Columns are eigenvectors of `U`, in the order of [`Self::eigenvalues`].
    pub fn basis(&self) -> &CMat {
        &self.basis
    }

    pub fn v_eigenbasis(&self) -> &CMat {
        &self.v_eig
    }

    fn to_original(&self, m: &CMat) -> CMat {
        &self.basis * m * &self.basis_inv
    }

    fn min_gap(&self) -> f64 {
        let d = &self.eigenvalues;
        let mut g = f64::INFINITY;
        for i in 0..d.len() {
            for j in 0..i {
                g = g.min((d[i] - d[j]).norm());
            }
        }
        if g.is_finite() {
            g
        } else {
            1.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StokesRay {
    /// Angle in `[0, 2 pi)`.
    pub angle: f64,
    /// Eigenbasis index pairs `(i, j)` with `u_i - u_j` on the ray.
    pub pairs: Vec<(usize, usize)>,
}

fn wrap(a: f64) -> f64 {
    let t = a.rem_euclid(2.0 * PI);
    if t >= 2.0 * PI {
        0.0
    } else {
        t
    }
}

/// Signed angular distance from `b` to `a`, in `(-pi, pi]`.
fn angle_diff(a: f64, b: f64) -> f64 {
    let d = wrap(a - b);
    if d > PI {
        d - 2.0 * PI
    } else {
        d
    }
}

pub fn stokes_rays(p: &StokesProblem) -> Vec<StokesRay> {
    let d = &p.eigenvalues;
    let mut raw: Vec<(f64, (usize, usize))> = Vec::new();
    for i in 0..d.len() {
        for j in 0..d.len() {
            if i != j {
                raw.push((wrap((d[i] - d[j]).arg()), (i, j)));
            }
        }
    }
    raw.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rays: Vec<StokesRay> = Vec::new();
    for (angle, pair) in raw {
        match rays.last_mut() {
            Some(r) if angle_diff(angle, r.angle).abs() < MERGE_TOL => r.pairs.push(pair),
            _ => rays.push(StokesRay { angle, pairs: vec![pair] }),
        }
    }
    if rays.len() > 1 && angle_diff(rays[0].angle, rays.last().expect("non-empty").angle).abs() < MERGE_TOL {
        let last = rays.pop().expect("non-empty");
        rays[0].pairs.extend(last.pairs);
    }
    for r in &mut rays {
        r.pairs.sort_unstable();
    }
    rays
}

/// Midpoints of the angular gaps between consecutive rays; `gaps[k]` lies
/// just counterclockwise of `rays[k]`.
fn gap_midpoints(rays: &[StokesRay]) -> Vec<f64> {
    let m = rays.len();
    (0..m)
        .map(|k| {
            let a = rays[k].angle;
            let b = if k + 1 < m { rays[k + 1].angle } else { rays[0].angle + 2.0 * PI };
            wrap(0.5 * (a + b))
        })
        .collect()
}

fn check_non_stokes(p: &StokesProblem, phi: f64) -> Result<()> {
    if stokes_rays(p).iter().any(|r| angle_diff(phi, r.angle).abs() < STOKES_ANGLE_TOL) {
        return Err(Error::StokesAngle(phi));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy)]
pub struct StokesOptions {
    /// Local error tolerance of the integrator and target for the anchor series.
    pub tol: f64,
    pub precision: Precision,
    /// Anchor radius `|eps_a|`; chosen from the eigenvalue gap when `None`.
    pub anchor_radius: Option<f64>,
    /// Also solve from the anchor `r/2` and report the difference.
    pub confirm_anchor: bool,
    /// `|eps|` at which Stokes factors are compared.
    pub factor_radius: f64,
    /// `|eps|` of the base point of the monodromy loop.
    pub base_radius: f64,
    /// `|eps|` of the circular part of the monodromy loop.
    pub loop_radius: f64,
    /// Number of chords approximating the circular part.
    pub loop_chords: usize,
}

impl Default for StokesOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            precision: Precision::Double,
            anchor_radius: None,
            confirm_anchor: true,
            factor_radius: 1.0,
            base_radius: 1e-2,
            loop_radius: 1.0,
            loop_chords: 64,
        }
    }
}

impl StokesOptions {
    pub fn extended() -> Self {
        Self {
            tol: 1e-20,
            precision: Precision::Extended,
            ..Self::default()
        }
    }
}

type RMat<R> = Vec<Cx<R>>;

struct System<R: Real> {
    n: usize,
    d: Vec<Cx<R>>,
    v: RMat<R>,
}

impl<R: Real> System<R> {
    fn new(p: &StokesProblem) -> Self {
        let n = p.n();
        Self {
            n,
            d: p.eigenvalues.iter().map(|&z| Cx::from_c64(z)).collect(),
            v: (0..n * n).map(|k| Cx::from_c64(p.v_eig[(k / n, k % n)])).collect(),
        }
    }

    fn identity(&self) -> RMat<R> {
        let n = self.n;
        (0..n * n).map(|k| if k / n == k % n { Cx::one() } else { Cx::zero() }).collect()
    }

    /// Optimally truncated formal series `sum_k Y_k eps^k`.
    /// Returns the partial sum, the number of terms and the last term's size.
    fn series(&self, eps: Complex64, floor: f64) -> (RMat<R>, usize, f64) {
        let n = self.n;
        let e = Cx::<R>::from_c64(eps);
        let mut yk = self.identity();
        let mut sum = yk.clone();
        let mut pow = Cx::<R>::one();
        let mut last = f64::INFINITY;
        let mut terms = 0;
        for k in 0..MAX_SERIES_TERMS {
            let kr = Cx::new(R::from_f64(k as f64), R::zero());
            let mut next = vec![Cx::zero(); n * n];
            for i in 0..n {
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let mut w = kr * yk[i * n + j];
                    for m in 0..n {
                        w = w - self.v[i * n + m] * yk[m * n + j];
                    }
                    next[i * n + j] = w / (self.d[i] - self.d[j]);
                }
            }
            let k1 = R::from_f64((k + 1) as f64);
            for i in 0..n {
                let mut acc = Cx::zero();
                for j in 0..n {
                    if j != i {
                        acc = acc + self.v[i * n + j] * next[j * n + i];
                    }
                }
                next[i * n + i] = Cx::new(acc.re / k1, acc.im / k1);
            }
            pow = pow * e;
            let term: RMat<R> = next.iter().map(|c| *c * pow).collect();
            let size = term.iter().map(|c| c.abs_f64()).fold(0.0, f64::max);
            if size > last {
                break;
            }
            for (s, t) in sum.iter_mut().zip(&term) {
                *s = *s + *t;
            }
            terms = k + 1;
            last = size;
            yk = next;
            if size <= floor {
                break;
            }
        }
        (sum, terms, if terms == 0 { 0.0 } else { last })
    }

    fn rhs(&self, y: &[Cx<R>], s: Cx<R>, ds: Cx<R>) -> RMat<R> {
        let n = self.n;
        let inv_s = s.inv();
        let mut out = vec![Cx::zero(); n * n];
        for i in 0..n {
            for j in 0..n {
                let mut acc = (self.d[j] - self.d[i]) * y[i * n + j];
                let mut vy = Cx::zero();
                for m in 0..n {
                    vy = vy + self.v[i * n + m] * y[m * n + j];
                }
                acc = acc - vy * inv_s;
                out[i * n + j] = acc * ds;
            }
        }
        out
    }

    /// Transport `Y` along straight segments through the points `s_path`.
    fn transport(&self, y0: RMat<R>, s_path: &[Complex64], tol: f64) -> Result<(RMat<R>, usize)> {
        let opts = OdeOptions {
            rtol: tol,
            atol: tol,
            h_min_rel: (tol * 1e-6).min(1e-14),
            max_steps: 2_000_000,
            ..OdeOptions::default()
        };
        let mut y = y0;
        let mut steps = 0;
        for seg in s_path.windows(2) {
            if seg[0] == seg[1] {
                continue;
            }
            let s0 = Cx::<R>::from_c64(seg[0]);
            let ds = Cx::<R>::from_c64(seg[1]) - s0;
            let sol = dopri5(
                |tau: R, yy: &[Cx<R>]| Ok(self.rhs(yy, s0 + ds.scale(tau), ds)),
                &y,
                R::zero(),
                R::one(),
                &opts,
                false,
            )?;
            steps += sol.stats.accepted;
            y = sol.y;
        }
        Ok((y, steps))
    }
}

fn to_cmat<R: Real>(n: usize, y: &[Cx<R>]) -> CMat {
    CMat::from_fn(n, n, |i, j| y[i * n + j].to_c64())
}

fn from_cmat<R: Real>(m: &CMat) -> RMat<R> {
    let n = m.nrows();
    (0..n * n).map(|k| Cx::from_c64(m[(k / n, k % n)])).collect()
}

/// Canonical solution for the half-plane centred on `phi`, evaluated at `eps`.
#[derive(Debug, Clone)]
pub struct CanonicalSolution {
    pub phi_center: f64,
    pub epsilon: Complex64,
    /// `Phi(eps)` in the original basis.
    pub phi: CMat,
    /// `Y = Phi exp(D/eps)` in the eigenbasis.
    pub y: CMat,
    pub anchor_radius: f64,
    pub series_terms: usize,
    /// Size of the last series term kept at the anchor.
    pub series_error: f64,
    /// `max |Y_r - Y_{r/2}|` when confirmation was requested.
    pub anchor_defect: Option<f64>,
    pub steps: usize,
}

fn solve_y<R: Real>(p: &StokesProblem, phi: f64, path_tail: &[Complex64], r: f64, tol: f64) -> Result<(RMat<R>, usize, f64, usize)> {
    let sys = System::<R>::new(p);
    let eps_a = Complex64::from_polar(r, phi);
    let (y0, terms, err) = sys.series(eps_a, tol * 1e-3);
    let mut s_path = vec![eps_a.inv()];
    s_path.extend_from_slice(path_tail);
    let (y, steps) = sys.transport(y0, &s_path, tol)?;
    Ok((y, terms, err, steps))
}

fn default_anchor(p: &StokesProblem, opts: &StokesOptions) -> f64 {
    let digits = match opts.precision {
        Precision::Double => 40.0,
        Precision::Extended => 80.0,
    };
    opts.anchor_radius.unwrap_or(p.min_gap() / digits)
}

struct Anchored {
    y: CMat,
    radius: f64,
    terms: usize,
    series_error: f64,
    anchor_defect: Option<f64>,
    steps: usize,
}

/// Solve from the anchor `r e^{i phi}` along the `s`-path to its last point.
fn anchored_y(p: &StokesProblem, phi: f64, path_tail: &[Complex64], opts: &StokesOptions) -> Result<Anchored> {
    if !(opts.tol > 0.0) {
        return Err(Error::Invalid("tolerance must be positive".into()));
    }
    let n = p.n();
    let run = |r: f64| -> Result<(CMat, usize, f64, usize)> {
        match opts.precision {
            Precision::Double => solve_y::<f64>(p, phi, path_tail, r, opts.tol).map(|(y, t, e, s)| (to_cmat(n, &y), t, e, s)),
            Precision::Extended => solve_y::<Dd>(p, phi, path_tail, r, opts.tol).map(|(y, t, e, s)| (to_cmat(n, &y), t, e, s)),
        }
    };
    let mut r = default_anchor(p, opts);
    let mut attempt = run(r)?;
    let mut shrink = 0;
    while attempt.2 > opts.tol * 1e-2 && opts.anchor_radius.is_none() {
        shrink += 1;
        if shrink > 6 {
            return Err(Error::ToleranceUnreachable(attempt.2));
        }
        r *= 0.5;
        attempt = run(r)?;
    }
    let (y, terms, err, mut steps) = attempt;
    let anchor_defect = if opts.confirm_anchor {
        let (y2, _, _, s2) = run(0.5 * r)?;
        steps += s2;
        Some(max_abs(&(&y - y2)))
    } else {
        None
    };
    Ok(Anchored {
        y,
        radius: r,
        terms,
        series_error: err,
        anchor_defect,
        steps,
    })
}

fn check_direction(phi: f64, eps: Complex64) -> Result<()> {
    if eps == ZERO || !eps.is_finite() {
        return Err(Error::Invalid("eps must be finite and nonzero".into()));
    }
    if angle_diff(eps.arg(), phi).abs() >= PI - 1e-9 {
        return Err(Error::Invalid(format!("eps = {eps} is opposite to the half-plane centre {phi}")));
    }
    Ok(())
}

fn gauge(d: &[Complex64], s: Complex64, sign: f64) -> CMat {
    CMat::from_diagonal(&nalgebra::DVector::from_iterator(d.len(), d.iter().map(|u| (u * s * sign).exp())))
}

/// Exponent increment of `exp(U/eps)` from `eps0` to `eps1` for diagonal
/// `U = diag(u)`: `u_i (1/eps1 - 1/eps0)`. The `W = 0` twistor flow shifts
/// `theta` by the same amount with `u = z`.
pub fn exponential_shift(u: &[Complex64], eps0: Complex64, eps1: Complex64) -> Vec<Complex64> {
    let s = eps1.inv() - eps0.inv();
    u.iter().map(|ui| ui * s).collect()
}

/// Canonical solution on the half-plane centred at `phi`, continued to `eps`
/// along the straight `s = 1/eps` segment from the anchor, so `eps` may lie
/// anywhere in the open sector `|arg eps - phi| < pi`.
pub fn canonical_solution(p: &StokesProblem, phi: f64, eps: Complex64, opts: &StokesOptions) -> Result<CanonicalSolution> {
    check_non_stokes(p, phi)?;
    check_direction(phi, eps)?;
    let a = anchored_y(p, phi, &[eps.inv()], opts)?;
    let phi_t = &a.y * gauge(&p.eigenvalues, eps.inv(), -1.0);
    Ok(CanonicalSolution {
        phi_center: phi,
        epsilon: eps,
        phi: p.to_original(&phi_t),
        y: a.y,
        anchor_radius: a.radius,
        series_terms: a.terms,
        series_error: a.series_error,
        anchor_defect: a.anchor_defect,
        steps: a.steps,
    })
}

#[derive(Debug, Clone)]
pub struct StokesFactor {
    pub ray: StokesRay,
    /// In the original basis.
    pub matrix: CMat,
    /// In the eigenbasis of `U`.
    pub eigenbasis: CMat,
    pub phi_minus: f64,
    pub phi_plus: f64,
    pub anchor_defect: f64,
}

impl StokesFactor {
    /// `max |(S - id)^n|`.
    pub fn unipotency_defect(&self) -> f64 {
        let n = self.matrix.nrows();
        let nil = &self.matrix - identity(n);
        let mut acc = identity(n);
        for _ in 0..n {
            acc = &acc * &nil;
        }
        max_abs(&acc)
    }

    /// Largest eigenbasis entry of `S - id` outside the pairs generating the ray.
    pub fn support_defect(&self) -> f64 {
        let n = self.eigenbasis.nrows();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                if !self.ray.pairs.contains(&(i, j)) {
                    let want = if i == j { ONE } else { ZERO };
                    worst = worst.max((self.eigenbasis[(i, j)] - want).norm());
                }
            }
        }
        worst
    }
}

/// `S(l) = Phi_-^{-1} Phi_+` with `Phi_-` and `Phi_+` anchored in the gaps
/// clockwise and counterclockwise of `l`, compared at `eps` on `l`.
pub fn stokes_factor(p: &StokesProblem, ray: &StokesRay, opts: &StokesOptions) -> Result<StokesFactor> {
    let rays = stokes_rays(p);
    let k = rays
        .iter()
        .position(|r| angle_diff(r.angle, ray.angle).abs() < MERGE_TOL)
        .ok_or_else(|| Error::Invalid(format!("{} is not a Stokes angle", ray.angle)))?;
    let gaps = gap_midpoints(&rays);
    let m = rays.len();
    let phi_plus = gaps[k];
    let phi_minus = gaps[(k + m - 1) % m];
    let eps = Complex64::from_polar(opts.factor_radius, rays[k].angle);
    let s = eps.inv();
    let minus = anchored_y(p, phi_minus, &[s], opts)?;
    let plus = anchored_y(p, phi_plus, &[s], opts)?;
    let ym_inv = inverse(&minus.y).ok_or(Error::StepFailure("singular canonical solution".into()))?;
    let core = ym_inv * plus.y;
    let eig = gauge(&p.eigenvalues, s, 1.0) * core * gauge(&p.eigenvalues, s, -1.0);
    Ok(StokesFactor {
        ray: rays[k].clone(),
        matrix: p.to_original(&eig),
        eigenbasis: eig,
        phi_minus,
        phi_plus,
        anchor_defect: minus.anchor_defect.unwrap_or(0.0).max(plus.anchor_defect.unwrap_or(0.0)),
    })
}

#[derive(Debug, Clone)]
pub struct MonodromyReport {
    pub base_angle: f64,
    pub base_radius: f64,
    pub loop_radius: f64,
    pub factors: Vec<StokesFactor>,
    /// `S(l_1) S(l_2) ... S(l_m)`, rays counterclockwise from the base angle.
    pub product: CMat,
    /// `Phi_cont^{-1} Phi_base` after one counterclockwise turn.
    pub continuation: CMat,
    pub defect: f64,
}

/// The `eps`-loop: out along the base ray to the loop radius, once around
/// counterclockwise, and back, as points in the `s`-plane.
fn keyhole(phi0: f64, rho: f64, big: f64, chords: usize) -> Vec<Complex64> {
    let mut s = vec![Complex64::from_polar(1.0 / rho, -phi0), Complex64::from_polar(1.0 / big, -phi0)];
    for k in 1..=chords {
        s.push(Complex64::from_polar(1.0 / big, -(phi0 + 2.0 * PI * k as f64 / chords as f64)));
    }
    s.push(Complex64::from_polar(1.0 / rho, -phi0));
    s
}

/// Compare the ordered product of Stokes factors with the continuation of the
/// base canonical solution once around `eps = 0`; the loop keeps
/// `|eps| = base_radius` at its ends and runs around at `loop_radius`.
pub fn monodromy_consistency(p: &StokesProblem, opts: &StokesOptions) -> Result<MonodromyReport> {
    let rays = stokes_rays(p);
    let n = p.n();
    let base_angle = match rays.len() {
        0 => 0.5,
        m => wrap(0.5 * (rays[m - 1].angle - 2.0 * PI + rays[0].angle)),
    };
    let factors = rays.iter().map(|r| stokes_factor(p, r, opts)).collect::<Result<Vec<_>>>()?;
    let product = factors.iter().fold(identity(n), |acc, f| acc * &f.matrix);

    let eps_b = Complex64::from_polar(opts.base_radius, base_angle);
    let y_base = anchored_y(p, base_angle, &[eps_b.inv()], &StokesOptions { confirm_anchor: false, ..*opts })?.y;
    let loop_path = keyhole(base_angle, opts.base_radius, opts.loop_radius, opts.loop_chords.max(8));
    let y_cont = match opts.precision {
        Precision::Double => {
            let sys = System::<f64>::new(p);
            to_cmat(n, &sys.transport(from_cmat(&y_base), &loop_path, opts.tol)?.0)
        }
        Precision::Extended => {
            let sys = System::<Dd>::new(p);
            to_cmat(n, &sys.transport(from_cmat(&y_base), &loop_path, opts.tol)?.0)
        }
    };
    let s_b = eps_b.inv();
    let y_cont_inv = inverse(&y_cont).ok_or(Error::StepFailure("singular continued solution".into()))?;
    let eig = gauge(&p.eigenvalues, s_b, 1.0) * y_cont_inv * y_base * gauge(&p.eigenvalues, s_b, -1.0);
    let continuation = p.to_original(&eig);
    let defect = max_abs(&(&product - &continuation));
    Ok(MonodromyReport {
        base_angle,
        base_radius: opts.base_radius,
        loop_radius: opts.loop_radius,
        factors,
        product,
        continuation,
        defect,
    })
}

/// Fundamental matrix `F(eps1)` of the system with `F(eps0) = id`, from its
/// Taylor series at `eps0`; requires `|eps1 - eps0| < |eps0| / 2`.
pub fn taylor_propagator(p: &StokesProblem, eps0: Complex64, eps1: Complex64) -> Result<CMat> {
    let h = eps1 - eps0;
    if h.norm() >= 0.5 * eps0.norm() {
        return Err(Error::Invalid("Taylor step must stay well inside the disc of convergence".into()));
    }
    let n = p.n();
    let inv0 = eps0.inv();
    let mut coeffs: Vec<CMat> = Vec::new();
    let mut result = identity(n);
    let mut fk = vec![identity(n)];
    let mut hpow = ONE;
    for k in 0..200 {
        // A_k from 1/eps = sum (-1)^k t^k / eps0^{k+1}
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let c1 = inv0.powu(k as u32 + 1) * sign;
        let c2 = inv0.powu(k as u32 + 2) * (sign * (k + 1) as f64);
        coeffs.push(&p.u * c2 + &p.v * c1);
        let mut next = CMat::zeros(n, n);
        for m in 0..=k {
            next += &coeffs[m] * &fk[k - m];
        }
        next /= Complex64::new((k + 1) as f64, 0.0);
        hpow *= h;
        let term = &next * hpow;
        result += &term;
        fk.push(next);
        if max_abs(&term) < 1e-18 * max_abs(&result) {
            return Ok(result);
        }
    }
    Err(Error::ToleranceUnreachable(h.norm()))
}

/// `max |Phi(eps + h) - F Phi(eps)| / max |Phi(eps + h)|` with both `Phi`
/// values computed independently and `F` the Taylor propagator.
pub fn solution_residual(p: &StokesProblem, phi: f64, eps: Complex64, h: Complex64, opts: &StokesOptions) -> Result<f64> {
    let a = canonical_solution(p, phi, eps, opts)?;
    let b = canonical_solution(p, phi, eps + h, opts)?;
    let f = taylor_propagator(p, eps, eps + h)?;
    Ok(max_abs(&(&b.phi - f * &a.phi)) / max_abs(&b.phi))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn mat(rows: &[&[Complex64]]) -> CMat {
        CMat::from_fn(rows.len(), rows.len(), |i, j| rows[i][j])
    }

    fn coupled(cc: f64) -> StokesProblem {
        let v = c(cc, 0.0);
        StokesProblem::diagonal(&[ONE, -ONE], mat(&[&[ZERO, v], &[v, ZERO]])).unwrap()
    }

    fn symmetric() -> StokesProblem {
        coupled(1.0)
    }

    fn fast() -> StokesOptions {
        StokesOptions {
            confirm_anchor: false,
            ..Default::default()
        }
    }

    #[test]
    fn rays() {
        let p = StokesProblem::diagonal(&[ONE, -ONE], CMat::zeros(2, 2)).unwrap();
        let r = stokes_rays(&p);
        assert_eq!(r.len(), 2);
        assert_eq!(r[0].angle, 0.0);
        assert_eq!(r[0].pairs, vec![(0, 1)]);
        assert!((r[1].angle - PI).abs() < 1e-15);
        let p3 = StokesProblem::diagonal(&[ONE, c(0.0, 1.0), -ONE], CMat::zeros(3, 3)).unwrap();
        let r3 = stokes_rays(&p3);
        assert_eq!(r3.len(), 6);
        let want = [0.0, PI / 4.0, 3.0 * PI / 4.0, PI, 5.0 * PI / 4.0, 7.0 * PI / 4.0];
        for (ray, w) in r3.iter().zip(want) {
            assert!((ray.angle - w).abs() < 1e-12);
        }
        let p1 = StokesProblem::diagonal(&[c(2.0, 1.0)], CMat::zeros(1, 1)).unwrap();
        assert!(stokes_rays(&p1).is_empty());
    }

    #[test]
    fn collinear_rays_merge() {
        let p = StokesProblem::diagonal(&[ONE, ZERO, -ONE], CMat::zeros(3, 3)).unwrap();
        let r = stokes_rays(&p);
        assert_eq!(r.len(), 2);
        assert_eq!(r[0].pairs, vec![(0, 1), (0, 2), (1, 2)]);
    }

    #[test]
    fn constructor_errors() {
        let zero = CMat::zeros(2, 2);
        assert!(matches!(StokesProblem::diagonal(&[ONE, ONE], zero.clone()), Err(Error::DegenerateEigenvalues)));
        let diag_v = mat(&[&[ONE, ZERO], &[ZERO, ZERO]]);
        assert!(matches!(StokesProblem::diagonal(&[ONE, -ONE], diag_v), Err(Error::ResonantDiagonal(0, _))));
        // non-diagonal U is diagonalised; V = U has diagonal eigenblock
        let u = mat(&[&[ONE, c(2.0, 0.0)], &[ZERO, -ONE]]);
        assert!(matches!(StokesProblem::new(u.clone(), u), Err(Error::ResonantDiagonal(..))));
    }

    #[test]
    fn stokes_angle_rejected() {
        let p = symmetric();
        let err = canonical_solution(&p, 1e-10, c(0.5, 0.0), &fast()).unwrap_err();
        assert!(matches!(err, Error::StokesAngle(_)));
    }

    #[test]
    fn decoupled_solution_is_exact() {
        let u = mat(&[&[ONE, c(0.5, 0.0)], &[ZERO, -ONE]]);
        let p = StokesProblem::new(u.clone(), CMat::zeros(2, 2)).unwrap();
        let eps = c(0.3, 0.4);
        let sol = canonical_solution(&p, 0.9, eps, &StokesOptions::default()).unwrap();
        assert_eq!(sol.y, identity(2));
        // exp(-U/eps) = T exp(-D/eps) T^{-1}
        let want = p.to_original(&gauge(p.eigenvalues(), eps.inv(), -1.0));
        assert!(max_abs(&(&sol.phi - want)) < 1e-13);
        let one = StokesProblem::diagonal(&[c(2.0, 0.0)], CMat::zeros(1, 1)).unwrap();
        let s1 = canonical_solution(&one, 0.3, eps, &fast()).unwrap();
        assert!((s1.phi[(0, 0)] - (-c(2.0, 0.0) / eps).exp()).norm() < 1e-15);
    }

    #[test]
    fn asymptotic_normalisation() {
        let p = symmetric();
        let mut prev = f64::INFINITY;
        for r in [0.1, 0.03, 0.01] {
            let eps = c(0.0, r);
            let sol = canonical_solution(&p, PI / 2.0, eps, &fast()).unwrap();
            let d = max_abs(&(&sol.y - identity(2)));
            assert!(d < prev);
            prev = d;
        }
        // Y = id + Y_1 eps + ..., and Y_1 has entries of size 1/2
        assert!((prev - 0.5e-2).abs() < 1e-4, "{prev}");
    }

    #[test]
    fn anchor_independence() {
        let opts = StokesOptions::default();
        let sol = canonical_solution(&coupled(0.5), PI / 2.0, c(0.3, 0.6), &opts).unwrap();
        assert!(sol.anchor_defect.unwrap() < 10.0 * opts.tol, "{:?}", sol.anchor_defect);
        assert!(sol.series_terms > 5 && sol.series_error < 1e-12);
        // at unit coupling the formal series terminates
        let exact = canonical_solution(&symmetric(), PI / 2.0, c(0.3, 0.6), &opts).unwrap();
        assert_eq!((exact.series_terms, exact.series_error), (2, 0.0));
        assert!(exact.anchor_defect.unwrap() < 10.0 * opts.tol);
    }

    #[test]
    fn solutions_satisfy_the_equation() {
        let p = symmetric();
        let res = solution_residual(&p, PI / 2.0, c(0.4, 0.7), c(0.03, -0.02), &fast()).unwrap();
        assert!(res < 1e-8, "{res:e}");
    }

    #[test]
    fn taylor_propagator_matches_diagonal() {
        let p = StokesProblem::diagonal(&[ONE, -ONE], CMat::zeros(2, 2)).unwrap();
        let (e0, e1) = (c(0.5, 0.5), c(0.6, 0.45));
        let f = taylor_propagator(&p, e0, e1).unwrap();
        let want = (-(e1.inv() - e0.inv())).exp();
        assert!((f[(0, 0)] - want).norm() < 1e-13);
    }

    #[test]
    fn decoupled_factors_are_identity() {
        let p = StokesProblem::diagonal(&[ONE, c(0.0, 1.0), -ONE], CMat::zeros(3, 3)).unwrap();
        for r in stokes_rays(&p) {
            let f = stokes_factor(&p, &r, &fast()).unwrap();
            assert!(max_abs(&(&f.matrix - identity(3))) < 1e-12);
        }
        assert!(monodromy_consistency(&p, &fast()).unwrap().defect < 1e-8);
    }

    #[test]
    fn triangular_factors_in_closed_form() {
        let v = c(0.7, -0.2);
        let p = StokesProblem::diagonal(&[ONE, -ONE], mat(&[&[ZERO, v], &[ZERO, ZERO]])).unwrap();
        let rays = stokes_rays(&p);
        let s0 = stokes_factor(&p, &rays[0], &fast()).unwrap();
        let spi = stokes_factor(&p, &rays[1], &fast()).unwrap();
        let want = c(0.0, -2.0 * PI) * v;
        assert!((s0.eigenbasis[(0, 1)] - want).norm() < 1e-7, "{}", s0.eigenbasis[(0, 1)]);
        assert!(max_abs(&(&spi.matrix - identity(2))) < 1e-7);
        assert!(monodromy_consistency(&p, &fast()).unwrap().defect < 1e-5);
    }

    #[test]
    fn symmetric_monodromy_factorises() {
        let p = symmetric();
        let rep = monodromy_consistency(&p, &fast()).unwrap();
        assert!(rep.defect < 1e-4, "{:e}", rep.defect);
        for f in &rep.factors {
            assert!(f.unipotency_defect() < 1e-6);
            assert!(f.support_defect() < 1e-7);
        }
        // base angle -pi/2: continuation = S(0) S(pi) = [[1 + ab, a], [b, 1]]
        let m = &rep.continuation;
        let a = rep.factors[0].matrix[(0, 1)];
        let b = rep.factors[1].matrix[(1, 0)];
        assert!((m[(0, 1)] - a).norm() < 1e-5 && (m[(1, 0)] - b).norm() < 1e-5);
        // integer coupling: the multipliers -2i sin(pi) vanish
        assert!(a.norm() < 1e-8 && b.norm() < 1e-8);
        let half = monodromy_consistency(&coupled(0.5), &fast()).unwrap();
        assert!(half.defect < 1e-6, "{:e}", half.defect);
        let (a, b) = (half.factors[0].matrix[(0, 1)], half.factors[1].matrix[(1, 0)]);
        assert!((half.continuation[(0, 0)] - (ONE + a * b)).norm() < 1e-6);
        assert!((half.continuation[(0, 1)] - a).norm() < 1e-6 && (half.continuation[(1, 0)] - b).norm() < 1e-6);
    }

    /// For `V = c [[0, 1], [1, 0]]` both multipliers equal `-2i sin(pi c)`.
    #[test]
    fn symmetric_multipliers_closed_form() {
        for cc in [0.25, 0.5, 1.5] {
            let p = coupled(cc);
            let rays = stokes_rays(&p);
            let want = c(0.0, -2.0 * (PI * cc).sin());
            let a = stokes_factor(&p, &rays[0], &fast()).unwrap().eigenbasis[(0, 1)];
            let b = stokes_factor(&p, &rays[1], &fast()).unwrap().eigenbasis[(1, 0)];
            assert!((a - want).norm() < 1e-8 && (b - want).norm() < 1e-8, "{cc}: {a} {b}");
        }
    }

    #[test]
    fn extended_precision_agrees() {
        let p = symmetric();
        let eps = c(0.5, 0.5);
        let d = canonical_solution(&p, PI / 2.0, eps, &fast()).unwrap();
        let opts = StokesOptions {
            tol: 1e-16,
            confirm_anchor: false,
            ..StokesOptions::extended()
        };
        let e = canonical_solution(&p, PI / 2.0, eps, &opts).unwrap();
        assert!(max_abs(&(&d.y - &e.y)) < 1e-8);
    }
}
