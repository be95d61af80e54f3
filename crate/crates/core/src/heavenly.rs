//! The heavenly residual, the pencil of connections in coordinates and its
//! flatness defect, and sampling checks of the three symmetries of `W`.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::frame::DarbouxFrame;
use crate::linalg::{CMat, CVec, ZERO};
use crate::plebanski::{eval_jet, Jet, PlebanskiFunction, XPoint};

fn check_dims(w: &PlebanskiFunction, frame: &DarbouxFrame, x: &XPoint) -> Result<()> {
    if w.n() != frame.n() || x.n() != frame.n() {
        return Err(Error::Dimension(format!(
            "frame has n = {}, W has n = {}, point has n = {}",
            frame.n(),
            w.n(),
            x.n()
        )));
    }
    Ok(())
}

/// `R_ij = W_{theta_i z_j} - W_{theta_j z_i} - sum_pq eta_pq W_{ip} W_{jq}`.
pub fn heavenly_residual(w: &PlebanskiFunction, frame: &DarbouxFrame, x: &XPoint) -> Result<CMat> {
    check_dims(w, frame, x)?;
    let jet = eval_jet(w, x, 2)?;
    Ok(residual_from_jet(&jet, frame))
}

pub(crate) fn theta_hessian(jet: &Jet) -> CMat {
    let n = jet.n();
    CMat::from_fn(n, n, |i, j| jet.d_theta(&[i, j]))
}

pub(crate) fn residual_from_jet(jet: &Jet, frame: &DarbouxFrame) -> CMat {
    let n = frame.n();
    let h = theta_hessian(jet);
    let mut r = CMat::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let mut quad = ZERO;
            for p in 0..n {
                for q in 0..n {
                    let e = frame.eta_f64(p, q);
                    if e != 0.0 {
                        quad += h[(i, p)] * h[(j, q)] * e;
                    }
                }
            }
            let v = jet.d_mixed(&[i], &[j]) - jet.d_mixed(&[j], &[i]) - quad;
            r[(i, j)] = v;
            r[(j, i)] = -v;
        }
    }
    r
}

/// Connection coefficients `A[(q, i)] = sum_p eta_pq W_{ip}`.
pub(crate) fn connection_matrix(jet: &Jet, frame: &DarbouxFrame) -> CMat {
    let n = frame.n();
    let h = theta_hessian(jet);
    CMat::from_fn(n, n, |q, i| {
        (0..n)
            .filter(|&p| frame.eta_f64(p, q) != 0.0)
            .map(|p| h[(i, p)] * frame.eta_f64(p, q))
            .sum()
    })
}

/// Columns `h_eps(d/dz_i)` in the basis `(d/dz, d/dtheta)`.
#[derive(Debug, Clone)]
pub struct PencilLift {
    pub epsilon_inv: Complex64,
    pub columns: Vec<CVec>,
}

impl PencilLift {
    pub fn as_matrix(&self) -> CMat {
        CMat::from_columns(&self.columns)
    }
}

/// `h_eps(d/dz_i) = d/dz_i + sum_pq eta_pq W_{ip} d/dtheta_q + eps^{-1} d/dtheta_i`.
pub fn lift_horizontal(
    w: &PlebanskiFunction,
    frame: &DarbouxFrame,
    x: &XPoint,
    epsilon_inv: Complex64,
    i: usize,
) -> Result<CVec> {
    check_dims(w, frame, x)?;
    let n = frame.n();
    if i >= n {
        return Err(Error::Dimension(format!("direction {i} out of range")));
    }
    let jet = eval_jet(w, x, 2)?;
    Ok(lift_column(&connection_matrix(&jet, frame), epsilon_inv, i))
}

fn lift_column(a: &CMat, epsilon_inv: Complex64, i: usize) -> CVec {
    let n = a.nrows();
    let mut v = CVec::zeros(2 * n);
    v[i] = Complex64::new(1.0, 0.0);
    for q in 0..n {
        v[n + q] = a[(q, i)];
    }
    v[n + i] += epsilon_inv;
    v
}

pub fn pencil_lift(w: &PlebanskiFunction, frame: &DarbouxFrame, x: &XPoint, epsilon_inv: Complex64) -> Result<PencilLift> {
    check_dims(w, frame, x)?;
    let jet = eval_jet(w, x, 2)?;
    let a = connection_matrix(&jet, frame);
    Ok(PencilLift {
        epsilon_inv,
        columns: (0..frame.n()).map(|i| lift_column(&a, epsilon_inv, i)).collect(),
    })
}

/// Lie bracket `[h_eps(d/dz_i), h_eps(d/dz_j)]` at `x`.
pub fn flatness_defect(
    w: &PlebanskiFunction,
    frame: &DarbouxFrame,
    x: &XPoint,
    epsilon_inv: Complex64,
    i: usize,
    j: usize,
) -> Result<CVec> {
    check_dims(w, frame, x)?;
    let jet = eval_jet(w, x, 3)?;
    Ok(flatness_from_jet(&jet, frame, epsilon_inv, i, j))
}

pub(crate) fn flatness_from_jet(jet: &Jet, frame: &DarbouxFrame, epsilon_inv: Complex64, i: usize, j: usize) -> CVec {
    let n = frame.n();
    let a = connection_matrix(jet, frame);
    // theta-component of the coefficient of X_k at index r
    let coeff = |k: usize, r: usize| a[(r, k)] + if r == k { epsilon_inv } else { ZERO };
    // X_k applied to A_l^q
    let apply = |k: usize, l: usize, q: usize| -> Complex64 {
        let mut s = ZERO;
        for p in 0..n {
            let e = frame.eta_f64(p, q);
            if e == 0.0 {
                continue;
            }
            let mut t = jet.d_mixed(&[l, p], &[k]);
            for r in 0..n {
                t += coeff(k, r) * jet.d_theta(&[l, p, r]);
            }
            s += t * e;
        }
        s
    };
    let mut out = CVec::zeros(2 * n);
    for q in 0..n {
        out[n + q] = apply(i, j, q) - apply(j, i, q);
    }
    out
}

/// Largest flatness defect over all direction pairs.
pub fn max_flatness_defect(w: &PlebanskiFunction, frame: &DarbouxFrame, x: &XPoint, epsilon_inv: Complex64) -> Result<f64> {
    check_dims(w, frame, x)?;
    let jet = eval_jet(w, x, 3)?;
    let n = frame.n();
    let mut m: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            m = m.max(crate::linalg::max_abs_vec(&flatness_from_jet(&jet, frame, epsilon_inv, i, j)));
        }
    }
    Ok(m)
}

#[derive(Debug, Clone)]
pub struct SymmetryOptions {
    /// Period lattice basis: shifts `theta -> theta + 2 pi i k`.
    pub lattice: Vec<Vec<i64>>,
    /// Degree of homogeneity in `z` expected of `W`.
    pub degree: f64,
    /// Scale factors `t` sampled in the homogeneity test.
    pub scales: Vec<Complex64>,
}

impl SymmetryOptions {
    pub fn standard(n: usize) -> Self {
        let lattice = (0..n)
            .map(|k| (0..n).map(|l| i64::from(k == l)).collect())
            .collect();
        Self {
            lattice,
            degree: -1.0,
            scales: vec![
                Complex64::new(2.0, 0.0),
                Complex64::new(1.0, 1.0),
                Complex64::new(1.0 / 3.0, 0.0),
            ],
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct SymmetryReport {
    pub periodic_defect: f64,
    pub homogeneity_defect: f64,
    pub oddness_defect: f64,
}

pub fn check_symmetries(w: &PlebanskiFunction, frame: &DarbouxFrame, samples: &[XPoint], opts: &SymmetryOptions) -> Result<SymmetryReport> {
    let n = frame.n();
    let two_pi_i = Complex64::new(0.0, 2.0 * std::f64::consts::PI);
    let mut rep = SymmetryReport::default();
    for x in samples {
        check_dims(w, frame, x)?;
        let w0 = w.value(x)?;
        for k in &opts.lattice {
            if k.len() != n {
                return Err(Error::Dimension("lattice vector length".into()));
            }
            let mut y = x.clone();
            for (t, &kk) in y.theta.iter_mut().zip(k) {
                *t += two_pi_i * kk as f64;
            }
            rep.periodic_defect = rep.periodic_defect.max((w.value(&y)? - w0).norm());
        }
        for &t in &opts.scales {
            let mut y = x.clone();
            y.z.iter_mut().for_each(|z| *z *= t);
            let want = t.powf(opts.degree) * w0;
            rep.homogeneity_defect = rep.homogeneity_defect.max((w.value(&y)? - want).norm());
        }
        let mut y = x.clone();
        y.theta.iter_mut().for_each(|t| *t = -*t);
        rep.oddness_defect = rep.oddness_defect.max((w.value(&y)? + w0).norm());
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_abs, max_abs_vec, re};

    fn pt(z: &[f64], t: &[f64]) -> XPoint {
        XPoint::from_real(z, t).unwrap()
    }

    fn parse(src: &str, n: usize) -> PlebanskiFunction {
        PlebanskiFunction::parse(src, n).unwrap()
    }

    #[test]
    fn zero_function() {
        let f = DarbouxFrame::standard(1);
        let w = PlebanskiFunction::zero(2);
        let x = pt(&[0.3, 0.1], &[0.5, -0.2]);
        assert_eq!(max_abs(&heavenly_residual(&w, &f, &x).unwrap()), 0.0);
        let v = lift_horizontal(&w, &f, &x, re(5.0), 1).unwrap();
        assert_eq!(v.as_slice(), &[re(0.0), re(1.0), re(0.0), re(5.0)]);
        assert_eq!(max_abs_vec(&flatness_defect(&w, &f, &x, re(3.0), 0, 1).unwrap()), 0.0);
    }

    #[test]
    fn z2_theta1_cubed() {
        let f = DarbouxFrame::standard(1);
        let w = parse("z2*t1^3", 2);
        let x = pt(&[0.0, 1.0], &[1.0, 0.0]);
        let r = heavenly_residual(&w, &f, &x).unwrap();
        assert!((r[(0, 1)] - re(3.0)).norm() < 1e-14);
        assert_eq!(r[(1, 0)], -r[(0, 1)]);
        // eta_12 = -1, W_11 = 6
        let v = lift_horizontal(&w, &f, &x, re(0.0), 0).unwrap();
        assert_eq!(v.as_slice(), &[re(1.0), re(0.0), re(0.0), re(-6.0)]);
    }

    #[test]
    fn cubic_is_exact() {
        let f = DarbouxFrame::standard(1);
        let w = parse("2.5*t1^3", 2);
        for x in [pt(&[0.3, -0.4], &[1.2, 0.7]), pt(&[1.0, 2.0], &[-0.5, 3.0])] {
            assert!(max_abs(&heavenly_residual(&w, &f, &x).unwrap()) < 1e-13);
            for e in [re(0.0), re(1.0), Complex64::new(0.0, 1.0)] {
                assert!(max_flatness_defect(&w, &f, &x, e).unwrap() < 1e-10);
            }
        }
    }

    #[test]
    fn candidate_family_is_decided_by_residual() {
        // c1 t1^3 + c3 t3^3 couples through eta_13 = -1 and fails
        let f = DarbouxFrame::standard(2);
        let x = pt(&[0.1, 0.2, 0.3, 0.4], &[0.5, -0.3, 0.8, 0.2]);
        let bad = parse("t1^3 + t3^3", 4);
        assert!(max_abs(&heavenly_residual(&bad, &f, &x).unwrap()) > 1.0);
        let good = parse("t1^3 - 2*t2^3", 4);
        assert!(max_abs(&heavenly_residual(&good, &f, &x).unwrap()) < 1e-13);
    }

    #[test]
    fn defect_matches_theta_derivative_of_residual() {
        // defect_q = -sum_p eta_pq d/dtheta_p R_ij at eps^{-1} = 0
        let f = DarbouxFrame::standard(1);
        let w = parse("z2*t1^3 + z1*t1*t2^2 + exp(z1*t2)", 2);
        let x = pt(&[0.3, 0.7], &[0.4, -0.6]);
        let h = 1e-3;
        let dr = |p: usize| {
            let e = |s: f64| heavenly_residual(&w, &f, &x.shifted(2 + p, re(s * h))).unwrap()[(0, 1)];
            (e(-2.0) - e(-1.0) * 8.0 + e(1.0) * 8.0 - e(2.0)) / (12.0 * h)
        };
        let d = flatness_defect(&w, &f, &x, re(0.0), 0, 1).unwrap();
        for q in 0..2 {
            let want: Complex64 = (0..2).map(|p| -dr(p) * f.eta_f64(p, q)).sum();
            assert!((d[2 + q] - want).norm() < 1e-8, "q={q}: {} vs {want}", d[2 + q]);
        }
        assert_eq!(d[0], re(0.0));
    }

    /// Vector field of `h_eps(d/dz_k)` as a map on combined coordinates.
    fn field<'a>(w: &'a PlebanskiFunction, f: &'a DarbouxFrame, e: Complex64, k: usize) -> impl Fn(&[Complex64]) -> Vec<Complex64> + 'a {
        move |y: &[Complex64]| {
            let x = XPoint::new(y[..2].to_vec(), y[2..].to_vec()).unwrap();
            lift_horizontal(w, f, &x, e, k).unwrap().iter().copied().collect()
        }
    }

    fn flow(v: &dyn Fn(&[Complex64]) -> Vec<Complex64>, y: &[Complex64], t: f64, steps: usize) -> Vec<Complex64> {
        let h = t / steps as f64;
        let mut y = y.to_vec();
        let add = |a: &[Complex64], b: &[Complex64], s: f64| a.iter().zip(b).map(|(x, z)| x + z * s).collect::<Vec<_>>();
        for _ in 0..steps {
            let k1 = v(&y);
            let k2 = v(&add(&y, &k1, h / 2.0));
            let k3 = v(&add(&y, &k2, h / 2.0));
            let k4 = v(&add(&y, &k3, h));
            for m in 0..y.len() {
                y[m] += (k1[m] + k2[m] * 2.0 + k3[m] * 2.0 + k4[m]) * (h / 6.0);
            }
        }
        y
    }

    #[test]
    fn defect_matches_flow_commutator() {
        let f = DarbouxFrame::standard(1);
        let w = parse("z2*t1^3", 2);
        let x = pt(&[0.2, 1.0], &[1.0, 0.3]);
        let e = re(1.0);
        let (xi, xj) = (field(&w, &f, e, 0), field(&w, &f, e, 1));
        let y0: Vec<Complex64> = x.z.iter().chain(&x.theta).copied().collect();
        // phi_j(-t) phi_i(-t) phi_j(t) phi_i(t) y0 = y0 + t^2 [X_i, X_j] + O(t^3)
        let comm = |t: f64| -> Vec<Complex64> {
            let mut y = flow(&xi, &y0, t, 40);
            y = flow(&xj, &y, t, 40);
            y = flow(&xi, &y, -t, 40);
            y = flow(&xj, &y, -t, 40);
            y.iter().zip(&y0).map(|(a, b)| (a - b) / (t * t)).collect()
        };
        let t = 0.02;
        let (c1, c2, c4) = (comm(t), comm(t / 2.0), comm(t / 4.0));
        let d = flatness_defect(&w, &f, &x, e, 0, 1).unwrap();
        for m in 0..4 {
            // Richardson over t, t/2, t/4 with error terms t and t^2
            let r1 = c2[m] * 2.0 - c1[m];
            let r2 = c4[m] * 2.0 - c2[m];
            let est = (r2 * 4.0 - r1) / 3.0;
            assert!((est - d[m]).norm() < 1e-6, "component {m}: {est} vs {}", d[m]);
        }
        assert!(max_abs_vec(&d) > 1.0);
    }

    #[test]
    fn pencil_shape_and_antisymmetry() {
        let f = DarbouxFrame::standard(1);
        let w = parse("z2*t1^3 + t2^2*z1", 2);
        let x = pt(&[0.3, 0.7], &[0.4, -0.6]);
        let e = Complex64::new(0.3, -2.0);
        for i in 0..2 {
            let d = lift_horizontal(&w, &f, &x, e, i).unwrap() - lift_horizontal(&w, &f, &x, re(0.0), i).unwrap();
            let mut want = CVec::zeros(4);
            want[2 + i] = e;
            assert_eq!(d, want);
        }
        let a = flatness_defect(&w, &f, &x, e, 0, 1).unwrap();
        let b = flatness_defect(&w, &f, &x, e, 1, 0).unwrap();
        assert_eq!(a, -b);
    }

    #[test]
    fn symmetry_checks() {
        let f = DarbouxFrame::standard(1);
        let opts = SymmetryOptions::standard(2);
        let samples = vec![pt(&[0.5, 0.3], &[0.2, -0.1]), pt(&[1.5, -0.3], &[0.7, 0.4])];
        let r = check_symmetries(&PlebanskiFunction::zero(2), &f, &samples, &opts).unwrap();
        assert_eq!(r, SymmetryReport::default());
        let r = check_symmetries(&parse("t1^3/6", 2), &f, &samples, &opts).unwrap();
        assert!(r.periodic_defect > 1.0);
        assert_eq!(r.oddness_defect, 0.0);
        let r = check_symmetries(&parse("z1^-1*t1^3", 2), &f, &samples, &opts).unwrap();
        assert!(r.homogeneity_defect < 1e-14);
        assert_eq!(r.oddness_defect, 0.0);
        // exp(k t) with integer k is periodic
        let r = check_symmetries(&parse("exp(t1)/z1 - exp(-t1)/z1", 2), &f, &samples, &opts).unwrap();
        assert!(r.periodic_defect < 1e-12 && r.oddness_defect < 1e-14 && r.homogeneity_defect < 1e-12);
    }
}
