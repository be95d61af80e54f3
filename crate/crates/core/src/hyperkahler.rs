//! Pointwise complex hyperkahler data built from a Plebanski function.
//!
//! All matrices use the basis `(d/dz_1..d/dz_n, d/dtheta_1..d/dtheta_n)`.
//! A bilinear form is stored as the matrix `M` with `F(a, b) = a^T M b`.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::frame::DarbouxFrame;
use crate::heavenly::{connection_matrix, residual_from_jet};
use crate::linalg::{identity, max_abs, re, CMat, CVec, I, ONE, ZERO};
use crate::plebanski::{eval_jet, PlebanskiFunction, XPoint};

#[derive(Debug, Clone)]
pub struct HKStructure {
    pub point: XPoint,
    pub g: CMat,
    pub i: CMat,
    pub j: CMat,
    pub k: CMat,
    /// Columns `h(e_1..e_n), v(e_1..e_n)`.
    pub adapted_basis: CMat,
    /// Largest entry of the heavenly residual at the point.
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct FormTriple {
    pub omega_i: CMat,
    pub omega_plus: CMat,
    pub omega_minus: CMat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FormSelector {
    I,
    Plus,
    Minus,
}

fn block(n: usize, tl: &CMat, tr: &CMat, bl: &CMat, br: &CMat) -> CMat {
    let mut m = CMat::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(tl);
    m.view_mut((0, n), (n, n)).copy_from(tr);
    m.view_mut((n, 0), (n, n)).copy_from(bl);
    m.view_mut((n, n), (n, n)).copy_from(br);
    m
}

fn omega_matrix(frame: &DarbouxFrame) -> CMat {
    let n = frame.n();
    CMat::from_fn(n, n, |p, q| re(frame.omega_f64(p, q)))
}

pub fn build_hk(w: &PlebanskiFunction, frame: &DarbouxFrame, x: &XPoint) -> Result<HKStructure> {
    let n = frame.n();
    if w.n() != n || x.n() != n {
        return Err(Error::Dimension("W, frame and point must share n".into()));
    }
    let jet = eval_jet(w, x, 2)?;
    let b = connection_matrix(&jet, frame);
    let residual = max_abs(&residual_from_jet(&jet, frame));
    let id = identity(n);
    let zero = CMat::zeros(n, n);
    let p = block(n, &id, &zero, &b, &id);
    let p_inv = block(n, &id, &zero, &(-&b), &id);
    // H and V are complementary exactly when P is invertible; with the
    // unipotent block form this always holds, but check for non-finite data.
    if !(&p * &p_inv - identity(2 * n)).iter().all(|z| z.norm() < 1e-9) {
        return Err(Error::DegenerateFrame);
    }
    let om = omega_matrix(frame);
    let i_ad = block(n, &(&id * -I), &zero, &zero, &(&id * I));
    let j_ad = block(n, &zero, &id, &(-&id), &zero);
    let g_ad = block(n, &zero, &(&om * re(0.5)), &(&om * re(-0.5)), &zero);
    let i_m = &p * i_ad * &p_inv;
    let j_m = &p * j_ad * &p_inv;
    let k_m = &i_m * &j_m;
    let g = p_inv.transpose() * g_ad * &p_inv;
    Ok(HKStructure {
        point: x.clone(),
        g,
        i: i_m,
        j: j_m,
        k: k_m,
        adapted_basis: p,
        residual,
    })
}

impl HKStructure {
    pub fn n(&self) -> usize {
        self.point.n()
    }

    /// Horizontal vectors `h(e_i)`.
    pub fn horizontal(&self) -> Vec<CVec> {
        (0..self.n()).map(|i| self.adapted_basis.column(i).into_owned()).collect()
    }

    pub fn forms(&self) -> FormTriple {
        let jp = &self.j + &self.k * I;
        let jm = &self.j - &self.k * I;
        FormTriple {
            omega_i: self.i.transpose() * &self.g,
            omega_plus: jp.transpose() * &self.g,
            omega_minus: jm.transpose() * &self.g,
        }
    }

    /// max of `|I^2 + 1|, |J^2 + 1|, |K^2 + 1|, |IJK + 1|`.
    pub fn quaternion_defect(&self) -> f64 {
        let id = identity(2 * self.n());
        [
            &self.i * &self.i + &id,
            &self.j * &self.j + &id,
            &self.k * &self.k + &id,
            &self.i * &self.j * &self.k + &id,
        ]
        .iter()
        .map(max_abs)
        .fold(0.0, f64::max)
    }

    /// Symmetry of `g` and `A^T g A = g` for `A` in `I, J, K`.
    pub fn metric_defect(&self) -> f64 {
        let sym = max_abs(&(&self.g - self.g.transpose()));
        [&self.i, &self.j, &self.k]
            .iter()
            .map(|a| max_abs(&(a.transpose() * &self.g * *a - &self.g)))
            .fold(sym, f64::max)
    }

    /// Distance of `Omega_-` from `pi^* omega` and of `2i Omega_I` from
    /// `sum omega_pq dz_p ^ dtheta_q`.
    pub fn relation_defects(&self, frame: &DarbouxFrame) -> (f64, f64) {
        let n = self.n();
        let om = omega_matrix(frame);
        let zero = CMat::zeros(n, n);
        let f = self.forms();
        let pull = block(n, &om, &zero, &zero, &zero);
        let mixed = block(n, &zero, &om, &om, &zero);
        (
            max_abs(&(f.omega_minus - pull)),
            max_abs(&(f.omega_i * (I * 2.0) - mixed)),
        )
    }

    /// Reconstruct `h(e_i)` as the `-i` eigenspace projection `(1 + iI)/2`
    /// of `d/dz_i`, and compare with the stored lift columns.
    pub fn uniqueness_defect(&self) -> f64 {
        let n = self.n();
        let proj = (identity(2 * n) + &self.i * I) * re(0.5);
        (0..n)
            .map(|i| {
                let rebuilt = proj.column(i).into_owned();
                crate::linalg::max_abs_vec(&(rebuilt - self.adapted_basis.column(i)))
            })
            .fold(0.0, f64::max)
    }
}

pub fn forms(hk: &HKStructure) -> FormTriple {
    hk.forms()
}

fn select(f: FormTriple, which: FormSelector) -> CMat {
    match which {
        FormSelector::I => f.omega_i,
        FormSelector::Plus => f.omega_plus,
        FormSelector::Minus => f.omega_minus,
    }
}

/// Largest component of the central-difference exterior derivative
/// `(dF)_abc = d_a F_bc + d_b F_ca + d_c F_ab` of the selected form.
pub fn closedness_defect(w: &PlebanskiFunction, frame: &DarbouxFrame, x: &XPoint, which: FormSelector, step: f64) -> Result<f64> {
    let m = 2 * frame.n();
    let mut grads = Vec::with_capacity(m);
    for a in 0..m {
        let fp = select(build_hk(w, frame, &x.shifted(a, re(step)))?.forms(), which);
        let fm = select(build_hk(w, frame, &x.shifted(a, re(-step)))?.forms(), which);
        grads.push((fp - fm) / re(2.0 * step));
    }
    let mut worst: f64 = 0.0;
    for a in 0..m {
        for b in (a + 1)..m {
            for c in (b + 1)..m {
                let d = grads[a][(b, c)] + grads[b][(c, a)] + grads[c][(a, b)];
                worst = worst.max(d.norm());
            }
        }
    }
    Ok(worst)
}

/// `Gamma[q][i][j] = sum_p eta_qp d^3 W / dtheta_i dtheta_j dtheta_p` on the
/// zero section over `z`.
pub fn linear_joyce(w: &PlebanskiFunction, frame: &DarbouxFrame, z: &[Complex64]) -> Result<Vec<Vec<Vec<Complex64>>>> {
    let n = frame.n();
    let x = XPoint::new(z.to_vec(), vec![ZERO; n])?;
    let jet = match eval_jet(w, &x, 3) {
        Ok(j) => j,
        Err(Error::PoleHit(msg)) | Err(Error::Overflow(msg)) => return Err(Error::PoleAtZeroSection(msg)),
        Err(e) => return Err(e),
    };
    Ok((0..n)
        .map(|q| {
            (0..n)
                .map(|i| {
                    (0..n)
                        .map(|j| (0..n).map(|p| jet.d_theta(&[i, j, p]) * frame.eta_f64(q, p)).sum())
                        .collect()
                })
                .collect()
        })
        .collect())
}

/// Mismatch of `g`, `I`, `J +- iK` under `m_t(z, theta) = (tz, theta)`
/// against the weights 1, 0, `-+1`.
pub fn homogeneity_flow_defect(w: &PlebanskiFunction, frame: &DarbouxFrame, x: &XPoint, t: Complex64) -> Result<f64> {
    let n = frame.n();
    let a = build_hk(w, frame, x)?;
    let mut y = x.clone();
    y.z.iter_mut().for_each(|z| *z *= t);
    let b = build_hk(w, frame, &y)?;
    let dm = CMat::from_diagonal(&CVec::from_fn(2 * n, |k, _| if k < n { t } else { ONE }));
    let dm_inv = CMat::from_diagonal(&CVec::from_fn(2 * n, |k, _| if k < n { ONE / t } else { ONE }));
    let conj = |m: &CMat| &dm_inv * m * &dm;
    let jp = |h: &HKStructure| &h.j + &h.k * I;
    let jm = |h: &HKStructure| &h.j - &h.k * I;
    let defects = [
        max_abs(&(dm.transpose() * &b.g * &dm - &a.g * t)),
        max_abs(&(conj(&b.i) - &a.i)),
        max_abs(&(conj(&jp(&b)) - jp(&a) / t)),
        max_abs(&(conj(&jm(&b)) - jm(&a) * t)),
    ];
    Ok(defects.into_iter().fold(0.0, f64::max))
}

/// For odd `W`: `I` invariant and `g, J, K` anti-invariant under
/// `theta -> -theta`. Returns the largest mismatch.
pub fn involution_defect(w: &PlebanskiFunction, frame: &DarbouxFrame, x: &XPoint) -> Result<f64> {
    let n = frame.n();
    let a = build_hk(w, frame, x)?;
    let mut y = x.clone();
    y.theta.iter_mut().for_each(|t| *t = -*t);
    let b = build_hk(w, frame, &y)?;
    let d = CMat::from_diagonal(&CVec::from_fn(2 * n, |k, _| if k < n { ONE } else { -ONE }));
    let pull = |m: &CMat| &d * m * &d;
    let defects = [
        max_abs(&(d.transpose() * &b.g * &d + &a.g)),
        max_abs(&(pull(&b.i) - &a.i)),
        max_abs(&(pull(&b.j) + &a.j)),
        max_abs(&(pull(&b.k) + &a.k)),
    ];
    Ok(defects.into_iter().fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    use crate::examples::HESSIAN_SOLUTION;

    fn pt(z: &[f64], t: &[f64]) -> XPoint {
        XPoint::from_real(z, t).unwrap()
    }

    fn parse(src: &str, n: usize) -> PlebanskiFunction {
        PlebanskiFunction::parse(src, n).unwrap()
    }

    #[test]
    fn flat_model() {
        let f = DarbouxFrame::standard(1);
        let hk = build_hk(&PlebanskiFunction::zero(2), &f, &pt(&[0.1, 0.2], &[0.3, 0.4])).unwrap();
        let want_i = CMat::from_diagonal(&CVec::from_vec(vec![-I, -I, I, I]));
        assert_eq!(hk.i, want_i);
        // J d/dtheta_i = d/dz_i, J d/dz_i = -d/dtheta_i
        assert_eq!(hk.j[(0, 2)], ONE);
        assert_eq!(hk.j[(2, 0)], -ONE);
        // 2 g(d/dz_p, d/dtheta_q) = omega_pq, no zz or theta-theta part
        assert_eq!(hk.g[(0, 3)] * 2.0, ONE);
        assert_eq!(hk.g[(1, 2)] * 2.0, -ONE);
        assert_eq!(hk.g[(0, 1)], ZERO);
        assert_eq!(hk.g[(2, 3)], ZERO);
        let (minus, mixed) = hk.relation_defects(&f);
        assert_eq!((minus, mixed), (0.0, 0.0));
        let fm = hk.forms();
        assert_eq!(fm.omega_plus[(2, 3)], ONE);
        assert_eq!(fm.omega_plus[(0, 1)], ZERO);
    }

    #[test]
    fn invariant_suite_on_exact_solution() {
        let f = DarbouxFrame::standard(1);
        let w = parse("t1^3", 2);
        let hk = build_hk(&w, &f, &pt(&[0.4, -0.2], &[1.0, 0.5])).unwrap();
        assert!(hk.residual < 1e-14);
        assert!(hk.quaternion_defect() < 1e-12);
        assert!(hk.metric_defect() < 1e-12);
        let (a, b) = hk.relation_defects(&f);
        assert!(a < 1e-12 && b < 1e-12);
        assert!(hk.uniqueness_defect() < 1e-12);
        let fm = hk.forms();
        for h in hk.horizontal() {
            let v = &fm.omega_plus * &h;
            assert!(crate::linalg::max_abs_vec(&v) < 1e-12);
        }
        assert_eq!(crate::linalg::rank(&fm.omega_minus, 1e-10), 2);
        assert_eq!(crate::linalg::rank(&fm.omega_plus, 1e-10), 2);
    }

    #[test]
    fn forms_are_skew() {
        let f = DarbouxFrame::standard(2);
        let w = parse("t1^3*z3 + z1*t2^2*t4", 4);
        let hk = build_hk(&w, &f, &pt(&[0.1, 0.2, 0.3, 0.4], &[0.5, 0.6, -0.7, 0.8])).unwrap();
        let fm = hk.forms();
        for m in [&fm.omega_i, &fm.omega_plus, &fm.omega_minus] {
            assert!(max_abs(&(m + m.transpose())) < 1e-12);
        }
        // quaternion and metric identities hold for any W, solution or not
        assert!(hk.quaternion_defect() < 1e-12);
        assert!(hk.metric_defect() < 1e-12);
    }

    #[test]
    fn closedness_decays_with_step() {
        // W = 1/2 sum F_ij theta_i theta_j with F the z-Hessian of exp(z1 z2)
        // solves the heavenly equation for d = 2
        let f = DarbouxFrame::standard(2);
        let w = parse(HESSIAN_SOLUTION, 4);
        let x = pt(&[0.8, 0.3, 0.1, -0.2], &[0.6, -0.4, 0.2, 0.5]);
        assert!(build_hk(&w, &f, &x).unwrap().residual < 1e-13);
        let d1 = closedness_defect(&w, &f, &x, FormSelector::Plus, 1e-2).unwrap();
        let d2 = closedness_defect(&w, &f, &x, FormSelector::Plus, 5e-3).unwrap();
        assert!(d1 > 1e-9, "{d1}");
        assert!(d1 / d2 > 3.5 && d1 / d2 < 4.5, "{d1} {d2}");
        // for a non-solution Omega_+ is not closed
        let bad = parse("z2*t1^3", 4);
        assert!(closedness_defect(&bad, &f, &x, FormSelector::Plus, 1e-3).unwrap() > 1e-2);
        for which in [FormSelector::I, FormSelector::Minus] {
            assert!(closedness_defect(&bad, &f, &x, which, 1e-3).unwrap() < 1e-9);
        }
    }

    #[test]
    fn joyce_connection() {
        let f = DarbouxFrame::standard(1);
        let z = [re(0.5), re(0.7)];
        let g0 = linear_joyce(&PlebanskiFunction::zero(2), &f, &z).unwrap();
        assert!(g0.iter().flatten().flatten().all(|c| c.norm() == 0.0));
        let c = 1.7;
        let g = linear_joyce(&parse("1.7/6*t1^3", 2), &f, &z).unwrap();
        for q in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    let want = if i == 0 && j == 0 { f.eta_f64(q, 0) * c } else { 0.0 };
                    assert!((g[q][i][j] - re(want)).norm() < 1e-14);
                    assert_eq!(g[q][i][j], g[q][j][i]);
                }
            }
        }
        let g5 = linear_joyce(&parse("t1^5", 2), &f, &z).unwrap();
        assert!(g5.iter().flatten().flatten().all(|c| c.norm() == 0.0));
        assert!(matches!(
            linear_joyce(&parse("1/t1", 2), &f, &z),
            Err(Error::PoleAtZeroSection(_))
        ));
    }

    #[test]
    fn homogeneity_and_involution() {
        let f = DarbouxFrame::standard(1);
        let x = pt(&[0.8, 0.3], &[0.6, -0.4]);
        let t = re(2.0);
        assert_eq!(homogeneity_flow_defect(&PlebanskiFunction::zero(2), &f, &x, t).unwrap(), 0.0);
        let w = parse("t1^3/z1", 2);
        assert!(homogeneity_flow_defect(&w, &f, &x, t).unwrap() < 1e-10);
        assert!(homogeneity_flow_defect(&w, &f, &x, Complex64::new(1.0, 1.0)).unwrap() < 1e-10);
        assert!(homogeneity_flow_defect(&parse("t1^3", 2), &f, &x, t).unwrap() > 1e-3);
        assert!(involution_defect(&w, &f, &x).unwrap() < 1e-12);
        assert!(involution_defect(&parse("t1^2", 2), &f, &x).unwrap() > 1e-3);
    }
}
