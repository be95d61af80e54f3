//! Periods of `sqrt(Q) dx` on hyperelliptic spectral curves `y^2 = Q(x)`.
//!
//! Polynomials are coefficient vectors in ascending powers, so `1 - x^2` is
//! `[1, 0, -1]`. A cycle is a closed polyline in the x-plane plus the sheet it
//! starts on. The `Plus` sheet at the first vertex is the principal square
//! root of `Q` there.
//!
//! Branch tracking never compares square roots by proximity. Along a path the
//! value is carried in steps of at most half the distance to the nearest
//! root, using `y(x) = y(a) prod_j sqrt((x - r_j) / (a - r_j))` where every
//! factor has positive real part.

use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::CMat;

/// Roots closer than this, relative to `max(1, max |r|)`, count as repeated.
pub const SEPARATION_REL: f64 = 1e-8;
/// Cycles must stay this far from every root, relative to the same scale.
pub const GUARD_REL: f64 = 1e-6;
/// Crossings with `|sin(angle)|` below this are rejected.
pub const TRANSVERSE_TOL: f64 = 1e-9;

const MAX_BISECTIONS: usize = 48;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BranchPoint {
    pub value: Complex64,
    pub simple: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectralData {
    coeffs: Vec<Complex64>,
    branch_points: Vec<BranchPoint>,
    resolved: bool,
    separation: f64,
}

fn horner(c: &[Complex64], x: Complex64) -> Complex64 {
    c.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &a| acc * x + a)
}

fn derivative(c: &[Complex64]) -> Vec<Complex64> {
    c.iter().enumerate().skip(1).map(|(k, &a)| a * k as f64).collect()
}

fn trim(coeffs: &[Complex64]) -> Vec<Complex64> {
    let mut c = coeffs.to_vec();
    while c.last().is_some_and(|a| *a == Complex64::new(0.0, 0.0)) {
        c.pop();
    }
    c
}

/// Roots from the companion matrix, each polished by one Newton step.
fn polished_roots(c: &[Complex64]) -> Vec<Complex64> {
    let n = c.len() - 1;
    let lead = c[n];
    let mut m = CMat::zeros(n, n);
    for i in 1..n {
        m[(i, i - 1)] = Complex64::new(1.0, 0.0);
    }
    for i in 0..n {
        m[(i, n - 1)] = -c[i] / lead;
    }
    let raw: Vec<Complex64> = m.schur().eigenvalues().map(|v| v.iter().copied().collect()).unwrap_or_default();
    let dc = derivative(c);
    let mut roots: Vec<Complex64> = raw
        .into_iter()
        .map(|r| {
            let d = horner(&dc, r);
            if d.norm() > 0.0 {
                let step = horner(c, r) / d;
                if step.is_finite() && step.norm() < 1e-3 * (1.0 + r.norm()) {
                    return r - step;
                }
            }
            r
        })
        .collect();
    roots.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    roots
}

impl SpectralData {
    /// Roots of `Q` with simplicity flags; never fails on repeated roots.
    pub fn classify(coeffs: &[Complex64]) -> Result<Self> {
        let c = trim(coeffs);
        if c.len() < 3 {
            return Err(Error::Invalid("Q must have degree at least 2".into()));
        }
        if c.iter().any(|a| !a.is_finite()) {
            return Err(Error::Invalid("Q has non-finite coefficients".into()));
        }
        let roots = polished_roots(&c);
        let scale = roots.iter().fold(1.0f64, |a, r| a.max(r.norm()));
        let mut separation = f64::INFINITY;
        let mut simple = vec![true; roots.len()];
        for i in 0..roots.len() {
            for j in (i + 1)..roots.len() {
                let d = (roots[i] - roots[j]).norm();
                separation = separation.min(d);
                if d < SEPARATION_REL * scale {
                    simple[i] = false;
                    simple[j] = false;
                }
            }
        }
        let resolved = simple.iter().all(|&s| s);
        Ok(Self {
            coeffs: c,
            branch_points: roots.into_iter().zip(simple).map(|(value, simple)| BranchPoint { value, simple }).collect(),
            resolved,
            separation,
        })
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn branch_points(&self) -> &[BranchPoint] {
        &self.branch_points
    }

    pub fn roots(&self) -> Vec<Complex64> {
        self.branch_points.iter().map(|b| b.value).collect()
    }

    pub fn resolved(&self) -> bool {
        self.resolved
    }

    /// Smallest pairwise distance between roots.
    pub fn separation(&self) -> f64 {
        self.separation
    }

    pub fn eval(&self, x: Complex64) -> Complex64 {
        horner(&self.coeffs, x)
    }

    fn scale(&self) -> f64 {
        self.branch_points.iter().fold(1.0f64, |a, b| a.max(b.value.norm()))
    }

    fn guard(&self) -> f64 {
        GUARD_REL * self.scale()
    }
}

/// Roots of `Q`, failing with `RepeatedRoot` unless all are simple.
pub fn branch_points(coeffs: &[Complex64]) -> Result<SpectralData> {
    let data = SpectralData::classify(coeffs)?;
    if let Some(b) = data.branch_points.iter().find(|b| !b.simple) {
        return Err(Error::RepeatedRoot(format!("{}", b.value)));
    }
    Ok(data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Sheet {
    Plus,
    Minus,
}

impl Sheet {
    pub fn flipped(self) -> Self {
        match self {
            Sheet::Plus => Sheet::Minus,
            Sheet::Minus => Sheet::Plus,
        }
    }

    fn sign(self) -> f64 {
        match self {
            Sheet::Plus => 1.0,
            Sheet::Minus => -1.0,
        }
    }
}

impl FromStr for Sheet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "+" | "plus" => Ok(Sheet::Plus),
            "-" | "minus" => Ok(Sheet::Minus),
            _ => Err(Error::Invalid(format!("unknown sheet label {s:?}"))),
        }
    }
}

/// Closed polyline; the edge from the last vertex back to the first is implied.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cycle {
    vertices: Vec<Complex64>,
    sheet: Sheet,
}

impl Cycle {
    pub fn new(mut vertices: Vec<Complex64>, sheet: Sheet) -> Result<Self> {
        if vertices.len() > 1 && vertices.first() == vertices.last() {
            vertices.pop();
        }
        if vertices.len() < 3 {
            return Err(Error::Invalid("a cycle needs at least three vertices".into()));
        }
        if vertices.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("non-finite cycle vertex".into()));
        }
        Ok(Self { vertices, sheet })
    }

    /// Counterclockwise polygon on the ellipse with semi-axes `a` along
    /// `direction` and `b` across it, starting at `center - b i direction`.
    pub fn ellipse(center: Complex64, a: f64, b: f64, direction: Complex64, sides: usize, sheet: Sheet) -> Result<Self> {
        if sides < 3 || a <= 0.0 || b <= 0.0 || direction.norm() == 0.0 {
            return Err(Error::Invalid("ellipse needs positive axes, a direction and three sides".into()));
        }
        let u = direction / direction.norm();
        let vertices = (0..sides)
            .map(|k| {
                let t = -std::f64::consts::FRAC_PI_2 + std::f64::consts::TAU * k as f64 / sides as f64;
                center + u * Complex64::new(a * t.cos(), b * t.sin())
            })
            .collect();
        Self::new(vertices, sheet)
    }

    /// Ellipse enclosing the segment `[p, q]` with clearance `margin` at the ends.
    pub fn around_segment(p: Complex64, q: Complex64, margin: f64, sides: usize, sheet: Sheet) -> Result<Self> {
        let a = 0.5 * (q - p).norm() + margin;
        Self::ellipse(0.5 * (p + q), a, 0.6 * a, q - p, sides, sheet)
    }

    pub fn vertices(&self) -> &[Complex64] {
        &self.vertices
    }

    pub fn sheet(&self) -> Sheet {
        self.sheet
    }

    pub fn with_sheet(&self, sheet: Sheet) -> Self {
        Self {
            vertices: self.vertices.clone(),
            sheet,
        }
    }

    /// Same start vertex, opposite orientation.
    pub fn reversed(&self) -> Self {
        let mut v = vec![self.vertices[0]];
        v.extend(self.vertices[1..].iter().rev());
        Self {
            vertices: v,
            sheet: self.sheet,
        }
    }

    fn edges(&self) -> impl Iterator<Item = (Complex64, Complex64)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |k| (self.vertices[k], self.vertices[(k + 1) % n]))
    }

    fn length(&self) -> f64 {
        self.edges().map(|(a, b)| (b - a).norm()).sum()
    }
}

/// Parses one cycle per non-empty line: a sheet label (`+` or `-`) followed
/// by whitespace-separated vertices such as `0.5-1i`. Lines starting with `#`
/// are skipped.
pub fn parse_cycles(text: &str) -> Result<Vec<Cycle>> {
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut col = 1 + line.len() - line.trim_start().len();
        let mut tokens = Vec::new();
        for tok in trimmed.split_whitespace() {
            let at = line[col - 1..].find(tok).map_or(col, |o| col + o);
            tokens.push((at, tok));
            col = at + tok.len();
        }
        let parse_err = |column: usize, message: String| Error::Parse {
            line: ln + 1,
            column,
            message,
        };
        let (c0, label) = tokens[0];
        let sheet = Sheet::from_str(label).map_err(|e| parse_err(c0, e.to_string()))?;
        let mut vertices = Vec::new();
        for &(c, tok) in &tokens[1..] {
            let z = Complex64::from_str(tok).map_err(|_| parse_err(c, format!("bad complex number {tok:?}")))?;
            vertices.push(z);
        }
        out.push(Cycle::new(vertices, sheet).map_err(|e| parse_err(c0, e.to_string()))?);
    }
    Ok(out)
}

/// Parses comma- or whitespace-separated complex coefficients in ascending powers.
pub fn parse_coefficients(text: &str) -> Result<Vec<Complex64>> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| Complex64::from_str(t).map_err(|_| Error::Invalid(format!("bad coefficient {t:?}"))))
        .collect()
}

fn segment_distance(a: Complex64, b: Complex64, p: Complex64) -> f64 {
    let d = b - a;
    let len2 = d.norm_sqr();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = (((p - a) * d.conj()).re / len2).clamp(0.0, 1.0);
    (a + d * t - p).norm()
}

fn check_clearance(data: &SpectralData, cycle: &Cycle) -> Result<()> {
    let guard = data.guard();
    let mut worst = f64::INFINITY;
    for (a, b) in cycle.edges() {
        for r in data.roots() {
            worst = worst.min(segment_distance(a, b, r));
        }
    }
    if worst < guard {
        return Err(Error::TooClose { distance: worst });
    }
    Ok(())
}

/// Winding number of the cycle around each root, in root order.
pub fn winding_numbers(data: &SpectralData, cycle: &Cycle) -> Result<Vec<i64>> {
    check_clearance(data, cycle)?;
    Ok(data
        .roots()
        .iter()
        .map(|&r| {
            let total: f64 = cycle.edges().map(|(a, b)| ((b - r) / (a - r)).arg()).sum();
            (total / std::f64::consts::TAU).round() as i64
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
}

/// Parity of the total change of `arg Q` along the cycle, in units of `2 pi`.
pub fn sheet_parity(data: &SpectralData, cycle: &Cycle) -> Result<Parity> {
    let total: i64 = winding_numbers(data, cycle)?.iter().sum();
    Ok(if total.rem_euclid(2) == 0 { Parity::Even } else { Parity::Odd })
}

struct Tracker<'a> {
    roots: &'a [Complex64],
}

impl Tracker<'_> {
    fn distance(&self, x: Complex64) -> f64 {
        self.roots.iter().fold(f64::INFINITY, |a, &r| a.min((x - r).norm()))
    }

    /// `y(x) / y(a)` for `|x - a|` at most half the distance from `a` to the roots.
    fn ratio(&self, a: Complex64, x: Complex64) -> Complex64 {
        self.roots.iter().fold(Complex64::new(1.0, 0.0), |acc, &r| acc * ((x - r) / (a - r)).sqrt())
    }

    /// Breakpoints along `[a, b]` so that each piece stays inside the safe
    /// disc of its left end.
    fn pieces(&self, a: Complex64, b: Complex64) -> Vec<Complex64> {
        let mut pts = vec![a];
        let mut x = a;
        loop {
            let rem = (b - x).norm();
            let step = 0.5 * self.distance(x);
            if rem <= step {
                pts.push(b);
                return pts;
            }
            x += (b - x) * (step / rem);
            pts.push(x);
        }
    }

    fn carry(&self, a: Complex64, ya: Complex64, b: Complex64) -> Complex64 {
        let pts = self.pieces(a, b);
        pts.windows(2).fold(ya, |y, w| y * self.ratio(w[0], w[1]))
    }
}

/// Differential integrated over a cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Differential {
    /// `sqrt(Q) dx`
    Lambda,
    /// `x^k dx / sqrt(Q)`
    Inverse(u32),
}

// Gauss-Kronrod 7/15 abscissae and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> Complex64>(f: &F, lo: f64, hi: f64) -> (Complex64, f64) {
    let c = 0.5 * (lo + hi);
    let h = 0.5 * (hi - lo);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let pair = f(c - h * XGK[j]) + f(c + h * XGK[j]);
        k += pair * WGK[j];
        if j % 2 == 1 {
            g += pair * WG[j / 2];
        }
    }
    (k * h, ((k - g) * h).norm())
}

/// Adaptive integral over `[0, 1]` with absolute tolerance `tol`.
fn adaptive<F: Fn(f64) -> Complex64>(f: &F, tol: f64) -> Result<(Complex64, f64)> {
    let mut stack = vec![(0.0, 1.0, 0usize)];
    let mut sum = Complex64::new(0.0, 0.0);
    let mut err = 0.0;
    while let Some((lo, hi, depth)) = stack.pop() {
        let (v, e) = gk15(f, lo, hi);
        let budget = tol * (hi - lo);
        if e <= budget || (e <= 1e-15 * v.norm() && e <= tol) {
            sum += v;
            err += e;
        } else if depth >= MAX_BISECTIONS {
            return Err(Error::ToleranceUnreachable(tol));
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((mid, hi, depth + 1));
            stack.push((lo, mid, depth + 1));
        }
    }
    Ok((sum, err))
}

/// Integral of `diff` over the cycle lifted from the start value `y0`.
fn integrate_from(data: &SpectralData, cycle: &Cycle, y0: Complex64, diff: Differential, tol: f64) -> Result<(Complex64, f64)> {
    let roots = data.roots();
    let tr = Tracker { roots: &roots };
    let total = cycle.length();
    let mut y = y0;
    let mut sum = Complex64::new(0.0, 0.0);
    let mut err = 0.0;
    for (a, b) in cycle.edges() {
        let pts = tr.pieces(a, b);
        for w in pts.windows(2) {
            let (xa, xb) = (w[0], w[1]);
            let dx = xb - xa;
            let ya = y;
            let f = |t: f64| {
                let x = xa + dx * t;
                let yx = ya * tr.ratio(xa, x);
                let g = match diff {
                    Differential::Lambda => yx,
                    Differential::Inverse(k) => x.powu(k) / yx,
                };
                g * dx
            };
            let (v, e) = adaptive(&f, tol * dx.norm() / total)?;
            sum += v;
            err += e;
            y = ya * tr.ratio(xa, xb);
        }
    }
    Ok((sum, err))
}

fn start_value(data: &SpectralData, cycle: &Cycle) -> Complex64 {
    data.eval(cycle.vertices[0]).sqrt() * cycle.sheet.sign()
}

fn validate(data: &SpectralData, cycle: &Cycle, tol: f64) -> Result<()> {
    if !data.resolved {
        return Err(Error::RepeatedRoot("cycle integrals need simple roots".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::Invalid("tolerance must be positive".into()));
    }
    if sheet_parity(data, cycle)? == Parity::Odd {
        return Err(Error::OddCycle);
    }
    Ok(())
}

/// `(integral, error estimate)` of a differential over a closed lifted cycle.
pub fn cycle_integral(data: &SpectralData, cycle: &Cycle, diff: Differential, tol: f64) -> Result<(Complex64, f64)> {
    validate(data, cycle, tol)?;
    integrate_from(data, cycle, start_value(data, cycle), diff, tol)
}

/// Period `oint sqrt(Q) dx` of one cycle.
pub fn period(data: &SpectralData, cycle: &Cycle, tol: f64) -> Result<Complex64> {
    cycle_integral(data, cycle, Differential::Lambda, tol).map(|(v, _)| v)
}

#[derive(Debug, Clone, Serialize)]
pub struct PeriodVector {
    pub cycles: Vec<Cycle>,
    pub values: Vec<Complex64>,
    pub errors: Vec<f64>,
}

/// Periods of several cycles, one thread per cycle.
pub fn periods(data: &SpectralData, cycles: &[Cycle], tol: f64) -> Result<PeriodVector> {
    let results: Vec<Result<(Complex64, f64)>> = std::thread::scope(|s| {
        let handles: Vec<_> = cycles
            .iter()
            .map(|c| s.spawn(move || cycle_integral(data, c, Differential::Lambda, tol)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("period worker panicked")).collect()
    });
    let mut values = Vec::with_capacity(cycles.len());
    let mut errors = Vec::with_capacity(cycles.len());
    for r in results {
        let (v, e) = r?;
        values.push(v);
        errors.push(e);
    }
    Ok(PeriodVector {
        cycles: cycles.to_vec(),
        values,
        errors,
    })
}

/// Values of `y` at the cycle vertices, lifted from the start sheet.
fn vertex_values(data: &SpectralData, cycle: &Cycle) -> Vec<Complex64> {
    let roots = data.roots();
    let tr = Tracker { roots: &roots };
    let mut out = vec![start_value(data, cycle)];
    let n = cycle.vertices.len();
    for k in 0..n - 1 {
        let y = tr.carry(cycle.vertices[k], out[k], cycle.vertices[k + 1]);
        out.push(y);
    }
    out
}

fn cross(a: Complex64, b: Complex64) -> f64 {
    a.re * b.im - a.im * b.re
}

const VERTEX_TOL: f64 = 1e-12;

/// Signed crossings of the two lifts: a planar crossing counts only when
/// both cycles are on the same sheet there, with sign `+1` when the
/// tangent of `b` points counterclockwise from the tangent of `a`.
fn pairing(data: &SpectralData, a: &Cycle, b: &Cycle) -> Result<i64> {
    let roots = data.roots();
    let tr = Tracker { roots: &roots };
    let ya = vertex_values(data, a);
    let yb = vertex_values(data, b);
    let mut total = 0;
    for (i, (p, p2)) in a.edges().enumerate() {
        let da = p2 - p;
        for (j, (q, q2)) in b.edges().enumerate() {
            let db = q2 - q;
            let den = cross(da, db);
            let scale = da.norm() * db.norm();
            let w = q - p;
            if den.abs() <= TRANSVERSE_TOL * scale {
                let collinear = cross(da, w).abs() <= TRANSVERSE_TOL * da.norm() * w.norm();
                if collinear {
                    let t0 = (w * da.conj()).re / da.norm_sqr();
                    let t1 = ((q2 - p) * da.conj()).re / da.norm_sqr();
                    if t0.max(t1) >= 0.0 && t0.min(t1) <= 1.0 {
                        return Err(Error::NonTransverse(format!("overlapping edges {i} and {j}")));
                    }
                }
                continue;
            }
            let s = cross(w, db) / den;
            let t = cross(w, da) / den;
            let inside = |u: f64| (-VERTEX_TOL..=1.0 + VERTEX_TOL).contains(&u);
            if !inside(s) || !inside(t) {
                continue;
            }
            let near = |u: f64| u.abs() <= VERTEX_TOL || (1.0 - u).abs() <= VERTEX_TOL;
            if near(s) || near(t) {
                return Err(Error::NonTransverse(format!("crossing at a vertex of edges {i} and {j}")));
            }
            let x = p + da * s;
            let va = tr.carry(p, ya[i], x);
            let vb = tr.carry(q, yb[j], x);
            if (va - vb).norm() < (va + vb).norm() {
                total += if den > 0.0 { 1 } else { -1 };
            }
        }
    }
    Ok(total)
}

fn same_geometry(a: &Cycle, b: &Cycle) -> bool {
    a.vertices == b.vertices
}

/// Intersection numbers of the lifted cycles on the spectral curve.
pub fn intersection_matrix(data: &SpectralData, cycles: &[Cycle]) -> Result<DMatrix<i64>> {
    for c in cycles {
        validate(data, c, 1.0)?;
    }
    let n = cycles.len();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = if same_geometry(&cycles[i], &cycles[j]) {
                0
            } else {
                pairing(data, &cycles[i], &cycles[j])?
            };
            m[(i, j)] = v;
            m[(j, i)] = -v;
        }
    }
    Ok(m)
}

/// One ellipse around each consecutive pair of roots, in the order of
/// [`SpectralData::roots`] (real part, then imaginary part).
pub fn consecutive_cycles(data: &SpectralData) -> Result<Vec<Cycle>> {
    let roots = data.roots();
    let margin = 0.3 * data.separation;
    let mut out = Vec::new();
    for w in roots.windows(2) {
        let c = Cycle::around_segment(w[0], w[1], margin, 64, Sheet::Plus)?;
        let wind = winding_numbers(data, &c)?;
        if wind.iter().filter(|&&k| k != 0).count() != 2 {
            return Err(Error::Invalid("consecutive-root ellipse encloses a third root".into()));
        }
        out.push(c);
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct JacobianRank {
    pub rank: usize,
    /// Ranks at the two finite-difference steps.
    pub step_ranks: [usize; 2],
    pub steps: [f64; 2],
    /// Singular values at the smaller step.
    pub singular_values: Vec<f64>,
}

/// Relative singular-value threshold for the Jacobian rank.
pub const JACOBIAN_RANK_TOL: f64 = 1e-6;

/// Roots of the perturbed polynomial matched to the original ones.
fn continued(data: &SpectralData, coeffs: &[Complex64]) -> Result<SpectralData> {
    let moved = match SpectralData::classify(coeffs) {
        Ok(m) if m.resolved && m.degree() == data.degree() => m,
        _ => return Err(Error::RootCollision),
    };
    let bound = 0.25 * data.separation;
    for r in data.roots() {
        let near = moved.roots().iter().filter(|&&s| (s - r).norm() < bound).count();
        if near != 1 {
            return Err(Error::RootCollision);
        }
    }
    Ok(moved)
}

fn perturbed_period(data: &SpectralData, moved: &SpectralData, cycle: &Cycle, tol: f64) -> Result<Complex64> {
    if winding_numbers(moved, cycle)? != winding_numbers(data, cycle)? {
        return Err(Error::TooClose {
            distance: data.separation,
        });
    }
    let y_old = start_value(data, cycle);
    let s = moved.eval(cycle.vertices[0]).sqrt();
    let y0 = if (s - y_old).norm() <= (s + y_old).norm() { s } else { -s };
    integrate_from(moved, cycle, y0, Differential::Lambda, tol).map(|(v, _)| v)
}

/// Numerical rank of `d z_i / d t_k` for `Q + sum_k t_k delta_k`, by central
/// differences at two steps with the roots continued along the deformation.
pub fn period_jacobian_rank(data: &SpectralData, cycles: &[Cycle], slice: &[Vec<Complex64>], tol: f64) -> Result<JacobianRank> {
    for c in cycles {
        validate(data, c, tol)?;
    }
    if slice.is_empty() || slice.iter().any(|d| d.len() > data.coeffs.len()) {
        return Err(Error::Dimension("deformations must not raise the degree".into()));
    }
    let cnorm = data.coeffs.iter().fold(0.0f64, |a, c| a.max(c.norm()));
    let steps = [1e-4 * cnorm, 5e-5 * cnorm];
    let mut ranks = [0usize; 2];
    let mut last_sv = Vec::new();
    for (si, &h) in steps.iter().enumerate() {
        let mut jac = CMat::zeros(cycles.len(), slice.len());
        for (k, delta) in slice.iter().enumerate() {
            let shifted = |sign: f64| {
                let mut c = data.coeffs.clone();
                for (ci, di) in c.iter_mut().zip(delta) {
                    *ci += di * (sign * h);
                }
                c
            };
            let plus = continued(data, &shifted(1.0))?;
            let minus = continued(data, &shifted(-1.0))?;
            for (i, cyc) in cycles.iter().enumerate() {
                let zp = perturbed_period(data, &plus, cyc, tol)?;
                let zm = perturbed_period(data, &minus, cyc, tol)?;
                jac[(i, k)] = (zp - zm) / (2.0 * h);
            }
        }
        let sv: Vec<f64> = jac.svd(false, false).singular_values.iter().copied().collect();
        let top = sv.iter().copied().fold(0.0, f64::max);
        ranks[si] = if top == 0.0 { 0 } else { sv.iter().filter(|&&s| s > JACOBIAN_RANK_TOL * top).count() };
        last_sv = sv;
    }
    Ok(JacobianRank {
        rank: ranks[0].min(ranks[1]),
        step_ranks: ranks,
        steps,
        singular_values: last_sv,
    })
}

/// `d z / d c_k = (1/2) oint x^k dx / sqrt(Q)` for each cycle and each monomial.
pub fn analytic_jacobian(data: &SpectralData, cycles: &[Cycle], powers: &[u32], tol: f64) -> Result<CMat> {
    let mut jac = CMat::zeros(cycles.len(), powers.len());
    for (i, c) in cycles.iter().enumerate() {
        for (k, &p) in powers.iter().enumerate() {
            jac[(i, k)] = cycle_integral(data, c, Differential::Inverse(p), tol)?.0 * 0.5;
        }
    }
    Ok(jac)
}
