//! One function per subcommand; each returns a filled-in report.

use std::path::Path;

use anyhow::{anyhow, bail, Context as _, Result};
use joycekit::acceptance;
use joycekit::grid::GridSpec;
use joycekit::heavenly::{check_symmetries, heavenly_residual, max_flatness_defect, SymmetryOptions};
use joycekit::hyperkahler::{build_hk, closedness_defect, linear_joyce, FormSelector};
use joycekit::lagrangian::{good_verdict, lift_dependence, nondegenerate, CoordinateLagrangian};
use joycekit::linalg::{max_abs, to_rows};
use joycekit::spectral::{self, Cycle, SpectralData};
use joycekit::stokes::{self, StokesOptions, StokesProblem};
use joycekit::twistor::{self, conserved_coordinate_defect, EpsilonPath, Observable, TwistorOptions};
use joycekit::wallcrossing::{self, compose, ChargeLattice, QuadraticRefinement, TorusAutomorphism};
use joycekit::{BigRational, Complex64, DarbouxFrame, Error, PlebanskiFunction, Precision, XPoint};
use serde::Serialize;

use crate::input::{self, Wall};
use crate::report::{Context, Report};
use crate::svg;

const EPS_INV_SAMPLES: [Complex64; 3] = [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)];

fn write_file(ctx: &Context, rep: &mut Report, name: &str, body: &str) -> Result<()> {
    let path = ctx.out_dir.join(name);
    std::fs::write(&path, body).with_context(|| format!("cannot write {}", path.display()))?;
    rep.files.push(name.to_string());
    Ok(())
}

/// Grid points where `W` is regular, and how many were dropped.
fn regular_points(w: &PlebanskiFunction, grid: &GridSpec, n: usize, seed: u64) -> Result<(Vec<XPoint>, usize)> {
    let all = grid.points(n, seed);
    let total = all.len();
    let pts: Vec<XPoint> = all.into_iter().filter(|x| w.is_regular(x)).collect();
    if pts.is_empty() {
        bail!("W has no regular point on the grid");
    }
    let skipped = total - pts.len();
    Ok((pts, skipped))
}

pub fn heavenly_check(ctx: &Context, w_path: &Path, d: usize, grid: &GridSpec) -> Result<Report> {
    let mut rep = Report::new("heavenly-check", ctx, &[("residual", 1e-10), ("flatness", 1e-10), ("symmetry", 1e-9)])?;
    let frame = DarbouxFrame::new(d, None)?;
    let n = frame.n();
    let w = input::load_w(w_path, n)?;
    let (pts, skipped) = regular_points(&w, grid, n, ctx.seed)?;
    let (mut res, mut flat) = (0.0f64, 0.0f64);
    for x in &pts {
        res = res.max(max_abs(&heavenly_residual(&w, &frame, x)?));
        for e in EPS_INV_SAMPLES {
            flat = flat.max(max_flatness_defect(&w, &frame, x, e)?);
        }
    }
    rep.set("frame", frame.summary());
    rep.set("grid", grid);
    rep.set("points", pts.len());
    rep.set("skipped_points", skipped);
    rep.set("max_residual", res);
    rep.set("max_flatness_defect", flat);
    rep.le("max heavenly residual", res, "residual");
    rep.le("max flatness defect, 1/eps in (0, 1, i)", flat, "flatness");

    let flags = w.flags();
    let mut sym = serde_json::Map::new();
    if flags.periodic || flags.homogeneous || flags.odd {
        let s = check_symmetries(&w, &frame, &pts, &SymmetryOptions::standard(n))?;
        for (on, name, v) in [
            (flags.periodic, "periodic", s.periodic_defect),
            (flags.homogeneous, "homogeneous", s.homogeneity_defect),
            (flags.odd, "odd", s.oddness_defect),
        ] {
            if on {
                sym.insert(name.into(), v.into());
                rep.le(format!("declared symmetry {name}"), v, "symmetry");
            }
        }
    }
    rep.set("symmetry_defects", sym);
    Ok(rep)
}

pub fn hk_verify(ctx: &Context, w_path: &Path, d: usize, grid: &GridSpec, step: f64) -> Result<Report> {
    let mut rep = Report::new("hk-verify", ctx, &[("quaternion", 1e-10), ("metric", 1e-10), ("closedness", 1e-6)])?;
    let frame = DarbouxFrame::new(d, None)?;
    let n = frame.n();
    let w = input::load_w(w_path, n)?;
    let (pts, skipped) = regular_points(&w, grid, n, ctx.seed)?;
    let (mut quat, mut metric) = (0.0f64, 0.0f64);
    let mut closed = [0.0f64; 3];
    let forms = [FormSelector::I, FormSelector::Plus, FormSelector::Minus];
    for x in &pts {
        let hk = build_hk(&w, &frame, x)?;
        quat = quat.max(hk.quaternion_defect());
        metric = metric.max(hk.metric_defect());
        for (c, which) in closed.iter_mut().zip(forms) {
            *c = c.max(closedness_defect(&w, &frame, x, which, step)?);
        }
    }
    rep.set("grid", grid);
    rep.set("points", pts.len());
    rep.set("skipped_points", skipped);
    rep.set("closedness_step", step);
    rep.set("quaternion_defect", quat);
    rep.set("metric_defect", metric);
    rep.set("closedness", serde_json::json!({ "I": closed[0], "plus": closed[1], "minus": closed[2] }));
    rep.le("quaternion relations", quat, "quaternion");
    rep.le("metric compatibility", metric, "metric");
    for (label, v) in ["Omega_I", "Omega_+", "Omega_-"].iter().zip(closed) {
        rep.le(format!("{label} closedness at step {step}"), v, "closedness");
    }
    let z0 = &pts[0].z;
    rep.set("joyce_connection_base", z0);
    match linear_joyce(&w, &frame, z0) {
        Ok(gamma) => rep.set("joyce_connection", gamma),
        Err(Error::PoleAtZeroSection(_)) => rep.set("joyce_connection", "pole-at-zero-section"),
        Err(e) => return Err(e.into()),
    }
    Ok(rep)
}

pub fn lagrangian_check(ctx: &Context, w_path: &Path, fix: &[Complex64], grid: &GridSpec) -> Result<Report> {
    let mut rep = Report::new("lagrangian-check", ctx, &[("good", 1e-10)])?;
    let d = fix.len();
    let frame = DarbouxFrame::new(d, None)?;
    let b = CoordinateLagrangian::new(frame.clone(), fix.to_vec())?;
    let w = input::load_w(w_path, frame.n())?;
    let all = grid.points(frame.n(), ctx.seed);
    let total = all.len();
    let samples: Vec<XPoint> = all
        .into_iter()
        .map(|mut x| {
            x.z[d..].copy_from_slice(fix);
            x
        })
        .filter(|x| w.is_regular(x))
        .collect();
    if samples.is_empty() {
        bail!("W has no regular point over B on the grid");
    }
    let v = good_verdict(&w, &b, &samples, rep.tol("good"))?;
    rep.set("grid", grid);
    rep.set("points", samples.len());
    rep.set("skipped_points", total - samples.len());
    rep.set("fixed_values", fix);
    rep.set("verdict", v);
    rep.set("good", v.good_by_cubic);
    rep.set("nondegenerate", nondegenerate(&b, None)?);
    rep.holds("cubic and quartic verdicts agree", v.good_by_cubic == v.good_by_quartic);
    if v.good_by_cubic && d > 0 {
        let x0 = &samples[0];
        let lifts: Vec<Vec<Complex64>> = samples.iter().take(3).map(|x| x.theta[..d].to_vec()).collect();
        if lifts.len() > 1 {
            let spread = lift_dependence(&w, &b, &x0.z[..d], &x0.theta[d..], &lifts)?;
            rep.set("normal_connection_lift_spread", spread);
            rep.le("normal connection independent of the lift", spread, "good");
        }
    }
    Ok(rep)
}

pub struct TwistorArgs<'a> {
    pub w: &'a Path,
    pub x: &'a XPoint,
    pub path: &'a [Complex64],
    pub numeric: bool,
    pub svg: bool,
}

pub fn twistor(ctx: &Context, args: &TwistorArgs) -> Result<Report> {
    let mut rep = Report::new("twistor", ctx, &[("integrator", 1e-9), ("reversibility", 1e-6), ("conservation", 1e-6)])?;
    let n = args.x.n();
    if !n.is_multiple_of(2) {
        bail!("the point needs an even number of coordinates, got {n}");
    }
    let frame = DarbouxFrame::new(n / 2, None)?;
    let w = input::load_w(args.w, n)?;
    let path = EpsilonPath::new(args.path.to_vec())?;
    let opts = TwistorOptions {
        force_numeric: args.numeric,
        ..TwistorOptions::with_tol(rep.tol("integrator"))
    };
    let traj = twistor::twistor_flow(&w, &frame, args.x, &path, &opts)?;
    let back_start = XPoint::new(args.x.z.clone(), traj.final_theta().to_vec())?;
    let back = twistor::twistor_flow(&w, &frame, &back_start, &path.reversed(), &opts)?;
    let rev = back
        .final_theta()
        .iter()
        .zip(&args.x.theta)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);

    rep.set("steps", traj.steps);
    rep.set("rejected_steps", traj.rejected);
    rep.set("closed_form", traj.closed_form);
    rep.set("final_epsilon", traj.final_epsilon());
    rep.set("final_theta", traj.final_theta());
    rep.set("reversibility_error", rev);
    rep.le("forward then backward returns to the start", rev, "reversibility");
    if !w.depends_on_theta() {
        let drift = (0..n).map(|i| conserved_coordinate_defect(&traj, &Observable::Darboux(i))).fold(0.0, f64::max);
        let scale = args.x.z.iter().map(|z| z.norm()).fold(1.0, f64::max) / path.min_distance();
        rep.set("darboux_drift", drift);
        rep.le("drift of theta - z/eps relative to |z|/|eps|", drift / scale, "conservation");
    }

    let mut csv = String::from("eps_re,eps_im");
    for i in 1..=n {
        csv.push_str(&format!(",theta{i}_re,theta{i}_im"));
    }
    csv.push('\n');
    for (e, th) in &traj.samples {
        csv.push_str(&format!("{:e},{:e}", e.re, e.im));
        for t in th {
            csv.push_str(&format!(",{:e},{:e}", t.re, t.im));
        }
        csv.push('\n');
    }
    write_file(ctx, &mut rep, "trajectory.csv", &csv)?;
    if args.svg {
        let xs: Vec<f64> = (0..traj.samples.len()).map(|k| k as f64).collect();
        let mut series = Vec::new();
        for i in 0..n {
            series.push((format!("Re theta{}", i + 1), traj.samples.iter().map(|s| s.1[i].re).collect()));
            series.push((format!("Im theta{}", i + 1), traj.samples.iter().map(|s| s.1[i].im).collect()));
        }
        write_file(ctx, &mut rep, "twistor.svg", &svg::traces("twistor line", "sample", &xs, &series))?;
    }
    Ok(rep)
}

#[derive(Serialize)]
struct FactorOut {
    angle: f64,
    pairs: Vec<(usize, usize)>,
    matrix: Vec<Vec<Complex64>>,
    eigenbasis: Vec<Vec<Complex64>>,
    unipotency_defect: f64,
    anchor_defect: f64,
}

pub fn stokes(ctx: &Context, u: &str, v: &str, with_svg: bool) -> Result<Report> {
    let mut rep = Report::new("stokes", ctx, &[("monodromy", 1e-4), ("unipotency", 1e-6), ("anchor", 1e-9)])?;
    let p = StokesProblem::new(input::complex_matrix(u)?, input::complex_matrix(v)?)?;
    let opts = match ctx.precision {
        Precision::Double => StokesOptions::default(),
        Precision::Extended => StokesOptions::extended(),
    };
    let mono = stokes::monodromy_consistency(&p, &opts)?;
    let factors: Vec<FactorOut> = mono
        .factors
        .iter()
        .map(|f| FactorOut {
            angle: f.ray.angle,
            pairs: f.ray.pairs.clone(),
            matrix: to_rows(&f.matrix),
            eigenbasis: to_rows(&f.eigenbasis),
            unipotency_defect: f.unipotency_defect(),
            anchor_defect: f.anchor_defect,
        })
        .collect();
    let uni = factors.iter().map(|f| f.unipotency_defect).fold(0.0, f64::max);
    let anchor = factors.iter().map(|f| f.anchor_defect).fold(0.0, f64::max);
    rep.set("eigenvalues", p.eigenvalues());
    rep.set("rays", stokes::stokes_rays(&p));
    rep.set("base_angle", mono.base_angle);
    rep.set("factors", &factors);
    rep.set("product", to_rows(&mono.product));
    rep.set("continuation", to_rows(&mono.continuation));
    rep.set("monodromy_defect", mono.defect);
    rep.le(format!("monodromy consistency at |eps| = {}", mono.base_radius), mono.defect, "monodromy");
    rep.le("unipotency of every factor", uni, "unipotency");
    rep.le("anchor-halving agreement", anchor, "anchor");
    if with_svg {
        let labels: Vec<(f64, String)> = mono
            .factors
            .iter()
            .map(|f| {
                let pairs: Vec<String> = f.ray.pairs.iter().map(|(i, j)| format!("{}{}", i + 1, j + 1)).collect();
                (f.ray.angle, pairs.join(" "))
            })
            .collect();
        write_file(ctx, &mut rep, "stokes.svg", &svg::rays("Stokes rays", &labels, Some(mono.base_angle)))?;
    }
    Ok(rep)
}

pub struct WallcrossArgs<'a> {
    pub rank: usize,
    pub pairing: Option<&'a str>,
    pub rays: Option<&'a Path>,
    pub sigma: Option<&'a str>,
    pub order: u32,
}

fn product(lattice: &ChargeLattice, sigma: &QuadraticRefinement, walls: &[Wall], order: u32) -> Result<TorusAutomorphism> {
    let mut acc = TorusAutomorphism::identity(lattice, order);
    for w in walls {
        acc = compose(&acc, &wallcrossing::wall_automorphism(lattice, sigma, w, order)?)?;
    }
    Ok(acc)
}

fn exact_within(defect: &BigRational, tol: f64) -> bool {
    *defect <= BigRational::from_float(tol).expect("finite tolerance")
}

pub fn wallcross(ctx: &Context, args: &WallcrossArgs) -> Result<Report> {
    let mut rep = Report::new("wallcross", ctx, &[("defect", 0.0)])?;
    let Some(rays_path) = args.rays else {
        if args.rank != 2 || args.pairing.is_some() || args.sigma.is_some() {
            bail!("without --rays only the built-in pentagon on the standard rank-2 lattice is available");
        }
        let pent = wallcrossing::pentagon_defect(args.order)?;
        let tol = rep.tol("defect");
        let ok = pent.defect.parse::<BigRational>().map(|d| exact_within(&d, tol)).unwrap_or(false);
        rep.set("order", args.order);
        rep.set("pentagon", &pent);
        rep.exact(format!("pentagon defect at N = {} ({:?})", args.order, pent.bracketing), &pent.defect, &tol.to_string(), ok);
        return Ok(rep);
    };
    let pairing = match args.pairing {
        Some(s) => input::int_matrix(s)?,
        None if args.rank == 2 => vec![vec![0, 1], vec![-1, 0]],
        None => bail!("--pairing is required for rank {}", args.rank),
    };
    if pairing.len() != args.rank {
        bail!("pairing is {}x{}, but --rank is {}", pairing.len(), pairing.len(), args.rank);
    }
    let lattice = ChargeLattice::new(pairing)?;
    let signs: Vec<i8> = match args.sigma {
        Some(s) => input::int_list(s)?
            .into_iter()
            .map(|v| i8::try_from(v).map_err(|_| anyhow!("sign {v} out of range")))
            .collect::<Result<_>>()?,
        None => vec![-1; args.rank],
    };
    let sigma = QuadraticRefinement::new(signs)?;
    let text = input::read_file(rays_path)?;
    let word = input::parse_walls(&text, args.rank).map_err(|e| anyhow!("{}: {e}", rays_path.display()))?;
    let lhs = product(&lattice, &sigma, &word.lhs, args.order)?;
    let rhs = match &word.rhs {
        Some(r) => product(&lattice, &sigma, r, args.order)?,
        None => TorusAutomorphism::identity(&lattice, args.order),
    };
    let defect = lhs.distance(&rhs)?;
    let poisson = wallcrossing::poisson_defect(&lhs);
    let tol = rep.tol("defect");
    rep.set("order", args.order);
    rep.set("lattice", &lattice);
    rep.set("sigma", sigma.basis_signs());
    rep.set("images", lhs.twisted_image_terms(&sigma));
    if word.rhs.is_some() {
        rep.set("rhs_images", rhs.twisted_image_terms(&sigma));
    }
    rep.set("identity_defect", defect.to_string());
    let against = if word.rhs.is_some() { "right-hand side" } else { "identity" };
    rep.exact(format!("product against the {against} at N = {}", args.order), &defect.to_string(), &tol.to_string(), exact_within(&defect, tol));
    let poisson = poisson.to_string();
    rep.exact("Poisson bracket preserved", &poisson, "0", poisson == "0");
    Ok(rep)
}

#[derive(Serialize)]
struct PeriodOut {
    sheet: spectral::Sheet,
    vertices: usize,
    value: Complex64,
    error: f64,
}

pub fn periods(ctx: &Context, q: &str, cycles_path: Option<&Path>) -> Result<Report> {
    let mut rep = Report::new("periods", ctx, &[("quadrature", 1e-10)])?;
    let data = SpectralData::classify(&spectral::parse_coefficients(q)?)?;
    let cycles: Vec<Cycle> = match cycles_path {
        Some(p) => spectral::parse_cycles(&input::read_file(p)?).map_err(|e| anyhow!("{}: {e}", p.display()))?,
        None => spectral::consecutive_cycles(&data)?,
    };
    if cycles.is_empty() {
        bail!("no cycles");
    }
    let tol = rep.tol("quadrature");
    let pv = spectral::periods(&data, &cycles, tol)?;
    let m = spectral::intersection_matrix(&data, &cycles)?;
    let k = cycles.len();
    let rows: Vec<Vec<i64>> = (0..k).map(|i| (0..k).map(|j| m[(i, j)]).collect()).collect();
    let deg = data.degree();
    let slice: Vec<Vec<Complex64>> = (0..deg)
        .map(|j| (0..=deg).map(|i| Complex64::new(f64::from(u8::from(i == j)), 0.0)).collect())
        .collect();
    let jac = spectral::period_jacobian_rank(&data, &cycles, &slice, tol)?;
    let out: Vec<PeriodOut> = cycles
        .iter()
        .zip(pv.values.iter().zip(&pv.errors))
        .map(|(c, (v, e))| PeriodOut {
            sheet: c.sheet(),
            vertices: c.vertices().len(),
            value: *v,
            error: *e,
        })
        .collect();
    let max_err = pv.errors.iter().copied().fold(0.0, f64::max);
    rep.set("roots", data.roots());
    rep.set("auto_cycles", cycles_path.is_none());
    rep.set("periods", out);
    rep.set("intersection_matrix", &rows);
    rep.set("jacobian_rank", &jac);
    rep.le("largest quadrature error estimate", max_err, "quadrature");
    rep.holds("intersection matrix antisymmetric", (0..k).all(|i| (0..k).all(|j| rows[i][j] == -rows[j][i])));
    rep.holds("Jacobian rank agrees at both steps", jac.step_ranks[0] == jac.step_ranks[1]);
    Ok(rep)
}

pub fn selftest(ctx: &Context) -> Result<Report> {
    let mut rep = Report::new("selftest", ctx, &[])?;
    let reports = acceptance::run_all(ctx.seed);
    for r in &reports {
        println!("{}", r.summary_line());
        rep.holds(format!("criterion {}: {}", r.id, r.title), r.ok());
        if !r.within_runtime() {
            eprintln!("criterion {} exceeded its runtime limit of {} s", r.id, r.runtime_limit_s);
        }
    }
    rep.set("criteria", &reports);
    Ok(rep)
}
