use std::path::Path;

use henon_split::diffeq::{b1_derived, b1_printed, delta_ops, residual_exponent, SecondOrderDE, WKBSolution, B1};
use henon_split::homoclinic::find_primary_homoclinic;
use henon_split::inner::InnerSolver;
use henon_split::manifolds::{compute_unstable_series, functional_residual};
use henon_split::maps::{det_matrix, f_jet, f_map, g_map, jacobian, reversor_p, reversor_s, MapFamily};
use henon_split::numerics::{norm2, sub2, PrecisionContext, Pt};
use henon_split::outer::x0y0_ode_residual;
use henon_split::sweep_fit::{
    compute_sample, error_term_from_points, fit_points, run_sweep, FitModel, Quantity, SplittingSample, SweepConfig,
    DEFAULT_H_GRID,
};
use henon_split::Error;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rug::{Complex, Float};

use crate::config::RunConfig;
use crate::output::{emit_csv, log_line, read_hex, Cell, Table};
use crate::Command;

pub enum Failure {
    Usage(String),
    Compute(Error),
    Io(std::io::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Compute(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e)
    }
}

pub struct Outcome {
    pub passed: bool,
    pub summary: String,
}

fn ok(summary: String) -> Result<Outcome, Failure> {
    Ok(Outcome { passed: true, summary })
}

pub fn run(cmd: Command, cfg: &RunConfig) -> Result<Outcome, Failure> {
    match cmd {
        Command::Fixedpoint => fixedpoint(cfg),
        Command::Manifold => manifold(cfg),
        Command::Theta => theta(cfg),
        Command::Sweep => sweep(cfg),
        Command::Fit => fit(cfg),
        Command::Inner => inner(cfg),
        Command::WkbCheck => wkb_check(cfg),
        Command::Verify => verify(cfg),
    }
}

fn verbose(cfg: &RunConfig, msg: &str) {
    if cfg.general.verbose.unwrap_or(false) {
        eprintln!("{msg}");
    }
}

fn family(cfg: &RunConfig) -> Result<MapFamily, Failure> {
    let (h, eps) = cfg.parameter().map_err(Failure::Usage)?;
    let fam = match (h, eps) {
        (Some(h), _) => {
            let ctx = match cfg.general.bits {
                Some(b) => PrecisionContext::new(b)?,
                None => PrecisionContext::for_h(h),
            };
            MapFamily::from_h(h, ctx)?
        }
        (None, Some(e)) => {
            let ctx = match cfg.general.bits {
                Some(b) => PrecisionContext::new(b)?,
                None => {
                    // policy from the f64 estimate of h
                    let f = MapFamily::from_eps_f64(e, PrecisionContext::new(128)?)?;
                    PrecisionContext::for_h(f.h.to_f64())
                }
            };
            MapFamily::from_eps_f64(e, ctx)?
        }
        _ => unreachable!(),
    };
    Ok(fam)
}

fn fl(x: &Float) -> Cell {
    Cell::Float(x.clone())
}

fn fixedpoint(cfg: &RunConfig) -> Result<Outcome, Failure> {
    let fam = family(cfg)?;
    let mut t = Table::new(&["eps", "h", "lambda_plus", "lambda_minus", "w_x", "w_y", "precision_bits"]);
    t.push(vec![
        fl(&fam.eps),
        fl(&fam.h),
        fl(&fam.lambda_plus),
        fl(&fam.lambda_minus),
        fl(&fam.w_fixed[0]),
        fl(&fam.w_fixed[1]),
        Cell::Int(fam.ctx.bits as i64),
    ]);
    let path = emit_csv(&t, &cfg.out_dir(), "fixedpoint", fam.ctx.bits)?;
    ok(format!("h={} lambda={} -> {}", fam.h.to_f64(), fam.lambda_plus.to_f64(), path.display()))
}

fn manifold(cfg: &RunConfig) -> Result<Outcome, Failure> {
    let fam = family(cfg)?;
    let bits = fam.ctx.bits;
    let ms = compute_unstable_series(&fam, 20)?;
    let res = functional_residual(&ms, &ms.s_max, 64);
    let mut t = Table::new(&["k", "a_x", "a_y"]);
    for k in 0..=ms.order {
        let a = ms.coeff(k);
        t.push(vec![Cell::Int(k as i64), fl(&a[0]), fl(&a[1])]);
    }
    let path = emit_csv(&t, &cfg.out_dir(), "manifold", bits)?;
    let log2 = if res.is_zero() { -(bits as f64) } else { res.log2().to_f64() };
    ok(format!("order={} s_max={:.6e} residual_log2={log2:.1} -> {}", ms.order, ms.s_max.to_f64(), path.display()))
}

const SWEEP_HEADER: [&str; 9] = [
    "h",
    "eps",
    "theta_sign",
    "log_abs_theta",
    "sin_alpha_log",
    "precision_bits",
    "residual_manifold",
    "residual_orbit_theta",
    "log_abs_theta_tau",
];

fn sample_table(samples: &[SplittingSample]) -> Table {
    let mut t = Table::new(&SWEEP_HEADER);
    for s in samples {
        let sa = Float::with_val(s.sin_alpha.prec(), s.sin_alpha.abs_ref()).ln();
        t.push(vec![
            fl(&s.h),
            fl(&s.eps),
            Cell::Int(if s.theta.is_sign_negative() { -1 } else { 1 }),
            Cell::Float(s.log_abs(Quantity::ThetaT)),
            Cell::Float(sa),
            Cell::Int(s.precision_bits as i64),
            Cell::F64(s.residual_report["residual_manifold"]),
            Cell::F64(s.residual_report["residual_orbit_theta"]),
            Cell::Float(s.log_abs(Quantity::ThetaTau)),
        ]);
    }
    t
}

fn min_bits(samples: &[SplittingSample]) -> u32 {
    samples.iter().map(|s| s.precision_bits).min().unwrap_or(128)
}

fn theta(cfg: &RunConfig) -> Result<Outcome, Failure> {
    let fam = family(cfg)?;
    let h = fam.h.to_f64();
    let s = compute_sample(h, cfg.general.bits)?;
    let path = emit_csv(&sample_table(std::slice::from_ref(&s)), &cfg.out_dir(), "theta", s.precision_bits)?;
    ok(format!(
        "h={h} theta={:.12e} theta_tau={:.12e} bits={} -> {}",
        s.theta.to_f64(),
        s.theta_tau.to_f64(),
        s.precision_bits,
        path.display()
    ))
}

fn do_sweep(cfg: &RunConfig) -> Result<Vec<SplittingSample>, Failure> {
    let grid = cfg.sweep.grid.clone().unwrap_or_else(|| DEFAULT_H_GRID.to_vec());
    verbose(cfg, &format!("sweep over {} values of h", grid.len()));
    let rep = run_sweep(&grid, &SweepConfig { bits: cfg.general.bits, jobs: cfg.general.jobs })?;
    for (h, reason, msg) in &rep.failures {
        log_line(&cfg.out_dir(), &format!("cmd=sweep sample h={h} status=excluded reason={reason} detail={msg:?}"));
    }
    emit_csv(&sample_table(&rep.samples), &cfg.out_dir(), "sweep", min_bits(&rep.samples))?;
    Ok(rep.samples)
}

fn sweep(cfg: &RunConfig) -> Result<Outcome, Failure> {
    let samples = do_sweep(cfg)?;
    ok(format!("{} samples -> {}", samples.len(), cfg.out_dir().join("sweep.csv").display()))
}

/// (h, log|theta_t|, log|theta_tau|) per row of a sweep hex sidecar.
pub fn sweep_points(path: &Path) -> Result<Vec<(f64, Float, Float)>, String> {
    let cells = read_hex(path)?;
    let rows = cells.iter().map(|c| c.0 + 1).max().unwrap_or(0);
    let mut out = Vec::with_capacity(rows);
    for r in 0..rows {
        let get = |name: &str| {
            cells
                .iter()
                .find(|c| c.0 == r && c.1 == name)
                .map(|c| c.2.clone())
                .ok_or_else(|| format!("row {r} lacks {name}"))
        };
        out.push((get("h")?.to_f64(), get("log_abs_theta")?, get("log_abs_theta_tau")?));
    }
    Ok(out)
}

fn model_name(m: FitModel) -> &'static str {
    match m {
        FitModel::FixedSlope => "fixed_slope",
        FitModel::FreeSlope => "free_slope",
        FitModel::FreeSlopeWithPower => "free_slope_power",
    }
}

fn fit(cfg: &RunConfig) -> Result<Outcome, Failure> {
    let dir = cfg.out_dir();
    let hex = dir.join("sweep.hex");
    if !hex.exists() {
        verbose(cfg, "no sweep.hex; running the sweep first");
        do_sweep(cfg)?;
    }
    let rows = sweep_points(&hex).map_err(|e| Failure::Io(std::io::Error::other(e)))?;
    let mut fits = Table::new(&["quantity", "model", "slope", "log_prefactor", "h_power", "rms_residual", "loo_slope_min", "loo_slope_max"]);
    let mut errs = Table::new(&["quantity", "h", "delta", "delta_limit"]);
    let mut summary = Vec::new();
    for (qname, pick) in [("theta_t", 0usize), ("theta_tau", 1)] {
        let pts: Vec<(f64, Float)> = rows.iter().map(|r| (r.0, if pick == 0 { r.1.clone() } else { r.2.clone() })).collect();
        for model in [FitModel::FixedSlope, FitModel::FreeSlope, FitModel::FreeSlopeWithPower] {
            let f = fit_points(&pts, model)?;
            let (lo, hi) = f.slope_spread.unwrap_or((f.slope, f.slope));
            fits.push(vec![
                Cell::Text(qname.into()),
                Cell::Text(model_name(model).into()),
                Cell::F64(f.slope),
                Cell::Float(f.log_prefactor_full.clone()),
                Cell::F64(f.h_power),
                Cell::F64(f.rms_residual),
                Cell::F64(lo),
                Cell::F64(hi),
            ]);
            if model == FitModel::FreeSlope {
                summary.push(format!("{qname}: slope={:.4} log_A={:.4}", f.slope, f.log_prefactor));
            }
            if model == FitModel::FixedSlope {
                let rep = error_term_from_points(&pts, &f);
                for (d, l) in rep.deltas.iter().zip(&rep.limit_deltas) {
                    errs.push(vec![Cell::Text(qname.into()), Cell::F64(d.0), Cell::F64(d.1), Cell::F64(l.1)]);
                }
            }
        }
    }
    emit_csv(&fits, &dir, "fit", 256)?;
    emit_csv(&errs, &dir, "error_term", 256)?;
    ok(summary.join("; "))
}

fn inner(cfg: &RunConfig) -> Result<Outcome, Failure> {
    let ic = &cfg.inner;
    let ctx = PrecisionContext::new(cfg.general.bits.unwrap_or(512))?;
    let solver = InnerSolver::new(ctx, None, ic.r_seed)?;
    let (lo, hi, step) = (ic.im_min.unwrap_or(-8.0), ic.im_max.unwrap_or(-3.0), ic.im_step.unwrap_or(0.25));
    if !(lo < hi && step > 0.0 && hi < 0.0) {
        return Err(Failure::Usage(format!("bad inner grid im_min={lo} im_max={hi} im_step={step}")));
    }
    verbose(cfg, &format!("inner trace, seed radius {}", solver.r_seed));
    let tr = solver.trace(&[-0.5, 0.0, 0.5], lo, hi, step)?;
    let mut t = Table::new(&[
        "tau_re", "tau_im", "x_minus_re", "x_minus_im", "y_minus_re", "y_minus_im", "u_re", "u_im", "v_re", "v_im", "theta_hat_re",
        "theta_hat_im",
    ]);
    for i in 0..tr.tau_grid.len() {
        let tau = &tr.tau_grid[i];
        let am = &tr.alpha_minus[i].value;
        let uv = &tr.u_v[i];
        let th = &tr.theta_hat[i];
        t.push(
            [tau, &am[0], &am[1], &uv[0], &uv[1], th]
                .iter()
                .flat_map(|z| [fl(z.real()), fl(z.imag())])
                .collect(),
        );
    }
    let dir = cfg.out_dir();
    emit_csv(&t, &dir, "inner", ctx.bits)?;
    let depth = ic.depth.unwrap_or(4.0);
    let nodes = ic.nodes.unwrap_or(16);
    let (th1, rel) = solver.theta1_checked(depth, nodes)?;
    let mut t1 = Table::new(&["depth", "theta1_re", "theta1_im", "theta1_abs", "depth_rel_change", "r_seed", "series_order"]);
    let sp = &tr.seed_params;
    t1.push(vec![
        Cell::F64(depth),
        fl(th1.real()),
        fl(th1.imag()),
        Cell::Float(th1.clone().abs().real().clone()),
        Cell::Float(rel.clone()),
        Cell::F64(sp.r_seed),
        Cell::Int(sp.series_order as i64),
    ]);
    emit_csv(&t1, &dir, "theta1", ctx.bits)?;
    ok(format!("{} nodes; |Theta_1|={:.10e} (depth change {:.2e})", tr.tau_grid.len(), th1.abs().real().to_f64(), rel.to_f64()))
}

fn wkb_check(cfg: &RunConfig) -> Result<Outcome, Failure> {
    let p = cfg.general.bits.unwrap_or(256);
    let de = SecondOrderDE::inner_model(p);
    let dir = Complex::with_val(p, (-0.6, -0.8));
    let mut t = Table::new(&["sign", "b1_variant", "a_re", "a_im", "r_re", "r_im", "b1_re", "b1_im", "residual_exponent"]);
    let mut lines = Vec::new();
    for sign in [1i32, -1] {
        for (name, v) in [("none", B1::None), ("printed", B1::Printed), ("derived", B1::Derived)] {
            let phi = WKBSolution::new(&de, sign, v);
            let e = residual_exponent(&de, &phi, &dir, 20.0, 200.0, 12)?;
            t.push(vec![
                Cell::Int(sign as i64),
                Cell::Text(name.into()),
                fl(phi.a.real()),
                fl(phi.a.imag()),
                fl(phi.r.real()),
                fl(phi.r.imag()),
                fl(phi.b1.real()),
                fl(phi.b1.imag()),
                Cell::F64(e),
            ]);
            lines.push(format!("{sign:+} {name}: {e:.3}"));
        }
    }
    let pb = b1_printed(&de.leading_coeffs, 1);
    let db = b1_derived(&de, 1);
    verbose(cfg, &format!("b1 printed {} derived {}", pb.to_string_radix(10, Some(8)), db.to_string_radix(10, Some(8))));
    emit_csv(&t, &cfg.out_dir(), "wkb", p)?;
    ok(format!("residual exponents {}", lines.join(", ")))
}

struct Check {
    name: &'static str,
    value: f64,
    threshold: f64,
}

fn log2_of(x: &Float) -> f64 {
    if x.is_zero() {
        -(x.prec() as f64)
    } else {
        Float::with_val(x.prec(), x.abs_ref()).log2().to_f64()
    }
}

fn max_into(worst: &mut Float, v: Float) {
    if v > *worst {
        *worst = v;
    }
}

fn verify(cfg: &RunConfig) -> Result<Outcome, Failure> {
    let bits = cfg.general.bits.unwrap_or(256);
    let p = bits;
    let mut rng = StdRng::seed_from_u64(0x5eed);
    let mut checks = Vec::new();
    let bound = -(bits as f64) + 24.0;

    // area preservation of F
    let mut worst = Float::with_val(p, 0);
    for eps in [0.01, 0.1] {
        let e = Float::with_val(p, eps);
        for _ in 0..100 {
            let z: Pt<Float> = [Float::with_val(p, rng.gen_range(-1.0..1.0)), Float::with_val(p, rng.gen_range(-1.0..1.0))];
            let d = det_matrix(&jacobian(|j| f_jet(&e, j), &z)) - 1u32;
            max_into(&mut worst, d.abs());
        }
    }
    checks.push(Check { name: "det_dF_minus_one_log2", value: log2_of(&worst), threshold: bound });

    // reversors: S, P involutions; (S F)^2 = id, (P G)^2 = id
    let mut worst = Float::with_val(p, 0);
    for eps in [0.01, 0.1] {
        let e = Float::with_val(p, eps);
        for _ in 0..100 {
            let z: Pt<Float> = [Float::with_val(p, rng.gen_range(-0.5..0.5)), Float::with_val(p, rng.gen_range(-0.5..0.5))];
            max_into(&mut worst, norm2(&sub2(&reversor_s(&e, &reversor_s(&e, &z)), &z)));
            max_into(&mut worst, norm2(&sub2(&reversor_p(&reversor_p(&z)), &z)));
            let sf = reversor_s(&e, &f_map(&e, &z));
            max_into(&mut worst, norm2(&sub2(&reversor_s(&e, &f_map(&e, &sf)), &z)));
            let pg = reversor_p(&g_map(&e, &z));
            max_into(&mut worst, norm2(&sub2(&reversor_p(&g_map(&e, &pg)), &z)));
        }
    }
    checks.push(Check { name: "reversor_defect_log2", value: log2_of(&worst), threshold: bound });

    // limit flow equation at 100 random real times
    let ctx = PrecisionContext::new(128)?;
    let mut worst = Float::with_val(128, 0);
    for _ in 0..100 {
        let t = Float::with_val(128, rng.gen_range(-20.0..20.0));
        let r = x0y0_ode_residual(&t, &ctx)?;
        max_into(&mut worst, r[0].clone().abs().max(&r[1].clone().abs()));
    }
    checks.push(Check { name: "outer_ode_residual_log10", value: log2_of(&worst) * std::f64::consts::LOG10_2, threshold: -30.0 });

    // difference-operator algebra
    let f = |t: &Complex| Complex::with_val(p, t * t) + Complex::with_val(p, t * 0.3f64).exp();
    let g = |t: &Complex| Complex::with_val(p, 1u32 / t.clone()) + Complex::with_val(p, t * t) * t;
    let fg = |t: &Complex| f(t) * g(t);
    let mut worst = Float::with_val(p, 0);
    for _ in 0..10 {
        let tau = Complex::with_val(p, (rng.gen_range(1.0..5.0), rng.gen_range(-3.0..3.0)));
        let (a, b, ab) = (delta_ops(f, &tau), delta_ops(g, &tau), delta_ops(fg, &tau));
        let scale = Float::with_val(p, 1) + ab.fwd.clone().abs().real() + ab.back.clone().abs().real();
        let defects = [
            Complex::with_val(p, &a.delta2 - &a.delta) + &a.delta_bar,
            Complex::with_val(p, &ab.delta - Complex::with_val(p, &a.delta * g(&tau))) - Complex::with_val(p, &a.fwd * &b.delta),
            Complex::with_val(p, &ab.delta_bar - Complex::with_val(p, &a.delta_bar * g(&tau))) - Complex::with_val(p, &a.back * &b.delta_bar),
            Complex::with_val(p, &a.fwd - f(&tau)) - &a.delta,
        ];
        for d in defects {
            max_into(&mut worst, d.abs().real().clone() / &scale);
        }
    }
    checks.push(Check { name: "operator_identity_log2", value: log2_of(&worst), threshold: bound });

    // unstable manifold at eps = 0.1
    let fam = MapFamily::from_eps_f64(0.1, PrecisionContext::new(bits)?)?;
    let ms = compute_unstable_series(&fam, 20)?;
    let res = functional_residual(&ms, &ms.s_max, 64);
    checks.push(Check { name: "manifold_residual_log2", value: log2_of(&res), threshold: -0.9 * bits as f64 });
    // and the homoclinic point lies on Fix(S)
    let hd = find_primary_homoclinic(&ms)?;
    checks.push(Check { name: "homoclinic_symmetry_log2", value: log2_of(&hd.symmetry_defect), threshold: -0.8 * bits as f64 });

    let mut t = Table::new(&["check", "value", "threshold", "pass"]);
    let mut all = true;
    let mut lines = Vec::new();
    for c in &checks {
        let pass = c.value <= c.threshold;
        all &= pass;
        println!("{} {}: {:.2} (threshold {:.2})", if pass { "PASS" } else { "FAIL" }, c.name, c.value, c.threshold);
        lines.push(format!("{}={}", c.name, if pass { "pass" } else { "fail" }));
        t.push(vec![Cell::Text(c.name.into()), Cell::F64(c.value), Cell::F64(c.threshold), Cell::Text(pass.to_string())]);
    }
    emit_csv(&t, &cfg.out_dir(), "verify", bits)?;
    Ok(Outcome { passed: all, summary: lines.join(" ") })
}
