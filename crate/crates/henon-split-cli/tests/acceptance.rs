//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any counted criterion fails.

use std::path::{Path, PathBuf};
use std::process::Command;

use henon_split::diffeq::{
    b1_derived, b1_printed, decompose_periodic, delta_inverse, delta_ops, residual_exponent, wronskian, SecondOrderDE,
    WKBSolution, B1,
};
use henon_split::homoclinic::{find_primary_homoclinic, orbit_spread};
use henon_split::inner::{fit_inverse_powers, ls_slope, InnerSolver};
use henon_split::manifolds::{compute_unstable_series, functional_residual};
use henon_split::maps::{det_matrix, f_jet, f_map, f_series_eval, g_map, h_from_eps, jacobian, reversor_p, reversor_s, MapFamily};
use henon_split::numerics::{norm2, sub2, PrecisionContext, Pt, Scalar};
use henon_split::outer::{solve_x1, strip_analyticity_check, x0y0_eval, x0y0_ode_residual, x1_equation_residual, X1Forcing};
use henon_split::sweep_fit::{error_term_from_points, fit_points, FitModel};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rug::ops::Pow;
use rug::{Complex, Float, Rational};

const PI2: f64 = std::f64::consts::PI * std::f64::consts::PI;
const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

type Outcome = Result<String, String>;

fn check(pass: bool, detail: String) -> Outcome {
    if pass {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn log2(x: &Float) -> f64 {
    if x.is_zero() {
        -(x.prec() as f64)
    } else {
        Float::with_val(x.prec(), x.abs_ref()).log2().to_f64()
    }
}

fn worse(w: &mut Float, v: Float) {
    if v > *w {
        *w = v;
    }
}

fn c1_identities() -> Outcome {
    let p = 256;
    let tol = -(p as f64) + 16.0;
    let mut rng = StdRng::seed_from_u64(1);
    let mut det = Float::with_val(p, 0);
    let mut inv = Float::with_val(p, 0);
    for eps in [0.01, 0.1] {
        let e = Float::with_val(p, eps);
        for _ in 0..100 {
            let z: Pt<Float> = [Float::with_val(p, rng.gen_range(-0.5..0.5)), Float::with_val(p, rng.gen_range(-0.5..0.5))];
            worse(&mut det, (det_matrix(&jacobian(|j| f_jet(&e, j), &z)) - 1u32).abs());
            worse(&mut inv, norm2(&sub2(&reversor_s(&e, &reversor_s(&e, &z)), &z)));
            worse(&mut inv, norm2(&sub2(&reversor_p(&reversor_p(&z)), &z)));
            let sf = reversor_s(&e, &f_map(&e, &z));
            worse(&mut inv, norm2(&sub2(&reversor_s(&e, &f_map(&e, &sf)), &z)));
            let pg = reversor_p(&g_map(&e, &z));
            worse(&mut inv, norm2(&sub2(&reversor_p(&g_map(&e, &pg)), &z)));
        }
    }
    let (d, i) = (log2(&det), log2(&inv));
    check(d < tol && i < tol, format!("log2 |det DF - 1| = {d:.1}, log2 involution defect = {i:.1}, bound {tol}"))
}

fn c2_f_series() -> Outcome {
    // F is exactly quadratic in eps, so the remainder is evaluated exactly
    let z = [Rational::from((1, 10)), Rational::from((1, 10))];
    let mut ratios = Vec::new();
    for d in [100i64, 1000, 10000] {
        let e = Rational::from((1, d));
        let full = f_map(&e, &z);
        let (f0, f1, f2) = (f_series_eval(0, &z), f_series_eval(1, &z), f_series_eval(2, &z));
        let mut r = Rational::new();
        for i in 0..2 {
            let approx = f0[i].clone() + f1[i].clone() * &e + f2[i].clone() * Rational::from(&e * &e);
            let d = Rational::from(&full[i] - &approx).abs();
            if d > r {
                r = d;
            }
        }
        ratios.push(r / Rational::from(&e * &e) / &e);
    }
    // floating point: the remainder is at roundoff
    let p = 256;
    let zf = [Float::with_val(p, 0.1), Float::with_val(p, 0.1)];
    let mut fl = Float::with_val(p, 0);
    for eps in [1e-2, 1e-3, 1e-4] {
        let e = Float::with_val(p, eps);
        let full = f_map(&e, &zf);
        let (f0, f1, f2) = (f_series_eval(0, &zf), f_series_eval(1, &zf), f_series_eval(2, &zf));
        let approx: Pt<Float> = [0, 1].map(|i| f0[i].clone() + Float::with_val(p, &f1[i] * &e) + Float::with_val(p, &f2[i] * &e) * &e);
        worse(&mut fl, norm2(&sub2(&full, &approx)));
    }
    let spread_ok = ratios.iter().all(|r| *r == ratios[0]) || {
        let mx = ratios.iter().max().unwrap().to_f64();
        let mn = ratios.iter().min().unwrap().to_f64();
        mn > 0.0 && mx / mn < 2.0
    };
    let ratios_s: Vec<String> = ratios.iter().map(|r| r.to_string()).collect();
    check(
        spread_ok && log2(&fl) < -(p as f64) + 16.0,
        format!("exact remainder/eps^3 = [{}], float remainder log2 = {:.1}", ratios_s.join(", "), log2(&fl)),
    )
}

fn c3_outer() -> Outcome {
    let ctx = PrecisionContext::new(128).map_err(|e| e.to_string())?;
    let mut res = Float::with_val(128, 0);
    for k in 0..1000 {
        let t = Float::with_val(128, -20.0 + 40.0 * (k as f64 + 0.5) / 1000.0);
        let r = x0y0_ode_residual(&t, &ctx).map_err(|e| e.to_string())?;
        worse(&mut res, r[0].clone().abs().max(&r[1].clone().abs()));
    }
    let mut bnd = 0.0f64;
    for t in [-20.0, 20.0] {
        let [x, y]: Pt<Float> = x0y0_eval(&ctx.real(t), &ctx).map_err(|e| e.to_string())?;
        bnd = bnd.max(x.to_f64().hypot(y.to_f64() - 0.25));
    }
    let half_pi = ctx.pi() / 2u32;
    let path: Vec<Complex> = (0..=200)
        .map(|k| Complex::with_val(128, (0, (half_pi.clone() - ctx.real(0.01)) * k as u32 / 200u32)))
        .collect();
    let pole = strip_analyticity_check(&path, &ctx).map_err(|e| e.to_string())?.x0_pole_product.to_f64();
    let r = res.to_f64();
    check(
        r < 1e-30 && bnd < 1e-8 && (pole - 0.5).abs() < 0.005,
        format!("ODE residual {r:.2e}, boundary {bnd:.2e}, |X0||t - i pi/2| = {pole:.6}"),
    )
}

fn c4_x1() -> Outcome {
    let ctx = PrecisionContext::new(128).map_err(|e| e.to_string())?;
    let a = solve_x1(20.0, 1000, X1Forcing::Printed, &ctx).map_err(|e| e.to_string())?;
    let b = solve_x1(20.0, 2000, X1Forcing::Printed, &ctx).map_err(|e| e.to_string())?;
    let res = x1_equation_residual(&b, &ctx).to_f64();
    let n = b.x.v.len();
    let ends = [&b.x.v[0], &b.x.v[n - 1]].iter().map(|v| (v.to_f64() - 0.0625).abs()).fold(0.0, f64::max);
    let dbl = Float::with_val(128, &a.x_at_zero - &b.x_at_zero).abs().to_f64();
    check(res < 1e-20 && ends < 1e-6 && dbl < 1e-12, format!("residual {res:.2e}, |X1(+-20) - 1/16| {ends:.2e}, grid doubling {dbl:.2e}"))
}

fn policy_family(eps: f64) -> Result<MapFamily, String> {
    let h = h_from_eps(&Float::with_val(128, eps)).map_err(|e| e.to_string())?.to_f64();
    MapFamily::from_eps_f64(eps, PrecisionContext::for_h(h)).map_err(|e| e.to_string())
}

fn c5_manifold() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for eps in [0.01, 0.1] {
        let fam = policy_family(eps)?;
        let ms = compute_unstable_series(&fam, 20).map_err(|e| e.to_string())?;
        let r = log2(&functional_residual(&ms, &Float::with_val(fam.ctx.prec(), 1), 64));
        let bound = -0.9 * fam.ctx.bits as f64;
        pass &= r < bound;
        parts.push(format!("eps {eps}: log2 residual {r:.1} (bound {bound:.1}, order {})", ms.order));
    }
    check(pass, parts.join("; "))
}

fn c6_orbit() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for eps in [0.01, 0.1] {
        let fam = policy_family(eps)?;
        let bits = fam.ctx.bits;
        let hd = find_primary_homoclinic(&compute_unstable_series(&fam, 20).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let spread = orbit_spread(&hd).to_f64();
        let sym = log2(&hd.symmetry_defect);
        pass &= spread < 1e-10 && sym < -0.7 * bits as f64;
        parts.push(format!("eps {eps}: spread {spread:.2e}, log2 |S q0 - q0| {sym:.1} (bound {:.1})", -0.7 * bits as f64));
    }
    check(pass, parts.join("; "))
}

struct SweepRun {
    dir_serial: PathBuf,
    dir_parallel: PathBuf,
    rows: Vec<Row>,
    _tmp: tempfile::TempDir,
}

struct Row {
    h: f64,
    sign: i32,
    bits: u32,
    log_theta: Float,
    log_theta_tau: Float,
}

fn run_cli(args: &[&str], out: &Path) -> Result<(), String> {
    let st = Command::new(env!("CARGO_BIN_EXE_henon-split"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    if !st.status.success() {
        return Err(format!("{args:?} exited {:?}: {}", st.status.code(), String::from_utf8_lossy(&st.stderr)));
    }
    Ok(())
}

fn read_rows(dir: &Path) -> Result<Vec<Row>, String> {
    let mut text = csv::Reader::from_path(dir.join("sweep.csv")).map_err(|e| e.to_string())?;
    let hdr = text.headers().map_err(|e| e.to_string())?.clone();
    let col = |n: &str| hdr.iter().position(|h| h == n).ok_or(format!("no column {n}"));
    let (ci_sign, ci_bits) = (col("theta_sign")?, col("precision_bits")?);
    let mut meta = Vec::new();
    for r in text.records() {
        let r = r.map_err(|e| e.to_string())?;
        meta.push((r[ci_sign].parse::<i32>().map_err(|e| e.to_string())?, r[ci_bits].parse::<u32>().map_err(|e| e.to_string())?));
    }
    let mut hex = csv::Reader::from_path(dir.join("sweep.hex")).map_err(|e| e.to_string())?;
    let mut cells: Vec<(usize, String, Float)> = Vec::new();
    for r in hex.records() {
        let r = r.map_err(|e| e.to_string())?;
        let prec: u32 = r[2].parse().map_err(|_| "bad precision")?;
        let v = Float::parse_radix(&r[3], 16).map_err(|e| e.to_string())?;
        cells.push((r[0].parse().map_err(|_| "bad row")?, r[1].to_string(), Float::with_val(prec, v)));
    }
    let get = |i: usize, n: &str| cells.iter().find(|c| c.0 == i && c.1 == n).map(|c| c.2.clone()).ok_or(format!("row {i} lacks {n}"));
    meta.iter()
        .enumerate()
        .map(|(i, (sign, bits))| {
            Ok(Row { h: get(i, "h")?.to_f64(), sign: *sign, bits: *bits, log_theta: get(i, "log_abs_theta")?, log_theta_tau: get(i, "log_abs_theta_tau")? })
        })
        .collect()
}

fn sweep_run() -> Result<SweepRun, String> {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir_serial = tmp.path().join("jobs1");
    let dir_parallel = tmp.path().join("jobs8");
    run_cli(&["sweep", "--jobs", "1"], &dir_serial)?;
    run_cli(&["sweep", "--jobs", "8"], &dir_parallel)?;
    let rows = read_rows(&dir_serial)?;
    Ok(SweepRun { dir_serial, dir_parallel, rows, _tmp: tmp })
}

fn points(rows: &[Row], tau: bool) -> Vec<(f64, Float)> {
    rows.iter().map(|r| (r.h, if tau { r.log_theta_tau.clone() } else { r.log_theta.clone() })).collect()
}

fn c7_slope(s: &SweepRun) -> Outcome {
    let rows = &s.rows;
    let fit = fit_points(&points(rows, true), FitModel::FreeSlope).map_err(|e| e.to_string())?;
    let fit_t = fit_points(&points(rows, false), FitModel::FreeSlope).map_err(|e| e.to_string())?;
    let rel = (fit.slope + PI2).abs() / PI2;
    // rows are sorted by h ascending: |theta| must increase along them
    let dec = rows.windows(2).all(|w| w[0].log_theta_tau < w[1].log_theta_tau && w[0].log_theta < w[1].log_theta);
    let sign = rows.iter().all(|r| r.sign == rows[0].sign);
    let bits_ok = rows.iter().all(|r| r.bits <= 4096);
    check(
        rows.len() >= 7 && rel < 0.01 && dec && sign && bits_ok,
        format!(
            "{} samples, slope {:.5} (rel. dev. {:.2e}; d/dt normalization: {:.5}), monotone {dec}, constant sign {sign}",
            rows.len(),
            fit.slope,
            rel,
            fit_t.slope
        ),
    )
}

fn c8_error_term(s: &SweepRun) -> Outcome {
    let pts = points(&s.rows, true);
    let fit = fit_points(&pts, FitModel::FixedSlope).map_err(|e| e.to_string())?;
    let rep = error_term_from_points(&pts, &fit);
    let ds: Vec<String> = rep.deltas.iter().map(|d| format!("{:.2e}", d.1)).collect();
    check(
        rep.monotone,
        format!(
            "delta(h ascending) = [{}]; monotone {}; limit-prefactor diagnostic: monotone {}, slope {:?}",
            ds.join(", "),
            rep.monotone,
            rep.limit_monotone,
            rep.limit_slope.map(|v| (v * 1e3).round() / 1e3)
        ),
    )
}

fn inner_solver() -> Result<InnerSolver, String> {
    InnerSolver::new(PrecisionContext::new(512).map_err(|e| e.to_string())?, None, None).map_err(|e| e.to_string())
}

fn c9_inner_decay(s: &InnerSolver) -> Outcome {
    let lines = [-0.5, 0.0, 0.5];
    let tr = s.trace(&lines, -8.0, -3.0, 0.25).map_err(|e| e.to_string())?;
    let per = tr.tau_grid.len() / lines.len();
    let mut slopes = Vec::new();
    let mut plateau: Vec<f64> = Vec::new();
    for l in 0..lines.len() {
        let idx = l * per..(l + 1) * per;
        let ys: Vec<f64> = tr.tau_grid[idx.clone()].iter().map(|t| -t.imag().to_f64()).collect();
        let lu: Vec<f64> = tr.u_v[idx.clone()].iter().map(|w| w[0].clone().modulus().ln().to_f64()).collect();
        slopes.push(ls_slope(&ys, &lu));
        for (th, y) in tr.theta_hat[idx].iter().zip(&ys) {
            plateau.push(th.clone().modulus().to_f64() * (TWO_PI * y).exp());
        }
    }
    let slope = slopes.iter().sum::<f64>() / slopes.len() as f64;
    let mx = plateau.iter().cloned().fold(f64::MIN, f64::max);
    let mn = plateau.iter().cloned().fold(f64::MAX, f64::min);
    let slope_ok = (slope + TWO_PI).abs() < 0.05 * TWO_PI;
    check(
        slope_ok && mx / mn < 1.5,
        format!(
            "log|u| slope {slope:.4} vs {:.4} (lines {:?}); |Theta_hat| e^(2 pi |Im tau|) in [{mn:.3}, {mx:.3}], ratio {:.4}",
            -TWO_PI,
            slopes.iter().map(|v| (v * 1e4).round() / 1e4).collect::<Vec<_>>(),
            mx / mn
        ),
    )
}

fn c10_coefficients(s: &InnerSolver) -> Outcome {
    let wp = s.ctx.prec() + 64;
    let dir = Complex::with_val(wp, (-1, -1)) / Float::with_val(wp, 2).sqrt();
    let taus: Vec<Complex> = (0..=40).map(|i| Complex::with_val(wp, &dir * (40.0 + i as f64))).collect();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for t in &taus {
        let a = s.alpha_minus(t).map_err(|e| e.to_string())?;
        xs.push(a.value[0].clone());
        ys.push(a.value[1].clone());
    }
    let cx = fit_inverse_powers(&taus, &xs, 1, 12).map_err(|e| e.to_string())?;
    let cy = fit_inverse_powers(&taus, &ys, 2, 12).map_err(|e| e.to_string())?;
    let ea = Complex::with_val(wp, &cx[0] - Complex::with_val(wp, (0, 0.5))).modulus().to_f64();
    let eb = Complex::with_val(wp, &cy[0] - Complex::with_val(wp, (0.5, -0.5))).modulus().to_f64();
    check(ea < 1e-6 && eb < 1e-6, format!("|a1 - i/2| = {ea:.2e}, |b2 - (1/2 - i/2)| = {eb:.2e}"))
}

/// (counted outcome, stretch note).
fn c11_theta1(s: &InnerSolver, sweep: Option<&SweepRun>) -> (Outcome, String) {
    let (t1, rel) = match s.theta1_checked(4.0, 16) {
        Ok(v) => v,
        Err(e) => return (Err(e.to_string()), String::new()),
    };
    let mag = t1.clone().modulus().to_f64();
    let stretch = match sweep.map(|sw| fit_points(&points(&sw.rows, true), FitModel::FreeSlopeWithPower)) {
        Some(Ok(f)) => {
            let a = f.log_prefactor.exp();
            let ratio = a / mag;
            format!(
                "stretch (not counted): model-3 prefactor {a:.2} at nu = {:.4} vs |Theta_1| -> ratio {ratio:.4} = {:.4} x 4 pi, within 10%: {}",
                f.h_power,
                ratio / (4.0 * std::f64::consts::PI),
                (ratio - 1.0).abs() < 0.1
            )
        }
        Some(Err(e)) => format!("stretch (not counted): fit failed: {e}"),
        None => "stretch (not counted): sweep unavailable".into(),
    };
    (check(rel.to_f64() < 0.01, format!("|Theta_1| = {mag:.6}, depth 4 vs 5 relative change {:.2e}", rel.to_f64())), stretch)
}

fn c12_difference_toolkit() -> Outcome {
    let p = 256u32;
    let ctx = PrecisionContext::new(p).map_err(|e| e.to_string())?;
    let c = |re: f64, im: f64| Complex::with_val(p, (re, im));
    let tol = ctx.pow2(-(p as i32) + 16);
    let mut notes = Vec::new();
    let mut pass = true;

    // operator identities
    let mut rng = StdRng::seed_from_u64(12);
    let mut worst = Float::with_val(p, 0);
    for _ in 0..10 {
        let t = c(rng.gen_range(-30.0..-2.0), rng.gen_range(-10.0..-1.0));
        let f = |z: &Complex| Complex::with_val(p, z * z) + Complex::with_val(p, z * 0.3f64).exp();
        let g = |z: &Complex| Complex::with_val(p, z.recip_ref()) + Complex::with_val(p, z * z) * z;
        let o = delta_ops(f, &t);
        let og = delta_ops(g, &t);
        let fg = delta_ops(|z| f(z) * g(z), &t);
        let d = |z: &Complex| delta_ops(f, z).delta;
        let db = |z: &Complex| delta_ops(f, z).delta_bar;
        let scale = Float::with_val(p, 1) + f(&t).modulus() * g(&t).modulus() + o.fwd.clone().modulus() * og.fwd.clone().modulus();
        let defects = [
            Complex::with_val(p, &o.delta2 - delta_ops(db, &t).delta),
            Complex::with_val(p, &o.delta2 - delta_ops(d, &t).delta_bar),
            Complex::with_val(p, &o.delta - &o.delta_bar) - &o.delta2,
            Complex::with_val(p, &fg.delta - Complex::with_val(p, &o.delta * &og.fwd)) - f(&t) * &og.delta,
            Complex::with_val(p, &fg.delta_bar - Complex::with_val(p, &o.delta_bar * &og.back)) - f(&t) * &og.delta_bar,
        ];
        for x in defects {
            worse(&mut worst, x.modulus() / &scale);
        }
    }
    let ok = worst < tol;
    pass &= ok;
    notes.push(format!("identities log2 {:.1}", log2(&worst)));

    // W(1, tau) = 1
    let w1 = Complex::with_val(p, wronskian(|_| c(1.0, 0.0), |z| z.clone(), &c(-7.0, -3.0)) - 1u32).modulus();
    pass &= w1 < tol;
    notes.push(format!("W(1,tau)-1 log2 {:.1}", log2(&w1)));

    // Wronskian evolution on lattice solutions of the model equation
    let de = SecondOrderDE::inner_model(p);
    let t0 = c(-60.0, -15.0);
    let phi = de.lattice_solution(&t0, c(1.0, 0.0), c(0.5, 0.2), 40);
    let psi = de.lattice_solution(&t0, c(0.0, 1.0), c(-0.3, 1.1), 40);
    let w = |k: usize| {
        Complex::with_val(p, &phi[k] * Complex::with_val(p, &psi[k + 1] - &psi[k])) - Complex::with_val(p, &psi[k] * Complex::with_val(p, &phi[k + 1] - &phi[k]))
    };
    let mut wev = Float::with_val(p, 0);
    for k in 1..38 {
        let (wc, _) = de.normalized(&Complex::with_val(p, &t0 + k as u32));
        let d = Complex::with_val(p, w(k) - w(k - 1)) + wc * w(k);
        worse(&mut wev, d.modulus() / w(k).modulus());
    }
    pass &= wev < tol;
    notes.push(format!("Delta_bar W + wW log2 {:.1}", log2(&wev)));

    // WKB residual exponent with the b_1 as printed
    let dir = c(-0.6, -0.8);
    let mut wkb = Vec::new();
    for sign in [1, -1] {
        for (name, v) in [("printed", B1::Printed), ("derived", B1::Derived), ("none", B1::None)] {
            let e = residual_exponent(&de, &WKBSolution::new(&de, sign, v), &dir, 20.0, 200.0, 12).map_err(|e| e.to_string())?;
            if v == B1::Printed {
                pass &= (e + 1.5).abs() < 0.3;
            }
            wkb.push(format!("{sign:+}/{name} {e:.3}"));
        }
    }
    let bp = b1_printed(&de.leading_coeffs, 1);
    let bd = b1_derived(&de, 1);
    notes.push(format!(
        "WKB exponents (target -1.5 +- 0.3 on printed b1) [{}], b1 printed {:.5}{:+.5}i derived {:.5}{:+.5}i",
        wkb.join(", "),
        bp.real().to_f64(),
        bp.imag().to_f64(),
        bd.real().to_f64(),
        bd.imag().to_f64()
    ));

    // decomposition of 2 phi_+ + 3 phi_-
    let pp = WKBSolution::new(&de, 1, B1::Derived);
    let pm = WKBSolution::new(&de, -1, B1::Derived);
    let fp = |z: &Complex| pp.eval(z).unwrap();
    let fm = |z: &Complex| pm.eval(z).unwrap();
    let u = |z: &Complex| fp(z) * 2u32 + fm(z) * 3u32;
    let (a, b) = decompose_periodic(fp, fm, u, &c(-30.0, -20.0)).map_err(|e| e.to_string())?;
    let dev = Complex::with_val(p, a - 2u32).modulus().to_f64().max(Complex::with_val(p, b - 3u32).modulus().to_f64());
    pass &= dev < 1e-20;
    notes.push(format!("decomposition dev {dev:.1e}"));

    // Delta of the inverse difference
    let g = |z: &Complex| Complex::with_val(z.prec().0, z.clone().pow(-4i32));
    let mut inv = Float::with_val(p, 0);
    for k in 0..5 {
        let tau = c(-12.0 + 5.0 * k as f64, -2.5 - k as f64);
        let u0 = delta_inverse(g, &tau, &ctx).map_err(|e| e.to_string())?;
        let u1 = delta_inverse(g, &Complex::with_val(p, &tau + 1u32), &ctx).map_err(|e| e.to_string())?;
        worse(&mut inv, (Complex::with_val(p, &u1 - &u0) - g(&tau)).modulus());
    }
    pass &= inv < tol;
    notes.push(format!("Delta(Delta^-1 g) - g log2 {:.1}", log2(&inv)));
    check(pass, notes.join("; "))
}

fn c13_determinism(s: &SweepRun) -> Outcome {
    let mut same = true;
    for f in ["sweep.csv", "sweep.hex"] {
        let a = std::fs::read(s.dir_serial.join(f)).map_err(|e| e.to_string())?;
        let b = std::fs::read(s.dir_parallel.join(f)).map_err(|e| e.to_string())?;
        same &= a == b && !a.is_empty();
    }
    check(same, format!("--jobs 1 vs --jobs 8 sweep.csv and sweep.hex byte-identical: {same}"))
}

fn main() {
    let mut failed = Vec::new();
    let mut report = |n: u32, name: &str, o: Outcome, counted: bool| {
        let (tag, detail) = match &o {
            Ok(d) => ("PASS", d.clone()),
            Err(d) => ("FAIL", d.clone()),
        };
        println!("criterion {n:>2} {name}: {tag} | {detail}");
        if o.is_err() && counted {
            failed.push(n);
        }
    };
    report(1, "algebraic identities", c1_identities(), true);
    report(2, "F-series remainder", c2_f_series(), true);
    report(3, "outer closed forms", c3_outer(), true);
    report(4, "X1 boundary value problem", c4_x1(), true);
    report(5, "manifold residual", c5_manifold(), true);
    report(6, "theta orbit invariance", c6_orbit(), true);
    let sweep = sweep_run();
    let from_sweep = |f: fn(&SweepRun) -> Outcome| match &sweep {
        Ok(s) => f(s),
        Err(e) => Err(format!("sweep failed: {e}")),
    };
    report(7, "headline slope", from_sweep(c7_slope), true);
    report(8, "error-term trend", from_sweep(c8_error_term), true);
    match inner_solver() {
        Ok(s) => {
            report(9, "inner decay", c9_inner_decay(&s), true);
            report(10, "inner coefficients", c10_coefficients(&s), true);
            let (o, stretch) = c11_theta1(&s, sweep.as_ref().ok());
            let o = o.map(|d| format!("{d}; {stretch}")).map_err(|d| format!("{d}; {stretch}"));
            report(11, "Theta_1 extraction", o, true);
        }
        Err(e) => {
            for (n, name) in [(9, "inner decay"), (10, "inner coefficients"), (11, "Theta_1 extraction")] {
                report(n, name, Err(format!("inner solver: {e}")), true);
            }
        }
    }
    report(12, "difference-equation toolkit", c12_difference_toolkit(), true);
    report(13, "determinism", from_sweep(c13_determinism), true);
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
