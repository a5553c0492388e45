//! Primary symmetric homoclinic point and the homoclinic invariant.

use rug::Float;

use crate::error::{Error, Result};
use crate::manifolds::{evaluate_auto, ManifoldSeries};
use crate::maps::conj_t_inv;
use crate::numerics::{det2, newton_solve, norm2, sub2, Jet1, Pt};

/// Samples per fundamental domain [s, lambda s] in the coarse scan.
pub const SCAN_PER_DOMAIN: u32 = 16;

#[derive(Clone, Debug)]
pub struct HomoclinicData {
    pub eps: Float,
    pub h: Float,
    pub q0: Pt<Float>,
    pub s_u: Float,
    pub s_s: Float,
    /// d/dt tangents, t = ln s.
    pub tangent_u: Pt<Float>,
    pub tangent_s: Pt<Float>,
    pub theta: Float,
    /// theta with d/dtau tangents, tau = t/h.
    pub theta_tau: Float,
    pub angle: Float,
    pub orbit_thetas: Vec<Float>,
    /// |S(q0) - q0|.
    pub symmetry_defect: Float,
    /// |P(s_u) - S(P(s_s))|.
    pub intersection_defect: Float,
    pub secondary_s: Option<Float>,
}

/// Gradient of the Fix(S) function 2x - 3 - eps + y^2, (x, y) = T^{-1} z, in z.
fn symmetry_gradient(z: &Pt<Float>) -> Pt<Float> {
    let q = conj_t_inv(z);
    let p = z[0].prec();
    [Float::with_val(p, &q[1] * 4u32) - 4u32, Float::with_val(p, 2)]
}

fn g_and_slope(ms: &ManifoldSeries, s: &Float) -> Result<(Float, Float)> {
    let j = evaluate_auto(ms, s)?;
    let g = ms.family.symmetry_function(&j.value);
    let gr = symmetry_gradient(&j.value);
    let p = s.prec();
    let dg = Float::with_val(p, &gr[0] * &j.derivative[0]) + Float::with_val(p, &gr[1] * &j.derivative[1]);
    Ok((g, dg))
}

/// d/dt jets on the unstable branch at s and on the stable branch S(P(s)).
fn tangents(ms: &ManifoldSeries, s: &Float) -> Result<(Jet1<Float>, Jet1<Float>)> {
    let ju = evaluate_auto(ms, s)?.scale_derivative(s);
    // gamma(t) = S(gamma(-t)) on the stable branch, hence the minus sign
    let mut js = ms.family.s_jet(&ju);
    js.derivative = [-js.derivative[0].clone(), -js.derivative[1].clone()];
    Ok((ju, js))
}

/// theta at the orbit point with unstable parameter s_u and stable parameter s_s.
fn theta_at(ms: &ManifoldSeries, s_u: &Float, s_s: &Float) -> Result<Float> {
    let (ju, _) = tangents(ms, s_u)?;
    let (_, js) = tangents(ms, s_s)?;
    Ok(det2(&ju.derivative, &js.derivative))
}

fn scan_crossings(ms: &ManifoldSeries, max_log_s: f64, first_only_domains: Option<f64>) -> Result<Vec<(Float, Float)>> {
    let p = ms.family.ctx.prec();
    let step = Float::with_val(p, &ms.family.h / SCAN_PER_DOMAIN).exp();
    let mut s = ms.s_max.clone();
    let (mut g_prev, _) = g_and_slope(ms, &s)?;
    let mut found = Vec::new();
    let mut stop_at: Option<Float> = None;
    loop {
        let s_next = Float::with_val(p, &s * &step);
        if s_next.clone().ln().to_f64() > max_log_s {
            break;
        }
        if let Some(limit) = &stop_at {
            if s_next > *limit {
                break;
            }
        }
        let (g, _) = g_and_slope(ms, &s_next)?;
        if (g_prev.is_sign_negative() != g.is_sign_negative()) && !g.is_zero() {
            found.push((s.clone(), s_next.clone()));
            if stop_at.is_none() {
                match first_only_domains {
                    Some(d) => {
                        let lim = Float::with_val(p, &ms.family.h * d).exp() * &s_next;
                        stop_at = Some(lim);
                    }
                    None => break,
                }
            }
        }
        g_prev = g;
        s = s_next;
    }
    Ok(found)
}

fn refine_crossing(ms: &ManifoldSeries, lo: &Float, hi: &Float) -> Result<Float> {
    let p = ms.family.ctx.prec();
    let (mut a, mut b) = (lo.clone(), hi.clone());
    let (ga, _) = g_and_slope(ms, &a)?;
    for _ in 0..40 {
        let m = Float::with_val(p, &a + &b) / 2u32;
        let (gm, _) = g_and_slope(ms, &m)?;
        if gm.is_sign_negative() == ga.is_sign_negative() {
            a = m;
        } else {
            b = m;
        }
    }
    let start = Float::with_val(p, &a + &b) / 2u32;
    let tol = ms.family.ctx.tol(0.95);
    let out = newton_solve(
        |x| {
            let (g, dg) = g_and_slope(ms, &x[0])?;
            Ok((vec![g], vec![vec![dg]]))
        },
        vec![start],
        &tol,
        60,
    )
    .map_err(|e| Error::NewtonFailure(format!("symmetric crossing: {e}")))?;
    Ok(out.x[0].clone())
}

/// Locate the primary symmetric homoclinic point on the scanned branch.
pub fn find_primary_homoclinic(ms: &ManifoldSeries) -> Result<HomoclinicData> {
    let fam = &ms.family;
    let p = fam.ctx.prec();
    let max_log_s = 80.0 + 40.0 / fam.h.to_f64();
    let crossings = scan_crossings(ms, max_log_s, Some(1.0))?;
    if crossings.is_empty() {
        return Err(Error::NoIntersection("no sign change of the Fix(S) function".into()));
    }
    let s = refine_crossing(ms, &crossings[0].0, &crossings[0].1)?;
    let secondary_s = match crossings.get(1) {
        Some((lo, hi)) => Some(refine_crossing(ms, lo, hi)?),
        None => None,
    };

    // 2-D polish of P(s1) = S(P(s2)) from the symmetric guess.
    let tol = fam.ctx.tol(0.8);
    let polish = newton_solve(
        |x| {
            let ju = evaluate_auto(ms, &x[0])?;
            let js = fam.s_jet(&evaluate_auto(ms, &x[1])?);
            let r = sub2(&ju.value, &js.value);
            let jac = vec![
                vec![ju.derivative[0].clone(), -js.derivative[0].clone()],
                vec![ju.derivative[1].clone(), -js.derivative[1].clone()],
            ];
            Ok((r.to_vec(), jac))
        },
        vec![s.clone(), s.clone()],
        &tol,
        20,
    )
    .map_err(|e| Error::NewtonFailure(format!("intersection: {e}")))?;
    let (s_u, s_s) = (polish.x[0].clone(), polish.x[1].clone());

    let (ju, _) = tangents(ms, &s_u)?;
    let (_, js) = tangents(ms, &s_s)?;
    let q0 = ju.value.clone();
    let intersection_defect = norm2(&sub2(&ju.value, &js.value));
    let symmetry_defect = norm2(&sub2(&fam.s(&q0), &q0));
    let theta = det2(&ju.derivative, &js.derivative);
    let h2 = Float::with_val(p, &fam.h * &fam.h);
    let theta_tau = Float::with_val(p, &theta * &h2);
    let angle = splitting_angle_of(&ju.derivative, &js.derivative)?;

    let mut orbit_thetas = Vec::with_capacity(5);
    let mut su = s_u.clone();
    let mut ss = s_s.clone();
    for _ in 0..5 {
        orbit_thetas.push(theta_at(ms, &su, &ss)?);
        su *= &fam.lambda_plus;
        ss /= &fam.lambda_plus;
    }

    Ok(HomoclinicData {
        eps: fam.eps.clone(),
        h: fam.h.clone(),
        q0,
        s_u,
        s_s,
        tangent_u: ju.derivative,
        tangent_s: js.derivative,
        theta,
        theta_tau,
        angle,
        orbit_thetas,
        symmetry_defect,
        intersection_defect,
        secondary_s,
    })
}

/// Omega(tangent_u, tangent_s).
pub fn homoclinic_invariant(hd: &HomoclinicData) -> Float {
    det2(&hd.tangent_u, &hd.tangent_s)
}

fn splitting_angle_of(u: &Pt<Float>, v: &Pt<Float>) -> Result<Float> {
    let nu = norm2(u);
    let nv = norm2(v);
    if nu.is_zero() || nv.is_zero() {
        return Err(Error::DegenerateTangent);
    }
    Ok(det2(u, v) / nu / nv)
}

/// sin alpha = theta / (|tangent_u| |tangent_s|).
pub fn splitting_angle(hd: &HomoclinicData) -> Result<Float> {
    splitting_angle_of(&hd.tangent_u, &hd.tangent_s)
}

/// Max relative deviation of the orbit thetas from theta.
pub fn orbit_spread(hd: &HomoclinicData) -> Float {
    let p = hd.theta.prec();
    let mut worst = Float::with_val(p, 0);
    for t in &hd.orbit_thetas {
        let r = Float::with_val(p, t - &hd.theta).abs() / Float::with_val(p, hd.theta.abs_ref());
        if r > worst {
            worst = r;
        }
    }
    worst
}
