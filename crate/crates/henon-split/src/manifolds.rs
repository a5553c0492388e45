//! Parametrization of the unstable manifold of the saddle w under F.

use rug::{Complex, Float};

use crate::error::{Error, Result};
use crate::maps::{f_map, MapFamily};
use crate::numerics::{norm2, sub2, Jet1, PowerSeries1D, Pt, Scalar};

/// Hard cap on the truncation order.
pub const MAX_ORDER: usize = 400;
/// Order at which the rescaled coefficients reach the precision floor.
const TARGET_ORDER: usize = 300;

#[derive(Clone, Debug)]
pub struct ManifoldSeries {
    pub family: MapFamily,
    pub base: Pt<Float>,
    pub eigenvalue: Float,
    /// Coefficients a_0 = w, a_1, ..., a_N.
    pub series: PowerSeries1D<Float>,
    pub order: usize,
    pub s_max: Float,
    /// |a_N| s_max^N plus a geometric tail estimate.
    pub tail_bound: Float,
    /// Length of a_1 relative to the unit eigenvector.
    pub scale: Float,
}

impl ManifoldSeries {
    pub fn coeff(&self, k: usize) -> Pt<Float> {
        self.series.coeff(k)
    }

    /// |a_k|^{1/k} for k = 1..N.
    pub fn decay_rates(&self) -> Vec<f64> {
        (1..=self.order)
            .map(|k| {
                let n = norm2(&self.coeff(k));
                if n.is_zero() {
                    0.0
                } else {
                    (n.ln() / k as u32).exp().to_f64()
                }
            })
            .collect()
    }
}

/// Unit lambda_+ eigenvector of DF(w) with positive first component.
pub fn unstable_direction(fam: &MapFamily) -> Result<Pt<Float>> {
    let a = fam.df_at_fixed();
    let p = fam.ctx.prec();
    let mut v = [a[0][1].clone(), Float::with_val(p, &fam.lambda_plus - &a[0][0])];
    let n = norm2(&v);
    if n.is_zero() {
        return Err(Error::DegenerateTangent);
    }
    if v[0] < 0 {
        v = [-v[0].clone(), -v[1].clone()];
    }
    Ok([v[0].clone() / &n, v[1].clone() / &n])
}

/// Order-by-order solution of F(P(s)) = P(lambda s) with a_1 = scale * unit eigenvector.
pub fn series_with_scale(fam: &MapFamily, n: usize, scale: &Float) -> Result<Vec<Pt<Float>>> {
    let p = fam.ctx.prec();
    let lambda = &fam.lambda_plus;
    let a = fam.df_at_fixed();
    let e1 = unstable_direction(fam)?;
    let w = fam.w_fixed.clone();
    let zero = || Float::with_val(p, 0);
    let c = Float::with_val(p, &fam.eps + 3u32);

    // Running coefficient arrays of Q = T^{-1} P, H(Q) and H^2(Q).
    let mut qx: Vec<Float> = Vec::with_capacity(n + 1);
    let mut qy: Vec<Float> = Vec::with_capacity(n + 1);
    let mut h1y: Vec<Float> = Vec::with_capacity(n + 1);
    let mut h2y: Vec<Float> = Vec::with_capacity(n + 1);
    let mut coeffs: Vec<Pt<Float>> = Vec::with_capacity(n + 1);

    let conv = |u: &[Float], k: usize| {
        let mut acc = Float::with_val(p, 0);
        for i in 0..=k {
            acc += Float::with_val(p, &u[i] * &u[k - i]);
        }
        acc
    };
    // Fill order k of all arrays from coefficient a_k.
    let fill = |k: usize, ak: &Pt<Float>, qx: &mut Vec<Float>, qy: &mut Vec<Float>, h1y: &mut Vec<Float>, h2y: &mut Vec<Float>| {
        let d = if k == 0 { Float::with_val(p, 1) } else { Float::with_val(p, 0) };
        let two_x = Float::with_val(p, &ak[0] * 2u32);
        qx.truncate(k);
        qy.truncate(k);
        h1y.truncate(k);
        h2y.truncate(k);
        qx.push(Float::with_val(p, &ak[1] - &two_x) + &d);
        qy.push(two_x + &d);
        let cc = if k == 0 { c.clone() } else { Float::with_val(p, 0) };
        let v = -qx[k].clone() + &cc - conv(qy, k);
        h1y.push(v);
        let v = -qy[k].clone() + &cc - conv(h1y, k);
        h2y.push(v);
    };
    let f_at = |k: usize, h1y: &[Float], h2y: &[Float]| -> Pt<Float> {
        let (d1, d2) = if k == 0 { (1u32, 2u32) } else { (0, 0) };
        [
            Float::with_val(p, &h2y[k] / 2u32) - Float::with_val(p, d1) / 2u32,
            Float::with_val(p, &h1y[k] + &h2y[k]) - d2,
        ]
    };

    fill(0, &w, &mut qx, &mut qy, &mut h1y, &mut h2y);
    coeffs.push(w);
    let a1 = [Float::with_val(p, &e1[0] * scale), Float::with_val(p, &e1[1] * scale)];
    fill(1, &a1, &mut qx, &mut qy, &mut h1y, &mut h2y);
    coeffs.push(a1);

    let mut lk = lambda.clone();
    let guard = Float::with_val(p, 1) << -((p / 2) as i32);
    for k in 2..=n {
        lk *= lambda;
        if Float::with_val(p, &lk - lambda).abs() < guard || Float::with_val(p, &lk - &fam.lambda_minus).abs() < guard {
            return Err(Error::ResonanceError(k));
        }
        fill(k, &[zero(), zero()], &mut qx, &mut qy, &mut h1y, &mut h2y);
        let nk = f_at(k, &h1y, &h2y);
        // (lambda^k I - A) a_k = N_k
        let m00 = Float::with_val(p, &lk - &a[0][0]);
        let m11 = Float::with_val(p, &lk - &a[1][1]);
        let m01 = -a[0][1].clone();
        let m10 = -a[1][0].clone();
        let det = Float::with_val(p, &m00 * &m11) - Float::with_val(p, &m01 * &m10);
        let ak = [
            (Float::with_val(p, &nk[0] * &m11) - Float::with_val(p, &m01 * &nk[1])) / &det,
            (Float::with_val(p, &m00 * &nk[1]) - Float::with_val(p, &m10 * &nk[0])) / &det,
        ];
        fill(k, &ak, &mut qx, &mut qy, &mut h1y, &mut h2y);
        coeffs.push(ak);
    }
    Ok(coeffs)
}

/// Adaptive unstable parametrization on |s| <= 1.
///
/// A pilot run with unit a_1 measures the geometric growth g of |a_k|; a_1 is then
/// rescaled so that |a_k| reaches 2^{-bits-32} near order 300, with an extra factor
/// 1/lambda^2 so that P(lambda s) is also inside the disc of fast convergence.
pub fn compute_unstable_series(fam: &MapFamily, n_min: usize) -> Result<ManifoldSeries> {
    if fam.lambda_plus <= 1 {
        return Err(Error::DomainError("lambda_+ must exceed 1".into()));
    }
    let n_min = n_min.max(20);
    let p = fam.ctx.prec();
    let bits = fam.ctx.bits;
    let one = Float::with_val(p, 1);
    let pilot_order = 80;
    let pilot = series_with_scale(fam, pilot_order, &one)?;
    let mut growth = Float::with_val(p, 0);
    for (k, a) in pilot.iter().enumerate().skip(pilot_order / 2) {
        let n = norm2(a);
        if !n.is_zero() {
            let r = (n.ln() / k as u32).exp();
            if r > growth {
                growth = r;
            }
        }
    }
    if growth.is_zero() {
        return Err(Error::IllConditioned("manifold coefficients vanish".into()));
    }
    let floor_exp = -((bits as f64 + 32.0) / TARGET_ORDER as f64);
    let lam2 = Float::with_val(p, &fam.lambda_plus * &fam.lambda_plus);
    let scale = Float::with_val(p, floor_exp).exp2() / growth / lam2;

    let coeffs = series_with_scale(fam, MAX_ORDER, &scale)?;
    // the functional equation also samples P at lambda s, so weight by lambda^k
    let target = Float::with_val(p, 1) << -(bits as i32 + 16);
    let weighted: Vec<Float> = {
        let mut lk = Float::with_val(p, 1);
        coeffs
            .iter()
            .map(|a| {
                let v = Float::with_val(p, norm2(a) * &lk);
                lk *= &fam.lambda_plus;
                v
            })
            .collect()
    };
    let mut order = None;
    for k in n_min..=MAX_ORDER - 2 {
        if (k..k + 3).all(|j| weighted[j] < target) {
            order = Some(k);
            break;
        }
    }
    let s_max = Float::with_val(p, 1);
    let n = match order {
        Some(n) => n,
        None => {
            let tail = norm2(&coeffs[MAX_ORDER]);
            return Err(Error::TruncationTooSmall(format!("|a_N| = {} at N = {MAX_ORDER}", tail.to_f64())));
        }
    };
    let an = norm2(&coeffs[n]);
    let prev = norm2(&coeffs[n - 1]);
    let ratio = if prev.is_zero() { Float::with_val(p, 0) } else { Float::with_val(p, &an / &prev) };
    let tail_bound = if ratio < 1 {
        Float::with_val(p, &an / (Float::with_val(p, 1) - &ratio))
    } else {
        an.clone()
    };
    let series = PowerSeries1D::from_pairs(&coeffs[..=n]);
    Ok(ManifoldSeries {
        family: fam.clone(),
        base: fam.w_fixed.clone(),
        eigenvalue: fam.lambda_plus.clone(),
        series,
        order: n,
        s_max,
        tail_bound,
        scale,
    })
}

/// P(s) = F^u(P(s / lambda^u)) with dP/ds.
pub fn evaluate_manifold(ms: &ManifoldSeries, s: &Float, unrolls: usize) -> Result<Jet1<Float>> {
    let p = ms.family.ctx.prec();
    let mut s0 = Float::with_val(p, s);
    for _ in 0..unrolls {
        s0 /= &ms.eigenvalue;
    }
    if Float::with_val(p, s0.abs_ref()) > ms.s_max {
        return Err(Error::DomainError(format!("|s / lambda^{unrolls}| exceeds s_max")));
    }
    let mut j = ms.series.eval_jet(&s0);
    for _ in 0..unrolls {
        j = ms.family.f_jet(&j);
        j.derivative[0] /= &ms.eigenvalue;
        j.derivative[1] /= &ms.eigenvalue;
    }
    Ok(j)
}

/// Smallest unroll count that brings s into the series disc.
pub fn unrolls_for(ms: &ManifoldSeries, s: &Float) -> usize {
    let p = ms.family.ctx.prec();
    let mut s0 = Float::with_val(p, s.abs_ref());
    let mut u = 0;
    while s0 > ms.s_max {
        s0 /= &ms.eigenvalue;
        u += 1;
    }
    u
}

pub fn evaluate_auto(ms: &ManifoldSeries, s: &Float) -> Result<Jet1<Float>> {
    evaluate_manifold(ms, s, unrolls_for(ms, s))
}

/// S(P(s)) with tangent DS dP/ds; a point of the stable manifold.
pub fn stable_manifold_point(ms: &ManifoldSeries, s: &Float, unrolls: usize) -> Result<Jet1<Float>> {
    let j = evaluate_manifold(ms, s, unrolls)?;
    Ok(ms.family.s_jet(&j))
}

/// sup over s in the disc |s| <= radius of |F(P(s)) - P(lambda s)|, sampled on the
/// boundary circle (maximum principle) and on the real segment.
pub fn functional_residual(ms: &ManifoldSeries, radius: &Float, samples: usize) -> Float {
    let p = ms.family.ctx.prec();
    let cs: Vec<Pt<Complex>> = (0..=ms.order)
        .map(|k| {
            let a = ms.coeff(k);
            [Complex::from_real(&a[0]), Complex::from_real(&a[1])]
        })
        .collect();
    let cseries = PowerSeries1D::from_pairs(&cs);
    let eps = Complex::from_real(&ms.family.eps);
    let lam = Complex::from_real(&ms.eigenvalue);
    let mut worst = Float::with_val(p, 0);
    let two_pi = Float::with_val(p, rug::float::Constant::Pi) * 2u32;
    for i in 0..samples {
        let phi = Float::with_val(p, &two_pi * i as u32) / samples as u32;
        let s = Complex::with_val(p, (Float::with_val(p, phi.cos_ref()) * radius, Float::with_val(p, phi.sin_ref()) * radius));
        let lhs = f_map(&eps, &cseries.eval_jet(&s).value);
        let rhs = cseries.eval_jet(&(s * &lam)).value;
        let r = norm2(&sub2(&lhs, &rhs));
        if r > worst {
            worst = r;
        }
    }
    for i in 0..=samples {
        let s = Float::with_val(p, radius * (2 * i as i64 - samples as i64)) / samples as u32;
        let lhs = ms.family.f(&ms.series.eval_jet(&s).value);
        let rhs = ms.series.eval_jet(&Float::with_val(p, &s * &ms.eigenvalue)).value;
        let r = norm2(&sub2(&lhs, &rhs));
        if r > worst {
            worst = r;
        }
    }
    worst
}
