//! Complex-time separatrices of F_0 near the singularity and their splitting.

use rayon::prelude::*;
use rug::ops::Pow;
use rug::{Complex, Float, Integer};

use crate::error::{Error, Result};
use crate::maps::{f0_jet, reversor_p_jet, reversor_s_jet};
use crate::numerics::{det2, norm2, solve_linear, sub2, try_integrate_segment, Jet1, PrecisionContext, Pt, Scalar};

/// Default lower bound on |Re tau| at the seed point.
pub const DEFAULT_R_SEED: f64 = 30.0;
/// Extra mantissa bits used for every inner computation.
const GUARD: u32 = 64;

fn cx(p: u32, re: f64, im: f64) -> Complex {
    Complex::with_val(p, (re, im))
}

/// a_1 = i/2, b_2 = 1/2 - i/2, b_3 = (-2 - 2i) a_2 + 1/2 (upper signs).
pub fn upper_coefficients(a2: &Complex) -> (Complex, Complex, Complex) {
    let p = a2.prec().0;
    let a1 = cx(p, 0.0, 0.5);
    let b2 = cx(p, 0.5, -0.5);
    let b3 = cx(p, -2.0, -2.0) * a2 + cx(p, 0.5, 0.0);
    (a1, b2, b3)
}

/// a_2 = b_2 / 4, the value for which P(alpha(-tau)) has the same formal expansion as alpha.
pub fn symmetric_a2(prec: u32) -> Complex {
    cx(prec, 0.125, -0.125)
}

/// Truncated ansatz (a_1/tau + a_2/tau^2, b_2/tau^2 + b_3/tau^3) with its tau-derivative.
pub fn inner_seed(tau: &Complex, a2: &Complex) -> Result<Jet1<Complex>> {
    if !(tau.real().is_finite() && *tau.real() < 0) || tau.real().clone().abs() < DEFAULT_R_SEED {
        return Err(Error::DomainError(format!("seed needs Re tau <= -{DEFAULT_R_SEED}")));
    }
    let p = tau.prec().0;
    let (a1, b2, b3) = upper_coefficients(a2);
    let u = Complex::with_val(p, tau.recip_ref());
    let u2 = Complex::with_val(p, &u * &u);
    let u3 = Complex::with_val(p, &u2 * &u);
    let u4 = Complex::with_val(p, &u3 * &u);
    let x = a1.clone() * &u + a2.clone() * &u2;
    let y = b2.clone() * &u2 + b3.clone() * &u3;
    let dx = -(a1 * &u2) - a2.clone() * &u3 * 2u32;
    let dy = -(b2 * &u3) * 2u32 - b3 * &u4 * 3u32;
    Ok(Jet1::new([x, y], [dx, dy]))
}

/// Formal solution sum_k (x_k, y_k) tau^{-k} of F_0(alpha(tau)) = alpha(tau + 1).
#[derive(Clone, Debug)]
pub struct InnerSeries {
    pub a2: Complex,
    pub x: Vec<Complex>,
    pub y: Vec<Complex>,
}

/// Coefficient arrays of T^{-1} alpha, H(.) and H^2(.), filled order by order.
struct Chain {
    qx: Vec<Complex>,
    qy: Vec<Complex>,
    h1y: Vec<Complex>,
    h2y: Vec<Complex>,
}

impl Chain {
    fn new() -> Self {
        Chain { qx: Vec::new(), qy: Vec::new(), h1y: Vec::new(), h2y: Vec::new() }
    }

    /// Order-k coefficients of F_0(alpha); orders below k must already be filled.
    fn order(&mut self, k: usize, x: &[Complex], y: &[Complex]) -> Pt<Complex> {
        let p = x[0].prec().0;
        for v in [&mut self.qx, &mut self.qy, &mut self.h1y, &mut self.h2y] {
            v.truncate(k);
        }
        let d = if k == 0 { 1 } else { 0 };
        let two_x = Complex::with_val(p, &x[k] * 2u32);
        self.qx.push(Complex::with_val(p, &y[k] - &two_x) + d);
        self.qy.push(two_x + d);
        let conv = |u: &[Complex]| {
            let mut acc = Complex::with_val(p, 0);
            for i in 0..=k {
                acc += Complex::with_val(p, &u[i] * &u[k - i]);
            }
            acc
        };
        let h1 = -self.qx[k].clone() + 3 * d - conv(&self.qy);
        self.h1y.push(h1);
        let h2 = -self.qy[k].clone() + 3 * d - conv(&self.h1y);
        self.h2y.push(h2);
        [
            Complex::with_val(p, &self.h2y[k] / 2u32) - Float::with_val(p, d) / 2u32,
            Complex::with_val(p, &self.h1y[k] + &self.h2y[k]) - 2 * d,
        ]
    }
}

/// Row n of Pascal's triangle as floats.
fn pascal_row(n: usize, p: u32) -> Vec<Float> {
    let mut row = Vec::with_capacity(n + 1);
    let mut c = Integer::from(1);
    for i in 0..=n {
        row.push(Float::with_val(p, &c));
        c *= n - i;
        c /= i + 1;
    }
    row
}

/// Order-k coefficient of c(tau + 1) for c = sum_j c_j tau^{-j}.
fn shifted(c: &[Complex], k: usize) -> Complex {
    let p = c[0].prec().0;
    let row = pascal_row(k.saturating_sub(1), p);
    let mut acc = Complex::with_val(p, 0);
    for j in 1..=k {
        // (tau + 1)^{-j} contributes (-1)^{k-j} C(k-1, k-j) tau^{-k}
        let t = Complex::with_val(p, &c[j] * &row[k - j]);
        if (k - j) % 2 == 0 {
            acc += t;
        } else {
            acc -= t;
        }
    }
    acc
}

/// Matrix of the order-m linear system for (a_m, b_{m+1}).
pub fn order_matrix(m: usize, a1: &Complex, b2: &Complex) -> [[Complex; 2]; 2] {
    let p = a1.prec().0;
    let four_a1 = Complex::with_val(p, a1 * 4u32);
    let a1sq = Complex::with_val(p, a1 * a1);
    [
        [-four_a1.clone() - m as u32, cx(p, -1.0, 0.0)],
        [Complex::with_val(p, b2 * 4u32) + a1sq * 48u32, four_a1 - (m as u32 + 1)],
    ]
}

impl InnerSeries {
    /// Coefficients through order `order` in x (order + 1 in y).
    pub fn new(a2: &Complex, order: usize) -> Result<Self> {
        let p = a2.prec().0;
        let len = order + 3;
        let mut x = vec![Complex::with_val(p, 0); len];
        let mut y = vec![Complex::with_val(p, 0); len];
        let (a1, b2, b3) = upper_coefficients(a2);
        x[1] = a1.clone();
        x[2] = a2.clone();
        y[2] = b2.clone();
        y[3] = b3;
        let mut chain = Chain::new();
        for k in 0..3 {
            chain.order(k, &x, &y);
        }
        for m in 3..=order {
            chain.order(m, &x, &y);
            let fx = chain.order(m + 1, &x, &y);
            let fy = chain.order(m + 2, &x, &y);
            let rx = shifted(&x, m + 1) - &fx[0];
            let ry = shifted(&y, m + 2) - &fy[1];
            let mm = order_matrix(m, &a1, &b2);
            let det = Complex::with_val(p, &mm[0][0] * &mm[1][1]) - Complex::with_val(p, &mm[0][1] * &mm[1][0]);
            if det.clone().abs().real().is_zero() {
                return Err(Error::ResonanceError(m));
            }
            // M (a_m, b_{m+1}) = -(rx, ry)
            let am = (Complex::with_val(p, &mm[0][1] * &ry) - Complex::with_val(p, &mm[1][1] * &rx)) / &det;
            let bm = (Complex::with_val(p, &mm[1][0] * &rx) - Complex::with_val(p, &mm[0][0] * &ry)) / &det;
            x[m] = am;
            y[m + 1] = bm;
            chain.order(m, &x, &y);
        }
        x.truncate(order + 1);
        y.truncate(order + 2);
        Ok(InnerSeries { a2: a2.clone(), x, y })
    }

    pub fn order(&self) -> usize {
        self.x.len() - 1
    }

    /// Coefficient residuals of alpha(tau + 1) - F_0(alpha(tau)) at orders 0..=upto.
    pub fn residuals(&self, upto: usize) -> Vec<Float> {
        let p = self.a2.prec().0;
        let n = upto.min(self.order());
        let mut x = self.x.clone();
        let mut y = self.y.clone();
        x.resize(n + 3, Complex::with_val(p, 0));
        y.resize(n + 3, Complex::with_val(p, 0));
        let mut chain = Chain::new();
        (0..=n)
            .map(|k| {
                let f = chain.order(k, &x, &y);
                let r = [shifted(&x, k) - &f[0], shifted(&y, k) - &f[1]];
                norm2(&r)
            })
            .collect()
    }

    /// Optimally truncated sum and its derivative; the third value is the smallest term.
    pub fn eval(&self, tau: &Complex) -> (Jet1<Complex>, Float, usize) {
        let p = tau.prec().0;
        let u = Complex::with_val(p, tau.recip_ref());
        let au = u.clone().abs().real().clone();
        // locate the smallest term
        let mut best = (Float::with_val(p, f64::INFINITY), self.order());
        let mut pw = Float::with_val(p, 1);
        for k in 1..=self.order() {
            pw *= &au;
            let t = Float::with_val(p, self.x[k].clone().abs().real() + self.y[k + 1].clone().abs().real() * &au) * &pw;
            if k >= 4 && t < best.0 {
                best = (t, k);
            }
        }
        let n = best.1;
        let mut x = Complex::with_val(p, 0);
        let mut y = Complex::with_val(p, 0);
        let mut dx = Complex::with_val(p, 0);
        let mut dy = Complex::with_val(p, 0);
        for k in (1..n).rev() {
            x = x * &u + &self.x[k];
            y = y * &u + &self.y[k + 1];
            dx = dx * &u + Complex::with_val(p, &self.x[k] * k as u32);
            dy = dy * &u + Complex::with_val(p, &self.y[k + 1] * (k as u32 + 1));
        }
        let u2 = Complex::with_val(p, &u * &u);
        let x = x * &u;
        let y = y * &u2;
        let dx = -(dx * &u2);
        let dy = -(dy * &u2 * &u);
        (Jet1::new([x, y], [dx, dy]), best.0, n)
    }
}

#[derive(Clone, Debug)]
pub struct SeedParams {
    pub a2: Complex,
    pub r_seed: f64,
    pub series_order: usize,
}

/// Sampled separatrices and their splitting on a tau-grid.
#[derive(Clone, Debug)]
pub struct InnerTrace {
    pub tau_grid: Vec<Complex>,
    pub alpha_minus: Vec<Jet1<Complex>>,
    pub alpha_plus: Vec<Pt<Complex>>,
    pub u_v: Vec<Pt<Complex>>,
    pub theta_hat: Vec<Complex>,
    pub seed_params: SeedParams,
}

#[derive(Clone, Debug)]
pub struct Difference {
    pub w: Pt<Complex>,
    /// |w(tau+1) - [F_0(alpha(tau) + w(tau)) - F_0(alpha(tau))]| / max|w|.
    pub residual: Float,
}

/// Evaluator of alpha_0^- by optimal-truncation seeding and forward F_0 iteration.
#[derive(Clone, Debug)]
pub struct InnerSolver {
    pub ctx: PrecisionContext,
    pub r_seed: f64,
    pub series: InnerSeries,
}

impl InnerSolver {
    /// `r_seed` is raised, if needed, so that the smallest series term is below 2^{-bits-16}.
    pub fn new(ctx: PrecisionContext, a2: Option<Complex>, r_seed: Option<f64>) -> Result<Self> {
        let wp = ctx.prec() + GUARD;
        let a2 = match a2 {
            Some(a) => Complex::with_val(wp, a),
            None => symmetric_a2(wp),
        };
        let needed = (wp as f64 + 16.0) * std::f64::consts::LN_2 / (2.0 * std::f64::consts::PI) + 3.0;
        let r_seed = r_seed.unwrap_or(DEFAULT_R_SEED).max(needed).ceil();
        // room for the Richardson seed at r_seed + 10 and |Im tau| up to 12
        let order = (2.0 * std::f64::consts::PI * (r_seed + 22.0)).ceil() as usize + 16;
        let series = InnerSeries::new(&a2, order)?;
        Ok(InnerSolver { ctx, r_seed, series })
    }

    fn wp(&self) -> u32 {
        self.ctx.prec() + GUARD
    }

    pub fn seed_params(&self) -> SeedParams {
        SeedParams { a2: self.series.a2.clone(), r_seed: self.r_seed, series_order: self.series.order() }
    }

    /// alpha^-(tau) seeded at tau - n with n = ceil(Re tau + r).
    pub fn alpha_minus_with(&self, tau: &Complex, r: f64) -> Result<Jet1<Complex>> {
        let wp = self.wp();
        let tau = Complex::with_val(wp, tau);
        if tau.imag().is_zero() && *tau.real() > 0 {
            return Err(Error::BranchError);
        }
        let n = (tau.real().to_f64() + r).ceil().max(0.0) as u32;
        let seed = Complex::with_val(wp, &tau - n);
        let (mut j, err, k) = self.series.eval(&seed);
        let floor = Float::with_val(wp, 1) << -(self.ctx.bits as i32 + 16);
        if err > floor || k >= self.series.order() {
            return Err(Error::SeedInsufficient(format!(
                "smallest term 2^{:.1} at order {k}",
                err.to_f64().log2()
            )));
        }
        let limit = Float::with_val(wp, 1e8);
        for _ in 0..n {
            j = f0_jet(&j);
            if norm2(&j.value) > limit || !j.value[0].finite() || !j.value[1].finite() {
                return Err(Error::Overflow(format!("alpha^- left the bounded region near tau = {}", tau.to_string_radix(10, Some(8)))));
            }
        }
        Ok(j)
    }

    /// alpha^-(tau) with the seed-depth check r -> r + 10.
    pub fn compute_alpha_minus(&self, tau: &Complex) -> Result<Jet1<Complex>> {
        let a = self.alpha_minus_with(tau, self.r_seed)?;
        let b = self.alpha_minus_with(tau, self.r_seed + 10.0)?;
        let scale = norm2(&a.value).max(&Float::with_val(self.wp(), 1));
        let tol = self.ctx.tol(0.6) * scale;
        if norm2(&sub2(&a.value, &b.value)) > tol || norm2(&sub2(&a.derivative, &b.derivative)) > tol {
            return Err(Error::SeedInsufficient("seed-depth check failed".into()));
        }
        Ok(a)
    }

    pub fn alpha_minus(&self, tau: &Complex) -> Result<Jet1<Complex>> {
        self.alpha_minus_with(tau, self.r_seed)
    }

    /// Stable partner P(alpha^-(-tau)) with its tau-derivative.
    pub fn alpha_plus(&self, tau: &Complex) -> Result<Jet1<Complex>> {
        let m = Complex::with_val(self.wp(), -tau);
        let j = reversor_p_jet(&self.alpha_minus(&m)?);
        Ok(Jet1::new(j.value, [-j.derivative[0].clone(), -j.derivative[1].clone()]))
    }

    /// S_0(alpha^-(-tau)), the reflected solution with the opposite leading sign.
    pub fn alpha_s_partner(&self, tau: &Complex) -> Result<Jet1<Complex>> {
        let m = Complex::with_val(self.wp(), -tau);
        let zero = Complex::with_val(self.wp(), 0);
        let j = reversor_s_jet(&zero, &self.alpha_minus(&m)?);
        Ok(Jet1::new(j.value, [-j.derivative[0].clone(), -j.derivative[1].clone()]))
    }

    /// w = alpha^+ - alpha^- and the residual of its exact difference equation.
    pub fn inner_difference(&self, tau: &Complex) -> Result<Difference> {
        let wp = self.wp();
        let am = self.alpha_minus(tau)?;
        let ap = self.alpha_plus(tau)?;
        let w = sub2(&ap.value, &am.value);
        let t1 = Complex::with_val(wp, tau + 1u32);
        let w1 = sub2(&self.alpha_plus(&t1)?.value, &self.alpha_minus(&t1)?.value);
        let zero = [Complex::with_val(wp, 0), Complex::with_val(wp, 0)];
        let shifted = [Complex::with_val(wp, &am.value[0] + &w[0]), Complex::with_val(wp, &am.value[1] + &w[1])];
        let f_sh = f0_jet(&Jet1::new(shifted, zero.clone())).value;
        let f_am = f0_jet(&Jet1::new(am.value.clone(), zero)).value;
        let pred = sub2(&f_sh, &f_am);
        let scale = norm2(&w).max(&norm2(&w1));
        let residual = if scale.is_zero() { scale.clone() } else { norm2(&sub2(&w1, &pred)) / scale };
        Ok(Difference { w, residual })
    }

    /// det[d alpha^-/d tau, alpha^+ - alpha^-].
    pub fn theta_hat(&self, tau: &Complex) -> Result<Complex> {
        let am = self.alpha_minus(tau)?;
        let ap = self.alpha_plus(tau)?;
        Ok(det2(&am.derivative, &sub2(&ap.value, &am.value)))
    }

    /// Theta_hat(tau+1) - Theta_hat(tau) - det M(tau), with M built from phi = alpha', psi = alpha^+ - alpha^-.
    pub fn theta_hat_step_defect(&self, tau: &Complex) -> Result<(Complex, Complex)> {
        let wp = self.wp();
        let t1 = Complex::with_val(wp, tau + 1u32);
        let am = self.alpha_minus(tau)?;
        let psi = sub2(&self.alpha_plus(tau)?.value, &am.value);
        let shifted = [Complex::with_val(wp, &am.value[0] + &psi[0]), Complex::with_val(wp, &am.value[1] + &psi[1])];
        let zero = [Complex::with_val(wp, 0), Complex::with_val(wp, 0)];
        let f_sh = f0_jet(&Jet1::new(shifted, zero)).value;
        let lin = f0_jet(&Jet1::new(am.value.clone(), psi));
        let second = sub2(&sub2(&f_sh, &lin.value), &lin.derivative);
        // det DF_0 = 1, so only the quadratic part of the step survives
        let det_m = det2(&f0_jet(&am).derivative, &second);
        let lhs = Complex::with_val(wp, self.theta_hat(&t1)? - self.theta_hat(tau)?);
        Ok((Complex::with_val(wp, &lhs - &det_m), lhs))
    }

    /// int_{tau0}^{tau0+1} e^{2 pi i s} Theta_hat(s) ds with tau0 = -1/2 - iY.
    pub fn theta1_fourier(&self, y: f64, nodes: usize) -> Result<Complex> {
        if !(3.0..=7.0).contains(&y) {
            return Err(Error::DomainError(format!("depth Y = {y} outside [3, 7]")));
        }
        let wp = self.wp();
        let a = cx(wp, -0.5, -y);
        let b = cx(wp, 0.5, -y);
        let two_pi_i = Complex::with_val(wp, (0, Float::with_val(wp, rug::float::Constant::Pi) * 2u32));
        let ctx = PrecisionContext::with_guard(self.ctx.bits, self.ctx.guard_bits + GUARD)?;
        try_integrate_segment(
            |s| {
                let e = Complex::with_val(wp, &two_pi_i * s).exp();
                Ok(e * self.theta_hat(s)?)
            },
            &a,
            &b,
            nodes,
            &ctx,
        )
    }

    /// Theta_1 at depth Y, checked against depth Y + 1 to 1% relative.
    pub fn theta1_checked(&self, y: f64, nodes: usize) -> Result<(Complex, Float)> {
        let t0 = self.theta1_fourier(y, nodes)?;
        let t1 = self.theta1_fourier(y + 1.0, nodes)?;
        let rel = Complex::with_val(self.wp(), &t0 - &t1).modulus() / t0.clone().modulus();
        if rel > 0.01 {
            return Err(Error::DepthInsufficient(format!("relative change {}", rel.to_f64())));
        }
        Ok((t0, rel))
    }

    /// Nodes tau = re + i im on vertical lines; im runs from `im_lo` to `im_hi` with `step`.
    pub fn trace(&self, re_lines: &[f64], im_lo: f64, im_hi: f64, step: f64) -> Result<InnerTrace> {
        let wp = self.wp();
        let mut grid = Vec::new();
        for re in re_lines {
            let n = ((im_hi - im_lo) / step).round() as usize;
            for i in 0..=n {
                grid.push(cx(wp, *re, im_lo + step * i as f64));
            }
        }
        let rows: Vec<Result<(Jet1<Complex>, Pt<Complex>)>> = grid
            .par_iter()
            .map(|t| Ok((self.alpha_minus(t)?, self.alpha_plus(t)?.value)))
            .collect();
        let mut alpha_minus = Vec::with_capacity(grid.len());
        let mut alpha_plus = Vec::with_capacity(grid.len());
        let mut u_v = Vec::with_capacity(grid.len());
        let mut theta_hat = Vec::with_capacity(grid.len());
        for r in rows {
            let (am, ap) = r?;
            let w = sub2(&ap, &am.value);
            theta_hat.push(det2(&am.derivative, &w));
            u_v.push(w);
            alpha_minus.push(am);
            alpha_plus.push(ap);
        }
        Ok(InnerTrace { tau_grid: grid, alpha_minus, alpha_plus, u_v, theta_hat, seed_params: self.seed_params() })
    }
}

/// Least-squares fit of sum_{k=first}^{first+terms-1} c_k tau^{-k} to samples.
pub fn fit_inverse_powers(taus: &[Complex], values: &[Complex], first: usize, terms: usize) -> Result<Vec<Complex>> {
    let p = values[0].prec().0;
    // columns scaled by r0^k for conditioning
    let r0 = taus.iter().map(|t| t.clone().abs().real().to_f64()).fold(f64::MAX, f64::min);
    let rows: Vec<Vec<Complex>> = taus
        .iter()
        .map(|t| {
            let z = Complex::with_val(p, t.recip_ref()) * r0;
            (0..terms).map(|k| Complex::with_val(p, z.clone().pow((first + k) as u32))).collect()
        })
        .collect();
    let mut ata = vec![vec![Complex::with_val(p, 0); terms]; terms];
    let mut atb = vec![Complex::with_val(p, 0); terms];
    for (row, v) in rows.iter().zip(values) {
        for i in 0..terms {
            let ci = Complex::with_val(p, row[i].conj_ref());
            for j in 0..terms {
                ata[i][j] += Complex::with_val(p, &ci * &row[j]);
            }
            atb[i] += Complex::with_val(p, &ci * v);
        }
    }
    let c = solve_linear(ata, atb).map_err(|_| Error::DegenerateDesignMatrix)?;
    Ok(c
        .into_iter()
        .enumerate()
        .map(|(k, v)| v * Float::with_val(p, r0).pow((first + k) as u32))
        .collect())
}

/// Least-squares slope of y against x.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}
