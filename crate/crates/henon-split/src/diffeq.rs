//! Second-order linear difference equations: shift operators, Wronskian, WKB solutions,
//! periodic decomposition and a right inverse of the forward difference.

use rug::ops::Pow;
use rug::{Complex, Float};

use crate::error::{Error, Result};
use crate::numerics::{gauss_legendre, PrecisionContext, Scalar};

/// Forward/backward differences and shifts of f at one point.
#[derive(Clone, Debug)]
pub struct DeltaOps {
    /// f(tau+1) - f(tau)
    pub delta: Complex,
    /// f(tau) - f(tau-1)
    pub delta_bar: Complex,
    /// f(tau+1) + f(tau-1) - 2 f(tau)
    pub delta2: Complex,
    /// f(tau+1)
    pub fwd: Complex,
    /// f(tau-1)
    pub back: Complex,
}

pub fn delta_ops<F: Fn(&Complex) -> Complex>(f: F, tau: &Complex) -> DeltaOps {
    let p = tau.prec().0;
    let f0 = f(tau);
    let fwd = f(&Complex::with_val(p, tau + 1u32));
    let back = f(&Complex::with_val(p, tau - 1u32));
    DeltaOps {
        delta: Complex::with_val(p, &fwd - &f0),
        delta_bar: Complex::with_val(p, &f0 - &back),
        delta2: Complex::with_val(p, &fwd + &back) - f0 * 2u32,
        fwd,
        back,
    }
}

/// W(f, g) = f Delta g - g Delta f.
pub fn wronskian<F, G>(f: F, g: G, tau: &Complex) -> Complex
where
    F: Fn(&Complex) -> Complex,
    G: Fn(&Complex) -> Complex,
{
    let p = tau.prec().0;
    let t1 = Complex::with_val(p, tau + 1u32);
    let (f0, g0) = (f(tau), g(tau));
    let df = Complex::with_val(p, f(&t1) - &f0);
    let dg = Complex::with_val(p, g(&t1) - &g0);
    f0 * dg - g0 * df
}

type Coef = Box<dyn Fn(&Complex) -> Complex + Send + Sync>;

/// u(tau+1)(1 + f_{+1}) + u(tau-1)(1 + f_{-1}) + u(tau)(-2 + f_0) = 0.
pub struct SecondOrderDE {
    pub f_plus1: Coef,
    pub f_0: Coef,
    pub f_minus1: Coef,
    /// (c^{-1}, c^0, c^1) with f_{+-1} ~ c^{+-1}/tau and f_0 ~ -2 c^0/tau.
    pub leading_coeffs: [Complex; 3],
}

impl std::fmt::Debug for SecondOrderDE {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SecondOrderDE").field("leading_coeffs", &self.leading_coeffs).finish()
    }
}

impl SecondOrderDE {
    /// Model equation with f_i exactly of the form c/tau.
    pub fn model(c_minus1: Complex, c0: Complex, c1: Complex) -> Self {
        let (a, b, c) = (c1.clone(), c0.clone(), c_minus1.clone());
        SecondOrderDE {
            f_plus1: Box::new(move |t| Complex::with_val(t.prec().0, &a / t)),
            f_0: Box::new(move |t| Complex::with_val(t.prec().0, &b / t) * -2i32),
            f_minus1: Box::new(move |t| Complex::with_val(t.prec().0, &c / t)),
            leading_coeffs: [c_minus1, c0, c1],
        }
    }

    /// c^{-1} = -3i, c^0 = 4i, c^1 = -i.
    pub fn inner_model(prec: u32) -> Self {
        let c = |im: f64| Complex::with_val(prec, (0, im));
        Self::model(c(-3.0), c(4.0), c(-1.0))
    }

    pub fn residual<U: Fn(&Complex) -> Complex>(&self, u: U, tau: &Complex) -> Complex {
        let p = tau.prec().0;
        let o = delta_ops(&u, tau);
        let u0 = u(tau);
        o.fwd * ((self.f_plus1)(tau) + 1u32) + o.back * ((self.f_minus1)(tau) + 1u32) + u0 * ((self.f_0)(tau) - 2u32) + Complex::with_val(p, 0)
    }

    /// (w, z) of the normalized form Delta^2 u + w Delta u + z u = 0.
    pub fn normalized(&self, tau: &Complex) -> (Complex, Complex) {
        let (fp, f0, fm) = ((self.f_plus1)(tau), (self.f_0)(tau), (self.f_minus1)(tau));
        let den = Complex::with_val(tau.prec().0, &fm + 1u32);
        let w = Complex::with_val(tau.prec().0, &fp - &fm) / &den;
        let z = (fp + f0 + fm) / den;
        (w, z)
    }

    /// Exact lattice solution u(tau0 + k), k = 0..n, from u(tau0), u(tau0 + 1).
    pub fn lattice_solution(&self, tau0: &Complex, u0: Complex, u1: Complex, n: usize) -> Vec<Complex> {
        let p = tau0.prec().0;
        let mut u = vec![u0, u1];
        for k in 1..n {
            let t = Complex::with_val(p, tau0 + k as u32);
            let num = Complex::with_val(p, &u[k - 1] * ((self.f_minus1)(&t) + 1u32)) + Complex::with_val(p, &u[k] * ((self.f_0)(&t) - 2u32));
            u.push(-num / ((self.f_plus1)(&t) + 1u32));
        }
        u
    }

    /// Recovers (c^{-1}, c^0, c^1) by a least-squares fit of tau f_i(tau) = c + d/tau on a ray.
    pub fn fit_leading(&self, dir: &Complex, r_lo: f64, r_hi: f64, samples: usize) -> [Complex; 3] {
        let p = dir.prec().0;
        let taus: Vec<Complex> = (0..samples)
            .map(|i| Complex::with_val(p, dir * (r_lo + (r_hi - r_lo) * i as f64 / (samples - 1) as f64)))
            .collect();
        let fit = |f: &Coef, scale: i32| {
            // two-term fit in 1/tau, solved through the normal equations
            let mut m = [[Complex::with_val(p, 0), Complex::with_val(p, 0)], [Complex::with_val(p, 0), Complex::with_val(p, 0)]];
            let mut rhs = [Complex::with_val(p, 0), Complex::with_val(p, 0)];
            for t in &taus {
                let v = Complex::with_val(p, f(t) * t) / scale;
                let row = [Complex::with_val(p, 1), Complex::with_val(p, t.recip_ref())];
                for i in 0..2 {
                    let ci = Complex::with_val(p, row[i].conj_ref());
                    for j in 0..2 {
                        m[i][j] += Complex::with_val(p, &ci * &row[j]);
                    }
                    rhs[i] += Complex::with_val(p, &ci * &v);
                }
            }
            let det = Complex::with_val(p, &m[0][0] * &m[1][1]) - Complex::with_val(p, &m[0][1] * &m[1][0]);
            (Complex::with_val(p, &m[1][1] * &rhs[0]) - Complex::with_val(p, &m[0][1] * &rhs[1])) / det
        };
        [fit(&self.f_minus1, 1), fit(&self.f_0, -2), fit(&self.f_plus1, 1)]
    }

    /// a = 2 sqrt(2 c^0 - c^{-1} - c^1).
    pub fn wkb_a(&self) -> Complex {
        let [cm, c0, cp] = &self.leading_coeffs;
        let p = c0.prec().0;
        (Complex::with_val(p, c0 * 2u32) - cm - cp).sqrt() * 2u32
    }

    /// r = (c^{-1} - c^1)/2 + 1/4.
    pub fn wkb_r(&self) -> Complex {
        let [cm, _, cp] = &self.leading_coeffs;
        let p = cm.prec().0;
        Complex::with_val(p, cm - cp) / 2u32 + Float::with_val(p, 0.25)
    }
}

/// Which b_1 coefficient to attach to the WKB solution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum B1 {
    /// No correction term.
    None,
    /// The closed form as printed with the prefactor -+1/48.
    Printed,
    /// Obtained by cancelling the tau^{-2} term of the residual.
    Derived,
}

/// b_1^{+-} with the printed prefactor -+1/48 (sign = +1 or -1).
pub fn b1_printed(c: &[Complex; 3], sign: i32) -> Complex {
    let [cm, c0, cp] = c;
    let p = c0.prec().0;
    let sq = |z: &Complex| Complex::with_val(p, z * z);
    let num = sq(cm) * 32u32 - Complex::with_val(p, cm - 3u32) * c0 * 32u32 - sq(c0) * 16u32
        + (Complex::with_val(p, cm * 2u32) - Complex::with_val(p, c0 * 4u32) - 9u32) * cp * 8u32
        + sq(cp) * 32u32
        - Complex::with_val(p, cm * 24u32)
        + 9u32;
    let den = (Complex::with_val(p, c0 * 2u32) - cm - cp).sqrt();
    -(num / den) / 48i32 * sign
}

/// b_1 for exponent sign*a: (a^2(a^2 + 24 c^1 + 24 c^{-1}) + 192 (c^1 - c^{-1}) r + 192 r^2 - 192 r) / (96 a).
pub fn b1_derived(de: &SecondOrderDE, sign: i32) -> Complex {
    let [cm, _, cp] = &de.leading_coeffs;
    let p = cm.prec().0;
    let a = de.wkb_a() * sign;
    let r = de.wkb_r();
    let a2 = Complex::with_val(p, &a * &a);
    let s = Complex::with_val(p, cm + cp) * 24u32 + &a2;
    let num = a2 * s + Complex::with_val(p, cp - cm) * &r * 192u32 + Complex::with_val(p, &r * &r) * 192u32 - r * 192u32;
    num / (a * 96u32)
}

/// sqrt(tau) with the cut along the positive reals, principal on the lower half-plane.
pub fn sqrt_cut(tau: &Complex) -> Result<Complex> {
    if tau.imag().is_zero() && *tau.real() >= 0 {
        return Err(Error::BranchError);
    }
    let p = tau.prec().0;
    let s = Complex::with_val(p, -tau).sqrt();
    Ok(s * Complex::with_val(p, (0, -1)))
}

/// phi(tau) = exp(sign a tau^{1/2}) tau^r (1 + b_1 / tau^{1/2}).
#[derive(Clone, Debug)]
pub struct WKBSolution {
    pub sign: i32,
    pub a: Complex,
    pub r: Complex,
    pub b1: Complex,
}

impl WKBSolution {
    pub fn new(de: &SecondOrderDE, sign: i32, b1: B1) -> Self {
        let a = de.wkb_a();
        let p = a.prec().0;
        let b = match b1 {
            B1::None => Complex::with_val(p, 0),
            B1::Printed => b1_printed(&de.leading_coeffs, sign),
            B1::Derived => b1_derived(de, sign),
        };
        WKBSolution { sign, a, r: de.wkb_r(), b1: b }
    }

    pub fn eval(&self, tau: &Complex) -> Result<Complex> {
        if tau.clone().abs().real().to_f64() < 10.0 {
            return Err(Error::DomainError("WKB solution needs |tau| >= 10".into()));
        }
        let p = tau.prec().0;
        let s = sqrt_cut(tau)?;
        let log_tau = Complex::with_val(p, s.ln_ref()) * 2u32;
        let e = Complex::with_val(p, &self.a * &s) * self.sign + Complex::with_val(p, &self.r * &log_tau);
        Ok(e.exp() * (Complex::with_val(p, &self.b1 / &s) + 1u32))
    }
}

/// Least-squares slope of log|residual/phi| against log|tau| on the ray tau = t dir.
pub fn residual_exponent(de: &SecondOrderDE, phi: &WKBSolution, dir: &Complex, r_lo: f64, r_hi: f64, samples: usize) -> Result<f64> {
    let p = dir.prec().0;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for i in 0..samples {
        let t = r_lo * (r_hi / r_lo).powf(i as f64 / (samples - 1) as f64);
        let tau = Complex::with_val(p, dir * t);
        let f = |z: &Complex| phi.eval(z).unwrap_or_else(|_| Complex::with_val(p, f64::NAN));
        let res = de.residual(f, &tau);
        let v = phi.eval(&tau)?;
        xs.push(t.ln());
        ys.push((res.modulus() / v.modulus()).to_f64().ln());
    }
    if ys.iter().any(|y| !y.is_finite()) {
        return Err(Error::BranchError);
    }
    Ok(crate::inner::ls_slope(&xs, &ys))
}

/// (alpha_+, alpha_-) = (W(u, phi_-), -W(u, phi_+)) / W(phi_+, phi_-), so that u = alpha_+ phi_+ + alpha_- phi_-.
pub fn decompose_periodic<P, M, U>(phi_plus: P, phi_minus: M, u: U, tau: &Complex) -> Result<(Complex, Complex)>
where
    P: Fn(&Complex) -> Complex,
    M: Fn(&Complex) -> Complex,
    U: Fn(&Complex) -> Complex,
{
    let w = wronskian(&phi_plus, &phi_minus, tau);
    let scale = phi_plus(tau).modulus() * phi_minus(tau).modulus();
    if w.clone().modulus() <= scale * (Float::with_val(tau.prec().0, 1) >> (tau.prec().0 - 16)) {
        return Err(Error::DegenerateWronskian);
    }
    let ap = wronskian(&u, &phi_minus, tau) / &w;
    let am = -(wronskian(&u, &phi_plus, tau) / w);
    Ok((ap, am))
}

/// max |alpha_+-(tau+1) - alpha_+-(tau)| relative to max |alpha_+-(tau)|.
pub fn periodicity_residual<P, M, U>(phi_plus: P, phi_minus: M, u: U, tau: &Complex) -> Result<Float>
where
    P: Fn(&Complex) -> Complex,
    M: Fn(&Complex) -> Complex,
    U: Fn(&Complex) -> Complex,
{
    let p = tau.prec().0;
    let (a0, b0) = decompose_periodic(&phi_plus, &phi_minus, &u, tau)?;
    let (a1, b1) = decompose_periodic(&phi_plus, &phi_minus, &u, &Complex::with_val(p, tau + 1u32))?;
    let d = Complex::with_val(p, &a1 - &a0).modulus().max(&Complex::with_val(p, &b1 - &b0).modulus());
    Ok(d / a0.modulus().max(&b0.modulus()))
}

/// u with u(tau+1) - u(tau) = g(tau), u(tau) = -sum_{k>=0} g(tau + k).
///
/// Geometrically decaying g is summed directly with a geometric tail estimate; slower decay
/// switches to an Euler-Maclaurin tail at a shifted point tau + N with |tau + N| large.
pub fn delta_inverse<G: Fn(&Complex) -> Complex>(g: G, tau: &Complex, ctx: &PrecisionContext) -> Result<Complex> {
    let wp = ctx.prec() + 32;
    let tau = Complex::with_val(wp, tau);
    let tol = Float::with_val(wp, 1) >> (ctx.bits + 8);
    let mut acc = Complex::with_val(wp, 0);
    let mut prev = g(&tau);
    let mut peak = prev.clone().modulus();
    acc += &prev;
    for k in 1..4096u32 {
        let cur = g(&Complex::with_val(wp, &tau + k));
        let m = cur.clone().modulus();
        if !m.is_finite() {
            return Err(Error::TailDivergence(format!("non-finite term at k = {k}")));
        }
        if m.is_zero() && prev.clone().modulus().is_zero() {
            return Ok(-acc);
        }
        let q = Complex::with_val(wp, &cur / &prev);
        let qm = q.clone().modulus();
        acc += &cur;
        peak = peak.max(&m);
        if m <= Float::with_val(wp, &tol * &peak) && qm < 1 {
            // remaining terms ~ cur q / (1 - q)
            let tail = Complex::with_val(wp, &cur * &q) / (Complex::with_val(wp, 1) - q);
            return Ok(-(acc + tail));
        }
        if k >= 64 && qm > 0.9 {
            if qm > 1.0 + 1e-3 && m > peak.clone() * 0.5 {
                return Err(Error::TailDivergence("terms do not decay".into()));
            }
            return em_delta_inverse(&g, &tau, ctx);
        }
        prev = cur;
    }
    Err(Error::TailDivergence("no convergence within 4096 terms".into()))
}

/// Euler-Maclaurin variant: direct sum to sigma = tau + N, tail from Taylor data at sigma.
fn em_delta_inverse<G: Fn(&Complex) -> Complex>(g: &G, tau: &Complex, ctx: &PrecisionContext) -> Result<Complex> {
    let wp = ctx.prec() + 32;
    let pi = Float::with_val(wp, rug::float::Constant::Pi);
    let r_em = (ctx.bits as f64 + 24.0) * std::f64::consts::LN_2 / (2.0 * std::f64::consts::PI) + 6.0;
    // same sigma for tau and tau + 1, so differences telescope exactly
    let n = (r_em - tau.real().to_f64()).ceil().max(0.0) as u32;
    let sigma = Complex::with_val(wp, tau + n);
    if sigma.clone().abs().real().to_f64() < r_em {
        return Err(Error::TailDivergence("shifted point too close to the origin".into()));
    }
    let mut acc = Complex::with_val(wp, 0);
    for k in 0..n {
        acc += g(&Complex::with_val(wp, tau + k));
    }
    let tail = em_tail(g, &sigma, ctx, &pi)?;
    Ok(-(acc + tail))
}

/// sum_{k>=0} g(sigma + k) by Euler-Maclaurin.
fn em_tail<G: Fn(&Complex) -> Complex>(g: &G, sigma: &Complex, ctx: &PrecisionContext, pi: &Float) -> Result<Complex> {
    let wp = ctx.prec() + 32;
    let tol = Float::with_val(wp, 1) >> (ctx.bits + 16);
    let rad = Float::with_val(wp, sigma.clone().abs().real()) / 2u32;
    let m_pts = (ctx.bits + 48) as usize;
    let n_max = ((2.0 * std::f64::consts::PI * rad.to_f64() * 2.0) as usize).min(m_pts - 8);
    // Taylor coefficients c_n on the circle |s - sigma| = rad, trapezoid rule
    let two_pi = Float::with_val(wp, pi * 2u32);
    let samples: Vec<(Complex, Complex)> = (0..m_pts)
        .map(|j| {
            let ang = Float::with_val(wp, &two_pi * j as u32) / m_pts as u32;
            let w = Complex::with_val(wp, (ang.clone().cos(), ang.sin()));
            let val = g(&(Complex::with_val(wp, &w * &rad) + sigma));
            (val, w.conj())
        })
        .collect();
    let mut pw: Vec<Complex> = vec![Complex::with_val(wp, 1); m_pts];
    let mut coeffs = Vec::with_capacity(n_max + 1);
    let mut rad_pow = Float::with_val(wp, 1);
    for _ in 0..=n_max {
        let mut s = Complex::with_val(wp, 0);
        for (j, (val, wc)) in samples.iter().enumerate() {
            s += Complex::with_val(wp, val * &pw[j]);
            pw[j] *= wc;
        }
        coeffs.push(s / m_pts as u32 / &rad_pow);
        rad_pow *= &rad;
    }
    let g0 = coeffs[0].clone();
    let mut sum = Complex::with_val(wp, &g0 / 2u32) + em_integral(g, sigma, ctx)?;
    // B_{2j}/(2j)! = (-1)^{j+1} 2 zeta(2j) / (2 pi)^{2j}
    let mut last = Float::with_val(wp, f64::INFINITY);
    let mut j = 1usize;
    let scale = g0.clone().modulus().max(&tol);
    loop {
        if 2 * j - 1 > n_max {
            return Err(Error::TailDivergence("Euler-Maclaurin terms exhausted".into()));
        }
        let z = Float::with_val(wp, Float::zeta_u(2 * j as u32));
        let fact = Float::with_val(wp, Float::factorial(2 * j as u32 - 1));
        let b = z * 2u32 * fact / Float::with_val(wp, &two_pi).pow(2 * j as u32);
        let term = Complex::with_val(wp, &coeffs[2 * j - 1] * &b);
        let m = term.clone().modulus();
        // -sum B_{2j}/(2j)! g^{(2j-1)}, sign (-1)^{j+1} folded in
        if j % 2 == 1 {
            sum -= &term;
        } else {
            sum += &term;
        }
        if m <= Float::with_val(wp, &tol * &scale) {
            return Ok(sum);
        }
        if m > last && j > 4 {
            return Err(Error::TailDivergence("Euler-Maclaurin terms grow before reaching tolerance".into()));
        }
        last = m;
        j += 1;
    }
}

/// int_sigma^{sigma + infinity} g via s = sigma + L x/(1-x) and Gauss-Legendre with node doubling.
fn em_integral<G: Fn(&Complex) -> Complex>(g: &G, sigma: &Complex, ctx: &PrecisionContext) -> Result<Complex> {
    let wp = ctx.prec() + 32;
    let len = Float::with_val(wp, sigma.clone().abs().real());
    let tol = Float::with_val(wp, 1) >> (ctx.bits + 16);
    let quad = |n: usize| {
        let (x, w) = gauss_legendre(n, wp);
        let mut acc = Complex::with_val(wp, 0);
        for (xi, wi) in x.iter().zip(&w) {
            // map [-1, 1] to [0, 1)
            let t = Float::with_val(wp, xi + 1u32) / 2u32;
            let one_m = Float::with_val(wp, 1u32 - &t);
            let s = Complex::with_val(wp, sigma + Float::with_val(wp, &len * &t) / &one_m);
            let jac = Float::with_val(wp, &len / &one_m) / &one_m;
            acc += g(&s) * jac * wi;
        }
        acc / 2u32
    };
    let mut n = 64;
    let mut prev = quad(n);
    for _ in 0..4 {
        n *= 2;
        let next = quad(n);
        let diff = Complex::with_val(wp, &next - &prev).modulus();
        if diff <= Float::with_val(wp, &tol * next.clone().modulus().max(&tol)) {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::TailDivergence(format!("tail integral unresolved at {n} nodes")))
}
