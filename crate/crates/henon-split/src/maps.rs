//! The Henon family, its conjugates and reversors.

use rug::Float;

use crate::error::{Error, Result};
use crate::numerics::{Jet1, PrecisionContext, Pt, Ring};

pub type Matrix2 = [[Float; 2]; 2];

/// H(x, y) = (y, -x + 3 + eps - y^2).
pub fn henon<R: Ring>(eps: &R, z: &Pt<R>) -> Pt<R> {
    let y2 = z[1].clone() * &z[1];
    [z[1].clone(), -z[0].clone() + eps.konst(3, 1) + eps - y2]
}

pub fn henon_jet<R: Ring>(eps: &R, j: &Jet1<R>) -> Jet1<R> {
    let (z, d) = (&j.value, &j.derivative);
    let dy = -d[0].clone() - z[1].clone() * &d[1] * eps.konst(2, 1);
    Jet1 { value: henon(eps, z), derivative: [d[1].clone(), dy] }
}

/// T(x, y) = (y/2 - 1/2, x + y - 2).
pub fn conj_t<R: Ring>(z: &Pt<R>) -> Pt<R> {
    let half = z[0].konst(1, 2);
    [z[1].clone() * &half - &half, z[0].clone() + &z[1] - z[0].konst(2, 1)]
}

/// T^{-1}(u, v) = (v - 2u + 1, 2u + 1).
pub fn conj_t_inv<R: Ring>(z: &Pt<R>) -> Pt<R> {
    let two_u = z[0].clone() * z[0].konst(2, 1);
    [z[1].clone() - &two_u + z[0].konst(1, 1), two_u + z[0].konst(1, 1)]
}

fn t_tangent<R: Ring>(d: &Pt<R>) -> Pt<R> {
    [d[1].clone() * d[1].konst(1, 2), d[0].clone() + &d[1]]
}

fn t_inv_tangent<R: Ring>(d: &Pt<R>) -> Pt<R> {
    let two = d[0].clone() * d[0].konst(2, 1);
    [d[1].clone() - &two, two]
}

/// F = T o H^2 o T^{-1}.
pub fn f_map<R: Ring>(eps: &R, z: &Pt<R>) -> Pt<R> {
    let q = conj_t_inv(z);
    conj_t(&henon(eps, &henon(eps, &q)))
}

/// G = T o H o T^{-1}.
pub fn g_map<R: Ring>(eps: &R, z: &Pt<R>) -> Pt<R> {
    conj_t(&henon(eps, &conj_t_inv(z)))
}

pub fn f_jet<R: Ring>(eps: &R, j: &Jet1<R>) -> Jet1<R> {
    let q = Jet1 { value: conj_t_inv(&j.value), derivative: t_inv_tangent(&j.derivative) };
    let q = henon_jet(eps, &henon_jet(eps, &q));
    Jet1 { value: conj_t(&q.value), derivative: t_tangent(&q.derivative) }
}

pub fn g_jet<R: Ring>(eps: &R, j: &Jet1<R>) -> Jet1<R> {
    let q = Jet1 { value: conj_t_inv(&j.value), derivative: t_inv_tangent(&j.derivative) };
    let q = henon_jet(eps, &q);
    Jet1 { value: conj_t(&q.value), derivative: t_tangent(&q.derivative) }
}

/// Jacobian of a planar map obtained by pushing the two unit tangents.
pub fn jacobian<R: Ring, M: Fn(&Jet1<R>) -> Jet1<R>>(map: M, z: &Pt<R>) -> [[R; 2]; 2] {
    let one = z[0].konst(1, 1);
    let zero = z[0].konst(0, 1);
    let c0 = map(&Jet1 { value: z.clone(), derivative: [one.clone(), zero.clone()] }).derivative;
    let c1 = map(&Jet1 { value: z.clone(), derivative: [zero, one] }).derivative;
    [[c0[0].clone(), c1[0].clone()], [c0[1].clone(), c1[1].clone()]]
}

pub fn det_matrix<R: Ring>(m: &[[R; 2]; 2]) -> R {
    m[0][0].clone() * &m[1][1] - m[0][1].clone() * &m[1][0]
}

/// Explicit expansion terms F_0, F_1, F_2 of F in powers of eps.
pub fn f_series_eval<R: Ring>(order_term: usize, z: &Pt<R>) -> Pt<R> {
    let (x, y) = (&z[0], &z[1]);
    let k = |n: i64, d: i64| x.konst(n, d);
    let x2 = x.clone() * x;
    let xy = x.clone() * y;
    let y2 = y.clone() * y;
    match order_term {
        0 => {
            let x3 = x2.clone() * x;
            let x4 = x2.clone() * &x2;
            let x2y = x2.clone() * y;
            [
                x.clone() + y + x2.clone() * k(2, 1) - xy.clone() * k(2, 1) - y2.clone() * k(1, 2)
                    - x3.clone() * k(8, 1)
                    - x2y.clone() * k(4, 1)
                    - x4.clone() * k(8, 1),
                y.clone() - xy * k(4, 1) - y2 - x3 * k(16, 1) - x2y * k(8, 1) - x4 * k(16, 1),
            ]
        }
        1 => [
            x.clone() * k(2, 1) + y + x2.clone() * k(4, 1) - k(1, 2),
            x.clone() * k(4, 1) + y.clone() * k(2, 1) + x2 * k(8, 1),
        ],
        2 => [k(-1, 2), k(-1, 1)],
        _ => [k(0, 1), k(0, 1)],
    }
}

/// Jet transport through F_0 using its explicit Jacobian.
pub fn f0_jet<R: Ring>(j: &Jet1<R>) -> Jet1<R> {
    let (x, y) = (&j.value[0], &j.value[1]);
    let k = |n: i64| x.konst(n, 1);
    let x2 = x.clone() * x;
    let x3 = x2.clone() * x;
    let xy = x.clone() * y;
    let j11 = k(1) + x.clone() * k(4) - y.clone() * k(2) - x2.clone() * k(24) - xy.clone() * k(8) - x3.clone() * k(32);
    let j12 = k(1) - x.clone() * k(2) - y.clone() - x2.clone() * k(4);
    let j21 = -(y.clone() * k(4)) - x2.clone() * k(48) - xy * k(16) - x3 * k(64);
    let j22 = k(1) - x.clone() * k(4) - y.clone() * k(2) - x2 * k(8);
    let d = &j.derivative;
    Jet1 {
        value: f_series_eval(0, &j.value),
        derivative: [j11 * &d[0] + j12 * &d[1], j21 * &d[0] + j22 * &d[1]],
    }
}

/// S(x, y) = (x, -y - 4x^2 + eps); reverses F.
pub fn reversor_s<R: Ring>(eps: &R, z: &Pt<R>) -> Pt<R> {
    let x2 = z[0].clone() * &z[0];
    [z[0].clone(), -z[1].clone() - x2 * z[0].konst(4, 1) + eps]
}

pub fn reversor_s_jet<R: Ring>(eps: &R, j: &Jet1<R>) -> Jet1<R> {
    let d = &j.derivative;
    let dy = -d[1].clone() - j.value[0].clone() * &d[0] * j.value[0].konst(8, 1);
    Jet1 { value: reversor_s(eps, &j.value), derivative: [d[0].clone(), dy] }
}

/// P(u, v) = (-u + v/2, v); reverses G and F.
pub fn reversor_p<R: Ring>(z: &Pt<R>) -> Pt<R> {
    [-z[0].clone() + z[1].clone() * z[1].konst(1, 2), z[1].clone()]
}

pub fn reversor_p_jet<R: Ring>(j: &Jet1<R>) -> Jet1<R> {
    Jet1 { value: reversor_p(&j.value), derivative: reversor_p(&j.derivative) }
}

/// Eigenvalues of DH^2 at the fixed point.
pub fn eigenvalues(eps: &Float) -> Result<(Float, Float)> {
    if *eps <= 0 {
        return Err(Error::DomainError("eigenvalues need eps > 0".into()));
    }
    let prec = eps.prec();
    let wp = prec + 64;
    let e = Float::with_val(wp, eps);
    let s = Float::with_val(wp, &e + 4u32).sqrt();
    let d = Float::with_val(wp, 36u32) + Float::with_val(wp, &e * 13u32)
        - (Float::with_val(wp, &e * 4u32) + 18u32) * &s
        + Float::with_val(wp, &e * &e);
    let base = Float::with_val(wp, 9u32) + Float::with_val(wp, &e * 2u32) - Float::with_val(wp, &s * 4u32);
    let root = d.sqrt() * 2u32;
    let lp = Float::with_val(wp, &base + &root);
    let lm = Float::with_val(wp, &base - &root);
    Ok((Float::with_val(prec, lp), Float::with_val(prec, lm)))
}

pub fn h_from_eps(eps: &Float) -> Result<Float> {
    Ok(eigenvalues(eps)?.0.ln())
}

fn dh_deps(eps: &Float) -> Float {
    let wp = eps.prec() + 64;
    let e = Float::with_val(wp, eps);
    let s = Float::with_val(wp, &e + 4u32).sqrt();
    let ds = Float::with_val(wp, 1) / (Float::with_val(wp, &s * 2u32));
    let d = Float::with_val(wp, 36u32) + Float::with_val(wp, &e * 13u32)
        - (Float::with_val(wp, &e * 4u32) + 18u32) * &s
        + Float::with_val(wp, &e * &e);
    let dd = Float::with_val(wp, 13u32) - Float::with_val(wp, &s * 4u32)
        - (Float::with_val(wp, &e * 4u32) + 18u32) * &ds
        + Float::with_val(wp, &e * 2u32);
    let sd = d.sqrt();
    let lp = Float::with_val(wp, 9u32) + Float::with_val(wp, &e * 2u32) - Float::with_val(wp, &s * 4u32)
        + Float::with_val(wp, &sd * 2u32);
    let dl = Float::with_val(wp, 2u32) - ds * 4u32 + dd / sd;
    Float::with_val(eps.prec(), dl / lp)
}

/// Inverse of h_from_eps by Newton, started from h^2/2 + 5h^4/192 + 25h^6/73728.
pub fn eps_from_h(h: &Float) -> Result<Float> {
    if *h <= 0 {
        return Err(Error::DomainError("h must be positive".into()));
    }
    let prec = h.prec();
    // lambda_+ is close to 1 for small h, so work with guard bits throughout
    let wp = prec + 64;
    let hw = Float::with_val(wp, h);
    let h2 = Float::with_val(wp, &hw * &hw);
    let h4 = Float::with_val(wp, &h2 * &h2);
    let h6 = Float::with_val(wp, &h4 * &h2);
    let mut e = Float::with_val(wp, &h2 / 2u32) + h4 * 5u32 / 192u32 + h6 * 25u32 / 73728u32;
    let tol = Float::with_val(wp, 1) << -(prec as i32 + 8);
    for _ in 0..100 {
        let f = h_from_eps(&e)? - &hw;
        let step = f / dh_deps(&e);
        e -= &step;
        if e <= 0 {
            return Err(Error::NonConvergence("eps_from_h left the domain".into()));
        }
        if step.abs() <= Float::with_val(wp, &e * &tol) {
            return Ok(Float::with_val(prec, &e));
        }
    }
    Err(Error::NonConvergence("eps_from_h".into()))
}

/// One member of the Henon family with its derived constants.
#[derive(Clone, Debug)]
pub struct MapFamily {
    pub ctx: PrecisionContext,
    pub eps: Float,
    pub h: Float,
    pub lambda_plus: Float,
    pub lambda_minus: Float,
    pub p_fixed: Pt<Float>,
    pub w_fixed: Pt<Float>,
}

impl MapFamily {
    pub fn from_eps(eps: &Float, ctx: PrecisionContext) -> Result<Self> {
        let eps = Float::with_val(ctx.prec(), eps);
        let (lambda_plus, lambda_minus) = eigenvalues(&eps)?;
        let h = lambda_plus.clone().ln();
        let xe = Float::with_val(ctx.prec(), &eps + 4u32).sqrt() - 1u32;
        let p_fixed = [xe.clone(), xe];
        let w_fixed = conj_t(&p_fixed);
        Ok(MapFamily { ctx, eps, h, lambda_plus, lambda_minus, p_fixed, w_fixed })
    }

    pub fn from_eps_f64(eps: f64, ctx: PrecisionContext) -> Result<Self> {
        Self::from_eps(&ctx.real(eps), ctx)
    }

    pub fn from_h(h: f64, ctx: PrecisionContext) -> Result<Self> {
        let eps = eps_from_h(&ctx.real(h))?;
        Self::from_eps(&eps, ctx)
    }

    pub fn f(&self, z: &Pt<Float>) -> Pt<Float> {
        f_map(&self.eps, z)
    }

    pub fn f_jet(&self, j: &Jet1<Float>) -> Jet1<Float> {
        f_jet(&self.eps, j)
    }

    pub fn s(&self, z: &Pt<Float>) -> Pt<Float> {
        reversor_s(&self.eps, z)
    }

    pub fn s_jet(&self, j: &Jet1<Float>) -> Jet1<Float> {
        reversor_s_jet(&self.eps, j)
    }

    /// DH^2 at the fixed point.
    pub fn second_iterate_derivative(&self) -> Matrix2 {
        let y = &self.p_fixed[1];
        let p = self.ctx.prec();
        let two_y = Float::with_val(p, y * 2u32);
        let y2 = Float::with_val(p, y * y);
        [
            [Float::with_val(p, -1), Float::with_val(p, -&two_y)],
            [two_y, y2 * 4u32 - 1u32],
        ]
    }

    /// DF at w.
    pub fn df_at_fixed(&self) -> Matrix2 {
        jacobian(|j| self.f_jet(j), &self.w_fixed)
    }

    /// Signed distance to Fix(S): 2x - 3 - eps + y^2 with (x, y) = T^{-1} z.
    pub fn symmetry_function(&self, z: &Pt<Float>) -> Float {
        let q = conj_t_inv(z);
        Float::with_val(self.ctx.prec(), &q[0] * 2u32) - 3u32 - &self.eps + Float::with_val(self.ctx.prec(), &q[1] * &q[1])
    }
}
