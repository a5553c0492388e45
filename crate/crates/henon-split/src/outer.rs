//! Real-time outer expansion of the separatrix: X_0, Y_0 in closed form and the X_1 problem.

use rug::{Complex, Float};

use crate::error::{Error, Result};
use crate::numerics::{
    ode_solve_bvp, taylor_eval, taylor_solution, Boundary, LinearField2, PrecisionContext, Pt, Scalar,
};

/// (1/2 sech t, -1/2 sech t (tanh t + sech t) + 1/4).
pub fn x0y0_eval<S: Scalar>(t: &S, ctx: &PrecisionContext) -> Result<Pt<S>> {
    let c = t.clone().cosh();
    if c.modulus() < ctx.tol(0.5) {
        return Err(Error::PoleProximity(format!("|cosh t| below 2^-{}", ctx.bits / 2)));
    }
    let s = c.recip();
    let th = t.clone().tanh();
    let x = s.clone() * t.konst(1, 2);
    let y = -(s.clone() * (th + &s)) * t.konst(1, 2) + t.konst(1, 4);
    Ok([x, y])
}

/// Analytic derivatives of the closed forms.
pub fn x0y0_derivative<S: Scalar>(t: &S) -> Pt<S> {
    let s = t.clone().cosh().recip();
    let th = t.clone().tanh();
    let st = s.clone() * &th;
    let dx = -(st.clone() * t.konst(1, 2));
    let s3 = s.clone() * &s * &s;
    let dy = st.clone() * &th * t.konst(1, 2) - s3 * t.konst(1, 2) + st * &s;
    [dx, dy]
}

/// Right-hand side of the leading-order flow, cubic term taken once.
pub fn x0y0_rhs<S: Scalar>(x: &S, y: &S) -> Pt<S> {
    let x2 = x.clone() * x;
    let r1 = y.clone() + x2.clone() * x.konst(2, 1) - x.konst(1, 4);
    let r2 = -(x.clone() * y * x.konst(4, 1)) - x2 * x * x.konst(16, 1) + x.clone() * x.konst(2, 1);
    [r1, r2]
}

/// Coefficient of X_k in the order-k y-equation: 2 - 4 Y_0 - 48 X_0^2.
pub fn linearized_coefficient<S: Scalar>(x: &S, y: &S) -> S {
    x.konst(2, 1) - y.clone() * x.konst(4, 1) - x.clone() * x * x.konst(48, 1)
}

pub fn x0y0_ode_residual(t: &Float, ctx: &PrecisionContext) -> Result<Pt<Float>> {
    let [x, y] = x0y0_eval(t, ctx)?;
    let [dx, dy] = x0y0_derivative(t);
    let [r1, r2] = x0y0_rhs(&x, &y);
    Ok([dx - r1, dy - r2])
}

/// Taylor coefficients of sech and tanh about t0.
pub fn sech_tanh_taylor(t0: &Float, order: usize) -> (Vec<Float>, Vec<Float>) {
    let p = t0.prec();
    let mut s = vec![Float::with_val(p, t0).sech()];
    let mut th = vec![Float::with_val(p, t0).tanh()];
    for n in 0..order {
        let mut tt = Float::with_val(p, 0);
        let mut st = Float::with_val(p, 0);
        for i in 0..=n {
            tt += Float::with_val(p, &th[i] * &th[n - i]);
            st += Float::with_val(p, &s[i] * &th[n - i]);
        }
        let d = (n + 1) as u32;
        let t_next = if n == 0 { Float::with_val(p, 1) - tt } else { -tt };
        th.push(t_next / d);
        s.push(-st / d);
    }
    (s, th)
}

fn cauchy(a: &[Float], b: &[Float]) -> Vec<Float> {
    let p = a[0].prec();
    (0..a.len())
        .map(|k| {
            let mut acc = Float::with_val(p, 0);
            for i in 0..=k {
                acc += Float::with_val(p, &a[i] * &b[k - i]);
            }
            acc
        })
        .collect()
}

/// Forcing variant for the X_1 equation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum X1Forcing {
    /// X_1'' = (1 - 6 sech^2) X_1 - 1/16 + 1/2 sech^4 - 1/2 sech^2 - 1/2 (sech - 6 sech^3) tanh, as printed.
    Printed,
    /// X_1'' = (1 - 6 sech^2) X_1 - 1/16, obtained by expanding F(gamma(t)) = gamma(t + h) to third order.
    Derived,
}

impl X1Forcing {
    /// Forcing term f(t) in X_1'' = (1 - 6 sech^2) X_1 + f.
    pub fn eval(&self, t: &Float) -> Float {
        let p = t.prec();
        let s = Float::with_val(p, t).sech();
        let th = Float::with_val(p, t).tanh();
        let base = Float::with_val(p, -1) / 16u32;
        match self {
            X1Forcing::Derived => base,
            X1Forcing::Printed => {
                let s2 = Float::with_val(p, &s * &s);
                let s3 = Float::with_val(p, &s2 * &s);
                let s4 = Float::with_val(p, &s2 * &s2);
                base + s4 / 2u32 - s2 / 2u32 - (s - s3 * 6u32) * th / 2u32
            }
        }
    }

    /// Forcings (g1, g2) of the first-order system with linear part 4X_0 X + Y, (2 - 4Y_0 - 48X_0^2) X - 4 X_0 Y.
    pub fn flow_forcing(&self, t: &Float) -> (Float, Float) {
        let p = t.prec();
        let s = Float::with_val(p, t).sech();
        let th = Float::with_val(p, t).tanh();
        let s2 = Float::with_val(p, &s * &s);
        let s3 = Float::with_val(p, &s2 * &s);
        let s4 = Float::with_val(p, &s2 * &s2);
        let s2t = Float::with_val(p, &s2 * &th);
        match self {
            X1Forcing::Derived => {
                let g1 = s2t / 2u32;
                let g2 = Float::with_val(p, &s2) - Float::with_val(p, &s3 * &th) - s4 * 3u32 / 2u32 - Float::with_val(p, 1) / 16u32;
                (g1, g2)
            }
            X1Forcing::Printed => {
                let g1 = Float::with_val(p, &s) / 4u32 - s3 / 2u32 + s2t / 2u32;
                let t2 = Float::with_val(p, &th * &th);
                let g2 = -(s4 / 4u32) - Float::with_val(p, &s2 * &t2) / 4u32 + Float::with_val(p, &s2) / 4u32
                    - Float::with_val(p, 1) / 16u32;
                (g1, g2)
            }
        }
    }

    /// d g1 / dt.
    fn g1_derivative(&self, t: &Float) -> Float {
        let p = t.prec();
        let s = Float::with_val(p, t).sech();
        let th = Float::with_val(p, t).tanh();
        let s2 = Float::with_val(p, &s * &s);
        let t2 = Float::with_val(p, &th * &th);
        // (s^2 T)' = -2 s^2 T^2 + s^4
        let d_s2t = Float::with_val(p, &s2 * &s2) - Float::with_val(p, &s2 * &t2) * 2u32;
        match self {
            X1Forcing::Derived => d_s2t / 2u32,
            X1Forcing::Printed => {
                let st = Float::with_val(p, &s * &th);
                // s' = -sT, (s^3)' = -3 s^3 T
                -(st.clone() / 4u32) + Float::with_val(p, &s2 * &st) * 3u32 / 2u32 + d_s2t / 2u32
            }
        }
    }
}

/// First-order form of the X_1 equation: z = (X_1, X_1').
pub struct X1Field {
    pub forcing: X1Forcing,
}

impl LinearField2 for X1Field {
    fn taylor(&self, t0: &Float, order: usize) -> (Vec<[[Float; 2]; 2]>, Vec<Pt<Float>>) {
        let p = t0.prec();
        let (s, th) = sech_tanh_taylor(t0, order);
        let s2 = cauchy(&s, &s);
        let zero = || Float::with_val(p, 0);
        let mut a = Vec::with_capacity(order + 1);
        for k in 0..=order {
            let mut c = -Float::with_val(p, &s2[k] * 6u32);
            if k == 0 {
                c += 1u32;
            }
            let one = if k == 0 { Float::with_val(p, 1) } else { zero() };
            a.push([[zero(), one], [c, zero()]]);
        }
        let mut f: Vec<Float> = (0..=order).map(|_| zero()).collect();
        f[0] -= Float::with_val(p, 1) / 16u32;
        if self.forcing == X1Forcing::Printed {
            let s3 = cauchy(&s2, &s);
            let s4 = cauchy(&s2, &s2);
            let lin: Vec<Float> = (0..=order).map(|k| Float::with_val(p, &s[k]) - Float::with_val(p, &s3[k] * 6u32)).collect();
            let odd = cauchy(&lin, &th);
            for k in 0..=order {
                f[k] += Float::with_val(p, &s4[k] - &s2[k]) / 2u32 - Float::with_val(p, &odd[k]) / 2u32;
            }
        }
        (a, f.into_iter().map(|g| [zero(), g]).collect())
    }

    fn radius(&self) -> f64 {
        std::f64::consts::FRAC_PI_2
    }
}

/// A grid function with its derivative.
#[derive(Clone, Debug)]
pub struct GridFunction {
    pub t: Vec<Float>,
    pub v: Vec<Float>,
    pub dv: Vec<Float>,
}

/// One order of the outer expansion on a grid.
#[derive(Clone, Debug)]
pub struct OuterOrder {
    pub k: usize,
    pub forcing: X1Forcing,
    pub x: GridFunction,
    pub y: GridFunction,
    pub boundary_values: Pt<Float>,
    /// Mismatch at t = 0 that no decaying choice at both ends can remove.
    pub jump_at_zero: Float,
    pub x_at_zero: Float,
}

/// Order 0 sampled on a uniform grid.
pub fn order_zero(t_max: f64, grid: usize, ctx: &PrecisionContext) -> Result<OuterOrder> {
    let p = ctx.prec();
    let tt = ctx.real(t_max);
    let t: Vec<Float> = (0..grid)
        .map(|i| Float::with_val(p, -&tt) + Float::with_val(p, &tt * 2u32) * i as u32 / (grid - 1) as u32)
        .collect();
    let mut xv = Vec::new();
    let mut yv = Vec::new();
    let mut dx = Vec::new();
    let mut dy = Vec::new();
    for ti in &t {
        let [x, y] = x0y0_eval(ti, ctx)?;
        let [a, b] = x0y0_derivative(ti);
        xv.push(x);
        yv.push(y);
        dx.push(a);
        dy.push(b);
    }
    let x0 = xv[grid / 2].clone();
    Ok(OuterOrder {
        k: 0,
        forcing: X1Forcing::Derived,
        x: GridFunction { t: t.clone(), v: xv, dv: dx },
        y: GridFunction { t, v: yv, dv: dy },
        boundary_values: [ctx.real(0.0), ctx.ratio(1, 4)],
        jump_at_zero: ctx.real(0.0),
        x_at_zero: x0,
    })
}

/// Solve the X_1 problem on [-T, T] by two-sided shooting.
pub fn solve_x1(t_max: f64, grid: usize, forcing: X1Forcing, ctx: &PrecisionContext) -> Result<OuterOrder> {
    if t_max < 15.0 {
        return Err(Error::DomainError("solve_x1 needs T >= 15".into()));
    }
    let p = ctx.prec();
    let sixteenth = ctx.ratio(1, 16);
    let left = Boundary { value: [sixteenth.clone(), ctx.real(0.0)], direction: [ctx.real(1.0), ctx.real(1.0)] };
    let right = Boundary { value: [sixteenth.clone(), ctx.real(0.0)], direction: [ctx.real(1.0), ctx.real(-1.0)] };
    let field = X1Field { forcing };
    let sol = ode_solve_bvp(&field, &left, &right, t_max, grid, ctx)?;
    let bound = Float::with_val(p, -t_max).exp() * 10u32;
    for end in [&sol.z[0], &sol.z[grid - 1]] {
        if Float::with_val(p, &end[0] - &sixteenth).abs() >= bound {
            return Err(Error::NonConvergence("X_1 boundary values not reached".into()));
        }
    }
    let mut yv = Vec::with_capacity(grid);
    let mut dy = Vec::with_capacity(grid);
    let mut d2 = Vec::with_capacity(grid);
    for (ti, z) in sol.t.iter().zip(sol.z.iter()) {
        let s = Float::with_val(p, ti).sech();
        let th = Float::with_val(p, ti).tanh();
        let (g1, _) = forcing.flow_forcing(ti);
        let xdd = (Float::with_val(p, 1) - Float::with_val(p, &s * &s) * 6u32) * &z[0] + forcing.eval(ti);
        // Y = X' - 2 sech X - g1 ; Y' = X'' + 2 sech tanh X - 2 sech X' - g1'
        let y = Float::with_val(p, &z[1]) - Float::with_val(p, &s * &z[0]) * 2u32 - &g1;
        let st = Float::with_val(p, &s * &th);
        let yd = xdd.clone() + st * &z[0] * 2u32 - Float::with_val(p, &s * &z[1]) * 2u32 - forcing.g1_derivative(ti);
        yv.push(y);
        dy.push(yd);
        d2.push(xdd);
    }
    let zero = sol.value_at_zero();
    Ok(OuterOrder {
        k: 1,
        forcing,
        x: GridFunction { t: sol.t.clone(), v: sol.z.iter().map(|z| z[0].clone()).collect(), dv: sol.z.iter().map(|z| z[1].clone()).collect() },
        y: GridFunction { t: sol.t, v: yv, dv: dy },
        boundary_values: [sixteenth, ctx.real(0.0)],
        jump_at_zero: sol.jump,
        x_at_zero: zero[0].clone(),
    })
}

/// Sup over interior nodes of |X'' - (1 - 6 sech^2) X - f|, where X and X'' come from the
/// Taylor expansion of the returned solution at the neighbouring node (towards the branch's end).
pub fn x1_equation_residual(order: &OuterOrder, ctx: &PrecisionContext) -> Float {
    let p = ctx.prec();
    let field = X1Field { forcing: order.forcing };
    let t = &order.x.t;
    let n = t.len();
    let mut worst = ctx.real(0.0);
    for i in 1..n - 1 {
        let from = if t[i] < 0 {
            i - 1
        } else if t[i] > 0 {
            i + 1
        } else {
            continue;
        };
        if (t[from] < 0) != (t[i] < 0) || t[from] == 0 {
            continue;
        }
        let z0 = [order.x.v[from].clone(), order.x.dv[from].clone()];
        let dt = Float::with_val(p, &t[i] - &t[from]);
        let c = taylor_solution(&field, &t[from], &z0, 40, true);
        let (val, der) = taylor_eval(&c, &dt);
        let s = Float::with_val(p, &t[i]).sech();
        let rhs = (Float::with_val(p, 1) - Float::with_val(p, &s * &s) * 6u32) * &val[0] + order.forcing.eval(&t[i]);
        let r = (der[1].clone() - rhs).abs();
        if r > worst {
            worst = r;
        }
    }
    worst
}

/// Sup-norm residual of X_k' = 4X_0 X_k + Y_k + g1, Y_k' = (2 - 4Y_0 - 48X_0^2) X_k - 4X_0 Y_k + g2.
pub fn order_k_residual(
    k: usize,
    xk: &GridFunction,
    yk: &GridFunction,
    g1: &[Float],
    g2: &[Float],
    ctx: &PrecisionContext,
) -> Result<Float> {
    if k == 0 {
        return Err(Error::DomainError("order_k_residual needs k >= 1".into()));
    }
    let n = xk.t.len();
    if yk.t.len() != n || g1.len() != n || g2.len() != n || xk.v.len() != n || yk.v.len() != n {
        return Err(Error::GridMismatch(format!("grid length {n}")));
    }
    let p = ctx.prec();
    let mut worst = ctx.real(0.0);
    for i in 0..n {
        if xk.t[i] != yk.t[i] {
            return Err(Error::GridMismatch(format!("node {i}")));
        }
        let [x0, y0] = x0y0_eval(&xk.t[i], ctx)?;
        let four_x0 = Float::with_val(p, &x0 * 4u32);
        let r1 = xk.dv[i].clone() - Float::with_val(p, &four_x0 * &xk.v[i]) - &yk.v[i] - &g1[i];
        let c = linearized_coefficient(&x0, &y0);
        let r2 = yk.dv[i].clone() - c * &xk.v[i] + Float::with_val(p, &four_x0 * &yk.v[i]) - &g2[i];
        for r in [r1.abs(), r2.abs()] {
            if r > worst {
                worst = r;
            }
        }
    }
    Ok(worst)
}

/// Pole diagnostics along a path in the strip |Im t| < pi/2.
#[derive(Clone, Debug)]
pub struct StripReport {
    pub max_abs_x0: Float,
    /// |X_0| |t - i pi/2| at the path point nearest the corner.
    pub x0_pole_product: Float,
    /// |Y_0| |t - i pi/2|^2 at the same point.
    pub y0_pole_product: Float,
    pub nearest_distance: Float,
}

pub fn strip_analyticity_check(path: &[Complex], ctx: &PrecisionContext) -> Result<StripReport> {
    if path.is_empty() {
        return Err(Error::DomainError("empty path".into()));
    }
    let p = ctx.prec();
    let half_pi = ctx.pi() / 2u32;
    let corner = Complex::with_val(p, (0, &half_pi));
    let mut max_abs_x0 = ctx.real(0.0);
    let mut best: Option<(Float, Float, Float)> = None;
    for t in path {
        let [x, y] = x0y0_eval(t, ctx)?;
        let ax = x.modulus();
        if ax > max_abs_x0 {
            max_abs_x0 = ax.clone();
        }
        let d = Complex::with_val(p, t - &corner).modulus();
        let closer = best.as_ref().map(|b| d < b.0).unwrap_or(true);
        if closer {
            let d2 = Float::with_val(p, &d * &d);
            best = Some((d.clone(), ax * &d, y.modulus() * d2));
        }
    }
    let (nearest_distance, x0_pole_product, y0_pole_product) = best.unwrap();
    Ok(StripReport { max_abs_x0, x0_pole_product, y0_pole_product, nearest_distance })
}
