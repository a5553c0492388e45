//! Extended-precision arithmetic substrate.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use rug::float::Constant;
use rug::{Complex, Float, Rational};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PrecisionContext {
    pub bits: u32,
    pub guard_bits: u32,
}

impl PrecisionContext {
    pub fn new(bits: u32) -> Result<Self> {
        Self::with_guard(bits, 0)
    }

    pub fn with_guard(bits: u32, guard_bits: u32) -> Result<Self> {
        if bits < 64 {
            return Err(Error::DomainError(format!("bits = {bits} < 64")));
        }
        Ok(PrecisionContext { bits, guard_bits })
    }

    /// Working bits for a target h: ceil(2.2 pi^2 / (h ln 2)) + 128.
    pub fn policy_bits(h: f64) -> u32 {
        let b = 2.2 * std::f64::consts::PI.powi(2) / (h * std::f64::consts::LN_2);
        b.ceil() as u32 + 128
    }

    pub fn for_h(h: f64) -> Self {
        PrecisionContext { bits: Self::policy_bits(h).max(64), guard_bits: 0 }
    }

    /// Mantissa bits used for every value created under this context.
    pub fn prec(&self) -> u32 {
        self.bits + self.guard_bits
    }

    pub fn real(&self, x: f64) -> Float {
        Float::with_val(self.prec(), x)
    }

    pub fn ratio(&self, n: i64, d: i64) -> Float {
        Float::with_val(self.prec(), n) / d
    }

    pub fn complex(&self, re: f64, im: f64) -> Complex {
        Complex::with_val(self.prec(), (re, im))
    }

    pub fn pi(&self) -> Float {
        Float::with_val(self.prec(), Constant::Pi)
    }

    /// 2^{-frac * bits}.
    pub fn tol(&self, frac: f64) -> Float {
        let e = -(frac * self.bits as f64).round() as i32;
        Float::with_val(self.prec(), 1) << e
    }

    /// 2^{e}
    pub fn pow2(&self, e: i32) -> Float {
        Float::with_val(self.prec(), 1) << e
    }
}

/// Field operations shared by exact rationals, reals and complexes.
pub trait Ring:
    Clone
    + Debug
    + Send
    + Sync
    + PartialEq
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + for<'a> Add<&'a Self, Output = Self>
    + for<'a> Sub<&'a Self, Output = Self>
    + for<'a> Mul<&'a Self, Output = Self>
    + for<'a> Div<&'a Self, Output = Self>
    + for<'a> AddAssign<&'a Self>
    + for<'a> SubAssign<&'a Self>
    + for<'a> MulAssign<&'a Self>
{
    /// Mantissa bits (0 for exact types).
    fn precision(&self) -> u32;
    fn from_ratio(n: i64, d: i64, prec: u32) -> Self;

    /// Constant n/d at the precision of self.
    fn konst(&self, n: i64, d: i64) -> Self {
        Self::from_ratio(n, d, self.precision())
    }
}

impl Ring for Rational {
    fn precision(&self) -> u32 {
        0
    }
    fn from_ratio(n: i64, d: i64, _prec: u32) -> Self {
        Rational::from((n, d))
    }
}

impl Ring for Float {
    fn precision(&self) -> u32 {
        self.prec()
    }
    fn from_ratio(n: i64, d: i64, prec: u32) -> Self {
        Float::with_val(prec, n) / d
    }
}

impl Ring for Complex {
    fn precision(&self) -> u32 {
        self.prec().0
    }
    fn from_ratio(n: i64, d: i64, prec: u32) -> Self {
        Complex::with_val(prec, (Float::with_val(prec, n) / d, 0))
    }
}

/// Common interface of extended-precision reals and complexes.
pub trait Scalar: Ring {
    fn from_f64(x: f64, prec: u32) -> Self;
    fn from_real(x: &Float) -> Self;
    fn modulus(&self) -> Float;
    fn mul_int(self, k: i64) -> Self;
    fn div_int(self, k: i64) -> Self;
    fn sqrt(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn cosh(self) -> Self;
    fn tanh(self) -> Self;
    fn recip(self) -> Self;
    fn finite(&self) -> bool;

    fn zero(prec: u32) -> Self {
        Self::from_f64(0.0, prec)
    }
    fn one(prec: u32) -> Self {
        Self::from_f64(1.0, prec)
    }
    fn lift(&self, x: f64) -> Self {
        Self::from_f64(x, self.precision())
    }
    fn square(&self) -> Self {
        self.clone() * self
    }
}

impl Scalar for Float {
    fn from_f64(x: f64, prec: u32) -> Self {
        Float::with_val(prec, x)
    }
    fn from_real(x: &Float) -> Self {
        x.clone()
    }
    fn modulus(&self) -> Float {
        self.clone().abs()
    }
    fn mul_int(self, k: i64) -> Self {
        self * k
    }
    fn div_int(self, k: i64) -> Self {
        self / k
    }
    fn sqrt(self) -> Self {
        Float::sqrt(self)
    }
    fn exp(self) -> Self {
        Float::exp(self)
    }
    fn ln(self) -> Self {
        Float::ln(self)
    }
    fn cosh(self) -> Self {
        Float::cosh(self)
    }
    fn tanh(self) -> Self {
        Float::tanh(self)
    }
    fn recip(self) -> Self {
        Float::recip(self)
    }
    fn finite(&self) -> bool {
        self.is_finite()
    }
}

impl Scalar for Complex {
    fn from_f64(x: f64, prec: u32) -> Self {
        Complex::with_val(prec, (x, 0))
    }
    fn from_real(x: &Float) -> Self {
        Complex::with_val(x.prec(), (x, 0))
    }
    fn modulus(&self) -> Float {
        Float::with_val(self.prec().0, self.abs_ref())
    }
    fn mul_int(self, k: i64) -> Self {
        self * k
    }
    fn div_int(self, k: i64) -> Self {
        self / k
    }
    fn sqrt(self) -> Self {
        Complex::sqrt(self)
    }
    fn exp(self) -> Self {
        Complex::exp(self)
    }
    fn ln(self) -> Self {
        Complex::ln(self)
    }
    fn cosh(self) -> Self {
        Complex::cosh(self)
    }
    fn tanh(self) -> Self {
        Complex::tanh(self)
    }
    fn recip(self) -> Self {
        Complex::recip(self)
    }
    fn finite(&self) -> bool {
        self.real().is_finite() && self.imag().is_finite()
    }
}

pub type Pt<S> = [S; 2];

pub fn norm2<S: Scalar>(v: &Pt<S>) -> Float {
    let a = v[0].modulus();
    let b = v[1].modulus();
    Float::with_val(a.prec(), a.hypot(&b))
}

pub fn sub2<S: Scalar>(a: &Pt<S>, b: &Pt<S>) -> Pt<S> {
    [a[0].clone() - &b[0], a[1].clone() - &b[1]]
}

pub fn det2<S: Scalar>(a: &Pt<S>, b: &Pt<S>) -> S {
    a[0].clone() * &b[1] - a[1].clone() * &b[0]
}

/// Value and first derivative of a planar curve.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet1<S> {
    pub value: Pt<S>,
    pub derivative: Pt<S>,
}

impl<S: Scalar> Jet1<S> {
    pub fn new(value: Pt<S>, derivative: Pt<S>) -> Self {
        Jet1 { value, derivative }
    }

    pub fn scale_derivative(mut self, c: &S) -> Self {
        self.derivative[0] *= c;
        self.derivative[1] *= c;
        self
    }
}

/// Truncated power series in one variable.
#[derive(Clone, Debug, PartialEq)]
pub struct Series<S> {
    pub coeffs: Vec<S>,
}

impl<S: Scalar> Series<S> {
    pub fn new(coeffs: Vec<S>) -> Self {
        assert!(!coeffs.is_empty(), "series needs at least a constant term");
        Series { coeffs }
    }

    pub fn zeros(order: usize, prec: u32) -> Self {
        Series { coeffs: vec![S::zero(prec); order + 1] }
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    fn prec(&self) -> u32 {
        self.coeffs[0].precision()
    }

    pub fn add(&self, o: &Self) -> Self {
        let n = self.order().min(o.order());
        Series::new((0..=n).map(|k| self.coeffs[k].clone() + &o.coeffs[k]).collect())
    }

    pub fn sub(&self, o: &Self) -> Self {
        let n = self.order().min(o.order());
        Series::new((0..=n).map(|k| self.coeffs[k].clone() - &o.coeffs[k]).collect())
    }

    pub fn scale(&self, c: &S) -> Self {
        Series::new(self.coeffs.iter().map(|a| a.clone() * c).collect())
    }

    /// Product truncated at the smaller order.
    pub fn mul(&self, o: &Self) -> Self {
        let n = self.order().min(o.order());
        let mut out = Vec::with_capacity(n + 1);
        for k in 0..=n {
            let mut acc = S::zero(self.prec());
            for i in 0..=k {
                acc += &(self.coeffs[i].clone() * &o.coeffs[k - i]);
            }
            out.push(acc);
        }
        Series::new(out)
    }

    /// p(q(s)); q must have zero constant term.
    pub fn compose(&self, q: &Self) -> Result<Self> {
        if q.coeffs[0] != S::zero(q.prec()) {
            return Err(Error::DomainError("inner series has nonzero constant term".into()));
        }
        let n = self.order().min(q.order());
        let q = q.truncate(n);
        let mut acc = Series::zeros(n, self.prec());
        acc.coeffs[0] = self.coeffs[self.order()].clone();
        for k in (0..self.order()).rev() {
            acc = acc.mul(&q);
            acc.coeffs[0] += &self.coeffs[k];
        }
        Ok(acc.truncate(n))
    }

    pub fn truncate(&self, n: usize) -> Self {
        let mut c: Vec<S> = self.coeffs.iter().take(n + 1).cloned().collect();
        while c.len() < n + 1 {
            c.push(S::zero(self.prec()));
        }
        Series::new(c)
    }

    /// Multiply by s^k, keeping the order.
    pub fn shift(&self, k: usize) -> Self {
        let n = self.order();
        let mut c = vec![S::zero(self.prec()); n + 1];
        for i in 0..=n {
            if i + k <= n {
                c[i + k] = self.coeffs[i].clone();
            }
        }
        Series::new(c)
    }

    pub fn derivative(&self) -> Self {
        if self.order() == 0 {
            return Series::zeros(0, self.prec());
        }
        Series::new((1..=self.order()).map(|k| self.coeffs[k].clone().mul_int(k as i64)).collect())
    }

    pub fn eval(&self, s: &S) -> S {
        let mut acc = self.coeffs[self.order()].clone();
        for k in (0..self.order()).rev() {
            acc = acc * s + &self.coeffs[k];
        }
        acc
    }

    /// (p(s), p'(s)) by a single Horner pass.
    pub fn eval_with_derivative(&self, s: &S) -> (S, S) {
        let mut v = self.coeffs[self.order()].clone();
        let mut d = S::zero(self.prec());
        for k in (0..self.order()).rev() {
            d = d * s + &v;
            v = v * s + &self.coeffs[k];
        }
        (v, d)
    }
}

/// Planar curve as a pair of coefficient series.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerSeries1D<S> {
    pub x: Series<S>,
    pub y: Series<S>,
}

impl<S: Scalar> PowerSeries1D<S> {
    pub fn from_pairs(pairs: &[Pt<S>]) -> Self {
        PowerSeries1D {
            x: Series::new(pairs.iter().map(|p| p[0].clone()).collect()),
            y: Series::new(pairs.iter().map(|p| p[1].clone()).collect()),
        }
    }

    pub fn order(&self) -> usize {
        self.x.order()
    }

    pub fn coeff(&self, k: usize) -> Pt<S> {
        [self.x.coeffs[k].clone(), self.y.coeffs[k].clone()]
    }

    pub fn eval_jet(&self, s: &S) -> Jet1<S> {
        let (x, dx) = self.x.eval_with_derivative(s);
        let (y, dy) = self.y.eval_with_derivative(s);
        Jet1::new([x, y], [dx, dy])
    }
}

#[derive(Clone, Debug)]
pub struct NewtonOutcome {
    pub x: Vec<Float>,
    pub iterations: usize,
    pub residual: Float,
}

fn max_abs(v: &[Float]) -> Float {
    let mut m = Float::with_val(v[0].prec(), 0);
    for a in v {
        let b = a.clone().abs();
        if b > m {
            m = b;
        }
    }
    m
}

/// Gaussian elimination with partial pivoting.
pub fn solve_linear<S: Scalar>(mut a: Vec<Vec<S>>, mut b: Vec<S>) -> Result<Vec<S>> {
    let n = b.len();
    let prec = b[0].precision();
    let mut scale = Float::with_val(prec, 0);
    for r in &a {
        for v in r {
            let m = v.modulus();
            if m > scale {
                scale = m;
            }
        }
    }
    if scale == 0 {
        return Err(Error::SingularJacobian("zero matrix".into()));
    }
    let thresh = scale * Float::with_val(prec, 1) << -(prec as i32 - 8);
    for col in 0..n {
        let mut piv = col;
        for r in col + 1..n {
            if a[r][col].modulus() > a[piv][col].modulus() {
                piv = r;
            }
        }
        if a[piv][col].modulus() <= thresh {
            return Err(Error::SingularJacobian(format!("pivot {col} below threshold")));
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col].clone() / &a[col][col];
            for c in col..n {
                let t = f.clone() * &a[col][c];
                a[r][c] -= &t;
            }
            let t = f * &b[col];
            b[r] -= &t;
        }
    }
    let mut x = vec![S::zero(prec); n];
    for r in (0..n).rev() {
        let mut acc = b[r].clone();
        for c in r + 1..n {
            acc -= &(a[r][c].clone() * &x[c]);
        }
        x[r] = acc / &a[r][r];
    }
    Ok(x)
}

/// Newton iteration for f(x) = 0; `f` returns the value and the Jacobian.
pub fn newton_solve<F>(mut f: F, x0: Vec<Float>, tol: &Float, max_iter: usize) -> Result<NewtonOutcome>
where
    F: FnMut(&[Float]) -> Result<(Vec<Float>, Vec<Vec<Float>>)>,
{
    let mut x = x0;
    for it in 0..=max_iter {
        let (fx, jac) = f(&x)?;
        let r = max_abs(&fx);
        if !r.is_finite() {
            return Err(Error::NonConvergence("non-finite residual".into()));
        }
        if r <= *tol {
            return Ok(NewtonOutcome { x, iterations: it, residual: r });
        }
        if it == max_iter {
            break;
        }
        let neg: Vec<Float> = fx.into_iter().map(|v| -v).collect();
        let dx = solve_linear(jac, neg)?;
        for (xi, d) in x.iter_mut().zip(dx) {
            *xi += d;
        }
    }
    Err(Error::NonConvergence(format!("newton: {max_iter} iterations")))
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize, prec: u32) -> (Vec<Float>, Vec<Float>) {
    let wp = prec + 32;
    let pi = Float::with_val(wp, Constant::Pi);
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    let tol = Float::with_val(wp, 1) << -(prec as i32 + 8);
    for i in 1..=n {
        let guess = (i as f64 - 0.25) / (n as f64 + 0.5);
        let mut x = Float::with_val(wp, &pi * guess).cos();
        let mut dp = Float::with_val(wp, 0);
        for _ in 0..100 {
            // three-term recurrence
            let mut p0 = Float::with_val(wp, 1);
            let mut p1 = x.clone();
            for k in 2..=n {
                let p2 = (Float::with_val(wp, &x * &p1) * (2 * k - 1) as u32 - p0 * (k - 1) as u32) / k as u32;
                p0 = p1;
                p1 = p2;
            }
            let (pn, pn1) = if n == 1 { (x.clone(), Float::with_val(wp, 1)) } else { (p1, p0) };
            let x2 = Float::with_val(wp, &x * &x);
            dp = (Float::with_val(wp, &x * &pn) - pn1) * n as u32 / (x2 - 1u32);
            let dx = pn / &dp;
            x -= &dx;
            if dx.abs() < tol {
                break;
            }
        }
        let x2 = Float::with_val(wp, &x * &x);
        let w = Float::with_val(wp, 2) / ((Float::with_val(wp, 1) - x2) * Float::with_val(wp, &dp * &dp));
        nodes.push(Float::with_val(prec, &x));
        weights.push(Float::with_val(prec, &w));
    }
    (nodes, weights)
}

fn gl_sum<G: Fn(&Complex) -> Result<Complex>>(g: &G, a: &Complex, b: &Complex, n: usize) -> Result<Complex> {
    let prec = a.prec().0;
    let (xs, ws) = gauss_legendre(n, prec);
    let half = (b.clone() - a) / 2u32;
    let mid = (b.clone() + a) / 2u32;
    let mut acc = Complex::with_val(prec, 0);
    for (x, w) in xs.iter().zip(ws.iter()) {
        let s = mid.clone() + half.clone() * x;
        acc += g(&s)? * w;
    }
    Ok(acc * half)
}

/// Gauss-Legendre integral of g along the straight segment [a, b], with a node-doubling self-check.
pub fn integrate_segment<G>(g: G, a: &Complex, b: &Complex, nodes: usize, ctx: &PrecisionContext) -> Result<Complex>
where
    G: Fn(&Complex) -> Complex,
{
    try_integrate_segment(|s| Ok(g(s)), a, b, nodes, ctx)
}

/// As `integrate_segment` for a fallible integrand.
pub fn try_integrate_segment<G>(g: G, a: &Complex, b: &Complex, nodes: usize, ctx: &PrecisionContext) -> Result<Complex>
where
    G: Fn(&Complex) -> Result<Complex>,
{
    if nodes < 8 {
        return Err(Error::DomainError("need at least 8 nodes".into()));
    }
    let tol = ctx.tol(0.5);
    let mut n = nodes;
    let mut prev = gl_sum(&g, a, b, n)?;
    for _ in 0..3 {
        n *= 2;
        let next = gl_sum(&g, a, b, n)?;
        let diff = Complex::with_val(ctx.prec(), &next - &prev).modulus();
        let scale = next.modulus().max(&Float::with_val(ctx.prec(), 1));
        if diff <= tol.clone() * scale {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::NonConvergence(format!("quadrature at {n} nodes")))
}

/// Linear planar field z' = A(t) z + g(t), supplied through Taylor coefficients.
pub trait LinearField2: Sync {
    /// Taylor coefficients of A and g about t0, orders 0..=order.
    fn taylor(&self, t0: &Float, order: usize) -> (Vec<[[Float; 2]; 2]>, Vec<Pt<Float>>);

    /// Lower bound for the distance from the real axis to the nearest singularity.
    fn radius(&self) -> f64 {
        1.0
    }
}

/// Taylor coefficients of the solution through z0 at t0.
pub fn taylor_solution<L: LinearField2 + ?Sized>(
    field: &L,
    t0: &Float,
    z0: &Pt<Float>,
    order: usize,
    forced: bool,
) -> Vec<Pt<Float>> {
    let (a, g) = field.taylor(t0, order);
    let prec = z0[0].prec();
    let mut z: Vec<Pt<Float>> = Vec::with_capacity(order + 1);
    z.push(z0.clone());
    for n in 0..order {
        let mut acc = if forced { g[n].clone() } else { [Float::with_val(prec, 0), Float::with_val(prec, 0)] };
        for j in 0..=n {
            let zz = &z[n - j];
            for r in 0..2 {
                acc[r] += Float::with_val(prec, &a[j][r][0] * &zz[0]);
                acc[r] += Float::with_val(prec, &a[j][r][1] * &zz[1]);
            }
        }
        let d = (n + 1) as u32;
        z.push([acc[0].clone() / d, acc[1].clone() / d]);
    }
    z
}

/// Evaluate Taylor coefficients at offset `dt`, returning value and derivative.
pub fn taylor_eval(c: &[Pt<Float>], dt: &Float) -> (Pt<Float>, Pt<Float>) {
    let prec = dt.prec();
    let mut v = c[c.len() - 1].clone();
    let mut d = [Float::with_val(prec, 0), Float::with_val(prec, 0)];
    for k in (0..c.len() - 1).rev() {
        for r in 0..2 {
            d[r] = Float::with_val(prec, &d[r] * dt) + &v[r];
            v[r] = Float::with_val(prec, &v[r] * dt) + &c[k][r];
        }
    }
    (v, d)
}

fn taylor_order(step: f64, radius: f64, prec: u32) -> usize {
    let ratio = (radius / step.abs()).max(2.0);
    let k = (prec as f64 * std::f64::consts::LN_2 / ratio.ln()).ceil() as usize + 4;
    k.clamp(8, 400)
}

/// Integrate the linear field from t0 through the node list, returning the state at every node.
pub fn ode_integrate<L: LinearField2 + ?Sized>(
    field: &L,
    t0: &Float,
    z0: &Pt<Float>,
    nodes: &[Float],
    forced: bool,
) -> Result<Vec<Pt<Float>>> {
    let prec = z0[0].prec();
    let mut t = t0.clone();
    let mut z = z0.clone();
    let mut out = Vec::with_capacity(nodes.len());
    for target in nodes {
        let dt = Float::with_val(prec, target - &t);
        if dt != 0 {
            let order = taylor_order(dt.to_f64(), field.radius() * 0.9, prec);
            let c = taylor_solution(field, &t, &z, order, forced);
            z = taylor_eval(&c, &dt).0;
            if !z[0].is_finite() || !z[1].is_finite() {
                return Err(Error::NonConvergence("non-finite state".into()));
            }
            t = target.clone();
        }
        out.push(z.clone());
    }
    Ok(out)
}

/// Asymptotic boundary data: the solution must equal value + c * direction at the end point.
#[derive(Clone, Debug)]
pub struct Boundary {
    pub value: Pt<Float>,
    pub direction: Pt<Float>,
}

#[derive(Clone, Debug)]
pub struct BvpSolution {
    pub t: Vec<Float>,
    pub z: Vec<Pt<Float>>,
    /// Limits of the left and right branches at the matching point t = 0.
    pub left_at_zero: Pt<Float>,
    pub right_at_zero: Pt<Float>,
    /// Part of the mismatch at t = 0 that the boundary freedom cannot remove.
    pub jump: Float,
    /// True when the two decaying directions are parallel at t = 0.
    pub degenerate: bool,
}

impl BvpSolution {
    /// Average of the two one-sided limits at t = 0.
    pub fn value_at_zero(&self) -> Pt<Float> {
        [
            (self.left_at_zero[0].clone() + &self.right_at_zero[0]) / 2u32,
            (self.left_at_zero[1].clone() + &self.right_at_zero[1]) / 2u32,
        ]
    }
}

/// Two-sided shooting on [-T, T] with matching at t = 0.
///
/// Each end fixes a one-parameter family value + c * direction; the two
/// parameters are chosen so the branches agree at 0. If the two decaying
/// directions are parallel there, the minimum-norm choice is taken and the
/// residual mismatch is reported as `jump`.
pub fn ode_solve_bvp<L: LinearField2 + ?Sized>(
    field: &L,
    left: &Boundary,
    right: &Boundary,
    t_max: f64,
    grid: usize,
    ctx: &PrecisionContext,
) -> Result<BvpSolution> {
    if grid < 3 || t_max <= 0.0 {
        return Err(Error::DomainError("grid < 3 or T <= 0".into()));
    }
    let prec = ctx.prec();
    let tt = Float::with_val(prec, t_max);
    let t: Vec<Float> = (0..grid)
        .map(|i| Float::with_val(prec, -&tt) + Float::with_val(prec, &tt * 2u32) * i as u32 / (grid - 1) as u32)
        .collect();
    let zero = Float::with_val(prec, 0);
    let mut lnodes: Vec<Float> = t.iter().filter(|x| **x < 0).cloned().collect();
    lnodes.push(zero.clone());
    let mut rnodes: Vec<Float> = t.iter().rev().filter(|x| **x > 0).cloned().collect();
    rnodes.push(zero.clone());
    let t_left = t[0].clone();
    let t_right = t[grid - 1].clone();

    let pl = ode_integrate(field, &t_left, &left.value, &lnodes, true)?;
    let ul = ode_integrate(field, &t_left, &left.direction, &lnodes, false)?;
    let pr = ode_integrate(field, &t_right, &right.value, &rnodes, true)?;
    let ur = ode_integrate(field, &t_right, &right.direction, &rnodes, false)?;

    let p_l = pl.last().unwrap();
    let u = ul.last().unwrap();
    let p_r = pr.last().unwrap();
    let v = ur.last().unwrap();
    let nu = norm2(u);
    let nv = norm2(v);
    if nu == 0 || nv == 0 || !nu.is_finite() || !nv.is_finite() {
        return Err(Error::IllConditioned("decaying direction vanished".into()));
    }
    let d = sub2(p_r, p_l);
    // c_l u - c_r v = d
    let det = det2(u, &[-v[0].clone(), -v[1].clone()]);
    let sine = Float::with_val(prec, &det / &nu) / &nv;
    let degenerate = sine.clone().abs() < 1e-8;
    let (cl, cr, jump) = if !degenerate {
        let cl = det2(&d, &[-v[0].clone(), -v[1].clone()]) / &det;
        let cr = det2(u, &d) / &det;
        (cl, cr, Float::with_val(prec, 0))
    } else {
        let e = [u[0].clone() / &nu, u[1].clone() / &nu];
        let alpha = nu.clone();
        let beta = Float::with_val(prec, &v[0] * &e[0]) + Float::with_val(prec, &v[1] * &e[1]);
        let dpar = Float::with_val(prec, &d[0] * &e[0]) + Float::with_val(prec, &d[1] * &e[1]);
        let perp = [d[0].clone() - Float::with_val(prec, &dpar * &e[0]), d[1].clone() - Float::with_val(prec, &dpar * &e[1])];
        let den = Float::with_val(prec, &alpha * &alpha) + Float::with_val(prec, &beta * &beta);
        let cl = Float::with_val(prec, &dpar * &alpha) / &den;
        let cr = -(Float::with_val(prec, &dpar * &beta) / &den);
        (cl, cr, norm2(&perp))
    };
    let comb = |p: &Pt<Float>, q: &Pt<Float>, c: &Float| -> Pt<Float> {
        [p[0].clone() + Float::with_val(prec, &q[0] * c), p[1].clone() + Float::with_val(prec, &q[1] * c)]
    };
    let mut z = Vec::with_capacity(grid);
    let nl = lnodes.len() - 1;
    for i in 0..nl {
        z.push(comb(&pl[i], &ul[i], &cl));
    }
    let nr = rnodes.len() - 1;
    let mut right_vals: Vec<Pt<Float>> = (0..nr).map(|i| comb(&pr[i], &ur[i], &cr)).collect();
    right_vals.reverse();
    let left_at_zero = comb(&pl[nl], &ul[nl], &cl);
    let right_at_zero = comb(&pr[nr], &ur[nr], &cr);
    if nl + nr < grid {
        // 0 is itself a grid node
        let mid = [
            (left_at_zero[0].clone() + &right_at_zero[0]) / 2u32,
            (left_at_zero[1].clone() + &right_at_zero[1]) / 2u32,
        ];
        z.push(mid);
    }
    z.extend(right_vals);
    if z.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(Error::NonConvergence("non-finite shooting state".into()));
    }
    Ok(BvpSolution { t, z, left_at_zero, right_at_zero, jump, degenerate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rug::ops::Pow;

    fn ctx() -> PrecisionContext {
        PrecisionContext::new(128).unwrap()
    }

    #[test]
    fn precision_policy() {
        assert_eq!(PrecisionContext::policy_bits(0.3), 233);
        assert_eq!(PrecisionContext::policy_bits(0.06), 651);
        assert!(PrecisionContext::new(63).is_err());
    }

    #[test]
    fn newton_scalar_and_affine() {
        let c = ctx();
        let tol = c.tol(0.9);
        let out = newton_solve(
            |x| Ok((vec![Float::with_val(128, &x[0] * &x[0]) - 4u32], vec![vec![Float::with_val(128, &x[0] * 2u32)]])),
            vec![c.real(1.0)],
            &tol,
            60,
        )
        .unwrap();
        assert!((out.x[0].clone() - 2u32).abs() < tol);

        let out = newton_solve(
            |x| {
                Ok((
                    vec![x[0].clone() - 1u32, x[1].clone() - 1u32],
                    vec![vec![c.real(1.0), c.real(0.0)], vec![c.real(0.0), c.real(1.0)]],
                ))
            },
            vec![c.real(0.0), c.real(0.0)],
            &tol,
            5,
        )
        .unwrap();
        assert_eq!(out.iterations, 1);
        assert_eq!(out.x[0], 1);
        assert_eq!(out.x[1], 1);
    }

    #[test]
    fn newton_sqrt41_against_bisection() {
        let c = ctx();
        let tol = c.tol(0.9);
        let out = newton_solve(
            |x| Ok((vec![Float::with_val(128, &x[0] * &x[0]) - c.real(4.1)], vec![vec![Float::with_val(128, &x[0] * 2u32)]])),
            vec![c.real(2.0)],
            &tol,
            60,
        )
        .unwrap();
        let (mut lo, mut hi) = (c.real(2.0), c.real(3.0));
        for _ in 0..140 {
            let m = Float::with_val(128, &lo + &hi) / 2u32;
            if Float::with_val(128, &m * &m) < c.real(4.1) {
                lo = m;
            } else {
                hi = m;
            }
        }
        assert!((out.x[0].clone() - lo).abs() < c.tol(0.8));
        assert!((out.x[0].to_f64() - 2.024845673).abs() < 1e-9);
    }

    #[test]
    fn newton_reports_singular() {
        let c = ctx();
        let r = newton_solve(|_| Ok((vec![c.real(1.0)], vec![vec![c.real(0.0)]])), vec![c.real(0.0)], &c.tol(0.9), 5);
        assert!(matches!(r, Err(Error::SingularJacobian(_))));
    }

    #[test]
    fn quadrature_examples() {
        let c = ctx();
        let a = c.complex(0.0, 0.0);
        let b = c.complex(1.0, 0.0);
        let one = integrate_segment(|_| c.complex(1.0, 0.0), &a, &b, 8, &c).unwrap();
        assert!(Complex::with_val(128, &one - 1u32).modulus() < c.tol(0.9));
        let two_pi_i = Complex::with_val(128, (0, c.pi() * 2u32));
        let per = integrate_segment(|s| (two_pi_i.clone() * s).exp(), &a, &b, 16, &c).unwrap();
        assert!(per.modulus() < c.tol(0.5));
        let ta = c.complex(-0.5, -3.0);
        let tb = c.complex(0.5, -3.0);
        let prod = integrate_segment(|s| (two_pi_i.clone() * s).exp() * (-(two_pi_i.clone() * s)).exp(), &ta, &tb, 8, &c).unwrap();
        assert!(Complex::with_val(128, &prod - 1u32).modulus() < c.tol(0.5));
    }

    #[test]
    fn quadrature_polynomial_exactness() {
        let c = ctx();
        for n in [8usize, 12] {
            let (xs, ws) = gauss_legendre(n, 128);
            for k in 0..2 * n {
                let mut acc = c.real(0.0);
                for (x, w) in xs.iter().zip(ws.iter()) {
                    acc += x.clone().pow(k as u32) * w;
                }
                let exact = if k % 2 == 1 { c.real(0.0) } else { c.ratio(2, k as i64 + 1) };
                assert!((acc - exact).abs() < c.tol(0.95), "n={n} k={k}");
            }
        }
    }

    struct Decay;
    impl LinearField2 for Decay {
        fn taylor(&self, _t0: &Float, order: usize) -> (Vec<[[Float; 2]; 2]>, Vec<Pt<Float>>) {
            let z = || Float::with_val(128, 0);
            let mut a = vec![[[z(), z()], [z(), z()]]; order + 1];
            a[0] = [[Float::with_val(128, -1), z()], [z(), Float::with_val(128, -1)]];
            (a, vec![[z(), z()]; order + 1])
        }
        fn radius(&self) -> f64 {
            10.0
        }
    }

    #[test]
    fn ivp_decay() {
        let c = ctx();
        let nodes: Vec<Float> = (1..=10).map(|i| c.ratio(i, 10)).collect();
        let out = ode_integrate(&Decay, &c.real(0.0), &[c.real(1.0), c.real(0.0)], &nodes, true).unwrap();
        let e = c.real(-1.0).exp();
        assert!((out[9][0].clone() - e).abs() < c.tol(0.9));
        assert!((out[9][0].to_f64() - 0.3678794).abs() < 1e-7);
    }

    /// x'' = x - 1 with decaying ends: x = 1.
    struct Saddle;
    impl LinearField2 for Saddle {
        fn taylor(&self, _t0: &Float, order: usize) -> (Vec<[[Float; 2]; 2]>, Vec<Pt<Float>>) {
            let z = || Float::with_val(128, 0);
            let o = || Float::with_val(128, 1);
            let mut a = vec![[[z(), z()], [z(), z()]]; order + 1];
            a[0] = [[z(), o()], [o(), z()]];
            let mut g = vec![[z(), z()]; order + 1];
            g[0] = [z(), Float::with_val(128, -1)];
            (a, g)
        }
        fn radius(&self) -> f64 {
            10.0
        }
    }

    #[test]
    fn bvp_constant_solution() {
        let c = ctx();
        let left = Boundary { value: [c.real(1.0), c.real(0.0)], direction: [c.real(1.0), c.real(1.0)] };
        let right = Boundary { value: [c.real(1.0), c.real(0.0)], direction: [c.real(1.0), c.real(-1.0)] };
        let sol = ode_solve_bvp(&Saddle, &left, &right, 10.0, 201, &c).unwrap();
        assert!(!sol.degenerate);
        for z in &sol.z {
            assert!((z[0].clone() - 1u32).abs() < c.tol(0.8));
        }
    }

    #[test]
    fn series_basics() {
        let c = ctx();
        let p = Series::new(vec![c.real(1.0), c.real(2.0), c.real(3.0)]);
        let (v, d) = p.eval_with_derivative(&c.real(2.0));
        assert_eq!(v, 17);
        assert_eq!(d, 14);
        assert_eq!(p.shift(1).coeffs[2], 2);
        assert_eq!(p.derivative().coeffs, vec![c.real(2.0), c.real(6.0)]);
        let q = Series::new(vec![c.real(1.0), c.real(1.0), c.real(0.0)]);
        assert!(p.compose(&q).is_err());
    }
}
