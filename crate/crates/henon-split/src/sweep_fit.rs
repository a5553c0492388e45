//! h-sweeps of the homoclinic invariant and fits of the exponential law.

use std::collections::BTreeMap;

use rayon::prelude::*;
use rug::Float;

use crate::error::{Error, Result};
use crate::homoclinic::{find_primary_homoclinic, orbit_spread, splitting_angle};
use crate::manifolds::{compute_unstable_series, functional_residual};
use crate::maps::MapFamily;
use crate::numerics::{solve_linear, PrecisionContext};

pub const DEFAULT_H_GRID: [f64; 9] = [0.20, 0.17, 0.15, 0.13, 0.11, 0.095, 0.08, 0.07, 0.06];
const PI2: f64 = std::f64::consts::PI * std::f64::consts::PI;

/// One evaluation of the homoclinic invariant at a given h.
#[derive(Clone, Debug)]
pub struct SplittingSample {
    pub eps: Float,
    pub h: Float,
    /// d/dt tangents.
    pub theta: Float,
    /// d/dtau tangents, theta_tau = h^2 theta.
    pub theta_tau: Float,
    pub sin_alpha: Float,
    pub precision_bits: u32,
    pub residual_report: BTreeMap<String, f64>,
}

impl SplittingSample {
    pub fn h_f64(&self) -> f64 {
        self.h.to_f64()
    }

    pub fn log_abs(&self, q: Quantity) -> Float {
        match q {
            Quantity::ThetaT => Float::with_val(self.theta.prec(), self.theta.abs_ref()).ln(),
            Quantity::ThetaTau => Float::with_val(self.theta_tau.prec(), self.theta_tau.abs_ref()).ln(),
        }
    }
}

/// Which normalization of the invariant enters a fit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Quantity {
    ThetaT,
    ThetaTau,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FitModel {
    FixedSlope,
    FreeSlope,
    FreeSlopeWithPower,
}

#[derive(Clone, Debug)]
pub struct FitResult {
    pub model: FitModel,
    pub slope: f64,
    pub log_prefactor: f64,
    /// log_prefactor at the fit's working precision.
    pub log_prefactor_full: Float,
    /// nu; zero unless the model fits it.
    pub h_power: f64,
    pub rms_residual: f64,
    /// (h, observed - fitted) in sample order.
    pub residuals: Vec<(f64, f64)>,
    /// Leave-one-out range of the slope (free-slope models only).
    pub slope_spread: Option<(f64, f64)>,
}

#[derive(Clone, Debug, Default)]
pub struct SweepConfig {
    /// Explicit working bits for every sample; the policy value otherwise.
    pub bits: Option<u32>,
    /// Worker threads; rayon's default when None.
    pub jobs: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct SweepReport {
    pub samples: Vec<SplittingSample>,
    /// (h, machine-readable reason, message) for excluded samples.
    pub failures: Vec<(f64, String, String)>,
}

pub fn compute_sample(h: f64, bits: Option<u32>) -> Result<SplittingSample> {
    if !(h > 0.0 && h < 1.0) {
        return Err(Error::DomainError(format!("h = {h}")));
    }
    let ctx = match bits {
        Some(b) => PrecisionContext::new(b)?,
        None => PrecisionContext::for_h(h),
    };
    let fam = MapFamily::from_h(h, ctx)?;
    let ms = compute_unstable_series(&fam, 20)?;
    let hd = find_primary_homoclinic(&ms)?;
    let sin_alpha = splitting_angle(&hd)?;
    let mut report = BTreeMap::new();
    let res = functional_residual(&ms, &ms.s_max, 64);
    report.insert("residual_manifold".to_string(), log2_or_floor(&res));
    report.insert("residual_orbit_theta".to_string(), orbit_spread(&hd).to_f64());
    report.insert("symmetry_defect_log2".to_string(), log2_or_floor(&hd.symmetry_defect));
    report.insert("intersection_defect_log2".to_string(), log2_or_floor(&hd.intersection_defect));
    report.insert("series_order".to_string(), ms.order as f64);
    Ok(SplittingSample {
        eps: fam.eps.clone(),
        h: fam.h.clone(),
        theta: hd.theta.clone(),
        theta_tau: hd.theta_tau.clone(),
        sin_alpha,
        precision_bits: ctx.bits,
        residual_report: report,
    })
}

fn log2_or_floor(x: &Float) -> f64 {
    if x.is_zero() {
        -(x.prec() as f64)
    } else {
        Float::with_val(x.prec(), x.abs_ref()).log2().to_f64()
    }
}

/// Runs every h independently; results are sorted by h whatever the thread count.
pub fn run_sweep(h_grid: &[f64], config: &SweepConfig) -> Result<SweepReport> {
    for &h in h_grid {
        if !(h > 0.04 && h < 0.35) {
            return Err(Error::DomainError(format!("h = {h} outside (0.04, 0.35)")));
        }
    }
    let work = || -> Vec<(f64, Result<SplittingSample>)> { h_grid.par_iter().map(|&h| (h, compute_sample(h, config.bits))).collect() };
    let outcomes = match config.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::DomainError(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };
    let mut samples = Vec::new();
    let mut failures = Vec::new();
    for (h, r) in outcomes {
        match r {
            Ok(s) => samples.push(s),
            Err(e) => failures.push((h, e.reason().to_string(), e.to_string())),
        }
    }
    samples.sort_by(|a, b| a.h.partial_cmp(&b.h).unwrap());
    failures.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    if failures.len() * 5 > h_grid.len() {
        return Err(Error::NonConvergence(format!("{} of {} samples failed", failures.len(), h_grid.len())));
    }
    Ok(SweepReport { samples, failures })
}

/// Least squares for log|theta| = log A + nu log h + slope / h.
pub fn fit_points(points: &[(f64, Float)], model: FitModel) -> Result<FitResult> {
    let need = match model {
        FitModel::FixedSlope => 1,
        FitModel::FreeSlope => 2,
        FitModel::FreeSlopeWithPower => 3,
    };
    if points.len() < need.max(5) {
        return Err(Error::InsufficientSamples(points.len()));
    }
    let core = |pts: &[(f64, Float)]| -> Result<(Float, f64, f64, Vec<(f64, f64)>)> {
        let p = 256;
        let mut ata = vec![vec![Float::with_val(p, 0); need]; need];
        let mut atb = vec![Float::with_val(p, 0); need];
        let row = |h: f64| -> Vec<Float> {
            let inv = Float::with_val(p, 1) / Float::with_val(p, h);
            match model {
                FitModel::FixedSlope => vec![Float::with_val(p, 1)],
                FitModel::FreeSlope => vec![Float::with_val(p, 1), inv],
                FitModel::FreeSlopeWithPower => vec![Float::with_val(p, 1), inv, Float::with_val(p, h).ln()],
            }
        };
        let target = |h: f64, y: &Float| -> Float {
            let mut t = Float::with_val(p, y);
            if model == FitModel::FixedSlope {
                t += Float::with_val(p, rug::float::Constant::Pi).square() / Float::with_val(p, h);
            }
            t
        };
        for (h, y) in pts {
            let r = row(*h);
            let t = target(*h, y);
            for i in 0..need {
                for j in 0..need {
                    ata[i][j] += Float::with_val(p, &r[i] * &r[j]);
                }
                atb[i] += Float::with_val(p, &r[i] * &t);
            }
        }
        let c = solve_linear(ata, atb).map_err(|_| Error::DegenerateDesignMatrix)?;
        let mut res = Vec::new();
        for (h, y) in pts {
            let r = row(*h);
            let mut fit = Float::with_val(p, 0);
            for i in 0..need {
                fit += Float::with_val(p, &r[i] * &c[i]);
            }
            res.push((*h, (target(*h, y) - fit).to_f64()));
        }
        let slope = if need >= 2 { c[1].to_f64() } else { -PI2 };
        let nu = if need == 3 { c[2].to_f64() } else { 0.0 };
        Ok((c[0].clone(), slope, nu, res))
    };
    let (log_a_full, slope, nu, residuals) = core(points)?;
    let log_a = log_a_full.to_f64();
    let rms = (residuals.iter().map(|r| r.1 * r.1).sum::<f64>() / residuals.len() as f64).sqrt();
    let slope_spread = if need >= 2 && points.len() > need + 1 {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for k in 0..points.len() {
            let sub: Vec<(f64, Float)> = points.iter().enumerate().filter(|(i, _)| *i != k).map(|(_, v)| v.clone()).collect();
            let s = core(&sub)?.1;
            lo = lo.min(s);
            hi = hi.max(s);
        }
        Some((lo, hi))
    } else {
        None
    };
    Ok(FitResult { model, slope, log_prefactor: log_a, log_prefactor_full: log_a_full, h_power: nu, rms_residual: rms, residuals, slope_spread })
}

pub fn fit_exponential(samples: &[SplittingSample], model: FitModel, q: Quantity) -> Result<FitResult> {
    let pts: Vec<(f64, Float)> = samples.iter().map(|s| (s.h_f64(), s.log_abs(q))).collect();
    fit_points(&pts, model)
}

#[derive(Clone, Debug)]
pub struct ErrorTermReport {
    /// (h, delta) with delta = |theta| e^{pi^2/h} / prefactor - 1 for the given fit's prefactor.
    pub deltas: Vec<(f64, f64)>,
    /// |delta| non-increasing as h decreases.
    pub monotone: bool,
    /// Slope of log|delta| against 1/h, when delta is measurable.
    pub slope: Option<f64>,
    /// Same with the prefactor re-estimated as the h -> 0 limit.
    pub limit_log_prefactor: f64,
    pub limit_deltas: Vec<(f64, f64)>,
    pub limit_slope: Option<f64>,
    pub limit_monotone: bool,
    pub note: String,
}

fn log_delta_fit(xs: &[f64], ds: &[f64]) -> Option<(f64, f64)> {
    if ds.iter().any(|d| *d == 0.0 || !d.is_finite()) {
        return None;
    }
    let ys: Vec<f64> = ds.iter().map(|d| d.abs().ln()).collect();
    let s = crate::inner::ls_slope(xs, &ys);
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let rms = (xs.iter().zip(&ys).map(|(x, y)| (y - my - s * (x - mx)).powi(2)).sum::<f64>() / n).sqrt();
    let spread = (ys.iter().map(|y| (y - my).powi(2)).sum::<f64>() / n).sqrt();
    // scale-free misfit, so distant prefactors (nearly constant delta) do not win by default
    Some((s, if spread > 0.0 { rms / spread } else { f64::INFINITY }))
}

fn is_monotone(deltas: &[(f64, f64)]) -> bool {
    // samples are sorted by h ascending, so |delta| must not decrease along the list
    let mut sorted = deltas.to_vec();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    sorted.windows(2).all(|w| w[0].1.abs() <= w[1].1.abs())
}

/// Relative deviation from the fixed-slope law and its decay rate in 1/h.
pub fn error_term_from_points(points: &[(f64, Float)], fit: &FitResult) -> ErrorTermReport {
    let p = 256;
    let pi2 = Float::with_val(p, rug::float::Constant::Pi).square();
    // |theta| e^{pi^2/h} as logs, relative to a prefactor
    let ls: Vec<(f64, Float)> = points.iter().map(|(h, y)| (*h, Float::with_val(p, y + Float::with_val(p, &pi2 / *h)))).collect();
    let deltas_for = |log_a: &Float| -> Vec<(f64, f64)> {
        ls.iter().map(|(h, l)| (*h, (Float::with_val(p, l - log_a).exp_m1()).to_f64())).collect()
    };
    let xs: Vec<f64> = ls.iter().map(|(h, _)| 1.0 / h).collect();
    let a_fit = Float::with_val(p, &fit.log_prefactor_full);
    let deltas = deltas_for(&a_fit);
    let slope = log_delta_fit(&xs, &deltas.iter().map(|d| d.1).collect::<Vec<_>>()).map(|v| v.0);
    // limit prefactor: the value making log|delta| most nearly linear in 1/h, searched
    // among prefactors just outside the data range so that delta keeps one sign
    let mut lo_l = ls[0].1.clone();
    let mut hi_l = ls[0].1.clone();
    for (_, l) in &ls {
        if *l < lo_l {
            lo_l = l.clone();
        }
        if *l > hi_l {
            hi_l = l.clone();
        }
    }
    let score = |c: &Float| -> f64 {
        let d = deltas_for(c);
        match log_delta_fit(&xs, &d.iter().map(|v| v.1).collect::<Vec<_>>()) {
            Some((_, rms)) => rms,
            None => f64::INFINITY,
        }
    };
    let span = Float::with_val(p, &hi_l - &lo_l).max(&(Float::with_val(p, 1) >> 200u32));
    let mut best = (f64::INFINITY, a_fit.clone(), 0.0f64, 1i32);
    for side in [-1i32, 1] {
        // distances geometric in units of the data spread
        let edge = if side < 0 { &lo_l } else { &hi_l };
        for k in -800..120 {
            let g = 1.25f64.powi(k);
            let c = Float::with_val(p, edge + Float::with_val(p, &span * g) * side);
            let sc = score(&c);
            if sc < best.0 {
                best = (sc, c, g, side);
            }
        }
    }
    // golden-section polish of the distance from the edge
    let edge = if best.3 < 0 { lo_l.clone() } else { hi_l.clone() };
    let at = |g: f64| Float::with_val(p, &edge + Float::with_val(p, &span * g) * best.3);
    let (mut a, mut b) = (best.2 / 1.25, best.2 * 1.25);
    let gr = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let c1 = b - gr * (b - a);
        let c2 = a + gr * (b - a);
        if score(&at(c1)) < score(&at(c2)) {
            b = c2;
        } else {
            a = c1;
        }
    }
    let polished = at(0.5 * (a + b));
    let c_lim = if score(&polished) < best.0 { polished } else { best.1.clone() };
    let limit_deltas = deltas_for(&c_lim);
    let limit_slope = log_delta_fit(&xs, &limit_deltas.iter().map(|d| d.1).collect::<Vec<_>>()).map(|v| v.0);
    let max_dev = deltas.iter().map(|d| d.1.abs()).fold(0.0, f64::max);
    let note = if max_dev < 1e-25 {
        "no measurable second order".to_string()
    } else {
        format!("max |delta| = {max_dev:.3e}")
    };
    ErrorTermReport {
        monotone: is_monotone(&deltas),
        deltas,
        slope,
        limit_log_prefactor: c_lim.to_f64(),
        limit_monotone: is_monotone(&limit_deltas),
        limit_deltas,
        limit_slope,
        note,
    }
}

pub fn error_term_diagnostic(samples: &[SplittingSample], fit: &FitResult, q: Quantity) -> ErrorTermReport {
    let pts: Vec<(f64, Float)> = samples.iter().map(|s| (s.h_f64(), s.log_abs(q))).collect();
    error_term_from_points(&pts, fit)
}

/// theta strictly decreasing in |.| as h decreases, and of constant sign.
pub fn monotone_and_signed(samples: &[SplittingSample], q: Quantity) -> (bool, bool) {
    let mut s: Vec<&SplittingSample> = samples.iter().collect();
    s.sort_by(|a, b| a.h.partial_cmp(&b.h).unwrap());
    let dec = s.windows(2).all(|w| w[0].log_abs(q) < w[1].log_abs(q));
    let sign = match q {
        Quantity::ThetaT => s.iter().all(|x| x.theta.is_sign_positive() == s[0].theta.is_sign_positive()),
        Quantity::ThetaTau => s.iter().all(|x| x.theta_tau.is_sign_positive() == s[0].theta_tau.is_sign_positive()),
    };
    (dec, sign)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn synthetic(a: f64, b: f64, second: f64) -> Vec<(f64, Float)> {
        let p = 256;
        let pi2 = Float::with_val(p, rug::float::Constant::Pi).square();
        DEFAULT_H_GRID
            .iter()
            .map(|&h| {
                let main = -Float::with_val(p, &pi2 / h);
                let corr = (Float::with_val(p, &pi2 * second) / h).exp() * b;
                (h, Float::with_val(p, a).ln() + main + (corr + 1u32).ln())
            })
            .collect()
    }

    #[test]
    fn exact_model_recovered() {
        let pts = synthetic(864.0, 0.0, -1.0);
        let f = fit_points(&pts, FitModel::FreeSlope).unwrap();
        assert!((f.slope + PI2).abs() < 1e-10);
        assert!((f.log_prefactor - 864f64.ln()).abs() < 1e-10);
        let f3 = fit_points(&pts, FitModel::FreeSlopeWithPower).unwrap();
        assert!(f3.h_power.abs() < 1e-8 && (f3.slope + PI2).abs() < 1e-8);
        let f1 = fit_points(&pts, FitModel::FixedSlope).unwrap();
        assert!(f1.rms_residual < 1e-12);
        let (lo, hi) = f.slope_spread.unwrap();
        assert!((lo + PI2).abs() < 1e-9 && (hi + PI2).abs() < 1e-9);
        let rep = error_term_from_points(&pts, &f1);
        assert!(rep.deltas.iter().all(|d| d.1.abs() < 1e-25));
        assert_eq!(rep.note, "no measurable second order");
    }

    #[test]
    fn power_law_prefactor_recovered() {
        let p = 256;
        let pts: Vec<(f64, Float)> = synthetic(3.0, 0.0, -1.0)
            .into_iter()
            .map(|(h, y)| (h, y + Float::with_val(p, h).ln() * 2u32))
            .collect();
        let f3 = fit_points(&pts, FitModel::FreeSlopeWithPower).unwrap();
        assert!((f3.h_power - 2.0).abs() < 1e-8, "{}", f3.h_power);
        assert!((f3.log_prefactor - 3f64.ln()).abs() < 1e-8);
    }

    #[test]
    fn perturbed_slope_within_bound() {
        let b = 5.0;
        let pts = synthetic(864.0, b, -1.0);
        let f = fit_points(&pts, FitModel::FreeSlope).unwrap();
        let bound = b * (-PI2 / 0.2f64).exp();
        assert!((f.slope + PI2).abs() < bound, "{} vs {bound}", (f.slope + PI2).abs());
    }

    #[test]
    fn second_exponent_recovered() {
        let pts = synthetic(864.0, 5.0, -1.0);
        let f1 = fit_points(&pts, FitModel::FixedSlope).unwrap();
        let rep = error_term_from_points(&pts, &f1);
        let s = rep.limit_slope.unwrap();
        assert!((s + PI2).abs() < 0.1 * PI2, "{s}");
        assert!(rep.limit_monotone);
    }

    #[test]
    fn too_few_samples() {
        let pts = synthetic(1.0, 0.0, -1.0);
        assert!(matches!(fit_points(&pts[..4], FitModel::FreeSlope), Err(Error::InsufficientSamples(4))));
        let same: Vec<(f64, Float)> = (0..6).map(|_| pts[0].clone()).collect();
        assert!(matches!(fit_points(&same, FitModel::FreeSlope), Err(Error::DegenerateDesignMatrix)));
    }

    #[test]
    fn policy_bits_for_grid_ends() {
        assert!(PrecisionContext::policy_bits(0.3) <= 512);
        assert!(PrecisionContext::policy_bits(0.06) >= 650);
    }

    #[test]
    fn sweep_validates_grid() {
        assert!(run_sweep(&[0.5], &SweepConfig::default()).is_err());
    }

    #[test]
    fn sample_at_h_03() {
        let t = std::time::Instant::now();
        let s = compute_sample(0.3, None).unwrap();
        assert!(t.elapsed().as_secs() < 60);
        assert!(s.precision_bits <= 512);
        assert!(s.theta.is_sign_positive());
        let ratio = Float::with_val(s.theta.prec(), &s.theta_tau / &s.theta) / Float::with_val(s.h.prec(), s.h.square_ref());
        assert!((ratio.to_f64() - 1.0).abs() < 1e-30);
        assert!((s.log_abs(Quantity::ThetaT).to_f64() + 21.2174127405).abs() < 1e-8);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn free_slope_exact_for_any_prefactor(la in -5.0f64..12.0, nu in -3.0f64..3.0) {
            let p = 256;
            let pts: Vec<(f64, Float)> = synthetic(1.0, 0.0, -1.0)
                .into_iter()
                .map(|(h, y)| (h, y + la + Float::with_val(p, h).ln() * nu))
                .collect();
            let f3 = fit_points(&pts, FitModel::FreeSlopeWithPower).unwrap();
            prop_assert!((f3.slope + PI2).abs() < 1e-7);
            prop_assert!((f3.h_power - nu).abs() < 1e-7);
            prop_assert!((f3.log_prefactor - la).abs() < 1e-6);
        }
    }
}
