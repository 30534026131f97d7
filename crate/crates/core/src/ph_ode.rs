//! Stationary LL(d) workload from ODE and delay-differential systems.
//!
//! For phase-type jobs `(alpha, A)` the ccdf solves
//!
//! ```text
//! Fbar' = -lambda ((1 - Fbar^d) + alpha A h),    h' = (1 - Fbar^d) 1 + A h,
//! ```
//!
//! with `Fbar(0) = rho` and `h(0) = 0`. A deterministic offset `tau` delays the `h` term,
//! and unit deterministic jobs give `Fbar' = lambda (Fbar^d - Fbar(s - 1)^d)` beyond `s = 1`.
//! All systems are integrated with fixed-step RK4 on the output grid; delays are multiples of
//! the step, so the right-hand side only changes form at grid points. Half-step stages read
//! delayed values from cubic Hermite interpolation of the stored history.

use nalgebra::DVector;

use crate::curve::CcdfCurve;
use crate::error::{Error, Result};
use crate::fixed_point::{SMAX_CAP, TAIL_EPS};
use crate::jobsize::{JobSizeLaw, PhRep};
use crate::model::ModelParams;

/// Negative values above this are treated as round-off and clipped to zero.
const CLIP_TOL: f64 = 1e-12;
/// Allowed increase between successive grid values before the step is rejected.
const MONO_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct OdeReport {
    pub steps: usize,
    pub h: f64,
    pub smax: f64,
    /// Load actually used for the boundary value `Fbar(0)`.
    pub rho: f64,
    /// Delay after rounding to the grid (zero for pure phase-type jobs).
    pub delay: f64,
    /// `|delay - requested delay|`.
    pub delay_rounding: f64,
    pub tail: f64,
}

/// Where integration stops: a fixed truncation point, or once the ccdf drops below
/// [`TAIL_EPS`] (never beyond `cap`).
#[derive(Debug, Clone, Copy)]
enum Stop {
    At(usize),
    Tail(usize),
}

impl Stop {
    fn new(h: f64, smax: Option<f64>, mean: f64) -> Self {
        match smax {
            Some(s) => Stop::At(CcdfCurve::grid_len(h, s)),
            None => Stop::Tail(CcdfCurve::grid_len(h, SMAX_CAP * mean)),
        }
    }

    fn done(&self, len: usize, last: f64) -> bool {
        match *self {
            Stop::At(n) => len >= n,
            Stop::Tail(n) => len >= n || last < TAIL_EPS,
        }
    }
}

fn check_step(h: f64) -> Result<()> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidParameter(format!("step must be positive, got {h}")));
    }
    Ok(())
}

/// Accepts the new value or reports a step that is too coarse.
fn accept(prev: f64, next: f64, s: f64, h: f64) -> Result<f64> {
    if next < -CLIP_TOL || next > prev + MONO_TOL || !next.is_finite() {
        return Err(Error::StepTooLarge(format!(
            "ccdf went from {prev} to {next} at s = {s} with step {h}"
        )));
    }
    Ok(next.max(0.0))
}

fn hermite_mid(y0: f64, y1: f64, d0: f64, d1: f64, h: f64) -> f64 {
    0.5 * (y0 + y1) + 0.125 * h * (d0 - d1)
}

/// Phase-type system with an optional delay of `m` grid steps in the `h` term.
struct PhSystem<'a> {
    a: &'a nalgebra::DMatrix<f64>,
    /// `A^T alpha`, so that `alpha A h = row . h`.
    row: DVector<f64>,
    lambda: f64,
    d: i32,
}

impl PhSystem<'_> {
    fn dh(&self, f: f64, h: &DVector<f64>) -> DVector<f64> {
        let mut out = self.a * h;
        out.add_scalar_mut(1.0 - f.powi(self.d));
        out
    }

    fn df(&self, f: f64, delayed_h: Option<&DVector<f64>>) -> f64 {
        let drift = delayed_h.map_or(0.0, |hd| self.row.dot(hd));
        -self.lambda * ((1.0 - f.powi(self.d)) + drift)
    }
}

fn integrate_ph(ph: &PhRep, lambda: f64, d: u32, rho: f64, m: usize, h: f64, stop: Stop) -> Result<(Vec<f64>, usize)> {
    let sys = PhSystem {
        a: ph.generator(),
        row: ph.generator().transpose() * ph.alpha(),
        lambda,
        d: d as i32,
    };
    let n = ph.order();
    let mut f = rho;
    let mut hv = DVector::zeros(n);
    let mut values = vec![rho];
    // history of h and h' at grid points, only needed with a delay
    let mut hist: Vec<(DVector<f64>, DVector<f64>)> = Vec::new();
    if m > 0 {
        hist.push((hv.clone(), sys.dh(f, &hv)));
    }
    let half = 0.5 * h;
    while !stop.done(values.len(), f) {
        let k = values.len() - 1;
        let (d1, d2, d3, d4);
        let (k1, k2, k3, k4);
        if m == 0 {
            k1 = sys.dh(f, &hv);
            d1 = sys.df(f, Some(&hv));
            let h2 = &hv + &k1 * half;
            let f2 = f + half * d1;
            k2 = sys.dh(f2, &h2);
            d2 = sys.df(f2, Some(&h2));
            let h3 = &hv + &k2 * half;
            let f3 = f + half * d2;
            k3 = sys.dh(f3, &h3);
            d3 = sys.df(f3, Some(&h3));
            let h4 = &hv + &k3 * h;
            let f4 = f + h * d3;
            k4 = sys.dh(f4, &h4);
            d4 = sys.df(f4, Some(&h4));
        } else {
            let (lag0, lagm, lag1) = if k >= m {
                let (y0, p0) = &hist[k - m];
                let (y1, p1) = &hist[k - m + 1];
                let mid = (y0 + y1) * 0.5 + (p0 - p1) * (0.125 * h);
                (Some(y0.clone()), Some(mid), Some(y1.clone()))
            } else {
                (None, None, None)
            };
            k1 = sys.dh(f, &hv);
            d1 = sys.df(f, lag0.as_ref());
            let f2 = f + half * d1;
            k2 = sys.dh(f2, &(&hv + &k1 * half));
            d2 = sys.df(f2, lagm.as_ref());
            let f3 = f + half * d2;
            k3 = sys.dh(f3, &(&hv + &k2 * half));
            d3 = sys.df(f3, lagm.as_ref());
            let f4 = f + h * d3;
            k4 = sys.dh(f4, &(&hv + &k3 * h));
            d4 = sys.df(f4, lag1.as_ref());
        }
        let next = f + h / 6.0 * (d1 + 2.0 * d2 + 2.0 * d3 + d4);
        hv += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        f = accept(f, next, (k + 1) as f64 * h, h)?;
        values.push(f);
        if m > 0 {
            let dh = sys.dh(f, &hv);
            hist.push((hv.clone(), dh));
        }
    }
    let steps = values.len() - 1;
    Ok((values, steps))
}

fn stable_rho(lambda: f64, mean: f64) -> Result<f64> {
    let rho = lambda * mean;
    if !(rho < 1.0) {
        return Err(Error::Unstable(rho));
    }
    Ok(rho)
}

/// Workload ccdf for phase-type jobs. `smax = None` integrates until the tail is negligible.
pub fn solve_ph(ph: &PhRep, p: &ModelParams, h: f64, smax: Option<f64>) -> Result<(CcdfCurve, OdeReport)> {
    check_step(h)?;
    let rho = stable_rho(p.lambda, ph.mean())?;
    let (values, steps) = integrate_ph(ph, p.lambda, p.d, rho, 0, h, Stop::new(h, smax, ph.mean()))?;
    finish(values, steps, h, rho, 0.0, 0.0)
}

fn finish(
    values: Vec<f64>,
    steps: usize,
    h: f64,
    rho: f64,
    delay: f64,
    rounding: f64,
) -> Result<(CcdfCurve, OdeReport)> {
    let curve = CcdfCurve::new(h, values)?;
    let report = OdeReport {
        steps,
        h,
        smax: curve.smax(),
        rho,
        delay,
        delay_rounding: rounding,
        tail: curve.last(),
    };
    Ok((curve, report))
}

/// Workload ccdf for jobs of size `tau + X` with `X` phase-type. `tau` is rounded to the
/// nearest multiple of `h` and the load is taken as `lambda (tau_rounded + E[X])`.
pub fn solve_det_plus_ph(
    tau: f64,
    ph: &PhRep,
    p: &ModelParams,
    h: f64,
    smax: Option<f64>,
) -> Result<(CcdfCurve, OdeReport)> {
    check_step(h)?;
    if !(tau >= 0.0) {
        return Err(Error::InvalidParameter(format!("tau must be nonnegative, got {tau}")));
    }
    let m = (tau / h).round() as usize;
    if m == 0 {
        let (curve, mut report) = solve_ph(ph, p, h, smax)?;
        report.delay_rounding = tau;
        return Ok((curve, report));
    }
    let delay = m as f64 * h;
    let mean = delay + ph.mean();
    let rho = stable_rho(p.lambda, mean)?;
    let (values, steps) = integrate_ph(ph, p.lambda, p.d, rho, m, h, Stop::new(h, smax, mean))?;
    finish(values, steps, h, rho, delay, (delay - tau).abs())
}

/// Workload ccdf for unit deterministic jobs; `1 / h` must be an integer.
pub fn solve_det(p: &ModelParams, h: f64, smax: Option<f64>) -> Result<(CcdfCurve, OdeReport)> {
    check_step(h)?;
    let m = (1.0 / h).round() as usize;
    if m == 0 || (m as f64 * h - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "step {h} does not divide the unit job size"
        )));
    }
    let rho = stable_rho(p.lambda, 1.0)?;
    let lambda = p.lambda;
    let d = p.d as i32;
    let stop = Stop::new(h, smax, 1.0);
    let mut values = vec![rho];
    let mut slopes = vec![lambda * (rho.powi(d) - 1.0)];
    let half = 0.5 * h;
    let mut f = rho;
    while !stop.done(values.len(), f) {
        let k = values.len() - 1;
        let rhs = |x: f64, lag: f64| lambda * (x.powi(d) - lag.powi(d));
        let (l0, lm, l1) = if k >= m {
            let (y0, y1) = (values[k - m], values[k - m + 1]);
            (y0, hermite_mid(y0, y1, slopes[k - m], slopes[k - m + 1], h), y1)
        } else {
            (1.0, 1.0, 1.0)
        };
        let d1 = rhs(f, l0);
        let d2 = rhs(f + half * d1, lm);
        let d3 = rhs(f + half * d2, lm);
        let d4 = rhs(f + h * d3, l1);
        f = accept(f, f + h / 6.0 * (d1 + 2.0 * d2 + 2.0 * d3 + d4), (k + 1) as f64 * h, h)?;
        values.push(f);
        let lag = if k + 1 >= m { values[k + 1 - m] } else { 1.0 };
        slopes.push(rhs(f, lag));
    }
    let steps = values.len() - 1;
    finish(values, steps, h, rho, 1.0, 0.0)
}

/// Dispatches on the law: phase-type laws, deterministic-plus-PH, and deterministic jobs
/// of any size (by rescaling time to unit jobs).
pub fn solve_ode(law: &JobSizeLaw, p: &ModelParams, h: f64, smax: Option<f64>) -> Result<(CcdfCurve, OdeReport)> {
    match law {
        JobSizeLaw::Deterministic { c } => {
            let unit = ModelParams::new(p.lambda * c, p.d, 1.0)?;
            let (curve, report) = solve_det(&unit, h / c, smax.map(|s| s / c))?;
            finish(curve.into_values(), report.steps, h, report.rho, *c, 0.0)
        }
        JobSizeLaw::DetPlusPh { tau, ph } => solve_det_plus_ph(*tau, ph, p, h, smax),
        _ => solve_ph(&law.as_ph()?, p, h, smax),
    }
}

/// `(int_0^smax Fbar ds, Fbar(smax) * smax)`: the mean and a tail error estimate.
pub fn mean_from_curve(curve: &CcdfCurve) -> (f64, f64) {
    curve.mean()
}

/// Mean FCFS response time `E[G] + int_0^inf Fbar(s)^d ds` and a tail error estimate.
pub fn mean_response_from_workload(curve: &CcdfCurve, law: &JobSizeLaw, d: u32) -> (f64, f64) {
    let powered =
        CcdfCurve::new(curve.h(), curve.values().iter().map(|v| v.powi(d as i32)).collect()).expect("same grid");
    let (w, err) = powered.mean();
    (law.mean() + w, err)
}
