//! Mean response-time comparisons between LL(d) and SQ(d), and the overhead frontier.

use std::io::{self, Write};

use rayon::prelude::*;

use crate::analytic::{ll_mean_response_auto, sq_mean_response_exp};
use crate::curve::fmt17;
use crate::error::{Error, Result};
use crate::fixed_point::{solve_stationary, SolveOptions};
use crate::jobsize::{JobSizeLaw, PhRep};
use crate::model::ModelParams;
use crate::ph_ode::{mean_response_from_workload, solve_det_plus_ph, solve_ode};
use crate::sq_cavity::{solve_sq_cavity, SqOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LlMethod {
    /// Closed form for exponential jobs, the ODE where one exists, the fixed point otherwise.
    Auto,
    Closed,
    Ode,
    FixedPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SqMethod {
    /// Series for exponential jobs, the cavity fixed point otherwise.
    Auto,
    Series,
    Cavity,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    pub ll: LlMethod,
    pub sq: SqMethod,
    pub h: f64,
    pub sq_opts: SqOptions,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            ll: LlMethod::Auto,
            sq: SqMethod::Auto,
            h: 1e-3,
            sq_opts: SqOptions::default(),
        }
    }
}

fn exp_rate(law: &JobSizeLaw) -> Option<f64> {
    match law {
        JobSizeLaw::Exponential { rate } => Some(*rate),
        _ => None,
    }
}

/// Mean LL(d) response time.
pub fn ll_mean(law: &JobSizeLaw, p: &ModelParams, method: LlMethod, h: f64) -> Result<f64> {
    let method = match (method, exp_rate(law)) {
        (LlMethod::Auto, Some(_)) => LlMethod::Closed,
        (LlMethod::Auto, None) => match law {
            JobSizeLaw::PowerLaw { .. } => LlMethod::FixedPoint,
            _ => LlMethod::Ode,
        },
        (m, _) => m,
    };
    match method {
        LlMethod::Closed => {
            let rate = exp_rate(law)
                .ok_or_else(|| Error::InvalidParameter(format!("closed forms need exponential jobs, got {law}")))?;
            let unit = ModelParams::exponential(p.rho, p.d)?;
            Ok(ll_mean_response_auto(&unit).value / rate)
        }
        LlMethod::Ode => {
            let (curve, _) = solve_ode(law, p, h * law.mean(), None)?;
            Ok(mean_response_from_workload(&curve, law, p.d).0)
        }
        LlMethod::FixedPoint | LlMethod::Auto => {
            let (curve, report) = solve_stationary(law, p, &SolveOptions::with_h(h * law.mean()))?;
            if !report.converged {
                return Err(Error::NotConverged(format!("fixed point: {}", report.summary())));
            }
            Ok(mean_response_from_workload(&curve, law, p.d).0)
        }
    }
}

/// Mean SQ(d) response time.
pub fn sq_mean(law: &JobSizeLaw, p: &ModelParams, method: SqMethod, opts: &SqOptions) -> Result<f64> {
    let series = match method {
        SqMethod::Auto => exp_rate(law).is_some(),
        SqMethod::Series => true,
        SqMethod::Cavity => false,
    };
    if series {
        let rate = exp_rate(law)
            .ok_or_else(|| Error::InvalidParameter(format!("the SQ series needs exponential jobs, got {law}")))?;
        let unit = ModelParams::exponential(p.rho, p.d)?;
        return Ok(sq_mean_response_exp(&unit, 64).value / rate);
    }
    let (_, report) = solve_sq_cavity(law, p, opts)?;
    if !report.converged {
        return Err(Error::NotConverged(format!("SQ cavity: {}", report.summary())));
    }
    Ok(report.mean_response)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioRow {
    pub lambda: f64,
    pub d: u32,
    pub t_sq: f64,
    pub t_ll: f64,
    pub ratio: f64,
}

pub fn ratio_row(law: &JobSizeLaw, lambda: f64, d: u32, opts: &SweepOptions) -> Result<RatioRow> {
    let p = ModelParams::for_law(lambda, d, law)?;
    let t_ll = ll_mean(law, &p, opts.ll, opts.h)?;
    let t_sq = sq_mean(law, &p, opts.sq, &opts.sq_opts)?;
    Ok(RatioRow {
        lambda,
        d,
        t_sq,
        t_ll,
        ratio: t_sq / t_ll,
    })
}

/// Rows for every `(d, lambda)` pair, ordered by `d` and then by `lambda` as given.
pub fn ratio_sweep(law: &JobSizeLaw, lambdas: &[f64], ds: &[u32], opts: &SweepOptions) -> Result<Vec<RatioRow>> {
    let points: Vec<(u32, f64)> = ds.iter().flat_map(|&d| lambdas.iter().map(move |&l| (d, l))).collect();
    points.par_iter().map(|&(d, l)| ratio_row(law, l, d, opts)).collect()
}

pub fn write_ratio_csv<W: Write>(rows: &[RatioRow], mut out: W) -> io::Result<()> {
    writeln!(out, "lambda,d,T_sq,T_ll,ratio")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            fmt17(r.lambda),
            r.d,
            fmt17(r.t_sq),
            fmt17(r.t_ll),
            fmt17(r.ratio)
        )?;
    }
    Ok(())
}

/// Mean LL(d) response time when every job carries an extra deterministic `tau`. The grid step
/// is shrunk from `h` so that `tau` is an exact multiple of it.
pub fn ll_mean_with_overhead(ph: &PhRep, lambda: f64, d: u32, tau: f64, h: f64) -> Result<f64> {
    let p = ModelParams::new(lambda, d, tau + ph.mean())?;
    let step = if tau > 0.0 { tau / (tau / h).ceil() } else { h };
    let (curve, _) = solve_det_plus_ph(tau, ph, &p, step, None)?;
    let law = JobSizeLaw::det_plus_ph(tau, ph.clone())?;
    Ok(mean_response_from_workload(&curve, &law, d).0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrontierRow {
    pub lambda: f64,
    pub tau_max: f64,
    pub t_sq: f64,
    /// Set when LL without overhead is already slower than SQ.
    pub warning: bool,
}

/// Upper end of the overhead search, in mean job sizes.
pub const TAU_SEARCH_CAP: f64 = 10.0;

/// Largest `tau` (at most [`TAU_SEARCH_CAP`] mean job sizes) with `T_LL(tau) <= T_SQ`, by
/// bisection to absolute tolerance `tol`.
pub fn tau_frontier_point(law: &JobSizeLaw, lambda: f64, d: u32, tol: f64, opts: &SweepOptions) -> Result<FrontierRow> {
    let ph = law.as_ph()?;
    let p = ModelParams::for_law(lambda, d, law)?;
    let t_sq = sq_mean(law, &p, opts.sq, &opts.sq_opts)?;
    let t_ll = |tau: f64| ll_mean_with_overhead(&ph, lambda, d, tau, opts.h);
    if t_ll(0.0)? > t_sq {
        return Ok(FrontierRow {
            lambda,
            tau_max: 0.0,
            t_sq,
            warning: true,
        });
    }
    // LL is unstable once lambda (tau + E[X]) reaches one
    let mut lo = 0.0;
    let mut hi = (1.0 / lambda - ph.mean()).min(TAU_SEARCH_CAP * ph.mean());
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let below = match t_ll(mid) {
            Ok(t) => t <= t_sq,
            Err(Error::Unstable(_)) => false,
            Err(e) => return Err(e),
        };
        if below {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(FrontierRow {
        lambda,
        tau_max: lo,
        t_sq,
        warning: false,
    })
}

pub fn tau_frontier(
    law: &JobSizeLaw,
    lambdas: &[f64],
    d: u32,
    tol: f64,
    opts: &SweepOptions,
) -> Result<Vec<FrontierRow>> {
    lambdas
        .par_iter()
        .map(|&l| tau_frontier_point(law, l, d, tol, opts))
        .collect()
}

pub fn write_frontier_csv<W: Write>(rows: &[FrontierRow], mut out: W) -> io::Result<()> {
    writeln!(out, "lambda,tau_max")?;
    for r in rows {
        writeln!(out, "{},{}", fmt17(r.lambda), fmt17(r.tau_max))?;
    }
    Ok(())
}
