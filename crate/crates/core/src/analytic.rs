//! Closed forms for unit-mean exponential jobs: LL(d) and SQ(d) response and workload laws,
//! their means, the LL/SQ gap series, and the replication (cancellation-on-completion) mean.
//!
//! Every infinite series is truncated adaptively and returns a [`SeriesValue`] carrying an
//! upper bound on the neglected tail.

use crate::error::{Error, Result};
use crate::model::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesValue {
    pub value: f64,
    /// Bound on the truncated tail.
    pub error: f64,
    pub terms: usize,
}

const UNDERFLOW: f64 = 1e-300;

/// `ln(exp(a) + exp(b))`.
fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// `(a + b e^{x})^{1/(1-d)}` in log space.
fn power_form(a: f64, b: f64, x: f64, d: f64) -> f64 {
    let ln_inner = log_add_exp(a.ln(), b.ln() + x);
    (ln_inner / (1.0 - d)).exp()
}

/// Stationary LL(d) workload ccdf `(lambda + (lambda^{1-d} - lambda) e^{(d-1)s})^{1/(1-d)}`.
pub fn ll_workload_ccdf_exp(p: &ModelParams, s: f64) -> f64 {
    let (l, d) = (p.lambda, p.df());
    let b = l.powf(1.0 - d) - l;
    power_form(l, b, (d - 1.0) * s, d)
}

/// Analytic derivative `-d/ds` of [`ll_workload_ccdf_exp`].
pub fn ll_workload_density_exp(p: &ModelParams, s: f64) -> f64 {
    let (l, d) = (p.lambda, p.df());
    let b = l.powf(1.0 - d) - l;
    let x = (d - 1.0) * s;
    // fraction b e^x / (lambda + b e^x), computed without overflow
    let frac = 1.0 / (1.0 + l / b * (-x).exp());
    ll_workload_ccdf_exp(p, s) * frac
}

/// Stationary LL(d) FCFS response-time ccdf `(lambda^d + (1 - lambda^d) e^{(d-1)s})^{1/(1-d)}`.
pub fn ll_response_ccdf_exp(p: &ModelParams, s: f64) -> f64 {
    let (l, d) = (p.lambda, p.df());
    let ld = l.powf(d);
    power_form(ld, 1.0 - ld, (d - 1.0) * s, d)
}

/// Analytic derivative `-d/ds` of [`ll_response_ccdf_exp`].
pub fn ll_response_density_exp(p: &ModelParams, s: f64) -> f64 {
    let (l, d) = (p.lambda, p.df());
    let ld = l.powf(d);
    let x = (d - 1.0) * s;
    let frac = 1.0 / (1.0 + ld / (1.0 - ld) * (-x).exp());
    ll_response_ccdf_exp(p, s) * frac
}

/// Geometric-tail terms needed so that `lambda^{d(n+1)} / (1 - lambda^d) <= tol`.
fn geometric_terms(p: &ModelParams, tol: f64) -> usize {
    let q = p.lambda.powf(p.df());
    if q <= 0.0 {
        return 0;
    }
    let target = tol * (1.0 - q);
    // q^{n+1} <= target
    let n = (target.ln() / q.ln()).ceil() - 1.0;
    n.max(0.0) as usize
}

fn geometric_tail(p: &ModelParams, nterms: usize) -> f64 {
    let q = p.lambda.powf(p.df());
    q.powf(nterms as f64 + 1.0) / (1.0 - q)
}

/// Mean stationary workload `sum_{n=0}^{nterms} lambda^{dn+1} / (1 + n(d-1))`.
pub fn ll_mean_workload(p: &ModelParams, nterms: usize) -> SeriesValue {
    let (l, d) = (p.lambda, p.df());
    let ln_l = l.ln();
    let value = (0..=nterms)
        .map(|n| {
            let n = n as f64;
            ((d * n + 1.0) * ln_l).exp() / (1.0 + n * (d - 1.0))
        })
        .sum();
    SeriesValue {
        value,
        error: geometric_tail(p, nterms),
        terms: nterms + 1,
    }
}

/// Mean LL(d) FCFS response time `sum_{n>=0} lambda^{dn} / (1 + n(d-1))`.
pub fn ll_mean_response(p: &ModelParams, nterms: usize) -> SeriesValue {
    let (l, d) = (p.lambda, p.df());
    let ln_l = l.ln();
    let value = (0..=nterms)
        .map(|n| {
            let n = n as f64;
            (d * n * ln_l).exp() / (1.0 + n * (d - 1.0))
        })
        .sum();
    SeriesValue {
        value,
        error: geometric_tail(p, nterms) / l,
        terms: nterms + 1,
    }
}

/// [`ll_mean_workload`] truncated where the tail bound drops below `1e-16` (relative).
pub fn ll_mean_workload_auto(p: &ModelParams) -> SeriesValue {
    ll_mean_workload(p, geometric_terms(p, 1e-16 * p.lambda))
}

/// [`ll_mean_response`] truncated where the tail bound drops below `1e-16`.
pub fn ll_mean_response_auto(p: &ModelParams) -> SeriesValue {
    ll_mean_response(p, geometric_terms(p, 1e-16 * p.lambda))
}

/// `lambda^{(d^k - 1)/(d - 1)}`, the exponential SQ(d) probability of at least `k` jobs,
/// evaluated in log space.
pub fn sq_tail(lambda: f64, d: f64, k: u32) -> f64 {
    let e = (d.powi(k as i32) - 1.0) / (d - 1.0);
    (e * lambda.ln()).exp()
}

/// Mean SQ(d) response time `(1/lambda) sum_{k=1}^{kmax} lambda^{(d^k-1)/(d-1)}`.
pub fn sq_mean_response_exp(p: &ModelParams, kmax: u32) -> SeriesValue {
    let (l, d) = (p.lambda, p.df());
    let mut total = 0.0;
    let mut terms = 0;
    let mut next = 0.0;
    for k in 1..=kmax {
        let t = sq_tail(l, d, k);
        if t < UNDERFLOW {
            break;
        }
        total += t;
        terms += 1;
        next = sq_tail(l, d, k + 1);
    }
    // doubly-exponential decay: the remainder is below twice the first neglected term
    SeriesValue {
        value: total / l,
        error: 2.0 * next / l,
        terms,
    }
}

/// SQ(d) response-time ccdf `sum_n Poisson(s; n) lambda^{(d^n-1)d/(d-1)}`.
pub fn sq_response_ccdf_exp(p: &ModelParams, s: f64) -> f64 {
    let (l, d) = (p.lambda, p.df());
    if s <= 0.0 {
        return 1.0;
    }
    let ln_s = s.ln();
    let mut total = 0.0;
    let mut mass = 0.0;
    let mut n = 0u32;
    loop {
        let nf = n as f64;
        let w = (nf * ln_s - s - crate::jobsize::ln_gamma(nf + 1.0)).exp();
        let tail = (d.powi(n as i32) - 1.0) * d / (d - 1.0);
        let factor = (tail * l.ln()).exp();
        total += w * factor;
        mass += w;
        n += 1;
        // remaining terms are bounded by the Poisson tail times the current factor
        if factor < UNDERFLOW || (nf > s && (1.0 - mass) * factor < 1e-14) || n > 100_000 {
            break;
        }
    }
    total.min(1.0)
}

/// `(d-1)/ln d`, the heavy-traffic limit of the SQ/LL mean response-time ratio.
pub fn ratio_limit(d: u32) -> f64 {
    let d = d as f64;
    (d - 1.0) / d.ln()
}

/// Grouped difference terms `A_1, A_2, ...` of `T^SQ - T^LL = (1/lambda) sum_k A_k`.
///
/// Stops once both parts of a term underflow or after `kmax` groups.
pub fn gap_terms(p: &ModelParams, kmax: u32) -> Vec<f64> {
    let (l, d) = (p.lambda, p.df());
    let ln_l = l.ln();
    let mut out = Vec::new();
    for k in 1..=kmax {
        let dk = d.powi(k as i32);
        let head = ((d * dk - 1.0) / (d - 1.0) * ln_l).exp();
        // shifted index m = n + offset turns the group into consecutive workload-series terms
        let offset = (dk - d) / (d - 1.0);
        let first = ((offset + 1.0) * d + 1.0) * ln_l;
        if head < UNDERFLOW && first.exp() < UNDERFLOW {
            break;
        }
        let count = dk as u64;
        let mut group = 0.0;
        for n in 1..=count {
            let m = offset + n as f64;
            let t = ((m * d + 1.0) * ln_l).exp() / (1.0 + m * (d - 1.0));
            if t < UNDERFLOW {
                break;
            }
            group += t;
        }
        out.push(head - group);
    }
    out
}

/// `(1/lambda) sum_k A_k`.
pub fn ll_sq_gap_series(p: &ModelParams, kmax: u32) -> f64 {
    gap_terms(p, kmax).iter().sum::<f64>() / p.lambda
}

/// Mean response time of replication with cancellation-on-completion,
/// `(1/mu) sum_{n=0}^{nterms} rho^n / (n(d-1) + d)`.
pub fn rr_mean_response(rho: f64, d: u32, mu: f64, nterms: usize) -> Result<SeriesValue> {
    if d < 2 {
        return Err(Error::InvalidParameter(format!("d must be >= 2, got {d}")));
    }
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::Unstable(rho));
    }
    if !(mu > 0.0) {
        return Err(Error::InvalidParameter(format!("mu must be positive, got {mu}")));
    }
    let d = d as f64;
    let mut value = 0.0;
    let mut pow = 1.0;
    for n in 0..=nterms {
        value += pow / (n as f64 * (d - 1.0) + d);
        pow *= rho;
    }
    Ok(SeriesValue {
        value: value / mu,
        error: pow / ((1.0 - rho) * d * mu),
        terms: nterms + 1,
    })
}
