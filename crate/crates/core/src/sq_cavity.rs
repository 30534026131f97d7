//! SQ(d) cavity fixed point for phase-type and deterministic job sizes.
//!
//! The cavity queue is an M/PH/1 FCFS queue whose arrival rate depends on its length. Given an
//! environment with tails `pi_bar_n = P(Q >= n)`, a queue with `n` jobs receives the arrival
//! when it is the shortest of the `d` sampled queues, with ties broken uniformly:
//!
//! ```text
//! lambda_n = lambda (pi_bar_n^d - pi_bar_{n+1}^d) / (pi_bar_n - pi_bar_{n+1})
//! ```
//!
//! Starting from the empty environment, the rates and the queue are recomputed until the
//! queue-length law stops changing. Deterministic service is approximated by an Erlang law.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};

use crate::curve::fmt17;
use crate::error::{Error, Result};
use crate::jobsize::{JobSizeLaw, PhRep};
use crate::model::ModelParams;

pub const SQ_TAIL_EPS: f64 = 1e-12;
const START_LEVELS: usize = 64;
const MAX_LEVELS: usize = 1 << 14;

/// `P(Q = n)` for `n = 0..=L`.
#[derive(Debug, Clone, PartialEq)]
pub struct QueueLenDist {
    probs: Vec<f64>,
}

impl QueueLenDist {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() || probs.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::InvalidParameter(
                "queue-length probabilities must be nonnegative".into(),
            ));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "queue-length probabilities sum to {total}"
            )));
        }
        Ok(Self { probs })
    }

    /// All queues empty.
    pub fn empty() -> Self {
        Self { probs: vec![1.0] }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Truncation level `L`.
    pub fn levels(&self) -> usize {
        self.probs.len() - 1
    }

    /// `pi_bar_n = P(Q >= n)` for `n = 0..=L`.
    pub fn tails(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.probs.len()];
        let mut acc = 0.0;
        for n in (0..self.probs.len()).rev() {
            acc += self.probs[n];
            out[n] = acc;
        }
        out
    }

    /// `P(Q >= n)`, zero beyond the truncation level.
    pub fn tail(&self, n: usize) -> f64 {
        self.probs.iter().skip(n).sum()
    }

    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(n, p)| n as f64 * p).sum()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "n,prob")?;
        for (n, p) in self.probs.iter().enumerate() {
            writeln!(out, "{n},{}", fmt17(*p))?;
        }
        Ok(())
    }
}

/// `sum_{k<d} x^k y^{d-1-k}`, which equals `(x^d - y^d) / (x - y)` and `d x^{d-1}` when `x = y`.
fn join_factor(x: f64, y: f64, d: u32) -> f64 {
    let mut total = 0.0;
    let mut xk = 1.0;
    for _ in 0..d {
        total = total * y + xk;
        xk *= x;
    }
    total
}

/// Length-dependent arrival rates `lambda_0..lambda_L` seen by a queue in environment `env`.
pub fn arrival_rates(env: &QueueLenDist, p: &ModelParams) -> Vec<f64> {
    let tails = env.tails();
    (0..tails.len())
        .map(|n| {
            let x = tails[n];
            let y = tails.get(n + 1).copied().unwrap_or(0.0);
            p.lambda * join_factor(x, y, p.d)
        })
        .collect()
}

/// Stationary queue length of the M/PH/1 queue with arrival rate `rates[n]` at length `n`,
/// truncated at `levels` (arrivals are blocked at the top level). Rates missing beyond
/// `rates.len()` are zero.
pub fn solve_m_ph_1_level_dep(ph: &PhRep, rates: &[f64], levels: usize) -> Result<QueueLenDist> {
    if levels == 0 {
        return Ok(QueueLenDist::empty());
    }
    let m = ph.order();
    let a = ph.generator();
    let alpha = ph.alpha().transpose();
    let exit = ph.exit();
    let rate = |n: usize| {
        if n < levels {
            rates.get(n).copied().unwrap_or(0.0)
        } else {
            0.0
        }
    };
    let eye = DMatrix::<f64>::identity(m, m);
    // R_n maps pi_n to pi_{n+1}; row vector for n = 0, m x m above
    let mut r_mats: Vec<DMatrix<f64>> = vec![DMatrix::zeros(m, m); levels];
    // level L: pi_L (-A) = pi_{L-1} U_{L-1}
    let neg_a_inv = (-a)
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("-A is not invertible".into()))?;
    let mut next = neg_a_inv;
    for n in (1..levels).rev() {
        // `next` is (-(local_{n+1} + R_{n+1} D_{n+2}))^{-1}
        r_mats[n] = &next * rate(n);
        let local = a - &eye * rate(n);
        let down = exit * &alpha;
        let block = -(local + &r_mats[n] * down);
        next = block
            .try_inverse()
            .ok_or_else(|| Error::Singular(format!("level {n} block is singular")))?;
    }
    let r0: DVector<f64> = (&alpha * &next).transpose() * rate(0);
    let mut probs = Vec::with_capacity(levels + 1);
    probs.push(1.0);
    let mut pi = r0.transpose();
    probs.push(pi.sum());
    for r in r_mats.iter().take(levels).skip(1) {
        pi = &pi * r;
        probs.push(pi.sum().max(0.0));
    }
    let total: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= total;
    }
    Ok(QueueLenDist { probs })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SqOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Erlang order used for deterministic service.
    pub erlang_order: u32,
}

impl Default for SqOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 100_000,
            erlang_order: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SqCavityReport {
    pub iterations: usize,
    /// `sup_n |pi_bar_n - previous pi_bar_n|` at the last iteration.
    pub final_dk: f64,
    pub converged: bool,
    pub levels: usize,
    pub mean_queue: f64,
    pub mean_response: f64,
    /// Erlang order when deterministic service was approximated.
    pub erlang_order: Option<u32>,
}

impl SqCavityReport {
    pub fn summary(&self) -> String {
        let mut s = format!(
            "iterations={} final_dk={:.3e} converged={} levels={} mean_queue={} mean_response={}",
            self.iterations, self.final_dk, self.converged, self.levels, self.mean_queue, self.mean_response
        );
        if let Some(k) = self.erlang_order {
            s.push_str(&format!(" erlang_order={k}"));
        }
        s
    }
}

fn service_ph(law: &JobSizeLaw, order: u32) -> Result<(PhRep, Option<u32>)> {
    match law {
        JobSizeLaw::Deterministic { c } => Ok((JobSizeLaw::erlang(order, order as f64 / c)?.as_ph()?, Some(order))),
        _ => Ok((law.as_ph()?, None)),
    }
}

fn sup_tail_diff(a: &[f64], b: &[f64]) -> f64 {
    (0..a.len().max(b.len()))
        .map(|n| (a.get(n).copied().unwrap_or(0.0) - b.get(n).copied().unwrap_or(0.0)).abs())
        .fold(0.0, f64::max)
}

/// Iterates the cavity map from the empty environment.
pub fn solve_sq_cavity(law: &JobSizeLaw, p: &ModelParams, opts: &SqOptions) -> Result<(QueueLenDist, SqCavityReport)> {
    if !(p.rho < 1.0) {
        return Err(Error::Unstable(p.rho));
    }
    let (ph, erlang_order) = service_ph(law, opts.erlang_order)?;
    let mut env = QueueLenDist::empty();
    let mut tails = env.tails();
    let mut levels = START_LEVELS;
    let mut iterations = 0;
    let mut dk = f64::INFINITY;
    let mut converged = false;
    while iterations < opts.max_iter {
        let rates = arrival_rates(&env, p);
        let next = loop {
            let dist = solve_m_ph_1_level_dep(&ph, &rates, levels)?;
            if dist.probs[levels] < SQ_TAIL_EPS {
                break dist;
            }
            if levels >= MAX_LEVELS {
                return Err(Error::Truncation(format!(
                    "P(Q = {levels}) = {} after doubling the truncation level",
                    dist.probs[levels]
                )));
            }
            levels *= 2;
        };
        let new_tails = next.tails();
        dk = sup_tail_diff(&new_tails, &tails);
        iterations += 1;
        env = next;
        tails = new_tails;
        if dk < opts.tol {
            converged = true;
            break;
        }
    }
    let mean_queue = env.mean();
    let report = SqCavityReport {
        iterations,
        final_dk: dk,
        converged,
        levels,
        mean_queue,
        mean_response: sq_mean_response(&env, p),
        erlang_order,
    };
    Ok((env, report))
}

/// Little's law on the cavity queue: `E[T] = E[Q] / lambda`.
pub fn sq_mean_response(dist: &QueueLenDist, p: &ModelParams) -> f64 {
    dist.mean() / p.lambda
}
