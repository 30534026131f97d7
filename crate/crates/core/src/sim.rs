//! Finite-N discrete-event simulation of LL(d) and SQ(d) with FCFS servers.
//!
//! Arrivals form a Poisson process of rate `lambda N`. Each arrival samples `d` servers
//! uniformly with replacement and joins the one with the least workload (LL) or the fewest
//! jobs (SQ); ties between distinct servers are broken uniformly. Under FCFS the response
//! time is the chosen server's workload at arrival plus the job size, so servers only keep
//! the completion time of their last job (and, for SQ, the pending completion times).

use std::collections::VecDeque;
use std::fmt;
use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::curve::{fmt17, CcdfCurve};
use crate::error::{Error, Result};
use crate::jobsize::JobSizeLaw;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Policy {
    Ll,
    Sq,
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Policy::Ll => "ll",
            Policy::Sq => "sq",
        })
    }
}

impl std::str::FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ll" => Ok(Policy::Ll),
            "sq" => Ok(Policy::Sq),
            other => Err(Error::Parse(format!("unknown policy {other:?}, expected ll or sq"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n: usize,
    /// Arrival rate per server.
    pub lambda: f64,
    pub d: usize,
    pub policy: Policy,
    pub law: JobSizeLaw,
    /// Added to every job size under LL.
    pub overhead_tau: f64,
    pub horizon: f64,
    pub warmup_frac: f64,
    pub runs: usize,
    pub seed: u64,
    /// Grid of the empirical response-time ccdf.
    pub ccdf_h: f64,
    pub ccdf_smax: f64,
}

impl SimConfig {
    /// Defaults: horizon `10^7 / N`, 30% warm-up, 10 runs, ccdf grid step 0.01 up to `50 E[G]`.
    pub fn new(n: usize, lambda: f64, d: usize, policy: Policy, law: JobSizeLaw) -> Self {
        let smax = 50.0 * law.mean();
        Self {
            n,
            lambda,
            d,
            policy,
            law,
            overhead_tau: 0.0,
            horizon: 1e7 / n.max(1) as f64,
            warmup_frac: 0.3,
            runs: 10,
            seed: 1,
            ccdf_h: 0.01,
            ccdf_smax: smax,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.n == 0 {
            return bad("N must be at least 1".into());
        }
        if self.d == 0 {
            return bad("d must be at least 1".into());
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return bad(format!("lambda must be nonnegative, got {}", self.lambda));
        }
        if !(0.0..1.0).contains(&self.warmup_frac) {
            return bad(format!("warm-up fraction must lie in [0, 1), got {}", self.warmup_frac));
        }
        if self.runs == 0 {
            return bad("runs must be at least 1".into());
        }
        if !(self.horizon > 0.0) || !(self.overhead_tau >= 0.0) {
            return bad("horizon must be positive and tau nonnegative".into());
        }
        if !(self.ccdf_h > 0.0) || !(self.ccdf_smax > self.ccdf_h) {
            return bad("ccdf grid needs 0 < h < smax".into());
        }
        Ok(())
    }

    fn ccdf_len(&self) -> usize {
        CcdfCurve::grid_len(self.ccdf_h, self.ccdf_smax)
    }
}

/// Histogram of `ceil(r / h)`: responses in `((k - 1) h, k h]` land in bin `k`; the last bin
/// collects everything beyond the grid.
#[derive(Debug, Clone, PartialEq)]
struct Histogram {
    h: f64,
    counts: Vec<u64>,
}

impl Histogram {
    fn new(h: f64, len: usize) -> Self {
        Self {
            h,
            counts: vec![0; len + 1],
        }
    }

    fn add(&mut self, r: f64) {
        let last = self.counts.len() - 1;
        let k = (r / self.h).ceil();
        let k = if k >= last as f64 { last } else { k.max(0.0) as usize };
        self.counts[k] += 1;
    }

    fn merge(&mut self, other: &Histogram) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Fraction of responses above `k h` for `k = 0..len`.
    fn ccdf(&self) -> Result<CcdfCurve> {
        let total = self.total();
        if total == 0 {
            return Err(Error::NoSamples);
        }
        let len = self.counts.len() - 1;
        let mut above = total;
        let mut v = Vec::with_capacity(len);
        for k in 0..len {
            above -= self.counts[k];
            v.push(above as f64 / total as f64);
        }
        CcdfCurve::new(self.h, v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub run_index: u64,
    pub arrivals: u64,
    pub warmup_jobs: u64,
    pub jobs_counted: u64,
    /// NaN when no job was counted.
    pub mean_response: f64,
    hist: Histogram,
}

impl RunRecord {
    pub fn empirical_ccdf(&self) -> Result<CcdfCurve> {
        self.hist.ccdf()
    }
}

/// Index of the smallest key among `candidates`; ties between distinct servers are broken by
/// one uniform draw.
pub fn pick_least<R: Rng + ?Sized>(candidates: &[usize], key: impl Fn(usize) -> f64, rng: &mut R) -> usize {
    let mut best = f64::INFINITY;
    let mut first = candidates[0];
    for &c in candidates {
        let k = key(c);
        if k < best {
            best = k;
            first = c;
        }
    }
    // distinct servers attaining the minimum, in order of first appearance
    let tied = |j: usize| {
        let c = candidates[j];
        key(c) == best && !candidates[..j].contains(&c)
    };
    let count = (0..candidates.len()).filter(|&j| tied(j)).count();
    if count == 1 {
        return first;
    }
    let pick = rng.random_range(0..count);
    let j = (0..candidates.len())
        .filter(|&j| tied(j))
        .nth(pick)
        .expect("pick < count");
    candidates[j]
}

fn rng_for(seed: u64, run_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run_index);
    rng
}

/// One replication started from the empty system.
pub fn run_once(cfg: &SimConfig, run_index: u64) -> Result<RunRecord> {
    cfg.validate()?;
    let mut rng = rng_for(cfg.seed, run_index);
    let n = cfg.n;
    let total_rate = cfg.lambda * n as f64;
    let warmup = cfg.warmup_frac * cfg.horizon;
    let tau = if cfg.policy == Policy::Ll {
        cfg.overhead_tau
    } else {
        0.0
    };
    let mut last_completion = vec![0.0f64; n];
    let mut pending: Vec<VecDeque<f64>> = match cfg.policy {
        Policy::Sq => vec![VecDeque::new(); n],
        Policy::Ll => Vec::new(),
    };
    let mut hist = Histogram::new(cfg.ccdf_h, cfg.ccdf_len());
    let mut picks = vec![0usize; cfg.d];
    let (mut arrivals, mut warm, mut counted) = (0u64, 0u64, 0u64);
    let mut sum = 0.0;
    let mut t = 0.0;
    if total_rate > 0.0 {
        loop {
            t += -(1.0 - rng.random::<f64>()).ln() / total_rate;
            if t > cfg.horizon {
                break;
            }
            arrivals += 1;
            for slot in picks.iter_mut() {
                *slot = rng.random_range(0..n);
            }
            let chosen = match cfg.policy {
                Policy::Ll => pick_least(&picks, |i| (last_completion[i] - t).max(0.0), &mut rng),
                Policy::Sq => {
                    for &i in &picks {
                        let q = &mut pending[i];
                        while q.front().is_some_and(|&c| c <= t) {
                            q.pop_front();
                        }
                    }
                    pick_least(&picks, |i| pending[i].len() as f64, &mut rng)
                }
            };
            let size = cfg.law.sample(&mut rng) + tau;
            let start = last_completion[chosen].max(t);
            let done = start + size;
            last_completion[chosen] = done;
            if cfg.policy == Policy::Sq {
                pending[chosen].push_back(done);
            }
            if t < warmup {
                warm += 1;
            } else {
                counted += 1;
                let r = done - t;
                sum += r;
                hist.add(r);
            }
        }
    }
    Ok(RunRecord {
        run_index,
        arrivals,
        warmup_jobs: warm,
        jobs_counted: counted,
        mean_response: if counted > 0 { sum / counted as f64 } else { f64::NAN },
        hist,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSummary {
    /// Mean of the per-run means.
    pub mean_response: f64,
    /// 95% Student-t half-width over runs; infinite for a single run.
    pub ci_halfwidth: f64,
    /// Pooled over runs; `None` when no job was counted.
    pub empirical_ccdf: Option<CcdfCurve>,
    pub jobs_counted: u64,
    pub per_run_means: Vec<f64>,
    pub runs: usize,
    pub seed: u64,
}

impl SimSummary {
    pub fn contains(&self, value: f64) -> bool {
        (value - self.mean_response).abs() <= self.ci_halfwidth
    }

    pub fn write_summary<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "key,value")?;
        writeln!(out, "mean_response,{}", fmt17(self.mean_response))?;
        writeln!(out, "ci_halfwidth,{}", fmt17(self.ci_halfwidth))?;
        writeln!(out, "runs,{}", self.runs)?;
        writeln!(out, "seed,{}", self.seed)?;
        writeln!(out, "jobs_counted,{}", self.jobs_counted)
    }
}

/// 95% half-width `t_{0.975, n-1} s / sqrt(n)` of the mean of `values`.
pub fn t_halfwidth(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return f64::INFINITY;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975);
    t * (var / n as f64).sqrt()
}

/// Runs the replications in parallel and aggregates them in run order.
pub fn run_replicated(cfg: &SimConfig) -> Result<SimSummary> {
    cfg.validate()?;
    let records: Vec<RunRecord> = (0..cfg.runs as u64)
        .into_par_iter()
        .map(|i| run_once(cfg, i))
        .collect::<Result<_>>()?;
    let per_run_means: Vec<f64> = records.iter().map(|r| r.mean_response).collect();
    let mut pooled = Histogram::new(cfg.ccdf_h, cfg.ccdf_len());
    for r in &records {
        pooled.merge(&r.hist);
    }
    let jobs_counted = pooled.total();
    let usable: Vec<f64> = per_run_means.iter().copied().filter(|m| m.is_finite()).collect();
    let mean_response = if usable.is_empty() {
        f64::NAN
    } else {
        usable.iter().sum::<f64>() / usable.len() as f64
    };
    Ok(SimSummary {
        mean_response,
        ci_halfwidth: t_halfwidth(&usable),
        empirical_ccdf: pooled.ccdf().ok(),
        jobs_counted,
        per_run_means,
        runs: cfg.runs,
        seed: cfg.seed,
    })
}

/// Fraction of `samples` strictly above each grid point `k h`, `k = 0..len`.
pub fn empirical_response_ccdf(samples: &[f64], h: f64, len: usize) -> Result<CcdfCurve> {
    if samples.is_empty() {
        return Err(Error::NoSamples);
    }
    let mut hist = Histogram::new(h, len);
    for &r in samples {
        hist.add(r);
    }
    hist.ccdf()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::ll_mean_response_auto;
    use crate::model::ModelParams;

    fn small(policy: Policy, law: JobSizeLaw) -> SimConfig {
        SimConfig {
            horizon: 2000.0,
            runs: 4,
            ..SimConfig::new(50, 0.8, 2, policy, law)
        }
    }

    #[test]
    fn no_arrivals() {
        let cfg = SimConfig {
            lambda: 0.0,
            ..SimConfig::new(1, 0.0, 1, Policy::Ll, JobSizeLaw::exponential(1.0).unwrap())
        };
        let s = run_replicated(&cfg).unwrap();
        assert_eq!(s.jobs_counted, 0);
        assert!(s.empirical_ccdf.is_none());
        assert!(s.mean_response.is_nan());
    }

    #[test]
    fn lone_deterministic_job() {
        let cfg = SimConfig {
            lambda: 1e-3,
            horizon: 100.0,
            warmup_frac: 0.0,
            ..SimConfig::new(1, 1e-3, 1, Policy::Ll, JobSizeLaw::deterministic(1.0).unwrap())
        };
        // find a run with exactly one arrival
        let rec = (0..200)
            .map(|i| run_once(&cfg, i).unwrap())
            .find(|r| r.arrivals == 1)
            .unwrap();
        assert_eq!(rec.mean_response, 1.0);
    }

    #[test]
    fn empirical_ccdf_basics() {
        assert!(matches!(empirical_response_ccdf(&[], 0.5, 4), Err(Error::NoSamples)));
        let c = empirical_response_ccdf(&[1.0; 10], 0.5, 4).unwrap();
        assert_eq!(c.values(), &[1.0, 1.0, 0.0, 0.0]);
        let c = empirical_response_ccdf(&[0.2, 0.7, 5.0, 100.0], 1.0, 3).unwrap();
        assert_eq!(c.values(), &[1.0, 0.5, 0.5]);
    }

    #[test]
    fn exponential_samples_match_tail() {
        let law = JobSizeLaw::exponential(1.0).unwrap();
        let mut rng = rng_for(11, 0);
        let xs: Vec<f64> = (0..1_000_000).map(|_| law.sample(&mut rng)).collect();
        let c = empirical_response_ccdf(&xs, 0.01, 1001).unwrap();
        let worst = (0..c.len())
            .map(|k| (c.values()[k] - (-(k as f64) * 0.01).exp()).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 0.005);
    }

    #[test]
    fn deterministic_given_seed() {
        let cfg = small(Policy::Sq, JobSizeLaw::exponential(1.0).unwrap());
        let a = run_replicated(&cfg).unwrap();
        let b = run_replicated(&cfg).unwrap();
        assert_eq!(a, b);
        let c = run_replicated(&SimConfig { seed: 2, ..cfg }).unwrap();
        assert_ne!(a.per_run_means, c.per_run_means);
    }

    #[test]
    fn job_accounting() {
        let cfg = small(Policy::Ll, JobSizeLaw::hyperexp(0.5, 2.0, 2.0 / 3.0).unwrap());
        for i in 0..3 {
            let r = run_once(&cfg, i).unwrap();
            assert_eq!(r.arrivals, r.warmup_jobs + r.jobs_counted);
            assert_eq!(r.hist.total(), r.jobs_counted);
            assert!(r.empirical_ccdf().unwrap().is_valid_ccdf(0.0));
        }
    }

    #[test]
    fn overhead_only_applies_to_ll() {
        let law = JobSizeLaw::deterministic(1.0).unwrap();
        let base = SimConfig {
            lambda: 1e-4,
            horizon: 1e5,
            warmup_frac: 0.0,
            runs: 1,
            ..SimConfig::new(1, 1e-4, 1, Policy::Ll, law)
        };
        let ll = run_once(
            &SimConfig {
                overhead_tau: 0.25,
                ..base.clone()
            },
            0,
        )
        .unwrap();
        let sq = run_once(
            &SimConfig {
                overhead_tau: 0.25,
                policy: Policy::Sq,
                ..base
            },
            0,
        )
        .unwrap();
        assert!(ll.mean_response >= 1.25);
        assert!(sq.mean_response >= 1.0 && sq.mean_response < 1.25);
    }

    #[test]
    fn policies_agree_on_equal_size_states() {
        // with unit jobs and every server busy, workload = queue length - elapsed service
        let mut rng_a = rng_for(3, 0);
        let mut rng_b = rng_for(3, 0);
        let queue = [3usize, 1, 4, 1, 5, 9, 2, 6];
        let elapsed = 0.4;
        let workload: Vec<f64> = queue.iter().map(|&q| q as f64 - elapsed).collect();
        for _ in 0..1000 {
            let picks: Vec<usize> = (0..3).map(|_| rng_a.random_range(0..8)).collect();
            for _ in 0..3 {
                rng_b.random_range(0..8usize);
            }
            let a = pick_least(&picks, |i| workload[i], &mut rng_a);
            let b = pick_least(&picks, |i| queue[i] as f64, &mut rng_b);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn ties_are_uniform_and_duplicates_count_once() {
        let mut rng = rng_for(5, 0);
        let mut hits = [0u32; 3];
        for _ in 0..30_000 {
            hits[pick_least(&[0, 0, 1, 2], |i| if i == 2 { 1.0 } else { 0.0 }, &mut rng)] += 1;
        }
        assert_eq!(hits[2], 0);
        assert!((hits[0] as f64 / 30_000.0 - 0.5).abs() < 0.02);
    }

    #[test]
    fn ci_shrinks_with_more_runs() {
        let law = JobSizeLaw::exponential(1.0).unwrap();
        let base = SimConfig {
            horizon: 500.0,
            ..SimConfig::new(100, 0.9, 2, Policy::Ll, law)
        };
        let few = run_replicated(&SimConfig {
            runs: 10,
            ..base.clone()
        })
        .unwrap();
        let many = run_replicated(&SimConfig { runs: 40, ..base }).unwrap();
        let ratio = few.ci_halfwidth / many.ci_halfwidth;
        assert!(ratio > 1.3 && ratio < 3.5, "{ratio}");
    }

    #[test]
    fn moderate_system_near_limit() {
        let law = JobSizeLaw::exponential(1.0).unwrap();
        let cfg = SimConfig {
            horizon: 5000.0,
            ..SimConfig::new(500, 0.7, 2, Policy::Ll, law)
        };
        let s = run_replicated(&cfg).unwrap();
        let t = ll_mean_response_auto(&ModelParams::exponential(0.7, 2).unwrap()).value;
        assert!((s.mean_response - t).abs() < 0.02, "{} vs {t}", s.mean_response);
        let mut buf = Vec::new();
        s.write_summary(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().contains("runs,10"));
    }

    #[test]
    fn t_quantile() {
        // t_{0.975, 9} from scipy.stats.t.ppf
        let v = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0];
        let sd = (55.0f64 / 6.0).sqrt();
        assert!((t_halfwidth(&v) - 2.262_157_162_854_099_3 * sd / 10f64.sqrt()).abs() < 1e-9);
    }
}
