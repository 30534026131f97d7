//! Command-line front end: curves, sweeps, simulations and a self-test.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};

use llmf::analytic::{ll_response_ccdf_exp, ll_workload_ccdf_exp};
use llmf::config::{parse_config, parse_law};
use llmf::curve::fmt17;
use llmf::fixed_point::{level_crossing_residual, response_ccdf, solve_stationary, SolveOptions, SMAX_CAP, TAIL_EPS};
use llmf::ph_ode::solve_ode;
use llmf::sim::{run_replicated, Policy, SimConfig};
use llmf::sq_cavity::{solve_sq_cavity, SqOptions};
use llmf::sweep::{ratio_sweep, tau_frontier, write_frontier_csv, write_ratio_csv, LlMethod, SqMethod, SweepOptions};
use llmf::transient::{evolve_transient, TransientState};
use llmf::{kolmogorov_distance, CcdfCurve, Error, JobSizeLaw, ModelParams};

#[derive(Parser)]
#[command(name = "llmf", version, about = "Mean-field LL(d) and SQ(d) load balancing")]
struct Cli {
    /// Flat `key = value` file supplying defaults for any flag (e.g. `jobsize = hexp(scv=20,f=0.5)`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output path; standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Stationary workload ccdf.
    Workload(CurveArgs),
    /// Stationary FCFS response-time ccdf.
    Response(CurveArgs),
    /// Ratio of mean response times T_sq / T_ll over a load grid.
    RatioSweep(SweepArgs),
    /// Largest LL overhead tau with T_ll(tau) <= T_sq, per load.
    TauFrontier(FrontierArgs),
    /// Finite-N simulation.
    Simulate(SimArgs),
    /// Transient workload ccdf from the empty system.
    Transient(TransientArgs),
    /// Cross-checks every solver against its oracle.
    Selftest,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Closed,
    Fp,
    Ode,
}

#[derive(Args)]
struct ModelArgs {
    /// Job-size law, e.g. `exp(rate=1)`, `hexp(scv=20,f=0.5)`, `det(c=1)`.
    #[arg(long)]
    law: Option<String>,
    /// Arrival rate per server.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    d: Option<u32>,
}

#[derive(Args)]
struct CurveArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_enum)]
    method: Option<Method>,
    /// Grid step in units of the mean job size (default 1e-3).
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Truncation point; chosen from the tail when absent.
    #[arg(long)]
    smax: Option<f64>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    law: Option<String>,
    /// Comma list or `start:stop:step`.
    #[arg(long)]
    lambdas: Option<String>,
    /// Comma list of d values.
    #[arg(long)]
    ds: Option<String>,
    #[arg(long)]
    ll_method: Option<String>,
    #[arg(long)]
    sq_method: Option<String>,
    #[arg(long)]
    h: Option<f64>,
}

#[derive(Args)]
struct FrontierArgs {
    #[arg(long)]
    law: Option<String>,
    #[arg(long)]
    lambdas: Option<String>,
    #[arg(long)]
    d: Option<u32>,
    /// Bisection tolerance on tau.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    h: Option<f64>,
}

#[derive(Args)]
struct SimArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Number of servers.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    policy: Option<String>,
    /// Overhead added to each job under LL.
    #[arg(long)]
    tau: Option<f64>,
    /// Simulated time per run (default 10^7 / N).
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    warmup: Option<f64>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Step of the empirical ccdf grid.
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    smax: Option<f64>,
    /// Adds the limiting response ccdf as a third column.
    #[arg(long, value_enum)]
    overlay: Option<Method>,
}

#[derive(Args)]
struct TransientArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Grid step, also the time step.
    #[arg(long)]
    h: Option<f64>,
    /// Time step; must equal the grid step.
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    /// Comma list of output times (default: 0 and t_end).
    #[arg(long, allow_hyphen_values = true)]
    stamps: Option<String>,
    #[arg(long)]
    smax: Option<f64>,
}

struct Ctx {
    cfg: BTreeMap<String, String>,
    out: Option<PathBuf>,
}

fn parse_value<T: FromStr>(key: &str, text: &str) -> Result<T, Error> {
    text.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("bad value {text:?} for {key}")))
}

impl Ctx {
    /// Flag value, else config value, else the default.
    fn get<T: FromStr>(&self, flag: Option<T>, key: &str, default: Option<T>) -> Result<T, Error> {
        if let Some(v) = flag {
            return Ok(v);
        }
        if let Some(text) = self.cfg.get(key) {
            return parse_value(key, text);
        }
        default.ok_or_else(|| Error::InvalidParameter(format!("missing --{}", key.replace('_', "-"))))
    }

    fn opt<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, Error> {
        match (flag, self.cfg.get(key)) {
            (Some(v), _) => Ok(Some(v)),
            (None, Some(text)) => parse_value(key, text).map(Some),
            (None, None) => Ok(None),
        }
    }

    fn text(&self, flag: &Option<String>, key: &str, default: &str) -> String {
        flag.clone()
            .or_else(|| self.cfg.get(key).cloned())
            .unwrap_or_else(|| default.to_string())
    }

    fn law(&self, flag: &Option<String>) -> Result<JobSizeLaw, Error> {
        let text = flag
            .clone()
            .or_else(|| self.cfg.get("law").cloned())
            .or_else(|| self.cfg.get("jobsize").cloned())
            .unwrap_or_else(|| "exp(rate=1)".into());
        parse_law(&text)
    }

    fn model(&self, m: &ModelArgs) -> Result<(JobSizeLaw, ModelParams), Error> {
        let law = self.law(&m.law)?;
        let lambda = self.get(m.lambda, "lambda", Some(0.9))?;
        let d = self.get(m.d, "d", Some(2))?;
        let p = ModelParams::for_law(lambda, d, &law)?;
        Ok((law, p))
    }

    fn writer(&self) -> io::Result<Box<dyn Write>> {
        Ok(match &self.out {
            Some(path) => Box::new(BufWriter::new(File::create(path)?)),
            None => Box::new(BufWriter::new(io::stdout().lock())),
        })
    }

    fn sidecar(&self, suffix: &str) -> io::Result<Option<Box<dyn Write>>> {
        Ok(match &self.out {
            Some(path) => {
                let mut name = path.as_os_str().to_owned();
                name.push(suffix);
                Some(Box::new(BufWriter::new(File::create(Path::new(&name))?)))
            }
            None => None,
        })
    }
}

enum Failure {
    Invalid(String),
    NotConverged(String),
    Other(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NotConverged(_) => Failure::NotConverged(e.to_string()),
            Error::Singular(_) | Error::Truncation(_) | Error::StepTooLarge(_) => Failure::Other(e.to_string()),
            _ => Failure::Invalid(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Other(e.to_string())
    }
}

type CliResult = Result<(), Failure>;

fn parse_list<T: FromStr>(key: &str, text: &str) -> Result<Vec<T>, Error> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse_value(key, s))
        .collect()
}

/// `a,b,c` or `start:stop:step` (inclusive of `stop` up to round-off).
fn parse_grid(key: &str, text: &str) -> Result<Vec<f64>, Error> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() == 3 {
        let (a, b, step): (f64, f64, f64) = (
            parse_value(key, parts[0])?,
            parse_value(key, parts[1])?,
            parse_value(key, parts[2])?,
        );
        if step.is_nan() || step <= 0.0 || b < a {
            return Err(Error::Parse(format!("bad range {text:?} for {key}")));
        }
        let n = ((b - a) / step + 1e-9).floor() as usize;
        return Ok((0..=n).map(|k| a + k as f64 * step).collect());
    }
    parse_list(key, text)
}

fn closed_rate(law: &JobSizeLaw) -> Result<f64, Error> {
    match law {
        JobSizeLaw::Exponential { rate } => Ok(*rate),
        _ => Err(Error::InvalidParameter(format!(
            "--method closed needs exponential jobs, got {law}"
        ))),
    }
}

/// Grid length reaching `smax`, or the first point where `f` drops below the tail threshold.
fn auto_len(h: f64, smax: Option<f64>, cap: f64, f: impl Fn(f64) -> f64) -> usize {
    match smax {
        Some(s) => CcdfCurve::grid_len(h, s),
        None => {
            let max = CcdfCurve::grid_len(h, cap);
            (0..max).find(|&k| f(k as f64 * h) < TAIL_EPS).map_or(max, |k| k + 1)
        }
    }
}

fn workload_curve(ctx: &Ctx, a: &CurveArgs, law: &JobSizeLaw, p: &ModelParams) -> Result<(CcdfCurve, bool), Failure> {
    let h = ctx.get(a.h, "h", Some(1e-3))? * law.mean();
    let smax = ctx.opt(a.smax, "smax")?;
    let method = a.method.unwrap_or(match ctx.cfg.get("method").map(String::as_str) {
        Some("closed") => Method::Closed,
        Some("ode") => Method::Ode,
        _ => Method::Fp,
    });
    let mut converged = true;
    let curve = match method {
        Method::Closed => {
            let rate = closed_rate(law)?;
            let unit = ModelParams::exponential(p.rho, p.d)?;
            let f = |s: f64| ll_workload_ccdf_exp(&unit, rate * s);
            CcdfCurve::from_fn(h, auto_len(h, smax, SMAX_CAP * law.mean(), f), f)?
        }
        Method::Ode => {
            let (curve, report) = solve_ode(law, p, h, smax)?;
            eprintln!(
                "ode: steps={} smax={} tail={:.3e}",
                report.steps, report.smax, report.tail
            );
            curve
        }
        Method::Fp => {
            let opts = SolveOptions {
                h: Some(h),
                tol: ctx.get(a.tol, "tol", Some(1e-8))?,
                max_iter: ctx.get(a.max_iter, "max_iter", Some(20_000))?,
                smax,
            };
            let (curve, report) = solve_stationary(law, p, &opts)?;
            eprintln!("fixed point: {}", report.summary());
            let tail: Vec<String> = report
                .contraction_estimates
                .iter()
                .rev()
                .take(5)
                .rev()
                .map(|r| format!("{r:.4}"))
                .collect();
            eprintln!("last contraction ratios: {}", tail.join(" "));
            converged = report.converged;
            curve
        }
    };
    if let (Ok(rate), Method::Fp | Method::Ode) = (closed_rate(law), method) {
        let unit = ModelParams::exponential(p.rho, p.d)?;
        let exact = CcdfCurve::from_fn(h, curve.len(), |s| ll_workload_ccdf_exp(&unit, rate * s))?;
        eprintln!("d_K to closed form: {:.3e}", kolmogorov_distance(&curve, &exact)?);
    }
    Ok((curve, converged))
}

fn finish_curve(ctx: &Ctx, curve: &CcdfCurve, converged: bool) -> CliResult {
    let mut w = ctx.writer()?;
    curve.write_csv(&mut w)?;
    w.flush()?;
    if converged {
        Ok(())
    } else {
        Err(Failure::NotConverged("iteration limit reached".into()))
    }
}

fn cmd_workload(ctx: &Ctx, a: &CurveArgs) -> CliResult {
    let (law, p) = ctx.model(&a.model)?;
    let (curve, converged) = workload_curve(ctx, a, &law, &p)?;
    finish_curve(ctx, &curve, converged)
}

fn cmd_response(ctx: &Ctx, a: &CurveArgs) -> CliResult {
    let (law, p) = ctx.model(&a.model)?;
    let (workload, converged) = workload_curve(ctx, a, &law, &p)?;
    let curve = if matches!(a.method, Some(Method::Closed)) {
        let rate = closed_rate(&law)?;
        let unit = ModelParams::exponential(p.rho, p.d)?;
        CcdfCurve::from_fn(workload.h(), workload.len(), |s| ll_response_ccdf_exp(&unit, rate * s))?
    } else {
        response_ccdf(&workload, &law, p.d)?
    };
    finish_curve(ctx, &curve, converged)
}

fn ll_method(text: &str) -> Result<LlMethod, Error> {
    match text {
        "auto" => Ok(LlMethod::Auto),
        "closed" => Ok(LlMethod::Closed),
        "ode" => Ok(LlMethod::Ode),
        "fp" => Ok(LlMethod::FixedPoint),
        _ => Err(Error::Parse(format!("unknown LL method {text:?}"))),
    }
}

fn sq_method(text: &str) -> Result<SqMethod, Error> {
    match text {
        "auto" => Ok(SqMethod::Auto),
        "series" => Ok(SqMethod::Series),
        "cavity" => Ok(SqMethod::Cavity),
        _ => Err(Error::Parse(format!("unknown SQ method {text:?}"))),
    }
}

fn cmd_ratio_sweep(ctx: &Ctx, a: &SweepArgs) -> CliResult {
    let law = ctx.law(&a.law)?;
    let lambdas = parse_grid("lambdas", &ctx.text(&a.lambdas, "lambdas", "0.05:0.95:0.05"))?;
    let ds: Vec<u32> = parse_list("ds", &ctx.text(&a.ds, "ds", "2"))?;
    let opts = SweepOptions {
        ll: ll_method(&ctx.text(&a.ll_method, "ll_method", "auto"))?,
        sq: sq_method(&ctx.text(&a.sq_method, "sq_method", "auto"))?,
        h: ctx.get(a.h, "h", Some(1e-3))?,
        ..SweepOptions::default()
    };
    let rows = ratio_sweep(&law, &lambdas, &ds, &opts)?;
    let mut w = ctx.writer()?;
    write_ratio_csv(&rows, &mut w)?;
    w.flush()?;
    Ok(())
}

fn cmd_tau_frontier(ctx: &Ctx, a: &FrontierArgs) -> CliResult {
    let law = ctx.law(&a.law)?;
    let lambdas = parse_grid("lambdas", &ctx.text(&a.lambdas, "lambdas", "0.1:0.9:0.1"))?;
    let d = ctx.get(a.d, "d", Some(2))?;
    let tol = ctx.get(a.tol, "tol", Some(1e-4))?;
    let opts = SweepOptions {
        h: ctx.get(a.h, "h", Some(1e-3))?,
        ..SweepOptions::default()
    };
    let rows = tau_frontier(&law, &lambdas, d, tol, &opts)?;
    for r in rows.iter().filter(|r| r.warning) {
        eprintln!(
            "warning: at lambda = {} LL without overhead is not faster than SQ",
            r.lambda
        );
    }
    let mut w = ctx.writer()?;
    write_frontier_csv(&rows, &mut w)?;
    w.flush()?;
    Ok(())
}

fn limit_response(law: &JobSizeLaw, p: &ModelParams, method: Method, h: f64, len: usize) -> Result<CcdfCurve, Error> {
    let curve = match method {
        Method::Closed => {
            let rate = closed_rate(law)?;
            let unit = ModelParams::exponential(p.rho, p.d)?;
            return CcdfCurve::from_fn(h, len, |s| ll_response_ccdf_exp(&unit, rate * s));
        }
        Method::Ode => solve_ode(law, p, h, Some((len - 1) as f64 * h))?.0,
        Method::Fp => {
            let opts = SolveOptions {
                smax: Some((len - 1) as f64 * h),
                ..SolveOptions::with_h(h)
            };
            let (curve, report) = solve_stationary(law, p, &opts)?;
            if !report.converged {
                return Err(Error::NotConverged(report.summary()));
            }
            curve
        }
    };
    response_ccdf(&curve, law, p.d)
}

fn cmd_simulate(ctx: &Ctx, a: &SimArgs) -> CliResult {
    let law = ctx.law(&a.model.law)?;
    let lambda = ctx.get(a.model.lambda, "lambda", Some(0.9))?;
    let d: u32 = ctx.get(a.model.d, "d", Some(2))?;
    let n = ctx.get(a.n, "n", Some(100))?;
    let policy: Policy = ctx.text(&a.policy, "policy", "ll").parse()?;
    let base = SimConfig::new(n, lambda, d as usize, policy, law.clone());
    let cfg = SimConfig {
        overhead_tau: ctx.get(a.tau, "tau", Some(0.0))?,
        horizon: ctx.get(a.horizon, "horizon", Some(base.horizon))?,
        warmup_frac: ctx.get(a.warmup, "warmup", Some(base.warmup_frac))?,
        runs: ctx.get(a.runs, "runs", Some(base.runs))?,
        seed: ctx.get(a.seed, "seed", Some(base.seed))?,
        ccdf_h: ctx.get(a.h, "h", Some(base.ccdf_h))?,
        ccdf_smax: ctx.get(a.smax, "smax", Some(base.ccdf_smax))?,
        ..base
    };
    let summary = run_replicated(&cfg)?;
    let empirical = summary.empirical_ccdf.as_ref().ok_or(Error::NoSamples)?;
    let overlay = match a.overlay {
        Some(m) => {
            if policy != Policy::Ll || cfg.overhead_tau > 0.0 {
                return Err(Failure::Invalid("--overlay applies to LL without overhead".into()));
            }
            let p = ModelParams::for_law(lambda, d, &law)?;
            Some(limit_response(&law, &p, m, cfg.ccdf_h, empirical.len())?)
        }
        None => None,
    };
    let mut w = ctx.writer()?;
    match &overlay {
        Some(limit) => {
            writeln!(w, "s,ccdf,limit")?;
            for k in 0..empirical.len() {
                writeln!(
                    w,
                    "{},{},{}",
                    fmt17(empirical.s(k)),
                    fmt17(empirical.values()[k]),
                    fmt17(limit.values()[k])
                )?;
            }
        }
        None => empirical.write_csv(&mut w)?,
    }
    w.flush()?;
    let mut block = Vec::new();
    summary.write_summary(&mut block)?;
    if let Some(limit) = &overlay {
        writeln!(block, "sup_distance,{}", fmt17(kolmogorov_distance(empirical, limit)?))?;
    }
    match ctx.sidecar(".summary")? {
        Some(mut side) => {
            side.write_all(&block)?;
            side.flush()?;
        }
        None => io::stderr().write_all(&block)?,
    }
    Ok(())
}

fn cmd_transient(ctx: &Ctx, a: &TransientArgs) -> CliResult {
    let (law, p) = ctx.model(&a.model)?;
    let h = ctx.get(a.h, "h", Some(1e-3))? * law.mean();
    let dt = ctx.get(a.dt, "dt", Some(h))?;
    let t_end = ctx.get(a.t_end, "t_end", Some(50.0))?;
    let stamps: Vec<f64> = parse_list("stamps", &ctx.text(&a.stamps, "stamps", &format!("0,{t_end}")))?;
    if t_end < 0.0 || stamps.iter().any(|&t| t < 0.0) {
        return Err(Failure::Invalid("times must be nonnegative".into()));
    }
    let smax = ctx.get(a.smax, "smax", Some(40.0 * law.mean()))?;
    let init = TransientState::empty(h, smax)?;
    let len = init.cells().len() + 1;
    let reference = match closed_rate(&law) {
        Ok(rate) => {
            let unit = ModelParams::exponential(p.rho, p.d)?;
            CcdfCurve::from_fn(h, len, |s| ll_workload_ccdf_exp(&unit, rate * s))?
        }
        Err(_) => {
            let (curve, report) = solve_stationary(
                &law,
                &p,
                &SolveOptions {
                    smax: Some(smax),
                    ..SolveOptions::with_h(h)
                },
            )?;
            if !report.converged {
                eprintln!("warning: stationary reference did not converge: {}", report.summary());
            }
            curve
        }
    };
    let snaps = evolve_transient(&init, &law, &p, dt, t_end, &stamps, Some(&reference))?;
    let mut w = ctx.writer()?;
    writeln!(w, "t,s,ccdf")?;
    for snap in &snaps {
        for (k, v) in snap.curve.values().iter().enumerate() {
            writeln!(w, "{},{},{}", fmt17(snap.t), fmt17(snap.curve.s(k)), fmt17(*v))?;
        }
    }
    w.flush()?;
    let mut block = Vec::new();
    writeln!(block, "t,dk_stationary,mass,boundary_density")?;
    for snap in &snaps {
        writeln!(
            block,
            "{},{},{},{}",
            fmt17(snap.t),
            fmt17(snap.distance.unwrap_or(f64::NAN)),
            fmt17(snap.mass),
            fmt17(snap.boundary_density)
        )?;
    }
    match ctx.sidecar(".stamps")? {
        Some(mut side) => {
            side.write_all(&block)?;
            side.flush()?;
        }
        None => io::stderr().write_all(&block)?,
    }
    Ok(())
}

struct Check {
    failures: usize,
}

impl Check {
    fn record(&mut self, name: &str, value: Result<f64, Error>, tol: f64) {
        match value {
            Ok(v) if v <= tol => println!("ok    {name}: {v:.3e} <= {tol:.0e}"),
            Ok(v) => {
                self.failures += 1;
                println!("FAIL  {name}: {v:.3e} > {tol:.0e}");
            }
            Err(e) => {
                self.failures += 1;
                println!("FAIL  {name}: {e}");
            }
        }
    }
}

fn selftest() -> Result<usize, Error> {
    let mut c = Check { failures: 0 };
    let exp = JobSizeLaw::exponential(1.0)?;
    let p = ModelParams::exponential(0.9, 2)?;
    let closed = |len: usize, f: fn(&ModelParams, f64) -> f64| CcdfCurve::from_fn(1e-3, len, |s| f(&p, s));
    let fp = solve_stationary(&exp, &p, &SolveOptions::with_h(1e-3)).map(|r| r.0);
    c.record(
        "exponential fixed point vs closed form",
        fp.clone()
            .and_then(|f| kolmogorov_distance(&f, &closed(f.len(), ll_workload_ccdf_exp)?)),
        1e-4,
    );
    c.record(
        "exponential ODE vs closed form",
        solve_ode(&exp, &p, 1e-3, None)
            .and_then(|(o, _)| kolmogorov_distance(&o, &closed(o.len(), ll_workload_ccdf_exp)?)),
        1e-8,
    );
    c.record(
        "exponential response vs closed form",
        fp.and_then(|f| {
            let r = response_ccdf(&f, &exp, 2)?;
            kolmogorov_distance(&r, &closed(r.len(), ll_response_ccdf_exp)?)
        }),
        1e-4,
    );
    c.record(
        "SQ cavity vs series",
        solve_sq_cavity(&exp, &p, &SqOptions::default())
            .map(|(_, r)| (r.mean_response - llmf::analytic::sq_mean_response_exp(&p, 64).value).abs()),
        1e-6,
    );
    for text in ["hexp(scv=20,f=0.5)", "det(c=1)"] {
        let law = parse_law(text)?;
        let q = ModelParams::for_law(0.9, 2, &law)?;
        let fp = solve_stationary(&law, &q, &SolveOptions::with_h(1e-3)).map(|r| r.0);
        c.record(
            &format!("{text} fixed point vs ODE"),
            fp.clone()
                .and_then(|f| kolmogorov_distance(&f, &solve_ode(&law, &q, 1e-3, Some(f.smax()))?.0)),
            1e-3,
        );
        c.record(
            &format!("{text} level-crossing residual"),
            fp.and_then(|f| level_crossing_residual(&f, &law, &q)),
            5e-3,
        );
    }
    let sim = run_replicated(&SimConfig::new(1000, 0.9, 2, Policy::Ll, exp.clone()));
    let t = llmf::analytic::ll_mean_response_auto(&p).value;
    c.record(
        "simulation mean outside its CI (N=1000)",
        sim.map(|s| ((s.mean_response - t).abs() - s.ci_halfwidth).max(0.0)),
        0.0,
    );
    Ok(c.failures)
}

fn run(cli: Cli) -> CliResult {
    let cfg = match &cli.config {
        Some(path) => parse_config(&std::fs::read_to_string(path)?)?,
        None => BTreeMap::new(),
    };
    let ctx = Ctx { cfg, out: cli.out };
    match &cli.cmd {
        Command::Workload(a) => cmd_workload(&ctx, a),
        Command::Response(a) => cmd_response(&ctx, a),
        Command::RatioSweep(a) => cmd_ratio_sweep(&ctx, a),
        Command::TauFrontier(a) => cmd_tau_frontier(&ctx, a),
        Command::Simulate(a) => cmd_simulate(&ctx, a),
        Command::Transient(a) => cmd_transient(&ctx, a),
        Command::Selftest => match selftest()? {
            0 => Ok(()),
            n => Err(Failure::Other(format!("{n} self-test check(s) failed"))),
        },
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::NotConverged(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::Other(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
