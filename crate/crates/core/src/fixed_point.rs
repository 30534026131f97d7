//! Stationary LL(d) workload for general job sizes.
//!
//! The stationary workload ccdf is the unique solution of
//!
//! ```text
//! Fbar(s) = rho - lambda * int_0^s (1 - Fbar(u)^d) Gbar(s - u) du
//! ```
//!
//! and is computed by iterating the right-hand side from the empty system. Convolutions use
//! the trapezoidal rule on the shared uniform grid, evaluated with FFTs. The kernel `Gbar` is
//! tabulated from the job-size law directly; at an atom of the law the grid value is the
//! average of the one-sided limits, which keeps the trapezoidal rule consistent.

use crate::conv::Convolver;
use crate::curve::{kolmogorov_distance, CcdfCurve};
use crate::error::{Error, Result};
use crate::jobsize::JobSizeLaw;
use crate::model::ModelParams;

/// Ccdf level below which the grid is considered to have covered the distribution.
pub const TAIL_EPS: f64 = 1e-10;
/// Largest truncation point, in units of the mean job size.
pub const SMAX_CAP: f64 = 200.0;

/// Selection terms on the grid: `c_d(u) = f(u) Fbar(u)^{d-1}` and `C_d(u) = (1 - Fbar(u)^d) / d`.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionTerms {
    pub density: Vec<f64>,
    pub cumulative: Vec<f64>,
}

/// `f` by central differences of the ccdf, one-sided at both ends.
pub fn grid_density(curve: &CcdfCurve) -> Vec<f64> {
    let v = curve.values();
    let h = curve.h();
    let n = v.len();
    if n == 1 {
        return vec![0.0];
    }
    (0..n)
        .map(|k| {
            if k == 0 {
                (v[0] - v[1]) / h
            } else if k == n - 1 {
                (v[n - 2] - v[n - 1]) / h
            } else {
                (v[k - 1] - v[k + 1]) / (2.0 * h)
            }
        })
        .collect()
}

pub fn selection_density_terms(curve: &CcdfCurve, d: u32) -> SelectionTerms {
    let df = d as f64;
    let f = grid_density(curve);
    let density = curve
        .values()
        .iter()
        .zip(&f)
        .map(|(&fb, &fk)| fk * fb.powi(d as i32 - 1))
        .collect();
    let cumulative = curve
        .values()
        .iter()
        .map(|&fb| (1.0 - fb.powi(d as i32)) / df)
        .collect();
    SelectionTerms { density, cumulative }
}

/// The fixed-point operator on a fixed grid.
pub struct StationaryOperator {
    params: ModelParams,
    h: f64,
    len: usize,
    kernel: Vec<f64>,
    // Gbar(s_i -): the u = 0 endpoint sees the kernel from the left
    left: Vec<f64>,
    conv: Convolver,
}

impl StationaryOperator {
    pub fn new(law: &JobSizeLaw, params: ModelParams, h: f64, len: usize) -> Self {
        let kernel = law.kernel_table(0.0, h, len);
        let conv = Convolver::new(&kernel, len, len);
        let left = (0..len).map(|i| law.ccdf_left(i as f64 * h)).collect();
        Self {
            params,
            h,
            len,
            kernel,
            left,
            conv,
        }
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Output values before clipping: `rho - lambda * trapezoid(int_0^s (1 - Fbar^d) Gbar(s - u) du)`.
    fn raw(&self, values: &[f64]) -> Vec<f64> {
        let d = self.params.d as i32;
        let a: Vec<f64> = values.iter().map(|&fb| 1.0 - fb.powi(d)).collect();
        let full = self.conv.apply(&a);
        let (a0, b0) = (a[0], self.kernel[0]);
        full.iter()
            .enumerate()
            .map(|(i, &c)| {
                let integral = if i == 0 {
                    0.0
                } else {
                    self.h * (c - a0 * (self.kernel[i] - 0.5 * self.left[i]) - 0.5 * a[i] * b0)
                };
                self.params.rho - self.params.lambda * integral
            })
            .collect()
    }

    pub fn apply(&self, curve: &CcdfCurve) -> Result<CcdfCurve> {
        self.check_grid(curve)?;
        let out = self
            .raw(curve.values())
            .into_iter()
            .map(|v| v.clamp(0.0, 1.0))
            .collect();
        CcdfCurve::new(self.h, out)
    }

    fn check_grid(&self, curve: &CcdfCurve) -> Result<()> {
        if (curve.h() - self.h).abs() > 1e-12 * self.h || curve.len() != self.len {
            return Err(Error::GridMismatch(format!(
                "curve has step {} and {} points, operator expects step {} and {} points",
                curve.h(),
                curve.len(),
                self.h,
                self.len
            )));
        }
        Ok(())
    }

    /// The empty member of the iteration space: `rho` at zero, zero beyond.
    pub fn empty_start(&self) -> CcdfCurve {
        let mut v = vec![0.0; self.len];
        v[0] = self.params.rho;
        CcdfCurve::new(self.h, v).expect("valid grid")
    }
}

/// One application of the operator to `curve` on the curve's own grid.
pub fn apply_td(curve: &CcdfCurve, law: &JobSizeLaw, p: &ModelParams) -> Result<CcdfCurve> {
    StationaryOperator::new(law, *p, curve.h(), curve.len()).apply(curve)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Grid step; `None` means `1e-3 * E[G]`.
    pub h: Option<f64>,
    /// Convergence threshold on the distance between successive iterates.
    pub tol: f64,
    pub max_iter: usize,
    /// Fixed truncation point; `None` extends the grid until the ccdf drops below
    /// [`TAIL_EPS`] or [`SMAX_CAP`] mean job sizes are reached.
    pub smax: Option<f64>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            h: None,
            tol: 1e-8,
            max_iter: 20_000,
            smax: None,
        }
    }
}

impl SolveOptions {
    pub fn with_h(h: f64) -> Self {
        Self {
            h: Some(h),
            ..Self::default()
        }
    }

    pub fn step_for(&self, law: &JobSizeLaw) -> f64 {
        self.h.unwrap_or(1e-3 * law.mean())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointReport {
    pub iterations: usize,
    /// Distance between the last two iterates.
    pub final_dk: f64,
    /// `d_K(F_{n+1}, F_n) / d_K(F_n, F_{n-1})` for every iteration after the first.
    pub contraction_estimates: Vec<f64>,
    pub converged: bool,
    /// `d * rho^d`.
    pub contraction_bound: f64,
    /// `final_dk * c / (1 - c)` when `c = d rho^d < 1`.
    pub error_bound: Option<f64>,
    /// Set when `d rho^d >= 1`, where convergence is observed but not guaranteed.
    pub unproven_regime: bool,
    pub smax: f64,
    pub tail: f64,
}

impl FixedPointReport {
    pub fn summary(&self) -> String {
        let last = self.contraction_estimates.last().copied().unwrap_or(f64::NAN);
        let mut s = format!(
            "iterations={} final_dk={:.3e} converged={} d*rho^d={:.4} last_ratio={:.4} smax={} tail={:.3e}",
            self.iterations, self.final_dk, self.converged, self.contraction_bound, last, self.smax, self.tail
        );
        match self.error_bound {
            Some(b) => s.push_str(&format!(" error_bound={b:.3e}")),
            None => s.push_str(" unproven regime"),
        }
        s
    }
}

/// Iterates the operator from the empty system until successive iterates are `tol` apart.
pub fn solve_stationary(
    law: &JobSizeLaw,
    p: &ModelParams,
    opts: &SolveOptions,
) -> Result<(CcdfCurve, FixedPointReport)> {
    if !(p.rho < 1.0) {
        return Err(Error::Unstable(p.rho));
    }
    let h = opts.step_for(law);
    let cap = SMAX_CAP * law.mean();
    let mut smax = opts.smax.unwrap_or_else(|| (40.0 * law.mean()).min(cap));
    let mut start: Option<Vec<f64>> = None;
    let mut iterations = 0;
    let mut ratios = Vec::new();
    let c = p.contraction_bound();

    loop {
        let len = CcdfCurve::grid_len(h, smax);
        let op = StationaryOperator::new(law, *p, h, len);
        let mut current = match start.take() {
            Some(mut v) => {
                v.resize(len, 0.0);
                CcdfCurve::new(h, v)?
            }
            None => op.empty_start(),
        };
        let mut prev_dk = f64::NAN;
        let mut dk = f64::INFINITY;
        let mut converged = false;
        while iterations < opts.max_iter {
            let next = op.apply(&current)?;
            dk = kolmogorov_distance(&next, &current)?;
            iterations += 1;
            if prev_dk.is_finite() && prev_dk > 0.0 {
                ratios.push(dk / prev_dk);
            }
            prev_dk = dk;
            current = next;
            if dk < opts.tol {
                converged = true;
                break;
            }
        }
        let tail = current.last();
        let extend = opts.smax.is_none() && converged && tail > TAIL_EPS && smax < cap;
        if !extend {
            let report = FixedPointReport {
                iterations,
                final_dk: dk,
                contraction_estimates: ratios,
                converged,
                contraction_bound: c,
                error_bound: (c < 1.0).then(|| dk * c / (1.0 - c)),
                unproven_regime: c >= 1.0,
                smax: current.smax(),
                tail,
            };
            return Ok((current, report));
        }
        smax = (2.0 * smax).min(cap);
        start = Some(current.into_values());
    }
}

/// Tables of `Gbar` shared by the response and level-crossing computations.
struct HalfGrid {
    /// `Gbar((m + 1/2) h)`.
    half: Vec<f64>,
}

impl HalfGrid {
    fn new(law: &JobSizeLaw, h: f64, len: usize) -> Self {
        Self {
            half: law.kernel_table(0.5 * h, h, len),
        }
    }
}

/// Increments `F^d(s_j) - F^d(s_{j+1})` of the ccdf of the minimum of `d` workloads.
fn min_increments(curve: &CcdfCurve, d: u32) -> Vec<f64> {
    let d = d as i32;
    curve.values().windows(2).map(|w| w[0].powi(d) - w[1].powi(d)).collect()
}

/// FCFS response-time ccdf `P(V + X > s)`, where the waiting time `V` has ccdf `Fbar^d` and is
/// independent of the job size `X`.
///
/// The Stieltjes integral over the continuous part of `V` uses the midpoint rule per grid cell.
pub fn response_ccdf(workload: &CcdfCurve, law: &JobSizeLaw, d: u32) -> Result<CcdfCurve> {
    let h = workload.h();
    let n = workload.len();
    let v = workload.values();
    let di = d as i32;
    let atom = 1.0 - v[0].powi(di);
    let gbar = law.ccdf_grid(h, n);
    if n == 1 {
        return CcdfCurve::new(h, vec![1.0]);
    }
    let half = HalfGrid::new(law, h, n);
    let dh = min_increments(workload, d);
    let conv = Convolver::new(&half.half, dh.len(), n).apply(&dh);
    let out = (0..n)
        .map(|i| {
            let waited = if i == 0 { 0.0 } else { conv[i - 1] };
            (atom * gbar[i] + waited + v[i].powi(di)).clamp(0.0, 1.0)
        })
        .collect();
    CcdfCurve::new(h, out)
}

/// Largest mismatch between the downcrossing rate `f(s)` and the upcrossing rate
/// `lambda d (C_d(0) Gbar(s) + int_0^s c_d(u) Gbar(s - u) du)`, both evaluated at cell midpoints.
pub fn level_crossing_residual(workload: &CcdfCurve, law: &JobSizeLaw, p: &ModelParams) -> Result<f64> {
    let h = workload.h();
    let n = workload.len();
    if n < 2 {
        return Ok(0.0);
    }
    let v = workload.values();
    let di = p.d as i32;
    let atom = 1.0 - v[0].powi(di);
    let dh = min_increments(workload, p.d);
    let half = HalfGrid::new(law, h, n);
    // Gbar(m h) for m >= 1, jump-averaged
    let shifted = law.kernel_table(h, h, n);
    let conv = Convolver::new(&shifted, dh.len(), dh.len()).apply(&dh);
    let quarter = law.ccdf_mid(0.25 * h);
    let mut worst: f64 = 0.0;
    for k in 0..dh.len() {
        let down = (v[k] - v[k + 1]) / h;
        let inner = if k == 0 { 0.0 } else { conv[k - 1] };
        let up = p.lambda * (atom * half.half[k] + inner + 0.5 * quarter * dh[k]);
        worst = worst.max((down - up).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{ll_response_ccdf_exp, ll_workload_ccdf_exp};
    use crate::jobsize::{fit_hyperexp, HexpFitSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn exp_curve(p: &ModelParams, h: f64, smax: f64) -> CcdfCurve {
        CcdfCurve::from_fn(h, CcdfCurve::grid_len(h, smax), |s| ll_workload_ccdf_exp(p, s)).unwrap()
    }

    #[test]
    fn selection_terms_edge_cases() {
        let empty = CcdfCurve::new(0.1, vec![0.0; 20]).unwrap();
        let t = selection_density_terms(&empty, 3);
        assert!(t.cumulative.iter().all(|&c| (c - 1.0 / 3.0).abs() < 1e-15));
        let full = CcdfCurve::new(0.1, vec![1.0; 20]).unwrap();
        let t = selection_density_terms(&full, 2);
        assert!(t.cumulative.iter().all(|&c| c == 0.0));
        assert!(t.density.iter().all(|&c| c == 0.0));
        let p = ModelParams::exponential(0.5, 2).unwrap();
        let t = selection_density_terms(&exp_curve(&p, 1e-3, 20.0), 2);
        assert!((t.cumulative[0] - 0.375).abs() < 1e-15);
        assert!(t.cumulative.windows(2).all(|w| w[1] >= w[0]));
        assert!((t.cumulative.last().unwrap() - 0.5).abs() < 1e-8);
    }

    #[test]
    fn operator_on_instant_empty_input() {
        let law = JobSizeLaw::exponential(1.0).unwrap();
        let p = ModelParams::exponential(0.6, 2).unwrap();
        let h = 1e-3;
        let zero = CcdfCurve::new(h, vec![0.0; 5001]).unwrap();
        let out = apply_td(&zero, &law, &p).unwrap();
        for k in (0..5001).step_by(250) {
            let s = k as f64 * h;
            let expected = (0.6 - 0.6 * (1.0 - (-s).exp())).max(0.0);
            assert!((out.values()[k] - expected).abs() < 1e-7, "s={s}");
        }
    }

    #[test]
    fn closed_form_is_a_fixed_point() {
        let law = JobSizeLaw::exponential(1.0).unwrap();
        let p = ModelParams::exponential(0.9, 2).unwrap();
        let h = 1e-3;
        let curve = exp_curve(&p, h, 40.0);
        let out = apply_td(&curve, &law, &p).unwrap();
        let dk = kolmogorov_distance(&curve, &out).unwrap();
        assert!(dk <= 2.0 * h * 0.9, "{dk}");
        assert!(dk <= 1e-6, "{dk}");
    }

    #[test]
    fn grid_mismatch_rejected() {
        let law = JobSizeLaw::exponential(1.0).unwrap();
        let p = ModelParams::exponential(0.5, 2).unwrap();
        let op = StationaryOperator::new(&law, p, 0.01, 100);
        let other = CcdfCurve::new(0.02, vec![0.0; 100]).unwrap();
        assert!(matches!(op.apply(&other), Err(Error::GridMismatch(_))));
        let short = CcdfCurve::new(0.01, vec![0.0; 50]).unwrap();
        assert!(op.apply(&short).is_err());
    }

    fn random_ordered_pair(rng: &mut ChaCha8Rng, rho: f64, len: usize) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![rho; len];
        let mut hi = vec![rho; len];
        let (mut a, mut b) = (rho, rho);
        for k in 1..len {
            a *= 1.0 - rng.random::<f64>() * 0.05;
            b *= 1.0 - rng.random::<f64>() * 0.05;
            lo[k] = a.min(b);
            hi[k] = a.max(b);
        }
        (lo, hi)
    }

    #[test]
    fn operator_is_monotone() {
        let law = fit_hyperexp(HexpFitSpec::new(4.0, 0.5)).unwrap();
        let p = ModelParams::for_law(0.8, 2, &law).unwrap();
        let op = StationaryOperator::new(&law, p, 0.01, 600);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let (lo, hi) = random_ordered_pair(&mut rng, p.rho, 600);
            let a = op.apply(&CcdfCurve::new(0.01, lo).unwrap()).unwrap();
            let b = op.apply(&CcdfCurve::new(0.01, hi).unwrap()).unwrap();
            assert!(a.values().iter().zip(b.values()).all(|(x, y)| x <= &(y + 1e-14)));
        }
    }

    #[test]
    fn operator_contracts() {
        let law = JobSizeLaw::exponential(1.0).unwrap();
        let p = ModelParams::exponential(0.6, 2).unwrap();
        let c = p.contraction_bound();
        assert!(c < 1.0);
        let h = 0.01;
        let op = StationaryOperator::new(&law, p, h, 1500);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let (x, y) = random_ordered_pair(&mut rng, p.rho, 1500);
            let (x, y) = (CcdfCurve::new(h, x).unwrap(), CcdfCurve::new(h, y).unwrap());
            let before = kolmogorov_distance(&x, &y).unwrap();
            let after = kolmogorov_distance(&op.apply(&x).unwrap(), &op.apply(&y).unwrap()).unwrap();
            assert!(after <= c * before + 10.0 * h, "{after} > {c} * {before}");
        }
    }

    #[test]
    fn output_stays_in_iteration_space() {
        let law = JobSizeLaw::deterministic(1.0).unwrap();
        let p = ModelParams::for_law(0.7, 2, &law).unwrap();
        let op = StationaryOperator::new(&law, p, 0.01, 3001);
        let mut curve = op.empty_start();
        for _ in 0..5 {
            curve = op.apply(&curve).unwrap();
            assert_eq!(curve.values()[0], 0.7);
            assert!(curve.is_valid_ccdf(1e-12));
            assert!(curve.last() < 1e-6);
        }
    }

    #[test]
    fn solves_exponential_against_closed_form() {
        let law = JobSizeLaw::exponential(1.0).unwrap();
        let p = ModelParams::exponential(0.5, 2).unwrap();
        let (curve, report) = solve_stationary(
            &law,
            &p,
            &SolveOptions {
                tol: 1e-8,
                ..SolveOptions::with_h(1e-3)
            },
        )
        .unwrap();
        assert!(report.converged);
        let exact = exp_curve(&p, 1e-3, curve.smax());
        assert!(kolmogorov_distance(&curve, &exact).unwrap() <= 1e-4);
        assert!(report.tail <= TAIL_EPS);
        assert!(!report.unproven_regime);
        // after the transient iterations the observed ratio respects d rho^d
        assert!(
            report.contraction_estimates[3..].iter().all(|&r| r <= 0.55),
            "{:?}",
            report.contraction_estimates
        );
        let (mean, _) = curve.mean();
        assert!((mean - 0.575_364_144_903_561_9).abs() < 1e-5);
    }

    #[test]
    fn rejects_unstable_load() {
        let law = JobSizeLaw::exponential(1.0).unwrap();
        let p = ModelParams {
            lambda: 1.2,
            d: 2,
            rho: 1.2,
        };
        assert!(matches!(
            solve_stationary(&law, &p, &SolveOptions::default()),
            Err(Error::Unstable(_))
        ));
    }

    #[test]
    fn iteration_cap_reports_nonconvergence() {
        let law = JobSizeLaw::exponential(1.0).unwrap();
        let p = ModelParams::exponential(0.9, 2).unwrap();
        let opts = SolveOptions {
            max_iter: 3,
            ..SolveOptions::with_h(0.01)
        };
        let (_, report) = solve_stationary(&law, &p, &opts).unwrap();
        assert!(!report.converged);
        assert_eq!(report.iterations, 3);
        assert!(report.unproven_regime);
    }

    #[test]
    fn response_matches_closed_form() {
        let law = JobSizeLaw::exponential(1.0).unwrap();
        let p = ModelParams::exponential(0.9, 2).unwrap();
        let h = 1e-3;
        let resp = response_ccdf(&exp_curve(&p, h, 40.0), &law, 2).unwrap();
        assert_eq!(resp.values()[0], 1.0);
        let worst = (0..resp.len())
            .map(|k| (resp.values()[k] - ll_response_ccdf_exp(&p, k as f64 * h)).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 1e-4, "{worst}");
    }

    #[test]
    fn response_without_waiting_is_job_size() {
        let law = fit_hyperexp(HexpFitSpec::new(4.0, 0.5)).unwrap();
        let zero = CcdfCurve::new(0.01, vec![0.0; 500]).unwrap();
        let resp = response_ccdf(&zero, &law, 2).unwrap();
        for k in 0..500 {
            assert!((resp.values()[k] - law.ccdf(k as f64 * 0.01)).abs() < 1e-14);
        }
    }

    #[test]
    fn deterministic_response_is_one_before_service_ends() {
        let law = JobSizeLaw::deterministic(1.0).unwrap();
        let p = ModelParams::for_law(0.9, 2, &law).unwrap();
        let (curve, _) = solve_stationary(
            &law,
            &p,
            &SolveOptions {
                tol: 1e-6,
                ..SolveOptions::with_h(0.01)
            },
        )
        .unwrap();
        let resp = response_ccdf(&curve, &law, 2).unwrap();
        for k in 0..100 {
            assert!((resp.values()[k] - 1.0).abs() < 1e-12, "{k}");
        }
        assert!(resp.values()[101] < 1.0);
    }

    #[test]
    fn level_crossing_residuals() {
        let law = JobSizeLaw::exponential(1.0).unwrap();
        let p = ModelParams::exponential(0.9, 2).unwrap();
        let h = 1e-3;
        let good = level_crossing_residual(&exp_curve(&p, h, 40.0), &law, &p).unwrap();
        assert!(good <= 5e-3, "{good}");
        let op = StationaryOperator::new(&law, p, h, 40_001);
        let bad = level_crossing_residual(&op.empty_start(), &law, &p).unwrap();
        assert!(bad > 0.1, "{bad}");
        let tiny = ModelParams::exponential(1e-9, 2).unwrap();
        let r = level_crossing_residual(&exp_curve(&tiny, h, 20.0), &law, &tiny).unwrap();
        assert!(r < 1e-6);
    }
}
