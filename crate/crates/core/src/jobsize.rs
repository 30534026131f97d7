//! Job-size laws.
//!
//! Every law has `G(0) = 0`, a finite positive mean, closed-form (or PH matrix) tail
//! functions, and an exact sampler driven by an externally owned random stream.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};

/// Phase-type representation `(alpha, A)`: `P(X > s) = alpha exp(A s) 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhRep {
    alpha: DVector<f64>,
    generator: DMatrix<f64>,
    exit: DVector<f64>,
    mean: f64,
}

const PH_TOL: f64 = 1e-9;

impl PhRep {
    pub fn new(alpha: Vec<f64>, generator: DMatrix<f64>) -> Result<Self> {
        let n = alpha.len();
        if n == 0 {
            return Err(Error::InvalidPh("empty initial vector".into()));
        }
        if generator.nrows() != n || generator.ncols() != n {
            return Err(Error::InvalidPh(format!(
                "generator is {}x{}, expected {n}x{n}",
                generator.nrows(),
                generator.ncols()
            )));
        }
        if alpha.iter().any(|&a| !(a >= 0.0)) {
            return Err(Error::InvalidPh("initial vector has negative entries".into()));
        }
        let total: f64 = alpha.iter().sum();
        if (total - 1.0).abs() > PH_TOL {
            return Err(Error::InvalidPh(format!("initial vector sums to {total}")));
        }
        let mut any_exit = false;
        for i in 0..n {
            if !(generator[(i, i)] < 0.0) {
                return Err(Error::InvalidPh(format!("diagonal entry {i} is not negative")));
            }
            let mut row = 0.0;
            for j in 0..n {
                let v = generator[(i, j)];
                if i != j && v < 0.0 {
                    return Err(Error::InvalidPh(format!("negative off-diagonal entry ({i},{j})")));
                }
                row += v;
            }
            if row > PH_TOL {
                return Err(Error::InvalidPh(format!("row {i} sums to {row} > 0")));
            }
            if row < -PH_TOL {
                any_exit = true;
            }
        }
        if !any_exit {
            return Err(Error::InvalidPh("no absorbing transitions".into()));
        }
        let alpha = DVector::from_vec(alpha);
        let neg_inv = (-&generator)
            .try_inverse()
            .ok_or_else(|| Error::InvalidPh("-A is singular".into()))?;
        let ones = DVector::from_element(n, 1.0);
        let mean = alpha.dot(&(&neg_inv * &ones));
        if !(mean > 0.0 && mean.is_finite()) {
            return Err(Error::InvalidPh(format!("mean {mean} is not positive")));
        }
        let exit = -(&generator * &ones);
        Ok(Self {
            alpha,
            generator,
            exit,
            mean,
        })
    }

    pub fn order(&self) -> usize {
        self.alpha.len()
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    pub fn generator(&self) -> &DMatrix<f64> {
        &self.generator
    }

    /// Exit-rate vector `-A 1`.
    pub fn exit(&self) -> &DVector<f64> {
        &self.exit
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn second_moment(&self) -> f64 {
        let n = self.order();
        let neg_inv = (-&self.generator).try_inverse().expect("validated at construction");
        let ones = DVector::from_element(n, 1.0);
        2.0 * self.alpha.dot(&(&neg_inv * (&neg_inv * ones)))
    }

    pub fn ccdf(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 1.0;
        }
        let e = (&self.generator * s).exp();
        let ones = DVector::from_element(self.order(), 1.0);
        self.alpha.dot(&(e * ones)).clamp(0.0, 1.0)
    }

    pub fn pdf(&self, s: f64) -> f64 {
        if s < 0.0 {
            return 0.0;
        }
        let e = (&self.generator * s).exp();
        self.alpha.dot(&(e * &self.exit)).max(0.0)
    }

    /// `P(X > k * step)` for `k = 0..len`, by repeated multiplication with `exp(A step)`.
    pub fn ccdf_grid(&self, step: f64, len: usize) -> Vec<f64> {
        self.ccdf_grid_from(0.0, step, len)
    }

    /// `P(X > start + k * step)` for `k = 0..len`.
    pub fn ccdf_grid_from(&self, start: f64, step: f64, len: usize) -> Vec<f64> {
        let e = (&self.generator * step).exp();
        let ones = DVector::from_element(self.order(), 1.0);
        let mut v = if start > 0.0 {
            (&self.generator * start).exp() * ones
        } else {
            ones
        };
        let mut out = Vec::with_capacity(len);
        for _ in 0..len {
            out.push(self.alpha.dot(&v).clamp(0.0, 1.0));
            v = &e * v;
        }
        out
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let n = self.order();
        let mut phase = pick(rng, self.alpha.iter().copied(), 1.0).unwrap_or(n - 1);
        let mut t = 0.0;
        loop {
            let rate = -self.generator[(phase, phase)];
            t += exp_draw(rng, rate);
            // exit with probability exit/rate, otherwise move to another phase
            let u: f64 = rng.random::<f64>() * rate;
            if u < self.exit[phase] {
                return t;
            }
            let mut acc = self.exit[phase];
            let mut next = None;
            for j in 0..n {
                if j == phase {
                    continue;
                }
                acc += self.generator[(phase, j)];
                if u < acc {
                    next = Some(j);
                    break;
                }
            }
            match next {
                Some(j) => phase = j,
                None => return t,
            }
        }
    }
}

fn pick<R: Rng + ?Sized>(rng: &mut R, weights: impl Iterator<Item = f64>, total: f64) -> Option<usize> {
    let u: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, w) in weights.enumerate() {
        acc += w;
        if u < acc {
            return Some(i);
        }
    }
    None
}

fn exp_draw<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    let u: f64 = rng.random();
    -(1.0 - u).ln() / rate
}

/// Moment-matching target for a two-phase hyperexponential.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HexpFitSpec {
    pub mean: f64,
    pub scv: f64,
    /// Fraction of the offered work carried by the short (type-1) jobs.
    pub f: f64,
}

impl HexpFitSpec {
    pub fn new(scv: f64, f: f64) -> Self {
        Self { mean: 1.0, scv, f }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum JobSizeLaw {
    Exponential { rate: f64 },
    HyperExp2 { p: f64, mu1: f64, mu2: f64 },
    ErlangK { k: u32, rate: f64 },
    Deterministic { c: f64 },
    PowerLaw { beta: f64, smin: f64 },
    PhaseType(PhRep),
    DetPlusPh { tau: f64, ph: PhRep },
}

/// Fits `(p, mu1, mu2)` so that the law has the requested mean, SCV and work fraction `f`.
///
/// The rates are matched for unit mean and then rescaled by `1 / mean`.
pub fn fit_hyperexp(spec: HexpFitSpec) -> Result<JobSizeLaw> {
    let HexpFitSpec { mean, scv, f } = spec;
    if !(scv >= 1.0) || !scv.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "hyperexponential fit needs scv >= 1, got {scv}"
        )));
    }
    if !(f > 0.0 && f < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "shape fraction f must lie in (0,1), got {f}"
        )));
    }
    if !(mean > 0.0) || !mean.is_finite() {
        return Err(Error::InvalidParameter(format!("mean must be positive, got {mean}")));
    }
    let fb = 1.0 - f;
    let root = ((scv - 1.0) * (scv - 1.0 + 8.0 * f * fb)).sqrt();
    let mu1 = (scv + (4.0 * f - 1.0) + root) / (2.0 * f * (scv + 1.0));
    let mu2 = (scv + (4.0 * fb - 1.0) - root) / (2.0 * fb * (scv + 1.0));
    let p = mu1 * f;
    Ok(JobSizeLaw::HyperExp2 {
        p,
        mu1: mu1 / mean,
        mu2: mu2 / mean,
    })
}

impl JobSizeLaw {
    pub fn exponential(rate: f64) -> Result<Self> {
        positive("rate", rate)?;
        Ok(Self::Exponential { rate })
    }

    pub fn hyperexp(p: f64, mu1: f64, mu2: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidParameter(format!("p must lie in (0,1), got {p}")));
        }
        positive("mu1", mu1)?;
        positive("mu2", mu2)?;
        Ok(Self::HyperExp2 { p, mu1, mu2 })
    }

    pub fn erlang(k: u32, rate: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter("erlang order k must be >= 1".into()));
        }
        positive("rate", rate)?;
        Ok(Self::ErlangK { k, rate })
    }

    pub fn deterministic(c: f64) -> Result<Self> {
        positive("c", c)?;
        Ok(Self::Deterministic { c })
    }

    pub fn power_law(beta: f64, smin: f64) -> Result<Self> {
        if !(beta > 1.0) {
            return Err(Error::InvalidParameter(format!(
                "power-law exponent must exceed 1 for a finite mean, got {beta}"
            )));
        }
        positive("smin", smin)?;
        Ok(Self::PowerLaw { beta, smin })
    }

    pub fn det_plus_ph(tau: f64, ph: PhRep) -> Result<Self> {
        if !(tau >= 0.0) || !tau.is_finite() {
            return Err(Error::InvalidParameter(format!("tau must be >= 0, got {tau}")));
        }
        Ok(Self::DetPlusPh { tau, ph })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Exponential { .. } => "exponential",
            Self::HyperExp2 { .. } => "hyperexponential",
            Self::ErlangK { .. } => "erlang",
            Self::Deterministic { .. } => "deterministic",
            Self::PowerLaw { .. } => "power law",
            Self::PhaseType(_) => "phase-type",
            Self::DetPlusPh { .. } => "deterministic plus phase-type",
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Self::Exponential { rate } => 1.0 / rate,
            Self::HyperExp2 { p, mu1, mu2 } => p / mu1 + (1.0 - p) / mu2,
            Self::ErlangK { k, rate } => *k as f64 / rate,
            Self::Deterministic { c } => *c,
            Self::PowerLaw { beta, smin } => beta * smin / (beta - 1.0),
            Self::PhaseType(ph) => ph.mean(),
            Self::DetPlusPh { tau, ph } => tau + ph.mean(),
        }
    }

    /// `E[X^2]`; infinite for power laws with `beta <= 2`.
    pub fn second_moment(&self) -> f64 {
        match self {
            Self::Exponential { rate } => 2.0 / (rate * rate),
            Self::HyperExp2 { p, mu1, mu2 } => 2.0 * p / (mu1 * mu1) + 2.0 * (1.0 - p) / (mu2 * mu2),
            Self::ErlangK { k, rate } => {
                let k = *k as f64;
                k * (k + 1.0) / (rate * rate)
            }
            Self::Deterministic { c } => c * c,
            Self::PowerLaw { beta, smin } => {
                if *beta > 2.0 {
                    beta * smin * smin / (beta - 2.0)
                } else {
                    f64::INFINITY
                }
            }
            Self::PhaseType(ph) => ph.second_moment(),
            Self::DetPlusPh { tau, ph } => tau * tau + 2.0 * tau * ph.mean() + ph.second_moment(),
        }
    }

    /// Squared coefficient of variation.
    pub fn scv(&self) -> f64 {
        let m = self.mean();
        self.second_moment() / (m * m) - 1.0
    }

    /// `P(X > s)`.
    pub fn ccdf(&self, s: f64) -> f64 {
        if s < 0.0 {
            return 1.0;
        }
        match self {
            Self::Exponential { rate } => (-rate * s).exp(),
            Self::HyperExp2 { p, mu1, mu2 } => p * (-mu1 * s).exp() + (1.0 - p) * (-mu2 * s).exp(),
            Self::ErlangK { k, rate } => erlang_ccdf(*k, *rate, s),
            Self::Deterministic { c } => {
                if s < *c {
                    1.0
                } else {
                    0.0
                }
            }
            Self::PowerLaw { beta, smin } => {
                if s <= *smin {
                    1.0
                } else {
                    (s / smin).powf(-beta)
                }
            }
            Self::PhaseType(ph) => ph.ccdf(s),
            Self::DetPlusPh { tau, ph } => {
                if s <= *tau {
                    1.0
                } else {
                    ph.ccdf(s - tau)
                }
            }
        }
    }

    /// `P(X >= s)`, the left limit of the ccdf. Differs from [`Self::ccdf`] only at atoms.
    pub fn ccdf_left(&self, s: f64) -> f64 {
        match self {
            Self::Deterministic { c } if s <= *c => 1.0,
            _ => self.ccdf(s),
        }
    }

    /// Average of the left and right limits of the ccdf; the trapezoid-consistent value at a jump.
    pub fn ccdf_mid(&self, s: f64) -> f64 {
        0.5 * (self.ccdf(s) + self.ccdf_left(s))
    }

    pub fn cdf(&self, s: f64) -> f64 {
        1.0 - self.ccdf(s)
    }

    /// Density of the absolutely continuous part (zero for the deterministic atom).
    pub fn pdf(&self, s: f64) -> f64 {
        if s < 0.0 {
            return 0.0;
        }
        match self {
            Self::Exponential { rate } => rate * (-rate * s).exp(),
            Self::HyperExp2 { p, mu1, mu2 } => p * mu1 * (-mu1 * s).exp() + (1.0 - p) * mu2 * (-mu2 * s).exp(),
            Self::ErlangK { k, rate } => {
                if s == 0.0 {
                    return if *k == 1 { *rate } else { 0.0 };
                }
                let k = *k as f64;
                (k * rate.ln() + (k - 1.0) * s.ln() - rate * s - ln_gamma(k)).exp()
            }
            Self::Deterministic { .. } => 0.0,
            Self::PowerLaw { beta, smin } => {
                if s < *smin {
                    0.0
                } else {
                    beta / smin * (s / smin).powf(-beta - 1.0)
                }
            }
            Self::PhaseType(ph) => ph.pdf(s),
            Self::DetPlusPh { tau, ph } => {
                if s < *tau {
                    0.0
                } else {
                    ph.pdf(s - tau)
                }
            }
        }
    }

    /// `P(X > k * step)` on a uniform grid; uses matrix powers for PH-based laws.
    pub fn ccdf_grid(&self, step: f64, len: usize) -> Vec<f64> {
        match self {
            Self::PhaseType(ph) => ph.ccdf_grid(step, len),
            _ => (0..len).map(|k| self.ccdf(k as f64 * step)).collect(),
        }
    }

    /// Tail values at `start + k * step` for quadrature kernels: at an atom the average of
    /// the left and right limits is used.
    pub fn kernel_table(&self, start: f64, step: f64, len: usize) -> Vec<f64> {
        let at = |k: usize| start + k as f64 * step;
        match self {
            Self::PhaseType(ph) => ph.ccdf_grid_from(start, step, len),
            Self::DetPlusPh { tau, ph } => {
                // first index strictly beyond the delay
                let first = (0..len).find(|&k| at(k) > *tau).unwrap_or(len);
                let mut out = vec![1.0; first];
                if first < len {
                    out.extend(ph.ccdf_grid_from(at(first) - tau, step, len - first));
                }
                out
            }
            _ => (0..len).map(|k| self.ccdf_mid(at(k))).collect(),
        }
    }

    /// Canonical phase-type embedding of the law.
    pub fn as_ph(&self) -> Result<PhRep> {
        match self {
            Self::Exponential { rate } => PhRep::new(vec![1.0], DMatrix::from_element(1, 1, -rate)),
            Self::HyperExp2 { p, mu1, mu2 } => PhRep::new(
                vec![*p, 1.0 - p],
                DMatrix::from_diagonal(&DVector::from_vec(vec![-mu1, -mu2])),
            ),
            Self::ErlangK { k, rate } => {
                let k = *k as usize;
                let mut a = DMatrix::zeros(k, k);
                for i in 0..k {
                    a[(i, i)] = -rate;
                    if i + 1 < k {
                        a[(i, i + 1)] = *rate;
                    }
                }
                let mut alpha = vec![0.0; k];
                alpha[0] = 1.0;
                PhRep::new(alpha, a)
            }
            Self::PhaseType(ph) => Ok(ph.clone()),
            Self::Deterministic { .. } => Err(Error::NoPhRepresentation("deterministic law")),
            Self::PowerLaw { .. } => Err(Error::NoPhRepresentation("power law")),
            Self::DetPlusPh { .. } => Err(Error::NoPhRepresentation("deterministic plus phase-type law")),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Exponential { rate } => exp_draw(rng, *rate),
            Self::HyperExp2 { p, mu1, mu2 } => {
                let u: f64 = rng.random();
                if u < *p {
                    exp_draw(rng, *mu1)
                } else {
                    exp_draw(rng, *mu2)
                }
            }
            Self::ErlangK { k, rate } => (0..*k).map(|_| exp_draw(rng, *rate)).sum(),
            Self::Deterministic { c } => *c,
            Self::PowerLaw { beta, smin } => {
                let u: f64 = rng.random();
                smin * (1.0 - u).powf(-1.0 / beta)
            }
            Self::PhaseType(ph) => ph.sample(rng),
            Self::DetPlusPh { tau, ph } => tau + ph.sample(rng),
        }
    }
}

impl fmt::Display for JobSizeLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Exponential { rate } => write!(f, "exp(rate={rate})"),
            Self::HyperExp2 { p, mu1, mu2 } => write!(f, "hexp(p={p},mu1={mu1},mu2={mu2})"),
            Self::ErlangK { k, rate } => write!(f, "erlang(k={k},rate={rate})"),
            Self::Deterministic { c } => write!(f, "det(c={c})"),
            Self::PowerLaw { beta, smin } => write!(f, "powerlaw(beta={beta},smin={smin})"),
            Self::PhaseType(ph) => write!(f, "ph(order={})", ph.order()),
            Self::DetPlusPh { tau, ph } => write!(f, "detph(tau={tau},order={})", ph.order()),
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
    }
}

fn erlang_ccdf(k: u32, rate: f64, s: f64) -> f64 {
    if s <= 0.0 {
        return 1.0;
    }
    let x = rate * s;
    let lx = x.ln();
    let mut total = 0.0;
    for j in 0..k {
        let j = j as f64;
        total += (-x + j * lx - ln_gamma(j + 1.0)).exp();
    }
    total.min(1.0)
}

pub(crate) fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unit_scv_collapses_to_exponential() {
        let law = fit_hyperexp(HexpFitSpec::new(1.0, 0.5)).unwrap();
        let JobSizeLaw::HyperExp2 { p, mu1, mu2 } = law else {
            panic!()
        };
        assert!((mu1 - 1.0).abs() < 1e-15);
        assert!((mu2 - 1.0).abs() < 1e-15);
        assert!((p - 0.5).abs() < 1e-15);
    }

    #[test]
    fn scv20_fit_matches_moments() {
        let law = fit_hyperexp(HexpFitSpec::new(20.0, 0.5)).unwrap();
        let JobSizeLaw::HyperExp2 { p, mu1, mu2 } = law else {
            panic!()
        };
        // independent moment recomputation
        let m1 = p / mu1 + (1.0 - p) / mu2;
        let m2 = 2.0 * p / (mu1 * mu1) + 2.0 * (1.0 - p) / (mu2 * mu2);
        assert!((m1 - 1.0).abs() < 1e-12);
        assert!((m2 / (m1 * m1) - 1.0 - 20.0).abs() < 1e-9);
        // frozen values of the closed-form fit
        assert!((mu1 - 1.9511897312113419).abs() < 1e-12, "{mu1}");
        assert!((mu2 - 0.048810268788658147).abs() < 1e-12, "{mu2}");
        assert!((p - 0.97559486560567093).abs() < 1e-12, "{p}");
        assert!(mu1 > mu2 && p > 0.0 && p < 1.0);
    }

    #[test]
    fn fit_rejects_low_scv_and_bad_fraction() {
        assert!(fit_hyperexp(HexpFitSpec::new(0.5, 0.5)).is_err());
        assert!(fit_hyperexp(HexpFitSpec::new(2.0, 0.0)).is_err());
        assert!(fit_hyperexp(HexpFitSpec::new(2.0, 1.0)).is_err());
    }

    #[test]
    fn fit_moment_matrix() {
        for &scv in &[1.0, 2.0, 5.0, 10.0, 20.0] {
            for &f in &[0.1, 0.5] {
                let law = fit_hyperexp(HexpFitSpec::new(scv, f)).unwrap();
                assert!((law.mean() - 1.0).abs() < 1e-9, "mean scv={scv} f={f}");
                assert!((law.scv() - scv).abs() < 1e-9, "scv scv={scv} f={f}: {}", law.scv());
            }
        }
    }

    #[test]
    fn non_unit_mean_rescales_time() {
        let law = fit_hyperexp(HexpFitSpec {
            mean: 3.0,
            scv: 4.0,
            f: 0.3,
        })
        .unwrap();
        assert!((law.mean() - 3.0).abs() < 1e-12);
        assert!((law.scv() - 4.0).abs() < 1e-9);
    }

    #[test]
    fn basic_values() {
        let e = JobSizeLaw::exponential(1.0).unwrap();
        assert_eq!(e.cdf(0.0), 0.0);
        assert_eq!(e.ccdf(0.0), 1.0);
        let pl = JobSizeLaw::power_law(2.0, 1.0).unwrap();
        assert!((pl.ccdf(3.0) - 1.0 / 9.0).abs() < 1e-15);
        assert!((pl.mean() - 2.0).abs() < 1e-15);
        assert!(pl.second_moment().is_infinite());
        let er = JobSizeLaw::erlang(2, 2.0).unwrap();
        assert!((er.mean() - 1.0).abs() < 1e-15);
        assert!((er.ccdf(1.0) - 3.0 * (-2.0f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn det_plus_ph_tail() {
        let ph = JobSizeLaw::exponential(2.0).unwrap().as_ph().unwrap();
        let law = JobSizeLaw::det_plus_ph(0.5, ph).unwrap();
        assert_eq!(law.ccdf(0.3), 1.0);
        assert_eq!(law.ccdf(0.5), 1.0);
        assert!((law.ccdf(1.0) - (-1.0f64).exp()).abs() < 1e-13);
        assert!((law.mean() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn embeddings() {
        let ph = JobSizeLaw::exponential(1.0).unwrap().as_ph().unwrap();
        assert_eq!(ph.alpha().as_slice(), &[1.0]);
        assert_eq!(ph.generator()[(0, 0)], -1.0);

        let ph = JobSizeLaw::hyperexp(0.5, 1.0, 1.0).unwrap().as_ph().unwrap();
        assert_eq!(ph.alpha().as_slice(), &[0.5, 0.5]);
        for k in 0..50 {
            let s = k as f64 * 0.2;
            assert!((ph.ccdf(s) - (-s).exp()).abs() < 1e-13);
        }

        let ph = JobSizeLaw::erlang(3, 3.0).unwrap().as_ph().unwrap();
        assert_eq!(ph.order(), 3);
        // mean via an explicit inverse of -A
        let inv = (-ph.generator().clone()).try_inverse().unwrap();
        let mean: f64 = (0..3).map(|j| inv[(0, j)]).sum();
        assert!((mean - 1.0).abs() < 1e-13);
        assert!((ph.mean() - 1.0).abs() < 1e-13);

        assert!(matches!(
            JobSizeLaw::deterministic(1.0).unwrap().as_ph(),
            Err(Error::NoPhRepresentation(_))
        ));
        assert!(JobSizeLaw::power_law(2.0, 1.0).unwrap().as_ph().is_err());
    }

    #[test]
    fn ph_round_trip_grid() {
        let laws = [
            JobSizeLaw::exponential(1.3).unwrap(),
            fit_hyperexp(HexpFitSpec::new(20.0, 0.5)).unwrap(),
            JobSizeLaw::erlang(4, 4.0).unwrap(),
            JobSizeLaw::erlang(64, 64.0).unwrap(),
        ];
        for law in &laws {
            let ph = law.as_ph().unwrap();
            for k in 0..=100 {
                let s = k as f64 * 0.1;
                let diff = (ph.ccdf(s) - law.ccdf(s)).abs();
                assert!(diff <= 1e-12, "{law} at s={s}: {diff}");
            }
            let grid = ph.ccdf_grid(0.1, 101);
            for (k, g) in grid.iter().enumerate() {
                assert!((g - law.ccdf(k as f64 * 0.1)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn invalid_ph_rejected() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 0.0, -1.0]);
        assert!(PhRep::new(vec![0.6, 0.6], a.clone()).is_err());
        let b = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0]);
        assert!(PhRep::new(vec![0.5, 0.5], b).is_err());
        let c = DMatrix::from_row_slice(2, 2, &[-1.0, -0.5, 0.0, -1.0]);
        assert!(PhRep::new(vec![0.5, 0.5], c).is_err());
        assert!(PhRep::new(vec![0.5, 0.5], a).is_ok());
    }

    #[test]
    fn samplers() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let det = JobSizeLaw::deterministic(1.0).unwrap();
        assert!((0..100).all(|_| det.sample(&mut rng) == 1.0));

        let n = 1_000_000;
        let e = JobSizeLaw::exponential(1.0).unwrap();
        let mean = (0..n).map(|_| e.sample(&mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.01, "{mean}");

        let pl = JobSizeLaw::power_law(2.0, 1.0).unwrap();
        let above = (0..n).filter(|_| pl.sample(&mut rng) > 2.0).count() as f64 / n as f64;
        assert!((above - 0.25).abs() < 0.0025, "{above}");

        let ph = JobSizeLaw::PhaseType(JobSizeLaw::erlang(3, 3.0).unwrap().as_ph().unwrap());
        let n = 200_000;
        let mean = (0..n).map(|_| ph.sample(&mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.01, "{mean}");
    }
}
