use crate::error::{Error, Result};
use crate::jobsize::JobSizeLaw;

/// Per-server arrival rate, number of choices and offered load `rho = lambda * E[G]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub lambda: f64,
    pub d: u32,
    pub rho: f64,
}

impl ModelParams {
    pub fn new(lambda: f64, d: u32, mean_job: f64) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidParameter(format!("d must be >= 2, got {d}")));
        }
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        let rho = lambda * mean_job;
        if !(rho < 1.0) {
            return Err(Error::Unstable(rho));
        }
        Ok(Self { lambda, d, rho })
    }

    /// Unit-mean exponential jobs, so `rho = lambda`.
    pub fn exponential(lambda: f64, d: u32) -> Result<Self> {
        Self::new(lambda, d, 1.0)
    }

    pub fn for_law(lambda: f64, d: u32, law: &JobSizeLaw) -> Result<Self> {
        Self::new(lambda, d, law.mean())
    }

    /// `d * rho^d`, the Lipschitz constant of the fixed-point operator in the uniform metric.
    pub fn contraction_bound(&self) -> f64 {
        self.d as f64 * self.rho.powi(self.d as i32)
    }

    pub fn df(&self) -> f64 {
        self.d as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(matches!(ModelParams::exponential(1.1, 2), Err(Error::Unstable(_))));
        assert!(ModelParams::exponential(0.5, 1).is_err());
        assert!(ModelParams::exponential(0.0, 2).is_err());
        let p = ModelParams::new(0.4, 2, 2.0).unwrap();
        assert!((p.rho - 0.8).abs() < 1e-15);
        assert!((p.contraction_bound() - 1.28).abs() < 1e-12);
    }
}
