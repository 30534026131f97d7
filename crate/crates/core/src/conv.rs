//! Discrete linear convolution through zero-padded FFTs.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Precomputed spectrum of a fixed kernel, reused for many signals of bounded length.
pub struct Convolver {
    n: usize,
    out_len: usize,
    kernel_hat: Vec<Complex64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Convolver {
    /// `kernel` is convolved with signals of at most `signal_len` entries; only the first
    /// `out_len` outputs are kept.
    pub fn new(kernel: &[f64], signal_len: usize, out_len: usize) -> Self {
        let n = (kernel.len() + signal_len).next_power_of_two().max(2);
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let mut kernel_hat: Vec<Complex64> = kernel.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        kernel_hat.resize(n, Complex64::new(0.0, 0.0));
        forward.process(&mut kernel_hat);
        Self {
            n,
            out_len,
            kernel_hat,
            forward,
            inverse,
        }
    }

    /// `out[i] = sum_j signal[j] * kernel[i - j]` for `i < out_len`.
    pub fn apply(&self, signal: &[f64]) -> Vec<f64> {
        assert!(signal.len() <= self.n, "signal longer than planned");
        let mut buf: Vec<Complex64> = signal.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        buf.resize(self.n, Complex64::new(0.0, 0.0));
        self.forward.process(&mut buf);
        for (b, k) in buf.iter_mut().zip(&self.kernel_hat) {
            *b *= k;
        }
        self.inverse.process(&mut buf);
        let scale = 1.0 / self.n as f64;
        buf.iter().take(self.out_len).map(|c| c.re * scale).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_direct_sum() {
        let kernel: Vec<f64> = (0..37).map(|k| (-(k as f64) * 0.1).exp()).collect();
        let signal: Vec<f64> = (0..50).map(|k| ((k * 7 % 11) as f64).sin()).collect();
        let conv = Convolver::new(&kernel, signal.len(), 60);
        let fast = conv.apply(&signal);
        for i in 0..60 {
            let mut direct = 0.0;
            for j in 0..signal.len() {
                if i >= j && i - j < kernel.len() {
                    direct += signal[j] * kernel[i - j];
                }
            }
            assert!((fast[i] - direct).abs() < 1e-12, "{i}");
        }
    }
}
