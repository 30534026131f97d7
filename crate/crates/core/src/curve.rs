//! Uniformly gridded complementary distribution functions.

use std::io::{self, BufRead, Write};

use crate::error::{Error, Result};

/// `P(X > s)` sampled at `s = 0, h, 2h, ..., smax`.
#[derive(Debug, Clone, PartialEq)]
pub struct CcdfCurve {
    h: f64,
    values: Vec<f64>,
}

impl CcdfCurve {
    pub fn new(h: f64, values: Vec<f64>) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidParameter(format!("grid step must be positive, got {h}")));
        }
        if values.is_empty() {
            return Err(Error::InvalidParameter("curve needs at least one grid point".into()));
        }
        Ok(Self { h, values })
    }

    /// Tabulates `f` on `len` grid points.
    pub fn from_fn(h: f64, len: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(h, (0..len).map(|k| f(k as f64 * h)).collect())
    }

    /// Number of grid points needed to cover `[0, smax]`.
    pub fn grid_len(h: f64, smax: f64) -> usize {
        (smax / h).round() as usize + 1
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn smax(&self) -> f64 {
        (self.values.len() - 1) as f64 * self.h
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn s(&self, k: usize) -> f64 {
        k as f64 * self.h
    }

    pub fn last(&self) -> f64 {
        *self.values.last().expect("non-empty")
    }

    /// Linear interpolation; zero beyond `smax`.
    pub fn eval(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return self.values[0];
        }
        let x = s / self.h;
        let k = x.floor() as usize;
        if k + 1 >= self.values.len() {
            return if k + 1 == self.values.len() { self.last() } else { 0.0 };
        }
        let w = x - k as f64;
        self.values[k] * (1.0 - w) + self.values[k + 1] * w
    }

    /// Checks the ccdf shape: values in `[0, 1]` and nonincreasing within `tol`.
    pub fn is_valid_ccdf(&self, tol: f64) -> bool {
        self.values.iter().all(|&v| (-tol..=1.0 + tol).contains(&v))
            && self.values.windows(2).all(|w| w[1] <= w[0] + tol)
    }

    /// Curve truncated to the first `len` points.
    pub fn truncated(&self, len: usize) -> Self {
        Self {
            h: self.h,
            values: self.values[..len.min(self.values.len())].to_vec(),
        }
    }

    /// Trapezoidal integral of the curve, with `ccdf(smax) * smax` as a tail error estimate.
    pub fn mean(&self) -> (f64, f64) {
        let v = &self.values;
        let mut total = 0.0;
        for w in v.windows(2) {
            total += 0.5 * (w[0] + w[1]) * self.h;
        }
        (total, self.last() * self.smax())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "s,ccdf")?;
        for (k, v) in self.values.iter().enumerate() {
            writeln!(out, "{},{}", fmt17(self.s(k)), fmt17(*v))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty curve file".into()))?
            .map_err(|e| Error::Parse(e.to_string()))?;
        if header.trim() != "s,ccdf" {
            return Err(Error::Parse(format!("unexpected header {header:?}")));
        }
        let mut s = Vec::new();
        let mut values = Vec::new();
        for line in lines {
            let line = line.map_err(|e| Error::Parse(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let (a, b) = line
                .split_once(',')
                .ok_or_else(|| Error::Parse(format!("bad row {line:?}")))?;
            s.push(parse_f64(a)?);
            values.push(parse_f64(b)?);
        }
        if s.len() < 2 {
            return Err(Error::Parse("curve file needs at least two rows".into()));
        }
        let h = s[1] - s[0];
        Self::new(h, values)
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("not a number: {s:?}")))
}

/// 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Sup-norm distance over the shared grid prefix.
pub fn kolmogorov_distance(a: &CcdfCurve, b: &CcdfCurve) -> Result<f64> {
    if (a.h - b.h).abs() > 1e-12 * a.h.max(b.h) {
        return Err(Error::GridMismatch(format!("steps {} and {}", a.h, b.h)));
    }
    Ok(a.values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn curve(v: Vec<f64>) -> CcdfCurve {
        CcdfCurve::new(0.1, v).unwrap()
    }

    #[test]
    fn distance_basics() {
        let x = curve(vec![0.9, 0.5, 0.1]);
        assert_eq!(kolmogorov_distance(&x, &x).unwrap(), 0.0);
        let one = curve(vec![1.0; 5]);
        let zero = curve(vec![0.0; 5]);
        assert_eq!(kolmogorov_distance(&one, &zero).unwrap(), 1.0);
        let other = CcdfCurve::new(0.2, vec![1.0; 5]).unwrap();
        assert!(kolmogorov_distance(&one, &other).is_err());
    }

    #[test]
    fn mean_of_zero_curve() {
        assert_eq!(curve(vec![0.0; 10]).mean(), (0.0, 0.0));
    }

    #[test]
    fn csv_round_trip() {
        let c = CcdfCurve::from_fn(0.01, 300, |s| (-s).exp()).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("s,ccdf\n0.0000000000000000e0,1.0000000000000000e0\n"));
        let back = CcdfCurve::read_csv(&buf[..]).unwrap();
        assert_eq!(back.values(), c.values());
    }

    fn arb_curve() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1.0, 16)
    }

    proptest! {
        #[test]
        fn triangle_inequality(a in arb_curve(), b in arb_curve(), c in arb_curve()) {
            let (a, b, c) = (curve(a), curve(b), curve(c));
            let ab = kolmogorov_distance(&a, &b).unwrap();
            let bc = kolmogorov_distance(&b, &c).unwrap();
            let ac = kolmogorov_distance(&a, &c).unwrap();
            prop_assert!(ac <= ab + bc + 1e-15);
            prop_assert_eq!(ab, kolmogorov_distance(&b, &a).unwrap());
        }
    }
}
