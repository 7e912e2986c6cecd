//! Monotone piecewise-cubic Hermite interpolation (Fritsch–Carlson slopes).

use crate::error::{FptError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneCubic {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
}

impl MonotoneCubic {
    /// Build from knots with strictly increasing abscissae.
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(FptError::InvalidParameter("knot arrays differ in length".into()));
        }
        if xs.len() < 2 {
            return Err(FptError::InvalidParameter("need at least two knots".into()));
        }
        if xs.iter().chain(&ys).any(|v| !v.is_finite()) {
            return Err(FptError::InvalidParameter("knots must be finite".into()));
        }
        if let Some(w) = xs.windows(2).find(|w| w[1] <= w[0]) {
            return Err(FptError::InvalidParameter(format!(
                "knots must be strictly increasing, found {} then {}",
                w[0], w[1]
            )));
        }
        let n = xs.len();
        let secants: Vec<f64> = (0..n - 1).map(|i| (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i])).collect();
        let mut slopes = vec![0.0; n];
        slopes[0] = secants[0];
        slopes[n - 1] = secants[n - 2];
        for i in 1..n - 1 {
            let (d0, d1) = (secants[i - 1], secants[i]);
            slopes[i] = if d0 * d1 <= 0.0 {
                0.0
            } else {
                // weighted harmonic mean keeps each segment monotone
                let h0 = xs[i] - xs[i - 1];
                let h1 = xs[i + 1] - xs[i];
                let w0 = 2.0 * h1 + h0;
                let w1 = h1 + 2.0 * h0;
                (w0 + w1) / (w0 / d0 + w1 / d1)
            };
        }
        // endpoint slopes must not overshoot the adjacent secant
        for (i, s) in [(0usize, 0usize), (n - 1, n - 2)] {
            if slopes[i] * secants[s] <= 0.0 {
                slopes[i] = 0.0;
            } else if slopes[i].abs() > 3.0 * secants[s].abs() {
                slopes[i] = 3.0 * secants[s];
            }
        }
        Ok(Self { xs, ys, slopes })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.xs[0], self.xs[self.xs.len() - 1])
    }

    pub fn knots(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.xs.iter().copied().zip(self.ys.iter().copied())
    }

    fn segment(&self, x: f64) -> Result<usize> {
        let (lo, hi) = self.domain();
        if !(x >= lo && x <= hi) {
            return Err(FptError::Domain(format!("{x} outside interpolation range [{lo}, {hi}]")));
        }
        let idx = self.xs.partition_point(|&k| k <= x);
        Ok(idx.clamp(1, self.xs.len() - 1) - 1)
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        let i = self.segment(x)?;
        let h = self.xs[i + 1] - self.xs[i];
        let s = (x - self.xs[i]) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        Ok(h00 * self.ys[i] + h10 * h * self.slopes[i] + h01 * self.ys[i + 1] + h11 * h * self.slopes[i + 1])
    }

    pub fn derivative(&self, x: f64) -> Result<f64> {
        let i = self.segment(x)?;
        let h = self.xs[i + 1] - self.xs[i];
        let s = (x - self.xs[i]) / h;
        let s2 = s * s;
        let d00 = 6.0 * s2 - 6.0 * s;
        let d10 = 3.0 * s2 - 4.0 * s + 1.0;
        let d01 = -6.0 * s2 + 6.0 * s;
        let d11 = 3.0 * s2 - 2.0 * s;
        Ok((d00 * self.ys[i] + d01 * self.ys[i + 1]) / h + d10 * self.slopes[i] + d11 * self.slopes[i + 1])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reproduces_knots_and_lines() {
        let m = MonotoneCubic::new(vec![0.0, 1.0, 2.5, 4.0], vec![1.0, 3.0, 6.0, 9.0]).unwrap();
        for (x, y) in [(0.0, 1.0), (1.0, 3.0), (2.5, 6.0), (4.0, 9.0)] {
            assert!((m.eval(x).unwrap() - y).abs() < 1e-14);
        }
        let line = MonotoneCubic::new(vec![0.0, 1.0, 3.0], vec![0.0, 2.0, 6.0]).unwrap();
        assert!((line.eval(2.2).unwrap() - 4.4).abs() < 1e-14);
        assert!((line.derivative(0.4).unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_knots() {
        assert!(MonotoneCubic::new(vec![0.0, 0.0], vec![1.0, 2.0]).is_err());
        assert!(MonotoneCubic::new(vec![0.0], vec![1.0]).is_err());
        let m = MonotoneCubic::new(vec![0.0, 1.0], vec![1.0, 2.0]).unwrap();
        assert!(m.eval(1.5).is_err());
    }

    proptest! {
        #[test]
        fn monotone_data_gives_monotone_interpolant(incs in proptest::collection::vec(0.0f64..2.0, 3..12), q in 0.0f64..1.0) {
            let xs: Vec<f64> = (0..incs.len()).map(|i| i as f64 * 0.7).collect();
            let ys: Vec<f64> = incs.iter().scan(0.0, |acc, d| { *acc += d; Some(*acc) }).collect();
            let m = MonotoneCubic::new(xs.clone(), ys).unwrap();
            let (lo, hi) = m.domain();
            let x = lo + q * (hi - lo);
            let x2 = (x + 0.05).min(hi);
            prop_assert!(m.eval(x).unwrap() <= m.eval(x2).unwrap() + 1e-12);
            prop_assert!(m.derivative(x).unwrap() >= -1e-12);
        }
    }
}
