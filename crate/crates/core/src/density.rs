//! Gaussian-kernel Parzen window estimators.
//!
//! Both estimators keep the self term when evaluated at their own samples and
//! sum kernels in sample-index order, so results are bit-reproducible.

use crate::error::{Error, Result};
use crate::linalg::SampleMatrix;

/// `(2 pi)^{-1/2}`.
pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Kernel arguments beyond this radius are skipped when truncation is on.
/// `phi(8) ~ 5e-15`, so the error is far below the estimator's own noise.
pub const TRUNCATION_RADIUS: f64 = 8.0;

/// Rule-of-thumb bandwidth `1.06 * T^{-1/5}`.
pub fn silverman_bandwidth(samples: usize) -> f64 {
    1.06 * (samples.max(1) as f64).powf(-0.2)
}

/// Standard normal density.
#[inline]
pub fn kernel_uni(u: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * u * u).exp()
}

/// Derivative of [`kernel_uni`]: `-u * phi(u)`.
#[inline]
pub fn kernel_uni_deriv(u: f64) -> f64 {
    -u * kernel_uni(u)
}

/// `M`-dimensional standard normal density.
pub fn kernel_multi(u: &[f64]) -> f64 {
    let sq: f64 = u.iter().map(|v| v * v).sum();
    (2.0 * std::f64::consts::PI).powf(-(u.len() as f64) / 2.0) * (-0.5 * sq).exp()
}

fn check_bandwidth(h: f64) -> Result<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("bandwidth must be positive, got {h}")))
    }
}

#[derive(Debug, Clone)]
pub struct ParzenUnivariate {
    samples: Vec<f64>,
    bandwidth: f64,
    truncate: bool,
}

impl ParzenUnivariate {
    pub fn new(samples: Vec<f64>, bandwidth: f64) -> Result<Self> {
        check_bandwidth(bandwidth)?;
        if samples.is_empty() {
            return Err(Error::InvalidInput("Parzen estimator needs samples".into()));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("Parzen samples must be finite".into()));
        }
        Ok(Self {
            samples,
            bandwidth,
            truncate: false,
        })
    }

    /// Skip kernel terms with `|u| > TRUNCATION_RADIUS`.
    pub fn with_truncation(mut self, on: bool) -> Self {
        self.truncate = on;
        self
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn pdf(&self, y: f64) -> f64 {
        let h = self.bandwidth;
        let mut acc = 0.0;
        for &s in &self.samples {
            let u = (y - s) / h;
            if self.truncate && u.abs() > TRUNCATION_RADIUS {
                continue;
            }
            acc += kernel_uni(u);
        }
        acc / (self.samples.len() as f64 * h)
    }

    /// `d pdf / d y`, with the samples held fixed.
    pub fn pdf_deriv(&self, y: f64) -> f64 {
        let h = self.bandwidth;
        let mut acc = 0.0;
        for &s in &self.samples {
            let u = (y - s) / h;
            if self.truncate && u.abs() > TRUNCATION_RADIUS {
                continue;
            }
            acc += kernel_uni_deriv(u);
        }
        acc / (self.samples.len() as f64 * h * h)
    }
}

#[derive(Debug, Clone)]
pub struct ParzenMultivariate {
    dim: usize,
    /// time-major: sample `t` occupies `points[t*dim..(t+1)*dim]`
    points: Vec<f64>,
    bandwidth: f64,
    truncate: bool,
}

impl ParzenMultivariate {
    pub fn new(samples: &SampleMatrix, bandwidth: f64) -> Result<Self> {
        check_bandwidth(bandwidth)?;
        if samples.samples() == 0 || samples.channels() == 0 {
            return Err(Error::InvalidInput("Parzen estimator needs samples".into()));
        }
        Ok(Self {
            dim: samples.channels(),
            points: samples.to_time_major(),
            bandwidth,
            truncate: false,
        })
    }

    pub fn with_truncation(mut self, on: bool) -> Self {
        self.truncate = on;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    fn norm(&self) -> f64 {
        let h = self.bandwidth;
        (2.0 * std::f64::consts::PI).powf(-(self.dim as f64) / 2.0) / (self.len() as f64 * h.powi(self.dim as i32))
    }

    fn kernel_sum(&self, y: &[f64]) -> f64 {
        let inv_h2 = 1.0 / (self.bandwidth * self.bandwidth);
        let cutoff = TRUNCATION_RADIUS * TRUNCATION_RADIUS;
        let mut acc = 0.0;
        for p in self.points.chunks_exact(self.dim) {
            let sq: f64 = p.iter().zip(y).map(|(a, b)| (b - a) * (b - a)).sum::<f64>() * inv_h2;
            if self.truncate && sq > cutoff {
                continue;
            }
            acc += (-0.5 * sq).exp();
        }
        acc
    }

    pub fn pdf(&self, y: &[f64]) -> Result<f64> {
        if y.len() != self.dim {
            return Err(Error::shape(
                format!("point of dimension {}", self.dim),
                format!("dimension {}", y.len()),
            ));
        }
        Ok(self.norm() * self.kernel_sum(y))
    }

    /// Density at every sample point, self term included.
    pub fn pdf_at_samples(&self) -> Vec<f64> {
        let norm = self.norm();
        self.points
            .chunks_exact(self.dim)
            .map(|y| norm * self.kernel_sum(y))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn trapezoid(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
        let dx = (hi - lo) / n as f64;
        let inner: f64 = (1..n).map(|i| f(lo + i as f64 * dx)).sum();
        dx * (0.5 * f(lo) + inner + 0.5 * f(hi))
    }

    #[test]
    fn bandwidth_values() {
        assert_eq!(silverman_bandwidth(1), 1.06);
        assert!((silverman_bandwidth(1000) - 1.06 / 10f64.powf(0.6)).abs() < 1e-15);
        assert!((silverman_bandwidth(1000) - 0.266_260).abs() < 1e-6);
        assert!((silverman_bandwidth(32) - 0.53).abs() < 1e-15);
    }

    #[test]
    fn kernel_values() {
        assert!((kernel_uni(0.0) - 0.398_942_280_4).abs() < 1e-10);
        assert_eq!(kernel_uni(1.0), kernel_uni(-1.0));
        assert!((kernel_uni(2.0) - 0.053_990_97).abs() < 1e-8);
        assert!((kernel_multi(&[0.0, 0.0]) - 0.159_154_9).abs() < 1e-7);
        let u = [0.3, -1.1, 2.0];
        let prod: f64 = u.iter().map(|&v| kernel_uni(v)).product();
        assert!((kernel_multi(&u) - prod).abs() < 1e-15);
        assert!((kernel_multi(&[1.0, 1.0]) - 0.058_549_83).abs() < 1e-8);
    }

    #[test]
    fn univariate_examples() {
        let one = ParzenUnivariate::new(vec![0.0], 1.0).unwrap();
        assert!((one.pdf(0.0) - 0.398_942_280_4).abs() < 1e-10);
        assert!((one.pdf_deriv(1.0) + 0.241_970_7).abs() < 1e-7);
        let two = ParzenUnivariate::new(vec![-1.0, 1.0], 1.0).unwrap();
        assert!((two.pdf(0.0) - 0.241_970_7).abs() < 1e-7);
        assert_eq!(two.pdf_deriv(0.0), 0.0);
    }

    #[test]
    fn univariate_integrates_to_one() {
        let samples = vec![-2.3, -0.4, 0.0, 0.7, 1.9, 3.3];
        let h = 0.45;
        let p = ParzenUnivariate::new(samples, h).unwrap();
        let total = trapezoid(|y| p.pdf(y), -2.3 - 10.0 * h, 3.3 + 10.0 * h, 20_000);
        assert!((total - 1.0).abs() < 1e-6, "{total}");
    }

    #[test]
    fn multivariate_examples() {
        let origin = SampleMatrix::from_rows(&[vec![0.0], vec![0.0]]).unwrap();
        let p = ParzenMultivariate::new(&origin, 1.0).unwrap();
        assert!((p.pdf(&[0.0, 0.0]).unwrap() - 1.0 / (2.0 * std::f64::consts::PI)).abs() < 1e-15);
        assert!(p.pdf(&[0.0]).is_err());
    }

    #[test]
    fn multivariate_grid_integral() {
        let s = SampleMatrix::from_rows(&[vec![0.0, 1.0, -0.5], vec![0.5, -1.0, 0.2]]).unwrap();
        let h = 0.6;
        let p = ParzenMultivariate::new(&s, h).unwrap();
        let (lo, hi, n) = (-7.0, 7.0, 400);
        let dx = (hi - lo) / n as f64;
        let mut total = 0.0;
        for i in 0..=n {
            for j in 0..=n {
                let y = [lo + i as f64 * dx, lo + j as f64 * dx];
                total += p.pdf(&y).unwrap();
            }
        }
        total *= dx * dx;
        assert!((total - 1.0).abs() < 1e-4, "{total}");
    }

    #[test]
    fn truncation_changes_little() {
        let samples: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin() * 4.0).collect();
        let exact = ParzenUnivariate::new(samples.clone(), 0.3).unwrap();
        let fast = ParzenUnivariate::new(samples, 0.3).unwrap().with_truncation(true);
        for y in [-3.0, 0.1, 2.5] {
            assert!((exact.pdf(y) - fast.pdf(y)).abs() < 1e-13);
        }
    }

    proptest! {
        #[test]
        fn deriv_matches_finite_difference(
            samples in prop::collection::vec(-3.0..3.0f64, 2..30),
            h in 0.2..2.0f64,
            y in -4.0..4.0f64,
        ) {
            let p = ParzenUnivariate::new(samples, h).unwrap();
            let step = 1e-5 * h;
            let fd = (p.pdf(y + step) - p.pdf(y - step)) / (2.0 * step);
            prop_assert!((fd - p.pdf_deriv(y)).abs() < 1e-7);
        }

        #[test]
        fn one_dimensional_multivariate_is_univariate(
            samples in prop::collection::vec(-3.0..3.0f64, 2..30),
            h in 0.2..2.0f64,
            y in -4.0..4.0f64,
        ) {
            let uni = ParzenUnivariate::new(samples.clone(), h).unwrap();
            let multi = ParzenMultivariate::new(&SampleMatrix::from_rows(&[samples]).unwrap(), h).unwrap();
            let a = uni.pdf(y);
            let b = multi.pdf(&[y]).unwrap();
            prop_assert!(a >= 0.0 && b >= 0.0);
            // the exponent reaches ~800 in the far tail, so 1 ulp in it is ~1e-13 relative
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1e-300) + 1e-300);
        }

        #[test]
        fn wider_bandwidth_lowers_peak(samples in prop::collection::vec(-3.0..3.0f64, 2..20)) {
            let grid: Vec<f64> = (0..=400).map(|i| -6.0 + 0.03 * i as f64).collect();
            let peak = |h: f64| {
                let p = ParzenUnivariate::new(samples.clone(), h).unwrap();
                grid.iter().map(|&y| p.pdf(y)).fold(0.0, f64::max)
            };
            prop_assert!(peak(0.5) >= peak(1.0));
            prop_assert!(peak(1.0) >= peak(2.0));
        }
    }
}
