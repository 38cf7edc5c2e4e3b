//! Fourier-domain differentiation with Gaussian smoothing.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::kalman::logspace;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralParams {
    /// Smoothing coefficient of `exp(−μ_f ω²)`, in rad⁻².
    pub mu_f: f64,
}

/// 50 values `logspace(-6, 0, 50)`.
pub fn spectral_grid() -> Vec<SpectralParams> {
    logspace(-6.0, 0.0, 50).into_iter().map(|mu_f| SpectralParams { mu_f }).collect()
}

/// Signed angular frequency of bin `k` of an `n`-point transform, in
/// rad/sample.
pub fn bin_frequency(k: usize, n: usize) -> f64 {
    let k = k as f64;
    let n_f = n as f64;
    if k <= n_f / 2.0 {
        2.0 * PI * k / n_f
    } else {
        2.0 * PI * (k - n_f) / n_f
    }
}

/// Forward transform of one series, reusable across orders and settings.
pub struct SpectralDifferentiator {
    spectrum: Vec<Complex64>,
    inverse: Arc<dyn Fft<f64>>,
}

impl SpectralDifferentiator {
    pub fn new(s: &[f64]) -> Result<Self> {
        if s.len() < 2 {
            return Err(Error::arg("spectral differentiation needs at least 2 samples"));
        }
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(s.len());
        let inverse = planner.plan_fft_inverse(s.len());
        let mut spectrum: Vec<Complex64> = s.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        forward.process(&mut spectrum);
        Ok(Self { spectrum, inverse })
    }

    pub fn derivative(&self, d: usize, params: SpectralParams) -> Result<Vec<f64>> {
        if !(params.mu_f >= 0.0) {
            return Err(Error::arg(format!("mu_f must be >= 0, got {}", params.mu_f)));
        }
        let n = self.spectrum.len();
        let mut buf: Vec<Complex64> = self
            .spectrum
            .iter()
            .enumerate()
            .map(|(k, &x)| {
                let w = bin_frequency(k, n);
                let gain = (-params.mu_f * w * w).exp();
                x * Complex64::new(0.0, w).powu(d as u32) * gain
            })
            .collect();
        self.inverse.process(&mut buf);
        let scale = 1.0 / n as f64;
        Ok(buf.into_iter().map(|c| c.re * scale).collect())
    }
}

pub fn spectral_differentiate(s: &[f64], d: usize, params: SpectralParams) -> Result<Vec<f64>> {
    SpectralDifferentiator::new(s)?.derivative(d, params)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn grid_has_50_settings() {
        let g = spectral_grid();
        assert_eq!(g.len(), 50);
        assert!((g[0].mu_f - 1e-6).abs() < 1e-18);
        assert!((g[49].mu_f - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sinusoid_at_bin_frequency_is_an_eigenfunction() {
        let n = 512;
        let w0 = 2.0 * PI * 13.0 / n as f64;
        let s: Vec<f64> = (0..n).map(|t| (w0 * t as f64).sin()).collect();
        let out = spectral_differentiate(&s, 1, SpectralParams { mu_f: 0.0 }).unwrap();
        for (t, v) in out.iter().enumerate() {
            assert!((v - w0 * (w0 * t as f64).cos()).abs() <= 1e-6);
        }
        let out = spectral_differentiate(&s, 3, SpectralParams { mu_f: 0.0 }).unwrap();
        for (t, v) in out.iter().enumerate() {
            assert!((v + w0.powi(3) * (w0 * t as f64).cos()).abs() <= 1e-6);
        }
    }

    #[test]
    fn too_short_is_rejected() {
        assert!(spectral_differentiate(&[1.0], 0, SpectralParams { mu_f: 0.0 }).is_err());
    }

    proptest! {
        #[test]
        fn zero_order_without_smoothing_is_identity(s in prop::collection::vec(-10.0f64..10.0, 2..300)) {
            let out = spectral_differentiate(&s, 0, SpectralParams { mu_f: 0.0 }).unwrap();
            for (a, b) in out.iter().zip(&s) {
                prop_assert!((a - b).abs() <= 1e-10);
            }
        }
    }
}
