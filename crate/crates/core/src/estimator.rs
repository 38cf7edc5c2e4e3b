//! Derivative reconstruction from a trained dictionary.
//!
//! A call runs three stages on the whole series:
//!
//! 1. **Bandwidth.** The residual curve `e_j` of the series against every
//!    design cut-off picks the smallest band whose residual is within
//!    `threshold · (e_first − e_last)` of the last one.
//! 2. **Noise level.** A pilot zero-order map filters the series; the
//!    standard deviation of what it removes picks the nearest tabulated noise
//!    level.
//! 3. **Ensemble.** Every window of length `n_w` is mapped to a `d`-derivative
//!    estimate. Each instant collects one estimate per window covering it;
//!    their mean is the reconstruction and their population standard
//!    deviation the confidence scale.
//!
//! Results are for unit sampling period and rescaled by `τ^{-d}`.

use nalgebra::DMatrix;

use serde::{Deserialize, Serialize};

use crate::basis::NestedProjector;
use crate::dictionary::{CompressedMap, DictKey, ModelDictionary};
use crate::error::{Error, Result};
use crate::par;

/// Rows per block when windows are mapped in parallel. Fixed so results do
/// not depend on the thread count.
const WINDOW_BLOCK: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorOptions {
    /// Residual-curve threshold for band selection.
    pub threshold: f64,
    /// Noise level of the pilot filter when the caller gives none.
    pub pilot_noise: f64,
    /// Filter/estimate rounds for the noise level. One round uses the pilot
    /// only; each extra round re-filters with the previous estimate.
    pub noise_passes: usize,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        Self {
            threshold: 0.1,
            pilot_noise: 0.05,
            noise_passes: 1,
        }
    }
}

/// Reconstructed derivative with per-sample spread.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeEstimate {
    /// Units of signal per `τ^d`.
    pub values: Vec<f64>,
    /// Population standard deviation of the window ensemble, same units.
    pub sigma: Vec<f64>,
    pub order: usize,
    pub tau: f64,
    /// Selected band index (zero-based).
    pub band: usize,
    /// Selected noise index (zero-based).
    pub noise: usize,
    /// Estimated noise standard deviation.
    pub sigma_star: f64,
}

/// The `(window start, offset)` pairs that cover each instant.
///
/// Zero-based: window `i` covers instants `i..i + n_w`, so instant `m` is
/// covered by starts `max(0, m + 1 − n_w) ..= min(m, n − n_w)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowIndexSet {
    pub n: usize,
    pub n_w: usize,
}

impl WindowIndexSet {
    pub fn new(n: usize, n_w: usize) -> Result<Self> {
        if n_w == 0 || n < n_w {
            return Err(Error::arg(format!("series length {n} is shorter than the window {n_w}")));
        }
        Ok(Self { n, n_w })
    }

    pub fn windows(&self) -> usize {
        self.n - self.n_w + 1
    }

    /// Window starts covering instant `m`.
    pub fn starts(&self, m: usize) -> std::ops::RangeInclusive<usize> {
        (m + 1).saturating_sub(self.n_w)..=m.min(self.n - self.n_w)
    }

    /// Number of estimates at instant `m`.
    pub fn card(&self, m: usize) -> usize {
        // 1-based form: min(m, n_w, n − n_w + 1, n − m + 1)
        let m1 = m + 1;
        m1.min(self.n_w).min(self.windows()).min(self.n - m1 + 1)
    }

    /// `(start, offset)` pairs for instant `m`.
    pub fn pairs(&self, m: usize) -> impl Iterator<Item = (usize, usize)> {
        self.starts(m).map(move |i| (i, m - i))
    }
}

/// Mean and population standard deviation of the window ensemble at every
/// instant, for a single map.
pub fn sliding_estimate(s: &[f64], map: &CompressedMap) -> Result<(Vec<f64>, Vec<f64>)> {
    let n_w = map.n_w();
    let idx = WindowIndexSet::new(s.len(), n_w)?;
    let estimates = window_estimates(s, map, idx)?;
    Ok(ensemble_stats(&estimates, idx))
}

/// `N × n_w` matrix whose row `i` is the map applied to `s[i..i + n_w]`.
fn window_estimates(s: &[f64], map: &CompressedMap, idx: WindowIndexSet) -> Result<DMatrix<f64>> {
    let n_w = idx.n_w;
    let count = idx.windows();
    let blocks = count.div_ceil(WINDOW_BLOCK);
    let parts = par::map_range(blocks, |b| {
        let start = b * WINDOW_BLOCK;
        let rows = WINDOW_BLOCK.min(count - start);
        let w = DMatrix::from_fn(rows, n_w, |r, k| s[start + r + k]);
        map.apply_rows(&w)
    });
    let mut out = DMatrix::zeros(count, n_w);
    for (b, part) in parts.into_iter().enumerate() {
        let part = part?;
        out.rows_mut(b * WINDOW_BLOCK, part.nrows()).copy_from(&part);
    }
    Ok(out)
}

fn ensemble_stats(e: &DMatrix<f64>, idx: WindowIndexSet) -> (Vec<f64>, Vec<f64>) {
    let mut both: Vec<(f64, f64)> = vec![(0.0, 0.0); idx.n];
    par::for_each_chunk_mut(&mut both, 512, |start, part| {
        for (off, slot) in part.iter_mut().enumerate() {
            let m = start + off;
            let card = idx.card(m) as f64;
            let mean = idx.pairs(m).map(|(i, k)| e[(i, k)]).sum::<f64>() / card;
            let var = idx.pairs(m).map(|(i, k)| (e[(i, k)] - mean).powi(2)).sum::<f64>() / card;
            *slot = (mean, var.sqrt());
        }
    });
    both.into_iter().unzip()
}

/// Band and noise indices chosen for a series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub band: usize,
    pub noise: usize,
    pub sigma_star: f64,
}

/// Reconstruction pipeline over a borrowed dictionary.
#[derive(Debug, Clone)]
pub struct Estimator<'a> {
    dict: &'a ModelDictionary,
    options: EstimatorOptions,
}

impl<'a> Estimator<'a> {
    pub fn new(dict: &'a ModelDictionary) -> Self {
        Self::with_options(dict, EstimatorOptions::default())
    }

    pub fn with_options(dict: &'a ModelDictionary, options: EstimatorOptions) -> Self {
        Self { dict, options }
    }

    pub fn dictionary(&self) -> &ModelDictionary {
        self.dict
    }

    fn check_len(&self, s: &[f64]) -> Result<()> {
        if s.len() < self.dict.n_w() {
            return Err(Error::arg(format!(
                "series length {} is shorter than the window {}",
                s.len(),
                self.dict.n_w()
            )));
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("series contains non-finite values"));
        }
        Ok(())
    }

    /// Residual norms against every design cut-off.
    pub fn residual_curve(&self, s: &[f64]) -> Result<Vec<f64>> {
        let design = self.dict.design();
        let top = design.values().last().copied().unwrap_or(0.0);
        NestedProjector::new(self.dict.grid(), s.len(), top)?.residual_curve(s, design.values())
    }

    pub fn select_bandwidth(&self, s: &[f64]) -> Result<usize> {
        self.check_len(s)?;
        let e = self.residual_curve(s)?;
        Ok(band_from_curve(&e, self.options.threshold))
    }

    /// Returns `(σ*, ℓ*)`.
    pub fn estimate_noise(&self, s: &[f64], band: usize, prior_noise: Option<f64>) -> Result<(f64, usize)> {
        self.check_len(s)?;
        let mut pilot = self
            .dict
            .nearest_noise_index(prior_noise.unwrap_or(self.options.pilot_noise));
        let mut result = (0.0, pilot);
        for _ in 0..self.options.noise_passes.max(1) {
            let map = self.dict.get(DictKey::new(band, pilot, 0))?;
            let (filtered, _) = sliding_estimate(s, map)?;
            let resid: Vec<f64> = s.iter().zip(&filtered).map(|(a, b)| a - b).collect();
            let sigma_star = population_std(&resid);
            pilot = self.dict.nearest_noise_index(sigma_star);
            result = (sigma_star, pilot);
        }
        Ok(result)
    }

    pub fn select(&self, s: &[f64], prior_noise: Option<f64>) -> Result<Selection> {
        let band = self.select_bandwidth(s)?;
        let (sigma_star, noise) = self.estimate_noise(s, band, prior_noise)?;
        Ok(Selection {
            band,
            noise,
            sigma_star,
        })
    }

    /// Runs the ensemble for an already made selection.
    pub fn reconstruct(&self, s: &[f64], sel: Selection, d: usize, tau: f64) -> Result<DerivativeEstimate> {
        self.check_len(s)?;
        self.check_order_tau(d, tau)?;
        let map = self.dict.get(DictKey::new(sel.band, sel.noise, d))?;
        let (mut values, mut sigma) = sliding_estimate(s, map)?;
        if d > 0 {
            let scale = tau.powi(-(d as i32));
            values.iter_mut().for_each(|v| *v *= scale);
            sigma.iter_mut().for_each(|v| *v *= scale);
        }
        Ok(DerivativeEstimate {
            values,
            sigma,
            order: d,
            tau,
            band: sel.band,
            noise: sel.noise,
            sigma_star: sel.sigma_star,
        })
    }

    fn check_order_tau(&self, d: usize, tau: f64) -> Result<()> {
        if d > self.dict.d_max() {
            return Err(Error::arg(format!(
                "derivative order {d} exceeds the trained maximum {}",
                self.dict.d_max()
            )));
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::arg(format!("sampling period must be positive, got {tau}")));
        }
        Ok(())
    }

    /// The `d`-th derivative of `s` sampled every `tau` time units.
    pub fn est_deriv(&self, s: &[f64], d: usize, tau: f64, noise_level: Option<f64>) -> Result<DerivativeEstimate> {
        self.check_len(s)?;
        self.check_order_tau(d, tau)?;
        let sel = self.select(s, noise_level)?;
        self.reconstruct(s, sel, d, tau)
    }
}

/// Smallest index whose residual is within `threshold` of the full drop.
pub fn band_from_curve(e: &[f64], threshold: f64) -> usize {
    let (Some(&first), Some(&last)) = (e.first(), e.last()) else {
        return 0;
    };
    let drop = first - last;
    if !(drop > 0.0) {
        return 0;
    }
    e.iter().position(|&ej| ej - last <= threshold * drop).unwrap_or(e.len() - 1)
}

pub(crate) fn population_std(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    use super::*;
    use crate::dictionary::{compress, train_dictionary, TrainingConfig};

    #[test]
    fn card_formula_examples() {
        let idx = WindowIndexSet::new(2000, 50).unwrap();
        // 1-based plateau 50 ≤ m ≤ 1951
        for m1 in 50..=1951 {
            assert_eq!(idx.card(m1 - 1), 50);
        }
        assert_eq!(idx.card(0), 1);
        assert_eq!(idx.card(1999), 1);
        assert_eq!(idx.card(48), 49);
        assert_eq!(idx.card(1951), 49);

        let single = WindowIndexSet::new(50, 50).unwrap();
        assert!((0..50).all(|m| single.card(m) == 1));
    }

    #[test]
    fn card_matches_pair_enumeration() {
        for (n, n_w) in [(10, 3), (7, 7), (12, 8), (300, 50), (60, 50)] {
            let idx = WindowIndexSet::new(n, n_w).unwrap();
            for m in 0..n {
                let brute = (0..idx.windows())
                    .flat_map(|i| (0..n_w).map(move |k| (i, k)))
                    .filter(|&(i, k)| i + k == m)
                    .count();
                assert_eq!(idx.card(m), brute, "n={n} n_w={n_w} m={m}");
                assert_eq!(idx.pairs(m).count(), brute);
                assert!(idx.card(m) >= 1);
            }
        }
    }

    #[test]
    fn short_series_is_rejected() {
        assert!(WindowIndexSet::new(10, 11).is_err());
        let map = compress(&DMatrix::identity(8, 8), 1e-3);
        assert!(matches!(sliding_estimate(&[0.0; 7], &map), Err(Error::Argument(_))));
    }

    fn random_map(seed: u64, n_w: usize) -> CompressedMap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(n_w, n_w, |_, _| rng.sample::<f64, _>(StandardNormal));
        compress(&a, 1e-6)
    }

    #[test]
    fn window_length_series_has_zero_spread() {
        let map = random_map(1, 12);
        let s: Vec<f64> = (0..12).map(|t| (t as f64 * 0.3).sin()).collect();
        let (values, sigma) = sliding_estimate(&s, &map).unwrap();
        let direct = map.apply(&s).unwrap();
        for (a, b) in values.iter().zip(&direct) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
        assert!(sigma.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn sliding_estimate_is_linear() {
        let map = random_map(2, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s: Vec<f64> = (0..90).map(|_| rng.sample(StandardNormal)).collect();
        let scaled: Vec<f64> = s.iter().map(|v| -3.5 * v).collect();
        let (a, sa) = sliding_estimate(&s, &map).unwrap();
        let (b, sb) = sliding_estimate(&scaled, &map).unwrap();
        for i in 0..90 {
            assert!((b[i] + 3.5 * a[i]).abs() <= 1e-12 * (1.0 + a[i].abs()));
            assert!((sb[i] - 3.5 * sa[i]).abs() <= 1e-12 * (1.0 + sa[i]));
        }
    }

    #[test]
    fn band_rule_edge_cases() {
        assert_eq!(band_from_curve(&[1.0, 1.0, 1.0], 0.1), 0);
        assert_eq!(band_from_curve(&[0.0; 5], 0.1), 0);
        assert_eq!(band_from_curve(&[10.0, 5.0, 0.9, 0.5, 0.0], 0.1), 2);
        assert_eq!(band_from_curve(&[10.0, 9.0, 8.0, 7.0, 0.0], 0.1), 4);
    }

    #[test]
    fn tiny_dictionary_pipeline_runs() {
        let dict = train_dictionary(&TrainingConfig::tiny(), 3).unwrap();
        let est = Estimator::new(&dict);
        let s: Vec<f64> = (0..40).map(|t| (0.05 * t as f64).sin()).collect();
        let out = est.est_deriv(&s, 1, 0.5, None).unwrap();
        assert_eq!(out.values.len(), 40);
        assert_eq!(out.sigma.len(), 40);
        assert!(out.sigma.iter().all(|&x| x >= 0.0));
        assert!(matches!(est.est_deriv(&s, 2, 1.0, None), Err(Error::Argument(_))));
        assert!(matches!(est.est_deriv(&s[..7], 0, 1.0, None), Err(Error::Argument(_))));
        assert!(matches!(est.est_deriv(&s, 0, 0.0, None), Err(Error::Argument(_))));
    }

    #[test]
    fn zero_series_gives_zero_output() {
        let dict = train_dictionary(&TrainingConfig::tiny(), 3).unwrap();
        let est = Estimator::new(&dict);
        for d in 0..=1 {
            let out = est.est_deriv(&[0.0; 30], d, 1.0, None).unwrap();
            assert!(out.values.iter().all(|&v| v == 0.0));
            assert!(out.sigma.iter().all(|&v| v == 0.0));
            assert_eq!(out.band, 0);
        }
    }
}
