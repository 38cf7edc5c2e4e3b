//! Reproducible band-limited signals for training and benchmarking.
//!
//! Every random draw comes from a ChaCha8 generator seeded with the caller's
//! seed and positioned on a stream that encodes what is being generated:
//!
//! ```text
//! stream = tag << 56 | a << 40 | b << 24 | c
//! ```
//!
//! Training rows use `(TRAINING, band, noise, row)`, benchmark cases use
//! `(BENCHMARK, case, 0, 0)`. Streams never overlap between rows, so sets can
//! be generated in any order or concurrently with identical results.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::basis::{column_value, DesignGrid, PulsationGrid};
use crate::error::{Error, Result};

const TAG_TRAINING: u64 = 1;
const TAG_BENCHMARK: u64 = 2;

/// Generator for one named stream.
pub fn stream_rng(seed: u64, tag: u64, a: u64, b: u64, c: u64) -> ChaCha8Rng {
    debug_assert!(a < 1 << 16 && b < 1 << 16 && c < 1 << 24);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tag << 56 | a << 40 | b << 24 | c);
    rng
}

/// Default noise-level table: `0.00, 0.01, …, 0.20`.
pub fn default_noise_table() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 100.0).collect()
}

/// Noisy windows and their clean derivatives for one `(band, noise)` pair.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    /// `n_samples × n_w` noisy 0-derivative windows.
    pub features: DMatrix<f64>,
    /// `labels[d]` is the `n_samples × n_w` matrix of clean `d`-derivatives.
    pub labels: Vec<DMatrix<f64>>,
    pub band: usize,
    pub noise: usize,
    pub seed: u64,
}

/// Precomputed derivative bases for training windows at every design
/// cut-off.
#[derive(Debug, Clone)]
pub struct WindowBank {
    n_w: usize,
    d_max: usize,
    noise_table: Vec<f64>,
    /// `bases[band][d]` is `B_d[:n_w, :ω_band]`.
    bases: Vec<Vec<DMatrix<f64>>>,
}

impl WindowBank {
    pub fn new(
        grid: &PulsationGrid,
        design: &DesignGrid,
        noise_table: Vec<f64>,
        n_w: usize,
        d_max: usize,
    ) -> Result<Self> {
        if n_w < 2 {
            return Err(Error::arg(format!("window length must be >= 2, got {n_w}")));
        }
        if noise_table.is_empty() || noise_table.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::arg("noise table must be non-empty and non-negative"));
        }
        let bases = design
            .values()
            .iter()
            .map(|&w| (0..=d_max).map(|d| grid.eval_basis(n_w, w, d).matrix).collect())
            .collect();
        Ok(Self {
            n_w,
            d_max,
            noise_table,
            bases,
        })
    }

    pub fn n_w(&self) -> usize {
        self.n_w
    }

    pub fn d_max(&self) -> usize {
        self.d_max
    }

    pub fn noise_table(&self) -> &[f64] {
        &self.noise_table
    }

    pub fn n_bands(&self) -> usize {
        self.bases.len()
    }

    /// Draws the training set for `(band, noise)` (both zero-based).
    pub fn training_set(&self, band: usize, noise: usize, n_samples: usize, seed: u64) -> Result<TrainingSet> {
        if band >= self.bases.len() {
            return Err(Error::arg(format!("band index {band} out of range 0..{}", self.bases.len())));
        }
        if noise >= self.noise_table.len() {
            return Err(Error::arg(format!(
                "noise index {noise} out of range 0..{}",
                self.noise_table.len()
            )));
        }
        if n_samples < 2 * self.n_w {
            return Err(Error::arg(format!(
                "n_samples must be >= 2·n_w = {}, got {n_samples}",
                2 * self.n_w
            )));
        }
        let bases = &self.bases[band];
        let cols = bases[0].ncols();
        let nu = self.noise_table[noise];

        let mut coef = DMatrix::<f64>::zeros(cols, n_samples);
        let mut noise_draws = DMatrix::<f64>::zeros(n_samples, self.n_w);
        let mut rngs = Vec::with_capacity(n_samples);
        for k in 0..n_samples {
            let mut rng = stream_rng(seed, TAG_TRAINING, band as u64, noise as u64, k as u64);
            for c in 0..cols {
                coef[(c, k)] = rng.sample(StandardNormal);
            }
            rngs.push(rng);
        }

        // B_d · a for every row at once; columns of `clean` are windows
        let mut clean: Vec<DMatrix<f64>> = bases.iter().map(|b| b * &coef).collect();

        for (k, rng) in rngs.iter_mut().enumerate() {
            let mut peak = inf_norm(clean[0].column(k).iter());
            // probability-zero guard: all coefficients cancelling exactly
            while peak == 0.0 {
                for c in 0..cols {
                    coef[(c, k)] = rng.sample(StandardNormal);
                }
                for (d, b) in bases.iter().enumerate() {
                    let col = b * coef.column(k);
                    clean[d].set_column(k, &col);
                }
                peak = inf_norm(clean[0].column(k).iter());
            }
            for m in clean.iter_mut() {
                m.column_mut(k).iter_mut().for_each(|x| *x /= peak);
            }
            for t in 0..self.n_w {
                noise_draws[(k, t)] = rng.sample(StandardNormal);
            }
        }

        let labels: Vec<DMatrix<f64>> = clean.into_iter().map(|m| m.transpose()).collect();
        let features = if nu == 0.0 {
            labels[0].clone()
        } else {
            &labels[0] + noise_draws * nu
        };
        Ok(TrainingSet {
            features,
            labels,
            band,
            noise,
            seed,
        })
    }
}

fn inf_norm<'a>(it: impl Iterator<Item = &'a f64>) -> f64 {
    it.fold(0.0, |m, x| m.max(x.abs()))
}

/// One validation series with exact derivatives.
#[derive(Debug, Clone)]
pub struct BenchmarkCase {
    pub noisy: Vec<f64>,
    /// `clean[d]` is the exact `d`-derivative, `d = 0..=d_max`.
    pub clean: Vec<Vec<f64>>,
    pub bandwidth_fraction: f64,
    pub noise_level: f64,
    pub seed: u64,
}

/// Generates a series of length `n` whose content is limited to
/// `bandwidth_fraction · ω̄` (snapped to the grid), normalized to unit peak,
/// plus white noise of standard deviation `noise_level`.
pub fn make_benchmark_case(
    grid: &PulsationGrid,
    bandwidth_fraction: f64,
    noise_level: f64,
    n: usize,
    d_max: usize,
    seed: u64,
) -> Result<BenchmarkCase> {
    make_case_on_stream(grid, bandwidth_fraction, noise_level, n, d_max, seed, 0)
}

pub(crate) fn make_case_on_stream(
    grid: &PulsationGrid,
    bandwidth_fraction: f64,
    noise_level: f64,
    n: usize,
    d_max: usize,
    seed: u64,
    case_index: u64,
) -> Result<BenchmarkCase> {
    if !(bandwidth_fraction > 0.0 && bandwidth_fraction <= 1.0) {
        return Err(Error::arg(format!("bandwidth fraction must be in (0, 1], got {bandwidth_fraction}")));
    }
    if !(noise_level >= 0.0) {
        return Err(Error::arg(format!("noise level must be >= 0, got {noise_level}")));
    }
    if n < 2 {
        return Err(Error::arg(format!("series length must be >= 2, got {n}")));
    }
    let g = grid.nearest_index(bandwidth_fraction * grid.omega_bar());
    let pulsations = &grid.values()[..=g];
    let cols = 2 * pulsations.len() + 1;

    let mut rng = stream_rng(seed, TAG_BENCHMARK, case_index, 0, 0);
    let (coef, clean) = loop {
        let coef: Vec<f64> = (0..cols).map(|_| rng.sample(StandardNormal)).collect();
        let clean: Vec<Vec<f64>> = (0..=d_max)
            .map(|d| {
                (0..n)
                    .map(|t| {
                        coef.iter()
                            .enumerate()
                            .map(|(c, a)| a * column_value(pulsations, c, t as f64, d))
                            .sum()
                    })
                    .collect()
            })
            .collect();
        if inf_norm(clean[0].iter()) > 0.0 {
            break (coef, clean);
        }
    };
    drop(coef);
    let peak = inf_norm(clean[0].iter());
    let clean: Vec<Vec<f64>> = clean
        .into_iter()
        .map(|v| v.into_iter().map(|x| x / peak).collect())
        .collect();
    let noisy = clean[0]
        .iter()
        .map(|&x| {
            let u: f64 = rng.sample(StandardNormal);
            if noise_level == 0.0 {
                x
            } else {
                x + noise_level * u
            }
        })
        .collect();
    Ok(BenchmarkCase {
        noisy,
        clean,
        bandwidth_fraction,
        noise_level,
        seed,
    })
}
