//! The model dictionary: one compressed `n_w × n_w` linear map per
//! `(band, noise, order)` triple.
//!
//! Indices are zero-based throughout: `band ∈ 0..n_r`, `noise ∈ 0..q`,
//! `order ∈ 0..=d_max`.

mod compress;
mod format;

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::basis::{DesignGrid, PulsationGrid};
use crate::error::{Error, Result};
use crate::par;
use crate::ridge::{default_alphas, CvRidge, RidgeFit};
use crate::synth::{default_noise_table, WindowBank};

pub use compress::{compress, CompressedMap, RANK_FLOOR};
pub use format::{FORMAT_VERSION, MAGIC};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DictKey {
    pub band: usize,
    pub noise: usize,
    pub order: usize,
}

impl DictKey {
    pub fn new(band: usize, noise: usize, order: usize) -> Self {
        Self { band, noise, order }
    }
}

impl fmt::Display for DictKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(band {}, noise {}, order {})", self.band, self.noise, self.order)
    }
}

/// Everything that determines a trained dictionary besides the seed.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub n_per_period: usize,
    pub n_grid: usize,
    pub n_r: usize,
    pub noise_table: Vec<f64>,
    pub n_w: usize,
    pub d_max: usize,
    pub n_samples: usize,
    pub alphas: Vec<f64>,
    pub folds: usize,
    /// Relative Frobenius tolerance for SVD truncation.
    pub tol: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            n_per_period: 5,
            n_grid: 200,
            n_r: 21,
            noise_table: default_noise_table(),
            n_w: 50,
            d_max: 4,
            n_samples: 500,
            alphas: default_alphas(),
            folds: 2,
            tol: 1e-3,
        }
    }
}

impl TrainingConfig {
    /// A two-band, two-noise-level, first-order dictionary on 8-sample
    /// windows. Trains in milliseconds; meant for smoke tests.
    pub fn tiny() -> Self {
        Self {
            n_r: 2,
            noise_table: vec![0.0, 0.05],
            n_w: 8,
            d_max: 1,
            n_samples: 32,
            ..Self::default()
        }
    }

    /// Full key layout with the minimum training-set size `2·n_w`. Trains
    /// several times faster than the default at some cost in accuracy.
    pub fn mini() -> Self {
        let base = Self::default();
        Self {
            n_samples: 2 * base.n_w,
            ..base
        }
    }

    pub fn q(&self) -> usize {
        self.noise_table.len()
    }

    pub fn entry_count(&self) -> usize {
        self.n_r * self.q() * (self.d_max + 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_w < 2 {
            return Err(Error::arg("n_w must be >= 2"));
        }
        if self.noise_table.is_empty() {
            return Err(Error::arg("noise table is empty"));
        }
        if self.noise_table.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::arg("noise table must be strictly increasing"));
        }
        if self.alphas.is_empty() {
            return Err(Error::arg("alpha candidate list is empty"));
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::arg(format!("tol must be in (0, 1), got {}", self.tol)));
        }
        if self.folds < 2 {
            return Err(Error::arg("folds must be >= 2"));
        }
        if self.n_samples < 2 * self.n_w {
            return Err(Error::arg(format!("n_samples must be >= 2·n_w = {}", 2 * self.n_w)));
        }
        for (name, v) in [("n_r", self.n_r), ("q", self.q()), ("d_max", self.d_max + 1)] {
            if v > u16::MAX as usize {
                return Err(Error::arg(format!("{name} too large for the file format")));
            }
        }
        Ok(())
    }

    pub fn grids(&self) -> Result<(PulsationGrid, DesignGrid)> {
        let grid = PulsationGrid::new(self.n_per_period, self.n_grid)?;
        let design = DesignGrid::new(&grid, self.n_r)?;
        Ok((grid, design))
    }
}

/// A trained, compressed dictionary. Immutable once built.
#[derive(Debug, Clone)]
pub struct ModelDictionary {
    config: TrainingConfig,
    seed: u64,
    grid: PulsationGrid,
    design: DesignGrid,
    /// Indexed by `(band · q + noise) · (d_max + 1) + order`.
    entries: Vec<CompressedMap>,
    /// Selected ridge strength per entry, same indexing.
    alphas: Vec<f64>,
}

impl ModelDictionary {
    pub(crate) fn from_parts(
        config: TrainingConfig,
        seed: u64,
        design: DesignGrid,
        entries: Vec<CompressedMap>,
        alphas: Vec<f64>,
    ) -> Result<Self> {
        let grid = PulsationGrid::new(config.n_per_period, config.n_grid)?;
        if entries.len() != config.entry_count() || alphas.len() != entries.len() {
            return Err(Error::Format(format!(
                "expected {} entries, found {}",
                config.entry_count(),
                entries.len()
            )));
        }
        Ok(Self {
            config,
            seed,
            grid,
            design,
            entries,
            alphas,
        })
    }

    pub fn config(&self) -> &TrainingConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn grid(&self) -> &PulsationGrid {
        &self.grid
    }

    pub fn design(&self) -> &DesignGrid {
        &self.design
    }

    pub fn n_w(&self) -> usize {
        self.config.n_w
    }

    pub fn d_max(&self) -> usize {
        self.config.d_max
    }

    pub fn noise_table(&self) -> &[f64] {
        &self.config.noise_table
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn index(&self, key: DictKey) -> Result<usize> {
        let c = &self.config;
        if key.band >= c.n_r || key.noise >= c.q() || key.order > c.d_max {
            return Err(Error::arg(format!("key {key} outside the trained ranges")));
        }
        Ok((key.band * c.q() + key.noise) * (c.d_max + 1) + key.order)
    }

    pub fn get(&self, key: DictKey) -> Result<&CompressedMap> {
        Ok(&self.entries[self.index(key)?])
    }

    pub fn selected_alpha(&self, key: DictKey) -> Result<f64> {
        Ok(self.alphas[self.index(key)?])
    }

    /// All keys in storage order `(band, noise, order)`.
    pub fn keys(&self) -> impl Iterator<Item = DictKey> + '_ {
        let c = &self.config;
        (0..c.n_r).flat_map(move |b| {
            (0..c.q()).flat_map(move |n| (0..=c.d_max).map(move |o| DictKey::new(b, n, o)))
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = (DictKey, &CompressedMap)> + '_ {
        self.keys().zip(self.entries.iter())
    }

    /// Index of the noise level nearest to `nu`; equidistant levels resolve to
    /// the larger one.
    pub fn nearest_noise_index(&self, nu: f64) -> usize {
        let mut best = 0;
        for (i, &v) in self.noise_table().iter().enumerate() {
            let dist = (v - nu).abs();
            let cur = (self.noise_table()[best] - nu).abs();
            if dist <= cur {
                best = i;
            }
        }
        best
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        format::encode(self)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        format::decode(bytes)
    }
}

/// Fits the uncompressed maps for every order of one `(band, noise)` pair.
pub struct Trainer {
    config: TrainingConfig,
    design: DesignGrid,
    bank: WindowBank,
}

impl Trainer {
    pub fn new(config: TrainingConfig) -> Result<Self> {
        config.validate()?;
        let (grid, design) = config.grids()?;
        let bank = WindowBank::new(&grid, &design, config.noise_table.clone(), config.n_w, config.d_max)?;
        Ok(Self { config, design, bank })
    }

    pub fn config(&self) -> &TrainingConfig {
        &self.config
    }

    /// Ridge fits for orders `0..=d_max`. Order 0 regresses the noisy
    /// windows onto their clean versions; higher orders onto the clean
    /// derivatives.
    pub fn fit_pair(&self, band: usize, noise: usize, seed: u64) -> Result<Vec<RidgeFit>> {
        let set = self.bank.training_set(band, noise, self.config.n_samples, seed)?;
        let cv = CvRidge::new(&set.features, self.config.folds).map_err(|e| Error::FitFailed {
            key: DictKey::new(band, noise, 0),
            reason: e.to_string(),
        })?;
        set.labels
            .iter()
            .enumerate()
            .map(|(d, labels)| {
                cv.fit(labels, &self.config.alphas).map_err(|e| Error::FitFailed {
                    key: DictKey::new(band, noise, d),
                    reason: e.to_string(),
                })
            })
            .collect()
    }

    /// Trains and compresses every entry. `(band, noise)` pairs run as
    /// independent jobs; results are stored in key order.
    pub fn train(&self, seed: u64) -> Result<ModelDictionary> {
        let q = self.config.q();
        let pairs = self.config.n_r * q;
        let tol = self.config.tol;
        let per_pair = par::map_range(pairs, |p| -> Result<Vec<(CompressedMap, f64)>> {
            let fits = self.fit_pair(p / q, p % q, seed)?;
            Ok(fits.into_iter().map(|f| (compress(&f.coef, tol), f.alpha)).collect())
        });
        let mut entries = Vec::with_capacity(self.config.entry_count());
        let mut alphas = Vec::with_capacity(self.config.entry_count());
        for pair in per_pair {
            for (map, alpha) in pair? {
                entries.push(map);
                alphas.push(alpha);
            }
        }
        ModelDictionary::from_parts(self.config.clone(), seed, self.design.clone(), entries, alphas)
    }
}

/// Trains a full dictionary for `config`.
pub fn train_dictionary(config: &TrainingConfig, seed: u64) -> Result<ModelDictionary> {
    Trainer::new(config.clone())?.train(seed)
}
