//! Competing differentiators and their ground-truth-optimal tuning.

pub mod aostd;
pub mod kalman;
pub mod savgol;
pub mod spectral;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use aostd::{aostd_differentiate, aostd_l_grid, default_lambdas, AostdOutput, StdParams};
pub use kalman::{kalman_differentiate, kalman_grid, KalmanChain, KalmanParams};
pub use savgol::{savgol_coefficients, savgol_differentiate, savgol_grid, SavGolParams};
pub use spectral::{spectral_differentiate, spectral_grid, SpectralDifferentiator, SpectralParams};

use crate::bench::metrics::eval_error;
use crate::error::{Error, Result};
use crate::par;
use crate::synth::BenchmarkCase;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Baseline {
    Kalman,
    Spectral,
    Savgol,
    Aostd,
}

impl Baseline {
    pub const ALL: [Baseline; 4] = [Baseline::Kalman, Baseline::Spectral, Baseline::Savgol, Baseline::Aostd];

    pub fn name(self) -> &'static str {
        match self {
            Baseline::Kalman => "kalman",
            Baseline::Spectral => "spectral",
            Baseline::Savgol => "savgol",
            Baseline::Aostd => "aostd",
        }
    }

    /// Tuning grid in its canonical order. `d_max` fixes the chain length
    /// for the sliding-mode gains.
    pub fn grid(self, d_max: usize) -> Result<Vec<Setting>> {
        Ok(match self {
            Baseline::Kalman => kalman_grid().into_iter().map(Setting::Kalman).collect(),
            Baseline::Spectral => spectral_grid().into_iter().map(Setting::Spectral).collect(),
            Baseline::Savgol => savgol_grid().into_iter().map(Setting::Savgol).collect(),
            Baseline::Aostd => aostd_l_grid()
                .into_iter()
                .map(|l| StdParams::new(l, d_max.max(1)).map(Setting::Aostd))
                .collect::<Result<_>>()?,
        })
    }
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Baseline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Baseline::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| Error::arg(format!("unknown baseline '{s}'")))
    }
}

/// One point of a tuning grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum Setting {
    Kalman(KalmanParams),
    Spectral(SpectralParams),
    Savgol(SavGolParams),
    Aostd(StdParams),
}

impl Setting {
    pub fn baseline(&self) -> Baseline {
        match self {
            Setting::Kalman(_) => Baseline::Kalman,
            Setting::Spectral(_) => Baseline::Spectral,
            Setting::Savgol(_) => Baseline::Savgol,
            Setting::Aostd(_) => Baseline::Aostd,
        }
    }

    /// Runs the differentiator once and returns the estimate for each of
    /// `orders`; `None` where the setting is invalid for that order.
    pub fn run(&self, s: &[f64], orders: &[usize]) -> Result<Vec<Option<Vec<f64>>>> {
        let top = orders.iter().copied().max().unwrap_or(0);
        match self {
            Setting::Kalman(p) => {
                let mut all = kalman_differentiate(s, top.max(1), *p)?;
                Ok(orders.iter().map(|&d| Some(std::mem::take(&mut all[d]))).collect())
            }
            Setting::Spectral(p) => {
                let sd = SpectralDifferentiator::new(s)?;
                orders.iter().map(|&d| sd.derivative(d, *p).map(Some)).collect()
            }
            Setting::Savgol(p) => Ok(orders
                .iter()
                .map(|&d| savgol_differentiate(s, d, *p).ok())
                .collect()),
            Setting::Aostd(p) => {
                let n_order = p.lambdas.len() - 1;
                if top > n_order {
                    return Err(Error::arg(format!("order {top} exceeds sliding-mode chain {n_order}")));
                }
                let mut out = aostd_differentiate(s, n_order, p)?;
                Ok(orders.iter().map(|&d| Some(std::mem::take(&mut out.z[d]))).collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tuned {
    pub setting: Setting,
    pub error: f64,
    /// Grid settings that produced a finite error.
    pub valid_settings: usize,
}

/// Scores every setting of `grid` on `case.noisy` for each of `orders`
/// against `case.clean[d]`. Returns one result per order; ties go to the
/// earliest setting and failed or non-finite settings are skipped.
pub fn best_tuned_over(grid: &[Setting], case: &BenchmarkCase, orders: &[usize]) -> Vec<Result<Tuned>> {
    for &d in orders {
        if d >= case.clean.len() {
            return orders
                .iter()
                .map(|_| Err(Error::arg(format!("case has no ground truth for order {d}"))))
                .collect();
        }
    }
    let scores: Vec<Vec<Option<f64>>> = par::map_range(grid.len(), |i| {
        match grid[i].run(&case.noisy, orders) {
            Ok(estimates) => estimates
                .iter()
                .zip(orders)
                .map(|(est, &d)| {
                    est.as_ref()
                        .and_then(|e| eval_error(e, &case.clean[d]).ok())
                        .filter(|e| e.is_finite())
                })
                .collect(),
            Err(_) => vec![None; orders.len()],
        }
    });
    orders
        .iter()
        .enumerate()
        .map(|(k, &d)| {
            let mut best: Option<(usize, f64)> = None;
            let mut valid = 0;
            for (i, row) in scores.iter().enumerate() {
                if let Some(e) = row[k] {
                    valid += 1;
                    if best.map_or(true, |(_, b)| e < b) {
                        best = Some((i, e));
                    }
                }
            }
            best.map(|(i, error)| Tuned {
                setting: grid[i].clone(),
                error,
                valid_settings: valid,
            })
            .ok_or_else(|| Error::NoResult(format!("no valid setting for order {d}")))
        })
        .collect()
}

/// Best setting of `baseline` for each of `orders`.
pub fn best_tuned_orders(baseline: Baseline, case: &BenchmarkCase, orders: &[usize]) -> Vec<Result<Tuned>> {
    let d_max = orders.iter().copied().max().unwrap_or(1);
    match baseline.grid(d_max) {
        Ok(grid) => best_tuned_over(&grid, case, orders),
        Err(e) => orders.iter().map(|_| Err(Error::arg(e.to_string()))).collect(),
    }
}

pub fn best_tuned(baseline: Baseline, case: &BenchmarkCase, d: usize) -> Result<Tuned> {
    best_tuned_orders(baseline, case, &[d]).pop().expect("one order requested")
}
