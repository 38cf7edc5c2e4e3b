//! Kalman filter on an integrator chain `ẋ_i = x_{i+1}`, `ẋ_{n} = 0`,
//! measuring `x_1` only.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KalmanParams {
    /// State-noise scale.
    pub nu_s: f64,
    /// Geometric ratio between successive state-noise variances.
    pub rho: f64,
}

impl KalmanParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.nu_s > 0.0) || !(self.rho >= 1.0) || !self.nu_s.is_finite() || !self.rho.is_finite() {
            return Err(Error::arg(format!(
                "kalman parameters need nu_s > 0 and rho >= 1, got ({}, {})",
                self.nu_s, self.rho
            )));
        }
        Ok(())
    }
}

/// `logspace(-21, 21, 25) × logspace(0, 8, 10)`, `nu_s` outermost.
pub fn kalman_grid() -> Vec<KalmanParams> {
    let nus = logspace(-21.0, 21.0, 25);
    let rhos = logspace(0.0, 8.0, 10);
    nus.iter()
        .flat_map(|&nu_s| rhos.iter().map(move |&rho| KalmanParams { nu_s, rho }))
        .collect()
}

pub(crate) fn logspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64))
        .collect()
}

/// Filter state for a chain of `dim = d_max + 1` integrators with unit step.
#[derive(Debug, Clone)]
pub struct KalmanChain {
    dim: usize,
    /// Row-major transition `Φ[a][b] = 1/(b−a)!` for `b ≥ a`.
    phi: Vec<f64>,
    q: Vec<f64>,
    x: Vec<f64>,
    p: Vec<f64>,
    scratch: Vec<f64>,
}

impl KalmanChain {
    /// Starts at `x = [y0, 0, …]`, `P = I`.
    pub fn new(d_max: usize, params: KalmanParams, y0: f64) -> Result<Self> {
        params.validate()?;
        if d_max < 1 {
            return Err(Error::arg("kalman chain needs d_max >= 1"));
        }
        let dim = d_max + 1;
        let mut phi = vec![0.0; dim * dim];
        for a in 0..dim {
            let mut fact = 1.0;
            for b in a..dim {
                if b > a {
                    fact *= (b - a) as f64;
                }
                phi[a * dim + b] = 1.0 / fact;
            }
        }
        let q = (0..dim).map(|i| params.nu_s * params.rho.powi(i as i32 + 1)).collect();
        let mut p = vec![0.0; dim * dim];
        for i in 0..dim {
            p[i * dim + i] = 1.0;
        }
        let mut x = vec![0.0; dim];
        x[0] = y0;
        Ok(Self {
            dim,
            phi,
            q,
            x,
            p,
            scratch: vec![0.0; dim * dim],
        })
    }

    pub fn state(&self) -> &[f64] {
        &self.x
    }

    /// Row-major covariance.
    pub fn covariance(&self) -> &[f64] {
        &self.p
    }

    pub fn predict(&mut self) {
        let n = self.dim;
        let xs: Vec<f64> = (0..n)
            .map(|a| (a..n).map(|b| self.phi[a * n + b] * self.x[b]).sum())
            .collect();
        self.x.copy_from_slice(&xs);
        // scratch = Φ P
        for a in 0..n {
            for c in 0..n {
                self.scratch[a * n + c] = (a..n).map(|b| self.phi[a * n + b] * self.p[b * n + c]).sum();
            }
        }
        // P = scratch Φᵀ + Q
        for a in 0..n {
            for c in 0..n {
                let v: f64 = (c..n).map(|b| self.scratch[a * n + b] * self.phi[c * n + b]).sum();
                self.p[a * n + c] = v;
            }
            self.p[a * n + a] += self.q[a];
        }
        self.symmetrize();
    }

    /// Measurement update of `x_1` with unit noise variance.
    pub fn update(&mut self, y: f64) {
        let n = self.dim;
        let s = self.p[0] + 1.0;
        let innovation = y - self.x[0];
        let col: Vec<f64> = (0..n).map(|i| self.p[i * n]).collect();
        for i in 0..n {
            self.x[i] += col[i] / s * innovation;
        }
        for i in 0..n {
            for j in 0..n {
                self.p[i * n + j] -= col[i] * col[j] / s;
            }
        }
        self.symmetrize();
    }

    fn symmetrize(&mut self) {
        let n = self.dim;
        for i in 0..n {
            for j in i + 1..n {
                let m = 0.5 * (self.p[i * n + j] + self.p[j * n + i]);
                self.p[i * n + j] = m;
                self.p[j * n + i] = m;
            }
        }
    }
}

/// Filtered estimates of derivatives `0..=d_max`; `out[d][k]` is the
/// `d`-derivative estimate after the measurement at `k`.
pub fn kalman_differentiate(s: &[f64], d_max: usize, params: KalmanParams) -> Result<Vec<Vec<f64>>> {
    if s.is_empty() {
        return Err(Error::arg("empty series"));
    }
    let mut chain = KalmanChain::new(d_max, params, s[0])?;
    let mut out = vec![Vec::with_capacity(s.len()); d_max + 1];
    for (k, &y) in s.iter().enumerate() {
        if k > 0 {
            chain.predict();
        }
        chain.update(y);
        for (d, series) in out.iter_mut().enumerate() {
            series.push(chain.state()[d]);
        }
    }
    Ok(out)
}
