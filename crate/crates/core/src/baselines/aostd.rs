//! Implicit arbitrary-order sliding-mode differentiator.
//!
//! One step with measurement `y` and no correction yields a prediction `P`
//! of `z_0`. The corrections of every level telescope into
//! `z_0' = P − sign(σ)·Φ(|σ|)` with
//! `Φ(a) = Σ_i h^{i+1} λ_i L^{(i+1)/(n+1)} a^{(n−i)/(n+1)}`, so `σ = z_0' − y`
//! solves `σ + sign(σ)·Φ(|σ|) = P − y`.

use serde::{Deserialize, Serialize};

use super::kalman::logspace;
use crate::error::{Error, Result};

/// Gains from the highest derivative level down.
pub const DEFAULT_LAMBDAS: [f64; 6] = [1.1, 1.5, 2.0, 3.0, 5.0, 8.0];

pub const MAX_ITER: usize = 200;
/// Convergence when `|σ + Φ(|σ|) − |r|| ≤ RESIDUAL_TOL · max(1, |r|)`.
pub const RESIDUAL_TOL: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StdParams {
    pub l: f64,
    /// `lambdas[i]` multiplies the correction of `z_i`; needs `n_order + 1`
    /// entries.
    pub lambdas: Vec<f64>,
    pub h: f64,
}

impl StdParams {
    /// Default gains for `n_order`, unit step.
    pub fn new(l: f64, n_order: usize) -> Result<Self> {
        Ok(Self {
            l,
            lambdas: default_lambdas(n_order)?,
            h: 1.0,
        })
    }
}

/// `λ_i = DEFAULT_LAMBDAS[n − i]`, so the top level gets the smallest gain.
pub fn default_lambdas(n_order: usize) -> Result<Vec<f64>> {
    if n_order + 1 > DEFAULT_LAMBDAS.len() {
        return Err(Error::arg(format!(
            "default gains cover orders up to {}, got {n_order}",
            DEFAULT_LAMBDAS.len() - 1
        )));
    }
    Ok((0..=n_order).map(|i| DEFAULT_LAMBDAS[n_order - i]).collect())
}

/// 100 values `logspace(-6, 6, 100)`.
pub fn aostd_l_grid() -> Vec<f64> {
    logspace(-6.0, 6.0, 100)
}

#[derive(Debug, Clone)]
pub struct AostdOutput {
    /// `z[i][k]`, the `i`-derivative estimate at instant `k`.
    pub z: Vec<Vec<f64>>,
    /// `σ` at each instant (0 at `k = 0`).
    pub sigma: Vec<f64>,
    /// `|σ − (r − sign·Φ(|σ|))| / max(1, |r|)` with `r = P − y`; absolute
    /// while the terms are O(1), relative once the filter lags far behind.
    pub residual: Vec<f64>,
    /// Instants where the iteration hit `MAX_ITER`.
    pub flagged: Vec<usize>,
}

struct Implicit {
    /// `c_i = h^{i+1} λ_i L^{(i+1)/(n+1)}`
    c: Vec<f64>,
    n: usize,
}

impl Implicit {
    fn phi(&self, a: f64) -> f64 {
        let np1 = (self.n + 1) as f64;
        self.c
            .iter()
            .enumerate()
            .map(|(i, c)| c * a.powf((self.n - i) as f64 / np1))
            .sum()
    }

    /// `(σ, sign)` with `sign ∈ [−1, 1]` inside the dead zone, plus whether
    /// the iteration converged.
    fn solve(&self, r: f64) -> (f64, f64, bool) {
        let phi0 = self.c[self.n];
        if r.abs() <= phi0 {
            let sign = if phi0 > 0.0 { r / phi0 } else { 0.0 };
            return (0.0, sign, true);
        }
        // a = b^{n+1}: F(b) = b^{n+1} + Σ_i c_i b^{n−i} − |r| is increasing
        // and convex on b ≥ 0, so Newton from above is monotone
        let target = r.abs();
        let np1 = self.n as i32 + 1;
        let f = |b: f64| -> (f64, f64) {
            let mut v = b.powi(np1) - target;
            let mut dv = np1 as f64 * b.powi(np1 - 1);
            for (i, c) in self.c.iter().enumerate() {
                let e = (self.n - i) as i32;
                v += c * b.powi(e);
                if e > 0 {
                    dv += c * e as f64 * b.powi(e - 1);
                }
            }
            (v, dv)
        };
        let mut b = target.powf(1.0 / np1 as f64);
        let scale = target.max(1.0);
        let mut last_step = 0.0f64;
        let mut damping = 1.0;
        for _ in 0..MAX_ITER {
            // v is the equation residual at b
            let (v, dv) = f(b);
            if v.abs() <= RESIDUAL_TOL * scale {
                return (r.signum() * b.powi(np1), r.signum(), true);
            }
            let mut step = if dv > 0.0 { v / dv } else { 0.0 };
            if last_step != 0.0 && step.signum() != last_step.signum() {
                damping = 0.5;
            }
            step *= damping;
            last_step = step;
            let next = (b - step).max(0.0);
            // no representable progress left
            if (next - b).abs() <= 2.0 * f64::EPSILON * b {
                return (r.signum() * next.powi(np1), r.signum(), true);
            }
            b = next;
        }
        let sigma = b.powi(np1);
        (r.signum() * sigma, r.signum(), false)
    }
}

pub fn aostd_differentiate(s: &[f64], n_order: usize, params: &StdParams) -> Result<AostdOutput> {
    if n_order < 1 {
        return Err(Error::arg("n_order must be >= 1"));
    }
    if !(params.h > 0.0) || !(params.l > 0.0) || !params.l.is_finite() {
        return Err(Error::arg(format!("need h > 0 and L > 0, got h={} L={}", params.h, params.l)));
    }
    if params.lambdas.len() < n_order + 1 || params.lambdas.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::arg(format!("need {} positive gains", n_order + 1)));
    }
    if s.is_empty() {
        return Err(Error::arg("empty series"));
    }
    let n = n_order;
    let h = params.h;
    let np1 = (n + 1) as f64;
    let c: Vec<f64> = (0..=n)
        .map(|i| h.powi(i as i32 + 1) * params.lambdas[i] * params.l.powf((i + 1) as f64 / np1))
        .collect();
    let implicit = Implicit { c, n };

    let mut z = vec![0.0; n + 1];
    z[0] = s[0];
    let mut out = AostdOutput {
        z: vec![Vec::with_capacity(s.len()); n + 1],
        sigma: Vec::with_capacity(s.len()),
        residual: Vec::with_capacity(s.len()),
        flagged: Vec::new(),
    };
    let record = |out: &mut AostdOutput, z: &[f64]| {
        for (series, v) in out.z.iter_mut().zip(z) {
            series.push(*v);
        }
    };
    record(&mut out, &z);
    out.sigma.push(0.0);
    out.residual.push(0.0);

    let mut pred = vec![0.0; n + 1];
    for (k, &y) in s.iter().enumerate().skip(1) {
        pred[n] = z[n];
        for i in (0..n).rev() {
            pred[i] = z[i] + h * pred[i + 1];
        }
        let r = pred[0] - y;
        let (sigma, sign, converged) = implicit.solve(r);
        if !converged {
            out.flagged.push(k);
        }
        let a = sigma.abs();
        // top-down update with the solved σ
        z[n] -= h * params.lambdas[n] * params.l * sign;
        for i in (0..n).rev() {
            let corr = h * params.lambdas[i] * params.l.powf((i + 1) as f64 / np1) * a.powf((n - i) as f64 / np1) * sign;
            z[i] = z[i] - corr + h * z[i + 1];
        }
        out.residual.push((sigma - (r - sign * implicit.phi(a))).abs() / r.abs().max(1.0));
        out.sigma.push(sigma);
        record(&mut out, &z);
    }
    Ok(out)
}
