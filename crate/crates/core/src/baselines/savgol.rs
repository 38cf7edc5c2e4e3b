//! Sliding least-squares polynomial differentiation.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SavGolParams {
    /// Odd number of samples per window.
    pub window: usize,
    pub order: usize,
}

impl SavGolParams {
    pub fn validate(&self, d: usize) -> Result<()> {
        if self.window % 2 == 0 || self.window <= self.order || d > self.order {
            return Err(Error::arg(format!(
                "invalid Savitzky-Golay setting window={} order={} d={d}",
                self.window, self.order
            )));
        }
        Ok(())
    }
}

pub const SAVGOL_WINDOWS: [usize; 10] = [1, 5, 11, 21, 41, 51, 101, 201, 401, 501];
pub const SAVGOL_ORDERS: [usize; 4] = [2, 3, 4, 5];

/// All 40 nominal combinations, window outermost. Invalid ones are kept so
/// the caller can count and skip them.
pub fn savgol_grid() -> Vec<SavGolParams> {
    SAVGOL_WINDOWS
        .iter()
        .flat_map(|&window| SAVGOL_ORDERS.iter().map(move |&order| SavGolParams { window, order }))
        .collect()
}

/// Pseudo-inverse of the scaled Vandermonde matrix on `x = (j − h)/h`,
/// `j = 0..window`, with `h = (window − 1)/2`. Row `k` maps a window to the
/// coefficient of `x^k`.
fn fit_operator(params: SavGolParams) -> Result<(DMatrix<f64>, f64)> {
    let h = ((params.window - 1) / 2) as f64;
    let cols = params.order + 1;
    let j = DMatrix::from_fn(params.window, cols, |r, c| ((r as f64 - h) / h).powi(c as i32));
    let pinv = j
        .svd(true, true)
        .pseudo_inverse(1e-13)
        .map_err(|e| Error::Numerical(e.to_string()))?;
    Ok((pinv, h))
}

fn falling(k: usize, d: usize) -> f64 {
    (0..d).map(|i| (k - i) as f64).product()
}

/// Convolution weights giving the `d`-th derivative at the window centre.
pub fn savgol_coefficients(params: SavGolParams, d: usize) -> Result<Vec<f64>> {
    params.validate(d)?;
    let (pinv, h) = fit_operator(params)?;
    let scale = falling(d, d) / h.powi(d as i32);
    Ok(pinv.row(d).iter().map(|w| w * scale).collect())
}

/// `d`-th derivative at offset `x` (scaled units) of the polynomial with
/// coefficients `c`, in per-sample units.
fn eval_derivative(c: &[f64], d: usize, x: f64, h: f64) -> f64 {
    let v: f64 = (d..c.len()).map(|k| c[k] * falling(k, d) * x.powi((k - d) as i32)).sum();
    v / h.powi(d as i32)
}

pub fn savgol_differentiate(s: &[f64], d: usize, params: SavGolParams) -> Result<Vec<f64>> {
    params.validate(d)?;
    let n = s.len();
    if params.window > n {
        return Err(Error::arg(format!("window {} exceeds series length {n}", params.window)));
    }
    let (pinv, h) = fit_operator(params)?;
    let half = (params.window - 1) / 2;
    let scale = falling(d, d) / h.powi(d as i32);
    let weights: Vec<f64> = pinv.row(d).iter().map(|w| w * scale).collect();

    let mut out = vec![0.0; n];
    for m in half..n - half {
        out[m] = weights.iter().zip(&s[m - half..=m + half]).map(|(w, x)| w * x).sum();
    }
    let fit = |window: &[f64]| -> Vec<f64> {
        (0..pinv.nrows())
            .map(|k| pinv.row(k).iter().zip(window).map(|(a, b)| a * b).sum())
            .collect()
    };
    let head = fit(&s[..params.window]);
    for (m, o) in out.iter_mut().enumerate().take(half) {
        *o = eval_derivative(&head, d, (m as f64 - h) / h, h);
    }
    let tail = fit(&s[n - params.window..]);
    let centre = (n - 1 - half) as f64;
    for (m, o) in out.iter_mut().enumerate().skip(n - half) {
        *o = eval_derivative(&tail, d, (m as f64 - centre) / h, h);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn grid_counts() {
        let g = savgol_grid();
        assert_eq!(g.len(), 40);
        // window 1 fails every order and (5, 5) is not overdetermined
        assert_eq!(g.iter().filter(|p| p.validate(2).is_ok()).count(), 35);
        assert_eq!(g.iter().filter(|p| p.validate(4).is_ok()).count(), 17);
    }

    #[test]
    fn five_point_slope_matches_normal_equations() {
        // unscaled Vandermonde on offsets −2..2, solved through JᵀJ
        let j = DMatrix::from_fn(5, 3, |r, c| (r as f64 - 2.0).powi(c as i32));
        let normal = (j.transpose() * &j).try_inverse().unwrap() * j.transpose();
        let oracle: Vec<f64> = normal.row(1).iter().copied().collect();
        let got = savgol_coefficients(SavGolParams { window: 5, order: 2 }, 1).unwrap();
        for (a, b) in got.iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-12, "{got:?} vs {oracle:?}");
        }
        let classic = [-0.2, -0.1, 0.0, 0.1, 0.2];
        for (a, b) in got.iter().zip(&classic) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn quadratic_second_derivative_is_exact() {
        let s: Vec<f64> = (0..200).map(|t| 0.003 * (t as f64).powi(2) - 0.4 * t as f64 + 2.0).collect();
        let out = savgol_differentiate(&s, 2, SavGolParams { window: 11, order: 2 }).unwrap();
        for v in &out[5..195] {
            assert!((v - 0.006).abs() <= 1e-9);
        }
        // edge fits are exact too for an in-class signal
        for v in out[..5].iter().chain(&out[195..]) {
            assert!((v - 0.006).abs() <= 1e-9);
        }
    }

    #[test]
    fn invalid_settings_error_on_direct_call() {
        let s = vec![0.0; 50];
        for (w, o, d) in [(1, 2, 0), (4, 2, 1), (5, 5, 1), (5, 2, 3), (51, 2, 1)] {
            assert!(savgol_differentiate(&s, d, SavGolParams { window: w, order: o }).is_err());
        }
    }

    proptest! {
        #[test]
        fn reproduces_polynomials_on_interior(
            wi in 1usize..7,
            order in 2usize..6,
            d in 0usize..5,
            coef in prop::collection::vec(-1.0f64..1.0, 6),
        ) {
            let window = SAVGOL_WINDOWS[wi];
            let params = SavGolParams { window, order };
            prop_assume!(params.validate(d).is_ok());
            let n = window + 40;
            // polynomial in u = t/n keeps magnitudes bounded
            let deg = order;
            let poly = |u: f64| (0..=deg).map(|k| coef[k] * u.powi(k as i32)).sum::<f64>();
            let deriv = |u: f64| -> f64 {
                let v: f64 = (d..=deg).map(|k| coef[k] * falling(k, d) * u.powi((k - d) as i32)).sum();
                v / (n as f64).powi(d as i32)
            };
            let s: Vec<f64> = (0..n).map(|t| poly(t as f64 / n as f64)).collect();
            let out = savgol_differentiate(&s, d, params).unwrap();
            let half = window / 2;
            for m in half..n - half {
                let truth = deriv(m as f64 / n as f64);
                prop_assert!((out[m] - truth).abs() <= 1e-9, "m={} {} vs {}", m, out[m], truth);
            }
        }
    }
}
