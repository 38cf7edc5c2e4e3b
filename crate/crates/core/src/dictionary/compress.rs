use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Singular values below `RANK_FLOOR · σ_max` are always discarded.
pub const RANK_FLOOR: f64 = 1e-12;

/// Truncated SVD `A ≈ U · diag(S) · Vᵀ` of a square map.
///
/// `apply` evaluates `Aᵀ y = V · diag(S) · Uᵀ y` without forming `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedMap {
    n_w: usize,
    /// `n_w × r`
    u: DMatrix<f64>,
    s: Vec<f64>,
    /// `n_w × r`
    v: DMatrix<f64>,
    rel_err: f64,
}

impl CompressedMap {
    pub(crate) fn from_factors(u: DMatrix<f64>, s: Vec<f64>, v: DMatrix<f64>, rel_err: f64) -> Result<Self> {
        let n_w = u.nrows();
        if v.nrows() != n_w || u.ncols() != s.len() || v.ncols() != s.len() {
            return Err(Error::Format("inconsistent factor shapes".into()));
        }
        Ok(Self { n_w, u, s, v, rel_err })
    }

    pub fn n_w(&self) -> usize {
        self.n_w
    }

    pub fn rank(&self) -> usize {
        self.s.len()
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.s
    }

    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    /// Relative Frobenius error of the truncation, measured at build time.
    pub fn rel_err(&self) -> f64 {
        self.rel_err
    }

    /// Reconstructs the dense map `U · diag(S) · Vᵀ`.
    pub fn dense(&self) -> DMatrix<f64> {
        let mut us = self.u.clone();
        for (mut col, s) in us.column_iter_mut().zip(&self.s) {
            col *= *s;
        }
        us * self.v.transpose()
    }

    /// `Aᵀ · y` for one window.
    pub fn apply(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.n_w {
            return Err(Error::arg(format!(
                "window length {} does not match map size {}",
                y.len(),
                self.n_w
            )));
        }
        let yv = DVector::from_column_slice(y);
        let mut coef = self.u.tr_mul(&yv);
        coef.iter_mut().zip(&self.s).for_each(|(c, s)| *c *= s);
        Ok((&self.v * coef).as_slice().to_vec())
    }

    /// Applies the map to every row of `windows` (`N × n_w`); row `i` of the
    /// result is `(Aᵀ · windows[i, :]ᵀ)ᵀ = windows[i, :] · A`.
    pub fn apply_rows(&self, windows: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if windows.ncols() != self.n_w {
            return Err(Error::arg(format!(
                "window length {} does not match map size {}",
                windows.ncols(),
                self.n_w
            )));
        }
        if self.s.is_empty() {
            return Ok(DMatrix::zeros(windows.nrows(), self.n_w));
        }
        let mut proj = windows * &self.u;
        for (mut col, s) in proj.column_iter_mut().zip(&self.s) {
            col *= *s;
        }
        Ok(proj * self.v.transpose())
    }
}

/// Smallest-rank truncated SVD of `a` whose relative Frobenius error is at
/// most `tol`.
pub fn compress(a: &DMatrix<f64>, tol: f64) -> CompressedMap {
    let n_w = a.nrows();
    let svd = a.clone().svd(true, true);
    let u_full = svd.u.expect("SVD requested U");
    let v_full = svd.v_t.expect("SVD requested Vᵀ").transpose();

    // nalgebra does not guarantee ordering; sort by decreasing σ
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]).then(i.cmp(&j)));
    let sigma: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();

    let total: f64 = sigma.iter().map(|s| s * s).sum();
    let smax = sigma.first().copied().unwrap_or(0.0);
    let floor = RANK_FLOOR * smax;
    let budget = tol * tol * total;

    // tail[r] = Σ_{i ≥ r} σ_i²
    let mut tail = vec![0.0; sigma.len() + 1];
    for i in (0..sigma.len()).rev() {
        tail[i] = tail[i + 1] + sigma[i] * sigma[i];
    }
    let significant = sigma.iter().take_while(|&&s| s > floor && s > 0.0).count();
    let rank = (0..=significant).find(|&r| tail[r] <= budget).unwrap_or(significant);

    let rel_err = if total > 0.0 { (tail[rank] / total).sqrt() } else { 0.0 };
    let u = DMatrix::from_fn(n_w, rank, |i, c| u_full[(i, order[c])]);
    let v = DMatrix::from_fn(a.ncols(), rank, |i, c| v_full[(i, order[c])]);
    CompressedMap {
        n_w,
        u,
        s: sigma[..rank].to_vec(),
        v,
        rel_err,
    }
}
