//! Ridge regression for matrix-valued targets with k-fold selection of the
//! regularization strength.
//!
//! Solves `min_A ‖XA − L‖²_F + α‖A‖²_F` through a thin SVD `X = UΣVᵀ`:
//! `A(α) = V · diag(σ / (σ² + α)) · Uᵀ L`. The factorization is shared by
//! every candidate α, so sweeping a grid costs one SVD per fold.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Candidate α values `logspace(-4, 3, 20)`.
pub fn default_alphas() -> Vec<f64> {
    (0..20).map(|i| 10f64.powf(-4.0 + 7.0 * i as f64 / 19.0)).collect()
}

#[derive(Debug, Clone)]
pub struct RidgeSolution {
    pub coef: DMatrix<f64>,
    /// Set when α = 0 met a rank-deficient `X` and the minimum-norm
    /// solution was returned.
    pub min_norm: bool,
}

/// Result of cross-validated ridge selection.
#[derive(Debug, Clone)]
pub struct RidgeFit {
    pub coef: DMatrix<f64>,
    pub alpha: f64,
    /// Mean held-out MSE for each candidate, in candidate order.
    pub cv_scores: Vec<f64>,
}

/// Thin SVD of a feature matrix, reusable across labels and α values.
#[derive(Debug, Clone)]
pub struct RidgeSolver {
    u: DMatrix<f64>,
    sigma: DVector<f64>,
    v: DMatrix<f64>,
    cols: usize,
    rank_tol: f64,
}

impl RidgeSolver {
    pub fn new(x: &DMatrix<f64>) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::arg("feature matrix must be non-empty"));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("feature matrix contains non-finite values".into()));
        }
        let svd = x.clone().svd(true, true);
        let u = svd.u.ok_or_else(|| Error::Numerical("SVD did not produce U".into()))?;
        let v_t = svd.v_t.ok_or_else(|| Error::Numerical("SVD did not produce Vᵀ".into()))?;
        let sigma = svd.singular_values;
        let smax = sigma.iter().fold(0.0f64, |m, &s| m.max(s));
        let rank_tol = smax * f64::EPSILON * x.nrows().max(x.ncols()) as f64;
        Ok(Self {
            u,
            sigma,
            v: v_t.transpose(),
            cols: x.ncols(),
            rank_tol,
        })
    }

    /// Shrinkage factors `σ / (σ² + α)`; zero for numerically null σ.
    fn filter(&self, alpha: f64) -> DVector<f64> {
        self.sigma.map(|s| if s <= self.rank_tol { 0.0 } else { s / (s * s + alpha) })
    }

    fn is_rank_deficient(&self) -> bool {
        self.sigma.len() < self.cols || self.sigma.iter().any(|&s| s <= self.rank_tol)
    }

    /// `Uᵀ L`, the label projection shared across α.
    fn project_labels(&self, l: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if l.nrows() != self.u.nrows() {
            return Err(Error::arg(format!(
                "label rows {} do not match feature rows {}",
                l.nrows(),
                self.u.nrows()
            )));
        }
        Ok(self.u.transpose() * l)
    }

    fn coef_from_projected(&self, utl: &DMatrix<f64>, alpha: f64) -> DMatrix<f64> {
        let f = self.filter(alpha);
        let mut scaled = utl.clone();
        for (mut row, fi) in scaled.row_iter_mut().zip(f.iter()) {
            row *= *fi;
        }
        &self.v * scaled
    }

    pub fn fit(&self, l: &DMatrix<f64>, alpha: f64) -> Result<RidgeSolution> {
        check_alpha(alpha)?;
        if alpha == 0.0 && self.u.nrows() < self.cols {
            return Err(Error::arg("alpha must be > 0 when rows < columns"));
        }
        let utl = self.project_labels(l)?;
        Ok(RidgeSolution {
            coef: self.coef_from_projected(&utl, alpha),
            min_norm: alpha == 0.0 && self.is_rank_deficient(),
        })
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::arg(format!("alpha must be finite and >= 0, got {alpha}")));
    }
    Ok(())
}

/// `argmin_A ‖XA − L‖²_F + α‖A‖²_F`.
pub fn ridge_fit(x: &DMatrix<f64>, l: &DMatrix<f64>, alpha: f64) -> Result<RidgeSolution> {
    RidgeSolver::new(x)?.fit(l, alpha)
}

/// Contiguous row blocks `[start, end)` for `folds` folds over `m` rows.
pub fn fold_bounds(m: usize, folds: usize) -> Vec<(usize, usize)> {
    (0..folds).map(|f| (f * m / folds, (f + 1) * m / folds)).collect()
}

struct Fold {
    solver: RidgeSolver,
    /// held-out features times V: predictions are `xv · diag(f) · Uᵀ L_train`
    xv: DMatrix<f64>,
    train: Vec<usize>,
    val: (usize, usize),
}

/// Cross-validation state for one feature matrix. Fits any number of label
/// matrices against the same folds.
pub struct CvRidge {
    full: RidgeSolver,
    folds: Vec<Fold>,
}

impl CvRidge {
    pub fn new(x: &DMatrix<f64>, folds: usize) -> Result<Self> {
        if folds < 2 {
            return Err(Error::arg(format!("folds must be >= 2, got {folds}")));
        }
        let m = x.nrows();
        if m < folds {
            return Err(Error::arg(format!("{m} rows cannot fill {folds} folds")));
        }
        let folds = fold_bounds(m, folds)
            .into_iter()
            .map(|(a, b)| {
                let train: Vec<usize> = (0..a).chain(b..m).collect();
                let solver = RidgeSolver::new(&x.select_rows(train.iter()))?;
                let xv = x.rows(a, b - a) * &solver.v;
                Ok(Fold {
                    solver,
                    xv,
                    train,
                    val: (a, b),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            full: RidgeSolver::new(x)?,
            folds,
        })
    }

    /// Mean held-out MSE per candidate α.
    pub fn scores(&self, l: &DMatrix<f64>, alphas: &[f64]) -> Result<Vec<f64>> {
        if alphas.is_empty() {
            return Err(Error::arg("candidate alpha list is empty"));
        }
        for &a in alphas {
            check_alpha(a)?;
        }
        if l.nrows() != self.full.u.nrows() {
            return Err(Error::arg("label rows do not match feature rows"));
        }
        let mut totals = vec![0.0; alphas.len()];
        for fold in &self.folds {
            let utl = fold.solver.project_labels(&l.select_rows(fold.train.iter()))?;
            let (a, b) = fold.val;
            let target = l.rows(a, b - a);
            let denom = (target.nrows() * target.ncols()) as f64;
            for (total, &alpha) in totals.iter_mut().zip(alphas) {
                let f = fold.solver.filter(alpha);
                let mut scaled = utl.clone();
                for (mut row, fi) in scaled.row_iter_mut().zip(f.iter()) {
                    row *= *fi;
                }
                let pred = &fold.xv * scaled;
                let sse: f64 = pred.iter().zip(target.iter()).map(|(p, t)| (p - t).powi(2)).sum();
                *total += sse / denom;
            }
        }
        let k = self.folds.len() as f64;
        Ok(totals.into_iter().map(|t| t / k).collect())
    }

    pub fn fit(&self, l: &DMatrix<f64>, alphas: &[f64]) -> Result<RidgeFit> {
        let cv_scores = self.scores(l, alphas)?;
        let best = select_alpha(alphas, &cv_scores)
            .ok_or_else(|| Error::Numerical("all cross-validation scores are non-finite".into()))?;
        let alpha = alphas[best];
        let coef = self.full.fit(l, alpha)?.coef;
        Ok(RidgeFit {
            coef,
            alpha,
            cv_scores,
        })
    }
}

/// Index of the minimal finite score; equal scores resolve to the smaller α.
fn select_alpha(alphas: &[f64], scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        if !s.is_finite() {
            continue;
        }
        best = match best {
            None => Some(i),
            Some(b) if s < scores[b] || (s == scores[b] && alphas[i] < alphas[b]) => Some(i),
            keep => keep,
        };
    }
    best
}

/// Cross-validated ridge fit over contiguous folds.
pub fn ridge_cv_fit(x: &DMatrix<f64>, l: &DMatrix<f64>, alphas: &[f64], folds: usize) -> Result<RidgeFit> {
    if alphas.is_empty() {
        return Err(Error::arg("candidate alpha list is empty"));
    }
    CvRidge::new(x, folds)?.fit(l, alphas)
}
