//! Sinusoidal bases and bandwidth-limited projections.
//!
//! All pulsations are in radians per sample; time runs over `t = 0, 1, …, n-1`.
//! Basis columns are ordered `[1, sin(Ω₁t), cos(Ω₁t), sin(Ω₂t), …]` with
//! non-decreasing pulsation, so truncating at a cut-off keeps a prefix.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Relative slack when comparing a pulsation against a cut-off.
const CUTOFF_SLACK: f64 = 1e-12;

/// Columns whose orthogonal residual falls below this (after unit scaling)
/// are treated as numerically dependent and dropped from the projector.
const DROP_TOL: f64 = 1e-10;

/// Log-spaced pulsations `10^ξ · ω̄`, `ξ ∈ linspace(-3, 0, n_grid)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PulsationGrid {
    n_per_period: usize,
    values: Vec<f64>,
}

impl PulsationGrid {
    pub fn new(n_per_period: usize, n_grid: usize) -> Result<Self> {
        if n_per_period < 2 {
            return Err(Error::arg(format!("n_per_period must be >= 2, got {n_per_period}")));
        }
        if n_grid < 2 {
            return Err(Error::arg(format!("n_grid must be >= 2, got {n_grid}")));
        }
        let omega_bar = max_pulsation(n_per_period);
        let step = 3.0 / (n_grid - 1) as f64;
        let values = (0..n_grid)
            .map(|i| {
                // pin the endpoint so the last value is exactly ω̄
                if i + 1 == n_grid {
                    omega_bar
                } else {
                    10f64.powf(-3.0 + step * i as f64) * omega_bar
                }
            })
            .collect();
        Ok(Self { n_per_period, values })
    }

    pub fn n_per_period(&self) -> usize {
        self.n_per_period
    }

    pub fn omega_bar(&self) -> f64 {
        max_pulsation(self.n_per_period)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Number of grid pulsations `≤ cutoff`.
    pub fn count_upto(&self, cutoff: f64) -> usize {
        let bound = cutoff * (1.0 + CUTOFF_SLACK);
        self.values.partition_point(|&w| w <= bound)
    }

    /// Index of the grid pulsation nearest to `value` (ties go to the lower one).
    pub fn nearest_index(&self, value: f64) -> usize {
        let upper = self.values.partition_point(|&w| w < value);
        if upper == 0 {
            return 0;
        }
        if upper == self.values.len() {
            return upper - 1;
        }
        if value - self.values[upper - 1] <= self.values[upper] - value {
            upper - 1
        } else {
            upper
        }
    }

    /// Basis matrix of order `d` on `n` samples, truncated at `cutoff`.
    pub fn eval_basis(&self, n: usize, cutoff: f64, d: usize) -> BasisMatrix {
        let pulsations = self.values[..self.count_upto(cutoff)].to_vec();
        let cols = 2 * pulsations.len() + 1;
        let matrix = DMatrix::from_fn(n, cols, |t, c| column_value(&pulsations, c, t as f64, d));
        BasisMatrix {
            matrix,
            order: d,
            cutoff,
            pulsations,
        }
    }
}

/// `2π / n_per_period`.
pub fn max_pulsation(n_per_period: usize) -> f64 {
    2.0 * PI / n_per_period as f64
}

/// `ω^d · sin(ωt + dπ/2)`, with the phase shift resolved by quadrant so no
/// rounding enters through `dπ/2`.
pub fn sin_derivative(omega: f64, t: f64, d: usize) -> f64 {
    let x = omega * t;
    let base = match d % 4 {
        0 => x.sin(),
        1 => x.cos(),
        2 => -x.sin(),
        _ => -x.cos(),
    };
    omega.powi(d as i32) * base
}

/// `ω^d · cos(ωt + dπ/2)`.
pub fn cos_derivative(omega: f64, t: f64, d: usize) -> f64 {
    let x = omega * t;
    let base = match d % 4 {
        0 => x.cos(),
        1 => -x.sin(),
        2 => -x.cos(),
        _ => x.sin(),
    };
    omega.powi(d as i32) * base
}

/// Value of basis column `col` (0 = constant) at time `t` for order `d`.
pub(crate) fn column_value(pulsations: &[f64], col: usize, t: f64, d: usize) -> f64 {
    if col == 0 {
        return if d == 0 { 1.0 } else { 0.0 };
    }
    let omega = pulsations[(col - 1) / 2];
    if col % 2 == 1 {
        sin_derivative(omega, t, d)
    } else {
        cos_derivative(omega, t, d)
    }
}

/// `n_r` linearly spaced cut-offs between the smallest grid pulsation and
/// `ω̄`, each snapped to its nearest grid member.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignGrid {
    values: Vec<f64>,
    grid_indices: Vec<usize>,
}

impl DesignGrid {
    pub fn new(grid: &PulsationGrid, n_r: usize) -> Result<Self> {
        if n_r < 2 {
            return Err(Error::arg(format!("n_r must be >= 2, got {n_r}")));
        }
        let lo = grid.values[0];
        let hi = grid.omega_bar();
        let grid_indices: Vec<usize> = (0..n_r)
            .map(|j| {
                let raw = lo + (hi - lo) * j as f64 / (n_r - 1) as f64;
                grid.nearest_index(raw)
            })
            .collect();
        let values = grid_indices.iter().map(|&g| grid.values[g]).collect();
        Ok(Self { values, grid_indices })
    }

    /// Rebuilds a design grid from stored cut-off values.
    pub fn from_values(grid: &PulsationGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 || values.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Format("design grid must be non-decreasing with >= 2 values".into()));
        }
        let grid_indices = values.iter().map(|&v| grid.nearest_index(v)).collect();
        Ok(Self { values, grid_indices })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn grid_indices(&self) -> &[usize] {
        &self.grid_indices
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// A truncated sinusoidal basis (or its `order`-th derivative) sampled on
/// `t = 0..rows`.
#[derive(Debug, Clone)]
pub struct BasisMatrix {
    pub matrix: DMatrix<f64>,
    pub order: usize,
    pub cutoff: f64,
    pub pulsations: Vec<f64>,
}

impl BasisMatrix {
    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }
}

/// Orthonormal basis for the nested spans of a truncated sinusoidal basis.
///
/// Columns are orthogonalized in pulsation order by modified Gram-Schmidt
/// with one reorthogonalization pass. Each candidate column is first scaled
/// to unit norm; it is dropped when what survives orthogonalization is below
/// `DROP_TOL`. Because column sets for increasing cut-offs are prefixes, the
/// span for any cut-off is a prefix of the orthonormal vectors.
#[derive(Debug, Clone)]
pub struct NestedProjector {
    n: usize,
    /// Orthonormal vectors, each of length `n`, stored back to back.
    q: Vec<f64>,
    /// `kept[g]` = vectors retained after the constant and the first `g`
    /// pulsations.
    kept: Vec<usize>,
    pulsations: Vec<f64>,
}

impl NestedProjector {
    pub fn new(grid: &PulsationGrid, n: usize, max_cutoff: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::arg("series must have at least one sample"));
        }
        let pulsations = grid.values[..grid.count_upto(max_cutoff)].to_vec();
        let mut q: Vec<f64> = Vec::with_capacity(n * (2 * pulsations.len() + 1).min(n));
        let mut kept = Vec::with_capacity(pulsations.len() + 1);
        let mut count = 0usize;
        let mut v = vec![0.0; n];

        let cols = 2 * pulsations.len() + 1;
        let mut col = 0;
        while col < cols {
            if count < n {
                for (t, x) in v.iter_mut().enumerate() {
                    *x = column_value(&pulsations, col, t as f64, 0);
                }
                if orthogonalize(&q, count, &mut v) {
                    q.extend_from_slice(&v);
                    count += 1;
                }
            }
            // constant column closes group 0; each cosine column closes a pulsation
            if col % 2 == 0 {
                kept.push(count);
            }
            col += 1;
        }
        Ok(Self {
            n,
            q,
            kept,
            pulsations,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Dimension of the numerical span for `cutoff`.
    pub fn rank_upto(&self, cutoff: f64) -> usize {
        let bound = cutoff * (1.0 + CUTOFF_SLACK);
        let g = self.pulsations.partition_point(|&w| w <= bound);
        self.kept[g]
    }

    fn vector(&self, i: usize) -> &[f64] {
        &self.q[i * self.n..(i + 1) * self.n]
    }

    /// Least-squares projection of `s` onto the span for `cutoff`.
    pub fn project(&self, s: &[f64], cutoff: f64) -> Result<Vec<f64>> {
        self.check_len(s)?;
        let mut out = vec![0.0; self.n];
        for i in 0..self.rank_upto(cutoff) {
            let qi = self.vector(i);
            let c = dot(qi, s);
            axpy(c, qi, &mut out);
        }
        Ok(out)
    }

    /// `‖(Π(ω_j) − I)s‖₂` for every cut-off in `cutoffs` (which must be
    /// non-decreasing).
    pub fn residual_curve(&self, s: &[f64], cutoffs: &[f64]) -> Result<Vec<f64>> {
        self.check_len(s)?;
        let mut r = s.to_vec();
        let mut done = 0;
        let mut curve = Vec::with_capacity(cutoffs.len());
        for &w in cutoffs {
            let k = self.rank_upto(w);
            for i in done..k.max(done) {
                let qi = self.vector(i);
                let c = dot(qi, &r);
                axpy(-c, qi, &mut r);
            }
            done = done.max(k);
            curve.push(norm(&r));
        }
        Ok(curve)
    }

    fn check_len(&self, s: &[f64]) -> Result<()> {
        if s.len() != self.n {
            return Err(Error::arg(format!(
                "series length {} does not match projector length {}",
                s.len(),
                self.n
            )));
        }
        Ok(())
    }
}

/// Orthogonalizes unit-scaled `v` against the first `count` vectors of `q`,
/// normalizing it in place. Returns false when `v` is numerically dependent.
fn orthogonalize(q: &[f64], count: usize, v: &mut [f64]) -> bool {
    let n = v.len();
    let scale = norm(v);
    if scale == 0.0 {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= scale);
    for _pass in 0..2 {
        for i in 0..count {
            let qi = &q[i * n..(i + 1) * n];
            let c = dot(qi, v);
            axpy(-c, qi, v);
        }
    }
    let rest = norm(v);
    if rest <= DROP_TOL {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= rest);
    true
}

/// One-shot projection of `s` onto the band-limited span for `cutoff`.
pub fn project(grid: &PulsationGrid, s: &[f64], cutoff: f64) -> Result<Vec<f64>> {
    NestedProjector::new(grid, s.len(), cutoff)?.project(s, cutoff)
}

/// Residual norms `e_j` of `s` against every design cut-off.
pub fn residual_curve(grid: &PulsationGrid, s: &[f64], design: &DesignGrid) -> Result<Vec<f64>> {
    let top = design.values().last().copied().unwrap_or(0.0);
    NestedProjector::new(grid, s.len(), top)?.residual_curve(s, design.values())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}
