use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Linear interpolation between order statistics (type 7), `p` in percent.
pub fn percentile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::arg("percentile of an empty set"));
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(Error::arg(format!("percentile level {p} outside [0, 100]")));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(sorted_percentile(&v, p))
}

pub(crate) fn sorted_percentile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p / 100.0;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// `p95|est − truth| / p50|truth|`.
pub fn eval_error(est: &[f64], truth: &[f64]) -> Result<f64> {
    if est.len() != truth.len() || est.is_empty() {
        return Err(Error::arg(format!(
            "error metric needs equal non-empty lengths, got {} and {}",
            est.len(),
            truth.len()
        )));
    }
    let diff: Vec<f64> = est.iter().zip(truth).map(|(a, b)| (a - b).abs()).collect();
    let mag: Vec<f64> = truth.iter().map(|x| x.abs()).collect();
    let denom = percentile(&mag, 50.0)?;
    if denom == 0.0 {
        return Err(Error::Numerical("median of |truth| is zero".into()));
    }
    Ok(percentile(&diff, 95.0)? / denom)
}

/// Threshold multipliers of the coverage table.
pub const COVERAGE_LEVELS: [f64; 4] = [0.5, 1.0, 2.0, 3.0];

/// Running counts of `|est − truth| ≤ c·σ̂` over pooled instants.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CoverageCounter {
    pub instants: u64,
    pub hits: [u64; 4],
}

impl CoverageCounter {
    pub fn add(&mut self, est: &[f64], sigma: &[f64], truth: &[f64]) -> Result<()> {
        if est.len() != truth.len() || sigma.len() != truth.len() {
            return Err(Error::arg("coverage inputs differ in length"));
        }
        for ((e, s), t) in est.iter().zip(sigma).zip(truth) {
            let err = (e - t).abs();
            self.instants += 1;
            for (hit, c) in self.hits.iter_mut().zip(COVERAGE_LEVELS) {
                if err <= c * s {
                    *hit += 1;
                }
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &CoverageCounter) {
        self.instants += other.instants;
        for (a, b) in self.hits.iter_mut().zip(&other.hits) {
            *a += b;
        }
    }

    pub fn ratios(&self) -> [f64; 4] {
        if self.instants == 0 {
            return [0.0; 4];
        }
        self.hits.map(|h| h as f64 / self.instants as f64)
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn perfect_estimate_scores_zero() {
        let t = [1.0, -2.0, 3.0];
        assert_eq!(eval_error(&t, &t).unwrap(), 0.0);
    }

    #[test]
    fn constant_offset_on_alternating_truth() {
        let truth: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let est: Vec<f64> = truth.iter().map(|x| x + 0.1).collect();
        assert!((eval_error(&est, &truth).unwrap() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn degenerate_denominator() {
        assert!(matches!(eval_error(&[1.0, 2.0], &[0.0, 0.0]), Err(Error::Numerical(_))));
        assert!(eval_error(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn infinite_sigma_covers_everything() {
        let mut c = CoverageCounter::default();
        c.add(&[1.0, 5.0, -3.0], &[f64::INFINITY; 3], &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(c.ratios(), [1.0; 4]);
    }

    #[test]
    fn known_percentiles() {
        let v = [3.0, 1.0, 2.0, 4.0];
        assert_eq!(percentile(&v, 50.0).unwrap(), 2.5);
        assert_eq!(percentile(&v, 0.0).unwrap(), 1.0);
        assert_eq!(percentile(&v, 100.0).unwrap(), 4.0);
        assert!((percentile(&v, 95.0).unwrap() - 3.85).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn percentile_matches_sort_and_interpolate(
            v in prop::collection::vec(-1e3f64..1e3, 1..200),
            p in 0.0f64..=100.0,
        ) {
            let mut s = v.clone();
            s.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let pos = p / 100.0 * (s.len() as f64 - 1.0);
            let i = pos.floor() as usize;
            let expect = if i + 1 < s.len() { s[i] * (1.0 - (pos - i as f64)) + s[i + 1] * (pos - i as f64) } else { s[i] };
            let got = percentile(&v, p).unwrap();
            prop_assert!((got - expect).abs() <= 1e-12 * (1.0 + expect.abs()));
        }

        #[test]
        fn coverage_is_monotone_in_threshold(
            rows in prop::collection::vec((-5.0f64..5.0, 0.0f64..3.0, -5.0f64..5.0), 1..100),
        ) {
            let mut c = CoverageCounter::default();
            let est: Vec<f64> = rows.iter().map(|r| r.0).collect();
            let sig: Vec<f64> = rows.iter().map(|r| r.1).collect();
            let tru: Vec<f64> = rows.iter().map(|r| r.2).collect();
            c.add(&est, &sig, &tru).unwrap();
            let r = c.ratios();
            prop_assert!(r.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(r.iter().all(|x| (0.0..=1.0).contains(x)));
        }
    }
}
