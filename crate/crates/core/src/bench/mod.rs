//! Benchmark construction and the error report.

pub mod metrics;

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{best_tuned_orders, Baseline, Setting};
use crate::basis::PulsationGrid;
use crate::dictionary::ModelDictionary;
use crate::error::{Error, Result};
use crate::estimator::{Estimator, Selection};
use crate::par;
use crate::synth::{make_case_on_stream, BenchmarkCase};
use metrics::{eval_error, sorted_percentile, CoverageCounter, COVERAGE_LEVELS};

/// Bandwidths as fractions of the largest pulsation.
pub const BANDWIDTHS: [f64; 12] = [0.01, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95];
pub const NOISE_LEVELS: [f64; 8] = [0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.07, 0.1];
pub const SERIES_LEN: usize = 2000;
pub const BENCH_D_MAX: usize = 4;
pub const REPORT_SCHEMA_VERSION: u32 = 1;
/// Percentile levels of the per-method error curves.
pub const CURVE_LEVELS: [f64; 4] = [50.0, 75.0, 90.0, 95.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Full,
    Mini,
}

impl FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Scale::Full),
            "mini" => Ok(Scale::Mini),
            _ => Err(Error::arg(format!("unknown scale '{s}', expected full or mini"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Proposed,
    Kalman,
    Spectral,
    Savgol,
    Aostd,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Proposed, Method::Kalman, Method::Spectral, Method::Savgol, Method::Aostd];

    pub fn baseline(self) -> Option<Baseline> {
        match self {
            Method::Proposed => None,
            Method::Kalman => Some(Baseline::Kalman),
            Method::Spectral => Some(Baseline::Spectral),
            Method::Savgol => Some(Baseline::Savgol),
            Method::Aostd => Some(Baseline::Aostd),
        }
    }

    pub fn name(self) -> &'static str {
        self.baseline().map_or("proposed", Baseline::name)
    }

    /// Parses a comma-separated list, keeping the canonical order and
    /// dropping duplicates.
    pub fn parse_list(s: &str) -> Result<Vec<Method>> {
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            out.push(part.parse::<Method>()?);
        }
        if out.is_empty() {
            return Err(Error::arg("no methods given"));
        }
        out.sort();
        out.dedup();
        Ok(out)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::arg(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaseSpec {
    /// Position in the full 12 × 8 grid, bandwidth-major.
    pub index: usize,
    pub bandwidth_fraction: f64,
    pub noise_level: f64,
}

/// Full-grid indices of the cases at `scale`. The mini set takes two
/// noise levels per bandwidth, cycling so every level appears three times.
pub fn case_indices(scale: Scale) -> Vec<usize> {
    let q = NOISE_LEVELS.len();
    match scale {
        Scale::Full => (0..BANDWIDTHS.len() * q).collect(),
        Scale::Mini => (0..2 * BANDWIDTHS.len()).map(|k| (k / 2) * q + k % q).collect(),
    }
}

pub fn case_spec(index: usize) -> CaseSpec {
    let q = NOISE_LEVELS.len();
    CaseSpec {
        index,
        bandwidth_fraction: BANDWIDTHS[index / q],
        noise_level: NOISE_LEVELS[index % q],
    }
}

/// Benchmark cases at `scale`. A case's signal depends only on `seed` and its
/// full-grid index, so mini cases coincide with their full counterparts.
pub fn build_benchmark_on(grid: &PulsationGrid, seed: u64, scale: Scale) -> Result<Vec<(CaseSpec, BenchmarkCase)>> {
    let specs: Vec<CaseSpec> = case_indices(scale).into_iter().map(case_spec).collect();
    par::map_collect(specs, |spec| {
        make_case_on_stream(
            grid,
            spec.bandwidth_fraction,
            spec.noise_level,
            SERIES_LEN,
            BENCH_D_MAX,
            seed,
            spec.index as u64,
        )
        .map(|c| (spec, c))
    })
    .into_iter()
    .collect()
}

pub fn build_benchmark(seed: u64, scale: Scale) -> Result<Vec<(CaseSpec, BenchmarkCase)>> {
    build_benchmark_on(&PulsationGrid::new(5, 200)?, seed, scale)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorEntry {
    pub method: Method,
    pub case: usize,
    pub d: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub setting: Option<Setting>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub selection: Option<Selection>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PercentileRow {
    pub method: Method,
    pub d: usize,
    pub cases: usize,
    /// Error percentiles at `CURVE_LEVELS`.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseRow {
    pub method: Method,
    pub d: usize,
    pub noise_level: f64,
    pub cases: usize,
    pub median_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub d: usize,
    pub instants: u64,
    /// Multipliers of σ̂.
    pub levels: Vec<f64>,
    pub ratios: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub schema_version: u32,
    pub scale: Scale,
    pub seed: u64,
    pub dictionary_seed: u64,
    pub methods: Vec<Method>,
    pub orders: Vec<usize>,
    pub cases: Vec<CaseSpec>,
    pub entries: Vec<ErrorEntry>,
    pub percentiles: Vec<PercentileRow>,
    pub noise_curves: Vec<NoiseRow>,
    pub coverage: Vec<CoverageRow>,
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub scale: Scale,
    pub methods: Vec<Method>,
    pub seed: u64,
    pub orders: Vec<usize>,
}

impl BenchConfig {
    pub fn new(scale: Scale, methods: Vec<Method>, seed: u64) -> Self {
        Self {
            scale,
            methods,
            seed,
            orders: (1..=BENCH_D_MAX).collect(),
        }
    }
}

struct CaseOutcome {
    entries: Vec<ErrorEntry>,
    coverage: Vec<CoverageCounter>,
}

fn failed(method: Method, case: usize, d: usize, why: String) -> ErrorEntry {
    ErrorEntry {
        method,
        case,
        d,
        error: None,
        setting: None,
        selection: None,
        failure: Some(why),
    }
}

fn run_case(est: &Estimator<'_>, config: &BenchConfig, spec: CaseSpec, case: &BenchmarkCase) -> CaseOutcome {
    let orders = &config.orders;
    let mut entries = Vec::new();
    let mut coverage = vec![CoverageCounter::default(); orders.len()];
    for &method in &config.methods {
        match method.baseline() {
            None => {
                let selection = est.select(&case.noisy, None);
                for (k, &d) in orders.iter().enumerate() {
                    let outcome = selection.as_ref().map_err(|e| e.to_string()).and_then(|sel| {
                        let r = est.reconstruct(&case.noisy, *sel, d, 1.0).map_err(|e| e.to_string())?;
                        let e = eval_error(&r.values, &case.clean[d]).map_err(|e| e.to_string())?;
                        coverage[k]
                            .add(&r.values, &r.sigma, &case.clean[d])
                            .map_err(|e| e.to_string())?;
                        Ok((e, *sel))
                    });
                    entries.push(match outcome {
                        Ok((e, sel)) => ErrorEntry {
                            method,
                            case: spec.index,
                            d,
                            error: Some(e),
                            setting: None,
                            selection: Some(sel),
                            failure: None,
                        },
                        Err(why) => failed(method, spec.index, d, why),
                    });
                }
            }
            Some(b) => {
                for (tuned, &d) in best_tuned_orders(b, case, orders).into_iter().zip(orders) {
                    entries.push(match tuned {
                        Ok(t) => ErrorEntry {
                            method,
                            case: spec.index,
                            d,
                            error: Some(t.error),
                            setting: Some(t.setting),
                            selection: None,
                            failure: None,
                        },
                        Err(e) => failed(method, spec.index, d, e.to_string()),
                    });
                }
            }
        }
    }
    CaseOutcome { entries, coverage }
}

/// Runs every method on every case. Failures are recorded per entry and
/// never abort the run; aggregation follows case order.
pub fn run_bench(dict: &ModelDictionary, config: &BenchConfig) -> Result<ErrorReport> {
    if config.methods.is_empty() {
        return Err(Error::arg("no methods given"));
    }
    if config.orders.iter().any(|&d| d > BENCH_D_MAX.min(dict.d_max())) {
        return Err(Error::arg(format!(
            "orders must be <= {}",
            BENCH_D_MAX.min(dict.d_max())
        )));
    }
    let cases = build_benchmark_on(dict.grid(), config.seed, config.scale)?;
    let est = Estimator::new(dict);
    let outcomes = par::map_range(cases.len(), |i| run_case(&est, config, cases[i].0, &cases[i].1));

    let mut entries = Vec::new();
    let mut coverage = vec![CoverageCounter::default(); config.orders.len()];
    for o in outcomes {
        entries.extend(o.entries);
        for (acc, c) in coverage.iter_mut().zip(&o.coverage) {
            acc.merge(c);
        }
    }
    let specs: Vec<CaseSpec> = cases.iter().map(|(s, _)| *s).collect();
    let mut report = ErrorReport {
        schema_version: REPORT_SCHEMA_VERSION,
        scale: config.scale,
        seed: config.seed,
        dictionary_seed: dict.seed(),
        methods: config.methods.clone(),
        orders: config.orders.clone(),
        cases: specs,
        entries,
        percentiles: Vec::new(),
        noise_curves: Vec::new(),
        coverage: Vec::new(),
    };
    if config.methods.contains(&Method::Proposed) {
        report.coverage = config
            .orders
            .iter()
            .zip(&coverage)
            .map(|(&d, c)| CoverageRow {
                d,
                instants: c.instants,
                levels: COVERAGE_LEVELS.to_vec(),
                ratios: c.ratios().to_vec(),
            })
            .collect();
    }
    report.aggregate();
    Ok(report)
}

impl ErrorReport {
    /// Errors of `method` at order `d` in case order, failures skipped.
    pub fn errors(&self, method: Method, d: usize) -> Vec<f64> {
        self.entries
            .iter()
            .filter(|e| e.method == method && e.d == d)
            .filter_map(|e| e.error)
            .collect()
    }

    pub fn failures(&self) -> impl Iterator<Item = &ErrorEntry> {
        self.entries.iter().filter(|e| e.failure.is_some())
    }

    pub fn coverage_for(&self, d: usize) -> Option<&CoverageRow> {
        self.coverage.iter().find(|r| r.d == d)
    }

    /// Recomputes the percentile and noise curves from `entries`.
    pub fn aggregate(&mut self) {
        self.percentiles.clear();
        self.noise_curves.clear();
        for &method in &self.methods {
            for &d in &self.orders {
                let mut errs = self.errors(method, d);
                errs.sort_by(f64::total_cmp);
                if !errs.is_empty() {
                    self.percentiles.push(PercentileRow {
                        method,
                        d,
                        cases: errs.len(),
                        values: CURVE_LEVELS.iter().map(|&p| sorted_percentile(&errs, p)).collect(),
                    });
                }
                for nu in NOISE_LEVELS {
                    let mut at: Vec<f64> = self
                        .entries
                        .iter()
                        .filter(|e| e.method == method && e.d == d)
                        .filter(|e| case_spec(e.case).noise_level == nu)
                        .filter_map(|e| e.error)
                        .collect();
                    if at.is_empty() {
                        continue;
                    }
                    at.sort_by(f64::total_cmp);
                    self.noise_curves.push(NoiseRow {
                        method,
                        d,
                        noise_level: nu,
                        cases: at.len(),
                        median_error: sorted_percentile(&at, 50.0),
                    });
                }
            }
        }
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        let mut v = serde_json::to_vec_pretty(self).map_err(|e| Error::Format(e.to_string()))?;
        v.push(b'\n');
        Ok(v)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let r: ErrorReport = serde_json::from_slice(bytes).map_err(|e| Error::Format(e.to_string()))?;
        if r.schema_version != REPORT_SCHEMA_VERSION {
            return Err(Error::Format(format!(
                "report schema {} is not supported (expected {REPORT_SCHEMA_VERSION})",
                r.schema_version
            )));
        }
        Ok(r)
    }

    pub fn write_percentiles_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["method".to_string(), "d".into(), "cases".into()];
        header.extend(CURVE_LEVELS.iter().map(|p| format!("p{p}")));
        out.write_record(&header).map_err(csv_err)?;
        for r in &self.percentiles {
            let mut row = vec![r.method.to_string(), r.d.to_string(), r.cases.to_string()];
            row.extend(r.values.iter().map(f64::to_string));
            out.write_record(&row).map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_noise_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["method", "d", "noise_level", "cases", "median_error"])
            .map_err(csv_err)?;
        for r in &self.noise_curves {
            out.write_record([
                r.method.to_string(),
                r.d.to_string(),
                r.noise_level.to_string(),
                r.cases.to_string(),
                r.median_error.to_string(),
            ])
            .map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_coverage_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["d", "instants", "half_sigma", "sigma", "two_sigma", "three_sigma"])
            .map_err(csv_err)?;
        for r in &self.coverage {
            let mut row = vec![r.d.to_string(), r.instants.to_string()];
            row.extend(r.ratios.iter().map(f64::to_string));
            out.write_record(&row).map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Writes the JSON report to `path` and the two curve tables next to it
    /// as `<stem>_percentiles.csv` and `<stem>_noise.csv`.
    pub fn write_files(&self, path: &Path) -> Result<[PathBuf; 3]> {
        std::fs::write(path, self.to_json()?)?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
        let dir = path.parent().unwrap_or(Path::new(""));
        let pct = dir.join(format!("{stem}_percentiles.csv"));
        let noise = dir.join(format!("{stem}_noise.csv"));
        self.write_percentiles_csv(std::fs::File::create(&pct)?)?;
        self.write_noise_csv(std::fs::File::create(&noise)?)?;
        Ok([path.to_path_buf(), pct, noise])
    }
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("{other:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_grid_has_96_cases_and_192000_instants() {
        let idx = case_indices(Scale::Full);
        assert_eq!(idx.len(), 96);
        assert_eq!(idx.len() * SERIES_LEN, 192_000);
    }

    #[test]
    fn mini_set_covers_every_level() {
        let idx = case_indices(Scale::Mini);
        assert_eq!(idx.len(), 24);
        let specs: Vec<CaseSpec> = idx.iter().map(|&i| case_spec(i)).collect();
        for w in BANDWIDTHS {
            assert_eq!(specs.iter().filter(|s| s.bandwidth_fraction == w).count(), 2);
        }
        for nu in NOISE_LEVELS {
            assert_eq!(specs.iter().filter(|s| s.noise_level == nu).count(), 3);
        }
        let mut sorted = idx.clone();
        sorted.dedup();
        assert_eq!(sorted, idx);
    }

    #[test]
    fn mini_cases_match_full_cases() {
        let mini = build_benchmark(5, Scale::Mini).unwrap();
        let grid = PulsationGrid::new(5, 200).unwrap();
        let (spec, case) = &mini[7];
        let again = make_case_on_stream(&grid, spec.bandwidth_fraction, spec.noise_level, SERIES_LEN, BENCH_D_MAX, 5, spec.index as u64).unwrap();
        assert_eq!(case.noisy, again.noisy);
        assert_eq!(case.clean.len(), BENCH_D_MAX + 1);
    }

    #[test]
    fn method_lists() {
        assert_eq!(
            Method::parse_list("spectral, proposed,spectral").unwrap(),
            vec![Method::Proposed, Method::Spectral]
        );
        assert!(Method::parse_list("").is_err());
        assert!(Method::parse_list("proposed,bogus").is_err());
        assert_eq!("mini".parse::<Scale>().unwrap(), Scale::Mini);
        assert!("medium".parse::<Scale>().is_err());
    }
}
