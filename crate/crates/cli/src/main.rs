use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use derivkit::bench::{run_bench, BenchConfig, ErrorReport, Method, Scale};
use derivkit::dictionary::{train_dictionary, ModelDictionary, TrainingConfig};
use derivkit::error::Error;
use derivkit::estimator::Estimator;

const EXIT_ARGUMENT: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "derivkit", version, about = "Derivative estimation for noisy time series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model dictionary and write it to disk.
    Train {
        #[arg(long)]
        out: PathBuf,
        /// Training windows per (band, noise) pair.
        #[arg(long)]
        n_samples: Option<usize>,
        /// Relative truncation tolerance of the stored maps.
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Smallest admissible training set; same key layout.
        #[arg(long)]
        mini: bool,
    },
    /// Estimate a derivative of a series read from CSV.
    Estimate {
        #[arg(long)]
        dict: PathBuf,
        /// CSV with one header line and one value per row.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        d: usize,
        /// Sampling period.
        #[arg(long)]
        tau: f64,
        /// Known noise level; estimated when omitted.
        #[arg(long)]
        noise_level: Option<f64>,
        /// Output CSV with columns index, value, sigma.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the benchmark and write a JSON report plus curve CSVs.
    Bench {
        #[arg(long)]
        dict: PathBuf,
        #[arg(long, value_enum, default_value_t = ScaleArg::Mini)]
        scale: ScaleArg,
        /// Comma-separated subset of proposed,kalman,spectral,savgol,aostd.
        #[arg(long, default_value = "proposed,kalman,spectral,savgol,aostd")]
        methods: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract a table from a JSON report.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum)]
        table: Table,
        /// Destination; stdout when omitted.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ScaleArg {
    Full,
    Mini,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Table {
    Coverage,
    Percentiles,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Argument(_) => EXIT_ARGUMENT,
        Error::FitFailed { .. } | Error::Numerical(_) | Error::NoResult(_) => EXIT_NUMERICAL,
        _ => EXIT_IO,
    }
}

fn parse_threads(raw: &str) -> Result<usize, Error> {
    raw.trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Argument(format!("DERIVKIT_THREADS must be a positive integer, got '{raw}'")))
}

fn configure_threads() -> Result<(), Error> {
    let Ok(raw) = std::env::var("DERIVKIT_THREADS") else {
        return Ok(());
    };
    let n = parse_threads(&raw)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Argument(e.to_string()))
}

fn read_series(path: &Path) -> Result<Vec<f64>, Error> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(csv_error)?;
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(csv_error)?;
        let field = record.get(0).unwrap_or("").trim();
        let v: f64 = field
            .parse()
            .map_err(|_| Error::Format(format!("row {}: '{field}' is not a number", i + 1)))?;
        if !v.is_finite() {
            return Err(Error::Format(format!("row {}: non-finite value", i + 1)));
        }
        out.push(v);
    }
    Ok(out)
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("{other:?}")),
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Train {
            out,
            n_samples,
            tol,
            seed,
            mini,
        } => {
            let mut config = if mini { TrainingConfig::mini() } else { TrainingConfig::default() };
            if let Some(n) = n_samples {
                config.n_samples = n;
            }
            if let Some(t) = tol {
                config.tol = t;
            }
            let dict = train_dictionary(&config, seed)?;
            dict.save(&out)?;
            let bytes = std::fs::metadata(&out)?.len();
            eprintln!("wrote {} entries, {bytes} bytes, to {}", dict.len(), out.display());
        }
        Command::Estimate {
            dict,
            input,
            d,
            tau,
            noise_level,
            out,
        } => {
            let dict = ModelDictionary::load(&dict)?;
            let series = read_series(&input)?;
            let est = Estimator::new(&dict).est_deriv(&series, d, tau, noise_level)?;
            let mut w = csv::Writer::from_path(&out).map_err(csv_error)?;
            w.write_record(["index", "value", "sigma"]).map_err(csv_error)?;
            for (i, (v, s)) in est.values.iter().zip(&est.sigma).enumerate() {
                w.write_record([i.to_string(), v.to_string(), s.to_string()])
                    .map_err(csv_error)?;
            }
            w.flush()?;
            eprintln!(
                "band {} noise {} (sigma* = {:.4})",
                est.band, est.noise, est.sigma_star
            );
        }
        Command::Bench {
            dict,
            scale,
            methods,
            seed,
            out,
        } => {
            let methods = Method::parse_list(&methods)?;
            let dict = ModelDictionary::load(&dict)?;
            let scale = match scale {
                ScaleArg::Full => Scale::Full,
                ScaleArg::Mini => Scale::Mini,
            };
            let report = run_bench(&dict, &BenchConfig::new(scale, methods, seed))?;
            for f in report.failures() {
                eprintln!(
                    "case {} {} d={}: {}",
                    f.case,
                    f.method,
                    f.d,
                    f.failure.as_deref().unwrap_or("")
                );
            }
            for p in report.write_files(&out)? {
                eprintln!("wrote {}", p.display());
            }
        }
        Command::Report { input, table, csv } => {
            let report = ErrorReport::from_json(&std::fs::read(&input)?)?;
            let sink: Box<dyn std::io::Write> = match &csv {
                Some(p) => Box::new(std::fs::File::create(p)?),
                None => Box::new(std::io::stdout().lock()),
            };
            match table {
                Table::Coverage => report.write_coverage_csv(sink)?,
                Table::Percentiles => report.write_percentiles_csv(sink)?,
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ARGUMENT } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(e) = configure_threads().and_then(|()| run(cli)) {
        eprintln!("error: {e}");
        return ExitCode::from(exit_code(&e));
    }
    ExitCode::SUCCESS
}

#[cfg(test)]
mod tests {
    use std::path::Path;

    use derivkit::bench::{run_bench, BenchConfig, Method, Scale};
    use derivkit::dictionary::{train_dictionary, TrainingConfig};

    use super::*;

    fn exec(args: &[&str]) -> Result<(), Error> {
        let mut argv = vec!["derivkit"];
        argv.extend_from_slice(args);
        run(Cli::try_parse_from(argv).expect("arguments parse"))
    }

    fn code(args: &[&str]) -> u8 {
        exec(args).err().map_or(0, |e| exit_code(&e))
    }

    fn tiny_dict(dir: &Path) -> String {
        let path = dir.join("tiny.drvk");
        train_dictionary(&TrainingConfig::tiny(), 3).unwrap().save(&path).unwrap();
        path.to_str().unwrap().to_string()
    }

    fn write_series(dir: &Path, values: &[f64]) -> String {
        let path = dir.join("series.csv");
        let mut text = String::from("value\n");
        for v in values {
            text += &format!("{v}\n");
        }
        std::fs::write(&path, text).unwrap();
        path.to_str().unwrap().to_string()
    }

    #[test]
    fn estimate_writes_index_value_sigma() {
        let dir = tempfile::tempdir().unwrap();
        let dict = tiny_dict(dir.path());
        let series: Vec<f64> = (0..40).map(|t| (0.01 * t as f64).sin()).collect();
        let input = write_series(dir.path(), &series);
        let out = dir.path().join("est.csv");
        exec(&["estimate", "--dict", &dict, "--in", &input, "--d", "1", "--tau", "0.5", "--out", out.to_str().unwrap()])
            .unwrap();
        let text = std::fs::read_to_string(&out).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("index,value,sigma"));
        let rows: Vec<Vec<f64>> = lines
            .map(|l| l.split(',').map(|f| f.parse().unwrap()).collect())
            .collect();
        assert_eq!(rows.len(), 40);
        assert!(rows.iter().enumerate().all(|(i, r)| r[0] == i as f64 && r[2] >= 0.0));
    }

    #[test]
    fn malformed_command_lines_are_rejected() {
        for argv in [
            vec!["derivkit", "estimate", "--dict", "d.drvk"],
            vec!["derivkit", "bench", "--dict", "d", "--scale", "huge", "--out", "r.json"],
            vec!["derivkit", "report", "--in", "r.json", "--table", "nope"],
            vec!["derivkit", "frobnicate"],
        ] {
            let e = Cli::try_parse_from(&argv).unwrap_err();
            assert!(e.use_stderr(), "{argv:?}");
        }
    }

    #[test]
    fn invalid_values_exit_with_2() {
        let dir = tempfile::tempdir().unwrap();
        let dict = tiny_dict(dir.path());
        let input = write_series(dir.path(), &[1.0; 20]);
        let out = dir.path().join("x.csv");
        let out = out.to_str().unwrap();
        assert_eq!(code(&["estimate", "--dict", &dict, "--in", &input, "--d", "1", "--tau=-1", "--out", out]), 2);
        assert_eq!(code(&["estimate", "--dict", &dict, "--in", &input, "--d", "7", "--tau", "1", "--out", out]), 2);
        assert_eq!(code(&["bench", "--dict", &dict, "--methods", "proposed,magic", "--out", out]), 2);
        assert_eq!(code(&["train", "--out", out, "--n-samples", "10"]), 2);
        assert!(parse_threads("zero").is_err() && parse_threads("0").is_err());
        assert_eq!(parse_threads(" 3 ").unwrap(), 3);
    }

    #[test]
    fn file_errors_exit_with_3() {
        let dir = tempfile::tempdir().unwrap();
        let dict = tiny_dict(dir.path());
        let input = write_series(dir.path(), &[1.0; 20]);
        let out = dir.path().join("e.csv");
        let out = out.to_str().unwrap();
        assert_eq!(code(&["estimate", "--dict", "/nonexistent.drvk", "--in", &input, "--d", "0", "--tau", "1", "--out", out]), 3);

        let mut bytes = std::fs::read(&dict).unwrap();
        let n = bytes.len();
        bytes[n - 9] ^= 0xff;
        let corrupt = dir.path().join("corrupt.drvk");
        std::fs::write(&corrupt, bytes).unwrap();
        let err = exec(&["estimate", "--dict", corrupt.to_str().unwrap(), "--in", &input, "--d", "0", "--tau", "1", "--out", out])
            .unwrap_err();
        assert!(matches!(err, Error::Checksum(_)));
        assert_eq!(exit_code(&err), 3);

        let garbage = dir.path().join("bad.csv");
        std::fs::write(&garbage, "value\n1.0\nabc\n").unwrap();
        assert_eq!(code(&["estimate", "--dict", &dict, "--in", garbage.to_str().unwrap(), "--d", "0", "--tau", "1", "--out", out]), 3);

        let not_json = dir.path().join("r.json");
        std::fs::write(&not_json, "{").unwrap();
        assert_eq!(code(&["report", "--in", not_json.to_str().unwrap(), "--table", "coverage"]), 3);
    }

    #[test]
    fn numerical_failures_exit_with_4() {
        assert_eq!(exit_code(&Error::Numerical("x".into())), 4);
        assert_eq!(exit_code(&Error::NoResult("x".into())), 4);
    }

    #[test]
    fn report_tables_from_a_saved_report() {
        let dir = tempfile::tempdir().unwrap();
        let dict = train_dictionary(&TrainingConfig::tiny(), 3).unwrap();
        let mut config = BenchConfig::new(Scale::Mini, vec![Method::Proposed, Method::Spectral], 1);
        config.orders = vec![1];
        let report = run_bench(&dict, &config).unwrap();
        let json = dir.path().join("rep.json");
        report.write_files(&json).unwrap();
        assert!(dir.path().join("rep_percentiles.csv").exists());
        assert!(dir.path().join("rep_noise.csv").exists());

        let cov = dir.path().join("cov.csv");
        exec(&["report", "--in", json.to_str().unwrap(), "--table", "coverage", "--csv", cov.to_str().unwrap()]).unwrap();
        let text = std::fs::read_to_string(&cov).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "d,instants,half_sigma,sigma,two_sigma,three_sigma");
        assert!(lines[1].starts_with("1,48000,"));

        let pct = dir.path().join("pct.csv");
        exec(&["report", "--in", json.to_str().unwrap(), "--table", "percentiles", "--csv", pct.to_str().unwrap()]).unwrap();
        let text = std::fs::read_to_string(&pct).unwrap();
        assert!(text.starts_with("method,d,cases,p50,p75,p90,p95\n"));
        assert!(text.contains("\nproposed,1,24,") && text.contains("\nspectral,1,24,"));
    }
}
