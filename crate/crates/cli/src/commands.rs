use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use feedsim_core::ingest::estimate_confusion;
use feedsim_core::metrics::{run_experiment, write_sweep_csv, ExperimentSection, ExperimentSpec};
use feedsim_core::payoff::DEFAULT_MC_SAMPLES;
use feedsim_core::{
    expected_payoff, find_d_opt, find_d_opt_from_oracle_stakes, read_annotations,
    validate_config, ConfigDocument, Error, IngestSettings, Method, PayoffQuery, SolverSettings,
    SweepMethod, SystemConfig,
};
use serde::Serialize;

use crate::manifest::RunManifest;
use crate::{Cli, Command, MethodArg};

pub const DEFAULT_SEED: u64 = 0;

#[derive(Debug)]
pub enum CliError {
    /// The inputs were read but the computation has no valid answer.
    Domain(String),
    /// Unreadable files, malformed documents, bad arguments.
    Input(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_) | Error::Json(_) | Error::Csv(_) => CliError::Input(e.to_string()),
            other => CliError::Domain(other.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

pub fn run(cli: &Cli) -> CliResult<u8> {
    match &cli.command {
        Command::Validate { config } => validate(config),
        Command::Payoff {
            config,
            user,
            c,
            d,
            method,
            samples,
            seed,
            out,
        } => {
            let cfg = load_config(config, cli.renormalize)?;
            let method = match method {
                MethodArg::Exact => Method::Exact,
                MethodArg::Mc => Method::MonteCarlo {
                    samples: *samples,
                    seed: *seed,
                },
            };
            let query = PayoffQuery::concentrated(&cfg, *user, *c, *d)?;
            let estimate = expected_payoff(&query, method)?;
            let report = PayoffReport {
                user: *user,
                c: *c,
                d: *d,
                value: estimate.value,
                method: estimate.method,
                std_error: estimate.std_error,
                samples: estimate.samples,
            };
            let seed = matches!(method, Method::MonteCarlo { .. }).then_some(*seed);
            emit_json(&report, out.as_deref(), "payoff", config, seed)?;
            Ok(0)
        }
        Command::SolveD {
            config,
            epsilon,
            d_max,
            from_oracle_stakes,
            samples,
            seed,
            out,
        } => {
            let cfg = load_config(config, cli.renormalize)?;
            let settings = SolverSettings {
                epsilon: *epsilon,
                d_max: *d_max,
                mc_samples: *samples,
                seed: *seed,
                ..SolverSettings::default()
            };
            let solution = if *from_oracle_stakes {
                find_d_opt_from_oracle_stakes(&cfg.stakes(), cfg.confusion(), &settings)?
            } else {
                find_d_opt(&cfg, &settings)?
            };
            eprintln!(
                "d_opt = {} (grid index {})",
                solution.d_opt, solution.grid_index
            );
            emit_json(&solution.certificate, out.as_deref(), "solve-d", config, Some(*seed))?;
            Ok(0)
        }
        Command::Sweep {
            config,
            user,
            c_range,
            d_list,
            method,
            samples,
            seed,
            out,
        } => {
            let doc = load_document(config)?;
            let cfg = doc.build_with(cli.renormalize)?;
            let mut section = doc.experiment.clone().unwrap_or(ExperimentSection {
                focal_user: 1,
                c_values: None,
                d_values: Vec::new(),
                method: SweepMethod::Exact,
                samples: DEFAULT_MC_SAMPLES,
                seed: DEFAULT_SEED,
            });
            if let Some(u) = user {
                section.focal_user = *u;
            }
            if let Some(r) = c_range {
                section.c_values = Some(parse_c_range(r)?);
            }
            if let Some(list) = d_list {
                section.d_values = parse_d_list(list)?;
            }
            if let Some(m) = method {
                section.method = match m {
                    MethodArg::Exact => SweepMethod::Exact,
                    MethodArg::Mc => SweepMethod::MonteCarlo,
                };
            }
            if let Some(s) = samples {
                section.samples = *s;
            }
            if let Some(s) = seed {
                section.seed = *s;
            }
            if section.d_values.is_empty() {
                return Err(CliError::Input(
                    "no exponents: pass --d-list or add experiment.d_values".into(),
                ));
            }
            let spec = ExperimentSpec::from_section(cfg, &section)?;
            let rows = run_experiment(&spec)?;
            let mut buf = Vec::new();
            write_sweep_csv(&rows, &mut buf)?;
            let seed = (spec.method == SweepMethod::MonteCarlo).then_some(spec.seed);
            emit_bytes(&buf, out.as_deref(), "sweep", config, seed)?;
            Ok(0)
        }
        Command::EstimateCm {
            records,
            k,
            min_participation,
            smoothing,
            label_map,
            out,
        } => {
            let label_map: HashMap<String, usize> = match label_map {
                Some(p) => serde_json::from_str(&read_text(p)?)
                    .map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?,
                None => HashMap::new(),
            };
            let settings = IngestSettings {
                min_participation: *min_participation,
                smoothing: *smoothing,
                label_map,
            };
            let file = fs::File::open(records)
                .map_err(|e| CliError::Input(format!("{}: {e}", records.display())))?;
            let parsed = read_annotations(std::io::BufReader::new(file), *k, &settings)?;
            let (matrix, report) = estimate_confusion(&parsed, &settings, *k)?;
            let doc = EstimateDocument {
                num_classes: *k,
                confusion: matrix.rows(),
                ingest_report: report,
            };
            emit_json(&doc, out.as_deref(), "estimate-cm", records, None)?;
            Ok(0)
        }
    }
}

#[derive(Serialize)]
struct PayoffReport {
    user: usize,
    c: u32,
    d: f64,
    value: f64,
    method: feedsim_core::EstimateKind,
    std_error: f64,
    samples: u64,
}

#[derive(Serialize)]
struct EstimateDocument {
    num_classes: usize,
    confusion: Vec<Vec<f64>>,
    ingest_report: feedsim_core::IngestReport,
}

fn validate(path: &Path) -> CliResult<u8> {
    let doc = load_document(path)?;
    let report = validate_config(&doc);
    print!("{report}");
    Ok(if report.is_valid() { 0 } else { 1 })
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn load_document(path: &Path) -> CliResult<ConfigDocument> {
    ConfigDocument::from_json(&read_text(path)?)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn load_config(path: &Path, renormalize: bool) -> CliResult<SystemConfig> {
    Ok(load_document(path)?.build_with(renormalize)?)
}

fn parse_c_range(text: &str) -> CliResult<Vec<u32>> {
    let bad = || CliError::Input(format!("bad --c-range {text:?}"));
    if let Some((a, b)) = text.split_once("..") {
        let a: u32 = a.trim().parse().map_err(|_| bad())?;
        let b: u32 = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        if a > b {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    text.split(',')
        .map(|s| s.trim().parse().map_err(|_| bad()))
        .collect()
}

fn parse_d_list(text: &str) -> CliResult<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| CliError::Input(format!("bad --d-list entry {s:?}")))
        })
        .collect()
}

fn emit_json<T: Serialize>(
    value: &T,
    out: Option<&Path>,
    command: &str,
    input: &Path,
    seed: Option<u64>,
) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("output types serialize");
    text.push('\n');
    emit_bytes(text.as_bytes(), out, command, input, seed)
}

/// Writes to `out` via a temporary file and rename, with a manifest beside
/// it; prints to stdout when no path is given.
fn emit_bytes(
    bytes: &[u8],
    out: Option<&Path>,
    command: &str,
    input: &Path,
    seed: Option<u64>,
) -> CliResult<()> {
    let Some(out) = out else {
        std::io::stdout()
            .write_all(bytes)
            .map_err(|e| CliError::Input(e.to_string()))?;
        return Ok(());
    };
    write_atomic(out, bytes)?;
    let manifest = RunManifest::new(command, input, seed);
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    write_atomic(&RunManifest::path_for(out), text.as_bytes())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let io = |e: std::io::Error| CliError::Input(format!("{}: {e}", path.display()));
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, bytes).map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}
