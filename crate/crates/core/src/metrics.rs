//! System error rate and payoff/error sweeps over oracle count and `d`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::incentive::check_exponent;
use crate::model::{Strategy, SystemConfig};
use crate::outcome::{OutcomeProfile, DEFAULT_ENUMERATION_BUDGET};
use crate::payoff::{multiplicities, simulate_rounds, weights, DEFAULT_MC_SAMPLES};

/// Header of the sweep CSV.
pub const SWEEP_HEADER: [&str; 6] = [
    "c",
    "d",
    "expected_payoff",
    "payoff_stderr",
    "error_rate",
    "error_stderr",
];

/// Significant digits written for every real in the sweep CSV.
pub const CSV_SIGNIFICANT_DIGITS: usize = 12;

/// `Pr(decided != truth)` by exact enumeration with analytic tie-splitting.
pub fn error_rate_exact(config: &SystemConfig, strategies: &[Strategy]) -> Result<f64> {
    error_rate_exact_with_budget(config, strategies, DEFAULT_ENUMERATION_BUDGET)
}

pub fn error_rate_exact_with_budget(
    config: &SystemConfig,
    strategies: &[Strategy],
    budget: u128,
) -> Result<f64> {
    config.check_strategies(strategies)?;
    Ok(OutcomeProfile::exact(config, &multiplicities(strategies), None, budget)?.error_rate())
}

/// Monte Carlo error rate and its standard error.
pub fn error_rate_mc(
    config: &SystemConfig,
    strategies: &[Strategy],
    samples: u64,
    seed: u64,
) -> Result<(f64, f64)> {
    let s = simulate_rounds(config, strategies, None, 1.0, samples, seed)?;
    Ok((s.error.mean(), s.error.std_error()))
}

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMethod {
    #[default]
    Exact,
    MonteCarlo,
}

fn default_samples() -> u64 {
    DEFAULT_MC_SAMPLES
}

/// The `experiment` section of a config document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSection {
    #[serde(default = "default_focal")]
    pub focal_user: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_values: Option<Vec<u32>>,
    pub d_values: Vec<f64>,
    #[serde(default)]
    pub method: SweepMethod,
    #[serde(default = "default_samples")]
    pub samples: u64,
    #[serde(default)]
    pub seed: u64,
}

fn default_focal() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub config: SystemConfig,
    pub focal_user: usize,
    pub c_values: Vec<u32>,
    pub d_values: Vec<f64>,
    pub method: SweepMethod,
    pub samples: u64,
    pub seed: u64,
}

impl ExperimentSpec {
    /// Missing `c_values` default to `1..=s_focal`.
    pub fn from_section(config: SystemConfig, section: &ExperimentSection) -> Result<Self> {
        let stake = config.user(section.focal_user)?.stake;
        let spec = Self {
            c_values: section
                .c_values
                .clone()
                .unwrap_or_else(|| (1..=stake).collect()),
            config,
            focal_user: section.focal_user,
            d_values: section.d_values.clone(),
            method: section.method,
            samples: section.samples,
            seed: section.seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let stake = self.config.user(self.focal_user)?.stake;
        if self.c_values.is_empty() || self.d_values.is_empty() {
            return Err(Error::InvalidExperiment("empty c or d list".into()));
        }
        if let Some(c) = self.c_values.iter().find(|&&c| c == 0 || c > stake) {
            return Err(Error::InfeasibleOracleCount {
                total_stake: stake,
                oracle_count: *c,
            });
        }
        for &d in &self.d_values {
            check_exponent(d)?;
        }
        if self.method == SweepMethod::MonteCarlo && self.samples == 0 {
            return Err(Error::NoSamples);
        }
        Ok(())
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub c: u32,
    pub d: f64,
    pub expected_payoff: f64,
    pub error_rate: f64,
    pub std_error_payoff: f64,
    pub std_error_error_rate: f64,
}

/// Focal user on `c` oracles (concentrated), everyone else on one oracle,
/// for every `(d, c)` pair. Rows are sorted by `d`, then `c`.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let config = &spec.config;
    let focal = spec.focal_user - 1;
    let mut cs = spec.c_values.clone();
    cs.sort_unstable();
    let mut ds = spec.d_values.clone();
    ds.sort_by(f64::total_cmp);

    // One block of rows per c, each covering every d.
    let per_c: Vec<Vec<SweepRow>> = cs
        .par_iter()
        .map(|&c| -> Result<Vec<SweepRow>> {
            let strategies = config.mirroring_strategies(spec.focal_user, c)?;
            match spec.method {
                SweepMethod::Exact => {
                    let profile = OutcomeProfile::exact(
                        config,
                        &multiplicities(&strategies),
                        Some(focal),
                        DEFAULT_ENUMERATION_BUDGET,
                    )?;
                    Ok(ds
                        .iter()
                        .map(|&d| {
                            let w = weights(&strategies, d);
                            let (payoff, _) = profile.payoff(w[focal], &w, config.total_reward());
                            SweepRow {
                                c,
                                d,
                                expected_payoff: payoff,
                                error_rate: profile.error_rate(),
                                std_error_payoff: 0.0,
                                std_error_error_rate: 0.0,
                            }
                        })
                        .collect())
                }
                SweepMethod::MonteCarlo => ds
                    .iter()
                    .map(|&d| {
                        // Same seed for every d: the vote draws, and so the
                        // error column, are shared across the d axis.
                        let s = simulate_rounds(
                            config,
                            &strategies,
                            Some(focal),
                            d,
                            spec.samples,
                            spec.seed,
                        )?;
                        Ok(SweepRow {
                            c,
                            d,
                            expected_payoff: s.payoff.mean(),
                            error_rate: s.error.mean(),
                            std_error_payoff: s.payoff.std_error(),
                            std_error_error_rate: s.error.std_error(),
                        })
                    })
                    .collect(),
            }
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(cs.len() * ds.len());
    for di in 0..ds.len() {
        for block in &per_c {
            rows.push(block[di]);
        }
    }
    Ok(rows)
}

/// Positional decimal with `digits` significant digits.
pub fn format_significant(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{:.*}", digits.saturating_sub(1), x.abs());
    }
    // The exponent of the already-rounded scientific form accounts for
    // carries such as 9.999... -> 10.0.
    let sci = format!("{:.*e}", digits - 1, x);
    let exp: i32 = sci
        .rsplit('e')
        .next()
        .and_then(|e| e.parse().ok())
        .expect("scientific formatting has an exponent");
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    format!("{:.*}", decimals, x)
}

/// Writes rows with the fixed sweep header.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER)?;
    let f = |x: f64| format_significant(x, CSV_SIGNIFICANT_DIGITS);
    for r in rows {
        w.write_record([
            r.c.to_string(),
            f(r.d),
            f(r.expected_payoff),
            f(r.std_error_payoff),
            f(r.error_rate),
            f(r.std_error_error_rate),
        ])?;
    }
    w.flush()?;
    Ok(())
}
