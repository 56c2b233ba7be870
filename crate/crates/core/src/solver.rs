//! Search for the smallest exponent `d` at which no user gains by mirroring.
//!
//! The search walks the grid `d = start + i * epsilon`. At each point every
//! user `n` and every oracle count `c` in `2..=s_n` is checked against the
//! single-oracle payoff with everyone else on one oracle; the first point
//! with no violation is returned. The outcome profiles behind the checks do
//! not depend on `d`, so they are built once and re-weighted per grid point.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::incentive::{check_exponent, concentrated_weight, stake_power};
use crate::model::{ConfusionMatrix, SystemConfig};
use crate::outcome::{enumeration_terms, OutcomeProfile, DEFAULT_ENUMERATION_BUDGET};

/// Standard errors of slack granted to a Monte Carlo check before it counts
/// as a violation.
pub const MC_VIOLATION_MARGIN: f64 = 4.0;

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct SolverSettings {
    pub epsilon: f64,
    pub d_max: f64,
    pub starting_d: f64,
    /// Exact enumeration is used when `K^(N+1)` fits in this budget.
    pub budget: u128,
    pub mc_samples: u64,
    pub seed: u64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            epsilon: 0.01,
            d_max: 16.0,
            starting_d: 1.0,
            budget: DEFAULT_ENUMERATION_BUDGET,
            mc_samples: crate::payoff::DEFAULT_MC_SAMPLES,
            seed: 0,
        }
    }
}

impl SolverSettings {
    pub fn with_epsilon(epsilon: f64) -> Self {
        Self {
            epsilon,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::InvalidSettings(format!(
                "epsilon {} must be positive",
                self.epsilon
            )));
        }
        check_exponent(self.starting_d)?;
        if self.d_max.is_nan() || self.d_max <= self.starting_d {
            return Err(Error::InvalidSettings(format!(
                "d_max {} must exceed starting d {}",
                self.d_max, self.starting_d
            )));
        }
        Ok(())
    }

    /// Grid point `i`. Always computed from the index so repeated runs land
    /// on bit-identical values.
    pub fn grid_point(&self, i: u64) -> f64 {
        self.starting_d + i as f64 * self.epsilon
    }

    pub fn grid_len(&self) -> u64 {
        // Small slack so a d_max that is itself a grid point is included.
        ((self.d_max - self.starting_d) / self.epsilon + 1e-9).floor() as u64 + 1
    }
}

/// One unilateral-deviation check: user `n` on `c` oracles vs one oracle.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NashCheck {
    pub n: usize,
    pub c: u32,
    pub payoff_single: f64,
    pub payoff_mirror: f64,
    /// Sampling slack allowed on the inequality; absent for exact checks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
}

impl NashCheck {
    pub fn holds(&self) -> bool {
        self.payoff_mirror <= self.payoff_single + self.margin.unwrap_or(0.0)
    }

    fn excess(&self) -> f64 {
        self.payoff_mirror - self.payoff_single - self.margin.unwrap_or(0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NashCertificate {
    pub d: f64,
    pub checks: Vec<NashCheck>,
    pub satisfied: bool,
}

impl NashCertificate {
    fn from_checks(d: f64, checks: Vec<NashCheck>) -> Self {
        let satisfied = checks.iter().all(NashCheck::holds);
        Self {
            d,
            checks,
            satisfied,
        }
    }

    /// The check with the largest excess of mirror over single payoff.
    /// Excesses equal up to rounding resolve to the earliest `(n, c)`.
    pub fn tightest_violation(&self) -> Option<&NashCheck> {
        let mut best: Option<&NashCheck> = None;
        for check in self.checks.iter().filter(|c| !c.holds()) {
            let beats = match best {
                None => true,
                Some(b) => check.excess() > b.excess() + 1e-12 * b.excess().abs().max(1e-300),
            };
            if beats {
                best = Some(check);
            }
        }
        best
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificates always serialize")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DOptSolution {
    pub d_opt: f64,
    pub grid_index: u64,
    pub certificate: NashCertificate,
}

/// Pre-built outcome profiles for every check of a configuration.
pub struct NashEvaluator<'a> {
    config: &'a SystemConfig,
    /// `singles[n]`: user `n` on one oracle, everyone else on one oracle.
    singles: Vec<OutcomeProfile>,
    /// `(user index, c, profile)` for every `c` in `2..=s_n`.
    mirrors: Vec<(usize, u32, OutcomeProfile)>,
}

impl<'a> NashEvaluator<'a> {
    /// Exact profiles when the enumeration fits in `settings.budget`,
    /// sampled ones otherwise.
    pub fn new(config: &'a SystemConfig, settings: &SolverSettings) -> Result<Self> {
        let n = config.num_users();
        let exact = enumeration_terms(config.num_classes(), n) <= settings.budget;
        let build = |user: usize, c: u32| -> Result<OutcomeProfile> {
            let mut mult = vec![1u32; n];
            mult[user] = c;
            if exact {
                OutcomeProfile::exact(config, &mult, Some(user), settings.budget)
            } else {
                OutcomeProfile::sampled(config, &mult, Some(user), settings.mc_samples, settings.seed)
            }
        };
        let singles = (0..n)
            .into_par_iter()
            .map(|user| build(user, 1))
            .collect::<Result<Vec<_>>>()?;
        let jobs: Vec<(usize, u32)> = config
            .users()
            .iter()
            .enumerate()
            .flat_map(|(i, u)| (2..=u.stake).map(move |c| (i, c)))
            .collect();
        let mirrors = jobs
            .into_par_iter()
            .map(|(user, c)| Ok((user, c, build(user, c)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config,
            singles,
            mirrors,
        })
    }

    pub fn is_exact(&self) -> bool {
        self.singles.iter().all(OutcomeProfile::is_exact)
    }

    /// Evaluates every deviation check at `d`.
    pub fn certificate(&self, d: f64) -> NashCertificate {
        let r = self.config.total_reward();
        let w: Vec<f64> = self
            .config
            .users()
            .iter()
            .map(|u| stake_power(u.stake, d))
            .collect();
        let singles: Vec<(f64, f64)> = self
            .singles
            .iter()
            .enumerate()
            .map(|(n, p)| p.payoff(w[n], &w, r))
            .collect();
        let checks = self
            .mirrors
            .iter()
            .map(|(n, c, profile)| {
                let stake = self.config.users()[*n].stake;
                let (mirror, se_m) = profile.payoff(concentrated_weight(stake, *c, d), &w, r);
                let (single, se_s) = singles[*n];
                let margin = (!profile.is_exact())
                    .then(|| MC_VIOLATION_MARGIN * (se_m * se_m + se_s * se_s).sqrt());
                NashCheck {
                    n: n + 1,
                    c: *c,
                    payoff_single: single,
                    payoff_mirror: mirror,
                    margin,
                }
            })
            .collect();
        NashCertificate::from_checks(d, checks)
    }

    /// Grid search over prebuilt profiles. See [`find_d_opt`].
    pub fn search(&self, settings: &SolverSettings) -> Result<DOptSolution> {
        settings.validate()?;
        let mut last = None;
        for i in 0..settings.grid_len() {
            let d = settings.grid_point(i);
            let certificate = self.certificate(d);
            if certificate.satisfied {
                return Ok(DOptSolution {
                    d_opt: d,
                    grid_index: i,
                    certificate,
                });
            }
            last = Some(certificate);
        }
        let last = last.expect("grid has at least one point");
        let worst = last
            .tightest_violation()
            .expect("unsatisfied certificate has a violation");
        Err(Error::NoEquilibrium {
            d_max: settings.d_max,
            user: worst.n,
            oracle_count: worst.c,
            payoff_single: worst.payoff_single,
            payoff_mirror: worst.payoff_mirror,
        })
    }

    pub fn audit(&self, settings: &SolverSettings, through: f64) -> Result<GridAudit> {
        settings.validate()?;
        let mut points = Vec::new();
        let mut reversals = Vec::new();
        let mut held = false;
        for i in 0..settings.grid_len() {
            let d = settings.grid_point(i);
            if d > through {
                break;
            }
            let ok = self.certificate(d).satisfied;
            if held && !ok {
                reversals.push(d);
            }
            held |= ok;
            points.push((d, ok));
        }
        Ok(GridAudit { points, reversals })
    }
}

/// Smallest grid value of `d` in `[starting_d, d_max]` at which single-oracle
/// participation is an equilibrium for every user.
pub fn find_d_opt(config: &SystemConfig, settings: &SolverSettings) -> Result<DOptSolution> {
    settings.validate()?;
    NashEvaluator::new(config, settings)?.search(settings)
}

/// Runs the search with each oracle treated as its own user. Only the
/// per-oracle stakes need to be observable.
pub fn find_d_opt_from_oracle_stakes(
    oracle_stakes: &[u32],
    confusion: &ConfusionMatrix,
    settings: &SolverSettings,
) -> Result<DOptSolution> {
    let config = SystemConfig::with_stakes(confusion.clone(), oracle_stakes)?;
    find_d_opt(&config, settings)
}

/// Checks the equilibrium condition at `d`, exact when the default budget
/// allows.
pub fn verify_nash(config: &SystemConfig, d: f64) -> Result<NashCertificate> {
    verify_nash_with(config, d, &SolverSettings::default())
}

pub fn verify_nash_with(
    config: &SystemConfig,
    d: f64,
    settings: &SolverSettings,
) -> Result<NashCertificate> {
    check_exponent(d)?;
    Ok(NashEvaluator::new(config, settings)?.certificate(d))
}

/// Grid points where the condition fails after having held at an earlier
/// point.
#[derive(Clone, Debug, PartialEq)]
pub struct GridAudit {
    pub points: Vec<(f64, bool)>,
    pub reversals: Vec<f64>,
}

/// Evaluates the condition on every grid point up to `through` (capped at
/// `d_max`).
pub fn audit_grid(config: &SystemConfig, settings: &SolverSettings, through: f64) -> Result<GridAudit> {
    settings.validate()?;
    NashEvaluator::new(config, settings)?.audit(settings, through)
}
