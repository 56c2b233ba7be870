//! Expected payoff of a user running one or more mirrored oracles.
//!
//! The exact path enumerates outcomes through [`OutcomeProfile`]; the Monte
//! Carlo path replays whole rounds (report sampling, majority vote with a
//! sampled tie-break, reward distribution) and averages.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::aggregation::{majority_vote, VoteProfile};
use crate::error::{Error, Result};
use crate::incentive::{check_exponent, distribute_rewards, reward_factor, strategy_weight};
use crate::model::{draw_from_row, sample_report, ClassLabel, Strategy, SystemConfig};
use crate::outcome::{OutcomeProfile, DEFAULT_ENUMERATION_BUDGET, MC_BLOCK};

/// Default number of Monte Carlo rounds.
pub const DEFAULT_MC_SAMPLES: u64 = 1_000_000;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateKind {
    Exact,
    MonteCarlo,
}

/// How to evaluate an expectation.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Method {
    Exact,
    MonteCarlo { samples: u64, seed: u64 },
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize)]
pub struct PayoffEstimate {
    pub value: f64,
    pub method: EstimateKind,
    pub std_error: f64,
    pub samples: u64,
}

/// A focal user's strategy against fixed strategies of everyone else.
#[derive(Clone, Debug)]
pub struct PayoffQuery<'a> {
    pub config: &'a SystemConfig,
    /// 1-based user id.
    pub focal_user: usize,
    pub focal_strategy: Strategy,
    /// One strategy per user, focal entry ignored. `None` means every other
    /// user runs a single oracle holding its full stake.
    pub other_strategies: Option<Vec<Strategy>>,
    pub d: f64,
}

impl<'a> PayoffQuery<'a> {
    /// Focal user on `oracle_count` oracles with the concentrated
    /// allocation; everyone else on one oracle.
    pub fn concentrated(
        config: &'a SystemConfig,
        focal_user: usize,
        oracle_count: u32,
        d: f64,
    ) -> Result<Self> {
        let stake = config.user(focal_user)?.stake;
        Ok(Self {
            config,
            focal_user,
            focal_strategy: Strategy::concentrated(stake, oracle_count)?,
            other_strategies: None,
            d,
        })
    }

    /// The full validated strategy vector.
    pub fn strategies(&self) -> Result<Vec<Strategy>> {
        self.config.user(self.focal_user)?;
        check_exponent(self.d)?;
        let mut all = match &self.other_strategies {
            Some(s) => s.clone(),
            None => self.config.single_oracle_strategies(),
        };
        if all.len() != self.config.num_users() {
            return Err(Error::InvalidStrategy(format!(
                "{} strategies for {} users",
                all.len(),
                self.config.num_users()
            )));
        }
        all[self.focal_user - 1] = self.focal_strategy.clone();
        self.config.check_strategies(&all)?;
        Ok(all)
    }
}

/// Concentrated allocation of `total_stake` over `oracle_count` oracles.
pub fn optimal_allocation(total_stake: u32, oracle_count: u32) -> Result<Strategy> {
    Strategy::concentrated(total_stake, oracle_count)
}

pub(crate) fn multiplicities(strategies: &[Strategy]) -> Vec<u32> {
    strategies.iter().map(Strategy::oracle_count).collect()
}

pub(crate) fn weights(strategies: &[Strategy], d: f64) -> Vec<f64> {
    strategies.iter().map(|s| strategy_weight(s, d)).collect()
}

pub fn expected_payoff_exact(query: &PayoffQuery<'_>) -> Result<PayoffEstimate> {
    expected_payoff_exact_with_budget(query, DEFAULT_ENUMERATION_BUDGET)
}

/// Exact expectation over truth and every joint report vector, refusing
/// when `K^(N+1)` exceeds `budget`.
pub fn expected_payoff_exact_with_budget(
    query: &PayoffQuery<'_>,
    budget: u128,
) -> Result<PayoffEstimate> {
    let strategies = query.strategies()?;
    let focal = query.focal_user - 1;
    let profile = OutcomeProfile::exact(
        query.config,
        &multiplicities(&strategies),
        Some(focal),
        budget,
    )?;
    let w = weights(&strategies, query.d);
    let (value, _) = profile.payoff(w[focal], &w, query.config.total_reward());
    Ok(PayoffEstimate {
        value,
        method: EstimateKind::Exact,
        std_error: 0.0,
        samples: 0,
    })
}

/// Welford accumulator with Chan's parallel merge.
#[derive(Copy, Clone, Debug, Default)]
pub(crate) struct RunningStats {
    n: u64,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub(crate) fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub(crate) fn merge(&mut self, other: &Self) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        self.mean += delta * other.n as f64 / n as f64;
        self.m2 += other.m2 + delta * delta * (self.n as f64 * other.n as f64) / n as f64;
        self.n = n;
    }

    pub(crate) fn mean(&self) -> f64 {
        self.mean
    }

    pub(crate) fn std_error(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let var = self.m2 / (self.n - 1) as f64;
        (var / self.n as f64).sqrt()
    }
}

pub(crate) struct SimulationSummary {
    pub payoff: RunningStats,
    pub error: RunningStats,
}

/// Plays `samples` independent rounds. Rounds are grouped into fixed blocks
/// with one RNG stream each, so the result depends only on `seed`.
pub(crate) fn simulate_rounds(
    config: &SystemConfig,
    strategies: &[Strategy],
    focal: Option<usize>,
    d: f64,
    samples: u64,
    seed: u64,
) -> Result<SimulationSummary> {
    if samples == 0 {
        return Err(Error::NoSamples);
    }
    config.check_strategies(strategies)?;
    check_exponent(d)?;
    let k = config.num_classes();
    let mult = multiplicities(strategies);
    let blocks = samples.div_ceil(MC_BLOCK);
    let partials: Vec<Result<SimulationSummary>> = (0..blocks)
        .into_par_iter()
        .map(|block| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(block);
            let count = MC_BLOCK.min(samples - block * MC_BLOCK);
            let mut payoff = RunningStats::default();
            let mut error = RunningStats::default();
            for _ in 0..count {
                let truth = ClassLabel::from_index(draw_from_row(
                    config.prior().probabilities(),
                    &mut rng,
                ));
                let reports = (0..strategies.len())
                    .map(|_| sample_report(config.confusion(), truth, &mut rng))
                    .collect::<Result<Vec<_>>>()?;
                let profile = VoteProfile::new(reports, mult.clone())?;
                let vote = majority_vote(&profile, k, Some(&mut rng))?;
                let decided = vote.sampled_output.expect("rng supplied");
                error.push(if decided == truth { 0.0 } else { 1.0 });
                if let Some(f) = focal {
                    let mut factors = Vec::new();
                    let mut owned = Vec::new();
                    for (n, (s, &r)) in strategies.iter().zip(profile.reports()).enumerate() {
                        for &stake in s.allocation() {
                            factors.push(reward_factor(stake, r, decided, d)?);
                            owned.push(n == f);
                        }
                    }
                    let paid = distribute_rewards(&factors, config.total_reward())?;
                    let mine: f64 = paid
                        .iter()
                        .zip(&owned)
                        .filter(|(_, &o)| o)
                        .map(|(p, _)| p)
                        .sum();
                    payoff.push(mine);
                }
            }
            Ok(SimulationSummary { payoff, error })
        })
        .collect();

    let mut summary = SimulationSummary {
        payoff: RunningStats::default(),
        error: RunningStats::default(),
    };
    for part in partials {
        let part = part?;
        summary.payoff.merge(&part.payoff);
        summary.error.merge(&part.error);
    }
    Ok(summary)
}

/// Sample-mean estimate of the expected payoff with its standard error.
pub fn expected_payoff_mc(
    query: &PayoffQuery<'_>,
    samples: u64,
    seed: u64,
) -> Result<PayoffEstimate> {
    let strategies = query.strategies()?;
    let summary = simulate_rounds(
        query.config,
        &strategies,
        Some(query.focal_user - 1),
        query.d,
        samples,
        seed,
    )?;
    Ok(PayoffEstimate {
        value: summary.payoff.mean(),
        method: EstimateKind::MonteCarlo,
        std_error: summary.payoff.std_error(),
        samples,
    })
}

pub fn expected_payoff(query: &PayoffQuery<'_>, method: Method) -> Result<PayoffEstimate> {
    match method {
        Method::Exact => expected_payoff_exact(query),
        Method::MonteCarlo { samples, seed } => expected_payoff_mc(query, samples, seed),
    }
}

/// Expected payoff of `focal_user` for every oracle count `1..=s_n`,
/// concentrated allocation, others on one oracle each.
pub fn payoff_curve(
    config: &SystemConfig,
    focal_user: usize,
    d: f64,
    method: Method,
) -> Result<Vec<PayoffEstimate>> {
    let stake = config.user(focal_user)?.stake;
    (1..=stake)
        .into_par_iter()
        .map(|c| expected_payoff(&PayoffQuery::concentrated(config, focal_user, c, d)?, method))
        .collect()
}

/// Oracle count maximizing the focal user's expected payoff when everyone
/// else runs one oracle. Ties go to the smaller count.
pub fn best_response_c(
    config: &SystemConfig,
    focal_user: usize,
    d: f64,
    method: Method,
) -> Result<u32> {
    let curve = payoff_curve(config, focal_user, d, method)?;
    let mut best = 0;
    for (i, e) in curve.iter().enumerate() {
        if e.value > curve[best].value {
            best = i;
        }
    }
    Ok(best as u32 + 1)
}

/// Exact expected payoff of every user under `strategies`.
pub fn all_payoffs_exact(
    config: &SystemConfig,
    strategies: &[Strategy],
    d: f64,
    budget: u128,
) -> Result<Vec<f64>> {
    config.check_strategies(strategies)?;
    check_exponent(d)?;
    let mult = multiplicities(strategies);
    let w = weights(strategies, d);
    (0..config.num_users())
        .map(|n| {
            let profile = OutcomeProfile::exact(config, &mult, Some(n), budget)?;
            Ok(profile.payoff(w[n], &w, config.total_reward()).0)
        })
        .collect()
}
