//! Reward factors and reward distribution.
//!
//! An oracle that reports the decided class earns a factor of `stake^d`;
//! everyone else earns zero. The task reward `R` is split in proportion to
//! the factors. `d = 1` is the stake-proportional rule in common use; any
//! `d > 1` makes the factor superadditive, so splitting stake across
//! mirrored oracles loses reward weight.

use crate::error::{Error, Result};
use crate::model::{ClassLabel, Strategy};

/// Exponent and task reward of the mechanism.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct MechanismParams {
    exponent: f64,
    total_reward: f64,
}

impl MechanismParams {
    pub fn new(exponent: f64, total_reward: f64) -> Result<Self> {
        check_exponent(exponent)?;
        if !(total_reward.is_finite() && total_reward > 0.0) {
            return Err(Error::InvalidConfig(vec![format!(
                "total_reward {total_reward} must be positive"
            )]));
        }
        Ok(Self {
            exponent,
            total_reward,
        })
    }

    /// Stake-proportional rewards with `R = 1`.
    pub fn linear() -> Self {
        Self {
            exponent: 1.0,
            total_reward: 1.0,
        }
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn total_reward(&self) -> f64 {
        self.total_reward
    }
}

pub(crate) fn check_exponent(d: f64) -> Result<()> {
    if d.is_nan() || d < 1.0 {
        return Err(Error::ExponentBelowOne(d));
    }
    Ok(())
}

/// `stake^d`, with the minimum stake mapped to exactly 1.
#[inline]
pub fn stake_power(stake: u32, d: f64) -> f64 {
    if stake == 1 {
        1.0
    } else {
        f64::from(stake).powf(d)
    }
}

/// Summed factor of a user whose every oracle reports the decided class.
pub fn strategy_weight(strategy: &Strategy, d: f64) -> f64 {
    strategy
        .allocation()
        .iter()
        .map(|&s| stake_power(s, d))
        .sum()
}

/// `(c - 1) + (s - c + 1)^d`: the concentrated allocation's summed factor.
pub fn concentrated_weight(total_stake: u32, oracle_count: u32, d: f64) -> f64 {
    f64::from(oracle_count - 1) + stake_power(total_stake - oracle_count + 1, d)
}

pub fn reward_factor(stake: u32, reported: ClassLabel, decided: ClassLabel, d: f64) -> Result<f64> {
    if stake < 1 {
        return Err(Error::StakeBelowMinimum(stake));
    }
    check_exponent(d)?;
    Ok(if reported == decided {
        stake_power(stake, d)
    } else {
        0.0
    })
}

/// Splits `total_reward` in proportion to `factors`.
pub fn distribute_rewards(factors: &[f64], total_reward: f64) -> Result<Vec<f64>> {
    let sum: f64 = factors.iter().sum();
    if sum.is_nan() || sum <= 0.0 {
        return Err(Error::AllZeroFactors);
    }
    Ok(factors.iter().map(|f| f / sum * total_reward).collect())
}

/// Per-oracle factors and payoffs for one decided round.
#[derive(Clone, Debug, PartialEq)]
pub struct RewardOutcome {
    pub factors: Vec<f64>,
    pub payoffs: Vec<f64>,
    pub per_user_payoffs: Vec<f64>,
}

/// Scores one round: `reports[n]` is user `n`'s report, echoed by every
/// oracle in `strategies[n]`.
pub fn settle_round(
    strategies: &[Strategy],
    reports: &[ClassLabel],
    decided: ClassLabel,
    params: &MechanismParams,
) -> Result<RewardOutcome> {
    if strategies.len() != reports.len() {
        return Err(Error::ProfileLengthMismatch {
            reports: reports.len(),
            multiplicities: strategies.len(),
        });
    }
    let mut factors = Vec::new();
    let mut owners = Vec::new();
    for (n, (strategy, &report)) in strategies.iter().zip(reports).enumerate() {
        for &stake in strategy.allocation() {
            factors.push(reward_factor(stake, report, decided, params.exponent)?);
            owners.push(n);
        }
    }
    let payoffs = distribute_rewards(&factors, params.total_reward)?;
    let mut per_user_payoffs = vec![0.0; strategies.len()];
    for (&n, &p) in owners.iter().zip(&payoffs) {
        per_user_payoffs[n] += p;
    }
    Ok(RewardOutcome {
        factors,
        payoffs,
        per_user_payoffs,
    })
}
