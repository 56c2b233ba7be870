//! Test-side reference implementations, written without the crate's
//! enumeration or aggregation code.

#![allow(dead_code)]

use feedsim_core::{ClassPrior, ConfusionMatrix, Strategy, SystemConfig, UserProfile};
use rand::Rng;

pub struct BruteForce {
    pub payoffs: Vec<f64>,
    pub error_rate: f64,
}

/// Sums over the truth and every joint report vector, one report per user.
/// Ties share the outcome uniformly across the tied classes.
pub fn brute_force(config: &SystemConfig, strategies: &[Strategy], d: f64) -> BruteForce {
    let k = config.num_classes();
    let n = config.num_users();
    let prior = config.prior().probabilities();
    let r = config.total_reward();
    let mut payoffs = vec![0.0; n];
    let mut error_rate = 0.0;
    let mut reports = vec![0usize; n];
    for (truth, &prior_t) in prior.iter().enumerate() {
        loop {
            let mut p = prior_t;
            for &y in &reports {
                p *= config.confusion().prob(truth, y);
            }
            if p > 0.0 {
                let mut counts = vec![0u64; k];
                for (s, &y) in strategies.iter().zip(&reports) {
                    counts[y] += u64::from(s.oracle_count());
                }
                let top = *counts.iter().max().unwrap();
                let winners: Vec<usize> = (0..k).filter(|&c| counts[c] == top).collect();
                let share = p / winners.len() as f64;
                for &w in &winners {
                    if w != truth {
                        error_rate += share;
                    }
                    let per_user: Vec<f64> = strategies
                        .iter()
                        .zip(&reports)
                        .map(|(s, &y)| {
                            if y == w {
                                s.allocation().iter().map(|&a| f64::from(a).powf(d)).sum()
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    let total: f64 = per_user.iter().sum();
                    for (acc, f) in payoffs.iter_mut().zip(&per_user) {
                        *acc += share * r * f / total;
                    }
                }
            }
            let mut i = 0;
            while i < n {
                reports[i] += 1;
                if reports[i] < k {
                    break;
                }
                reports[i] = 0;
                i += 1;
            }
            if i == n {
                break;
            }
        }
    }
    BruteForce {
        payoffs,
        error_rate,
    }
}

pub fn random_matrix<R: Rng>(rng: &mut R, k: usize) -> ConfusionMatrix {
    let rows = (0..k)
        .map(|t| {
            (0..k)
                .map(|y| {
                    let base = rng.gen_range(0.05..1.0);
                    if y == t {
                        base + rng.gen_range(0.0..1.5)
                    } else {
                        base
                    }
                })
                .collect()
        })
        .collect();
    ConfusionMatrix::renormalized(rows).unwrap()
}

/// Random instance with `2..=max_users` users, `2..=max_k` classes and
/// stakes in `1..=max_stake`.
pub fn random_config<R: Rng>(
    rng: &mut R,
    max_users: usize,
    max_k: usize,
    max_stake: u32,
    uniform_prior: bool,
) -> SystemConfig {
    let k = rng.gen_range(2..=max_k);
    let n = rng.gen_range(2..=max_users);
    let prior = if uniform_prior {
        ClassPrior::uniform(k)
    } else {
        let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.2..1.0)).collect();
        let s: f64 = raw.iter().sum();
        let mut p: Vec<f64> = raw.iter().map(|x| x / s).collect();
        let head: f64 = p[..k - 1].iter().sum();
        p[k - 1] = 1.0 - head;
        ClassPrior::new(p).unwrap()
    };
    let users = (1..=n)
        .map(|id| UserProfile {
            id,
            stake: rng.gen_range(1..=max_stake),
        })
        .collect();
    let reward = if uniform_prior { 1.0 } else { rng.gen_range(0.5..3.0) };
    SystemConfig::new(prior, random_matrix(rng, k), users, reward).unwrap()
}

/// Every ordered composition of `total` into `parts` positive integers.
pub fn compositions(total: u32, parts: u32) -> Vec<Vec<u32>> {
    if parts == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for first in 1..=total - (parts - 1) {
        for mut rest in compositions(total - first, parts - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

pub fn random_strategy<R: Rng>(rng: &mut R, stake: u32) -> Strategy {
    let c = rng.gen_range(1..=stake);
    let all = compositions(stake, c);
    Strategy::new(all[rng.gen_range(0..all.len())].clone()).unwrap()
}
