//! Outcome profiles: the joint report distribution reduced to what the
//! reward rule needs.
//!
//! For a fixed vector of oracle multiplicities, whether a focal user is
//! paid and how much depends only on (a) whether its report is among the
//! majority winners, with tie mass `1/|winners|`, and (b) which other users
//! reported the same class. Neither depends on stakes or on `d`. A profile
//! stores the tie-weighted probability of each "agreeing set" of other
//! users, so the expected payoff for any allocation and any `d` is
//!
//! ```text
//! R * sum_A mass(A) * F / (F + sum_{m in A} w_m)
//! ```
//!
//! where `F` is the focal user's summed reward factor and `w_m` those of the
//! others. The same pass accumulates the system error rate.
//!
//! The exact builder walks every (truth, report vector) pair: `K^(N+1)`
//! terms, one report per user since mirrored oracles always agree. Work is
//! split into a fixed number of prefix chunks whose partial results are
//! merged in chunk order, so results do not depend on the thread count.

use std::collections::{BTreeMap, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::aggregation::{sample_winner, top_count};
use crate::error::{Error, Result};
use crate::model::{draw_from_row, SystemConfig};

/// Default cap on `K^(N+1)` for exact enumeration.
pub const DEFAULT_ENUMERATION_BUDGET: u128 = 1_000_000_000;

/// Samples per Monte Carlo block. Each block owns an RNG stream.
pub(crate) const MC_BLOCK: u64 = 4096;

const TARGET_CHUNKS: u128 = 64;
const DENSE_MASK_BITS: usize = 12;

/// Number of terms an exact enumeration over `num_users` users visits.
pub fn enumeration_terms(num_classes: usize, num_users: usize) -> u128 {
    (num_classes as u128)
        .checked_pow(num_users as u32 + 1)
        .unwrap_or(u128::MAX)
}

/// Per-oracle-count reduction of the report distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct OutcomeProfile {
    focal: Option<usize>,
    /// User index (0-based) for each bit of an agreement mask.
    others: Vec<usize>,
    /// `(mask, mass)` sorted by mask. For exact profiles `mass` is a
    /// probability; for sampled ones it is a hit count.
    agreement: Vec<(u64, f64)>,
    error_rate: f64,
    error_std_error: f64,
    samples: u64,
}

impl OutcomeProfile {
    /// Enumerates every outcome exactly. `multiplicities[n]` is user `n`'s
    /// oracle count; `focal` is a 0-based user index.
    pub fn exact(
        config: &SystemConfig,
        multiplicities: &[u32],
        focal: Option<usize>,
        budget: u128,
    ) -> Result<Self> {
        let n = check_inputs(config, multiplicities, focal)?;
        let k = config.num_classes();
        let terms = enumeration_terms(k, n);
        if terms > budget {
            return Err(Error::BudgetExceeded { terms, budget });
        }
        let walker = Walker::new(config, multiplicities, focal);
        let mut prefix_len = 0;
        let mut chunks: u128 = 1;
        while prefix_len < n && chunks < TARGET_CHUNKS {
            prefix_len += 1;
            chunks *= k as u128;
        }
        let partials: Vec<ChunkResult> = (0..chunks as u64)
            .into_par_iter()
            .map(|chunk| walker.run_chunk(chunk, prefix_len))
            .collect();

        let mut error_rate = 0.0;
        let mut merged = MassAccumulator::new(walker.others.len());
        for part in partials {
            error_rate += part.error;
            merged.merge(part.masses);
        }
        Ok(Self {
            focal,
            others: walker.others,
            agreement: merged.into_sorted(),
            error_rate,
            error_std_error: 0.0,
            samples: 0,
        })
    }

    /// Estimates the same quantities from `samples` simulated rounds with
    /// sampled tie-breaking. Deterministic in `seed`.
    pub fn sampled(
        config: &SystemConfig,
        multiplicities: &[u32],
        focal: Option<usize>,
        samples: u64,
        seed: u64,
    ) -> Result<Self> {
        let n = check_inputs(config, multiplicities, focal)?;
        if samples == 0 {
            return Err(Error::NoSamples);
        }
        let k = config.num_classes();
        let others: Vec<usize> = (0..n).filter(|&m| Some(m) != focal).collect();
        let mut bit_of = vec![0u64; n];
        for (b, &m) in others.iter().enumerate() {
            bit_of[m] = 1 << b;
        }
        let blocks = samples.div_ceil(MC_BLOCK);
        let partials: Vec<(u64, MassAccumulator)> = (0..blocks)
            .into_par_iter()
            .map(|block| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(block);
                let count = MC_BLOCK.min(samples - block * MC_BLOCK);
                let mut acc = MassAccumulator::new(others.len());
                let mut errors = 0u64;
                let mut counts = vec![0u64; k];
                let mut reports = vec![0usize; n];
                for _ in 0..count {
                    let truth = draw_from_row(config.prior().probabilities(), &mut rng);
                    counts.fill(0);
                    for (m, r) in reports.iter_mut().enumerate() {
                        *r = draw_from_row(config.confusion().row(truth), &mut rng);
                        counts[*r] += u64::from(multiplicities[m]);
                    }
                    let decided = sample_winner(&counts, &mut rng);
                    if decided != truth {
                        errors += 1;
                    }
                    if let Some(f) = focal {
                        if reports[f] == decided {
                            let mask = reports
                                .iter()
                                .zip(&bit_of)
                                .enumerate()
                                .filter(|&(m, (&r, _))| m != f && r == decided)
                                .fold(0, |acc, (_, (_, &bit))| acc | bit);
                            acc.add(mask, 1.0);
                        }
                    }
                }
                (errors, acc)
            })
            .collect();

        let mut errors = 0u64;
        let mut merged = MassAccumulator::new(others.len());
        for (e, part) in partials {
            errors += e;
            merged.merge(part);
        }
        let (error_rate, error_std_error) = bernoulli_stats(errors, samples);
        Ok(Self {
            focal,
            others,
            agreement: merged.into_sorted(),
            error_rate,
            error_std_error,
            samples,
        })
    }

    pub fn is_exact(&self) -> bool {
        self.samples == 0
    }

    pub fn samples(&self) -> u64 {
        self.samples
    }

    pub fn focal(&self) -> Option<usize> {
        self.focal
    }

    /// Probability the system output differs from the truth.
    pub fn error_rate(&self) -> f64 {
        self.error_rate
    }

    pub fn error_std_error(&self) -> f64 {
        self.error_std_error
    }

    /// Probability (tie-weighted) that the focal user's report is decided.
    pub fn win_probability(&self) -> f64 {
        let total: f64 = self.agreement.iter().map(|&(_, m)| m).sum();
        if self.is_exact() {
            total
        } else {
            total / self.samples as f64
        }
    }

    /// Expected focal payoff and its standard error (0 when exact).
    ///
    /// `focal_weight` is the focal user's summed reward factor and
    /// `user_weights[m]` user `m`'s (the focal entry is ignored).
    pub fn payoff(&self, focal_weight: f64, user_weights: &[f64], total_reward: f64) -> (f64, f64) {
        let mut first = 0.0;
        let mut second = 0.0;
        for &(mask, mass) in &self.agreement {
            let mut others = 0.0;
            let mut bits = mask;
            while bits != 0 {
                let b = bits.trailing_zeros() as usize;
                others += user_weights[self.others[b]];
                bits &= bits - 1;
            }
            let share = focal_weight / (focal_weight + others);
            first += mass * share;
            second += mass * share * share;
        }
        if self.is_exact() {
            return (total_reward * first, 0.0);
        }
        let s = self.samples as f64;
        let mean = first / s;
        let std_error = if self.samples > 1 {
            let var = ((second - s * mean * mean) / (s - 1.0)).max(0.0);
            (var / s).sqrt()
        } else {
            0.0
        };
        (total_reward * mean, total_reward * std_error)
    }
}

fn bernoulli_stats(hits: u64, samples: u64) -> (f64, f64) {
    let s = samples as f64;
    let mean = hits as f64 / s;
    if samples < 2 {
        return (mean, 0.0);
    }
    let var = (hits as f64 * (1.0 - mean) * (1.0 - mean)
        + (samples - hits) as f64 * mean * mean)
        / (s - 1.0);
    (mean, (var / s).sqrt())
}

fn check_inputs(
    config: &SystemConfig,
    multiplicities: &[u32],
    focal: Option<usize>,
) -> Result<usize> {
    let n = config.num_users();
    if multiplicities.len() != n {
        return Err(Error::InvalidStrategy(format!(
            "{} multiplicities for {n} users",
            multiplicities.len()
        )));
    }
    if multiplicities.contains(&0) {
        return Err(Error::InvalidStrategy("multiplicity must be >= 1".into()));
    }
    if let Some(f) = focal {
        if f >= n {
            return Err(Error::UnknownUser(f + 1));
        }
    }
    if n > 64 {
        return Err(Error::InvalidConfig(vec![format!(
            "{n} users exceeds the 64-user limit"
        )]));
    }
    Ok(n)
}

enum MassAccumulator {
    Dense(Vec<f64>),
    Sparse(HashMap<u64, f64>),
}

impl MassAccumulator {
    fn new(bits: usize) -> Self {
        if bits <= DENSE_MASK_BITS {
            Self::Dense(vec![0.0; 1 << bits])
        } else {
            Self::Sparse(HashMap::new())
        }
    }

    #[inline]
    fn add(&mut self, mask: u64, mass: f64) {
        match self {
            Self::Dense(v) => v[mask as usize] += mass,
            Self::Sparse(m) => *m.entry(mask).or_insert(0.0) += mass,
        }
    }

    fn merge(&mut self, other: Self) {
        match (self, other) {
            (Self::Dense(a), Self::Dense(b)) => {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
            }
            (this, other) => {
                // Sparse maps hold one running sum per key, so merging them
                // in sorted key order keeps the result order-independent.
                for (mask, mass) in other.into_sorted() {
                    this.add(mask, mass);
                }
            }
        }
    }

    fn into_sorted(self) -> Vec<(u64, f64)> {
        match self {
            Self::Dense(v) => v
                .into_iter()
                .enumerate()
                .filter(|&(_, m)| m > 0.0)
                .map(|(i, m)| (i as u64, m))
                .collect(),
            Self::Sparse(m) => m
                .into_iter()
                .filter(|&(_, v)| v > 0.0)
                .collect::<BTreeMap<_, _>>()
                .into_iter()
                .collect(),
        }
    }
}

struct ChunkResult {
    error: f64,
    masses: MassAccumulator,
}

/// Depth-first walk over per-user reports carrying `prior[t] * prod p[t][y]`
/// for every truth `t` at once.
struct Walker<'a> {
    k: usize,
    n: usize,
    confusion: &'a crate::model::ConfusionMatrix,
    prior: &'a [f64],
    multiplicities: Vec<u64>,
    focal: Option<usize>,
    bit_of: Vec<u64>,
    others: Vec<usize>,
}

struct WalkState {
    counts: Vec<u64>,
    masks: Vec<u64>,
    reports: Vec<usize>,
    /// `(n + 1) x k` running products; level `i` holds users `< i`.
    probs: Vec<f64>,
    error: f64,
    masses: MassAccumulator,
}

impl<'a> Walker<'a> {
    fn new(config: &'a SystemConfig, multiplicities: &[u32], focal: Option<usize>) -> Self {
        let n = config.num_users();
        let others: Vec<usize> = (0..n).filter(|&m| Some(m) != focal).collect();
        let mut bit_of = vec![0u64; n];
        for (b, &m) in others.iter().enumerate() {
            bit_of[m] = 1 << b;
        }
        Self {
            k: config.num_classes(),
            n,
            confusion: config.confusion(),
            prior: config.prior().probabilities(),
            multiplicities: multiplicities.iter().map(|&m| u64::from(m)).collect(),
            focal,
            bit_of,
            others,
        }
    }

    fn run_chunk(&self, chunk: u64, prefix_len: usize) -> ChunkResult {
        let k = self.k;
        let mut state = WalkState {
            counts: vec![0; k],
            masks: vec![0; k],
            reports: vec![0; self.n],
            probs: vec![0.0; (self.n + 1) * k],
            error: 0.0,
            masses: MassAccumulator::new(self.others.len()),
        };
        state.probs[..k].copy_from_slice(self.prior);

        // Decode the chunk index into the first `prefix_len` reports,
        // most significant digit first.
        let mut digits = vec![0usize; prefix_len];
        let mut rest = chunk;
        for d in digits.iter_mut().rev() {
            *d = (rest % k as u64) as usize;
            rest /= k as u64;
        }
        let mut alive = true;
        for (level, &y) in digits.iter().enumerate() {
            alive = self.push(&mut state, level, y);
            if !alive {
                break;
            }
        }
        if alive {
            self.descend(&mut state, prefix_len);
        }
        ChunkResult {
            error: state.error,
            masses: state.masses,
        }
    }

    /// Records user `level` reporting `y`. Returns false when the branch
    /// has zero probability under every truth.
    #[inline]
    fn push(&self, s: &mut WalkState, level: usize, y: usize) -> bool {
        let k = self.k;
        let (head, tail) = s.probs.split_at_mut((level + 1) * k);
        let parent = &head[level * k..];
        let child = &mut tail[..k];
        let mut any = false;
        for t in 0..k {
            let p = parent[t] * self.confusion.prob(t, y);
            child[t] = p;
            any |= p > 0.0;
        }
        s.counts[y] += self.multiplicities[level];
        s.masks[y] |= self.bit_of[level];
        s.reports[level] = y;
        any
    }

    #[inline]
    fn pop(&self, s: &mut WalkState, level: usize, y: usize) {
        s.counts[y] -= self.multiplicities[level];
        s.masks[y] &= !self.bit_of[level];
    }

    fn descend(&self, s: &mut WalkState, level: usize) {
        if level == self.n {
            self.leaf(s);
            return;
        }
        for y in 0..self.k {
            if self.push(s, level, y) {
                self.descend(s, level + 1);
            }
            self.pop(s, level, y);
        }
    }

    #[inline]
    fn leaf(&self, s: &mut WalkState) {
        let k = self.k;
        let probs = &s.probs[self.n * k..];
        let (best, ties) = top_count(&s.counts);
        let mut total = 0.0;
        let mut correct = 0.0;
        for (&p, &count) in probs[..k].iter().zip(&s.counts) {
            total += p;
            if count == best {
                correct += p;
            }
        }
        let share = 1.0 / ties as f64;
        s.error += total - correct * share;
        if let Some(f) = self.focal {
            let y = s.reports[f];
            if s.counts[y] == best {
                s.masses.add(s.masks[y], total * share);
            }
        }
    }
}
