//! Majority voting over oracle reports.
//!
//! Every oracle casts one vote regardless of stake. A user running `c`
//! mirrored oracles contributes `c` identical votes. Ties are resolved
//! uniformly at random among the tied classes; expectation code uses the
//! analytic tie mass instead of sampling.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::ClassLabel;

/// One report per user plus how many oracles echo it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VoteProfile {
    reports: Vec<ClassLabel>,
    multiplicities: Vec<u32>,
}

impl VoteProfile {
    pub fn new(reports: Vec<ClassLabel>, multiplicities: Vec<u32>) -> Result<Self> {
        if reports.len() != multiplicities.len() {
            return Err(Error::ProfileLengthMismatch {
                reports: reports.len(),
                multiplicities: multiplicities.len(),
            });
        }
        if reports.is_empty() {
            return Err(Error::EmptyProfile);
        }
        if multiplicities.contains(&0) {
            return Err(Error::InvalidStrategy("multiplicity must be >= 1".into()));
        }
        Ok(Self {
            reports,
            multiplicities,
        })
    }

    /// Every user runs a single oracle.
    pub fn single(reports: Vec<ClassLabel>) -> Result<Self> {
        let n = reports.len();
        Self::new(reports, vec![1; n])
    }

    pub fn reports(&self) -> &[ClassLabel] {
        &self.reports
    }

    pub fn multiplicities(&self) -> &[u32] {
        &self.multiplicities
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AggregateResult {
    pub vote_counts: Vec<u64>,
    /// Classes tied at the maximum count, in label order.
    pub winners: Vec<ClassLabel>,
    /// Probability each class becomes the output: `1/|winners|` for winners.
    pub tie_mass: Vec<f64>,
    pub sampled_output: Option<ClassLabel>,
}

impl AggregateResult {
    pub fn is_winner(&self, label: ClassLabel) -> bool {
        self.tie_mass.get(label.index()).is_some_and(|&m| m > 0.0)
    }
}

/// Maximum count and the number of classes attaining it.
#[inline]
pub(crate) fn top_count(counts: &[u64]) -> (u64, usize) {
    let mut best = 0;
    let mut ties = 0;
    for &c in counts {
        if c > best {
            best = c;
            ties = 1;
        } else if c == best {
            ties += 1;
        }
    }
    (best, ties)
}

/// Picks uniformly among the classes with the maximum count.
#[inline]
pub(crate) fn sample_winner<R: Rng + ?Sized>(counts: &[u64], rng: &mut R) -> usize {
    let (best, ties) = top_count(counts);
    let pick = if ties == 1 { 0 } else { rng.gen_range(0..ties) };
    counts
        .iter()
        .enumerate()
        .filter(|&(_, &c)| c == best)
        .nth(pick)
        .map(|(k, _)| k)
        .expect("pick < ties")
}

/// Tallies `profile` over `num_classes` classes and resolves the winner set.
/// With an rng the tie is also broken by sampling.
pub fn majority_vote<R: Rng + ?Sized>(
    profile: &VoteProfile,
    num_classes: usize,
    rng: Option<&mut R>,
) -> Result<AggregateResult> {
    let mut vote_counts = vec![0u64; num_classes];
    for (&report, &mult) in profile.reports.iter().zip(&profile.multiplicities) {
        if report.get() == 0 || report.get() > num_classes {
            return Err(Error::LabelOutOfRange {
                label: report.get(),
                num_classes,
            });
        }
        vote_counts[report.index()] += u64::from(mult);
    }
    let (best, ties) = top_count(&vote_counts);
    let share = 1.0 / ties as f64;
    let tie_mass = vote_counts
        .iter()
        .map(|&c| if c == best { share } else { 0.0 })
        .collect();
    let winners = vote_counts
        .iter()
        .enumerate()
        .filter(|&(_, &c)| c == best)
        .map(|(k, _)| ClassLabel::from_index(k))
        .collect();
    let sampled_output = rng.map(|rng| ClassLabel::from_index(sample_winner(&vote_counts, rng)));
    Ok(AggregateResult {
        vote_counts,
        winners,
        tie_mass,
        sampled_output,
    })
}
