//! Domain types for the data-feed system: classes, priors, the shared
//! confusion matrix, user stakes, and per-user oracle strategies.
//!
//! Stakes are integers in units of the minimum stake, so a user with stake
//! `s` can run at most `s` oracles. Confusion matrices are indexed
//! `[truth][reported]` and every row is a probability distribution.

use std::collections::BTreeSet;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::ExperimentSection;

/// Tolerance on confusion-matrix row sums.
pub const ROW_SUM_TOLERANCE: f64 = 1e-6;
/// Tolerance on the prior's total mass.
pub const PRIOR_SUM_TOLERANCE: f64 = 1e-9;

/// A class `x_k`, 1-based as in the config file and CLI.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassLabel(usize);

impl ClassLabel {
    pub fn new(label: usize, num_classes: usize) -> Result<Self> {
        if label == 0 || label > num_classes {
            return Err(Error::LabelOutOfRange { label, num_classes });
        }
        Ok(Self(label))
    }

    /// Label from a 0-based index. The caller guarantees the range.
    pub(crate) fn from_index(index: usize) -> Self {
        Self(index + 1)
    }

    pub fn get(self) -> usize {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 - 1
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x{}", self.0)
    }
}

/// Prior distribution of the data point over the `K` classes.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassPrior {
    probabilities: Vec<f64>,
}

impl ClassPrior {
    pub fn uniform(num_classes: usize) -> Self {
        Self {
            probabilities: vec![1.0 / num_classes as f64; num_classes],
        }
    }

    pub fn new(probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.is_empty() {
            return Err(Error::InvalidPrior("no classes".into()));
        }
        if let Some(p) = probabilities.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidPrior(format!("entry {p} is not a probability")));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > PRIOR_SUM_TOLERANCE {
            return Err(Error::InvalidPrior(format!("sums to {total}")));
        }
        Ok(Self { probabilities })
    }

    pub fn num_classes(&self) -> usize {
        self.probabilities.len()
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn is_uniform(&self) -> bool {
        let u = 1.0 / self.probabilities.len() as f64;
        self.probabilities.iter().all(|&p| p == u)
    }
}

/// Row-stochastic `K x K` matrix; entry `[k][l]` is the probability that an
/// oracle reports `x_l` when the truth is `x_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfusionMatrix {
    k: usize,
    entries: Vec<f64>,
}

impl ConfusionMatrix {
    /// Builds a matrix from rows, rejecting any row that is not a
    /// distribution within [`ROW_SUM_TOLERANCE`].
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let problems = confusion_violations(&rows);
        if !problems.is_empty() {
            return Err(Error::InvalidConfusion(problems.join("; ")));
        }
        Ok(Self::from_rows_unchecked(rows))
    }

    /// Builds a matrix after dividing every row by its sum. Shape, range,
    /// and positive-mass checks still apply.
    pub fn renormalized(rows: Vec<Vec<f64>>) -> Result<Self> {
        let rows: Vec<Vec<f64>> = rows
            .into_iter()
            .map(|row| {
                let total: f64 = row.iter().sum();
                if total > 0.0 {
                    row.into_iter().map(|p| p / total).collect()
                } else {
                    row
                }
            })
            .collect();
        Self::new(rows)
    }

    pub fn identity(num_classes: usize) -> Self {
        let mut entries = vec![0.0; num_classes * num_classes];
        for k in 0..num_classes {
            entries[k * num_classes + k] = 1.0;
        }
        Self {
            k: num_classes,
            entries,
        }
    }

    /// Diagonal `accuracy`, remaining mass spread evenly off the diagonal.
    pub fn symmetric(num_classes: usize, accuracy: f64) -> Result<Self> {
        if num_classes < 2 {
            return Self::new(vec![vec![1.0]]);
        }
        let off = (1.0 - accuracy) / (num_classes - 1) as f64;
        let rows = (0..num_classes)
            .map(|k| {
                (0..num_classes)
                    .map(|l| if l == k { accuracy } else { off })
                    .collect()
            })
            .collect();
        Self::new(rows)
    }

    fn from_rows_unchecked(rows: Vec<Vec<f64>>) -> Self {
        let k = rows.len();
        Self {
            k,
            entries: rows.into_iter().flatten().collect(),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn prob(&self, truth: usize, reported: usize) -> f64 {
        self.entries[truth * self.k + reported]
    }

    pub fn row(&self, truth: usize) -> &[f64] {
        &self.entries[truth * self.k..(truth + 1) * self.k]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks(self.k).map(<[f64]>::to_vec).collect()
    }

    /// Every diagonal entry strictly exceeds the rest of its row.
    pub fn is_weakly_accurate(&self) -> bool {
        rows_weakly_accurate(self.entries.chunks(self.k))
    }
}

fn rows_weakly_accurate<'a>(rows: impl Iterator<Item = &'a [f64]>) -> bool {
    rows.enumerate().all(|(k, row)| {
        row.iter()
            .enumerate()
            .all(|(l, &p)| l == k || row[k] > p)
    })
}

fn confusion_violations(rows: &[Vec<f64>]) -> Vec<String> {
    let mut out = Vec::new();
    let k = rows.len();
    if k == 0 {
        out.push("confusion matrix has no rows".to_string());
        return out;
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != k {
            out.push(format!("row {} has {} entries, expected {k}", i + 1, row.len()));
            continue;
        }
        for (j, &p) in row.iter().enumerate() {
            if !(0.0..=1.0).contains(&p) {
                out.push(format!("entry ({}, {}) = {p} is outside [0, 1]", i + 1, j + 1));
            }
        }
        let total: f64 = row.iter().sum();
        if (total - 1.0).abs() > ROW_SUM_TOLERANCE {
            out.push(format!("row {} sums to {}", i + 1, total));
        }
    }
    out
}

/// A user and its total staking power in units of the minimum stake.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserProfile {
    pub id: usize,
    pub stake: u32,
}

/// How a user spreads its stake over oracles. All of a user's oracles
/// submit the same report.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Strategy {
    allocation: Vec<u32>,
}

impl Strategy {
    pub fn new(allocation: Vec<u32>) -> Result<Self> {
        if allocation.is_empty() {
            return Err(Error::InvalidStrategy("no oracles".into()));
        }
        if allocation.contains(&0) {
            return Err(Error::InvalidStrategy(
                "every oracle needs a stake of at least 1".into(),
            ));
        }
        Ok(Self { allocation })
    }

    /// All stake on one oracle.
    pub fn single(stake: u32) -> Result<Self> {
        Self::new(vec![stake])
    }

    /// `(s - c + 1, 1, ..., 1)`: everything above the minimum on the first
    /// oracle. This allocation maximizes the expected payoff among all
    /// integer allocations of `total_stake` over `oracle_count` oracles.
    pub fn concentrated(total_stake: u32, oracle_count: u32) -> Result<Self> {
        if oracle_count == 0 || oracle_count > total_stake {
            return Err(Error::InfeasibleOracleCount {
                total_stake,
                oracle_count,
            });
        }
        let mut allocation = vec![1; oracle_count as usize];
        allocation[0] = total_stake - oracle_count + 1;
        Ok(Self { allocation })
    }

    pub fn oracle_count(&self) -> u32 {
        self.allocation.len() as u32
    }

    pub fn allocation(&self) -> &[u32] {
        &self.allocation
    }

    pub fn total_stake(&self) -> u32 {
        self.allocation.iter().sum()
    }

    /// Concentrated form with the same oracle count and total stake.
    pub fn canonical(&self) -> Self {
        Self::concentrated(self.total_stake(), self.oracle_count())
            .expect("a valid strategy always has count <= total")
    }

    pub fn check_against(&self, user: &UserProfile) -> Result<()> {
        if self.total_stake() > user.stake {
            return Err(Error::InvalidStrategy(format!(
                "allocation totals {} but user {} holds {}",
                self.total_stake(),
                user.id,
                user.stake
            )));
        }
        Ok(())
    }
}

/// A validated system: prior, shared confusion matrix, users, and the task
/// reward `R`.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemConfig {
    prior: ClassPrior,
    confusion: ConfusionMatrix,
    users: Vec<UserProfile>,
    total_reward: f64,
}

impl SystemConfig {
    /// `users` may arrive in any order; ids must be exactly `1..=N`.
    pub fn new(
        prior: ClassPrior,
        confusion: ConfusionMatrix,
        mut users: Vec<UserProfile>,
        total_reward: f64,
    ) -> Result<Self> {
        let mut problems = Vec::new();
        if prior.num_classes() != confusion.num_classes() {
            problems.push(format!(
                "prior has {} classes, confusion matrix has {}",
                prior.num_classes(),
                confusion.num_classes()
            ));
        }
        problems.extend(user_violations(&users));
        if !(total_reward.is_finite() && total_reward > 0.0) {
            problems.push(format!("total_reward {total_reward} must be positive"));
        }
        if !problems.is_empty() {
            return Err(Error::InvalidConfig(problems));
        }
        users.sort_by_key(|u| u.id);
        Ok(Self {
            prior,
            confusion,
            users,
            total_reward,
        })
    }

    /// Uniform prior, `R = 1`, user ids assigned from the stake order.
    pub fn with_stakes(confusion: ConfusionMatrix, stakes: &[u32]) -> Result<Self> {
        let users = stakes
            .iter()
            .enumerate()
            .map(|(i, &stake)| UserProfile { id: i + 1, stake })
            .collect();
        Self::new(
            ClassPrior::uniform(confusion.num_classes()),
            confusion,
            users,
            1.0,
        )
    }

    pub fn num_classes(&self) -> usize {
        self.confusion.num_classes()
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn prior(&self) -> &ClassPrior {
        &self.prior
    }

    pub fn confusion(&self) -> &ConfusionMatrix {
        &self.confusion
    }

    pub fn users(&self) -> &[UserProfile] {
        &self.users
    }

    pub fn total_reward(&self) -> f64 {
        self.total_reward
    }

    pub fn stakes(&self) -> Vec<u32> {
        self.users.iter().map(|u| u.stake).collect()
    }

    pub fn user(&self, id: usize) -> Result<&UserProfile> {
        id.checked_sub(1)
            .and_then(|i| self.users.get(i))
            .ok_or(Error::UnknownUser(id))
    }

    /// Every user on a single oracle holding its full stake.
    pub fn single_oracle_strategies(&self) -> Vec<Strategy> {
        self.users
            .iter()
            .map(|u| Strategy::single(u.stake).expect("stakes are >= 1"))
            .collect()
    }

    /// Single-oracle strategies for everyone except `focal`, who runs
    /// `oracle_count` oracles with the concentrated allocation.
    pub fn mirroring_strategies(&self, focal: usize, oracle_count: u32) -> Result<Vec<Strategy>> {
        let user = self.user(focal)?;
        let mut strategies = self.single_oracle_strategies();
        strategies[focal - 1] = Strategy::concentrated(user.stake, oracle_count)?;
        Ok(strategies)
    }

    pub(crate) fn check_strategies(&self, strategies: &[Strategy]) -> Result<()> {
        if strategies.len() != self.users.len() {
            return Err(Error::InvalidStrategy(format!(
                "{} strategies for {} users",
                strategies.len(),
                self.users.len()
            )));
        }
        for (s, u) in strategies.iter().zip(&self.users) {
            s.check_against(u)?;
        }
        Ok(())
    }

    pub fn to_document(&self) -> ConfigDocument {
        ConfigDocument {
            num_classes: self.num_classes(),
            prior: (!self.prior.is_uniform()).then(|| self.prior.probabilities.clone()),
            confusion: self.confusion.rows(),
            users: self.users.clone(),
            total_reward: self.total_reward,
            experiment: None,
        }
    }
}

fn user_violations(users: &[UserProfile]) -> Vec<String> {
    let mut out = Vec::new();
    if users.is_empty() {
        out.push("no users".to_string());
    }
    let mut ids = BTreeSet::new();
    for u in users {
        if u.stake < 1 {
            out.push(format!("user {} has stake {}, minimum is 1", u.id, u.stake));
        }
        if !ids.insert(u.id) {
            out.push(format!("duplicate user id {}", u.id));
        }
    }
    if ids.len() == users.len() && !ids.iter().copied().eq(1..=users.len()) {
        out.push(format!("user ids must be 1..={}", users.len()));
    }
    out
}

fn default_reward() -> f64 {
    1.0
}

/// On-disk JSON form of a [`SystemConfig`], optionally carrying an
/// experiment section for sweeps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigDocument {
    pub num_classes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<Vec<f64>>,
    pub confusion: Vec<Vec<f64>>,
    pub users: Vec<UserProfile>,
    #[serde(default = "default_reward")]
    pub total_reward: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentSection>,
}

impl ConfigDocument {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config documents always serialize")
    }

    pub fn build(&self) -> Result<SystemConfig> {
        self.build_with(false)
    }

    /// With `renormalize`, confusion rows are rescaled to unit sum before
    /// validation instead of being rejected.
    pub fn build_with(&self, renormalize: bool) -> Result<SystemConfig> {
        let report = if renormalize {
            let mut doc = self.clone();
            doc.confusion = renormalize_rows(&doc.confusion);
            validate_config(&doc)
        } else {
            validate_config(self)
        };
        if !report.is_valid() {
            return Err(Error::InvalidConfig(report.violations));
        }
        let confusion = if renormalize {
            ConfusionMatrix::renormalized(self.confusion.clone())?
        } else {
            ConfusionMatrix::new(self.confusion.clone())?
        };
        let prior = match &self.prior {
            Some(p) => ClassPrior::new(p.clone())?,
            None => ClassPrior::uniform(self.num_classes),
        };
        SystemConfig::new(prior, confusion, self.users.clone(), self.total_reward)
    }
}

fn renormalize_rows(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|row| {
            let total: f64 = row.iter().sum();
            if total > 0.0 {
                row.iter().map(|p| p / total).collect()
            } else {
                row.clone()
            }
        })
        .collect()
}

/// Outcome of [`validate_config`]. An empty violation list means the
/// document builds into a [`SystemConfig`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<String>,
    /// `None` when the matrix is not square.
    pub weakly_accurate: Option<bool>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            writeln!(f, "valid: yes")?;
        } else {
            writeln!(f, "valid: no")?;
            for v in &self.violations {
                writeln!(f, "  - {v}")?;
            }
        }
        match self.weakly_accurate {
            Some(true) => writeln!(f, "weakly accurate: yes"),
            Some(false) => writeln!(f, "weakly accurate: no"),
            None => writeln!(f, "weakly accurate: n/a"),
        }
    }
}

/// Lists every violated model constraint in `doc`.
pub fn validate_config(doc: &ConfigDocument) -> ValidationReport {
    let mut violations = Vec::new();
    let k = doc.num_classes;
    if k == 0 {
        violations.push("num_classes must be at least 1".to_string());
    }
    if doc.confusion.len() != k {
        violations.push(format!(
            "confusion matrix has {} rows, num_classes is {k}",
            doc.confusion.len()
        ));
    }
    violations.extend(confusion_violations(&doc.confusion));
    if let Some(prior) = &doc.prior {
        if let Err(e) = ClassPrior::new(prior.clone()) {
            violations.push(e.to_string());
        }
        if prior.len() != k {
            violations.push(format!("prior has {} entries, num_classes is {k}", prior.len()));
        }
    }
    violations.extend(user_violations(&doc.users));
    if !(doc.total_reward.is_finite() && doc.total_reward > 0.0) {
        violations.push(format!("total_reward {} must be positive", doc.total_reward));
    }
    let square = !doc.confusion.is_empty()
        && doc.confusion.iter().all(|r| r.len() == doc.confusion.len());
    let weakly_accurate =
        square.then(|| rows_weakly_accurate(doc.confusion.iter().map(Vec::as_slice)));
    ValidationReport {
        violations,
        weakly_accurate,
    }
}

/// Inverse-CDF draw from one matrix row.
#[inline]
pub(crate) fn draw_from_row<R: Rng + ?Sized>(row: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (l, &p) in row.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = l;
            if u < acc {
                return l;
            }
        }
    }
    last_positive
}

/// Draws an oracle report for the given truth.
pub fn sample_report<R: Rng + ?Sized>(
    confusion: &ConfusionMatrix,
    truth: ClassLabel,
    rng: &mut R,
) -> Result<ClassLabel> {
    let k = confusion.num_classes();
    if truth.get() == 0 || truth.get() > k {
        return Err(Error::LabelOutOfRange {
            label: truth.get(),
            num_classes: k,
        });
    }
    Ok(ClassLabel::from_index(draw_from_row(
        confusion.row(truth.index()),
        rng,
    )))
}

/// The 5x5 confusion matrix estimated from the Twitter sentiment corpus,
/// rows indexed by the gold label.
pub fn sentiment_confusion() -> ConfusionMatrix {
    ConfusionMatrix::new(vec![
        vec![0.6439, 0.0705, 0.0354, 0.0592, 0.1910],
        vec![0.1009, 0.5070, 0.0451, 0.1103, 0.2367],
        vec![0.0611, 0.0930, 0.5749, 0.0783, 0.1927],
        vec![0.0333, 0.0549, 0.0475, 0.8072, 0.0571],
        vec![0.1147, 0.2231, 0.0550, 0.1598, 0.4474],
    ])
    .expect("reference matrix is row-stochastic")
}

/// Stakes of the ten-user reference network.
pub const REFERENCE_STAKES: [u32; 10] = [8, 5, 3, 8, 4, 7, 6, 5, 7, 2];

/// Ten users with [`REFERENCE_STAKES`], the sentiment matrix, uniform prior,
/// `R = 1`.
pub fn reference_config() -> SystemConfig {
    SystemConfig::with_stakes(sentiment_confusion(), &REFERENCE_STAKES)
        .expect("reference config is valid")
}
