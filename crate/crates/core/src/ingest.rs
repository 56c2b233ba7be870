//! Confusion-matrix estimation from crowdsourced annotations with gold
//! labels.
//!
//! Records without a gold label are discarded, then annotators covering too
//! small a fraction of the gold-labeled tasks. The surviving records are
//! pooled across annotators (oracles are modeled as identically
//! distributed) and each gold row is normalized.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ClassLabel, ConfusionMatrix};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnnotationRecord {
    pub task_id: String,
    pub annotator_id: String,
    pub label: ClassLabel,
    pub gold_label: Option<ClassLabel>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IngestSettings {
    /// Fraction of gold-labeled tasks an annotator must cover.
    pub min_participation: f64,
    /// Pseudo-count added to every cell before normalizing.
    pub smoothing: f64,
    /// Raw label string to 1-based class. Empty means labels are integers.
    pub label_map: HashMap<String, usize>,
}

impl Default for IngestSettings {
    fn default() -> Self {
        Self {
            min_participation: 0.1,
            smoothing: 0.0,
            label_map: HashMap::new(),
        }
    }
}

impl IngestSettings {
    fn validate(&self) -> Result<()> {
        if !(self.min_participation > 0.0 && self.min_participation <= 1.0) {
            return Err(Error::Ingest(format!(
                "min_participation {} must be in (0, 1]",
                self.min_participation
            )));
        }
        if !(self.smoothing.is_finite() && self.smoothing >= 0.0) {
            return Err(Error::Ingest(format!(
                "smoothing {} must be nonnegative",
                self.smoothing
            )));
        }
        Ok(())
    }

    fn map_label(&self, raw: &str, num_classes: usize) -> Result<ClassLabel> {
        let raw = raw.trim();
        let value = if self.label_map.is_empty() {
            raw.parse::<usize>()
                .map_err(|_| Error::Ingest(format!("label {raw:?} is not a class number")))?
        } else {
            *self
                .label_map
                .get(raw)
                .ok_or_else(|| Error::Ingest(format!("label {raw:?} not in label map")))?
        };
        ClassLabel::new(value, num_classes)
    }
}

#[derive(Deserialize)]
struct RawRecord {
    task_id: String,
    annotator_id: String,
    label: String,
    #[serde(default)]
    gold_label: Option<String>,
}

/// Reads `task_id,annotator_id,label,gold_label` rows. An empty gold field
/// means the record has no gold label.
pub fn read_annotations<R: Read>(
    input: R,
    num_classes: usize,
    settings: &IngestSettings,
) -> Result<Vec<AnnotationRecord>> {
    let mut reader = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for row in reader.deserialize::<RawRecord>() {
        let row = row?;
        let gold_label = match row.gold_label.as_deref().map(str::trim) {
            None | Some("") => None,
            Some(g) => Some(settings.map_label(g, num_classes)?),
        };
        out.push(AnnotationRecord {
            label: settings.map_label(&row.label, num_classes)?,
            task_id: row.task_id,
            annotator_id: row.annotator_id,
            gold_label,
        });
    }
    Ok(out)
}

/// Writes records back in the input CSV layout with numeric labels.
pub fn write_annotations<W: std::io::Write>(records: &[AnnotationRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["task_id", "annotator_id", "label", "gold_label"])?;
    for r in records {
        w.write_record([
            r.task_id.as_str(),
            r.annotator_id.as_str(),
            &r.label.get().to_string(),
            &r.gold_label.map(|g| g.get().to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IngestReport {
    pub total_records: usize,
    pub records_without_gold: usize,
    pub gold_labeled_tasks: usize,
    /// What the participation fraction is measured against.
    pub participation_basis: String,
    /// Minimum number of distinct gold-labeled tasks to keep an annotator.
    pub participation_threshold: f64,
    pub dropped_annotators: Vec<String>,
    pub records_from_dropped_annotators: usize,
    pub records_used: usize,
    /// Surviving records per gold class, before smoothing.
    pub row_counts: Vec<u64>,
}

/// Pooled gold-vs-label estimate. Also returns the surviving records.
pub fn estimate_confusion_with_survivors(
    records: &[AnnotationRecord],
    settings: &IngestSettings,
    num_classes: usize,
) -> Result<(ConfusionMatrix, IngestReport, Vec<AnnotationRecord>)> {
    settings.validate()?;
    if num_classes < 2 {
        return Err(Error::Ingest("need at least two classes".into()));
    }
    for r in records {
        for l in std::iter::once(r.label).chain(r.gold_label) {
            if l.get() > num_classes {
                return Err(Error::LabelOutOfRange {
                    label: l.get(),
                    num_classes,
                });
            }
        }
    }

    let gold: Vec<&AnnotationRecord> = records.iter().filter(|r| r.gold_label.is_some()).collect();
    let gold_tasks: BTreeSet<&str> = gold.iter().map(|r| r.task_id.as_str()).collect();
    let mut coverage: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for r in &gold {
        coverage
            .entry(r.annotator_id.as_str())
            .or_default()
            .insert(r.task_id.as_str());
    }
    let threshold = settings.min_participation * gold_tasks.len() as f64;
    let dropped: BTreeSet<&str> = coverage
        .iter()
        .filter(|(_, tasks)| (tasks.len() as f64) < threshold)
        .map(|(a, _)| *a)
        .collect();

    let survivors: Vec<AnnotationRecord> = gold
        .iter()
        .filter(|r| !dropped.contains(r.annotator_id.as_str()))
        .map(|r| (*r).clone())
        .collect();
    if survivors.is_empty() {
        return Err(Error::Ingest("no records left after filtering".into()));
    }

    let k = num_classes;
    let mut counts = vec![0u64; k * k];
    for r in &survivors {
        let g = r.gold_label.expect("survivors are gold-labeled").index();
        counts[g * k + r.label.index()] += 1;
    }
    let row_counts: Vec<u64> = counts.chunks(k).map(|row| row.iter().sum()).collect();
    let mut rows = Vec::with_capacity(k);
    for (g, row) in counts.chunks(k).enumerate() {
        let total = row_counts[g] as f64 + settings.smoothing * k as f64;
        if total == 0.0 {
            return Err(Error::Ingest(format!(
                "gold class {} has no records and smoothing is 0",
                g + 1
            )));
        }
        rows.push(
            row.iter()
                .map(|&c| (c as f64 + settings.smoothing) / total)
                .collect(),
        );
    }
    let matrix = ConfusionMatrix::new(rows)?;
    let report = IngestReport {
        total_records: records.len(),
        records_without_gold: records.len() - gold.len(),
        gold_labeled_tasks: gold_tasks.len(),
        participation_basis: "distinct gold-labeled tasks".to_string(),
        participation_threshold: threshold,
        records_from_dropped_annotators: gold.len() - survivors.len(),
        dropped_annotators: dropped.iter().map(|s| s.to_string()).collect(),
        records_used: survivors.len(),
        row_counts,
    };
    Ok((matrix, report, survivors))
}

pub fn estimate_confusion(
    records: &[AnnotationRecord],
    settings: &IngestSettings,
    num_classes: usize,
) -> Result<(ConfusionMatrix, IngestReport)> {
    let (m, r, _) = estimate_confusion_with_survivors(records, settings, num_classes)?;
    Ok((m, r))
}
