#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use feedsim_core::{
    sample_report, AnnotationRecord, ClassLabel, ClassPrior, ConfusionMatrix, SystemConfig,
    UserProfile,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

pub fn feedsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_feedsim"))
        .args(args)
        .env("SOURCE_DATE_EPOCH", "1700000000")
        .output()
        .expect("binary runs")
}

pub fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

pub fn reference_json() -> String {
    feedsim_core::reference_config().to_document().to_json_pretty()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, k: usize) -> ConfusionMatrix {
    let rows = (0..k)
        .map(|t| {
            (0..k)
                .map(|y| {
                    let base = rng.gen_range(0.05..1.0);
                    if y == t {
                        base + rng.gen_range(0.5..2.0)
                    } else {
                        base
                    }
                })
                .collect()
        })
        .collect();
    ConfusionMatrix::renormalized(rows).unwrap()
}

/// Uniform prior, `R = 1`, `2..=max_users` users, `2..=max_k` classes.
pub fn random_config(rng: &mut ChaCha8Rng, max_users: usize, max_k: usize, max_stake: u32) -> SystemConfig {
    let k = rng.gen_range(2..=max_k);
    let n = rng.gen_range(2..=max_users);
    let users = (1..=n)
        .map(|id| UserProfile {
            id,
            stake: rng.gen_range(1..=max_stake),
        })
        .collect();
    SystemConfig::new(ClassPrior::uniform(k), random_matrix(rng, k), users, 1.0).unwrap()
}

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

/// `tasks` gold-labeled tasks with `per_task` labels each from 40 regular
/// annotators, plus a `drifter` who labels the first `drifter_tasks` tasks.
pub fn corpus(
    cm: &ConfusionMatrix,
    tasks: usize,
    per_task: usize,
    drifter_tasks: usize,
    seed: u64,
) -> Vec<AnnotationRecord> {
    let k = cm.num_classes();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(tasks * per_task + drifter_tasks);
    for t in 0..tasks {
        let gold = ClassLabel::new(rng.gen_range(1..=k), k).unwrap();
        for j in 0..per_task {
            out.push(AnnotationRecord {
                task_id: format!("t{t}"),
                annotator_id: format!("a{}", (t + j) % 40),
                label: sample_report(cm, gold, &mut rng).unwrap(),
                gold_label: Some(gold),
            });
        }
        if t < drifter_tasks {
            out.push(AnnotationRecord {
                task_id: format!("t{t}"),
                annotator_id: "drifter".into(),
                label: ClassLabel::new(if gold.get() == 1 { 2 } else { 1 }, k).unwrap(),
                gold_label: Some(gold),
            });
        }
    }
    out
}
