use std::fmt::Write as _;

use crate::kv::{self, KvDoc};
use crate::sim::EmotionLabel;

/// Sample mean and sample standard deviation (n - 1). The deviation is 0 for
/// fewer than two values.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Rows are true classes, columns predictions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion(pub [[u64; 4]; 4]);

impl Confusion {
    pub fn add(&mut self, truth: usize, predicted: usize) {
        self.0[truth][predicted] += 1;
    }

    pub fn merge(&mut self, other: &Confusion) {
        for (r, o) in self.0.iter_mut().zip(&other.0) {
            for (a, b) in r.iter_mut().zip(o) {
                *a += b;
            }
        }
    }

    pub fn total(&self) -> u64 {
        self.0.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..4).map(|i| self.0[i][i]).sum()
    }

    pub fn row_sums(&self) -> [u64; 4] {
        std::array::from_fn(|i| self.0[i].iter().sum())
    }

    pub fn accuracy(&self) -> f64 {
        self.trace() as f64 / self.total() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub subject_id: usize,
    pub seed: u64,
    pub confusion: Confusion,
    /// Pooled over all validation folds: trace / total.
    pub accuracy: f64,
    pub per_fold_accuracies: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    /// Model and training settings, echoed into the report.
    pub config: KvDoc,
}

impl EvalReport {
    pub fn from_folds(subject_id: usize, seed: u64, folds: &[(f64, Confusion)], config: KvDoc) -> Self {
        let mut confusion = Confusion::default();
        for (_, c) in folds {
            confusion.merge(c);
        }
        let per_fold_accuracies: Vec<f64> = folds.iter().map(|(a, _)| *a).collect();
        let (mean, std) = mean_std(&per_fold_accuracies);
        Self {
            subject_id,
            seed,
            accuracy: confusion.accuracy(),
            confusion,
            per_fold_accuracies,
            mean,
            std,
            config,
        }
    }

    /// Structured form: `subject`, `seed`, `folds`, `fold_accuracies`
    /// (comma-joined), `mean`, `std`, `accuracy`, `confusion.<true>.<pred>`
    /// counts by class name, then the configuration keys.
    pub fn to_kv(&self) -> KvDoc {
        let mut d = KvDoc::new();
        d.set("subject", self.subject_id);
        d.set("seed", self.seed);
        d.set("folds", self.per_fold_accuracies.len());
        d.set("fold_accuracies", kv::join(self.per_fold_accuracies.iter().map(|a| format!("{a:.6}"))));
        d.set("mean", format!("{:.6}", self.mean));
        d.set("std", format!("{:.6}", self.std));
        d.set("accuracy", format!("{:.6}", self.accuracy));
        for (t, lt) in EmotionLabel::ALL.iter().enumerate() {
            for (p, lp) in EmotionLabel::ALL.iter().enumerate() {
                d.set(&format!("confusion.{lt}.{lp}"), self.confusion.0[t][p]);
            }
        }
        for (k, v) in self.config.iter() {
            d.set(k, v);
        }
        d
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "subject {}  seed {}  {} folds",
            self.subject_id,
            self.seed,
            self.per_fold_accuracies.len()
        );
        let folds: Vec<String> = self.per_fold_accuracies.iter().map(|a| format!("{a:.4}")).collect();
        let _ = writeln!(s, "fold accuracy: {}", folds.join(" "));
        let _ = writeln!(
            s,
            "mean {:.4}  std {:.4}  pooled {:.4}",
            self.mean, self.std, self.accuracy
        );
        let _ = writeln!(s, "confusion (rows true, columns predicted):");
        let _ = write!(s, "{:>10}", "");
        for l in EmotionLabel::ALL {
            let _ = write!(s, "{:>10}", l.name());
        }
        s.push('\n');
        for (t, l) in EmotionLabel::ALL.iter().enumerate() {
            let _ = write!(s, "{:>10}", l.name());
            for p in 0..4 {
                let _ = write!(s, "{:>10}", self.confusion.0[t][p]);
            }
            s.push('\n');
        }
        s
    }
}

/// Across-subject mean and std of per-subject mean accuracies.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectSummary {
    pub subject_means: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl SubjectSummary {
    pub fn new(reports: &[EvalReport]) -> Self {
        let subject_means: Vec<f64> = reports.iter().map(|r| r.mean).collect();
        let (mean, std) = mean_std(&subject_means);
        Self { subject_means, mean, std }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationReport {
    /// `(name, report)` in the order run.
    pub rows: Vec<(String, EvalReport)>,
}

impl AblationReport {
    pub fn get(&self, name: &str) -> Option<&EvalReport> {
        self.rows.iter().find(|(n, _)| n == name).map(|(_, r)| r)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{:<16}{:>10}{:>10}{:>10}\n", "configuration", "mean", "std", "pooled");
        for (name, r) in &self.rows {
            let _ = writeln!(s, "{name:<16}{:>10.4}{:>10.4}{:>10.4}", r.mean, r.std, r.accuracy);
        }
        s
    }

    pub fn to_kv(&self) -> KvDoc {
        let mut d = KvDoc::new();
        d.set("configurations", kv::join(self.rows.iter().map(|(n, _)| n.as_str())));
        for (name, r) in &self.rows {
            d.set(&format!("{name}.mean"), format!("{:.6}", r.mean));
            d.set(&format!("{name}.std"), format!("{:.6}", r.std));
            d.set(&format!("{name}.accuracy"), format!("{:.6}", r.accuracy));
            d.set(
                &format!("{name}.fold_accuracies"),
                kv::join(r.per_fold_accuracies.iter().map(|a| format!("{a:.6}"))),
            );
        }
        d
    }
}
