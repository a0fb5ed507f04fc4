//! Retrieval-based evaluation: stratified split, top-K majority vote and
//! classification metrics with malignant as the positive class.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::betti::{descriptor, BettiCurveSpec, RangePolicy, TopoDescriptor};
use crate::dataset::{DatasetRecord, Label, Magnification};
use crate::error::{Error, Result};
use crate::image::{load_image, resize};
use crate::index::Index;
use crate::retrieval::{top_k, QuerySpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    pub stratify_by_label: bool,
}

impl SplitSpec {
    pub fn new(train_fraction: f64, seed: u64, stratify_by_label: bool) -> Result<Self> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "train fraction must be in (0, 1), got {train_fraction}"
            )));
        }
        Ok(Self {
            train_fraction,
            seed,
            stratify_by_label,
        })
    }
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            seed: 42,
            stratify_by_label: true,
        }
    }
}

/// Deterministic train/test split. Both halves keep the input order.
///
/// Each group (one per label when stratified) contributes
/// `round(fraction * n)` records to train, clamped so that both sides get at
/// least one record.
pub fn split(
    records: &[DatasetRecord],
    spec: &SplitSpec,
) -> Result<(Vec<DatasetRecord>, Vec<DatasetRecord>)> {
    let mut groups: BTreeMap<Option<Label>, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        let key = spec.stratify_by_label.then_some(r.label);
        groups.entry(key).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut in_train = vec![false; records.len()];
    for (key, mut members) in groups {
        let n = members.len();
        if n < 2 {
            return Err(Error::InsufficientData(match key {
                Some(label) => format!("need at least 2 {label} records to split, found {n}"),
                None => format!("need at least 2 records to split, found {n}"),
            }));
        }
        let n_train = ((spec.train_fraction * n as f64).round() as usize).clamp(1, n - 1);
        members.shuffle(&mut rng);
        for &i in &members[..n_train] {
            in_train[i] = true;
        }
    }
    let (train, test): (Vec<_>, Vec<_>) = records.iter().zip(&in_train).partition(|(_, &t)| t);
    Ok((
        train.into_iter().map(|(r, _)| r.clone()).collect(),
        test.into_iter().map(|(r, _)| r.clone()).collect(),
    ))
}

/// Most frequent label among ranked neighbors; a tie goes to the tied label
/// that appears first in the ranking (the nearest neighbor's, when it is tied).
pub fn majority_vote(neighbors: &[(Label, f64)]) -> Result<Label> {
    if neighbors.is_empty() {
        return Err(Error::EmptyNeighborList);
    }
    let mut counts: BTreeMap<Label, usize> = BTreeMap::new();
    for (label, _) in neighbors {
        *counts.entry(*label).or_insert(0) += 1;
    }
    let best = counts.values().copied().max().unwrap_or(0);
    Ok(neighbors
        .iter()
        .map(|(l, _)| *l)
        .find(|l| counts[l] == best)
        .expect("the most frequent label occurs in the list"))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn record(&mut self, predicted: Label, truth: Label) {
        let (p, t) = (predicted == Label::Malignant, truth == Label::Malignant);
        match (p, t) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Metrics for one (magnification, K) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub magnification: String,
    pub k: usize,
    pub accuracy: f64,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub mean_precision_at_k: f64,
    pub queries: usize,
    pub confusion: Confusion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub resolution: usize,
    pub range_policy: RangePolicy,
    pub resize: (usize, usize),
    pub positive_class: Label,
    pub aggregation: String,
    pub split: Option<SplitSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub meta: ReportMeta,
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn with_split(mut self, split: SplitSpec) -> Self {
        self.meta.split = Some(split);
        self
    }

    /// Appends the rows of another report computed under the same settings.
    pub fn extend(&mut self, other: EvalReport) {
        self.rows.extend(other.rows);
    }
}

/// Label of the magnification column: the shared magnification of all
/// queries, or `all` when they are mixed.
pub fn magnification_scope(records: &[DatasetRecord]) -> String {
    let mut mags = records.iter().map(|r| r.magnification);
    match mags.next() {
        Some(first) if mags.all(|m| m == first) => match first.factor() {
            Some(z) => z.to_string(),
            None => Magnification::Unspecified.to_string(),
        },
        _ => "all".to_string(),
    }
}

/// Computes the descriptors of `records` (resolved against `root`) with the
/// index's spec and resize dimensions, preserving order.
pub fn describe_records(
    ix: &Index,
    root: &Path,
    records: &[DatasetRecord],
    workers: usize,
) -> Result<Vec<TopoDescriptor>> {
    let (w, h) = ix.resize_dims();
    let spec = *ix.spec();
    let one = |r: &DatasetRecord| -> Result<TopoDescriptor> {
        let img = load_image(&root.join(&r.path))?;
        Ok(descriptor(&resize(&img, w, h)?, &spec))
    };
    if workers <= 1 {
        return records.iter().map(one).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
    pool.install(|| records.par_iter().map(one).collect())
}

/// Scores already-computed query descriptors against `train_index` for every K.
pub fn evaluate_descriptors(
    train_index: &Index,
    test: &[DatasetRecord],
    queries: &[TopoDescriptor],
    ks: &[usize],
) -> Result<EvalReport> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::InvalidArgument("K values must be positive".into()));
    }
    if test.is_empty() {
        return Err(Error::InsufficientData("no test records".into()));
    }
    if test.len() != queries.len() {
        return Err(Error::DimensionMismatch {
            expected: test.len(),
            actual: queries.len(),
        });
    }
    let max_k = *ks.iter().max().expect("ks is nonempty");
    let query_spec = QuerySpec::new(max_k)?;
    let neighbors: Vec<Vec<(Label, f64)>> = queries
        .par_iter()
        .map(|q| {
            top_k(train_index, q, &query_spec)
                .map(|res| res.into_iter().map(|r| (r.label, r.distance)).collect())
        })
        .collect::<Result<_>>()?;

    let scope = magnification_scope(test);
    let mut rows = Vec::with_capacity(ks.len());
    for &k in ks {
        let mut confusion = Confusion::default();
        let mut correct = 0usize;
        let mut precision_sum = 0.0;
        for (record, ranked) in test.iter().zip(&neighbors) {
            let top = &ranked[..k.min(ranked.len())];
            let predicted = majority_vote(top)?;
            confusion.record(predicted, record.label);
            correct += usize::from(predicted == record.label);
            let same = top.iter().filter(|(l, _)| *l == record.label).count();
            precision_sum += same as f64 / k as f64;
        }
        let n = test.len();
        rows.push(EvalRow {
            magnification: scope.clone(),
            k,
            accuracy: correct as f64 / n as f64,
            recall: confusion.recall(),
            precision: confusion.precision(),
            f1: confusion.f1(),
            mean_precision_at_k: precision_sum / n as f64,
            queries: n,
            confusion,
        });
    }
    Ok(EvalReport {
        meta: ReportMeta {
            resolution: train_index.spec().resolution(),
            range_policy: train_index.spec().range_policy(),
            resize: train_index.resize_dims(),
            positive_class: Label::Malignant,
            aggregation: "majority_vote".into(),
            split: None,
        },
        rows,
    })
}

/// Describes each test image, retrieves its top-K from `train_index` and
/// scores the majority-vote predictions, once per K.
pub fn evaluate(
    train_index: &Index,
    root: &Path,
    test: &[DatasetRecord],
    ks: &[usize],
    spec: &BettiCurveSpec,
    workers: usize,
) -> Result<EvalReport> {
    if spec != train_index.spec() {
        return Err(Error::InvalidArgument(format!(
            "query spec {spec:?} differs from the index spec {:?}",
            train_index.spec()
        )));
    }
    let queries = describe_records(train_index, root, test, workers)?;
    evaluate_descriptors(train_index, test, &queries, ks)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "json" => Ok(ReportFormat::Json),
            other => Err(format!("unknown report format {other:?}")),
        }
    }
}

pub const REPORT_COLUMNS: [&str; 8] = [
    "magnification",
    "K",
    "accuracy",
    "recall",
    "precision",
    "f1",
    "mean_precision_at_k",
    "queries",
];

/// Four decimals; exact binary ties round half to even.
pub fn format_metric(x: f64) -> String {
    format!("{x:.4}")
}

fn row_cells(row: &EvalRow) -> [String; 8] {
    [
        row.magnification.clone(),
        row.k.to_string(),
        format_metric(row.accuracy),
        format_metric(row.recall),
        format_metric(row.precision),
        format_metric(row.f1),
        format_metric(row.mean_precision_at_k),
        row.queries.to_string(),
    ]
}

pub fn render_report(report: &EvalReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => {
            let mut out = REPORT_COLUMNS.join(",");
            out.push('\n');
            for row in &report.rows {
                out.push_str(&row_cells(row).join(","));
                out.push('\n');
            }
            out
        }
        ReportFormat::Markdown => {
            let mut out = String::new();
            let _ = writeln!(out, "| {} |", REPORT_COLUMNS.join(" | "));
            let _ = writeln!(out, "|{}", "---|".repeat(REPORT_COLUMNS.len()));
            for row in &report.rows {
                let _ = writeln!(out, "| {} |", row_cells(row).join(" | "));
            }
            out
        }
        ReportFormat::Json => {
            serde_json::to_string_pretty(report).expect("report serializes") + "\n"
        }
    }
}
