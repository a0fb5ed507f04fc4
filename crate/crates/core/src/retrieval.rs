//! Online phase: exact Euclidean top-K search.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::betti::TopoDescriptor;
use crate::dataset::{Label, Magnification};
use crate::error::{Error, Result};
use crate::index::Index;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuerySpec {
    pub k: usize,
    pub exclude_ids: BTreeSet<u32>,
    /// Compare L2-normalized descriptors instead of raw counts.
    pub normalize: bool,
}

impl QuerySpec {
    pub fn new(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        Ok(Self {
            k,
            exclude_ids: BTreeSet::new(),
            normalize: false,
        })
    }

    pub fn excluding(mut self, ids: impl IntoIterator<Item = u32>) -> Self {
        self.exclude_ids.extend(ids);
        self
    }

    pub fn normalized(mut self, normalize: bool) -> Self {
        self.normalize = normalize;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedResult {
    pub entry_id: u32,
    pub distance: f64,
    pub label: Label,
    pub magnification: Magnification,
    pub path: PathBuf,
}

/// Euclidean distance, accumulated in `f64`.
pub fn euclidean(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(squared_distance(a, b).sqrt())
}

fn squared_distance(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum()
}

fn norm(a: &[f32]) -> f64 {
    a.iter()
        .map(|&x| (x as f64) * (x as f64))
        .sum::<f64>()
        .sqrt()
}

/// Distance between `a / |a|` and `b / |b|`; a zero vector stays zero.
fn normalized_distance(a: &[f32], a_norm: f64, b: &[f32]) -> f64 {
    let b_norm = norm(b);
    let scale = |n: f64| if n > 0.0 { 1.0 / n } else { 0.0 };
    let (sa, sb) = (scale(a_norm), scale(b_norm));
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 * sa - y as f64 * sb;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

fn rank_order(a: &(f64, u32), b: &(f64, u32)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// The `k` nearest entries by exhaustive scan, ordered by (distance, id).
pub fn top_k(ix: &Index, query: &TopoDescriptor, spec: &QuerySpec) -> Result<Vec<RankedResult>> {
    if ix.is_empty() {
        return Err(Error::EmptyIndex);
    }
    if query.len() != ix.dim() {
        return Err(Error::DimensionMismatch {
            expected: ix.dim(),
            actual: query.len(),
        });
    }
    if spec.k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let q = query.as_slice();
    let q_norm = norm(q);
    let mut scored: Vec<(f64, u32)> = ix
        .entries()
        .iter()
        .filter(|e| !spec.exclude_ids.contains(&e.record.id))
        .map(|e| {
            let d = e.descriptor.as_slice();
            let dist = if spec.normalize {
                normalized_distance(q, q_norm, d)
            } else {
                squared_distance(q, d).sqrt()
            };
            (dist, e.record.id)
        })
        .collect();
    if spec.k < scored.len() {
        scored.select_nth_unstable_by(spec.k - 1, rank_order);
        scored.truncate(spec.k);
    }
    scored.sort_unstable_by(rank_order);
    Ok(scored
        .into_iter()
        .map(|(distance, id)| {
            let r = &ix.entries()[id as usize].record;
            RankedResult {
                entry_id: id,
                distance,
                label: r.label,
                magnification: r.magnification,
                path: r.path.clone(),
            }
        })
        .collect())
}
