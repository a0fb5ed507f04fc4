//! JSON bodies shared by the HTTP API and `thir query --format json`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thir_core::{
    image_topology, resize, top_k, Index, Label, Magnification, QuerySpec, RgbImageGrid,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub id: u32,
    pub label: Label,
    pub magnification: Magnification,
    pub distance: f64,
    pub image_url: String,
}

/// Query descriptor plus the sample points of each channel's curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryCurves {
    pub values: Vec<f32>,
    pub samples: [Vec<f64>; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResponse {
    pub k: usize,
    pub results: Vec<QueryResult>,
    pub query_curves: QueryCurves,
    /// One `3R` descriptor per result, in result order.
    pub result_curves: Vec<Vec<f32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryCurves {
    pub id: u32,
    pub label: Label,
    pub magnification: Magnification,
    pub resolution: usize,
    pub values: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsResponse {
    pub entries: usize,
    pub resolution: usize,
    pub dim: usize,
    pub labels: BTreeMap<String, usize>,
    pub magnifications: BTreeMap<String, usize>,
}

pub fn image_url(id: u32) -> String {
    format!("/api/images/{id}")
}

/// Describes `img` with the index's own spec and resize dims and ranks the index against it.
pub fn query_response(
    ix: &Index,
    img: &RgbImageGrid,
    k: usize,
    normalize: bool,
) -> thir_core::Result<QueryResponse> {
    let spec = QuerySpec::new(k)?.normalized(normalize);
    let (w, h) = ix.resize_dims();
    let topology = image_topology(&resize(img, w, h)?, ix.spec());
    let descriptor = topology.descriptor();
    let ranked = top_k(ix, &descriptor, &spec)?;

    let result_curves = ranked
        .iter()
        .map(|r| ix.entries()[r.entry_id as usize].descriptor.0.clone())
        .collect();
    let results = ranked
        .into_iter()
        .map(|r| QueryResult {
            id: r.entry_id,
            label: r.label,
            magnification: r.magnification,
            distance: r.distance,
            image_url: image_url(r.entry_id),
        })
        .collect();
    let [r, g, b] = topology.curves;
    Ok(QueryResponse {
        k,
        results,
        query_curves: QueryCurves {
            values: descriptor.0,
            samples: [r.samples, g.samples, b.samples],
        },
        result_curves,
    })
}

pub fn entry_curves(ix: &Index, id: u32) -> Option<EntryCurves> {
    let e = ix.get(id as usize)?;
    Some(EntryCurves {
        id,
        label: e.record.label,
        magnification: e.record.magnification,
        resolution: ix.spec().resolution(),
        values: e.descriptor.0.clone(),
    })
}

/// Magnification keys are `"40"` .. `"400"` or `"unspecified"`.
pub fn stats_response(ix: &Index) -> StatsResponse {
    let s = ix.stats();
    StatsResponse {
        entries: s.entries,
        resolution: s.resolution,
        dim: s.dim,
        labels: [Label::Benign, Label::Malignant, Label::Unknown]
            .into_iter()
            .map(|l| (l.as_str().to_string(), s.label_count(l)))
            .collect(),
        magnifications: s
            .magnifications
            .iter()
            .map(|(m, &n)| {
                let key = m
                    .factor()
                    .map_or("unspecified".to_string(), |z| z.to_string());
                (key, n)
            })
            .collect(),
    }
}
