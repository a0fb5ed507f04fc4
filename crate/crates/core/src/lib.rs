//! Training-free content-based image retrieval over topological fingerprints.
//!
//! Each RGB image is split into its three channels. Every channel is read as
//! a sublevel-filtered cubical complex (pixels are the top cells, faces take
//! the minimum of their incident pixels) and its one-dimensional persistence
//! is computed. The loop intervals are sampled into a Betti curve of `R`
//! points; the three curves concatenated form a `3R`-length descriptor.
//! Retrieval is an exact Euclidean top-K scan over an index of descriptors.
//!
//! The pipeline is split into:
//!
//! * [`image`] - decoding, deterministic bilinear resizing and channel splitting.
//! * [`dataset`] - discovery and labeling of dataset files.
//! * [`cubical`] - filtration construction, persistence and a reference reduction.
//! * [`betti`] - Betti-curve sampling and descriptor assembly.
//! * [`index`] - batch extraction and the `.thir` binary index format.
//! * [`retrieval`] - exact top-K search.
//! * [`eval`] - split, retrieval-based classification metrics and reports.
//! * [`synthetic`] - generated images with known topology.

pub mod betti;
pub mod cubical;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod image;
pub mod index;
pub mod retrieval;
pub mod synthetic;

pub use betti::{
    betti_curve, channel_descriptor, descriptor, image_topology, BettiCurve, BettiCurveSpec,
    ImageTopology, RangePolicy, TopoDescriptor,
};
pub use cubical::{
    build_filtration, compute_persistence, oracle_persistence, CubicalFiltration, Death,
    PersistenceDiagram, PersistencePair,
};
pub use dataset::{scan_dataset, DatasetRecord, Label, Magnification};
pub use error::{Error, Result};
pub use eval::{
    evaluate, majority_vote, render_report, split, EvalReport, ReportFormat, SplitSpec,
};
pub use image::{load_image, resize, split_channels, ChannelGrid, RgbImageGrid};
pub use index::{build_index, load_index, save_index, BuildMode, Index, IndexEntry, IndexStats};
pub use retrieval::{euclidean, top_k, QuerySpec, RankedResult};
