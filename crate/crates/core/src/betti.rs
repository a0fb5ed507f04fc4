//! Betti curves of loop (dimension 1) intervals and the per-image descriptor.

use serde::{Deserialize, Serialize};

use crate::cubical::{build_filtration, compute_persistence, PersistenceDiagram};
use crate::error::{Error, Result};
use crate::image::{split_channels, ChannelGrid, RgbImageGrid};

/// How the sampling range of a Betti curve is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RangePolicy {
    /// Minimum birth to maximum death of the channel's own loops.
    #[default]
    PerChannelMinMax,
    /// The full 8-bit scale `[0, 255]`, identical for every image.
    FixedFullScale,
}

impl RangePolicy {
    pub fn code(self) -> u8 {
        match self {
            RangePolicy::PerChannelMinMax => 0,
            RangePolicy::FixedFullScale => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(RangePolicy::PerChannelMinMax),
            1 => Some(RangePolicy::FixedFullScale),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BettiCurveSpec {
    resolution: usize,
    range_policy: RangePolicy,
}

impl BettiCurveSpec {
    pub const DEFAULT_RESOLUTION: usize = 200;

    /// `resolution` must be in `1..=65535` (it is stored as a u16 in index files).
    pub fn new(resolution: usize, range_policy: RangePolicy) -> Result<Self> {
        if resolution == 0 || resolution > u16::MAX as usize {
            return Err(Error::InvalidArgument(format!(
                "resolution must be in 1..=65535, got {resolution}"
            )));
        }
        Ok(Self {
            resolution,
            range_policy,
        })
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn range_policy(&self) -> RangePolicy {
        self.range_policy
    }

    /// Descriptor length, three channels of `resolution` samples.
    pub fn dim(&self) -> usize {
        3 * self.resolution
    }
}

impl Default for BettiCurveSpec {
    fn default() -> Self {
        Self {
            resolution: Self::DEFAULT_RESOLUTION,
            range_policy: RangePolicy::PerChannelMinMax,
        }
    }
}

/// Number of loops alive at each of `R` sample points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BettiCurve {
    pub samples: Vec<f64>,
    pub counts: Vec<u32>,
}

/// Evenly spaced sample points from `lo` to `hi`, both ends included.
///
/// The offset is computed as `((j - 1) * (hi - lo)) / (R - 1)`: multiplying
/// first keeps every sample exact when the range is made of small integers.
pub fn sample_points(lo: f64, hi: f64, resolution: usize) -> Vec<f64> {
    if resolution == 1 || lo == hi {
        return vec![lo; resolution];
    }
    let span = hi - lo;
    let steps = (resolution - 1) as f64;
    let mut out: Vec<f64> = (0..resolution)
        .map(|j| lo + (j as f64 * span) / steps)
        .collect();
    out[resolution - 1] = hi;
    out
}

/// Samples the Betti curve of the loops of `diagram`.
///
/// Only dimension-1 pairs with `birth < death` are counted; a loop is alive
/// at `x` when `birth <= x <= death`.
pub fn betti_curve(diagram: &PersistenceDiagram, spec: &BettiCurveSpec) -> BettiCurve {
    let r = spec.resolution;
    let intervals: Vec<(f64, f64)> = diagram
        .in_dim(1)
        .filter_map(|p| p.death.finite().map(|d| (p.birth, d)))
        .filter(|(b, d)| b < d)
        .collect();
    if intervals.is_empty() {
        return BettiCurve {
            samples: vec![0.0; r],
            counts: vec![0; r],
        };
    }
    let (lo, hi) = match spec.range_policy {
        RangePolicy::PerChannelMinMax => intervals
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(b, d)| {
                (lo.min(b), hi.max(d))
            }),
        RangePolicy::FixedFullScale => (0.0, 255.0),
    };
    let samples = sample_points(lo, hi, r);

    // +1 at the first sample inside each interval, -1 past the last one.
    let mut delta = vec![0i64; r + 1];
    for &(b, d) in &intervals {
        let first = samples.partition_point(|&x| x < b);
        let end = samples.partition_point(|&x| x <= d);
        if first < end {
            delta[first] += 1;
            delta[end] -= 1;
        }
    }
    let mut running = 0i64;
    let counts = delta[..r]
        .iter()
        .map(|&step| {
            running += step;
            running as u32
        })
        .collect();
    BettiCurve { samples, counts }
}

/// Concatenated R, G and B Betti curves. Values are small integer counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopoDescriptor(pub Vec<f32>);

impl TopoDescriptor {
    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// The block of one channel (0 = R, 1 = G, 2 = B).
    pub fn channel(&self, channel: usize) -> &[f32] {
        let r = self.0.len() / 3;
        &self.0[channel * r..(channel + 1) * r]
    }

    fn from_curves(curves: &[BettiCurve; 3]) -> Self {
        Self(
            curves
                .iter()
                .flat_map(|c| c.counts.iter().map(|&n| n as f32))
                .collect(),
        )
    }
}

/// Per-channel diagrams and curves of one image.
#[derive(Debug, Clone)]
pub struct ImageTopology {
    pub diagrams: [PersistenceDiagram; 3],
    pub curves: [BettiCurve; 3],
}

impl ImageTopology {
    pub fn descriptor(&self) -> TopoDescriptor {
        TopoDescriptor::from_curves(&self.curves)
    }
}

pub fn image_topology(img: &RgbImageGrid, spec: &BettiCurveSpec) -> ImageTopology {
    let diagrams = split_channels(img).map(|ch| compute_persistence(&build_filtration(&ch)));
    let curves = std::array::from_fn(|c| betti_curve(&diagrams[c], spec));
    ImageTopology { diagrams, curves }
}

/// The `3R`-length descriptor of an image.
pub fn descriptor(img: &RgbImageGrid, spec: &BettiCurveSpec) -> TopoDescriptor {
    channel_descriptor(&split_channels(img), spec)
}

/// Descriptor of three real-valued channel grids, in R, G, B order.
pub fn channel_descriptor(channels: &[ChannelGrid; 3], spec: &BettiCurveSpec) -> TopoDescriptor {
    let curves = std::array::from_fn(|c| {
        betti_curve(&compute_persistence(&build_filtration(&channels[c])), spec)
    });
    TopoDescriptor::from_curves(&curves)
}
