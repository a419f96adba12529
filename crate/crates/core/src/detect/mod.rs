//! Per-plane candidate detection and the detector-side learning components.
//!
//! A detection stream turns windowed 2-D slices into boxes through a
//! [`DetectorPort`], then chains boxes across neighbouring slices into 3-D
//! [`Candidate`]s in world coordinates.

mod augment;
mod blob;
mod dice;
mod group;
mod scaling;
mod unetpp;

pub use augment::{augment, random_affine, AffineParams, AugmentOp};
pub use blob::{reference_blob_detect, BlobParams, ReferenceBlobDetector};
pub use dice::dice_loss;
pub use group::{group_boxes, GroupParams};
pub(crate) use group::sort_candidates;
pub use scaling::{compound_scaling, ReferenceConfig, ScalingParams, Scaled, EFFICIENTNET_B4};
pub use unetpp::{build_unetpp_topology, EdgeKind, NodeKind, TopoEdge, TopoNode, UnetPPTopology};

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::volume::{GraySlice, PlaneAxis};

/// Axis-aligned box on one slice (or slab) of a plane stack; bounds inclusive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box2D {
    pub plane: PlaneAxis,
    /// First source slice along the plane normal.
    pub slice_index: usize,
    /// Source slices covered by the image the box was found on.
    pub thickness: usize,
    pub row_min: usize,
    pub row_max: usize,
    pub col_min: usize,
    pub col_max: usize,
    pub score: f64,
}

impl Box2D {
    pub fn validate(&self) -> Result<()> {
        if self.row_min > self.row_max || self.col_min > self.col_max {
            return Err(Error::invalid("box", format!("{self:?} has min > max")));
        }
        if !(0.0..=1.0).contains(&self.score) {
            return Err(Error::invalid("box", format!("score {} outside [0, 1]", self.score)));
        }
        if self.thickness == 0 {
            return Err(Error::invalid("box", "zero thickness"));
        }
        Ok(())
    }

    pub fn center(&self) -> (f64, f64) {
        (
            (self.row_min + self.row_max) as f64 / 2.0,
            (self.col_min + self.col_max) as f64 / 2.0,
        )
    }

    pub fn height(&self) -> usize {
        self.row_max - self.row_min + 1
    }

    pub fn width(&self) -> usize {
        self.col_max - self.col_min + 1
    }
}

/// Which detection stream produced a candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CandidateSource {
    Axial1mm,
    Coronal1mm,
    Sagittal1mm,
    AxialMip10mm,
    Fused,
}

impl CandidateSource {
    pub fn as_str(self) -> &'static str {
        match self {
            CandidateSource::Axial1mm => "axial1mm",
            CandidateSource::Coronal1mm => "coronal1mm",
            CandidateSource::Sagittal1mm => "sagittal1mm",
            CandidateSource::AxialMip10mm => "axialmip10mm",
            CandidateSource::Fused => "fused",
        }
    }

    pub fn for_plane(plane: PlaneAxis) -> Self {
        match plane {
            PlaneAxis::Axial => CandidateSource::Axial1mm,
            PlaneAxis::Coronal => CandidateSource::Coronal1mm,
            PlaneAxis::Sagittal => CandidateSource::Sagittal1mm,
        }
    }
}

impl fmt::Display for CandidateSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CandidateSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "axial1mm" => CandidateSource::Axial1mm,
            "coronal1mm" => CandidateSource::Coronal1mm,
            "sagittal1mm" => CandidateSource::Sagittal1mm,
            "axialmip10mm" => CandidateSource::AxialMip10mm,
            "fused" => CandidateSource::Fused,
            other => return Err(Error::invalid("candidate source", format!("unknown `{other}`"))),
        })
    }
}

/// Suspicious finding in world coordinates (mm).
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub scan_id: String,
    pub center: [f64; 3],
    pub radius_mm: f64,
    pub score: f64,
    pub source: CandidateSource,
}

impl Candidate {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius_mm > 0.0) || !self.radius_mm.is_finite() {
            return Err(Error::invalid("candidate", format!("radius {} must be > 0", self.radius_mm)));
        }
        if !(0.0..=1.0).contains(&self.score) {
            return Err(Error::invalid("candidate", format!("score {} outside [0, 1]", self.score)));
        }
        if self.center.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("candidate", "non-finite centre"));
        }
        Ok(())
    }

    pub fn distance(&self, other: &Candidate) -> f64 {
        dist3(self.center, other.center)
    }
}

#[inline]
pub(crate) fn dist3(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// A 2-D detector. Implementations must be deterministic and safe to share
/// across threads.
pub trait DetectorPort: Send + Sync {
    fn detect(&self, slice: &GraySlice) -> Vec<Box2D>;
}

pub fn detect_slice(s: &GraySlice, detector: &dyn DetectorPort) -> Vec<Box2D> {
    detector.detect(s)
}
