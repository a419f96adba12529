//! Lung-nodule computer-aided detection: CT preprocessing, lung
//! segmentation, multi-planar candidate detection with stream fusion, 3-D
//! multi-scale dense false-positive reduction, and FROC/CPM evaluation.

// Parameter checks are written `!(x > 0.0)` on purpose so NaN is rejected;
// per-axis loops index several arrays in lockstep.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod csvio;
pub mod detect;
pub mod error;
pub mod eval;
pub mod fpr;
pub mod fuse;
pub mod lungseg;
pub mod nnet;
pub mod phantom;
pub mod pipeline;
mod util;
pub mod volume;

pub use config::PipelineConfig;
pub use csvio::ScoredCandidate;
pub use detect::{Candidate, CandidateSource};
pub use error::{Error, Result};
pub use eval::{CpmReport, Evaluation, FrocCurve, NoduleAnnotation};
pub use fuse::{MergeMode, MergeRule};
pub use volume::{AnyVolume, CtVolume, Geometry, GrayVolume, PlaneAxis, Volume};
