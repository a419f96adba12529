use super::{Box2D, DetectorPort};
use crate::lungseg::{connected_components, BinaryMask2D, Connectivity};
use crate::volume::GraySlice;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlobParams {
    pub thresh: u8,
    pub min_area: usize,
    pub max_area: usize,
    /// Minimum share of the bounding box covered by the region (a disk
    /// covers about 0.785); rejects diagonal streaks.
    pub min_fill: f64,
    /// Maximum ratio of the longer to the shorter box side; rejects
    /// axis-aligned streaks.
    pub max_aspect: f64,
}

impl Default for BlobParams {
    fn default() -> Self {
        BlobParams {
            thresh: 100,
            min_area: 4,
            max_area: 400,
            min_fill: 0.0,
            max_aspect: f64::INFINITY,
        }
    }
}

fn compact_enough(r: &crate::lungseg::Region, p: &BlobParams) -> bool {
    let h = (r.row_max - r.row_min + 1) as f64;
    let w = (r.col_max - r.col_min + 1) as f64;
    r.area as f64 >= p.min_fill * h * w && h.max(w) <= p.max_aspect * h.min(w)
}

/// Bright-blob detector: bounding boxes of 8-connected regions at or above
/// `thresh` whose area lies in `[min_area, max_area]`, scored by mean
/// intensity / 255. Regions failing the fill or aspect limits are skipped.
pub fn reference_blob_detect(s: &GraySlice, p: &BlobParams) -> Vec<Box2D> {
    let m = BinaryMask2D::from_vec(
        s.rows,
        s.cols,
        s.data.iter().map(|&v| (v >= p.thresh) as u8).collect(),
    )
    .expect("dims taken from the slice");
    connected_components(&m, Connectivity::Eight)
        .regions
        .into_iter()
        .filter(|r| (p.min_area..=p.max_area).contains(&r.area) && compact_enough(r, p))
        .map(|r| {
            let sum: u64 = r.pixels.iter().map(|&(rr, cc)| s.get(rr, cc) as u64).sum();
            Box2D {
                plane: s.plane,
                slice_index: s.index,
                thickness: s.thickness,
                row_min: r.row_min,
                row_max: r.row_max,
                col_min: r.col_min,
                col_max: r.col_max,
                score: sum as f64 / r.area as f64 / 255.0,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ReferenceBlobDetector {
    pub params: BlobParams,
}

impl DetectorPort for ReferenceBlobDetector {
    fn detect(&self, slice: &GraySlice) -> Vec<Box2D> {
        reference_blob_detect(slice, &self.params)
    }
}
