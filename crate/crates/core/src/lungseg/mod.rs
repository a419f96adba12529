//! 2-D lung parenchyma segmentation: mean-intensity threshold, removal of
//! border-connected regions, closing and a final dilation that keeps a rim of
//! wall texture around the lung field.

mod components;
mod morph;

pub use components::{connected_components, Components, Connectivity, Region};
pub use morph::{close, dilate, erode, BinaryMask2D, StructuringElement};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::volume::{extract_plane_slice, stack_plane_slices, GraySlice, GrayVolume, PlaneAxis, Slice2D, Voxel};

/// Which image edges make a thresholded region "border" tissue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BorderRule {
    #[default]
    AnyEdge,
    LeftRight,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegParams {
    /// `None` skips the closing step.
    pub close_se: Option<StructuringElement>,
    /// `None` skips the final dilation.
    pub dilate_se: Option<StructuringElement>,
    pub border_connectivity: Connectivity,
    pub border_rule: BorderRule,
    /// After closing, also fill every background region enclosed by the mask
    /// (holes wider than the closing element, e.g. large nodules).
    pub fill_holes: bool,
}

impl Default for SegParams {
    fn default() -> Self {
        SegParams {
            close_se: Some(StructuringElement::Disk(3)),
            dilate_se: Some(StructuringElement::Disk(2)),
            border_connectivity: Connectivity::Eight,
            border_rule: BorderRule::AnyEdge,
            fill_holes: false,
        }
    }
}

impl SegParams {
    pub fn validate(&self) -> Result<()> {
        for se in self.close_se.iter().chain(&self.dilate_se) {
            se.validate()?;
        }
        Ok(())
    }
}

/// Pixels strictly darker than the slice mean.
pub fn threshold_below_mean<T: Voxel>(s: &Slice2D<T>) -> BinaryMask2D {
    let mean = s.data.iter().map(|v| v.to_f64()).sum::<f64>() / s.data.len() as f64;
    BinaryMask2D::from_vec(
        s.rows,
        s.cols,
        s.data.iter().map(|v| (v.to_f64() < mean) as u8).collect(),
    )
    .expect("dims taken from the slice")
}

/// Removes every region that touches the image border under `rule`.
pub fn clear_border(m: &BinaryMask2D, connectivity: Connectivity, rule: BorderRule) -> BinaryMask2D {
    let comps = connected_components(m, connectivity);
    let mut out = m.clone();
    for reg in &comps.regions {
        let touches = match rule {
            BorderRule::AnyEdge => reg.touches_border,
            BorderRule::LeftRight => reg.col_min == 0 || reg.col_max + 1 == m.cols(),
        };
        if touches {
            for &(r, c) in &reg.pixels {
                out.set(r, c, false);
            }
        }
    }
    out
}

/// Sets every background pixel whose 4-connected background region does not
/// reach the image border.
pub fn fill_holes(m: &BinaryMask2D) -> BinaryMask2D {
    let inverted = BinaryMask2D::from_vec(m.rows(), m.cols(), m.bits().iter().map(|&b| (b == 0) as u8).collect())
        .expect("same dims");
    let comps = connected_components(&inverted, Connectivity::Four);
    let mut out = m.clone();
    for reg in comps.regions.iter().filter(|r| !r.touches_border) {
        for &(r, c) in &reg.pixels {
            out.set(r, c, true);
        }
    }
    out
}

pub fn segment_lung_slice<T: Voxel>(s: &Slice2D<T>, p: &SegParams) -> BinaryMask2D {
    let mut m = threshold_below_mean(s);
    m = clear_border(&m, p.border_connectivity, p.border_rule);
    if let Some(se) = &p.close_se {
        m = close(&m, se);
    }
    if p.fill_holes {
        m = fill_holes(&m);
    }
    if let Some(se) = &p.dilate_se {
        m = dilate(&m, se);
    }
    m
}

/// Keeps pixels under the mask, replaces the rest with `fill`.
pub fn apply_mask<T: Voxel>(s: &Slice2D<T>, m: &BinaryMask2D, fill: T) -> Result<Slice2D<T>> {
    if (s.rows, s.cols) != (m.rows(), m.cols()) {
        return Err(Error::shape(
            format!("{}x{} mask", s.rows, s.cols),
            format!("{}x{}", m.rows(), m.cols()),
        ));
    }
    let data = s
        .data
        .iter()
        .zip(m.bits())
        .map(|(&v, &b)| if b != 0 { v } else { fill })
        .collect();
    s.with_data(data)
}

/// Segments every slice of one plane and returns the masks as a 0/255 volume.
pub fn segment_plane(g: &GrayVolume, plane: PlaneAxis, p: &SegParams) -> Result<GrayVolume> {
    p.validate()?;
    let slices: Vec<GraySlice> = (0..plane.slice_count(g.geometry()))
        .into_par_iter()
        .map(|i| {
            let s = extract_plane_slice(g, plane, i)?;
            segment_lung_slice(&s, p).to_slice(&s, 255)
        })
        .collect::<Result<_>>()?;
    stack_plane_slices(*g.geometry(), &slices)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> u8) -> GraySlice {
        GraySlice::from_fn(rows, cols, f)
    }

    fn square3_params() -> SegParams {
        SegParams {
            close_se: Some(StructuringElement::Square3),
            dilate_se: Some(StructuringElement::Square3),
            ..SegParams::default()
        }
    }

    #[test]
    fn constant_slice_gives_empty_mask() {
        let s = gray(8, 8, |_, _| 90);
        assert_eq!(segment_lung_slice(&s, &SegParams::default()).count(), 0);
    }

    #[test]
    fn annulus_fixture_keeps_interior_plus_one_ring() {
        // Body ring 3..=12 (200) around a dark 6x6 interior 5..=10 (20);
        // dark background touches every border.
        let inside = |r: usize, c: usize, lo: usize, hi: usize| (lo..=hi).contains(&r) && (lo..=hi).contains(&c);
        let s = gray(16, 16, |r, c| {
            if inside(r, c, 3, 12) && !inside(r, c, 5, 10) {
                200
            } else {
                20
            }
        });
        // mean = (64 * 200 + 192 * 20) / 256 = 65
        let m = segment_lung_slice(&s, &square3_params());
        let expect = BinaryMask2D::from_fn(16, 16, |r, c| inside(r, c, 4, 11));
        assert_eq!(m, expect);
    }

    #[test]
    fn dark_blob_on_border_is_removed() {
        let s = gray(10, 10, |r, c| {
            let on_left_edge = (3..6).contains(&r) && c < 2;
            let interior = (4..7).contains(&r) && (5..8).contains(&c);
            if on_left_edge || interior {
                10
            } else {
                200
            }
        });
        let p = SegParams {
            close_se: None,
            dilate_se: None,
            ..SegParams::default()
        };
        let m = segment_lung_slice(&s, &p);
        let expect = BinaryMask2D::from_fn(10, 10, |r, c| (4..7).contains(&r) && (5..8).contains(&c));
        assert_eq!(m, expect);
        // The same blob survives when only left/right edges count and it sits on top.
        let s2 = gray(10, 10, |r, c| if r < 2 && (3..6).contains(&c) { 10 } else { 200 });
        let lr = SegParams { border_rule: BorderRule::LeftRight, ..p };
        assert_eq!(segment_lung_slice(&s2, &lr).count(), 6);
        assert_eq!(segment_lung_slice(&s2, &p).count(), 0);
    }

    #[test]
    fn without_morphology_mask_is_below_mean_and_off_border() {
        let mut seed = 7u32;
        let s = gray(20, 24, |_, _| {
            seed = seed.wrapping_mul(1103515245).wrapping_add(12345);
            (seed >> 24) as u8
        });
        let mean = s.data.iter().map(|&v| v as f64).sum::<f64>() / s.data.len() as f64;
        let p = SegParams {
            close_se: None,
            dilate_se: None,
            ..SegParams::default()
        };
        let m = segment_lung_slice(&s, &p);
        for r in 0..s.rows {
            for c in 0..s.cols {
                if m.get(r, c) {
                    assert!((s.get(r, c) as f64) < mean);
                    assert!(r > 0 && c > 0 && r + 1 < s.rows && c + 1 < s.cols);
                }
            }
        }
    }

    #[test]
    fn apply_mask_selects_pointwise() {
        let s = gray(4, 4, |r, c| (r * 4 + c) as u8 + 1);
        let ones = BinaryMask2D::ones(4, 4);
        assert_eq!(apply_mask(&s, &ones, 0).unwrap(), s);
        let zeros = BinaryMask2D::zeros(4, 4);
        assert!(apply_mask(&s, &zeros, 9).unwrap().data.iter().all(|&v| v == 9));
        let checker = BinaryMask2D::from_fn(4, 4, |r, c| (r + c) % 2 == 0);
        let out = apply_mask(&s, &checker, 0).unwrap();
        for r in 0..4 {
            for c in 0..4 {
                let want = if (r + c) % 2 == 0 { s.get(r, c) } else { 0 };
                assert_eq!(out.get(r, c), want);
            }
        }
        assert!(apply_mask(&s, &BinaryMask2D::zeros(3, 4), 0).is_err());
    }

    #[test]
    fn fill_holes_fills_enclosed_background_only() {
        let m = BinaryMask2D::parse(
            "
            .......
            .#####.
            .#...#.
            .#...#.
            .#####.
            .....#.
            ",
        )
        .unwrap();
        let f = fill_holes(&m);
        assert!(f.get(2, 2) && f.get(3, 3));
        assert!(!f.get(0, 0) && !f.get(5, 1));
        assert_eq!(f.count(), m.count() + 6);
        // A ring with a gap to the outside is not a hole.
        let open = BinaryMask2D::parse(".....\n.###.\n.#.#.\n.#.#.\n.....").unwrap();
        assert_eq!(fill_holes(&open), open);
    }
}
