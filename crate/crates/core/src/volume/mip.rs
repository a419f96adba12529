use rayon::prelude::*;

use super::{extract_plane_slice, round_half_up, PlaneAxis, Slice2D, Volume, Voxel};
use crate::error::{Error, Result};

/// Slab maximum-intensity projection along a plane normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MipSpec {
    pub axis: PlaneAxis,
    pub thickness_mm: f64,
    pub stride_mm: f64,
}

impl Default for MipSpec {
    fn default() -> Self {
        MipSpec {
            axis: PlaneAxis::Axial,
            thickness_mm: 10.0,
            stride_mm: 1.0,
        }
    }
}

impl MipSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.stride_mm > 0.0) || !(self.thickness_mm >= self.stride_mm) {
            return Err(Error::invalid(
                "mip spec",
                format!(
                    "need thickness {} >= stride {} > 0",
                    self.thickness_mm, self.stride_mm
                ),
            ));
        }
        Ok(())
    }

    /// Slab window length and stride in source slices for a given voxel size.
    pub fn window_slices(&self, voxel_mm: f64) -> (usize, usize) {
        let k = (round_half_up(self.thickness_mm / voxel_mm) as usize).max(1);
        let s = (round_half_up(self.stride_mm / voxel_mm) as usize).max(1);
        (k, s)
    }

    /// `(start, len)` of every slab window over an axis of `n` slices.
    pub fn windows(&self, n: usize, voxel_mm: f64) -> Vec<(usize, usize)> {
        let (k, stride) = self.window_slices(voxel_mm);
        if k > n {
            return vec![(0, n)];
        }
        (0..n)
            .step_by(stride)
            .map(|start| (start, k.min(n - start)))
            .collect()
    }
}

/// Slab `i` is the pixelwise maximum over source slices `[start_i, start_i + k)`,
/// truncated at the end of the axis.
pub fn mip_slab<T: Voxel>(g: &Volume<T>, spec: &MipSpec) -> Result<Vec<Slice2D<T>>> {
    spec.validate()?;
    let axis = spec.axis;
    let n = axis.slice_count(g.geometry());
    let voxel_mm = g.spacing()[axis.normal_axis()];
    let planes: Vec<Slice2D<T>> = (0..n)
        .into_par_iter()
        .map(|i| extract_plane_slice(g, axis, i))
        .collect::<Result<_>>()?;
    let windows = spec.windows(n, voxel_mm);
    Ok(windows
        .into_par_iter()
        .map(|(start, len)| {
            let mut slab = planes[start].clone();
            for p in &planes[start + 1..start + len] {
                for (acc, &v) in slab.data.iter_mut().zip(&p.data) {
                    if v > *acc {
                        *acc = v;
                    }
                }
            }
            slab.thickness = len;
            slab
        })
        .collect())
}
