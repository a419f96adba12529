//! CT volume data model and the preprocessing kernels that act on it:
//! intensity windowing, isotropic resampling, slab MIP and plane extraction.
//!
//! Voxels are stored x-fastest, then y, then z. World coordinates follow an
//! axis-aligned identity orientation: `world = origin + index * spacing`.

mod io;
mod mip;
mod plane;
mod resample;
mod window;

pub use io::{read_mpv, read_mpv_file, write_mpv, write_mpv_file, AnyVolume, MPV_MAGIC};
pub use mip::{mip_slab, MipSpec};
pub use plane::{extract_plane_slice, stack_plane_slices, GraySlice, PlaneAxis, Slice2D};
pub use resample::resample_isotropic;
pub use window::{apply_window, WindowSpec};

use crate::error::{Error, Result};

/// Round half up, the convention used for every intensity and extent rounding.
#[inline]
pub fn round_half_up(x: f64) -> f64 {
    (x + 0.5).floor()
}

/// Scalar voxel types a [`Volume`] can hold.
pub trait Voxel: Copy + Default + PartialOrd + Send + Sync + std::fmt::Debug + 'static {
    fn to_f64(self) -> f64;
    /// Converts back from a real value; integer types round half up and saturate.
    fn from_f64(v: f64) -> Self;
}

impl Voxel for i16 {
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
    #[inline]
    fn from_f64(v: f64) -> Self {
        round_half_up(v).clamp(i16::MIN as f64, i16::MAX as f64) as i16
    }
}

impl Voxel for u8 {
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
    #[inline]
    fn from_f64(v: f64) -> Self {
        round_half_up(v).clamp(0.0, 255.0) as u8
    }
}

impl Voxel for f32 {
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
}

impl Voxel for f64 {
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
}

/// Grid extent, voxel spacing (mm) and world origin (mm) of a volume.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geometry {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
}

impl Geometry {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3]) -> Result<Self> {
        let g = Geometry {
            dims,
            spacing,
            origin,
        };
        g.validate()?;
        Ok(g)
    }

    /// Unit spacing, zero origin.
    pub fn unit(dims: [usize; 3]) -> Result<Self> {
        Self::new(dims, [1.0; 3], [0.0; 3])
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.contains(&0) {
            return Err(Error::invalid("dims", format!("{:?} has a zero extent", self.dims)));
        }
        if self.spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::invalid(
                "spacing",
                format!("{:?} must be finite and > 0", self.spacing),
            ));
        }
        if self.origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::invalid("origin", format!("{:?} is not finite", self.origin)));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn linear_index(&self, [i, j, k]: [usize; 3]) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn contains_index(&self, idx: [usize; 3]) -> bool {
        idx.iter().zip(self.dims).all(|(&i, d)| i < d)
    }

    /// Continuous voxel coordinates of a world point (no bounds check).
    #[inline]
    pub fn world_to_continuous(&self, p: [f64; 3]) -> [f64; 3] {
        std::array::from_fn(|a| (p[a] - self.origin[a]) / self.spacing[a])
    }

    #[inline]
    pub fn continuous_to_world(&self, c: [f64; 3]) -> [f64; 3] {
        std::array::from_fn(|a| self.origin[a] + c[a] * self.spacing[a])
    }

    pub fn voxel_to_world(&self, idx: [usize; 3]) -> Result<[f64; 3]> {
        if !self.contains_index(idx) {
            return Err(Error::out_of_range(
                "voxel index",
                format!("{idx:?} outside dims {:?}", self.dims),
            ));
        }
        Ok(std::array::from_fn(|a| {
            self.origin[a] + idx[a] as f64 * self.spacing[a]
        }))
    }

    /// Nearest voxel of a world point. The point must lie within the half-voxel
    /// padded bounding box of the voxel centres.
    pub fn world_to_voxel(&self, p: [f64; 3]) -> Result<[usize; 3]> {
        let c = self.world_to_continuous(p);
        let mut idx = [0usize; 3];
        for a in 0..3 {
            let r = round_half_up(c[a]);
            if !c[a].is_finite() || r < 0.0 || r >= self.dims[a] as f64 {
                return Err(Error::out_of_range(
                    "world point",
                    format!("{p:?} outside the volume bounding box"),
                ));
            }
            idx[a] = r as usize;
        }
        Ok(idx)
    }
}

/// Dense 3-D voxel grid with geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume<T> {
    geometry: Geometry,
    data: Vec<T>,
}

/// Hounsfield-unit volume.
pub type CtVolume = Volume<i16>;
/// Windowed 8-bit volume.
pub type GrayVolume = Volume<u8>;

impl<T: Voxel> Volume<T> {
    pub fn new(geometry: Geometry, data: Vec<T>) -> Result<Self> {
        geometry.validate()?;
        if data.len() != geometry.len() {
            return Err(Error::shape(
                format!("{} voxels for dims {:?}", geometry.len(), geometry.dims),
                data.len(),
            ));
        }
        Ok(Volume { geometry, data })
    }

    pub fn filled(geometry: Geometry, value: T) -> Result<Self> {
        geometry.validate()?;
        Ok(Volume {
            data: vec![value; geometry.len()],
            geometry,
        })
    }

    pub fn from_fn(geometry: Geometry, mut f: impl FnMut([usize; 3]) -> T) -> Result<Self> {
        geometry.validate()?;
        let [nx, ny, nz] = geometry.dims;
        let mut data = Vec::with_capacity(geometry.len());
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    data.push(f([i, j, k]));
                }
            }
        }
        Ok(Volume { geometry, data })
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn dims(&self) -> [usize; 3] {
        self.geometry.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.geometry.spacing
    }

    pub fn origin(&self) -> [f64; 3] {
        self.geometry.origin
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, idx: [usize; 3]) -> T {
        self.data[self.geometry.linear_index(idx)]
    }

    #[inline]
    pub fn set(&mut self, idx: [usize; 3], v: T) {
        let l = self.geometry.linear_index(idx);
        self.data[l] = v;
    }

    pub fn map<U: Voxel>(&self, f: impl Fn(T) -> U) -> Volume<U> {
        Volume {
            geometry: self.geometry,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Smallest and largest voxel value.
    pub fn min_max(&self) -> (T, T) {
        let mut lo = self.data[0];
        let mut hi = self.data[0];
        for &v in &self.data[1..] {
            if v < lo {
                lo = v;
            }
            if v > hi {
                hi = v;
            }
        }
        (lo, hi)
    }

    pub fn voxel_to_world(&self, idx: [usize; 3]) -> Result<[f64; 3]> {
        self.geometry.voxel_to_world(idx)
    }

    pub fn world_to_voxel(&self, p: [f64; 3]) -> Result<[usize; 3]> {
        self.geometry.world_to_voxel(p)
    }
}
