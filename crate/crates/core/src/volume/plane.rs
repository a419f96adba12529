use std::fmt;
use std::str::FromStr;

use super::{Geometry, Volume, Voxel};
use crate::error::{Error, Result};

/// Anatomical viewing plane. The plane map between a slice `(row, col)` and a
/// voxel `(i, j, k)` is fixed:
///
/// | plane    | slice index | row | col |
/// |----------|-------------|-----|-----|
/// | axial    | k (z)       | j   | i   |
/// | coronal  | j (y)       | k   | i   |
/// | sagittal | i (x)       | k   | j   |
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PlaneAxis {
    Axial,
    Coronal,
    Sagittal,
}

impl PlaneAxis {
    pub const ALL: [PlaneAxis; 3] = [PlaneAxis::Axial, PlaneAxis::Coronal, PlaneAxis::Sagittal];

    /// Volume axis (0 = x, 1 = y, 2 = z) the plane is perpendicular to.
    pub fn normal_axis(self) -> usize {
        match self {
            PlaneAxis::Axial => 2,
            PlaneAxis::Coronal => 1,
            PlaneAxis::Sagittal => 0,
        }
    }

    pub fn row_axis(self) -> usize {
        match self {
            PlaneAxis::Axial => 1,
            PlaneAxis::Coronal | PlaneAxis::Sagittal => 2,
        }
    }

    pub fn col_axis(self) -> usize {
        match self {
            PlaneAxis::Axial | PlaneAxis::Coronal => 0,
            PlaneAxis::Sagittal => 1,
        }
    }

    pub fn slice_count(self, g: &Geometry) -> usize {
        g.dims[self.normal_axis()]
    }

    /// Voxel index of `(row, col)` in slice `index`.
    #[inline]
    pub fn voxel_of(self, index: usize, row: usize, col: usize) -> [usize; 3] {
        let mut v = [0; 3];
        v[self.normal_axis()] = index;
        v[self.row_axis()] = row;
        v[self.col_axis()] = col;
        v
    }

    /// Inverse of [`PlaneAxis::voxel_of`]: `(index, row, col)`.
    #[inline]
    pub fn plane_coords(self, voxel: [usize; 3]) -> (usize, usize, usize) {
        (
            voxel[self.normal_axis()],
            voxel[self.row_axis()],
            voxel[self.col_axis()],
        )
    }

    /// World point of a continuous `(slice, row, col)` position.
    pub fn to_world(self, g: &Geometry, slice: f64, row: f64, col: f64) -> [f64; 3] {
        let mut c = [0.0; 3];
        c[self.normal_axis()] = slice;
        c[self.row_axis()] = row;
        c[self.col_axis()] = col;
        g.continuous_to_world(c)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PlaneAxis::Axial => "axial",
            PlaneAxis::Coronal => "coronal",
            PlaneAxis::Sagittal => "sagittal",
        }
    }
}

impl fmt::Display for PlaneAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PlaneAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "axial" => Ok(PlaneAxis::Axial),
            "coronal" => Ok(PlaneAxis::Coronal),
            "sagittal" => Ok(PlaneAxis::Sagittal),
            other => Err(Error::invalid("plane", format!("unknown plane `{other}`"))),
        }
    }
}

/// 2-D image cut from a volume, row-major. `index` is the first source slice
/// along the plane normal and `thickness` the number of source slices it
/// summarises (1 for a plain slice, more for a MIP slab).
#[derive(Debug, Clone, PartialEq)]
pub struct Slice2D<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
    pub row_spacing: f64,
    pub col_spacing: f64,
    pub plane: PlaneAxis,
    pub index: usize,
    pub thickness: usize,
}

pub type GraySlice = Slice2D<u8>;

impl<T: Voxel> Slice2D<T> {
    /// Free-standing slice with unit spacing (axial, index 0).
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::shape(format!("{rows}x{cols} pixels"), data.len()));
        }
        Ok(Slice2D {
            rows,
            cols,
            data,
            row_spacing: 1.0,
            col_spacing: 1.0,
            plane: PlaneAxis::Axial,
            index: 0,
            thickness: 1,
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Slice2D::from_vec(rows, cols, data).expect("from_fn builds a consistent slice")
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: T) {
        self.data[row * self.cols + col] = v;
    }

    /// Same geometry metadata, new pixel buffer.
    pub fn with_data<U: Voxel>(&self, data: Vec<U>) -> Result<Slice2D<U>> {
        if data.len() != self.rows * self.cols {
            return Err(Error::shape(self.rows * self.cols, data.len()));
        }
        Ok(Slice2D {
            rows: self.rows,
            cols: self.cols,
            data,
            row_spacing: self.row_spacing,
            col_spacing: self.col_spacing,
            plane: self.plane,
            index: self.index,
            thickness: self.thickness,
        })
    }

    /// Voxel index of a pixel (first source slice for slabs).
    pub fn voxel_index(&self, row: usize, col: usize) -> [usize; 3] {
        self.plane.voxel_of(self.index, row, col)
    }
}

pub fn extract_plane_slice<T: Voxel>(
    v: &Volume<T>,
    plane: PlaneAxis,
    index: usize,
) -> Result<Slice2D<T>> {
    let g = v.geometry();
    let n = plane.slice_count(g);
    if index >= n {
        return Err(Error::out_of_range(
            "slice index",
            format!("{plane} slice {index} of {n}"),
        ));
    }
    let (ra, ca) = (plane.row_axis(), plane.col_axis());
    let (rows, cols) = (g.dims[ra], g.dims[ca]);
    let [nx, ny, _] = g.dims;
    let src = v.data();
    let data: Vec<T> = match plane {
        PlaneAxis::Axial => src[index * nx * ny..(index + 1) * nx * ny].to_vec(),
        PlaneAxis::Coronal => {
            let mut d = Vec::with_capacity(rows * cols);
            for k in 0..rows {
                let base = nx * (index + ny * k);
                d.extend_from_slice(&src[base..base + nx]);
            }
            d
        }
        PlaneAxis::Sagittal => {
            let mut d = Vec::with_capacity(rows * cols);
            for k in 0..rows {
                for j in 0..cols {
                    d.push(src[index + nx * (j + ny * k)]);
                }
            }
            d
        }
    };
    Ok(Slice2D {
        rows,
        cols,
        data,
        row_spacing: g.spacing[ra],
        col_spacing: g.spacing[ca],
        plane,
        index,
        thickness: 1,
    })
}

/// Reassembles a full stack of single-thickness slices into a volume.
pub fn stack_plane_slices<T: Voxel>(geometry: Geometry, slices: &[Slice2D<T>]) -> Result<Volume<T>> {
    let Some(first) = slices.first() else {
        return Err(Error::invalid("slice stack", "no slices"));
    };
    let plane = first.plane;
    let n = plane.slice_count(&geometry);
    if slices.len() != n {
        return Err(Error::shape(format!("{n} {plane} slices"), slices.len()));
    }
    let mut out = Volume::filled(geometry, T::default())?;
    let (rows, cols) = (geometry.dims[plane.row_axis()], geometry.dims[plane.col_axis()]);
    for (idx, s) in slices.iter().enumerate() {
        if s.plane != plane || s.index != idx || s.rows != rows || s.cols != cols {
            return Err(Error::invalid(
                "slice stack",
                format!("slice {idx} does not belong to a {plane} stack of {rows}x{cols}"),
            ));
        }
        for r in 0..rows {
            for c in 0..cols {
                out.set(plane.voxel_of(idx, r, c), s.get(r, c));
            }
        }
    }
    Ok(out)
}
