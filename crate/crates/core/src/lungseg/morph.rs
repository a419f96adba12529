use std::str::FromStr;

use crate::error::{Error, Result};
use crate::volume::{Slice2D, Voxel};

/// 2-D binary image, row-major, values 0 or 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask2D {
    rows: usize,
    cols: usize,
    bits: Vec<u8>,
}

impl BinaryMask2D {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        BinaryMask2D {
            rows,
            cols,
            bits: vec![0; rows * cols],
        }
    }

    pub fn ones(rows: usize, cols: usize) -> Self {
        BinaryMask2D {
            rows,
            cols,
            bits: vec![1; rows * cols],
        }
    }

    /// Any non-zero input value becomes 1.
    pub fn from_vec(rows: usize, cols: usize, values: Vec<u8>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::shape(format!("{rows}x{cols} mask"), values.len()));
        }
        Ok(BinaryMask2D {
            rows,
            cols,
            bits: values.into_iter().map(|v| (v != 0) as u8).collect(),
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                bits.push(f(r, c) as u8);
            }
        }
        BinaryMask2D { rows, cols, bits }
    }

    /// Parses rows of `#`/`1` (set) and `.`/`0` (clear); handy for fixtures.
    pub fn parse(art: &str) -> Result<Self> {
        let lines: Vec<&str> = art.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
        let cols = lines.first().map_or(0, |l| l.len());
        let mut bits = Vec::with_capacity(lines.len() * cols);
        for l in &lines {
            if l.len() != cols {
                return Err(Error::invalid("mask art", "ragged rows"));
            }
            for ch in l.chars() {
                bits.push(match ch {
                    '#' | '1' => 1,
                    '.' | '0' => 0,
                    other => return Err(Error::invalid("mask art", format!("bad char {other:?}"))),
                });
            }
        }
        Ok(BinaryMask2D {
            rows: lines.len(),
            cols,
            bits,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        self.bits[r * self.cols + c] != 0
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        self.bits[r * self.cols + c] = v as u8;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }

    /// True when every set pixel of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &BinaryMask2D) -> bool {
        self.bits.iter().zip(&other.bits).all(|(&a, &b)| a <= b)
    }

    /// 0/`on` gray rendering with the geometry of `like`.
    pub fn to_slice<T: Voxel>(&self, like: &Slice2D<T>, on: u8) -> Result<Slice2D<u8>> {
        like.with_data(self.bits.iter().map(|&b| b * on).collect())
    }
}

/// Flat structuring element centred on the origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StructuringElement {
    Square3,
    /// Euclidean disk of the given radius in pixels.
    Disk(usize),
}

impl StructuringElement {
    pub fn validate(&self) -> Result<()> {
        match self {
            StructuringElement::Disk(0) => Err(Error::invalid("structuring element", "disk radius must be >= 1")),
            _ => Ok(()),
        }
    }

    /// Element as horizontal runs: `(row offset, half width)`.
    fn runs(&self) -> Vec<(isize, usize)> {
        match *self {
            StructuringElement::Square3 => vec![(-1, 1), (0, 1), (1, 1)],
            StructuringElement::Disk(r) => {
                let r = r as isize;
                (-r..=r)
                    .map(|dr| {
                        let mut w = 0usize;
                        while ((w + 1) * (w + 1)) as isize + dr * dr <= r * r {
                            w += 1;
                        }
                        (dr, w)
                    })
                    .collect()
            }
        }
    }

    /// Every `(dr, dc)` offset in the element.
    pub fn offsets(&self) -> Vec<(isize, isize)> {
        self.runs()
            .into_iter()
            .flat_map(|(dr, w)| (-(w as isize)..=w as isize).map(move |dc| (dr, dc)))
            .collect()
    }
}

impl FromStr for StructuringElement {
    type Err = Error;

    /// `square3` or `disk<r>` (e.g. `disk3`).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "square3" {
            return Ok(StructuringElement::Square3);
        }
        if let Some(r) = s.strip_prefix("disk") {
            let r: usize = r
                .parse()
                .map_err(|_| Error::invalid("structuring element", format!("bad disk radius in `{s}`")))?;
            let se = StructuringElement::Disk(r);
            se.validate()?;
            return Ok(se);
        }
        Err(Error::invalid("structuring element", format!("unknown element `{s}`")))
    }
}

/// Per-row prefix counts, `cols + 1` entries per row.
fn prefix_counts(m: &BinaryMask2D) -> Vec<u32> {
    let stride = m.cols + 1;
    let mut p = vec![0u32; m.rows * stride];
    for r in 0..m.rows {
        let row = &m.bits[r * m.cols..(r + 1) * m.cols];
        let out = &mut p[r * stride..(r + 1) * stride];
        for (c, &b) in row.iter().enumerate() {
            out[c + 1] = out[c] + b as u32;
        }
    }
    p
}

/// Dilation; pixels outside the image count as 0.
pub fn dilate(m: &BinaryMask2D, se: &StructuringElement) -> BinaryMask2D {
    let runs = se.runs();
    let pre = prefix_counts(m);
    let stride = m.cols + 1;
    let mut out = BinaryMask2D::zeros(m.rows, m.cols);
    for r in 0..m.rows {
        for c in 0..m.cols {
            let hit = runs.iter().any(|&(dr, w)| {
                let rr = r as isize + dr;
                if rr < 0 || rr >= m.rows as isize {
                    return false;
                }
                let lo = c.saturating_sub(w);
                let hi = (c + w + 1).min(m.cols);
                let row = &pre[rr as usize * stride..];
                row[hi] > row[lo]
            });
            out.bits[r * m.cols + c] = hit as u8;
        }
    }
    out
}

/// Erosion; pixels outside the image count as 0, so the element must fit.
pub fn erode(m: &BinaryMask2D, se: &StructuringElement) -> BinaryMask2D {
    let runs = se.runs();
    let pre = prefix_counts(m);
    let stride = m.cols + 1;
    let mut out = BinaryMask2D::zeros(m.rows, m.cols);
    for r in 0..m.rows {
        for c in 0..m.cols {
            let all = runs.iter().all(|&(dr, w)| {
                let rr = r as isize + dr;
                if rr < 0 || rr >= m.rows as isize || c < w || c + w >= m.cols {
                    return false;
                }
                let row = &pre[rr as usize * stride..];
                (row[c + w + 1] - row[c - w]) as usize == 2 * w + 1
            });
            out.bits[r * m.cols + c] = all as u8;
        }
    }
    out
}

/// Dilation followed by erosion.
pub fn close(m: &BinaryMask2D, se: &StructuringElement) -> BinaryMask2D {
    erode(&dilate(m, se), se)
}
