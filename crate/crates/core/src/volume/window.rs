use rayon::prelude::*;

use super::{round_half_up, CtVolume, GrayVolume, Volume};
use crate::error::{Error, Result};

/// HU interval mapped linearly onto `0..=out_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowSpec {
    pub lo_hu: f64,
    pub hi_hu: f64,
    pub out_max: u8,
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec {
            lo_hu: -1000.0,
            hi_hu: 400.0,
            out_max: 255,
        }
    }
}

impl WindowSpec {
    pub fn new(lo_hu: f64, hi_hu: f64, out_max: u8) -> Result<Self> {
        let w = WindowSpec {
            lo_hu,
            hi_hu,
            out_max,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo_hu < self.hi_hu) || !self.lo_hu.is_finite() || !self.hi_hu.is_finite() {
            return Err(Error::invalid(
                "window",
                format!("lo {} must be below hi {}", self.lo_hu, self.hi_hu),
            ));
        }
        Ok(())
    }

    /// Clamp, then map linearly; rounds half up.
    #[inline]
    pub fn map(&self, hu: f64) -> u8 {
        let c = hu.clamp(self.lo_hu, self.hi_hu);
        let v = self.out_max as f64 * (c - self.lo_hu) / (self.hi_hu - self.lo_hu);
        round_half_up(v) as u8
    }

    /// HU value whose windowed intensity is exactly `gray` (inverse of the linear part).
    pub fn to_hu(&self, gray: u8) -> f64 {
        self.lo_hu + gray as f64 * (self.hi_hu - self.lo_hu) / self.out_max as f64
    }
}

pub fn apply_window(v: &CtVolume, w: &WindowSpec) -> Result<GrayVolume> {
    w.validate()?;
    // 16-bit input: a lookup table is exact and avoids per-voxel float work.
    let lut: Vec<u8> = (i16::MIN as i32..=i16::MAX as i32)
        .map(|h| w.map(h as f64))
        .collect();
    let data: Vec<u8> = v
        .data()
        .par_iter()
        .map(|&h| lut[(h as i32 - i16::MIN as i32) as usize])
        .collect();
    Volume::new(*v.geometry(), data)
}
