use rand::Rng;

use crate::error::{Error, Result};
use crate::volume::{Slice2D, Voxel};

/// Training-time image transform. Rotations are clockwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AugmentOp {
    Rot90,
    Rot180,
    Rot270,
    /// Mirror left-right.
    FlipH,
    /// Mirror top-bottom.
    FlipV,
    /// Forward map `[x', y'] = A * [x, y, 1]` with `x` = column, `y` = row.
    Affine([[f64; 3]; 2]),
}

fn invert_affine(a: &[[f64; 3]; 2]) -> Result<[[f64; 3]; 2]> {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    if det.abs() < 1e-12 || !det.is_finite() {
        return Err(Error::invalid("affine", "matrix is singular"));
    }
    let (p, q, r, s) = (a[1][1] / det, -a[0][1] / det, -a[1][0] / det, a[0][0] / det);
    Ok([
        [p, q, -(p * a[0][2] + q * a[1][2])],
        [r, s, -(r * a[0][2] + s * a[1][2])],
    ])
}

/// Bilinear sample with zero outside the image.
fn sample<T: Voxel>(s: &Slice2D<T>, x: f64, y: f64) -> f64 {
    let (x0, y0) = (x.floor(), y.floor());
    let (tx, ty) = (x - x0, y - y0);
    let px = |r: f64, c: f64| -> f64 {
        if r < 0.0 || c < 0.0 || r >= s.rows as f64 || c >= s.cols as f64 {
            0.0
        } else {
            s.get(r as usize, c as usize).to_f64()
        }
    };
    let top = px(y0, x0) * (1.0 - tx) + px(y0, x0 + 1.0) * tx;
    let bottom = px(y0 + 1.0, x0) * (1.0 - tx) + px(y0 + 1.0, x0 + 1.0) * tx;
    top * (1.0 - ty) + bottom * ty
}

pub fn augment<T: Voxel>(s: &Slice2D<T>, op: &AugmentOp) -> Result<Slice2D<T>> {
    let (h, w) = (s.rows, s.cols);
    let rotation = matches!(op, AugmentOp::Rot90 | AugmentOp::Rot180 | AugmentOp::Rot270);
    if rotation && h != w {
        return Err(Error::invalid("augment", format!("rotation needs a square slice, got {h}x{w}")));
    }
    let data: Vec<T> = match op {
        AugmentOp::Rot90 => remap(h, w, |r, c| s.get(h - 1 - c, r)),
        AugmentOp::Rot180 => remap(h, w, |r, c| s.get(h - 1 - r, w - 1 - c)),
        AugmentOp::Rot270 => remap(h, w, |r, c| s.get(c, w - 1 - r)),
        AugmentOp::FlipH => remap(h, w, |r, c| s.get(r, w - 1 - c)),
        AugmentOp::FlipV => remap(h, w, |r, c| s.get(h - 1 - r, c)),
        AugmentOp::Affine(a) => {
            let inv = invert_affine(a)?;
            remap(h, w, |r, c| {
                let (x, y) = (c as f64, r as f64);
                let sx = inv[0][0] * x + inv[0][1] * y + inv[0][2];
                let sy = inv[1][0] * x + inv[1][1] * y + inv[1][2];
                T::from_f64(sample(s, sx, sy))
            })
        }
    };
    s.with_data(data)
}

fn remap<T>(h: usize, w: usize, mut f: impl FnMut(usize, usize) -> T) -> Vec<T> {
    let mut out = Vec::with_capacity(h * w);
    for r in 0..h {
        for c in 0..w {
            out.push(f(r, c));
        }
    }
    out
}

/// Bounds for randomly drawn affine augmentations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineParams {
    pub max_rotation_deg: f64,
    pub max_shear: f64,
    pub scale_range: (f64, f64),
}

impl Default for AffineParams {
    fn default() -> Self {
        AffineParams {
            max_rotation_deg: 10.0,
            max_shear: 0.1,
            scale_range: (0.9, 1.1),
        }
    }
}

/// Rotation, shear and isotropic scale about the image centre.
pub fn random_affine<R: Rng>(rng: &mut R, p: &AffineParams, rows: usize, cols: usize) -> AugmentOp {
    let theta = rng.random_range(-p.max_rotation_deg..=p.max_rotation_deg).to_radians();
    let shear = rng.random_range(-p.max_shear..=p.max_shear);
    let scale = rng.random_range(p.scale_range.0..=p.scale_range.1);
    let (sin, cos) = theta.sin_cos();
    // R * Shear * S
    let m = [
        [scale * cos, scale * (cos * shear - sin)],
        [scale * sin, scale * (sin * shear + cos)],
    ];
    let (cx, cy) = ((cols as f64 - 1.0) / 2.0, (rows as f64 - 1.0) / 2.0);
    AugmentOp::Affine([
        [m[0][0], m[0][1], cx - m[0][0] * cx - m[0][1] * cy],
        [m[1][0], m[1][1], cy - m[1][0] * cx - m[1][1] * cy],
    ])
}
