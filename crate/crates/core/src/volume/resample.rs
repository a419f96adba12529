use rayon::prelude::*;

use super::{round_half_up, Geometry, Volume, Voxel};
use crate::error::{Error, Result};

/// Per-axis interpolation stencil: lower index, upper index, upper weight.
#[derive(Debug, Clone, Copy)]
struct Tap {
    i0: usize,
    i1: usize,
    t: f64,
}

fn axis_taps(n_in: usize, spacing_in: f64, n_out: usize, target: f64) -> Vec<Tap> {
    let last = (n_in - 1) as f64;
    (0..n_out)
        .map(|o| {
            // Samples beyond the last input centre take the edge value.
            let pos = (o as f64 * target / spacing_in).min(last);
            let i0 = pos.floor() as usize;
            let i1 = (i0 + 1).min(n_in - 1);
            Tap {
                i0,
                i1,
                t: pos - i0 as f64,
            }
        })
        .collect()
}

/// Output extent along one axis for isotropic resampling.
pub(crate) fn resampled_extent(n: usize, spacing: f64, target: f64) -> usize {
    (round_half_up(n as f64 * spacing / target) as usize).max(1)
}

/// Trilinear resampling onto a `target_mm` isotropic grid sharing the input origin.
pub fn resample_isotropic<T: Voxel>(v: &Volume<T>, target_mm: f64) -> Result<Volume<T>> {
    if !(target_mm > 0.0) || !target_mm.is_finite() {
        return Err(Error::invalid("target spacing", format!("{target_mm} must be > 0")));
    }
    let g = v.geometry();
    let out_dims: [usize; 3] =
        std::array::from_fn(|a| resampled_extent(g.dims[a], g.spacing[a], target_mm));
    let out_geom = Geometry::new(out_dims, [target_mm; 3], g.origin)?;
    let taps: [Vec<Tap>; 3] =
        std::array::from_fn(|a| axis_taps(g.dims[a], g.spacing[a], out_dims[a], target_mm));
    let [nx, ny, _] = g.dims;
    let src = v.data();
    let at = |i: usize, j: usize, k: usize| src[i + nx * (j + ny * k)].to_f64();

    let plane = out_dims[0] * out_dims[1];
    let mut out = vec![T::default(); out_geom.len()];
    out.par_chunks_mut(plane).enumerate().for_each(|(k, chunk)| {
        let tz = taps[2][k];
        for (j, row) in chunk.chunks_mut(out_dims[0]).enumerate() {
            let ty = taps[1][j];
            for (i, dst) in row.iter_mut().enumerate() {
                let tx = taps[0][i];
                let c00 = lerp(at(tx.i0, ty.i0, tz.i0), at(tx.i1, ty.i0, tz.i0), tx.t);
                let c10 = lerp(at(tx.i0, ty.i1, tz.i0), at(tx.i1, ty.i1, tz.i0), tx.t);
                let c01 = lerp(at(tx.i0, ty.i0, tz.i1), at(tx.i1, ty.i0, tz.i1), tx.t);
                let c11 = lerp(at(tx.i0, ty.i1, tz.i1), at(tx.i1, ty.i1, tz.i1), tx.t);
                let c0 = lerp(c00, c10, ty.t);
                let c1 = lerp(c01, c11, ty.t);
                *dst = T::from_f64(lerp(c0, c1, tz.t));
            }
        }
    });
    Volume::new(out_geom, out)
}

/// Convex combination; exact at `t == 0`.
#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    if t == 0.0 {
        a
    } else {
        a * (1.0 - t) + b * t
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::CtVolume;
    use proptest::prelude::*;

    #[test]
    fn identity_when_already_at_target() {
        let g = Geometry::new([5, 4, 3], [1.0; 3], [2.0, -1.0, 0.5]).unwrap();
        let v = CtVolume::from_fn(g, |[i, j, k]| (i * 7 + j * 13 + k * 31) as i16 - 40).unwrap();
        let out = resample_isotropic(&v, 1.0).unwrap();
        assert_eq!(out, v);
    }

    #[test]
    fn constant_stays_constant() {
        let g = Geometry::new([7, 6, 4], [0.7, 0.7, 2.5], [0.0; 3]).unwrap();
        let v = CtVolume::filled(g, -850).unwrap();
        let out = resample_isotropic(&v, 1.0).unwrap();
        assert_eq!(out.dims(), [5, 4, 10]);
        assert!(out.data().iter().all(|&x| x == -850));
        assert_eq!(out.origin(), v.origin());
        assert_eq!(out.spacing(), [1.0; 3]);
    }

    #[test]
    fn degenerate_axis_extends_nearest_value() {
        let g = Geometry::new([3, 3, 1], [1.0, 1.0, 2.5], [0.0; 3]).unwrap();
        let v = Volume::<f64>::from_fn(g, |[i, j, _]| (i + 10 * j) as f64).unwrap();
        let out = resample_isotropic(&v, 1.0).unwrap();
        assert_eq!(out.dims(), [3, 3, 3]);
        for k in 0..3 {
            assert_eq!(out.get([2, 1, k]), 12.0);
        }
    }

    #[test]
    fn rejects_non_positive_target() {
        let v = CtVolume::filled(Geometry::unit([2, 2, 2]).unwrap(), 0).unwrap();
        assert!(resample_isotropic(&v, 0.0).is_err());
        assert!(resample_isotropic(&v, -1.0).is_err());
    }

    proptest! {
        #[test]
        fn output_within_input_range(
            dims in prop::array::uniform3(1usize..9),
            spacing in prop::array::uniform3(0.4f64..3.0),
            seed in any::<u64>(),
        ) {
            let g = Geometry::new(dims, spacing, [0.0; 3]).unwrap();
            let mut s = seed;
            let v = Volume::<f64>::from_fn(g, |_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 33) as f64 / (1u64 << 31) as f64) * 2000.0 - 1000.0
            }).unwrap();
            let (lo, hi) = v.min_max();
            let out = resample_isotropic(&v, 1.0).unwrap();
            for &x in out.data() {
                prop_assert!(x >= lo - 1e-9 && x <= hi + 1e-9);
            }
        }
    }
}
