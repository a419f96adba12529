//! False-positive reduction: fixed-size cube extraction around candidates,
//! the multi-scale dense classifier, binary cross-entropy and a deterministic
//! heuristic scorer used when no trained weights are available.

mod msdnet;

use nalgebra::{Matrix3, SymmetricEigen};
use rayon::prelude::*;

pub use msdnet::{build_msdnet, MsdNetSpec, PoolMode};

use crate::detect::Candidate;
use crate::error::{Error, Result};
use crate::nnet::{forward, Network, Tensor, Weights};
use crate::volume::GrayVolume;

pub const CUBE_SIDE: usize = 32;
pub const CUBE_LEN: usize = CUBE_SIDE * CUBE_SIDE * CUBE_SIDE;

/// ROI margins (voxels) compared in the margin ablation: none, four, eight.
pub const ROI_MARGINS: [usize; 3] = [0, 4, 8];

/// Default margin: four voxels beyond the candidate radius on an
/// unsegmented volume.
pub const DEFAULT_MARGIN_VOX: usize = 4;

/// 32³ intensities in [0, 1], x fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Cube32 {
    values: Vec<f64>,
    /// Candidate centre in continuous voxel coordinates of the source volume.
    pub center_vox: [f64; 3],
    /// Half-side of the sampled box per axis, in source voxels.
    pub half_side_vox: [f64; 3],
    pub margin_vox: usize,
}

impl Cube32 {
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.len() != CUBE_LEN {
            return Err(Error::shape(CUBE_LEN, values.len()));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid("cube", format!("value {v} outside [0, 1]")));
        }
        Ok(Cube32 {
            values,
            center_vox: [15.5; 3],
            half_side_vox: [16.0; 3],
            margin_vox: 0,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.values[(z * CUBE_SIDE + y) * CUBE_SIDE + x]
    }

    /// `[1, 32, 32, 32]` network input.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(vec![1, CUBE_SIDE, CUBE_SIDE, CUBE_SIDE], self.values.clone()).expect("cube length")
    }

    /// Source-voxel interval `[lo, hi)` covered along axis `a`.
    pub fn extent(&self, a: usize) -> (f64, f64) {
        (self.center_vox[a] - self.half_side_vox[a], self.center_vox[a] + self.half_side_vox[a])
    }
}

/// Samples an axis-aligned box of half-side `radius + margin` voxels about the
/// candidate onto a 32³ grid (cell-centred), trilinearly inside the volume and
/// zero outside it, then divides by 255. With a mask, voxels where the mask is
/// zero read as zero.
pub fn extract_cube(v: &GrayVolume, c: &Candidate, margin_vox: usize, mask: Option<&GrayVolume>) -> Result<Cube32> {
    if let Some(m) = mask {
        if m.dims() != v.dims() {
            return Err(Error::shape(format!("mask {:?}", v.dims()), format!("{:?}", m.dims())));
        }
    }
    let g = v.geometry();
    let center = g.world_to_continuous(c.center);
    let mut half = [0.0; 3];
    for a in 0..3 {
        half[a] = (c.radius_mm / g.spacing[a] + margin_vox as f64).max(0.5);
    }
    let [nx, ny, _] = g.dims;
    let data = v.data();
    let read = |i: usize, j: usize, k: usize| -> f64 {
        let idx = (k * ny + j) * nx + i;
        match mask {
            Some(m) if m.data()[idx] == 0 => 0.0,
            _ => data[idx] as f64,
        }
    };
    // Per-axis sample positions: (floor index, next index, weight) or None outside.
    let axis = |a: usize| -> Vec<Option<(usize, usize, f64)>> {
        let n = g.dims[a];
        (0..CUBE_SIDE)
            .map(|u| {
                let p = center[a] - half[a] + (u as f64 + 0.5) * 2.0 * half[a] / CUBE_SIDE as f64;
                if p < -0.5 || p >= n as f64 - 0.5 {
                    return None;
                }
                let p = p.clamp(0.0, (n - 1) as f64);
                let i0 = p.floor() as usize;
                let i1 = (i0 + 1).min(n - 1);
                Some((i0, i1, p - i0 as f64))
            })
            .collect()
    };
    let (px, py, pz) = (axis(0), axis(1), axis(2));
    let mut values = vec![0.0; CUBE_LEN];
    for (w, pz) in pz.iter().enumerate() {
        let Some((z0, z1, tz)) = *pz else { continue };
        for (u, py) in py.iter().enumerate() {
            let Some((y0, y1, ty)) = *py else { continue };
            for (t, px) in px.iter().enumerate() {
                let Some((x0, x1, tx)) = *px else { continue };
                let lerp = |a: f64, b: f64, t: f64| if t == 0.0 { a } else { a + (b - a) * t };
                let c00 = lerp(read(x0, y0, z0), read(x1, y0, z0), tx);
                let c10 = lerp(read(x0, y1, z0), read(x1, y1, z0), tx);
                let c01 = lerp(read(x0, y0, z1), read(x1, y0, z1), tx);
                let c11 = lerp(read(x0, y1, z1), read(x1, y1, z1), tx);
                let val = lerp(lerp(c00, c10, ty), lerp(c01, c11, ty), tz);
                values[(w * CUBE_SIDE + u) * CUBE_SIDE + t] = (val / 255.0).clamp(0.0, 1.0);
            }
        }
    }
    Ok(Cube32 {
        values,
        center_vox: center,
        half_side_vox: half,
        margin_vox,
    })
}

/// Nodule probability from one deterministic forward pass (dropout inactive).
pub fn classify_cube(net: &Network, weights: &Weights, cube: &Cube32) -> Result<f64> {
    let out = forward(net, weights, &cube.to_tensor())?;
    if out.len() != 1 {
        return Err(Error::shape("scalar network output", format!("{:?}", out.shape())));
    }
    Ok(out.data()[0])
}

/// Classifies independent cubes in parallel; results follow input order.
pub fn classify_cubes(net: &Network, weights: &Weights, cubes: &[Cube32]) -> Result<Vec<f64>> {
    weights.check_bound(net)?;
    cubes.par_iter().map(|c| classify_cube(net, weights, c)).collect()
}

pub const BCE_EPS: f64 = 1e-7;

/// Binary cross-entropy of probability `p` against label `y`, with `p`
/// clamped to `[1e-7, 1 - 1e-7]`. Returns the loss and `d loss / d p`
/// evaluated at the clamped probability.
pub fn bce_loss(p: f64, y: bool) -> (f64, f64) {
    let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
    if y {
        (-p.ln(), -1.0 / p)
    } else {
        (-(1.0 - p).ln(), 1.0 / (1.0 - p))
    }
}

/// Background noise floor of the heuristic, in median absolute deviations.
pub const NOISE_FLOOR_MADS: f64 = 3.0;

/// Logistic gain applied to the heuristic statistic.
pub const HEURISTIC_GAIN: f64 = 10.0;

fn in_central_sphere(x: usize, y: usize, z: usize) -> bool {
    let c = (CUBE_SIDE as f64 - 1.0) / 2.0;
    let r = CUBE_SIDE as f64 / 2.0;
    let d2 = (x as f64 - c).powi(2) + (y as f64 - c).powi(2) + (z as f64 - c).powi(2);
    d2 <= r * r
}

/// Fraction of cube voxels inside the inscribed sphere.
fn sphere_fraction() -> f64 {
    let mut n = 0usize;
    for z in 0..CUBE_SIDE {
        for y in 0..CUBE_SIDE {
            for x in 0..CUBE_SIDE {
                n += in_central_sphere(x, y, z) as usize;
            }
        }
    }
    n as f64 / CUBE_LEN as f64
}

/// Deterministic stand-in for a trained classifier.
///
/// With `m` the cube median, `mad` the median absolute deviation from it and
/// mass `w = max(v - m - 3·mad, 0)`, the object is the 6-connected component
/// of positive mass grown from the heaviest voxel within a quarter side of
/// the centre. Let `f` be the share of the object's mass inside the inscribed
/// sphere and `f0` the sphere's volume share. Sphericity is `λmin / λmax` of
/// the object's mass-weighted second-moment matrix. The
/// statistic `(f - f0) / (1 - f0) · sphericity` (0 when there is no mass) is
/// mapped through `logistic(10 · s)`.
pub fn heuristic_scorer(cube: &Cube32) -> f64 {
    crate::nnet::sigmoid_scalar(HEURISTIC_GAIN * heuristic_statistic(cube))
}

pub fn heuristic_statistic(cube: &Cube32) -> f64 {
    let mut sorted = cube.values.clone();
    sorted.sort_by(f64::total_cmp);
    let median = 0.5 * (sorted[CUBE_LEN / 2 - 1] + sorted[CUBE_LEN / 2]);
    let mut dev: Vec<f64> = sorted.iter().map(|v| (v - median).abs()).collect();
    dev.sort_by(f64::total_cmp);
    let mad = 0.5 * (dev[CUBE_LEN / 2 - 1] + dev[CUBE_LEN / 2]);
    let floor = median + NOISE_FLOOR_MADS * mad;
    let weight: Vec<f64> = cube.values.iter().map(|v| (v - floor).max(0.0)).collect();

    // Seed: heaviest voxel within a quarter side of the centre.
    let c = (CUBE_SIDE as f64 - 1.0) / 2.0;
    let near = (CUBE_SIDE / 4) as f64;
    let idx = |x: usize, y: usize, z: usize| x + CUBE_SIDE * (y + CUBE_SIDE * z);
    let mut seed = None;
    let mut best = 0.0;
    for z in 0..CUBE_SIDE {
        for y in 0..CUBE_SIDE {
            for x in 0..CUBE_SIDE {
                let d2 = (x as f64 - c).powi(2) + (y as f64 - c).powi(2) + (z as f64 - c).powi(2);
                let w = weight[idx(x, y, z)];
                if d2 <= near * near && w > best {
                    best = w;
                    seed = Some((x, y, z));
                }
            }
        }
    }
    let Some(seed) = seed else {
        return 0.0;
    };

    // 6-connected component of positive weight around the seed.
    let mut member = vec![false; CUBE_LEN];
    let mut stack = vec![seed];
    member[idx(seed.0, seed.1, seed.2)] = true;
    let (mut mass, mut inside) = (0.0, 0.0);
    let mut first = [0.0; 3];
    let mut voxels = Vec::new();
    while let Some((x, y, z)) = stack.pop() {
        let w = weight[idx(x, y, z)];
        voxels.push((x, y, z, w));
        mass += w;
        if in_central_sphere(x, y, z) {
            inside += w;
        }
        first[0] += w * x as f64;
        first[1] += w * y as f64;
        first[2] += w * z as f64;
        let p = [x, y, z];
        for a in 0..3 {
            for up in [false, true] {
                let mut q = p;
                if up {
                    if q[a] + 1 == CUBE_SIDE {
                        continue;
                    }
                    q[a] += 1;
                } else {
                    if q[a] == 0 {
                        continue;
                    }
                    q[a] -= 1;
                }
                let i = idx(q[0], q[1], q[2]);
                if !member[i] && weight[i] > 0.0 {
                    member[i] = true;
                    stack.push((q[0], q[1], q[2]));
                }
            }
        }
    }
    let mean = first.map(|f| f / mass);
    let mut m = Matrix3::zeros();
    for &(x, y, z, w) in &voxels {
        let d = [x as f64 - mean[0], y as f64 - mean[1], z as f64 - mean[2]];
        for r in 0..3 {
            for c in 0..3 {
                m[(r, c)] += w * d[r] * d[c];
            }
        }
    }
    let eig = SymmetricEigen::new(m / mass).eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    let sphericity = if hi <= 0.0 { 1.0 } else { (lo / hi).max(0.0) };
    let f0 = sphere_fraction();
    (inside / mass - f0) / (1.0 - f0) * sphericity
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::CandidateSource;
    use crate::nnet::reference_forward;
    use crate::volume::Geometry;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cand(center: [f64; 3], radius_mm: f64) -> Candidate {
        Candidate {
            scan_id: "s".into(),
            center,
            radius_mm,
            score: 1.0,
            source: CandidateSource::Fused,
        }
    }

    #[test]
    fn constant_volume_gives_constant_cube() {
        let v = GrayVolume::filled(Geometry::unit([40, 40, 40]).unwrap(), 51).unwrap();
        let cube = extract_cube(&v, &cand([20.0, 19.5, 21.3], 5.0), 4, None).unwrap();
        assert!(cube.values().iter().all(|&x| x == 0.2));
    }

    #[test]
    fn aligned_box_is_a_direct_crop() {
        let g = Geometry::unit([40, 40, 40]).unwrap();
        let v = GrayVolume::from_fn(g, |[i, j, k]| ((i * 7 + j * 3 + k * 11) % 256) as u8).unwrap();
        // Centre on a voxel corner so the 32 cell centres land on voxel centres 4..35.
        let cube = extract_cube(&v, &cand([19.5, 19.5, 19.5], 16.0), 0, None).unwrap();
        for (x, y, z) in [(0, 0, 0), (31, 0, 5), (3, 17, 31), (12, 12, 12)] {
            assert_eq!(cube.get(x, y, z), v.get([x + 4, y + 4, z + 4]) as f64 / 255.0);
        }
    }

    #[test]
    fn padding_covers_the_out_of_bounds_fraction() {
        // 8³ volume of 255, candidate at voxel 2 on x with radius 4: the box
        // spans [-2, 6]; its part below -0.5 is 1.5 / 8 of the side, i.e. the
        // first 6 of 32 sample planes.
        let v = GrayVolume::filled(Geometry::unit([8, 8, 8]).unwrap(), 255).unwrap();
        let cube = extract_cube(&v, &cand([2.0, 3.5, 3.5], 4.0), 0, None).unwrap();
        for x in 0..32 {
            let expect = if x < 6 { 0.0 } else { 1.0 };
            assert_eq!(cube.get(x, 16, 16), expect, "x = {x}");
        }
        assert_eq!(cube.get(10, 0, 0), 1.0);
    }

    #[test]
    fn mask_zeroes_excluded_voxels() {
        let g = Geometry::unit([10, 10, 10]).unwrap();
        let v = GrayVolume::filled(g, 200).unwrap();
        let mask = GrayVolume::from_fn(g, |[i, _, _]| if i < 5 { 255 } else { 0 }).unwrap();
        let cube = extract_cube(&v, &cand([4.5, 4.5, 4.5], 4.0), 0, Some(&mask)).unwrap();
        assert_eq!(cube.get(0, 16, 16), 200.0 / 255.0);
        assert_eq!(cube.get(31, 16, 16), 0.0);
        let bad = GrayVolume::filled(Geometry::unit([9, 10, 10]).unwrap(), 1).unwrap();
        assert!(extract_cube(&v, &cand([4.5; 3], 4.0), 0, Some(&bad)).is_err());
    }

    proptest! {
        #[test]
        fn larger_margins_nest(
            c in proptest::array::uniform3(0.0f64..30.0),
            r in 0.5f64..10.0,
        ) {
            let v = GrayVolume::filled(Geometry::unit([30, 30, 30]).unwrap(), 9).unwrap();
            let k = cand(c, r);
            let cubes: Vec<_> = ROI_MARGINS.iter().map(|&m| extract_cube(&v, &k, m, None).unwrap()).collect();
            for a in 0..3 {
                for w in cubes.windows(2) {
                    let (lo0, hi0) = w[0].extent(a);
                    let (lo1, hi1) = w[1].extent(a);
                    prop_assert!(lo1 < lo0 && hi0 < hi1);
                }
            }
        }
    }

    #[test]
    fn bce_values() {
        assert!(bce_loss(1.0, true).0 < 1e-6);
        for y in [false, true] {
            assert!((bce_loss(0.5, y).0 - std::f64::consts::LN_2).abs() < 1e-15);
        }
        for i in 1..=9 {
            let p = i as f64 / 10.0;
            for y in [false, true] {
                let h = 1e-6;
                let fd = (bce_loss(p + h, y).0 - bce_loss(p - h, y).0) / (2.0 * h);
                let g = bce_loss(p, y).1;
                assert!((fd - g).abs() <= 1e-6 * g.abs(), "p={p} y={y}");
            }
        }
    }

    fn ball_cube(radius: f64) -> Cube32 {
        let mut v = vec![0.0; CUBE_LEN];
        for z in 0..32 {
            for y in 0..32 {
                for x in 0..32 {
                    let d = ((x as f64 - 15.5).powi(2) + (y as f64 - 15.5).powi(2) + (z as f64 - 15.5).powi(2)).sqrt();
                    if d <= radius {
                        v[(z * 32 + y) * 32 + x] = 0.8;
                    }
                }
            }
        }
        Cube32::from_values(v).unwrap()
    }

    #[test]
    fn heuristic_scorer_fixtures() {
        assert!(heuristic_scorer(&ball_cube(8.0)) > 0.9);
        assert_eq!(heuristic_scorer(&Cube32::from_values(vec![0.0; CUBE_LEN]).unwrap()), 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let noise = Cube32::from_values((0..CUBE_LEN).map(|_| rng.random::<f64>()).collect()).unwrap();
        let s = heuristic_scorer(&noise);
        assert!(s > 0.3 && s < 0.7, "{s}");
        // A rod along x through the centre has low sphericity.
        let mut rod = vec![0.0; CUBE_LEN];
        for x in 0..32 {
            for (y, z) in [(15, 15), (15, 16), (16, 15), (16, 16)] {
                rod[(z * 32 + y) * 32 + x] = 1.0;
            }
        }
        assert!(heuristic_scorer(&Cube32::from_values(rod).unwrap()) < 0.6);
    }

    fn small_spec() -> MsdNetSpec {
        MsdNetSpec {
            initial_filters: vec![4, 6, 8],
            growth_rates: vec![2, 4, 4],
            scale_end_depths: vec![2, 3, 4],
            transition_depths: vec![2, 3],
            classifier_channels: 4,
            dense_units: vec![6, 3],
            ..Default::default()
        }
    }

    #[test]
    fn zero_weights_give_one_half() {
        let net = build_msdnet(&small_spec()).unwrap();
        let cube = ball_cube(6.0);
        let p = classify_cube(&net, &Weights::zeros_for(&net), &cube).unwrap();
        assert_eq!(p, 0.5);
        assert!(matches!(classify_cube(&net, &Weights::new(), &cube), Err(Error::UnboundWeight(_))));
    }

    #[test]
    fn classification_is_deterministic_and_matches_reference() {
        let net = build_msdnet(&small_spec()).unwrap();
        let mut w = Weights::he_normal(&net, 77);
        w.perturb_batchnorm(78);
        let cube = ball_cube(7.0);
        let a = classify_cube(&net, &w, &cube).unwrap();
        assert_eq!(a.to_bits(), classify_cube(&net, &w, &cube).unwrap().to_bits());
        assert!(a > 0.0 && a < 1.0);
        let r = reference_forward(&net, &w, &cube.to_tensor()).unwrap().data()[0];
        assert!((a - r).abs() <= 1e-5 * r.abs());
        let batch = classify_cubes(&net, &w, &[cube.clone(), ball_cube(3.0)]).unwrap();
        assert_eq!(batch[0].to_bits(), a.to_bits());
    }
}
