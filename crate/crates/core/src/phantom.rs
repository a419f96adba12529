//! Seeded synthetic chest phantom with exact ground truth: an elliptic body
//! cylinder surrounded by air, two capped elliptic lung cylinders, tubular
//! vessels and spherical nodules with a soft one-voxel edge, plus Gaussian
//! noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::detect::dist3;
use crate::error::{Error, Result};
use crate::eval::NoduleAnnotation;
use crate::volume::{CtVolume, Geometry, Voxel};

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub scan_id: String,
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
    pub n_nodules: usize,
    /// Inclusive diameter range in mm; both ends >= 3.
    pub diameter_range_mm: (f64, f64),
    pub nodule_hu: f64,
    /// Share of nodules inserted as uniform ground-glass spheres.
    pub ggn_fraction: f64,
    pub ggn_hu: f64,
    pub n_vessels: usize,
    pub vessel_radius_mm: f64,
    pub vessel_hu: f64,
    pub lung_hu: f64,
    pub body_hu: f64,
    pub air_hu: f64,
    pub noise_sigma: f64,
    /// Minimum gap between a nodule surface and the lung wall, another
    /// nodule, or a vessel surface.
    pub clearance_mm: f64,
    pub max_attempts: usize,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            scan_id: "phantom".into(),
            dims: [128, 128, 128],
            spacing: [1.0; 3],
            origin: [0.0; 3],
            n_nodules: 5,
            diameter_range_mm: (4.0, 16.0),
            nodule_hu: 40.0,
            ggn_fraction: 0.0,
            ggn_hu: -400.0,
            n_vessels: 8,
            vessel_radius_mm: 1.5,
            vessel_hu: 50.0,
            lung_hu: -850.0,
            body_hu: 40.0,
            air_hu: -1000.0,
            noise_sigma: 20.0,
            clearance_mm: 4.0,
            max_attempts: 20_000,
            seed: 0,
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        Geometry::new(self.dims, self.spacing, self.origin)?;
        let (lo, hi) = self.diameter_range_mm;
        if !(lo >= 3.0) || !(hi >= lo) || !hi.is_finite() {
            return Err(Error::invalid("phantom", format!("diameter range ({lo}, {hi}) must satisfy 3 <= lo <= hi")));
        }
        if !(0.0..=1.0).contains(&self.ggn_fraction) {
            return Err(Error::invalid("phantom", "ggn_fraction must lie in [0, 1]"));
        }
        if !(self.noise_sigma >= 0.0) || !(self.vessel_radius_mm > 0.0) || !(self.clearance_mm >= 0.0) {
            return Err(Error::invalid("phantom", "noise sigma, vessel radius and clearance must be non-negative (radius > 0)"));
        }
        if self.max_attempts == 0 {
            return Err(Error::invalid("phantom", "max_attempts must be >= 1"));
        }
        Ok(())
    }
}

/// Anatomy in millimetres relative to the first voxel centre.
#[derive(Debug, Clone, Copy)]
struct Layout {
    center: [f64; 2],
    body: [f64; 2],
    lung_cx: [f64; 2],
    lung: [f64; 2],
    lung_z: (f64, f64),
}

impl Layout {
    fn new(g: &Geometry) -> Self {
        let ext = [0, 1, 2].map(|a| (g.dims[a] - 1) as f64 * g.spacing[a]);
        let full = [0, 1, 2].map(|a| g.dims[a] as f64 * g.spacing[a]);
        let c = [ext[0] / 2.0, ext[1] / 2.0];
        Layout {
            center: c,
            body: [0.44 * full[0], 0.36 * full[1]],
            lung_cx: [c[0] - 0.2 * full[0], c[0] + 0.2 * full[0]],
            lung: [0.15 * full[0], 0.27 * full[1]],
            lung_z: (0.12 * full[2], ext[2] - 0.12 * full[2]),
        }
    }

    fn in_body(&self, p: [f64; 3]) -> bool {
        ((p[0] - self.center[0]) / self.body[0]).powi(2) + ((p[1] - self.center[1]) / self.body[1]).powi(2) <= 1.0
    }

    /// Index of the lung containing `p`.
    fn lung_of(&self, p: [f64; 3]) -> Option<usize> {
        if p[2] < self.lung_z.0 || p[2] > self.lung_z.1 {
            return None;
        }
        (0..2).find(|&l| {
            ((p[0] - self.lung_cx[l]) / self.lung[0]).powi(2) + ((p[1] - self.center[1]) / self.lung[1]).powi(2) <= 1.0
        })
    }

    /// True when the whole ball lies inside one lung (checked on a dense set
    /// of surface points).
    fn ball_in_lung(&self, c: [f64; 3], r: f64) -> bool {
        let Some(l) = self.lung_of(c) else { return false };
        fibonacci_sphere(64).iter().all(|d| {
            let p = [c[0] + r * d[0], c[1] + r * d[1], c[2] + r * d[2]];
            self.lung_of(p) == Some(l)
        })
    }
}

fn fibonacci_sphere(n: usize) -> Vec<[f64; 3]> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - y * y).sqrt();
            let t = golden * i as f64;
            [r * t.cos(), y, r * t.sin()]
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
struct Vessel {
    a: [f64; 3],
    b: [f64; 3],
}

fn dist_to_segment(p: [f64; 3], v: &Vessel) -> f64 {
    let ab = [v.b[0] - v.a[0], v.b[1] - v.a[1], v.b[2] - v.a[2]];
    let ap = [p[0] - v.a[0], p[1] - v.a[1], p[2] - v.a[2]];
    let len2 = ab.iter().map(|x| x * x).sum::<f64>();
    let t = if len2 == 0.0 {
        0.0
    } else {
        ((ap[0] * ab[0] + ap[1] * ab[1] + ap[2] * ab[2]) / len2).clamp(0.0, 1.0)
    };
    dist3(p, [v.a[0] + t * ab[0], v.a[1] + t * ab[1], v.a[2] + t * ab[2]])
}

#[derive(Debug, Clone, Copy)]
struct Ball {
    c: [f64; 3],
    r: f64,
    hu: f64,
}

/// Partial-volume weight of a surface at signed distance `r - d` (mm) over a
/// one-voxel ramp.
fn coverage(r: f64, d: f64, voxel: f64) -> f64 {
    ((r - d) / voxel + 0.5).clamp(0.0, 1.0)
}

/// Generates the phantom volume and one annotation per inserted nodule.
pub fn generate_phantom(spec: &PhantomSpec) -> Result<(CtVolume, Vec<NoduleAnnotation>)> {
    spec.validate()?;
    let g = Geometry::new(spec.dims, spec.spacing, spec.origin)?;
    let lay = Layout::new(&g);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let ext = [0, 1, 2].map(|a| (g.dims[a] - 1) as f64 * g.spacing[a]);

    let mut vessels = Vec::with_capacity(spec.n_vessels);
    let mut tries = 0;
    while vessels.len() < spec.n_vessels {
        tries += 1;
        if tries > spec.max_attempts {
            return Err(Error::Infeasible(format!(
                "placed {} of {} vessels: endpoints must lie inside one lung",
                vessels.len(),
                spec.n_vessels
            )));
        }
        let p = |rng: &mut ChaCha8Rng| [0, 1, 2].map(|a| rng.random_range(0.0..=ext[a]));
        let (a, b) = (p(&mut rng), p(&mut rng));
        let la = lay.lung_of(a);
        if la.is_none() || la != lay.lung_of(b) || dist3(a, b) < 0.25 * ext[2] {
            continue;
        }
        vessels.push(Vessel { a, b });
    }

    let voxel_min = spec.spacing.iter().copied().fold(f64::INFINITY, f64::min);
    let mut balls: Vec<Ball> = Vec::with_capacity(spec.n_nodules);
    let mut anns = Vec::with_capacity(spec.n_nodules);
    for k in 0..spec.n_nodules {
        let (lo, hi) = spec.diameter_range_mm;
        let mut fails = [0usize; 3];
        let placed = loop {
            if fails.iter().sum::<usize>() >= spec.max_attempts {
                let names = ["inside lung with wall clearance", "no overlap with other nodules", "clear of vessels"];
                let worst = (0..3).max_by_key(|&i| fails[i]).unwrap();
                return Err(Error::Infeasible(format!(
                    "could not place nodule {} of {} after {} attempts; most violated constraint: {}",
                    k + 1,
                    spec.n_nodules,
                    spec.max_attempts,
                    names[worst]
                )));
            }
            let d = if hi > lo { rng.random_range(lo..=hi) } else { lo };
            let r = d / 2.0;
            let idx = [0, 1, 2].map(|a| rng.random_range(0..g.dims[a]));
            let c = [0, 1, 2].map(|a| idx[a] as f64 * g.spacing[a]);
            if !lay.ball_in_lung(c, r + spec.clearance_mm) {
                fails[0] += 1;
                continue;
            }
            if balls.iter().any(|b| dist3(b.c, c) <= b.r + r + spec.clearance_mm) {
                fails[1] += 1;
                continue;
            }
            if vessels
                .iter()
                .any(|v| dist_to_segment(c, v) <= r + spec.vessel_radius_mm + spec.clearance_mm)
            {
                fails[2] += 1;
                continue;
            }
            break (c, d);
        };
        let ggn = rng.random_bool(spec.ggn_fraction);
        let (c, d) = placed;
        balls.push(Ball {
            c,
            r: d / 2.0,
            hu: if ggn { spec.ggn_hu } else { spec.nodule_hu },
        });
        anns.push(NoduleAnnotation {
            scan_id: spec.scan_id.clone(),
            center: [0, 1, 2].map(|a| spec.origin[a] + c[a]),
            diameter_mm: d,
            texture_votes: vec![if ggn { 1 } else { 5 }; 4],
            agreement: 4,
        });
    }

    let [nx, ny, _] = g.dims;
    let plane = nx * ny;
    let mut field = vec![0f64; g.len()];
    field.par_chunks_mut(plane).enumerate().for_each(|(k, slab)| {
        let z = k as f64 * g.spacing[2];
        for j in 0..ny {
            for i in 0..nx {
                let p = [i as f64 * g.spacing[0], j as f64 * g.spacing[1], z];
                let mut hu = if lay.lung_of(p).is_some() {
                    spec.lung_hu
                } else if lay.in_body(p) {
                    spec.body_hu
                } else {
                    spec.air_hu
                };
                for v in &vessels {
                    let w = coverage(spec.vessel_radius_mm, dist_to_segment(p, v), voxel_min);
                    if w > 0.0 {
                        hu += w * (spec.vessel_hu - hu);
                    }
                }
                for b in &balls {
                    let w = coverage(b.r, dist3(p, b.c), voxel_min);
                    if w > 0.0 {
                        hu += w * (b.hu - hu);
                    }
                }
                slab[j * nx + i] = hu;
            }
        }
    });

    if spec.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, spec.noise_sigma).expect("sigma validated");
        let mut noise_rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x9E37_79B9_7F4A_7C15);
        for v in field.iter_mut() {
            *v += normal.sample(&mut noise_rng);
        }
    }
    let vol = CtVolume::new(g, field.into_iter().map(i16::from_f64).collect())?;
    Ok((vol, anns))
}

/// True when the world point lies in the generated lung field (before noise).
pub fn in_lung_field(spec: &PhantomSpec, world: [f64; 3]) -> bool {
    let Ok(g) = Geometry::new(spec.dims, spec.spacing, spec.origin) else { return false };
    let p = [0, 1, 2].map(|a| world[a] - spec.origin[a]);
    Layout::new(&g).lung_of(p).is_some()
}
