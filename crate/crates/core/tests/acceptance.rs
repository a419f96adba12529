//! Acceptance suite: one test per headline criterion. Each test writes a
//! single `PASS`/`FAIL` line straight to stderr (visible without
//! `--nocapture`) and then asserts.

use std::io::Write;
use std::time::{Duration, Instant};

use nodulecad_core::config::PipelineConfig;
use nodulecad_core::detect::{dice_loss, Candidate, CandidateSource};
use nodulecad_core::eval::{
    bootstrap_ci, cpm, pooled_cpm, stratify, BootstrapSpec, FrocCurve, NoduleAnnotation, NoduleType, ScanRecord,
    SizeBin,
};
use nodulecad_core::fpr::{bce_loss, build_msdnet, MsdNetSpec, PoolMode};
use nodulecad_core::fuse::{fuse_streams, merge_predicate, MergeMode, MergeRule};
use nodulecad_core::nnet::{forward, reference_forward, BlockTag, Tensor, Weights};
use nodulecad_core::phantom::{generate_phantom, PhantomSpec};
use nodulecad_core::pipeline::{detect_stream, phantom_files, run_pipeline, Scorer};
use nodulecad_core::volume::{extract_plane_slice, mip_slab, resample_isotropic, MipSpec, Volume};
use nodulecad_core::{Geometry, GrayVolume, PlaneAxis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "[acceptance] {verdict} {name}: {detail}");
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn round_half_up(x: f64) -> f64 {
    (x + 0.5).floor()
}

// ---------------------------------------------------------------- CPM oracle

#[test]
fn cpm_reproduces_published_table_rows() {
    let rows: [(&str, [f64; 7], f64); 8] = [
        ("ours", [0.893, 0.917, 0.930, 0.942, 0.960, 0.966, 0.973], 0.940),
        ("setio", [0.859, 0.937, 0.958, 0.969, 0.976, 0.982, 0.982], 0.952),
        ("zhang", [0.890, 0.931, 0.944, 0.949, 0.965, 0.972, 0.976], 0.947),
        ("zheng", [0.876, 0.899, 0.912, 0.927, 0.942, 0.948, 0.953], 0.922),
        ("ozdemir", [0.832, 0.879, 0.920, 0.942, 0.951, 0.959, 0.964], 0.921),
        ("wang", [0.788, 0.847, 0.895, 0.934, 0.952, 0.959, 0.963], 0.905),
        ("dou", [0.677, 0.737, 0.815, 0.848, 0.879, 0.907, 0.922], 0.826),
        ("xie", [0.734, 0.744, 0.763, 0.796, 0.824, 0.832, 0.834], 0.790),
    ];
    let rates = [0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0];
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    for (name, sens, published) in rows {
        let curve = FrocCurve::from_points(rates.iter().copied().zip(sens).collect()).unwrap();
        let got = cpm(&curve);
        let err = (got - published).abs();
        worst = worst.max(err);
        if err > 0.001 {
            failures.push(format!("{name}: {got:.4} vs {published}"));
        }
    }
    let elapsed = start.elapsed();
    let pass = failures.is_empty() && elapsed < Duration::from_secs(1);
    report(
        "CPM oracle (8 published rows, ±0.001, <1 s)",
        pass,
        &format!("max |error| {worst:.5}, {elapsed:.2?} {failures:?}"),
    );
    assert!(pass);
}

// ---------------------------------------------------------- MIP equivalence

#[test]
fn mip_matches_brute_force_window_maxima() {
    let start = Instant::now();
    let mut r = rng(2024);
    let mut mismatches = 0usize;
    let mut slabs_checked = 0usize;
    for _ in 0..50 {
        let dims = [r.random_range(1..=32), r.random_range(1..=32), r.random_range(1..=32)];
        let spacing = [r.random_range(0.5..2.5), r.random_range(0.5..2.5), r.random_range(0.5..2.5)];
        let g = Geometry::new(dims, spacing, [0.0; 3]).unwrap();
        let v = GrayVolume::from_fn(g, |_| r.random()).unwrap();
        let axis = [PlaneAxis::Axial, PlaneAxis::Coronal, PlaneAxis::Sagittal][r.random_range(0..3)];
        let stride_mm = r.random_range(0.5..4.0);
        let spec = MipSpec {
            axis,
            thickness_mm: stride_mm + r.random_range(0.0..12.0),
            stride_mm,
        };
        let slabs = mip_slab(&v, &spec).unwrap();

        // Independent window enumeration.
        let normal = match axis {
            PlaneAxis::Axial => 2,
            PlaneAxis::Coronal => 1,
            PlaneAxis::Sagittal => 0,
        };
        let n = dims[normal];
        let vox = spacing[normal];
        let k = (round_half_up(spec.thickness_mm / vox) as usize).max(1);
        let s = (round_half_up(spec.stride_mm / vox) as usize).max(1);
        let windows: Vec<(usize, usize)> = if k > n {
            vec![(0, n)]
        } else {
            (0..n).step_by(s).map(|a| (a, k.min(n - a))).collect()
        };
        if windows.len() != slabs.len() {
            mismatches += 1;
            continue;
        }
        for ((start, len), slab) in windows.into_iter().zip(&slabs) {
            slabs_checked += 1;
            let first = extract_plane_slice(&v, axis, start).unwrap();
            for row in 0..first.rows {
                for col in 0..first.cols {
                    let mut best = 0u8;
                    for i in start..start + len {
                        let mut idx = [0usize; 3];
                        idx[normal] = i;
                        // Row/col axes of each plane: axial (y, x), coronal (z, x), sagittal (z, y).
                        match axis {
                            PlaneAxis::Axial => {
                                idx[1] = row;
                                idx[0] = col;
                            }
                            PlaneAxis::Coronal => {
                                idx[2] = row;
                                idx[0] = col;
                            }
                            PlaneAxis::Sagittal => {
                                idx[2] = row;
                                idx[1] = col;
                            }
                        }
                        best = best.max(v.get(idx));
                    }
                    if slab.get(row, col) != best {
                        mismatches += 1;
                    }
                }
            }
            if slab.index != start || slab.thickness != len {
                mismatches += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = mismatches == 0 && elapsed < Duration::from_secs(10);
    report(
        "MIP equivalence (50 random volumes ≤32³, exact, <10 s)",
        pass,
        &format!("{slabs_checked} slabs, {mismatches} mismatches, {elapsed:.2?}"),
    );
    assert!(pass);
}

// ------------------------------------------------------ resampling exactness

#[test]
fn resampling_reproduces_affine_fields() {
    let mut r = rng(77);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let dims = [r.random_range(2..=24), r.random_range(2..=24), r.random_range(2..=24)];
        let spacing = [r.random_range(0.4..3.0), r.random_range(0.4..3.0), r.random_range(0.4..3.0)];
        let origin = [r.random_range(-50.0..50.0), r.random_range(-50.0..50.0), r.random_range(-50.0..50.0)];
        let coef: [f64; 4] = std::array::from_fn(|_| r.random_range(-5.0..5.0));
        let f = |p: [f64; 3]| coef[0] + coef[1] * p[0] + coef[2] * p[1] + coef[3] * p[2];
        let g = Geometry::new(dims, spacing, origin).unwrap();
        let v: Volume<f64> = Volume::from_fn(g, |idx| f(g.voxel_to_world(idx).unwrap())).unwrap();
        let target = r.random_range(0.5..2.0);
        let out = resample_isotropic(&v, target).unwrap();
        let og = *out.geometry();
        assert_eq!(og.spacing, [target; 3]);
        assert_eq!(og.origin, origin);
        for k in 0..og.dims[2] {
            for j in 0..og.dims[1] {
                for i in 0..og.dims[0] {
                    // Sample position in input index space, held at the last
                    // input centre beyond it.
                    let o = [i, j, k];
                    let p: [f64; 3] = std::array::from_fn(|a| {
                        let idx = (o[a] as f64 * target / spacing[a]).min((dims[a] - 1) as f64);
                        origin[a] + idx * spacing[a]
                    });
                    let want = f(p);
                    let got = out.get(o);
                    worst = worst.max((got - want).abs() / want.abs().max(1.0));
                }
            }
        }
    }
    let pass = worst <= 1e-9;
    report(
        "Resampling exactness (20 affine fields, 1e-9 relative)",
        pass,
        &format!("max relative error {worst:.2e}"),
    );
    assert!(pass);
}

// ------------------------------------------------------- geometry round-trips

fn plane_frame(plane: PlaneAxis) -> (usize, usize, usize) {
    // (normal, row, col) world axes.
    match plane {
        PlaneAxis::Axial => (2, 1, 0),
        PlaneAxis::Coronal => (1, 2, 0),
        PlaneAxis::Sagittal => (0, 2, 1),
    }
}

#[test]
fn plane_and_world_transforms_round_trip() {
    let g = Geometry::new([37, 29, 23], [0.71, 0.83, 1.7], [-101.3, 12.25, -5.5]).unwrap();
    let v = GrayVolume::from_fn(g, |[i, j, k]| ((i * 31 + j * 17 + k * 7) % 251) as u8).unwrap();
    let mut r = rng(5);
    let mut failures = 0usize;
    for plane in [PlaneAxis::Axial, PlaneAxis::Coronal, PlaneAxis::Sagittal] {
        let (na, ra, ca) = plane_frame(plane);
        for _ in 0..1000 {
            let vox = [r.random_range(0..37), r.random_range(0..29), r.random_range(0..23)];
            let (s, row, col) = plane.plane_coords(vox);
            let ok_map = (s, row, col) == (vox[na], vox[ra], vox[ca]) && plane.voxel_of(s, row, col) == vox;
            let world = g.voxel_to_world(vox).unwrap();
            let ok_world = plane.to_world(&g, s as f64, row as f64, col as f64) == world
                && g.world_to_voxel(world).unwrap() == vox;
            let slice = extract_plane_slice(&v, plane, s).unwrap();
            let ok_pixel = slice.get(row, col) == v.get(vox) && slice.voxel_index(row, col) == vox;
            failures += usize::from(!(ok_map && ok_world && ok_pixel));
        }
    }

    // Single-voxel probes through every single-slice detection stream.
    let cfg = PipelineConfig::parse("detect.min_area = 1\ndetect.use_mask = false\n").unwrap();
    let mut worst_frac: f64 = 0.0;
    let mut probes = 0;
    for marker in [[3, 4, 5], [36, 0, 22], [18, 28, 11], [0, 15, 1]] {
        let m = GrayVolume::from_fn(g, |idx| if idx == marker { 240 } else { 0 }).unwrap();
        let want = g.voxel_to_world(marker).unwrap();
        for source in [CandidateSource::Axial1mm, CandidateSource::Coronal1mm, CandidateSource::Sagittal1mm] {
            let c = detect_stream(&m, source, "probe", &cfg).unwrap();
            probes += 1;
            if c.len() != 1 {
                failures += 1;
                continue;
            }
            for ((got, want), sp) in c[0].center.iter().zip(want).zip(g.spacing) {
                worst_frac = worst_frac.max((got - want).abs() / sp);
            }
        }
    }
    let pass = failures == 0 && worst_frac <= 0.5;
    report(
        "Geometry round-trips (3 planes × 1000 voxels exact; probes within ½ voxel)",
        pass,
        &format!("{failures} failures, {probes} probes, worst probe offset {worst_frac:.3} voxel"),
    );
    assert!(pass);
}

// ----------------------------------------------------------- loss gradients

#[test]
fn loss_gradients_match_central_differences() {
    const H: f64 = 1e-4;
    let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-3);
    let mut r = rng(99);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let len = r.random_range(1..=24);
        let pred: Vec<f64> = (0..len).map(|_| r.random_range(0.05..0.95)).collect();
        let target: Vec<f64> = (0..len)
            .map(|_| if r.random_bool(0.7) { f64::from(r.random_bool(0.5) as u8) } else { r.random() })
            .collect();
        let eps = r.random_range(0.1..2.0);
        let (_, grad) = dice_loss(&pred, &target, eps).unwrap();
        for i in 0..len {
            let mut up = pred.clone();
            let mut down = pred.clone();
            up[i] += H;
            down[i] -= H;
            let n = (dice_loss(&up, &target, eps).unwrap().0 - dice_loss(&down, &target, eps).unwrap().0) / (2.0 * H);
            worst = worst.max(rel(grad[i], n));
        }

        // Kept away from 0 and 1, where the h = 1e-4 difference quotient itself
        // carries truncation error of order h²/(3p²).
        let p = r.random_range(0.05..0.95);
        let y = r.random_bool(0.5);
        let (_, d) = bce_loss(p, y);
        let n = (bce_loss(p + H, y).0 - bce_loss(p - H, y).0) / (2.0 * H);
        worst = worst.max(rel(d, n));
    }
    let pass = worst <= 1e-5;
    report(
        "Loss gradients (dice + BCE vs central differences, h=1e-4, ≤1e-5 relative, 100 inputs)",
        pass,
        &format!("max relative error {worst:.2e}"),
    );
    assert!(pass);
}

// --------------------------------------------------------- network structure

/// Layer-by-layer trainable-parameter count from channel bookkeeping alone.
fn counted_params(spec: &MsdNetSpec) -> usize {
    let conv = |cin: usize, cout: usize, k: usize| cout * cin * k * k * k + cout;
    let block = |cin: usize, cout: usize, k: usize| conv(cin, cout, k) + 2 * cout;
    let quarter = |c: usize| ((0.25 * c as f64 + 0.5).floor() as usize).max(1);
    let half = |c: usize| ((0.5 * c as f64 + 0.5).floor() as usize).max(1);
    let bottleneck = |cin: usize, g: usize| block(cin, quarter(cin), 1) + block(quarter(cin), g, 3);

    let mut total = 0;
    let mut ch: Vec<usize> = Vec::new();
    for (s, &f) in spec.initial_filters.iter().enumerate() {
        let cin = if s == 0 { spec.input_channels } else { ch[s - 1] };
        total += block(cin, f, 3);
        ch.push(f);
    }
    let ends = &spec.scale_end_depths;
    for t in 1..=*ends.last().unwrap() {
        let prev = ch.clone();
        for s in 0..ch.len() {
            if t > ends[s] {
                continue;
            }
            let g = spec.growth_rates[s];
            let vertical = s > 0 && (t == 1 || t - 1 <= ends[s - 1]);
            if vertical {
                let gh = g / 2;
                if gh > 0 {
                    total += bottleneck(prev[s], gh);
                }
                total += bottleneck(prev[s - 1], g - gh);
            } else {
                total += bottleneck(prev[s], g);
            }
            ch[s] = prev[s] + g;
        }
        if spec.transition_depths.contains(&t) {
            for s in 0..ch.len() {
                if t <= ends[s] {
                    total += block(ch[s], half(ch[s]), 1);
                    ch[s] = half(ch[s]);
                }
            }
        }
    }
    let cc = spec.classifier_channels;
    total += block(*ch.last().unwrap(), cc, 3) + block(cc, cc, 3);
    // Two stride-2 convs then the pool leave a 1³ map of `cc` channels.
    let mut width = cc;
    for &u in &spec.dense_units {
        total += width * u + u;
        width = u;
    }
    total + width + 1
}

#[test]
fn network_structure_and_executor_agreement() {
    let start = Instant::now();
    let spec = MsdNetSpec::default();
    let net = build_msdnet(&spec).unwrap();
    let blocks = net.blocks();
    let count = |f: fn(&BlockTag) -> bool| blocks.iter().filter(|t| f(t)).count();
    let basic = count(|t| matches!(t, BlockTag::Basic { .. }));
    let transition = count(|t| matches!(t, BlockTag::Transition { .. }));
    let classifier = count(|t| matches!(t, BlockTag::Classifier));
    let params = net.trainable_param_count();
    let oracle = counted_params(&spec);
    let shape_ok = net.output_shape() == [1];

    // Ten reduced-width fixtures keeping the full depth/transition topology.
    let mut r = rng(31);
    let mut worst: f64 = 0.0;
    let mut fixture_params_ok = true;
    for seed in 0..10u64 {
        let small = MsdNetSpec {
            input_size: 16,
            initial_filters: vec![r.random_range(2..=4), r.random_range(3..=6), r.random_range(4..=8)],
            growth_rates: vec![r.random_range(1..=2), r.random_range(2..=3), r.random_range(2..=4)],
            classifier_channels: r.random_range(4..=8),
            dense_units: vec![r.random_range(4..=8), r.random_range(2..=4)],
            pool: PoolMode::Global,
            ..MsdNetSpec::default()
        };
        let net = build_msdnet(&small).unwrap();
        fixture_params_ok &= net.trainable_param_count() == counted_params(&small);
        let mut w = Weights::he_normal(&net, seed);
        w.perturb_batchnorm(seed + 100);
        let x = Tensor::new(vec![1, 16, 16, 16], (0..4096).map(|_| r.random()).collect()).unwrap();
        let fast = forward(&net, &w, &x).unwrap();
        let slow = reference_forward(&net, &w, &x).unwrap();
        worst = worst.max(fast.max_rel_diff(&slow, 1e-12));
    }
    let elapsed = start.elapsed();
    let pass = (basic, transition, classifier) == (32, 5, 1)
        && params == oracle
        && shape_ok
        && fixture_params_ok
        && worst <= 1e-5;
    report(
        "Network structure (32/5/1 blocks, parameter count, 10 fixtures fast vs reference 1e-5)",
        pass,
        &format!(
            "blocks {basic}/{transition}/{classifier}, params {params} (oracle {oracle}), \
             fixture counts ok {fixture_params_ok}, max relative diff {worst:.2e}, {elapsed:.1?}"
        ),
    );
    assert!(pass);
}

// -------------------------------------------------------------------- fusion

#[test]
fn fusion_collapses_shared_nodules_and_keeps_noise() {
    let spec = PhantomSpec {
        n_nodules: 5,
        seed: 3,
        ..PhantomSpec::default()
    };
    let (_, anns) = generate_phantom(&spec).unwrap();
    let mut r = rng(8);
    let sources = [CandidateSource::Axial1mm, CandidateSource::Coronal1mm, CandidateSource::Sagittal1mm];
    let mut noise_centres = Vec::new();
    let streams: Vec<Vec<Candidate>> = sources
        .iter()
        .enumerate()
        .map(|(si, &source)| {
            let mut v: Vec<Candidate> = anns
                .iter()
                .map(|a| Candidate {
                    scan_id: a.scan_id.clone(),
                    center: std::array::from_fn(|k| a.center[k] + r.random_range(-0.5..0.5)),
                    radius_mm: a.diameter_mm / 2.0,
                    score: r.random_range(0.5..1.0),
                    source,
                })
                .collect();
            // Disjoint noise: a private row of points per stream, 20 mm apart
            // and 200 mm away from the phantom.
            for n in 0..4 {
                let c = [300.0 + 20.0 * n as f64, 300.0 + 20.0 * si as f64, 50.0];
                noise_centres.push(c);
                v.push(Candidate {
                    scan_id: spec.scan_id.clone(),
                    center: c,
                    radius_mm: 2.0,
                    score: r.random_range(0.1..0.5),
                    source,
                });
            }
            v
        })
        .collect();
    let fused = fuse_streams(&streams, &MergeRule::default()).unwrap();
    let per_nodule: Vec<usize> = anns
        .iter()
        .map(|a| {
            fused
                .iter()
                .filter(|c| {
                    let d: f64 = (0..3).map(|k| (c.center[k] - a.center[k]).powi(2)).sum::<f64>().sqrt();
                    d <= a.diameter_mm / 2.0
                })
                .count()
        })
        .collect();
    let noise_kept = noise_centres.iter().filter(|n| fused.iter().any(|c| c.center == **n)).count();
    let expected = anns.len() + noise_centres.len();

    let a = Candidate {
        scan_id: "s".into(),
        center: [0.0; 3],
        radius_mm: 5.0,
        score: 0.9,
        source: CandidateSource::Axial1mm,
    };
    let b = Candidate {
        center: [10.0, 0.0, 0.0],
        source: CandidateSource::AxialMip10mm,
        ..a.clone()
    };
    let proximity = MergeRule::default();
    let literal = MergeRule {
        mode: MergeMode::LiteralPaper,
        ..proximity
    };
    let pair = [vec![a.clone()], vec![b.clone()]];
    let modes_differ = !merge_predicate(&a, &b, &proximity)
        && merge_predicate(&a, &b, &literal)
        && fuse_streams(&pair, &proximity).unwrap().len() == 2
        && fuse_streams(&pair, &literal).unwrap().len() == 1;

    let pass = fused.len() == expected
        && per_nodule.iter().all(|&n| n == 1)
        && noise_kept == noise_centres.len()
        && modes_differ;
    report(
        "Fusion (3 streams × 5 nodules + noise → 5 + noise; literal differs at r=5, d=10)",
        pass,
        &format!(
            "{} fused (expected {expected}), per-nodule {per_nodule:?}, noise kept {noise_kept}/{}, modes differ {modes_differ}",
            fused.len(),
            noise_centres.len()
        ),
    );
    assert!(pass);
}

// ------------------------------------------------------------ end to end

#[test]
fn end_to_end_phantom_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let spec = PhantomSpec {
        scan_id: "e2e".into(),
        dims: [256; 3],
        n_nodules: 10,
        diameter_range_mm: (4.0, 16.0),
        seed: 2025,
        ..PhantomSpec::default()
    };
    let volume = dir.path().join("e2e.mpv");
    let anns = dir.path().join("e2e.csv");
    let cfg = PipelineConfig::default();

    let run = |threads: usize, out: &str| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let out = dir.path().join(out);
        pool.install(|| {
            let start = Instant::now();
            phantom_files(&spec, &volume, &anns).unwrap();
            let (paths, ev) = run_pipeline(&volume, Some(&anns), &out, "e2e", &Scorer::Heuristic, &cfg).unwrap();
            (start.elapsed(), paths, ev.unwrap())
        })
    };
    let (single, paths, ev) = run(1, "t1");
    let read_all = |p: &nodulecad_core::pipeline::PipelinePaths| {
        let mut files = vec![&p.gray, &p.mask, &p.fused, &p.scored, &p.report, &p.froc];
        files.extend(p.streams.iter().map(|(_, f)| f));
        files.into_iter().map(|f| std::fs::read(f).unwrap()).collect::<Vec<_>>()
    };
    let first = read_all(&paths);
    let (_, paths4, _) = run(4, "t4");
    let deterministic = read_all(&paths4) == first;

    let sens_at_8 = ev.report.sensitivities[6];
    let overall = ev.strata.overall();
    let pass = sens_at_8 >= 0.9 && deterministic && single < Duration::from_secs(120);
    report(
        "End-to-end phantom (256³, 10 nodules 4–16 mm, sensitivity ≥0.9 at ≤8 FP/scan, thread-independent, <120 s)",
        pass,
        &format!(
            "sensitivity@8FP {sens_at_8:.3}, CPM {:.3}, detected {}/{}, identical outputs at 1 and 4 threads: \
             {deterministic}, single-thread runtime {single:.1?}",
            ev.report.cpm, overall.detected, overall.total
        ),
    );
    assert!(pass);
}

// ------------------------------------------------------------------ bootstrap

#[test]
fn bootstrap_matches_exhaustive_enumeration_and_reproduces() {
    let records = vec![
        ScanRecord {
            scan_id: "a".into(),
            n_nodules: 2,
            detected_scores: vec![0.9, 0.4],
            fp_scores: vec![0.95, 0.3, 0.2],
        },
        ScanRecord {
            scan_id: "b".into(),
            n_nodules: 3,
            detected_scores: vec![0.8],
            fp_scores: vec![0.7, 0.6, 0.5, 0.1],
        },
        ScanRecord {
            scan_id: "c".into(),
            n_nodules: 1,
            detected_scores: vec![0.99],
            fp_scores: vec![],
        },
    ];
    // All 27 equally likely resamples.
    let mut exact: Vec<f64> = Vec::new();
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                exact.push(pooled_cpm([&records[i], &records[j], &records[k]]).unwrap());
            }
        }
    }
    exact.sort_by(f64::total_cmp);
    let quantile = |q: f64| {
        // Smallest value whose cumulative probability reaches q.
        let idx = exact.iter().enumerate().find(|(i, _)| (*i + 1) as f64 / 27.0 >= q - 1e-12).unwrap().0;
        exact[idx]
    };
    let (want_lo, want_hi) = (quantile(0.025), quantile(0.975));
    let spec = BootstrapSpec {
        n: 100_000,
        level: 0.95,
        seed: 17,
    };
    let (lo, hi) = bootstrap_ci(&records, &spec).unwrap();
    let close = (lo - want_lo).abs() <= 0.01 && (hi - want_hi).abs() <= 0.01;

    let small = BootstrapSpec { n: 1000, ..spec };
    let a = bootstrap_ci(&records, &small).unwrap();
    let b = rayon::ThreadPoolBuilder::new()
        .num_threads(3)
        .build()
        .unwrap()
        .install(|| bootstrap_ci(&records, &small).unwrap());
    let reproducible = a.0.to_bits() == b.0.to_bits() && a.1.to_bits() == b.1.to_bits();

    let pass = close && reproducible;
    report(
        "Bootstrap (3-scan exhaustive enumeration within 0.01 at n=100000; bitwise reproducible)",
        pass,
        &format!("CI [{lo:.4}, {hi:.4}] vs exact [{want_lo:.4}, {want_hi:.4}], reproducible {reproducible}"),
    );
    assert!(pass);
}

// ------------------------------------------------------------- stratification

/// Texture rule written from its definition: strict majority of 1s is
/// ground-glass, strict majority of 5s is solid, anything else part-solid.
fn type_oracle(votes: &[u8]) -> NoduleType {
    let ones = votes.iter().filter(|&&v| v == 1).count();
    let fives = votes.iter().filter(|&&v| v == 5).count();
    if 2 * ones > votes.len() {
        NoduleType::GroundGlass
    } else if 2 * fives > votes.len() {
        NoduleType::Solid
    } else {
        NoduleType::PartSolid
    }
}

#[test]
fn stratification_bookkeeping_and_vote_rule() {
    // Brute force over every 4-reader vote combination.
    let mut disagreements = 0;
    let mut combos = 0;
    for code in 0..5usize.pow(4) {
        let votes: Vec<u8> = (0..4).map(|p| (code / 5usize.pow(p) % 5) as u8 + 1).collect();
        combos += 1;
        if NoduleType::from_votes(&votes) != type_oracle(&votes) {
            disagreements += 1;
        }
    }

    // Fixture: every size bin and type, plus two sub-3 mm exclusions.
    let mut r = rng(12);
    let diameters = [2.0, 2.9, 3.0, 4.5, 5.99, 6.0, 7.5, 8.0, 12.0, 14.99, 15.0, 22.0];
    let vote_sets: [&[u8]; 4] = [&[1, 1, 1, 2], &[5, 5, 5, 1], &[2, 3, 4], &[1, 1, 5, 5]];
    let mut anns = Vec::new();
    for (i, &d) in diameters.iter().enumerate() {
        for (j, votes) in vote_sets.iter().enumerate() {
            anns.push(NoduleAnnotation {
                scan_id: format!("scan{}", (i + j) % 3),
                center: [i as f64 * 10.0, j as f64 * 10.0, 0.0],
                diameter_mm: d,
                texture_votes: votes.to_vec(),
                agreement: votes.len() as u32,
            });
        }
    }
    let detected: Vec<bool> = anns.iter().map(|_| r.random_bool(0.6)).collect();
    let st = stratify(&anns, &detected);

    let included: Vec<usize> = (0..anns.len()).filter(|&i| anns[i].diameter_mm >= 3.0).collect();
    let o = st.overall();
    let mut ok = o.total == included.len()
        && o.detected == included.iter().filter(|&&i| detected[i]).count()
        && st.excluded.len() == anns.len() - included.len();
    let (mut size_total, mut size_det, mut type_total, mut type_det) = (0, 0, 0, 0);
    for b in SizeBin::ALL {
        let row = st.by_size(b);
        let mut cells_total = 0;
        for t in NoduleType::ALL {
            let c = st.cell(b, t);
            cells_total += c.total;
            let want = included
                .iter()
                .filter(|&&i| SizeBin::of(anns[i].diameter_mm) == Some(b) && type_oracle(&anns[i].texture_votes) == t)
                .count();
            ok &= c.total == want && c.detected <= c.total;
        }
        ok &= cells_total == row.total;
        size_total += row.total;
        size_det += row.detected;
    }
    for t in NoduleType::ALL {
        type_total += st.by_type(t).total;
        type_det += st.by_type(t).detected;
    }
    ok &= (size_total, size_det) == (o.total, o.detected) && (type_total, type_det) == (o.total, o.detected);

    let pass = ok && disagreements == 0 && combos == 625;
    report(
        "Stratification (bins sum to overall; vote rule on all 5⁴ combinations)",
        pass,
        &format!(
            "{} included / {} excluded, {}/{} detected, {disagreements} of {combos} vote combinations disagree",
            o.total,
            st.excluded.len(),
            o.detected,
            o.total
        ),
    );
    assert!(pass);
}
