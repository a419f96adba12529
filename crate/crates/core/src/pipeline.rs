//! Stage functions shared by the command line and the tests. Every stage has
//! an in-memory form and a file form; the file forms materialize each
//! intermediate artifact so a chained run equals running the stages one by one.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::{stream_name, MipOrder, PipelineConfig};
use crate::csvio::{
    annotations_from_csv, annotations_to_csv, candidates_from_csv, candidates_to_csv,
    evaluation_candidates_from_csv, froc_points_to_csv, scored_to_csv, write_bytes,
    ScoredCandidate,
};
use crate::detect::{group_boxes, reference_blob_detect, Candidate, CandidateSource, GroupParams};
use crate::error::{Error, Result};
use crate::eval::{evaluate, Evaluation, NoduleAnnotation};
use crate::fpr::{classify_cube, extract_cube, heuristic_scorer, Cube32};
use crate::fuse::fuse_streams;
use crate::lungseg::{apply_mask, segment_lung_slice, segment_plane};
use crate::nnet::{Network, Weights};
use crate::phantom::{generate_phantom, PhantomSpec};
use crate::volume::{
    apply_window, extract_plane_slice, mip_slab, read_mpv_file, resample_isotropic,
    stack_plane_slices, write_mpv_file, AnyVolume, CtVolume, GraySlice, GrayVolume, PlaneAxis,
};

/// Scan id derived from a file name: the stem up to its first `.`.
pub fn scan_id_from_path(path: &Path) -> String {
    path.file_name()
        .and_then(|n| n.to_str())
        .and_then(|n| n.split('.').next())
        .filter(|s| !s.is_empty())
        .unwrap_or("scan")
        .to_string()
}

/// Resamples to isotropic spacing, then maps HU to gray levels.
pub fn preprocess(ct: &CtVolume, cfg: &PipelineConfig) -> Result<GrayVolume> {
    cfg.window.validate()?;
    let iso = resample_isotropic(ct, cfg.target_mm)?;
    apply_window(&iso, &cfg.window)
}

/// Axial lung mask as a 0/255 volume.
pub fn segment(gray: &GrayVolume, cfg: &PipelineConfig) -> Result<GrayVolume> {
    segment_plane(gray, PlaneAxis::Axial, &cfg.seg)
}

fn mask_slice(s: &GraySlice, cfg: &PipelineConfig) -> Result<GraySlice> {
    apply_mask(s, &segment_lung_slice(s, &cfg.seg), 0)
}

/// Slices fed to the detector for one stream, lung-masked when configured.
fn stream_slices(gray: &GrayVolume, source: CandidateSource, cfg: &PipelineConfig) -> Result<Vec<GraySlice>> {
    let mask = cfg.detect_use_mask;
    match source {
        CandidateSource::AxialMip10mm => {
            let mip = cfg.mip;
            if mask && cfg.mip_order == MipOrder::AfterMask {
                let axial = PlaneAxis::Axial;
                let masked: Vec<GraySlice> = (0..axial.slice_count(gray.geometry()))
                    .into_par_iter()
                    .map(|i| mask_slice(&extract_plane_slice(gray, axial, i)?, cfg))
                    .collect::<Result<_>>()?;
                let v = stack_plane_slices(*gray.geometry(), &masked)?;
                mip_slab(&v, &mip)
            } else {
                let slabs = mip_slab(gray, &mip)?;
                if mask {
                    slabs.par_iter().map(|s| mask_slice(s, cfg)).collect()
                } else {
                    Ok(slabs)
                }
            }
        }
        CandidateSource::Fused => Err(Error::invalid("stream", "`fused` is not a detection stream")),
        _ => {
            let plane = match source {
                CandidateSource::Axial1mm => PlaneAxis::Axial,
                CandidateSource::Coronal1mm => PlaneAxis::Coronal,
                _ => PlaneAxis::Sagittal,
            };
            (0..plane.slice_count(gray.geometry()))
                .into_par_iter()
                .map(|i| {
                    let s = extract_plane_slice(gray, plane, i)?;
                    if mask {
                        mask_slice(&s, cfg)
                    } else {
                        Ok(s)
                    }
                })
                .collect()
        }
    }
}

/// Runs the reference detector over every slice of one stream, groups the
/// boxes into 3-D candidates and drops those wider than the nodule size limit.
pub fn detect_stream(
    gray: &GrayVolume,
    source: CandidateSource,
    scan_id: &str,
    cfg: &PipelineConfig,
) -> Result<Vec<Candidate>> {
    let slices = stream_slices(gray, source, cfg)?;
    let boxes: Vec<_> = slices
        .par_iter()
        .flat_map_iter(|s| reference_blob_detect(s, &cfg.blob))
        .collect();
    let mut gp: GroupParams = cfg.group;
    if source == CandidateSource::AxialMip10mm {
        let voxel_mm = gray.spacing()[cfg.mip.axis.normal_axis()];
        gp.slice_step = cfg.mip.window_slices(voxel_mm).1;
    }
    let mut cands = group_boxes(&boxes, gray.geometry(), &gp, scan_id, source);
    cands.retain(|c| 2.0 * c.radius_mm <= cfg.max_diameter_mm);
    Ok(cands)
}

/// How fused candidates receive their false-positive-reduction probability.
pub enum Scorer {
    Heuristic,
    Network { net: Network, weights: Weights },
}

impl Scorer {
    pub fn score(&self, cube: &Cube32) -> Result<f64> {
        match self {
            Scorer::Heuristic => Ok(heuristic_scorer(cube)),
            Scorer::Network { net, weights } => classify_cube(net, weights, cube),
        }
    }
}

/// Extracts a cube around every candidate and scores it.
pub fn classify(
    gray: &GrayVolume,
    mask: Option<&GrayVolume>,
    cands: &[Candidate],
    scorer: &Scorer,
    cfg: &PipelineConfig,
) -> Result<Vec<ScoredCandidate>> {
    let mask = if cfg.fpr_use_mask { mask } else { None };
    cands
        .par_iter()
        .map(|c| {
            let cube = extract_cube(gray, c, cfg.margin_vox, mask)?;
            Ok(ScoredCandidate {
                candidate: c.clone(),
                fpr_score: scorer.score(&cube)?,
            })
        })
        .collect()
}

/// File names a chained run writes into its output directory.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelinePaths {
    pub gray: PathBuf,
    pub mask: PathBuf,
    pub streams: Vec<(CandidateSource, PathBuf)>,
    pub fused: PathBuf,
    pub scored: PathBuf,
    pub report: PathBuf,
    pub froc: PathBuf,
}

impl PipelinePaths {
    pub fn new(dir: &Path, cfg: &PipelineConfig) -> Self {
        PipelinePaths {
            gray: dir.join("gray.mpv"),
            mask: dir.join("mask.mpv"),
            streams: cfg
                .streams
                .iter()
                .map(|&s| (s, dir.join(format!("candidates_{}.csv", stream_name(s)))))
                .collect(),
            fused: dir.join("fused.csv"),
            scored: dir.join("scored.csv"),
            report: dir.join("report.txt"),
            froc: dir.join("froc.csv"),
        }
    }
}

fn read_gray(path: &Path) -> Result<GrayVolume> {
    read_mpv_file(path)?.into_gray()
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    Ok(std::fs::read(path)?)
}

pub fn phantom_files(spec: &PhantomSpec, volume: &Path, annotations: &Path) -> Result<Vec<NoduleAnnotation>> {
    let (ct, anns) = generate_phantom(spec)?;
    write_mpv_file(volume, &AnyVolume::Hu(ct))?;
    write_bytes(annotations, &annotations_to_csv(&anns)?)?;
    Ok(anns)
}

pub fn preprocess_file(input: &Path, output: &Path, cfg: &PipelineConfig) -> Result<()> {
    let ct = read_mpv_file(input)?.into_hu()?;
    write_mpv_file(output, &AnyVolume::Gray(preprocess(&ct, cfg)?))
}

pub fn segment_file(gray: &Path, output: &Path, cfg: &PipelineConfig) -> Result<()> {
    let g = read_gray(gray)?;
    write_mpv_file(output, &AnyVolume::Gray(segment(&g, cfg)?))
}

pub fn detect_file(
    gray: &Path,
    source: CandidateSource,
    scan_id: &str,
    output: &Path,
    cfg: &PipelineConfig,
) -> Result<Vec<Candidate>> {
    let g = read_gray(gray)?;
    let cands = detect_stream(&g, source, scan_id, cfg)?;
    write_bytes(output, &candidates_to_csv(&cands)?)?;
    Ok(cands)
}

pub fn fuse_files(inputs: &[PathBuf], output: &Path, cfg: &PipelineConfig) -> Result<Vec<Candidate>> {
    let streams: Vec<Vec<Candidate>> = inputs
        .iter()
        .map(|p| candidates_from_csv(&read_file(p)?))
        .collect::<Result<_>>()?;
    let fused = fuse_streams(&streams, &cfg.merge)?;
    write_bytes(output, &candidates_to_csv(&fused)?)?;
    Ok(fused)
}

pub fn classify_file(
    gray: &Path,
    mask: Option<&Path>,
    candidates: &Path,
    scorer: &Scorer,
    output: &Path,
    cfg: &PipelineConfig,
) -> Result<Vec<ScoredCandidate>> {
    let g = read_gray(gray)?;
    let m = mask.map(read_gray).transpose()?;
    let cands = candidates_from_csv(&read_file(candidates)?)?;
    let scored = classify(&g, m.as_ref(), &cands, scorer, cfg)?;
    write_bytes(output, &scored_to_csv(&scored)?)?;
    Ok(scored)
}

/// Evaluates a candidate or scored-candidate CSV against annotations and
/// writes the text report and FROC points.
pub fn evaluate_files(
    candidates: &Path,
    annotations: &Path,
    report: Option<&Path>,
    froc: Option<&Path>,
    cfg: &PipelineConfig,
) -> Result<Evaluation> {
    let cands = evaluation_candidates_from_csv(&read_file(candidates)?)?;
    let anns = annotations_from_csv(&read_file(annotations)?)?;
    let boot = cfg.bootstrap();
    let ev = evaluate(&cands, &anns, &[], &cfg.hit, (boot.n > 0).then_some(&boot))?;
    if let Some(p) = report {
        write_bytes(p, ev.to_text().as_bytes())?;
    }
    if let Some(p) = froc {
        write_bytes(p, &froc_points_to_csv(&ev.curve))?;
    }
    Ok(ev)
}

/// Chains every stage through files in `out_dir`. Evaluation runs only when
/// annotations are given.
pub fn run_pipeline(
    input: &Path,
    annotations: Option<&Path>,
    out_dir: &Path,
    scan_id: &str,
    scorer: &Scorer,
    cfg: &PipelineConfig,
) -> Result<(PipelinePaths, Option<Evaluation>)> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let paths = PipelinePaths::new(out_dir, cfg);
    preprocess_file(input, &paths.gray, cfg)?;
    segment_file(&paths.gray, &paths.mask, cfg)?;
    for (source, p) in &paths.streams {
        detect_file(&paths.gray, *source, scan_id, p, cfg)?;
    }
    let stream_files: Vec<PathBuf> = paths.streams.iter().map(|(_, p)| p.clone()).collect();
    fuse_files(&stream_files, &paths.fused, cfg)?;
    classify_file(&paths.gray, Some(&paths.mask), &paths.fused, scorer, &paths.scored, cfg)?;
    let ev = match annotations {
        Some(a) => Some(evaluate_files(&paths.scored, a, Some(&paths.report), Some(&paths.froc), cfg)?),
        None => None,
    };
    Ok((paths, ev))
}
