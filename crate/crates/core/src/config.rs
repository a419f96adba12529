//! Plain-text pipeline configuration: UTF-8 `key = value` lines, `#` starts a
//! comment, unknown keys are rejected.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::detect::{BlobParams, CandidateSource, GroupParams};
use crate::error::{Error, Result};
use crate::eval::{BootstrapSpec, CreditRule, HitRule};
use crate::fpr::DEFAULT_MARGIN_VOX;
use crate::fuse::{MergeMode, MergeRule};
use crate::lungseg::{BorderRule, Connectivity, SegParams, StructuringElement};
use crate::volume::{MipSpec, WindowSpec};

/// Whether the MIP stream is projected from the windowed volume and then
/// lung-masked slab by slab, or projected from slices that were masked first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MipOrder {
    BeforeMask,
    AfterMask,
}

/// Every tunable of the staged pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub window: WindowSpec,
    pub target_mm: f64,
    pub mip: MipSpec,
    pub mip_order: MipOrder,
    pub seg: SegParams,
    pub blob: BlobParams,
    /// Mask slices with the lung segmentation before detection.
    pub detect_use_mask: bool,
    pub group: GroupParams,
    /// Grouped candidates wider than this are dropped (nodules are at most
    /// 30 mm across; longer chains are vessels or airway walls).
    pub max_diameter_mm: f64,
    pub streams: Vec<CandidateSource>,
    pub merge: MergeRule,
    pub margin_vox: usize,
    /// Extract cubes from the segmented (masked) volume.
    pub fpr_use_mask: bool,
    pub hit: HitRule,
    /// Bootstrap resamples for the CPM confidence interval; 0 skips it.
    pub bootstrap_n: usize,
    pub bootstrap_level: f64,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            window: WindowSpec::default(),
            target_mm: 1.0,
            mip: MipSpec::default(),
            mip_order: MipOrder::BeforeMask,
            seg: SegParams {
                fill_holes: true,
                ..SegParams::default()
            },
            blob: BlobParams {
                min_fill: 0.5,
                max_aspect: 2.0,
                ..BlobParams::default()
            },
            detect_use_mask: true,
            group: GroupParams {
                max_elongation: Some(3.0),
                ..GroupParams::default()
            },
            max_diameter_mm: 30.0,
            streams: vec![
                CandidateSource::Axial1mm,
                CandidateSource::Coronal1mm,
                CandidateSource::Sagittal1mm,
                CandidateSource::AxialMip10mm,
            ],
            merge: MergeRule::default(),
            margin_vox: DEFAULT_MARGIN_VOX,
            fpr_use_mask: false,
            hit: HitRule::default(),
            bootstrap_n: 1000,
            bootstrap_level: 0.95,
            seed: 0,
        }
    }
}

/// Short stream name used on the command line and in configs.
pub fn stream_name(s: CandidateSource) -> &'static str {
    match s {
        CandidateSource::Axial1mm => "axial",
        CandidateSource::Coronal1mm => "coronal",
        CandidateSource::Sagittal1mm => "sagittal",
        CandidateSource::AxialMip10mm => "mip",
        CandidateSource::Fused => "fused",
    }
}

/// Parses `axial`, `coronal`, `sagittal` or `mip` (or a full source name).
pub fn parse_stream(s: &str) -> Result<CandidateSource> {
    match s.trim() {
        "axial" => Ok(CandidateSource::Axial1mm),
        "coronal" => Ok(CandidateSource::Coronal1mm),
        "sagittal" => Ok(CandidateSource::Sagittal1mm),
        "mip" => Ok(CandidateSource::AxialMip10mm),
        other => match other.parse()? {
            CandidateSource::Fused => Err(Error::invalid("stream", "`fused` is not a detection stream")),
            s => Ok(s),
        },
    }
}

fn se_name(se: &Option<StructuringElement>) -> String {
    match se {
        None => "none".into(),
        Some(StructuringElement::Square3) => "square3".into(),
        Some(StructuringElement::Disk(r)) => format!("disk{r}"),
    }
}

fn parse_bool(v: &str) -> std::result::Result<bool, String> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("`{v}` is not a boolean")),
    }
}

fn parse_num<T: FromStr>(v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("`{v}` is not a valid number"))
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config {
                    key: line.to_string(),
                    reason: format!("line {}: expected `key = value`", n + 1),
                });
            };
            let (key, value) = (key.trim(), value.trim());
            cfg.set(key, value).map_err(|reason| Error::Config {
                key: key.to_string(),
                reason,
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies one setting; the error is a human-readable reason.
    pub fn set(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        let err = |e: Error| e.to_string();
        match key {
            "window.lo_hu" => self.window.lo_hu = parse_num(v)?,
            "window.hi_hu" => self.window.hi_hu = parse_num(v)?,
            "resample.target_mm" => self.target_mm = parse_num(v)?,
            "mip.thickness_mm" => self.mip.thickness_mm = parse_num(v)?,
            "mip.stride_mm" => self.mip.stride_mm = parse_num(v)?,
            "mip.order" => {
                self.mip_order = match v {
                    "before_mask" => MipOrder::BeforeMask,
                    "after_mask" => MipOrder::AfterMask,
                    _ => return Err(format!("`{v}` (expected before_mask or after_mask)")),
                }
            }
            "seg.close_se" | "seg.dilate_se" => {
                let se = if v == "none" { None } else { Some(v.parse().map_err(err)?) };
                if key == "seg.close_se" {
                    self.seg.close_se = se;
                } else {
                    self.seg.dilate_se = se;
                }
            }
            "seg.border_rule" => {
                self.seg.border_rule = match v {
                    "any_edge" => BorderRule::AnyEdge,
                    "left_right" => BorderRule::LeftRight,
                    _ => return Err(format!("`{v}` (expected any_edge or left_right)")),
                }
            }
            "seg.border_connectivity" => {
                self.seg.border_connectivity = match v {
                    "4" => Connectivity::Four,
                    "8" => Connectivity::Eight,
                    _ => return Err(format!("`{v}` (expected 4 or 8)")),
                }
            }
            "seg.fill_holes" => self.seg.fill_holes = parse_bool(v)?,
            "detect.threshold" => self.blob.thresh = parse_num(v)?,
            "detect.min_area" => self.blob.min_area = parse_num(v)?,
            "detect.max_area" => self.blob.max_area = parse_num(v)?,
            "detect.min_fill" => self.blob.min_fill = parse_num(v)?,
            "detect.max_aspect" => self.blob.max_aspect = parse_num(v)?,
            "detect.use_mask" => self.detect_use_mask = parse_bool(v)?,
            "detect.link_dist_mm" => self.group.link_dist_mm = parse_num(v)?,
            "detect.max_elongation" => {
                self.group.max_elongation = if v == "none" { None } else { Some(parse_num(v)?) }
            }
            "detect.max_diameter_mm" => self.max_diameter_mm = parse_num(v)?,
            "detect.streams" => {
                self.streams = v.split(',').map(parse_stream).collect::<Result<_>>().map_err(err)?;
            }
            "fuse.mode" => self.merge.mode = v.parse::<MergeMode>().map_err(err)?,
            "fuse.factor" => self.merge.factor = parse_num(v)?,
            "fpr.margin_vox" => self.margin_vox = parse_num(v)?,
            "fpr.use_mask" => self.fpr_use_mask = parse_bool(v)?,
            "eval.hit_radius_scale" => self.hit.radius_scale = parse_num(v)?,
            "eval.credit" => self.hit.credit = v.parse::<CreditRule>().map_err(err)?,
            "eval.bootstrap_n" => self.bootstrap_n = parse_num(v)?,
            "eval.bootstrap_level" => self.bootstrap_level = parse_num(v)?,
            "seed" => self.seed = parse_num(v)?,
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    /// Validates every value with its owning module; errors name the key.
    pub fn validate(&self) -> Result<()> {
        fn key(k: &'static str) -> impl Fn(Error) -> Error {
            move |e| Error::Config {
                key: k.to_string(),
                reason: e.to_string(),
            }
        }
        self.window.validate().map_err(key("window.lo_hu"))?;
        if !(self.target_mm > 0.0) || !self.target_mm.is_finite() {
            return Err(Error::Config {
                key: "resample.target_mm".into(),
                reason: format!("{} must be > 0", self.target_mm),
            });
        }
        self.mip.validate().map_err(key("mip.thickness_mm"))?;
        self.seg.validate().map_err(key("seg.close_se"))?;
        if self.blob.min_area == 0 || self.blob.min_area > self.blob.max_area {
            return Err(Error::Config {
                key: "detect.min_area".into(),
                reason: "need 1 <= min_area <= max_area".into(),
            });
        }
        if !(0.0..=1.0).contains(&self.blob.min_fill) {
            return Err(Error::Config {
                key: "detect.min_fill".into(),
                reason: "must lie in [0, 1]".into(),
            });
        }
        if !(self.blob.max_aspect >= 1.0) {
            return Err(Error::Config {
                key: "detect.max_aspect".into(),
                reason: "must be >= 1".into(),
            });
        }
        if !(self.group.link_dist_mm >= 0.0) {
            return Err(Error::Config {
                key: "detect.link_dist_mm".into(),
                reason: "must be >= 0".into(),
            });
        }
        if self.group.max_elongation.is_some_and(|e| !(e > 0.0)) {
            return Err(Error::Config {
                key: "detect.max_elongation".into(),
                reason: "must be > 0 or `none`".into(),
            });
        }
        if !(self.max_diameter_mm > 0.0) {
            return Err(Error::Config {
                key: "detect.max_diameter_mm".into(),
                reason: "must be > 0".into(),
            });
        }
        if self.streams.is_empty() {
            return Err(Error::Config {
                key: "detect.streams".into(),
                reason: "at least one stream is required".into(),
            });
        }
        self.merge.validate().map_err(key("fuse.factor"))?;
        self.hit.validate().map_err(key("eval.hit_radius_scale"))?;
        if self.bootstrap_n > 0 {
            self.bootstrap().validate().map_err(key("eval.bootstrap_n"))?;
        }
        Ok(())
    }

    pub fn bootstrap(&self) -> BootstrapSpec {
        BootstrapSpec {
            n: self.bootstrap_n,
            level: self.bootstrap_level,
            seed: self.seed,
        }
    }

    /// Canonical text form; parsing it yields an equal configuration.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").unwrap();
        kv("window.lo_hu", self.window.lo_hu.to_string());
        kv("window.hi_hu", self.window.hi_hu.to_string());
        kv("resample.target_mm", self.target_mm.to_string());
        kv("mip.thickness_mm", self.mip.thickness_mm.to_string());
        kv("mip.stride_mm", self.mip.stride_mm.to_string());
        kv(
            "mip.order",
            match self.mip_order {
                MipOrder::BeforeMask => "before_mask",
                MipOrder::AfterMask => "after_mask",
            }
            .into(),
        );
        kv("seg.close_se", se_name(&self.seg.close_se));
        kv("seg.dilate_se", se_name(&self.seg.dilate_se));
        kv(
            "seg.border_rule",
            match self.seg.border_rule {
                BorderRule::AnyEdge => "any_edge",
                BorderRule::LeftRight => "left_right",
            }
            .into(),
        );
        kv(
            "seg.border_connectivity",
            match self.seg.border_connectivity {
                Connectivity::Four => "4",
                Connectivity::Eight => "8",
            }
            .into(),
        );
        kv("seg.fill_holes", self.seg.fill_holes.to_string());
        kv("detect.threshold", self.blob.thresh.to_string());
        kv("detect.min_area", self.blob.min_area.to_string());
        kv("detect.max_area", self.blob.max_area.to_string());
        kv("detect.min_fill", self.blob.min_fill.to_string());
        kv("detect.max_aspect", self.blob.max_aspect.to_string());
        kv("detect.use_mask", self.detect_use_mask.to_string());
        kv("detect.link_dist_mm", self.group.link_dist_mm.to_string());
        kv(
            "detect.max_elongation",
            self.group.max_elongation.map_or("none".into(), |e| e.to_string()),
        );
        kv("detect.max_diameter_mm", self.max_diameter_mm.to_string());
        kv(
            "detect.streams",
            self.streams.iter().map(|s| stream_name(*s)).collect::<Vec<_>>().join(","),
        );
        kv(
            "fuse.mode",
            match self.merge.mode {
                MergeMode::Proximity => "proximity",
                MergeMode::LiteralPaper => "literal",
            }
            .into(),
        );
        kv("fuse.factor", self.merge.factor.to_string());
        kv("fpr.margin_vox", self.margin_vox.to_string());
        kv("fpr.use_mask", self.fpr_use_mask.to_string());
        kv("eval.hit_radius_scale", self.hit.radius_scale.to_string());
        kv(
            "eval.credit",
            match self.hit.credit {
                CreditRule::HighestScore => "highest_score",
                CreditRule::Nearest => "nearest",
            }
            .into(),
        );
        kv("eval.bootstrap_n", self.bootstrap_n.to_string());
        kv("eval.bootstrap_level", self.bootstrap_level.to_string());
        kv("seed", self.seed.to_string());
        s
    }
}
