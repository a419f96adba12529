//! Hit matching, FROC curves, the seven-point CPM, scan-level bootstrap
//! confidence intervals and size/type stratification.

mod bootstrap;
mod froc;
mod hits;
mod stratify;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

pub use bootstrap::{bootstrap_ci, bootstrap_replicates, nearest_rank, pooled_cpm, BootstrapSpec};
pub use froc::{cpm, cpm_sensitivities, froc_curve, FrocCurve, CPM_RATES};
pub use hits::{match_hits, CreditRule, HitLabel, HitResult, HitRule};
pub use stratify::{stratify, NoduleType, SizeBin, StratCell, Stratification};

use crate::detect::Candidate;
use crate::error::{Error, Result};

/// Ground-truth nodule.
#[derive(Debug, Clone, PartialEq)]
pub struct NoduleAnnotation {
    pub scan_id: String,
    pub center: [f64; 3],
    pub diameter_mm: f64,
    /// Texture scores in 1..=5 (1 ground-glass, 5 solid); may be empty.
    pub texture_votes: Vec<u8>,
    /// Number of readers who marked the nodule.
    pub agreement: u32,
}

impl NoduleAnnotation {
    pub fn validate(&self) -> Result<()> {
        if !(self.diameter_mm > 0.0) || !self.diameter_mm.is_finite() {
            return Err(Error::invalid("annotation", format!("diameter {} must be > 0", self.diameter_mm)));
        }
        if let Some(v) = self.texture_votes.iter().find(|v| !(1..=5).contains(*v)) {
            return Err(Error::invalid("annotation", format!("texture vote {v} outside 1..=5")));
        }
        if self.center.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("annotation", "non-finite centre"));
        }
        Ok(())
    }

    pub fn nodule_type(&self) -> NoduleType {
        NoduleType::from_votes(&self.texture_votes)
    }
}

/// Per-scan outcome of hit matching: the unit resampled by the bootstrap.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanRecord {
    pub scan_id: String,
    pub n_nodules: usize,
    /// Score of the credited candidate for each detected nodule.
    pub detected_scores: Vec<f64>,
    pub fp_scores: Vec<f64>,
}

/// Groups a hit result into one record per scan id, in `scan_ids` order.
pub fn scan_records(cands: &[Candidate], anns: &[NoduleAnnotation], hits: &HitResult, scan_ids: &[String]) -> Vec<ScanRecord> {
    let mut map: BTreeMap<&str, ScanRecord> = scan_ids
        .iter()
        .map(|s| {
            (
                s.as_str(),
                ScanRecord {
                    scan_id: s.clone(),
                    n_nodules: 0,
                    detected_scores: Vec::new(),
                    fp_scores: Vec::new(),
                },
            )
        })
        .collect();
    for (a, credit) in anns.iter().zip(&hits.credited) {
        if let Some(r) = map.get_mut(a.scan_id.as_str()) {
            r.n_nodules += 1;
            if let Some(ci) = credit {
                r.detected_scores.push(cands[*ci].score);
            }
        }
    }
    for (c, l) in cands.iter().zip(&hits.labels) {
        if *l == HitLabel::FalsePositive {
            if let Some(r) = map.get_mut(c.scan_id.as_str()) {
                r.fp_scores.push(c.score);
            }
        }
    }
    scan_ids.iter().map(|s| map.remove(s.as_str()).expect("seeded above")).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CpmReport {
    pub sensitivities: [f64; 7],
    pub cpm: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_bootstrap: usize,
    pub seed: u64,
}

impl CpmReport {
    /// Report for a curve without a confidence interval (`ci` equals the point
    /// estimate, `n_bootstrap` = 0).
    pub fn from_curve(curve: &FrocCurve) -> Self {
        let cpm = cpm(curve);
        CpmReport {
            sensitivities: cpm_sensitivities(curve),
            cpm,
            ci_low: cpm,
            ci_high: cpm,
            n_bootstrap: 0,
            seed: 0,
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "FPs/scan  sensitivity").unwrap();
        for (r, v) in CPM_RATES.iter().zip(&self.sensitivities) {
            writeln!(s, "{r:>8}  {v:.3}").unwrap();
        }
        writeln!(s, "CPM {:.3}", self.cpm).unwrap();
        if self.n_bootstrap > 0 {
            writeln!(
                s,
                "95% CI [{:.3}, {:.3}] ({} bootstrap resamples of scans, seed {})",
                self.ci_low, self.ci_high, self.n_bootstrap, self.seed
            )
            .unwrap();
        }
        s
    }
}

/// FROC points as CSV with header `fp_per_scan,sensitivity`.
pub fn froc_csv(curve: &FrocCurve) -> String {
    let mut s = String::from("fp_per_scan,sensitivity\n");
    for (f, v) in &curve.points {
        writeln!(s, "{f:.6},{v:.6}").unwrap();
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub hits: HitResult,
    pub records: Vec<ScanRecord>,
    pub curve: FrocCurve,
    pub report: CpmReport,
    pub strata: Stratification,
}

impl Evaluation {
    pub fn to_text(&self) -> String {
        let mut s = self.report.to_text();
        let o = self.strata.overall();
        writeln!(s, "\nDetected nodules by size and type ({} of {})", o.detected, o.total).unwrap();
        write!(s, "{:<10}", "").unwrap();
        for t in NoduleType::ALL {
            write!(s, "{:>14}", t.label()).unwrap();
        }
        writeln!(s, "{:>14}", "all").unwrap();
        let cell = |c: StratCell| format!("{}/{}", c.detected, c.total);
        for b in SizeBin::ALL {
            write!(s, "{:<10}", b.label()).unwrap();
            for t in NoduleType::ALL {
                write!(s, "{:>14}", cell(self.strata.cell(b, t))).unwrap();
            }
            writeln!(s, "{:>14}", cell(self.strata.by_size(b))).unwrap();
        }
        write!(s, "{:<10}", "all").unwrap();
        for t in NoduleType::ALL {
            write!(s, "{:>14}", cell(self.strata.by_type(t))).unwrap();
        }
        writeln!(s, "{:>14}", cell(o)).unwrap();
        if !self.strata.excluded.is_empty() {
            writeln!(s, "{} annotation(s) under 3 mm excluded", self.strata.excluded.len()).unwrap();
        }
        s
    }
}

/// Full evaluation. The scan list fixes the FP-rate denominator; when empty it
/// defaults to every scan id seen in candidates or annotations.
pub fn evaluate(
    cands: &[Candidate],
    anns: &[NoduleAnnotation],
    scan_ids: &[String],
    rule: &HitRule,
    boot: Option<&BootstrapSpec>,
) -> Result<Evaluation> {
    for a in anns {
        a.validate()?;
    }
    let scans: Vec<String> = if scan_ids.is_empty() {
        let set: BTreeSet<&str> = cands
            .iter()
            .map(|c| c.scan_id.as_str())
            .chain(anns.iter().map(|a| a.scan_id.as_str()))
            .collect();
        set.into_iter().map(String::from).collect()
    } else {
        scan_ids.to_vec()
    };
    if let Some(a) = anns.iter().find(|a| !scans.contains(&a.scan_id)) {
        return Err(Error::invalid("evaluation", format!("annotation scan '{}' not in the scan list", a.scan_id)));
    }
    let hits = match_hits(cands, anns, rule)?;
    let records = scan_records(cands, anns, &hits, &scans);
    let tp: Vec<f64> = records.iter().flat_map(|r| r.detected_scores.iter().copied()).collect();
    let fp: Vec<f64> = records.iter().flat_map(|r| r.fp_scores.iter().copied()).collect();
    let curve = froc_curve(&tp, &fp, scans.len().max(1), anns.len().max(1))?;
    let mut report = CpmReport::from_curve(&curve);
    if let Some(b) = boot {
        let (lo, hi) = bootstrap_ci(&records, b)?;
        report.ci_low = lo;
        report.ci_high = hi;
        report.n_bootstrap = b.n;
        report.seed = b.seed;
    }
    let detected: Vec<bool> = (0..anns.len()).map(|i| hits.detected(i)).collect();
    let strata = stratify(anns, &detected);
    Ok(Evaluation {
        hits,
        records,
        curve,
        report,
        strata,
    })
}
