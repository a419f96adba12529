use std::collections::HashMap;
use std::str::FromStr;

use super::NoduleAnnotation;
use crate::detect::{dist3, Candidate};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HitLabel {
    TruePositive,
    FalsePositive,
    /// Hits an annotation already credited to another candidate; counted as
    /// neither TP nor FP.
    DuplicateIgnored,
}

/// Which of several hitting candidates credits an annotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CreditRule {
    /// Highest score; equal scores go to the earlier candidate.
    #[default]
    HighestScore,
    /// Smallest centre distance; equal distances go to the higher score.
    Nearest,
}

impl FromStr for CreditRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "highest_score" | "score" => Ok(CreditRule::HighestScore),
            "nearest" => Ok(CreditRule::Nearest),
            _ => Err(Error::invalid("credit rule", format!("'{s}' (expected highest_score or nearest)"))),
        }
    }
}

/// A candidate hits an annotation iff its centre lies within
/// `radius_scale · diameter / 2` (inclusive) of the annotation centre.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HitRule {
    pub radius_scale: f64,
    pub credit: CreditRule,
}

impl Default for HitRule {
    fn default() -> Self {
        HitRule {
            radius_scale: 1.0,
            credit: CreditRule::HighestScore,
        }
    }
}

impl HitRule {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius_scale > 0.0) || !self.radius_scale.is_finite() {
            return Err(Error::invalid("hit rule", format!("radius scale {} must be > 0", self.radius_scale)));
        }
        Ok(())
    }

    pub fn hits(&self, c: &Candidate, a: &NoduleAnnotation) -> bool {
        c.scan_id == a.scan_id && dist3(c.center, a.center) <= self.radius_scale * a.diameter_mm / 2.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HitResult {
    pub labels: Vec<HitLabel>,
    /// Index of the candidate credited for each annotation.
    pub credited: Vec<Option<usize>>,
}

impl HitResult {
    pub fn detected(&self, annotation: usize) -> bool {
        self.credited[annotation].is_some()
    }
}

/// Labels every candidate and credits each annotation with at most one
/// hitting candidate.
pub fn match_hits(cands: &[Candidate], anns: &[NoduleAnnotation], rule: &HitRule) -> Result<HitResult> {
    rule.validate()?;
    let mut by_scan: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, c) in cands.iter().enumerate() {
        by_scan.entry(c.scan_id.as_str()).or_default().push(i);
    }
    let mut hit_any = vec![false; cands.len()];
    let mut credited = vec![None; anns.len()];
    for (ai, a) in anns.iter().enumerate() {
        let Some(pool) = by_scan.get(a.scan_id.as_str()) else { continue };
        let mut best: Option<usize> = None;
        for &ci in pool {
            let c = &cands[ci];
            if !rule.hits(c, a) {
                continue;
            }
            hit_any[ci] = true;
            let better = match best {
                None => true,
                Some(b) => {
                    let o = &cands[b];
                    match rule.credit {
                        CreditRule::HighestScore => c.score > o.score,
                        CreditRule::Nearest => {
                            let (dc, db) = (dist3(c.center, a.center), dist3(o.center, a.center));
                            dc < db || (dc == db && c.score > o.score)
                        }
                    }
                }
            };
            if better {
                best = Some(ci);
            }
        }
        credited[ai] = best;
    }
    let mut labels: Vec<HitLabel> = hit_any
        .iter()
        .map(|&h| if h { HitLabel::DuplicateIgnored } else { HitLabel::FalsePositive })
        .collect();
    for &ci in credited.iter().flatten() {
        labels[ci] = HitLabel::TruePositive;
    }
    Ok(HitResult { labels, credited })
}
