//! Union-join of candidate streams in the axial world frame.

use std::str::FromStr;

use crate::detect::{Candidate, CandidateSource};
use crate::error::{Error, Result};
use crate::util::DisjointSet;

/// Direction of the radius-versus-distance comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MergeMode {
    /// Merge when `factor * d <= r`: nearby duplicates collapse.
    #[default]
    Proximity,
    /// Merge when `r < factor * d`, the inequality exactly as printed.
    LiteralPaper,
}

impl FromStr for MergeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "proximity" => Ok(MergeMode::Proximity),
            "literal" | "literalpaper" | "literal_paper" => Ok(MergeMode::LiteralPaper),
            other => Err(Error::invalid("merge mode", format!("unknown `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergeRule {
    pub factor: f64,
    pub mode: MergeMode,
}

impl Default for MergeRule {
    fn default() -> Self {
        MergeRule {
            factor: 0.88,
            mode: MergeMode::Proximity,
        }
    }
}

impl MergeRule {
    pub fn validate(&self) -> Result<()> {
        if !(self.factor > 0.0) || !self.factor.is_finite() {
            return Err(Error::invalid("merge factor", format!("{} must be > 0", self.factor)));
        }
        Ok(())
    }
}

/// Compares the larger radius `r` with `factor` times the centre distance `d`.
pub fn merge_predicate(a: &Candidate, b: &Candidate, rule: &MergeRule) -> bool {
    let d = a.distance(b);
    let r = a.radius_mm.max(b.radius_mm);
    match rule.mode {
        MergeMode::Proximity => rule.factor * d <= r,
        MergeMode::LiteralPaper => r < rule.factor * d,
    }
}

fn collapse(members: &[&Candidate]) -> Candidate {
    let total: f64 = members.iter().map(|c| c.score).sum();
    let mut center = [0.0; 3];
    for c in members {
        let w = if total > 0.0 {
            c.score / total
        } else {
            1.0 / members.len() as f64
        };
        for a in 0..3 {
            center[a] += w * c.center[a];
        }
    }
    Candidate {
        scan_id: members[0].scan_id.clone(),
        center,
        radius_mm: members.iter().map(|c| c.radius_mm).fold(0.0, f64::max),
        score: members.iter().map(|c| c.score).fold(0.0, f64::max),
        source: CandidateSource::Fused,
    }
}

/// One pass: connected components of the merge graph, each collapsed to its
/// score-weighted centroid, largest radius and best score.
fn fuse_once(cands: &[Candidate], rule: &MergeRule) -> (Vec<Candidate>, bool) {
    let mut ds = DisjointSet::new(cands.len());
    let mut merged = false;
    for i in 0..cands.len() {
        for j in i + 1..cands.len() {
            if cands[i].scan_id == cands[j].scan_id && merge_predicate(&cands[i], &cands[j], rule) {
                merged |= ds.union(i, j);
            }
        }
    }
    let out = ds
        .groups()
        .into_iter()
        .map(|g| collapse(&g.iter().map(|&i| &cands[i]).collect::<Vec<_>>()))
        .collect();
    (out, merged)
}

/// Fuses candidate streams. Collapsing can bring new pairs within merge range,
/// so passes repeat until no edge remains; the result is therefore a fixed
/// point of the rule. Output is sorted by descending score, then `(x, y, z)`.
pub fn fuse_streams(streams: &[Vec<Candidate>], rule: &MergeRule) -> Result<Vec<Candidate>> {
    rule.validate()?;
    let mut cands: Vec<Candidate> = streams.iter().flatten().cloned().collect();
    for c in &cands {
        c.validate()?;
    }
    // Canonical input order makes the result independent of stream order.
    crate::detect::sort_candidates(&mut cands);
    loop {
        let (next, merged) = fuse_once(&cands, rule);
        cands = next;
        crate::detect::sort_candidates(&mut cands);
        if !merged {
            break;
        }
    }
    Ok(cands)
}
