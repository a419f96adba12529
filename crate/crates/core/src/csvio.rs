//! CSV formats for candidates, scored candidates, annotations and FROC points.
//!
//! Reals are written with six decimals; readers report the byte offset of the
//! first offending record.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::detect::{Candidate, CandidateSource};
use crate::error::{Error, Result};
use crate::eval::{FrocCurve, NoduleAnnotation};

pub const CANDIDATE_HEADER: [&str; 7] = ["scan_id", "x_mm", "y_mm", "z_mm", "radius_mm", "score", "source"];
pub const ANNOTATION_HEADER: [&str; 6] = ["scan_id", "x_mm", "y_mm", "z_mm", "diameter_mm", "votes"];

/// A candidate with the false-positive-reduction probability attached.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredCandidate {
    pub candidate: Candidate,
    pub fpr_score: f64,
}

impl ScoredCandidate {
    /// The candidate with its detection score replaced by the FPR score, as
    /// used for evaluation.
    pub fn rescored(&self) -> Candidate {
        Candidate {
            score: self.fpr_score,
            ..self.candidate.clone()
        }
    }
}

fn fmt6(v: f64) -> String {
    // Avoid "-0.000000" so equal values always print identically.
    let s = format!("{v:.6}");
    if s.chars().all(|c| matches!(c, '-' | '0' | '.')) {
        s.trim_start_matches('-').to_string()
    } else {
        s
    }
}

fn candidate_fields(c: &Candidate) -> Vec<String> {
    vec![
        c.scan_id.clone(),
        fmt6(c.center[0]),
        fmt6(c.center[1]),
        fmt6(c.center[2]),
        fmt6(c.radius_mm),
        fmt6(c.score),
        c.source.as_str().to_string(),
    ]
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn candidates_to_csv(cands: &[Candidate]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(e.into());
    w.write_record(CANDIDATE_HEADER).map_err(io)?;
    for c in cands {
        w.write_record(candidate_fields(c)).map_err(io)?;
    }
    finish(w)
}

pub fn scored_to_csv(cands: &[ScoredCandidate]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(e.into());
    let mut header: Vec<&str> = CANDIDATE_HEADER.to_vec();
    header.push("fpr_score");
    w.write_record(&header).map_err(io)?;
    for c in cands {
        let mut f = candidate_fields(&c.candidate);
        f.push(fmt6(c.fpr_score));
        w.write_record(f).map_err(io)?;
    }
    finish(w)
}

pub fn annotations_to_csv(anns: &[NoduleAnnotation]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(e.into());
    w.write_record(ANNOTATION_HEADER).map_err(io)?;
    for a in anns {
        let votes: Vec<String> = a.texture_votes.iter().map(u8::to_string).collect();
        w.write_record([
            a.scan_id.clone(),
            fmt6(a.center[0]),
            fmt6(a.center[1]),
            fmt6(a.center[2]),
            fmt6(a.diameter_mm),
            votes.join(";"),
        ])
        .map_err(io)?;
    }
    finish(w)
}

pub fn froc_points_to_csv(curve: &FrocCurve) -> Vec<u8> {
    crate::eval::froc_csv(curve).into_bytes()
}

/// Parsed rows plus the byte offset of each.
struct Table {
    header: Vec<String>,
    rows: Vec<(u64, csv::StringRecord)>,
}

fn read_table(bytes: &[u8], format: &'static str) -> Result<Table> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(bytes);
    let conv = |e: csv::Error| {
        let offset = e.position().map_or(0, |p| p.byte());
        Error::format(format, offset, e.to_string())
    };
    let header: Vec<String> = r.headers().map_err(conv)?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(conv)?;
        let at = rec.position().map_or(0, |p| p.byte());
        rows.push((at, rec));
    }
    Ok(Table { header, rows })
}

fn expect_header(t: &Table, want: &[&str], format: &'static str) -> Result<()> {
    if t.header.len() < want.len() || t.header.iter().zip(want).any(|(a, b)| a != b) {
        return Err(Error::format(format, 0, format!("header must start with {}", want.join(","))));
    }
    Ok(())
}

fn field<'a>(rec: &'a csv::StringRecord, i: usize, at: u64, format: &'static str) -> Result<&'a str> {
    rec.get(i).ok_or_else(|| Error::format(format, at, format!("missing column {}", i + 1)))
}

fn real(rec: &csv::StringRecord, i: usize, at: u64, format: &'static str) -> Result<f64> {
    let s = field(rec, i, at, format)?;
    let v: f64 = s
        .parse()
        .map_err(|_| Error::format(format, at, format!("column {}: `{s}` is not a number", i + 1)))?;
    if !v.is_finite() {
        return Err(Error::format(format, at, format!("column {}: non-finite value", i + 1)));
    }
    Ok(v)
}

fn parse_candidate(rec: &csv::StringRecord, at: u64, format: &'static str) -> Result<Candidate> {
    let source: CandidateSource = field(rec, 6, at, format)?
        .parse()
        .map_err(|e: Error| Error::format(format, at, e.to_string()))?;
    let c = Candidate {
        scan_id: field(rec, 0, at, format)?.to_string(),
        center: [real(rec, 1, at, format)?, real(rec, 2, at, format)?, real(rec, 3, at, format)?],
        radius_mm: real(rec, 4, at, format)?,
        score: real(rec, 5, at, format)?,
        source,
    };
    c.validate().map_err(|e| Error::format(format, at, e.to_string()))?;
    Ok(c)
}

pub fn candidates_from_csv(bytes: &[u8]) -> Result<Vec<Candidate>> {
    const F: &str = "candidate CSV";
    let t = read_table(bytes, F)?;
    expect_header(&t, &CANDIDATE_HEADER, F)?;
    t.rows.iter().map(|(at, rec)| parse_candidate(rec, *at, F)).collect()
}

pub fn scored_from_csv(bytes: &[u8]) -> Result<Vec<ScoredCandidate>> {
    const F: &str = "scored candidate CSV";
    let t = read_table(bytes, F)?;
    expect_header(&t, &CANDIDATE_HEADER, F)?;
    if t.header.get(7).map(String::as_str) != Some("fpr_score") {
        return Err(Error::format(F, 0, "missing fpr_score column"));
    }
    t.rows
        .iter()
        .map(|(at, rec)| {
            let fpr_score = real(rec, 7, *at, F)?;
            if !(0.0..=1.0).contains(&fpr_score) {
                return Err(Error::format(F, *at, format!("fpr_score {fpr_score} outside [0, 1]")));
            }
            Ok(ScoredCandidate {
                candidate: parse_candidate(rec, *at, F)?,
                fpr_score,
            })
        })
        .collect()
}

/// Candidates for evaluation: from a scored CSV the FPR score is used,
/// otherwise the detection score.
pub fn evaluation_candidates_from_csv(bytes: &[u8]) -> Result<Vec<Candidate>> {
    let t = read_table(bytes, "candidate CSV")?;
    if t.header.get(7).map(String::as_str) == Some("fpr_score") {
        Ok(scored_from_csv(bytes)?.iter().map(ScoredCandidate::rescored).collect())
    } else {
        candidates_from_csv(bytes)
    }
}

pub fn annotations_from_csv(bytes: &[u8]) -> Result<Vec<NoduleAnnotation>> {
    const F: &str = "annotation CSV";
    let t = read_table(bytes, F)?;
    expect_header(&t, &ANNOTATION_HEADER[..5], F)?;
    t.rows
        .iter()
        .map(|(at, rec)| {
            let at = *at;
            let votes_s = rec.get(5).unwrap_or("");
            let texture_votes = votes_s
                .split(';')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<u8>().map_err(|_| Error::format(F, at, format!("bad vote `{s}`"))))
                .collect::<Result<Vec<u8>>>()?;
            let a = NoduleAnnotation {
                scan_id: field(rec, 0, at, F)?.to_string(),
                center: [real(rec, 1, at, F)?, real(rec, 2, at, F)?, real(rec, 3, at, F)?],
                diameter_mm: real(rec, 4, at, F)?,
                agreement: texture_votes.len() as u32,
                texture_votes,
            };
            a.validate().map_err(|e| Error::format(F, at, e.to_string()))?;
            Ok(a)
        })
        .collect()
}

/// `fp_per_scan,sensitivity` rows.
pub fn froc_points_from_csv(bytes: &[u8]) -> Result<FrocCurve> {
    const F: &str = "FROC points CSV";
    let t = read_table(bytes, F)?;
    expect_header(&t, &["fp_per_scan", "sensitivity"], F)?;
    let pts = t
        .rows
        .iter()
        .map(|(at, rec)| Ok((real(rec, 0, *at, F)?, real(rec, 1, *at, F)?)))
        .collect::<Result<Vec<_>>>()?;
    FrocCurve::from_points(pts).map_err(|e| Error::format(F, 0, e.to_string()))
}

pub fn write_bytes(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(bytes)?;
    Ok(())
}
