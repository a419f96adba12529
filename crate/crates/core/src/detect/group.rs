use super::{Box2D, Candidate, CandidateSource};
use crate::util::DisjointSet;
use crate::volume::Geometry;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupParams {
    /// Maximum in-plane centre offset (mm) for boxes on neighbouring slices to chain.
    pub link_dist_mm: f64,
    /// Index difference between neighbouring slices of the stack (the MIP stride).
    pub slice_step: usize,
    /// Chains whose extent along the normal exceeds this multiple of their
    /// widest in-plane side are dropped (tubular structures such as vessels).
    pub max_elongation: Option<f64>,
}

impl Default for GroupParams {
    fn default() -> Self {
        GroupParams {
            link_dist_mm: 5.0,
            slice_step: 1,
            max_elongation: None,
        }
    }
}

fn box_key(b: &Box2D) -> (usize, usize, usize, usize, usize, u64) {
    (
        b.slice_index,
        b.row_min,
        b.col_min,
        b.row_max,
        b.col_max,
        b.score.to_bits(),
    )
}

/// Chains boxes of one stream across consecutive slices and collapses each
/// chain into a candidate.
///
/// * centre: score-weighted mean of member box centres in world mm (plain
///   mean when every score is zero); a slab box sits at the middle of its window
/// * radius: half the larger of the widest in-plane box side and the chain
///   extent along the normal (slab windows overlap, so `thickness - 1` slices
///   are taken off the extent)
/// * score: maximum member score
///
/// Chains more elongated than `gp.max_elongation` are dropped.
pub fn group_boxes(
    boxes: &[Box2D],
    geometry: &Geometry,
    gp: &GroupParams,
    scan_id: &str,
    source: CandidateSource,
) -> Vec<Candidate> {
    let mut sorted: Vec<Box2D> = boxes.to_vec();
    sorted.sort_by_key(box_key);
    let Some(first) = sorted.first() else {
        return Vec::new();
    };
    let plane = first.plane;
    let row_sp = geometry.spacing[plane.row_axis()];
    let col_sp = geometry.spacing[plane.col_axis()];
    let normal_sp = geometry.spacing[plane.normal_axis()];
    let step = gp.slice_step.max(1);

    let mut ds = DisjointSet::new(sorted.len());
    // Boxes are sorted by slice, so each slice is a contiguous run.
    let mut runs: Vec<(usize, std::ops::Range<usize>)> = Vec::new();
    let mut start = 0;
    for i in 1..=sorted.len() {
        if i == sorted.len() || sorted[i].slice_index != sorted[start].slice_index {
            runs.push((sorted[start].slice_index, start..i));
            start = i;
        }
    }
    for w in 0..runs.len() {
        let (idx, ref here) = runs[w];
        let Some((_, next)) = runs[w + 1..].iter().find(|(j, _)| *j == idx + step) else {
            continue;
        };
        for a in here.clone() {
            let (ra, ca) = sorted[a].center();
            for b in next.clone() {
                let (rb, cb) = sorted[b].center();
                let d = (((ra - rb) * row_sp).powi(2) + ((ca - cb) * col_sp).powi(2)).sqrt();
                if d <= gp.link_dist_mm {
                    ds.union(a, b);
                }
            }
        }
    }

    let mut out: Vec<Candidate> = ds
        .groups()
        .into_iter()
        .filter_map(|members| {
            let total: f64 = members.iter().map(|&m| sorted[m].score).sum();
            let weight = |m: usize| {
                if total > 0.0 {
                    sorted[m].score / total
                } else {
                    1.0 / members.len() as f64
                }
            };
            let mut center = [0.0; 3];
            let mut side_mm: f64 = 0.0;
            let (mut lo, mut hi, mut k_min) = (usize::MAX, 0usize, usize::MAX);
            for &m in &members {
                let b = &sorted[m];
                let (r, c) = b.center();
                let along = b.slice_index as f64 + (b.thickness as f64 - 1.0) / 2.0;
                let p = plane.to_world(geometry, along, r, c);
                let w = weight(m);
                for a in 0..3 {
                    center[a] += w * p[a];
                }
                side_mm = side_mm
                    .max(b.height() as f64 * row_sp)
                    .max(b.width() as f64 * col_sp);
                lo = lo.min(b.slice_index);
                hi = hi.max(b.slice_index);
                k_min = k_min.min(b.thickness);
            }
            let span = (hi - lo + 1) as isize - (k_min as isize - 1);
            let extent_mm = span.max(1) as f64 * normal_sp;
            if gp.max_elongation.is_some_and(|e| extent_mm > e * side_mm) {
                return None;
            }
            Some(Candidate {
                scan_id: scan_id.to_string(),
                center,
                radius_mm: side_mm.max(extent_mm) / 2.0,
                score: members.iter().map(|&m| sorted[m].score).fold(0.0, f64::max),
                source,
            })
        })
        .collect();
    sort_candidates(&mut out);
    out
}

/// Descending score, ties broken by centre coordinates, then radius, scan and
/// source so the order is total.
pub(crate) fn sort_candidates(c: &mut [Candidate]) {
    c.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.center[0].total_cmp(&b.center[0]))
            .then_with(|| a.center[1].total_cmp(&b.center[1]))
            .then_with(|| a.center[2].total_cmp(&b.center[2]))
            .then_with(|| a.radius_mm.total_cmp(&b.radius_mm))
            .then_with(|| a.scan_id.cmp(&b.scan_id))
            .then_with(|| a.source.cmp(&b.source))
    });
}
