use crate::error::{Error, Result};

/// The seven false-positive rates (per scan) averaged by the CPM.
pub const CPM_RATES: [f64; 7] = [0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0];

/// Staircase of `(fp_per_scan, sensitivity)` points, sorted by false-positive
/// rate with sensitivity strictly increasing.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrocCurve {
    pub points: Vec<(f64, f64)>,
}

impl FrocCurve {
    /// Builds a curve from arbitrary points, keeping for each rate the best
    /// sensitivity and dropping dominated points.
    pub fn from_points(mut pts: Vec<(f64, f64)>) -> Result<Self> {
        if let Some(p) = pts
            .iter()
            .find(|(f, s)| !(*f >= 0.0) || !f.is_finite() || !(0.0..=1.0).contains(s))
        {
            return Err(Error::invalid("FROC point", format!("{p:?}")));
        }
        pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
        let mut points: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
        for (f, s) in pts {
            if points.last().is_none_or(|&(_, best)| s > best) {
                points.push((f, s));
            }
        }
        Ok(FrocCurve { points })
    }

    /// Step-function reading: best sensitivity among points at or below `rate`.
    pub fn sensitivity_at(&self, rate: f64) -> f64 {
        self.points
            .iter()
            .take_while(|(f, _)| *f <= rate)
            .map(|&(_, s)| s)
            .fold(0.0, f64::max)
    }
}

/// Sweeps a threshold over every distinct score. At threshold `t` the
/// sensitivity is the share of nodules whose credited score is `>= t` and the
/// rate is the number of false positives scoring `>= t` per scan.
pub fn froc_curve(detected_scores: &[f64], fp_scores: &[f64], n_scans: usize, n_nodules: usize) -> Result<FrocCurve> {
    if n_scans == 0 || n_nodules == 0 {
        return Err(Error::invalid("FROC", "n_scans and n_nodules must be >= 1"));
    }
    if detected_scores.len() > n_nodules {
        return Err(Error::invalid("FROC", "more detected nodules than nodules"));
    }
    let mut tp = detected_scores.to_vec();
    let mut fp = fp_scores.to_vec();
    tp.sort_by(|a, b| b.total_cmp(a));
    fp.sort_by(|a, b| b.total_cmp(a));
    let mut thresholds: Vec<f64> = tp.iter().chain(&fp).copied().collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let (mut i, mut j) = (0, 0);
    let mut pts = Vec::with_capacity(thresholds.len());
    for t in thresholds {
        while i < tp.len() && tp[i] >= t {
            i += 1;
        }
        while j < fp.len() && fp[j] >= t {
            j += 1;
        }
        pts.push((j as f64 / n_scans as f64, i as f64 / n_nodules as f64));
    }
    FrocCurve::from_points(pts)
}

/// Sensitivities at the seven CPM rates.
pub fn cpm_sensitivities(curve: &FrocCurve) -> [f64; 7] {
    CPM_RATES.map(|r| curve.sensitivity_at(r))
}

/// Mean sensitivity over the seven CPM rates.
pub fn cpm(curve: &FrocCurve) -> f64 {
    cpm_sensitivities(curve).iter().sum::<f64>() / CPM_RATES.len() as f64
}
