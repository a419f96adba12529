use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{cpm, froc_curve, ScanRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapSpec {
    pub n: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for BootstrapSpec {
    fn default() -> Self {
        BootstrapSpec {
            n: 1000,
            level: 0.95,
            seed: 0,
        }
    }
}

impl BootstrapSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::invalid("bootstrap", format!("n = {} and level = {} (need n >= 1, level in (0, 1))", self.n, self.level)));
        }
        Ok(())
    }
}

/// CPM of a set of scans (with multiplicity). `None` when the set holds no
/// nodules, since sensitivity is then undefined.
pub fn pooled_cpm<'a>(records: impl IntoIterator<Item = &'a ScanRecord>) -> Option<f64> {
    let (mut tp, mut fp, mut scans, mut nodules) = (Vec::new(), Vec::new(), 0, 0);
    for r in records {
        tp.extend_from_slice(&r.detected_scores);
        fp.extend_from_slice(&r.fp_scores);
        scans += 1;
        nodules += r.n_nodules;
    }
    if nodules == 0 {
        return None;
    }
    froc_curve(&tp, &fp, scans, nodules).ok().map(|c| cpm(&c))
}

/// Nearest-rank percentile of sorted values: the `ceil(q·n)`-th smallest
/// (with a 1e-9 allowance so `0.025 · 1000` ranks 25, not 26).
pub fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let rank = ((q * n as f64 - 1e-9).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

/// The per-replicate CPM values; replicate `r` draws its scans from a
/// generator seeded with `seed ^ r`, so the result does not depend on
/// scheduling. Replicates without any nodule are skipped.
pub fn bootstrap_replicates(records: &[ScanRecord], spec: &BootstrapSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    if records.is_empty() {
        return Err(Error::invalid("bootstrap", "at least one scan is required"));
    }
    let n = records.len();
    Ok((0..spec.n as u64)
        .into_par_iter()
        .filter_map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ r);
            let picks: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            pooled_cpm(picks.iter().map(|&i| &records[i]))
        })
        .collect())
}

/// Percentile confidence interval for the CPM from scan-level resampling.
pub fn bootstrap_ci(records: &[ScanRecord], spec: &BootstrapSpec) -> Result<(f64, f64)> {
    let mut reps = bootstrap_replicates(records, spec)?;
    if reps.is_empty() {
        return Err(Error::invalid("bootstrap", "no replicate contained a nodule"));
    }
    reps.sort_by(f64::total_cmp);
    let tail = (1.0 - spec.level) / 2.0;
    Ok((nearest_rank(&reps, tail), nearest_rank(&reps, 1.0 - tail)))
}
