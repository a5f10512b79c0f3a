use serde::{Deserialize, Serialize};

use super::trace::TraceMetrics;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Linear-interpolation quantiles of a non-empty sample.
pub fn quartiles(values: &[usize]) -> Quartiles {
    let mut v: Vec<f64> = values.iter().map(|&x| x as f64).collect();
    v.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let pos = p * (v.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
    };
    Quartiles {
        min: v[0],
        q1: q(0.25),
        median: q(0.5),
        q3: q(0.75),
        max: v[v.len() - 1],
    }
}

/// JSON summary of one trace run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub frames: usize,
    pub miss_rate: f64,
    pub mean_window_f1: f64,
    pub switches: usize,
    pub duration_quartiles: Quartiles,
    /// Top-1 selections per model index.
    pub top1_histogram: Vec<usize>,
    /// Top-1 counts sorted descending.
    pub top1_sorted: Vec<usize>,
    /// Share of top-1 selections taken by the five most selected models.
    pub top5_coverage: f64,
    pub low_confidence_frames: usize,
}

pub fn top_k_coverage(counts: &[usize], k: usize) -> f64 {
    let mut sorted = counts.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    let total: usize = sorted.iter().sum();
    if total == 0 {
        return 0.0;
    }
    sorted.iter().take(k).sum::<usize>() as f64 / total as f64
}

pub fn summarize(metrics: &TraceMetrics) -> TraceSummary {
    let mut sorted = metrics.top1_counts.clone();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    TraceSummary {
        frames: metrics.frames.len(),
        miss_rate: metrics.miss_rate(),
        mean_window_f1: metrics.mean_window_f1(),
        switches: metrics.switch_events.len(),
        duration_quartiles: quartiles(&metrics.scene_durations),
        top1_histogram: metrics.top1_counts.clone(),
        top5_coverage: top_k_coverage(&metrics.top1_counts, 5),
        top1_sorted: sorted,
        low_confidence_frames: metrics.low_confidence_frames.len(),
    }
}
