//! Frame-by-frame inference over a trace with a model cache, and the
//! metrics it produces.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataset::Sample;
use crate::decision::DecisionModel;
use crate::error::{Error, Result};
use crate::learners::VectorClassifier;
use crate::metrics::{macro_f1, mean};

use super::cache::ModelCache;

pub const DEFAULT_WINDOW: usize = 10;

/// Orders a model set for one sample, best first.
pub trait Selector {
    fn num_models(&self) -> usize;

    /// Ranking plus, when the selector has one, its top confidence.
    fn rank(&self, sample: &Sample) -> Result<(Vec<usize>, Option<f64>)>;

    /// Top confidence below which a frame counts as having no suitable model.
    fn low_confidence_threshold(&self) -> Option<f64> {
        None
    }
}

impl Selector for DecisionModel {
    fn num_models(&self) -> usize {
        DecisionModel::num_models(self)
    }

    fn rank(&self, sample: &Sample) -> Result<(Vec<usize>, Option<f64>)> {
        let (probs, ranking) = self.rank_models(&sample.features)?;
        let top = probs.0[ranking[0]];
        Ok((ranking, Some(top)))
    }

    fn low_confidence_threshold(&self) -> Option<f64> {
        Some(self.low_confidence)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame: usize,
    pub window_id: usize,
    pub served_model: usize,
    pub top1_model: usize,
    pub miss: bool,
    pub correct: bool,
    pub prediction: usize,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMetrics {
    pub num_models: usize,
    pub frames: Vec<FrameRecord>,
    /// Macro-F1 per window; `None` when a window has no labelled class.
    pub window_f1: Vec<Option<f64>>,
    pub cache_misses: usize,
    pub cache_accesses: usize,
    /// Frames at which the serving model differs from the previous frame.
    pub switch_events: Vec<usize>,
    /// Run lengths of consecutive frames served by one model.
    pub scene_durations: Vec<usize>,
    pub top1_counts: Vec<usize>,
    /// Frames whose top suitability fell below the decision threshold.
    pub low_confidence_frames: Vec<usize>,
}

impl TraceMetrics {
    pub fn miss_rate(&self) -> f64 {
        if self.cache_accesses == 0 {
            0.0
        } else {
            self.cache_misses as f64 / self.cache_accesses as f64
        }
    }

    pub fn mean_window_f1(&self) -> f64 {
        let present: Vec<f64> = self.window_f1.iter().flatten().copied().collect();
        mean(&present)
    }

    /// Metrics CSV: `frame,window_id,served_model,top1_model,miss,correct`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "frame,window_id,served_model,top1_model,miss,correct")?;
        for f in &self.frames {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                f.frame, f.window_id, f.served_model, f.top1_model, f.miss as u8, f.correct as u8
            )?;
        }
        Ok(())
    }
}

/// Run a trace: rank, pass through the cache, predict with the served model.
pub fn run_trace(
    trace: &[Sample],
    selector: &dyn Selector,
    models: &[&VectorClassifier],
    cache_capacity: usize,
    window: usize,
    num_classes: usize,
) -> Result<TraceMetrics> {
    if trace.is_empty() {
        return Err(Error::Empty("trace"));
    }
    if window == 0 {
        return Err(Error::InvalidConfig("window must be positive".into()));
    }
    if selector.num_models() != models.len() {
        return Err(Error::Dimension {
            expected: models.len(),
            got: selector.num_models(),
        });
    }
    let threshold = selector.low_confidence_threshold();
    let mut cache = ModelCache::new(cache_capacity)?;
    let mut frames = Vec::with_capacity(trace.len());
    let mut top1_counts = vec![0usize; models.len()];
    let mut low_confidence_frames = Vec::new();

    for (t, sample) in trace.iter().enumerate() {
        let (ranking, confidence) = selector.rank(sample)?;
        if ranking.first().is_none_or(|&m| m >= models.len()) {
            return Err(Error::InvalidConfig(format!(
                "selector ranking at frame {t} does not name a repository model"
            )));
        }
        if let (Some(p), Some(limit)) = (confidence, threshold) {
            if p < limit {
                low_confidence_frames.push(t);
            }
        }
        top1_counts[ranking[0]] += 1;
        let outcome = cache.request(&ranking)?;
        let prediction = models[outcome.served].predict(&sample.features)?;
        frames.push(FrameRecord {
            frame: t,
            window_id: t / window,
            served_model: outcome.served,
            top1_model: ranking[0],
            miss: outcome.miss,
            correct: prediction == sample.label,
            prediction,
            label: sample.label,
        });
    }

    let window_f1 = frames
        .chunks(window)
        .map(|w| {
            let preds: Vec<usize> = w.iter().map(|f| f.prediction).collect();
            let labels: Vec<usize> = w.iter().map(|f| f.label).collect();
            macro_f1(&preds, &labels, num_classes).ok()
        })
        .collect();

    let mut switch_events = Vec::new();
    let mut scene_durations = Vec::new();
    let mut run = 0usize;
    for (t, f) in frames.iter().enumerate() {
        if t > 0 && f.served_model != frames[t - 1].served_model {
            switch_events.push(t);
            scene_durations.push(run);
            run = 0;
        }
        run += 1;
    }
    scene_durations.push(run);

    let cache_misses = frames.iter().filter(|f| f.miss).count();
    Ok(TraceMetrics {
        num_models: models.len(),
        cache_accesses: frames.len(),
        cache_misses,
        frames,
        window_f1,
        switch_events,
        scene_durations,
        top1_counts,
        low_confidence_frames,
    })
}
