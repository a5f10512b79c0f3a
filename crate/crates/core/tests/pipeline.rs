use std::sync::OnceLock;

use scenemux::dataset::{generate_dataset, Sample, Split};
use scenemux::metrics::macro_f1;
use scenemux::pipeline::{run_pipeline, PipelineRun, RunConfig};
use scenemux::profiling::{evaluate_f1, segment_semantic_scenes, train_compressed};
use scenemux::runtime::{run_trace, train_baseline, Method, Selector};
use scenemux::Result;

fn run() -> &'static PipelineRun {
    static RUN: OnceLock<PipelineRun> = OnceLock::new();
    RUN.get_or_init(|| run_pipeline(&RunConfig::with_seed(42)).unwrap())
}

#[test]
fn repository_has_n_models_above_threshold() {
    let run = run();
    let cfg = &run.config.profiling;
    assert_eq!(run.profile.repository.len(), cfg.n);
    for e in &run.profile.repository.models {
        assert!(e.validation_f1 > cfg.delta, "{:?} {}", e.source, e.validation_f1);
        let recomputed = evaluate_f1(&e.model, &run.dataset, &e.training_scene.valid_indices).unwrap();
        assert_eq!(recomputed, e.validation_f1);
    }
}

#[test]
fn trace_has_configured_shape() {
    let run = run();
    let t = &run.config.trace;
    assert_eq!(run.trace.samples.len(), t.segment_len * t.num_segments);
    for (seg, r) in run.trace.segments.iter().zip(run.trace.segment_ranges()) {
        for (k, s) in run.trace.samples[r].iter().enumerate() {
            assert_eq!(s.clip_id, seg.clip);
            assert_eq!(s.frame_index, seg.start_frame + k as u32);
            assert_eq!(run.dataset.split_of(s), Split::Test);
        }
    }
}

#[test]
fn full_capacity_misses_once_per_distinct_top_model() {
    let run = run();
    let m = run.metrics(Method::Anole);
    assert!(run.capacity() >= run.profile.repository.len());
    let distinct = m.top1_counts.iter().filter(|&&c| c > 0).count();
    assert_eq!(m.cache_misses, distinct);
}

/// Ranks every frame by the repository models' F1 on the frame's segment.
struct Oracle {
    rankings: Vec<Vec<usize>>,
    segment_len: usize,
    frame: std::cell::Cell<usize>,
}

impl Selector for Oracle {
    fn num_models(&self) -> usize {
        self.rankings[0].len()
    }

    fn rank(&self, _: &Sample) -> Result<(Vec<usize>, Option<f64>)> {
        let t = self.frame.get();
        self.frame.set(t + 1);
        Ok((self.rankings[t / self.segment_len].clone(), None))
    }
}

fn window_f1(preds: &[usize], labels: &[usize], window: usize, nc: usize) -> Vec<Option<f64>> {
    preds
        .chunks(window)
        .zip(labels.chunks(window))
        .map(|(p, l)| macro_f1(p, l, nc).ok())
        .collect()
}

#[test]
fn oracle_decision_matches_best_model_composition() {
    let run = run();
    let nc = run.dataset.schema.num_classes;
    let window = run.config.trace.window;
    let segment_len = run.config.trace.segment_len;
    assert_eq!(segment_len % window, 0, "windows must not straddle segments");
    let models = run.profile.repository.classifiers();

    let mut rankings = Vec::new();
    let mut best_preds = Vec::new();
    for r in run.trace.segment_ranges() {
        let seg = &run.trace.samples[r];
        let labels: Vec<usize> = seg.iter().map(|s| s.label).collect();
        let f1: Vec<f64> = models
            .iter()
            .map(|m| {
                let p: Vec<usize> = seg.iter().map(|s| m.predict(&s.features).unwrap()).collect();
                macro_f1(&p, &labels, nc).unwrap()
            })
            .collect();
        let mut order: Vec<usize> = (0..models.len()).collect();
        order.sort_by(|&a, &b| f1[b].total_cmp(&f1[a]));
        best_preds.extend(seg.iter().map(|s| models[order[0]].predict(&s.features).unwrap()));
        rankings.push(order);
    }
    let labels: Vec<usize> = run.trace.samples.iter().map(|s| s.label).collect();
    let expected = window_f1(&best_preds, &labels, window, nc);

    let oracle = Oracle {
        rankings,
        segment_len,
        frame: std::cell::Cell::new(0),
    };
    let n = models.len();
    let m = run_trace(&run.trace.samples, &oracle, &models, n, window, nc).unwrap();
    // A miss on a warm cache serves the best resident for that one frame, so
    // only windows containing such a frame may differ.
    let mut affected = 0;
    for (w, (got, want)) in m.window_f1.iter().zip(&expected).enumerate() {
        let frames = &m.frames[w * window..(w + 1) * window];
        if frames.iter().all(|f| f.served_model == f.top1_model) {
            assert_eq!(got, want, "window {w}");
        } else {
            affected += 1;
        }
    }
    let mean = |v: &[Option<f64>]| {
        let xs: Vec<f64> = v.iter().flatten().copied().collect();
        xs.iter().sum::<f64>() / xs.len() as f64
    };
    let bound = affected as f64 / expected.len() as f64;
    assert!((mean(&m.window_f1) - mean(&expected)).abs() <= bound + 1e-12);
    assert!(
        affected < run.trace.segments.len(),
        "at most one warm miss per segment change"
    );
}

#[test]
fn miss_rate_non_increasing_in_capacity() {
    let sweep = run().capacity_sweep().unwrap();
    assert_eq!(sweep.len(), run().profile.repository.len());
    for w in sweep.windows(2) {
        assert!(w[1].1.miss_rate() <= w[0].1.miss_rate(), "capacity {}", w[1].0);
    }
}

#[test]
fn small_model_matches_specialist_on_dominant_scene() {
    let mut cfg = RunConfig::with_seed(5);
    cfg.generator.skew = 10;
    cfg.generator.frames_per_clip = 200;
    let ds = generate_dataset(&cfg.generator).unwrap();
    let ssm = train_baseline(&ds, &cfg.baselines, Method::Ssm).unwrap();
    let scene = segment_semantic_scenes(&ds)
        .unwrap()
        .into_iter()
        .max_by_key(|s| s.sample_indices.len())
        .unwrap();
    assert_eq!(scene.attrs.family(), 0);
    let (specialist, _) = train_compressed(
        &ds,
        &scene.sample_indices,
        &scene.valid_indices,
        cfg.profiling.compressed_hidden,
        &cfg.profiling.compressed_train,
    )
    .unwrap();
    let clip = ds.samples[scene.sample_indices[0]].clip_id;
    let test: Vec<usize> = ds
        .clip_indices(clip)
        .into_iter()
        .filter(|&i| ds.split_of(&ds.samples[i]) == Split::Test)
        .collect();
    let a = evaluate_f1(&ssm.models[0], &ds, &test).unwrap();
    let b = evaluate_f1(&specialist, &ds, &test).unwrap();
    assert!((a - b).abs() <= 0.1, "ssm {a:.3} specialist {b:.3}");
}
