//! End-to-end orchestration of the offline and online stages.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dataset::{generate_dataset, synthesize_trace, Dataset, GeneratorConfig, Trace};
use crate::decision::{build_allocation_labels, train_decision, DecisionConfig, DecisionModel};
use crate::error::{Error, Result};
use crate::learners::VectorClassifier;
use crate::profiling::{
    build_repository, segment_semantic_scenes, train_scene_encoder, ModelRepository, ProfilingConfig, SemanticScene,
};
use crate::rng::mix_seed;
use crate::runtime::{
    run_trace, summarize, train_baselines, BaselineConfig, Baselines, Method, TraceMetrics, TraceSummary,
    DEFAULT_WINDOW,
};
use crate::sampling::{adaptive_sampling, SamplingConfig, SamplingState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceConfig {
    pub num_source_clips: usize,
    pub segment_len: usize,
    pub num_segments: usize,
    pub window: usize,
    pub seed: u64,
}

impl Default for TraceConfig {
    fn default() -> Self {
        Self {
            num_source_clips: 5,
            segment_len: 100,
            num_segments: 5,
            window: DEFAULT_WINDOW,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheConfig {
    /// Model slots; `None` means one per repository model.
    pub capacity: Option<usize>,
    pub sweep_lo: usize,
    pub sweep_hi: Option<usize>,
}

impl Default for CacheConfig {
    fn default() -> Self {
        Self {
            capacity: None,
            sweep_lo: 1,
            sweep_hi: None,
        }
    }
}

/// Every stage's configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub generator: GeneratorConfig,
    pub profiling: ProfilingConfig,
    pub sampling: SamplingConfig,
    pub decision: DecisionConfig,
    pub baselines: BaselineConfig,
    pub trace: TraceConfig,
    pub cache: CacheConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::with_seed(42)
    }
}

impl RunConfig {
    /// Defaults with every stage seeded from `seed`.
    pub fn with_seed(seed: u64) -> Self {
        let mut cfg = RunConfig {
            generator: GeneratorConfig::default(),
            profiling: ProfilingConfig::default(),
            sampling: SamplingConfig::default(),
            decision: DecisionConfig::default(),
            baselines: BaselineConfig::default(),
            trace: TraceConfig::default(),
            cache: CacheConfig::default(),
        };
        cfg.reseed(seed);
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.profiling.validate()?;
        if !(self.sampling.theta > 0.0 && self.sampling.theta < 1.0) {
            return Err(Error::InvalidConfig("theta must lie in (0, 1)".into()));
        }
        if self.decision.hidden_dim == 0 {
            return Err(Error::InvalidConfig("decision hidden_dim must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.decision.low_confidence) {
            return Err(Error::InvalidConfig("low_confidence must lie in [0, 1]".into()));
        }
        self.decision.train.validate()?;
        if self.baselines.deep_hidden == 0 || self.baselines.compressed_hidden == 0 || self.baselines.cdg_clusters == 0
        {
            return Err(Error::InvalidConfig("baseline sizes must be positive".into()));
        }
        self.baselines.deep_train.validate()?;
        self.baselines.compressed_train.validate()?;
        let t = &self.trace;
        if t.num_source_clips == 0 || t.segment_len == 0 || t.num_segments == 0 || t.window == 0 {
            return Err(Error::InvalidConfig("trace sizes must be positive".into()));
        }
        if self.cache.capacity == Some(0) || self.cache.sweep_lo == 0 {
            return Err(Error::InvalidConfig("cache capacities must be positive".into()));
        }
        if self.cache.sweep_hi.is_some_and(|hi| hi < self.cache.sweep_lo) {
            return Err(Error::InvalidConfig("empty capacity sweep".into()));
        }
        Ok(())
    }

    /// Derive every stage seed from one master seed.
    pub fn reseed(&mut self, seed: u64) {
        self.generator.seed = seed;
        self.profiling.seed = mix_seed(seed, &[1]);
        self.profiling.encoder_train.seed = mix_seed(seed, &[2]);
        self.profiling.compressed_train.seed = mix_seed(seed, &[3]);
        self.sampling.seed = mix_seed(seed, &[4]);
        self.decision.train.seed = mix_seed(seed, &[5]);
        self.baselines.seed = mix_seed(seed, &[6]);
        self.baselines.deep_train.seed = mix_seed(seed, &[7]);
        self.baselines.compressed_train.seed = mix_seed(seed, &[8]);
        self.trace.seed = mix_seed(seed, &[9]);
    }
}

#[derive(Debug, Clone)]
pub struct Profile {
    pub scenes: Vec<SemanticScene>,
    pub encoder: Arc<VectorClassifier>,
    pub repository: ModelRepository,
}

pub fn profile(dataset: &Dataset, cfg: &ProfilingConfig) -> Result<Profile> {
    cfg.validate()?;
    let scenes = segment_semantic_scenes(dataset)?;
    let encoder = train_scene_encoder(dataset, &scenes, cfg.encoder_hidden, &cfg.encoder_train)?;
    let repository = build_repository(dataset, &scenes, &encoder, cfg)?;
    Ok(Profile {
        scenes,
        encoder: Arc::new(encoder),
        repository,
    })
}

pub fn decide(
    dataset: &Dataset,
    profile: &Profile,
    sampling: &SamplingConfig,
    decision: &DecisionConfig,
) -> Result<(SamplingState, DecisionModel)> {
    let pools = adaptive_sampling(dataset, &profile.repository, sampling)?;
    let rows = build_allocation_labels(&pools)?;
    let model = train_decision(profile.encoder.clone(), dataset, &rows, decision)?;
    Ok((pools, model))
}

/// Run the adaptive method on a trace.
pub fn simulate(
    trace: &Trace,
    decision: &DecisionModel,
    repository: &ModelRepository,
    capacity: usize,
    window: usize,
    num_classes: usize,
) -> Result<TraceMetrics> {
    run_trace(
        &trace.samples,
        decision,
        &repository.classifiers(),
        capacity,
        window,
        num_classes,
    )
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub config: RunConfig,
    pub dataset: Dataset,
    pub profile: Profile,
    pub pools: SamplingState,
    pub decision: DecisionModel,
    pub baselines: Baselines,
    pub trace: Trace,
    /// Metrics per method, adaptive method first.
    pub methods: Vec<(Method, TraceMetrics)>,
}

impl PipelineRun {
    pub fn metrics(&self, method: Method) -> &TraceMetrics {
        &self
            .methods
            .iter()
            .find(|(m, _)| *m == method)
            .expect("every method runs")
            .1
    }

    pub fn summaries(&self) -> Vec<(Method, TraceSummary)> {
        self.methods
            .iter()
            .map(|(m, metrics)| (*m, summarize(metrics)))
            .collect()
    }

    pub fn capacity(&self) -> usize {
        self.config.cache.capacity.unwrap_or(self.profile.repository.len())
    }

    /// Adaptive-method metrics at every capacity in the configured sweep.
    pub fn capacity_sweep(&self) -> Result<Vec<(usize, TraceMetrics)>> {
        let hi = self.config.cache.sweep_hi.unwrap_or(self.profile.repository.len());
        (self.config.cache.sweep_lo.max(1)..=hi)
            .map(|c| {
                Ok((
                    c,
                    simulate(
                        &self.trace,
                        &self.decision,
                        &self.profile.repository,
                        c,
                        self.config.trace.window,
                        self.dataset.schema.num_classes,
                    )?,
                ))
            })
            .collect()
    }
}

/// Generate, profile, sample, train the decision model and the baselines,
/// then run every method on one spliced trace.
pub fn run_pipeline(cfg: &RunConfig) -> Result<PipelineRun> {
    let dataset = generate_dataset(&cfg.generator)?;
    run_pipeline_on(cfg, dataset)
}

pub fn run_pipeline_on(cfg: &RunConfig, dataset: Dataset) -> Result<PipelineRun> {
    cfg.validate()?;
    let profile = profile(&dataset, &cfg.profiling)?;
    let (pools, decision) = decide(&dataset, &profile, &cfg.sampling, &cfg.decision)?;
    let baselines = train_baselines(&dataset, &cfg.baselines)?;
    let t = &cfg.trace;
    let trace = synthesize_trace(&dataset, t.num_source_clips, t.segment_len, t.num_segments, t.seed)?;
    let capacity = cfg.cache.capacity.unwrap_or(profile.repository.len());
    if capacity == 0 {
        return Err(Error::InvalidConfig("cache capacity must be positive".into()));
    }
    let nc = dataset.schema.num_classes;
    let mut methods = vec![(
        Method::Anole,
        simulate(&trace, &decision, &profile.repository, capacity, t.window, nc)?,
    )];
    for m in [Method::Sdm, Method::Ssm, Method::Cdg, Method::Dmm] {
        methods.push((m, baselines.run(m, &trace.samples, nc, t.window)?));
    }
    Ok(PipelineRun {
        config: cfg.clone(),
        dataset,
        profile,
        pools,
        decision,
        baselines,
        trace,
        methods,
    })
}
