//! File layout of a run directory and the stamped artifacts stages exchange.

use std::collections::BTreeMap;
use std::io::BufReader;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::artifact::{content_hash, file_hash, read_json, write_json, Stamped};
use crate::config::render_config;
use crate::dataset::{read_dataset, save_dataset, Dataset, Sample, Trace, TraceSegment};
use crate::decision::{DecisionArtifact, DecisionModel};
use crate::error::{Error, Result};
use crate::learners::VectorClassifier;
use crate::pipeline::{PipelineRun, TraceConfig};
use crate::profiling::ModelRepository;
use crate::runtime::{run_trace, summarize, Method, TraceMetrics, TraceSummary, TrainedBaseline};
use crate::sampling::SamplingState;

pub const CONFIG: &str = "config.txt";
pub const DATASET: &str = "dataset.jsonl";
pub const ENCODER: &str = "encoder.json";
pub const REPOSITORY: &str = "repository.json";
pub const POOLS: &str = "pools.json";
pub const DECISION: &str = "decision.json";
pub const TRACE: &str = "trace.json";
pub const MANIFEST: &str = "manifest.json";

pub fn metrics_name(method: Method) -> String {
    format!("metrics-{method}.csv")
}

pub fn summary_name(method: Method) -> String {
    format!("summary-{method}.json")
}

pub fn sweep_name(method: Method) -> String {
    format!("sweep-{method}.json")
}

pub fn sweep_csv_name(method: Method) -> String {
    format!("sweep-{method}.csv")
}

pub type EncoderFile = Stamped<VectorClassifier>;
pub type RepositoryFile = Stamped<ModelRepository>;
pub type PoolsFile = Stamped<SamplingState>;
pub type DecisionFile = Stamped<DecisionArtifact>;
pub type TraceFile = Stamped<TraceRecord>;
pub type SummaryFile = Stamped<SimulationReport>;
pub type SweepFile = Stamped<SweepReport>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub config: TraceConfig,
    pub segments: Vec<TraceSegment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub method: Method,
    pub seed: u64,
    pub capacity: usize,
    pub num_models: usize,
    pub summary: TraceSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub capacity: usize,
    pub miss_rate: f64,
    pub mean_window_f1: f64,
    pub switches: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub method: Method,
    pub seed: u64,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn miss_rate_non_increasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].miss_rate <= w[0].miss_rate)
    }

    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "capacity,miss_rate,mean_window_f1,switches")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{}",
                r.capacity, r.miss_rate, r.mean_window_f1, r.switches
            )?;
        }
        Ok(())
    }
}

/// Write the dataset file and return its content hash.
pub fn write_dataset_file(dataset: &Dataset, path: &Path) -> Result<String> {
    save_dataset(dataset, path)?;
    file_hash(path)
}

/// Load a dataset file with the content hash of its bytes.
pub fn read_dataset_file(path: &Path) -> Result<(Dataset, String)> {
    let bytes = std::fs::read(path)?;
    let dataset = read_dataset(BufReader::new(bytes.as_slice()))?;
    Ok((dataset, content_hash(&bytes)))
}

pub fn write_stamped<T: Serialize>(path: &Path, value: &Stamped<T>) -> Result<String> {
    write_json(path, value)
}

pub fn read_stamped<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<(Stamped<T>, String)> {
    read_json(path)
}

fn check_version(artifact: &'static str, expected: u32, found: u32) -> Result<()> {
    if expected != found {
        return Err(Error::Version {
            artifact,
            expected,
            found,
        });
    }
    Ok(())
}

pub fn read_encoder(path: &Path) -> Result<(EncoderFile, String)> {
    let (file, hash): (EncoderFile, String) = read_stamped(path)?;
    check_version(
        "encoder",
        crate::learners::MODEL_FORMAT_VERSION,
        file.body.format_version,
    )?;
    file.body.validate()?;
    Ok((file, hash))
}

pub fn read_repository(path: &Path) -> Result<(RepositoryFile, String)> {
    let (file, hash): (RepositoryFile, String) = read_stamped(path)?;
    check_version(
        "repository",
        crate::profiling::REPOSITORY_FORMAT_VERSION,
        file.body.format_version,
    )?;
    file.body.validate()?;
    Ok((file, hash))
}

pub fn read_pools(path: &Path) -> Result<(PoolsFile, String)> {
    let (file, hash): (PoolsFile, String) = read_stamped(path)?;
    check_version("pools", crate::sampling::POOLS_FORMAT_VERSION, file.body.format_version)?;
    file.body.validate()?;
    Ok((file, hash))
}

pub fn read_decision(path: &Path) -> Result<(DecisionFile, String)> {
    let (file, hash): (DecisionFile, String) = read_stamped(path)?;
    check_version(
        "decision",
        crate::decision::DECISION_FORMAT_VERSION,
        file.body.format_version,
    )?;
    Ok((file, hash))
}

/// A method ready to run on a trace.
pub enum Contender<'a> {
    Adaptive {
        decision: &'a DecisionModel,
        repository: &'a ModelRepository,
    },
    Baseline(&'a TrainedBaseline),
}

impl Contender<'_> {
    pub fn method(&self) -> Method {
        match self {
            Contender::Adaptive { .. } => Method::Anole,
            Contender::Baseline(b) => b.method,
        }
    }

    pub fn num_models(&self) -> usize {
        match self {
            Contender::Adaptive { repository, .. } => repository.len(),
            Contender::Baseline(b) => b.models.len(),
        }
    }

    pub fn run(&self, trace: &[Sample], capacity: usize, num_classes: usize, window: usize) -> Result<TraceMetrics> {
        match self {
            Contender::Adaptive { decision, repository } => run_trace(
                trace,
                *decision,
                &repository.classifiers(),
                capacity,
                window,
                num_classes,
            ),
            Contender::Baseline(b) => b.run_at(trace, capacity, num_classes, window),
        }
    }

    /// Metrics at each capacity in `lo..=hi`.
    pub fn sweep(
        &self,
        trace: &[Sample],
        lo: usize,
        hi: usize,
        num_classes: usize,
        window: usize,
    ) -> Result<Vec<(usize, TraceMetrics)>> {
        if lo == 0 || hi < lo {
            return Err(Error::InvalidConfig(format!("bad capacity range {lo}..{hi}")));
        }
        (lo..=hi)
            .map(|c| Ok((c, self.run(trace, c, num_classes, window)?)))
            .collect()
    }
}

pub fn sweep_report(method: Method, seed: u64, sweep: &[(usize, TraceMetrics)]) -> SweepReport {
    SweepReport {
        method,
        seed,
        rows: sweep
            .iter()
            .map(|(c, m)| SweepRow {
                capacity: *c,
                miss_rate: m.miss_rate(),
                mean_window_f1: m.mean_window_f1(),
                switches: m.switch_events.len(),
            })
            .collect(),
    }
}

pub fn trace_record(trace: &Trace, cfg: &TraceConfig) -> TraceRecord {
    TraceRecord {
        config: cfg.clone(),
        segments: trace.segments.clone(),
    }
}

fn write_csv_file(path: &Path, metrics: &TraceMetrics) -> Result<String> {
    let mut bytes = Vec::new();
    metrics.write_csv(&mut bytes)?;
    std::fs::write(path, &bytes)?;
    Ok(content_hash(&bytes))
}

/// Write every artifact of a run into `dir` and return file name -> hash;
/// the same map is written to the manifest.
pub fn write_run(run: &PipelineRun, dir: &Path) -> Result<BTreeMap<String, String>> {
    std::fs::create_dir_all(dir)?;
    let mut manifest = BTreeMap::new();
    let seed = run.config.generator.seed;

    let config_text = render_config(&run.config, seed)?;
    std::fs::write(dir.join(CONFIG), &config_text)?;
    manifest.insert(CONFIG.to_string(), content_hash(config_text.as_bytes()));

    let d = write_dataset_file(&run.dataset, &dir.join(DATASET))?;
    manifest.insert(DATASET.to_string(), d.clone());

    let encoder = Stamped::new((*run.profile.encoder).clone(), &[("dataset", &d)]);
    let e = write_stamped(&dir.join(ENCODER), &encoder)?;
    manifest.insert(ENCODER.to_string(), e.clone());

    let repo = Stamped::new(run.profile.repository.clone(), &[("dataset", &d), ("encoder", &e)]);
    let r = write_stamped(&dir.join(REPOSITORY), &repo)?;
    manifest.insert(REPOSITORY.to_string(), r.clone());

    let pools = Stamped::new(run.pools.clone(), &[("dataset", &d), ("repository", &r)]);
    let p = write_stamped(&dir.join(POOLS), &pools)?;
    manifest.insert(POOLS.to_string(), p.clone());

    let decision = Stamped::new(
        run.decision.to_artifact()?,
        &[("dataset", &d), ("encoder", &e), ("pools", &p)],
    );
    let q = write_stamped(&dir.join(DECISION), &decision)?;
    manifest.insert(DECISION.to_string(), q.clone());

    let trace = Stamped::new(trace_record(&run.trace, &run.config.trace), &[("dataset", &d)]);
    let t = write_stamped(&dir.join(TRACE), &trace)?;
    manifest.insert(TRACE.to_string(), t.clone());

    for (method, metrics) in &run.methods {
        let h = write_csv_file(&dir.join(metrics_name(*method)), metrics)?;
        manifest.insert(metrics_name(*method), h);
        let capacity = if *method == Method::Anole {
            run.capacity()
        } else {
            metrics.num_models
        };
        let report = SimulationReport {
            method: *method,
            seed,
            capacity,
            num_models: metrics.num_models,
            summary: summarize(metrics),
        };
        let mut inputs = vec![("dataset", d.as_str()), ("trace", t.as_str())];
        if *method == Method::Anole {
            inputs.push(("decision", q.as_str()));
            inputs.push(("repository", r.as_str()));
        }
        let h = write_stamped(&dir.join(summary_name(*method)), &Stamped::new(report, &inputs))?;
        manifest.insert(summary_name(*method), h);
    }

    let sweep = sweep_report(Method::Anole, seed, &run.capacity_sweep()?);
    let mut csv = Vec::new();
    sweep.write_csv(&mut csv)?;
    std::fs::write(dir.join(sweep_csv_name(Method::Anole)), &csv)?;
    manifest.insert(sweep_csv_name(Method::Anole), content_hash(&csv));
    let h = write_stamped(
        &dir.join(sweep_name(Method::Anole)),
        &Stamped::new(
            sweep,
            &[("dataset", &d), ("trace", &t), ("decision", &q), ("repository", &r)],
        ),
    )?;
    manifest.insert(sweep_name(Method::Anole), h);

    write_json(&dir.join(MANIFEST), &manifest)?;
    Ok(manifest)
}
