//! Comparison methods: one deep model (SDM), one compressed model (SSM),
//! clustering-based domains with nearest-centroid selection (CDG), and one
//! compressed model per scene family (DMM).

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::kmeans::{kmeans, squared_distance};
use crate::learners::{Labels, OutputKind, TrainConfig, VectorClassifier};
use crate::rng::mix_seed;

use super::trace::{run_trace, Selector, TraceMetrics};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Anole,
    Sdm,
    Ssm,
    Cdg,
    Dmm,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Anole, Method::Sdm, Method::Ssm, Method::Cdg, Method::Dmm];

    pub fn name(self) -> &'static str {
        match self {
            Method::Anole => "anole",
            Method::Sdm => "sdm",
            Method::Ssm => "ssm",
            Method::Cdg => "cdg",
            Method::Dmm => "dmm",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub deep_hidden: usize,
    pub compressed_hidden: usize,
    pub deep_train: TrainConfig,
    pub compressed_train: TrainConfig,
    /// Number of feature-space domains for CDG.
    pub cdg_clusters: usize,
    pub seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            deep_hidden: 96,
            compressed_hidden: 8,
            deep_train: TrainConfig::default(),
            compressed_train: TrainConfig::default(),
            cdg_clusters: 8,
            seed: 42,
        }
    }
}

/// Always ranks its only model first.
pub struct SingleModel;

impl Selector for SingleModel {
    fn num_models(&self) -> usize {
        1
    }

    fn rank(&self, _: &Sample) -> Result<(Vec<usize>, Option<f64>)> {
        Ok((vec![0], None))
    }
}

/// Ranks models by the distance of their domain mean to the sample;
/// equidistant domains keep ascending index order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NearestCentroid {
    pub centroids: Vec<Vec<f64>>,
}

impl Selector for NearestCentroid {
    fn num_models(&self) -> usize {
        self.centroids.len()
    }

    fn rank(&self, sample: &Sample) -> Result<(Vec<usize>, Option<f64>)> {
        let d: Vec<f64> = self
            .centroids
            .iter()
            .map(|c| squared_distance(&sample.features, c))
            .collect();
        let mut order: Vec<usize> = (0..d.len()).collect();
        order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
        Ok((order, None))
    }
}

/// Picks the model trained on the sample's scene family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyLookup {
    pub families: Vec<u32>,
}

impl Selector for FamilyLookup {
    fn num_models(&self) -> usize {
        self.families.len()
    }

    fn rank(&self, sample: &Sample) -> Result<(Vec<usize>, Option<f64>)> {
        let own = self
            .families
            .iter()
            .position(|&f| f == sample.attrs.family())
            .unwrap_or(0);
        let order = std::iter::once(own)
            .chain((0..self.families.len()).filter(|&i| i != own))
            .collect();
        Ok((order, None))
    }
}

/// How a baseline picks among its models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Routing {
    Single,
    NearestCentroid(NearestCentroid),
    Family(FamilyLookup),
}

impl Routing {
    fn selector(&self) -> &dyn Selector {
        match self {
            Routing::Single => &SingleModel,
            Routing::NearestCentroid(s) => s,
            Routing::Family(s) => s,
        }
    }
}

/// One trained comparison method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedBaseline {
    pub method: Method,
    pub routing: Routing,
    pub models: Vec<VectorClassifier>,
}

impl TrainedBaseline {
    /// Run on a trace with every model resident.
    pub fn run(&self, trace: &[Sample], num_classes: usize, window: usize) -> Result<TraceMetrics> {
        self.run_at(trace, self.models.len(), num_classes, window)
    }

    pub fn run_at(&self, trace: &[Sample], capacity: usize, num_classes: usize, window: usize) -> Result<TraceMetrics> {
        let models: Vec<&VectorClassifier> = self.models.iter().collect();
        run_trace(trace, self.routing.selector(), &models, capacity, window, num_classes)
    }
}

fn fit(dataset: &Dataset, indices: &[usize], hidden: usize, cfg: &TrainConfig, seed: u64) -> Result<VectorClassifier> {
    if indices.is_empty() {
        return Err(Error::Empty("baseline training set"));
    }
    let inputs: Vec<&[f64]> = indices
        .iter()
        .map(|&i| dataset.samples[i].features.as_slice())
        .collect();
    let labels: Vec<usize> = indices.iter().map(|&i| dataset.samples[i].label).collect();
    let mut model = VectorClassifier::new(
        dataset.schema.feature_dim,
        hidden,
        dataset.schema.num_classes,
        OutputKind::Softmax,
        mix_seed(seed, &[0]),
    )?;
    let cfg = TrainConfig {
        seed: mix_seed(seed, &[1]),
        ..cfg.clone()
    };
    model.train(&inputs, Labels::Classes(&labels), &cfg)?;
    Ok(model)
}

/// Train one comparison method on the training split.
pub fn train_baseline(dataset: &Dataset, cfg: &BaselineConfig, method: Method) -> Result<TrainedBaseline> {
    let train = dataset.train_indices();
    if train.is_empty() {
        return Err(Error::Empty("training split"));
    }
    let (routing, models) = match method {
        Method::Anole => {
            return Err(Error::InvalidConfig("anole is not a baseline".into()));
        }
        Method::Sdm => (
            Routing::Single,
            vec![fit(
                dataset,
                &train,
                cfg.deep_hidden,
                &cfg.deep_train,
                mix_seed(cfg.seed, &[10]),
            )?],
        ),
        Method::Ssm => (
            Routing::Single,
            vec![fit(
                dataset,
                &train,
                cfg.compressed_hidden,
                &cfg.compressed_train,
                mix_seed(cfg.seed, &[11]),
            )?],
        ),
        Method::Cdg => {
            let points: Vec<Vec<f64>> = train.iter().map(|&i| dataset.samples[i].features.clone()).collect();
            let clustering = kmeans(&points, cfg.cdg_clusters, mix_seed(cfg.seed, &[12]), 100, 0.0)?;
            let mut models = Vec::with_capacity(cfg.cdg_clusters);
            for c in 0..cfg.cdg_clusters {
                let members: Vec<usize> = train
                    .iter()
                    .zip(&clustering.assignments)
                    .filter(|(_, &a)| a == c)
                    .map(|(&i, _)| i)
                    .collect();
                models.push(fit(
                    dataset,
                    &members,
                    cfg.compressed_hidden,
                    &cfg.compressed_train,
                    mix_seed(cfg.seed, &[13, c as u64]),
                )?);
            }
            let routing = Routing::NearestCentroid(NearestCentroid {
                centroids: clustering.centroids,
            });
            (routing, models)
        }
        Method::Dmm => {
            let mut by_family: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
            for &i in &train {
                by_family.entry(dataset.samples[i].attrs.family()).or_default().push(i);
            }
            let mut models = Vec::with_capacity(by_family.len());
            let mut families = Vec::with_capacity(by_family.len());
            for (family, members) in &by_family {
                models.push(fit(
                    dataset,
                    members,
                    cfg.compressed_hidden,
                    &cfg.compressed_train,
                    mix_seed(cfg.seed, &[14, *family as u64]),
                )?);
                families.push(*family);
            }
            (Routing::Family(FamilyLookup { families }), models)
        }
    };
    Ok(TrainedBaseline {
        method,
        routing,
        models,
    })
}

/// Every comparison method, in [`Method::ALL`] order after the adaptive one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baselines {
    pub methods: Vec<TrainedBaseline>,
}

pub fn train_baselines(dataset: &Dataset, cfg: &BaselineConfig) -> Result<Baselines> {
    let methods = Method::ALL[1..]
        .iter()
        .map(|&m| train_baseline(dataset, cfg, m))
        .collect::<Result<_>>()?;
    Ok(Baselines { methods })
}

impl Baselines {
    pub fn get(&self, method: Method) -> Option<&TrainedBaseline> {
        self.methods.iter().find(|b| b.method == method)
    }

    /// The single deep model.
    pub fn sdm(&self) -> &VectorClassifier {
        &self.get(Method::Sdm).expect("sdm is always trained").models[0]
    }

    pub fn ssm(&self) -> &VectorClassifier {
        &self.get(Method::Ssm).expect("ssm is always trained").models[0]
    }

    pub fn run(&self, method: Method, trace: &[Sample], num_classes: usize, window: usize) -> Result<TraceMetrics> {
        self.get(method)
            .ok_or_else(|| Error::InvalidConfig(format!("{method} is not a baseline")))?
            .run(trace, num_classes, window)
    }
}

/// Metrics of SDM, SSM, CDG and DMM on one trace.
pub fn run_baselines(
    trace: &[Sample],
    baselines: &Baselines,
    num_classes: usize,
    window: usize,
) -> Result<Vec<(Method, TraceMetrics)>> {
    baselines
        .methods
        .iter()
        .map(|b| Ok((b.method, b.run(trace, num_classes, window)?)))
        .collect()
}
