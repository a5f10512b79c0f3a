//! Offline scene profiling: semantic segmentation, the scene encoder, scene
//! embeddings and multi-level clustering into a repository of compressed
//! models.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, SemanticAttributes};
use crate::error::{Error, Result};
use crate::kmeans::kmeans;
use crate::learners::{Labels, OutputKind, TrainConfig, VectorClassifier};
use crate::rng::mix_seed;

pub use crate::metrics::macro_f1;

pub const REPOSITORY_FORMAT_VERSION: u32 = 1;

/// Samples sharing one exact attribute tuple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticScene {
    pub scene_id: usize,
    pub attrs: SemanticAttributes,
    /// Training-split samples.
    pub sample_indices: Vec<usize>,
    /// Validation-split samples with the same attributes.
    pub valid_indices: Vec<usize>,
}

/// Group the training split by attribute tuple, in lexicographic tuple order.
pub fn segment_semantic_scenes(dataset: &Dataset) -> Result<Vec<SemanticScene>> {
    let train = dataset.train_indices();
    if train.is_empty() {
        return Err(Error::Empty("training split"));
    }
    let mut groups: BTreeMap<SemanticAttributes, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for i in train {
        groups.entry(dataset.samples[i].attrs.clone()).or_default().0.push(i);
    }
    for i in dataset.valid_indices() {
        if let Some(g) = groups.get_mut(&dataset.samples[i].attrs) {
            g.1.push(i);
        }
    }
    Ok(groups
        .into_iter()
        .enumerate()
        .map(|(scene_id, (attrs, (sample_indices, valid_indices)))| SemanticScene {
            scene_id,
            attrs,
            sample_indices,
            valid_indices,
        })
        .collect())
}

fn features_of<'a>(dataset: &'a Dataset, indices: &[usize]) -> Vec<&'a [f64]> {
    indices
        .iter()
        .map(|&i| dataset.samples[i].features.as_slice())
        .collect()
}

/// Train a classifier that predicts the semantic-scene index of a sample.
pub fn train_scene_encoder(
    dataset: &Dataset,
    scenes: &[SemanticScene],
    hidden_dim: usize,
    cfg: &TrainConfig,
) -> Result<VectorClassifier> {
    if scenes.len() < 2 {
        return Err(Error::TooFewScenes(scenes.len()));
    }
    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    for scene in scenes {
        inputs.extend(features_of(dataset, &scene.sample_indices));
        labels.extend(std::iter::repeat_n(scene.scene_id, scene.sample_indices.len()));
    }
    let mut encoder = VectorClassifier::new(
        dataset.schema.feature_dim,
        hidden_dim,
        scenes.len(),
        OutputKind::Softmax,
        mix_seed(cfg.seed, &[0]),
    )?;
    encoder.train(&inputs, Labels::Classes(&labels), cfg)?;
    Ok(encoder)
}

/// Validation confusion matrix of the encoder: rows are true scenes,
/// columns predicted scenes.
pub fn encoder_confusion(
    encoder: &VectorClassifier,
    dataset: &Dataset,
    scenes: &[SemanticScene],
) -> Result<Vec<Vec<usize>>> {
    let m = scenes.len();
    let mut matrix = vec![vec![0usize; m]; m];
    for scene in scenes {
        for &i in &scene.valid_indices {
            let predicted = encoder.predict(&dataset.samples[i].features)?;
            matrix[scene.scene_id][predicted.min(m - 1)] += 1;
        }
    }
    Ok(matrix)
}

/// Per-scene hidden activations of the encoder and their means.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub per_scene: Vec<Vec<Vec<f64>>>,
    pub centroids: Vec<Vec<f64>>,
}

pub fn embed_scenes(encoder: &VectorClassifier, scenes: &[SemanticScene], dataset: &Dataset) -> Result<EmbeddingSet> {
    if encoder.input_dim != dataset.schema.feature_dim {
        return Err(Error::Dimension {
            expected: dataset.schema.feature_dim,
            got: encoder.input_dim,
        });
    }
    let mut per_scene = Vec::with_capacity(scenes.len());
    let mut centroids = Vec::with_capacity(scenes.len());
    for scene in scenes {
        let embeddings = scene
            .sample_indices
            .iter()
            .map(|&i| encoder.embed(&dataset.samples[i].features))
            .collect::<Result<Vec<_>>>()?;
        let mut centroid = vec![0.0; encoder.hidden_dim];
        for e in &embeddings {
            for (c, v) in centroid.iter_mut().zip(e) {
                *c += v;
            }
        }
        let n = embeddings.len().max(1) as f64;
        centroid.iter_mut().for_each(|c| *c /= n);
        per_scene.push(embeddings);
        centroids.push(centroid);
    }
    Ok(EmbeddingSet { per_scene, centroids })
}

/// Union of semantic scenes that landed in one cluster at a given k.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterScene {
    pub k: usize,
    pub cluster_id: usize,
    pub member_scene_ids: Vec<usize>,
    pub sample_indices: Vec<usize>,
    pub valid_indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepositoryEntry {
    pub model: VectorClassifier,
    /// `(k, cluster_id)` that produced the model.
    pub source: (usize, usize),
    pub training_scene: ClusterScene,
    pub validation_f1: f64,
}

/// One candidate model considered while building the repository.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub k: usize,
    pub cluster_id: usize,
    pub member_scene_ids: Vec<usize>,
    pub validation_f1: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfilingConfig {
    /// Target repository size.
    pub n: usize,
    /// A model is kept only if its validation macro-F1 is strictly above this.
    pub delta: f64,
    pub k_start: usize,
    pub k_max: usize,
    pub encoder_hidden: usize,
    pub compressed_hidden: usize,
    pub encoder_train: TrainConfig,
    pub compressed_train: TrainConfig,
    pub kmeans_max_iters: usize,
    pub kmeans_tol: f64,
    pub seed: u64,
}

impl Default for ProfilingConfig {
    fn default() -> Self {
        Self {
            n: 8,
            delta: 0.5,
            k_start: 2,
            k_max: 16,
            encoder_hidden: 16,
            compressed_hidden: 8,
            encoder_train: TrainConfig {
                epochs: 80,
                ..TrainConfig::default()
            },
            compressed_train: TrainConfig {
                epochs: 160,
                ..TrainConfig::default()
            },
            kmeans_max_iters: 100,
            kmeans_tol: 0.0,
            seed: 42,
        }
    }
}

impl ProfilingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidConfig("n must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.delta) {
            return Err(Error::InvalidConfig("delta must lie in [0, 1]".into()));
        }
        if self.k_start < 2 || self.k_max < self.k_start {
            return Err(Error::InvalidConfig("need 2 <= k_start <= k_max".into()));
        }
        if self.encoder_hidden == 0 || self.compressed_hidden == 0 {
            return Err(Error::InvalidConfig("hidden sizes must be positive".into()));
        }
        self.encoder_train.validate()?;
        self.compressed_train.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRepository {
    pub format_version: u32,
    pub config: ProfilingConfig,
    pub models: Vec<RepositoryEntry>,
    pub attempts: Vec<Attempt>,
}

impl ModelRepository {
    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn model(&self, i: usize) -> &VectorClassifier {
        &self.models[i].model
    }

    pub fn classifiers(&self) -> Vec<&VectorClassifier> {
        self.models.iter().map(|e| &e.model).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != REPOSITORY_FORMAT_VERSION {
            return Err(Error::Version {
                artifact: "repository",
                expected: REPOSITORY_FORMAT_VERSION,
                found: self.format_version,
            });
        }
        for e in &self.models {
            e.model.validate()?;
        }
        Ok(())
    }
}

/// Train one compressed model on a cluster's training samples and score it
/// on the cluster's validation samples.
pub fn train_compressed(
    dataset: &Dataset,
    train_indices: &[usize],
    valid_indices: &[usize],
    hidden_dim: usize,
    cfg: &TrainConfig,
) -> Result<(VectorClassifier, f64)> {
    let inputs = features_of(dataset, train_indices);
    let labels: Vec<usize> = train_indices.iter().map(|&i| dataset.samples[i].label).collect();
    let mut model = VectorClassifier::new(
        dataset.schema.feature_dim,
        hidden_dim,
        dataset.schema.num_classes,
        OutputKind::Softmax,
        mix_seed(cfg.seed, &[0]),
    )?;
    model.train(&inputs, Labels::Classes(&labels), cfg)?;
    let f1 = if valid_indices.is_empty() {
        0.0
    } else {
        evaluate_f1(&model, dataset, valid_indices)?
    };
    Ok((model, f1))
}

pub fn evaluate_f1(model: &VectorClassifier, dataset: &Dataset, indices: &[usize]) -> Result<f64> {
    let mut preds = Vec::with_capacity(indices.len());
    let mut labels = Vec::with_capacity(indices.len());
    for &i in indices {
        let s = &dataset.samples[i];
        preds.push(model.predict(&s.features)?);
        labels.push(s.label);
    }
    macro_f1(&preds, &labels, dataset.schema.num_classes)
}

/// Cluster scenes at every k from `k_start` upward and keep compressed
/// models whose validation F1 exceeds `delta`, until `n` are accepted.
///
/// Clustering runs over the per-scene embedding centroids, so a semantic
/// scene always lands wholly in one cluster. Clusters are visited in
/// ascending id and collection stops as soon as the repository is full,
/// possibly in the middle of a level.
pub fn build_repository(
    dataset: &Dataset,
    scenes: &[SemanticScene],
    encoder: &VectorClassifier,
    cfg: &ProfilingConfig,
) -> Result<ModelRepository> {
    cfg.validate()?;
    let embeddings = embed_scenes(encoder, scenes, dataset)?;
    build_repository_from_embeddings(dataset, scenes, &embeddings, cfg)
}

pub fn build_repository_from_embeddings(
    dataset: &Dataset,
    scenes: &[SemanticScene],
    embeddings: &EmbeddingSet,
    cfg: &ProfilingConfig,
) -> Result<ModelRepository> {
    let mut models = Vec::new();
    let mut attempts = Vec::new();
    let insufficient = |accepted: usize| Error::InsufficientModels {
        accepted,
        requested: cfg.n,
        k_max: cfg.k_max,
    };

    let mut k = cfg.k_start;
    while models.len() < cfg.n {
        if k > cfg.k_max {
            return Err(insufficient(models.len()));
        }
        let clustering = match kmeans(
            &embeddings.centroids,
            k,
            mix_seed(cfg.seed, &[1, k as u64]),
            cfg.kmeans_max_iters,
            cfg.kmeans_tol,
        ) {
            Ok(c) => c,
            // No finer level exists; the repository cannot grow any more.
            Err(Error::TooManyClusters { .. }) => return Err(insufficient(models.len())),
            Err(e) => return Err(e),
        };
        for cluster_id in 0..k {
            let members: Vec<usize> = (0..scenes.len())
                .filter(|&s| clustering.assignments[s] == cluster_id)
                .collect();
            let mut sample_indices: Vec<usize> = members
                .iter()
                .flat_map(|&s| scenes[s].sample_indices.iter().copied())
                .collect();
            sample_indices.sort_unstable();
            let mut valid_indices: Vec<usize> = members
                .iter()
                .flat_map(|&s| scenes[s].valid_indices.iter().copied())
                .collect();
            valid_indices.sort_unstable();

            let train_cfg = TrainConfig {
                seed: mix_seed(cfg.compressed_train.seed, &[k as u64, cluster_id as u64]),
                ..cfg.compressed_train.clone()
            };
            let (model, f1) = train_compressed(
                dataset,
                &sample_indices,
                &valid_indices,
                cfg.compressed_hidden,
                &train_cfg,
            )?;
            let accepted = f1 > cfg.delta;
            attempts.push(Attempt {
                k,
                cluster_id,
                member_scene_ids: members.clone(),
                validation_f1: f1,
                accepted,
            });
            if accepted {
                models.push(RepositoryEntry {
                    model,
                    source: (k, cluster_id),
                    training_scene: ClusterScene {
                        k,
                        cluster_id,
                        member_scene_ids: members,
                        sample_indices,
                        valid_indices,
                    },
                    validation_f1: f1,
                });
                if models.len() == cfg.n {
                    break;
                }
            }
        }
        k += 1;
    }
    Ok(ModelRepository {
        format_version: REPOSITORY_FORMAT_VERSION,
        config: cfg.clone(),
        models,
        attempts,
    })
}

/// A repository model that mispredicts one of its own training samples, if
/// any: the training scene is not contained in what the model handles.
pub fn misprediction_witness(repository: &ModelRepository, dataset: &Dataset) -> Result<Option<(usize, usize)>> {
    for (m, entry) in repository.models.iter().enumerate() {
        for &i in &entry.training_scene.sample_indices {
            let s = &dataset.samples[i];
            if entry.model.predict(&s.features)? != s.label {
                return Ok(Some((m, i)));
            }
        }
    }
    Ok(None)
}
