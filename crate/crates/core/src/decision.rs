//! The decision model: a frozen scene-encoder backbone and a trainable
//! multi-label head that scores each repository model's suitability.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::artifact::hash_of;
use crate::dataset::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::learners::{Labels, OutputKind, TrainConfig, VectorClassifier};
use crate::rng::mix_seed;
use crate::sampling::SamplingState;

pub const DECISION_FORMAT_VERSION: u32 = 1;

/// Suitability per repository model: 0/1 targets when training, sigmoid
/// probabilities at inference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AllocationVector(pub Vec<f64>);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationRow {
    pub sample_index: usize,
    pub target: AllocationVector,
}

/// One row per probed sample; coordinate `i` is 1 when model `i` was
/// suitable. Rows suitable for no model are kept as all-zero targets.
pub fn build_allocation_labels(pools: &SamplingState) -> Result<Vec<AllocationRow>> {
    pools.validate()?;
    Ok(pools
        .rows
        .iter()
        .map(|r| AllocationRow {
            sample_index: r.sample_index,
            target: AllocationVector(r.allocation.iter().map(|&b| b as u8 as f64).collect()),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionConfig {
    pub hidden_dim: usize,
    pub train: TrainConfig,
    /// Below this top probability a frame is logged as having no suitable
    /// model; the top-ranked model still serves it.
    pub low_confidence: f64,
}

impl Default for DecisionConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 8,
            train: TrainConfig {
                l2: 0.01,
                ..TrainConfig::default()
            },
            low_confidence: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionModel {
    pub backbone: Arc<VectorClassifier>,
    pub head: VectorClassifier,
    pub low_confidence: f64,
}

/// Serialized form: the head plus the hash of the encoder it expects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionArtifact {
    pub format_version: u32,
    pub encoder_hash: String,
    pub low_confidence: f64,
    pub head: VectorClassifier,
}

/// Hash identifying an encoder's parameters.
pub fn encoder_hash(encoder: &VectorClassifier) -> Result<String> {
    hash_of(encoder)
}

impl DecisionModel {
    pub fn num_models(&self) -> usize {
        self.head.output_dim
    }

    pub fn to_artifact(&self) -> Result<DecisionArtifact> {
        Ok(DecisionArtifact {
            format_version: DECISION_FORMAT_VERSION,
            encoder_hash: encoder_hash(&self.backbone)?,
            low_confidence: self.low_confidence,
            head: self.head.clone(),
        })
    }

    /// Reattach a saved head to its encoder, refusing a different encoder.
    pub fn from_artifact(artifact: DecisionArtifact, backbone: Arc<VectorClassifier>) -> Result<Self> {
        if artifact.format_version != DECISION_FORMAT_VERSION {
            return Err(Error::Version {
                artifact: "decision",
                expected: DECISION_FORMAT_VERSION,
                found: artifact.format_version,
            });
        }
        crate::artifact::verify_hash("encoder", &artifact.encoder_hash, &encoder_hash(&backbone)?)?;
        artifact.head.validate()?;
        if artifact.head.input_dim != backbone.hidden_dim {
            return Err(Error::Dimension {
                expected: backbone.hidden_dim,
                got: artifact.head.input_dim,
            });
        }
        Ok(Self {
            backbone,
            head: artifact.head,
            low_confidence: artifact.low_confidence,
        })
    }

    /// Suitability probabilities and the models ordered by them.
    pub fn rank_models(&self, features: &[f64]) -> Result<(AllocationVector, Vec<usize>)> {
        let h = self.backbone.embed(features)?;
        let probs = self.head.probs(&h)?;
        let ranking = rank_by_score(&probs);
        Ok((AllocationVector(probs), ranking))
    }
}

/// Indices by descending score; equal scores keep ascending index order.
pub fn rank_by_score(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order
}

/// Train the head on backbone embeddings; the backbone is not modified.
pub fn train_decision(
    backbone: Arc<VectorClassifier>,
    dataset: &Dataset,
    rows: &[AllocationRow],
    cfg: &DecisionConfig,
) -> Result<DecisionModel> {
    if rows.is_empty() {
        return Err(Error::Empty("allocation rows"));
    }
    let n = rows[0].target.0.len();
    if let Some(r) = rows.iter().find(|r| r.target.0.len() != n) {
        return Err(Error::Dimension {
            expected: n,
            got: r.target.0.len(),
        });
    }
    let embedded = rows
        .iter()
        .map(|r| {
            let s: &Sample = dataset
                .samples
                .get(r.sample_index)
                .ok_or_else(|| Error::InvalidConfig(format!("sample {} not in dataset", r.sample_index)))?;
            backbone.embed(&s.features)
        })
        .collect::<Result<Vec<_>>>()?;
    let inputs: Vec<&[f64]> = embedded.iter().map(Vec::as_slice).collect();
    let targets: Vec<Vec<f64>> = rows.iter().map(|r| r.target.0.clone()).collect();

    let mut head = VectorClassifier::new(
        backbone.hidden_dim,
        cfg.hidden_dim,
        n,
        OutputKind::Sigmoid,
        mix_seed(cfg.train.seed, &[0]),
    )?;
    head.train(&inputs, Labels::Memberships(&targets), &cfg.train)?;
    Ok(DecisionModel {
        backbone,
        head,
        low_confidence: cfg.low_confidence,
    })
}
