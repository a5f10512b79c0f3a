//! Adaptive scene sampling.
//!
//! Every repository model is a bandit arm over its own training set. Each
//! round draws from the Beta posterior of every active arm and samples one new
//! training example from the winning arm's set. The example is then probed
//! against every repository model, which yields one allocation row.

use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::learners::VectorClassifier;
use crate::metrics::coefficient_of_variation;
use crate::profiling::ModelRepository;
use crate::rng::SeededRng;

pub const POOLS_FORMAT_VERSION: u32 = 1;

/// Number of draws above which a training set of `gamma_size` elements
/// counts as covered with confidence `theta`:
/// `log(1 - theta^(1/|G|)) / log(1 - 1/|G|)`.
///
/// A one-element set is covered by a single draw, so its threshold is 0.
pub fn well_sampled_threshold(gamma_size: usize, theta: f64) -> Result<f64> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::InvalidConfig("theta must lie in (0, 1)".into()));
    }
    match gamma_size {
        0 => Err(Error::Empty("training set of an arm")),
        1 => Ok(0.0),
        g => {
            let g = g as f64;
            // 1 - theta^(1/g) loses precision for large g; use exp_m1.
            let miss = -(theta.ln() / g).exp_m1();
            Ok(miss.ln() / (-1.0 / g).ln_1p())
        }
    }
}

pub fn is_well_sampled(drawn: usize, gamma_size: usize, theta: f64) -> Result<bool> {
    Ok(drawn as f64 > well_sampled_threshold(gamma_size, theta)?)
}

/// Beta posterior and draw bookkeeping for one repository model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmState {
    pub model_index: usize,
    pub alpha: f64,
    pub beta: f64,
    /// Samples drawn through this arm, in draw order.
    pub sampled: Vec<usize>,
    pub gamma_size: usize,
    pub exhausted: bool,
}

impl ArmState {
    pub fn new(model_index: usize, gamma_size: usize) -> Self {
        Self {
            model_index,
            alpha: 1.0,
            beta: 1.0,
            sampled: Vec::new(),
            gamma_size,
            exhausted: false,
        }
    }

    pub fn well_sampled(&self, theta: f64) -> bool {
        is_well_sampled(self.sampled.len(), self.gamma_size, theta).unwrap_or(true)
    }

    fn active(&self, theta: f64) -> bool {
        !self.exhausted && !self.well_sampled(theta)
    }
}

/// One probed sample and whether each repository model predicted it
/// correctly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolRow {
    pub sample_index: usize,
    pub allocation: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMethod {
    Adaptive,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub theta: f64,
    pub kappa: usize,
    /// Reserved for a soft per-sample suitability rule; exact-match probing
    /// ignores it.
    pub tau_suit: f64,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            theta: 0.9,
            kappa: 6000,
            tau_suit: 0.0,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingState {
    pub format_version: u32,
    pub method: SamplingMethod,
    pub theta: f64,
    pub kappa: usize,
    pub tau_suit: f64,
    pub seed: u64,
    pub arms: Vec<ArmState>,
    pub rows: Vec<PoolRow>,
    /// Arm chosen in each round.
    pub chosen: Vec<usize>,
}

impl SamplingState {
    pub fn new(method: SamplingMethod, gamma_sizes: &[usize], cfg: &SamplingConfig) -> Self {
        Self {
            format_version: POOLS_FORMAT_VERSION,
            method,
            theta: cfg.theta,
            kappa: cfg.kappa,
            tau_suit: cfg.tau_suit,
            seed: cfg.seed,
            arms: gamma_sizes
                .iter()
                .enumerate()
                .map(|(i, &g)| ArmState::new(i, g))
                .collect(),
            rows: Vec::new(),
            chosen: Vec::new(),
        }
    }

    pub fn num_models(&self) -> usize {
        self.arms.len()
    }

    /// Pool of model `i`: every probed sample with its suitability for `i`.
    pub fn pool(&self, i: usize) -> Vec<(usize, bool)> {
        self.rows.iter().map(|r| (r.sample_index, r.allocation[i])).collect()
    }

    /// Number of probed samples each model handled correctly.
    pub fn positive_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_models()];
        for r in &self.rows {
            for (c, &ok) in counts.iter_mut().zip(&r.allocation) {
                *c += ok as usize;
            }
        }
        counts
    }

    pub fn positive_cv(&self) -> f64 {
        let counts: Vec<f64> = self.positive_counts().iter().map(|&c| c as f64).collect();
        coefficient_of_variation(&counts)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != POOLS_FORMAT_VERSION {
            return Err(Error::Version {
                artifact: "pools",
                expected: POOLS_FORMAT_VERSION,
                found: self.format_version,
            });
        }
        let n = self.num_models();
        if let Some(r) = self.rows.iter().find(|r| r.allocation.len() != n) {
            return Err(Error::Dimension {
                expected: n,
                got: r.allocation.len(),
            });
        }
        Ok(())
    }
}

/// One Thompson round over the active arms.
///
/// Returns the arm with the highest posterior draw (lowest index on ties), or
/// `None` when no arm is active. The winner gains one success, every other
/// active arm one failure; inactive arms are left untouched.
pub fn thompson_round(state: &mut SamplingState, rng: &mut SeededRng) -> Option<usize> {
    let theta = state.theta;
    let mut best: Option<(usize, f64)> = None;
    for (i, arm) in state.arms.iter().enumerate() {
        if !arm.active(theta) {
            continue;
        }
        let draw = Beta::new(arm.alpha, arm.beta)
            .expect("alpha and beta stay >= 1")
            .sample(rng.as_rng());
        if best.is_none_or(|(_, b)| draw > b) {
            best = Some((i, draw));
        }
    }
    let (chosen, _) = best?;
    for (i, arm) in state.arms.iter_mut().enumerate() {
        if i == chosen {
            arm.alpha += 1.0;
        } else if arm.active(theta) {
            arm.beta += 1.0;
        }
    }
    Some(chosen)
}

/// A sample suits a model when the model predicts its label exactly.
pub fn probe_suitability(model: &VectorClassifier, sample: &Sample) -> Result<bool> {
    Ok(model.predict(&sample.features)? == sample.label)
}

fn probe_all(models: &[&VectorClassifier], sample: &Sample) -> Result<Vec<bool>> {
    models.iter().map(|m| probe_suitability(m, sample)).collect()
}

/// Thompson-sampled allocation rows, at most `kappa` distinct samples.
pub fn adaptive_sampling(
    dataset: &Dataset,
    repository: &ModelRepository,
    cfg: &SamplingConfig,
) -> Result<SamplingState> {
    if repository.is_empty() {
        return Err(Error::Empty("repository"));
    }
    let gammas: Vec<&[usize]> = repository
        .models
        .iter()
        .map(|e| e.training_scene.sample_indices.as_slice())
        .collect();
    let sizes: Vec<usize> = gammas.iter().map(|g| g.len()).collect();
    let mut state = SamplingState::new(SamplingMethod::Adaptive, &sizes, cfg);
    for (i, &g) in sizes.iter().enumerate() {
        well_sampled_threshold(g, cfg.theta).map_err(|e| match e {
            Error::Empty(_) => Error::InvalidConfig(format!("model {i} has an empty training set")),
            other => other,
        })?;
    }
    let models = repository.classifiers();
    let mut rng = SeededRng::new(cfg.seed);

    // Per-arm candidates with lazy removal of samples drawn through other
    // arms.
    let mut candidates: Vec<Vec<usize>> = gammas.iter().map(|g| g.to_vec()).collect();
    let mut drawn = vec![false; dataset.samples.len()];

    while state.rows.len() < cfg.kappa {
        let Some(arm) = thompson_round(&mut state, &mut rng) else {
            break;
        };
        state.chosen.push(arm);
        let pick = loop {
            let pool = &mut candidates[arm];
            if pool.is_empty() {
                break None;
            }
            let j = rng.below(pool.len());
            let idx = pool.swap_remove(j);
            if !drawn[idx] {
                break Some(idx);
            }
        };
        let Some(idx) = pick else {
            state.arms[arm].exhausted = true;
            continue;
        };
        drawn[idx] = true;
        state.arms[arm].sampled.push(idx);
        if candidates[arm].iter().all(|&c| drawn[c]) {
            state.arms[arm].exhausted = true;
        }
        let allocation = probe_all(&models, &dataset.samples[idx])?;
        state.rows.push(PoolRow {
            sample_index: idx,
            allocation,
        });
    }
    Ok(state)
}

/// Baseline: `kappa` uniform draws without replacement from the training
/// split (all of it when `kappa` is larger), probed the same way.
pub fn random_sampling(
    dataset: &Dataset,
    repository: &ModelRepository,
    kappa: usize,
    seed: u64,
) -> Result<SamplingState> {
    if repository.is_empty() {
        return Err(Error::Empty("repository"));
    }
    let sizes: Vec<usize> = repository
        .models
        .iter()
        .map(|e| e.training_scene.sample_indices.len())
        .collect();
    let cfg = SamplingConfig {
        kappa,
        seed,
        ..SamplingConfig::default()
    };
    let mut state = SamplingState::new(SamplingMethod::Random, &sizes, &cfg);
    let models = repository.classifiers();
    let mut train = dataset.train_indices();
    let mut rng = SeededRng::new(seed);
    rng.shuffle(&mut train);
    train.truncate(kappa);
    for idx in train {
        let allocation = probe_all(&models, &dataset.samples[idx])?;
        state.rows.push(PoolRow {
            sample_index: idx,
            allocation,
        });
    }
    Ok(state)
}
