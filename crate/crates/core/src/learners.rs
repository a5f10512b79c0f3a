//! One-hidden-layer ReLU networks trained by mini-batch gradient descent.
//!
//! A single architecture covers every model role: the scene encoder, the
//! compressed models, the decision head and the deep baseline. Capacity is
//! set by `hidden_dim` alone.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// How logits become outputs, and which loss training minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputKind {
    /// Mutually exclusive classes; cross-entropy.
    Softmax,
    /// Independent memberships; per-coordinate binary cross-entropy, summed.
    Sigmoid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorClassifier {
    pub format_version: u32,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub output: OutputKind,
    /// Inputs enter the first layer as `(x - input_shift) * input_scale`.
    pub input_shift: Vec<f64>,
    pub input_scale: Vec<f64>,
    /// hidden x input, row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// output x hidden, row-major.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub hidden: Vec<f64>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

/// Per-sample supervision for a batch.
#[derive(Debug, Clone, Copy)]
pub enum Labels<'a> {
    Classes(&'a [usize]),
    Memberships(&'a [Vec<f64>]),
}

impl Labels<'_> {
    fn len(&self) -> usize {
        match self {
            Labels::Classes(c) => c.len(),
            Labels::Memberships(m) => m.len(),
        }
    }
}

/// Parameter-shaped gradient bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl Gradients {
    fn zeros_like(m: &VectorClassifier) -> Self {
        Self {
            w1: vec![0.0; m.w1.len()],
            b1: vec![0.0; m.b1.len()],
            w2: vec![0.0; m.w2.len()],
            b2: vec![0.0; m.b2.len()],
        }
    }

    pub fn norm(&self) -> f64 {
        self.flat().map(|g| g * g).sum::<f64>().sqrt()
    }

    /// Coordinates in the order w1, b1, w2, b2.
    pub fn flat(&self) -> impl Iterator<Item = f64> + '_ {
        self.w1.iter().chain(&self.b1).chain(&self.w2).chain(&self.b2).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub l2: f64,
    /// Heavy-ball momentum coefficient in `[0, 1)`; 0 is plain gradient descent.
    pub momentum: f64,
    /// Fit the input standardization to the training inputs before training.
    pub standardize: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            epochs: 80,
            batch_size: 32,
            l2: 1e-4,
            momentum: 0.9,
            standardize: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::InvalidConfig("learning_rate must be >= 0".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig("epochs and batch_size must be positive".into()));
        }
        if !(self.l2.is_finite() && self.l2 >= 0.0) {
            return Err(Error::InvalidConfig("l2 must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig("momentum must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub final_loss: f64,
    pub epochs_run: usize,
    /// Full-data objective after each epoch.
    pub losses: Vec<f64>,
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `-log softmax(z)[y]` via log-sum-exp.
fn softmax_nll(z: &[f64], y: usize) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    lse - z[y]
}

/// Binary cross-entropy of logit `z` against target `t`, stable for large |z|.
fn bce_with_logit(z: f64, t: f64) -> f64 {
    z.max(0.0) - z * t + (-z.abs()).exp().ln_1p()
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

impl VectorClassifier {
    /// Glorot-uniform weights from the seeded stream, zero biases.
    pub fn new(input_dim: usize, hidden_dim: usize, output_dim: usize, output: OutputKind, seed: u64) -> Result<Self> {
        let mut model = Self::zeros(input_dim, hidden_dim, output_dim, output)?;
        let mut rng = SeededRng::new(seed);
        let limit1 = (6.0 / (input_dim + hidden_dim) as f64).sqrt();
        for w in &mut model.w1 {
            *w = rng.uniform_range(-limit1, limit1);
        }
        let limit2 = (6.0 / (hidden_dim + output_dim) as f64).sqrt();
        for w in &mut model.w2 {
            *w = rng.uniform_range(-limit2, limit2);
        }
        Ok(model)
    }

    pub fn zeros(input_dim: usize, hidden_dim: usize, output_dim: usize, output: OutputKind) -> Result<Self> {
        if input_dim == 0 || hidden_dim == 0 || output_dim == 0 {
            return Err(Error::InvalidConfig("network dimensions must be positive".into()));
        }
        Ok(Self {
            format_version: MODEL_FORMAT_VERSION,
            input_dim,
            hidden_dim,
            output_dim,
            output,
            input_shift: vec![0.0; input_dim],
            input_scale: vec![1.0; input_dim],
            w1: vec![0.0; hidden_dim * input_dim],
            b1: vec![0.0; hidden_dim],
            w2: vec![0.0; output_dim * hidden_dim],
            b2: vec![0.0; output_dim],
        })
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    pub fn params(&self) -> impl Iterator<Item = f64> + '_ {
        self.w1.iter().chain(&self.b1).chain(&self.w2).chain(&self.b2).copied()
    }

    /// Structural and numeric sanity, for deserialized models.
    pub fn validate(&self) -> Result<()> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Version {
                artifact: "model",
                expected: MODEL_FORMAT_VERSION,
                found: self.format_version,
            });
        }
        let shapes = [
            (self.input_shift.len(), self.input_dim),
            (self.input_scale.len(), self.input_dim),
            (self.w1.len(), self.hidden_dim * self.input_dim),
            (self.b1.len(), self.hidden_dim),
            (self.w2.len(), self.output_dim * self.hidden_dim),
            (self.b2.len(), self.output_dim),
        ];
        for (got, expected) in shapes {
            if got != expected {
                return Err(Error::Dimension { expected, got });
            }
        }
        if !self.params().all(f64::is_finite) || !self.input_shift.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidConfig("model has non-finite parameters".into()));
        }
        if !self.input_scale.iter().all(|v| v.is_finite() && *v > 0.0) {
            return Err(Error::InvalidConfig("input scales must be positive".into()));
        }
        Ok(())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::Dimension {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    fn standardize_into(&self, x: &[f64], out: &mut [f64]) {
        for (((o, v), m), s) in out.iter_mut().zip(x).zip(&self.input_shift).zip(&self.input_scale) {
            *o = (v - m) * s;
        }
    }

    /// Hidden activations from an already standardized input.
    fn hidden_into(&self, x: &[f64], hidden: &mut [f64]) {
        let d = self.input_dim;
        for (j, h) in hidden.iter_mut().enumerate() {
            let row = &self.w1[j * d..(j + 1) * d];
            let z: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.b1[j];
            *h = z.max(0.0);
        }
    }

    fn hidden_of(&self, x: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; self.input_dim];
        self.standardize_into(x, &mut z);
        let mut hidden = vec![0.0; self.hidden_dim];
        self.hidden_into(&z, &mut hidden);
        hidden
    }

    /// Set the input standardization to the per-coordinate mean and inverse
    /// standard deviation of `inputs`; constant coordinates keep scale 1.
    pub fn fit_standardization(&mut self, inputs: &[&[f64]]) -> Result<()> {
        if inputs.is_empty() {
            return Err(Error::Empty("inputs"));
        }
        for x in inputs {
            self.check_input(x)?;
        }
        let n = inputs.len() as f64;
        for k in 0..self.input_dim {
            let mean = inputs.iter().map(|x| x[k]).sum::<f64>() / n;
            let var = inputs.iter().map(|x| (x[k] - mean).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            self.input_shift[k] = mean;
            self.input_scale[k] = if sd > 1e-12 { 1.0 / sd } else { 1.0 };
        }
        Ok(())
    }

    fn logits_into(&self, hidden: &[f64], logits: &mut [f64]) {
        let h = self.hidden_dim;
        for (k, z) in logits.iter_mut().enumerate() {
            let row = &self.w2[k * h..(k + 1) * h];
            *z = row.iter().zip(hidden).map(|(w, v)| w * v).sum::<f64>() + self.b2[k];
        }
    }

    fn activate(&self, logits: &[f64]) -> Vec<f64> {
        let mut probs = logits.to_vec();
        match self.output {
            OutputKind::Softmax => softmax_in_place(&mut probs),
            OutputKind::Sigmoid => probs.iter_mut().for_each(|v| *v = sigmoid(*v)),
        }
        probs
    }

    pub fn forward(&self, x: &[f64]) -> Result<Forward> {
        self.check_input(x)?;
        let hidden = self.hidden_of(x);
        let mut logits = vec![0.0; self.output_dim];
        self.logits_into(&hidden, &mut logits);
        let probs = self.activate(&logits);
        Ok(Forward { hidden, logits, probs })
    }

    pub fn probs(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(x)?.probs)
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.forward(x)?.probs))
    }

    /// Penultimate (post-ReLU) activations.
    pub fn embed(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.hidden_of(x))
    }

    fn check_labels(&self, labels: Labels<'_>) -> Result<()> {
        match labels {
            Labels::Classes(ys) => {
                if let Some(&bad) = ys.iter().find(|&&y| y >= self.output_dim) {
                    return Err(Error::InvalidConfig(format!(
                        "label {bad} out of range for {} outputs",
                        self.output_dim
                    )));
                }
            }
            Labels::Memberships(ts) => {
                for t in ts {
                    if t.len() != self.output_dim {
                        return Err(Error::Dimension {
                            expected: self.output_dim,
                            got: t.len(),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    fn sample_loss(&self, logits: &[f64], labels: Labels<'_>, i: usize) -> f64 {
        match labels {
            Labels::Classes(ys) => softmax_nll(logits, ys[i]),
            Labels::Memberships(ts) => logits.iter().zip(&ts[i]).map(|(&z, &t)| bce_with_logit(z, t)).sum(),
        }
    }

    fn l2_penalty(&self, l2: f64) -> f64 {
        if l2 == 0.0 {
            return 0.0;
        }
        0.5 * l2 * self.w1.iter().chain(&self.w2).map(|w| w * w).sum::<f64>()
    }

    /// Mean per-sample loss plus `l2/2 * ||weights||^2` (biases are not
    /// penalized).
    pub fn loss(&self, inputs: &[&[f64]], labels: Labels<'_>, l2: f64) -> Result<f64> {
        self.objective(inputs, labels, l2, None)
    }

    /// Gradient of [`VectorClassifier::loss`] by backpropagation.
    pub fn gradient(&self, inputs: &[&[f64]], labels: Labels<'_>, l2: f64) -> Result<(f64, Gradients)> {
        let mut grads = Gradients::zeros_like(self);
        let loss = self.objective(inputs, labels, l2, Some(&mut grads))?;
        Ok((loss, grads))
    }

    fn objective(
        &self,
        inputs: &[&[f64]],
        labels: Labels<'_>,
        l2: f64,
        mut grads: Option<&mut Gradients>,
    ) -> Result<f64> {
        if inputs.is_empty() {
            return Err(Error::Empty("batch"));
        }
        if labels.len() != inputs.len() {
            return Err(Error::Dimension {
                expected: inputs.len(),
                got: labels.len(),
            });
        }
        self.check_labels(labels)?;
        for x in inputs {
            self.check_input(x)?;
        }

        let (d, h, o) = (self.input_dim, self.hidden_dim, self.output_dim);
        let scale = 1.0 / inputs.len() as f64;
        let mut z = vec![0.0; d];
        let mut hidden = vec![0.0; h];
        let mut logits = vec![0.0; o];
        let mut delta_out = vec![0.0; o];
        let mut delta_hidden = vec![0.0; h];
        let mut total = 0.0;

        for (i, x) in inputs.iter().enumerate() {
            self.standardize_into(x, &mut z);
            self.hidden_into(&z, &mut hidden);
            self.logits_into(&hidden, &mut logits);
            total += self.sample_loss(&logits, labels, i);

            let Some(g) = grads.as_deref_mut() else {
                continue;
            };
            // dL/dlogits is (output - target) for both heads.
            match labels {
                Labels::Classes(ys) => {
                    delta_out.copy_from_slice(&logits);
                    softmax_in_place(&mut delta_out);
                    delta_out[ys[i]] -= 1.0;
                }
                Labels::Memberships(ts) => {
                    for k in 0..o {
                        delta_out[k] = sigmoid(logits[k]) - ts[i][k];
                    }
                }
            }
            delta_hidden.iter_mut().for_each(|v| *v = 0.0);
            for (k, &dout) in delta_out.iter().enumerate() {
                let dk = dout * scale;
                g.b2[k] += dk;
                let row = &self.w2[k * h..(k + 1) * h];
                let grow = &mut g.w2[k * h..(k + 1) * h];
                for j in 0..h {
                    grow[j] += dk * hidden[j];
                    delta_hidden[j] += dout * row[j];
                }
            }
            for j in 0..h {
                if hidden[j] <= 0.0 {
                    continue;
                }
                let dj = delta_hidden[j] * scale;
                g.b1[j] += dj;
                let grow = &mut g.w1[j * d..(j + 1) * d];
                for (gw, xv) in grow.iter_mut().zip(&z) {
                    *gw += dj * xv;
                }
            }
        }

        if let Some(g) = grads {
            if l2 != 0.0 {
                for (gw, w) in g.w1.iter_mut().zip(&self.w1) {
                    *gw += l2 * w;
                }
                for (gw, w) in g.w2.iter_mut().zip(&self.w2) {
                    *gw += l2 * w;
                }
            }
        }
        Ok(total * scale + self.l2_penalty(l2))
    }

    fn params_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    /// Mini-batch gradient descent with heavy-ball momentum. Batches come
    /// from a per-epoch shuffle of the seeded stream. With `standardize` the
    /// input standardization is refitted to `inputs` first.
    pub fn train(&mut self, inputs: &[&[f64]], labels: Labels<'_>, cfg: &TrainConfig) -> Result<TrainReport> {
        cfg.validate()?;
        if inputs.is_empty() {
            return Err(Error::Empty("training set"));
        }
        if cfg.standardize {
            self.fit_standardization(inputs)?;
        }
        let mut rng = SeededRng::new(cfg.seed);
        let mut order: Vec<usize> = (0..inputs.len()).collect();
        let mut velocity = Gradients::zeros_like(self);
        let mut losses = Vec::with_capacity(cfg.epochs);

        let mut batch_x: Vec<&[f64]> = Vec::with_capacity(cfg.batch_size);
        let mut batch_classes: Vec<usize> = Vec::with_capacity(cfg.batch_size);
        let mut batch_members: Vec<Vec<f64>> = Vec::with_capacity(cfg.batch_size);

        for epoch in 0..cfg.epochs {
            rng.shuffle(&mut order);
            for chunk in order.chunks(cfg.batch_size) {
                batch_x.clear();
                batch_x.extend(chunk.iter().map(|&i| inputs[i]));
                let batch_labels = match labels {
                    Labels::Classes(ys) => {
                        batch_classes.clear();
                        batch_classes.extend(chunk.iter().map(|&i| ys[i]));
                        Labels::Classes(&batch_classes)
                    }
                    Labels::Memberships(ts) => {
                        batch_members.clear();
                        batch_members.extend(chunk.iter().map(|&i| ts[i].clone()));
                        Labels::Memberships(&batch_members)
                    }
                };
                let (_, g) = self.gradient(&batch_x, batch_labels, cfg.l2)?;
                let grads = [&g.w1, &g.b1, &g.w2, &g.b2];
                let vels = [&mut velocity.w1, &mut velocity.b1, &mut velocity.w2, &mut velocity.b2];
                for ((param, grad), vel) in self.params_mut().into_iter().zip(grads).zip(vels) {
                    for ((p, gi), v) in param.iter_mut().zip(grad).zip(vel.iter_mut()) {
                        *v = cfg.momentum * *v - cfg.learning_rate * gi;
                        *p += *v;
                    }
                }
            }
            let loss = self.loss(inputs, labels, cfg.l2)?;
            if !loss.is_finite() || !self.params().all(f64::is_finite) {
                return Err(Error::Diverged { epoch });
            }
            losses.push(loss);
        }
        Ok(TrainReport {
            final_loss: *losses.last().expect("at least one epoch"),
            epochs_run: losses.len(),
            losses,
        })
    }
}
