//! Samples, semantic attributes, clip splits, the synthetic scene-structured
//! generator, trace synthesis and the JSON-lines dataset format.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSchema {
    pub feature_dim: usize,
    pub num_classes: usize,
    pub attr_cardinalities: Vec<usize>,
}

impl DatasetSchema {
    pub fn validate(&self) -> Result<()> {
        if self.feature_dim == 0 || self.num_classes == 0 {
            return Err(Error::InvalidConfig(
                "feature_dim and num_classes must be positive".into(),
            ));
        }
        if self.attr_cardinalities.is_empty() || self.attr_cardinalities.contains(&0) {
            return Err(Error::InvalidConfig(
                "attr_cardinalities must be a non-empty list of positive integers".into(),
            ));
        }
        Ok(())
    }

    pub fn num_attr_tuples(&self) -> usize {
        self.attr_cardinalities.iter().product()
    }

    /// Mixed-radix decode with dimension 0 varying fastest, so the first
    /// `attr_cardinalities[0]` cells cover every value of dimension 0.
    pub fn decode_cell(&self, mut cell: usize) -> SemanticAttributes {
        let values = self
            .attr_cardinalities
            .iter()
            .map(|&card| {
                let v = cell % card;
                cell /= card;
                v as u32
            })
            .collect();
        SemanticAttributes(values)
    }
}

/// One category index per attribute dimension. Dimension 0 is the scene
/// family: cells sharing it share a feature region and a base label rule.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SemanticAttributes(pub Vec<u32>);

impl SemanticAttributes {
    pub fn family(&self) -> u32 {
        self.0.first().copied().unwrap_or(0)
    }

    pub fn conforms_to(&self, schema: &DatasetSchema) -> bool {
        self.0.len() == schema.attr_cardinalities.len()
            && self
                .0
                .iter()
                .zip(&schema.attr_cardinalities)
                .all(|(&v, &card)| (v as usize) < card)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    #[serde(rename = "f")]
    pub features: Vec<f64>,
    #[serde(rename = "y")]
    pub label: usize,
    #[serde(rename = "a")]
    pub attrs: SemanticAttributes,
    #[serde(rename = "clip")]
    pub clip_id: u32,
    #[serde(rename = "frame")]
    pub frame_index: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Valid,
    Test,
    Unseen,
}

/// Frame-index ranges of one seen clip. Ranges are half-open and laid out
/// train, then valid, then test.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipSplit {
    pub clip: u32,
    pub train: Range<u32>,
    pub valid: Range<u32>,
    pub test: Range<u32>,
}

impl ClipSplit {
    /// Floor the valid and test shares; the remainder goes to train.
    pub fn from_ratio(clip: u32, frames: u32, ratio: &SplitRatios) -> Self {
        let total = ratio.train + ratio.valid + ratio.test;
        let valid = frames * ratio.valid / total;
        let test = frames * ratio.test / total;
        let train = frames - valid - test;
        ClipSplit {
            clip,
            train: 0..train,
            valid: train..train + valid,
            test: train + valid..frames,
        }
    }

    pub fn split_of(&self, frame: u32) -> Option<Split> {
        if self.train.contains(&frame) {
            Some(Split::Train)
        } else if self.valid.contains(&frame) {
            Some(Split::Valid)
        } else if self.test.contains(&frame) {
            Some(Split::Test)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitDataset {
    pub seen_clips: Vec<u32>,
    pub unseen_clips: Vec<u32>,
    pub clips: Vec<ClipSplit>,
}

impl SplitDataset {
    pub fn clip(&self, clip: u32) -> Option<&ClipSplit> {
        self.clips.iter().find(|c| c.clip == clip)
    }
}

/// Integer ratio parts. Defaults are seen:unseen = 9:1 and
/// train:valid:test = 6:2:2.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub seen: u32,
    pub unseen: u32,
    pub train: u32,
    pub valid: u32,
    pub test: u32,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            seen: 9,
            unseen: 1,
            train: 6,
            valid: 2,
            test: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub schema: DatasetSchema,
    pub num_semantic_cells: usize,
    pub clips_per_cell: usize,
    pub frames_per_clip: usize,
    /// Within-clip Gaussian standard deviation.
    pub cluster_spread: f64,
    pub label_rule_noise: f64,
    /// Standard deviation of the per-clip mean offset.
    pub drift_strength: f64,
    /// Scale of the family centers.
    pub family_separation: f64,
    /// Standard deviation of a cell center around its family center.
    pub cell_offset: f64,
    /// Perturbation of a cell's label rule around its family's rule.
    pub rule_jitter: f64,
    /// Cells of family 0 get `clips_per_cell * skew` clips.
    pub skew: usize,
    pub ratios: SplitRatios,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            schema: DatasetSchema {
                feature_dim: 8,
                num_classes: 4,
                attr_cardinalities: vec![3, 2],
            },
            num_semantic_cells: 6,
            clips_per_cell: 3,
            frames_per_clip: 500,
            cluster_spread: 1.0,
            label_rule_noise: 0.02,
            drift_strength: 0.3,
            family_separation: 1.0,
            cell_offset: 0.5,
            rule_jitter: 0.05,
            skew: 1,
            ratios: SplitRatios::default(),
            seed: 42,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        self.schema.validate()?;
        if self.num_semantic_cells == 0 || self.clips_per_cell == 0 || self.frames_per_clip == 0 {
            return Err(Error::InvalidConfig(
                "num_semantic_cells, clips_per_cell and frames_per_clip must be positive".into(),
            ));
        }
        if self.num_semantic_cells > self.schema.num_attr_tuples() {
            return Err(Error::InvalidConfig(format!(
                "{} cells requested but the schema has only {} attribute tuples",
                self.num_semantic_cells,
                self.schema.num_attr_tuples()
            )));
        }
        if !(0.0..=1.0).contains(&self.label_rule_noise) {
            return Err(Error::InvalidConfig("label_rule_noise must lie in [0, 1]".into()));
        }
        let non_negative = [
            self.drift_strength,
            self.family_separation,
            self.cell_offset,
            self.rule_jitter,
        ];
        if !(self.cluster_spread.is_finite() && self.cluster_spread >= 0.0)
            || non_negative.iter().any(|v| !v.is_finite() || *v < 0.0)
        {
            return Err(Error::InvalidConfig(
                "spreads and offsets must be finite and non-negative".into(),
            ));
        }
        if self.skew == 0 {
            return Err(Error::InvalidConfig("skew must be at least 1".into()));
        }
        let r = &self.ratios;
        if r.seen == 0 || r.train == 0 || r.seen + r.unseen == 0 {
            return Err(Error::InvalidConfig(
                "split ratios must give seen and train shares".into(),
            ));
        }
        Ok(())
    }
}

/// An in-memory dataset: schema, samples ordered by (clip, frame), splits.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schema: DatasetSchema,
    pub samples: Vec<Sample>,
    pub splits: SplitDataset,
}

impl Dataset {
    pub fn split_of(&self, sample: &Sample) -> Split {
        match self.splits.clip(sample.clip_id) {
            Some(c) => c.split_of(sample.frame_index).unwrap_or(Split::Unseen),
            None => Split::Unseen,
        }
    }

    pub fn indices_in(&self, split: Split) -> Vec<usize> {
        let lookup: BTreeMap<u32, &ClipSplit> = self.splits.clips.iter().map(|c| (c.clip, c)).collect();
        self.samples
            .iter()
            .enumerate()
            .filter(|(_, s)| {
                let got = lookup
                    .get(&s.clip_id)
                    .and_then(|c| c.split_of(s.frame_index))
                    .unwrap_or(Split::Unseen);
                got == split
            })
            .map(|(i, _)| i)
            .collect()
    }

    pub fn train_indices(&self) -> Vec<usize> {
        self.indices_in(Split::Train)
    }

    pub fn valid_indices(&self) -> Vec<usize> {
        self.indices_in(Split::Valid)
    }

    /// Sample indices of a clip, ordered by frame.
    pub fn clip_indices(&self, clip: u32) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.samples.len())
            .filter(|&i| self.samples[i].clip_id == clip)
            .collect();
        idx.sort_by_key(|&i| self.samples[i].frame_index);
        idx
    }

    pub fn validate(&self) -> Result<()> {
        self.schema.validate()?;
        for (i, s) in self.samples.iter().enumerate() {
            check_sample(&self.schema, i, s)?;
        }
        Ok(())
    }
}

fn check_sample(schema: &DatasetSchema, index: usize, s: &Sample) -> Result<()> {
    if s.features.len() != schema.feature_dim {
        return Err(Error::Schema {
            sample: index,
            msg: format!(
                "feature vector has length {}, schema feature_dim is {}",
                s.features.len(),
                schema.feature_dim
            ),
        });
    }
    if s.label >= schema.num_classes {
        return Err(Error::Schema {
            sample: index,
            msg: format!("label {} >= num_classes {}", s.label, schema.num_classes),
        });
    }
    if !s.attrs.conforms_to(schema) {
        return Err(Error::Schema {
            sample: index,
            msg: format!("attributes {:?} do not fit the schema", s.attrs.0),
        });
    }
    Ok(())
}

struct CellModel {
    attrs: SemanticAttributes,
    center: Vec<f64>,
    /// num_classes x feature_dim, row-major.
    rule: Vec<f64>,
    bias: Vec<f64>,
}

impl CellModel {
    fn label(&self, x: &[f64], num_classes: usize) -> usize {
        let d = x.len();
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for c in 0..num_classes {
            let row = &self.rule[c * d..(c + 1) * d];
            let score = row
                .iter()
                .zip(x.iter().zip(&self.center))
                .map(|(w, (xi, mi))| w * (xi - mi))
                .sum::<f64>()
                + self.bias[c];
            if score > best_score {
                best_score = score;
                best = c;
            }
        }
        best
    }
}

fn gaussian_vec(rng: &mut SeededRng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * rng.gaussian()).collect()
}

/// Generate a scene-structured classification dataset.
///
/// Every cell owns a feature region (family center plus a cell offset) and an
/// affine argmax label rule (family rule plus jitter). Clips add a per-clip
/// mean offset, so a cell is a Gaussian mixture over its clips.
pub fn generate_dataset(cfg: &GeneratorConfig) -> Result<Dataset> {
    cfg.validate()?;
    let schema = cfg.schema.clone();
    let d = schema.feature_dim;
    let nc = schema.num_classes;
    let families = schema.attr_cardinalities[0];

    let mut structure = SeededRng::derived(cfg.seed, 0);
    let family_centers: Vec<Vec<f64>> = (0..families)
        .map(|_| gaussian_vec(&mut structure, d, cfg.family_separation))
        .collect();
    let family_rules: Vec<Vec<f64>> = (0..families)
        .map(|_| gaussian_vec(&mut structure, nc * d, 1.0))
        .collect();
    let cells: Vec<CellModel> = (0..cfg.num_semantic_cells)
        .map(|c| {
            let attrs = schema.decode_cell(c);
            let f = attrs.family() as usize;
            let center = family_centers[f]
                .iter()
                .map(|m| m + cfg.cell_offset * structure.gaussian())
                .collect();
            let rule = family_rules[f]
                .iter()
                .map(|w| w + cfg.rule_jitter * structure.gaussian())
                .collect();
            let bias = gaussian_vec(&mut structure, nc, 0.3);
            CellModel {
                attrs,
                center,
                rule,
                bias,
            }
        })
        .collect();

    let mut draws = SeededRng::derived(cfg.seed, 1);
    let mut samples = Vec::new();
    let mut clip_id = 0u32;
    for cell in &cells {
        let clips = if cell.attrs.family() == 0 {
            cfg.clips_per_cell * cfg.skew
        } else {
            cfg.clips_per_cell
        };
        for _ in 0..clips {
            let clip_mean: Vec<f64> = cell
                .center
                .iter()
                .map(|m| m + cfg.drift_strength * draws.gaussian())
                .collect();
            for frame in 0..cfg.frames_per_clip {
                let features: Vec<f64> = clip_mean
                    .iter()
                    .map(|m| m + cfg.cluster_spread * draws.gaussian())
                    .collect();
                let mut label = cell.label(&features, nc);
                if nc > 1 && draws.uniform() < cfg.label_rule_noise {
                    // Flip to a different class, uniformly.
                    label = (label + 1 + draws.below(nc - 1)) % nc;
                }
                samples.push(Sample {
                    features,
                    label,
                    attrs: cell.attrs.clone(),
                    clip_id,
                    frame_index: frame as u32,
                });
            }
            clip_id += 1;
        }
    }

    let splits = split_clips(clip_id, cfg.frames_per_clip as u32, &cfg.ratios, cfg.seed);
    Ok(Dataset {
        schema,
        samples,
        splits,
    })
}

/// Assign whole clips to seen/unseen (unseen share floored) and cut every
/// seen clip into train/valid/test frame ranges.
pub fn split_clips(num_clips: u32, frames: u32, ratios: &SplitRatios, seed: u64) -> SplitDataset {
    let unseen_count = num_clips * ratios.unseen / (ratios.seen + ratios.unseen);
    let mut order: Vec<u32> = (0..num_clips).collect();
    SeededRng::derived(seed, 2).shuffle(&mut order);
    let mut unseen_clips: Vec<u32> = order[..unseen_count as usize].to_vec();
    unseen_clips.sort_unstable();
    let seen_clips: Vec<u32> = (0..num_clips)
        .filter(|c| unseen_clips.binary_search(c).is_err())
        .collect();
    let clips = seen_clips
        .iter()
        .map(|&c| ClipSplit::from_ratio(c, frames, ratios))
        .collect();
    SplitDataset {
        seen_clips,
        unseen_clips,
        clips,
    }
}

/// One contiguous excerpt of a trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceSegment {
    pub clip: u32,
    pub start_frame: u32,
    pub len: usize,
}

/// A fast-changing test stream spliced from clip excerpts.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub samples: Vec<Sample>,
    pub segments: Vec<TraceSegment>,
}

impl Trace {
    /// Index ranges of the segments within `samples`.
    pub fn segment_ranges(&self) -> Vec<Range<usize>> {
        let mut start = 0;
        self.segments
            .iter()
            .map(|s| {
                let r = start..start + s.len;
                start += s.len;
                r
            })
            .collect()
    }
}

/// Splice `num_segments` runs of `segment_len` test frames, cut at random
/// offsets from `num_source_clips` randomly chosen seen clips (used in turn).
pub fn synthesize_trace(
    dataset: &Dataset,
    num_source_clips: usize,
    segment_len: usize,
    num_segments: usize,
    seed: u64,
) -> Result<Trace> {
    if num_source_clips == 0 || segment_len == 0 || num_segments == 0 {
        return Err(Error::InvalidConfig("trace parameters must be positive".into()));
    }
    let seen = &dataset.splits.seen_clips;
    if num_source_clips > seen.len() {
        return Err(Error::InvalidConfig(format!(
            "{num_source_clips} source clips requested, only {} seen clips exist",
            seen.len()
        )));
    }
    let mut rng = SeededRng::new(seed);
    let mut order = seen.clone();
    rng.shuffle(&mut order);
    let chosen = &order[..num_source_clips];
    for &clip in chosen {
        let split = dataset.splits.clip(clip).expect("seen clip has a split");
        let available = split.test.len();
        if available < segment_len {
            return Err(Error::ClipTooShort {
                clip,
                available,
                needed: segment_len,
            });
        }
    }

    let mut by_frame: BTreeMap<(u32, u32), usize> = BTreeMap::new();
    for (i, s) in dataset.samples.iter().enumerate() {
        by_frame.insert((s.clip_id, s.frame_index), i);
    }

    let mut samples = Vec::with_capacity(segment_len * num_segments);
    let mut segments = Vec::with_capacity(num_segments);
    for j in 0..num_segments {
        let clip = chosen[j % num_source_clips];
        let test = &dataset.splits.clip(clip).expect("seen clip").test;
        let slack = test.len() - segment_len;
        let start = test.start + rng.below(slack + 1) as u32;
        for frame in start..start + segment_len as u32 {
            let idx = by_frame.get(&(clip, frame)).ok_or(Error::ClipTooShort {
                clip,
                available: (frame - test.start) as usize,
                needed: segment_len,
            })?;
            samples.push(dataset.samples[*idx].clone());
        }
        segments.push(TraceSegment {
            clip,
            start_frame: start,
            len: segment_len,
        });
    }
    Ok(Trace { samples, segments })
}

#[derive(Serialize, Deserialize)]
struct Header {
    schema: DatasetSchema,
    splits: SplitDataset,
}

/// Write the JSON-lines dataset: a header line, then one sample per line.
pub fn write_dataset<W: Write>(dataset: &Dataset, mut out: W) -> Result<()> {
    let header = Header {
        schema: dataset.schema.clone(),
        splits: dataset.splits.clone(),
    };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for s in &dataset.samples {
        serde_json::to_writer(&mut out, s)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_dataset<R: BufRead>(input: R) -> Result<Dataset> {
    let mut lines = input.lines();
    let header_line = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "missing header".into(),
    })??;
    let header: Header = serde_json::from_str(&header_line).map_err(|e| Error::Parse {
        line: 1,
        msg: e.to_string(),
    })?;
    header.schema.validate()?;
    let mut samples = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let line_no = i + 2;
        if line.is_empty() {
            continue;
        }
        let sample: Sample = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;
        check_sample(&header.schema, samples.len(), &sample)?;
        samples.push(sample);
    }
    Ok(Dataset {
        schema: header.schema,
        samples,
        splits: header.splits,
    })
}

pub fn save_dataset(dataset: &Dataset, path: &std::path::Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut out = std::io::BufWriter::new(file);
    write_dataset(dataset, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn load_dataset(path: &std::path::Path) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    read_dataset(std::io::BufReader::new(file))
}
