//! JSON dataset, model and prediction files, plus synthetic grid tasks.
//!
//! Files use 1-based class labels; everything in memory is 0-based.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::dtree::DecisionTree;
use crate::error::{Error, Result};
use crate::graph::{Instance, Labeling, LossWeights};
use crate::learner::TrainConfig;
use crate::potentials::PotentialModel;

pub const DATASET_FORMAT: &str = "crftree-dataset";
pub const MODEL_FORMAT: &str = "crftree-model";
pub const PREDICTIONS_FORMAT: &str = "crftree-predictions";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetDoc {
    format: String,
    version: u32,
    num_classes: usize,
    node_dim: usize,
    edge_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    loss_weights: Option<Vec<f64>>,
    instances: Vec<InstanceDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceDoc {
    nodes: Vec<NodeDoc>,
    edges: Vec<EdgeDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeDoc {
    features: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeDoc {
    p: usize,
    q: usize,
    features: Vec<f64>,
}

/// A set of graph instances sharing class count and feature dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub num_classes: usize,
    pub node_dim: usize,
    pub edge_dim: usize,
    pub loss_weights: Option<LossWeights>,
    pub instances: Vec<Instance>,
}

fn format_error(path: &str, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_string(),
        message: message.into(),
    }
}

fn parse_json<T: DeserializeOwned>(text: &str, path: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| format_error(path, e.to_string()))
}

fn check_header(format: &str, version: u32, expected: &str, path: &str) -> Result<()> {
    if format != expected {
        return Err(format_error(
            path,
            format!("field `format`: expected \"{expected}\", found \"{format}\""),
        ));
    }
    if version != SCHEMA_VERSION {
        return Err(format_error(
            path,
            format!("field `version`: unsupported version {version}, expected {SCHEMA_VERSION}"),
        ));
    }
    Ok(())
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("documents always serialize");
    text.push('\n');
    text
}

impl Dataset {
    pub fn new(num_classes: usize, node_dim: usize, edge_dim: usize, instances: Vec<Instance>) -> Result<Self> {
        let ds = Dataset {
            num_classes,
            node_dim,
            edge_dim,
            loss_weights: None,
            instances,
        };
        ds.validate("<dataset>")?;
        Ok(ds)
    }

    fn validate(&self, path: &str) -> Result<()> {
        if self.num_classes < 2 {
            return Err(format_error(path, "field `num_classes`: need at least 2 classes"));
        }
        if let Some(lw) = &self.loss_weights {
            if lw.num_classes() != self.num_classes {
                return Err(format_error(
                    path,
                    format!(
                        "field `loss_weights`: {} entries for {} classes",
                        lw.num_classes(),
                        self.num_classes
                    ),
                ));
            }
        }
        for (i, inst) in self.instances.iter().enumerate() {
            if let Some(d) = inst.node_dim().filter(|d| *d != self.node_dim) {
                return Err(format_error(
                    path,
                    format!("instances[{i}]: node features have dimension {d}, header says {}", self.node_dim),
                ));
            }
            if let Some(d) = inst.edge_dim().filter(|d| *d != self.edge_dim) {
                return Err(format_error(
                    path,
                    format!("instances[{i}]: edge features have dimension {d}, header says {}", self.edge_dim),
                ));
            }
            if let Some(truth) = inst.truth() {
                truth
                    .validate(inst.num_nodes(), self.num_classes)
                    .map_err(|e| format_error(path, format!("instances[{i}]: {e}")))?;
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// True if every instance carries a ground truth.
    pub fn is_labeled(&self) -> bool {
        self.instances.iter().all(|inst| inst.truth().is_some())
    }

    /// Parses a dataset document; `path` only labels diagnostics.
    pub fn from_json(text: &str, path: &str) -> Result<Self> {
        let doc: DatasetDoc = parse_json(text, path)?;
        check_header(&doc.format, doc.version, DATASET_FORMAT, path)?;
        let loss_weights = doc
            .loss_weights
            .map(LossWeights::new)
            .transpose()
            .map_err(|e| format_error(path, format!("field `loss_weights`: {e}")))?;
        let mut instances = Vec::with_capacity(doc.instances.len());
        for (i, inst) in doc.instances.into_iter().enumerate() {
            let labeled = inst.nodes.iter().filter(|n| n.label.is_some()).count();
            if labeled != 0 && labeled != inst.nodes.len() {
                return Err(format_error(
                    path,
                    format!("instances[{i}]: either every node or no node must have a label"),
                ));
            }
            let mut labels = Vec::with_capacity(labeled);
            for (p, node) in inst.nodes.iter().enumerate() {
                match node.label {
                    Some(0) => {
                        return Err(format_error(
                            path,
                            format!("instances[{i}].nodes[{p}].label: labels are 1-based"),
                        ))
                    }
                    Some(l) => labels.push(l - 1),
                    None => {}
                }
            }
            let nodes = inst.nodes.into_iter().map(|n| n.features).collect();
            let edges = inst.edges.into_iter().map(|e| (e.p, e.q, e.features)).collect();
            let mut instance =
                Instance::new(nodes, edges).map_err(|e| format_error(path, format!("instances[{i}]: {e}")))?;
            if labeled > 0 {
                instance = instance
                    .with_truth(Labeling(labels), doc.num_classes)
                    .map_err(|e| format_error(path, format!("instances[{i}]: {e}")))?;
            }
            instances.push(instance);
        }
        let ds = Dataset {
            num_classes: doc.num_classes,
            node_dim: doc.node_dim,
            edge_dim: doc.edge_dim,
            loss_weights,
            instances,
        };
        ds.validate(path)?;
        Ok(ds)
    }

    pub fn to_json(&self) -> String {
        let doc = DatasetDoc {
            format: DATASET_FORMAT.into(),
            version: SCHEMA_VERSION,
            num_classes: self.num_classes,
            node_dim: self.node_dim,
            edge_dim: self.edge_dim,
            loss_weights: self.loss_weights.as_ref().map(|lw| lw.as_slice().to_vec()),
            instances: self
                .instances
                .iter()
                .map(|inst| InstanceDoc {
                    nodes: inst
                        .nodes()
                        .iter()
                        .enumerate()
                        .map(|(p, x)| NodeDoc {
                            features: x.clone(),
                            label: inst.truth().map(|y| y[p] + 1),
                        })
                        .collect(),
                    edges: inst
                        .edges()
                        .iter()
                        .map(|e| EdgeDoc {
                            p: e.p,
                            q: e.q,
                            features: e.features.clone(),
                        })
                        .collect(),
                })
                .collect(),
        };
        to_json(&doc)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&read_text(path)?, &path.display().to_string())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_text(path.as_ref(), &self.to_json())
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    format: String,
    version: u32,
    num_classes: usize,
    unary_trees: Vec<Vec<DecisionTree>>,
    pairwise_trees: Vec<DecisionTree>,
    unary_weights: Vec<Vec<f64>>,
    pairwise_weights: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config: Option<TrainConfig>,
}

/// A trained model together with the configuration that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub model: PotentialModel,
    pub config: Option<TrainConfig>,
}

impl ModelFile {
    pub fn from_json(text: &str, path: &str) -> Result<Self> {
        let doc: ModelDoc = parse_json(text, path)?;
        check_header(&doc.format, doc.version, MODEL_FORMAT, path)?;
        if doc.unary_trees.len() != doc.num_classes {
            return Err(format_error(
                path,
                format!(
                    "field `unary_trees`: {} groups for {} classes",
                    doc.unary_trees.len(),
                    doc.num_classes
                ),
            ));
        }
        let model = PotentialModel::from_parts(
            doc.unary_trees,
            doc.pairwise_trees,
            doc.unary_weights,
            doc.pairwise_weights,
        )
        .map_err(|e| format_error(path, e.to_string()))?;
        Ok(ModelFile {
            model,
            config: doc.config,
        })
    }

    pub fn to_json(&self) -> String {
        let m = &self.model;
        to_json(&ModelDoc {
            format: MODEL_FORMAT.into(),
            version: SCHEMA_VERSION,
            num_classes: m.num_classes(),
            unary_trees: m.unary_groups().to_vec(),
            pairwise_trees: m.pairwise_group().to_vec(),
            unary_weights: m.w_unary().to_vec(),
            pairwise_weights: m.w_pairwise().to_vec(),
            config: self.config.clone(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&read_text(path)?, &path.display().to_string())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_text(path.as_ref(), &self.to_json())
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PredictionsDoc {
    format: String,
    version: u32,
    num_classes: usize,
    labels: Vec<Vec<usize>>,
}

/// Predicted labelings, one per instance of the source dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub num_classes: usize,
    pub labelings: Vec<Labeling>,
}

impl Predictions {
    pub fn from_json(text: &str, path: &str) -> Result<Self> {
        let doc: PredictionsDoc = parse_json(text, path)?;
        check_header(&doc.format, doc.version, PREDICTIONS_FORMAT, path)?;
        let k = doc.num_classes;
        let labelings = doc
            .labels
            .into_iter()
            .enumerate()
            .map(|(i, y)| {
                y.into_iter()
                    .enumerate()
                    .map(|(p, l)| {
                        if (1..=k).contains(&l) {
                            Ok(l - 1)
                        } else {
                            Err(format_error(
                                path,
                                format!("labels[{i}][{p}]: {l} is outside 1..={k}"),
                            ))
                        }
                    })
                    .collect::<Result<Vec<_>>>()
                    .map(Labeling)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Predictions {
            num_classes: k,
            labelings,
        })
    }

    pub fn to_json(&self) -> String {
        to_json(&PredictionsDoc {
            format: PREDICTIONS_FORMAT.into(),
            version: SCHEMA_VERSION,
            num_classes: self.num_classes,
            labels: self
                .labelings
                .iter()
                .map(|y| y.as_slice().iter().map(|c| c + 1).collect())
                .collect(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&read_text(path)?, &path.display().to_string())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_text(path.as_ref(), &self.to_json())
    }
}

/// Which node-feature distribution a synthetic task uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthTask {
    /// Class `c` has its first coordinate in `[c, c + 0.8]`.
    Linear,
    /// The class is the parity of the sign pattern of two coordinates.
    Xor,
}

impl FromStr for SynthTask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(SynthTask::Linear),
            "xor" => Ok(SynthTask::Xor),
            other => Err(Error::InvalidConfig(format!(
                "unknown task `{other}` (expected `linear` or `xor`)"
            ))),
        }
    }
}

/// Smooth random class regions of near-equal size: per-class uniform noise
/// fields blurred with a 3×3 box filter, then a capacity-limited argmax.
fn region_labels(rng: &mut ChaCha8Rng, grid: usize, k: usize) -> Vec<usize> {
    let n = grid * grid;
    let mut fields: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..n).map(|_| rng.random::<f64>()).collect())
        .collect();
    let passes = (grid / 4).max(1);
    for field in &mut fields {
        for _ in 0..passes {
            let src = field.clone();
            for r in 0..grid {
                for c in 0..grid {
                    let mut sum = 0.0;
                    let mut cnt = 0.0;
                    for rr in r.saturating_sub(1)..(r + 2).min(grid) {
                        for cc in c.saturating_sub(1)..(c + 2).min(grid) {
                            sum += src[rr * grid + cc];
                            cnt += 1.0;
                        }
                    }
                    field[r * grid + c] = sum / cnt;
                }
            }
        }
    }
    // Greedy balanced argmax: strongest (cell, class) scores first, each
    // class capped at ceil(n / K) cells.
    let mut order: Vec<(usize, usize)> = (0..n).flat_map(|p| (0..k).map(move |c| (p, c))).collect();
    order.sort_by(|&(p, c), &(q, d)| fields[d][q].total_cmp(&fields[c][p]).then((p, c).cmp(&(q, d))));
    let cap = n.div_ceil(k);
    let mut used = vec![0usize; k];
    let mut labels = vec![usize::MAX; n];
    for (p, c) in order {
        if labels[p] == usize::MAX && used[c] < cap {
            labels[p] = c;
            used[c] += 1;
        }
    }
    labels
}

/// Two latent coordinates for a node of class `class`.
///
/// For the XOR task the quadrant (sign pattern) determines the class. A point
/// either sits on one arm of a plus shape (one coordinate of magnitude in
/// `[0.3, 1]`, the other in `[0, 0.15]`) or, with probability 0.4, in the
/// small central square `[-0.15, 0.15]²`. Keeping mass near the axes and the
/// origin leaves no half-plane much better than chance. Quadrants `0..4` map to classes by
/// `quadrant mod K`, so opposite quadrants share a class when `K = 2`.
fn sample_features(rng: &mut ChaCha8Rng, task: SynthTask, class: usize, k: usize) -> Vec<f64> {
    match task {
        SynthTask::Linear => vec![class as f64 + rng.random_range(0.0..0.8), rng.random::<f64>()],
        SynthTask::Xor => {
            let quadrants: Vec<usize> = (0..4).filter(|q| q % k == class).collect();
            let quadrant = *quadrants.choose(rng).expect("K <= 4 gives every class a quadrant");
            let (su, sv) = match quadrant {
                0 => (1.0, 1.0),
                1 => (-1.0, 1.0),
                2 => (-1.0, -1.0),
                _ => (1.0, -1.0),
            };
            let minor = rng.random_range(0.0..=0.15);
            let major = if rng.random_bool(0.4) {
                rng.random_range(0.0..=0.15)
            } else {
                rng.random_range(0.3..=1.0)
            };
            if rng.random_bool(0.5) {
                vec![su * major, sv * minor]
            } else {
                vec![su * minor, sv * major]
            }
        }
    }
}

/// Generates `count` labeled `grid × grid` 4-connected instances.
///
/// With probability `flip_noise` a node's features are drawn from a random
/// other class. Edge features are `[|Δx₀|, |Δx₁|, 1]`.
pub fn synth_grid_task(
    seed: u64,
    grid_size: usize,
    num_classes: usize,
    flip_noise: f64,
    task: SynthTask,
    count: usize,
) -> Result<Dataset> {
    if grid_size < 2 {
        return Err(Error::InvalidConfig(format!("grid size must be at least 2, got {grid_size}")));
    }
    if num_classes < 2 {
        return Err(Error::UnsupportedClassCount(num_classes));
    }
    if task == SynthTask::Xor && num_classes > 4 {
        return Err(Error::InvalidConfig(format!(
            "the xor task supports 2 to 4 classes, got {num_classes}"
        )));
    }
    if !(0.0..=1.0).contains(&flip_noise) {
        return Err(Error::InvalidConfig(format!("noise must lie in [0, 1], got {flip_noise}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = grid_size;
    let mut instances = Vec::with_capacity(count);
    for _ in 0..count {
        let labels = region_labels(&mut rng, g, num_classes);
        let nodes: Vec<Vec<f64>> = labels
            .iter()
            .map(|&c| {
                let source = if rng.random_bool(flip_noise) {
                    let other = rng.random_range(0..num_classes - 1);
                    if other >= c { other + 1 } else { other }
                } else {
                    c
                };
                sample_features(&mut rng, task, source, num_classes)
            })
            .collect();
        let mut edges = Vec::with_capacity(2 * g * (g - 1));
        for r in 0..g {
            for c in 0..g {
                let p = r * g + c;
                for q in [(c + 1 < g).then_some(p + 1), (r + 1 < g).then_some(p + g)]
                    .into_iter()
                    .flatten()
                {
                    let f = vec![
                        (nodes[p][0] - nodes[q][0]).abs(),
                        (nodes[p][1] - nodes[q][1]).abs(),
                        1.0,
                    ];
                    edges.push((p, q, f));
                }
            }
        }
        instances.push(Instance::new(nodes, edges)?.with_truth(Labeling(labels), num_classes)?);
    }
    Dataset::new(num_classes, 2, 3, instances)
}

/// Train and test sets drawn from one random stream, so they never overlap
/// in generator state.
pub fn synth_split(
    seed: u64,
    grid_size: usize,
    num_classes: usize,
    flip_noise: f64,
    task: SynthTask,
    n_train: usize,
    n_test: usize,
) -> Result<(Dataset, Dataset)> {
    let mut all = synth_grid_task(seed, grid_size, num_classes, flip_noise, task, n_train + n_test)?;
    let test = all.instances.split_off(n_train);
    let test = Dataset::new(num_classes, all.node_dim, all.edge_dim, test)?;
    Ok((all, test))
}
