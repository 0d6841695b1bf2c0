//! Graph data model: instances, labelings and the weighted Hamming loss.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An undirected edge with its precomputed pairwise feature vector.
///
/// Endpoints are stored canonically with `p < q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub p: usize,
    pub q: usize,
    pub features: Vec<f64>,
}

/// Per-node class assignment. Classes are 0-based indices in `0..K`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Labeling(pub Vec<usize>);

impl Labeling {
    pub fn constant(n: usize, class: usize) -> Self {
        Labeling(vec![class; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    /// Checks length against `n` nodes and every entry against `k` classes.
    pub fn validate(&self, n: usize, k: usize) -> Result<()> {
        if self.0.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: self.0.len(),
            });
        }
        if let Some((p, &c)) = self.0.iter().enumerate().find(|(_, &c)| c >= k) {
            return Err(Error::InvalidLabeling(format!(
                "node {p} has class {} outside 1..={k}",
                c + 1
            )));
        }
        Ok(())
    }
}

impl std::ops::Index<usize> for Labeling {
    type Output = usize;
    fn index(&self, p: usize) -> &usize {
        &self.0[p]
    }
}

/// A graph with real feature vectors on nodes and edges, plus an optional
/// ground-truth labeling.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    nodes: Vec<Vec<f64>>,
    edges: Vec<Edge>,
    truth: Option<Labeling>,
}

impl Instance {
    /// Validates and builds an instance. Edges may be given in either
    /// orientation; they are stored with `p < q`.
    pub fn new(nodes: Vec<Vec<f64>>, edges: Vec<(usize, usize, Vec<f64>)>) -> Result<Self> {
        let n = nodes.len();
        if let Some(first) = nodes.first() {
            let dim = first.len();
            for (p, x) in nodes.iter().enumerate() {
                if x.len() != dim {
                    return Err(Error::InvalidInstance(format!(
                        "node {p} has feature dimension {}, expected {dim}",
                        x.len()
                    )));
                }
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidInstance(format!(
                        "node {p} has a non-finite feature"
                    )));
                }
            }
        }

        let edge_dim = edges.first().map(|e| e.2.len());
        let mut seen = HashSet::with_capacity(edges.len());
        let mut stored = Vec::with_capacity(edges.len());
        for (j, (a, b, features)) in edges.into_iter().enumerate() {
            if a >= n || b >= n {
                return Err(Error::InvalidInstance(format!(
                    "edge {j} ({a},{b}) references a node outside 0..{n}"
                )));
            }
            if a == b {
                return Err(Error::InvalidInstance(format!(
                    "edge {j} ({a},{b}) is a self-loop"
                )));
            }
            if Some(features.len()) != edge_dim {
                return Err(Error::InvalidInstance(format!(
                    "edge {j} ({a},{b}) has feature dimension {}, expected {}",
                    features.len(),
                    edge_dim.unwrap_or(0)
                )));
            }
            if features.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInstance(format!(
                    "edge {j} ({a},{b}) has a non-finite feature"
                )));
            }
            let (p, q) = if a < b { (a, b) } else { (b, a) };
            if !seen.insert((p, q)) {
                return Err(Error::InvalidInstance(format!(
                    "edge {j} ({a},{b}) duplicates undirected edge {{{p},{q}}}"
                )));
            }
            stored.push(Edge { p, q, features });
        }

        Ok(Instance {
            nodes,
            edges: stored,
            truth: None,
        })
    }

    /// Attaches a ground-truth labeling over `k` classes.
    pub fn with_truth(mut self, truth: Labeling, k: usize) -> Result<Self> {
        truth.validate(self.num_nodes(), k)?;
        self.truth = Some(truth);
        Ok(self)
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> &[Vec<f64>] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn truth(&self) -> Option<&Labeling> {
        self.truth.as_ref()
    }

    pub fn node_dim(&self) -> Option<usize> {
        self.nodes.first().map(Vec::len)
    }

    pub fn edge_dim(&self) -> Option<usize> {
        self.edges.first().map(|e| e.features.len())
    }
}

/// Per-class misclassification costs inside the weighted Hamming loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossWeights(Vec<f64>);

impl LossWeights {
    pub fn new(costs: Vec<f64>) -> Result<Self> {
        if costs.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::InvalidLossWeights(
                "costs must be finite and nonnegative".into(),
            ));
        }
        if !costs.iter().any(|&c| c > 0.0) {
            return Err(Error::InvalidLossWeights(
                "at least one cost must be positive".into(),
            ));
        }
        Ok(LossWeights(costs))
    }

    pub fn uniform(k: usize) -> Self {
        LossWeights(vec![1.0; k])
    }

    /// All-zero weights (Δ ≡ 0). Not a valid training loss, but useful to
    /// reduce loss-augmented inference to plain MAP.
    pub fn zeros(k: usize) -> Self {
        LossWeights(vec![0.0; k])
    }

    pub fn num_classes(&self) -> usize {
        self.0.len()
    }

    pub fn cost(&self, class: usize) -> f64 {
        self.0[class]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Weights each class inversely to its node frequency, normalized so that
/// the frequency-weighted mean cost is 1: `c_k = N / (K * N_k)`.
pub fn class_frequency_weights(dataset: &[Instance], k: usize) -> Result<LossWeights> {
    let mut counts = vec![0usize; k];
    for inst in dataset {
        let truth = inst.truth().ok_or(Error::MissingTruth)?;
        truth.validate(inst.num_nodes(), k)?;
        for &c in truth.as_slice() {
            counts[c] += 1;
        }
    }
    if let Some(absent) = counts.iter().position(|&n| n == 0) {
        return Err(Error::AbsentClass(absent + 1));
    }
    let total: usize = counts.iter().sum();
    let costs = counts
        .iter()
        .map(|&n| total as f64 / (k as f64 * n as f64))
        .collect();
    LossWeights::new(costs)
}

/// `Σ_p c[truth_p] · [pred_p ≠ truth_p]`.
pub fn weighted_hamming_loss(truth: &Labeling, pred: &Labeling, lw: &LossWeights) -> Result<f64> {
    if truth.len() != pred.len() {
        return Err(Error::LengthMismatch {
            expected: truth.len(),
            actual: pred.len(),
        });
    }
    Ok(truth
        .as_slice()
        .iter()
        .zip(pred.as_slice())
        .filter(|(t, p)| t != p)
        .map(|(&t, _)| lw.cost(t))
        .sum())
}
