//! Shallow axis-aligned decision trees with `{0,1}` outputs, trained on
//! signed example weights.
//!
//! Training maximizes `J(h) = Σ_e w_e · h(x_e)`. For a fixed partition the
//! optimal leaf bit is `1` iff the net weight reaching the leaf is positive,
//! so a split is scored by `Σ_children max(0, net)`. Nodes with at least two
//! levels of depth left pick their split by an exact two-level lookahead
//! (split value = sum of the children's best stump objectives); nodes with one
//! level left run an exhaustive stump search. Depth-2 trees are therefore
//! exactly optimal, which matters for XOR-like targets where no single split
//! has any immediate gain.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance for split improvement and tie detection.
const REL_TOL: f64 = 1e-12;

/// A binary decision tree. Internal nodes route left iff
/// `x[feature] <= threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DecisionTree {
    Leaf {
        leaf: u8,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<DecisionTree>,
        right: Box<DecisionTree>,
    },
}

impl DecisionTree {
    pub fn leaf(output: bool) -> Self {
        DecisionTree::Leaf {
            leaf: u8::from(output),
        }
    }

    pub fn stump(feature: usize, threshold: f64, left: bool, right: bool) -> Self {
        DecisionTree::Split {
            feature,
            threshold,
            left: Box::new(Self::leaf(left)),
            right: Box::new(Self::leaf(right)),
        }
    }

    /// Number of split levels on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        match self {
            DecisionTree::Leaf { .. } => 0,
            DecisionTree::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    /// Smallest input dimension this tree can evaluate.
    pub fn required_dim(&self) -> usize {
        match self {
            DecisionTree::Leaf { .. } => 0,
            DecisionTree::Split {
                feature,
                left,
                right,
                ..
            } => (feature + 1).max(left.required_dim()).max(right.required_dim()),
        }
    }

    pub fn is_constant_zero(&self) -> bool {
        match self {
            DecisionTree::Leaf { leaf } => *leaf == 0,
            DecisionTree::Split { left, right, .. } => {
                left.is_constant_zero() && right.is_constant_zero()
            }
        }
    }

    /// Checks leaf bits and thresholds; used after deserialization.
    pub fn validate(&self) -> Result<()> {
        match self {
            DecisionTree::Leaf { leaf } if *leaf > 1 => Err(Error::InvalidModel(format!(
                "leaf output {leaf} is not a bit"
            ))),
            DecisionTree::Leaf { .. } => Ok(()),
            DecisionTree::Split {
                threshold,
                left,
                right,
                ..
            } => {
                if !threshold.is_finite() {
                    return Err(Error::InvalidModel("non-finite split threshold".into()));
                }
                left.validate()?;
                right.validate()
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<u8> {
        let required = self.required_dim();
        if x.len() < required {
            return Err(Error::FeatureDimension {
                required,
                actual: x.len(),
            });
        }
        Ok(self.eval_unchecked(x))
    }

    /// Evaluates without the dimension check. Panics on a short `x`.
    pub fn eval_unchecked(&self, x: &[f64]) -> u8 {
        let mut node = self;
        loop {
            match node {
                DecisionTree::Leaf { leaf } => return *leaf,
                DecisionTree::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }
}

/// A training point with a signed net weight: positive rewards output 1,
/// negative rewards output 0.
#[derive(Debug, Clone, Copy)]
pub struct SignedExample<'a> {
    pub features: &'a [f64],
    pub weight: f64,
}

impl<'a> SignedExample<'a> {
    pub fn new(features: &'a [f64], weight: f64) -> Self {
        SignedExample { features, weight }
    }
}

/// `Σ_e w_e · tree(x_e)`.
pub fn tree_objective(tree: &DecisionTree, examples: &[SignedExample<'_>]) -> Result<f64> {
    let mut total = 0.0;
    for e in examples {
        if tree.eval(e.features)? == 1 {
            total += e.weight;
        }
    }
    Ok(total)
}

/// Trains a tree of depth at most `max_depth` maximizing the signed objective.
pub fn train_weighted_tree(
    examples: &[SignedExample<'_>],
    max_depth: usize,
) -> Result<DecisionTree> {
    if max_depth == 0 {
        return Err(Error::InvalidConfig("tree depth must be at least 1".into()));
    }
    if examples.is_empty() {
        return Err(Error::EmptyTrainingSet("no examples"));
    }
    let kept: Vec<SignedExample<'_>> = examples
        .iter()
        .copied()
        .filter(|e| e.weight != 0.0)
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptyTrainingSet("all weights are zero"));
    }
    if kept.iter().any(|e| !e.weight.is_finite()) {
        return Err(Error::InvalidConfig("non-finite example weight".into()));
    }
    let dim = kept[0].features.len();
    if let Some(bad) = kept.iter().find(|e| e.features.len() != dim) {
        return Err(Error::FeatureDimension {
            required: dim,
            actual: bad.features.len(),
        });
    }

    let scale: f64 = kept.iter().map(|e| e.weight.abs()).sum();
    let trainer = Trainer {
        examples: &kept,
        dim,
        tol: REL_TOL * scale,
    };
    let all: Vec<usize> = (0..kept.len()).collect();
    Ok(trainer.build(&all, max_depth))
}

struct Trainer<'e, 'a> {
    examples: &'e [SignedExample<'a>],
    dim: usize,
    tol: f64,
}

#[derive(Debug, Clone, Copy)]
struct Split {
    feature: usize,
    threshold: f64,
    value: f64,
}

impl Trainer<'_, '_> {
    fn x(&self, i: usize, f: usize) -> f64 {
        self.examples[i].features[f]
    }

    fn w(&self, i: usize) -> f64 {
        self.examples[i].weight
    }

    fn leaf_value(&self, net: f64) -> f64 {
        if net > self.tol {
            net
        } else {
            0.0
        }
    }

    fn build(&self, subset: &[usize], depth_left: usize) -> DecisionTree {
        let net: f64 = subset.iter().map(|&i| self.w(i)).sum();
        let leaf_value = self.leaf_value(net);
        let leaf = DecisionTree::leaf(net > self.tol);
        if depth_left == 0 || subset.len() < 2 {
            return leaf;
        }
        let split = if depth_left == 1 {
            self.best_stump(subset, net)
        } else {
            self.best_lookahead_split(subset)
        };
        let Some(split) = split else {
            return leaf;
        };
        if split.value <= leaf_value + self.tol {
            return leaf;
        }
        let (left, right): (Vec<usize>, Vec<usize>) = subset
            .iter()
            .partition(|&&i| self.x(i, split.feature) <= split.threshold);
        DecisionTree::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: Box::new(self.build(&left, depth_left - 1)),
            right: Box::new(self.build(&right, depth_left - 1)),
        }
    }

    fn sorted_by(&self, subset: &[usize], f: usize) -> Vec<usize> {
        let mut order = subset.to_vec();
        order.sort_by(|&a, &b| self.x(a, f).total_cmp(&self.x(b, f)).then(a.cmp(&b)));
        order
    }

    /// Exhaustive stump search: lowest feature, then lowest threshold, wins
    /// ties.
    fn best_stump(&self, subset: &[usize], net: f64) -> Option<Split> {
        let mut best: Option<Split> = None;
        for f in 0..self.dim {
            let order = self.sorted_by(subset, f);
            let mut prefix = 0.0;
            for pair in order.windows(2) {
                prefix += self.w(pair[0]);
                let (a, b) = (self.x(pair[0], f), self.x(pair[1], f));
                if a == b {
                    continue;
                }
                let value = self.leaf_value(prefix) + self.leaf_value(net - prefix);
                if best.is_none_or(|s| value > s.value + self.tol) {
                    best = Some(Split {
                        feature: f,
                        threshold: midpoint(a, b),
                        value,
                    });
                }
            }
        }
        best
    }

    /// Chooses the split maximizing the sum of both children's best stump
    /// objectives.
    fn best_lookahead_split(&self, subset: &[usize]) -> Option<Split> {
        // Rank of each example's value among the distinct values of each
        // feature within this subset.
        let mut ranks = vec![vec![0usize; subset.len()]; self.dim];
        let mut num_groups = vec![0usize; self.dim];
        let mut pos_of = vec![usize::MAX; self.examples.len()];
        for (pos, &i) in subset.iter().enumerate() {
            pos_of[i] = pos;
        }
        for g in 0..self.dim {
            let order = self.sorted_by(subset, g);
            let mut rank = 0;
            for (j, &i) in order.iter().enumerate() {
                if j > 0 && self.x(order[j - 1], g) != self.x(i, g) {
                    rank += 1;
                }
                ranks[g][pos_of[i]] = rank;
            }
            num_groups[g] = rank + 1;
        }

        let mut best: Option<Split> = None;
        for f in 0..self.dim {
            let order = self.sorted_by(subset, f);
            let mut left: Vec<PrefixTree> =
                num_groups.iter().map(|&n| PrefixTree::new(n)).collect();
            let mut right: Vec<PrefixTree> =
                num_groups.iter().map(|&n| PrefixTree::new(n)).collect();
            for &i in subset {
                for g in 0..self.dim {
                    right[g].add(ranks[g][pos_of[i]], self.w(i));
                }
            }
            for pair in order.windows(2) {
                let moved = pair[0];
                let pos = pos_of[moved];
                for g in 0..self.dim {
                    left[g].add(ranks[g][pos], self.w(moved));
                    right[g].add(ranks[g][pos], -self.w(moved));
                }
                let (a, b) = (self.x(pair[0], f), self.x(pair[1], f));
                if a == b {
                    continue;
                }
                let value = best_stump_value(&left) + best_stump_value(&right);
                if best.is_none_or(|s| value > s.value + self.tol) {
                    best = Some(Split {
                        feature: f,
                        threshold: midpoint(a, b),
                        value,
                    });
                }
            }
        }
        best
    }
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m < b {
        m
    } else {
        a
    }
}

/// Best stump objective of a weighted set given per-feature prefix trees.
///
/// `max(0,P) + max(0,T-P)` is convex in the prefix sum `P`, so its maximum
/// over all thresholds is attained at the largest or smallest prefix.
fn best_stump_value(trees: &[PrefixTree]) -> f64 {
    let score = |total: f64, p: f64| p.max(0.0) + (total - p).max(0.0);
    trees
        .iter()
        .map(|t| {
            let root = t.root();
            let hi = root.max_prefix.max(0.0);
            let lo = root.min_prefix.min(0.0);
            score(root.sum, hi).max(score(root.sum, lo))
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, Default)]
struct PrefixNode {
    sum: f64,
    max_prefix: f64,
    min_prefix: f64,
}

impl PrefixNode {
    fn single(v: f64) -> Self {
        PrefixNode {
            sum: v,
            max_prefix: v,
            min_prefix: v,
        }
    }

    fn combine(a: PrefixNode, b: PrefixNode) -> Self {
        PrefixNode {
            sum: a.sum + b.sum,
            max_prefix: a.max_prefix.max(a.sum + b.max_prefix),
            min_prefix: a.min_prefix.min(a.sum + b.min_prefix),
        }
    }
}

/// Segment tree over value groups tracking sum and extreme prefix sums.
struct PrefixTree {
    size: usize,
    nodes: Vec<PrefixNode>,
}

impl PrefixTree {
    fn new(len: usize) -> Self {
        let size = len.max(1).next_power_of_two();
        PrefixTree {
            size,
            nodes: vec![PrefixNode::default(); 2 * size],
        }
    }

    fn add(&mut self, pos: usize, delta: f64) {
        let mut i = pos + self.size;
        self.nodes[i] = PrefixNode::single(self.nodes[i].sum + delta);
        while i > 1 {
            i /= 2;
            self.nodes[i] = PrefixNode::combine(self.nodes[2 * i], self.nodes[2 * i + 1]);
        }
    }

    fn root(&self) -> PrefixNode {
        self.nodes[1]
    }
}
