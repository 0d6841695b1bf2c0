//! Tree-based CRF potentials: feature maps, energies and per-instance caches.
//!
//! The weight vector is laid out class block by class block for the unary
//! part (`K` blocks of `T` entries) followed by the `T` pairwise entries,
//! matching the concatenation order of the joint feature map.

use serde::{Deserialize, Serialize};

use crate::dtree::DecisionTree;
use crate::error::{Error, Result};
use crate::graph::{Instance, Labeling};

/// `K` unary tree groups, one pairwise tree group and their nonnegative
/// weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialModel {
    num_classes: usize,
    unary_groups: Vec<Vec<DecisionTree>>,
    pairwise_group: Vec<DecisionTree>,
    w_unary: Vec<Vec<f64>>,
    w_pairwise: Vec<f64>,
}

impl PotentialModel {
    pub fn empty(num_classes: usize) -> Self {
        PotentialModel {
            num_classes,
            unary_groups: vec![Vec::new(); num_classes],
            pairwise_group: Vec::new(),
            w_unary: vec![Vec::new(); num_classes],
            w_pairwise: Vec::new(),
        }
    }

    /// Builds a model from its parts, checking every invariant.
    pub fn from_parts(
        unary_groups: Vec<Vec<DecisionTree>>,
        pairwise_group: Vec<DecisionTree>,
        w_unary: Vec<Vec<f64>>,
        w_pairwise: Vec<f64>,
    ) -> Result<Self> {
        let model = PotentialModel {
            num_classes: unary_groups.len(),
            unary_groups,
            pairwise_group,
            w_unary,
            w_pairwise,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.num_classes;
        if k == 0 {
            return Err(Error::InvalidModel("model has no classes".into()));
        }
        if self.unary_groups.len() != k || self.w_unary.len() != k {
            return Err(Error::InvalidModel(format!(
                "expected {k} unary groups and weight blocks"
            )));
        }
        let t = self.pairwise_group.len();
        if self.w_pairwise.len() != t {
            return Err(Error::InvalidModel(
                "pairwise weights do not align with pairwise trees".into(),
            ));
        }
        for c in 0..k {
            if self.unary_groups[c].len() != t || self.w_unary[c].len() != t {
                return Err(Error::InvalidModel(format!(
                    "unary group {} has {} trees and {} weights, expected {t}",
                    c + 1,
                    self.unary_groups[c].len(),
                    self.w_unary[c].len()
                )));
            }
        }
        if self.weights().iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidModel(
                "weights must be finite and nonnegative".into(),
            ));
        }
        for tree in self.unary_groups.iter().flatten().chain(&self.pairwise_group) {
            tree.validate()?;
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Completed column-generation rounds (trees per group).
    pub fn rounds(&self) -> usize {
        self.pairwise_group.len()
    }

    /// Length of the joint feature map.
    pub fn dim(&self) -> usize {
        (self.num_classes + 1) * self.rounds()
    }

    pub fn unary_groups(&self) -> &[Vec<DecisionTree>] {
        &self.unary_groups
    }

    pub fn pairwise_group(&self) -> &[DecisionTree] {
        &self.pairwise_group
    }

    pub fn w_unary(&self) -> &[Vec<f64>] {
        &self.w_unary
    }

    pub fn w_pairwise(&self) -> &[f64] {
        &self.w_pairwise
    }

    /// Flattened weight vector in joint-feature-map order.
    pub fn weights(&self) -> Vec<f64> {
        self.w_unary
            .iter()
            .flatten()
            .chain(&self.w_pairwise)
            .copied()
            .collect()
    }

    pub fn set_weights(&mut self, w: &[f64]) -> Result<()> {
        if w.len() != self.dim() {
            return Err(Error::LengthMismatch {
                expected: self.dim(),
                actual: w.len(),
            });
        }
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidModel(
                "weights must be finite and nonnegative".into(),
            ));
        }
        let t = self.rounds();
        for (c, block) in self.w_unary.iter_mut().enumerate() {
            block.copy_from_slice(&w[c * t..(c + 1) * t]);
        }
        self.w_pairwise
            .copy_from_slice(&w[self.num_classes * t..]);
        Ok(())
    }

    /// Appends one round: a tree per class plus one pairwise tree, all with
    /// weight zero.
    pub fn push_round(&mut self, unary: Vec<DecisionTree>, pairwise: DecisionTree) -> Result<()> {
        if unary.len() != self.num_classes {
            return Err(Error::InvalidModel(format!(
                "a round needs {} unary trees, got {}",
                self.num_classes,
                unary.len()
            )));
        }
        for (c, tree) in unary.into_iter().enumerate() {
            self.unary_groups[c].push(tree);
            self.w_unary[c].push(0.0);
        }
        self.pairwise_group.push(pairwise);
        self.w_pairwise.push(0.0);
        Ok(())
    }

    /// Largest node/edge input dimension any tree reads.
    pub fn required_dims(&self) -> (usize, usize) {
        let node = self
            .unary_groups
            .iter()
            .flatten()
            .map(DecisionTree::required_dim)
            .max()
            .unwrap_or(0);
        let edge = self
            .pairwise_group
            .iter()
            .map(DecisionTree::required_dim)
            .max()
            .unwrap_or(0);
        (node, edge)
    }
}

fn check_labeling(y: &Labeling, inst: &Instance, k: usize) -> Result<()> {
    y.validate(inst.num_nodes(), k)
}

/// Per-class counts of unary tree outputs over nodes carrying that class.
pub fn unary_feature_map(y: &Labeling, inst: &Instance, model: &PotentialModel) -> Result<Vec<f64>> {
    check_labeling(y, inst, model.num_classes)?;
    let t = model.rounds();
    let mut psi = vec![0.0; model.num_classes * t];
    for (x, &c) in inst.nodes().iter().zip(y.as_slice()) {
        for (j, tree) in model.unary_groups[c].iter().enumerate() {
            psi[c * t + j] += f64::from(tree.eval(x)?);
        }
    }
    Ok(psi)
}

/// Pairwise tree outputs summed over edges whose endpoints disagree.
pub fn pairwise_feature_map(
    y: &Labeling,
    inst: &Instance,
    model: &PotentialModel,
) -> Result<Vec<f64>> {
    check_labeling(y, inst, model.num_classes)?;
    let mut psi = vec![0.0; model.rounds()];
    for e in inst.edges().iter().filter(|e| y[e.p] != y[e.q]) {
        for (j, tree) in model.pairwise_group.iter().enumerate() {
            psi[j] += f64::from(tree.eval(&e.features)?);
        }
    }
    Ok(psi)
}

/// Unary map followed by pairwise map.
pub fn joint_feature_map(y: &Labeling, inst: &Instance, model: &PotentialModel) -> Result<Vec<f64>> {
    let mut psi = unary_feature_map(y, inst, model)?;
    psi.extend(pairwise_feature_map(y, inst, model)?);
    Ok(psi)
}

/// CRF energy evaluated term by term from the trees.
pub fn energy(y: &Labeling, inst: &Instance, model: &PotentialModel) -> Result<f64> {
    check_labeling(y, inst, model.num_classes)?;
    let mut total = 0.0;
    for (x, &c) in inst.nodes().iter().zip(y.as_slice()) {
        for (tree, w) in model.unary_groups[c].iter().zip(&model.w_unary[c]) {
            total += w * f64::from(tree.eval(x)?);
        }
    }
    for e in inst.edges().iter().filter(|e| y[e.p] != y[e.q]) {
        for (tree, w) in model.pairwise_group.iter().zip(&model.w_pairwise) {
            total += w * f64::from(tree.eval(&e.features)?);
        }
    }
    Ok(total)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cached column values for one instance: `unary[c][t][p]` is column `t` of
/// class block `c` at node `p`, `pair[t][e]` is pairwise column `t` at edge
/// `e`. For tree models these are tree outputs; any nonnegative pairwise
/// columns keep the energy submodular.
#[derive(Debug, Clone, PartialEq)]
pub struct Columns {
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
    unary: Vec<Vec<Vec<f64>>>,
    pair: Vec<Vec<f64>>,
}

impl Columns {
    pub fn empty(inst: &Instance, num_classes: usize) -> Self {
        Columns {
            num_nodes: inst.num_nodes(),
            edges: inst.edges().iter().map(|e| (e.p, e.q)).collect(),
            unary: vec![Vec::new(); num_classes],
            pair: Vec::new(),
        }
    }

    /// Evaluates every tree of `model` on `inst`.
    pub fn from_model(inst: &Instance, model: &PotentialModel) -> Result<Self> {
        let mut cols = Columns::empty(inst, model.num_classes);
        for t in 0..model.rounds() {
            let unary: Vec<&DecisionTree> =
                model.unary_groups.iter().map(|g| &g[t]).collect();
            cols.push_round(inst, &unary, &model.pairwise_group[t])?;
        }
        Ok(cols)
    }

    /// Appends the outputs of one round of trees.
    pub fn push_round(
        &mut self,
        inst: &Instance,
        unary: &[&DecisionTree],
        pairwise: &DecisionTree,
    ) -> Result<()> {
        for (c, tree) in unary.iter().enumerate() {
            let col = inst
                .nodes()
                .iter()
                .map(|x| tree.eval(x).map(f64::from))
                .collect::<Result<Vec<f64>>>()?;
            self.unary[c].push(col);
        }
        let col = inst
            .edges()
            .iter()
            .map(|e| pairwise.eval(&e.features).map(f64::from))
            .collect::<Result<Vec<f64>>>()?;
        self.pair.push(col);
        Ok(())
    }

    /// Linear (identity) feature columns: each class block sees
    /// `[x, -x, 1]` per node, the pairwise block sees the raw edge vector.
    /// Edge features must be nonnegative.
    pub fn linear(inst: &Instance, num_classes: usize) -> Result<Self> {
        let mut cols = Columns::empty(inst, num_classes);
        let dn = inst.node_dim().unwrap_or(0);
        let mut block: Vec<Vec<f64>> = Vec::with_capacity(2 * dn + 1);
        for sign in [1.0, -1.0] {
            for f in 0..dn {
                block.push(inst.nodes().iter().map(|x| sign * x[f]).collect());
            }
        }
        block.push(vec![1.0; inst.num_nodes()]);
        cols.unary = vec![block; num_classes];
        let de = inst.edge_dim().unwrap_or(0);
        for f in 0..de {
            let col: Vec<f64> = inst.edges().iter().map(|e| e.features[f]).collect();
            if col.iter().any(|v| *v < 0.0) {
                return Err(Error::InvalidInstance(format!(
                    "edge feature {f} is negative; linear pairwise columns must be nonnegative"
                )));
            }
            cols.pair.push(col);
        }
        Ok(cols)
    }

    pub fn num_classes(&self) -> usize {
        self.unary.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// Columns per class block.
    pub fn unary_width(&self) -> usize {
        self.unary.first().map_or(0, Vec::len)
    }

    pub fn pair_width(&self) -> usize {
        self.pair.len()
    }

    pub fn dim(&self) -> usize {
        self.num_classes() * self.unary_width() + self.pair_width()
    }

    /// Unary columns of class `c` evaluated at node `p`.
    pub fn unary_at(&self, c: usize, p: usize) -> impl Iterator<Item = f64> + '_ {
        self.unary[c].iter().map(move |col| col[p])
    }

    /// Joint feature map from cached columns.
    pub fn feature_map(&self, y: &Labeling) -> Vec<f64> {
        let t = self.unary_width();
        let k = self.num_classes();
        let mut psi = vec![0.0; self.dim()];
        for (p, &c) in y.as_slice().iter().enumerate() {
            for (j, col) in self.unary[c].iter().enumerate() {
                psi[c * t + j] += col[p];
            }
        }
        for (e, &(p, q)) in self.edges.iter().enumerate() {
            if y[p] != y[q] {
                for (j, col) in self.pair.iter().enumerate() {
                    psi[k * t + j] += col[e];
                }
            }
        }
        psi
    }

    /// Contracts the columns with `w` into per-node/per-edge energy tables.
    pub fn energy_tables(&self, w: &[f64]) -> EnergyTables {
        let t = self.unary_width();
        let k = self.num_classes();
        debug_assert_eq!(w.len(), self.dim());
        let mut unary = vec![0.0; self.num_nodes * k];
        for c in 0..k {
            let wc = &w[c * t..(c + 1) * t];
            for (col, &wj) in self.unary[c].iter().zip(wc) {
                if wj == 0.0 {
                    continue;
                }
                for p in 0..self.num_nodes {
                    unary[p * k + c] += wj * col[p];
                }
            }
        }
        let w2 = &w[k * t..];
        let edges = self
            .edges
            .iter()
            .enumerate()
            .map(|(e, &(p, q))| {
                let weight = self.pair.iter().zip(w2).map(|(col, wj)| wj * col[e]).sum();
                (p, q, weight)
            })
            .collect();
        EnergyTables {
            num_classes: k,
            unary,
            edges,
        }
    }
}

/// A Potts-form energy: per-node, per-class unary costs plus a nonnegative
/// weight per edge charged when its endpoints disagree.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyTables {
    pub num_classes: usize,
    /// Row-major `[node][class]`.
    pub unary: Vec<f64>,
    pub edges: Vec<(usize, usize, f64)>,
}

impl EnergyTables {
    pub fn num_nodes(&self) -> usize {
        self.unary.len() / self.num_classes.max(1)
    }

    pub fn unary(&self, p: usize, c: usize) -> f64 {
        self.unary[p * self.num_classes + c]
    }

    pub fn energy(&self, y: &[usize]) -> f64 {
        let unary: f64 = y.iter().enumerate().map(|(p, &c)| self.unary(p, c)).sum();
        let pair: f64 = self
            .edges
            .iter()
            .filter(|(p, q, _)| y[*p] != y[*q])
            .map(|(_, _, w)| w)
            .sum();
        unary + pair
    }
}

/// Pairwise submodularity terms of one edge under the binary reading of the
/// model: `same = η(0,0) + η(1,1)`, `cut = η(0,1) + η(1,0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeCertificate {
    pub same: f64,
    pub cut: f64,
}

impl EdgeCertificate {
    pub fn holds(&self) -> bool {
        self.same == 0.0 && self.cut >= 0.0
    }
}

/// Evaluates the pairwise term for all four label pairs on every edge.
pub fn submodularity_certificate(
    inst: &Instance,
    model: &PotentialModel,
) -> Result<Vec<EdgeCertificate>> {
    inst.edges()
        .iter()
        .map(|e| {
            let mut response = 0.0;
            for (tree, w) in model.pairwise_group.iter().zip(&model.w_pairwise) {
                response += w * f64::from(tree.eval(&e.features)?);
            }
            let eta = |a: usize, b: usize| if a != b { response } else { 0.0 };
            Ok(EdgeCertificate {
                same: eta(0, 0) + eta(1, 1),
                cut: eta(0, 1) + eta(1, 0),
            })
        })
        .collect()
}


#[cfg(test)]
mod tests {
    use super::testutil::*;
    use super::*;

    fn three_nodes() -> Instance {
        Instance::new(
            vec![vec![0.0], vec![1.0], vec![2.0]],
            vec![(0, 1, vec![0.0]), (1, 2, vec![1.0]), (0, 2, vec![2.0])],
        )
        .unwrap()
    }

    #[test]
    fn empty_model_maps() {
        let inst = three_nodes();
        let m = PotentialModel::empty(2);
        let y = Labeling(vec![0, 1, 0]);
        assert!(joint_feature_map(&y, &inst, &m).unwrap().is_empty());
        assert_eq!(energy(&y, &inst, &m).unwrap(), 0.0);
    }

    #[test]
    fn unary_counts() {
        let inst = three_nodes();
        let mut m = PotentialModel::empty(1);
        m.push_round(vec![DecisionTree::leaf(true)], DecisionTree::leaf(true))
            .unwrap();
        let psi = unary_feature_map(&Labeling(vec![0, 0, 0]), &inst, &m).unwrap();
        assert_eq!(psi, vec![3.0]);
    }

    #[test]
    fn unary_blocks_per_class() {
        let inst = three_nodes();
        let mut m = PotentialModel::empty(2);
        // tree for class 1 fires on node 0 only, class 2 on nodes 1 and 2
        let t1 = DecisionTree::stump(0, 0.5, true, false);
        let t2 = DecisionTree::stump(0, 0.5, false, true);
        m.push_round(vec![t1, t2], DecisionTree::leaf(false)).unwrap();
        let psi = unary_feature_map(&Labeling(vec![0, 1, 1]), &inst, &m).unwrap();
        assert_eq!(psi, vec![1.0, 2.0]);
    }

    #[test]
    fn pairwise_counts_cut_edges() {
        let inst = three_nodes();
        let mut m = PotentialModel::empty(2);
        m.push_round(
            vec![DecisionTree::leaf(false), DecisionTree::leaf(false)],
            DecisionTree::leaf(true),
        )
        .unwrap();
        let constant = Labeling(vec![1, 1, 1]);
        assert_eq!(pairwise_feature_map(&constant, &inst, &m).unwrap(), vec![0.0]);
        // node 1 differs: cuts (0,1) and (1,2)
        let y = Labeling(vec![0, 1, 0]);
        assert_eq!(pairwise_feature_map(&y, &inst, &m).unwrap(), vec![2.0]);

        // fires on edge (0,1) (feature 0) but not (1,2) (feature 1)
        let mut m = PotentialModel::empty(2);
        m.push_round(
            vec![DecisionTree::leaf(false), DecisionTree::leaf(false)],
            DecisionTree::stump(0, 0.5, true, false),
        )
        .unwrap();
        assert_eq!(pairwise_feature_map(&y, &inst, &m).unwrap(), vec![1.0]);
    }

    #[test]
    fn joint_dimension() {
        let mut r = rng(3);
        let m = random_model(&mut r, 3, 4, 2);
        let inst = random_instance(&mut r, 5, 2);
        let psi = joint_feature_map(&Labeling(vec![0, 1, 2, 0, 1]), &inst, &m).unwrap();
        assert_eq!(psi.len(), 3 * 4 + 4);
    }

    #[test]
    fn label_out_of_range() {
        let inst = three_nodes();
        let m = PotentialModel::empty(2);
        assert!(energy(&Labeling(vec![0, 2, 0]), &inst, &m).is_err());
    }

    #[test]
    fn exhaustive_energy_identity() {
        let mut r = rng(11);
        for _ in 0..10 {
            let inst = random_instance(&mut r, 4, 2);
            let m = random_model(&mut r, 2, 2, 2);
            let cols = Columns::from_model(&inst, &m).unwrap();
            let tables = cols.energy_tables(&m.weights());
            for y in all_labelings(4, 2) {
                let e = energy(&y, &inst, &m).unwrap();
                let psi = joint_feature_map(&y, &inst, &m).unwrap();
                assert!((e - dot(&m.weights(), &psi)).abs() <= 1e-9 * (1.0 + e.abs()));
                assert_eq!(cols.feature_map(&y), psi);
                assert!((tables.energy(y.as_slice()) - e).abs() <= 1e-9 * (1.0 + e.abs()));
            }
        }
    }

    #[test]
    fn zero_weight_tree_is_neutral() {
        let mut r = rng(5);
        let inst = random_instance(&mut r, 6, 2);
        let mut m = random_model(&mut r, 3, 2, 2);
        let before: Vec<f64> = all_labelings(6, 3)
            .map(|y| energy(&y, &inst, &m).unwrap())
            .collect();
        let unary = (0..3).map(|_| random_tree(&mut r, 2, 2)).collect();
        m.push_round(unary, random_tree(&mut r, 2, 2)).unwrap();
        let after: Vec<f64> = all_labelings(6, 3)
            .map(|y| energy(&y, &inst, &m).unwrap())
            .collect();
        assert_eq!(before, after);
    }

    #[test]
    fn constant_labeling_has_no_pairwise_energy() {
        let mut r = rng(8);
        let inst = random_instance(&mut r, 7, 2);
        let m = random_model(&mut r, 3, 3, 2);
        for c in 0..3 {
            let y = Labeling::constant(7, c);
            assert!(pairwise_feature_map(&y, &inst, &m)
                .unwrap()
                .iter()
                .all(|v| *v == 0.0));
        }
    }

    #[test]
    fn certificate_on_random_models() {
        let mut r = rng(9);
        for _ in 0..20 {
            let inst = random_instance(&mut r, 6, 2);
            let m = random_model(&mut r, 2, 3, 2);
            for cert in submodularity_certificate(&inst, &m).unwrap() {
                assert!(cert.holds(), "{cert:?}");
            }
        }
    }

    #[test]
    fn model_validation() {
        let mut m = PotentialModel::empty(2);
        m.push_round(
            vec![DecisionTree::leaf(true), DecisionTree::leaf(true)],
            DecisionTree::leaf(true),
        )
        .unwrap();
        assert!(m.set_weights(&[1.0, -1.0, 0.0]).is_err());
        assert!(m.set_weights(&[1.0, 1.0]).is_err());
        m.set_weights(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(m.w_unary(), &[vec![1.0], vec![2.0]]);
        assert_eq!(m.w_pairwise(), &[3.0]);
        assert!(PotentialModel::from_parts(
            vec![vec![DecisionTree::leaf(true)], vec![]],
            vec![DecisionTree::leaf(true)],
            vec![vec![1.0], vec![]],
            vec![1.0],
        )
        .is_err());
    }

    #[test]
    fn linear_columns_layout() {
        let inst = Instance::new(
            vec![vec![1.0, 2.0], vec![3.0, 4.0]],
            vec![(0, 1, vec![0.5, 1.0])],
        )
        .unwrap();
        let cols = Columns::linear(&inst, 2).unwrap();
        assert_eq!(cols.unary_width(), 5);
        assert_eq!(cols.pair_width(), 2);
        let psi = cols.feature_map(&Labeling(vec![0, 1]));
        assert_eq!(
            psi,
            vec![1.0, 2.0, -1.0, -2.0, 1.0, 3.0, 4.0, -3.0, -4.0, 1.0, 0.5, 1.0]
        );
        let neg = Instance::new(vec![vec![0.0]; 2], vec![(0, 1, vec![-1.0])]).unwrap();
        assert!(Columns::linear(&neg, 2).is_err());
    }
}
