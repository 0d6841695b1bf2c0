//! Training: column generation of decision trees around 1-slack
//! cutting-plane optimization of their weights.
//!
//! Each column-generation round trains `K` unary trees and one pairwise tree
//! on dual-weighted examples, appends them with zero weight, and re-solves
//! the weight problem by cutting planes starting from the previous weights.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dtree::{train_weighted_tree, tree_objective, DecisionTree, SignedExample};
use crate::error::{Error, Result};
use crate::graph::{weighted_hamming_loss, Instance, Labeling, LossWeights};
use crate::inference::loss_augmented_tables;
use crate::potentials::{dot, Columns, PotentialModel};
use crate::qp::{extract_lambda, solve_restricted_qp_with, ConstraintEntry, LambdaMap, QpOptions};

/// Tree objectives at or below this value count as "no improving column".
pub const KKT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Regularization trade-off `C`.
    pub c: f64,
    /// Column-generation rounds.
    pub cg_iters: usize,
    pub tree_depth: usize,
    /// Cutting-plane termination threshold.
    pub eps_cp: f64,
    pub max_cp_iters: usize,
    /// Recorded for provenance; training itself is deterministic.
    pub seed: u64,
    /// Stop column generation once no new tree has a positive objective.
    pub early_stop: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            c: 1.0,
            cg_iters: 50,
            tree_depth: 2,
            eps_cp: 0.01,
            max_cp_iters: 100,
            seed: 0,
            early_stop: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::InvalidConfig(format!("C must be positive, got {}", self.c)));
        }
        if !(self.eps_cp > 0.0 && self.eps_cp.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "eps_cp must be positive, got {}",
                self.eps_cp
            )));
        }
        if self.tree_depth == 0 {
            return Err(Error::InvalidConfig("tree depth must be at least 1".into()));
        }
        if self.max_cp_iters == 0 {
            return Err(Error::InvalidConfig("max_cp_iters must be at least 1".into()));
        }
        Ok(())
    }
}

/// Checks that every instance is labeled with classes below `K` and that
/// feature dimensions agree across instances. Returns the ground truths.
fn checked_truths<'a>(dataset: &'a [Instance], k: usize) -> Result<Vec<&'a Labeling>> {
    if k < 2 {
        return Err(Error::UnsupportedClassCount(k));
    }
    let mut node_dim = None;
    let mut edge_dim = None;
    let mut truths = Vec::with_capacity(dataset.len());
    for (i, inst) in dataset.iter().enumerate() {
        let truth = inst.truth().ok_or(Error::MissingTruth)?;
        truth.validate(inst.num_nodes(), k)?;
        for (seen, dim, what) in [
            (&mut node_dim, inst.node_dim(), "node"),
            (&mut edge_dim, inst.edge_dim(), "edge"),
        ] {
            match (*seen, dim) {
                (Some(a), Some(b)) if a != b => {
                    return Err(Error::InvalidInstance(format!(
                        "instance {i} has {what} feature dimension {b}, earlier instances have {a}"
                    )))
                }
                (None, Some(b)) => *seen = Some(b),
                _ => {}
            }
        }
        truths.push(truth);
    }
    Ok(truths)
}

/// Net signed weights: `unary[c][i][p]` for node `p` of example `i` in the
/// class-`c` problem, `pairwise[i][e]` for edge `e`.
struct DualNets {
    unary: Vec<Vec<Vec<f64>>>,
    pairwise: Vec<Vec<f64>>,
}

fn dual_nets(dataset: &[Instance], lambda: &LambdaMap, k: usize) -> Result<DualNets> {
    let truths = checked_truths(dataset, k)?;
    let mut unary: Vec<Vec<Vec<f64>>> = (0..k)
        .map(|_| dataset.iter().map(|inst| vec![0.0; inst.num_nodes()]).collect())
        .collect();
    let mut pairwise: Vec<Vec<f64>> = dataset.iter().map(|inst| vec![0.0; inst.num_edges()]).collect();
    for ((i, y), &lam) in lambda {
        let inst = dataset.get(*i).ok_or_else(|| {
            Error::InvalidConfig(format!("dual weight refers to missing example {i}"))
        })?;
        y.validate(inst.num_nodes(), k)?;
        let truth = truths[*i];
        for (p, (&a, &t)) in y.as_slice().iter().zip(truth.as_slice()).enumerate() {
            if a != t {
                unary[a][*i][p] += lam;
                unary[t][*i][p] -= lam;
            }
        }
        for (e, edge) in inst.edges().iter().enumerate() {
            let cut_y = y[edge.p] != y[edge.q];
            let cut_truth = truth[edge.p] != truth[edge.q];
            if cut_y != cut_truth {
                pairwise[*i][e] += if cut_y { lam } else { -lam };
            }
        }
    }
    Ok(DualNets { unary, pairwise })
}

fn unary_examples<'a>(dataset: &'a [Instance], nets: &[Vec<f64>]) -> Vec<SignedExample<'a>> {
    dataset
        .iter()
        .zip(nets)
        .flat_map(|(inst, net)| {
            inst.nodes()
                .iter()
                .zip(net)
                .filter(|(_, w)| **w != 0.0)
                .map(|(x, &w)| SignedExample::new(x, w))
        })
        .collect()
}

fn pairwise_examples<'a>(dataset: &'a [Instance], nets: &[Vec<f64>]) -> Vec<SignedExample<'a>> {
    dataset
        .iter()
        .zip(nets)
        .flat_map(|(inst, net)| {
            inst.edges()
                .iter()
                .zip(net)
                .filter(|(_, w)| **w != 0.0)
                .map(|(e, &w)| SignedExample::new(&e.features, w))
        })
        .collect()
}

fn train_or_zero(examples: &[SignedExample<'_>], depth: usize, what: &str) -> Result<DecisionTree> {
    if examples.is_empty() {
        log::debug!("{what}: no examples with nonzero net weight, using a constant-0 tree");
        return Ok(DecisionTree::leaf(false));
    }
    train_weighted_tree(examples, depth)
}

/// One tree per class maximizing its dual-weighted objective: node `p` of
/// example `i` with violated labeling `y` counts `+λ(i, y)` towards class
/// `y_p` and `-λ(i, y)` towards the true class.
pub fn generate_unary_trees(
    dataset: &[Instance],
    lambda: &LambdaMap,
    num_classes: usize,
    depth: usize,
) -> Result<Vec<DecisionTree>> {
    if lambda.is_empty() {
        return Err(Error::NoDualSignal);
    }
    let nets = dual_nets(dataset, lambda, num_classes)?;
    nets.unary
        .par_iter()
        .enumerate()
        .map(|(c, net)| {
            train_or_zero(&unary_examples(dataset, net), depth, &format!("class {}", c + 1))
        })
        .collect()
}

/// The pairwise tree: edge `e` counts `+λ(i, y)` if `y` cuts it and
/// `-λ(i, y)` if the ground truth does.
pub fn generate_pairwise_tree(
    dataset: &[Instance],
    lambda: &LambdaMap,
    num_classes: usize,
    depth: usize,
) -> Result<DecisionTree> {
    if lambda.is_empty() {
        return Err(Error::NoDualSignal);
    }
    let nets = dual_nets(dataset, lambda, num_classes)?;
    train_or_zero(&pairwise_examples(dataset, &nets.pairwise), depth, "pairwise")
}

/// Largest dual-weighted objective among the candidate trees. A value at or
/// below zero means no candidate column can improve the objective.
pub fn kkt_violation(
    dataset: &[Instance],
    lambda: &LambdaMap,
    num_classes: usize,
    unary: &[DecisionTree],
    pairwise: &DecisionTree,
) -> Result<f64> {
    if unary.len() != num_classes {
        return Err(Error::LengthMismatch {
            expected: num_classes,
            actual: unary.len(),
        });
    }
    if lambda.is_empty() {
        return Ok(0.0);
    }
    let nets = dual_nets(dataset, lambda, num_classes)?;
    let mut best = tree_objective(pairwise, &pairwise_examples(dataset, &nets.pairwise))?;
    for (tree, net) in unary.iter().zip(&nets.unary) {
        best = best.max(tree_objective(tree, &unary_examples(dataset, net))?);
    }
    Ok(best)
}

/// Everything the cutting-plane loop needs about the training set under a
/// fixed set of columns.
pub struct WeightProblem<'a> {
    pub columns: &'a [Columns],
    pub truths: &'a [&'a Labeling],
    pub loss: &'a LossWeights,
}

/// Result of separating the current `w`: the most violated joint constraint
/// plus the exact hinge risk it implies.
struct Separation {
    constraint: ConstraintEntry,
    /// `(1/m) Σ_i max(0, Δ_i - w·δΨ_i)`
    mean_hinge: f64,
}

impl WeightProblem<'_> {
    fn dim(&self) -> usize {
        self.columns.first().map_or(0, Columns::dim)
    }

    fn separate(&self, w: &[f64]) -> Result<Separation> {
        let m = self.columns.len();
        let dim = self.dim();
        let per_example = self
            .columns
            .par_iter()
            .zip(self.truths.par_iter())
            .map(|(cols, &truth)| -> Result<(Labeling, Vec<f64>, f64, f64)> {
                let tables = cols.energy_tables(w);
                let y = loss_augmented_tables(&tables, truth, self.loss)?;
                let loss = weighted_hamming_loss(truth, &y, self.loss)?;
                let mut diff = cols.feature_map(&y);
                for (d, t) in diff.iter_mut().zip(cols.feature_map(truth)) {
                    *d -= t;
                }
                let violation = loss - dot(w, &diff);
                Ok((y, diff, loss, violation))
            })
            .collect::<Result<Vec<_>>>()?;

        let mut d = vec![0.0; dim];
        let mut b = 0.0;
        let mut hinge = 0.0;
        let mut r = Vec::with_capacity(m);
        let mut violated = Vec::with_capacity(m);
        for (y, diff, loss, violation) in per_example {
            let active = violation > 0.0;
            if active {
                for (di, x) in d.iter_mut().zip(&diff) {
                    *di += x;
                }
                b += loss;
                hinge += violation;
            }
            r.push(active);
            violated.push(active.then_some(y));
        }
        let scale = 1.0 / m.max(1) as f64;
        d.iter_mut().for_each(|x| *x *= scale);
        Ok(Separation {
            constraint: ConstraintEntry {
                r,
                violated,
                d,
                b: b * scale,
            },
            mean_hinge: hinge * scale,
        })
    }

    /// `½‖w‖² + C (1/m) Σ_i max_y [Δ(y_i, y) - w·(Ψ(y) - Ψ(y_i))]` with the
    /// inner maximum found by loss-augmented inference.
    pub fn regularized_risk(&self, w: &[f64], c: f64) -> Result<f64> {
        Ok(0.5 * dot(w, w) + c * self.separate(w)?.mean_hinge)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CuttingPlaneStats {
    /// Restricted QP solves performed.
    pub iterations: usize,
    /// Restricted objective after each solve.
    pub objectives: Vec<f64>,
    /// `b - w·d - ξ` of the freshly separated constraint after each solve.
    pub violations: Vec<f64>,
    /// Whether the last violation is within `eps_cp`.
    pub converged: bool,
    pub xi: f64,
    /// Exact regularized risk at the returned `w`.
    pub risk: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CuttingPlaneOutcome {
    pub w: Vec<f64>,
    pub lambda: LambdaMap,
    /// Final working set.
    pub constraints: Vec<ConstraintEntry>,
    pub stats: CuttingPlaneStats,
}

/// 1-slack cutting planes over fixed columns, starting from `w0`. The working
/// set starts empty.
pub fn cutting_plane_on(
    problem: &WeightProblem<'_>,
    w0: &[f64],
    c: f64,
    eps_cp: f64,
    max_cp_iters: usize,
) -> Result<CuttingPlaneOutcome> {
    let dim = problem.dim();
    if w0.len() != dim {
        return Err(Error::LengthMismatch {
            expected: dim,
            actual: w0.len(),
        });
    }
    if problem.columns.is_empty() {
        return Err(Error::EmptyTrainingSet("no training instances"));
    }
    let mut working: Vec<ConstraintEntry> = Vec::new();
    let mut stats = CuttingPlaneStats {
        iterations: 0,
        objectives: Vec::new(),
        violations: Vec::new(),
        converged: false,
        xi: 0.0,
        risk: 0.0,
    };
    let mut sep = problem.separate(w0)?;
    let mut mu: Vec<f64> = Vec::new();
    loop {
        working.push(sep.constraint);
        let sol = solve_restricted_qp_with(&working, c, dim, Some(&mu), QpOptions::default())?;
        stats.iterations += 1;
        stats.objectives.push(sol.objective);
        sep = problem.separate(&sol.w)?;
        let violation = sep.constraint.b - dot(&sol.w, &sep.constraint.d) - sol.xi;
        stats.violations.push(violation);
        stats.xi = sol.xi;
        stats.risk = 0.5 * dot(&sol.w, &sol.w) + c * sep.mean_hinge;
        log::trace!(
            "cp iter {}: objective {:.6} xi {:.6} violation {:.3e}",
            stats.iterations,
            sol.objective,
            sol.xi,
            violation
        );
        mu = sol.mu.clone();
        let done = violation <= eps_cp;
        if done || stats.iterations >= max_cp_iters {
            stats.converged = done;
            if !done {
                log::warn!(
                    "cutting plane stopped after {max_cp_iters} iterations with violation {violation:.3e}"
                );
            }
            let lambda = extract_lambda(&sol, &working);
            return Ok(CuttingPlaneOutcome {
                w: sol.w,
                lambda,
                constraints: working,
                stats,
            });
        }
    }
}

/// Optimizes the weights of `model`'s existing trees on `dataset`, starting
/// from the model's current weights.
pub fn cutting_plane(
    dataset: &[Instance],
    loss: &LossWeights,
    model: &PotentialModel,
    cfg: &TrainConfig,
) -> Result<CuttingPlaneOutcome> {
    cfg.validate()?;
    let k = model.num_classes();
    check_loss(loss, k)?;
    let truths = checked_truths(dataset, k)?;
    let columns = dataset
        .par_iter()
        .map(|inst| Columns::from_model(inst, model))
        .collect::<Result<Vec<_>>>()?;
    let problem = WeightProblem {
        columns: &columns,
        truths: &truths,
        loss,
    };
    cutting_plane_on(&problem, &model.weights(), cfg.c, cfg.eps_cp, cfg.max_cp_iters)
}

fn check_loss(loss: &LossWeights, k: usize) -> Result<()> {
    if loss.num_classes() != k {
        return Err(Error::LengthMismatch {
            expected: k,
            actual: loss.num_classes(),
        });
    }
    Ok(())
}

/// Per-round training summary.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundStats {
    /// 1-based round number.
    pub round: usize,
    pub cp_iters: usize,
    pub cp_converged: bool,
    /// Restricted objective after each cutting-plane iteration.
    pub cp_objectives: Vec<f64>,
    pub final_violation: f64,
    pub objective: f64,
    pub xi: f64,
    /// Largest dual-weighted objective among the round's new trees.
    pub max_tree_objective: f64,
    /// Exact regularized risk at the end of the round.
    pub train_risk: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: PotentialModel,
    pub rounds: Vec<RoundStats>,
}

/// Learns trees and weights with the default (silent) progress hook.
pub fn train_crftree(
    dataset: &[Instance],
    loss: &LossWeights,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train_crftree_with(dataset, loss, cfg, |_| {})
}

/// Learns trees and weights, calling `on_round` after every completed round.
pub fn train_crftree_with(
    dataset: &[Instance],
    loss: &LossWeights,
    cfg: &TrainConfig,
    mut on_round: impl FnMut(&RoundStats),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let k = loss.num_classes();
    let truths = checked_truths(dataset, k)?;
    if dataset.is_empty() {
        return Err(Error::EmptyTrainingSet("no training instances"));
    }
    let mut model = PotentialModel::empty(k);
    let mut rounds = Vec::new();
    if cfg.cg_iters == 0 {
        return Ok(TrainOutcome { model, rounds });
    }

    let mut columns: Vec<Columns> = dataset.iter().map(|inst| Columns::empty(inst, k)).collect();
    // With no trees every energy is zero, so the violated labelings are the
    // pure loss maximizers and each carries C/m.
    let mut lambda = {
        let problem = WeightProblem {
            columns: &columns,
            truths: &truths,
            loss,
        };
        let sep = problem.separate(&[])?;
        let share = cfg.c / dataset.len() as f64;
        sep.constraint
            .violated
            .into_iter()
            .enumerate()
            .filter_map(|(i, y)| y.map(|y| ((i, y), share)))
            .collect::<LambdaMap>()
    };

    for round in 1..=cfg.cg_iters {
        if lambda.is_empty() {
            log::info!("round {round}: no dual weight left, every example satisfies its margin");
            break;
        }
        let unary = generate_unary_trees(dataset, &lambda, k, cfg.tree_depth)?;
        let pairwise = generate_pairwise_tree(dataset, &lambda, k, cfg.tree_depth)?;
        let max_tree_objective = kkt_violation(dataset, &lambda, k, &unary, &pairwise)?;
        if cfg.early_stop && max_tree_objective <= KKT_TOL {
            log::info!("round {round}: no tree improves the objective, stopping");
            break;
        }

        let refs: Vec<&DecisionTree> = unary.iter().collect();
        columns
            .par_iter_mut()
            .zip(dataset.par_iter())
            .try_for_each(|(cols, inst)| cols.push_round(inst, &refs, &pairwise))?;
        model.push_round(unary, pairwise)?;

        let problem = WeightProblem {
            columns: &columns,
            truths: &truths,
            loss,
        };
        let cp = cutting_plane_on(&problem, &model.weights(), cfg.c, cfg.eps_cp, cfg.max_cp_iters)?;
        model.set_weights(&cp.w)?;
        lambda = cp.lambda;

        let stats = RoundStats {
            round,
            cp_iters: cp.stats.iterations,
            cp_converged: cp.stats.converged,
            objective: cp.stats.objectives.last().copied().unwrap_or(0.0),
            final_violation: cp.stats.violations.last().copied().unwrap_or(0.0),
            cp_objectives: cp.stats.objectives,
            xi: cp.stats.xi,
            max_tree_objective,
            train_risk: cp.stats.risk,
        };
        log::info!(
            "round {} cp_iters {} objective {:.6} xi {:.6} max_tree_objective {:.6} train_risk {:.6}",
            stats.round,
            stats.cp_iters,
            stats.objective,
            stats.xi,
            stats.max_tree_objective,
            stats.train_risk
        );
        on_round(&stats);
        rounds.push(stats);
    }
    Ok(TrainOutcome { model, rounds })
}

/// A structured SVM over fixed linear feature maps (see
/// [`Columns::linear`]), trained by the same cutting-plane solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub num_classes: usize,
    pub w: Vec<f64>,
}

pub fn train_linear_ssvm(
    dataset: &[Instance],
    loss: &LossWeights,
    cfg: &TrainConfig,
) -> Result<(LinearModel, CuttingPlaneStats)> {
    cfg.validate()?;
    let k = loss.num_classes();
    let truths = checked_truths(dataset, k)?;
    let columns = dataset
        .par_iter()
        .map(|inst| Columns::linear(inst, k))
        .collect::<Result<Vec<_>>>()?;
    let problem = WeightProblem {
        columns: &columns,
        truths: &truths,
        loss,
    };
    let dim = problem.dim();
    let cp = cutting_plane_on(&problem, &vec![0.0; dim], cfg.c, cfg.eps_cp, cfg.max_cp_iters)?;
    Ok((
        LinearModel {
            num_classes: k,
            w: cp.w,
        },
        cp.stats,
    ))
}

impl LinearModel {
    pub fn predict(&self, inst: &Instance) -> Result<Labeling> {
        let cols = Columns::linear(inst, self.num_classes)?;
        if cols.dim() != self.w.len() {
            return Err(Error::LengthMismatch {
                expected: self.w.len(),
                actual: cols.dim(),
            });
        }
        crate::inference::map_tables(&cols.energy_tables(&self.w))
    }
}
