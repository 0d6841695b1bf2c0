//! MAP and loss-augmented MAP inference by graph cuts.
//!
//! Binary problems are solved exactly with one s-t min-cut. For `K > 2`
//! labels, α-expansion repeatedly solves binary "keep or switch to α" moves
//! until a full sweep over α brings no decrease.

pub mod maxflow;

use crate::error::{Error, Result};
use crate::graph::{Instance, Labeling, LossWeights};
use crate::potentials::{Columns, EnergyTables, PotentialModel};

pub use maxflow::{max_flow_min_cut, FlowNetwork, MinCut, Side};

/// Pairwise binary energy `θ(x_p, x_q)` indexed as `[θ00, θ01, θ10, θ11]`.
type PairTable = [f64; 4];

/// Builds and solves a submodular binary energy. Label `0` is the source
/// side, so ties resolve to `0`.
struct BinaryProblem {
    theta0: Vec<f64>,
    theta1: Vec<f64>,
    pairs: Vec<(usize, usize, f64)>,
}

impl BinaryProblem {
    fn new(n: usize) -> Self {
        BinaryProblem {
            theta0: vec![0.0; n],
            theta1: vec![0.0; n],
            pairs: Vec::new(),
        }
    }

    fn add_unary(&mut self, p: usize, e0: f64, e1: f64) {
        self.theta0[p] += e0;
        self.theta1[p] += e1;
    }

    /// Reparameterizes `θ` as `A + (C-A)x_p + (D-C)x_q + (B+C-A-D)(1-x_p)x_q`.
    fn add_pair(&mut self, p: usize, q: usize, [a, b, c, d]: PairTable) {
        self.theta1[p] += c - a;
        self.theta1[q] += d - c;
        let coupling = b + c - a - d;
        debug_assert!(
            coupling >= -1e-9 * (1.0 + a.abs() + b.abs() + c.abs() + d.abs()),
            "non-submodular pair term {coupling}"
        );
        if coupling > 0.0 {
            self.pairs.push((p, q, coupling));
        }
    }

    fn solve(&self) -> Vec<bool> {
        let n = self.theta0.len();
        let mut net = FlowNetwork::new(n);
        for p in 0..n {
            // Only the difference matters; shift so the smaller cost is 0.
            let m = self.theta0[p].min(self.theta1[p]);
            net.add_terminal(p, self.theta1[p] - m, self.theta0[p] - m);
        }
        for &(p, q, cap) in &self.pairs {
            net.add_edge(p, q, cap, 0.0);
        }
        max_flow_min_cut(&net)
            .sides
            .into_iter()
            .map(|s| s == Side::Sink)
            .collect()
    }
}

/// Exact minimizer of a two-class energy. Class `0` wins ties.
pub fn solve_binary(tables: &EnergyTables) -> Result<Labeling> {
    if tables.num_classes != 2 {
        return Err(Error::UnsupportedClassCount(tables.num_classes));
    }
    let n = tables.num_nodes();
    let mut problem = BinaryProblem::new(n);
    for p in 0..n {
        problem.add_unary(p, tables.unary(p, 0), tables.unary(p, 1));
    }
    for &(p, q, w) in &tables.edges {
        problem.add_pair(p, q, [0.0, w, w, 0.0]);
    }
    Ok(Labeling(
        problem.solve().into_iter().map(usize::from).collect(),
    ))
}

/// Per-node argmin of the unary costs, lowest class on ties.
pub fn unary_argmin(tables: &EnergyTables) -> Labeling {
    let k = tables.num_classes;
    Labeling(
        (0..tables.num_nodes())
            .map(|p| {
                (0..k)
                    .min_by(|&a, &b| tables.unary(p, a).total_cmp(&tables.unary(p, b)))
                    .unwrap_or(0)
            })
            .collect(),
    )
}

/// Trace of an α-expansion run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExpansionStats {
    pub sweeps: usize,
    /// Energy of the initial labeling followed by the energy after each
    /// accepted move.
    pub energies: Vec<f64>,
}

/// Labeling reachable from `current` by the optimal α-expansion move.
pub fn expansion_move(tables: &EnergyTables, current: &Labeling, alpha: usize) -> Labeling {
    let n = tables.num_nodes();
    let mut problem = BinaryProblem::new(n);
    for p in 0..n {
        problem.add_unary(p, tables.unary(p, current[p]), tables.unary(p, alpha));
    }
    for &(p, q, w) in &tables.edges {
        let potts = |a: usize, b: usize| if a != b { w } else { 0.0 };
        let (lp, lq) = (current[p], current[q]);
        problem.add_pair(
            p,
            q,
            [potts(lp, lq), potts(lp, alpha), potts(alpha, lq), 0.0],
        );
    }
    let switch = problem.solve();
    Labeling(
        (0..n)
            .map(|p| if switch[p] { alpha } else { current[p] })
            .collect(),
    )
}

/// α-expansion from `init`, cycling α over all classes until a full sweep
/// yields no strict energy decrease.
pub fn alpha_expansion_tables(
    tables: &EnergyTables,
    init: Labeling,
) -> Result<(Labeling, ExpansionStats)> {
    let k = tables.num_classes;
    let n = tables.num_nodes();
    init.validate(n, k)?;
    let mut current = init;
    let mut energy = tables.energy(current.as_slice());
    let mut stats = ExpansionStats {
        sweeps: 0,
        energies: vec![energy],
    };
    let sweep_cap = 10 * k * n.max(1) + 10;
    loop {
        stats.sweeps += 1;
        let mut improved = false;
        for alpha in 0..k {
            let candidate = expansion_move(tables, &current, alpha);
            let e = tables.energy(candidate.as_slice());
            if e < energy - 1e-12 * (1.0 + energy.abs()) {
                current = candidate;
                energy = e;
                stats.energies.push(e);
                improved = true;
            }
        }
        if !improved {
            break;
        }
        if stats.sweeps >= sweep_cap {
            log::warn!("alpha-expansion stopped after {sweep_cap} sweeps");
            break;
        }
    }
    Ok((current, stats))
}

/// MAP labeling for any `K >= 2`: exact for two classes, α-expansion from the
/// unary argmin otherwise.
pub fn map_tables(tables: &EnergyTables) -> Result<Labeling> {
    match tables.num_classes {
        0 | 1 => Err(Error::UnsupportedClassCount(tables.num_classes)),
        2 => solve_binary(tables),
        _ => Ok(alpha_expansion_tables(tables, unary_argmin(tables))?.0),
    }
}

/// Absorbs `-Δ(truth, ·)` into the unary costs: every class other than the
/// true one at node `p` gets `-c[truth_p]`.
pub fn augment_with_loss(
    tables: &EnergyTables,
    truth: &Labeling,
    lw: &LossWeights,
) -> Result<EnergyTables> {
    let k = tables.num_classes;
    truth.validate(tables.num_nodes(), k)?;
    if lw.num_classes() != k {
        return Err(Error::LengthMismatch {
            expected: k,
            actual: lw.num_classes(),
        });
    }
    let mut out = tables.clone();
    for (p, &t) in truth.as_slice().iter().enumerate() {
        let cost = lw.cost(t);
        for c in (0..k).filter(|&c| c != t) {
            out.unary[p * k + c] -= cost;
        }
    }
    Ok(out)
}

/// `argmin_y E(y) - Δ(truth, y)` over precomputed energy tables.
pub fn loss_augmented_tables(
    tables: &EnergyTables,
    truth: &Labeling,
    lw: &LossWeights,
) -> Result<Labeling> {
    map_tables(&augment_with_loss(tables, truth, lw)?)
}

fn model_tables(inst: &Instance, model: &PotentialModel) -> Result<EnergyTables> {
    Ok(Columns::from_model(inst, model)?.energy_tables(&model.weights()))
}

/// Exact MAP labeling of a two-class model.
pub fn min_energy_binary(inst: &Instance, model: &PotentialModel) -> Result<Labeling> {
    if model.num_classes() != 2 {
        return Err(Error::UnsupportedClassCount(model.num_classes()));
    }
    solve_binary(&model_tables(inst, model)?)
}

pub fn alpha_expansion(
    inst: &Instance,
    model: &PotentialModel,
    init: Labeling,
) -> Result<(Labeling, ExpansionStats)> {
    alpha_expansion_tables(&model_tables(inst, model)?, init)
}

/// MAP labeling of `inst` under `model`.
pub fn predict(inst: &Instance, model: &PotentialModel) -> Result<Labeling> {
    map_tables(&model_tables(inst, model)?)
}

/// Most violated labeling for `inst`'s ground truth.
pub fn loss_augmented_inference(
    inst: &Instance,
    model: &PotentialModel,
    lw: &LossWeights,
) -> Result<Labeling> {
    let truth = inst.truth().ok_or(Error::MissingTruth)?;
    loss_augmented_tables(&model_tables(inst, model)?, truth, lw)
}
