//! Restricted 1-slack master problem
//!
//! ```text
//! min_{w >= 0, ξ >= 0}  ½‖w‖² + Cξ   s.t.  w·d_j >= b_j - ξ   for every j
//! ```
//!
//! solved in the dual. With multipliers `μ_j >= 0`, `Σ μ_j <= C` the primal
//! is recovered as `w = max(0, Σ μ_j d_j)` and the dual objective
//! `Σ μ_j b_j - ½‖w‖²` is concave and smooth. A slack multiplier
//! `μ_0 = C - Σ μ_j` turns the feasible set into a scaled simplex, which is
//! optimized by pairwise (SMO-style) coordinate moves with exact line search.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::Labeling;
use crate::potentials::dot;

/// Relative gap accepted when the iterates stop improving.
const STALL_TOL: f64 = 1e-7;

/// One aggregated cutting-plane constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintEntry {
    /// Which examples participate.
    pub r: Vec<bool>,
    /// The violating labeling of every participating example.
    pub violated: Vec<Option<Labeling>>,
    /// `(1/m) Σ_i r_i [Ψ(y_i*) - Ψ(y_i)]`
    pub d: Vec<f64>,
    /// `(1/m) Σ_i r_i Δ(y_i, y_i*)`
    pub b: f64,
}

impl ConstraintEntry {
    pub fn num_examples(&self) -> usize {
        self.r.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub w: Vec<f64>,
    pub xi: f64,
    /// One multiplier per constraint.
    pub mu: Vec<f64>,
    pub objective: f64,
    /// Primal minus dual objective at return.
    pub duality_gap: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpOptions {
    /// Cap on sweeps; one sweep is `constraints + 1` pairwise updates.
    pub max_sweeps: usize,
    /// Relative duality-gap tolerance.
    pub tol: f64,
}

impl Default for QpOptions {
    fn default() -> Self {
        QpOptions {
            max_sweeps: 10_000,
            tol: 1e-10,
        }
    }
}

/// Optimality residuals of a solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    /// `‖proj(w - Σ μ_j d_j)‖_∞`, ignoring coordinates where `w = 0` and
    /// `Σ μ_j d_j <= 0`.
    pub stationarity: f64,
    /// `max_j |μ_j (b_j - ξ - w·d_j)|`
    pub complementarity: f64,
    /// `max_j max(0, b_j - ξ - w·d_j)`
    pub primal_violation: f64,
    pub dual_sum: f64,
}

pub fn solve_restricted_qp(constraints: &[ConstraintEntry], c: f64, dim: usize) -> Result<QpSolution> {
    solve_restricted_qp_with(constraints, c, dim, None, QpOptions::default())
}

/// Solves the restricted QP, optionally warm-starting from multipliers of a
/// prefix of `constraints`.
pub fn solve_restricted_qp_with(
    constraints: &[ConstraintEntry],
    c: f64,
    dim: usize,
    warm_mu: Option<&[f64]>,
    opts: QpOptions,
) -> Result<QpSolution> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidConfig(format!("C must be positive, got {c}")));
    }
    for (index, con) in constraints.iter().enumerate() {
        if con.d.len() != dim {
            return Err(Error::QpDimension {
                index,
                expected: dim,
                actual: con.d.len(),
            });
        }
    }
    let n = constraints.len();
    if n == 0 {
        return Ok(QpSolution {
            w: vec![0.0; dim],
            xi: 0.0,
            mu: Vec::new(),
            objective: 0.0,
            duality_gap: 0.0,
            iterations: 0,
        });
    }

    // Index 0 is the slack multiplier with d = 0, b = 0.
    let b: Vec<f64> = std::iter::once(0.0)
        .chain(constraints.iter().map(|k| k.b))
        .collect();
    let d = |j: usize| -> Option<&[f64]> { (j > 0).then(|| constraints[j - 1].d.as_slice()) };

    let mut mu = vec![0.0; n + 1];
    match warm_mu {
        Some(prev) if prev.len() <= n && prev.iter().all(|v| *v >= 0.0) => {
            let total: f64 = prev.iter().sum();
            let scale = if total > c { c / total } else { 1.0 };
            for (slot, v) in mu[1..].iter_mut().zip(prev) {
                *slot = v * scale;
            }
            mu[0] = (c - total * scale).max(0.0);
        }
        _ => mu[0] = c,
    }

    let recompute_v = |mu: &[f64]| -> Vec<f64> {
        let mut v = vec![0.0; dim];
        for (j, &m) in mu.iter().enumerate().skip(1) {
            if m != 0.0 {
                for (vi, di) in v.iter_mut().zip(d(j).unwrap()) {
                    *vi += m * di;
                }
            }
        }
        v
    };
    let mut v = recompute_v(&mu);
    let mut w = vec![0.0; dim];
    let mut g = vec![0.0; n + 1];
    let max_steps = opts.max_sweeps.saturating_mul(n + 1);
    let mut steps = 0;
    let mut gap;
    let mut best_dual = f64::NEG_INFINITY;
    let mut last_progress = 0;
    loop {
        for (wi, vi) in w.iter_mut().zip(&v) {
            *wi = vi.max(0.0);
        }
        for j in 0..=n {
            g[j] = b[j] - d(j).map_or(0.0, |dj| dot(dj, &w));
        }
        let (up, g_max) = argmax(&g, |_| true);
        let (down, g_min) = argmin(&g, |j| mu[j] > 0.0);
        gap = mu.iter().zip(&g).map(|(m, gj)| m * (g_max - gj)).sum::<f64>();
        let primal = 0.5 * dot(&w, &w) + c * g_max;
        if gap <= opts.tol * (1.0 + primal.abs()) || up == down || g_max - g_min <= 0.0 {
            break;
        }
        // Rounding can stall progress just short of a very tight target;
        // accept once the dual objective stops moving and the gap is small.
        let dual = primal - gap;
        if dual > best_dual + 1e-15 * (1.0 + dual.abs()) {
            best_dual = dual;
            last_progress = steps;
        } else if steps - last_progress > 2 * (n + 1) && gap <= STALL_TOL * (1.0 + primal.abs()) {
            log::debug!("QP stalled at relative gap {:.3e}", gap / (1.0 + primal.abs()));
            break;
        }
        if steps >= max_steps {
            return Err(Error::QpNotConverged {
                iterations: steps,
                residual: gap,
            });
        }
        steps += 1;

        // Once per sweep, jump to the optimum of the quadratic that holds
        // while the support of μ and the sign pattern of v stay fixed.
        if steps % (n + 1) == 0 {
            if let Some(dir) = newton_direction(&mu, &v, &b, &d, c) {
                let mut dv = vec![0.0; dim];
                let mut db = 0.0;
                let mut t_max = f64::INFINITY;
                for (j, &dj) in dir.iter().enumerate() {
                    if dj == 0.0 {
                        continue;
                    }
                    db += dj * b[j];
                    if let Some(row) = d(j) {
                        for (x, r) in dv.iter_mut().zip(row) {
                            *x += dj * r;
                        }
                    }
                    if dj < 0.0 {
                        t_max = t_max.min(mu[j] / -dj);
                    }
                }
                let t = line_search(db, &v, &dv, t_max);
                if t > 0.0 {
                    for (j, &dj) in dir.iter().enumerate() {
                        mu[j] += t * dj;
                        if dj < 0.0 && mu[j] <= 1e-12 * c {
                            mu[j] = 0.0;
                        }
                        mu[j] = mu[j].max(0.0);
                    }
                    v = recompute_v(&mu);
                    continue;
                }
            }
        }

        let delta: Vec<f64> = match (d(up), d(down)) {
            (Some(a), Some(z)) => a.iter().zip(z).map(|(x, y)| x - y).collect(),
            (Some(a), None) => a.to_vec(),
            (None, Some(z)) => z.iter().map(|y| -y).collect(),
            (None, None) => vec![0.0; dim],
        };
        let t = line_search(b[up] - b[down], &v, &delta, mu[down]);
        if t <= 0.0 {
            break;
        }
        mu[up] += t;
        mu[down] -= t;
        if mu[down] < 1e-15 * c {
            mu[down] = 0.0;
        }
        if steps % 64 == 0 {
            v = recompute_v(&mu);
        } else {
            for (vi, di) in v.iter_mut().zip(&delta) {
                *vi += t * di;
            }
        }
    }

    let w: Vec<f64> = recompute_v(&mu).into_iter().map(|x| x.max(0.0)).collect();
    let xi = constraints
        .iter()
        .map(|k| k.b - dot(&k.d, &w))
        .fold(0.0, f64::max);
    let objective = 0.5 * dot(&w, &w) + c * xi;
    Ok(QpSolution {
        w,
        xi,
        mu: mu[1..].to_vec(),
        objective,
        duality_gap: gap,
        iterations: steps,
    })
}

/// Direction from `mu` to the maximizer of `Σ μ_j b_j - ½‖(Σ μ_j d_j)_A‖²`
/// over `Σ μ = C`, with the support of `mu` and the set `A = {i: v_i > 0}`
/// held fixed. `None` if there is nothing to move.
fn newton_direction<'a>(
    mu: &[f64],
    v: &[f64],
    b: &[f64],
    d: &impl Fn(usize) -> Option<&'a [f64]>,
    c: f64,
) -> Option<Vec<f64>> {
    let support: Vec<usize> = (0..mu.len()).filter(|&j| mu[j] > 0.0).collect();
    if support.len() < 2 {
        return None;
    }
    let free: Vec<usize> = (0..v.len()).filter(|&i| v[i] > 0.0).collect();
    let rows: Vec<Vec<f64>> = support
        .iter()
        .map(|&j| d(j).map_or_else(|| vec![0.0; free.len()], |row| free.iter().map(|&i| row[i]).collect()))
        .collect();
    let s = support.len();
    let mut kkt = DMatrix::<f64>::zeros(s + 1, s + 1);
    let mut rhs = DVector::<f64>::zeros(s + 1);
    let mut scale: f64 = 0.0;
    for a in 0..s {
        for z in 0..s {
            kkt[(a, z)] = dot(&rows[a], &rows[z]);
        }
        scale = scale.max(kkt[(a, a)]);
        kkt[(a, s)] = 1.0;
        kkt[(s, a)] = 1.0;
        rhs[a] = b[support[a]];
    }
    rhs[s] = c;
    // A tiny ridge keeps the system solvable when rows are dependent.
    for a in 0..s {
        kkt[(a, a)] += 1e-12 * (1.0 + scale);
    }
    let sol = kkt.lu().solve(&rhs)?;
    let mut dir = vec![0.0; mu.len()];
    let mut moved = false;
    for (a, &j) in support.iter().enumerate() {
        dir[j] = sol[a] - mu[j];
        moved |= dir[j].abs() > 1e-15 * c;
    }
    (moved && dir.iter().all(|x| x.is_finite())).then_some(dir)
}

fn argmax(g: &[f64], ok: impl Fn(usize) -> bool) -> (usize, f64) {
    let mut best = (usize::MAX, f64::NEG_INFINITY);
    for (j, &v) in g.iter().enumerate() {
        if ok(j) && v > best.1 {
            best = (j, v);
        }
    }
    best
}

fn argmin(g: &[f64], ok: impl Fn(usize) -> bool) -> (usize, f64) {
    let mut best = (usize::MAX, f64::INFINITY);
    for (j, &v) in g.iter().enumerate() {
        if ok(j) && v < best.1 {
            best = (j, v);
        }
    }
    best
}

/// Maximizes `φ(t) = t·db - ½‖(v + tδ)_+‖²` over `t ∈ [0, t_max]`.
///
/// `φ'` is piecewise linear and nonincreasing; walk its breakpoints.
fn line_search(db: f64, v: &[f64], delta: &[f64], t_max: f64) -> f64 {
    let slope_at = |t: f64| -> f64 {
        db - v
            .iter()
            .zip(delta)
            .map(|(vi, di)| di * (vi + t * di).max(0.0))
            .sum::<f64>()
    };
    if slope_at(0.0) <= 0.0 {
        return 0.0;
    }
    if slope_at(t_max) >= 0.0 {
        return t_max;
    }
    let mut breaks: Vec<f64> = v
        .iter()
        .zip(delta)
        .filter(|(_, di)| **di != 0.0)
        .map(|(vi, di)| -vi / di)
        .filter(|t| *t > 0.0 && *t < t_max)
        .collect();
    breaks.sort_by(f64::total_cmp);
    breaks.push(t_max);
    let mut start = 0.0;
    for end in breaks {
        if slope_at(end) <= 0.0 {
            let mid = 0.5 * (start + end);
            let curvature: f64 = v
                .iter()
                .zip(delta)
                .filter(|(vi, di)| *vi + mid * *di > 0.0)
                .map(|(_, di)| di * di)
                .sum();
            if curvature <= 0.0 {
                return end;
            }
            return (start + slope_at(start) / curvature).clamp(start, end);
        }
        start = end;
    }
    t_max
}

pub fn kkt_residuals(sol: &QpSolution, constraints: &[ConstraintEntry]) -> KktResiduals {
    let dim = sol.w.len();
    let mut v = vec![0.0; dim];
    for (m, k) in sol.mu.iter().zip(constraints) {
        for (vi, di) in v.iter_mut().zip(&k.d) {
            *vi += m * di;
        }
    }
    let stationarity = sol
        .w
        .iter()
        .zip(&v)
        .map(|(wi, vi)| {
            let r = wi - vi;
            if *wi == 0.0 && r >= 0.0 {
                0.0
            } else {
                r.abs()
            }
        })
        .fold(0.0, f64::max);
    let mut complementarity: f64 = 0.0;
    let mut primal_violation: f64 = 0.0;
    for (m, k) in sol.mu.iter().zip(constraints) {
        let slack = k.b - sol.xi - dot(&k.d, &sol.w);
        complementarity = complementarity.max((m * slack).abs());
        primal_violation = primal_violation.max(slack);
    }
    KktResiduals {
        stationarity,
        complementarity,
        primal_violation,
        dual_sum: sol.mu.iter().sum(),
    }
}

/// Dual weights per `(example, violating labeling)`.
pub type LambdaMap = BTreeMap<(usize, Labeling), f64>;

/// Distributes each constraint's multiplier over its participating examples:
/// `λ(i, y) = Σ_{j: r_i^j = 1, y_i^j = y} μ_j / m`.
pub fn extract_lambda(sol: &QpSolution, constraints: &[ConstraintEntry]) -> LambdaMap {
    let mut lambda = LambdaMap::new();
    for (&mu, con) in sol.mu.iter().zip(constraints) {
        if mu <= 0.0 {
            continue;
        }
        let m = con.num_examples() as f64;
        for (i, (&r, y)) in con.r.iter().zip(&con.violated).enumerate() {
            if let (true, Some(y)) = (r, y) {
                *lambda.entry((i, y.clone())).or_insert(0.0) += mu / m;
            }
        }
    }
    lambda
}
