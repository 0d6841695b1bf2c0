//! s-t max-flow / min-cut on small dense-ish graphs (Dinic's algorithm).

use std::collections::VecDeque;

/// Terminal capacities per node plus directed capacities between node
/// pairs. Cutting `source → p` costs `source_cap[p]` and happens when `p`
/// ends on the sink side; `p → sink` is cut when `p` stays on the source
/// side.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowNetwork {
    source_cap: Vec<f64>,
    sink_cap: Vec<f64>,
    /// `(p, q, cap p→q, cap q→p)`
    edges: Vec<(usize, usize, f64, f64)>,
}

/// Which terminal a node is separated with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Source,
    Sink,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinCut {
    pub flow: f64,
    pub sides: Vec<Side>,
}

impl FlowNetwork {
    pub fn new(num_nodes: usize) -> Self {
        FlowNetwork {
            source_cap: vec![0.0; num_nodes],
            sink_cap: vec![0.0; num_nodes],
            edges: Vec::new(),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.source_cap.len()
    }

    pub fn add_terminal(&mut self, p: usize, source: f64, sink: f64) {
        debug_assert!(source >= 0.0 && sink >= 0.0);
        self.source_cap[p] += source;
        self.sink_cap[p] += sink;
    }

    pub fn add_edge(&mut self, p: usize, q: usize, cap_pq: f64, cap_qp: f64) {
        debug_assert!(cap_pq >= 0.0 && cap_qp >= 0.0 && p != q);
        self.edges.push((p, q, cap_pq, cap_qp));
    }

    pub fn source_cap(&self, p: usize) -> f64 {
        self.source_cap[p]
    }

    pub fn sink_cap(&self, p: usize) -> f64 {
        self.sink_cap[p]
    }

    pub fn edges(&self) -> &[(usize, usize, f64, f64)] {
        &self.edges
    }

    /// Capacity of the cut induced by `sides`.
    pub fn cut_capacity(&self, sides: &[Side]) -> f64 {
        let mut total = 0.0;
        for (p, side) in sides.iter().enumerate() {
            total += match side {
                Side::Sink => self.source_cap[p],
                Side::Source => self.sink_cap[p],
            };
        }
        for &(p, q, pq, qp) in &self.edges {
            match (sides[p], sides[q]) {
                (Side::Source, Side::Sink) => total += pq,
                (Side::Sink, Side::Source) => total += qp,
                _ => {}
            }
        }
        total
    }
}

#[derive(Debug, Clone, Copy)]
struct Arc {
    to: usize,
    rev: usize,
    cap: f64,
}

/// Computes a maximum flow and the minimum cut whose sink side is smallest:
/// a node is on the sink side iff it can still reach the sink in the
/// residual graph. Nodes with no preference therefore stay with the source.
pub fn max_flow_min_cut(net: &FlowNetwork) -> MinCut {
    let n = net.num_nodes();
    let (s, t) = (n, n + 1);
    let mut adj: Vec<Vec<Arc>> = vec![Vec::new(); n + 2];
    let mut total_cap = 0.0;
    let add = |adj: &mut Vec<Vec<Arc>>, u: usize, v: usize, cuv: f64, cvu: f64| {
        let (iu, iv) = (adj[u].len(), adj[v].len());
        adj[u].push(Arc {
            to: v,
            rev: iv,
            cap: cuv,
        });
        adj[v].push(Arc {
            to: u,
            rev: iu,
            cap: cvu,
        });
    };

    // Flow that goes straight source → p → sink needs no search.
    let mut flow = 0.0;
    for p in 0..n {
        let direct = net.source_cap[p].min(net.sink_cap[p]);
        flow += direct;
        let (sc, tc) = (net.source_cap[p] - direct, net.sink_cap[p] - direct);
        total_cap += sc + tc;
        if sc > 0.0 {
            add(&mut adj, s, p, sc, 0.0);
        }
        if tc > 0.0 {
            add(&mut adj, p, t, tc, 0.0);
        }
    }
    for &(p, q, pq, qp) in &net.edges {
        if pq > 0.0 || qp > 0.0 {
            total_cap += pq + qp;
            add(&mut adj, p, q, pq, qp);
        }
    }
    let eps = 1e-14 * (1.0 + total_cap);

    let mut level = vec![usize::MAX; n + 2];
    let mut cursor = vec![0usize; n + 2];
    let mut queue = VecDeque::new();
    let mut path: Vec<(usize, usize)> = Vec::new();
    loop {
        level.fill(usize::MAX);
        level[s] = 0;
        queue.clear();
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            for a in &adj[u] {
                if a.cap > eps && level[a.to] == usize::MAX {
                    level[a.to] = level[u] + 1;
                    queue.push_back(a.to);
                }
            }
        }
        if level[t] == usize::MAX {
            break;
        }

        cursor.fill(0);
        'blocking: loop {
            path.clear();
            let mut u = s;
            while u != t {
                while cursor[u] < adj[u].len() {
                    let a = adj[u][cursor[u]];
                    if a.cap > eps && level[a.to] == level[u] + 1 {
                        break;
                    }
                    cursor[u] += 1;
                }
                if cursor[u] == adj[u].len() {
                    if u == s {
                        break 'blocking;
                    }
                    level[u] = usize::MAX;
                    let (prev, _) = path.pop().expect("non-source node has a parent");
                    u = prev;
                    cursor[u] += 1;
                    continue;
                }
                path.push((u, cursor[u]));
                u = adj[u][cursor[u]].to;
            }
            let bottleneck = path
                .iter()
                .map(|&(v, i)| adj[v][i].cap)
                .fold(f64::INFINITY, f64::min);
            for &(v, i) in &path {
                let Arc { to, rev, .. } = adj[v][i];
                adj[v][i].cap -= bottleneck;
                adj[to][rev].cap += bottleneck;
            }
            flow += bottleneck;
        }
    }

    // Reverse search from the sink over arcs u → v with residual capacity.
    let mut reaches_sink = vec![false; n + 2];
    reaches_sink[t] = true;
    queue.clear();
    queue.push_back(t);
    while let Some(v) = queue.pop_front() {
        for a in &adj[v] {
            let u = a.to;
            if !reaches_sink[u] && adj[u][a.rev].cap > eps {
                reaches_sink[u] = true;
                queue.push_back(u);
            }
        }
    }
    let sides = (0..n)
        .map(|p| if reaches_sink[p] { Side::Sink } else { Side::Source })
        .collect();
    MinCut { flow, sides }
}
