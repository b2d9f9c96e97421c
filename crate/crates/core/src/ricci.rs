//! Ollivier-Ricci curvature of graph edges.
//!
//! `kappa(x, y) = 1 - W1(m_x, m_y)` where `m_x` is uniform over the
//! neighbours of `x` (no self mass) and distances are hop counts. The
//! transport problem is solved exactly with successive shortest paths; for
//! uniform measures all capacities are scaled to integers so the optimum is
//! exact up to the final division.

use std::collections::VecDeque;

use crate::netgraph::DelayGraph;
use crate::{par, Error, Result};

/// Probability distribution over graph vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    support: Vec<usize>,
    mass: Vec<f64>,
}

impl Distribution {
    pub fn new(support: Vec<usize>, mass: Vec<f64>) -> Result<Self> {
        if support.is_empty() || support.len() != mass.len() {
            return Err(Error::InvalidDistribution("support and mass lengths differ or are empty".into()));
        }
        if mass.iter().any(|&m| !(m > 0.0)) {
            return Err(Error::InvalidDistribution("masses must be positive".into()));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidDistribution(format!("masses sum to {total}")));
        }
        let mut sorted = support.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidDistribution("duplicate support vertex".into()));
        }
        Ok(Distribution { support, mass })
    }

    pub fn uniform(support: Vec<usize>) -> Result<Self> {
        let m = 1.0 / support.len() as f64;
        let n = support.len();
        // the float sum of n copies of 1/n can miss 1 by a few ulps
        Self::new(support, vec![m; n])
    }

    pub fn dirac(v: usize) -> Self {
        Distribution { support: vec![v], mass: vec![1.0] }
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }
}

/// Optimal coupling: `(source, target, mass)` entries with positive mass.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub entries: Vec<(usize, usize, f64)>,
    pub cost: f64,
}

/// Hop distances from `source`; `None` for unreachable vertices.
pub fn hop_distances(adj: &[Vec<usize>], source: usize) -> Vec<Option<u32>> {
    let mut dist = vec![None; adj.len()];
    dist[source] = Some(0);
    let mut queue = VecDeque::from([source]);
    while let Some(x) = queue.pop_front() {
        let d = dist[x].expect("queued vertices have a distance");
        for &y in &adj[x] {
            if dist[y].is_none() {
                dist[y] = Some(d + 1);
                queue.push_back(y);
            }
        }
    }
    dist
}

fn cost_matrix(
    rows: &[usize],
    cols: &[usize],
    dist: impl Fn(usize) -> Vec<Option<u32>>,
) -> Result<Vec<Vec<f64>>> {
    rows.iter()
        .map(|&a| {
            let d = dist(a);
            cols.iter()
                .map(|&b| d[b].map(f64::from).ok_or(Error::Disconnected(a, b)))
                .collect()
        })
        .collect()
}

pub fn wasserstein1(graph: &DelayGraph, mx: &Distribution, my: &Distribution) -> Result<TransportPlan> {
    let adj = graph.adjacency();
    for &v in mx.support().iter().chain(my.support()) {
        if v >= adj.len() {
            return Err(Error::InvalidDistribution(format!("vertex {v} not in graph")));
        }
    }
    let cost = cost_matrix(mx.support(), my.support(), |a| hop_distances(&adj, a))?;
    let (total, flow) = transport(mx.mass(), my.mass(), &cost, 1e-15);
    Ok(plan_from_flow(mx.support(), my.support(), &flow, total, 1.0))
}

fn plan_from_flow(rows: &[usize], cols: &[usize], flow: &[Vec<f64>], cost: f64, scale: f64) -> TransportPlan {
    let mut entries = Vec::new();
    for (i, &a) in rows.iter().enumerate() {
        for (j, &b) in cols.iter().enumerate() {
            if flow[i][j] > 0.0 {
                entries.push((a, b, flow[i][j] / scale));
            }
        }
    }
    TransportPlan { entries, cost: cost / scale }
}

/// W1 between the uniform neighbour measures of `x` and `y`, with supplies
/// scaled by `d_x d_y` so that every capacity is an integer.
fn neighbour_transport(adj: &[Vec<usize>], x: usize, y: usize, dist: impl Fn(usize) -> Vec<Option<u32>>) -> Result<TransportPlan> {
    let (nx, ny) = (&adj[x], &adj[y]);
    if nx.is_empty() || ny.is_empty() {
        return Err(Error::InvalidDistribution(format!("isolated endpoint in edge ({x}, {y})")));
    }
    let cost = cost_matrix(nx, ny, dist)?;
    let supply = vec![ny.len() as f64; nx.len()];
    let demand = vec![nx.len() as f64; ny.len()];
    let (total, flow) = transport(&supply, &demand, &cost, 0.5);
    Ok(plan_from_flow(nx, ny, &flow, total, (nx.len() * ny.len()) as f64))
}

/// `1 - W1(m_x, m_y)` for the edge `(x, y)`.
pub fn edge_curvature(graph: &DelayGraph, x: usize, y: usize) -> Result<f64> {
    if !graph.has_edge(x, y) {
        return Err(Error::InvalidParameter(format!("({x}, {y}) is not an edge")));
    }
    let adj = graph.adjacency();
    Ok(1.0 - neighbour_transport(&adj, x, y, |a| hop_distances(&adj, a))?.cost)
}

/// Annotates every edge with its curvature. Edges are computed
/// independently (in parallel when enabled) from shared hop distances.
pub fn curvature_graph(graph: &DelayGraph) -> DelayGraph {
    let adj = graph.adjacency();
    let dist: Vec<Vec<Option<u32>>> = par::map_indices(adj.len(), |s| {
        if adj[s].is_empty() {
            Vec::new()
        } else {
            hop_distances(&adj, s)
        }
    });
    let kappa = par::map_slice(&graph.edges, |e| {
        // endpoints of an edge share a component and have degree >= 1
        let plan = neighbour_transport(&adj, e.u, e.v, |a| dist[a].clone()).expect("edge neighbourhoods are connected");
        1.0 - plan.cost
    });
    let mut out = graph.clone();
    for (e, k) in out.edges.iter_mut().zip(kappa) {
        e.ricci = Some(k);
    }
    out
}

/// Min-cost transportation by successive shortest paths on the residual
/// network. Returns the optimal cost and the flow matrix. `tol` is the
/// smallest capacity treated as usable; integer inputs pass `0.5`.
fn transport(supply: &[f64], demand: &[f64], cost: &[Vec<f64>], tol: f64) -> (f64, Vec<Vec<f64>>) {
    let (m, n) = (supply.len(), demand.len());
    let source = m + n;
    let sink = m + n + 1;
    let nodes = m + n + 2;
    let mut net = Network::new(nodes);
    for (i, &s) in supply.iter().enumerate() {
        net.add(source, i, s, 0.0);
    }
    let mut cell = vec![vec![0; n]; m];
    for i in 0..m {
        for j in 0..n {
            cell[i][j] = net.add(i, m + j, f64::INFINITY, cost[i][j]);
        }
    }
    for (j, &d) in demand.iter().enumerate() {
        net.add(m + j, sink, d, 0.0);
    }

    let mut remaining: f64 = supply.iter().sum();
    while remaining > tol {
        let Some(path) = net.shortest_path(source, sink, tol) else {
            break;
        };
        let push = path
            .iter()
            .map(|&a| net.cap[a])
            .fold(remaining, f64::min);
        for &a in &path {
            net.cap[a] -= push;
            net.cap[a ^ 1] += push;
        }
        remaining -= push;
    }

    let mut flow = vec![vec![0.0; n]; m];
    let mut total = 0.0;
    for i in 0..m {
        for j in 0..n {
            let f = net.cap[cell[i][j] ^ 1];
            flow[i][j] = f;
            total += f * cost[i][j];
        }
    }
    (total, flow)
}

/// Residual network with paired arcs (`a ^ 1` is the reverse of `a`).
struct Network {
    head: Vec<usize>,
    cap: Vec<f64>,
    cost: Vec<f64>,
    out: Vec<Vec<usize>>,
}

impl Network {
    fn new(nodes: usize) -> Self {
        Network { head: Vec::new(), cap: Vec::new(), cost: Vec::new(), out: vec![Vec::new(); nodes] }
    }

    fn add(&mut self, from: usize, to: usize, cap: f64, cost: f64) -> usize {
        let a = self.head.len();
        self.head.extend([to, from]);
        self.cap.extend([cap, 0.0]);
        self.cost.extend([cost, -cost]);
        self.out[from].push(a);
        self.out[to].push(a + 1);
        a
    }

    /// Bellman-Ford (queue based) over arcs with capacity above `tol`;
    /// reverse arcs carry negative costs, but the residual network of an
    /// optimal partial flow has no negative cycles.
    fn shortest_path(&self, s: usize, t: usize, tol: f64) -> Option<Vec<usize>> {
        let n = self.out.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut via = vec![usize::MAX; n];
        let mut queued = vec![false; n];
        dist[s] = 0.0;
        let mut queue = VecDeque::from([s]);
        while let Some(x) = queue.pop_front() {
            queued[x] = false;
            for &a in &self.out[x] {
                if self.cap[a] <= tol {
                    continue;
                }
                let y = self.head[a];
                let d = dist[x] + self.cost[a];
                if d < dist[y] - 1e-12 {
                    dist[y] = d;
                    via[y] = a;
                    if !queued[y] {
                        queued[y] = true;
                        queue.push_back(y);
                    }
                }
            }
        }
        if dist[t].is_infinite() {
            return None;
        }
        let mut path = Vec::new();
        let mut v = t;
        while v != s {
            let a = via[v];
            path.push(a);
            v = self.head[a ^ 1];
        }
        path.reverse();
        Some(path)
    }
}
