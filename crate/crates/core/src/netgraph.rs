//! Measurement ingestion and construction of the thresholded delay graph.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geo::{great_circle_distance, great_circle_latency, GeoPoint};
use crate::{par, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VantagePoint {
    pub id: String,
    pub name: String,
    #[serde(flatten)]
    pub location: GeoPoint,
}

/// Symmetric, partial map of minimum RTTs between vantage points.
///
/// Pairs are keyed by point index with the smaller index first.
#[derive(Debug, Clone, PartialEq)]
pub struct LatencyMatrix {
    points: Vec<VantagePoint>,
    index: HashMap<String, usize>,
    rtt: BTreeMap<(usize, usize), f64>,
}

fn key(i: usize, j: usize) -> (usize, usize) {
    if i < j {
        (i, j)
    } else {
        (j, i)
    }
}

impl LatencyMatrix {
    pub fn new(points: Vec<VantagePoint>) -> Result<Self> {
        let mut index = HashMap::with_capacity(points.len());
        for (i, p) in points.iter().enumerate() {
            if index.insert(p.id.clone(), i).is_some() {
                return Err(Error::DuplicateVantagePoint(p.id.clone()));
            }
        }
        Ok(LatencyMatrix {
            points,
            index,
            rtt: BTreeMap::new(),
        })
    }

    /// Records a measurement, keeping the minimum if the pair already exists
    /// in either direction.
    pub fn insert(&mut self, src: &str, dst: &str, rtt_ms: f64) -> Result<()> {
        let i = self.index_of(src)?;
        let j = self.index_of(dst)?;
        if !(rtt_ms > 0.0) || !rtt_ms.is_finite() {
            return Err(Error::NonPositiveRtt {
                src: src.into(),
                dst: dst.into(),
                rtt: rtt_ms,
            });
        }
        if i == j {
            return Ok(());
        }
        let slot = self.rtt.entry(key(i, j)).or_insert(rtt_ms);
        *slot = slot.min(rtt_ms);
        Ok(())
    }

    pub fn index_of(&self, id: &str) -> Result<usize> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownVantagePoint(id.to_string()))
    }

    pub fn points(&self) -> &[VantagePoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn rtt(&self, i: usize, j: usize) -> Option<f64> {
        self.rtt.get(&key(i, j)).copied()
    }

    /// Measured pairs `(i, j, rtt)` with `i < j`, in ascending pair order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.rtt.iter().map(|(&(i, j), &r)| (i, j, r))
    }

    pub fn pair_count(&self) -> usize {
        self.rtt.len()
    }

    pub fn remove_pair(&mut self, i: usize, j: usize) -> Option<f64> {
        self.rtt.remove(&key(i, j))
    }

    /// Returns a copy with every RTT transformed by `f`.
    pub fn map_rtts(&self, f: impl Fn(f64) -> f64) -> Self {
        let mut out = self.clone();
        for v in out.rtt.values_mut() {
            *v = f(*v);
        }
        out
    }

    /// Residual latency for a measured pair.
    pub fn residual(&self, i: usize, j: usize, mode: ResidualMode) -> Result<Residual> {
        let rtt = self.rtt(i, j).ok_or_else(|| {
            Error::MissingPair(self.points[i].id.clone(), self.points[j].id.clone())
        })?;
        let gcl = great_circle_latency(self.points[i].location, self.points[j].location);
        Ok(Residual::from_raw(mode.raw(rtt, gcl)))
    }

    pub fn to_document(&self) -> MeasurementDocument {
        MeasurementDocument {
            vantage_points: self.points.clone(),
            measurements: self
                .pairs()
                .map(|(i, j, r)| Measurement {
                    src: self.points[i].id.clone(),
                    dst: self.points[j].id.clone(),
                    rtt_ms: r,
                })
                .collect(),
        }
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, &self.to_document())
            .map_err(|e| Error::Parse(e.to_string()))
    }
}

/// The on-disk measurement JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementDocument {
    pub vantage_points: Vec<VantagePoint>,
    pub measurements: Vec<Measurement>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub src: String,
    pub dst: String,
    pub rtt_ms: f64,
}

impl MeasurementDocument {
    pub fn into_matrix(self) -> Result<LatencyMatrix> {
        let mut points = Vec::with_capacity(self.vantage_points.len());
        for p in self.vantage_points {
            let location = GeoPoint::new(p.location.lat, p.location.lon)?;
            points.push(VantagePoint { location, ..p });
        }
        let mut m = LatencyMatrix::new(points)?;
        for meas in self.measurements {
            m.insert(&meas.src, &meas.dst, meas.rtt_ms)?;
        }
        Ok(m)
    }
}

pub fn load_json<R: Read>(reader: R) -> Result<LatencyMatrix> {
    let doc: MeasurementDocument = serde_json::from_reader(reader).map_err(|e| {
        Error::Parse(format!("line {}, column {}: {e}", e.line(), e.column()))
    })?;
    doc.into_matrix()
}

/// Loads the CSV pair: `id,name,lat,lon` vantage points and `src,dst,rtt_ms`
/// measurements.
pub fn load_csv<P: Read, M: Read>(points: P, measurements: M) -> Result<LatencyMatrix> {
    fn csv_err(what: &str, e: csv::Error) -> Error {
        match e.position() {
            Some(pos) => Error::Parse(format!("{what}: line {}: {e}", pos.line())),
            None => Error::Parse(format!("{what}: {e}")),
        }
    }
    #[derive(Deserialize)]
    struct Row {
        id: String,
        name: String,
        lat: f64,
        lon: f64,
    }
    let mut vps = Vec::new();
    for row in csv::Reader::from_reader(points).deserialize::<Row>() {
        let row = row.map_err(|e| csv_err("vantage points", e))?;
        vps.push(VantagePoint {
            id: row.id,
            name: row.name,
            location: GeoPoint::new(row.lat, row.lon)?,
        });
    }
    let mut m = LatencyMatrix::new(vps)?;
    for row in csv::Reader::from_reader(measurements).deserialize::<Measurement>() {
        let row = row.map_err(|e| csv_err("measurements", e))?;
        m.insert(&row.src, &row.dst, row.rtt_ms)?;
    }
    Ok(m)
}

/// Loads a measurement file by extension. A `.csv` file is read as the
/// measurement table and its vantage points come from `vantage_points.csv`
/// in the same directory.
pub fn load_path(path: &Path) -> Result<LatencyMatrix> {
    let is_csv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        let vp = path.with_file_name("vantage_points.csv");
        load_csv(std::fs::File::open(vp)?, std::fs::File::open(path)?)
    } else {
        load_json(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// How measured round-trip time is compared to one-way great-circle latency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum ResidualMode {
    /// `RTT - 2 * GCL`.
    #[default]
    #[serde(rename = "rtt-minus-2gcl")]
    RttMinusTwoGcl,
    /// `RTT / 2 - GCL`.
    #[serde(rename = "half-rtt-minus-gcl")]
    HalfRttMinusGcl,
}

impl ResidualMode {
    fn raw(self, rtt: f64, gcl: f64) -> f64 {
        match self {
            ResidualMode::RttMinusTwoGcl => rtt - 2.0 * gcl,
            ResidualMode::HalfRttMinusGcl => rtt / 2.0 - gcl,
        }
    }
}

impl std::str::FromStr for ResidualMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rtt-minus-2gcl" => Ok(ResidualMode::RttMinusTwoGcl),
            "half-rtt-minus-gcl" => Ok(ResidualMode::HalfRttMinusGcl),
            other => Err(Error::InvalidParameter(format!("unknown residual mode `{other}`"))),
        }
    }
}

/// A residual, clamped at zero. `clamped` marks values that came out
/// negative, i.e. faster than light in fiber, which indicates geolocation
/// or measurement error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residual {
    pub ms: f64,
    pub clamped: bool,
}

impl Residual {
    fn from_raw(raw: f64) -> Self {
        if raw < 0.0 {
            Residual { ms: 0.0, clamped: true }
        } else {
            Residual { ms: raw, clamped: false }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub u: usize,
    pub v: usize,
    pub residual_ms: f64,
    pub ricci: Option<f64>,
}

/// Thresholded, unweighted connectivity graph. Edges are stored with
/// `u < v` in ascending order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayGraph {
    pub vertices: Vec<VantagePoint>,
    pub edges: Vec<GraphEdge>,
    pub epsilon_ms: f64,
    pub residual_mode: ResidualMode,
    /// Number of measured pairs whose residual was clamped at zero.
    pub clamped_residuals: usize,
}

impl DelayGraph {
    /// Builds a graph directly from an edge list (no measurements needed).
    pub fn from_edges(vertices: Vec<VantagePoint>, edges: &[(usize, usize)]) -> Self {
        let mut list: Vec<GraphEdge> = edges
            .iter()
            .filter(|(a, b)| a != b)
            .map(|&(a, b)| {
                let (u, v) = key(a, b);
                GraphEdge { u, v, residual_ms: 0.0, ricci: None }
            })
            .collect();
        list.sort_by_key(|e| (e.u, e.v));
        list.dedup_by_key(|e| (e.u, e.v));
        DelayGraph {
            vertices,
            edges: list,
            epsilon_ms: f64::INFINITY,
            residual_mode: ResidualMode::default(),
            clamped_residuals: 0,
        }
    }

    /// Graph on `n` placeholder vertices `v0..v{n-1}` spread along the
    /// equator, for structural computations that ignore geography.
    pub fn anonymous(n: usize, edges: &[(usize, usize)]) -> Self {
        let vertices = (0..n)
            .map(|i| VantagePoint {
                id: format!("v{i}"),
                name: format!("v{i}"),
                location: GeoPoint::new(0.0, i as f64 * 0.01).expect("valid placeholder"),
            })
            .collect();
        Self::from_edges(vertices, edges)
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    /// Sorted neighbor lists.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for e in &self.edges {
            adj[e.u].push(e.v);
            adj[e.v].push(e.u);
        }
        for a in &mut adj {
            a.sort_unstable();
        }
        adj
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        let (u, v) = key(a, b);
        self.edges
            .binary_search_by_key(&(u, v), |e| (e.u, e.v))
            .is_ok()
    }

    /// Connected components as sorted vertex lists, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let adj = self.adjacency();
        let mut seen = vec![false; adj.len()];
        let mut out = Vec::new();
        for s in 0..adj.len() {
            if seen[s] {
                continue;
            }
            seen[s] = true;
            let mut comp = vec![s];
            let mut stack = vec![s];
            while let Some(x) = stack.pop() {
                for &y in &adj[x] {
                    if !seen[y] {
                        seen[y] = true;
                        comp.push(y);
                        stack.push(y);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }
}

/// Keeps a measured pair as an edge iff its residual is at most `epsilon_ms`.
pub fn threshold_graph(matrix: &LatencyMatrix, epsilon_ms: f64, mode: ResidualMode) -> Result<DelayGraph> {
    if epsilon_ms.is_nan() || epsilon_ms < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be non-negative, got {epsilon_ms}"
        )));
    }
    let pairs: Vec<(usize, usize)> = matrix.pairs().map(|(i, j, _)| (i, j)).collect();
    let residuals = par::map_slice(&pairs, |&(i, j)| matrix.residual(i, j, mode));
    let mut edges = Vec::new();
    let mut clamped = 0;
    for (&(u, v), r) in pairs.iter().zip(residuals) {
        let r = r?;
        if r.clamped {
            clamped += 1;
        }
        if r.ms <= epsilon_ms {
            edges.push(GraphEdge { u, v, residual_ms: r.ms, ricci: None });
        }
    }
    if clamped > 0 {
        log::warn!("{clamped} residual(s) were negative and clamped to 0");
    }
    Ok(DelayGraph {
        vertices: matrix.points().to_vec(),
        edges,
        epsilon_ms,
        residual_mode: mode,
        clamped_residuals: clamped,
    })
}

/// Smallest value of the ascending `sweep` at which a pair with this
/// residual becomes an edge.
pub fn epsilon_first_appearance(residual_ms: f64, sweep: &[f64]) -> Option<f64> {
    sweep.iter().copied().find(|&e| residual_ms <= e)
}

/// Single-linkage clusters on great-circle distance: points closer than
/// `cutoff_km` end up in the same cluster (transitively). Clusters are
/// sorted member lists, ordered by their smallest member index.
pub fn single_linkage_clusters(points: &[VantagePoint], cutoff_km: f64) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for i in 0..n {
        for j in i + 1..n {
            if great_circle_distance(points[i].location, points[j].location) < cutoff_km {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    let mut out: Vec<Vec<usize>> = groups.into_values().collect();
    out.sort_by_key(|c| c[0]);
    out
}

/// Cluster member minimizing summed distance to the rest; ties go to the
/// lexicographically smallest id.
fn medoid(points: &[VantagePoint], members: &[usize]) -> usize {
    let cost = |i: usize| -> f64 {
        members
            .iter()
            .map(|&j| great_circle_distance(points[i].location, points[j].location))
            .sum()
    };
    let mut best = members[0];
    let mut best_cost = cost(best);
    for &m in &members[1..] {
        let c = cost(m);
        if c < best_cost || (c == best_cost && points[m].id < points[best].id) {
            best = m;
            best_cost = c;
        }
    }
    best
}

/// Collapses nearby vantage points into one representative per cluster.
/// The latency between two clusters is the minimum over their member pairs.
pub fn cluster_vantage_points(matrix: &LatencyMatrix, cutoff_km: f64) -> Result<LatencyMatrix> {
    if cutoff_km.is_nan() || cutoff_km < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "cluster cutoff must be non-negative, got {cutoff_km}"
        )));
    }
    let points = matrix.points();
    let clusters = single_linkage_clusters(points, cutoff_km);
    let mut cluster_of = vec![0usize; points.len()];
    for (c, members) in clusters.iter().enumerate() {
        for &m in members {
            cluster_of[m] = c;
        }
    }
    let reps: Vec<VantagePoint> = clusters
        .iter()
        .map(|members| points[medoid(points, members)].clone())
        .collect();
    let ids: Vec<String> = reps.iter().map(|p| p.id.clone()).collect();
    let mut out = LatencyMatrix::new(reps)?;
    for (i, j, r) in matrix.pairs() {
        let (a, b) = (cluster_of[i], cluster_of[j]);
        if a != b {
            out.insert(&ids[a], &ids[b], r)?;
        }
    }
    Ok(out)
}

/// A triangle-inequality violation: `rtt(long) > rtt(a, via) + rtt(via, b) + slack`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tiv {
    pub long: (usize, usize),
    pub via: usize,
    pub excess_ms: f64,
}

pub fn detect_tivs(matrix: &LatencyMatrix, slack_ms: f64) -> Vec<Tiv> {
    let n = matrix.len();
    let per_i = par::map_indices(n, |i| {
        let mut found = Vec::new();
        for j in i + 1..n {
            let Some(ij) = matrix.rtt(i, j) else { continue };
            for k in j + 1..n {
                let (Some(ik), Some(jk)) = (matrix.rtt(i, k), matrix.rtt(j, k)) else {
                    continue;
                };
                for (long, a, b, pair, via) in [
                    (ik, ij, jk, (i, k), j),
                    (ij, ik, jk, (i, j), k),
                    (jk, ij, ik, (j, k), i),
                ] {
                    let excess = long - (a + b);
                    if excess > slack_ms {
                        found.push(Tiv { long: pair, via, excess_ms: excess });
                    }
                }
            }
        }
        found
    });
    per_i.into_iter().flatten().collect()
}

/// Greedily deletes the measured pair that is the long side of the most
/// violations until none remain. Ties are broken by the pair's sorted ids.
/// Returns the cleaned matrix and the removed pairs (by id).
pub fn remove_tiv_pairs(matrix: &LatencyMatrix, slack_ms: f64) -> (LatencyMatrix, Vec<(String, String)>) {
    let mut m = matrix.clone();
    let mut removed = Vec::new();
    loop {
        let tivs = detect_tivs(&m, slack_ms);
        if tivs.is_empty() {
            break;
        }
        let mut counts: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for t in &tivs {
            *counts.entry(t.long).or_default() += 1;
        }
        let id_key = |&(i, j): &(usize, usize)| {
            let (a, b) = (&m.points[i].id, &m.points[j].id);
            if a <= b {
                (a.clone(), b.clone())
            } else {
                (b.clone(), a.clone())
            }
        };
        let (&pair, _) = counts
            .iter()
            .max_by(|(pa, ca), (pb, cb)| ca.cmp(cb).then_with(|| id_key(pb).cmp(&id_key(pa))))
            .expect("non-empty");
        removed.push(id_key(&pair));
        m.remove_pair(pair.0, pair.1);
    }
    (m, removed)
}
