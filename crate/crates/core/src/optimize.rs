//! L-BFGS height optimization and post-processing of the optimized heights.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::loss::LossProblem;
use crate::mesh::HalfEdgeMesh;
use crate::netgraph::DelayGraph;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizeConfig {
    pub max_iterations: usize,
    /// Stop when the gradient's infinity norm falls to this value.
    pub gradient_tolerance: f64,
    /// Stop when an accepted step reduces the loss by less than this
    /// fraction of its magnitude.
    pub relative_loss_tolerance: f64,
    pub lbfgs_memory: usize,
    pub record_history: bool,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        OptimizeConfig {
            max_iterations: 2000,
            gradient_tolerance: 1e-6,
            relative_loss_tolerance: 1e-9,
            lbfgs_memory: 10,
            record_history: true,
        }
    }
}

impl OptimizeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 || self.lbfgs_memory == 0 {
            return Err(Error::InvalidParameter("iteration count and memory must be at least 1".into()));
        }
        if !(self.gradient_tolerance > 0.0 && self.relative_loss_tolerance > 0.0) {
            return Err(Error::InvalidParameter("optimizer tolerances must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "detail")]
pub enum Termination {
    GradientTolerance,
    RelativeLossTolerance,
    MaxIterations,
    /// No step satisfying the Wolfe conditions was found; the result holds
    /// the last accepted iterate.
    LineSearchFailure(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeResult {
    pub heights: Vec<f64>,
    pub loss: f64,
    /// Loss at the start point and after every accepted iterate.
    pub loss_history: Vec<f64>,
    pub termination: Termination,
    pub iterations: usize,
    pub wall_time_s: f64,
}

type Objective<'f> = dyn FnMut(&[f64]) -> Result<(f64, Vec<f64>)> + 'f;

/// Minimizes a smooth objective with L-BFGS and a strong-Wolfe line search.
pub fn minimize(
    objective: &mut Objective<'_>,
    x0: &[f64],
    config: &OptimizeConfig,
) -> Result<OptimizeResult> {
    config.validate()?;
    let start = Instant::now();
    let mut x = x0.to_vec();
    let (mut f, mut g) = objective(&x)?;
    if !f.is_finite() {
        return Err(Error::NonFiniteLoss);
    }
    let mut history = vec![f];
    let mut memory: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::with_capacity(config.lbfgs_memory);
    let mut iterations = 0;

    let termination = loop {
        if inf_norm(&g) <= config.gradient_tolerance {
            break Termination::GradientTolerance;
        }
        if iterations >= config.max_iterations {
            break Termination::MaxIterations;
        }
        let mut d = two_loop(&g, &memory);
        if dot(&d, &g) >= 0.0 {
            memory.clear();
            d = g.iter().map(|v| -v).collect();
        }
        let alpha0 = if memory.is_empty() { (1.0 / inf_norm(&g)).min(1.0) } else { 1.0 };
        let step = match line_search(objective, &x, f, &g, &d, alpha0) {
            Ok(step) => step,
            Err(reason) if !memory.is_empty() => {
                // retry once along steepest descent with a fresh model
                memory.clear();
                let sd: Vec<f64> = g.iter().map(|v| -v).collect();
                match line_search(objective, &x, f, &g, &sd, (1.0 / inf_norm(&g)).min(1.0)) {
                    Ok(step) => step,
                    Err(_) => break Termination::LineSearchFailure(reason),
                }
            }
            Err(reason) => break Termination::LineSearchFailure(reason),
        };
        iterations += 1;
        let (x_new, f_new, g_new) = step;
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if memory.len() == config.lbfgs_memory {
                memory.remove(0);
            }
            memory.push((s, y, 1.0 / sy));
        }
        let decrease = f - f_new;
        x = x_new;
        f = f_new;
        g = g_new;
        if config.record_history {
            history.push(f);
        }
        if decrease <= config.relative_loss_tolerance * f.abs().max(1e-300) {
            break Termination::RelativeLossTolerance;
        }
    };
    if !config.record_history {
        history.push(f);
    }
    Ok(OptimizeResult {
        heights: x,
        loss: f,
        loss_history: history,
        termination,
        iterations,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Optimizes mesh heights for a prepared loss problem.
pub fn optimize_heights(problem: &LossProblem, initial: &[f64], config: &OptimizeConfig) -> Result<OptimizeResult> {
    let mut objective = |z: &[f64]| problem.evaluate(z).map(|r| (r.total, r.gradient));
    minimize(&mut objective, initial, config)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// `-H g` from the stored curvature pairs.
fn two_loop(g: &[f64], memory: &[(Vec<f64>, Vec<f64>, f64)]) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = vec![0.0; memory.len()];
    for (k, (s, y, rho)) in memory.iter().enumerate().rev() {
        let a = rho * dot(s, &q);
        alphas[k] = a;
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
    }
    if let Some((s, y, _)) = memory.last() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for (k, (s, y, rho)) in memory.iter().enumerate() {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (alphas[k] - b) * si;
        }
    }
    q.iter().map(|v| -v).collect()
}

const C1: f64 = 1e-4;
const C2: f64 = 0.9;
const MAX_LINE_SEARCH_EVALS: usize = 40;

type Step = (Vec<f64>, f64, Vec<f64>);

struct Probe {
    alpha: f64,
    f: f64,
    slope: f64,
    x: Vec<f64>,
    g: Vec<f64>,
}

/// Strong-Wolfe line search with bracketing and cubic-interpolation zoom.
fn line_search(
    objective: &mut Objective<'_>,
    x: &[f64],
    f0: f64,
    g0: &[f64],
    d: &[f64],
    alpha0: f64,
) -> std::result::Result<Step, String> {
    let slope0 = dot(g0, d);
    let mut evals = 0;
    let mut probe = |alpha: f64, evals: &mut usize| -> Probe {
        *evals += 1;
        let xa: Vec<f64> = x.iter().zip(d).map(|(a, b)| a + alpha * b).collect();
        match objective(&xa) {
            Ok((f, g)) if f.is_finite() => Probe { alpha, f, slope: dot(&g, d), x: xa, g },
            // treat failures as an infinitely bad point so the step shrinks
            _ => Probe { alpha, f: f64::INFINITY, slope: f64::NAN, x: xa, g: Vec::new() },
        }
    };

    let mut prev = Probe { alpha: 0.0, f: f0, slope: slope0, x: x.to_vec(), g: g0.to_vec() };
    let mut alpha = alpha0;
    let mut first = true;
    loop {
        if evals >= MAX_LINE_SEARCH_EVALS {
            return Err(format!("no acceptable step after {evals} evaluations"));
        }
        let cur = probe(alpha, &mut evals);
        if !cur.f.is_finite() || cur.f > f0 + C1 * alpha * slope0 || (!first && cur.f >= prev.f) {
            return zoom(&mut probe, &mut evals, f0, slope0, prev, cur);
        }
        if cur.slope.abs() <= -C2 * slope0 {
            return Ok((cur.x, cur.f, cur.g));
        }
        if cur.slope >= 0.0 {
            return zoom(&mut probe, &mut evals, f0, slope0, cur, prev);
        }
        first = false;
        alpha *= 2.0;
        prev = cur;
    }
}

fn zoom(
    probe: &mut impl FnMut(f64, &mut usize) -> Probe,
    evals: &mut usize,
    f0: f64,
    slope0: f64,
    mut lo: Probe,
    mut hi: Probe,
) -> std::result::Result<Step, String> {
    loop {
        if *evals >= MAX_LINE_SEARCH_EVALS {
            break;
        }
        let width = (hi.alpha - lo.alpha).abs();
        if width <= 1e-16 * lo.alpha.abs().max(1e-16) {
            break;
        }
        let alpha = interpolate(&lo, &hi);
        let cur = probe(alpha, evals);
        if !cur.f.is_finite() || cur.f > f0 + C1 * alpha * slope0 || cur.f >= lo.f {
            hi = cur;
        } else {
            if cur.slope.abs() <= -C2 * slope0 {
                return Ok((cur.x, cur.f, cur.g));
            }
            if cur.slope * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = cur;
        }
    }
    // accept the best sufficient-decrease point when the curvature
    // condition cannot be met to working precision
    if lo.alpha > 0.0 && lo.f < f0 {
        return Ok((lo.x, lo.f, lo.g));
    }
    Err(format!("line search interval collapsed after {evals} evaluations"))
}

/// Minimizer of the cubic through both endpoints, kept away from the ends;
/// bisection when the cubic is unusable.
fn interpolate(lo: &Probe, hi: &Probe) -> f64 {
    let (a, b) = (lo.alpha, hi.alpha);
    let mid = 0.5 * (a + b);
    if !hi.f.is_finite() || !hi.slope.is_finite() {
        return mid;
    }
    let d1 = lo.slope + hi.slope - 3.0 * (lo.f - hi.f) / (a - b);
    let disc = d1 * d1 - lo.slope * hi.slope;
    if disc < 0.0 {
        return mid;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let t = b - (b - a) * (hi.slope + d2 - d1) / (hi.slope - lo.slope + 2.0 * d2);
    let (min, max) = (a.min(b), a.max(b));
    let margin = 0.1 * (max - min);
    if t.is_finite() && t > min + margin && t < max - margin {
        t
    } else {
        mid
    }
}

/// `final - initial`, elementwise.
pub fn subtract_initial_heights(heights: &[f64], initial: &[f64]) -> Result<Vec<f64>> {
    if heights.len() != initial.len() {
        return Err(Error::DimensionMismatch { expected: heights.len(), got: initial.len() });
    }
    Ok(heights.iter().zip(initial).map(|(a, b)| a - b).collect())
}

/// Shifts heights so the minimum is zero, then scales each vertex by
/// `max(0, 1 - d / falloff_width)` where `d` is its planar distance to the
/// union of the convex hulls of the graph's connected components.
pub fn flatten_exterior(
    mesh: &HalfEdgeMesh,
    graph: &DelayGraph,
    positions: &[[f64; 2]],
    heights: &[f64],
    falloff_width: f64,
) -> Result<Vec<f64>> {
    if heights.len() != mesh.vertex_count() {
        return Err(Error::DimensionMismatch { expected: mesh.vertex_count(), got: heights.len() });
    }
    if positions.len() != graph.vertex_count() {
        return Err(Error::DimensionMismatch { expected: graph.vertex_count(), got: positions.len() });
    }
    if !(falloff_width > 0.0) {
        return Err(Error::InvalidParameter(format!("falloff width {falloff_width}")));
    }
    let hulls: Vec<Vec<[f64; 2]>> = graph
        .components()
        .iter()
        .map(|c| convex_hull(c.iter().map(|&v| positions[v]).collect()))
        .collect();
    let min = heights.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(mesh
        .xy()
        .iter()
        .zip(heights)
        .map(|(&p, &h)| {
            let d = hulls.iter().map(|hull| hull_distance(hull, p)).fold(f64::INFINITY, f64::min);
            (h - min) * (1.0 - d / falloff_width).max(0.0)
        })
        .collect())
}

/// Counterclockwise convex hull (Andrew's monotone chain); collinear points
/// are dropped. Degenerate inputs give a single point or a segment.
pub fn convex_hull(mut pts: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() <= 2 {
        return pts;
    }
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> =
            if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Distance from `p` to the hull region (zero inside).
pub fn hull_distance(hull: &[[f64; 2]], p: [f64; 2]) -> f64 {
    match hull.len() {
        0 => f64::INFINITY,
        1 => (p[0] - hull[0][0]).hypot(p[1] - hull[0][1]),
        _ => {
            let n = hull.len();
            let inside = n >= 3
                && (0..n).all(|i| {
                    let (a, b) = (hull[i], hull[(i + 1) % n]);
                    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) >= 0.0
                });
            if inside {
                return 0.0;
            }
            let edges = if n == 2 { 1 } else { n };
            (0..edges)
                .map(|i| segment_distance(p, hull[i], hull[(i + 1) % n]))
                .fold(f64::INFINITY, f64::min)
        }
    }
}

fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 == 0.0 { 0.0 } else { (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0) };
    (p[0] - a[0] - t * ab[0]).hypot(p[1] - a[1] - t * ab[1])
}
