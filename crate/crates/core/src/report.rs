//! Latency-predictor and cross-snapshot stability reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::geo::{great_circle_distance, Projection};
use crate::geodesic::{fit_latency_predictor, surface_geodesic, LinearFit, DEFAULT_SUBDIVISION};
use crate::mesh::HalfEdgeMesh;
use crate::netgraph::{epsilon_first_appearance, remove_tiv_pairs, LatencyMatrix, ResidualMode};
use crate::pipeline::{run_on_matrix, PipelineConfig};
use crate::{par, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorOptions {
    pub subdivision: usize,
    pub with_intercept: bool,
    /// Drop pairs that take part in triangle-inequality violations (at this
    /// slack) before fitting.
    pub tiv_slack_ms: Option<f64>,
    /// Ascending threshold sweep used for `epsilon_first_appearance`.
    pub epsilon_grid: Vec<f64>,
    pub residual_mode: ResidualMode,
}

impl Default for PredictorOptions {
    fn default() -> Self {
        PredictorOptions {
            subdivision: DEFAULT_SUBDIVISION,
            with_intercept: false,
            tiv_slack_ms: None,
            epsilon_grid: Vec::new(),
            residual_mode: ResidualMode::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorRow {
    pub city_a: String,
    pub city_b: String,
    pub epsilon_first_appearance: Option<f64>,
    pub rtt_ms: f64,
    pub d_gcd_km: f64,
    /// Geodesic length in normalized surface units.
    pub d_geo: f64,
    pub predicted_gcd_ms: f64,
    pub predicted_geo_ms: f64,
    /// Predicted minus observed latency.
    pub delta_gcd_ms: f64,
    pub delta_geo_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorReport {
    pub gcd_fit: LinearFit,
    pub geo_fit: LinearFit,
    pub subdivision: usize,
    pub tiv_filtered: bool,
    pub removed_pairs: Vec<(String, String)>,
    pub rows: Vec<PredictorRow>,
}

/// Fits RTT against great-circle distance and against surface geodesic
/// length for every measured pair, and reports each pair's residuals.
/// `heights` are the mesh heights the geodesics run over.
pub fn predictor_report(
    matrix: &LatencyMatrix,
    mesh: &HalfEdgeMesh,
    heights: &[f64],
    projection: &Projection,
    options: &PredictorOptions,
) -> Result<PredictorReport> {
    let (matrix, removed) = match options.tiv_slack_ms {
        Some(slack) => remove_tiv_pairs(matrix, slack),
        None => (matrix.clone(), Vec::new()),
    };
    let points = matrix.points();
    let xy = points.iter().map(|p| projection.project(p.location)).collect::<Result<Vec<_>>>()?;
    let pairs: Vec<(usize, usize, f64)> = matrix.pairs().collect();
    let geo = par::map_slice(&pairs, |&(i, j, _)| {
        surface_geodesic(mesh, heights, xy[i], xy[j], options.subdivision).map(|g| g.length)
    });
    let geo = geo.into_iter().collect::<Result<Vec<_>>>()?;
    let gcd: Vec<f64> = pairs
        .iter()
        .map(|&(i, j, _)| great_circle_distance(points[i].location, points[j].location))
        .collect();
    let fit_on = |d: &[f64]| {
        let samples: Vec<(f64, f64)> = d.iter().zip(&pairs).map(|(&d, p)| (d, p.2)).collect();
        fit_latency_predictor(&samples, options.with_intercept)
    };
    let (gcd_fit, geo_fit) = (fit_on(&gcd)?, fit_on(&geo)?);
    let mut rows = Vec::with_capacity(pairs.len());
    for (k, &(i, j, rtt)) in pairs.iter().enumerate() {
        let residual = matrix.residual(i, j, options.residual_mode)?.ms;
        let (pg, pe) = (gcd_fit.predict(gcd[k]), geo_fit.predict(geo[k]));
        rows.push(PredictorRow {
            city_a: points[i].name.clone(),
            city_b: points[j].name.clone(),
            epsilon_first_appearance: epsilon_first_appearance(residual, &options.epsilon_grid),
            rtt_ms: rtt,
            d_gcd_km: gcd[k],
            d_geo: geo[k],
            predicted_gcd_ms: pg,
            predicted_geo_ms: pe,
            delta_gcd_ms: pg - rtt,
            delta_geo_ms: pe - rtt,
        });
    }
    Ok(PredictorReport {
        gcd_fit,
        geo_fit,
        subdivision: options.subdivision,
        tiv_filtered: options.tiv_slack_ms.is_some(),
        removed_pairs: removed,
        rows,
    })
}

impl PredictorReport {
    pub fn row(&self, a: &str, b: &str) -> Option<&PredictorRow> {
        self.rows
            .iter()
            .find(|r| (r.city_a == a && r.city_b == b) || (r.city_a == b && r.city_b == a))
    }

    /// Aligned plain-text table: epsilon, city A, city B, delta GCD, delta
    /// Geo, d GCD. Pairs that never become edges show `-` for epsilon.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let fit = |name: &str, f: &LinearFit| {
            format!("{name}: slope {:.6} intercept {:.3} r^2 {:.4}\n", f.slope, f.intercept, f.r_squared)
        };
        out.push_str(&fit("gcd", &self.gcd_fit));
        out.push_str(&fit("geodesic", &self.geo_fit));
        if self.tiv_filtered {
            let _ = writeln!(out, "tiv-filtered: {} pairs removed", self.removed_pairs.len());
        }
        let cells: Vec<[String; 6]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.epsilon_first_appearance.map_or("-".into(), |e| format!("{e}")),
                    r.city_a.clone(),
                    r.city_b.clone(),
                    format!("{:.1}", r.delta_gcd_ms),
                    format!("{:.1}", r.delta_geo_ms),
                    format!("{:.1}", r.d_gcd_km),
                ]
            })
            .collect();
        out.push_str(&align_table(&TEXT_HEADER, &cells));
        out
    }
}

pub const TEXT_HEADER: [&str; 6] = ["eps_ms", "city_a", "city_b", "delta_gcd_ms", "delta_geo_ms", "d_gcd_km"];

fn align_table<const N: usize>(header: &[&str; N], rows: &[[String; N]]) -> String {
    let mut width = header.map(str::len);
    for r in rows {
        for (w, c) in width.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let mut out = String::new();
    let mut line = |cells: Vec<&str>| {
        let parts: Vec<String> = cells.iter().zip(width).map(|(c, w)| format!("{c:<w$}")).collect();
        out.push_str(parts.join("  ").trim_end());
        out.push('\n');
    };
    line(header.to_vec());
    for r in rows {
        line(r.iter().map(String::as_str).collect());
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    pub city_a: String,
    pub city_b: String,
    /// Fitted geodesic latency per snapshot, in snapshot order.
    pub fitted_ms: Vec<f64>,
    pub min_ms: f64,
    pub max_ms: f64,
    pub range_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub epsilon_ms: f64,
    pub lambda_smooth: f64,
    pub snapshots: usize,
    pub rows: Vec<StabilityRow>,
}

/// Runs the pipeline once per snapshot at the first sweep point of
/// `config` and reports the spread of each pair's fitted geodesic latency.
/// Pairs missing from any snapshot are left out.
pub fn stability_report(snapshots: &[LatencyMatrix], config: &PipelineConfig) -> Result<StabilityReport> {
    if snapshots.len() < 2 {
        return Err(Error::InvalidParameter("stability needs at least two snapshots".into()));
    }
    fn ids(m: &LatencyMatrix) -> Vec<&str> {
        let mut v: Vec<&str> = m.points().iter().map(|p| p.id.as_str()).collect();
        v.sort_unstable();
        v
    }
    if snapshots.iter().any(|s| ids(s) != ids(&snapshots[0])) {
        return Err(Error::MismatchedSnapshots);
    }
    let mut single = config.clone();
    single.epsilons_ms.truncate(1);
    single.lambdas.truncate(1);
    single.reports = true;
    let mut series: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for snapshot in snapshots {
        let artifact = run_on_matrix(snapshot, &single)?.into_iter().next().expect("one sweep point");
        let report = artifact.reports.and_then(|r| r.predictor).ok_or(Error::DegenerateRegression)?;
        for r in report.rows {
            let key = if r.city_a <= r.city_b { (r.city_a, r.city_b) } else { (r.city_b, r.city_a) };
            series.entry(key).or_default().push(r.predicted_geo_ms);
        }
    }
    let rows = series
        .into_iter()
        .filter(|(_, v)| v.len() == snapshots.len())
        .map(|((a, b), fitted_ms)| {
            let min_ms = fitted_ms.iter().copied().fold(f64::INFINITY, f64::min);
            let max_ms = fitted_ms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            StabilityRow { city_a: a, city_b: b, fitted_ms, min_ms, max_ms, range_ms: max_ms - min_ms }
        })
        .collect();
    Ok(StabilityReport {
        epsilon_ms: single.epsilons_ms[0],
        lambda_smooth: single.lambdas[0],
        snapshots: snapshots.len(),
        rows,
    })
}

impl StabilityReport {
    pub fn to_text(&self) -> String {
        let cells: Vec<[String; 5]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.city_a.clone(),
                    r.city_b.clone(),
                    format!("{:.2}", r.min_ms),
                    format!("{:.2}", r.max_ms),
                    format!("{:.2}", r.range_ms),
                ]
            })
            .collect();
        let mut out = format!(
            "eps {} ms, lambda {}, {} snapshots\n",
            self.epsilon_ms, self.lambda_smooth, self.snapshots
        );
        out.push_str(&align_table(&["city_a", "city_b", "min_ms", "max_ms", "range_ms"], &cells));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{GeoPoint, ProjectionKind};
    use crate::mesh::build_grid_mesh;
    use crate::netgraph::VantagePoint;

    fn row(eps: Option<f64>, a: &str, b: &str, dg: f64, de: f64, d: f64) -> PredictorRow {
        PredictorRow {
            city_a: a.into(),
            city_b: b.into(),
            epsilon_first_appearance: eps,
            rtt_ms: 0.0,
            d_gcd_km: d,
            d_geo: 0.0,
            predicted_gcd_ms: 0.0,
            predicted_geo_ms: 0.0,
            delta_gcd_ms: dg,
            delta_geo_ms: de,
        }
    }

    fn report(rows: Vec<PredictorRow>) -> PredictorReport {
        let fit = LinearFit { slope: 1.0, intercept: 0.0, r_squared: 1.0 };
        PredictorReport { gcd_fit: fit, geo_fit: fit, subdivision: 4, tiv_filtered: false, removed_pairs: vec![], rows }
    }

    #[test]
    fn text_layout_round_trips_reference_rows() {
        // published reference rows: eps, city A, city B, delta GCD, delta Geo, d GCD
        let reference = [
            (10.0, "Detroit", "Pittsburgh", 4.7, 1.4, 349.9),
            (10.0, "Ashburn", "Atlanta", 9.6, 6.5, 853.1),
            (16.0, "Phoenix", "Dallas", -6.7, -2.1, 1418.2),
            (18.0, "St.George", "Denver", 10.8, 2.4, 808.5),
            (22.0, "Dallas", "L.A.", 23.9, 4.5, 1993.6),
        ];
        let rows = reference.iter().map(|&(e, a, b, dg, de, d)| row(Some(e), a, b, dg, de, d)).collect();
        let text = report(rows).to_text();
        let table: Vec<&str> = text.lines().skip(2).collect();
        assert_eq!(table[0].split_whitespace().collect::<Vec<_>>(), TEXT_HEADER);
        for (line, &(e, a, b, dg, de, d)) in table[1..].iter().zip(&reference) {
            let f: Vec<&str> = line.split_whitespace().collect();
            assert_eq!((f[1], f[2]), (a, b));
            let nums: Vec<f64> = [f[0], f[3], f[4], f[5]].iter().map(|s| s.parse().unwrap()).collect();
            assert_eq!(nums, vec![e, dg, de, d]);
        }
        // columns line up
        let col = table[0].find("city_b").unwrap();
        assert!(table[1..].iter().all(|l| l[col..].starts_with(|c: char| !c.is_whitespace())));
        assert!(report(vec![row(None, "x", "y", 0.0, 0.0, 1.0)]).to_text().lines().last().unwrap().starts_with('-'));
    }

    fn equator_matrix(lons: &[f64], slope: f64) -> LatencyMatrix {
        let points: Vec<VantagePoint> = lons
            .iter()
            .enumerate()
            .map(|(i, &lon)| VantagePoint {
                id: format!("p{i}"),
                name: format!("p{i}"),
                location: GeoPoint::new(0.0, lon).unwrap(),
            })
            .collect();
        let mut m = LatencyMatrix::new(points.clone()).unwrap();
        for i in 0..points.len() {
            for j in i + 1..points.len() {
                let d = great_circle_distance(points[i].location, points[j].location);
                m.insert(&points[i].id, &points[j].id, slope * d).unwrap();
            }
        }
        m
    }

    #[test]
    fn flat_equator_fits_agree() {
        let m = equator_matrix(&[0.0, 1.0, 2.5, 4.0, 7.0, 10.0], 0.02);
        let proj = Projection::fit(ProjectionKind::Equirectangular, &m.points().iter().map(|p| p.location).collect::<Vec<_>>(), 0.1).unwrap();
        // odd k puts a grid row on y = 0.5
        let mesh = build_grid_mesh(31, proj.domain()).unwrap();
        let z = vec![0.0; mesh.vertex_count()];
        let opts = PredictorOptions { epsilon_grid: vec![1.0, 5.0], ..Default::default() };
        let r = predictor_report(&m, &mesh, &z, &proj, &opts).unwrap();
        assert_eq!(r.rows.len(), 15);
        assert!((r.gcd_fit.r_squared - 1.0).abs() < 1e-12);
        assert!((r.geo_fit.r_squared - 1.0).abs() < 1e-12);
        for row in &r.rows {
            assert!((row.predicted_geo_ms - row.predicted_gcd_ms).abs() < 1e-6, "{row:?}");
            let residual = row.rtt_ms - 2.0 * crate::geo::km_to_latency_ms(row.d_gcd_km);
            let expected = [1.0, 5.0].into_iter().find(|&e| residual <= e);
            assert_eq!(row.epsilon_first_appearance, expected);
        }
        assert!(!r.to_text().is_empty());
    }

    #[test]
    fn single_pair_cannot_be_fitted() {
        let m = equator_matrix(&[0.0, 3.0], 0.02);
        let proj = Projection::fit(ProjectionKind::Equirectangular, &m.points().iter().map(|p| p.location).collect::<Vec<_>>(), 0.1).unwrap();
        let mesh = build_grid_mesh(5, proj.domain()).unwrap();
        let z = vec![0.0; mesh.vertex_count()];
        let err = predictor_report(&m, &mesh, &z, &proj, &PredictorOptions::default()).unwrap_err();
        assert!(matches!(err, Error::DegenerateRegression));
    }

    #[test]
    fn stability_input_checks() {
        let a = equator_matrix(&[0.0, 1.0, 2.0], 0.02);
        let b = equator_matrix(&[0.0, 1.0, 2.0, 3.0], 0.02);
        let cfg = PipelineConfig::default();
        assert!(matches!(stability_report(&[a.clone()], &cfg), Err(Error::InvalidParameter(_))));
        assert!(matches!(stability_report(&[a, b], &cfg), Err(Error::MismatchedSnapshots)));
    }
}
