//! Geodesy on a spherical earth and the planar projection onto the mesh domain.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Mean earth radius in kilometers.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT_M_S: f64 = 299_792_458.0;

/// Milliseconds of one-way fiber propagation per kilometer of distance,
/// taking the signal speed as two thirds of `c`.
pub const MS_PER_KM: f64 = 1.0e6 / (SPEED_OF_LIGHT_M_S * 2.0 / 3.0);

/// Web-mercator is undefined at the poles; tiles stop at this latitude.
pub const MERCATOR_MAX_LAT: f64 = 85.051_128_779_806_59;

/// Default margin added on each side of the node bounding box.
pub const DEFAULT_MARGIN: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    /// Builds a point, normalizing longitude into `[-180, 180)`.
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        if !lat.is_finite() || !lon.is_finite() || !(-90.0..=90.0).contains(&lat) {
            return Err(Error::InvalidGeoPoint { lat, lon });
        }
        let lon = (lon + 180.0).rem_euclid(360.0) - 180.0;
        Ok(GeoPoint { lat, lon })
    }
}

/// Haversine distance in kilometers.
pub fn great_circle_distance(a: GeoPoint, b: GeoPoint) -> f64 {
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dphi = phi2 - phi1;
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// One-way great-circle latency in milliseconds.
pub fn great_circle_latency(a: GeoPoint, b: GeoPoint) -> f64 {
    km_to_latency_ms(great_circle_distance(a, b))
}

pub fn km_to_latency_ms(km: f64) -> f64 {
    km * MS_PER_KM
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ProjectionKind {
    #[default]
    WebMercator,
    Equirectangular,
}

impl std::str::FromStr for ProjectionKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "web-mercator" => Ok(ProjectionKind::WebMercator),
            "equirectangular" => Ok(ProjectionKind::Equirectangular),
            other => Err(Error::InvalidParameter(format!("unknown projection `{other}`"))),
        }
    }
}

impl ProjectionKind {
    fn forward(self, p: GeoPoint) -> Result<[f64; 2]> {
        let x = p.lon.to_radians();
        match self {
            ProjectionKind::Equirectangular => Ok([x, p.lat.to_radians()]),
            ProjectionKind::WebMercator => {
                if p.lat.abs() >= MERCATOR_MAX_LAT {
                    return Err(Error::LatitudeOutOfRange(p.lat));
                }
                let phi = p.lat.to_radians();
                Ok([x, (std::f64::consts::FRAC_PI_4 + phi / 2.0).tan().ln()])
            }
        }
    }

    fn inverse(self, xy: [f64; 2]) -> [f64; 2] {
        let lon = xy[0].to_degrees();
        let lat = match self {
            ProjectionKind::Equirectangular => xy[1].to_degrees(),
            ProjectionKind::WebMercator => {
                (2.0 * xy[1].exp().atan() - std::f64::consts::FRAC_PI_2).to_degrees()
            }
        };
        [lat, lon]
    }
}

/// Maps geographic points into the normalized mesh domain.
///
/// The node bounding box (in projected units) is scaled so its larger side
/// has length 1 and centred in `[0, 1]^2`; the mesh domain then extends
/// `margin_fraction` beyond that square on every side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub kind: ProjectionKind,
    /// Projected bounding box of the nodes: `[min_x, min_y, max_x, max_y]`.
    pub node_bounds: [f64; 4],
    pub scale: f64,
    pub margin_fraction: f64,
}

impl Projection {
    pub fn fit(kind: ProjectionKind, points: &[GeoPoint], margin_fraction: f64) -> Result<Self> {
        if !(margin_fraction > 0.0) || !margin_fraction.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "margin fraction must be positive, got {margin_fraction}"
            )));
        }
        let mut b = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
        for p in points {
            let [x, y] = kind.forward(*p)?;
            b[0] = b[0].min(x);
            b[1] = b[1].min(y);
            b[2] = b[2].max(x);
            b[3] = b[3].max(y);
        }
        if points.is_empty() {
            b = [0.0; 4];
        }
        let span = (b[2] - b[0]).max(b[3] - b[1]);
        let scale = if span > 0.0 { 1.0 / span } else { 1.0 };
        Ok(Projection {
            kind,
            node_bounds: b,
            scale,
            margin_fraction,
        })
    }

    fn center(&self) -> [f64; 2] {
        let b = &self.node_bounds;
        [(b[0] + b[2]) / 2.0, (b[1] + b[3]) / 2.0]
    }

    pub fn project(&self, p: GeoPoint) -> Result<[f64; 2]> {
        let [x, y] = self.kind.forward(p)?;
        let c = self.center();
        Ok([0.5 + (x - c[0]) * self.scale, 0.5 + (y - c[1]) * self.scale])
    }

    pub fn inverse(&self, xy: [f64; 2]) -> Result<GeoPoint> {
        let c = self.center();
        let raw = [
            (xy[0] - 0.5) / self.scale + c[0],
            (xy[1] - 0.5) / self.scale + c[1],
        ];
        let [lat, lon] = self.kind.inverse(raw);
        GeoPoint::new(lat, lon)
    }

    /// Mesh domain `[min_x, min_y, max_x, max_y]` in normalized units.
    pub fn domain(&self) -> [f64; 4] {
        let m = self.margin_fraction;
        [-m, -m, 1.0 + m, 1.0 + m]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn gp(lat: f64, lon: f64) -> GeoPoint {
        GeoPoint::new(lat, lon).unwrap()
    }

    #[test]
    fn distance_reference_values() {
        assert_eq!(great_circle_distance(gp(10.0, 20.0), gp(10.0, 20.0)), 0.0);
        let quarter = std::f64::consts::PI * EARTH_RADIUS_KM / 2.0;
        assert_abs_diff_eq!(quarter, 10007.557, epsilon = 0.01);
        assert_abs_diff_eq!(great_circle_distance(gp(0.0, 0.0), gp(0.0, 90.0)), quarter, epsilon = 1e-9);
        assert_abs_diff_eq!(
            great_circle_distance(gp(0.0, 0.0), gp(0.0, 180.0)),
            20015.115,
            epsilon = 0.01
        );
    }

    #[test]
    fn latency_reference_values() {
        assert_eq!(great_circle_latency(gp(1.0, 1.0), gp(1.0, 1.0)), 0.0);
        assert_abs_diff_eq!(km_to_latency_ms(1000.0), 1.0e6 / 1.99861639e8 * 1000.0, epsilon = 1e-6);
        assert_abs_diff_eq!(km_to_latency_ms(1000.0), 5.0035, epsilon = 0.001);
        assert_abs_diff_eq!(km_to_latency_ms(1993.6), 9.975, epsilon = 0.001);
    }

    #[test]
    fn longitude_is_normalized() {
        assert_eq!(gp(0.0, 180.0).lon, -180.0);
        assert_abs_diff_eq!(gp(0.0, 190.0).lon, -170.0, epsilon = 1e-12);
        assert!(GeoPoint::new(91.0, 0.0).is_err());
    }

    #[test]
    fn single_node_maps_to_center() {
        let p = gp(3.0, 4.0);
        let proj = Projection::fit(ProjectionKind::Equirectangular, &[p], DEFAULT_MARGIN).unwrap();
        assert_eq!(proj.project(p).unwrap(), [0.5, 0.5]);
    }

    #[test]
    fn bounding_box_maps_to_unit_length() {
        let pts = [gp(0.0, 0.0), gp(5.0, 10.0)];
        for kind in [ProjectionKind::Equirectangular, ProjectionKind::WebMercator] {
            let proj = Projection::fit(kind, &pts, DEFAULT_MARGIN).unwrap();
            let a = proj.project(pts[0]).unwrap();
            let b = proj.project(pts[1]).unwrap();
            assert_abs_diff_eq!(b[0] - a[0], 1.0, epsilon = 1e-12);
            assert!(b[1] - a[1] < 1.0);
            let d = proj.domain();
            for q in [a, b] {
                assert!(q[0] > d[0] && q[0] < d[2] && q[1] > d[1] && q[1] < d[3]);
            }
        }
    }

    #[test]
    fn mercator_rejects_polar_latitudes() {
        let err = Projection::fit(ProjectionKind::WebMercator, &[gp(89.0, 0.0)], 0.1);
        assert!(matches!(err, Err(Error::LatitudeOutOfRange(_))));
    }

    fn arb_point() -> impl Strategy<Value = GeoPoint> {
        (-89.9f64..89.9, -180.0f64..180.0).prop_map(|(lat, lon)| gp(lat, lon))
    }

    proptest! {
        #[test]
        fn gcd_symmetric_and_triangle(a in arb_point(), b in arb_point(), c in arb_point()) {
            let ab = great_circle_distance(a, b);
            prop_assert!(ab >= 0.0);
            prop_assert!((ab - great_circle_distance(b, a)).abs() < 1e-9);
            let ac = great_circle_distance(a, c);
            let cb = great_circle_distance(c, b);
            prop_assert!(ab <= ac + cb + 1e-6);
        }

        #[test]
        fn gcl_is_linear_in_gcd(a in arb_point(), b in arb_point()) {
            prop_assert_eq!(great_circle_latency(a, b), great_circle_distance(a, b) * MS_PER_KM);
        }

        #[test]
        fn projection_round_trip(
            pts in proptest::collection::vec((-80.0f64..80.0, -170.0f64..170.0), 2..6),
            merc in any::<bool>(),
        ) {
            let pts: Vec<_> = pts.into_iter().map(|(a, b)| gp(a, b)).collect();
            let kind = if merc { ProjectionKind::WebMercator } else { ProjectionKind::Equirectangular };
            let proj = Projection::fit(kind, &pts, DEFAULT_MARGIN).unwrap();
            for p in &pts {
                let xy = proj.project(*p).unwrap();
                let back = proj.inverse(xy).unwrap();
                let xy2 = proj.project(back).unwrap();
                prop_assert!((xy[0] - xy2[0]).abs() < 1e-9 && (xy[1] - xy2[1]).abs() < 1e-9);
                prop_assert!((back.lat - p.lat).abs() < 1e-9);
            }
        }

        #[test]
        fn projection_preserves_ordering(
            a in (0.0f64..60.0, -170.0f64..170.0),
            b in (0.0f64..60.0, -170.0f64..170.0),
        ) {
            let (pa, pb) = (gp(a.0, a.1), gp(b.0, b.1));
            let proj = Projection::fit(ProjectionKind::WebMercator, &[pa, pb], 0.1).unwrap();
            let (xa, xb) = (proj.project(pa).unwrap(), proj.project(pb).unwrap());
            if pa.lon < pb.lon { prop_assert!(xa[0] <= xb[0]); }
            if pa.lat < pb.lat { prop_assert!(xa[1] <= xb[1]); }
        }
    }
}
