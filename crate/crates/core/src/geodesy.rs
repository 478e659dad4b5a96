//! Geodesic distance on the WGS-84 ellipsoid.
//!
//! Distances come from Vincenty's inverse formula. The iteration does not
//! converge for some nearly antipodal pairs; those fall back to a
//! great-circle distance on a sphere of the IUGG mean radius and are
//! flagged in [`Geodesic::method`].

use std::fmt;

use crate::error::{Error, Result};

/// WGS-84 semi-major axis in meters.
pub const WGS84_A: f64 = 6_378_137.0;
/// WGS-84 flattening.
pub const WGS84_F: f64 = 1.0 / 298.257_223_563;
/// IUGG mean Earth radius in kilometers, used by the great-circle fallback.
pub const MEAN_EARTH_RADIUS_KM: f64 = 6371.0088;

const VINCENTY_MAX_ITER: usize = 200;
const VINCENTY_TOLERANCE: f64 = 1e-12;

/// A WGS-84 latitude/longitude pair in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coordinate {
    lat: f64,
    lon: f64,
}

impl Coordinate {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        if !lat.is_finite() || !lon.is_finite() || lat.abs() > 90.0 || lon.abs() > 180.0 {
            return Err(Error::InvalidCoordinate { lat, lon });
        }
        Ok(Self { lat, lon })
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }
}

impl fmt::Display for Coordinate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.lat, self.lon)
    }
}

/// A non-negative, finite distance in kilometers.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct Kilometers(pub(crate) f64);

impl Kilometers {
    pub const ZERO: Kilometers = Kilometers(0.0);

    pub fn new(value: f64) -> Result<Self> {
        if !value.is_finite() || value < 0.0 {
            return Err(Error::InvalidValue {
                what: "distance (km)",
                value,
            });
        }
        Ok(Self(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl fmt::Display for Kilometers {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} km", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceMethod {
    Vincenty,
    /// Vincenty did not converge; spherical great-circle distance was used.
    GreatCircleFallback,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geodesic {
    pub distance: Kilometers,
    pub method: DistanceMethod,
}

/// Geodesic distance between two points, in kilometers.
pub fn geodesic_distance(a: Coordinate, b: Coordinate) -> Kilometers {
    inverse(a, b).distance
}

/// Vincenty inverse solution with convergence reporting.
///
/// The arguments are put in a canonical order first so the result is
/// bit-for-bit symmetric.
pub fn inverse(a: Coordinate, b: Coordinate) -> Geodesic {
    let (p, q) = if (a.lat, a.lon) <= (b.lat, b.lon) {
        (a, b)
    } else {
        (b, a)
    };
    if p == q {
        return Geodesic {
            distance: Kilometers::ZERO,
            method: DistanceMethod::Vincenty,
        };
    }
    match vincenty_meters(p, q) {
        Some(m) => Geodesic {
            distance: Kilometers(m / 1000.0),
            method: DistanceMethod::Vincenty,
        },
        None => Geodesic {
            distance: Kilometers(great_circle_km(p, q)),
            method: DistanceMethod::GreatCircleFallback,
        },
    }
}

/// Haversine distance on a sphere of radius [`MEAN_EARTH_RADIUS_KM`].
pub fn great_circle_km(a: Coordinate, b: Coordinate) -> f64 {
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dphi = phi2 - phi1;
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * MEAN_EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

fn vincenty_meters(p: Coordinate, q: Coordinate) -> Option<f64> {
    let b_axis = WGS84_A * (1.0 - WGS84_F);
    let mut dlon = q.lon - p.lon;
    if dlon > 180.0 {
        dlon -= 360.0;
    } else if dlon < -180.0 {
        dlon += 360.0;
    }
    let l = dlon.to_radians();
    let u1 = ((1.0 - WGS84_F) * p.lat.to_radians().tan()).atan();
    let u2 = ((1.0 - WGS84_F) * q.lat.to_radians().tan()).atan();
    let (sin_u1, cos_u1) = u1.sin_cos();
    let (sin_u2, cos_u2) = u2.sin_cos();

    let mut lambda = l;
    for _ in 0..VINCENTY_MAX_ITER {
        let (sin_lambda, cos_lambda) = lambda.sin_cos();
        let cross = cos_u1 * sin_u2 - sin_u1 * cos_u2 * cos_lambda;
        let sin_sigma = ((cos_u2 * sin_lambda).powi(2) + cross.powi(2)).sqrt();
        if sin_sigma == 0.0 {
            // coincident points
            return Some(0.0);
        }
        let cos_sigma = sin_u1 * sin_u2 + cos_u1 * cos_u2 * cos_lambda;
        let sigma = sin_sigma.atan2(cos_sigma);
        let sin_alpha = cos_u1 * cos_u2 * sin_lambda / sin_sigma;
        let cos_sq_alpha = 1.0 - sin_alpha * sin_alpha;
        // equatorial line: cos_sq_alpha = 0
        let cos_2sigma_m = if cos_sq_alpha != 0.0 {
            cos_sigma - 2.0 * sin_u1 * sin_u2 / cos_sq_alpha
        } else {
            0.0
        };
        let c = WGS84_F / 16.0 * cos_sq_alpha * (4.0 + WGS84_F * (4.0 - 3.0 * cos_sq_alpha));
        let prev = lambda;
        lambda = l
            + (1.0 - c)
                * WGS84_F
                * sin_alpha
                * (sigma
                    + c * sin_sigma
                        * (cos_2sigma_m + c * cos_sigma * (-1.0 + 2.0 * cos_2sigma_m.powi(2))));

        if (lambda - prev).abs() <= VINCENTY_TOLERANCE {
            let u_sq = cos_sq_alpha * (WGS84_A.powi(2) - b_axis.powi(2)) / b_axis.powi(2);
            let big_a =
                1.0 + u_sq / 16384.0 * (4096.0 + u_sq * (-768.0 + u_sq * (320.0 - 175.0 * u_sq)));
            let big_b = u_sq / 1024.0 * (256.0 + u_sq * (-128.0 + u_sq * (74.0 - 47.0 * u_sq)));
            let delta_sigma = big_b
                * sin_sigma
                * (cos_2sigma_m
                    + big_b / 4.0
                        * (cos_sigma * (-1.0 + 2.0 * cos_2sigma_m.powi(2))
                            - big_b / 6.0
                                * cos_2sigma_m
                                * (-3.0 + 4.0 * sin_sigma.powi(2))
                                * (-3.0 + 4.0 * cos_2sigma_m.powi(2))));
            let s = b_axis * big_a * (sigma - delta_sigma);
            return s.is_finite().then_some(s);
        }
        if !lambda.is_finite() || lambda.abs() > std::f64::consts::PI {
            // diverging near the antipode
            return None;
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(lat: f64, lon: f64) -> Coordinate {
        Coordinate::new(lat, lon).unwrap()
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(Coordinate::new(90.5, 0.0).is_err());
        assert!(Coordinate::new(0.0, -180.1).is_err());
        assert!(Coordinate::new(f64::NAN, 0.0).is_err());
        assert!(Coordinate::new(0.0, f64::INFINITY).is_err());
        assert!(Kilometers::new(-1.0).is_err());
        assert!(Kilometers::new(f64::NAN).is_err());
    }

    #[test]
    fn identity_is_zero() {
        let beijing = c(39.9042, 116.4074);
        assert_eq!(geodesic_distance(beijing, beijing).value(), 0.0);
    }

    #[test]
    fn one_degree_on_the_equator() {
        let d = geodesic_distance(c(0.0, 0.0), c(0.0, 1.0)).value();
        assert!((d - 111.32).abs() < 0.01, "{d}");
    }

    #[test]
    fn pole_to_pole_is_meridian_length() {
        // twice the WGS-84 quarter meridian, 10001.965729 km
        let d = geodesic_distance(c(90.0, 0.0), c(-90.0, 0.0)).value();
        assert!((d - 20003.931458).abs() < 1e-3, "{d}");
    }

    #[test]
    fn antipodal_falls_back() {
        let g = inverse(c(0.0, 0.0), c(0.5, 179.7));
        assert_eq!(g.method, DistanceMethod::GreatCircleFallback);
        assert!(g.distance.value().is_finite());
        assert!(g.distance.value() > 19_900.0);
    }
}
