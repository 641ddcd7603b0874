//! WGS84 points, great-circle distance and canonical location keys.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Scalar;

/// Mean Earth radius used for every distance in the crate.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Number of decimal places that define location identity (~1 m).
pub const LOCATION_DECIMALS: i32 = 5;

/// Longitude/latitude pair in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point<T> {
    pub lon: T,
    pub lat: T,
}

impl<T: Scalar> Point<T> {
    /// Builds a point, rejecting out-of-range or non-finite coordinates.
    pub fn new(lon: T, lat: T) -> Result<Self> {
        let p = Point { lon, lat };
        if p.is_valid() {
            Ok(p)
        } else {
            Err(Error::InvalidCoordinate {
                lon: lon.to_f64().unwrap_or(f64::NAN),
                lat: lat.to_f64().unwrap_or(f64::NAN),
            })
        }
    }

    pub fn is_valid(&self) -> bool {
        let (lon_max, lat_max) = (T::lit(180.0), T::lit(90.0));
        self.lon.is_finite()
            && self.lat.is_finite()
            && self.lon >= -lon_max
            && self.lon <= lon_max
            && self.lat >= -lat_max
            && self.lat <= lat_max
    }
}

/// Great-circle distance in meters on a sphere of radius [`EARTH_RADIUS_M`].
pub fn haversine_m<T: Scalar>(a: &Point<T>, b: &Point<T>) -> T {
    let two = T::lit(2.0);
    let lat1 = a.lat.to_radians();
    let lat2 = b.lat.to_radians();
    let dlat = (b.lat - a.lat).to_radians();
    let dlon = (b.lon - a.lon).to_radians();

    let h = (dlat / two).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / two).sin().powi(2);
    // rounding can push h a hair above 1 for antipodal points
    let h = h.min(T::one());
    T::lit(EARTH_RADIUS_M) * two * h.sqrt().asin()
}

/// Canonical key for location identity: both coordinates rounded to
/// [`LOCATION_DECIMALS`] decimal places, encoded as integers in units of 1e-5 degree.
pub fn location_key(p: &Point<f64>) -> String {
    let scale = 10f64.powi(LOCATION_DECIMALS);
    let lon = (p.lon * scale).round() as i64;
    let lat = (p.lat * scale).round() as i64;
    format!("{lon}:{lat}")
}
