//! Pluggable external geocoder (Nominatim-compatible search endpoint).

use async_trait::async_trait;
use serde::Deserialize;
use soilfuse_core::GeoPoint;

use crate::error::QueryError;

/// Environment variable holding the external geocoder base URL.
pub const GEOCODER_URL_ENV: &str = "SOILFUSE_GEOCODER_URL";

#[async_trait]
pub trait ExternalGeocoder: Send + Sync {
    /// `Ok(None)` when the service answered but knows no such place.
    async fn lookup(&self, name: &str) -> Result<Option<GeoPoint>, QueryError>;
}

/// Client for `GET {base}/search?q=..&format=json&limit=1`.
pub struct NominatimClient {
    base_url: String,
    http: reqwest::Client,
}

#[derive(Deserialize)]
struct Place {
    lon: String,
    lat: String,
}

impl NominatimClient {
    pub fn new(base_url: &str) -> Result<Self, QueryError> {
        let http = reqwest::Client::builder()
            .user_agent(concat!("soilfuse/", env!("CARGO_PKG_VERSION")))
            .timeout(std::time::Duration::from_secs(10))
            .build()
            .map_err(|e| QueryError::ExternalUnavailable(e.to_string()))?;
        Ok(NominatimClient { base_url: base_url.trim_end_matches('/').to_owned(), http })
    }

    pub fn from_env() -> Result<Option<Self>, QueryError> {
        match std::env::var(GEOCODER_URL_ENV) {
            Ok(url) if !url.trim().is_empty() => Self::new(url.trim()).map(Some),
            _ => Ok(None),
        }
    }
}

fn parse_places(body: &str) -> Result<Option<GeoPoint>, QueryError> {
    let places: Vec<Place> =
        serde_json::from_str(body).map_err(|e| QueryError::ExternalUnavailable(format!("bad response: {e}")))?;
    let Some(place) = places.first() else { return Ok(None) };
    let coord = |s: &str| s.parse::<f64>().map_err(|_| QueryError::ExternalUnavailable(format!("bad coordinate `{s}`")));
    GeoPoint::new(coord(&place.lon)?, coord(&place.lat)?)
        .map(Some)
        .map_err(|e| QueryError::ExternalUnavailable(e.to_string()))
}

#[async_trait]
impl ExternalGeocoder for NominatimClient {
    async fn lookup(&self, name: &str) -> Result<Option<GeoPoint>, QueryError> {
        let unavailable = |e: reqwest::Error| QueryError::ExternalUnavailable(e.to_string());
        let body = self
            .http
            .get(format!("{}/search", self.base_url))
            .query(&[("q", name), ("format", "json"), ("limit", "1")])
            .send()
            .await
            .map_err(unavailable)?
            .error_for_status()
            .map_err(unavailable)?
            .text()
            .await
            .map_err(unavailable)?;
        parse_places(&body)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_search_response() {
        let p = parse_places(r#"[{"lon":"11.5","lat":"48.1","display_name":"x"}]"#).unwrap().unwrap();
        assert_eq!((p.lon, p.lat), (11.5, 48.1));
        assert_eq!(parse_places("[]").unwrap(), None);
        assert!(parse_places("{").is_err());
        assert!(parse_places(r#"[{"lon":"500","lat":"0"}]"#).is_err());
    }
}
