//! HTTP layer: JSON endpoints over a swappable engine snapshot.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::Serialize;
use serde_json::{json, Value};
use soilfuse_core::GeoPoint;

use crate::embed::ScreenHit;
use crate::engine::{Area, BBox, DistributionPoint, GeocodeHit, QueryEngine, RegionHit, SampleHit};
use crate::error::QueryError;
use crate::geocoder::ExternalGeocoder;

pub const DEFAULT_K: usize = 10;

/// Shared service state. Readers clone the current snapshot and keep it for
/// the whole request, so a swap never affects requests in flight.
pub struct AppState {
    snapshot: RwLock<Arc<QueryEngine>>,
    geocoder: Option<Arc<dyn ExternalGeocoder>>,
}

impl AppState {
    pub fn new(engine: QueryEngine, geocoder: Option<Arc<dyn ExternalGeocoder>>) -> Self {
        AppState { snapshot: RwLock::new(Arc::new(engine)), geocoder }
    }

    pub fn snapshot(&self) -> Arc<QueryEngine> {
        self.snapshot.read().expect("snapshot lock").clone()
    }

    /// Installs a new snapshot and returns the previous one.
    pub fn swap(&self, engine: QueryEngine) -> Arc<QueryEngine> {
        std::mem::replace(&mut *self.snapshot.write().expect("snapshot lock"), Arc::new(engine))
    }

    /// Gazetteer first, then the external client when one is configured.
    pub async fn geocode(&self, name: &str) -> Result<GeocodeHit, QueryError> {
        if let Some(hit) = self.snapshot().geocode_local(name) {
            return Ok(hit);
        }
        match &self.geocoder {
            Some(client) => match client.lookup(name).await? {
                Some(location) => Ok(GeocodeHit { name: name.to_owned(), location, admin_path: Vec::new(), source: "external" }),
                None => Err(QueryError::NotFound(name.to_owned())),
            },
            None => Err(QueryError::NotFound(name.to_owned())),
        }
    }
}

pub struct ApiError(pub QueryError);

impl From<QueryError> for ApiError {
    fn from(e: QueryError) -> Self {
        ApiError(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self.0 {
            QueryError::NotFound(_) | QueryError::UnknownRegion(_) => StatusCode::NOT_FOUND,
            QueryError::ExternalUnavailable(_) => StatusCode::BAD_GATEWAY,
            QueryError::UnknownFeature(_) | QueryError::TooManyFeatures { .. } | QueryError::InvalidArgument(_) => {
                StatusCode::BAD_REQUEST
            }
            QueryError::InvalidData(_) | QueryError::Core(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(self.0.body())).into_response()
    }
}

type Params = Query<HashMap<String, String>>;
type ApiResult<T> = Result<Json<T>, ApiError>;

fn required<'a>(p: &'a HashMap<String, String>, key: &str) -> Result<&'a str, QueryError> {
    p.get(key).map(String::as_str).ok_or_else(|| QueryError::InvalidArgument(format!("missing parameter `{key}`")))
}

fn number<T: std::str::FromStr>(key: &str, raw: &str) -> Result<T, QueryError> {
    raw.trim().parse().map_err(|_| QueryError::InvalidArgument(format!("parameter `{key}`: `{raw}` is not a number")))
}

fn point(p: &HashMap<String, String>) -> Result<GeoPoint, QueryError> {
    let lon = number("lon", required(p, "lon")?)?;
    let lat = number("lat", required(p, "lat")?)?;
    GeoPoint::new(lon, lat).map_err(|e| QueryError::InvalidArgument(e.to_string()))
}

fn k_param(p: &HashMap<String, String>) -> Result<usize, QueryError> {
    p.get("k").map_or(Ok(DEFAULT_K), |raw| number("k", raw))
}

fn id_list(raw: Option<&String>) -> Vec<String> {
    raw.map(|s| s.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::to_owned).collect()).unwrap_or_default()
}

async fn geocode(State(state): State<Arc<AppState>>, Query(p): Params) -> ApiResult<GeocodeHit> {
    Ok(Json(state.geocode(required(&p, "q")?).await?))
}

#[derive(Serialize)]
struct RegionsResponse {
    location: GeoPoint,
    regions: Vec<RegionHit>,
}

async fn regions(State(state): State<Arc<AppState>>, Query(p): Params) -> ApiResult<RegionsResponse> {
    let location = point(&p)?;
    Ok(Json(RegionsResponse { location, regions: state.snapshot().admin_hierarchy(&location) }))
}

#[derive(Serialize)]
struct ScreenResponse {
    query: String,
    hits: Vec<ScreenHit>,
}

async fn screen(State(state): State<Arc<AppState>>, Query(p): Params) -> ApiResult<ScreenResponse> {
    let query = required(&p, "q")?.to_owned();
    let hits = state.snapshot().screen(&query, k_param(&p)?)?;
    Ok(Json(ScreenResponse { query, hits }))
}

#[derive(Serialize)]
struct SamplesResponse {
    center: GeoPoint,
    k: usize,
    samples: Vec<SampleHit>,
}

async fn samples(State(state): State<Arc<AppState>>, Query(p): Params) -> ApiResult<SamplesResponse> {
    let center = point(&p)?;
    let k = k_param(&p)?;
    let samples = state.snapshot().query_samples(&center, k, &id_list(p.get("features")))?;
    Ok(Json(SamplesResponse { center, k, samples }))
}

#[derive(Serialize)]
struct DistributionResponse {
    features: std::collections::BTreeMap<String, Vec<DistributionPoint>>,
}

async fn distribution(State(state): State<Arc<AppState>>, Query(p): Params) -> ApiResult<DistributionResponse> {
    let area = match (p.get("bbox"), p.get("region")) {
        (Some(raw), None) => {
            let parts = raw.split(',').map(|v| number::<f64>("bbox", v)).collect::<Result<Vec<_>, _>>()?;
            let [w, s, e, n] = parts[..] else {
                return Err(QueryError::InvalidArgument("bbox needs four values w,s,e,n".into()).into());
            };
            Area::BBox(BBox::new(w, s, e, n)?)
        }
        (None, Some(id)) => Area::Region(id.trim().to_owned()),
        _ => return Err(QueryError::InvalidArgument("give exactly one of `bbox` or `region`".into()).into()),
    };
    let features = state.snapshot().query_feature_distribution(&area, &id_list(p.get("ids")))?;
    Ok(Json(DistributionResponse { features }))
}

async fn openapi(State(state): State<Arc<AppState>>) -> Json<Value> {
    Json(openapi_document(state.snapshot().config().distribution_cap))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/geocode", get(geocode))
        .route("/regions", get(regions))
        .route("/features/screen", get(screen))
        .route("/samples", get(samples))
        .route("/features/distribution", get(distribution))
        .route("/openapi.json", get(openapi))
        .with_state(state)
}

pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

fn param(name: &str, required: bool, schema: Value, description: &str) -> Value {
    json!({ "name": name, "in": "query", "required": required, "schema": schema, "description": description })
}

fn operation(summary: &str, params: Vec<Value>, ok_schema: &str) -> Value {
    let error = json!({ "description": "Error", "content": { "application/json": { "schema": { "$ref": "#/components/schemas/Error" } } } });
    json!({
        "get": {
            "summary": summary,
            "parameters": params,
            "responses": {
                "200": { "description": "OK", "content": { "application/json": { "schema": { "$ref": format!("#/components/schemas/{ok_schema}") } } } },
                "400": error,
                "404": error,
            }
        }
    })
}

/// OpenAPI 3.0 description of the service.
pub fn openapi_document(cap: usize) -> Value {
    let num = json!({ "type": "number" });
    let string = json!({ "type": "string" });
    let int = json!({ "type": "integer", "minimum": 1, "default": DEFAULT_K });
    let point = json!({ "type": "object", "required": ["lon", "lat"], "properties": { "lon": num, "lat": num } });
    let any_value = json!({ "description": "number, number array or string depending on the feature modality" });
    json!({
        "openapi": "3.0.3",
        "info": { "title": "soilfuse query service", "version": env!("CARGO_PKG_VERSION") },
        "paths": {
            "/geocode": operation("Resolve a place name to coordinates", vec![param("q", true, string.clone(), "place name, case-insensitive")], "GeocodeHit"),
            "/regions": operation("Administrative regions containing a point, coarse to fine", vec![
                param("lon", true, num.clone(), "longitude"), param("lat", true, num.clone(), "latitude")], "Regions"),
            "/features/screen": operation("Rank features by relevance to a free-text query", vec![
                param("q", true, string.clone(), "query text"), param("k", false, int.clone(), "maximum number of hits")], "Screen"),
            "/samples": operation("Nearest samples with requested features", vec![
                param("lon", true, num.clone(), "longitude"), param("lat", true, num.clone(), "latitude"),
                param("k", false, int.clone(), "number of samples"),
                param("features", false, string.clone(), "comma-separated feature ids; all features when omitted")], "Samples"),
            "/features/distribution": operation("Observed values of a few features inside an area", vec![
                param("ids", true, string.clone(), &format!("comma-separated feature ids, at most {cap}")),
                param("bbox", false, string.clone(), "west,south,east,north (inclusive); exclusive with region"),
                param("region", false, string.clone(), "administrative region id; exclusive with bbox")], "Distribution"),
            "/openapi.json": { "get": { "summary": "This document", "responses": { "200": { "description": "OpenAPI document" } } } },
        },
        "components": { "schemas": {
            "Point": point,
            "Error": { "type": "object", "properties": { "error": string, "message": string } },
            "GeocodeHit": { "type": "object", "properties": {
                "name": string, "location": { "$ref": "#/components/schemas/Point" },
                "admin_path": { "type": "array", "items": string }, "source": { "type": "string", "enum": ["gazetteer", "external"] } } },
            "Region": { "type": "object", "properties": { "id": string, "level": { "type": "integer" }, "parent_id": { "type": "string", "nullable": true } } },
            "Regions": { "type": "object", "properties": {
                "location": { "$ref": "#/components/schemas/Point" }, "regions": { "type": "array", "items": { "$ref": "#/components/schemas/Region" } } } },
            "Screen": { "type": "object", "properties": { "query": string, "hits": { "type": "array", "items": { "type": "object", "properties": {
                "feature_id": string, "name": string, "score": num, "keyword_score": num, "embedding_score": num } } } } },
            "Cell": { "type": "object", "required": ["status"], "properties": {
                "status": { "type": "string", "enum": ["observed", "missing"] }, "value": any_value, "unit": string,
                "source_dataset_id": string, "source_kind": { "type": "string", "enum": ["sample_structured", "map_structured"] },
                "alignment_distance_m": num } },
            "Samples": { "type": "object", "properties": {
                "center": { "$ref": "#/components/schemas/Point" }, "k": { "type": "integer" },
                "samples": { "type": "array", "items": { "type": "object", "properties": {
                    "sample_id": string, "survey": string, "location": { "$ref": "#/components/schemas/Point" }, "distance_m": num,
                    "features": { "type": "object", "additionalProperties": { "$ref": "#/components/schemas/Cell" } } } } } } },
            "Distribution": { "type": "object", "properties": { "features": { "type": "object", "additionalProperties": {
                "type": "array", "items": { "type": "object", "properties": {
                    "sample_id": string, "location": { "$ref": "#/components/schemas/Point" }, "value": any_value } } } } } },
        } }
    })
}
