//! Read-only HTTP service over an immutable scene snapshot.
//!
//! Routes:
//! - `GET /api/info`: scene summary and camera list
//! - `GET /api/render?cam=ID&tau=T[&heatmap=1]`: PNG of the scene pruned at `T`
//! - `GET /api/metrics?tau=T`: kept count, ACS and, when targets were
//!   loaded, PSNR/SSIM/SQR
//!
//! Renders are cached per `(camera, τ rounded to 1e-3, heatmap)` in an LRU
//! of at most [`CACHE_CAPACITY`] entries. Rendering happens at the rounded
//! threshold, so identical cache keys always mean identical bytes.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::num::NonZeroUsize;
use std::sync::{Arc, Mutex};

use axum::extract::{Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use confsplat::compress::{acs, count_active, evaluate_views, prune, render_at_threshold, sqr, sqr_scale};
use confsplat::io::encode_png;
use confsplat::raster::RenderSettings;
use confsplat::{Camera, ConfidenceField, Error, Image, Mode, SplatSet, View};
use lru::LruCache;
use serde::Serialize;
use serde_json::json;
use tower_http::cors::{AllowOrigin, CorsLayer};

pub const CACHE_CAPACITY: usize = 64;

/// A viewpoint the service can render from. 2D scenes have exactly one,
/// with no camera.
#[derive(Debug, Clone)]
pub struct Viewpoint {
    pub id: u64,
    pub camera: Option<Camera>,
    pub target: Option<Image>,
}

/// Everything the service serves; never mutated after startup.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub scene: SplatSet,
    /// `None` for scenes without confidence scores: nothing is pruned.
    pub field: Option<ConfidenceField>,
    pub viewpoints: Vec<Viewpoint>,
    pub settings: RenderSettings,
}

impl Snapshot {
    /// Checks that viewpoints fit the scene mode and that ids are unique.
    pub fn new(
        scene: SplatSet,
        field: Option<ConfidenceField>,
        viewpoints: Vec<Viewpoint>,
        settings: RenderSettings,
    ) -> confsplat::Result<Self> {
        if let Some(f) = &field {
            if f.len() != scene.len() {
                return Err(Error::ShapeMismatch { expected: format!("{} confidences", scene.len()), got: f.len().to_string() });
            }
        }
        for (k, v) in viewpoints.iter().enumerate() {
            match (scene.mode, &v.camera) {
                (Mode::ThreeD, None) => return Err(Error::InvalidInput(format!("viewpoint {} needs a camera", v.id))),
                (Mode::TwoD { .. }, Some(_)) => {
                    return Err(Error::InvalidInput("2D scenes are served without cameras".into()))
                }
                _ => {}
            }
            if viewpoints[..k].iter().any(|o| o.id == v.id) {
                return Err(Error::InvalidInput(format!("duplicate viewpoint id {}", v.id)));
            }
        }
        let snap = Self { scene, field, viewpoints, settings };
        for v in &snap.viewpoints {
            if let Some(t) = &v.target {
                let (w, h) = snap.size_of(v);
                if (t.width, t.height) != (w, h) {
                    return Err(Error::ShapeMismatch {
                        expected: format!("{w}x{h} target for viewpoint {}", v.id),
                        got: format!("{}x{}", t.width, t.height),
                    });
                }
            }
        }
        Ok(snap)
    }

    fn size_of(&self, v: &Viewpoint) -> (usize, usize) {
        match (&v.camera, self.scene.mode) {
            (Some(c), _) => (c.width, c.height),
            (None, Mode::TwoD { width, height }) => (width, height),
            (None, Mode::ThreeD) => (0, 0),
        }
    }

    fn views_with_targets(&self) -> Option<Vec<View>> {
        if self.viewpoints.is_empty() {
            return None;
        }
        self.viewpoints
            .iter()
            .map(|v| v.target.clone().map(|target| View { camera: v.camera.clone(), target }))
            .collect()
    }

    fn confidences(&self) -> Vec<f64> {
        match &self.field {
            Some(f) => f.confidences(),
            None => vec![1.0; self.scene.len()],
        }
    }
}

type CacheKey = (u64, u32, bool);

pub struct AppState {
    snapshot: Snapshot,
    cache: Mutex<LruCache<CacheKey, Arc<Vec<u8>>>>,
}

impl AppState {
    pub fn new(snapshot: Snapshot) -> Arc<Self> {
        let cap = NonZeroUsize::new(CACHE_CAPACITY).expect("nonzero capacity");
        Arc::new(Self { snapshot, cache: Mutex::new(LruCache::new(cap)) })
    }

    pub fn cached_renders(&self) -> usize {
        self.cache.lock().map(|c| c.len()).unwrap_or(0)
    }
}

#[derive(Debug)]
struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

fn bad_request(msg: impl Into<String>) -> ApiError {
    ApiError(StatusCode::BAD_REQUEST, msg.into())
}

fn internal(e: impl std::fmt::Display) -> ApiError {
    ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
}

fn parse_tau(q: &HashMap<String, String>) -> Result<f64, ApiError> {
    let raw = q.get("tau").map(String::as_str).unwrap_or("0");
    let tau: f64 = raw.parse().map_err(|_| bad_request(format!("tau must be a number, got {raw:?}")))?;
    if !(0.0..=1.0).contains(&tau) {
        return Err(bad_request(format!("tau must lie in [0, 1], got {tau}")));
    }
    Ok(tau)
}

fn parse_flag(q: &HashMap<String, String>, key: &str) -> Result<bool, ApiError> {
    match q.get(key).map(String::as_str) {
        None | Some("0") | Some("false") => Ok(false),
        Some("") | Some("1") | Some("true") => Ok(true),
        Some(other) => Err(bad_request(format!("{key} must be 0 or 1, got {other:?}"))),
    }
}

/// Thresholds are rounded to 1e-3 for caching and rendering.
pub fn quantize_tau(tau: f64) -> u32 {
    (tau * 1000.0).round() as u32
}

#[derive(Serialize)]
struct CameraInfo {
    id: u64,
    width: usize,
    height: usize,
}

async fn info(State(state): State<Arc<AppState>>) -> Result<Json<serde_json::Value>, ApiError> {
    let snap = &state.snapshot;
    let cs = snap.confidences();
    let mean = if cs.is_empty() { 0.0 } else { snap.field.as_ref().map_or(Ok(1.0), acs).map_err(internal)? };
    let active = snap.field.as_ref().map_or(cs.len(), count_active);
    let cameras: Vec<CameraInfo> = snap
        .viewpoints
        .iter()
        .map(|v| {
            let (width, height) = snap.size_of(v);
            CameraInfo { id: v.id, width, height }
        })
        .collect();
    Ok(Json(json!({
        "n_splats": snap.scene.len(),
        "sh_degree": snap.scene.sh_degree,
        "mode": if matches!(snap.scene.mode, Mode::ThreeD) { "3d" } else { "2d" },
        "has_confidence": snap.field.is_some(),
        "has_targets": snap.views_with_targets().is_some(),
        "acs": mean,
        "active_count": active,
        "cameras": cameras,
    })))
}

async fn render(
    State(state): State<Arc<AppState>>,
    Query(q): Query<HashMap<String, String>>,
) -> Result<Response, ApiError> {
    let raw_cam = q.get("cam").ok_or_else(|| bad_request("missing cam"))?;
    let cam: u64 = raw_cam.parse().map_err(|_| bad_request(format!("cam must be an integer id, got {raw_cam:?}")))?;
    let tau = parse_tau(&q)?;
    let heatmap = parse_flag(&q, "heatmap")?;
    if !state.snapshot.viewpoints.iter().any(|v| v.id == cam) {
        return Err(ApiError(StatusCode::NOT_FOUND, format!("unknown camera {cam}")));
    }
    if heatmap && state.snapshot.field.is_none() {
        return Err(bad_request("scene has no confidence scores to show as a heatmap"));
    }
    let key = (cam, quantize_tau(tau), heatmap);
    let hit = state.cache.lock().map_err(internal)?.get(&key).cloned();
    let bytes = match hit {
        Some(b) => b,
        None => {
            let st = state.clone();
            let bytes = tokio::task::spawn_blocking(move || render_png(&st.snapshot, key))
                .await
                .map_err(internal)?
                .map_err(internal)?;
            let bytes = Arc::new(bytes);
            state.cache.lock().map_err(internal)?.put(key, bytes.clone());
            bytes
        }
    };
    Ok(([(header::CONTENT_TYPE, HeaderValue::from_static("image/png"))], bytes.as_ref().clone()).into_response())
}

fn render_png(snap: &Snapshot, (cam, tau_q, heatmap): CacheKey) -> confsplat::Result<Vec<u8>> {
    let v = snap.viewpoints.iter().find(|v| v.id == cam).expect("camera checked by caller");
    let tau = tau_q as f64 / 1000.0;
    let img = render_at_threshold(&snap.scene, snap.field.as_ref(), v.camera.as_ref(), tau, heatmap, &snap.settings)?;
    encode_png(&img)
}

async fn metrics(
    State(state): State<Arc<AppState>>,
    Query(q): Query<HashMap<String, String>>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let tau = parse_tau(&q)?;
    let st = state.clone();
    let body = tokio::task::spawn_blocking(move || metrics_body(&st.snapshot, tau)).await.map_err(internal)?.map_err(internal)?;
    Ok(Json(body))
}

fn metrics_body(snap: &Snapshot, tau: f64) -> confsplat::Result<serde_json::Value> {
    let n = snap.scene.len();
    let (kept_scene, kept_field) = match &snap.field {
        Some(f) => {
            let p = prune(&snap.scene, f, tau)?;
            (p.scene, Some(p.field))
        }
        None => (snap.scene.clone(), None),
    };
    let kept = kept_scene.len();
    let mean = match &kept_field {
        Some(f) if !f.is_empty() => acs(f)?,
        Some(_) => 0.0,
        None if kept > 0 => 1.0,
        None => 0.0,
    };
    let mut body = json!({ "tau": tau, "kept": kept, "acs": mean });
    if let Some(views) = snap.views_with_targets() {
        let (psnr, ssim) = evaluate_views(&kept_scene, kept_field.as_ref(), &views, &snap.settings)?;
        body["psnr"] = json_number(psnr);
        body["ssim"] = json!(ssim);
        body["sqr"] = json!(sqr(kept, psnr.max(0.0), sqr_scale(n))?);
    }
    Ok(body)
}

/// JSON has no infinity; a perfect match is reported as the string "inf".
fn json_number(v: f64) -> serde_json::Value {
    if v.is_finite() { json!(v) } else { json!("inf") }
}

async fn not_found() -> ApiError {
    ApiError(StatusCode::NOT_FOUND, "no such route".into())
}

fn is_local_origin(origin: &HeaderValue) -> bool {
    let Ok(s) = origin.to_str() else { return false };
    let rest = s.strip_prefix("http://").or_else(|| s.strip_prefix("https://")).unwrap_or("");
    let host = match rest.strip_prefix('[') {
        Some(v6) => v6.split(']').next().map(|h| if h == "::1" { "[::1]" } else { "" }).unwrap_or(""),
        None => rest.split([':', '/']).next().unwrap_or(""),
    };
    matches!(host, "localhost" | "127.0.0.1" | "[::1]")
}

/// The service's routes with localhost-only CORS.
pub fn router(state: Arc<AppState>) -> Router {
    let cors = CorsLayer::new().allow_origin(AllowOrigin::predicate(|origin, _| is_local_origin(origin)));
    Router::new()
        .route("/api/info", get(info))
        .route("/api/render", get(render))
        .route("/api/metrics", get(metrics))
        .fallback(not_found)
        .layer(cors)
        .with_state(state)
}

/// Serve until the listener fails.
pub async fn serve(snapshot: Snapshot, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("serving {} splats on http://{}", snapshot.scene.len(), listener.local_addr()?);
    axum::serve(listener, router(AppState::new(snapshot))).await
}
