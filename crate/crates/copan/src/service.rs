//! HTTP and WebSocket front end: stored game analyses and a live session
//! that reports cost, danger and sente after every move.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use anyhow::Context;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use copan_core::cop::{compute_series, position_cost, EvalCache, SeriesOptions};
use copan_core::engine::{Engine, Query};
use copan_core::features::{extract_features, fit_points, FeatureParams, MIN_FIT_POINTS};
use copan_core::quality::{game_summary, QualityOptions};
use copan_core::report::{danger_level, render_chart, DangerMode};
use copan_core::sgf::{Board, Color, GameRecord, Move, Point, DEFAULT_KOMI, MAX_SIZE, MIN_SIZE};
use copan_core::{parse_sgf, BaselineFit, CopSeries, FeatureSet, Sente};
use futures::{SinkExt, StreamExt};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::services::ServeDir;

use crate::cli::{CliError, ServeArgs};

struct StoredGame {
    series: CopSeries,
    features: Result<FeatureSet, String>,
}

pub struct AppState {
    engine: Arc<dyn Engine>,
    visits: u32,
    cache: EvalCache,
    games: RwLock<HashMap<u64, Arc<StoredGame>>>,
    next_id: AtomicU64,
}

impl AppState {
    pub fn new(engine: Arc<dyn Engine>, visits: u32) -> Arc<Self> {
        Arc::new(AppState {
            engine,
            visits,
            cache: EvalCache::new(),
            games: RwLock::new(HashMap::new()),
            next_id: AtomicU64::new(1),
        })
    }

    fn game(&self, id: u64) -> Result<Arc<StoredGame>, ApiError> {
        let games = self.games.read().unwrap_or_else(|p| p.into_inner());
        games.get(&id).cloned().ok_or_else(|| ApiError(StatusCode::NOT_FOUND, format!("no game {id}")))
    }
}

#[derive(Debug)]
struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

pub fn router(state: Arc<AppState>, assets: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/games", post(create_game))
        .route("/games/:id/analysis", get(get_analysis))
        .route("/games/:id/features", get(get_features))
        .route("/games/:id/quality", get(get_quality))
        .route("/games/:id/chart", get(get_chart))
        .route("/live", get(live))
        .with_state(state);
    match assets {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

pub fn run(args: ServeArgs) -> Result<(), CliError> {
    let engine: Arc<dyn Engine> = Arc::new(args.engine.spawn()?);
    let state = AppState::new(engine, args.engine.visits);
    let app = router(state, args.assets.clone());
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Input(e.into()))?;
    runtime
        .block_on(async move {
            let listener = tokio::net::TcpListener::bind((args.host.as_str(), args.port))
                .await
                .with_context(|| format!("binding {}:{}", args.host, args.port))?;
            log::info!("listening on {}", listener.local_addr()?);
            axum::serve(listener, app).await.context("serving")
        })
        .map_err(CliError::Input)
}

async fn create_game(State(state): State<Arc<AppState>>, body: String) -> Result<impl IntoResponse, ApiError> {
    let record = parse_sgf(&body).map_err(|e| ApiError(StatusCode::BAD_REQUEST, e.to_string()))?;
    let worker = state.clone();
    let series: CopSeries = tokio::task::spawn_blocking(move || {
        let options = SeriesOptions { include_terminal: true, cache: Some(&worker.cache) };
        compute_series(&record, worker.engine.as_ref(), worker.visits, options)
    })
    .await
    .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
    .map_err(|e| ApiError(StatusCode::BAD_GATEWAY, format!("{:#}", anyhow::Error::from(e))))?;

    let features = extract_features(&series, &FeatureParams::default()).map_err(|e| e.to_string());
    let id = state.next_id.fetch_add(1, Ordering::SeqCst);
    let positions = series.len();
    state.games.write().unwrap_or_else(|p| p.into_inner()).insert(id, Arc::new(StoredGame { series, features }));
    Ok((StatusCode::CREATED, Json(json!({ "id": id, "positions": positions }))))
}

async fn get_analysis(State(state): State<Arc<AppState>>, Path(id): Path<u64>) -> Result<Response, ApiError> {
    Ok(Json(state.game(id)?.series.clone()).into_response())
}

fn features_of(game: &StoredGame) -> Result<&FeatureSet, ApiError> {
    game.features.as_ref().map_err(|e| ApiError(StatusCode::UNPROCESSABLE_ENTITY, e.clone()))
}

async fn get_features(State(state): State<Arc<AppState>>, Path(id): Path<u64>) -> Result<Response, ApiError> {
    let game = state.game(id)?;
    Ok(Json(features_of(&game)?.clone()).into_response())
}

async fn get_quality(State(state): State<Arc<AppState>>, Path(id): Path<u64>) -> Result<Response, ApiError> {
    let game = state.game(id)?;
    let summary = game_summary(&game.series, QualityOptions::default())
        .map_err(|e| ApiError(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
    Ok(Json(summary.report()).into_response())
}

async fn get_chart(State(state): State<Arc<AppState>>, Path(id): Path<u64>) -> Result<Response, ApiError> {
    let game = state.game(id)?;
    let features = features_of(&game)?;
    let chart = render_chart(&game.series, &features.baseline, &features.segments, &features.stages);
    Ok(Json(chart.0).into_response())
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
enum LiveRequest {
    Move { color: Color, vertex: String },
    Reset { board_size: u8, komi: f64 },
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct LiveUpdate {
    pub index: usize,
    pub cost: f64,
    pub danger_level: u8,
    pub sente: Sente,
}

/// Baseline assumed until a live game has enough positions to fit its own.
fn prior_baseline() -> BaselineFit {
    BaselineFit { slope: -0.05, intercept: 12.0, residual_scale: 1.0, inlier_count: 0, inliers: Vec::new() }
}

struct LiveSession {
    record: GameRecord,
    board: Board,
    costs: Vec<(usize, f64)>,
}

impl LiveSession {
    fn new(board_size: u8, komi: f64) -> Self {
        LiveSession {
            record: GameRecord { board_size, komi, ..Default::default() },
            board: Board::new(board_size),
            costs: Vec::new(),
        }
    }

    fn play(&mut self, color: Color, vertex: &str) -> Result<usize, String> {
        let expected = self.record.side_to_move(self.record.moves.len());
        if !self.record.moves.is_empty() && color != expected {
            return Err(format!("{expected} is to move"));
        }
        let size = self.record.board_size;
        let point = if vertex.eq_ignore_ascii_case("pass") {
            None
        } else {
            let p = Point::from_vertex(vertex, size).ok_or_else(|| format!("bad vertex {vertex:?}"))?;
            if !self.board.is_empty_at(p) {
                return Err(format!("{vertex} is occupied"));
            }
            Some(p)
        };
        if let Some(p) = point {
            self.board.place(color, p);
        }
        self.record.moves.push(Move { color, point });
        Ok(self.record.moves.len())
    }

    fn update(&mut self, index: usize, cost: f64) -> LiveUpdate {
        self.costs.push((index, cost));
        let fit = if self.costs.len() >= MIN_FIT_POINTS {
            fit_points(&self.costs).unwrap_or_else(|_| prior_baseline())
        } else {
            prior_baseline()
        };
        let danger = danger_level(cost, &fit, index, DangerMode::Residual);
        let sente = if fit.residual(index, cost) > fit.default_tau() { Sente::Gote } else { Sente::Sente };
        LiveUpdate { index, cost, danger_level: danger.level, sente }
    }
}

async fn live(State(state): State<Arc<AppState>>, upgrade: WebSocketUpgrade) -> Response {
    upgrade.on_upgrade(move |socket| live_session(state, socket))
}

async fn live_session(state: Arc<AppState>, socket: WebSocket) {
    let (mut tx, mut rx) = socket.split();
    let mut session = LiveSession::new(19, DEFAULT_KOMI);
    while let Some(Ok(message)) = rx.next().await {
        let text = match message {
            Message::Text(text) => text,
            Message::Close(_) => break,
            _ => continue,
        };
        let reply = match serde_json::from_str::<LiveRequest>(&text) {
            Err(e) => json!({ "error": format!("bad message: {e}") }),
            Ok(LiveRequest::Reset { board_size, .. }) if !(MIN_SIZE..=MAX_SIZE).contains(&board_size) => {
                json!({ "error": format!("unsupported board size {board_size}") })
            }
            Ok(LiveRequest::Reset { board_size, komi }) => {
                session = LiveSession::new(board_size, komi);
                json!({ "reset": true })
            }
            Ok(LiveRequest::Move { color, vertex }) => match session.play(color, &vertex) {
                Err(e) => json!({ "error": e }),
                Ok(index) => {
                    let query = Query::for_position(&session.record, index, state.visits);
                    let worker = state.clone();
                    let evaluated = tokio::task::spawn_blocking(move || {
                        position_cost::<f64>(worker.engine.as_ref(), &query, Some(&worker.cache))
                    })
                    .await;
                    match evaluated {
                        Ok(Ok((_, _, cost))) => serde_json::to_value(session.update(index, cost))
                            .unwrap_or_else(|e| json!({ "error": e.to_string() })),
                        Ok(Err(e)) => json!({ "error": e.to_string() }),
                        Err(e) => json!({ "error": e.to_string() }),
                    }
                }
            },
        };
        if tx.send(Message::Text(reply.to_string())).await.is_err() {
            break;
        }
    }
}
