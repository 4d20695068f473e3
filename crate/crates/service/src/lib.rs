//! HTTP/JSON facade over a single engine.
//!
//! Readers grab the current engine snapshot (an `Arc`) and work without
//! holding any lock. `POST /api/execute` runs the workload on a private copy
//! and publishes it atomically on success, so a failed workload leaves the
//! served state untouched. Only one execution may be in flight; others get
//! `409`.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Serialize;

use reenact_core::audit::TransactionSummary;
use reenact_core::engine::RunSummary;
use reenact_core::error::Position;
use reenact_core::provenance::{debug_view, provenance_graph, DebugOptions};
use reenact_core::storage::{RowId, Scn, TxnId};
use reenact_core::whatif::{run_whatif, WhatIfScenario};
use reenact_core::{Engine, Error};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ApiError {
    pub http_status: u16,
    pub code: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub position: Option<Position>,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> ApiError {
        ApiError {
            http_status: status.as_u16(),
            code: code.into(),
            message: message.into(),
            position: None,
        }
    }

    fn bad_request(message: impl Into<String>) -> ApiError {
        ApiError::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    fn busy() -> ApiError {
        ApiError::new(
            StatusCode::CONFLICT,
            "execution_in_progress",
            "another workload is being executed",
        )
    }
}

/// HTTP status of an engine error.
pub fn status_of(e: &Error) -> StatusCode {
    match e.code() {
        "txn_not_found" | "version_not_found" => StatusCode::NOT_FOUND,
        "io_error" => StatusCode::INTERNAL_SERVER_ERROR,
        _ => StatusCode::BAD_REQUEST,
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> ApiError {
        ApiError {
            http_status: status_of(&e).as_u16(),
            code: e.code().into(),
            message: e.to_string(),
            position: e.position(),
        }
    }
}

impl From<QueryRejection> for ApiError {
    fn from(r: QueryRejection) -> ApiError {
        ApiError::bad_request(r.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.http_status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

/// Shared service state.
#[derive(Clone)]
pub struct AppState {
    engine: Arc<RwLock<Arc<Engine>>>,
    executing: Arc<tokio::sync::Mutex<()>>,
}

/// Held while a workload executes; dropping it admits the next one.
pub struct ExecutionGuard(#[allow(dead_code)] tokio::sync::OwnedMutexGuard<()>);

impl AppState {
    pub fn new(engine: Engine) -> AppState {
        AppState {
            engine: Arc::new(RwLock::new(Arc::new(engine))),
            executing: Arc::new(tokio::sync::Mutex::new(())),
        }
    }

    /// The currently published engine state.
    pub fn engine(&self) -> Arc<Engine> {
        self.engine.read().unwrap_or_else(|p| p.into_inner()).clone()
    }

    /// Claims the single execution slot, or `None` if it is taken.
    pub fn try_begin_execution(&self) -> Option<ExecutionGuard> {
        self.executing.clone().try_lock_owned().ok().map(ExecutionGuard)
    }

    fn publish(&self, engine: Engine) {
        *self.engine.write().unwrap_or_else(|p| p.into_inner()) = Arc::new(engine);
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/history", get(history))
        .route("/api/transactions/{xid}", get(transaction))
        .route("/api/transactions/{xid}/debug", get(debug))
        .route("/api/transactions/{xid}/provenance", get(provenance))
        .route("/api/transactions/{xid}/whatif", post(whatif))
        .route("/api/execute", post(execute))
        .with_state(state)
}

/// Serves `engine` on `addr` until the process ends.
pub async fn serve(engine: Engine, addr: SocketAddr) -> std::io::Result<()> {
    serve_on(tokio::net::TcpListener::bind(addr).await?, engine).await
}

pub async fn serve_on(listener: tokio::net::TcpListener, engine: Engine) -> std::io::Result<()> {
    axum::serve(listener, router(AppState::new(engine))).await
}

/// Accepts `T2`, `t2` or `2`.
pub fn parse_xid(s: &str) -> Result<TxnId, ApiError> {
    let digits = s.strip_prefix(['T', 't']).unwrap_or(s);
    digits
        .parse()
        .map(TxnId)
        .map_err(|_| ApiError::bad_request(format!("invalid transaction id '{s}'")))
}

fn param<T: std::str::FromStr>(q: &BTreeMap<String, String>, key: &str) -> Result<Option<T>, ApiError> {
    match q.get(key).map(|s| s.trim()).filter(|s| !s.is_empty()) {
        None => Ok(None),
        Some(v) => v
            .parse()
            .map(Some)
            .map_err(|_| ApiError::bad_request(format!("invalid value '{v}' for '{key}'"))),
    }
}

fn flag(q: &BTreeMap<String, String>, key: &str) -> Result<bool, ApiError> {
    match q.get(key).map(|s| s.as_str()) {
        None | Some("false") | Some("0") => Ok(false),
        Some("") | Some("true") | Some("1") => Ok(true),
        Some(v) => Err(ApiError::bad_request(format!("invalid value '{v}' for '{key}'"))),
    }
}

type Params = Result<Query<BTreeMap<String, String>>, QueryRejection>;

async fn history(State(st): State<AppState>, q: Params) -> ApiResult<Vec<TransactionSummary>> {
    let Query(q) = q?;
    let from: Option<u64> = param(&q, "from")?;
    let to: Option<u64> = param(&q, "to")?;
    let range = match (from, to) {
        (None, None) => None,
        (f, t) => Some((Scn(f.unwrap_or(0)), Scn(t.unwrap_or(u64::MAX)))),
    };
    Ok(Json(st.engine().log().list_transactions(range)?))
}

async fn transaction(State(st): State<AppState>, Path(xid): Path<String>) -> ApiResult<TransactionSummary> {
    Ok(Json(st.engine().log().get_transaction(parse_xid(&xid)?)?))
}

async fn debug(State(st): State<AppState>, Path(xid): Path<String>, q: Params) -> Result<Response, ApiError> {
    let Query(q) = q?;
    let xid = parse_xid(&xid)?;
    let opts = DebugOptions {
        show_unaffected: flag(&q, "all")?,
        tables: q.get("tables").filter(|s| !s.is_empty()).map(|s| {
            s.split(',').map(|t| t.trim().to_string()).filter(|t| !t.is_empty()).collect()
        }),
    };
    let engine = st.engine();
    let view = blocking(move || debug_view(&engine, xid, &opts)).await?;
    Ok(Json(view).into_response())
}

async fn provenance(State(st): State<AppState>, Path(xid): Path<String>, q: Params) -> Result<Response, ApiError> {
    let Query(q) = q?;
    let xid = parse_xid(&xid)?;
    let table = q
        .get("table")
        .filter(|s| !s.is_empty())
        .cloned()
        .ok_or_else(|| ApiError::bad_request("missing parameter 'table'"))?;
    let row: u64 = param(&q, "row")?.ok_or_else(|| ApiError::bad_request("missing parameter 'row'"))?;
    let stmt: Option<u32> = param(&q, "stmt")?;
    let engine = st.engine();
    let graph = blocking(move || provenance_graph(&engine, xid, &table, RowId(row), stmt)).await?;
    Ok(Json(graph).into_response())
}

async fn whatif(State(st): State<AppState>, Path(xid): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let xid = parse_xid(&xid)?;
    let mut doc: serde_json::Value =
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(format!("invalid JSON: {e}")))?;
    let obj = doc
        .as_object_mut()
        .ok_or_else(|| ApiError::from(Error::InvalidScenario("expected a JSON object".into())))?;
    match obj.get("xid") {
        None => {
            obj.insert("xid".into(), xid.0.into());
        }
        Some(v) if v.as_u64() == Some(xid.0) => {}
        Some(v) => {
            return Err(Error::InvalidScenario(format!("body xid {v} does not match path transaction {xid}")).into())
        }
    }
    let sc: WhatIfScenario = serde_json::from_value(doc).map_err(|e| Error::InvalidScenario(e.to_string()))?;
    let engine = st.engine();
    let result = blocking(move || run_whatif(&engine, &sc)).await?;
    Ok(Json(result).into_response())
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ExecuteResponse {
    pub summary: RunSummary,
    /// Summaries of the transactions the workload started.
    pub transactions: Vec<TransactionSummary>,
}

async fn execute(State(st): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let guard = st.try_begin_execution().ok_or_else(ApiError::busy)?;
    let text = String::from_utf8(body.to_vec()).map_err(|_| ApiError::bad_request("workload is not UTF-8"))?;
    let mut engine = (*st.engine()).clone();
    let (engine, response) = blocking(move || {
        let summary = engine.run_workload_text(&text)?;
        let transactions = summary
            .transactions
            .iter()
            .map(|t| engine.log().get_transaction(t.xid))
            .collect::<reenact_core::Result<_>>()?;
        Ok((engine, ExecuteResponse { summary, transactions }))
    })
    .await?;
    st.publish(engine);
    drop(guard);
    Ok(Json(response).into_response())
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> reenact_core::Result<T> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
        .map_err(ApiError::from)
}
