//! HTTP API over the adaptive engine: item banks, live sessions and cohort
//! reports.
//!
//! Session state lives on the server; clients only ever see the question
//! statement, its options and the remaining time. Every session that ends
//! (finished, aborted or expired) is written to the attempt store exactly
//! once.

pub mod routes;
pub mod state;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use adaptest_core::bank::load_bank;
use adaptest_core::store::{import_csv, AttemptStore, CohortDataset};
use anyhow::Context;
use axum::extract::{Request, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use tower_http::cors::{Any, CorsLayer};

pub use routes::ApiError;
pub use state::{AppState, Clock, IdSource, ManualClock, SessionEntry, SystemClock};

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/banks", post(routes::create_bank))
        .route("/banks/{id}", get(routes::get_bank))
        .route("/sessions", post(routes::start_session))
        .route("/sessions/{id}/question", get(routes::get_question))
        .route("/sessions/{id}/answer", post(routes::submit_answer))
        .route("/sessions/{id}/abort", post(routes::abort_session))
        .route("/reports", get(routes::report))
        .layer(middleware::from_fn_with_state(state.clone(), require_token))
        .with_state(state)
}

/// Bearer-token check. Identity is not modelled; the token only gates access.
async fn require_token(State(state): State<Arc<AppState>>, request: Request, next: Next) -> Response {
    if let Some(expected) = &state.token {
        let given = request
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if given != Some(expected.as_str()) {
            return ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or wrong bearer token")
                .into_response();
        }
    }
    next.run(request).await
}

#[derive(Debug, Clone, clap::Args)]
pub struct ServeArgs {
    #[arg(long, env = "ADAPTEST_LISTEN", default_value = "127.0.0.1:8080")]
    pub listen: SocketAddr,
    /// Attempt store (JSON lines); in memory when omitted
    #[arg(long, env = "ADAPTEST_STORE")]
    pub store: Option<PathBuf>,
    /// Origin allowed by CORS, e.g. the web UI; any origin when omitted
    #[arg(long, env = "ADAPTEST_CORS_ORIGIN")]
    pub cors_origin: Option<String>,
    /// Bearer token clients must send
    #[arg(long, env = "ADAPTEST_TOKEN")]
    pub token: Option<String>,
    /// Bank files to load at startup
    #[arg(long = "bank")]
    pub banks: Vec<PathBuf>,
    /// Attempt CSV prefixes to serve in reports
    #[arg(long = "data")]
    pub data: Vec<PathBuf>,
    /// Seconds between sweeps for expired sessions
    #[arg(long, default_value_t = 5)]
    pub sweep_interval_s: u64,
}

pub fn build_state(args: &ServeArgs) -> anyhow::Result<AppState> {
    let store = match &args.store {
        Some(path) => AttemptStore::open(path).with_context(|| format!("opening {}", path.display()))?,
        None => AttemptStore::in_memory(),
    };
    let mut state = AppState::new(Arc::new(store), Arc::new(SystemClock));
    state.token = args.token.clone();
    for path in &args.banks {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        let bank = load_bank(&bytes).with_context(|| format!("loading {}", path.display()))?;
        anyhow::ensure!(state.add_bank(bank), "{}: duplicate bank id", path.display());
    }
    for prefix in &args.data {
        let p = prefix.to_string_lossy();
        let p = p.strip_suffix(".summary.csv").unwrap_or(&p);
        let summary = std::fs::read(format!("{p}.summary.csv")).with_context(|| format!("reading {p}.summary.csv"))?;
        let detail = std::fs::read(format!("{p}.detail.csv")).with_context(|| format!("reading {p}.detail.csv"))?;
        let records = import_csv(&summary, &detail).with_context(|| format!("importing {p}"))?;
        state.datasets.extend(CohortDataset::partition(records));
    }
    Ok(state)
}

pub async fn serve(args: ServeArgs) -> anyhow::Result<()> {
    let state = Arc::new(build_state(&args)?);
    let cors = match &args.cors_origin {
        Some(origin) => CorsLayer::new()
            .allow_origin(origin.parse::<HeaderValue>().context("invalid CORS origin")?)
            .allow_methods(Any)
            .allow_headers(Any),
        None => CorsLayer::permissive(),
    };
    let sweeper = state.clone();
    let interval = Duration::from_secs(args.sweep_interval_s.max(1));
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(interval);
        loop {
            tick.tick().await;
            let n = sweeper.sweep_expired();
            if n > 0 {
                tracing::info!(expired = n, "recorded expired sessions");
            }
        }
    });
    let app = router(state).layer(cors);
    let listener =
        tokio::net::TcpListener::bind(args.listen).await.with_context(|| format!("binding {}", args.listen))?;
    tracing::info!("listening on {}", args.listen);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

/// Runs [`serve`] on a fresh multi-threaded runtime.
pub fn serve_blocking(args: ServeArgs) -> anyhow::Result<()> {
    let _ = tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .try_init();
    tokio::runtime::Runtime::new()?.block_on(serve(args))
}
