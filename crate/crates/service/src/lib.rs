//! JSON API over the tweet store and the serving model.
//!
//! Everything lives under `/api/v1`. Read endpoints stamp the serving model
//! version into the body (`model_version`) and the `X-Model-Version` header.
//! Writes require the `X-Admin-Token` header.

pub mod api;
pub mod config;
pub mod state;

use std::sync::Arc;

pub use api::router;
pub use config::AppConfig;
pub use state::{AppState, JobState, RetrainJob};

/// Binds the configured address and serves until Ctrl-C.
pub async fn serve(config: AppConfig) -> std::io::Result<()> {
    let bind = config.bind.clone();
    let state = tokio::task::spawn_blocking(move || AppState::open(config))
        .await
        .map_err(std::io::Error::other)?
        .map_err(std::io::Error::other)?;
    let listener = tokio::net::TcpListener::bind(&bind).await?;
    log::info!("listening on http://{}/api/v1", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(state)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
            log::info!("shutting down");
        })
        .await
}
