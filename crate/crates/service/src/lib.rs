//! HTTP API over the dropball store and session engine.
//!
//! Doctors manage patients, doctors and plans with bearer tokens; game
//! clients start sessions, stream selection events and finalize. See
//! [`api`] for the route table and [`config`] for settings.

pub mod api;
pub mod config;
pub mod error;
pub mod state;

pub use api::router;
pub use config::{ClockMode, ServiceConfig};
pub use error::ApiError;
pub use state::{AppState, EventAck, SessionTicket, StartupError};

use std::future::Future;
use std::net::SocketAddr;

/// Binds `config.listen` and serves until `shutdown` resolves. `on_bound`
/// receives the bound address (useful when listening on port 0).
pub async fn serve(
    config: ServiceConfig,
    on_bound: impl FnOnce(SocketAddr),
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<(), ServeError> {
    let state = AppState::new(config.clone())?;
    let listener = tokio::net::TcpListener::bind(config.listen).await?;
    let addr = listener.local_addr()?;
    tracing::info!(%addr, store = %config.store_root.display(), clock = ?config.clock, "listening");
    on_bound(addr);
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await?;
    Ok(())
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Startup(#[from] StartupError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
