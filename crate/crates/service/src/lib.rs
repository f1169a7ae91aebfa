//! HTTP enrollment and verification service.
//!
//! Users enroll raw keydown/keyup traces of the fixed password. Once a user
//! has enough attempts, `train` fits one of the statistical detectors and sets
//! an acceptance threshold from leave-one-out self-scores. `verify` scores a
//! fresh attempt against that model.
//!
//! ```text
//! POST /api/users/{id}/enroll  {nonce, events}  -> {attempts}
//! POST /api/users/{id}/train   {detector}       -> {threshold}
//! POST /api/users/{id}/verify  {events}         -> {score, threshold, accepted, detector}
//! GET  /api/users                               -> [{id, attempts, trained}]
//! ```
//!
//! Errors come back as `{error_code, message}`.

pub mod error;
pub mod routes;
pub mod state;
pub mod store;
pub mod wire;

use std::future::Future;
use std::net::SocketAddr;
use std::sync::Arc;
use std::thread;

use tokio::net::TcpListener;
use tokio::sync::oneshot;

pub use error::{Result, ServiceError};
pub use routes::router;
pub use state::{calibrate, Service, ServiceConfig, DEFAULT_MIN_ENROLL};
pub use store::Store;

pub const DEFAULT_PORT: u16 = 8080;

/// Serves on an already bound listener until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    service: Arc<Service>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<()> {
    axum::serve(listener, router(service))
        .with_graceful_shutdown(shutdown)
        .await?;
    Ok(())
}

/// A server running on its own thread and runtime. Dropping it shuts the
/// server down and waits for the thread.
pub struct BackgroundServer {
    addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<thread::JoinHandle<Result<()>>>,
}

impl BackgroundServer {
    pub fn start(service: Arc<Service>, addr: SocketAddr) -> Result<Self> {
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()?;
        let listener = runtime.block_on(TcpListener::bind(addr))?;
        let addr = listener.local_addr()?;
        let (stop, stopped) = oneshot::channel::<()>();
        let thread = thread::spawn(move || {
            runtime.block_on(serve(listener, service, async {
                let _ = stopped.await;
            }))
        });
        Ok(Self {
            addr,
            stop: Some(stop),
            thread: Some(thread),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self, path: &str) -> String {
        format!("http://{}{path}", self.addr)
    }

    pub fn shutdown(mut self) -> Result<()> {
        self.stop_and_join()
    }

    fn stop_and_join(&mut self) -> Result<()> {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        match self.thread.take() {
            Some(t) => t
                .join()
                .map_err(|_| ServiceError::Server("thread panicked".into()))?,
            None => Ok(()),
        }
    }
}

impl Drop for BackgroundServer {
    fn drop(&mut self) {
        let _ = self.stop_and_join();
    }
}
