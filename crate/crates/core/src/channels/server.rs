//! Lightweight HTTP server for rendered feeds.
//!
//! `GET /<uid>.atom` answers 200 with the current snapshot bytes, or 404 when
//! no such feed exists. Snapshots are immutable `Arc`s swapped in by the
//! owner, so a request never observes a half-written document.

use std::collections::HashMap;
use std::io;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use tokio::net::TcpListener;
use tokio::sync::oneshot;

pub const FEED_SUFFIX: &str = ".atom";

#[derive(Debug, Default)]
pub struct FeedSlot {
    bytes: RwLock<Arc<Vec<u8>>>,
    queries: AtomicU64,
    bytes_served: AtomicU64,
}

impl FeedSlot {
    pub fn publish(&self, bytes: Vec<u8>) {
        *self.bytes.write().expect("feed slot poisoned") = Arc::new(bytes);
    }

    pub fn snapshot(&self) -> Arc<Vec<u8>> {
        self.bytes.read().expect("feed slot poisoned").clone()
    }

    /// (queries answered, bytes answered)
    pub fn served(&self) -> (u64, u64) {
        (self.queries.load(Ordering::Relaxed), self.bytes_served.load(Ordering::Relaxed))
    }
}

/// In-memory feeds. The uid set is fixed at construction so lookups never
/// take a write lock.
#[derive(Debug, Default)]
pub struct FeedBoard {
    slots: HashMap<String, Arc<FeedSlot>>,
}

impl FeedBoard {
    pub fn new<I: IntoIterator<Item = (String, Vec<u8>)>>(feeds: I) -> Self {
        let slots = feeds
            .into_iter()
            .map(|(uid, bytes)| {
                let slot = FeedSlot::default();
                slot.publish(bytes);
                (uid, Arc::new(slot))
            })
            .collect();
        FeedBoard { slots }
    }

    pub fn slot(&self, uid: &str) -> Option<&Arc<FeedSlot>> {
        self.slots.get(uid)
    }
}

#[derive(Debug, Clone)]
pub enum FeedSource {
    Board(Arc<FeedBoard>),
    /// Serves `<dir>/<uid>.atom` files as written by feed channels.
    Directory(PathBuf),
}

async fn serve_feed(State(source): State<FeedSource>, Path(file): Path<String>) -> Response {
    let Some(uid) = file.strip_suffix(FEED_SUFFIX) else {
        return StatusCode::NOT_FOUND.into_response();
    };
    let body: Option<Vec<u8>> = match &source {
        FeedSource::Board(board) => board.slot(uid).map(|slot| {
            let snap = slot.snapshot();
            slot.queries.fetch_add(1, Ordering::Relaxed);
            slot.bytes_served.fetch_add(snap.len() as u64, Ordering::Relaxed);
            snap.as_ref().clone()
        }),
        FeedSource::Directory(dir) => {
            if file.contains('/') || file.starts_with('.') {
                None
            } else {
                tokio::fs::read(dir.join(&file)).await.ok()
            }
        }
    };
    match body {
        Some(bytes) => ([(header::CONTENT_TYPE, "application/atom+xml")], bytes).into_response(),
        None => StatusCode::NOT_FOUND.into_response(),
    }
}

pub fn router(source: FeedSource) -> Router {
    Router::new().route("/{file}", get(serve_feed)).with_state(source)
}

/// A running server on the current tokio runtime.
pub struct FeedServer {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    task: tokio::task::JoinHandle<()>,
}

impl FeedServer {
    pub async fn bind(addr: SocketAddr, source: FeedSource) -> io::Result<FeedServer> {
        let listener = TcpListener::bind(addr).await?;
        let addr = listener.local_addr()?;
        let (tx, rx) = oneshot::channel::<()>();
        let app = router(source);
        let task = tokio::spawn(async move {
            let serve = axum::serve(listener, app).with_graceful_shutdown(async {
                let _ = rx.await;
            });
            if let Err(e) = serve.await {
                log::error!("feed server stopped: {e}");
            }
        });
        Ok(FeedServer { addr, shutdown: Some(tx), task })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn feed_url(&self, uid: &str) -> String {
        format!("http://{}/{uid}{FEED_SUFFIX}", self.addr)
    }

    pub async fn stop(mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        let _ = (&mut self.task).await;
    }
}

/// Owns a small runtime on a background thread, for synchronous callers.
pub struct BackgroundFeedServer {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl BackgroundFeedServer {
    pub fn start(addr: SocketAddr, source: FeedSource) -> io::Result<BackgroundFeedServer> {
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()?;
        let server = rt.block_on(FeedServer::bind(addr, source))?;
        let addr = server.addr();
        let (tx, rx) = oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            rt.block_on(async move {
                let _ = rx.await;
                server.stop().await;
            });
        });
        Ok(BackgroundFeedServer { addr, shutdown: Some(tx), thread: Some(thread) })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn feed_url(&self, uid: &str) -> String {
        format!("http://{}/{uid}{FEED_SUFFIX}", self.addr)
    }
}

impl Drop for BackgroundFeedServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}
