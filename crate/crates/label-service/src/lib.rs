//! HTTP service that shows pending segment-pair queries to a human and feeds
//! their verdicts back to a blocked trainer.
//!
//! There is no authentication; bind it to a loopback address.

mod board;
mod http;
mod render;

pub use board::{QueryTicket, StatusView, TicketStatus};
pub use http::parse_label;
pub use render::{serialize_segment, RenderDocument};

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::JoinHandle;
use std::time::Duration;

use prefrl_core::buffers::SegmentPair;
use prefrl_core::query::{OracleVerdict, Overseer, SessionContext};
use prefrl_core::{Error, Result, Scalar};

use board::{now_ms, Board};

pub(crate) struct Shared {
    board: Mutex<Board>,
    verdicts: Sender<(usize, OracleVerdict)>,
}

impl Shared {
    fn board(&self) -> MutexGuard<'_, Board> {
        self.board.lock().unwrap_or_else(|p| p.into_inner())
    }
}

/// Running HTTP server. Dropping it stops the server.
pub struct LabelService {
    address: SocketAddr,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl LabelService {
    /// Binds `address` (port 0 picks a free port) and serves on a background thread.
    /// Returns the service handle and the overseer the trainer should label with.
    pub fn start(address: &str, static_dir: Option<PathBuf>) -> Result<(LabelService, HumanOverseer)> {
        let listener = std::net::TcpListener::bind(address)?;
        listener.set_nonblocking(true)?;
        let bound = listener.local_addr()?;
        let (tx, rx) = mpsc::channel();
        let shared = Arc::new(Shared {
            board: Mutex::new(Board::default()),
            verdicts: tx,
        });
        let runtime = tokio::runtime::Builder::new_current_thread().enable_io().build()?;
        let app = http::router(shared.clone(), static_dir);
        let (stop_tx, stop_rx) = tokio::sync::oneshot::channel::<()>();
        let thread = std::thread::Builder::new().name("label-service".into()).spawn(move || {
            runtime.block_on(async move {
                let listener = match tokio::net::TcpListener::from_std(listener) {
                    Ok(l) => l,
                    Err(_) => return,
                };
                let _ = axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = stop_rx.await;
                    })
                    .await;
            });
        })?;
        let service = LabelService {
            address: bound,
            shutdown: Some(stop_tx),
            thread: Some(thread),
        };
        let overseer = HumanOverseer {
            shared,
            verdicts: rx,
            next_ticket: 0,
            timeout: None,
        };
        Ok((service, overseer))
    }

    pub fn address(&self) -> SocketAddr {
        self.address
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.address)
    }

    pub fn stop(mut self) {
        self.shutdown_now();
    }

    fn shutdown_now(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for LabelService {
    fn drop(&mut self) {
        self.shutdown_now();
    }
}

/// Overseer that publishes each session as tickets and blocks until all are resolved.
pub struct HumanOverseer {
    shared: Arc<Shared>,
    verdicts: Receiver<(usize, OracleVerdict)>,
    next_ticket: u64,
    timeout: Option<Duration>,
}

impl HumanOverseer {
    /// Gives up on a session after `timeout`. Without one the trainer waits indefinitely.
    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = Some(timeout);
        self
    }

    /// Marks the run as complete in `/status`.
    pub fn finish(&self) {
        let mut board = self.shared.board();
        board.finished = true;
        board.active_session = None;
    }

    pub fn status(&self) -> StatusView {
        self.shared.board().status()
    }

    fn receive(&self) -> Result<(usize, OracleVerdict)> {
        let gone = || Error::Overseer("label service stopped".into());
        match self.timeout {
            None => self.verdicts.recv().map_err(|_| gone()),
            Some(t) => self.verdicts.recv_timeout(t).map_err(|e| match e {
                RecvTimeoutError::Timeout => Error::Overseer(format!("no verdicts within {t:?}")),
                RecvTimeoutError::Disconnected => gone(),
            }),
        }
    }
}

impl<T: Scalar> Overseer<T> for HumanOverseer {
    fn label(&mut self, pairs: &[SegmentPair<T>], context: &SessionContext) -> Result<Vec<OracleVerdict>> {
        {
            let mut board = self.shared.board();
            board.env = context.env_name.clone();
            board.env_step = context.env_step;
            board.feedback_used = context.feedback_used;
            board.feedback_total = context.feedback_total;
            board.active_session = Some(context.session);
            for (slot, pair) in pairs.iter().enumerate() {
                let id = format!("q{}", self.next_ticket);
                self.next_ticket += 1;
                board.tickets.push(QueryTicket {
                    id,
                    session: context.session,
                    created_at: now_ms(),
                    status: TicketStatus::Pending,
                    segment_0: serialize_segment(&pair.segment_0, &context.env_name),
                    segment_1: serialize_segment(&pair.segment_1, &context.env_name),
                    slot,
                });
            }
        }
        let mut verdicts: Vec<Option<OracleVerdict>> = vec![None; pairs.len()];
        let mut open = pairs.len();
        while open > 0 {
            let (slot, verdict) = self.receive()?;
            match verdicts.get_mut(slot) {
                Some(v @ None) => {
                    *v = Some(verdict);
                    open -= 1;
                }
                _ => return Err(Error::Overseer(format!("unexpected verdict for slot {slot}"))),
            }
        }
        let verdicts: Vec<OracleVerdict> = verdicts.into_iter().flatten().collect();
        let mut board = self.shared.board();
        board.feedback_used += verdicts.iter().filter(|v| v.label().is_some()).count();
        board.active_session = None;
        Ok(verdicts)
    }
}
