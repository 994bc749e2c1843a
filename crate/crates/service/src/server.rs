//! WebSocket streaming server.
//!
//! One std thread owns the [`Session`] and renders at a fixed tick rate.
//! Control messages from all clients are queued on a channel and drained once
//! per tick, so a burst of messages costs one render with the latest values.
//! Rendered frames are published on a watch channel: a client that falls
//! behind skips straight to the newest frame instead of building a backlog.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{mpsc, Arc};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use futures_util::{SinkExt, StreamExt};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{mpsc as tmpsc, watch};
use tokio_tungstenite::tungstenite::{Bytes, Message};

use crate::protocol::{ControlMessage, ServerMessage};
use crate::session::Session;

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub bind: String,
    pub fps: f64,
}

impl Default for ServeConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8765".into(),
            fps: 30.0,
        }
    }
}

#[derive(Debug, Default)]
pub struct ServerStats {
    pub frames_rendered: AtomicU64,
    pub messages_applied: AtomicU64,
    pub recalibrations: AtomicU64,
    pub clients: AtomicU64,
}

enum Command {
    Control {
        message: ControlMessage,
        reply: tmpsc::UnboundedSender<String>,
    },
    Shutdown,
}

pub struct ServerHandle {
    pub local_addr: SocketAddr,
    pub stats: Arc<ServerStats>,
    commands: mpsc::Sender<Command>,
    accept: tokio::task::JoinHandle<()>,
    render: Option<JoinHandle<()>>,
}

impl ServerHandle {
    /// Stops accepting clients and joins the render thread.
    pub async fn shutdown(mut self) {
        self.accept.abort();
        let _ = self.commands.send(Command::Shutdown);
        if let Some(t) = self.render.take() {
            let _ = tokio::task::spawn_blocking(move || t.join()).await;
        }
    }
}

fn render_loop(
    mut session: Session,
    commands: mpsc::Receiver<Command>,
    frames: watch::Sender<Option<Bytes>>,
    stats: Arc<ServerStats>,
    fps: f64,
) {
    let tick = Duration::from_secs_f64(1.0 / fps);
    loop {
        let deadline = Instant::now() + tick;
        let mut batch = Vec::new();
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            match commands.recv_timeout(left) {
                Ok(Command::Control { message, reply }) => batch.push((reply, message)),
                Ok(Command::Shutdown) | Err(mpsc::RecvTimeoutError::Disconnected) => return,
                Err(mpsc::RecvTimeoutError::Timeout) => break,
            }
        }
        let applied = batch.len();
        for (reply, detail) in session.apply_batch(batch) {
            let _ = reply.send(ServerMessage::Error { detail }.to_json());
        }
        stats.messages_applied.fetch_add(applied as u64, Ordering::Relaxed);
        stats.recalibrations.store(session.recalibrations(), Ordering::Relaxed);
        session.advance_playback();
        if !session.take_dirty() {
            continue;
        }
        match session.render_frame() {
            Ok(frame) => {
                frames.send_replace(Some(Bytes::from(frame.to_bytes())));
                stats.frames_rendered.fetch_add(1, Ordering::Relaxed);
            }
            Err(e) => log::error!("render failed: {e:#}"),
        }
    }
}

async fn client(
    stream: TcpStream,
    hello: String,
    commands: mpsc::Sender<Command>,
    mut frames: watch::Receiver<Option<Bytes>>,
) -> anyhow::Result<()> {
    let ws = tokio_tungstenite::accept_async(stream).await?;
    let (mut sink, mut source) = ws.split();
    sink.send(Message::text(hello)).await?;
    let (reply_tx, mut replies) = tmpsc::unbounded_channel::<String>();
    // Anything already rendered counts as new for this client.
    frames.mark_changed();
    loop {
        tokio::select! {
            incoming = source.next() => match incoming {
                Some(Ok(Message::Text(text))) => match ControlMessage::parse(&text) {
                    Ok(message) => {
                        if commands.send(Command::Control { message, reply: reply_tx.clone() }).is_err() {
                            break;
                        }
                    }
                    Err(e) => {
                        let detail = format!("malformed control message: {e}");
                        sink.send(Message::text(ServerMessage::Error { detail }.to_json())).await?;
                    }
                },
                Some(Ok(Message::Binary(_))) => {
                    let detail = "control messages must be JSON text".to_string();
                    sink.send(Message::text(ServerMessage::Error { detail }.to_json())).await?;
                }
                Some(Ok(Message::Close(_))) | None => break,
                Some(Ok(_)) => {}
                Some(Err(e)) => return Err(e.into()),
            },
            Some(reply) = replies.recv() => sink.send(Message::text(reply)).await?,
            changed = frames.changed() => {
                if changed.is_err() {
                    break;
                }
                let latest = frames.borrow_and_update().clone();
                if let Some(bytes) = latest {
                    sink.send(Message::Binary(bytes)).await?;
                }
            }
        }
    }
    Ok(())
}

/// Binds, starts the render thread and accepts clients in the background.
pub async fn serve(session: Session, config: ServeConfig) -> anyhow::Result<ServerHandle> {
    anyhow::ensure!(config.fps > 0.0 && config.fps.is_finite(), "fps must be positive");
    let listener = TcpListener::bind(&config.bind).await?;
    let local_addr = listener.local_addr()?;

    let r = session.renderer();
    let hello = ServerMessage::Hello {
        k: r.avatar.k(),
        names: r.avatar.names.clone(),
        view_cone_deg: r.profile.display.view_cone_deg,
        total_views: r.profile.display.total_views,
        mode: session.state().mode,
        stream_frames: session.state().playback.as_ref().map(|p| p.stream.len()),
    }
    .to_json();

    let stats = Arc::new(ServerStats::default());
    let (cmd_tx, cmd_rx) = mpsc::channel();
    let (frame_tx, frame_rx) = watch::channel(None);
    let render = {
        let stats = stats.clone();
        std::thread::Builder::new()
            .name("holoquilt-render".into())
            .spawn(move || render_loop(session, cmd_rx, frame_tx, stats, config.fps))?
    };

    let accept = {
        let stats = stats.clone();
        let cmd_tx = cmd_tx.clone();
        tokio::spawn(async move {
            loop {
                let (stream, peer) = match listener.accept().await {
                    Ok(c) => c,
                    Err(e) => {
                        log::warn!("accept failed: {e}");
                        continue;
                    }
                };
                stats.clients.fetch_add(1, Ordering::Relaxed);
                log::info!("client connected: {peer}");
                let (hello, cmd_tx, frames) = (hello.clone(), cmd_tx.clone(), frame_rx.clone());
                tokio::spawn(async move {
                    if let Err(e) = client(stream, hello, cmd_tx, frames).await {
                        log::info!("client {peer} dropped: {e}");
                    }
                });
            }
        })
    };

    log::info!("listening on ws://{local_addr}");
    Ok(ServerHandle {
        local_addr,
        stats,
        commands: cmd_tx,
        accept,
        render: Some(render),
    })
}
