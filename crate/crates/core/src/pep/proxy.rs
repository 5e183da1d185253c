//! TCP runner for [`PepSession`].

use std::future::Future;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use tokio::io::{AsyncRead, AsyncReadExt, AsyncWrite, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};

use crate::crypto::{PreSharedKey, Timestamp};
use crate::dialect::{Role, MAX_FRAME_PAYLOAD};

use super::alert::{emit_alert, AlertSink, LogSink};
use super::session::{Action, PepSession};
use super::{ConfigError, ProxyConfig};

pub trait Clock: Send + Sync {
    fn now(&self) -> Timestamp;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> Timestamp {
        let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        Timestamp(secs)
    }
}

/// Shared, read-only state for all connections of one proxy.
pub struct ProxyContext {
    pub config: ProxyConfig,
    pub psk: PreSharedKey,
    pub sink: Arc<dyn AlertSink>,
    pub clock: Arc<dyn Clock>,
    next_conn: AtomicU64,
}

impl ProxyContext {
    pub fn new(config: ProxyConfig, psk: PreSharedKey, sink: Arc<dyn AlertSink>, clock: Arc<dyn Clock>) -> Self {
        ProxyContext { config, psk, sink, clock, next_conn: AtomicU64::new(1) }
    }

    fn new_session(&self) -> PepSession {
        let id = self.next_conn.fetch_add(1, Ordering::Relaxed);
        PepSession::new(
            id,
            self.config.role,
            &self.psk,
            self.config.policy.clone(),
            self.config.d1_window_grace,
            self.clock.now(),
        )
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ProxyError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot listen on {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Validates `config`, binds the listen endpoint and serves until Ctrl-C.
/// Alerts go to stderr.
pub async fn run_proxy(config: ProxyConfig) -> Result<(), ProxyError> {
    let psk = config.validate()?;
    let listener = TcpListener::bind(&config.listen_endpoint)
        .await
        .map_err(|source| ProxyError::Bind { addr: config.listen_endpoint.clone(), source })?;
    log::info!("{} proxy listening on {}", config.role, listener.local_addr()?);
    let ctx = Arc::new(ProxyContext::new(config, psk, Arc::new(LogSink::new(std::io::stderr())), Arc::new(SystemClock)));
    serve(listener, ctx, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await
}

/// Accepts connections on `listener` until `shutdown` resolves.
///
/// The switch-side proxy accepts its switch and dials the peer proxy; the
/// controller-side proxy accepts the peer proxy and dials its controller.
pub async fn serve(
    listener: TcpListener,
    ctx: Arc<ProxyContext>,
    shutdown: impl Future<Output = ()>,
) -> Result<(), ProxyError> {
    tokio::pin!(shutdown);
    loop {
        tokio::select! {
            _ = &mut shutdown => return Ok(()),
            accepted = listener.accept() => {
                let (inbound, from) = accepted?;
                let ctx = ctx.clone();
                tokio::spawn(async move {
                    if let Err(e) = handle(inbound, ctx).await {
                        log::warn!("connection from {from} ended with error: {e}");
                    }
                });
            }
        }
    }
}

async fn handle(inbound: TcpStream, ctx: Arc<ProxyContext>) -> std::io::Result<()> {
    inbound.set_nodelay(true)?;
    let (local, peer) = match ctx.config.role {
        Role::SwitchSide => {
            let peer = TcpStream::connect(&ctx.config.peer_proxy_endpoint).await?;
            (inbound, peer)
        }
        Role::ControllerSide => {
            let device = TcpStream::connect(&ctx.config.local_device_endpoint).await?;
            (device, inbound)
        }
    };
    peer.set_nodelay(true)?;
    local.set_nodelay(true)?;
    let session = ctx.new_session();
    pump(session, local, peer, &*ctx.sink, &*ctx.clock).await
}

/// Moves bytes between `local` and `peer` through `session` until both
/// directions have ended or the session closes.
pub async fn pump<L, P>(
    mut session: PepSession,
    local: L,
    peer: P,
    sink: &dyn AlertSink,
    clock: &dyn Clock,
) -> std::io::Result<()>
where
    L: AsyncRead + AsyncWrite + Unpin,
    P: AsyncRead + AsyncWrite + Unpin,
{
    let (mut local_rd, mut local_wr) = tokio::io::split(local);
    let (mut peer_rd, mut peer_wr) = tokio::io::split(peer);
    let mut local_buf = vec![0u8; MAX_FRAME_PAYLOAD];
    let mut peer_buf = vec![0u8; MAX_FRAME_PAYLOAD];
    let (mut local_open, mut peer_open) = (true, true);
    while local_open || peer_open {
        let actions = tokio::select! {
            n = local_rd.read(&mut local_buf), if local_open => {
                match n? {
                    0 => {
                        local_open = false;
                        peer_wr.shutdown().await.ok();
                        continue;
                    }
                    n => session.on_local(&local_buf[..n], clock.now()),
                }
            }
            n = peer_rd.read(&mut peer_buf), if peer_open => {
                match n? {
                    0 => {
                        peer_open = false;
                        local_wr.shutdown().await.ok();
                        continue;
                    }
                    n => session.on_peer(&peer_buf[..n], clock.now()),
                }
            }
        };
        for action in actions {
            match action {
                Action::ToPeer(bytes) => peer_wr.write_all(&bytes).await?,
                Action::ToLocal(bytes) | Action::Notify(bytes) => local_wr.write_all(&bytes).await?,
                Action::Alert(event) => emit_alert(sink, &event),
                Action::Close => {
                    local_wr.shutdown().await.ok();
                    peer_wr.shutdown().await.ok();
                    return Ok(());
                }
            }
        }
    }
    Ok(())
}
