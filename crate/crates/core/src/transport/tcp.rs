use super::mailbox::Mailbox;
use super::{
    check_dest, Communicator, Envelope, RankId, Result, SendHandle, Source, Tag, TransportError,
    DEFAULT_TIMEOUT, TAG_HELLO,
};
use std::io::{ErrorKind, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc::{channel, Sender};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

/// Source, dest, tag and payload length, each a big-endian u32.
pub const FRAME_HEADER_BYTES: usize = 16;

/// Serializes one frame: a 4-byte big-endian length of everything that
/// follows, the 16-byte header, then the payload.
pub fn encode_frame(env: &Envelope) -> Vec<u8> {
    let body = FRAME_HEADER_BYTES + env.payload.len();
    let mut out = Vec::with_capacity(4 + body);
    out.extend_from_slice(&(body as u32).to_be_bytes());
    for field in [
        env.source as u32,
        env.dest as u32,
        env.tag,
        env.payload.len() as u32,
    ] {
        out.extend_from_slice(&field.to_be_bytes());
    }
    out.extend_from_slice(&env.payload);
    out
}

fn be_u32(b: &[u8]) -> u32 {
    u32::from_be_bytes(b.try_into().expect("4 bytes"))
}

fn decode_body(body: &[u8]) -> Result<Envelope> {
    if body.len() < FRAME_HEADER_BYTES {
        return Err(TransportError::Malformed(format!(
            "frame body of {} bytes",
            body.len()
        )));
    }
    let len = be_u32(&body[12..16]) as usize;
    if len != body.len() - FRAME_HEADER_BYTES {
        return Err(TransportError::Malformed(format!(
            "payload length {len} disagrees with frame length {}",
            body.len()
        )));
    }
    Ok(Envelope {
        source: be_u32(&body[0..4]) as RankId,
        dest: be_u32(&body[4..8]) as RankId,
        tag: be_u32(&body[8..12]),
        payload: body[FRAME_HEADER_BYTES..].to_vec(),
    })
}

/// Parses one complete frame produced by [`encode_frame`].
pub fn decode_frame(bytes: &[u8]) -> Result<Envelope> {
    if bytes.len() < 4 || be_u32(&bytes[..4]) as usize != bytes.len() - 4 {
        return Err(TransportError::Malformed("bad length prefix".into()));
    }
    decode_body(&bytes[4..])
}

/// Reads the next frame; `None` on a clean end of stream.
fn read_frame(stream: &mut impl Read) -> Result<Option<Envelope>> {
    let mut prefix = [0u8; 4];
    match stream.read_exact(&mut prefix) {
        Ok(()) => {}
        Err(e) if e.kind() == ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let mut body = vec![0u8; u32::from_be_bytes(prefix) as usize];
    stream.read_exact(&mut body)?;
    decode_body(&body).map(Some)
}

struct WriteJob {
    frame: Vec<u8>,
    done: Sender<Result<()>>,
}

struct Peer {
    writer: Option<Sender<WriteJob>>,
    writer_thread: Option<JoinHandle<()>>,
    stream: TcpStream,
}

/// Endpoint that talks to every peer over its own TCP connection.
///
/// The lower rank of each pair dials and introduces itself with a hello
/// frame. Every connection has a reader thread feeding the mailbox and a
/// writer thread that drains the send queue, so sends never block.
pub struct TcpEndpoint {
    rank: RankId,
    size: usize,
    peers: Vec<Option<Peer>>,
    mailbox: Mailbox,
}

impl std::fmt::Debug for TcpEndpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TcpEndpoint")
            .field("rank", &self.rank)
            .field("size", &self.size)
            .finish()
    }
}

/// Parses a comma-separated `host:port` list.
pub fn parse_addresses(list: &str) -> Result<Vec<SocketAddr>> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.to_socket_addrs()?
                .next()
                .ok_or_else(|| TransportError::Malformed(format!("address `{s}` did not resolve")))
        })
        .collect()
}

fn dial(addr: SocketAddr, rank: RankId, deadline: Instant) -> Result<TcpStream> {
    loop {
        let left = deadline.saturating_duration_since(Instant::now());
        if left.is_zero() {
            return Err(TransportError::PeerUnreachable {
                rank,
                reason: format!("no answer from {addr}"),
            });
        }
        match TcpStream::connect_timeout(&addr, left) {
            Ok(s) => return Ok(s),
            Err(e) if matches!(e.kind(), ErrorKind::ConnectionRefused | ErrorKind::TimedOut) => {
                std::thread::sleep(Duration::from_millis(20));
            }
            Err(e) => {
                return Err(TransportError::PeerUnreachable {
                    rank,
                    reason: e.to_string(),
                })
            }
        }
    }
}

fn accept(listener: &TcpListener, deadline: Instant) -> Result<TcpStream> {
    listener.set_nonblocking(true)?;
    loop {
        match listener.accept() {
            Ok((s, _)) => {
                s.set_nonblocking(false)?;
                return Ok(s);
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => {
                if Instant::now() >= deadline {
                    return Err(TransportError::Timeout(DEFAULT_TIMEOUT));
                }
                std::thread::sleep(Duration::from_millis(5));
            }
            Err(e) => return Err(e.into()),
        }
    }
}

impl TcpEndpoint {
    /// Binds `addrs[rank]` and connects to every other rank.
    pub fn connect(rank: RankId, addrs: &[SocketAddr], setup_timeout: Duration) -> Result<Self> {
        let listener = TcpListener::bind(addrs[rank])?;
        Self::with_listener(rank, listener, addrs, setup_timeout)
    }

    /// Like [`connect`](Self::connect) with an already bound listener.
    pub fn with_listener(
        rank: RankId,
        listener: TcpListener,
        addrs: &[SocketAddr],
        setup_timeout: Duration,
    ) -> Result<Self> {
        let size = addrs.len();
        if rank >= size {
            return Err(TransportError::InvalidRank { rank, size });
        }
        let deadline = Instant::now() + setup_timeout;
        let mut streams: Vec<Option<TcpStream>> = (0..size).map(|_| None).collect();

        for (peer, &addr) in addrs.iter().enumerate().skip(rank + 1) {
            let mut s = dial(addr, peer, deadline)?;
            let hello = Envelope {
                source: rank,
                dest: peer,
                tag: TAG_HELLO,
                payload: Vec::new(),
            };
            s.write_all(&encode_frame(&hello))?;
            streams[peer] = Some(s);
        }
        for _ in 0..rank {
            let mut s = accept(&listener, deadline)?;
            s.set_read_timeout(Some(
                deadline
                    .saturating_duration_since(Instant::now())
                    .max(Duration::from_millis(1)),
            ))?;
            let hello = read_frame(&mut s)?.ok_or_else(|| {
                TransportError::Malformed("connection closed before hello".into())
            })?;
            s.set_read_timeout(None)?;
            let from = hello.source;
            if hello.tag != TAG_HELLO
                || hello.dest != rank
                || from >= rank
                || streams[from].is_some()
            {
                return Err(TransportError::Malformed(format!(
                    "unexpected hello {hello:?}"
                )));
            }
            streams[from] = Some(s);
        }

        let (tx, rx) = channel();
        let mut peers = Vec::with_capacity(size);
        for (peer, stream) in streams.into_iter().enumerate() {
            let Some(stream) = stream else {
                peers.push(None);
                continue;
            };
            stream.set_nodelay(true)?;
            let mut reader = stream.try_clone()?;
            let inbox = tx.clone();
            std::thread::spawn(move || loop {
                match read_frame(&mut reader) {
                    Ok(Some(env)) if env.source == peer && env.dest == rank => {
                        if inbox.send(env).is_err() {
                            break;
                        }
                    }
                    Ok(Some(env)) => log::warn!("rank {rank}: dropping misaddressed frame {env:?}"),
                    Ok(None) => break,
                    Err(e) => {
                        log::debug!("rank {rank}: connection to {peer} ended: {e}");
                        break;
                    }
                }
            });
            let (wtx, wrx) = channel::<WriteJob>();
            let mut writer = stream.try_clone()?;
            let writer_thread = std::thread::spawn(move || {
                for job in wrx {
                    let r =
                        writer
                            .write_all(&job.frame)
                            .map_err(|e| TransportError::PeerUnreachable {
                                rank: peer,
                                reason: e.to_string(),
                            });
                    let _ = job.done.send(r);
                }
            });
            peers.push(Some(Peer {
                writer: Some(wtx),
                writer_thread: Some(writer_thread),
                stream,
            }));
        }
        Ok(Self {
            rank,
            size,
            peers,
            mailbox: Mailbox::new(rx, DEFAULT_TIMEOUT),
        })
    }
}

impl Communicator for TcpEndpoint {
    fn rank(&self) -> RankId {
        self.rank
    }

    fn size(&self) -> usize {
        self.size
    }

    fn send_nonblocking(&mut self, dest: RankId, tag: Tag, payload: Vec<u8>) -> Result<SendHandle> {
        check_dest(self.rank, self.size, dest)?;
        let env = Envelope {
            source: self.rank,
            dest,
            tag,
            payload,
        };
        let writer = self.peers[dest]
            .as_ref()
            .and_then(|p| p.writer.as_ref())
            .ok_or(TransportError::ClosedEndpoint)?;
        let (done, rx) = channel();
        writer
            .send(WriteJob {
                frame: encode_frame(&env),
                done,
            })
            .map_err(|_| TransportError::PeerUnreachable {
                rank: dest,
                reason: "writer stopped".into(),
            })?;
        Ok(SendHandle::pending(rx))
    }

    fn receive(&mut self, source: Source, tag: Tag) -> Result<Envelope> {
        self.mailbox.receive(source, tag)
    }

    fn timeout(&self) -> Duration {
        self.mailbox.timeout
    }

    fn set_timeout(&mut self, timeout: Duration) {
        self.mailbox.timeout = timeout;
    }
}

impl Drop for TcpEndpoint {
    fn drop(&mut self) {
        // Flush queued frames, then half-close so peers still read everything sent.
        for peer in self.peers.iter_mut().flatten() {
            peer.writer.take();
            if let Some(t) = peer.writer_thread.take() {
                let _ = t.join();
            }
            let _ = peer.stream.shutdown(Shutdown::Write);
        }
    }
}

/// Runs `f` once per rank, each on its own thread with a TCP endpoint over localhost.
pub fn run_tcp_local<T, F>(ranks: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut TcpEndpoint) -> T + Sync,
{
    let listeners: Vec<TcpListener> = (0..ranks)
        .map(|_| TcpListener::bind("127.0.0.1:0"))
        .collect::<std::io::Result<_>>()?;
    let addrs: Vec<SocketAddr> = listeners
        .iter()
        .map(|l| l.local_addr())
        .collect::<std::io::Result<_>>()?;
    std::thread::scope(|s| {
        let handles: Vec<_> = listeners
            .into_iter()
            .enumerate()
            .map(|(rank, l)| {
                let (f, addrs) = (&f, &addrs);
                s.spawn(move || {
                    TcpEndpoint::with_listener(rank, l, addrs, Duration::from_secs(30))
                        .map(|mut ep| f(&mut ep))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("rank panicked"))
            .collect()
    })
}
