//! Outsourced one-time key construction over a stream transport.
//!
//! Frame: `[magic 0x49484F52][version 0x01][be32 body length][body]`.
//!
//! Request body: `[be64 signer][be64 counter][mode]` followed, for partial
//! mode, by `k` big-endian `u16` indices. Response body: a status byte,
//! then an encoded [`EncryptedOneTimeKey`] on success or a UTF-8 message.
//!
//! The daemon holds only the distributable public key. Its answers are not
//! trusted for integrity: a wrong component makes verification reject.

use std::io::{self, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use inf_hors_core::backend::ReferencePublic;
use inf_hors_core::codec::{DecodeError, Reader};
use inf_hors_core::hors::{HorsParams, IndexVector};
use inf_hors_core::scheme::{
    construct_pk, construct_pk_partial, EncryptedOneTimeKey, PublicKey, SystemParams,
};

pub const MAGIC: u32 = 0x4948_4F52;
pub const VERSION: u8 = 0x01;
pub const FRAME_HEADER_LEN: usize = 9;
/// Largest request body: header fields plus `2^16` indices.
pub const MAX_REQUEST_BODY: usize = 17 + 2 * (1 << 16);
pub const MAX_RESPONSE_BODY: usize = 32 << 20;

const MODE_FULL: u8 = 0x00;
const MODE_PARTIAL: u8 = 0x01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Status {
    Ok = 0x00,
    Protocol = 0x01,
    Backend = 0x02,
}

#[derive(Debug, thiserror::Error)]
pub enum ProtocolError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("bad frame magic")]
    Magic,
    #[error("unsupported protocol version {0}")]
    Version(u8),
    #[error("frame body of {0} bytes exceeds the limit")]
    Oversized(usize),
    #[error("malformed body: {0}")]
    Malformed(#[from] DecodeError),
    #[error("server reported a protocol error: {0}")]
    RemoteProtocol(String),
    #[error("server reported a construction error: {0}")]
    RemoteBackend(String),
    #[error("response is for signer {signer:016x} counter {counter}, not the request")]
    Mismatch { signer: u64, counter: u64 },
}

/// Wraps `body` in a frame.
pub fn encode_frame(body: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(FRAME_HEADER_LEN + body.len());
    out.extend_from_slice(&MAGIC.to_be_bytes());
    out.push(VERSION);
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(body);
    out
}

/// Splits one complete frame held in `bytes`.
pub fn decode_frame(bytes: &[u8], limit: usize) -> Result<&[u8], ProtocolError> {
    let mut r = Reader::new(bytes);
    let len = parse_header(r.array()?, limit)?;
    let body = r.take(len)?;
    r.finish()?;
    Ok(body)
}

fn parse_header(h: [u8; FRAME_HEADER_LEN], limit: usize) -> Result<usize, ProtocolError> {
    if u32::from_be_bytes([h[0], h[1], h[2], h[3]]) != MAGIC {
        return Err(ProtocolError::Magic);
    }
    if h[4] != VERSION {
        return Err(ProtocolError::Version(h[4]));
    }
    let len = u32::from_be_bytes([h[5], h[6], h[7], h[8]]) as usize;
    if len > limit {
        return Err(ProtocolError::Oversized(len));
    }
    Ok(len)
}

/// Reads one frame body; `Ok(None)` on a clean end of stream.
pub fn read_frame<R: Read>(r: &mut R, limit: usize) -> Result<Option<Vec<u8>>, ProtocolError> {
    let mut h = [0u8; FRAME_HEADER_LEN];
    let mut got = 0;
    while got < h.len() {
        match r.read(&mut h[got..])? {
            0 if got == 0 => return Ok(None),
            0 => return Err(DecodeError::Truncated.into()),
            n => got += n,
        }
    }
    let len = parse_header(h, limit)?;
    let mut body = vec![0u8; len];
    r.read_exact(&mut body).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => ProtocolError::Malformed(DecodeError::Truncated),
        _ => e.into(),
    })?;
    Ok(Some(body))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConstructMode {
    Full,
    Partial(Vec<u16>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstructRequest {
    pub signer: u64,
    pub counter: u64,
    pub mode: ConstructMode,
}

impl ConstructRequest {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(17);
        out.extend_from_slice(&self.signer.to_be_bytes());
        out.extend_from_slice(&self.counter.to_be_bytes());
        match &self.mode {
            ConstructMode::Full => out.push(MODE_FULL),
            ConstructMode::Partial(idx) => {
                out.push(MODE_PARTIAL);
                for i in idx {
                    out.extend_from_slice(&i.to_be_bytes());
                }
            }
        }
        out
    }

    /// Partial requests must carry exactly `k` indices below `t`.
    pub fn from_bytes(params: &HorsParams, bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let signer = r.u64()?;
        let counter = r.u64()?;
        let mode = match r.u8()? {
            MODE_FULL => ConstructMode::Full,
            MODE_PARTIAL => {
                let mut idx = Vec::with_capacity(params.k());
                for _ in 0..params.k() {
                    let i = r.u16()?;
                    if usize::from(i) >= params.t() {
                        return Err(DecodeError::Invalid("index out of range"));
                    }
                    idx.push(i);
                }
                ConstructMode::Partial(idx)
            }
            _ => return Err(DecodeError::Invalid("mode")),
        };
        r.finish()?;
        Ok(ConstructRequest {
            signer,
            counter,
            mode,
        })
    }
}

/// Builds the response body for one request body.
pub fn handle_request(
    params: &SystemParams,
    pk: &PublicKey<ReferencePublic>,
    body: &[u8],
) -> Vec<u8> {
    let req = match ConstructRequest::from_bytes(&params.hors, body) {
        Ok(r) => r,
        Err(e) => return error_body(Status::Protocol, &e.to_string()),
    };
    let mut rng = rand::rngs::OsRng;
    let built = match &req.mode {
        ConstructMode::Full => construct_pk(params, pk, req.signer, req.counter, &mut rng),
        ConstructMode::Partial(idx) => IndexVector::new(&params.hors, idx.clone())
            .map_err(Into::into)
            .and_then(|iv| construct_pk_partial(pk, req.signer, req.counter, &iv, &mut rng)),
    };
    match built {
        Ok(otk) => {
            let mut out = vec![Status::Ok as u8];
            out.extend_from_slice(&otk.to_bytes());
            out
        }
        Err(e) => error_body(Status::Backend, &e.to_string()),
    }
}

fn error_body(status: Status, msg: &str) -> Vec<u8> {
    let mut out = vec![status as u8];
    out.extend_from_slice(msg.as_bytes());
    out
}

/// Interprets a response body for `req`.
pub fn parse_response(
    req: &ConstructRequest,
    body: &[u8],
) -> Result<EncryptedOneTimeKey, ProtocolError> {
    let (&status, rest) = body.split_first().ok_or(DecodeError::Truncated)?;
    match status {
        s if s == Status::Ok as u8 => {
            let otk = EncryptedOneTimeKey::from_bytes(rest)?;
            let shape_ok = match &req.mode {
                ConstructMode::Full => otk.is_full(),
                ConstructMode::Partial(idx) => {
                    !otk.is_full() && idx.iter().all(|&i| otk.component(i).is_some())
                }
            };
            if otk.signer() != req.signer || otk.counter() != req.counter || !shape_ok {
                return Err(ProtocolError::Mismatch {
                    signer: otk.signer(),
                    counter: otk.counter(),
                });
            }
            Ok(otk)
        }
        s if s == Status::Protocol as u8 => Err(ProtocolError::RemoteProtocol(
            String::from_utf8_lossy(rest).into_owned(),
        )),
        s if s == Status::Backend as u8 => Err(ProtocolError::RemoteBackend(
            String::from_utf8_lossy(rest).into_owned(),
        )),
        _ => Err(DecodeError::Invalid("status").into()),
    }
}

fn serve_connection(
    params: &SystemParams,
    pk: &PublicKey<ReferencePublic>,
    mut stream: TcpStream,
) -> Result<(), ProtocolError> {
    stream.set_read_timeout(Some(Duration::from_secs(30)))?;
    loop {
        let body = match read_frame(&mut stream, MAX_REQUEST_BODY) {
            Ok(Some(b)) => b,
            Ok(None) => return Ok(()),
            Err(ProtocolError::Io(e)) => return Err(e.into()),
            Err(e) => {
                // The stream position is unknown after a bad frame.
                let reply = error_body(Status::Protocol, &e.to_string());
                stream.write_all(&encode_frame(&reply))?;
                let _ = stream.shutdown(Shutdown::Both);
                return Err(e);
            }
        };
        let reply = handle_request(params, pk, &body);
        stream.write_all(&encode_frame(&reply))?;
    }
}

/// A bound constructor daemon.
pub struct Daemon {
    listener: TcpListener,
    params: SystemParams,
    pk: Arc<PublicKey<ReferencePublic>>,
}

impl Daemon {
    pub fn bind<A: ToSocketAddrs>(
        addr: A,
        params: SystemParams,
        pk: PublicKey<ReferencePublic>,
    ) -> io::Result<Self> {
        Ok(Daemon {
            listener: TcpListener::bind(addr)?,
            params,
            pk: Arc::new(pk),
        })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Serves until `stop` is set, one thread per connection.
    pub fn run(self, stop: Arc<AtomicBool>) {
        for conn in self.listener.incoming() {
            if stop.load(Ordering::SeqCst) {
                break;
            }
            let Ok(stream) = conn else { continue };
            let pk = self.pk.clone();
            let params = self.params;
            thread::spawn(move || {
                let _ = serve_connection(&params, &pk, stream);
            });
        }
    }

    /// Runs on a background thread until the handle is dropped.
    pub fn spawn(self) -> io::Result<DaemonHandle> {
        let addr = self.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let flag = stop.clone();
        let thread = thread::spawn(move || self.run(flag));
        Ok(DaemonHandle {
            addr,
            stop,
            thread: Some(thread),
        })
    }
}

pub struct DaemonHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl DaemonHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }
}

impl Drop for DaemonHandle {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// A connection to a constructor daemon.
pub struct Client {
    stream: TcpStream,
}

impl Client {
    pub fn connect<A: ToSocketAddrs>(addr: A) -> io::Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_read_timeout(Some(Duration::from_secs(120)))?;
        Ok(Client { stream })
    }

    /// Sends one request and returns the raw response body.
    pub fn request_raw(&mut self, req: &ConstructRequest) -> Result<Vec<u8>, ProtocolError> {
        self.stream.write_all(&encode_frame(&req.to_bytes()))?;
        read_frame(&mut self.stream, MAX_RESPONSE_BODY)?
            .ok_or(ProtocolError::Malformed(DecodeError::Truncated))
    }

    pub fn construct(
        &mut self,
        req: &ConstructRequest,
    ) -> Result<EncryptedOneTimeKey, ProtocolError> {
        let body = self.request_raw(req)?;
        parse_response(req, &body)
    }
}
