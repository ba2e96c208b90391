//! Framed duplex channel between the two parties.
//!
//! Every message travels as a length-prefixed [`Frame`]. Sequence numbers are
//! checked per direction and every frame is charged to the byte counter of the
//! phase it was sent in.

use std::io::{BufReader, BufWriter, Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::field::{Fe, Field};
use crate::wire::{Reader, Writer};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(300);

/// Frames larger than this are rejected before allocation.
const MAX_FRAME: usize = 1 << 30;

/// Bytes of frame header after the length prefix.
pub const HEADER_LEN: usize = 8 + 1 + 8 + 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Offline,
    Online,
    Check,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::Offline, Phase::Online, Phase::Check];

    fn tag(self) -> u8 {
        self as u8
    }

    fn from_tag(t: u8) -> Result<Self> {
        Self::ALL
            .get(t as usize)
            .copied()
            .ok_or_else(|| Error::Framing(format!("unknown phase tag {t}")))
    }
}

/// Payload kinds. Receivers state the kind they expect so a desynchronized
/// peer fails loudly instead of being misparsed.
pub mod kind {
    pub const HELLO: u16 = 1;
    pub const PUBLIC_KEY: u16 = 2;
    pub const MAC_KEY_SHARE: u16 = 3;
    pub const TRIPLE_REQUEST: u16 = 10;
    pub const TRIPLE_RESPONSE: u16 = 11;
    pub const MASK_REQUEST: u16 = 12;
    pub const MASK_RESPONSE: u16 = 13;
    pub const GARBLED_CIRCUIT: u16 = 20;
    pub const OT_SETUP: u16 = 21;
    pub const OT_CHOICE: u16 = 22;
    pub const OT_TRANSFER: u16 = 23;
    pub const CLIENT_LABELS: u16 = 24;
    pub const OPEN: u16 = 30;
    pub const WEIGHT_OFFSET: u16 = 31;
    pub const INPUT_SHARE: u16 = 32;
    pub const OUTPUT_SHARE: u16 = 33;
    pub const CHECK_SEED: u16 = 40;
    pub const CHECK_SHARE: u16 = 41;
    pub const VERDICT: u16 = 42;
    pub const PLAN: u16 = 50;
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub session: u64,
    pub phase: Phase,
    pub seq: u64,
    pub kind: u16,
    pub payload: Vec<u8>,
}

impl Frame {
    /// Encoded size including the 4-byte length prefix.
    pub fn wire_len(&self) -> usize {
        4 + HEADER_LEN + self.payload.len()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::with_capacity(self.wire_len());
        w.u32((HEADER_LEN + self.payload.len()) as u32)
            .u64(self.session)
            .u8(self.phase.tag())
            .u64(self.seq)
            .u16(self.kind)
            .bytes(&self.payload);
        w.finish()
    }

    /// Decodes a frame body (everything after the length prefix).
    pub fn decode_body(body: &[u8]) -> Result<Self> {
        let mut r = Reader::new(body);
        let session = r.u64()?;
        let phase = Phase::from_tag(r.u8()?)?;
        let seq = r.u64()?;
        let kind = r.u16()?;
        let payload = r.bytes(r.remaining())?.to_vec();
        Ok(Frame {
            session,
            phase,
            seq,
            kind,
            payload,
        })
    }
}

/// Raw byte transport carrying encoded frames.
pub trait Transport: Send {
    fn send_frame(&mut self, bytes: Vec<u8>) -> Result<()>;
    /// Returns one frame body, without its length prefix.
    fn recv_frame(&mut self, timeout: Duration) -> Result<Vec<u8>>;
}

struct InProc {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
}

impl Transport for InProc {
    fn send_frame(&mut self, bytes: Vec<u8>) -> Result<()> {
        self.tx
            .send(bytes)
            .map_err(|_| Error::Channel("peer hung up".into()))
    }

    fn recv_frame(&mut self, timeout: Duration) -> Result<Vec<u8>> {
        let bytes = self.rx.recv_timeout(timeout).map_err(|e| match e {
            RecvTimeoutError::Timeout => Error::Channel("watchdog timeout".into()),
            RecvTimeoutError::Disconnected => Error::Channel("peer hung up".into()),
        })?;
        Ok(bytes[4..].to_vec())
    }
}

struct Tcp {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
    timeout: Option<Duration>,
}

impl Tcp {
    fn new(stream: TcpStream) -> Result<Self> {
        stream.set_nodelay(true)?;
        let reader = BufReader::with_capacity(1 << 16, stream.try_clone()?);
        Ok(Self {
            reader,
            writer: BufWriter::with_capacity(1 << 16, stream),
            timeout: None,
        })
    }
}

fn io_to_channel(e: std::io::Error) -> Error {
    match e.kind() {
        std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut => {
            Error::Channel("watchdog timeout".into())
        }
        std::io::ErrorKind::UnexpectedEof => Error::Channel("peer hung up".into()),
        _ => Error::Channel(e.to_string()),
    }
}

impl Transport for Tcp {
    fn send_frame(&mut self, bytes: Vec<u8>) -> Result<()> {
        self.writer.write_all(&bytes).map_err(io_to_channel)?;
        self.writer.flush().map_err(io_to_channel)
    }

    fn recv_frame(&mut self, timeout: Duration) -> Result<Vec<u8>> {
        if self.timeout != Some(timeout) {
            self.reader.get_ref().set_read_timeout(Some(timeout))?;
            self.timeout = Some(timeout);
        }
        let mut len = [0u8; 4];
        self.reader.read_exact(&mut len).map_err(io_to_channel)?;
        let len = u32::from_le_bytes(len) as usize;
        if !(HEADER_LEN..=MAX_FRAME).contains(&len) {
            return Err(Error::Framing(format!("bad frame length {len}")));
        }
        let mut body = vec![0u8; len];
        self.reader.read_exact(&mut body).map_err(io_to_channel)?;
        Ok(body)
    }
}

/// Byte counters split by phase and direction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ByteCounters {
    pub sent: [u64; 3],
    pub received: [u64; 3],
}

impl ByteCounters {
    pub fn sent_in(&self, phase: Phase) -> u64 {
        self.sent[phase as usize]
    }

    pub fn received_in(&self, phase: Phase) -> u64 {
        self.received[phase as usize]
    }

    /// Bytes crossing the channel in either direction during `phase`.
    pub fn phase_total(&self, phase: Phase) -> u64 {
        self.sent_in(phase) + self.received_in(phase)
    }

    pub fn total(&self) -> u64 {
        Phase::ALL.iter().map(|&p| self.phase_total(p)).sum()
    }

    pub fn since(&self, earlier: &ByteCounters) -> ByteCounters {
        let mut out = ByteCounters::default();
        for i in 0..3 {
            out.sent[i] = self.sent[i] - earlier.sent[i];
            out.received[i] = self.received[i] - earlier.received[i];
        }
        out
    }
}

/// One party's end of a framed session channel.
pub struct Channel {
    transport: Box<dyn Transport>,
    session: u64,
    phase: Phase,
    send_seq: u64,
    recv_seq: u64,
    timeout: Duration,
    counters: ByteCounters,
    digest: Sha256,
    dump: Option<Vec<Frame>>,
}

impl Channel {
    fn new(transport: Box<dyn Transport>, session: u64) -> Self {
        Self {
            transport,
            session,
            phase: Phase::Offline,
            send_seq: 0,
            recv_seq: 0,
            timeout: DEFAULT_TIMEOUT,
            counters: ByteCounters::default(),
            digest: Sha256::new(),
            dump: None,
        }
    }

    /// Two connected in-process endpoints.
    pub fn pair(session: u64) -> (Channel, Channel) {
        let (tx_a, rx_b) = mpsc::channel();
        let (tx_b, rx_a) = mpsc::channel();
        (
            Channel::new(Box::new(InProc { tx: tx_a, rx: rx_a }), session),
            Channel::new(Box::new(InProc { tx: tx_b, rx: rx_b }), session),
        )
    }

    /// Accepts a single peer on `endpoint`.
    pub fn listen(endpoint: impl ToSocketAddrs, session: u64) -> Result<Channel> {
        let listener = TcpListener::bind(endpoint).map_err(|e| Error::Connect(e.to_string()))?;
        Self::accept(&listener, session)
    }

    pub fn accept(listener: &TcpListener, session: u64) -> Result<Channel> {
        let (stream, _) = listener
            .accept()
            .map_err(|e| Error::Connect(e.to_string()))?;
        Ok(Channel::new(Box::new(Tcp::new(stream)?), session))
    }

    /// Connects to a listening peer, retrying until `patience` elapses.
    pub fn connect(endpoint: &str, session: u64, patience: Duration) -> Result<Channel> {
        let start = std::time::Instant::now();
        loop {
            match TcpStream::connect(endpoint) {
                Ok(stream) => return Ok(Channel::new(Box::new(Tcp::new(stream)?), session)),
                Err(e) if start.elapsed() >= patience => {
                    return Err(Error::Connect(format!("{endpoint}: {e}")))
                }
                Err(_) => std::thread::sleep(Duration::from_millis(50)),
            }
        }
    }

    pub fn session(&self) -> u64 {
        self.session
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn set_phase(&mut self, phase: Phase) {
        self.phase = phase;
    }

    pub fn set_timeout(&mut self, timeout: Duration) {
        self.timeout = timeout;
    }

    /// Keep a copy of every frame sent and received for later dumping.
    pub fn record_transcript(&mut self) {
        self.dump.get_or_insert_with(Vec::new);
    }

    pub fn transcript(&self) -> Option<&[Frame]> {
        self.dump.as_deref()
    }

    /// SHA-256 over every frame this end sent, in order.
    pub fn sent_digest(&self) -> [u8; 32] {
        self.digest.clone().finalize().into()
    }

    pub fn counters(&self) -> ByteCounters {
        self.counters
    }

    pub fn send(&mut self, kind: u16, payload: Vec<u8>) -> Result<()> {
        let frame = Frame {
            session: self.session,
            phase: self.phase,
            seq: self.send_seq,
            kind,
            payload,
        };
        self.send_seq += 1;
        let bytes = frame.encode();
        self.counters.sent[self.phase as usize] += bytes.len() as u64;
        self.digest.update(&bytes);
        if let Some(d) = self.dump.as_mut() {
            d.push(frame);
        }
        self.transport.send_frame(bytes)
    }

    /// Receives the next frame and insists it carries `kind`.
    pub fn recv(&mut self, kind: u16) -> Result<Vec<u8>> {
        let body = self.transport.recv_frame(self.timeout)?;
        let frame = Frame::decode_body(&body)?;
        self.counters.received[frame.phase as usize] += (4 + body.len()) as u64;
        if frame.session != self.session {
            return Err(Error::Framing(format!(
                "session {} does not match {}",
                frame.session, self.session
            )));
        }
        if frame.seq != self.recv_seq {
            return Err(Error::Framing(format!(
                "sequence {} where {} was expected",
                frame.seq, self.recv_seq
            )));
        }
        self.recv_seq += 1;
        if frame.kind != kind {
            return Err(Error::Framing(format!(
                "message kind {} where {} was expected",
                frame.kind, kind
            )));
        }
        let payload = if let Some(d) = self.dump.as_mut() {
            let p = frame.payload.clone();
            d.push(frame);
            p
        } else {
            frame.payload
        };
        Ok(payload)
    }

    pub fn send_fes(&mut self, kind: u16, field: &Field, v: &[Fe]) -> Result<()> {
        let mut w = Writer::with_capacity(4 + v.len() * field.config().byte_len());
        w.fes(field, v);
        self.send(kind, w.finish())
    }

    pub fn recv_fes(&mut self, kind: u16, field: &Field, n: usize) -> Result<Vec<Fe>> {
        let bytes = self.recv(kind)?;
        let mut r = Reader::new(&bytes);
        let v = r.fes_exact(field, n)?;
        r.finish()?;
        Ok(v)
    }
}

/// Writes frames as one line each: phase, seq, kind, payload length, hex digest
/// of the payload.
pub fn write_transcript(frames: &[Frame], out: &mut impl Write) -> std::io::Result<()> {
    for f in frames {
        let h = Sha256::digest(&f.payload);
        let hex: String = h[..8].iter().map(|b| format!("{b:02x}")).collect();
        writeln!(
            out,
            "{:?}\t{}\t{}\t{}\t{}",
            f.phase,
            f.seq,
            f.kind,
            f.payload.len(),
            hex
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inproc_echo_and_counters() {
        let (mut a, mut b) = Channel::pair(7);
        a.send(kind::HELLO, b"ping".to_vec()).unwrap();
        let got = b.recv(kind::HELLO).unwrap();
        assert_eq!(got, b"ping");
        b.set_phase(Phase::Online);
        b.send(kind::HELLO, got).unwrap();
        assert_eq!(a.recv(kind::HELLO).unwrap(), b"ping");
        let frame_len = (4 + HEADER_LEN + 4) as u64;
        assert_eq!(a.counters().sent_in(Phase::Offline), frame_len);
        assert_eq!(a.counters().received_in(Phase::Online), frame_len);
        assert_eq!(a.counters().total(), 2 * frame_len);
        assert_eq!(b.counters().total(), a.counters().total());
    }

    #[test]
    fn wrong_kind_is_a_framing_error() {
        let (mut a, mut b) = Channel::pair(1);
        a.send(kind::OPEN, vec![]).unwrap();
        assert!(matches!(b.recv(kind::HELLO), Err(Error::Framing(_))));
    }

    #[test]
    fn session_mismatch_rejected() {
        let (mut a, _keep) = Channel::pair(1);
        let (mut x, mut y) = Channel::pair(2);
        // Splice a frame from session 1 into session 2's stream.
        let frame = Frame {
            session: 1,
            phase: Phase::Offline,
            seq: 0,
            kind: kind::HELLO,
            payload: vec![],
        };
        x.transport.send_frame(frame.encode()).unwrap();
        assert!(matches!(y.recv(kind::HELLO), Err(Error::Framing(_))));
        a.send(kind::HELLO, vec![]).unwrap();
    }

    #[test]
    fn watchdog_fires() {
        let (mut a, _b) = Channel::pair(1);
        a.set_timeout(Duration::from_millis(20));
        assert!(matches!(a.recv(kind::HELLO), Err(Error::Channel(_))));
    }

    #[test]
    fn tcp_roundtrip() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap().to_string();
        let server = std::thread::spawn(move || {
            let mut ch = Channel::accept(&listener, 9).unwrap();
            let msg = ch.recv(kind::HELLO).unwrap();
            ch.send(kind::HELLO, msg).unwrap();
            ch.counters()
        });
        let mut ch = Channel::connect(&addr, 9, Duration::from_secs(5)).unwrap();
        let payload = vec![0xab; 100_000];
        ch.send(kind::HELLO, payload.clone()).unwrap();
        assert_eq!(ch.recv(kind::HELLO).unwrap(), payload);
        let theirs = server.join().unwrap();
        assert_eq!(theirs.total(), ch.counters().total());
    }
}
