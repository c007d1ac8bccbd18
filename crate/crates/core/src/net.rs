//! Sensor devices and the first-tier edge server.
//!
//! A sensor device aligns each frame into the world frame, crops it to its
//! ROI and streams it as a sensor frame message over TCP. The edge server
//! accepts one connection per sensor, groups messages by frame index and emits
//! merged frames in ascending index order. A frame is emitted once every
//! expected sensor has delivered it, or as a partial merge once its timeout
//! expires.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, RecvTimeoutError, Sender};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use log::{debug, info, warn};
use thiserror::Error;

use crate::codec::{check_magic, encode_message, read_points, BodyHeader, CodecError, BODY_HEADER_LEN, MESSAGE_MAGIC};
use crate::geometry::{apply_transform, filter_roi, FrameSequence, PointCloudFrame, RegionOfInterest, RigidTransform};

pub const DEFAULT_FRAME_TIMEOUT: Duration = Duration::from_millis(500);

#[derive(Debug, Error)]
pub enum NetError {
    #[error("connecting to {addr}: {source}")]
    Connect { addr: String, source: io::Error },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("merge inputs disagree on frame index ({expected} vs {found})")]
    MismatchedFrameIndex { expected: u64, found: u64 },
    #[error("nothing to merge")]
    EmptyMerge,
    #[error("merge policy expects no sensors")]
    NoSensors,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Pacing {
    /// One frame per nominal period.
    RealTime,
    #[default]
    AsFastAsPossible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorConfig {
    pub sensor_id: u32,
    pub extrinsic: RigidTransform,
    pub roi: RegionOfInterest,
    pub target: String,
}

impl SensorConfig {
    /// Transform into the world frame, then crop.
    pub fn prepare(&self, frame: &PointCloudFrame) -> PointCloudFrame {
        filter_roi(&apply_transform(frame, &self.extrinsic), &self.roi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SensorStats {
    pub messages: usize,
    pub points: usize,
    pub bytes: usize,
}

pub struct SensorDevice {
    cfg: SensorConfig,
    pacing: Pacing,
}

impl SensorDevice {
    pub fn new(cfg: SensorConfig, pacing: Pacing) -> Self {
        Self { cfg, pacing }
    }

    pub fn config(&self) -> &SensorConfig {
        &self.cfg
    }

    /// Connects to the configured target and streams every frame of `source`.
    pub fn run(&self, source: &FrameSequence) -> Result<SensorStats, NetError> {
        let stream = connect(&self.cfg.target)?;
        stream.set_nodelay(true)?;
        let stats = self.stream_to(source, BufWriter::new(&stream))?;
        stream.shutdown(std::net::Shutdown::Write)?;
        info!("sensor {} sent {} messages ({} points)", self.cfg.sensor_id, stats.messages, stats.points);
        Ok(stats)
    }

    /// Writes one message per frame, in order, to `out`.
    pub fn stream_to<W: Write>(&self, source: &FrameSequence, mut out: W) -> Result<SensorStats, NetError> {
        let period = Duration::from_secs_f64(1.0 / source.nominal_rate_hz());
        let start = Instant::now();
        let mut stats = SensorStats::default();
        for (i, frame) in source.frames().iter().enumerate() {
            if self.pacing == Pacing::RealTime {
                let due = start + period * i as u32;
                let now = Instant::now();
                if due > now {
                    out.flush()?;
                    thread::sleep(due - now);
                }
            }
            let prepared = self.cfg.prepare(frame);
            let bytes = encode_message(&prepared, self.cfg.sensor_id)?;
            out.write_all(&bytes)?;
            stats.messages += 1;
            stats.points += prepared.len();
            stats.bytes += bytes.len();
        }
        out.flush()?;
        Ok(stats)
    }
}

fn connect(target: &str) -> Result<TcpStream, NetError> {
    let err = |source| NetError::Connect { addr: target.to_string(), source };
    let addrs: Vec<SocketAddr> = target.to_socket_addrs().map_err(err)?.collect();
    let mut last = io::Error::new(io::ErrorKind::AddrNotAvailable, "no addresses resolved");
    for addr in addrs {
        match TcpStream::connect(addr) {
            Ok(s) => return Ok(s),
            Err(e) => last = e,
        }
    }
    Err(err(last))
}

/// Reads one message from a stream. `Ok(None)` on a clean end of stream
/// before the first byte of a message.
pub fn read_message<R: Read>(r: &mut R) -> Result<Option<(PointCloudFrame, u32)>, NetError> {
    let mut magic = [0u8; 4];
    let mut filled = 0;
    while filled < magic.len() {
        match r.read(&mut magic[filled..]) {
            Ok(0) if filled == 0 => return Ok(None),
            Ok(0) => return Err(CodecError::Truncated { needed: 4, available: filled }.into()),
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    check_magic(&magic)?;
    let mut head = [0u8; BODY_HEADER_LEN];
    read_exact_or_truncated(r, &mut head, MESSAGE_MAGIC.len())?;
    let header = BodyHeader::parse(&head)?;
    let mut payload = vec![0u8; header.payload_len()];
    read_exact_or_truncated(r, &mut payload, MESSAGE_MAGIC.len() + BODY_HEADER_LEN)?;
    Ok(Some((read_points(&header, &payload)?, header.sensor_id)))
}

fn read_exact_or_truncated<R: Read>(r: &mut R, buf: &mut [u8], already: usize) -> Result<(), NetError> {
    match r.read_exact(buf) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => {
            Err(CodecError::Truncated { needed: already + buf.len(), available: already }.into())
        }
        Err(e) => Err(e.into()),
    }
}

/// Concatenates per-sensor frames in ascending sensor id order. The merged
/// timestamp is the earliest input timestamp.
pub fn merge(parts: &[(u32, PointCloudFrame)]) -> Result<PointCloudFrame, NetError> {
    let first = parts.first().ok_or(NetError::EmptyMerge)?;
    let index = first.1.frame_index;
    if let Some((_, bad)) = parts.iter().find(|(_, f)| f.frame_index != index) {
        return Err(NetError::MismatchedFrameIndex { expected: index, found: bad.frame_index });
    }
    let mut order: Vec<&(u32, PointCloudFrame)> = parts.iter().collect();
    order.sort_by_key(|(id, _)| *id);
    let timestamp_micros = parts.iter().map(|(_, f)| f.timestamp_micros).min().unwrap_or(0);
    let points = order.iter().flat_map(|(_, f)| f.points.iter().copied()).collect();
    Ok(PointCloudFrame { frame_index: index, timestamp_micros, points })
}

/// The in-process equivalent of sensors plus edge server: prepare each
/// sensor's frames, narrow to wire precision and merge by frame index.
pub fn merge_offline(sources: &[(&SensorConfig, &FrameSequence)]) -> Result<Vec<PointCloudFrame>, NetError> {
    let mut by_index: BTreeMap<u64, Vec<(u32, PointCloudFrame)>> = BTreeMap::new();
    for (cfg, seq) in sources {
        for frame in seq.frames() {
            by_index
                .entry(frame.frame_index)
                .or_default()
                .push((cfg.sensor_id, cfg.prepare(frame).narrowed_to_f32()));
        }
    }
    by_index.values().map(|parts| merge(parts)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergePolicy {
    expected: BTreeSet<u32>,
    /// How long a frame waits for missing sensors after its first part arrives.
    pub frame_timeout: Duration,
    /// After every connection has closed, how long to wait for further
    /// sensors before ending the session.
    pub idle_timeout: Duration,
    /// End the session once this many merged frames have been emitted.
    pub expected_frames: Option<u64>,
}

impl MergePolicy {
    pub fn new(expected: impl IntoIterator<Item = u32>) -> Result<Self, NetError> {
        let expected: BTreeSet<u32> = expected.into_iter().collect();
        if expected.is_empty() {
            return Err(NetError::NoSensors);
        }
        Ok(Self { expected, frame_timeout: DEFAULT_FRAME_TIMEOUT, idle_timeout: DEFAULT_FRAME_TIMEOUT, expected_frames: None })
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.frame_timeout = timeout;
        self.idle_timeout = timeout;
        self
    }

    pub fn expected(&self) -> &BTreeSet<u32> {
        &self.expected
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Omission {
    pub frame_index: u64,
    pub missing: Vec<u32>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MergeReport {
    pub connections: usize,
    pub frames_emitted: usize,
    pub complete_frames: usize,
    /// Frames emitted without every expected sensor, with who was missing.
    pub omissions: Vec<Omission>,
    pub duplicates: usize,
    /// Messages for a frame index that had already been emitted.
    pub late: usize,
    pub unexpected_sensor: usize,
    pub protocol_errors: usize,
}

impl MergeReport {
    pub fn partial_frames(&self) -> usize {
        self.omissions.len()
    }
}

enum Event {
    Connected(SocketAddr),
    Frame { sensor_id: u32, frame: PointCloudFrame },
    Closed { peer: SocketAddr, error: Option<NetError> },
}

struct Pending {
    parts: BTreeMap<u32, PointCloudFrame>,
    deadline: Instant,
}

struct Assembler<'p, F> {
    policy: &'p MergePolicy,
    pending: BTreeMap<u64, Pending>,
    seen: HashSet<(u32, u64)>,
    last_emitted: Option<u64>,
    report: MergeReport,
    sink: F,
}

impl<'p, F: FnMut(PointCloudFrame)> Assembler<'p, F> {
    fn accept(&mut self, sensor_id: u32, frame: PointCloudFrame, now: Instant) {
        if !self.policy.expected.contains(&sensor_id) {
            self.report.unexpected_sensor += 1;
            return;
        }
        let index = frame.frame_index;
        if !self.seen.insert((sensor_id, index)) {
            debug!("duplicate frame {index} from sensor {sensor_id}");
            self.report.duplicates += 1;
            return;
        }
        if self.last_emitted.is_some_and(|last| index <= last) {
            self.report.late += 1;
            return;
        }
        let timeout = self.policy.frame_timeout;
        self.pending
            .entry(index)
            .or_insert_with(|| Pending { parts: BTreeMap::new(), deadline: now + timeout })
            .parts
            .insert(sensor_id, frame);
    }

    /// Emits frames from the front of the queue that are complete or expired.
    fn flush_ready(&mut self, now: Instant) {
        while let Some(entry) = self.pending.first_entry() {
            let p = entry.get();
            if p.parts.len() < self.policy.expected.len() && now < p.deadline {
                break;
            }
            let (index, p) = entry.remove_entry();
            self.emit(index, p);
        }
    }

    fn flush_all(&mut self) {
        while let Some((index, p)) = self.pending.pop_first() {
            self.emit(index, p);
        }
    }

    fn emit(&mut self, index: u64, p: Pending) {
        let missing: Vec<u32> = self.policy.expected.iter().copied().filter(|id| !p.parts.contains_key(id)).collect();
        let parts: Vec<(u32, PointCloudFrame)> = p.parts.into_iter().collect();
        let merged = merge(&parts).expect("pending parts share a frame index");
        if missing.is_empty() {
            self.report.complete_frames += 1;
        } else {
            warn!("frame {index} emitted without sensors {missing:?}");
            self.report.omissions.push(Omission { frame_index: index, missing });
        }
        self.report.frames_emitted += 1;
        self.last_emitted = Some(index);
        (self.sink)(merged);
    }

    fn next_deadline(&self) -> Option<Instant> {
        self.pending.first_key_value().map(|(_, p)| p.deadline)
    }

    fn reached_frame_target(&self) -> bool {
        self.policy.expected_frames.is_some_and(|n| self.report.frames_emitted as u64 >= n)
    }
}

pub struct EdgeServer {
    listener: TcpListener,
    policy: MergePolicy,
}

impl EdgeServer {
    pub fn bind(addr: impl ToSocketAddrs, policy: MergePolicy) -> Result<Self, NetError> {
        let listener = TcpListener::bind(addr)?;
        Ok(Self { listener, policy })
    }

    pub fn local_addr(&self) -> Result<SocketAddr, NetError> {
        Ok(self.listener.local_addr()?)
    }

    pub fn policy(&self) -> &MergePolicy {
        &self.policy
    }

    /// Serves one session, handing merged frames to `sink` in ascending
    /// frame-index order.
    ///
    /// The session ends when every accepted connection has closed and either
    /// one connection per expected sensor was seen or no new connection
    /// arrived within the idle timeout; or when `expected_frames` merged
    /// frames have been emitted. Frames still pending then are flushed as
    /// partial merges.
    pub fn run<F: FnMut(PointCloudFrame)>(self, sink: F) -> Result<MergeReport, NetError> {
        let (tx, rx) = mpsc::channel::<Event>();
        let stop = Arc::new(AtomicBool::new(false));
        self.listener.set_nonblocking(true)?;
        let acceptor = {
            let stop = Arc::clone(&stop);
            let listener = self.listener.try_clone()?;
            thread::spawn(move || accept_loop(listener, tx, stop))
        };

        let mut asm = Assembler {
            policy: &self.policy,
            pending: BTreeMap::new(),
            seen: HashSet::new(),
            last_emitted: None,
            report: MergeReport::default(),
            sink,
        };
        let (mut open, mut last_close): (usize, Option<Instant>) = (0, None);
        let idle_poll = Duration::from_millis(50);

        loop {
            let now = Instant::now();
            asm.flush_ready(now);
            if asm.reached_frame_target() {
                break;
            }
            if asm.report.connections > 0 && open == 0 {
                let all_seen = asm.report.connections >= self.policy.expected.len();
                let idle_over = last_close.is_some_and(|t| now >= t + self.policy.idle_timeout);
                if all_seen || idle_over {
                    break;
                }
            }
            let mut wake = now + idle_poll;
            if let Some(d) = asm.next_deadline() {
                wake = wake.min(d);
            }
            if let (0, Some(t)) = (open, last_close) {
                wake = wake.min(t + self.policy.idle_timeout);
            }
            match rx.recv_timeout(wake.saturating_duration_since(now)) {
                Ok(Event::Connected(peer)) => {
                    info!("sensor connection from {peer}");
                    asm.report.connections += 1;
                    open += 1;
                }
                Ok(Event::Frame { sensor_id, frame }) => asm.accept(sensor_id, frame, Instant::now()),
                Ok(Event::Closed { peer, error }) => {
                    if let Some(e) = error {
                        warn!("connection {peer} ended with error: {e}");
                        asm.report.protocol_errors += 1;
                    }
                    open -= 1;
                    last_close = Some(Instant::now());
                }
                Err(RecvTimeoutError::Timeout) => {}
                Err(RecvTimeoutError::Disconnected) => break,
            }
        }

        stop.store(true, Ordering::Relaxed);
        let _ = acceptor.join();
        asm.flush_all();
        Ok(asm.report)
    }
}

fn accept_loop(listener: TcpListener, tx: Sender<Event>, stop: Arc<AtomicBool>) {
    while !stop.load(Ordering::Relaxed) {
        match listener.accept() {
            Ok((stream, peer)) => {
                if tx.send(Event::Connected(peer)).is_err() {
                    return;
                }
                let tx = tx.clone();
                thread::spawn(move || serve_connection(stream, peer, tx));
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(2)),
            Err(e) => {
                warn!("accept failed: {e}");
                thread::sleep(Duration::from_millis(10));
            }
        }
    }
}

fn serve_connection(stream: TcpStream, peer: SocketAddr, tx: Sender<Event>) {
    let error = (|| -> Result<(), NetError> {
        stream.set_nonblocking(false)?;
        let mut reader = BufReader::new(stream);
        while let Some((frame, sensor_id)) = read_message(&mut reader)? {
            if tx.send(Event::Frame { sensor_id, frame }).is_err() {
                break;
            }
        }
        Ok(())
    })()
    .err();
    let _ = tx.send(Event::Closed { peer, error });
}
