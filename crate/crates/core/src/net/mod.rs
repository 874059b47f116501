//! UDP streaming of decoded samples with sequence-number loss accounting.
//!
//! There is no retransmission or acknowledgement: loss is measured, not
//! repaired. The receiver runs its socket loop on a dedicated thread and hands
//! packets to the consumer through a bounded drop-oldest queue.

mod packet;
mod queue;
mod stats;

pub use packet::{
    parse_packet, serialize_packet, Sample, StreamPacket, HEADER_LEN, MAGIC, MAX_SAMPLES,
    SAMPLE_LEN, VERSION,
};
pub use queue::{DropOldestQueue, Pop};
pub use stats::{Arrival, LossTracker, ReceiverStats};

use std::io;
use std::net::{SocketAddr, UdpSocket};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use thiserror::Error;

use crate::codec::DecodedSample;

pub const DEFAULT_PORT: u16 = 9530;
pub const DEFAULT_BATCH: usize = 10;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("payload of {0} samples exceeds the {MAX_SAMPLES}-sample limit")]
    PayloadTooLarge(usize),
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported version {0}")]
    BadVersion(u8),
    #[error("datagram length {actual} does not match expected {expected}")]
    TruncatedPayload { expected: usize, actual: usize },
    #[error("cannot bind {addr}: {source}")]
    BindError { addr: SocketAddr, source: io::Error },
    #[error("socket error: {0}")]
    SocketError(#[from] io::Error),
}

impl PartialEq for NetError {
    fn eq(&self, other: &Self) -> bool {
        use NetError::*;
        match (self, other) {
            (PayloadTooLarge(a), PayloadTooLarge(b)) => a == b,
            (BadMagic, BadMagic) => true,
            (BadVersion(a), BadVersion(b)) => a == b,
            (
                TruncatedPayload { expected: e1, actual: a1 },
                TruncatedPayload { expected: e2, actual: a2 },
            ) => e1 == e2 && a1 == a2,
            _ => false,
        }
    }
}

/// Microseconds since the Unix epoch on the local wall clock.
pub fn now_us() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_micros() as u64)
        .unwrap_or(0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pacing {
    /// Packet `k` leaves no earlier than `k * batch / fs` seconds after start.
    Realtime { fs: f64 },
    Unpaced,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SendConfig {
    pub batch: usize,
    pub pacing: Pacing,
}

impl Default for SendConfig {
    fn default() -> Self {
        Self {
            batch: DEFAULT_BATCH,
            pacing: Pacing::Realtime { fs: 250.0 },
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SendReport {
    pub packets: u64,
    pub samples: u64,
    pub bytes: u64,
    pub elapsed: Duration,
}

/// Splits samples into packets with contiguous sequence numbers from `first_seq`.
/// Timestamps are left at zero; the sender stamps them on transmission.
pub fn packetize(samples: &[Sample], batch: usize, first_seq: u32) -> Vec<StreamPacket> {
    let batch = batch.clamp(1, MAX_SAMPLES);
    samples
        .chunks(batch)
        .enumerate()
        .map(|(k, chunk)| StreamPacket::new(first_seq.wrapping_add(k as u32), 0, chunk.to_vec()))
        .collect()
}

pub fn to_wire_sample(s: &DecodedSample) -> Sample {
    s.microvolts.map(|v| v as f32)
}

pub fn send_stream(
    socket: &UdpSocket,
    dest: SocketAddr,
    samples: &[DecodedSample],
    cfg: &SendConfig,
) -> Result<SendReport, NetError> {
    let wire: Vec<Sample> = samples.iter().map(to_wire_sample).collect();
    send_samples(socket, dest, &wire, cfg)
}

pub fn send_samples(
    socket: &UdpSocket,
    dest: SocketAddr,
    samples: &[Sample],
    cfg: &SendConfig,
) -> Result<SendReport, NetError> {
    if cfg.batch == 0 || cfg.batch > MAX_SAMPLES {
        return Err(NetError::PayloadTooLarge(cfg.batch));
    }
    let start = Instant::now();
    let mut report = SendReport::default();
    for (k, mut packet) in packetize(samples, cfg.batch, 0).into_iter().enumerate() {
        if let Pacing::Realtime { fs } = cfg.pacing {
            let due = start + Duration::from_secs_f64(k as f64 * cfg.batch as f64 / fs);
            let now = Instant::now();
            if due > now {
                thread::sleep(due - now);
            }
        }
        packet.timestamp_us = now_us();
        let bytes = serialize_packet(&packet)?;
        socket.send_to(&bytes, dest)?;
        report.packets += 1;
        report.samples += packet.samples.len() as u64;
        report.bytes += bytes.len() as u64;
    }
    report.elapsed = start.elapsed();
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct ReceiverConfig {
    pub bind: SocketAddr,
    pub queue_capacity: usize,
    /// Stop after this long without a datagram.
    pub idle_timeout: Option<Duration>,
    /// Stop once this many distinct packets arrived; also used to settle tail loss.
    pub expected_packets: Option<u64>,
    pub max_duration: Option<Duration>,
}

impl Default for ReceiverConfig {
    fn default() -> Self {
        Self {
            bind: SocketAddr::from(([127, 0, 0, 1], DEFAULT_PORT)),
            queue_capacity: 256,
            idle_timeout: Some(Duration::from_secs(2)),
            expected_packets: None,
            max_duration: None,
        }
    }
}

/// Requests a running receiver to stop.
#[derive(Debug, Clone)]
pub struct StopHandle(Arc<AtomicBool>);

impl StopHandle {
    pub fn stop(&self) {
        self.0.store(true, Ordering::SeqCst);
    }
}

/// Snapshot access to live counters.
#[derive(Debug, Clone)]
pub struct StatsHandle(Arc<Mutex<ReceiverStats>>);

impl StatsHandle {
    pub fn snapshot(&self) -> ReceiverStats {
        self.0.lock().unwrap().clone()
    }
}

pub struct Receiver {
    socket: UdpSocket,
    cfg: ReceiverConfig,
    stop: Arc<AtomicBool>,
    stats: Arc<Mutex<ReceiverStats>>,
}

impl Receiver {
    pub fn bind(cfg: ReceiverConfig) -> Result<Self, NetError> {
        let socket = UdpSocket::bind(cfg.bind).map_err(|source| NetError::BindError {
            addr: cfg.bind,
            source,
        })?;
        socket.set_read_timeout(Some(Duration::from_millis(20)))?;
        Ok(Self {
            socket,
            cfg,
            stop: Arc::new(AtomicBool::new(false)),
            stats: Arc::new(Mutex::new(ReceiverStats::default())),
        })
    }

    pub fn local_addr(&self) -> Result<SocketAddr, NetError> {
        Ok(self.socket.local_addr()?)
    }

    pub fn stop_handle(&self) -> StopHandle {
        StopHandle(self.stop.clone())
    }

    pub fn stats_handle(&self) -> StatsHandle {
        StatsHandle(self.stats.clone())
    }

    /// Runs the socket loop on a background thread and the consumer on the
    /// calling thread. Returns the final counters once a stop condition is hit
    /// and the queue has drained.
    pub fn run<F: FnMut(&StreamPacket)>(self, mut on_packet: F) -> Result<ReceiverStats, NetError> {
        let queue = Arc::new(DropOldestQueue::<StreamPacket>::new(self.cfg.queue_capacity));
        let producer_queue = queue.clone();
        let Receiver {
            socket,
            cfg,
            stop,
            stats,
        } = self;
        let shared_stats = stats.clone();

        let worker = thread::spawn(move || -> Result<(), NetError> {
            let mut tracker = LossTracker::default();
            let mut buf = vec![0u8; 65_536];
            let started = Instant::now();
            let mut last_packet = Instant::now();
            let result = loop {
                if stop.load(Ordering::SeqCst) {
                    break Ok(());
                }
                if cfg.max_duration.is_some_and(|d| started.elapsed() >= d) {
                    break Ok(());
                }
                if cfg.idle_timeout.is_some_and(|d| last_packet.elapsed() >= d) {
                    break Ok(());
                }
                if cfg
                    .expected_packets
                    .is_some_and(|n| tracker.stats.received >= n)
                {
                    break Ok(());
                }
                let len = match socket.recv_from(&mut buf) {
                    Ok((len, _)) => len,
                    Err(e)
                        if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) =>
                    {
                        continue
                    }
                    Err(e) => break Err(NetError::SocketError(e)),
                };
                let arrived_us = now_us();
                last_packet = Instant::now();
                match parse_packet(&buf[..len]) {
                    Ok(packet) => {
                        let arrival = tracker.observe(packet.seq);
                        if arrival != Arrival::Duplicate {
                            tracker.stats.samples_received += packet.samples.len() as u64;
                            tracker
                                .stats
                                .record_latency(arrived_us.saturating_sub(packet.timestamp_us) as f64);
                            if producer_queue.push(packet).is_some() {
                                tracker.stats.overflow_dropped += 1;
                            }
                        }
                    }
                    Err(_) => tracker.stats.malformed += 1,
                }
                *shared_stats.lock().unwrap() = tracker.stats.clone();
            };
            if let Some(n) = cfg.expected_packets {
                tracker.settle(n);
            }
            *shared_stats.lock().unwrap() = tracker.stats.clone();
            producer_queue.close();
            result
        });

        loop {
            match queue.pop_timeout(Duration::from_millis(50)) {
                Pop::Item(packet) => on_packet(&packet),
                Pop::Empty => continue,
                Pop::Closed => break,
            }
        }
        worker.join().expect("receiver thread panicked")?;
        let final_stats = stats.lock().unwrap().clone();
        Ok(final_stats)
    }
}

/// Binds and runs a receiver until one of its stop conditions is met.
pub fn receive_loop<F: FnMut(&StreamPacket)>(
    cfg: ReceiverConfig,
    on_packet: F,
) -> Result<ReceiverStats, NetError> {
    Receiver::bind(cfg)?.run(on_packet)
}
