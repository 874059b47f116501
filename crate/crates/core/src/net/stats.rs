use std::collections::HashSet;

/// Receiver-side counters.
///
/// Latency figures subtract the sender's `timestamp_us` from the receiver's
/// wall clock, so they are only meaningful when both ends share a clock
/// (same host). There is no clock synchronisation between hosts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReceiverStats {
    /// Distinct packets accepted.
    pub received: u64,
    pub lost: u64,
    pub reordered: u64,
    pub duplicated: u64,
    /// Datagrams that failed to parse.
    pub malformed: u64,
    /// Packets evicted from a full consumer queue.
    pub overflow_dropped: u64,
    pub samples_received: u64,
    pub first_seq: Option<u32>,
    pub highest_seq: Option<u32>,
    pub latency_mean_us: f64,
    pub latency_max_us: f64,
    latency_count: u64,
}

impl ReceiverStats {
    pub fn record_latency(&mut self, latency_us: f64) {
        self.latency_count += 1;
        self.latency_mean_us += (latency_us - self.latency_mean_us) / self.latency_count as f64;
        if self.latency_count == 1 || latency_us > self.latency_max_us {
            self.latency_max_us = latency_us;
        }
    }

    pub fn latency_samples(&self) -> u64 {
        self.latency_count
    }

    pub fn summary(&self) -> String {
        format!(
            "received={} lost={} reordered={} duplicated={} malformed={} overflow_dropped={} samples={} latency_mean_us={:.1} latency_max_us={:.1}",
            self.received,
            self.lost,
            self.reordered,
            self.duplicated,
            self.malformed,
            self.overflow_dropped,
            self.samples_received,
            self.latency_mean_us,
            self.latency_max_us
        )
    }
}

/// Classification of one arrival.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arrival {
    InOrder,
    /// Jumped ahead; carries how many sequence numbers were skipped.
    Gap(u32),
    Reordered,
    Duplicate,
}

/// Sequence-number accounting for one stream.
///
/// Streams start at `base_seq` (0 for [`send_stream`](super::send_stream)).
/// A jump from `last` to `seq` counts `seq - last - 1` lost; a late arrival
/// below the highest seen seq counts as reordered and gives back one lost;
/// a repeated seq counts as duplicated.
#[derive(Debug, Clone)]
pub struct LossTracker {
    base_seq: u32,
    highest: Option<u32>,
    seen: HashSet<u32>,
    pub stats: ReceiverStats,
}

impl Default for LossTracker {
    fn default() -> Self {
        Self::new(0)
    }
}

impl LossTracker {
    pub fn new(base_seq: u32) -> Self {
        Self {
            base_seq,
            highest: None,
            seen: HashSet::new(),
            stats: ReceiverStats::default(),
        }
    }

    pub fn observe(&mut self, seq: u32) -> Arrival {
        if !self.seen.insert(seq) {
            self.stats.duplicated += 1;
            return Arrival::Duplicate;
        }
        self.stats.received += 1;
        if self.stats.first_seq.is_none() {
            self.stats.first_seq = Some(seq);
        }
        let arrival = match self.highest {
            None if seq < self.base_seq => {
                // Predates the declared start; nothing to give back.
                self.base_seq = seq;
                self.highest = Some(seq);
                Arrival::InOrder
            }
            None => {
                let gap = seq - self.base_seq;
                self.stats.lost += gap as u64;
                self.highest = Some(seq);
                if gap == 0 {
                    Arrival::InOrder
                } else {
                    Arrival::Gap(gap)
                }
            }
            Some(high) if seq > high => {
                let gap = seq - high - 1;
                self.stats.lost += gap as u64;
                self.highest = Some(seq);
                if gap == 0 {
                    Arrival::InOrder
                } else {
                    Arrival::Gap(gap)
                }
            }
            Some(_) => {
                self.stats.reordered += 1;
                if seq >= self.base_seq {
                    self.stats.lost = self.stats.lost.saturating_sub(1);
                } else {
                    self.stats.lost += (self.base_seq - seq - 1) as u64;
                    self.base_seq = seq;
                }
                Arrival::Reordered
            }
        };
        self.stats.highest_seq = self.highest;
        arrival
    }

    /// Accounts for packets missing after the highest seen seq when the
    /// sender's total is known.
    pub fn settle(&mut self, expected_packets: u64) {
        let covered = match self.highest {
            Some(h) => (h - self.base_seq) as u64 + 1,
            None => 0,
        };
        if expected_packets > covered {
            self.stats.lost += expected_packets - covered;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(seqs: &[u32]) -> ReceiverStats {
        let mut t = LossTracker::default();
        for &s in seqs {
            t.observe(s);
        }
        t.stats
    }

    #[test]
    fn in_order() {
        let s = run(&(0..10).collect::<Vec<_>>());
        assert_eq!((s.received, s.lost, s.reordered), (10, 0, 0));
    }

    #[test]
    fn gap() {
        let s = run(&[0, 1, 3, 4]);
        assert_eq!(s.lost, 1);
        assert_eq!(s.reordered, 0);
    }

    #[test]
    fn late_arrival_settles() {
        let mut t = LossTracker::default();
        t.observe(0);
        assert_eq!(t.observe(2), Arrival::Gap(1));
        assert_eq!(t.stats.lost, 1);
        assert_eq!(t.observe(1), Arrival::Reordered);
        assert_eq!((t.stats.lost, t.stats.reordered), (0, 1));
    }

    #[test]
    fn duplicates() {
        let s = run(&[0, 1, 1, 0, 2]);
        assert_eq!((s.received, s.duplicated, s.lost, s.reordered), (3, 2, 0, 0));
    }

    #[test]
    fn tail_loss_needs_settle() {
        let mut t = LossTracker::default();
        for s in 0..7 {
            t.observe(s);
        }
        t.settle(10);
        assert_eq!(t.stats.lost, 3);
    }

    #[test]
    fn leading_loss_counted_from_base() {
        let s = run(&[2, 3]);
        assert_eq!(s.lost, 2);
    }

    #[test]
    fn latency_running_mean() {
        let mut s = ReceiverStats::default();
        for v in [10.0, 20.0, 60.0] {
            s.record_latency(v);
        }
        assert!((s.latency_mean_us - 30.0).abs() < 1e-12);
        assert_eq!(s.latency_max_us, 60.0);
    }
}
