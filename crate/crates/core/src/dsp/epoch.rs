use crate::signal::Signal;
use crate::sim::EmotionLabel;

/// Floor on the standard deviation used by z-scoring, in uV.
pub const NORMALIZE_EPS: f64 = 1e-8;

/// One event-aligned segment, channels in montage order.
#[derive(Debug, Clone, PartialEq)]
pub struct Epoch {
    pub data: Vec<Vec<f64>>,
    pub fs: f64,
    pub label: Option<EmotionLabel>,
    /// Start sample within the session.
    pub origin: usize,
}

impl Epoch {
    pub fn len(&self) -> usize {
        self.data.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_channels(&self) -> usize {
        self.data.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub epochs: Vec<Epoch>,
    /// Events whose window ran past the end of the signal.
    pub skipped: Vec<(usize, EmotionLabel)>,
}

/// Cuts one epoch per event starting at the event sample. Overlapping windows
/// are allowed.
pub fn segment_epochs(signal: &Signal, events: &[(usize, EmotionLabel)], epoch_len: usize) -> Segmentation {
    let n = signal.len();
    let mut out = Segmentation {
        epochs: Vec::with_capacity(events.len()),
        skipped: Vec::new(),
    };
    for &(start, label) in events {
        if start + epoch_len > n {
            out.skipped.push((start, label));
            continue;
        }
        out.epochs.push(Epoch {
            data: signal
                .data
                .iter()
                .map(|row| row[start..start + epoch_len].to_vec())
                .collect(),
            fs: signal.fs,
            label: Some(label),
            origin: start,
        });
    }
    out
}

/// Per-channel z-score: `(x - mean) / max(std, eps)`.
pub fn normalize_epoch(e: &Epoch) -> Epoch {
    let data = e
        .data
        .iter()
        .map(|row| {
            let n = row.len().max(1) as f64;
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let sd = var.sqrt().max(NORMALIZE_EPS);
            row.iter().map(|v| (v - mean) / sd).collect()
        })
        .collect();
    Epoch { data, ..e.clone() }
}
