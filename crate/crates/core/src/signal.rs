/// Multichannel time series, one row per channel, all rows the same length.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    pub fs: f64,
    pub data: Vec<Vec<f64>>,
}

impl Signal {
    pub fn zeros(n_channels: usize, n_samples: usize, fs: f64) -> Self {
        Self {
            fs,
            data: vec![vec![0.0; n_samples]; n_channels],
        }
    }

    pub fn n_channels(&self) -> usize {
        self.data.len()
    }

    pub fn len(&self) -> usize {
        self.data.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Samples `[start, start + len)` of every channel.
    pub fn slice(&self, start: usize, len: usize) -> Signal {
        Signal {
            fs: self.fs,
            data: self.data.iter().map(|row| row[start..start + len].to_vec()).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data
            .iter()
            .flatten()
            .fold(0.0f64, |acc, v| acc.max(v.abs()))
    }

    /// Root-mean-square over all channels and samples.
    pub fn rms(&self) -> f64 {
        let n = (self.n_channels() * self.len()).max(1) as f64;
        (self.data.iter().flatten().map(|v| v * v).sum::<f64>() / n).sqrt()
    }

    pub fn sub(&self, other: &Signal) -> Signal {
        Signal {
            fs: self.fs,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
                .collect(),
        }
    }
}
