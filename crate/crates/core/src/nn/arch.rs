use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sizes of every layer of the two-stream network.
///
/// Frequency branch: channel-wise convolution (`spatial_maps` kernels of
/// size 1 x C) over a `C x bins` magnitude spectrum, two strided 1-d
/// convolutions along the bin axis, one dense layer. Time branch: a stack of
/// `lstm_layers` LSTMs reading the epoch one (decimated) time step at a
/// time. Head: dense layer from the concatenated branch outputs to the
/// class logits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub channels: usize,
    pub bins: usize,
    /// LSTM sequence length (raw samples / `time_decimation`).
    pub seq_len: usize,
    pub time_decimation: usize,
    pub hidden: usize,
    pub lstm_layers: usize,
    pub spatial_maps: usize,
    pub conv_maps: [usize; 2],
    pub conv_kernel: usize,
    pub conv_stride: usize,
    pub dense_units: usize,
    pub classes: usize,
}

impl Architecture {
    /// The full-size network for `channels` electrodes, 147 spectral bins
    /// (3-45 Hz at 100 Hz / 350 samples) and 350-sample epochs.
    pub fn standard(channels: usize) -> Self {
        Architecture {
            channels,
            bins: 147,
            seq_len: 50,
            time_decimation: 7,
            hidden: 16,
            lstm_layers: 3,
            spatial_maps: 8,
            conv_maps: [16, 16],
            conv_kernel: 11,
            conv_stride: 2,
            dense_units: 32,
            classes: 3,
        }
    }

    /// A miniature network for finite-difference gradient checks.
    pub fn tiny() -> Self {
        Architecture {
            channels: 2,
            bins: 8,
            seq_len: 10,
            time_decimation: 1,
            hidden: 3,
            lstm_layers: 3,
            spatial_maps: 8,
            conv_maps: [4, 3],
            conv_kernel: 3,
            conv_stride: 2,
            dense_units: 5,
            classes: 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.channels,
            self.bins,
            self.seq_len,
            self.time_decimation,
            self.hidden,
            self.lstm_layers,
            self.spatial_maps,
            self.conv_maps[0],
            self.conv_maps[1],
            self.conv_kernel,
            self.conv_stride,
            self.dense_units,
            self.classes,
        ];
        if positive.contains(&0) {
            return Err(Error::invalid(format!("architecture has a zero size: {self:?}")));
        }
        if self.classes < 2 {
            return Err(Error::invalid("need at least two classes"));
        }
        let [l1, l2] = self.conv_lengths();
        if l1 == 0 || l2 == 0 {
            return Err(Error::invalid(format!(
                "{} bins are too few for two convolutions of length {} stride {}",
                self.bins, self.conv_kernel, self.conv_stride
            )));
        }
        Ok(())
    }

    /// Output lengths of the two 1-d convolutions, `floor((L - k) / s) + 1`
    /// (0 if the kernel does not fit).
    pub fn conv_lengths(&self) -> [usize; 2] {
        let out = |len: usize| {
            if len < self.conv_kernel {
                0
            } else {
                (len - self.conv_kernel) / self.conv_stride + 1
            }
        };
        let l1 = out(self.bins);
        [l1, out(l1)]
    }

    pub fn flat_conv_len(&self) -> usize {
        self.conv_maps[1] * self.conv_lengths()[1]
    }

    pub fn head_inputs(&self) -> usize {
        self.dense_units + self.hidden
    }

    /// Total number of learnable scalars:
    ///
    /// ```text
    ///   S(C + 1)                         channel-wise conv, S = spatial maps
    /// + M1(S k + 1) + M2(M1 k + 1)       1-d convs
    /// + U(M2 L2 + 1)                     dense
    /// + 4H(C + H + 1) + (N-1) 4H(2H + 1) LSTM stack, N layers
    /// + K(U + H + 1)                     head, K classes
    /// ```
    pub fn parameter_count(&self) -> usize {
        let s = self.spatial_maps;
        let [m1, m2] = self.conv_maps;
        let k = self.conv_kernel;
        let h = self.hidden;
        let u = self.dense_units;
        let l2 = self.conv_lengths()[1];
        s * (self.channels + 1)
            + m1 * (s * k + 1)
            + m2 * (m1 * k + 1)
            + u * (m2 * l2 + 1)
            + 4 * h * (self.channels + h + 1)
            + (self.lstm_layers - 1) * 4 * h * (2 * h + 1)
            + self.classes * (u + h + 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_geometry() {
        let a = Architecture::standard(32);
        a.validate().unwrap();
        assert_eq!(a.conv_lengths(), [69, 30]);
        assert_eq!(a.flat_conv_len(), 480);
        assert_eq!(a.head_inputs(), 48);
        assert_eq!(a.seq_len * a.time_decimation, 350);
    }

    #[test]
    fn tiny_geometry() {
        let a = Architecture::tiny();
        a.validate().unwrap();
        assert_eq!(a.conv_lengths(), [3, 1]);
    }

    #[test]
    fn too_few_bins() {
        let mut a = Architecture::tiny();
        a.bins = 4;
        assert!(a.validate().is_err());
    }
}
