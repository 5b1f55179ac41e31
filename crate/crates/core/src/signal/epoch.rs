use serde::{Deserialize, Serialize};

use super::montage::{Condition, Montage};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// A continuous multichannel recording from one subject in one condition.
#[derive(Debug, Clone)]
pub struct ContinuousRecording {
    montage: Montage,
    rate: f64,
    data: Matrix,
    condition: Condition,
    subject_id: u32,
}

impl ContinuousRecording {
    pub fn new(
        montage: Montage,
        rate: f64,
        data: Matrix,
        condition: Condition,
        subject_id: u32,
    ) -> Result<Self> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::invalid(format!("sample rate must be positive, got {rate}")));
        }
        if data.rows() != montage.channel_count() {
            return Err(Error::invalid(format!(
                "{montage} montage has {} channels but data has {} rows",
                montage.channel_count(),
                data.rows()
            )));
        }
        if !data.is_finite() {
            return Err(Error::invalid("recording contains non-finite samples"));
        }
        if subject_id == 0 {
            return Err(Error::invalid("subject ids start at 1"));
        }
        Ok(ContinuousRecording {
            montage,
            rate,
            data,
            condition,
            subject_id,
        })
    }

    pub fn montage(&self) -> Montage {
        self.montage
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn data(&self) -> &Matrix {
        &self.data
    }

    pub fn condition(&self) -> Condition {
        self.condition
    }

    pub fn subject_id(&self) -> u32 {
        self.subject_id
    }

    pub fn samples(&self) -> usize {
        self.data.cols()
    }
}

/// One trial: a fixed-length multichannel window aligned to stimulus onset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Epoch {
    pub montage: Montage,
    pub rate: f64,
    #[serde(skip, default = "empty_matrix")]
    pub data: Matrix,
    pub label: usize,
    pub condition: Condition,
    pub subject_id: u32,
}

fn empty_matrix() -> Matrix {
    Matrix::zeros(0, 0)
}

impl Epoch {
    pub fn samples(&self) -> usize {
        self.data.cols()
    }

    pub fn channels(&self) -> usize {
        self.data.rows()
    }
}

/// Cuts `[onset, onset + round(window_s * rate))` windows out of a recording.
pub fn extract_epochs(
    rec: &ContinuousRecording,
    onsets: &[usize],
    window_s: f64,
    labels: &[usize],
) -> Result<Vec<Epoch>> {
    if onsets.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} onsets but {} labels",
            onsets.len(),
            labels.len()
        )));
    }
    if !(window_s > 0.0) {
        return Err(Error::invalid("epoch window must be positive"));
    }
    let len = (window_s * rec.rate).round() as usize;
    let total = rec.samples();
    onsets
        .iter()
        .zip(labels)
        .enumerate()
        .map(|(i, (&onset, &label))| {
            if onset + len > total {
                return Err(Error::invalid(format!(
                    "onset #{i} at sample {onset} needs {len} samples but the recording has {total}"
                )));
            }
            let mut data = Matrix::zeros(rec.data.rows(), len);
            for c in 0..rec.data.rows() {
                data.row_mut(c)
                    .copy_from_slice(&rec.data.row(c)[onset..onset + len]);
            }
            Ok(Epoch {
                montage: rec.montage,
                rate: rec.rate,
                data,
                label,
                condition: rec.condition,
                subject_id: rec.subject_id,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp_recording(samples: usize) -> ContinuousRecording {
        let mut data = Matrix::zeros(18, samples);
        for c in 0..18 {
            for t in 0..samples {
                data.set(c, t, (c * 10_000 + t) as f64);
            }
        }
        ContinuousRecording::new(Montage::Ear18, 100.0, data, Condition::Walk08, 3).unwrap()
    }

    #[test]
    fn window_of_three_and_a_half_seconds_is_350_samples() {
        let rec = ramp_recording(1000);
        let epochs = extract_epochs(&rec, &[0], 3.5, &[2]).unwrap();
        assert_eq!(epochs[0].samples(), 350);
        assert_eq!(epochs[0].label, 2);
        assert_eq!(epochs[0].condition, Condition::Walk08);
        assert_eq!(epochs[0].subject_id, 3);
    }

    #[test]
    fn onset_past_the_end_is_rejected_by_index() {
        let rec = ramp_recording(1000);
        let err = extract_epochs(&rec, &[0, 700], 3.5, &[0, 1]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("#1") && msg.contains("700"), "{msg}");
        // exactly at the boundary is fine
        assert!(extract_epochs(&rec, &[650], 3.5, &[0]).is_ok());
    }

    #[test]
    fn epochs_are_exact_slices() {
        let rec = ramp_recording(1000);
        let epochs = extract_epochs(&rec, &[0, 400], 3.5, &[0, 1]).unwrap();
        for (e, onset) in epochs.iter().zip([0usize, 400]) {
            for c in 0..18 {
                assert_eq!(e.data.row(c), &rec.data().row(c)[onset..onset + 350]);
            }
        }
    }

    #[test]
    fn recording_validation() {
        let bad = Matrix::zeros(17, 10);
        assert!(ContinuousRecording::new(Montage::Ear18, 100.0, bad, Condition::Standing, 1).is_err());
        let ok = Matrix::zeros(18, 10);
        assert!(ContinuousRecording::new(Montage::Ear18, 0.0, ok.clone(), Condition::Standing, 1).is_err());
        let mut nan = ok;
        nan.set(0, 0, f64::NAN);
        assert!(ContinuousRecording::new(Montage::Ear18, 100.0, nan, Condition::Standing, 1).is_err());
    }
}
