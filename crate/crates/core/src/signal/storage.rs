//! On-disk epoch dataset: `manifest.json` plus `epochs.bin`.
//!
//! `epochs.bin` is the concatenation of all trials. A trial block holds one
//! `channels x samples` matrix per montage listed in the manifest, in that
//! order, each as 32-bit little-endian IEEE-754 floats, row-major with one
//! channel per row. A trial's `offset` is the byte offset of its block.

use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Condition, Epoch, Montage};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const EPOCHS_FILE: &str = "epochs.bin";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialRecord {
    pub subject_id: u32,
    pub condition: Condition,
    pub label: usize,
    /// Index of the trial within its (subject, condition, class) cell.
    pub trial_index: usize,
    /// Byte offset of the trial block in `epochs.bin`.
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub montages: Vec<Montage>,
    pub rate: f64,
    pub samples: usize,
    pub class_count: usize,
    pub trials: Vec<TrialRecord>,
    /// Provenance of generated datasets (the full generator configuration).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<serde_json::Value>,
}

impl Manifest {
    /// Size in bytes of one trial block.
    pub fn trial_bytes(&self) -> u64 {
        let channels: usize = self.montages.iter().map(|m| m.channel_count()).sum();
        (channels * self.samples * 4) as u64
    }
}

/// Streams trials to disk. Call [`DatasetWriter::finish`] to write the
/// manifest; without it the directory holds no valid dataset.
pub struct DatasetWriter {
    dir: PathBuf,
    out: BufWriter<File>,
    manifest: Manifest,
    offset: u64,
}

impl DatasetWriter {
    pub fn create(
        dir: impl AsRef<Path>,
        montages: &[Montage],
        rate: f64,
        samples: usize,
        class_count: usize,
    ) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        if montages.is_empty() {
            return Err(Error::invalid("dataset needs at least one montage"));
        }
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let path = dir.join(EPOCHS_FILE);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        Ok(DatasetWriter {
            dir,
            out: BufWriter::new(file),
            manifest: Manifest {
                format_version: FORMAT_VERSION,
                montages: montages.to_vec(),
                rate,
                samples,
                class_count,
                trials: Vec::new(),
                generator: None,
            },
            offset: 0,
        })
    }

    /// Appends one trial; `epochs[i]` must use `montages[i]`.
    pub fn push(&mut self, trial_index: usize, epochs: &[&Epoch]) -> Result<()> {
        let m = &self.manifest;
        if epochs.len() != m.montages.len() {
            return Err(Error::invalid(format!(
                "trial has {} epochs, dataset has {} montages",
                epochs.len(),
                m.montages.len()
            )));
        }
        let first = epochs[0];
        for (e, &montage) in epochs.iter().zip(&m.montages) {
            if e.montage != montage
                || e.rate != m.rate
                || e.samples() != m.samples
                || e.channels() != montage.channel_count()
            {
                return Err(Error::invalid(format!(
                    "epoch ({}, {} Hz, {}x{}) does not match dataset ({montage}, {} Hz, T = {})",
                    e.montage,
                    e.rate,
                    e.channels(),
                    e.samples(),
                    m.rate,
                    m.samples
                )));
            }
            if e.label != first.label
                || e.subject_id != first.subject_id
                || e.condition != first.condition
            {
                return Err(Error::invalid("epochs of one trial disagree on metadata"));
            }
            if e.label >= m.class_count {
                return Err(Error::invalid(format!("label {} out of range", e.label)));
            }
        }
        let path = self.dir.join(EPOCHS_FILE);
        for e in epochs {
            for &v in e.data.as_slice() {
                self.out
                    .write_all(&(v as f32).to_le_bytes())
                    .map_err(|err| Error::io(&path, err))?;
            }
        }
        self.manifest.trials.push(TrialRecord {
            subject_id: first.subject_id,
            condition: first.condition,
            label: first.label,
            trial_index,
            offset: self.offset,
        });
        self.offset += self.manifest.trial_bytes();
        Ok(())
    }

    pub fn finish(mut self, generator: Option<serde_json::Value>) -> Result<Manifest> {
        let bin = self.dir.join(EPOCHS_FILE);
        self.out.flush().map_err(|e| Error::io(&bin, e))?;
        self.manifest.generator = generator;
        let path = self.dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&self.manifest)?;
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(self.manifest)
    }
}

/// A dataset held in memory.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: Manifest,
    data: Vec<f32>,
}

impl Dataset {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mpath = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
        let manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| Error::format(&mpath, e.to_string()))?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(Error::format(
                &mpath,
                format!("unsupported format version {}", manifest.format_version),
            ));
        }
        let bpath = dir.join(EPOCHS_FILE);
        let mut bytes = Vec::new();
        File::open(&bpath)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(&bpath, e))?;
        let block = manifest.trial_bytes();
        let expected = block * manifest.trials.len() as u64;
        if bytes.len() as u64 != expected {
            return Err(Error::format(
                &bpath,
                format!("{} bytes on disk, manifest implies {expected}", bytes.len()),
            ));
        }
        for (i, t) in manifest.trials.iter().enumerate() {
            if t.offset % 4 != 0 || t.offset + block > expected {
                return Err(Error::format(&mpath, format!("trial {i} has bad offset {}", t.offset)));
            }
            if t.label >= manifest.class_count {
                return Err(Error::format(&mpath, format!("trial {i} has label {}", t.label)));
            }
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Dataset { manifest, data })
    }

    pub fn trials(&self) -> &[TrialRecord] {
        &self.manifest.trials
    }

    pub fn has_montage(&self, montage: Montage) -> bool {
        self.manifest.montages.contains(&montage)
    }

    /// Decodes trial `index` for `montage`.
    pub fn epoch(&self, index: usize, montage: Montage) -> Result<Epoch> {
        let m = &self.manifest;
        let trial = m
            .trials
            .get(index)
            .ok_or_else(|| Error::invalid(format!("trial {index} out of range")))?;
        let mut start = (trial.offset / 4) as usize;
        let mut found = false;
        for &mm in &m.montages {
            if mm == montage {
                found = true;
                break;
            }
            start += mm.channel_count() * m.samples;
        }
        if !found {
            return Err(Error::invalid(format!("dataset has no {montage} montage")));
        }
        let len = montage.channel_count() * m.samples;
        let values = self.data[start..start + len].iter().map(|&v| v as f64).collect();
        Ok(Epoch {
            montage,
            rate: m.rate,
            data: Matrix::from_vec(montage.channel_count(), m.samples, values)?,
            label: trial.label,
            condition: trial.condition,
            subject_id: trial.subject_id,
        })
    }

    /// Indices of the trials of one subject in one condition, in file order.
    pub fn select(&self, subject_id: u32, condition: Condition) -> Vec<usize> {
        self.manifest
            .trials
            .iter()
            .enumerate()
            .filter(|(_, t)| t.subject_id == subject_id && t.condition == condition)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn subject_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.manifest.trials.iter().map(|t| t.subject_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}
