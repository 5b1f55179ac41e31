use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

const SCALP32: [&str; 32] = [
    "Fp1", "Fp2", "AFz", "F7", "F3", "Fz", "F4", "F8", "FC5", "FC1", "FC2", "FC6", "C3", "Cz",
    "C4", "CP5", "CP1", "CP2", "CP6", "P7", "P3", "Pz", "P4", "P8", "PO7", "PO3", "POz", "PO4",
    "PO8", "O1", "Oz", "O2",
];

const EAR18: [&str; 18] = [
    "L1", "L2", "L3", "L4", "L5", "L6", "L7", "L8", "L9", "L10", "R1", "R2", "R3", "R4", "R5",
    "R6", "R7", "R8",
];

/// Electrode layout. The channel lists are fixed, so a montage with the
/// wrong number of channels cannot be constructed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Montage {
    /// 32-channel cap, 10-20 positions weighted towards the occipital area.
    Scalp32,
    /// cEEGrid pair: ten electrodes around the left ear, eight around the right.
    Ear18,
}

/// Coarse scalp region, used by the synthetic generator's gain topography.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Frontal,
    Central,
    Parietal,
    Occipital,
    Ear,
}

impl Montage {
    pub const ALL: [Montage; 2] = [Montage::Scalp32, Montage::Ear18];

    pub fn labels(self) -> &'static [&'static str] {
        match self {
            Montage::Scalp32 => &SCALP32,
            Montage::Ear18 => &EAR18,
        }
    }

    pub fn channel_count(self) -> usize {
        self.labels().len()
    }

    /// Short lower-case name used in file names and on the command line.
    pub fn short_name(self) -> &'static str {
        match self {
            Montage::Scalp32 => "scalp",
            Montage::Ear18 => "ear",
        }
    }

    pub fn region(self, channel: usize) -> Region {
        let label = self.labels()[channel];
        match self {
            Montage::Ear18 => Region::Ear,
            Montage::Scalp32 => {
                if label.starts_with("PO") || label.starts_with('O') {
                    Region::Occipital
                } else if label.starts_with('P') || label.starts_with("CP") {
                    Region::Parietal
                } else if label.starts_with('C') {
                    Region::Central
                } else {
                    Region::Frontal
                }
            }
        }
    }
}

impl fmt::Display for Montage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for Montage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "scalp" | "scalp32" | "cap" => Ok(Montage::Scalp32),
            "ear" | "ear18" => Ok(Montage::Ear18),
            other => Err(Error::invalid(format!("unknown montage '{other}' (expected scalp or ear)"))),
        }
    }
}

/// Recording condition: standing still or walking on the treadmill.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Condition {
    Standing,
    /// 0.8 m/s
    Walk08,
    /// 1.6 m/s
    Walk16,
}

impl Condition {
    pub const ALL: [Condition; 3] = [Condition::Standing, Condition::Walk08, Condition::Walk16];

    /// Row label in accuracy tables.
    pub fn table_label(self) -> &'static str {
        match self {
            Condition::Standing => "Standing",
            Condition::Walk08 => "0.8m/s",
            Condition::Walk16 => "1.6m/s",
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            Condition::Standing => "standing",
            Condition::Walk08 => "walk08",
            Condition::Walk16 => "walk16",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "standing" | "stand" | "0" => Ok(Condition::Standing),
            "walk08" | "0.8" | "0.8m/s" => Ok(Condition::Walk08),
            "walk16" | "1.6" | "1.6m/s" => Ok(Condition::Walk16),
            other => Err(Error::invalid(format!(
                "unknown condition '{other}' (expected standing, walk08 or walk16)"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn montage_cardinalities_and_order() {
        assert_eq!(Montage::Scalp32.channel_count(), 32);
        assert_eq!(Montage::Ear18.channel_count(), 18);
        assert_eq!(Montage::Scalp32.labels()[0], "Fp1");
        assert_eq!(Montage::Scalp32.labels()[31], "O2");
        assert_eq!(&Montage::Ear18.labels()[..2], &["L1", "L2"]);
        assert_eq!(Montage::Ear18.labels()[10], "R1");
        for m in Montage::ALL {
            let unique: HashSet<_> = m.labels().iter().collect();
            assert_eq!(unique.len(), m.channel_count());
        }
    }

    #[test]
    fn occipital_region() {
        let occ: Vec<_> = (0..32)
            .filter(|&c| Montage::Scalp32.region(c) == Region::Occipital)
            .map(|c| Montage::Scalp32.labels()[c])
            .collect();
        assert_eq!(occ, ["PO7", "PO3", "POz", "PO4", "PO8", "O1", "Oz", "O2"]);
        assert_eq!(Montage::Scalp32.region(0), Region::Frontal);
        assert_eq!(Montage::Scalp32.region(13), Region::Central);
        assert_eq!(Montage::Scalp32.region(16), Region::Parietal);
    }

    #[test]
    fn parse_names() {
        assert_eq!("ear".parse::<Montage>().unwrap(), Montage::Ear18);
        assert_eq!("walk16".parse::<Condition>().unwrap(), Condition::Walk16);
        assert!("knee".parse::<Montage>().is_err());
    }
}
