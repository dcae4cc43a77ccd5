use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::DmdError;

/// One input stream: language, visual or acoustic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Modality {
    L,
    V,
    A,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::L, Modality::V, Modality::A];

    pub fn index(self) -> usize {
        match self {
            Modality::L => 0,
            Modality::V => 1,
            Modality::A => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Modality::L => "L",
            Modality::V => "V",
            Modality::A => "A",
        }
    }

    /// The two other modalities, in ascending L, V, A order.
    pub fn others(self) -> [Modality; 2] {
        match self {
            Modality::L => [Modality::V, Modality::A],
            Modality::V => [Modality::L, Modality::A],
            Modality::A => [Modality::L, Modality::V],
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Modality {
    type Err = DmdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "L" | "l" => Ok(Modality::L),
            "V" | "v" => Ok(Modality::V),
            "A" | "a" => Ok(Modality::A),
            other => Err(DmdError::Config(format!("unknown modality tag {other:?}"))),
        }
    }
}
