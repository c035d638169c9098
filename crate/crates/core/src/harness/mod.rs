//! Executable oracles and drivers.
//!
//! * [`stepper`]: exhaustive local-consistency checks of single atomic steps.
//! * [`stress`]: global-consistency stress runs with cold and hot key ranges.
//! * [`history`] and [`lincheck`]: operation histories and a brute-force
//!   linearizability checker.
//! * [`bench`]: the throughput benchmark.

pub mod bench;
pub mod history;
pub mod lincheck;
pub mod stepper;
pub mod stress;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Which backend a driver runs against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Structure {
    Ubst,
    Hashset,
}

impl Structure {
    pub const ALL: [Structure; 2] = [Structure::Ubst, Structure::Hashset];

    pub fn name(self) -> &'static str {
        match self {
            Structure::Ubst => "ubst",
            Structure::Hashset => "hashset",
        }
    }
}

impl fmt::Display for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Structure {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "ubst" => Ok(Structure::Ubst),
            "hashset" => Ok(Structure::Hashset),
            other => Err(crate::Error::InvalidConfig(format!("unknown structure {other:?}"))),
        }
    }
}

/// Operation mix in percent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mix {
    pub insert: u8,
    pub delete: u8,
    pub contains: u8,
}

/// One set operation drawn from a [`Mix`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateKind {
    Insert,
    Delete,
    Contains,
}

impl Mix {
    pub const READ_HEAVY: Mix = Mix {
        insert: 25,
        delete: 25,
        contains: 50,
    };
    pub const UPDATE_ONLY: Mix = Mix {
        insert: 50,
        delete: 50,
        contains: 0,
    };

    pub fn validate(&self) -> crate::Result<()> {
        let sum = self.insert as u32 + self.delete as u32 + self.contains as u32;
        if sum != 100 {
            return Err(crate::Error::InvalidConfig(format!(
                "mix {self} sums to {sum}, not 100"
            )));
        }
        Ok(())
    }

    /// Maps a uniform draw in `0..100` to an operation.
    pub fn pick(&self, roll: u8) -> UpdateKind {
        if roll < self.insert {
            UpdateKind::Insert
        } else if roll < self.insert + self.delete {
            UpdateKind::Delete
        } else {
            UpdateKind::Contains
        }
    }
}

impl fmt::Display for Mix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}-{}", self.insert, self.delete, self.contains)
    }
}

impl FromStr for Mix {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        let bad = || crate::Error::InvalidConfig(format!("mix {s:?} is not INSERT-DELETE-CONTAINS"));
        let parts: Vec<u8> = s
            .split('-')
            .map(|p| p.parse::<u8>().map_err(|_| bad()))
            .collect::<crate::Result<_>>()?;
        let [insert, delete, contains] = parts[..] else {
            return Err(bad());
        };
        let mix = Mix {
            insert,
            delete,
            contains,
        };
        mix.validate()?;
        Ok(mix)
    }
}

/// Runs `$body` with `$set` bound to a fresh `ConcurrentSet` over the
/// requested backend.
macro_rules! with_set {
    ($structure:expr, $threads:expr, $sorted:expr, |$set:ident| $body:expr) => {
        match $structure {
            $crate::harness::Structure::Ubst => {
                let $set = $crate::ConcurrentSet::new($crate::Ubst::new(), $threads)
                    .with_sorted_append($sorted);
                $body
            }
            $crate::harness::Structure::Hashset => {
                let $set = $crate::ConcurrentSet::new($crate::HashSet::new(), $threads)
                    .with_sorted_append($sorted);
                $body
            }
        }
    };
}
pub(crate) use with_set;
