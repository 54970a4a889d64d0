//! Acquisition-time clocks.
//!
//! Evidence atoms carry a UTC timestamp. The wall clock is the default; the
//! logical clock makes runs byte-for-byte reproducible by ticking a fixed
//! base time forward one second per call, so scripted runs serialize
//! identically across processes.

use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};

/// Base instant for the logical clock: 2000-01-01T00:00:00Z.
pub fn epoch() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2000, 1, 1, 0, 0, 0).unwrap()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockKind {
    #[default]
    Wall,
    Logical,
}

/// Per-worker clock; the logical variant is stateful and must stay confined
/// to one claim's pipeline.
#[derive(Debug, Clone)]
pub enum Clock {
    Wall,
    Logical { base: DateTime<Utc>, ticks: u64 },
}

impl Clock {
    pub fn new(kind: ClockKind) -> Self {
        match kind {
            ClockKind::Wall => Clock::Wall,
            ClockKind::Logical => Clock::Logical {
                base: epoch(),
                ticks: 0,
            },
        }
    }

    pub fn now(&mut self) -> DateTime<Utc> {
        match self {
            Clock::Wall => Utc::now(),
            Clock::Logical { base, ticks } => {
                let t = *base + chrono::Duration::seconds(*ticks as i64);
                *ticks += 1;
                t
            }
        }
    }
}
