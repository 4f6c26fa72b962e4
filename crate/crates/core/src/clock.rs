//! Search budget clocks.
//!
//! The default clock counts work units (move evaluations and per-offspring
//! overhead) and converts them to seconds with a fixed rate, so a run with a
//! given seed and budget is reproducible on any machine. The wall clock is
//! available when real elapsed time matters more than reproducibility.

use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

/// Work units per virtual second. Calibrated so that on a single core of the
/// reference machine one virtual second is close to one second of wall time
/// for n = 100 searches in an optimized build.
pub const DEFAULT_UNITS_PER_SECOND: f64 = 58_000_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClockMode {
    #[default]
    Work,
    Wall,
}

impl FromStr for ClockMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "work" => Ok(ClockMode::Work),
            "wall" => Ok(ClockMode::Wall),
            other => Err(format!("unknown clock mode `{other}` (expected work or wall)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClockConfig {
    pub mode: ClockMode,
    pub units_per_second: f64,
}

impl Default for ClockConfig {
    fn default() -> Self {
        ClockConfig {
            mode: ClockMode::Work,
            units_per_second: DEFAULT_UNITS_PER_SECOND,
        }
    }
}

impl ClockConfig {
    pub fn wall() -> Self {
        ClockConfig {
            mode: ClockMode::Wall,
            ..Self::default()
        }
    }

    pub fn start(self) -> Clock {
        Clock {
            config: self,
            started: Instant::now(),
            units: 0,
        }
    }

    pub fn units_to_seconds(&self, units: u64) -> f64 {
        units as f64 / self.units_per_second
    }
}

#[derive(Debug, Clone)]
pub struct Clock {
    config: ClockConfig,
    started: Instant,
    units: u64,
}

impl Clock {
    #[inline]
    pub fn charge(&mut self, units: u64) {
        self.units += units;
    }

    pub fn units(&self) -> u64 {
        self.units
    }

    pub fn mode(&self) -> ClockMode {
        self.config.mode
    }

    /// Elapsed seconds on this clock.
    pub fn elapsed(&self) -> f64 {
        match self.config.mode {
            ClockMode::Work => self.config.units_to_seconds(self.units),
            ClockMode::Wall => self.wall_seconds(),
        }
    }

    pub fn wall_seconds(&self) -> f64 {
        self.started.elapsed().as_secs_f64()
    }
}
