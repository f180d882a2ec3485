//! Trading-session layout: day length, warmup skip, and bin geometry.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Seconds in the default 6.5-hour trading session.
pub const DEFAULT_SESSION_LENGTH_S: u32 = 23_400;
/// Seconds discarded at the session open before binning.
pub const DEFAULT_WARMUP_SKIP_S: u32 = 300;
/// Width of a counting bin, seconds.
pub const DEFAULT_BIN_WIDTH_S: u32 = 120;
/// Complete bins per day. With the defaults, 300 + 192*120 = 23340 <= 23400;
/// the trailing 60 s of each day are discarded.
pub const DEFAULT_BINS_PER_DAY: u32 = 192;

/// Geometry of a multi-day observation session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionSpec {
    /// Length of one trading day, seconds.
    pub session_length: u32,
    /// Seconds skipped at the session open before the first bin.
    pub warmup_skip: u32,
    /// Bin width, seconds.
    pub bin_width: u32,
    /// Number of complete bins per day; any trailing remainder of the day
    /// is discarded.
    pub bins_per_day: u32,
    /// Number of trading days.
    pub days: usize,
    /// Resolution of the count series, seconds.
    pub tick_resolution: u32,
    /// When true, the rate noise restarts from its stationary law at each
    /// day boundary instead of evolving continuously across days.
    #[serde(default)]
    pub noise_reset_daily: bool,
}

impl SessionSpec {
    /// Session with default intra-day geometry over `days` days.
    pub fn with_days(days: usize) -> Self {
        SessionSpec {
            session_length: DEFAULT_SESSION_LENGTH_S,
            warmup_skip: DEFAULT_WARMUP_SKIP_S,
            bin_width: DEFAULT_BIN_WIDTH_S,
            bins_per_day: DEFAULT_BINS_PER_DAY,
            days,
            tick_resolution: 1,
            noise_reset_daily: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.session_length == 0 || self.bin_width == 0 || self.bins_per_day == 0 {
            return Err(Error::InvalidSession(
                "session_length, bin_width, and bins_per_day must be positive".into(),
            ));
        }
        if self.days == 0 {
            return Err(Error::InvalidSession("days must be >= 1".into()));
        }
        if self.tick_resolution == 0 {
            return Err(Error::InvalidSession("tick_resolution must be >= 1".into()));
        }
        let binned = self.warmup_skip as u64 + self.bins_per_day as u64 * self.bin_width as u64;
        if binned > self.session_length as u64 {
            return Err(Error::InvalidSession(format!(
                "warmup_skip + bins_per_day * bin_width = {binned} exceeds session_length {}",
                self.session_length
            )));
        }
        if self.session_length % self.tick_resolution != 0 {
            return Err(Error::InvalidSession(
                "session_length must be a multiple of tick_resolution".into(),
            ));
        }
        if self.warmup_skip % self.tick_resolution != 0
            || self.bin_width % self.tick_resolution != 0
        {
            return Err(Error::InvalidSession(
                "warmup_skip and bin_width must be multiples of tick_resolution".into(),
            ));
        }
        Ok(())
    }

    /// Count intervals per day.
    pub fn ticks_per_day(&self) -> usize {
        (self.session_length / self.tick_resolution) as usize
    }

    /// Total count intervals across all days.
    pub fn total_ticks(&self) -> usize {
        self.days * self.ticks_per_day()
    }

    /// Mid-time of bin `b`, seconds from session open.
    pub fn bin_mid_time(&self, b: u32) -> f64 {
        f64::from(self.warmup_skip) + (f64::from(b) + 0.5) * f64::from(self.bin_width)
    }

    /// End of the binned region, seconds from session open.
    pub fn binned_end(&self) -> u32 {
        self.warmup_skip + self.bins_per_day * self.bin_width
    }

    /// Bin index containing time-of-day `t`, or `None` when `t` falls in the
    /// warmup skip or the trailing discarded remainder.
    pub fn bin_of(&self, t: f64) -> Option<u32> {
        if t < f64::from(self.warmup_skip) || t >= f64::from(self.binned_end()) {
            return None;
        }
        let b = ((t - f64::from(self.warmup_skip)) / f64::from(self.bin_width)) as u32;
        Some(b.min(self.bins_per_day - 1))
    }
}

impl Default for SessionSpec {
    fn default() -> Self {
        SessionSpec::with_days(21)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_consistent() {
        let s = SessionSpec::default();
        s.validate().unwrap();
        assert_eq!(s.binned_end(), 23_340);
        assert_eq!(s.ticks_per_day(), 23_400);
        assert_eq!(s.total_ticks(), 21 * 23_400);
    }

    #[test]
    fn bin_layout() {
        let s = SessionSpec::with_days(1);
        assert_eq!(s.bin_of(0.0), None);
        assert_eq!(s.bin_of(299.9), None);
        assert_eq!(s.bin_of(300.0), Some(0));
        assert_eq!(s.bin_of(301.0), Some(0));
        assert_eq!(s.bin_of(419.99), Some(0));
        assert_eq!(s.bin_of(420.0), Some(1));
        assert_eq!(s.bin_of(23_339.9), Some(191));
        assert_eq!(s.bin_of(23_340.0), None);
        assert_eq!(s.bin_of(23_399.0), None);
        assert_eq!(s.bin_mid_time(0), 360.0);
    }

    #[test]
    fn validation_rejects_overfull_day() {
        let mut s = SessionSpec::with_days(1);
        s.bins_per_day = 193;
        assert!(s.validate().is_err());
        s.bins_per_day = 192;
        s.days = 0;
        assert!(s.validate().is_err());
    }
}
