use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::corpus::DateWindow;
use crate::error::{Error, Result};

/// A 7-day analysis epoch. `t` is 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeekIndex {
    pub t: usize,
    pub start_date: NaiveDate,
    pub end_date: NaiveDate,
}

impl WeekIndex {
    pub fn nth(epoch_start: NaiveDate, t: usize) -> Self {
        assert!(t >= 1, "weeks are 1-based");
        let start_date = epoch_start + Duration::days(7 * (t as i64 - 1));
        WeekIndex {
            t,
            start_date,
            end_date: start_date + Duration::days(6),
        }
    }

    pub fn label(&self) -> String {
        format!("week_{}", self.t)
    }
}

/// Week containing `date`, counting 7-day spans from `epoch_start`.
pub fn assign_week(date: NaiveDate, epoch_start: NaiveDate) -> Result<WeekIndex> {
    let days = (date - epoch_start).num_days();
    if days < 0 {
        return Err(Error::Validation(format!(
            "date {date} precedes epoch start {epoch_start}"
        )));
    }
    Ok(WeekIndex::nth(epoch_start, days as usize / 7 + 1))
}

/// All weeks overlapping the window, starting at the window start.
pub fn weeks_for_window(window: &DateWindow) -> Vec<WeekIndex> {
    let last = assign_week(window.end, window.start)
        .expect("window end never precedes its start")
        .t;
    (1..=last).map(|t| WeekIndex::nth(window.start, t)).collect()
}
