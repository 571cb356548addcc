use chrono::{DateTime, Datelike, Duration, NaiveTime, Utc};

use super::types::Granularity;

/// Start of the UTC day or ISO week (Monday 00:00) containing `t`.
pub fn window_start(t: DateTime<Utc>, g: Granularity) -> DateTime<Utc> {
    let day = t.date_naive();
    let day = match g {
        Granularity::Day => day,
        Granularity::Week => day - Duration::days(day.weekday().num_days_from_monday() as i64),
    };
    day.and_time(NaiveTime::MIN).and_utc()
}

pub fn window_len(g: Granularity) -> Duration {
    match g {
        Granularity::Day => Duration::days(1),
        Granularity::Week => Duration::weeks(1),
    }
}

/// Every window start from the one containing `from` to the one containing `to`.
pub fn windows(from: DateTime<Utc>, to: DateTime<Utc>, g: Granularity) -> Vec<DateTime<Utc>> {
    let mut out = Vec::new();
    let mut w = window_start(from, g);
    let last = window_start(to, g);
    while w <= last {
        out.push(w);
        w += window_len(g);
    }
    out
}
