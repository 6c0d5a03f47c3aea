//! Pole and weather temperature logs.
//!
//! Pole CSV rows are `timestamp_iso8601,celsius`, weather rows
//! `hour_iso8601,celsius`. A header row is optional. Timestamps must be RFC
//! 3339 (`2024-07-01T13:05:00Z`, any offset); a timestamp without an offset is
//! read as UTC. Rows that do not parse are skipped and counted.

use std::io::BufRead;

use chrono::{DateTime, NaiveDateTime, SecondsFormat, Utc};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedLog {
    /// `(unix seconds, celsius)` in file order.
    pub samples: Vec<(i64, f64)>,
    /// 1-based line numbers of skipped rows, header excluded.
    pub skipped: Vec<u64>,
}

pub fn parse_timestamp(text: &str) -> Option<i64> {
    let text = text.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(text) {
        return Some(t.timestamp());
    }
    ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(text, f).ok())
        .map(|t| t.and_utc().timestamp())
}

pub fn format_timestamp(t: i64) -> String {
    DateTime::<Utc>::from_timestamp(t, 0)
        .map(|d| d.to_rfc3339_opts(SecondsFormat::Secs, true))
        .unwrap_or_else(|| t.to_string())
}

fn parse_row(line: &str) -> Option<(i64, f64)> {
    let (t, c) = line.split_once(',')?;
    let c: f64 = c.trim().parse().ok()?;
    Some((parse_timestamp(t)?, c)).filter(|_| c.is_finite())
}

/// Reads a two-column temperature log.
pub fn read_log<R: BufRead>(source: R) -> Result<ParsedLog> {
    let mut log = ParsedLog { samples: Vec::new(), skipped: Vec::new() };
    for (i, line) in source.lines().enumerate() {
        let line = line?;
        let line_no = i as u64 + 1;
        if line.trim().is_empty() {
            continue;
        }
        match parse_row(&line) {
            Some(s) => log.samples.push(s),
            // A non-numeric first row is a header.
            None if line_no == 1 && log.samples.is_empty() => {}
            None => log.skipped.push(line_no),
        }
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_common_iso_forms() {
        assert_eq!(parse_timestamp("1970-01-01T01:00:00Z"), Some(3600));
        assert_eq!(parse_timestamp("1970-01-01T02:00:00+01:00"), Some(3600));
        assert_eq!(parse_timestamp("1970-01-01 01:00:00"), Some(3600));
        assert_eq!(parse_timestamp("1970-01-01T01:00"), Some(3600));
        assert_eq!(parse_timestamp("1970-01-01T00:00:00.750Z"), Some(0));
        assert_eq!(parse_timestamp("yesterday"), None);
        assert_eq!(format_timestamp(3600), "1970-01-01T01:00:00Z");
    }

    #[test]
    fn skips_and_counts_bad_rows() {
        let text = "timestamp_iso8601,celsius\n\
                    2024-07-01T00:00:00Z,30.5\n\
                    2024-07-01T00:10:00Z,hot\n\
                    \n\
                    not a time,31\n\
                    2024-07-01T00:20:00Z,NaN\n\
                    2024-07-01T01:00:00Z,29\n";
        let log = read_log(text.as_bytes()).unwrap();
        assert_eq!(log.samples, vec![(1719792000, 30.5), (1719795600, 29.0)]);
        assert_eq!(log.skipped, vec![3, 5, 6]);
    }

    #[test]
    fn header_is_optional() {
        let log = read_log("1970-01-01T00:00:00Z,1\n".as_bytes()).unwrap();
        assert_eq!(log.samples, vec![(0, 1.0)]);
        assert!(log.skipped.is_empty());
    }
}
