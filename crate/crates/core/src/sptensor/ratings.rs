//! Turns a raw rating log into an order-4 tensor.
//!
//! Input lines are `user item rating timestamp` (whitespace or comma
//! separated, as in the MovieLens `u.data` / `.inter` files). The timestamp
//! (Unix seconds, UTC) is split into two extra modes:
//!
//! * mode 3: calendar year, `year − first_year + 1`
//! * mode 4: hour of day, `hour + 1` (always 24 rows)
//!
//! A non-numeric first line is treated as a header. Zero ratings are
//! replaced with 0.5.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use chrono::{DateTime, Datelike, Timelike};

use super::{CooTensor, Shape};
use crate::error::{Error, Result};

pub const ZERO_REPLACEMENT: f64 = 0.5;

pub fn load_rating_log(path: impl AsRef<Path>) -> Result<CooTensor> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    bucket_ratings(BufReader::new(file))
}

pub fn bucket_ratings<R: BufRead>(reader: R) -> Result<CooTensor> {
    let mut rows: Vec<(usize, usize, i32, u32, f64)> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            msg: e.to_string(),
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|f| !f.is_empty())
            .collect();
        if rows.is_empty() && fields.first().is_some_and(|f| f.parse::<usize>().is_err()) {
            continue;
        }
        if fields.len() < 4 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected user item rating timestamp, found {} fields", fields.len()),
            });
        }
        let bad = |what: &str, f: &str| Error::Parse {
            line: lineno,
            msg: format!("{what} {f:?} is not valid"),
        };
        let user: usize = fields[0].parse().map_err(|_| bad("user", fields[0]))?;
        let item: usize = fields[1].parse().map_err(|_| bad("item", fields[1]))?;
        let mut rating: f64 = fields[2].parse().map_err(|_| bad("rating", fields[2]))?;
        let ts: f64 = fields[3].parse().map_err(|_| bad("timestamp", fields[3]))?;
        if user == 0 || item == 0 || !rating.is_finite() {
            return Err(bad("record", trimmed));
        }
        let when = DateTime::from_timestamp(ts as i64, 0).ok_or_else(|| bad("timestamp", fields[3]))?;
        if rating == 0.0 {
            rating = ZERO_REPLACEMENT;
        }
        rows.push((user, item, when.year(), when.hour(), rating));
    }
    if rows.is_empty() {
        return Err(Error::Data("rating log has no records".into()));
    }
    let first_year = rows.iter().map(|r| r.2).min().unwrap_or_default();
    let last_year = rows.iter().map(|r| r.2).max().unwrap_or_default();
    let users = rows.iter().map(|r| r.0).max().unwrap_or_default();
    let items = rows.iter().map(|r| r.1).max().unwrap_or_default();
    let shape = Shape::new(vec![users, items, (last_year - first_year + 1) as usize, 24])?;
    CooTensor::from_entries(
        shape,
        rows.into_iter().map(|(u, i, y, h, r)| {
            (vec![u, i, (y - first_year + 1) as usize, h as usize + 1], r)
        }),
    )
}
