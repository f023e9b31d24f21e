//! Daily closing-price series: loading, validation, splitting and causal views.
//!
//! A [`PriceSeries`] holds one stock's closes together with the index of the
//! first evaluation day. Everything before `eval_start` stays available as
//! warm-up history for indicators, but trading only happens from
//! `eval_start` on.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;

use crate::error::{Error, Result};

const DATE_FORMAT: &str = "%Y-%m-%d";

#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    symbol: String,
    dates: Vec<NaiveDate>,
    closes: Vec<f64>,
    eval_start: usize,
}

impl PriceSeries {
    /// Builds a validated series with `eval_start = 0`.
    pub fn new(symbol: impl Into<String>, dates: Vec<NaiveDate>, closes: Vec<f64>) -> Result<Self> {
        let symbol = symbol.into();
        if dates.len() != closes.len() {
            return Err(Error::Validation(format!(
                "{symbol}: {} dates but {} closes",
                dates.len(),
                closes.len()
            )));
        }
        if closes.is_empty() {
            return Err(Error::InsufficientData(format!("{symbol}: empty series")));
        }
        if let Some(i) = closes.iter().position(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(Error::Validation(format!(
                "{symbol}: close at index {i} is {} (must be positive)",
                closes[i]
            )));
        }
        if let Some(i) = dates.windows(2).position(|w| w[0] >= w[1]) {
            return Err(Error::Validation(format!(
                "{symbol}: dates not strictly increasing at index {}",
                i + 1
            )));
        }
        Ok(Self {
            symbol,
            dates,
            closes,
            eval_start: 0,
        })
    }

    /// Series with consecutive business-day dates starting at `start`.
    /// Mostly useful for synthetic data and tests.
    pub fn from_closes(
        symbol: impl Into<String>,
        start: NaiveDate,
        closes: Vec<f64>,
    ) -> Result<Self> {
        let dates = business_days(start, closes.len());
        Self::new(symbol, dates, closes)
    }

    pub fn symbol(&self) -> &str {
        &self.symbol
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn closes(&self) -> &[f64] {
        &self.closes
    }

    pub fn len(&self) -> usize {
        self.closes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.closes.is_empty()
    }

    pub fn eval_start(&self) -> usize {
        self.eval_start
    }

    pub fn last_index(&self) -> usize {
        self.closes.len() - 1
    }

    /// Closes of the evaluation window, `eval_start..=last`.
    pub fn eval_closes(&self) -> &[f64] {
        &self.closes[self.eval_start..]
    }

    pub fn with_eval_start(mut self, eval_start: usize) -> Result<Self> {
        if eval_start >= self.len() {
            return Err(Error::Domain(format!(
                "{}: eval_start {eval_start} outside series of length {}",
                self.symbol,
                self.len()
            )));
        }
        self.eval_start = eval_start;
        Ok(self)
    }

    /// Sub-series `range`, re-indexed from zero, with `eval_start = 0`.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<Self> {
        if range.start >= range.end || range.end > self.len() {
            return Err(Error::Domain(format!(
                "{}: slice {range:?} outside series of length {}",
                self.symbol,
                self.len()
            )));
        }
        Ok(Self {
            symbol: self.symbol.clone(),
            dates: self.dates[range.clone()].to_vec(),
            closes: self.closes[range].to_vec(),
            eval_start: 0,
        })
    }

    /// Causal view ending at index `now`.
    pub fn view(&self, now: usize) -> HistoryView<'_> {
        assert!(now < self.len(), "view index {now} beyond series end");
        HistoryView {
            closes: &self.closes[..=now],
        }
    }
}

/// Read-only window onto `s(0..=now)`.
///
/// Anything after `now` is simply not reachable through this type; a
/// predictor that needs `s(t+1)` must receive it through its own argument.
#[derive(Debug, Clone, Copy)]
pub struct HistoryView<'a> {
    closes: &'a [f64],
}

impl<'a> HistoryView<'a> {
    pub fn from_slice(closes: &'a [f64]) -> Self {
        assert!(!closes.is_empty(), "history view needs at least one price");
        Self { closes }
    }

    pub fn now(&self) -> usize {
        self.closes.len() - 1
    }

    /// `s(now)`.
    pub fn current(&self) -> f64 {
        self.closes[self.closes.len() - 1]
    }

    /// `s(i)` for absolute index `i <= now`.
    pub fn at(&self, i: usize) -> Result<f64> {
        self.closes.get(i).copied().ok_or_else(|| {
            Error::Contract(format!(
                "read of s({i}) from a view ending at t = {}",
                self.now()
            ))
        })
    }

    /// `s(now - k)`.
    pub fn back(&self, k: usize) -> Result<f64> {
        if k > self.now() {
            return Err(Error::InsufficientHistory(format!(
                "s(t-{k}) requested at t = {}",
                self.now()
            )));
        }
        Ok(self.closes[self.now() - k])
    }

    /// All prices up to and including `now`.
    pub fn past(&self) -> &'a [f64] {
        self.closes
    }

    /// Number of available prices (`now + 1`).
    pub fn len(&self) -> usize {
        self.closes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Loads a `Date,Close` CSV (extra columns ignored), sorted ascending by date.
pub fn load_price_series(path: impl AsRef<Path>, symbol: &str) -> Result<PriceSeries> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(file);

    let headers = reader.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                row: 1,
                message: format!("missing `{name}` column"),
            })
    };
    let date_col = column("Date")?;
    let close_col = column("Close")?;

    let mut rows: Vec<(NaiveDate, f64)> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        // header is line 1
        let row = i + 2;
        let record = record.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            row,
            message: e.to_string(),
        })?;
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            row,
            message,
        };
        let date_raw = record
            .get(date_col)
            .ok_or_else(|| parse_err("missing Date field".into()))?;
        let close_raw = record
            .get(close_col)
            .ok_or_else(|| parse_err("missing Close field".into()))?;
        let date = NaiveDate::parse_from_str(date_raw, DATE_FORMAT)
            .map_err(|e| parse_err(format!("bad date {date_raw:?}: {e}")))?;
        if close_raw.is_empty() || close_raw.eq_ignore_ascii_case("null") {
            return Err(Error::Validation(format!(
                "{}: row {row}: missing close",
                path.display()
            )));
        }
        let close: f64 = close_raw
            .parse()
            .map_err(|e| parse_err(format!("bad close {close_raw:?}: {e}")))?;
        if !(close.is_finite() && close > 0.0) {
            return Err(Error::Validation(format!(
                "{}: row {row}: close {close} is not positive",
                path.display()
            )));
        }
        rows.push((date, close));
    }

    if rows.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{}: {} rows, need at least 2",
            path.display(),
            rows.len()
        )));
    }
    rows.sort_by_key(|(d, _)| *d);
    let (dates, closes) = rows.into_iter().unzip();
    PriceSeries::new(symbol, dates, closes)
}

/// Writes `Date,Close`. Closes use the shortest representation that parses
/// back to the same `f64`.
pub fn write_price_series(path: impl AsRef<Path>, series: &PriceSeries) -> Result<()> {
    let path = path.as_ref();
    let mut out = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut buf = String::with_capacity(series.len() * 24);
    buf.push_str("Date,Close\n");
    for (d, c) in series.dates.iter().zip(&series.closes) {
        buf.push_str(&format!("{},{}\n", d.format(DATE_FORMAT), c));
    }
    out.write_all(buf.as_bytes())
        .map_err(|e| Error::io(path, e))
}

/// Sets `eval_start` to the first index dated on or after `boundary`.
pub fn split(series: PriceSeries, boundary: NaiveDate) -> Result<PriceSeries> {
    let first = series.dates[0];
    let last = series.dates[series.last_index()];
    if boundary < first || boundary > last {
        return Err(Error::Domain(format!(
            "{}: split date {boundary} outside {first}..={last}",
            series.symbol
        )));
    }
    let idx = series.dates.partition_point(|d| *d < boundary);
    series.with_eval_start(idx)
}

/// `closes[i] / closes[0]`.
pub fn normalize(series: &PriceSeries) -> Vec<f64> {
    let base = series.closes[0];
    series.closes.iter().map(|c| c / base).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub symbol: String,
    pub path: PathBuf,
}

/// Reads a `symbol,path` manifest. Relative paths resolve against the
/// manifest's directory; blank lines and `#` comments are skipped.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut entries = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (symbol, file_path) = line.split_once(',').ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            row: i + 1,
            message: format!("expected `symbol,path`, got {line:?}"),
        })?;
        let file_path = Path::new(file_path.trim());
        let resolved = if file_path.is_absolute() {
            file_path.to_path_buf()
        } else {
            base.join(file_path)
        };
        entries.push(ManifestEntry {
            symbol: symbol.trim().to_string(),
            path: resolved,
        });
    }
    if entries.is_empty() {
        return Err(Error::InsufficientData(format!(
            "{}: manifest lists no series",
            path.display()
        )));
    }
    Ok(entries)
}

/// `n` weekdays starting at `start` (or the next weekday after it).
pub fn business_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    use chrono::{Datelike, Weekday};
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d.succ_opt().expect("date overflow");
    }
    out
}
