//! Government-response stringency ingestion and alignment with daily
//! series.
//!
//! Consumes OxCGRT-style CSVs (a country code column, a date column in
//! `YYYYMMDD` or ISO form, and a stringency index column in [0, 100]) and
//! reduces them to the per-day median across a configurable country list.
//! Policy indices are step-like, so alignment gaps are forward-filled and
//! a leading gap takes the first observed value.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;

use chrono::NaiveDate;
use thiserror::Error;

use crate::ingest::DayRange;
use crate::spectral::TimeSeries;

#[derive(Error, Debug)]
pub enum StringencyError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Format(String),
    #[error("line {line}: {reason}")]
    Row { line: usize, reason: String },
    #[error("none of the requested countries appear in the table")]
    NoCountries,
    #[error("stringency series and window do not overlap")]
    EmptyOverlap,
}

/// Default country list used when none is configured.
pub const DEFAULT_COUNTRIES: [&str; 6] = ["GB", "US", "CA", "AU", "NZ", "IE"];

/// Per-country daily stringency values.
#[derive(Debug, Clone, Default)]
pub struct StringencyTable {
    countries: BTreeMap<String, BTreeMap<NaiveDate, f64>>,
}

impl StringencyTable {
    pub fn countries(&self) -> Vec<String> {
        self.countries.keys().cloned().collect()
    }

    pub fn insert(&mut self, country: &str, date: NaiveDate, value: f64) {
        self.countries
            .entry(country.trim().to_uppercase())
            .or_default()
            .insert(date, value);
    }
}

/// Daily median stringency over the contributing countries. Days may be
/// missing (gaps are filled at alignment time).
#[derive(Debug, Clone)]
pub struct StringencySeries {
    pub start: NaiveDate,
    /// One slot per day from `start`; `None` where no listed country
    /// reported.
    pub values: Vec<Option<f64>>,
    pub countries: Vec<String>,
}

impl StringencySeries {
    pub fn end(&self) -> NaiveDate {
        self.start + chrono::Days::new(self.values.len().saturating_sub(1) as u64)
    }

    pub fn value_on(&self, date: NaiveDate) -> Option<f64> {
        let offset = (date - self.start).num_days();
        if offset < 0 {
            return None;
        }
        self.values.get(offset as usize).copied().flatten()
    }
}

fn parse_flexible_date(raw: &str) -> Result<NaiveDate, String> {
    let raw = raw.trim();
    if let Ok(d) = NaiveDate::parse_from_str(raw, "%Y-%m-%d") {
        return Ok(d);
    }
    if let Ok(d) = NaiveDate::parse_from_str(raw, "%Y%m%d") {
        return Ok(d);
    }
    Err(format!("unrecognized date {raw:?}"))
}

/// Load an OxCGRT-style CSV. Header names are matched case-insensitively
/// with underscores ignored: `CountryCode`/`country_code`, `Date`/`date`,
/// `StringencyIndex`/`stringency_index`/`stringency`.
pub fn load_stringency(path: &Path) -> Result<StringencyTable, StringencyError> {
    let file = File::open(path).map_err(|source| StringencyError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| StringencyError::Format(e.to_string()))?
        .clone();
    let normalize = |h: &str| h.to_lowercase().replace(['_', ' '], "");
    let find = |names: &[&str]| {
        headers
            .iter()
            .position(|h| names.contains(&normalize(h).as_str()))
    };
    let country_c = find(&["countrycode", "country"]).ok_or_else(|| {
        StringencyError::Format("no country code column found".into())
    })?;
    let date_c = find(&["date"])
        .ok_or_else(|| StringencyError::Format("no date column found".into()))?;
    let value_c = find(&["stringencyindex", "stringency", "stringencyindexaverage"])
        .ok_or_else(|| StringencyError::Format("no stringency column found".into()))?;

    let mut table = StringencyTable::default();
    for (idx, row) in reader.records().enumerate() {
        let line = idx + 2;
        let row = row.map_err(|e| StringencyError::Row {
            line,
            reason: e.to_string(),
        })?;
        let value_raw = row.get(value_c).unwrap_or("").trim();
        if value_raw.is_empty() {
            continue; // days without a reported index are simply absent
        }
        let value: f64 = value_raw.parse().map_err(|e| StringencyError::Row {
            line,
            reason: format!("bad stringency {value_raw:?}: {e}"),
        })?;
        if !(0.0..=100.0).contains(&value) {
            return Err(StringencyError::Row {
                line,
                reason: format!("stringency {value} outside [0, 100]"),
            });
        }
        let date = parse_flexible_date(row.get(date_c).unwrap_or(""))
            .map_err(|reason| StringencyError::Row { line, reason })?;
        table.insert(row.get(country_c).unwrap_or(""), date, value);
    }
    Ok(table)
}

/// Per-day median across the listed countries that report that day.
/// Even-sized sets take the mean of the two middle values.
pub fn median_stringency(
    table: &StringencyTable,
    countries: &[String],
) -> Result<StringencySeries, StringencyError> {
    let wanted: Vec<&BTreeMap<NaiveDate, f64>> = countries
        .iter()
        .filter_map(|c| table.countries.get(&c.trim().to_uppercase()))
        .collect();
    if wanted.is_empty() {
        return Err(StringencyError::NoCountries);
    }
    let start = wanted.iter().filter_map(|m| m.keys().next()).min().copied();
    let end = wanted
        .iter()
        .filter_map(|m| m.keys().next_back())
        .max()
        .copied();
    let (Some(start), Some(end)) = (start, end) else {
        return Err(StringencyError::NoCountries);
    };

    let len = (end - start).num_days() as usize + 1;
    let mut values = Vec::with_capacity(len);
    for offset in 0..len {
        let date = start + chrono::Days::new(offset as u64);
        let mut day: Vec<f64> = wanted.iter().filter_map(|m| m.get(&date)).copied().collect();
        if day.is_empty() {
            values.push(None);
            continue;
        }
        day.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mid = day.len() / 2;
        let median = if day.len() % 2 == 1 {
            day[mid]
        } else {
            (day[mid - 1] + day[mid]) / 2.0
        };
        values.push(Some(median));
    }

    Ok(StringencySeries {
        start,
        values,
        countries: countries.to_vec(),
    })
}

/// Restrict both series to `window`, forward-filling stringency gaps (and
/// back-filling a leading gap). The paired series come back equal-length
/// and day-aligned; `y`'s values are passed through untouched.
pub fn align(
    stringency: &StringencySeries,
    y: &TimeSeries,
    window: DayRange,
) -> Result<(TimeSeries, TimeSeries), StringencyError> {
    let y_end = y.date_at(y.len().saturating_sub(1));
    let overlap_start = window.start.max(stringency.start).max(y.start);
    let overlap_end = window.end.min(stringency.end()).min(y_end);
    if overlap_start > overlap_end {
        return Err(StringencyError::EmptyOverlap);
    }

    let len = (overlap_end - overlap_start).num_days() as usize + 1;
    let mut filled = Vec::with_capacity(len);
    let mut last: Option<f64> = None;
    // Seed the forward fill with any value at or before the overlap start.
    for offset in 0..=(overlap_start - stringency.start).num_days() {
        if let Some(v) = stringency.values[offset as usize] {
            last = Some(v);
        }
    }
    for i in 0..len {
        let date = overlap_start + chrono::Days::new(i as u64);
        if let Some(v) = stringency.value_on(date) {
            last = Some(v);
        }
        filled.push(last);
    }
    // Back-fill the head from the first observed value.
    let first_value = filled
        .iter()
        .flatten()
        .next()
        .copied()
        .ok_or(StringencyError::EmptyOverlap)?;
    let stringency_values: Vec<f64> = filled
        .into_iter()
        .map(|v| v.unwrap_or(first_value))
        .collect();

    let y_offset = (overlap_start - y.start).num_days() as usize;
    let y_values = y.values[y_offset..y_offset + len].to_vec();

    Ok((
        TimeSeries::new(overlap_start, stringency_values),
        TimeSeries::new(overlap_start, y_values),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn date(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn table_with(values: &[(&str, &str, f64)]) -> StringencyTable {
        let mut t = StringencyTable::default();
        for (country, day, value) in values {
            t.insert(country, date(day), *value);
        }
        t
    }

    fn list(countries: &[&str]) -> Vec<String> {
        countries.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn odd_median() {
        let t = table_with(&[
            ("GB", "2020-03-01", 10.0),
            ("US", "2020-03-01", 50.0),
            ("CA", "2020-03-01", 90.0),
        ]);
        let s = median_stringency(&t, &list(&["GB", "US", "CA"])).unwrap();
        assert_eq!(s.value_on(date("2020-03-01")), Some(50.0));
    }

    #[test]
    fn even_median_averages_middle_pair() {
        let t = table_with(&[
            ("GB", "2020-03-01", 10.0),
            ("US", "2020-03-01", 50.0),
            ("CA", "2020-03-01", 70.0),
            ("AU", "2020-03-01", 90.0),
        ]);
        let s = median_stringency(&t, &list(&["GB", "US", "CA", "AU"])).unwrap();
        assert_eq!(s.value_on(date("2020-03-01")), Some(60.0));
    }

    #[test]
    fn missing_country_day_reduces_the_set() {
        let t = table_with(&[
            ("GB", "2020-03-01", 10.0),
            ("US", "2020-03-01", 50.0),
            ("CA", "2020-03-01", 90.0),
            ("GB", "2020-03-02", 20.0),
            ("US", "2020-03-02", 40.0),
        ]);
        let s = median_stringency(&t, &list(&["GB", "US", "CA"])).unwrap();
        assert_eq!(s.value_on(date("2020-03-02")), Some(30.0));
    }

    #[test]
    fn median_bounded_by_inputs() {
        let t = table_with(&[
            ("GB", "2020-03-01", 25.0),
            ("US", "2020-03-01", 75.0),
        ]);
        let s = median_stringency(&t, &list(&["GB", "US"])).unwrap();
        let v = s.value_on(date("2020-03-01")).unwrap();
        assert!((25.0..=75.0).contains(&v));
    }

    #[test]
    fn unknown_countries_rejected() {
        let t = table_with(&[("GB", "2020-03-01", 10.0)]);
        assert!(matches!(
            median_stringency(&t, &list(&["XX"])),
            Err(StringencyError::NoCountries)
        ));
    }

    #[test]
    fn align_forward_fills_gaps() {
        let t = table_with(&[
            ("GB", "2020-03-01", 10.0),
            ("GB", "2020-03-04", 40.0),
        ]);
        let s = median_stringency(&t, &list(&["GB"])).unwrap();
        let y = TimeSeries::new(date("2020-03-01"), vec![1.0, 2.0, 3.0, 4.0]);
        let window = DayRange::parse("2020-03-01:2020-03-04").unwrap();
        let (sx, sy) = align(&s, &y, window).unwrap();
        assert_eq!(sx.values, vec![10.0, 10.0, 10.0, 40.0]);
        assert_eq!(sy.values, vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn align_backfills_leading_gap() {
        let t = table_with(&[("GB", "2020-03-03", 30.0)]);
        let s = median_stringency(&t, &list(&["GB"])).unwrap();
        let y = TimeSeries::new(date("2020-03-01"), vec![1.0, 2.0, 3.0]);
        // stringency starts on 03-03 but y and the window start earlier:
        // overlap clips to 03-03.
        let window = DayRange::parse("2020-03-01:2020-03-03").unwrap();
        let (sx, sy) = align(&s, &y, window).unwrap();
        assert_eq!(sx.start, date("2020-03-03"));
        assert_eq!(sx.values, vec![30.0]);
        assert_eq!(sy.values, vec![3.0]);
    }

    #[test]
    fn align_is_idempotent_and_preserves_y() {
        let t = table_with(&[
            ("GB", "2020-03-01", 10.0),
            ("GB", "2020-03-05", 50.0),
        ]);
        let s = median_stringency(&t, &list(&["GB"])).unwrap();
        let y = TimeSeries::new(date("2020-03-01"), vec![5.0, 6.0, 7.0, 8.0, 9.0]);
        let window = DayRange::parse("2020-03-01:2020-03-05").unwrap();
        let (sx1, sy1) = align(&s, &y, window).unwrap();
        let as_series = StringencySeries {
            start: sx1.start,
            values: sx1.values.iter().map(|&v| Some(v)).collect(),
            countries: vec!["GB".into()],
        };
        let (sx2, sy2) = align(&as_series, &sy1, window).unwrap();
        assert_eq!(sx1.values, sx2.values);
        assert_eq!(sy1.values, sy2.values);
        assert_eq!(sy1.values, y.values);
    }

    #[test]
    fn disjoint_windows_error() {
        let t = table_with(&[("GB", "2020-03-01", 10.0)]);
        let s = median_stringency(&t, &list(&["GB"])).unwrap();
        let y = TimeSeries::new(date("2021-01-01"), vec![1.0, 2.0]);
        let window = DayRange::parse("2021-01-01:2021-01-02").unwrap();
        assert!(matches!(
            align(&s, &y, window),
            Err(StringencyError::EmptyOverlap)
        ));
    }

    #[test]
    fn csv_loading_with_compact_dates() {
        use std::io::Write;
        let mut f = tempfile::Builder::new().suffix(".csv").tempfile().unwrap();
        write!(
            f,
            "CountryCode,Date,StringencyIndex\nGB,20200301,11.5\nUS,2020-03-01,52.0\nGB,20200302,\n"
        )
        .unwrap();
        let table = load_stringency(f.path()).unwrap();
        assert_eq!(table.countries(), vec!["GB", "US"]);
        let s = median_stringency(&table, &list(&["GB", "US"])).unwrap();
        assert_eq!(s.value_on(date("2020-03-01")), Some(31.75));
        assert_eq!(s.value_on(date("2020-03-02")), None);
    }

    #[test]
    fn out_of_range_values_rejected() {
        use std::io::Write;
        let mut f = tempfile::Builder::new().suffix(".csv").tempfile().unwrap();
        write!(f, "country_code,date,stringency\nGB,2020-03-01,140.0\n").unwrap();
        assert!(matches!(
            load_stringency(f.path()),
            Err(StringencyError::Row { line: 2, .. })
        ));
    }
}
