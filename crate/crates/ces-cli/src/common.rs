//! Shared input loading and tabular writers.

use std::fmt::Display;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ces_core::ingest::{
    aggregate, load_taxonomy, parse_events, DailyCounts, DayRange, EventRecord, Grouping,
    ParseOptions, ParseOutcome, Taxonomy, UnknownTermPolicy,
};
use ces_core::net::BipartiteNetwork;
use ces_core::spectral::{CrossSpectrum, WaveletSpectrum};
use ces_core::tensor::LabeledMatrix;

use crate::manifest::RunManifest;
use crate::{CliError, InputArgs};

pub struct LoadedInputs {
    pub taxonomy: Taxonomy,
    pub records: Vec<EventRecord>,
    pub warnings: usize,
    pub window: DayRange,
    pub grouping: Grouping,
}

impl LoadedInputs {
    pub fn counts(&self) -> Result<DailyCounts, CliError> {
        Ok(aggregate(
            &self.records,
            &self.taxonomy,
            self.grouping,
            self.window,
        )?)
    }

    pub fn counts_with(&self, grouping: Grouping) -> Result<DailyCounts, CliError> {
        Ok(aggregate(&self.records, &self.taxonomy, grouping, self.window)?)
    }
}

/// Parse and validate the command inputs. With `enforce_window` the date
/// check is part of row validation (policy-handled); without it, rows
/// outside the window are kept so warmup periods can see them.
pub fn load_inputs(
    args: &InputArgs,
    manifest: &mut RunManifest,
    enforce_window: bool,
) -> Result<LoadedInputs, CliError> {
    manifest.record_input(&args.events)?;
    manifest.record_input(&args.taxonomy)?;
    let taxonomy = load_taxonomy(&args.taxonomy)?;
    let options = ParseOptions {
        policy: if args.strict {
            UnknownTermPolicy::Strict
        } else {
            UnknownTermPolicy::Skip
        },
        window: enforce_window.then_some(args.window),
    };
    let ParseOutcome { records, warnings } = parse_events(&args.events, &taxonomy, &options)?;
    for w in warnings.iter().take(20) {
        eprintln!("warning: {}: line {}: {}", args.events.display(), w.line, w.reason);
    }
    if warnings.len() > 20 {
        eprintln!("warning: {} more rows skipped", warnings.len() - 20);
    }
    Ok(LoadedInputs {
        taxonomy,
        records,
        warnings: warnings.len(),
        window: args.window,
        grouping: args.grouping.into(),
    })
}

pub fn ensure_out_dir(out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out)
        .map_err(|e| CliError::Input(format!("cannot create {}: {e}", out.display())))
}

pub fn create_file(out_dir: &Path, name: &str) -> Result<(BufWriter<File>, PathBuf), CliError> {
    let path = out_dir.join(name);
    let file = File::create(&path)
        .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))?;
    Ok((BufWriter::new(file), path))
}

pub fn io_err(e: std::io::Error) -> CliError {
    CliError::Input(format!("write failed: {e}"))
}

/// Labeled weight matrix as CSV: header `feature,<activity...>`.
pub fn write_network_csv(
    net: &BipartiteNetwork,
    out_dir: &Path,
    name: &str,
    manifest: &mut RunManifest,
) -> Result<(), CliError> {
    let (mut w, path) = create_file(out_dir, name)?;
    write!(w, "feature").map_err(io_err)?;
    for a in net.activities() {
        write!(w, ",{a}").map_err(io_err)?;
    }
    writeln!(w).map_err(io_err)?;
    for (i, f) in net.features().iter().enumerate() {
        write!(w, "{f}").map_err(io_err)?;
        for j in 0..net.activities().len() {
            write!(w, ",{}", net.weights()[[i, j]]).map_err(io_err)?;
        }
        writeln!(w).map_err(io_err)?;
    }
    w.flush().map_err(io_err)?;
    drop(w);
    manifest.record_output(&path)
}

pub fn write_labeled_matrix_csv(
    matrix: &LabeledMatrix,
    row_header: &str,
    out_dir: &Path,
    name: &str,
    manifest: &mut RunManifest,
) -> Result<(), CliError> {
    let (mut w, path) = create_file(out_dir, name)?;
    write!(w, "{row_header}").map_err(io_err)?;
    for c in &matrix.col_labels {
        write!(w, ",{c}").map_err(io_err)?;
    }
    writeln!(w).map_err(io_err)?;
    for (i, r) in matrix.row_labels.iter().enumerate() {
        write!(w, "{r}").map_err(io_err)?;
        for j in 0..matrix.col_labels.len() {
            write!(w, ",{}", matrix.values[[i, j]]).map_err(io_err)?;
        }
        writeln!(w).map_err(io_err)?;
    }
    w.flush().map_err(io_err)?;
    drop(w);
    manifest.record_output(&path)
}

/// Long-format spectrum CSV: `date,period,power,significant,in_coi`.
pub fn write_wavelet_csv(
    spectrum: &WaveletSpectrum,
    alpha: f64,
    out_dir: &Path,
    name: &str,
    manifest: &mut RunManifest,
) -> Result<(), CliError> {
    let (mut w, path) = create_file(out_dir, name)?;
    writeln!(w, "date,period,power,significant,in_coi").map_err(io_err)?;
    let power = spectrum.power();
    let mask = spectrum.significance(alpha);
    for t in 0..spectrum.num_times() {
        let date = spectrum.start + chrono::Days::new(t as u64);
        for j in 0..spectrum.num_scales() {
            writeln!(
                w,
                "{date},{},{},{},{}",
                spectrum.periods[j],
                power[[j, t]],
                mask[[j, t]],
                spectrum.in_coi(j, t)
            )
            .map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)?;
    drop(w);
    manifest.record_output(&path)
}

pub fn write_ridges_csv(
    spectrum: &WaveletSpectrum,
    out_dir: &Path,
    name: &str,
    manifest: &mut RunManifest,
) -> Result<(), CliError> {
    let (mut w, path) = create_file(out_dir, name)?;
    writeln!(w, "date,period,power,ridge_id").map_err(io_err)?;
    for point in spectrum.ridges() {
        let date = spectrum.start + chrono::Days::new(point.time as u64);
        writeln!(w, "{date},{},{},{}", point.period, point.power, point.ridge_id)
            .map_err(io_err)?;
    }
    w.flush().map_err(io_err)?;
    drop(w);
    manifest.record_output(&path)
}

/// Long-format cross-spectrum CSV:
/// `date,period,power,phase,coherence,significant,in_coi`.
pub fn write_cross_csv(
    cross: &CrossSpectrum,
    out_dir: &Path,
    name: &str,
    manifest: &mut RunManifest,
) -> Result<(), CliError> {
    let (mut w, path) = create_file(out_dir, name)?;
    writeln!(w, "date,period,power,phase,coherence,significant,in_coi").map_err(io_err)?;
    for t in 0..cross.num_times() {
        let date = cross.start + chrono::Days::new(t as u64);
        for j in 0..cross.num_scales() {
            let phase = cross.phase[[j, t]];
            let phase_text = if phase.is_finite() {
                phase.to_string()
            } else {
                String::new()
            };
            writeln!(
                w,
                "{date},{},{},{phase_text},{},{},{}",
                cross.periods[j],
                cross.cross_power[[j, t]],
                cross.coherence[[j, t]],
                cross.significance[[j, t]],
                cross.in_coi(j, t)
            )
            .map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)?;
    drop(w);
    manifest.record_output(&path)
}

/// One `key,value` CSV row per item.
pub fn write_series_csv<I, K, V>(
    header: &str,
    rows: I,
    out_dir: &Path,
    name: &str,
    manifest: &mut RunManifest,
) -> Result<(), CliError>
where
    I: IntoIterator<Item = (K, V)>,
    K: Display,
    V: Display,
{
    let (mut w, path) = create_file(out_dir, name)?;
    writeln!(w, "{header}").map_err(io_err)?;
    for (k, v) in rows {
        writeln!(w, "{k},{v}").map_err(io_err)?;
    }
    w.flush().map_err(io_err)?;
    drop(w);
    manifest.record_output(&path)
}

pub fn write_json<T: serde::Serialize>(
    value: &T,
    out_dir: &Path,
    name: &str,
    manifest: &mut RunManifest,
) -> Result<(), CliError> {
    let (mut w, path) = create_file(out_dir, name)?;
    let json = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Input(format!("serializing {name}: {e}")))?;
    writeln!(w, "{json}").map_err(io_err)?;
    w.flush().map_err(io_err)?;
    drop(w);
    manifest.record_output(&path)
}

/// Calendar years fully or partially covered by the window, each clipped
/// to the window.
pub fn year_ranges(window: DayRange) -> Vec<(i32, DayRange)> {
    use chrono::Datelike;
    let mut out = Vec::new();
    let mut year = window.start.year();
    while year <= window.end.year() {
        let start = chrono::NaiveDate::from_ymd_opt(year, 1, 1).unwrap().max(window.start);
        let end = chrono::NaiveDate::from_ymd_opt(year, 12, 31).unwrap().min(window.end);
        if start <= end {
            out.push((year, DayRange::new(start, end).expect("ordered")));
        }
        year += 1;
    }
    out
}
