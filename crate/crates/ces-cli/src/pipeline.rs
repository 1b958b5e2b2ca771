//! The full analysis chain: annual and pooled network statistics on both
//! groupings, node statistics, tensor decomposition with leading outer
//! products, spectral analysis of the daily volume, user turnover, and
//! (when stringency data is supplied) coherency against mobility
//! restrictions. Ends with a machine-readable `summary.json`.

use std::collections::BTreeMap;
use std::path::Path;

use serde_json::json;

use ces_core::ingest::Grouping;
use ces_core::net::{network_stats, BipartiteNetwork, ModularityConfig, NetworkStats};
use ces_core::spectral::{cross_wavelet, cwt, WaveletParams};
use ces_core::stringency::{align, load_stringency, median_stringency};
use ces_core::tensor::{hosvd, CesTensor, Mode};
use ces_core::turnover::{new_user_ratio, TurnoverScope};

use crate::commands::{parse_countries, write_node_stats_csv, write_turnover_csv};
use crate::common::{
    ensure_out_dir, load_inputs, write_cross_csv, write_json, write_labeled_matrix_csv,
    write_network_csv, write_ridges_csv, write_wavelet_csv, year_ranges,
};
use crate::manifest::RunManifest;
use crate::{CliError, InputArgs, OutputArgs};

#[allow(clippy::too_many_arguments)]
pub fn run(
    input: &InputArgs,
    output: &OutputArgs,
    stringency_path: Option<&Path>,
    countries: Option<&str>,
    restarts: u32,
    seed: u64,
    alpha: f64,
) -> Result<(), CliError> {
    ensure_out_dir(&output.out)?;
    let mut manifest = RunManifest::new("pipeline").with_seed(seed);
    let loaded = load_inputs(input, &mut manifest, false)?;
    let config = ModularityConfig { restarts, seed };

    // Annual and pooled statistics, grouped and full.
    let mut stats_blocks: BTreeMap<String, BTreeMap<String, NetworkStats>> = BTreeMap::new();
    for (grouping, key) in [(Grouping::Grouped, "grouped"), (Grouping::Full, "full")] {
        let counts = loaded.counts_with(grouping)?;
        let mut blocks: BTreeMap<String, NetworkStats> = BTreeMap::new();
        for (year, range) in year_ranges(loaded.window) {
            let net = BipartiteNetwork::from_counts(&counts, range)?;
            if net.total_weight() > 0.0 {
                blocks.insert(year.to_string(), network_stats(&net, &config)?);
            }
        }
        let all = BipartiteNetwork::from_counts(&counts, loaded.window)?;
        blocks.insert("all_years".to_string(), network_stats(&all, &config)?);
        write_network_csv(
            &all,
            &output.out,
            &format!("network_{key}_all_years.csv"),
            &mut manifest,
        )?;
        if grouping == Grouping::Grouped {
            write_node_stats_csv(&all, &output.out, "node_stats.csv", &mut manifest)?;
        }
        stats_blocks.insert(key.to_string(), blocks);
    }
    write_json(&stats_blocks, &output.out, "network_stats.json", &mut manifest)?;

    // Tensor decomposition on grouped counts.
    let grouped_counts = loaded.counts_with(Grouping::Grouped)?;
    let tensor = CesTensor::from_counts(&grouped_counts);
    let decomposition = hosvd(&tensor, None)?;
    let outer = decomposition.leading_outer_product(Mode::Feature, Mode::Activity);
    for (a, b, name) in [
        (Mode::Feature, Mode::Activity, "outer_feature_activity.csv"),
        (Mode::Feature, Mode::Day, "outer_feature_day.csv"),
        (Mode::Activity, Mode::Day, "outer_activity_day.csv"),
    ] {
        let matrix = decomposition.leading_outer_product(a, b);
        write_labeled_matrix_csv(&matrix, "label", &output.out, name, &mut manifest)?;
    }
    let (peak_row, peak_col, peak_value) = outer.peak();
    let peak_feature = outer.row_labels[peak_row].clone();
    let peak_activity = outer.col_labels[peak_col].clone();

    // Spectral analysis of the total daily volume.
    let total_series = grouped_counts.total_series();
    let spectrum = cwt(&total_series, &WaveletParams::default())?;
    write_wavelet_csv(&spectrum, alpha, &output.out, "wavelet_total.csv", &mut manifest)?;
    write_ridges_csv(&spectrum, &output.out, "ridges_total.csv", &mut manifest)?;
    let global = spectrum.global_spectrum();
    let peak_period = global
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(j, _)| spectrum.periods[j]);
    let mask = spectrum.significance(alpha);
    let (mut in_coi_points, mut significant_points) = (0usize, 0usize);
    for j in 0..spectrum.num_scales() {
        for t in 0..spectrum.num_times() {
            if spectrum.in_coi(j, t) {
                in_coi_points += 1;
                if mask[[j, t]] {
                    significant_points += 1;
                }
            }
        }
    }

    // Turnover: global scope plus the cell the decomposition flagged.
    let warmup = crate::commands::parse_warmup("auto", loaded.window, &loaded.records)?;
    let global_turnover = new_user_ratio(
        &loaded.records,
        &loaded.taxonomy,
        TurnoverScope::Global,
        loaded.window,
        warmup,
    )?;
    write_turnover_csv(&global_turnover, &output.out, "turnover_all.csv", &mut manifest)?;
    let pair_turnover = new_user_ratio(
        &loaded.records,
        &loaded.taxonomy,
        TurnoverScope::ClassPair {
            feature_class: peak_feature.clone(),
            activity_class: peak_activity.clone(),
        },
        loaded.window,
        warmup,
    )?;
    write_turnover_csv(&pair_turnover, &output.out, "turnover_peak_pair.csv", &mut manifest)?;
    let turnover_peak = global_turnover
        .days
        .iter()
        .filter_map(|d| d.ratio.map(|r| (d.date, r)))
        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap());

    // Coherency against mobility restrictions, when data is provided.
    let mut coherency = serde_json::Value::Null;
    if let Some(path) = stringency_path {
        manifest.record_input(path)?;
        let table = load_stringency(path)?;
        let median = median_stringency(&table, &parse_countries(countries))?;

        let (sx, sy) = align(&median, &total_series, loaded.window)?;
        let cross_tweets = cross_wavelet(&sx, &sy, &WaveletParams::default(), alpha)?;
        write_cross_csv(&cross_tweets, &output.out, "xwt_tweets.csv", &mut manifest)?;

        let ratio_series = global_turnover.ratio_series_zero_filled();
        let (sx, sy) = align(&median, &ratio_series, loaded.window)?;
        let cross_users = cross_wavelet(&sx, &sy, &WaveletParams::default(), alpha)?;
        write_cross_csv(&cross_users, &output.out, "xwt_new_users.csv", &mut manifest)?;

        let summarize = |cross: &ces_core::spectral::CrossSpectrum| {
            let mut significant = 0usize;
            let mut in_phase = 0usize;
            for j in 0..cross.num_scales() {
                for t in 0..cross.num_times() {
                    if cross.significance[[j, t]] {
                        significant += 1;
                        if cross.phase[[j, t]].abs() < std::f64::consts::FRAC_PI_2 {
                            in_phase += 1;
                        }
                    }
                }
            }
            json!({
                "significant_points": significant,
                "in_phase_fraction": if significant > 0 {
                    Some(in_phase as f64 / significant as f64)
                } else {
                    None
                },
            })
        };
        coherency = json!({
            "events": summarize(&cross_tweets),
            "new_users": summarize(&cross_users),
        });
    }

    let summary = json!({
        "window": loaded.window.to_string(),
        "records": loaded.records.len(),
        "skipped_rows": loaded.warnings,
        "network_stats": stats_blocks,
        "leading_outer_product_peak": {
            "feature_class": peak_feature,
            "activity_class": peak_activity,
            "value": peak_value,
        },
        "wavelet_total": {
            "peak_period_days": peak_period,
            "significant_in_coi_fraction": if in_coi_points > 0 {
                Some(significant_points as f64 / in_coi_points as f64)
            } else {
                None
            },
        },
        "turnover": {
            "max_ratio_date": turnover_peak.map(|(d, _)| d.to_string()),
            "max_ratio": turnover_peak.map(|(_, r)| r),
        },
        "coherency": coherency,
    });
    write_json(&summary, &output.out, "summary.json", &mut manifest)?;
    manifest.write(&output.out)?;
    println!(
        "pipeline complete: {} records, peak cell ({peak_feature}, {peak_activity})",
        loaded.records.len()
    );
    Ok(())
}
