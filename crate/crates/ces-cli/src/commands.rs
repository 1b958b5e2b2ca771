//! One function per subcommand (the pipeline lives in its own module).

use std::io::Write;
use std::path::Path;

use ces_core::ingest::{DayRange, Grouping};
use ces_core::net::{
    bipartite_modularity, nested_rank, network_stats, push_pull, BipartiteNetwork,
    ModularityConfig,
};
use ces_core::spectral::{cross_wavelet, cwt, TimeSeries, WaveletParams};
use ces_core::stringency::{align, load_stringency, median_stringency, DEFAULT_COUNTRIES};
use ces_core::synth;
use ces_core::tensor::{hosvd as run_hosvd, CesTensor, Mode};
use ces_core::turnover::{new_user_ratio, TurnoverScope, TurnoverSeries};

use crate::common::{
    create_file, ensure_out_dir, io_err, load_inputs, write_cross_csv, write_json,
    write_labeled_matrix_csv, write_network_csv, write_ridges_csv, write_series_csv,
    write_wavelet_csv, LoadedInputs,
};
use crate::manifest::RunManifest;
use crate::{CliError, InputArgs, OutputArgs, XwtSeriesArg};

pub fn ingest(input: &InputArgs, output: &OutputArgs) -> Result<(), CliError> {
    ensure_out_dir(&output.out)?;
    let mut manifest = RunManifest::new("ingest");
    let loaded = load_inputs(input, &mut manifest, true)?;
    let counts = loaded.counts()?;

    let (mut w, path) = create_file(&output.out, "daily_counts.csv")?;
    writeln!(w, "date,feature,activity,count").map_err(io_err)?;
    for (d, date) in loaded.window.days().enumerate() {
        let slice = counts.day_slice(d);
        for (fi, f) in counts.features().iter().enumerate() {
            for (ai, a) in counts.activities().iter().enumerate() {
                let n = slice[[fi, ai]];
                if n > 0 {
                    writeln!(w, "{date},{f},{a},{n}").map_err(io_err)?;
                }
            }
        }
    }
    w.flush().map_err(io_err)?;
    drop(w);
    manifest.record_output(&path)?;

    #[derive(serde::Serialize)]
    struct Report {
        records: usize,
        total_count: u64,
        skipped_rows: usize,
        features: usize,
        activities: usize,
        days: usize,
        grouping: String,
    }
    write_json(
        &Report {
            records: loaded.records.len(),
            total_count: counts.total(),
            skipped_rows: loaded.warnings,
            features: counts.features().len(),
            activities: counts.activities().len(),
            days: counts.num_days(),
            grouping: loaded.grouping.to_string(),
        },
        &output.out,
        "report.json",
        &mut manifest,
    )?;
    manifest.write(&output.out)?;
    Ok(())
}

pub fn build_network(input: &InputArgs, output: &OutputArgs) -> Result<(), CliError> {
    ensure_out_dir(&output.out)?;
    let mut manifest = RunManifest::new("build-network");
    let loaded = load_inputs(input, &mut manifest, true)?;
    let counts = loaded.counts()?;
    let net = BipartiteNetwork::from_counts(&counts, loaded.window)?;
    write_network_csv(&net, &output.out, "network.csv", &mut manifest)?;
    manifest.write(&output.out)?;
    Ok(())
}

pub fn network_stats_cmd(
    input: &InputArgs,
    output: &OutputArgs,
    restarts: u32,
    seed: u64,
) -> Result<(), CliError> {
    ensure_out_dir(&output.out)?;
    let mut manifest = RunManifest::new("network-stats").with_seed(seed);
    let loaded = load_inputs(input, &mut manifest, true)?;
    let counts = loaded.counts()?;
    let net = BipartiteNetwork::from_counts(&counts, loaded.window)?;
    let stats = network_stats(&net, &ModularityConfig { restarts, seed })?;
    write_json(&stats, &output.out, "network_stats.json", &mut manifest)?;

    let (_, partition) = bipartite_modularity(&net, &ModularityConfig { restarts, seed })?;
    let (mut w, path) = create_file(&output.out, "modules.csv")?;
    writeln!(w, "kind,label,module").map_err(io_err)?;
    for (label, module) in &partition.features {
        writeln!(w, "feature,{label},{module}").map_err(io_err)?;
    }
    for (label, module) in &partition.activities {
        writeln!(w, "activity,{label},{module}").map_err(io_err)?;
    }
    w.flush().map_err(io_err)?;
    drop(w);
    manifest.record_output(&path)?;
    manifest.write(&output.out)?;
    Ok(())
}

pub fn node_stats(input: &InputArgs, output: &OutputArgs) -> Result<(), CliError> {
    ensure_out_dir(&output.out)?;
    let mut manifest = RunManifest::new("node-stats");
    let loaded = load_inputs(input, &mut manifest, true)?;
    let counts = loaded.counts()?;
    let net = BipartiteNetwork::from_counts(&counts, loaded.window)?;
    write_node_stats_csv(&net, &output.out, "node_stats.csv", &mut manifest)?;
    manifest.write(&output.out)?;
    Ok(())
}

pub fn write_node_stats_csv(
    net: &BipartiteNetwork,
    out_dir: &Path,
    name: &str,
    manifest: &mut RunManifest,
) -> Result<(), CliError> {
    let push = push_pull(net)?;
    let rank = nested_rank(net)?;
    let (mut w, path) = create_file(out_dir, name)?;
    writeln!(w, "kind,label,push_pull,nested_rank").map_err(io_err)?;
    for ((label, pp), (label2, nr)) in push.features.iter().zip(rank.features.iter()) {
        debug_assert_eq!(label, label2);
        writeln!(w, "feature,{label},{pp},{nr}").map_err(io_err)?;
    }
    for ((label, pp), (label2, nr)) in push.activities.iter().zip(rank.activities.iter()) {
        debug_assert_eq!(label, label2);
        writeln!(w, "activity,{label},{pp},{nr}").map_err(io_err)?;
    }
    w.flush().map_err(io_err)?;
    drop(w);
    manifest.record_output(&path)
}

pub fn hosvd(
    input: &InputArgs,
    output: &OutputArgs,
    center: bool,
    normalize_days: bool,
    components: usize,
    svg: bool,
) -> Result<(), CliError> {
    ensure_out_dir(&output.out)?;
    let mut manifest = RunManifest::new("hosvd");
    let loaded = load_inputs(input, &mut manifest, true)?;
    let counts = loaded.counts()?;
    let mut tensor = CesTensor::from_counts(&counts);
    if normalize_days {
        tensor = tensor.day_normalized();
    }
    if center {
        tensor = tensor.centered();
    }
    let decomposition = run_hosvd(&tensor, None)?;
    if decomposition.degenerate {
        eprintln!("warning: tensor is identically zero; factors are arbitrary");
    }

    for (mode, name) in [
        (Mode::Feature, "factors_features.csv"),
        (Mode::Activity, "factors_activities.csv"),
        (Mode::Day, "factors_days.csv"),
    ] {
        let factor = &decomposition.factors[mode.axis()];
        let k = components.min(factor.ncols());
        let labels = decomposition.labels(mode);
        let (mut w, path) = create_file(&output.out, name)?;
        write!(w, "label").map_err(io_err)?;
        for c in 0..k {
            write!(w, ",component_{}", c + 1).map_err(io_err)?;
        }
        writeln!(w).map_err(io_err)?;
        for (i, label) in labels.iter().enumerate() {
            write!(w, "{label}").map_err(io_err)?;
            for c in 0..k {
                write!(w, ",{}", factor[[i, c]]).map_err(io_err)?;
            }
            writeln!(w).map_err(io_err)?;
        }
        w.flush().map_err(io_err)?;
        drop(w);
        manifest.record_output(&path)?;
    }

    let (mut w, path) = create_file(&output.out, "singular_values.csv")?;
    writeln!(w, "mode,index,value").map_err(io_err)?;
    for (mode, name) in [
        (Mode::Feature, "feature"),
        (Mode::Activity, "activity"),
        (Mode::Day, "day"),
    ] {
        for (i, v) in decomposition.singular_values[mode.axis()].iter().enumerate() {
            writeln!(w, "{name},{},{v}", i + 1).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)?;
    drop(w);
    manifest.record_output(&path)?;

    for (a, b, name) in [
        (Mode::Feature, Mode::Activity, "outer_feature_activity.csv"),
        (Mode::Feature, Mode::Day, "outer_feature_day.csv"),
        (Mode::Activity, Mode::Day, "outer_activity_day.csv"),
    ] {
        let matrix = decomposition.leading_outer_product(a, b);
        write_labeled_matrix_csv(&matrix, "label", &output.out, name, &mut manifest)?;
    }

    if svg {
        let matrix = decomposition.leading_outer_product(Mode::Feature, Mode::Activity);
        let (mut w, path) = create_file(&output.out, "outer_feature_activity.svg")?;
        w.write_all(
            crate::svg::heatmap(&matrix, "Leading feature x activity outer product").as_bytes(),
        )
        .map_err(io_err)?;
        w.flush().map_err(io_err)?;
        drop(w);
        manifest.record_output(&path)?;
    }
    manifest.write(&output.out)?;
    Ok(())
}

/// Daily series selection shared by `wavelet` and `xwt`.
fn select_series(
    loaded: &LoadedInputs,
    feature_class: Option<&str>,
    activity_class: Option<&str>,
    log1p: bool,
) -> Result<TimeSeries, CliError> {
    let counts = loaded.counts_with(Grouping::Grouped)?;
    let series = match (feature_class, activity_class) {
        (Some(f), Some(a)) => counts.cell_series(f, a).ok_or_else(|| {
            CliError::Input(format!("no grouped cell ({f}, {a}) in the taxonomy"))
        })?,
        _ => counts.total_series(),
    };
    Ok(if log1p { series.log1p() } else { series })
}

pub fn wavelet(
    input: &InputArgs,
    output: &OutputArgs,
    feature_class: Option<&str>,
    activity_class: Option<&str>,
    alpha: f64,
    log1p: bool,
    svg: bool,
) -> Result<(), CliError> {
    ensure_out_dir(&output.out)?;
    let mut manifest = RunManifest::new("wavelet");
    let loaded = load_inputs(input, &mut manifest, true)?;
    let series = select_series(&loaded, feature_class, activity_class, log1p)?;
    let spectrum = cwt(&series, &WaveletParams::default())?;
    write_wavelet_csv(&spectrum, alpha, &output.out, "wavelet.csv", &mut manifest)?;
    write_ridges_csv(&spectrum, &output.out, "ridges.csv", &mut manifest)?;
    if svg {
        let title = match (feature_class, activity_class) {
            (Some(f), Some(a)) => format!("Wavelet power: {f} x {a}"),
            _ => "Wavelet power: all events".to_string(),
        };
        let (mut w, path) = create_file(&output.out, "wavelet.svg")?;
        w.write_all(crate::svg::spectrogram(&spectrum, alpha, &title).as_bytes())
            .map_err(io_err)?;
        w.flush().map_err(io_err)?;
        drop(w);
        manifest.record_output(&path)?;
    }
    manifest.write(&output.out)?;
    Ok(())
}

pub fn parse_warmup(
    text: &str,
    window: DayRange,
    records: &[ces_core::ingest::EventRecord],
) -> Result<Option<DayRange>, CliError> {
    match text {
        "none" => Ok(None),
        "auto" => {
            let earliest = records.iter().map(|r| r.date).min();
            match earliest {
                Some(first) if first < window.start => Ok(Some(
                    DayRange::new(first, window.start.pred_opt().expect("no date underflow"))
                        .expect("ordered"),
                )),
                _ => Ok(None),
            }
        }
        other => {
            let range = DayRange::parse(other).map_err(|e| CliError::Usage(e.to_string()))?;
            Ok(Some(range))
        }
    }
}

pub fn turnover(
    input: &InputArgs,
    output: &OutputArgs,
    warmup: &str,
    feature_class: Option<&str>,
    activity_class: Option<&str>,
) -> Result<(), CliError> {
    ensure_out_dir(&output.out)?;
    let mut manifest = RunManifest::new("turnover");
    let loaded = load_inputs(input, &mut manifest, false)?;
    let warmup = parse_warmup(warmup, loaded.window, &loaded.records)?;
    let scope = match (feature_class, activity_class) {
        (Some(f), Some(a)) => TurnoverScope::ClassPair {
            feature_class: f.to_string(),
            activity_class: a.to_string(),
        },
        _ => TurnoverScope::Global,
    };
    let series = new_user_ratio(&loaded.records, &loaded.taxonomy, scope, loaded.window, warmup)?;
    write_turnover_csv(&series, &output.out, "turnover.csv", &mut manifest)?;
    manifest.write(&output.out)?;
    Ok(())
}

pub fn write_turnover_csv(
    series: &TurnoverSeries,
    out_dir: &Path,
    name: &str,
    manifest: &mut RunManifest,
) -> Result<(), CliError> {
    let (mut w, path) = create_file(out_dir, name)?;
    writeln!(w, "date,scope,active_users,new_users,ratio").map_err(io_err)?;
    for day in &series.days {
        let ratio = day.ratio.map(|r| r.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{ratio}",
            day.date, series.scope, day.active_users, day.new_users
        )
        .map_err(io_err)?;
    }
    w.flush().map_err(io_err)?;
    drop(w);
    manifest.record_output(&path)
}

pub fn parse_countries(arg: Option<&str>) -> Vec<String> {
    match arg {
        Some(list) => list
            .split(',')
            .map(|c| c.trim().to_string())
            .filter(|c| !c.is_empty())
            .collect(),
        None => DEFAULT_COUNTRIES.iter().map(|c| c.to_string()).collect(),
    }
}

pub fn stringency(
    table: &Path,
    countries: Option<&str>,
    window: Option<DayRange>,
    output: &OutputArgs,
) -> Result<(), CliError> {
    ensure_out_dir(&output.out)?;
    let mut manifest = RunManifest::new("stringency");
    manifest.record_input(table)?;
    let parsed = load_stringency(table)?;
    let series = median_stringency(&parsed, &parse_countries(countries))?;
    let rows: Vec<(String, String)> = match window {
        Some(window) => {
            let placeholder = TimeSeries::new(window.start, vec![0.0; window.len()]);
            let (filled, _) = align(&series, &placeholder, window)?;
            filled
                .values
                .iter()
                .enumerate()
                .map(|(i, v)| (filled.date_at(i).to_string(), v.to_string()))
                .collect()
        }
        None => (0..series.values.len())
            .filter_map(|i| {
                series.values[i].map(|v| {
                    (
                        (series.start + chrono::Days::new(i as u64)).to_string(),
                        v.to_string(),
                    )
                })
            })
            .collect(),
    };
    write_series_csv(
        "date,stringency",
        rows,
        &output.out,
        "stringency.csv",
        &mut manifest,
    )?;
    manifest.write(&output.out)?;
    Ok(())
}

pub fn xwt(
    input: &InputArgs,
    output: &OutputArgs,
    stringency_path: &Path,
    countries: Option<&str>,
    series_kind: XwtSeriesArg,
    warmup: &str,
    alpha: f64,
    log1p: bool,
    svg: bool,
) -> Result<(), CliError> {
    ensure_out_dir(&output.out)?;
    let mut manifest = RunManifest::new("xwt");
    manifest.record_input(stringency_path)?;
    let loaded = load_inputs(input, &mut manifest, false)?;

    let y = match series_kind {
        XwtSeriesArg::Tweets => {
            let s = loaded.counts_with(Grouping::Grouped)?.total_series();
            if log1p {
                s.log1p()
            } else {
                s
            }
        }
        XwtSeriesArg::NewUsers => {
            let warmup = parse_warmup(warmup, loaded.window, &loaded.records)?;
            new_user_ratio(
                &loaded.records,
                &loaded.taxonomy,
                TurnoverScope::Global,
                loaded.window,
                warmup,
            )?
            .ratio_series_zero_filled()
        }
    };

    let table = load_stringency(stringency_path)?;
    let median = median_stringency(&table, &parse_countries(countries))?;
    let (sx, sy) = align(&median, &y, loaded.window)?;
    let cross = cross_wavelet(&sx, &sy, &WaveletParams::default(), alpha)?;
    write_cross_csv(&cross, &output.out, "xwt.csv", &mut manifest)?;
    if svg {
        let title = match series_kind {
            XwtSeriesArg::Tweets => "Stringency x daily events",
            XwtSeriesArg::NewUsers => "Stringency x new-user ratio",
        };
        let (mut w, path) = create_file(&output.out, "xwt.svg")?;
        w.write_all(crate::svg::cross_spectrogram(&cross, title).as_bytes())
            .map_err(io_err)?;
        w.flush().map_err(io_err)?;
        drop(w);
        manifest.record_output(&path)?;
    }
    manifest.write(&output.out)?;
    Ok(())
}

pub fn synth(
    config: Option<&Path>,
    taxonomy: Option<&Path>,
    seed: Option<u64>,
    init: bool,
    output: &OutputArgs,
) -> Result<(), CliError> {
    ensure_out_dir(&output.out)?;
    if init {
        let config_path = output.out.join("synth.toml");
        std::fs::write(&config_path, synth::example_config_toml())
            .map_err(|e| CliError::Input(format!("writing {}: {e}", config_path.display())))?;
        let (mut w, tax_path) = create_file(&output.out, "taxonomy.csv")?;
        synth::write_taxonomy_csv(&synth::example_taxonomy(), &mut w).map_err(io_err)?;
        w.flush().map_err(io_err)?;
        drop(w);
        println!(
            "wrote {} and {}",
            config_path.display(),
            tax_path.display()
        );
        return Ok(());
    }

    let config_path = config.expect("clap requires --config unless --init");
    let mut manifest = RunManifest::new("synth");
    manifest.record_input(config_path)?;
    let text = std::fs::read_to_string(config_path)
        .map_err(|e| CliError::Input(format!("reading {}: {e}", config_path.display())))?;
    let mut config = synth::SynthConfig::from_toml_str(&text)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    let taxonomy = match taxonomy {
        Some(path) => {
            manifest.record_input(path)?;
            ces_core::ingest::load_taxonomy(path)?
        }
        None => synth::example_taxonomy(),
    };
    manifest.seed = Some(config.seed);

    let records = synth::generate(&config, &taxonomy)?;
    let (mut w, events_path) = create_file(&output.out, "events.csv")?;
    synth::write_events_csv(&records, &mut w).map_err(io_err)?;
    w.flush().map_err(io_err)?;
    drop(w);
    manifest.record_output(&events_path)?;

    let (mut w, tax_path) = create_file(&output.out, "taxonomy.csv")?;
    synth::write_taxonomy_csv(&taxonomy, &mut w).map_err(io_err)?;
    w.flush().map_err(io_err)?;
    drop(w);
    manifest.record_output(&tax_path)?;
    manifest.write(&output.out)?;
    println!("generated {} events", records.len());
    Ok(())
}
