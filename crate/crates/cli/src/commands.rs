use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use flowprint::ambiguity::{train_reinforced, AmbiguityConfig, RelabelStats};
use flowprint::dataset::load_dataset;
use flowprint::eval::{
    run_experiment, write_sweep_csv, ClassificationOutcome, ExperimentSpec, Verdict,
};
use flowprint::features::{build_feature_matrix, extract_features, FEATURE_COUNT};
use flowprint::learn::TrainedPipeline;
use flowprint::sessionizer::{enforce_flow_bounds, split_flows, Burstifier};
use flowprint::synth::{
    benchmark_config, generate_dataset, generate_independent_pair, SynthConfig,
};
use flowprint::trace_model::{filter_clean_tcp, parse_packet_log, DatasetManifest, TraceFormat};
use log::info;
use serde::Serialize;

use crate::args::{ClassifyArgs, EvaluateArgs, FeaturizeArgs, IngestArgs, SimulateArgs, TrainArgs};
use crate::config::FileConfig;
use crate::UsageError;

pub struct RunContext {
    pub seed: u64,
    /// Whether the seed came from a flag or the config file.
    pub seed_given: bool,
    pub file: FileConfig,
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    DatasetManifest::load(path).with_context(|| format!("ingest: manifest {}", path.display()))
}

pub fn simulate(ctx: &RunContext, args: &SimulateArgs) -> Result<()> {
    let mut config = match (&args.profiles, args.benchmark_apps) {
        (Some(path), _) => SynthConfig::load(path).context("simulate: profiles")?,
        (None, Some(n)) => benchmark_config(n, 20, args.shared_fraction, ctx.seed),
        (None, None) => bail!(UsageError(
            "either --profiles or --benchmark-apps is required".into()
        )),
    };
    config.rng_seed = ctx.seed;
    if let Some(n) = args.traces_per_app {
        config.traces_per_app = n;
    }
    if let Some(d) = args.drift {
        config.drift_factor = d;
    }
    config
        .validate()
        .map_err(|e| UsageError(format!("simulate: {e}")))?;
    match &args.pair_out {
        None => {
            generate_dataset(&config, &args.out).context("simulate")?;
            println!("{}", args.out.join("manifest.json").display());
        }
        Some(pair_out) => {
            let pair_seed = args.pair_seed.unwrap_or(ctx.seed.wrapping_add(1));
            generate_independent_pair(&config, ctx.seed, pair_seed, &args.out, pair_out)
                .context("simulate")?;
            println!("{}", args.out.join("manifest.json").display());
            println!("{}", pair_out.join("manifest.json").display());
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct FlowLine<'a> {
    trace_id: &'a str,
    app: &'a str,
    burst_index: usize,
    dst_addr: &'a str,
    dst_port: u16,
    packets: usize,
    bytes: u64,
}

pub fn ingest(ctx: &RunContext, args: &IngestArgs) -> Result<()> {
    let session = ctx.file.sessionizer(args.burst_threshold)?;
    let manifest = load_manifest(&args.manifest)?;
    let data = load_dataset(&manifest, &session).context("ingest")?;
    let mut out = output(args.out.as_deref())?;
    for f in &data.flows {
        let line = FlowLine {
            trace_id: &f.trace_id,
            app: &f.app_label,
            burst_index: f.burst_index,
            dst_addr: &f.dst_addr,
            dst_port: f.dst_port,
            packets: f.len(),
            bytes: f.packets.iter().map(|p| u64::from(p.length)).sum(),
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    info!(
        "{} flows from {} traces",
        data.flows.len(),
        data.trace_paths.len()
    );
    Ok(())
}

pub fn featurize(ctx: &RunContext, args: &FeaturizeArgs) -> Result<()> {
    let session = ctx.file.sessionizer(args.session.burst_threshold)?;
    let mad_mode = args.session.mad_mode.unwrap_or(ctx.file.mad_mode);
    let manifest = load_manifest(&args.manifest)?;
    let data = load_dataset(&manifest, &session).context("ingest")?;
    let matrix = build_feature_matrix(&data.flows, mad_mode).context("featurize")?;
    let file =
        File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    matrix
        .write_csv(BufWriter::new(file))
        .context("featurize")?;
    info!(
        "{} feature rows written to {}",
        matrix.len(),
        args.out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct RelabelReport<'a> {
    training_manifest: &'a str,
    preliminary_flows: usize,
    #[serde(flatten)]
    stats: &'a RelabelStats,
}

pub fn train(ctx: &RunContext, args: &TrainArgs) -> Result<()> {
    let exp = ctx.file.experiment(&args.session, &args.learn)?;
    let manifest = load_manifest(&args.manifest)?;
    let data = load_dataset(&manifest, &exp.sessionizer).context("ingest")?;
    let matrix = build_feature_matrix(&data.flows, exp.mad_mode).context("featurize")?;
    let ambiguity = AmbiguityConfig {
        split_fraction: exp.split_fraction.unwrap_or(0.5),
        rng_seed: ctx.seed,
    };
    let mut trained = train_reinforced(&matrix, &ambiguity, &exp.learn).context("train")?;
    for stage in [&mut trained.preliminary, &mut trained.reinforced] {
        stage.metadata.training_manifest = Some(manifest.name.clone());
        stage.metadata.mad_mode = exp.mad_mode;
        stage.metadata.created_at = args.created_at.clone();
    }
    trained.reinforced.save(&args.model).context("save model")?;
    if let Some(p) = &args.preliminary_model {
        trained
            .preliminary
            .save(p)
            .context("save preliminary model")?;
    }
    let report_path = args
        .report
        .clone()
        .unwrap_or_else(|| args.model.with_extension("relabel.json"));
    let stats = &trained.relabel_stats;
    write_json_file(
        &report_path,
        &RelabelReport {
            training_manifest: &manifest.name,
            preliminary_flows: trained.preliminary_rows.len(),
            stats,
        },
    )?;
    println!(
        "relabeled {} of {} flows as ambiguous; model written to {}",
        stats.relabeled,
        stats.total,
        args.model.display()
    );
    for (app, n) in &stats.per_app {
        println!("  {app}: {n}");
    }
    Ok(())
}

#[derive(Serialize)]
struct OutcomeLine<'a> {
    burst_index: usize,
    flow_index: usize,
    predicted: &'a str,
    confidence: f64,
    verdict: Verdict,
}

fn describe(model: &TrainedPipeline) -> String {
    let m = &model.metadata;
    format!(
        "model trained on {} (config {}) expects {} features",
        m.training_manifest
            .as_deref()
            .unwrap_or("an unnamed dataset"),
        m.config_hash,
        model.scaler.dim()
    )
}

/// Bursts are classified as soon as the packet that closes them is read.
pub fn classify(ctx: &RunContext, args: &ClassifyArgs) -> Result<()> {
    let threshold = args.threshold.or(ctx.file.threshold).unwrap_or(0.5);
    if !(0.0..=1.0).contains(&threshold) {
        bail!(UsageError(format!(
            "threshold {threshold} is outside [0, 1]"
        )));
    }
    let session = ctx.file.sessionizer(args.burst_threshold)?;
    let model = TrainedPipeline::load(&args.model)
        .with_context(|| format!("loading model {}", args.model.display()))?;
    if model.scaler.dim() != FEATURE_COUNT {
        bail!("{}, flows have {FEATURE_COUNT}", describe(&model));
    }
    let trace = parse_packet_log(&args.log, TraceFormat::from_path(&args.log)).context("ingest")?;
    let trace = filter_clean_tcp(trace);
    let mut out = output(args.out.as_deref())?;

    let mut emit = |burst_index: usize, burst: flowprint::sessionizer::Burst| -> Result<()> {
        let flows =
            enforce_flow_bounds(split_flows(&burst, burst_index, &trace.app_label), &session);
        for (flow_index, flow) in flows.iter().enumerate() {
            let features = extract_features(flow, model.metadata.mad_mode).context("featurize")?;
            let (label, confidence) = model
                .predict(&features.values)
                .with_context(|| describe(&model))?;
            let outcome = ClassificationOutcome::from_prediction(label, confidence, threshold);
            let line = OutcomeLine {
                burst_index,
                flow_index,
                predicted: &outcome.predicted_label,
                confidence: outcome.confidence,
                verdict: outcome.verdict,
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    };

    let mut bursts = Burstifier::new(session.burst_threshold);
    let mut index = 0;
    for packet in trace.packets.iter().cloned() {
        if let Some(burst) = bursts.push(packet) {
            emit(index, burst)?;
            index += 1;
        }
    }
    if let Some(burst) = bursts.finish() {
        emit(index, burst)?;
    }
    Ok(())
}

pub fn evaluate(ctx: &RunContext, args: &EvaluateArgs) -> Result<()> {
    let config = ctx.file.experiment(&args.session, &args.learn)?;
    let mut spec = ExperimentSpec::load(&args.spec)
        .with_context(|| format!("spec {}", args.spec.display()))?;
    if ctx.seed_given {
        spec.seed = ctx.seed;
    }
    spec.validate()
        .map_err(|e| UsageError(format!("spec {}: {e}", args.spec.display())))?;
    for path in std::iter::once(&spec.train_manifest).chain(&spec.test_manifest) {
        if !path.is_file() {
            bail!(
                "spec {}: manifest {} does not exist",
                args.spec.display(),
                path.display()
            );
        }
    }
    let report = run_experiment(&spec, &config).context("evaluate")?;
    std::fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;
    let report_path: PathBuf = args.out_dir.join("report.json");
    std::fs::write(&report_path, report.to_json()?)
        .with_context(|| format!("writing {}", report_path.display()))?;
    let sweep_path = args.out_dir.join("sweep.csv");
    let file =
        File::create(&sweep_path).with_context(|| format!("creating {}", sweep_path.display()))?;
    write_sweep_csv(&report, BufWriter::new(file))?;
    for (p, r) in report.preliminary.iter().zip(&report.reinforced) {
        println!(
            "threshold {:.2}: preliminary accuracy {:.4} ({:.1}% classified), reinforced accuracy {:.4} ({:.1}% classified)",
            p.threshold,
            p.metrics.accuracy,
            100.0 * p.metrics.classified_fraction,
            r.metrics.accuracy,
            100.0 * r.metrics.classified_fraction
        );
    }
    Ok(())
}
