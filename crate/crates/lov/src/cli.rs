//! Subcommand implementations behind the `lov` binary.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate, Utc};
use clap::{Args, Parser, Subcommand};
use lov_core::classifier::{
    cross_validate, evaluate_holdout, feature_importance, grid, grid_search_points, oversample,
    split, train, Label, LabeledSample, Metrics, ModelFamily, ModelSpec,
};
use lov_core::config::PipelineConfig;
use lov_core::features::{parse_feature_csv, Feature};
use lov_core::pipeline::{pending_entries, review, run_day, OccurrenceHistory};
use lov_core::prefix::{Asn, Prefix};
use lov_core::quarantine::{ManualDecision, ManualVerdict};
use lov_core::report::{cdf_csv, occurrences, summarize, Occurrence};
use lov_core::rov::RouteKey;
use lov_core::synth::{write_corpus, CorpusLayout, CorpusParams};
use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] lov_core::Error),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// Stable machine-readable category.
    pub fn kind(&self) -> &'static str {
        use lov_core::Error as E;
        match self {
            CliError::Usage(_) => "usage",
            CliError::Io { .. } => "io",
            CliError::Core(e) => match e {
                E::MissingInput { .. } => "missing_input",
                E::Config(_) => "config",
                E::Locked(_) => "locked",
                E::Io { .. } => "io",
                E::ModelVersion { .. } | E::StoreVersion { .. } => "format_version",
                E::Json(_) | E::Csv(_) => "parse",
                _ => "invalid_input",
            },
        }
    }

    /// One-line JSON for stderr.
    pub fn to_json(&self) -> String {
        json!({ "error": self.kind(), "message": self.to_string() }).to_string()
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "lov",
    version,
    about = "Whitelist benign ROA conflicts among RPKI-invalid routes"
)]
pub struct Cli {
    /// Pipeline configuration (TOML); LOV_* variables override its keys.
    #[arg(long, short, global = true, env = "LOV_CONFIG")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Oversample, split, grid-search and cross-validate a classifier, then
    /// write the model with its tightness weights.
    Train(TrainArgs),
    /// Run the daily pipeline over a range of announcement files.
    Replay(ReplayArgs),
    /// Serve the published whitelist over HTTP.
    Serve(ServeArgs),
    /// List pending quarantine entries, or record an allow/deny decision.
    Review(ReviewArgs),
    /// Emit occurrence and frequency CDFs as CSV.
    Report(ReportArgs),
    /// Write a synthetic corpus with snapshots, announcements and labels.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Labeled feature CSV.
    #[arg(long)]
    pub features: PathBuf,
    /// Where to write the model.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value = "rf")]
    pub family: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Share of samples kept for training; the rest is the holdout.
    #[arg(long, default_value_t = 0.8)]
    pub split: f64,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    /// Minority-class size after oversampling (default: majority size).
    #[arg(long)]
    pub target: Option<usize>,
    /// Skip the grid and use DEPTH,LEAF for trees or K for KNN.
    #[arg(long)]
    pub fixed: Option<String>,
    /// Also write `feature,weight` rows here.
    #[arg(long)]
    pub weights: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Directory of `YYYY-MM-DD.jsonl` announcement files.
    #[arg(long)]
    pub announcements: PathBuf,
    #[arg(long)]
    pub from: NaiveDate,
    /// Last day, inclusive (default: --from).
    #[arg(long)]
    pub to: Option<NaiveDate>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub bind: Option<String>,
    #[arg(long)]
    pub port: Option<u16>,
}

#[derive(Debug, Args)]
pub struct ReviewArgs {
    #[arg(long, conflicts_with = "deny", requires_all = ["origin", "prefix"])]
    pub allow: bool,
    #[arg(long, requires_all = ["origin", "prefix"])]
    pub deny: bool,
    #[arg(long)]
    pub origin: Option<String>,
    #[arg(long)]
    pub prefix: Option<String>,
    #[arg(long, default_value = "")]
    pub note: String,
    /// Decision date (default: today, UTC).
    #[arg(long)]
    pub date: Option<NaiveDate>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Only days up to and including this one.
    #[arg(long)]
    pub through: Option<NaiveDate>,
    /// Output file (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Print summary statistics as JSON instead of the CDF table.
    #[arg(long)]
    pub summary: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 14)]
    pub days: usize,
    #[arg(long, default_value_t = 100_000)]
    pub per_day: usize,
    #[arg(long, default_value_t = 4000)]
    pub ases: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value = "2022-10-01")]
    pub start: NaiveDate,
}

/// Writes to stdout; a closed pipe (`lov report | head`) is not an error.
fn emit(text: &str) -> Result<()> {
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(io_err(Path::new("stdout"))(e)),
        _ => Ok(()),
    }
}

fn emit_line(v: &serde_json::Value) -> Result<()> {
    emit(&format!("{v}\n"))
}

fn config(path: Option<&Path>) -> Result<PipelineConfig> {
    let path =
        path.ok_or_else(|| CliError::Usage("this command needs --config or LOV_CONFIG".into()))?;
    Ok(PipelineConfig::load(path)?)
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg_path = cli.config.as_deref();
    match cli.command {
        Command::Train(a) => cmd_train(&a),
        Command::Replay(a) => cmd_replay(&config(cfg_path)?, &a),
        Command::Serve(a) => cmd_serve(config(cfg_path)?, &a),
        Command::Review(a) => cmd_review(&config(cfg_path)?, &a),
        Command::Report(a) => cmd_report(&config(cfg_path)?, &a),
        Command::Synth(a) => cmd_synth(&a),
    }
}

fn fixed_spec(family: ModelFamily, fixed: &str, seed: u64) -> Result<ModelSpec> {
    let nums: Vec<usize> = fixed
        .split(',')
        .map(|s| s.trim().parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| CliError::Usage(format!("--fixed expects integers, got {fixed:?}")))?;
    match (family, nums.as_slice()) {
        (ModelFamily::Dt, [d, l]) => Ok(ModelSpec::dt(*d, *l, seed)),
        (ModelFamily::Rf, [d, l]) => Ok(ModelSpec::rf(*d, *l, seed)),
        (ModelFamily::Knn, [k]) => Ok(ModelSpec::knn(*k, seed)),
        (ModelFamily::Nb, []) => Ok(grid(ModelFamily::Nb, seed)[0]),
        _ => Err(CliError::Usage(format!(
            "--fixed {fixed:?} does not fit family {family:?}"
        ))),
    }
}

fn metrics_json(m: &Metrics) -> serde_json::Value {
    json!({
        "macro_precision": m.macro_precision,
        "macro_recall": m.macro_recall,
        "macro_f1": m.macro_f1,
        "benign_accuracy": m.benign_accuracy,
        "hijack_accuracy": m.hijack_accuracy,
    })
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let family: ModelFamily = a.family.parse()?;
    let text = fs::read_to_string(&a.features).map_err(io_err(&a.features))?;
    let parsed = parse_feature_csv(&text);
    if !parsed.is_clean() {
        log::warn!(
            "{}: skipped {} malformed rows",
            a.features.display(),
            parsed.diagnostics.len()
        );
    }
    let samples: Vec<LabeledSample> = parsed
        .value
        .iter()
        .map(|r| {
            r.label
                .map(|l| LabeledSample::new(r.features.values(), l))
                .ok_or_else(|| CliError::Usage(format!("row {} has no label", r.key)))
        })
        .collect::<Result<_>>()?;
    let count = |l: Label| samples.iter().filter(|s| s.label == l).count();
    let majority = count(Label::BenignConflict).max(count(Label::Hijack));
    let balanced = oversample(&samples, a.target.unwrap_or(majority), a.seed)?;
    let (train_set, holdout) = split(&balanced, a.split, a.seed)?;

    let (spec, cv) = match &a.fixed {
        Some(f) => {
            let spec = fixed_spec(family, f, a.seed)?;
            (spec, cross_validate(&spec, &train_set, a.folds, a.seed)?)
        }
        None => {
            let (best, _) = grid_search_points(&grid(family, a.seed), &train_set, a.folds, a.seed)?;
            (best.spec, best.metrics)
        }
    };
    let model = train(&spec, &train_set)?;
    let holdout_metrics = evaluate_holdout(&model, &holdout)?;
    // tightness weights always come from a forest
    let importance = match family {
        ModelFamily::Rf => feature_importance(&model)?,
        _ => feature_importance(&train(&ModelSpec::rf(19, 2, a.seed), &train_set)?)?,
    };
    model.save(&a.model, Some(&importance))?;
    if let Some(path) = &a.weights {
        let mut out = String::from("feature,weight\n");
        for (f, w) in Feature::ALL.iter().zip(importance.values()) {
            out.push_str(&format!("{f},{w}\n"));
        }
        fs::write(path, out).map_err(io_err(path))?;
    }
    let weights: serde_json::Map<String, serde_json::Value> = Feature::ALL
        .iter()
        .zip(importance.values())
        .map(|(f, w)| (f.name().to_string(), json!(w)))
        .collect();
    emit_line(&json!({
        "spec": spec,
        "samples": { "input": samples.len(), "oversampled": balanced.len(), "train": train_set.len(), "holdout": holdout.len() },
        "cv": metrics_json(&cv),
        "holdout": metrics_json(&holdout_metrics),
        "weights": weights,
        "fingerprint": model.fingerprint,
    }))
}

fn cmd_replay(cfg: &PipelineConfig, a: &ReplayArgs) -> Result<()> {
    let to = a.to.unwrap_or(a.from);
    if to < a.from {
        return Err(CliError::Usage(format!(
            "--to {to} is before --from {}",
            a.from
        )));
    }
    let mut day = a.from;
    while day <= to {
        let path = a.announcements.join(format!("{day}.jsonl"));
        let report = run_day(cfg, &path, day)?;
        emit(&(serde_json::to_string(&report).map_err(lov_core::Error::from)? + "\n"))?;
        day += Duration::days(1);
    }
    Ok(())
}

fn cmd_serve(mut cfg: PipelineConfig, a: &ServeArgs) -> Result<()> {
    if let Some(b) = &a.bind {
        cfg.http_bind = b.clone();
    }
    if let Some(p) = a.port {
        cfg.http_port = p;
    }
    let addr = format!("{}:{}", cfg.http_bind, cfg.http_port);
    let whitelist = lov_core::pipeline::StoreLayout::new(&cfg.store_dir).whitelist_json();
    let rt = tokio::runtime::Runtime::new().map_err(io_err(Path::new("tokio runtime")))?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(io_err(Path::new(&addr)))?;
        log::info!("serving {} on http://{addr}", whitelist.display());
        tokio::select! {
            r = crate::http::serve(listener, whitelist) => r.map_err(io_err(Path::new(&addr))),
            _ = tokio::signal::ctrl_c() => Ok(()),
        }
    })
}

fn cmd_review(cfg: &PipelineConfig, a: &ReviewArgs) -> Result<()> {
    let verdict = match (a.allow, a.deny) {
        (true, _) => Some(ManualVerdict::Allow),
        (_, true) => Some(ManualVerdict::Deny),
        _ => None,
    };
    let Some(verdict) = verdict else {
        let mut out = String::from("origin,prefix,entered,period_ends,reason,sightings\n");
        for q in pending_entries(cfg)? {
            let reason = serde_json::to_value(q.reason)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{reason},{}\n",
                q.key.origin,
                q.key.prefix,
                q.entered,
                q.last_day(),
                q.sightings.len()
            ));
        }
        return emit(&out);
    };
    let origin: Asn = a.origin.as_deref().unwrap_or_default().parse()?;
    let prefix: Prefix = a.prefix.as_deref().unwrap_or_default().parse()?;
    let decision = ManualDecision {
        key: RouteKey::new(origin, prefix),
        verdict,
        note: a.note.clone(),
        date: a.date.unwrap_or_else(|| Utc::now().date_naive()),
    };
    let (_, outcomes) = review(cfg, std::slice::from_ref(&decision))?;
    emit_line(&json!({
        "origin": origin,
        "prefix": prefix,
        "verdict": verdict,
        "outcome": outcomes.last(),
    }))
}

fn occ<K>(m: &BTreeMap<K, Occurrence>) -> Vec<f64> {
    m.values().map(|o| o.occurrences as f64).collect()
}

fn freq<K>(m: &BTreeMap<K, Occurrence>) -> Vec<f64> {
    m.values().filter_map(|o| o.frequency).collect()
}

fn cmd_report(cfg: &PipelineConfig, a: &ReportArgs) -> Result<()> {
    let h = OccurrenceHistory::load(&cfg.report_dir, a.through)?;
    let benign = occurrences(&h.benign);
    let hijackers = occurrences(&h.hijackers);
    let text = if a.summary {
        let v = json!({ "benign": summarize(&benign), "hijackers": summarize(&hijackers) });
        serde_json::to_string_pretty(&v).map_err(lov_core::Error::from)? + "\n"
    } else {
        cdf_csv(&[
            ("benign_occurrences", occ(&benign)),
            ("benign_frequency", freq(&benign)),
            ("hijacker_occurrences", occ(&hijackers)),
            ("hijacker_frequency", freq(&hijackers)),
        ])
    };
    match &a.out {
        Some(path) => fs::write(path, text).map_err(io_err(path)),
        None => emit(&text),
    }
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let params = CorpusParams {
        start: a.start,
        days: a.days,
        announcements_per_day: a.per_day,
        ases: a.ases,
        seed: a.seed,
        ..CorpusParams::default()
    };
    let labels = write_corpus(&a.out, &params)?;
    let layout = CorpusLayout {
        root: a.out.clone(),
    };
    let mut cfg = PipelineConfig::under(&a.out);
    cfg.snapshot_dir = layout.snapshots();
    let cfg_path = a.out.join("lov.toml");
    fs::write(&cfg_path, cfg.to_toml()?).map_err(io_err(&cfg_path))?;
    emit_line(&json!({
        "config": cfg_path,
        "training": layout.training(),
        "announcements": a.out.join("announcements"),
        "from": a.start,
        "to": a.start + Duration::days(a.days as i64 - 1),
        "persistent_benign": labels.persistent_benign.len(),
        "transient_benign": labels.transient_benign.len(),
        "resolved_benign": labels.resolved_benign.len(),
        "hijacks": labels.hijacks.len(),
    }))
}
