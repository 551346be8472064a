//! The `pulsekin` command line: synth, extract, train, evaluate, ablate,
//! plot and rerun.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluator::{
    aggregate_relations, emit_roc_plot, parse_scores_csv, roc_auc, scores_csv, EvalReport, RelationRow, Summary,
};
use crate::filter::PreprocSpec;
use crate::io::{read_text, write_atomic};
use crate::net::{ModelConfig, ModelParams};
use crate::registry::{Registry, Relation};
use crate::rppg::{extract_all, ChannelMode, Method, MethodSpec};
use crate::synth::{synth_dataset, SynthConfig};
use crate::trace::{ingest_trace_with, MIN_DURATION_S};
use crate::trainer::{
    list_csv, run_loso, score_pairs, write_fold_artifacts, FoldOutcome, FoldPlan, KinDataset, ScoredPair, TrainConfig,
};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Parser)]
#[command(name = "pulsekin", version, about = "Kinship verification from rPPG signals")]
pub struct Cli {
    /// Seed for every random stream; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for file- and fold-level parallelism.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// TOML file with [model], [train], [preprocess], [rppg] and [synth] tables.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic family registry and RGB traces.
    Synth(SynthArgs),
    /// Extract rPPG signals from trace files.
    Extract(ExtractArgs),
    /// Train LOSO folds and score held-out pairs.
    Train(TrainArgs),
    /// Re-score held-out pairs from saved fold checkpoints.
    Evaluate(EvaluateArgs),
    /// Compare full, no-attention and single-channel variants.
    Ablate(AblateArgs),
    /// Overlay ROC curves from score files.
    Plot(PlotArgs),
    /// Repeat a recorded command from its manifest.
    Rerun(RerunArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Families per relation.
    #[arg(long)]
    pub families: Option<usize>,
    /// Comma-separated relation codes, or `all`.
    #[arg(long, value_parser = parse_relations)]
    pub relations: Option<RelationList>,
    #[arg(long)]
    pub kin_similarity: Option<f64>,
    /// Pulse SNR in dB; omit noise with `--clean`.
    #[arg(long, conflicts_with = "clean")]
    pub snr_db: Option<f64>,
    #[arg(long)]
    pub clean: bool,
    #[arg(long)]
    pub rois: Option<usize>,
    /// Start every recording at the same cardiac phase.
    #[arg(long)]
    pub phase_locked: bool,
    #[arg(long)]
    pub min_duration: Option<f64>,
    #[arg(long)]
    pub max_duration: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Directory of trace files.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// rPPG method name, or `all` for one subdirectory per method.
    #[arg(long, value_parser = parse_method_choice)]
    pub method: Option<MethodChoice>,
    /// Average all ROIs into one channel before extraction.
    #[arg(long)]
    pub single_channel: bool,
    #[arg(long, default_value_t = MIN_DURATION_S)]
    pub min_seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodChoice {
    One(Method),
    All,
}

#[derive(Debug, Args)]
pub struct RelationSelect {
    /// Relation code, e.g. F-S.
    #[arg(long, value_parser = parse_relation, conflicts_with = "all")]
    pub relation: Option<Relation>,
    /// Every relation present in the registry.
    #[arg(long)]
    pub all: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub registry: PathBuf,
    /// Directory of rPPG files.
    #[arg(long)]
    pub rppg: PathBuf,
    #[command(flatten)]
    pub select: RelationSelect,
    /// Drop the channel-attention block.
    #[arg(long)]
    pub no_attention: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Output directory of a previous `train` run.
    #[arg(long)]
    pub train_dir: PathBuf,
    #[arg(long)]
    pub registry: PathBuf,
    #[arg(long)]
    pub rppg: PathBuf,
    #[command(flatten)]
    pub select: RelationSelect,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub registry: PathBuf,
    /// Multi-channel rPPG files.
    #[arg(long)]
    pub rppg: PathBuf,
    /// Single-channel rPPG files of the same recordings.
    #[arg(long)]
    pub rppg_single: PathBuf,
    #[command(flatten)]
    pub select: RelationSelect,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Score file (`fold,a,b,kin,distance`); repeat to overlay.
    #[arg(long, required = true)]
    pub scores: Vec<PathBuf>,
    /// Legend label per score file, in order.
    #[arg(long)]
    pub label: Vec<String>,
}

#[derive(Debug, Args)]
pub struct RerunArgs {
    pub manifest: PathBuf,
}

fn parse_relation(s: &str) -> std::result::Result<Relation, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationList(pub Vec<Relation>);

fn parse_relations(s: &str) -> std::result::Result<RelationList, String> {
    if s.eq_ignore_ascii_case("all") {
        return Ok(RelationList(Relation::ALL.to_vec()));
    }
    s.split(',').map(|r| parse_relation(r.trim())).collect::<std::result::Result<_, _>>().map(RelationList)
}

fn parse_method_choice(s: &str) -> std::result::Result<MethodChoice, String> {
    if s.eq_ignore_ascii_case("all") {
        return Ok(MethodChoice::All);
    }
    s.parse().map(MethodChoice::One).map_err(|e: Error| e.to_string())
}

/// Every tunable value; file values override defaults and flags override both.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub preprocess: PreprocSpec,
    pub rppg: MethodSpec,
    pub synth: SynthConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        toml::from_str(&read_text(path)?).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub argv: Vec<String>,
    pub seed: u64,
    pub jobs: usize,
    pub config: RunConfig,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub duration_s: f64,
    #[serde(default)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        serde_json::from_str(&read_text(path)?).map_err(|e| Error::format(e.line(), format!("manifest: {e}")))
    }
}

/// Parses `args`, runs the command and maps the outcome to an exit code:
/// 0 on success, 1 on a data or compute error, 2 on a usage error.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<String> = args.into_iter().map(|a| a.into().to_string_lossy().into_owned()).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(cli, argv, None) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

struct Ctx {
    argv: Vec<String>,
    seed: u64,
    jobs: usize,
    config: RunConfig,
    out: PathBuf,
    started: Instant,
}

impl Ctx {
    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))
    }

    fn write_manifest(
        &self,
        command: &str,
        inputs: &[&Path],
        outputs: &[PathBuf],
        extra: BTreeMap<String, serde_json::Value>,
    ) -> Result<()> {
        let rel = |p: &Path| p.strip_prefix(&self.out).unwrap_or(p).display().to_string();
        let mut outputs: Vec<String> = outputs.iter().map(|p| rel(p)).collect();
        outputs.sort();
        let m = Manifest {
            tool: "pulsekin".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            argv: self.argv.clone(),
            seed: self.seed,
            jobs: self.jobs,
            config: self.config.clone(),
            inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
            outputs,
            duration_s: self.started.elapsed().as_secs_f64(),
            extra,
        };
        let mut text = serde_json::to_string_pretty(&m).expect("manifest serializes");
        text.push('\n');
        write_atomic(&self.out.join(MANIFEST), text.as_bytes())
    }
}

/// Runs a parsed command. `config` replaces the `--config` file, which is how
/// `rerun` replays the exact resolved configuration.
pub fn execute(cli: Cli, argv: Vec<String>, config: Option<RunConfig>) -> std::result::Result<(), Failure> {
    if let Command::Rerun(args) = &cli.command {
        return rerun(&args.manifest, cli.out.clone());
    }
    let mut config = match (config, &cli.config) {
        (Some(c), _) => c,
        (None, Some(path)) => RunConfig::load(path)?,
        (None, None) => RunConfig::default(),
    };
    let seed = cli.seed.unwrap_or(config.train.seed);
    config.train.seed = seed;
    config.synth.seed = seed;
    let jobs = cli.jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if jobs == 0 {
        return Err(Failure::Usage("--jobs must be at least 1".into()));
    }
    let out = cli.out.clone().ok_or_else(|| Failure::Usage("--out is required".into()))?;
    let mut ctx = Ctx { argv, seed, jobs, config, out, started: Instant::now() };
    match cli.command {
        Command::Synth(a) => cmd_synth(&mut ctx, a),
        Command::Extract(a) => cmd_extract(&mut ctx, a),
        Command::Train(a) => cmd_train(&mut ctx, a),
        Command::Evaluate(a) => cmd_evaluate(&mut ctx, a),
        Command::Ablate(a) => cmd_ablate(&mut ctx, a),
        Command::Plot(a) => cmd_plot(&mut ctx, a),
        Command::Rerun(_) => unreachable!("handled above"),
    }
}

fn rerun(manifest: &Path, out: Option<PathBuf>) -> std::result::Result<(), Failure> {
    let m = Manifest::load(manifest)?;
    let mut argv = m.argv.clone();
    if let Some(out) = out {
        replace_out(&mut argv, &out);
    }
    let cli = Cli::try_parse_from(&argv).map_err(|e| Failure::Usage(format!("manifest argv: {e}")))?;
    if matches!(cli.command, Command::Rerun(_)) {
        return Err(Failure::Usage("a manifest cannot rerun another rerun".into()));
    }
    execute(cli, argv, Some(m.config))
}

fn replace_out(argv: &mut Vec<String>, out: &Path) {
    let out = out.display().to_string();
    let mut i = 0;
    while i < argv.len() {
        if argv[i] == "--out" && i + 1 < argv.len() {
            argv[i + 1] = out.clone();
            return;
        }
        if argv[i].starts_with("--out=") {
            argv[i] = format!("--out={out}");
            return;
        }
        i += 1;
    }
    argv.push("--out".into());
    argv.push(out);
}

fn cmd_synth(ctx: &mut Ctx, a: SynthArgs) -> std::result::Result<(), Failure> {
    let cfg = &mut ctx.config.synth;
    if a.families.is_some() || a.relations.is_some() {
        let relations = a.relations.map(|r| r.0).unwrap_or_else(|| cfg.families.keys().copied().collect());
        let count = a.families.unwrap_or_else(|| cfg.families.values().copied().max().unwrap_or(10));
        cfg.families = relations.into_iter().map(|r| (r, count)).collect();
    }
    if let Some(k) = a.kin_similarity {
        cfg.kin_similarity = k;
    }
    if a.clean {
        cfg.noise_snr_db = None;
    } else if let Some(s) = a.snr_db {
        cfg.noise_snr_db = Some(s);
    }
    if let Some(r) = a.rois {
        cfg.skin.rois = r;
    }
    if a.phase_locked {
        cfg.random_phase = false;
    }
    if let Some(lo) = a.min_duration {
        cfg.duration_s.0 = lo;
    }
    if let Some(hi) = a.max_duration {
        cfg.duration_s.1 = hi;
    }
    let data = synth_dataset(cfg)?;
    let written = data.write(&ctx.out)?;
    println!(
        "synth: {} families, {} subjects, {} kin pairs",
        data.families.len(),
        data.registry.subjects.len(),
        data.registry.pairs.len()
    );
    ctx.write_manifest("synth", &[], &written, BTreeMap::new())?;
    Ok(())
}

fn cmd_extract(ctx: &mut Ctx, a: ExtractArgs) -> std::result::Result<(), Failure> {
    let methods = match a.method.unwrap_or(MethodChoice::One(ctx.config.rppg.method)) {
        MethodChoice::One(m) => vec![(m, ctx.out.clone())],
        MethodChoice::All => Method::ALL.into_iter().map(|m| (m, ctx.out.join(m.name()))).collect(),
    };
    let mode = if a.single_channel { ChannelMode::Single } else { ChannelMode::Multi };
    let files = list_csv(&a.input)?;
    if files.is_empty() {
        return Err(Error::InsufficientData(format!("no trace files in {}", a.input.display())).into());
    }
    let pre = ctx.config.preprocess;
    let pool = ctx.pool()?;
    let mut written = Vec::new();
    let mut failures = Vec::new();
    for (method, dir) in &methods {
        let spec = MethodSpec { method: *method, ..ctx.config.rppg };
        let results: Vec<(PathBuf, Result<(PathBuf, usize)>)> = pool.install(|| {
            files
                .par_iter()
                .map(|path| {
                    let r = (|| {
                        let trace = ingest_trace_with(path, a.min_seconds)?;
                        let sig = extract_all(&trace, &spec, &pre, mode)?;
                        let target = dir.join(path.file_name().expect("listed files have names"));
                        sig.write(&target)?;
                        Ok((target, sig.degenerate_channels()))
                    })();
                    (path.clone(), r)
                })
                .collect()
        });
        let mut degenerate = 0;
        let mut ok = 0;
        for (path, r) in results {
            match r {
                Ok((target, d)) => {
                    degenerate += d;
                    ok += 1;
                    written.push(target);
                }
                Err(e) => {
                    eprintln!("{}: {e}", path.display());
                    failures.push((path, e));
                }
            }
        }
        println!("{method}: {ok} files, {degenerate} degenerate channels");
    }
    if let Some((path, e)) = failures.into_iter().next() {
        // Leave no half-finished output set behind.
        for p in &written {
            let _ = std::fs::remove_file(p);
        }
        return Err(Failure::Run(Error::Extraction(format!("{}: {e}", path.display()))));
    }
    ctx.write_manifest("extract", &[&a.input], &written, BTreeMap::new())?;
    Ok(())
}

fn selected_relations(registry: &Registry, select: &RelationSelect) -> Vec<Relation> {
    match select.relation {
        Some(r) => vec![r],
        None => registry.relations(),
    }
}

fn model_for(ctx: &Ctx, data: &KinDataset, attention: bool) -> Result<ModelConfig> {
    let (channels, len) = data
        .input_shape()
        .ok_or_else(|| Error::InsufficientData("no rPPG signals loaded".into()))?;
    let cfg = ModelConfig { in_channels: channels, input_len: len, attention, ..ctx.config.model.clone() };
    cfg.validate()?;
    Ok(cfg)
}

/// Outcome of training one variant over the selected relations.
struct VariantRun {
    rows: Vec<RelationRow>,
    reports: Vec<EvalReport>,
    plans: BTreeMap<Relation, Vec<FoldPlan>>,
}

fn train_variant(
    ctx: &Ctx,
    data: &KinDataset,
    relations: &[Relation],
    model: &ModelConfig,
    dir: &Path,
    written: &mut Vec<PathBuf>,
) -> Result<VariantRun> {
    let mut run = VariantRun { rows: Vec::new(), reports: Vec::new(), plans: BTreeMap::new() };
    for &rel in relations {
        match run_loso(data, rel, model, &ctx.config.train, ctx.jobs) {
            Ok(outcomes) => {
                let rel_dir = dir.join(rel.code());
                write_fold_artifacts(&rel_dir, &outcomes)?;
                for o in &outcomes {
                    let stem = format!("fold_{:03}", o.plan.index);
                    written.push(rel_dir.join(format!("{stem}.pkin")));
                    written.push(rel_dir.join(format!("{stem}_history.csv")));
                }
                let plans: Vec<FoldPlan> = outcomes.iter().map(|o| o.plan.clone()).collect();
                let plans_path = rel_dir.join("folds.json");
                write_json(&plans_path, &plans)?;
                written.push(plans_path);
                let report = report_from(rel, &outcomes)?;
                let scores_path = rel_dir.join("scores.csv");
                write_atomic(&scores_path, scores_csv(&report.scores).as_bytes())?;
                written.push(scores_path);
                println!("{rel}: AUC {:.2}% over {} folds", 100.0 * report.roc.auc, report.n_folds);
                run.rows.push(RelationRow::from(&report));
                run.reports.push(report);
                run.plans.insert(rel, plans);
            }
            Err(e @ (Error::InsufficientData(_) | Error::Class { .. })) => {
                eprintln!("{rel}: skipped, {e}");
                run.rows.push(RelationRow { relation: rel, auc: None, n_pos: 0, n_neg: 0, n_folds: 0 });
            }
            Err(e) => return Err(e),
        }
    }
    Ok(run)
}

fn report_from(rel: Relation, outcomes: &[FoldOutcome]) -> Result<EvalReport> {
    let scores: Vec<ScoredPair> = outcomes.iter().flat_map(|o| o.scores.iter().cloned()).collect();
    EvalReport::pooled(rel.code(), rel, scores)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

/// Rows for all seven relations, in table order.
fn full_table(rows: Vec<RelationRow>) -> Vec<RelationRow> {
    Relation::ALL
        .into_iter()
        .map(|rel| {
            rows.iter()
                .find(|r| r.relation == rel)
                .cloned()
                .unwrap_or(RelationRow { relation: rel, auc: None, n_pos: 0, n_neg: 0, n_folds: 0 })
        })
        .collect()
}

fn write_results(dir: &Path, rows: Vec<RelationRow>, reports: &[EvalReport], written: &mut Vec<PathBuf>) -> Result<Summary> {
    let summary = aggregate_relations(full_table(rows))?;
    let csv = dir.join("results.csv");
    write_atomic(&csv, summary.to_csv().as_bytes())?;
    written.push(csv);
    let curves: Vec<(&str, &crate::evaluator::Roc)> = reports.iter().map(|r| (r.label.as_str(), &r.roc)).collect();
    let svg = dir.join("roc.svg");
    emit_roc_plot(&curves, &svg)?;
    written.push(svg);
    Ok(summary)
}

fn cmd_train(ctx: &mut Ctx, a: TrainArgs) -> std::result::Result<(), Failure> {
    let data = KinDataset::load(&a.registry, &a.rppg)?;
    let relations = selected_relations(&data.registry, &a.select);
    let model = model_for(ctx, &data, ctx.config.model.attention && !a.no_attention)?;
    ctx.config.model = model.clone();
    let mut written = Vec::new();
    let run = train_variant(ctx, &data, &relations, &model, &ctx.out, &mut written)?;
    let summary = write_results(&ctx.out, run.rows, &run.reports, &mut written)?;
    println!("mean AUC {:.2}% ± {:.2}", 100.0 * summary.mean, 100.0 * summary.std);
    ctx.write_manifest("train", &[&a.registry, &a.rppg], &written, BTreeMap::new())?;
    Ok(())
}

fn cmd_evaluate(ctx: &mut Ctx, a: EvaluateArgs) -> std::result::Result<(), Failure> {
    let data = KinDataset::load(&a.registry, &a.rppg)?;
    let relations = match a.select.relation {
        Some(r) => vec![r],
        None => Relation::ALL.to_vec(),
    };
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    let mut written = Vec::new();
    for rel in relations {
        let rel_dir = a.train_dir.join(rel.code());
        let plans_path = rel_dir.join("folds.json");
        if !plans_path.exists() {
            rows.push(RelationRow { relation: rel, auc: None, n_pos: 0, n_neg: 0, n_folds: 0 });
            continue;
        }
        let plans: Vec<FoldPlan> = serde_json::from_str(&read_text(&plans_path)?)
            .map_err(|e| Error::format(e.line(), format!("{}: {e}", plans_path.display())))?;
        let mut scores = Vec::new();
        for plan in &plans {
            let params = ModelParams::load(rel_dir.join(format!("fold_{:03}.pkin", plan.index)))?;
            scores.extend(score_pairs(&data, &params, plan.index, &plan.test)?);
        }
        let report = EvalReport::pooled(rel.code(), rel, scores)?;
        let out = ctx.out.join(rel.code()).join("scores.csv");
        write_atomic(&out, scores_csv(&report.scores).as_bytes())?;
        written.push(out);
        println!("{rel}: AUC {:.2}% over {} folds", 100.0 * report.roc.auc, report.n_folds);
        rows.push(RelationRow::from(&report));
        reports.push(report);
    }
    let summary = write_results(&ctx.out, rows, &reports, &mut written)?;
    println!("mean AUC {:.2}% ± {:.2}", 100.0 * summary.mean, 100.0 * summary.std);
    ctx.write_manifest("evaluate", &[&a.train_dir, &a.registry, &a.rppg], &written, BTreeMap::new())?;
    Ok(())
}

/// FNV-1a over the test pairs of every fold, to show that variants share them.
pub fn test_pair_hash(plans: &BTreeMap<Relation, Vec<FoldPlan>>) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for (rel, folds) in plans {
        for f in folds {
            for p in &f.test {
                for part in [rel.code(), &p.a, &p.b, if p.kin { "1" } else { "0" }] {
                    for b in part.bytes().chain([0u8]) {
                        h ^= b as u64;
                        h = h.wrapping_mul(0x0100_0000_01b3);
                    }
                }
            }
        }
    }
    format!("{h:016x}")
}

pub const VARIANTS: [&str; 3] = ["full", "no-attention", "single-channel"];

fn cmd_ablate(ctx: &mut Ctx, a: AblateArgs) -> std::result::Result<(), Failure> {
    let multi = KinDataset::load(&a.registry, &a.rppg)?;
    let single = KinDataset::load(&a.registry, &a.rppg_single)?;
    if single.input_shape().map(|s| s.0) != Some(1) {
        return Err(Error::Shape(format!("{} does not hold single-channel signals", a.rppg_single.display())).into());
    }
    let relations = selected_relations(&multi.registry, &a.select);
    let mut written = Vec::new();
    let mut runs = Vec::new();
    let mut hashes = serde_json::Map::new();
    for variant in VARIANTS {
        let (data, attention) = match variant {
            "full" => (&multi, true),
            "no-attention" => (&multi, false),
            _ => (&single, true),
        };
        let model = model_for(ctx, data, attention)?;
        println!("variant {variant}");
        let run = train_variant(ctx, data, &relations, &model, &ctx.out.join(variant), &mut written)?;
        hashes.insert(variant.into(), test_pair_hash(&run.plans).into());
        runs.push(run);
    }
    let table = ablation_csv(&relations, &runs.iter().map(|r| r.rows.clone()).collect::<Vec<_>>());
    let path = ctx.out.join("ablation.csv");
    write_atomic(&path, table.as_bytes())?;
    written.push(path);
    print!("{table}");
    let mut extra = BTreeMap::new();
    extra.insert("test_pair_hash".to_string(), serde_json::Value::Object(hashes));
    ctx.write_manifest("ablate", &[&a.registry, &a.rppg, &a.rppg_single], &written, extra)?;
    Ok(())
}

/// Variant rows of AUC percentages per relation plus a mean column, then the
/// two difference rows.
pub fn ablation_csv(relations: &[Relation], rows: &[Vec<RelationRow>]) -> String {
    let auc = |v: usize, rel: Relation| rows[v].iter().find(|r| r.relation == rel).and_then(|r| r.auc);
    let mean = |v: usize| {
        let a: Vec<f64> = relations.iter().filter_map(|r| auc(v, *r)).collect();
        (!a.is_empty()).then(|| a.iter().sum::<f64>() / a.len() as f64)
    };
    let fmt = |x: Option<f64>| x.map_or_else(|| "NA".to_string(), |x| format!("{:.2}", 100.0 * x));
    let fmt_delta = |x: Option<f64>| x.map_or_else(|| "NA".to_string(), |x| format!("{:+.2}", 100.0 * x));
    let mut s = String::from("variant");
    for r in relations {
        s.push(',');
        s.push_str(r.code());
    }
    s.push_str(",MEAN\n");
    for (v, name) in VARIANTS.iter().enumerate() {
        s.push_str(name);
        for r in relations {
            s.push(',');
            s.push_str(&fmt(auc(v, *r)));
        }
        s.push(',');
        s.push_str(&fmt(mean(v)));
        s.push('\n');
    }
    for (name, a, b) in [("multi-over-single", 0, 2), ("attention-over-none", 0, 1)] {
        s.push_str(name);
        for r in relations {
            s.push(',');
            s.push_str(&fmt_delta(auc(a, *r).zip(auc(b, *r)).map(|(x, y)| x - y)));
        }
        s.push(',');
        s.push_str(&fmt_delta(mean(a).zip(mean(b)).map(|(x, y)| x - y)));
        s.push('\n');
    }
    s
}

fn cmd_plot(ctx: &mut Ctx, a: PlotArgs) -> std::result::Result<(), Failure> {
    if !a.label.is_empty() && a.label.len() != a.scores.len() {
        return Err(Failure::Usage("give one --label per --scores file, or none".into()));
    }
    let mut rocs = Vec::new();
    for (i, path) in a.scores.iter().enumerate() {
        let scores = parse_scores_csv(&read_text(path)?)?;
        let roc = roc_auc(&scores.iter().map(|s| (s.distance, s.kin)).collect::<Vec<_>>())?;
        let label = a.label.get(i).cloned().unwrap_or_else(|| path.display().to_string());
        rocs.push((label, roc));
    }
    let curves: Vec<(&str, &crate::evaluator::Roc)> = rocs.iter().map(|(l, r)| (l.as_str(), r)).collect();
    let path = ctx.out.join("roc.svg");
    emit_roc_plot(&curves, &path)?;
    let inputs: Vec<&Path> = a.scores.iter().map(PathBuf::as_path).collect();
    ctx.write_manifest("plot", &inputs, &[path], BTreeMap::new())?;
    Ok(())
}
