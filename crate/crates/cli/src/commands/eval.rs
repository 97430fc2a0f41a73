use std::path::{Path, PathBuf};

use clap::Args;
use oculobench_core::cohort::CaseSet;
use oculobench_core::evaluation::{compare_predictions, score_predictions, truth_from_manifest, EvalError};
use oculobench_core::inference::{
    build_inference_prompt, load_predictions, run_batch, run_interviews, InferenceCase, InferenceError, Prediction,
    PredictionError, PromptKind, RunOptions, TaskHint,
};
use oculobench_core::stats::{write_comparisons_csv, write_metrics_csv, BootstrapConfig};
use oculobench_core::Task;

use crate::output::{slug, METRICS, PREDICTIONS};
use crate::{read_json, CliError, Ctx};

#[derive(Debug, Args)]
pub struct InferArgs {
    /// Model id from the endpoint registry.
    #[arg(long)]
    pub model: String,
    #[arg(long, default_value = "closed", value_parser = parse_kind)]
    pub kind: PromptKind,
    /// Task hint for open prompts.
    #[arg(long, value_parser = parse_hint)]
    pub hint: Option<TaskHint>,
    /// Run the five-question interview used for grading packets instead.
    #[arg(long, conflicts_with_all = ["kind", "hint"])]
    pub interview: bool,
    /// Manifest (default: manifests/test.jsonl).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Restrict to the cases of a sampled case set.
    #[arg(long)]
    pub case_set: Option<PathBuf>,
    #[arg(long)]
    pub images: Option<PathBuf>,
}

fn parse_kind(s: &str) -> Result<PromptKind, String> {
    s.parse().map_err(|e: oculobench_core::inference::PromptError| e.to_string())
}

fn parse_hint(s: &str) -> Result<TaskHint, String> {
    s.parse().map_err(|e: oculobench_core::inference::PromptError| e.to_string())
}

fn kind_name(kind: PromptKind) -> &'static str {
    match kind {
        PromptKind::Closed => "closed",
        PromptKind::Open => "open",
    }
}

/// Conventional output path for a prediction set.
pub fn predictions_file(model: &str, kind: PromptKind, hint: Option<TaskHint>) -> String {
    match hint {
        Some(h) => format!("{}_{}_{h}.jsonl", slug(model), kind_name(kind)),
        None => format!("{}_{}.jsonl", slug(model), kind_name(kind)),
    }
}

pub fn interviews_file(model: &str) -> String {
    format!("{}_interviews.jsonl", slug(model))
}

fn inference_error(e: InferenceError) -> CliError {
    match e {
        InferenceError::Auth { .. } => CliError::Config(e.to_string()),
        InferenceError::Image { .. } => CliError::Input(e.to_string()),
    }
}

pub fn infer(ctx: &mut Ctx, args: InferArgs) -> Result<(), CliError> {
    let path = ctx.manifest_path(args.manifest, Some("test.jsonl"))?;
    let mut manifest = ctx.load_manifest(&path)?;
    if let Some(cs) = &args.case_set {
        let set: CaseSet = read_json(cs)?;
        manifest = manifest.restrict_to_images(set.image_ids.iter().map(String::as_str));
        if manifest.len() != set.len() {
            return Err(CliError::Input(format!("{} names cases missing from {}", cs.display(), path.display())));
        }
    }
    let seed = ctx.seed("infer")?;
    let root = ctx.image_root(args.images, &path);
    let cases: Vec<InferenceCase> = manifest.records().iter().map(|r| InferenceCase::from_record(r, &root)).collect();
    let endpoint = ctx.cfg.endpoint(&args.model, &manifest, &root, seed)?;
    let prov = ctx.prov().with_seed("infer", seed).with_source(manifest.digest());
    let rt = ctx.runtime()?;

    if args.interview {
        let mut opts = RunOptions::for_kind(PromptKind::Open);
        opts.concurrency = ctx.cfg.concurrency;
        let records = rt
            .block_on(run_interviews(&cases, endpoint, &args.model, seed, &opts))
            .map_err(inference_error)?;
        let out = ctx.run.path(PREDICTIONS, &interviews_file(&args.model));
        ctx.run.write_jsonl(&out, &records, &prov)?;
        let failed = records.iter().filter(|r| r.error.is_some()).count();
        println!("{} interviews, {failed} failed", records.len());
        if failed > 0 {
            return Err(CliError::Validation(format!("{failed} interviews failed at the endpoint; rerun to retry")));
        }
        return Ok(());
    }

    if args.kind == PromptKind::Open && args.hint.is_none() {
        return Err(CliError::Config("open prompts need --hint".into()));
    }
    let prompt = build_inference_prompt(args.kind, args.hint, seed).map_err(|e| CliError::Config(e.to_string()))?;
    let out = ctx.run.path(PREDICTIONS, &predictions_file(&args.model, args.kind, args.hint));
    // Finished cases are reused; transport failures are retried.
    let existing: Vec<Prediction> = if out.exists() {
        load_predictions(&out)
            .map_err(|e| CliError::Input(format!("{}: {e}", out.display())))?
            .into_iter()
            .filter(|p| p.parse_error != Some(PredictionError::Transport))
            .collect()
    } else {
        Vec::new()
    };
    let mut opts = RunOptions::for_kind(args.kind);
    opts.concurrency = ctx.cfg.concurrency;
    let preds = rt
        .block_on(run_batch(&cases, endpoint, &args.model, &prompt, &opts, &existing))
        .map_err(inference_error)?;
    ctx.run.write_jsonl(&out, &preds, &prov)?;
    let transport = preds.iter().filter(|p| p.parse_error == Some(PredictionError::Transport)).count();
    let unparsed = preds.iter().filter(|p| p.parsed.is_none()).count() - transport;
    println!("{} predictions, {unparsed} unparseable, {transport} transport failures", preds.len());
    if transport > 0 {
        return Err(CliError::Validation(format!("{transport} cases failed at the endpoint; rerun to retry")));
    }
    Ok(())
}

fn load(path: &Path) -> Result<Vec<Prediction>, CliError> {
    load_predictions(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn eval_error(e: EvalError) -> CliError {
    CliError::Input(e.to_string())
}

fn bootstrap(ctx: &Ctx) -> Result<(u64, BootstrapConfig), CliError> {
    let seed = ctx.seed("bootstrap")?;
    let cfg = BootstrapConfig::new(seed).with_resamples(ctx.cfg.bootstrap_resamples).with_alpha(ctx.cfg.alpha);
    Ok((seed, cfg))
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Prediction files; one metrics row per (file, task).
    #[arg(long, required = true, num_args = 1..)]
    pub predictions: Vec<PathBuf>,
    /// Manifest with ground truth (default: manifests/test.jsonl).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "ADVAMD,PIG,DRUS")]
    pub task: Vec<Task>,
    /// Output name under metrics/.
    #[arg(long, default_value = "metrics")]
    pub name: String,
}

pub fn score(ctx: &mut Ctx, args: ScoreArgs) -> Result<(), CliError> {
    let path = ctx.manifest_path(args.manifest, Some("test.jsonl"))?;
    let manifest = ctx.load_manifest(&path)?;
    let truth = truth_from_manifest(&manifest);
    let (seed, cfg) = bootstrap(ctx)?;
    let mut metrics = Vec::new();
    for p in &args.predictions {
        metrics.extend(score_predictions(&load(p)?, &truth, &args.task, &cfg).map_err(eval_error)?);
    }
    let prov = ctx.prov().with_seed("bootstrap", seed).with_source(manifest.digest());
    let mut buf = Vec::new();
    write_metrics_csv(&mut buf, &metrics, Some(&prov)).map_err(|e| CliError::Runtime(e.to_string()))?;
    let out = ctx.run.path(METRICS, &format!("{}.csv", args.name));
    ctx.run.write_bytes(&out, &buf)?;
    for m in &metrics {
        println!(
            "{} {}: accuracy {:.3} ({:.3}-{:.3}), F1 {:.3} ({:.3}-{:.3})",
            m.model_id, m.task, m.accuracy, m.acc_ci.low, m.acc_ci.high, m.f1, m.f1_ci.low, m.f1_ci.high
        );
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "ADVAMD,PIG,DRUS")]
    pub task: Vec<Task>,
}

pub fn compare(ctx: &mut Ctx, args: CompareArgs) -> Result<(), CliError> {
    let path = ctx.manifest_path(args.manifest, Some("test.jsonl"))?;
    let manifest = ctx.load_manifest(&path)?;
    let truth = truth_from_manifest(&manifest);
    let (seed, cfg) = bootstrap(ctx)?;
    let a = load(&args.a)?;
    let b = load(&args.b)?;
    let results = compare_predictions(&a, &b, &truth, &args.task, &cfg).map_err(eval_error)?;
    let prov = ctx.prov().with_seed("bootstrap", seed).with_source(manifest.digest());
    let mut buf = Vec::new();
    write_comparisons_csv(&mut buf, &results, Some(&prov)).map_err(|e| CliError::Runtime(e.to_string()))?;
    let (ma, mb) = (&a[0].model_id, &b[0].model_id);
    let out = ctx.run.path(METRICS, &format!("compare_{}_vs_{}.csv", slug(ma), slug(mb)));
    ctx.run.write_bytes(&out, &buf)?;
    for r in &results {
        println!(
            "{}: b={} c={} McNemar p={:.4} bootstrap F1 p={}",
            r.task,
            r.discordant.b,
            r.discordant.c,
            r.p_accuracy,
            r.p_f1.display(4)
        );
    }
    Ok(())
}
