use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Args;
use oculobench_core::cohort::{split_by_participant, stratified_sample, CohortManifest, SplitRatios};
use oculobench_core::dialogue::{
    generate_batch, render_dialogue_prompt, serialize_training_record, validate_dialogue, ConversationDoc,
    DialogueMode, DialogueRecord, GenerationError, GenerationParams, Turn, ValidationFailure,
};
use oculobench_core::endpoint::EndpointError;
use oculobench_core::Task;
use serde::{Deserialize, Serialize};

use crate::output::{slug, DIALOGUES, MANIFESTS};
use crate::{read_jsonl, CliError, Ctx};

pub const CASE_SET_FILE: &str = "case_set.json";

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Source manifest (default: `manifest` from the config).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Train, val and test fractions; `train,test` leaves val empty.
    #[arg(long, value_parser = parse_ratios)]
    pub ratios: SplitRatios,
}

fn parse_ratios(s: &str) -> Result<SplitRatios, String> {
    s.parse::<SplitRatios>().map_err(|e| e.to_string())
}

pub fn split(ctx: &mut Ctx, args: SplitArgs) -> Result<(), CliError> {
    let path = ctx.manifest_path(args.manifest, None)?;
    let manifest = ctx.load_manifest(&path)?;
    let seed = ctx.seed("split")?;
    let split = split_by_participant(&manifest, args.ratios, seed).map_err(|e| CliError::Input(e.to_string()))?;
    let prov = ctx.prov().with_seed("split", seed).with_source(manifest.digest());
    let out = ctx.run.path(MANIFESTS, "split.json");
    ctx.run.write_json(&out, &split, &prov)?;
    let counts = split.image_counts(&manifest);
    for name in split.splits.keys() {
        let subset = split.subset(&manifest, name).expect("split name comes from the manifest");
        let path = ctx.run.path(MANIFESTS, &format!("{name}.jsonl"));
        ctx.run.write_jsonl_text(&path, subset.to_jsonl().as_bytes(), &prov)?;
        println!(
            "{name}: {} participants, {} images",
            split.splits[name].len(),
            counts.get(name).copied().unwrap_or(0)
        );
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// Manifest to sample from (default: manifests/test.jsonl).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Sample size (default: the study design's case count).
    #[arg(long)]
    pub n: Option<usize>,
    /// Tasks whose joint labels define strata.
    #[arg(long, value_delimiter = ',', default_value = "ADVAMD,PIG,DRUS")]
    pub strata: Vec<Task>,
}

pub fn sample(ctx: &mut Ctx, args: SampleArgs) -> Result<(), CliError> {
    let path = ctx.manifest_path(args.manifest, Some("test.jsonl"))?;
    let manifest = ctx.load_manifest(&path)?;
    let seed = ctx.seed("sample")?;
    let n = args.n.unwrap_or_else(|| ctx.cfg.study.total_cases());
    let set = stratified_sample(&manifest, n, &args.strata, seed).map_err(|e| CliError::Input(e.to_string()))?;
    for w in &set.warnings {
        tracing::warn!("{w}");
    }
    let prov = ctx.prov().with_seed("sample", seed).with_source(manifest.digest());
    let out = ctx.run.path(MANIFESTS, CASE_SET_FILE);
    ctx.run.write_json(&out, &set, &prov)?;
    println!("sampled {} of {} images over {} strata", set.len(), manifest.len(), set.allocations.len());
    Ok(())
}

/// Counts written beside each dialogue set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationSummary {
    pub mode: Option<DialogueMode>,
    pub total: usize,
    pub valid: usize,
    pub invalid: usize,
    /// Cases whose generation failed at the endpoint.
    pub endpoint_errors: usize,
    pub invalid_fraction: f64,
    pub threshold: f64,
    pub failures: BTreeMap<String, usize>,
    pub invalid_cases: Vec<String>,
}

impl ValidationSummary {
    fn new(mode: Option<DialogueMode>, threshold: f64) -> Self {
        ValidationSummary {
            mode,
            total: 0,
            valid: 0,
            invalid: 0,
            endpoint_errors: 0,
            invalid_fraction: 0.0,
            threshold,
            failures: BTreeMap::new(),
            invalid_cases: Vec::new(),
        }
    }

    fn add(&mut self, case: &str, failures: &[String]) {
        self.total += 1;
        if failures.is_empty() {
            self.valid += 1;
            return;
        }
        self.invalid += 1;
        self.invalid_cases.push(case.to_string());
        for f in failures {
            *self.failures.entry(f.clone()).or_default() += 1;
        }
    }

    fn finish(mut self) -> Self {
        self.invalid_fraction = if self.total == 0 { 0.0 } else { self.invalid as f64 / self.total as f64 };
        self
    }

    fn check(&self) -> Result<(), CliError> {
        println!("{} dialogues: {} valid, {} invalid ({:.1}%)", self.total, self.valid, self.invalid, 100.0 * self.invalid_fraction);
        if self.invalid_fraction > self.threshold {
            return Err(CliError::Validation(format!(
                "{:.1}% of dialogues are invalid, above the {:.1}% threshold",
                100.0 * self.invalid_fraction,
                100.0 * self.threshold
            )));
        }
        Ok(())
    }
}

fn failure_names(failures: &[ValidationFailure]) -> Vec<String> {
    failures
        .iter()
        .map(|f| serde_json::to_value(f).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default())
        .collect()
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Manifest to generate for (default: manifests/train.jsonl).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Generator model id from the endpoint registry.
    #[arg(long)]
    pub model: String,
    #[arg(long, default_value = "open")]
    pub mode: DialogueMode,
    /// Only the first N cases.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Image directory for stub endpoints.
    #[arg(long)]
    pub images: Option<PathBuf>,
    /// Largest tolerated invalid fraction (default: from the config).
    #[arg(long)]
    pub max_invalid: Option<f64>,
}

fn mode_name(mode: DialogueMode) -> &'static str {
    match mode {
        DialogueMode::Open => "open",
        DialogueMode::Json => "json",
    }
}

pub fn gen(ctx: &mut Ctx, args: GenArgs) -> Result<(), CliError> {
    let path = ctx.manifest_path(args.manifest, Some("train.jsonl"))?;
    let manifest = ctx.load_manifest(&path)?;
    let seed = ctx.seed("gen")?;
    let root = ctx.image_root(args.images, &path);
    let endpoint = ctx.cfg.endpoint(&args.model, &manifest, &root, seed)?;
    let records: Vec<_> = manifest.records().iter().take(args.limit.unwrap_or(usize::MAX)).collect();
    let jobs = records.iter().map(|r| (render_dialogue_prompt(r, args.mode), r.labels)).collect();
    let rt = ctx.runtime()?;
    let results = rt.block_on(generate_batch(jobs, endpoint, GenerationParams::default(), ctx.cfg.concurrency));

    let threshold = args.max_invalid.unwrap_or(ctx.cfg.max_invalid_fraction);
    let mut summary = ValidationSummary::new(Some(args.mode), threshold);
    let mut dialogues = Vec::new();
    let mut corpus = Vec::new();
    for (record, result) in records.iter().zip(results) {
        match result {
            Ok(d) => {
                summary.add(&d.case_ref, &failure_names(&d.validation.failures));
                if let Ok(doc) = serialize_training_record(record, &d) {
                    corpus.push(doc);
                }
                dialogues.push(d);
            }
            Err(GenerationError::Endpoint { source: EndpointError::Auth(msg), .. }) => {
                return Err(CliError::Config(format!("endpoint for `{}` rejected credentials: {msg}", args.model)));
            }
            Err(e) => {
                tracing::warn!(case = %record.image_id, error = %e, "generation failed");
                summary.endpoint_errors += 1;
                summary.add(&record.image_id, &["endpoint".to_string()]);
            }
        }
    }
    let summary = summary.finish();
    let prov = ctx.prov().with_seed("gen", seed).with_source(manifest.digest());
    let stem = format!("{}_{}", slug(&args.model), mode_name(args.mode));
    let p = ctx.run.path(DIALOGUES, &format!("{stem}_records.jsonl"));
    ctx.run.write_jsonl(&p, &dialogues, &prov)?;
    let p = ctx.run.path(DIALOGUES, &format!("{stem}_corpus.jsonl"));
    ctx.run.write_jsonl(&p, &corpus, &prov)?;
    let p = ctx.run.path(DIALOGUES, &format!("{stem}_validation.json"));
    ctx.run.write_json(&p, &summary, &prov)?;
    summary.check()
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Dialogue records or corpus documents (JSONL).
    #[arg(long)]
    pub dialogues: PathBuf,
    /// Manifest with the labels (default: manifests/train.jsonl).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub max_invalid: Option<f64>,
}

/// A line of either file kind.
#[derive(Deserialize)]
#[serde(untagged)]
enum DialogueLine {
    Corpus(ConversationDoc),
    Record(DialogueRecord),
}

impl DialogueLine {
    fn parts(self) -> (String, DialogueMode, Vec<Turn>) {
        match self {
            DialogueLine::Corpus(d) => {
                let turns = d.turns();
                (d.id, d.mode, turns)
            }
            DialogueLine::Record(r) => (r.case_ref, r.mode, r.turns),
        }
    }
}

fn validate_lines(manifest: &CohortManifest, lines: Vec<DialogueLine>, threshold: f64) -> ValidationSummary {
    let mut summary = ValidationSummary::new(None, threshold);
    for line in lines {
        let (case, mode, turns) = line.parts();
        summary.mode.get_or_insert(mode);
        let Some(record) = manifest.get(&case) else {
            summary.add(&case, &["unknown_case".to_string()]);
            continue;
        };
        let report = validate_dialogue(mode, &turns, &record.labels);
        summary.add(&case, &failure_names(&report.failures));
    }
    summary.finish()
}

pub fn validate(ctx: &mut Ctx, args: ValidateArgs) -> Result<(), CliError> {
    let path = ctx.manifest_path(args.manifest, Some("train.jsonl"))?;
    let manifest = ctx.load_manifest(&path)?;
    let lines: Vec<DialogueLine> = read_jsonl(&args.dialogues)?;
    let threshold = args.max_invalid.unwrap_or(ctx.cfg.max_invalid_fraction);
    let summary = validate_lines(&manifest, lines, threshold);
    let prov = ctx.prov().with_source(manifest.digest());
    let stem = file_stem(&args.dialogues);
    let out = ctx.run.path(DIALOGUES, &format!("{stem}.validation.json"));
    ctx.run.write_json(&out, &summary, &prov)?;
    summary.check()
}

fn file_stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "dialogues".into())
}
