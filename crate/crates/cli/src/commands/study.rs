use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::Args;
use oculobench_core::cohort::CaseSet;
use oculobench_core::endpoint::ChatEndpoint;
use oculobench_core::inference::InterviewRecord;
use oculobench_core::stats::BootstrapConfig;
use oculobench_core::study::{
    agreement_matrices, blind_export, build_assignments, fmt3, ingest_scores, read_scores_csv, summarize_scores,
    write_agreement_csv, write_summary_csv, AssignmentPlan, GradingPacket, PublicPlan, Question, RubricScoreEntry,
    ScoreTable, SealedMap, StudyError, Weighting,
};
use oculobench_server::{AppState, SessionInputs, SCORES_FILE};

use super::data::CASE_SET_FILE;
use super::eval::interviews_file;
use crate::output::{MANIFESTS, PREDICTIONS, STUDY};
use crate::{read_json, read_jsonl, CliError, Ctx};

pub const PLAN_FILE: &str = "plan.json";
pub const SEALED_FILE: &str = "sealed.json";
pub const PACKETS_FILE: &str = "packets.jsonl";
pub const SCORE_TABLE_FILE: &str = "score_table.json";
/// Session-service data directory under study/.
pub const SESSION_DIR: &str = "session";

fn study_error(e: StudyError) -> CliError {
    match e {
        StudyError::BlindingViolation { .. }
        | StudyError::ScoreOutOfRange { .. }
        | StudyError::UnknownPacket(_)
        | StudyError::RaterMismatch { .. } => CliError::Validation(e.to_string()),
        StudyError::InvalidDesign(_) | StudyError::SizeMismatch { .. } => CliError::Config(e.to_string()),
        _ => CliError::Input(e.to_string()),
    }
}

fn load_plan(ctx: &Ctx) -> Result<AssignmentPlan, CliError> {
    let public: PublicPlan = read_json(&ctx.run.path(STUDY, PLAN_FILE))?;
    let sealed: SealedMap = read_json(&ctx.run.path(STUDY, SEALED_FILE))?;
    let plan = AssignmentPlan { public, sealed };
    plan.check().map_err(|e| CliError::Input(format!("assignment plan: {e}")))?;
    Ok(plan)
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    /// Case set from `sample` (default: manifests/case_set.json).
    #[arg(long)]
    pub case_set: Option<PathBuf>,
    /// Models to grade (default: every configured endpoint).
    #[arg(long, value_delimiter = ',')]
    pub models: Vec<String>,
}

pub fn plan(ctx: &mut Ctx, args: PlanArgs) -> Result<(), CliError> {
    let path = args.case_set.unwrap_or_else(|| ctx.run.path(MANIFESTS, CASE_SET_FILE));
    let set: CaseSet = read_json(&path)?;
    let models = if args.models.is_empty() { ctx.cfg.endpoints.keys().cloned().collect() } else { args.models };
    if models.is_empty() {
        return Err(CliError::Config("no models: pass --models or configure endpoints".into()));
    }
    let seed = ctx.seed("plan")?;
    let plan = build_assignments(&set.image_ids, ctx.cfg.study, &models, seed).map_err(study_error)?;
    let prov = ctx.prov().with_seed("plan", seed).with_source(set.source_digest.clone());
    let p = ctx.run.path(STUDY, PLAN_FILE);
    ctx.run.write_json(&p, &plan.public, &prov)?;
    let p = ctx.run.path(STUDY, SEALED_FILE);
    ctx.run.write_json(&p, &plan.sealed, &prov)?;
    for r in &plan.public.raters {
        println!("{r}: {} packets", plan.public.queue(r).map_or(0, <[String]>::len));
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Interview files (default: predictions/<model>_interviews.jsonl per planned model).
    #[arg(long, num_args = 1..)]
    pub transcripts: Vec<PathBuf>,
    /// Manifest holding the planned cases (default: manifests/test.jsonl).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

pub fn export(ctx: &mut Ctx, args: ExportArgs) -> Result<(), CliError> {
    let plan = load_plan(ctx)?;
    let path = ctx.manifest_path(args.manifest, Some("test.jsonl"))?;
    let manifest = ctx.load_manifest(&path)?;
    let files = if args.transcripts.is_empty() {
        plan.models().iter().map(|m| ctx.run.path(PREDICTIONS, &interviews_file(m))).collect()
    } else {
        args.transcripts
    };
    let mut transcripts: Vec<InterviewRecord> = Vec::new();
    for f in &files {
        transcripts.extend(read_jsonl::<InterviewRecord>(f)?);
    }
    let packets = blind_export(&plan, &manifest, &transcripts).map_err(study_error)?;
    let prov = ctx.prov().with_seed("plan", plan.public.seed).with_source(manifest.digest());
    let out = ctx.run.path(STUDY, PACKETS_FILE);
    ctx.run.write_jsonl(&out, &packets, &prov)?;
    println!("{} packets exported", packets.len());
    Ok(())
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Score export: JSONL from the session service or CSV (default: study/session/scores.jsonl).
    #[arg(long)]
    pub scores: Option<PathBuf>,
}

fn read_scores(path: &Path) -> Result<Vec<RubricScoreEntry>, CliError> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        let f = std::fs::File::open(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        read_scores_csv(f).map_err(study_error)
    } else {
        read_jsonl(path)
    }
}

pub fn ingest(ctx: &mut Ctx, args: IngestArgs) -> Result<(), CliError> {
    let plan = load_plan(ctx)?;
    let path = args.scores.unwrap_or_else(|| ctx.run.path(STUDY, SESSION_DIR).join(SCORES_FILE));
    let entries = read_scores(&path)?;
    let table = ingest_scores(&plan, &entries).map_err(study_error)?;
    let seed = ctx.seed("bootstrap")?;
    let cfg = BootstrapConfig::new(seed).with_resamples(ctx.cfg.bootstrap_resamples).with_alpha(ctx.cfg.alpha);
    let summary = summarize_scores(&table, &cfg).map_err(study_error)?;
    let prov = ctx.prov().with_seed("plan", plan.public.seed).with_seed("bootstrap", seed);
    let p = ctx.run.path(STUDY, SCORE_TABLE_FILE);
    ctx.run.write_json(&p, &table, &prov)?;
    let mut buf = Vec::new();
    write_summary_csv(&mut buf, &summary, Some(&prov)).map_err(study_error)?;
    let p = ctx.run.path(STUDY, "summary.csv");
    ctx.run.write_bytes(&p, &buf)?;
    for c in &table.completeness {
        println!("{}: {}/{} scored ({:.1}%)", c.rater_id, c.scored, c.assigned, c.percent);
    }
    for m in &summary.models {
        let avgs: Vec<String> = Question::ALL
            .iter()
            .map(|q| format!("{} {}", q, summary.average(m, *q).map_or("-".into(), fmt3)))
            .collect();
        println!("{m}: {}", avgs.join(", "));
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct AgreeArgs {
    #[arg(long, default_value = "quadratic", value_parser = parse_weighting)]
    pub weighting: Weighting,
}

fn parse_weighting(s: &str) -> Result<Weighting, String> {
    s.parse::<Weighting>().map_err(|e| e.to_string())
}

pub fn agree(ctx: &mut Ctx, args: AgreeArgs) -> Result<(), CliError> {
    let plan = load_plan(ctx)?;
    let table: ScoreTable = read_json(&ctx.run.path(STUDY, SCORE_TABLE_FILE))?;
    let report =
        agreement_matrices(&table, &plan.public.common, &plan.public.raters, args.weighting).map_err(study_error)?;
    let prov = ctx.prov().with_seed("plan", plan.public.seed);
    let p = ctx.run.path(STUDY, "agreement.json");
    ctx.run.write_json(&p, &report, &prov)?;
    let mut buf = Vec::new();
    write_agreement_csv(&mut buf, &report, Some(&prov)).map_err(study_error)?;
    let p = ctx.run.path(STUDY, "agreement.csv");
    ctx.run.write_bytes(&p, &buf)?;
    println!("{} agreement matrices, {} delta matrices", report.matrices.len(), report.deltas.len());
    Ok(())
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Listen address (default: `server.bind` from the config).
    #[arg(long)]
    pub bind: Option<String>,
    /// Manifest holding the planned cases (default: manifests/test.jsonl).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub images: Option<PathBuf>,
}

pub fn serve(ctx: &mut Ctx, args: ServeArgs) -> Result<(), CliError> {
    let plan = load_plan(ctx)?;
    let packets: Vec<GradingPacket> = read_jsonl(&ctx.run.path(STUDY, PACKETS_FILE))?;
    let path = ctx.manifest_path(args.manifest, Some("test.jsonl"))?;
    let manifest = ctx.load_manifest(&path)?;
    let image_root = ctx.image_root(args.images, &path);
    // Only stub endpoints consume the seed.
    let seed = ctx.seed("infer").unwrap_or(0);
    let mut endpoints: BTreeMap<String, Arc<dyn ChatEndpoint>> = BTreeMap::new();
    for m in plan.models() {
        endpoints.insert(m.clone(), ctx.cfg.endpoint(m, &manifest, &image_root, seed)?);
    }
    let bind = args.bind.unwrap_or_else(|| ctx.cfg.server.bind.clone());
    let state = AppState::new(SessionInputs {
        plan,
        packets,
        manifest,
        image_root,
        tokens: ctx.cfg.server.tokens.clone(),
        endpoints,
        data_dir: ctx.run.path(STUDY, SESSION_DIR),
    })
    .map_err(|e| CliError::Config(e.to_string()))?;
    let rt = ctx.runtime()?;
    eprintln!("serving the grading session on {bind}");
    rt.block_on(oculobench_server::serve(Arc::new(state), &bind)).map_err(|e| CliError::Runtime(e.to_string()))
}
