mod data;
mod eval;
mod study;

use clap::Subcommand;

pub use data::{GenArgs, SampleArgs, SplitArgs, ValidateArgs};
pub use eval::{CompareArgs, InferArgs, ScoreArgs};
pub use study::{AgreeArgs, ExportArgs, IngestArgs, PlanArgs, ServeArgs};

use crate::report::ReportArgs;
use crate::{CliError, Ctx};

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split a manifest by participant into train/val/test.
    Split(SplitArgs),
    /// Draw a label-stratified case set.
    Sample(SampleArgs),
    /// Generate synthetic dialogues and the training corpus.
    Gen(GenArgs),
    /// Re-validate a dialogue or corpus file against manifest labels.
    Validate(ValidateArgs),
    /// Run closed or open prompts, or full interviews, against a model.
    Infer(InferArgs),
    /// Accuracy and F1 with confidence intervals.
    Score(ScoreArgs),
    /// Paired comparison of two prediction sets.
    Compare(CompareArgs),
    /// Build the blinded rater assignment plan.
    Plan(PlanArgs),
    /// Export blinded grading packets.
    Export(ExportArgs),
    /// Join rater scores with the sealed plan and summarize them.
    Ingest(IngestArgs),
    /// Inter-rater agreement on the common cases.
    Agree(AgreeArgs),
    /// Serve the grading session API.
    Serve(ServeArgs),
    /// Collect the run's tables into report.md.
    Report(ReportArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Split(_) => "split",
            Command::Sample(_) => "sample",
            Command::Gen(_) => "gen",
            Command::Validate(_) => "validate",
            Command::Infer(_) => "infer",
            Command::Score(_) => "score",
            Command::Compare(_) => "compare",
            Command::Plan(_) => "plan",
            Command::Export(_) => "export",
            Command::Ingest(_) => "ingest",
            Command::Agree(_) => "agree",
            Command::Serve(_) => "serve",
            Command::Report(_) => "report",
        }
    }

    pub(crate) fn execute(self, ctx: &mut Ctx) -> Result<(), CliError> {
        match self {
            Command::Split(a) => data::split(ctx, a),
            Command::Sample(a) => data::sample(ctx, a),
            Command::Gen(a) => data::gen(ctx, a),
            Command::Validate(a) => data::validate(ctx, a),
            Command::Infer(a) => eval::infer(ctx, a),
            Command::Score(a) => eval::score(ctx, a),
            Command::Compare(a) => eval::compare(ctx, a),
            Command::Plan(a) => study::plan(ctx, a),
            Command::Export(a) => study::export(ctx, a),
            Command::Ingest(a) => study::ingest(ctx, a),
            Command::Agree(a) => study::agree(ctx, a),
            Command::Serve(a) => study::serve(ctx, a),
            Command::Report(a) => crate::report::report(ctx, a),
        }
    }
}
