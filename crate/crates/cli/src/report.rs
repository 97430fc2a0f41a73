//! `report`: gathers the run's tables into one markdown file.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use oculobench_core::cohort::{format_count_percent, label_summary, CohortManifest};

use crate::output::{MANIFESTS, METRICS, STUDY};
use crate::{CliError, Ctx};

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Output file (default: report.md in the run directory).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

const SPLITS: [&str; 3] = ["train", "val", "test"];

fn cohort_section(md: &mut String, manifests: &[(String, CohortManifest)]) {
    let _ = writeln!(md, "## Cohort\n");
    let tables: Vec<_> = manifests.iter().map(|(_, m)| label_summary(m)).collect();
    let mut header = "| Task | Class |".to_string();
    let mut rule = "|---|---|".to_string();
    for ((name, _), t) in manifests.iter().zip(&tables) {
        let _ = write!(header, " {name} (N={}) |", t.total_images);
        rule.push_str("---|");
    }
    let _ = writeln!(md, "{header}\n{rule}");
    let Some(first) = tables.first() else { return };
    for (i, (task, class, _, _)) in first.rows().into_iter().enumerate() {
        let mut line = format!("| {task} | {class} |");
        for t in &tables {
            let (_, _, count, pct) = &t.rows()[i];
            let _ = write!(line, " {} |", format_count_percent(*count, *pct));
        }
        let _ = writeln!(md, "{line}");
    }
    md.push('\n');
}

/// Renders a CSV written by this tool as a markdown table; `#` lines are dropped.
fn csv_table(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).has_headers(false).flexible(true).from_reader(&bytes[..]);
    let mut out = String::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let cells: Vec<&str> = rec.iter().collect();
        let _ = writeln!(out, "| {} |", cells.join(" | "));
        if i == 0 {
            let _ = writeln!(out, "|{}", "---|".repeat(cells.len()));
        }
    }
    Ok(out)
}

fn csv_files(dir: &Path) -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map(|rd| rd.filter_map(Result::ok).map(|e| e.path()).filter(|p| p.extension().is_some_and(|x| x == "csv")).collect())
        .unwrap_or_default();
    files.sort();
    files
}

pub fn report(ctx: &mut Ctx, args: ReportArgs) -> Result<(), CliError> {
    let mut manifests = Vec::new();
    for s in SPLITS {
        let p = ctx.run.path(MANIFESTS, &format!("{s}.jsonl"));
        if p.exists() {
            manifests.push((s.to_string(), ctx.load_manifest(&p)?));
        }
    }
    if manifests.is_empty() {
        if let Some(p) = ctx.cfg.manifest.clone() {
            manifests.push(("all".to_string(), ctx.load_manifest(&p)?));
        }
    }

    let mut md = String::new();
    let _ = writeln!(md, "<!-- {} -->\n", ctx.prov().comment_line());
    let _ = writeln!(md, "# oculobench report\n");
    if !manifests.is_empty() {
        cohort_section(&mut md, &manifests);
    }
    let metrics = csv_files(&ctx.run.root().join(METRICS));
    if !metrics.is_empty() {
        let _ = writeln!(md, "## Metrics\n");
        for f in &metrics {
            let name = f.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            let _ = writeln!(md, "### {name}\n\n{}", csv_table(f)?);
        }
    }
    let study: Vec<PathBuf> =
        ["summary.csv", "agreement.csv"].iter().map(|f| ctx.run.path(STUDY, f)).filter(|p| p.exists()).collect();
    if !study.is_empty() {
        let _ = writeln!(md, "## Rater study\n");
        for f in &study {
            let name = f.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            let _ = writeln!(md, "### {name}\n\n{}", csv_table(f)?);
        }
    }
    let out = args.output.unwrap_or_else(|| ctx.run.root().join("report.md"));
    ctx.run.write_bytes(&out, md.as_bytes())?;
    println!("wrote {}", out.display());
    Ok(())
}
