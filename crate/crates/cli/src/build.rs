//! `pvkit build`: tabulate reports or aggregate counts into a table CSV.

use std::fs;
use std::path::PathBuf;

use clap::Args;

use pvkit::io::{self, InputFormat};
use pvkit::table::{build_from_aggregates, build_from_reports, filter_aes_by_keywords};
use pvkit::Error;

use crate::analyze::read_lines;
use crate::manifest::ManifestBuilder;
use crate::CliError;

#[derive(Debug, Args)]
pub struct BuildArgs {
    /// Report-level (`report_id,drug,ae`) or aggregate (`ae,drug,count`) CSV.
    #[arg(long)]
    pub input: PathBuf,
    /// Drugs of interest, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub interest: Vec<String>,
    /// File with one reference drug per line. Other drugs not of interest
    /// are left out; without it every such drug is a reference drug.
    #[arg(long)]
    pub reference_list: Option<PathBuf>,
    /// File with one AE keyword per line. Non-matching AEs are pooled into
    /// `other AEs`.
    #[arg(long)]
    pub ae_keywords: Option<PathBuf>,
    /// Output table CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Manifest path; defaults to `manifest.json` beside the output.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

pub fn cmd_build(a: &BuildArgs) -> Result<(), CliError> {
    let interest: Vec<String> = a.interest.iter().map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
    let manifest_path = a.manifest.clone().unwrap_or_else(|| {
        a.out.parent().filter(|d| !d.as_os_str().is_empty()).map_or_else(|| "manifest.json".into(), |d| d.join("manifest.json"))
    });
    let params = serde_json::json!({ "interest": interest });
    let mut manifest = ManifestBuilder::new(manifest_path, "build", None, params, None);

    let data = fs::read(&a.input).map_err(|e| CliError::io(&a.input, e))?;
    manifest.input(&a.input, &data);
    let reference = match &a.reference_list {
        Some(p) => {
            let (lines, bytes) = read_lines(p)?;
            manifest.input(p, &bytes);
            Some(lines)
        }
        None => None,
    };
    let keywords = match &a.ae_keywords {
        Some(p) => {
            let (lines, bytes) = read_lines(p)?;
            manifest.input(p, &bytes);
            Some(lines)
        }
        None => None,
    };

    let mut table = match io::detect_format(&data)? {
        InputFormat::Reports => {
            let mut records = io::read_reports(data.as_slice())?;
            if let Some(reference) = &reference {
                let both: Vec<String> = interest.iter().filter(|d| reference.contains(d)).cloned().collect();
                if !both.is_empty() {
                    return Err(Error::DisjointnessViolation(both).into());
                }
                records.retain(|r| interest.contains(&r.drug) || reference.contains(&r.drug));
            }
            build_from_reports(&records, &interest)?
        }
        InputFormat::Aggregates => {
            let aggs = io::read_aggregates(data.as_slice())?;
            build_from_aggregates(&aggs, &interest, reference.as_deref().unwrap_or(&[]))?
        }
        InputFormat::Table => return Err(CliError::Input(format!("{} is already a table", a.input.display()))),
    };
    if let Some(k) = &keywords {
        table = filter_aes_by_keywords(&table, k)?;
    }
    for w in table.warnings() {
        eprintln!("warning: {w}");
    }
    let mut out = Vec::new();
    io::write_table(&table, &mut out)?;
    manifest.output(&a.out, &out)?;
    manifest.finish()?;
    Ok(())
}
