//! `pvkit simulate`: score methods on synthetic tables with known truth.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde::Serialize;

use pvkit::simulate::{gen_null_conditional, gen_poisson_table, score_masked, MetricReport, SimScenario};
use pvkit::{ContingencyTable, Grid};

use crate::analyze::{run_method, Method, MethodArgs};
use crate::manifest::ManifestBuilder;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Generator {
    /// Independent (zero-inflated) Poisson cells with planted signals.
    Poisson,
    /// Multinomial columns under the null; planted signals are ignored.
    Null,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario JSON: dimensions, marginals, planted signals, seed.
    #[arg(long)]
    pub scenario: PathBuf,
    /// Number of tables to generate.
    #[arg(long, default_value_t = 100)]
    pub tables: usize,
    /// Methods to score, comma separated.
    #[arg(long, value_enum, value_delimiter = ',', required = true)]
    pub methods: Vec<Method>,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = Generator::Poisson)]
    pub generator: Generator,
    /// Also write every generated table under `tables/`.
    #[arg(long)]
    pub write_tables: bool,
    #[command(flatten)]
    pub settings: MethodArgs,
}

#[derive(Serialize)]
struct MethodMetrics {
    rule: String,
    /// Confusion counts pooled over all tables.
    pooled: MetricReport,
    /// Mean of the per-table rates.
    mean_fdr: f64,
    mean_sensitivity: f64,
    mean_type_i_error: f64,
    per_table: Vec<MetricReport>,
}

#[derive(Serialize)]
struct Metrics {
    tables: usize,
    generator: Generator,
    scenario_seed: u64,
    methods: BTreeMap<String, MethodMetrics>,
}

/// Cells that count towards the metrics: everything outside the reference
/// row and column.
fn score_mask(table: &ContingencyTable) -> Grid<bool> {
    Grid::from_fn(table.n_rows(), table.n_cols(), |i, j| {
        Some(i) != table.reference_row() && Some(j) != table.reference_col()
    })
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<(), CliError> {
    if a.tables == 0 {
        return Err(CliError::Input("--tables must be at least 1".into()));
    }
    if a.methods.contains(&Method::ExtLrt) {
        return Err(CliError::Usage("ext-lrt makes no per-cell decisions and cannot be scored".into()));
    }
    let mut rules = BTreeMap::new();
    for &m in &a.methods {
        rules.insert(m.name().to_string(), a.settings.rule_for(m)?.to_string());
    }
    let bytes = fs::read(&a.scenario).map_err(|e| CliError::io(&a.scenario, e))?;
    let text = String::from_utf8(bytes.clone()).map_err(|_| CliError::Input(format!("{} is not UTF-8", a.scenario.display())))?;
    let scenario = SimScenario::from_json(&text).map_err(|e| CliError::Input(format!("{}: {e}", a.scenario.display())))?;

    let params = serde_json::json!({
        "tables": a.tables,
        "methods": a.methods,
        "generator": a.generator,
        "rules": rules,
        "settings": a.settings,
    });
    let mut manifest = ManifestBuilder::new(a.out_dir.join("manifest.json"), "simulate", None, params, Some(scenario.seed));
    manifest.input(&a.scenario, &bytes);
    let truth = scenario.truth();

    let mut per_method: BTreeMap<String, Vec<MetricReport>> = BTreeMap::new();
    for t in 0..a.tables {
        let table = match a.generator {
            Generator::Poisson => gen_poisson_table(&scenario, t as u64)?,
            Generator::Null => gen_null_conditional(&scenario, t as u64)?,
        };
        if a.write_tables {
            let mut out = Vec::new();
            pvkit::io::write_table(&table, &mut out)?;
            manifest.output(&a.out_dir.join("tables").join(format!("table_{t:04}.csv")), &out)?;
        }
        let truth = match a.generator {
            Generator::Poisson => truth.clone(),
            Generator::Null => truth.map(|_| false),
        };
        let mask = score_mask(&table);
        let mut settings = a.settings.clone();
        settings.seed = a.settings.seed.wrapping_add(t as u64);
        for &m in &a.methods {
            let outcome = run_method(&table, m, &settings, &mut |w| eprintln!("warning: table {t}, {m}: {w}"))?;
            let decisions = outcome.decisions().expect("scored methods make cell decisions");
            per_method.entry(m.name().to_string()).or_default().push(score_masked(&decisions, &truth, Some(&mask))?);
        }
    }

    let n = a.tables as f64;
    let methods = per_method
        .into_iter()
        .map(|(name, reports)| {
            let pooled = reports.iter().fold(MetricReport::default(), |acc, r| acc.merge(r));
            let mean = |f: fn(&MetricReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
            let m = MethodMetrics {
                rule: rules[&name].clone(),
                pooled,
                mean_fdr: mean(|r| r.fdr),
                mean_sensitivity: mean(|r| r.sensitivity),
                mean_type_i_error: mean(|r| r.type_i_error),
                per_table: reports,
            };
            (name, m)
        })
        .collect();
    let metrics = Metrics {
        tables: a.tables,
        generator: a.generator,
        scenario_seed: scenario.seed,
        methods,
    };
    let mut json = serde_json::to_vec_pretty(&metrics).expect("serialisable");
    json.push(b'\n');
    manifest.output(&a.out_dir.join("metrics.json"), &json)?;
    manifest.finish()?;
    Ok(())
}
