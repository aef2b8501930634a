//! `pvkit analyze`: run one method on a table and write its outputs.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, ValueEnum};
use serde::Serialize;

use pvkit::bcpnn::{self, IcResult};
use pvkit::disprop::{self, DisproportionalityResult, Measure, ThresholdRule};
use pvkit::ebayes::{
    self, eb_signal_table, fit_efron, fit_general_gamma, fit_gps, fit_km, select_efron, select_grid, EbRule, EfronOptions,
    GeneralGammaOptions, SignalTable, C0_GRID, DEFAULT_EPSILON, P_GRID,
};
use pvkit::lrt::{self, LrtAnalysis, McOptions, NullModel, TestResult};
use pvkit::table::expected_baseline;
use pvkit::{BaselineMatrix, ContingencyTable, Grid};

use crate::manifest::ManifestBuilder;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Prr,
    Ror,
    Bcpnn,
    Lrt,
    ExtLrt,
    PseudoLrt,
    Gps,
    GeneralGamma,
    Km,
    Efron,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Self::Prr => "prr",
            Self::Ror => "ror",
            Self::Bcpnn => "bcpnn",
            Self::Lrt => "lrt",
            Self::ExtLrt => "ext-lrt",
            Self::PseudoLrt => "pseudo-lrt",
            Self::Gps => "gps",
            Self::GeneralGamma => "general-gamma",
            Self::Km => "km",
            Self::Efron => "efron",
        }
    }

    fn needs_baseline(self) -> bool {
        matches!(self, Self::PseudoLrt | Self::Gps | Self::GeneralGamma | Self::Km | Self::Efron)
    }

    fn default_rule(self) -> Rule {
        match self {
            Self::Prr | Self::Ror => Rule::CiLowAbove(1.0),
            Self::Bcpnn => Rule::Ic025Above(0.0),
            Self::Lrt | Self::ExtLrt | Self::PseudoLrt => Rule::PBelow(0.05),
            Self::Gps => Rule::Eb05Above(2.0),
            Self::GeneralGamma | Self::Km | Self::Efron => Rule::ProbAbove(0.95),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Decision rule, written `prob>0.95`, `eb05>2`, `p<0.05`, `ci_low>1`,
/// `estimate>2` or `ic025>0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Rule {
    ProbAbove(f64),
    Eb05Above(f64),
    PBelow(f64),
    CiLowAbove(f64),
    EstimateAbove(f64),
    Ic025Above(f64),
}

impl FromStr for Rule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim().to_ascii_lowercase();
        let (lhs, op, rhs) = match (s.find('>'), s.find('<')) {
            (Some(k), None) => (&s[..k], '>', &s[k + 1..]),
            (None, Some(k)) => (&s[..k], '<', &s[k + 1..]),
            _ => return Err(format!("rule {s:?} must look like `prob>0.95` or `p<0.05`")),
        };
        let x: f64 = rhs.trim().parse().map_err(|_| format!("rule threshold {rhs:?} is not a number"))?;
        if !x.is_finite() {
            return Err(format!("rule threshold {x} is not finite"));
        }
        match (lhs.trim(), op) {
            ("prob", '>') => Ok(Self::ProbAbove(x)),
            ("eb05" | "q05", '>') => Ok(Self::Eb05Above(x)),
            ("p" | "p_value", '<') => Ok(Self::PBelow(x)),
            ("ci_low" | "ci", '>') => Ok(Self::CiLowAbove(x)),
            ("estimate", '>') => Ok(Self::EstimateAbove(x)),
            ("ic025", '>') => Ok(Self::Ic025Above(x)),
            (m, o) => Err(format!("unknown rule `{m}{o}`")),
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::ProbAbove(x) => write!(f, "prob>{x}"),
            Self::Eb05Above(x) => write!(f, "eb05>{x}"),
            Self::PBelow(x) => write!(f, "p<{x}"),
            Self::CiLowAbove(x) => write!(f, "ci_low>{x}"),
            Self::EstimateAbove(x) => write!(f, "estimate>{x}"),
            Self::Ic025Above(x) => write!(f, "ic025>{x}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Poisson,
    Zip,
}

/// Method settings shared by `analyze` and `simulate`.
#[derive(Debug, Clone, Args, Serialize)]
pub struct MethodArgs {
    /// Monte Carlo replicates for the LRT family.
    #[arg(long, default_value_t = 999)]
    pub reps: usize,
    /// Seed for Monte Carlo replicates.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Null model of the pseudo-LRT.
    #[arg(long, value_enum, default_value_t = Model::Poisson)]
    pub model: Model,
    /// Signal margin: `prob` is `P(λ > 1 + ε | N)`.
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pub epsilon: f64,
    /// Decision rule; defaults depend on the method.
    #[arg(long)]
    pub rule: Option<String>,
    /// One-sided original LRT (always one-sided for ext-lrt).
    #[arg(long)]
    pub one_sided: bool,
    /// Drug columns to test (labels, comma separated); defaults to every
    /// non-reference column.
    #[arg(long, value_delimiter = ',')]
    pub drugs: Vec<String>,
    /// Components of the general-gamma mixture.
    #[arg(long, default_value_t = 100)]
    pub components: usize,
    /// Dirichlet parameter of the general-gamma weights.
    #[arg(long, default_value_t = 0.5)]
    pub dirichlet_alpha: f64,
    /// Support size for KM and Efron.
    #[arg(long, default_value_t = 120)]
    pub grid_size: usize,
    /// Efron penalty; with --spline-df, skips the AIC search.
    #[arg(long)]
    pub c0: Option<f64>,
    /// Efron spline degrees of freedom.
    #[arg(long)]
    pub spline_df: Option<usize>,
}

impl MethodArgs {
    pub fn rule_for(&self, method: Method) -> Result<Rule, CliError> {
        let rule = match &self.rule {
            None => return Ok(method.default_rule()),
            Some(s) => s.parse::<Rule>().map_err(CliError::Usage)?,
        };
        let ok = matches!(
            (method, rule),
            (Method::Prr | Method::Ror, Rule::CiLowAbove(_) | Rule::EstimateAbove(_))
                | (Method::Bcpnn, Rule::Ic025Above(_))
                | (Method::Lrt | Method::ExtLrt | Method::PseudoLrt, Rule::PBelow(_))
                | (Method::Gps | Method::GeneralGamma | Method::Km | Method::Efron, Rule::ProbAbove(_) | Rule::Eb05Above(_))
        );
        if !ok {
            return Err(CliError::Usage(format!("rule `{rule}` does not apply to method {method}")));
        }
        if let Rule::PBelow(a) = rule {
            if !(a > 0.0 && a < 1.0) {
                return Err(CliError::Usage(format!("significance level {a} outside (0, 1)")));
            }
        }
        Ok(rule)
    }

    fn mc(&self, alpha: f64, one_sided: bool) -> McOptions {
        McOptions {
            reps: self.reps,
            seed: self.seed,
            one_sided,
            alpha,
        }
    }
}

/// Result of one method on one table.
pub enum Outcome {
    Disprop {
        measure: Measure,
        results: Grid<DisproportionalityResult>,
        flags: Grid<bool>,
    },
    Bcpnn {
        results: Grid<IcResult>,
        flags: Grid<bool>,
    },
    Lrt {
        analysis: LrtAnalysis,
        model: &'static str,
        alpha: f64,
        baseline: Option<BaselineMatrix>,
    },
    Ext {
        drugs: Vec<usize>,
        result: TestResult,
    },
    Eb {
        baseline: BaselineMatrix,
        prior_json: serde_json::Value,
        signals: SignalTable,
    },
}

impl Outcome {
    /// Per-cell decisions, where the method makes them.
    pub fn decisions(&self) -> Option<Grid<bool>> {
        match self {
            Self::Disprop { flags, .. } | Self::Bcpnn { flags, .. } => Some(flags.clone()),
            Self::Lrt { analysis, alpha, .. } => Some(analysis.cell_pvalues.map(|p| p.is_some_and(|p| p < *alpha))),
            Self::Ext { .. } => None,
            Self::Eb { signals, .. } => Some(signals.decisions.clone()),
        }
    }
}

fn drug_columns(table: &ContingencyTable, labels: &[String]) -> Result<Vec<usize>, CliError> {
    if labels.is_empty() {
        let d = table.drugs_of_interest();
        if d.is_empty() {
            return Err(CliError::Constraint("table has no drug columns besides the reference".into()));
        }
        return Ok(d);
    }
    labels
        .iter()
        .map(|l| table.drug_index(l).ok_or_else(|| CliError::Usage(format!("no drug column labelled {l:?}"))))
        .collect()
}

/// Run `method` on `table`. Warnings go to `warn`.
pub fn run_method(table: &ContingencyTable, method: Method, args: &MethodArgs, warn: &mut dyn FnMut(String)) -> Result<Outcome, CliError> {
    let rule = args.rule_for(method)?;
    if method.needs_baseline() && table.reference_col().is_none() {
        warn(format!(
            "table has no `{}` column; expected counts come from the listed drugs only",
            pvkit::table::OTHER_DRUGS
        ));
    }
    let baseline = || expected_baseline(table).map_err(CliError::from);
    Ok(match method {
        Method::Prr | Method::Ror => {
            let measure = if method == Method::Prr { Measure::Prr } else { Measure::Ror };
            let results = disprop::compute(table, measure);
            let t = match rule {
                Rule::EstimateAbove(x) => ThresholdRule::EstimateAbove(x),
                Rule::CiLowAbove(x) => ThresholdRule::CiLowAbove(x),
                _ => unreachable!("checked by rule_for"),
            };
            let flags = disprop::flag_signals(&results, t);
            Outcome::Disprop { measure, results, flags }
        }
        Method::Bcpnn => {
            let Rule::Ic025Above(x) = rule else { unreachable!("checked by rule_for") };
            let results = bcpnn::ic(table)?;
            let flags = bcpnn::bcpnn_signals(&results, x);
            Outcome::Bcpnn { results, flags }
        }
        Method::Lrt | Method::PseudoLrt | Method::ExtLrt => {
            let Rule::PBelow(alpha) = rule else { unreachable!("checked by rule_for") };
            let drugs = drug_columns(table, &args.drugs)?;
            match method {
                Method::Lrt => Outcome::Lrt {
                    analysis: lrt::lrt_analysis(table, &drugs, &args.mc(alpha, args.one_sided))?,
                    model: if args.one_sided { "multinomial-one-sided" } else { "multinomial" },
                    alpha,
                    baseline: None,
                },
                Method::ExtLrt => Outcome::Ext {
                    result: lrt::ext_mlr(table, &drugs, &args.mc(alpha, true))?,
                    drugs,
                },
                _ => {
                    let e = baseline()?;
                    let model = match args.model {
                        Model::Poisson => NullModel::Poisson,
                        Model::Zip => NullModel::Zip,
                    };
                    let analysis = lrt::pseudo_lrt(table, &e, &drugs, model, &args.mc(alpha, true))?;
                    if let Some(note) = analysis.zip_fit.as_ref().and_then(|f| f.note.clone()) {
                        warn(note);
                    }
                    Outcome::Lrt {
                        analysis,
                        model: model.name(),
                        alpha,
                        baseline: Some(e),
                    }
                }
            }
        }
        Method::Gps | Method::GeneralGamma | Method::Km | Method::Efron => {
            let e = baseline()?;
            let eb_rule = match rule {
                Rule::ProbAbove(c) => EbRule::ProbAbove(c),
                Rule::Eb05Above(t) => EbRule::Eb05Above(t),
                _ => unreachable!("checked by rule_for"),
            };
            let (prior, prior_json) = match method {
                Method::Gps => {
                    let f = fit_gps(table, &e)?;
                    (f.prior.clone(), to_value(&f))
                }
                Method::GeneralGamma => {
                    let opts = GeneralGammaOptions {
                        k: args.components,
                        dirichlet_alpha: args.dirichlet_alpha,
                        ..Default::default()
                    };
                    let f = fit_general_gamma(table, &e, &opts)?;
                    (f.prior.clone(), to_value(&f))
                }
                Method::Km => {
                    let support = select_grid(table, &e, args.grid_size)?;
                    let f = fit_km(table, &e, &support)?;
                    (f.prior.clone(), to_value(&f))
                }
                _ => {
                    let support = select_grid(table, &e, args.grid_size)?;
                    match (args.c0, args.spline_df) {
                        (Some(c0), Some(p)) => {
                            let f = fit_efron(table, &e, &support, &EfronOptions { c0, p, ..Default::default() })?;
                            (f.prior.to_mixture(), to_value(&f))
                        }
                        (None, None) => {
                            let cells = ebayes::cells_from_table(table, &e)?;
                            let s = select_efron(&cells, &support, &C0_GRID, &P_GRID)?;
                            (s.best.prior.to_mixture(), to_value(&s))
                        }
                        _ => return Err(CliError::Usage("--c0 and --spline-df go together".into())),
                    }
                }
            };
            let signals = eb_signal_table(&prior, table, &e, eb_rule, args.epsilon)?;
            Outcome::Eb {
                baseline: e,
                prior_json,
                signals,
            }
        }
    })
}

fn to_value<T: Serialize>(x: &T) -> serde_json::Value {
    serde_json::to_value(x).expect("fit results serialise")
}

#[derive(Serialize)]
struct HeatmapCell<'a> {
    ae: &'a str,
    drug: &'a str,
    n: u64,
    e: Option<f64>,
    value: Option<f64>,
    signal: bool,
}

#[derive(Serialize)]
struct Heatmap<'a> {
    method: &'a str,
    measure: &'a str,
    cells: Vec<HeatmapCell<'a>>,
}

#[derive(Serialize)]
struct EyeplotCell<'a> {
    ae: &'a str,
    drug: &'a str,
    n: u64,
    e: f64,
    median: f64,
    q05: f64,
    q95: f64,
}

#[derive(Serialize)]
struct Eyeplot<'a> {
    method: &'a str,
    /// Cells whose posterior 5% quantile is below this are left out.
    min_q05: f64,
    cells: Vec<EyeplotCell<'a>>,
}

fn is_reference(table: &ContingencyTable, i: usize, j: usize) -> bool {
    Some(i) == table.reference_row() || Some(j) == table.reference_col()
}

fn json_bytes<T: Serialize>(x: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(x).expect("serialisable");
    v.push(b'\n');
    v
}

/// Serialise `outcome` into `(file name, bytes)` pairs.
pub fn render(table: &ContingencyTable, method: Method, args: &MethodArgs, outcome: &Outcome) -> Result<Vec<(&'static str, Vec<u8>)>, CliError> {
    let mut files = Vec::new();
    let mut results = Vec::new();
    match outcome {
        Outcome::Disprop { measure, results: r, flags } => disprop::write_csv(table, *measure, r, flags, &mut results)?,
        Outcome::Bcpnn { results: r, flags } => bcpnn::write_csv(table, r, flags, &mut results)?,
        Outcome::Ext { drugs, result } => lrt::write_ext_csv(table, drugs, result, &mut results)?,
        Outcome::Lrt {
            analysis,
            model,
            alpha,
            baseline,
        } => {
            lrt::write_csv(table, analysis, model, &mut results)?;
            let mut cells = Vec::new();
            lrt::write_cells_csv(table, analysis, *alpha, &mut cells)?;
            files.push(("cells.csv", cells));
            let heat = Heatmap {
                method: method.name(),
                measure: "p_value",
                cells: analysis
                    .cell_pvalues
                    .indexed()
                    .filter(|&(i, j, p)| p.is_some() && !is_reference(table, i, j))
                    .map(|(i, j, p)| HeatmapCell {
                        ae: &table.ae_labels()[i],
                        drug: &table.drug_labels()[j],
                        n: table.count(i, j),
                        e: baseline.as_ref().map(|e| e.get(i, j)),
                        value: *p,
                        signal: p.is_some_and(|p| p < *alpha),
                    })
                    .collect(),
            };
            files.push(("heatmap.json", json_bytes(&heat)));
        }
        Outcome::Eb {
            baseline,
            prior_json,
            signals,
        } => {
            ebayes::write_csv(table, baseline, signals, method.name(), &mut results)?;
            files.push(("prior.json", json_bytes(prior_json)));
            let measure = match signals.rule {
                EbRule::ProbAbove(_) => "prob_signal",
                EbRule::Eb05Above(_) => "q05",
            };
            let heat = Heatmap {
                method: method.name(),
                measure,
                cells: signals
                    .summaries
                    .indexed()
                    .filter(|&(i, j, _)| !is_reference(table, i, j))
                    .map(|(i, j, s)| HeatmapCell {
                        ae: &table.ae_labels()[i],
                        drug: &table.drug_labels()[j],
                        n: table.count(i, j),
                        e: Some(baseline.get(i, j)),
                        value: Some(match signals.rule {
                            EbRule::ProbAbove(_) => s.prob_signal,
                            EbRule::Eb05Above(_) => s.q05,
                        }),
                        signal: signals.decisions[(i, j)],
                    })
                    .collect(),
            };
            files.push(("heatmap.json", json_bytes(&heat)));
            let min_q05 = 1.0 + args.epsilon;
            let eye = Eyeplot {
                method: method.name(),
                min_q05,
                cells: signals
                    .summaries
                    .indexed()
                    .filter(|&(i, j, s)| !is_reference(table, i, j) && !s.prior_only && s.q05 >= min_q05)
                    .map(|(i, j, s)| EyeplotCell {
                        ae: &table.ae_labels()[i],
                        drug: &table.drug_labels()[j],
                        n: table.count(i, j),
                        e: baseline.get(i, j),
                        median: s.median,
                        q05: s.q05,
                        q95: s.q95,
                    })
                    .collect(),
            };
            files.push(("eyeplot.json", json_bytes(&eye)));
        }
    }
    files.insert(0, ("results.csv", results));
    Ok(files)
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Table CSV (`ae,<drug>,...`).
    #[arg(long)]
    pub table: PathBuf,
    #[arg(long, value_enum)]
    pub method: Method,
    /// Directory for results.csv, manifest.json and plot data.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub settings: MethodArgs,
}

pub fn cmd_analyze(a: &AnalyzeArgs) -> Result<(), CliError> {
    let bytes = fs::read(&a.table).map_err(|e| CliError::io(&a.table, e))?;
    let table = pvkit::io::read_table(bytes.as_slice())?;
    let mut settings = serde_json::to_value(&a.settings).expect("serialisable");
    settings["rule"] = serde_json::Value::String(a.settings.rule_for(a.method)?.to_string());
    let seed = matches!(a.method, Method::Lrt | Method::ExtLrt | Method::PseudoLrt).then_some(a.settings.seed);
    let mut manifest = ManifestBuilder::new(a.out_dir.join("manifest.json"), "analyze", Some(a.method.name().into()), settings, seed);
    manifest.input(&a.table, &bytes);
    let outcome = run_method(&table, a.method, &a.settings, &mut |w| eprintln!("warning: {w}"))?;
    for (name, data) in render(&table, a.method, &a.settings, &outcome)? {
        manifest.output(&a.out_dir.join(name), &data)?;
    }
    manifest.finish()?;
    Ok(())
}

pub fn read_lines(path: &Path) -> Result<(Vec<String>, Vec<u8>), CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    let text = String::from_utf8(bytes.clone()).map_err(|_| CliError::Input(format!("{} is not UTF-8", path.display())))?;
    let lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')).map(str::to_string).collect();
    Ok((lines, bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_parsing() {
        assert_eq!("prob>0.95".parse::<Rule>().unwrap(), Rule::ProbAbove(0.95));
        assert_eq!("EB05>2".parse::<Rule>().unwrap(), Rule::Eb05Above(2.0));
        assert_eq!(" p < 0.05 ".parse::<Rule>().unwrap(), Rule::PBelow(0.05));
        assert!("prob<0.95".parse::<Rule>().is_err());
        assert!("eb05>x".parse::<Rule>().is_err());
        assert!("eb05".parse::<Rule>().is_err());
    }

    #[test]
    fn rule_round_trips_through_display() {
        for r in [Rule::ProbAbove(0.95), Rule::Eb05Above(2.0), Rule::PBelow(0.01), Rule::Ic025Above(0.0)] {
            assert_eq!(r.to_string().parse::<Rule>().unwrap(), r);
        }
    }
}
