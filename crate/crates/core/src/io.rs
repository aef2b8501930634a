//! CSV readers and writers for report files, aggregate files and tables.
//!
//! * Report CSV: `report_id,drug,ae` with an optional `primary_suspect`
//!   column (`true`/`false`/`1`/`0`/`PS`).
//! * Aggregate CSV: `ae,drug,count`.
//! * Table CSV: `ae` followed by one column per drug label. The reference
//!   row and column are labelled `other AEs` / `other drugs`.

use std::io::{Read, Write};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::table::{AggregateRecord, ContingencyTable, ReportRecord};

/// Which kind of long-format input a CSV header describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    Reports,
    Aggregates,
    Table,
}

impl InputFormat {
    pub fn detect(header: &csv::StringRecord) -> Option<Self> {
        let has = |name: &str| header.iter().any(|h| h.trim() == name);
        if has("report_id") && has("drug") && has("ae") {
            Some(Self::Reports)
        } else if has("ae") && has("drug") && has("count") {
            Some(Self::Aggregates)
        } else if header.get(0).map(str::trim) == Some("ae") && header.len() >= 2 {
            Some(Self::Table)
        } else {
            None
        }
    }
}

/// Peek at the header of a CSV document.
pub fn detect_format(data: &[u8]) -> Result<InputFormat> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(data);
    let header = rdr.headers().map_err(csv_error)?.clone();
    InputFormat::detect(&header).ok_or_else(|| Error::Parse {
        line: 1,
        message: format!("unrecognised header {:?}", header.iter().collect::<Vec<_>>()),
    })
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

#[derive(Deserialize)]
struct RawReport {
    report_id: String,
    drug: String,
    ae: String,
    #[serde(default)]
    primary_suspect: Option<String>,
}

fn parse_flag(s: &str) -> Option<Option<bool>> {
    match s.trim().to_ascii_lowercase().as_str() {
        "" => Some(None),
        "true" | "1" | "ps" | "yes" | "y" => Some(Some(true)),
        "false" | "0" | "no" | "n" | "ss" | "c" | "i" => Some(Some(false)),
        _ => None,
    }
}

pub fn read_reports<R: Read>(reader: R) -> Result<Vec<ReportRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for row in rdr.deserialize::<RawReport>() {
        let row = row.map_err(csv_error)?;
        let line = out.len() as u64 + 2;
        if row.report_id.is_empty() || row.drug.is_empty() || row.ae.is_empty() {
            return Err(Error::Parse {
                line,
                message: "empty report_id, drug or ae".into(),
            });
        }
        let primary_suspect = match row.primary_suspect.as_deref() {
            None => None,
            Some(s) => parse_flag(s).ok_or_else(|| Error::Parse {
                line,
                message: format!("unrecognised primary_suspect value {s:?}"),
            })?,
        };
        out.push(ReportRecord {
            report_id: row.report_id,
            drug: row.drug,
            ae: row.ae,
            primary_suspect,
        });
    }
    Ok(out)
}

pub fn read_aggregates<R: Read>(reader: R) -> Result<Vec<AggregateRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for row in rdr.deserialize::<AggregateRecord>() {
        let row = row.map_err(csv_error)?;
        if row.ae.is_empty() || row.drug.is_empty() {
            return Err(Error::Parse {
                line: out.len() as u64 + 2,
                message: "empty ae or drug".into(),
            });
        }
        out.push(row);
    }
    Ok(out)
}

/// Read a wide table CSV. Rows and columns labelled `other AEs` /
/// `other drugs` become the reference row and column.
pub fn read_table<R: Read>(reader: R) -> Result<ContingencyTable> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(csv_error)?.clone();
    if header.get(0) != Some("ae") || header.len() < 2 {
        return Err(Error::Parse {
            line: 1,
            message: "table header must be `ae,<drug>,...`".into(),
        });
    }
    let drug_labels: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut ae_labels = Vec::new();
    let mut data = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != header.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        ae_labels.push(rec[0].to_string());
        for field in rec.iter().skip(1) {
            let n: u64 = field.parse().map_err(|_| Error::Parse {
                line,
                message: format!("count {field:?} is not a nonnegative integer"),
            })?;
            data.push(n);
        }
    }
    if ae_labels.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "table has no rows".into(),
        });
    }
    let grid = Grid::from_vec(ae_labels.len(), drug_labels.len(), data);
    Ok(ContingencyTable::from_grid(ae_labels, drug_labels, grid)?.detect_references())
}

pub fn write_table<W: Write>(table: &ContingencyTable, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["ae".to_string()];
    header.extend(table.drug_labels().iter().cloned());
    w.write_record(&header)?;
    for i in 0..table.n_rows() {
        let mut rec = vec![table.ae_labels()[i].clone()];
        rec.extend(table.counts().row(i).iter().map(u64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Format a float so that parsing it back yields the same bits.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:?}")
    }
}
