//! AE × drug contingency tables.
//!
//! A [`ContingencyTable`] holds report counts `N_ij` for AE row `i` and drug
//! column `j`, together with cached marginals. Tables are built either from
//! report-level records ([`build_from_reports`]) or from per-drug aggregate
//! counts ([`build_from_aggregates`]), and can then be reduced to a set of
//! AEs of interest with [`filter_aes_by_keywords`]. The optional reference
//! row (`other AEs`) and reference column (`other drugs`) carry the
//! background mass used to estimate expected counts.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Label of the collapsed reference AE row.
pub const OTHER_AES: &str = "other AEs";
/// Label of the collapsed reference drug column.
pub const OTHER_DRUGS: &str = "other drugs";

/// One (report, drug, AE) occurrence from a raw report file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub report_id: String,
    pub drug: String,
    pub ae: String,
    /// Whether the drug was the primary suspect on this report, when the
    /// source carries that information.
    #[serde(default)]
    pub primary_suspect: Option<bool>,
}

impl ReportRecord {
    pub fn new(report_id: impl Into<String>, drug: impl Into<String>, ae: impl Into<String>) -> Self {
        Self {
            report_id: report_id.into(),
            drug: drug.into(),
            ae: ae.into(),
            primary_suspect: None,
        }
    }
}

/// Aggregated number of reports for one (AE, drug) pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregateRecord {
    pub ae: String,
    pub drug: String,
    pub count: u64,
}

impl AggregateRecord {
    pub fn new(ae: impl Into<String>, drug: impl Into<String>, count: u64) -> Self {
        Self {
            ae: ae.into(),
            drug: drug.into(),
            count,
        }
    }
}

/// I × J table of report counts with cached marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct ContingencyTable {
    ae_labels: Vec<String>,
    drug_labels: Vec<String>,
    counts: Grid<u64>,
    reference_row: Option<usize>,
    reference_col: Option<usize>,
    row_totals: Vec<u64>,
    col_totals: Vec<u64>,
    total: u64,
    warnings: Vec<String>,
}

impl ContingencyTable {
    /// Build a table from labels and a row-major list of rows.
    pub fn new(ae_labels: Vec<String>, drug_labels: Vec<String>, rows: Vec<Vec<u64>>) -> Result<Self> {
        if rows.len() != ae_labels.len() {
            return Err(Error::InvalidTable(format!(
                "{} AE labels but {} rows",
                ae_labels.len(),
                rows.len()
            )));
        }
        let cols = drug_labels.len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != cols {
                return Err(Error::InvalidTable(format!(
                    "row {i} has {} cells, expected {cols}",
                    row.len()
                )));
            }
            data.extend(row);
        }
        Self::from_grid(ae_labels, drug_labels, Grid::from_vec(data.len() / cols.max(1), cols, data))
    }

    /// Build a table from labels and an existing count grid.
    pub fn from_grid(ae_labels: Vec<String>, drug_labels: Vec<String>, counts: Grid<u64>) -> Result<Self> {
        if ae_labels.is_empty() || drug_labels.is_empty() {
            return Err(Error::InvalidTable("a table needs at least one row and one column".into()));
        }
        if counts.shape() != (ae_labels.len(), drug_labels.len()) {
            return Err(Error::InvalidTable(format!(
                "count grid is {:?} but labels describe {}x{}",
                counts.shape(),
                ae_labels.len(),
                drug_labels.len()
            )));
        }
        check_unique(&ae_labels, "AE")?;
        check_unique(&drug_labels, "drug")?;

        let mut row_totals = vec![0u64; ae_labels.len()];
        let mut col_totals = vec![0u64; drug_labels.len()];
        let overflow = || Error::InvalidTable("counts overflow a 64-bit total".into());
        for (i, j, &n) in counts.indexed() {
            row_totals[i] = row_totals[i].checked_add(n).ok_or_else(overflow)?;
            col_totals[j] = col_totals[j].checked_add(n).ok_or_else(overflow)?;
        }
        let total = row_totals.iter().try_fold(0u64, |acc, &r| acc.checked_add(r)).ok_or_else(overflow)?;
        Ok(Self {
            ae_labels,
            drug_labels,
            counts,
            reference_row: None,
            reference_col: None,
            row_totals,
            col_totals,
            total,
            warnings: Vec::new(),
        })
    }

    pub fn with_reference_row(mut self, index: Option<usize>) -> Result<Self> {
        if let Some(i) = index {
            if i >= self.n_rows() {
                return Err(Error::IndexOutOfRange(format!("reference row {i}")));
            }
        }
        self.reference_row = index;
        Ok(self)
    }

    pub fn with_reference_col(mut self, index: Option<usize>) -> Result<Self> {
        if let Some(j) = index {
            if j >= self.n_cols() {
                return Err(Error::IndexOutOfRange(format!("reference column {j}")));
            }
        }
        self.reference_col = index;
        Ok(self)
    }

    /// Mark rows/columns labelled `other AEs` / `other drugs` as references.
    pub fn detect_references(self) -> Self {
        let row = self.ae_labels.iter().position(|l| l == OTHER_AES);
        let col = self.drug_labels.iter().position(|l| l == OTHER_DRUGS);
        Self {
            reference_row: row,
            reference_col: col,
            ..self
        }
    }

    pub fn n_rows(&self) -> usize {
        self.ae_labels.len()
    }

    pub fn n_cols(&self) -> usize {
        self.drug_labels.len()
    }

    pub fn ae_labels(&self) -> &[String] {
        &self.ae_labels
    }

    pub fn drug_labels(&self) -> &[String] {
        &self.drug_labels
    }

    pub fn counts(&self) -> &Grid<u64> {
        &self.counts
    }

    pub fn count(&self, i: usize, j: usize) -> u64 {
        *self.counts.get(i, j)
    }

    pub fn row_total(&self, i: usize) -> u64 {
        self.row_totals[i]
    }

    pub fn col_total(&self, j: usize) -> u64 {
        self.col_totals[j]
    }

    pub fn row_totals(&self) -> &[u64] {
        &self.row_totals
    }

    pub fn col_totals(&self) -> &[u64] {
        &self.col_totals
    }

    /// Grand total `N_••`.
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn reference_row(&self) -> Option<usize> {
        self.reference_row
    }

    pub fn reference_col(&self) -> Option<usize> {
        self.reference_col
    }

    /// Non-fatal notes collected while the table was built.
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn ae_index(&self, label: &str) -> Option<usize> {
        self.ae_labels.iter().position(|l| l == label)
    }

    pub fn drug_index(&self, label: &str) -> Option<usize> {
        self.drug_labels.iter().position(|l| l == label)
    }

    /// Column indices other than the reference column.
    pub fn drugs_of_interest(&self) -> Vec<usize> {
        (0..self.n_cols()).filter(|&j| Some(j) != self.reference_col).collect()
    }

    /// Transposed table: drugs become rows and AEs become columns.
    pub fn transpose(&self) -> Self {
        let counts = Grid::from_fn(self.n_cols(), self.n_rows(), |j, i| self.count(i, j));
        Self {
            ae_labels: self.drug_labels.clone(),
            drug_labels: self.ae_labels.clone(),
            counts,
            reference_row: self.reference_col,
            reference_col: self.reference_row,
            row_totals: self.col_totals.clone(),
            col_totals: self.row_totals.clone(),
            total: self.total,
            warnings: self.warnings.clone(),
        }
    }

    fn push_warning(&mut self, w: String) {
        self.warnings.push(w);
    }
}

fn check_unique(labels: &[String], axis: &str) -> Result<()> {
    let mut seen = HashSet::with_capacity(labels.len());
    for l in labels {
        if !seen.insert(l.as_str()) {
            return Err(Error::InvalidTable(format!("duplicate {axis} label {l:?}")));
        }
    }
    Ok(())
}

/// The four cells of the 2 × 2 table for one AE-drug pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Collapsed2x2 {
    /// AE-i with drug-j.
    pub n11: u64,
    /// AE-i with other drugs.
    pub n12: u64,
    /// Other AEs with drug-j.
    pub n21: u64,
    /// Other AEs with other drugs.
    pub n22: u64,
}

impl Collapsed2x2 {
    pub fn total(&self) -> u64 {
        self.n11 + self.n12 + self.n21 + self.n22
    }
}

/// Expected counts `E_ij = N_i• N_•j / N_••` under row-column independence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineMatrix {
    expected: Grid<f64>,
}

impl BaselineMatrix {
    pub fn from_grid(expected: Grid<f64>) -> Self {
        Self { expected }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        *self.expected.get(i, j)
    }

    pub fn grid(&self) -> &Grid<f64> {
        &self.expected
    }

    pub fn n_rows(&self) -> usize {
        self.expected.rows()
    }

    pub fn n_cols(&self) -> usize {
        self.expected.cols()
    }
}

/// Tabulate report-level records into an AE × drug table.
///
/// Columns are the drugs of interest in the given order followed by an
/// `other drugs` column collecting every remaining drug. Rows follow the
/// order in which AEs first appear. Identical `(report_id, drug, ae)`
/// triples count once. When any record carries a primary-suspect flag,
/// records for drugs of interest count only if flagged as primary suspect.
pub fn build_from_reports(records: &[ReportRecord], drugs_of_interest: &[String]) -> Result<ContingencyTable> {
    if records.is_empty() {
        return Err(Error::EmptyInput("no report records".into()));
    }
    if drugs_of_interest.is_empty() {
        return Err(Error::EmptyInput("no drugs of interest".into()));
    }
    check_unique(drugs_of_interest, "drug of interest")?;
    if drugs_of_interest.iter().any(|d| d == OTHER_DRUGS) {
        return Err(Error::InvalidArgument(format!("{OTHER_DRUGS:?} is reserved")));
    }

    let interest: HashMap<&str, usize> = drugs_of_interest
        .iter()
        .enumerate()
        .map(|(j, d)| (d.as_str(), j))
        .collect();
    let reference = drugs_of_interest.len();
    let flagged = records.iter().any(|r| r.primary_suspect.is_some());

    let mut ae_order: Vec<&str> = Vec::new();
    let mut ae_index: HashMap<&str, usize> = HashMap::new();
    let mut seen: HashSet<(&str, &str, &str)> = HashSet::with_capacity(records.len());
    let mut cells: HashMap<(usize, usize), u64> = HashMap::new();
    let mut present = vec![false; drugs_of_interest.len()];

    for (k, r) in records.iter().enumerate() {
        if r.report_id.is_empty() || r.drug.is_empty() || r.ae.is_empty() {
            return Err(Error::InvalidArgument(format!("record {k} has an empty field")));
        }
        let col = interest.get(r.drug.as_str()).copied();
        if let (Some(_), true) = (col, flagged) {
            if r.primary_suspect != Some(true) {
                continue;
            }
        }
        if !seen.insert((r.report_id.as_str(), r.drug.as_str(), r.ae.as_str())) {
            continue;
        }
        let i = *ae_index.entry(r.ae.as_str()).or_insert_with(|| {
            ae_order.push(r.ae.as_str());
            ae_order.len() - 1
        });
        let j = match col {
            Some(j) => {
                present[j] = true;
                j
            }
            None => reference,
        };
        *cells.entry((i, j)).or_default() += 1;
    }

    if ae_order.is_empty() {
        return Err(Error::EmptyInput("no records left after primary-suspect filtering".into()));
    }
    let mut counts = Grid::filled(ae_order.len(), reference + 1, 0u64);
    for ((i, j), n) in cells {
        counts[(i, j)] = n;
    }
    let mut drug_labels = drugs_of_interest.to_vec();
    drug_labels.push(OTHER_DRUGS.to_string());
    let ae_labels = ae_order.into_iter().map(str::to_string).collect();

    let mut table = ContingencyTable::from_grid(ae_labels, drug_labels, counts)?.with_reference_col(Some(reference))?;
    for (j, p) in present.iter().enumerate() {
        if !p {
            table.push_warning(format!(
                "drug of interest {:?} does not occur in the records; its column is all zero",
                drugs_of_interest[j]
            ));
        }
    }
    Ok(table)
}

/// Tabulate per-drug aggregate counts into an AE × drug table.
///
/// Columns are `drugs_of_interest` followed by one `other drugs` column equal
/// to the sum over `reference_drugs`. An empty reference list means every
/// drug not of interest. Rows are the union of AE labels in order of first
/// appearance; missing pairs are zero. Repeated `(ae, drug)` entries are
/// summed and reported as warnings.
pub fn build_from_aggregates(
    aggs: &[AggregateRecord],
    drugs_of_interest: &[String],
    reference_drugs: &[String],
) -> Result<ContingencyTable> {
    if aggs.is_empty() {
        return Err(Error::EmptyInput("no aggregate records".into()));
    }
    if drugs_of_interest.is_empty() {
        return Err(Error::EmptyInput("no drugs of interest".into()));
    }
    check_unique(drugs_of_interest, "drug of interest")?;
    let interest: HashMap<&str, usize> = drugs_of_interest
        .iter()
        .enumerate()
        .map(|(j, d)| (d.as_str(), j))
        .collect();
    let reference: HashSet<&str> = reference_drugs.iter().map(String::as_str).collect();
    let mut overlap: Vec<String> = drugs_of_interest
        .iter()
        .filter(|d| reference.contains(d.as_str()))
        .cloned()
        .collect();
    if !overlap.is_empty() {
        overlap.dedup();
        return Err(Error::DisjointnessViolation(overlap));
    }
    let ref_col = drugs_of_interest.len();

    let mut warnings = Vec::new();
    let mut ae_order: Vec<&str> = Vec::new();
    let mut ae_index: HashMap<&str, usize> = HashMap::new();
    let mut pair_seen: HashSet<(&str, &str)> = HashSet::new();
    let mut cells: HashMap<(usize, usize), u64> = HashMap::new();
    let mut present = vec![false; drugs_of_interest.len()];
    let mut ignored = 0usize;

    for a in aggs {
        if a.ae.is_empty() || a.drug.is_empty() {
            return Err(Error::InvalidArgument("aggregate record with an empty label".into()));
        }
        let j = match interest.get(a.drug.as_str()) {
            Some(&j) => {
                present[j] = true;
                j
            }
            None if reference.is_empty() || reference.contains(a.drug.as_str()) => ref_col,
            None => {
                ignored += 1;
                continue;
            }
        };
        if !pair_seen.insert((a.ae.as_str(), a.drug.as_str())) {
            warnings.push(format!("duplicate aggregate entry ({:?}, {:?}) summed", a.ae, a.drug));
        }
        let i = *ae_index.entry(a.ae.as_str()).or_insert_with(|| {
            ae_order.push(a.ae.as_str());
            ae_order.len() - 1
        });
        *cells.entry((i, j)).or_default() += a.count;
    }
    if ae_order.is_empty() {
        return Err(Error::EmptyInput("no aggregate records for the selected drugs".into()));
    }
    if ignored > 0 {
        warnings.push(format!("{ignored} aggregate records for unselected drugs ignored"));
    }
    for (j, p) in present.iter().enumerate() {
        if !p {
            warnings.push(format!(
                "drug of interest {:?} does not occur in the aggregates; its column is all zero",
                drugs_of_interest[j]
            ));
        }
    }

    let mut counts = Grid::filled(ae_order.len(), ref_col + 1, 0u64);
    for ((i, j), n) in cells {
        counts[(i, j)] = n;
    }
    let mut drug_labels = drugs_of_interest.to_vec();
    drug_labels.push(OTHER_DRUGS.to_string());
    let ae_labels = ae_order.into_iter().map(str::to_string).collect();
    let mut table = ContingencyTable::from_grid(ae_labels, drug_labels, counts)?.with_reference_col(Some(ref_col))?;
    for w in warnings {
        table.push_warning(w);
    }
    Ok(table)
}

/// Keep AE rows whose label contains any keyword (case-insensitive) and
/// collapse every other row, including an existing reference row, into a
/// single trailing `other AEs` row.
pub fn filter_aes_by_keywords(table: &ContingencyTable, keywords: &[String]) -> Result<ContingencyTable> {
    let keys: Vec<String> = keywords
        .iter()
        .map(|k| k.trim().to_lowercase())
        .filter(|k| !k.is_empty())
        .collect();
    if keys.is_empty() {
        return Err(Error::EmptyInput("no keywords".into()));
    }

    let keep: Vec<usize> = (0..table.n_rows())
        .filter(|&i| Some(i) != table.reference_row())
        .filter(|&i| {
            let label = table.ae_labels()[i].to_lowercase();
            keys.iter().any(|k| label.contains(k.as_str()))
        })
        .collect();
    if keep.is_empty() {
        return Err(Error::NoMatchingRows);
    }

    let cols = table.n_cols();
    let kept: HashSet<usize> = keep.iter().copied().collect();
    let mut other = vec![0u64; cols];
    for i in (0..table.n_rows()).filter(|i| !kept.contains(i)) {
        for (j, o) in other.iter_mut().enumerate() {
            *o += table.count(i, j);
        }
    }
    let mut ae_labels: Vec<String> = keep.iter().map(|&i| table.ae_labels()[i].clone()).collect();
    if ae_labels.iter().any(|l| l == OTHER_AES) {
        return Err(Error::InvalidTable(format!("{OTHER_AES:?} is reserved for the reference row")));
    }
    ae_labels.push(OTHER_AES.to_string());
    let mut rows: Vec<Vec<u64>> = keep.iter().map(|&i| table.counts().row(i).to_vec()).collect();
    rows.push(other);

    let ref_row = rows.len() - 1;
    let mut out = ContingencyTable::new(ae_labels, table.drug_labels().to_vec(), rows)?
        .with_reference_row(Some(ref_row))?
        .with_reference_col(table.reference_col())?;
    for w in table.warnings() {
        out.push_warning(w.clone());
    }
    Ok(out)
}

/// Collapse the table around cell `(ae, drug)`.
pub fn collapse_2x2(table: &ContingencyTable, ae: usize, drug: usize) -> Result<Collapsed2x2> {
    if ae >= table.n_rows() || drug >= table.n_cols() {
        return Err(Error::IndexOutOfRange(format!(
            "cell ({ae}, {drug}) in a {}x{} table",
            table.n_rows(),
            table.n_cols()
        )));
    }
    let n11 = table.count(ae, drug);
    let ni = table.row_total(ae);
    let nj = table.col_total(drug);
    Ok(Collapsed2x2 {
        n11,
        n12: ni - n11,
        n21: nj - n11,
        n22: table.total() + n11 - ni - nj,
    })
}

/// Expected counts under independence of AE and drug.
pub fn expected_baseline(table: &ContingencyTable) -> Result<BaselineMatrix> {
    if table.total() == 0 {
        return Err(Error::DegenerateTable("grand total is zero".into()));
    }
    let total = table.total() as f64;
    let expected = Grid::from_fn(table.n_rows(), table.n_cols(), |i, j| {
        table.row_total(i) as f64 * table.col_total(j) as f64 / total
    });
    Ok(BaselineMatrix { expected })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    fn table(rows: Vec<Vec<u64>>) -> ContingencyTable {
        let ae = (0..rows.len()).map(|i| format!("AE{i}")).collect();
        let drugs = (0..rows[0].len()).map(|j| format!("D{j}")).collect();
        ContingencyTable::new(ae, drugs, rows).unwrap()
    }

    #[test]
    fn reports_small_example() {
        let recs = vec![
            ReportRecord::new("r1", "A", "Headache"),
            ReportRecord::new("r2", "A", "Nausea"),
            ReportRecord::new("r3", "B", "Headache"),
        ];
        let t = build_from_reports(&recs, &s(&["A"])).unwrap();
        assert_eq!(t.drug_labels(), &s(&["A", OTHER_DRUGS])[..]);
        assert_eq!(t.counts().as_slice(), &[1, 1, 1, 0]);
        assert_eq!(t.reference_col(), Some(1));
    }

    #[test]
    fn duplicate_triple_counts_once() {
        let recs = vec![
            ReportRecord::new("r1", "A", "Headache"),
            ReportRecord::new("r1", "A", "Headache"),
        ];
        let t = build_from_reports(&recs, &s(&["A"])).unwrap();
        assert_eq!(t.count(0, 0), 1);
    }

    #[test]
    fn empty_reports_rejected() {
        assert!(matches!(build_from_reports(&[], &s(&["A"])), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn absent_interest_drug_warns() {
        let recs = vec![ReportRecord::new("r1", "A", "Headache")];
        let t = build_from_reports(&recs, &s(&["A", "Z"])).unwrap();
        assert_eq!(t.n_cols(), 3);
        assert_eq!(t.col_total(1), 0);
        assert_eq!(t.warnings().len(), 1);
    }

    #[test]
    fn primary_suspect_flag_filters_interest_drugs() {
        let mut a = ReportRecord::new("r1", "A", "Headache");
        a.primary_suspect = Some(false);
        let mut b = ReportRecord::new("r2", "A", "Headache");
        b.primary_suspect = Some(true);
        let c = ReportRecord::new("r3", "B", "Headache");
        let t = build_from_reports(&[a, b, c], &s(&["A"])).unwrap();
        assert_eq!(t.counts().as_slice(), &[1, 1]);
    }

    #[test]
    fn aggregates_sum_reference_drugs() {
        let aggs = vec![
            AggregateRecord::new("AE1", "X", 2),
            AggregateRecord::new("AE1", "Y", 3),
            AggregateRecord::new("AE1", "Z", 5),
        ];
        let t = build_from_aggregates(&aggs, &s(&["X"]), &s(&["Y", "Z"])).unwrap();
        assert_eq!(t.counts().as_slice(), &[2, 8]);
    }

    #[test]
    fn aggregates_overlap_rejected() {
        let aggs = vec![AggregateRecord::new("AE1", "X", 2)];
        let err = build_from_aggregates(&aggs, &s(&["X"]), &s(&["X", "Y"])).unwrap_err();
        assert!(matches!(err, Error::DisjointnessViolation(v) if v == s(&["X"])));
    }

    #[test]
    fn aggregates_duplicates_summed_with_warning() {
        let aggs = vec![
            AggregateRecord::new("AE1", "X", 2),
            AggregateRecord::new("AE1", "X", 4),
            AggregateRecord::new("AE2", "Y", 1),
        ];
        let t = build_from_aggregates(&aggs, &s(&["X"]), &s(&["Y"])).unwrap();
        assert_eq!(t.count(0, 0), 6);
        assert_eq!(t.count(1, 0), 0);
        assert!(t.warnings().iter().any(|w| w.contains("duplicate")));
    }

    #[test]
    fn keyword_filter_collapses_rest() {
        let t = ContingencyTable::new(s(&["Anxiety", "Rash"]), s(&["A", "B"]), vec![vec![3, 4], vec![5, 6]]).unwrap();
        let f = filter_aes_by_keywords(&t, &s(&["ANX"])).unwrap();
        assert_eq!(f.ae_labels(), &s(&["Anxiety", OTHER_AES])[..]);
        assert_eq!(f.counts().row(1), &[5, 6]);
        assert_eq!(f.reference_row(), Some(1));
        assert_eq!(f.total(), t.total());
    }

    #[test]
    fn keyword_filter_all_match_keeps_zero_row() {
        let t = ContingencyTable::new(s(&["Anxiety", "Panic"]), s(&["A"]), vec![vec![3], vec![5]]).unwrap();
        let f = filter_aes_by_keywords(&t, &s(&["anx", "pan"])).unwrap();
        assert_eq!(f.n_rows(), 3);
        assert_eq!(f.counts().row(2), &[0]);
    }

    #[test]
    fn keyword_filter_no_match() {
        let t = ContingencyTable::new(s(&["Rash"]), s(&["A"]), vec![vec![3]]).unwrap();
        assert!(matches!(filter_aes_by_keywords(&t, &s(&["anx"])), Err(Error::NoMatchingRows)));
    }

    #[test]
    fn collapse_examples() {
        let t = table(vec![vec![1, 2], vec![3, 4]]);
        let c = collapse_2x2(&t, 0, 0).unwrap();
        assert_eq!((c.n11, c.n12, c.n21, c.n22), (1, 2, 3, 4));
        let t = table(vec![vec![5, 0], vec![0, 5]]);
        let c = collapse_2x2(&t, 0, 1).unwrap();
        assert_eq!((c.n11, c.n12, c.n21, c.n22), (0, 5, 5, 0));
        assert!(collapse_2x2(&t, 2, 0).is_err());
    }

    #[test]
    fn baseline_all_ones() {
        let t = table(vec![vec![1, 1], vec![1, 1]]);
        let e = expected_baseline(&t).unwrap();
        assert!(e.grid().as_slice().iter().all(|&x| x == 1.0));
    }

    #[test]
    fn baseline_rejects_empty_table() {
        let t = table(vec![vec![0, 0]]);
        assert!(matches!(expected_baseline(&t), Err(Error::DegenerateTable(_))));
    }

    #[test]
    fn duplicate_labels_rejected() {
        let r = ContingencyTable::new(s(&["A", "A"]), s(&["X"]), vec![vec![1], vec![2]]);
        assert!(r.is_err());
    }

    #[test]
    fn transpose_swaps_marginals() {
        let t = table(vec![vec![1, 2, 3], vec![4, 5, 6]]);
        let tt = t.transpose();
        assert_eq!(tt.row_totals(), t.col_totals());
        assert_eq!(tt.count(2, 1), 6);
    }
}
