//! Dated return panels: CSV loading, validation and date alignment.
//!
//! A panel holds simple monthly returns in decimal form. Missing cells (empty,
//! `NA` or `NaN`) are kept as `NaN` until [`align_panels`] restricts both
//! panels to their common months, after which no missing entries remain.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use log::warn;
use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// A calendar month, ordered chronologically and formatted as `YYYY-MM`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Month {
    year: i32,
    month: u8,
}

impl Month {
    pub fn new(year: i32, month: u8) -> Option<Self> {
        (1..=12).contains(&month).then_some(Month { year, month })
    }

    pub fn year(&self) -> i32 {
        self.year
    }

    pub fn month(&self) -> u8 {
        self.month
    }

    /// Month index counted from year 0, used for window arithmetic.
    pub fn ordinal(&self) -> i64 {
        self.year as i64 * 12 + (self.month as i64 - 1)
    }

    pub fn from_ordinal(ordinal: i64) -> Self {
        Month {
            year: ordinal.div_euclid(12) as i32,
            month: (ordinal.rem_euclid(12) + 1) as u8,
        }
    }

    pub fn add_months(&self, n: i64) -> Self {
        Month::from_ordinal(self.ordinal() + n)
    }
}

impl fmt::Display for Month {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for Month {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let s = s.trim();
        let (y, m) = s
            .split_once('-')
            .ok_or_else(|| format!("expected YYYY-MM, got {s:?}"))?;
        if y.len() != 4 || m.len() != 2 {
            return Err(format!("expected YYYY-MM, got {s:?}"));
        }
        let year: i32 = y.parse().map_err(|_| format!("bad year in {s:?}"))?;
        let month: u8 = m.parse().map_err(|_| format!("bad month in {s:?}"))?;
        Month::new(year, month).ok_or_else(|| format!("month out of range in {s:?}"))
    }
}

/// A T×n matrix of returns with dated rows and labeled columns.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnsPanel {
    dates: Vec<Month>,
    labels: Vec<String>,
    values: DMatrix<f64>,
}

impl ReturnsPanel {
    /// Builds a panel, sorting rows by date. Fails on duplicate dates or
    /// labels, or on a shape mismatch.
    pub fn new(dates: Vec<Month>, labels: Vec<String>, values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() != dates.len() || values.ncols() != labels.len() {
            return Err(Error::Dimension(format!(
                "values are {}x{} but there are {} dates and {} labels",
                values.nrows(),
                values.ncols(),
                dates.len(),
                labels.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(Error::Validation(format!("duplicate label {l}")));
            }
        }
        let mut order: Vec<usize> = (0..dates.len()).collect();
        order.sort_by_key(|&i| dates[i]);
        for w in order.windows(2) {
            if dates[w[0]] == dates[w[1]] {
                return Err(Error::Validation(format!("duplicate date {}", dates[w[0]])));
            }
        }
        let sorted_dates = order.iter().map(|&i| dates[i]).collect();
        let values = values.select_rows(order.iter());
        Ok(ReturnsPanel {
            dates: sorted_dates,
            labels,
            values,
        })
    }

    pub fn dates(&self) -> &[Month] {
        &self.dates
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn n_rows(&self) -> usize {
        self.dates.len()
    }

    pub fn n_cols(&self) -> usize {
        self.labels.len()
    }

    pub fn column_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn has_missing(&self) -> bool {
        self.values.iter().any(|v| !v.is_finite())
    }

    /// Keeps the given columns, in the given order.
    pub fn select_columns(&self, idx: &[usize]) -> ReturnsPanel {
        ReturnsPanel {
            dates: self.dates.clone(),
            labels: idx.iter().map(|&i| self.labels[i].clone()).collect(),
            values: self.values.select_columns(idx.iter()),
        }
    }

    fn select_rows(&self, idx: &[usize]) -> ReturnsPanel {
        ReturnsPanel {
            dates: idx.iter().map(|&i| self.dates[i]).collect(),
            labels: self.labels.clone(),
            values: self.values.select_rows(idx.iter()),
        }
    }

    /// Restricts rows to the inclusive window `[start, end]`.
    pub fn restrict(&self, start: Option<Month>, end: Option<Month>) -> ReturnsPanel {
        let idx: Vec<usize> = self
            .dates
            .iter()
            .enumerate()
            .filter(|(_, d)| start.is_none_or(|s| **d >= s) && end.is_none_or(|e| **d <= e))
            .map(|(i, _)| i)
            .collect();
        self.select_rows(&idx)
    }

    /// Subtracts the named column from every other column and drops it.
    pub fn subtract_risk_free(&self, rf_label: &str) -> Result<ReturnsPanel> {
        let rf = self
            .column_index(rf_label)
            .ok_or_else(|| Error::Lookup(rf_label.to_string()))?;
        let keep: Vec<usize> = (0..self.n_cols()).filter(|&j| j != rf).collect();
        let mut out = self.select_columns(&keep);
        let rf_col = self.values.column(rf).clone_owned();
        for mut col in out.values.column_iter_mut() {
            col -= &rf_col;
        }
        Ok(out)
    }

    /// Columns without any missing value.
    fn complete_columns(&self) -> Vec<usize> {
        (0..self.n_cols())
            .filter(|&j| self.values.column(j).iter().all(|v| v.is_finite()))
            .collect()
    }
}

fn is_missing(cell: &str) -> bool {
    matches!(cell, "" | "NA" | "NaN" | "nan" | "N/A")
}

/// Reads a comma-delimited return panel. The header names the date column and
/// the asset tickers; rows are returned sorted by date.
pub fn load_returns_csv(path: impl AsRef<Path>, date_column: &str) -> Result<ReturnsPanel> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_returns_csv(file, date_column)
}

pub fn read_returns_csv<R: std::io::Read>(reader: R, date_column: &str) -> Result<ReturnsPanel> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::Parse {
            row: 1,
            column: None,
            message: e.to_string(),
        })?
        .clone();
    let date_idx = header
        .iter()
        .position(|h| h == date_column)
        .ok_or_else(|| Error::Validation(format!("no date column named {date_column:?}")))?;
    let asset_cols: Vec<usize> = (0..header.len()).filter(|&i| i != date_idx).collect();
    let labels: Vec<String> = asset_cols.iter().map(|&i| header[i].to_string()).collect();

    let mut dates = Vec::new();
    let mut flat = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        // data rows start on line 2
        let row = r + 2;
        let rec = rec.map_err(|e| Error::Parse {
            row,
            column: None,
            message: e.to_string(),
        })?;
        let date: Month = rec
            .get(date_idx)
            .unwrap_or("")
            .parse()
            .map_err(|m| Error::Parse {
                row,
                column: Some(date_column.to_string()),
                message: m,
            })?;
        dates.push(date);
        for (&c, label) in asset_cols.iter().zip(&labels) {
            let cell = rec.get(c).unwrap_or("");
            let v = if is_missing(cell) {
                f64::NAN
            } else {
                cell.parse::<f64>().map_err(|_| Error::Parse {
                    row,
                    column: Some(label.clone()),
                    message: format!("not a number: {cell:?}"),
                })?
            };
            flat.push(v);
        }
    }
    let values = DMatrix::from_row_slice(dates.len(), labels.len(), &flat);
    ReturnsPanel::new(dates, labels, values)
}

/// Writes a panel in the format [`load_returns_csv`] reads. Values use the
/// shortest exact decimal representation, so a reload is bit-identical.
pub fn write_returns_csv(panel: &ReturnsPanel, path: impl AsRef<Path>, date_column: &str) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut wtr = csv::Writer::from_writer(file);
    let csv_err = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    let mut header = vec![date_column.to_string()];
    header.extend(panel.labels.iter().cloned());
    wtr.write_record(&header).map_err(csv_err)?;
    for (i, d) in panel.dates.iter().enumerate() {
        let mut rec = vec![d.to_string()];
        for j in 0..panel.n_cols() {
            let v = panel.values[(i, j)];
            rec.push(if v.is_finite() { v.to_string() } else { String::new() });
        }
        wtr.write_record(&rec).map_err(csv_err)?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))
}

/// Target and candidate panels over identical months, with no missing values.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedData {
    pub targets: ReturnsPanel,
    pub candidates: ReturnsPanel,
}

impl AlignedData {
    pub fn t(&self) -> usize {
        self.targets.n_rows()
    }

    pub fn p(&self) -> usize {
        self.candidates.n_cols()
    }

    pub fn q(&self) -> usize {
        self.targets.n_cols()
    }

    /// Builds aligned data directly from matrices with synthetic dates
    /// starting 2000-01 and labels `X1..Xp`, `R1..Rq`.
    pub fn from_matrices(candidates: DMatrix<f64>, targets: DMatrix<f64>) -> Result<Self> {
        let t = candidates.nrows();
        let start = Month::new(2000, 1).unwrap();
        let dates: Vec<Month> = (0..t as i64).map(|i| start.add_months(i)).collect();
        let cl = (1..=candidates.ncols()).map(|j| format!("X{j}")).collect();
        let tl = (1..=targets.ncols()).map(|j| format!("R{j}")).collect();
        align_panels(
            &ReturnsPanel::new(dates.clone(), tl, targets)?,
            &ReturnsPanel::new(dates, cl, candidates)?,
        )
    }
}

/// Restricts both panels to their common months. Candidate columns with a
/// missing value inside that window are dropped; target columns must be
/// complete and non-constant.
pub fn align_panels(targets: &ReturnsPanel, candidates: &ReturnsPanel) -> Result<AlignedData> {
    if targets.n_rows() == 0 || candidates.n_rows() == 0 {
        return Err(Error::Alignment("empty panel".into()));
    }
    if targets.n_cols() == 0 || candidates.n_cols() == 0 {
        return Err(Error::Alignment("panel without asset columns".into()));
    }
    let cand_dates: BTreeSet<Month> = candidates.dates.iter().copied().collect();
    let common: Vec<Month> = targets
        .dates
        .iter()
        .copied()
        .filter(|d| cand_dates.contains(d))
        .collect();
    if common.is_empty() {
        return Err(Error::Alignment("no months in common".into()));
    }
    let pick = |panel: &ReturnsPanel| {
        let idx: Vec<usize> = panel
            .dates
            .iter()
            .enumerate()
            .filter(|(_, d)| common.binary_search(d).is_ok())
            .map(|(i, _)| i)
            .collect();
        panel.select_rows(&idx)
    };
    let targets = pick(targets);
    let mut candidates = pick(candidates);

    if targets.has_missing() {
        return Err(Error::Validation(
            "target panel has missing values inside the aligned window".into(),
        ));
    }
    for (j, label) in targets.labels.iter().enumerate() {
        let col = targets.values.column(j);
        let mean = col.mean();
        if col.iter().all(|v| (v - mean).abs() == 0.0) {
            return Err(Error::Validation(format!("target column {label} is constant")));
        }
    }
    let complete = candidates.complete_columns();
    if complete.len() < candidates.n_cols() {
        for j in (0..candidates.n_cols()).filter(|j| !complete.contains(j)) {
            warn!(
                "dropping candidate {} (missing values inside the aligned window)",
                candidates.labels[j]
            );
        }
        candidates = candidates.select_columns(&complete);
    }
    if candidates.n_cols() == 0 {
        return Err(Error::Alignment("no complete candidate columns".into()));
    }
    let (t, p) = (common.len(), candidates.n_cols());
    if t < p + 2 {
        return Err(Error::SampleSize { t, p });
    }
    Ok(AlignedData {
        targets,
        candidates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(s: &str) -> Month {
        s.parse().unwrap()
    }

    fn monthly_panel(start: &str, n: usize, labels: &[&str], seed: f64) -> ReturnsPanel {
        let s = m(start);
        let dates = (0..n as i64).map(|i| s.add_months(i)).collect();
        let values = DMatrix::from_fn(n, labels.len(), |i, j| {
            ((i as f64 + 1.0) * (j as f64 + seed)).sin() * 0.05
        });
        ReturnsPanel::new(dates, labels.iter().map(|s| s.to_string()).collect(), values).unwrap()
    }

    #[test]
    fn month_parse_and_order() {
        assert_eq!(m("2010-01").to_string(), "2010-01");
        assert!(m("2009-12") < m("2010-01"));
        assert_eq!(m("2009-12").add_months(1), m("2010-01"));
        assert!("2010-13".parse::<Month>().is_err());
        assert!("2010/01".parse::<Month>().is_err());
    }

    #[test]
    fn parses_small_csv() {
        let csv = "date,A,B\n2010-01,0.01,0.02\n2010-02,0.03,0.04\n2010-03,-0.01,0.0\n";
        let p = read_returns_csv(csv.as_bytes(), "date").unwrap();
        assert_eq!(p.n_rows(), 3);
        assert_eq!(p.n_cols(), 2);
        assert_eq!(p.labels(), &["A".to_string(), "B".to_string()]);
        assert_eq!(p.values()[(1, 1)], 0.04);
    }

    #[test]
    fn resorts_rows() {
        let csv = "date,A\n2010-03,3\n2010-01,1\n2010-02,2\n";
        let p = read_returns_csv(csv.as_bytes(), "date").unwrap();
        assert_eq!(p.dates(), &[m("2010-01"), m("2010-02"), m("2010-03")]);
        assert_eq!(p.values().column(0).as_slice(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn duplicate_month_rejected() {
        let csv = "date,A\n2010-01,1\n2010-01,2\n";
        assert!(matches!(
            read_returns_csv(csv.as_bytes(), "date"),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn parse_errors_name_row_and_column() {
        let bad_date = "date,A\n2010-01,1\n2010-x,2\n";
        match read_returns_csv(bad_date.as_bytes(), "date") {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 3),
            other => panic!("unexpected {other:?}"),
        }
        let bad_cell = "date,A,B\n2010-01,1,abc\n";
        match read_returns_csv(bad_cell.as_bytes(), "date") {
            Err(Error::Parse { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column.as_deref(), Some("B"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn align_intersects_dates() {
        let t = monthly_panel("2000-01", 132, &["R1", "R2"], 1.0);
        let c = monthly_panel("2005-01", 132, &["A", "B", "C"], 2.0);
        let a = align_panels(&t, &c).unwrap();
        assert_eq!(a.t(), 72);
        assert_eq!(a.targets.dates().first(), Some(&m("2005-01")));
        assert_eq!(a.targets.dates().last(), Some(&m("2010-12")));
        assert_eq!(a.targets.dates(), a.candidates.dates());
    }

    #[test]
    fn align_identity_and_idempotent() {
        let t = monthly_panel("2000-01", 30, &["R1"], 1.0);
        let c = monthly_panel("2000-01", 30, &["A", "B"], 2.0);
        let a = align_panels(&t, &c).unwrap();
        assert_eq!(a.targets, t);
        assert_eq!(a.candidates, c);
        let b = align_panels(&a.targets, &a.candidates).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn align_sample_size_error() {
        let t = monthly_panel("2000-01", 5, &["R1"], 1.0);
        let labels: Vec<String> = (0..10).map(|i| format!("E{i}")).collect();
        let refs: Vec<&str> = labels.iter().map(|s| s.as_str()).collect();
        let c = monthly_panel("2000-01", 5, &refs, 2.0);
        assert!(matches!(align_panels(&t, &c), Err(Error::SampleSize { t: 5, p: 10 })));
    }

    #[test]
    fn align_empty_intersection() {
        let t = monthly_panel("2000-01", 10, &["R1"], 1.0);
        let c = monthly_panel("2005-01", 10, &["A"], 2.0);
        assert!(matches!(align_panels(&t, &c), Err(Error::Alignment(_))));
    }

    #[test]
    fn drops_incomplete_candidates() {
        let csv = "date,A,B\n2010-01,0.01,\n2010-02,0.02,0.1\n2010-03,0.0,0.2\n2010-04,0.05,0.1\n2010-05,0.01,0.3\n";
        let c = read_returns_csv(csv.as_bytes(), "date").unwrap();
        let t = monthly_panel("2010-01", 5, &["R"], 1.0);
        let a = align_panels(&t, &c).unwrap();
        assert_eq!(a.candidates.labels(), &["A".to_string()]);
        // the same column is kept when the window excludes the gap
        let a2 = align_panels(&t.restrict(Some(m("2010-02")), None), &c).unwrap();
        assert_eq!(a2.p(), 2);
    }

    #[test]
    fn constant_target_rejected() {
        let t = ReturnsPanel::new(
            (0..6).map(|i| m("2000-01").add_months(i)).collect(),
            vec!["R".into()],
            DMatrix::from_element(6, 1, 0.01),
        )
        .unwrap();
        let c = monthly_panel("2000-01", 6, &["A"], 2.0);
        assert!(matches!(align_panels(&t, &c), Err(Error::Validation(_))));
    }

    #[test]
    fn risk_free_adjustment() {
        let csv = "date,A,RF\n2010-01,0.05,0.01\n2010-02,0.03,0.02\n";
        let p = read_returns_csv(csv.as_bytes(), "date").unwrap();
        let x = p.subtract_risk_free("RF").unwrap();
        assert_eq!(x.labels(), &["A".to_string()]);
        assert_eq!(x.values()[(0, 0)], 0.05 - 0.01);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn csv_round_trip_bit_exact(
                vals in proptest::collection::vec(-1.0f64..1.0, 12),
            ) {
                let dates = (0..4).map(|i| m("1999-11").add_months(i)).collect();
                let panel = ReturnsPanel::new(
                    dates,
                    vec!["A".into(), "B".into(), "C".into()],
                    DMatrix::from_row_slice(4, 3, &vals),
                ).unwrap();
                let dir = tempfile::tempdir().unwrap();
                let path = dir.path().join("p.csv");
                write_returns_csv(&panel, &path, "date").unwrap();
                let back = load_returns_csv(&path, "date").unwrap();
                prop_assert_eq!(back, panel);
            }
        }
    }
}
