//! Per-subject accuracy tables in the Speed / Method / S1..Sn / Average / SD
//! layout, emitted as CSV (full precision) or markdown (two decimals).

use serde::{Deserialize, Serialize};

use super::Method;
use crate::error::{Error, Result};
use crate::signal::Condition;

/// One (speed, method) row. `None` marks a cell that was never filled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub speed: Condition,
    pub method: Method,
    pub accuracies: Vec<Option<f64>>,
    pub mean: f64,
    pub sd: f64,
}

impl TableRow {
    /// A row with mean and sample SD (n - 1) computed from `accuracies`.
    pub fn new(speed: Condition, method: Method, accuracies: Vec<f64>) -> Self {
        let (mean, sd) = mean_sd(&accuracies);
        TableRow {
            speed,
            method,
            accuracies: accuracies.into_iter().map(Some).collect(),
            mean,
            sd,
        }
    }

    pub fn values(&self) -> Option<Vec<f64>> {
        self.accuracies.iter().copied().collect()
    }
}

/// Mean and sample standard deviation; SD is 0 for fewer than two values.
pub fn mean_sd(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyTable {
    pub subjects: Vec<u32>,
    pub rows: Vec<TableRow>,
}

const MEAN_TOL: f64 = 1e-12;

impl AccuracyTable {
    pub fn new(subjects: Vec<u32>) -> Self {
        AccuracyTable { subjects, rows: Vec::new() }
    }

    pub fn row(&self, speed: Condition, method: Method) -> Option<&TableRow> {
        self.rows.iter().find(|r| r.speed == speed && r.method == method)
    }

    /// Inserts or replaces a row and keeps rows in speed, then method, order.
    pub fn insert(&mut self, row: TableRow) {
        self.rows.retain(|r| !(r.speed == row.speed && r.method == row.method));
        self.rows.push(row);
        self.rows.sort_by_key(|r| (r.speed, r.method));
    }

    /// Checks cell counts, value ranges and that stored mean/SD agree with
    /// the row values; lists every problem found.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        for r in &self.rows {
            let label = format!("{} / {}", r.speed.table_label(), r.method);
            if r.accuracies.len() != self.subjects.len() {
                problems.push(format!("{label}: {} cells for {} subjects", r.accuracies.len(), self.subjects.len()));
                continue;
            }
            let missing: Vec<String> = r
                .accuracies
                .iter()
                .zip(&self.subjects)
                .filter(|(a, _)| a.is_none())
                .map(|(_, s)| format!("S{s}"))
                .collect();
            if !missing.is_empty() {
                problems.push(format!("{label}: missing {}", missing.join(", ")));
                continue;
            }
            let values = r.values().expect("checked above");
            if let Some(bad) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                problems.push(format!("{label}: accuracy {bad} outside [0, 1]"));
            }
            let (mean, sd) = mean_sd(&values);
            if (mean - r.mean).abs() > MEAN_TOL || (sd - r.sd).abs() > MEAN_TOL {
                problems.push(format!("{label}: stored mean/SD {}/{} disagree with {mean}/{sd}", r.mean, r.sd));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidState(format!("incomplete accuracy table: {}", problems.join("; "))))
        }
    }

    fn header(&self) -> Vec<String> {
        let mut h = vec!["Speed".to_string(), "Method".to_string()];
        h.extend(self.subjects.iter().map(|s| format!("S{s}")));
        h.push("Average".into());
        h.push("SD".into());
        h
    }

    /// CSV with every value at full (round-trip) precision.
    pub fn to_csv(&self) -> Result<String> {
        self.validate()?;
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::InvalidState(format!("csv: {e}"));
        w.write_record(self.header()).map_err(io)?;
        for r in &self.rows {
            let mut rec = vec![r.speed.table_label().to_string(), r.method.to_string()];
            rec.extend(r.accuracies.iter().map(|a| a.expect("validated").to_string()));
            rec.push(r.mean.to_string());
            rec.push(r.sd.to_string());
            w.write_record(rec).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidState(format!("csv: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::invalid(format!("accuracy table csv: {msg}"));
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let header = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
        let n = header.len();
        if n < 4 || &header[0] != "Speed" || &header[1] != "Method" || &header[n - 2] != "Average" || &header[n - 1] != "SD" {
            return Err(bad("unexpected header".into()));
        }
        let subjects = header
            .iter()
            .skip(2)
            .take(n - 4)
            .map(|h| h.strip_prefix('S').and_then(|s| s.parse().ok()).ok_or_else(|| bad(format!("bad subject column {h:?}"))))
            .collect::<Result<Vec<u32>>>()?;
        let mut table = AccuracyTable::new(subjects);
        for rec in rdr.records() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            let num = |i: usize| rec[i].parse::<f64>().map_err(|_| bad(format!("bad number {:?}", &rec[i])));
            let speed: Condition = rec[0].parse()?;
            let method: Method = rec[1].parse()?;
            let accuracies = (2..n - 2).map(|i| num(i).map(Some)).collect::<Result<_>>()?;
            table.rows.push(TableRow {
                speed,
                method,
                accuracies,
                mean: num(n - 2)?,
                sd: num(n - 1)?,
            });
        }
        table.validate()?;
        Ok(table)
    }

    /// Markdown table, values rounded to two decimals.
    pub fn to_markdown(&self) -> Result<String> {
        self.validate()?;
        let header = self.header();
        let mut out = format!("| {} |\n", header.join(" | "));
        out += &format!("|{}\n", "---|".repeat(header.len()));
        for r in &self.rows {
            let mut cells = vec![r.speed.table_label().to_string(), r.method.to_string()];
            cells.extend(r.accuracies.iter().map(|a| format!("{:.2}", a.expect("validated"))));
            cells.push(format!("{:.2}", r.mean));
            cells.push(format!("{:.2}", r.sd));
            out += &format!("| {} |\n", cells.join(" | "));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn subjects() -> Vec<u32> {
        (1..=13).collect()
    }

    #[test]
    fn header_and_rounding() {
        // mean 0.51, sample SD sqrt(6 * 0.12^2 / 12) = 0.0849
        let v = vec![0.51, 0.39, 0.63, 0.51, 0.39, 0.63, 0.51, 0.39, 0.63, 0.51, 0.51, 0.51, 0.51];
        let mut t = AccuracyTable::new(subjects());
        let row = TableRow::new(Condition::Standing, Method::Cca, v);
        assert!((row.mean - 0.51).abs() < 1e-12);
        assert_eq!(format!("{:.2}", row.sd), "0.08");
        t.insert(row);
        let md = t.to_markdown().unwrap();
        let first = md.lines().next().unwrap();
        assert_eq!(
            first,
            "| Speed | Method | S1 | S2 | S3 | S4 | S5 | S6 | S7 | S8 | S9 | S10 | S11 | S12 | S13 | Average | SD |"
        );
        assert!(md.lines().nth(2).unwrap().starts_with("| Standing | CCA | 0.51 | 0.39 |"));
        assert!(md.contains("| 0.51 | 0.08 |"));
        let csv = t.to_csv().unwrap();
        assert!(csv.starts_with("Speed,Method,S1,"));
    }

    #[test]
    fn stored_mean_and_sd_render_as_given() {
        let mut t = AccuracyTable::new(vec![1, 2]);
        let mut row = TableRow::new(Condition::Standing, Method::Cca, vec![0.39, 0.63]);
        row.mean = 0.51;
        row.sd = 0.12;
        // 0.51 / 0.12 are not the recomputed values, so validation refuses
        t.insert(row.clone());
        assert!(t.validate().is_err());
        let mut t = AccuracyTable::new(vec![1, 2]);
        let row = TableRow::new(Condition::Standing, Method::Cca, vec![0.4251471862576143, 0.5948528137423857]);
        t.insert(row);
        let md = t.to_markdown().unwrap();
        assert!(md.contains("| 0.51 | 0.12 |"), "{md}");
    }

    #[test]
    fn all_zero_table_renders() {
        let mut t = AccuracyTable::new(subjects());
        for speed in Condition::ALL {
            for method in Method::ALL {
                t.insert(TableRow::new(speed, method, vec![0.0; 13]));
            }
        }
        let md = t.to_markdown().unwrap();
        assert_eq!(md.lines().count(), 2 + 9);
        assert!(md.lines().skip(2).all(|l| l.ends_with("| 0.00 | 0.00 |")));
        let order: Vec<&str> = md.lines().skip(2).map(|l| l.split(" | ").nth(1).unwrap()).collect();
        assert_eq!(&order[..3], &["CCA", "LDA", "Proposed"]);
    }

    #[test]
    fn incomplete_table_lists_missing_cells() {
        let mut t = AccuracyTable::new(vec![1, 2, 3]);
        let mut row = TableRow::new(Condition::Walk16, Method::Lda, vec![0.5, 0.5, 0.5]);
        row.accuracies[1] = None;
        t.insert(row);
        match t.to_csv() {
            Err(Error::InvalidState(msg)) => assert!(msg.contains("1.6m/s / LDA: missing S2"), "{msg}"),
            other => panic!("{other:?}"),
        }
        let mut t = AccuracyTable::new(vec![1]);
        t.insert(TableRow::new(Condition::Standing, Method::Lda, vec![1.5]));
        assert!(t.validate().is_err());
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_exact(rows in prop::collection::vec(prop::collection::vec(0.0f64..=1.0, 13), 1..=9)) {
            let mut t = AccuracyTable::new(subjects());
            for (i, v) in rows.into_iter().enumerate() {
                t.insert(TableRow::new(Condition::ALL[i / 3], Method::ALL[i % 3], v));
            }
            let back = AccuracyTable::from_csv(&t.to_csv().unwrap()).unwrap();
            prop_assert_eq!(back, t);
        }

        #[test]
        fn mean_sd_recomputation(v in prop::collection::vec(0.0f64..=1.0, 2..20)) {
            let row = TableRow::new(Condition::Standing, Method::Cca, v.clone());
            let n = v.len() as f64;
            let m = v.iter().sum::<f64>() / n;
            prop_assert!((row.mean - m).abs() < 1e-12);
            let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            prop_assert!((row.sd - sd).abs() < 1e-12);
        }
    }
}
