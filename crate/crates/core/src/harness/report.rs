//! Per-Doppler result rows, their CSV form and the merged comparison table.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::kalman::MNSE_FLOOR_DB;

pub const REPORT_HEADER: &str =
    "doppler_hz,method,mnse_db,num_test_instances,snr_db_eval,pilot_period_eval,seed,checkpoint_id";

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub doppler_hz: f64,
    pub method: String,
    pub mnse_db: f64,
    pub num_test_instances: usize,
    pub snr_db_eval: f64,
    pub pilot_period_eval: usize,
    pub seed: u64,
    /// Content hash of the artifact used, `-` when none.
    pub checkpoint_id: String,
}

impl ReportRow {
    fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.doppler_hz,
            self.method,
            self.mnse_db.max(MNSE_FLOOR_DB),
            self.num_test_instances,
            self.snr_db_eval,
            self.pilot_period_eval,
            self.seed,
            self.checkpoint_id
        )
    }

    fn parse(line: &str, lineno: usize) -> Result<Self> {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(Error::Format(format!(
                "line {lineno}: expected 8 fields, found {}",
                f.len()
            )));
        }
        let bad = |what: &str| Error::Format(format!("line {lineno}: bad {what}"));
        Ok(Self {
            doppler_hz: f[0].parse().map_err(|_| bad("doppler_hz"))?,
            method: f[1].to_string(),
            mnse_db: f[2].parse().map_err(|_| bad("mnse_db"))?,
            num_test_instances: f[3].parse().map_err(|_| bad("num_test_instances"))?,
            snr_db_eval: f[4].parse().map_err(|_| bad("snr_db_eval"))?,
            pilot_period_eval: f[5].parse().map_err(|_| bad("pilot_period_eval"))?,
            seed: f[6].parse().map_err(|_| bad("seed"))?,
            checkpoint_id: f[7].to_string(),
        })
    }
}

/// Ordered result rows; rows are only ever appended.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunReport {
    rows: Vec<ReportRow>,
}

impl RunReport {
    pub fn push(&mut self, row: ReportRow) {
        self.rows.push(row);
    }

    pub fn extend(&mut self, rows: impl IntoIterator<Item = ReportRow>) {
        self.rows.extend(rows);
    }

    pub fn rows(&self) -> &[ReportRow] {
        &self.rows
    }

    /// Mean `mnse_db` over the rows of one method.
    pub fn mean_db(&self, method: &str) -> Option<f64> {
        let v: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.method == method)
            .map(|r| r.mnse_db)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(REPORT_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.to_csv_line());
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, h)) if h.trim() == REPORT_HEADER => {}
            Some((_, h)) => {
                return Err(Error::Format(format!("unexpected report header {h:?}")));
            }
            None => return Err(Error::Format("empty report".into())),
        }
        let rows = lines
            .map(|(i, l)| ReportRow::parse(l.trim(), i + 1))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { rows })
    }
}

/// Reports merged into one row per Doppler and one column per method.
#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonTable {
    pub columns: Vec<String>,
    /// `(doppler_hz, one cell per column)`.
    pub rows: Vec<(f64, Vec<Option<f64>>)>,
}

fn condition_key(r: &ReportRow) -> String {
    format!("p{}_snr{}", r.pilot_period_eval, r.snr_db_eval)
}

impl ComparisonTable {
    /// Merges reports. A method evaluated under more than one condition gets
    /// one column per condition, labelled `method@p<period>_snr<db>`.
    pub fn merge(reports: &[RunReport]) -> Result<Self> {
        if reports.is_empty() {
            return Err(Error::Empty("no reports to merge".into()));
        }
        let all: Vec<&ReportRow> = reports.iter().flat_map(|r| r.rows.iter()).collect();
        let mut conditions: BTreeMap<&str, Vec<String>> = BTreeMap::new();
        for r in &all {
            let c = conditions.entry(&r.method).or_default();
            let k = condition_key(r);
            if !c.contains(&k) {
                c.push(k);
            }
        }
        let label = |r: &ReportRow| {
            if conditions[r.method.as_str()].len() > 1 {
                format!("{}@{}", r.method, condition_key(r))
            } else {
                r.method.clone()
            }
        };
        let mut columns: Vec<String> = Vec::new();
        let mut dopplers: Vec<f64> = Vec::new();
        for r in &all {
            let l = label(r);
            if !columns.contains(&l) {
                columns.push(l);
            }
            if !dopplers.contains(&r.doppler_hz) {
                dopplers.push(r.doppler_hz);
            }
        }
        dopplers.sort_by(f64::total_cmp);
        let mut rows: Vec<(f64, Vec<Option<f64>>)> = dopplers
            .iter()
            .map(|&d| (d, vec![None; columns.len()]))
            .collect();
        for r in &all {
            let ci = columns
                .iter()
                .position(|c| *c == label(r))
                .expect("collected");
            let ri = dopplers
                .iter()
                .position(|&d| d == r.doppler_hz)
                .expect("collected");
            let cell = &mut rows[ri].1[ci];
            if cell.is_some() {
                return Err(Error::Format(format!(
                    "two results for {} at {} Hz",
                    columns[ci], r.doppler_hz
                )));
            }
            *cell = Some(r.mnse_db);
        }
        Ok(Self { columns, rows })
    }

    /// Column index of the lowest MNSE in each row.
    pub fn best(&self) -> Vec<Option<usize>> {
        self.rows
            .iter()
            .map(|(_, cells)| {
                cells
                    .iter()
                    .enumerate()
                    .filter_map(|(i, c)| c.map(|v| (i, v)))
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .map(|(i, _)| i)
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("doppler_hz");
        for c in &self.columns {
            let _ = write!(s, ",{c}");
        }
        s.push_str(",best\n");
        for ((d, cells), best) in self.rows.iter().zip(self.best()) {
            let _ = write!(s, "{d}");
            for c in cells {
                match c {
                    Some(v) => {
                        let _ = write!(s, ",{v}");
                    }
                    None => s.push(','),
                }
            }
            let _ = writeln!(s, ",{}", best.map_or("", |i| self.columns[i].as_str()));
        }
        s
    }

    /// Aligned plain-text table, two decimals, best cell of each row starred.
    pub fn to_text(&self) -> String {
        let mut header = vec!["Doppler (Hz)".to_string()];
        header.extend(self.columns.iter().cloned());
        let mut body: Vec<Vec<String>> = Vec::new();
        for ((d, cells), best) in self.rows.iter().zip(self.best()) {
            let mut line = vec![format!("{d}")];
            for (i, c) in cells.iter().enumerate() {
                line.push(match c {
                    Some(v) if best == Some(i) => format!("{v:.2}*"),
                    Some(v) => format!("{v:.2}"),
                    None => "-".into(),
                });
            }
            body.push(line);
        }
        let widths: Vec<usize> = (0..header.len())
            .map(|i| {
                body.iter()
                    .map(|l| l[i].chars().count())
                    .chain([header[i].chars().count()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let fmt_line = |cells: &[String]| {
            let parts: Vec<String> = cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:>w$}"))
                .collect();
            parts.join("  ")
        };
        let mut s = fmt_line(&header);
        s.push('\n');
        for l in &body {
            s.push_str(&fmt_line(l));
            s.push('\n');
        }
        s
    }
}
