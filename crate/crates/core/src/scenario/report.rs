//! Result tables.

use std::fmt::Write;
use std::str::FromStr;

use super::runtime::ScenarioResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Tsv,
    Pretty,
}

impl FromStr for TableFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tsv" => Ok(TableFormat::Tsv),
            "pretty" => Ok(TableFormat::Pretty),
            other => Err(format!("unknown format {other:?} (expected tsv or pretty)")),
        }
    }
}

pub const HEADER: [&str; 6] = ["scenario", "subject", "metric", "value", "expected", "pass"];

/// Table cells, header first. Numbers have two decimals; missing values are `-`.
pub fn table_cells(result: &ScenarioResult) -> Vec<[String; 6]> {
    let mut out = vec![HEADER.map(String::from)];
    for r in &result.rows {
        out.push([
            result.scenario_name.clone(),
            r.subject.clone(),
            r.metric.as_str().to_string(),
            format!("{:.2}", r.value),
            r.expected.map_or_else(|| "-".into(), |e| format!("{e:.2}")),
            match r.pass() {
                Some(true) => "yes".into(),
                Some(false) => "no".into(),
                None => "-".into(),
            },
        ]);
    }
    out
}

pub fn emit_table(result: &ScenarioResult, format: TableFormat) -> String {
    let cells = table_cells(result);
    let mut out = String::new();
    match format {
        TableFormat::Tsv => {
            for row in &cells {
                out.push_str(&row.join("\t"));
                out.push('\n');
            }
        }
        TableFormat::Pretty => {
            let mut widths = [0usize; 6];
            for row in &cells {
                for (w, c) in widths.iter_mut().zip(row) {
                    *w = (*w).max(c.len());
                }
            }
            for row in &cells {
                let line: Vec<String> = row
                    .iter()
                    .zip(widths)
                    .map(|(c, w)| format!("{c:<w$}"))
                    .collect();
                writeln!(out, "{}", line.join("  ").trim_end()).expect("write to string");
            }
        }
    }
    out
}
