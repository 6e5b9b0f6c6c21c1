//! Long-format panel CSV reading and writing.
//!
//! The expected header is `unit,time,y,x1[,x2..]`; regressor columns may
//! carry any name, which is kept for reporting.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use pcluster::{validate_panel, PanelData, RawRow};

use crate::error::{input, CliError, CliResult};

/// A panel together with the names of its regressor columns.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedPanel {
    pub panel: PanelData,
    pub regressors: Vec<String>,
}

pub fn read_panel_csv(path: &Path) -> CliResult<LoadedPanel> {
    let file = std::fs::File::open(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    parse_panel_csv(file).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub fn parse_panel_csv<R: Read>(reader: R) -> CliResult<LoadedPanel> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| CliError::Input(format!("line 1: {e}")))?.clone();
    let names: Vec<String> = header.iter().map(str::to_string).collect();
    let expected = ["unit", "time", "y"];
    if names.len() < 4 || names.iter().zip(expected).any(|(got, want)| !got.eq_ignore_ascii_case(want)) {
        return Err(CliError::Input(format!(
            "line 1: expected header 'unit,time,y,x1[,x2..]', got '{}'",
            names.join(",")
        )));
    }
    let regressors = names[3..].to_vec();

    let mut rows = Vec::new();
    let mut first_seen: HashMap<(String, String), u64> = HashMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            CliError::Input(format!("line {line}: {e}"))
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let number = |col: usize| -> CliResult<f64> {
            let raw = &record[col];
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                Ok(_) => Err(CliError::Input(format!("line {line}: column '{}' is not finite: '{raw}'", names[col]))),
                Err(_) => Err(CliError::Input(format!("line {line}: column '{}' is not a number: '{raw}'", names[col]))),
            }
        };
        let (unit, time) = (record[0].to_string(), record[1].to_string());
        if unit.is_empty() || time.is_empty() {
            return Err(CliError::Input(format!("line {line}: empty unit or time identifier")));
        }
        if let Some(prev) = first_seen.insert((unit.clone(), time.clone()), line) {
            return Err(CliError::Input(format!(
                "line {line}: duplicate observation for unit '{unit}', time '{time}' (first on line {prev})"
            )));
        }
        let y = number(2)?;
        let x = (3..names.len()).map(number).collect::<CliResult<Vec<f64>>>()?;
        rows.push(RawRow { unit, time, y, x });
    }
    let panel = validate_panel(&rows).map_err(input)?;
    Ok(LoadedPanel { panel, regressors })
}

/// Writes the panel in long format, unit-major. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn write_panel_csv<W: Write>(panel: &PanelData, regressors: &[String], writer: W) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["unit".to_string(), "time".to_string(), "y".to_string()];
    header.extend(regressors.iter().cloned());
    w.write_record(&header).map_err(input)?;
    for row in panel.to_rows() {
        let mut record = vec![row.unit, row.time, format!("{:e}", row.y)];
        record.extend(row.x.iter().map(|v| format!("{v:e}")));
        w.write_record(&record).map_err(input)?;
    }
    w.flush().map_err(input)
}

/// `x1, x2, ..` for a panel without named regressors.
pub fn default_regressor_names(k: usize) -> Vec<String> {
    (1..=k).map(|j| format!("x{j}")).collect()
}
