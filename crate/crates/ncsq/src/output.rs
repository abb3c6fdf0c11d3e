//! Result tables and their on-disk forms: CSV, JSON and a gnuplot script.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ExperimentConfig;

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed csv at line {line}: {reason}")]
    Csv { line: usize, reason: String },
    #[error("malformed json: {0}")]
    Json(#[from] serde_json::Error),
}

/// One `(family, rate)` cell of an experiment.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ResultRow {
    pub family: String,
    pub target_rate_bps: f64,
    pub achieved_rate_bps: f64,
    /// Mean linear MSE over the runs; `None` marks an unstable cell and is
    /// written as `inf` in the CSV.
    pub mse_linear: Option<f64>,
    pub mse_db: Option<f64>,
    pub stable: bool,
    pub runs: usize,
    pub steps: usize,
    pub master_seed: u64,
}

/// Rows of an experiment, one per `(family, rate)` cell.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

pub const CSV_HEADER: &str =
    "family,target_rate_bps,achieved_rate_bps,mse_linear,mse_db,stable,runs,steps,master_seed";

fn float_field(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{v}"),
        None => "inf".to_string(),
    }
}

fn parse_float_field(text: &str, line: usize) -> Result<Option<f64>, OutputError> {
    if text == "inf" {
        return Ok(None);
    }
    text.parse::<f64>().map(Some).map_err(|e| OutputError::Csv {
        line,
        reason: format!("bad float {text:?}: {e}"),
    })
}

impl ResultTable {
    /// Render as CSV: the fixed header, UTF-8, LF line endings, floats in
    /// shortest round-trip form, unstable cells as `inf`.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.rows.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                row.family,
                row.target_rate_bps,
                row.achieved_rate_bps,
                float_field(row.mse_linear),
                float_field(row.mse_db),
                row.stable,
                row.runs,
                row.steps,
                row.master_seed
            );
        }
        out
    }

    /// Parse the CSV form back. Lossless for tables produced by
    /// [`ResultTable::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self, OutputError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, header)) if header == CSV_HEADER => {}
            other => {
                return Err(OutputError::Csv {
                    line: 1,
                    reason: format!("unexpected header {:?}", other.map(|(_, h)| h)),
                })
            }
        }
        let mut rows = Vec::new();
        for (index, line) in lines {
            if line.is_empty() {
                continue;
            }
            let lineno = index + 1;
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 9 {
                return Err(OutputError::Csv {
                    line: lineno,
                    reason: format!("expected 9 fields, got {}", fields.len()),
                });
            }
            let parse_num = |text: &str, what: &str| -> Result<f64, OutputError> {
                text.parse::<f64>().map_err(|e| OutputError::Csv {
                    line: lineno,
                    reason: format!("bad {what} {text:?}: {e}"),
                })
            };
            rows.push(ResultRow {
                family: fields[0].to_string(),
                target_rate_bps: parse_num(fields[1], "target rate")?,
                achieved_rate_bps: parse_num(fields[2], "achieved rate")?,
                mse_linear: parse_float_field(fields[3], lineno)?,
                mse_db: parse_float_field(fields[4], lineno)?,
                stable: match fields[5] {
                    "true" => true,
                    "false" => false,
                    other => {
                        return Err(OutputError::Csv {
                            line: lineno,
                            reason: format!("bad stable flag {other:?}"),
                        })
                    }
                },
                runs: fields[6].parse().map_err(|e| OutputError::Csv {
                    line: lineno,
                    reason: format!("bad runs: {e}"),
                })?,
                steps: fields[7].parse().map_err(|e| OutputError::Csv {
                    line: lineno,
                    reason: format!("bad steps: {e}"),
                })?,
                master_seed: fields[8].parse().map_err(|e| OutputError::Csv {
                    line: lineno,
                    reason: format!("bad seed: {e}"),
                })?,
            });
        }
        Ok(Self { rows })
    }

    /// Families in first-appearance order.
    pub fn families(&self) -> Vec<String> {
        let mut seen = Vec::new();
        for row in &self.rows {
            if !seen.contains(&row.family) {
                seen.push(row.family.clone());
            }
        }
        seen
    }
}

/// The self-describing JSON document: the resolved experiment parameters
/// next to the rows they produced.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ExperimentOutput {
    pub metadata: ExperimentConfig,
    pub rows: Vec<ResultRow>,
}

impl ExperimentOutput {
    pub fn new(metadata: ExperimentConfig, table: &ResultTable) -> Self {
        Self {
            metadata,
            rows: table.rows.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String, OutputError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, OutputError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn table(&self) -> ResultTable {
        ResultTable {
            rows: self.rows.clone(),
        }
    }
}

fn sanitize_block_name(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

/// Render a gnuplot script plotting MSE (dB) against bit rate, one series
/// per family, unstable cells omitted. Data is inlined so the script is
/// self-contained.
pub fn plot_script(name: &str, table: &ResultTable) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# {name}: MSE against bit rate per dictionary family");
    let _ = writeln!(out, "set terminal pngcairo size 960,640");
    let _ = writeln!(out, "set output 'results.png'");
    let _ = writeln!(out, "set xlabel 'bit rate [bit/symbol]'");
    let _ = writeln!(out, "set ylabel 'MSE [dB]'");
    let _ = writeln!(out, "set grid");
    let _ = writeln!(out, "set key top right");

    let families = table.families();
    let mut plotted = Vec::new();
    for family in &families {
        let block = sanitize_block_name(family);
        let points: Vec<(f64, f64)> = table
            .rows
            .iter()
            .filter(|row| &row.family == family && row.stable)
            .filter_map(|row| row.mse_db.map(|db| (row.target_rate_bps, db)))
            .collect();
        if points.is_empty() {
            continue;
        }
        let _ = writeln!(out, "$data_{block} << EOD");
        for (rate, db) in &points {
            let _ = writeln!(out, "{rate} {db}");
        }
        let _ = writeln!(out, "EOD");
        plotted.push((block, family.clone()));
    }
    let series: Vec<String> = plotted
        .iter()
        .map(|(block, family)| {
            if family == "baseline" {
                format!("$data_{block} using 1:2 with lines dashtype 2 title '{family}'")
            } else {
                format!("$data_{block} using 1:2 with linespoints title '{family}'")
            }
        })
        .collect();
    if !series.is_empty() {
        let _ = writeln!(out, "plot {}", series.join(", \\\n     "));
    }
    out
}

fn write_file(path: &Path, contents: &str) -> Result<(), OutputError> {
    fs::write(path, contents).map_err(|source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Write `results.csv`, `results.json` and `plot.gp` into `outdir`.
pub fn emit_outputs(
    metadata: &ExperimentConfig,
    table: &ResultTable,
    outdir: &Path,
) -> Result<Vec<PathBuf>, OutputError> {
    fs::create_dir_all(outdir).map_err(|source| OutputError::Io {
        path: outdir.to_path_buf(),
        source,
    })?;
    let csv_path = outdir.join("results.csv");
    write_file(&csv_path, &table.to_csv())?;
    let json_path = outdir.join("results.json");
    let output = ExperimentOutput::new(metadata.clone(), table);
    write_file(&json_path, &output.to_json()?)?;
    let plot_path = outdir.join("plot.gp");
    write_file(&plot_path, &plot_script(&metadata.name, table))?;
    Ok(vec![csv_path, json_path, plot_path])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_row() -> ResultRow {
        ResultRow {
            family: "GSR".into(),
            target_rate_bps: 4.8,
            achieved_rate_bps: 4.8,
            mse_linear: Some(181.23456789012345),
            mse_db: Some(22.583129538623713),
            stable: true,
            runs: 4,
            steps: 20_000,
            master_seed: 7,
        }
    }

    #[test]
    fn empty_table_is_header_only() {
        let table = ResultTable::default();
        assert_eq!(table.to_csv(), format!("{CSV_HEADER}\n"));
        let back = ResultTable::from_csv(&table.to_csv()).unwrap();
        assert_eq!(back, table);
    }

    #[test]
    fn csv_round_trip_is_lossless() {
        let mut table = ResultTable::default();
        table.rows.push(sample_row());
        table.rows.push(ResultRow {
            family: "IID".into(),
            mse_linear: None,
            mse_db: None,
            stable: false,
            ..sample_row()
        });
        let text = table.to_csv();
        let back = ResultTable::from_csv(&text).unwrap();
        assert_eq!(back, table);
        assert!(text.contains("inf,inf,false"));
    }

    #[test]
    fn csv_rejects_garbage() {
        assert!(ResultTable::from_csv("nope\n").is_err());
        let bad = format!("{CSV_HEADER}\nGSR,4.8,4.8,xyz,1,true,4,100,7\n");
        assert!(ResultTable::from_csv(&bad).is_err());
    }

    #[test]
    fn plot_script_skips_unstable_cells() {
        let mut table = ResultTable::default();
        table.rows.push(sample_row());
        table.rows.push(ResultRow {
            target_rate_bps: 5.6,
            mse_linear: None,
            mse_db: None,
            stable: false,
            ..sample_row()
        });
        let script = plot_script("demo", &table);
        assert_eq!(script.matches("title '").count(), 1);
        assert!(script.contains("4.8 "));
        assert!(!script.contains("5.6 "));
    }
}
