//! Files written by the command-line tool: comma separated tables with
//! `#` comment headers and LF endings, and experiment records stored as one
//! CSV per power step plus a JSON manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{Scenario, ScenarioFile};
use crate::error::{Error, Result};
use crate::montecarlo::{ExperimentRecord, PowerStep, ScanProtocol};

pub const RECORD_FORMAT: &str = "recoilspec-record/1";
pub const MANIFEST_NAME: &str = "manifest.json";

/// A table of numbers with leading comment lines.
#[derive(Debug, Clone, Default)]
pub struct CsvTable {
    pub comments: Vec<String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CsvTable {
    pub fn new(columns: &[&str]) -> Self {
        CsvTable {
            comments: Vec::new(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn comment(&mut self, line: impl Into<String>) -> &mut Self {
        self.comments.push(line.into());
        self
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Floats use the shortest representation that reads back exactly.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.comments {
            for line in c.lines() {
                let _ = writeln!(out, "# {line}");
            }
        }
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row.iter().map(|v| v.to_string())).expect("in-memory write");
        }
        let body = w.into_inner().expect("in-memory flush");
        out.push_str(std::str::from_utf8(&body).expect("ASCII table"));
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.render())?;
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let comments = text
            .lines()
            .filter_map(|l| l.strip_prefix('#'))
            .map(|c| c.strip_prefix(' ').unwrap_or(c).to_string())
            .collect();
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let columns = reader
            .headers()
            .map_err(|e| Error::Format(e.to_string()))?
            .iter()
            .map(str::to_owned)
            .collect();
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| Error::Format(e.to_string()))?;
            let row = record
                .iter()
                .map(|c| c.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| {
                    let line = record.position().map_or(0, |p| p.line());
                    Error::Format(format!("line {line}: {e}"))
                })?;
            rows.push(row);
        }
        Ok(CsvTable { comments, columns, rows })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let i = self
            .columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Format(format!("missing column `{name}`")))?;
        Ok(self.rows.iter().map(|r| r[i]).collect())
    }
}

/// Serializes `value` as pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct StepEntry {
    pub power_W: f64,
    pub file: String,
}

/// Everything needed to re-run a scan bit-identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub config_sha256: String,
    pub scenario: ScenarioFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectrum_csv: Option<String>,
    pub seed: u64,
    pub protocol: ScanProtocol,
    pub period_m: f64,
    pub mean_velocity_m_per_s: f64,
    /// Recoil shift at the mean velocity in grating periods.
    pub shift_periods: f64,
    pub steps: Vec<StepEntry>,
}

impl Manifest {
    /// Rebuilds the scenario the record was simulated from.
    pub fn scenario(&self) -> Result<Scenario> {
        let s = Scenario::resolve_with_spectrum(self.scenario.clone(), self.spectrum_csv.clone())?;
        if s.hash() != self.config_sha256 {
            return Err(Error::Format("manifest hash does not match its scenario".into()));
        }
        Ok(s)
    }
}

fn step_file(index: usize) -> String {
    format!("step_{index:03}.csv")
}

/// Writes the record into `dir` (created if needed) and returns the
/// manifest.
pub fn write_record(dir: &Path, record: &ExperimentRecord, scenario: &Scenario, shift_periods: f64) -> Result<Manifest> {
    fs::create_dir_all(dir)?;
    let hash = scenario.hash();
    let mut steps = Vec::with_capacity(record.steps.len());
    for (i, step) in record.steps.iter().enumerate() {
        let mut table = CsvTable::new(&["position_m", "count"]);
        table
            .comment(format!("recoilspec scan step {i}"))
            .comment(format!("config_sha256 = {hash}"))
            .comment(format!("seed = {}", record.protocol.seed))
            .comment(format!("power_W = {}", step.power));
        for (x, c) in step.positions.iter().zip(&step.counts) {
            table.push(vec![*x, *c as f64]);
        }
        let name = step_file(i);
        table.write(&dir.join(&name))?;
        steps.push(StepEntry {
            power_W: step.power,
            file: name,
        });
    }
    let manifest = Manifest {
        format: RECORD_FORMAT.into(),
        config_sha256: hash,
        scenario: scenario.file.clone(),
        spectrum_csv: scenario.spectrum_text().map(str::to_owned),
        seed: record.protocol.seed,
        protocol: record.protocol.clone(),
        period_m: record.period,
        mean_velocity_m_per_s: record.mean_velocity,
        shift_periods,
        steps,
    };
    write_json(&dir.join(MANIFEST_NAME), &manifest)?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path: PathBuf = dir.join(MANIFEST_NAME);
    let text = fs::read_to_string(&path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    if manifest.format != RECORD_FORMAT {
        return Err(Error::Format(format!("unsupported record format `{}`", manifest.format)));
    }
    if manifest.steps.len() != manifest.protocol.power_steps.len() {
        return Err(Error::Format("manifest steps disagree with its protocol".into()));
    }
    Ok(manifest)
}

/// Loads a record written by [`write_record`].
pub fn read_record(dir: &Path) -> Result<(Manifest, ExperimentRecord)> {
    let manifest = read_manifest(dir)?;
    let mut steps = Vec::with_capacity(manifest.steps.len());
    for (entry, &power) in manifest.steps.iter().zip(&manifest.protocol.power_steps) {
        if entry.power_W != power {
            return Err(Error::Format(format!("{}: power disagrees with the protocol", entry.file)));
        }
        let table = CsvTable::read(&dir.join(&entry.file))?;
        let positions = table.column("position_m")?;
        let counts = table
            .column("count")?
            .into_iter()
            .map(|c| {
                if c >= 0.0 && c.fract() == 0.0 {
                    Ok(c as u64)
                } else {
                    Err(Error::Format(format!("{}: invalid count {c}", entry.file)))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        steps.push(PowerStep {
            power,
            positions,
            counts,
            fit: None,
        });
    }
    let record = ExperimentRecord {
        protocol: manifest.protocol.clone(),
        period: manifest.period_m,
        mean_velocity: manifest.mean_velocity_m_per_s,
        steps,
    };
    Ok((manifest, record))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let mut t = CsvTable::new(&["position_m", "signal"]);
        t.comment("first\nsecond");
        t.push(vec![2.66e-7, 0.1]);
        t.push(vec![1.0 / 3.0, 12345.0]);
        let text = t.render();
        assert!(text.starts_with("# first\n# second\nposition_m,signal\n"));
        assert!(!text.contains('\r'));
        let back = CsvTable::parse(&text).unwrap();
        assert_eq!(back.rows, t.rows);
        assert_eq!(back.comments, vec!["first", "second"]);
        assert!(CsvTable::parse("a,b\n1,2,3\n").is_err());
    }
}
