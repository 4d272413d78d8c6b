use std::fs;
use std::path::Path;

use super::classify::run_classification;
use super::config::{AblationMode, PipelineConfig, Task};
use super::identify::run_identification;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub name: String,
    /// Toggles from the lattice that are on in this row.
    pub enabled: Vec<String>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationTable {
    pub metric: &'static str,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    /// `row<TAB>stages<TAB>metric<TAB>value<TAB>delta`, delta against the
    /// previous row in incremental tables and the first row otherwise.
    pub fn to_tsv(&self, mode: AblationMode) -> String {
        let mut out = String::from("row\tstages\tmetric\tvalue\tdelta\n");
        for (i, row) in self.rows.iter().enumerate() {
            let reference = match (i, mode) {
                (0, _) => row.value,
                (_, AblationMode::Incremental) => self.rows[i - 1].value,
                (_, AblationMode::Individual) => self.rows[0].value,
            };
            let stages = if row.enabled.is_empty() { "-".to_string() } else { row.enabled.join(",") };
            out.push_str(&format!(
                "{}\t{stages}\t{}\t{:.6}\t{:+.6}\n",
                row.name,
                self.metric,
                row.value,
                row.value - reference
            ));
        }
        out
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.name == name).map(|r| r.value)
    }
}

/// The configurations of the toggle lattice, in row order. Toggles outside
/// the lattice keep their configured values.
pub fn lattice(config: &PipelineConfig) -> Result<Vec<(String, Vec<String>, PipelineConfig)>> {
    let toggles = &config.ablation.toggles;
    if toggles.is_empty() {
        return Err(Error::Config("ablation.toggles must name at least one stage".into()));
    }
    let mut base = config.clone();
    for t in toggles {
        base.stages.set(t, false)?;
    }
    let mut rows = vec![("baseline".to_string(), Vec::new(), base.clone())];
    for (i, t) in toggles.iter().enumerate() {
        let enabled: Vec<String> = match config.ablation.mode {
            AblationMode::Incremental => toggles[..=i].to_vec(),
            AblationMode::Individual => vec![t.clone()],
        };
        let mut c = base.clone();
        for e in &enabled {
            c.stages.set(e, true)?;
        }
        rows.push((format!("+{t}"), enabled, c));
    }
    Ok(rows)
}

/// Span F1 for identification, micro F1 for classification.
pub fn headline_metric(config: &PipelineConfig) -> Result<f64> {
    match config.ablation.task {
        Task::Identification => run_identification(config)?
            .span
            .map(|s| s.f1)
            .ok_or_else(|| Error::Config("ablation needs paths.annotations to score against".into())),
        Task::Classification => Ok(run_classification(config)?.micro_f1()),
    }
}

pub fn ablate(config: &PipelineConfig) -> Result<AblationTable> {
    let metric = match config.ablation.task {
        Task::Identification => "span_f1",
        Task::Classification => "micro_f1",
    };
    let rows = lattice(config)?
        .into_iter()
        .map(|(name, enabled, c)| {
            Ok(AblationRow {
                name,
                enabled,
                value: headline_metric(&c)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AblationTable { metric, rows })
}

pub fn write_ablation(table: &AblationTable, mode: AblationMode, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let path = out_dir.join("ablation.tsv");
    fs::write(&path, table.to_tsv(mode)).map_err(|e| Error::io(&path, e))
}
