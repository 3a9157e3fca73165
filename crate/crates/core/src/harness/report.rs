//! Evaluation reports: slices, files on disk and the summary table.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{read_dataset, write_dataset, Task};
use crate::levels::{Difficulty, LevelRef, Skill};

use super::eval::{aggregate, bucket_label, task_of, Aggregate, EpisodeRecord, EvalConfig, DEFAULT_SA_BUCKETS};
use super::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slice {
    pub key: String,
    pub aggregate: Aggregate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: Option<Task>,
    pub model: String,
    pub strategy: String,
    pub config: EvalConfig,
    pub overall: Aggregate,
    pub by_level: Vec<Slice>,
    /// Difficulty tier for benchmark levels, grid size for Plan environments.
    pub by_group: Vec<Slice>,
    pub by_skill: Vec<Slice>,
    /// Decompose only: rows grouped by help_count.
    pub by_sa_bucket: Vec<Slice>,
    #[serde(skip)]
    pub records: Vec<EpisodeRecord>,
}

const PLAN_SIZES: [&str; 4] = ["Small", "Medium", "Large", "Ultra"];

fn group_of(level_name: &str) -> Option<(usize, String)> {
    match LevelRef::parse(level_name).ok()? {
        LevelRef::Bench(l) => {
            let d = l.difficulty();
            let i = Difficulty::ALL.iter().position(|&x| x == d)?;
            Some((i, d.name().to_string()))
        }
        LevelRef::Plan(p) => {
            let name = p.size.name();
            let i = PLAN_SIZES.iter().position(|&s| s == name).unwrap_or(PLAN_SIZES.len());
            Some((10 + i, name.to_string()))
        }
    }
}

fn skills_of(level_name: &str) -> Vec<Skill> {
    match LevelRef::parse(level_name) {
        Ok(LevelRef::Bench(l)) => l.skills(),
        _ => Vec::new(),
    }
}

fn slices<K: Ord>(
    records: &[EpisodeRecord],
    cfg: &EvalConfig,
    keys: impl Fn(&EpisodeRecord) -> Vec<(K, String)>,
) -> Vec<Slice> {
    let mut groups: BTreeMap<K, (String, Vec<EpisodeRecord>)> = BTreeMap::new();
    for r in records {
        for (k, label) in keys(r) {
            groups.entry(k).or_insert_with(|| (label, Vec::new())).1.push(r.clone());
        }
    }
    groups
        .into_values()
        .map(|(key, rs)| Slice {
            key,
            aggregate: aggregate(&rs, cfg),
        })
        .collect()
}

pub fn build_report(records: Vec<EpisodeRecord>, model: &str, strategy: &str, cfg: EvalConfig) -> EvalReport {
    let task = task_of(&records);
    let by_sa_bucket = if task == Some(Task::Decompose) {
        slices(&records, &cfg, |r| {
            let l = r.limit().unwrap_or(0);
            let i = DEFAULT_SA_BUCKETS.iter().rposition(|&b| b <= l).unwrap_or(0);
            vec![(i, bucket_label(&DEFAULT_SA_BUCKETS, l))]
        })
    } else {
        Vec::new()
    };
    EvalReport {
        task,
        model: model.to_string(),
        strategy: strategy.to_string(),
        config: cfg,
        overall: aggregate(&records, &cfg),
        by_level: slices(&records, &cfg, |r| vec![(r.level_name.clone(), r.level_name.clone())]),
        by_group: slices(&records, &cfg, |r| group_of(&r.level_name).into_iter().collect()),
        by_skill: slices(&records, &cfg, |r| {
            skills_of(&r.level_name)
                .into_iter()
                .map(|s| (s, s.description().to_string()))
                .collect()
        }),
        by_sa_bucket,
        records,
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `records.jsonl`, `report.json`, `summary.txt` and `summary.csv`.
pub fn write_report(report: &EvalReport, dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    write_dataset(&report.records, &dir.join("records.jsonl"))?;
    let json = serde_json::to_string_pretty(report).expect("reports serialize");
    let path = dir.join("report.json");
    std::fs::write(&path, json + "\n").map_err(io(&path))?;
    let table = summary_table(std::slice::from_ref(report));
    let path = dir.join("summary.txt");
    std::fs::write(&path, table.text).map_err(io(&path))?;
    let path = dir.join("summary.csv");
    std::fs::write(&path, table.csv).map_err(io(&path))?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<EpisodeRecord>, HarnessError> {
    Ok(read_dataset(path)?)
}

pub struct SummaryTable {
    pub text: String,
    pub csv: String,
}

fn pct(x: Option<f64>) -> String {
    x.map(|v| format!("{:.2}", 100.0 * v)).unwrap_or_else(|| "-".into())
}

fn cell(task: Option<Task>, a: &Aggregate) -> String {
    match task {
        Some(Task::Decompose) => format!("{}/{}/{}", pct(a.cr), pct(a.pr), pct(a.aci)),
        _ => pct(Some(a.success_rate)),
    }
}

/// One row per report (model and strategy), one column per group plus the
/// overall figure. Cells are success rates in percent, or CR/PR/ACI for
/// Decompose.
pub fn summary_table(reports: &[EvalReport]) -> SummaryTable {
    let mut columns: Vec<String> = Vec::new();
    for r in reports {
        for s in &r.by_group {
            if !columns.contains(&s.key) {
                columns.push(s.key.clone());
            }
        }
    }
    columns.push("Overall".into());
    let header: Vec<String> = std::iter::once("Model".to_string()).chain(columns.iter().cloned()).collect();
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            let mut row = vec![format!("{} ({})", r.model, r.strategy)];
            for c in &columns {
                let agg = if c == "Overall" {
                    Some(&r.overall)
                } else {
                    r.by_group.iter().find(|s| &s.key == c).map(|s| &s.aggregate)
                };
                row.push(agg.map(|a| cell(r.task, a)).unwrap_or_else(|| "-".into()));
            }
            row
        })
        .collect();

    let widths: Vec<usize> = (0..header.len())
        .map(|i| {
            rows.iter()
                .map(|r| r[i].len())
                .chain(std::iter::once(header[i].len()))
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |cells: &[String]| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        padded.join("  ").trim_end().to_string()
    };
    let mut text = String::new();
    let metric = match reports.first().and_then(|r| r.task) {
        Some(Task::Decompose) => "CR/PR/ACI (%)",
        _ => "Success rate (%)",
    };
    let _ = writeln!(text, "{metric}");
    let _ = writeln!(text, "{}", line(&header));
    let _ = writeln!(text, "{}", widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
    for r in &rows {
        let _ = writeln!(text, "{}", line(r));
    }

    let esc = |s: &String| {
        if s.contains([',', '"']) {
            format!("\"{}\"", s.replace('"', "\"\""))
        } else {
            s.clone()
        }
    };
    let mut csv = String::new();
    for r in std::iter::once(&header).chain(rows.iter()) {
        let _ = writeln!(csv, "{}", r.iter().map(esc).collect::<Vec<_>>().join(","));
    }
    SummaryTable { text, csv }
}
