use std::collections::BTreeMap;
use std::fmt::Write;
use std::path::Path;

use super::{ExperimentError, TrialRecord};
use crate::hde::{perfect_count, to_f64};
use crate::search::PipelineKind;

/// Summary of one (domain, pipeline) cell. The aggregate row uses the domain
/// name `aggregate` and carries no SEM.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub domain: String,
    pub pipeline: PipelineKind,
    pub trials: usize,
    pub mean_pct: f64,
    pub sem_pct: Option<f64>,
    pub perfect: usize,
}

impl ReportRow {
    /// `75.0±25.0`, or just the mean without a SEM.
    pub fn cell(&self) -> String {
        match self.sem_pct {
            Some(s) => format!("{:.1}±{:.1}", self.mean_pct, s),
            None => format!("{:.1}", self.mean_pct),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub rows: Vec<ReportRow>,
    pub aggregate: Vec<ReportRow>,
}

fn mean_sem(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Mean HDE in percent with its standard error and the count of exact
/// 1.0 scores, per domain and pipeline. Aggregate rows average the domain
/// means and sum the perfect counts.
pub fn report(records: &[TrialRecord]) -> Report {
    let mut cells: BTreeMap<(String, PipelineKind), Vec<&TrialRecord>> = BTreeMap::new();
    for r in records {
        cells
            .entry((r.coord.domain.clone(), r.coord.pipeline))
            .or_default()
            .push(r);
    }
    let rows: Vec<ReportRow> = cells
        .into_iter()
        .map(|((domain, pipeline), rs)| {
            let exact: Vec<_> = rs.iter().map(|r| r.exact_score()).collect();
            let pct: Vec<f64> = exact.iter().map(|f| 100.0 * to_f64(*f)).collect();
            let (mean_pct, sem) = mean_sem(&pct);
            ReportRow {
                domain,
                pipeline,
                trials: rs.len(),
                mean_pct,
                sem_pct: Some(sem),
                perfect: perfect_count(&exact),
            }
        })
        .collect();
    let aggregate = PipelineKind::ALL
        .iter()
        .filter_map(|&p| {
            let mine: Vec<&ReportRow> = rows.iter().filter(|r| r.pipeline == p).collect();
            (!mine.is_empty()).then(|| ReportRow {
                domain: "aggregate".into(),
                pipeline: p,
                trials: mine.iter().map(|r| r.trials).sum(),
                mean_pct: mine.iter().map(|r| r.mean_pct).sum::<f64>() / mine.len() as f64,
                sem_pct: None,
                perfect: mine.iter().map(|r| r.perfect).sum(),
            })
        })
        .collect();
    Report { rows, aggregate }
}

impl Report {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("domain,pipeline,trials,mean_pct,sem_pct,perfect\n");
        for r in self.rows.iter().chain(&self.aggregate) {
            let sem = r.sem_pct.map_or_else(String::new, |v| format!("{v:.1}"));
            let _ = writeln!(
                s,
                "{},{},{},{:.1},{},{}",
                r.domain, r.pipeline, r.trials, r.mean_pct, sem, r.perfect
            );
        }
        s
    }

    /// Domains down, pipelines across; each pipeline has an HDE column and
    /// a perfect-count column.
    pub fn to_table(&self) -> String {
        let pipelines: Vec<PipelineKind> = PipelineKind::ALL
            .into_iter()
            .filter(|p| self.aggregate.iter().any(|r| r.pipeline == *p))
            .collect();
        let mut domains: Vec<&str> = self.rows.iter().map(|r| r.domain.as_str()).collect();
        domains.dedup();
        let mut grid: Vec<Vec<String>> = Vec::new();
        let mut header = vec!["domain".to_string()];
        for p in &pipelines {
            header.push(format!("{p} hde%"));
            header.push(format!("{p} perfect"));
        }
        grid.push(header);
        let row_for = |name: &str, rows: &[ReportRow]| {
            let mut line = vec![name.to_string()];
            for p in &pipelines {
                match rows.iter().find(|r| r.pipeline == *p && r.domain == name) {
                    Some(r) => {
                        line.push(r.cell());
                        line.push(r.perfect.to_string());
                    }
                    None => line.extend(["-".to_string(), "-".to_string()]),
                }
            }
            line
        };
        for d in domains {
            grid.push(row_for(d, &self.rows));
        }
        grid.push(row_for("aggregate", &self.aggregate));
        let widths: Vec<usize> = (0..grid[0].len())
            .map(|c| grid.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut s = String::new();
        for line in &grid {
            let cells: Vec<String> = line
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
                .collect();
            s.push_str(cells.join("  ").trim_end());
            s.push('\n');
        }
        s
    }
}

/// Parses a JSONL record file, skipping blank lines.
pub fn read_records(path: &Path) -> Result<Vec<TrialRecord>, ExperimentError> {
    let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| ExperimentError::Parse {
                path: path.to_path_buf(),
                error: format!("line {}: {e}", i + 1),
            })
        })
        .collect()
}
