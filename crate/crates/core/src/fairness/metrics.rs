use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Prediction scores split by sensitive attribute and true label.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroupedScores {
    /// `cells[a][y]` holds the scores of samples with attribute `a`, label `y`.
    cells: [[Vec<f64>; 2]; 2],
}

impl GroupedScores {
    /// Scores must lie in `[0, 1]`; labels and attributes must be binary.
    pub fn new(scores: &[f64], labels: &[usize], attrs: &[u8]) -> Result<Self> {
        if scores.len() != labels.len() || scores.len() != attrs.len() {
            return Err(Error::Validation(format!(
                "{} scores, {} labels, {} attributes",
                scores.len(),
                labels.len(),
                attrs.len()
            )));
        }
        let mut cells: [[Vec<f64>; 2]; 2] = Default::default();
        for ((&s, &y), &a) in scores.iter().zip(labels).zip(attrs) {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::Validation(format!("score {s} outside [0, 1]")));
            }
            if y > 1 || a > 1 {
                return Err(Error::Validation("labels and attributes must be binary".into()));
            }
            cells[usize::from(a)][y].push(s);
        }
        Ok(Self { cells })
    }

    /// Builds directly from cells `[a][y]`.
    pub fn from_cells(cells: [[Vec<f64>; 2]; 2]) -> Result<Self> {
        if cells
            .iter()
            .flatten()
            .flatten()
            .any(|s| !(0.0..=1.0).contains(s))
        {
            return Err(Error::Validation("score outside [0, 1]".into()));
        }
        Ok(Self { cells })
    }

    pub fn cell(&self, a: u8, y: usize) -> &[f64] {
        &self.cells[usize::from(a)][y]
    }

    /// All scores of attribute group `a`.
    pub fn group(&self, a: u8) -> impl Iterator<Item = f64> + '_ {
        let [c0, c1] = &self.cells[usize::from(a)];
        c0.iter().chain(c1).copied()
    }

    pub fn swapped(&self) -> Self {
        let mut cells = self.cells.clone();
        cells.swap(0, 1);
        Self { cells }
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// `|mean(Q0) - mean(Q1)|`.
pub fn delta_dp(g: &GroupedScores) -> Result<f64> {
    match (mean(g.group(0)), mean(g.group(1))) {
        (Some(m0), Some(m1)) => Ok((m0 - m1).abs()),
        _ => Err(Error::MetricUndefined(
            "demographic parity needs both sensitive groups".into(),
        )),
    }
}

/// Equalized-odds gap of one task.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EoGap {
    pub value: f64,
    /// Set when one label's term was skipped for an empty cell.
    pub partial: bool,
}

/// `sum_y |mean(Q0^y) - mean(Q1^y)|`, skipping a label whose cells are not
/// both populated.
pub fn delta_eo(g: &GroupedScores) -> Result<EoGap> {
    let mut value = 0.0;
    let mut terms = 0;
    for y in 0..2 {
        if let (Some(m0), Some(m1)) = (
            mean(g.cell(0, y).iter().copied()),
            mean(g.cell(1, y).iter().copied()),
        ) {
            value += (m0 - m1).abs();
            terms += 1;
        }
    }
    if terms == 0 {
        return Err(Error::MetricUndefined(
            "equalized odds needs both groups present for at least one label".into(),
        ));
    }
    Ok(EoGap {
        value,
        partial: terms < 2,
    })
}

/// Metrics of one meta-test task. Field names are the JSONL keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskMetrics {
    pub task_id: usize,
    pub dp: f64,
    /// `None` when neither label had both groups in the query.
    pub eo: Option<f64>,
    pub acc: f64,
    /// Set when the equalized-odds gap is missing a term or undefined.
    pub partial: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Population mean and standard deviation; NaN-free (zero) for no data.
    pub fn of(xs: &[f64]) -> Self {
        if xs.is_empty() {
            return Self { mean: 0.0, std: 0.0 };
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt(),
        }
    }
}

/// Aggregates over all tasks. `eo` averages the tasks where the gap is
/// defined; `eo_complete` only the tasks with both label terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub tasks: usize,
    pub partial_tasks: usize,
    pub dp: MeanStd,
    pub eo: MeanStd,
    pub eo_complete: MeanStd,
    pub acc: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsReport {
    pub tasks: Vec<TaskMetrics>,
}

impl MetricsReport {
    pub fn summary(&self) -> MetricsSummary {
        let col = |f: fn(&TaskMetrics) -> f64| self.tasks.iter().map(f).collect::<Vec<_>>();
        let eo: Vec<f64> = self.tasks.iter().filter_map(|t| t.eo).collect();
        let complete: Vec<f64> = self
            .tasks
            .iter()
            .filter(|t| !t.partial)
            .filter_map(|t| t.eo)
            .collect();
        MetricsSummary {
            tasks: self.tasks.len(),
            partial_tasks: self.tasks.iter().filter(|t| t.partial).count(),
            dp: MeanStd::of(&col(|t| t.dp)),
            eo: MeanStd::of(&eo),
            eo_complete: MeanStd::of(&complete),
            acc: MeanStd::of(&col(|t| t.acc)),
        }
    }

    /// One JSON object per line, in task order.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for t in &self.tasks {
            out.push_str(&serde_json::to_string(t)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let tasks = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<std::result::Result<Vec<TaskMetrics>, _>>()?;
        Ok(Self { tasks })
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_jsonl()?.as_bytes())?;
        Ok(())
    }
}
