//! Machine-readable run report.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use sdae_ivs::ivs::StopReason;
use sdae_ivs::ErrorReport;

use crate::config::{ExperimentConfig, Pipeline};

/// Everything a run measured. Serialized without the wall time, which goes to
/// a separate file so identical runs produce identical reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub data: DataSummary,
    pub results: Vec<ResultRow>,
    pub ivs: Vec<IvsSummary>,
    /// Paths relative to the output directory.
    pub artifacts: Vec<String>,
    pub config: ExperimentConfig,
    #[serde(skip)]
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    pub num_vars: usize,
    pub num_classes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub pipeline: Pipeline,
    pub depth: usize,
    /// Inputs kept by each layer's mask.
    pub layer_popcounts: Vec<usize>,
    pub fine_tune_best_epoch: usize,
    pub valid: ErrorReport,
    pub test: ErrorReport,
    /// Test error as `"pp.pp±pp.pp"` percent.
    pub test_percent: String,
    /// Fine-tuned model.
    pub model: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IvsSummary {
    pub pipeline: Pipeline,
    /// 1-based layer; 0 for a standalone selection on the raw input.
    pub layer: usize,
    pub input_width: usize,
    pub final_popcount: usize,
    pub stop: StopReason,
    pub history: Vec<HistoryRow>,
    pub history_csv: String,
    pub importance_csv: String,
    pub importance_pgm: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub iteration: usize,
    pub popcount: usize,
    pub valid_error: f64,
}

impl RunReport {
    pub fn result(&self, pipeline: Pipeline, depth: usize) -> Option<&ResultRow> {
        self.results
            .iter()
            .find(|r| r.pipeline == pipeline && r.depth == depth)
    }

    /// Test errors by depth, one column per pipeline, in percent.
    pub fn table_csv(&self) -> String {
        let pipelines = &self.config.experiment.pipelines;
        let mut depths: Vec<usize> = self.results.iter().map(|r| r.depth).collect();
        depths.sort_unstable();
        depths.dedup();
        let mut s = String::from("depth");
        for p in pipelines {
            write!(s, ",{}", p.name()).unwrap();
        }
        s.push('\n');
        for d in depths {
            write!(s, "{d}").unwrap();
            for &p in pipelines {
                let cell = self.result(p, d).map_or(String::new(), |r| r.test_percent.clone());
                write!(s, ",{cell}").unwrap();
            }
            s.push('\n');
        }
        s
    }
}
