//! Evaluation harness: leave-one-room-out folds, metrics tables, baseline
//! rows, report rendering and the streaming tracker.

pub mod baselines;
pub mod folds;
pub mod loocv;
pub mod metrics;
pub mod report;
pub mod tracker;

pub use baselines::evaluate_baselines;
pub use folds::{plan_folds, AccessAudit, FoldPlan};
pub use loocv::{cache_manifest, loocv, loocv_seeds, prepare, run_loocv, train_full, FoldResult, LoocvReport, PreparedData};
pub use metrics::{Cell, MetricsTable, Outcome, Overall};
pub use report::{FoldEntry, Report, ReportFormat};
pub use tracker::{
    stream_track, tracking_success, AudioSource, ClipSource, ModelDetector, PanSink, SimulatedPanSink, TrackOutcome,
    TrackerConfig, WindowDetector,
};

impl Report {
    /// Detector rows from LOOCV runs (median over seeds) plus baseline rows.
    pub fn from_runs(runs: &[LoocvReport], detector: MetricsTable, baselines: Vec<MetricsTable>) -> Self {
        let mut tables = vec![detector];
        tables.extend(baselines);
        Self {
            seeds: runs.iter().map(|r| r.seed).collect(),
            tables,
            folds: runs
                .iter()
                .flat_map(|r| {
                    r.folds.iter().map(move |f| FoldEntry {
                        seed: r.seed,
                        held_out_room: f.plan.held_out_room.clone(),
                        w_backsub: f.w_backsub,
                        table: f.table.clone(),
                    })
                })
                .collect(),
        }
    }
}
