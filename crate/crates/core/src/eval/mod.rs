//! Metrics, the evaluation protocol, and reports.

mod metrics;
mod protocol;
mod report;

pub use metrics::{aeere, eere, extreme_mask, mae, mse, ExtremeConfig, MetricSet};
pub use protocol::{
    default_build_id, prepare_cell, run_protocol, unit_seed, Cell, CellRecord, FailedCell, NamedModel, PreparedCell,
    ProtocolGrid, ProtocolOptions,
};
pub use report::{
    rank_models, Averages, CellMean, EvaluationReport, MetricMeans, ModelAverage, RankEntry, Rankings, ReportMeta,
    StationAverage,
};
