//! File formats: binary checkpoints, the metrics CSV and SVG charts.

pub mod checkpoint;
pub mod metrics;
pub mod svg;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CheckpointError};
pub use metrics::{parse_metrics_csv, write_metrics_csv, MetricsError, METRICS_HEADER};
pub use svg::{parse_chart_svg, parse_trace_svg, render_goal_rate_chart, render_trace_svg, PlotError};
