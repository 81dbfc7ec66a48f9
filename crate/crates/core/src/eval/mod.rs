//! Dataset rendering, error metrics, tracking and method comparison.

mod compare;
mod metrics;
mod render;
mod track;

pub use compare::{compare_reports, run_comparison, Comparison, ComparisonRow, ComparisonRun};
pub use metrics::{
    angular_error, evaluate, mean, median, tolerance_accuracy, EvalReport, RecordResult, Summary, THRESHOLDS_DEG,
};
pub use render::{render_dataset, render_scene, Manifest, Method, RenderConfig, SampleRecord, SpeechSource};
pub use track::{track, TrackResult, Tracker, WINDOW_FRAMES};
