//! Open-set evaluation: confusion accounting, metrics and experiment protocols.

pub mod metrics;
pub mod protocol;

pub use metrics::{
    assemble_confusion, assemble_confusion_labels, closed_set_accuracy, macro_metrics, openness, openset_accuracy,
    MacroMetrics, OpenSetConfusion,
};
pub use protocol::{
    embed, evaluate_open, fmt_sig6, init_model, limited_csv, remap, report_csv, report_from_predictions, resolve_threshold,
    run_limited_sample_protocol, run_openness_sweep, separation_report, subsample_azimuth_blocks, subsample_per_class, sweep_csv, train_model,
    truths, ClassData, ExperimentConfig, LimitedRow, OpenSetPolicy, OpenSetReport, SeparationReport, SweepRow,
    Subsampling, ThresholdPolicy, TrainedModel, DEFAULT_CALIBRATION_Q,
};
