//! The active-learning loop, baselines, sweeps and their result files.

mod config;
mod metrics;
mod output;
mod run;
mod sweep;

pub use config::{
    AcquisitionConfig, AcquisitionFunction, DataConfig, DataSource, EvaluationConfig, ExperimentConfig, RunConfig,
    SamplingConfig, ScheduleConfig, SweepArm, SweepConfig, UncertaintyConfig, CONFIG_VERSION,
};
pub use metrics::{mean_std, rmse, sensors_to_reach, Reach};
pub use output::{
    export_plots, read_records, write_comparison, read_totals, write_run, write_sweep, write_totals, COMPARISON_FILE, CONFIG_FILE,
    PLOTS_DIR, RECORDS_FILE, SCORES_FILE, SENSORS_FILE, SUMMARY_FILE, TOTALS_FILE,
};
pub use run::{
    run_experiment, run_from_base, run_total_baseline, series_label, train_base, BaseState, Context, IterationRecord,
    ModelSnapshot, RunOutput, ScoreRow, TotalRecord, TrainedModel, Track,
};
pub use sweep::{compare, mean_curve, reach, run_sweep, sensor_table, total_means, ComparisonRow, SensorRow, SweepOutput};
