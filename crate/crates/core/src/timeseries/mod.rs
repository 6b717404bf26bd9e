//! Benchmark generators, CSV ingestion, imputation, invertible
//! preprocessing and supervised dataset assembly.

mod analysis;
mod dataset;
mod generators;
mod impute;
mod series;
mod transform;

pub use analysis::{autocorrelation, first_zero_crossing};
pub use dataset::{
    build_supervised, DataPreset, DatasetSpec, SplitBounds, SplitSpec, SyntheticTask, TaskDataset,
    NARMA_ORDER,
};
pub use generators::{
    gen_mackey_glass, gen_mso, gen_narma, gen_narma_scaled, mackey_glass_derivative, mso_value,
    narma_response, MackeyGlass, Narma, NARMA_INPUT_MAX,
};
pub use impute::{impute_adjacent_weeks, impute_spline, ImputeReport, NaturalSpline};
pub use series::{
    load_csv, parse_timestamp, read_csv, synthetic_epoch, Channel, CsvSchema, Quality, RawSeries,
};
pub use transform::{
    close, invert_log, invert_seasonal, invert_zscore, log_transform, seasonal_difference,
    total_lag, zscore, Pipeline, TransformStep, ZStats,
};
