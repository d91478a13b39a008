//! Decision variables, connection-type block tables, measurement handling
//! and the differenced voltage model.

mod assignment;
mod delta;
mod measurement;
mod model;
mod tables;

pub use assignment::PhaseAssignment;
pub use delta::{balanced_pair_magnitude, line_to_line_delta, line_to_line_magnitude, split_delta_power};
pub use measurement::{
    difference_series, format_time, parse_time, DifferencedSeries, IngestOptions, MeasurementSet, MeterReadings,
    Segment, TopologySchedule, SUBSTATION_CHANNELS, SUBSTATION_PREFIX,
};
pub use model::{
    joint_objective, load_residuals, marginal_objective, marginal_objectives, model_voltage_delta,
};
pub use tables::{
    build_block_tables, build_reduced_sensitivity, build_reduced_sensitivity_dense, map_injections, w1, w2,
    BlockTables, LoadBlocks, ReducedSensitivity,
};
