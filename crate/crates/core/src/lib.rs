//! Analytical cost model for distributed CNN training.
//!
//! Given a layer-by-layer model descriptor, a machine description
//! (network tiers, memory, data width) and measured per-layer compute
//! timings, the crate projects per-epoch training time, broken down by
//! phase (forward/backward compute, weight update, gradient exchange,
//! layer-wise collectives, halo exchange, stage-to-stage transfers),
//! and peak per-PE memory, for the serial baseline and for data,
//! spatial, layer/pipeline, filter, channel, data+filter and
//! data+spatial parallelism.
//!
//! Every closed form is paired with a discrete micro-simulator in
//! [`sim`] that replays the underlying schedule step by step; the
//! [`verify`] module compares both routes over randomized instances.

pub mod calibrate;
pub mod cost;
pub mod model;
pub mod recommend;
pub mod report;
pub mod sim;
pub mod strategies;
pub mod verify;

pub use calibrate::{
    fit_alpha_beta, fit_tiers, load_layer_timings, parse_benchmarks, BenchmarkSample, CalibError,
    CalibrationProfile, LayerTiming,
};
pub use cost::{
    parse_system, select_params, select_params_for, t_allgather_ring, t_allreduce,
    t_allreduce_ring, t_allreduce_tree, t_p2p, t_reduce_to_leader, CommParams, CommPattern,
    CostError, NetworkTier, SystemDescriptor,
};
pub use model::{
    adapt_layer, infer_output_shape, layer_counts, parse_model, LayerCounts, LayerDescriptor,
    LayerKind, ModelDescriptor, ModelError, TensorShape,
};
pub use recommend::{recommend, RecommendOptions, Recommendation, Rejection};
pub use report::{
    emit_breakdown, load_measured_run, load_prediction_csv, projection_accuracy, Accuracy,
    BreakdownFormat, MeasuredRun, ReportError,
};
pub use strategies::{
    check_feasibility, halo_elements, max_pe_limit, parse_strategy, partition_pipeline_balanced,
    predict, predict_channel, predict_data, predict_data_filter, predict_data_spatial,
    predict_filter, predict_layer_pure, predict_pipeline, predict_serial, predict_spatial,
    Feasibility, InfeasibleReason, LayerGroups, PePosition, PhaseLabel, PhaseTimes, PredictError,
    Prediction, StrategyConfig,
};
