//! Closed-form per-epoch predictors for every parallelization strategy:
//! compute time, per-phase communication time, peak per-PE memory,
//! scaling limits and feasibility.

pub mod config;
pub mod halo;
mod predict;

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::cost::CostError;
use crate::model::{layer_counts, LayerKind, ModelDescriptor, ModelError};

pub use config::{parse_strategy, validate_groups, LayerGroups, StrategyConfig};
pub use halo::{halo_elements, halo_volume, PePosition};
pub use predict::{
    partition_pipeline_balanced, predict, predict_channel, predict_data, predict_data_filter,
    predict_data_spatial, predict_filter, predict_layer_pure, predict_pipeline, predict_serial,
    predict_spatial, spatial_prefix_len,
};

/// Shared plumbing for the simulation oracles in [`crate::sim`].
pub(crate) mod predict_internals {
    pub(crate) use super::predict::{mem_scale, Ctx};

    pub(crate) fn spatial_prefix_ctx(ctx: &Ctx) -> usize {
        ctx.prefix
    }
}

#[derive(Debug, Error)]
pub enum PredictError {
    #[error("invalid strategy configuration: {0}")]
    InvalidConfig(String),
    #[error("spatial split too fine: axis {axis} leaves {extent} elements, halo needs {halo}")]
    SplitTooFine { axis: usize, extent: u64, halo: u64 },
    #[error("no timing for layer `{0}` and the profile declares no default")]
    MissingTiming(String),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Communication phases of one training iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PhaseLabel {
    GeAllreduce,
    FbAllgather,
    FbAllreduce,
    FbHalo,
    FbP2p,
}

impl PhaseLabel {
    pub const ALL: [PhaseLabel; 5] = [
        PhaseLabel::GeAllreduce,
        PhaseLabel::FbAllgather,
        PhaseLabel::FbAllreduce,
        PhaseLabel::FbHalo,
        PhaseLabel::FbP2p,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PhaseLabel::GeAllreduce => "ge_allreduce",
            PhaseLabel::FbAllgather => "fb_allgather",
            PhaseLabel::FbAllreduce => "fb_allreduce",
            PhaseLabel::FbHalo => "fb_halo",
            PhaseLabel::FbP2p => "fb_p2p",
        }
    }
}

impl fmt::Display for PhaseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-phase communication seconds per epoch.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct PhaseTimes {
    pub ge_allreduce: f64,
    pub fb_allgather: f64,
    pub fb_allreduce: f64,
    pub fb_halo: f64,
    pub fb_p2p: f64,
}

impl PhaseTimes {
    pub fn zero() -> Self {
        PhaseTimes::default()
    }

    pub fn get(&self, label: PhaseLabel) -> f64 {
        match label {
            PhaseLabel::GeAllreduce => self.ge_allreduce,
            PhaseLabel::FbAllgather => self.fb_allgather,
            PhaseLabel::FbAllreduce => self.fb_allreduce,
            PhaseLabel::FbHalo => self.fb_halo,
            PhaseLabel::FbP2p => self.fb_p2p,
        }
    }

    pub fn total(&self) -> f64 {
        self.ge_allreduce + self.fb_allgather + self.fb_allreduce + self.fb_halo + self.fb_p2p
    }

    pub fn iter(&self) -> impl Iterator<Item = (PhaseLabel, f64)> + '_ {
        PhaseLabel::ALL.into_iter().map(move |label| (label, self.get(label)))
    }
}

/// Why a configuration cannot run.
#[derive(Debug, Clone, PartialEq)]
pub enum InfeasibleReason {
    ScalingLimit { constraint: String, requested: u64, limit: u64 },
    Memory { required: f64, capacity: f64 },
}

impl fmt::Display for InfeasibleReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InfeasibleReason::ScalingLimit { constraint, requested, limit } => {
                write!(f, "scaling limit: {constraint} allows {limit} PEs, requested {requested}")
            }
            InfeasibleReason::Memory { required, capacity } => write!(
                f,
                "memory: needs {:.3} GB per PE, capacity {:.3} GB",
                required / 1e9,
                capacity / 1e9
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Feasibility {
    Feasible,
    Infeasible(InfeasibleReason),
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible)
    }
}

/// Per-epoch projection of one (model, system, strategy) triple.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub strategy: StrategyConfig,
    pub p_used: u64,
    /// Forward+backward compute seconds per epoch.
    pub t_fb: f64,
    /// Weight-update seconds per epoch.
    pub t_wu: f64,
    pub comm: PhaseTimes,
    /// Peak bytes per PE.
    pub mem_bytes: f64,
    pub feasibility: Feasibility,
}

impl Prediction {
    pub fn t_comp(&self) -> f64 {
        self.t_fb + self.t_wu
    }

    pub fn t_comm_total(&self) -> f64 {
        self.comm.total()
    }

    pub fn total(&self) -> f64 {
        self.t_comp() + self.comm.total()
    }
}

fn first_fc(model: &ModelDescriptor) -> usize {
    model
        .layers
        .iter()
        .position(|l| l.kind == LayerKind::FullyConnected)
        .unwrap_or(model.layers.len())
}

fn min_spatial_product(model: &ModelDescriptor) -> u64 {
    let prefix = first_fc(model);
    model.layers[..prefix]
        .iter()
        .map(|l| l.input_shape.elems())
        .min()
        .unwrap_or(1)
}

fn min_filters(model: &ModelDescriptor) -> u64 {
    model
        .layers
        .iter()
        .map(|l| {
            if matches!(l.kind, LayerKind::ElementWise | LayerKind::Norm) {
                l.in_channels
            } else {
                l.out_channels
            }
        })
        .min()
        .unwrap_or(1)
}

fn min_channels_from(model: &ModelDescriptor, first_layer: usize) -> u64 {
    model.layers[first_layer.min(model.layers.len())..]
        .iter()
        .map(|l| l.in_channels)
        .min()
        .unwrap_or(1)
}

/// The largest PE count a strategy kind admits on this model: the
/// mini-batch for data, the smallest spatially split extent product for
/// spatial, the layer count for depth-wise strategies, the smallest
/// filter/channel count for the width-wise ones, and products of these
/// for the hybrids.
pub fn max_pe_limit(model: &ModelDescriptor, cfg: &StrategyConfig) -> u64 {
    match cfg {
        StrategyConfig::Serial => 1,
        StrategyConfig::Data { .. } => model.batch_size,
        StrategyConfig::Spatial { .. } => min_spatial_product(model),
        StrategyConfig::LayerPure { .. } | StrategyConfig::Pipeline { .. } => {
            model.layers.len() as u64
        }
        StrategyConfig::Filter { .. } => min_filters(model),
        StrategyConfig::Channel { first_layer, .. } => min_channels_from(model, *first_layer),
        StrategyConfig::DataFilter { .. } => model.batch_size * min_filters(model),
        StrategyConfig::DataSpatial { .. } => model.batch_size * min_spatial_product(model),
    }
}

fn scaling_violation(constraint: &str, requested: u64, limit: u64) -> Option<InfeasibleReason> {
    (requested > limit).then(|| InfeasibleReason::ScalingLimit {
        constraint: constraint.to_string(),
        requested,
        limit,
    })
}

/// Per-component scaling check for a configuration; `None` when every
/// bound holds.
pub fn scaling_check(model: &ModelDescriptor, cfg: &StrategyConfig) -> Option<InfeasibleReason> {
    match cfg {
        StrategyConfig::Serial => None,
        StrategyConfig::Data { p } => scaling_violation("mini-batch size", *p, model.batch_size),
        StrategyConfig::Spatial { pw, ph, pd } => {
            scaling_violation("spatial extent product", pw * ph * pd, min_spatial_product(model))
                .or_else(|| split_fits(model, &[*pw, *ph, *pd]))
        }
        StrategyConfig::LayerPure { p, .. } | StrategyConfig::Pipeline { p, .. } => {
            scaling_violation("layer count", *p, model.layers.len() as u64)
        }
        StrategyConfig::Filter { p } => {
            scaling_violation("minimum filter count", *p, min_filters(model))
        }
        StrategyConfig::Channel { p, first_layer } => scaling_violation(
            "minimum channel count",
            *p,
            min_channels_from(model, *first_layer),
        ),
        StrategyConfig::DataFilter { p1, p2 } => {
            scaling_violation("mini-batch size (p1)", *p1, model.batch_size)
                .or_else(|| scaling_violation("minimum filter count (p2)", *p2, min_filters(model)))
        }
        StrategyConfig::DataSpatial { p1, pw, ph, pd } => {
            scaling_violation("mini-batch size (p1)", *p1, model.batch_size)
                .or_else(|| {
                    scaling_violation(
                        "spatial extent product (p2)",
                        pw * ph * pd,
                        min_spatial_product(model),
                    )
                })
                .or_else(|| split_fits(model, &[*pw, *ph, *pd]))
        }
    }
}

/// Every spatially split layer must keep at least one element per PE on
/// every split axis.
fn split_fits(model: &ModelDescriptor, split: &[u64]) -> Option<InfeasibleReason> {
    let prefix = first_fc(model);
    for layer in &model.layers[..prefix] {
        for (axis, &extent) in layer.input_shape.dims().iter().enumerate() {
            let parts = split.get(axis).copied().unwrap_or(1);
            if parts > extent {
                return Some(InfeasibleReason::ScalingLimit {
                    constraint: format!("axis {axis} extent of layer `{}`", layer.name),
                    requested: parts,
                    limit: extent,
                });
            }
        }
        if split.len() > layer.input_shape.rank() {
            for (axis, &parts) in split.iter().enumerate().skip(layer.input_shape.rank()) {
                if parts > 1 {
                    return Some(InfeasibleReason::ScalingLimit {
                        constraint: format!(
                            "layer `{}` has no spatial axis {axis} to split",
                            layer.name
                        ),
                        requested: parts,
                        limit: 1,
                    });
                }
            }
        }
    }
    None
}

/// Combines the scaling bound and the memory bound; memory exactly at
/// capacity is feasible.
pub fn check_feasibility(
    model: &ModelDescriptor,
    system: &crate::cost::SystemDescriptor,
    cfg: &StrategyConfig,
    mem_bytes: f64,
) -> Feasibility {
    if let Some(reason) = scaling_check(model, cfg) {
        return Feasibility::Infeasible(reason);
    }
    if mem_bytes > system.pe_memory_capacity {
        return Feasibility::Infeasible(InfeasibleReason::Memory {
            required: mem_bytes,
            capacity: system.pe_memory_capacity,
        });
    }
    Feasibility::Feasible
}

/// Parameter-count helper shared by tests and the CLI: total elements of
/// weights and biases.
pub fn total_weight_elems(model: &ModelDescriptor) -> Result<u64, ModelError> {
    Ok(layer_counts(model)?.iter().map(|c| c.w_elems).sum())
}
