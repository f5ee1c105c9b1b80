//! Enumerates candidate configurations under a PE budget, filters by
//! feasibility, and ranks the survivors by total epoch time.

use crate::calibrate::CalibrationProfile;
use crate::cost::SystemDescriptor;
use crate::model::{LayerKind, ModelDescriptor};
use crate::strategies::{
    predict, Feasibility, InfeasibleReason, Prediction, StrategyConfig,
};

#[derive(Debug, Clone)]
pub struct RecommendOptions {
    /// Largest PE count to consider.
    pub budget: u64,
    /// Sweep every integer count instead of powers of two.
    pub dense: bool,
    /// Overrides the system's per-PE memory capacity in bytes.
    pub memory_cap: Option<f64>,
}

impl RecommendOptions {
    pub fn new(budget: u64) -> Self {
        RecommendOptions { budget, dense: false, memory_cap: None }
    }
}

/// Why a candidate fell out of the ranking.
#[derive(Debug, Clone)]
pub enum RejectCause {
    Infeasible(InfeasibleReason),
    Error(String),
}

#[derive(Debug, Clone)]
pub struct Rejection {
    pub strategy: StrategyConfig,
    pub cause: RejectCause,
}

/// Feasible configurations ranked by total epoch time (ties: lower
/// memory, then fewer PEs, then the configuration string), plus the
/// full rejection log. An empty ranking with a populated log means no
/// candidate fits.
#[derive(Debug, Clone, Default)]
pub struct Recommendation {
    pub ranked: Vec<Prediction>,
    pub rejected: Vec<Rejection>,
}

fn pe_candidates(budget: u64, dense: bool) -> Vec<u64> {
    if dense {
        (2..=budget).collect()
    } else {
        let mut out = Vec::new();
        let mut p = 2;
        while p <= budget {
            out.push(p);
            p *= 2;
        }
        out
    }
}

fn divisors(n: u64, cap: u64) -> Vec<u64> {
    (2..=n.min(cap)).filter(|d| n.is_multiple_of(*d)).collect()
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

fn min_channels(model: &ModelDescriptor, first_layer: usize) -> u64 {
    model.layers[first_layer.min(model.layers.len())..]
        .iter()
        .map(|l| l.in_channels)
        .min()
        .unwrap_or(1)
}

/// Splits `p = 2^k` across the sample's spatial axes, widest first.
fn balanced_split(p: u64, rank: usize) -> (u64, u64, u64) {
    let mut parts = [1u64; 3];
    let mut remaining = p;
    let mut axis = 0;
    while remaining > 1 {
        parts[axis % rank.min(3)] *= 2;
        remaining /= 2;
        axis += 1;
    }
    (parts[0], parts[1], parts[2])
}

fn spatial_splits(p: u64, rank: usize, dense: bool) -> Vec<(u64, u64, u64)> {
    if !dense {
        return vec![balanced_split(p, rank)];
    }
    let mut out = Vec::new();
    for pw in (1..=p).filter(|w| p.is_multiple_of(*w)) {
        let rest = p / pw;
        for ph in (1..=rest).filter(|h| rest.is_multiple_of(*h)) {
            let pd = rest / ph;
            if (ph > 1 && rank < 2) || (pd > 1 && rank < 3) {
                continue;
            }
            out.push((pw, ph, pd));
        }
    }
    out
}

/// Enumerates serial, data, spatial, pipeline, filter, channel,
/// data+filter and data+spatial candidates up to the budget; by default
/// PE counts sweep powers of two. Evaluation is deterministic: the
/// candidate order and all tie-breaks are fixed.
pub fn recommend(
    model: &ModelDescriptor,
    system: &SystemDescriptor,
    profile: &CalibrationProfile,
    opts: &RecommendOptions,
) -> Recommendation {
    let mut system = system.clone();
    if let Some(cap) = opts.memory_cap {
        system.pe_memory_capacity = cap;
    }

    let sample_rank = model.layers.first().map(|l| l.input_shape.rank()).unwrap_or(2);
    let g = model.layers.len() as u64;
    let mut candidates: Vec<StrategyConfig> = vec![StrategyConfig::Serial];
    let pes = pe_candidates(opts.budget, opts.dense);

    for &p in &pes {
        candidates.push(StrategyConfig::Data { p });
    }
    for &p in &pes {
        for (pw, ph, pd) in spatial_splits(p, sample_rank, opts.dense) {
            candidates.push(StrategyConfig::Spatial { pw, ph, pd });
        }
    }
    for &p in &pes {
        if p <= g {
            let segments = p.min(model.batch_size).max(1);
            candidates.push(StrategyConfig::Pipeline { p, segments, groups: None });
        }
    }
    let f_cap = min_filters(model);
    for p in divisors(f_cap, opts.budget) {
        if opts.dense || p.is_power_of_two() {
            candidates.push(StrategyConfig::Filter { p });
        }
    }
    let c_cap = min_channels(model, 1);
    for p in divisors(c_cap, opts.budget) {
        if opts.dense || p.is_power_of_two() {
            candidates.push(StrategyConfig::Channel { p, first_layer: 1 });
        }
    }
    for &p in &pes {
        for p1 in divisors(p, p / 2) {
            let p2 = p / p1;
            if p2 >= 2 {
                candidates.push(StrategyConfig::DataFilter { p1, p2 });
            }
        }
    }
    for &p in &pes {
        for p1 in divisors(p, p / 2) {
            let p2 = p / p1;
            if p2 < 2 {
                continue;
            }
            for (pw, ph, pd) in spatial_splits(p2, sample_rank, opts.dense) {
                candidates.push(StrategyConfig::DataSpatial { p1, pw, ph, pd });
            }
        }
    }

    let mut ranked = Vec::new();
    let mut rejected = Vec::new();
    for cfg in candidates {
        match predict(model, &system, profile, &cfg) {
            Ok(pred) => match &pred.feasibility {
                Feasibility::Feasible => ranked.push(pred),
                Feasibility::Infeasible(reason) => rejected.push(Rejection {
                    strategy: pred.strategy.clone(),
                    cause: RejectCause::Infeasible(reason.clone()),
                }),
            },
            Err(err) => rejected.push(Rejection {
                strategy: cfg,
                cause: RejectCause::Error(err.to_string()),
            }),
        }
    }

    ranked.sort_by(|a, b| {
        a.total()
            .total_cmp(&b.total())
            .then(a.mem_bytes.total_cmp(&b.mem_bytes))
            .then(a.p_used.cmp(&b.p_used))
            .then(a.strategy.to_string().cmp(&b.strategy.to_string()))
    });
    Recommendation { ranked, rejected }
}
