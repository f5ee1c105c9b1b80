//! Discrete micro-simulators used as independent oracles for the closed
//! forms: explicit ring/tree collective steps, an event-driven pipeline
//! schedule, and buffer-by-buffer memory enumeration.
//!
//! Step times accumulate in exact rational arithmetic (every `f64` input
//! is a dyadic rational), so two equal protocols produce identical sums
//! regardless of summation order. The simulators reuse the same
//! parameter selection as the closed forms on purpose: a discrepancy
//! then isolates a formula error rather than parameter drift.

use num::{BigInt, BigRational, ToPrimitive, Zero};

use crate::calibrate::CalibrationProfile;
use crate::cost::{ceil_log2, select_params_for, CommParams, CommPattern, SystemDescriptor};
use crate::model::{layer_counts, ModelDescriptor};
use crate::strategies::predict_internals::{mem_scale, spatial_prefix_ctx, Ctx};
use crate::strategies::{
    halo_volume, PePosition, PhaseTimes, PredictError, StrategyConfig,
};

fn rat(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite cost input")
}

fn rat_u64(x: u64) -> BigRational {
    BigRational::from_integer(BigInt::from(x))
}

/// One transfer step of a collective schedule.
#[derive(Debug, Clone)]
pub struct StepEvent {
    pub step: usize,
    /// PEs that send in this step.
    pub participants: u64,
    /// Bytes each participant moves.
    pub bytes: BigRational,
    pub elapsed: BigRational,
}

fn step_time(cp: CommParams, bytes: &BigRational) -> BigRational {
    rat(cp.alpha) + bytes * rat(cp.beta_eff)
}

/// A single point-to-point transfer.
pub fn simulate_p2p(cp: CommParams, m_bytes: f64) -> BigRational {
    step_time(cp, &rat(m_bytes))
}

/// Ring allreduce: a reduce-scatter pass then an allgather pass, each
/// of `p - 1` steps moving one `m/p` segment per PE.
pub fn simulate_ring_allreduce(cp: CommParams, p: u64, m_bytes: f64) -> (BigRational, Vec<StepEvent>) {
    let mut events = Vec::new();
    let mut total = BigRational::zero();
    if p <= 1 {
        return (total, events);
    }
    let segment = rat(m_bytes) / rat_u64(p);
    for step in 0..2 * (p - 1) {
        let elapsed = step_time(cp, &segment);
        total += &elapsed;
        events.push(StepEvent { step: step as usize, participants: p, bytes: segment.clone(), elapsed });
    }
    (total, events)
}

/// Ring allgather of per-PE segments: `p - 1` forwarding steps.
pub fn simulate_ring_allgather(
    cp: CommParams,
    p: u64,
    m_segment_bytes: f64,
) -> (BigRational, Vec<StepEvent>) {
    let mut events = Vec::new();
    let mut total = BigRational::zero();
    if p <= 1 {
        return (total, events);
    }
    let segment = rat(m_segment_bytes);
    for step in 0..p - 1 {
        let elapsed = step_time(cp, &segment);
        total += &elapsed;
        events.push(StepEvent { step: step as usize, participants: p, bytes: segment.clone(), elapsed });
    }
    (total, events)
}

/// Pipelined-tree allreduce: the message travels up and back down a
/// binary tree in `k` chunks of `m / (2k)` bytes; the fill/drain of the
/// chunk pipeline costs `ceil(log2 p) + k` steps each way.
pub fn simulate_tree_allreduce(
    cp: CommParams,
    p: u64,
    m_bytes: f64,
    k: u32,
) -> (BigRational, Vec<StepEvent>) {
    let mut events = Vec::new();
    let mut total = BigRational::zero();
    if p <= 1 {
        return (total, events);
    }
    let chunk = rat(m_bytes) / (rat_u64(2) * rat_u64(k as u64));
    let steps_per_phase = (ceil_log2(p) + k) as usize;
    for step in 0..2 * steps_per_phase {
        let elapsed = step_time(cp, &chunk);
        total += &elapsed;
        events.push(StepEvent { step, participants: p, bytes: chunk.clone(), elapsed });
    }
    (total, events)
}

/// Allreduce with the same ring/tree dispatch rule as the closed form.
pub fn simulate_allreduce(
    cp: CommParams,
    p: u64,
    m_bytes: f64,
    ring_tree_threshold: f64,
    k: u32,
) -> BigRational {
    if p <= 1 {
        return BigRational::zero();
    }
    if m_bytes < ring_tree_threshold {
        simulate_tree_allreduce(cp, p, m_bytes, k).0
    } else {
        simulate_ring_allreduce(cp, p, m_bytes).0
    }
}

/// Reduce to one leader: ring reduce-scatter followed by a gather of
/// the reduced segments to the leader, `p - 1` steps each.
pub fn simulate_reduce_to_leader(cp: CommParams, p: u64, m_bytes: f64) -> BigRational {
    let mut total = BigRational::zero();
    if p <= 1 {
        return total;
    }
    let segment = rat(m_bytes) / rat_u64(p);
    for _phase in 0..2 {
        for _step in 0..p - 1 {
            total += step_time(cp, &segment);
        }
    }
    total
}

/// Event-driven makespan of one pipelined iteration: the forward
/// wavefront of `segments` micro-segments over the stages, then the
/// backward wavefront in reverse. `group_costs_*` are per-sample; each
/// segment carries `batch / segments` samples. Returns epoch seconds
/// (`iters` iterations).
pub fn simulate_pipeline_schedule(
    group_costs_fw: &[f64],
    group_costs_bw: &[f64],
    segments: u64,
    batch: u64,
    iters: f64,
) -> f64 {
    assert_eq!(group_costs_fw.len(), group_costs_bw.len());
    let stages = group_costs_fw.len();
    if stages == 0 || segments == 0 {
        return 0.0;
    }
    let seg_samples = rat_u64(batch) / rat_u64(segments);
    let fw: Vec<BigRational> = group_costs_fw.iter().map(|c| rat(*c) * &seg_samples).collect();
    let bw: Vec<BigRational> = group_costs_bw.iter().map(|c| rat(*c) * &seg_samples).collect();

    let wavefront = |costs: &[BigRational]| -> BigRational {
        let s = segments as usize;
        let mut finish = vec![vec![BigRational::zero(); s]; costs.len()];
        for stage in 0..costs.len() {
            for seg in 0..s {
                let upstream = if stage > 0 {
                    finish[stage - 1][seg].clone()
                } else {
                    BigRational::zero()
                };
                let own_prev = if seg > 0 {
                    finish[stage][seg - 1].clone()
                } else {
                    BigRational::zero()
                };
                finish[stage][seg] = upstream.max(own_prev) + &costs[stage];
            }
        }
        finish[costs.len() - 1][s - 1].clone()
    };

    let bw_rev: Vec<BigRational> = bw.iter().rev().cloned().collect();
    let per_iteration = wavefront(&fw) + wavefront(&bw_rev);
    iters * per_iteration.to_f64().expect("finite makespan")
}

/// Every buffer one PE holds under a configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BufferKind {
    Input,
    InputGrad,
    Activation,
    ActivationGrad,
    Weights,
    WeightGrad,
    Bias,
}

#[derive(Debug, Clone)]
pub struct BufferEntry {
    pub layer: String,
    pub kind: BufferKind,
    pub elems: BigRational,
}

/// Lists every buffer a single PE stores under the configuration
/// (inputs, activations, their gradients, weights, weight gradients and
/// biases, each with its sharded size), sums them exactly, and applies
/// the reuse factor and element width. For the depth-wise strategies the
/// listing belongs to the worst-loaded stage.
pub fn enumerate_buffers(
    model: &ModelDescriptor,
    system: &SystemDescriptor,
    cfg: &StrategyConfig,
) -> Result<(f64, Vec<BufferEntry>), PredictError> {
    let counts = layer_counts(model)?;
    let batch = rat_u64(model.batch_size);

    // (activation divisor, weight divisor) per strategy; depth-wise
    // strategies are handled separately below.
    let uniform: Option<(u64, u64)> = match cfg {
        StrategyConfig::Serial => Some((1, 1)),
        StrategyConfig::Data { p } => Some((*p, 1)),
        StrategyConfig::Spatial { pw, ph, pd } => Some((pw * ph * pd, 1)),
        StrategyConfig::Filter { p } => Some((1, *p)),
        StrategyConfig::Channel { p, .. } => Some((1, *p)),
        StrategyConfig::DataFilter { p1, p2 } => Some((*p1, *p2)),
        StrategyConfig::DataSpatial { p1, pw, ph, pd } => Some((p1 * pw * ph * pd, 1)),
        StrategyConfig::LayerPure { .. } | StrategyConfig::Pipeline { .. } => None,
    };

    let list_layer = |idx: usize, act_div: u64, w_div: u64, out: &mut Vec<BufferEntry>| {
        let c = &counts[idx];
        let name = &model.layers[idx].name;
        let act_share = |elems: u64| &batch * rat_u64(elems) / rat_u64(act_div);
        let w_share = rat_u64(c.w_elems) / rat_u64(w_div);
        out.push(BufferEntry { layer: name.clone(), kind: BufferKind::Input, elems: act_share(c.x_elems) });
        out.push(BufferEntry { layer: name.clone(), kind: BufferKind::InputGrad, elems: act_share(c.x_elems) });
        out.push(BufferEntry { layer: name.clone(), kind: BufferKind::Activation, elems: act_share(c.y_elems) });
        out.push(BufferEntry { layer: name.clone(), kind: BufferKind::ActivationGrad, elems: act_share(c.y_elems) });
        out.push(BufferEntry { layer: name.clone(), kind: BufferKind::Weights, elems: w_share.clone() });
        out.push(BufferEntry { layer: name.clone(), kind: BufferKind::WeightGrad, elems: w_share });
        out.push(BufferEntry {
            layer: name.clone(),
            kind: BufferKind::Bias,
            elems: rat_u64(c.bias_elems),
        });
    };

    let entries: Vec<BufferEntry> = match (uniform, cfg) {
        (Some((act_div, w_div)), _) => {
            let mut out = Vec::with_capacity(counts.len() * 7);
            for idx in 0..counts.len() {
                list_layer(idx, act_div, w_div, &mut out);
            }
            out
        }
        (None, StrategyConfig::LayerPure { groups, .. })
        | (None, StrategyConfig::Pipeline { groups, .. }) => {
            let groups = groups.as_ref().ok_or_else(|| {
                PredictError::InvalidConfig(
                    "buffer enumeration for depth-wise strategies needs explicit groups".into(),
                )
            })?;
            let mut worst: Option<(BigRational, Vec<BufferEntry>)> = None;
            for group in groups {
                let mut out = Vec::new();
                for idx in group.clone() {
                    list_layer(idx, 1, 1, &mut out);
                }
                let sum: BigRational =
                    out.iter().map(|e| e.elems.clone()).fold(BigRational::zero(), |a, b| a + b);
                if worst.as_ref().is_none_or(|(best, _)| sum > *best) {
                    worst = Some((sum, out));
                }
            }
            worst.map(|(_, out)| out).unwrap_or_default()
        }
        _ => unreachable!("uniform covers the remaining strategies"),
    };

    let sum: BigRational =
        entries.iter().map(|e| e.elems.clone()).fold(BigRational::zero(), |a, b| a + b);
    Ok((mem_scale(&sum, system), entries))
}

/// Composes the per-phase communication times of a strategy from the
/// step simulators, following the same protocol schedule as the closed
/// forms (collective rounds per layer, slot counts, dispatch rule, and
/// parameter selection).
pub fn comm_via_sim(
    model: &ModelDescriptor,
    system: &SystemDescriptor,
    profile: &CalibrationProfile,
    cfg: &StrategyConfig,
) -> Result<PhaseTimes, PredictError> {
    let ctx = Ctx::new(model, system, profile)?;
    let iters = ctx.iters;
    let delta = ctx.delta;
    let b = model.batch_size as f64;
    let thr = system.ring_tree_threshold;
    let k = system.tree_chunks;
    let ge_bytes = delta * ctx.sum_w_elems as f64;
    let params = |pattern, p, phi| -> Result<CommParams, PredictError> {
        Ok(select_params_for(system, pattern, p, phi)?)
    };

    let mut phases = PhaseTimes::zero();
    match cfg {
        StrategyConfig::Serial => {}
        StrategyConfig::Data { p } => {
            let cp = params(CommPattern::Allreduce, *p, 1)?;
            phases.ge_allreduce =
                iters * simulate_allreduce(cp, *p, ge_bytes, thr, k).to_f64().unwrap();
        }
        StrategyConfig::Spatial { pw, ph, pd } => {
            let p = pw * ph * pd;
            let cp = params(CommPattern::Allreduce, p, 1)?;
            phases.ge_allreduce =
                iters * simulate_allreduce(cp, p, ge_bytes, thr, k).to_f64().unwrap();
            if p > 1 {
                let cp_halo = params(CommPattern::Halo, p, 1)?;
                phases.fb_halo =
                    iters * sim_halo_per_iter(&ctx, &[*pw, *ph, *pd], cp_halo, b)?;
                let cp_ag = params(CommPattern::Allgather, p, 1)?;
                phases.fb_allgather = iters * sim_gather_per_iter(&ctx, cp_ag, p, b, delta);
            }
        }
        StrategyConfig::LayerPure { p, groups } => {
            if *p > 1 {
                let groups = groups
                    .as_ref()
                    .ok_or_else(|| PredictError::InvalidConfig("needs explicit groups".into()))?;
                let cp = params(CommPattern::P2p, *p, 1)?;
                let mut per_iter = BigRational::zero();
                for g in &groups[..groups.len() - 1] {
                    let boundary = ctx.counts[g.end - 1].y_elems as f64;
                    per_iter += simulate_p2p(cp, delta * b * boundary);
                }
                phases.fb_p2p = 2.0 * iters * per_iter.to_f64().unwrap();
            }
        }
        StrategyConfig::Pipeline { p, segments, groups } => {
            if *p > 1 {
                let groups = groups
                    .as_ref()
                    .ok_or_else(|| PredictError::InvalidConfig("needs explicit groups".into()))?;
                let cp = params(CommPattern::P2p, *p, 1)?;
                // One bottleneck transfer per schedule slot, (p + S - 2)
                // slots per direction.
                let bottleneck = groups[..groups.len() - 1]
                    .iter()
                    .map(|g| {
                        let boundary = ctx.counts[g.end - 1].y_elems as f64;
                        simulate_p2p(cp, delta * (b / *segments as f64) * boundary)
                    })
                    .fold(BigRational::zero(), BigRational::max);
                let slots = (*p + *segments - 2) as f64;
                phases.fb_p2p = 2.0 * iters * slots * bottleneck.to_f64().unwrap();
            }
        }
        StrategyConfig::Filter { p } | StrategyConfig::Channel { p, .. } => {
            if *p > 1 {
                let cp_ag = params(CommPattern::Allgather, *p, 1)?;
                let cp_ar = params(CommPattern::Allreduce, *p, 1)?;
                let (ag, ar) = sim_width_collectives(&ctx, cp_ag, cp_ar, *p, *p, 1);
                phases.fb_allgather = iters * ag;
                phases.fb_allreduce = iters * ar;
            }
        }
        StrategyConfig::DataFilter { p1, p2 } => {
            let p = p1 * p2;
            if *p2 > 1 {
                let cp_ag = params(CommPattern::Allgather, *p2, 1)?;
                let cp_ar = params(CommPattern::Allreduce, *p2, 1)?;
                let (ag, ar) = sim_width_collectives(&ctx, cp_ag, cp_ar, *p2, p, *p1);
                phases.fb_allgather = iters * ag;
                phases.fb_allreduce = iters * ar;
            }
            let phi = (system.contention_phi as u64).min(*p2);
            let cp = params(CommPattern::Allreduce, p, phi)?;
            phases.ge_allreduce = iters
                * simulate_allreduce(cp, *p1, ge_bytes / *p2 as f64, thr, k)
                    .to_f64()
                    .unwrap();
        }
        StrategyConfig::DataSpatial { p1, pw, ph, pd } => {
            let p2 = pw * ph * pd;
            let p = p1 * p2;
            let micro = model.batch_size.div_ceil(*p1) as f64;
            let cp_group = params(CommPattern::Allreduce, p2, 1)?;
            let cp_leaders = params(CommPattern::Allreduce, p, 1)?;
            let ge = simulate_reduce_to_leader(cp_group, p2, ge_bytes)
                + simulate_allreduce(cp_leaders, *p1, ge_bytes, thr, k);
            phases.ge_allreduce = iters * ge.to_f64().unwrap();
            if p2 > 1 {
                let cp_halo = params(CommPattern::Halo, p2, 1)?;
                phases.fb_halo =
                    iters * sim_halo_per_iter(&ctx, &[*pw, *ph, *pd], cp_halo, micro)?;
                let cp_ag = params(CommPattern::Allgather, p2, 1)?;
                phases.fb_allgather = iters * sim_gather_per_iter(&ctx, cp_ag, p2, micro, delta);
            }
        }
    }
    Ok(phases)
}

fn sim_width_collectives(
    ctx: &Ctx,
    cp_ag: CommParams,
    cp_ar: CommParams,
    ring_pes: u64,
    total_p: u64,
    group_div: u64,
) -> (f64, f64) {
    let g = ctx.counts.len();
    let mut ag = BigRational::zero();
    let mut ar = BigRational::zero();
    let b = ctx.batch;
    for c in &ctx.counts[..g - 1] {
        let y_bytes = ctx.delta * b * c.y_elems as f64;
        ag += simulate_ring_allgather(cp_ag, ring_pes, y_bytes / total_p as f64).0;
        ar += simulate_ring_allreduce(cp_ar, ring_pes, y_bytes / group_div as f64).0;
    }
    (ag.to_f64().unwrap(), ar.to_f64().unwrap())
}

fn sim_halo_per_iter(
    ctx: &Ctx,
    split: &[u64; 3],
    cp: CommParams,
    micro_batch: f64,
) -> Result<f64, PredictError> {
    let mut per_iter = BigRational::zero();
    for l in 0..spatial_prefix_ctx(ctx) {
        let layer = &ctx.adapted[l];
        if !matches!(layer.kind, crate::model::LayerKind::Conv | crate::model::LayerKind::Pool) {
            continue;
        }
        let hx = halo_volume(
            layer.in_channels,
            layer.input_shape.dims(),
            layer.kernel.dims(),
            split,
            PePosition::Interior,
        )?;
        let hdy = halo_volume(
            layer.out_channels,
            ctx.out_shapes[l].dims(),
            layer.kernel.dims(),
            split,
            PePosition::Interior,
        )?;
        per_iter += simulate_p2p(cp, ctx.delta * micro_batch * hx as f64);
        per_iter += simulate_p2p(cp, ctx.delta * micro_batch * hdy as f64);
    }
    Ok(2.0 * per_iter.to_f64().unwrap())
}

fn sim_gather_per_iter(ctx: &Ctx, cp: CommParams, p: u64, micro_batch: f64, delta: f64) -> f64 {
    let prefix = spatial_prefix_ctx(ctx);
    if p <= 1 || prefix == 0 {
        return 0.0;
    }
    let boundary = ctx.counts[prefix - 1].y_elems as f64;
    simulate_ring_allgather(cp, p, delta * micro_batch * boundary / p as f64)
        .0
        .to_f64()
        .unwrap()
}
