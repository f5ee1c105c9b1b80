//! Randomized closed-form vs. simulator equivalence suite, reusable by
//! the `verify` CLI subcommand and the acceptance tests.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::calibrate::{CalibrationProfile, LayerTiming};
use crate::cost::{NetworkTier, SystemDescriptor};
use crate::model::{LayerDescriptor, LayerKind, ModelDescriptor, TensorShape};
use crate::sim::{comm_via_sim, enumerate_buffers};
use crate::strategies::{predict, PhaseLabel, PredictError, StrategyConfig};

/// One generated (model, system, profile) triple plus the strategy
/// configurations that are evaluable on it.
pub struct Instance {
    pub model: ModelDescriptor,
    pub system: SystemDescriptor,
    pub profile: CalibrationProfile,
    pub configs: Vec<StrategyConfig>,
}

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub cases: usize,
    pub worst_rel_err: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Default)]
pub struct VerifyReport {
    pub checks: Vec<CheckOutcome>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn random_shape_extent(rng: &mut ChaCha8Rng) -> u64 {
    *[16u64, 24, 32, 48, 64].get(rng.gen_range(0..5)).unwrap()
}

/// Chained random model: convolutions with extent-preserving padding,
/// occasional pooling/element-wise/norm layers, sometimes a trailing
/// fully-connected head.
pub fn random_model(rng: &mut ChaCha8Rng, max_layers: usize) -> ModelDescriptor {
    let layers_wanted = rng.gen_range(1..=max_layers.max(1));
    let rank = if rng.gen_bool(0.25) { 3 } else { 2 };
    let mut dims: Vec<u64> = (0..rank).map(|_| random_shape_extent(rng)).collect();
    if rank == 3 {
        dims = dims.into_iter().map(|d| d.min(24)).collect();
    }
    let mut channels: u64 = rng.gen_range(1..=6);
    let mut layers = Vec::new();

    for idx in 0..layers_wanted {
        let name = format!("l{idx}");
        let choice = rng.gen_range(0..10);
        let min_extent = dims.iter().copied().min().unwrap();
        if choice < 5 {
            // Extent-preserving convolution.
            let k = *[1u64, 3, 5].get(rng.gen_range(0..3)).unwrap();
            let f = rng.gen_range(1..=24);
            layers.push(LayerDescriptor {
                name,
                kind: LayerKind::Conv,
                in_channels: channels,
                out_channels: f,
                input_shape: TensorShape::new(dims.clone()).unwrap(),
                kernel: TensorShape::new(vec![k; rank]).unwrap(),
                stride: vec![1; rank],
                padding: vec![k / 2; rank],
                has_bias: rng.gen_bool(0.5),
                input_refs: vec![],
            });
            channels = f;
        } else if choice < 7 && min_extent >= 16 && dims.iter().all(|d| d % 2 == 0) {
            layers.push(LayerDescriptor {
                name,
                kind: LayerKind::Pool,
                in_channels: channels,
                out_channels: channels,
                input_shape: TensorShape::new(dims.clone()).unwrap(),
                kernel: TensorShape::new(vec![2; rank]).unwrap(),
                stride: vec![2; rank],
                padding: vec![0; rank],
                has_bias: false,
                input_refs: vec![],
            });
            dims = dims.iter().map(|d| d / 2).collect();
        } else {
            let kind = if choice < 9 { LayerKind::ElementWise } else { LayerKind::Norm };
            layers.push(LayerDescriptor {
                name,
                kind,
                in_channels: channels,
                out_channels: channels,
                input_shape: TensorShape::new(dims.clone()).unwrap(),
                kernel: TensorShape::none(),
                stride: vec![1; rank],
                padding: vec![0; rank],
                has_bias: kind == LayerKind::Norm,
                input_refs: vec![],
            });
        }
    }
    if rng.gen_bool(0.3) {
        layers.push(LayerDescriptor {
            name: "head".into(),
            kind: LayerKind::FullyConnected,
            in_channels: channels,
            out_channels: rng.gen_range(2..=100),
            input_shape: TensorShape::new(dims.clone()).unwrap(),
            kernel: TensorShape::none(),
            stride: vec![1; rank],
            padding: vec![0; rank],
            has_bias: true,
            input_refs: vec![],
        });
    }

    let batch = *[2u64, 4, 8, 16, 32].get(rng.gen_range(0..5)).unwrap();
    let iters = rng.gen_range(1..=6);
    ModelDescriptor { layers, dataset_size: batch * iters, batch_size: batch, epochs: 1 }
}

pub fn random_system(rng: &mut ChaCha8Rng) -> SystemDescriptor {
    let tier_count = rng.gen_range(1..=3);
    let mut tiers = Vec::new();
    let mut max_pes = 4u64;
    for idx in 0..tier_count {
        tiers.push(NetworkTier {
            name: format!("tier{idx}"),
            max_pes,
            alpha: 10f64.powf(rng.gen_range(-6.0..-4.0)),
            beta: 10f64.powf(rng.gen_range(-11.0..-9.0)),
        });
        max_pes *= 32;
    }
    tiers.last_mut().unwrap().max_pes = tiers.last().unwrap().max_pes.max(4096);
    SystemDescriptor {
        tiers,
        pe_memory_capacity: 1e30,
        delta: *[2u32, 4, 8].get(rng.gen_range(0..3)).unwrap(),
        gamma: rng.gen_range(0.5..=1.0),
        ring_tree_threshold: *[0.0, 4096.0, 524_288.0].get(rng.gen_range(0..3)).unwrap(),
        tree_chunks: rng.gen_range(1..=4),
        contention_phi: rng.gen_range(1..=2),
        overrides: BTreeMap::new(),
    }
}

fn random_profile(rng: &mut ChaCha8Rng, model: &ModelDescriptor) -> CalibrationProfile {
    let mut timings = BTreeMap::new();
    for layer in &model.layers {
        timings.insert(
            layer.name.clone(),
            LayerTiming {
                fw: rng.gen_range(1e-4..1e-2),
                bw: rng.gen_range(1e-4..1e-2),
                wu: rng.gen_range(0.0..1e-3),
            },
        );
    }
    CalibrationProfile::from_timings(timings)
}

fn pow2_values_up_to(cap: u64, max_p: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut p = 2u64;
    while p <= cap.min(max_p) {
        out.push(p);
        p *= 2;
    }
    out
}

/// Strategy configurations that are valid (or at worst memory-bound) on
/// the model, with PE counts up to `max_p`.
pub fn valid_configs(model: &ModelDescriptor, max_p: u64) -> Vec<StrategyConfig> {
    let mut configs = vec![StrategyConfig::Serial];
    for p in pow2_values_up_to(model.batch_size, max_p) {
        configs.push(StrategyConfig::Data { p });
    }

    let g = model.layers.len() as u64;
    for p in pow2_values_up_to(g, max_p.min(8)) {
        configs.push(StrategyConfig::Pipeline { p, segments: p.min(model.batch_size), groups: None });
        configs.push(StrategyConfig::LayerPure { p, groups: None });
    }

    let min_f = model
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
        .unwrap_or(1);
    for p in pow2_values_up_to(min_f, max_p) {
        if min_f % p == 0 {
            configs.push(StrategyConfig::Filter { p });
        }
    }
    let min_c = if model.layers.len() > 1 {
        model.layers[1..].iter().map(|l| l.in_channels).min().unwrap_or(1)
    } else {
        1
    };
    for p in pow2_values_up_to(min_c, max_p) {
        if min_c % p == 0 {
            configs.push(StrategyConfig::Channel { p, first_layer: 1 });
        }
    }

    // Spatial splits that leave room for the widest halo (K <= 5 means
    // width <= 2) on every prefix layer.
    let prefix = crate::strategies::spatial_prefix_len(model);
    if prefix > 0 {
        let safe_parts = |axis: usize| -> u64 {
            model.layers[..prefix]
                .iter()
                .map(|l| l.input_shape.dims().get(axis).copied().unwrap_or(1) / 4)
                .min()
                .unwrap_or(1)
                .max(1)
        };
        let rank = model.layers[0].input_shape.rank();
        let cap_w = safe_parts(0);
        let cap_h = if rank >= 2 { safe_parts(1) } else { 1 };
        for (pw, ph) in [(2, 1), (2, 2), (4, 2), (4, 4)] {
            let p = pw * ph;
            if pw <= cap_w && ph <= cap_h && p <= max_p {
                configs.push(StrategyConfig::Spatial { pw, ph, pd: 1 });
                for p1 in [2u64, 4] {
                    if p1 <= model.batch_size && p1 * p <= max_p {
                        configs.push(StrategyConfig::DataSpatial { p1, pw, ph, pd: 1 });
                    }
                }
            }
        }
    }

    for p1 in pow2_values_up_to(model.batch_size, 8) {
        for p2 in pow2_values_up_to(min_f, 8) {
            if min_f % p2 == 0 && p1 * p2 <= max_p {
                configs.push(StrategyConfig::DataFilter { p1, p2 });
            }
        }
    }
    configs
}

pub fn random_instance(rng: &mut ChaCha8Rng, max_layers: usize, max_p: u64) -> Instance {
    let model = random_model(rng, max_layers);
    let system = random_system(rng);
    let profile = random_profile(rng, &model);
    let configs = valid_configs(&model, max_p);
    Instance { model, system, profile, configs }
}

fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Compares every per-phase closed-form communication time against the
/// step-simulated composition. Tolerance 1e-9 relative.
pub fn check_comm_equivalence(instances: &[Instance]) -> CheckOutcome {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    let mut detail = String::new();
    for inst in instances {
        for cfg in &inst.configs {
            let pred = match predict(&inst.model, &inst.system, &inst.profile, cfg) {
                Ok(p) => p,
                Err(PredictError::Cost(_)) => continue,
                Err(e) => {
                    return CheckOutcome {
                        name: "comm closed-form == step simulation".into(),
                        passed: false,
                        cases,
                        worst_rel_err: f64::INFINITY,
                        detail: format!("{cfg}: {e}"),
                    }
                }
            };
            // The resolved strategy carries explicit groups for the
            // depth-wise configurations.
            let sim = match comm_via_sim(&inst.model, &inst.system, &inst.profile, &pred.strategy) {
                Ok(s) => s,
                Err(e) => {
                    return CheckOutcome {
                        name: "comm closed-form == step simulation".into(),
                        passed: false,
                        cases,
                        worst_rel_err: f64::INFINITY,
                        detail: format!("{cfg}: sim failed: {e}"),
                    }
                }
            };
            cases += 1;
            for label in PhaseLabel::ALL {
                let err = rel_err(pred.comm.get(label), sim.get(label));
                if err > worst {
                    worst = err;
                    detail = format!(
                        "worst at {} phase {label}: closed {} vs sim {}",
                        pred.strategy,
                        pred.comm.get(label),
                        sim.get(label)
                    );
                }
            }
        }
    }
    CheckOutcome {
        name: "comm closed-form == step simulation".into(),
        passed: worst <= 1e-9,
        cases,
        worst_rel_err: worst,
        detail,
    }
}

/// Compares every closed-form memory row against the buffer
/// enumeration. Both routes reduce identical exact sums, so the match
/// must be bit-exact.
pub fn check_memory_equivalence(instances: &[Instance]) -> CheckOutcome {
    let mut cases = 0;
    for inst in instances {
        for cfg in &inst.configs {
            let pred = match predict(&inst.model, &inst.system, &inst.profile, cfg) {
                Ok(p) => p,
                Err(_) => continue,
            };
            let (bytes, _) = match enumerate_buffers(&inst.model, &inst.system, &pred.strategy) {
                Ok(b) => b,
                Err(e) => {
                    return CheckOutcome {
                        name: "memory closed-form == buffer enumeration".into(),
                        passed: false,
                        cases,
                        worst_rel_err: f64::INFINITY,
                        detail: format!("{cfg}: enumeration failed: {e}"),
                    }
                }
            };
            cases += 1;
            if bytes != pred.mem_bytes {
                return CheckOutcome {
                    name: "memory closed-form == buffer enumeration".into(),
                    passed: false,
                    cases,
                    worst_rel_err: rel_err(bytes, pred.mem_bytes),
                    detail: format!("{}: closed {} vs enumerated {}", pred.strategy, pred.mem_bytes, bytes),
                };
            }
        }
    }
    CheckOutcome {
        name: "memory closed-form == buffer enumeration".into(),
        passed: true,
        cases,
        worst_rel_err: 0.0,
        detail: String::new(),
    }
}

/// Exact degenerate reductions between strategies.
pub fn check_reductions(instances: &[Instance]) -> CheckOutcome {
    let mut cases = 0;
    for inst in instances {
        let m = &inst.model;
        let s = &inst.system;
        let pr = &inst.profile;
        let serial = predict(m, s, pr, &StrategyConfig::Serial).unwrap();
        let mut pairs: Vec<(String, Prediction, Prediction)> = Vec::new();

        let eq_of = |cfg: StrategyConfig| predict(m, s, pr, &cfg).unwrap();
        pairs.push(("data(1)=serial".into(), eq_of(StrategyConfig::Data { p: 1 }), serial.clone()));
        pairs.push((
            "spatial(1)=serial".into(),
            eq_of(StrategyConfig::Spatial { pw: 1, ph: 1, pd: 1 }),
            serial.clone(),
        ));
        pairs.push((
            "filter(1)=serial".into(),
            eq_of(StrategyConfig::Filter { p: 1 }),
            serial.clone(),
        ));
        pairs.push((
            "channel(1)=serial".into(),
            eq_of(StrategyConfig::Channel { p: 1, first_layer: 1 }),
            serial.clone(),
        ));
        let p_data = 2.min(m.batch_size.max(1)).max(1);
        pairs.push((
            "ds(p2=1)=data".into(),
            eq_of(StrategyConfig::DataSpatial { p1: p_data, pw: 1, ph: 1, pd: 1 }),
            eq_of(StrategyConfig::Data { p: p_data }),
        ));
        pairs.push((
            "df(p2=1)=data".into(),
            eq_of(StrategyConfig::DataFilter { p1: p_data, p2: 1 }),
            eq_of(StrategyConfig::Data { p: p_data }),
        ));
        let min_f = m
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
            .unwrap_or(1);
        let p_filter = if min_f % 2 == 0 { 2 } else { 1 };
        pairs.push((
            "df(p1=1)=filter".into(),
            eq_of(StrategyConfig::DataFilter { p1: 1, p2: p_filter }),
            eq_of(StrategyConfig::Filter { p: p_filter }),
        ));

        for (name, a, b) in pairs {
            cases += 1;
            let same = a.t_fb == b.t_fb
                && a.t_wu == b.t_wu
                && a.comm == b.comm
                && a.mem_bytes == b.mem_bytes;
            if !same {
                return CheckOutcome {
                    name: "degenerate reductions are exact".into(),
                    passed: false,
                    cases,
                    worst_rel_err: f64::INFINITY,
                    detail: format!(
                        "{name} differs: fb {} vs {}, wu {} vs {}, comm {:?} vs {:?}, mem {} vs {}",
                        a.t_fb, b.t_fb, a.t_wu, b.t_wu, a.comm, b.comm, a.mem_bytes, b.mem_bytes
                    ),
                };
            }
        }
        // Pipeline(p=1, S=1) matches serial compute exactly.
        cases += 1;
        let pipe = eq_of(StrategyConfig::Pipeline { p: 1, segments: 1, groups: None });
        if pipe.t_fb != serial.t_fb || pipe.t_wu != serial.t_wu || pipe.comm.total() != 0.0 {
            return CheckOutcome {
                name: "degenerate reductions are exact".into(),
                passed: false,
                cases,
                worst_rel_err: f64::INFINITY,
                detail: format!(
                    "pipeline(1,1) comp {} vs serial {}",
                    pipe.t_comp(),
                    serial.t_comp()
                ),
            };
        }
    }
    CheckOutcome {
        name: "degenerate reductions are exact".into(),
        passed: true,
        cases,
        worst_rel_err: 0.0,
        detail: String::new(),
    }
}

use crate::strategies::Prediction;

/// Runs the full randomized suite.
pub fn run_verification(seed: u64, instance_count: usize) -> VerifyReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let instances: Vec<Instance> =
        (0..instance_count).map(|_| random_instance(&mut rng, 12, 64)).collect();
    VerifyReport {
        checks: vec![
            check_comm_equivalence(&instances),
            check_memory_equivalence(&instances),
            check_reductions(&instances),
        ],
    }
}
