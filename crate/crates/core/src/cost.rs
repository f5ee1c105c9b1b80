//! Communication cost kernels and network-tier selection.
//!
//! Point-to-point transfers follow the latency/bandwidth model
//! `t = alpha + m * beta`. Collectives use ring algorithms for large
//! messages and a pipelined-tree estimate for small ones, matching the
//! dispatch done by common GPU communication libraries. Self-contention
//! is a scalar penalty `phi` that multiplies the per-byte term.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CostError {
    #[error("no network tier holds {requested} PEs (largest is {largest})")]
    TierExhausted { requested: u64, largest: u64 },
    #[error("system file parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid system: {0}")]
    Validation(String),
}

/// One level of the interconnect hierarchy: the largest communicator it
/// fully contains and its latency/bandwidth parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkTier {
    pub name: String,
    pub max_pes: u64,
    /// Startup latency in seconds.
    pub alpha: f64,
    /// Seconds per byte.
    pub beta: f64,
}

/// Communication patterns used for calibration samples and per-pattern
/// parameter overrides.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum CommPattern {
    P2p,
    Allreduce,
    Allgather,
    Halo,
}

impl CommPattern {
    pub fn as_str(&self) -> &'static str {
        match self {
            CommPattern::P2p => "p2p",
            CommPattern::Allreduce => "allreduce",
            CommPattern::Allgather => "allgather",
            CommPattern::Halo => "halo",
        }
    }
}

impl FromStr for CommPattern {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "p2p" => Ok(CommPattern::P2p),
            "allreduce" => Ok(CommPattern::Allreduce),
            "allgather" => Ok(CommPattern::Allgather),
            "halo" => Ok(CommPattern::Halo),
            other => Err(format!("unknown pattern `{other}`")),
        }
    }
}

impl fmt::Display for CommPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The machine: network tiers plus memory and data-layout constants.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemDescriptor {
    /// Ordered by strictly increasing `max_pes`.
    pub tiers: Vec<NetworkTier>,
    /// Per-PE memory capacity in bytes.
    pub pe_memory_capacity: f64,
    /// Bytes per tensor element.
    pub delta: u32,
    /// Memory reuse factor in (0, 1].
    pub gamma: f64,
    /// Allreduce messages at least this large use the ring algorithm;
    /// zero forces ring for every size.
    pub ring_tree_threshold: f64,
    /// Pipeline chunks for the tree allreduce estimate.
    pub tree_chunks: u32,
    /// Self-contention flow count shared on a bottleneck link.
    pub contention_phi: u32,
    /// Optional per-pattern (alpha, beta) overriding tier selection,
    /// e.g. a host-staged halo exchange that is slower than the
    /// collective transport.
    pub overrides: BTreeMap<CommPattern, (f64, f64)>,
}

impl SystemDescriptor {
    pub fn validate(&self) -> Result<(), CostError> {
        if self.tiers.is_empty() {
            return Err(CostError::Validation("system needs at least one tier".into()));
        }
        let mut prev = 0;
        for tier in &self.tiers {
            if tier.max_pes <= prev {
                return Err(CostError::Validation(
                    "tiers must be ordered by strictly increasing pes".into(),
                ));
            }
            if tier.alpha < 0.0 || tier.beta <= 0.0 {
                return Err(CostError::Validation(format!(
                    "tier `{}`: alpha must be >= 0 and beta > 0",
                    tier.name
                )));
            }
            prev = tier.max_pes;
        }
        if !matches!(self.delta, 1 | 2 | 4 | 8) {
            return Err(CostError::Validation(format!(
                "delta must be 1, 2, 4 or 8 bytes, got {}",
                self.delta
            )));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(CostError::Validation("gamma must lie in (0, 1]".into()));
        }
        if self.contention_phi == 0 {
            return Err(CostError::Validation("phi must be >= 1".into()));
        }
        if self.tree_chunks == 0 {
            return Err(CostError::Validation("tree_chunks must be >= 1".into()));
        }
        Ok(())
    }

    pub fn max_pes(&self) -> u64 {
        self.tiers.last().map(|t| t.max_pes).unwrap_or(0)
    }
}

/// Effective latency/bandwidth pair for one communicator, with the
/// contention penalty already folded into the per-byte term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommParams {
    pub alpha: f64,
    pub beta_eff: f64,
}

/// Parameters of the smallest tier that still contains `p` PEs: the
/// bottleneck level a communicator of that size has to cross.
pub fn select_params(system: &SystemDescriptor, p: u64, phi: u64) -> Result<CommParams, CostError> {
    let p = p.max(1);
    let tier = system
        .tiers
        .iter()
        .find(|tier| tier.max_pes >= p)
        .ok_or(CostError::TierExhausted { requested: p, largest: system.max_pes() })?;
    Ok(CommParams {
        alpha: tier.alpha,
        beta_eff: tier.beta * phi.max(1) as f64,
    })
}

/// Like [`select_params`] but honoring a per-pattern override when the
/// system declares one for this pattern.
pub fn select_params_for(
    system: &SystemDescriptor,
    pattern: CommPattern,
    p: u64,
    phi: u64,
) -> Result<CommParams, CostError> {
    if let Some(&(alpha, beta)) = system.overrides.get(&pattern) {
        return Ok(CommParams { alpha, beta_eff: beta * phi.max(1) as f64 });
    }
    select_params(system, p, phi)
}

/// `ceil(log2(p))`, exact in integer arithmetic.
pub fn ceil_log2(p: u64) -> u32 {
    debug_assert!(p >= 1);
    p.next_power_of_two().trailing_zeros()
}

/// Point-to-point transfer of `m` bytes.
pub fn t_p2p(cp: CommParams, m: f64) -> f64 {
    cp.alpha + m * cp.beta_eff
}

/// Ring allreduce of an `m`-byte buffer across `p` PEs:
/// reduce-scatter plus allgather, `2(p-1)` steps of `m/p` bytes.
pub fn t_allreduce_ring(cp: CommParams, p: u64, m: f64) -> f64 {
    if p <= 1 {
        return 0.0;
    }
    2.0 * (p - 1) as f64 * (cp.alpha + m / p as f64 * cp.beta_eff)
}

/// Ring allgather where every PE contributes an `m_segment`-byte slice:
/// `p-1` steps, each forwarding one segment.
pub fn t_allgather_ring(cp: CommParams, p: u64, m_segment: f64) -> f64 {
    if p <= 1 {
        return 0.0;
    }
    (p - 1) as f64 * (cp.alpha + m_segment * cp.beta_eff)
}

/// Pipelined-tree allreduce estimate for small messages, with the
/// message split into `k` chunks.
pub fn t_allreduce_tree(cp: CommParams, p: u64, m: f64, k: u32) -> f64 {
    if p <= 1 {
        return 0.0;
    }
    let steps = (ceil_log2(p) + k) as f64;
    2.0 * steps * (cp.alpha + m / (2.0 * k as f64) * cp.beta_eff)
}

/// Allreduce with the ring/tree dispatch: tree strictly below the
/// threshold, ring at or above it.
pub fn t_allreduce(cp: CommParams, p: u64, m: f64, ring_tree_threshold: f64, k: u32) -> f64 {
    if p <= 1 {
        return 0.0;
    }
    if m < ring_tree_threshold {
        t_allreduce_tree(cp, p, m, k)
    } else {
        t_allreduce_ring(cp, p, m)
    }
}

/// Reduce to a single leader PE, modeled as a ring reduce-scatter
/// followed by a gather of the segments to the leader. Costs the same
/// as a ring allreduce by construction.
pub fn t_reduce_to_leader(cp: CommParams, p: u64, m: f64) -> f64 {
    t_allreduce_ring(cp, p, m)
}

fn parse_kv(token: &str, line: usize) -> Result<(&str, &str), CostError> {
    token.split_once('=').ok_or_else(|| CostError::Parse {
        line,
        msg: format!("expected key=value, got `{token}`"),
    })
}

fn parse_num<T: FromStr>(value: &str, line: usize, field: &str) -> Result<T, CostError> {
    value.parse().map_err(|_| CostError::Parse {
        line,
        msg: format!("invalid value for {field}: `{value}`"),
    })
}

/// Parses the system file format:
///
/// ```text
/// tier nvlink pes=4 alpha=5e-6 beta=5e-11
/// tier rack pes=68 alpha=1e-5 beta=8e-11
/// memory=16000000000 delta=4 gamma=1.0 ring_tree_threshold=524288 tree_chunks=4 phi=1
/// override halo alpha=2e-5 beta=4e-10   # optional
/// ```
pub fn parse_system(text: &str) -> Result<SystemDescriptor, CostError> {
    let mut tiers = Vec::new();
    let mut memory = None;
    let mut delta = None;
    let mut gamma = None;
    let mut threshold = 512.0 * 1024.0;
    let mut chunks = 1u32;
    let mut phi = 1u32;
    let mut overrides = BTreeMap::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.split('#').next() {
            Some(l) => l.trim(),
            None => continue,
        };
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let head = tokens.next().expect("non-empty");
        match head {
            "tier" => {
                let name = tokens
                    .next()
                    .ok_or(CostError::Parse { line: line_no, msg: "tier needs a name".into() })?;
                let mut pes = None;
                let mut alpha = None;
                let mut beta = None;
                for tok in tokens {
                    let (key, value) = parse_kv(tok, line_no)?;
                    match key {
                        "pes" => pes = Some(parse_num::<u64>(value, line_no, "pes")?),
                        "alpha" => alpha = Some(parse_num::<f64>(value, line_no, "alpha")?),
                        "beta" => beta = Some(parse_num::<f64>(value, line_no, "beta")?),
                        other => {
                            return Err(CostError::Parse {
                                line: line_no,
                                msg: format!("unknown tier field `{other}`"),
                            })
                        }
                    }
                }
                let missing = |f: &str| CostError::Parse {
                    line: line_no,
                    msg: format!("tier `{name}` is missing {f}"),
                };
                tiers.push(NetworkTier {
                    name: name.to_string(),
                    max_pes: pes.ok_or_else(|| missing("pes"))?,
                    alpha: alpha.ok_or_else(|| missing("alpha"))?,
                    beta: beta.ok_or_else(|| missing("beta"))?,
                });
            }
            "override" => {
                let pattern: CommPattern = tokens
                    .next()
                    .ok_or(CostError::Parse { line: line_no, msg: "override needs a pattern".into() })?
                    .parse()
                    .map_err(|msg| CostError::Parse { line: line_no, msg })?;
                let mut alpha = None;
                let mut beta = None;
                for tok in tokens {
                    let (key, value) = parse_kv(tok, line_no)?;
                    match key {
                        "alpha" => alpha = Some(parse_num::<f64>(value, line_no, "alpha")?),
                        "beta" => beta = Some(parse_num::<f64>(value, line_no, "beta")?),
                        other => {
                            return Err(CostError::Parse {
                                line: line_no,
                                msg: format!("unknown override field `{other}`"),
                            })
                        }
                    }
                }
                let missing = |f: &str| CostError::Parse {
                    line: line_no,
                    msg: format!("override is missing {f}"),
                };
                overrides.insert(
                    pattern,
                    (alpha.ok_or_else(|| missing("alpha"))?, beta.ok_or_else(|| missing("beta"))?),
                );
            }
            _ => {
                // Parameter line of key=value tokens (the head is one too).
                for tok in std::iter::once(head).chain(tokens) {
                    let (key, value) = parse_kv(tok, line_no)?;
                    match key {
                        "memory" => memory = Some(parse_num::<f64>(value, line_no, "memory")?),
                        "delta" => delta = Some(parse_num::<u32>(value, line_no, "delta")?),
                        "gamma" => gamma = Some(parse_num::<f64>(value, line_no, "gamma")?),
                        "ring_tree_threshold" => {
                            threshold = parse_num::<f64>(value, line_no, "ring_tree_threshold")?
                        }
                        "tree_chunks" => chunks = parse_num::<u32>(value, line_no, "tree_chunks")?,
                        "phi" => phi = parse_num::<u32>(value, line_no, "phi")?,
                        other => {
                            return Err(CostError::Parse {
                                line: line_no,
                                msg: format!("unknown system field `{other}`"),
                            })
                        }
                    }
                }
            }
        }
    }

    let system = SystemDescriptor {
        tiers,
        pe_memory_capacity: memory
            .ok_or(CostError::Parse { line: 0, msg: "missing memory=".into() })?,
        delta: delta.ok_or(CostError::Parse { line: 0, msg: "missing delta=".into() })?,
        gamma: gamma.ok_or(CostError::Parse { line: 0, msg: "missing gamma=".into() })?,
        ring_tree_threshold: threshold,
        tree_chunks: chunks,
        contention_phi: phi,
        overrides,
    };
    system.validate()?;
    Ok(system)
}

impl fmt::Display for SystemDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for tier in &self.tiers {
            writeln!(
                f,
                "tier {} pes={} alpha={:e} beta={:e}",
                tier.name, tier.max_pes, tier.alpha, tier.beta
            )?;
        }
        writeln!(
            f,
            "memory={} delta={} gamma={} ring_tree_threshold={} tree_chunks={} phi={}",
            self.pe_memory_capacity,
            self.delta,
            self.gamma,
            self.ring_tree_threshold,
            self.tree_chunks,
            self.contention_phi
        )?;
        for (pattern, (alpha, beta)) in &self.overrides {
            writeln!(f, "override {pattern} alpha={alpha:e} beta={beta:e}")?;
        }
        Ok(())
    }
}
