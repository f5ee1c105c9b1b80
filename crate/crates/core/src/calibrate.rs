//! Empirical parametrization: fits latency/bandwidth pairs from
//! collective benchmark samples and loads per-layer compute timings.

use std::collections::BTreeMap;

use log::warn;
use thiserror::Error;

use crate::cost::{ceil_log2, CommPattern, NetworkTier};

#[derive(Debug, Error)]
pub enum CalibError {
    #[error("need at least two benchmark samples in the tier range, got {0}")]
    InsufficientSamples(usize),
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// One measured collective run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchmarkSample {
    pub pattern: CommPattern,
    pub p: u64,
    pub bytes: f64,
    pub seconds: f64,
}

/// Measured compute time of one layer: forward/backward per sample,
/// weight update per iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerTiming {
    pub fw: f64,
    pub bw: f64,
    pub wu: f64,
}

/// Calibrated inputs for the predictors: per-layer timings plus any
/// tiers fitted from benchmarks.
#[derive(Debug, Clone, Default)]
pub struct CalibrationProfile {
    pub timings: BTreeMap<String, LayerTiming>,
    /// Fallback used for layers without an entry.
    pub default_timing: Option<LayerTiming>,
    pub fitted_tiers: Vec<NetworkTier>,
}

impl CalibrationProfile {
    pub fn from_timings(timings: BTreeMap<String, LayerTiming>) -> Self {
        CalibrationProfile { timings, default_timing: None, fitted_tiers: Vec::new() }
    }

    /// Profile that charges the same timing to every layer; handy for
    /// synthetic studies.
    pub fn uniform(timing: LayerTiming) -> Self {
        CalibrationProfile {
            timings: BTreeMap::new(),
            default_timing: Some(timing),
            fitted_tiers: Vec::new(),
        }
    }

    pub fn with_default(mut self, timing: LayerTiming) -> Self {
        self.default_timing = Some(timing);
        self
    }

    pub fn timing_for(&self, layer: &str) -> Option<LayerTiming> {
        self.timings.get(layer).copied().or(self.default_timing)
    }
}

/// Regression features of one sample against the pattern's closed form,
/// so that `t = alpha * f_a + beta * f_b`.
fn features(pattern: CommPattern, p: u64, m: f64) -> (f64, f64) {
    let p = p.max(1);
    let steps = (p - 1) as f64;
    match pattern {
        CommPattern::P2p | CommPattern::Halo => (1.0, m),
        CommPattern::Allreduce => (2.0 * steps, 2.0 * steps * m / p as f64),
        CommPattern::Allgather => (steps, steps * m),
    }
}

/// Least-squares fit of `(alpha, beta)` for one pattern over the samples
/// whose PE count falls inside the tier range (inclusive). `alpha` is
/// clamped at zero; a non-positive bandwidth term is rejected.
pub fn fit_alpha_beta(
    samples: &[BenchmarkSample],
    pattern: CommPattern,
    tier_pe_range: (u64, u64),
) -> Result<(f64, f64), CalibError> {
    let (lo, hi) = tier_pe_range;
    let rows: Vec<(f64, f64, f64)> = samples
        .iter()
        .filter(|s| s.pattern == pattern && s.p >= lo && s.p <= hi)
        .map(|s| {
            let (fa, fb) = features(pattern, s.p, s.bytes);
            (fa, fb, s.seconds)
        })
        .collect();
    if rows.len() < 2 {
        return Err(CalibError::InsufficientSamples(rows.len()));
    }

    // Normal equations for the 2x2 system.
    let (mut saa, mut sab, mut sbb, mut sat, mut sbt) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(fa, fb, t) in &rows {
        saa += fa * fa;
        sab += fa * fb;
        sbb += fb * fb;
        sat += fa * t;
        sbt += fb * t;
    }
    // det / (saa * sbb) = sin^2 of the angle between the feature
    // vectors; collinear samples drive it to rounding noise.
    let det = saa * sbb - sab * sab;
    if saa * sbb == 0.0 || det.abs() <= 1e-12 * saa * sbb {
        return Err(CalibError::DegenerateFit(
            "samples are collinear in the (latency, byte) features".into(),
        ));
    }
    let mut alpha = (sat * sbb - sbt * sab) / det;
    let mut beta = (saa * sbt - sab * sat) / det;
    if alpha < 0.0 {
        alpha = 0.0;
        if sbb == 0.0 {
            return Err(CalibError::DegenerateFit("all byte features are zero".into()));
        }
        beta = sbt / sbb;
    }
    if beta <= 0.0 {
        return Err(CalibError::DegenerateFit(format!(
            "fitted beta is non-positive ({beta:e})"
        )));
    }
    Ok((alpha, beta))
}

/// Fits one tier per entry of `ranges`, named after the range.
pub fn fit_tiers(
    samples: &[BenchmarkSample],
    pattern: CommPattern,
    ranges: &[(String, u64, u64)],
) -> Result<Vec<NetworkTier>, CalibError> {
    ranges
        .iter()
        .map(|(name, lo, hi)| {
            let (alpha, beta) = fit_alpha_beta(samples, pattern, (*lo, *hi))?;
            Ok(NetworkTier { name: name.clone(), max_pes: *hi, alpha, beta })
        })
        .collect()
}

/// Parses the benchmark CSV `pattern,p,bytes,seconds`; a header line is
/// skipped when present.
pub fn parse_benchmarks(text: &str) -> Result<Vec<BenchmarkSample>, CalibError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if idx == 0 && line.to_ascii_lowercase().starts_with("pattern,") {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(CalibError::Parse {
                line: line_no,
                msg: format!("expected 4 fields, got {}", fields.len()),
            });
        }
        let pattern: CommPattern = fields[0]
            .parse()
            .map_err(|msg| CalibError::Parse { line: line_no, msg })?;
        let p: u64 = fields[1].parse().map_err(|_| CalibError::Parse {
            line: line_no,
            msg: format!("invalid PE count `{}`", fields[1]),
        })?;
        let bytes: f64 = fields[2].parse().map_err(|_| CalibError::Parse {
            line: line_no,
            msg: format!("invalid byte count `{}`", fields[2]),
        })?;
        let seconds: f64 = fields[3].parse().map_err(|_| CalibError::Parse {
            line: line_no,
            msg: format!("invalid time `{}`", fields[3]),
        })?;
        if seconds <= 0.0 {
            return Err(CalibError::Parse {
                line: line_no,
                msg: "sample time must be positive".into(),
            });
        }
        if matches!(pattern, CommPattern::Allreduce | CommPattern::Allgather) && p < 2 {
            return Err(CalibError::Parse {
                line: line_no,
                msg: "collective samples need p >= 2".into(),
            });
        }
        out.push(BenchmarkSample { pattern, p, bytes, seconds });
    }
    Ok(out)
}

/// Loads the timings CSV `layer,fw_s_per_sample,bw_s_per_sample,wu_s_per_iter`.
/// A missing weight-update column defaults to zero with a warning;
/// duplicate layer names keep the last entry.
pub fn load_layer_timings(text: &str) -> Result<BTreeMap<String, LayerTiming>, CalibError> {
    let mut out = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if idx == 0 && line.to_ascii_lowercase().starts_with("layer,") {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 && fields.len() != 4 {
            return Err(CalibError::Parse {
                line: line_no,
                msg: format!("expected 3 or 4 fields, got {}", fields.len()),
            });
        }
        let parse = |value: &str, field: &str| -> Result<f64, CalibError> {
            let v: f64 = value.parse().map_err(|_| CalibError::Parse {
                line: line_no,
                msg: format!("invalid {field}: `{value}`"),
            })?;
            if v < 0.0 {
                return Err(CalibError::Parse {
                    line: line_no,
                    msg: format!("{field} must be >= 0"),
                });
            }
            Ok(v)
        };
        let name = fields[0].to_string();
        let fw = parse(fields[1], "fw")?;
        let bw = parse(fields[2], "bw")?;
        let wu = if fields.len() == 4 {
            parse(fields[3], "wu")?
        } else {
            warn!("timings line {line_no}: layer `{name}` has no weight-update column, using 0");
            0.0
        };
        if out.insert(name.clone(), LayerTiming { fw, bw, wu }).is_some() {
            warn!("timings line {line_no}: duplicate layer `{name}`, keeping the last entry");
        }
    }
    Ok(out)
}

/// Synthetic benchmark generator used by the round-trip checks and the
/// bundled example data: evaluates the pattern's closed form at the
/// given grid.
pub fn synthesize_samples(
    pattern: CommPattern,
    alpha: f64,
    beta: f64,
    pes: &[u64],
    sizes: &[f64],
) -> Vec<BenchmarkSample> {
    let mut out = Vec::new();
    for &p in pes {
        for &m in sizes {
            let (fa, fb) = features(pattern, p, m);
            out.push(BenchmarkSample { pattern, p, bytes: m, seconds: alpha * fa + beta * fb });
        }
    }
    out
}

/// Closed-form check value for the tree estimate; exposed for tests that
/// compare fits across algorithms.
pub fn tree_steps(p: u64, k: u32) -> u32 {
    ceil_log2(p) + k
}
