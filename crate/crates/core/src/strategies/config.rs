//! Strategy configurations and the textual configuration grammar.

use std::fmt;
use std::ops::Range;

use crate::strategies::PredictError;

/// Contiguous partition of layer indices into ordered groups.
pub type LayerGroups = Vec<Range<usize>>;

/// Which tensor dimensions are split, and how.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StrategyConfig {
    Serial,
    /// Mini-batch sharded across `p` replicas.
    Data { p: u64 },
    /// Sample spatial extents split `pw x ph x pd`.
    Spatial { pw: u64, ph: u64, pd: u64 },
    /// Depth-wise partition, batch passed whole from stage to stage.
    LayerPure { p: u64, groups: Option<LayerGroups> },
    /// Depth-wise partition streamed as `segments` micro-segments.
    Pipeline { p: u64, segments: u64, groups: Option<LayerGroups> },
    /// Weights split by output filters.
    Filter { p: u64 },
    /// Weights split by input channels; `first_layer` is the 0-based
    /// index where channel splitting starts (the input layer of a model
    /// usually has too few channels to split).
    Channel { p: u64, first_layer: usize },
    /// `p1` data-parallel groups, each running filter parallelism over
    /// `p2` PEs.
    DataFilter { p1: u64, p2: u64 },
    /// `p1` data-parallel groups, each splitting samples spatially.
    DataSpatial { p1: u64, pw: u64, ph: u64, pd: u64 },
}

impl StrategyConfig {
    /// Total PE count the configuration occupies; saturates on absurd
    /// split products instead of wrapping.
    pub fn total_pes(&self) -> u64 {
        let product =
            |parts: &[u64]| parts.iter().copied().fold(1u64, u64::saturating_mul);
        match self {
            StrategyConfig::Serial => 1,
            StrategyConfig::Data { p }
            | StrategyConfig::LayerPure { p, .. }
            | StrategyConfig::Pipeline { p, .. }
            | StrategyConfig::Filter { p }
            | StrategyConfig::Channel { p, .. } => *p,
            StrategyConfig::Spatial { pw, ph, pd } => product(&[*pw, *ph, *pd]),
            StrategyConfig::DataFilter { p1, p2 } => product(&[*p1, *p2]),
            StrategyConfig::DataSpatial { p1, pw, ph, pd } => product(&[*p1, *pw, *ph, *pd]),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            StrategyConfig::Serial => "serial",
            StrategyConfig::Data { .. } => "data",
            StrategyConfig::Spatial { .. } => "spatial",
            StrategyConfig::LayerPure { .. } => "layer",
            StrategyConfig::Pipeline { .. } => "pipeline",
            StrategyConfig::Filter { .. } => "filter",
            StrategyConfig::Channel { .. } => "channel",
            StrategyConfig::DataFilter { .. } => "df",
            StrategyConfig::DataSpatial { .. } => "ds",
        }
    }
}

fn invalid(msg: impl Into<String>) -> PredictError {
    PredictError::InvalidConfig(msg.into())
}

fn parse_fields(spec: &str) -> Result<Vec<(&str, &str)>, PredictError> {
    spec.split(',')
        .filter(|part| !part.is_empty())
        .map(|part| {
            part.split_once('=')
                .ok_or_else(|| invalid(format!("expected key=value, got `{part}`")))
        })
        .collect()
}

fn get_u64(fields: &[(&str, &str)], key: &str) -> Result<Option<u64>, PredictError> {
    for (k, v) in fields {
        if *k == key {
            let value: u64 = v
                .parse()
                .map_err(|_| invalid(format!("invalid integer for {key}: `{v}`")))?;
            if value == 0 {
                return Err(invalid(format!("{key} must be >= 1")));
            }
            return Ok(Some(value));
        }
    }
    Ok(None)
}

fn require_u64(fields: &[(&str, &str)], key: &str, what: &str) -> Result<u64, PredictError> {
    get_u64(fields, key)?.ok_or_else(|| invalid(format!("{what} requires {key}=<n>")))
}

/// Parses `groups=a-b/c-d/...` with 1-based inclusive layer ranges.
fn parse_groups(value: &str) -> Result<LayerGroups, PredictError> {
    let mut groups = Vec::new();
    let mut next_start = 1usize;
    for part in value.split('/') {
        let (lo, hi) = part
            .split_once('-')
            .ok_or_else(|| invalid(format!("group `{part}` must look like a-b")))?;
        let lo: usize = lo.parse().map_err(|_| invalid(format!("bad group bound `{lo}`")))?;
        let hi: usize = hi.parse().map_err(|_| invalid(format!("bad group bound `{hi}`")))?;
        if lo != next_start || hi < lo {
            return Err(invalid(format!(
                "groups must be contiguous and ordered; expected a group starting at {next_start}"
            )));
        }
        groups.push(lo - 1..hi);
        next_start = hi + 1;
    }
    if groups.is_empty() {
        return Err(invalid("groups list is empty"));
    }
    Ok(groups)
}

/// Checks a group partition against the model's layer count.
pub fn validate_groups(groups: &LayerGroups, num_layers: usize) -> Result<(), PredictError> {
    let mut expected = 0usize;
    for group in groups {
        if group.start != expected || group.end <= group.start {
            return Err(invalid("groups must be non-empty, contiguous and ordered"));
        }
        expected = group.end;
    }
    if expected != num_layers {
        return Err(invalid(format!(
            "groups cover {expected} layers but the model has {num_layers}"
        )));
    }
    Ok(())
}

/// Parses the strategy grammar:
///
/// ```text
/// serial | data:p=<n> | spatial:pw=<n>,ph=<n>[,pd=<n>]
///   | pipeline:p=<n>,S=<n>[,groups=a-b/c-d/...] | filter:p=<n>
///   | channel:p=<n>[,from=<layer>] | df:p1=<n>,p2=<n>
///   | ds:p1=<n>,pw=<n>,ph=<n>[,pd=<n>]
/// ```
pub fn parse_strategy(text: &str) -> Result<StrategyConfig, PredictError> {
    let text = text.trim();
    let (name, rest) = match text.split_once(':') {
        Some((name, rest)) => (name, rest),
        None => (text, ""),
    };
    let fields = parse_fields(rest)?;
    let groups = fields
        .iter()
        .find(|(k, _)| *k == "groups")
        .map(|(_, v)| parse_groups(v))
        .transpose()?;
    match name {
        "serial" => {
            if !rest.is_empty() {
                return Err(invalid("serial takes no parameters"));
            }
            Ok(StrategyConfig::Serial)
        }
        "data" => Ok(StrategyConfig::Data { p: require_u64(&fields, "p", "data")? }),
        "spatial" => Ok(StrategyConfig::Spatial {
            pw: require_u64(&fields, "pw", "spatial")?,
            ph: get_u64(&fields, "ph")?.unwrap_or(1),
            pd: get_u64(&fields, "pd")?.unwrap_or(1),
        }),
        "layer" => Ok(StrategyConfig::LayerPure {
            p: require_u64(&fields, "p", "layer")?,
            groups,
        }),
        "pipeline" => Ok(StrategyConfig::Pipeline {
            p: require_u64(&fields, "p", "pipeline")?,
            segments: require_u64(&fields, "S", "pipeline")?,
            groups,
        }),
        "filter" => Ok(StrategyConfig::Filter { p: require_u64(&fields, "p", "filter")? }),
        "channel" => Ok(StrategyConfig::Channel {
            p: require_u64(&fields, "p", "channel")?,
            first_layer: get_u64(&fields, "from")?.map(|v| v as usize - 1).unwrap_or(1),
        }),
        "df" => Ok(StrategyConfig::DataFilter {
            p1: require_u64(&fields, "p1", "df")?,
            p2: require_u64(&fields, "p2", "df")?,
        }),
        "ds" => Ok(StrategyConfig::DataSpatial {
            p1: require_u64(&fields, "p1", "ds")?,
            pw: require_u64(&fields, "pw", "ds")?,
            ph: get_u64(&fields, "ph")?.unwrap_or(1),
            pd: get_u64(&fields, "pd")?.unwrap_or(1),
        }),
        other => Err(invalid(format!("unknown strategy `{other}`"))),
    }
}

fn write_groups(f: &mut fmt::Formatter<'_>, groups: &Option<LayerGroups>) -> fmt::Result {
    if let Some(groups) = groups {
        let parts: Vec<String> = groups
            .iter()
            .map(|g| format!("{}-{}", g.start + 1, g.end))
            .collect();
        write!(f, ",groups={}", parts.join("/"))?;
    }
    Ok(())
}

impl fmt::Display for StrategyConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StrategyConfig::Serial => write!(f, "serial"),
            StrategyConfig::Data { p } => write!(f, "data:p={p}"),
            StrategyConfig::Spatial { pw, ph, pd } => {
                write!(f, "spatial:pw={pw},ph={ph}")?;
                if *pd != 1 {
                    write!(f, ",pd={pd}")?;
                }
                Ok(())
            }
            StrategyConfig::LayerPure { p, groups } => {
                write!(f, "layer:p={p}")?;
                write_groups(f, groups)
            }
            StrategyConfig::Pipeline { p, segments, groups } => {
                write!(f, "pipeline:p={p},S={segments}")?;
                write_groups(f, groups)
            }
            StrategyConfig::Filter { p } => write!(f, "filter:p={p}"),
            StrategyConfig::Channel { p, first_layer } => {
                write!(f, "channel:p={p}")?;
                if *first_layer != 1 {
                    write!(f, ",from={}", first_layer + 1)?;
                }
                Ok(())
            }
            StrategyConfig::DataFilter { p1, p2 } => write!(f, "df:p1={p1},p2={p2}"),
            StrategyConfig::DataSpatial { p1, pw, ph, pd } => {
                write!(f, "ds:p1={p1},pw={pw},ph={ph}")?;
                if *pd != 1 {
                    write!(f, ",pd={pd}")?;
                }
                Ok(())
            }
        }
    }
}
