//! Layer-by-layer CNN model descriptors.
//!
//! A model is an ordered list of layers plus the dataset/batch geometry.
//! Non-convolution layers are rewritten into the unified tensor form
//! (fully-connected becomes a convolution whose kernel spans the input,
//! element-wise layers get `F = C` and no kernel, pooling keeps its kernel
//! but holds no weights) so that every per-layer element count used by the
//! cost formulas is defined the same way for every layer kind.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid model: {0}")]
    Validation(String),
    #[error("layer `{layer}`: non-positive output extent on axis {axis}")]
    NonPositiveOutput { layer: String, axis: usize },
}

/// Spatial extents of one channel, between 1 and 3 axes.
///
/// The empty shape is reserved for the kernels of weight-less layers.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TensorShape(Vec<u64>);

impl TensorShape {
    pub fn new(dims: Vec<u64>) -> Result<Self, ModelError> {
        if dims.is_empty() || dims.len() > 3 {
            return Err(ModelError::Validation(format!(
                "shape must have 1..=3 axes, got {}",
                dims.len()
            )));
        }
        if dims.contains(&0) {
            return Err(ModelError::Validation("shape extents must be >= 1".into()));
        }
        Ok(TensorShape(dims))
    }

    /// Kernel placeholder for layers without weights.
    pub fn none() -> Self {
        TensorShape(Vec::new())
    }

    pub fn is_none(&self) -> bool {
        self.0.is_empty()
    }

    pub fn dims(&self) -> &[u64] {
        &self.0
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    /// Product of the extents; 1 for the empty shape so that weighted
    /// counts multiply through unchanged.
    pub fn elems(&self) -> u64 {
        self.0.iter().product()
    }
}

impl fmt::Display for TensorShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "-");
        }
        let parts: Vec<String> = self.0.iter().map(|d| d.to_string()).collect();
        write!(f, "{}", parts.join(","))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Conv,
    Pool,
    FullyConnected,
    ElementWise,
    Norm,
}

impl LayerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            LayerKind::Conv => "conv",
            LayerKind::Pool => "pool",
            LayerKind::FullyConnected => "fc",
            LayerKind::ElementWise => "elementwise",
            LayerKind::Norm => "norm",
        }
    }

    /// Layers that own a weight tensor `w[C,F,K]`.
    pub fn is_weighted(&self) -> bool {
        matches!(self, LayerKind::Conv | LayerKind::FullyConnected)
    }
}

impl FromStr for LayerKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "conv" => Ok(LayerKind::Conv),
            "pool" => Ok(LayerKind::Pool),
            "fc" | "fullyconnected" => Ok(LayerKind::FullyConnected),
            "elementwise" | "ew" | "relu" => Ok(LayerKind::ElementWise),
            "norm" | "bn" => Ok(LayerKind::Norm),
            other => Err(format!("unknown layer kind `{other}`")),
        }
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One layer of the model, in the unified `x[N,C,X] -> y[N,F,Y]` notation.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerDescriptor {
    pub name: String,
    pub kind: LayerKind,
    /// Input channels `C`.
    pub in_channels: u64,
    /// Output channels `F` (filters for a convolution).
    pub out_channels: u64,
    /// Spatial extents of one input channel `X`.
    pub input_shape: TensorShape,
    /// Kernel extents `K`; `TensorShape::none()` for kernel-less layers.
    pub kernel: TensorShape,
    /// Per-axis stride; broadcast from a single value when parsed.
    pub stride: Vec<u64>,
    /// Per-axis zero padding.
    pub padding: Vec<u64>,
    pub has_bias: bool,
    /// Optional explicit input references for flattened branch layers.
    /// A layer carrying references is exempt from the linear chain check;
    /// the referenced names must exist earlier in the layer list.
    pub input_refs: Vec<String>,
}

/// Element counts that drive every cost and memory formula.
///
/// `x_elems`/`y_elems` are per single sample; `w_elems`/`bias_elems` are
/// totals for the layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerCounts {
    pub x_elems: u64,
    pub y_elems: u64,
    pub w_elems: u64,
    pub bias_elems: u64,
}

/// A full model: ordered layers plus dataset size `D`, mini-batch `B`
/// and epoch count `E`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelDescriptor {
    pub layers: Vec<LayerDescriptor>,
    pub dataset_size: u64,
    pub batch_size: u64,
    pub epochs: u64,
}

fn stride_at(layer: &LayerDescriptor, axis: usize) -> u64 {
    layer.stride.get(axis).copied().unwrap_or(1)
}

fn padding_at(layer: &LayerDescriptor, axis: usize) -> u64 {
    layer.padding.get(axis).copied().unwrap_or(0)
}

/// Output spatial shape under standard convolution arithmetic:
/// `out = floor((in + 2*pad - K) / stride) + 1` per axis.
///
/// Fully-connected layers collapse to an all-ones shape; kernel-less
/// layers pass the input through unchanged.
pub fn infer_output_shape(layer: &LayerDescriptor) -> Result<TensorShape, ModelError> {
    match layer.kind {
        LayerKind::FullyConnected => {
            TensorShape::new(vec![1; layer.input_shape.rank()])
        }
        LayerKind::ElementWise | LayerKind::Norm => Ok(layer.input_shape.clone()),
        LayerKind::Conv | LayerKind::Pool => {
            if layer.kernel.is_none() {
                return Ok(layer.input_shape.clone());
            }
            if layer.kernel.rank() != layer.input_shape.rank() {
                return Err(ModelError::Validation(format!(
                    "layer `{}`: kernel rank {} does not match input rank {}",
                    layer.name,
                    layer.kernel.rank(),
                    layer.input_shape.rank()
                )));
            }
            let mut out = Vec::with_capacity(layer.input_shape.rank());
            for (axis, (&input, &k)) in layer
                .input_shape
                .dims()
                .iter()
                .zip(layer.kernel.dims())
                .enumerate()
            {
                let padded = input + 2 * padding_at(layer, axis);
                if k > padded {
                    return Err(ModelError::Validation(format!(
                        "layer `{}`: kernel {} exceeds padded input {} on axis {}",
                        layer.name, k, padded, axis
                    )));
                }
                let span = padded - k;
                let o = span / stride_at(layer, axis) + 1;
                if o < 1 {
                    return Err(ModelError::NonPositiveOutput {
                        layer: layer.name.clone(),
                        axis,
                    });
                }
                out.push(o);
            }
            TensorShape::new(out)
        }
    }
}

/// Rewrites a layer into the unified tensor notation. Idempotent.
pub fn adapt_layer(layer: &LayerDescriptor) -> LayerDescriptor {
    let mut adapted = layer.clone();
    match layer.kind {
        LayerKind::FullyConnected => {
            // A fully-connected layer is a convolution whose kernel covers
            // the whole input, with no padding and unit stride.
            adapted.kernel = adapted.input_shape.clone();
            adapted.padding = vec![0; adapted.input_shape.rank()];
            adapted.stride = vec![1; adapted.input_shape.rank()];
        }
        LayerKind::ElementWise | LayerKind::Norm => {
            adapted.out_channels = adapted.in_channels;
            adapted.kernel = TensorShape::none();
        }
        LayerKind::Pool => {
            // Keeps its kernel for shape inference but owns no weights.
        }
        LayerKind::Conv => {}
    }
    adapted
}

fn counts_for_layer(layer: &LayerDescriptor) -> Result<LayerCounts, ModelError> {
    let adapted = adapt_layer(layer);
    let out_shape = infer_output_shape(&adapted)?;
    let w_elems = if adapted.kind.is_weighted() {
        adapted.in_channels * adapted.out_channels * adapted.kernel.elems()
    } else {
        0
    };
    Ok(LayerCounts {
        x_elems: adapted.in_channels * adapted.input_shape.elems(),
        y_elems: adapted.out_channels * out_shape.elems(),
        w_elems,
        bias_elems: if adapted.has_bias { adapted.out_channels } else { 0 },
    })
}

/// Per-layer element counts for the whole model, in layer order.
pub fn layer_counts(model: &ModelDescriptor) -> Result<Vec<LayerCounts>, ModelError> {
    model.layers.iter().map(counts_for_layer).collect()
}

impl ModelDescriptor {
    /// Iterations per epoch `I = D / B`. Fractional when `B` does not
    /// divide `D`; the cost formulas treat it as an average rate.
    pub fn iterations(&self) -> f64 {
        self.dataset_size as f64 / self.batch_size as f64
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Total parameter count: `sum(|w_l| + |bi_l|)`.
    pub fn parameter_count(&self) -> Result<u64, ModelError> {
        Ok(layer_counts(self)?
            .iter()
            .map(|c| c.w_elems + c.bias_elems)
            .sum())
    }

    /// Checks the structural invariants: positive geometry, inferable
    /// shapes, and element-count chaining between consecutive layers.
    /// Layers with explicit `input=` references are exempt from the
    /// chain check but their references must resolve to earlier layers.
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.layers.is_empty() {
            return Err(ModelError::Validation("model has no layers".into()));
        }
        if self.batch_size == 0 || self.dataset_size == 0 {
            return Err(ModelError::Validation("D and B must be positive".into()));
        }
        if self.batch_size > self.dataset_size {
            return Err(ModelError::Validation(format!(
                "batch size {} exceeds dataset size {}",
                self.batch_size, self.dataset_size
            )));
        }
        let mut seen: HashSet<&str> = HashSet::new();
        for layer in &self.layers {
            if layer.in_channels == 0 || layer.out_channels == 0 {
                return Err(ModelError::Validation(format!(
                    "layer `{}`: channel counts must be >= 1",
                    layer.name
                )));
            }
            for reference in &layer.input_refs {
                if !seen.contains(reference.as_str()) {
                    return Err(ModelError::Validation(format!(
                        "layer `{}`: input reference `{}` does not name an earlier layer",
                        layer.name, reference
                    )));
                }
            }
            if !seen.insert(&layer.name) {
                return Err(ModelError::Validation(format!(
                    "duplicate layer name `{}`",
                    layer.name
                )));
            }
        }
        let counts = layer_counts(self)?;
        for (idx, window) in self.layers.windows(2).enumerate() {
            let next = &window[1];
            if !next.input_refs.is_empty() {
                continue;
            }
            let produced = counts[idx].y_elems;
            let consumed = counts[idx + 1].x_elems;
            if produced != consumed {
                return Err(ModelError::Validation(format!(
                    "shape chain broken between `{}` ({} elements out) and `{}` ({} elements in)",
                    window[0].name, produced, next.name, consumed
                )));
            }
        }
        Ok(())
    }
}

fn parse_u64(value: &str, line: usize, field: &str) -> Result<u64, ModelError> {
    value.parse().map_err(|_| ModelError::Parse {
        line,
        msg: format!("invalid integer for {field}: `{value}`"),
    })
}

fn parse_axis_list(value: &str, line: usize, field: &str) -> Result<Vec<u64>, ModelError> {
    value
        .split(',')
        .map(|part| parse_u64(part.trim(), line, field))
        .collect()
}

fn parse_shape(value: &str, line: usize, field: &str) -> Result<TensorShape, ModelError> {
    if value == "-" {
        return Ok(TensorShape::none());
    }
    let dims = parse_axis_list(value, line, field)?;
    TensorShape::new(dims).map_err(|e| ModelError::Parse {
        line,
        msg: format!("{field}: {e}"),
    })
}

/// Parses the line-oriented model file format.
///
/// ```text
/// # comment
/// dataset D=1281167 B=32 E=90
/// conv1 conv C=3 F=64 X=226,226 K=7,7 stride=2 pad=3 bias=0
/// ```
pub fn parse_model(text: &str) -> Result<ModelDescriptor, ModelError> {
    let mut dataset: Option<(u64, u64, u64)> = None;
    let mut layers = Vec::new();

    for (line_idx, raw) in text.lines().enumerate() {
        let line_no = line_idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let head = tokens.next().expect("non-empty line has a token");

        if head == "dataset" {
            let mut d = None;
            let mut b = None;
            let mut e = 1;
            for tok in tokens {
                let (key, value) = tok.split_once('=').ok_or_else(|| ModelError::Parse {
                    line: line_no,
                    msg: format!("expected key=value, got `{tok}`"),
                })?;
                match key {
                    "D" => d = Some(parse_u64(value, line_no, "D")?),
                    "B" => b = Some(parse_u64(value, line_no, "B")?),
                    "E" => e = parse_u64(value, line_no, "E")?,
                    other => {
                        return Err(ModelError::Parse {
                            line: line_no,
                            msg: format!("unknown dataset field `{other}`"),
                        })
                    }
                }
            }
            let d = d.ok_or(ModelError::Parse { line: line_no, msg: "missing D".into() })?;
            let b = b.ok_or(ModelError::Parse { line: line_no, msg: "missing B".into() })?;
            dataset = Some((d, b, e));
            continue;
        }

        // Layer line: <name> <kind> key=value...
        let kind_tok = tokens.next().ok_or_else(|| ModelError::Parse {
            line: line_no,
            msg: "layer line needs a kind".into(),
        })?;
        let kind: LayerKind = kind_tok.parse().map_err(|msg| ModelError::Parse {
            line: line_no,
            msg,
        })?;

        let mut c = None;
        let mut f = None;
        let mut x = None;
        let mut k = TensorShape::none();
        let mut stride = vec![1];
        let mut pad = vec![0];
        let mut bias = false;
        let mut input_refs = Vec::new();
        for tok in tokens {
            let (key, value) = tok.split_once('=').ok_or_else(|| ModelError::Parse {
                line: line_no,
                msg: format!("expected key=value, got `{tok}`"),
            })?;
            match key {
                "C" => c = Some(parse_u64(value, line_no, "C")?),
                "F" => f = Some(parse_u64(value, line_no, "F")?),
                "X" => x = Some(parse_shape(value, line_no, "X")?),
                "K" => k = parse_shape(value, line_no, "K")?,
                "stride" => stride = parse_axis_list(value, line_no, "stride")?,
                "pad" => pad = parse_axis_list(value, line_no, "pad")?,
                "bias" => {
                    bias = match value {
                        "1" => true,
                        "0" => false,
                        other => {
                            return Err(ModelError::Parse {
                                line: line_no,
                                msg: format!("bias must be 0 or 1, got `{other}`"),
                            })
                        }
                    }
                }
                "input" => {
                    input_refs = value.split('+').map(|s| s.trim().to_string()).collect();
                }
                other => {
                    return Err(ModelError::Parse {
                        line: line_no,
                        msg: format!("unknown layer field `{other}`"),
                    })
                }
            }
        }
        let missing = |field: &str| ModelError::Parse {
            line: line_no,
            msg: format!("layer `{head}` is missing {field}"),
        };
        let input_shape = x.ok_or_else(|| missing("X"))?;
        let rank = input_shape.rank();
        let broadcast = |mut values: Vec<u64>| -> Vec<u64> {
            if values.len() == 1 && rank > 1 {
                values = vec![values[0]; rank];
            }
            values
        };
        layers.push(LayerDescriptor {
            name: head.to_string(),
            kind,
            in_channels: c.ok_or_else(|| missing("C"))?,
            out_channels: f.ok_or_else(|| missing("F"))?,
            input_shape,
            kernel: k,
            stride: broadcast(stride),
            padding: broadcast(pad),
            has_bias: bias,
            input_refs,
        });
    }

    let (dataset_size, batch_size, epochs) = dataset.ok_or(ModelError::Parse {
        line: 0,
        msg: "missing `dataset` header line".into(),
    })?;
    let model = ModelDescriptor { layers, dataset_size, batch_size, epochs };
    model.validate()?;
    Ok(model)
}

impl fmt::Display for ModelDescriptor {
    /// Canonical file form; `parse_model` of the output reproduces the
    /// descriptor.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "dataset D={} B={} E={}",
            self.dataset_size, self.batch_size, self.epochs
        )?;
        for layer in &self.layers {
            let join = |values: &[u64]| {
                values
                    .iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            };
            write!(
                f,
                "{} {} C={} F={} X={} K={} stride={} pad={} bias={}",
                layer.name,
                layer.kind,
                layer.in_channels,
                layer.out_channels,
                layer.input_shape,
                layer.kernel,
                join(&layer.stride),
                join(&layer.padding),
                if layer.has_bias { 1 } else { 0 }
            )?;
            if !layer.input_refs.is_empty() {
                write!(f, " input={}", layer.input_refs.join("+"))?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conv(name: &str, c: u64, f: u64, x: Vec<u64>, k: Vec<u64>, stride: u64, pad: u64) -> LayerDescriptor {
        LayerDescriptor {
            name: name.into(),
            kind: LayerKind::Conv,
            in_channels: c,
            out_channels: f,
            input_shape: TensorShape::new(x).unwrap(),
            kernel: TensorShape::new(k).unwrap(),
            stride: vec![stride; 2],
            padding: vec![pad; 2],
            has_bias: false,
            input_refs: vec![],
        }
    }

    /// Brute-force oracle: counts the valid placements of a kernel along
    /// one padded axis.
    fn enumerate_placements(input: i64, k: i64, stride: i64, pad: i64) -> u64 {
        let mut count = 0;
        let mut start = -pad;
        while start + k <= input + pad {
            count += 1;
            start += stride;
        }
        count
    }

    #[test]
    fn conv_output_matches_placement_enumeration() {
        // 224 input, 7x7 kernel, stride 2, pad 3 -> 112.
        assert_eq!(enumerate_placements(224, 7, 2, 3), 112);
        let layer = conv("c", 3, 64, vec![224, 224], vec![7, 7], 2, 3);
        let out = infer_output_shape(&layer).unwrap();
        assert_eq!(out.dims(), &[112, 112]);

        // Sweep a grid against the enumeration oracle.
        for input in [5u64, 8, 31, 226] {
            for k in [1u64, 2, 3, 5, 7] {
                for stride in [1u64, 2, 3] {
                    for pad in [0u64, 1, 3] {
                        if k > input + 2 * pad {
                            continue;
                        }
                        let expect =
                            enumerate_placements(input as i64, k as i64, stride as i64, pad as i64);
                        let layer = conv("c", 1, 1, vec![input, input], vec![k, k], stride, pad);
                        let out = infer_output_shape(&layer).unwrap();
                        assert_eq!(out.dims()[0], expect, "in={input} k={k} s={stride} p={pad}");
                    }
                }
            }
        }
    }

    #[test]
    fn identity_kernel_preserves_extent() {
        let layer = conv("c", 1, 1, vec![226, 226], vec![1, 1], 1, 0);
        assert_eq!(infer_output_shape(&layer).unwrap().dims(), &[226, 226]);
    }

    #[test]
    fn fully_connected_collapses_to_ones() {
        let layer = LayerDescriptor {
            name: "fc".into(),
            kind: LayerKind::FullyConnected,
            in_channels: 512,
            out_channels: 1000,
            input_shape: TensorShape::new(vec![7, 7]).unwrap(),
            kernel: TensorShape::none(),
            stride: vec![1, 1],
            padding: vec![0, 0],
            has_bias: true,
            input_refs: vec![],
        };
        assert_eq!(infer_output_shape(&layer).unwrap().dims(), &[1, 1]);
        let adapted = adapt_layer(&layer);
        assert_eq!(adapted.kernel.dims(), &[7, 7]);
        let counts = counts_for_layer(&layer).unwrap();
        assert_eq!(counts.w_elems, 512 * 1000 * 49);
        assert_eq!(counts.bias_elems, 1000);
    }

    #[test]
    fn elementwise_and_pool_hold_no_weights() {
        let relu = LayerDescriptor {
            name: "relu".into(),
            kind: LayerKind::ElementWise,
            in_channels: 64,
            out_channels: 64,
            input_shape: TensorShape::new(vec![28, 28]).unwrap(),
            kernel: TensorShape::none(),
            stride: vec![1],
            padding: vec![0],
            has_bias: false,
            input_refs: vec![],
        };
        let adapted = adapt_layer(&relu);
        assert_eq!(adapted.out_channels, 64);
        let counts = counts_for_layer(&relu).unwrap();
        assert_eq!(counts.w_elems, 0);

        let pool = LayerDescriptor {
            name: "pool".into(),
            kind: LayerKind::Pool,
            in_channels: 64,
            out_channels: 64,
            input_shape: TensorShape::new(vec![28, 28]).unwrap(),
            kernel: TensorShape::new(vec![2, 2]).unwrap(),
            stride: vec![2, 2],
            padding: vec![0, 0],
            has_bias: false,
            input_refs: vec![],
        };
        let counts = counts_for_layer(&pool).unwrap();
        assert_eq!(counts.w_elems, 0);
        assert_eq!(counts.bias_elems, 0);
        assert_eq!(counts.y_elems, 64 * 14 * 14);
    }

    #[test]
    fn adapt_is_idempotent() {
        let layer = LayerDescriptor {
            name: "fc".into(),
            kind: LayerKind::FullyConnected,
            in_channels: 16,
            out_channels: 10,
            input_shape: TensorShape::new(vec![4, 4]).unwrap(),
            kernel: TensorShape::none(),
            stride: vec![1],
            padding: vec![0],
            has_bias: true,
            input_refs: vec![],
        };
        let once = adapt_layer(&layer);
        let twice = adapt_layer(&once);
        assert_eq!(once, twice);
        assert_eq!(counts_for_layer(&once).unwrap(), counts_for_layer(&twice).unwrap());
    }

    #[test]
    fn multiply_out_oracle_for_conv_counts() {
        // 3 channels x 64 filters x 3x3 kernel.
        let layer = conv("c", 3, 64, vec![226, 226], vec![3, 3], 1, 1);
        let counts = counts_for_layer(&layer).unwrap();
        let mut by_loop = 0u64;
        for _c in 0..3 {
            for _f in 0..64 {
                for _k in 0..9 {
                    by_loop += 1;
                }
            }
        }
        assert_eq!(by_loop, 1728);
        assert_eq!(counts.w_elems, 1728);
    }

    #[test]
    fn parse_minimal_model() {
        let text = "dataset D=100 B=10 E=1\nc1 conv C=3 F=8 X=8,8 K=3,3 stride=1 pad=1 bias=1\n";
        let model = parse_model(text).unwrap();
        assert_eq!(model.num_layers(), 1);
        assert_eq!(model.iterations(), 10.0);
        let counts = layer_counts(&model).unwrap();
        assert_eq!(counts[0].w_elems, 3 * 8 * 9);
        assert_eq!(counts[0].bias_elems, 8);
    }

    #[test]
    fn parse_rejects_batch_larger_than_dataset() {
        let text = "dataset D=8 B=16 E=1\nc1 conv C=3 F=8 X=8,8 K=3,3 stride=1 pad=1 bias=0\n";
        let err = parse_model(text).unwrap_err();
        assert!(matches!(err, ModelError::Validation(_)), "got {err:?}");
    }

    #[test]
    fn parse_reports_line_numbers() {
        let text = "dataset D=100 B=10 E=1\nc1 conv C=x F=8 X=8,8 K=3,3\n";
        match parse_model(text).unwrap_err() {
            ModelError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn chain_validation_catches_mismatch() {
        let text = "dataset D=100 B=10 E=1\n\
                    c1 conv C=3 F=8 X=8,8 K=3,3 stride=1 pad=1 bias=0\n\
                    c2 conv C=16 F=8 X=8,8 K=3,3 stride=1 pad=1 bias=0\n";
        assert!(parse_model(text).is_err());
    }

    #[test]
    fn branch_reference_skips_chain_check() {
        let text = "dataset D=100 B=10 E=1\n\
                    c1 conv C=3 F=8 X=8,8 K=3,3 stride=1 pad=1 bias=0\n\
                    c2 conv C=16 F=8 X=8,8 K=3,3 stride=1 pad=1 bias=0 input=c1\n";
        let model = parse_model(text).unwrap();
        assert_eq!(model.layers[1].input_refs, vec!["c1".to_string()]);

        let dangling = "dataset D=100 B=10 E=1\n\
                        c1 conv C=3 F=8 X=8,8 K=3,3 stride=1 pad=1 bias=0 input=nope\n";
        assert!(parse_model(dangling).is_err());
    }

    #[test]
    fn display_round_trips() {
        let text = "dataset D=100 B=10 E=2\n\
                    c1 conv C=3 F=8 X=8,8 K=3,3 stride=1 pad=1 bias=1\n\
                    r1 elementwise C=8 F=8 X=8,8 K=- stride=1 pad=0 bias=0\n\
                    p1 pool C=8 F=8 X=8,8 K=2,2 stride=2 pad=0 bias=0\n\
                    fc fc C=8 F=10 X=4,4 K=- stride=1 pad=0 bias=1\n";
        let model = parse_model(text).unwrap();
        let canonical = model.to_string();
        let reparsed = parse_model(&canonical).unwrap();
        assert_eq!(model, reparsed);
        assert_eq!(canonical, reparsed.to_string());
    }
}
