//! Halo-exchange volumes for spatially split convolutions.
//!
//! When a kernel wider than one element straddles a partition border,
//! the owning PE needs `floor(K/2)` boundary rows/columns from each
//! logical neighbor on that axis. Volumes are computed for the
//! worst-placed PE (an interior one where the split allows it) since
//! that PE sits on the critical path.

use crate::model::LayerDescriptor;
use crate::strategies::PredictError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PePosition {
    Interior,
    Edge,
}

fn ceil_div(a: u64, b: u64) -> u64 {
    a.div_ceil(b)
}

/// Received halo elements for one layer under the given spatial split.
///
/// `channels` and `dims` describe the tensor being exchanged (the layer
/// input for the forward halo, the layer output for the activation
/// gradient halo); the kernel and split are per spatial axis. Returns 0
/// when every split axis has kernel extent <= 1.
pub fn halo_volume(
    channels: u64,
    dims: &[u64],
    kernel: &[u64],
    split: &[u64],
    position: PePosition,
) -> Result<u64, PredictError> {
    let mut total = 0u64;
    for axis in 0..dims.len() {
        let parts = split.get(axis).copied().unwrap_or(1);
        if parts <= 1 {
            continue;
        }
        let width = kernel.get(axis).copied().unwrap_or(0) / 2;
        if width == 0 {
            continue;
        }
        let smallest_extent = dims[axis] / parts;
        if smallest_extent < width {
            return Err(PredictError::SplitTooFine {
                axis,
                extent: smallest_extent,
                halo: width,
            });
        }
        let neighbors = match position {
            PePosition::Interior => (parts - 1).min(2),
            PePosition::Edge => 1,
        };
        let mut cross_section = 1u64;
        for (other_axis, &extent) in dims.iter().enumerate() {
            if other_axis == axis {
                continue;
            }
            let other_parts = split.get(other_axis).copied().unwrap_or(1);
            cross_section *= ceil_div(extent, other_parts);
        }
        total += width * neighbors * cross_section;
    }
    Ok(total * channels)
}

/// Forward-input halo for a layer: kernel over the input tensor.
pub fn halo_elements(
    layer: &LayerDescriptor,
    split: &[u64],
    position: PePosition,
) -> Result<u64, PredictError> {
    halo_volume(
        layer.in_channels,
        layer.input_shape.dims(),
        layer.kernel.dims(),
        split,
        position,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LayerDescriptor, LayerKind, TensorShape};
    use std::collections::BTreeSet;

    fn conv(c: u64, x: Vec<u64>, k: Vec<u64>) -> LayerDescriptor {
        let rank = x.len();
        LayerDescriptor {
            name: "c".into(),
            kind: LayerKind::Conv,
            in_channels: c,
            out_channels: c,
            input_shape: TensorShape::new(x).unwrap(),
            kernel: TensorShape::new(k).unwrap(),
            stride: vec![1; rank],
            padding: vec![1; rank],
            has_bias: false,
            input_refs: vec![],
        }
    }

    /// Brute-force oracle: enumerate the remote input coordinates a PE
    /// needs, directly from convolution arithmetic at the partition
    /// boundary. Axis 0 is split into `parts`; the PE owns slab
    /// `[lo, hi)` and computes outputs over the same slab (stride 1).
    /// Every kernel tap reaching outside `[lo, hi)` but inside the
    /// tensor is a remote element.
    fn brute_force_halo(c: u64, dims: &[u64], k: u64, parts: u64, pe_index: u64) -> u64 {
        let extent = dims[0];
        let base = extent / parts;
        let remainder = extent % parts;
        // floor/ceil partitioning: the first `remainder` PEs get one extra.
        let lo: u64 = (0..pe_index)
            .map(|i| base + u64::from(i < remainder))
            .sum();
        let hi = lo + base + u64::from(pe_index < remainder);
        let offset = k as i64 / 2;
        let mut remote_rows: BTreeSet<i64> = BTreeSet::new();
        for out_row in lo..hi {
            for tap in -offset..=offset {
                let input_row = out_row as i64 + tap;
                if input_row < 0 || input_row >= extent as i64 {
                    continue; // padding, not a transfer
                }
                if (input_row as u64) < lo || (input_row as u64) >= hi {
                    remote_rows.insert(input_row);
                }
            }
        }
        let cross_section: u64 = dims[1..].iter().product();
        remote_rows.len() as u64 * cross_section * c
    }

    #[test]
    fn pointwise_kernel_needs_no_halo() {
        let layer = conv(16, vec![32, 32], vec![1, 1]);
        assert_eq!(halo_elements(&layer, &[4, 1], PePosition::Interior).unwrap(), 0);
    }

    #[test]
    fn boundary_column_matches_enumeration() {
        // 3 channels, 226x226 input, 3x3 kernel, width split in two:
        // each PE needs one 226-row boundary column of all 3 channels.
        assert_eq!(brute_force_halo(3, &[226, 226], 3, 2, 0), 678);
        let layer = conv(3, vec![226, 226], vec![3, 3]);
        assert_eq!(halo_elements(&layer, &[2, 1], PePosition::Interior).unwrap(), 678);
        assert_eq!(halo_elements(&layer, &[2, 1], PePosition::Edge).unwrap(), 678);
    }

    #[test]
    fn interior_pe_pays_both_neighbors() {
        assert_eq!(brute_force_halo(3, &[226, 226], 3, 4, 1), 1356);
        let layer = conv(3, vec![226, 226], vec![3, 3]);
        assert_eq!(halo_elements(&layer, &[4, 1], PePosition::Interior).unwrap(), 1356);
        assert_eq!(halo_elements(&layer, &[4, 1], PePosition::Edge).unwrap(), 678);
    }

    #[test]
    fn enumeration_oracle_over_kernel_and_split_grid() {
        for k in [3u64, 5, 7] {
            for parts in [2u64, 3, 4, 8] {
                for c in [1u64, 3] {
                    let interior_pe = if parts > 2 { 1 } else { 0 };
                    let expected = brute_force_halo(c, &[64, 17], k, parts, interior_pe);
                    let layer = conv(c, vec![64, 17], vec![k, k]);
                    let got = halo_elements(
                        &layer,
                        &[parts, 1],
                        if parts > 2 { PePosition::Interior } else { PePosition::Edge },
                    )
                    .unwrap();
                    assert_eq!(got, expected, "k={k} parts={parts} c={c}");
                }
            }
        }
    }

    #[test]
    fn split_on_both_axes_accumulates() {
        let layer = conv(2, vec![32, 32], vec![3, 3]);
        // Width split into 4: halo width 1, 2 neighbors, 16-row cross
        // section. Height split into 2: 1 neighbor, 8-column cross
        // section. Two channels.
        let expected = 2 * (2 * 16 + 8);
        assert_eq!(
            halo_elements(&layer, &[4, 2], PePosition::Interior).unwrap(),
            expected
        );
    }

    #[test]
    fn too_fine_split_errors() {
        let layer = conv(3, vec![8, 8], vec![7, 7]);
        // 8 rows over 4 PEs leaves 2-row slabs, narrower than the
        // 3-row halo.
        assert!(matches!(
            halo_elements(&layer, &[4, 1], PePosition::Interior),
            Err(PredictError::SplitTooFine { .. })
        ));
    }
}
