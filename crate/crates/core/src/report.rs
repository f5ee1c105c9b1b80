//! Breakdown emission and comparison against measured runs.

use std::fmt::Write as _;

use log::warn;
use serde::Serialize;
use thiserror::Error;

use crate::strategies::{Feasibility, PhaseLabel, Prediction, StrategyConfig};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("measured total time is zero")]
    ZeroMeasured,
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BreakdownFormat {
    Table,
    Csv,
    Json,
}

impl std::str::FromStr for BreakdownFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "table" => Ok(BreakdownFormat::Table),
            "csv" => Ok(BreakdownFormat::Csv),
            "json" => Ok(BreakdownFormat::Json),
            other => Err(format!("unknown format `{other}` (table|csv|json)")),
        }
    }
}

/// Breakdown rows in emission order: compute phases, the five
/// communication phases, and the I/O phase which this model does not
/// charge (always zero, kept for completeness of the phase taxonomy).
fn phase_rows(pred: &Prediction) -> Vec<(&'static str, f64)> {
    let mut rows = vec![("fb_compute", pred.t_fb), ("wu", pred.t_wu)];
    for label in PhaseLabel::ALL {
        rows.push((label.as_str(), pred.comm.get(label)));
    }
    rows.push(("io", 0.0));
    rows
}

#[derive(Serialize)]
struct JsonBreakdown<'a> {
    strategy: String,
    pes: u64,
    feasible: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    infeasible_reason: Option<String>,
    epochs: u64,
    iterations_per_epoch: f64,
    phases_s_per_epoch: Vec<(&'a str, f64)>,
    comp_s_per_epoch: f64,
    comm_s_per_epoch: f64,
    total_s_per_epoch: f64,
    /// Lower bound if computation fully hides communication; emitted
    /// for the depth-wise strategies, whose measured implementations
    /// overlap the two while this model adds them.
    #[serde(skip_serializing_if = "Option::is_none")]
    total_overlapped_s_per_epoch: Option<f64>,
    total_s: f64,
    mem_peak_bytes: f64,
}

fn overlapped_total(pred: &Prediction) -> Option<f64> {
    matches!(
        pred.strategy,
        StrategyConfig::Pipeline { .. } | StrategyConfig::LayerPure { .. }
    )
    .then(|| pred.t_comp().max(pred.t_comm_total()))
}

/// Renders one prediction. `epochs` scales the grand total; per-epoch
/// and per-iteration figures are always shown. CSV and JSON output is
/// byte-stable for identical inputs.
pub fn emit_breakdown(pred: &Prediction, format: BreakdownFormat, epochs: u64, iters: f64) -> String {
    let rows = phase_rows(pred);
    match format {
        BreakdownFormat::Csv => {
            let mut out = String::from("phase,seconds\n");
            for (name, value) in &rows {
                let _ = writeln!(out, "{name},{value}");
            }
            let _ = writeln!(out, "# strategy={}", pred.strategy);
            let _ = writeln!(out, "# mem_peak_bytes={}", pred.mem_bytes);
            out
        }
        BreakdownFormat::Json => {
            let doc = JsonBreakdown {
                strategy: pred.strategy.to_string(),
                pes: pred.p_used,
                feasible: pred.feasibility.is_feasible(),
                infeasible_reason: match &pred.feasibility {
                    Feasibility::Feasible => None,
                    Feasibility::Infeasible(reason) => Some(reason.to_string()),
                },
                epochs,
                iterations_per_epoch: iters,
                phases_s_per_epoch: rows,
                comp_s_per_epoch: pred.t_comp(),
                comm_s_per_epoch: pred.t_comm_total(),
                total_s_per_epoch: pred.total(),
                total_overlapped_s_per_epoch: overlapped_total(pred),
                total_s: epochs as f64 * pred.total(),
                mem_peak_bytes: pred.mem_bytes,
            };
            let mut out = serde_json::to_string_pretty(&doc).expect("serializable");
            out.push('\n');
            out
        }
        BreakdownFormat::Table => {
            let mut out = String::new();
            let _ = writeln!(out, "strategy          {}", pred.strategy);
            let _ = writeln!(out, "PEs               {}", pred.p_used);
            match &pred.feasibility {
                Feasibility::Feasible => {
                    let _ = writeln!(out, "feasible          yes");
                }
                Feasibility::Infeasible(reason) => {
                    let _ = writeln!(out, "feasible          no ({reason})");
                }
            }
            let _ = writeln!(out, "mem peak / PE     {:.3} GB", pred.mem_bytes / 1e9);
            let _ = writeln!(out);
            let _ = writeln!(out, "{:<16} {:>14} {:>14}", "phase", "s/epoch", "s/iteration");
            for (name, value) in &rows {
                let _ = writeln!(out, "{:<16} {:>14.6} {:>14.9}", name, value, value / iters);
            }
            let _ = writeln!(out, "{:<16} {:>14.6} {:>14.9}", "comp total", pred.t_comp(), pred.t_comp() / iters);
            let _ = writeln!(
                out,
                "{:<16} {:>14.6} {:>14.9}",
                "comm total",
                pred.t_comm_total(),
                pred.t_comm_total() / iters
            );
            let _ = writeln!(out, "{:<16} {:>14.6} {:>14.9}", "total", pred.total(), pred.total() / iters);
            if let Some(bound) = overlapped_total(pred) {
                let _ = writeln!(
                    out,
                    "{:<16} {:>14.6} {:>14.9}",
                    "total (overlap)", bound, bound / iters
                );
            }
            if epochs > 1 {
                let _ = writeln!(out, "{:<16} {:>14.6} ({} epochs)", "grand total", epochs as f64 * pred.total(), epochs);
            }
            out
        }
    }
}

/// Per-phase seconds loaded from a CSV of `phase,seconds` rows.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MeasuredRun {
    pub measured_comp: f64,
    pub measured_comm: f64,
}

impl MeasuredRun {
    pub fn measured_total(&self) -> f64 {
        self.measured_comp + self.measured_comm
    }
}

const COMP_PHASES: [&str; 2] = ["fb_compute", "wu"];
const COMM_PHASES: [&str; 5] =
    ["ge_allreduce", "fb_allgather", "fb_allreduce", "fb_halo", "fb_p2p"];

/// Loads a per-phase CSV; unknown phases are ignored with a warning and
/// the I/O phase does not enter the comparable total.
pub fn load_measured_run(text: &str) -> Result<MeasuredRun, ReportError> {
    let mut run = MeasuredRun::default();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if idx == 0 && line.to_ascii_lowercase().starts_with("phase,") {
            continue;
        }
        let (phase, value) = line.split_once(',').ok_or_else(|| ReportError::Parse {
            line: line_no,
            msg: "expected phase,seconds".into(),
        })?;
        let phase = phase.trim();
        let seconds: f64 = value.trim().parse().map_err(|_| ReportError::Parse {
            line: line_no,
            msg: format!("invalid seconds `{}`", value.trim()),
        })?;
        if seconds < 0.0 {
            return Err(ReportError::Parse { line: line_no, msg: "seconds must be >= 0".into() });
        }
        if COMP_PHASES.contains(&phase) {
            run.measured_comp += seconds;
        } else if COMM_PHASES.contains(&phase) {
            run.measured_comm += seconds;
        } else if phase == "io" {
            // I/O time is outside the modeled total.
        } else {
            warn!("measured line {line_no}: unknown phase `{phase}` ignored");
        }
    }
    Ok(run)
}

/// Alias for the prediction side of a comparison; the CSV emitted by
/// [`emit_breakdown`] loads with the same schema.
pub fn load_prediction_csv(text: &str) -> Result<MeasuredRun, ReportError> {
    load_measured_run(text)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Accuracy {
    /// `1 - |pred - measured| / measured`, clamped to [0, 1] so that
    /// >2x mispredictions read as 0%.
    pub fraction: f64,
    /// Unclamped predicted/measured ratio.
    pub raw_ratio: f64,
}

/// Projection accuracy of a predicted total against a measured total.
pub fn projection_accuracy(predicted_total: f64, measured_total: f64) -> Result<Accuracy, ReportError> {
    if measured_total <= 0.0 {
        return Err(ReportError::ZeroMeasured);
    }
    let fraction = 1.0 - (predicted_total - measured_total).abs() / measured_total;
    Ok(Accuracy {
        fraction: fraction.clamp(0.0, 1.0),
        raw_ratio: predicted_total / measured_total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::strategies::{PhaseTimes, StrategyConfig};

    fn sample_prediction() -> Prediction {
        Prediction {
            strategy: StrategyConfig::Data { p: 4 },
            p_used: 4,
            t_fb: 10.0,
            t_wu: 2.0,
            comm: PhaseTimes { ge_allreduce: 3.0, ..PhaseTimes::zero() },
            mem_bytes: 1e9,
            feasibility: Feasibility::Feasible,
        }
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(projection_accuracy(1.0, 1.0).unwrap().fraction, 1.0);
        assert_eq!(projection_accuracy(0.9, 1.0).unwrap().fraction, 0.9);
        assert_eq!(projection_accuracy(1.5, 1.0).unwrap().fraction, 0.5);
        assert_eq!(projection_accuracy(2.5, 1.0).unwrap().fraction, 0.0);
        assert!(matches!(projection_accuracy(1.0, 0.0), Err(ReportError::ZeroMeasured)));
    }

    #[test]
    fn accuracy_is_symmetric_in_error_magnitude() {
        let over = projection_accuracy(1.2, 1.0).unwrap().fraction;
        let under = projection_accuracy(0.8, 1.0).unwrap().fraction;
        assert_eq!(over, under);
        assert!((projection_accuracy(1.0 + 1e-12, 1.0).unwrap().fraction - 1.0).abs() < 1e-9);
    }

    #[test]
    fn csv_round_trips_through_the_loader() {
        let pred = sample_prediction();
        let csv = emit_breakdown(&pred, BreakdownFormat::Csv, 1, 10.0);
        let run = load_prediction_csv(&csv).unwrap();
        assert_eq!(run.measured_comp, 12.0);
        assert_eq!(run.measured_comm, 3.0);
        assert_eq!(run.measured_total(), pred.total());
    }

    #[test]
    fn csv_and_json_are_byte_stable() {
        let pred = sample_prediction();
        assert_eq!(
            emit_breakdown(&pred, BreakdownFormat::Csv, 1, 10.0),
            emit_breakdown(&pred, BreakdownFormat::Csv, 1, 10.0)
        );
        assert_eq!(
            emit_breakdown(&pred, BreakdownFormat::Json, 2, 10.0),
            emit_breakdown(&pred, BreakdownFormat::Json, 2, 10.0)
        );
    }

    #[test]
    fn serial_breakdown_has_single_nonzero_comm_free_structure() {
        let pred = Prediction {
            strategy: StrategyConfig::Serial,
            p_used: 1,
            t_fb: 5.0,
            t_wu: 0.0,
            comm: PhaseTimes::zero(),
            mem_bytes: 1.0,
            feasibility: Feasibility::Feasible,
        };
        let csv = emit_breakdown(&pred, BreakdownFormat::Csv, 1, 1.0);
        let nonzero: Vec<&str> = csv
            .lines()
            .skip(1)
            .filter(|l| !l.starts_with('#'))
            .filter(|l| !l.ends_with(",0"))
            .collect();
        assert_eq!(nonzero, vec!["fb_compute,5"]);
    }

    #[test]
    fn data_breakdown_has_compute_and_ge_rows_only() {
        let pred = sample_prediction();
        let csv = emit_breakdown(&pred, BreakdownFormat::Csv, 1, 1.0);
        let nonzero: Vec<&str> = csv
            .lines()
            .skip(1)
            .filter(|l| !l.starts_with('#') && !l.is_empty())
            .filter(|l| !l.ends_with(",0"))
            .map(|l| l.split(',').next().unwrap())
            .collect();
        assert_eq!(nonzero, vec!["fb_compute", "wu", "ge_allreduce"]);
    }

    #[test]
    fn measured_loader_ignores_unknown_phases() {
        let text = "phase,seconds\nfb_compute,1.0\nge_allreduce,0.5\nmystery,9\nio,4\n";
        let run = load_measured_run(text).unwrap();
        assert_eq!(run.measured_comp, 1.0);
        assert_eq!(run.measured_comm, 0.5);
        assert_eq!(run.measured_total(), 1.5);
    }
}
