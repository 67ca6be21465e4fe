//! CSV writers. Floats use the shortest round-trip representation so the
//! files are byte-stable across runs and parse back exactly.

use std::io::Write;

use ssdfa_core::{CostReport, TrainReport};

use crate::error::Result;
use crate::sweep::{CellOutcome, SweepResult};

pub const COST_HEADER: [&str; 7] = ["algorithm", "layer", "reads", "writes", "macs", "movement_words", "movement_mb"];

pub const SWEEP_HEADER: [&str; 13] = [
    "row",
    "rank",
    "sparsity",
    "rep",
    "seed",
    "status",
    "detail",
    "runs",
    "test_accuracy",
    "test_accuracy_std",
    "angle_deg",
    "angle_deg_std",
    "angles_all",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Cost rows for every report, one per layer plus a `total` row.
pub fn write_costs<W: Write>(out: W, reports: &[(&str, CostReport)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COST_HEADER)?;
    for (name, report) in reports {
        let label = |layer: String| if name.is_empty() { layer } else { format!("{name}:{layer}") };
        let rows = report.layers.iter().enumerate().map(|(l, c)| (l.to_string(), *c));
        for (layer, c) in rows.chain(std::iter::once(("total".to_string(), report.total()))) {
            w.write_record([
                report.algorithm.to_string(),
                label(layer),
                c.reads.to_string(),
                c.writes.to_string(),
                c.macs.to_string(),
                c.movement_words.to_string(),
                c.movement_mb().to_string(),
            ])?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Per-epoch metrics. Row 0 holds the angles before training; the angle
/// columns are `angle_l<k>` for every reported hidden layer.
pub fn write_metrics<W: Write>(out: W, report: &TrainReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let layers: Vec<usize> = report.initial_angles.iter().map(|a| a.layer).collect();
    let mut header: Vec<String> =
        ["epoch", "lr", "train_loss", "train_accuracy", "test_accuracy"].iter().map(|s| s.to_string()).collect();
    header.extend(layers.iter().map(|l| format!("angle_l{l}")));
    w.write_record(&header)?;

    let mut row = vec!["0".to_string(), String::new(), String::new(), String::new(), String::new()];
    row.extend(report.initial_angles.iter().map(|a| a.angle_degrees.to_string()));
    w.write_record(&row)?;
    for e in &report.epochs {
        let mut row = vec![
            e.epoch.to_string(),
            e.lr.to_string(),
            e.train_loss.to_string(),
            e.train_accuracy.to_string(),
            opt(e.test_accuracy),
        ];
        row.extend(e.angles.iter().map(|a| a.angle_degrees.to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// One `run` row per (cell, repetition) and one `mean` row per cell, in
/// (rank, sparsity, repetition) order. Skipped cells produce a single
/// `skipped` row naming the violated rule.
pub fn write_sweep<W: Write>(out: W, result: &SweepResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER)?;
    for cell in &result.cells {
        let (rank, sparsity) = (cell.rank.to_string(), cell.sparsity.to_string());
        match &cell.outcome {
            CellOutcome::Skipped { rule, .. } => {
                w.write_record([
                    "skipped", &rank, &sparsity, "", "", "skipped", rule, "0", "", "", "", "", "",
                ])?;
            }
            CellOutcome::Ran(runs) => {
                for r in runs {
                    let (status, detail) = match r.diverged_epoch {
                        Some(e) => ("diverged", format!("epoch {e}")),
                        None => ("ok", String::new()),
                    };
                    let all = r.angles.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(";");
                    w.write_record([
                        "run".to_string(),
                        rank.clone(),
                        sparsity.clone(),
                        r.rep.to_string(),
                        r.seed.to_string(),
                        status.to_string(),
                        detail,
                        "1".to_string(),
                        opt(r.accuracy),
                        String::new(),
                        opt(r.angles.first().copied()),
                        String::new(),
                        all,
                    ])?;
                }
                let s = cell.summary();
                w.write_record([
                    "mean".to_string(),
                    rank.clone(),
                    sparsity.clone(),
                    String::new(),
                    String::new(),
                    if s.runs == runs.len() { "ok" } else { "partial" }.to_string(),
                    String::new(),
                    s.runs.to_string(),
                    opt(s.accuracy_mean),
                    opt(s.accuracy_std),
                    opt(s.angle_mean),
                    opt(s.angle_std),
                    String::new(),
                ])?;
            }
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
