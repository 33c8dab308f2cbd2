//! CSV reports and their readers.
//!
//! | report  | columns |
//! |---------|---------|
//! | run log | `phase_index,epoch,method,factor,n_tokens,lr,train_loss,eval_metric,cumulative_flops` |
//! | flops   | `phase,n_tokens,epochs,per_step,cumulative,savings_percent` |
//! | compare | `epoch,baseline_metric,curriculum_metric,baseline_cumulative_flops,curriculum_cumulative_flops` |
//!
//! Floats are written in shortest round-trip form, so reading a report back
//! reproduces every field exactly. Empty fields mean "not applicable".

use std::io;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::compress::CompressionFactor;
use crate::error::{Error, Result};
use crate::flops::FlopsReport;
use crate::train::{EpochRecord, RunLog};

fn write_rows<W: io::Write, T: Serialize>(out: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn read_rows<R: io::Read, T: DeserializeOwned>(input: R) -> Result<Vec<T>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(Error::from)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RunLogRow {
    phase_index: usize,
    epoch: u64,
    method: String,
    factor: usize,
    n_tokens: u64,
    lr: f64,
    train_loss: f64,
    eval_metric: f64,
    cumulative_flops: u128,
}

pub fn write_run_log<W: io::Write>(out: W, log: &RunLog) -> Result<()> {
    let rows: Vec<RunLogRow> = log
        .records
        .iter()
        .map(|r| RunLogRow {
            phase_index: r.phase_index,
            epoch: r.epoch,
            method: r.method.name().to_string(),
            factor: r.factor.get(),
            n_tokens: r.n_tokens,
            lr: r.lr,
            train_loss: r.train_loss,
            eval_metric: r.eval_metric,
            cumulative_flops: r.cumulative_flops,
        })
        .collect();
    write_rows(out, &rows)
}

pub fn read_run_log<R: io::Read>(input: R) -> Result<RunLog> {
    let rows: Vec<RunLogRow> = read_rows(input)?;
    let records = rows
        .into_iter()
        .map(|r| {
            Ok(EpochRecord {
                phase_index: r.phase_index,
                epoch: r.epoch,
                method: r.method.parse()?,
                factor: CompressionFactor::new(r.factor)?,
                n_tokens: r.n_tokens,
                lr: r.lr,
                train_loss: r.train_loss,
                eval_metric: r.eval_metric,
                cumulative_flops: r.cumulative_flops,
            })
        })
        .collect::<Result<_>>()?;
    Ok(RunLog { records })
}

/// One line of a FLOPs report. `phase` is the 1-based phase number,
/// `total` or `baseline`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlopsRow {
    pub phase: String,
    pub n_tokens: Option<u64>,
    pub epochs: u64,
    pub per_step: Option<u64>,
    pub cumulative: u128,
    pub savings_percent: Option<f64>,
}

/// Phase rows, a `total` row carrying the savings, and a `baseline` row.
pub fn flops_rows(report: &FlopsReport, baseline_tokens: u64, baseline_epochs: u64, baseline_per_step: u64) -> Vec<FlopsRow> {
    let mut rows: Vec<FlopsRow> = report
        .phases
        .iter()
        .enumerate()
        .map(|(i, p)| FlopsRow {
            phase: (i + 1).to_string(),
            n_tokens: Some(p.n_tokens),
            epochs: p.epochs,
            per_step: Some(p.per_step),
            cumulative: p.cumulative,
            savings_percent: None,
        })
        .collect();
    rows.push(FlopsRow {
        phase: "total".into(),
        n_tokens: None,
        epochs: report.phases.iter().map(|p| p.epochs).sum(),
        per_step: None,
        cumulative: report.cumulative,
        savings_percent: Some(report.savings_percent),
    });
    rows.push(FlopsRow {
        phase: "baseline".into(),
        n_tokens: Some(baseline_tokens),
        epochs: baseline_epochs,
        per_step: Some(baseline_per_step),
        cumulative: report.baseline_cumulative,
        savings_percent: Some(0.0),
    });
    rows
}

pub fn write_flops<W: io::Write>(out: W, rows: &[FlopsRow]) -> Result<()> {
    write_rows(out, rows)
}

pub fn read_flops<R: io::Read>(input: R) -> Result<Vec<FlopsRow>> {
    read_rows(input)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub epoch: u64,
    pub baseline_metric: Option<f64>,
    pub curriculum_metric: Option<f64>,
    pub baseline_cumulative_flops: Option<u128>,
    pub curriculum_cumulative_flops: Option<u128>,
}

/// Joins two runs on the global epoch number; the shorter run leaves its
/// columns empty past its end.
pub fn join_runs(baseline: &RunLog, curriculum: &RunLog) -> Vec<CompareRow> {
    let n = baseline.records.len().max(curriculum.records.len());
    (0..n)
        .map(|i| {
            let b = baseline.records.get(i);
            let c = curriculum.records.get(i);
            CompareRow {
                epoch: i as u64 + 1,
                baseline_metric: b.map(|r| r.eval_metric),
                curriculum_metric: c.map(|r| r.eval_metric),
                baseline_cumulative_flops: b.map(|r| r.cumulative_flops),
                curriculum_cumulative_flops: c.map(|r| r.cumulative_flops),
            }
        })
        .collect()
}

pub fn write_compare<W: io::Write>(out: W, rows: &[CompareRow]) -> Result<()> {
    write_rows(out, rows)
}

pub fn read_compare<R: io::Read>(input: R) -> Result<Vec<CompareRow>> {
    read_rows(input)
}
