//! Grid sweeps: a fixed-size worker pool runs independent simulations and a
//! single writer emits rows in row-major grid order, so the CSV bytes do not
//! depend on the worker count.  Rows flush incrementally and a sweep resumes
//! from its own CSV.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::thread;

use crate::config::{Axis, AxisName, SpecInputs, SweepSpec};
use crate::error::{CliError, Result};
use crate::output::{
    create_dir, heatmap_svg, opt_usize, provenance_line, write_text, CsvSink, HeatCell,
};
use crate::runner::{headline_blpc, run_simulation};

/// One grid cell to emit: its global row index, the axis values to print,
/// and which completed cycle to read when a cycle axis is in play.
struct RowPlan {
    row: usize,
    v1: f64,
    v2: f64,
    cycle: Option<usize>,
}

/// One simulation to run.  A cycle-index axis makes a single run feed a whole
/// stripe of rows; otherwise each job owns exactly one row.
struct Job {
    inputs: SpecInputs,
    rows: Vec<RowPlan>,
}

fn cycle_values(axis: &Axis, which: &str) -> Result<Vec<usize>> {
    axis.values
        .iter()
        .map(|&v| {
            let c = v.round();
            if (v - c).abs() > 1e-9 || c < 1.0 {
                Err(CliError::Config(format!(
                    "{which}: cycle_index values must be positive integers, got {v}"
                )))
            } else {
                Ok(c as usize)
            }
        })
        .collect()
}

fn build_jobs(spec: &SweepSpec) -> Result<Vec<Job>> {
    let n2 = spec.axis2.values.len();
    let ax1_cycles = spec.axis1.name == AxisName::CycleIndex;
    let ax2_cycles = spec.axis2.name == AxisName::CycleIndex;
    let mut jobs = Vec::new();
    if ax1_cycles || ax2_cycles {
        let (cyc_axis, other, which) = if ax1_cycles {
            (&spec.axis1, &spec.axis2, "sweep.axis1")
        } else {
            (&spec.axis2, &spec.axis1, "sweep.axis2")
        };
        let cycles = cycle_values(cyc_axis, which)?;
        let deepest = *cycles.iter().max().expect("non-empty axis");
        for (io, &vo) in other.values.iter().enumerate() {
            let mut inputs = spec.base.clone();
            inputs.apply_axis(other.name, vo);
            // Run exactly as many cycles as the deepest row needs; steady
            // early-exit would starve the later rows.
            inputs.min_cycles = deepest;
            inputs.n_cycles_max = deepest;
            let rows = cycles
                .iter()
                .zip(&cyc_axis.values)
                .enumerate()
                .map(|(ic, (&c, &vc))| {
                    let (row, v1, v2) = if ax1_cycles {
                        (ic * n2 + io, vc, vo)
                    } else {
                        (io * n2 + ic, vo, vc)
                    };
                    RowPlan { row, v1, v2, cycle: Some(c) }
                })
                .collect();
            jobs.push(Job { inputs, rows });
        }
    } else {
        for (i1, &v1) in spec.axis1.values.iter().enumerate() {
            for (i2, &v2) in spec.axis2.values.iter().enumerate() {
                let mut inputs = spec.base.clone();
                inputs.apply_axis(spec.axis1.name, v1);
                inputs.apply_axis(spec.axis2.name, v2);
                jobs.push(Job { inputs, rows: vec![RowPlan { row: i1 * n2 + i2, v1, v2, cycle: None }] });
            }
        }
    }
    Ok(jobs)
}

/// Runs one job and renders its rows.  Numerical breakdown inside a cell is
/// folded into a non-converged row so the rest of the grid still completes.
fn job_rows(job: &Job) -> Vec<(usize, String)> {
    let result = run_simulation(&job.inputs);
    job.rows
        .iter()
        .map(|plan| {
            let line = match &result {
                Ok((_, traj)) => {
                    let (blpc, qtotal) = match plan.cycle {
                        Some(c) => traj
                            .cycles
                            .get(c - 1)
                            .map(|cd| (cd.blpc, cd.total_flow()))
                            .unwrap_or((f64::NAN, f64::NAN)),
                        None => (
                            headline_blpc(traj),
                            traj.cycles.last().map(|c| c.total_flow()).unwrap_or(f64::NAN),
                        ),
                    };
                    format!(
                        "{},{},{},{},{},{}",
                        plan.v1,
                        plan.v2,
                        blpc,
                        traj.regime.name(),
                        opt_usize(traj.steady_cycle.map(|c| c + 1)),
                        qtotal
                    )
                }
                Err(_) => format!("{},{},nan,not_converged,,nan", plan.v1, plan.v2),
            };
            (plan.row, line)
        })
        .collect()
}

/// Runs `jobs` on up to `workers` threads; each job's `(row, line)` pairs are
/// handed to `write` in ascending global row order, buffering whatever
/// arrives early.  Rows below `start_row` (already on disk) are dropped.
pub fn run_pool<J, F, W>(
    jobs: &[J],
    start_row: usize,
    total_rows: usize,
    workers: usize,
    run: F,
    mut write: W,
) -> Result<()>
where
    J: Sync,
    F: Fn(&J) -> Vec<(usize, String)> + Sync,
    W: FnMut(&str) -> Result<()>,
{
    if start_row >= total_rows {
        return Ok(());
    }
    let next_job = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<Vec<(usize, String)>>();
    thread::scope(|scope| -> Result<()> {
        for _ in 0..workers.clamp(1, jobs.len().max(1)) {
            let tx = tx.clone();
            let next_job = &next_job;
            let run = &run;
            scope.spawn(move || loop {
                let j = next_job.fetch_add(1, Ordering::Relaxed);
                if j >= jobs.len() || tx.send(run(&jobs[j])).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        let mut pending: BTreeMap<usize, String> = BTreeMap::new();
        let mut next_row = start_row;
        while next_row < total_rows {
            let rows = rx
                .recv()
                .map_err(|_| CliError::Run(String::from("worker pool ended before the grid")))?;
            for (row, line) in rows {
                assert!(row < total_rows, "row index outside the grid");
                if row >= next_row {
                    pending.insert(row, line);
                }
            }
            while let Some(line) = pending.remove(&next_row) {
                write(&line)?;
                next_row += 1;
            }
        }
        Ok(())
    })
}

pub(crate) fn regime_static(name: &str) -> &'static str {
    match name {
        "ok" => "ok",
        "self_contact" => "self_contact",
        "coiling" => "coiling",
        "floppy" => "floppy",
        _ => "not_converged",
    }
}

/// Rebuilds the heatmap from the finished CSV, so a resumed sweep renders
/// the complete grid.
fn write_heatmap(spec: &SweepSpec, csv_path: &Path, svg_path: &Path) -> Result<()> {
    let text = fs::read_to_string(csv_path)
        .map_err(|e| CliError::io(&format!("reading {}", csv_path.display()), e))?;
    let mut cells = Vec::new();
    for line in text.lines().skip(2) {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 4 {
            return Err(CliError::Io(format!("malformed sweep row: {line}")));
        }
        let value = fields[2].parse::<f64>().unwrap_or(f64::NAN);
        cells.push(HeatCell { value, regime: regime_static(fields[3]) });
    }
    let total = spec.axis1.values.len() * spec.axis2.values.len();
    if cells.len() != total {
        return Err(CliError::Run(format!(
            "sweep CSV holds {} of {total} rows; cannot render the heatmap",
            cells.len()
        )));
    }
    let svg = heatmap_svg(
        spec.axis2.name.label(),
        spec.axis1.name.label(),
        &spec.axis2.values,
        &spec.axis1.values,
        &cells,
    );
    write_text(svg_path, &svg)
}

pub fn sweep_schema(spec: &SweepSpec) -> String {
    format!(
        "{},{},blpc,regime,cycles_to_steady,qtotal",
        spec.axis1.name.label(),
        spec.axis2.name.label()
    )
}

pub fn sweep(
    spec: &SweepSpec,
    config_text: &str,
    out: &Path,
    workers: usize,
    resume: bool,
) -> Result<()> {
    create_dir(out)?;
    let jobs = build_jobs(spec)?;
    // Config-class mistakes in any cell abort before the first run.
    for job in &jobs {
        if let Err(CliError::Config(msg)) = job.inputs.build().map(drop) {
            let plan = &job.rows[0];
            return Err(CliError::Config(format!(
                "sweep cell ({} = {}, {} = {}): {msg}",
                spec.axis1.name.label(),
                plan.v1,
                spec.axis2.name.label(),
                plan.v2
            )));
        }
    }
    let total = spec.axis1.values.len() * spec.axis2.values.len();
    let schema = sweep_schema(spec);
    let csv_path = out.join("sweep.csv");
    let (mut sink, start_row) = if resume && csv_path.exists() {
        let (sink, rows) = CsvSink::resume(&csv_path, config_text, &schema)?;
        if rows > total {
            return Err(CliError::Config(format!(
                "resume file holds {rows} rows for a {total}-cell grid"
            )));
        }
        (sink, rows)
    } else {
        (CsvSink::create(&csv_path, &provenance_line(config_text), &schema)?, 0)
    };
    let jobs: Vec<Job> =
        jobs.into_iter().filter(|j| j.rows.iter().any(|p| p.row >= start_row)).collect();
    run_pool(&jobs, start_row, total, workers, job_rows, |line| sink.write_row(line))?;
    drop(sink);
    let svg_path = out.join("sweep.svg");
    write_heatmap(spec, &csv_path, &svg_path)?;
    println!(
        "sweep: {total} cells ({} resumed) -> {} + {}",
        start_row,
        csv_path.display(),
        svg_path.display()
    );
    Ok(())
}
