//! Single-run execution and its artifacts: trajectory CSV, run summary and
//! optional mesh snapshots.

use std::path::Path;

use magswim_core::dynamics::{Simulation, Trajectory};
use magswim_core::geometry::{export_magnetization_csv, export_mesh_ascii};

use crate::config::RunSpec;
use crate::error::{CliError, Result};
use crate::output::{create_dir, opt_usize, provenance_line, write_text, CsvSink};

pub const TRAJECTORY_SCHEMA: &str = "t,com_x,com_y,com_z,Qx,Qy,Qz,regime";

/// Builds and runs the configured simulation; hard numerical failures become
/// run errors while physics outcomes stay in the trajectory's regime.
pub fn run_simulation(spec: &crate::config::SpecInputs) -> Result<(Simulation, Trajectory)> {
    let mut sim = Simulation::new(spec.build()?).map_err(CliError::from)?;
    let traj = sim.run().map_err(|e| CliError::Run(e.to_string()))?;
    Ok((sim, traj))
}

/// Steady body-lengths-per-cycle when the run settled, otherwise the last
/// completed cycle's value; NaN before the first full cycle.
pub fn headline_blpc(traj: &Trajectory) -> f64 {
    traj.steady_blpc()
        .or_else(|| traj.cycles.last().map(|c| c.blpc))
        .unwrap_or(f64::NAN)
}

pub fn summary_text(traj: &Trajectory) -> String {
    let d = traj.net_displacement();
    let qtotal = traj.cycles.last().map(|c| c.total_flow()).unwrap_or(f64::NAN);
    format!(
        "regime = {}\nblpc = {}\ncycles = {}\nsteady_cycle = {}\nqtotal = {}\n\
         net_displacement_m = {} {} {}\n",
        traj.regime.name(),
        headline_blpc(traj),
        traj.cycles.len(),
        opt_usize(traj.steady_cycle),
        qtotal,
        d.x,
        d.y,
        d.z,
    )
}

/// Writes the COM track with the configured stride.  The flow-rate columns
/// carry the latest sample at or before each row's time; the regime column
/// repeats the run outcome so every row is self-describing.
pub fn write_trajectory(
    traj: &Trajectory,
    stride: usize,
    config_text: &str,
    path: &Path,
) -> Result<()> {
    let mut sink = CsvSink::create(path, &provenance_line(config_text), TRAJECTORY_SCHEMA)?;
    let stride = stride.max(1);
    let regime = traj.regime.name();
    let mut flow_at = 0usize;
    let mut q = [0.0; 3];
    let last = traj.com_track.len().saturating_sub(1);
    for (i, (t, com)) in traj.com_track.iter().enumerate() {
        if i % stride != 0 && i != last {
            continue;
        }
        while flow_at < traj.flow_trace.len() && traj.flow_trace[flow_at].t <= *t {
            q = traj.flow_trace[flow_at].flow;
            flow_at += 1;
        }
        sink.write_row(&format!(
            "{t},{},{},{},{},{},{},{regime}",
            com.x, com.y, com.z, q[0], q[1], q[2]
        ))?;
    }
    Ok(())
}

/// Dumps every recorded snapshot as an indexed-triangle text file plus the
/// shared magnetization sidecar, with an index mapping frames to times.
pub fn write_snapshots(sim: &Simulation, traj: &Trajectory, out: &Path) -> Result<()> {
    if traj.snapshots.is_empty() {
        return Ok(());
    }
    let dir = out.join("snapshots");
    create_dir(&dir)?;
    let mut mesh = sim.mesh().clone();
    write_text(&dir.join("magnetization.csv"), &export_magnetization_csv(&mesh))?;
    let mut index = String::from("frame,t,file\n");
    for (k, (t, nodes)) in traj.snapshots.iter().enumerate() {
        mesh.nodes.clone_from(nodes);
        let name = format!("mesh_{k:04}.txt");
        write_text(&dir.join(&name), &export_mesh_ascii(&mesh))?;
        index.push_str(&format!("{k},{t},{name}\n"));
    }
    write_text(&dir.join("index.csv"), &index)
}

/// The `simulate` subcommand: one run, trajectory + summary + snapshots.
pub fn simulate(spec: &RunSpec, config_text: &str, out: &Path) -> Result<()> {
    create_dir(out)?;
    let (sim, traj) = run_simulation(&spec.inputs)?;
    write_trajectory(&traj, spec.output_stride, config_text, &out.join("trajectory.csv"))?;
    let summary = summary_text(&traj);
    write_text(&out.join("summary.txt"), &summary)?;
    write_snapshots(&sim, &traj, out)?;
    print!("{summary}");
    Ok(())
}
