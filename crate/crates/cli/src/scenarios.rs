//! Scenario batteries beyond plain sweeps: tilt-stability maps, the
//! direction-reversal protocols, flow-field captures, and the validation
//! suite.

use std::path::Path;

use magswim_core::dynamics::{Regime, Simulation, Trajectory};
use magswim_core::elastica::{cantilever_tip_deflection, MaterialParams};
use magswim_core::geometry::{build_sphere_shell, DesignKind};
use magswim_core::hydrodynamics::{FluidParams, MobilityOperator};
use magswim_core::magnetics::FieldProgram;
use magswim_core::math::{vec3, Vec3};

use crate::config::{DriveKind, FlowfieldSpec, RunSpec, SpecInputs, StabilitySpec};
use crate::error::{CliError, Result};
use crate::output::{
    create_dir, heatmap_svg, provenance_line, write_text, CsvSink, HeatCell,
};
use crate::runner::{headline_blpc, run_simulation, write_trajectory};
use crate::sweep::run_pool;

fn run_err(e: magswim_core::Error) -> CliError {
    CliError::Run(e.to_string())
}

pub const STABILITY_SCHEMA: &str = "axis,angle_deg,cycle,blpc,regime";

/// Tilt battery: one fixed-length run per angle, per-cycle rows, and a
/// cycle-by-angle heatmap.  Fixed length means steady early-exit is off, so
/// every angle reports the same cycles.
pub fn stability(
    spec: &StabilitySpec,
    config_text: &str,
    out: &Path,
    workers: usize,
) -> Result<()> {
    create_dir(out)?;
    let axis_label = spec.axis.label();
    struct AngleJob {
        inputs: SpecInputs,
        angle: f64,
        first_row: usize,
        cycles: usize,
        axis_label: &'static str,
    }
    let jobs: Vec<AngleJob> = spec
        .angles_deg
        .iter()
        .enumerate()
        .map(|(ia, &angle)| {
            let mut inputs = spec.base.clone();
            inputs.apply_axis(spec.axis, angle);
            inputs.min_cycles = spec.cycles;
            inputs.n_cycles_max = spec.cycles;
            inputs.flow_samples_per_cycle = 0;
            AngleJob { inputs, angle, first_row: ia * spec.cycles, cycles: spec.cycles, axis_label }
        })
        .collect();
    for job in &jobs {
        job.inputs.build()?;
    }
    let total = spec.angles_deg.len() * spec.cycles;
    let csv_path = out.join("stability.csv");
    let mut sink = CsvSink::create(&csv_path, &provenance_line(config_text), STABILITY_SCHEMA)?;
    let run_job = |job: &AngleJob| -> Vec<(usize, String)> {
        let result = run_simulation(&job.inputs);
        (1..=job.cycles)
            .map(|cycle| {
                let line = match &result {
                    Ok((_, traj)) => {
                        let blpc =
                            traj.cycles.get(cycle - 1).map(|c| c.blpc).unwrap_or(f64::NAN);
                        format!(
                            "{},{},{cycle},{blpc},{}",
                            job.axis_label,
                            job.angle,
                            traj.regime.name()
                        )
                    }
                    Err(_) => {
                        format!("{},{},{cycle},nan,not_converged", job.axis_label, job.angle)
                    }
                };
                (job.first_row + cycle - 1, line)
            })
            .collect()
    };
    let mut cells = Vec::with_capacity(total);
    run_pool(&jobs, 0, total, workers, run_job, |line| {
        let fields: Vec<&str> = line.split(',').collect();
        let blpc = fields[3].parse::<f64>().unwrap_or(f64::NAN);
        cells.push(HeatCell {
            value: blpc,
            regime: if blpc.is_finite() { "ok" } else { crate::sweep::regime_static(fields[4]) },
        });
        sink.write_row(line)
    })?;
    drop(sink);
    let cycle_ticks: Vec<f64> = (1..=spec.cycles).map(|c| c as f64).collect();
    let svg = heatmap_svg("cycle", axis_label, &cycle_ticks, &spec.angles_deg, &cells);
    let svg_path = out.join("stability.svg");
    write_text(&svg_path, &svg)?;
    println!(
        "stability: {} angles x {} cycles -> {} + {}",
        spec.angles_deg.len(),
        spec.cycles,
        csv_path.display(),
        svg_path.display()
    );
    Ok(())
}

fn wrap_deg(v: f64) -> f64 {
    if v > 180.0 {
        v - 360.0
    } else if v < -180.0 {
        v + 360.0
    } else {
        v
    }
}

/// A phase counts as directed swimming only when it settled into a mobile
/// steady state.
fn swims(traj: &Trajectory) -> bool {
    traj.regime == Regime::Ok && headline_blpc(traj).abs() > 0.005
}

/// Direction-reversal protocols.  Rotating designs flip the rotation sense
/// mid-run with the body state carried over; the sweeping design reverses
/// the field frame mid-run and reorients itself; the undulating ribbon has
/// no direction encoded in its axial drive, so reversal means physically
/// turning the body around.
pub fn bidir(spec: &RunSpec, config_text: &str, out: &Path) -> Result<()> {
    create_dir(out)?;
    let inputs = &spec.inputs;
    let continue_with = |sim: &mut Simulation, field: FieldProgram| -> Result<Trajectory> {
        sim.set_field(field).map_err(run_err)?;
        sim.run().map_err(run_err)
    };
    let (protocol, traj_a, traj_b) = match inputs.kind {
        DesignKind::FingerShaped | DesignKind::FieldInduced | DesignKind::DragInduced => {
            let (mut sim, a) = run_simulation(inputs)?;
            let sense = match inputs.drive {
                DriveKind::Rotating { sense } => sense,
                _ => 1.0,
            };
            let rev = FieldProgram::rotating(inputs.amplitude()?, inputs.frequency, -sense);
            let b = continue_with(&mut sim, rev)?;
            ("rotation_sense_flip", a, b)
        }
        DesignKind::CarangiformLike => {
            let (mut sim, a) = run_simulation(inputs)?;
            let (direction, half_angle) = match inputs.drive {
                DriveKind::Oscillating { direction, half_angle_deg } => {
                    (direction, half_angle_deg)
                }
                _ => (Vec3::EX, 45.0),
            };
            let rev = FieldProgram::oscillating(
                inputs.amplitude()?,
                inputs.frequency,
                -direction,
                half_angle,
            );
            let b = continue_with(&mut sim, rev)?;
            ("field_frame_reversal", a, b)
        }
        DesignKind::AnguilliformLike => {
            let (_, a) = run_simulation(inputs)?;
            let mut turned = inputs.clone();
            turned.tilt.yaw_deg = wrap_deg(turned.tilt.yaw_deg + 180.0);
            let (_, b) = run_simulation(&turned)?;
            ("body_reorientation", a, b)
        }
    };
    write_trajectory(&traj_a, spec.output_stride, config_text, &out.join("phase_a.csv"))?;
    write_trajectory(&traj_b, spec.output_stride, config_text, &out.join("phase_b.csv"))?;
    let blpc_a = headline_blpc(&traj_a);
    let blpc_b = headline_blpc(&traj_b);
    let reverses = swims(&traj_a) && swims(&traj_b) && (blpc_a * blpc_b) < 0.0;
    let report = format!(
        "design = {}\nprotocol = {protocol}\nphase_a_blpc = {blpc_a}\nphase_a_regime = {}\n\
         phase_b_blpc = {blpc_b}\nphase_b_regime = {}\nreverses = {reverses}\n",
        inputs.kind.name(),
        traj_a.regime.name(),
        traj_b.regime.name(),
    );
    write_text(&out.join("bidir.txt"), &report)?;
    print!("{report}");
    Ok(())
}

/// Probe layout for one plane frame: points in row-major (v-major) order
/// plus the axis letters for the header.
fn plane_points(
    plane: &str,
    center: Vec3,
    half: f64,
    n: usize,
) -> (Vec<Vec3>, char, char) {
    let (u_axis, v_axis) = match plane {
        "xy" => ('x', 'y'),
        "yz" => ('y', 'z'),
        _ => ('x', 'z'),
    };
    let coord = |i: usize| -half + (i as f64 + 0.5) * (2.0 * half / n as f64);
    let mut pts = Vec::with_capacity(n * n);
    for iv in 0..n {
        for iu in 0..n {
            let (u, v) = (coord(iu), coord(iv));
            let p = match plane {
                "xy" => vec3(center.x + u, center.y + v, center.z),
                "yz" => vec3(center.x, center.y + u, center.z + v),
                _ => vec3(center.x + u, center.y, center.z + v),
            };
            pts.push(p);
        }
    }
    (pts, u_axis, v_axis)
}

/// Runs to steady state, then captures one more drive cycle: a velocity-
/// magnitude grid on the requested plane per frame, and the flow-rate traces
/// sampled at the same instants plus the cycle-closing endpoint.
pub fn flowfield(spec: &FlowfieldSpec, config_text: &str, out: &Path) -> Result<()> {
    create_dir(out)?;
    let (mut sim, traj) = run_simulation(&spec.base)?;
    if !matches!(traj.regime, Regime::Ok | Regime::Floppy) {
        return Err(CliError::Run(format!(
            "flow-field capture needs a steady cycle; run ended {}",
            traj.regime.name()
        )));
    }
    let spc = spec.base.steps_per_cycle;
    let frames = spec.frames;
    let half = 0.5 * spec.base.probe_box_factor * sim.config().design.characteristic_length();
    let (points, u_axis, v_axis) = plane_points(spec.plane, sim.com(), half, spec.plane_grid);
    let provenance = provenance_line(config_text);
    let t0 = sim.time();
    let mut q_rows: Vec<(f64, [f64; 3])> = Vec::new();
    let mut index = String::from("frame,t,file\n");
    let mut steps_done = 0usize;
    for k in 0..frames {
        let sample = sim.sample_flow().map_err(run_err)?;
        q_rows.push((sample.t, sample.flow));
        let u = sim.flow_velocities(&points).map_err(run_err)?;
        let name = format!("flow_{}_{k:04}.csv", spec.plane);
        let schema = format!(
            "|u| m/s on the {} plane; rows along {v_axis}, cols along {u_axis}",
            spec.plane
        );
        let mut sink = CsvSink::create(&out.join(&name), &provenance, &schema)?;
        for row in u.chunks(spec.plane_grid) {
            let line = row
                .iter()
                .map(|v| format!("{}", v.norm()))
                .collect::<Vec<_>>()
                .join(",");
            sink.write_row(&line)?;
        }
        index.push_str(&format!("{k},{},{name}\n", sample.t));
        let target = (k + 1) * spc / frames;
        while steps_done < target {
            sim.step().map_err(run_err)?;
            steps_done += 1;
            if let Some(r) = sim.failure() {
                return Err(CliError::Run(format!(
                    "run failed during the capture cycle: {}",
                    r.name()
                )));
            }
        }
    }
    let closing = sim.sample_flow().map_err(run_err)?;
    q_rows.push((closing.t, closing.flow));
    write_text(&out.join("frames.csv"), &index)?;
    let mut sink = CsvSink::create(&out.join("q_traces.csv"), &provenance, "t,Qx,Qy,Qz")?;
    for (t, q) in &q_rows {
        sink.write_row(&format!("{t},{},{},{}", q[0], q[1], q[2]))?;
    }
    println!(
        "flowfield: {frames} frames over one cycle starting t = {t0} -> {}",
        out.display()
    );
    Ok(())
}

/// Quick physics validation: analytic anchors that must hold for any healthy
/// build.  Prints one line per check; any failure exits nonzero.
pub fn validate() -> Result<()> {
    let mut failures = 0usize;
    let mut check = |name: &str, pass: bool, detail: String| {
        println!("{} {name} ({detail})", if pass { "PASS" } else { "FAIL" });
        if !pass {
            failures += 1;
        }
    };
    {
        let radius = 1.0e-3;
        let shell = build_sphere_shell(radius, 642).map_err(run_err)?;
        let mu = 1.0e-3;
        let fluid = FluidParams::with_spacing(mu, shell.mean_edge_length());
        let op = MobilityOperator::new(&shell.points, fluid).map_err(run_err)?;
        let speed = 1.0e-3;
        let u = vec![vec3(speed, 0.0, 0.0); op.n_points()];
        let f = op.solve_forces(&u).map_err(run_err)?;
        let drag: f64 = f.iter().map(|v| v.x).sum();
        let stokes = 6.0 * std::f64::consts::PI * mu * radius * speed;
        let err = (drag - stokes).abs() / stokes;
        check("rigid-sphere drag vs Stokes' law", err < 0.05, format!("rel err {err:.4}"));
    }
    {
        let (len, wid, thick, e) = (5.0e-3, 1.0e-3, 1.0e-4, 1.0e5);
        let i2 = wid * thick * thick * thick / 12.0;
        let load = 0.03 * 3.0 * e * i2 / (len * len); // 3% tip deflection
        let report =
            cantilever_tip_deflection(len, wid, thick, e, load, &MaterialParams::new(e))
                .map_err(run_err)?;
        let err = (report.simulated - report.analytic).abs() / report.analytic;
        check("cantilever tip deflection vs beam theory", err < 0.05, format!("rel err {err:.4}"));
    }
    {
        let mut inputs = SpecInputs::defaults(DesignKind::CarangiformLike);
        inputs.mn = 0.0;
        inputs.mesh_resolution = 4.5e-4;
        inputs.steps_per_cycle = 500;
        inputs.n_cycles_max = 5;
        inputs.min_cycles = 5;
        inputs.flow_samples_per_cycle = 0;
        let (_, traj) = run_simulation(&inputs)?;
        let drift = traj.net_displacement().norm() / inputs.char_length;
        check(
            "zero drive leaves the body still",
            drift < 1.0e-6 && traj.regime == Regime::Floppy,
            format!("drift {drift:.2e} body lengths, regime {}", traj.regime.name()),
        );
    }
    {
        let field = FieldProgram::rotating(2.0e-3, 5.0, 1.0);
        let mut worst: f64 = 0.0;
        for k in 0..64 {
            let b = field.field_at(k as f64 * 0.2 / 64.0);
            worst = worst.max((b.norm() - 2.0e-3).abs() / 2.0e-3);
        }
        check("rotating drive holds constant magnitude", worst < 1e-12, format!("max dev {worst:.2e}"));
    }
    if failures > 0 {
        return Err(CliError::Run(format!("{failures} validation check(s) failed")));
    }
    println!("all validation checks passed");
    Ok(())
}
