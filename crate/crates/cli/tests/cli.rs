//! End-to-end checks of the command-line harness through the real binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn magswim(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_magswim"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

/// Coarse, fast carangiform run description shared by the smoke tests.
const FAST_RUN: &str = "design.kind = carangiform\n\
                        design.mesh_resolution = 4.5e-4\n\
                        sim.steps_per_cycle = 500\n\
                        sim.n_cycles_max = 3\n\
                        sim.min_cycles = 1\n\
                        sim.flow_samples_per_cycle = 4\n";

#[test]
fn unknown_key_exits_2_and_names_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "bad.cfg", "design.kind = finger\ndesign.wdith = 1e-3\n");
    let out = magswim(&["simulate", "--config", &cfg], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("design.wdith"), "stderr was: {stderr}");
}

#[test]
fn missing_config_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let out = magswim(&["simulate", "--config", "absent.cfg"], tmp.path());
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn oversized_dt_exits_2_naming_dt() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "dt.cfg", "design.kind = carangiform\nsim.dt = 1e-3\n");
    let out = magswim(&["simulate", "--config", &cfg], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sim.dt"));
}

#[test]
fn simulate_writes_trajectory_summary_and_snapshots() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "run.cfg",
        &format!("{FAST_RUN}sim.snapshots_per_cycle = 2\noutput.stride = 50\n"),
    );
    let out = magswim(&["simulate", "--config", &cfg, "--out", "run"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let summary = fs::read_to_string(tmp.path().join("run/summary.txt")).unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.as_ref(), summary, "summary echoed to stdout");
    let blpc_line = summary.lines().find(|l| l.starts_with("blpc = ")).unwrap();
    let blpc: f64 = blpc_line.trim_start_matches("blpc = ").parse().unwrap();
    assert!(blpc.is_finite());

    let traj = fs::read_to_string(tmp.path().join("run/trajectory.csv")).unwrap();
    let mut lines = traj.lines();
    assert!(lines.next().unwrap().starts_with("# provenance: config_sha256="));
    assert_eq!(lines.next().unwrap(), "t,com_x,com_y,com_z,Qx,Qy,Qz,regime");
    let regime = summary.lines().next().unwrap().trim_start_matches("regime = ").to_string();
    let mut rows = 0;
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 8, "row: {line}");
        for v in &fields[..7] {
            v.parse::<f64>().unwrap();
        }
        assert_eq!(fields[7], regime);
        rows += 1;
    }
    assert!(rows >= 3 * 500 / 50, "expected strided rows, got {rows}");

    let index = fs::read_to_string(tmp.path().join("run/snapshots/index.csv")).unwrap();
    let frames = index.lines().count() - 1;
    assert_eq!(frames, 3 * 2, "two snapshots per cycle");
    let mesh0 = fs::read_to_string(tmp.path().join("run/snapshots/mesh_0000.txt")).unwrap();
    let counts: Vec<usize> =
        mesh0.lines().next().unwrap().split_whitespace().map(|w| w.parse().unwrap()).collect();
    assert_eq!(counts.len(), 2);
    assert_eq!(mesh0.lines().count(), 1 + counts[0] + counts[1]);
    assert!(tmp.path().join("run/snapshots/magnetization.csv").exists());
}

#[test]
fn zero_drive_reports_floppy() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "still.cfg",
        "design.kind = carangiform\n\
         design.mesh_resolution = 4.5e-4\n\
         field.Mn = 0\n\
         sim.steps_per_cycle = 500\n\
         sim.n_cycles_max = 6\n\
         sim.flow_samples_per_cycle = 0\n",
    );
    let out = magswim(&["simulate", "--config", &cfg, "--out", "still"], tmp.path());
    assert_eq!(out.status.code(), Some(0));
    let summary = fs::read_to_string(tmp.path().join("still/summary.txt")).unwrap();
    assert!(summary.contains("regime = floppy"), "summary: {summary}");
    let blpc: f64 = summary
        .lines()
        .find(|l| l.starts_with("blpc = "))
        .unwrap()
        .trim_start_matches("blpc = ")
        .parse()
        .unwrap();
    assert!(blpc.abs() < 1e-6, "blpc {blpc}");
}

/// A deliberately tiny grid: coarse cells that finish in seconds.  The cells
/// do not reach steady state, which also exercises hatched heatmap cells.
const TINY_SWEEP: &str = "design.kind = carangiform\n\
                          design.mesh_resolution = 4.5e-4\n\
                          sim.steps_per_cycle = 500\n\
                          sim.n_cycles_max = 2\n\
                          sim.min_cycles = 1\n\
                          sim.flow_samples_per_cycle = 2\n\
                          sweep.axis1.name = Mn\n\
                          sweep.axis1.min = 100\n\
                          sweep.axis1.max = 500\n\
                          sweep.axis1.steps = 2\n\
                          sweep.axis2.name = Fn\n\
                          sweep.axis2.min = 5\n\
                          sweep.axis2.max = 30\n\
                          sweep.ax2.steps junk\n";

fn tiny_sweep_text() -> String {
    TINY_SWEEP.replace("sweep.ax2.steps junk", "sweep.axis2.steps = 2")
}

#[test]
fn sweep_is_deterministic_across_worker_counts_and_resumable() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "sweep.cfg", &tiny_sweep_text());

    let out = magswim(&["sweep", "--config", &cfg, "--out", "s1", "--workers", "1"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let csv1 = fs::read_to_string(tmp.path().join("s1/sweep.csv")).unwrap();

    let out = magswim(&["sweep", "--config", &cfg, "--out", "s8", "--workers", "8"], tmp.path());
    assert_eq!(out.status.code(), Some(0));
    let csv8 = fs::read_to_string(tmp.path().join("s8/sweep.csv")).unwrap();

    // Identical except the provenance header, whose timestamp may differ.
    let body = |s: &str| s.lines().skip(1).collect::<Vec<_>>().join("\n");
    assert_eq!(body(&csv1), body(&csv8), "worker count changed the rows");
    let hash = |s: &str| {
        s.lines()
            .next()
            .unwrap()
            .split_whitespace()
            .find(|w| w.starts_with("config_sha256="))
            .unwrap()
            .to_string()
    };
    assert_eq!(hash(&csv1), hash(&csv8));
    let rows1: Vec<&str> = csv1.lines().skip(2).collect();
    assert_eq!(rows1.len(), 4, "one row per cell");

    // Deleting the trailing rows and resuming must reproduce the bytes.
    let truncated: String =
        csv1.lines().take(2 + 1).map(|l| format!("{l}\n")).collect();
    fs::write(tmp.path().join("s1/sweep.csv"), &truncated).unwrap();
    let out = magswim(
        &["sweep", "--config", &cfg, "--out", "s1", "--workers", "2", "--resume"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let resumed = fs::read_to_string(tmp.path().join("s1/sweep.csv")).unwrap();
    assert_eq!(resumed, csv1, "resume changed the bytes");

    // Resuming under a different config is refused as a config error.
    let other = write_config(
        tmp.path(),
        "other.cfg",
        &tiny_sweep_text().replace("sweep.axis1.min = 100", "sweep.axis1.min = 50"),
    );
    let out = magswim(
        &["sweep", "--config", &other, "--out", "s1", "--resume"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(2));

    let svg = fs::read_to_string(tmp.path().join("s1/sweep.svg")).unwrap();
    assert_eq!(svg.matches("<title>").count(), 4, "one tooltip per cell");
    assert!(svg.contains("url(#hatch_"), "non-steady cells hatch");
    assert!(svg.contains("value range ["));
}

#[test]
fn stability_zero_angle_matches_untilted_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "stab.cfg",
        "design.kind = carangiform\n\
         design.mesh_resolution = 4.5e-4\n\
         sim.steps_per_cycle = 500\n\
         stability.axis = pitch\n\
         stability.angles_deg = 0, 30\n\
         stability.cycles = 2\n",
    );
    let out = magswim(
        &["stability", "--config", &cfg, "--out", "stab", "--workers", "2"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(tmp.path().join("stab/stability.csv")).unwrap();
    assert!(tmp.path().join("stab/stability.svg").exists());

    // Reference: the same physics straight from the library, untilted.
    let mut inputs =
        magswim_core::geometry::SwimmerDesign::reference(
            magswim_core::geometry::DesignKind::CarangiformLike,
            5.0e-3,
            1.0e-4,
        );
    inputs.mesh_resolution = 4.5e-4;
    let anchors = magswim_core::magnetics::NondimAnchors {
        youngs_modulus: 1.0e5,
        thickness: 1.0e-4,
        characteristic_length: 5.0e-3,
        magnetic_length: inputs.magnetic_fraction * inputs.length,
        magnetization: 1.0e4,
        frequency: 5.0,
    };
    let field = magswim_core::magnetics::FieldProgram::oscillating(
        anchors.field_amplitude_for(500.0).unwrap(),
        5.0,
        magswim_core::math::Vec3::EX,
        45.0,
    );
    let mut config = magswim_core::dynamics::SimConfig::new(
        inputs,
        magswim_core::elastica::MaterialParams::new(1.0e5),
        field,
        1.0e4,
        anchors.viscosity_for(5.0).unwrap(),
    );
    config.dt = config.field.period() / 500.0;
    config.n_cycles_max = 2;
    config.min_cycles = 2;
    config.flow_samples_per_cycle = 0;
    let traj = magswim_core::dynamics::Simulation::new(config).unwrap().run().unwrap();

    for (cycle, want) in traj.cycles.iter().enumerate() {
        let row = csv
            .lines()
            .find(|l| l.starts_with(&format!("pitch,0,{},", cycle + 1)))
            .unwrap_or_else(|| panic!("missing angle-0 row for cycle {}", cycle + 1));
        let got: f64 = row.split(',').nth(3).unwrap().parse().unwrap();
        assert!(
            (got - want.blpc).abs() < 1e-10,
            "cycle {}: battery {got} vs direct {}",
            cycle + 1,
            want.blpc
        );
    }
}

#[test]
fn flowfield_with_zero_drive_emits_zero_frames() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "flow.cfg",
        "design.kind = carangiform\n\
         design.mesh_resolution = 4.5e-4\n\
         field.Mn = 0\n\
         sim.steps_per_cycle = 500\n\
         sim.n_cycles_max = 6\n\
         flowfield.plane = xz\n\
         flowfield.frames = 4\n\
         flowfield.plane_grid = 6\n",
    );
    let out = magswim(&["flowfield", "--config", &cfg, "--out", "flow"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let q = fs::read_to_string(tmp.path().join("flow/q_traces.csv")).unwrap();
    assert_eq!(q.lines().count(), 2 + 4 + 1, "frames + closing sample");
    for line in q.lines().skip(2) {
        for v in line.split(',').skip(1) {
            assert_eq!(v.parse::<f64>().unwrap(), 0.0);
        }
    }
    for k in 0..4 {
        let frame =
            fs::read_to_string(tmp.path().join(format!("flow/flow_xz_{k:04}.csv"))).unwrap();
        let mut rows = 0;
        for line in frame.lines().skip(2) {
            let vals: Vec<f64> =
                line.split(',').map(|v| v.parse().unwrap()).collect();
            assert_eq!(vals.len(), 6);
            assert!(vals.iter().all(|&v| v == 0.0), "nonzero flow without drive");
            rows += 1;
        }
        assert_eq!(rows, 6);
    }
}
