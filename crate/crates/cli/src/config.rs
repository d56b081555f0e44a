//! Flat dotted-key configuration files.
//!
//! One `key = value` pair per line, `#` starts a comment, blank lines are
//! ignored.  Keys are dotted paths (`design.kind`, `field.Mn`, `sim.dt`).
//! Unknown keys are schema errors so typos cannot silently fall back to
//! defaults.  Non-dimensional drive and fluid inputs (`field.Mn`,
//! `fluid.Fn`) are first class and converted to physical values through the
//! fixed anchors carried by the design (length scale from the planform,
//! E = 1e5 Pa, h = 0.1 mm, M = 1e4 A/m, f = 5 Hz unless overridden).

use std::collections::BTreeMap;

use magswim_core::dynamics::SimConfig;
use magswim_core::elastica::MaterialParams;
use magswim_core::geometry::{DesignKind, SwimmerDesign, TiltSpec};
use magswim_core::magnetics::{FieldProgram, NondimAnchors};
use magswim_core::math::{sqrt, Vec3};

use crate::error::{CliError, Result};

/// Anchor defaults shared by every non-dimensional conversion.
pub const DEFAULT_CHAR_LENGTH: f64 = 5e-3;
pub const DEFAULT_THICKNESS: f64 = 1e-4;
pub const DEFAULT_YOUNGS: f64 = 1e5;
pub const DEFAULT_MAGNETIZATION: f64 = 1e4;
pub const DEFAULT_FREQUENCY: f64 = 5.0;
/// Hard cap on the magneto-elastic number, the top of the studied range.
pub const MN_CAP: f64 = 500.0;

/// Raw parsed key-value pairs; extraction removes entries so leftovers can
/// be rejected by key path.
pub struct RawConfig {
    pairs: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<RawConfig> {
        let mut pairs = BTreeMap::new();
        for (lineno, raw_line) in text.lines().enumerate() {
            let line = match raw_line.find('#') {
                Some(i) => &raw_line[..i],
                None => raw_line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Config(format!(
                    "line {}: expected `key = value`, got `{line}`",
                    lineno + 1
                )));
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() || value.is_empty() {
                return Err(CliError::Config(format!(
                    "line {}: empty key or value",
                    lineno + 1
                )));
            }
            if pairs.insert(key.clone(), value).is_some() {
                return Err(CliError::Config(format!("duplicate key `{key}`")));
            }
        }
        Ok(RawConfig { pairs })
    }

    fn take(&mut self, key: &str) -> Option<String> {
        self.pairs.remove(key)
    }

    fn take_f64(&mut self, key: &str) -> Result<Option<f64>> {
        match self.take(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<f64>()
                .map(Some)
                .map_err(|_| CliError::Config(format!("{key}: `{v}` is not a number"))),
        }
    }

    fn take_usize(&mut self, key: &str) -> Result<Option<usize>> {
        match self.take(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<usize>()
                .map(Some)
                .map_err(|_| CliError::Config(format!("{key}: `{v}` is not a count"))),
        }
    }

    /// Fails on any key not consumed by the schema.
    fn finish(self) -> Result<()> {
        if let Some(key) = self.pairs.keys().next() {
            return Err(CliError::Config(format!("unknown key `{key}`")));
        }
        Ok(())
    }
}

fn parse_kind(name: &str) -> Result<DesignKind> {
    match name {
        "finger" | "finger-shaped" | "finger_shaped" => Ok(DesignKind::FingerShaped),
        "field" | "field-induced" | "field_induced" => Ok(DesignKind::FieldInduced),
        "drag" | "drag-induced" | "drag_induced" => Ok(DesignKind::DragInduced),
        "carangiform" | "carangiform-like" | "carangiform_like" => Ok(DesignKind::CarangiformLike),
        "anguilliform" | "anguilliform-like" | "anguilliform_like" => {
            Ok(DesignKind::AnguilliformLike)
        }
        other => Err(CliError::Config(format!("design.kind: unknown design `{other}`"))),
    }
}

/// Field program shape before amplitude resolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DriveKind {
    Rotating { sense: f64 },
    Oscillating { direction: Vec3, half_angle_deg: f64 },
    /// Sign-flipping fixed-axis field.
    Axial { axis: Vec3 },
}

impl DriveKind {
    /// Study default drive for a design: rotating for the helical swimmers,
    /// a directional sweep for the carangiform, and the non-directional
    /// vertical flip field for the anguilliform.
    pub fn default_for(kind: DesignKind) -> DriveKind {
        match kind {
            DesignKind::FingerShaped | DesignKind::FieldInduced | DesignKind::DragInduced => {
                DriveKind::Rotating { sense: 1.0 }
            }
            DesignKind::CarangiformLike => {
                DriveKind::Oscillating { direction: Vec3::EX, half_angle_deg: 45.0 }
            }
            DesignKind::AnguilliformLike => DriveKind::Axial { axis: Vec3::EZ },
        }
    }
}

/// Table-of-record operating point (Mn, Fn) for a design, used as config
/// defaults so a minimal file produces a swimming run.
pub fn reference_operating_point(kind: DesignKind) -> (f64, f64) {
    match kind {
        DesignKind::FingerShaped => (191.0, 5.0),
        DesignKind::FieldInduced => (398.0, 5.0),
        DesignKind::DragInduced => (53.0, 15.0),
        DesignKind::CarangiformLike => (500.0, 5.0),
        DesignKind::AnguilliformLike => (255.0, 5.0),
    }
}

/// Everything needed to build a `SimConfig`, kept in sweep-friendly form:
/// non-dimensional knobs stay symbolic until `build`, so axis updates to
/// geometry re-resolve the physical drive consistently.
#[derive(Debug, Clone)]
pub struct SpecInputs {
    pub kind: DesignKind,
    pub char_length: f64,
    /// Planform aspect ratio L/W at fixed characteristic length.
    pub aspect_ratio: f64,
    pub thickness: f64,
    /// Magnetized length fraction L0/L.
    pub magnetic_fraction: f64,
    pub mesh_resolution: f64,
    pub drive: DriveKind,
    pub mn: f64,
    /// Physical field amplitude [T]; overrides `mn` when set.
    pub amplitude_override: Option<f64>,
    pub frequency: f64,
    pub fn_number: f64,
    /// Dynamic viscosity [Pa s]; overrides `fn_number` when set.
    pub viscosity_override: Option<f64>,
    pub regularization: Option<f64>,
    pub youngs_modulus: f64,
    pub magnetization: f64,
    pub steps_per_cycle: usize,
    pub n_cycles_max: usize,
    pub min_cycles: usize,
    pub flow_samples_per_cycle: usize,
    pub snapshots_per_cycle: usize,
    pub contact_check_interval: usize,
    pub probe_box_factor: f64,
    pub probe_grid: usize,
    pub tilt: TiltSpec,
}

impl SpecInputs {
    pub fn defaults(kind: DesignKind) -> SpecInputs {
        let (mn, fn_number) = reference_operating_point(kind);
        SpecInputs {
            kind,
            char_length: DEFAULT_CHAR_LENGTH,
            aspect_ratio: kind.default_aspect_ratio(),
            thickness: DEFAULT_THICKNESS,
            magnetic_fraction: kind.default_active_fraction(),
            mesh_resolution: 0.046 * DEFAULT_CHAR_LENGTH,
            drive: DriveKind::default_for(kind),
            mn,
            amplitude_override: None,
            frequency: DEFAULT_FREQUENCY,
            fn_number,
            viscosity_override: None,
            regularization: None,
            youngs_modulus: DEFAULT_YOUNGS,
            magnetization: DEFAULT_MAGNETIZATION,
            steps_per_cycle: 2000,
            n_cycles_max: 50,
            min_cycles: 0,
            flow_samples_per_cycle: 0,
            snapshots_per_cycle: 0,
            contact_check_interval: 8,
            probe_box_factor: 2.0,
            probe_grid: 16,
            tilt: TiltSpec::default(),
        }
    }

    pub fn design(&self) -> SwimmerDesign {
        let a = sqrt(self.aspect_ratio);
        SwimmerDesign {
            kind: self.kind,
            length: self.char_length * a,
            width: self.char_length / a,
            thickness: self.thickness,
            magnetic_fraction: self.magnetic_fraction,
            mesh_resolution: self.mesh_resolution,
        }
    }

    pub fn anchors(&self) -> NondimAnchors {
        let design = self.design();
        NondimAnchors {
            youngs_modulus: self.youngs_modulus,
            thickness: self.thickness,
            characteristic_length: design.characteristic_length(),
            magnetic_length: self.magnetic_fraction * design.length,
            magnetization: self.magnetization,
            frequency: self.frequency,
        }
    }

    /// Resolved field amplitude [T].
    pub fn amplitude(&self) -> Result<f64> {
        match self.amplitude_override {
            Some(b) => Ok(b),
            None => Ok(self.anchors().field_amplitude_for(self.mn)?),
        }
    }

    /// Resolved bath viscosity [Pa s].
    pub fn viscosity(&self) -> Result<f64> {
        match self.viscosity_override {
            Some(mu) => Ok(mu),
            None => Ok(self.anchors().viscosity_for(self.fn_number)?),
        }
    }

    pub fn field(&self) -> Result<FieldProgram> {
        let amplitude = self.amplitude()?;
        Ok(match self.drive {
            DriveKind::Rotating { sense } => {
                FieldProgram::rotating(amplitude, self.frequency, sense)
            }
            DriveKind::Oscillating { direction, half_angle_deg } => {
                FieldProgram::oscillating(amplitude, self.frequency, direction, half_angle_deg)
            }
            DriveKind::Axial { axis } => FieldProgram::axial(amplitude, self.frequency, axis),
        })
    }

    /// Applies one sweep-axis value.  `CycleIndex` is an output axis — the
    /// run is shared across its values — so it leaves the inputs untouched.
    pub fn apply_axis(&mut self, axis: AxisName, value: f64) {
        match axis {
            AxisName::Mn => {
                self.mn = value;
                self.amplitude_override = None;
            }
            AxisName::Fn => {
                self.fn_number = value;
                self.viscosity_override = None;
            }
            AxisName::L0OverL => self.magnetic_fraction = value,
            AxisName::LOverW => self.aspect_ratio = value,
            AxisName::TiltRoll => self.tilt.roll_deg = value,
            AxisName::TiltPitch => self.tilt.pitch_deg = value,
            AxisName::TiltYaw => self.tilt.yaw_deg = value,
            AxisName::CycleIndex => {}
        }
    }

    pub fn build(&self) -> Result<SimConfig> {
        if !(self.mn.is_finite() && (0.0..=MN_CAP).contains(&self.mn)) {
            return Err(CliError::Config(format!(
                "field.Mn: {} outside the studied range [0, {MN_CAP}]",
                self.mn
            )));
        }
        let mut config = SimConfig::new(
            self.design(),
            MaterialParams::new(self.youngs_modulus),
            self.field()?,
            self.magnetization,
            self.viscosity()?,
        );
        config.regularization = self.regularization;
        config.dt = config.field.period() / self.steps_per_cycle as f64;
        config.n_cycles_max = self.n_cycles_max;
        config.min_cycles = self.min_cycles;
        config.tilt = self.tilt;
        config.flow_samples_per_cycle = self.flow_samples_per_cycle;
        config.snapshots_per_cycle = self.snapshots_per_cycle;
        config.contact_check_interval = self.contact_check_interval;
        config.probe_box_factor = self.probe_box_factor;
        config.probe_grid = self.probe_grid;
        config.validate()?;
        Ok(config)
    }
}

/// Consumes the `design.* field.* fluid.* material.* anchors.* sim.* tilt.*`
/// keys of `raw`.
fn take_spec_inputs(raw: &mut RawConfig) -> Result<SpecInputs> {
    let kind = match raw.take("design.kind") {
        Some(name) => parse_kind(&name)?,
        None => return Err(CliError::Config(String::from("design.kind is required"))),
    };
    let mut spec = SpecInputs::defaults(kind);

    if let Some(v) = raw.take_f64("design.char_length")? {
        spec.char_length = v;
        spec.mesh_resolution = 0.046 * v;
    }
    if let Some(v) = raw.take_f64("design.aspect_ratio")? {
        spec.aspect_ratio = v;
    }
    if let Some(v) = raw.take_f64("design.thickness")? {
        spec.thickness = v;
    }
    if let Some(v) = raw.take_f64("design.magnetic_fraction")? {
        spec.magnetic_fraction = v;
    }
    if let Some(v) = raw.take_f64("design.mesh_resolution")? {
        spec.mesh_resolution = v;
    }

    match raw.take("field.kind").as_deref() {
        None => {}
        Some("rotating") => {
            if !matches!(spec.drive, DriveKind::Rotating { .. }) {
                spec.drive = DriveKind::Rotating { sense: 1.0 };
            }
        }
        Some("oscillating") => {
            if !matches!(spec.drive, DriveKind::Oscillating { .. }) {
                spec.drive =
                    DriveKind::Oscillating { direction: Vec3::EX, half_angle_deg: 45.0 };
            }
        }
        Some("axial") => {
            if !matches!(spec.drive, DriveKind::Axial { .. }) {
                spec.drive = DriveKind::Axial { axis: Vec3::EZ };
            }
        }
        Some(other) => {
            return Err(CliError::Config(format!(
                "field.kind: `{other}` is not rotating|oscillating|axial"
            )));
        }
    }
    if let Some(v) = raw.take_f64("field.sense")? {
        match &mut spec.drive {
            DriveKind::Rotating { sense } => *sense = v,
            _ => {
                return Err(CliError::Config(String::from(
                    "field.sense only applies to a rotating field",
                )))
            }
        }
    }
    if let Some(name) = raw.take("field.direction") {
        let dir = match name.as_str() {
            "x" => Vec3::EX,
            "y" => Vec3::EY,
            "z" => Vec3::EZ,
            other => {
                return Err(CliError::Config(format!("field.direction: `{other}` is not x|y|z")))
            }
        };
        match &mut spec.drive {
            DriveKind::Oscillating { direction, .. } => *direction = dir,
            DriveKind::Axial { axis } => *axis = dir,
            _ => {
                return Err(CliError::Config(String::from(
                    "field.direction only applies to an oscillating or axial field",
                )))
            }
        }
    }
    if let Some(v) = raw.take_f64("field.half_angle_deg")? {
        match &mut spec.drive {
            DriveKind::Oscillating { half_angle_deg, .. } => *half_angle_deg = v,
            _ => {
                return Err(CliError::Config(String::from(
                    "field.half_angle_deg only applies to an oscillating field",
                )))
            }
        }
    }
    if let Some(v) = raw.take_f64("field.Mn")? {
        spec.mn = v;
    }
    if let Some(v) = raw.take_f64("field.amplitude")? {
        spec.amplitude_override = Some(v);
    }
    if let Some(v) = raw.take_f64("field.frequency")? {
        spec.frequency = v;
    }

    if let Some(v) = raw.take_f64("fluid.Fn")? {
        spec.fn_number = v;
    }
    if let Some(v) = raw.take_f64("fluid.viscosity")? {
        spec.viscosity_override = Some(v);
    }
    if let Some(v) = raw.take_f64("fluid.regularization")? {
        spec.regularization = Some(v);
    }

    if let Some(v) = raw.take_f64("material.youngs_modulus")? {
        spec.youngs_modulus = v;
    }
    if let Some(v) = raw.take_f64("anchors.magnetization")? {
        spec.magnetization = v;
    }

    if let Some(dt) = raw.take_f64("sim.dt")? {
        if raw.pairs.contains_key("sim.steps_per_cycle") {
            return Err(CliError::Config(String::from(
                "sim.dt and sim.steps_per_cycle are mutually exclusive",
            )));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(CliError::Config(String::from("sim.dt must be positive")));
        }
        let steps = 1.0 / (spec.frequency * dt);
        let rounded = (steps + 0.5) as usize;
        if rounded < 500 || (steps - rounded as f64).abs() > 1e-6 * steps {
            return Err(CliError::Config(format!(
                "sim.dt: {dt} must divide the period into at least 500 equal steps"
            )));
        }
        spec.steps_per_cycle = rounded;
    }
    if let Some(v) = raw.take_usize("sim.steps_per_cycle")? {
        spec.steps_per_cycle = v;
    }
    if let Some(v) = raw.take_usize("sim.n_cycles_max")? {
        spec.n_cycles_max = v;
    }
    if let Some(v) = raw.take_usize("sim.min_cycles")? {
        spec.min_cycles = v;
    }
    if let Some(v) = raw.take_usize("sim.flow_samples_per_cycle")? {
        spec.flow_samples_per_cycle = v;
    }
    if let Some(v) = raw.take_usize("sim.snapshots_per_cycle")? {
        spec.snapshots_per_cycle = v;
    }
    if let Some(v) = raw.take_usize("sim.contact_check_interval")? {
        spec.contact_check_interval = v;
    }
    if let Some(v) = raw.take_f64("sim.probe_box_factor")? {
        spec.probe_box_factor = v;
    }
    if let Some(v) = raw.take_usize("sim.probe_grid")? {
        spec.probe_grid = v;
    }

    if let Some(v) = raw.take_f64("tilt.roll_deg")? {
        spec.tilt.roll_deg = v;
    }
    if let Some(v) = raw.take_f64("tilt.pitch_deg")? {
        spec.tilt.pitch_deg = v;
    }
    if let Some(v) = raw.take_f64("tilt.yaw_deg")? {
        spec.tilt.yaw_deg = v;
    }
    Ok(spec)
}

/// Single-run specification: the simulation inputs plus output shaping.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub inputs: SpecInputs,
    /// Keep every n-th COM row in the trajectory CSV.
    pub output_stride: usize,
}

pub fn parse_run(text: &str) -> Result<RunSpec> {
    let mut raw = RawConfig::parse(text)?;
    let inputs = take_spec_inputs(&mut raw)?;
    let output_stride = raw.take_usize("output.stride")?.unwrap_or(10).max(1);
    raw.finish()?;
    inputs.build()?;
    Ok(RunSpec { inputs, output_stride })
}

/// Sweep axes over the study's parameter space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AxisName {
    Mn,
    Fn,
    L0OverL,
    LOverW,
    TiltRoll,
    TiltPitch,
    TiltYaw,
    CycleIndex,
}

impl AxisName {
    pub fn parse(name: &str) -> Result<AxisName> {
        Ok(match name {
            "Mn" => AxisName::Mn,
            "Fn" => AxisName::Fn,
            "L0_over_L" => AxisName::L0OverL,
            "L_over_W" => AxisName::LOverW,
            "tilt_roll" => AxisName::TiltRoll,
            "tilt_pitch" => AxisName::TiltPitch,
            "tilt_yaw" => AxisName::TiltYaw,
            "cycle_index" => AxisName::CycleIndex,
            other => {
                return Err(CliError::Config(format!("sweep axis: unknown name `{other}`")));
            }
        })
    }

    pub fn label(self) -> &'static str {
        match self {
            AxisName::Mn => "Mn",
            AxisName::Fn => "Fn",
            AxisName::L0OverL => "L0_over_L",
            AxisName::LOverW => "L_over_W",
            AxisName::TiltRoll => "tilt_roll",
            AxisName::TiltPitch => "tilt_pitch",
            AxisName::TiltYaw => "tilt_yaw",
            AxisName::CycleIndex => "cycle_index",
        }
    }
}

/// One sweep axis: `steps` evenly spaced values over [min, max].
#[derive(Debug, Clone)]
pub struct Axis {
    pub name: AxisName,
    pub values: Vec<f64>,
}

fn take_axis(raw: &mut RawConfig, prefix: &str, default: Option<(&str, f64, f64, usize)>) -> Result<Option<Axis>> {
    let name_key = format!("{prefix}.name");
    let (name, min, max, steps) = match raw.take(&name_key) {
        Some(name) => {
            let min = raw
                .take_f64(&format!("{prefix}.min"))?
                .ok_or_else(|| CliError::Config(format!("{prefix}.min is required")))?;
            let max = raw
                .take_f64(&format!("{prefix}.max"))?
                .ok_or_else(|| CliError::Config(format!("{prefix}.max is required")))?;
            let steps = raw
                .take_usize(&format!("{prefix}.steps"))?
                .ok_or_else(|| CliError::Config(format!("{prefix}.steps is required")))?;
            (AxisName::parse(&name)?, min, max, steps)
        }
        None => match default {
            Some((name, min, max, steps)) => (AxisName::parse(name)?, min, max, steps),
            None => return Ok(None),
        },
    };
    if steps == 0 || !(min.is_finite() && max.is_finite()) || max < min {
        return Err(CliError::Config(format!("{prefix}: empty or inverted range")));
    }
    let values = if steps == 1 {
        vec![min]
    } else {
        (0..steps)
            .map(|i| min + (max - min) * i as f64 / (steps - 1) as f64)
            .collect()
    };
    Ok(Some(Axis { name, values }))
}

/// Two-axis sweep over a base configuration.
pub struct SweepSpec {
    pub base: SpecInputs,
    pub axis1: Axis,
    pub axis2: Axis,
}

pub fn parse_sweep(text: &str) -> Result<SweepSpec> {
    let mut raw = RawConfig::parse(text)?;
    let base = take_spec_inputs(&mut raw)?;
    // Default grid: the study's Mn x Fn map.
    let axis1 = take_axis(&mut raw, "sweep.axis1", Some(("Mn", 0.0, 500.0, 11)))?
        .expect("default axis present");
    let axis2 = take_axis(&mut raw, "sweep.axis2", Some(("Fn", 5.0, 30.0, 6)))?
        .expect("default axis present");
    raw.finish()?;
    if axis1.name == axis2.name {
        return Err(CliError::Config(String::from("sweep axes must differ")));
    }
    base.build()?;
    Ok(SweepSpec { base, axis1, axis2 })
}

/// Tilt-response battery: per-cycle blpc across initial tilt angles.
pub struct StabilitySpec {
    pub base: SpecInputs,
    pub axis: AxisName,
    pub angles_deg: Vec<f64>,
    pub cycles: usize,
}

pub fn parse_stability(text: &str) -> Result<StabilitySpec> {
    let mut raw = RawConfig::parse(text)?;
    let base = take_spec_inputs(&mut raw)?;
    let axis = match raw.take("stability.axis").as_deref() {
        None | Some("roll") => AxisName::TiltRoll,
        Some("pitch") => AxisName::TiltPitch,
        Some("yaw") => AxisName::TiltYaw,
        Some(other) => {
            return Err(CliError::Config(format!(
                "stability.axis: `{other}` is not roll|pitch|yaw"
            )));
        }
    };
    let angles_deg = match raw.take("stability.angles") {
        None => vec![0.0, 15.0, 30.0, 45.0, 60.0, 75.0, 90.0],
        Some(list) => {
            let mut angles = Vec::new();
            for part in list.split(',') {
                let angle: f64 = part.trim().parse().map_err(|_| {
                    CliError::Config(format!("stability.angles: `{part}` is not a number"))
                })?;
                if !(0.0..=90.0).contains(&angle) {
                    return Err(CliError::Config(format!(
                        "stability.angles: {angle} outside [0, 90]"
                    )));
                }
                angles.push(angle);
            }
            angles
        }
    };
    if angles_deg.is_empty() {
        return Err(CliError::Config(String::from("stability.angles must be non-empty")));
    }
    let cycles = raw.take_usize("stability.cycles")?.unwrap_or(5).max(2);
    raw.finish()?;
    base.build()?;
    Ok(StabilitySpec { base, axis, angles_deg, cycles })
}

/// Flow-field dump: velocity-magnitude frames on a coordinate plane plus
/// the flowrate traces over one steady cycle.
pub struct FlowfieldSpec {
    pub base: SpecInputs,
    /// Plane through the COM: "xz", "xy" or "yz".
    pub plane: &'static str,
    /// Frames (and flowrate samples) per cycle.
    pub frames: usize,
    /// Probe points per axis of the plane grid.
    pub plane_grid: usize,
}

pub fn parse_flowfield(text: &str) -> Result<FlowfieldSpec> {
    let mut raw = RawConfig::parse(text)?;
    let mut base = take_spec_inputs(&mut raw)?;
    let plane = match raw.take("flowfield.plane").as_deref() {
        None | Some("xz") => "xz",
        Some("xy") => "xy",
        Some("yz") => "yz",
        Some(other) => {
            return Err(CliError::Config(format!("flowfield.plane: `{other}` is not xz|xy|yz")));
        }
    };
    let frames = raw.take_usize("flowfield.frames")?.unwrap_or(16).max(2);
    let plane_grid = raw.take_usize("flowfield.plane_grid")?.unwrap_or(32).max(2);
    raw.finish()?;
    if base.flow_samples_per_cycle == 0 {
        base.flow_samples_per_cycle = frames;
    }
    base.build()?;
    Ok(FlowfieldSpec { base, plane, frames, plane_grid })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_builds_with_reference_defaults() {
        let spec = parse_run("design.kind = carangiform\n").unwrap();
        assert_eq!(spec.inputs.kind, DesignKind::CarangiformLike);
        assert_eq!(spec.inputs.mn, 500.0);
        assert_eq!(spec.inputs.fn_number, 5.0);
        let config = spec.inputs.build().unwrap();
        assert!((config.dt - 0.2 / 2000.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_keys_are_rejected_by_path() {
        let err = parse_run("design.kind = finger\ndesign.wdith = 2e-3\n").unwrap_err();
        assert!(err.to_string().contains("design.wdith"), "{err}");
    }

    #[test]
    fn oversized_dt_is_rejected_by_name() {
        let err = parse_run("design.kind = finger\nsim.dt = 1e-3\n").unwrap_err();
        assert!(err.to_string().contains("sim.dt"), "{err}");
    }

    #[test]
    fn nondim_inputs_resolve_through_the_anchors() {
        let spec = parse_run(
            "design.kind = finger\nfield.Mn = 191\nfluid.Fn = 5\n",
        )
        .unwrap();
        // Mn = 12 B M L. L0 / (E h^2) inverted for B.
        let anchors = spec.inputs.anchors();
        let b = spec.inputs.amplitude().unwrap();
        assert!((anchors.magneto_elastic_number(b) - 191.0).abs() < 1e-9);
        let mu = spec.inputs.viscosity().unwrap();
        assert!((anchors.fluid_number(mu) - 5.0).abs() < 1e-9);
    }

    #[test]
    fn mn_above_the_cap_is_rejected() {
        let err = parse_run("design.kind = carangiform\nfield.Mn = 526\n").unwrap_err();
        assert!(err.to_string().contains("field.Mn"), "{err}");
    }

    #[test]
    fn sweep_defaults_cover_the_study_grid() {
        let spec = parse_sweep("design.kind = finger\n").unwrap();
        assert_eq!(spec.axis1.name, AxisName::Mn);
        assert_eq!(spec.axis1.values.len(), 11);
        assert_eq!(spec.axis1.values[10], 500.0);
        assert_eq!(spec.axis2.name, AxisName::Fn);
        assert_eq!(spec.axis2.values, vec![5.0, 10.0, 15.0, 20.0, 25.0, 30.0]);
    }
}
