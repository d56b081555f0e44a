//! External field programs and magnetic loading of the sheet.
//!
//! A uniform external field exerts a pure body couple per unit volume of
//! `m x B` on the remnant magnetization `m`, which convects rigidly with each
//! element.  Nodes of the discrete shell carry no rotational degrees of
//! freedom, so every element couple is converted into the minimal-norm triple
//! of nodal forces with zero net force and the prescribed moment.
//!
//! Non-dimensional control parameters map to physical ones through
//! [`NondimAnchors`]: the magneto-elastic number `Mn = 12 B M L_bar L0 /
//! (E h^2)` fixes the field amplitude and the fluid number `Fn = 12 mu
//! L_bar^3 f / (E h^3)` fixes the viscosity.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::geometry::SwimmerMesh;
use crate::math::{cos, deg_to_rad, fabs, sin, solve3, Mat3, Vec3};
use crate::{Error, Result};

const TWO_PI: f64 = 2.0 * core::f64::consts::PI;

/// Shape of the programmed field direction over time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FieldKind {
    /// Field of constant magnitude rotating in the y-z plane about the
    /// propulsion axis x; `sense` is +1 (y toward z) or -1.
    RotatingAboutX { sense: f64 },
    /// Field of constant magnitude whose direction sweeps sinusoidally about
    /// a mean direction, tilting toward the out-of-plane axis z by up to
    /// `half_angle_deg` degrees (for a mean direction along z itself the
    /// sweep tilts toward x instead).
    OscillatingDirectional { direction: Vec3, half_angle_deg: f64 },
    /// Fixed-axis field whose signed magnitude varies as sin(2πft): it
    /// vanishes and reverses twice per cycle, so it picks no direction in
    /// the plane normal to the axis.  The half-strokes are mirror images,
    /// which is what halves the period of the axial flow response.
    OscillatingAxial { axis: Vec3 },
}

/// Time-dependent uniform external field `B(t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldProgram {
    pub kind: FieldKind,
    /// Field magnitude [T].
    pub amplitude: f64,
    /// Cycle frequency [Hz].
    pub frequency: f64,
    /// Rigid orientation of the whole program; identity keeps the textbook
    /// axes.  Rotating the frame together with the swimmer rotates `B(t)`
    /// pointwise, which is what the equivariance contract needs.
    pub frame: Mat3,
}

impl FieldProgram {
    pub fn rotating(amplitude: f64, frequency: f64, sense: f64) -> FieldProgram {
        FieldProgram {
            kind: FieldKind::RotatingAboutX { sense },
            amplitude,
            frequency,
            frame: Mat3::IDENTITY,
        }
    }

    pub fn oscillating(
        amplitude: f64,
        frequency: f64,
        direction: Vec3,
        half_angle_deg: f64,
    ) -> FieldProgram {
        FieldProgram {
            kind: FieldKind::OscillatingDirectional { direction, half_angle_deg },
            amplitude,
            frequency,
            frame: Mat3::IDENTITY,
        }
    }

    pub fn axial(amplitude: f64, frequency: f64, axis: Vec3) -> FieldProgram {
        FieldProgram {
            kind: FieldKind::OscillatingAxial { axis },
            amplitude,
            frequency,
            frame: Mat3::IDENTITY,
        }
    }

    pub fn with_frame(mut self, frame: Mat3) -> FieldProgram {
        self.frame = frame;
        self
    }

    /// Period of one actuation cycle [s].
    pub fn period(&self) -> f64 {
        1.0 / self.frequency
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude.is_finite() && self.amplitude >= 0.0) {
            return Err(Error::InvalidParameter(String::from(
                "field amplitude must be finite and non-negative",
            )));
        }
        if !(self.frequency.is_finite() && self.frequency > 0.0) {
            return Err(Error::InvalidParameter(String::from(
                "field frequency must be positive",
            )));
        }
        match self.kind {
            FieldKind::RotatingAboutX { sense } => {
                if fabs(fabs(sense) - 1.0) > 1e-12 {
                    return Err(Error::InvalidParameter(String::from(
                        "rotation sense must be +1 or -1",
                    )));
                }
            }
            FieldKind::OscillatingDirectional { direction, half_angle_deg } => {
                if fabs(direction.norm() - 1.0) > 1e-9 {
                    return Err(Error::InvalidParameter(String::from(
                        "oscillation mean direction must be a unit vector",
                    )));
                }
                if !(half_angle_deg.is_finite()
                    && half_angle_deg > 0.0
                    && half_angle_deg <= 180.0)
                {
                    return Err(Error::InvalidParameter(String::from(
                        "oscillation half-angle must lie in (0, 180] degrees",
                    )));
                }
            }
            FieldKind::OscillatingAxial { axis } => {
                if fabs(axis.norm() - 1.0) > 1e-9 {
                    return Err(Error::InvalidParameter(String::from(
                        "oscillation axis must be a unit vector",
                    )));
                }
            }
        }
        // A frame must be a rotation: columns orthonormal, determinant +1.
        let f = self.frame;
        let ortho_err = (f.mul_mat(&f.transpose()).m.iter().flatten())
            .zip(Mat3::IDENTITY.m.iter().flatten())
            .map(|(a, b)| fabs(a - b))
            .fold(0.0, f64::max);
        if ortho_err > 1e-9 || fabs(f.det() - 1.0) > 1e-9 {
            return Err(Error::InvalidParameter(String::from(
                "field frame must be a proper rotation",
            )));
        }
        Ok(())
    }

    /// Field vector at time `t` [T].
    pub fn field_at(&self, t: f64) -> Vec3 {
        let phase = TWO_PI * self.frequency * t;
        let local = match self.kind {
            FieldKind::RotatingAboutX { sense } => {
                Vec3 { x: 0.0, y: cos(sense * phase), z: sin(sense * phase) }
            }
            FieldKind::OscillatingDirectional { direction, half_angle_deg } => {
                let alpha = deg_to_rad(half_angle_deg) * sin(phase);
                // Sweep axis: positive alpha tilts the direction toward +z,
                // or toward +x when the mean direction is (anti)parallel z.
                let raw_axis = direction.cross(Vec3::EZ);
                let axis = raw_axis
                    .try_normalized(1e-9)
                    .unwrap_or(Vec3 { x: 0.0, y: 1.0, z: 0.0 });
                Mat3::rotation(axis, alpha).mul_vec(direction)
            }
            FieldKind::OscillatingAxial { axis } => axis * sin(phase),
        };
        self.frame.mul_vec(local) * self.amplitude
    }
}

/// Magnetic load on the mesh: nodal forces plus the per-element couples they
/// were derived from (diagnostic; zero for passive elements).
#[derive(Debug, Clone)]
pub struct MagneticLoad {
    pub forces: Vec<Vec3>,
    pub couples: Vec<Vec3>,
}

struct ActiveElement {
    element: usize,
    nodes: [usize; 3],
    /// Magnetization direction expressed in the element material frame.
    m_local: Vec3,
    /// Reference area times thickness [m^3].
    volume: f64,
}

/// Precomputed per-element magnetization data for a mesh.
pub struct MagneticModel {
    n_nodes: usize,
    n_elements: usize,
    /// Remnant magnetization magnitude [A/m].
    magnetization: f64,
    elements: Vec<ActiveElement>,
}

/// Orthonormal triad (first edge, in-plane perpendicular, normal) as matrix
/// columns; `None` for degenerate triangles.
fn element_triad(p0: Vec3, p1: Vec3, p2: Vec3) -> Option<Mat3> {
    let t1 = (p1 - p0).try_normalized(0.0)?;
    let n = (p1 - p0).cross(p2 - p0).try_normalized(0.0)?;
    let t2 = n.cross(t1);
    Some(Mat3::from_cols(t1, t2, n))
}

impl MagneticModel {
    /// `magnetization` is the remnant magnitude M [A/m] shared by all active
    /// elements; directions come from the mesh.
    pub fn new(mesh: &SwimmerMesh, magnetization: f64) -> Result<MagneticModel> {
        if !(magnetization.is_finite() && magnetization >= 0.0) {
            return Err(Error::InvalidParameter(String::from(
                "magnetization magnitude must be finite and non-negative",
            )));
        }
        let mut elements = Vec::new();
        for (e, tri) in mesh.triangles.iter().enumerate() {
            if !mesh.active[e] {
                continue;
            }
            let [a, b, c] = tri.map(|i| i as usize);
            let (p0, p1, p2) = (
                mesh.reference_nodes[a],
                mesh.reference_nodes[b],
                mesh.reference_nodes[c],
            );
            let triad = element_triad(p0, p1, p2).ok_or_else(|| {
                Error::DegenerateMesh(format!("degenerate reference triangle {e}"))
            })?;
            let dir = mesh.magnetization_dir[e];
            if fabs(dir.norm() - 1.0) > 1e-9 {
                return Err(Error::InvalidDesign(format!(
                    "active element {e} lacks a unit magnetization direction"
                )));
            }
            let area = 0.5 * (p1 - p0).cross(p2 - p0).norm();
            elements.push(ActiveElement {
                element: e,
                nodes: [a, b, c],
                m_local: triad.transpose().mul_vec(dir),
                volume: area * mesh.thickness,
            });
        }
        Ok(MagneticModel {
            n_nodes: mesh.n_nodes(),
            n_elements: mesh.n_elements(),
            magnetization,
            elements,
        })
    }

    pub fn n_active(&self) -> usize {
        self.elements.len()
    }

    /// Magnetization direction of active element `e` convected to the
    /// current configuration; `None` for passive elements.
    pub fn convected_direction(&self, nodes: &[Vec3], e: usize) -> Option<Vec3> {
        let el = self.elements.iter().find(|el| el.element == e)?;
        let [a, b, c] = el.nodes;
        let triad = element_triad(nodes[a], nodes[b], nodes[c])?;
        Some(triad.mul_vec(el.m_local))
    }

    /// Accumulates the nodal forces for field `b` into `out` (not cleared);
    /// returns nothing else.  Fast path for the time stepper.
    pub fn accumulate_forces(&self, nodes: &[Vec3], b: Vec3, out: &mut [Vec3]) -> Result<()> {
        self.load_into(nodes, b, out, None)
    }

    /// Nodal forces and per-element couples for field `b` at configuration
    /// `nodes`.
    pub fn load(&self, nodes: &[Vec3], b: Vec3) -> Result<MagneticLoad> {
        let mut forces = vec![Vec3::ZERO; self.n_nodes];
        let mut couples = vec![Vec3::ZERO; self.n_elements];
        self.load_into(nodes, b, &mut forces, Some(&mut couples))?;
        Ok(MagneticLoad { forces, couples })
    }

    fn load_into(
        &self,
        nodes: &[Vec3],
        b: Vec3,
        forces: &mut [Vec3],
        mut couples: Option<&mut [Vec3]>,
    ) -> Result<()> {
        if nodes.len() != self.n_nodes || forces.len() != self.n_nodes {
            return Err(Error::InvalidParameter(format!(
                "expected {} nodes, got {} (forces {})",
                self.n_nodes,
                nodes.len(),
                forces.len()
            )));
        }
        for el in &self.elements {
            let [a, bb, c] = el.nodes;
            let (p0, p1, p2) = (nodes[a], nodes[bb], nodes[c]);
            let triad = element_triad(p0, p1, p2).ok_or_else(|| {
                Error::DegenerateMesh(format!("degenerate triangle {} during load", el.element))
            })?;
            let m_cur = triad.mul_vec(el.m_local);
            let couple = m_cur.cross(b) * (self.magnetization * el.volume);
            if let Some(out) = couples.as_deref_mut() {
                out[el.element] = couple;
            }
            if couple == Vec3::ZERO {
                continue;
            }
            // Minimal-norm nodal forces with zero sum and moment `couple`
            // about the centroid: f_i = omega x r_i with K omega = couple,
            // K = sum(|r|^2 I - r r^T).  The third force is the negated sum
            // of the first two so the net force vanishes identically.
            let centroid = (p0 + p1 + p2) / 3.0;
            let r = [p0 - centroid, p1 - centroid, p2 - centroid];
            let mut k = [[0.0; 3]; 3];
            for ri in r {
                let rr = ri.norm_sq();
                let ra = ri.to_array();
                for (i, row) in k.iter_mut().enumerate() {
                    for (j, entry) in row.iter_mut().enumerate() {
                        *entry += if i == j { rr } else { 0.0 } - ra[i] * ra[j];
                    }
                }
            }
            let omega = solve3(&Mat3 { m: k }, couple).ok_or_else(|| {
                Error::DegenerateMesh(format!(
                    "collinear triangle {} cannot carry a couple",
                    el.element
                ))
            })?;
            let f0 = omega.cross(r[0]);
            let f1 = omega.cross(r[1]);
            forces[a] += f0;
            forces[bb] += f1;
            forces[c] -= f0 + f1;
        }
        Ok(())
    }
}

/// One-call convenience wrapper around [`MagneticModel`].
pub fn magnetic_load(
    mesh: &SwimmerMesh,
    nodes: &[Vec3],
    b: Vec3,
    magnetization: f64,
) -> Result<MagneticLoad> {
    MagneticModel::new(mesh, magnetization)?.load(nodes, b)
}

/// Fixed physical scales that tie the non-dimensional control parameters to
/// field amplitude and viscosity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NondimAnchors {
    /// Young's modulus E [Pa].
    pub youngs_modulus: f64,
    /// Sheet thickness h [m].
    pub thickness: f64,
    /// Characteristic length L_bar = sqrt(L W) [m].
    pub characteristic_length: f64,
    /// Magnetized length L0 [m].
    pub magnetic_length: f64,
    /// Remnant magnetization magnitude M [A/m].
    pub magnetization: f64,
    /// Actuation frequency f [Hz].
    pub frequency: f64,
}

impl NondimAnchors {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.youngs_modulus,
            self.thickness,
            self.characteristic_length,
            self.magnetization,
            self.frequency,
        ];
        if all.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidParameter(String::from(
                "nondimensional anchors must be positive",
            )));
        }
        if !(self.magnetic_length.is_finite() && self.magnetic_length >= 0.0) {
            return Err(Error::InvalidParameter(String::from(
                "magnetic length must be non-negative",
            )));
        }
        Ok(())
    }

    /// Magneto-elastic number `12 B M L_bar L0 / (E h^2)`.
    pub fn magneto_elastic_number(&self, field_amplitude: f64) -> f64 {
        12.0 * field_amplitude * self.magnetization * self.characteristic_length
            * self.magnetic_length
            / (self.youngs_modulus * self.thickness * self.thickness)
    }

    /// Fluid number `12 mu L_bar^3 f / (E h^3)`.
    pub fn fluid_number(&self, viscosity: f64) -> f64 {
        let l3 = self.characteristic_length * self.characteristic_length
            * self.characteristic_length;
        let h3 = self.thickness * self.thickness * self.thickness;
        12.0 * viscosity * l3 * self.frequency / (self.youngs_modulus * h3)
    }

    /// Field amplitude B [T] realizing the given magneto-elastic number.
    pub fn field_amplitude_for(&self, mn: f64) -> Result<f64> {
        self.validate()?;
        if !(mn.is_finite() && mn >= 0.0) {
            return Err(Error::InvalidParameter(String::from(
                "magneto-elastic number must be non-negative",
            )));
        }
        if mn == 0.0 {
            return Ok(0.0);
        }
        if self.magnetic_length == 0.0 {
            return Err(Error::InvalidParameter(String::from(
                "magnetic length is zero, field amplitude undefined for nonzero Mn",
            )));
        }
        Ok(mn * self.youngs_modulus * self.thickness * self.thickness
            / (12.0
                * self.magnetization
                * self.characteristic_length
                * self.magnetic_length))
    }

    /// Viscosity mu [Pa s] realizing the given fluid number.
    pub fn viscosity_for(&self, fn_number: f64) -> Result<f64> {
        self.validate()?;
        if !(fn_number.is_finite() && fn_number > 0.0) {
            return Err(Error::InvalidParameter(String::from(
                "fluid number must be positive",
            )));
        }
        let l3 = self.characteristic_length * self.characteristic_length
            * self.characteristic_length;
        let h3 = self.thickness * self.thickness * self.thickness;
        Ok(fn_number * self.youngs_modulus * h3 / (12.0 * l3 * self.frequency))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_swimmer, rotate_rigid, DesignKind, SwimmerDesign};
    use crate::math::{sqrt, vec3, Mat3};

    fn close(a: Vec3, b: Vec3, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn rotating_field_traces_the_y_z_circle() {
        let p = FieldProgram::rotating(2.0e-2, 5.0, 1.0);
        p.validate().unwrap();
        assert!(close(p.field_at(0.0), vec3(0.0, 2.0e-2, 0.0), 1e-16));
        assert!(close(p.field_at(0.05), vec3(0.0, 0.0, 2.0e-2), 1e-15));
        let rev = FieldProgram::rotating(2.0e-2, 5.0, -1.0);
        assert!(close(rev.field_at(0.05), vec3(0.0, 0.0, -2.0e-2), 1e-15));
        for k in 0..97 {
            let t = 0.2 * k as f64 / 97.0;
            assert!(fabs(p.field_at(t).norm() - 2.0e-2) < 1e-15);
            assert!(fabs(p.field_at(t).x) < 1e-18);
        }
    }

    #[test]
    fn oscillating_field_reaches_exactly_the_half_angle() {
        let p = FieldProgram::oscillating(1.0e-2, 5.0, Vec3::EX, 30.0);
        p.validate().unwrap();
        let mut max_angle: f64 = 0.0;
        for k in 0..=4000 {
            let t = 0.2 * k as f64 / 4000.0;
            let b = p.field_at(t);
            assert!(fabs(b.norm() - 1.0e-2) < 1e-15);
            assert!(fabs(b.y) < 1e-15, "sweep should stay in the x-z plane");
            let angle = crate::math::atan2(sqrt(b.y * b.y + b.z * b.z), b.x);
            max_angle = max_angle.max(fabs(angle));
        }
        // The dense sample hits t = T/4 where alpha peaks at exactly 30 deg.
        assert!(fabs(max_angle - deg_to_rad(30.0)) < 1e-10);
    }

    #[test]
    fn vertical_mean_direction_sweeps_through_the_x_z_plane() {
        let p = FieldProgram::oscillating(1.0, 5.0, Vec3::EZ, 90.0);
        p.validate().unwrap();
        // At t = T/4 the tilt peaks at 90 degrees toward +x.
        assert!(close(p.field_at(0.05), Vec3::EX, 1e-12));
        assert!(close(p.field_at(0.0), Vec3::EZ, 1e-12));
        // At the opposite extreme the field points along -x.
        assert!(close(p.field_at(0.15), vec3(-1.0, 0.0, 0.0), 1e-12));
    }

    #[test]
    fn axial_program_reverses_sign_each_half_cycle() {
        let p = FieldProgram::axial(2.0, 5.0, Vec3::EZ);
        p.validate().unwrap();
        assert!(close(p.field_at(0.0), Vec3::ZERO, 1e-12));
        assert!(close(p.field_at(0.05), vec3(0.0, 0.0, 2.0), 1e-12));
        assert!(close(p.field_at(0.15), vec3(0.0, 0.0, -2.0), 1e-12));
        // Mirror strokes: B(t + T/2) = -B(t) for every t.
        for k in 0..37 {
            let t = 0.2 * k as f64 / 37.0;
            assert!(close(p.field_at(t + 0.1), p.field_at(t) * -1.0, 1e-12));
        }
        let skewed = FieldProgram::axial(1.0, 5.0, vec3(0.0, 0.0, 0.7));
        assert!(skewed.validate().is_err());
    }

    #[test]
    fn frame_rotates_the_program_rigidly() {
        let frame = Mat3::rotation(vec3(1.0, 2.0, -0.5).normalized(), 0.9);
        let base = FieldProgram::rotating(3.0e-2, 5.0, 1.0);
        let turned = base.with_frame(frame);
        turned.validate().unwrap();
        for k in 0..23 {
            let t = 0.2 * k as f64 / 23.0;
            assert!(close(turned.field_at(t), frame.mul_vec(base.field_at(t)), 1e-16));
        }
    }

    #[test]
    fn rejects_bad_programs() {
        assert!(FieldProgram::rotating(1.0, 5.0, 0.5).validate().is_err());
        assert!(FieldProgram::rotating(-1.0, 5.0, 1.0).validate().is_err());
        assert!(FieldProgram::rotating(1.0, 0.0, 1.0).validate().is_err());
        assert!(FieldProgram::oscillating(1.0, 5.0, vec3(0.0, 0.0, 2.0), 30.0)
            .validate()
            .is_err());
        assert!(FieldProgram::oscillating(1.0, 5.0, Vec3::EX, 0.0).validate().is_err());
        let skewed = FieldProgram::rotating(1.0, 5.0, 1.0)
            .with_frame(Mat3 { m: [[1.0, 0.3, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]] });
        assert!(skewed.validate().is_err());
    }

    fn strip_mesh() -> crate::geometry::SwimmerMesh {
        build_swimmer(&SwimmerDesign {
            kind: DesignKind::CarangiformLike,
            length: 5.0e-3,
            width: 4.0e-3,
            thickness: 0.2e-3,
            magnetic_fraction: 1.0,
            mesh_resolution: 1.0e-3,
        })
        .unwrap()
    }

    /// Deterministic smooth deformation reused across tests.
    fn wrinkle(nodes: &[Vec3]) -> alloc::vec::Vec<Vec3> {
        nodes
            .iter()
            .map(|p| {
                vec3(
                    p.x + 2.0e-4 * sin(600.0 * p.y),
                    p.y - 1.5e-4 * cos(800.0 * p.x),
                    p.z + 3.0e-4 * sin(500.0 * (p.x + p.y)),
                )
            })
            .collect()
    }

    #[test]
    fn single_triangle_couple_and_minimal_norm_forces() {
        // Equilateral triangle in the x-y plane, side 1 mm, m along +x,
        // B along +y: couple must be M*B*A*h along +z.
        let s = 1.0e-3;
        let nodes = vec![
            vec3(0.0, 0.0, 0.0),
            vec3(s, 0.0, 0.0),
            vec3(0.5 * s, 0.5 * s * sqrt(3.0), 0.0),
        ];
        let mesh = crate::geometry::SwimmerMesh {
            nodes: nodes.clone(),
            reference_nodes: nodes.clone(),
            triangles: vec![[0, 1, 2]],
            magnetization_dir: vec![Vec3::EX],
            active: vec![true],
            thickness: 1.0e-4,
            grid: None,
        };
        let (m, b) = (1.0e4, vec3(0.0, 2.0e-2, 0.0));
        let load = magnetic_load(&mesh, &nodes, b, m).unwrap();
        let area = 0.25 * sqrt(3.0) * s * s;
        let expect = vec3(0.0, 0.0, m * 2.0e-2 * area * 1.0e-4);
        assert!(close(load.couples[0], expect, 1e-12 * expect.norm()));

        // Net force exactly zero, moment about the centroid reproduces the
        // couple to round-off.
        let total: Vec3 = load.forces.iter().fold(Vec3::ZERO, |acc, f| acc + *f);
        assert_eq!(total, Vec3::ZERO);
        let centroid = (nodes[0] + nodes[1] + nodes[2]) / 3.0;
        let moment: Vec3 = nodes
            .iter()
            .zip(&load.forces)
            .map(|(p, f)| (*p - centroid).cross(*f))
            .fold(Vec3::ZERO, |acc, v| acc + v);
        assert!(close(moment, expect, 1e-12 * expect.norm()));

        // Parallel field: no couple, no force.
        let quiet = magnetic_load(&mesh, &nodes, vec3(5.0e-2, 0.0, 0.0), m).unwrap();
        assert_eq!(quiet.couples[0], Vec3::ZERO);
        assert!(quiet.forces.iter().all(|f| *f == Vec3::ZERO));
    }

    #[test]
    fn couple_magnitude_follows_the_cross_product_law() {
        let mesh = strip_mesh();
        let model = MagneticModel::new(&mesh, 1.0e4).unwrap();
        let nodes = wrinkle(&mesh.reference_nodes);
        let b = vec3(1.3e-2, -0.4e-2, 0.8e-2);
        let load = model.load(&nodes, b).unwrap();
        for (e, tri) in mesh.triangles.iter().enumerate() {
            if !mesh.active[e] {
                assert_eq!(load.couples[e], Vec3::ZERO);
                continue;
            }
            let m_cur = model.convected_direction(&nodes, e).unwrap();
            // Convection preserves the unit magnitude of the direction.
            assert!(fabs(m_cur.norm() - 1.0) < 1e-12);
            let [i, j, k] = tri.map(|v| v as usize);
            let (p0, p1, p2) = (
                mesh.reference_nodes[i],
                mesh.reference_nodes[j],
                mesh.reference_nodes[k],
            );
            let volume = 0.5 * (p1 - p0).cross(p2 - p0).norm() * mesh.thickness;
            let sin_angle = m_cur.cross(b).norm() / b.norm();
            let expect = 1.0e4 * b.norm() * volume * sin_angle;
            assert!(fabs(load.couples[e].norm() - expect) < 1e-12 * expect.max(1e-30));
        }
    }

    #[test]
    fn net_magnetic_force_vanishes_on_the_whole_mesh() {
        let mesh = strip_mesh();
        let model = MagneticModel::new(&mesh, 1.0e4).unwrap();
        let nodes = wrinkle(&mesh.reference_nodes);
        let load = model.load(&nodes, vec3(0.0, 1.7e-2, 0.6e-2)).unwrap();
        let total: Vec3 = load.forces.iter().fold(Vec3::ZERO, |acc, f| acc + *f);
        let scale = load.forces.iter().map(|f| f.norm()).fold(0.0, f64::max);
        assert!(scale > 0.0);
        assert!(total.norm() < 1e-12 * scale * mesh.n_nodes() as f64);
    }

    #[test]
    fn loads_are_equivariant_under_rigid_rotation() {
        let mesh = strip_mesh();
        let model = MagneticModel::new(&mesh, 1.0e4).unwrap();
        let nodes = wrinkle(&mesh.reference_nodes);
        let b = vec3(0.9e-2, 0.2e-2, -1.1e-2);
        let base = model.load(&nodes, b).unwrap();

        let r = Mat3::rotation(vec3(0.3, -1.0, 0.7).normalized(), 1.234);
        let mut turned_mesh = mesh;
        rotate_rigid(&mut turned_mesh, &r, Vec3::ZERO);
        let turned_model = MagneticModel::new(&turned_mesh, 1.0e4).unwrap();
        let turned_nodes: alloc::vec::Vec<Vec3> =
            nodes.iter().map(|p| r.mul_vec(*p)).collect();
        let turned = turned_model.load(&turned_nodes, r.mul_vec(b)).unwrap();

        let scale = base.forces.iter().map(|f| f.norm()).fold(0.0, f64::max);
        for (f0, f1) in base.forces.iter().zip(&turned.forces) {
            assert!(close(r.mul_vec(*f0), *f1, 1e-9 * scale));
        }
    }

    #[test]
    fn zero_field_and_passive_elements_produce_nothing() {
        let mesh = build_swimmer(&SwimmerDesign {
            kind: DesignKind::CarangiformLike,
            length: 5.0e-3,
            width: 4.0e-3,
            thickness: 0.2e-3,
            magnetic_fraction: 0.5,
            mesh_resolution: 1.0e-3,
        })
        .unwrap();
        let model = MagneticModel::new(&mesh, 1.0e4).unwrap();
        assert!(model.n_active() < mesh.n_elements());
        let quiet = model.load(&mesh.nodes, Vec3::ZERO).unwrap();
        assert!(quiet.forces.iter().all(|f| *f == Vec3::ZERO));
        assert!(quiet.couples.iter().all(|c| *c == Vec3::ZERO));

        let load = model.load(&mesh.nodes, vec3(0.0, 0.0, 2.0e-2)).unwrap();
        for (e, c) in load.couples.iter().enumerate() {
            assert_eq!(mesh.active[e], *c != Vec3::ZERO);
        }
    }

    #[test]
    fn nondim_conversions_round_trip_and_match_hand_arithmetic() {
        let anchors = NondimAnchors {
            youngs_modulus: 1.0e5,
            thickness: 1.0e-4,
            characteristic_length: 5.0e-3,
            magnetic_length: 5.0e-3,
            magnetization: 1.0e4,
            frequency: 5.0,
        };
        // B = Mn E h^2 / (12 M L_bar L0) = 191 * 1e5 * 1e-8 / 3.0.
        let b = anchors.field_amplitude_for(191.0).unwrap();
        assert!(fabs(b - 191.0e-3 / 3.0) < 1e-15);
        assert!(fabs(anchors.magneto_elastic_number(b) - 191.0) < 1e-12 * 191.0);

        let mu = anchors.viscosity_for(5.0).unwrap();
        assert!(fabs(anchors.fluid_number(mu) - 5.0) < 1e-12 * 5.0);

        assert_eq!(anchors.field_amplitude_for(0.0).unwrap(), 0.0);
        let undefined = NondimAnchors { magnetic_length: 0.0, ..anchors };
        assert!(undefined.field_amplitude_for(10.0).is_err());
        assert!(undefined.field_amplitude_for(0.0).is_ok());

        for k in 1..20 {
            let mn = 25.0 * k as f64;
            let fnn = 1.0 + 1.5 * k as f64;
            let b = anchors.field_amplitude_for(mn).unwrap();
            let mu = anchors.viscosity_for(fnn).unwrap();
            assert!(fabs(anchors.magneto_elastic_number(b) - mn) < 1e-12 * mn);
            assert!(fabs(anchors.fluid_number(mu) - fnn) < 1e-12 * fnn);
        }
    }
}
