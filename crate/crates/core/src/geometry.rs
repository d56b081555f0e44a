//! Swimmer planforms and their triangulations.
//!
//! All five designs start as flat sheets in the x-y plane with the propulsion
//! axis along +x, the width along y, and the sheet normal along +z.  A design
//! fixes the planform (length `L`, width `W`, for the finger-shaped kind a
//! three-flap outline) and the remnant-magnetization pattern; the mesh
//! generator lays a structured quad grid over the planform and splits each
//! quad into two triangles with alternating diagonals so the triangulation
//! keeps the planform's mirror symmetries.
//!
//! Magnetization is stored per element as a *unit* direction in the reference
//! configuration (zero for passive elements); the magnitude `M` is a material
//! property supplied by the magnetics layer.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write as _;

use crate::math::{deg_to_rad, fabs, sqrt, Mat3, Vec3};
use crate::{Error, Result};

/// The five swimmer families.  Helical kinds are driven by a field rotating
/// about the propulsion axis; undulatory kinds by an oscillating field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DesignKind {
    /// Three-flap sheet, everything except the central flap magnetized.
    FingerShaped,
    /// Slender sheet with antiparallel end strips (frozen chirality).
    FieldInduced,
    /// Slender sheet with a single magnetized end strip.
    DragInduced,
    /// Square sheet with a magnetized leading fraction.
    CarangiformLike,
    /// Slender sheet, fully magnetized by default, driven by a vertical
    /// field sweep.
    AnguilliformLike,
}

impl DesignKind {
    pub const ALL: [DesignKind; 5] = [
        DesignKind::FingerShaped,
        DesignKind::FieldInduced,
        DesignKind::DragInduced,
        DesignKind::CarangiformLike,
        DesignKind::AnguilliformLike,
    ];

    /// Study default length-to-width ratio for this kind.
    pub fn default_aspect_ratio(self) -> f64 {
        match self {
            DesignKind::FingerShaped => 1.0,
            DesignKind::FieldInduced => 5.77,
            DesignKind::DragInduced => 5.77,
            DesignKind::CarangiformLike => 1.0,
            DesignKind::AnguilliformLike => 8.0,
        }
    }

    /// Study default magnetized length fraction for this kind.
    pub fn default_active_fraction(self) -> f64 {
        match self {
            DesignKind::FingerShaped => 1.0,
            DesignKind::FieldInduced => 0.33,
            DesignKind::DragInduced => 0.33,
            DesignKind::CarangiformLike => 0.55,
            DesignKind::AnguilliformLike => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DesignKind::FingerShaped => "finger",
            DesignKind::FieldInduced => "field",
            DesignKind::DragInduced => "drag",
            DesignKind::CarangiformLike => "carangiform",
            DesignKind::AnguilliformLike => "anguilliform",
        }
    }
}

/// Finger-shaped planform split: flaps take the trailing 0.6 L, the common
/// base the leading 0.4 L.  The actual boundary snaps to the nearest grid
/// line.
pub const FINGER_FLAP_FRACTION: f64 = 0.6;

/// Geometric description of one swimmer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwimmerDesign {
    pub kind: DesignKind,
    /// Planform length along the propulsion axis [m].
    pub length: f64,
    /// Planform width [m].
    pub width: f64,
    /// Sheet thickness [m].
    pub thickness: f64,
    /// Magnetized length fraction L0/L, measured from the leading (+x) end.
    pub magnetic_fraction: f64,
    /// Target mesh edge length [m].
    pub mesh_resolution: f64,
}

impl SwimmerDesign {
    /// Design with the study's default aspect ratio and active fraction for
    /// `kind`, sized so that sqrt(L W) equals `characteristic_length`.  The
    /// mesh edge target scales with the characteristic length.
    pub fn reference(kind: DesignKind, characteristic_length: f64, thickness: f64) -> SwimmerDesign {
        let a = kind.default_aspect_ratio();
        let length = characteristic_length * sqrt(a);
        SwimmerDesign {
            kind,
            length,
            width: characteristic_length / sqrt(a),
            thickness,
            magnetic_fraction: kind.default_active_fraction(),
            mesh_resolution: 0.046 * characteristic_length,
        }
    }

    /// Geometric mean of the planform dimensions, the length scale used for
    /// all non-dimensional groups.
    pub fn characteristic_length(&self) -> f64 {
        sqrt(self.length * self.width)
    }

    pub fn validate(&self) -> Result<()> {
        let fin = self.length.is_finite()
            && self.width.is_finite()
            && self.thickness.is_finite()
            && self.magnetic_fraction.is_finite()
            && self.mesh_resolution.is_finite();
        if !fin {
            return Err(Error::InvalidDesign(String::from("non-finite design parameter")));
        }
        if self.length <= 0.0 || self.width <= 0.0 {
            return Err(Error::InvalidDesign(String::from("planform dimensions must be positive")));
        }
        let short = self.length.min(self.width);
        if self.thickness <= 0.0 || self.thickness >= 0.2 * short {
            return Err(Error::InvalidDesign(format!(
                "thickness {} outside thin-sheet range (0, {})",
                self.thickness,
                0.2 * short
            )));
        }
        if !(self.magnetic_fraction > 0.0 && self.magnetic_fraction <= 1.0) {
            return Err(Error::InvalidDesign(format!(
                "magnetic fraction {} outside (0, 1]",
                self.magnetic_fraction
            )));
        }
        if self.mesh_resolution <= 0.0 || self.mesh_resolution > short {
            return Err(Error::InvalidDesign(format!(
                "mesh resolution {} unusable for a {} x {} planform",
                self.mesh_resolution, self.length, self.width
            )));
        }
        Ok(())
    }
}

/// Structured-grid metadata kept alongside the triangle soup.  `ids` maps a
/// grid node (i, j) to its mesh node.
#[derive(Debug, Clone)]
pub struct GridInfo {
    /// Quad counts along x and y.
    pub nx: usize,
    pub ny: usize,
    /// Node ids in row-major order, (ny + 1) rows of (nx + 1).
    pub ids: Vec<u32>,
    /// Node column where finger flaps attach to the base (slit tips), if any.
    pub flap_split: Option<usize>,
}

impl GridInfo {
    pub fn node_id(&self, i: usize, j: usize) -> u32 {
        self.ids[j * (self.nx + 1) + i]
    }
}

/// Triangulated swimmer with its magnetization pattern.  `nodes` is the
/// current configuration and equals `reference_nodes` right after
/// construction; dynamics advances `nodes` only.
#[derive(Debug, Clone)]
pub struct SwimmerMesh {
    pub nodes: Vec<Vec3>,
    pub reference_nodes: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
    /// Per-element unit magnetization direction in the reference frame;
    /// zero vector for passive elements.
    pub magnetization_dir: Vec<Vec3>,
    pub active: Vec<bool>,
    pub thickness: f64,
    pub grid: Option<GridInfo>,
}

impl SwimmerMesh {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_elements(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_nodes(&self, e: usize, nodes: &[Vec3]) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[e];
        [nodes[a as usize], nodes[b as usize], nodes[c as usize]]
    }

    pub fn reference_area(&self, e: usize) -> f64 {
        let [a, b, c] = self.triangle_nodes(e, &self.reference_nodes);
        triangle_area(a, b, c)
    }

    pub fn current_area(&self, e: usize) -> f64 {
        let [a, b, c] = self.triangle_nodes(e, &self.nodes);
        triangle_area(a, b, c)
    }

    pub fn total_reference_area(&self) -> f64 {
        (0..self.n_elements()).map(|e| self.reference_area(e)).sum()
    }

    /// Area-weighted centroid of an arbitrary node configuration, using
    /// reference areas as the (uniform-density) mass weights.
    pub fn area_weighted_com(&self, nodes: &[Vec3]) -> Vec3 {
        let mut num = Vec3::ZERO;
        let mut den = 0.0;
        for e in 0..self.n_elements() {
            let [a, b, c] = self.triangle_nodes(e, nodes);
            let w = self.reference_area(e);
            num += (a + b + c) * (w / 3.0);
            den += w;
        }
        num / den
    }

    pub fn com(&self) -> Vec3 {
        self.area_weighted_com(&self.nodes)
    }

    /// Mean reference edge length; the collocation-spacing proxy used for
    /// regularization defaults.
    pub fn mean_edge_length(&self) -> f64 {
        let mut seen = BTreeMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                let (a, b) = ordered(tri[k], tri[(k + 1) % 3]);
                seen.entry((a, b)).or_insert(());
            }
        }
        let mut sum = 0.0;
        for (a, b) in seen.keys() {
            sum += self.reference_nodes[*a as usize].distance(self.reference_nodes[*b as usize]);
        }
        sum / seen.len() as f64
    }

    /// Magnetized area over total area.
    pub fn active_area_fraction(&self) -> f64 {
        let mut act = 0.0;
        let mut tot = 0.0;
        for e in 0..self.n_elements() {
            let a = self.reference_area(e);
            tot += a;
            if self.active[e] {
                act += a;
            }
        }
        act / tot
    }

    /// Structural sanity: index bounds, non-degenerate elements, manifold
    /// edges (at most two incident triangles), and a single connected
    /// component.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_nodes();
        if n < 3 || self.triangles.is_empty() {
            return Err(Error::DegenerateMesh(String::from("empty mesh")));
        }
        if self.reference_nodes.len() != n
            || self.magnetization_dir.len() != self.n_elements()
            || self.active.len() != self.n_elements()
        {
            return Err(Error::DegenerateMesh(String::from("inconsistent array lengths")));
        }
        let mean_area = self.total_reference_area() / self.n_elements() as f64;
        for (e, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&i| i as usize >= n) {
                return Err(Error::DegenerateMesh(format!("triangle {e} indexes out of range")));
            }
            if self.reference_area(e) < 1e-9 * mean_area {
                return Err(Error::DegenerateMesh(format!("triangle {e} has near-zero area")));
            }
        }
        let mut edge_count: BTreeMap<(u32, u32), u8> = BTreeMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                let key = ordered(tri[k], tri[(k + 1) % 3]);
                *edge_count.entry(key).or_insert(0) += 1;
            }
        }
        if edge_count.values().any(|&c| c > 2) {
            return Err(Error::DegenerateMesh(String::from("non-manifold edge")));
        }
        // Connectivity via union-find over triangle edges.
        let mut parent: Vec<u32> = (0..n as u32).collect();
        fn find(parent: &mut [u32], mut a: u32) -> u32 {
            while parent[a as usize] != a {
                parent[a as usize] = parent[parent[a as usize] as usize];
                a = parent[a as usize];
            }
            a
        }
        for tri in &self.triangles {
            for k in 1..3 {
                let (ra, rb) = (find(&mut parent, tri[0]), find(&mut parent, tri[k]));
                if ra != rb {
                    parent[ra as usize] = rb;
                }
            }
        }
        let root = find(&mut parent, 0);
        for i in 0..n as u32 {
            if find(&mut parent, i) != root {
                return Err(Error::DegenerateMesh(String::from("mesh is disconnected")));
            }
        }
        Ok(())
    }
}

fn ordered(a: u32, b: u32) -> (u32, u32) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

pub fn triangle_area(a: Vec3, b: Vec3, c: Vec3) -> f64 {
    0.5 * (b - a).cross(c - a).norm()
}

fn round_count(x: f64) -> usize {
    libm::round(x) as usize
}

/// Builds the triangulated swimmer for `design`.
///
/// The quad counts come from rounding `L/ds` and `W/ds` with a floor of four
/// quads (eight triangles) across each dimension, so the minimum transverse
/// resolution holds even for coarse targets.  For the finger-shaped kind the
/// three flaps are meshed as separate row bands separated by one-row kerf
/// gaps, so the cut faces of neighbouring flaps start a finite distance
/// apart.
pub fn build_swimmer(design: &SwimmerDesign) -> Result<SwimmerMesh> {
    design.validate()?;
    let ds = design.mesh_resolution;
    let nx = round_count(design.length / ds).max(4);
    let mesh = match design.kind {
        DesignKind::FingerShaped => build_finger(design, nx),
        _ => {
            let ny = round_count(design.width / ds).max(4);
            build_rect(design, nx, ny)
        }
    };
    mesh.validate()?;
    Ok(mesh)
}

fn grid_nodes(length: f64, width: f64, nx: usize, ny: usize) -> Vec<Vec3> {
    let (dx, dy) = (length / nx as f64, width / ny as f64);
    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            nodes.push(Vec3 {
                x: -0.5 * length + i as f64 * dx,
                y: -0.5 * width + j as f64 * dy,
                z: 0.0,
            });
        }
    }
    nodes
}

/// Splits quad (i, j) into two CCW triangles (normals along +z), alternating
/// the diagonal in a checkerboard so the mesh keeps the sheet's mirror
/// symmetries.
fn quad_triangles(a: u32, b: u32, c: u32, d: u32, i: usize, j: usize) -> [[u32; 3]; 2] {
    // a = (i, j), b = (i+1, j), c = (i+1, j+1), d = (i, j+1)
    if (i + j) % 2 == 0 {
        [[a, b, c], [a, c, d]]
    } else {
        [[a, b, d], [b, c, d]]
    }
}

fn build_rect(design: &SwimmerDesign, nx: usize, ny: usize) -> SwimmerMesh {
    let nodes = grid_nodes(design.length, design.width, nx, ny);
    let ids: Vec<u32> = (0..nodes.len() as u32).collect();
    let at = |i: usize, j: usize| (j * (nx + 1) + i) as u32;
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let quad = quad_triangles(at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1), i, j);
            triangles.extend_from_slice(&quad);
        }
    }
    let mut mesh = SwimmerMesh {
        reference_nodes: nodes.clone(),
        nodes,
        triangles,
        magnetization_dir: Vec::new(),
        active: Vec::new(),
        thickness: design.thickness,
        grid: Some(GridInfo { nx, ny, ids, flap_split: None }),
    };
    assign_strip_magnetization(&mut mesh, design);
    mesh
}

/// Leading-strip patterns for the rectangular kinds.  The strip boundary is
/// evaluated per element centroid, so it snaps to the nearest grid column.
fn assign_strip_magnetization(mesh: &mut SwimmerMesh, design: &SwimmerDesign) {
    let l = design.length;
    let l0 = design.magnetic_fraction * l;
    let head = 0.5 * l; // leading edge
    let mut dirs = Vec::with_capacity(mesh.n_elements());
    let mut active = Vec::with_capacity(mesh.n_elements());
    for e in 0..mesh.n_elements() {
        let [a, b, c] = mesh.triangle_nodes(e, &mesh.reference_nodes);
        let xc = (a.x + b.x + c.x) / 3.0;
        let dir = match design.kind {
            DesignKind::FieldInduced => {
                // Antiparallel end strips, each half the magnetic length,
                // pointing outward from the center.
                if xc >= head - 0.5 * l0 {
                    Some(Vec3::EX)
                } else if xc <= -head + 0.5 * l0 {
                    Some(-Vec3::EX)
                } else {
                    None
                }
            }
            _ => {
                if xc >= head - l0 {
                    Some(Vec3::EX)
                } else {
                    None
                }
            }
        };
        active.push(dir.is_some());
        dirs.push(dir.unwrap_or(Vec3::ZERO));
    }
    mesh.magnetization_dir = dirs;
    mesh.active = active;
}

/// Kerf width of the finger slits as a fraction of the planform width.  The
/// absolute floor keeps the cut faces at twice the contact threshold even
/// when a sweep squeezes the planform, so grazing between flaps sliding past
/// each other never trips the detector while genuine face-on contact still
/// does.
const FINGER_SLIT_KERF_FRACTION: f64 = 0.04;

fn build_finger(design: &SwimmerDesign, nx: usize) -> SwimmerMesh {
    let (l, w) = (design.length, design.width);
    let ds = design.mesh_resolution;
    let dx = l / nx as f64;
    // Flaps occupy the trailing FINGER_FLAP_FRACTION of the length; the slit
    // tips snap to the nearest node column.
    let i_split = round_count(FINGER_FLAP_FRACTION * nx as f64).clamp(1, nx - 1);
    let gap = (FINGER_SLIT_KERF_FRACTION * w).max(2.0 * design.thickness);
    let flap_w = (w - 2.0 * gap) / 3.0;
    let m = round_count(flap_w / ds).max(2);
    let dy = flap_w / m as f64;

    // Node-row heights: three m-row flap bands separated by single kerf
    // rows.  Quads in a kerf row are only generated over the base, which
    // leaves the slits open where the flaps are free.
    let mut row_y = Vec::with_capacity(3 * m + 3);
    let mut y = -0.5 * w;
    row_y.push(y);
    for band in 0..3 {
        for _ in 0..m {
            y += dy;
            row_y.push(y);
        }
        if band < 2 {
            y += gap;
            row_y.push(y);
        }
    }
    let ny = row_y.len() - 1;
    let kerf_rows = [m, 2 * m + 1];

    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    for &yr in &row_y {
        for i in 0..=nx {
            nodes.push(Vec3 { x: -0.5 * l + i as f64 * dx, y: yr, z: 0.0 });
        }
    }
    let at = |i: usize, j: usize| (j * (nx + 1) + i) as u32;
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        let kerf = kerf_rows.contains(&j);
        for i in 0..nx {
            if kerf && i < i_split {
                continue;
            }
            let quad = quad_triangles(at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1), i, j);
            triangles.extend_from_slice(&quad);
        }
    }

    let ids: Vec<u32> = (0..((nx + 1) * (ny + 1)) as u32).collect();
    let mut mesh = SwimmerMesh {
        reference_nodes: nodes.clone(),
        nodes,
        triangles,
        magnetization_dir: Vec::new(),
        active: Vec::new(),
        thickness: design.thickness,
        grid: Some(GridInfo { nx, ny, ids, flap_split: Some(i_split) }),
    };

    // Everything except the central flap is magnetizable; the active strip
    // then extends a length L0 back from the leading (+x) edge.
    let x_split = -0.5 * l + i_split as f64 * dx;
    let x_active = 0.5 * l - design.magnetic_fraction * l;
    let band = 0.5 * flap_w + 0.5 * gap;
    let mut dirs = Vec::with_capacity(mesh.n_elements());
    let mut active = Vec::with_capacity(mesh.n_elements());
    for e in 0..mesh.n_elements() {
        let [a, b, c] = mesh.triangle_nodes(e, &mesh.reference_nodes);
        let xc = (a.x + b.x + c.x) / 3.0;
        let yc = (a.y + b.y + c.y) / 3.0;
        let central_flap = xc < x_split && fabs(yc) < band;
        let on = !central_flap && xc >= x_active;
        active.push(on);
        dirs.push(if on { Vec3::EX } else { Vec3::ZERO });
    }
    mesh.magnetization_dir = dirs;
    mesh.active = active;
    // The open slits sit toward the trailing end, so the as-built area
    // centroid is off origin; recenter since displacement is measured from
    // the centroid.
    let c = mesh.com();
    for p in mesh.nodes.iter_mut() {
        *p -= c;
    }
    for p in mesh.reference_nodes.iter_mut() {
        *p -= c;
    }
    mesh
}

/// Initial rigid misalignment, applied about the mesh centroid in the fixed
/// order roll (x), then pitch (y), then yaw (z), all extrinsic.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TiltSpec {
    pub roll_deg: f64,
    pub pitch_deg: f64,
    pub yaw_deg: f64,
}

impl TiltSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("roll", self.roll_deg),
            ("pitch", self.pitch_deg),
            ("yaw", self.yaw_deg),
        ] {
            if !(-180.0..=180.0).contains(&v) {
                return Err(Error::InvalidParameter(format!(
                    "tilt {name} = {v} deg outside [-180, 180]"
                )));
            }
        }
        Ok(())
    }

    pub fn rotation(&self) -> Mat3 {
        let rx = Mat3::rotation_x(deg_to_rad(self.roll_deg));
        let ry = Mat3::rotation_y(deg_to_rad(self.pitch_deg));
        let rz = Mat3::rotation_z(deg_to_rad(self.yaw_deg));
        rz.mul_mat(&ry.mul_mat(&rx))
    }
}

/// Rigidly rotates current nodes, reference nodes, and magnetization
/// directions about `center`.
pub fn rotate_rigid(mesh: &mut SwimmerMesh, r: &Mat3, center: Vec3) {
    for p in mesh.nodes.iter_mut() {
        *p = center + r.mul_vec(*p - center);
    }
    for p in mesh.reference_nodes.iter_mut() {
        *p = center + r.mul_vec(*p - center);
    }
    for d in mesh.magnetization_dir.iter_mut() {
        *d = r.mul_vec(*d);
    }
}

pub fn apply_tilt(mesh: &mut SwimmerMesh, tilt: &TiltSpec) -> Result<()> {
    tilt.validate()?;
    let center = mesh.com();
    rotate_rigid(mesh, &tilt.rotation(), center);
    Ok(())
}

/// Collocation shell for the rigid-sphere drag oracle.
#[derive(Debug, Clone)]
pub struct SphereShell {
    pub points: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
}

impl SphereShell {
    pub fn surface_area(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                triangle_area(
                    self.points[t[0] as usize],
                    self.points[t[1] as usize],
                    self.points[t[2] as usize],
                )
            })
            .sum()
    }

    pub fn mean_edge_length(&self) -> f64 {
        let mut seen = BTreeMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                seen.entry(ordered(tri[k], tri[(k + 1) % 3])).or_insert(());
            }
        }
        let sum: f64 = seen
            .keys()
            .map(|(a, b)| self.points[*a as usize].distance(self.points[*b as usize]))
            .sum();
        sum / seen.len() as f64
    }
}

/// Icosphere with the smallest subdivision level holding at least `n_points`
/// vertices; level k gives 10 * 4^k + 2 of them.
pub fn build_sphere_shell(radius: f64, n_points: usize) -> Result<SphereShell> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::InvalidParameter(String::from("sphere radius must be positive")));
    }
    let mut level = 0usize;
    while 10 * 4usize.pow(level as u32) + 2 < n_points {
        level += 1;
        if level > 6 {
            return Err(Error::TooManyPoints { points: n_points, cap: 10 * 4usize.pow(6) + 2 });
        }
    }

    let phi = (1.0 + sqrt(5.0)) / 2.0;
    let raw = [
        (-1.0, phi, 0.0),
        (1.0, phi, 0.0),
        (-1.0, -phi, 0.0),
        (1.0, -phi, 0.0),
        (0.0, -1.0, phi),
        (0.0, 1.0, phi),
        (0.0, -1.0, -phi),
        (0.0, 1.0, -phi),
        (phi, 0.0, -1.0),
        (phi, 0.0, 1.0),
        (-phi, 0.0, -1.0),
        (-phi, 0.0, 1.0),
    ];
    let mut points: Vec<Vec3> = raw
        .iter()
        .map(|&(x, y, z)| Vec3 { x, y, z }.normalized() * radius)
        .collect();
    let mut triangles: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];

    for _ in 0..level {
        let mut midpoint: BTreeMap<(u32, u32), u32> = BTreeMap::new();
        let mut next = Vec::with_capacity(triangles.len() * 4);
        for tri in &triangles {
            let mut mid = [0u32; 3];
            for k in 0..3 {
                let key = ordered(tri[k], tri[(k + 1) % 3]);
                mid[k] = *midpoint.entry(key).or_insert_with(|| {
                    let p = (points[key.0 as usize] + points[key.1 as usize]) * 0.5;
                    points.push(p.normalized() * radius);
                    (points.len() - 1) as u32
                });
            }
            next.push([tri[0], mid[0], mid[2]]);
            next.push([tri[1], mid[1], mid[0]]);
            next.push([tri[2], mid[2], mid[1]]);
            next.push([mid[0], mid[1], mid[2]]);
        }
        triangles = next;
    }
    Ok(SphereShell { points, triangles })
}

/// Indexed-triangle text format: one `V F` count line, `V` vertex lines
/// `v x y z`, then `F` face lines `f i j k` with zero-based indices.
pub fn export_mesh_ascii(mesh: &SwimmerMesh) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} {}", mesh.n_nodes(), mesh.n_elements());
    for p in &mesh.nodes {
        let _ = writeln!(out, "v {} {} {}", p.x, p.y, p.z);
    }
    for t in &mesh.triangles {
        let _ = writeln!(out, "f {} {} {}", t[0], t[1], t[2]);
    }
    out
}

/// Per-element magnetization sidecar: unit direction components and the
/// active flag.
pub fn export_magnetization_csv(mesh: &SwimmerMesh) -> String {
    let mut out = String::from("element_index,mx,my,mz,active\n");
    for e in 0..mesh.n_elements() {
        let d = mesh.magnetization_dir[e];
        let _ = writeln!(out, "{},{},{},{},{}", e, d.x, d.y, d.z, u8::from(mesh.active[e]));
    }
    out
}
