//! Inertialess time integration of a field-driven swimmer.
//!
//! Each macro step of length `dt` freezes the dense mobility operator at its
//! start and advances the nodes through `2^k` equal substeps,
//!
//! `(I + dt' c K) dx = dt' M f(x, t)`,
//!
//! with `M` the mobility, `f` the elastic plus magnetic nodal forces, `K`
//! the edge-spring stiffness along the current edge directions, and
//! `c = beta / (4 pi mu eps)` an amplified per-blob drag.  `K` annihilates
//! rigid motions and transverse bending, so swimming dynamics feel only the
//! explicit `M f` term; the implicit term keeps membrane stretching, whose
//! relaxation is orders of magnitude faster than the drive period at every
//! wavelength, from limiting the step.  `beta = L eps / a` with `a` the
//! reference area per node puts every stretching wavelength the sheet
//! supports under the stability threshold.  The system is solved exactly by
//! banded Cholesky after reverse Cuthill-McKee ordering, so runs are bitwise
//! deterministic.
//!
//! Substeps halve, up to ten times, whenever a node would move further than
//! a tenth of the mesh spacing in one substep; a macro step that still
//! violates the bound ends the run in [`Regime::NotConverged`].  Runs
//! otherwise integrate cycle by cycle until the per-cycle displacement
//! settles or a failure mode (self-contact, coiling) appears; failed physics
//! is reported through the regime, never as an `Err`.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::elastica::{ElasticModel, MaterialParams};
use crate::geometry::{apply_tilt, build_swimmer, GridInfo, SwimmerDesign, SwimmerMesh, TiltSpec};
use crate::hydrodynamics::{flow_at_probes, FluidParams, MobilityOperator};
use crate::magnetics::{FieldProgram, MagneticModel};
use crate::math::{atan2, fabs, sqrt, vec3, Vec3};
use crate::{Error, Result};

/// Largest fraction of the mesh spacing a node may move per substep.
const DISPLACEMENT_GUARD: f64 = 0.1;
/// Substep halvings beyond which a run is declared non-converged.
const MAX_HALVINGS: u32 = 10;
/// Relative difference between consecutive per-cycle displacement vectors
/// that counts as steady.
const STEADY_REL: f64 = 0.01;
/// Per-cycle displacements below this fraction of the characteristic length
/// are treated as zero when testing steadiness.
const STEADY_FLOOR: f64 = 1e-9;
/// Steady body lengths per cycle below this magnitude classify as floppy.
const FLOPPY_BLPC: f64 = 0.005;
/// Completed cycles required before the floppy label may be applied.
const FLOPPY_MIN_CYCLES: usize = 5;
/// Accumulated centerline twist that classifies as coiling [rad].
const COILING_TWIST: f64 = 2.0 * PI;
/// Probe points per axis of the flow-rate sampling box.
const PROBE_SIDE: usize = 16;
/// Edge hops inside which vertex-triangle pairs never count as contact.
const CONTACT_HOPS: usize = 3;

/// Complete description of one swimmer run.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub design: SwimmerDesign,
    pub material: MaterialParams,
    /// Remanent magnetization magnitude of active elements [A/m].
    pub magnetization: f64,
    /// Dynamic viscosity of the bath [Pa s].
    pub viscosity: f64,
    /// Blob radius override [m]; 0.75 x mean mesh spacing when unset.
    pub regularization: Option<f64>,
    pub field: FieldProgram,
    /// Macro time step [s]; must divide the drive period into at least 500
    /// equal steps.
    pub dt: f64,
    pub n_cycles_max: usize,
    /// Cycles to complete before a steady run may stop early; lets batteries
    /// record a fixed number of per-cycle diagnostics.
    pub min_cycles: usize,
    /// Initial rigid misalignment, applied about the mesh centroid.
    pub tilt: TiltSpec,
    /// Flow-rate samples per drive cycle; 0 disables flow sampling.
    pub flow_samples_per_cycle: usize,
    /// Node snapshots per drive cycle; 0 disables snapshots.
    pub snapshots_per_cycle: usize,
    /// Macro steps between self-contact sweeps.
    pub contact_check_interval: usize,
    /// Side of the flow probe box in characteristic lengths.
    pub probe_box_factor: f64,
    /// Probe points per axis of the flow sampling grid.
    pub probe_grid: usize,
}

impl SimConfig {
    /// Run description with the default step (1/2000 of the period), cycle
    /// budget (50) and diagnostics cadence.
    pub fn new(
        design: SwimmerDesign,
        material: MaterialParams,
        field: FieldProgram,
        magnetization: f64,
        viscosity: f64,
    ) -> SimConfig {
        let dt = field.period() / 2000.0;
        SimConfig {
            design,
            material,
            magnetization,
            viscosity,
            regularization: None,
            field,
            dt,
            n_cycles_max: 50,
            min_cycles: 0,
            tilt: TiltSpec::default(),
            flow_samples_per_cycle: 0,
            snapshots_per_cycle: 0,
            contact_check_interval: 8,
            probe_box_factor: 2.0,
            probe_grid: PROBE_SIDE,
        }
    }

    /// Macro steps per drive period.  `dt` must divide the period to one
    /// part in a million so cycle boundaries fall on step boundaries.
    pub fn steps_per_cycle(&self) -> Result<usize> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidParameter(String::from("time step must be positive")));
        }
        let ratio = self.field.period() / self.dt;
        let steps = (ratio + 0.5) as usize;
        if steps < 500 {
            return Err(Error::InvalidParameter(format!(
                "time step {} gives {} steps per cycle; at least 500 required",
                self.dt, steps
            )));
        }
        if fabs(ratio - steps as f64) > 1e-6 * steps as f64 {
            return Err(Error::InvalidParameter(String::from(
                "time step must divide the drive period",
            )));
        }
        Ok(steps)
    }

    pub fn validate(&self) -> Result<()> {
        self.design.validate()?;
        self.material.validate()?;
        self.field.validate()?;
        self.tilt.validate()?;
        if !(self.magnetization.is_finite() && self.magnetization >= 0.0) {
            return Err(Error::InvalidParameter(String::from(
                "magnetization must be finite and non-negative",
            )));
        }
        if !(self.viscosity.is_finite() && self.viscosity > 0.0) {
            return Err(Error::InvalidParameter(String::from("viscosity must be positive")));
        }
        if let Some(eps) = self.regularization {
            if !(eps.is_finite() && eps > 0.0) {
                return Err(Error::InvalidParameter(String::from(
                    "regularization must be positive",
                )));
            }
        }
        let spc = self.steps_per_cycle()?;
        if self.n_cycles_max < 2 {
            return Err(Error::InvalidParameter(String::from(
                "cycle budget must allow at least two cycles",
            )));
        }
        if self.min_cycles > self.n_cycles_max {
            return Err(Error::InvalidParameter(String::from(
                "minimum cycle count cannot exceed the cycle budget",
            )));
        }
        if self.contact_check_interval == 0 {
            return Err(Error::InvalidParameter(String::from(
                "contact check interval must be at least one step",
            )));
        }
        for (name, cadence) in [
            ("flow sample", self.flow_samples_per_cycle),
            ("snapshot", self.snapshots_per_cycle),
        ] {
            if cadence > 0 && spc % cadence != 0 {
                return Err(Error::InvalidParameter(format!(
                    "{name} cadence {cadence} must divide the {spc} steps per cycle"
                )));
            }
        }
        if !(self.probe_box_factor.is_finite() && self.probe_box_factor > 0.0) {
            return Err(Error::InvalidParameter(String::from(
                "probe box factor must be positive",
            )));
        }
        if self.probe_grid < 2 {
            return Err(Error::InvalidParameter(String::from(
                "probe grid needs at least two points per axis",
            )));
        }
        Ok(())
    }
}

/// Outcome class of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Reached a steady swimming state.
    Ok,
    /// Non-adjacent mesh parts approached within one sheet thickness.
    SelfContact,
    /// Accumulated centerline twist exceeded one full turn.
    Coiling,
    /// Steady but effectively immobile.
    Floppy,
    /// No steady state within the cycle budget, or the substep floor hit.
    NotConverged,
}

impl Regime {
    pub fn is_swimming(self) -> bool {
        self == Regime::Ok
    }

    pub fn name(self) -> &'static str {
        match self {
            Regime::Ok => "ok",
            Regime::SelfContact => "self_contact",
            Regime::Coiling => "coiling",
            Regime::Floppy => "floppy",
            Regime::NotConverged => "not_converged",
        }
    }
}

/// Summary of one completed drive cycle.
#[derive(Debug, Clone, Copy)]
pub struct CycleDiagnostics {
    pub cycle: usize,
    /// COM displacement over the cycle [m].
    pub com_displacement: Vec3,
    /// Displacement along +x in characteristic lengths, this cycle alone.
    pub blpc: f64,
    /// Mean absolute flow rates (x, y, z) in units of `L^3 / T`; zeros when
    /// flow sampling is off.
    pub flow: [f64; 3],
    /// Largest accumulated centerline twist seen during the cycle [rad].
    pub max_twist: f64,
    /// Smallest non-adjacent vertex-triangle separation seen [m]; infinite
    /// when nothing came within one mesh spacing.
    pub min_separation: f64,
}

impl CycleDiagnostics {
    pub fn total_flow(&self) -> f64 {
        self.flow[0] + self.flow[1] + self.flow[2]
    }
}

/// One instantaneous flow-rate sample.
#[derive(Debug, Clone, Copy)]
pub struct FlowSample {
    pub t: f64,
    /// Mean absolute flow rates (x, y, z) in units of `L^3 / T`.
    pub flow: [f64; 3],
}

impl FlowSample {
    pub fn total(&self) -> f64 {
        self.flow[0] + self.flow[1] + self.flow[2]
    }
}

/// Full record of one run.  `cycles` holds completed cycles only; a run cut
/// short by a failure keeps the cycles finished before the event.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub characteristic_length: f64,
    pub period: f64,
    /// COM after every macro step, starting with the initial state.
    pub com_track: Vec<(f64, Vec3)>,
    pub cycles: Vec<CycleDiagnostics>,
    pub flow_trace: Vec<FlowSample>,
    pub snapshots: Vec<(f64, Vec<Vec3>)>,
    pub regime: Regime,
    /// First cycle whose displacement matched the one before it.
    pub steady_cycle: Option<usize>,
    pub final_nodes: Vec<Vec3>,
}

impl Trajectory {
    /// Steady net displacement along +x in body lengths per cycle; `None`
    /// unless the run settled.
    pub fn steady_blpc(&self) -> Option<f64> {
        match self.regime {
            Regime::Ok | Regime::Floppy => self.cycles.last().map(|c| c.blpc),
            _ => None,
        }
    }

    /// Net COM displacement over the whole run [m].
    pub fn net_displacement(&self) -> Vec3 {
        match (self.com_track.first(), self.com_track.last()) {
            (Some((_, a)), Some((_, b))) => *b - *a,
            _ => Vec3::ZERO,
        }
    }
}

/// Steady body lengths per cycle of a finished run.
pub fn compute_blpc(traj: &Trajectory) -> Result<f64> {
    traj.steady_blpc().ok_or_else(|| {
        Error::NotConverged(format!(
            "run ended in regime {} without a steady speed",
            traj.regime.name()
        ))
    })
}

/// Symmetric positive definite band matrix with in-place Cholesky.  Stores
/// the lower band row-major; row `r` holds columns `r - bw ..= r`.
struct BandCholesky {
    n: usize,
    bw: usize,
    a: Vec<f64>,
}

impl BandCholesky {
    fn new(n: usize, bw: usize) -> BandCholesky {
        let bw = bw.min(n.saturating_sub(1));
        BandCholesky { n, bw, a: vec![0.0; n * (bw + 1)] }
    }

    #[inline]
    fn idx(&self, r: usize, c: usize) -> usize {
        r * (self.bw + 1) + c + self.bw - r
    }

    fn reset_identity(&mut self) {
        self.a.fill(0.0);
        for r in 0..self.n {
            let i = self.idx(r, r);
            self.a[i] = 1.0;
        }
    }

    #[inline]
    fn add(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(c <= r && r - c <= self.bw);
        let i = self.idx(r, c);
        self.a[i] += v;
    }

    fn factor(&mut self) -> Result<()> {
        for r in 0..self.n {
            let lo = r.saturating_sub(self.bw);
            for c in lo..=r {
                let mut s = self.a[self.idx(r, c)];
                for k in lo..c {
                    s -= self.a[self.idx(r, k)] * self.a[self.idx(c, k)];
                }
                let i = self.idx(r, c);
                if c == r {
                    if !(s > 0.0 && s.is_finite()) {
                        return Err(Error::SolveFailed(String::from(
                            "implicit membrane operator lost positive definiteness",
                        )));
                    }
                    self.a[i] = sqrt(s);
                } else {
                    self.a[i] = s / self.a[self.idx(c, c)];
                }
            }
        }
        Ok(())
    }

    /// Solves `L L^T x = b` in place; `factor` must have succeeded.
    fn solve(&self, x: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        for r in 0..self.n {
            let lo = r.saturating_sub(self.bw);
            let mut s = x[r];
            for k in lo..r {
                s -= self.a[self.idx(r, k)] * x[k];
            }
            x[r] = s / self.a[self.idx(r, r)];
        }
        for r in (0..self.n).rev() {
            let hi = (r + self.bw).min(self.n - 1);
            let mut s = x[r];
            for k in r + 1..=hi {
                s -= self.a[self.idx(k, r)] * x[k];
            }
            x[r] = s / self.a[self.idx(r, r)];
        }
    }
}

/// Sorted neighbor lists of the mesh edge graph.
fn edge_adjacency(n: usize, triangles: &[[u32; 3]]) -> Vec<Vec<u32>> {
    let mut adj = vec![Vec::new(); n];
    for tri in triangles {
        for k in 0..3 {
            let (a, b) = (tri[k] as usize, tri[(k + 1) % 3]);
            adj[a].push(b);
            adj[b as usize].push(tri[k]);
        }
    }
    for row in adj.iter_mut() {
        row.sort_unstable();
        row.dedup();
    }
    adj
}

/// Reverse Cuthill-McKee order; works per connected component, neighbors
/// visited by ascending degree then id, so the result is deterministic.
fn reverse_cuthill_mckee(adj: &[Vec<u32>]) -> Vec<u32> {
    let n = adj.len();
    let mut order = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    let mut queue = VecDeque::new();
    loop {
        let seed = (0..n).filter(|&i| !seen[i]).min_by_key(|&i| (adj[i].len(), i));
        let Some(seed) = seed else { break };
        seen[seed] = true;
        queue.push_back(seed as u32);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<u32> =
                adj[v as usize].iter().copied().filter(|&u| !seen[u as usize]).collect();
            next.sort_unstable_by_key(|&u| (adj[u as usize].len(), u));
            for u in next {
                seen[u as usize] = true;
                queue.push_back(u);
            }
        }
    }
    order.reverse();
    order
}

/// Node ids within `hops` edge steps of each node, self included, sorted.
fn hop_neighborhoods(adj: &[Vec<u32>], hops: usize) -> Vec<Vec<u32>> {
    adj.iter()
        .enumerate()
        .map(|(v, _)| {
            let mut set = vec![v as u32];
            let mut frontier = vec![v as u32];
            for _ in 0..hops {
                let mut next = Vec::new();
                for &u in &frontier {
                    for &w in &adj[u as usize] {
                        if !set.contains(&w) {
                            set.push(w);
                            next.push(w);
                        }
                    }
                }
                frontier = next;
            }
            set.sort_unstable();
            set
        })
        .collect()
}

/// Squared distance from `p` to triangle `abc` (closest-feature walk).
fn point_triangle_dist_sq(p: Vec3, a: Vec3, b: Vec3, c: Vec3) -> f64 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(ap);
    let d2 = ac.dot(ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return ap.norm_sq();
    }
    let bp = p - b;
    let d3 = ab.dot(bp);
    let d4 = ac.dot(bp);
    if d3 >= 0.0 && d4 <= d3 {
        return bp.norm_sq();
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (ap - ab * v).norm_sq();
    }
    let cp = p - c;
    let d5 = ab.dot(cp);
    let d6 = ac.dot(cp);
    if d6 >= 0.0 && d5 <= d6 {
        return cp.norm_sq();
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (ap - ac * w).norm_sq();
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (bp - (c - b) * w).norm_sq();
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (ap - ab * v - ac * w).norm_sq()
}

/// Marks vertex-triangle pairs already closer than `radius` in the reference
/// configuration as non-contacts.  Cut planforms (the finger's slits) place
/// disconnected mesh parts at zero distance by construction; only pairs that
/// start apart can signal a real approach.  Exclusion stays node-granular:
/// the triangle's corners join the vertex's excluded-node list.
fn min_separation_impl(
    triangles: &[[u32; 3]],
    nodes: &[Vec3],
    excluded: &[Vec<u32>],
    cutoff: f64,
) -> f64 {
    // Centroid and circumscribing radius per triangle for the broad phase.
    let bounds: Vec<(Vec3, f64)> = triangles
        .iter()
        .map(|tri| {
            let [a, b, c] = tri.map(|i| nodes[i as usize]);
            let cen = (a + b + c) * (1.0 / 3.0);
            let r = sqrt(
                (a - cen)
                    .norm_sq()
                    .max((b - cen).norm_sq())
                    .max((c - cen).norm_sq()),
            );
            (cen, r)
        })
        .collect();
    let mut best = cutoff;
    for (v, &p) in nodes.iter().enumerate() {
        let ex = &excluded[v];
        for (t, tri) in triangles.iter().enumerate() {
            let (cen, r) = bounds[t];
            let reach = best + r;
            if (p - cen).norm_sq() > reach * reach {
                continue;
            }
            if tri.iter().any(|u| ex.binary_search(u).is_ok()) {
                continue;
            }
            let [a, b, c] = tri.map(|i| nodes[i as usize]);
            let dsq = point_triangle_dist_sq(p, a, b, c);
            if dsq.is_finite() && dsq < best * best {
                best = sqrt(dsq);
            }
        }
    }
    if best >= cutoff {
        f64::INFINITY
    } else {
        best
    }
}

/// Smallest distance between a vertex and a triangle outside its `hops`-ring
/// mesh neighborhood, or infinity when no pair comes within `cutoff`.
/// Exclusion is topological (edge hops), so folds that bring materially
/// distant parts together are seen even where slits make them touch in the
/// reference plane.
pub fn min_self_separation(
    triangles: &[[u32; 3]],
    nodes: &[Vec3],
    hops: usize,
    cutoff: f64,
) -> f64 {
    let adj = edge_adjacency(nodes.len(), triangles);
    let excluded = hop_neighborhoods(&adj, hops);
    min_separation_impl(triangles, nodes, &excluded, cutoff)
}

/// Net rotation of the sheet cross-section about the running centerline,
/// summed tip to tip [rad].  Grid columns are the sections; the sign follows
/// the right-hand rule about the local centerline direction.
pub fn accumulated_twist(grid: &GridInfo, nodes: &[Vec3]) -> f64 {
    let sections: Vec<(Vec3, Vec3)> = (0..=grid.nx)
        .map(|i| {
            let bottom = nodes[grid.node_id(i, 0) as usize];
            let top = nodes[grid.node_id(i, grid.ny) as usize];
            ((bottom + top) * 0.5, top - bottom)
        })
        .collect();
    let mut total = 0.0;
    for w in sections.windows(2) {
        let (c0, v0) = w[0];
        let (c1, v1) = w[1];
        let Some(axis) = (c1 - c0).try_normalized(0.0) else { continue };
        let p0 = v0 - axis * v0.dot(axis);
        let p1 = v1 - axis * v1.dot(axis);
        let (Some(a), Some(b)) = (p0.try_normalized(0.0), p1.try_normalized(0.0)) else {
            continue;
        };
        total += atan2(a.cross(b).dot(axis), a.dot(b));
    }
    total
}

/// Mobility-coupled integrator for one swimmer.  State persists across
/// [`Simulation::run`] calls, so multi-phase protocols continue from where
/// the previous phase stopped after a [`Simulation::set_field`].
pub struct Simulation {
    config: SimConfig,
    mesh: SwimmerMesh,
    elastic: ElasticModel,
    magnetic: MagneticModel,
    fluid: FluidParams,
    mobility: MobilityOperator,
    nodes: Vec<Vec3>,
    t: f64,
    step_index: usize,
    steps_per_cycle: usize,
    spacing: f64,
    char_len: f64,
    // Substepping state.
    halvings: u32,
    halvings_floor: u32,
    /// `beta / (4 pi mu eps)`: the amplified local drag of the implicit term.
    local_damp: f64,
    springs: Vec<([usize; 2], f64)>,
    pos: Vec<usize>,
    chol: BandCholesky,
    // Buffers.
    forces: Vec<Vec3>,
    vel: Vec<Vec3>,
    saved: Vec<Vec3>,
    rhs: Vec<f64>,
    external: Option<Vec<Vec3>>,
    // Failure latch and contact exclusion sets.
    failure: Option<Regime>,
    contact_excluded: Vec<Vec<u32>>,
}

impl Simulation {
    /// Builds the swimmer mesh from the design, applies the configured tilt
    /// and assembles the integrator at the rest state.
    pub fn new(config: SimConfig) -> Result<Simulation> {
        config.validate()?;
        let mut mesh = build_swimmer(&config.design)?;
        apply_tilt(&mut mesh, &config.tilt)?;
        Simulation::from_mesh(config, mesh)
    }

    /// Assembles the integrator around an existing mesh (already tilted or
    /// otherwise transformed); `config.tilt` is not applied again.  The
    /// design in `config` still supplies the characteristic length.
    pub fn from_mesh(config: SimConfig, mesh: SwimmerMesh) -> Result<Simulation> {
        config.validate()?;
        mesh.validate()?;
        let n = mesh.n_nodes();
        let steps_per_cycle = config.steps_per_cycle()?;
        let elastic = ElasticModel::new(&mesh, &config.material)?;
        let magnetic = MagneticModel::new(&mesh, config.magnetization)?;
        let spacing = mesh.mean_edge_length();
        let eps = config.regularization.unwrap_or(0.75 * spacing);
        let fluid = FluidParams { viscosity: config.viscosity, regularization: eps };
        fluid.validate()?;
        let mobility = MobilityOperator::new(&mesh.nodes, fluid)?;
        let char_len = config.design.characteristic_length();

        let adj = edge_adjacency(n, &mesh.triangles);
        let order = reverse_cuthill_mckee(&adj);
        let mut pos = vec![0usize; n];
        for (new_i, &old) in order.iter().enumerate() {
            pos[old as usize] = new_i;
        }
        let springs: Vec<([usize; 2], f64)> = elastic.edge_springs().collect();
        let band_nodes = springs
            .iter()
            .map(|([a, b], _)| pos[*a].abs_diff(pos[*b]))
            .max()
            .unwrap_or(0);
        let chol = BandCholesky::new(3 * n, 3 * band_nodes + 2);

        let self_mobility = 1.0 / (4.0 * PI * fluid.viscosity * eps);
        let area_per_node = mesh.total_reference_area() / n as f64;
        let beta = f64::max(4.0, char_len * eps / area_per_node);
        let local_damp = beta * self_mobility;

        let stiffness_scale = elastic.bending_diagonal_bound(&mesh.nodes)?
            + config.magnetization * config.field.amplitude * mesh.thickness;
        let rate = self_mobility * stiffness_scale;
        let halvings_floor = substep_floor(config.dt, rate);
        let contact_excluded = hop_neighborhoods(&adj, CONTACT_HOPS);

        let nodes = mesh.nodes.clone();
        Ok(Simulation {
            saved: nodes.clone(),
            forces: vec![Vec3::ZERO; n],
            vel: vec![Vec3::ZERO; n],
            rhs: vec![0.0; 3 * n],
            nodes,
            config,
            elastic,
            magnetic,
            fluid,
            mobility,
            mesh,
            t: 0.0,
            step_index: 0,
            steps_per_cycle,
            spacing,
            char_len,
            halvings: halvings_floor,
            halvings_floor,
            local_damp,
            springs,
            pos,
            chol,
            external: None,
            failure: None,
            contact_excluded,
        })
    }

    pub fn nodes(&self) -> &[Vec3] {
        &self.nodes
    }

    pub fn mesh(&self) -> &SwimmerMesh {
        &self.mesh
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn com(&self) -> Vec3 {
        self.mesh.area_weighted_com(&self.nodes)
    }

    /// Physics failure latched by a previous step, if any.
    pub fn failure(&self) -> Option<Regime> {
        self.failure
    }

    /// Constant per-node forces added to every substep, for held loads.
    pub fn set_external_forces(&mut self, forces: Option<Vec<Vec3>>) -> Result<()> {
        if let Some(f) = &forces {
            if f.len() != self.nodes.len() {
                return Err(Error::InvalidParameter(String::from(
                    "external force count must match the node count",
                )));
            }
            if f.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter(String::from(
                    "external forces must be finite",
                )));
            }
        }
        self.external = forces;
        Ok(())
    }

    /// Swaps the drive program; positions and the clock continue unchanged.
    pub fn set_field(&mut self, field: FieldProgram) -> Result<()> {
        let mut config = self.config.clone();
        config.field = field;
        config.validate()?;
        self.steps_per_cycle = config.steps_per_cycle()?;
        let stiffness_scale = self.elastic.bending_diagonal_bound(&self.nodes)?
            + config.magnetization * config.field.amplitude * self.mesh.thickness;
        let self_mobility = 1.0 / (4.0 * PI * self.fluid.viscosity * self.fluid.regularization);
        self.halvings_floor = substep_floor(config.dt, self_mobility * stiffness_scale);
        self.config = config;
        Ok(())
    }

    /// Elastic plus magnetic forces at time `t` into `self.forces`, then any
    /// external load.  Internal forces must carry no net momentum.
    fn assemble_forces(&mut self, t: f64) -> Result<()> {
        for f in self.forces.iter_mut() {
            *f = Vec3::ZERO;
        }
        let _ = self.elastic.accumulate_forces(&self.nodes, &mut self.forces)?;
        let b = self.config.field.field_at(t);
        self.magnetic.accumulate_forces(&self.nodes, b, &mut self.forces)?;
        let mut net = Vec3::ZERO;
        let mut scale = 0.0;
        for f in &self.forces {
            net += *f;
            scale += f.norm();
        }
        if !scale.is_finite() {
            return Err(Error::DegenerateMesh(String::from("non-finite nodal forces")));
        }
        if net.norm() > 1e-10 * scale {
            return Err(Error::SolveFailed(String::from(
                "internal forces violate momentum balance",
            )));
        }
        if let Some(ext) = &self.external {
            for (f, e) in self.forces.iter_mut().zip(ext) {
                *f += *e;
            }
        }
        Ok(())
    }

    /// Assembles and factors `I + dt' c K` from the saved macro-step start
    /// geometry.
    fn prepare_implicit(&mut self, dt_sub: f64) -> Result<()> {
        let c = dt_sub * self.local_damp;
        self.chol.reset_identity();
        for ([a, b], spring) in &self.springs {
            let d = self.saved[*b] - self.saved[*a];
            let len_sq = d.norm_sq();
            if !(len_sq > 0.0 && len_sq.is_finite()) {
                return Err(Error::DegenerateMesh(String::from("collapsed edge during evaluation")));
            }
            // Block w d d^T is the spring stiffness along the edge direction.
            let w = c * spring / len_sq;
            let ra = 3 * self.pos[*a];
            let rb = 3 * self.pos[*b];
            let (hi, lo) = if ra > rb { (ra, rb) } else { (rb, ra) };
            for i in 0..3 {
                for j in 0..=i {
                    let v = w * d.axis(i) * d.axis(j);
                    self.chol.add(ra + i, ra + j, v);
                    self.chol.add(rb + i, rb + j, v);
                }
                for j in 0..3 {
                    self.chol.add(hi + i, lo + j, -w * d.axis(i) * d.axis(j));
                }
            }
        }
        self.chol.factor()
    }

    /// Advances one macro step `dt`.  Physics failures latch a regime in
    /// `self.failure` and leave the state at the macro-step start; `Err` is
    /// reserved for inconsistent configurations and internal bugs.
    pub fn step(&mut self) -> Result<()> {
        if self.failure.is_some() {
            return Ok(());
        }
        self.mobility.update_points(&self.nodes)?;
        self.saved.copy_from_slice(&self.nodes);
        let t0 = self.t;
        let mut k = self.halvings.max(self.halvings_floor);
        // Probe a coarser substep now and then; the guard below catches it.
        if self.step_index % 16 == 0 && k > self.halvings_floor {
            k -= 1;
        }
        let limit_sq = (DISPLACEMENT_GUARD * self.spacing) * (DISPLACEMENT_GUARD * self.spacing);
        'attempt: loop {
            if k > MAX_HALVINGS {
                self.nodes.copy_from_slice(&self.saved);
                self.failure = Some(Regime::NotConverged);
                return Ok(());
            }
            let n_sub = 1usize << k;
            let dt_sub = self.config.dt / n_sub as f64;
            match self.prepare_implicit(dt_sub) {
                Ok(()) => {}
                Err(Error::DegenerateMesh(_)) | Err(Error::SolveFailed(_)) => {
                    self.nodes.copy_from_slice(&self.saved);
                    self.failure = Some(Regime::NotConverged);
                    return Ok(());
                }
                Err(e) => return Err(e),
            }
            self.nodes.copy_from_slice(&self.saved);
            for s in 0..n_sub {
                // Field at the substep midpoint: second-order quadrature of
                // the drive, removing the systematic phase lag of sampling
                // at the substep start.
                let ts = t0 + (s as f64 + 0.5) * dt_sub;
                match self.assemble_forces(ts) {
                    Ok(()) => {}
                    Err(Error::DegenerateMesh(_)) => {
                        self.nodes.copy_from_slice(&self.saved);
                        self.failure = Some(Regime::NotConverged);
                        return Ok(());
                    }
                    Err(e) => return Err(e),
                }
                self.mobility.apply(&self.forces, &mut self.vel)?;
                for (i, v) in self.vel.iter().enumerate() {
                    let r = 3 * self.pos[i];
                    self.rhs[r] = dt_sub * v.x;
                    self.rhs[r + 1] = dt_sub * v.y;
                    self.rhs[r + 2] = dt_sub * v.z;
                }
                self.chol.solve(&mut self.rhs);
                let mut max_sq = 0.0f64;
                for i in 0..self.nodes.len() {
                    let r = 3 * self.pos[i];
                    let dsq = self.rhs[r] * self.rhs[r]
                        + self.rhs[r + 1] * self.rhs[r + 1]
                        + self.rhs[r + 2] * self.rhs[r + 2];
                    if dsq > max_sq {
                        max_sq = dsq;
                    }
                }
                if !(max_sq <= limit_sq) {
                    k += 1;
                    continue 'attempt;
                }
                for (i, p) in self.nodes.iter_mut().enumerate() {
                    let r = 3 * self.pos[i];
                    *p += vec3(self.rhs[r], self.rhs[r + 1], self.rhs[r + 2]);
                }
            }
            break;
        }
        self.halvings = k;
        self.t = t0 + self.config.dt;
        self.step_index += 1;
        Ok(())
    }

    /// Flow velocities induced at `probes` by the force state of the current
    /// instant [m/s].
    pub fn flow_velocities(&mut self, probes: &[Vec3]) -> Result<Vec<Vec3>> {
        self.assemble_forces(self.t)?;
        flow_at_probes(&self.nodes, &self.forces, probes, self.fluid)
    }

    /// Mean absolute flow speeds over the configured probe box around the
    /// COM, in units of `L^3 / T`.  Probes within two blob radii of a node
    /// are excluded.
    pub fn sample_flow(&mut self) -> Result<FlowSample> {
        self.assemble_forces(self.t)?;
        let com = self.com();
        let side = self.config.probe_grid;
        let half = 0.5 * self.config.probe_box_factor * self.char_len;
        let cell = 2.0 * half / side as f64;
        let excl_sq = (2.0 * self.fluid.regularization) * (2.0 * self.fluid.regularization);
        let mut probes = Vec::with_capacity(side * side * side);
        for ix in 0..side {
            let x = com.x - half + (ix as f64 + 0.5) * cell;
            for iy in 0..side {
                let y = com.y - half + (iy as f64 + 0.5) * cell;
                for iz in 0..side {
                    let p = vec3(x, y, com.z - half + (iz as f64 + 0.5) * cell);
                    if self.nodes.iter().all(|q| (*q - p).norm_sq() >= excl_sq) {
                        probes.push(p);
                    }
                }
            }
        }
        let mut flow = [0.0; 3];
        if !probes.is_empty() {
            let u = flow_at_probes(&self.nodes, &self.forces, &probes, self.fluid)?;
            for v in &u {
                flow[0] += fabs(v.x);
                flow[1] += fabs(v.y);
                flow[2] += fabs(v.z);
            }
            let norm = self.config.field.period() / (self.char_len * probes.len() as f64);
            for q in flow.iter_mut() {
                *q *= norm;
            }
        }
        Ok(FlowSample { t: self.t, flow })
    }

    fn min_separation(&self) -> f64 {
        min_separation_impl(&self.mesh.triangles, &self.nodes, &self.contact_excluded, self.spacing)
    }

    /// Integrates from the current state until the per-cycle displacement
    /// settles or the cycle budget runs out, and classifies the outcome.
    pub fn run(&mut self) -> Result<Trajectory> {
        let spc = self.steps_per_cycle;
        let flow_every = cadence(spc, self.config.flow_samples_per_cycle);
        let snap_every = cadence(spc, self.config.snapshots_per_cycle);
        let mut com_track = Vec::with_capacity(spc * self.config.n_cycles_max + 1);
        let mut flow_trace = Vec::new();
        let mut snapshots = Vec::new();
        let mut cycles: Vec<CycleDiagnostics> = Vec::new();
        let mut steady_cycle: Option<usize> = None;
        let mut fatal = self.failure;
        com_track.push((self.t, self.com()));
        'run: for cycle in 0..self.config.n_cycles_max {
            if fatal.is_some() {
                break;
            }
            let com_start = self.com();
            let mut max_twist = 0.0;
            let mut min_sep = f64::INFINITY;
            let mut flow_acc = [0.0; 3];
            let mut flow_n = 0usize;
            for s in 0..spc {
                if flow_every.map_or(false, |e| s % e == 0) {
                    match self.sample_flow() {
                        Ok(sample) => {
                            for (acc, q) in flow_acc.iter_mut().zip(sample.flow) {
                                *acc += q;
                            }
                            flow_n += 1;
                            flow_trace.push(sample);
                        }
                        Err(Error::DegenerateMesh(_)) => {
                            fatal = Some(Regime::NotConverged);
                            break 'run;
                        }
                        Err(e) => return Err(e),
                    }
                }
                if snap_every.map_or(false, |e| s % e == 0) {
                    snapshots.push((self.t, self.nodes.clone()));
                }
                self.step()?;
                com_track.push((self.t, self.com()));
                if let Some(r) = self.failure {
                    fatal = Some(r);
                    break 'run;
                }
                if let Some(grid) = &self.mesh.grid {
                    let twist = fabs(accumulated_twist(grid, &self.nodes));
                    if twist > max_twist {
                        max_twist = twist;
                    }
                    if twist > COILING_TWIST {
                        fatal = Some(Regime::Coiling);
                        break 'run;
                    }
                }
                if s % self.config.contact_check_interval == 0 {
                    let sep = self.min_separation();
                    if sep < min_sep {
                        min_sep = sep;
                    }
                    if sep < self.mesh.thickness {
                        fatal = Some(Regime::SelfContact);
                        break 'run;
                    }
                }
            }
            let displacement = self.com() - com_start;
            let blpc = displacement.x / self.char_len;
            let flow = if flow_n > 0 {
                flow_acc.map(|q| q / flow_n as f64)
            } else {
                [0.0; 3]
            };
            cycles.push(CycleDiagnostics {
                cycle,
                com_displacement: displacement,
                blpc,
                flow,
                max_twist,
                min_separation: min_sep,
            });
            if cycles.len() >= 2 {
                let prev = cycles[cycles.len() - 2].com_displacement;
                let big = f64::max(displacement.norm(), prev.norm());
                let steady_now = (displacement - prev).norm() < STEADY_REL * big
                    || big < STEADY_FLOOR * self.char_len;
                if steady_now {
                    if steady_cycle.is_none() {
                        steady_cycle = Some(cycle);
                    }
                } else {
                    steady_cycle = None;
                }
            }
            if steady_cycle.is_some()
                && cycles.len() >= self.config.min_cycles
                && (cycles.len() >= FLOPPY_MIN_CYCLES || fabs(blpc) >= FLOPPY_BLPC)
            {
                break;
            }
        }
        let regime = if let Some(r) = fatal {
            r
        } else if steady_cycle.is_some() {
            let last = cycles.last().map(|c| c.blpc).unwrap_or(0.0);
            if fabs(last) < FLOPPY_BLPC && cycles.len() >= FLOPPY_MIN_CYCLES {
                Regime::Floppy
            } else {
                Regime::Ok
            }
        } else {
            Regime::NotConverged
        };
        Ok(Trajectory {
            characteristic_length: self.char_len,
            period: self.config.field.period(),
            com_track,
            cycles,
            flow_trace,
            snapshots,
            regime,
            steady_cycle,
            final_nodes: self.nodes.clone(),
        })
    }
}

/// Substep halvings needed so one substep resolves the fastest explicit
/// stiffness rate with margin; runtime halving handles the rest.
fn substep_floor(dt: f64, rate: f64) -> u32 {
    let mut k = 0u32;
    while k < MAX_HALVINGS && dt / (1u64 << k) as f64 * rate > 1.5 {
        k += 1;
    }
    k
}

fn cadence(steps_per_cycle: usize, samples: usize) -> Option<usize> {
    if samples == 0 {
        None
    } else {
        Some(steps_per_cycle / samples)
    }
}
