//! Arm reach model, inverse-reachability annuli and problem-type classification.
//!
//! The arm is a spherical reach shell `[reach_min, reach_max]` about a shoulder
//! point; any tool orientation is achievable inside the shell. Under that model
//! the set of body positions from which a task-satisfying end-effector pose is
//! reachable is rotationally symmetric about the target, so both regions are
//! annuli in the ground plane.
//!
//! A region scan evaluates a grid of end-effector candidates in the vertical
//! plane through the body and the target (each candidate aimed at the target),
//! keeps the candidates that satisfy the task predicate, and sweeps the body
//! distance `rho` to find where at least one of them is reachable. Interval
//! endpoints are refined twice by a factor of four, both in the candidate grid
//! and in `rho`.

use std::collections::HashSet;
use std::f64::consts::PI;

use nalgebra::{Point2, Point3, Vector2, Vector3};
use thiserror::Error;

use crate::constraints::{self, Mpoi, TaskParams, Troi};
use crate::geom::{CameraModel, EePose};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReachError {
    #[error("feasible body distances form {intervals} disjoint intervals at grid resolution")]
    NonIntervalFeasibility { intervals: usize },
    #[error("annuli do not match any problem type")]
    Unclassifiable,
    #[error("feasible body distances reach the scan limit {rho_max} m; widen the radial margin")]
    ScanTruncated { rho_max: f64 },
    #[error("invalid search grid: {0}")]
    InvalidGrid(&'static str),
}

/// Planar body pose with a fixed body height.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyPose {
    pub position: Point2<f64>,
    pub yaw: f64,
    pub body_height: f64,
}

impl BodyPose {
    pub fn new(position: Point2<f64>, yaw: f64, body_height: f64) -> Self {
        Self {
            position,
            yaw: normalize_angle(yaw),
            body_height,
        }
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn normalize_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmModel {
    /// Shoulder position relative to the body origin, in the body frame.
    pub shoulder_offset: Vector3<f64>,
    pub reach_min: f64,
    pub reach_max: f64,
}

impl Default for ArmModel {
    fn default() -> Self {
        Self {
            shoulder_offset: Vector3::zeros(),
            reach_min: 0.15,
            reach_max: 0.74,
        }
    }
}

impl ArmModel {
    pub fn shoulder(&self, body: &BodyPose) -> Point3<f64> {
        let (s, c) = body.yaw.sin_cos();
        let o = self.shoulder_offset;
        Point3::new(
            body.position.x + c * o.x - s * o.y,
            body.position.y + s * o.x + c * o.y,
            body.body_height + o.z,
        )
    }

    pub fn validate(&self) -> Result<(), constraints::ParamError> {
        if !(self.reach_min >= 0.0 && self.reach_min < self.reach_max) {
            return Err(constraints::ParamError::OutOfRange {
                name: "arm.reach_min",
                value: self.reach_min,
                rule: "0 <= reach_min < reach_max",
            });
        }
        Ok(())
    }
}

/// Everything about the robot the region scans need.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Robot {
    pub arm: ArmModel,
    pub camera: CameraModel,
    pub body_height: f64,
}

impl Default for Robot {
    fn default() -> Self {
        Self {
            arm: ArmModel::default(),
            camera: CameraModel::default(),
            body_height: 0.8,
        }
    }
}

impl Robot {
    pub fn shoulder_height(&self) -> f64 {
        self.body_height + self.arm.shoulder_offset.z
    }
}

pub fn ee_reachable(body: &BodyPose, ee_position: &Point3<f64>, arm: &ArmModel) -> bool {
    let d = (ee_position - arm.shoulder(body)).norm();
    d >= arm.reach_min && d <= arm.reach_max
}

/// Planar ring `r_inner <= |p - center| <= r_outer`, or the empty set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Annulus {
    pub center: Point2<f64>,
    pub r_inner: f64,
    pub r_outer: f64,
    pub empty: bool,
}

impl Annulus {
    pub fn new(center: Point2<f64>, r_inner: f64, r_outer: f64) -> Self {
        assert!(
            0.0 <= r_inner && r_inner < r_outer,
            "annulus radii must satisfy 0 <= r_inner < r_outer (got {r_inner}, {r_outer})"
        );
        Self {
            center,
            r_inner,
            r_outer,
            empty: false,
        }
    }

    pub fn empty_at(center: Point2<f64>) -> Self {
        Self {
            center,
            r_inner: 0.0,
            r_outer: 0.0,
            empty: true,
        }
    }

    pub fn contains(&self, p: &Point2<f64>) -> bool {
        self.contains_distance((p - self.center).norm())
    }

    pub fn contains_distance(&self, rho: f64) -> bool {
        !self.empty && rho >= self.r_inner && rho <= self.r_outer
    }

    pub fn translated(&self, center: Point2<f64>) -> Self {
        Self { center, ..*self }
    }

    pub fn area(&self) -> f64 {
        if self.empty {
            0.0
        } else {
            PI * (self.r_outer * self.r_outer - self.r_inner * self.r_inner)
        }
    }

    pub fn intersection_area(&self, other: &Annulus) -> f64 {
        if self.empty || other.empty {
            return 0.0;
        }
        let d = (self.center - other.center).norm();
        let lens = |a: f64, b: f64| disc_intersection_area(a, b, d);
        (lens(self.r_outer, other.r_outer)
            - lens(self.r_outer, other.r_inner)
            - lens(self.r_inner, other.r_outer)
            + lens(self.r_inner, other.r_inner))
        .max(0.0)
    }

    /// Set inclusion up to a relative area tolerance.
    pub fn is_subset_of(&self, other: &Annulus) -> bool {
        if self.empty {
            return true;
        }
        let a = self.area();
        self.intersection_area(other) >= a * (1.0 - 1e-9)
    }
}

/// Area of the intersection of two discs with radii `r1`, `r2` and center distance `d`.
pub fn disc_intersection_area(r1: f64, r2: f64, d: f64) -> f64 {
    if r1 <= 0.0 || r2 <= 0.0 || d >= r1 + r2 {
        return 0.0;
    }
    if d <= (r1 - r2).abs() {
        let r = r1.min(r2);
        return PI * r * r;
    }
    let a1 = ((d * d + r1 * r1 - r2 * r2) / (2.0 * d * r1))
        .clamp(-1.0, 1.0)
        .acos();
    let a2 = ((d * d + r2 * r2 - r1 * r1) / (2.0 * d * r2))
        .clamp(-1.0, 1.0)
        .acos();
    let k = ((-d + r1 + r2) * (d + r1 - r2) * (d - r1 + r2) * (d + r1 + r2)).max(0.0);
    r1 * r1 * a1 + r2 * r2 * a2 - 0.5 * k.sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProblemType {
    TypeI,
    TypeII,
    TypeIII,
    TypeIV,
}

impl std::fmt::Display for ProblemType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::TypeI => "TypeI",
            Self::TypeII => "TypeII",
            Self::TypeIII => "TypeIII",
            Self::TypeIV => "TypeIV",
        })
    }
}

/// Minimum overlap, as a fraction of the smaller region, for a Type II problem.
pub const SIGNIFICANT_OVERLAP: f64 = 0.01;

pub fn classify_problem_type(
    ro: &Annulus,
    rm: &Annulus,
    mpoi_in_troi: bool,
) -> Result<ProblemType, ReachError> {
    if ro.empty || rm.empty {
        return Err(ReachError::Unclassifiable);
    }
    let smaller = ro.area().min(rm.area());
    let inter = ro.intersection_area(rm);
    let d = (ro.center - rm.center).norm();
    let tol = 1e-12 * (1.0 + ro.r_outer.max(rm.r_outer));
    if inter <= 1e-12 * smaller {
        if !mpoi_in_troi {
            return Ok(ProblemType::TypeIV);
        }
        if d + rm.r_outer <= ro.r_inner + tol {
            return Ok(ProblemType::TypeI);
        }
        if d + ro.r_outer <= rm.r_inner + tol {
            return Ok(ProblemType::TypeIII);
        }
        return Err(ReachError::Unclassifiable);
    }
    let nested = ro.is_subset_of(rm) || rm.is_subset_of(ro);
    if !nested && inter >= SIGNIFICANT_OVERLAP * smaller {
        Ok(ProblemType::TypeII)
    } else {
        Err(ReachError::Unclassifiable)
    }
}

/// Resolution of the region scans.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchGrid {
    /// Steps along the first candidate axis (standoff, or tool distance for `R_m`).
    pub standoff_steps: usize,
    /// Steps along the second candidate axis (height, or elevation for `R_m`).
    pub height_steps: usize,
    /// Coarse steps of the body-distance sweep.
    pub radial_steps: usize,
    /// Sweep extends to `reach_max + radial_margin`.
    pub radial_margin: f64,
    pub refine_factor: usize,
    /// Subdivision levels of the body-distance edges.
    pub refine_levels: usize,
    /// Subdivision levels of the end-effector candidates around the edges.
    pub candidate_levels: usize,
    /// Candidates refined around each interval endpoint.
    pub refine_seeds: usize,
}

impl Default for SearchGrid {
    fn default() -> Self {
        Self {
            standoff_steps: 32,
            height_steps: 24,
            radial_steps: 256,
            radial_margin: 2.0,
            refine_factor: 4,
            refine_levels: 2,
            candidate_levels: 2,
            refine_seeds: 2,
        }
    }
}

impl SearchGrid {
    pub fn validate(&self) -> Result<(), ReachError> {
        if self.standoff_steps < 2 || self.height_steps < 2 || self.radial_steps < 2 {
            return Err(ReachError::InvalidGrid(
                "grid needs at least 2 steps per axis",
            ));
        }
        if self.refine_factor < 1 {
            return Err(ReachError::InvalidGrid("refine factor must be >= 1"));
        }
        if !(self.radial_margin >= 0.0) {
            return Err(ReachError::InvalidGrid("radial margin must be >= 0"));
        }
        Ok(())
    }

    pub fn rho_max(&self, arm: &ArmModel) -> f64 {
        arm.reach_max + self.radial_margin
    }

    pub fn coarse_rho_step(&self, arm: &ArmModel) -> f64 {
        self.rho_max(arm) / self.radial_steps as f64
    }

    pub fn refined_rho_step(&self, arm: &ArmModel) -> f64 {
        self.coarse_rho_step(arm) / (self.refine_factor.pow(self.refine_levels as u32)) as f64
    }
}

/// End-effector candidate in the vertical plane through the body and the
/// target: horizontal `standoff` from the target toward the body, and height.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EeCandidate {
    pub standoff: f64,
    pub height: f64,
}

impl EeCandidate {
    /// Pose for a body in planar direction `dir` (unit) from `target`, aimed at it.
    pub fn pose(&self, target: &Point2<f64>, dir: &Vector2<f64>) -> Option<EePose> {
        let p = target + dir * self.standoff;
        EePose::aimed_at(
            Point3::new(p.x, p.y, self.height),
            Point3::new(target.x, target.y, 0.0),
        )
    }
}

/// Shoulder placement of a body that faces the target, in the scan plane.
#[derive(Debug, Clone, Copy, PartialEq)]
struct ShoulderPlane {
    forward: f64,
    lateral_sq: f64,
    height: f64,
    r_min_sq: f64,
    r_max_sq: f64,
}

impl ShoulderPlane {
    fn new(robot: &Robot) -> Self {
        let o = robot.arm.shoulder_offset;
        Self {
            forward: o.x,
            lateral_sq: o.y * o.y,
            height: robot.shoulder_height(),
            r_min_sq: robot.arm.reach_min * robot.arm.reach_min,
            r_max_sq: robot.arm.reach_max * robot.arm.reach_max,
        }
    }

    /// Squared shoulder-to-candidate distance for a body at distance `rho`.
    #[inline]
    fn dist_sq(&self, c: &EeCandidate, rho: f64) -> f64 {
        let h = rho - self.forward - c.standoff;
        let dz = self.height - c.height;
        h * h + self.lateral_sq + dz * dz
    }

    #[inline]
    fn reaches(&self, c: &EeCandidate, rho: f64) -> bool {
        let d = self.dist_sq(c, rho);
        d >= self.r_min_sq && d <= self.r_max_sq
    }

    /// Half-widths `(outer, inner)` of the horizontal reach band of a candidate.
    fn band(&self, c: &EeCandidate) -> Option<(f64, f64)> {
        let dz = self.height - c.height;
        let rest = self.lateral_sq + dz * dz;
        if rest > self.r_max_sq {
            return None;
        }
        Some((
            (self.r_max_sq - rest).sqrt(),
            (self.r_min_sq - rest).max(0.0).sqrt(),
        ))
    }

    /// Largest body distance from which the candidate is reachable.
    fn rho_high(&self, c: &EeCandidate) -> f64 {
        self.band(c).map_or(f64::NEG_INFINITY, |(outer, _)| {
            self.forward + c.standoff + outer
        })
    }

    /// Smallest non-negative body distance from which the candidate is reachable.
    fn rho_low(&self, c: &EeCandidate) -> f64 {
        let Some((outer, inner)) = self.band(c) else {
            return f64::INFINITY;
        };
        let mid = self.forward + c.standoff;
        if mid - inner >= 0.0 {
            (mid - outer).max(0.0)
        } else if mid + outer >= 0.0 {
            (mid + inner).max(0.0)
        } else {
            f64::INFINITY
        }
    }
}

/// Parameterisation of the candidate grid.
#[derive(Debug, Clone, Copy, PartialEq)]
enum CandidateGrid {
    /// Standoff in `[0, s_max]`, height in `(0, z_max]`.
    Cartesian {
        s_max: f64,
        z_max: f64,
        ns: usize,
        nz: usize,
    },
    /// Distance from the target in `[d_min, d_max]`, elevation in `(0, pi)`.
    Polar {
        d_min: f64,
        d_max: f64,
        nd: usize,
        ne: usize,
    },
}

impl CandidateGrid {
    fn dims(&self) -> (usize, usize) {
        match *self {
            Self::Cartesian { ns, nz, .. } => (ns, nz),
            Self::Polar { nd, ne, .. } => (nd, ne),
        }
    }

    /// Rough candidate spacing `(standoff, height)` in metres.
    fn cell(&self) -> (f64, f64) {
        match *self {
            Self::Cartesian {
                s_max,
                z_max,
                ns,
                nz,
            } => (s_max / (ns - 1) as f64, z_max / nz as f64),
            Self::Polar {
                d_min,
                d_max,
                nd,
                ne,
            } => {
                let c = ((d_max - d_min) / (nd - 1) as f64).max(d_max * PI / (ne + 1) as f64);
                (c, c)
            }
        }
    }

    /// Candidate at fractional grid indices `(i, j)`; `None` outside the domain.
    fn at(&self, i: f64, j: f64) -> Option<EeCandidate> {
        let (ni, nj) = self.dims();
        if i < 0.0 || j < 0.0 || i > (ni - 1) as f64 || j > (nj - 1) as f64 {
            return None;
        }
        match *self {
            Self::Cartesian {
                s_max,
                z_max,
                ns,
                nz,
            } => Some(EeCandidate {
                standoff: s_max * i / (ns - 1) as f64,
                height: z_max * (j + 1.0) / nz as f64,
            }),
            Self::Polar {
                d_min,
                d_max,
                nd,
                ne,
            } => {
                let d = d_min + (d_max - d_min) * i / (nd - 1) as f64;
                let e = PI * (j + 1.0) / (ne + 1) as f64;
                Some(EeCandidate {
                    standoff: d * e.cos(),
                    height: d * e.sin(),
                })
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct GridCandidate {
    i: f64,
    j: f64,
    c: EeCandidate,
}

/// Outcome of a region scan: the annulus plus the candidate set that backs it.
#[derive(Debug, Clone)]
pub struct RegionScan {
    annulus: Annulus,
    candidates: Vec<EeCandidate>,
    plane: ShoulderPlane,
    coarse_step: f64,
    refined_step: f64,
}

impl RegionScan {
    pub fn annulus(&self) -> Annulus {
        self.annulus
    }

    /// Task-satisfying candidates found by the scan (coarse and refined).
    pub fn candidates(&self) -> &[EeCandidate] {
        &self.candidates
    }

    pub fn coarse_step(&self) -> f64 {
        self.coarse_step
    }

    pub fn refined_step(&self) -> f64 {
        self.refined_step
    }

    /// The scan's feasibility predicate at body distance `rho` from the center.
    pub fn feasible_at(&self, rho: f64) -> bool {
        self.candidates.iter().any(|c| self.plane.reaches(c, rho))
    }

    /// Same region re-centered, e.g. `R_m` moved to a sampled MPOI.
    pub fn translated(&self, center: Point2<f64>) -> Self {
        Self {
            annulus: self.annulus.translated(center),
            ..self.clone()
        }
    }

    /// Picks the reachable candidate minimising `score` for a body at `body`,
    /// aimed at the region center.
    pub fn select_ee<F>(&self, body: &Point2<f64>, mut score: F) -> Option<EePose>
    where
        F: FnMut(&EeCandidate, &EePose) -> f64,
    {
        let center = self.annulus.center;
        let offset = body - center;
        let rho = offset.norm();
        let dir = if rho > 1e-12 {
            offset / rho
        } else {
            Vector2::x()
        };
        let mut best: Option<(f64, EePose)> = None;
        for c in &self.candidates {
            if !self.plane.reaches(c, rho) {
                continue;
            }
            let Some(pose) = c.pose(&center, &dir) else {
                continue;
            };
            let s = score(c, &pose);
            if best.as_ref().map_or(true, |(b, _)| s < *b) {
                best = Some((s, pose));
            }
        }
        best.map(|(_, p)| p)
    }
}

/// Re-centering passes allowed per refinement level.
const MAX_RECENTER: usize = 16;

/// Scan for the perception region `R_o` around a TROI.
pub fn scan_ro(
    troi: &Troi,
    robot: &Robot,
    params: &TaskParams,
    grid: &SearchGrid,
) -> Result<RegionScan, ReachError> {
    grid.validate()?;
    let rho_max = grid.rho_max(&robot.arm);
    let cgrid = CandidateGrid::Cartesian {
        s_max: rho_max,
        z_max: robot.shoulder_height() + robot.arm.reach_max,
        ns: grid.standoff_steps,
        nz: grid.height_steps,
    };
    let local = Troi {
        center: Point2::origin(),
        radius: troi.radius,
    };
    let pred = |c: &EeCandidate| {
        c.pose(&local.center, &Vector2::x())
            .is_some_and(|ee| constraints::nsv_indicator(&ee, &robot.camera, &local, params))
    };
    scan_region(troi.center, robot, grid, cgrid, pred)
}

/// Scan for the manipulation region `R_m` around a ground point.
pub fn scan_rm(
    point: Point2<f64>,
    robot: &Robot,
    params: &TaskParams,
    grid: &SearchGrid,
) -> Result<RegionScan, ReachError> {
    grid.validate()?;
    let rho_max = grid.rho_max(&robot.arm);
    let d_cap = (rho_max * rho_max + robot.shoulder_height().powi(2)).sqrt() + robot.arm.reach_max;
    let d_min = (params.eps_min.sqrt() * (1.0 + 1e-12)).min(d_cap);
    let d_max = (params.eps_max.sqrt() * (1.0 - 1e-12)).min(d_cap);
    let cgrid = CandidateGrid::Polar {
        d_min,
        d_max,
        nd: grid.standoff_steps,
        ne: grid.height_steps,
    };
    let target = Mpoi::new(Point2::origin());
    let pred = |c: &EeCandidate| {
        c.pose(&target.point, &Vector2::x())
            .is_some_and(|ee| constraints::epmc_indicator(&ee, &target, params))
    };
    scan_region(point, robot, grid, cgrid, pred)
}

pub fn compute_ro(
    troi: &Troi,
    robot: &Robot,
    params: &TaskParams,
    grid: &SearchGrid,
) -> Result<Annulus, ReachError> {
    scan_ro(troi, robot, params, grid).map(|s| s.annulus())
}

pub fn compute_rm(
    point: Point2<f64>,
    robot: &Robot,
    params: &TaskParams,
    grid: &SearchGrid,
) -> Result<Annulus, ReachError> {
    scan_rm(point, robot, params, grid).map(|s| s.annulus())
}

fn scan_region<P>(
    center: Point2<f64>,
    robot: &Robot,
    grid: &SearchGrid,
    cgrid: CandidateGrid,
    pred: P,
) -> Result<RegionScan, ReachError>
where
    P: Fn(&EeCandidate) -> bool,
{
    let plane = ShoulderPlane::new(robot);
    let rho_max = grid.rho_max(&robot.arm);
    let coarse = grid.coarse_rho_step(&robot.arm);
    let (ni, nj) = cgrid.dims();

    let mut accepted: Vec<GridCandidate> = Vec::with_capacity(ni * nj);
    for i in 0..ni {
        for j in 0..nj {
            let (fi, fj) = (i as f64, j as f64);
            if let Some(c) = cgrid.at(fi, fj) {
                if plane.band(&c).is_some() && pred(&c) {
                    accepted.push(GridCandidate { i: fi, j: fj, c });
                }
            }
        }
    }

    let mut scan = RegionScan {
        annulus: Annulus::empty_at(center),
        candidates: Vec::new(),
        plane,
        coarse_step: coarse,
        refined_step: grid.refined_rho_step(&robot.arm),
    };
    if accepted.is_empty() {
        return Ok(scan);
    }

    // Enrich the candidate set around the candidates that bound the region.
    // At each level the neighbourhoods follow the extremes until they stop
    // improving, then the spacing shrinks.
    let factor = grid.refine_factor.max(1) as f64;
    let k = grid.refine_factor as i64;
    let key = |i: f64, j: f64| ((i * 4096.0).round() as i64, (j * 4096.0).round() as i64);
    let mut seen: HashSet<(i64, i64)> = accepted.iter().map(|g| key(g.i, g.j)).collect();
    let extremes = |acc: &[GridCandidate]| {
        acc.iter()
            .fold((f64::NEG_INFINITY, f64::INFINITY), |(hi, lo), g| {
                (hi.max(plane.rho_high(&g.c)), lo.min(plane.rho_low(&g.c)))
            })
    };
    let mut cell = 1.0;
    for _ in 0..grid.candidate_levels {
        let sub = cell / factor;
        for _ in 0..MAX_RECENTER {
            let before = extremes(&accepted);
            for seed in extreme_seeds(&accepted, &plane, grid.refine_seeds) {
                for di in -k..=k {
                    for dj in -k..=k {
                        let (fi, fj) = (seed.i + di as f64 * sub, seed.j + dj as f64 * sub);
                        if !seen.insert(key(fi, fj)) {
                            continue;
                        }
                        if let Some(c) = cgrid.at(fi, fj) {
                            if plane.band(&c).is_some() && pred(&c) {
                                accepted.push(GridCandidate { i: fi, j: fj, c });
                            }
                        }
                    }
                }
            }
            if extremes(&accepted) == before {
                break;
            }
        }
        cell = sub;
    }
    scan.candidates = accepted.iter().map(|g| g.c).collect();
    let feasible = |c: &EeCandidate| c.height > 0.0 && plane.band(c).is_some() && pred(c);
    let cell = cgrid.cell();
    let high = |c: &EeCandidate| plane.rho_high(c);
    let low = |c: &EeCandidate| -plane.rho_low(c);
    let top = scan
        .candidates
        .iter()
        .copied()
        .max_by(|a, b| high(a).total_cmp(&high(b)));
    let bottom = scan
        .candidates
        .iter()
        .copied()
        .max_by(|a, b| low(a).total_cmp(&low(b)));
    let mut polished = Vec::new();
    if let Some(c) = top {
        polish_edge(c, cell, true, &feasible, high, &mut polished);
    }
    if let Some(c) = bottom.filter(|c| plane.rho_low(c) > 0.0) {
        polish_edge(c, cell, false, &feasible, low, &mut polished);
    }
    scan.candidates.extend(polished);

    // Coarse sweep over rho, then locate each endpoint to the refined step.
    let steps = grid.radial_steps;
    let flags: Vec<bool> = (0..=steps)
        .map(|k| scan.feasible_at(rho_max * k as f64 / steps as f64))
        .collect();
    let mut intervals = Vec::new();
    let mut start = None;
    for (k, &f) in flags.iter().enumerate() {
        match (f, start) {
            (true, None) => start = Some(k),
            (false, Some(s)) => {
                intervals.push((s, k - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        intervals.push((s, steps));
    }
    match intervals.len() {
        0 => return Ok(scan),
        1 => {}
        n => return Err(ReachError::NonIntervalFeasibility { intervals: n }),
    }
    let (lo, hi) = intervals[0];
    if hi == steps {
        return Err(ReachError::ScanTruncated { rho_max });
    }
    let rho = |k: usize| rho_max * k as f64 / steps as f64;
    let mut r_inner = rho(lo);
    if lo > 0 {
        r_inner = refine_edge(&scan, rho(lo - 1), rho(lo), grid);
    }
    let mut r_outer = rho(hi);
    if hi < steps {
        r_outer = refine_edge(&scan, rho(hi + 1), rho(hi), grid);
    }
    if r_outer <= r_inner {
        // A single feasible sample: widen to one refined step so the ring is proper.
        r_outer = r_inner + scan.refined_step;
    }
    scan.annulus = Annulus::new(center, r_inner, r_outer);
    Ok(scan)
}

/// Bisection steps when locating the standoff edge at one height.
const EDGE_BISECTIONS: usize = 16;
/// Smallest height step of the edge search, as a fraction of the initial one.
const EDGE_MIN_STEP: f64 = 1.0 / 512.0;

/// Follows the feasibility edge from `start` to a local optimum of `objective`.
///
/// Both region bounds are monotone in the standoff at a fixed height
/// (`rho_high` grows with it, `rho_low` too), so the best candidate at a
/// height sits on the edge of the feasible standoffs: the far edge when
/// `outward`, else the near edge. The edge is found by bisection and the
/// height moves by a shrinking step search. Every pushed candidate is feasible.
fn polish_edge<F, O>(
    start: EeCandidate,
    cell: (f64, f64),
    outward: bool,
    feasible: &F,
    objective: O,
    out: &mut Vec<EeCandidate>,
) where
    F: Fn(&EeCandidate) -> bool,
    O: Fn(&EeCandidate) -> f64,
{
    let sign = if outward { 1.0 } else { -1.0 };
    let at = |s: f64, z: f64| EeCandidate {
        standoff: s,
        height: z,
    };
    // Edge candidate at height `z`, starting from standoff `s` (or slightly
    // inside it when `s` itself fails).
    let edge = |s: f64, z: f64| -> Option<EeCandidate> {
        let mut inside = (0..8)
            .map(|k| s - sign * cell.0 * k as f64 / 8.0)
            .find(|&t| feasible(&at(t, z)))?;
        let mut step = cell.0;
        let mut outside = inside + sign * step;
        for _ in 0..8 {
            if !feasible(&at(outside, z)) {
                break;
            }
            inside = outside;
            step *= 2.0;
            outside = inside + sign * step;
        }
        if feasible(&at(outside, z)) {
            return Some(at(inside, z));
        }
        for _ in 0..EDGE_BISECTIONS {
            let mid = 0.5 * (inside + outside);
            if feasible(&at(mid, z)) {
                inside = mid;
            } else {
                outside = mid;
            }
        }
        Some(at(inside, z))
    };
    let Some(mut best) = edge(start.standoff, start.height) else {
        return;
    };
    out.push(best);
    let mut h = cell.1;
    while h >= cell.1 * EDGE_MIN_STEP {
        let mut moved = false;
        for dz in [h, -h] {
            if let Some(c) = edge(best.standoff, best.height + dz) {
                out.push(c);
                if objective(&c) > objective(&best) {
                    best = c;
                    moved = true;
                    break;
                }
            }
        }
        if !moved {
            h *= 0.5;
        }
    }
}

/// Accepted candidates that support the outermost and innermost reachable body distances.
fn extreme_seeds(
    accepted: &[GridCandidate],
    plane: &ShoulderPlane,
    per_side: usize,
) -> Vec<GridCandidate> {
    let mut by_high: Vec<&GridCandidate> = accepted.iter().collect();
    by_high.sort_by(|a, b| plane.rho_high(&b.c).total_cmp(&plane.rho_high(&a.c)));
    let mut by_low: Vec<&GridCandidate> = accepted.iter().collect();
    by_low.sort_by(|a, b| plane.rho_low(&a.c).total_cmp(&plane.rho_low(&b.c)));
    let mut seeds: Vec<GridCandidate> = Vec::with_capacity(2 * per_side);
    for g in by_high
        .into_iter()
        .take(per_side)
        .chain(by_low.into_iter().take(per_side))
    {
        if !seeds.iter().any(|s| s.i == g.i && s.j == g.j) {
            seeds.push(*g);
        }
    }
    seeds
}

/// Bisection-free refinement of a feasibility edge between an infeasible
/// sample `outside` and a feasible sample `inside`, by repeated subdivision.
fn refine_edge(scan: &RegionScan, outside: f64, inside: f64, grid: &SearchGrid) -> f64 {
    let (mut out, mut inn) = (outside, inside);
    let factor = grid.refine_factor.max(1);
    for _ in 0..grid.refine_levels {
        let step = (inn - out) / factor as f64;
        // Walk from the feasible side toward the infeasible side.
        let mut k = 1;
        while k < factor {
            let r = inn - step * k as f64;
            if !scan.feasible_at(r) {
                break;
            }
            k += 1;
        }
        let new_inn = inn - step * (k - 1) as f64;
        out = inn - step * k as f64;
        inn = new_inn;
    }
    inn
}
