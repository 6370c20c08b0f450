//! Key-state planners and single-trial execution.
//!
//! * deterministic: one stop in `R_m` of the TROI center, no observation.
//! * decoupled: observe from `x1 in R_o`, then always reposition to `x3 in R_m`.
//! * CAPM: choose `x1` minimising `c0 + p(x1) cu + (1 - p(x1)) cl`, where `p`
//!   is the probability that `x1` already lies in `R_m` of the true MPOI.
//!
//! Each annulus is searched on a polar grid with one local refinement pass
//! around the incumbent. Every planned body move is a strict reposition, so
//! a plan's move count is fixed by its branch.

use std::cell::OnceCell;
use std::f64::consts::TAU;

use nalgebra::{Point2, Point3, Vector2};
use thiserror::Error;

use crate::constraints::{self, Mpoi, TaskParams, Troi};
use crate::energy::{self, EnergyParams};
use crate::geom::EePose;
use crate::reach::{self, Annulus, BodyPose, ReachError, RegionScan, Robot, SearchGrid};
use crate::uncertainty::MpoiSamples;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("{0} region is empty")]
    InfeasibleRegion(&'static str),
    #[error("next sufficient view does not hold at the executed observation pose")]
    ObservationFailed,
    #[error("no reachable end-effector pose for the {0} key state")]
    NoArmPose(&'static str),
    #[error(transparent)]
    Reach(#[from] ReachError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KeyStateKind {
    BodyMove,
    ArmPerceive,
    ArmManipulate,
    ArmHold,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TaskLabel {
    ActivePerception,
    Manipulation,
    Transit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyState {
    pub time_index: u32,
    pub kind: KeyStateKind,
    pub body: BodyPose,
    pub ee: Option<EePose>,
    pub task_label: TaskLabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    Upper,
    Lower,
    NoObservation,
}

impl Branch {
    pub fn name(self) -> &'static str {
        match self {
            Self::Upper => "upper",
            Self::Lower => "lower",
            Self::NoObservation => "none",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "upper" => Some(Self::Upper),
            "lower" => Some(Self::Lower),
            "none" => Some(Self::NoObservation),
            _ => None,
        }
    }

    pub fn body_moves(self) -> usize {
        match self {
            Self::Upper | Self::NoObservation => 2,
            Self::Lower => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PlannerKind {
    Deterministic,
    Decoupled,
    Capm,
}

impl PlannerKind {
    pub const ALL: [PlannerKind; 3] = [Self::Deterministic, Self::Decoupled, Self::Capm];

    pub fn letter(self) -> &'static str {
        match self {
            Self::Deterministic => "a",
            Self::Decoupled => "b",
            Self::Capm => "c",
        }
    }

    pub fn from_letter(s: &str) -> Option<Self> {
        match s {
            "a" => Some(Self::Deterministic),
            "b" => Some(Self::Decoupled),
            "c" => Some(Self::Capm),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub planner: PlannerKind,
    pub states: Vec<KeyState>,
    pub branch: Branch,
    pub expected_cost: f64,
    pub realized_cost: Option<f64>,
    pub success: Option<bool>,
    /// First intermediate body position.
    pub x1: Point2<f64>,
    /// Manipulation body position when it differs from `x1`'s stop.
    pub x3: Option<Point2<f64>>,
    /// Planned `p(x1)` (CAPM only).
    pub p_upper: Option<f64>,
}

impl Plan {
    /// Body moves after the initial state.
    pub fn body_moves(&self) -> usize {
        self.states
            .iter()
            .skip(1)
            .filter(|s| s.kind == KeyStateKind::BodyMove)
            .count()
    }

    pub fn body_states(&self) -> impl Iterator<Item = &BodyPose> {
        self.states
            .iter()
            .enumerate()
            .filter(|(i, s)| *i == 0 || s.kind == KeyStateKind::BodyMove)
            .map(|(_, s)| &s.body)
    }

    /// Sum of transition costs over consecutive key states.
    pub fn energy(&self, params: &EnergyParams) -> f64 {
        self.states
            .windows(2)
            .map(|w| energy::energy_cost(&w[0].body, &w[1].body, params))
            .sum()
    }
}

/// Visible part of a trial plus the hidden MPOI.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialScene {
    pub start: BodyPose,
    pub end: BodyPose,
    pub troi: Troi,
    pub mpoi: Mpoi,
}

/// Polar candidate grid over an annulus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarGrid {
    pub angular: usize,
    pub radial: usize,
    pub refine_factor: usize,
}

impl Default for PolarGrid {
    fn default() -> Self {
        Self {
            angular: 64,
            radial: 16,
            refine_factor: 4,
        }
    }
}

impl PolarGrid {
    fn radial_step(&self, a: &Annulus) -> f64 {
        (a.r_outer - a.r_inner) / (self.radial.max(2) - 1) as f64
    }

    fn angular_step(&self) -> f64 {
        TAU / self.angular.max(1) as f64
    }

    /// Coarse grid points, ring by ring from the inner radius; a zero-radius
    /// ring contributes the center once.
    pub fn points(&self, a: &Annulus) -> Vec<Point2<f64>> {
        if a.empty {
            return Vec::new();
        }
        let dr = self.radial_step(a);
        let dt = self.angular_step();
        let mut out = Vec::with_capacity(self.angular * self.radial);
        for j in 0..self.radial.max(2) {
            let r = a.r_inner + dr * j as f64;
            if r == 0.0 {
                out.push(a.center);
                continue;
            }
            for i in 0..self.angular {
                let (s, c) = (dt * i as f64).sin_cos();
                out.push(a.center + Vector2::new(r * c, r * s));
            }
        }
        out
    }

    /// Local grid at a quarter (by default) of the coarse spacing, one coarse
    /// cell either side of `p`, clipped to the annulus.
    pub fn refine_around(&self, a: &Annulus, p: &Point2<f64>) -> Vec<Point2<f64>> {
        if a.empty {
            return Vec::new();
        }
        let f = self.refine_factor.max(1) as i64;
        let dr = self.radial_step(a) / f as f64;
        let dt = self.angular_step() / f as f64;
        let off = p - a.center;
        let rho = off.norm();
        let mut out = Vec::with_capacity(((2 * f + 1) * (2 * f + 1)) as usize);
        if rho < 1e-12 {
            for l in 1..=f {
                let r = l as f64 * dr;
                if r > a.r_outer {
                    break;
                }
                for i in 0..self.angular {
                    let (s, c) = (self.angular_step() * i as f64).sin_cos();
                    out.push(a.center + Vector2::new(r * c, r * s));
                }
            }
            return out;
        }
        let u = off / rho;
        let turns: Vec<(f64, f64)> = (-f..=f).map(|k| (k as f64 * dt).sin_cos()).collect();
        for l in -f..=f {
            let r = rho + l as f64 * dr;
            if r < a.r_inner || r > a.r_outer {
                continue;
            }
            for (k, (s, c)) in (-f..=f).zip(&turns) {
                if l == 0 && k == 0 {
                    continue;
                }
                let dir = Vector2::new(u.x * c - u.y * s, u.x * s + u.y * c);
                out.push(a.center + dir * r);
            }
        }
        out
    }

    /// Largest distance from a point of the annulus to the nearest coarse node.
    pub fn spacing(&self, a: &Annulus) -> f64 {
        if a.empty {
            return 0.0;
        }
        let dr = self.radial_step(a);
        let arc = a.r_outer * self.angular_step();
        0.5 * (dr * dr + arc * arc).sqrt()
    }
}

/// Expected cost of a two-stage plan: the first move, then the upper branch
/// with probability `p` and the lower branch otherwise.
pub fn two_stage_objective(
    start: &Point2<f64>,
    end: &Point2<f64>,
    x1: &Point2<f64>,
    x3: &Point2<f64>,
    p: f64,
    energy: &EnergyParams,
) -> f64 {
    let hop =
        |a: &Point2<f64>, b: &Point2<f64>| energy::planar_cost((b - a).norm_squared(), energy);
    let c0 = hop(start, x1);
    let cu = hop(x1, end);
    let cl = hop(x1, x3) + hop(x3, end);
    c0 + p * cu + (1.0 - p) * cl
}

/// Regions attached to one TROI.
#[derive(Debug, Clone)]
pub struct TroiRegions {
    pub troi: Troi,
    pub ro: RegionScan,
    /// `R_m` centered at the TROI center.
    pub rm: RegionScan,
}

/// MPOI samples of one trial with `p(x1)` cached on the coarse `R_o` grid.
#[derive(Debug, Clone)]
pub struct FeasibilityMap {
    samples: MpoiSamples,
    shape: Annulus,
    grid_p: Vec<f64>,
}

impl FeasibilityMap {
    pub fn new(planner: &Planner, regions: &TroiRegions, samples: MpoiSamples) -> Self {
        let shape = planner.rm_shape.annulus();
        let grid_p = planner
            .grid
            .points(&regions.ro.annulus())
            .iter()
            .map(|x| samples.fraction_within(x, &shape))
            .collect();
        Self {
            samples,
            shape,
            grid_p,
        }
    }

    pub fn samples(&self) -> &MpoiSamples {
        &self.samples
    }

    /// Sample-average estimate of `p(x)`.
    pub fn p(&self, x: &Point2<f64>) -> f64 {
        self.samples.fraction_within(x, &self.shape)
    }
}

/// Per-`x1` terms of the two-stage objective.
#[derive(Debug, Clone, Copy, PartialEq)]
struct StageEntry {
    x1: Point2<f64>,
    c0: f64,
    cu: f64,
    cl: f64,
    x3: Point2<f64>,
}

/// Lower-branch evaluator for a fixed `R_m` and end point.
struct LowerStage<'a> {
    planner: &'a Planner,
    rm: Annulus,
    end: Point2<f64>,
    pts: Vec<Point2<f64>>,
    xs: Vec<f64>,
    ys: Vec<f64>,
    to_end: Vec<f64>,
}

impl<'a> LowerStage<'a> {
    fn new(planner: &'a Planner, rm: Annulus, end: Point2<f64>) -> Self {
        let pts = planner.grid.points(&rm);
        let to_end = pts.iter().map(|p| planner.move_cost(p, &end)).collect();
        Self {
            planner,
            rm,
            end,
            xs: pts.iter().map(|p| p.x).collect(),
            ys: pts.iter().map(|p| p.y).collect(),
            pts,
            to_end,
        }
    }

    /// Lowest-index minimiser of `hop(x1, x3) + hop(x3, end)` over the coarse points.
    fn coarse_min(&self, x1: &Point2<f64>, allow_stay: bool) -> Option<(f64, usize)> {
        const LANES: usize = 4;
        let e = &self.planner.energy;
        let (alpha, gamma) = (e.alpha, e.gamma);
        let squared = e.metric == energy::DistanceMetric::Squared;
        let stay = if allow_stay { 0.0 } else { f64::INFINITY };
        let mut best = [f64::INFINITY; LANES];
        let mut idx = [usize::MAX; LANES];
        let n = self.xs.len();
        let full = n - n % LANES;
        let eval = |i: usize| {
            let dx = self.xs[i] - x1.x;
            let dy = self.ys[i] - x1.y;
            let d2 = dx * dx + dy * dy;
            let len = if squared { d2 } else { d2.sqrt() };
            let hop = if d2 > 0.0 { alpha + gamma * len } else { stay };
            hop + self.to_end[i]
        };
        for base in (0..full).step_by(LANES) {
            for l in 0..LANES {
                let v = eval(base + l);
                if v < best[l] {
                    best[l] = v;
                    idx[l] = base + l;
                }
            }
        }
        let mut out: Option<(f64, usize)> = None;
        let tail = (full..n).map(|i| (eval(i), i));
        for (v, i) in best.into_iter().zip(idx).chain(tail) {
            if i == usize::MAX || !v.is_finite() {
                continue;
            }
            match out {
                Some((b, bi)) if v > b || (v == b && i > bi) => {}
                _ => out = Some((v, i)),
            }
        }
        out
    }

    /// Best manipulation stop for a body at `x1`; `allow_stay` admits `x3 = x1`.
    fn best(&self, x1: &Point2<f64>, allow_stay: bool) -> Option<(f64, Point2<f64>)> {
        let stay =
            (allow_stay && self.rm.contains(x1)).then(|| self.planner.move_cost(x1, &self.end));
        let coarse = self.coarse_min(x1, allow_stay);
        let (mut value, idx) = match (stay, coarse) {
            (Some(s), Some((v, _))) if s <= v => return Some((s, *x1)),
            (Some(s), None) if s.is_finite() => return Some((s, *x1)),
            (_, Some(c)) => c,
            _ => return None,
        };
        let mut point = self.pts[idx];
        for q in self.planner.grid.refine_around(&self.rm, &point.clone()) {
            let first = if allow_stay {
                self.planner.hop(x1, &q)
            } else {
                self.planner.move_cost(x1, &q)
            };
            let v = first + self.planner.move_cost(&q, &self.end);
            if v < value {
                value = v;
                point = q;
            }
        }
        Some((value, point))
    }
}

/// The full planning configuration, with the translation-invariant `R_m` shape.
#[derive(Debug, Clone)]
pub struct Planner {
    pub robot: Robot,
    pub task: TaskParams,
    pub energy: EnergyParams,
    pub grid: PolarGrid,
    pub search: SearchGrid,
    rm_shape: RegionScan,
}

impl Planner {
    pub fn new(
        robot: Robot,
        task: TaskParams,
        energy: EnergyParams,
        grid: PolarGrid,
        search: SearchGrid,
    ) -> Result<Self, PlanError> {
        let rm_shape = reach::scan_rm(Point2::origin(), &robot, &task, &search)?;
        if rm_shape.annulus().empty {
            return Err(PlanError::InfeasibleRegion("manipulation"));
        }
        Ok(Self {
            robot,
            task,
            energy,
            grid,
            search,
            rm_shape,
        })
    }

    pub fn with_defaults() -> Result<Self, PlanError> {
        Self::new(
            Robot::default(),
            TaskParams::default(),
            EnergyParams::default(),
            PolarGrid::default(),
            SearchGrid::default(),
        )
    }

    /// `R_m` about the origin.
    pub fn rm_shape(&self) -> &RegionScan {
        &self.rm_shape
    }

    pub fn rm_at(&self, p: Point2<f64>) -> RegionScan {
        self.rm_shape.translated(p)
    }

    pub fn regions(&self, troi: &Troi) -> Result<TroiRegions, PlanError> {
        let ro = reach::scan_ro(troi, &self.robot, &self.task, &self.search)?;
        if ro.annulus().empty {
            return Err(PlanError::InfeasibleRegion("perception"));
        }
        Ok(TroiRegions {
            troi: *troi,
            ro,
            rm: self.rm_at(troi.center),
        })
    }

    #[inline]
    fn hop(&self, a: &Point2<f64>, b: &Point2<f64>) -> f64 {
        energy::planar_cost((b - a).norm_squared(), &self.energy)
    }

    /// Cost of a planned body move; a zero-length move is not a move and is
    /// excluded with an infinite cost.
    #[inline]
    fn move_cost(&self, a: &Point2<f64>, b: &Point2<f64>) -> f64 {
        let d2 = (b - a).norm_squared();
        if d2 > 0.0 {
            energy::planar_cost(d2, &self.energy)
        } else {
            f64::INFINITY
        }
    }

    /// Best `x3` in `rm` for a body at `current`, minimising the two remaining hops.
    pub fn replan_manipulation(
        &self,
        current: &Point2<f64>,
        end: &Point2<f64>,
        rm: &Annulus,
        allow_stay: bool,
    ) -> Result<Point2<f64>, PlanError> {
        if rm.empty {
            return Err(PlanError::InfeasibleRegion("manipulation"));
        }
        LowerStage::new(self, *rm, *end)
            .best(current, allow_stay)
            .map(|(_, p)| p)
            .ok_or(PlanError::InfeasibleRegion("manipulation"))
    }

    pub fn plan_deterministic(
        &self,
        start: &BodyPose,
        end: &BodyPose,
        troi: &Troi,
    ) -> Result<Plan, PlanError> {
        let rm = self.rm_at(troi.center);
        let region = rm.annulus();
        let (s, e) = (start.position, end.position);
        let pts = self.grid.points(&region);
        let value = |x: &Point2<f64>| self.move_cost(&s, x) + self.move_cost(x, &e);
        let (mut best, mut idx) = (f64::INFINITY, None);
        for (i, x) in pts.iter().enumerate() {
            let v = value(x);
            if v < best {
                best = v;
                idx = Some(i);
            }
        }
        let mut x1 = pts[idx.ok_or(PlanError::InfeasibleRegion("manipulation"))?];
        for q in self.grid.refine_around(&region, &x1.clone()) {
            let v = value(&q);
            if v < best {
                best = v;
                x1 = q;
            }
        }
        let ee = self
            .mid_band_pose(&rm, &x1)
            .ok_or(PlanError::NoArmPose("manipulation"))?;
        let mut seq = Sequence::new(*start);
        seq.move_to(x1);
        seq.manipulate(ee, self.task.xi);
        seq.finish(end);
        Ok(Plan {
            planner: PlannerKind::Deterministic,
            states: seq.states,
            branch: Branch::NoObservation,
            expected_cost: best,
            realized_cost: None,
            success: None,
            x1,
            x3: None,
            p_upper: None,
        })
    }

    pub fn plan_decoupled(
        &self,
        start: &BodyPose,
        end: &BodyPose,
        regions: &TroiRegions,
    ) -> Result<Plan, PlanError> {
        let table = self.stage_table(start, end, regions, None);
        self.pick_decoupled(start, end, regions, &table)
    }

    pub fn plan_capm(
        &self,
        start: &BodyPose,
        end: &BodyPose,
        regions: &TroiRegions,
        feas: &FeasibilityMap,
    ) -> Result<Plan, PlanError> {
        let table = self.stage_table(start, end, regions, Some(feas));
        self.pick_capm(start, end, regions, &table, feas)
    }

    /// Decoupled and CAPM plans from one shared lower-branch evaluation.
    pub fn plan_two_stage(
        &self,
        start: &BodyPose,
        end: &BodyPose,
        regions: &TroiRegions,
        feas: &FeasibilityMap,
    ) -> Result<(Plan, Plan), PlanError> {
        let table = self.stage_table(start, end, regions, Some(feas));
        Ok((
            self.pick_decoupled(start, end, regions, &table)?,
            self.pick_capm(start, end, regions, &table, feas)?,
        ))
    }

    fn stage_table<'p>(
        &'p self,
        start: &BodyPose,
        end: &BodyPose,
        regions: &TroiRegions,
        feas: Option<&FeasibilityMap>,
    ) -> StageTable<'p> {
        let ro = regions.ro.annulus();
        let rm = regions.rm.annulus();
        let (s, e) = (start.position, end.position);
        let pts = self.grid.points(&ro);
        // cl is two paid hops whose length terms add up to at least the
        // straight-line term (half of it for the squared metric).
        let lb = pts
            .iter()
            .map(|x| {
                let d2 = (e - x).norm_squared();
                let len = match self.energy.metric {
                    energy::DistanceMetric::Euclidean => d2.sqrt(),
                    energy::DistanceMetric::Squared => 0.5 * d2,
                };
                2.0 * self.energy.alpha + self.energy.gamma * len
            })
            .collect();
        StageTable {
            lower: LowerStage::new(self, rm, e),
            c0: pts.iter().map(|x| self.move_cost(&s, x)).collect(),
            cu: pts.iter().map(|x| self.move_cost(x, &e)).collect(),
            entries: vec![OnceCell::new(); pts.len()],
            lb,
            p: feas.map(|f| f.grid_p.clone()),
            pts,
            ro,
            start: s,
        }
    }

    fn stage_entry(
        &self,
        lower: &LowerStage<'_>,
        start: &Point2<f64>,
        x1: &Point2<f64>,
    ) -> Option<StageEntry> {
        let (cl, x3) = lower.best(x1, false)?;
        Some(StageEntry {
            x1: *x1,
            c0: self.move_cost(start, x1),
            cu: self.move_cost(x1, &lower.end),
            cl,
            x3,
        })
    }

    fn pick_decoupled(
        &self,
        start: &BodyPose,
        end: &BodyPose,
        regions: &TroiRegions,
        table: &StageTable<'_>,
    ) -> Result<Plan, PlanError> {
        let value = |e: &StageEntry| e.c0 + e.cl;
        let best = table
            .search(|e, _| value(e), |i| table.c0[i] + table.lb[i])
            .ok_or(PlanError::InfeasibleRegion("perception"))?;
        let mut pick = table.entry(best);
        for q in self.grid.refine_around(&table.ro, &pick.x1.clone()) {
            if let Some(e) = self.stage_entry(&table.lower, &table.start, &q) {
                if value(&e) < value(&pick) {
                    pick = e;
                }
            }
        }
        self.two_stage_plan(
            PlannerKind::Decoupled,
            start,
            end,
            regions,
            &pick,
            0.0,
            value(&pick),
        )
    }

    fn pick_capm(
        &self,
        start: &BodyPose,
        end: &BodyPose,
        regions: &TroiRegions,
        table: &StageTable<'_>,
        feas: &FeasibilityMap,
    ) -> Result<Plan, PlanError> {
        let value = |e: &StageEntry, p: f64| e.c0 + p * e.cu + (1.0 - p) * e.cl;
        let p_of = table.p.as_ref().expect("CAPM table carries probabilities");
        let best = table
            .search(
                |e, i| value(e, p_of[i]),
                |i| table.c0[i] + p_of[i] * table.cu[i] + (1.0 - p_of[i]) * table.lb[i],
            )
            .ok_or(PlanError::InfeasibleRegion("perception"))?;
        let mut pick = table.entry(best);
        let mut pick_p = p_of[best];
        let mut best_v = value(&pick, pick_p);
        for q in self.grid.refine_around(&table.ro, &pick.x1.clone()) {
            if let Some(e) = self.stage_entry(&table.lower, &table.start, &q) {
                let p = feas.p(&q);
                let v = value(&e, p);
                if v < best_v {
                    best_v = v;
                    pick = e;
                    pick_p = p;
                }
            }
        }
        self.two_stage_plan(
            PlannerKind::Capm,
            start,
            end,
            regions,
            &pick,
            pick_p,
            best_v,
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn two_stage_plan(
        &self,
        planner: PlannerKind,
        start: &BodyPose,
        end: &BodyPose,
        regions: &TroiRegions,
        pick: &StageEntry,
        p: f64,
        expected_cost: f64,
    ) -> Result<Plan, PlanError> {
        let center = regions.troi.center;
        let ee_o = self
            .stow_pose(&regions.ro, &pick.x1)
            .ok_or(PlanError::NoArmPose("perception"))?;
        let mut seq = Sequence::new(*start);
        seq.move_to(pick.x1);
        seq.perceive(ee_o);
        let upper = p >= 1.0;
        if upper {
            let ee = self
                .stow_pose(&regions.rm, &pick.x1)
                .ok_or(PlanError::NoArmPose("manipulation"))?;
            seq.manipulate(ee, self.task.xi);
        } else {
            seq.move_to(pick.x3);
            let ee = self
                .stow_pose(&regions.rm, &pick.x3)
                .ok_or(PlanError::NoArmPose("manipulation"))?;
            seq.manipulate(ee, self.task.xi);
        }
        seq.finish(end);
        debug_assert!(regions.rm.annulus().center == center);
        Ok(Plan {
            planner,
            states: seq.states,
            branch: if upper { Branch::Upper } else { Branch::Lower },
            expected_cost,
            realized_cost: None,
            success: None,
            x1: pick.x1,
            x3: (!upper).then_some(pick.x3),
            p_upper: (planner == PlannerKind::Capm).then_some(p),
        })
    }

    /// Reachable pose of `scan` nearest the canonical stow pose of a body at `body`.
    pub fn stow_pose(&self, scan: &RegionScan, body: &Point2<f64>) -> Option<EePose> {
        let stow = self.stow_point(body, &scan.annulus().center);
        scan.select_ee(body, |_, pose| (pose.position - stow).norm_squared())
    }

    fn stow_point(&self, body: &Point2<f64>, toward: &Point2<f64>) -> Point3<f64> {
        let d = toward - body;
        let yaw = if d.norm() > 1e-12 {
            d.y.atan2(d.x)
        } else {
            0.0
        };
        let pose = BodyPose::new(*body, yaw, self.robot.body_height);
        let arm = &self.robot.arm;
        let shoulder = arm.shoulder(&pose);
        let mid = 0.5 * (arm.reach_min + arm.reach_max);
        Point3::new(
            shoulder.x + mid * yaw.cos(),
            shoulder.y + mid * yaw.sin(),
            shoulder.z,
        )
    }

    /// Tool pose at the middle of the distance band from the region center,
    /// in the vertical plane through the body; falls back to the scan
    /// candidate closest to mid-band when no mid-band pose is reachable.
    pub fn mid_band_pose(&self, rm: &RegionScan, body: &Point2<f64>) -> Option<EePose> {
        let target = rm.annulus().center;
        let off = body - target;
        let dir = if off.norm() > 1e-12 {
            off.normalize()
        } else {
            Vector2::x()
        };
        let yaw = (-dir.y).atan2(-dir.x);
        let pose = BodyPose::new(*body, yaw, self.robot.body_height);
        let stow = self.stow_point(body, &target);
        let d = self.task.eps_mid().sqrt();
        const ELEVATIONS: usize = 720;
        let mut best: Option<(f64, EePose)> = None;
        for k in 1..ELEVATIONS {
            let e = std::f64::consts::PI * k as f64 / ELEVATIONS as f64;
            let h = target + dir * (d * e.cos());
            let pos = Point3::new(h.x, h.y, d * e.sin());
            if !reach::ee_reachable(&pose, &pos, &self.robot.arm) {
                continue;
            }
            let Some(ee) = EePose::aimed_at(pos, Point3::new(target.x, target.y, 0.0)) else {
                continue;
            };
            let s = (pos - stow).norm_squared();
            if best.as_ref().map_or(true, |(b, _)| s < *b) {
                best = Some((s, ee));
            }
        }
        if let Some((_, ee)) = best {
            return Some(ee);
        }
        let mid = self.task.eps_mid();
        let goal = Point3::new(target.x, target.y, 0.0);
        rm.select_ee(body, |_, pose| {
            ((pose.position - goal).norm_squared() - mid).abs()
        })
    }

    /// Simulates a planned sequence against the hidden MPOI.
    pub fn execute(
        &self,
        plan: &Plan,
        scene: &TrialScene,
        regions: &TroiRegions,
    ) -> Result<Plan, PlanError> {
        let xi = self.task.xi;
        let truth = scene.mpoi;
        let mut seq = Sequence::new(scene.start);
        let (branch, x3, ee_m, body_m) = match plan.planner {
            PlannerKind::Deterministic => {
                seq.move_to(plan.x1);
                let ee = plan
                    .states
                    .iter()
                    .find(|s| s.kind == KeyStateKind::ArmManipulate)
                    .and_then(|s| s.ee)
                    .ok_or(PlanError::NoArmPose("manipulation"))?;
                seq.manipulate(ee, xi);
                (Branch::NoObservation, None, ee, plan.x1)
            }
            PlannerKind::Decoupled | PlannerKind::Capm => {
                seq.move_to(plan.x1);
                let ee_o = self
                    .stow_pose(&regions.ro, &plan.x1)
                    .ok_or(PlanError::ObservationFailed)?;
                let body = seq.current();
                if !reach::ee_reachable(&body, &ee_o.position, &self.robot.arm)
                    || !constraints::nsv_indicator(
                        &ee_o,
                        &self.robot.camera,
                        &scene.troi,
                        &self.task,
                    )
                {
                    return Err(PlanError::ObservationFailed);
                }
                seq.perceive(ee_o);
                let rm_true = self.rm_at(truth.point);
                let stay =
                    plan.planner == PlannerKind::Capm && rm_true.annulus().contains(&plan.x1);
                if stay {
                    let ee = self
                        .stow_pose(&rm_true, &plan.x1)
                        .ok_or(PlanError::NoArmPose("manipulation"))?;
                    seq.manipulate(ee, xi);
                    (Branch::Upper, None, ee, plan.x1)
                } else {
                    let allow_stay = plan.planner == PlannerKind::Capm;
                    let x3 = self.replan_manipulation(
                        &plan.x1,
                        &scene.end.position,
                        &rm_true.annulus(),
                        allow_stay,
                    )?;
                    seq.move_to(x3);
                    let ee = self
                        .stow_pose(&rm_true, &x3)
                        .ok_or(PlanError::NoArmPose("manipulation"))?;
                    seq.manipulate(ee, xi);
                    (Branch::Lower, Some(x3), ee, x3)
                }
            }
        };
        let body = BodyPose::new(body_m, seq.current().yaw, self.robot.body_height);
        let reachable = reach::ee_reachable(&body, &ee_m.position, &self.robot.arm);
        let held = match plan.planner {
            PlannerKind::Deterministic => {
                constraints::epmc_distance_ok(&ee_m.position, &truth, &self.task)
            }
            _ => constraints::epmc_indicator(&ee_m, &truth, &self.task),
        };
        let success = constraints::mtc_check(xi, reachable && held, &self.task);
        seq.finish(&scene.end);
        let mut out = Plan {
            planner: plan.planner,
            states: seq.states,
            branch,
            expected_cost: plan.expected_cost,
            realized_cost: None,
            success: Some(success),
            x1: plan.x1,
            x3,
            p_upper: plan.p_upper,
        };
        out.realized_cost = Some(out.energy(&self.energy));
        Ok(out)
    }

    /// Plans with `kind` and executes the plan on `scene`.
    pub fn execute_trial(
        &self,
        kind: PlannerKind,
        scene: &TrialScene,
        regions: &TroiRegions,
        feas: &FeasibilityMap,
    ) -> Result<Plan, PlanError> {
        let plan = match kind {
            PlannerKind::Deterministic => {
                self.plan_deterministic(&scene.start, &scene.end, &scene.troi)?
            }
            PlannerKind::Decoupled => self.plan_decoupled(&scene.start, &scene.end, regions)?,
            PlannerKind::Capm => self.plan_capm(&scene.start, &scene.end, regions, feas)?,
        };
        self.execute(&plan, scene, regions)
    }
}

/// Coarse `x1` candidates with lazily evaluated lower-branch terms.
struct StageTable<'p> {
    lower: LowerStage<'p>,
    pts: Vec<Point2<f64>>,
    c0: Vec<f64>,
    cu: Vec<f64>,
    /// Lower bound on `cl` per candidate.
    lb: Vec<f64>,
    p: Option<Vec<f64>>,
    entries: Vec<OnceCell<StageEntry>>,
    ro: Annulus,
    start: Point2<f64>,
}

impl StageTable<'_> {
    fn entry(&self, i: usize) -> StageEntry {
        *self.entries[i].get_or_init(|| {
            let x1 = self.pts[i];
            let (cl, x3) = self.lower.best(&x1, false).unwrap_or((f64::INFINITY, x1));
            StageEntry {
                x1,
                c0: self.c0[i],
                cu: self.cu[i],
                cl,
                x3,
            }
        })
    }

    /// Lowest-index minimiser of `value`, skipping candidates whose `bound`
    /// already exceeds the incumbent. Same result as a full scan.
    fn search<V, B>(&self, value: V, bound: B) -> Option<usize>
    where
        V: Fn(&StageEntry, usize) -> f64,
        B: Fn(usize) -> f64,
    {
        let bounds: Vec<f64> = (0..self.pts.len()).map(&bound).collect();
        let mut order: Vec<usize> = (0..bounds.len()).collect();
        order.sort_by(|&a, &b| bounds[a].total_cmp(&bounds[b]).then(a.cmp(&b)));
        let mut best: Option<(f64, usize)> = None;
        for i in order {
            if let Some((bv, _)) = best {
                if bounds[i] > bv {
                    break;
                }
            }
            let v = value(&self.entry(i), i);
            if !v.is_finite() {
                continue;
            }
            match best {
                Some((bv, bi)) if v > bv || (v == bv && i > bi) => {}
                _ => best = Some((v, i)),
            }
        }
        best.map(|(_, i)| i)
    }
}

/// Builder for a key-state sequence with increasing time indices.
struct Sequence {
    states: Vec<KeyState>,
}

impl Sequence {
    fn new(start: BodyPose) -> Self {
        Self {
            states: vec![KeyState {
                time_index: 0,
                kind: KeyStateKind::BodyMove,
                body: start,
                ee: None,
                task_label: TaskLabel::Transit,
            }],
        }
    }

    fn current(&self) -> BodyPose {
        self.states.last().expect("sequence starts non-empty").body
    }

    fn push(
        &mut self,
        kind: KeyStateKind,
        body: BodyPose,
        ee: Option<EePose>,
        task_label: TaskLabel,
    ) {
        let time_index = self.states.len() as u32;
        self.states.push(KeyState {
            time_index,
            kind,
            body,
            ee,
            task_label,
        });
    }

    fn move_to(&mut self, to: Point2<f64>) {
        let cur = self.current();
        let d = to - cur.position;
        let yaw = if d.norm_squared() > 0.0 {
            d.y.atan2(d.x)
        } else {
            cur.yaw
        };
        self.push(
            KeyStateKind::BodyMove,
            BodyPose::new(to, yaw, cur.body_height),
            None,
            TaskLabel::Transit,
        );
    }

    fn perceive(&mut self, ee: EePose) {
        let b = self.current();
        self.push(
            KeyStateKind::ArmPerceive,
            b,
            Some(ee),
            TaskLabel::ActivePerception,
        );
    }

    fn manipulate(&mut self, ee: EePose, xi: u32) {
        let b = self.current();
        self.push(
            KeyStateKind::ArmManipulate,
            b,
            Some(ee),
            TaskLabel::Manipulation,
        );
        for _ in 0..xi {
            self.push(KeyStateKind::ArmHold, b, Some(ee), TaskLabel::Manipulation);
        }
    }

    fn finish(&mut self, end: &BodyPose) {
        let b = self.current();
        self.push(
            KeyStateKind::BodyMove,
            BodyPose::new(end.position, end.yaw, b.body_height),
            None,
            TaskLabel::Transit,
        );
    }
}
