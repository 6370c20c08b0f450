//! Seeded Monte Carlo comparison of the three planners.
//!
//! Each trial draws one TROI, one hidden MPOI and one MPOI sample set, and is
//! replayed at every path length, so lengths are compared on identical
//! scenes. Trials run in parallel; results are collected in trial order and
//! summed pairwise, so the output does not depend on the thread count.

use std::collections::BTreeMap;

use nalgebra::Point2;
use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::constraints::{Mpoi, ParamError, TaskParams, Troi};
use crate::energy::EnergyParams;
use crate::planner::{
    Branch, FeasibilityMap, Plan, PlanError, Planner, PlannerKind, PolarGrid, TrialScene,
};
use crate::reach::{BodyPose, Robot, SearchGrid};
use crate::uncertainty::{
    self, MpoiDistribution, MpoiSamples, RngStream, SigmaMode, UncertaintyError,
};

/// Second argument of [`uncertainty::stream_hash`] for the scene draw of a trial.
pub const SCENE_STREAM: u64 = 0x5CE7_E000;
/// Second argument of [`uncertainty::stream_hash`] for a trial's planning samples.
pub const SAMPLE_STREAM: u64 = 0x5A3F_1E00;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Sampling(#[from] UncertaintyError),
    #[error("average cost of the coupled planner is zero")]
    DivisionByZero,
    #[error("thread pool: {0}")]
    Threads(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n_trials: usize,
    /// Side of the square workspace centered at the origin (m).
    pub workspace: f64,
    pub r_w_range: (f64, f64),
    pub path_lengths: Vec<f64>,
    pub sigma_mode: SigmaMode,
    pub truncate_to_troi: bool,
    pub energy: EnergyParams,
    pub task: TaskParams,
    pub robot: Robot,
    pub master_seed: u64,
    /// MPOI samples behind each CAPM probability estimate.
    pub mc_samples: usize,
    pub polar: PolarGrid,
    pub search: SearchGrid,
    /// Worker threads; 0 uses the global pool.
    pub threads: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_trials: 1000,
            workspace: 3.0,
            r_w_range: (0.2, 0.3),
            path_lengths: vec![2.75, 3.25, 3.75, 4.25, 4.75],
            sigma_mode: SigmaMode::Linear,
            truncate_to_troi: true,
            energy: EnergyParams::default(),
            task: TaskParams::default(),
            robot: Robot::default(),
            master_seed: 2024,
            mc_samples: 2000,
            polar: PolarGrid::default(),
            search: SearchGrid::default(),
            threads: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        self.task.validate()?;
        self.robot.arm.validate()?;
        self.robot
            .camera
            .validate()
            .map_err(|e| SimError::Config(e.to_string()))?;
        self.search
            .validate()
            .map_err(|e| SimError::Config(e.to_string()))?;
        let bad = |m: &str| Err(SimError::Config(m.to_string()));
        if self.n_trials < 1 {
            return bad("n_trials must be >= 1");
        }
        if !(self.workspace > 0.0) {
            return bad("workspace must be > 0");
        }
        let (lo, hi) = self.r_w_range;
        if !(lo > 0.0 && lo <= hi) {
            return bad("r_w range must satisfy 0 < min <= max");
        }
        if self.path_lengths.is_empty() || self.path_lengths.iter().any(|l| !(*l > 0.0)) {
            return bad("path lengths must be a non-empty list of positive values");
        }
        if self.mc_samples < 1 {
            return bad("mc_samples must be >= 1");
        }
        if !(self.energy.alpha >= 0.0 && self.energy.gamma > 0.0 && self.energy.beta >= 0.0) {
            return bad("energy requires alpha >= 0, gamma > 0, beta >= 0");
        }
        if !(self.robot.body_height > 0.0) {
            return bad("body height must be > 0");
        }
        if self.polar.angular < 1 || self.polar.radial < 2 || self.polar.refine_factor < 1 {
            return bad("polar grid needs angular >= 1, radial >= 2, refine >= 1");
        }
        Ok(())
    }

    pub fn planner(&self) -> Result<Planner, SimError> {
        Ok(Planner::new(
            self.robot,
            self.task,
            self.energy,
            self.polar,
            self.search,
        )?)
    }

    fn distribution(&self, troi: &Troi) -> MpoiDistribution {
        MpoiDistribution::for_troi(troi, self.sigma_mode, self.truncate_to_troi)
    }

    /// TROI and hidden MPOI of trial `trial`.
    pub fn draw_trial(&self, trial: u64) -> Result<(Troi, Mpoi), SimError> {
        let mut rng = RngStream::new(
            self.master_seed,
            uncertainty::stream_hash(trial, SCENE_STREAM),
        )
        .rng();
        let half = 0.5 * self.workspace;
        let center = Point2::new(
            rng.random_range(-half..=half),
            rng.random_range(-half..=half),
        );
        let (lo, hi) = self.r_w_range;
        let r = if lo == hi {
            lo
        } else {
            rng.random_range(lo..=hi)
        };
        let troi = Troi::new(center, r)?;
        let mpoi = uncertainty::sample_mpoi(&self.distribution(&troi), &troi, &mut rng)?;
        Ok((troi, mpoi))
    }

    /// Planning samples of trial `trial` (shared by all its path lengths).
    pub fn draw_samples(&self, trial: u64, troi: &Troi) -> Result<MpoiSamples, SimError> {
        let mut rng = RngStream::new(
            self.master_seed,
            uncertainty::stream_hash(trial, SAMPLE_STREAM),
        )
        .rng();
        Ok(MpoiSamples::draw(
            &self.distribution(troi),
            troi,
            self.mc_samples,
            &mut rng,
        )?)
    }

    pub fn scene(&self, troi: Troi, mpoi: Mpoi, path_length: f64) -> TrialScene {
        let h = self.robot.body_height;
        TrialScene {
            start: BodyPose::new(Point2::new(-0.5 * path_length, 0.0), 0.0, h),
            end: BodyPose::new(Point2::new(0.5 * path_length, 0.0), 0.0, h),
            troi,
            mpoi,
        }
    }
}

/// All `N x |path_lengths|` scenes, trial-major.
pub fn generate_trials(cfg: &ExperimentConfig) -> Result<Vec<TrialScene>, SimError> {
    cfg.validate()?;
    let mut out = Vec::with_capacity(cfg.n_trials * cfg.path_lengths.len());
    for t in 0..cfg.n_trials as u64 {
        let (troi, mpoi) = cfg.draw_trial(t)?;
        out.extend(cfg.path_lengths.iter().map(|&l| cfg.scene(troi, mpoi, l)));
    }
    Ok(out)
}

/// One planner on one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial_id: u64,
    pub path_length: f64,
    pub planner: PlannerKind,
    pub branch: Option<Branch>,
    pub success: bool,
    pub expected_cost: f64,
    pub realized_cost: f64,
    pub troi: Troi,
    pub mpoi: Point2<f64>,
    pub x1: Option<Point2<f64>>,
    pub x3: Option<Point2<f64>>,
    pub error: Option<String>,
}

impl TrialRecord {
    fn from_plan(trial_id: u64, scene: &TrialScene, path_length: f64, plan: &Plan) -> Self {
        Self {
            trial_id,
            path_length,
            planner: plan.planner,
            branch: Some(plan.branch),
            success: plan.success.unwrap_or(false),
            expected_cost: plan.expected_cost,
            realized_cost: plan.realized_cost.unwrap_or(f64::NAN),
            troi: scene.troi,
            mpoi: scene.mpoi.point,
            x1: Some(plan.x1),
            x3: plan.x3,
            error: None,
        }
    }

    fn failed(
        trial_id: u64,
        path_length: f64,
        planner: PlannerKind,
        troi: Troi,
        mpoi: Point2<f64>,
        error: String,
    ) -> Self {
        Self {
            trial_id,
            path_length,
            planner,
            branch: None,
            success: false,
            expected_cost: f64::NAN,
            realized_cost: f64::NAN,
            troi,
            mpoi,
            x1: None,
            x3: None,
            error: Some(error),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerRow {
    /// Success percentage per path length.
    pub success_pct: Vec<f64>,
    /// Success percentage over all path lengths.
    pub pooled_success_pct: f64,
    /// Mean realized cost per path length (trials with errors excluded).
    pub avg_cost: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsTable {
    pub path_lengths: Vec<f64>,
    pub rows: BTreeMap<PlannerKind, PlannerRow>,
    /// `(avg_b - avg_c) / avg_c` per path length.
    pub eta_bc: Vec<f64>,
}

impl MetricsTable {
    pub fn from_records(path_lengths: &[f64], records: &[TrialRecord]) -> Result<Self, SimError> {
        let mut rows = BTreeMap::new();
        for kind in PlannerKind::ALL {
            let mut success_pct = Vec::with_capacity(path_lengths.len());
            let mut avg_cost = Vec::with_capacity(path_lengths.len());
            let (mut ok_all, mut n_all) = (0usize, 0usize);
            for &l in path_lengths {
                let group: Vec<&TrialRecord> = records
                    .iter()
                    .filter(|r| r.planner == kind && r.path_length == l)
                    .collect();
                let ok = group.iter().filter(|r| r.success).count();
                ok_all += ok;
                n_all += group.len();
                success_pct.push(percent(ok, group.len()));
                let costs: Vec<f64> = group
                    .iter()
                    .filter(|r| r.error.is_none())
                    .map(|r| r.realized_cost)
                    .collect();
                avg_cost.push(if costs.is_empty() {
                    f64::NAN
                } else {
                    pairwise_sum(&costs) / costs.len() as f64
                });
            }
            rows.insert(
                kind,
                PlannerRow {
                    success_pct,
                    pooled_success_pct: percent(ok_all, n_all),
                    avg_cost,
                },
            );
        }
        let b = &rows[&PlannerKind::Decoupled].avg_cost;
        let c = &rows[&PlannerKind::Capm].avg_cost;
        let eta_bc = b
            .iter()
            .zip(c)
            .map(|(b, c)| compute_eta(*b, *c))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            path_lengths: path_lengths.to_vec(),
            rows,
            eta_bc,
        })
    }

    pub fn row(&self, kind: PlannerKind) -> &PlannerRow {
        &self.rows[&kind]
    }
}

fn percent(k: usize, n: usize) -> f64 {
    if n == 0 {
        f64::NAN
    } else {
        100.0 * k as f64 / n as f64
    }
}

pub fn compute_eta(avg_b: f64, avg_c: f64) -> Result<f64, SimError> {
    if avg_c == 0.0 {
        return Err(SimError::DivisionByZero);
    }
    Ok((avg_b - avg_c) / avg_c)
}

/// Pairwise summation in index order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 8;
    if xs.len() <= BLOCK {
        return xs.iter().sum();
    }
    let (a, b) = xs.split_at(xs.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub records: Vec<TrialRecord>,
    pub metrics: MetricsTable,
}

impl ExperimentOutput {
    pub fn failures(&self) -> impl Iterator<Item = &TrialRecord> {
        self.records.iter().filter(|r| r.error.is_some())
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput, SimError> {
    cfg.validate()?;
    let planner = cfg.planner()?;
    let run = || -> Vec<Vec<TrialRecord>> {
        (0..cfg.n_trials as u64)
            .into_par_iter()
            .map(|t| run_trial(cfg, &planner, t))
            .collect()
    };
    let per_trial = if cfg.threads == 0 {
        run()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| SimError::Threads(e.to_string()))?
            .install(run)
    };
    let records: Vec<TrialRecord> = per_trial.into_iter().flatten().collect();
    let metrics = MetricsTable::from_records(&cfg.path_lengths, &records)?;
    Ok(ExperimentOutput { records, metrics })
}

/// All planners at all path lengths for trial `t`.
pub fn run_trial(cfg: &ExperimentConfig, planner: &Planner, t: u64) -> Vec<TrialRecord> {
    let mut out = Vec::with_capacity(3 * cfg.path_lengths.len());
    let (troi, mpoi) = match cfg.draw_trial(t) {
        Ok(v) => v,
        Err(e) => {
            // Without a scene there is nothing to report but the failure.
            let troi = Troi {
                center: Point2::origin(),
                radius: cfg.r_w_range.0,
            };
            for &l in &cfg.path_lengths {
                for kind in PlannerKind::ALL {
                    out.push(TrialRecord::failed(
                        t,
                        l,
                        kind,
                        troi,
                        Point2::origin(),
                        e.to_string(),
                    ));
                }
            }
            return out;
        }
    };
    let prepared = planner
        .regions(&troi)
        .map_err(SimError::from)
        .and_then(|r| {
            let feas = FeasibilityMap::new(planner, &r, cfg.draw_samples(t, &troi)?);
            Ok((r, feas))
        });
    for &l in &cfg.path_lengths {
        let scene = cfg.scene(troi, mpoi, l);
        let (regions, samples) = match &prepared {
            Ok(v) => (&v.0, &v.1),
            Err(e) => {
                for kind in PlannerKind::ALL {
                    out.push(TrialRecord::failed(
                        t,
                        l,
                        kind,
                        troi,
                        mpoi.point,
                        e.to_string(),
                    ));
                }
                continue;
            }
        };
        let record = |kind: PlannerKind, plan: Result<Plan, PlanError>| match plan
            .and_then(|p| planner.execute(&p, &scene, regions))
        {
            Ok(done) => TrialRecord::from_plan(t, &scene, l, &done),
            Err(e) => TrialRecord::failed(t, l, kind, troi, mpoi.point, e.to_string()),
        };
        out.push(record(
            PlannerKind::Deterministic,
            planner.plan_deterministic(&scene.start, &scene.end, &troi),
        ));
        match planner.plan_two_stage(&scene.start, &scene.end, regions, samples) {
            Ok((b, c)) => {
                out.push(record(PlannerKind::Decoupled, Ok(b)));
                out.push(record(PlannerKind::Capm, Ok(c)));
            }
            Err(e) => {
                out.push(record(PlannerKind::Decoupled, Err(e.clone())));
                out.push(record(PlannerKind::Capm, Err(e)));
            }
        }
    }
    out
}
