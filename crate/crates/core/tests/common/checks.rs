//! Oracle comparisons shared by the oracle tests and the acceptance run.
//! Each returns a one-line summary, or the first violation.

use capm_core::planner::{two_stage_objective, FeasibilityMap, TroiRegions};
use capm_core::reach::{scan_rm, scan_ro};
use capm_core::uncertainty::{p_feasible, MpoiDistribution};
use capm_core::*;
use nalgebra::{Point2, Vector2};
use rand::Rng;

use super::*;

pub type Check = Result<String, String>;

pub fn regions_vs_sampler(n_params: usize) -> Check {
    let mut rng = rng(1);
    let grid = SearchGrid::default();
    let mut worst: f64 = 0.0;
    for k in 0..n_params {
        let (robot, task, r_w) = random_setup(&mut rng);
        let troi = Troi::new(Point2::origin(), r_w).unwrap();
        let ro = scan_ro(&troi, &robot, &task, &grid).map_err(|e| format!("case {k}: {e}"))?;
        let rm = scan_rm(Point2::origin(), &robot, &task, &grid)
            .map_err(|e| format!("case {k}: {e}"))?;
        let o_ro = oracle_ro(&robot, &task, r_w, 10_000, &mut rng)
            .ok_or(format!("case {k}: sampler found no R_o"))?;
        let o_rm = oracle_rm(&robot, &task, 10_000, &mut rng)
            .ok_or(format!("case {k}: sampler found no R_m"))?;
        for (name, scan, o) in [("R_o", &ro, o_ro), ("R_m", &rm, o_rm)] {
            let a = scan.annulus();
            let step = scan.refined_step();
            let err = (a.r_inner - o.0).abs().max((a.r_outer - o.1).abs());
            worst = worst.max(err / step);
            if err > step {
                return Err(format!(
                    "case {k} {name}: scan [{}, {}] sampler [{}, {}] step {step}",
                    a.r_inner, a.r_outer, o.0, o.1
                ));
            }
        }
    }
    Ok(format!(
        "{n_params} parameterizations, worst edge error {worst:.2} refined steps"
    ))
}

pub struct Scene {
    pub planner: Planner,
    pub start: Point2<f64>,
    pub end: Point2<f64>,
    pub regions: TroiRegions,
    pub feas: FeasibilityMap,
    pub samples: Vec<Point2<f64>>,
}

/// Random TROIs in the workspace with their own MPOI samples.
pub fn random_scenes(n: usize, seed: u64, mc: usize) -> Vec<Scene> {
    let cfg = ExperimentConfig::default();
    let planner = cfg.planner().unwrap();
    let mut rng = rng(seed);
    (0..n)
        .map(|_| {
            let c = Point2::new(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5));
            let troi = Troi::new(c, rng.random_range(0.2..0.3)).unwrap();
            let l: f64 = rng.random_range(2.75..4.75);
            let regions = planner.regions(&troi).unwrap();
            let dist = MpoiDistribution::for_troi(&troi, SigmaMode::Linear, true);
            let samples = MpoiSamples::draw(&dist, &troi, mc, &mut rng).unwrap();
            Scene {
                start: Point2::new(-0.5 * l, 0.0),
                end: Point2::new(0.5 * l, 0.0),
                feas: FeasibilityMap::new(&planner, &regions, samples.clone()),
                samples: samples.points().to_vec(),
                planner: planner.clone(),
                regions,
            }
        })
        .collect()
}

fn pose(p: Point2<f64>) -> BodyPose {
    BodyPose::new(p, 0.0, Robot::default().body_height)
}

/// One grid step moves each of the two hops touching a key state by at most
/// gamma times the node spacing.
fn grid_tolerance(planner: &Planner, a: &Annulus) -> f64 {
    2.0 * planner.energy.gamma * planner.grid.spacing(a)
}

pub fn planners_vs_dense(n_scenes: usize) -> Check {
    let e = EnergyParams::default();
    let (alpha, gamma) = (e.alpha, e.gamma);
    let mut worst: f64 = 0.0;
    for (k, s) in random_scenes(n_scenes, 7, 500).iter().enumerate() {
        let ro = s.regions.ro.annulus();
        let rm = s.regions.rm.annulus();
        let tol_rm = grid_tolerance(&s.planner, &rm);
        let tol = grid_tolerance(&s.planner, &ro) + tol_rm;
        let a = s
            .planner
            .plan_deterministic(&pose(s.start), &pose(s.end), &s.regions.troi)
            .map_err(|e| format!("scene {k} a: {e}"))?;
        let oracle_a = dense_points(&rm, 720, 200)
            .iter()
            .map(|x| move_cost(&s.start, x, alpha, gamma) + move_cost(x, &s.end, alpha, gamma))
            .fold(f64::INFINITY, f64::min);
        let (b, c) = s
            .planner
            .plan_two_stage(&pose(s.start), &pose(s.end), &s.regions, &s.feas)
            .map_err(|e| format!("scene {k} b/c: {e}"))?;
        let mut oracle_b = f64::INFINITY;
        let mut oracle_c = f64::INFINITY;
        for x in dense_points(&ro, 240, 60) {
            let c0 = move_cost(&s.start, &x, alpha, gamma);
            let cu = move_cost(&x, &s.end, alpha, gamma);
            let cl = 2.0 * alpha + gamma * detour_length(&x, &s.end, &rm);
            let p = sample_fraction(&x, &s.samples, rm.r_inner, rm.r_outer);
            oracle_b = oracle_b.min(c0 + cl);
            oracle_c = oracle_c.min(c0 + p * cu + (1.0 - p) * cl);
        }
        for (name, got, want, tol) in [
            ("a", a.expected_cost, oracle_a, tol_rm),
            ("b", b.expected_cost, oracle_b, tol),
            ("c", c.expected_cost, oracle_c, tol),
        ] {
            worst = worst.max((got - want).abs() / tol);
            if (got - want).abs() > tol {
                return Err(format!(
                    "scene {k} {name}: planner {got} dense {want} (tol {tol})"
                ));
            }
        }
    }
    Ok(format!(
        "{n_scenes} scenes, worst gap {worst:.2} grid tolerances"
    ))
}

pub fn replan_vs_dense(n: usize) -> Check {
    let planner = Planner::with_defaults().unwrap();
    let e = planner.energy;
    let mut rng = rng(11);
    let mut worst: f64 = 0.0;
    for k in 0..n {
        let m = Point2::new(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5));
        let rm = planner.rm_at(m).annulus();
        let cur = m + Vector2::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let end = Point2::new(rng.random_range(1.0..2.5), 0.0);
        let x3 = planner
            .replan_manipulation(&cur, &end, &rm, false)
            .map_err(|e| format!("case {k}: {e}"))?;
        let r = (x3 - m).norm();
        if r < rm.r_inner - 1e-9 || r > rm.r_outer + 1e-9 {
            return Err(format!("case {k}: {x3} outside {rm:?}"));
        }
        let got = move_cost(&cur, &x3, e.alpha, e.gamma) + move_cost(&x3, &end, e.alpha, e.gamma);
        let want = 2.0 * e.alpha + e.gamma * detour_length(&cur, &end, &rm);
        let tol = grid_tolerance(&planner, &rm);
        worst = worst.max((got - want).abs() / tol);
        if (got - want).abs() > tol {
            return Err(format!("case {k}: replan {got} dense {want} (tol {tol})"));
        }
    }
    Ok(format!("{n} cases, worst gap {worst:.2} grid tolerances"))
}

/// `P(|x - M| in [r_in, r_out])` for `M ~ N(mu, var I)`, optionally truncated
/// to the TROI disc, by midpoint quadrature on a 400 x 400 grid.
pub fn quadrature(
    x: &Point2<f64>,
    troi: &Troi,
    var: f64,
    truncate: bool,
    r_in: f64,
    r_out: f64,
) -> f64 {
    const N: usize = 400;
    let mu = troi.center;
    let half = if truncate {
        troi.radius
    } else {
        6.0 * var.sqrt()
    };
    let h = 2.0 * half / N as f64;
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..N {
        for j in 0..N {
            let m = Point2::new(
                mu.x - half + (i as f64 + 0.5) * h,
                mu.y - half + (j as f64 + 0.5) * h,
            );
            if truncate && (m - mu).norm() > troi.radius {
                continue;
            }
            let w = (-(m - mu).norm_squared() / (2.0 * var)).exp();
            den += w;
            let d = (x - m).norm();
            if d >= r_in && d <= r_out {
                num += w;
            }
        }
    }
    num / den
}

pub fn p_feasible_vs_quadrature(n: usize) -> Check {
    let planner = Planner::with_defaults().unwrap();
    let shape = planner.rm_shape().annulus();
    let mut rng = rng(5);
    let samples = 10_000;
    let mut worst: f64 = 0.0;
    for k in 0..n {
        let troi = Troi::new(
            Point2::new(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)),
            rng.random_range(0.2..0.3),
        )
        .unwrap();
        let mode = if rng.random_bool(0.5) {
            SigmaMode::Linear
        } else {
            SigmaMode::Squared
        };
        let truncate = rng.random_bool(0.5);
        let var = mode.variance(troi.radius);
        let dist = MpoiDistribution::for_troi(&troi, mode, truncate);
        let spread = if truncate { troi.radius } else { var.sqrt() };
        let off = rng.random_range(0.0..(shape.r_outer + 2.0 * spread));
        let th: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let body = troi.center + Vector2::new(off * th.cos(), off * th.sin());
        let p = p_feasible(
            &body,
            &dist,
            &troi,
            |m| shape.translated(*m),
            samples,
            RngStream::new(9, k as u64),
        )
        .map_err(|e| format!("case {k}: {e}"))?;
        let q = quadrature(&body, &troi, var, truncate, shape.r_inner, shape.r_outer);
        let tol = (3.0 * (q * (1.0 - q) / samples as f64).sqrt()).max(0.02);
        worst = worst.max((p - q).abs() / tol);
        if (p - q).abs() > tol {
            return Err(format!(
                "case {k}: Monte Carlo {p} quadrature {q} (tol {tol})"
            ));
        }
    }
    Ok(format!(
        "{n} configurations, worst gap {worst:.2} tolerances"
    ))
}

/// CAPM against the decoupled plan, both scored by the CAPM objective with
/// the same MPOI samples.
pub fn capm_dominates_decoupled(n_scenes: usize) -> Check {
    let cfg = ExperimentConfig::default();
    let planner = cfg.planner().unwrap();
    let mut worst = f64::NEG_INFINITY;
    for t in 0..n_scenes as u64 {
        let (troi, mpoi) = cfg.draw_trial(t).map_err(|e| format!("scene {t}: {e}"))?;
        let l = cfg.path_lengths[t as usize % cfg.path_lengths.len()];
        let scene = cfg.scene(troi, mpoi, l);
        let regions = planner
            .regions(&troi)
            .map_err(|e| format!("scene {t}: {e}"))?;
        let samples = cfg
            .draw_samples(t, &troi)
            .map_err(|e| format!("scene {t}: {e}"))?;
        let feas = FeasibilityMap::new(&planner, &regions, samples);
        let (b, c) = planner
            .plan_two_stage(&scene.start, &scene.end, &regions, &feas)
            .map_err(|e| format!("scene {t}: {e}"))?;
        let (s, e) = (scene.start.position, scene.end.position);
        let score = |x1: &Point2<f64>, x3: Option<Point2<f64>>| {
            let x3 = x3.unwrap_or(*x1);
            two_stage_objective(&s, &e, x1, &x3, feas.p(x1), &planner.energy)
        };
        let (jb, jc) = (score(&b.x1, b.x3), score(&c.x1, c.x3));
        let tol = grid_tolerance(&planner, &regions.ro.annulus())
            + grid_tolerance(&planner, &regions.rm.annulus());
        worst = worst.max((jc - jb) / tol);
        if jc > jb + tol {
            return Err(format!("scene {t}: capm {jc} decoupled {jb} (tol {tol})"));
        }
    }
    Ok(format!(
        "{n_scenes} scenes, worst excess {worst:.2} grid tolerances"
    ))
}
