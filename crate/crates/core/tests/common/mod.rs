//! Independent oracles and random fixtures shared by the integration tests.
#![allow(dead_code)]

use capm_core::constraints::{self, Mpoi, TaskParams, Troi};
use capm_core::{Annulus, EePose, Robot};
use nalgebra::{Point2, Point3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub mod checks;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random robot and task around the defaults.
pub fn random_setup(rng: &mut ChaCha8Rng) -> (Robot, TaskParams, f64) {
    let mut robot = Robot::default();
    let f = rng.random_range(450.0..750.0);
    robot.camera.focal_u = f;
    robot.camera.focal_v = f;
    robot.arm.reach_min = rng.random_range(0.10..0.20);
    robot.arm.reach_max = rng.random_range(0.60..0.90);
    robot.body_height = rng.random_range(0.5..1.0);
    let eps_min = rng.random_range(0.03..0.06);
    let task = TaskParams {
        delta: rng.random_range(0.04..0.10),
        eps_min,
        eps_max: eps_min + rng.random_range(0.03..0.06),
        ..TaskParams::default()
    };
    let r_w = rng.random_range(0.15..0.35);
    (robot, task, r_w)
}

/// Body distances from which a shoulder at height `h` reaches the point
/// `(s, z)` of the vertical plane through the target, the body lying on the
/// positive side: `(lowest non-negative, highest)`.
pub fn reach_interval(robot: &Robot, s: f64, z: f64) -> Option<(f64, f64)> {
    let dz = robot.body_height - z;
    let outer2 = robot.arm.reach_max.powi(2) - dz * dz;
    if outer2 < 0.0 {
        return None;
    }
    let outer = outer2.sqrt();
    let inner = (robot.arm.reach_min.powi(2) - dz * dz).max(0.0).sqrt();
    let hi = s + outer;
    if hi < 0.0 {
        return None;
    }
    let lo = if s - inner >= 0.0 {
        (s - outer).max(0.0)
    } else {
        (s + inner).max(0.0)
    };
    Some((lo, hi))
}

/// Brute-force region: random end-effector points in the vertical plane,
/// kept when `pred` holds for the pose aimed at the target, then resampled
/// in shrinking boxes around the points that set either edge.
pub fn sampled_region<P>(
    robot: &Robot,
    domain: [(f64, f64); 2],
    n: usize,
    rng: &mut ChaCha8Rng,
    pred: P,
) -> Option<(f64, f64)>
where
    P: Fn(&EePose) -> bool,
{
    let test = |s: f64, z: f64| -> Option<(f64, f64)> {
        if z <= 0.0 {
            return None;
        }
        let ee = EePose::aimed_at(Point3::new(s, 0.0, z), Point3::origin())?;
        if !pred(&ee) {
            return None;
        }
        reach_interval(robot, s, z)
    };
    let [(s0, s1), (z0, z1)] = domain;
    let mut lo: Option<(f64, [f64; 2])> = None;
    let mut hi: Option<(f64, [f64; 2])> = None;
    let keep =
        |s: f64, z: f64, lo: &mut Option<(f64, [f64; 2])>, hi: &mut Option<(f64, [f64; 2])>| {
            if let Some((a, b)) = test(s, z) {
                if lo.map_or(true, |(v, _)| a < v) {
                    *lo = Some((a, [s, z]));
                }
                if hi.map_or(true, |(v, _)| b > v) {
                    *hi = Some((b, [s, z]));
                }
            }
        };
    for _ in 0..n {
        let (s, z) = (rng.random_range(s0..s1), rng.random_range(z0..z1));
        keep(s, z, &mut lo, &mut hi);
    }
    let mut box_half = [(s1 - s0) / 20.0, (z1 - z0) / 20.0];
    for _ in 0..10 {
        for _ in 0..n / 20 {
            for best in [lo, hi].into_iter().flatten() {
                let [s, z] = best.1;
                let ds = rng.random_range(-box_half[0]..box_half[0]);
                let dz = rng.random_range(-box_half[1]..box_half[1]);
                keep(
                    (s + ds).clamp(s0, s1),
                    (z + dz).clamp(z0, z1),
                    &mut lo,
                    &mut hi,
                );
            }
        }
        box_half = [box_half[0] * 0.5, box_half[1] * 0.5];
    }
    Some((lo?.0, hi?.0))
}

pub fn oracle_ro(
    robot: &Robot,
    task: &TaskParams,
    r_w: f64,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Option<(f64, f64)> {
    let troi = Troi::new(Point2::origin(), r_w).unwrap();
    let reach = robot.arm.reach_max;
    let top = robot.body_height + reach;
    let domain = [(-reach, 4.0), (0.0, top)];
    sampled_region(robot, domain, n, rng, |ee| {
        constraints::nsv_indicator(ee, &robot.camera, &troi, task)
    })
}

pub fn oracle_rm(
    robot: &Robot,
    task: &TaskParams,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Option<(f64, f64)> {
    let mpoi = Mpoi::new(Point2::origin());
    let d = task.eps_max.sqrt();
    let domain = [(-d, d), (0.0, d)];
    sampled_region(robot, domain, n, rng, |ee| {
        constraints::epmc_indicator(ee, &mpoi, task)
    })
}

/// Body positions `x` with `annulus(x)` membership counted over a dense polar
/// grid; used where a plain containment test is wanted without the library.
pub fn in_annulus(a: &Annulus, x: &Point2<f64>) -> bool {
    let r = (x - a.center).norm();
    !a.empty && r >= a.r_inner && r <= a.r_outer
}

/// Strict move cost with the Euclidean metric: zero-length moves are excluded.
pub fn move_cost(a: &Point2<f64>, b: &Point2<f64>, alpha: f64, gamma: f64) -> f64 {
    let d = (b - a).norm();
    if d > 0.0 {
        alpha + gamma * d
    } else {
        f64::INFINITY
    }
}

/// Dense polar grid over an annulus, edges included.
pub fn dense_points(a: &Annulus, n_ang: usize, n_rad: usize) -> Vec<Point2<f64>> {
    let mut out = Vec::with_capacity(n_ang * n_rad);
    for j in 0..n_rad {
        let r = a.r_inner + (a.r_outer - a.r_inner) * j as f64 / (n_rad - 1) as f64;
        for i in 0..n_ang {
            let t = std::f64::consts::TAU * i as f64 / n_ang as f64;
            out.push(a.center + nalgebra::Vector2::new(r * t.cos(), r * t.sin()));
        }
    }
    out
}

/// Shortest `|x - q| + |q - e|` over `q` in the annulus (an infimum when
/// the best `q` would coincide with `x` or `e`).
pub fn detour_length(x: &Point2<f64>, e: &Point2<f64>, a: &Annulus) -> f64 {
    let c = a.center;
    let seg = e - x;
    let t = if seg.norm_squared() > 0.0 {
        ((c - x).dot(&seg) / seg.norm_squared()).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let d_min = (x + seg * t - c).norm();
    let d_max = (x - c).norm().max((e - c).norm());
    if d_min <= a.r_outer && d_max >= a.r_inner {
        return seg.norm();
    }
    // The sum of distances is convex, so off the segment its minimum over
    // the annulus lies on one of the two boundary circles.
    let f = |r: f64, th: f64| {
        let q = c + nalgebra::Vector2::new(r * th.cos(), r * th.sin());
        (q - x).norm() + (e - q).norm()
    };
    let mut best = f64::INFINITY;
    for r in [a.r_inner, a.r_outer] {
        if r == 0.0 {
            best = best.min(f(0.0, 0.0));
            continue;
        }
        let n = 256;
        let step = std::f64::consts::TAU / n as f64;
        let k = (0..n)
            .min_by(|&i, &j| f(r, i as f64 * step).total_cmp(&f(r, j as f64 * step)))
            .unwrap();
        // Golden-section search on the bracketing arc.
        let (mut lo, mut hi) = ((k as f64 - 1.0) * step, (k as f64 + 1.0) * step);
        let g = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..60 {
            let m1 = hi - g * (hi - lo);
            let m2 = lo + g * (hi - lo);
            if f(r, m1) < f(r, m2) {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        best = best.min(f(r, 0.5 * (lo + hi))).min(f(r, k as f64 * step));
    }
    best
}

/// Fraction of sample points `m` with `x` inside the shape re-centred at `m`.
pub fn sample_fraction(x: &Point2<f64>, samples: &[Point2<f64>], r_in: f64, r_out: f64) -> f64 {
    let hits = samples
        .iter()
        .filter(|m| {
            let d = (x - *m).norm();
            d >= r_in && d <= r_out
        })
        .count();
    hits as f64 / samples.len() as f64
}
