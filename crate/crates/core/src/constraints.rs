//! Binary task-constraint indicators for close-up perception and manipulation.

use nalgebra::{Point2, Point3};
use thiserror::Error;

use crate::geom::{self, CameraModel, EePose, DISC_SAMPLES};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("{name} = {value} is out of range ({rule})")]
    OutOfRange {
        name: &'static str,
        value: f64,
        rule: &'static str,
    },
}

/// Target region of interest: a half-ball on the ground used via its ground disc.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Troi {
    pub center: Point2<f64>,
    pub radius: f64,
}

impl Troi {
    pub fn new(center: Point2<f64>, radius: f64) -> Result<Self, ParamError> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(ParamError::OutOfRange {
                name: "troi.radius",
                value: radius,
                rule: "radius > 0",
            });
        }
        Ok(Self { center, radius })
    }

    pub fn center3(&self) -> Point3<f64> {
        Point3::new(self.center.x, self.center.y, 0.0)
    }

    pub fn contains(&self, p: &Point2<f64>) -> bool {
        (p - self.center).norm_squared() <= self.radius * self.radius
    }
}

/// Manipulation point of interest on the ground.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mpoi {
    pub point: Point2<f64>,
}

impl Mpoi {
    pub fn new(point: Point2<f64>) -> Self {
        Self { point }
    }

    pub fn point3(&self) -> Point3<f64> {
        Point3::new(self.point.x, self.point.y, 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskParams {
    /// Minimum image-area ratio of the projected TROI.
    pub delta: f64,
    /// Squared-distance band for the tool, in m^2.
    pub eps_min: f64,
    pub eps_max: f64,
    /// Ticks the manipulation pose must be held.
    pub xi: u32,
    /// Maximum angle between the tool axis and the direction to the MPOI (rad).
    pub aim_tolerance: f64,
}

impl Default for TaskParams {
    fn default() -> Self {
        Self {
            delta: 0.05,
            eps_min: 0.05,
            eps_max: 0.10,
            xi: 3,
            aim_tolerance: 2f64.to_radians(),
        }
    }
}

impl TaskParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(ParamError::OutOfRange {
                name: "task.delta",
                value: self.delta,
                rule: "0 < delta < 1",
            });
        }
        if !(self.eps_min >= 0.0 && self.eps_min < self.eps_max) {
            return Err(ParamError::OutOfRange {
                name: "task.eps_min",
                value: self.eps_min,
                rule: "0 <= eps_min < eps_max",
            });
        }
        if self.xi < 1 {
            return Err(ParamError::OutOfRange {
                name: "task.xi",
                value: f64::from(self.xi),
                rule: "xi >= 1",
            });
        }
        if !(self.aim_tolerance >= 0.0) {
            return Err(ParamError::OutOfRange {
                name: "task.aim_tolerance_deg",
                value: self.aim_tolerance.to_degrees(),
                rule: ">= 0",
            });
        }
        Ok(())
    }

    /// Midpoint of the squared-distance band.
    pub fn eps_mid(&self) -> f64 {
        0.5 * (self.eps_min + self.eps_max)
    }
}

/// 1 iff the TROI ground disc (boundary samples and center) lies inside the
/// camera footprint. Degenerate views count as not covered.
pub fn coverage_indicator(ee: &EePose, cam: &CameraModel, troi: &Troi) -> bool {
    let Ok(fp) = geom::fov_footprint(ee, cam) else {
        return false;
    };
    if !fp.contains(&troi.center) {
        return false;
    }
    // Strided order rejects a partly covered disc after a few samples.
    let pts: Vec<Point2<f64>> =
        geom::disc_boundary(troi.center, troi.radius, DISC_SAMPLES).collect();
    const STRIDE: usize = 16;
    (0..STRIDE).all(|k| pts.iter().skip(k).step_by(STRIDE).all(|p| fp.contains(p)))
}

/// Next sufficient view: coverage and target resolution together.
pub fn nsv_indicator(ee: &EePose, cam: &CameraModel, troi: &Troi, params: &TaskParams) -> bool {
    coverage_indicator(ee, cam, troi)
        && geom::troi_area_ratio(ee, cam, troi).is_ok_and(|r| r >= params.delta)
}

/// Squared-distance part of the manipulation pose condition.
pub fn epmc_distance_ok(position: &Point3<f64>, mpoi: &Mpoi, params: &TaskParams) -> bool {
    let d2 = (position - mpoi.point3()).norm_squared();
    d2 >= params.eps_min && d2 <= params.eps_max
}

/// Tool axis within the aiming tolerance of the MPOI direction.
pub fn aimed_at(ee: &EePose, mpoi: &Mpoi, params: &TaskParams) -> bool {
    let to_target = mpoi.point3() - ee.position;
    let n = to_target.norm();
    if n < 1e-12 {
        return true;
    }
    let cos = (ee.optical_axis.dot(&to_target) / n).clamp(-1.0, 1.0);
    cos.acos() <= params.aim_tolerance
}

pub fn epmc_indicator(ee: &EePose, mpoi: &Mpoi, params: &TaskParams) -> bool {
    epmc_distance_ok(&ee.position, mpoi, params) && aimed_at(ee, mpoi, params)
}

/// Manipulation temporal condition.
pub fn mtc_check(hold_ticks: u32, epmc_held: bool, params: &TaskParams) -> bool {
    epmc_held && hold_ticks >= params.xi
}
