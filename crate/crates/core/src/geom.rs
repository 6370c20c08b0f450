//! Pinhole projective geometry between the ground plane (`z = 0`) and the
//! image of an end-effector mounted camera.
//!
//! The camera frame uses the optical axis as `+z`. Image rows (`+v`) follow
//! the projection of world `-z` onto the image plane, so an oblique camera
//! sees the ground at the bottom of the image and the horizon at the top.
//! When the boresight is vertical that projection vanishes and the image
//! `+u` axis is taken from world `+x` instead.

use std::sync::OnceLock;

use nalgebra::{Matrix3, Point2, Point3, Unit, Vector3};
use thiserror::Error;

use crate::constraints::Troi;

/// Minimum `|optical_axis.z|` for a ground homography to exist.
pub const AXIS_Z_FLOOR: f64 = 1e-6;
/// Minimum `|det(H)|` accepted for a ground homography.
pub const DETERMINANT_FLOOR: f64 = 1e-12;
/// Minimum homogeneous `w` magnitude before a point is treated as at infinity.
pub const W_FLOOR: f64 = 1e-12;
/// Number of boundary samples used to discretise a TROI ground disc.
pub const DISC_SAMPLES: usize = 256;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeomError {
    #[error("degenerate view: {0}")]
    DegenerateView(&'static str),
    #[error("point maps to infinity")]
    AtInfinity,
    #[error("pixel ray does not meet the ground in front of the camera")]
    BehindCamera,
    #[error("horizon is inside the field of view")]
    HorizonInView,
    #[error("invalid camera model: {0}")]
    InvalidCamera(String),
}

/// Pinhole intrinsics and image size in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraModel {
    pub focal_u: f64,
    pub focal_v: f64,
    pub center_u: f64,
    pub center_v: f64,
    pub width: u32,
    pub height: u32,
}

impl Default for CameraModel {
    fn default() -> Self {
        Self {
            focal_u: 600.0,
            focal_v: 600.0,
            center_u: 320.0,
            center_v: 240.0,
            width: 640,
            height: 480,
        }
    }
}

impl CameraModel {
    pub fn new(
        focal_u: f64,
        focal_v: f64,
        center_u: f64,
        center_v: f64,
        width: u32,
        height: u32,
    ) -> Result<Self, GeomError> {
        let cam = Self {
            focal_u,
            focal_v,
            center_u,
            center_v,
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<(), GeomError> {
        if !(self.focal_u > 0.0 && self.focal_v > 0.0) {
            return Err(GeomError::InvalidCamera(
                "focal lengths must be positive".into(),
            ));
        }
        if self.width < 2 || self.height < 2 {
            return Err(GeomError::InvalidCamera(
                "image must be at least 2x2".into(),
            ));
        }
        let (w, h) = (f64::from(self.width), f64::from(self.height));
        if !(1.0..=w).contains(&self.center_u) || !(1.0..=h).contains(&self.center_v) {
            return Err(GeomError::InvalidCamera(
                "principal point must lie inside the image".into(),
            ));
        }
        Ok(())
    }

    pub fn intrinsics(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.focal_u,
            0.0,
            self.center_u,
            0.0,
            self.focal_v,
            self.center_v,
            0.0,
            0.0,
            1.0,
        )
    }

    /// Image area `u_max * v_max` in square pixels.
    pub fn image_area(&self) -> f64 {
        f64::from(self.width) * f64::from(self.height)
    }

    /// Image corners in counterclockwise pixel order.
    pub fn corners(&self) -> [Point2<f64>; 4] {
        let (w, h) = (f64::from(self.width), f64::from(self.height));
        [
            Point2::new(0.0, 0.0),
            Point2::new(w, 0.0),
            Point2::new(w, h),
            Point2::new(0.0, h),
        ]
    }
}

/// End-effector position and boresight. The camera and the tool share the axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EePose {
    pub position: Point3<f64>,
    pub optical_axis: Unit<Vector3<f64>>,
}

impl EePose {
    pub fn new(position: Point3<f64>, axis: Vector3<f64>) -> Self {
        Self {
            position,
            optical_axis: Unit::new_normalize(axis),
        }
    }

    /// Pose at `position` with the boresight pointing at `target`.
    /// `None` when the two points coincide.
    pub fn aimed_at(position: Point3<f64>, target: Point3<f64>) -> Option<Self> {
        let dir = target - position;
        Unit::try_new(dir, 1e-12).map(|optical_axis| Self {
            position,
            optical_axis,
        })
    }

    /// Straight-down pose at `height` above `ground`.
    pub fn nadir(ground: Point2<f64>, height: f64) -> Self {
        Self::new(Point3::new(ground.x, ground.y, height), -Vector3::z())
    }

    /// World-to-camera rotation (rows are the camera axes in world frame).
    pub fn camera_rotation(&self) -> Matrix3<f64> {
        let z_c = self.optical_axis.into_inner();
        let down = -Vector3::z();
        let g = down - z_c * down.dot(&z_c);
        let (x_c, y_c) = if g.norm() > 1e-9 {
            let y_c = g.normalize();
            (y_c.cross(&z_c), y_c)
        } else {
            let xw = Vector3::x();
            let x_c = (xw - z_c * xw.dot(&z_c)).normalize();
            (x_c, z_c.cross(&x_c))
        };
        Matrix3::from_rows(&[x_c.transpose(), y_c.transpose(), z_c.transpose()])
    }
}

/// Ground-plane to image homography together with its inverse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    matrix: Matrix3<f64>,
    inverse: Matrix3<f64>,
}

impl Homography {
    pub fn from_matrix(matrix: Matrix3<f64>) -> Result<Self, GeomError> {
        if matrix.determinant().abs() < DETERMINANT_FLOOR {
            return Err(GeomError::DegenerateView("homography is singular"));
        }
        let inverse = matrix
            .try_inverse()
            .ok_or(GeomError::DegenerateView("homography is singular"))?;
        Ok(Self { matrix, inverse })
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.matrix
    }

    /// Homogeneous image coordinates of a ground point. The third component is
    /// the camera-frame depth of the point.
    pub fn project_homogeneous(&self, ground: &Point2<f64>) -> Vector3<f64> {
        self.matrix * Vector3::new(ground.x, ground.y, 1.0)
    }

    pub fn project_ground_point(&self, ground: &Point2<f64>) -> Result<Point2<f64>, GeomError> {
        let p = self.project_homogeneous(ground);
        if p.z.abs() < W_FLOOR {
            return Err(GeomError::AtInfinity);
        }
        Ok(Point2::new(p.x / p.z, p.y / p.z))
    }

    pub fn backproject_pixel(&self, pixel: &Point2<f64>) -> Result<Point2<f64>, GeomError> {
        let g = self.inverse * Vector3::new(pixel.x, pixel.y, 1.0);
        // Depth of the recovered ground point is 1 / g.z.
        if g.z <= W_FLOOR {
            return Err(GeomError::BehindCamera);
        }
        Ok(Point2::new(g.x / g.z, g.y / g.z))
    }
}

pub fn homography_from_ee(ee: &EePose, cam: &CameraModel) -> Result<Homography, GeomError> {
    if ee.position.z <= 0.0 {
        return Err(GeomError::DegenerateView("camera at or below the ground"));
    }
    if ee.optical_axis.z.abs() < AXIS_Z_FLOOR {
        return Err(GeomError::DegenerateView(
            "boresight parallel to the ground",
        ));
    }
    let r = ee.camera_rotation();
    let t = -(r * ee.position.coords);
    let mut rt = Matrix3::zeros();
    rt.set_column(0, &r.column(0));
    rt.set_column(1, &r.column(1));
    rt.set_column(2, &t);
    Homography::from_matrix(cam.intrinsics() * rt)
}

/// Back-projection of the image rectangle onto the ground.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundFootprint {
    corners: [Point2<f64>; 4],
}

impl GroundFootprint {
    pub fn corners(&self) -> &[Point2<f64>; 4] {
        &self.corners
    }

    pub fn area(&self) -> f64 {
        polygon_signed_area(&self.corners)
    }

    /// Inclusive containment test for a convex counterclockwise quadrilateral.
    pub fn contains(&self, p: &Point2<f64>) -> bool {
        let scale = self
            .corners
            .iter()
            .map(|c| c.coords.amax())
            .fold(p.coords.amax(), f64::max)
            .max(1.0);
        let tol = 1e-12 * scale * scale;
        (0..4).all(|i| {
            let a = self.corners[i];
            let b = self.corners[(i + 1) % 4];
            cross(&(b - a), &(p - a)) >= -tol
        })
    }

    pub fn is_convex_ccw(&self) -> bool {
        (0..4).all(|i| {
            let a = self.corners[i];
            let b = self.corners[(i + 1) % 4];
            let c = self.corners[(i + 2) % 4];
            cross(&(b - a), &(c - b)) > 0.0
        })
    }
}

pub fn fov_footprint(ee: &EePose, cam: &CameraModel) -> Result<GroundFootprint, GeomError> {
    let h = homography_from_ee(ee, cam)?;
    let mut corners = [Point2::origin(); 4];
    for (dst, px) in corners.iter_mut().zip(cam.corners()) {
        *dst = h
            .backproject_pixel(&px)
            .map_err(|_| GeomError::HorizonInView)?;
    }
    if polygon_signed_area(&corners) < 0.0 {
        corners.reverse();
    }
    Ok(GroundFootprint { corners })
}

/// Projected TROI disc area divided by the image area. The projection is not
/// clipped to the image.
pub fn troi_area_ratio(ee: &EePose, cam: &CameraModel, troi: &Troi) -> Result<f64, GeomError> {
    disc_area_ratio(ee, cam, troi.center, troi.radius, DISC_SAMPLES)
}

/// Area ratio of an arbitrary ground disc approximated by `samples` boundary points.
pub fn disc_area_ratio(
    ee: &EePose,
    cam: &CameraModel,
    center: Point2<f64>,
    radius: f64,
    samples: usize,
) -> Result<f64, GeomError> {
    let h = homography_from_ee(ee, cam)?;
    if radius == 0.0 {
        return Ok(0.0);
    }
    let mut image = Vec::with_capacity(samples);
    for g in disc_boundary(center, radius, samples) {
        let p = h.project_homogeneous(&g);
        if p.z <= W_FLOOR {
            return Err(GeomError::DegenerateView(
                "TROI disc crosses the camera plane",
            ));
        }
        image.push(Point2::new(p.x / p.z, p.y / p.z));
    }
    Ok(polygon_signed_area(&image).abs() / cam.image_area())
}

/// `m` evenly spaced points on a circle, counterclockwise from angle 0.
pub fn disc_boundary(
    center: Point2<f64>,
    radius: f64,
    m: usize,
) -> impl Iterator<Item = Point2<f64>> {
    let table = unit_circle(m);
    (0..m).map(move |i| {
        let (c, s) = table.get(i);
        Point2::new(center.x + radius * c, center.y + radius * s)
    })
}

enum CircleTable {
    Shared(&'static [(f64, f64)]),
    Computed(usize),
}

impl CircleTable {
    #[inline]
    fn get(&self, i: usize) -> (f64, f64) {
        match self {
            Self::Shared(t) => t[i],
            Self::Computed(m) => {
                let t = std::f64::consts::TAU * i as f64 / *m as f64;
                (t.cos(), t.sin())
            }
        }
    }
}

fn unit_circle(m: usize) -> CircleTable {
    static TABLE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    if m != DISC_SAMPLES {
        return CircleTable::Computed(m);
    }
    CircleTable::Shared(TABLE.get_or_init(|| {
        (0..DISC_SAMPLES)
            .map(|i| {
                let t = std::f64::consts::TAU * i as f64 / DISC_SAMPLES as f64;
                (t.cos(), t.sin())
            })
            .collect()
    }))
}

/// Shoelace signed area (positive for counterclockwise order).
pub fn polygon_signed_area(pts: &[Point2<f64>]) -> f64 {
    let n = pts.len();
    let twice: f64 = (0..n)
        .map(|i| {
            let a = pts[i];
            let b = pts[(i + 1) % n];
            a.x * b.y - b.x * a.y
        })
        .sum();
    0.5 * twice
}

fn cross(a: &nalgebra::Vector2<f64>, b: &nalgebra::Vector2<f64>) -> f64 {
    a.x * b.y - a.y * b.x
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn nadir_cam() -> (EePose, CameraModel) {
        (EePose::nadir(Point2::origin(), 1.0), CameraModel::default())
    }

    #[test]
    fn optical_axis_point_maps_to_principal_point() {
        let (ee, cam) = nadir_cam();
        let h = homography_from_ee(&ee, &cam).unwrap();
        let p = h.project_ground_point(&Point2::new(0.0, 0.0)).unwrap();
        assert_relative_eq!(p, Point2::new(320.0, 240.0), epsilon = 1e-9);
    }

    #[test]
    fn nadir_offset_projects_by_focal_over_height() {
        let (ee, cam) = nadir_cam();
        let h = homography_from_ee(&ee, &cam).unwrap();
        let p = h.project_ground_point(&Point2::new(0.1, 0.0)).unwrap();
        assert_relative_eq!(p, Point2::new(380.0, 240.0), epsilon = 1e-9);
        let g = h.backproject_pixel(&Point2::new(380.0, 240.0)).unwrap();
        assert_relative_eq!(g, Point2::new(0.1, 0.0), epsilon = 1e-12);
        let c = h.backproject_pixel(&Point2::new(320.0, 240.0)).unwrap();
        assert_relative_eq!(c, Point2::origin(), epsilon = 1e-12);
    }

    #[test]
    fn horizontal_boresight_is_degenerate() {
        let ee = EePose::new(Point3::new(0.0, 0.0, 1.0), Vector3::x());
        let err = homography_from_ee(&ee, &CameraModel::default()).unwrap_err();
        assert!(matches!(err, GeomError::DegenerateView(_)));
        let below = EePose::nadir(Point2::origin(), 0.0);
        assert!(homography_from_ee(&below, &CameraModel::default()).is_err());
    }

    #[test]
    fn upward_pitched_camera_rays_miss_the_ground() {
        // 45 degrees above horizontal: the corner rays point into the sky.
        let ee = EePose::new(Point3::new(0.0, 0.0, 1.0), Vector3::new(1.0, 0.0, 1.0));
        let h = homography_from_ee(&ee, &CameraModel::default()).unwrap();
        let err = h.backproject_pixel(&Point2::new(0.0, 0.0)).unwrap_err();
        assert_eq!(err, GeomError::BehindCamera);
    }

    #[test]
    fn nadir_footprint_extents() {
        let (ee, cam) = nadir_cam();
        let fp = fov_footprint(&ee, &cam).unwrap();
        let xs: Vec<f64> = fp.corners().iter().map(|c| c.x).collect();
        let ys: Vec<f64> = fp.corners().iter().map(|c| c.y).collect();
        let span = |v: &[f64]| {
            v.iter().cloned().fold(f64::MIN, f64::max) - v.iter().cloned().fold(f64::MAX, f64::min)
        };
        assert_relative_eq!(span(&xs), 2.0 * 320.0 / 600.0, epsilon = 1e-9);
        assert_relative_eq!(span(&ys), 2.0 * 240.0 / 600.0, epsilon = 1e-9);
        assert!(fp.is_convex_ccw());

        let high = EePose::nadir(Point2::origin(), 2.0);
        let fp2 = fov_footprint(&high, &cam).unwrap();
        assert_relative_eq!(fp2.area(), 4.0 * fp.area(), epsilon = 1e-9);
    }

    #[test]
    fn horizon_in_view_has_no_footprint() {
        // 20 degrees below horizontal; the half vertical field of view is ~21.8 degrees.
        let t = 20f64.to_radians();
        let ee = EePose::new(
            Point3::new(0.0, 0.0, 1.0),
            Vector3::new(t.cos(), 0.0, -t.sin()),
        );
        assert_eq!(
            fov_footprint(&ee, &CameraModel::default()).unwrap_err(),
            GeomError::HorizonInView
        );
    }

    #[test]
    fn oblique_camera_keeps_horizon_at_top_rows() {
        let t = 60f64.to_radians();
        let ee = EePose::new(
            Point3::new(0.0, 0.0, 1.0),
            Vector3::new(t.cos(), 0.0, -t.sin()),
        );
        let h = homography_from_ee(&ee, &CameraModel::default()).unwrap();
        let near = h.project_ground_point(&Point2::new(0.3, 0.0)).unwrap();
        let far = h.project_ground_point(&Point2::new(0.8, 0.0)).unwrap();
        assert!(
            far.y < near.y,
            "farther ground should appear higher in the image"
        );
        assert_relative_eq!(near.x, 320.0, epsilon = 1e-9);
    }

    #[test]
    fn nadir_area_ratio_matches_analytic_circle() {
        let (ee, cam) = nadir_cam();
        let troi = Troi::new(Point2::origin(), 0.25).unwrap();
        let ratio = troi_area_ratio(&ee, &cam, &troi).unwrap();
        let analytic = std::f64::consts::PI * 150.0 * 150.0 / (640.0 * 480.0);
        assert_relative_eq!(analytic, 0.2301, epsilon = 1e-4);
        assert!((ratio - analytic).abs() / analytic < 0.005);
    }

    #[test]
    fn zero_radius_disc_has_zero_ratio() {
        let (ee, cam) = nadir_cam();
        let ratio = disc_area_ratio(&ee, &cam, Point2::origin(), 0.0, DISC_SAMPLES).unwrap();
        assert_eq!(ratio, 0.0);
    }

    #[test]
    fn camera_validation() {
        assert!(CameraModel::new(0.0, 600.0, 320.0, 240.0, 640, 480).is_err());
        assert!(CameraModel::new(600.0, 600.0, 700.0, 240.0, 640, 480).is_err());
        assert!(CameraModel::new(600.0, 600.0, 320.0, 240.0, 1, 480).is_err());
        assert!(CameraModel::new(600.0, 600.0, 320.0, 240.0, 640, 480).is_ok());
    }
}
