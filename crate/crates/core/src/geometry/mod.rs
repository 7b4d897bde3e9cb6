//! Object point clouds, gravity-aligned frames and 3D box fitting.
//!
//! Camera frame: +x right, +y down, +z forward. The gravity-aligned world frame keeps
//! +y along gravity (down), +z along the camera's forward direction projected onto the
//! horizontal plane, and +x completing a right-handed frame. Yaw rotates about world +y;
//! an object with yaw 0 faces the camera.

mod boxfit;
mod camera;
mod cloud;
mod dbscan;
mod frame;

pub use boxfit::{fit_box3d, min_area_rectangle, robust_bounds, BoxFit, BoxFitOptions, FitQuality, MinAreaRect};
pub use camera::{backproject, project, CameraIntrinsics, DepthMap};
pub use cloud::{extract_object_points, ObjectPointCloud};
pub use dbscan::{dbscan, dbscan_largest_cluster, DbscanParams};
pub use frame::{facing_world, gravity_frame, heading_world, yaw_rotation, GravityFrame};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

pub type Vec3 = Vector3<f64>;

/// Smallest half-extent a fitted box may have, in meters.
pub const MIN_HALF_EXTENT: f64 = 0.005;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("non-positive focal length (fx={fx}, fy={fy})")]
    NonPositiveFocal { fx: f64, fy: f64 },
    #[error("principal point ({cx}, {cy}) outside the {width}x{height} image")]
    PrincipalPointOutside { cx: f64, cy: f64, width: u32, height: u32 },
    #[error("grid size mismatch: {0}")]
    SizeMismatch(String),
    #[error("object has no valid points")]
    EmptyObject,
    #[error("gravity vector {0:?} is not unit length")]
    NotUnit([f64; 3]),
    #[error("gravity is parallel to the camera forward axis")]
    DegenerateGravity,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid box: {0}")]
    InvalidBox(String),
}

/// Gravity-aligned 3D box. The height axis is parallel to gravity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Box3D {
    /// Center in the camera frame, meters.
    pub center: [f64; 3],
    /// Half of (width, height, depth), meters.
    pub half_extents: [f64; 3],
    /// Rotation of the box axes about gravity, degrees.
    pub yaw_deg: f64,
}

impl Box3D {
    pub fn validate(&self) -> Result<(), GeometryError> {
        if !self.center.iter().all(|c| c.is_finite()) || !self.yaw_deg.is_finite() {
            return Err(GeometryError::InvalidBox("non-finite center or yaw".into()));
        }
        if !self.half_extents.iter().all(|h| h.is_finite() && *h > 0.0) {
            return Err(GeometryError::InvalidBox(format!(
                "half extents {:?} must be positive",
                self.half_extents
            )));
        }
        Ok(())
    }

    /// Full (width, height, depth).
    pub fn size(&self) -> [f64; 3] {
        self.half_extents.map(|h| 2.0 * h)
    }

    pub fn volume(&self) -> f64 {
        self.size().iter().product()
    }

    pub fn center_vec(&self) -> Vec3 {
        Vec3::from(self.center)
    }

    /// The eight corners in the camera frame.
    pub fn corners(&self, frame: &GravityFrame) -> [Vec3; 8] {
        let c = frame.to_world(&self.center_vec());
        let r = yaw_rotation(self.yaw_deg);
        let h = self.half_extents;
        let mut out = [Vec3::zeros(); 8];
        for (k, corner) in out.iter_mut().enumerate() {
            let s = |bit: usize| if k >> bit & 1 == 1 { 1.0 } else { -1.0 };
            let local = Vec3::new(s(0) * h[0], s(1) * h[1], s(2) * h[2]);
            *corner = frame.to_camera(&(c + r * local));
        }
        out
    }
}
