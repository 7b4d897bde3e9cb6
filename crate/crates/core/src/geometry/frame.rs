use nalgebra::Matrix3;

use super::{GeometryError, Vec3};

/// Rotation from the camera frame to the gravity-aligned world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GravityFrame {
    /// Rows are the world axes expressed in camera coordinates.
    rotation: Matrix3<f64>,
}

impl GravityFrame {
    pub fn identity() -> Self {
        GravityFrame {
            rotation: Matrix3::identity(),
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn to_world(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    pub fn to_camera(&self, v: &Vec3) -> Vec3 {
        self.rotation.transpose() * v
    }

    /// Gravity direction in camera coordinates.
    pub fn gravity(&self) -> Vec3 {
        self.rotation.row(1).transpose()
    }
}

/// Builds the gravity-aligned frame for a unit gravity direction given in camera coordinates.
pub fn gravity_frame(gravity: [f64; 3]) -> Result<GravityFrame, GeometryError> {
    let g = Vec3::from(gravity);
    if !g.iter().all(|c| c.is_finite()) || (g.norm() - 1.0).abs() > 1e-6 {
        return Err(GeometryError::NotUnit(gravity));
    }
    let g = g.normalize();
    let forward = Vec3::z();
    let z = forward - g * forward.dot(&g);
    if z.norm() < 1e-6 {
        return Err(GeometryError::DegenerateGravity);
    }
    let z = z.normalize();
    let x = g.cross(&z);
    Ok(GravityFrame {
        rotation: Matrix3::from_rows(&[x.transpose(), g.transpose(), z.transpose()]),
    })
}

/// Rotation about world +y taking box-local axes to world axes.
pub fn yaw_rotation(yaw_deg: f64) -> Matrix3<f64> {
    let (s, c) = yaw_deg.to_radians().sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

/// World-frame facing direction of an object with the given yaw (yaw 0 faces the camera).
pub fn facing_world(yaw_deg: f64) -> Vec3 {
    -(yaw_rotation(yaw_deg) * Vec3::z())
}

/// World-frame horizontal direction for an observer heading; heading 0 looks along +z and
/// positive headings turn toward +x.
pub fn heading_world(heading_deg: f64) -> Vec3 {
    let (s, c) = heading_deg.to_radians().sin_cos();
    Vec3::new(s, 0.0, c)
}
