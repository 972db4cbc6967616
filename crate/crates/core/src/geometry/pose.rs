use nalgebra::{Matrix3, Point3, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quat {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub w: f64,
}

impl Quat {
    pub const IDENTITY: Quat = Quat { x: 0.0, y: 0.0, z: 0.0, w: 1.0 };

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z + self.w * self.w).sqrt()
    }
}

/// Camera pose: camera-to-world rotation plus position. The camera frame
/// follows the pinhole convention (x right, y down, z forward).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub timestamp: f64,
    pub position: [f64; 3],
    pub orientation: Quat,
}

impl Pose {
    pub fn new(timestamp: f64, position: [f64; 3], orientation: Quat) -> Self {
        Pose { timestamp, position, orientation }
    }

    /// Level camera at `position` looking along heading `yaw` (radians from +x).
    pub fn looking(timestamp: f64, position: [f64; 3], yaw: f64) -> Self {
        let forward = Vector3::new(yaw.cos(), yaw.sin(), 0.0);
        let down = Vector3::new(0.0, 0.0, -1.0);
        let right = down.cross(&forward);
        let m = Matrix3::from_columns(&[right, down, forward]);
        let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(m));
        let q = q.into_inner();
        Pose {
            timestamp,
            position,
            orientation: Quat { x: q.i, y: q.j, z: q.k, w: q.w },
        }
    }

    pub fn is_normalized(&self) -> bool {
        (self.orientation.norm() - 1.0).abs() <= 1e-6
    }

    pub fn rotation(&self) -> UnitQuaternion<f64> {
        let o = self.orientation;
        UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(o.w, o.x, o.y, o.z))
    }

    pub fn camera_to_world(&self, p: [f64; 3]) -> [f64; 3] {
        let w = self.rotation() * Point3::new(p[0], p[1], p[2])
            + Vector3::new(self.position[0], self.position[1], self.position[2]);
        [w.x, w.y, w.z]
    }

    /// Heading of the optical axis projected on the horizontal plane.
    pub fn yaw(&self) -> f64 {
        let f = self.rotation() * Vector3::new(0.0, 0.0, 1.0);
        f.y.atan2(f.x)
    }

    pub fn xy(&self) -> [f64; 2] {
        [self.position[0], self.position[1]]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Intrinsics {
    pub fn unproject(&self, u: f64, v: f64, depth: f64) -> [f64; 3] {
        [(u - self.cx) / self.fx * depth, (v - self.cy) / self.fy * depth, depth]
    }

    /// Camera-frame point to pixel; `None` behind the camera.
    pub fn project(&self, p: [f64; 3]) -> Option<[f64; 2]> {
        if p[2] <= 1e-6 {
            return None;
        }
        Some([self.fx * p[0] / p[2] + self.cx, self.fy * p[1] / p[2] + self.cy])
    }

    pub fn horizontal_fov(&self) -> f64 {
        2.0 * (self.width as f64 / (2.0 * self.fx)).atan()
    }
}
