//! Pinhole camera model and a deterministic software rasterizer for
//! perspective views (color + metric depth) and top-down BEV images.

mod io;
mod raster;

use image::RgbImage;
use nalgebra::{Matrix3, Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use io::{read_pfm, read_png, write_pfm, write_png};
pub use raster::{render_bev, render_perspective};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.width > 0
            && self.height > 0
            && self.cx >= 0.0
            && self.cx < self.width as f64
            && self.cy >= 0.0
            && self.cy < self.height as f64;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidCamera(format!("bad intrinsics {self:?}")))
        }
    }

    /// Square image with roughly 90 degree horizontal field of view.
    pub fn square(size: u32) -> Self {
        let half = size as f64 / 2.0;
        Self {
            fx: half,
            fy: half,
            cx: half,
            cy: half,
            width: size,
            height: size,
        }
    }
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        Self::square(512)
    }
}

/// Camera orientation and center in the world frame. The rotation columns
/// are the camera x (image right), y (image down) and z (viewing direction)
/// axes expressed in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    rotation: Matrix3<f64>,
    position: Point3<f64>,
}

impl CameraPose {
    pub fn new(rotation: Matrix3<f64>, position: Point3<f64>) -> Result<Self> {
        let err = (rotation.transpose() * rotation - Matrix3::identity()).amax();
        let det = rotation.determinant();
        if !(err < 1e-6) || !((det - 1.0).abs() <= 1e-6) {
            return Err(Error::InvalidCamera(format!(
                "rotation is not orthonormal (|RtR - I| = {err:e}, det = {det})"
            )));
        }
        if !position.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidCamera("position is not finite".into()));
        }
        Ok(Self { rotation, position })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            position: Point3::origin(),
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn position(&self) -> &Point3<f64> {
        &self.position
    }

    /// Viewing direction in world coordinates.
    pub fn forward(&self) -> Vector3<f64> {
        self.rotation.column(2).into()
    }

    pub fn world_to_camera(&self, p: &Point3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (p - self.position)
    }

    pub fn camera_to_world(&self, v: &Vector3<f64>) -> Point3<f64> {
        self.position + self.rotation * v
    }
}

#[derive(Serialize, Deserialize)]
struct PoseRepr {
    rotation: [[f64; 3]; 3],
    position: [f64; 3],
}

impl Serialize for CameraPose {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let r = &self.rotation;
        PoseRepr {
            rotation: [
                [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
                [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
                [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            ],
            position: [self.position.x, self.position.y, self.position.z],
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for CameraPose {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = PoseRepr::deserialize(d)?;
        let m = Matrix3::from_fn(|i, j| r.rotation[i][j]);
        CameraPose::new(m, Point3::from(r.position)).map_err(serde::de::Error::custom)
    }
}

/// A pixel position with camera-frame depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelDepth {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

/// Pinhole projection; `None` when the point is at or behind the camera plane.
pub fn project(k: &CameraIntrinsics, pose: &CameraPose, p: &Point3<f64>) -> Option<PixelDepth> {
    let c = pose.world_to_camera(p);
    if c.z <= 0.0 {
        return None;
    }
    Some(PixelDepth {
        u: k.fx * c.x / c.z + k.cx,
        v: k.fy * c.y / c.z + k.cy,
        depth: c.z,
    })
}

/// Lifts pixel (u, v) at camera-frame depth `d` back to the world.
pub fn unproject(k: &CameraIntrinsics, pose: &CameraPose, u: f64, v: f64, d: f64) -> Result<Point3<f64>> {
    if !(d.is_finite() && d > 0.0) {
        return Err(Error::InvalidDepth(d));
    }
    let c = Vector3::new((u - k.cx) / k.fx * d, (v - k.cy) / k.fy * d, d);
    Ok(pose.camera_to_world(&c))
}

/// Per-pixel metric depth, row-major; `f32::INFINITY` marks background.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    width: u32,
    height: u32,
    data: Vec<f32>,
}

impl DepthImage {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![f32::INFINITY; (width * height) as usize],
        }
    }

    pub fn from_raw(width: u32, height: u32, data: Vec<f32>) -> Result<Self> {
        if data.len() != (width as usize) * (height as usize) {
            return Err(Error::LengthMismatch(data.len(), (width * height) as usize));
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, u: u32, v: u32) -> f32 {
        self.data[(v * self.width + u) as usize]
    }

    pub fn set(&mut self, u: u32, v: u32, d: f32) {
        self.data[(v * self.width + u) as usize] = d;
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderOptions {
    pub near: f64,
    pub far: f64,
    pub clear_color: [u8; 3],
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            near: 0.05,
            far: 100.0,
            clear_color: [0, 0, 0],
        }
    }
}

/// One rendered viewpoint.
#[derive(Debug, Clone)]
pub struct ViewBundle {
    pub color: RgbImage,
    pub depth: DepthImage,
    pub pose: CameraPose,
    pub intrinsics: CameraIntrinsics,
}

/// Top-down orthographic render. `origin_world_xy` is the world position of
/// the center of pixel (0, height - 1).
#[derive(Debug, Clone)]
pub struct BevImage {
    pub color: RgbImage,
    pub px_per_meter: f64,
    pub origin_world_xy: [f64; 2],
}

impl BevImage {
    /// Continuous pixel coordinates (column, row) of a world xy position.
    pub fn world_to_pixel(&self, x: f64, y: f64) -> (f64, f64) {
        let col = (x - self.origin_world_xy[0]) * self.px_per_meter;
        let row = (self.color.height() - 1) as f64 - (y - self.origin_world_xy[1]) * self.px_per_meter;
        (col, row)
    }

    pub fn pixel_to_world(&self, col: f64, row: f64) -> (f64, f64) {
        let x = self.origin_world_xy[0] + col / self.px_per_meter;
        let y = self.origin_world_xy[1] + ((self.color.height() - 1) as f64 - row) / self.px_per_meter;
        (x, y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn k100() -> CameraIntrinsics {
        CameraIntrinsics::new(100.0, 100.0, 64.0, 64.0, 128, 128).unwrap()
    }

    #[test]
    fn on_axis_point_hits_principal_point() {
        let p = project(&k100(), &CameraPose::identity(), &Point3::new(0.0, 0.0, 1.0)).unwrap();
        assert_eq!((p.u, p.v, p.depth), (64.0, 64.0, 1.0));
    }

    #[test]
    fn off_axis_point() {
        let p = project(&k100(), &CameraPose::identity(), &Point3::new(0.32, 0.0, 1.0)).unwrap();
        assert!((p.u - 96.0).abs() < 1e-12);
        assert_eq!(p.v, 64.0);
    }

    #[test]
    fn behind_camera() {
        assert!(project(&k100(), &CameraPose::identity(), &Point3::new(0.0, 0.0, -1.0)).is_none());
        assert!(project(&k100(), &CameraPose::identity(), &Point3::new(1.0, 0.0, 0.0)).is_none());
    }

    #[test]
    fn unproject_principal_point() {
        let w = unproject(&k100(), &CameraPose::identity(), 64.0, 64.0, 2.5).unwrap();
        assert_eq!(w, Point3::new(0.0, 0.0, 2.5));
    }

    #[test]
    fn unproject_rejects_bad_depth() {
        let k = k100();
        let id = CameraPose::identity();
        assert!(matches!(unproject(&k, &id, 1.0, 1.0, f64::INFINITY), Err(Error::InvalidDepth(_))));
        assert!(unproject(&k, &id, 1.0, 1.0, 0.0).is_err());
        assert!(unproject(&k, &id, 1.0, 1.0, -1.0).is_err());
        assert!(unproject(&k, &id, 1.0, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn random_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let k = k100();
        let r = nalgebra::Rotation3::from_euler_angles(0.3, -1.1, 2.0);
        let pose = CameraPose::new(*r.matrix(), Point3::new(1.0, -2.0, 0.5)).unwrap();
        for _ in 0..100 {
            let (u, v, d) = (rng.random::<f64>() * 128.0, rng.random::<f64>() * 128.0, 0.1 + rng.random::<f64>() * 20.0);
            let w = unproject(&k, &pose, u, v, d).unwrap();
            let p = project(&k, &pose, &w).unwrap();
            assert!((p.u - u).abs() < 1e-6 && (p.v - v).abs() < 1e-6 && (p.depth - d).abs() < 1e-6);
        }
    }

    #[test]
    fn intrinsics_and_pose_validation() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 0.0, 0.0, 10, 10).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 10.0, 0.0, 10, 10).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 0.0, 0.0, 0, 10).is_err());
        let skew = Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(CameraPose::new(skew, Point3::origin()).is_err());
        let flip = Matrix3::new(-1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(CameraPose::new(flip, Point3::origin()).is_err());
    }

    #[test]
    fn pose_json_round_trip() {
        let r = nalgebra::Rotation3::from_euler_angles(0.1, 0.2, 0.3);
        let pose = CameraPose::new(*r.matrix(), Point3::new(1.0, 2.0, 3.0)).unwrap();
        let s = serde_json::to_string(&pose).unwrap();
        let back: CameraPose = serde_json::from_str(&s).unwrap();
        assert_eq!(pose, back);
    }
}
