use serde::{Deserialize, Serialize};

use crate::diff::Vec3;
use crate::error::{Error, Result};

/// Closest depth accepted in front of the camera (meters).
pub const MIN_DEPTH: f64 = 1e-6;

/// Pinhole camera at the origin looking down +z, image y pointing down.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub width: usize,
    pub height: usize,
    /// Focal length in pixels; defaults to the image height.
    pub focal: f64,
    pub principal: [f64; 2],
}

impl Camera {
    /// Camera with the focal length fixed to the sensor height and the
    /// principal point at the image center.
    pub fn new(width: usize, height: usize) -> Result<Self> {
        let cam = Self { width, height, focal: height as f64, principal: [width as f64 / 2.0, height as f64 / 2.0] };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 8 || self.height < 8 {
            return Err(Error::InvalidArgument(format!(
                "camera must be at least 8x8 pixels, got {}x{}",
                self.width, self.height
            )));
        }
        if !(self.focal > 0.0) || !self.focal.is_finite() {
            return Err(Error::InvalidArgument(format!("focal length must be positive, got {}", self.focal)));
        }
        if !self.principal.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidArgument("principal point must be finite".into()));
        }
        Ok(())
    }

    /// Same field of view at another resolution.
    pub fn scaled_to(&self, width: usize, height: usize) -> Self {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        Self { width, height, focal: self.focal * sy, principal: [self.principal[0] * sx, self.principal[1] * sy] }
    }

    pub fn project_point(&self, p: &Vec3) -> Result<[f64; 2]> {
        if !(p.z > MIN_DEPTH) {
            return Err(Error::BehindCamera { z: p.z });
        }
        Ok(self.project_unchecked(p))
    }

    #[inline]
    pub(crate) fn project_unchecked(&self, p: &Vec3) -> [f64; 2] {
        let inv = 1.0 / p.z;
        [self.principal[0] + self.focal * p.x * inv, self.principal[1] + self.focal * p.y * inv]
    }

    /// Pulls a gradient on the projected pixel position back to the 3D point.
    #[inline]
    pub(crate) fn project_backward(&self, p: &Vec3, g: [f64; 2]) -> Vec3 {
        let inv = 1.0 / p.z;
        let f = self.focal * inv;
        Vec3::new(f * g[0], f * g[1], -f * inv * (p.x * g[0] + p.y * g[1]))
    }
}

/// Projects points to pixel coordinates.
pub fn project(camera: &Camera, points: &[Vec3]) -> Result<Vec<[f64; 2]>> {
    points.iter().map(|p| camera.project_point(p)).collect()
}
