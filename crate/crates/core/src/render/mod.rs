//! Pinhole projection and soft silhouette rendering.

mod camera;
mod image;
mod raster;

pub use camera::{project, Camera, MIN_DEPTH};
pub use image::{mask_iou, SilhouetteImage};
pub(crate) use raster::{render_backward, render_forward, render_forward_update, RenderState};
pub use raster::{render_silhouette, render_silhouette_with_gradient, CUTOFF};
