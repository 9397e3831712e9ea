//! Stereo-vision geometry and dataset analysis.
//!
//! * [`camera`]: pinhole stereo model, disparity/depth/3D conversions.
//! * [`d2n`]: surface normals from disparity, plus the angle encoding.
//! * [`stats`]: dataset distribution histograms.
//! * [`metrics`]: EPE, normal angle errors and loss kernels.
//! * [`synth`]: analytic ray-cast ground-truth renderer.
//! * [`pointcloud`]: point cloud reconstruction and PLY.
//! * [`io`]: PFM and PNG readers/writers.

pub mod camera;
pub mod d2n;
pub mod error;
pub mod io;
pub mod maps;
pub mod metrics;
pub mod numeric;
pub mod pointcloud;
pub mod stats;
pub mod synth;

pub use camera::{CameraIntrinsics, Pixel, Point3D, StereoRig, EPSILON_DISPARITY};
pub use d2n::{
    angles_to_normal, d2n_transform, normal_to_angles, normalize_normals, D2NConfig, NormalAngles,
};
pub use error::{Error, Result};
pub use maps::{DepthMap, DisparityMap, NormalMap};
pub use pointcloud::{export_ply, import_ply, reconstruct, PlyFormat, PointCloud};
pub use stats::{merge_histograms, Histogram1D, Histogram2D, Mergeable};
pub use synth::{analytic_normal_oracle, render_stereo, RenderOutput, SceneSpec};

pub use image::RgbImage;
