//! Pinhole stereo camera model and the disparity / depth / 3D conversions.
//!
//! Camera frame: x right, y down, z forward, matching image coordinates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maps::{DepthMap, DisparityMap};

/// Disparities at or below this value are treated as invalid by map-level
/// conversions instead of producing enormous depths.
pub const EPSILON_DISPARITY: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        if !(fx.is_finite() && fx > 0.0) {
            return Err(Error::InvalidCamera(format!(
                "fx must be finite and > 0, got {fx}"
            )));
        }
        if !(fy.is_finite() && fy > 0.0) {
            return Err(Error::InvalidCamera(format!(
                "fy must be finite and > 0, got {fy}"
            )));
        }
        if !(cx.is_finite() && cy.is_finite()) {
            return Err(Error::InvalidCamera(format!(
                "principal point must be finite, got ({cx}, {cy})"
            )));
        }
        Ok(Self { fx, fy, cx, cy })
    }

    pub fn fx(&self) -> f64 {
        self.fx
    }

    pub fn fy(&self) -> f64 {
        self.fy
    }

    pub fn cx(&self) -> f64 {
        self.cx
    }

    pub fn cy(&self) -> f64 {
        self.cy
    }

    /// Lift a pixel with known depth into the camera frame.
    pub fn backproject(&self, p: Pixel, z: f64) -> Result<Point3D> {
        if !(z.is_finite() && z > 0.0) {
            return Err(Error::InvalidDepth(z));
        }
        Ok(Point3D {
            x: (p.u - self.cx) * z / self.fx,
            y: (p.v - self.cy) * z / self.fy,
            z,
        })
    }

    pub fn project(&self, pt: Point3D) -> Result<Pixel> {
        if !(pt.z.is_finite() && pt.z > 0.0) {
            return Err(Error::BehindCamera(pt.z));
        }
        Ok(Pixel {
            u: self.fx * pt.x / pt.z + self.cx,
            v: self.fy * pt.y / pt.z + self.cy,
        })
    }

    /// Direction (not normalized, z = 1) of the ray through a pixel.
    pub fn ray_direction(&self, p: Pixel) -> [f64; 3] {
        [(p.u - self.cx) / self.fx, (p.v - self.cy) / self.fy, 1.0]
    }
}

/// Rectified stereo pair: shared intrinsics, right camera translated by
/// `baseline` meters along +x.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StereoRig {
    intrinsics: CameraIntrinsics,
    baseline: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RigDocument {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    baseline: f64,
}

impl StereoRig {
    pub fn new(intrinsics: CameraIntrinsics, baseline: f64) -> Result<Self> {
        if !(baseline.is_finite() && baseline > 0.0) {
            return Err(Error::InvalidCamera(format!(
                "baseline must be finite and > 0, got {baseline}"
            )));
        }
        Ok(Self {
            intrinsics,
            baseline,
        })
    }

    pub fn intrinsics(&self) -> &CameraIntrinsics {
        &self.intrinsics
    }

    pub fn baseline(&self) -> f64 {
        self.baseline
    }

    /// `fx * b`, the numerator of the disparity/depth relation.
    pub fn focal_baseline(&self) -> f64 {
        self.intrinsics.fx * self.baseline
    }

    pub fn disparity_to_depth(&self, d: f64) -> Result<f64> {
        if !(d.is_finite() && d > 0.0) {
            return Err(Error::InvalidDisparity(d));
        }
        Ok(self.focal_baseline() / d)
    }

    pub fn depth_to_disparity(&self, z: f64) -> Result<f64> {
        if !(z.is_finite() && z > 0.0) {
            return Err(Error::InvalidDepth(z));
        }
        Ok(self.focal_baseline() / z)
    }

    /// Per-pixel depth; pixels that are masked or have `d <= EPSILON_DISPARITY`
    /// come out masked.
    pub fn disparity_map_to_depth_map(&self, dm: &DisparityMap) -> DepthMap {
        let fb = self.focal_baseline();
        let mut out = DepthMap::masked(dm.width(), dm.height());
        for (i, d) in dm.iter_valid() {
            let d = f64::from(d);
            if d > EPSILON_DISPARITY {
                let z = (fb / d) as f32;
                if z.is_finite() && z > 0.0 {
                    out.set_index(i, z);
                }
            }
        }
        out
    }

    pub fn depth_map_to_disparity_map(&self, depth: &DepthMap) -> DisparityMap {
        let fb = self.focal_baseline();
        let mut out = DisparityMap::masked(depth.width(), depth.height());
        for (i, z) in depth.iter_valid() {
            let z = f64::from(z);
            if z > 0.0 {
                let d = (fb / z) as f32;
                if d.is_finite() && d > 0.0 {
                    out.set_index(i, d);
                }
            }
        }
        out
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: RigDocument = serde_json::from_str(text)?;
        let k = CameraIntrinsics::new(doc.fx, doc.fy, doc.cx, doc.cy)?;
        StereoRig::new(k, doc.baseline)
    }

    pub fn to_json(&self) -> String {
        let doc = RigDocument {
            fx: self.intrinsics.fx,
            fy: self.intrinsics.fy,
            cx: self.intrinsics.cx,
            cy: self.intrinsics.cy,
            baseline: self.baseline,
        };
        serde_json::to_string_pretty(&doc).expect("rig serializes")
    }
}

/// Image location in pixels; sub-pixel values are allowed.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pixel {
    pub u: f64,
    pub v: f64,
}

impl Pixel {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }
}

/// Point in the camera frame, meters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point3D {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3D {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}
