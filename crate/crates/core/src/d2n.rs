//! Disparity-to-normal transform.
//!
//! Each valid pixel is backprojected with its neighbors. Horizontal neighbors
//! give slope estimates `dz/dx`, vertical neighbors give `dz/dy`; the slopes
//! are averaged per axis and the raw normal `(dz/dx, dz/dy, -1)` is
//! normalized once. The result points toward the camera (`n_z < 0`).
//!
//! Depth discontinuities are not treated specially and produce steep normals.

use crate::camera::{Pixel, StereoRig, EPSILON_DISPARITY};
use crate::error::{Error, Result};
use crate::maps::{DisparityMap, NormalMap};
use crate::numeric::norm3;

/// Which of the four axis-aligned neighbors contribute slope estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Neighborhood {
    pub left: bool,
    pub right: bool,
    pub up: bool,
    pub down: bool,
}

impl Neighborhood {
    pub const FOUR: Neighborhood = Neighborhood {
        left: true,
        right: true,
        up: true,
        down: true,
    };
}

impl Default for Neighborhood {
    fn default() -> Self {
        Self::FOUR
    }
}

/// How per-neighbor slope estimates are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregation {
    #[default]
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct D2NConfig {
    pub neighborhood: Neighborhood,
    /// Neighbor estimates whose coordinate difference is below this (meters)
    /// are dropped.
    pub slope_epsilon: f64,
    pub aggregation: Aggregation,
}

impl Default for D2NConfig {
    fn default() -> Self {
        Self {
            neighborhood: Neighborhood::FOUR,
            slope_epsilon: 1e-9,
            aggregation: Aggregation::Mean,
        }
    }
}

impl D2NConfig {
    pub fn validate(&self) -> Result<()> {
        let n = &self.neighborhood;
        if !(n.left || n.right) || !(n.up || n.down) {
            return Err(Error::InvalidConfig(
                "D2N needs at least one horizontal and one vertical neighbor".into(),
            ));
        }
        if !(self.slope_epsilon.is_finite() && self.slope_epsilon >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "slope_epsilon must be finite and >= 0, got {}",
                self.slope_epsilon
            )));
        }
        Ok(())
    }
}

/// Estimates unit surface normals from a disparity map.
///
/// Pixels without a usable horizontal and vertical slope estimate are masked.
pub fn d2n_transform(dm: &DisparityMap, rig: &StereoRig, cfg: &D2NConfig) -> Result<NormalMap> {
    cfg.validate()?;
    let (w, h) = dm.dims();
    let k = rig.intrinsics();
    let fb = rig.focal_baseline();

    let points: Vec<Option<[f64; 3]>> = (0..w * h)
        .map(|i| {
            let d = f64::from(dm.get_index(i)?);
            if d <= EPSILON_DISPARITY {
                return None;
            }
            let z = fb / d;
            let p = k
                .backproject(Pixel::new((i % w) as f64, (i / w) as f64), z)
                .ok()?;
            Some(p.to_array())
        })
        .collect();

    let nb = cfg.neighborhood;
    let eps = cfg.slope_epsilon;
    let mut out = NormalMap::masked(w, h);

    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let Some(pi) = points[i] else { continue };

            let mut x_neighbors = [None; 2];
            if nb.left && x > 0 {
                x_neighbors[0] = points[i - 1];
            }
            if nb.right && x + 1 < w {
                x_neighbors[1] = points[i + 1];
            }
            let mut y_neighbors = [None; 2];
            if nb.up && y > 0 {
                y_neighbors[0] = points[i - w];
            }
            if nb.down && y + 1 < h {
                y_neighbors[1] = points[i + w];
            }

            let sx = mean_slope(pi, &x_neighbors, 0, eps, cfg.aggregation);
            let sy = mean_slope(pi, &y_neighbors, 1, eps, cfg.aggregation);
            let (Some(sx), Some(sy)) = (sx, sy) else {
                continue;
            };

            let raw = [sx, sy, -1.0];
            let len = norm3(raw);
            if len.is_finite() && len > 0.0 {
                out.set_index(
                    i,
                    [
                        (raw[0] / len) as f32,
                        (raw[1] / len) as f32,
                        (raw[2] / len) as f32,
                    ],
                );
            }
        }
    }
    Ok(out)
}

/// Mean of `(z_j - z_i) / (c_j - c_i)` over the available neighbors, where `c`
/// is the coordinate selected by `axis`.
fn mean_slope(
    pi: [f64; 3],
    neighbors: &[Option<[f64; 3]>; 2],
    axis: usize,
    eps: f64,
    aggregation: Aggregation,
) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0u32;
    for pj in neighbors.iter().flatten() {
        let dc = pj[axis] - pi[axis];
        if dc.abs() < eps || dc == 0.0 {
            continue;
        }
        let s = (pj[2] - pi[2]) / dc;
        if s.is_finite() {
            sum += s;
            n += 1;
        }
    }
    match (aggregation, n) {
        (_, 0) => None,
        (Aggregation::Mean, n) => Some(sum / f64::from(n)),
    }
}

/// Spherical encoding of a normal: azimuth in the image plane and elevation
/// out of it, both in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalAngles {
    /// `atan2(n_y, n_x)` wrapped to `[0, 360)`.
    pub alpha: f64,
    /// `atan2(n_z, |(n_x, n_y)|)`; camera-visible surfaces lie in `[-90, 0]`.
    pub beta: f64,
}

const UNIT_TOLERANCE: f64 = 1e-6;

pub fn normal_to_angles(n: [f64; 3]) -> Result<NormalAngles> {
    let len = norm3(n);
    if !len.is_finite() || (len - 1.0).abs() > UNIT_TOLERANCE {
        return Err(Error::NonUnitNormal(n));
    }
    let planar = n[0].hypot(n[1]);
    if planar == 0.0 {
        // Degenerate at the poles: alpha is pinned to 0.
        let beta = if n[2] < 0.0 { -90.0 } else { 90.0 };
        return Ok(NormalAngles { alpha: 0.0, beta });
    }
    let mut alpha = n[1].atan2(n[0]).to_degrees();
    if alpha < 0.0 {
        alpha += 360.0;
    }
    if alpha >= 360.0 {
        alpha = 0.0;
    }
    let beta = n[2].atan2(planar).to_degrees();
    Ok(NormalAngles { alpha, beta })
}

pub fn angles_to_normal(a: NormalAngles) -> Result<[f64; 3]> {
    if !(a.alpha.is_finite() && (0.0..360.0).contains(&a.alpha)) {
        return Err(Error::AngleDomain(format!(
            "alpha {} not in [0, 360)",
            a.alpha
        )));
    }
    if !(a.beta.is_finite() && (-90.0..=90.0).contains(&a.beta)) {
        return Err(Error::AngleDomain(format!(
            "beta {} not in [-90, 90]",
            a.beta
        )));
    }
    if a.beta.abs() == 90.0 {
        return Ok([0.0, 0.0, a.beta.signum()]);
    }
    let (sa, ca) = a.alpha.to_radians().sin_cos();
    let (sb, cb) = a.beta.to_radians().sin_cos();
    Ok([cb * ca, cb * sa, sb])
}

/// Rescales every valid vector to unit length; zero or non-finite vectors are
/// masked.
pub fn normalize_normals(nm: &NormalMap) -> NormalMap {
    let mut out = NormalMap::masked(nm.width(), nm.height());
    for (i, n) in nm.iter_valid() {
        let v = n.map(f64::from);
        let len = norm3(v);
        if len.is_finite() && len > 0.0 {
            out.set_index(i, v.map(|c| (c / len) as f32));
        }
    }
    out
}
