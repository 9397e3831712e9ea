//! Evaluation metrics and loss kernels over disparity and normal maps.
//!
//! All reductions run over pixels valid in both inputs, in row-major order,
//! with compensated summation.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::maps::{ensure_same_dims, DisparityMap, NormalMap};
use crate::numeric::{norm3, CompensatedSum};

/// Number of scales in a disparity loss pyramid.
pub const PYRAMID_LEVELS: usize = 7;

/// Toolkit default per-scale weights, full resolution first.
pub const DEFAULT_SCALE_WEIGHTS: [f64; PYRAMID_LEVELS] =
    [0.32, 0.16, 0.08, 0.04, 0.02, 0.01, 0.005];

/// Accuracy thresholds, degrees; comparisons are strict.
pub const ANGLE_THRESHOLDS: [f64; 3] = [11.25, 22.5, 30.0];

fn joint_disparity<'a>(
    pred: &'a DisparityMap,
    gt: &'a DisparityMap,
) -> Result<impl Iterator<Item = (usize, f64, f64)> + 'a> {
    ensure_same_dims("prediction vs ground truth", pred.dims(), gt.dims())?;
    Ok(gt
        .iter_valid()
        .filter_map(|(i, g)| pred.get_index(i).map(|p| (i, f64::from(p), f64::from(g)))))
}

/// Mean absolute disparity error in pixels.
pub fn epe(pred: &DisparityMap, gt: &DisparityMap) -> Result<f64> {
    let (sum, n) = epe_parts(pred, gt)?;
    if n == 0 {
        return Err(Error::NoValidPixels);
    }
    Ok(sum.value() / n as f64)
}

/// Sum of absolute errors and the pixel count, for pooling across samples.
pub fn epe_parts(pred: &DisparityMap, gt: &DisparityMap) -> Result<(CompensatedSum, usize)> {
    let mut acc = CompensatedSum::new();
    let mut n = 0;
    for (_, p, g) in joint_disparity(pred, gt)? {
        acc.add((p - g).abs());
        n += 1;
    }
    Ok((acc, n))
}

/// Per-pixel `|pred - gt|`; pixels not valid in both maps are masked.
pub fn epe_map(pred: &DisparityMap, gt: &DisparityMap) -> Result<DisparityMap> {
    let mut out = DisparityMap::masked(gt.width(), gt.height());
    for (i, p, g) in joint_disparity(pred, gt)? {
        out.set_index(i, (p - g).abs() as f32);
    }
    Ok(out)
}

pub fn smooth_l1(x: f64) -> f64 {
    let a = x.abs();
    if a < 1.0 {
        0.5 * x * x
    } else {
        a - 0.5
    }
}

/// Mean smooth-L1 of `gt - pred` over jointly valid pixels.
pub fn scale_loss(pred: &DisparityMap, gt: &DisparityMap) -> Result<f64> {
    let mut acc = CompensatedSum::new();
    let mut n = 0usize;
    for (_, p, g) in joint_disparity(pred, gt)? {
        acc.add(smooth_l1(g - p));
        n += 1;
    }
    if n == 0 {
        return Err(Error::NoValidPixels);
    }
    Ok(acc.value() / n as f64)
}

/// Halves a disparity map: each output pixel is the mean of the valid pixels
/// of its 2x2 parent block, divided by two because disparity scales with image
/// width. Blocks with no valid parent stay masked.
pub fn downsample_disparity(dm: &DisparityMap) -> DisparityMap {
    let (w, h) = dm.dims();
    let (ow, oh) = (w.div_ceil(2), h.div_ceil(2));
    let mut out = DisparityMap::masked(ow, oh);
    for oy in 0..oh {
        for ox in 0..ow {
            let mut sum = 0.0f64;
            let mut n = 0u32;
            for (x, y) in [
                (2 * ox, 2 * oy),
                (2 * ox + 1, 2 * oy),
                (2 * ox, 2 * oy + 1),
                (2 * ox + 1, 2 * oy + 1),
            ] {
                if let Some(d) = dm.get(x, y) {
                    sum += f64::from(d);
                    n += 1;
                }
            }
            if n > 0 {
                out.set(ox, oy, (sum / f64::from(n) * 0.5) as f32);
            }
        }
    }
    out
}

/// Seven-level pyramid; level `s` is `ceil(H / 2^s) x ceil(W / 2^s)`.
pub fn build_gt_pyramid(gt: &DisparityMap) -> Vec<DisparityMap> {
    let mut levels = Vec::with_capacity(PYRAMID_LEVELS);
    levels.push(gt.clone());
    for s in 1..PYRAMID_LEVELS {
        let next = downsample_disparity(&levels[s - 1]);
        levels.push(next);
    }
    levels
}

/// Predicted disparities at seven scales plus their loss weights.
#[derive(Debug, Clone)]
pub struct LossPyramid {
    levels: Vec<DisparityMap>,
    weights: [f64; PYRAMID_LEVELS],
}

impl LossPyramid {
    pub fn new(levels: Vec<DisparityMap>, weights: [f64; PYRAMID_LEVELS]) -> Result<Self> {
        if levels.len() != PYRAMID_LEVELS {
            return Err(Error::DimensionMismatch(format!(
                "loss pyramid needs {PYRAMID_LEVELS} levels, got {}",
                levels.len()
            )));
        }
        for s in 1..PYRAMID_LEVELS {
            let (pw, ph) = levels[s - 1].dims();
            let expected = (pw.div_ceil(2), ph.div_ceil(2));
            ensure_same_dims(&format!("pyramid level {s}"), levels[s].dims(), expected)?;
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidConfig(format!(
                "scale weights must be finite and >= 0, got {weights:?}"
            )));
        }
        Ok(Self { levels, weights })
    }

    pub fn levels(&self) -> &[DisparityMap] {
        &self.levels
    }

    pub fn weights(&self) -> &[f64; PYRAMID_LEVELS] {
        &self.weights
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultiscaleLoss {
    pub total: f64,
    /// Unweighted loss per scale; `None` where the weight is zero and the
    /// scale was skipped.
    pub per_scale: Vec<Option<f64>>,
}

/// `sum_s w_s * scale_loss(pred_s, gt_s)` against the ground-truth pyramid.
/// Scales with zero weight are not evaluated.
pub fn multiscale_disparity_loss(p: &LossPyramid, gt: &DisparityMap) -> Result<MultiscaleLoss> {
    let gt_levels = build_gt_pyramid(gt);
    let mut total = CompensatedSum::new();
    let mut per_scale = Vec::with_capacity(PYRAMID_LEVELS);
    for ((pred, gt_s), &w) in p.levels.iter().zip(&gt_levels).zip(&p.weights) {
        ensure_same_dims("pyramid level vs ground truth", pred.dims(), gt_s.dims())?;
        if w == 0.0 {
            per_scale.push(None);
            continue;
        }
        let l = scale_loss(pred, gt_s)?;
        total.add(w * l);
        per_scale.push(Some(l));
    }
    Ok(MultiscaleLoss {
        total: total.value(),
        per_scale,
    })
}

fn joint_normals<'a>(
    pred: &'a NormalMap,
    gt: &'a NormalMap,
) -> Result<impl Iterator<Item = (usize, [f64; 3], [f64; 3])> + 'a> {
    ensure_same_dims("prediction vs ground truth", pred.dims(), gt.dims())?;
    Ok(gt.iter_valid().filter_map(|(i, g)| {
        pred.get_index(i)
            .map(|p| (i, p.map(f64::from), g.map(f64::from)))
    }))
}

/// Mean squared Euclidean distance between unit normals.
pub fn normal_loss(pred: &NormalMap, gt: &NormalMap) -> Result<f64> {
    let mut acc = CompensatedSum::new();
    let mut n = 0usize;
    for (_, p, g) in joint_normals(pred, gt)? {
        let d = [p[0] - g[0], p[1] - g[1], p[2] - g[2]];
        acc.add(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
        n += 1;
    }
    if n == 0 {
        return Err(Error::NoValidPixels);
    }
    Ok(acc.value() / n as f64)
}

/// Angle between two unit vectors in degrees, `acos(clamp(a . b))` evaluated
/// as `2 atan2(|a - b|, |a + b|)`, which is exactly zero for identical
/// vectors and stays accurate near 0 and 180 degrees.
pub fn angle_between_deg(a: [f64; 3], b: [f64; 3]) -> f64 {
    let diff = norm3([a[0] - b[0], a[1] - b[1], a[2] - b[2]]);
    let sum = norm3([a[0] + b[0], a[1] + b[1], a[2] + b[2]]);
    (2.0 * diff.atan2(sum)).to_degrees()
}

/// Per-pixel angular error in degrees over jointly valid pixels.
pub fn normal_angle_map(pred: &NormalMap, gt: &NormalMap) -> Result<DisparityMap> {
    let mut out = DisparityMap::masked(gt.width(), gt.height());
    for (i, p, g) in joint_normals(pred, gt)? {
        out.set_index(i, angle_between_deg(p, g) as f32);
    }
    Ok(out)
}

/// Angular errors in degrees, row-major over jointly valid pixels.
pub fn normal_angle_list(pred: &NormalMap, gt: &NormalMap) -> Result<Vec<f64>> {
    Ok(joint_normals(pred, gt)?
        .map(|(_, p, g)| angle_between_deg(p, g))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormalErrorStats {
    pub mean_deg: f64,
    pub median_deg: f64,
    pub frac_11_25: f64,
    pub frac_22_5: f64,
    pub frac_30: f64,
}

pub fn normal_angle_errors(pred: &NormalMap, gt: &NormalMap) -> Result<NormalErrorStats> {
    normal_error_stats(normal_angle_list(pred, gt)?)
}

/// Summary statistics of a set of angular errors. The median is exact; for an
/// even count it is the mean of the two middle values.
pub fn normal_error_stats(mut angles: Vec<f64>) -> Result<NormalErrorStats> {
    let n = angles.len();
    if n == 0 {
        return Err(Error::NoValidPixels);
    }
    let mean = angles.iter().copied().collect::<CompensatedSum>().value() / n as f64;
    let below = |t: f64| angles.iter().filter(|&&a| a < t).count() as f64 / n as f64;
    let fracs = ANGLE_THRESHOLDS.map(below);

    let mid = n / 2;
    let (_, &mut hi, _) = angles.select_nth_unstable_by(mid, f64::total_cmp);
    let median = if n % 2 == 1 {
        hi
    } else {
        let lo = angles[..mid]
            .iter()
            .copied()
            .max_by(f64::total_cmp)
            .expect("non-empty lower half");
        0.5 * (lo + hi)
    };

    Ok(NormalErrorStats {
        mean_deg: mean,
        median_deg: median,
        frac_11_25: fracs[0],
        frac_22_5: fracs[1],
        frac_30: fracs[2],
    })
}
