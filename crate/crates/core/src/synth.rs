//! Analytic ray-cast renderer producing rectified stereo pairs with exact
//! ground-truth disparity, depth and normals.
//!
//! Shading is flat Lambertian with one point light at the left camera center,
//! so a surface point has the same brightness in both views. Rendering is
//! deterministic: no sampling, no noise.

use image::{Rgb, RgbImage};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::camera::{Pixel, StereoRig};
use crate::error::{Error, Result};
use crate::maps::{DepthMap, DisparityMap, NormalMap};
use crate::numeric::{dot3, norm3, scale3, sub3};

const T_MIN: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Shape {
    /// Infinite plane through `point` with the given normal.
    Plane {
        point: [f64; 3],
        normal: [f64; 3],
    },
    Sphere {
        center: [f64; 3],
        radius: f64,
    },
    /// Axis-aligned box.
    Box {
        min: [f64; 3],
        max: [f64; 3],
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    #[serde(flatten)]
    pub shape: Shape,
    #[serde(default = "default_albedo")]
    pub albedo: [u8; 3],
}

fn default_albedo() -> [u8; 3] {
    [200, 200, 200]
}

fn default_gain() -> f64 {
    1.0
}

/// Declarative scene. Pixels whose ray hits nothing are background: black in
/// the images and masked in every ground-truth map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub primitives: Vec<Primitive>,
    /// Global brightness multiplier; shaded values above 255 clip.
    #[serde(default = "default_gain")]
    pub gain: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            primitives: Vec::new(),
            gain: 1.0,
        }
    }
}

impl SceneSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let scene: SceneSpec = serde_json::from_str(text)?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |v: &[f64]| v.iter().all(|c| c.is_finite());
        if !(self.gain.is_finite() && self.gain >= 0.0) {
            return Err(Error::InvalidScene(format!(
                "gain must be >= 0, got {}",
                self.gain
            )));
        }
        for (i, p) in self.primitives.iter().enumerate() {
            let bad = |msg: &str| Err(Error::InvalidScene(format!("primitive {i}: {msg}")));
            match &p.shape {
                Shape::Plane { point, normal } => {
                    if !finite(point) || !finite(normal) {
                        return bad("non-finite plane parameters");
                    }
                    if norm3(*normal) == 0.0 {
                        return bad("plane normal is zero");
                    }
                }
                Shape::Sphere { center, radius } => {
                    if !finite(center) || !radius.is_finite() || *radius <= 0.0 {
                        return bad("sphere needs a finite center and radius > 0");
                    }
                }
                Shape::Box { min, max } => {
                    if !finite(min) || !finite(max) {
                        return bad("non-finite box corners");
                    }
                    if (0..3).any(|k| min[k] >= max[k]) {
                        return bad("box min must be < max componentwise");
                    }
                }
            }
        }
        Ok(())
    }

    pub fn plane(point: [f64; 3], normal: [f64; 3], albedo: [u8; 3]) -> Primitive {
        Primitive {
            shape: Shape::Plane { point, normal },
            albedo,
        }
    }

    pub fn sphere(center: [f64; 3], radius: f64, albedo: [u8; 3]) -> Primitive {
        Primitive {
            shape: Shape::Sphere { center, radius },
            albedo,
        }
    }

    pub fn cuboid(min: [f64; 3], max: [f64; 3], albedo: [u8; 3]) -> Primitive {
        Primitive {
            shape: Shape::Box { min, max },
            albedo,
        }
    }
}

/// Nearest intersection along a ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub point: [f64; 3],
    /// Unit normal facing the ray origin.
    pub normal: [f64; 3],
    pub primitive: usize,
}

fn orient(n: [f64; 3], dir: [f64; 3]) -> [f64; 3] {
    if dot3(n, dir) > 0.0 {
        scale3(n, -1.0)
    } else {
        n
    }
}

fn intersect(shape: &Shape, origin: [f64; 3], dir: [f64; 3]) -> Option<(f64, [f64; 3])> {
    match *shape {
        Shape::Plane { point, normal } => {
            let denom = dot3(normal, dir);
            if denom == 0.0 {
                return None;
            }
            let t = dot3(normal, sub3(point, origin)) / denom;
            (t > T_MIN).then(|| (t, scale3(normal, 1.0 / norm3(normal))))
        }
        Shape::Sphere { center, radius } => {
            let oc = sub3(origin, center);
            let a = dot3(dir, dir);
            let half_b = dot3(oc, dir);
            let c = dot3(oc, oc) - radius * radius;
            let disc = half_b * half_b - a * c;
            if disc < 0.0 {
                return None;
            }
            let sq = disc.sqrt();
            let t = [(-half_b - sq) / a, (-half_b + sq) / a]
                .into_iter()
                .find(|&t| t > T_MIN)?;
            let hit = [
                origin[0] + t * dir[0],
                origin[1] + t * dir[1],
                origin[2] + t * dir[2],
            ];
            Some((t, scale3(sub3(hit, center), 1.0 / radius)))
        }
        Shape::Box { min, max } => {
            let mut t_near = f64::NEG_INFINITY;
            let mut t_far = f64::INFINITY;
            let mut near_axis = 0;
            let mut far_axis = 0;
            for k in 0..3 {
                if dir[k] == 0.0 {
                    if origin[k] < min[k] || origin[k] > max[k] {
                        return None;
                    }
                    continue;
                }
                let t0 = (min[k] - origin[k]) / dir[k];
                let t1 = (max[k] - origin[k]) / dir[k];
                let (lo, hi) = if t0 < t1 { (t0, t1) } else { (t1, t0) };
                if lo > t_near {
                    t_near = lo;
                    near_axis = k;
                }
                if hi < t_far {
                    t_far = hi;
                    far_axis = k;
                }
            }
            if t_near > t_far {
                return None;
            }
            let (t, axis) = if t_near > T_MIN {
                (t_near, near_axis)
            } else if t_far > T_MIN {
                (t_far, far_axis)
            } else {
                return None;
            };
            let mut n = [0.0; 3];
            n[axis] = 1.0;
            Some((t, n))
        }
    }
}

/// Nearest hit of a ray against every primitive of the scene.
pub fn cast_ray(scene: &SceneSpec, origin: [f64; 3], dir: [f64; 3]) -> Option<Hit> {
    let mut best: Option<Hit> = None;
    for (i, p) in scene.primitives.iter().enumerate() {
        if let Some((t, n)) = intersect(&p.shape, origin, dir) {
            if best.is_none_or(|b| t < b.t) {
                let point = [
                    origin[0] + t * dir[0],
                    origin[1] + t * dir[1],
                    origin[2] + t * dir[2],
                ];
                best = Some(Hit {
                    t,
                    point,
                    normal: orient(n, dir),
                    primitive: i,
                });
            }
        }
    }
    best
}

/// Exact camera-facing normal of the surface seen through pixel `p` of the
/// left camera, or `None` when the ray hits nothing.
pub fn analytic_normal_oracle(scene: &SceneSpec, rig: &StereoRig, p: Pixel) -> Option<[f64; 3]> {
    let dir = rig.intrinsics().ray_direction(p);
    cast_ray(scene, [0.0; 3], dir).map(|h| h.normal)
}

#[derive(Debug, Clone)]
pub struct RenderOutput {
    pub left_rgb: RgbImage,
    pub right_rgb: RgbImage,
    pub gt_disparity: DisparityMap,
    pub gt_normal: NormalMap,
    pub gt_depth: DepthMap,
    /// Index of the primitive seen at each left pixel.
    pub gt_primitive: Vec<Option<usize>>,
}

fn shade(scene: &SceneSpec, hit: &Hit) -> [u8; 3] {
    // light at the left camera center; `hit.normal` faces the viewing camera
    let to_point = hit.point;
    let dist = norm3(to_point);
    let lambert = if dist > 0.0 {
        (-dot3(hit.normal, to_point) / dist).max(0.0)
    } else {
        0.0
    };
    let albedo = scene.primitives[hit.primitive].albedo;
    albedo.map(|a| {
        let v = f64::from(a) * lambert * scene.gain;
        v.round_ties_even().clamp(0.0, 255.0) as u8
    })
}

pub fn render_stereo(
    scene: &SceneSpec,
    rig: &StereoRig,
    width: usize,
    height: usize,
) -> Result<RenderOutput> {
    if width == 0 || height == 0 {
        return Err(Error::DimensionMismatch(format!(
            "cannot render a {width}x{height} image"
        )));
    }
    let (w32, h32) = (
        u32::try_from(width).map_err(|_| Error::DimensionMismatch("width too large".into()))?,
        u32::try_from(height).map_err(|_| Error::DimensionMismatch("height too large".into()))?,
    );
    scene.validate()?;
    let k = rig.intrinsics();
    let fb = rig.focal_baseline();
    let right_origin = [rig.baseline(), 0.0, 0.0];

    let mut left_rgb = RgbImage::new(w32, h32);
    let mut right_rgb = RgbImage::new(w32, h32);
    let mut gt_disparity = DisparityMap::masked(width, height);
    let mut gt_depth = DepthMap::masked(width, height);
    let mut gt_normal = NormalMap::masked(width, height);
    let mut gt_primitive = vec![None; width * height];

    for v in 0..height {
        for u in 0..width {
            let i = v * width + u;
            let dir = k.ray_direction(Pixel::new(u as f64, v as f64));

            if let Some(hit) = cast_ray(scene, [0.0; 3], dir) {
                let z = hit.point[2];
                gt_depth.set_index(i, z as f32);
                gt_disparity.set_index(i, (fb / z) as f32);
                gt_normal.set_index(i, hit.normal.map(|c| c as f32));
                gt_primitive[i] = Some(hit.primitive);
                left_rgb.put_pixel(u as u32, v as u32, Rgb(shade(scene, &hit)));
            }
            if let Some(hit) = cast_ray(scene, right_origin, dir) {
                right_rgb.put_pixel(u as u32, v as u32, Rgb(shade(scene, &hit)));
            }
        }
    }

    Ok(RenderOutput {
        left_rgb,
        right_rgb,
        gt_disparity,
        gt_normal,
        gt_depth,
        gt_primitive,
    })
}

/// Pixels whose `(2 * radius + 1)^2` neighborhood lies inside the image and
/// sees a single primitive.
pub fn interior_mask(
    primitives: &[Option<usize>],
    width: usize,
    height: usize,
    radius: usize,
) -> Vec<bool> {
    let mut mask = vec![false; width * height];
    if width <= 2 * radius || height <= 2 * radius {
        return mask;
    }
    for y in radius..height - radius {
        for x in radius..width - radius {
            let Some(id) = primitives[y * width + x] else {
                continue;
            };
            let uniform = (y - radius..=y + radius).all(|yy| {
                (x - radius..=x + radius).all(|xx| primitives[yy * width + xx] == Some(id))
            });
            mask[y * width + x] = uniform;
        }
    }
    mask
}

/// Unit normal obtained by tilting `(0, 0, -1)` by `tilt_deg` toward azimuth
/// `azimuth_deg` in the image plane.
pub fn tilted_normal(tilt_deg: f64, azimuth_deg: f64) -> [f64; 3] {
    let (st, ct) = tilt_deg.to_radians().sin_cos();
    let (sa, ca) = azimuth_deg.to_radians().sin_cos();
    [st * ca, st * sa, -ct]
}

/// Options for [`random_plane_scene`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomPlanes {
    /// Depth range of the background plane along the optical axis, meters.
    pub depth: (f64, f64),
    /// Largest tilt of any plane away from fronto-parallel, degrees.
    pub max_tilt_deg: f64,
    /// Inclusive range for the number of planes in front of the background
    /// plane.
    pub extra_planes: (usize, usize),
}

impl Default for RandomPlanes {
    fn default() -> Self {
        Self {
            depth: (3.0, 6.0),
            max_tilt_deg: 30.0,
            extra_planes: (1, 2),
        }
    }
}

/// Random plane-only scene: a background plane crossing the optical axis plus
/// a few nearer planes crossing random off-axis rays. Every plane is tilted
/// at most `max_tilt_deg` from fronto-parallel.
pub fn random_plane_scene<R: Rng + ?Sized>(rng: &mut R, opts: &RandomPlanes) -> SceneSpec {
    let random_normal = |rng: &mut R| {
        tilted_normal(
            rng.gen_range(0.0..=opts.max_tilt_deg),
            rng.gen_range(0.0..360.0),
        )
    };
    let albedo = |rng: &mut R| {
        [
            rng.gen_range(60..=230),
            rng.gen_range(60..=230),
            rng.gen_range(60..=230),
        ]
    };

    let z0 = rng.gen_range(opts.depth.0..=opts.depth.1);
    let mut primitives = vec![SceneSpec::plane(
        [0.0, 0.0, z0],
        random_normal(rng),
        albedo(rng),
    )];
    let extra = rng.gen_range(opts.extra_planes.0..=opts.extra_planes.1);
    for _ in 0..extra {
        let z = rng.gen_range(0.4 * z0..0.8 * z0);
        let point = [
            rng.gen_range(-0.4..0.4) * z,
            rng.gen_range(-0.3..0.3) * z,
            z,
        ];
        primitives.push(SceneSpec::plane(point, random_normal(rng), albedo(rng)));
    }
    SceneSpec {
        primitives,
        gain: 1.0,
    }
}
