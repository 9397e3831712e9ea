//! Checks against independent brute-force oracles.

use image::{Rgb, RgbImage};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use stereokit::io::{
    decode_normal_u16, encode_normal_u16, normal_map_from_pfm, normal_map_to_pfm, read_pfm,
    write_pfm,
};
use stereokit::metrics::{
    angle_between_deg, build_gt_pyramid, multiscale_disparity_loss, smooth_l1, LossPyramid,
};
use stereokit::stats::{
    brightness_joint_histogram, disparity_histogram, empty_disparity_histogram,
    normal_angle_histogram, normalized_disparity_histogram, Mergeable,
};
use stereokit::synth::{cast_ray, interior_mask, tilted_normal};
use stereokit::*;

fn rig(f: f64, w: usize, h: usize, b: f64) -> StereoRig {
    let k = CameraIntrinsics::new(f, f, (w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0).unwrap();
    StereoRig::new(k, b).unwrap()
}

fn unit(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    v.map(|c| c / n)
}

/// Mean D2N error against the analytic normal over pixels selected by `keep`.
fn d2n_mean_error(scene: &SceneSpec, rig: &StereoRig, w: usize, h: usize, erosion: usize) -> f64 {
    let out = render_stereo(scene, rig, w, h).unwrap();
    let nm = d2n_transform(&out.gt_disparity, rig, &D2NConfig::default()).unwrap();
    let keep = if erosion > 0 {
        interior_mask(&out.gt_primitive, w, h, erosion)
    } else {
        out.gt_primitive.iter().map(Option::is_some).collect()
    };
    let (mut sum, mut n) = (0.0, 0usize);
    for (i, &k) in keep.iter().enumerate() {
        if !k {
            continue;
        }
        let Some(est) = nm.get_index(i) else { continue };
        let p = Pixel::new((i % w) as f64, (i / w) as f64);
        let truth = analytic_normal_oracle(scene, rig, p).unwrap();
        sum += angle_between_deg(est.map(f64::from), truth);
        n += 1;
    }
    sum / n as f64
}

#[test]
fn d2n_recovers_sloped_plane() {
    // z = 1 + 0.5 x  <=>  0.5 x - z + 1 = 0, gradient (0.5, 0, -1)
    let scene = SceneSpec {
        primitives: vec![SceneSpec::plane(
            [0.0, 0.0, 1.0],
            [0.5, 0.0, -1.0],
            [180; 3],
        )],
        gain: 1.0,
    };
    let (w, h) = (64, 48);
    let r = rig(100.0, w, h, 0.1);
    let out = render_stereo(&scene, &r, w, h).unwrap();
    let nm = d2n_transform(&out.gt_disparity, &r, &D2NConfig::default()).unwrap();
    let truth = unit([0.5, 0.0, -1.0]);
    assert!((truth[0] - 0.4472).abs() < 1e-4 && (truth[2] + 0.8944).abs() < 1e-4);
    let mut count = 0;
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let n = nm.get(x, y).expect("interior pixel valid");
            assert!(angle_between_deg(n.map(f64::from), truth) < 1.0);
            count += 1;
        }
    }
    assert_eq!(count, (w - 2) * (h - 2));
}

#[test]
fn d2n_error_shrinks_with_resolution() {
    // two planes meeting in a crease; fixed field of view, growing resolution
    let scene = SceneSpec {
        primitives: vec![
            SceneSpec::plane([0.0, 0.0, 3.0], tilted_normal(25.0, 0.0), [150; 3]),
            SceneSpec::plane([0.0, 0.0, 3.0], tilted_normal(25.0, 180.0), [150; 3]),
        ],
        gain: 1.0,
    };
    let mut previous = f64::INFINITY;
    for (w, h) in [(32, 24), (64, 48), (128, 96), (256, 192)] {
        let r = rig(w as f64, w, h, 0.1);
        let err = d2n_mean_error(&scene, &r, w, h, 0);
        assert!(err <= previous, "{w}x{h}: {err} > {previous}");
        previous = err;
        if w == 128 {
            assert!(err <= 1.0, "{err}");
        }
    }
}

#[test]
fn pooled_disparity_histogram_matches_tally() {
    let a = DisparityMap::filled(100, 3, 5.0); // 200*5/100 = 10
    let mut b = DisparityMap::filled(200, 2, 30.0); // 200*30/200 = 30
    b.invalidate(0, 0);
    let h = normalized_disparity_histogram(&[a.clone(), b.clone()], 500).unwrap();

    // brute force over every pixel
    let mut tally = std::collections::BTreeMap::new();
    let mut total = 0u64;
    for (w, map) in [(100.0, &a), (200.0, &b)] {
        for (_, d) in map.iter_valid() {
            let v = 200.0 * f64::from(d) / w;
            *tally.entry((v * 10.0).floor() as usize).or_insert(0u64) += 1;
            total += 1;
        }
    }
    assert_eq!(h.total(), total);
    for (bin, count) in tally {
        assert_eq!(h.counts[bin], count);
        assert_eq!(h.normalized()[bin], count as f64 / total as f64);
    }
    assert_eq!(h.counts.iter().filter(|&&c| c > 0).count(), 2);
    let sum: f64 = h.normalized().iter().sum();
    assert!((sum - 1.0).abs() < 1e-9);
}

#[test]
fn normal_histogram_is_mean_of_per_sample_distributions() {
    let a = NormalMap::filled(2, 2, [0.0, 0.0, -1.0]);
    let mut b = NormalMap::filled(3, 1, [1.0, 0.0, 0.0]);
    b.set(2, 0, [0.0, 1.0, 0.0]);
    let h = normal_angle_histogram(&[a, b], 1.0).unwrap();
    assert_eq!(h.sample_count, 2);
    let mean = h.mean();
    let top = h.y_bins() - 1;
    let at = |x: usize, y: usize| mean[y * h.x_bins() + x];
    // sample a: all at the pole row; sample b: 2/3 at (0,0), 1/3 at (90,0)
    assert!((at(0, 0) - 0.5).abs() < 1e-12);
    assert!((at(0, top) - 0.5 * 2.0 / 3.0).abs() < 1e-12);
    assert!((at(90, top) - 0.5 / 3.0).abs() < 1e-12);
    let sum: f64 = mean.iter().sum();
    assert!((sum - 1.0).abs() < 1e-12);
}

fn gray_ramp(w: u32, h: u32, seed: u64) -> RgbImage {
    let mut rng = StdRng::seed_from_u64(seed);
    RgbImage::from_fn(w, h, |_, _| {
        let g = rng.gen::<u8>();
        Rgb([g, g, g])
    })
}

#[test]
fn brightened_right_view_shifts_mass_off_diagonal() {
    let (w, h, d) = (40u32, 10u32, 3u32);
    let left = gray_ramp(w, h, 9);
    // right pixel (u, v) sees left pixel (u + d, v), brightened by 10
    let right = RgbImage::from_fn(w, h, |u, v| {
        let g = if u + d < w {
            left.get_pixel(u + d, v)[0].saturating_add(10)
        } else {
            0
        };
        Rgb([g, g, g])
    });
    let gt = DisparityMap::filled(w as usize, h as usize, d as f32);
    let hist = brightness_joint_histogram(&left, &right, &gt).unwrap();

    // brute-force matching
    let mut expected = vec![0.0; 256 * 256];
    for v in 0..h {
        for u in d..w {
            let gl = left.get_pixel(u, v)[0] as usize;
            let gr = right.get_pixel(u - d, v)[0] as usize;
            expected[gr * 256 + gl] += 1.0;
            assert_eq!(gr, (gl + 10).min(255));
        }
    }
    assert_eq!(hist.mass, expected);
}

#[test]
fn per_image_merge_equals_single_pass() {
    let mut rng = StdRng::seed_from_u64(3);
    let maps: Vec<DisparityMap> = (0..12)
        .map(|_| {
            let w = rng.gen_range(20..60);
            let vals = (0..w * 7)
                .map(|_| {
                    if rng.gen_bool(0.1) {
                        f32::NAN
                    } else {
                        rng.gen_range(0.0..20.0)
                    }
                })
                .collect();
            DisparityMap::from_values(w, 7, vals).unwrap()
        })
        .collect();

    let mut single = empty_disparity_histogram(500).unwrap();
    for m in &maps {
        for (_, d) in m.iter_valid() {
            single.add(200.0 * f64::from(d) / m.width() as f64);
        }
    }
    single.sample_count = maps.len() as u64;

    let mut merged = empty_disparity_histogram(500).unwrap();
    for m in &maps {
        merged = merged.merge(&disparity_histogram(m, 500).unwrap()).unwrap();
    }
    assert_eq!(merged, single);
    let empty = empty_disparity_histogram(500).unwrap();
    assert_eq!(merged.merge(&empty).unwrap(), merged);
}

#[test]
fn pyramid_level_is_block_mean_halved() {
    let mut rng = StdRng::seed_from_u64(5);
    let (w, h) = (13, 9);
    let vals: Vec<f32> = (0..w * h)
        .map(|_| {
            if rng.gen_bool(0.2) {
                f32::NAN
            } else {
                rng.gen_range(1.0..64.0)
            }
        })
        .collect();
    let gt = DisparityMap::from_values(w, h, vals).unwrap();
    let levels = build_gt_pyramid(&gt);
    let l1 = &levels[1];
    assert_eq!(l1.dims(), (7, 5));
    for oy in 0..5 {
        for ox in 0..7 {
            let parents: Vec<f64> = [(0, 0), (1, 0), (0, 1), (1, 1)]
                .iter()
                .filter_map(|&(dx, dy)| gt.get(2 * ox + dx, 2 * oy + dy))
                .map(f64::from)
                .collect();
            if parents.is_empty() {
                assert!(!l1.is_valid(ox, oy));
            } else {
                let want = parents.iter().sum::<f64>() / parents.len() as f64 / 2.0;
                assert!((f64::from(l1.get(ox, oy).unwrap()) - want).abs() < 1e-5);
            }
        }
    }
}

#[test]
fn multiscale_loss_equals_weighted_brute_force() {
    let mut rng = StdRng::seed_from_u64(11);
    let (w, h) = (64, 64);
    let gt_vals: Vec<f32> = (0..w * h).map(|_| rng.gen_range(1.0..40.0)).collect();
    let gt = DisparityMap::from_values(w, h, gt_vals).unwrap();
    let gt_levels = build_gt_pyramid(&gt);
    let pred_levels: Vec<DisparityMap> = gt_levels
        .iter()
        .map(|l| l.map_valid(|d| d + rng.gen_range(-3.0..3.0)))
        .collect();
    let weights = [0.32, 0.16, 0.08, 0.04, 0.02, 0.01, 0.005];

    let mut expected = 0.0;
    for s in 0..7 {
        let (p, g) = (&pred_levels[s], &gt_levels[s]);
        let mut sum = 0.0;
        let mut n = 0;
        for i in 0..g.len() {
            if let (Some(a), Some(b)) = (p.get_index(i), g.get_index(i)) {
                sum += smooth_l1(f64::from(b) - f64::from(a));
                n += 1;
            }
        }
        expected += weights[s] * sum / n as f64;
    }
    let pyramid = LossPyramid::new(pred_levels.clone(), weights).unwrap();
    let got = multiscale_disparity_loss(&pyramid, &gt).unwrap().total;
    assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");

    let one_hot = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    let pyramid = LossPyramid::new(pred_levels.clone(), one_hot).unwrap();
    let l0 = stereokit::metrics::scale_loss(&pred_levels[0], &gt).unwrap();
    assert_eq!(multiscale_disparity_loss(&pyramid, &gt).unwrap().total, l0);
}

#[test]
fn sphere_render_matches_brute_force_intersection() {
    let (w, h) = (33, 25);
    let r = rig(40.0, w, h, 0.1);
    let (c, radius) = ([0.0, 0.0, 4.0], 1.5);
    let scene = SceneSpec {
        primitives: vec![SceneSpec::sphere(c, radius, [200; 3])],
        gain: 1.0,
    };
    let out = render_stereo(&scene, &r, w, h).unwrap();

    // brute force: march along the ray in small steps, then bisect
    let brute_depth = |u: usize, v: usize| -> Option<f64> {
        let d = r.intrinsics().ray_direction(Pixel::new(u as f64, v as f64));
        let inside = |t: f64| {
            let p = [d[0] * t - c[0], d[1] * t - c[1], d[2] * t - c[2]];
            p[0] * p[0] + p[1] * p[1] + p[2] * p[2] <= radius * radius
        };
        let mut t = 0.0;
        while t < 10.0 {
            if inside(t + 1e-3) {
                let (mut lo, mut hi) = (t, t + 1e-3);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if inside(mid) {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                return Some(hi);
            }
            t += 1e-3;
        }
        None
    };
    for v in (0..h).step_by(4) {
        for u in (0..w).step_by(4) {
            match (brute_depth(u, v), out.gt_depth.get(u, v)) {
                (Some(z), Some(got)) => assert!((f64::from(got) - z).abs() < 1e-5),
                (None, None) => {}
                other => panic!("pixel ({u},{v}): {other:?}"),
            }
        }
    }

    let (cu, cv) = (w / 2, h / 2);
    assert_eq!(out.gt_normal.get(cu, cv), Some([0.0, 0.0, -1.0]));
    let center = out.gt_disparity.get(cu, cv).unwrap();
    for (_, d) in out.gt_disparity.iter_valid() {
        assert!(d <= center);
    }
    for du in 1..6 {
        let inner = out.gt_disparity.get(cu + du - 1, cv).unwrap();
        let outer = out.gt_disparity.get(cu + du, cv).unwrap();
        assert!(outer < inner);
    }
}

#[test]
fn sphere_silhouette_normal_is_perpendicular_to_ray() {
    let r = rig(100.0, 101, 101, 0.1);
    let (c, radius) = ([0.0, 0.0, 5.0], 1.0);
    let scene = SceneSpec {
        primitives: vec![SceneSpec::sphere(c, radius, [200; 3])],
        gain: 1.0,
    };
    // a ray at angle t off the axis passes the centre at distance D sin t; the
    // cosine between the surface normal and the ray is sqrt(1 - (D sin t / r)^2)
    let dist = 5.0f64;
    let tan0 = (radius / dist).asin().tan();
    let mut u = 0.0;
    for eps in [1e-2, 1e-4, 1e-6, 1e-8] {
        let t = (tan0 * (1.0 - eps)).atan();
        u = r.intrinsics().cx() + r.intrinsics().fx() * t.tan();
        let p = Pixel::new(u, r.intrinsics().cy());
        let n = analytic_normal_oracle(&scene, &r, p).unwrap();
        let d = unit(r.intrinsics().ray_direction(p));
        let dot = n[0] * d[0] + n[1] * d[1] + n[2] * d[2];
        let expected = (1.0 - (dist * t.sin() / radius).powi(2)).sqrt();
        assert!(
            (dot.abs() - expected).abs() < 1e-6,
            "{eps}: {dot} vs {expected}"
        );
        assert!(dot.abs() <= 2.0 * eps.sqrt());
    }
    // and no hit just outside the silhouette
    let p = Pixel::new(u + 1e-2, r.intrinsics().cy());
    assert!(analytic_normal_oracle(&scene, &r, p).is_none());
}

#[test]
fn render_satisfies_depth_relation_and_photometric_consistency() {
    // f * b / z = 100 * 0.1 / 2 = 5 px exactly
    let (w, h) = (48, 32);
    let r = rig(100.0, w, h, 0.1);
    let scene = SceneSpec {
        primitives: vec![SceneSpec::plane(
            [0.0, 0.0, 2.0],
            [0.0, 0.0, -1.0],
            [230, 120, 40],
        )],
        gain: 1.0,
    };
    let out = render_stereo(&scene, &r, w, h).unwrap();
    for (i, d) in out.gt_disparity.iter_valid() {
        let z = f64::from(out.gt_depth.get_index(i).unwrap());
        let rel = (f64::from(d) - r.focal_baseline() / z).abs() / f64::from(d);
        assert!(rel < 1e-6);
    }
    let d = 5;
    for v in 0..h as u32 {
        for u in d..w as u32 {
            let l = stereokit::stats::gray_level(out.left_rgb.get_pixel(u, v).0);
            let rr = stereokit::stats::gray_level(out.right_rgb.get_pixel(u - d, v).0);
            assert_eq!(l, rr, "({u},{v})");
        }
    }
    let dir = r.intrinsics().ray_direction(Pixel::new(0.0, 0.0));
    assert!(cast_ray(&scene, [0.0; 3], dir).is_some());
}

#[test]
fn fronto_parallel_cloud_is_planar() {
    let (w, h) = (40, 30);
    let r = rig(100.0, w, h, 0.1);
    let scene = SceneSpec {
        primitives: vec![SceneSpec::plane(
            [0.0, 0.0, 2.5],
            [0.0, 0.0, -1.0],
            [100; 3],
        )],
        gain: 1.0,
    };
    let out = render_stereo(&scene, &r, w, h).unwrap();
    let pc = reconstruct(&out.gt_disparity, Some(&out.left_rgb), None, &r).unwrap();
    assert_eq!(pc.len(), w * h);

    // least-squares fit z = a x + b y + c via the 3x3 normal equations
    let mut ata = [[0.0f64; 3]; 3];
    let mut atb = [0.0f64; 3];
    for p in &pc.points {
        let row = [p.x, p.y, 1.0];
        for i in 0..3 {
            for j in 0..3 {
                ata[i][j] += row[i] * row[j];
            }
            atb[i] += row[i] * p.z;
        }
    }
    let coef = solve3(ata, atb);
    for p in &pc.points {
        let resid = p.z - (coef[0] * p.x + coef[1] * p.y + coef[2]);
        assert!(resid.abs() < 1e-6);
        assert!((p.z - pc.points[0].z).abs() < 1e-6);
    }
}

#[allow(clippy::needless_range_loop)]
fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> [f64; 3] {
    for col in 0..3 {
        let piv = (col..3)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let s: f64 = (row + 1..3).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

#[test]
fn normal_pfm_round_trip_is_byte_exact() {
    let mut rng = StdRng::seed_from_u64(1);
    let values = (0..7 * 5)
        .map(|_| {
            let v = unit([
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                -rng.gen_range(0.1..1.0),
            ]);
            v.map(|c| c as f32)
        })
        .collect();
    let mut nm = NormalMap::from_values(7, 5, values).unwrap();
    nm.invalidate(3, 3);
    let bytes = write_pfm(&normal_map_to_pfm(&nm));
    let back = normal_map_from_pfm(&read_pfm(&bytes).unwrap()).unwrap();
    assert_eq!(back, nm);
    assert_eq!(write_pfm(&normal_map_to_pfm(&back)), bytes);
    // byte-level: header then bottom row first
    let header = b"PF\n7 5\n-1.0\n";
    assert_eq!(&bytes[..header.len()], header);
    let first = nm.get(0, 4).unwrap();
    assert_eq!(
        &bytes[header.len()..header.len() + 4],
        &first[0].to_le_bytes()
    );
}

#[test]
fn png_normal_quantization_bound() {
    let mut rng = StdRng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..2000 {
        let n = unit([
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ]);
        let n32 = n.map(|c| c as f32);
        let back = decode_normal_u16(encode_normal_u16(n32)).unwrap();
        worst = worst.max(angle_between_deg(n, back.map(f64::from)));
    }
    assert!(worst < 0.01, "{worst}");
}
