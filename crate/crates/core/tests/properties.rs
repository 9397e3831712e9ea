//! Property-based invariants.

use proptest::prelude::*;
use stereokit::io::{read_pfm, scalar_map_from_pfm, scalar_map_to_pfm, write_pfm};
use stereokit::metrics::{
    angle_between_deg, epe, multiscale_disparity_loss, normal_error_stats, normal_loss, smooth_l1,
    LossPyramid,
};
use stereokit::stats::{disparity_histogram, Mergeable};
use stereokit::*;

fn rig_strategy() -> impl Strategy<Value = StereoRig> {
    (
        50.0..2000.0f64,
        50.0..2000.0f64,
        0.0..640.0f64,
        0.0..480.0f64,
        0.01..1.0f64,
    )
        .prop_map(|(fx, fy, cx, cy, b)| {
            StereoRig::new(CameraIntrinsics::new(fx, fy, cx, cy).unwrap(), b).unwrap()
        })
}

fn unit_vec() -> impl Strategy<Value = [f64; 3]> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
        .prop_filter("non-degenerate", |(x, y, z)| x * x + y * y + z * z > 1e-3)
        .prop_map(|(x, y, z)| {
            let n = (x * x + y * y + z * z).sqrt();
            [x / n, y / n, z / n]
        })
}

fn disparity_map() -> impl Strategy<Value = DisparityMap> {
    (1usize..12, 1usize..12).prop_flat_map(|(w, h)| {
        prop::collection::vec(prop::option::weighted(0.85, 0.0..80.0f32), w * h).prop_map(
            move |v| {
                let vals = v.into_iter().map(|d| d.unwrap_or(f32::NAN)).collect();
                DisparityMap::from_values(w, h, vals).unwrap()
            },
        )
    })
}

proptest! {
    #[test]
    fn disparity_depth_round_trip(rig in rig_strategy(), d in 1e-3..500.0f64) {
        let z = rig.disparity_to_depth(d).unwrap();
        let back = rig.depth_to_disparity(z).unwrap();
        prop_assert!((back - d).abs() <= 1e-9 * d);
    }

    #[test]
    fn depth_strictly_decreasing_in_disparity(rig in rig_strategy(), d in 1e-3..500.0f64, step in 1e-3..10.0f64) {
        prop_assert!(rig.disparity_to_depth(d + step).unwrap() < rig.disparity_to_depth(d).unwrap());
    }

    #[test]
    fn project_inverts_backproject(rig in rig_strategy(), u in 0.0..640.0f64, v in 0.0..480.0f64, z in 0.1..100.0f64) {
        let k = rig.intrinsics();
        let p = k.project(k.backproject(Pixel::new(u, v), z).unwrap()).unwrap();
        prop_assert!((p.u - u).abs() < 1e-9 && (p.v - v).abs() < 1e-9);
    }

    #[test]
    fn normal_angles_round_trip(n in unit_vec()) {
        let a = normal_to_angles(n).unwrap();
        prop_assert!((0.0..360.0).contains(&a.alpha) && (-90.0..=90.0).contains(&a.beta));
        let back = angles_to_normal(a).unwrap();
        let err = angle_between_deg(n, back);
        prop_assert!(err <= 1e-6, "{err}");
        if a.beta.abs() < 89.999 {
            let again = normal_to_angles(back).unwrap();
            let dalpha = (again.alpha - a.alpha + 540.0).rem_euclid(360.0) - 180.0;
            prop_assert!(dalpha.abs() <= 1e-6 && (again.beta - a.beta).abs() <= 1e-6);
        }
    }

    #[test]
    fn normalization_is_scale_invariant(n in unit_vec(), s in 0.01..100.0f64) {
        let raw = NormalMap::from_values(1, 1, vec![n.map(|c| c as f32)]).unwrap();
        let scaled = NormalMap::from_values(1, 1, vec![n.map(|c| (c * s) as f32)]).unwrap();
        let a = normalize_normals(&raw).get(0, 0).unwrap();
        let b = normalize_normals(&scaled).get(0, 0).unwrap();
        for i in 0..3 {
            prop_assert!((a[i] - b[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn smooth_l1_is_continuous_and_non_negative(x in -10.0..10.0f64) {
        prop_assert!(smooth_l1(x) >= 0.0);
        prop_assert_eq!(smooth_l1(x), smooth_l1(-x));
        let h = 1e-7;
        prop_assert!((smooth_l1(x + h) - smooth_l1(x)).abs() <= 1.01 * h);
        prop_assert!((smooth_l1(1.0 + 1e-12) - smooth_l1(1.0 - 1e-12)).abs() < 1e-11);
    }

    #[test]
    fn epe_is_symmetric_and_zero_on_self(a in disparity_map(), seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let b = a.map_valid(|d| d + rng.gen_range(-5.0..5.0));
        if a.valid_count() > 0 {
            prop_assert_eq!(epe(&a, &b).unwrap(), epe(&b, &a).unwrap());
            prop_assert_eq!(epe(&a, &a).unwrap(), 0.0);
        }
    }

    #[test]
    fn histogram_merge_is_commutative_and_associative(a in disparity_map(), b in disparity_map(), c in disparity_map()) {
        let [ha, hb, hc] = [&a, &b, &c].map(|m| disparity_histogram(m, 50).unwrap());
        prop_assert_eq!(ha.merge(&hb).unwrap(), hb.merge(&ha).unwrap());
        prop_assert_eq!(
            ha.merge(&hb).unwrap().merge(&hc).unwrap(),
            ha.merge(&hb.merge(&hc).unwrap()).unwrap()
        );
    }

    #[test]
    fn normal_loss_relates_to_angle(a in unit_vec(), b in unit_vec()) {
        let pa = NormalMap::from_values(1, 1, vec![a.map(|c| c as f32)]).unwrap();
        let pb = NormalMap::from_values(1, 1, vec![b.map(|c| c as f32)]).unwrap();
        let theta = angle_between_deg(a, b).to_radians();
        let loss = normal_loss(&pa, &pb).unwrap();
        prop_assert!((loss - (2.0 - 2.0 * theta.cos())).abs() < 1e-6);
    }

    #[test]
    fn threshold_fractions_are_monotone(angles in prop::collection::vec(0.0..180.0f64, 1..200)) {
        let s = normal_error_stats(angles).unwrap();
        prop_assert!(s.frac_11_25 <= s.frac_22_5 && s.frac_22_5 <= s.frac_30);
        prop_assert!(s.frac_30 <= 1.0 && s.frac_11_25 >= 0.0);
    }

    #[test]
    fn multiscale_loss_is_linear_in_weights(
        w1 in prop::array::uniform7(0.0..1.0f64),
        w2 in prop::array::uniform7(0.0..1.0f64),
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let gt_vals = (0..32 * 24).map(|_| rng.gen_range(1.0..40.0)).collect();
        let gt = DisparityMap::from_values(32, 24, gt_vals).unwrap();
        let levels: Vec<DisparityMap> = stereokit::metrics::build_gt_pyramid(&gt)
            .iter()
            .map(|l| l.map_valid(|d| d + rng.gen_range(-2.0..2.0)))
            .collect();
        let sum: [f64; 7] = std::array::from_fn(|i| w1[i] + w2[i]);
        let eval = |w: [f64; 7]| {
            multiscale_disparity_loss(&LossPyramid::new(levels.clone(), w).unwrap(), &gt).unwrap().total
        };
        prop_assert!((eval(sum) - eval(w1) - eval(w2)).abs() < 1e-9);
    }

    #[test]
    fn scalar_pfm_round_trip(m in disparity_map()) {
        let bytes = write_pfm(&scalar_map_to_pfm(&m));
        let back: DisparityMap = scalar_map_from_pfm(&read_pfm(&bytes).unwrap()).unwrap();
        prop_assert_eq!(&back, &m);
        prop_assert_eq!(write_pfm(&scalar_map_to_pfm(&back)), bytes);
    }

    #[test]
    fn ply_round_trip(
        pts in prop::collection::vec((-1e3..1e3f64, -1e3..1e3f64, 0.01..1e3f64, any::<[u8; 3]>()), 0..50),
        binary in any::<bool>(),
    ) {
        let pc = PointCloud {
            points: pts.iter().map(|&(x, y, z, _)| Point3D::new(x, y, z)).collect(),
            colors: Some(pts.iter().map(|p| p.3).collect()),
            normals: Some(pts.iter().map(|_| [0.0, 0.0, -1.0]).collect()),
        };
        let format = if binary { PlyFormat::BinaryLittleEndian } else { PlyFormat::Ascii };
        let back = import_ply(&export_ply(&pc, format).unwrap()).unwrap();
        prop_assert_eq!(back.colors.as_ref(), pc.colors.as_ref());
        prop_assert_eq!(back.normals.as_ref(), pc.normals.as_ref());
        for (a, b) in back.points.iter().zip(&pc.points) {
            for (x, y) in a.to_array().iter().zip(b.to_array()) {
                prop_assert!((x - y).abs() <= 1e-6 * y.abs().max(1.0));
            }
        }
        prop_assert_eq!(back.len(), pc.len());
    }
}
