use proptest::prelude::*;

use super::*;
use crate::rng::RngStream;
use crate::tensor::Tensor;

fn one_joint(x: f64, y: f64, visible: bool, r: usize) -> KeypointSet {
    KeypointSet::new(vec![Keypoint::new(x, y, visible)], Space::Heatmap { res: r }).unwrap()
}

fn at(t: &Tensor<f64>, j: usize, y: usize, x: usize) -> f64 {
    let s = t.shape();
    t.values()[(j * s[1] + y) * s[2] + x]
}

#[test]
fn gaussian_closed_form_values() {
    let t: Tensor<f64> = render_targets(&one_joint(5.0, 5.0, true, 16), 1, 16, 1.0).unwrap();
    assert_eq!(at(&t, 0, 5, 5), 1.0);
    assert!((at(&t, 0, 5, 6) - (-0.5f64).exp()).abs() < 1e-15);
    assert!((at(&t, 0, 5, 6) - 0.6065).abs() < 1e-4);
}

#[test]
fn invisible_joint_renders_zero() {
    let t: Tensor<f64> = render_targets(&one_joint(5.0, 5.0, false, 8), 1, 8, 1.0).unwrap();
    assert!(t.values().iter().all(|&v| v == 0.0));
}

#[test]
fn render_rejects_bad_arguments() {
    let k = one_joint(2.0, 2.0, true, 8);
    assert!(render_targets::<f64>(&k, 1, 8, 0.0).is_err());
    assert!(render_targets::<f64>(&k, 2, 8, 1.0).is_err());
    assert!(render_targets::<f64>(&k, 1, 9, 1.0).is_err());
}

#[test]
fn window_sum_matches_direct_evaluation() {
    let (cx, cy) = (9.0, 7.0);
    let t: Tensor<f64> = render_targets(&one_joint(cx, cy, true, 20), 1, 20, 1.0).unwrap();
    let mut got = 0.0;
    let mut want = 0.0;
    for dy in -3i32..=3 {
        for dx in -3i32..=3 {
            got += at(&t, 0, (cy as i32 + dy) as usize, (cx as i32 + dx) as usize);
            want += (-f64::from(dx * dx + dy * dy) / 2.0).exp();
        }
    }
    assert!((got - want).abs() < 1e-12, "{got} vs {want}");
}

#[test]
fn default_sigma_has_one_pixel_floor() {
    assert_eq!(default_sigma(64), 1.0);
    assert_eq!(default_sigma(128), 2.0);
    assert_eq!(default_sigma(16), 1.0);
}

#[test]
fn decode_round_trip_and_zero_map() {
    let t: Tensor<f64> = render_targets(&one_joint(5.0, 5.0, true, 16), 1, 16, 1.0).unwrap();
    let (k, s) = decode_argmax(&t).unwrap();
    assert_eq!((k.get(0).x, k.get(0).y), (5.0, 5.0));
    assert_eq!(s[0], 1.0);
    let z = Tensor::<f64>::zeros(&[2, 4, 4]);
    let (k, s) = decode_argmax(&z).unwrap();
    assert_eq!((k.get(1).x, k.get(1).y, s[1]), (0.0, 0.0, 0.0));
}

#[test]
fn refinement_moves_toward_larger_neighbor() {
    let t: Tensor<f64> = render_targets(&one_joint(5.3, 4.8, true, 16), 1, 16, 1.0).unwrap();
    let (k, _) = decode_argmax(&t).unwrap();
    let r = refine_quarter_offset(&t, &k).unwrap();
    assert_eq!((r.get(0).x, r.get(0).y), (5.25, 4.75));
}

fn crop_case(seed: u64) -> (CropTransform, f64, f64) {
    let mut rng = RngStream::new(seed);
    let person = PersonDescriptor::new([rng.uniform(20.0, 200.0), rng.uniform(20.0, 200.0)], rng.uniform(0.2, 2.0)).unwrap();
    let t = CropTransform::new(&person, (240, 220), 64, 16, rng.uniform(-30.0, 30.0), rng.uniform(0.75, 1.25), rng.bernoulli(0.5)).unwrap();
    (t, rng.uniform(0.0, 239.0), rng.uniform(0.0, 219.0))
}

#[test]
fn transform_round_trip_random() {
    for seed in 0..200 {
        let (t, x, y) = crop_case(seed);
        let (u, v) = t.image_to_heatmap(x, y);
        let (bx, by) = t.heatmap_to_image(u, v);
        assert!((bx - x).abs() < 1e-9 && (by - y).abs() < 1e-9, "seed {seed}");
    }
}

#[test]
fn identity_crop_preserves_pixels() {
    let mut rng = RngStream::new(3);
    let img = Tensor::<f64>::uniform(&[3, 64, 64], 0.0, 1.0, &mut rng);
    let person = PersonDescriptor::new([31.5, 31.5], 64.0 / 200.0).unwrap();
    let (crop, _) = crop_input(&img, &person, 64, 0.0, 1.0).unwrap();
    for (a, b) in crop.values().iter().zip(img.values()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn crop_center_maps_to_heatmap_center() {
    let img = Tensor::<f64>::zeros(&[3, 100, 150]);
    let person = PersonDescriptor::new([70.0, 40.0], 0.6).unwrap();
    let (_, t) = crop_input(&img, &person, 64, 0.0, 1.0).unwrap();
    let (u, v) = t.image_to_heatmap(70.0, 40.0);
    assert!((u - 7.5).abs() < 1e-12 && (v - 7.5).abs() < 1e-12);
    let kps = KeypointSet::new(vec![Keypoint::new(7.5, 7.5, true)], Space::Heatmap { res: 16 }).unwrap();
    let back = heatmap_to_image_coords(&kps, &t).unwrap();
    assert!((back.get(0).x - 70.0).abs() < 1e-9 && (back.get(0).y - 40.0).abs() < 1e-9);
}

#[test]
fn crop_fills_outside_with_zero_and_rejects_degenerate_scale() {
    let img = Tensor::<f64>::full(&[3, 10, 10], 1.0);
    let person = PersonDescriptor::new([4.5, 4.5], 0.5).unwrap();
    let (crop, _) = crop_input(&img, &person, 32, 0.0, 1.0).unwrap();
    assert_eq!(crop.values()[0], 0.0);
    assert!(crop_input(&img, &person, 32, 0.0, 0.0).is_err());
    assert!(CropTransform::new(&person, (10, 10), 32, 8, 0.0, 1e-20, false).is_err());
}

#[test]
fn heatmap_to_image_round_trips_for_three_transforms() {
    for seed in [11, 12, 13] {
        let (t, x, y) = crop_case(seed);
        let (u, v) = t.image_to_heatmap(x, y);
        let kps = KeypointSet::new(vec![Keypoint::new(u, v, false)], Space::Heatmap { res: 16 }).unwrap();
        let back = heatmap_to_image_coords(&kps, &t).unwrap();
        assert!((back.get(0).x - x).abs() < 1e-9 && (back.get(0).y - y).abs() < 1e-9);
    }
}

#[test]
fn flipped_crop_mirrors_keypoints() {
    let person = PersonDescriptor::new([50.0, 50.0], 0.5).unwrap();
    let plain = CropTransform::new(&person, (100, 100), 64, 16, 10.0, 1.0, false).unwrap();
    let flip = CropTransform::new(&person, (100, 100), 64, 16, 10.0, 1.0, true).unwrap();
    let (u, v) = plain.image_to_heatmap(40.0, 61.0);
    let (fu, fv) = flip.image_to_heatmap(40.0, 61.0);
    assert!((fu - (15.0 - u)).abs() < 1e-12 && (fv - v).abs() < 1e-12);
}

fn pairs() -> FlipPairs {
    FlipPairs::new(vec![(0, 2), (1, 4)]).unwrap()
}

#[test]
fn flip_average_fixed_point_and_zero() {
    let mut rng = RngStream::new(8);
    let a = Tensor::<f64>::uniform(&[5, 6, 6], 0.0, 1.0, &mut rng);
    let fixed = flip_average(&a, &mirror_and_swap(&a, &pairs()).unwrap(), &pairs()).unwrap();
    assert!(fixed.values().iter().zip(a.values()).all(|(x, y)| (x - y).abs() < 1e-15));
    let half = flip_average(&a, &Tensor::zeros(&[5, 6, 6]), &pairs()).unwrap();
    assert!(half.values().iter().zip(a.values()).all(|(x, y)| *x == y / 2.0));
}

#[test]
fn flip_average_rejects_bad_input() {
    let a = Tensor::<f64>::zeros(&[2, 4, 4]);
    assert!(flip_average(&a, &a, &pairs()).is_err());
    assert!(flip_average(&a, &Tensor::zeros(&[2, 4, 5]), &FlipPairs::new(vec![]).unwrap()).is_err());
}

proptest! {
    #[test]
    fn render_values_in_unit_interval(x in 0.0f64..15.0, y in 0.0f64..15.0, sigma in 0.3f64..4.0) {
        let t: Tensor<f64> = render_targets(&one_joint(x, y, true, 16), 1, 16, sigma).unwrap();
        prop_assert!(t.values().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn render_decode_recovers_interior_integer_peaks(xs in proptest::collection::vec((1usize..15, 1usize..15), 1..6)) {
        let joints = xs.iter().map(|&(x, y)| Keypoint::new(x as f64, y as f64, true)).collect();
        let kps = KeypointSet::new(joints, Space::Heatmap { res: 16 }).unwrap();
        let t: Tensor<f64> = render_targets(&kps, xs.len(), 16, 1.0).unwrap();
        let (d, _) = decode_argmax(&t).unwrap();
        for (k, &(x, y)) in d.joints().iter().zip(&xs) {
            prop_assert_eq!((k.x, k.y), (x as f64, y as f64));
        }
    }

    #[test]
    fn decode_matches_full_scan(seed in any::<u64>(), m in 1usize..5, r in 1usize..10, levels in 1u32..6) {
        let mut rng = RngStream::new(seed);
        let vals: Vec<f64> = (0..m * r * r).map(|_| rng.below(levels as usize) as f64).collect();
        let t = Tensor::from_vec(&[m, r, r], vals.clone()).unwrap();
        let (d, s) = decode_argmax(&t).unwrap();
        for j in 0..m {
            let plane = &vals[j * r * r..(j + 1) * r * r];
            let max = plane.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let first = plane.iter().position(|&v| v == max).unwrap();
            prop_assert_eq!(s[j], max);
            prop_assert_eq!((d.get(j).x, d.get(j).y), ((first % r) as f64, (first / r) as f64));
        }
    }

    #[test]
    fn flip_average_matches_permutation_oracle(seed in any::<u64>(), r in 1usize..7) {
        let mut rng = RngStream::new(seed);
        let a = Tensor::<f64>::uniform(&[5, r, r], -1.0, 1.0, &mut rng);
        let b = Tensor::<f64>::uniform(&[5, r, r], -1.0, 1.0, &mut rng);
        let perm = [2, 4, 0, 3, 1];
        let got = flip_average(&a, &b, &pairs()).unwrap();
        for j in 0..5 {
            for y in 0..r {
                for x in 0..r {
                    let want = 0.5 * (at(&a, j, y, x) + at(&b, perm[j], y, r - 1 - x));
                    prop_assert!((at(&got, j, y, x) - want).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn flip_average_is_order_symmetric(seed in any::<u64>()) {
        let mut rng = RngStream::new(seed);
        let a = Tensor::<f64>::uniform(&[5, 4, 4], -1.0, 1.0, &mut rng);
        let b = Tensor::<f64>::uniform(&[5, 4, 4], -1.0, 1.0, &mut rng);
        let ab = flip_average(&a, &b, &pairs()).unwrap();
        let ba = flip_average(&b, &a, &pairs()).unwrap();
        let ba_back = mirror_and_swap(&ba, &pairs()).unwrap();
        prop_assert!(ab.values().iter().zip(ba_back.values()).all(|(x, y)| (x - y).abs() < 1e-15));
    }
}
