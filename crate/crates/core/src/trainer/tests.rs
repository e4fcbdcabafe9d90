use proptest::prelude::*;

use super::*;
use crate::adversarial::{loss_discriminator, loss_fake, loss_real, AdversarialState};
use crate::codec::{crop_input, mirror_and_swap, render_targets, decode_argmax, flip_average, heatmap_to_image_coords, JointSchema, Keypoint, KeypointSet, PersonDescriptor, Space};
use crate::dataset::{generate_samples, Figure, Pose, Sample, SceneSpec, Split, SyntheticSceneConfig};
use crate::error::Error;
use crate::network::{HeatmapModel, NetworkConfig};
use crate::rng::RngStream;
use crate::tensor::{BatchNormMode, ParamStore, Tape, Tensor};

fn tiny_net(m: usize) -> NetworkConfig {
    NetworkConfig { num_stacks: 1, num_joints: m, input_res: 32, heatmap_res: 8, base_channels: 8, hourglass_depth: 1, conditional: true, discriminator_stacks: 1 }
}

fn tiny_samples(n: usize, seed: u64) -> Vec<Sample<f64>> {
    let cfg = SyntheticSceneConfig { image_width: 48, image_height: 48, figure_height: [28.0, 36.0], ..Default::default() };
    generate_samples(&cfg, n, seed).unwrap()
}

fn tiny_batch(seed: u64) -> Batch<f64> {
    let net = tiny_net(14);
    let aug = Augmenter::new(&net, &TrainConfig::default(), JointSchema::Lsp14.flip_pairs()).unwrap();
    let samples = tiny_samples(2, seed);
    let batch = epoch_batches(&samples, &aug, seed, 0, 2).next().unwrap().unwrap();
    batch
}

#[test]
fn rmsprop_zero_gradient_keeps_parameters() {
    let mut p = vec![1.0, -2.0];
    let mut acc = vec![0.5, 0.25];
    rmsprop_update(&mut p, &[0.0, 0.0], &mut acc, 1e-3, 0.99, 1e-8);
    assert_eq!(p, vec![1.0, -2.0]);
}

#[test]
fn rmsprop_scalar_example() {
    let mut p = vec![0.0];
    let mut acc = vec![0.0];
    rmsprop_update(&mut p, &[2.0], &mut acc, 1.0, 0.0, 0.0);
    assert_eq!(p, vec![-1.0]);
    assert_eq!(acc, vec![4.0]);
}

#[test]
fn rmsprop_matches_recurrence_oracle() {
    let mut rng = RngStream::new(9);
    let (lr, rho, eps) = (0.01, 0.9, 1e-6);
    let mut p = vec![0.3];
    let mut acc = vec![0.0];
    let (mut q, mut a) = (0.3f64, 0.0f64);
    for _ in 0..100 {
        let g = rng.uniform(-2.0, 2.0);
        rmsprop_update(&mut p, &[g], &mut acc, lr, rho, eps);
        a = rho * a + (1.0 - rho) * g.powi(2);
        q -= lr * g / (a.sqrt() + eps);
    }
    assert!((p[0] - q).abs() < 1e-12);
}

#[test]
fn optimizer_step_rejects_non_finite_and_skips_frozen() {
    let mut store = ParamStore::<f64>::new();
    let w = store.insert("w", Tensor::full(&[2], 1.0).with_grad());
    let frozen = store.insert("stats", Tensor::full(&[2], 5.0));
    let mut opt = RmsProp::new(&store, 0.1, 0.0, 0.0);
    store.get_mut(w).accumulate_grad(&[1.0, f64::NAN]);
    let err = opt.step(&mut store, 17).unwrap_err();
    assert!(matches!(err, Error::TrainingFault { iteration: 17, .. }), "{err}");
    assert_eq!(store.get(w).values(), &[1.0, 1.0]);
    store.get_mut(w).zero_grad();
    store.get_mut(w).accumulate_grad(&[1.0, -1.0]);
    opt.step(&mut store, 18).unwrap();
    assert_eq!(store.get(w).values(), &[0.9, 1.1]);
    assert!(store.get(w).grad().is_none());
    assert_eq!(store.get(frozen).values(), &[5.0, 5.0]);
    assert!(opt.accumulators()[1].is_empty());
}

#[test]
fn config_defaults_and_validation() {
    let c = TrainConfig::default();
    assert_eq!((c.batch_size, c.learning_rate, c.rmsprop_decay, c.rmsprop_eps), (6, 2.5e-4, 0.99, 1e-8));
    assert_eq!((c.flip_prob, c.max_rotation, c.scale_range), (0.5, 30.0, [0.75, 1.25]));
    assert_eq!(c.adversarial_state().unwrap(), AdversarialState::default());
    assert_eq!(c.lr_at(59), 2.5e-4);
    assert!((c.lr_at(60) - 2.5e-5).abs() < 1e-20);
    assert!(c.validate().is_ok());
    for bad in [
        TrainConfig { batch_size: 0, ..c.clone() },
        TrainConfig { epochs: 0, ..c.clone() },
        TrainConfig { flip_prob: 1.5, ..c.clone() },
        TrainConfig { scale_range: [1.2, 0.8], ..c.clone() },
        TrainConfig { gamma: 0.0, ..c.clone() },
        TrainConfig { sigma: Some(0.0), ..c.clone() },
    ] {
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
    }
    let json = serde_json::to_string(&c).unwrap();
    assert_eq!(serde_json::from_str::<TrainConfig>(&json).unwrap(), c);
    assert!(serde_json::from_str::<TrainConfig>(r#"{"bogus": 1}"#).is_err());
}

fn augmenter(res: usize) -> Augmenter {
    let net = NetworkConfig { input_res: res, heatmap_res: res / 4, ..tiny_net(14) };
    Augmenter::new(&net, &TrainConfig::default(), JointSchema::Lsp14.flip_pairs()).unwrap()
}

#[test]
fn unperturbed_augmentation_equals_plain_crop() {
    let s = &tiny_samples(1, 4)[0];
    let person = s.record.person().unwrap();
    let aug = augmenter(32);
    let p = aug.apply(&s.image, &s.keypoints(), &person, Augmentation::NONE).unwrap();
    let (crop, t) = crop_input(&s.image, &person, 32, 0.0, 1.0).unwrap();
    assert_eq!(p.input, crop);
    assert_eq!(p.transform, t);
    let want: Tensor<f64> = render_targets(&t.keypoints_to_heatmap(&s.keypoints()), 14, 8, aug.sigma).unwrap();
    assert_eq!(p.target, want);
}

fn symmetric_scene() -> (Tensor<f64>, KeypointSet, PersonDescriptor) {
    let pose = Pose { lean: 0.0, head_tilt: 0.0, upper_arm: [40.0, 40.0], elbow: [20.0, 20.0], thigh: [10.0, 10.0], knee: [5.0, 5.0] };
    let mut fig = Figure::build(&pose, 60.0, &[[1.0; 2]; 6], 3.0, [0.9, 0.2, 0.2]);
    fig.translate([47.5, 20.0]);
    let cfg = SyntheticSceneConfig { image_width: 96, image_height: 96, ..Default::default() };
    let mut spec = SceneSpec::sample(&cfg, &mut RngStream::new(1), &mut RngStream::new(2));
    spec.figure = fig;
    spec.occluders.clear();
    let rec = spec.annotate(JointSchema::Lsp14, "s.png".into(), 1.2, Split::Train);
    let img = crate::dataset::image_to_tensor(&spec.render());
    (img, rec.keypoints(96, 96), rec.person().unwrap())
}

#[test]
fn flip_leaves_symmetric_figure_target_unchanged() {
    let (img, kps, person) = symmetric_scene();
    let aug = augmenter(64);
    let plain = aug.apply(&img, &kps, &person, Augmentation::NONE).unwrap();
    let flipped = aug.apply(&img, &kps, &person, Augmentation { flip: true, ..Augmentation::NONE }).unwrap();
    let pairs = JointSchema::Lsp14.flip_pairs();
    let r = 16 * 16;
    for j in 0..14 {
        let a = &plain.target.values()[j * r..(j + 1) * r];
        let b = &flipped.target.values()[j * r..(j + 1) * r];
        assert!(a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-9), "joint {j}");
    }
    // The flipped target is the mirror of the plain one with channels exchanged.
    let mirrored = mirror_and_swap(&plain.target, &pairs).unwrap();
    assert!(mirrored.values().iter().zip(flipped.target.values()).all(|(x, y)| (x - y).abs() < 1e-9));
}

#[test]
fn rotation_follows_closed_form() {
    let s = &tiny_samples(1, 8)[0];
    let person = s.record.person().unwrap();
    let aug = augmenter(32);
    let p = aug.apply(&s.image, &s.keypoints(), &person, Augmentation { rotation_deg: 30.0, ..Augmentation::NONE }).unwrap();
    let side = 200.0 * person.scale;
    let (sn, cs) = (30f64.to_radians().sin(), 30f64.to_radians().cos());
    for k in s.record.joints.iter() {
        let (dx, dy) = (k.x - person.center[0], k.y - person.center[1]);
        let (rx, ry) = (cs * dx - sn * dy, sn * dx + cs * dy);
        let cx = rx * 32.0 / side + 15.5;
        let cy = ry * 32.0 / side + 15.5;
        let (u, v) = p.transform.image_to_heatmap(k.x, k.y);
        assert!((u - ((cx + 0.5) / 4.0 - 0.5)).abs() < 1e-6 && (v - ((cy + 0.5) / 4.0 - 0.5)).abs() < 1e-6);
    }
}

#[test]
fn sampled_augmentations_respect_ranges() {
    let aug = augmenter(32);
    let mut rng = RngStream::new(3);
    let mut flips = 0;
    for _ in 0..2000 {
        let a = aug.sample(&mut rng);
        assert!(a.rotation_deg.abs() <= 30.0 && (0.75..=1.25).contains(&a.scale));
        flips += usize::from(a.flip);
    }
    assert!((850..1150).contains(&flips), "{flips} flips");
}

fn trainer(cfg: TrainConfig) -> Trainer<f64> {
    Trainer::new(&tiny_net(14), &cfg).unwrap()
}

#[test]
fn one_iteration_follows_algorithm_order() {
    let mut t = trainer(TrainConfig::default());
    let out = t.train_iteration(&tiny_batch(1)).unwrap();
    let mut want = ALGORITHM_STEPS.to_vec();
    want.push(Step::UpdateBalance);
    assert_eq!(out.steps, want);
    let r = out.report;
    assert!(r.l_real >= 0.0 && r.l_fake >= 0.0 && r.l_mse >= 0.0 && r.l_adv >= 0.0);
    assert_eq!(r.l_adv, r.l_fake);
    assert!((r.l_g - (r.l_mse + 0.01 * r.l_adv)).abs() < 1e-12);
    assert!((r.l_d - (r.l_real - r.k_t * r.l_fake)).abs() < 1e-12);
    assert_eq!(t.iteration(), 1);
    assert!((0.0..=1.0).contains(&t.state.k_t));
}

#[test]
fn supervised_mode_has_no_discriminator() {
    let mut t = trainer(TrainConfig { adversarial: false, ..Default::default() });
    assert!(t.discriminator.is_none());
    let out = t.train_iteration(&tiny_batch(1)).unwrap();
    assert_eq!(out.steps, vec![Step::ForwardGenerator, Step::GeneratorMseGrad, Step::UpdateGenerator]);
    assert_eq!((out.report.l_adv, out.report.l_real, out.report.l_fake), (0.0, 0.0, 0.0));
}

#[test]
fn frozen_optimizer_repeats_records() {
    let mut t = trainer(TrainConfig { learning_rate: 0.0, freeze_kt: true, k0: 0.25, ..Default::default() });
    let b = tiny_batch(2);
    let a = t.train_iteration(&b).unwrap().report;
    let c = t.train_iteration(&b).unwrap().report;
    assert_eq!(a, c);
}

#[test]
fn identical_trainers_agree() {
    let b = tiny_batch(5);
    let mut x = trainer(TrainConfig::default());
    let mut y = trainer(TrainConfig::default());
    for _ in 0..2 {
        assert_eq!(x.train_iteration(&b).unwrap().report, y.train_iteration(&b).unwrap().report);
    }
    assert_eq!(x.generator.store().iter().map(|(_, _, t)| t.values().to_vec()).collect::<Vec<_>>(),
               y.generator.store().iter().map(|(_, _, t)| t.values().to_vec()).collect::<Vec<_>>());
}

#[test]
fn accumulated_discriminator_gradient_matches_single_pass() {
    let mut t = trainer(TrainConfig { k0: 0.37, ..Default::default() });
    t.capture_discriminator_grads = true;
    let b = tiny_batch(3);
    let mut g = t.generator.clone();
    let mut d = t.discriminator.clone().unwrap();
    let state = t.state;
    let out = t.train_iteration(&b).unwrap();
    let mut tape = Tape::new();
    let x = tape.constant(&b.images);
    let c = tape.constant(&b.targets);
    let rr = d.forward_discriminator(&mut tape, c, Some(x), BatchNormMode::Train).unwrap();
    let l_real = loss_real(&mut tape, c, rr).unwrap();
    let preds = g.forward_generator(&mut tape, x, BatchNormMode::Train).unwrap();
    let fake = tape.detach(preds[0]);
    let rf = d.forward_discriminator(&mut tape, fake, Some(x), BatchNormMode::Train).unwrap();
    let l_fake = loss_fake(&mut tape, fake, rf).unwrap();
    let l_d = loss_discriminator(&mut tape, l_real, l_fake, &state).unwrap();
    tape.backward(l_d, &mut [d.store_mut()]).unwrap();
    let single: Vec<Vec<f64>> = d.store().iter().filter(|(_, _, t)| t.requires_grad()).map(|(_, _, t)| t.grad().unwrap().to_vec()).collect();
    let two = out.discriminator_grads.unwrap();
    assert_eq!(single.len(), two.len());
    let worst = single.iter().flatten().zip(two.iter().flatten()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-9, "max difference {worst}");
}

#[test]
fn degenerate_coupling_reproduces_baseline() {
    let batches: Vec<_> = (0..3).map(tiny_batch).collect();
    let mut base = trainer(TrainConfig { adversarial: false, ..Default::default() });
    let mut adv = trainer(TrainConfig { lambda_g: 0.0, k0: 0.0, freeze_kt: true, update_discriminator: false, ..Default::default() });
    for b in &batches {
        base.train_iteration(b).unwrap();
        adv.train_iteration(b).unwrap();
        for ((_, n, p), (_, _, q)) in base.generator.store().iter().zip(adv.generator.store().iter()) {
            let same = p.values().iter().zip(q.values()).all(|(a, b)| a.to_bits() == b.to_bits());
            assert!(same, "{n} diverged");
        }
    }
}

#[test]
fn non_finite_input_is_a_training_fault() {
    let mut t = trainer(TrainConfig::default());
    let mut b = tiny_batch(1);
    b.images.values_mut()[0] = f64::NAN;
    assert!(matches!(t.train_iteration(&b), Err(Error::TrainingFault { iteration: 0, .. })));
}

#[test]
fn loop_counts_batches_and_schedules_lr() {
    let samples = tiny_samples(13, 6);
    let cfg = TrainConfig { epochs: 2, lr_decay_epoch: Some(1), adversarial: false, record_wall_clock: false, ..Default::default() };
    let mut t = trainer(cfg.clone());
    let s = train_loop(&mut t, &samples, &[], &JointSchema::Lsp14.flip_pairs(), None, |_| {}).unwrap();
    assert_eq!(s.records.len(), 4);
    assert_eq!(s.records.iter().map(|r| r.iteration).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
    assert_eq!(s.records[1].lr, 2.5e-4);
    assert!((s.records[2].lr - 2.5e-5).abs() < 1e-20);
    assert_eq!(s.epochs.len(), 2);
    assert!(s.epochs[0].heldout.is_none());
    let mut one = trainer(TrainConfig { epochs: 1, ..cfg });
    let s = train_loop(&mut one, &samples[..12], &[], &JointSchema::Lsp14.flip_pairs(), None, |_| {}).unwrap();
    assert_eq!(s.records.len(), 2);
    assert!(train_loop(&mut one, &samples[..3], &[], &JointSchema::Lsp14.flip_pairs(), None, |_| {}).is_err());
}

#[test]
fn loop_writes_log_and_checkpoints_reproducibly() {
    let samples = tiny_samples(14, 7);
    let (train, held) = samples.split_at(12);
    let cfg = TrainConfig { epochs: 2, record_wall_clock: false, ..Default::default() };
    let run = |dir: &std::path::Path| {
        let mut t = trainer(cfg.clone());
        train_loop(&mut t, train, held, &JointSchema::Lsp14.flip_pairs(), Some(dir), |_| {}).unwrap()
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let sa = run(a.path());
    run(b.path());
    let la = std::fs::read_to_string(a.path().join(LOG_FILE)).unwrap();
    assert_eq!(la, std::fs::read_to_string(b.path().join(LOG_FILE)).unwrap());
    let lines: Vec<_> = la.lines().collect();
    assert_eq!(lines[0], LOG_HEADER);
    assert_eq!(lines.len(), 5);
    assert_eq!(lines[1], sa.records[0].csv_row());
    assert!(lines[1].starts_with("0,0,") && lines[1].ends_with(",0"));
    for e in 0..2 {
        assert!(checkpoint_path(a.path(), e).exists());
        assert!(discriminator_checkpoint_path(a.path(), e).exists());
        assert_eq!(std::fs::read(checkpoint_path(a.path(), e)).unwrap(), std::fs::read(checkpoint_path(b.path(), e)).unwrap());
    }
    assert!(sa.epochs.iter().all(|e| e.heldout.is_some()));
}

#[test]
fn patience_stops_when_heldout_stalls() {
    let samples = tiny_samples(8, 9);
    let (train, held) = samples.split_at(6);
    let cfg = TrainConfig { epochs: 10, learning_rate: 0.0, patience: Some(2), adversarial: false, ..Default::default() };
    let mut t = trainer(cfg);
    let s = train_loop(&mut t, train, held, &JointSchema::Lsp14.flip_pairs(), None, |_| {}).unwrap();
    assert!(s.stopped_early);
    assert_eq!(s.epochs.len(), 3);
}

#[test]
fn log_row_uses_nine_significant_digits() {
    let rec = TrainLogRecord {
        iteration: 7,
        epoch: 1,
        report: crate::adversarial::LossReport::new(1.0 / 3.0, 2.0, 0.5, 0.25, &AdversarialState::default()),
        lr: 1e-3,
        wall_ms: 12,
    };
    let row = rec.csv_row();
    assert!(row.starts_with("7,1,3.33333333e-1,2.00000000e0,"), "{row}");
    assert_eq!(row.split(',').count(), LOG_HEADER.split(',').count());
    assert!(row.ends_with(",12"));
}

/// Returns `maps[i % maps.len()]` for the i-th crop of each call.
struct Stub(Vec<Tensor<f64>>);

impl HeatmapModel<f64> for Stub {
    fn predict(&mut self, images: &Tensor<f64>) -> crate::Result<Tensor<f64>> {
        let n = images.shape()[0];
        Tensor::stack(&(0..n).map(|i| self.0[i % self.0.len()].clone()).collect::<Vec<_>>())
    }
}

fn stub_setting() -> (Tensor<f64>, PersonDescriptor, InferSettings) {
    let img = Tensor::<f64>::uniform(&[3, 80, 90], 0.0, 1.0, &mut RngStream::new(1));
    let person = PersonDescriptor::new([41.0, 37.5], 0.3).unwrap();
    (img, person, InferSettings::new(32, JointSchema::Lsp14.flip_pairs()))
}

#[test]
fn perfect_stub_recovers_ground_truth() {
    let (img, person, settings) = stub_setting();
    let (_, t) = crop_input(&img, &person, 32, 0.0, 1.0).unwrap();
    let heat_kps: Vec<_> = (0..14).map(|j| Keypoint::new((j % 7 + 1) as f64, (j / 7 * 3 + 2) as f64, true)).collect();
    let heat_kps = KeypointSet::new(heat_kps, Space::Heatmap { res: 8 }).unwrap();
    let truth = heatmap_to_image_coords(&heat_kps, &t).unwrap();
    let maps: Tensor<f64> = render_targets(&heat_kps, 14, 8, 1.0).unwrap();
    let mirrored = mirror_and_swap(&maps, &settings.pairs).unwrap();
    let det = infer(&mut Stub(vec![maps, mirrored]), &img, &person, &settings).unwrap();
    for (a, b) in det.keypoints.joints().iter().zip(truth.joints()) {
        assert!((a.x - b.x).abs() < 1e-9 && (a.y - b.y).abs() < 1e-9);
    }
    assert!(det.scores.iter().all(|&s| s == 1.0));
}

#[test]
fn symmetric_stub_is_unchanged_by_flip_averaging() {
    let (img, person, mut settings) = stub_setting();
    let mut rng = RngStream::new(2);
    let a = Tensor::<f64>::uniform(&[14, 8, 8], 0.0, 1.0, &mut rng);
    let sym = flip_average(&a, &a, &settings.pairs).unwrap();
    let with = infer(&mut Stub(vec![sym.clone()]), &img, &person, &settings).unwrap();
    settings.flip_average = false;
    let without = infer(&mut Stub(vec![sym]), &img, &person, &settings).unwrap();
    assert_eq!(with.keypoints, without.keypoints);
}

#[test]
fn random_stub_matches_codec_chain() {
    let (img, person, settings) = stub_setting();
    let mut rng = RngStream::new(3);
    let a = Tensor::<f64>::uniform(&[14, 8, 8], 0.0, 1.0, &mut rng);
    let b = Tensor::<f64>::uniform(&[14, 8, 8], 0.0, 1.0, &mut rng);
    let det = infer(&mut Stub(vec![a.clone(), b.clone()]), &img, &person, &settings).unwrap();
    let (_, t) = crop_input(&img, &person, 32, 0.0, 1.0).unwrap();
    let (kps, scores) = decode_argmax(&flip_average(&a, &b, &settings.pairs).unwrap()).unwrap();
    assert_eq!(det.keypoints, heatmap_to_image_coords(&kps, &t).unwrap());
    assert_eq!(det.scores, scores);
}

#[test]
fn batched_inference_equals_single() {
    let samples = tiny_samples(5, 11);
    let mut net = trainer(TrainConfig::default()).generator;
    let mut settings = InferSettings::new(32, JointSchema::Lsp14.flip_pairs());
    settings.chunk = 2;
    let all = predict_samples(&mut net, &samples, &settings).unwrap();
    for (s, k) in samples.iter().zip(&all) {
        let one = infer(&mut net, &s.image, &s.record.person().unwrap(), &settings).unwrap();
        assert_eq!(&one.keypoints, k);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn rmsprop_oracle_random(seed in any::<u64>(), lr in 0.0f64..0.1, rho in 0.0f64..0.999, eps in 0.0f64..1e-3) {
        let mut rng = RngStream::new(seed);
        let n = 4;
        let mut p: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let mut q = p.clone();
        let mut acc = vec![0.0; n];
        let mut a = vec![0.0; n];
        for _ in 0..20 {
            let g: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
            rmsprop_update(&mut p, &g, &mut acc, lr, rho, eps);
            for i in 0..n {
                a[i] = rho * a[i] + (1.0 - rho) * g[i] * g[i];
                q[i] -= lr * g[i] / (a[i].sqrt() + eps);
            }
        }
        for i in 0..n {
            prop_assert!((p[i] - q[i]).abs() <= 1e-12);
        }
    }
}
