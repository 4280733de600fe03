use moodshift::face::FaceImage;
use moodshift::gan::{
    generator_forward, synthesize, Batch, ExpressionDomain, GanCheckpoint, GanConfig, GanError, GanState, ImageTensor, Tensor,
    CHECKPOINT_FORMAT,
};
use moodshift::synth::synthetic_faces;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small(seed: u64) -> GanConfig {
    GanConfig { image_size: 16, g_width: 4, g_res_blocks: 1, g_edge_kernel: 3, d_width: 4, d_layers: 2, seed, ..GanConfig::default() }
}

fn face(seed: u64) -> FaceImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let px: Vec<u8> = (0..128 * 128 * 3).map(|_| rng.random()).collect();
    FaceImage::new(128, 128, 3, px).unwrap()
}

#[test]
fn generator_preserves_shape_inside_tanh_range() {
    let ckpt = GanCheckpoint::new(small(1)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = ImageTensor::new(2, 16, 16, 3, (0..2 * 16 * 16 * 3).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let y = generator_forward(&ckpt, &x, ExpressionDomain::Fear).unwrap();
    assert_eq!((y.batch, y.height, y.width, y.channels), (2, 16, 16, 3));
    assert!(y.data.iter().all(|v| v.abs() < 1.0));
    assert_eq!(y, generator_forward(&ckpt, &x, ExpressionDomain::Fear).unwrap());

    let odd = ImageTensor::new(1, 10, 10, 3, vec![0.0; 300]).unwrap();
    assert!(matches!(generator_forward(&ckpt, &odd, ExpressionDomain::Fear), Err(GanError::BadShape(_))));
    let gray = ImageTensor::new(1, 16, 16, 1, vec![0.0; 256]).unwrap();
    assert!(matches!(generator_forward(&ckpt, &gray, ExpressionDomain::Fear), Err(GanError::BadShape(_))));
}

#[test]
fn synthesis_is_deterministic_at_full_size() {
    let a = GanCheckpoint::new(small(4)).unwrap();
    let b = GanCheckpoint::new(small(4)).unwrap();
    let f = face(9);
    for d in ExpressionDomain::ALL {
        let out = synthesize(&a, &f, d).unwrap();
        assert_eq!((out.width(), out.height(), out.channels()), (128, 128, 3));
        assert_eq!(out, synthesize(&b, &f, d).unwrap());
    }
    let small_face = FaceImage::filled(64, 64, 3, 0);
    assert!(matches!(synthesize(&a, &small_face, ExpressionDomain::Anger), Err(GanError::BadShape(_))));
    let gray = FaceImage::filled(128, 128, 1, 0);
    assert!(matches!(synthesize(&a, &gray, ExpressionDomain::Anger), Err(GanError::BadShape(_))));
}

#[test]
fn checkpoint_files_round_trip_and_reject_damage() {
    let dir = tempfile::tempdir().unwrap();
    let faces = synthetic_faces(2, 16, 3);
    let set = moodshift::gan::FaceSet::from_faces(&faces, 16).unwrap();
    let mut state = GanCheckpoint::new(GanConfig { batch_size: 4, ..small(2) }).unwrap();
    state.train(&set, 2, |_| {}).unwrap();

    let p1 = dir.path().join("a.ckpt");
    let p2 = dir.path().join("b.ckpt");
    state.save(&p1).unwrap();
    let back = GanCheckpoint::load(&p1).unwrap();
    assert_eq!(back, state);
    back.save(&p2).unwrap();
    let bytes = std::fs::read(&p1).unwrap();
    assert_eq!(bytes, std::fs::read(&p2).unwrap());

    std::fs::write(&p2, &bytes[..bytes.len() - 100]).unwrap();
    assert!(matches!(GanCheckpoint::load(&p2), Err(GanError::ChecksumMismatch)));

    let v2 = String::from_utf8_lossy(&bytes).replacen(CHECKPOINT_FORMAT, "ganckpt/2", 1).into_bytes();
    let mut tagged = bytes.clone();
    tagged[..CHECKPOINT_FORMAT.len()].copy_from_slice(&v2[..CHECKPOINT_FORMAT.len()]);
    std::fs::write(&p2, &tagged).unwrap();
    assert!(matches!(GanCheckpoint::load(&p2), Err(GanError::VersionMismatch(_))));
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn log_softmax_at(logits: &[f64], k: usize) -> f64 {
    let m = logits.iter().cloned().fold(f64::MIN, f64::max);
    let lse = m + logits.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    logits[k] - lse
}

#[test]
fn objective_components_match_scalar_recomputation() {
    let cfg = GanConfig { image_size: 4, g_width: 2, g_res_blocks: 1, g_edge_kernel: 3, d_width: 2, d_layers: 2, seed: 8, ..GanConfig::default() };
    let state = GanState::<f64>::new(cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let images = Tensor::from_vec(3, 3, 4, 4, (0..3 * 48).map(|_| rng.random_range(-1.0..1.0)).collect());
    let batch = Batch { images, labels: vec![0, 4, 6], targets: vec![2, 4, 1] };
    let obj = state.objective(&batch);

    let d = &state.discriminator;
    let fake = state.generate(&batch.images, &batch.targets);
    let real_out = d.infer(&state.d_params, &batch.images);
    let fake_out = d.infer(&state.d_params, &fake);
    let mean = |v: &[f64], f: &dyn Fn(f64) -> f64| v.iter().map(|&z| f(z)).sum::<f64>() / v.len() as f64;
    let ce = |logits: &Tensor<f64>, labels: &[usize]| {
        let mut s = 0.0;
        for (i, &l) in labels.iter().enumerate() {
            s -= log_softmax_at(&logits.data[i * 7..i * 7 + 7], l);
        }
        s / labels.len() as f64
    };
    let real = mean(&real_out.src.data, &|z| softplus(-z));
    let fake_term = mean(&fake_out.src.data, &softplus);
    let cls_real = ce(&real_out.cls, &batch.labels);
    let close = |a: f64, b: f64| (a - b).abs() < 1e-10 * (1.0 + b.abs());
    assert!(close(obj.d.real, real) && close(obj.d.fake, fake_term) && close(obj.d.cls_real, cls_real), "{:?}", obj.d);
    assert!(close(obj.d.total, real + fake_term + cls_real));

    let rec = state.generate(&fake, &batch.labels);
    let l1 = rec.data.iter().zip(&batch.images.data).map(|(a, b)| (a - b).abs()).sum::<f64>() / rec.data.len() as f64;
    let g_adv = mean(&fake_out.src.data, &|z| softplus(-z));
    let g_cls = ce(&fake_out.cls, &batch.targets);
    assert!(close(obj.g.adv, g_adv) && close(obj.g.cls_fake, g_cls) && close(obj.g.rec, l1), "{:?}", obj.g);
    assert!(close(obj.g.total, g_adv + g_cls + 10.0 * l1));
}

#[test]
fn metric_streams_repeat_for_a_seed() {
    let faces = synthetic_faces(3, 16, 5);
    let set = moodshift::gan::FaceSet::from_faces(&faces, 16).unwrap();
    let run = || {
        let mut s = GanCheckpoint::new(GanConfig { batch_size: 4, ..small(6) }).unwrap();
        let mut log = Vec::new();
        s.train(&set, 3, |m| log.push(*m)).unwrap();
        (log, s.checksum())
    };
    assert_eq!(run(), run());
}
