use irisforge::attribute::{encode_attributes, PupilState};
use irisforge::image::Image;
use irisforge::models::*;
use irisforge::toydata::{build_toy_dataset, render_toy_iris};
use irisforge::warp::LatentCode;
use irisforge::Error;

fn toy(identity: u64, angle: f64, pupil: PupilState) -> (Image, irisforge::attribute::AttributeVector) {
    let v = encode_attributes(angle, [0, 0], pupil).unwrap();
    (render_toy_iris(identity, &v, 64, 0).unwrap().image, v)
}

fn bundle() -> ModelBundle {
    build_models(&NetConfig::default(), 3).unwrap()
}

#[test]
fn config_validation() {
    assert!(NetConfig::default().validate().is_ok());
    for bad in [
        NetConfig { image_size: 48, ..NetConfig::default() },
        NetConfig { image_size: 96, ..NetConfig::default() },
        NetConfig { latent_dim: 4, ..NetConfig::default() },
        NetConfig { style_dim: 7, ..NetConfig::default() },
        NetConfig { channels: vec![], ..NetConfig::default() },
        NetConfig { num_warps: 0, ..NetConfig::default() },
    ] {
        assert!(matches!(build_models(&bad, 0), Err(Error::InvalidConfig(_))), "{bad:?}");
    }
}

#[test]
fn initialization_is_seeded() {
    let (a, b, c) = (bundle(), bundle(), build_models(&NetConfig::default(), 4).unwrap());
    for kind in NetKind::ALL {
        assert_eq!(a.network_hash(kind), b.network_hash(kind));
        assert_ne!(a.network_hash(kind), c.network_hash(kind));
    }
    assert_eq!(a.fingerprint(), b.fingerprint());
    assert!(a.is_finite());
    assert!(!a.classifier_frozen);
}

#[test]
fn generator_and_critic_shapes() {
    let b = bundle();
    let cfg = &b.config;
    let d = LatentCode::new(vec![0.3; cfg.latent_dim]);
    let s = vec![-0.2; cfg.style_dim];
    let x = generate(&b, &d, &s).unwrap();
    assert_eq!(x.shape(), &[1, 64, 64]);
    assert!(x.data().iter().all(|v| (-1.0..=1.0).contains(v)));
    assert_eq!(x, generate(&b, &d, &s).unwrap());

    let (img, _) = toy(1, 0.0, PupilState::Contraction);
    let out = b.discriminate(&[&img]).unwrap();
    assert_eq!(out.len(), 1);
    assert_eq!(out[0].1.len(), 12);
    assert!(out[0].0.is_finite());

    let f = b.features(&[&img]).unwrap();
    let norm: f32 = f[0].iter().map(|v| v * v).sum::<f32>().sqrt();
    assert_eq!(f[0].len(), cfg.feature_dim);
    assert!((norm - 1.0).abs() < 1e-5);
}

#[test]
fn dimension_errors() {
    let b = bundle();
    let d = LatentCode::new(vec![0.0; 10]);
    assert!(matches!(generate(&b, &d, &[0.0; 16]), Err(Error::DimMismatch { .. })));
    let d = LatentCode::new(vec![0.0; 64]);
    assert!(matches!(generate(&b, &d, &[0.0; 3]), Err(Error::DimMismatch { .. })));
    let small = Image::filled(32, 32, 0.5);
    let y = encode_attributes(0.0, [0, 0], PupilState::Dilation).unwrap();
    assert!(matches!(encode_style(&b, &small, &y), Err(Error::DimMismatch { .. })));
    assert!(encode_identity(&b, &small, 0, 0.0).is_err());
}

#[test]
fn style_codes() {
    let b = bundle();
    let (x1, y1) = toy(1, 0.0, PupilState::Contraction);
    let (x2, y2) = toy(1, 15.0, PupilState::Dilation);
    let s1 = encode_style(&b, &x1, &y1).unwrap();
    assert_eq!(s1.len(), b.config.style_dim);
    assert_eq!(s1, encode_style(&b, &x1, &y1).unwrap());
    let s2 = encode_style(&b, &x2, &y2).unwrap();
    let delta: f32 = s1.iter().zip(&s2).map(|(a, c)| (a - c).powi(2)).sum::<f32>().sqrt();
    assert!(delta > 0.0);
}

#[test]
fn identity_codes_and_bypass() {
    let b = bundle();
    let (x, _) = toy(2, 10.0, PupilState::Contraction);
    let (z, z_bar) = encode_identity(&b, &x, 3, 0.0).unwrap();
    assert_eq!(z, z_bar);
    assert_eq!(z.dim(), b.config.latent_dim);
    for eps in [0.2, -0.7, 1.3] {
        let (z2, shifted) = encode_identity(&b, &x, 5, eps).unwrap();
        assert_eq!(z2, z);
        assert!((shifted.distance(&z) - eps.abs()).abs() < 1e-6);
        assert_eq!(encode_identity(&b, &x, 5, eps).unwrap().1, shifted);
    }
    assert!(matches!(encode_identity(&b, &x, 8, 0.5), Err(Error::IndexOutOfRange { .. })));
}

#[test]
fn style_changes_the_output() {
    let b = bundle();
    let d = LatentCode::new((0..64).map(|i| (i as f64 * 0.37).sin()).collect());
    let s1: Vec<f32> = (0..16).map(|i| (i as f32 * 0.5).cos()).collect();
    let s2: Vec<f32> = s1.iter().map(|v| -v).collect();
    let a = generate(&b, &d, &s1).unwrap();
    let c = generate(&b, &d, &s2).unwrap();
    let diff: f32 = a.data().iter().zip(c.data()).map(|(p, q)| (p - q).abs()).sum::<f32>() / a.len() as f32;
    assert!(diff > 0.0);
    let img = generate_image(&b, &d, &s1).unwrap();
    assert!(img.data().iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut b = bundle();
    b.classifier_frozen = true;
    let p1 = dir.path().join("nested/a.bin");
    save_checkpoint(&b, &p1).unwrap();
    let loaded = load_checkpoint(&p1).unwrap();
    assert!(loaded.classifier_frozen);
    assert_eq!(loaded.config, b.config);
    assert_eq!(loaded.fingerprint(), b.fingerprint());
    let p2 = dir.path().join("b.bin");
    save_checkpoint(&loaded, &p2).unwrap();
    assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
}

#[test]
fn checkpoint_header_lists_every_parameter() {
    let b = bundle();
    let bytes = b.to_checkpoint_bytes();
    assert_eq!(&bytes[..8], CHECKPOINT_MAGIC);
    let mut names = checkpoint_parameter_names(&bytes).unwrap();
    let mut expected = Vec::new();
    for kind in NetKind::ALL {
        for n in b.params(kind).names() {
            assert!(n.starts_with(kind.prefix()), "{n}");
            expected.push(n.to_string());
        }
    }
    names.sort();
    expected.sort();
    assert_eq!(names, expected);
    assert!(names.iter().any(|n| n.starts_with("warper.")));
}

#[test]
fn corrupt_checkpoints_are_rejected() {
    let bytes = bundle().to_checkpoint_bytes();
    let mut bad_magic = bytes.clone();
    bad_magic[0] = b'X';
    assert!(ModelBundle::from_checkpoint_bytes(&bad_magic).is_err());
    let mut bad_header = bytes.clone();
    bad_header[20] ^= 0xff;
    assert!(ModelBundle::from_checkpoint_bytes(&bad_header).is_err());
    assert!(ModelBundle::from_checkpoint_bytes(&bytes[..bytes.len() - 4]).is_err());
    assert!(ModelBundle::from_checkpoint_bytes(&bytes[..10]).is_err());

    let text = String::from_utf8_lossy(&bytes[16..]).into_owned();
    let start = text.find("\"format_version\":").unwrap() + "\"format_version\":".len();
    let mut wrong_version = bytes.clone();
    let pos = 16 + start;
    assert_eq!(wrong_version[pos], b'1');
    wrong_version[pos] = b'9';
    assert!(ModelBundle::from_checkpoint_bytes(&wrong_version).is_err());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("garbage.bin");
    std::fs::write(&path, b"not a checkpoint").unwrap();
    assert!(matches!(load_checkpoint(&path), Err(Error::Load { .. })));
    assert!(load_checkpoint(&dir.path().join("missing.bin")).is_err());
}

#[test]
fn classifier_pretraining_separates_identities() {
    let dir = tempfile::tempdir().unwrap();
    let m = build_toy_dataset(20, 10, 64, 1, dir.path()).unwrap();
    let mut a = bundle();
    let cfg = ClassifierConfig { steps: 150, ..ClassifierConfig::default() };
    let report = pretrain_classifier(&mut a, &m, &cfg, 5).unwrap();
    assert!(a.classifier_frozen);
    assert_eq!(report.steps, 150);
    assert_eq!(report.holdout_images, 40);
    assert!(report.genuine_mean_distance < report.impostor_mean_distance, "{report:?}");
    assert!(report.final_loss.is_finite());

    let mut b = bundle();
    let again = pretrain_classifier(&mut b, &m, &cfg, 5).unwrap();
    assert_eq!(a.network_hash(NetKind::Classifier), b.network_hash(NetKind::Classifier));
    assert_eq!(report, again);
    for kind in [NetKind::Generator, NetKind::StyleEncoder] {
        assert_eq!(a.network_hash(kind), bundle().network_hash(kind));
    }

    let one = irisforge::toydata::Manifest { samples: m.samples[..10].to_vec(), ..m.clone() };
    assert!(matches!(pretrain_classifier(&mut bundle(), &one, &cfg, 0), Err(Error::InsufficientData(_))));
}
