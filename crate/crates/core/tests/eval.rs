use std::path::Path;

use irisforge::eval::*;
use irisforge::image::Image;
use irisforge::synthesis::{Provenance, SYNTH_ID_OFFSET};
use irisforge::toydata::{build_toy_dataset, split_dataset, IrisSample, Manifest};
use irisforge::Error;
use proptest::prelude::*;

fn fake_synth(real: &Manifest, dir: &Path) -> (Manifest, Vec<Provenance>) {
    let mut synth = build_toy_dataset(5, 4, 64, 777, dir).unwrap();
    let ids = synth.identities();
    for s in &mut synth.samples {
        s.identity_id = SYNTH_ID_OFFSET + ids.iter().position(|&i| i == s.identity_id).unwrap() as u64;
    }
    let prov = (0..ids.len())
        .map(|i| Provenance {
            identity_id: SYNTH_ID_OFFSET + i as u64,
            source_path: real.samples[i * 3].path.clone(),
            m: 0,
            epsilon: 1.0,
        })
        .collect();
    (synth, prov)
}

#[test]
fn histogram_worked_example() {
    assert_eq!(histogram(&[0.0, 0.0, 100.0], 2, 0.0, 100.0).unwrap(), vec![2, 1]);
    assert_eq!(histogram(&[], 4, 0.0, 1.0).unwrap(), vec![0; 4]);
    assert_eq!(histogram(&[-5.0, 0.5, 7.0], 2, 0.0, 1.0).unwrap(), vec![1, 2]);
    assert!(matches!(histogram(&[1.0], 0, 0.0, 1.0), Err(Error::InvalidConfig(_))));
    assert!(matches!(histogram(&[1.0], 3, 1.0, 1.0), Err(Error::InvalidConfig(_))));
}

#[test]
fn emitted_histogram_layout() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nested/h.csv");
    emit_histogram(&[0.1, 0.6, 0.7], 2, 0.0, 1.0, &path).unwrap();
    assert_eq!(std::fs::read_to_string(path).unwrap(), "lower,upper,count\n0,0.5,1\n0.5,1,2\n");
}

proptest! {
    #[test]
    fn histogram_conserves_counts(xs in prop::collection::vec(-50.0f64..150.0, 0..200), bins in 1usize..30) {
        let h = histogram(&xs, bins, 0.0, 100.0).unwrap();
        prop_assert_eq!(h.len(), bins);
        prop_assert_eq!(h.iter().sum::<usize>(), xs.len());
    }
}

#[test]
fn quality_on_toy_and_uniform_sets() {
    let dir = tempfile::tempdir().unwrap();
    let toy = build_toy_dataset(10, 5, 64, 3, &dir.path().join("toy")).unwrap();
    let out = dir.path().join("q");
    let q = quality_experiment(&toy, Some(&out), "toy").unwrap();
    assert_eq!(q.reports.len(), 50);
    assert!(q.rejection_rate <= 0.02, "{}", q.rejection_rate);
    assert_eq!(q.histogram.iter().sum::<usize>() + q.failures, 50);
    let csv = std::fs::read_to_string(out.join("hist_toy.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + QUALITY_BINS + 1);
    assert!(csv.lines().last().unwrap().starts_with("255,255,"));
    assert_eq!(std::fs::read_to_string(out.join("quality.csv")).unwrap().lines().count(), 51);

    let flat_dir = dir.path().join("flat");
    std::fs::create_dir_all(&flat_dir).unwrap();
    let mut flat = Manifest::new(64, 0, "flat", &flat_dir);
    for i in 0..4u64 {
        let name = format!("u{i}.png");
        Image::new(64, 64, vec![0.25 * i as f32; 64 * 64]).save_png(&flat_dir.join(&name)).unwrap();
        flat.samples.push(IrisSample {
            path: name,
            identity_id: i,
            attribute: toy.samples[0].attribute,
            pupil: None,
            limbus: None,
        });
    }
    let q = quality_experiment(&flat, None, "flat").unwrap();
    assert_eq!(q.failures, 4);
    assert_eq!(q.rejection_rate, 1.0);
    assert_eq!(q.histogram.iter().sum::<usize>(), 0);

    let empty = Manifest::new(64, 0, "e", dir.path());
    assert!(matches!(quality_experiment(&empty, None, "e"), Err(Error::InsufficientData(_))));
}

#[test]
fn uniqueness_on_toy_sets() {
    let dir = tempfile::tempdir().unwrap();
    let real = build_toy_dataset(8, 4, 64, 5, &dir.path().join("real")).unwrap();
    let (synth, prov) = fake_synth(&real, &dir.path().join("synth"));
    let out = dir.path().join("u");
    let u = uniqueness_experiment(&real, &synth, &prov, 40, 9, Some(&out)).unwrap();
    let mean = |name: &str| u.summary.distributions[name].mean;
    assert!(mean("genuine_real") - mean("impostor_real") >= 0.15);
    assert!(mean("synth_genuine") - mean("synth_impostor") >= 0.15);
    assert!(mean("synth_vs_source") < mean("genuine_real"));
    for (name, scores) in u.scores.named() {
        assert!(!scores.is_empty(), "{name}");
        assert!(scores.len() <= 40, "{name}");
        assert!(scores.iter().all(|s| (0.0..=1.0).contains(s)));
        assert_eq!(u.summary.distributions[name].count, scores.len());
        assert!(out.join(format!("scores_{name}.csv")).exists());
        assert!(out.join(format!("hist_{name}.csv")).exists());
    }
    assert_eq!(u.summary.no_overlap_pairs, 0);
    assert_eq!(u.scores.genuine_real.len(), 40);
    assert_eq!(u.scores.synth_vs_source.len(), 20);
    assert!(out.join("uniqueness_summary.json").exists());

    let again = uniqueness_experiment(&real, &synth, &prov, 40, 9, None).unwrap();
    assert_eq!(again.scores, u.scores);
    let big = uniqueness_experiment(&real, &synth, &prov, 10_000, 9, None).unwrap();
    assert_eq!(big.scores.genuine_real.len(), 48);
    assert_eq!(big.scores.impostor_real.len(), 32 * 31 / 2 - 48);

    let unknown = vec![Provenance { identity_id: 1, source_path: "nope.png".into(), m: 0, epsilon: 1.0 }];
    assert!(matches!(uniqueness_experiment(&real, &synth, &unknown, 40, 9, None), Err(Error::InsufficientData(_))));
}

#[test]
fn utility_contract() {
    let dir = tempfile::tempdir().unwrap();
    let real = build_toy_dataset(8, 4, 64, 12, &dir.path().join("real")).unwrap();
    let (train, test) = split_dataset(&real, 0.5, 1).unwrap();
    let (synth, _) = fake_synth(&train, &dir.path().join("synth"));
    let cfg = UtilityConfig {
        embedding: irisforge::models::ClassifierConfig { steps: 20, batch_size: 4, ..Default::default() },
        ..Default::default()
    };
    let out = dir.path().join("util");
    let r = utility_experiment(&train, &synth, &test, &cfg, 4, Some(&out)).unwrap();
    assert_eq!(r.steps, 20);
    assert_eq!(r.test_images, 16);
    assert_eq!((r.genuine_pairs, r.impostor_pairs), (24, 96));
    assert_eq!(r.real_only.train_identities, 4);
    assert_eq!(r.real_plus_synth.train_identities, 9);
    assert_eq!(r.real_plus_synth.train_images, 36);
    assert!((r.delta_tar_at_far_0_1 - (r.real_plus_synth.tar_at_far_0_1 - r.real_only.tar_at_far_0_1)).abs() < 1e-12);
    assert!(["improved", "unchanged", "degraded"].contains(&r.direction.as_str()));
    for f in ["roc_real_only.csv", "roc_real_plus_synth.csv", "utility_report.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let roc = std::fs::read_to_string(out.join("roc_real_only.csv")).unwrap();
    assert!(roc.starts_with("threshold,far,tar\ninf,0,0\n"));
    assert_eq!(r, utility_experiment(&train, &synth, &test, &cfg, 4, None).unwrap());

    assert!(matches!(utility_experiment(&train, &synth, &train, &cfg, 4, None), Err(Error::InvalidConfig(_))));
}
