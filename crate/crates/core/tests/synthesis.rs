use std::collections::{BTreeMap, BTreeSet};

use irisforge::models::{build_models, encode_identity, ModelBundle, NetConfig, NetKind};
use irisforge::synthesis::*;
use irisforge::toydata::{build_toy_dataset, load_manifest, Manifest};
use irisforge::Error;

fn setup(dir: &std::path::Path) -> (ModelBundle, Manifest) {
    (build_models(&NetConfig::default(), 6).unwrap(), build_toy_dataset(6, 4, 64, 8, &dir.join("toy")).unwrap())
}

#[test]
fn minting_shifts_by_epsilon() {
    let dir = tempfile::tempdir().unwrap();
    let (b, m) = setup(dir.path());
    let img = m.load_image(&m.samples[3]).unwrap();
    let (z, _) = encode_identity(&b, &img, 0, 0.0).unwrap();
    let id = mint_identity(&b, &img, &m.samples[3], 2, -0.8, SYNTH_ID_OFFSET + 1).unwrap();
    assert!((id.code.distance(&z) - 0.8).abs() < 1e-6);
    assert_eq!((id.m, id.epsilon, id.source_identity), (2, -0.8, m.samples[3].identity_id));
    assert_eq!(id, mint_identity(&b, &img, &m.samples[3], 2, -0.8, SYNTH_ID_OFFSET + 1).unwrap());
    let bypass = mint_identity(&b, &img, &m.samples[3], 2, 0.0, SYNTH_ID_OFFSET).unwrap();
    assert_eq!(bypass.code, z);
}

#[test]
fn synthesis_depends_on_style_and_checks_the_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let (b, m) = setup(dir.path());
    let img = m.load_image(&m.samples[0]).unwrap();
    let id = mint_identity(&b, &img, &m.samples[0], 1, 1.0, SYNTH_ID_OFFSET).unwrap();
    let (s1, s2) = (&m.samples[1], &m.samples[6]);
    assert_ne!(s1.attribute, s2.attribute);
    let x1 = synthesize_image(&b, &id, &m.load_image(s1).unwrap(), &s1.attribute).unwrap();
    let x2 = synthesize_image(&b, &id, &m.load_image(s2).unwrap(), &s2.attribute).unwrap();
    assert_eq!(x1.shape(), &[1, 64, 64]);
    assert!(x1.data().iter().all(|v| (-1.0..=1.0).contains(v)));
    let diff: f32 = x1.data().iter().zip(x2.data()).map(|(a, c)| (a - c).abs()).sum::<f32>() / x1.len() as f32;
    assert!(diff > 0.0);
    assert_eq!(x1, synthesize_image(&b, &id, &m.load_image(s1).unwrap(), &s1.attribute).unwrap());

    let mut other = b.clone();
    other.params_mut(NetKind::Generator).tensors_mut()[0].data_mut()[0] += 1.0;
    let r = synthesize_image(&other, &id, &m.load_image(s1).unwrap(), &s1.attribute);
    assert!(matches!(r, Err(Error::CheckpointMismatch { .. })));
}

#[test]
fn generated_dataset_contract() {
    let dir = tempfile::tempdir().unwrap();
    let (b, m) = setup(dir.path());
    let out = dir.path().join("synth_a");
    let ds = generate_dataset(&b, &m, 10, 3, 4, &out).unwrap();
    assert_eq!(ds.manifest.len(), 30);
    assert_eq!(ds.identities.len(), 10);

    let labels = ds.manifest.identities();
    assert_eq!(labels, (0..10).map(|i| SYNTH_ID_OFFSET + i).collect::<Vec<_>>());
    for (i, id) in ds.identities.iter().enumerate() {
        assert_eq!(id.m, i % b.config.num_warps);
        assert!((0.5..=1.5).contains(&id.epsilon.abs()));
        assert_eq!(id.checkpoint, b.fingerprint());
    }
    // distinct styles per identity while the source offers enough
    for (_, idx) in ds.manifest.by_identity() {
        let styles: BTreeSet<_> = idx.iter().map(|&i| ds.manifest.samples[i].attribute).collect();
        assert_eq!(styles.len(), 3);
    }
    for a in 0..ds.identities.len() {
        for c in a + 1..ds.identities.len() {
            assert!(ds.identities[a].code.distance(&ds.identities[c].code) > 0.0);
        }
    }

    let loaded = load_manifest(&out.join("manifest.json")).unwrap();
    assert_eq!(loaded.samples, ds.manifest.samples);
    let prov = load_provenance(&out.join(PROVENANCE_FILE)).unwrap();
    assert_eq!(prov.len(), 10);
    let by_id: BTreeMap<u64, &Provenance> = prov.iter().map(|p| (p.identity_id, p)).collect();
    for id in &ds.identities {
        let p = by_id[&id.identity_id];
        assert_eq!((p.m, p.epsilon, &p.source_path), (id.m, id.epsilon, &id.source_path));
    }

    let source_styles: BTreeSet<_> = m.samples.iter().map(|s| s.attribute).collect();
    for s in &ds.manifest.samples {
        assert!(source_styles.contains(&s.attribute));
        let stored = ds.manifest.load_image(s).unwrap();
        assert_eq!((stored.width(), stored.height()), (64, 64));
    }

    let again = generate_dataset(&b, &m, 10, 3, 4, &dir.path().join("synth_b")).unwrap();
    assert_eq!(again.manifest.content_hash().unwrap(), ds.manifest.content_hash().unwrap());
    assert_eq!(again.identities, ds.identities);
    for s in &ds.manifest.samples {
        assert_eq!(std::fs::read(ds.manifest.resolve(s)).unwrap(), std::fs::read(again.manifest.resolve(s)).unwrap());
    }
}

#[test]
fn dataset_images_match_direct_synthesis() {
    let dir = tempfile::tempdir().unwrap();
    let (b, m) = setup(dir.path());
    let ds = generate_dataset(&b, &m, 2, 2, 9, &dir.path().join("s")).unwrap();
    let id = &ds.identities[1];
    let s = ds.manifest.samples.iter().find(|s| s.identity_id == id.identity_id).unwrap();
    let stored = ds.manifest.load_image(s).unwrap();
    let matches = m.samples.iter().filter(|r| r.attribute == s.attribute).any(|r| {
        let x = synthesize_image(&b, id, &m.load_image(r).unwrap(), &r.attribute).unwrap();
        irisforge::image::Image::from_tensor(&x).quantized() == stored
    });
    assert!(matches);
}

#[test]
fn invalid_requests() {
    let dir = tempfile::tempdir().unwrap();
    let (b, m) = setup(dir.path());
    let empty = Manifest { samples: vec![], ..m.clone() };
    assert!(generate_dataset(&b, &empty, 2, 2, 0, &dir.path().join("x")).is_err());
    assert!(generate_dataset(&b, &m, 0, 2, 0, &dir.path().join("y")).is_err());
    let img = m.load_image(&m.samples[0]).unwrap();
    assert!(matches!(mint_identity(&b, &img, &m.samples[0], 99, 1.0, 0), Err(Error::IndexOutOfRange { .. })));
}
