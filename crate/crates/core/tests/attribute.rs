use irisforge::attribute::*;
use irisforge::image::Image;
use irisforge::irisproc::segment_iris;
use irisforge::toydata::{render_scene, SceneGeometry, ToyConfig};
use irisforge::Error;
use proptest::prelude::*;

#[test]
fn every_combination_round_trips() {
    let mut seen = std::collections::HashSet::new();
    for &angle in &ANGLES {
        for &shift in &SHIFTS {
            for pupil in [PupilState::Contraction, PupilState::Dilation] {
                let v = encode_attributes(angle, shift, pupil).unwrap();
                let s = decode_attributes(&v).unwrap();
                assert_eq!((s.angle, s.shift, s.pupil), (angle, shift, pupil));
                assert_eq!(v.bits().iter().filter(|&&b| b == 1).count(), 3);
                assert!(seen.insert(v));
            }
        }
    }
    assert_eq!(seen.len(), COMBINATIONS);
}

#[test]
fn worked_example() {
    let v = encode_attributes(10.0, [0, 0], PupilState::Dilation).unwrap();
    assert_eq!(v.bits(), &[0, 1, 0, 0, 0, 1, 0, 0, 0, 0, 0, 1]);
    assert_eq!(v.to_string(), "010001000001");
    let s = decode_attributes(&AttributeVector::from_bits([1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0])).unwrap();
    assert_eq!((s.angle, s.shift, s.pupil), (0.0, [0, 0], PupilState::Contraction));
}

#[test]
fn malformed_vectors_are_rejected() {
    let two_angles = AttributeVector::from_bits([0, 0, 1, 1, 0, 1, 0, 0, 0, 0, 1, 0]);
    assert!(matches!(decode_attributes(&two_angles), Err(Error::InvalidAttribute(_))));
    let no_pupil = AttributeVector::from_bits([1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0]);
    assert!(decode_attributes(&no_pupil).is_err());
    assert!(encode_attributes(11.0, [0, 0], PupilState::Dilation).is_err());
    assert!(encode_attributes(10.0, [1, 0], PupilState::Dilation).is_err());
    assert!("01000010000".parse::<AttributeVector>().is_err());
    assert!("01000010000x".parse::<AttributeVector>().is_err());
}

#[test]
fn serializes_as_bit_string() {
    let v = encode_attributes(15.0, [-10, 10], PupilState::Contraction).unwrap();
    let json = serde_json::to_string(&v).unwrap();
    assert_eq!(json, "\"000100001010\"");
    assert_eq!(serde_json::from_str::<AttributeVector>(&json).unwrap(), v);
}

fn neutral_factors() -> PupilFactors {
    PupilFactors { contraction: 1.0, dilation: 1.0 }
}

#[test]
fn identity_transform_is_a_center_crop() {
    let img = Image::from_fn(96, 96, |x, y| ((x * 7 + y * 13) % 255) as f32 / 255.0);
    let v = encode_attributes(0.0, [0, 0], PupilState::Contraction).unwrap();
    let out = apply_style_transform(&img, (48.0, 48.0), &v, 64, None, &neutral_factors()).unwrap();
    for y in 0..64 {
        for x in 0..64 {
            assert_eq!(out.get(x, y), img.get(x + 16, y + 16));
        }
    }
}

#[test]
fn crop_outside_source_is_a_geometry_error() {
    let img = Image::filled(64, 64, 0.5);
    let v = encode_attributes(18.0, [10, 10], PupilState::Contraction).unwrap();
    let r = apply_style_transform(&img, (32.0, 32.0), &v, 64, None, &neutral_factors());
    assert!(matches!(r, Err(Error::Geometry(_))));
}

#[test]
fn pupil_remap_requires_radii() {
    let img = Image::filled(128, 128, 0.5);
    let v = encode_attributes(0.0, [0, 0], PupilState::Dilation).unwrap();
    let r = apply_style_transform(&img, (64.0, 64.0), &v, 64, None, &PupilFactors::default());
    assert!(matches!(r, Err(Error::MissingAnnotation(_))));
}

fn source_scene(size: usize, scale: usize) -> (Image, IrisRadii, ToyConfig) {
    let cfg = ToyConfig::default();
    let mut geom = SceneGeometry::neutral(64 * scale, &cfg);
    geom.center = ((size / 2) as f64, (size / 2) as f64);
    let img = render_scene(7, &geom, size, size, 0.0, 0, &cfg);
    (img, IrisRadii { pupil: geom.pupil_radius, limbus: geom.limbus_radius }, cfg)
}

fn direct(angle: f64, shift: [f64; 2], pupil_factor: f64, scale: usize, cfg: &ToyConfig) -> Image {
    let size = 64 * scale;
    let mut geom = SceneGeometry::neutral(size, cfg);
    geom.center.0 += shift[0];
    geom.center.1 += shift[1];
    geom.pupil_radius *= pupil_factor;
    geom.angle = angle;
    render_scene(7, &geom, size, size, 0.0, 0, cfg)
}

#[test]
fn transformed_toy_matches_direct_render() {
    let (src, radii, cfg) = source_scene(96, 1);
    let v = encode_attributes(10.0, [0, 0], PupilState::Dilation).unwrap();
    let out = apply_style_transform(&src, (48.0, 48.0), &v, 64, Some(radii), &cfg.factors).unwrap();
    let diff = out.mean_abs_diff(&direct(10.0, [0.0, 0.0], cfg.factors.dilation, 1, &cfg));
    assert!(diff < 2.0 / 255.0, "mean abs diff {diff}");
}

#[test]
fn composed_rotations_add() {
    // 128 px scene so two bilinear passes stay within tolerance of the texture
    let (src, _, cfg) = source_scene(256, 2);
    let f = neutral_factors();
    let v10 = encode_attributes(10.0, [0, 0], PupilState::Contraction).unwrap();
    let v12 = encode_attributes(12.0, [0, 0], PupilState::Contraction).unwrap();
    let rotate = |first: &AttributeVector, second: &AttributeVector| {
        let once = apply_style_transform(&src, (128.0, 128.0), first, 192, None, &f).unwrap();
        apply_style_transform(&once, (96.0, 96.0), second, 128, None, &f).unwrap()
    };
    let a = rotate(&v10, &v12);
    let b = rotate(&v12, &v10);
    let diff = a.mean_abs_diff(&direct(22.0, [0.0, 0.0], 1.0, 2, &cfg));
    assert!(diff < 2.0 / 255.0, "mean abs diff {diff}");
    assert!(a.mean_abs_diff(&b) < 2.0 / 255.0);
}

#[test]
fn shift_moves_the_segmented_center() {
    let (src, _, _) = source_scene(96, 1);
    let f = neutral_factors();
    let base = encode_attributes(0.0, [0, 0], PupilState::Contraction).unwrap();
    let moved = encode_attributes(0.0, [5, 5], PupilState::Contraction).unwrap();
    let a = segment_iris(&apply_style_transform(&src, (48.0, 48.0), &base, 64, None, &f).unwrap());
    let b = segment_iris(&apply_style_transform(&src, (48.0, 48.0), &moved, 64, None, &f).unwrap());
    assert!(a.success && b.success);
    let (dx, dy) = (b.pupil.cx - a.pupil.cx, b.pupil.cy - a.pupil.cy);
    assert!((dx - 5.0).abs() <= 1.0 && (dy - 5.0).abs() <= 1.0, "moved by ({dx}, {dy})");
}

proptest! {
    #[test]
    fn combination_index_round_trips(i in 0usize..COMBINATIONS) {
        let v = AttributeVector::from_combination_index(i);
        prop_assert_eq!(v.combination_index().unwrap(), i);
        let s = v.decode().unwrap();
        prop_assert_eq!(encode_attributes(s.angle, s.shift, s.pupil).unwrap(), v);
    }

    #[test]
    fn random_bit_patterns_decode_only_when_one_hot(bits in proptest::array::uniform12(0u8..2)) {
        let v = AttributeVector::from_bits(bits);
        let one_hot = |r: std::ops::Range<usize>| bits[r].iter().filter(|&&b| b == 1).count() == 1;
        let valid = one_hot(0..5) && one_hot(5..10) && one_hot(10..12);
        prop_assert_eq!(decode_attributes(&v).is_ok(), valid);
    }
}
