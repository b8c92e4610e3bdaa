use std::f64::consts::PI;

use irisforge::attribute::{all_combinations, encode_attributes, PupilState};
use irisforge::image::Image;
use irisforge::irisproc::*;
use irisforge::toydata::{render_scene, render_toy_iris, Circle, SceneGeometry, ToyConfig};
use irisforge::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn close(a: Circle, b: Circle, tol: f64) -> bool {
    (a.cx - b.cx).abs() <= tol && (a.cy - b.cy).abs() <= tol && (a.r - b.r).abs() <= tol
}

#[test]
fn segmentation_recovers_ground_truth() {
    for (i, v) in all_combinations().iter().enumerate() {
        let s = render_toy_iris(100 + i as u64, v, 64, i as u64).unwrap();
        let seg = segment_iris(&s.image);
        assert!(seg.success, "{v}");
        assert!(close(seg.pupil, s.pupil, 2.0), "{v}: pupil {:?} vs {:?}", seg.pupil, s.pupil);
        assert!(close(seg.limbus, s.limbus, 2.0), "{v}: limbus {:?} vs {:?}", seg.limbus, s.limbus);
    }
}

#[test]
fn uniform_image_fails_everywhere() {
    let gray = Image::filled(64, 64, 0.5);
    assert!(!segment_iris(&gray).success);
    assert_eq!(overall_quality(&gray), FAILURE_SCORE);
    assert!(assess_quality(&gray).components.is_none());
    assert!(matches!(extract_code(&gray), Err(Error::SegmentationFailed)));
    assert!(matches!(normalize_iris(&gray, &Segmentation::failed()), Err(Error::SegmentationFailed)));
}

#[test]
fn shifted_iris_moves_the_detected_center() {
    let a = render_toy_iris(3, &encode_attributes(0.0, [0, 0], PupilState::Contraction).unwrap(), 64, 0).unwrap();
    let b = render_toy_iris(3, &encode_attributes(0.0, [5, 5], PupilState::Contraction).unwrap(), 64, 0).unwrap();
    let (sa, sb) = (segment_iris(&a.image), segment_iris(&b.image));
    let (dx, dy) = (sb.pupil.cx - sa.pupil.cx, sb.pupil.cy - sa.pupil.cy);
    assert!((dx - 5.0).abs() <= 2.0 && (dy - 5.0).abs() <= 2.0, "({dx}, {dy})");
}

fn neutral(angle: f64) -> (Image, Segmentation) {
    let cfg = ToyConfig::default();
    let mut g = SceneGeometry::neutral(64, &cfg);
    g.angle = angle;
    let img = render_scene(5, &g, 64, 64, 0.0, 0, &cfg);
    let seg = Segmentation::from_circles(
        Circle::new(g.center.0, g.center.1, g.pupil_radius),
        Circle::new(g.center.0, g.center.1, g.limbus_radius),
        64,
        64,
    );
    (img, seg)
}

#[test]
fn strip_rows_run_from_pupil_to_limbus() {
    let cfg = ToyConfig::default();
    let g = SceneGeometry::neutral(64, &cfg);
    // concentric rings whose intensity grows with radius
    let img = Image::from_fn(64, 64, |x, y| {
        let r = ((x as f64 - 32.0).powi(2) + (y as f64 - 32.0).powi(2)).sqrt();
        (r / 46.0) as f32
    });
    let seg = Segmentation::from_circles(
        Circle::new(32.0, 32.0, g.pupil_radius),
        Circle::new(32.0, 32.0, g.limbus_radius),
        64,
        64,
    );
    let strip = normalize_iris(&img, &seg).unwrap();
    assert_eq!((strip.rows, strip.cols), (8, 64));
    assert_eq!(strip.valid_fraction(), 1.0);
    let row_mean = |r: usize| (0..strip.cols).map(|c| strip.get(r, c)).sum::<f32>() / strip.cols as f32;
    for r in 1..strip.rows {
        assert!(row_mean(r) > row_mean(r - 1));
    }
    assert!((row_mean(0) as f64 - (g.pupil_radius + 1.0) / 46.0).abs() < 0.05);
    assert_eq!(normalize_iris(&img, &seg).unwrap(), strip);
}

/// Circular column shift minimizing the squared difference between strips.
fn best_column_shift(a: &PolarStrip, b: &PolarStrip) -> i64 {
    let cols = a.cols as i64;
    (-(cols / 2)..cols / 2)
        .min_by(|&s, &t| {
            let cost = |k: i64| -> f64 {
                let mut acc = 0.0;
                for r in 0..a.rows {
                    for c in 0..a.cols {
                        let cb = (c as i64 + k).rem_euclid(cols) as usize;
                        acc += (a.get(r, c) - b.get(r, cb)).powi(2) as f64;
                    }
                }
                acc
            };
            cost(s).partial_cmp(&cost(t)).unwrap()
        })
        .unwrap()
}

#[test]
fn rotation_shifts_strip_columns() {
    let (base, seg) = neutral(0.0);
    let a = normalize_iris(&base, &seg).unwrap();
    for angle in [11.25, 22.5, -16.875, 40.0] {
        let (img, _) = neutral(angle);
        let b = normalize_iris(&img, &seg).unwrap();
        let expected = angle * 64.0 / 360.0;
        let got = best_column_shift(&a, &b) as f64;
        assert!((got - expected).abs() <= 1.0, "angle {angle}: shift {got}, expected {expected}");
    }
}

fn random_strip(rng: &mut ChaCha8Rng) -> PolarStrip {
    let n = 8 * 64;
    PolarStrip { rows: 8, cols: 64, values: (0..n).map(|_| rng.random::<f32>()).collect(), mask: vec![true; n] }
}

#[test]
fn negated_strip_flips_every_bit() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let strip = random_strip(&mut rng);
    let neg = PolarStrip { values: strip.values.iter().map(|v| -v).collect(), ..strip.clone() };
    let (a, b) = (iris_code(&strip), iris_code(&neg));
    assert_eq!(a.bits.len(), 2 * 8 * 64);
    for i in 0..a.mask.len() {
        if a.mask[i] {
            assert_ne!(a.bits[2 * i], b.bits[2 * i]);
            assert_ne!(a.bits[2 * i + 1], b.bits[2 * i + 1]);
        }
    }
    assert_eq!(iris_code(&strip), a);
}

#[test]
fn random_strips_are_half_different() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut total = 0.0;
    for _ in 0..100 {
        let a = iris_code(&random_strip(&mut rng));
        let b = iris_code(&random_strip(&mut rng));
        let hd = hamming_distance(&a, &b, 0).unwrap();
        assert!((hd - 0.5).abs() <= 0.1, "{hd}");
        total += hd;
    }
    assert!((total / 100.0 - 0.5).abs() < 0.02);
}

#[test]
fn self_and_complement_matching() {
    let (img, _) = neutral(0.0);
    let a = extract_code(&img).unwrap();
    assert_eq!(match_codes(&a, &a).unwrap(), 1.0);
    let c = a.complement();
    assert_eq!(hamming_distance(&a, &c, 0), Some(1.0));
    assert_eq!(best_hamming_distance(&a, &c, 0).unwrap(), 1.0);
}

#[test]
fn disjoint_masks_do_not_overlap() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut a = iris_code(&random_strip(&mut rng));
    let mut b = a.clone();
    a.mask.iter_mut().for_each(|m| *m = false);
    b.mask.iter_mut().for_each(|m| *m = true);
    assert!(matches!(match_codes(&a, &b), Err(Error::NoOverlap)));
}

#[test]
fn genuine_pairs_score_high() {
    let styles = all_combinations();
    for id in 0..5u64 {
        let a = extract_code(&render_toy_iris(id, &styles[id as usize], 64, 0).unwrap().image).unwrap();
        let b = extract_code(&render_toy_iris(id, &styles[id as usize + 17], 64, 1).unwrap().image).unwrap();
        let sim = match_codes(&a, &b).unwrap();
        assert!(sim > 0.7, "identity {id}: {sim}");
    }
}

fn scene(identity: u64, angle: f64, pupil_factor: f64) -> Image {
    let cfg = ToyConfig::default();
    let mut g = SceneGeometry::neutral(64, &cfg);
    g.angle = angle;
    g.pupil_radius *= pupil_factor;
    render_scene(identity, &g, 64, 64, 0.0, 0, &cfg)
}

#[test]
fn similarity_is_rotation_invariant() {
    // whole-column rotations across the search range
    for id in 0..4u64 {
        let a = extract_code(&scene(id, 0.0, 1.0)).unwrap();
        for k in -8i32..=8 {
            let angle = k as f64 * 360.0 / 64.0;
            let r = extract_code(&scene(id, angle, 1.0)).unwrap();
            let sim = match_codes(&a, &r).unwrap();
            assert!(sim >= 0.98, "identity {id} angle {angle}: {sim}");
        }
    }
}

#[test]
fn quality_of_clean_and_blurred_toys() {
    let mut lower = 0;
    let styles = all_combinations();
    for i in 0..100u64 {
        let s = render_toy_iris(i, &styles[i as usize % styles.len()], 64, i).unwrap();
        let clean = assess_quality(&s.image);
        let c = clean.components.expect("clean toy segments");
        assert!(clean.overall >= 70, "image {i}: {clean:?}");
        assert!(c.circularity >= 95.0, "image {i}: {c:?}");
        let blurred = assess_quality(&s.image.gaussian_blur(3.0));
        match blurred.components {
            Some(b) if b.sharpness < c.sharpness => lower += 1,
            None => lower += 1,
            _ => {}
        }
    }
    assert!(lower >= 95, "{lower} of 100 blurred images scored lower sharpness");
}

#[test]
fn full_annulus_is_fully_usable() {
    let (img, seg) = neutral(0.0);
    let c = quality_components(&img, &seg).unwrap();
    assert_eq!(c.usable_area, 100.0);
    assert!(matches!(quality_components(&img, &Segmentation::failed()), Err(Error::SegmentationFailed)));
}

#[test]
fn combination_rule() {
    assert_eq!(combine_components(&[100.0; 5]), 100);
    assert_eq!(combine_components(&[100.0, 100.0, 100.0, 100.0, 25.0]), 76);
    assert_eq!((100.0 * 0.25f64.powf(0.2)).round(), 76.0);
    assert_eq!(combine_components(&[100.0, 100.0, 0.0, 100.0, 100.0]), 0);
}

#[test]
fn regular_polygon_circularity() {
    let r = 9.0;
    let pts: Vec<(f64, f64)> = (0..32)
        .map(|i| {
            let t = 2.0 * PI * i as f64 / 32.0;
            (32.0 + r * t.cos(), 32.0 + r * t.sin())
        })
        .collect();
    let expected = PI / (32.0 * (PI / 32.0).tan());
    assert!((polygon_circularity(&pts) - expected).abs() < 1e-12);
    let square = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
    assert!((polygon_circularity(&square) - PI / 4.0).abs() < 1e-12);
}

#[test]
fn quality_csv_layout() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("q.csv");
    let (img, _) = neutral(0.0);
    write_quality_csv(&path, &[("a.png".into(), assess_quality(&img)), ("b.png".into(), QualityReport::failed())])
        .unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], QUALITY_CSV_HEADER);
    assert_eq!(lines[1].split(',').count(), 7);
    assert!(lines[2].starts_with("b.png,") && lines[2].ends_with(",255"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matching_is_symmetric(seed_a in any::<u64>(), seed_b in any::<u64>(), drop in 0usize..200) {
        let mut ra = ChaCha8Rng::seed_from_u64(seed_a);
        let mut rb = ChaCha8Rng::seed_from_u64(seed_b);
        let a = iris_code(&random_strip(&mut ra));
        let mut b = iris_code(&random_strip(&mut rb));
        b.mask.iter_mut().take(drop).for_each(|m| *m = false);
        prop_assert_eq!(match_codes(&a, &b).unwrap(), match_codes(&b, &a).unwrap());
    }

    #[test]
    fn overall_score_range(level in 0.0f32..1.0, noise_seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
        let img = Image::from_fn(64, 64, |_, _| (level + 0.3 * rng.random::<f32>()).min(1.0));
        let q = overall_quality(&img);
        prop_assert!(q <= 100 || q == FAILURE_SCORE);
    }
}

#[test]
fn sharpness_reference_is_the_median_toy_energy() {
    let styles = all_combinations();
    let mut energies: Vec<f64> = (0..101u64)
        .map(|i| {
            let s = render_toy_iris(i, &styles[i as usize % styles.len()], 64, i).unwrap();
            log_energy(&s.image, &segment_iris(&s.image), QualityConfig::default().log_sigma)
        })
        .collect();
    energies.sort_by(f64::total_cmp);
    let median = energies[50];
    assert!((SHARPNESS_REF / median - 1.0).abs() < 0.1, "median {median}");
}
