use std::collections::BTreeMap;

use proptest::prelude::*;
use synthex_forge::augment::{
    apply, apply_effect, apply_labeled, plan, AugmentationPlan, DropoutMode, Effect, Labeled, Level,
};
use synthex_forge::{Image, Mask};

fn textured(w: usize, h: usize, phase: u64) -> Image {
    Image::from_fn(w, h, |x, y| 0.1 + 0.8 * (((x * 13 + y * 7) as u64 + phase) % 29) as f64 / 28.0)
}

fn level() -> impl Strategy<Value = Level> {
    prop_oneof![Just(Level::Regular), Just(Level::Strong)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn same_seed_same_output(seed in any::<u64>(), lvl in level(), w in 8usize..48, h in 8usize..48) {
        let img = textured(w, h, seed % 29);
        let p = plan(lvl, seed);
        prop_assert_eq!(&plan(lvl, seed), &p);
        let a = apply(&img, &p).unwrap();
        prop_assert_eq!(&apply(&img, &p).unwrap(), &a);
        let replayed = AugmentationPlan::from_json(&p.to_json()).unwrap();
        prop_assert_eq!(apply(&img, &replayed).unwrap(), a);
    }

    #[test]
    fn output_keeps_shape_and_range(seed in any::<u64>(), lvl in level(), w in 4usize..40, h in 4usize..40) {
        let img = textured(w, h, seed % 29);
        let target = Labeled {
            image: img,
            mask: Some(Mask::from_fn(w, h, |x, _| (x % 3) as u8)),
            landmarks: vec![Some([w as f64 / 2.0, h as f64 / 2.0]), None],
        };
        let p = plan(lvl, seed);
        let out = apply_labeled(&target, &p).unwrap();
        prop_assert_eq!(out.image.dims(), (w, h));
        prop_assert_eq!(out.mask.as_ref().unwrap().dims(), (w, h));
        prop_assert_eq!(out.landmarks.len(), 2);
        prop_assert!(out.landmarks[1].is_none());
        prop_assert!(out.image.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert!(out.mask.unwrap().as_slice().iter().all(|&c| c <= 2));
    }

    #[test]
    fn plans_have_regular_prefix(seed in any::<u64>()) {
        let p = plan(Level::Strong, seed);
        let ids: Vec<&str> = p.effects.iter().map(|e| e.id()).collect();
        prop_assert_eq!(&ids[..3], &["gaussian_noise", "gamma", "random_crop"]);
        prop_assert!(p.strong_count() <= 2);
        prop_assert_eq!(plan(Level::Regular, seed).strong_count(), 0);
    }

    #[test]
    fn pixel_dropout_count_is_exact(rate in 0.0f64..0.5, seed in any::<u64>(), w in 4usize..64, h in 4usize..64) {
        let img = textured(w, h, 3);
        let e = Effect::Dropout(DropoutMode::Pixels { rate, seed });
        let out = apply_effect(&Labeled { image: img, mask: None, landmarks: vec![] }, &e);
        let zeros = out.image.as_slice().iter().filter(|&&v| v == 0.0).count();
        prop_assert_eq!(zeros, (rate * (w * h) as f64).round() as usize);
    }
}

/// Four discs (classes 1..=4) with a landmark at each center.
fn discs(w: usize, h: usize) -> (Labeled, BTreeMap<u8, [f64; 2]>) {
    let centers = BTreeMap::from([
        (1u8, [0.3 * w as f64, 0.3 * h as f64]),
        (2, [0.7 * w as f64, 0.3 * h as f64]),
        (3, [0.3 * w as f64, 0.7 * h as f64]),
        (4, [0.7 * w as f64, 0.7 * h as f64]),
    ]);
    let r = 0.12 * w.min(h) as f64;
    let mask = Mask::from_fn(w, h, |x, y| {
        centers
            .iter()
            .find(|(_, c)| (x as f64 - c[0]).hypot(y as f64 - c[1]) < r)
            .map_or(0, |(&k, _)| k)
    });
    let image = mask.map(|&c| 0.2 + 0.15 * c as f64);
    let landmarks = centers.values().map(|c| Some(*c)).collect();
    (Labeled { image, mask: Some(mask), landmarks }, centers)
}

#[test]
fn landmarks_stay_inside_their_structure_under_geometric_effects() {
    let (w, h) = (96, 80);
    let (target, centers) = discs(w, h);
    let mut checked: BTreeMap<&str, usize> = BTreeMap::new();
    for seed in 0..3000u64 {
        for e in plan(Level::Strong, seed).effects.iter().filter(|e| e.is_geometric()) {
            let out = apply_effect(&target, e);
            let mask = out.mask.as_ref().unwrap();
            for ((&class, _), lm) in centers.iter().zip(&out.landmarks) {
                let Some([x, y]) = *lm else { continue };
                let (xi, yi) = (x.round() as usize, y.round() as usize);
                assert_eq!(*mask.get(xi, yi), class, "{} seed {seed} class {class} at ({x:.2}, {y:.2})", e.id());
                *checked.entry(e.id()).or_default() += 1;
            }
        }
    }
    for id in ["random_crop", "affine", "distort"] {
        assert!(checked.get(id).copied().unwrap_or(0) >= 100, "{id}: {checked:?}");
    }
}

#[test]
fn photometric_effects_leave_labels_alone() {
    let (target, _) = discs(64, 64);
    for seed in 0..200u64 {
        for e in plan(Level::Strong, seed).effects.iter().filter(|e| !e.is_geometric()) {
            let out = apply_effect(&target, e);
            assert_eq!(out.mask, target.mask, "{}", e.id());
            assert_eq!(out.landmarks, target.landmarks, "{}", e.id());
        }
    }
}

#[test]
fn non_finite_input_is_rejected() {
    let mut img = textured(8, 8, 0);
    img.as_mut_slice()[5] = f64::NAN;
    assert!(apply(&img, &plan(Level::Regular, 1)).is_err());
    let bad = Labeled {
        image: textured(8, 8, 0),
        mask: Some(Mask::filled(4, 8, 0)),
        landmarks: vec![],
    };
    assert!(apply_labeled(&bad, &plan(Level::Regular, 1)).is_err());
}
