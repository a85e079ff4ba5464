use std::collections::BTreeSet;

use coordgan_core::coords::{crop_psi, macro_coord, Coord, PatchLayout, Topology};
use coordgan_core::data::{sample_real_macro, synth_dataset, Sampling, SynthKind};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn gradient_hue_increases_left_to_right() {
    for seed in 0..5 {
        let data = synth_dataset(SynthKind::GradientHue, 40, 16, 16, seed).unwrap();
        for img in &data.images {
            for y in 0..16 {
                for x in 1..16 {
                    assert!(
                        img.luminance(y, x) > img.luminance(y, x - 1),
                        "seed {seed} row {y} col {x}"
                    );
                }
            }
        }
    }
}

#[test]
fn synthetic_sets_are_reproducible() {
    for kind in [
        SynthKind::GradientHue,
        SynthKind::PlacedBlobs,
        SynthKind::Rings,
    ] {
        let a = synth_dataset(kind, 5, 16, 16, 3).unwrap();
        let b = synth_dataset(kind, 5, 16, 16, 3).unwrap();
        let c = synth_dataset(kind, 5, 16, 16, 4).unwrap();
        assert_eq!(a.images, b.images);
        assert_ne!(a.images, c.images, "{}", kind.name());
    }
    assert!("squares".parse::<SynthKind>().is_err());
}

#[test]
fn blob_centre_outshines_corner() {
    let data = synth_dataset(SynthKind::PlacedBlobs, 1000, 16, 16, 9).unwrap();
    // the red blob sits near x = -0.45, y = -0.4, which is pixel (4, 4) on a 16-pixel axis
    let mean = |y, x| {
        data.images
            .iter()
            .map(|im| im.get(0, y, x) as f64)
            .sum::<f64>()
            / 1000.0
    };
    assert!(
        mean(4, 4) > mean(0, 0) + 0.1,
        "{} vs {}",
        mean(4, 4),
        mean(0, 0)
    );
    assert!(mean(4, 4) > mean(15, 15) + 0.1);
}

#[test]
fn values_are_in_range() {
    for kind in [
        SynthKind::GradientHue,
        SynthKind::PlacedBlobs,
        SynthKind::Rings,
    ] {
        let data = synth_dataset(kind, 20, 12, 8, 1).unwrap();
        for im in &data.images {
            assert!(im.tensor().data().iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }
}

#[test]
fn single_position_layout_is_centred() {
    let layout = PatchLayout::planar(2, 2, 4).unwrap();
    let data = synth_dataset(SynthKind::Rings, 4, 8, 8, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let s = sample_real_macro(&data, &layout, Sampling::Discrete, &mut rng).unwrap();
        assert_eq!(s.coord, Coord::Planar { y: 0.0, x: 0.0 });
    }
}

#[test]
fn samples_are_crops() {
    let data = synth_dataset(SynthKind::GradientHue, 6, 16, 16, 5).unwrap();
    let layouts = [
        PatchLayout::planar(4, 2, 4).unwrap(),
        PatchLayout::new(4, 4, 2, 3, 4, Topology::Cylindrical).unwrap(),
    ];
    for layout in layouts {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let s = sample_real_macro(&data, &layout, Sampling::Discrete, &mut rng).unwrap();
            let anchor = s.anchor().unwrap();
            let image = data.images[s.image].tensor();
            assert_eq!(s.patch, crop_psi(image, &layout, anchor).unwrap());
            assert_eq!(s.coord, macro_coord(&layout, anchor.0, anchor.1).unwrap());
        }
    }
}

#[test]
fn every_anchor_is_drawn() {
    let data = synth_dataset(SynthKind::GradientHue, 3, 16, 16, 5).unwrap();
    let layout = PatchLayout::planar(4, 2, 4).unwrap();
    let p = layout.anchors().len();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let seen: BTreeSet<_> = (0..10 * p)
        .map(|_| {
            sample_real_macro(&data, &layout, Sampling::Discrete, &mut rng)
                .unwrap()
                .anchor()
                .unwrap()
        })
        .collect();
    assert_eq!(seen.len(), p);
}

#[test]
fn continuous_sampling_lands_on_pixels() {
    let data = synth_dataset(SynthKind::GradientHue, 3, 16, 16, 5).unwrap();
    let layout = PatchLayout::planar(4, 2, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut off_grid = 0;
    for _ in 0..100 {
        let s = sample_real_macro(&data, &layout, Sampling::Continuous, &mut rng).unwrap();
        assert_eq!(s.patch.shape(), &[3, 8, 8]);
        assert!(s.coord.in_unit_range());
        let (y, x) = (s.pos.0 * 4.0, s.pos.1 * 4.0);
        assert_eq!((y.fract(), x.fract()), (0.0, 0.0));
        off_grid += s.anchor().is_none() as usize;
    }
    assert!(off_grid > 0);
    let cyl = PatchLayout::new(4, 4, 2, 2, 4, Topology::Cylindrical).unwrap();
    assert!(sample_real_macro(&data, &cyl, Sampling::Continuous, &mut rng).is_err());
}

#[test]
fn mismatched_canvas_is_rejected() {
    let data = synth_dataset(SynthKind::GradientHue, 2, 12, 12, 5).unwrap();
    let layout = PatchLayout::planar(4, 2, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(sample_real_macro(&data, &layout, Sampling::Discrete, &mut rng).is_err());
}
