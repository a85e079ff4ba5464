use coordgan_core::coords::{crop_pixels, cylindrical_embed, PatchLayout, Topology};
use coordgan_core::nn::{build_models, ArchConfig, ModelBundle};
use coordgan_core::render::{
    coord_filmstrip, generate_extended, generate_full, generate_macro, generate_panorama,
    latent_filmstrip, patch_guided_generate,
};

fn bundle(layout: &PatchLayout, q_head: bool) -> ModelBundle {
    let arch = ArchConfig {
        coord_dim: layout.coord_dim(),
        q_head,
        ..Default::default()
    };
    build_models(arch, 21).unwrap()
}

fn z(k: u32) -> Vec<f32> {
    (0..16)
        .map(|i| ((i * 7 + k * 3) % 11) as f32 / 5.5 - 1.0)
        .collect()
}

#[test]
fn panorama_laps_are_identical() {
    assert_eq!(cylindrical_embed(-1.0), cylindrical_embed(1.0));
    let layout = PatchLayout::new(4, 4, 2, 2, 4, Topology::Cylindrical).unwrap();
    let b = bundle(&layout, false);
    let pano = generate_panorama(&b, &layout, &z(0), 2).unwrap();
    assert_eq!(pano.shape(), &[3, 16, 32]);
    let left = crop_pixels(&pano, 0, 0, 16, 16, false).unwrap();
    let right = crop_pixels(&pano, 0, 16, 16, 16, false).unwrap();
    assert_eq!(left, right);
    assert_eq!(left, generate_full(&b, &layout, &z(0)).unwrap());
    let planar = PatchLayout::planar(4, 2, 4).unwrap();
    assert!(generate_panorama(&bundle(&planar, false), &planar, &z(0), 2).is_err());
}

#[test]
fn extended_canvas_size_and_centre() {
    let layout = PatchLayout::planar(4, 2, 4).unwrap();
    let b = bundle(&layout, false);
    let big = generate_extended(&b, &layout, &z(1), 1).unwrap();
    assert_eq!(big.shape(), &[3, 24, 24]);
    let inner = crop_pixels(&big, 4, 4, 16, 16, false).unwrap();
    assert_eq!(inner, generate_full(&b, &layout, &z(1)).unwrap());
    assert_eq!(
        generate_extended(&b, &layout, &z(1), 0).unwrap(),
        generate_full(&b, &layout, &z(1)).unwrap()
    );
}

#[test]
fn guided_generation_shapes_and_determinism() {
    let layout = PatchLayout::planar(4, 2, 4).unwrap();
    let b = bundle(&layout, true);
    let guide = generate_macro(&b, &layout, &z(2), (1, 2)).unwrap();
    let a = patch_guided_generate(&b, &layout, &guide).unwrap();
    assert_eq!(a.image.shape(), &[3, 16, 16]);
    assert_eq!(a.coord.len(), 2);
    assert_eq!(a.z_est.len(), 16);
    assert!(a.z_est.iter().all(|v| v.abs() < 1.0));
    assert_eq!(a, patch_guided_generate(&b, &layout, &guide).unwrap());
    assert!(patch_guided_generate(&bundle(&layout, false), &layout, &guide).is_err());
    assert!(patch_guided_generate(&b, &layout, &a.image).is_err());
}

#[test]
fn filmstrips_stack_frames() {
    let layout = PatchLayout::planar(4, 2, 4).unwrap();
    let b = bundle(&layout, false);
    let strip = latent_filmstrip(&b, &layout, &z(3), &z(4), 5).unwrap();
    assert_eq!(strip.shape(), &[3, 80, 16]);
    assert_eq!(
        crop_pixels(&strip, 0, 0, 16, 16, false).unwrap(),
        generate_full(&b, &layout, &z(3)).unwrap()
    );
    assert_eq!(
        crop_pixels(&strip, 64, 0, 16, 16, false).unwrap(),
        generate_full(&b, &layout, &z(4)).unwrap()
    );

    let coords = coord_filmstrip(&b, &layout, &z(3), (0, 0), (2, 2), 4).unwrap();
    assert_eq!(coords.shape(), &[3, 32, 8]);
    assert_eq!(
        crop_pixels(&coords, 0, 0, 8, 8, false).unwrap(),
        generate_macro(&b, &layout, &z(3), (0, 0)).unwrap()
    );
    assert_eq!(
        crop_pixels(&coords, 24, 0, 8, 8, false).unwrap(),
        generate_macro(&b, &layout, &z(3), (2, 2)).unwrap()
    );
    assert!(latent_filmstrip(&b, &layout, &z(3), &z(4), 1).is_err());
}
