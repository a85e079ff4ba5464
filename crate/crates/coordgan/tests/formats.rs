use coordgan::checkpoint::Checkpoint;
use coordgan::config::RunConfig;
use coordgan::ingest::{fit_canvas, ingest_folder};
use coordgan::ppm;
use coordgan::run::{load_dataset, new_trainer};
use coordgan::AppError;
use coordgan_core::data::ImageBuffer;
use coordgan_core::train::beyond_boundary_posttrain;
use proptest::prelude::*;

fn tiny(q_head: bool) -> RunConfig {
    let text = format!(
        "arch.latent_dim = 8\narch.base_channels = 8\narch.q_head = {q_head}\ntrain.batch = 4\ndata.count = 24\ndata.held_out = 0.25\n"
    );
    RunConfig::parse(&text).unwrap()
}

fn image(h: usize, w: usize, k: usize) -> ImageBuffer {
    let v = (0..3 * h * w)
        .map(|i| ((i * 31 + k * 17) % 255) as f32 / 127.0 - 1.0)
        .collect();
    ImageBuffer::new(h, w, v).unwrap()
}

proptest! {
    #[test]
    fn ppm_round_trip_is_within_one_level(h in 1usize..6, w in 1usize..6, v in proptest::collection::vec(-1.0f32..=1.0, 75)) {
        let img = ImageBuffer::new(h, w, v[..3 * h * w].to_vec()).unwrap();
        let back = ppm::decode(&ppm::encode(&img)).unwrap();
        prop_assert_eq!(back.tensor().shape(), img.tensor().shape());
        // one 8-bit level spans 2/255 of the value range, rounding loses at most half of it
        prop_assert!(back.tensor().max_abs_diff(img.tensor()) <= 1.0 / 255.0 + 1e-6);
        prop_assert_eq!(ppm::encode(&back), ppm::encode(&img));
    }
}

#[test]
fn checkpoint_bytes_are_stable_and_resume_exactly() {
    let cfg = tiny(true);
    let (data, _) = load_dataset(&cfg).unwrap();
    let mut a = new_trainer(&cfg).unwrap();
    let first = a.train_step(&data).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    Checkpoint::capture(&cfg, &a, Some(&first))
        .save(&path)
        .unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    assert_eq!(loaded.to_bytes(), std::fs::read(&path).unwrap());
    assert_eq!(loaded.last_metrics().unwrap().unwrap().l_w, first.l_w);

    let (cfg2, mut b) = loaded.restore().unwrap();
    assert_eq!(cfg2, cfg);
    assert_eq!(
        Checkpoint::capture(&cfg2, &b, Some(&first)).to_bytes(),
        loaded.to_bytes()
    );
    let ma = a.train_step(&data).unwrap();
    let mb = b.train_step(&data).unwrap();
    assert_eq!(ma, mb);
    assert_eq!(a.bundle, b.bundle);
}

#[test]
fn missing_tensor_is_named() {
    let with_q = tiny(true);
    let trainer = new_trainer(&tiny(false)).unwrap();
    let mut ckpt = Checkpoint::capture(&tiny(false), &trainer, None);
    let err = ckpt.bundle(with_q.arch).unwrap_err().to_string();
    assert!(err.contains("d.q"), "{err}");

    ckpt.tensors
        .push(("weird:x".into(), coordgan_core::Tensor::ones(&[1])));
    let err = ckpt.bundle(tiny(false).arch).unwrap_err().to_string();
    assert!(err.contains("weird:x"), "{err}");
}

#[test]
fn posttrained_checkpoint_records_the_grid() {
    let cfg = tiny(false);
    let (data, _) = load_dataset(&cfg).unwrap();
    let mut t = new_trainer(&cfg).unwrap();
    beyond_boundary_posttrain(&mut t, &data, 1, 1, |_| {}).unwrap();
    let ckpt = Checkpoint::capture(&cfg, &t, None);
    assert!(
        ckpt.text.contains("state.extended_grid = 6x6"),
        "{}",
        ckpt.text
    );
    assert!(ckpt.text.contains("state.freeze = all-but-first-two"));
    let (_, back) = Checkpoint::from_bytes(&ckpt.to_bytes())
        .unwrap()
        .restore()
        .unwrap();
    assert_eq!(back.extend, 1);
    assert_eq!(back.freeze, t.freeze);
}

#[test]
fn corrupt_checkpoints_are_rejected() {
    let cfg = tiny(false);
    let t = new_trainer(&cfg).unwrap();
    let bytes = Checkpoint::capture(&cfg, &t, None).to_bytes();
    for cut in [3, 10, bytes.len() / 2, bytes.len() - 2] {
        assert!(
            matches!(
                Checkpoint::from_bytes(&bytes[..cut]),
                Err(AppError::Format(_))
            ),
            "cut {cut}"
        );
    }
}

#[test]
fn ingest_keeps_good_files_and_warns_on_bad() {
    let dir = tempfile::tempdir().unwrap();
    for k in 0..3 {
        ppm::write(&dir.path().join(format!("img{k}.ppm")), &image(16, 16, k)).unwrap();
    }
    std::fs::write(dir.path().join("broken.ppm"), b"P6\n16 16\n255\nxx").unwrap();
    std::fs::write(dir.path().join("notes.txt"), b"ignored").unwrap();
    let got = ingest_folder(dir.path(), 16, 16).unwrap();
    assert_eq!(got.dataset.images.len(), 3);
    assert_eq!(got.warnings.len(), 1);
    assert!(got.warnings[0].contains("broken.ppm"));
    // canvas-sized files pass through unchanged, up to 8-bit quantization
    let want = ppm::decode(&ppm::encode(&image(16, 16, 0))).unwrap();
    assert_eq!(got.dataset.images[0], want);
}

#[test]
fn ingest_single_image_and_empty_folder() {
    let dir = tempfile::tempdir().unwrap();
    assert!(ingest_folder(dir.path(), 16, 16).is_err());
    ppm::write(&dir.path().join("one.ppm"), &image(20, 40, 1)).unwrap();
    let got = ingest_folder(dir.path(), 16, 16).unwrap();
    assert_eq!(got.dataset.images.len(), 1);
    assert_eq!(got.dataset.canvas_hw(), (16, 16));
}

#[test]
fn fit_canvas_centre_crops() {
    // a 4x8 image whose left and right quarters are black: the centred square is all white
    let v: Vec<f32> = (0..3 * 4 * 8)
        .map(|i| if (2..6).contains(&(i % 8)) { 1.0 } else { -1.0 })
        .collect();
    let img = ImageBuffer::new(4, 8, v).unwrap();
    let out = fit_canvas(&img, 2, 2).unwrap();
    assert!(out.tensor().data().iter().all(|&v| v == 1.0));
    assert_eq!(fit_canvas(&img, 4, 8).unwrap(), img);
}
