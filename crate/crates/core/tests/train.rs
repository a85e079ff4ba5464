use coordgan_core::autodiff::{finite_diff_oracle, Graph};
use coordgan_core::coords::{extended_macro_anchors, PatchLayout};
use coordgan_core::data::{synth_dataset, Dataset, Sampling, SynthKind};
use coordgan_core::nn::{build_models, discriminator_graph, ArchConfig, BnMode, Net};
use coordgan_core::train::loss::gradient_penalty;
use coordgan_core::train::{
    beyond_boundary_posttrain, gp_interpolate, gp_mix, loss_gradient_penalty, loss_latent,
    loss_spatial, loss_wasserstein, sample_latent, slerp, Adam, LossWeights, TrainConfig, Trainer,
};
use coordgan_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
    Tensor::from_f64_slice(shape, v).unwrap()
}

fn random(shape: &[usize], rng: &mut ChaCha8Rng, scale: f64) -> Tensor<f64> {
    let v: Vec<f64> = (0..shape.iter().product())
        .map(|_| rng.random_range(-scale..scale))
        .collect();
    t(shape, &v)
}

#[test]
fn wasserstein_examples() {
    let z = t(&[3, 1], &[0.0; 3]);
    let o = t(&[3, 1], &[1.0; 3]);
    assert_eq!(loss_wasserstein(&z, &z).unwrap(), 0.0);
    assert_eq!(loss_wasserstein(&o, &z).unwrap(), 1.0);
    let a = t(&[4, 1], &[0.3, -2.0, 1.5, 0.25]);
    let b = t(&[4, 1], &[1.0, 0.5, -0.75, 2.0]);
    assert_eq!(
        loss_wasserstein(&a, &b).unwrap(),
        -loss_wasserstein(&b, &a).unwrap()
    );
    assert!(loss_wasserstein(&a, &t(&[2, 1], &[0.0, 0.0])).is_err());
}

#[test]
fn spatial_and_latent_examples() {
    let c = t(&[1, 2], &[1.0, 1.0]);
    let zero = t(&[1, 2], &[0.0, 0.0]);
    assert_eq!(loss_spatial(&c, &c).unwrap(), 0.0);
    assert!((loss_spatial(&c, &zero).unwrap() - 2f64.sqrt()).abs() < 1e-15);
    let a = t(&[3, 2], &[0.1, -0.4, 0.9, 0.2, -0.3, 0.5]);
    let b = t(&[3, 2], &[0.0, 0.1, 0.4, -0.2, 0.2, 0.5]);
    let scaled = t(
        &[3, 2],
        &a.data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| y + 3.0 * (x - y))
            .collect::<Vec<_>>(),
    );
    assert!(
        (loss_spatial(&scaled, &b).unwrap() - 3.0 * loss_spatial(&a, &b).unwrap()).abs() < 1e-12
    );
    assert!(loss_spatial(&a, &t(&[3, 3], &[0.0; 9])).is_err());

    let z = t(&[1, 2], &[1.0, -1.0]);
    assert_eq!(loss_latent(&z, &z).unwrap(), 0.0);
    assert_eq!(loss_latent(&z, &zero).unwrap(), 2.0);
    assert!(loss_latent(&a, &b).unwrap() >= 0.0);
}

#[test]
fn penalty_of_sum_and_unit_linear() {
    let d = 12;
    let x = random(&[5, d], &mut ChaCha8Rng::seed_from_u64(1), 1.0);
    let sum = |g: &mut Graph<f64>, x| {
        let w = g.constant(Tensor::ones(&[1, d]));
        Ok(g.linear(x, w, None))
    };
    let p = loss_gradient_penalty(sum, &x).unwrap();
    assert!((p - ((d as f64).sqrt() - 1.0).powi(2)).abs() < 1e-9);

    let mut w = random(&[1, d], &mut ChaCha8Rng::seed_from_u64(2), 1.0);
    let norm = w.data().iter().map(|v| v * v).sum::<f64>().sqrt();
    w = w.map(|v| v / norm);
    let unit = |g: &mut Graph<f64>, x| {
        let w = g.constant(w.clone());
        Ok(g.linear(x, w, None))
    };
    assert!(loss_gradient_penalty(unit, &x).unwrap() < 1e-12);
}

fn two_layer_penalty(
    w1: &Tensor<f64>,
    w2: &Tensor<f64>,
    x: &Tensor<f64>,
) -> (f64, Tensor<f64>, Tensor<f64>) {
    let mut g = Graph::with_higher_order();
    let a = g.param("w1", w1.clone());
    let b = g.param("w2", w2.clone());
    let xi = g.input("x", x.clone());
    let h = g.linear(xi, a, None);
    let h = g.tanh(h);
    let s = g.linear(h, b, None);
    let p = gradient_penalty(&mut g, s, xi).unwrap();
    let grads = g.gradients(p, &[a, b]).unwrap();
    (g.value(p).item(), grads[0].clone(), grads[1].clone())
}

fn rel_err(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    let scale = b.data().iter().fold(1e-8f64, |m, v| m.max(v.abs()));
    a.max_abs_diff(b) / scale
}

#[test]
fn penalty_parameter_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..5 {
        let w1 = random(&[6, 4], &mut rng, 1.0);
        let w2 = random(&[1, 6], &mut rng, 1.0);
        let x = random(&[3, 4], &mut rng, 1.0);
        let (_, g1, g2) = two_layer_penalty(&w1, &w2, &x);
        let fd1 = finite_diff_oracle(|w| Ok(two_layer_penalty(w, &w2, &x).0), &w1, 1e-5).unwrap();
        let fd2 = finite_diff_oracle(|w| Ok(two_layer_penalty(&w1, w, &x).0), &w2, 1e-5).unwrap();
        assert!(rel_err(&g1, &fd1) < 1e-3, "{}", rel_err(&g1, &fd1));
        assert!(rel_err(&g2, &fd2) < 1e-3, "{}", rel_err(&g2, &fd2));
    }
}

#[test]
fn penalty_is_non_negative() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..10 {
        let w1 = random(&[5, 3], &mut rng, 2.0);
        let w2 = random(&[1, 5], &mut rng, 2.0);
        let x = random(&[4, 3], &mut rng, 2.0);
        assert!(two_layer_penalty(&w1, &w2, &x).0 >= 0.0);
    }
}

#[test]
fn latent_moments() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let z = sample_latent(100, 1000, &mut rng);
    assert_eq!(z.shape(), &[1000, 100]);
    assert!(z.data().iter().all(|v| (-1.0..=1.0).contains(v)));
    let n = z.len() as f64;
    let mean = z.data().iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = z
        .data()
        .iter()
        .map(|&v| (v as f64 - mean).powi(2))
        .sum::<f64>()
        / n;
    assert!(mean.abs() < 0.01, "{mean}");
    assert!((var - 1.0 / 3.0).abs() < 0.01, "{var}");
    let again = sample_latent(100, 1000, &mut ChaCha8Rng::seed_from_u64(5));
    assert_eq!(z, again);
}

#[test]
fn slerp_examples() {
    let a = [0.3f32, -0.2, 0.9];
    let b = [-0.5f32, 0.1, 0.4];
    assert_eq!(slerp(&a, &b, 0.0).unwrap(), a);
    assert_eq!(slerp(&a, &b, 1.0).unwrap(), b);
    let mid = slerp(&[1.0, 0.0], &[0.0, 1.0], 0.5).unwrap();
    let h = std::f32::consts::FRAC_1_SQRT_2;
    assert!((mid[0] - h).abs() < 1e-7 && (mid[1] - h).abs() < 1e-7);

    let unit = |v: [f32; 3]| {
        let n = v.iter().map(|x| x * x).sum::<f32>().sqrt();
        v.map(|x| x / n)
    };
    let (ua, ub) = (unit(a), unit(b));
    for k in 1..10 {
        let s = slerp(&ua, &ub, k as f64 / 10.0).unwrap();
        let n = s.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() < 1e-6, "{n}");
    }
    assert!(slerp(&[0.0, 0.0], &[1.0, 0.0], 0.5).is_err());
    assert_eq!(
        slerp(&[1.0, 0.0], &[2.0, 0.0], 0.5).unwrap(),
        vec![1.5, 0.0]
    );
}

#[test]
fn gp_mix_examples() {
    let s = Tensor::<f32>::ones(&[2, 3]);
    let x = Tensor::<f32>::zeros(&[2, 3]);
    assert_eq!(gp_mix(&s, &x, &[1.0, 1.0]).unwrap(), s);
    assert_eq!(gp_mix(&s, &x, &[0.0, 0.0]).unwrap(), x);
    assert!(gp_mix(&s, &x, &[0.5, 0.5])
        .unwrap()
        .data()
        .iter()
        .all(|&v| v == 0.5));
    assert!(gp_mix(&s, &Tensor::zeros(&[2, 2]), &[0.5, 0.5]).is_err());

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let a: Vec<f32> = (0..40).map(|_| rng.random_range(-1.0..1.0)).collect();
    let b: Vec<f32> = (0..40).map(|_| rng.random_range(-1.0..1.0)).collect();
    let a = Tensor::new(vec![4, 10], a).unwrap();
    let b = Tensor::new(vec![4, 10], b).unwrap();
    let m = gp_interpolate(&a, &b, &mut rng).unwrap();
    assert!(m.eps.iter().all(|e| (0.0..=1.0).contains(e)));
    for ((v, p), q) in m.mixed.data().iter().zip(a.data()).zip(b.data()) {
        assert!(*v >= p.min(*q) && *v <= p.max(*q));
    }
}

fn toy_data() -> Dataset {
    synth_dataset(SynthKind::GradientHue, 64, 16, 16, 1)
        .unwrap()
        .split(0.25, 2)
        .unwrap()
}

fn toy_trainer(weights: LossWeights, q_head: bool, seed: u64) -> Trainer {
    let layout = PatchLayout::planar(4, 2, 4).unwrap();
    let arch = ArchConfig {
        q_head,
        ..Default::default()
    };
    let cfg = TrainConfig {
        batch: 8,
        weights,
        seed,
        ..Default::default()
    };
    Trainer::new(build_models(arch, seed).unwrap(), layout, cfg).unwrap()
}

#[test]
fn first_step_is_finite() {
    let data = toy_data();
    let mut tr = toy_trainer(LossWeights::default(), true, 0);
    let m = tr.train_step(&data).unwrap();
    assert_eq!(m.step, 1);
    for v in [m.l_w, m.l_gp, m.l_s, m.l_s_fake, m.l_q, m.d_loss, m.g_loss] {
        assert!(v.is_finite());
    }
    assert!(m.l_gp >= 0.0 && m.l_s >= 0.0 && m.l_q >= 0.0);
}

#[test]
fn discriminator_loss_is_the_weighted_sum() {
    let data = toy_data();
    let w = LossWeights {
        lambda: 10.0,
        alpha: 100.0,
        beta_q: 1.0,
    };
    let mut tr = toy_trainer(w, false, 9);
    for _ in 0..2 {
        let m = tr.train_step(&data).unwrap();
        let (l_w, gp, ls) = (m.l_w as f32, m.l_gp as f32, m.l_s as f32);
        let expect = (l_w + gp * w.lambda as f32) + ls * w.alpha as f32;
        assert_eq!(m.d_loss as f32, expect);
    }
}

#[test]
fn seeded_runs_are_bitwise_identical() {
    let data = toy_data();
    let mut a = toy_trainer(LossWeights::default(), true, 7);
    let mut b = toy_trainer(LossWeights::default(), true, 7);
    for _ in 0..3 {
        assert_eq!(a.train_step(&data).unwrap(), b.train_step(&data).unwrap());
    }
    assert_eq!(a.bundle, b.bundle);
    assert_eq!(a.opt_g, b.opt_g);
}

#[test]
fn coordinate_head_idle_without_alpha() {
    let data = toy_data();
    let mut tr = toy_trainer(
        LossWeights {
            alpha: 0.0,
            ..Default::default()
        },
        true,
        3,
    );
    let before = tr.bundle.params.clone();
    tr.train_step(&data).unwrap();
    let mut touched = 0;
    for (name, v) in &tr.bundle.params {
        if name.starts_with("d.a.") {
            assert_eq!(v, &before[name], "{name}");
        } else if v != &before[name] {
            touched += 1;
        }
    }
    assert!(touched > 0);
}

#[test]
fn spectral_states_stay_unit() {
    let data = toy_data();
    let mut tr = toy_trainer(LossWeights::default(), false, 4);
    tr.train_step(&data).unwrap();
    for (name, u) in &tr.bundle.sn_state {
        let n = u
            .data()
            .iter()
            .map(|&v| v as f64 * v as f64)
            .sum::<f64>()
            .sqrt();
        assert!((n - 1.0).abs() < 1e-6, "{name}: {n}");
    }
}

#[test]
fn discriminator_descends_on_a_fixed_batch() {
    // generator frozen, no penalty or coordinate terms
    let data = toy_data();
    let tr = toy_trainer(
        LossWeights {
            lambda: 0.0,
            alpha: 0.0,
            beta_q: 0.0,
        },
        false,
        5,
    );
    let mut bundle = tr.bundle.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let layout = tr.layout;
    let real: Vec<_> = (0..8)
        .map(|_| {
            coordgan_core::data::sample_real_macro(&data, &layout, Sampling::Discrete, &mut rng)
                .unwrap()
        })
        .collect();
    let x = Tensor::stack(&real.iter().map(|r| r.patch.clone()).collect::<Vec<_>>()).unwrap();
    let c = Tensor::new(
        vec![8, 2],
        real.iter()
            .flat_map(|r| r.coord.to_vec())
            .map(|v| v as f32)
            .collect(),
    )
    .unwrap();
    let fake_z = sample_latent(16, 8, &mut rng);
    let fakes: Vec<_> = (0..8)
        .map(|k| {
            let z = &fake_z.data()[k * 16..(k + 1) * 16];
            coordgan_core::render::generate_macro(&tr.bundle, &layout, z, real[k].anchor().unwrap())
                .unwrap()
        })
        .collect();
    let f = Tensor::stack(&fakes).unwrap();
    let mut opt = Adam::new(4e-4, 0.0, 0.999, 1e-8);
    let eval = |bundle: &coordgan_core::nn::ModelBundle, want_grads: bool| {
        let mut g = Graph::<f32>::new();
        let xr = g.constant(x.clone());
        let xf = g.constant(f.clone());
        let xs = g.concat(&[xr, xf], 0);
        let cc = g.constant(
            Tensor::stack(&[c.clone(), c.clone()])
                .unwrap()
                .reshape(&[16, 2])
                .unwrap(),
        );
        let mut net = Net::new(&mut g, bundle, BnMode::Running);
        let d = discriminator_graph(&mut net, xs, Some(cc)).unwrap();
        let dr = g.slice(d.score, 0, 0, 8);
        let df = g.slice(d.score, 0, 8, 8);
        let lw = coordgan_core::train::loss::wasserstein(&mut g, dr, df);
        let v = g.value(lw).item();
        let grads = want_grads.then(|| {
            let (names, ids): (Vec<String>, Vec<_>) = g
                .params()
                .filter(|(n, _)| n.starts_with("d."))
                .map(|(n, id)| (n.to_string(), id))
                .unzip();
            names
                .into_iter()
                .zip(g.gradients(lw, &ids).unwrap())
                .collect::<Vec<_>>()
        });
        (v, grads)
    };
    let (before, grads) = eval(&bundle, true);
    opt.step(&mut bundle.params, &grads.unwrap()).unwrap();
    let (after, _) = eval(&bundle, false);
    assert!(after < before, "{before} -> {after}");
}

#[test]
fn extended_grid_values() {
    let layout = PatchLayout::planar(4, 2, 4).unwrap();
    let grid = extended_macro_anchors(&layout, 1).unwrap();
    assert_eq!(grid.len(), 25);
    let mut ys: Vec<f64> = grid.iter().map(|(_, c)| c.to_vec()[0]).collect();
    ys.dedup();
    ys.sort_by(f64::total_cmp);
    ys.dedup();
    assert_eq!(ys, vec![-2.0, -1.0, 0.0, 1.0, 2.0]);
}

#[test]
fn posttraining_freezes_late_generator_layers() {
    let data = toy_data();
    let mut tr = toy_trainer(LossWeights::default(), false, 6);
    tr.train_step(&data).unwrap();

    let before = tr.clone();
    beyond_boundary_posttrain(&mut tr, &data, 0, 5, |_| {}).unwrap();
    assert_eq!(tr.bundle, before.bundle);
    assert_eq!(tr.step, before.step);

    beyond_boundary_posttrain(&mut tr, &data, 1, 3, |_| {}).unwrap();
    let mut moved = 0;
    for (name, v) in &tr.bundle.params {
        let early = name.starts_with("g.in.") || name.starts_with("g.block0.");
        if name.starts_with("g.") && !early {
            assert_eq!(v, &before.bundle.params[name], "{name}");
        } else if early && v != &before.bundle.params[name] {
            moved += 1;
        }
    }
    assert!(moved > 0);
}

#[test]
fn failed_step_leaves_trainer_untouched() {
    let data = synth_dataset(SynthKind::GradientHue, 4, 8, 8, 1).unwrap();
    let mut tr = toy_trainer(LossWeights::default(), false, 2);
    let before = tr.clone();
    assert!(tr.train_step(&data).is_err());
    assert_eq!(tr.bundle, before.bundle);
    assert_eq!(tr.step, 0);
}
