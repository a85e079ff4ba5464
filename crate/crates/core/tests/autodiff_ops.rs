use std::collections::BTreeSet;

use coordgan_core::autodiff::cases::{op_cases, UNCHECKED_OPS};
use coordgan_core::autodiff::{gradient_check, Graph, Op};
use coordgan_core::Tensor;

#[test]
fn every_op_matches_finite_differences() {
    for seed in 0..20 {
        for c in op_cases(seed) {
            let err = gradient_check(&c.build, &c.inputs, 1e-5).unwrap();
            assert!(err < 1e-4, "{} (seed {seed}): {err:e}", c.name);
        }
    }
}

#[test]
fn catalog_covers_every_differentiable_op() {
    let checked: BTreeSet<_> = op_cases(0).iter().map(|c| c.name).collect();
    let mut g = Graph::<f64>::with_higher_order();
    // build one of everything reachable and collect the op names
    for c in op_cases(1) {
        let ids: Vec<_> = c
            .inputs
            .iter()
            .enumerate()
            .map(|(k, t)| g.input(&format!("{}{k}", c.name), t.clone()))
            .collect();
        let out = (c.build)(&mut g, &ids);
        let s = g.sum_all(out);
        g.grad(s, &ids).unwrap();
    }
    let seen: BTreeSet<_> = g.ops().map(Op::name).collect();
    for name in seen {
        assert!(
            checked.contains(name) || UNCHECKED_OPS.contains(&name),
            "no gradient case for {name}"
        );
    }
}

#[test]
fn relu_second_derivative_vanishes() {
    let mut g = Graph::<f64>::with_higher_order();
    let x = g.input(
        "x",
        Tensor::from_f64_slice(&[3], &[-0.5, 0.25, 2.0]).unwrap(),
    );
    let y = g.relu(x);
    let s = g.sum_all(y);
    let d = g.grad(s, &[x]).unwrap()[0];
    assert_eq!(g.value(d).data(), &[0.0, 1.0, 1.0]);
    let s2 = g.sum_all(d);
    assert_eq!(g.gradients(s2, &[x]).unwrap()[0].data(), &[0.0, 0.0, 0.0]);
}
