//! Randomized instances of every differentiable op, for gradient checking.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Graph, NodeId};
use crate::tensor::{numel, Tensor};

pub type Build = Box<dyn Fn(&mut Graph<f64>, &[NodeId]) -> NodeId>;

/// One op applied to random inputs.
pub struct OpCase {
    /// Matches [`super::Op::name`] of the op under test.
    pub name: &'static str,
    pub inputs: Vec<Tensor<f64>>,
    pub build: Build,
}

struct Gen(ChaCha8Rng);

impl Gen {
    fn dim(&mut self, lo: usize, hi: usize) -> usize {
        self.0.random_range(lo..=hi)
    }

    fn uniform(&mut self, shape: &[usize]) -> Tensor<f64> {
        let v: Vec<f64> = (0..numel(shape))
            .map(|_| self.0.random_range(-1.5..1.5))
            .collect();
        Tensor::from_f64_slice(shape, &v).expect("sized")
    }

    /// Values with magnitude in `[0.2, 1.5]`, keeping kinks and poles out of reach of the difference step.
    fn away_from_zero(&mut self, shape: &[usize]) -> Tensor<f64> {
        let v: Vec<f64> = (0..numel(shape))
            .map(|_| {
                let m = self.0.random_range(0.2..1.5);
                if self.0.random_bool(0.5) {
                    m
                } else {
                    -m
                }
            })
            .collect();
        Tensor::from_f64_slice(shape, &v).expect("sized")
    }

    fn positive(&mut self, shape: &[usize]) -> Tensor<f64> {
        self.away_from_zero(shape).map(libm::fabs)
    }
}

fn case(
    name: &'static str,
    inputs: Vec<Tensor<f64>>,
    build: impl Fn(&mut Graph<f64>, &[NodeId]) -> NodeId + 'static,
) -> OpCase {
    OpCase {
        name,
        inputs,
        build: Box::new(build),
    }
}

/// Names of ops that carry no gradient or are leaves, so no case exists for them.
pub const UNCHECKED_OPS: [&str; 5] = ["param", "input", "const", "step", "sign"];

/// One random instance of every differentiable op, drawn from `seed`.
pub fn op_cases(seed: u64) -> Vec<OpCase> {
    let mut r = Gen(ChaCha8Rng::seed_from_u64(seed));
    let (a, b) = (r.dim(1, 4), r.dim(1, 4));
    let m = [a, b];
    let mut out = vec![
        case("add", vec![r.uniform(&m), r.uniform(&m)], |g, x| {
            g.add(x[0], x[1])
        }),
        case("sub", vec![r.uniform(&m), r.uniform(&m)], |g, x| {
            g.sub(x[0], x[1])
        }),
        case("mul", vec![r.uniform(&m), r.uniform(&m)], |g, x| {
            g.mul(x[0], x[1])
        }),
        case("div", vec![r.uniform(&m), r.away_from_zero(&m)], |g, x| {
            g.div(x[0], x[1])
        }),
        case("square", vec![r.uniform(&m)], |g, x| g.square(x[0])),
        case("sqrt", vec![r.positive(&m)], |g, x| g.sqrt(x[0])),
        case("tanh", vec![r.uniform(&m)], |g, x| g.tanh(x[0])),
        case("relu", vec![r.away_from_zero(&m)], |g, x| g.relu(x[0])),
        case("abs", vec![r.away_from_zero(&m)], |g, x| g.abs(x[0])),
        case("transpose", vec![r.uniform(&m)], |g, x| g.transpose(x[0])),
    ];
    let c: f64 = r.0.random_range(-2.0..2.0);
    out.push(case("scale", vec![r.uniform(&m)], move |g, x| {
        g.scale(x[0], c)
    }));
    out.push(case("add_scalar", vec![r.uniform(&m)], move |g, x| {
        // squared so the constant offset shows up in the gradient
        let y = g.add_scalar(x[0], c);
        g.square(y)
    }));
    let k = r.dim(1, 4);
    out.push(case(
        "matmul",
        vec![r.uniform(&[a, k]), r.uniform(&[k, b])],
        |g, x| g.matmul(x[0], x[1]),
    ));

    let (n, ci, co) = (r.dim(1, 2), r.dim(1, 3), r.dim(1, 3));
    let (h, w) = (r.dim(3, 6), r.dim(3, 6));
    let (kh, kw) = (r.dim(1, 3), r.dim(1, 3));
    let (stride, pad) = (r.dim(1, 2), r.dim(0, 1));
    let x4 = r.uniform(&[n, ci, h, w]);
    let w4 = r.uniform(&[co, ci, kh, kw]);
    out.push(case("conv2d", vec![x4.clone(), w4.clone()], move |g, x| {
        g.conv2d(x[0], x[1], stride, pad)
    }));
    // the backward kernels appear as nodes of a gradient graph
    out.push(case(
        "conv2d_back_input",
        vec![x4.clone(), w4.clone()],
        move |g, x| {
            let y = g.conv2d(x[0], x[1], stride, pad);
            let y = g.square(y);
            let l = g.sum_all(y);
            g.grad(l, &[x[0]]).expect("higher-order graph")[0]
        },
    ));
    out.push(case("conv2d_back_weight", vec![x4, w4], move |g, x| {
        let y = g.conv2d(x[0], x[1], stride, pad);
        let y = g.square(y);
        let l = g.sum_all(y);
        g.grad(l, &[x[1]]).expect("higher-order graph")[0]
    }));

    let (h2, w2) = (2 * r.dim(1, 3), 2 * r.dim(1, 3));
    out.push(case(
        "upsample2x",
        vec![r.uniform(&[n, ci, h2, w2])],
        |g, x| g.upsample2x(x[0]),
    ));
    out.push(case(
        "sum_pool2x",
        vec![r.uniform(&[n, ci, h2, w2])],
        |g, x| g.sum_pool2x(x[0]),
    ));

    let s3 = [r.dim(2, 3), r.dim(2, 3), r.dim(2, 3)];
    let keep = [1, s3[1], 1];
    out.push(case("sum_to", vec![r.uniform(&s3)], move |g, x| {
        g.sum_to(x[0], &keep)
    }));
    out.push(case("broadcast_to", vec![r.uniform(&keep)], move |g, x| {
        g.broadcast_to(x[0], &s3)
    }));
    out.push(case("reshape", vec![r.uniform(&s3)], move |g, x| {
        g.reshape(x[0], &[s3[0] * s3[1], s3[2]])
    }));
    out.push(case("permute", vec![r.uniform(&s3)], |g, x| {
        g.permute(x[0], &[2, 0, 1])
    }));
    let other = [s3[0], r.dim(1, 3), s3[2]];
    out.push(case(
        "concat",
        vec![r.uniform(&s3), r.uniform(&other)],
        |g, x| g.concat(&[x[0], x[1]], 1),
    ));
    let start = r.dim(0, s3[1] - 1);
    let len = r.dim(1, s3[1] - start);
    out.push(case("slice", vec![r.uniform(&s3)], move |g, x| {
        g.slice(x[0], 1, start, len)
    }));
    // the gradient of a slice scatters back through an embedding
    out.push(case("embed", vec![r.uniform(&s3)], move |g, x| {
        let y = g.slice(x[0], 1, start, len);
        let y = g.square(y);
        let l = g.sum_all(y);
        g.grad(l, &[x[0]]).expect("higher-order graph")[0]
    }));
    out
}
