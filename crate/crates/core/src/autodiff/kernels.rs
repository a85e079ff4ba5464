//! Forward kernels for every graph op. All loops run in a fixed order so
//! results are bitwise reproducible, and per-sample outputs never depend on
//! the other samples of a batch.

use alloc::vec;
use alloc::vec::Vec;

use crate::tensor::{numel, Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn out_dim(&self, input: usize, kernel: usize) -> usize {
        (input + 2 * self.pad - kernel) / self.stride + 1
    }
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

pub fn zip<T: Real>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| f(x, y))
        .collect();
    Tensor::from_parts(a.shape().to_vec(), data)
}

/// `[m,k] x [k,n] -> [m,n]`, row by row so each output row only reads its own input row.
pub fn matmul<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let n = b.shape()[1];
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![T::ZERO; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = ad[i * k + p];
            let brow = &bd[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Tensor::from_parts(vec![m, n], out)
}

pub fn transpose<T: Real>(a: &Tensor<T>) -> Tensor<T> {
    let (m, n) = (a.shape()[0], a.shape()[1]);
    let d = a.data();
    let mut out = vec![T::ZERO; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = d[i * n + j];
        }
    }
    Tensor::from_parts(vec![n, m], out)
}

/// Unfolds one sample `[c,h,w]` into `[c*kh*kw, oh*ow]`.
fn im2col<T: Real>(
    x: &[T],
    (c, h, w): (usize, usize, usize),
    (kh, kw): (usize, usize),
    geom: ConvGeom,
    (oh, ow): (usize, usize),
    col: &mut [T],
) {
    let p = oh * ow;
    for ci in 0..c {
        for ki in 0..kh {
            for kj in 0..kw {
                let row = ((ci * kh + ki) * kw + kj) * p;
                for oy in 0..oh {
                    let iy = (oy * geom.stride + ki) as isize - geom.pad as isize;
                    for ox in 0..ow {
                        let ix = (ox * geom.stride + kj) as isize - geom.pad as isize;
                        col[row + oy * ow + ox] =
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                T::ZERO
                            } else {
                                x[(ci * h + iy as usize) * w + ix as usize]
                            };
                    }
                }
            }
        }
    }
}

/// Scatter-adds `[c*kh*kw, oh*ow]` columns back onto a `[c,h,w]` sample.
fn col2im<T: Real>(
    col: &[T],
    (c, h, w): (usize, usize, usize),
    (kh, kw): (usize, usize),
    geom: ConvGeom,
    (oh, ow): (usize, usize),
    x: &mut [T],
) {
    let p = oh * ow;
    for ci in 0..c {
        for ki in 0..kh {
            for kj in 0..kw {
                let row = ((ci * kh + ki) * kw + kj) * p;
                for oy in 0..oh {
                    let iy = (oy * geom.stride + ki) as isize - geom.pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for ox in 0..ow {
                        let ix = (ox * geom.stride + kj) as isize - geom.pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        x[(ci * h + iy as usize) * w + ix as usize] += col[row + oy * ow + ox];
                    }
                }
            }
        }
    }
}

/// `x [b,c,h,w]`, `w [o,c,kh,kw]` -> `[b,o,oh,ow]`.
pub fn conv2d<T: Real>(x: &Tensor<T>, w: &Tensor<T>, geom: ConvGeom) -> Tensor<T> {
    let [b, c, h, wd] = dims4(x.shape());
    let [o, _, kh, kw] = dims4(w.shape());
    let (oh, ow) = (geom.out_dim(h, kh), geom.out_dim(wd, kw));
    let (k, p) = (c * kh * kw, oh * ow);
    let mut col = vec![T::ZERO; k * p];
    let mut out = vec![T::ZERO; b * o * p];
    let wdat = w.data();
    for bi in 0..b {
        im2col(
            &x.data()[bi * c * h * wd..(bi + 1) * c * h * wd],
            (c, h, wd),
            (kh, kw),
            geom,
            (oh, ow),
            &mut col,
        );
        let ob = &mut out[bi * o * p..(bi + 1) * o * p];
        for oi in 0..o {
            let orow = &mut ob[oi * p..(oi + 1) * p];
            for ki in 0..k {
                let wv = wdat[oi * k + ki];
                for (dst, &cv) in orow.iter_mut().zip(&col[ki * p..(ki + 1) * p]) {
                    *dst += wv * cv;
                }
            }
        }
    }
    Tensor::from_parts(vec![b, o, oh, ow], out)
}

/// Transposed convolution: the input-gradient of [`conv2d`].
/// `g [b,o,oh,ow]`, `w [o,c,kh,kw]` -> `[b,c,in_h,in_w]`.
pub fn conv2d_back_input<T: Real>(
    g: &Tensor<T>,
    w: &Tensor<T>,
    geom: ConvGeom,
    (h, wd): (usize, usize),
) -> Tensor<T> {
    let [b, o, oh, ow] = dims4(g.shape());
    let [_, c, kh, kw] = dims4(w.shape());
    let (k, p) = (c * kh * kw, oh * ow);
    let mut col = vec![T::ZERO; k * p];
    let mut out = vec![T::ZERO; b * c * h * wd];
    let wdat = w.data();
    for bi in 0..b {
        col.iter_mut().for_each(|v| *v = T::ZERO);
        let gb = &g.data()[bi * o * p..(bi + 1) * o * p];
        for oi in 0..o {
            let grow = &gb[oi * p..(oi + 1) * p];
            for ki in 0..k {
                let wv = wdat[oi * k + ki];
                for (dst, &gv) in col[ki * p..(ki + 1) * p].iter_mut().zip(grow) {
                    *dst += wv * gv;
                }
            }
        }
        col2im(
            &col,
            (c, h, wd),
            (kh, kw),
            geom,
            (oh, ow),
            &mut out[bi * c * h * wd..(bi + 1) * c * h * wd],
        );
    }
    Tensor::from_parts(vec![b, c, h, wd], out)
}

/// Weight-gradient of [`conv2d`]: `x [b,c,h,w]`, `g [b,o,oh,ow]` -> `[o,c,kh,kw]`.
pub fn conv2d_back_weight<T: Real>(
    x: &Tensor<T>,
    g: &Tensor<T>,
    geom: ConvGeom,
    (kh, kw): (usize, usize),
) -> Tensor<T> {
    let [b, c, h, wd] = dims4(x.shape());
    let [_, o, oh, ow] = dims4(g.shape());
    let (k, p) = (c * kh * kw, oh * ow);
    let mut col = vec![T::ZERO; k * p];
    let mut out = vec![T::ZERO; o * k];
    for bi in 0..b {
        im2col(
            &x.data()[bi * c * h * wd..(bi + 1) * c * h * wd],
            (c, h, wd),
            (kh, kw),
            geom,
            (oh, ow),
            &mut col,
        );
        let gb = &g.data()[bi * o * p..(bi + 1) * o * p];
        for oi in 0..o {
            let grow = &gb[oi * p..(oi + 1) * p];
            for ki in 0..k {
                let mut acc = T::ZERO;
                for (&gv, &cv) in grow.iter().zip(&col[ki * p..(ki + 1) * p]) {
                    acc += gv * cv;
                }
                out[oi * k + ki] += acc;
            }
        }
    }
    Tensor::from_parts(vec![o, c, kh, kw], out)
}

pub fn upsample2x<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let [b, c, h, w] = dims4(x.shape());
    let mut out = vec![T::ZERO; b * c * 4 * h * w];
    for plane in 0..b * c {
        let src = &x.data()[plane * h * w..(plane + 1) * h * w];
        let dst = &mut out[plane * 4 * h * w..(plane + 1) * 4 * h * w];
        for y in 0..2 * h {
            for xx in 0..2 * w {
                dst[y * 2 * w + xx] = src[(y / 2) * w + xx / 2];
            }
        }
    }
    Tensor::from_parts(vec![b, c, 2 * h, 2 * w], out)
}

/// Sums each 2x2 block; the adjoint of [`upsample2x`].
pub fn sum_pool2x<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let [b, c, h, w] = dims4(x.shape());
    let (oh, ow) = (h / 2, w / 2);
    let mut out = vec![T::ZERO; b * c * oh * ow];
    for plane in 0..b * c {
        let src = &x.data()[plane * h * w..(plane + 1) * h * w];
        let dst = &mut out[plane * oh * ow..(plane + 1) * oh * ow];
        for y in 0..oh {
            for xx in 0..ow {
                let i = 2 * y * w + 2 * xx;
                dst[y * ow + xx] = src[i] + src[i + 1] + src[i + w] + src[i + w + 1];
            }
        }
    }
    Tensor::from_parts(vec![b, c, oh, ow], out)
}

/// Reduces every axis where `target` has extent 1. Ranks must agree.
pub fn sum_to<T: Real>(x: &Tensor<T>, target: &[usize]) -> Tensor<T> {
    let shape = x.shape();
    let tstr = strides(target);
    let mut out = vec![T::ZERO; numel(target)];
    let rank = shape.len();
    let mut idx = vec![0usize; rank];
    for &v in x.data() {
        let mut t = 0;
        for a in 0..rank {
            if target[a] != 1 {
                t += idx[a] * tstr[a];
            }
        }
        out[t] += v;
        for a in (0..rank).rev() {
            idx[a] += 1;
            if idx[a] < shape[a] {
                break;
            }
            idx[a] = 0;
        }
    }
    Tensor::from_parts(target.to_vec(), out)
}

/// Repeats along every axis where `x` has extent 1. Ranks must agree.
pub fn broadcast_to<T: Real>(x: &Tensor<T>, target: &[usize]) -> Tensor<T> {
    let shape = x.shape();
    let sstr = strides(shape);
    let rank = target.len();
    let n = numel(target);
    let mut out = Vec::with_capacity(n);
    let mut idx = vec![0usize; rank];
    for _ in 0..n {
        let mut s = 0;
        for a in 0..rank {
            if shape[a] != 1 {
                s += idx[a] * sstr[a];
            }
        }
        out.push(x.data()[s]);
        for a in (0..rank).rev() {
            idx[a] += 1;
            if idx[a] < target[a] {
                break;
            }
            idx[a] = 0;
        }
    }
    Tensor::from_parts(target.to_vec(), out)
}

pub fn permute<T: Real>(x: &Tensor<T>, perm: &[usize]) -> Tensor<T> {
    let shape = x.shape();
    let sstr = strides(shape);
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let rank = perm.len();
    let n = x.len();
    let mut out = Vec::with_capacity(n);
    let mut idx = vec![0usize; rank];
    for _ in 0..n {
        let mut s = 0;
        for a in 0..rank {
            s += idx[a] * sstr[perm[a]];
        }
        out.push(x.data()[s]);
        for a in (0..rank).rev() {
            idx[a] += 1;
            if idx[a] < out_shape[a] {
                break;
            }
            idx[a] = 0;
        }
    }
    Tensor::from_parts(out_shape, out)
}

/// (outer, axis extent, inner) decomposition around `axis`.
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    (
        numel(&shape[..axis]),
        shape[axis],
        numel(&shape[axis + 1..]),
    )
}

pub fn concat<T: Real>(parts: &[&Tensor<T>], axis: usize) -> Tensor<T> {
    let mut shape = parts[0].shape().to_vec();
    shape[axis] = parts.iter().map(|p| p.shape()[axis]).sum();
    let (outer, _, inner) = split_axis(&shape, axis);
    let mut out = Vec::with_capacity(numel(&shape));
    for o in 0..outer {
        for p in parts {
            let len = p.shape()[axis] * inner;
            out.extend_from_slice(&p.data()[o * len..(o + 1) * len]);
        }
    }
    Tensor::from_parts(shape, out)
}

pub fn slice<T: Real>(x: &Tensor<T>, axis: usize, start: usize, len: usize) -> Tensor<T> {
    let (outer, ext, inner) = split_axis(x.shape(), axis);
    let mut shape = x.shape().to_vec();
    shape[axis] = len;
    let mut out = Vec::with_capacity(outer * len * inner);
    for o in 0..outer {
        let base = o * ext * inner + start * inner;
        out.extend_from_slice(&x.data()[base..base + len * inner]);
    }
    Tensor::from_parts(shape, out)
}

/// Places `x` at `start` along `axis` inside zeros of extent `full`; adjoint of [`slice`].
pub fn embed<T: Real>(x: &Tensor<T>, axis: usize, start: usize, full: usize) -> Tensor<T> {
    let (outer, len, inner) = split_axis(x.shape(), axis);
    let mut shape = x.shape().to_vec();
    shape[axis] = full;
    let mut out = vec![T::ZERO; outer * full * inner];
    for o in 0..outer {
        let base = o * full * inner + start * inner;
        out[base..base + len * inner]
            .copy_from_slice(&x.data()[o * len * inner..(o + 1) * len * inner]);
    }
    Tensor::from_parts(shape, out)
}

pub(crate) fn dims4(shape: &[usize]) -> [usize; 4] {
    assert_eq!(shape.len(), 4, "expected a rank-4 tensor, got {shape:?}");
    [shape[0], shape[1], shape[2], shape[3]]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64_slice(shape, v).unwrap()
    }

    #[test]
    fn conv_identity_kernel_copies_input() {
        let x = t(&[1, 1, 2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let mut k = vec![0.0; 9];
        k[4] = 1.0;
        let w = t(&[1, 1, 3, 3], &k);
        let y = conv2d(&x, &w, ConvGeom { stride: 1, pad: 1 });
        assert_eq!(y, x);
    }

    #[test]
    fn strided_conv_output_size() {
        let x = Tensor::<f64>::ones(&[2, 3, 8, 8]);
        let w = Tensor::<f64>::ones(&[4, 3, 3, 3]);
        let y = conv2d(&x, &w, ConvGeom { stride: 2, pad: 1 });
        assert_eq!(y.shape(), &[2, 4, 4, 4]);
        // interior output sees the full 3x3x3 window
        assert_eq!(y.data()[5], 27.0);
    }

    #[test]
    fn conv_transpose_is_adjoint() {
        // <conv(x,w), g> == <x, back_input(g,w)> == <w, back_weight(x,g)>
        let geom = ConvGeom { stride: 2, pad: 1 };
        let x = Tensor::<f64>::new(
            vec![2, 2, 5, 4],
            (0..80).map(|i| (i as f64 * 0.37).sin()).collect(),
        )
        .unwrap();
        let w = Tensor::<f64>::new(
            vec![3, 2, 3, 3],
            (0..54).map(|i| (i as f64 * 0.71).cos()).collect(),
        )
        .unwrap();
        let y = conv2d(&x, &w, geom);
        let g = Tensor::<f64>::new(
            y.shape().to_vec(),
            (0..y.len()).map(|i| (i as f64 * 1.3).sin()).collect(),
        )
        .unwrap();
        let dot = |a: &Tensor<f64>, b: &Tensor<f64>| {
            a.data()
                .iter()
                .zip(b.data())
                .map(|(p, q)| p * q)
                .sum::<f64>()
        };
        let lhs = dot(&y, &g);
        let gx = conv2d_back_input(&g, &w, geom, (5, 4));
        let gw = conv2d_back_weight(&x, &g, geom, (3, 3));
        assert!((lhs - dot(&x, &gx)).abs() < 1e-10);
        assert!((lhs - dot(&w, &gw)).abs() < 1e-10);
    }

    #[test]
    fn sum_to_and_broadcast_are_adjoint_shapes() {
        let x = t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(sum_to(&x, &[1, 3]).data(), &[5.0, 7.0, 9.0]);
        assert_eq!(sum_to(&x, &[2, 1]).data(), &[6.0, 15.0]);
        assert_eq!(sum_to(&x, &[1, 1]).data(), &[21.0]);
        let b = broadcast_to(&t(&[2, 1], &[1.0, 2.0]), &[2, 3]);
        assert_eq!(b.data(), &[1.0, 1.0, 1.0, 2.0, 2.0, 2.0]);
    }

    #[test]
    fn permute_then_inverse_is_identity() {
        let x = Tensor::<f64>::new(vec![2, 3, 4], (0..24).map(|i| i as f64).collect()).unwrap();
        let y = permute(&x, &[2, 0, 1]);
        assert_eq!(y.shape(), &[4, 2, 3]);
        assert_eq!(permute(&y, &[1, 2, 0]), x);
    }

    #[test]
    fn concat_slice_embed() {
        let a = t(&[2, 1], &[1.0, 2.0]);
        let b = t(&[2, 2], &[3.0, 4.0, 5.0, 6.0]);
        let c = concat(&[&a, &b], 1);
        assert_eq!(c.data(), &[1.0, 3.0, 4.0, 2.0, 5.0, 6.0]);
        assert_eq!(slice(&c, 1, 1, 2), b);
        assert_eq!(embed(&a, 1, 0, 3).data(), &[1.0, 0.0, 0.0, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn upsample_and_pool() {
        let x = t(&[1, 1, 1, 2], &[1.0, 2.0]);
        let u = upsample2x(&x);
        assert_eq!(u.data(), &[1.0, 1.0, 2.0, 2.0, 1.0, 1.0, 2.0, 2.0]);
        assert_eq!(sum_pool2x(&u).data(), &[4.0, 8.0]);
    }
}
