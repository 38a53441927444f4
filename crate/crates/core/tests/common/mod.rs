//! Test-side oracles: brute-force evaluations written independently of the
//! library's contraction and scatter code paths.
#![allow(dead_code)]

use rand::Rng;
use volterra_core::tensor::Tensor;

pub fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    volterra_core::rng::stream(seed, 0xfeed)
}

pub fn randn(r: &mut impl Rng, shape: &[usize]) -> Tensor {
    volterra_core::rng::gaussian(r, shape)
}

/// Odometer over all multi-indices.
pub fn indices(shape: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for &e in shape {
        let mut next = Vec::new();
        for p in &out {
            for i in 0..e {
                let mut q = p.clone();
                q.push(i);
                next.push(q);
            }
        }
        out = next;
    }
    out
}

/// 1-D correlation with the flipped kernel over an explicitly padded signal.
pub fn naive_conv1(h: &[f64], x: &[f64], stride: usize, pad: usize) -> Vec<f64> {
    let mut xp = vec![0.0; pad];
    xp.extend_from_slice(x);
    xp.extend(std::iter::repeat_n(0.0, pad));
    let z = h.len();
    let out = (xp.len() - z) / stride + 1;
    (0..out)
        .map(|o| (0..z).map(|j| h[z - 1 - j] * xp[stride * o + j]).sum())
        .collect()
}

/// Order-n convolution of 1-D signals by summing over every tap tuple of an
/// explicitly padded window; kernel blocks are aligned at the window end.
pub fn naive_conv_n(h: &Tensor, xs: &[&Tensor], stride: usize, pad: usize) -> Vec<f64> {
    let z = *h.shape().iter().max().unwrap();
    let len = xs[0].len();
    let padded: Vec<Vec<f64>> = xs
        .iter()
        .map(|x| {
            let mut v = vec![0.0; pad];
            v.extend_from_slice(x.data());
            v.extend(std::iter::repeat_n(0.0, pad));
            v
        })
        .collect();
    let out = (len + 2 * pad - z) / stride + 1;
    let taps = indices(h.shape());
    (0..out)
        .map(|o| {
            let end = stride * o + z - 1;
            taps.iter()
                .map(|t| {
                    let mut v = h.get(t);
                    for (i, &ti) in t.iter().enumerate() {
                        v *= padded[i][end - ti];
                    }
                    v
                })
                .sum()
        })
        .collect()
}

/// Outer convolution by direct summation over G and the operand indices.
pub fn naive_outer(g: &Tensor, hs: &[&Tensor], stride: usize) -> Tensor {
    let mut shape = Vec::new();
    for (i, h) in hs.iter().enumerate() {
        for &c in h.shape() {
            shape.push(c + (g.shape()[i] - 1) * stride);
        }
    }
    let gidx = indices(g.shape());
    Tensor::from_fn(&shape, |t| {
        let mut acc = 0.0;
        for tau in &gidx {
            let mut v = g.get(tau);
            let mut a = 0;
            for (i, h) in hs.iter().enumerate() {
                let mut idx = Vec::new();
                let mut ok = true;
                for &c in h.shape() {
                    let p = t[a] as isize - (stride * tau[i]) as isize;
                    if p < 0 || p as usize >= c {
                        ok = false;
                    }
                    idx.push(p.max(0) as usize);
                    a += 1;
                }
                v *= if ok { h.get(&idx) } else { 0.0 };
            }
            acc += v;
        }
        acc
    })
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch");
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}
