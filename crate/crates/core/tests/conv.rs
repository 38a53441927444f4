mod common;

use common::*;
use proptest::prelude::*;
use volterra_core::conv::{
    choose_flatten_weights, composed_geometry, conv1, conv_order_n, flatten, unflatten, volterra_apply, Geometry,
    VolterraOperator,
};
use volterra_core::outer::{oconv_diag, outer_conv};
use volterra_core::tensor::{diag_embed, symmetrize, Tensor};

#[test]
fn linear_convolution_matches_padded_correlation() {
    let mut r = rng(1);
    for z in 1..6 {
        for s in 1..4 {
            for p in 0..z {
                let h = randn(&mut r, &[z]);
                let x = randn(&mut r, &[13]);
                let y = conv1(&h, &x, s, p).unwrap();
                assert!(max_diff(y.data(), &naive_conv1(h.data(), x.data(), s, p)) < 1e-13);
            }
        }
    }
}

#[test]
fn order_three_matches_tap_enumeration() {
    let mut r = rng(2);
    for (s, p) in [(1, 0), (2, 1), (3, 2)] {
        let h = randn(&mut r, &[3, 4, 2]);
        let xs = [randn(&mut r, &[11]), randn(&mut r, &[11]), randn(&mut r, &[11])];
        let y = conv_order_n(&h, &[&xs[0], &xs[1], &xs[2]], s, p).unwrap();
        let want = naive_conv_n(&h, &[&xs[0], &xs[1], &xs[2]], s, p);
        assert!(max_diff(y.data(), &want) < 1e-12);
    }
}

#[test]
fn two_dimensional_convolution_matches_direct_sum() {
    let mut r = rng(3);
    let h = randn(&mut r, &[3, 2]);
    let x = randn(&mut r, &[6, 7]);
    let y = conv1(&h, &x, 1, 1).unwrap();
    assert_eq!(y.shape(), &[6, 8]);
    for o in indices(y.shape()) {
        let mut want = 0.0;
        for t in indices(&[3, 2]) {
            let a = o[0] as isize + 2 - 1 - t[0] as isize;
            let b = o[1] as isize + 1 - 1 - t[1] as isize;
            if (0..6).contains(&a) && (0..7).contains(&b) {
                want += h.get(&t) * x.get(&[a as usize, b as usize]);
            }
        }
        assert!((y.get(&o) - want).abs() < 1e-13);
    }
}

#[test]
fn outer_convolution_matches_direct_sum() {
    let mut r = rng(4);
    for s in 1..4 {
        let g = randn(&mut r, &[2, 3]);
        let h1 = randn(&mut r, &[3]);
        let h2 = randn(&mut r, &[2, 4]);
        let got = outer_conv(&g, &[&h1, &h2], s, 1).unwrap();
        let want = naive_outer(&g, &[&h1, &h2], s);
        assert_eq!(got.shape(), want.shape());
        assert!(got.max_abs_diff(&want) < 1e-13);
    }
}

#[test]
fn flatten_example_two_dimensional() {
    let mut r = rng(5);
    let h = randn(&mut r, &[3, 3]);
    let x = randn(&mut r, &[6, 6]);
    let map = choose_flatten_weights(&[6, 6], &[3, 3]).unwrap();
    let y2 = conv1(&h, &x, 1, 0).unwrap();
    let y1 = conv1(&flatten(&h, &map).unwrap(), &flatten(&x, &map).unwrap(), 1, 0).unwrap();
    let back = unflatten(&y1, &map, y2.shape()).unwrap();
    assert!(back.max_abs_diff(&y2) < 1e-12);
}

#[test]
fn flatten_three_dimensional_order_two() {
    let mut r = rng(6);
    let h = randn(&mut r, &[2, 3, 2, 2, 3, 2]);
    let x = randn(&mut r, &[4, 5, 3]);
    let y = randn(&mut r, &[4, 5, 3]);
    let map = choose_flatten_weights(&[4, 5, 3], &[2, 3, 2]).unwrap();
    let direct = conv_order_n(&h, &[&x, &y], 1, 0).unwrap();
    // Flatten each kernel block separately.
    let hf = Tensor::from_fn(&[map.flat_len(&[2, 3, 2]).unwrap(); 2], |i| {
        let dec = |f: usize| -> Option<Vec<usize>> {
            let a = f / map.weights[0];
            let b = (f % map.weights[0]) / map.weights[1];
            let c = f % map.weights[1];
            (a < 2 && b < 3 && c < 2).then(|| vec![a, b, c])
        };
        match (dec(i[0]), dec(i[1])) {
            (Some(p), Some(q)) => h.get(&[p, q].concat()),
            _ => 0.0,
        }
    });
    let flat = conv_order_n(&hf, &[&flatten(&x, &map).unwrap(), &flatten(&y, &map).unwrap()], 1, 0).unwrap();
    let back = unflatten(&flat, &map, direct.shape()).unwrap();
    assert!(back.max_abs_diff(&direct) < 1e-12);
}

#[test]
fn symmetrized_kernel_gives_same_power_convolution() {
    let mut r = rng(7);
    let h = randn(&mut r, &[3, 3, 3]);
    let x = randn(&mut r, &[9]);
    let a = conv_order_n(&h, &[&x, &x, &x], 1, 1).unwrap();
    let b = conv_order_n(&symmetrize(&h, 1).unwrap(), &[&x, &x, &x], 1, 1).unwrap();
    assert!(a.max_abs_diff(&b) < 1e-12);
}

#[test]
fn diagonal_kernel_equals_elementwise_power() {
    let mut r = rng(8);
    let h = randn(&mut r, &[4]);
    let x = randn(&mut r, &[12]);
    for n in 1..5 {
        let a = conv_order_n(&diag_embed(n, &h).unwrap(), &vec![&x; n], 2, 1).unwrap();
        let b = conv1(&h, &x.map(|v| v.powi(n as i32)), 2, 1).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-12);
    }
}

#[test]
fn geometry_composition_matches_stacked_layers() {
    let mut r = rng(9);
    let layers = [
        Geometry::new(3, 2, 0).unwrap(),
        Geometry::new(2, 3, 0).unwrap(),
        Geometry::new(3, 1, 0).unwrap(),
    ];
    let g = composed_geometry(&layers).unwrap();
    let ks: Vec<Tensor> = layers.iter().map(|l| randn(&mut r, &[l.kernel])).collect();
    let x = randn(&mut r, &[60]);
    let mut y = x.clone();
    for (k, l) in ks.iter().zip(&layers) {
        y = conv1(k, &y, l.stride, l.pad).unwrap();
    }
    let mut fused = ks[0].clone();
    let mut s = layers[0].stride;
    for (k, l) in ks.iter().zip(&layers).skip(1) {
        fused = outer_conv(k, &[&fused], s, 1).unwrap();
        s *= l.stride;
    }
    assert_eq!(fused.len(), g.kernel);
    let direct = conv1(&fused, &x, g.stride, g.pad).unwrap();
    assert!(direct.max_abs_diff(&y) < 1e-12);
}

#[test]
fn volterra_apply_sums_orders() {
    let mut r = rng(10);
    let h1 = randn(&mut r, &[3]);
    let h2 = randn(&mut r, &[3, 3]);
    let v = VolterraOperator::new(vec![Tensor::scalar(0.25), h1.clone(), h2.clone()], 1, 1, 0).unwrap();
    let x = randn(&mut r, &[10]);
    let y = volterra_apply(&v, &x).unwrap();
    let a = naive_conv_n(&h1, &[&x], 1, 0);
    let b = naive_conv_n(&h2, &[&x, &x], 1, 0);
    let want: Vec<f64> = a.iter().zip(&b).map(|(p, q)| 0.25 + p + q).collect();
    assert!(max_diff(y.data(), &want) < 1e-13);
}

#[test]
fn diagonal_outer_matches_embedded_outer() {
    let mut r = rng(11);
    let g = randn(&mut r, &[4]);
    let h = randn(&mut r, &[3]);
    let a = oconv_diag(&g, &[&h, &h, &h], 2).unwrap();
    let b = naive_outer(&diag_embed(3, &g).unwrap(), &[&h, &h, &h], 2);
    assert!(a.max_abs_diff(&b) < 1e-13);
}

fn vec_strategy(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, len)
}

proptest! {
    #[test]
    fn output_extent_formula(len in 1usize..40, z in 1usize..8, s in 1usize..5, p in 0usize..4) {
        let x = Tensor::vector(vec![1.0; len]);
        let h = Tensor::vector(vec![1.0; z]);
        match conv1(&h, &x, s, p) {
            Ok(y) => prop_assert_eq!(y.len(), (len + 2 * p - z) / s + 1),
            Err(_) => prop_assert!(len + 2 * p < z),
        }
    }

    #[test]
    fn convolution_is_linear_in_the_signal(
        h in vec_strategy(4), x in vec_strategy(12), y in vec_strategy(12), a in -3.0f64..3.0,
    ) {
        let (h, x, y) = (Tensor::vector(h), Tensor::vector(x), Tensor::vector(y));
        let lhs = conv1(&h, &x.scale(a).add(&y).unwrap(), 1, 2).unwrap();
        let rhs = conv1(&h, &x, 1, 2).unwrap().scale(a).add(&conv1(&h, &y, 1, 2).unwrap()).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs) < 1e-12);
    }

    #[test]
    fn delta_kernel_is_identity(x in vec_strategy(9)) {
        let x = Tensor::vector(x);
        let d = volterra_core::tensor::dirac(&[3], None).unwrap();
        let y = conv1(&d, &x, 1, 1).unwrap();
        prop_assert!(y.max_abs_diff(&x) == 0.0);
    }

    #[test]
    fn outer_is_associative(a in vec_strategy(3), b in vec_strategy(4), c in vec_strategy(2)) {
        let (a, b, c) = (Tensor::vector(a), Tensor::vector(b), Tensor::vector(c));
        let l = outer_conv(&a, &[&outer_conv(&b, &[&c], 1, 1).unwrap()], 1, 1).unwrap();
        let r = outer_conv(&outer_conv(&a, &[&b], 1, 1).unwrap(), &[&c], 1, 1).unwrap();
        prop_assert!(l.max_abs_diff(&r) < 1e-12);
    }

    #[test]
    fn vten_roundtrip(data in prop::collection::vec(-1e6f64..1e6, 1..40)) {
        let t = Tensor::vector(data);
        let mut buf = Vec::new();
        t.write_vten(&mut buf).unwrap();
        prop_assert_eq!(Tensor::read_vten(buf.as_slice()).unwrap(), t);
    }
}
