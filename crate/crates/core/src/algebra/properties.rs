//! Randomised checks of the kernel-algebra identities.
//!
//! Each check draws Gaussian operands from the seed, evaluates both sides of
//! one identity and reports the largest absolute difference. Shapes are
//! small and fixed per identity; strides and paddings vary with the seed
//! where the identity allows it.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::conv::{conv_order_n, conv_power};
use crate::error::{Result, VolterraError};
use crate::outer::{oconv_diag, outer_conv, outer_conv_slots, Slot};
use crate::rng::{gaussian, stream};
use crate::tensor::{diag_embed, symmetrize, Tensor};

/// Number of identities checked by [`verify_property`].
pub const PROPERTY_COUNT: usize = 15;

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyReport {
    pub id: usize,
    pub name: &'static str,
    pub deviation: f64,
}

const NAMES: [&str; PROPERTY_COUNT] = [
    "additivity in each signal slot",
    "constant offset through a linear kernel",
    "additivity in the kernel",
    "binomial expansion of order 2",
    "binomial expansion of order 4",
    "multinomial expansion of three signals",
    "stacking a linear kernel on an order-n layer",
    "stacking strided layers",
    "stacking on two kernels",
    "stacking on three kernels",
    "associativity of outer convolution",
    "constant in the first slot",
    "constant in the last slot",
    "element-wise power as a diagonal kernel",
    "power of a convolved signal",
];

/// Check identity `id` (1-based) on operands drawn from `seed`.
pub fn verify_property(id: usize, seed: u64) -> Result<PropertyReport> {
    if id == 0 || id > PROPERTY_COUNT {
        return Err(VolterraError::Unknown {
            kind: "property",
            name: id.to_string(),
        });
    }
    let mut rng = stream(seed, id as u64);
    let r = &mut rng;
    let deviation = match id {
        1 => additivity_in_slot(r)?,
        2 => constant_offset(r)?,
        3 => kernel_additivity(r)?,
        4 => binomial(r, 2)?,
        5 => binomial(r, 4)?,
        6 => multinomial3(r)?,
        7 => stack_linear(r, 1)?.max(stack_linear(r, 2)?),
        8 => stack_strided(r)?,
        9 => stack_two(r)?,
        10 => stack_three(r)?,
        11 => associativity(r)?,
        12 => constant_slot(r, true)?,
        13 => constant_slot(r, false)?,
        14 => elementwise_power(r)?,
        15 => power_of_convolved(r)?,
        _ => unreachable!(),
    };
    Ok(PropertyReport {
        id,
        name: NAMES[id - 1],
        deviation,
    })
}

fn g(r: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    gaussian(r, shape)
}

fn diff(a: &Tensor, b: &Tensor) -> f64 {
    a.max_abs_diff(b)
}

fn sum_all(terms: &[Tensor]) -> Result<Tensor> {
    let mut acc = terms[0].clone();
    for t in &terms[1..] {
        acc = acc.add(t)?;
    }
    Ok(acc)
}

fn additivity_in_slot(r: &mut ChaCha8Rng) -> Result<f64> {
    let (s, p) = (r.random_range(1..3), r.random_range(0..3));
    let k = g(r, &[3, 3, 3]);
    let (x1, x2, y2, x3) = (g(r, &[11]), g(r, &[11]), g(r, &[11]), g(r, &[11]));
    let lhs = conv_order_n(&k, &[&x1, &x2.add(&y2)?, &x3], s, p)?;
    let rhs = conv_order_n(&k, &[&x1, &x2, &x3], s, p)?.add(&conv_order_n(&k, &[&x1, &y2, &x3], s, p)?)?;
    let h = g(r, &[4]);
    let lin = conv_order_n(&h, &[&x1.add(&y2)?], s, p)?;
    let lin2 = conv_order_n(&h, &[&x1], s, p)?.add(&conv_order_n(&h, &[&y2], s, p)?)?;
    Ok(diff(&lhs, &rhs).max(diff(&lin, &lin2)))
}

fn constant_offset(r: &mut ChaCha8Rng) -> Result<f64> {
    let s = r.random_range(1..4);
    let h = g(r, &[5]);
    let x = g(r, &[17]);
    let a: f64 = r.sample(rand_distr::StandardNormal);
    let lhs = conv_order_n(&h, &[&x.map(|v| v + a)], s, 0)?;
    let rhs = conv_order_n(&h, &[&x], s, 0)?.map(|v| v + a * h.sum());
    Ok(diff(&lhs, &rhs))
}

fn kernel_additivity(r: &mut ChaCha8Rng) -> Result<f64> {
    let (s, p) = (r.random_range(1..3), r.random_range(0..3));
    let a = g(r, &[3, 2, 3]);
    let b = g(r, &[3, 2, 3]);
    let xs = [g(r, &[9]), g(r, &[9]), g(r, &[9])];
    let refs: Vec<&Tensor> = xs.iter().collect();
    let lhs = conv_order_n(&a.add(&b)?, &refs, s, p)?;
    let rhs = conv_order_n(&a, &refs, s, p)?.add(&conv_order_n(&b, &refs, s, p)?)?;
    Ok(diff(&lhs, &rhs))
}

fn binomial_coef(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |c, i| c * (n - i) as f64 / (i + 1) as f64)
}

fn binomial(r: &mut ChaCha8Rng, n: usize) -> Result<f64> {
    let (s, p) = (r.random_range(1..3), r.random_range(0..2));
    let k = symmetrize(&g(r, &vec![3; n]), 1)?;
    let x = g(r, &[10]);
    let y = g(r, &[10]);
    let lhs = conv_power(&k, &x.add(&y)?, s, p)?;
    let mut terms = Vec::new();
    for j in 0..=n {
        let mut sigs = vec![&x; j];
        sigs.extend(std::iter::repeat_n(&y, n - j));
        terms.push(conv_order_n(&k, &sigs, s, p)?.scale(binomial_coef(n, j)));
    }
    Ok(diff(&lhs, &sum_all(&terms)?))
}

fn multinomial3(r: &mut ChaCha8Rng) -> Result<f64> {
    let n = 2;
    let k = symmetrize(&g(r, &[4, 4]), 1)?;
    let xs = [g(r, &[12]), g(r, &[12]), g(r, &[12])];
    let total = xs[0].add(&xs[1])?.add(&xs[2])?;
    let lhs = conv_power(&k, &total, 1, 1)?;
    let mut terms = Vec::new();
    for comp in crate::algebra::compositions(n, 2) {
        let mut sigs = Vec::new();
        for (i, &c) in comp.iter().enumerate() {
            sigs.extend(std::iter::repeat_n(&xs[i], c));
        }
        terms.push(conv_order_n(&k, &sigs, 1, 1)?.scale(crate::algebra::multinomial(&comp)));
    }
    Ok(diff(&lhs, &sum_all(&terms)?))
}

fn stack_linear(r: &mut ChaCha8Rng, m: usize) -> Result<f64> {
    let gk = g(r, &vec![3; m]);
    let h = g(r, &vec![3; 2 * m]);
    let x = g(r, &vec![9; m]);
    let y = g(r, &vec![9; m]);
    let inner = conv_order_n(&h, &[&x, &y], 1, 0)?;
    let lhs = conv_order_n(&gk, &[&inner], 1, 0)?;
    let fused = outer_conv(&gk, &[&h], 1, m)?;
    let rhs = conv_order_n(&fused, &[&x, &y], 1, 0)?;
    Ok(diff(&lhs, &rhs))
}

fn stack_strided(r: &mut ChaCha8Rng) -> Result<f64> {
    let s = r.random_range(1..4);
    let z = r.random_range(1..4);
    let gk = g(r, &[3]);
    let h = g(r, &[4]);
    let x = g(r, &[40]);
    let lhs = conv_order_n(&gk, &[&conv_order_n(&h, &[&x], z, 0)?], s, 0)?;
    let rhs = conv_order_n(&outer_conv(&gk, &[&h], z, 1)?, &[&x], s * z, 0)?;
    Ok(diff(&lhs, &rhs))
}

fn stack_two(r: &mut ChaCha8Rng) -> Result<f64> {
    let gk = g(r, &[3, 3]);
    let h1 = g(r, &[3]);
    let h2 = g(r, &[3, 3]);
    let (x, y1, y2) = (g(r, &[12]), g(r, &[12]), g(r, &[12]));
    let u = conv_order_n(&h1, &[&x], 1, 0)?;
    let v = conv_order_n(&h2, &[&y1, &y2], 1, 0)?;
    let lhs = conv_order_n(&gk, &[&u, &v], 1, 0)?;
    let rhs = conv_order_n(&outer_conv(&gk, &[&h1, &h2], 1, 1)?, &[&x, &y1, &y2], 1, 0)?;
    Ok(diff(&lhs, &rhs))
}

fn stack_three(r: &mut ChaCha8Rng) -> Result<f64> {
    let gk = g(r, &[2, 3, 2]);
    let hs = [g(r, &[3]), g(r, &[3]), g(r, &[3])];
    let xs = [g(r, &[10]), g(r, &[10]), g(r, &[10])];
    let inner: Vec<Tensor> = (0..3)
        .map(|i| conv_order_n(&hs[i], &[&xs[i]], 1, 0))
        .collect::<Result<_>>()?;
    let lhs = conv_order_n(&gk, &[&inner[0], &inner[1], &inner[2]], 1, 0)?;
    let fused = outer_conv(&gk, &[&hs[0], &hs[1], &hs[2]], 1, 1)?;
    let rhs = conv_order_n(&fused, &[&xs[0], &xs[1], &xs[2]], 1, 0)?;
    Ok(diff(&lhs, &rhs))
}

fn associativity(r: &mut ChaCha8Rng) -> Result<f64> {
    let (a, b, c) = (g(r, &[3]), g(r, &[4]), g(r, &[5]));
    let lhs = outer_conv(&a, &[&outer_conv(&b, &[&c], 1, 1)?], 1, 1)?;
    let rhs = outer_conv(&outer_conv(&a, &[&b], 1, 1)?, &[&c], 1, 1)?;
    Ok(diff(&lhs, &rhs))
}

fn constant_slot(r: &mut ChaCha8Rng, first: bool) -> Result<f64> {
    let gk = g(r, &[3, 3]);
    let h = g(r, &[3, 3]);
    let (x, y) = (g(r, &[13]), g(r, &[13]));
    let a: f64 = r.sample(rand_distr::StandardNormal);
    let u = conv_order_n(&h, &[&x, &y], 1, 0)?;
    let c = Tensor::full(u.shape(), a);
    let sigs = if first { [&c, &u] } else { [&u, &c] };
    let lhs = conv_order_n(&gk, &sigs, 1, 0)?;
    let slots = if first {
        [Slot::Scalar(a), Slot::Kernel(&h)]
    } else {
        [Slot::Kernel(&h), Slot::Scalar(a)]
    };
    let fused = outer_conv_slots(&gk, &slots, 1, 1)?;
    let rhs = conv_order_n(&fused, &[&x, &y], 1, 0)?;
    Ok(diff(&lhs, &rhs))
}

fn elementwise_power(r: &mut ChaCha8Rng) -> Result<f64> {
    let n = 3;
    let (s, p) = (r.random_range(1..3), r.random_range(0..3));
    let h = g(r, &[4]);
    let x = g(r, &[15]);
    let lhs = conv_order_n(&h, &[&x.map(|v| v.powi(n as i32))], s, p)?;
    let rhs = conv_power(&diag_embed(n, &h)?, &x, s, p)?;
    Ok(diff(&lhs, &rhs))
}

fn power_of_convolved(r: &mut ChaCha8Rng) -> Result<f64> {
    let n = 3;
    let gk = g(r, &[3]);
    let h = g(r, &[4]);
    let x = g(r, &[16]);
    let inner = conv_order_n(&h, &[&x], 1, 0)?.map(|v| v.powi(n));
    let lhs = conv_order_n(&gk, &[&inner], 1, 0)?;
    let fused = oconv_diag(&gk, &[&h, &h, &h], 1)?;
    let rhs = conv_power(&fused, &x, 1, 0)?;
    Ok(diff(&lhs, &rhs))
}
