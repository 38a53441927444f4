//! Composition of Volterra operators and the layer combinators built on it.
//!
//! Composing an outer operator `G` after an inner operator `H` (both on 1-D
//! signals) expands `G_j * (sum_k H_k * x^k)^j` with the multinomial theorem.
//! Each composition `(j_0, ..., j_n)` of `j` contributes
//! `j! / prod j_k!` times the outer convolution of `G_j` with `j_0` copies of
//! the constant `H_0`, `j_1` copies of `H_1` and so on, to the output order
//! `sum_k k * j_k`.

use crate::conv::{add_tail_aligned, composed_geometry, Geometry, VolterraOperator};
use crate::error::{arg_err, shape_err, Result, VolterraError};
use crate::outer::{outer_conv, outer_conv_slots, Slot};
use crate::tensor::{symmetrize, Tensor};

/// Limits on composed operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Caps {
    /// Largest order kept after composition.
    pub max_order: usize,
    /// Largest kernel extent per axis.
    pub max_extent: usize,
}

impl Default for Caps {
    fn default() -> Self {
        Caps {
            max_order: 6,
            max_extent: 32,
        }
    }
}

/// All `(j_0, ..., j_n)` of non-negative integers summing to `j`, in
/// lexicographic order.
pub fn compositions(j: usize, n: usize) -> Vec<Vec<usize>> {
    fn rec(left: usize, parts: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if parts == 1 {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for a in (0..=left).rev() {
            cur.push(a);
            rec(left - a, parts - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(j, n + 1, &mut Vec::new(), &mut out);
    out
}

/// `j! / prod_k j_k!`.
pub fn multinomial(parts: &[usize]) -> f64 {
    let mut c = 1.0;
    let mut total = 0usize;
    for &p in parts {
        for i in 1..=p {
            total += 1;
            c = c * total as f64 / i as f64;
        }
    }
    c
}

/// Number of compositions landing on each output order when an order-`m`
/// operator is composed after an order-`n` operator. Entry `o` counts the
/// pairs `(j, composition of j)` with `sum_k k * j_k = o`.
pub fn term_count(n: usize, m: usize) -> Vec<usize> {
    let mut counts = vec![0usize; n * m + 1];
    for j in 0..=m {
        for c in compositions(j, n) {
            let o: usize = c.iter().enumerate().map(|(k, &jk)| k * jk).sum();
            counts[o] += 1;
        }
    }
    counts
}

fn scalar_of(t: &Tensor, what: &str) -> Result<f64> {
    match t.item() {
        Some(v) if t.rank() == 0 => Ok(v),
        _ => shape_err(format!("{what} must be a scalar order-0 term, got {:?}", t.shape())),
    }
}

fn check_1d(v: &VolterraOperator, what: &str) -> Result<()> {
    if v.signal_dim() != 1 {
        return arg_err(format!("{what} must act on 1-D signals"));
    }
    Ok(())
}

fn combined_geometry(g: &VolterraOperator, h: &VolterraOperator, caps: &Caps) -> Result<Geometry> {
    let geo = composed_geometry(&[h.geometry().expect("1-D"), g.geometry().expect("1-D")])?;
    if geo.kernel > caps.max_extent {
        return Err(VolterraError::CapExceeded(format!(
            "combined kernel extent {} exceeds {}",
            geo.kernel, caps.max_extent
        )));
    }
    Ok(geo)
}

fn accumulate(slot: &mut Option<Tensor>, term: Tensor, coef: f64) -> Result<()> {
    let term = if coef == 1.0 { term } else { term.scale(coef) };
    *slot = Some(match slot.take() {
        None => term,
        Some(acc) => add_tail_aligned(&acc, &term)?,
    });
    Ok(())
}

fn finish(
    acc: Vec<Option<Tensor>>,
    f0: f64,
    geo: Geometry,
) -> Result<VolterraOperator> {
    let mut kernels = vec![Tensor::scalar(f0)];
    for (o, k) in acc.into_iter().enumerate().skip(1) {
        kernels.push(k.unwrap_or_else(|| Tensor::zeros(&vec![1; o])));
    }
    // Trailing all-zero orders carry no information.
    while kernels.len() > 1 && kernels.last().is_some_and(|k| k.is_all_zero()) {
        kernels.pop();
    }
    VolterraOperator::with_footprint(kernels, 1, vec![geo.kernel], geo.stride, geo.pad)
}

/// Compose an order-`<= 2` operator `g` after an order-`<= 2` operator `h`
/// with the explicit two-by-two expansion. Mixed terms are kept as ordered
/// pairs, so `G_2` need not be symmetric.
pub fn combine_22(g: &VolterraOperator, h: &VolterraOperator) -> Result<VolterraOperator> {
    check_1d(g, "outer operator")?;
    check_1d(h, "inner operator")?;
    if g.order() > 2 || h.order() > 2 {
        return arg_err("the two-by-two expansion needs operators of order <= 2");
    }
    let caps = Caps::default();
    let geo = combined_geometry(g, h, &caps)?;
    let s = h.stride();
    let g0 = scalar_of(&g.kernels()[0], "G_0")?;
    let h0 = scalar_of(&h.kernels()[0], "H_0")?;
    let zero1 = Tensor::zeros(&[1]);
    let zero2 = Tensor::zeros(&[1, 1]);
    let g1 = g.kernel(1).unwrap_or(&zero1);
    let g2 = g.kernel(2).unwrap_or(&zero2);
    let h1 = h.kernel(1).unwrap_or(&zero1);
    let h2 = h.kernel(2).unwrap_or(&zero2);
    let (k0, k1, k2) = (Slot::Scalar(h0), Slot::Kernel(h1), Slot::Kernel(h2));

    let f0 = g0 + h0 * g1.sum() + h0 * h0 * g2.sum();
    let mut acc: Vec<Option<Tensor>> = vec![None; 5];
    accumulate(&mut acc[1], outer_conv(g1, &[h1], s, 1)?, 1.0)?;
    accumulate(&mut acc[1], outer_conv_slots(g2, &[k0, k1], s, 1)?, 1.0)?;
    accumulate(&mut acc[1], outer_conv_slots(g2, &[k1, k0], s, 1)?, 1.0)?;
    accumulate(&mut acc[2], outer_conv(g1, &[h2], s, 1)?, 1.0)?;
    accumulate(&mut acc[2], outer_conv_slots(g2, &[k1, k1], s, 1)?, 1.0)?;
    accumulate(&mut acc[2], outer_conv_slots(g2, &[k0, k2], s, 1)?, 1.0)?;
    accumulate(&mut acc[2], outer_conv_slots(g2, &[k2, k0], s, 1)?, 1.0)?;
    accumulate(&mut acc[3], outer_conv_slots(g2, &[k1, k2], s, 1)?, 1.0)?;
    accumulate(&mut acc[3], outer_conv_slots(g2, &[k2, k1], s, 1)?, 1.0)?;
    accumulate(&mut acc[4], outer_conv_slots(g2, &[k2, k2], s, 1)?, 1.0)?;
    finish(acc, f0, geo)
}

/// Compose `g` after `h` for any orders, keeping output orders up to
/// `max_order` (default: all, subject to [`Caps`]).
pub fn combine_nm(g: &VolterraOperator, h: &VolterraOperator, max_order: Option<usize>) -> Result<VolterraOperator> {
    combine_nm_with_caps(g, h, max_order, &Caps::default())
}

/// [`combine_nm`] with explicit limits.
pub fn combine_nm_with_caps(
    g: &VolterraOperator,
    h: &VolterraOperator,
    max_order: Option<usize>,
    caps: &Caps,
) -> Result<VolterraOperator> {
    check_1d(g, "outer operator")?;
    check_1d(h, "inner operator")?;
    let (m, n) = (g.order(), h.order());
    let top = max_order.unwrap_or(n * m).min(n * m);
    if top > caps.max_order {
        return Err(VolterraError::CapExceeded(format!(
            "composed order {top} exceeds {}",
            caps.max_order
        )));
    }
    let geo = combined_geometry(g, h, caps)?;
    let s = h.stride();
    let g0 = scalar_of(&g.kernels()[0], "G_0")?;
    let h0 = scalar_of(&h.kernels()[0], "H_0")?;
    let hz: Vec<bool> = h.kernels().iter().map(|k| k.is_all_zero()).collect();

    let mut f0 = g0;
    let mut acc: Vec<Option<Tensor>> = vec![None; top + 1];
    for j in 1..=m {
        let gj = &g.kernels()[j];
        if gj.is_all_zero() {
            continue;
        }
        // Grouping equal operands is exact only for a symmetric kernel.
        let gj_sym;
        let gj = if j > 1 && !gj.is_symmetric(1, 0.0) {
            let z = g.footprint()[0];
            let after: Vec<usize> = gj.shape().iter().map(|e| z - e).collect();
            gj_sym = symmetrize(&gj.pad(&vec![0; j], &after)?, 1)?;
            &gj_sym
        } else {
            gj
        };
        for comp in compositions(j, n) {
            let o: usize = comp.iter().enumerate().map(|(k, &jk)| k * jk).sum();
            if o > top {
                continue;
            }
            if comp.iter().enumerate().any(|(k, &jk)| jk > 0 && hz[k]) {
                continue;
            }
            let coef = multinomial(&comp);
            let mut slots = Vec::with_capacity(j);
            for (k, &jk) in comp.iter().enumerate() {
                for _ in 0..jk {
                    slots.push(if k == 0 {
                        Slot::Scalar(h0)
                    } else {
                        Slot::Kernel(&h.kernels()[k])
                    });
                }
            }
            let term = outer_conv_slots(gj, &slots, s, 1)?;
            if o == 0 {
                f0 += coef * term.data()[0];
            } else {
                accumulate(&mut acc[o], term, coef)?;
            }
        }
    }
    finish(acc, f0, geo)
}

/// Add the identity to an operator: `H_1` gains a unit tap at index 0.
pub fn residual_adjust(v: &VolterraOperator) -> Result<VolterraOperator> {
    residual_adjust_at(v, &vec![0; v.signal_dim()])
}

/// Add a unit tap at `tap` to `H_1`.
pub fn residual_adjust_at(v: &VolterraOperator, tap: &[usize]) -> Result<VolterraOperator> {
    let m = v.signal_dim();
    if tap.len() != m || tap.iter().zip(v.footprint()).any(|(t, z)| t >= z) {
        return arg_err(format!("tap {tap:?} outside footprint {:?}", v.footprint()));
    }
    let shape: Vec<usize> = tap.iter().map(|t| t + 1).collect();
    let delta = crate::tensor::dirac(&shape, Some(tap))?;
    let mut kernels = v.kernels().to_vec();
    if kernels.len() < 2 {
        kernels.push(delta);
    } else {
        kernels[1] = add_tail_aligned(&kernels[1], &delta)?;
    }
    VolterraOperator::with_footprint(kernels, m, v.footprint().to_vec(), v.stride(), v.pad())
}

/// Fuse `g * (sum_i h_i * x)` into one kernel. Branches are aligned at index
/// 0 and zero-extended at the tail to the longest branch.
pub fn inception_merge(g: &Tensor, branches: &[Tensor]) -> Result<Tensor> {
    let Some(first) = branches.first() else {
        return arg_err("inception block needs at least one branch");
    };
    if branches.iter().any(|b| b.rank() != g.rank()) {
        return shape_err("branch ranks must match the merge kernel rank");
    }
    let mut sum = first.clone();
    for b in &branches[1..] {
        sum = add_tail_aligned(&sum, b)?;
    }
    outer_conv(g, &[&sum], 1, g.rank())
}

/// A fully connected layer `y = W x + b` as one operator per output: row `r`
/// becomes the flipped kernel of a full-length convolution.
pub fn fc_as_conv(w: &Tensor, bias: &[f64]) -> Result<Vec<VolterraOperator>> {
    if w.rank() != 2 {
        return shape_err("weight matrix must be 2-D");
    }
    let (rows, cols) = (w.shape()[0], w.shape()[1]);
    if bias.len() != rows {
        return shape_err(format!("bias length {} vs {rows} rows", bias.len()));
    }
    (0..rows)
        .map(|r| {
            let row = Tensor::vector(w.data()[r * cols..(r + 1) * cols].to_vec());
            VolterraOperator::linear(row.flip(), bias[r], 1, 0)
        })
        .collect()
}

mod properties;

pub use properties::{verify_property, PropertyReport, PROPERTY_COUNT};
