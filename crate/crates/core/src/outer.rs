//! Outer convolution of a kernel with a list of kernels.
//!
//! For `G` with one block of `m` axes per operand and operands `H_1..H_n`,
//!
//! ```text
//! (G (*)_s {H_1, ..., H_n})(t_1, ..., t_n) = sum_tau G(tau) * prod_i H_i(t_i - s * tau_i)
//! ```
//!
//! where every block of `H_i` is shifted by `s * tau_i`. Operands are
//! zero-extended, so an axis of `H_i` with extent `c` facing a `G` axis of
//! extent `z` yields extent `c + (z - 1) * s`.
//!
//! A [`Slot::Scalar`] operand stands for a constant; its `G` axes are summed
//! out instead of producing result axes. This is the scalar-slot reduction
//! used when expanding compositions with a constant term.

use crate::error::{arg_err, shape_err, Result, VolterraError};
use crate::tensor::{for_each_index, strides_of, Tensor};

/// Largest dense result produced by a single outer convolution.
pub const MAX_OUTER_ELEMENTS: usize = 1 << 27;

/// One operand of an outer convolution.
#[derive(Debug, Clone, Copy)]
pub enum Slot<'a> {
    /// A constant whose `G` axes are summed out.
    Scalar(f64),
    /// A kernel whose blocks are shifted by the matching `G` index.
    Kernel(&'a Tensor),
}

/// Result shape of `G (*)_s {H_i}` with all operands as kernels.
pub fn outer_shape(g_shape: &[usize], h_shapes: &[&[usize]], stride: usize, m: usize) -> Result<Vec<usize>> {
    let n = h_shapes.len();
    if m == 0 || g_shape.len() != n * m {
        return shape_err(format!(
            "outer kernel rank {} does not match {n} operands of signal rank {m}",
            g_shape.len()
        ));
    }
    let mut shape = Vec::new();
    for (i, h) in h_shapes.iter().enumerate() {
        if h.is_empty() || h.len() % m != 0 {
            return shape_err(format!("operand {i} rank {} is not a positive multiple of {m}", h.len()));
        }
        for (a, &c) in h.iter().enumerate() {
            shape.push(c + (g_shape[i * m + a % m] - 1) * stride);
        }
    }
    Ok(shape)
}

/// `G (*)_s {H_1, ..., H_n}` for kernels on `m`-dimensional signals.
pub fn outer_conv(g: &Tensor, hs: &[&Tensor], stride: usize, m: usize) -> Result<Tensor> {
    let slots: Vec<Slot> = hs.iter().map(|h| Slot::Kernel(h)).collect();
    outer_conv_slots(g, &slots, stride, m)
}

/// Outer convolution where scalar operands are summed out.
pub fn outer_conv_slots(g: &Tensor, slots: &[Slot], stride: usize, m: usize) -> Result<Tensor> {
    let n = slots.len();
    if n == 0 {
        return arg_err("outer convolution needs at least one operand");
    }
    if stride == 0 {
        return Err(VolterraError::InvalidGeometry("stride must be positive".into()));
    }
    if m == 0 || g.rank() != n * m {
        return shape_err(format!(
            "outer kernel rank {} does not match {n} operands of signal rank {m}",
            g.rank()
        ));
    }
    let layout = Layout::new(g.shape(), slots, stride, m)?;
    let mut entries = Vec::new();
    let mut k = 0;
    for_each_index(g.shape(), |idx| {
        let v = g.data()[k];
        k += 1;
        if v != 0.0 {
            let base: usize = (0..n * m).map(|a| idx[a] * layout.shift[a]).sum();
            entries.push((base, v));
        }
    });
    layout.scatter(&entries)
}

/// Outer convolution with the diagonal kernel built from `g`:
/// `sum_k g(k) prod_i H_i(t_i - s k)`. Equivalent to
/// `outer_conv(diag_embed(n, g), hs)` without materialising the diagonal.
pub fn oconv_diag(g: &Tensor, hs: &[&Tensor], stride: usize) -> Result<Tensor> {
    let slots: Vec<Slot> = hs.iter().map(|h| Slot::Kernel(h)).collect();
    oconv_diag_slots(g, &slots, stride)
}

/// Diagonal outer convolution with scalar-slot reduction.
pub fn oconv_diag_slots(g: &Tensor, slots: &[Slot], stride: usize) -> Result<Tensor> {
    let n = slots.len();
    let m = g.rank();
    if n == 0 || m == 0 {
        return arg_err("diagonal outer convolution needs a kernel of rank >= 1 and operands");
    }
    if stride == 0 {
        return Err(VolterraError::InvalidGeometry("stride must be positive".into()));
    }
    let full_shape: Vec<usize> = (0..n).flat_map(|_| g.shape().iter().copied()).collect();
    let layout = Layout::new(&full_shape, slots, stride, m)?;
    // A diagonal index k moves every block by the same amount.
    let diag_shift: Vec<usize> = (0..m).map(|d| (0..n).map(|i| layout.shift[i * m + d]).sum()).collect();
    let mut entries = Vec::new();
    let mut k = 0;
    for_each_index(g.shape(), |idx| {
        let v = g.data()[k];
        k += 1;
        if v != 0.0 {
            let base: usize = idx.iter().zip(&diag_shift).map(|(i, s)| i * s).sum();
            entries.push((base, v));
        }
    });
    layout.scatter(&entries)
}

struct Layout {
    shape: Vec<usize>,
    /// Offset added to the result per unit of each `G` axis.
    shift: Vec<usize>,
    /// Nonzero entries `(offset, value)` of each kernel operand.
    lists: Vec<Vec<(usize, f64)>>,
    scalar: f64,
}

impl Layout {
    fn new(g_shape: &[usize], slots: &[Slot], stride: usize, m: usize) -> Result<Self> {
        let mut shape = Vec::new();
        for (i, slot) in slots.iter().enumerate() {
            if let Slot::Kernel(h) = slot {
                if h.rank() == 0 || h.rank() % m != 0 {
                    return shape_err(format!("operand {i} rank {} is not a positive multiple of {m}", h.rank()));
                }
                for (a, &c) in h.shape().iter().enumerate() {
                    shape.push(c + (g_shape[i * m + a % m] - 1) * stride);
                }
            }
        }
        let total = shape
            .iter()
            .try_fold(1usize, |acc, &e| acc.checked_mul(e))
            .filter(|&t| t <= MAX_OUTER_ELEMENTS)
            .ok_or_else(|| VolterraError::CapExceeded(format!("outer convolution result {shape:?} is too large")))?;
        let _ = total;
        let rstr = strides_of(&shape);
        let mut shift = vec![0usize; g_shape.len()];
        let mut lists = Vec::new();
        let mut scalar = 1.0;
        let mut axis = 0;
        for (i, slot) in slots.iter().enumerate() {
            match slot {
                Slot::Scalar(a) => scalar *= a,
                Slot::Kernel(h) => {
                    let r = h.rank();
                    let my = &rstr[axis..axis + r];
                    for (a, s) in my.iter().enumerate() {
                        shift[i * m + a % m] += stride * s;
                    }
                    let mut list = Vec::new();
                    let mut k = 0;
                    for_each_index(h.shape(), |idx| {
                        let v = h.data()[k];
                        k += 1;
                        if v != 0.0 {
                            let off: usize = idx.iter().zip(my).map(|(x, s)| x * s).sum();
                            list.push((off, v));
                        }
                    });
                    lists.push(list);
                    axis += r;
                }
            }
        }
        Ok(Layout { shape, shift, lists, scalar })
    }

    fn scatter(&self, entries: &[(usize, f64)]) -> Result<Tensor> {
        let total: usize = self.shape.iter().product();
        let mut out = vec![0.0; total];
        if self.scalar != 0.0 && self.lists.iter().all(|l| !l.is_empty()) {
            match self.lists.split_first() {
                None => {
                    for &(_, v) in entries {
                        out[0] += v * self.scalar;
                    }
                }
                Some((first, rest)) => {
                    let tail = product_list(rest);
                    for &(base, gv) in entries {
                        let c0 = gv * self.scalar;
                        for &(o1, v1) in first {
                            let c = c0 * v1;
                            let dst = &mut out[base + o1..];
                            for &(o, v) in &tail {
                                dst[o] += c * v;
                            }
                        }
                    }
                }
            }
        }
        Tensor::new(self.shape.clone(), out)
    }
}

/// Outer product of entry lists: offsets add, values multiply.
fn product_list(lists: &[Vec<(usize, f64)>]) -> Vec<(usize, f64)> {
    let mut acc = vec![(0usize, 1.0f64)];
    for l in lists {
        let mut next = Vec::with_capacity(acc.len() * l.len());
        for &(o, v) in &acc {
            for &(o2, v2) in l {
                next.push((o + o2, v * v2));
            }
        }
        acc = next;
    }
    acc
}
