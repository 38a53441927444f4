//! Order-n discrete convolution, Volterra operators and m-D to 1-D flattening.
//!
//! Convolution is minus-type. For an order-`n` kernel `H` acting on
//! `m`-dimensional signals, block `i` of `m` axes pairs with signal `i`.
//! With footprint `z` (the largest kernel extent along each signal axis),
//! stride `s` and zero padding `p`, output index `o` sits at absolute signal
//! position `t = s*o + z - 1 - p` and
//!
//! ```text
//! y(o) = sum_tau H(tau_1, ..., tau_n) * prod_i x_i(t - tau_i)
//! ```
//!
//! where `x_i` reads zero outside its support. Every kernel is aligned at
//! `tau = 0`, so kernels of different extents can share one footprint by
//! zero-extending at the tail. Output extent per axis is
//! `floor((L + 2p - z) / s) + 1`.

use serde::{Deserialize, Serialize};

use crate::error::{arg_err, shape_err, Result, VolterraError};
use crate::exec;
use crate::tensor::{for_each_index, strides_of, Tensor};

/// Geometry of a 1-D layer: kernel extent, stride and zero padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Geometry {
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl Geometry {
    pub fn new(kernel: usize, stride: usize, pad: usize) -> Result<Self> {
        if kernel == 0 || stride == 0 {
            return Err(VolterraError::InvalidGeometry(format!(
                "kernel {kernel} and stride {stride} must be positive"
            )));
        }
        Ok(Geometry { kernel, stride, pad })
    }

    /// Geometry that leaves a signal unchanged.
    pub const IDENTITY: Geometry = Geometry { kernel: 1, stride: 1, pad: 0 };

    pub fn output_len(&self, len: usize) -> Result<usize> {
        output_extent(len, self.kernel, self.stride, self.pad)
    }
}

/// Single layer equivalent to applying `layers` in order (first layer first).
///
/// `z = z_1 + sum_k (z_k - 1) * prod_{i<k} s_i`, `s = prod_k s_k`,
/// `p = p_1 + sum_k p_k * prod_{i<k} s_i`.
pub fn composed_geometry(layers: &[Geometry]) -> Result<Geometry> {
    let Some(first) = layers.first() else {
        return Ok(Geometry::IDENTITY);
    };
    let mut g = *first;
    Geometry::new(g.kernel, g.stride, g.pad)?;
    for l in &layers[1..] {
        Geometry::new(l.kernel, l.stride, l.pad)?;
        let overflow = || VolterraError::CapExceeded("composed geometry overflows".into());
        g.kernel = (l.kernel - 1)
            .checked_mul(g.stride)
            .and_then(|v| v.checked_add(g.kernel))
            .ok_or_else(overflow)?;
        g.pad = l
            .pad
            .checked_mul(g.stride)
            .and_then(|v| v.checked_add(g.pad))
            .ok_or_else(overflow)?;
        g.stride = g.stride.checked_mul(l.stride).ok_or_else(overflow)?;
    }
    Ok(g)
}

/// `floor((len + 2*pad - kernel) / stride) + 1`, or an error when the kernel
/// does not fit.
pub fn output_extent(len: usize, kernel: usize, stride: usize, pad: usize) -> Result<usize> {
    if stride == 0 || kernel == 0 {
        return Err(VolterraError::InvalidGeometry("kernel and stride must be positive".into()));
    }
    let padded = len + 2 * pad;
    if padded < kernel {
        return Err(VolterraError::InvalidGeometry(format!(
            "kernel {kernel} larger than padded signal {padded}"
        )));
    }
    Ok((padded - kernel) / stride + 1)
}

/// Per-axis footprint of an order-`n` kernel on `m`-dimensional signals.
pub fn kernel_footprint(h: &Tensor, m: usize) -> Result<Vec<usize>> {
    if m == 0 || h.rank() == 0 || !h.rank().is_multiple_of(m) {
        return shape_err(format!("kernel rank {} is not a positive multiple of {m}", h.rank()));
    }
    let n = h.rank() / m;
    Ok((0..m)
        .map(|d| (0..n).map(|i| h.shape()[i * m + d]).max().unwrap_or(1))
        .collect())
}

/// Order-`n` convolution of `h` with `signals` (one per kernel block).
pub fn conv_order_n(h: &Tensor, signals: &[&Tensor], stride: usize, pad: usize) -> Result<Tensor> {
    let m = match signals.first() {
        Some(x) => x.rank(),
        None => return arg_err("empty signal list; order 0 is handled by volterra_apply"),
    };
    let fp = kernel_footprint(h, m)?;
    conv_with_footprint(h, signals, &fp, stride, pad)
}

/// 1-D convolution of a kernel with one signal.
pub fn conv1(h: &Tensor, x: &Tensor, stride: usize, pad: usize) -> Result<Tensor> {
    conv_order_n(h, &[x], stride, pad)
}

/// Order-`n` convolution of `h` with `x^n` (the same signal in every block).
pub fn conv_power(h: &Tensor, x: &Tensor, stride: usize, pad: usize) -> Result<Tensor> {
    if x.rank() == 0 || !h.rank().is_multiple_of(x.rank()) {
        return shape_err(format!("kernel rank {} vs signal rank {}", h.rank(), x.rank()));
    }
    let n = h.rank() / x.rank();
    let sigs = vec![x; n];
    conv_order_n(h, &sigs, stride, pad)
}

/// Order-`n` convolution with an explicit footprint, which must cover every
/// kernel block.
pub fn conv_with_footprint(
    h: &Tensor,
    signals: &[&Tensor],
    footprint: &[usize],
    stride: usize,
    pad: usize,
) -> Result<Tensor> {
    let n = signals.len();
    if n == 0 {
        return arg_err("empty signal list; order 0 is handled by volterra_apply");
    }
    let sshape = signals[0].shape().to_vec();
    let m = sshape.len();
    if m == 0 {
        return shape_err("signals must have rank >= 1");
    }
    if signals.iter().any(|x| x.shape() != sshape.as_slice()) {
        return shape_err("signals of different shapes");
    }
    if h.rank() != n * m {
        return shape_err(format!(
            "kernel rank {} does not equal order {n} times signal rank {m}",
            h.rank()
        ));
    }
    if footprint.len() != m {
        return shape_err("footprint rank differs from signal rank");
    }
    for i in 0..n {
        for d in 0..m {
            if h.shape()[i * m + d] > footprint[d] {
                return shape_err(format!("kernel block {i} exceeds footprint {footprint:?}"));
            }
        }
    }
    let out_shape: Vec<usize> = (0..m)
        .map(|d| output_extent(sshape[d], footprint[d], stride, pad))
        .collect::<Result<_>>()?;
    let total: usize = out_shape.iter().product();
    if h.is_all_zero() {
        return Ok(Tensor::zeros(&out_shape));
    }

    let blocks: Vec<Vec<usize>> = (0..n).map(|i| h.shape()[i * m..(i + 1) * m].to_vec()).collect();
    let block_len: Vec<usize> = blocks.iter().map(|b| b.iter().product()).collect();
    let sstr = strides_of(&sshape);
    // For each block, the signal offset of every tap relative to the window
    // origin, plus per-axis tap values for bounds checks.
    let taps: Vec<Vec<Vec<usize>>> = blocks
        .iter()
        .map(|b| {
            let mut v = Vec::new();
            for_each_index(b, |idx| v.push(idx.to_vec()));
            v
        })
        .collect();
    let ostr = strides_of(&out_shape);
    let ctx = Ctx {
        h: h.data(),
        signals,
        block_len: &block_len,
        taps: &taps,
        sshape: &sshape,
        sstr: &sstr,
        footprint,
        stride,
        pad,
    };

    const CHUNK: usize = 32;
    let chunks = total.div_ceil(CHUNK);
    let parts = exec::map_indices(chunks, |c| {
        let lo = c * CHUNK;
        let hi = (lo + CHUNK).min(total);
        let mut scratch = Scratch::new(&block_len);
        let mut o = vec![0usize; m];
        (lo..hi)
            .map(|flat| {
                let mut r = flat;
                for d in 0..m {
                    o[d] = r / ostr[d];
                    r %= ostr[d];
                }
                ctx.eval(&o, &mut scratch)
            })
            .collect::<Vec<f64>>()
    });
    let data: Vec<f64> = parts.into_iter().flatten().collect();
    Tensor::new(out_shape, data)
}

struct Ctx<'a> {
    h: &'a [f64],
    signals: &'a [&'a Tensor],
    block_len: &'a [usize],
    taps: &'a [Vec<Vec<usize>>],
    sshape: &'a [usize],
    sstr: &'a [usize],
    footprint: &'a [usize],
    stride: usize,
    pad: usize,
}

struct Scratch {
    windows: Vec<Vec<f64>>,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl Scratch {
    fn new(block_len: &[usize]) -> Self {
        let n = block_len.len();
        let lead: usize = block_len[..n - 1].iter().product();
        Scratch {
            windows: block_len.iter().map(|&l| vec![0.0; l]).collect(),
            a: vec![0.0; lead],
            b: vec![0.0; lead],
        }
    }
}

impl Ctx<'_> {
    fn eval(&self, o: &[usize], s: &mut Scratch) -> f64 {
        let m = o.len();
        let n = self.signals.len();
        // Absolute position t = s*o + z - 1 - p, possibly negative.
        let base: Vec<isize> = (0..m)
            .map(|d| (self.stride * o[d] + self.footprint[d] - 1) as isize - self.pad as isize)
            .collect();
        for i in 0..n {
            let x = self.signals[i].data();
            let w = &mut s.windows[i];
            for (k, tap) in self.taps[i].iter().enumerate() {
                let mut off = 0usize;
                let mut inside = true;
                for d in 0..m {
                    let pos = base[d] - tap[d] as isize;
                    if pos < 0 || pos as usize >= self.sshape[d] {
                        inside = false;
                        break;
                    }
                    off += pos as usize * self.sstr[d];
                }
                w[k] = if inside { x[off] } else { 0.0 };
            }
        }
        if s.windows.iter().any(|w| w.iter().all(|&v| v == 0.0)) {
            return 0.0;
        }
        // Contract the last block first; the kernel is row-major so the last
        // block is contiguous.
        let last = &s.windows[n - 1];
        let bl = self.block_len[n - 1];
        if n == 1 {
            return dot(self.h, last);
        }
        let lead = self.h.len() / bl;
        for (a, row) in s.a[..lead].iter_mut().zip(self.h.chunks_exact(bl)) {
            *a = dot(row, last);
        }
        let mut cur_len = lead;
        for i in (0..n - 1).rev() {
            let w = &s.windows[i];
            let bl = self.block_len[i];
            let next = cur_len / bl;
            if i == 0 {
                return dot(&s.a[..cur_len], w);
            }
            for k in 0..next {
                s.b[k] = dot(&s.a[k * bl..(k + 1) * bl], w);
            }
            std::mem::swap(&mut s.a, &mut s.b);
            cur_len = next;
        }
        unreachable!("loop returns at block 0")
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four accumulators keep the loop vectorisable while fixing the
    // summation order.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let k = 4 * c;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut tail = 0.0;
    for k in 4 * chunks..a.len() {
        tail += a[k] * b[k];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// A truncated Volterra operator `f(x) = H_0 + sum_{n>=1} H_n * x^n`.
///
/// `kernels[n]` is the order-`n` kernel of rank `n*m`. `kernels[0]` is a
/// rank-0 scalar broadcast over the output, or an output-shaped tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct VolterraOperator {
    kernels: Vec<Tensor>,
    signal_dim: usize,
    footprint: Vec<usize>,
    stride: usize,
    pad: usize,
}

impl VolterraOperator {
    /// Build an operator whose footprint is the largest kernel extent.
    pub fn new(kernels: Vec<Tensor>, signal_dim: usize, stride: usize, pad: usize) -> Result<Self> {
        if signal_dim == 0 {
            return arg_err("signal dimension must be positive");
        }
        let mut fp = vec![1; signal_dim];
        for (n, h) in kernels.iter().enumerate().skip(1) {
            if h.rank() != n * signal_dim {
                return shape_err(format!(
                    "order-{n} kernel has rank {}, expected {}",
                    h.rank(),
                    n * signal_dim
                ));
            }
            for (d, z) in kernel_footprint(h, signal_dim)?.into_iter().enumerate() {
                fp[d] = fp[d].max(z);
            }
        }
        Self::with_footprint(kernels, signal_dim, fp, stride, pad)
    }

    /// Build an operator with an explicit footprint covering every kernel.
    pub fn with_footprint(
        kernels: Vec<Tensor>,
        signal_dim: usize,
        footprint: Vec<usize>,
        stride: usize,
        pad: usize,
    ) -> Result<Self> {
        if kernels.is_empty() {
            return arg_err("operator needs at least the order-0 term");
        }
        if stride == 0 {
            return Err(VolterraError::InvalidGeometry("stride must be positive".into()));
        }
        if footprint.len() != signal_dim || footprint.contains(&0) {
            return shape_err("footprint must have one positive extent per signal axis");
        }
        for (n, h) in kernels.iter().enumerate().skip(1) {
            if h.rank() != n * signal_dim {
                return shape_err(format!("order-{n} kernel has rank {}", h.rank()));
            }
            for (d, z) in kernel_footprint(h, signal_dim)?.into_iter().enumerate() {
                if z > footprint[d] {
                    return shape_err(format!("order-{n} kernel exceeds footprint {footprint:?}"));
                }
            }
        }
        Ok(VolterraOperator {
            kernels,
            signal_dim,
            footprint,
            stride,
            pad,
        })
    }

    /// 1-D operator `x -> h * x` with bias `b`.
    pub fn linear(h: Tensor, bias: f64, stride: usize, pad: usize) -> Result<Self> {
        if h.rank() != 1 {
            return shape_err("linear kernel must be 1-D");
        }
        Self::new(vec![Tensor::scalar(bias), h], 1, stride, pad)
    }

    /// Identity on `m`-dimensional signals.
    pub fn identity(signal_dim: usize) -> Self {
        let shape = vec![1; signal_dim];
        VolterraOperator {
            kernels: vec![Tensor::scalar(0.0), Tensor::full(&shape, 1.0)],
            signal_dim,
            footprint: shape,
            stride: 1,
            pad: 0,
        }
    }

    pub fn kernels(&self) -> &[Tensor] {
        &self.kernels
    }

    pub fn kernel(&self, n: usize) -> Option<&Tensor> {
        self.kernels.get(n)
    }

    pub fn into_kernels(self) -> Vec<Tensor> {
        self.kernels
    }

    /// Highest order present.
    pub fn order(&self) -> usize {
        self.kernels.len() - 1
    }

    pub fn signal_dim(&self) -> usize {
        self.signal_dim
    }

    pub fn footprint(&self) -> &[usize] {
        &self.footprint
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn pad(&self) -> usize {
        self.pad
    }

    /// Layer geometry of a 1-D operator.
    pub fn geometry(&self) -> Option<Geometry> {
        (self.signal_dim == 1).then(|| Geometry {
            kernel: self.footprint[0],
            stride: self.stride,
            pad: self.pad,
        })
    }

    /// Scalar order-0 term, if `H_0` is a scalar.
    pub fn bias(&self) -> Option<f64> {
        (self.kernels[0].rank() == 0).then(|| self.kernels[0].data()[0])
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        if input.len() != self.signal_dim {
            return shape_err(format!("input rank {} vs operator signal rank {}", input.len(), self.signal_dim));
        }
        (0..self.signal_dim)
            .map(|d| output_extent(input[d], self.footprint[d], self.stride, self.pad))
            .collect()
    }

    /// Drop orders above `n`.
    pub fn truncated(&self, n: usize) -> VolterraOperator {
        let mut v = self.clone();
        v.kernels.truncate(n + 1);
        v
    }

    /// Kernel-wise scaling.
    pub fn scale(&self, a: f64) -> VolterraOperator {
        let mut v = self.clone();
        v.kernels = v.kernels.iter().map(|k| k.scale(a)).collect();
        v
    }

    /// Kernel-wise sum of two operators with the same geometry. Kernels of a
    /// given order are zero-extended at the tail to a common shape.
    pub fn add(&self, other: &VolterraOperator) -> Result<VolterraOperator> {
        if self.signal_dim != other.signal_dim
            || self.stride != other.stride
            || self.pad != other.pad
            || self.footprint != other.footprint
        {
            return shape_err("operators with different geometry cannot be added");
        }
        let len = self.kernels.len().max(other.kernels.len());
        let mut kernels = Vec::with_capacity(len);
        for n in 0..len {
            let k = match (self.kernels.get(n), other.kernels.get(n)) {
                (Some(a), Some(b)) => add_tail_aligned(a, b)?,
                (Some(a), None) => a.clone(),
                (None, Some(b)) => b.clone(),
                (None, None) => unreachable!(),
            };
            kernels.push(k);
        }
        Self::with_footprint(kernels, self.signal_dim, self.footprint.clone(), self.stride, self.pad)
    }
}

/// Sum of two tensors of the same rank after zero-extending each axis at
/// the tail to the larger extent. Rank-0 and single-element operands add as
/// scalars.
pub fn add_tail_aligned(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() == b.shape() {
        return a.add(b);
    }
    if a.rank() == 0 && b.len() == 1 {
        return Ok(b.map(|v| v + a.data()[0]));
    }
    if b.rank() == 0 && a.len() == 1 {
        return Ok(a.map(|v| v + b.data()[0]));
    }
    if a.rank() != b.rank() {
        return shape_err(format!("{:?} vs {:?}", a.shape(), b.shape()));
    }
    let shape: Vec<usize> = a.shape().iter().zip(b.shape()).map(|(x, y)| *x.max(y)).collect();
    let extend = |t: &Tensor| {
        let after: Vec<usize> = shape.iter().zip(t.shape()).map(|(s, e)| s - e).collect();
        t.pad(&vec![0; t.rank()], &after)
    };
    extend(a)?.add(&extend(b)?)
}

/// Evaluate a Volterra operator on a signal.
pub fn volterra_apply(v: &VolterraOperator, x: &Tensor) -> Result<Tensor> {
    let out_shape = v.output_shape(x.shape())?;
    let mut y = match v.kernels[0].rank() {
        0 => Tensor::full(&out_shape, v.kernels[0].data()[0]),
        _ if v.kernels[0].shape() == out_shape.as_slice() => v.kernels[0].clone(),
        _ => {
            return shape_err(format!(
                "order-0 term {:?} is neither scalar nor output shaped {out_shape:?}",
                v.kernels[0].shape()
            ))
        }
    };
    for (n, h) in v.kernels.iter().enumerate().skip(1) {
        if h.is_all_zero() {
            continue;
        }
        let sigs = vec![x; n];
        let term = conv_with_footprint(h, &sigs, &v.footprint, v.stride, v.pad)?;
        y.axpy(1.0, &term)?;
    }
    Ok(y)
}

/// Per-order outputs `H_n * x^n` for `n = 1..=order` (index 0 holds `H_0`
/// broadcast).
pub fn volterra_terms(v: &VolterraOperator, x: &Tensor) -> Result<Vec<Tensor>> {
    let out_shape = v.output_shape(x.shape())?;
    let mut terms = Vec::with_capacity(v.kernels.len());
    terms.push(match v.kernels[0].rank() {
        0 => Tensor::full(&out_shape, v.kernels[0].data()[0]),
        _ => v.kernels[0].clone(),
    });
    for (n, h) in v.kernels.iter().enumerate().skip(1) {
        let sigs = vec![x; n];
        terms.push(conv_with_footprint(h, &sigs, &v.footprint, v.stride, v.pad)?);
    }
    Ok(terms)
}

/// Index map from an `m`-D domain to 1-D: `t -> sum_k t_k * w_k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlattenMap {
    pub weights: Vec<usize>,
    /// Flattened length of the signal the map was built for.
    pub output_length: usize,
}

impl FlattenMap {
    /// Flattened length of a tensor with the given shape.
    pub fn flat_len(&self, shape: &[usize]) -> Result<usize> {
        if shape.len() != self.weights.len() {
            return shape_err("shape rank differs from flatten map rank");
        }
        shape
            .iter()
            .zip(&self.weights)
            .try_fold(1usize, |acc, (&e, &w)| (e - 1).checked_mul(w).and_then(|v| v.checked_add(acc)))
            .ok_or_else(|| VolterraError::CapExceeded("flattened length overflows".into()))
    }
}

/// Weights that make convolution commute with flattening for a signal of
/// `signal_shape` and kernels no larger than `kernel_shape`:
/// `w_m = 1`, `w_k = w_{k+1} * (L_{k+1} + z_{k+1} - 1)`.
pub fn choose_flatten_weights(signal_shape: &[usize], kernel_shape: &[usize]) -> Result<FlattenMap> {
    let m = signal_shape.len();
    if m == 0 || kernel_shape.len() != m {
        return shape_err("signal and kernel shapes must have the same positive rank");
    }
    if signal_shape.iter().chain(kernel_shape).any(|&e| e == 0) {
        return shape_err("zero extent");
    }
    let mut w = vec![1usize; m];
    for k in (0..m - 1).rev() {
        w[k] = (signal_shape[k + 1] + kernel_shape[k + 1] - 1)
            .checked_mul(w[k + 1])
            .ok_or_else(|| VolterraError::CapExceeded("flatten weights overflow".into()))?;
    }
    let mut map = FlattenMap {
        weights: w,
        output_length: 0,
    };
    map.output_length = map.flat_len(signal_shape)?;
    Ok(map)
}

/// Scatter a tensor into a 1-D vector through `map`.
pub fn flatten(t: &Tensor, map: &FlattenMap) -> Result<Tensor> {
    let len = map.flat_len(t.shape())?;
    let mut out = vec![0.0; len];
    let mut used = vec![false; len];
    let mut k = 0;
    let mut collision = None;
    for_each_index(t.shape(), |idx| {
        let off: usize = idx.iter().zip(&map.weights).map(|(i, w)| i * w).sum();
        if std::mem::replace(&mut used[off], true) && collision.is_none() {
            collision = Some(off);
        }
        out[off] = t.data()[k];
        k += 1;
    });
    if let Some(off) = collision {
        return Err(VolterraError::IndexCollision(off));
    }
    Ok(Tensor::vector(out))
}

/// Gather an `shape`-shaped tensor back from a flattened vector.
pub fn unflatten(v: &Tensor, map: &FlattenMap, shape: &[usize]) -> Result<Tensor> {
    if v.rank() != 1 {
        return shape_err("flattened tensor must be 1-D");
    }
    let need = map.flat_len(shape)?;
    if need > v.len() {
        return shape_err(format!("shape {shape:?} needs {need} flattened entries, have {}", v.len()));
    }
    Ok(Tensor::from_fn(shape, |idx| {
        let off: usize = idx.iter().zip(&map.weights).map(|(i, w)| i * w).sum();
        v.data()[off]
    }))
}
