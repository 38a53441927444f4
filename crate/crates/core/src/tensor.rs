//! Dense row-major tensors of `f64` and the kernel constructors built on them.
//!
//! A tensor of rank 0 holds a single scalar. Every extent is at least one.
//! The binary `VTEN` format stores a tensor as the magic bytes `VTEN`, a
//! little-endian `u32` version (1), a `u32` rank, `rank` little-endian `u64`
//! extents and then the row-major `f64` values.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{arg_err, shape_err, Result, VolterraError};

const MAGIC: &[u8; 4] = b"VTEN";
const VERSION: u32 = 1;
/// Largest group count accepted by [`symmetrize`].
pub const MAX_SYMMETRIZE_ORDER: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Build a tensor from a shape and row-major data.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return shape_err(format!("zero extent in shape {shape:?}"));
        }
        let n = checked_len(&shape)?;
        if n != data.len() {
            return shape_err(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            ));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        assert!(shape.iter().all(|&e| e > 0), "zero extent in {shape:?}");
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    /// Rank-0 tensor.
    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    /// Rank-1 tensor; panics on an empty vector.
    pub fn vector(values: Vec<f64>) -> Self {
        assert!(!values.is_empty(), "empty vector");
        Tensor {
            shape: vec![values.len()],
            data: values,
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let mut t = Self::zeros(shape);
        let mut k = 0;
        for_each_index(shape, |idx| {
            t.data[k] = f(idx);
            k += 1;
        });
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Value of a rank-0 or single-element tensor.
    pub fn item(&self) -> Option<f64> {
        (self.data.len() == 1).then(|| self.data[0])
    }

    pub fn strides(&self) -> Vec<usize> {
        strides_of(&self.shape)
    }

    pub fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        let mut off = 0;
        for (i, (&x, &e)) in idx.iter().zip(&self.shape).enumerate() {
            debug_assert!(x < e, "index {x} out of range on axis {i}");
            off = off * e + x;
        }
        off
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, a: f64) -> Tensor {
        self.map(|v| a * v)
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn zip_with(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.shape != other.shape {
            return shape_err(format!("{:?} vs {:?}", self.shape, other.shape));
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// `self += a * other`, shapes must agree.
    pub(crate) fn axpy(&mut self, a: f64, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return shape_err(format!("{:?} vs {:?}", self.shape, other.shape));
        }
        for (s, &o) in self.data.iter_mut().zip(&other.data) {
            *s += a * o;
        }
        Ok(())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn norm_l1(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).sum()
    }

    pub fn norm_l2(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Entry-wise p-norm for `p >= 1`.
    pub fn norm_p(&self, p: f64) -> f64 {
        if p == 1.0 {
            return self.norm_l1();
        }
        if p == 2.0 {
            return self.norm_l2();
        }
        let m = self.max_abs();
        if m == 0.0 {
            return 0.0;
        }
        let s: f64 = self.data.iter().map(|v| (v.abs() / m).powf(p)).sum();
        m * s.powf(1.0 / p)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest absolute entry-wise difference; infinite on shape mismatch.
    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        if self.shape != other.shape {
            return f64::INFINITY;
        }
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn is_all_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        Tensor::new(shape.to_vec(), self.data.clone())
    }

    /// Reorder axes: axis `i` of the result is axis `axes[i]` of `self`.
    pub fn permute(&self, axes: &[usize]) -> Result<Tensor> {
        let r = self.rank();
        let mut seen = vec![false; r];
        if axes.len() != r || axes.iter().any(|&a| a >= r || std::mem::replace(&mut seen[a], true)) {
            return arg_err(format!("{axes:?} is not a permutation of 0..{r}"));
        }
        let shape: Vec<usize> = axes.iter().map(|&a| self.shape[a]).collect();
        let src = self.strides();
        let step: Vec<usize> = axes.iter().map(|&a| src[a]).collect();
        let mut data = Vec::with_capacity(self.len());
        for_each_index(&shape, |idx| {
            let off: usize = idx.iter().zip(&step).map(|(i, s)| i * s).sum();
            data.push(self.data[off]);
        });
        Ok(Tensor { shape, data })
    }

    /// Sum over the listed axes, removing them.
    pub fn sum_axes(&self, axes: &[usize]) -> Result<Tensor> {
        let r = self.rank();
        if axes.iter().any(|&a| a >= r) {
            return arg_err(format!("axes {axes:?} out of range for rank {r}"));
        }
        let keep: Vec<usize> = (0..r).filter(|a| !axes.contains(a)).collect();
        let shape: Vec<usize> = keep.iter().map(|&a| self.shape[a]).collect();
        let mut out = Tensor::zeros(&shape);
        let ostr = strides_of(&shape);
        let mut k = 0;
        for_each_index(&self.shape, |idx| {
            let off: usize = keep.iter().zip(&ostr).map(|(&a, s)| idx[a] * s).sum();
            out.data[off] += self.data[k];
            k += 1;
        });
        Ok(out)
    }

    /// Sub-block starting at `start` with the given extents.
    pub fn slice(&self, start: &[usize], extents: &[usize]) -> Result<Tensor> {
        if start.len() != self.rank() || extents.len() != self.rank() {
            return shape_err("slice rank does not match tensor rank");
        }
        for a in 0..self.rank() {
            if extents[a] == 0 || start[a] + extents[a] > self.shape[a] {
                return shape_err(format!(
                    "slice {start:?}+{extents:?} outside {:?}",
                    self.shape
                ));
            }
        }
        let mut full = vec![0; self.rank()];
        Ok(Tensor::from_fn(extents, |idx| {
            for a in 0..idx.len() {
                full[a] = idx[a] + start[a];
            }
            self.get(&full)
        }))
    }

    /// Zero-pad every axis by `before[a]` leading and `after[a]` trailing entries.
    pub fn pad(&self, before: &[usize], after: &[usize]) -> Result<Tensor> {
        if before.len() != self.rank() || after.len() != self.rank() {
            return shape_err("padding rank does not match tensor rank");
        }
        let shape: Vec<usize> = (0..self.rank())
            .map(|a| self.shape[a] + before[a] + after[a])
            .collect();
        let mut out = Tensor::zeros(&shape);
        let ostr = strides_of(&shape);
        let mut k = 0;
        for_each_index(&self.shape, |idx| {
            let off: usize = (0..idx.len()).map(|a| (idx[a] + before[a]) * ostr[a]).sum();
            out.data[off] = self.data[k];
            k += 1;
        });
        Ok(out)
    }

    /// Reverse every axis.
    pub fn flip(&self) -> Tensor {
        let mut data = self.data.clone();
        data.reverse();
        Tensor {
            shape: self.shape.clone(),
            data,
        }
    }

    /// Whether the tensor is invariant under any permutation of its
    /// `group`-sized axis blocks, up to `tol`.
    pub fn is_symmetric(&self, group: usize, tol: f64) -> bool {
        if group == 0 || !self.rank().is_multiple_of(group) {
            return false;
        }
        let n = self.rank() / group;
        if n < 2 {
            return true;
        }
        let g0 = &self.shape[..group];
        if (1..n).any(|i| &self.shape[i * group..(i + 1) * group] != g0) {
            return false;
        }
        // Adjacent transpositions generate the symmetric group.
        (0..n - 1).all(|i| {
            let mut order: Vec<usize> = (0..n).collect();
            order.swap(i, i + 1);
            let axes = group_axes(&order, group);
            match self.permute(&axes) {
                Ok(p) => p.max_abs_diff(self) <= tol,
                Err(_) => false,
            }
        })
    }

    /// Write in `VTEN` format.
    pub fn write_vten<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.rank() as u32).to_le_bytes())?;
        for &e in &self.shape {
            w.write_all(&(e as u64).to_le_bytes())?;
        }
        for &v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    /// Read a `VTEN` stream.
    pub fn read_vten<R: Read>(mut r: R) -> Result<Tensor> {
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic, "magic")?;
        if &magic != MAGIC {
            return Err(VolterraError::Format("bad magic".into()));
        }
        let version = read_u32(&mut r, "version")?;
        if version != VERSION {
            return Err(VolterraError::Format(format!("unsupported version {version}")));
        }
        let rank = read_u32(&mut r, "rank")? as usize;
        let mut shape = Vec::with_capacity(rank.min(64));
        for _ in 0..rank {
            let mut b = [0u8; 8];
            read_exact(&mut r, &mut b, "extent")?;
            let e = usize::try_from(u64::from_le_bytes(b))
                .map_err(|_| VolterraError::Format("extent does not fit in memory".into()))?;
            if e == 0 {
                return Err(VolterraError::Format("zero extent".into()));
            }
            shape.push(e);
        }
        let n = checked_len(&shape).map_err(|_| VolterraError::Format("extent product overflows".into()))?;
        let mut data = Vec::with_capacity(n.min(1 << 24));
        for _ in 0..n {
            let mut b = [0u8; 8];
            read_exact(&mut r, &mut b, "data")?;
            data.push(f64::from_le_bytes(b));
        }
        let mut extra = [0u8; 1];
        if r.read(&mut extra)? != 0 {
            return Err(VolterraError::Format("trailing bytes".into()));
        }
        Tensor::new(shape, data)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_vten(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Tensor> {
        let f = std::fs::File::open(path)?;
        Tensor::read_vten(std::io::BufReader::new(f))
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => VolterraError::Format(format!("truncated {what}")),
        _ => VolterraError::Io(e),
    })
}

fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

fn checked_len(shape: &[usize]) -> Result<usize> {
    shape
        .iter()
        .try_fold(1usize, |acc, &e| acc.checked_mul(e))
        .ok_or_else(|| VolterraError::CapExceeded(format!("shape {shape:?} overflows")))
}

pub(crate) fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for a in (0..shape.len().saturating_sub(1)).rev() {
        s[a] = s[a + 1] * shape[a + 1];
    }
    s
}

/// Visit every multi-index of `shape` in row-major order.
pub fn for_each_index(shape: &[usize], mut f: impl FnMut(&[usize])) {
    if shape.contains(&0) {
        return;
    }
    let mut idx = vec![0; shape.len()];
    loop {
        f(&idx);
        let mut a = shape.len();
        loop {
            if a == 0 {
                return;
            }
            a -= 1;
            idx[a] += 1;
            if idx[a] < shape[a] {
                break;
            }
            idx[a] = 0;
        }
    }
}

/// Axis list that moves axis block `order[i]` to block position `i`.
fn group_axes(order: &[usize], group: usize) -> Vec<usize> {
    order
        .iter()
        .flat_map(|&g| (g * group)..(g * group + group))
        .collect()
}

/// All permutations of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..n).collect();
    loop {
        out.push(cur.clone());
        // Next lexicographic permutation.
        let Some(i) = (0..n.saturating_sub(1)).rev().find(|&i| cur[i] < cur[i + 1]) else {
            return out;
        };
        let j = (i + 1..n).rev().find(|&j| cur[j] > cur[i]).expect("successor exists");
        cur.swap(i, j);
        cur[i + 1..].reverse();
    }
}

/// Discrete delta: one at `origin` (or at the centre when every extent is odd).
pub fn dirac(shape: &[usize], origin: Option<&[usize]>) -> Result<Tensor> {
    let center: Vec<usize> = match origin {
        Some(o) => {
            if o.len() != shape.len() || o.iter().zip(shape).any(|(i, e)| i >= e) {
                return arg_err(format!("origin {o:?} outside shape {shape:?}"));
            }
            o.to_vec()
        }
        None => {
            if shape.iter().any(|e| e % 2 == 0) {
                return arg_err(format!("shape {shape:?} has an even extent and no origin"));
            }
            shape.iter().map(|e| e / 2).collect()
        }
    };
    let mut t = Tensor::new(shape.to_vec(), vec![0.0; checked_len(shape)?])?;
    let off = t.offset(&center);
    t.data[off] = 1.0;
    Ok(t)
}

/// Order-`n` kernel that is `g` on the diagonal (all `n` index blocks equal)
/// and zero elsewhere. `g` may have any rank `m`; the result has rank `n*m`.
pub fn diag_embed(n: usize, g: &Tensor) -> Result<Tensor> {
    if n == 0 {
        return arg_err("diagonal embedding needs n >= 1");
    }
    let m = g.rank();
    let shape: Vec<usize> = (0..n).flat_map(|_| g.shape().iter().copied()).collect();
    let mut out = Tensor::new(shape.clone(), vec![0.0; checked_len(&shape)?])?;
    let ostr = strides_of(&shape);
    // Diagonal stride for a block index: sum of the strides of its n copies.
    let dstr: Vec<usize> = (0..m)
        .map(|d| (0..n).map(|i| ostr[i * m + d]).sum())
        .collect();
    let mut k = 0;
    for_each_index(g.shape(), |idx| {
        let off: usize = idx.iter().zip(&dstr).map(|(i, s)| i * s).sum();
        out.data[off] = g.data[k];
        k += 1;
    });
    Ok(out)
}

/// Average over all permutations of the `group`-sized axis blocks.
///
/// The order-`n` convolution of a symmetrized kernel with `x^n` equals that of
/// the original kernel.
pub fn symmetrize(t: &Tensor, group: usize) -> Result<Tensor> {
    if group == 0 || !t.rank().is_multiple_of(group) {
        return arg_err(format!("rank {} is not a multiple of {group}", t.rank()));
    }
    let n = t.rank() / group;
    if n > MAX_SYMMETRIZE_ORDER {
        return Err(VolterraError::CapExceeded(format!(
            "symmetrization of order {n} exceeds {MAX_SYMMETRIZE_ORDER}"
        )));
    }
    if n < 2 {
        return Ok(t.clone());
    }
    let g0 = &t.shape()[..group];
    if (1..n).any(|i| &t.shape()[i * group..(i + 1) * group] != g0) {
        return shape_err(format!("blocks of {:?} are not all equal", t.shape()));
    }
    let perms = permutations(n);
    let mut acc = Tensor::zeros(t.shape());
    for p in &perms {
        acc.axpy(1.0, &t.permute(&group_axes(p, group))?)?;
    }
    Ok(acc.scale(1.0 / perms.len() as f64))
}

/// Mode-`k` unfolding: rows are indexed by axis `k`, columns by the remaining
/// axes in their original order.
pub fn matricize(t: &Tensor, k: usize) -> Result<Tensor> {
    if k >= t.rank() {
        return arg_err(format!("mode {k} out of range for rank {}", t.rank()));
    }
    let mut axes = vec![k];
    axes.extend((0..t.rank()).filter(|&a| a != k));
    let p = t.permute(&axes)?;
    let rows = t.shape()[k];
    let cols = t.len() / rows;
    p.reshape(&[rows, cols])
}

/// Mode-`k` unfolding stored column by column: returns `rows` vectors, each
/// holding one slice `t[.., i, ..]` flattened in row-major order. This is the
/// transpose of [`matricize`] in a layout suited to column-wise QR.
pub fn mode_slices(t: &Tensor, k: usize) -> Result<Vec<Vec<f64>>> {
    if k >= t.rank() {
        return arg_err(format!("mode {k} out of range for rank {}", t.rank()));
    }
    let e = t.shape()[k];
    let outer: usize = t.shape()[..k].iter().product();
    let inner: usize = t.shape()[k + 1..].iter().product();
    let mut cols = vec![Vec::with_capacity(outer * inner); e];
    for o in 0..outer {
        for (i, col) in cols.iter_mut().enumerate() {
            let base = (o * e + i) * inner;
            col.extend_from_slice(&t.data[base..base + inner]);
        }
    }
    Ok(cols)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constructors_validate_shapes() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(vec![2, 0], vec![]).is_err());
        let s = Tensor::scalar(2.5);
        assert_eq!(s.rank(), 0);
        assert_eq!(s.item(), Some(2.5));
    }

    #[test]
    fn dirac_centre_and_origin() {
        assert_eq!(dirac(&[1], None).unwrap().data(), &[1.0]);
        assert_eq!(dirac(&[3], None).unwrap().data(), &[0.0, 1.0, 0.0]);
        assert!(dirac(&[4], None).is_err());
        let d = dirac(&[4, 2], Some(&[3, 0])).unwrap();
        assert_eq!(d.get(&[3, 0]), 1.0);
        assert_eq!(d.sum(), 1.0);
    }

    #[test]
    fn diag_embed_places_values_on_diagonal() {
        let g = Tensor::vector(vec![1.0, 2.0, 3.0]);
        let d = diag_embed(2, &g).unwrap();
        assert_eq!(d.shape(), &[3, 3]);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { g.data()[i] } else { 0.0 };
                assert_eq!(d.get(&[i, j]), want);
            }
        }
        let d3 = diag_embed(3, &g).unwrap();
        assert_eq!(d3.get(&[2, 2, 2]), 3.0);
        assert_eq!(d3.sum(), 6.0);
    }

    #[test]
    fn diag_embed_of_two_dimensional_kernel() {
        let g = Tensor::from_fn(&[2, 3], |i| (i[0] * 3 + i[1] + 1) as f64);
        let d = diag_embed(2, &g).unwrap();
        assert_eq!(d.shape(), &[2, 3, 2, 3]);
        assert_eq!(d.get(&[1, 2, 1, 2]), 6.0);
        assert_eq!(d.get(&[1, 2, 0, 2]), 0.0);
        assert_eq!(d.sum(), g.sum());
    }

    #[test]
    fn permute_and_sum_axes() {
        let t = Tensor::from_fn(&[2, 3, 4], |i| (100 * i[0] + 10 * i[1] + i[2]) as f64);
        let p = t.permute(&[2, 0, 1]).unwrap();
        assert_eq!(p.shape(), &[4, 2, 3]);
        assert_eq!(p.get(&[3, 1, 2]), 123.0);
        let s = t.sum_axes(&[1]).unwrap();
        assert_eq!(s.shape(), &[2, 4]);
        assert_eq!(s.get(&[1, 2]), 3.0 * 102.0 + 30.0);
        assert!(t.permute(&[0, 0, 1]).is_err());
    }

    #[test]
    fn symmetrize_is_idempotent_and_symmetric() {
        let t = Tensor::from_fn(&[3, 3, 3], |i| (i[0] + 2 * i[1] * i[1] + 5 * i[2]) as f64);
        let s = symmetrize(&t, 1).unwrap();
        assert!(s.is_symmetric(1, 1e-12));
        assert!(symmetrize(&s, 1).unwrap().max_abs_diff(&s) < 1e-12);
        assert!((s.sum() - t.sum()).abs() < 1e-9);
        assert!(!t.is_symmetric(1, 1e-12));
    }

    #[test]
    fn matricize_rows_are_mode_fibres() {
        let t = Tensor::from_fn(&[2, 3, 4], |i| (100 * i[0] + 10 * i[1] + i[2]) as f64);
        let m = matricize(&t, 1).unwrap();
        assert_eq!(m.shape(), &[3, 8]);
        assert_eq!(m.get(&[2, 5]), 100.0 + 20.0 + 1.0);
        let cols = mode_slices(&t, 1).unwrap();
        for (r, col) in cols.iter().enumerate() {
            assert_eq!(col.as_slice(), &m.data()[r * 8..(r + 1) * 8]);
        }
    }

    #[test]
    fn pad_slice_roundtrip() {
        let t = Tensor::from_fn(&[2, 3], |i| (i[0] * 3 + i[1]) as f64);
        let p = t.pad(&[1, 0], &[2, 3]).unwrap();
        assert_eq!(p.shape(), &[5, 6]);
        assert_eq!(p.slice(&[1, 0], &[2, 3]).unwrap(), t);
        assert_eq!(p.sum(), t.sum());
    }

    #[test]
    fn norms() {
        let t = Tensor::vector(vec![3.0, -4.0]);
        assert_eq!(t.norm_l1(), 7.0);
        assert_eq!(t.norm_l2(), 5.0);
        assert!((t.norm_p(4.0) - (81.0f64 + 256.0).powf(0.25)).abs() < 1e-12);
        assert_eq!(t.max_abs(), 4.0);
    }

    #[test]
    fn vten_roundtrip_and_rejects_garbage() {
        let t = Tensor::from_fn(&[2, 1, 3], |i| i[0] as f64 - 0.5 * i[2] as f64);
        let mut buf = Vec::new();
        t.write_vten(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"VTEN");
        assert_eq!(buf.len(), 4 + 4 + 4 + 3 * 8 + 6 * 8);
        assert_eq!(Tensor::read_vten(buf.as_slice()).unwrap(), t);
        assert!(Tensor::read_vten(&buf[..buf.len() - 1]).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(Tensor::read_vten(bad.as_slice()).is_err());
        let mut extra = buf.clone();
        extra.push(0);
        assert!(Tensor::read_vten(extra.as_slice()).is_err());
        let s = Tensor::scalar(1.5);
        let mut b2 = Vec::new();
        s.write_vten(&mut b2).unwrap();
        assert_eq!(Tensor::read_vten(b2.as_slice()).unwrap(), s);
    }

    #[test]
    fn permutation_listing() {
        let p = permutations(3);
        assert_eq!(p.len(), 6);
        assert_eq!(p[0], vec![0, 1, 2]);
        assert_eq!(p[5], vec![2, 1, 0]);
        assert_eq!(permutations(0), vec![Vec::<usize>::new()]);
    }
}
