//! Least-squares order-zero and order-one proxy kernels of a black box.
//!
//! The model `w * x + b` is linear in `(w, b)`, so the best fit over sampled
//! inputs solves the normal equations exactly. Inputs are Gaussian vectors
//! scaled to unit L2 norm.

use serde::Serialize;

use crate::conv::{output_extent, volterra_apply, Geometry, VolterraOperator};
use crate::error::{arg_err, shape_err, Result};
use crate::exec;
use crate::linalg::lstsq;
use crate::netconv::NetworkSpec;
use crate::rng::{stream, unit_gaussian};
use crate::tensor::Tensor;

/// Relative singular-value cut-off for the normal-equation solve.
pub const RCOND: f64 = 1e-12;
/// Stopping rule of the iterative solver: relative change in MSE.
pub const ITERATIVE_TOL: f64 = 1e-9;

/// A function known only through input/output pairs.
pub trait BlackBoxOracle: Sync {
    /// Length of the 1-D input signal.
    fn input_len(&self) -> usize;
    /// Evaluate on one input. Must be deterministic.
    fn eval(&self, x: &Tensor) -> Result<Tensor>;
    /// Whether calls may run concurrently.
    fn concurrent(&self) -> bool {
        true
    }
}

/// A network evaluated directly with exact activations.
pub struct NetworkOracle<'a> {
    pub net: &'a NetworkSpec,
    pub input_len: usize,
}

impl BlackBoxOracle for NetworkOracle<'_> {
    fn input_len(&self) -> usize {
        self.input_len
    }

    fn eval(&self, x: &Tensor) -> Result<Tensor> {
        self.net.forward_single(x)
    }
}

/// A Volterra operator used as a black box.
pub struct OperatorOracle<'a> {
    pub op: &'a VolterraOperator,
    pub input_len: usize,
}

impl BlackBoxOracle for OperatorOracle<'_> {
    fn input_len(&self) -> usize {
        self.input_len
    }

    fn eval(&self, x: &Tensor) -> Result<Tensor> {
        volterra_apply(self.op, x)
    }
}

/// Solver for the normal equations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FitMethod {
    /// SVD-based minimum-norm solve.
    #[default]
    Closed,
    /// Conjugate gradients, stopping when the relative MSE change falls
    /// below [`ITERATIVE_TOL`].
    Iterative { max_iters: usize },
}

#[derive(Debug, Clone, Serialize)]
pub struct HackingFit {
    pub w: Vec<f64>,
    pub b: f64,
    pub residual_mse: f64,
    pub samples_used: usize,
    /// Number of regression rows (samples times output positions).
    pub rows: usize,
    /// Set when the design matrix is rank deficient and the minimum-norm
    /// solution was returned.
    pub rank_deficient: bool,
    pub geometry: Geometry,
}

impl HackingFit {
    pub fn kernel(&self) -> Tensor {
        Tensor::vector(self.w.clone())
    }
}

/// Errors of a fit against reference kernels.
#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct FitReport {
    pub w_l2_error: f64,
    pub b_abs_error: f64,
    pub residual_mse: f64,
}

/// Default sample count: `8 * (k + 1)`.
pub fn default_samples(k: usize) -> usize {
    8 * (k + 1)
}

/// `count` unit-norm Gaussian inputs of length `len`; sample `i` depends only
/// on `(seed, i)`.
pub fn sample_inputs(count: usize, len: usize, seed: u64) -> Result<Vec<Tensor>> {
    if len == 0 {
        return arg_err("input length must be positive");
    }
    Ok(exec::map_indices(count, |i| unit_gaussian(&mut stream(seed, i as u64), &[len])))
}

struct Normal {
    ata: Vec<f64>,
    aty: Vec<f64>,
    yty: f64,
    rows: usize,
}

fn window(x: &[f64], geo: &Geometry, o: usize, row: &mut [f64]) {
    let k = geo.kernel;
    let t = (geo.stride * o + k - 1) as isize - geo.pad as isize;
    for (tau, r) in row[..k].iter_mut().enumerate() {
        let p = t - tau as isize;
        *r = if p >= 0 && (p as usize) < x.len() { x[p as usize] } else { 0.0 };
    }
    row[k] = 1.0;
}

fn accumulate(inputs: &[Tensor], outputs: &[Tensor], geo: &Geometry) -> Normal {
    let d = geo.kernel + 1;
    let mut ata = vec![0.0; d * d];
    let mut aty = vec![0.0; d];
    let mut yty = 0.0;
    let mut rows = 0;
    let mut row = vec![0.0; d];
    for (x, y) in inputs.iter().zip(outputs) {
        for (o, &yo) in y.data().iter().enumerate() {
            window(x.data(), geo, o, &mut row);
            for i in 0..d {
                let ri = row[i];
                if ri == 0.0 {
                    continue;
                }
                aty[i] += ri * yo;
                for j in i..d {
                    ata[i * d + j] += ri * row[j];
                }
            }
            yty += yo * yo;
            rows += 1;
        }
    }
    for i in 0..d {
        for j in 0..i {
            ata[i * d + j] = ata[j * d + i];
        }
    }
    Normal { ata, aty, yty, rows }
}

impl Normal {
    /// Mean squared residual of `theta = (w, b)` from the quadratic form.
    fn mse(&self, theta: &[f64]) -> f64 {
        let d = theta.len();
        let mut quad = 0.0;
        for i in 0..d {
            let mut s = 0.0;
            for j in 0..d {
                s += self.ata[i * d + j] * theta[j];
            }
            quad += theta[i] * s;
        }
        let lin: f64 = theta.iter().zip(&self.aty).map(|(a, b)| a * b).sum();
        ((quad - 2.0 * lin + self.yty) / self.rows as f64).max(0.0)
    }

    fn solve_closed(&self) -> Result<(Vec<f64>, bool)> {
        let d = self.aty.len();
        let m = Tensor::new(vec![d, d], self.ata.clone())?;
        let (theta, rank) = lstsq(&m, &self.aty, RCOND)?;
        Ok((theta, rank < d))
    }

    fn solve_cg(&self, max_iters: usize) -> (Vec<f64>, bool) {
        let d = self.aty.len();
        let mul = |v: &[f64]| -> Vec<f64> {
            (0..d).map(|i| (0..d).map(|j| self.ata[i * d + j] * v[j]).sum()).collect()
        };
        let mut x = vec![0.0; d];
        let mut r = self.aty.clone();
        let mut p = r.clone();
        let mut rr: f64 = r.iter().map(|v| v * v).sum();
        let mut prev = self.mse(&x);
        let mut converged = false;
        for _ in 0..max_iters {
            if rr == 0.0 {
                converged = true;
                break;
            }
            let ap = mul(&p);
            let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
            if pap <= 0.0 {
                break;
            }
            let alpha = rr / pap;
            for i in 0..d {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            let cur = self.mse(&x);
            if (prev - cur).abs() <= ITERATIVE_TOL * prev.max(f64::MIN_POSITIVE) {
                converged = true;
                break;
            }
            prev = cur;
            let rr_new: f64 = r.iter().map(|v| v * v).sum();
            let beta = rr_new / rr;
            rr = rr_new;
            for i in 0..d {
                p[i] = r[i] + beta * p[i];
            }
        }
        (x, !converged)
    }
}

/// Evaluate the oracle on every input, in input order.
fn outputs(oracle: &dyn BlackBoxOracle, inputs: &[Tensor], expect: usize) -> Result<Vec<Tensor>> {
    let ys: Vec<Result<Tensor>> = if oracle.concurrent() {
        exec::map_slice(inputs, |x| oracle.eval(x))
    } else {
        inputs.iter().map(|x| oracle.eval(x)).collect()
    };
    let ys: Vec<Tensor> = ys.into_iter().collect::<Result<_>>()?;
    for y in &ys {
        if y.rank() != 1 || y.len() != expect {
            return shape_err(format!(
                "oracle output shape {:?} does not match geometry output length {expect}",
                y.shape()
            ));
        }
    }
    Ok(ys)
}

/// Fit `w * x + b` to the oracle over `n_samples` unit-norm inputs
/// (default [`default_samples`]).
pub fn fit_order_one(
    oracle: &dyn BlackBoxOracle,
    geometry: Geometry,
    n_samples: Option<usize>,
    seed: u64,
) -> Result<HackingFit> {
    fit_order_one_with(oracle, geometry, n_samples, seed, FitMethod::Closed)
}

/// [`fit_order_one`] with a choice of solver.
pub fn fit_order_one_with(
    oracle: &dyn BlackBoxOracle,
    geometry: Geometry,
    n_samples: Option<usize>,
    seed: u64,
    method: FitMethod,
) -> Result<HackingFit> {
    let geo = Geometry::new(geometry.kernel, geometry.stride, geometry.pad)?;
    let len = oracle.input_len();
    let out_len = output_extent(len, geo.kernel, geo.stride, geo.pad)?;
    let n = n_samples.unwrap_or_else(|| default_samples(geo.kernel));
    if n == 0 {
        return arg_err("need at least one sample");
    }
    let inputs = sample_inputs(n, len, seed)?;
    let ys = outputs(oracle, &inputs, out_len)?;
    let normal = accumulate(&inputs, &ys, &geo);
    let (theta, deficient) = match method {
        FitMethod::Closed => normal.solve_closed()?,
        FitMethod::Iterative { max_iters } => normal.solve_cg(max_iters),
    };
    let residual_mse = normal.mse(&theta);
    let k = geo.kernel;
    Ok(HackingFit {
        w: theta[..k].to_vec(),
        b: theta[k],
        residual_mse,
        samples_used: n,
        rows: normal.rows,
        rank_deficient: deficient,
        geometry: geo,
    })
}

/// Mean squared error of the model `w * x + b` over the same inputs a fit
/// with `seed` and `n_samples` would use.
pub fn model_mse(
    oracle: &dyn BlackBoxOracle,
    geometry: Geometry,
    n_samples: usize,
    seed: u64,
    w: &[f64],
    b: f64,
) -> Result<f64> {
    if w.len() != geometry.kernel {
        return shape_err("kernel length differs from geometry");
    }
    let len = oracle.input_len();
    let out_len = output_extent(len, geometry.kernel, geometry.stride, geometry.pad)?;
    let inputs = sample_inputs(n_samples, len, seed)?;
    let ys = outputs(oracle, &inputs, out_len)?;
    let mut row = vec![0.0; geometry.kernel + 1];
    let mut sum = 0.0;
    let mut rows = 0;
    for (x, y) in inputs.iter().zip(&ys) {
        for (o, &yo) in y.data().iter().enumerate() {
            window(x.data(), &geometry, o, &mut row);
            let pred: f64 = row[..geometry.kernel].iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + b;
            sum += (pred - yo) * (pred - yo);
            rows += 1;
        }
    }
    Ok(sum / rows as f64)
}

/// Compare a fit with reference kernels.
pub fn fit_report(fit: &HackingFit, w_ref: &[f64], b_ref: f64) -> Result<FitReport> {
    if w_ref.len() != fit.w.len() {
        return shape_err(format!("reference length {} vs fit length {}", w_ref.len(), fit.w.len()));
    }
    let w_l2_error = fit.w.iter().zip(w_ref).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    Ok(FitReport {
        w_l2_error,
        b_abs_error: (fit.b - b_ref).abs(),
        residual_mse: fit.residual_mse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Linear {
        w: Tensor,
        b: f64,
        geo: Geometry,
        len: usize,
    }

    impl BlackBoxOracle for Linear {
        fn input_len(&self) -> usize {
            self.len
        }
        fn eval(&self, x: &Tensor) -> Result<Tensor> {
            let y = crate::conv::conv1(&self.w, x, self.geo.stride, self.geo.pad)?;
            Ok(y.map(|v| v + self.b))
        }
    }

    #[test]
    fn recovers_linear_oracle_for_a_grid_of_geometries() {
        for k in [1, 3, 5] {
            for s in [1, 2, 3] {
                for p in [0, 1, 2] {
                    let geo = Geometry::new(k, s, p).unwrap();
                    let w = unit_gaussian(&mut stream(k as u64, s as u64 * 10 + p as u64), &[k]);
                    let oracle = Linear { w: w.clone(), b: 0.3, geo, len: 20 };
                    let fit = fit_order_one(&oracle, geo, None, 5).unwrap();
                    let rep = fit_report(&fit, w.data(), 0.3).unwrap();
                    assert!(rep.w_l2_error < 1e-10 && rep.b_abs_error < 1e-10, "{k} {s} {p}: {rep:?}");
                    assert!(!fit.rank_deficient);
                }
            }
        }
    }

    #[test]
    fn iterative_solver_agrees() {
        let geo = Geometry::new(4, 1, 0).unwrap();
        let w = Tensor::vector(vec![0.5, -1.0, 0.25, 2.0]);
        let oracle = Linear { w: w.clone(), b: -0.1, geo, len: 16 };
        let fit = fit_order_one_with(&oracle, geo, None, 3, FitMethod::Iterative { max_iters: 200 }).unwrap();
        let rep = fit_report(&fit, w.data(), -0.1).unwrap();
        assert!(rep.w_l2_error < 1e-6, "{rep:?}");
    }

    #[test]
    fn samples_are_unit_norm_and_reproducible() {
        let a = sample_inputs(5, 10, 9).unwrap();
        let b = sample_inputs(5, 10, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|x| (x.norm_l2() - 1.0).abs() < 1e-12));
        assert!(sample_inputs(1, 0, 1).is_err());
    }

    #[test]
    fn rank_deficiency_is_flagged() {
        // The first and last taps only ever see padding zeros.
        let geo = Geometry::new(4, 1, 1).unwrap();
        let w = Tensor::vector(vec![0.0, 1.0, -2.0, 0.0]);
        let oracle = Linear { w, b: 0.5, geo, len: 2 };
        let fit = fit_order_one(&oracle, geo, Some(6), 1).unwrap();
        assert!(fit.rank_deficient);
        assert!(fit.residual_mse < 1e-20);
    }
}
