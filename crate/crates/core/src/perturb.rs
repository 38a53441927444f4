//! Perturbation crafting, energy gain, and perturbation bounds.
//!
//! Crafting follows the spectral rule `eps = alpha * F^-1(F(h) - F(x))` with
//! `h` zero-extended to the signal length. The bound of an operator under a
//! perturbation is the smaller of two Young-type sums, one driven by
//! `||H_n||_2` and L1 signal norms, the other by `||H_n||_1` and higher
//! norms. Binomial coefficients are dominated by `(e n / k)^k`, read as 1 at
//! `k = 0`.

use std::f64::consts::{E, PI};
use std::io::Write;

use num_complex::Complex64;
use serde::Serialize;

use crate::conv::{conv1, conv_order_n, conv_with_footprint, volterra_terms, VolterraOperator};
use crate::error::{arg_err, shape_err, Result, VolterraError};
use crate::exec;
use crate::rng::{stream, unit_gaussian};
use crate::tensor::{dirac, Tensor};

/// Largest operator order accepted by the bound routines.
pub const MAX_BOUND_ORDER: usize = 8;

/// Relative rounding allowance when comparing a measured norm with a bound.
/// Several bounds are attained exactly (unit taps, single spikes), where the
/// two sides differ only in the last bits.
pub const BOUND_SLACK: f64 = 1e-12;

/// Relative spread under which an image-mode perturbation counts as constant.
pub const CONSTANT_TOL: f64 = 1e-12;

/// `measured <= bound` up to [`BOUND_SLACK`].
pub fn within_bound(measured: f64, bound: f64) -> bool {
    measured <= bound * (1.0 + BOUND_SLACK)
}

/// Discrete Fourier coefficients of a 1-D signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub coeffs: Vec<Complex64>,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// `sum |c_k|^2`; equals the time-domain energy under the unitary scaling.
    pub fn energy(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn sub(&self, other: &Spectrum) -> Result<Spectrum> {
        if self.len() != other.len() {
            return shape_err(format!("spectrum lengths {} and {}", self.len(), other.len()));
        }
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect();
        Ok(Spectrum { coeffs })
    }
}

fn transform(input: &[Complex64], sign: f64) -> Vec<Complex64> {
    let n = input.len();
    let scale = 1.0 / (n as f64).sqrt();
    exec::map_indices(n, |k| {
        let mut acc = Complex64::new(0.0, 0.0);
        for (t, v) in input.iter().enumerate() {
            // Reduce the phase index first so large products stay exact.
            let phase = sign * 2.0 * PI * ((k * t) % n) as f64 / n as f64;
            acc += v * Complex64::from_polar(1.0, phase);
        }
        acc * scale
    })
}

/// Unitary DFT of a 1-D signal.
pub fn dft(x: &Tensor) -> Result<Spectrum> {
    if x.rank() != 1 || x.is_empty() {
        return shape_err("dft needs a non-empty 1-D signal");
    }
    let input: Vec<Complex64> = x.data().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    Ok(Spectrum { coeffs: transform(&input, -1.0) })
}

/// Inverse unitary DFT, keeping the complex result.
pub fn idft_complex(s: &Spectrum) -> Vec<Complex64> {
    transform(&s.coeffs, 1.0)
}

/// Inverse unitary DFT, real part.
pub fn idft(s: &Spectrum) -> Tensor {
    Tensor::vector(idft_complex(s).iter().map(|c| c.re).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum CraftMode {
    /// `alpha * F^-1(F(h) - F(x))`.
    #[default]
    Raw,
    /// Raw perturbation min-max normalized into `[0, alpha]`.
    Image,
}

impl CraftMode {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "raw" => Ok(CraftMode::Raw),
            "image" => Ok(CraftMode::Image),
            _ => Err(VolterraError::Unknown { kind: "craft mode", name: name.to_string() }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Crafted {
    pub epsilon: Tensor,
    /// Largest imaginary part discarded by the inverse transform.
    pub imag_residue: f64,
    /// Image mode met a constant perturbation and returned zeros.
    pub constant: bool,
}

/// Perturbation that moves the spectrum of `x` towards that of `h`.
pub fn craft_perturbation(h: &Tensor, x: &Tensor, alpha: f64, mode: CraftMode) -> Result<Crafted> {
    if h.rank() != 1 || x.rank() != 1 {
        return shape_err("crafting works on 1-D kernels and signals");
    }
    if h.len() > x.len() {
        return shape_err(format!("kernel length {} exceeds signal length {}", h.len(), x.len()));
    }
    if !alpha.is_finite() {
        return arg_err("alpha must be finite");
    }
    let h_ext = h.pad(&[0], &[x.len() - h.len()])?;
    let diff = dft(&h_ext)?.sub(&dft(x)?)?;
    let raw = idft_complex(&diff);
    let imag_residue = raw.iter().fold(0.0f64, |m, c| m.max(c.im.abs()));
    let eps = Tensor::vector(raw.iter().map(|c| alpha * c.re).collect());
    match mode {
        CraftMode::Raw => Ok(Crafted { epsilon: eps, imag_residue, constant: false }),
        CraftMode::Image => {
            let base: Vec<f64> = raw.iter().map(|c| c.re).collect();
            let lo = base.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = base.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let scale = lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
            if hi - lo <= CONSTANT_TOL * scale {
                return Ok(Crafted { epsilon: Tensor::zeros(&[x.len()]), imag_residue, constant: true });
            }
            let eps = Tensor::vector(base.iter().map(|v| alpha * (v - lo) / (hi - lo)).collect());
            Ok(Crafted { epsilon: eps, imag_residue, constant: false })
        }
    }
}

fn full_conv(h: &Tensor, x: &Tensor) -> Result<Tensor> {
    conv1(h, x, 1, h.len() - 1)
}

/// `||h * (x + eps)||_2 / ||h * x||_2` with full convolutions.
pub fn energy_gain(h: &Tensor, x: &Tensor, eps: &Tensor) -> Result<f64> {
    if h.rank() != 1 || h.is_empty() {
        return shape_err("energy gain needs a non-empty 1-D kernel");
    }
    let den = full_conv(h, x)?.norm_l2();
    if den == 0.0 {
        return Err(VolterraError::Numerical("h * x has zero energy".into()));
    }
    Ok(full_conv(h, &x.add(eps)?)?.norm_l2() / den)
}

/// `(e n / k)^k`, with the `k = 0` value taken as its limit 1.
pub fn binomial_majorant(n: usize, k: usize) -> f64 {
    if k == 0 {
        1.0
    } else {
        (E * n as f64 / k as f64).powi(k as i32)
    }
}

/// `||x||_p^k`, with the empty product 1 at `k = 0`.
fn norm_pow(x: &Tensor, p: f64, k: usize) -> f64 {
    if k == 0 {
        1.0
    } else {
        x.norm_p(p).powi(k as i32)
    }
}

/// The two branch sums bounding `||H_n * (x + y)^n - H_n * x^n||_2`.
pub fn order_bound(h_l1: f64, h_l2: f64, n: usize, x: &Tensor, y: &Tensor) -> (f64, f64) {
    let mut l2_branch = 0.0;
    let mut l1_branch = 0.0;
    for k in 0..n {
        let c = binomial_majorant(n, k);
        l2_branch += c * norm_pow(x, 1.0, k) * norm_pow(y, 1.0, n - k);
        l1_branch += c * norm_pow(x, 2.0 * k as f64, k) * norm_pow(y, 2.0 * (n - k) as f64, n - k);
    }
    (h_l2 * l2_branch, h_l1 * l1_branch)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrderDeviation {
    pub order: usize,
    /// `||H_n * (x + eps)^n - H_n * x^n||_2`.
    pub deviation: f64,
    pub l2_branch: f64,
    pub l1_branch: f64,
}

impl OrderDeviation {
    pub fn bound(&self) -> f64 {
        self.l2_branch.min(self.l1_branch)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerturbReport {
    pub orders: Vec<OrderDeviation>,
    /// `||f(x + eps) - f(x)||_2`.
    pub total_deviation: f64,
    pub total_l2_branch: f64,
    pub total_l1_branch: f64,
}

impl PerturbReport {
    pub fn bound(&self) -> f64 {
        self.total_l2_branch.min(self.total_l1_branch)
    }

    /// Every per-order deviation and the total lie under their bounds.
    pub fn dominated(&self) -> bool {
        within_bound(self.total_deviation, self.bound())
            && self.orders.iter().all(|o| within_bound(o.deviation, o.bound()))
    }
}

/// Measure the deviation of `v` under `eps` and evaluate both bound branches.
pub fn perturbation_bound(v: &VolterraOperator, x: &Tensor, eps: &Tensor) -> Result<PerturbReport> {
    if v.signal_dim() != 1 || x.rank() != 1 {
        return shape_err("perturbation bounds are implemented for 1-D operators");
    }
    if v.order() > MAX_BOUND_ORDER {
        return Err(VolterraError::CapExceeded(format!("order {} exceeds {MAX_BOUND_ORDER}", v.order())));
    }
    if eps.shape() != x.shape() {
        return shape_err("perturbation and signal shapes differ");
    }
    let xe = x.add(eps)?;
    let base = volterra_terms(v, x)?;
    let moved = volterra_terms(v, &xe)?;
    let mut orders = Vec::with_capacity(v.order());
    let mut total = Tensor::zeros(base[0].shape());
    let (mut t2, mut t1) = (0.0, 0.0);
    for n in 1..=v.order() {
        let d = moved[n].sub(&base[n])?;
        total = total.add(&d)?;
        let h = &v.kernels()[n];
        let (l2_branch, l1_branch) = order_bound(h.norm_l1(), h.norm_l2(), n, x, eps);
        t2 += l2_branch;
        t1 += l1_branch;
        orders.push(OrderDeviation { order: n, deviation: d.norm_l2(), l2_branch, l1_branch });
    }
    Ok(PerturbReport { orders, total_deviation: total.norm_l2(), total_l2_branch: t2, total_l1_branch: t1 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MixedBound {
    /// `||H_n * {x^k, y^(n-k)}||_2` over the full output.
    pub actual: f64,
    /// `||H_n||_2 ||x||_1^k ||y||_1^(n-k)`.
    pub l2_branch: f64,
    /// `||H_n||_1 ||x||_2k^k ||y||_2(n-k)^(n-k)`.
    pub l1_branch: f64,
}

impl MixedBound {
    pub fn holds(&self) -> bool {
        within_bound(self.actual, self.l2_branch.min(self.l1_branch))
    }
}

/// Mixed-signal bound for `H_n` with `k` copies of `x` then `n - k` of `y`.
pub fn mixed_bound(h: &Tensor, x: &Tensor, y: &Tensor, k: usize) -> Result<MixedBound> {
    let n = h.rank();
    if n == 0 || k > n {
        return arg_err(format!("need 0 <= k <= n with n >= 1, got k = {k}, n = {n}"));
    }
    if x.rank() != 1 || y.shape() != x.shape() {
        return shape_err("mixed bound needs two 1-D signals of the same length");
    }
    let z = *h.shape().iter().max().expect("rank >= 1");
    let mut sigs = vec![x; k];
    sigs.extend(std::iter::repeat_n(y, n - k));
    let actual = conv_order_n(h, &sigs, 1, z - 1)?.norm_l2();
    Ok(MixedBound {
        actual,
        l2_branch: h.norm_l2() * norm_pow(x, 1.0, k) * norm_pow(y, 1.0, n - k),
        l1_branch: h.norm_l1() * norm_pow(x, 2.0 * k as f64, k) * norm_pow(y, 2.0 * (n - k) as f64, n - k),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct YoungCheck {
    pub r: f64,
    /// `||h * x||_r` over the full output.
    pub lhs: f64,
    /// `||h||_p ||x||_q`.
    pub rhs: f64,
}

impl YoungCheck {
    pub fn holds(&self) -> bool {
        within_bound(self.lhs, self.rhs)
    }
}

/// Young's inequality for `p, q >= 1` with `1 + 1/r = 1/p + 1/q`.
pub fn young_check(h: &Tensor, x: &Tensor, p: f64, q: f64) -> Result<YoungCheck> {
    if !(p >= 1.0 && q >= 1.0) {
        return arg_err("Young exponents must be >= 1");
    }
    let inv_r = 1.0 / p + 1.0 / q - 1.0;
    if inv_r < 0.0 {
        return arg_err("1/p + 1/q must be at least 1");
    }
    let y = full_conv(h, x)?;
    let (r, lhs) = if inv_r == 0.0 { (f64::INFINITY, y.max_abs()) } else { (1.0 / inv_r, y.norm_p(1.0 / inv_r)) };
    Ok(YoungCheck { r, lhs, rhs: h.norm_p(p) * x.norm_p(q) })
}

/// Exponent pairs used by the experiments' Young checks.
pub const YOUNG_PAIRS: [(f64, f64); 4] = [(2.0, 1.0), (1.0, 2.0), (1.0, 1.0), (4.0 / 3.0, 4.0 / 3.0)];

/// Setup of the spike-perturbation experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviationConfig {
    pub orders: Vec<usize>,
    pub spike: f64,
    pub trials: usize,
    pub seed: u64,
    pub signal_len: usize,
    pub extent: usize,
}

impl Default for DeviationConfig {
    fn default() -> Self {
        DeviationConfig { orders: (1..=8).collect(), spike: 3.0, trials: 100, seed: 0, signal_len: 32, extent: 5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeviationRecord {
    pub order: usize,
    pub trial: usize,
    pub deviation: f64,
    pub l2_branch: f64,
    pub l1_branch: f64,
    /// Deviation lies under the smaller branch.
    pub dominated: bool,
    /// Every mixed-signal bound held (checked for orders up to 4).
    pub mixed_ok: bool,
    /// Young's inequality held for every exponent pair.
    pub young_ok: bool,
}

/// Tukey-style summary of one order's deviations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrderSummary {
    pub order: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviationExperiment {
    pub config: DeviationConfig,
    pub records: Vec<DeviationRecord>,
    pub summaries: Vec<OrderSummary>,
}

/// Largest order whose mixed-signal bounds are checked per trial.
pub const MIXED_CHECK_MAX_ORDER: usize = 4;

impl DeviationExperiment {
    /// Fraction of records satisfying all three checks.
    pub fn pass_fraction(&self) -> f64 {
        if self.records.is_empty() {
            return 1.0;
        }
        let ok = self.records.iter().filter(|r| r.dominated && r.mixed_ok && r.young_ok).count();
        ok as f64 / self.records.len() as f64
    }

    pub fn medians(&self) -> Vec<f64> {
        self.summaries.iter().map(|s| s.median).collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let c = &self.config;
        writeln!(
            w,
            "# spike={} trials={} seed={} signal_len={} extent={}",
            c.spike, c.trials, c.seed, c.signal_len, c.extent
        )?;
        writeln!(w, "order,trial,deviation,l2_branch,l1_branch,dominated,mixed_ok,young_ok")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{:e},{:e},{:e},{},{},{}",
                r.order, r.trial, r.deviation, r.l2_branch, r.l1_branch, r.dominated, r.mixed_ok, r.young_ok
            )?;
        }
        Ok(())
    }
}

/// Type-7 sample quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn summarize(order: usize, values: &mut [f64]) -> OrderSummary {
    values.sort_by(f64::total_cmp);
    OrderSummary {
        order,
        min: quantile_sorted(values, 0.0),
        q1: quantile_sorted(values, 0.25),
        median: quantile_sorted(values, 0.5),
        q3: quantile_sorted(values, 0.75),
        max: quantile_sorted(values, 1.0),
    }
}

fn trial_stream(order: usize, trial: usize) -> u64 {
    ((order as u64) << 32) | (trial as u64 + 1)
}

/// Random unit-norm `H_n` against a fixed unit-norm `x` with a midpoint
/// spike perturbation, using valid convolutions.
pub fn deviation_experiment(config: &DeviationConfig) -> Result<DeviationExperiment> {
    let (len, z) = (config.signal_len, config.extent);
    if z == 0 || len < z {
        return arg_err(format!("need 1 <= extent <= signal length, got {z} and {len}"));
    }
    if let Some(&n) = config.orders.iter().find(|&&n| n == 0 || n > MAX_BOUND_ORDER) {
        return arg_err(format!("orders must lie in 1..={MAX_BOUND_ORDER}, got {n}"));
    }
    let x = unit_gaussian(&mut stream(config.seed, 0), &[len]);
    let eps = dirac(&[len], Some(&[len / 2]))?.scale(config.spike);
    let xe = x.add(&eps)?;
    let jobs: Vec<(usize, usize)> =
        config.orders.iter().flat_map(|&n| (0..config.trials).map(move |t| (n, t))).collect();
    let records = exec::map_slice(&jobs, |&(n, trial)| -> Result<DeviationRecord> {
        let mut rng = stream(config.seed, trial_stream(n, trial));
        let h = unit_gaussian(&mut rng, &vec![z; n]);
        let fp = [z];
        let a = conv_with_footprint(&h, &vec![&xe; n], &fp, 1, 0)?;
        let b = conv_with_footprint(&h, &vec![&x; n], &fp, 1, 0)?;
        let deviation = a.sub(&b)?.norm_l2();
        let (l2_branch, l1_branch) = order_bound(h.norm_l1(), h.norm_l2(), n, &x, &eps);
        let mut mixed_ok = true;
        if n <= MIXED_CHECK_MAX_ORDER {
            for k in 0..=n {
                mixed_ok &= mixed_bound(&h, &x, &eps, k)?.holds();
            }
        }
        let h1 = unit_gaussian(&mut rng, &[z]);
        let mut young_ok = true;
        for sig in [&x, &xe, &eps] {
            for (p, q) in YOUNG_PAIRS {
                young_ok &= young_check(&h1, sig, p, q)?.holds();
            }
        }
        Ok(DeviationRecord {
            order: n,
            trial,
            deviation,
            l2_branch,
            l1_branch,
            dominated: within_bound(deviation, l2_branch.min(l1_branch)),
            mixed_ok,
            young_ok,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let summaries = config
        .orders
        .iter()
        .map(|&n| {
            let mut v: Vec<f64> = records.iter().filter(|r| r.order == n).map(|r| r.deviation).collect();
            summarize(n, &mut v)
        })
        .collect();
    Ok(DeviationExperiment { config: config.clone(), records, summaries })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn majorant_dominates_binomials() {
        for n in 1..=12usize {
            let mut c = 1.0;
            for k in 0..=n {
                assert!(c <= binomial_majorant(n, k) * (1.0 + 1e-12), "{n} {k}");
                c = c * (n - k) as f64 / (k + 1) as f64;
            }
        }
    }

    #[test]
    fn quantiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.5), 2.5);
        assert_eq!(quantile_sorted(&v, 0.25), 1.75);
        assert_eq!(quantile_sorted(&v, 1.0), 4.0);
    }
}
