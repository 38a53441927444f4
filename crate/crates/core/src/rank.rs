//! Ranks of convolution outputs.
//!
//! Numerical rank counts singular values above `rel_tol * s_max`; Tucker
//! ranks are the ranks of the mode unfoldings. The experiments build
//! operands of known rank (low-rank products, Tucker cores, zero-convolution
//! signals), convolve them, and compare detected ranks with the bounds:
//!
//! * `oconv-1d`: `G (.) {h1, h2}` cropped to the valid region, rank at most
//!   `min(rank G, T1, T2)` when `h_i` solve a zero convolution of window `T_i`.
//! * `conv-2d`: `rank(G * H) <= min(s1, s2, rank G * rank H)`.
//! * `conv-3d`: mode-`k` rank of `G * H` at most `min(s_k, r_k(G) r_k(H))`.
//! * `oconv-mixed`: mode ranks of `G (.) {h1, h2, H3, H4}` bounded by
//!   `r_k(G)` for 1-D operands and by `z_k r_i(H_k)` otherwise.

use std::io::Write;

use rand::Rng;
use serde::Serialize;

use crate::conv::conv_order_n;
use crate::error::{arg_err, shape_err, Result, VolterraError};
use crate::exec;
use crate::linalg::singular_values_of_columns;
use crate::outer::outer_conv;
use crate::rng::{stream, Family};
use crate::tensor::{mode_slices, Tensor};

pub use crate::linalg::{singular_values, svd, Svd};

/// Default relative threshold for rank detection.
pub const DEFAULT_REL_TOL: f64 = 1e-8;
/// Reported singular values are clipped to this range.
pub const CLIP_RANGE: (f64, f64) = (1e-16, 1e16);

/// Singular values with the rank they imply.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SingularSpectrum {
    /// Descending, clipped to [`CLIP_RANGE`].
    pub values: Vec<f64>,
    pub rank: usize,
    pub rel_tol: f64,
}

fn check_tol(rel_tol: f64) -> Result<()> {
    if !(rel_tol > 0.0 && rel_tol < 1.0) {
        return arg_err(format!("rel_tol must lie in (0, 1), got {rel_tol}"));
    }
    Ok(())
}

fn count_above(values: &[f64], rel_tol: f64) -> usize {
    let smax = values.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return 0;
    }
    values.iter().filter(|&&s| s > rel_tol * smax).count()
}

fn spectrum_from(values: Vec<f64>, rel_tol: f64) -> SingularSpectrum {
    let rank = count_above(&values, rel_tol);
    let values = values.iter().map(|s| s.clamp(CLIP_RANGE.0, CLIP_RANGE.1)).collect();
    SingularSpectrum { values, rank, rel_tol }
}

/// Singular spectrum of a matrix.
pub fn spectrum(m: &Tensor, rel_tol: f64) -> Result<SingularSpectrum> {
    check_tol(rel_tol)?;
    Ok(spectrum_from(singular_values(m)?, rel_tol))
}

/// Number of singular values above `rel_tol * s_max`.
pub fn numerical_rank(m: &Tensor, rel_tol: f64) -> Result<usize> {
    Ok(spectrum(m, rel_tol)?.rank)
}

/// Singular spectrum of the mode-`k` unfolding.
pub fn mode_spectrum(t: &Tensor, k: usize, rel_tol: f64) -> Result<SingularSpectrum> {
    check_tol(rel_tol)?;
    if !t.is_finite() {
        return Err(VolterraError::Numerical("non-finite tensor entry".into()));
    }
    Ok(spectrum_from(singular_values_of_columns(mode_slices(t, k)?)?, rel_tol))
}

/// Numerical rank of every mode unfolding.
pub fn tucker_rank(t: &Tensor, rel_tol: f64) -> Result<Vec<usize>> {
    (0..t.rank()).map(|k| Ok(mode_spectrum(t, k, rel_tol)?.rank)).collect()
}

/// Continue `init` so that every full window of `g * h` vanishes:
/// `h(t) = -1/g(0) sum_{tau >= 1} g(tau) h(t - tau)`.
/// With `g = [c]` there are no initial terms and the signal is all zeros.
pub fn make_zero_conv_signal(g: &Tensor, init: &[f64], total_len: usize) -> Result<Tensor> {
    if g.rank() != 1 {
        return shape_err("zero-convolution signals need a 1-D kernel");
    }
    if total_len == 0 {
        return arg_err("total length must be positive");
    }
    let t = g.len() - 1;
    if init.len() != t {
        return shape_err(format!("kernel of length {} needs {t} initial terms, got {}", g.len(), init.len()));
    }
    if total_len < t {
        return arg_err(format!("total length {total_len} is shorter than the {t} initial terms"));
    }
    let g0 = g.data()[0];
    if g0 == 0.0 {
        return arg_err("g(0) must be nonzero");
    }
    let mut h = init.to_vec();
    for i in t..total_len {
        let s: f64 = (1..=t).map(|tau| g.data()[tau] * h[i - tau]).sum();
        h.push(-s / g0);
    }
    Ok(Tensor::vector(h))
}

/// `rows x window` matrix with row `r = (h(r), ..., h(r + window - 1))`.
pub fn hankel_matrix(h: &Tensor, window: usize, rows: usize) -> Result<Tensor> {
    if h.rank() != 1 {
        return shape_err("Hankel matrices are built from 1-D signals");
    }
    if window == 0 || rows == 0 {
        return arg_err("window and row count must be positive");
    }
    if h.len() < rows + window - 1 {
        return shape_err(format!("signal of length {} is too short for {rows} rows of width {window}", h.len()));
    }
    Ok(Tensor::from_fn(&[rows, window], |i| h.data()[i[0] + i[1]]))
}

/// One row per valid position `t`, holding `H(t - tau)` for `tau` over the
/// patch in row-major order. In 1-D this is the Hankel matrix with its
/// columns reversed.
pub fn patch_matrix(h: &Tensor, patch: &[usize]) -> Result<Tensor> {
    if patch.len() != h.rank() || patch.contains(&0) {
        return shape_err("patch must have one positive extent per axis");
    }
    if patch.iter().zip(h.shape()).any(|(p, e)| p > e) {
        return shape_err(format!("patch {patch:?} does not fit {:?}", h.shape()));
    }
    let positions: Vec<usize> = patch.iter().zip(h.shape()).map(|(p, e)| e - p + 1).collect();
    let rows: usize = positions.iter().product();
    let cols: usize = patch.iter().product();
    let m = h.rank();
    let mut data = Vec::with_capacity(rows * cols);
    let mut idx = vec![0; m];
    crate::tensor::for_each_index(&positions, |o| {
        crate::tensor::for_each_index(patch, |tau| {
            for d in 0..m {
                idx[d] = o[d] + patch[d] - 1 - tau[d];
            }
            data.push(h.get(&idx));
        });
    });
    Tensor::new(vec![rows, cols], data)
}

/// Insert `gap` zero rows/columns between neighbouring entries on every axis.
pub fn dilate(g: &Tensor, gap: usize) -> Tensor {
    let shape: Vec<usize> = g.shape().iter().map(|&e| (e - 1) * (gap + 1) + 1).collect();
    Tensor::from_fn(&shape, |i| {
        if i.iter().all(|&v| v % (gap + 1) == 0) {
            let src: Vec<usize> = i.iter().map(|&v| v / (gap + 1)).collect();
            g.get(&src)
        } else {
            0.0
        }
    })
}

/// Numerical rank of the valid convolutions `G_i * H`, each flattened into
/// one column.
pub fn stacked_conv_rank(h: &Tensor, gs: &[&Tensor], rel_tol: f64) -> Result<usize> {
    check_tol(rel_tol)?;
    let cols = gs
        .iter()
        .map(|g| Ok(conv_order_n(g, &[h], 1, 0)?.into_data()))
        .collect::<Result<Vec<_>>>()?;
    if cols.windows(2).any(|w| w[0].len() != w[1].len()) {
        return shape_err("kernels must share one shape");
    }
    let values = singular_values_of_columns(cols)?;
    Ok(count_above(&values, rel_tol))
}

fn unit(t: Tensor) -> Tensor {
    let n = t.norm_l2();
    if n > 0.0 {
        t.scale(1.0 / n)
    } else {
        t
    }
}

/// Unit-norm `rows x cols` matrix of rank `r`: a product of `r`-column factors.
pub fn low_rank_matrix<R: Rng + ?Sized>(rng: &mut R, family: Family, rows: usize, cols: usize, r: usize) -> Result<Tensor> {
    if r == 0 || r > rows.min(cols) {
        return arg_err(format!("rank {r} impossible for a {rows} x {cols} matrix"));
    }
    let p = family.sample(rng, &[rows, r]);
    let q = family.sample(rng, &[cols, r]);
    Ok(unit(Tensor::from_fn(&[rows, cols], |i| {
        (0..r).map(|k| p.data()[i[0] * r + k] * q.data()[i[1] * r + k]).sum()
    })))
}

/// `t x_k a`: contract axis `k` of `t` with the columns of `a` (`rows x t.shape[k]`).
pub fn mode_multiply(t: &Tensor, k: usize, a: &Tensor) -> Result<Tensor> {
    if a.rank() != 2 || k >= t.rank() || a.shape()[1] != t.shape()[k] {
        return shape_err(format!("cannot multiply mode {k} of {:?} by {:?}", t.shape(), a.shape()));
    }
    let mut shape = t.shape().to_vec();
    let (rows, inner_k) = (a.shape()[0], t.shape()[k]);
    shape[k] = rows;
    let outer: usize = t.shape()[..k].iter().product();
    let inner: usize = t.shape()[k + 1..].iter().product();
    let mut data = vec![0.0; outer * rows * inner];
    for o in 0..outer {
        for r in 0..rows {
            let dst = &mut data[(o * rows + r) * inner..(o * rows + r + 1) * inner];
            for j in 0..inner_k {
                let c = a.data()[r * inner_k + j];
                if c == 0.0 {
                    continue;
                }
                let src = &t.data()[(o * inner_k + j) * inner..(o * inner_k + j + 1) * inner];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += c * s;
                }
            }
        }
    }
    Tensor::new(shape, data)
}

/// Unit-norm tensor with the given Tucker ranks: a random core multiplied by
/// a random factor on every mode.
pub fn tucker_tensor<R: Rng + ?Sized>(rng: &mut R, family: Family, shape: &[usize], ranks: &[usize]) -> Result<Tensor> {
    if shape.len() != ranks.len() {
        return shape_err("one rank per axis");
    }
    let total: usize = shape.iter().product();
    for (k, (&s, &r)) in shape.iter().zip(ranks).enumerate() {
        // A mode rank can exceed neither its extent nor the other extents' product.
        if r == 0 || r > s || r > total / s {
            return arg_err(format!("mode {k} rank {r} impossible for shape {shape:?}"));
        }
    }
    let mut t = family.sample(rng, ranks);
    for (k, (&s, &r)) in shape.iter().zip(ranks).enumerate() {
        let f = family.sample(rng, &[s, r]);
        t = mode_multiply(&t, k, &f)?;
    }
    Ok(unit(t))
}

/// The four rank experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RankExperiment {
    Oconv1d,
    Conv2d,
    Conv3d,
    OconvMixed,
}

impl RankExperiment {
    pub const ALL: [RankExperiment; 4] =
        [RankExperiment::Oconv1d, RankExperiment::Conv2d, RankExperiment::Conv3d, RankExperiment::OconvMixed];

    pub fn name(self) -> &'static str {
        match self {
            RankExperiment::Oconv1d => "oconv-1d",
            RankExperiment::Conv2d => "conv-2d",
            RankExperiment::Conv3d => "conv-3d",
            RankExperiment::OconvMixed => "oconv-mixed",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == name)
            .ok_or_else(|| VolterraError::Unknown { kind: "rank experiment", name: name.to_string() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RankConfig {
    pub trials: usize,
    pub rel_tol: f64,
}

impl Default for RankConfig {
    fn default() -> Self {
        RankConfig { trials: 50, rel_tol: DEFAULT_REL_TOL }
    }
}

/// One detected rank against its bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankRow {
    pub trial: usize,
    pub family: &'static str,
    /// 1-based unfolding mode; matrices report mode 1.
    pub mode: usize,
    pub spectrum: SingularSpectrum,
    pub bound: usize,
}

impl RankRow {
    pub fn pass(&self) -> bool {
        self.spectrum.rank <= self.bound
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankReport {
    pub experiment: RankExperiment,
    pub seed: u64,
    pub config: RankConfig,
    pub rows: Vec<RankRow>,
}

impl RankReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(RankRow::pass)
    }

    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| !r.pass()).count()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "# experiment={} seed={} trials={} rel_tol={:e}",
            self.experiment.name(),
            self.seed,
            self.config.trials,
            self.config.rel_tol
        )?;
        writeln!(w, "trial,family,mode,log10_singular_values,rank,bound,pass")?;
        for r in &self.rows {
            let logs: Vec<String> = r.spectrum.values.iter().map(|v| format!("{:.6}", v.log10())).collect();
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.trial,
                r.family,
                r.mode,
                logs.join(";"),
                r.spectrum.rank,
                r.bound,
                r.pass()
            )?;
        }
        Ok(())
    }
}

/// Crop every axis of a full convolution to its valid region.
fn valid_crop(full: &Tensor, kernel: &[usize], signal: &[usize]) -> Result<Tensor> {
    let start: Vec<usize> = kernel.iter().map(|z| z - 1).collect();
    let extents: Vec<usize> = kernel.iter().zip(signal).map(|(z, l)| l - z + 1).collect();
    full.slice(&start, &extents)
}

fn trial_oconv_1d(trial: usize, seed: u64, tol: f64) -> Result<Vec<RankRow>> {
    const Z: usize = 9;
    const L: usize = 27;
    let family = Family::alternating(trial);
    let mut rng = stream(seed, trial as u64);
    let r_g = rng.random_range(1..=8);
    let t1 = rng.random_range(1..=8);
    let t2 = rng.random_range(1..=8);
    let g = low_rank_matrix(&mut rng, family, Z, Z, r_g)?;
    let mut zero_signal = |t: usize| -> Result<Tensor> {
        let init = family.sample(&mut rng, &[t]);
        make_zero_conv_signal(&Tensor::full(&[t + 1], 1.0), init.data(), L)
    };
    let h1 = zero_signal(t1)?;
    let h2 = zero_signal(t2)?;
    let full = outer_conv(&g, &[&h1, &h2], 1, 1)?;
    let y = valid_crop(&full, &[Z, Z], &[L, L])?;
    Ok(vec![RankRow {
        trial,
        family: family.label(),
        mode: 1,
        spectrum: spectrum(&y, tol)?,
        bound: r_g.min(t1).min(t2),
    }])
}

fn trial_conv_2d(trial: usize, seed: u64, tol: f64) -> Result<Vec<RankRow>> {
    let family = Family::alternating(trial);
    let mut rng = stream(seed, trial as u64);
    let r_g = rng.random_range(1..=4);
    let r_h = rng.random_range(1..=4);
    let g = low_rank_matrix(&mut rng, family, 7, 7, r_g)?;
    let h = low_rank_matrix(&mut rng, family, 32, 32, r_h)?;
    let y = conv_order_n(&g, &[&h], 1, 6)?;
    let s = y.shape()[0].min(y.shape()[1]);
    Ok(vec![RankRow { trial, family: family.label(), mode: 1, spectrum: spectrum(&y, tol)?, bound: s.min(r_g * r_h) }])
}

fn trial_conv_3d(trial: usize, seed: u64, tol: f64) -> Result<Vec<RankRow>> {
    const RG: [usize; 3] = [2, 4, 3];
    const RH: [usize; 3] = [3, 2, 4];
    let family = Family::alternating(trial);
    let mut rng = stream(seed, trial as u64);
    let g = tucker_tensor(&mut rng, family, &[6, 6, 6], &RG)?;
    let h = tucker_tensor(&mut rng, family, &[28, 28, 28], &RH)?;
    let y = conv_order_n(&g, &[&h], 1, 5)?;
    (0..3)
        .map(|k| {
            Ok(RankRow {
                trial,
                family: family.label(),
                mode: k + 1,
                spectrum: mode_spectrum(&y, k, tol)?,
                bound: y.shape()[k].min(RG[k] * RH[k]),
            })
        })
        .collect()
}

fn trial_oconv_mixed(trial: usize, seed: u64, tol: f64) -> Result<Vec<RankRow>> {
    const RG: [usize; 4] = [2, 3, 3, 2];
    const R3: usize = 2;
    const R4: [usize; 3] = [2, 3, 4];
    let family = Family::alternating(trial);
    let mut rng = stream(seed, trial as u64);
    let g = tucker_tensor(&mut rng, family, &[3, 3, 3, 3], &RG)?;
    let h1 = family.sample(&mut rng, &[5]);
    let h2 = family.sample(&mut rng, &[5]);
    let h3 = low_rank_matrix(&mut rng, family, 7, 7, R3)?;
    let h4 = tucker_tensor(&mut rng, family, &[9, 9, 18], &R4)?;
    let y = outer_conv(&g, &[&h1, &h2, &h3, &h4], 1, 1)?;
    let z = g.shape()[0];
    // Operand group of each output axis and the rank bound it implies.
    let theory = [RG[0], RG[1], z * R3, z * R3, z * R4[0], z * R4[1], z * R4[2]];
    exec::try_map_indices(y.rank(), |k| {
        Ok(RankRow {
            trial,
            family: family.label(),
            mode: k + 1,
            spectrum: mode_spectrum(&y, k, tol)?,
            bound: y.shape()[k].min(theory[k]),
        })
    })
}

/// Run `config.trials` trials of an experiment; trial `i` uses stream
/// `(seed, i)` and alternates the Gaussian and uniform families.
pub fn rank_experiment(experiment: RankExperiment, config: &RankConfig, seed: u64) -> Result<RankReport> {
    check_tol(config.rel_tol)?;
    let tol = config.rel_tol;
    let per_trial: Vec<Vec<RankRow>> = match experiment {
        RankExperiment::Oconv1d => exec::try_map_indices(config.trials, |t| trial_oconv_1d(t, seed, tol))?,
        RankExperiment::Conv2d => exec::try_map_indices(config.trials, |t| trial_conv_2d(t, seed, tol))?,
        RankExperiment::Conv3d => exec::try_map_indices(config.trials, |t| trial_conv_3d(t, seed, tol))?,
        // Each trial holds a ten-million-entry tensor, so trials run one at a
        // time and only the unfoldings of one trial are processed in parallel.
        RankExperiment::OconvMixed => {
            (0..config.trials).map(|t| trial_oconv_mixed(t, seed, tol)).collect::<Result<_>>()?
        }
    };
    Ok(RankReport { experiment, seed, config: *config, rows: per_trial.into_iter().flatten().collect() })
}
