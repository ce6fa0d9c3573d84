//! Monte Carlo paths of the stochastic equations and autocovariance
//! estimates from them.
//!
//! Each path owns one ChaCha8 stream: the master seed picks the key and the
//! path index picks the stream, so replication `i` draws the same numbers no
//! matter how replications are scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::conv::{convolve, relaxed_convolution, ConvolutionMode};
use crate::error::{Error, Result};
use crate::fit::fit_last_decade;
use crate::kernels::{hurwitz_zeta, DiscreteKernel, KernelSpec};
use crate::par::{self, pairwise_sum, Exec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Noise {
    #[default]
    Gaussian,
    /// ±1 with equal probability.
    Rademacher,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathScheme {
    EulerMaruyama,
    DiscreteRecursion,
    StationaryMa,
}

/// Master seed plus stream index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathSeed {
    pub seed: u64,
    pub stream: u64,
}

impl From<u64> for PathSeed {
    fn from(seed: u64) -> Self {
        PathSeed { seed, stream: 0 }
    }
}

impl PathSeed {
    pub fn new(seed: u64, stream: u64) -> Self {
        PathSeed { seed, stream }
    }

    pub fn rng(self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePath {
    pub values: Vec<f64>,
    pub h: f64,
    pub scheme: PathScheme,
    pub seed: PathSeed,
    pub sigma: f64,
    pub noise: Noise,
    pub truncation_m: Option<usize>,
}

pub fn draw_noise(rng: &mut ChaCha8Rng, noise: Noise, n: usize) -> Vec<f64> {
    match noise {
        Noise::Gaussian => (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect(),
        Noise::Rademacher => (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect(),
    }
}

/// `X_{n+1} = (1+a) X_n + Σ_{j=1}^n k_j X_{n-j} + σ ξ_{n+1}` for `n < n_steps`.
/// The path holds `X_0, …, X_{n_steps}`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_discrete(
    kernel: &DiscreteKernel,
    a: f64,
    sigma: f64,
    n_steps: usize,
    x0: f64,
    noise: Noise,
    seed: impl Into<PathSeed>,
    mode: ConvolutionMode,
) -> SamplePath {
    let seed = seed.into();
    let xi = draw_noise(&mut seed.rng(), noise, n_steps);
    let len = n_steps + 1;
    let w = kernel.weights(len);
    let (mut last_x, mut last_y) = (0.0, 0.0);
    let values = relaxed_convolution(&w, len, mode, |i, y| {
        let x = if i == 0 {
            x0
        } else {
            (1.0 + a) * last_x + last_y + sigma * xi[i - 1]
        };
        last_x = x;
        last_y = y;
        x
    });
    SamplePath {
        values,
        h: 1.0,
        scheme: PathScheme::DiscreteRecursion,
        seed,
        sigma,
        noise,
        truncation_m: None,
    }
}

/// Euler–Maruyama with trapezoidal memory:
/// `X_{i+1} = X_i + h (a X_i + h Σ'_{j≤i} k_{i-j} X_j) + σ √h ζ_i`,
/// where `Σ'` halves the `j = 0` and `j = i` terms.
#[allow(clippy::too_many_arguments)]
pub fn simulate_continuous_em(
    spec: &KernelSpec,
    sigma: f64,
    h: f64,
    t_max: f64,
    x0: f64,
    noise: Noise,
    seed: impl Into<PathSeed>,
    mode: ConvolutionMode,
) -> Result<SamplePath> {
    if !(h > 0.0 && t_max > 0.0) {
        return Err(Error::Grid(format!(
            "need h > 0 and t_max > 0, got h = {h}, t_max = {t_max}"
        )));
    }
    let seed = seed.into();
    let len = (t_max / h).round() as usize + 1;
    let k: Vec<f64> = (0..len).map(|i| spec.eval(i as f64 * h)).collect::<Result<_>>()?;
    let zeta = draw_noise(&mut seed.rng(), noise, len - 1);
    let a = spec.a;
    let noise_scale = sigma * h.sqrt();
    let mut x = vec![0.0; len];
    let mut last_y = 0.0;
    relaxed_convolution(&k, len, mode, |i, y| {
        if i == 0 {
            x[0] = x0;
            last_y = y;
            return 0.5 * x0;
        }
        let prev = x[i - 1];
        let memory = h * (last_y + 0.5 * k[0] * prev);
        x[i] = prev + h * (a * prev + memory) + noise_scale * zeta[i - 1];
        last_y = y;
        x[i]
    });
    Ok(SamplePath {
        values: x,
        h,
        scheme: PathScheme::EulerMaruyama,
        seed,
        sigma,
        noise,
        truncation_m: None,
    })
}

/// Neglected variance `Σ_{j>M} r_j²` of a truncated moving average, from the
/// power law fitted to `r_0..r_M`, together with the full `Σ r_j²`.
pub fn ma_tail_variance(r: &[f64], m: usize) -> Result<(f64, f64)> {
    if r.len() <= m {
        return Err(Error::Grid(format!("need r_0..r_{m}, have {} values", r.len())));
    }
    let head = &r[..=m];
    let squares: Vec<f64> = head.iter().map(|v| v * v).collect();
    let kept = pairwise_sum(&squares);
    if head[(m / 10).max(1)..].iter().all(|v| v.abs() < 1e-300) {
        return Ok((0.0, kept));
    }
    let fit = fit_last_decade(head, 1.0)?;
    if fit.exponent >= -0.5 {
        return Err(Error::NotSquareIntegrable { exponent: fit.exponent });
    }
    let tail = fit.coefficient * fit.coefficient * hurwitz_zeta(-2.0 * fit.exponent, (m + 1) as f64);
    Ok((tail, kept + tail))
}

fn check_truncation(r: &[f64], m: usize, tail_tol: f64) -> Result<()> {
    let (tail, total) = ma_tail_variance(r, m)?;
    let bound = tail_tol * total;
    if tail > bound {
        return Err(Error::Truncation { m, tail, bound });
    }
    Ok(())
}

pub const DEFAULT_MA_TAIL_TOL: f64 = 1e-4;

/// `X_n = σ Σ_{j=0}^{M} r_j ζ_{n-j}`, `n = 0..n_values`. The neglected tail
/// variance must stay below `tail_tol · c(0)`. Long paths with long
/// truncations go through an FFT product, the rest is summed directly.
pub fn simulate_stationary_discrete(
    r: &[f64],
    sigma: f64,
    n_values: usize,
    m: usize,
    noise: Noise,
    seed: impl Into<PathSeed>,
    tail_tol: f64,
) -> Result<SamplePath> {
    check_truncation(r, m, tail_tol)?;
    let seed = seed.into();
    // z[q] holds ζ_{q-M}
    let z = draw_noise(&mut seed.rng(), noise, n_values + m);
    let taps = &r[..=m];
    let values = if (m + 1).saturating_mul(n_values) <= 1 << 22 {
        (0..n_values)
            .map(|n| sigma * taps.iter().enumerate().map(|(j, rj)| rj * z[n + m - j]).sum::<f64>())
            .collect()
    } else {
        let full = convolve(taps, &z, n_values + m, ConvolutionMode::fft());
        full[m..].iter().map(|v| sigma * v).collect()
    };
    Ok(SamplePath {
        values,
        h: 1.0,
        scheme: PathScheme::StationaryMa,
        seed,
        sigma,
        noise,
        truncation_m: Some(m),
    })
}

/// One replication of the truncated moving average evaluated only at times
/// `0` and `h` for each requested lag; returns `X_0 X_h`.
pub fn stationary_lag_products(
    r: &[f64],
    sigma: f64,
    m: usize,
    lags: &[usize],
    noise: Noise,
    seed: PathSeed,
) -> Vec<f64> {
    let max_lag = lags.iter().copied().max().unwrap_or(0);
    // z[q] holds ζ_{q-M}
    let z = draw_noise(&mut seed.rng(), noise, m + 1 + max_lag);
    let x_at = |n: usize| sigma * (0..=m).map(|j| r[j] * z[n + m - j]).sum::<f64>();
    let x0 = x_at(0);
    lags.iter().map(|&h| x0 * if h == 0 { x0 } else { x_at(h) }).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceEstimate {
    pub lags: Vec<usize>,
    pub c_hat: Vec<f64>,
    pub std_err: Vec<f64>,
    pub n_effective: usize,
}

pub const BATCHES: usize = 32;

/// `ĉ(h) = (1/n) Σ (X_i - X̄)(X_{i+h} - X̄)` with batch-means standard
/// errors over 32 contiguous batches of the lagged products.
pub fn empirical_autocov(values: &[f64], lags: &[usize]) -> Result<CovarianceEstimate> {
    let n = values.len();
    let max_lag = lags.iter().copied().max().unwrap_or(0);
    if n < 100 * max_lag.max(1) || n < 2 * BATCHES {
        return Err(Error::SeriesTooShort(format!(
            "{n} values for max lag {max_lag}; need at least {}",
            (100 * max_lag.max(1)).max(2 * BATCHES)
        )));
    }
    let mean = pairwise_sum(values) / n as f64;
    let centred: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let mut c_hat = Vec::with_capacity(lags.len());
    let mut std_err = Vec::with_capacity(lags.len());
    for &h in lags {
        let pairs = n - h;
        let products: Vec<f64> = (0..pairs).map(|i| centred[i] * centred[i + h]).collect();
        let batch_means: Vec<f64> = (0..BATCHES)
            .map(|b| {
                let (lo, hi) = (b * pairs / BATCHES, (b + 1) * pairs / BATCHES);
                pairwise_sum(&products[lo..hi]) / (hi - lo) as f64
            })
            .collect();
        let scale = pairs as f64 / n as f64;
        c_hat.push(scale * pairwise_sum(&products) / pairs as f64);
        std_err.push(scale * mean_estimate(&batch_means).std_err);
    }
    Ok(CovarianceEstimate {
        lags: lags.to_vec(),
        c_hat,
        std_err,
        n_effective: n - max_lag,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub n: usize,
}

impl MeanEstimate {
    /// `|mean - target|` in units of the standard error.
    pub fn z_score(&self, target: f64) -> f64 {
        (self.mean - target).abs() / self.std_err
    }
}

/// Sample mean and its iid standard error.
pub fn mean_estimate(xs: &[f64]) -> MeanEstimate {
    let n = xs.len();
    let mean = pairwise_sum(xs) / n as f64;
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = if n > 1 {
        pairwise_sum(&dev) / (n - 1) as f64
    } else {
        0.0
    };
    MeanEstimate {
        mean,
        std_err: (var / n as f64).sqrt(),
        n,
    }
}

/// Moments across replications, each with an approximate standard error
/// (delta method for the variance, normal-theory for the shape statistics).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleMoments {
    pub mean: MeanEstimate,
    pub variance: f64,
    pub variance_se: f64,
    pub skewness: f64,
    pub skewness_se: f64,
    pub excess_kurtosis: f64,
    pub kurtosis_se: f64,
}

pub fn sample_moments(xs: &[f64]) -> SampleMoments {
    let n = xs.len() as f64;
    let mean = mean_estimate(xs);
    let central = |p: i32| pairwise_sum(&xs.iter().map(|x| (x - mean.mean).powi(p)).collect::<Vec<_>>()) / n;
    let (m2, m3, m4) = (central(2), central(3), central(4));
    let variance = m2 * n / (n - 1.0);
    SampleMoments {
        mean,
        variance,
        variance_se: ((m4 - m2 * m2) / n).sqrt(),
        skewness: m3 / m2.powf(1.5),
        skewness_se: (6.0 / n).sqrt(),
        excess_kurtosis: m4 / (m2 * m2) - 3.0,
        kurtosis_se: (24.0 / n).sqrt(),
    }
}

/// Runs `f(i)` for replication indices `0..paths`, results in index order.
pub fn replicate<T, F>(paths: usize, exec: Exec, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    par::map_indexed(paths, exec, |i| f(i as u64))
}
