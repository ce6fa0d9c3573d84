//! Stationary autocovariance `c(t) = σ² ∫_0^∞ r(s) r(s+t) ds` (and the sum
//! `σ² Σ r_n r_{n+h}` in discrete time) from a finite resolvent table.
//!
//! Beyond the table `r` is replaced by the power law `C t^μ` fitted on the
//! last decade, so each value is the quadrature over the overlap plus
//!
//! ```text
//! ∫_{T-l}^{T} r(s) C (s+l)^μ ds + C² ∫_T^∞ s^μ (s+l)^μ ds
//! ```
//!
//! The last integral is summed from its binomial series in `l/T`, which is
//! why lags are capped at `T/2`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{fit_last_decade, fit_power_law, PowerLaw};
use crate::par::{self, Exec};
use crate::quad;
use crate::resolvent::ResolventGrid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum TailMethod {
    None,
    PowerLawExtrapolation { exponent: f64, coefficient: f64 },
}

impl TailMethod {
    fn power(&self) -> Option<PowerLaw> {
        match *self {
            TailMethod::None => None,
            TailMethod::PowerLawExtrapolation { exponent, coefficient } => Some(PowerLaw { coefficient, exponent }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceSeries {
    pub lags: Vec<f64>,
    pub c: Vec<f64>,
    /// Part of each `c` value contributed by the extrapolated tail.
    pub tail_correction: Vec<f64>,
    pub sigma: f64,
    pub tail_method: TailMethod,
    #[serde(rename = "truncation_T")]
    pub truncation_t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceSummary {
    pub sigma: f64,
    #[serde(rename = "truncation_T")]
    pub truncation_t: f64,
    /// Fitted decay exponent `μ` of the resolvent.
    pub fitted_exponent: Option<f64>,
    /// Decay exponent of `c` itself (fitted on the largest lags when there
    /// are enough of them, `2μ + 1` otherwise).
    pub c_exponent: Option<f64>,
    pub long_memory: Option<bool>,
}

impl CovarianceSeries {
    pub fn fitted_exponent(&self) -> Option<f64> {
        self.tail_method.power().map(|p| p.exponent)
    }

    pub fn c_exponent(&self) -> Option<f64> {
        let max_lag = self.lags.iter().copied().fold(0.0, f64::max);
        let window: Vec<(f64, f64)> = self
            .lags
            .iter()
            .zip(&self.c)
            .filter(|(&l, &c)| l > 0.0 && l >= max_lag / 10.0 && c > 0.0)
            .map(|(&l, &c)| (l, c))
            .collect();
        let distinct = window.iter().any(|&(l, _)| l != window[0].0);
        if window.len() >= 2 && distinct {
            if let Ok(fit) = fit_power_law(window) {
                return Some(fit.exponent);
            }
        }
        self.fitted_exponent().map(|mu| 2.0 * mu + 1.0)
    }

    /// `c` not integrable, judged from its decay exponent.
    pub fn long_memory(&self) -> Option<bool> {
        self.c_exponent().map(|e| e > -1.0)
    }

    pub fn summary(&self) -> CovarianceSummary {
        CovarianceSummary {
            sigma: self.sigma,
            truncation_t: self.truncation_t,
            fitted_exponent: self.fitted_exponent(),
            c_exponent: self.c_exponent(),
            long_memory: self.long_memory(),
        }
    }

    pub fn get(&self, lag: f64) -> Option<f64> {
        self.lags.iter().position(|&l| l == lag).map(|i| self.c[i])
    }
}

/// Fits the tail of `r` and rejects resolvents that are not square
/// integrable. A tail that has underflowed to zero needs no correction.
fn tail_method(r: &[f64], h: f64) -> Result<TailMethod> {
    let start = (r.len() - 1) / 10;
    if r[start.max(1)..].iter().all(|v| v.abs() < 1e-300) {
        return Ok(TailMethod::None);
    }
    let fit = fit_last_decade(r, h)?;
    if fit.exponent >= -0.5 {
        return Err(Error::NotSquareIntegrable { exponent: fit.exponent });
    }
    Ok(TailMethod::PowerLawExtrapolation {
        exponent: fit.exponent,
        coefficient: fit.coefficient,
    })
}

/// `∫_T^∞ s^μ (s+l)^μ ds` for `2μ + 1 < 0` and `0 ≤ l ≤ T/2`, from
/// `T^(2μ+1) Σ_n C(μ,n) (l/T)^n / (n - 2μ - 1)`.
pub fn power_overlap_tail(mu: f64, t: f64, lag: f64) -> f64 {
    let x = lag / t;
    let mut binom = 1.0;
    let mut xn = 1.0;
    let mut sum = 0.0;
    for n in 0..400 {
        let term = binom * xn / (n as f64 - 2.0 * mu - 1.0);
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            break;
        }
        binom *= (mu - n as f64) / (n as f64 + 1.0);
        xn *= x;
    }
    t.powf(2.0 * mu + 1.0) * sum
}

pub fn autocov_continuous(res: &ResolventGrid, sigma: f64, lags: &[f64]) -> Result<CovarianceSeries> {
    autocov_continuous_with(res, sigma, lags, Exec::default())
}

/// Lags must be grid points in `[0, T/2]`.
pub fn autocov_continuous_with(res: &ResolventGrid, sigma: f64, lags: &[f64], exec: Exec) -> Result<CovarianceSeries> {
    check_sigma(sigma)?;
    let grid = res.grid;
    let t_max = grid.t_max();
    let mut idx = Vec::with_capacity(lags.len());
    for &l in lags {
        if !(l >= 0.0) || l > 0.5 * t_max * (1.0 + 1e-12) {
            return Err(Error::Lag {
                lag: l,
                reason: format!("must lie in [0, T/2] = [0, {}]", 0.5 * t_max),
            });
        }
        let i = grid.index_of(l).ok_or_else(|| Error::Lag {
            lag: l,
            reason: format!("not a multiple of the step {}", grid.h),
        })?;
        idx.push(i);
    }
    let method = tail_method(&res.r, grid.h)?;
    let power = method.power();
    let r = &res.r;
    let n = r.len();
    let h = grid.h;
    let s2 = sigma * sigma;

    let parts = par::map_indexed(idx.len(), exec, |q| {
        let m = idx[q];
        let lag = grid.t(m);
        let overlap: Vec<f64> = (0..n - m).map(|i| r[i] * r[i + m]).collect();
        let body = quad::gregory(&overlap, h);
        let tail = match power {
            None => 0.0,
            Some(p) => {
                let straddle: Vec<f64> = (n - 1 - m..n).map(|i| r[i] * p.eval(grid.t(i) + lag)).collect();
                let mid = quad::gregory(&straddle, h);
                mid + p.coefficient * p.coefficient * power_overlap_tail(p.exponent, t_max, lag)
            }
        };
        (s2 * (body + tail), s2 * tail)
    });
    Ok(CovarianceSeries {
        lags: idx.iter().map(|&i| grid.t(i)).collect(),
        c: parts.iter().map(|p| p.0).collect(),
        tail_correction: parts.iter().map(|p| p.1).collect(),
        sigma,
        tail_method: method,
        truncation_t: t_max,
    })
}

pub fn autocov_discrete(r: &[f64], sigma: f64, lags: &[usize], m: usize) -> Result<CovarianceSeries> {
    autocov_discrete_with(r, sigma, lags, m, Exec::default())
}

/// Explicit sum `Σ_{n<M} r_n r_{n+h}` plus the tail `Σ_{n≥M} C² n^μ (n+h)^μ`
/// by Euler–Maclaurin (integral, half end value, first derivative term).
/// Needs `M + max(h) ≤ r.len()` and every `h ≤ M/2`.
pub fn autocov_discrete_with(r: &[f64], sigma: f64, lags: &[usize], m: usize, exec: Exec) -> Result<CovarianceSeries> {
    check_sigma(sigma)?;
    let max_lag = lags.iter().copied().max().unwrap_or(0);
    if m < 20 || m + max_lag > r.len() {
        return Err(Error::Grid(format!(
            "truncation M = {m} with max lag {max_lag} needs {} resolvent values, have {}",
            m + max_lag,
            r.len()
        )));
    }
    if let Some(&bad) = lags.iter().find(|&&l| 2 * l > m) {
        return Err(Error::Lag {
            lag: bad as f64,
            reason: format!("must not exceed M/2 = {}", m / 2),
        });
    }
    let method = tail_method(&r[..m], 1.0)?;
    let power = method.power();
    let s2 = sigma * sigma;
    let parts = par::map_indexed(lags.len(), exec, |q| {
        let lag = lags[q];
        let products: Vec<f64> = (0..m).map(|i| r[i] * r[i + lag]).collect();
        let body = par::pairwise_sum(&products);
        let tail = match power {
            None => 0.0,
            Some(p) => {
                let (c2, mu) = (p.coefficient * p.coefficient, p.exponent);
                let (x, l) = (m as f64, lag as f64);
                let f = c2 * x.powf(mu) * (x + l).powf(mu);
                let df = f * (mu / x + mu / (x + l));
                c2 * power_overlap_tail(mu, x, l) + 0.5 * f - df / 12.0
            }
        };
        (s2 * (body + tail), s2 * tail)
    });
    Ok(CovarianceSeries {
        lags: lags.iter().map(|&l| l as f64).collect(),
        c: parts.iter().map(|p| p.0).collect(),
        tail_correction: parts.iter().map(|p| p.1).collect(),
        sigma,
        tail_method: method,
        truncation_t: m as f64,
    })
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain {
            name: "sigma",
            value: sigma,
            domain: "(0, inf)",
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conv::ConvolutionMode;
    use crate::kernels::KernelSpec;
    use crate::resolvent::{solve_resolvent_discrete, solve_resolvent_ode, solve_resolvent_renewal, Grid, Scheme};
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn tabulated(h: f64, t_max: f64, f: impl Fn(f64) -> f64) -> ResolventGrid {
        let grid = Grid::with_horizon(h, t_max).unwrap();
        ResolventGrid {
            grid,
            r: (0..grid.n_points).map(|i| f(grid.t(i))).collect(),
            rho: None,
            scheme: Scheme::Renewal,
            log_convex: None,
        }
    }

    fn reference(h: f64, t_max: f64) -> ResolventGrid {
        solve_resolvent_renewal(
            &KernelSpec::critical_power_law(0.3),
            Grid::with_horizon(h, t_max).unwrap(),
            ConvolutionMode::fft(),
        )
        .unwrap()
    }

    #[test]
    fn exponential_resolvent_gives_ou_covariance() {
        let res = tabulated(0.01, 40.0, |t| (-t).exp());
        let c = autocov_continuous(&res, 1.0, &[0.0, 1.0, 5.0]).unwrap();
        assert!((c.c[0] - 0.5).abs() < 1e-4);
        assert!((c.c[1] - 0.183_940).abs() < 1e-4);
        assert_relative_eq!(c.c[2], (-5f64).exp() / 2.0, max_relative = 1e-4);
    }

    #[test]
    fn solved_ou_matches_closed_form() {
        let a = -2.0;
        let sigma = 1.5;
        let spec = KernelSpec::custom(Arc::new(|_| 0.0), Some(Arc::new(|_| 0.0)), a, "zero");
        let res = solve_resolvent_ode(&spec, Grid::with_horizon(0.005, 30.0).unwrap(), ConvolutionMode::fft()).unwrap();
        let lags = [0.0, 0.5, 2.0, 5.0];
        let c = autocov_continuous(&res, sigma, &lags).unwrap();
        for (l, v) in lags.iter().zip(&c.c) {
            let exact = sigma * sigma * (a * l).exp() / (2.0 * a.abs());
            assert_relative_eq!(*v, exact, max_relative = 1e-4);
        }
    }

    #[test]
    fn lag_zero_is_squared_norm() {
        let res = reference(0.01, 100.0);
        let c = autocov_continuous(&res, 1.3, &[0.0]).unwrap();
        let squares: Vec<f64> = res.r.iter().map(|v| v * v).collect();
        let simpson = 1.3 * 1.3 * quad::simpson(&squares, 0.01);
        assert_relative_eq!(c.c[0] - c.tail_correction[0], simpson, max_relative = 1e-6);
        assert!(c.tail_correction[0] > 0.0);
    }

    #[test]
    fn reference_covariance_is_positive_and_nonincreasing() {
        let res = reference(0.05, 400.0);
        let lags: Vec<f64> = (0..=200).map(|i| i as f64).collect();
        let c = autocov_continuous(&res, 1.0, &lags).unwrap();
        assert!(c.c.iter().all(|&v| v > 0.0));
        assert!(c.c.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(c.long_memory(), Some(true));
        let mu = c.fitted_exponent().unwrap();
        assert!((-0.75..-0.65).contains(&mu), "{mu}");
    }

    #[test]
    fn doubling_horizon_moves_less_than_correction() {
        let short = autocov_continuous(&reference(0.05, 200.0), 1.0, &[0.0, 10.0, 50.0]).unwrap();
        let long = autocov_continuous(&reference(0.05, 400.0), 1.0, &[0.0, 10.0, 50.0]).unwrap();
        for i in 0..3 {
            let change = (long.c[i] - short.c[i]).abs();
            assert!(
                change < short.tail_correction[i].abs(),
                "lag {}: {change:e} vs {:e}",
                short.lags[i],
                short.tail_correction[i]
            );
        }
    }

    #[test]
    fn toeplitz_spot_check() {
        let c = autocov_continuous(&reference(0.05, 400.0), 1.0, &[0.0, 20.0, 40.0]).unwrap();
        let (c0, c1, c2) = (c.c[0], c.c[1], c.c[2]);
        assert!(c0 >= 0.0 && c0 * c0 - c1 * c1 >= 0.0 && c0 * c0 - c2 * c2 >= 0.0 && c0 * c0 - c1 * c1 >= 0.0);
        let det = c0 * (c0 * c0 - c1 * c1) - c1 * (c1 * c0 - c1 * c2) + c2 * (c1 * c1 - c0 * c2);
        assert!(det >= 0.0);
    }

    #[test]
    fn lag_order_does_not_matter() {
        let res = reference(0.05, 200.0);
        let a = autocov_continuous(&res, 1.0, &[0.0, 7.5]).unwrap();
        let b = autocov_continuous(&res, 1.0, &[7.5, 0.0]).unwrap();
        assert_eq!(a.c[0], b.c[1]);
        assert_eq!(a.c[1], b.c[0]);
    }

    #[test]
    fn sequential_and_parallel_agree_bitwise() {
        let res = reference(0.05, 200.0);
        let lags: Vec<f64> = (0..40).map(|i| i as f64 * 2.5).collect();
        let a = autocov_continuous_with(&res, 1.0, &lags, Exec::Sequential).unwrap();
        let b = autocov_continuous_with(&res, 1.0, &lags, Exec::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn admissibility_errors() {
        let res = reference(0.05, 100.0);
        assert!(matches!(autocov_continuous(&res, 1.0, &[60.0]), Err(Error::Lag { .. })));
        assert!(matches!(autocov_continuous(&res, 1.0, &[1.01]), Err(Error::Lag { .. })));
        assert!(matches!(
            autocov_continuous(&res, 0.0, &[1.0]),
            Err(Error::Domain { .. })
        ));
        // r → 3/7 is not square integrable
        let spec = KernelSpec::power_law(1.5, -2.0 / 3.0);
        let res =
            solve_resolvent_renewal(&spec, Grid::with_horizon(0.05, 200.0).unwrap(), ConvolutionMode::fft()).unwrap();
        assert!(matches!(
            autocov_continuous(&res, 1.0, &[0.0]),
            Err(Error::NotSquareIntegrable { .. })
        ));
    }

    #[test]
    fn overlap_tail_series_matches_quadrature() {
        for (mu, t, l) in [
            (-0.7, 100.0, 0.0),
            (-0.7, 100.0, 50.0),
            (-0.9, 10.0, 3.0),
            (-2.5, 1000.0, 400.0),
        ] {
            let q = quad::integrate_to_infinity(|s: f64| s.powf(mu) * (s + l).powf(mu), t, 1e-13);
            assert_relative_eq!(power_overlap_tail(mu, t, l), q, max_relative = 1e-10);
        }
    }

    #[test]
    fn discrete_geometric() {
        let r: Vec<f64> = (0..200).map(|n| 0.5f64.powi(n)).collect();
        let c = autocov_discrete(&r, 1.0, &[0, 1], 100).unwrap();
        assert_relative_eq!(c.c[0], 4.0 / 3.0, max_relative = 1e-14);
        assert_relative_eq!(c.c[1], 2.0 / 3.0, max_relative = 1e-14);
        assert_eq!(c.long_memory(), Some(false));
    }

    #[test]
    fn discrete_reference_matches_spectral_oracle() {
        // (1/π) ∫_0^π |R(e^{iθ})|² cos(hθ) dθ with R(z) = 1/((1-z)(1+Li_0.3(z)))
        let oracle = [(0usize, 1.140_625_203_8), (1, 0.118_262_163_4), (10, 0.134_750_881_4)];
        let spec = KernelSpec::discrete_power_law(0.3, 1.0, -1.0);
        let m = 1 << 16;
        let kernel = spec.discrete_kernel(m + 16).unwrap();
        let r = solve_resolvent_discrete(&kernel, -1.0, m + 16, ConvolutionMode::fft());
        let lags: Vec<usize> = oracle.iter().map(|o| o.0).collect();
        let c = autocov_discrete(&r, 1.0, &lags, m).unwrap();
        for ((_, want), got) in oracle.iter().zip(&c.c) {
            assert_relative_eq!(*got, *want, max_relative = 1e-3);
        }
        // the uncorrected partial sum is far off
        let raw = c.c[2] - c.tail_correction[2];
        assert!((raw - oracle[2].1).abs() / oracle[2].1 > 5e-3);
    }

    #[test]
    fn discrete_truncation_errors() {
        let r: Vec<f64> = (0..100).map(|n| 0.5f64.powi(n)).collect();
        assert!(matches!(autocov_discrete(&r, 1.0, &[10], 95), Err(Error::Grid(_))));
        assert!(matches!(autocov_discrete(&r, 1.0, &[30], 50), Err(Error::Lag { .. })));
    }
}
