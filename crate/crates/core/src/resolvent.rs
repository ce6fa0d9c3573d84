//! Resolvent `r` of `r'(t) = a r(t) + ∫_0^t k(t-s) r(s) ds`, `r(0) = 1`, and
//! its discrete twin `r_{n+1} - r_n = a r_n + Σ_{j=1}^n k_j r_{n-j}`.
//!
//! Two continuous schemes are provided. In the critical regime
//! (`a + ∫k = 0`) the equation integrates once to the renewal form
//! `r(t) + ∫_0^t λ(t-s) r(s) ds = 1`, which is the primary scheme; the
//! implicit trapezoidal integro-ODE scheme works in every regime and serves
//! as its oracle.

use serde::{Deserialize, Serialize};

use crate::conv::{convolve, relaxed_convolution, ConvolutionMode};
use crate::error::{Error, Result};
use crate::kernels::{midpoint_log_convexity, DiscreteKernel, KernelSpec, Regime, TimeMode};
use crate::quad;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub h: f64,
    pub n_points: usize,
}

impl Grid {
    pub fn new(h: f64, n_points: usize) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Grid(format!("step must be positive, got {h}")));
        }
        if n_points < 2 {
            return Err(Error::Grid(format!("need at least 2 points, got {n_points}")));
        }
        Ok(Grid { h, n_points })
    }

    /// Grid on `[0, t_max]`; `t_max` is rounded to a whole number of steps.
    pub fn with_horizon(h: f64, t_max: f64) -> Result<Self> {
        if !(t_max > 0.0) {
            return Err(Error::Grid(format!("horizon must be positive, got {t_max}")));
        }
        Self::new(h, (t_max / h).round() as usize + 1)
    }

    pub fn t_max(&self) -> f64 {
        self.h * (self.n_points - 1) as f64
    }

    pub fn t(&self, i: usize) -> f64 {
        self.h * i as f64
    }

    /// Index of `t` if it lies on the grid (to 1e-9 of a step).
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let x = t / self.h;
        let i = x.round();
        ((x - i).abs() < 1e-9 && i >= 0.0 && (i as usize) < self.n_points).then_some(i as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Renewal,
    #[serde(alias = "integroode")]
    Ode,
    Discrete,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolventGrid {
    pub grid: Grid,
    pub r: Vec<f64>,
    /// `ρ = -r'`.
    pub rho: Option<Vec<f64>>,
    pub scheme: Scheme,
    /// Whether `λ` passed the midpoint log-convexity check on the grid. When
    /// it did not, monotonicity and `[0,1]` bounds are not expected.
    pub log_convex: Option<bool>,
}

impl ResolventGrid {
    pub fn at(&self, t: f64) -> Option<f64> {
        self.grid.index_of(t).map(|i| self.r[i])
    }

    /// Linear interpolation inside the grid.
    pub fn interpolate(&self, t: f64) -> f64 {
        let x = (t / self.grid.h).clamp(0.0, (self.grid.n_points - 1) as f64);
        let i = (x.floor() as usize).min(self.grid.n_points - 2);
        let f = x - i as f64;
        self.r[i] * (1.0 - f) + self.r[i + 1] * f
    }

    pub fn is_nonincreasing(&self, slack: f64) -> bool {
        self.r.windows(2).all(|w| w[1] <= w[0] + slack)
    }

    pub fn within_unit_interval(&self, slack: f64) -> bool {
        self.r.iter().all(|&v| v >= -slack && v <= 1.0 + slack)
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.grid.n_points).map(move |i| self.grid.t(i))
    }
}

fn require_continuous(spec: &KernelSpec, op: &'static str) -> Result<()> {
    if spec.mode != TimeMode::Continuous {
        return Err(Error::Config(format!("{op} needs a continuous kernel")));
    }
    Ok(())
}

fn require_critical(spec: &KernelSpec, op: &'static str) -> Result<()> {
    let class = spec.classify_regime()?;
    if class.regime != Regime::Critical {
        return Err(Error::Regime {
            op,
            required: Regime::Critical,
            actual: class.regime,
            mass_gap: class.mass_gap,
        });
    }
    Ok(())
}

fn tabulate_tail(spec: &KernelSpec, grid: &Grid) -> Result<Vec<f64>> {
    (0..grid.n_points).map(|i| spec.tail_integral(grid.t(i))).collect()
}

/// Trapezoidal solution of the renewal form. Each step solves
/// `r_i (1 + hλ_0/2) = 1 - h (λ_i r_0/2 + Σ_{0<j<i} λ_{i-j} r_j)`.
/// `ρ` is the backward difference, with `ρ_0 = λ(0)`.
pub fn solve_resolvent_renewal(spec: &KernelSpec, grid: Grid, mode: ConvolutionMode) -> Result<ResolventGrid> {
    require_continuous(spec, "renewal scheme")?;
    require_critical(spec, "renewal scheme")?;
    let lambda = tabulate_tail(spec, &grid)?;
    let h = grid.h;
    let diag = 1.0 + 0.5 * h * lambda[0];
    if !(diag > 0.0) {
        return Err(Error::Grid(format!(
            "renewal diagonal 1 + h λ(0)/2 = {diag} is not positive"
        )));
    }
    let mut r = vec![0.0; grid.n_points];
    relaxed_convolution(&lambda, grid.n_points, mode, |i, y| {
        if i == 0 {
            r[0] = 1.0;
            0.5
        } else {
            r[i] = (1.0 - h * y) / diag;
            r[i]
        }
    });
    let mut rho = Vec::with_capacity(grid.n_points);
    rho.push(lambda[0]);
    rho.extend(r.windows(2).map(|w| (w[0] - w[1]) / h));
    let log_convex = midpoint_log_convexity(&lambda, 1e-12).passed;
    Ok(ResolventGrid {
        grid,
        r,
        rho: Some(rho),
        scheme: Scheme::Renewal,
        log_convex: Some(log_convex),
    })
}

/// Implicit trapezoidal integro-ODE scheme with trapezoidal memory
/// quadrature (the two-stage Lobatto/Pouzet construction). Second order;
/// valid in every regime. `ρ` is `-r'` as given by the right-hand side.
pub fn solve_resolvent_ode(spec: &KernelSpec, grid: Grid, mode: ConvolutionMode) -> Result<ResolventGrid> {
    require_continuous(spec, "integro-ODE scheme")?;
    let h = grid.h;
    let a = spec.a;
    let k: Vec<f64> = (0..grid.n_points)
        .map(|i| spec.eval(grid.t(i)))
        .collect::<Result<_>>()?;
    let implicit = a + 0.5 * h * k[0];
    let diag = 1.0 - 0.5 * h * implicit;
    if !(diag > 0.0) {
        return Err(Error::Grid(format!(
            "step {h} too large: implicit diagonal {diag} is not positive"
        )));
    }
    let mut r = vec![0.0; grid.n_points];
    let mut f = vec![0.0; grid.n_points];
    relaxed_convolution(&k, grid.n_points, mode, |i, y| {
        if i == 0 {
            r[0] = 1.0;
            f[0] = a;
            return 0.5;
        }
        let memory = h * y;
        r[i] = (r[i - 1] + 0.5 * h * (f[i - 1] + memory)) / diag;
        f[i] = implicit * r[i] + memory;
        r[i]
    });
    let log_convex = spec
        .check_log_convexity(&(0..grid.n_points).map(|i| grid.t(i)).collect::<Vec<_>>())
        .map(|c| c.passed)
        .ok();
    Ok(ResolventGrid {
        grid,
        r,
        rho: Some(f.into_iter().map(|v| -v).collect()),
        scheme: Scheme::Ode,
        log_convex,
    })
}

/// Forward recurrence `r_{n+1} = (1+a) r_n + Σ_{j=1}^n k_j r_{n-j}`, `r_0 = 1`.
/// Returns `r_0, …, r_{n-1}`.
pub fn solve_resolvent_discrete(kernel: &DiscreteKernel, a: f64, n: usize, mode: ConvolutionMode) -> Vec<f64> {
    let w = kernel.weights(n);
    // y_i = Σ_{j<i} k_{i-j} r_j feeds r_{i+1}; the step sees y_i before r_i is
    // fixed, so carry y_{i-1} and r_{i-1} forward.
    let (mut last_r, mut last_y) = (0.0, 0.0);
    relaxed_convolution(&w, n, mode, |i, y| {
        let r = if i == 0 { 1.0 } else { (1.0 + a) * last_r + last_y };
        last_r = r;
        last_y = y;
        r
    })
}

/// Worst deviation of the renewal identity, evaluated with composite
/// Simpson (independent of the solver's trapezoid).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub max_abs: f64,
    pub at_t: f64,
}

/// Checks `r(t) + ∫_0^t λ(t-s) r(s) ds = 1` on every grid point (or on an
/// evenly strided subset for grids above 20 001 points).
pub fn renewal_residual(res: &ResolventGrid, spec: &KernelSpec) -> Result<Residual> {
    let n = res.grid.n_points;
    let stride = if n <= 20_001 { 1 } else { n.div_ceil(2_000) };
    renewal_residual_strided(res, spec, stride)
}

pub fn renewal_residual_strided(res: &ResolventGrid, spec: &KernelSpec, stride: usize) -> Result<Residual> {
    require_critical(spec, "renewal residual")?;
    let lambda = tabulate_tail(spec, &res.grid)?;
    let h = res.grid.h;
    let mut worst = Residual {
        max_abs: 0.0,
        at_t: 0.0,
    };
    let mut buf = Vec::with_capacity(res.grid.n_points);
    let mut i = 0;
    while i < res.grid.n_points {
        buf.clear();
        buf.extend((0..=i).map(|j| lambda[i - j] * res.r[j]));
        let dev = (res.r[i] + quad::simpson(&buf, h) - 1.0).abs();
        if dev > worst.max_abs {
            worst = Residual {
                max_abs: dev,
                at_t: res.grid.t(i),
            };
        }
        i += stride.max(1);
    }
    Ok(worst)
}

/// Discrete renewal identity `a_n = r_n + Σ_{j=0}^{n-1} r_j λ_{n-j} = 1`
/// (critical kernels). Returns `max_n |a_n - 1|`.
pub fn discrete_renewal_identity(r: &[f64], kernel: &DiscreteKernel, mode: ConvolutionMode) -> f64 {
    let n = r.len();
    if n == 0 {
        return 0.0;
    }
    let mut w = vec![0.0; n];
    let avail = n.min(kernel.k.len() + 2);
    let lam = kernel.tail_values(avail - 1);
    w[1..avail].copy_from_slice(&lam);
    let hist = convolve(r, &w, n, mode);
    r.iter()
        .zip(&hist)
        .take(avail)
        .fold(0.0f64, |m, (rv, hv)| m.max((rv + hv - 1.0).abs()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaReport {
    pub all_nonnegative: bool,
    pub first_negative: Option<usize>,
    pub min_delta: f64,
    /// Sup-norm gap between `Δ_n = r_{n-1} - r_n` and the tail recurrence,
    /// relative to `max |Δ_n|`.
    pub max_disagreement: f64,
    /// `max |a_n - 1|`.
    pub identity_max_dev: f64,
}

/// Computes `Δ_n = -(r_n - r_{n-1})` from the resolvent and from
/// `Δ_n = λ_n - Σ_{j=1}^{n-1} λ_{n-j} Δ_j`, for `1 ≤ n < len`.
pub fn delta_recurrence_check(kernel: &DiscreteKernel, a: f64, len: usize, mode: ConvolutionMode) -> DeltaReport {
    let len = len.min(kernel.k.len() + 1);
    let r = solve_resolvent_discrete(kernel, a, len, mode);
    let mut lambda = vec![0.0; len];
    lambda[1..].copy_from_slice(&kernel.tail_values(len - 1));
    let rec = relaxed_convolution(&lambda, len, mode, |i, y| if i == 0 { 0.0 } else { lambda[i] - y });

    let mut report = DeltaReport {
        all_nonnegative: true,
        first_negative: None,
        min_delta: f64::INFINITY,
        max_disagreement: 0.0,
        identity_max_dev: discrete_renewal_identity(&r, kernel, mode),
    };
    let mut scale = 0.0f64;
    let mut gap = 0.0f64;
    for n in 1..len {
        let direct = r[n - 1] - r[n];
        scale = scale.max(direct.abs());
        gap = gap.max((direct - rec[n]).abs());
        report.min_delta = report.min_delta.min(direct.min(rec[n]));
        if (direct < 0.0 || rec[n] < 0.0) && report.first_negative.is_none() {
            report.first_negative = Some(n);
            report.all_nonnegative = false;
        }
    }
    report.max_disagreement = if scale > 0.0 { gap / scale } else { gap };
    report
}

/// `lim r(t) = (1 + ∫_0^∞ s k(s) ds)^(-1)` for critical kernels with a
/// finite first moment.
pub fn limiting_value(spec: &KernelSpec) -> Result<f64> {
    require_critical(spec, "limiting value")?;
    match spec.first_moment()? {
        Some(m) => Ok(1.0 / (1.0 + m)),
        None => Err(Error::InfiniteMoment),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conv::sup_relative_distance;
    use approx::assert_relative_eq;

    fn reference() -> KernelSpec {
        KernelSpec::critical_power_law(0.3)
    }

    #[test]
    fn grid_validation() {
        assert!(Grid::new(0.0, 10).is_err());
        assert!(Grid::new(0.1, 1).is_err());
        let g = Grid::with_horizon(0.01, 100.0).unwrap();
        assert_eq!(g.n_points, 10_001);
        assert_relative_eq!(g.t_max(), 100.0, max_relative = 1e-12);
        assert_eq!(g.index_of(0.5), Some(50));
        assert_eq!(g.index_of(0.505), None);
    }

    #[test]
    fn renewal_starts_at_one_and_stays_monotone() {
        let res = solve_resolvent_renewal(
            &reference(),
            Grid::with_horizon(0.01, 100.0).unwrap(),
            ConvolutionMode::fft(),
        )
        .unwrap();
        assert_eq!(res.r[0], 1.0);
        assert!(res.is_nonincreasing(1e-9));
        assert!(res.within_unit_interval(1e-9));
        assert_eq!(res.log_convex, Some(true));
        let rho = res.rho.as_ref().unwrap();
        assert_relative_eq!(rho[0], 1.0 / 0.3, max_relative = 1e-15);
        // 0 ≤ ρ ≤ λ
        for (i, &p) in rho.iter().enumerate().skip(1) {
            assert!(p >= -1e-9);
            assert!(p <= reference().tail_integral(res.grid.t(i - 1)).unwrap() + 1e-9);
        }
    }

    #[test]
    fn renewal_rejects_non_critical() {
        let spec = KernelSpec::power_law(1.5, 1.0);
        let err = solve_resolvent_renewal(&spec, Grid::with_horizon(0.1, 1.0).unwrap(), ConvolutionMode::Naive);
        assert!(matches!(
            err,
            Err(Error::Regime {
                actual: Regime::Unstable,
                ..
            })
        ));
    }

    #[test]
    fn renewal_residual_is_second_order() {
        let spec = reference();
        let coarse =
            solve_resolvent_renewal(&spec, Grid::with_horizon(0.02, 20.0).unwrap(), ConvolutionMode::Naive).unwrap();
        let fine =
            solve_resolvent_renewal(&spec, Grid::with_horizon(0.01, 20.0).unwrap(), ConvolutionMode::Naive).unwrap();
        let rc = renewal_residual(&coarse, &spec).unwrap().max_abs;
        let rf = renewal_residual(&fine, &spec).unwrap().max_abs;
        assert!(rf <= 1e-4, "{rf:e}");
        let ratio = rc / rf;
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn ode_exponential_decay() {
        let spec = KernelSpec::custom(
            std::sync::Arc::new(|_| 0.0),
            Some(std::sync::Arc::new(|_| 0.0)),
            -1.0,
            "zero",
        );
        let res = solve_resolvent_ode(&spec, Grid::with_horizon(0.01, 2.0).unwrap(), ConvolutionMode::Naive).unwrap();
        assert!((res.at(1.0).unwrap() - (-1f64).exp()).abs() < 1e-5);
        assert!((res.at(1.0).unwrap() - 0.367879).abs() < 1e-5);
    }

    #[test]
    fn ode_and_renewal_agree() {
        let spec = reference();
        let grid = Grid::with_horizon(0.01, 50.0).unwrap();
        let a = solve_resolvent_renewal(&spec, grid, ConvolutionMode::fft()).unwrap();
        let b = solve_resolvent_ode(&spec, grid, ConvolutionMode::fft()).unwrap();
        let d = a.r.iter().zip(&b.r).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        assert!(d <= 1e-3, "{d:e}");
        let res = renewal_residual(&b, &spec).unwrap().max_abs;
        assert!(res <= 1e-3, "{res:e}");
    }

    #[test]
    fn ode_unstable_grows() {
        let spec = KernelSpec::power_law(1.5, 1.0);
        let res = solve_resolvent_ode(&spec, Grid::with_horizon(0.01, 10.0).unwrap(), ConvolutionMode::fft()).unwrap();
        let r10 = res.at(10.0).unwrap();
        assert!(r10 > 100.0, "{r10}");
        // growth is faster than e^t since the characteristic root exceeds a = 1
        assert!(r10 > 1f64.exp().powi(10));
    }

    #[test]
    fn fft_and_naive_ode_agree() {
        let spec = KernelSpec::power_law(1.5, -2.0);
        let grid = Grid::with_horizon(0.05, 500.0).unwrap();
        let a = solve_resolvent_ode(&spec, grid, ConvolutionMode::Naive).unwrap();
        let b = solve_resolvent_ode(&spec, grid, ConvolutionMode::Fft { block: 256 }).unwrap();
        assert!(sup_relative_distance(&b.r, &a.r) < 1e-12);
    }

    #[test]
    fn discrete_hand_evaluation() {
        let k = DiscreteKernel::finite(vec![0.5]);
        let r = solve_resolvent_discrete(&k, -0.5, 5, ConvolutionMode::Naive);
        assert_eq!(r[0], 1.0);
        assert_eq!(r[1], 0.5);
        assert_eq!(r[2], 0.75);
        // r_3 = r_2 + a r_2 + k_1 r_1
        assert_eq!(r[3], 0.75 - 0.375 + 0.25);
    }

    #[test]
    fn discrete_geometric() {
        let k = DiscreteKernel::finite(vec![0.0; 10]);
        let r = solve_resolvent_discrete(&k, -0.5, 30, ConvolutionMode::Naive);
        for (n, v) in r.iter().enumerate() {
            assert_eq!(*v, 0.5f64.powi(n as i32));
        }
    }

    #[test]
    fn discrete_kaluza_tail_gives_monotone_resolvent() {
        // λ_n = (n+1)^-0.3 is log-convex including λ_0 = 1
        let n = 20_000;
        let lam: Vec<f64> = (1..=n + 1).map(|j| (j as f64 + 1.0).powf(-0.3)).collect();
        let kernel = DiscreteKernel::from_tail(&lam);
        let r = solve_resolvent_discrete(&kernel, -lam[0], n, ConvolutionMode::fft());
        assert!(r.windows(2).all(|w| w[1] <= w[0] + 1e-14));
        let rep = delta_recurrence_check(&kernel, -lam[0], n, ConvolutionMode::fft());
        assert!(rep.all_nonnegative, "{rep:?}");
        assert!(rep.max_disagreement < 1e-12);
        assert!(rep.identity_max_dev < 1e-12);
    }

    #[test]
    fn delta_check_geometric_tail() {
        let lam: Vec<f64> = (1..=60).map(|j| 0.5f64.powi(j)).collect();
        let kernel = DiscreteKernel::from_tail(&lam);
        let rep = delta_recurrence_check(&kernel, -lam[0], 59, ConvolutionMode::Naive);
        assert!(rep.all_nonnegative);
        assert!(rep.max_disagreement < 1e-12);
    }

    #[test]
    fn delta_check_non_kaluza_still_agrees() {
        let kernel = DiscreteKernel::from_tail(&[1.0, 0.5, 0.0]);
        let rep = delta_recurrence_check(&kernel, -1.0, 3, ConvolutionMode::Naive);
        assert!(rep.max_disagreement < 1e-12);
        assert!(rep.identity_max_dev < 1e-12);
    }

    #[test]
    fn discrete_fft_matches_naive() {
        let spec = KernelSpec::discrete_power_law(0.3, 1.0, -1.0);
        let kernel = spec.discrete_kernel(30_000).unwrap();
        let a = solve_resolvent_discrete(&kernel, -1.0, 30_000, ConvolutionMode::Naive);
        let b = solve_resolvent_discrete(&kernel, -1.0, 30_000, ConvolutionMode::fft());
        assert!(sup_relative_distance(&b, &a) < 1e-12);
    }

    #[test]
    fn limiting_values() {
        let spec = KernelSpec::power_law(1.5, -2.0 / 3.0);
        assert_relative_eq!(limiting_value(&spec).unwrap(), 3.0 / 7.0, max_relative = 1e-14);
        assert!(matches!(limiting_value(&reference()), Err(Error::InfiniteMoment)));
    }

    #[test]
    fn limit_approach_is_monotone_in_horizon() {
        let spec = KernelSpec::power_law(1.5, -2.0 / 3.0);
        let res =
            solve_resolvent_renewal(&spec, Grid::with_horizon(0.05, 1000.0).unwrap(), ConvolutionMode::fft()).unwrap();
        let errs: Vec<f64> = [100.0, 300.0, 1000.0]
            .iter()
            .map(|&t| (res.at(t).unwrap() - 3.0 / 7.0).abs())
            .collect();
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
    }
}
