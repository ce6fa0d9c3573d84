//! Memory kernels `k`, their tail integrals `λ(t) = ∫_t^∞ k`, the structural
//! checks (log-convexity, Kaluza) and regime classification.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::PowerLaw;
use crate::quad;

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeMode {
    Continuous,
    Discrete,
}

/// Uniformly sampled kernel. For discrete kernels `values[i] = k_{i+1}` and
/// `step` is ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct Tabulated {
    pub step: f64,
    pub values: Vec<f64>,
    /// Exponent `e` of the power tail `k(t) ≈ C t^e` used beyond the table.
    pub tail_exponent: Option<f64>,
    /// Regular-variation index of `λ`, stated by the caller.
    pub alpha: Option<f64>,
}

#[derive(Clone)]
pub struct Custom {
    pub kernel: ScalarFn,
    /// Closed-form tail integral, if known. Otherwise computed by quadrature.
    pub tail: Option<ScalarFn>,
    pub alpha: Option<f64>,
    pub description: String,
}

impl fmt::Debug for Custom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Custom")
            .field("description", &self.description)
            .field("alpha", &self.alpha)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub enum KernelFamily {
    /// Continuous: `k(t) = scale·(1+t)^(-α-1)`.
    /// Discrete: tail `λ_n = scale·n^(-α)`, `k_n = λ_n - λ_{n+1}`.
    PowerLaw {
        alpha: f64,
        scale: f64,
    },
    Tabulated(Tabulated),
    Custom(Custom),
}

/// The pair `(a, k)` that defines the equation.
#[derive(Debug, Clone)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub a: f64,
    pub mode: TimeMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    Critical,
    Subexponential,
    Unstable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeClass {
    pub regime: Regime,
    /// `a + ∫k` (or `a + Σ k_j`).
    pub mass_gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvexityReport {
    pub passed: bool,
    pub worst_violation: f64,
    /// Grid index of the worst violation (middle point of the triple).
    pub worst_index: Option<usize>,
}

/// Slowly varying factor `L` with `λ(t) = L(t) t^(-α)`.
#[derive(Clone)]
pub struct SlowVariation {
    pub eval: ScalarFn,
    pub description: String,
    pub alpha: f64,
}

impl fmt::Debug for SlowVariation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SlowVariation")
            .field("description", &self.description)
            .field("alpha", &self.alpha)
            .finish_non_exhaustive()
    }
}

impl SlowVariation {
    pub fn at(&self, t: f64) -> f64 {
        (self.eval)(t)
    }
}

impl KernelSpec {
    pub fn power_law(alpha: f64, a: f64) -> Self {
        Self::power_law_scaled(alpha, 1.0, a)
    }

    pub fn power_law_scaled(alpha: f64, scale: f64, a: f64) -> Self {
        KernelSpec {
            family: KernelFamily::PowerLaw { alpha, scale },
            a,
            mode: TimeMode::Continuous,
        }
    }

    /// Critical continuous power-law kernel: `a = -scale/α`.
    pub fn critical_power_law(alpha: f64) -> Self {
        Self::power_law(alpha, -1.0 / alpha)
    }

    pub fn discrete_power_law(alpha: f64, scale: f64, a: f64) -> Self {
        KernelSpec {
            family: KernelFamily::PowerLaw { alpha, scale },
            a,
            mode: TimeMode::Discrete,
        }
    }

    pub fn custom(kernel: ScalarFn, tail: Option<ScalarFn>, a: f64, description: impl Into<String>) -> Self {
        KernelSpec {
            family: KernelFamily::Custom(Custom {
                kernel,
                tail,
                alpha: None,
                description: description.into(),
            }),
            a,
            mode: TimeMode::Continuous,
        }
    }

    /// Regular-variation index of `λ`, when known.
    pub fn alpha(&self) -> Option<f64> {
        match &self.family {
            KernelFamily::PowerLaw { alpha, .. } => Some(*alpha),
            KernelFamily::Tabulated(t) => t.alpha,
            KernelFamily::Custom(c) => c.alpha,
        }
    }

    /// `k(t)`; discrete kernels are evaluated at `n = round(t) ≥ 1`.
    pub fn eval(&self, t: f64) -> Result<f64> {
        match self.mode {
            TimeMode::Continuous => self.eval_continuous(t),
            TimeMode::Discrete => self.eval_discrete(t.round() as usize),
        }
    }

    fn eval_continuous(&self, t: f64) -> Result<f64> {
        if t < 0.0 {
            return Err(Error::Domain {
                name: "t",
                value: t,
                domain: "[0, inf)",
            });
        }
        match &self.family {
            KernelFamily::PowerLaw { alpha, scale } => Ok(scale * (1.0 + t).powf(-alpha - 1.0)),
            KernelFamily::Tabulated(tab) => tab.eval(t),
            KernelFamily::Custom(c) => Ok((c.kernel)(t)),
        }
    }

    /// `k_n` for `n ≥ 1`.
    pub fn eval_discrete(&self, n: usize) -> Result<f64> {
        if n == 0 {
            return Err(Error::Domain {
                name: "n",
                value: 0.0,
                domain: "n >= 1",
            });
        }
        match &self.family {
            KernelFamily::PowerLaw { alpha, scale } => {
                let n = n as f64;
                Ok(scale * (n.powf(-alpha) - (n + 1.0).powf(-alpha)))
            }
            KernelFamily::Tabulated(tab) => tab.eval_index(n),
            KernelFamily::Custom(c) => Ok((c.kernel)(n as f64)),
        }
    }

    /// `λ(t) = ∫_t^∞ k(s) ds`, or `λ_n = Σ_{j≥n} k_j` in discrete mode.
    pub fn tail_integral(&self, t: f64) -> Result<f64> {
        match self.mode {
            TimeMode::Continuous => self.tail_continuous(t),
            TimeMode::Discrete => self.tail_discrete(t.round().max(1.0) as usize),
        }
    }

    fn tail_continuous(&self, t: f64) -> Result<f64> {
        match &self.family {
            KernelFamily::PowerLaw { alpha, scale } => Ok(scale / (alpha * (1.0 + t).powf(*alpha))),
            KernelFamily::Tabulated(tab) => tab.tail_integral(t),
            KernelFamily::Custom(c) => match &c.tail {
                Some(tail) => Ok(tail(t)),
                None => {
                    let k = &c.kernel;
                    Ok(quad::integrate_to_infinity(|s| k(s), t, 1e-13))
                }
            },
        }
    }

    fn tail_discrete(&self, n: usize) -> Result<f64> {
        match &self.family {
            KernelFamily::PowerLaw { alpha, scale } => Ok(scale * (n as f64).powf(-alpha)),
            KernelFamily::Tabulated(tab) => tab.tail_sum(n),
            KernelFamily::Custom(c) => match &c.tail {
                Some(tail) => Ok(tail(n as f64)),
                None => Err(Error::Config(
                    "discrete custom kernel needs a closed-form tail sum".into(),
                )),
            },
        }
    }

    /// `∫_0^∞ k` (or `Σ_{j≥1} k_j`).
    pub fn total_mass(&self) -> Result<f64> {
        match self.mode {
            TimeMode::Continuous => self.tail_continuous(0.0),
            TimeMode::Discrete => self.tail_discrete(1),
        }
    }

    /// `∫_0^∞ s k(s) ds`; `None` means infinite.
    pub fn first_moment(&self) -> Result<Option<f64>> {
        match (&self.family, self.mode) {
            (KernelFamily::PowerLaw { alpha, scale }, TimeMode::Continuous) => {
                if *alpha <= 1.0 {
                    Ok(None)
                } else {
                    // ∫_1^∞ (u^-α - u^-α-1) du
                    Ok(Some(scale * (1.0 / (alpha - 1.0) - 1.0 / alpha)))
                }
            }
            (KernelFamily::PowerLaw { alpha, scale }, TimeMode::Discrete) => {
                if *alpha <= 1.0 {
                    Ok(None)
                } else {
                    // Σ n k_n = Σ_{n≥1} λ_n
                    Ok(Some(scale * hurwitz_zeta(*alpha, 1.0)))
                }
            }
            (KernelFamily::Tabulated(tab), mode) => tab.first_moment(mode),
            (KernelFamily::Custom(c), TimeMode::Continuous) => {
                if matches!(c.alpha, Some(a) if a <= 1.0) {
                    return Ok(None);
                }
                let k = &c.kernel;
                let v = quad::integrate_to_infinity(|s| s * k(s), 0.0, 1e-12);
                Ok(v.is_finite().then_some(v))
            }
            (KernelFamily::Custom(_), TimeMode::Discrete) => Err(Error::Config(
                "first moment of a discrete custom kernel is not supported".into(),
            )),
        }
    }

    /// Default tolerance `1e-10 (|a| + mass)`.
    pub fn classify_regime(&self) -> Result<RegimeClass> {
        let mass = self.total_mass()?;
        self.classify_regime_with(1e-10 * (self.a.abs() + mass))
    }

    pub fn classify_regime_with(&self, tol: f64) -> Result<RegimeClass> {
        let mass_gap = self.a + self.total_mass()?;
        let regime = if mass_gap.abs() <= tol {
            Regime::Critical
        } else if mass_gap < 0.0 {
            Regime::Subexponential
        } else {
            Regime::Unstable
        };
        Ok(RegimeClass { regime, mass_gap })
    }

    /// Log-convexity of `λ` sampled on a uniform grid.
    pub fn check_log_convexity(&self, grid: &[f64]) -> Result<ConvexityReport> {
        let lambda: Vec<f64> = grid.iter().map(|&t| self.tail_integral(t)).collect::<Result<_>>()?;
        Ok(midpoint_log_convexity(&lambda, 0.0))
    }

    /// Discrete kernel `k_1..k_n` plus the exact mass beyond `n`.
    pub fn discrete_kernel(&self, n: usize) -> Result<DiscreteKernel> {
        if self.mode != TimeMode::Discrete {
            return Err(Error::Config("discrete_kernel on a continuous kernel".into()));
        }
        let k = (1..=n).map(|j| self.eval_discrete(j)).collect::<Result<Vec<_>>>()?;
        let tail_mass = self.tail_discrete(n + 1)?;
        Ok(DiscreteKernel { k, tail_mass })
    }

    /// Key-value representation (`family`, `alpha`, `scale`, `a`, `mode`).
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        match &self.family {
            KernelFamily::PowerLaw { alpha, scale } => {
                out.push(("family".into(), "powerlaw".into()));
                out.push(("alpha".into(), format!("{alpha}")));
                out.push(("scale".into(), format!("{scale}")));
            }
            KernelFamily::Tabulated(t) => {
                out.push(("family".into(), "tabulated".into()));
                out.push(("step".into(), format!("{}", t.step)));
                if let Some(e) = t.tail_exponent {
                    out.push(("tail_exponent".into(), format!("{e}")));
                }
            }
            KernelFamily::Custom(c) => {
                out.push(("family".into(), "custom".into()));
                out.push(("description".into(), c.description.clone()));
            }
        }
        out.push(("a".into(), format!("{}", self.a)));
        let mode = match self.mode {
            TimeMode::Continuous => "continuous",
            TimeMode::Discrete => "discrete",
        };
        out.push(("mode".into(), mode.into()));
        out
    }

    /// `L(t) = λ(t) t^α`, with the closed form for power laws.
    pub fn slow_variation(&self) -> Result<SlowVariation> {
        let alpha = self
            .alpha()
            .ok_or_else(|| Error::Config("kernel has no stated regular-variation index".into()))?;
        let eval: ScalarFn = match (&self.family, self.mode) {
            (KernelFamily::PowerLaw { alpha, scale }, TimeMode::Continuous) => {
                let (alpha, scale) = (*alpha, *scale);
                Arc::new(move |t: f64| scale * t.powf(alpha) / (alpha * (1.0 + t).powf(alpha)))
            }
            (KernelFamily::PowerLaw { scale, .. }, TimeMode::Discrete) => {
                let scale = *scale;
                Arc::new(move |_t: f64| scale)
            }
            _ => {
                let spec = self.clone();
                Arc::new(move |t: f64| spec.tail_integral(t).unwrap_or(f64::NAN) * t.powf(alpha))
            }
        };
        Ok(SlowVariation {
            eval,
            description: format!("lambda(t) t^{alpha}"),
            alpha,
        })
    }
}

/// Materialized discrete kernel: `k[j-1] = k_j` for `j = 1..=k.len()` and the
/// summed mass of all later terms.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteKernel {
    pub k: Vec<f64>,
    pub tail_mass: f64,
}

impl DiscreteKernel {
    /// From a finite kernel with no mass beyond it.
    pub fn finite(k: Vec<f64>) -> Self {
        DiscreteKernel { k, tail_mass: 0.0 }
    }

    /// From tail values `lambda[n-1] = λ_n`, `n = 1..=K+1`.
    pub fn from_tail(lambda: &[f64]) -> Self {
        assert!(lambda.len() >= 2, "need at least two tail values");
        let k = lambda.windows(2).map(|w| w[0] - w[1]).collect();
        DiscreteKernel {
            k,
            tail_mass: *lambda.last().unwrap(),
        }
    }

    pub fn mass(&self) -> f64 {
        self.k.iter().sum::<f64>() + self.tail_mass
    }

    /// `λ_n` for `n = 1..=len` (index 0 holds `λ_1`); `len ≤ k.len() + 1`.
    pub fn tail_values(&self, len: usize) -> Vec<f64> {
        assert!(
            len <= self.k.len() + 1,
            "tail values beyond the stored kernel are unknown"
        );
        let mut lambda = vec![0.0; len];
        let mut acc = self.tail_mass;
        for n in (1..=self.k.len() + 1).rev() {
            if n <= self.k.len() {
                acc += self.k[n - 1];
            }
            if n <= len {
                lambda[n - 1] = acc;
            }
        }
        lambda
    }

    /// Kernel value `k_n` (zero beyond the stored range).
    pub fn at(&self, n: usize) -> f64 {
        if n == 0 || n > self.k.len() {
            0.0
        } else {
            self.k[n - 1]
        }
    }

    /// Weight vector `w[m] = k_m` of length `len` (`w[0] = 0`).
    pub fn weights(&self, len: usize) -> Vec<f64> {
        (0..len).map(|m| self.at(m)).collect()
    }
}

impl Tabulated {
    pub fn extent(&self) -> f64 {
        self.step * (self.values.len().saturating_sub(1)) as f64
    }

    fn check_tail(&self) -> Result<Option<f64>> {
        match self.tail_exponent {
            Some(e) if e >= -1.0 => Err(Error::NonIntegrableTail { exponent: e }),
            other => Ok(other),
        }
    }

    /// Power tail `C t^e` continuing the table: `e` is the stated exponent
    /// and `C` matches the last sample.
    fn tail_fit(&self, continuous: bool) -> Result<Option<PowerLaw>> {
        let Some(e) = self.check_tail()? else {
            return Ok(None);
        };
        let n = self.values.len();
        let (t, v) = if continuous {
            ((n - 1) as f64 * self.step, self.values[n - 1])
        } else {
            (n as f64, self.values[n - 1])
        };
        if !(t > 0.0 && v > 0.0) {
            return Err(Error::Fit(format!("last sample ({t}, {v}) cannot anchor a power tail")));
        }
        Ok(Some(PowerLaw {
            coefficient: v / t.powf(e),
            exponent: e,
        }))
    }

    fn eval(&self, t: f64) -> Result<f64> {
        let extent = self.extent();
        if t <= extent {
            let x = t / self.step;
            let i = (x.floor() as usize).min(self.values.len().saturating_sub(2));
            let frac = x - i as f64;
            if self.values.len() == 1 {
                return Ok(self.values[0]);
            }
            return Ok(self.values[i] * (1.0 - frac) + self.values[i + 1] * frac);
        }
        match self.tail_fit(true)? {
            Some(p) => Ok(p.eval(t)),
            None => Err(Error::OutOfDomain { t, extent }),
        }
    }

    fn eval_index(&self, n: usize) -> Result<f64> {
        if n <= self.values.len() {
            return Ok(self.values[n - 1]);
        }
        match self.tail_fit(false)? {
            Some(p) => Ok(p.eval(n as f64)),
            None => Err(Error::OutOfDomain {
                t: n as f64,
                extent: self.values.len() as f64,
            }),
        }
    }

    /// Trapezoid on the table plus the analytic tail of the fitted power.
    /// Without a tail exponent the kernel is taken to vanish beyond the table.
    fn tail_integral(&self, t: f64) -> Result<f64> {
        let extent = self.extent();
        let fit = self.tail_fit(true)?;
        let power_tail = |from: f64| match fit {
            Some(p) => p.coefficient * from.powf(p.exponent + 1.0) / (-p.exponent - 1.0),
            None => 0.0,
        };
        if t >= extent {
            return Ok(power_tail(t.max(extent)));
        }
        let x = t / self.step;
        let i = x.floor() as usize;
        let partial = {
            let left = self.eval(t)?;
            let right = self.values[i + 1];
            0.5 * (left + right) * ((i + 1) as f64 * self.step - t)
        };
        let rest = quad::trapezoid(&self.values[i + 1..], self.step);
        Ok(partial + rest + power_tail(extent))
    }

    fn tail_sum(&self, n: usize) -> Result<f64> {
        let fit = self.tail_fit(false)?;
        let len = self.values.len();
        let table: f64 = if n <= len {
            self.values[n - 1..].iter().sum()
        } else {
            0.0
        };
        let from = n.max(len + 1);
        let beyond = match fit {
            Some(p) => p.coefficient * hurwitz_zeta(-p.exponent, from as f64),
            None => 0.0,
        };
        Ok(table + beyond)
    }

    fn first_moment(&self, mode: TimeMode) -> Result<Option<f64>> {
        let fit = match mode {
            TimeMode::Continuous => self.tail_fit(true)?,
            TimeMode::Discrete => self.tail_fit(false)?,
        };
        if let Some(p) = fit {
            if p.exponent >= -2.0 {
                return Ok(None);
            }
        }
        match mode {
            TimeMode::Continuous => {
                let weighted: Vec<f64> = self
                    .values
                    .iter()
                    .enumerate()
                    .map(|(i, v)| i as f64 * self.step * v)
                    .collect();
                let mut m = quad::trapezoid(&weighted, self.step);
                if let Some(p) = fit {
                    let e = self.extent();
                    m += p.coefficient * e.powf(p.exponent + 2.0) / (-p.exponent - 2.0);
                }
                Ok(Some(m))
            }
            TimeMode::Discrete => {
                let mut m: f64 = self.values.iter().enumerate().map(|(i, v)| (i + 1) as f64 * v).sum();
                if let Some(p) = fit {
                    m += p.coefficient * hurwitz_zeta(-p.exponent - 1.0, (self.values.len() + 1) as f64);
                }
                Ok(Some(m))
            }
        }
    }
}

/// `Σ_{n≥0} (q+n)^(-s)` for `s > 1`: direct terms then Euler–Maclaurin.
pub fn hurwitz_zeta(s: f64, q: f64) -> f64 {
    const DIRECT: usize = 16;
    let mut sum = 0.0;
    for n in 0..DIRECT {
        sum += (q + n as f64).powf(-s);
    }
    let x = q + DIRECT as f64;
    // ∫_x^∞ + f(x)/2 - Σ B_{2j}/(2j)! f^{(2j-1)}(x)
    sum += x.powf(1.0 - s) / (s - 1.0) + 0.5 * x.powf(-s);
    let bernoulli = [1.0 / 6.0, -1.0 / 30.0, 1.0 / 42.0, -1.0 / 30.0, 5.0 / 66.0];
    let mut fact = 1.0; // (2j)!
    let mut rising = s; // s (s+1) ... (s+2j-2)
    let mut power = x.powf(-s - 1.0);
    for (j, b) in bernoulli.iter().enumerate() {
        let two_j = 2 * (j + 1);
        fact *= (two_j - 1) as f64 * two_j as f64;
        sum += b / fact * rising * power;
        rising *= (s + two_j as f64 - 1.0) * (s + two_j as f64);
        power /= x * x;
    }
    sum
}

/// Midpoint log-convexity `λ_i² ≤ λ_{i-1} λ_{i+1}` with relative slack.
pub fn midpoint_log_convexity(lambda: &[f64], rel_slack: f64) -> ConvexityReport {
    let mut worst = 0.0f64;
    let mut worst_index = None;
    for i in 1..lambda.len().saturating_sub(1) {
        let lhs = lambda[i] * lambda[i];
        let rhs = lambda[i - 1] * lambda[i + 1];
        let violation = lhs - rhs;
        if violation > rel_slack * lhs.abs() && violation > worst {
            worst = violation;
            worst_index = Some(i);
        }
    }
    ConvexityReport {
        passed: worst_index.is_none(),
        worst_violation: worst,
        worst_index,
    }
}

/// Kaluza property `λ_n² ≤ λ_{n-1} λ_{n+1}` for every interior index, with a
/// relative slack of 1e-12 for rounding in float inputs.
pub fn check_kaluza(lambda: &[f64]) -> ConvexityReport {
    midpoint_log_convexity(lambda, 1e-12)
}

/// Builds `L` from a target decay `γ` so that `∫_t^∞ ds/(s L(s)²) = γ(t)`,
/// via `L(t)² = -1/(t γ'(t))`. The induced kernel profile is
/// `k(t) ~ t^(-3/2) L(t)`.
///
/// `γ'` is sampled on a log grid from `t_min` up to `1e60`; a non-negative
/// derivative anywhere is an error.
pub fn kernel_from_target_decay(gamma: ScalarFn, dgamma: ScalarFn, t_min: f64) -> Result<SlowVariation> {
    let mut t = t_min;
    while t < 1e60 {
        let d = dgamma(t);
        if !(d < 0.0) || !(gamma(t) > 0.0) {
            return Err(Error::NonDecreasingTarget { t, derivative: d });
        }
        t *= 10f64.powf(0.125);
    }
    let d = Arc::clone(&dgamma);
    Ok(SlowVariation {
        eval: Arc::new(move |t: f64| (-1.0 / (t * d(t))).sqrt()),
        description: "L(t)^2 = -1/(t gamma'(t))".into(),
        alpha: 0.5,
    })
}

/// Kernel profile `t^(-3/2) L(t)` induced by a slowly varying `L`.
pub fn critical_kernel_profile(l: &SlowVariation) -> ScalarFn {
    let eval = Arc::clone(&l.eval);
    Arc::new(move |t: f64| t.powf(-1.5) * eval(t))
}
