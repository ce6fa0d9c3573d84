//! Closed-form decay constants and empirical rate diagnostics.
//!
//! Critical, `α ∈ (0,1)`:   `r(t) t^(1-α) L(t) → sin(απ)/π`
//! Critical, `α ∈ (0,1/2)`: `c(t) L(t)² t^(1-2α) → σ² Γ(1-2α)Γ(α)/Γ(1-α) · sin²(απ)/π²`
//! Subexponential:          `r(t)/k(t) → (a+∫k)^(-2)`, `c(t)/k(t) → σ²/(-a-∫k)³`
//!
//! with `λ(t) = L(t) t^(-α)`. The discrete regimes share the formulas with
//! `Σ k_j` in place of `∫ k`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::fit_power_law;
use crate::gamma::gamma;
use crate::kernels::SlowVariation;
use crate::quad;

fn open_interval(name: &'static str, value: f64, lo: f64, hi: f64, domain: &'static str) -> Result<()> {
    if value > lo && value < hi {
        Ok(())
    } else {
        Err(Error::Domain { name, value, domain })
    }
}

pub fn gamma_fn(x: f64) -> Result<f64> {
    gamma(x)
}

/// `sin(απ)/π`.
pub fn resolvent_rate_constant(alpha: f64) -> Result<f64> {
    open_interval("alpha", alpha, 0.0, 1.0, "(0, 1)")?;
    Ok((alpha * PI).sin() / PI)
}

/// `Γ(-1-2μ)Γ(1+μ)/Γ(-μ) = ∫_0^∞ x^μ (1+x)^μ dx`.
pub fn acvf_ratio_constant(mu: f64) -> Result<f64> {
    open_interval("mu", mu, -1.0, -0.5, "(-1, -1/2)")?;
    Ok(gamma(-1.0 - 2.0 * mu)? * gamma(1.0 + mu)? / gamma(-mu)?)
}

pub fn acvf_rate_constant(alpha: f64, sigma: f64) -> Result<f64> {
    open_interval("alpha", alpha, 0.0, 0.5, "(0, 1/2)")?;
    let s = (PI * alpha).sin() / PI;
    Ok(sigma * sigma * gamma(1.0 - 2.0 * alpha)? * gamma(alpha)? / gamma(1.0 - alpha)? * s * s)
}

/// Limit of `c(t) t^(1-2α)` for `k(t) = scale (1+t)^(-α-1)`:
/// `σ² sin(απ) Γ(1-2α) / (π Γ(-α)² scale²)`.
pub fn power_law_acvf_constant(alpha: f64, scale: f64, sigma: f64) -> Result<f64> {
    open_interval("alpha", alpha, 0.0, 0.5, "(0, 1/2)")?;
    let g = gamma(-alpha)?;
    Ok(sigma * sigma * (alpha * PI).sin() * gamma(1.0 - 2.0 * alpha)? / (PI * g * g * scale * scale))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubexpConstants {
    /// Limit of `r(t)/k(t)`.
    pub l_c: f64,
    /// Limit of `c(t)/k(t)`.
    pub c_limit: f64,
}

pub fn subexp_constants(a: f64, total_mass: f64, sigma: f64) -> Result<SubexpConstants> {
    let gap = a + total_mass;
    if !(gap < -1e-10 * (a.abs() + total_mass.abs())) {
        return Err(Error::Domain {
            name: "a + total_mass",
            value: gap,
            domain: "(-inf, 0)",
        });
    }
    Ok(SubexpConstants {
        l_c: 1.0 / (gap * gap),
        c_limit: sigma * sigma / (-gap).powi(3),
    })
}

const PROFILE_U_MAX: f64 = 300.0;

/// `(σ²/π²) ∫_t^∞ ds / (s L(s)²)`, integrated in `u = log s` up to
/// `u = 300` and closed with the tail of the fitted log power
/// `L(e^u) ≈ C u^β`. A fitted `β ≤ 1/2` means the integral diverges.
pub fn critical_acvf_profile(l: &SlowVariation, sigma: f64, t: f64) -> Result<f64> {
    if !(t > 1.0) {
        return Err(Error::Domain {
            name: "t",
            value: t,
            domain: "(1, inf)",
        });
    }
    let beta_fit = log_power_fit(l)?;
    if beta_fit.exponent <= 0.5 {
        return Err(Error::DivergentCondition {
            beta: beta_fit.exponent,
        });
    }
    let u0 = t.ln();
    let u_max = PROFILE_U_MAX.max(u0);
    let inner = |u: f64| {
        let v = l.at(u.exp());
        1.0 / (v * v)
    };
    let body = if u0 < u_max {
        let scale = inner(u0).abs().max(inner(u_max).abs());
        quad::integrate(inner, u0, u_max, 1e-15 * scale.max(1e-300))
    } else {
        0.0
    };
    let (c, b) = (beta_fit.coefficient, beta_fit.exponent);
    let tail = u_max.powf(1.0 - 2.0 * b) / (c * c * (2.0 * b - 1.0));
    Ok(sigma * sigma / (PI * PI) * (body + tail))
}

/// Fit of `L(e^u) ≈ C u^β` over `u ∈ [30, 300]`.
fn log_power_fit(l: &SlowVariation) -> Result<crate::fit::PowerLaw> {
    let us: Vec<f64> = (0..=40).map(|i| 30.0 * 10f64.powf(i as f64 / 40.0)).collect();
    fit_power_law(us.iter().map(|&u| (u, l.at(u.exp()))))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Trend {
    Converging,
    Stalled,
    Diverging,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateSample {
    pub t: f64,
    pub ratio: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticReport {
    pub target: String,
    pub theory_constant: f64,
    pub samples: Vec<RateSample>,
    pub trend: Trend,
}

impl AsymptoticReport {
    pub fn final_rel_err(&self) -> f64 {
        self.samples.last().map_or(f64::NAN, |s| s.rel_err)
    }

    pub fn final_abs_err(&self) -> f64 {
        self.final_rel_err() * self.theory_constant.abs()
    }
}

pub const DEFAULT_DECADES: [f64; 4] = [10.0, 100.0, 1_000.0, 10_000.0];

/// Relative errors at or below this are treated as exact.
pub const EXACT_FLOOR: f64 = 1e-12;

/// Samples `value(t)·normalizer(t)` at each probe point inside the series
/// (linear interpolation between neighbouring samples), and classifies the
/// relative errors against `theory`: strictly decreasing (or all exact) is
/// Converging, strictly increasing is Diverging, anything else Stalled.
pub fn rate_diagnostics<N>(
    target: &str,
    series: &[(f64, f64)],
    normalizer: N,
    theory: f64,
    probes: &[f64],
) -> Result<AsymptoticReport>
where
    N: Fn(f64) -> f64,
{
    rate_diagnostics_with_floor(target, series, normalizer, theory, probes, EXACT_FLOOR)
}

pub fn rate_diagnostics_with_floor<N>(
    target: &str,
    series: &[(f64, f64)],
    normalizer: N,
    theory: f64,
    probes: &[f64],
    exact_floor: f64,
) -> Result<AsymptoticReport>
where
    N: Fn(f64) -> f64,
{
    let (Some(&(t_lo, _)), Some(&(t_hi, _))) = (series.first(), series.last()) else {
        return Err(Error::SeriesTooShort("empty series".into()));
    };
    let inside: Vec<f64> = probes
        .iter()
        .copied()
        .filter(|&t| t >= t_lo && t <= t_hi * (1.0 + 1e-12))
        .collect();
    if inside.len() < 2 {
        return Err(Error::SeriesTooShort(format!(
            "series covers [{t_lo}, {t_hi}], which holds {} of the probe points",
            inside.len()
        )));
    }
    let samples: Vec<RateSample> = inside
        .iter()
        .map(|&t| {
            let ratio = interpolate(series, t) * normalizer(t);
            RateSample {
                t,
                ratio,
                rel_err: ((ratio - theory) / theory).abs(),
            }
        })
        .collect();
    Ok(AsymptoticReport {
        target: target.to_string(),
        theory_constant: theory,
        trend: classify(&samples, exact_floor),
        samples,
    })
}

fn classify(samples: &[RateSample], exact_floor: f64) -> Trend {
    let errs: Vec<f64> = samples.iter().map(|s| s.rel_err).collect();
    if errs.iter().any(|e| !e.is_finite()) {
        return Trend::Diverging;
    }
    if errs.iter().all(|&e| e <= exact_floor) {
        return Trend::Converging;
    }
    let decreasing = errs.windows(2).all(|w| w[1] < w[0] || w[1] <= exact_floor);
    let increasing = errs.windows(2).all(|w| w[1] > w[0]);
    if decreasing {
        Trend::Converging
    } else if increasing {
        Trend::Diverging
    } else {
        Trend::Stalled
    }
}

fn interpolate(series: &[(f64, f64)], t: f64) -> f64 {
    let i = series.partition_point(|&(s, _)| s < t);
    if i == 0 {
        return series[0].1;
    }
    if i >= series.len() {
        return series[series.len() - 1].1;
    }
    let (t1, v1) = series[i];
    if t1 == t {
        return v1;
    }
    let (t0, v0) = series[i - 1];
    v0 + (v1 - v0) * (t - t0) / (t1 - t0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::kernel_from_target_decay;
    use approx::assert_relative_eq;
    use std::sync::Arc;

    /// `∫_0^∞ x^μ (1+x)^μ dx` with both endpoint singularities removed by
    /// power substitutions.
    fn ratio_by_quadrature(mu: f64) -> f64 {
        let p = 1.0 + mu;
        let head = quad::integrate(|u: f64| (1.0 + u.powf(1.0 / p)).powf(mu) / p, 0.0, 1.0, 1e-15);
        let q = -2.0 * mu - 1.0;
        let tail = quad::integrate(|w: f64| (1.0 + w.powf(1.0 / q)).powf(mu) / q, 0.0, 1.0, 1e-15);
        head + tail
    }

    #[test]
    fn rate_constant_examples() {
        assert_relative_eq!(resolvent_rate_constant(0.5).unwrap(), 1.0 / PI, max_relative = 1e-15);
        assert_relative_eq!(
            resolvent_rate_constant(0.25).unwrap(),
            0.225_079_079_039_276_5,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            resolvent_rate_constant(0.3).unwrap(),
            0.257_518_107_400_241_9,
            max_relative = 1e-14
        );
        assert!(resolvent_rate_constant(1e-9).unwrap() < 1e-8);
        let mut prev = 0.0;
        for i in 1..=50 {
            let v = resolvent_rate_constant(i as f64 * 0.01).unwrap();
            assert!(v > prev);
            prev = v;
        }
        assert!(resolvent_rate_constant(0.0).is_err());
        assert!(resolvent_rate_constant(1.0).is_err());
    }

    #[test]
    fn ratio_constant_matches_quadrature() {
        assert_relative_eq!(
            acvf_ratio_constant(-0.7).unwrap(),
            5.112_091_244_457_352,
            max_relative = 1e-12
        );
        for mu in [-0.55, -0.6, -0.7, -0.75, -0.8, -0.9] {
            let q = ratio_by_quadrature(mu);
            assert_relative_eq!(acvf_ratio_constant(mu).unwrap(), q, max_relative = 1e-8);
        }
        assert!(acvf_ratio_constant(-0.5001).unwrap() > 1e3);
        assert!(acvf_ratio_constant(-0.5).is_err());
        assert!(acvf_ratio_constant(-1.0).is_err());
    }

    #[test]
    fn acvf_rate_identity_chain() {
        assert_relative_eq!(
            acvf_rate_constant(0.25, 1.0).unwrap(),
            0.265_669_974_979_210_9,
            max_relative = 1e-12
        );
        for i in 1..10 {
            let alpha = i as f64 * 0.05;
            let direct = acvf_rate_constant(alpha, 1.7).unwrap();
            let r = resolvent_rate_constant(alpha).unwrap();
            let chain = 1.7 * 1.7 * acvf_ratio_constant(alpha - 1.0).unwrap() * r * r;
            assert_relative_eq!(direct, chain, max_relative = 1e-10);
        }
        assert!(acvf_rate_constant(0.5, 1.0).is_err());
    }

    #[test]
    fn power_law_closed_form_is_rate_over_limit_squared() {
        for alpha in [0.1, 0.2, 0.25, 0.3, 0.4] {
            let k = acvf_rate_constant(alpha, 1.0).unwrap();
            let l_inf = 1.0 / alpha;
            assert_relative_eq!(
                power_law_acvf_constant(alpha, 1.0, 1.0).unwrap(),
                k / (l_inf * l_inf),
                max_relative = 1e-10
            );
            let l_inf = 2.5 / alpha;
            assert_relative_eq!(
                power_law_acvf_constant(alpha, 2.5, 1.0).unwrap(),
                k / (l_inf * l_inf),
                max_relative = 1e-10
            );
        }
        assert_relative_eq!(
            power_law_acvf_constant(0.25, 1.0, 1.0).unwrap(),
            0.016_604_373_436_200_68,
            max_relative = 1e-12
        );
    }

    #[test]
    fn subexponential_examples() {
        let c = subexp_constants(-2.0, 2.0 / 3.0, 1.0).unwrap();
        assert_relative_eq!(c.l_c, 0.5625, max_relative = 1e-14);
        assert_relative_eq!(c.c_limit, 27.0 / 64.0, max_relative = 1e-14);
        assert!(subexp_constants(-1.0, 1.0, 1.0).is_err());
        assert!(subexp_constants(0.0, 1.0, 1.0).is_err());
    }

    fn inverse_log_power(p: f64) -> SlowVariation {
        kernel_from_target_decay(
            Arc::new(move |t: f64| t.ln().powf(-p)),
            Arc::new(move |t: f64| -p * t.ln().powf(-p - 1.0) / t),
            std::f64::consts::E,
        )
        .unwrap()
    }

    #[test]
    fn critical_profile_log() {
        let l = inverse_log_power(1.0);
        let t = 10f64.exp();
        assert_relative_eq!(
            critical_acvf_profile(&l, 1.0, t).unwrap(),
            0.010_132_118_364_233_78,
            max_relative = 1e-9
        );
        for p in [0.5, 1.0, 2.0] {
            let l = inverse_log_power(p);
            for u in [5.0f64, 10.0, 40.0] {
                let prof = critical_acvf_profile(&l, 2.0, u.exp()).unwrap();
                assert_relative_eq!(prof, 4.0 / (PI * PI) * u.powf(-p), max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn critical_profile_constant_l_diverges() {
        let l = SlowVariation {
            eval: Arc::new(|_| 2.0),
            description: "constant".into(),
            alpha: 0.5,
        };
        assert!(matches!(
            critical_acvf_profile(&l, 1.0, 10.0),
            Err(Error::DivergentCondition { .. })
        ));
    }

    #[test]
    fn diagnostics_exact_series() {
        let norm = |t: f64| t.powf(0.7);
        let series: Vec<(f64, f64)> = (1..=20_000).map(|i| (i as f64, 0.3 / norm(i as f64))).collect();
        let rep = rate_diagnostics("exact", &series, norm, 0.3, &DEFAULT_DECADES).unwrap();
        assert_eq!(rep.trend, Trend::Converging);
        assert_eq!(rep.samples.len(), 4);
        assert!(rep.samples.iter().all(|s| s.rel_err <= 1e-14));
    }

    #[test]
    fn diagnostics_trends() {
        let series: Vec<(f64, f64)> = (1..=10_000)
            .map(|i| (i as f64, 1.0 + 1.0 / (i as f64).sqrt()))
            .collect();
        let rep = rate_diagnostics("conv", &series, |_| 1.0, 1.0, &DEFAULT_DECADES).unwrap();
        assert_eq!(rep.trend, Trend::Converging);
        let series: Vec<(f64, f64)> = (1..=10_000).map(|i| (i as f64, (i as f64 * 0.01).exp())).collect();
        let rep = rate_diagnostics("grow", &series, |_| 1.0, 1.0, &DEFAULT_DECADES).unwrap();
        assert_eq!(rep.trend, Trend::Diverging);
        let series: Vec<(f64, f64)> = (1..=10_000).map(|i| (i as f64, 1.5 + (i as f64).ln().sin())).collect();
        let rep = rate_diagnostics("wobble", &series, |_| 1.0, 1.0, &DEFAULT_DECADES).unwrap();
        assert_eq!(rep.trend, Trend::Stalled);
    }

    #[test]
    fn diagnostics_need_two_probes() {
        let series: Vec<(f64, f64)> = (1..=50).map(|i| (i as f64, 1.0)).collect();
        assert!(matches!(
            rate_diagnostics("short", &series, |_| 1.0, 1.0, &DEFAULT_DECADES),
            Err(Error::SeriesTooShort(_))
        ));
    }

    #[test]
    fn report_json_shape() {
        let series: Vec<(f64, f64)> = (1..=100).map(|i| (i as f64, 2.0)).collect();
        let rep = rate_diagnostics("shape", &series, |_| 1.0, 2.0, &[10.0, 100.0]).unwrap();
        let v: serde_json::Value = serde_json::to_value(&rep).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(|s| s.as_str()).collect();
        assert_eq!(keys.len(), 4);
        for k in ["target", "theory_constant", "samples", "trend"] {
            assert!(keys.contains(&k));
        }
        assert_eq!(v["trend"], "Converging");
        assert_eq!(v["samples"][0].as_object().unwrap().len(), 3);
    }
}
