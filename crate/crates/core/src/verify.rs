//! Runs the asymptotic targets named in a configuration and decides
//! pass/fail for each.
//!
//! A target passes when its relative errors shrink across the probe points
//! and the error at the last probe is within the threshold. `nonzero_limit`
//! is judged on the absolute error.

use serde::{Deserialize, Serialize};

use crate::asymptotics::{
    acvf_rate_constant, critical_acvf_profile, rate_diagnostics, rate_diagnostics_with_floor, resolvent_rate_constant,
    subexp_constants, AsymptoticReport, Trend,
};
use crate::autocovariance::{autocov_continuous_with, autocov_discrete_with, CovarianceSeries};
use crate::config::{ExperimentConfig, Target};
use crate::error::{Error, Result};
use crate::kernels::{KernelSpec, TimeMode};
use crate::par::Exec;
use crate::resolvent::{
    solve_resolvent_discrete, solve_resolvent_ode, solve_resolvent_renewal, Grid, ResolventGrid, Scheme,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorMetric {
    Relative,
    Absolute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetOutcome {
    pub name: String,
    pub report: Option<AsymptoticReport>,
    pub metric: ErrorMetric,
    pub threshold: f64,
    pub final_error: f64,
    /// Set when the computation itself failed.
    pub error_kind: Option<String>,
    pub error_message: Option<String>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifySummary {
    pub outcomes: Vec<TargetOutcome>,
    pub all_passed: bool,
}

pub fn default_threshold(name: &str) -> f64 {
    match name {
        "resolvent_rate" | "discrete_resolvent_rate" => 0.15,
        "acvf_rate" | "discrete_acvf_rate" => 0.20,
        "nonzero_limit" => 0.01,
        "critical_profile" => 1e-6,
        "subexponential:resolvent" | "discrete_subexponential:resolvent" => 0.05,
        "subexponential:acvf" | "discrete_subexponential:acvf" => 0.10,
        _ => 0.1,
    }
}

pub fn default_probes(target: Target) -> Vec<f64> {
    match target {
        Target::ResolventRate | Target::AcvfRate | Target::DiscreteResolventRate | Target::DiscreteAcvfRate => {
            vec![1e2, 1e3, 1e4]
        }
        Target::NonzeroLimit => vec![100.0, 300.0, 1000.0],
        Target::Subexponential | Target::DiscreteSubexponential => vec![10.0, 100.0, 1000.0],
        Target::CriticalProfile => vec![5f64.exp(), 10f64.exp(), 20f64.exp(), 40f64.exp()],
    }
}

/// Tabulates the continuous resolvent with the configured scheme.
pub fn solve_continuous(cfg: &ExperimentConfig, spec: &KernelSpec) -> Result<ResolventGrid> {
    let t_max = cfg
        .solver
        .t_max
        .ok_or_else(|| Error::Config("continuous solver needs solver.t_max".into()))?;
    let grid = Grid::with_horizon(cfg.solver.h, t_max)?;
    match cfg.scheme() {
        Scheme::Renewal => solve_resolvent_renewal(spec, grid, cfg.solver.convolution),
        Scheme::Ode => solve_resolvent_ode(spec, grid, cfg.solver.convolution),
        Scheme::Discrete => Err(Error::Config("scheme discrete needs a discrete kernel".into())),
    }
}

/// `r_0, …, r_{n-1}` for the configured discrete kernel.
pub fn solve_discrete(cfg: &ExperimentConfig, spec: &KernelSpec) -> Result<Vec<f64>> {
    if spec.mode != TimeMode::Discrete {
        return Err(Error::Config("discrete solver needs a discrete kernel".into()));
    }
    let n = cfg
        .solver
        .n_steps
        .ok_or_else(|| Error::Config("discrete solver needs solver.n_steps".into()))?;
    let kernel = spec.discrete_kernel(n)?;
    Ok(solve_resolvent_discrete(&kernel, spec.a, n, cfg.solver.convolution))
}

/// Default discrete truncation: half the resolvent length.
pub fn default_truncation(len: usize) -> usize {
    len / 2
}

struct Workspace<'a> {
    cfg: &'a ExperimentConfig,
    exec: Exec,
    spec: Option<KernelSpec>,
    continuous: Option<ResolventGrid>,
    discrete: Option<Vec<f64>>,
}

impl<'a> Workspace<'a> {
    fn spec(&mut self) -> Result<KernelSpec> {
        if self.spec.is_none() {
            self.spec = Some(self.cfg.kernel_spec()?);
        }
        Ok(self.spec.clone().unwrap())
    }

    fn continuous(&mut self) -> Result<&ResolventGrid> {
        if self.continuous.is_none() {
            let spec = self.spec()?;
            self.continuous = Some(solve_continuous(self.cfg, &spec)?);
        }
        Ok(self.continuous.as_ref().unwrap())
    }

    fn discrete(&mut self) -> Result<&[f64]> {
        if self.discrete.is_none() {
            let spec = self.spec()?;
            self.discrete = Some(solve_discrete(self.cfg, &spec)?);
        }
        Ok(self.discrete.as_deref().unwrap())
    }

    fn probes(&self, target: Target) -> Vec<f64> {
        self.cfg
            .verify
            .probes
            .get(target.name())
            .cloned()
            .unwrap_or_else(|| default_probes(target))
    }

    fn threshold(&self, name: &str) -> f64 {
        self.cfg
            .verify
            .thresholds
            .get(name)
            .copied()
            .unwrap_or_else(|| default_threshold(name))
    }

    fn sigma(&self) -> f64 {
        self.cfg.autocov.sigma
    }

    fn continuous_acvf(&mut self, lags: &[f64]) -> Result<CovarianceSeries> {
        let (sigma, exec) = (self.sigma(), self.exec);
        let res = self.continuous()?;
        let lags: Vec<f64> = lags.iter().map(|&t| snap(t, res.grid.h)).collect();
        autocov_continuous_with(res, sigma, &lags, exec)
    }

    fn discrete_acvf(&mut self, lags: &[f64]) -> Result<CovarianceSeries> {
        let (sigma, exec, truncation) = (self.sigma(), self.exec, self.cfg.autocov.truncation);
        let r = self.discrete()?;
        let m = truncation.unwrap_or_else(|| default_truncation(r.len()));
        let lags: Vec<usize> = lags.iter().map(|&t| t.round() as usize).collect();
        autocov_discrete_with(r, sigma, &lags, m, exec)
    }

    fn run(&mut self, target: Target) -> Result<Vec<AsymptoticReport>> {
        let probes = self.probes(target);
        match target {
            Target::ResolventRate => {
                let spec = self.spec()?;
                let alpha = require_alpha(&spec, 0.0, 1.0)?;
                let theory = resolvent_rate_constant(alpha)?;
                let series = resolvent_series(self.continuous()?);
                let lambda = |t: f64| spec.tail_integral(t).unwrap_or(f64::NAN);
                Ok(vec![rate_diagnostics(
                    target.name(),
                    &series,
                    |t| t * lambda(t),
                    theory,
                    &probes,
                )?])
            }
            Target::DiscreteResolventRate => {
                let spec = self.spec()?;
                let alpha = require_alpha(&spec, 0.0, 1.0)?;
                let theory = resolvent_rate_constant(alpha)?;
                let series = indexed_series(self.discrete()?);
                let lambda = |t: f64| spec.tail_integral(t).unwrap_or(f64::NAN);
                Ok(vec![rate_diagnostics(
                    target.name(),
                    &series,
                    |t| t * lambda(t),
                    theory,
                    &probes,
                )?])
            }
            Target::AcvfRate | Target::DiscreteAcvfRate => {
                let spec = self.spec()?;
                let alpha = require_alpha(&spec, 0.0, 0.5)?;
                let theory = acvf_rate_constant(alpha, 1.0)? * self.sigma().powi(2);
                let l = spec.slow_variation()?;
                let acvf = if target == Target::AcvfRate {
                    self.continuous_acvf(&probes)?
                } else {
                    self.discrete_acvf(&probes)?
                };
                let series: Vec<(f64, f64)> = acvf.lags.iter().copied().zip(acvf.c.iter().copied()).collect();
                let norm = |t: f64| l.at(t).powi(2) * t.powf(1.0 - 2.0 * alpha);
                Ok(vec![rate_diagnostics(target.name(), &series, norm, theory, &probes)?])
            }
            Target::NonzeroLimit => {
                let spec = self.spec()?;
                let theory = crate::resolvent::limiting_value(&spec)?;
                let series = resolvent_series(self.continuous()?);
                Ok(vec![rate_diagnostics(
                    target.name(),
                    &series,
                    |_| 1.0,
                    theory,
                    &probes,
                )?])
            }
            Target::Subexponential | Target::DiscreteSubexponential => {
                let spec = self.spec()?;
                let consts = subexp_constants(spec.a, spec.total_mass()?, self.sigma())?;
                let (series, acvf) = if target == Target::Subexponential {
                    let series = resolvent_series(self.continuous()?);
                    (series, self.continuous_acvf(&probes)?)
                } else {
                    let series = indexed_series(self.discrete()?);
                    (series, self.discrete_acvf(&probes)?)
                };
                let inv_k = |t: f64| 1.0 / spec.eval(t).unwrap_or(f64::NAN);
                let acvf_series: Vec<(f64, f64)> = acvf.lags.iter().copied().zip(acvf.c.iter().copied()).collect();
                let base = target.name();
                Ok(vec![
                    rate_diagnostics(&format!("{base}:resolvent"), &series, inv_k, consts.l_c, &probes)?,
                    rate_diagnostics(&format!("{base}:acvf"), &acvf_series, inv_k, consts.c_limit, &probes)?,
                ])
            }
            Target::CriticalProfile => {
                let l = self.cfg.slow_variation()?;
                let gamma = self
                    .cfg
                    .target_decay()
                    .ok_or_else(|| Error::Config("critical_profile needs a target decay".into()))?;
                let sigma = self.sigma();
                let series = probes
                    .iter()
                    .map(|&t| Ok((t, critical_acvf_profile(&l, sigma, t)?)))
                    .collect::<Result<Vec<_>>>()?;
                let scale = sigma * sigma / (std::f64::consts::PI * std::f64::consts::PI);
                let floor = self.threshold(target.name());
                Ok(vec![rate_diagnostics_with_floor(
                    target.name(),
                    &series,
                    |t| 1.0 / (scale * gamma(t)),
                    1.0,
                    &probes,
                    floor,
                )?])
            }
        }
    }
}

fn snap(t: f64, h: f64) -> f64 {
    (t / h).round() * h
}

fn require_alpha(spec: &KernelSpec, lo: f64, hi: f64) -> Result<f64> {
    match spec.alpha() {
        Some(a) if a > lo && a < hi => Ok(a),
        Some(a) => Err(Error::Config(format!(
            "target needs alpha in ({lo}, {hi}), kernel has {a}"
        ))),
        None => Err(Error::Config("target needs a kernel with a known alpha".into())),
    }
}

fn resolvent_series(res: &ResolventGrid) -> Vec<(f64, f64)> {
    res.times().zip(res.r.iter().copied()).collect()
}

fn indexed_series(r: &[f64]) -> Vec<(f64, f64)> {
    r.iter().enumerate().map(|(n, &v)| (n as f64, v)).collect()
}

fn metric_for(target: Target) -> ErrorMetric {
    match target {
        Target::NonzeroLimit => ErrorMetric::Absolute,
        _ => ErrorMetric::Relative,
    }
}

fn judge(report: AsymptoticReport, metric: ErrorMetric, threshold: f64) -> TargetOutcome {
    let final_error = match metric {
        ErrorMetric::Relative => report.final_rel_err(),
        ErrorMetric::Absolute => report.final_abs_err(),
    };
    TargetOutcome {
        name: report.target.clone(),
        passed: report.trend == Trend::Converging && final_error <= threshold,
        report: Some(report),
        metric,
        threshold,
        final_error,
        error_kind: None,
        error_message: None,
    }
}

/// Runs every configured target. Configuration problems are returned as
/// errors; numerical failures become failed outcomes.
pub fn run_targets(cfg: &ExperimentConfig, exec: Exec) -> Result<VerifySummary> {
    if cfg.verify.targets.is_empty() {
        return Err(Error::Config("verify.targets is empty".into()));
    }
    let mut ws = Workspace {
        cfg,
        exec,
        spec: None,
        continuous: None,
        discrete: None,
    };
    let mut outcomes = Vec::new();
    for &target in &cfg.verify.targets {
        let metric = metric_for(target);
        match ws.run(target) {
            Ok(reports) => {
                for report in reports {
                    let threshold = ws.threshold(&report.target);
                    outcomes.push(judge(report, metric, threshold));
                }
            }
            Err(e) if e.is_config() => return Err(e),
            Err(e) => outcomes.push(TargetOutcome {
                name: target.name().to_string(),
                report: None,
                metric,
                threshold: ws.threshold(target.name()),
                final_error: f64::NAN,
                error_kind: Some(e.kind().to_string()),
                error_message: Some(e.to_string()),
                passed: false,
            }),
        }
    }
    let all_passed = outcomes.iter().all(|o| o.passed);
    Ok(VerifySummary { outcomes, all_passed })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn critical_profile_is_exact_for_inverse_log() {
        let cfg = ExperimentConfig::from_toml_str(
            "[kernel]\nfamily = \"target_decay\"\npower = 1.0\n[verify]\ntargets = [\"critical_profile\"]\n",
        )
        .unwrap();
        let summary = run_targets(&cfg, Exec::Sequential).unwrap();
        assert!(summary.all_passed, "{summary:?}");
    }

    #[test]
    fn too_short_series_fails_without_erroring() {
        let cfg = ExperimentConfig::from_toml_str(
            "[kernel]\nfamily = \"power_law\"\nalpha = 0.3\ncritical = true\n\
             [solver]\nh = 0.1\nt_max = 50.0\n[verify]\ntargets = [\"resolvent_rate\"]\n",
        )
        .unwrap();
        let summary = run_targets(&cfg, Exec::Sequential).unwrap();
        assert!(!summary.all_passed);
        assert_eq!(summary.outcomes[0].error_kind.as_deref(), Some("series_too_short"));
    }

    #[test]
    fn discrete_resolvent_rate_small() {
        let cfg = ExperimentConfig::from_toml_str(
            "[kernel]\nfamily = \"power_law\"\nmode = \"discrete\"\nalpha = 0.3\ncritical = true\n\
             [solver]\nn_steps = 20001\n[verify]\ntargets = [\"discrete_resolvent_rate\"]\n",
        )
        .unwrap();
        let summary = run_targets(&cfg, Exec::Sequential).unwrap();
        let o = &summary.outcomes[0];
        assert!(o.passed, "{o:?}");
    }
}
