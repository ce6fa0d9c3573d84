//! Experiment configuration (TOML).
//!
//! ```toml
//! [kernel]
//! family = "power_law"     # power_law | tabulated | target_decay
//! mode = "continuous"
//! alpha = 0.3
//! critical = true          # a = -(total mass); otherwise give `a`
//!
//! [solver]
//! scheme = "renewal"       # renewal | ode | discrete
//! h = 0.05
//! t_max = 20000.0
//!
//! [autocov]
//! sigma = 1.0
//! lags = [0.0, 10.0, 100.0]
//!
//! [simulation]
//! scheme = "stationary_ma"
//! paths = 4
//! seed = 7
//!
//! [verify]
//! targets = ["resolvent_rate", "acvf_rate"]
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::conv::ConvolutionMode;
use crate::error::{Error, Result};
use crate::kernels::{kernel_from_target_decay, KernelSpec, Regime, SlowVariation, Tabulated, TimeMode};
use crate::resolvent::Scheme;
use crate::simulate::{Noise, PathScheme, DEFAULT_MA_TAIL_TOL};
use crate::KernelFamily;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kernel: KernelConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub autocov: AutocovConfig,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyName {
    PowerLaw,
    Tabulated,
    /// `λ` built from the target decay `γ(t) = (log t)^(-power)`.
    TargetDecay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub family: FamilyName,
    #[serde(default = "continuous")]
    pub mode: TimeMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default)]
    pub critical: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail_exponent: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power: Option<f64>,
}

fn continuous() -> TimeMode {
    TimeMode::Continuous
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<Scheme>,
    #[serde(default = "default_h")]
    pub h: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_steps: Option<usize>,
    #[serde(default)]
    pub convolution: ConvolutionMode,
}

fn default_h() -> f64 {
    0.01
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            scheme: None,
            h: default_h(),
            t_max: None,
            n_steps: None,
            convolution: ConvolutionMode::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AutocovConfig {
    #[serde(default = "one")]
    pub sigma: f64,
    #[serde(default)]
    pub lags: Vec<f64>,
    /// Truncation `M` of the discrete sum; defaults to half the resolvent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<usize>,
}

impl Default for AutocovConfig {
    fn default() -> Self {
        AutocovConfig {
            sigma: 1.0,
            lags: Vec::new(),
            truncation: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<PathScheme>,
    #[serde(default = "one_usize")]
    pub paths: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub sigma: f64,
    #[serde(default)]
    pub x0: f64,
    #[serde(default)]
    pub noise: Noise,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ma_truncation: Option<usize>,
    #[serde(default = "default_tail_tol")]
    pub ma_tail_tol: f64,
    #[serde(default)]
    pub lags: Vec<usize>,
    #[serde(default = "yes")]
    pub write_paths: bool,
}

fn one_usize() -> usize {
    1
}

fn yes() -> bool {
    true
}

fn default_tail_tol() -> f64 {
    DEFAULT_MA_TAIL_TOL
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            scheme: None,
            paths: 1,
            seed: 0,
            sigma: 1.0,
            x0: 0.0,
            noise: Noise::Gaussian,
            h: None,
            t_max: None,
            n_steps: None,
            ma_truncation: None,
            ma_tail_tol: DEFAULT_MA_TAIL_TOL,
            lags: Vec::new(),
            write_paths: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: default_dir() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// `r(t) t^(1-α) L(t) → sin(απ)/π`.
    ResolventRate,
    /// `r(t) → 1/(1 + ∫ s k(s) ds)` for integrable first moments.
    NonzeroLimit,
    /// `c(t) L(t)² t^(1-2α)` against the Gamma-function constant.
    AcvfRate,
    /// `(σ²/π²)∫_t^∞ ds/(s L²)` against `σ²γ(t)/π²` for a target decay `γ`.
    CriticalProfile,
    DiscreteResolventRate,
    DiscreteAcvfRate,
    /// `r/k → (a+∫k)^(-2)` and `c/k → σ²/(-a-∫k)³`.
    Subexponential,
    DiscreteSubexponential,
}

impl Target {
    pub fn name(self) -> &'static str {
        match self {
            Target::ResolventRate => "resolvent_rate",
            Target::NonzeroLimit => "nonzero_limit",
            Target::AcvfRate => "acvf_rate",
            Target::CriticalProfile => "critical_profile",
            Target::DiscreteResolventRate => "discrete_resolvent_rate",
            Target::DiscreteAcvfRate => "discrete_acvf_rate",
            Target::Subexponential => "subexponential",
            Target::DiscreteSubexponential => "discrete_subexponential",
        }
    }

    fn requirement(self) -> (Option<TimeMode>, Option<Regime>) {
        use Target::*;
        match self {
            ResolventRate | NonzeroLimit | AcvfRate => (Some(TimeMode::Continuous), Some(Regime::Critical)),
            DiscreteResolventRate | DiscreteAcvfRate => (Some(TimeMode::Discrete), Some(Regime::Critical)),
            Subexponential => (Some(TimeMode::Continuous), Some(Regime::Subexponential)),
            DiscreteSubexponential => (Some(TimeMode::Discrete), Some(Regime::Subexponential)),
            CriticalProfile => (None, None),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default)]
    pub targets: Vec<Target>,
    /// Overrides of the default pass thresholds, keyed by report name.
    #[serde(default)]
    pub thresholds: BTreeMap<String, f64>,
    /// Overrides of the default probe points, keyed by target name.
    #[serde(default)]
    pub probes: BTreeMap<String, Vec<f64>>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let k = &self.kernel;
        if let Some(alpha) = k.alpha {
            if !(alpha > 0.0) {
                return Err(Error::Config(format!("alpha must be positive, got {alpha}")));
            }
        }
        if !(k.scale > 0.0) {
            return Err(Error::Config(format!("scale must be positive, got {}", k.scale)));
        }
        if k.critical && k.a.is_some() {
            return Err(Error::Config("give either `a` or `critical = true`, not both".into()));
        }
        if !(self.solver.h > 0.0) {
            return Err(Error::Config(format!(
                "solver.h must be positive, got {}",
                self.solver.h
            )));
        }
        if !(self.autocov.sigma > 0.0) || !(self.simulation.sigma >= 0.0) {
            return Err(Error::Config("sigma must be positive".into()));
        }
        if k.family != FamilyName::TargetDecay {
            self.kernel_spec()?;
        } else {
            self.slow_variation()?;
        }
        for target in &self.verify.targets {
            self.check_target(*target)?;
        }
        Ok(())
    }

    fn check_target(&self, target: Target) -> Result<()> {
        if target == Target::CriticalProfile {
            if self.kernel.family != FamilyName::TargetDecay {
                return Err(Error::Config(format!(
                    "target {} needs kernel family target_decay",
                    target.name()
                )));
            }
            return Ok(());
        }
        if self.kernel.family == FamilyName::TargetDecay {
            return Err(Error::Config(format!(
                "target {} needs a kernel, target_decay only defines L",
                target.name()
            )));
        }
        let spec = self.kernel_spec()?;
        let (mode, regime) = target.requirement();
        if let Some(mode) = mode {
            if spec.mode != mode {
                return Err(Error::Config(format!(
                    "target {} needs a {mode:?} kernel",
                    target.name()
                )));
            }
        }
        if let Some(regime) = regime {
            let actual = spec.classify_regime()?.regime;
            if actual != regime {
                return Err(Error::Config(format!(
                    "target {} requires the {regime:?} regime, kernel is {actual:?}",
                    target.name()
                )));
            }
        }
        Ok(())
    }

    pub fn kernel_spec(&self) -> Result<KernelSpec> {
        let k = &self.kernel;
        let family = match k.family {
            FamilyName::PowerLaw => KernelFamily::PowerLaw {
                alpha: k
                    .alpha
                    .ok_or_else(|| Error::Config("power_law kernel needs alpha".into()))?,
                scale: k.scale,
            },
            FamilyName::Tabulated => KernelFamily::Tabulated(Tabulated {
                step: k.step.unwrap_or(1.0),
                values: k
                    .values
                    .clone()
                    .filter(|v| !v.is_empty())
                    .ok_or_else(|| Error::Config("tabulated kernel needs values".into()))?,
                tail_exponent: k.tail_exponent,
                alpha: k.alpha,
            }),
            FamilyName::TargetDecay => {
                return Err(Error::Config("target_decay defines L only, not a kernel".into()));
            }
        };
        let mut spec = KernelSpec {
            family,
            a: 0.0,
            mode: k.mode,
        };
        spec.a = match (k.a, k.critical) {
            (Some(a), false) => a,
            (None, true) => -spec.total_mass()?,
            _ => return Err(Error::Config("kernel needs `a` or `critical = true`".into())),
        };
        Ok(spec)
    }

    /// `L` with `L(t)² = -1/(t γ'(t))` for `γ(t) = (log t)^(-power)`.
    pub fn slow_variation(&self) -> Result<SlowVariation> {
        let p = self
            .kernel
            .power
            .filter(|p| *p > 0.0)
            .ok_or_else(|| Error::Config("target_decay needs power > 0".into()))?;
        kernel_from_target_decay(
            Arc::new(move |t: f64| t.ln().powf(-p)),
            target_derivative(p),
            std::f64::consts::E,
        )
    }

    pub fn target_decay(&self) -> Option<impl Fn(f64) -> f64> {
        let p = self.kernel.power?;
        Some(move |t: f64| t.ln().powf(-p))
    }

    pub fn scheme(&self) -> Scheme {
        match (self.solver.scheme, self.kernel.mode) {
            (Some(s), _) => s,
            (None, TimeMode::Discrete) => Scheme::Discrete,
            (None, TimeMode::Continuous) => Scheme::Renewal,
        }
    }
}

fn target_derivative(p: f64) -> crate::kernels::ScalarFn {
    Arc::new(move |t: f64| -p * t.ln().powf(-p - 1.0) / t)
}

#[cfg(test)]
mod tests {
    use super::*;

    const REFERENCE: &str = r#"
[kernel]
family = "power_law"
alpha = 0.3
critical = true

[solver]
scheme = "renewal"
h = 0.05
t_max = 20000.0
convolution = { kind = "fft", block = 2048 }

[autocov]
sigma = 1.0
lags = [0.0, 10.0, 100.0]

[simulation]
scheme = "stationary_ma"
paths = 4
seed = 7
lags = [0, 1, 10]

[verify]
targets = ["resolvent_rate", "acvf_rate"]
thresholds = { resolvent_rate = 0.15 }
"#;

    #[test]
    fn parses_and_resolves_critical_a() {
        let cfg = ExperimentConfig::from_toml_str(REFERENCE).unwrap();
        let spec = cfg.kernel_spec().unwrap();
        assert!((spec.a + 1.0 / 0.3).abs() < 1e-15);
        assert_eq!(cfg.solver.convolution, ConvolutionMode::Fft { block: 2048 });
        assert_eq!(cfg.simulation.scheme, Some(PathScheme::StationaryMa));
        assert_eq!(cfg.verify.thresholds["resolvent_rate"], 0.15);
    }

    #[test]
    fn round_trip() {
        let cfg = ExperimentConfig::from_toml_str(REFERENCE).unwrap();
        let text = cfg.to_toml_string().unwrap();
        let again = ExperimentConfig::from_toml_str(&text).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn target_regime_mismatch_is_a_config_error() {
        let text = REFERENCE.replace(
            r#"targets = ["resolvent_rate", "acvf_rate"]"#,
            r#"targets = ["subexponential"]"#,
        );
        assert!(matches!(ExperimentConfig::from_toml_str(&text), Err(Error::Config(_))));
        let text = REFERENCE.replace(
            r#"targets = ["resolvent_rate", "acvf_rate"]"#,
            r#"targets = ["discrete_acvf_rate"]"#,
        );
        assert!(matches!(ExperimentConfig::from_toml_str(&text), Err(Error::Config(_))));
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(ExperimentConfig::from_toml_str(
            "[kernel]\nfamily = \"power_law\"\nalpha = 0.3\ncritical = true\nbogus = 1\n"
        )
        .is_err());
        assert!(ExperimentConfig::from_toml_str("[kernel]\nfamily = \"power_law\"\nalpha = -1.0\na = 0.0\n").is_err());
        assert!(ExperimentConfig::from_toml_str("[kernel]\nfamily = \"power_law\"\nalpha = 0.3\n").is_err());
    }

    #[test]
    fn target_decay_family() {
        let cfg = ExperimentConfig::from_toml_str(
            "[kernel]\nfamily = \"target_decay\"\npower = 1.0\n[verify]\ntargets = [\"critical_profile\"]\n",
        )
        .unwrap();
        let l = cfg.slow_variation().unwrap();
        assert!((l.at(100f64.exp()) - 100.0).abs() < 1e-9);
        assert!(cfg.kernel_spec().is_err());
    }
}
