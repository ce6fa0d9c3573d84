use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use longmem::asymptotics::{
    acvf_rate_constant, power_law_acvf_constant, resolvent_rate_constant, subexp_constants, SubexpConstants,
};
use longmem::autocovariance::{autocov_continuous_with, autocov_discrete_with, CovarianceSummary};
use longmem::config::{ExperimentConfig, FamilyName};
use longmem::io::{write_columns, write_json};
use longmem::kernels::{KernelFamily, Regime, RegimeClass, TimeMode};
use longmem::par::Exec;
use longmem::resolvent::{limiting_value, renewal_residual, Residual, Scheme};
use longmem::simulate::{
    empirical_autocov, replicate, simulate_continuous_em, simulate_discrete, simulate_stationary_discrete,
    CovarianceEstimate, Noise, PathScheme, PathSeed, SamplePath,
};
use longmem::verify::{default_truncation, run_targets, solve_continuous, solve_discrete};
use longmem::{Error, Result};

#[derive(Parser)]
#[command(
    name = "longmem",
    version,
    about = "Resolvents, autocovariances and long-memory asymptotics of linear Volterra equations"
)]
struct Cli {
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed (overrides `simulation.seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Tabulate the resolvent.
    Resolvent,
    /// Stationary autocovariance at the configured lags.
    Autocov,
    /// Regime and closed-form decay constants.
    Asymptotics,
    /// Sample paths and empirical autocovariances.
    Simulate,
    /// Run the configured asymptotic targets.
    Verify,
}

const EXIT_OTHER: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_VERIFY: u8 = 3;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_VERIFY),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { EXIT_CONFIG } else { EXIT_OTHER })
        }
    }
}

fn run(cli: &Cli) -> Result<bool> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| Error::Config("--config is required".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.simulation.seed = seed;
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be positive".into()));
        }
        longmem::par::set_threads(n).map_err(Error::Config)?;
    }
    let exec = Exec::Parallel;
    let out = cfg.output.dir.clone();
    match cli.command {
        Command::Resolvent => resolvent(&cfg, &out).map(|_| true),
        Command::Autocov => autocov(&cfg, &out, exec).map(|_| true),
        Command::Asymptotics => asymptotics(&cfg, &out).map(|_| true),
        Command::Simulate => simulate(&cfg, &out, exec).map(|_| true),
        Command::Verify => {
            let summary = run_targets(&cfg, exec)?;
            write_json(&out.join("verify.json"), &summary)?;
            for o in &summary.outcomes {
                let status = if o.passed { "PASS" } else { "FAIL" };
                match &o.error_message {
                    Some(msg) => println!("{status} {}: {msg}", o.name),
                    None => println!(
                        "{status} {}: final error {:.3e} (threshold {:.1e})",
                        o.name, o.final_error, o.threshold
                    ),
                }
            }
            Ok(summary.all_passed)
        }
    }
}

#[derive(Serialize)]
struct ResolventSummary {
    scheme: Scheme,
    mode: TimeMode,
    h: f64,
    n_points: usize,
    r_last: f64,
    nonincreasing: bool,
    within_unit_interval: bool,
    log_convex_tail: Option<bool>,
    renewal_residual: Option<Residual>,
}

fn resolvent(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let spec = cfg.kernel_spec()?;
    let summary = match spec.mode {
        TimeMode::Discrete => {
            let r = solve_discrete(cfg, &spec)?;
            let n: Vec<f64> = (0..r.len()).map(|i| i as f64).collect();
            write_columns(&out.join("resolvent.csv"), &["n", "r"], &[&n, &r])?;
            ResolventSummary {
                scheme: Scheme::Discrete,
                mode: spec.mode,
                h: 1.0,
                n_points: r.len(),
                r_last: *r.last().unwrap_or(&f64::NAN),
                nonincreasing: r.windows(2).all(|w| w[1] <= w[0] + 1e-12),
                within_unit_interval: r.iter().all(|&v| (-1e-12..=1.0 + 1e-12).contains(&v)),
                log_convex_tail: None,
                renewal_residual: None,
            }
        }
        TimeMode::Continuous => {
            let res = solve_continuous(cfg, &spec)?;
            let t: Vec<f64> = res.times().collect();
            let rho = res.rho.clone().unwrap_or_else(|| vec![f64::NAN; t.len()]);
            write_columns(&out.join("resolvent.csv"), &["t", "r", "rho"], &[&t, &res.r, &rho])?;
            let critical = spec.classify_regime()?.regime == Regime::Critical;
            ResolventSummary {
                scheme: res.scheme,
                mode: spec.mode,
                h: res.grid.h,
                n_points: res.grid.n_points,
                r_last: *res.r.last().unwrap(),
                nonincreasing: res.is_nonincreasing(1e-12),
                within_unit_interval: res.within_unit_interval(1e-12),
                log_convex_tail: res.log_convex,
                renewal_residual: if critical {
                    Some(renewal_residual(&res, &spec)?)
                } else {
                    None
                },
            }
        }
    };
    write_json(&out.join("resolvent.json"), &summary)
}

fn autocov(cfg: &ExperimentConfig, out: &Path, exec: Exec) -> Result<()> {
    let spec = cfg.kernel_spec()?;
    let lags = &cfg.autocov.lags;
    if lags.is_empty() {
        return Err(Error::Config("autocov.lags is empty".into()));
    }
    let series = match spec.mode {
        TimeMode::Discrete => {
            let r = solve_discrete(cfg, &spec)?;
            let m = cfg.autocov.truncation.unwrap_or_else(|| default_truncation(r.len()));
            let int_lags = lags
                .iter()
                .map(|&l| {
                    if l >= 0.0 && l.fract() == 0.0 {
                        Ok(l as usize)
                    } else {
                        Err(Error::Config(format!("discrete lag {l} is not a non-negative integer")))
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            autocov_discrete_with(&r, cfg.autocov.sigma, &int_lags, m, exec)?
        }
        TimeMode::Continuous => {
            let res = solve_continuous(cfg, &spec)?;
            autocov_continuous_with(&res, cfg.autocov.sigma, lags, exec)?
        }
    };
    write_columns(
        &out.join("autocov.csv"),
        &["lag", "c", "tail_correction"],
        &[&series.lags, &series.c, &series.tail_correction],
    )?;
    let summary: CovarianceSummary = series.summary();
    write_json(&out.join("autocov.json"), &summary)
}

#[derive(Serialize)]
struct AsymptoticsSummary {
    mode: TimeMode,
    a: Option<f64>,
    alpha: Option<f64>,
    total_mass: Option<f64>,
    regime: Option<RegimeClass>,
    resolvent_rate_constant: Option<f64>,
    acvf_rate_constant: Option<f64>,
    power_law_acvf_constant: Option<f64>,
    limiting_value: Option<f64>,
    subexponential: Option<SubexpConstants>,
    slow_variation: Option<String>,
}

fn asymptotics(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let sigma = cfg.autocov.sigma;
    if cfg.kernel.family == FamilyName::TargetDecay {
        let l = cfg.slow_variation()?;
        let summary = AsymptoticsSummary {
            mode: cfg.kernel.mode,
            a: None,
            alpha: Some(l.alpha),
            total_mass: None,
            regime: None,
            resolvent_rate_constant: None,
            acvf_rate_constant: None,
            power_law_acvf_constant: None,
            limiting_value: None,
            subexponential: None,
            slow_variation: Some(l.description.clone()),
        };
        return write_json(&out.join("asymptotics.json"), &summary);
    }
    let spec = cfg.kernel_spec()?;
    let mass = spec.total_mass()?;
    let class = spec.classify_regime()?;
    let alpha = spec.alpha();
    let critical = class.regime == Regime::Critical;
    let in_range = |lo: f64, hi: f64| alpha.filter(|&a| critical && a > lo && a < hi);
    let summary = AsymptoticsSummary {
        mode: spec.mode,
        a: Some(spec.a),
        alpha,
        total_mass: Some(mass),
        regime: Some(class),
        resolvent_rate_constant: in_range(0.0, 1.0).map(resolvent_rate_constant).transpose()?,
        acvf_rate_constant: in_range(0.0, 0.5).map(|a| acvf_rate_constant(a, sigma)).transpose()?,
        power_law_acvf_constant: match (&spec.family, spec.mode, in_range(0.0, 0.5)) {
            (KernelFamily::PowerLaw { scale, .. }, TimeMode::Continuous, Some(a)) => {
                Some(power_law_acvf_constant(a, *scale, sigma)?)
            }
            _ => None,
        },
        limiting_value: if critical {
            match limiting_value(&spec) {
                Ok(v) => Some(v),
                Err(Error::InfiniteMoment) => None,
                Err(e) => return Err(e),
            }
        } else {
            None
        },
        subexponential: if class.regime == Regime::Subexponential {
            Some(subexp_constants(spec.a, mass, sigma)?)
        } else {
            None
        },
        slow_variation: alpha.and_then(|_| spec.slow_variation().ok()).map(|l| l.description),
    };
    write_json(&out.join("asymptotics.json"), &summary)
}

#[derive(Serialize)]
struct SimulationSummary {
    scheme: PathScheme,
    seed: u64,
    paths: usize,
    sigma: f64,
    noise: Noise,
    h: f64,
    n_values: usize,
    truncation_m: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    estimates: Option<Vec<PathEstimate>>,
}

#[derive(Serialize)]
struct PathEstimate {
    stream: u64,
    mean: f64,
    autocov: CovarianceEstimate,
}

fn simulate(cfg: &ExperimentConfig, out: &Path, exec: Exec) -> Result<()> {
    let sim = &cfg.simulation;
    let spec = cfg.kernel_spec()?;
    if sim.paths == 0 {
        return Err(Error::Config("simulation.paths must be positive".into()));
    }
    let scheme = sim.scheme.unwrap_or(match spec.mode {
        TimeMode::Discrete => PathScheme::DiscreteRecursion,
        TimeMode::Continuous => PathScheme::EulerMaruyama,
    });
    let n_steps = || {
        sim.n_steps
            .or(cfg.solver.n_steps)
            .ok_or_else(|| Error::Config("simulation needs n_steps".into()))
    };
    let seed_of = |stream: u64| PathSeed::new(sim.seed, stream);
    let paths: Vec<SamplePath> = match scheme {
        PathScheme::DiscreteRecursion => {
            if spec.mode != TimeMode::Discrete {
                return Err(Error::Config("discrete_recursion needs a discrete kernel".into()));
            }
            let n = n_steps()?;
            let kernel = spec.discrete_kernel(n + 1)?;
            replicate(sim.paths, exec, |p| {
                simulate_discrete(
                    &kernel,
                    spec.a,
                    sim.sigma,
                    n,
                    sim.x0,
                    sim.noise,
                    seed_of(p),
                    cfg.solver.convolution,
                )
            })
        }
        PathScheme::EulerMaruyama => {
            if spec.mode != TimeMode::Continuous {
                return Err(Error::Config("euler_maruyama needs a continuous kernel".into()));
            }
            let h = sim.h.unwrap_or(cfg.solver.h);
            let t_max = sim
                .t_max
                .or(cfg.solver.t_max)
                .ok_or_else(|| Error::Config("euler_maruyama needs t_max".into()))?;
            replicate(sim.paths, exec, |p| {
                simulate_continuous_em(
                    &spec,
                    sim.sigma,
                    h,
                    t_max,
                    sim.x0,
                    sim.noise,
                    seed_of(p),
                    cfg.solver.convolution,
                )
            })
            .into_iter()
            .collect::<Result<_>>()?
        }
        PathScheme::StationaryMa => {
            if spec.mode != TimeMode::Discrete {
                return Err(Error::Config("stationary_ma needs a discrete kernel".into()));
            }
            let n = n_steps()?;
            let m = sim
                .ma_truncation
                .ok_or_else(|| Error::Config("stationary_ma needs simulation.ma_truncation".into()))?;
            let kernel = spec.discrete_kernel(m + 1)?;
            let r = longmem::resolvent::solve_resolvent_discrete(&kernel, spec.a, m + 1, cfg.solver.convolution);
            replicate(sim.paths, exec, |p| {
                simulate_stationary_discrete(&r, sim.sigma, n + 1, m, sim.noise, seed_of(p), sim.ma_tail_tol)
            })
            .into_iter()
            .collect::<Result<_>>()?
        }
    };
    let estimates = if sim.lags.is_empty() {
        None
    } else {
        Some(
            paths
                .iter()
                .map(|p| {
                    Ok(PathEstimate {
                        stream: p.seed.stream,
                        mean: longmem::simulate::mean_estimate(&p.values).mean,
                        autocov: empirical_autocov(&p.values, &sim.lags)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?,
        )
    };
    if sim.write_paths {
        let column = if scheme == PathScheme::EulerMaruyama { "t" } else { "n" };
        for p in &paths {
            let t: Vec<f64> = (0..p.values.len()).map(|i| i as f64 * p.h).collect();
            let file = out.join(format!("path_{:04}.csv", p.seed.stream));
            write_columns(&file, &[column, "x"], &[&t, &p.values])?;
        }
    }
    let first = &paths[0];
    let summary = SimulationSummary {
        scheme,
        seed: sim.seed,
        paths: paths.len(),
        sigma: sim.sigma,
        noise: sim.noise,
        h: first.h,
        n_values: first.values.len(),
        truncation_m: first.truncation_m,
        estimates,
    };
    write_json(&out.join("simulation.json"), &summary)
}
