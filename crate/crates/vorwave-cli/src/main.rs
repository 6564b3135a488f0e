//! `vorwave`: command-line front end.
//!
//! Every command reads an optional JSON config, applies flag overrides and
//! writes its artifacts plus `manifest.json` into the run directory. Exit codes:
//! 0 success, 1 configuration error, 2 numerical failure.

mod commands;
mod config;
mod output;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use commands::NumericalFailure;
use config::{ConfigError, ExperimentConfig};
use output::{Failure, RunDir};
use std::path::PathBuf;
use std::process::ExitCode;
use vorwave_core::dispersion::Depth;
use vorwave_core::dynamics::Scheme;
use vorwave_core::nonres::SiteSelection;
use vorwave_core::solver::Formulation;

#[derive(Parser, Debug)]
#[command(name = "vorwave", version, about = "Gravity-capillary water waves with constant vorticity")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON experiment config; every block is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run directory (default: runs/<command>).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for the parallel kernels.
    #[arg(long, global = true, env = "VORWAVE_THREADS")]
    threads: Option<usize>,
    /// Recorded in the manifest; no command draws random numbers.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Also write gnuplot scripts next to the tables.
    #[arg(long, global = true)]
    gnuplot: bool,
    #[arg(long, global = true)]
    g: Option<f64>,
    /// Surface tension.
    #[arg(long, global = true)]
    kappa: Option<f64>,
    /// Vorticity.
    #[arg(long, global = true)]
    gamma: Option<f64>,
    /// Depth: a positive number or `inf`.
    #[arg(long, global = true, value_parser = parse_depth)]
    depth: Option<Depth>,
    /// Signed tangential sites, e.g. `1,-2`.
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    sites: Option<Vec<i64>>,
    /// Amplitudes ξ_a, one per site.
    #[arg(long, global = true, value_delimiter = ',')]
    xi: Option<Vec<f64>>,
}

fn parse_depth(s: &str) -> std::result::Result<Depth, String> {
    s.parse()
}

#[derive(Args, Debug, Default)]
struct TorusArgs {
    /// Amplitude scale ε.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Angle cutoff |ℓ_a| ≤ n_phi.
    #[arg(long)]
    n_phi: Option<usize>,
    /// Spatial cutoff |j| ≤ n_modes.
    #[arg(long)]
    n_modes: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Table of linear frequencies.
    Dispersion {
        #[arg(long)]
        jmax: Option<u64>,
    },
    /// Linear quasi-periodic traveling wave as a torus snapshot.
    Linwave {
        #[command(flatten)]
        torus: TorusArgs,
    },
    /// Grid estimate of the excluded κ-measure.
    Measure {
        #[arg(long)]
        upsilon: Option<f64>,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        ellmax: Option<usize>,
        #[arg(long)]
        jcut: Option<usize>,
        #[arg(long)]
        grid: Option<usize>,
        /// Amplitude label; the perturbation enters through the frequency model.
        #[arg(long)]
        epsilon: Option<f64>,
        /// `normalform.json` supplying the frequency model.
        #[arg(long)]
        normal_form: Option<PathBuf>,
    },
    /// Lower bounds of the κ-derivatives of every Melnikov family.
    Transversality {
        #[arg(long)]
        ellmax: Option<usize>,
        #[arg(long)]
        jcut: Option<usize>,
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long)]
        m0: Option<usize>,
    },
    /// Constants of the reduced linearized operator at a torus snapshot.
    Normalform {
        #[arg(long)]
        snapshot: Option<PathBuf>,
    },
    /// Newton continuation of the linear torus.
    Solve {
        #[command(flatten)]
        torus: TorusArgs,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long, value_parser = parse_formulation)]
        formulation: Option<Formulation>,
        /// Continuation ladder of amplitudes, e.g. `1e-3,5e-3,1e-2`.
        #[arg(long, value_delimiter = ',')]
        ladder: Option<Vec<f64>>,
    },
    /// Time evolution of a torus snapshot (or of the linear seed) with invariants.
    Validate {
        #[arg(long)]
        snapshot: Option<PathBuf>,
        /// ε of the linear seed when no snapshot is given.
        #[arg(long)]
        amplitude: Option<f64>,
        #[arg(long)]
        tend: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
        /// Spatial cutoff of the seed run.
        #[arg(long)]
        modes: Option<usize>,
        #[arg(long)]
        periods: Option<f64>,
        #[arg(long, value_parser = parse_scheme)]
        scheme: Option<Scheme>,
    },
}

fn parse_formulation(s: &str) -> std::result::Result<Formulation, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| {
        format!("unknown formulation '{s}' (frequency or counterterm)")
    })
}

fn parse_scheme(s: &str) -> std::result::Result<Scheme, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("unknown scheme '{s}' (auto, rk4, lawson, implicit_midpoint)"))
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Dispersion { .. } => "dispersion",
            Command::Linwave { .. } => "linwave",
            Command::Measure { .. } => "measure",
            Command::Transversality { .. } => "transversality",
            Command::Normalform { .. } => "normalform",
            Command::Solve { .. } => "solve",
            Command::Validate { .. } => "validate",
        }
    }
}

fn set<T: Clone>(slot: &mut T, v: &Option<T>) {
    if let Some(v) = v {
        *slot = v.clone();
    }
}

fn apply_torus(cfg: &mut ExperimentConfig, t: &TorusArgs) {
    set(&mut cfg.torus.epsilon, &t.epsilon);
    set(&mut cfg.solver.n_phi, &t.n_phi);
    set(&mut cfg.solver.n_modes, &t.n_modes);
}

fn effective_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    set(&mut cfg.physics.g, &cli.g);
    set(&mut cfg.physics.kappa, &cli.kappa);
    set(&mut cfg.physics.gamma, &cli.gamma);
    set(&mut cfg.physics.depth, &cli.depth);
    if let Some(s) = &cli.sites {
        cfg.sites = SiteSelection {
            splus: s.iter().map(|j| j.unsigned_abs()).collect(),
            sigma: s.iter().map(|j| j.signum() as i8).collect(),
        };
        if cli.xi.is_none() && cfg.torus.xi.len() != s.len() {
            cfg.torus.xi = vec![1.0; s.len()];
        }
    }
    set(&mut cfg.torus.xi, &cli.xi);
    match &cli.command {
        Command::Dispersion { jmax } => set(&mut cfg.dispersion.jmax, jmax),
        Command::Linwave { torus } => apply_torus(&mut cfg, torus),
        Command::Measure {
            upsilon,
            tau,
            ellmax,
            jcut,
            grid,
            epsilon,
            normal_form,
        } => {
            set(&mut cfg.nonres.upsilon, upsilon);
            set(&mut cfg.nonres.tau, tau);
            set(&mut cfg.nonres.ell_max, ellmax);
            set(&mut cfg.nonres.j_cutoff, jcut);
            set(&mut cfg.nonres.kappa_grid, grid);
            set(&mut cfg.measure.epsilon, epsilon);
            if normal_form.is_some() {
                cfg.measure.normal_form = normal_form.clone();
            }
        }
        Command::Transversality { ellmax, jcut, grid, m0 } => {
            set(&mut cfg.nonres.ell_max, ellmax);
            set(&mut cfg.nonres.j_cutoff, jcut);
            set(&mut cfg.nonres.kappa_grid, grid);
            set(&mut cfg.nonres.m0, m0);
        }
        Command::Normalform { snapshot } => {
            if snapshot.is_some() {
                cfg.normalform.snapshot = snapshot.clone();
            }
        }
        Command::Solve {
            torus,
            tol,
            formulation,
            ladder,
        } => {
            apply_torus(&mut cfg, torus);
            set(&mut cfg.solver.tol, tol);
            set(&mut cfg.solver.formulation, formulation);
            set(&mut cfg.torus.ladder, ladder);
        }
        Command::Validate {
            snapshot,
            amplitude,
            tend,
            dt,
            modes,
            periods,
            scheme,
        } => {
            if snapshot.is_some() {
                cfg.validate.snapshot = snapshot.clone();
            }
            set(&mut cfg.validate.amplitude, amplitude);
            if tend.is_some() {
                cfg.validate.tend = *tend;
            }
            if dt.is_some() {
                cfg.validate.dt = *dt;
            }
            set(&mut cfg.validate.modes, modes);
            set(&mut cfg.validate.periods, periods);
            set(&mut cfg.validate.scheme, scheme);
        }
    }
    cfg.check()?;
    Ok(cfg)
}

/// Exit code of an error: 1 for invalid input, 2 for numerical failures.
fn classify(err: &anyhow::Error) -> (&'static str, i32) {
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return ("config", 1);
        }
        if cause.is::<NumericalFailure>() {
            return ("numerical", 2);
        }
        if let Some(e) = cause.downcast_ref::<vorwave_core::Error>() {
            return if e.is_config() { ("config", 1) } else { ("numerical", 2) };
        }
    }
    ("numerical", 2)
}

fn execute(cli: &Cli, cfg: &ExperimentConfig, run: &mut RunDir) -> Result<()> {
    match cli.command {
        Command::Dispersion { .. } => commands::dispersion(cfg, run, cli.gnuplot),
        Command::Linwave { .. } => commands::linwave(cfg, run),
        Command::Measure { .. } => commands::measure(cfg, run, cli.gnuplot),
        Command::Transversality { .. } => commands::transversality(cfg, run),
        Command::Normalform { .. } => commands::normalform(cfg, run),
        Command::Solve { .. } => commands::solve(cfg, run),
        Command::Validate { .. } => commands::validate(cfg, run, cli.gnuplot),
    }
}

fn report(kind: &str, code: i32, err: &anyhow::Error) {
    let line = serde_json::json!({ "kind": kind, "exit_code": code, "reason": format!("{err:#}") });
    eprintln!("vorwave: {err:#}");
    eprintln!("{line}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let cfg = match effective_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            let (kind, code) = classify(&e);
            report(kind, code, &e);
            return ExitCode::from(code as u8);
        }
    };
    let threads = match cli.threads {
        Some(0) => {
            let e = anyhow::Error::new(ConfigError("--threads must be at least 1".into()));
            report("config", 1, &e);
            return ExitCode::from(1);
        }
        Some(n) => n,
        None => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
    };
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
        report("numerical", 2, &anyhow::anyhow!("thread pool: {e}"));
        return ExitCode::from(2);
    }
    let name = cli.command.name();
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(name));
    let run = cfg
        .canonical_json()
        .and_then(|json| RunDir::create(&out, name, cli.config.as_deref(), &json, cli.seed, threads));
    let mut run = match run {
        Ok(r) => r,
        Err(e) => {
            report("config", 1, &e);
            return ExitCode::from(1);
        }
    };
    let result = execute(&cli, &cfg, &mut run);
    let failure = result.as_ref().err().map(|e| {
        let (kind, exit_code) = classify(e);
        report(kind, exit_code, e);
        Failure {
            kind,
            exit_code,
            reason: format!("{e:#}"),
        }
    });
    let code = failure.as_ref().map_or(0, |f| f.exit_code);
    if let Err(e) = run.finish(failure.as_ref()) {
        eprintln!("vorwave: writing manifest: {e:#}");
        return ExitCode::from(2);
    }
    ExitCode::from(code as u8)
}
