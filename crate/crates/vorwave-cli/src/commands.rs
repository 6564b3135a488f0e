use crate::config::{ConfigError, ExperimentConfig, ModelConstants};
use crate::output::{num, RunDir};
use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::Path;
use vorwave_core::dispersion::dispersion_table;
use vorwave_core::dynamics::{integrate, IntegratorConfig, InvariantReport, Sample, State};
use vorwave_core::fields::{DivisorReport, TravelingProfile};
use vorwave_core::nonres::{
    family_transversality, measure_estimate, melnikov_margin, momentum_triples, FrequencyModel, MelnikovClass,
    MelnikovTriple,
};
use vorwave_core::normalform::{frequency_model, reduce, NormalFormResiduals, ReductionConstants};
use vorwave_core::solver::{
    embedding_from_header, linear_divisors, linear_seed, newton_solve, read_snapshot, solve_ladder,
    validate_solution, write_snapshot, SolveReport, TorusEmbedding, ValidateConfig, ValidationReport,
};

/// A numerical failure with a machine-readable reason (exit code 2).
#[derive(Debug)]
pub struct NumericalFailure(pub String);

impl std::fmt::Display for NumericalFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for NumericalFailure {}

/// Maps library errors into the crate-wide error so the exit code can be classified.
fn core<T, E: Into<vorwave_core::Error>>(r: std::result::Result<T, E>) -> Result<T> {
    r.map_err(|e| anyhow::Error::new(e.into()))
}

fn register_snapshot(run: &mut RunDir, stem: &str) {
    for ext in ["json", "eta.csv", "psi.csv"] {
        run.register(&format!("{stem}.{ext}"));
    }
}

pub fn dispersion(cfg: &ExperimentConfig, run: &mut RunDir, gnuplot: bool) -> Result<()> {
    let rows = run.time("table", || dispersion_table(&cfg.physics, cfg.dispersion.jmax));
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.j.to_string(),
                num(r.g_j),
                num(r.m_j),
                num(r.omega_j),
                num(r.big_omega_j),
                num(r.lambda_j),
                num(r.c_j),
            ]
        })
        .collect();
    run.write_csv(
        "dispersion.csv",
        &["j", "G_j", "M_j", "omega_j", "Omega_j", "lambda_j", "c_j"],
        &table,
    )?;
    if gnuplot {
        run.write(
            "dispersion.gp",
            b"set datafile separator ','\nset key autotitle columnhead\nset xlabel 'j'\n\
plot 'dispersion.csv' using 1:5 with linespoints, '' using 1:4 with linespoints\n",
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
struct LinwaveSummary<'a> {
    sites: Vec<i64>,
    xi: &'a [f64],
    epsilon: f64,
    omega: &'a [f64],
    n_phi: usize,
    n_modes: usize,
    unknowns: usize,
    divisors: vorwave_core::solver::DivisorCheck,
}

fn seed_of(cfg: &ExperimentConfig, epsilon: f64) -> Result<TorusEmbedding> {
    core(linear_seed(
        &cfg.physics,
        &cfg.sites,
        &cfg.torus.xi,
        epsilon,
        cfg.solver.n_phi,
        cfg.solver.n_modes,
    ))
}

pub fn linwave(cfg: &ExperimentConfig, run: &mut RunDir) -> Result<()> {
    let seed = seed_of(cfg, cfg.torus.epsilon)?;
    let layout = seed.layout();
    core(write_snapshot(run.root(), "seed", &seed, None))?;
    register_snapshot(run, "seed");
    run.write_json(
        "linwave.json",
        &LinwaveSummary {
            sites: cfg.sites.jvec(),
            xi: &seed.xi,
            epsilon: seed.epsilon,
            omega: &seed.omega,
            n_phi: seed.n_phi(),
            n_modes: seed.n_modes(),
            unknowns: layout.unknowns(),
            divisors: linear_divisors(&seed, &layout),
        },
    )?;
    Ok(())
}

/// Normal-form output consumed back by `measure`.
#[derive(Serialize, Deserialize)]
struct NormalFormOutput {
    torus_id: String,
    epsilon: f64,
    m32: f64,
    m1: f64,
    m12: f64,
    constants: ReductionConstants,
    residuals: NormalFormResiduals,
    max_residual: f64,
    divisors: Vec<StageDivisor>,
}

#[derive(Serialize, Deserialize)]
struct StageDivisor {
    stage: String,
    #[serde(flatten)]
    report: DivisorReport,
}

pub fn measure(cfg: &ExperimentConfig, run: &mut RunDir, gnuplot: bool) -> Result<()> {
    let constants = match &cfg.measure.normal_form {
        Some(path) => {
            run.input(path)?;
            let text = std::fs::read_to_string(path)
                .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
            let nf: NormalFormOutput = serde_json::from_str(&text)
                .map_err(|e| ConfigError(format!("invalid normal form {}: {e}", path.display())))?;
            ModelConstants {
                m32: nf.m32,
                m1: nf.m1,
                m12: nf.m12,
            }
        }
        None => cfg.measure.frequency_model.unwrap_or(ModelConstants {
            m32: 1.0,
            m1: 0.0,
            m12: 0.0,
        }),
    };
    let p = cfg.physics;
    let model_at = |k: f64| FrequencyModel {
        m32: constants.m32,
        m1: constants.m1,
        m12: constants.m12,
        physics: p.with_kappa(k),
        r: Default::default(),
    };
    let est = run.time("measure", || {
        core(measure_estimate(model_at, &cfg.sites, &cfg.nonres, cfg.measure.epsilon))
    })?;
    run.write_json("measure.json", &est)?;
    let rows: Vec<Vec<String>> = est
        .excluded_intervals
        .iter()
        .map(|(a, b)| vec![num(*a), num(*b)])
        .collect();
    run.write_csv("excluded_intervals.csv", &["kappa_start", "kappa_end"], &rows)?;
    if gnuplot {
        run.write(
            "measure.gp",
            b"set datafile separator ','\nset xlabel 'kappa'\nunset ytics\n\
plot 'excluded_intervals.csv' every ::1 using 1:(0):2:1 with xerrorbars notitle\n",
        )?;
    }
    Ok(())
}

pub fn transversality(cfg: &ExperimentConfig, run: &mut RunDir) -> Result<()> {
    let mut reports = Vec::new();
    for class in MelnikovClass::ALL {
        let r = run.time("scan", || {
            core(family_transversality(&cfg.physics, &cfg.sites, &cfg.nonres, class))
        })?;
        reports.push(r);
    }
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                serde_json::to_value(r.class).map(|v| v.as_str().unwrap_or("").to_string()).unwrap_or_default(),
                num(r.lower_bound),
                num(r.argmin_kappa),
                r.triples_scanned.to_string(),
            ]
        })
        .collect();
    run.write_json("transversality.json", &reports)?;
    run.write_csv(
        "transversality.csv",
        &["family", "lower_bound", "argmin_kappa", "triples"],
        &rows,
    )?;
    Ok(())
}

fn snapshot_path<'a>(flag: Option<&'a Path>, what: &str) -> Result<&'a Path> {
    flag.ok_or_else(|| ConfigError(format!("{what} needs a torus snapshot (--snapshot or config)")).into())
}

pub fn normalform(cfg: &ExperimentConfig, run: &mut RunDir) -> Result<()> {
    let path = snapshot_path(cfg.normalform.snapshot.as_deref(), "normalform")?;
    let (header, eta_t, psi_t) = core(read_snapshot(path))?;
    run.input(path)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    run.input(&dir.join(&header.eta_file))?;
    run.input(&dir.join(&header.psi_file))?;
    let eta = core(TravelingProfile::extract(&eta_t, &header.jvec, 1e-12))?;
    let psi = core(TravelingProfile::extract(&psi_t, &header.jvec, 1e-12))?;
    let torus_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let nf = run.time("reduce", || {
        core(reduce(
            &header.physics,
            &eta,
            &psi,
            &header.omega,
            &cfg.normalform.settings,
            &torus_id,
        ))
    })?;
    let c = &nf.constants;
    let out = NormalFormOutput {
        torus_id,
        epsilon: header.epsilon,
        m32: c.m32,
        m1: c.m1,
        m12: c.m12,
        constants: c.clone(),
        residuals: nf.residuals.clone(),
        max_residual: nf.residuals.max(),
        divisors: nf
            .divisors
            .iter()
            .map(|(s, r)| StageDivisor {
                stage: s.to_string(),
                report: r.clone(),
            })
            .collect(),
    };
    run.write_json("normalform.json", &out)?;
    let model = frequency_model(c, &header.physics);
    let jm = cfg.normalform.mu_jmax as i64;
    let rows: Vec<Vec<String>> = (-jm..=jm)
        .filter(|&j| j != 0)
        .map(|j| vec![j.to_string(), num(header.physics.big_omega(j)), num(model.mu(j))])
        .collect();
    run.write_csv("mu.csv", &["j", "Omega_j", "mu_j"], &rows)?;
    Ok(())
}

/// Smallest Melnikov margin per family at the working cutoffs (≥ 1 means satisfied).
#[derive(Serialize)]
struct FamilyMargin {
    family: MelnikovClass,
    margin: f64,
    worst: Option<MelnikovTriple>,
}

fn melnikov_margins(cfg: &ExperimentConfig, omega: &[f64]) -> Result<Vec<FamilyMargin>> {
    let model = FrequencyModel::unperturbed(cfg.physics);
    let n = &cfg.nonres;
    let mut out: Vec<FamilyMargin> = MelnikovClass::ALL
        .iter()
        .map(|&family| FamilyMargin {
            family,
            margin: f64::INFINITY,
            worst: None,
        })
        .collect();
    for t in momentum_triples(&cfg.sites, n.ell_max, n.j_cutoff, n.c_restrict) {
        let m = core(melnikov_margin(&model, &cfg.sites, omega, &t, n.upsilon, n.tau))?;
        let slot = &mut out[t.class as usize];
        if m < slot.margin {
            slot.margin = m;
            slot.worst = Some(t);
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct SolveOutput<'a> {
    report: &'a SolveReport,
    omega: &'a [f64],
    alpha: &'a [f64],
    melnikov_margins: Vec<FamilyMargin>,
    ladder: Vec<&'a SolveReport>,
}

pub fn solve(cfg: &ExperimentConfig, run: &mut RunDir) -> Result<()> {
    let seed = seed_of(cfg, cfg.torus.epsilon)?;
    let margins = melnikov_margins(cfg, &seed.omega)?;
    if let Some(bad) = margins.iter().find(|m| m.margin < 1.0) {
        return Err(NumericalFailure(format!(
            "resonant_zone: {:?} Melnikov condition fails at upsilon = {} (margin {:.3e}, {:?})",
            bad.family, cfg.nonres.upsilon, bad.margin, bad.worst
        ))
        .into());
    }
    let results = if cfg.torus.ladder.is_empty() {
        vec![run.time("newton", || core(newton_solve(&seed, &cfg.solver)))?]
    } else {
        run.time("newton", || core(solve_ladder(&seed, &cfg.torus.ladder, &cfg.solver)))?
    };
    let (emb, report) = results.last().context("empty continuation ladder")?;
    core(write_snapshot(run.root(), "torus", emb, Some(report)))?;
    register_snapshot(run, "torus");
    run.write_json(
        "solve_report.json",
        &SolveOutput {
            report,
            omega: &emb.omega,
            alpha: &emb.alpha,
            melnikov_margins: margins,
            ladder: results.iter().map(|r| &r.1).collect(),
        },
    )?;
    if results.len() > 1 {
        let rows: Vec<Vec<String>> = results
            .iter()
            .map(|(e, r)| {
                let mut row = vec![num(r.epsilon), r.iterations.to_string(), num(r.final_residual)];
                row.extend(e.omega.iter().map(|&w| num(w)));
                row
            })
            .collect();
        let names: Vec<String> = (1..=emb.nu()).map(|a| format!("omega_{a}")).collect();
        let mut header = vec!["epsilon", "iterations", "residual"];
        header.extend(names.iter().map(String::as_str));
        run.write_csv("ladder.csv", &header, &rows)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ValidateOutput {
    validation: Option<ValidationReport>,
    invariants: InvariantReport,
}

fn sample_rows(samples: &[Sample]) -> Vec<Vec<String>> {
    samples
        .iter()
        .map(|s| vec![num(s.t), num(s.hamiltonian), num(s.momentum), num(s.mean_eta)])
        .collect()
}

pub fn validate(cfg: &ExperimentConfig, run: &mut RunDir, gnuplot: bool) -> Result<()> {
    let v = &cfg.validate;
    let (emb, n_modes) = match v.snapshot.as_deref() {
        Some(path) => {
            run.input(path)?;
            let (h, _, _) = core(read_snapshot(path))?;
            let emb = core(embedding_from_header(&h))?;
            let n = emb.n_modes();
            (emb, n)
        }
        None => {
            let seed = core(linear_seed(&cfg.physics, &cfg.sites, &cfg.torus.xi, v.amplitude, 1, v.modes))?;
            (seed, v.modes)
        }
    };
    let period = 2.0 * PI / emb.omega[0].abs();
    let t_end = v.tend.unwrap_or(v.periods * period);
    let dt = v.dt.unwrap_or(period / v.steps_per_period as f64);
    let steps = (t_end / dt).ceil().max(1.0);
    let (eta, psi) = core(emb.surface_profiles())?;
    let zero = vec![0.0; emb.nu()];
    let s0 = State::new(eta.spatial_slice(&zero, n_modes), psi.spatial_slice(&zero, n_modes));

    let mut icfg = IntegratorConfig::new(t_end / steps, t_end);
    icfg.scheme = v.scheme;
    icfg.dno = cfg.solver.dno;
    icfg.check_reversibility = v.check_reversibility;
    icfg.sample_every = ((steps / (t_end / period)) / v.samples_per_period as f64).round().max(1.0) as usize;
    let (traj, invariants) = run.time("integrate", || core(integrate(&cfg.physics, &s0, &icfg)))?;
    run.write_csv(
        "invariants.csv",
        &["t", "hamiltonian", "momentum", "mean_eta"],
        &sample_rows(&traj.samples),
    )?;

    let validation = match v.snapshot {
        Some(_) => {
            let vc = ValidateConfig {
                periods: t_end / period,
                steps_per_period: (period / icfg.dt).round() as usize,
                samples_per_period: v.samples_per_period,
                scheme: v.scheme,
                dno: cfg.solver.dno,
            };
            let rep = run.time("compare", || core(validate_solution(&emb, &vc)))?;
            let rows: Vec<Vec<String>> = rep.deviations.iter().map(|(t, d)| vec![num(*t), num(*d)]).collect();
            run.write_csv("deviation.csv", &["t", "deviation"], &rows)?;
            Some(rep)
        }
        None => None,
    };
    run.write_json(
        "validate.json",
        &ValidateOutput {
            validation: validation.clone(),
            invariants,
        },
    )?;
    if gnuplot {
        let plot = if validation.is_some() {
            "plot 'deviation.csv' using 1:2 with lines title 'deviation'\n"
        } else {
            "plot 'invariants.csv' using 1:2 with lines title 'H'\n"
        };
        let script = format!("set datafile separator ','\nset logscale y\nset xlabel 't'\n{plot}");
        run.write("validate.gp", script.as_bytes())?;
    }
    if let Some(rep) = validation {
        if !(rep.max_deviation <= v.tolerance) {
            return Err(NumericalFailure(format!(
                "validation_failed: deviation {:.3e} exceeds {:.1e}",
                rep.max_deviation, v.tolerance
            ))
            .into());
        }
    }
    Ok(())
}
