mod common;

use std::f64::consts::PI;
use vorwave_core::dispersion::{Depth, WavePhysics};
use vorwave_core::dno::DnoConfig;
use vorwave_core::fields::Spectral;
use vorwave_core::nonres::SiteSelection;
use vorwave_core::solver::*;

fn fluid() -> WavePhysics {
    WavePhysics::new(1.0, 1.0, 0.5, Depth::Finite(2.0)).unwrap()
}

#[test]
fn single_site_branch_matches_moving_frame_wave() {
    let p = fluid();
    let s = SiteSelection::new(vec![1], vec![1]).unwrap();
    let (eps, xi, n) = (1e-2, 1.0, 16);
    let seed = linear_seed(&p, &s, &[xi], eps, n, n).unwrap();
    let cfg = SolverConfig {
        tol: 1e-14,
        ..SolverConfig::default()
    };
    let (sol, rep) = newton_solve(&seed, &cfg).unwrap();
    assert!(rep.converged);

    let oracle = common::steady_wave(&p, eps * (xi / (2.0 * PI)).sqrt(), n, &DnoConfig::default());
    assert!(oracle.residual < 1e-14, "{}", oracle.residual);
    let (eta, psi) = sol.surface_profiles().unwrap();
    let d_eta = eta.spatial_slice(&[0.0], n).minus(&oracle.state.eta).max_abs();
    let d_psi = psi.spatial_slice(&[0.0], n).minus(&oracle.state.psi).max_abs();
    assert!(d_eta < 1e-12 && d_psi < 1e-12, "{d_eta:e} {d_psi:e}");
    assert!((sol.omega[0] - oracle.speed).abs() < 1e-12);
}

#[test]
fn counterterm_formulation_solves_modified_system() {
    // With ω prescribed at the unperturbed value the counterterm absorbs the
    // frequency correction: α − Ω⃗ ≈ −(ω_solved − Ω⃗).
    let p = fluid();
    let s = SiteSelection::new(vec![1, 2], vec![1, 1]).unwrap();
    let seed = linear_seed(&p, &s, &[1.0, 0.5], 2e-2, 3, 12).unwrap();
    let (freq, _) = newton_solve(&seed, &SolverConfig::default()).unwrap();
    let cfg = SolverConfig {
        formulation: Formulation::Counterterm,
        ..SolverConfig::default()
    };
    let (ct, rep) = newton_solve(&seed, &cfg).unwrap();
    assert!(rep.converged);
    assert_eq!(ct.omega, seed.omega);
    for a in 0..2 {
        let df = freq.omega[a] - seed.omega[a];
        let da = ct.alpha[a] - seed.alpha[a];
        assert!((df + da).abs() < 1e-2 * df.abs(), "{df:e} {da:e}");
    }
}

#[test]
fn tiny_divisor_is_refused() {
    let p = fluid();
    let s = SiteSelection::new(vec![1, 2], vec![1, 1]).unwrap();
    let seed = linear_seed(&p, &s, &[1.0, 0.5], 1e-2, 3, 12).unwrap();
    let cfg = SolverConfig {
        min_divisor: 10.0,
        ..SolverConfig::default()
    };
    match newton_solve(&seed, &cfg) {
        Err(SolverError::SmallDivisor { ell, .. }) => assert_eq!(ell.len(), 2),
        other => panic!("expected a small-divisor refusal, got {other:?}"),
    }
}

#[test]
fn snapshot_then_validate() {
    let p = fluid();
    let s = SiteSelection::new(vec![1, 2], vec![1, -1]).unwrap();
    let seed = linear_seed(&p, &s, &[1.0, 0.5], 1e-3, 3, 12).unwrap();
    let (sol, rep) = newton_solve(&seed, &SolverConfig::default()).unwrap();
    let dir = std::env::temp_dir().join(format!("vorwave-solver-it-{}", std::process::id()));
    let path = write_snapshot(&dir, "torus", &sol, Some(&rep)).unwrap();
    let (h, eta, psi) = read_snapshot(&path).unwrap();
    assert_eq!(h.report.as_ref().map(|r| r.converged), Some(true));
    let back = embedding_from_header(&h).unwrap();
    assert_eq!(snapshot_consistency(&back, &eta, &psi).unwrap(), 0.0);
    let v = validate_solution(
        &back,
        &ValidateConfig {
            periods: 2.0,
            ..ValidateConfig::default()
        },
    )
    .unwrap();
    assert!(v.max_deviation < 1e-10, "{}", v.max_deviation);
    std::fs::remove_dir_all(dir).ok();
}
