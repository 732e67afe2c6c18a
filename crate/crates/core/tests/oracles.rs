//! Trace-level oracles: recorded closed-loop runs are replayed through
//! independently assembled filters and compared with closed forms.

use nalgebra::{DMatrix, DVector};

use ftlab::control::ControllerKind;
use ftlab::drem::{excitation_gramian, DreKind, LsDreState};
use ftlab::mathx;
use ftlab::plant::JointState;
use ftlab::regression::{Parameterization, RegressionFilter, RegressionPair};
use ftlab::sim::{run_closed_loop, SimConfig, Trace};

fn run(kind: ControllerKind, p: Parameterization, dre: Option<DreKind>) -> (SimConfig, Trace) {
    let cfg = SimConfig { parameterization: p, dre, ..SimConfig::for_controller(kind) };
    let trace = run_closed_loop(&cfg).unwrap();
    (cfg, trace)
}

/// Pairs the controller saw, rebuilt from the recorded signals.
fn replay_pairs(cfg: &SimConfig, trace: &Trace) -> Vec<RegressionPair> {
    let plant = cfg.plant().unwrap();
    let s0 = JointState::new(cfg.q0.clone(), cfg.qd0.clone()).unwrap();
    let mut f =
        RegressionFilter::new(cfg.parameterization, plant.system.clone(), cfg.lambda0, cfg.lambda1, &s0).unwrap();
    trace.records.iter().map(|r| f.step(&r.q, &r.qd, &r.tau, trace.dt).unwrap()).collect()
}

fn theta(cfg: &SimConfig) -> DVector<f64> {
    cfg.physical.theta().stacked()
}

#[test]
fn replayed_regressor_matches_recorded() {
    let (cfg, trace) = run(ControllerKind::C1, Parameterization::ForceBalance, None);
    for (r, p) in trace.records.iter().zip(replay_pairs(&cfg, &trace)) {
        assert_eq!(r.omega, p.omega);
    }
}

fn residual_after_five_seconds(p: Parameterization) {
    let (cfg, trace) = run(ControllerKind::C1, Parameterization::ForceBalance, None);
    let th = theta(&cfg);
    let pairs = replay_pairs(&SimConfig { parameterization: p, ..cfg.clone() }, &trace);
    for (r, pair) in trace.records.iter().zip(&pairs).filter(|(r, _)| r.t >= 5.0) {
        let res = pair.residual(&th).norm();
        assert!(res <= 1e-6 * (1.0 + pair.y.norm()), "{p} t={} residual {res:e}", r.t);
    }
}

#[test]
fn force_balance_residual_vanishes_after_five_seconds() {
    residual_after_five_seconds(Parameterization::ForceBalance);
}

#[test]
fn power_balance_residual_vanishes_after_five_seconds() {
    residual_after_five_seconds(Parameterization::PowerBalance);
}

#[test]
fn regression_residual_within_euler_slack_throughout() {
    // zero-transient initialization: r(0) = 0, leaving only the 5 dt slack
    for p in [Parameterization::ForceBalance, Parameterization::PowerBalance] {
        let (cfg, trace) = run(ControllerKind::C1, p, None);
        let th = theta(&cfg);
        let pairs = replay_pairs(&cfg, &trace);
        assert_eq!(pairs[0].residual(&th).norm(), 0.0);
        let worst = pairs.iter().map(|q| q.residual(&th).norm()).fold(0.0, f64::max);
        assert!(worst <= 5.0 * cfg.dt, "{p} worst residual {worst:e}");
    }
}

/// `|Y - Delta theta| / (1 + |Delta| |theta|)` with `Delta` from LU and
/// `Y = Delta Phi^{-1} v`, independent of the library's Cramer path.
fn identity_by_inverse(phi: &DMatrix<f64>, v: &DVector<f64>, th: &DVector<f64>) -> f64 {
    let delta = phi.determinant();
    let y = phi.clone().try_inverse().expect("mixing matrix invertible") * v * delta;
    (y - th * delta).norm() / (1.0 + delta.abs() * th.norm())
}

#[test]
fn ls_identity_after_two_seconds_of_c1() {
    let (cfg, trace) = run(ControllerKind::C1, Parameterization::ForceBalance, None);
    let th = theta(&cfg);
    let mut dre = LsDreState::new(cfg.ls.clone()).unwrap();
    let pairs = replay_pairs(&cfg, &trace);
    let mut worst = 0.0f64;
    for (r, pair) in trace.records.iter().zip(&pairs) {
        if r.t >= 2.0 {
            let e = identity_by_inverse(&dre.mixing_matrix(), &dre.mixing_vector(), &th);
            assert!((e - r.identity_error).abs() <= 1e-9 * (1.0 + e), "replay disagrees at t={}", r.t);
            worst = worst.max(e);
        }
        dre.step(pair, trace.dt).unwrap();
    }
    assert!(worst <= 1e-5, "identity error after 2 s: {worst:e}");
}

#[test]
fn kreisselmeier_identity_after_two_seconds_of_c2() {
    let (_, trace) = run(ControllerKind::C2, Parameterization::ForceBalance, None);
    let worst = trace.records.iter().filter(|r| r.t >= 2.0).map(|r| r.identity_error).fold(0.0, f64::max);
    assert!(worst <= 1e-5, "identity error after 2 s: {worst:e}");
}

#[test]
fn cramer_matches_adjugate_along_ls_run() {
    let (cfg, trace) = run(ControllerKind::C1, Parameterization::ForceBalance, Some(DreKind::LeastSquares));
    let mut dre = LsDreState::new(cfg.ls.clone()).unwrap();
    for pair in replay_pairs(&cfg, &trace) {
        let phi = dre.mixing_matrix();
        let v = dre.mixing_vector();
        let cramer = mathx::cramer_products(&phi, &v).unwrap();
        let adj = mathx::adjugate(&phi).unwrap() * &v;
        assert!((&cramer - &adj).norm() <= 1e-10 * (1.0 + adj.norm()));
        dre.step(&pair, trace.dt).unwrap();
    }
}

#[test]
fn ls_scaling_strictly_decreases_in_unit_interval() {
    let (_, trace) = run(ControllerKind::C1, Parameterization::ForceBalance, None);
    assert_eq!(trace.records[0].ls_z, 1.0);
    for w in trace.records.windows(2) {
        assert!(w[1].ls_z < w[0].ls_z && w[1].ls_z > 0.0);
        assert!(w[1].ls_min_eig > 0.0);
    }
}

#[test]
fn c4_still_decaying_at_four_seconds() {
    let (_, trace) = run(ControllerKind::C4, Parameterization::ForceBalance, None);
    let at = |t: f64| trace.records[(t / trace.dt).round() as usize].e1.norm();
    assert!(at(4.0) > 1e-3);
    assert!(at(4.5) < at(4.0) && at(6.0) < at(4.5));
}

#[test]
fn c4_excitation_grows_after_initial_interval() {
    let (_, trace) = run(ControllerKind::C4, Parameterization::ForceBalance, None);
    let mu = |len: f64| {
        let g = excitation_gramian(trace.records.iter().map(|r| (r.t, &r.omega)), 0.0, len).unwrap();
        mathx::min_eig_sym(&g).unwrap()
    };
    let (early, later) = (mu(0.5), mu(5.0));
    assert!(later > early && later > 0.0, "mu(0.5) = {early:e}, mu(5) = {later:e}");
}

#[test]
fn time_grid_is_exact() {
    let (cfg, trace) = run(ControllerKind::C2, Parameterization::ForceBalance, None);
    assert_eq!(trace.records.len(), cfg.step_count() + 1);
    for (k, r) in trace.records.iter().enumerate() {
        let t = k as f64 * cfg.dt;
        assert!((r.t - t).abs() <= f64::EPSILON * t.max(1.0), "k={k}");
    }
}
