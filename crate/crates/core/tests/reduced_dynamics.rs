use smc_ebm::analysis::{
    classify_trajectory, empirical_1d_dynamics, jarzynski_fixed_point, reduced_ode_trajectory,
    solve_fixed_point, EmpiricalConfig, Outcome, ReducedState, Regime,
};

fn state(regime: Regime, q0: f64) -> ReducedState {
    ReducedState { z: 0.0, regime, q0, z_star_hat: 3f64.ln() }
}

#[test]
fn reduced_jarzynski_ode_converges_to_the_shifted_target() {
    for q0 in [0.3, 0.5, 0.62] {
        let s = state(Regime::Jarzynski, q0);
        let traj = reduced_ode_trajectory(&s, 0.01, 1e4).unwrap();
        let target = s.z_star_hat + (q0 / (1.0 - q0)).ln();
        assert!((traj.last().unwrap() - target).abs() < 1e-3, "q0={q0}");
        assert!((solve_fixed_point(&s).unwrap() - target).abs() < 1e-6);
        assert_eq!(jarzynski_fixed_point(q0, s.z_star_hat), target);
    }
}

#[test]
fn reduced_unweighted_ode_drifts_linearly() {
    let s = state(Regime::Unweighted, 0.45);
    let traj = reduced_ode_trajectory(&s, 0.01, 50.0).unwrap();
    let q_star = 0.25;
    let slope = (traj.last().unwrap() - traj[0]) / 50.0;
    assert!((slope - (0.45 - q_star)).abs() < 0.01 * (0.45 - q_star));
}

#[test]
fn reduced_pcd_ode_is_constant() {
    let mut s = state(Regime::Pcd, 0.4);
    s.z = 0.731;
    let traj = reduced_ode_trajectory(&s, 0.01, 1e3).unwrap();
    assert!(traj.iter().all(|&z| z == 0.731));
}

// Slow walkers keep the barrier crossings rare, which the reduced
// analysis assumes.
fn empirical(regime: Regime, t_end: f64) -> smc_ebm::analysis::EmpiricalOutput {
    let cfg = EmpiricalConfig { regime, t_end, alpha: 0.01, seed: 11, ..EmpiricalConfig::default() };
    empirical_1d_dynamics(&cfg).unwrap()
}

#[test]
fn empirical_regimes_settle_collapse_and_freeze() {
    let jar = empirical(Regime::Jarzynski, 1e3);
    assert_eq!(classify_trajectory(&jar.z, jar.q_hat_star), Outcome::Settled, "{:?}", jar.z.last());
    let unw = empirical(Regime::Unweighted, 1e3);
    assert_eq!(classify_trajectory(&unw.z, unw.q_hat_star), Outcome::Collapsed);
    let pcd = empirical(Regime::Pcd, 1e3);
    assert_eq!(classify_trajectory(&pcd.z, pcd.q_hat_star), Outcome::Frozen);
}

#[test]
fn jarzynski_weights_track_the_log_odds_while_walkers_stay_put() {
    let out = empirical(Regime::Jarzynski, 200.0);
    assert!(out.hops.is_empty());
    let z_end = *out.z.last().unwrap();
    let z0 = out.z[0];
    for (a, near_b) in out.final_log_weights.iter().zip(&out.started_near_b) {
        let expected = if *near_b { -(z_end - z0) } else { 0.0 };
        assert!((a - expected).abs() < 0.1, "A={a} expected {expected}");
    }
}

#[test]
fn weighted_fraction_matches_the_model_mass() {
    let out = empirical(Regime::Jarzynski, 300.0);
    let q0 = out.q_hat0;
    for (w, z) in out.weighted_fraction_b.iter().zip(&out.z) {
        // Frozen walkers carry weight e^{-z} near b, so the weighted fraction is
        // the reduced-system ratio q0 e^{-z} / (p0 + q0 e^{-z}).
        let e = q0 * (-z).exp();
        assert!((w - e / (1.0 - q0 + e)).abs() < 0.02);
    }
}

#[test]
fn pcd_only_moves_after_a_mode_hop() {
    let cfg = EmpiricalConfig { regime: Regime::Pcd, t_end: 1e3, seed: 11, ..EmpiricalConfig::default() };
    let out = empirical_1d_dynamics(&cfg).unwrap();
    let first_hop = out.hops.first().map_or(f64::INFINITY, |h| h.time);
    for (t, z) in out.times.iter().zip(&out.z) {
        if *t < first_hop {
            assert!(z.abs() < 1e-3, "z={z} at t={t}");
        }
    }
}
