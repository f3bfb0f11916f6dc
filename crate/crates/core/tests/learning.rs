use accelq::bounds::{d_max, run_aql_diagnostics, BoundParams};
use accelq::frozenlake::{build_mdp, load_map, parse_map, SlipModel};
use accelq::learners::{run_learners, stream_rng};
use accelq::lqr::{build_mass_damper, lqr_oracle, spectral_norm, QuadraticQ};
use accelq::{Algorithm, FiniteMdp, QTable, Sampling, ScheduleParams, StepSize};

#[test]
fn deterministic_lake_learns_exactly() {
    // With no slip the empirical operator is exact, so every learner is a
    // deterministic iteration and Q* is its fixed point.
    let map = load_map("frozenlake4x4").unwrap();
    let mdp = build_mdp(&map, SlipModel::deterministic(), 0.9).unwrap();
    assert!(mdp.is_deterministic());
    let q_star = mdp.solve_q_star(1e-13).unwrap();
    let algos = [
        Algorithm::Speedy,
        Algorithm::Aql(ScheduleParams::new(2.0, 0.9).unwrap()),
        Algorithm::Aql(ScheduleParams::new(5.0, 0.9).unwrap()),
    ];
    let runs = run_learners(&mdp, &algos, 5000, 0, &q_star, Sampling::Shared).unwrap();
    for r in &runs {
        assert!(
            *r.losses.last().unwrap() < 1e-2,
            "{} m={:?}: {}",
            r.algo,
            r.m,
            r.losses.last().unwrap()
        );
    }
}

#[test]
fn learners_start_at_q_star_norm() {
    let mdp = build_mdp(&load_map("frozenlake4x4").unwrap(), SlipModel::default(), 0.95).unwrap();
    let q_star = mdp.solve_q_star(1e-12).unwrap();
    let algos = [Algorithm::Vanilla(StepSize::Harmonic), Algorithm::Speedy];
    let runs = run_learners(&mdp, &algos, 3, 1, &q_star, Sampling::Independent).unwrap();
    for r in runs {
        assert_eq!(r.losses.len(), 4);
        assert!((r.losses[0] - q_star.sup_norm()).abs() < 1e-15);
    }
}

#[test]
fn shared_and_independent_sampling_agree_on_first_learner_only_when_shared() {
    let mdp = FiniteMdp::random(6, 2, 0.7, &mut stream_rng(3, 0)).unwrap();
    let q_star = mdp.solve_q_star(1e-13).unwrap();
    let algos = [Algorithm::Speedy, Algorithm::Speedy];
    let shared = run_learners(&mdp, &algos, 50, 9, &q_star, Sampling::Shared).unwrap();
    assert_eq!(shared[0].losses, shared[1].losses);
    let indep = run_learners(&mdp, &algos, 50, 9, &q_star, Sampling::Independent).unwrap();
    assert_ne!(indep[0].losses, indep[1].losses);
}

#[test]
fn q_star_is_bellman_fixed_point_on_lakes() {
    for name in ["frozenlake4x4", "frozenlake8x8"] {
        let mdp = build_mdp(&load_map(name).unwrap(), SlipModel::default(), 0.95).unwrap();
        let q = mdp.solve_q_star(1e-12).unwrap();
        let tq = mdp.bellman_apply(&q).unwrap();
        assert!(accelq::mdp::sup_norm_diff(&q, &tq).unwrap() < 1e-11, "{name}");
        assert!(q.sup_norm() <= mdp.v_max());
    }
}

#[test]
fn eps_stays_within_twice_d_max() {
    let mdp = FiniteMdp::random(8, 3, 0.6, &mut stream_rng(21, 0)).unwrap();
    let q_star = mdp.solve_q_star(1e-13).unwrap();
    let params = ScheduleParams::new(2.0, 0.6).unwrap();
    let bound = BoundParams::for_mdp(&mdp, 2.0, 300, 0.1).unwrap();
    assert_eq!(bound.d_max, d_max(0.6, 2.0, mdp.v_max()).unwrap());
    let diag = run_aql_diagnostics(&mdp, params, 300, 5, &q_star, true).unwrap();
    assert!(diag.max_eps_norm <= 2.0 * bound.d_max);
    assert!(diag.max_dk_norm <= bound.d_max);
    let series = diag.series.unwrap();
    assert_eq!(series.len(), 300);
}

#[test]
fn custom_map_builds() {
    let map = parse_map("SF\nHG\n").unwrap();
    let mdp = build_mdp(&map, SlipModel::default(), 0.9).unwrap();
    assert_eq!(mdp.num_states(), 4);
    let q = mdp.solve_q_star(1e-13).unwrap();
    assert!(q.sup_norm() > 0.0);
    assert_eq!(QTable::zeros(mdp.shape()).sup_norm(), 0.0);
}

#[test]
fn discounted_oracle_gain_is_greedy_for_h_star() {
    let sys = build_mass_damper(2, 1, 0.1, 0.01).unwrap();
    let oracle = lqr_oracle(&sys, 0.95, 1e-12, 1_000_000).unwrap();
    let q = QuadraticQ::from_matrix(2 * 2, 1, oracle.h_star.clone()).unwrap();
    let k = q.policy_from_h().unwrap();
    assert!(spectral_norm(&(k - &oracle.k_star)) < 1e-8);
}
