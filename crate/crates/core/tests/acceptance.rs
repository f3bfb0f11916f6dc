//! Acceptance criteria runner: one PASS/FAIL line per criterion, nonzero exit
//! status if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use accelq::bounds::{momentum_operator_dk, momentum_operator_exact, run_aql_diagnostics, theorem1_bound, BoundParams};
use accelq::frozenlake::{build_mdp, load_map, SlipModel};
use accelq::harness::{run_config, CellSummary, ExperimentConfig, TabularSection, Task};
use accelq::learners::{aql_update, run_learner, schedule, stream_rng, LearnerState};
use accelq::lqr::{
    build_mass_damper, closed_loop, dare_residual, dare_solve, features, lqr_oracle, optimal_gain, spectral_radius,
    Hyper, LinearSystem, PaqlState, QuadraticQ, StepRule, Transition, Variant,
};
use accelq::{Algorithm, FiniteMdp, QTable, ScheduleParams};
use nalgebra::{DMatrix, DVector};
use num::{BigInt, BigRational, Signed, Zero};
use rand::Rng;

type Outcome = Result<(bool, String), Box<dyn std::error::Error>>;

struct Criterion {
    id: u32,
    name: &'static str,
    limit: Option<Duration>,
    run: fn() -> Outcome,
}

fn tabular_ordering(map: &str, iterations: usize) -> Outcome {
    let mut cfg = ExperimentConfig::for_task(Task::Tabular);
    cfg.num_seeds = Some(20);
    cfg.iterations = Some(iterations);
    cfg.shared_samples = Some(true);
    cfg.tabular = Some(TabularSection {
        map: map.into(),
        ..Default::default()
    });
    let summary = run_config(&cfg.resolve()?)?.summary()?;
    let final_of = |c: &CellSummary| c.final_mean_loss;
    let speedy = summary
        .cells
        .iter()
        .find(|c| c.algo == "speedy")
        .map(final_of)
        .ok_or("no speedy cell")?;
    let aql: Vec<_> = summary.cells.iter().filter(|c| c.algo == "aql").collect();
    let ok = aql.len() == 3 && aql.iter().all(|c| c.final_mean_loss <= speedy);
    let detail = aql
        .iter()
        .map(|c| {
            format!(
                "aql m={} {:.5e}",
                c.m_or_variant.as_deref().unwrap_or("?"),
                c.final_mean_loss
            )
        })
        .collect::<Vec<_>>()
        .join(", ");
    Ok((ok, format!("speedy {speedy:.5e}; {detail}")))
}

fn c1() -> Outcome {
    tabular_ordering("frozenlake4x4", 10_000)
}

fn c2() -> Outcome {
    tabular_ordering("frozenlake8x8", 20_000)
}

fn coverage_mdp() -> FiniteMdp {
    FiniteMdp::random(10, 3, 0.5, &mut stream_rng(2024, 0)).expect("random MDP")
}

fn c3() -> Outcome {
    let mdp = coverage_mdp();
    let q_star = mdp.solve_q_star(1e-13)?;
    let params = BoundParams::for_mdp(&mdp, 2.0, 1000, 0.1)?;
    let bound = theorem1_bound(&params);
    let schedule = ScheduleParams::new(2.0, 0.5)?;
    let mut covered = 0;
    let mut worst = 0.0f64;
    for seed in 0..200 {
        let traj = run_learner(&mdp, Algorithm::Aql(schedule), 1000, seed, &q_star)?;
        let err = *traj.losses.last().unwrap();
        worst = worst.max(err);
        if err <= bound {
            covered += 1;
        }
    }
    let rate = covered as f64 / 200.0;
    Ok((
        rate >= 0.9,
        format!("coverage {covered}/200, worst error {worst:.4e}, bound {bound:.4}"),
    ))
}

fn table(mdp: &FiniteMdp, values: impl FnMut() -> f64) -> QTable {
    let v: Vec<f64> = std::iter::repeat_with(values).take(mdp.num_pairs()).collect();
    QTable::from_pair_values(mdp.shape(), &v).unwrap()
}

fn c4() -> Outcome {
    let mut rng = stream_rng(44, 0);
    let mdp = FiniteMdp::random_deterministic(5, 2, 0.9, &mut rng)?;
    let m = 2.0;
    let q0 = table(&mdp, || rng.random_range(0.0..10.0));
    let tq0 = mdp.bellman_apply(&q0)?;
    let mut state = LearnerState::new(&mdp, Algorithm::Aql(ScheduleParams::new(m, 0.9)?), q0.clone())?;
    let mut sample_rng = stream_rng(44, 1);
    let mut worst = 0.0f64;
    for k in 1..=500usize {
        let prev = state.q_curr().clone();
        let samples = mdp.sample_synchronous(&mut sample_rng, k - 1);
        state.step(&samples, &mdp)?;
        let tprev = mdp.bellman_apply(&prev)?;
        let kf = k as f64;
        let (qp, q0v, tp, t0) = (
            prev.pair_values(),
            q0.pair_values(),
            tprev.pair_values(),
            tq0.pair_values(),
        );
        let got = state.q_curr().pair_values();
        for i in 0..got.len() {
            let want = (qp[i] - q0v[i] + (kf - m - 1.0) * tp[i] + (m + 1.0) * t0[i]) / kf;
            worst = worst.max((got[i] - want).abs());
        }
    }
    Ok((worst <= 1e-9, format!("max sup-norm error {worst:.3e} over k=1..=500")))
}

fn rational(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite")
}

fn c5() -> Outcome {
    let mut rng = stream_rng(55, 0);
    let mdp = FiniteMdp::random(6, 3, 0.5, &mut rng)?;
    let mut worst_form = 0.0f64;
    for _ in 0..1000 {
        let k = rng.random_range(0..=10_000usize);
        let m = rng.random_range(2.0..10.0);
        let q = table(&mdp, || rng.random_range(-10.0..10.0));
        let qp = table(&mdp, || rng.random_range(-10.0..10.0));
        let tq = table(&mdp, || rng.random_range(-10.0..10.0));
        let tqp = table(&mdp, || rng.random_range(-10.0..10.0));
        let (next, _) = aql_update(&q, &qp, &tq, &tqp, k, m);
        // With b(1−a)+c = a the compact form reduces to Q_k − a Q_{k−1} + a D_k.
        let a = 1.0 / (k as f64 + 1.0);
        let b = k as f64 - m - 1.0;
        let (qv, qpv, tv, tpv, nv) = (
            q.pair_values(),
            qp.pair_values(),
            tq.pair_values(),
            tqp.pair_values(),
            next.pair_values(),
        );
        for i in 0..qv.len() {
            let compact = qv[i] - a * qpv[i] + a * ((1.0 + b) * tv[i] - b * tpv[i]);
            worst_form = worst_form.max((nv[i] - compact).abs());
        }
    }
    let mut worst_identity = BigRational::zero();
    for m in 1..=10u32 {
        for k in 0..=10_000usize {
            let c = schedule(k, m as f64);
            let (a, b, cc) = (rational(c.a), rational(c.b), rational(c.c));
            let one = BigRational::from_integer(BigInt::from(1));
            let r = (&b * (&one - &a) + &cc - &a).abs();
            if r > worst_identity {
                worst_identity = r;
            }
        }
    }
    let identity = num::ToPrimitive::to_f64(&worst_identity).unwrap_or(f64::INFINITY);
    Ok((
        worst_form <= 1e-9 && identity <= 1e-12,
        format!("form gap {worst_form:.3e}; identity residual {identity:.3e} (k ≤ 1e4, m = 1..=10)"),
    ))
}

fn c6() -> Outcome {
    let mdp = coverage_mdp();
    let m = 2.0;
    let params = ScheduleParams::new(m, mdp.gamma())?;
    let mut state = LearnerState::new(&mdp, Algorithm::Aql(params), QTable::zeros(mdp.shape()))?;
    let mut rng = stream_rng(66, 0);
    for k in 0..10 {
        let s = mdp.sample_synchronous(&mut rng, k);
        state.step(&s, &mdp)?;
    }
    let k = state.k();
    let exact = momentum_operator_exact(state.q_curr(), state.q_prev(), k, m, &mdp)?.pair_values();
    let n = exact.len();
    let draws = 10_000;
    let (mut sum, mut sum2) = (vec![0.0; n], vec![0.0; n]);
    let mut fresh = stream_rng(66, 1);
    for _ in 0..draws {
        let s = mdp.sample_synchronous(&mut fresh, k);
        let dk = momentum_operator_dk(state.q_curr(), state.q_prev(), k, m, &s, &mdp)?.pair_values();
        for i in 0..n {
            let e = exact[i] - dk[i];
            sum[i] += e;
            sum2[i] += e * e;
        }
    }
    let mut worst_z = 0.0f64;
    let mut mean_ok = true;
    for i in 0..n {
        let mean = sum[i] / draws as f64;
        let var = (sum2[i] / draws as f64 - mean * mean).max(0.0) * draws as f64 / (draws as f64 - 1.0);
        let se = (var / draws as f64).sqrt();
        if se == 0.0 {
            mean_ok &= mean.abs() <= 1e-12;
        } else {
            worst_z = worst_z.max(mean.abs() / se);
        }
    }
    mean_ok &= worst_z <= 3.0;

    let q_star = mdp.solve_q_star(1e-13)?;
    let d_max = BoundParams::for_mdp(&mdp, m, 1000, 0.1)?.d_max;
    let mut worst_ratio = 0.0f64;
    for seed in 0..20 {
        let diag = run_aql_diagnostics(&mdp, params, 1000, seed, &q_star, false)?;
        worst_ratio = worst_ratio.max(diag.max_eps_norm / d_max);
    }
    let fl = build_mdp(&load_map("frozenlake4x4")?, SlipModel::default(), 0.95)?;
    let fl_star = fl.solve_q_star(1e-12)?;
    let fl_params = ScheduleParams::new(2.0, 0.95)?;
    let fl_dmax = BoundParams::for_mdp(&fl, 2.0, 2000, 0.1)?.d_max;
    for seed in 0..5 {
        let diag = run_aql_diagnostics(&fl, fl_params, 2000, seed, &fl_star, false)?;
        worst_ratio = worst_ratio.max(diag.max_eps_norm / fl_dmax);
    }
    Ok((
        mean_ok && worst_ratio <= 2.0,
        format!("max |mean|/SE {worst_z:.3} over {n} pairs at k={k}; max ‖ε_k‖/D_max {worst_ratio:.4} over 25 runs"),
    ))
}

fn c7() -> Outcome {
    let one = || DMatrix::from_element(1, 1, 1.0);
    let scalar = LinearSystem::new(one(), one(), one(), one(), DMatrix::zeros(1, 1), 1.0)?;
    let p = dare_solve(&scalar, 1e-15, 1_000_000)?.p[(0, 0)];
    let golden = (1.0 + 5f64.sqrt()) / 2.0;
    let mut ok = (p - golden).abs() <= 1e-9;
    let mut detail = format!("scalar |P − φ| {:.2e}", (p - golden).abs());
    for (masses, act) in [(2, 1), (6, 2)] {
        let sys = build_mass_damper(masses, act, 0.1, 0.01)?;
        let sol = dare_solve(&sys, 1e-12, 10_000_000)?;
        let res = dare_residual(&sys, &sol.p)?;
        let rho = spectral_radius(&closed_loop(&sys, &optimal_gain(&sys, &sol.p)?));
        ok &= res <= 1e-8 && rho < 1.0;
        detail.push_str(&format!("; ({masses},{act}) residual {res:.2e}, ρ {rho:.5}"));
    }
    Ok((ok, detail))
}

fn c8() -> Outcome {
    let mut cfg = ExperimentConfig::for_task(Task::Lqr);
    cfg.num_seeds = Some(5);
    cfg.thresholds = Some(vec![0.1]);
    let summary = run_config(&cfg.resolve()?)?.summary()?;
    let median = |v: &str| -> f64 {
        summary
            .cells
            .iter()
            .find(|c| c.m_or_variant.as_deref() == Some(v))
            .and_then(|c| c.median_seed_crossings[0].median_iterate)
            .unwrap_or(f64::INFINITY)
    };
    let (van, hb, nes) = (median("vanilla"), median("hb"), median("nes"));
    Ok((
        nes < van && hb < van,
        format!("median steps: vanilla {van}, hb {hb}, nes {nes}"),
    ))
}

fn c9() -> Outcome {
    let mut rng = stream_rng(99, 0);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(1..=5usize);
        let m = rng.random_range(1..=3usize);
        let d = n + m;
        let g = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        let q = QuadraticQ::from_matrix(n, m, (&g + g.transpose()) * 0.5)?;
        let x = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
        let u = DVector::from_fn(m, |_, _| rng.random_range(-2.0..2.0));
        let grad = q.grad_q(&x, &u)?;
        let theta = q.theta();
        let h = 1e-5;
        let fd = DVector::from_fn(theta.len(), |i, _| {
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[i] += h;
            tm[i] -= h;
            let fp = QuadraticQ::from_theta(n, m, &tp).unwrap().q_value(&x, &u).unwrap();
            let fm = QuadraticQ::from_theta(n, m, &tm).unwrap().q_value(&x, &u).unwrap();
            (fp - fm) / (2.0 * h)
        });
        let rel = (&grad - &fd).norm() / fd.norm().max(f64::MIN_POSITIVE);
        worst = worst.max(rel);
    }
    Ok((
        worst <= 1e-6,
        format!("max relative error {worst:.3e} over 100 instances"),
    ))
}

fn c10() -> Outcome {
    let sys = build_mass_damper(2, 1, 0.1, 0.01)?;
    let oracle = lqr_oracle(&sys, 1.0, 1e-12, 10_000_000)?;
    let (n, m) = (sys.state_dim(), sys.input_dim());
    let q = QuadraticQ::from_matrix(n, m, oracle.h_star.clone())?;
    let mut rng = stream_rng(1010, 0);
    let mut batch = Vec::new();
    let mut worst_delta = 0.0f64;
    for _ in 0..64 {
        let x = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let noise = DVector::from_fn(m, |_, _| rng.random_range(-0.5..0.5));
        let u = -(&oracle.k_star * &x) + noise;
        let cost = sys.stage_cost(&x, &u);
        let x_next = sys.step(&x, &u);
        worst_delta = worst_delta.max(q.td_delta(&x, &u, cost, &x_next, 1.0)?.abs());
        batch.push(Transition { x, u, cost, x_next });
    }
    let refs: Vec<&Transition> = batch.iter().collect();
    let theta = q.theta();
    let scale = theta.amax().max(1.0);
    let mut worst_move = 0.0f64;
    for rule in [StepRule::LeastSquares, StepRule::Gradient] {
        for variant in Variant::ALL {
            let mut st = PaqlState::new(&q, variant, Hyper::default(), rule);
            for _ in 0..3 {
                st.step(&refs, 1.0)?;
            }
            worst_move = worst_move.max((st.theta() - &theta).amax() / scale);
        }
    }
    let k_gap = (q.policy_from_h()? - &oracle.k_star).amax();
    // Features of the batch span the parameter space, so Δ ≡ 0 pins H.
    let cols: Vec<_> = refs
        .iter()
        .map(|t| features(&DVector::from_iterator(n + m, t.x.iter().chain(t.u.iter()).copied())))
        .collect();
    let rank = DMatrix::from_columns(&cols).rank(1e-10);
    Ok((
        worst_delta <= 1e-8 && worst_move <= 1e-8 && k_gap <= 1e-8,
        format!("max |Δ| {worst_delta:.2e}; max relative θ drift {worst_move:.2e}; ‖K(H) − K*‖ {k_gap:.2e}; feature rank {rank}"),
    ))
}

fn main() -> ExitCode {
    let criteria = [
        Criterion {
            id: 1,
            name: "AQL ≤ SpeedyQ final loss, FrozenLake 4x4",
            limit: Some(Duration::from_secs(120)),
            run: c1,
        },
        Criterion {
            id: 2,
            name: "AQL ≤ SpeedyQ final loss, FrozenLake 8x8",
            limit: Some(Duration::from_secs(600)),
            run: c2,
        },
        Criterion {
            id: 3,
            name: "finite-time bound coverage",
            limit: Some(Duration::from_secs(120)),
            run: c3,
        },
        Criterion {
            id: 4,
            name: "deterministic iterate recursion",
            limit: None,
            run: c4,
        },
        Criterion {
            id: 5,
            name: "compact form and coefficient identity",
            limit: None,
            run: c5,
        },
        Criterion {
            id: 6,
            name: "martingale diagnostics",
            limit: None,
            run: c6,
        },
        Criterion {
            id: 7,
            name: "DARE oracle",
            limit: None,
            run: c7,
        },
        Criterion {
            id: 8,
            name: "PAQL acceleration ordering",
            limit: Some(Duration::from_secs(300)),
            run: c8,
        },
        Criterion {
            id: 9,
            name: "grad_q finite differences",
            limit: None,
            run: c9,
        },
        Criterion {
            id: 10,
            name: "exact H fixed point",
            limit: None,
            run: c10,
        },
    ];
    let mut failures = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = (c.run)();
        let elapsed = start.elapsed();
        let (mut ok, mut detail) = match outcome {
            Ok(v) => v,
            Err(e) => {
                let mut msg = format!("error: {e}");
                let mut src = e.source();
                while let Some(inner) = src {
                    msg.push_str(&format!(": {inner}"));
                    src = inner.source();
                }
                (false, msg)
            }
        };
        if let Some(limit) = c.limit {
            if elapsed > limit {
                ok = false;
                detail.push_str(&format!("; exceeded {}s limit", limit.as_secs()));
            }
        }
        if !ok {
            failures += 1;
        }
        println!(
            "{} criterion {:>2}: {} [{:.2}s] {}",
            if ok { "PASS" } else { "FAIL" },
            c.id,
            c.name,
            elapsed.as_secs_f64(),
            detail
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
