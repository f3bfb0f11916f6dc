//! Executable forms of the AQL error analysis: the momentum operator `D_k`,
//! the martingale differences `ε_k` with running sums `E_k`, the uniform bound
//! `D_max` and the finite-time high-probability bound on `‖Q* − Q_T‖`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::learners::{schedule, stream_rng, Algorithm, BoundednessMonitor, LearnerState, ScheduleParams};
use crate::mdp::{sup_norm_diff, FiniteMdp, QTable, SampleSet};

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("discount {gamma} outside (0, 1)")))
    }
}

/// `V_max = R_max / (1 − γ)`.
pub fn v_max(r_max: f64, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    if !(r_max >= 0.0 && r_max.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "R_max must be non-negative, got {r_max}"
        )));
    }
    Ok(r_max / (1.0 - gamma))
}

/// `h = γ(m + 1) + 1`.
pub fn h_constant(gamma: f64, m: f64) -> f64 {
    gamma * (m + 1.0) + 1.0
}

/// Uniform bound on `‖D_k‖`, by direct recursion over the first phase:
/// `B(0) = V`, `B(k) = (1 + γm)V + γm·B(k−1)` for `1 ≤ k ≤ ⌈m/2⌉ − 1`,
/// then `D_max = (1+γ)/(1−γ)·V + B(⌈m/2⌉ − 1)`.
pub fn d_max(gamma: f64, m: f64, v_max: f64) -> Result<f64> {
    ScheduleParams::new(m, gamma)?;
    let gm = gamma * m;
    let last = ((m / 2.0).ceil() as usize).saturating_sub(1);
    let mut b = v_max;
    for _ in 1..=last {
        b = (1.0 + gm) * v_max + gm * b;
    }
    Ok((1.0 + gamma) / (1.0 - gamma) * v_max + b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundParams {
    pub gamma: f64,
    pub m: f64,
    pub t: usize,
    pub n: usize,
    pub delta: f64,
    pub r_max: f64,
    pub v_max: f64,
    pub h: f64,
    pub d_max: f64,
}

impl BoundParams {
    pub fn new(gamma: f64, m: f64, t: usize, n: usize, delta: f64, r_max: f64) -> Result<Self> {
        let v = v_max(r_max, gamma)?;
        let d = d_max(gamma, m, v)?;
        if (t as f64) <= m {
            return Err(Error::InvalidParameter(format!("horizon T={t} must exceed m={m}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidParameter(format!("δ={delta} outside (0, 1)")));
        }
        if n == 0 {
            return Err(Error::InvalidParameter("pair count must be positive".into()));
        }
        Ok(Self {
            gamma,
            m,
            t,
            n,
            delta,
            r_max,
            v_max: v,
            h: h_constant(gamma, m),
            d_max: d,
        })
    }

    pub fn for_mdp(mdp: &FiniteMdp, m: f64, t: usize, delta: f64) -> Result<Self> {
        Self::new(mdp.gamma(), m, t, mdp.num_pairs(), delta, mdp.r_max())
    }
}

/// `[2(γR_max + hV_max) + D_max·√(8(T−m)·log(2n/δ))] / (T(1−γ))`.
pub fn theorem1_bound(p: &BoundParams) -> f64 {
    let t = p.t as f64;
    let log_term = (2.0 * p.n as f64 / p.delta).ln();
    let numerator = 2.0 * (p.gamma * p.r_max + p.h * p.v_max) + p.d_max * (8.0 * (t - p.m) * log_term).sqrt();
    numerator / (t * (1.0 - p.gamma))
}

fn combine(k: usize, m: f64, t_curr: &QTable, t_prev: &QTable) -> QTable {
    let b = schedule(k, m).b;
    let mut out = QTable::zeros(t_curr.shape());
    let (tc, tp) = (t_curr.raw(), t_prev.raw());
    let o = out.raw_mut();
    for &d in t_curr.shape().dense_pairs() {
        o[d] = (1.0 + b) * tc[d] - b * tp[d];
    }
    out
}

/// `D_k = (1 + b_k) T_k Q_k − b_k T_k Q_{k−1}` on one sample set.
pub fn momentum_operator_dk(
    q_curr: &QTable,
    q_prev: &QTable,
    k: usize,
    m: f64,
    samples: &SampleSet,
    mdp: &FiniteMdp,
) -> Result<QTable> {
    q_prev.check_shape(q_curr.shape())?;
    let tc = mdp.empirical_bellman(q_curr, samples)?;
    let tp = mdp.empirical_bellman(q_prev, samples)?;
    Ok(combine(k, m, &tc, &tp))
}

/// Conditional expectation of `D_k`: the same combination with the exact operator.
pub fn momentum_operator_exact(q_curr: &QTable, q_prev: &QTable, k: usize, m: f64, mdp: &FiniteMdp) -> Result<QTable> {
    q_prev.check_shape(q_curr.shape())?;
    let tc = mdp.bellman_apply(q_curr)?;
    let tp = mdp.bellman_apply(q_prev)?;
    Ok(combine(k, m, &tc, &tp))
}

/// History of `ε_k = exact − empirical` and of `E_k = Σ_{j≤k} ε_j`.
#[derive(Debug, Clone, Default)]
pub struct ErrorSeries {
    pub eps: Vec<QTable>,
    pub cum: Vec<QTable>,
}

impl ErrorSeries {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.eps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eps.is_empty()
    }

    pub fn last_cum(&self) -> Option<&QTable> {
        self.cum.last()
    }
}

pub fn error_series_update(mut series: ErrorSeries, exact: &QTable, empirical: &QTable) -> Result<ErrorSeries> {
    empirical.check_shape(exact.shape())?;
    if let Some(prev) = series.eps.last() {
        prev.check_shape(exact.shape())?;
    }
    let mut eps = QTable::zeros(exact.shape());
    let mut cum = series
        .cum
        .last()
        .cloned()
        .unwrap_or_else(|| QTable::zeros(exact.shape()));
    let (x, e) = (exact.raw(), empirical.raw());
    for &d in exact.shape().dense_pairs() {
        let v = x[d] - e[d];
        eps.raw_mut()[d] = v;
        cum.raw_mut()[d] += v;
    }
    series.eps.push(eps);
    series.cum.push(cum);
    Ok(series)
}

/// Outcome of an AQL run with per-round `D_k` and `ε_k` tracking.
#[derive(Debug, Clone)]
pub struct AqlDiagnostics {
    pub losses: Vec<f64>,
    pub max_dk_norm: f64,
    pub max_eps_norm: f64,
    pub monitor: BoundednessMonitor,
    pub series: Option<ErrorSeries>,
}

/// Runs AQL from `Q_0 = 0` on stream 0 of `seed`, computing the exact and
/// sampled momentum operators each round. Retaining the full series costs
/// memory proportional to `T·n`.
pub fn run_aql_diagnostics(
    mdp: &FiniteMdp,
    params: ScheduleParams,
    iterations: usize,
    seed: u64,
    q_star: &QTable,
    keep_series: bool,
) -> Result<AqlDiagnostics> {
    let mut state = LearnerState::new(mdp, Algorithm::Aql(params), QTable::zeros(mdp.shape()))?;
    let mut rng = stream_rng(seed, 0);
    let mut losses = vec![sup_norm_diff(state.q_curr(), q_star)?];
    let mut series = keep_series.then(ErrorSeries::new);
    let (mut max_dk, mut max_eps) = (0.0f64, 0.0f64);
    for k in 0..iterations {
        let samples = mdp.sample_synchronous(&mut rng, k);
        let empirical = momentum_operator_dk(state.q_curr(), state.q_prev(), k, params.m(), &samples, mdp)?;
        let exact = momentum_operator_exact(state.q_curr(), state.q_prev(), k, params.m(), mdp)?;
        max_dk = max_dk.max(empirical.sup_norm());
        max_eps = max_eps.max(sup_norm_diff(&exact, &empirical)?);
        if let Some(s) = series.take() {
            series = Some(error_series_update(s, &exact, &empirical)?);
        }
        state.aql_step(&samples, mdp)?;
        losses.push(sup_norm_diff(state.q_curr(), q_star)?);
    }
    Ok(AqlDiagnostics {
        losses,
        max_dk_norm: max_dk,
        max_eps_norm: max_eps,
        monitor: state.monitor().clone(),
        series,
    })
}
