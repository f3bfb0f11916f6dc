//! Synchronous tabular learners: vanilla Q-learning, Speedy Q-learning and
//! accelerated Q-learning (AQL).
//!
//! All three consume one [`SampleSet`] per round. AQL and SpeedyQ evaluate
//! both `T_k Q_k` and `T_k Q_{k-1}` on that same sample set.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{sup_norm_diff, FiniteMdp, QTable, SampleSet};

/// Sup-norm tolerance between the three-line and compact AQL updates.
pub const FORM_TOLERANCE: f64 = 1e-9;

/// AQL schedule parameter `m` with its discount; requires `γ·m ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleParams {
    m: f64,
    gamma: f64,
}

impl ScheduleParams {
    pub fn new(m: f64, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidParameter(format!("discount {gamma} outside (0, 1)")));
        }
        // Slack admits m = 1/γ computed in floating point.
        if !(m.is_finite() && gamma * m >= 1.0 - 1e-12) {
            return Err(Error::InvalidParameter(format!(
                "AQL needs γ·m ≥ 1, got γ={gamma}, m={m}"
            )));
        }
        Ok(Self { m, gamma })
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}

/// Default sweep `{⌈1/γ⌉, ⌈2/γ⌉, ⌈4/γ⌉}`.
pub fn default_m_values(gamma: f64) -> [f64; 3] {
    [(1.0 / gamma).ceil(), (2.0 / gamma).ceil(), (4.0 / gamma).ceil()]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

/// `a_k = 1/(k+1)`, `b_k = k − m − 1`, `c_k = (−k² + (m+1)k + 1)/(k+1)`.
pub fn schedule(k: usize, m: f64) -> Coefficients {
    let kf = k as f64;
    Coefficients {
        a: 1.0 / (kf + 1.0),
        b: kf - m - 1.0,
        c: (-kf * kf + (m + 1.0) * kf + 1.0) / (kf + 1.0),
    }
}

/// Step size family for vanilla Q-learning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepSize {
    /// `α_k = 1/(k+1)`
    Harmonic,
    Constant(f64),
    /// `α_k = 1/(k+1)^ω`
    Power(f64),
}

impl StepSize {
    pub fn at(&self, k: usize) -> f64 {
        let kp1 = k as f64 + 1.0;
        match *self {
            StepSize::Harmonic => 1.0 / kp1,
            StepSize::Constant(alpha) => alpha,
            StepSize::Power(omega) => kp1.powf(-omega),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Algorithm {
    Vanilla(StepSize),
    Speedy,
    Aql(ScheduleParams),
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Vanilla(_) => "vanilla",
            Algorithm::Speedy => "speedy",
            Algorithm::Aql(_) => "aql",
        }
    }

    pub fn m(&self) -> Option<f64> {
        match self {
            Algorithm::Aql(p) => Some(p.m),
            _ => None,
        }
    }
}

/// Tracks violations of `‖Q_k‖ ≤ V_max` without aborting the run.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundednessMonitor {
    pub v_max: f64,
    pub violations: usize,
    pub first_violation: Option<usize>,
    pub worst_norm: f64,
}

const LOGGED_VIOLATIONS: usize = 10;

impl BoundednessMonitor {
    pub fn new(v_max: f64) -> Self {
        Self {
            v_max,
            violations: 0,
            first_violation: None,
            worst_norm: 0.0,
        }
    }

    fn observe(&mut self, k: usize, q: &QTable) {
        let norm = q.sup_norm();
        self.worst_norm = self.worst_norm.max(norm);
        if norm > self.v_max * (1.0 + 1e-12) {
            self.violations += 1;
            self.first_violation.get_or_insert(k);
            if self.violations <= LOGGED_VIOLATIONS {
                log::warn!("‖Q_{k}‖ = {norm} exceeds V_max = {}", self.v_max);
            }
        }
    }

    pub fn is_clean(&self) -> bool {
        self.violations == 0
    }
}

/// Iterate pair `(Q_k, Q_{k−1})` of one learner.
#[derive(Debug, Clone)]
pub struct LearnerState {
    q_curr: QTable,
    q_prev: QTable,
    k: usize,
    algo: Algorithm,
    monitor: BoundednessMonitor,
}

impl LearnerState {
    /// Starts at `k = 0` with `Q_{−1} = Q_0`.
    pub fn new(mdp: &FiniteMdp, algo: Algorithm, q0: QTable) -> Result<Self> {
        q0.check_shape(mdp.shape())?;
        if let Algorithm::Aql(p) = algo {
            if p.gamma != mdp.gamma() {
                return Err(Error::InvalidParameter(format!(
                    "schedule discount {} differs from MDP discount {}",
                    p.gamma,
                    mdp.gamma()
                )));
            }
        }
        let mut monitor = BoundednessMonitor::new(mdp.v_max());
        monitor.observe(0, &q0);
        Ok(Self {
            q_prev: q0.clone(),
            q_curr: q0,
            k: 0,
            algo,
            monitor,
        })
    }

    pub fn q_curr(&self) -> &QTable {
        &self.q_curr
    }

    pub fn q_prev(&self) -> &QTable {
        &self.q_prev
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn algorithm(&self) -> Algorithm {
        self.algo
    }

    pub fn monitor(&self) -> &BoundednessMonitor {
        &self.monitor
    }

    pub fn step(&mut self, samples: &SampleSet, mdp: &FiniteMdp) -> Result<()> {
        match self.algo {
            Algorithm::Vanilla(_) => self.vanilla_step(samples, mdp),
            Algorithm::Speedy => self.speedy_step(samples, mdp),
            Algorithm::Aql(_) => self.aql_step(samples, mdp),
        }
    }

    fn check(&self, expected: &'static str, samples: &SampleSet, mdp: &FiniteMdp) -> Result<()> {
        if self.algo.name() != expected {
            return Err(Error::WrongAlgorithm {
                expected,
                found: self.algo.name(),
            });
        }
        self.q_curr.check_shape(mdp.shape())?;
        mdp.check_samples(samples)
    }

    fn advance(&mut self, next: QTable) -> Result<()> {
        if !next.is_finite() {
            return Err(Error::Divergence {
                step: self.k + 1,
                norm: f64::INFINITY,
            });
        }
        self.q_prev = std::mem::replace(&mut self.q_curr, next);
        self.k += 1;
        self.monitor.observe(self.k, &self.q_curr);
        Ok(())
    }

    /// `Q_{k+1} = Q_k − α_k (Q_k − T_k Q_k)`.
    pub fn vanilla_step(&mut self, samples: &SampleSet, mdp: &FiniteMdp) -> Result<()> {
        self.check("vanilla", samples, mdp)?;
        let Algorithm::Vanilla(step) = self.algo else {
            unreachable!()
        };
        let alpha = step.at(self.k);
        let mut tq = QTable::zeros(mdp.shape());
        mdp.empirical_into(&self.q_curr.state_max(), samples, tq.raw_mut());
        let mut next = QTable::zeros(mdp.shape());
        let (q, t, out) = (self.q_curr.raw(), tq.raw(), next.raw_mut());
        for &d in mdp.shape().dense_pairs() {
            out[d] = q[d] - alpha * (q[d] - t[d]);
        }
        self.advance(next)
    }

    /// `Q_{k+1} = Q_k + α_k (T_k Q_k − Q_k) + (1 − α_k)(T_k Q_k − T_k Q_{k−1})`, `α_k = 1/(k+1)`.
    pub fn speedy_step(&mut self, samples: &SampleSet, mdp: &FiniteMdp) -> Result<()> {
        self.check("speedy", samples, mdp)?;
        let alpha = 1.0 / (self.k as f64 + 1.0);
        let mut tq = QTable::zeros(mdp.shape());
        let mut tqp = QTable::zeros(mdp.shape());
        mdp.empirical_into(&self.q_curr.state_max(), samples, tq.raw_mut());
        mdp.empirical_into(&self.q_prev.state_max(), samples, tqp.raw_mut());
        let mut next = QTable::zeros(mdp.shape());
        let (q, t, tp, out) = (self.q_curr.raw(), tq.raw(), tqp.raw(), next.raw_mut());
        for &d in mdp.shape().dense_pairs() {
            out[d] = q[d] + alpha * (t[d] - q[d]) + (1.0 - alpha) * (t[d] - tp[d]);
        }
        self.advance(next)
    }

    /// One round of Algorithm-1 AQL:
    ///
    /// ```text
    /// S_k     = (1 − a_k) Q_{k−1} + a_k T_k Q_{k−1}
    /// P_k     = (1 − a_k) Q_k     + a_k T_k Q_k
    /// Q_{k+1} = P_k + b_k (P_k − S_k) + c_k (Q_k − Q_{k−1})
    /// ```
    ///
    /// The compact form `(1−a)Q_k + [b(1−a)+c](Q_k − Q_{k−1}) + a[(1+b)T_kQ_k − b T_kQ_{k−1}]`
    /// is evaluated alongside; a disagreement above [`FORM_TOLERANCE`] is an error.
    pub fn aql_step(&mut self, samples: &SampleSet, mdp: &FiniteMdp) -> Result<()> {
        self.check("aql", samples, mdp)?;
        let Algorithm::Aql(params) = self.algo else {
            unreachable!()
        };
        let mut tq = QTable::zeros(mdp.shape());
        let mut tqp = QTable::zeros(mdp.shape());
        mdp.empirical_into(&self.q_curr.state_max(), samples, tq.raw_mut());
        mdp.empirical_into(&self.q_prev.state_max(), samples, tqp.raw_mut());
        let (next, diff) = aql_update(&self.q_curr, &self.q_prev, &tq, &tqp, self.k, params.m);
        if diff > FORM_TOLERANCE {
            return Err(Error::FormMismatch { k: self.k, diff });
        }
        self.advance(next)
    }
}

/// Three-line AQL update from precomputed operator outputs, plus the sup-norm
/// gap to the compact form.
pub fn aql_update(q: &QTable, qp: &QTable, tq: &QTable, tqp: &QTable, k: usize, m: f64) -> (QTable, f64) {
    let Coefficients { a, b, c } = schedule(k, m);
    let momentum = b * (1.0 - a) + c;
    let mut next = QTable::zeros(q.shape());
    let mut diff = 0.0f64;
    let (qv, qpv, t, tp) = (q.raw(), qp.raw(), tq.raw(), tqp.raw());
    let out = next.raw_mut();
    for &d in q.shape().dense_pairs() {
        let s = (1.0 - a) * qpv[d] + a * tp[d];
        let p = (1.0 - a) * qv[d] + a * t[d];
        let three_line = p + b * (p - s) + c * (qv[d] - qpv[d]);
        let compact = (1.0 - a) * qv[d] + momentum * (qv[d] - qpv[d]) + a * ((1.0 + b) * t[d] - b * tp[d]);
        diff = diff.max((three_line - compact).abs());
        out[d] = three_line;
    }
    (next, diff)
}

/// RNG stream `stream` of `seed`; streams of one seed are independent.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// How sample streams are assigned across the learners of one paired run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sampling {
    /// One stream (stream 0 of the seed) feeds every learner.
    #[default]
    Shared,
    /// Learner `i` draws from stream `i + 1`.
    Independent,
}

/// `‖Q_k − Q*‖` for `k = 0..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossTrajectory {
    pub algo: String,
    pub m: Option<f64>,
    pub seed: u64,
    pub losses: Vec<f64>,
}

/// Runs one learner from `Q_0 = 0` for `T` rounds on stream 0 of `seed`.
pub fn run_learner(
    mdp: &FiniteMdp,
    algo: Algorithm,
    iterations: usize,
    seed: u64,
    q_star: &QTable,
) -> Result<LossTrajectory> {
    Ok(run_learners(mdp, &[algo], iterations, seed, q_star, Sampling::Shared)?
        .pop()
        .unwrap())
}

/// Runs several learners side by side from `Q_0 = 0`.
pub fn run_learners(
    mdp: &FiniteMdp,
    algos: &[Algorithm],
    iterations: usize,
    seed: u64,
    q_star: &QTable,
    sampling: Sampling,
) -> Result<Vec<LossTrajectory>> {
    q_star.check_shape(mdp.shape())?;
    let q0 = QTable::zeros(mdp.shape());
    let mut states = algos
        .iter()
        .map(|&a| LearnerState::new(mdp, a, q0.clone()))
        .collect::<Result<Vec<_>>>()?;
    let mut trajs: Vec<LossTrajectory> = algos
        .iter()
        .map(|a| {
            let mut losses = Vec::with_capacity(iterations + 1);
            losses.push(sup_norm_diff(&q0, q_star).unwrap());
            LossTrajectory {
                algo: a.name().to_string(),
                m: a.m(),
                seed,
                losses,
            }
        })
        .collect();

    let mut rngs: Vec<ChaCha8Rng> = match sampling {
        Sampling::Shared => vec![stream_rng(seed, 0)],
        Sampling::Independent => (0..algos.len() as u64).map(|i| stream_rng(seed, i + 1)).collect(),
    };
    for k in 0..iterations {
        let shared = match sampling {
            Sampling::Shared => Some(mdp.sample_synchronous(&mut rngs[0], k)),
            Sampling::Independent => None,
        };
        for (i, (state, traj)) in states.iter_mut().zip(trajs.iter_mut()).enumerate() {
            let own;
            let samples = match &shared {
                Some(s) => s,
                None => {
                    own = mdp.sample_synchronous(&mut rngs[i], k);
                    &own
                }
            };
            state.step(samples, mdp)?;
            traj.losses.push(sup_norm_diff(state.q_curr(), q_star)?);
        }
    }
    for state in &states {
        let mon = state.monitor();
        if !mon.is_clean() {
            log::warn!(
                "{} (m={:?}, seed={seed}): {} rounds exceeded V_max, first at k={}",
                state.algorithm().name(),
                state.algorithm().m(),
                mon.violations,
                mon.first_violation.unwrap_or(0)
            );
        }
    }
    Ok(trajs)
}

pub(crate) fn format_m(m: Option<f64>) -> String {
    m.map(|v| v.to_string()).unwrap_or_default()
}

/// CSV with columns `algo,m,seed,iteration,loss`; `m` is empty for learners without one.
pub fn write_loss_csv<W: Write>(trajectories: &[LossTrajectory], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["algo", "m", "seed", "iteration", "loss"])?;
    for t in trajectories {
        let m = format_m(t.m);
        let seed = t.seed.to_string();
        for (k, loss) in t.losses.iter().enumerate() {
            w.write_record([
                t.algo.as_str(),
                m.as_str(),
                seed.as_str(),
                &k.to_string(),
                &loss.to_string(),
            ])?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
