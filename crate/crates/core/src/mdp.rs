//! Finite MDPs, tabular Q-functions and the exact and sampled Bellman operators.
//!
//! Q-functions are stored densely over `num_states × num_actions` with an
//! admissibility mask shared by every table bound to the same MDP. Reading an
//! inadmissible entry is an error, never a silent zero.

use std::io::Write;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};

const KERNEL_SUM_TOL: f64 = 1e-12;

/// Admissible state-action pairs of a finite MDP.
///
/// Pairs are enumerated state-major, actions ascending; this ordinal order is
/// the order in which synchronous samples are drawn.
#[derive(Debug, PartialEq, Eq)]
pub struct PairShape {
    num_states: usize,
    num_actions: usize,
    admissible: Vec<bool>,
    actions: Vec<Vec<usize>>,
    pairs: Vec<usize>,
}

impl PairShape {
    fn new(num_states: usize, num_actions: usize, actions: Vec<Vec<usize>>) -> Self {
        let mut admissible = vec![false; num_states * num_actions];
        let mut pairs = Vec::new();
        for (x, acts) in actions.iter().enumerate() {
            for &u in acts {
                admissible[x * num_actions + u] = true;
                pairs.push(x * num_actions + u);
            }
        }
        Self {
            num_states,
            num_actions,
            admissible,
            actions,
            pairs,
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// Number of admissible pairs, `n = Σ_x |U(x)|`.
    pub fn num_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn actions(&self, state: usize) -> &[usize] {
        &self.actions[state]
    }

    pub fn is_admissible(&self, state: usize, action: usize) -> bool {
        state < self.num_states && action < self.num_actions && self.admissible[state * self.num_actions + action]
    }

    /// `(state, action)` of every admissible pair in ordinal order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.pairs
            .iter()
            .map(move |&d| (d / self.num_actions, d % self.num_actions))
    }

    pub(crate) fn dense_pairs(&self) -> &[usize] {
        &self.pairs
    }
}

fn same_shape(a: &Arc<PairShape>, b: &Arc<PairShape>) -> bool {
    Arc::ptr_eq(a, b) || a == b
}

/// Tabular Q-function bound to the shape of a [`FiniteMdp`].
#[derive(Debug, Clone)]
pub struct QTable {
    shape: Arc<PairShape>,
    values: Vec<f64>,
}

impl PartialEq for QTable {
    fn eq(&self, other: &Self) -> bool {
        same_shape(&self.shape, &other.shape) && self.values == other.values
    }
}

impl QTable {
    pub fn zeros(shape: &Arc<PairShape>) -> Self {
        Self {
            shape: Arc::clone(shape),
            values: vec![0.0; shape.num_states * shape.num_actions],
        }
    }

    /// Builds a table from one value per admissible pair, in ordinal order.
    pub fn from_pair_values(shape: &Arc<PairShape>, pair_values: &[f64]) -> Result<Self> {
        if pair_values.len() != shape.num_pairs() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} pair values, got {}",
                shape.num_pairs(),
                pair_values.len()
            )));
        }
        if let Some(v) = pair_values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite Q value {v}")));
        }
        let mut q = Self::zeros(shape);
        for (&d, &v) in shape.pairs.iter().zip(pair_values) {
            q.values[d] = v;
        }
        Ok(q)
    }

    pub fn shape(&self) -> &Arc<PairShape> {
        &self.shape
    }

    pub fn get(&self, state: usize, action: usize) -> Result<f64> {
        if !self.shape.is_admissible(state, action) {
            return Err(Error::Inadmissible { state, action });
        }
        Ok(self.values[state * self.shape.num_actions + action])
    }

    pub fn set(&mut self, state: usize, action: usize, value: f64) -> Result<()> {
        if !self.shape.is_admissible(state, action) {
            return Err(Error::Inadmissible { state, action });
        }
        if !value.is_finite() {
            return Err(Error::InvalidParameter(format!("non-finite Q value {value}")));
        }
        self.values[state * self.shape.num_actions + action] = value;
        Ok(())
    }

    /// Values of the admissible pairs in ordinal order.
    pub fn pair_values(&self) -> Vec<f64> {
        self.shape.pairs.iter().map(|&d| self.values[d]).collect()
    }

    /// `max_{u ∈ U(x)} Q(x, u)` for every state.
    pub fn state_max(&self) -> Vec<f64> {
        self.shape
            .actions
            .iter()
            .enumerate()
            .map(|(x, acts)| {
                let row = &self.values[x * self.shape.num_actions..];
                acts.iter().map(|&u| row[u]).fold(f64::NEG_INFINITY, f64::max)
            })
            .collect()
    }

    /// Supremum norm over admissible pairs.
    pub fn sup_norm(&self) -> f64 {
        self.shape
            .pairs
            .iter()
            .map(|&d| self.values[d].abs())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.shape.pairs.iter().all(|&d| self.values[d].is_finite())
    }

    pub(crate) fn check_shape(&self, other: &Arc<PairShape>) -> Result<()> {
        if same_shape(&self.shape, other) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "table is {}x{} with {} pairs, expected {}x{} with {} pairs",
                self.shape.num_states,
                self.shape.num_actions,
                self.shape.num_pairs(),
                other.num_states,
                other.num_actions,
                other.num_pairs()
            )))
        }
    }

    pub(crate) fn raw(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn raw_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Writes `state,action,value` rows for every admissible pair.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["state", "action", "value"])?;
        for (x, u) in self.shape.pairs() {
            let v = self.values[x * self.shape.num_actions + u];
            w.write_record([x.to_string(), u.to_string(), v.to_string()])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Supremum-norm distance between two tables of the same shape.
pub fn sup_norm_diff(q1: &QTable, q2: &QTable) -> Result<f64> {
    q1.check_shape(&q2.shape)?;
    Ok(q1
        .shape
        .pairs
        .iter()
        .map(|&d| (q1.values[d] - q2.values[d]).abs())
        .fold(0.0, f64::max))
}

/// One sampled successor per admissible pair for synchronous round `round`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleSet {
    pub round: usize,
    next_state: Vec<usize>,
}

impl SampleSet {
    /// Successors in pair ordinal order.
    pub fn new(round: usize, next_state: Vec<usize>) -> Self {
        Self { round, next_state }
    }

    pub fn next_states(&self) -> &[usize] {
        &self.next_state
    }
}

/// Deterministic stationary policy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Policy {
    actions: Vec<usize>,
}

impl Policy {
    pub fn new(mdp: &FiniteMdp, actions: Vec<usize>) -> Result<Self> {
        if actions.len() != mdp.num_states() {
            return Err(Error::ShapeMismatch(format!(
                "policy covers {} states, MDP has {}",
                actions.len(),
                mdp.num_states()
            )));
        }
        for (x, &u) in actions.iter().enumerate() {
            if !mdp.shape.is_admissible(x, u) {
                return Err(Error::Inadmissible { state: x, action: u });
            }
        }
        Ok(Self { actions })
    }

    pub fn action(&self, state: usize) -> usize {
        self.actions[state]
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }
}

/// Finite discounted MDP `(X, U, P, R, γ)` with deterministic rewards `R(x, u)`.
#[derive(Debug, Clone)]
pub struct FiniteMdp {
    shape: Arc<PairShape>,
    /// Sparse successor distribution per pair ordinal, ascending next state.
    kernel: Vec<Vec<(usize, f64)>>,
    reward: Vec<f64>,
    gamma: f64,
    r_max: f64,
}

/// Reward and successor list of one pair.
type PairEntry = (f64, Vec<(usize, f64)>);

/// Incremental constructor for [`FiniteMdp`]; validation happens in [`MdpBuilder::build`].
#[derive(Debug, Clone)]
pub struct MdpBuilder {
    num_states: usize,
    num_actions: usize,
    gamma: f64,
    r_max: Option<f64>,
    entries: Vec<Option<PairEntry>>,
}

impl MdpBuilder {
    pub fn new(num_states: usize, num_actions: usize, gamma: f64) -> Self {
        Self {
            num_states,
            num_actions,
            gamma,
            r_max: None,
            entries: vec![None; num_states * num_actions],
        }
    }

    /// Overrides the reward bound; defaults to the largest reward.
    pub fn r_max(mut self, r_max: f64) -> Self {
        self.r_max = Some(r_max);
        self
    }

    /// Declares `(state, action)` admissible with reward and successor distribution.
    pub fn pair(mut self, state: usize, action: usize, reward: f64, successors: &[(usize, f64)]) -> Self {
        if state < self.num_states && action < self.num_actions {
            self.entries[state * self.num_actions + action] = Some((reward, successors.to_vec()));
        } else {
            // Out-of-range pairs surface as an error in build().
            self.entries.push(Some((f64::NAN, vec![(usize::MAX, f64::NAN)])));
        }
        self
    }

    pub fn build(self) -> Result<FiniteMdp> {
        let invalid = |msg: String| Err(Error::InvalidMdp(msg));
        if self.num_states == 0 || self.num_actions == 0 {
            return invalid("need at least one state and one action".into());
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return invalid(format!("discount {} outside (0, 1)", self.gamma));
        }
        if self.entries.len() != self.num_states * self.num_actions {
            return invalid("pair index out of range".into());
        }

        let mut actions = vec![Vec::new(); self.num_states];
        let mut kernel = Vec::new();
        let mut reward = Vec::new();
        for x in 0..self.num_states {
            for u in 0..self.num_actions {
                let Some((r, succ)) = &self.entries[x * self.num_actions + u] else {
                    continue;
                };
                if !r.is_finite() || *r < 0.0 {
                    return invalid(format!("reward R({x},{u}) = {r} must be finite and >= 0"));
                }
                let mut dist: Vec<(usize, f64)> = Vec::with_capacity(succ.len());
                for &(y, p) in succ {
                    if y >= self.num_states {
                        return invalid(format!("successor {y} of ({x},{u}) out of range"));
                    }
                    if !(p.is_finite() && p >= 0.0) {
                        return invalid(format!("P({y}|{x},{u}) = {p} is not a probability"));
                    }
                    if p > 0.0 {
                        dist.push((y, p));
                    }
                }
                dist.sort_by_key(|&(y, _)| y);
                dist.dedup_by(|later, earlier| {
                    if later.0 == earlier.0 {
                        earlier.1 += later.1;
                        true
                    } else {
                        false
                    }
                });
                let total: f64 = dist.iter().map(|&(_, p)| p).sum();
                if (total - 1.0).abs() > KERNEL_SUM_TOL {
                    return invalid(format!("P(.|{x},{u}) sums to {total}"));
                }
                actions[x].push(u);
                kernel.push(dist);
                reward.push(*r);
            }
            if actions[x].is_empty() {
                return invalid(format!("state {x} has no admissible action"));
            }
        }

        let observed_max = reward.iter().copied().fold(0.0, f64::max);
        let r_max = self.r_max.unwrap_or(observed_max);
        if !(r_max.is_finite() && r_max >= observed_max) {
            return invalid(format!("R_max {r_max} below largest reward {observed_max}"));
        }

        Ok(FiniteMdp {
            shape: Arc::new(PairShape::new(self.num_states, self.num_actions, actions)),
            kernel,
            reward,
            gamma: self.gamma,
            r_max,
        })
    }
}

impl FiniteMdp {
    pub fn shape(&self) -> &Arc<PairShape> {
        &self.shape
    }

    pub fn num_states(&self) -> usize {
        self.shape.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.shape.num_actions
    }

    pub fn num_pairs(&self) -> usize {
        self.shape.num_pairs()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    /// `R_max / (1 − γ)`.
    pub fn v_max(&self) -> f64 {
        self.r_max / (1.0 - self.gamma)
    }

    fn ordinal(&self, state: usize, action: usize) -> Result<usize> {
        if !self.shape.is_admissible(state, action) {
            return Err(Error::Inadmissible { state, action });
        }
        let before: usize = self.shape.actions[..state].iter().map(Vec::len).sum();
        let within = self.shape.actions[state].iter().position(|&a| a == action).unwrap();
        Ok(before + within)
    }

    pub fn reward(&self, state: usize, action: usize) -> Result<f64> {
        Ok(self.reward[self.ordinal(state, action)?])
    }

    /// `P(y | x, u)`.
    pub fn transition_prob(&self, state: usize, action: usize, next: usize) -> Result<f64> {
        let o = self.ordinal(state, action)?;
        Ok(self.kernel[o]
            .iter()
            .find(|&&(y, _)| y == next)
            .map_or(0.0, |&(_, p)| p))
    }

    /// Support of `P(· | x, u)` with probabilities.
    pub fn successors(&self, state: usize, action: usize) -> Result<&[(usize, f64)]> {
        Ok(&self.kernel[self.ordinal(state, action)?])
    }

    /// True when every successor distribution is a point mass.
    pub fn is_deterministic(&self) -> bool {
        self.kernel.iter().all(|d| d.len() == 1)
    }

    /// Exact Bellman operator `TQ(x,u) = R(x,u) + γ Σ_y P(y|x,u) max_u' Q(y,u')`.
    pub fn bellman_apply(&self, q: &QTable) -> Result<QTable> {
        q.check_shape(&self.shape)?;
        let mut out = QTable::zeros(&self.shape);
        self.bellman_into(&q.state_max(), out.raw_mut());
        Ok(out)
    }

    pub(crate) fn bellman_into(&self, state_max: &[f64], out: &mut [f64]) {
        for (o, &d) in self.shape.pairs.iter().enumerate() {
            let expect: f64 = self.kernel[o].iter().map(|&(y, p)| p * state_max[y]).sum();
            out[d] = self.reward[o] + self.gamma * expect;
        }
    }

    /// Empirical Bellman operator `T_k Q(x,u) = R(x,u) + γ max_u' Q(y_k,u')`.
    pub fn empirical_bellman(&self, q: &QTable, samples: &SampleSet) -> Result<QTable> {
        q.check_shape(&self.shape)?;
        self.check_samples(samples)?;
        let mut out = QTable::zeros(&self.shape);
        self.empirical_into(&q.state_max(), samples, out.raw_mut());
        Ok(out)
    }

    pub(crate) fn empirical_into(&self, state_max: &[f64], samples: &SampleSet, out: &mut [f64]) {
        for (o, (&d, &y)) in self.shape.pairs.iter().zip(&samples.next_state).enumerate() {
            out[d] = self.reward[o] + self.gamma * state_max[y];
        }
    }

    pub(crate) fn check_samples(&self, samples: &SampleSet) -> Result<()> {
        if samples.next_state.len() != self.num_pairs() {
            return Err(Error::SampleMismatch(format!(
                "{} samples for {} pairs",
                samples.next_state.len(),
                self.num_pairs()
            )));
        }
        if let Some(&y) = samples.next_state.iter().find(|&&y| y >= self.num_states()) {
            return Err(Error::SampleMismatch(format!("next state {y} out of range")));
        }
        Ok(())
    }

    /// Draws one successor per admissible pair, in pair ordinal order, one
    /// uniform variate per pair (point masses included).
    pub fn sample_synchronous<R: Rng + ?Sized>(&self, rng: &mut R, round: usize) -> SampleSet {
        let next_state = self
            .kernel
            .iter()
            .map(|dist| {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for &(y, p) in dist {
                    acc += p;
                    if u < acc {
                        return y;
                    }
                }
                dist[dist.len() - 1].0
            })
            .collect();
        SampleSet { round, next_state }
    }

    /// Value iteration from the zero table. Stops once the sup-norm change is at
    /// most `tol·(1−γ)/γ`, which bounds the fixed-point residual by `tol`.
    pub fn solve_q_star(&self, tol: f64) -> Result<QTable> {
        if !(tol > 0.0) {
            return Err(Error::InvalidParameter(format!("tolerance {tol} must be > 0")));
        }
        let stop = tol * (1.0 - self.gamma) / self.gamma;
        let mut q = QTable::zeros(&self.shape);
        let mut next = QTable::zeros(&self.shape);
        loop {
            self.bellman_into(&q.state_max(), next.raw_mut());
            let change = sup_norm_diff(&next, &q)?;
            std::mem::swap(&mut q, &mut next);
            if change <= stop {
                return Ok(q);
            }
        }
    }

    /// Greedy policy; ties go to the lowest action index.
    pub fn greedy_policy(&self, q: &QTable) -> Result<Policy> {
        q.check_shape(&self.shape)?;
        let actions = self
            .shape
            .actions
            .iter()
            .enumerate()
            .map(|(x, acts)| {
                let row = &q.values[x * self.shape.num_actions..];
                let mut best = acts[0];
                for &u in &acts[1..] {
                    if row[u] > row[best] {
                        best = u;
                    }
                }
                best
            })
            .collect();
        Ok(Policy { actions })
    }

    /// Solves `J(x) = R(x,π(x)) + γ Σ_y P(y|x,π(x)) J(y)` by iteration with the
    /// same residual guarantee as [`FiniteMdp::solve_q_star`].
    pub fn policy_value(&self, policy: &Policy, tol: f64) -> Result<Vec<f64>> {
        if !(tol > 0.0) {
            return Err(Error::InvalidParameter(format!("tolerance {tol} must be > 0")));
        }
        if policy.actions.len() != self.num_states() {
            return Err(Error::ShapeMismatch("policy does not cover the MDP".into()));
        }
        let ords = policy
            .actions
            .iter()
            .enumerate()
            .map(|(x, &u)| self.ordinal(x, u))
            .collect::<Result<Vec<_>>>()?;
        let stop = tol * (1.0 - self.gamma) / self.gamma;
        let mut j = vec![0.0; self.num_states()];
        loop {
            let next: Vec<f64> = ords
                .iter()
                .map(|&o| {
                    let expect: f64 = self.kernel[o].iter().map(|&(y, p)| p * j[y]).sum();
                    self.reward[o] + self.gamma * expect
                })
                .collect();
            let change = next.iter().zip(&j).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            j = next;
            if change <= stop {
                return Ok(j);
            }
        }
    }

    /// Dense random MDP: kernel rows are normalised uniform weights, rewards
    /// uniform on `[0, 1)`, `R_max = 1`.
    pub fn random<R: Rng + ?Sized>(num_states: usize, num_actions: usize, gamma: f64, rng: &mut R) -> Result<Self> {
        let mut b = MdpBuilder::new(num_states, num_actions, gamma).r_max(1.0);
        for x in 0..num_states {
            for u in 0..num_actions {
                let w: Vec<f64> = (0..num_states).map(|_| rng.random::<f64>() + 1e-3).collect();
                let total: f64 = w.iter().sum();
                let succ: Vec<(usize, f64)> = w.iter().enumerate().map(|(y, &p)| (y, p / total)).collect();
                b = b.pair(x, u, rng.random(), &succ);
            }
        }
        b.build()
    }

    /// Random MDP whose kernel is a point mass for every pair.
    pub fn random_deterministic<R: Rng + ?Sized>(
        num_states: usize,
        num_actions: usize,
        gamma: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut b = MdpBuilder::new(num_states, num_actions, gamma).r_max(1.0);
        for x in 0..num_states {
            for u in 0..num_actions {
                let y = rng.random_range(0..num_states);
                b = b.pair(x, u, rng.random(), &[(y, 1.0)]);
            }
        }
        b.build()
    }
}
