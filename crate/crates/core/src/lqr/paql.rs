use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::quadratic::{features, param_dim, QuadraticQ};
use super::replay::Transition;
use crate::error::{Error, Result};

/// Abort threshold on `‖θ‖`.
pub const DIVERGENCE_NORM: f64 = 1e8;

/// Relative singular-value cutoff of the least-squares step.
pub const LSTSQ_RCOND: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Plain parametric Q-learning.
    Vanilla,
    /// Heavy-ball momentum only.
    Hb,
    /// Nesterov-style extrapolation plus momentum.
    Nes,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Vanilla, Variant::Hb, Variant::Nes];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Vanilla => "vanilla",
            Variant::Hb => "hb",
            Variant::Nes => "nes",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vanilla" => Ok(Variant::Vanilla),
            "hb" => Ok(Variant::Hb),
            "nes" => Ok(Variant::Nes),
            other => Err(Error::InvalidParameter(format!("unknown PAQL variant {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyper {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Default for Hyper {
    fn default() -> Self {
        Self { a: 0.9, b: 0.2, c: 0.2 }
    }
}

impl Hyper {
    /// `vanilla` zeroes `b` and `c`, `hb` zeroes `b`.
    pub fn for_variant(self, variant: Variant) -> Self {
        match variant {
            Variant::Vanilla => Self { b: 0.0, c: 0.0, ..self },
            Variant::Hb => Self { b: 0.0, ..self },
            Variant::Nes => self,
        }
    }
}

/// Direction each inner step moves along.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// Batch mean of `Δ ∇_θ Q`.
    Gradient,
    /// Minimum-norm least-squares solution of `Φ d = Δ` over the batch
    /// feature matrix `Φ`: a Gauss-Newton step, fitted value iteration at `a = 1`.
    #[default]
    LeastSquares,
}

/// Parameter pair `(θ_k, θ_{k−1})` of one PAQL run.
#[derive(Debug, Clone, PartialEq)]
pub struct PaqlState {
    n: usize,
    m: usize,
    theta_curr: DVector<f64>,
    theta_prev: DVector<f64>,
    k: usize,
    variant: Variant,
    hyper: Hyper,
    rule: StepRule,
}

impl PaqlState {
    /// `θ_{−1} = θ_0`; `hyper` is overridden per [`Hyper::for_variant`].
    pub fn new(init: &QuadraticQ, variant: Variant, hyper: Hyper, rule: StepRule) -> Self {
        let theta = init.theta();
        Self {
            n: init.state_dim(),
            m: init.input_dim(),
            theta_prev: theta.clone(),
            theta_curr: theta,
            k: 0,
            variant,
            hyper: hyper.for_variant(variant),
            rule,
        }
    }

    pub fn theta(&self) -> &DVector<f64> {
        &self.theta_curr
    }

    pub fn theta_prev(&self) -> &DVector<f64> {
        &self.theta_prev
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn hyper(&self) -> Hyper {
        self.hyper
    }

    pub fn q(&self) -> QuadraticQ {
        QuadraticQ::from_theta(self.n, self.m, &self.theta_curr).expect("θ length is fixed at construction")
    }

    pub fn gain(&self) -> Result<DMatrix<f64>> {
        self.q().policy_from_h()
    }

    /// `ξ = θ_{k−1} − a·d(θ_{k−1})`, `ζ = θ_k − a·d(θ_k)`,
    /// `θ_{k+1} = ζ + b(ζ − ξ) + c(θ_k − θ_{k−1})`. Returns the batch `Δ` at `θ_k`.
    pub fn step(&mut self, batch: &[&Transition], gamma: f64) -> Result<Vec<f64>> {
        if batch.is_empty() {
            return Err(Error::InvalidParameter("PAQL batch is empty".into()));
        }
        let Hyper { a, b, c } = self.hyper;
        let (dir_curr, deltas) = direction(self.n, self.m, &self.theta_curr, batch, gamma, self.rule)?;
        let zeta = &self.theta_curr - dir_curr * a;
        let mut next = zeta.clone();
        if b != 0.0 {
            let (dir_prev, _) = direction(self.n, self.m, &self.theta_prev, batch, gamma, self.rule)?;
            let xi = &self.theta_prev - dir_prev * a;
            next += (&zeta - xi) * b;
        }
        if c != 0.0 {
            next += (&self.theta_curr - &self.theta_prev) * c;
        }
        let norm = next.norm();
        if !norm.is_finite() || norm > DIVERGENCE_NORM {
            return Err(Error::Divergence { step: self.k + 1, norm });
        }
        self.theta_prev = std::mem::replace(&mut self.theta_curr, next);
        self.k += 1;
        Ok(deltas)
    }
}

/// Step direction at `θ` and the per-transition `Δ`. The next-state value is
/// taken at the greedy stationary point, so an indefinite `H_uu` on an early,
/// rank-deficient fit does not abort the run.
pub fn direction(
    n: usize,
    m: usize,
    theta: &DVector<f64>,
    batch: &[&Transition],
    gamma: f64,
    rule: StepRule,
) -> Result<(DVector<f64>, Vec<f64>)> {
    let q = QuadraticQ::from_theta(n, m, theta)?;
    let v = q.stationary_value_matrix()?;
    let p = param_dim(n + m);
    let mut phi = DMatrix::zeros(batch.len(), p);
    let mut deltas = Vec::with_capacity(batch.len());
    for (row, t) in batch.iter().enumerate() {
        let z = DVector::from_iterator(n + m, t.x.iter().chain(t.u.iter()).copied());
        let f = features(&z);
        let qv = theta.dot(&f);
        deltas.push(qv - t.cost - gamma * t.x_next.dot(&(&v * &t.x_next)));
        phi.row_mut(row).copy_from(&f.transpose());
    }
    let delta = DVector::from_column_slice(&deltas);
    let dir = match rule {
        StepRule::Gradient => phi.transpose() * &delta / batch.len() as f64,
        StepRule::LeastSquares => {
            let svd = phi.svd(true, true);
            let cutoff = LSTSQ_RCOND * svd.singular_values.max();
            svd.solve(&delta, cutoff)
                .map_err(|_| Error::Singular("batch feature matrix"))?
        }
    };
    Ok((dir, deltas))
}
