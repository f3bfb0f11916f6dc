use std::io::Write;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::dare::{spectral_norm, LqrOracle};
use super::paql::{Hyper, PaqlState, StepRule, Variant};
use super::quadratic::QuadraticQ;
use super::replay::{ReplayBuffer, Transition};
use super::system::LinearSystem;
use crate::error::{Error, Result};
use crate::learners::stream_rng;

/// Settings of a single `(variant, seed)` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LqrRunSettings {
    pub hyper: Hyper,
    pub gamma: f64,
    pub steps: usize,
    pub noise_std: f64,
    pub noise_decay: f64,
    pub batch: usize,
    pub capacity: usize,
    /// Episode length before the state is redrawn.
    pub horizon: usize,
    /// Initial states are uniform on `[−init_scale, init_scale]ⁿ`.
    pub init_scale: f64,
    /// The episode also resets once `‖x‖ > blowup_factor · init_scale · √n`.
    pub blowup_factor: f64,
    pub prioritized: bool,
    pub step_rule: StepRule,
}

impl Default for LqrRunSettings {
    fn default() -> Self {
        Self {
            hyper: Hyper::default(),
            gamma: 1.0,
            steps: 3000,
            noise_std: 0.5,
            noise_decay: 0.999,
            batch: 32,
            capacity: 100_000,
            horizon: 100,
            init_scale: 1.0,
            blowup_factor: 10.0,
            prioritized: false,
            step_rule: StepRule::LeastSquares,
        }
    }
}

impl LqrRunSettings {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("LQR discount {} outside (0, 1]", self.gamma));
        }
        if self.batch == 0 || self.capacity == 0 || self.horizon == 0 {
            return bad("batch, capacity and horizon must be positive".into());
        }
        if !(self.noise_std >= 0.0 && self.noise_decay > 0.0 && self.noise_decay <= 1.0) {
            return bad(format!(
                "noise std {} / decay {} out of range",
                self.noise_std, self.noise_decay
            ));
        }
        if !(self.init_scale > 0.0 && self.blowup_factor > 0.0) {
            return bad("init_scale and blowup_factor must be positive".into());
        }
        let Hyper { a, b, c } = self.hyper;
        if ![a, b, c].iter().all(|v| v.is_finite()) || a <= 0.0 {
            return bad(format!("hyperparameters (a, b, c) = ({a}, {b}, {c}) invalid"));
        }
        Ok(())
    }
}

/// `‖K_k − K*‖₂` for `k = 0..=steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct GainErrorTrajectory {
    pub variant: Variant,
    pub seed: u64,
    pub errors: Vec<f64>,
}

impl GainErrorTrajectory {
    /// First step at which the gain error is at most `threshold`.
    pub fn first_crossing(&self, threshold: f64) -> Option<usize> {
        self.errors.iter().position(|&e| e <= threshold)
    }
}

/// Rolls out `u = −K_k x + σ_k ξ` from `H_0 = I`, stores every transition and
/// performs one PAQL step per environment step on a replayed batch.
pub fn run_lqr_experiment(
    sys: &LinearSystem,
    oracle: &LqrOracle,
    variant: Variant,
    seed: u64,
    settings: &LqrRunSettings,
) -> Result<GainErrorTrajectory> {
    settings.validate()?;
    if oracle.k_star.nrows() != sys.input_dim() || oracle.k_star.ncols() != sys.state_dim() {
        return Err(Error::Dimension("oracle gain does not match the system".into()));
    }
    if oracle.gamma != settings.gamma {
        return Err(Error::InvalidParameter(format!(
            "oracle discount {} differs from run discount {}",
            oracle.gamma, settings.gamma
        )));
    }
    let (n, m) = (sys.state_dim(), sys.input_dim());
    let mut rng = stream_rng(seed, 0);
    let mut state = PaqlState::new(&QuadraticQ::identity(n, m), variant, settings.hyper, settings.step_rule);
    let mut buffer = ReplayBuffer::new(settings.capacity, settings.prioritized)?;
    let gain_error = |st: &PaqlState| -> Result<f64> { Ok(spectral_norm(&(st.gain()? - &oracle.k_star))) };

    let s = settings.init_scale;
    let reset_norm = settings.blowup_factor * s * (n as f64).sqrt();
    let draw_state = |rng: &mut rand_chacha::ChaCha8Rng| DVector::from_fn(n, |_, _| rng.random_range(-s..=s));
    let mut x = draw_state(&mut rng);
    let mut t = 0usize;
    let mut sigma = settings.noise_std;
    let mut gain = state.gain()?;
    let mut errors = Vec::with_capacity(settings.steps + 1);
    errors.push(gain_error(&state)?);

    for _ in 0..settings.steps {
        let noise = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal) * sigma);
        let u = -(&gain * &x) + noise;
        sigma *= settings.noise_decay;
        let cost = sys.stage_cost(&x, &u);
        let x_next = sys.step(&x, &u);
        buffer.push(Transition {
            x: x.clone(),
            u,
            cost,
            x_next: x_next.clone(),
        });
        x = x_next;
        t += 1;
        if t >= settings.horizon || x.norm() > reset_norm || !x.iter().all(|v| v.is_finite()) {
            x = draw_state(&mut rng);
            t = 0;
        }
        let idx = buffer.sample_indices(&mut rng, settings.batch)?;
        let batch: Vec<&Transition> = idx.iter().map(|&i| buffer.get(i)).collect();
        let deltas = state.step(&batch, settings.gamma)?;
        buffer.update_priorities(&idx, &deltas);
        gain = state.gain()?;
        errors.push(spectral_norm(&(&gain - &oracle.k_star)));
    }
    Ok(GainErrorTrajectory { variant, seed, errors })
}

/// CSV with columns `variant,seed,step,gain_error`.
pub fn write_gain_csv<W: Write>(trajectories: &[GainErrorTrajectory], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["variant", "seed", "step", "gain_error"])?;
    for t in trajectories {
        let seed = t.seed.to_string();
        for (k, e) in t.errors.iter().enumerate() {
            w.write_record([t.variant.name(), seed.as_str(), &k.to_string(), &e.to_string()])?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
