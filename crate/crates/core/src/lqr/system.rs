use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Discrete-time linear system `x' = Ax + Bu` with stage cost
/// `xᵀQx + uᵀRu + 2xᵀNu`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    q_cost: DMatrix<f64>,
    r_cost: DMatrix<f64>,
    n_cross: DMatrix<f64>,
    eta: f64,
}

fn dims(m: &DMatrix<f64>) -> (usize, usize) {
    (m.nrows(), m.ncols())
}

fn is_symmetric(m: &DMatrix<f64>) -> bool {
    let scale = m.amax().max(1.0);
    (m - m.transpose()).amax() <= 1e-12 * scale
}

impl LinearSystem {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        q_cost: DMatrix<f64>,
        r_cost: DMatrix<f64>,
        n_cross: DMatrix<f64>,
        eta: f64,
    ) -> Result<Self> {
        let n = a.nrows();
        let m = b.ncols();
        if n == 0 || m == 0 {
            return Err(Error::Dimension("state and input dimensions must be positive".into()));
        }
        let expect = [
            ("A", dims(&a), (n, n)),
            ("B", dims(&b), (n, m)),
            ("Q_cost", dims(&q_cost), (n, n)),
            ("R_cost", dims(&r_cost), (m, m)),
            ("N", dims(&n_cross), (n, m)),
        ];
        for (name, got, want) in expect {
            if got != want {
                return Err(Error::Dimension(format!(
                    "{name} is {}×{}, expected {}×{}",
                    got.0, got.1, want.0, want.1
                )));
            }
        }
        for (name, mat) in [
            ("A", &a),
            ("B", &b),
            ("Q_cost", &q_cost),
            ("R_cost", &r_cost),
            ("N", &n_cross),
        ] {
            if mat.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} has non-finite entries")));
            }
        }
        if !is_symmetric(&q_cost) {
            return Err(Error::InvalidParameter("Q_cost is not symmetric".into()));
        }
        if !is_symmetric(&r_cost) {
            return Err(Error::InvalidParameter("R_cost is not symmetric".into()));
        }
        let min_q = q_cost.clone().symmetric_eigenvalues().min();
        if min_q < -1e-12 * q_cost.amax().max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "Q_cost is not PSD (eigenvalue {min_q})"
            )));
        }
        if r_cost.clone().cholesky().is_none() {
            return Err(Error::NotPositiveDefinite("R_cost"));
        }
        Ok(Self {
            a,
            b,
            q_cost,
            r_cost,
            n_cross,
            eta,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn q_cost(&self) -> &DMatrix<f64> {
        &self.q_cost
    }

    pub fn r_cost(&self) -> &DMatrix<f64> {
        &self.r_cost
    }

    pub fn n_cross(&self) -> &DMatrix<f64> {
        &self.n_cross
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u
    }

    pub fn stage_cost(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        (x.transpose() * &self.q_cost * x)[0]
            + (u.transpose() * &self.r_cost * u)[0]
            + 2.0 * (x.transpose() * &self.n_cross * u)[0]
    }

    /// The system with `A, B` scaled by `√γ`; its undiscounted DARE is the
    /// discounted DARE of `self`.
    pub fn discount_scaled(&self, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::InvalidParameter(format!("discount {gamma} outside (0, 1]")));
        }
        let s = gamma.sqrt();
        Ok(Self {
            a: &self.a * s,
            b: &self.b * s,
            ..self.clone()
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&SystemJson::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: SystemJson = serde_json::from_str(text)?;
        raw.into_system()
    }
}

/// Row-major JSON form of a [`LinearSystem`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemJson {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub q_cost: Vec<Vec<f64>>,
    pub r_cost: Vec<Vec<f64>>,
    pub n: Vec<Vec<f64>>,
    pub eta: f64,
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows(name: &str, rows: &[Vec<f64>], ncols_if_empty: usize) -> Result<DMatrix<f64>> {
    let ncols = rows.first().map_or(ncols_if_empty, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Dimension(format!("{name} has ragged rows")));
    }
    Ok(DMatrix::from_row_iterator(
        rows.len(),
        ncols,
        rows.iter().flatten().copied(),
    ))
}

impl From<&LinearSystem> for SystemJson {
    fn from(s: &LinearSystem) -> Self {
        Self {
            a: to_rows(&s.a),
            b: to_rows(&s.b),
            q_cost: to_rows(&s.q_cost),
            r_cost: to_rows(&s.r_cost),
            n: to_rows(&s.n_cross),
            eta: s.eta,
        }
    }
}

impl SystemJson {
    pub fn into_system(self) -> Result<LinearSystem> {
        let a = from_rows("A", &self.a, 0)?;
        let b = from_rows("B", &self.b, 0)?;
        let m = b.ncols();
        LinearSystem::new(
            a,
            b,
            from_rows("Q_cost", &self.q_cost, 0)?,
            from_rows("R_cost", &self.r_cost, 0)?,
            from_rows("N", &self.n, m)?,
            self.eta,
        )
    }
}

/// Spring and damper constants of the mass-damper chain.
pub const SPRING: f64 = 1.0;
pub const DAMPING: f64 = 0.1;

/// Chain m1–m2–…–mn–wall of unit masses joined by identical spring-damper
/// links, forward-Euler discretized. `m1` is the free end. States are
/// positions then velocities; the first `n_actuators` masses receive a force
/// input each.
pub fn build_mass_damper(n_masses: usize, n_actuators: usize, eta: f64, dt: f64) -> Result<LinearSystem> {
    if n_masses == 0 || n_actuators == 0 || n_actuators > n_masses {
        return Err(Error::Dimension(format!(
            "need 1 ≤ actuators ≤ masses, got {n_actuators} actuators on {n_masses} masses"
        )));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("time step {dt} must be positive")));
    }
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "control cost η={eta} must be positive"
        )));
    }
    let nm = n_masses;
    let n = 2 * nm;
    let mut coupling = DMatrix::<f64>::zeros(nm, nm);
    // Link i−1 ↔ i for i ≥ 1, plus the last mass to the wall.
    for i in 1..nm {
        coupling[(i - 1, i - 1)] += 1.0;
        coupling[(i, i)] += 1.0;
        coupling[(i, i - 1)] -= 1.0;
        coupling[(i - 1, i)] -= 1.0;
    }
    coupling[(nm - 1, nm - 1)] += 1.0;
    let mut ac = DMatrix::<f64>::zeros(n, n);
    ac.view_mut((0, nm), (nm, nm)).fill_with_identity();
    ac.view_mut((nm, 0), (nm, nm)).copy_from(&(&coupling * -SPRING));
    ac.view_mut((nm, nm), (nm, nm)).copy_from(&(&coupling * -DAMPING));
    let mut bc = DMatrix::<f64>::zeros(n, n_actuators);
    bc.view_mut((nm, 0), (n_actuators, n_actuators)).fill_with_identity();

    let a = DMatrix::identity(n, n) + ac * dt;
    let b = bc * dt;
    let mut q_cost = DMatrix::zeros(n, n);
    q_cost.view_mut((0, 0), (nm, nm)).fill_with_identity();
    let r_cost = DMatrix::identity(n_actuators, n_actuators) * eta;
    let n_cross = DMatrix::zeros(n, n_actuators);
    LinearSystem::new(a, b, q_cost, r_cost, n_cross, eta)
}
