use nalgebra::DMatrix;

use super::system::LinearSystem;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DareSolution {
    pub p: DMatrix<f64>,
    pub iterations: usize,
}

fn solve_inner(sys: &LinearSystem, p: &DMatrix<f64>, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let g = sys.r_cost() + sys.b().transpose() * p * sys.b();
    g.lu().solve(rhs).ok_or(Error::Singular("R_cost + BᵀPB"))
}

/// One Riccati map `AᵀPA − (AᵀPB + N)(R + BᵀPB)⁻¹(BᵀPA + Nᵀ) + Q`.
pub fn riccati_map(sys: &LinearSystem, p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (a, b) = (sys.a(), sys.b());
    let bpa_n = b.transpose() * p * a + sys.n_cross().transpose();
    let apb_n = a.transpose() * p * b + sys.n_cross();
    let next = a.transpose() * p * a - apb_n * solve_inner(sys, p, &bpa_n)? + sys.q_cost();
    // Restore exact symmetry lost to rounding.
    Ok((&next + next.transpose()) * 0.5)
}

/// Value iteration on the Riccati map from `P_0 = Q_cost` until the
/// sup-norm change is at most `tol`.
pub fn dare_solve(sys: &LinearSystem, tol: f64, max_iter: usize) -> Result<DareSolution> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "DARE tolerance {tol} must be positive"
        )));
    }
    let mut p = sys.q_cost().clone();
    let mut change = f64::INFINITY;
    for j in 1..=max_iter {
        let next = riccati_map(sys, &p)?;
        change = (&next - &p).amax();
        p = next;
        if !change.is_finite() {
            break;
        }
        if change <= tol {
            return Ok(DareSolution { p, iterations: j });
        }
    }
    Err(Error::DareNonConvergence {
        iterations: max_iter,
        last_change: change,
    })
}

/// Sup-norm of `riccati_map(P) − P`.
pub fn dare_residual(sys: &LinearSystem, p: &DMatrix<f64>) -> Result<f64> {
    Ok((riccati_map(sys, p)? - p).amax())
}

/// `K* = (R + BᵀPB)⁻¹(Nᵀ + BᵀPA)`; the optimal control is `u = −K*x`.
pub fn optimal_gain(sys: &LinearSystem, p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let rhs = sys.n_cross().transpose() + sys.b().transpose() * p * sys.a();
    solve_inner(sys, p, &rhs)
}

pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn closed_loop(sys: &LinearSystem, k: &DMatrix<f64>) -> DMatrix<f64> {
    sys.a() - sys.b() * k
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.singular_values().iter().copied().fold(0.0, f64::max)
}

/// Exact Q-function matrix `[[Q, N], [Nᵀ, R]] + γ[A B]ᵀP[A B]` of the
/// discounted problem whose value matrix is `P`.
pub fn exact_q_matrix(sys: &LinearSystem, p: &DMatrix<f64>, gamma: f64) -> DMatrix<f64> {
    let (n, m) = (sys.state_dim(), sys.input_dim());
    let mut ab = DMatrix::zeros(n, n + m);
    ab.view_mut((0, 0), (n, n)).copy_from(sys.a());
    ab.view_mut((0, n), (n, m)).copy_from(sys.b());
    let mut h = ab.transpose() * p * &ab * gamma;
    let mut stage = DMatrix::zeros(n + m, n + m);
    stage.view_mut((0, 0), (n, n)).copy_from(sys.q_cost());
    stage.view_mut((0, n), (n, m)).copy_from(sys.n_cross());
    stage.view_mut((n, 0), (m, n)).copy_from(&sys.n_cross().transpose());
    stage.view_mut((n, n), (m, m)).copy_from(sys.r_cost());
    h += stage;
    (&h + h.transpose()) * 0.5
}

/// Ground truth for a discount `γ ∈ (0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LqrOracle {
    pub gamma: f64,
    pub p: DMatrix<f64>,
    pub k_star: DMatrix<f64>,
    pub h_star: DMatrix<f64>,
    pub dare_iterations: usize,
}

/// Solves the DARE of the `√γ`-scaled system and derives `K*` and the exact `H`.
pub fn lqr_oracle(sys: &LinearSystem, gamma: f64, tol: f64, max_iter: usize) -> Result<LqrOracle> {
    let scaled = sys.discount_scaled(gamma)?;
    let sol = dare_solve(&scaled, tol, max_iter)?;
    let k_star = optimal_gain(&scaled, &sol.p)?;
    let h_star = exact_q_matrix(sys, &sol.p, gamma);
    Ok(LqrOracle {
        gamma,
        p: sol.p,
        k_star,
        h_star,
        dare_iterations: sol.iterations,
    })
}
