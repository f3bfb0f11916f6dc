use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Length of the upper-triangle vectorization of a `d × d` symmetric matrix.
pub fn param_dim(d: usize) -> usize {
    d * (d + 1) / 2
}

/// `Q(x, u) = zᵀHz`, `z = [x; u]`, parameterized by the row-major upper
/// triangle `θ` of the symmetric `H`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticQ {
    n: usize,
    m: usize,
    h: DMatrix<f64>,
}

impl QuadraticQ {
    /// `H = I`.
    pub fn identity(n: usize, m: usize) -> Self {
        Self {
            n,
            m,
            h: DMatrix::identity(n + m, n + m),
        }
    }

    pub fn from_matrix(n: usize, m: usize, h: DMatrix<f64>) -> Result<Self> {
        let d = n + m;
        if h.nrows() != d || h.ncols() != d {
            return Err(Error::Dimension(format!(
                "H is {}×{}, expected {d}×{d}",
                h.nrows(),
                h.ncols()
            )));
        }
        if (&h - h.transpose()).amax() > 1e-12 * h.amax().max(1.0) {
            return Err(Error::InvalidParameter("H is not symmetric".into()));
        }
        let h = (&h + h.transpose()) * 0.5;
        Ok(Self { n, m, h })
    }

    pub fn from_theta(n: usize, m: usize, theta: &DVector<f64>) -> Result<Self> {
        let d = n + m;
        if theta.len() != param_dim(d) {
            return Err(Error::Dimension(format!(
                "θ has length {}, expected {}",
                theta.len(),
                param_dim(d)
            )));
        }
        let mut h = DMatrix::zeros(d, d);
        let mut idx = 0;
        for i in 0..d {
            for j in i..d {
                h[(i, j)] = theta[idx];
                h[(j, i)] = theta[idx];
                idx += 1;
            }
        }
        Ok(Self { n, m, h })
    }

    pub fn theta(&self) -> DVector<f64> {
        let d = self.n + self.m;
        let mut out = Vec::with_capacity(param_dim(d));
        for i in 0..d {
            for j in i..d {
                out.push(self.h[(i, j)]);
            }
        }
        DVector::from_vec(out)
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn input_dim(&self) -> usize {
        self.m
    }

    fn h_uu(&self) -> DMatrix<f64> {
        self.h.view((self.n, self.n), (self.m, self.m)).into_owned()
    }

    fn h_ux(&self) -> DMatrix<f64> {
        self.h.view((self.n, 0), (self.m, self.n)).into_owned()
    }

    fn stack(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.n || u.len() != self.m {
            return Err(Error::Dimension(format!(
                "x has length {}, u has length {}; expected {} and {}",
                x.len(),
                u.len(),
                self.n,
                self.m
            )));
        }
        Ok(DVector::from_iterator(
            self.n + self.m,
            x.iter().chain(u.iter()).copied(),
        ))
    }

    pub fn q_value(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<f64> {
        let z = self.stack(x, u)?;
        Ok(z.dot(&(&self.h * &z)))
    }

    /// `K = H_uu⁻¹ H_ux`, the greedy policy being `u = −Kx`.
    pub fn policy_from_h(&self) -> Result<DMatrix<f64>> {
        let huu = self.h_uu();
        if huu.clone().cholesky().is_none() {
            log::debug!("H_uu is not positive definite; greedy action is not a minimizer");
        }
        huu.lu().solve(&self.h_ux()).ok_or(Error::Singular("H_uu"))
    }

    /// Gradient of `zᵀHz` with respect to `θ`: `z_i²` on the diagonal, `2 z_i z_j` above it.
    pub fn grad_q(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(features(&self.stack(x, u)?))
    }

    /// `Δ = Q(x, u) − cost − γ min_{u'} Q(x', u')`.
    pub fn td_delta(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        cost: f64,
        x_next: &DVector<f64>,
        gamma: f64,
    ) -> Result<f64> {
        let v = self.greedy_value_matrix()?;
        if x_next.len() != self.n {
            return Err(Error::Dimension(format!(
                "x' has length {}, expected {}",
                x_next.len(),
                self.n
            )));
        }
        Ok(self.q_value(x, u)? - cost - gamma * x_next.dot(&(&v * x_next)))
    }

    /// `H_xx − H_xu H_uu⁻¹ H_ux`, so that `min_u Q(x, u) = xᵀVx`.
    pub fn greedy_value_matrix(&self) -> Result<DMatrix<f64>> {
        if self.h_uu().cholesky().is_none() {
            return Err(Error::NotPositiveDefinite("H_uu"));
        }
        self.stationary_value_matrix()
    }

    /// `H_xx − H_xu H_uu⁻¹ H_ux` evaluated at the stationary point `u = −Kx`
    /// whether or not it is a minimizer; needs only an invertible `H_uu`.
    pub fn stationary_value_matrix(&self) -> Result<DMatrix<f64>> {
        let hux = self.h_ux();
        let k = self.h_uu().lu().solve(&hux).ok_or(Error::Singular("H_uu"))?;
        let hxx = self.h.view((0, 0), (self.n, self.n));
        let v = hxx - hux.transpose() * k;
        Ok((&v + v.transpose()) * 0.5)
    }
}

/// Upper-triangle quadratic features of `z`.
pub fn features(z: &DVector<f64>) -> DVector<f64> {
    let d = z.len();
    let mut out = Vec::with_capacity(param_dim(d));
    for i in 0..d {
        out.push(z[i] * z[i]);
        for j in i + 1..d {
            out.push(2.0 * z[i] * z[j]);
        }
    }
    DVector::from_vec(out)
}
