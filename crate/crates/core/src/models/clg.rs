//! Conditionally linear Gaussian algebra on dense matrices.
//!
//! With `x1 ~ N(eta, Gamma)` and `y | x1 ~ N(G x1, theta^2 Sigma)`, the marginal
//! of `y` and the conditional of `x1` given `y` are Gaussian. The functions
//! here work on one observation vector; the source model sums them over time.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Result, SmcError};
use crate::models::nef::log_gaussian_power_constant;

/// One linear-Gaussian block `y = G x1 + noise`.
#[derive(Debug, Clone)]
pub struct LinearGaussian {
    /// `k x m` map from the linear block to observations.
    pub lead: DMatrix<f64>,
    pub eta: DVector<f64>,
    pub gamma: DMatrix<f64>,
    /// Known part of the noise covariance, scaled by `theta^2`.
    pub sigma: DMatrix<f64>,
}

fn chol(m: DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    m.cholesky()
        .ok_or_else(|| SmcError::NotPositiveDefinite(what.to_string()))
}

fn log_det(c: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * c.l().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// `log N(y; mean, cov)`.
pub fn log_normal_density(y: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    let c = chol(cov.clone(), "covariance")?;
    let r = y - mean;
    let z = c.l().solve_lower_triangular(&r).expect("triangular solve");
    let k = y.len() as f64;
    Ok(-0.5 * (k * (2.0 * PI).ln() + log_det(&c) + z.norm_squared()))
}

impl LinearGaussian {
    pub fn new(lead: DMatrix<f64>, eta: DVector<f64>, gamma: DMatrix<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        let (k, m) = lead.shape();
        if eta.len() != m || gamma.shape() != (m, m) || sigma.shape() != (k, k) {
            return Err(SmcError::InvalidArgument(format!(
                "inconsistent shapes: lead {k}x{m}, eta {}, gamma {:?}, sigma {:?}",
                eta.len(),
                gamma.shape(),
                sigma.shape()
            )));
        }
        Ok(Self { lead, eta, gamma, sigma })
    }

    pub fn noise_cov(&self, theta: f64) -> DMatrix<f64> {
        &self.sigma * (theta * theta)
    }

    /// `G Gamma G^T + theta^2 Sigma`.
    pub fn marginal_cov(&self, theta: f64) -> DMatrix<f64> {
        &self.lead * &self.gamma * self.lead.transpose() + self.noise_cov(theta)
    }

    pub fn marginal_mean(&self) -> DVector<f64> {
        &self.lead * &self.eta
    }

    /// `log N(y; G eta, G Gamma G^T + theta^2 Sigma)`.
    pub fn marginal_loglik(&self, y: &DVector<f64>, theta: f64) -> Result<f64> {
        if !(theta > 0.0) {
            return Err(SmcError::NotPositiveDefinite(format!("theta = {theta}")));
        }
        log_normal_density(y, &self.marginal_mean(), &self.marginal_cov(theta))
    }

    /// Mean and covariance of `x1 | y`. The covariance uses the Joseph form
    /// `(I - K G) Gamma (I - K G)^T + K theta^2 Sigma K^T`.
    pub fn conditional_posterior(&self, y: &DVector<f64>, theta: f64) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let s = chol(self.marginal_cov(theta), "innovation covariance")?;
        let gain_t = s.solve(&(&self.lead * &self.gamma));
        let gain = gain_t.transpose();
        let mean = &self.eta + &gain * (y - self.marginal_mean());
        let m = self.eta.len();
        let ikg = DMatrix::identity(m, m) - &gain * &self.lead;
        let cov = &ikg * &self.gamma * ikg.transpose() + &gain * self.noise_cov(theta) * gain.transpose();
        let cov = 0.5 * (&cov + cov.transpose());
        Ok((mean, cov))
    }

    /// Joint covariance of `(x1, y)`.
    pub fn joint_cov(&self, theta: f64) -> DMatrix<f64> {
        let (k, m) = self.lead.shape();
        let cross = &self.lead * &self.gamma;
        let mut j = DMatrix::zeros(m + k, m + k);
        j.view_mut((0, 0), (m, m)).copy_from(&self.gamma);
        j.view_mut((m, 0), (k, m)).copy_from(&cross);
        j.view_mut((0, m), (m, k)).copy_from(&cross.transpose());
        j.view_mut((m, m), (k, k)).copy_from(&self.marginal_cov(theta));
        j
    }

    pub fn joint_mean(&self) -> DVector<f64> {
        let m = self.eta.len();
        let k = self.lead.nrows();
        let mut v = DVector::zeros(m + k);
        v.rows_mut(0, m).copy_from(&self.eta);
        v.rows_mut(m, k).copy_from(&self.marginal_mean());
        v
    }

    /// Log of the constant `l_t` in
    /// `int p(x1) [p(y | x1)]^alpha dx1 = l_t * N(y; G eta, G Gamma G^T + theta^2/alpha Sigma)`.
    pub fn defective_log_constant(&self, theta: f64, alpha: f64) -> Result<f64> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(SmcError::Domain(format!("alpha = {alpha} outside (0, 1]")));
        }
        let c = chol(self.noise_cov(theta), "noise covariance")?;
        Ok(log_gaussian_power_constant(self.lead.nrows(), log_det(&c), alpha))
    }

    /// Log-density of `y` under the marginal of the naively tempered joint,
    /// `log int p(x1) [p(y | x1)]^alpha dx1`.
    pub fn tempered_joint_marginal(&self, y: &DVector<f64>, theta: f64, alpha: f64) -> Result<f64> {
        Ok(self.defective_log_constant(theta, alpha)? + self.marginal_loglik(y, theta / alpha.sqrt())?)
    }

    /// `alpha * log N(y; G eta, G Gamma G^T + theta^2 Sigma)`: the naive
    /// tempering of the marginal likelihood.
    pub fn naive_tempered_marginal(&self, y: &DVector<f64>, theta: f64, alpha: f64) -> Result<f64> {
        Ok(alpha * self.marginal_loglik(y, theta)?)
    }
}

pub fn log_det_spd(m: &DMatrix<f64>) -> Result<f64> {
    Ok(log_det(&chol(m.clone(), "matrix")?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_instance(seed: u64, k: usize, m: usize) -> LinearGaussian {
        let mut rng = stream(seed, Purpose::Aux, 0, 0);
        let mut n = || -> f64 { StandardNormal.sample(&mut rng) };
        let lead = DMatrix::from_fn(k, m, |_, _| n());
        let eta = DVector::from_fn(m, |_, _| 0.5 * n());
        let a = DMatrix::from_fn(m, m, |_, _| n());
        let gamma = &a * a.transpose() + DMatrix::identity(m, m) * 0.5;
        let b = DMatrix::from_fn(k, k, |_, _| 0.3 * n());
        let sigma = &b * b.transpose() + DMatrix::identity(k, k);
        LinearGaussian::new(lead, eta, gamma, sigma).unwrap()
    }

    #[test]
    fn noise_only_reduction() {
        let lg = LinearGaussian::new(
            DMatrix::zeros(3, 0),
            DVector::zeros(0),
            DMatrix::zeros(0, 0),
            DMatrix::identity(3, 3),
        )
        .unwrap();
        let y = DVector::from_vec(vec![0.3, -1.0, 2.0]);
        let ll = lg.marginal_loglik(&y, 0.7).unwrap();
        let direct = log_normal_density(&y, &DVector::zeros(3), &(DMatrix::identity(3, 3) * 0.49)).unwrap();
        assert!((ll - direct).abs() < 1e-13);
    }

    #[test]
    fn scalar_marginal() {
        let gamma = 0.8;
        let theta = 0.6;
        let y = 1.3;
        let lg = LinearGaussian::new(
            DMatrix::from_element(1, 1, 1.0),
            DVector::zeros(1),
            DMatrix::from_element(1, 1, gamma),
            DMatrix::identity(1, 1),
        )
        .unwrap();
        let v = gamma + theta * theta;
        let expected = -0.5 * ((2.0 * PI * v).ln() + y * y / v);
        let ll = lg.marginal_loglik(&DVector::from_element(1, y), theta).unwrap();
        assert!((ll - expected).abs() < 1e-14);
    }

    #[test]
    fn scalar_conditional_mean() {
        let (g, gamma, theta, y) = (1.7, 0.4, 0.5, 0.9);
        let lg = LinearGaussian::new(
            DMatrix::from_element(1, 1, g),
            DVector::zeros(1),
            DMatrix::from_element(1, 1, gamma),
            DMatrix::identity(1, 1),
        )
        .unwrap();
        let (mean, cov) = lg.conditional_posterior(&DVector::from_element(1, y), theta).unwrap();
        let expected = gamma * g * y / (g * g * gamma + theta * theta);
        assert!((mean[0] - expected).abs() < 1e-14);
        let expected_var = gamma * theta * theta / (g * g * gamma + theta * theta);
        assert!((cov[(0, 0)] - expected_var).abs() < 1e-14);
    }

    #[test]
    fn conditional_limits() {
        let base = random_instance(3, 3, 2);
        let y = DVector::from_vec(vec![1.0, -0.5, 0.2]);
        let mut tight = base.clone();
        tight.eta = DVector::zeros(2);
        tight.gamma = DMatrix::identity(2, 2) * 1e-12;
        let (mean, _) = tight.conditional_posterior(&y, 1.0).unwrap();
        assert!(mean.norm() < 1e-9);

        let (mean, cov) = base.conditional_posterior(&y, 1e6).unwrap();
        assert!((mean - &base.eta).norm() < 1e-9);
        assert!((cov - &base.gamma).norm() < 1e-9);
    }

    #[test]
    fn conditional_cov_is_psd() {
        for seed in 0..10 {
            let lg = random_instance(seed, 4, 3);
            let y = DVector::from_fn(4, |i, _| i as f64 - 1.5);
            let (_, cov) = lg.conditional_posterior(&y, 0.3).unwrap();
            let eig = cov.symmetric_eigenvalues();
            assert!(eig.iter().all(|e| *e > -1e-12));
        }
    }

    #[test]
    fn marginal_matches_monte_carlo() {
        // E_{x1 ~ N(eta, Gamma)} N(y; G x1, theta^2 Sigma) by plain Monte Carlo
        let lg = random_instance(21, 3, 2);
        let theta = 1.2;
        let y = DVector::from_vec(vec![0.4, -0.8, 1.1]);
        let gchol = lg.gamma.clone().cholesky().unwrap();
        let noise = lg.noise_cov(theta);
        let nchol = noise.clone().cholesky().unwrap();
        let nlogdet = 2.0 * nchol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let mut rng = stream(22, Purpose::Aux, 0, 0);
        let n = 200_000;
        let vals: Vec<f64> = (0..n)
            .map(|_| {
                let z = DVector::from_fn(2, |_, _| StandardNormal.sample(&mut rng));
                let x1 = &lg.eta + gchol.l() * z;
                let r = &y - &lg.lead * x1;
                let q = nchol.l().solve_lower_triangular(&r).unwrap().norm_squared();
                (-0.5 * (3.0 * (2.0 * PI).ln() + nlogdet + q)).exp()
            })
            .collect();
        let mean = vals.iter().sum::<f64>() / n as f64;
        let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        let se = sd / (n as f64).sqrt();
        let exact = lg.marginal_loglik(&y, theta).unwrap().exp();
        assert!((mean - exact).abs() < 3.0 * se, "mc {mean} ± {se}, exact {exact}");
        let _ = rng.random::<f64>();
    }

    #[test]
    fn joint_block_identities() {
        for seed in 0..10 {
            let lg = random_instance(100 + seed, 3, 2);
            let theta = 0.8;
            let joint = lg.joint_cov(theta);
            // determinant identity: det(joint) = det(theta^2 Sigma) det(Gamma)
            let lhs = log_det_spd(&joint).unwrap();
            let rhs = log_det_spd(&lg.noise_cov(theta)).unwrap() + log_det_spd(&lg.gamma).unwrap();
            assert!((lhs - rhs).abs() < 1e-8 * rhs.abs().max(1.0));
            // conditioning the joint on y reproduces the conditional posterior
            let y = DVector::from_vec(vec![0.5, 1.5, -0.7]);
            let m = 2;
            let jm = lg.joint_mean();
            let syy = joint.view((m, m), (3, 3)).into_owned();
            let sxy = joint.view((0, m), (m, 3)).into_owned();
            let sxx = joint.view((0, 0), (m, m)).into_owned();
            let inv = syy.try_inverse().unwrap();
            let cmean = jm.rows(0, m) + &sxy * &inv * (&y - jm.rows(m, 3));
            let ccov = &sxx - &sxy * &inv * sxy.transpose();
            let (mean, cov) = lg.conditional_posterior(&y, theta).unwrap();
            assert!((cmean - mean).norm() < 1e-8);
            assert!((ccov - cov).norm() < 1e-8);
            // x1 marginal of the joint is the prior
            assert_eq!(sxx, lg.gamma);
        }
    }

    #[test]
    fn rejects_non_positive_theta() {
        let lg = random_instance(1, 2, 1);
        let y = DVector::from_vec(vec![0.0, 0.0]);
        let mut z = lg.clone();
        z.gamma = DMatrix::zeros(1, 1);
        assert!(z.marginal_loglik(&y, 0.0).is_err());
    }
}
