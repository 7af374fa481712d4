//! Natural exponential families and the powering identity
//! `[p^theta]^alpha = exp(A(alpha theta) - alpha A(theta)) p^(alpha theta)`.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{Result, SmcError};

/// A one-parameter NEF `exp(theta * T(y) - A(theta))` on the real line.
pub struct NefDescriptor {
    pub sufficient_statistic: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    /// `A(theta)`; `None` outside the natural-parameter domain.
    pub log_normalizer: Box<dyn Fn(f64) -> Option<f64> + Send + Sync>,
    /// Support of `y`, possibly infinite.
    pub support: (f64, f64),
}

impl NefDescriptor {
    pub fn log_density(&self, y: f64, theta: f64) -> Option<f64> {
        if y < self.support.0 || y > self.support.1 {
            return Some(f64::NEG_INFINITY);
        }
        Some(theta * (self.sufficient_statistic)(y) - (self.log_normalizer)(theta)?)
    }

    /// Zero-mean Gaussian parameterized by its precision `theta = 1/sigma^2`.
    pub fn gaussian_precision() -> Self {
        Self {
            sufficient_statistic: Box::new(|y| -0.5 * y * y),
            log_normalizer: Box::new(|theta| (theta > 0.0).then(|| 0.5 * ((2.0 * PI).ln() - theta.ln()))),
            support: (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    /// Exponential distribution with rate `theta`.
    pub fn exponential() -> Self {
        Self {
            sufficient_statistic: Box::new(|y| -y),
            log_normalizer: Box::new(|theta| (theta > 0.0).then(|| -theta.ln())),
            support: (0.0, f64::INFINITY),
        }
    }

    /// Zero-centred Laplace distribution with inverse scale `theta`.
    pub fn laplace() -> Self {
        Self {
            sufficient_statistic: Box::new(|y: f64| -y.abs()),
            log_normalizer: Box::new(|theta| (theta > 0.0).then(|| (2.0 / theta).ln())),
            support: (f64::NEG_INFINITY, f64::INFINITY),
        }
    }
}

/// The constant `c` with `[p^theta]^alpha = c * p^(alpha theta)`.
pub fn nef_power_constant<F>(log_normalizer: F, theta: f64, alpha: f64) -> Result<f64>
where
    F: Fn(f64) -> Option<f64>,
{
    Ok(log_nef_power_constant(log_normalizer, theta, alpha)?.exp())
}

pub fn log_nef_power_constant<F>(log_normalizer: F, theta: f64, alpha: f64) -> Result<f64>
where
    F: Fn(f64) -> Option<f64>,
{
    if alpha == 0.0 {
        return Err(SmcError::InvalidArgument("alpha must be non-zero".into()));
    }
    let a_theta = log_normalizer(theta)
        .ok_or_else(|| SmcError::Domain(format!("theta = {theta} outside the natural domain")))?;
    let a_scaled = log_normalizer(alpha * theta).ok_or_else(|| {
        SmcError::Domain(format!("alpha * theta = {} outside the natural domain", alpha * theta))
    })?;
    Ok(a_scaled - alpha * a_theta)
}

/// Log of the Gaussian powering constant for an `m`-dimensional Gaussian
/// whose covariance has log-determinant `log_det_cov`:
/// `0.5 * ((1 - alpha) (m ln 2 pi + log_det) - m ln alpha)`.
pub fn log_gaussian_power_constant(m: usize, log_det_cov: f64, alpha: f64) -> f64 {
    let m = m as f64;
    0.5 * ((1.0 - alpha) * (m * (2.0 * PI).ln() + log_det_cov) - m * alpha.ln())
}

/// Power of an `N(mean, cov)` density: returns the constant and the covariance
/// `cov / alpha` of the resulting Gaussian.
pub fn gaussian_power(cov: &DMatrix<f64>, alpha: f64) -> Result<(f64, DMatrix<f64>)> {
    if !(alpha > 0.0) {
        return Err(SmcError::InvalidArgument(format!("alpha must be positive, got {alpha}")));
    }
    if cov.nrows() != cov.ncols() {
        return Err(SmcError::InvalidArgument("covariance must be square".into()));
    }
    let chol = cov
        .clone()
        .cholesky()
        .ok_or_else(|| SmcError::NotPositiveDefinite("covariance".into()))?;
    let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let c = log_gaussian_power_constant(cov.nrows(), log_det, alpha).exp();
    Ok((c, cov / alpha))
}

/// `theta(alpha) = theta_star / sqrt(alpha)`.
pub fn theta_of_alpha(theta_star: f64, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(SmcError::Domain(format!("alpha must be positive, got {alpha}")));
    }
    if !(theta_star > 0.0) {
        return Err(SmcError::Domain(format!("theta_star must be positive, got {theta_star}")));
    }
    Ok(theta_star / alpha.sqrt())
}

/// Inverse map `alpha = (theta_star / theta)^2`.
pub fn alpha_of_theta(theta_star: f64, theta: f64) -> f64 {
    (theta_star / theta).powi(2)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Composite Simpson on [a, b] with n (even) panels.
    fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    fn gaussian_a(theta: f64) -> Option<f64> {
        (NefDescriptor::gaussian_precision().log_normalizer)(theta)
    }

    #[test]
    fn unit_exponent_gives_one() {
        assert!((nef_power_constant(gaussian_a, 2.3, 1.0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gaussian_half_power_matches_quadrature() {
        let quad = simpson(|x| (-0.5 * x * x).exp().powf(0.5) / (2.0 * PI).sqrt().powf(0.5), -40.0, 40.0, 20_000);
        assert!((quad - 2.23903).abs() < 1e-5);
        let c = nef_power_constant(gaussian_a, 1.0, 0.5).unwrap();
        assert!((c - quad).abs() < 1e-9 * quad);
    }

    #[test]
    fn gaussian_square_matches_quadrature() {
        let quad = simpson(|x| ((-0.5 * x * x).exp() / (2.0 * PI).sqrt()).powi(2), -20.0, 20.0, 20_000);
        assert!((quad - 0.28209).abs() < 1e-5);
        let c = nef_power_constant(gaussian_a, 1.0, 2.0).unwrap();
        assert!((c - quad).abs() < 1e-9 * quad);
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(nef_power_constant(gaussian_a, 1.0, -1.0), Err(SmcError::Domain(_))));
        assert!(nef_power_constant(gaussian_a, 1.0, 0.0).is_err());
    }

    #[test]
    fn families_integrate_to_one() {
        for (nef, lo, hi) in [
            (NefDescriptor::gaussian_precision(), -30.0, 30.0),
            (NefDescriptor::exponential(), 0.0, 60.0),
            (NefDescriptor::laplace(), -60.0, 60.0),
        ] {
            for theta in [0.7, 1.0, 3.0] {
                let z = simpson(|y| nef.log_density(y, theta).unwrap().exp(), lo, hi, 200_000);
                assert!((z - 1.0).abs() < 1e-6, "theta {theta}: {z}");
            }
        }
    }

    #[test]
    fn gaussian_power_unit_and_half() {
        let cov = DMatrix::from_element(1, 1, 1.0);
        let (c, v) = gaussian_power(&cov, 1.0).unwrap();
        assert!((c - 1.0).abs() < 1e-15);
        assert_eq!(v[(0, 0)], 1.0);
        let (c, v) = gaussian_power(&cov, 0.5).unwrap();
        assert!((c - 2.23903).abs() < 1e-5);
        assert_eq!(v[(0, 0)], 2.0);
    }

    #[test]
    fn gaussian_power_two_dimensional() {
        // sqrt((2 pi)^1.5 * 16) evaluated directly; a 2-D product Simpson rule
        // on N(x; 0, I)^0.25 gives the same value.
        let expected = ((2.0 * PI).powf(1.5) * 16.0).sqrt();
        let one_d = simpson(|x| ((-0.5 * x * x).exp() / (2.0 * PI).sqrt()).powf(0.25), -60.0, 60.0, 40_000);
        let (c, v) = gaussian_power(&DMatrix::identity(2, 2), 0.25).unwrap();
        assert!((one_d * one_d - expected).abs() < 1e-8 * expected);
        assert!((c - expected).abs() < 1e-10 * expected);
        assert!((c - 15.874).abs() < 1e-3);
        assert_eq!(v, DMatrix::identity(2, 2) * 4.0);
    }

    #[test]
    fn gaussian_power_rejects_non_pd() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(gaussian_power(&cov, 0.5), Err(SmcError::NotPositiveDefinite(_))));
    }

    #[test]
    fn corollary_agrees_with_nef_constant() {
        // N(x; 0, sigma^2) as an NEF in theta = 1/sigma^2.
        for (sigma2, alpha) in [(0.3, 0.2), (1.0, 0.5), (4.0, 1.7), (0.01, 0.9)] {
            let nef = log_nef_power_constant(gaussian_a, 1.0 / sigma2, alpha).unwrap();
            let cor = log_gaussian_power_constant(1, f64::ln(sigma2), alpha);
            assert!((nef - cor).abs() < 1e-10);
        }
    }

    #[test]
    fn theta_map() {
        assert_eq!(theta_of_alpha(0.05, 1.0).unwrap(), 0.05);
        assert!((theta_of_alpha(0.05, 0.25).unwrap() - 0.1).abs() < 1e-15);
        assert!((theta_of_alpha(0.05, 1e-4).unwrap() - 5.0).abs() < 1e-12);
        assert!(theta_of_alpha(0.05, 0.0).is_err());
        assert!(theta_of_alpha(0.05, 0.5).unwrap() > theta_of_alpha(0.05, 0.6).unwrap());
    }
}
