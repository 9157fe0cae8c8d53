use crate::error::{Error, Result};
use crate::feature::FeatureMap;

/// Noise levels in sampling order: strictly decreasing, terminal 0 appended.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaSchedule {
    sigmas: Vec<f64>,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub rho: f64,
}

impl SigmaSchedule {
    /// All levels including the terminal 0; length is `n_steps + 1`.
    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn n_steps(&self) -> usize {
        self.sigmas.len() - 1
    }

    /// `(sigma_t, sigma_next)` pairs in sampling order.
    pub fn steps(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.sigmas.windows(2).map(|w| (w[0], w[1]))
    }
}

/// Power-law interpolation between `sigma_max` and `sigma_min` in
/// `sigma^(1/rho)` space.
pub fn karras_sigmas(n_steps: usize, sigma_min: f64, sigma_max: f64, rho: f64) -> Result<SigmaSchedule> {
    if n_steps < 2 {
        return Err(Error::Config(format!("need at least 2 steps, got {n_steps}")));
    }
    if !(sigma_min > 0.0 && sigma_min < sigma_max && sigma_max.is_finite()) {
        return Err(Error::Config(format!(
            "need 0 < sigma_min < sigma_max, got {sigma_min} and {sigma_max}"
        )));
    }
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::Config(format!("rho must be positive, got {rho}")));
    }
    let inv_rho = 1.0 / rho;
    let max_r = sigma_max.powf(inv_rho);
    let min_r = sigma_min.powf(inv_rho);
    let last = (n_steps - 1) as f64;
    let mut sigmas: Vec<f64> = (0..n_steps)
        .map(|i| (max_r + i as f64 / last * (min_r - max_r)).powf(rho))
        .collect();
    // pin endpoints against powf round-off
    sigmas[0] = sigma_max;
    sigmas[n_steps - 1] = sigma_min;
    sigmas.push(0.0);
    if sigmas.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Numeric("sigma schedule is not strictly decreasing".into()));
    }
    Ok(SigmaSchedule {
        sigmas,
        sigma_min,
        sigma_max,
        rho,
    })
}

/// First-order Euler update of the probability-flow ODE for an
/// x0-predicting denoiser.
pub fn euler_step(
    latent: &FeatureMap,
    denoised: &FeatureMap,
    sigma: f64,
    sigma_next: f64,
) -> Result<FeatureMap> {
    if sigma == 0.0 {
        return Err(Error::Numeric("euler step from sigma 0".into()));
    }
    if !(sigma_next < sigma) {
        return Err(Error::Config(format!(
            "euler step must decrease sigma: {sigma} -> {sigma_next}"
        )));
    }
    latent.check_same_shape(denoised, "euler step")?;
    if sigma_next == 0.0 {
        return Ok(denoised.clone());
    }
    let dt = sigma_next - sigma;
    let mut out = latent.clone();
    for (z, &d) in out.data_mut().iter_mut().zip(denoised.data()) {
        *z += dt * (*z - d) / sigma;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_steps_are_the_endpoints() {
        let s = karras_sigmas(2, 0.1, 10.0, 7.0).unwrap();
        assert_eq!(s.sigmas(), &[10.0, 0.1, 0.0]);
    }

    #[test]
    fn rho_one_is_arithmetic() {
        let s = karras_sigmas(5, 1.0, 5.0, 1.0).unwrap();
        for (got, want) in s.sigmas().iter().zip([5.0, 4.0, 3.0, 2.0, 1.0, 0.0]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_parameters() {
        assert!(karras_sigmas(1, 0.1, 1.0, 7.0).is_err());
        assert!(karras_sigmas(4, 0.0, 1.0, 7.0).is_err());
        assert!(karras_sigmas(4, 2.0, 1.0, 7.0).is_err());
        assert!(karras_sigmas(4, 0.1, 1.0, 0.0).is_err());
    }

    #[test]
    fn euler_hand_values() {
        let z = FeatureMap::filled(1, 1, 1, 2.0);
        let d = FeatureMap::filled(1, 1, 1, 1.0);
        let next = euler_step(&z, &d, 1.0, 0.5).unwrap();
        assert_eq!(next.data(), &[1.5]);
        assert_eq!(euler_step(&z, &d, 1.0, 0.0).unwrap(), d);
        assert_eq!(euler_step(&z, &z, 3.0, 1.7).unwrap(), z);
        assert!(euler_step(&z, &d, 0.0, -1.0).is_err());
        assert!(euler_step(&z, &d, 1.0, 1.0).is_err());
    }
}
