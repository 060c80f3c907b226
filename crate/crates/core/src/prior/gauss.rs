use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::types::VideoShape;

use super::{ContextCache, Retention, VectorField};

/// Exact flow-matching field for the isotropic AR(1) Gaussian chunk law
/// `z^n | z^{n-1} ~ N(m, (1 - rho^2) sigma_p^2 I)` with
/// `m = mu0 + rho (z^{n-1} - mu0)` and `z^1 ~ N(mu0, sigma_p^2 I)`.
///
/// Every chunk has marginal variance `sigma_p^2` given its context mean
/// only through `sigma_c^2 = (1 - rho^2) sigma_p^2` for `n >= 2`; the field uses
/// the conditional variance that matches the chunk being queried.
///
/// With `z_t = (1 - t) z_0 + t z_1` the posterior mean is
/// `m_post = m + c(t) (z_t - (1 - t) m)`, `c(t) = (1 - t) s^2 / ((1 - t)^2 s^2 + t^2)`,
/// and `v = (z_t - m_post) / t`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussArPrior {
    pub rho: f64,
    pub sigma_p: f64,
    pub mu0: f64,
    pub shape: VideoShape,
}

impl GaussArPrior {
    pub fn new(rho: f64, sigma_p: f64, mu0: f64, shape: VideoShape) -> Result<Self> {
        if !(rho.abs() < 1.0) {
            return Err(Error::Parameter(format!(
                "AR coefficient {rho} must satisfy |rho| < 1"
            )));
        }
        if !(sigma_p > 0.0 && sigma_p.is_finite()) {
            return Err(Error::Parameter(format!(
                "marginal std {sigma_p} must be positive"
            )));
        }
        Ok(Self {
            rho,
            sigma_p,
            mu0,
            shape,
        })
    }

    /// Variance of chunk `n` given its context (`n = 1`: marginal).
    pub fn conditional_variance<T: Real>(&self, first_chunk: bool) -> T {
        let s2 = T::lit(self.sigma_p * self.sigma_p);
        if first_chunk {
            s2
        } else {
            (T::one() - T::lit(self.rho * self.rho)) * s2
        }
    }

    /// Shrinkage coefficient `c(t)` of the posterior mean.
    pub fn posterior_coefficient<T: Real>(&self, t: T, first_chunk: bool) -> T {
        let s2: T = self.conditional_variance(first_chunk);
        let a = T::one() - t;
        a * s2 / (a * a * s2 + t * t)
    }

    /// Prior mean of the next chunk given the cache.
    pub fn prior_mean<T: Real>(&self, ctx: &ContextCache<T>, len: usize) -> Vec<T> {
        let mu0 = T::lit(self.mu0);
        match ctx.last() {
            None => vec![mu0; len],
            Some(prev) => {
                let rho = T::lit(self.rho);
                prev.iter().map(|&p| mu0 + rho * (p - mu0)).collect()
            }
        }
    }

    /// Gaussian posterior mean `E[z_0 | z_t, context]`.
    pub fn posterior_mean<T: Real>(&self, z_t: &[T], t: T, ctx: &ContextCache<T>) -> Vec<T> {
        let m = self.prior_mean(ctx, z_t.len());
        let c = self.posterior_coefficient(t, ctx.is_empty());
        let a = T::one() - t;
        z_t.iter()
            .zip(&m)
            .map(|(&z, &mi)| mi + c * (z - a * mi))
            .collect()
    }

    /// `|d v / d z_t|`: the exact Lipschitz constant in the current chunk,
    /// `|1 - c(t)| / t`.
    pub fn lipschitz_state<T: Real>(&self, t: T, first_chunk: bool) -> T {
        (T::one() - self.posterior_coefficient(t, first_chunk)).abs() / t
    }

    /// `|d v / d z^{n-1}|`: the exact Lipschitz constant in the newest
    /// context chunk, `|rho| |1 - (1 - t) c(t)| / t`. Zero for the first chunk.
    pub fn lipschitz_context<T: Real>(&self, t: T, first_chunk: bool) -> T {
        if first_chunk {
            return T::zero();
        }
        let c = self.posterior_coefficient(t, false);
        T::lit(self.rho.abs()) * (T::one() - (T::one() - t) * c).abs() / t
    }
}

impl<T: Real> VectorField<T> for GaussArPrior {
    fn chunk_shape(&self) -> VideoShape {
        self.shape
    }

    fn retention(&self) -> Retention {
        Retention::Last
    }

    fn velocity(&self, z_t: &[T], t: T, ctx: &ContextCache<T>) -> Result<Vec<T>> {
        if t <= T::zero() {
            return Err(Error::SingularTimestep);
        }
        let m_post = self.posterior_mean(z_t, t, ctx);
        Ok(z_t
            .iter()
            .zip(&m_post)
            .map(|(&z, &mp)| (z - mp) / t)
            .collect())
    }
}
