//! Chunk-wise error propagation for guidance-free reverse steps.
//!
//! Two trajectories of the same chunk share every noise draw and differ only
//! in their starting latent and in their finalized predecessors. With
//! `||dv|| <= L_z ||dz|| + L_c delta` at each step,
//!
//! ```text
//! eps_K <= Lambda_K eps_0 + B_K delta
//! lambda_k = (1 - t_{k+1}) (1 + t_k L_{z,k})
//! beta_k   = (1 - t_{k+1}) t_k L_{c,k}
//! Lambda_K = (1 - t_0) prod_k lambda_k
//! B_K      = sum_r (prod_{l > r} lambda_l) beta_r
//! ```
//!
//! `delta` is the mean Euclidean mismatch over the predecessors, so the
//! context constant is taken with respect to that mean.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::noise::NoiseStream;
use crate::prior::{ContextCache, GaussArPrior, VectorField};
use crate::sampler::{initialize_chunk, reverse_step};
use crate::scalar::{dist, norm, Real};
use crate::types::{Chunk, Schedule, VideoShape};

/// Absolute slack allowed on the final inequality.
pub const BOUND_SLACK: f64 = 1e-9;

/// Per-step Lipschitz constants for `t_0 .. t_{K-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzProfile<T: Real = f64> {
    pub l_z: Vec<T>,
    pub l_c: Vec<T>,
}

/// Exact constants of the AR(1) Gaussian field for chunk `chunk` (1-based).
///
/// The field depends only on the newest predecessor, with coefficient
/// `lipschitz_context(t)`. Measured against the mean mismatch over all
/// `chunk - 1` predecessors, that coefficient is multiplied by `chunk - 1`.
pub fn lipschitz_exact<T: Real>(
    prior: &GaussArPrior,
    schedule: &Schedule<T>,
    chunk: usize,
) -> Result<LipschitzProfile<T>> {
    if chunk == 0 {
        return Err(Error::Parameter("chunk indices are 1-based".into()));
    }
    let first = chunk == 1;
    let preds = T::from_usize_exact(chunk - 1);
    let mut out = LipschitzProfile {
        l_z: Vec::new(),
        l_c: Vec::new(),
    };
    for (_, t, _) in schedule.transitions() {
        out.l_z.push(prior.lipschitz_state(t, first));
        out.l_c.push(preds * prior.lipschitz_context(t, first));
    }
    Ok(out)
}

/// Lower-bound estimate of the constants by random probing: the largest
/// observed `||dv|| / ||dz||` (state) and `||dv|| / mean_m ||dp_m||`
/// (context), where each context probe perturbs one randomly chosen
/// predecessor.
pub fn lipschitz_empirical<T: Real, F: VectorField<T> + ?Sized>(
    field: &F,
    schedule: &Schedule<T>,
    chunk: usize,
    trials: usize,
    seed: u64,
) -> Result<LipschitzProfile<T>> {
    if trials == 0 || chunk == 0 {
        return Err(Error::Parameter(
            "need trials >= 1 and a 1-based chunk".into(),
        ));
    }
    let shape = field.chunk_shape();
    let d = shape.len();
    let h = T::lit(1e-3);
    let preds = chunk - 1;
    let mut rng = NoiseStream::new("lipschitz", seed);
    let mut out = LipschitzProfile {
        l_z: Vec::new(),
        l_c: Vec::new(),
    };
    for (_, t, _) in schedule.transitions() {
        let (mut best_z, mut best_c) = (T::zero(), T::zero());
        for _ in 0..trials {
            let z: Vec<T> = rng.gaussian(d);
            let ctx_chunks: Vec<Vec<T>> = (0..preds).map(|_| rng.gaussian(d)).collect();
            let ctx = ContextCache::from_chunks(field.retention(), shape, &ctx_chunks)?;
            let v0 = field.velocity(&z, t, &ctx)?;

            let dir: Vec<T> = rng.gaussian(d);
            let scale = h / norm(&dir);
            let zp: Vec<T> = z.iter().zip(&dir).map(|(&a, &u)| a + scale * u).collect();
            let v1 = field.velocity(&zp, t, &ctx)?;
            let r = dist(&v0, &v1) / dist(&z, &zp);
            best_z = best_z.max(r);

            if preds > 0 {
                let m = rng.index(preds);
                let dir: Vec<T> = rng.gaussian(d);
                let scale = h / norm(&dir);
                let mut moved = ctx_chunks.clone();
                for (a, &u) in moved[m].iter_mut().zip(&dir) {
                    *a += scale * u;
                }
                let mean_mismatch = dist(&ctx_chunks[m], &moved[m]) / T::from_usize_exact(preds);
                let ctx2 = ContextCache::from_chunks(field.retention(), shape, &moved)?;
                let v2 = field.velocity(&z, t, &ctx2)?;
                best_c = best_c.max(dist(&v0, &v2) / mean_mismatch);
            }
        }
        out.l_z.push(best_z);
        out.l_c.push(best_c);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundCoefficients<T: Real = f64> {
    pub lambda: Vec<T>,
    pub beta: Vec<T>,
    pub big_lambda: T,
    pub big_b: T,
}

pub fn bound_coefficients<T: Real>(
    schedule: &Schedule<T>,
    lip: &LipschitzProfile<T>,
) -> Result<BoundCoefficients<T>> {
    let k = schedule.steps();
    if lip.l_z.len() != k || lip.l_c.len() != k {
        return Err(Error::Shape(format!(
            "{} / {} Lipschitz constants for {k} steps",
            lip.l_z.len(),
            lip.l_c.len()
        )));
    }
    let mut lambda = Vec::with_capacity(k);
    let mut beta = Vec::with_capacity(k);
    for (i, t, t_next) in schedule.transitions() {
        lambda.push((T::one() - t_next) * (T::one() + t * lip.l_z[i]));
        beta.push((T::one() - t_next) * t * lip.l_c[i]);
    }
    let big_lambda = (T::one() - schedule.t0()) * lambda.iter().fold(T::one(), |a, &l| a * l);
    // Horner form of sum_r (prod_{l>r} lambda_l) beta_r
    let big_b = lambda
        .iter()
        .zip(&beta)
        .fold(T::zero(), |acc, (&l, &b)| acc * l + b);
    Ok(BoundCoefficients {
        lambda,
        beta,
        big_lambda,
        big_b,
    })
}

/// All quantities of one coupled run.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport<T: Real = f64> {
    pub chunk: usize,
    pub grid: Vec<T>,
    /// `||z_init - z_init'||`.
    pub eps0: T,
    /// Mismatch at every grid point `t_0, ..., t_K`.
    pub eps: Vec<T>,
    /// Mean predecessor mismatch.
    pub delta: T,
    pub lipschitz: LipschitzProfile<T>,
    pub coefficients: BoundCoefficients<T>,
}

impl<T: Real> BoundReport<T> {
    pub fn eps_final(&self) -> T {
        *self.eps.last().expect("grid has K + 1 points")
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        #[derive(Serialize)]
        struct Row {
            row: &'static str,
            k: usize,
            t_k: f64,
            t_next: f64,
            eps_k: f64,
            l_z: f64,
            l_c: f64,
            lambda: f64,
            beta: f64,
            eps0: f64,
            delta: f64,
            big_lambda: f64,
            big_b: f64,
            slack: f64,
        }
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        let c = &self.coefficients;
        let nan = f64::NAN;
        for k in 0..self.lipschitz.l_z.len() {
            w.serialize(Row {
                row: "step",
                k,
                t_k: self.grid[k].as_f64(),
                t_next: self.grid[k + 1].as_f64(),
                eps_k: self.eps[k].as_f64(),
                l_z: self.lipschitz.l_z[k].as_f64(),
                l_c: self.lipschitz.l_c[k].as_f64(),
                lambda: c.lambda[k].as_f64(),
                beta: c.beta[k].as_f64(),
                eps0: nan,
                delta: nan,
                big_lambda: nan,
                big_b: nan,
                slack: nan,
            })?;
        }
        let k = self.lipschitz.l_z.len();
        w.serialize(Row {
            row: "summary",
            k,
            t_k: self.grid[k].as_f64(),
            t_next: nan,
            eps_k: self.eps_final().as_f64(),
            l_z: nan,
            l_c: nan,
            lambda: nan,
            beta: nan,
            eps0: self.eps0.as_f64(),
            delta: self.delta.as_f64(),
            big_lambda: c.big_lambda.as_f64(),
            big_b: c.big_b.as_f64(),
            slack: verify_bound(self).slack,
        })?;
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Inputs of one coupled comparison.
#[derive(Debug, Clone)]
pub struct CoupledInputs<'a, T: Real> {
    pub chunk: usize,
    pub shape: VideoShape,
    pub z_init: &'a [T],
    pub z_target: &'a [T],
    /// Finalized predecessors `1 .. chunk` of each trajectory.
    pub ctx: &'a [Vec<T>],
    pub ctx_target: &'a [Vec<T>],
    pub seed: u64,
}

/// Runs both trajectories of chunk `inputs.chunk` with shared `init` and
/// `renoise` streams and no guidance.
pub fn coupled_run<T: Real, F: VectorField<T> + ?Sized>(
    prior: &F,
    schedule: &Schedule<T>,
    lip: LipschitzProfile<T>,
    inputs: &CoupledInputs<'_, T>,
) -> Result<BoundReport<T>> {
    let n = inputs.chunk;
    if n == 0 || inputs.ctx.len() != n - 1 || inputs.ctx_target.len() != n - 1 {
        return Err(Error::Shape(format!(
            "chunk {n} needs {} predecessors per trajectory",
            n.saturating_sub(1)
        )));
    }
    let delta = if n == 1 {
        T::zero()
    } else {
        inputs
            .ctx
            .iter()
            .zip(inputs.ctx_target)
            .map(|(a, b)| dist(a, b))
            .sum::<T>()
            / T::from_usize_exact(n - 1)
    };
    let coefficients = bound_coefficients(schedule, &lip)?;
    let retention = prior.retention();
    let ctx_a = ContextCache::from_chunks(retention, inputs.shape, inputs.ctx)?;
    let ctx_b = ContextCache::from_chunks(retention, inputs.shape, inputs.ctx_target)?;
    let t0 = schedule.t0();
    let mut a = initialize_chunk(
        &Chunk::new(n, T::zero(), inputs.shape, inputs.z_init.to_vec())?,
        t0,
        &mut NoiseStream::init(n, inputs.seed),
    );
    let mut b = initialize_chunk(
        &Chunk::new(n, T::zero(), inputs.shape, inputs.z_target.to_vec())?,
        t0,
        &mut NoiseStream::init(n, inputs.seed),
    );
    let mut eps = vec![dist(&a.data, &b.data)];
    for (k, _, t_next) in schedule.transitions() {
        a = reverse_step(
            prior,
            &a,
            &ctx_a,
            t_next,
            None,
            &mut NoiseStream::renoise(n, k, inputs.seed),
        )?;
        b = reverse_step(
            prior,
            &b,
            &ctx_b,
            t_next,
            None,
            &mut NoiseStream::renoise(n, k, inputs.seed),
        )?;
        eps.push(dist(&a.data, &b.data));
    }
    Ok(BoundReport {
        chunk: n,
        grid: schedule.grid().to_vec(),
        eps0: dist(inputs.z_init, inputs.z_target),
        eps,
        delta,
        lipschitz: lip,
        coefficients,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Verdict {
    pub satisfied: bool,
    /// `Lambda_K eps_0 + B_K delta + 1e-9 - eps_K`.
    pub slack: f64,
}

pub fn verify_bound<T: Real>(report: &BoundReport<T>) -> Verdict {
    let c = &report.coefficients;
    let rhs =
        c.big_lambda.as_f64() * report.eps0.as_f64() + c.big_b.as_f64() * report.delta.as_f64();
    let slack = rhs + BOUND_SLACK - report.eps_final().as_f64();
    Verdict {
        satisfied: slack >= 0.0,
        slack,
    }
}

/// Configuration of the seeded sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub rho: f64,
    pub sigma_p: f64,
    pub mu0: f64,
    pub shape: VideoShape,
    /// Largest chunk index drawn; each run picks `n` in `1..=max_chunk`.
    pub max_chunk: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            rho: 0.9,
            sigma_p: 1.0,
            mu0: 0.0,
            shape: VideoShape::new(3, 4, 4, 1),
            max_chunk: 4,
        }
    }
}

/// Inputs of one seeded sweep run: chunk `n` drawn in `1..=max_chunk`, a
/// chain of chunks from the AR(1) law as the target, and random initial and
/// context perturbations of random size.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCase {
    pub chunk: usize,
    pub z_init: Vec<f64>,
    pub z_target: Vec<f64>,
    pub ctx: Vec<Vec<f64>>,
    pub ctx_target: Vec<Vec<f64>>,
}

pub fn sweep_case(cfg: &SweepConfig, seed: u64) -> SweepCase {
    let mut rng = NoiseStream::new("bound:sweep", seed);
    let d = cfg.shape.len();
    let n = 1 + rng.index(cfg.max_chunk.max(1));
    let sc = ((1.0 - cfg.rho * cfg.rho) * cfg.sigma_p * cfg.sigma_p).sqrt();
    let mut chain: Vec<Vec<f64>> = Vec::with_capacity(n);
    for _ in 0..n {
        let e: Vec<f64> = rng.gaussian(d);
        let z = match chain.last() {
            None => e.iter().map(|x| cfg.mu0 + cfg.sigma_p * x).collect(),
            Some(p) => p
                .iter()
                .zip(&e)
                .map(|(pv, x)| cfg.mu0 + cfg.rho * (pv - cfg.mu0) + sc * x)
                .collect(),
        };
        chain.push(z);
    }
    let z_target = chain.pop().expect("n >= 1");
    let eps_scale = rng.uniform_range(0.0, 2.0);
    let delta_scale = rng.uniform_range(0.0, 2.0);
    let z_init = z_target
        .iter()
        .zip(rng.gaussian::<f64>(d))
        .map(|(t, e)| t + eps_scale * e)
        .collect();
    let ctx = chain
        .iter()
        .map(|c| {
            c.iter()
                .zip(rng.gaussian::<f64>(d))
                .map(|(v, e)| v + delta_scale * e)
                .collect()
        })
        .collect();
    SweepCase {
        chunk: n,
        z_init,
        z_target,
        ctx,
        ctx_target: chain,
    }
}

/// Runs [`sweep_case`] under `field` with the given constants.
pub fn sweep_run_with<F: VectorField<f64> + ?Sized>(
    field: &F,
    cfg: &SweepConfig,
    schedule: &Schedule<f64>,
    case: &SweepCase,
    lip: LipschitzProfile<f64>,
    seed: u64,
) -> Result<BoundReport<f64>> {
    coupled_run(
        field,
        schedule,
        lip,
        &CoupledInputs {
            chunk: case.chunk,
            shape: cfg.shape,
            z_init: &case.z_init,
            z_target: &case.z_target,
            ctx: &case.ctx,
            ctx_target: &case.ctx_target,
            seed,
        },
    )
}

/// One seeded run of the AR(1) Gaussian field with its exact constants.
pub fn sweep_run(
    cfg: &SweepConfig,
    schedule: &Schedule<f64>,
    seed: u64,
) -> Result<BoundReport<f64>> {
    let prior = GaussArPrior::new(cfg.rho, cfg.sigma_p, cfg.mu0, cfg.shape)?;
    let case = sweep_case(cfg, seed);
    let lip = lipschitz_exact(&prior, schedule, case.chunk)?;
    sweep_run_with(&prior, cfg, schedule, &case, lip, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prior::{ShiftedField, ZeroField};

    fn shape() -> VideoShape {
        VideoShape::new(1, 3, 3, 1)
    }

    #[test]
    fn sweep_holds() {
        let s = Schedule::linear(0.1, 2).unwrap();
        for seed in 0..100 {
            let r = sweep_run(&SweepConfig::default(), &s, seed).unwrap();
            let v = verify_bound(&r);
            assert!(v.satisfied, "seed {seed}: slack {}", v.slack);
            assert!((r.eps[0] - 0.9 * r.eps0).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_inputs_give_zero_error() {
        let prior = GaussArPrior::new(0.9, 1.0, 0.0, shape()).unwrap();
        let s = Schedule::linear(0.3, 3).unwrap();
        let z: Vec<f64> = NoiseStream::new("z", 0).gaussian(9);
        let p: Vec<f64> = NoiseStream::new("p", 0).gaussian(9);
        let r = coupled_run(
            &prior,
            &s,
            lipschitz_exact(&prior, &s, 2).unwrap(),
            &CoupledInputs {
                chunk: 2,
                shape: shape(),
                z_init: &z,
                z_target: &z,
                ctx: std::slice::from_ref(&p),
                ctx_target: std::slice::from_ref(&p),
                seed: 4,
            },
        )
        .unwrap();
        assert!(r.eps.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn coefficients_match_recomputation() {
        let s = Schedule::linear(0.2, 4).unwrap();
        let lip = LipschitzProfile {
            l_z: vec![0.5, 1.5, 2.0, 3.0],
            l_c: vec![0.1, 0.2, 0.3, 0.4],
        };
        let c = bound_coefficients(&s, &lip).unwrap();
        let g = s.grid();
        let lam: Vec<f64> = (0..4)
            .map(|k| (1.0 - g[k + 1]) * (1.0 + g[k] * lip.l_z[k]))
            .collect();
        let bet: Vec<f64> = (0..4)
            .map(|k| (1.0 - g[k + 1]) * g[k] * lip.l_c[k])
            .collect();
        let big_l = 0.8 * lam.iter().product::<f64>();
        let big_b: f64 = (0..4)
            .map(|r| lam[r + 1..].iter().product::<f64>() * bet[r])
            .sum();
        for k in 0..4 {
            assert!((c.lambda[k] - lam[k]).abs() < 1e-12);
            assert!((c.beta[k] - bet[k]).abs() < 1e-12);
        }
        assert!((c.big_lambda - big_l).abs() < 1e-12);
        assert!((c.big_b - big_b).abs() < 1e-12);
    }

    #[test]
    fn no_context_term_reduces_to_state_bound() {
        let prior = GaussArPrior::new(0.0, 1.0, 0.0, shape()).unwrap();
        let s = Schedule::linear(0.1, 2).unwrap();
        let lip = lipschitz_exact(&prior, &s, 3).unwrap();
        assert!(lip.l_c.iter().all(|&l| l == 0.0));
        let z: Vec<f64> = NoiseStream::new("z", 1).gaussian(9);
        let z2: Vec<f64> = z.iter().map(|v| v + 0.3).collect();
        let ctx = vec![vec![0.1; 9], vec![0.2; 9]];
        let r = coupled_run(
            &prior,
            &s,
            lip,
            &CoupledInputs {
                chunk: 3,
                shape: shape(),
                z_init: &z,
                z_target: &z2,
                ctx: &ctx,
                ctx_target: &ctx,
                seed: 0,
            },
        )
        .unwrap();
        assert_eq!(r.delta, 0.0);
        assert!(r.eps_final() <= r.coefficients.big_lambda * r.eps0 + BOUND_SLACK);
    }

    #[test]
    fn aligned_perturbations_make_one_step_tight() {
        // sigma_c^2 = 0.19 * 4 = 0.76 > t/(1-t) at t = 0.4, so c(t) > 1
        let prior = GaussArPrior::new(0.9, 2.0, 0.0, shape()).unwrap();
        let s = Schedule::linear(0.4, 1).unwrap();
        let t = 0.4;
        assert!(prior.posterior_coefficient(t, false) > 1.0);
        let lip = lipschitz_exact(&prior, &s, 2).unwrap();
        let u: Vec<f64> = NoiseStream::new("u", 0).gaussian(9);
        let z: Vec<f64> = NoiseStream::new("z", 0).gaussian(9);
        let p: Vec<f64> = NoiseStream::new("p", 0).gaussian(9);
        let z2: Vec<f64> = z.iter().zip(&u).map(|(a, b)| a + 0.5 * b).collect();
        let p2: Vec<f64> = p.iter().zip(&u).map(|(a, b)| a + 0.25 * b).collect();
        // one step from t0 straight to 0; feed the t0 states as the "initial" chunks
        let chunk = |d: &[f64]| Chunk::new(2, t, shape(), d.to_vec()).unwrap();
        let ca = ContextCache::from_chunks(
            crate::prior::Retention::Last,
            shape(),
            std::slice::from_ref(&p),
        )
        .unwrap();
        let cb = ContextCache::from_chunks(
            crate::prior::Retention::Last,
            shape(),
            std::slice::from_ref(&p2),
        )
        .unwrap();
        let a = reverse_step(
            &prior,
            &chunk(&z),
            &ca,
            0.0,
            None,
            &mut NoiseStream::renoise(2, 0, 0),
        )
        .unwrap();
        let b = reverse_step(
            &prior,
            &chunk(&z2),
            &cb,
            0.0,
            None,
            &mut NoiseStream::renoise(2, 0, 0),
        )
        .unwrap();
        let eps_next = dist(&a.data, &b.data);
        let c = bound_coefficients(&s, &lip).unwrap();
        let predicted = c.lambda[0] * dist(&z, &z2) + c.beta[0] * dist(&p, &p2);
        assert!(
            (eps_next - predicted).abs() < 1e-8,
            "{eps_next} vs {predicted}"
        );
    }

    #[test]
    fn shared_noise_cancels() {
        let prior = GaussArPrior::new(0.7, 0.8, 0.1, shape()).unwrap();
        let z: Vec<f64> = NoiseStream::new("z", 3).gaussian(9);
        let z2: Vec<f64> = NoiseStream::new("z2", 3).gaussian(9);
        let ctx = ContextCache::empty(crate::prior::Retention::Last);
        let ca = Chunk::new(1, 0.2, shape(), z.clone()).unwrap();
        let cb = Chunk::new(1, 0.2, shape(), z2.clone()).unwrap();
        let a = reverse_step(
            &prior,
            &ca,
            &ctx,
            0.1,
            None,
            &mut NoiseStream::renoise(1, 0, 9),
        )
        .unwrap();
        let b = reverse_step(
            &prior,
            &cb,
            &ctx,
            0.1,
            None,
            &mut NoiseStream::renoise(1, 0, 9),
        )
        .unwrap();
        let ha = prior.denoise(&z, 0.2, &ctx).unwrap();
        let hb = prior.denoise(&z2, 0.2, &ctx).unwrap();
        let direct = dist(&a.data, &b.data);
        let cancelled: f64 = ha
            .iter()
            .zip(&hb)
            .map(|(x, y)| (0.9 * (x - y)).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!((direct - cancelled).abs() < 1e-12);
    }

    #[test]
    fn b_grows_with_t0() {
        let lc = 0.7;
        let lz = 1.3;
        let mut last = 0.0;
        for t0 in [0.1, 0.2, 0.5] {
            let s = Schedule::linear(t0, 2).unwrap();
            let lip = LipschitzProfile {
                l_z: vec![lz; 2],
                l_c: vec![lc; 2],
            };
            let b = bound_coefficients(&s, &lip).unwrap().big_b;
            assert!(b > last);
            last = b;
        }
    }

    #[test]
    fn exact_constants_limits() {
        let s = Schedule::<f64>::linear(0.5, 1).unwrap();
        let p = GaussArPrior::new(0.5, 1e6, 0.0, shape()).unwrap();
        let lip = lipschitz_exact(&p, &s, 1).unwrap();
        assert!((lip.l_z[0] - 2.0).abs() < 1e-3);
        let p0 = GaussArPrior::new(0.0, 1.0, 0.0, shape()).unwrap();
        let lip = lipschitz_exact(&p0, &Schedule::linear(0.1, 2).unwrap(), 3).unwrap();
        assert!(lip.l_c.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn empirical_constants() {
        let s = Schedule::linear(0.3, 2).unwrap();
        let p = GaussArPrior::new(0.8, 0.9, 0.0, shape()).unwrap();
        let exact = lipschitz_exact(&p, &s, 3).unwrap();
        let emp = lipschitz_empirical(&p, &s, 3, 1000, 1).unwrap();
        for k in 0..2 {
            assert!(emp.l_z[k] <= exact.l_z[k] + 1e-9);
            assert!(emp.l_z[k] >= 0.99 * exact.l_z[k]);
            assert!(emp.l_c[k] <= exact.l_c[k] + 1e-9);
            assert!(emp.l_c[k] >= 0.99 * exact.l_c[k]);
        }
        let zero = ZeroField { shape: shape() };
        let e = lipschitz_empirical::<f64, _>(&zero, &s, 2, 10, 0).unwrap();
        assert!(e.l_z.iter().chain(&e.l_c).all(|&v| v == 0.0));
        let shifted = ShiftedField {
            inner: zero,
            shift: 0.4,
        };
        let e = lipschitz_empirical::<f64, _>(&shifted, &s, 2, 10, 0).unwrap();
        assert!(e.l_z.iter().chain(&e.l_c).all(|&v| v == 0.0));
    }

    #[test]
    fn report_csv() {
        let dir = tempfile::tempdir().unwrap();
        let s = Schedule::linear(0.1, 2).unwrap();
        let r = sweep_run(&SweepConfig::default(), &s, 3).unwrap();
        let path = dir.path().join("bound.csv");
        r.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.lines().last().unwrap().starts_with("summary"));
    }
}
