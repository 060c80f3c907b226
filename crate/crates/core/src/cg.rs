//! Conjugate gradient for symmetric positive (semi-)definite systems, and the
//! two least-squares problems built on it: pre-restoration on the normal
//! equations and the proximal measurement-consistency update.

use crate::error::{Error, Result};
use crate::operators::{
    gram_plus_identity, normal_apply, Degradation, LinearOperator, OperatorKind,
};
use crate::resample::bilinear_upsample;
use crate::scalar::{axpy, dot, norm, Real};
use crate::types::{Measurement, Video};

/// Default relative residual tolerance. The iteration budget is the knob that
/// actually shapes behaviour.
pub const DEFAULT_TOL: f64 = 1e-10;

/// CG updates per guidance call.
pub const DEFAULT_GUIDANCE_ITERS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgConfig {
    pub max_iters: usize,
    pub rel_residual_tol: f64,
    pub record_residuals: bool,
}

impl CgConfig {
    pub fn new(max_iters: usize) -> Self {
        Self {
            max_iters,
            rel_residual_tol: DEFAULT_TOL,
            record_residuals: false,
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.rel_residual_tol = tol;
        self
    }

    pub fn recording(mut self) -> Self {
        self.record_residuals = true;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::Parameter("CG needs max_iters >= 1".into()));
        }
        if !(self.rel_residual_tol >= 0.0) {
            return Err(Error::Parameter(format!(
                "CG tolerance {} must be non-negative",
                self.rel_residual_tol
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgResult<T: Real> {
    pub solution: Vec<T>,
    pub iterations: usize,
    /// `||b - A x|| / ||b||`, or the absolute residual when `b = 0`.
    pub final_residual: T,
    pub residual_history: Vec<T>,
}

/// Runs CG from `x0` until `max_iters` or `||b - Ax|| <= tol ||b||`.
///
/// A zero curvature `p^T A p` (semi-definite null direction) ends the
/// iteration early with the current iterate.
pub fn cg_solve<T, F>(apply_a: F, b: &[T], x0: &[T], cfg: &CgConfig) -> Result<CgResult<T>>
where
    T: Real,
    F: Fn(&[T]) -> Vec<T>,
{
    cfg.validate()?;
    if b.len() != x0.len() {
        return Err(Error::Shape(format!(
            "rhs has {} entries, start point {}",
            b.len(),
            x0.len()
        )));
    }
    let mut x = x0.to_vec();
    let ax = apply_a(&x);
    if ax.len() != b.len() {
        return Err(Error::Shape(format!(
            "operator returned {} entries for a system of size {}",
            ax.len(),
            b.len()
        )));
    }
    let mut r: Vec<T> = b.iter().zip(&ax).map(|(&bi, &ai)| bi - ai).collect();
    let b_norm = norm(b);
    let scale = if b_norm > T::zero() { b_norm } else { T::one() };
    let threshold = T::lit(cfg.rel_residual_tol) * b_norm;
    let mut rr = dot(&r, &r);
    check_finite(rr, 0)?;
    let mut p = r.clone();
    let mut history = Vec::new();
    if cfg.record_residuals {
        history.push(rr.sqrt() / scale);
    }

    let mut iterations = 0;
    while iterations < cfg.max_iters && rr.sqrt() > threshold {
        let ap = apply_a(&p);
        let curvature = dot(&p, &ap);
        check_finite(curvature, iterations)?;
        if curvature <= T::zero() {
            break;
        }
        let alpha = rr / curvature;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        let rr_next = dot(&r, &r);
        check_finite(rr_next, iterations + 1)?;
        let beta = rr_next / rr;
        for (pi, &ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        rr = rr_next;
        iterations += 1;
        if cfg.record_residuals {
            history.push(rr.sqrt() / scale);
        }
    }

    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence("non-finite iterate".into()));
    }
    Ok(CgResult {
        solution: x,
        iterations,
        final_residual: rr.sqrt() / scale,
        residual_history: history,
    })
}

fn check_finite<T: Real>(v: T, iteration: usize) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Divergence(format!(
            "non-finite inner product at iteration {iteration}"
        )))
    }
}

/// Fills every masked pixel with the value of the nearest kept pixel of the
/// same frame (Euclidean pixel distance, ties to the earlier row-major index).
/// `mask` holds one 0/1 entry per (frame, row, col). Frames without any kept
/// pixel are left unchanged.
pub fn nearest_neighbor_infill<T: Real>(y: &Video<T>, mask: &[T]) -> Video<T> {
    let s = y.shape();
    let (h, w) = (s.height as isize, s.width as isize);
    let mut out = y.clone();
    for t in 0..s.frames {
        let m = &mask[t * s.height * s.width..(t + 1) * s.height * s.width];
        if !m.iter().any(|&v| v != T::zero()) {
            continue;
        }
        let kept = |r: isize, c: isize| m[(r * w + c) as usize] != T::zero();
        for r in 0..h {
            for c in 0..w {
                if kept(r, c) {
                    continue;
                }
                // (squared distance, row-major index)
                let mut best: Option<(isize, isize)> = None;
                let mut d = 1isize;
                loop {
                    if let Some((bd, _)) = best {
                        if d * d > bd {
                            break;
                        }
                    }
                    if d > h.max(w) {
                        break;
                    }
                    for rr in (r - d).max(0)..=(r + d).min(h - 1) {
                        for cc in (c - d).max(0)..=(c + d).min(w - 1) {
                            if (rr - r).abs() != d && (cc - c).abs() != d {
                                continue;
                            }
                            if !kept(rr, cc) {
                                continue;
                            }
                            let cand = ((rr - r).pow(2) + (cc - c).pow(2), rr * w + cc);
                            if best.is_none_or(|b| cand < b) {
                                best = Some(cand);
                            }
                        }
                    }
                    d += 1;
                }
                if let Some((_, idx)) = best {
                    let (sr, sc) = ((idx / w) as usize, (idx % w) as usize);
                    for ch in 0..s.channels {
                        let v = y.at(t, sr, sc, ch);
                        out.data_mut()[s.index(t, r as usize, c as usize, ch)] = v;
                    }
                }
            }
        }
    }
    out
}

/// CG starting point for pre-restoration: bilinear lift for spatial
/// reductions, nearest-neighbour infill for inpainting, the measurement
/// itself otherwise.
pub fn prerestore_start<T: Real>(op: &Degradation<T>, y: &Measurement<T>) -> Result<Video<T>> {
    y.payload.ensure_shape(op.output_shape(), "measurement")?;
    Ok(match op.kind() {
        OperatorKind::SuperResolution { factor }
        | OperatorKind::SpatioTemporalAverage { factor, .. } => {
            bilinear_upsample(&y.payload, *factor)
        }
        OperatorKind::Inpaint { mask } => nearest_neighbor_infill(&y.payload, mask),
        OperatorKind::Identity
        | OperatorKind::GaussianBlur { .. }
        | OperatorKind::TemporalAverage { .. } => y.payload.clone(),
    })
}

/// Early-stopped CG on `A^T A x = A^T y` from [`prerestore_start`].
pub fn solve_prerestore<T: Real>(
    op: &Degradation<T>,
    y: &Measurement<T>,
    task_iters: usize,
) -> Result<Video<T>> {
    let start = prerestore_start(op, y)?;
    if task_iters == 0 {
        return Ok(start);
    }
    let rhs = op.adjoint(&y.payload)?;
    let result = cg_solve(
        |x| normal_apply(op, x).into_data(),
        rhs.data(),
        start.data(),
        &CgConfig::new(task_iters),
    )?;
    Ok(Video::from_raw(start.shape(), result.solution))
}

/// `gamma/2 ||y - A x||^2 + 1/2 ||x - x_hat||^2`.
pub fn proximal_objective<T: Real, O: LinearOperator<T> + ?Sized>(
    op: &O,
    y: &Video<T>,
    x: &Video<T>,
    x_hat: &Video<T>,
    gamma: T,
) -> Result<T> {
    let ax = op.apply(x)?;
    let fit: T = ax
        .data()
        .iter()
        .zip(y.data())
        .map(|(&a, &b)| (b - a) * (b - a))
        .sum();
    let prox: T = x
        .data()
        .iter()
        .zip(x_hat.data())
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum();
    let half = T::lit(0.5);
    Ok(half * gamma * fit + half * prox)
}

/// `iters` CG steps on `(gamma A^T A + I) x = gamma A^T y + x_hat`, warm
/// started at `x_hat`.
pub fn solve_proximal<T: Real, O: LinearOperator<T> + ?Sized>(
    op: &O,
    y: &Video<T>,
    x_hat: &Video<T>,
    gamma: T,
    iters: usize,
) -> Result<Video<T>> {
    Ok(solve_proximal_detailed(op, y, x_hat, gamma, &CgConfig::new(iters))?.0)
}

/// As [`solve_proximal`], also returning the CG report.
pub fn solve_proximal_detailed<T: Real, O: LinearOperator<T> + ?Sized>(
    op: &O,
    y: &Video<T>,
    x_hat: &Video<T>,
    gamma: T,
    cfg: &CgConfig,
) -> Result<(Video<T>, CgResult<T>)> {
    if !(gamma >= T::zero()) {
        return Err(Error::Parameter(format!("gamma = {gamma} must be >= 0")));
    }
    x_hat.ensure_shape(op.input_shape(), "proximal anchor")?;
    let mut rhs = op.adjoint(y)?;
    for (r, &xh) in rhs.data_mut().iter_mut().zip(x_hat.data()) {
        *r = gamma * *r + xh;
    }
    let result = cg_solve(
        |x| gram_plus_identity(op, gamma, x).into_data(),
        rhs.data(),
        x_hat.data(),
        cfg,
    )?;
    let x = Video::from_raw(x_hat.shape(), result.solution.clone());
    Ok((x, result))
}
