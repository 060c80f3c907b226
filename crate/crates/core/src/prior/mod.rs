//! Conditional vector fields `v(z_t, t; context)` and their autoregressive
//! context caches.
//!
//! Two concrete priors are provided: [`GaussArPrior`], whose field is the
//! exact conditional expectation for an AR(1) Gaussian chunk law, and
//! [`LearnedPrior`], a two-layer network trained with the conditional
//! flow-matching loss.

mod gauss;
mod learned;

pub use gauss::GaussArPrior;
pub use learned::{read_params, write_params, CfmExample, LearnedPrior, TrainConfig, TrainReport};

use crate::error::{Error, Result};
use crate::noise::NoiseStream;
use crate::scalar::Real;
use crate::types::{Chunk, VideoShape};

/// How much finalized history a prior keeps in its cache.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Retention {
    /// Only the newest chunk (first-order conditioning).
    Last,
    /// Every finalized chunk.
    All,
}

/// Finalized-chunk summaries for chunks `1..n`. Append-only, in chunk order.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextCache<T: Real = f64> {
    finalized: usize,
    retention: Retention,
    entries: Vec<Vec<T>>,
}

impl<T: Real> ContextCache<T> {
    pub fn empty(retention: Retention) -> Self {
        Self {
            finalized: 0,
            retention,
            entries: Vec::new(),
        }
    }

    /// Number of chunks finalized so far.
    pub fn len(&self) -> usize {
        self.finalized
    }

    pub fn is_empty(&self) -> bool {
        self.finalized == 0
    }

    /// Stored summaries, oldest first.
    pub fn entries(&self) -> &[Vec<T>] {
        &self.entries
    }

    pub fn last(&self) -> Option<&[T]> {
        self.entries.last().map(Vec::as_slice)
    }

    /// Appends a finalized chunk. Its index must be `len() + 1`.
    pub fn push(&self, chunk: &Chunk<T>) -> Result<Self> {
        if chunk.index != self.finalized + 1 {
            return Err(Error::ContextOrder {
                expected: self.finalized + 1,
                got: chunk.index,
            });
        }
        if chunk.t != T::zero() {
            return Err(Error::Parameter(format!(
                "context update with chunk at t = {} (must be finalized)",
                chunk.t
            )));
        }
        if let Some(first) = self.entries.first() {
            if first.len() != chunk.data.len() {
                return Err(Error::Shape(format!(
                    "context chunk of {} samples, cache holds {}",
                    chunk.data.len(),
                    first.len()
                )));
            }
        }
        let mut next = self.clone();
        next.finalized += 1;
        if self.retention == Retention::Last {
            next.entries.clear();
        }
        next.entries.push(chunk.data.clone());
        Ok(next)
    }

    /// Builds a cache by finalizing `chunks` (data of chunks `1..=k`) in order.
    pub fn from_chunks(retention: Retention, shape: VideoShape, chunks: &[Vec<T>]) -> Result<Self> {
        chunks
            .iter()
            .enumerate()
            .try_fold(Self::empty(retention), |ctx, (i, d)| {
                ctx.push(&Chunk::new(i + 1, T::zero(), shape, d.clone())?)
            })
    }
}

/// A conditional velocity field over flattened chunks.
pub trait VectorField<T: Real>: Send + Sync {
    /// Shape of the chunks the field acts on.
    fn chunk_shape(&self) -> VideoShape;

    fn retention(&self) -> Retention;

    /// `v(z_t, t; ctx)`. Fails at `t = 0`.
    fn velocity(&self, z_t: &[T], t: T, ctx: &ContextCache<T>) -> Result<Vec<T>>;

    /// Clean estimate `z_t - t v(z_t, t; ctx)`.
    fn denoise(&self, z_t: &[T], t: T, ctx: &ContextCache<T>) -> Result<Vec<T>> {
        let v = self.velocity(z_t, t, ctx)?;
        Ok(z_t.iter().zip(&v).map(|(&z, &vi)| z - t * vi).collect())
    }

    fn empty_context(&self) -> ContextCache<T> {
        ContextCache::empty(self.retention())
    }
}

fn check_query<T: Real, F: VectorField<T> + ?Sized>(
    prior: &F,
    z_t: &Chunk<T>,
    ctx: &ContextCache<T>,
) -> Result<()> {
    if ctx.len() + 1 != z_t.index {
        return Err(Error::ContextOrder {
            expected: ctx.len() + 1,
            got: z_t.index,
        });
    }
    if z_t.data.len() != prior.chunk_shape().len() {
        return Err(Error::Shape(format!(
            "chunk of {} samples for a field over {}",
            z_t.data.len(),
            prior.chunk_shape()
        )));
    }
    Ok(())
}

/// Velocity for chunk `z_t` at its own timestep; `ctx` must hold exactly the
/// chunks before it.
pub fn vector_field<T: Real, F: VectorField<T> + ?Sized>(
    prior: &F,
    z_t: &Chunk<T>,
    ctx: &ContextCache<T>,
) -> Result<Vec<T>> {
    check_query(prior, z_t, ctx)?;
    prior.velocity(&z_t.data, z_t.t, ctx)
}

pub fn denoised_estimate<T: Real, F: VectorField<T> + ?Sized>(
    prior: &F,
    z_t: &Chunk<T>,
    ctx: &ContextCache<T>,
) -> Result<Vec<T>> {
    check_query(prior, z_t, ctx)?;
    prior.denoise(&z_t.data, z_t.t, ctx)
}

pub fn update_context<T: Real>(
    ctx: &ContextCache<T>,
    finalized: &Chunk<T>,
) -> Result<ContextCache<T>> {
    ctx.push(finalized)
}

/// Conditional flow-matching loss on `(z_0, context)` pairs:
/// `mean_b || v(z_t, t; ctx) - (z_1 - z_0) ||^2` with `t ~ U(0, 1]`,
/// `z_1 ~ N(0, I)` and `z_t = (1 - t) z_0 + t z_1`.
pub fn cfm_loss<T: Real, F: VectorField<T> + ?Sized>(
    prior: &F,
    batch: &[(Vec<T>, ContextCache<T>)],
    stream: &mut NoiseStream,
) -> Result<T> {
    if batch.is_empty() {
        return Err(Error::Parameter("empty CFM batch".into()));
    }
    let mut total = T::zero();
    for (z0, ctx) in batch {
        let ex = CfmExample::draw(z0, ctx.clone(), stream);
        let v = prior.velocity(&ex.z_t, ex.t, &ex.ctx)?;
        total += v
            .iter()
            .zip(&ex.target)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum::<T>();
    }
    Ok(total / T::from_usize_exact(batch.len()))
}

/// The zero field `v = 0`.
#[derive(Debug, Clone, Copy)]
pub struct ZeroField {
    pub shape: VideoShape,
}

impl<T: Real> VectorField<T> for ZeroField {
    fn chunk_shape(&self) -> VideoShape {
        self.shape
    }

    fn retention(&self) -> Retention {
        Retention::Last
    }

    fn velocity(&self, z_t: &[T], t: T, _ctx: &ContextCache<T>) -> Result<Vec<T>> {
        if t <= T::zero() {
            return Err(Error::SingularTimestep);
        }
        Ok(vec![T::zero(); z_t.len()])
    }
}

/// Another field plus a constant offset on every coordinate.
#[derive(Debug, Clone)]
pub struct ShiftedField<F> {
    pub inner: F,
    pub shift: f64,
}

impl<T: Real, F: VectorField<T>> VectorField<T> for ShiftedField<F> {
    fn chunk_shape(&self) -> VideoShape {
        self.inner.chunk_shape()
    }

    fn retention(&self) -> Retention {
        self.inner.retention()
    }

    fn velocity(&self, z_t: &[T], t: T, ctx: &ContextCache<T>) -> Result<Vec<T>> {
        let s = T::lit(self.shift);
        Ok(self
            .inner
            .velocity(z_t, t, ctx)?
            .into_iter()
            .map(|v| v + s)
            .collect())
    }
}

impl<T: Real, F: VectorField<T> + ?Sized> VectorField<T> for &F {
    fn chunk_shape(&self) -> VideoShape {
        (**self).chunk_shape()
    }

    fn retention(&self) -> Retention {
        (**self).retention()
    }

    fn velocity(&self, z_t: &[T], t: T, ctx: &ContextCache<T>) -> Result<Vec<T>> {
        (**self).velocity(z_t, t, ctx)
    }

    fn denoise(&self, z_t: &[T], t: T, ctx: &ContextCache<T>) -> Result<Vec<T>> {
        (**self).denoise(z_t, t, ctx)
    }
}
