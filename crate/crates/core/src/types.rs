//! Value types shared across the pipeline: pixel videos, latent sequences,
//! chunks, measurements and the reverse-time schedule.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Dimensions of a frame-major, row-major, channel-last sample array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VideoShape {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl VideoShape {
    pub const fn new(frames: usize, height: usize, width: usize, channels: usize) -> Self {
        Self {
            frames,
            height,
            width,
            channels,
        }
    }

    /// Total sample count, or `None` on overflow.
    pub fn checked_len(&self) -> Option<usize> {
        self.frames
            .checked_mul(self.height)?
            .checked_mul(self.width)?
            .checked_mul(self.channels)
    }

    pub fn len(&self) -> usize {
        self.frames * self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Samples per frame.
    pub fn frame_len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn with_frames(&self, frames: usize) -> Self {
        Self { frames, ..*self }
    }

    #[inline]
    pub fn index(&self, frame: usize, row: usize, col: usize, ch: usize) -> usize {
        ((frame * self.height + row) * self.width + col) * self.channels + ch
    }
}

impl std::fmt::Display for VideoShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}x{}x{}x{}",
            self.frames, self.height, self.width, self.channels
        )
    }
}

/// A pixel-space clip. Samples are unquantized reals with nominal range [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Video<T: Real = f64> {
    shape: VideoShape,
    data: Vec<T>,
}

impl<T: Real> Video<T> {
    pub fn new(shape: VideoShape, data: Vec<T>) -> Result<Self> {
        let expected = shape
            .checked_len()
            .ok_or_else(|| Error::Shape(format!("dimensions {shape} overflow")))?;
        if data.len() != expected {
            return Err(Error::Shape(format!(
                "{} samples supplied for shape {shape} ({expected} expected)",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parameter(format!("non-finite sample at index {i}")));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: VideoShape) -> Self {
        Self {
            shape,
            data: vec![T::zero(); shape.len()],
        }
    }

    pub fn filled(shape: VideoShape, value: T) -> Self {
        Self {
            shape,
            data: vec![value; shape.len()],
        }
    }

    /// Builds a video from `f(frame, row, col, channel)`.
    pub fn from_fn(shape: VideoShape, mut f: impl FnMut(usize, usize, usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(shape.len());
        for t in 0..shape.frames {
            for r in 0..shape.height {
                for c in 0..shape.width {
                    for ch in 0..shape.channels {
                        data.push(f(t, r, c, ch));
                    }
                }
            }
        }
        Self { shape, data }
    }

    /// Wraps a buffer without the finiteness scan. Length must match.
    pub(crate) fn from_raw(shape: VideoShape, data: Vec<T>) -> Self {
        debug_assert_eq!(shape.len(), data.len());
        Self { shape, data }
    }

    pub fn shape(&self) -> VideoShape {
        self.shape
    }

    pub fn frames(&self) -> usize {
        self.shape.frames
    }

    pub fn height(&self) -> usize {
        self.shape.height
    }

    pub fn width(&self) -> usize {
        self.shape.width
    }

    pub fn channels(&self) -> usize {
        self.shape.channels
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn at(&self, frame: usize, row: usize, col: usize, ch: usize) -> T {
        self.data[self.shape.index(frame, row, col, ch)]
    }

    pub fn frame(&self, t: usize) -> &[T] {
        let n = self.shape.frame_len();
        &self.data[t * n..(t + 1) * n]
    }

    /// Copies frames `start..end` into a new video.
    pub fn slice_frames(&self, start: usize, end: usize) -> Video<T> {
        let n = self.shape.frame_len();
        Video::from_raw(
            self.shape.with_frames(end - start),
            self.data[start * n..end * n].to_vec(),
        )
    }

    /// Concatenates videos along time. All parts must share spatial dims.
    pub fn concat_frames(parts: &[Video<T>]) -> Result<Video<T>> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Shape("cannot concatenate zero videos".into()))?;
        let base = first.shape;
        let mut frames = 0;
        let mut data = Vec::new();
        for p in parts {
            if p.shape.with_frames(0) != base.with_frames(0) {
                return Err(Error::Shape(format!(
                    "cannot concatenate {} with {}",
                    p.shape, base
                )));
            }
            frames += p.shape.frames;
            data.extend_from_slice(&p.data);
        }
        Ok(Video::from_raw(base.with_frames(frames), data))
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Video<T> {
        Video::from_raw(self.shape, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn cast<U: Real>(&self) -> Video<U> {
        Video::from_raw(
            self.shape,
            self.data
                .iter()
                .map(|v| U::from_f64(v.as_f64()).expect("sample representable"))
                .collect(),
        )
    }

    pub(crate) fn ensure_shape(&self, expected: VideoShape, what: &str) -> Result<()> {
        if self.shape != expected {
            return Err(Error::Shape(format!(
                "{what}: got {}, expected {expected}",
                self.shape
            )));
        }
        Ok(())
    }
}

/// A latent sequence `z = [z^1, ..., z^N]` partitioned into chunks of
/// `chunk_len` latent frames.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSeq<T: Real = f64> {
    tensor: Video<T>,
    chunk_len: usize,
}

impl<T: Real> LatentSeq<T> {
    pub fn new(tensor: Video<T>, chunk_len: usize) -> Result<Self> {
        if chunk_len == 0 {
            return Err(Error::Parameter("chunk_len must be at least 1".into()));
        }
        if !tensor.frames().is_multiple_of(chunk_len) {
            return Err(Error::Shape(format!(
                "{} latent frames are not divisible by chunk length {chunk_len}",
                tensor.frames()
            )));
        }
        Ok(Self { tensor, chunk_len })
    }

    pub fn shape(&self) -> VideoShape {
        self.tensor.shape()
    }

    pub fn chunk_len(&self) -> usize {
        self.chunk_len
    }

    pub fn num_chunks(&self) -> usize {
        self.tensor.frames() / self.chunk_len
    }

    /// Shape of one chunk.
    pub fn chunk_shape(&self) -> VideoShape {
        self.tensor.shape().with_frames(self.chunk_len)
    }

    pub fn data(&self) -> &[T] {
        self.tensor.data()
    }

    pub fn as_video(&self) -> &Video<T> {
        &self.tensor
    }

    pub fn into_video(self) -> Video<T> {
        self.tensor
    }

    /// Data of chunk `n` (1-based).
    pub fn chunk_data(&self, n: usize) -> &[T] {
        let len = self.chunk_shape().len();
        &self.tensor.data()[(n - 1) * len..n * len]
    }
}

/// One chunk `z^n_t` at timestep `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Chunk<T: Real = f64> {
    pub index: usize,
    pub t: T,
    pub shape: VideoShape,
    pub data: Vec<T>,
}

impl<T: Real> Chunk<T> {
    pub fn new(index: usize, t: T, shape: VideoShape, data: Vec<T>) -> Result<Self> {
        if index == 0 {
            return Err(Error::Parameter("chunk indices are 1-based".into()));
        }
        if !(t >= T::zero() && t <= T::one()) {
            return Err(Error::Parameter(format!(
                "chunk timestep {t} outside [0, 1]"
            )));
        }
        if shape.len() != data.len() {
            return Err(Error::Shape(format!(
                "chunk of shape {shape} given {} samples",
                data.len()
            )));
        }
        Ok(Self {
            index,
            t,
            shape,
            data,
        })
    }

    pub fn with_data(&self, t: T, data: Vec<T>) -> Chunk<T> {
        debug_assert_eq!(data.len(), self.data.len());
        Chunk {
            index: self.index,
            t,
            shape: self.shape,
            data,
        }
    }
}

/// Splits `z` into its `N = T_z / L` chunks in temporal order, all at `t = 0`.
pub fn split_chunks<T: Real>(z: &LatentSeq<T>) -> Vec<Chunk<T>> {
    let shape = z.chunk_shape();
    (1..=z.num_chunks())
        .map(|n| Chunk {
            index: n,
            t: T::zero(),
            shape,
            data: z.chunk_data(n).to_vec(),
        })
        .collect()
}

/// Inverse of [`split_chunks`]; chunks must be consecutive from index 1.
pub fn merge_chunks<T: Real>(chunks: &[Chunk<T>]) -> Result<LatentSeq<T>> {
    let first = chunks
        .first()
        .ok_or_else(|| Error::Shape("cannot merge zero chunks".into()))?;
    let shape = first.shape;
    let mut data = Vec::with_capacity(shape.len() * chunks.len());
    for (i, c) in chunks.iter().enumerate() {
        if c.index != i + 1 {
            return Err(Error::Shape(format!(
                "chunk {} found at position {}",
                c.index,
                i + 1
            )));
        }
        if c.shape != shape {
            return Err(Error::Shape(format!(
                "chunk {} has shape {}, expected {shape}",
                c.index, c.shape
            )));
        }
        data.extend_from_slice(&c.data);
    }
    let tensor = Video::from_raw(shape.with_frames(shape.frames * chunks.len()), data);
    LatentSeq::new(tensor, shape.frames)
}

/// Observed data `y = A(x) + n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement<T: Real = f64> {
    pub payload: Video<T>,
    pub noise_sigma: T,
}

impl<T: Real> Measurement<T> {
    pub fn noiseless(payload: Video<T>) -> Self {
        Self {
            payload,
            noise_sigma: T::zero(),
        }
    }
}

/// Reverse-time grid `t_0 > t_1 > ... > t_K = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule<T: Real = f64> {
    t0: T,
    grid: Vec<T>,
}

impl<T: Real> Schedule<T> {
    /// Linear schedule `t_k = (1 - k/K) t0`, step size `t0 / K`.
    pub fn linear(t0: T, steps: usize) -> Result<Self> {
        if !(t0 > T::zero() && t0 <= T::one()) {
            return Err(Error::Parameter(format!("t0 = {t0} must lie in (0, 1]")));
        }
        if steps == 0 {
            return Err(Error::Parameter("schedule needs at least one step".into()));
        }
        let k_total = T::from_usize_exact(steps);
        let grid = (0..=steps)
            .map(|k| (T::one() - T::from_usize_exact(k) / k_total) * t0)
            .collect();
        Ok(Self { t0, grid })
    }

    pub fn t0(&self) -> T {
        self.t0
    }

    /// Number of reverse steps `K`.
    pub fn steps(&self) -> usize {
        self.grid.len() - 1
    }

    pub fn grid(&self) -> &[T] {
        &self.grid
    }

    /// `(t_k, t_{k+1})` pairs in order.
    pub fn transitions(&self) -> impl Iterator<Item = (usize, T, T)> + '_ {
        self.grid
            .windows(2)
            .enumerate()
            .map(|(k, w)| (k, w[0], w[1]))
    }
}

/// Shorthand for [`Schedule::linear`].
pub fn make_schedule<T: Real>(t0: T, steps: usize) -> Result<Schedule<T>> {
    Schedule::linear(t0, steps)
}
