//! Linear degradation operators `A` with exact adjoints.
//!
//! Every operator is frame-causal: output frame `t` depends only on input
//! frames `<= t`. [`FrameWindow`] exploits this to restrict an operator to a
//! contiguous frame range, which is how chunk-wise guidance sees the
//! measurement.

use crate::error::{Error, Result};
use crate::noise::NoiseStream;
use crate::resample::{box_downsample, box_downsample_adjoint};
use crate::scalar::Real;
use crate::types::{Measurement, Video, VideoShape};

/// A linear map between two sample spaces with a known transpose.
pub trait LinearOperator<T: Real> {
    fn input_shape(&self) -> VideoShape;
    fn output_shape(&self) -> VideoShape;
    fn apply(&self, x: &Video<T>) -> Result<Video<T>>;
    fn adjoint(&self, u: &Video<T>) -> Result<Video<T>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TaskKind {
    Identity,
    SuperResolution,
    Inpaint,
    GaussianBlur,
    TemporalAverage,
    SpatioTemporalAverage,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Identity => "identity",
            TaskKind::SuperResolution => "sr4",
            TaskKind::Inpaint => "inpaint",
            TaskKind::GaussianBlur => "gblur",
            TaskKind::TemporalAverage => "tavg",
            TaskKind::SpatioTemporalAverage => "stavg",
        }
    }

    /// CG iterations spent on pre-restoration.
    pub fn prerestore_iters(self) -> usize {
        match self {
            TaskKind::Identity => 1,
            TaskKind::SuperResolution | TaskKind::GaussianBlur => 5,
            TaskKind::TemporalAverage => 50,
            TaskKind::SpatioTemporalAverage => 100,
            TaskKind::Inpaint => 0,
        }
    }
}

impl std::fmt::Display for TaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "identity" => TaskKind::Identity,
            "sr4" | "sr" => TaskKind::SuperResolution,
            "inpaint" => TaskKind::Inpaint,
            "gblur" => TaskKind::GaussianBlur,
            "tavg" => TaskKind::TemporalAverage,
            "stavg" => TaskKind::SpatioTemporalAverage,
            other => return Err(Error::Parameter(format!("unknown task '{other}'"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OperatorKind<T: Real> {
    Identity,
    SuperResolution {
        factor: usize,
    },
    Inpaint {
        /// One 0/1 entry per (frame, row, col); broadcast over channels.
        mask: Vec<T>,
    },
    GaussianBlur {
        size: usize,
        sigma: f64,
        /// Normalized 1-D taps; the 2-D kernel is their outer product.
        taps: Vec<T>,
    },
    TemporalAverage {
        window: usize,
    },
    SpatioTemporalAverage {
        factor: usize,
        window: usize,
    },
}

/// A degradation operator bound to a fixed input shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Degradation<T: Real = f64> {
    kind: OperatorKind<T>,
    input: VideoShape,
}

fn check_divisible(shape: VideoShape, factor: usize) -> Result<()> {
    if factor == 0 || !shape.height.is_multiple_of(factor) || !shape.width.is_multiple_of(factor) {
        return Err(Error::Shape(format!(
            "{}x{} frame not divisible by spatial factor {factor}",
            shape.height, shape.width
        )));
    }
    Ok(())
}

/// Independent Bernoulli(`keep_fraction`) 0/1 mask over `frames x H x W`.
/// With `shared`, one frame is drawn and repeated over time.
pub fn make_mask<T: Real>(
    frames: usize,
    height: usize,
    width: usize,
    keep_fraction: f64,
    seed: u64,
    shared: bool,
) -> Result<Vec<T>> {
    if !(keep_fraction > 0.0 && keep_fraction < 1.0) {
        return Err(Error::Parameter(format!(
            "keep fraction {keep_fraction} must lie in (0, 1)"
        )));
    }
    let mut stream = NoiseStream::new("mask", seed);
    let plane = height * width;
    let drawn = if shared { plane } else { plane * frames };
    let mut mask: Vec<T> = (0..drawn)
        .map(|_| {
            if stream.uniform() < keep_fraction {
                T::one()
            } else {
                T::zero()
            }
        })
        .collect();
    if shared {
        let first = mask.clone();
        for _ in 1..frames {
            mask.extend_from_slice(&first);
        }
    }
    Ok(mask)
}

/// Normalized, truncated 1-D Gaussian taps of odd length `size`.
pub fn gaussian_taps<T: Real>(size: usize, sigma: f64) -> Vec<T> {
    let r = (size / 2) as f64;
    let raw: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - r;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| T::lit(v / total)).collect()
}

impl<T: Real> Degradation<T> {
    pub fn identity(input: VideoShape) -> Self {
        Self {
            kind: OperatorKind::Identity,
            input,
        }
    }

    pub fn super_resolution(input: VideoShape, factor: usize) -> Result<Self> {
        check_divisible(input, factor)?;
        Ok(Self {
            kind: OperatorKind::SuperResolution { factor },
            input,
        })
    }

    pub fn inpaint(input: VideoShape, keep_fraction: f64, seed: u64, shared: bool) -> Result<Self> {
        let mask = make_mask(
            input.frames,
            input.height,
            input.width,
            keep_fraction,
            seed,
            shared,
        )?;
        Self::inpaint_with_mask(input, mask)
    }

    pub fn inpaint_with_mask(input: VideoShape, mask: Vec<T>) -> Result<Self> {
        if mask.len() != input.frames * input.height * input.width {
            return Err(Error::Shape(format!(
                "mask of {} entries for input {input}",
                mask.len()
            )));
        }
        if mask.iter().any(|&m| m != T::zero() && m != T::one()) {
            return Err(Error::Parameter("mask entries must be 0 or 1".into()));
        }
        Ok(Self {
            kind: OperatorKind::Inpaint { mask },
            input,
        })
    }

    pub fn gaussian_blur(input: VideoShape, size: usize, sigma: f64) -> Result<Self> {
        if size == 0 || size.is_multiple_of(2) {
            return Err(Error::Parameter(format!(
                "blur kernel size {size} must be odd"
            )));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Parameter(format!(
                "blur sigma {sigma} must be positive"
            )));
        }
        Ok(Self {
            kind: OperatorKind::GaussianBlur {
                size,
                sigma,
                taps: gaussian_taps(size, sigma),
            },
            input,
        })
    }

    pub fn temporal_average(input: VideoShape, window: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::Parameter(
                "temporal window must be at least 1".into(),
            ));
        }
        Ok(Self {
            kind: OperatorKind::TemporalAverage { window },
            input,
        })
    }

    pub fn spatio_temporal_average(
        input: VideoShape,
        factor: usize,
        window: usize,
    ) -> Result<Self> {
        check_divisible(input, factor)?;
        if window == 0 {
            return Err(Error::Parameter(
                "temporal window must be at least 1".into(),
            ));
        }
        Ok(Self {
            kind: OperatorKind::SpatioTemporalAverage { factor, window },
            input,
        })
    }

    pub fn kind(&self) -> &OperatorKind<T> {
        &self.kind
    }

    pub fn task(&self) -> TaskKind {
        match self.kind {
            OperatorKind::Identity => TaskKind::Identity,
            OperatorKind::SuperResolution { .. } => TaskKind::SuperResolution,
            OperatorKind::Inpaint { .. } => TaskKind::Inpaint,
            OperatorKind::GaussianBlur { .. } => TaskKind::GaussianBlur,
            OperatorKind::TemporalAverage { .. } => TaskKind::TemporalAverage,
            OperatorKind::SpatioTemporalAverage { .. } => TaskKind::SpatioTemporalAverage,
        }
    }

    /// Mask as a single-channel video, for persistence.
    pub fn mask_video(&self) -> Option<Video<T>> {
        match &self.kind {
            OperatorKind::Inpaint { mask } => Some(Video::from_raw(
                VideoShape::new(self.input.frames, self.input.height, self.input.width, 1),
                mask.clone(),
            )),
            _ => None,
        }
    }

    /// The full 2-D blur kernel (row-major), if this is a blur.
    pub fn blur_kernel(&self) -> Option<Vec<T>> {
        match &self.kind {
            OperatorKind::GaussianBlur { taps, .. } => Some(
                taps.iter()
                    .flat_map(|&a| taps.iter().map(move |&b| a * b))
                    .collect(),
            ),
            _ => None,
        }
    }

    fn spatial_factor(&self) -> usize {
        match self.kind {
            OperatorKind::SuperResolution { factor }
            | OperatorKind::SpatioTemporalAverage { factor, .. } => factor,
            _ => 1,
        }
    }

    fn output_for(&self, input: VideoShape) -> VideoShape {
        let f = self.spatial_factor();
        VideoShape::new(
            input.frames,
            input.height / f,
            input.width / f,
            input.channels,
        )
    }

    /// Applies the rows for global frames `offset .. offset + x.frames()`,
    /// treating all input frames before `offset` as zero.
    pub(crate) fn forward_at(&self, x: &Video<T>, offset: usize) -> Video<T> {
        debug_assert!(offset + x.frames() <= self.input.frames);
        match &self.kind {
            OperatorKind::Identity => x.clone(),
            OperatorKind::SuperResolution { factor } => box_downsample(x, *factor),
            OperatorKind::Inpaint { mask } => self.mask_multiply(mask, x, offset),
            OperatorKind::GaussianBlur { taps, .. } => blur(x, taps, false),
            OperatorKind::TemporalAverage { window } => temporal_forward(x, *window, offset),
            OperatorKind::SpatioTemporalAverage { factor, window } => {
                temporal_forward(&box_downsample(x, *factor), *window, offset)
            }
        }
    }

    /// Transpose of [`Self::forward_at`] for the same frame window.
    pub(crate) fn adjoint_at(&self, u: &Video<T>, offset: usize) -> Video<T> {
        debug_assert!(offset + u.frames() <= self.input.frames);
        match &self.kind {
            OperatorKind::Identity => u.clone(),
            OperatorKind::SuperResolution { factor } => box_downsample_adjoint(u, *factor),
            OperatorKind::Inpaint { mask } => self.mask_multiply(mask, u, offset),
            OperatorKind::GaussianBlur { taps, .. } => blur(u, taps, true),
            OperatorKind::TemporalAverage { window } => temporal_adjoint(u, *window, offset),
            OperatorKind::SpatioTemporalAverage { factor, window } => {
                box_downsample_adjoint(&temporal_adjoint(u, *window, offset), *factor)
            }
        }
    }

    fn mask_multiply(&self, mask: &[T], x: &Video<T>, offset: usize) -> Video<T> {
        let s = x.shape();
        let plane = s.height * s.width;
        let base = offset * plane;
        let data = x
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v * mask[base + i / s.channels])
            .collect();
        Video::from_raw(s, data)
    }

    /// `gamma * A^T A x + x`.
    pub fn apply_gram_plus_identity(&self, gamma: T, x: &Video<T>) -> Result<Video<T>> {
        x.ensure_shape(self.input, "gram input")?;
        Ok(gram_plus_identity(self, gamma, x.data()))
    }

    /// `A x + sigma * n` with `n` drawn from the `"measurement"` stream.
    pub fn degrade(&self, x: &Video<T>, noise_sigma: T, seed: u64) -> Result<Measurement<T>> {
        let mut payload = self.apply(x)?;
        if noise_sigma > T::zero() {
            let mut stream = NoiseStream::new("measurement", seed);
            let n: Vec<T> = stream.gaussian(payload.shape().len());
            for (p, e) in payload.data_mut().iter_mut().zip(n) {
                *p += noise_sigma * e;
            }
        }
        Ok(Measurement {
            payload,
            noise_sigma,
        })
    }
}

impl<T: Real> LinearOperator<T> for Degradation<T> {
    fn input_shape(&self) -> VideoShape {
        self.input
    }

    fn output_shape(&self) -> VideoShape {
        self.output_for(self.input)
    }

    fn apply(&self, x: &Video<T>) -> Result<Video<T>> {
        x.ensure_shape(self.input, "operator input")?;
        Ok(self.forward_at(x, 0))
    }

    fn adjoint(&self, u: &Video<T>) -> Result<Video<T>> {
        u.ensure_shape(self.output_shape(), "adjoint input")?;
        Ok(self.adjoint_at(u, 0))
    }
}

/// `A^T A x` on a flat buffer in `op`'s input space.
pub(crate) fn normal_apply<T: Real, O: LinearOperator<T> + ?Sized>(op: &O, x: &[T]) -> Video<T> {
    let v = Video::from_raw(op.input_shape(), x.to_vec());
    op.adjoint(&op.apply(&v).expect("input shape fixed by operator"))
        .expect("output shape fixed by operator")
}

/// `gamma * A^T A x + x` on a flat buffer in `op`'s input space.
pub(crate) fn gram_plus_identity<T: Real, O: LinearOperator<T> + ?Sized>(
    op: &O,
    gamma: T,
    x: &[T],
) -> Video<T> {
    let mut out = normal_apply(op, x);
    for (o, &xi) in out.data_mut().iter_mut().zip(x) {
        *o = gamma * *o + xi;
    }
    out
}

/// Restriction of a degradation to global frames `offset .. offset + frames`,
/// with every earlier frame held at zero.
///
/// For a causal operator, `A([p; x])[window] = A([p; 0])[window] + W x`, so a
/// chunk-level least-squares problem with a fixed prefix `p` becomes one in `W`
/// against the shifted measurement returned by [`FrameWindow::residual_target`].
#[derive(Debug, Clone, Copy)]
pub struct FrameWindow<'a, T: Real> {
    op: &'a Degradation<T>,
    offset: usize,
    frames: usize,
}

impl<'a, T: Real> FrameWindow<'a, T> {
    pub fn new(op: &'a Degradation<T>, offset: usize, frames: usize) -> Result<Self> {
        if frames == 0 || offset + frames > op.input.frames {
            return Err(Error::Shape(format!(
                "frame window {offset}..{} outside operator span of {} frames",
                offset + frames,
                op.input.frames
            )));
        }
        Ok(Self { op, offset, frames })
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    /// `y[window] - A([prefix; 0])[window]` where `prefix` holds the frames
    /// before the window.
    pub fn residual_target(&self, y: &Video<T>, prefix: Option<&Video<T>>) -> Result<Video<T>> {
        y.ensure_shape(self.op.output_shape(), "measurement")?;
        let mut target = y.slice_frames(self.offset, self.offset + self.frames);
        let Some(prefix) = prefix else {
            if self.offset != 0 {
                return Err(Error::Shape("frame window past 0 needs a prefix".into()));
            }
            return Ok(target);
        };
        prefix.ensure_shape(self.op.input.with_frames(self.offset), "window prefix")?;
        if self.offset == 0 {
            return Ok(target);
        }
        let padded = Video::concat_frames(&[
            prefix.clone(),
            Video::zeros(self.op.input.with_frames(self.frames)),
        ])?;
        let carried = self.op.forward_at(&padded, 0);
        let tail = carried.slice_frames(self.offset, self.offset + self.frames);
        for (t, &c) in target.data_mut().iter_mut().zip(tail.data()) {
            *t -= c;
        }
        Ok(target)
    }
}

impl<T: Real> LinearOperator<T> for FrameWindow<'_, T> {
    fn input_shape(&self) -> VideoShape {
        self.op.input.with_frames(self.frames)
    }

    fn output_shape(&self) -> VideoShape {
        self.op.output_for(self.input_shape())
    }

    fn apply(&self, x: &Video<T>) -> Result<Video<T>> {
        x.ensure_shape(self.input_shape(), "window input")?;
        Ok(self.op.forward_at(x, self.offset))
    }

    fn adjoint(&self, u: &Video<T>) -> Result<Video<T>> {
        u.ensure_shape(self.output_shape(), "window adjoint input")?;
        Ok(self.op.adjoint_at(u, self.offset))
    }
}

/// Causal mean over `{t-w+1, ..., t}` in global time, truncated and
/// renormalized near the sequence start. Frames before `offset` are zero.
fn temporal_forward<T: Real>(x: &Video<T>, window: usize, offset: usize) -> Video<T> {
    let s = x.shape();
    let n = s.frame_len();
    let mut out = vec![T::zero(); s.len()];
    for i in 0..s.frames {
        let t = offset + i;
        let norm = T::one() / T::from_usize_exact(window.min(t + 1));
        let lo = (t + 1).saturating_sub(window).max(offset) - offset;
        let dst = &mut out[i * n..(i + 1) * n];
        for j in lo..=i {
            for (d, &v) in dst.iter_mut().zip(x.frame(j)) {
                *d += v;
            }
        }
        for d in dst.iter_mut() {
            *d *= norm;
        }
    }
    Video::from_raw(s, out)
}

fn temporal_adjoint<T: Real>(u: &Video<T>, window: usize, offset: usize) -> Video<T> {
    let s = u.shape();
    let n = s.frame_len();
    let mut out = vec![T::zero(); s.len()];
    for i in 0..s.frames {
        let t = offset + i;
        let norm = T::one() / T::from_usize_exact(window.min(t + 1));
        let lo = (t + 1).saturating_sub(window).max(offset) - offset;
        for j in lo..=i {
            let dst = &mut out[j * n..(j + 1) * n];
            for (d, &v) in dst.iter_mut().zip(u.frame(i)) {
                *d += v * norm;
            }
        }
    }
    Video::from_raw(s, out)
}

/// Separable blur with replicate padding; `transpose` applies the exact
/// matrix transpose (clamped taps accumulate onto border samples).
fn blur<T: Real>(x: &Video<T>, taps: &[T], transpose: bool) -> Video<T> {
    let s = x.shape();
    let mut out = x.data().to_vec();
    let mut tmp = vec![T::zero(); out.len()];
    let passes: [(usize, bool); 2] = if transpose {
        [(0, true), (1, true)]
    } else {
        [(1, false), (0, false)]
    };
    // axis 1 = along columns (horizontal), axis 0 = along rows (vertical)
    for (axis, tr) in passes {
        tmp.iter_mut().for_each(|v| *v = T::zero());
        blur_axis(&out, &mut tmp, s, taps, axis, tr);
        std::mem::swap(&mut out, &mut tmp);
    }
    Video::from_raw(s, out)
}

fn blur_axis<T: Real>(
    src: &[T],
    dst: &mut [T],
    s: VideoShape,
    taps: &[T],
    axis: usize,
    transpose: bool,
) {
    let r = (taps.len() / 2) as isize;
    let len = if axis == 0 { s.height } else { s.width } as isize;
    for t in 0..s.frames {
        for row in 0..s.height {
            for col in 0..s.width {
                let pos = if axis == 0 { row } else { col } as isize;
                for (k, &w) in taps.iter().enumerate() {
                    let q = (pos + k as isize - r).clamp(0, len - 1) as usize;
                    let (qr, qc) = if axis == 0 { (q, col) } else { (row, q) };
                    for ch in 0..s.channels {
                        let here = s.index(t, row, col, ch);
                        let there = s.index(t, qr, qc, ch);
                        if transpose {
                            dst[there] += w * src[here];
                        } else {
                            dst[here] += w * src[there];
                        }
                    }
                }
            }
        }
    }
}
