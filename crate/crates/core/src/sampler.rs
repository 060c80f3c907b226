//! Chunked autoregressive sampling with optional proximal measurement
//! guidance.
//!
//! Every chunk starts from the pre-restored latent diffused to `t0`, then takes
//! `K` reverse steps `z <- (1 - t') z_hat + t' xi`. A guided step decodes the
//! clean estimate, runs a few CG iterations on the proximal problem restricted
//! to the chunk's pixel frames, and re-encodes before re-noising.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;

use crate::cg::{solve_prerestore, solve_proximal, DEFAULT_GUIDANCE_ITERS};
use crate::codec::{Codec, CounterSnapshot, PassBucket};
use crate::error::{Error, Result};
use crate::noise::NoiseStream;
use crate::operators::{Degradation, FrameWindow, LinearOperator};
use crate::prior::{denoised_estimate, ContextCache, VectorField};
use crate::scalar::Real;
use crate::types::{merge_chunks, Chunk, LatentSeq, Measurement, Schedule, Video};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    /// Guidance at every step of every chunk.
    Avis,
    /// Guidance on the first chunk only.
    Flash,
    /// Guidance on chunks `1, 1 + P, 1 + 2P, ...`.
    FlashPeriodic { period: usize },
    /// All chunks advance together; nothing is displayed until the end.
    Joint,
}

pub const DEFAULT_PERIOD: usize = 7;

impl RunMode {
    pub fn name(self) -> &'static str {
        match self {
            RunMode::Avis => "avis",
            RunMode::Flash => "flash",
            RunMode::FlashPeriodic { .. } => "flash_periodic",
            RunMode::Joint => "joint",
        }
    }

    /// Whether chunk `n` (1-based) receives guidance.
    pub fn guides(self, n: usize) -> bool {
        match self {
            RunMode::Avis | RunMode::Joint => true,
            RunMode::Flash => n == 1,
            RunMode::FlashPeriodic { period } => (n - 1).is_multiple_of(period),
        }
    }
}

impl fmt::Display for RunMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunMode::FlashPeriodic { period } => write!(f, "flash_periodic:{period}"),
            m => f.write_str(m.name()),
        }
    }
}

impl FromStr for RunMode {
    type Err = Error;

    /// `avis`, `flash`, `joint`, `flash_periodic` (period 7) or
    /// `flash_periodic:P`.
    fn from_str(s: &str) -> Result<Self> {
        let (head, period) = match s.split_once(':') {
            Some((h, p)) => (
                h,
                Some(
                    p.parse::<usize>()
                        .map_err(|_| Error::Parameter(format!("bad period '{p}'")))?,
                ),
            ),
            None => (s, None),
        };
        let mode = match (head, period) {
            ("avis", None) => RunMode::Avis,
            ("flash", None) => RunMode::Flash,
            ("joint", None) => RunMode::Joint,
            ("flash_periodic" | "flash-periodic", p) => RunMode::FlashPeriodic {
                period: p.unwrap_or(DEFAULT_PERIOD),
            },
            _ => return Err(Error::Parameter(format!("unknown mode '{s}'"))),
        };
        if let RunMode::FlashPeriodic { period: 0 } = mode {
            return Err(Error::Parameter("guidance period must be >= 1".into()));
        }
        Ok(mode)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig<T: Real = f64> {
    pub mode: RunMode,
    pub schedule: Schedule<T>,
    pub gamma: T,
    pub guidance_iters: usize,
    /// `None` uses the task's own pre-restoration budget.
    pub prerestore_iters: Option<usize>,
    /// Latent frames per chunk.
    pub chunk_len: usize,
    pub seed: u64,
}

impl<T: Real> RunConfig<T> {
    /// `t0 = 0.1`, `K = 2`, `gamma = 1`, 5 guidance iterations, chunks of 3.
    pub fn new(mode: RunMode, seed: u64) -> Self {
        Self {
            mode,
            schedule: Schedule::linear(T::lit(0.1), 2).expect("default schedule"),
            gamma: T::one(),
            guidance_iters: DEFAULT_GUIDANCE_ITERS,
            prerestore_iters: None,
            chunk_len: 3,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if let RunMode::FlashPeriodic { period: 0 } = self.mode {
            return Err(Error::Parameter("guidance period must be >= 1".into()));
        }
        if self.guidance_iters == 0 {
            return Err(Error::Parameter(
                "guidance needs at least one CG iteration".into(),
            ));
        }
        if !(self.gamma >= T::zero()) {
            return Err(Error::Parameter(format!(
                "gamma = {} must be >= 0",
                self.gamma
            )));
        }
        if self.chunk_len == 0 {
            return Err(Error::Parameter("chunk length must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    PreRestore,
    Step,
    GuidedStep,
    Display,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEvent {
    pub kind: EventKind,
    /// 1-based chunk, 0 for whole-video events.
    pub chunk: usize,
    /// Step index `k` for reverse steps.
    pub step: usize,
    /// Reverse steps completed when the event finished.
    pub reverse_steps: usize,
    /// Codec passes made by this event.
    pub codec: CounterSnapshot,
    pub wall_nanos: u128,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub mode: RunMode,
    pub num_chunks: usize,
    pub steps: usize,
    pub pixel_frames: usize,
    pub events: Vec<TraceEvent>,
}

#[derive(Serialize)]
struct TraceRow<'a> {
    event: EventKind,
    chunk: usize,
    step: usize,
    reverse_steps: usize,
    bucket: &'a str,
    encodes: u64,
    decodes: u64,
    wall_nanos: u128,
}

impl RunTrace {
    fn new(mode: RunMode, num_chunks: usize, steps: usize, pixel_frames: usize) -> Self {
        Self {
            mode,
            num_chunks,
            steps,
            pixel_frames,
            events: Vec::new(),
        }
    }

    /// Number of guided reverse steps.
    pub fn guidance_calls(&self) -> usize {
        self.count(EventKind::GuidedStep)
    }

    pub fn total_reverse_steps(&self) -> usize {
        self.count(EventKind::Step) + self.count(EventKind::GuidedStep)
    }

    fn count(&self, kind: EventKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }

    /// Chunks that received guidance, ascending.
    pub fn guided_chunks(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .events
            .iter()
            .filter(|e| e.kind == EventKind::GuidedStep)
            .map(|e| e.chunk)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// `(chunk, step)` of every guided step, in execution order.
    pub fn guidance_log(&self) -> Vec<(usize, usize)> {
        self.events
            .iter()
            .filter(|e| e.kind == EventKind::GuidedStep)
            .map(|e| (e.chunk, e.step))
            .collect()
    }

    /// Chunks in the order they were displayed.
    pub fn display_order(&self) -> Vec<usize> {
        self.events
            .iter()
            .filter(|e| e.kind == EventKind::Display)
            .map(|e| e.chunk)
            .collect()
    }

    /// Reverse steps completed before the first chunk was displayed.
    pub fn first_display_step(&self) -> Option<usize> {
        self.events
            .iter()
            .find(|e| e.kind == EventKind::Display)
            .map(|e| e.reverse_steps)
    }

    /// Sum of the per-event codec deltas.
    pub fn counters(&self) -> CounterSnapshot {
        let mut total = CounterSnapshot::default();
        for e in &self.events {
            for i in 0..4 {
                total.encodes[i] += e.codec.encodes[i];
                total.decodes[i] += e.codec.decodes[i];
            }
        }
        total
    }

    /// One row per event and pass bucket with nonzero traffic (or one row with
    /// bucket `none` when the event made no codec passes).
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        for e in &self.events {
            let mut any = false;
            for b in PassBucket::ALL {
                let (enc, dec) = (e.codec.encodes_in(b), e.codec.decodes_in(b));
                if enc + dec == 0 {
                    continue;
                }
                any = true;
                w.serialize(TraceRow {
                    event: e.kind,
                    chunk: e.chunk,
                    step: e.step,
                    reverse_steps: e.reverse_steps,
                    bucket: b.name(),
                    encodes: enc,
                    decodes: dec,
                    wall_nanos: e.wall_nanos,
                })?;
            }
            if !any {
                w.serialize(TraceRow {
                    event: e.kind,
                    chunk: e.chunk,
                    step: e.step,
                    reverse_steps: e.reverse_steps,
                    bucket: "none",
                    encodes: 0,
                    decodes: 0,
                    wall_nanos: e.wall_nanos,
                })?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

struct Recorder<'a> {
    codec: &'a Codec,
    trace: RunTrace,
    reverse_steps: usize,
}

impl Recorder<'_> {
    fn timed<R>(
        &mut self,
        kind: EventKind,
        chunk: usize,
        step: usize,
        f: impl FnOnce() -> Result<R>,
    ) -> Result<R> {
        let before = self.codec.snapshot();
        let start = Instant::now();
        let out = f()?;
        let wall_nanos = start.elapsed().as_nanos();
        if matches!(kind, EventKind::Step | EventKind::GuidedStep) {
            self.reverse_steps += 1;
        }
        self.trace.events.push(TraceEvent {
            kind,
            chunk,
            step,
            reverse_steps: self.reverse_steps,
            codec: self.codec.snapshot().since(&before),
            wall_nanos,
        });
        Ok(out)
    }
}

/// Measurement-consistency data for one guided chunk.
#[derive(Debug, Clone, Copy)]
pub struct Guidance<'a, T: Real> {
    pub op: &'a Degradation<T>,
    pub y: &'a Video<T>,
    pub codec: &'a Codec,
    pub gamma: T,
    pub iters: usize,
    /// Global index of the chunk's first latent frame.
    pub latent_start: usize,
    /// Pixel frames preceding the chunk, `None` for the first chunk.
    pub prefix: Option<&'a Video<T>>,
}

impl<T: Real> Guidance<'_, T> {
    /// Decode, proximal CG on the chunk's pixel window, re-encode.
    /// Returns the guided latent and its pixel-space solution.
    pub fn apply(&self, z_hat: &Chunk<T>) -> Result<(Vec<T>, Video<T>)> {
        let latent = Video::new(z_hat.shape, z_hat.data.clone())?;
        let x_hat = self
            .codec
            .decode_frames(&latent, self.latent_start, PassBucket::Guidance)?;
        let (start, len) = self.codec.pixel_span(self.latent_start, z_hat.shape.frames);
        if len != x_hat.frames() {
            return Err(Error::Shape(format!(
                "decoded {} pixel frames, window spans {len}",
                x_hat.frames()
            )));
        }
        let window = FrameWindow::new(self.op, start, len)?;
        let y_eff = window.residual_target(self.y, self.prefix)?;
        let x_tilde = solve_proximal(&window, &y_eff, &x_hat, self.gamma, self.iters)?;
        let z_tilde =
            self.codec
                .encode_frames(&x_tilde, self.latent_start, PassBucket::Guidance)?;
        Ok((z_tilde.into_data(), x_tilde))
    }
}

/// Pre-restoration `x_init` and its encoding `z_init`.
pub fn init_estimate<T: Real>(
    op: &Degradation<T>,
    y: &Measurement<T>,
    codec: &Codec,
    task_iters: usize,
    chunk_len: usize,
) -> Result<(Video<T>, LatentSeq<T>)> {
    let x_init = solve_prerestore(op, y, task_iters)?;
    let z_init = codec.encode(&x_init, chunk_len, PassBucket::PreRestore)?;
    Ok((x_init, z_init))
}

/// `(1 - t0) z_init + t0 xi`.
pub fn initialize_chunk<T: Real>(z_init: &Chunk<T>, t0: T, stream: &mut NoiseStream) -> Chunk<T> {
    let xi: Vec<T> = stream.gaussian(z_init.data.len());
    let data = z_init
        .data
        .iter()
        .zip(&xi)
        .map(|(&z, &e)| (T::one() - t0) * z + t0 * e)
        .collect();
    z_init.with_data(t0, data)
}

/// Result of one reverse step.
#[derive(Debug, Clone)]
pub struct StepOutput<T: Real> {
    /// Chunk at `t_{k+1}`.
    pub next: Chunk<T>,
    /// The clean estimate that was re-noised (guided if guidance ran).
    pub clean: Vec<T>,
    /// Pixel-space proximal solution when guidance ran.
    pub pixels: Option<Video<T>>,
}

/// One reverse step from `z.t` to `t_next`, returning only the next chunk.
pub fn reverse_step<T: Real, F: VectorField<T> + ?Sized>(
    prior: &F,
    z: &Chunk<T>,
    ctx: &ContextCache<T>,
    t_next: T,
    guidance: Option<&Guidance<'_, T>>,
    stream: &mut NoiseStream,
) -> Result<Chunk<T>> {
    Ok(reverse_step_detailed(prior, z, ctx, t_next, guidance, stream)?.next)
}

pub fn reverse_step_detailed<T: Real, F: VectorField<T> + ?Sized>(
    prior: &F,
    z: &Chunk<T>,
    ctx: &ContextCache<T>,
    t_next: T,
    guidance: Option<&Guidance<'_, T>>,
    stream: &mut NoiseStream,
) -> Result<StepOutput<T>> {
    if !(t_next >= T::zero() && t_next < z.t) {
        return Err(Error::Parameter(format!(
            "reverse step from t = {} to t = {t_next}",
            z.t
        )));
    }
    let z_hat = denoised_estimate(prior, z, ctx)?;
    let (clean, pixels) = match guidance {
        Some(g) => {
            let (zt, x) = g.apply(&z.with_data(T::zero(), z_hat))?;
            (zt, Some(x))
        }
        None => (z_hat, None),
    };
    let data = if t_next == T::zero() {
        clean.clone()
    } else {
        let xi: Vec<T> = stream.gaussian(clean.len());
        clean
            .iter()
            .zip(&xi)
            .map(|(&c, &e)| (T::one() - t_next) * c + t_next * e)
            .collect()
    };
    Ok(StepOutput {
        next: z.with_data(t_next, data),
        clean,
        pixels,
    })
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct RunOutput<T: Real> {
    pub latent: LatentSeq<T>,
    /// Display decodes of the restored chunks, concatenated.
    pub video: Video<T>,
    pub x_init: Video<T>,
    pub z_init: LatentSeq<T>,
    pub trace: RunTrace,
}

struct Setup<T: Real> {
    x_init: Video<T>,
    z_init: LatentSeq<T>,
    init_chunks: Vec<Chunk<T>>,
}

fn setup<T: Real, F: VectorField<T> + ?Sized>(
    cfg: &RunConfig<T>,
    prior: &F,
    codec: &Codec,
    op: &Degradation<T>,
    y: &Measurement<T>,
    rec: &mut Recorder<'_>,
) -> Result<Setup<T>> {
    cfg.validate()?;
    let iters = cfg
        .prerestore_iters
        .unwrap_or_else(|| op.task().prerestore_iters());
    let (x_init, z_init) = rec.timed(EventKind::PreRestore, 0, 0, || {
        init_estimate(op, y, codec, iters, cfg.chunk_len)
    })?;
    if prior.chunk_shape() != z_init.chunk_shape() {
        return Err(Error::Shape(format!(
            "prior acts on chunks of {}, run produces {}",
            prior.chunk_shape(),
            z_init.chunk_shape()
        )));
    }
    let t0 = cfg.schedule.t0();
    let init_chunks = crate::types::split_chunks(&z_init)
        .iter()
        .map(|c| initialize_chunk(c, t0, &mut NoiseStream::init(c.index, cfg.seed)))
        .collect();
    Ok(Setup {
        x_init,
        z_init,
        init_chunks,
    })
}

fn check_mode(cfg_mode: RunMode, allowed: &[&str]) -> Result<()> {
    if allowed.contains(&cfg_mode.name()) {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "mode {cfg_mode} not handled here"
        )))
    }
}

/// Streaming run: chunk `n` is finished and displayed before chunk `n + 1`
/// starts. Guidance follows `cfg.mode`.
fn run_streaming<T: Real, F: VectorField<T> + ?Sized>(
    cfg: &RunConfig<T>,
    prior: &F,
    codec: &Codec,
    op: &Degradation<T>,
    y: &Measurement<T>,
) -> Result<RunOutput<T>> {
    let mut rec = Recorder {
        codec,
        trace: RunTrace::new(cfg.mode, 0, cfg.schedule.steps(), 0),
        reverse_steps: 0,
    };
    let Setup {
        x_init,
        z_init,
        init_chunks,
    } = setup(cfg, prior, codec, op, y, &mut rec)?;
    rec.trace.num_chunks = init_chunks.len();

    let mut ctx = prior.empty_context();
    let mut done: Vec<Chunk<T>> = Vec::with_capacity(init_chunks.len());
    let mut shown: Vec<Video<T>> = Vec::with_capacity(init_chunks.len());
    let mut prefix: Option<Video<T>> = None;
    for mut z in init_chunks {
        let n = z.index;
        let latent_start = (n - 1) * cfg.chunk_len;
        let guided = cfg.mode.guides(n);
        for (k, _, t_next) in cfg.schedule.transitions() {
            let g = guided.then_some(Guidance {
                op,
                y: &y.payload,
                codec,
                gamma: cfg.gamma,
                iters: cfg.guidance_iters,
                latent_start,
                prefix: prefix.as_ref(),
            });
            let kind = if guided {
                EventKind::GuidedStep
            } else {
                EventKind::Step
            };
            z = rec.timed(kind, n, k, || {
                reverse_step(
                    prior,
                    &z,
                    &ctx,
                    t_next,
                    g.as_ref(),
                    &mut NoiseStream::renoise(n, k, cfg.seed),
                )
            })?;
        }
        let frames = rec.timed(EventKind::Display, n, 0, || {
            codec.decode_frames(
                &Video::new(z.shape, z.data.clone())?,
                latent_start,
                PassBucket::Display,
            )
        })?;
        ctx = ctx.push(&z)?;
        prefix = Some(match prefix {
            None => frames.clone(),
            Some(p) => Video::concat_frames(&[p, frames.clone()])?,
        });
        shown.push(frames);
        done.push(z);
    }
    finish(rec, done, shown, x_init, z_init)
}

fn finish<T: Real>(
    mut rec: Recorder<'_>,
    done: Vec<Chunk<T>>,
    shown: Vec<Video<T>>,
    x_init: Video<T>,
    z_init: LatentSeq<T>,
) -> Result<RunOutput<T>> {
    let latent = merge_chunks(&done)?;
    let video = Video::concat_frames(&shown)?;
    rec.trace.pixel_frames = video.frames();
    Ok(RunOutput {
        latent,
        video,
        x_init,
        z_init,
        trace: rec.trace,
    })
}

/// Guidance at every step of every chunk.
pub fn run_avis<T: Real, F: VectorField<T> + ?Sized>(
    cfg: &RunConfig<T>,
    prior: &F,
    codec: &Codec,
    op: &Degradation<T>,
    y: &Measurement<T>,
) -> Result<RunOutput<T>> {
    check_mode(cfg.mode, &["avis"])?;
    run_streaming(cfg, prior, codec, op, y)
}

/// Guidance on the first chunk (or every `P`-th chunk), free autoregressive
/// sampling elsewhere.
pub fn run_flash<T: Real, F: VectorField<T> + ?Sized>(
    cfg: &RunConfig<T>,
    prior: &F,
    codec: &Codec,
    op: &Degradation<T>,
    y: &Measurement<T>,
) -> Result<RunOutput<T>> {
    check_mode(cfg.mode, &["flash", "flash_periodic"])?;
    run_streaming(cfg, prior, codec, op, y)
}

/// Non-streaming contrast: step `k` is applied to every chunk before step
/// `k + 1`. Chunk `n` is conditioned on its predecessors' guided clean
/// estimates from the same step, and its guidance window on their pixel-space
/// proximal solutions. Display happens only after the last step.
pub fn run_joint_baseline<T: Real, F: VectorField<T> + ?Sized>(
    cfg: &RunConfig<T>,
    prior: &F,
    codec: &Codec,
    op: &Degradation<T>,
    y: &Measurement<T>,
) -> Result<RunOutput<T>> {
    check_mode(cfg.mode, &["joint"])?;
    let mut rec = Recorder {
        codec,
        trace: RunTrace::new(cfg.mode, 0, cfg.schedule.steps(), 0),
        reverse_steps: 0,
    };
    let Setup {
        x_init,
        z_init,
        mut init_chunks,
    } = setup(cfg, prior, codec, op, y, &mut rec)?;
    rec.trace.num_chunks = init_chunks.len();

    for (k, _, t_next) in cfg.schedule.transitions() {
        let mut ctx = prior.empty_context();
        let mut prefix: Option<Video<T>> = None;
        for z in init_chunks.iter_mut() {
            let n = z.index;
            let g = Guidance {
                op,
                y: &y.payload,
                codec,
                gamma: cfg.gamma,
                iters: cfg.guidance_iters,
                latent_start: (n - 1) * cfg.chunk_len,
                prefix: prefix.as_ref(),
            };
            let out = rec.timed(EventKind::GuidedStep, n, k, || {
                reverse_step_detailed(
                    prior,
                    z,
                    &ctx,
                    t_next,
                    Some(&g),
                    &mut NoiseStream::renoise(n, k, cfg.seed),
                )
            })?;
            ctx = ctx.push(&z.with_data(T::zero(), out.clean))?;
            let pixels = out.pixels.expect("guided step yields pixels");
            prefix = Some(match prefix {
                None => pixels,
                Some(p) => Video::concat_frames(&[p, pixels])?,
            });
            *z = out.next;
        }
    }

    let mut shown = Vec::with_capacity(init_chunks.len());
    for z in &init_chunks {
        let latent_start = (z.index - 1) * cfg.chunk_len;
        shown.push(rec.timed(EventKind::Display, z.index, 0, || {
            codec.decode_frames(
                &Video::new(z.shape, z.data.clone())?,
                latent_start,
                PassBucket::Display,
            )
        })?);
    }
    finish(rec, init_chunks, shown, x_init, z_init)
}

/// Dispatches on `cfg.mode`.
pub fn run<T: Real, F: VectorField<T> + ?Sized>(
    cfg: &RunConfig<T>,
    prior: &F,
    codec: &Codec,
    op: &Degradation<T>,
    y: &Measurement<T>,
) -> Result<RunOutput<T>> {
    match cfg.mode {
        RunMode::Avis => run_avis(cfg, prior, codec, op, y),
        RunMode::Flash | RunMode::FlashPeriodic { .. } => run_flash(cfg, prior, codec, op, y),
        RunMode::Joint => run_joint_baseline(cfg, prior, codec, op, y),
    }
}

/// `||y - A x||` for a pixel-space estimate.
pub fn measurement_residual<T: Real>(
    op: &Degradation<T>,
    y: &Measurement<T>,
    x: &Video<T>,
) -> Result<T> {
    let ax = op.apply(x)?;
    Ok(crate::scalar::dist(ax.data(), y.payload.data()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prior::{GaussArPrior, Retention};
    use crate::types::VideoShape;

    fn gauss(chunk: VideoShape) -> GaussArPrior {
        GaussArPrior::new(0.9, 0.2, 0.5, chunk).unwrap()
    }

    fn problem(frames: usize, seed: u64) -> (Degradation<f64>, Measurement<f64>, Video<f64>) {
        let shape = VideoShape::new(frames, 6, 6, 1);
        let x = Video::from_raw(
            shape,
            NoiseStream::new("truth", seed)
                .gaussian::<f64>(shape.len())
                .iter()
                .map(|v| 0.5 + 0.2 * v)
                .collect(),
        );
        let op = Degradation::inpaint(shape, 0.5, seed, false).unwrap();
        let y = op.degrade(&x, 0.0, seed).unwrap();
        (op, y, x)
    }

    fn cfg(mode: RunMode, chunk_len: usize) -> RunConfig<f64> {
        RunConfig {
            chunk_len,
            ..RunConfig::new(mode, 11)
        }
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("avis".parse::<RunMode>().unwrap(), RunMode::Avis);
        assert_eq!(
            "flash_periodic:3".parse::<RunMode>().unwrap(),
            RunMode::FlashPeriodic { period: 3 }
        );
        assert_eq!(
            "flash_periodic".parse::<RunMode>().unwrap(),
            RunMode::FlashPeriodic { period: 7 }
        );
        assert!("flash_periodic:0".parse::<RunMode>().is_err());
        assert!("fast".parse::<RunMode>().is_err());
    }

    #[test]
    fn periodic_guidance_pattern() {
        let m = RunMode::FlashPeriodic { period: 7 };
        let guided: Vec<usize> = (1..=14).filter(|&n| m.guides(n)).collect();
        assert_eq!(guided, vec![1, 8]);
    }

    #[test]
    fn initialize_chunk_endpoints() {
        let c = Chunk::<f64>::new(
            1,
            0.0,
            VideoShape::new(1, 2, 2, 1),
            vec![1.0, 2.0, 3.0, 4.0],
        )
        .unwrap();
        let same = initialize_chunk(&c, 0.0, &mut NoiseStream::init(1, 0));
        assert_eq!(same.data, c.data);
        let a = initialize_chunk(&c, 1.0, &mut NoiseStream::init(1, 0));
        let b = initialize_chunk(
            &c.with_data(0.0, vec![9.0; 4]),
            1.0,
            &mut NoiseStream::init(1, 0),
        );
        assert_eq!(a.data, b.data);
        let d = initialize_chunk(
            &c.with_data(0.0, vec![0.0; 4]),
            0.3,
            &mut NoiseStream::init(1, 0),
        );
        let e = initialize_chunk(&c, 0.3, &mut NoiseStream::init(1, 0));
        for i in 0..4 {
            assert!(((e.data[i] - d.data[i]) - 0.7 * c.data[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn final_step_adds_no_noise_and_zero_gamma_is_unguided() {
        let shape = VideoShape::new(3, 6, 6, 1);
        let prior = gauss(shape);
        let op = Degradation::identity(shape);
        let codec = Codec::identity();
        let y = Video::filled(shape, 0.3f64);
        let z = Chunk::new(
            1,
            0.05,
            shape,
            NoiseStream::new("z", 1).gaussian(shape.len()),
        )
        .unwrap();
        let ctx = ContextCache::empty(Retention::Last);
        let plain = reverse_step_detailed(
            &prior,
            &z,
            &ctx,
            0.0,
            None,
            &mut NoiseStream::renoise(1, 1, 0),
        )
        .unwrap();
        assert_eq!(plain.next.data, plain.clean);
        let z_hat = denoised_estimate(&prior, &z, &ctx).unwrap();
        assert_eq!(plain.clean, z_hat);

        let g0 = Guidance {
            op: &op,
            y: &y,
            codec: &codec,
            gamma: 0.0,
            iters: 5,
            latent_start: 0,
            prefix: None,
        };
        let a = reverse_step(
            &prior,
            &z,
            &ctx,
            0.02,
            Some(&g0),
            &mut NoiseStream::renoise(1, 0, 3),
        )
        .unwrap();
        let b = reverse_step(
            &prior,
            &z,
            &ctx,
            0.02,
            None,
            &mut NoiseStream::renoise(1, 0, 3),
        )
        .unwrap();
        assert_eq!(a, b);

        let g1 = Guidance { gamma: 1.0, ..g0 };
        let guided = reverse_step(
            &prior,
            &z,
            &ctx,
            0.0,
            Some(&g1),
            &mut NoiseStream::renoise(1, 1, 0),
        )
        .unwrap();
        for (g, h) in guided.data.iter().zip(&z_hat) {
            assert!((g - (0.3 + h) / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn guidance_counts_and_latency() {
        let (op, y, _) = problem(15, 1);
        let codec = Codec::identity();
        let prior = gauss(VideoShape::new(3, 6, 6, 1));
        let mut passes = Vec::new();
        for mode in [RunMode::Avis, RunMode::Flash, RunMode::Joint] {
            let out = run(&cfg(mode, 3), &prior, &codec, &op, &y).unwrap();
            let tr = &out.trace;
            assert_eq!(tr.num_chunks, 5);
            assert_eq!(tr.total_reverse_steps(), 10);
            let c = tr.counters();
            assert_eq!(c.encodes_in(PassBucket::PreRestore), 1);
            assert_eq!(c.decodes_in(PassBucket::Display), 5);
            match mode {
                RunMode::Joint => {
                    assert_eq!(tr.guidance_calls(), 10);
                    assert_eq!(tr.first_display_step(), Some(10));
                }
                _ => assert_eq!(tr.first_display_step(), Some(2)),
            }
            assert_eq!(tr.display_order(), vec![1, 2, 3, 4, 5]);
            passes.push((tr.guidance_calls(), c.passes_in(PassBucket::Guidance)));
        }
        assert_eq!(passes[0], (10, 20));
        assert_eq!(passes[1], (2, 4));
    }

    #[test]
    fn streaming_order() {
        let (op, y, _) = problem(9, 2);
        let prior = gauss(VideoShape::new(3, 6, 6, 1));
        let out = run(&cfg(RunMode::Avis, 3), &prior, &Codec::identity(), &op, &y).unwrap();
        let ev = &out.trace.events;
        for n in 1..3 {
            let shown = ev
                .iter()
                .position(|e| e.kind == EventKind::Display && e.chunk == n)
                .unwrap();
            let next = ev.iter().position(|e| e.chunk == n + 1).unwrap();
            assert!(shown < next);
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let (op, y, _) = problem(9, 3);
        let prior = gauss(VideoShape::new(3, 6, 6, 1));
        for mode in [RunMode::Avis, RunMode::Flash, RunMode::Joint] {
            let a = run(&cfg(mode, 3), &prior, &Codec::identity(), &op, &y).unwrap();
            let b = run(&cfg(mode, 3), &prior, &Codec::identity(), &op, &y).unwrap();
            assert_eq!(a.latent, b.latent);
            assert_eq!(a.video, b.video);
        }
    }

    #[test]
    fn single_chunk_modes_coincide() {
        let (op, y, _) = problem(3, 4);
        let prior = gauss(VideoShape::new(3, 6, 6, 1));
        let a = run(&cfg(RunMode::Avis, 3), &prior, &Codec::identity(), &op, &y).unwrap();
        let b = run(&cfg(RunMode::Flash, 3), &prior, &Codec::identity(), &op, &y).unwrap();
        let c = run(&cfg(RunMode::Joint, 3), &prior, &Codec::identity(), &op, &y).unwrap();
        assert_eq!(a.video, b.video);
        assert_eq!(a.video, c.video);
    }

    #[test]
    fn flash_first_chunk_matches_avis() {
        let (op, y, _) = problem(9, 5);
        let prior = gauss(VideoShape::new(3, 6, 6, 1));
        let a = run(&cfg(RunMode::Avis, 3), &prior, &Codec::identity(), &op, &y).unwrap();
        let b = run(&cfg(RunMode::Flash, 3), &prior, &Codec::identity(), &op, &y).unwrap();
        assert_eq!(a.latent.chunk_data(1), b.latent.chunk_data(1));
        assert_ne!(a.latent.chunk_data(2), b.latent.chunk_data(2));
    }

    #[test]
    fn inpaint_init_is_infill() {
        let (op, y, _) = problem(3, 6);
        let (x_init, z_init) = init_estimate(&op, &y, &Codec::identity(), 0, 3).unwrap();
        let mask = op.mask_video().unwrap().into_data();
        let infill = crate::cg::nearest_neighbor_infill(&y.payload, &mask);
        assert_eq!(x_init, infill);
        assert_eq!(z_init.as_video(), &infill);
    }

    #[test]
    fn avis_reduces_residual_against_init() {
        let (op, y, _) = problem(9, 7);
        let prior = gauss(VideoShape::new(3, 6, 6, 1));
        let out = run(&cfg(RunMode::Avis, 3), &prior, &Codec::identity(), &op, &y).unwrap();
        // decode of the initialized (noised) chunks, no reverse steps
        let noised: Vec<Chunk<f64>> = crate::types::split_chunks(&out.z_init)
            .iter()
            .map(|c| initialize_chunk(c, 0.1, &mut NoiseStream::init(c.index, 11)))
            .collect();
        let start = merge_chunks(&noised).unwrap().into_video();
        let r_final = measurement_residual(&op, &y, &out.video).unwrap();
        let r_start = measurement_residual(&op, &y, &start).unwrap();
        assert!(r_final <= r_start, "{r_final} > {r_start}");
    }

    #[test]
    fn pool_interp_codec_runs_chunkwise() {
        // 1 + 4 * (6 - 1) = 21 pixel frames, 6 latent frames, chunks of 3
        let shape = VideoShape::new(21, 8, 8, 1);
        let x = Video::filled(shape, 0.4);
        let op = Degradation::super_resolution(shape, 2).unwrap();
        let y = op.degrade(&x, 0.0, 0).unwrap();
        let codec = Codec::pool_interp(2, 4).unwrap();
        let prior = gauss(VideoShape::new(3, 4, 4, 1));
        let out = run(&cfg(RunMode::Avis, 3), &prior, &codec, &op, &y).unwrap();
        assert_eq!(out.video.shape(), shape);
        assert_eq!(out.trace.counters().passes_in(PassBucket::Guidance), 8);
    }
}
