//! Linear encoder/decoder pairs standing in for a video VAE, with exact pass
//! counting by purpose.
//!
//! `PoolInterp` follows the causal video-VAE shape law: the first pixel frame
//! is encoded on its own and every further group of `f_t` frames becomes one
//! latent frame, so `T_px = 1 + f_t (T_z - 1)`.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::resample::{bilinear_upsample, box_downsample};
use crate::scalar::Real;
use crate::types::{LatentSeq, Video, VideoShape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CodecKind {
    Identity,
    PoolInterp { spatial: usize, temporal: usize },
}

/// Why a codec pass happened. Counted separately so efficiency figures can
/// include or exclude display decodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PassBucket {
    PreRestore,
    Guidance,
    Display,
    Other,
}

impl PassBucket {
    pub const ALL: [PassBucket; 4] = [
        PassBucket::PreRestore,
        PassBucket::Guidance,
        PassBucket::Display,
        PassBucket::Other,
    ];

    fn slot(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            PassBucket::PreRestore => "prerestore",
            PassBucket::Guidance => "guidance",
            PassBucket::Display => "display",
            PassBucket::Other => "other",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CounterSnapshot {
    pub encodes: [u64; 4],
    pub decodes: [u64; 4],
}

impl CounterSnapshot {
    pub fn encodes_in(&self, bucket: PassBucket) -> u64 {
        self.encodes[bucket.slot()]
    }

    pub fn decodes_in(&self, bucket: PassBucket) -> u64 {
        self.decodes[bucket.slot()]
    }

    /// Encodes plus decodes in one bucket.
    pub fn passes_in(&self, bucket: PassBucket) -> u64 {
        self.encodes_in(bucket) + self.decodes_in(bucket)
    }

    pub fn total_encodes(&self) -> u64 {
        self.encodes.iter().sum()
    }

    pub fn total_decodes(&self) -> u64 {
        self.decodes.iter().sum()
    }

    /// Per-bucket difference `self - earlier`.
    pub fn since(&self, earlier: &CounterSnapshot) -> CounterSnapshot {
        let mut out = *self;
        for i in 0..4 {
            out.encodes[i] -= earlier.encodes[i];
            out.decodes[i] -= earlier.decodes[i];
        }
        out
    }
}

#[derive(Debug, Default)]
struct PassCounters {
    encodes: [AtomicU64; 4],
    decodes: [AtomicU64; 4],
}

#[derive(Debug)]
pub struct Codec {
    kind: CodecKind,
    counters: PassCounters,
}

impl Clone for Codec {
    /// The clone starts from the same counts and then counts independently.
    fn clone(&self) -> Self {
        let snap = self.snapshot();
        let c = Codec::new(self.kind).expect("validated kind");
        for i in 0..4 {
            c.counters.encodes[i].store(snap.encodes[i], Ordering::Relaxed);
            c.counters.decodes[i].store(snap.decodes[i], Ordering::Relaxed);
        }
        c
    }
}

impl Codec {
    pub fn new(kind: CodecKind) -> Result<Self> {
        if let CodecKind::PoolInterp { spatial, temporal } = kind {
            if spatial == 0 || temporal == 0 {
                return Err(Error::Parameter(
                    "codec downsampling factors must be at least 1".into(),
                ));
            }
        }
        Ok(Self {
            kind,
            counters: PassCounters::default(),
        })
    }

    pub fn identity() -> Self {
        Self::new(CodecKind::Identity).expect("identity codec")
    }

    pub fn pool_interp(spatial: usize, temporal: usize) -> Result<Self> {
        Self::new(CodecKind::PoolInterp { spatial, temporal })
    }

    pub fn kind(&self) -> CodecKind {
        self.kind
    }

    pub fn snapshot(&self) -> CounterSnapshot {
        let mut s = CounterSnapshot::default();
        for i in 0..4 {
            s.encodes[i] = self.counters.encodes[i].load(Ordering::SeqCst);
            s.decodes[i] = self.counters.decodes[i].load(Ordering::SeqCst);
        }
        s
    }

    /// `(encodes, decodes)` over all buckets since construction or reset.
    pub fn read_counters(&self) -> (u64, u64) {
        let s = self.snapshot();
        (s.total_encodes(), s.total_decodes())
    }

    pub fn reset_counters(&self) {
        for i in 0..4 {
            self.counters.encodes[i].store(0, Ordering::SeqCst);
            self.counters.decodes[i].store(0, Ordering::SeqCst);
        }
    }

    /// Latent tensor shape for a pixel clip of the given shape.
    pub fn latent_shape(&self, pixel: VideoShape) -> Result<VideoShape> {
        match self.kind {
            CodecKind::Identity => Ok(pixel),
            CodecKind::PoolInterp { spatial, temporal } => {
                if !pixel.height.is_multiple_of(spatial) || !pixel.width.is_multiple_of(spatial) {
                    return Err(Error::Shape(format!(
                        "{}x{} frame not divisible by codec factor {spatial}",
                        pixel.height, pixel.width
                    )));
                }
                if pixel.frames == 0 || !(pixel.frames - 1).is_multiple_of(temporal) {
                    return Err(Error::Shape(format!(
                        "{} pixel frames do not satisfy 1 + {temporal}k",
                        pixel.frames
                    )));
                }
                Ok(VideoShape::new(
                    1 + (pixel.frames - 1) / temporal,
                    pixel.height / spatial,
                    pixel.width / spatial,
                    pixel.channels,
                ))
            }
        }
    }

    /// Pixel tensor shape produced by decoding a latent tensor.
    pub fn pixel_shape(&self, latent: VideoShape) -> VideoShape {
        match self.kind {
            CodecKind::Identity => latent,
            CodecKind::PoolInterp { spatial, temporal } => VideoShape::new(
                if latent.frames == 0 {
                    0
                } else {
                    1 + (latent.frames - 1) * temporal
                },
                latent.height * spatial,
                latent.width * spatial,
                latent.channels,
            ),
        }
    }

    /// First pixel frame covered by global latent frame `j`.
    pub fn pixel_frame_of(&self, j: usize) -> usize {
        match self.kind {
            CodecKind::Identity => j,
            CodecKind::PoolInterp { temporal, .. } => {
                if j == 0 {
                    0
                } else {
                    1 + (j - 1) * temporal
                }
            }
        }
    }

    /// Pixel frame range `(start, len)` covered by latent frames
    /// `latent_start .. latent_start + latent_len`.
    pub fn pixel_span(&self, latent_start: usize, latent_len: usize) -> (usize, usize) {
        let a = self.pixel_frame_of(latent_start);
        let b = self.pixel_frame_of(latent_start + latent_len);
        (a, b - a)
    }

    /// Encodes pixel frames whose first frame maps to global latent frame
    /// `latent_start`.
    pub fn encode_frames<T: Real>(
        &self,
        x: &Video<T>,
        latent_start: usize,
        bucket: PassBucket,
    ) -> Result<Video<T>> {
        let out = match self.kind {
            CodecKind::Identity => x.clone(),
            CodecKind::PoolInterp { spatial, temporal } => {
                let s = x.shape();
                if !s.height.is_multiple_of(spatial) || !s.width.is_multiple_of(spatial) {
                    return Err(Error::Shape(format!(
                        "{}x{} frame not divisible by codec factor {spatial}",
                        s.height, s.width
                    )));
                }
                let head = usize::from(latent_start == 0);
                if s.frames < head || !(s.frames - head).is_multiple_of(temporal) {
                    return Err(Error::Shape(format!(
                        "{} pixel frames starting at latent {latent_start} do not tile by {temporal}",
                        s.frames
                    )));
                }
                let groups = head + (s.frames - head) / temporal;
                let n = s.frame_len();
                let mut pooled = Vec::with_capacity(groups * n);
                if head == 1 {
                    pooled.extend_from_slice(x.frame(0));
                }
                let inv = T::one() / T::from_usize_exact(temporal);
                for g in 0..groups - head {
                    let first = head + g * temporal;
                    let mut acc = vec![T::zero(); n];
                    for f in first..first + temporal {
                        for (a, &v) in acc.iter_mut().zip(x.frame(f)) {
                            *a += v;
                        }
                    }
                    pooled.extend(acc.into_iter().map(|a| a * inv));
                }
                let temporal_pooled = Video::from_raw(s.with_frames(groups), pooled);
                box_downsample(&temporal_pooled, spatial)
            }
        };
        self.counters.encodes[bucket.slot()].fetch_add(1, Ordering::SeqCst);
        Ok(out)
    }

    /// Decodes latent frames starting at global latent frame `latent_start`.
    pub fn decode_frames<T: Real>(
        &self,
        z: &Video<T>,
        latent_start: usize,
        bucket: PassBucket,
    ) -> Result<Video<T>> {
        let out = match self.kind {
            CodecKind::Identity => z.clone(),
            CodecKind::PoolInterp { spatial, temporal } => {
                let up = bilinear_upsample(z, spatial);
                let mut parts = Vec::with_capacity(z.frames());
                for i in 0..z.frames() {
                    let reps = if latent_start + i == 0 { 1 } else { temporal };
                    let f = up.slice_frames(i, i + 1);
                    for _ in 0..reps {
                        parts.push(f.clone());
                    }
                }
                if parts.is_empty() {
                    return Err(Error::Shape("cannot decode zero latent frames".into()));
                }
                Video::concat_frames(&parts)?
            }
        };
        self.counters.decodes[bucket.slot()].fetch_add(1, Ordering::SeqCst);
        Ok(out)
    }

    pub fn encode<T: Real>(
        &self,
        x: &Video<T>,
        chunk_len: usize,
        bucket: PassBucket,
    ) -> Result<LatentSeq<T>> {
        self.latent_shape(x.shape())?;
        LatentSeq::new(self.encode_frames(x, 0, bucket)?, chunk_len)
    }

    pub fn decode<T: Real>(&self, z: &LatentSeq<T>, bucket: PassBucket) -> Result<Video<T>> {
        self.decode_frames(z.as_video(), 0, bucket)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::NoiseStream;

    fn random(shape: VideoShape, seed: u64) -> Video<f64> {
        Video::from_raw(shape, NoiseStream::new("codec", seed).gaussian(shape.len()))
    }

    #[test]
    fn identity_is_bit_exact() {
        let c = Codec::identity();
        let x = random(VideoShape::new(6, 4, 4, 3), 1);
        let z = c.encode(&x, 3, PassBucket::Other).unwrap();
        assert_eq!(z.data(), x.data());
        assert_eq!(c.decode(&z, PassBucket::Other).unwrap(), x);
    }

    #[test]
    fn pool_interp_shape_law() {
        let c = Codec::pool_interp(2, 4).unwrap();
        assert_eq!(
            c.latent_shape(VideoShape::new(9, 8, 8, 1)).unwrap(),
            VideoShape::new(3, 4, 4, 1)
        );
        assert!(c.latent_shape(VideoShape::new(8, 8, 8, 1)).is_err());
        assert!(c.latent_shape(VideoShape::new(9, 7, 8, 1)).is_err());
        assert_eq!(
            c.pixel_shape(VideoShape::new(3, 4, 4, 1)),
            VideoShape::new(9, 8, 8, 1)
        );
        assert_eq!(c.pixel_span(0, 3), (0, 9));
        assert_eq!(c.pixel_span(3, 3), (9, 12));
    }

    #[test]
    fn pool_interp_constant_round_trip() {
        let c = Codec::pool_interp(2, 4).unwrap();
        let x = Video::filled(VideoShape::new(9, 8, 8, 1), 0.7f64);
        let z = c.encode(&x, 3, PassBucket::Other).unwrap();
        assert!(z.data().iter().all(|&v| (v - 0.7).abs() < 1e-15));
        let back = c.decode(&z, PassBucket::Other).unwrap();
        assert!(back.data().iter().all(|&v| (v - 0.7).abs() < 1e-15));
    }

    #[test]
    fn pool_interp_is_lossy_but_block_constant_latents_survive() {
        let c = Codec::pool_interp(2, 4).unwrap();
        let x = random(VideoShape::new(9, 8, 8, 1), 4);
        let z = c.encode(&x, 3, PassBucket::Other).unwrap();
        let back = c.decode(&z, PassBucket::Other).unwrap();
        let err: f64 = back
            .data()
            .iter()
            .zip(x.data())
            .map(|(a, b)| (a - b).powi(2))
            .sum();
        assert!(err > 0.0);

        // spatially constant per latent frame, varying in time
        let zc = Video::from_fn(VideoShape::new(3, 4, 4, 1), |t, _, _, _| {
            t as f64 * 0.3 - 0.2
        });
        let zc = LatentSeq::new(zc, 3).unwrap();
        let again = c
            .encode(
                &c.decode(&zc, PassBucket::Other).unwrap(),
                3,
                PassBucket::Other,
            )
            .unwrap();
        for (a, b) in again.data().iter().zip(zc.data()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn chunk_wise_coding_matches_full() {
        let c = Codec::pool_interp(2, 2).unwrap();
        let x = random(VideoShape::new(13, 4, 4, 1), 2);
        let full = c.encode_frames(&x, 0, PassBucket::Other).unwrap();
        assert_eq!(full.frames(), 7);
        let (a, len) = c.pixel_span(3, 2);
        let part = c
            .encode_frames(&x.slice_frames(a, a + len), 3, PassBucket::Other)
            .unwrap();
        assert_eq!(part, full.slice_frames(3, 5));
        let dec = c.decode_frames(&full, 0, PassBucket::Other).unwrap();
        let dec_part = c
            .decode_frames(&full.slice_frames(3, 5), 3, PassBucket::Other)
            .unwrap();
        assert_eq!(dec_part, dec.slice_frames(a, a + len));
    }

    #[test]
    fn counters() {
        let c = Codec::identity();
        assert_eq!(c.read_counters(), (0, 0));
        let x = random(VideoShape::new(3, 2, 2, 1), 0);
        let z = c.encode(&x, 3, PassBucket::PreRestore).unwrap();
        c.decode(&z, PassBucket::Display).unwrap();
        c.decode(&z, PassBucket::Guidance).unwrap();
        assert_eq!(c.read_counters(), (1, 2));
        let s = c.snapshot();
        assert_eq!(s.encodes_in(PassBucket::PreRestore), 1);
        assert_eq!(s.decodes_in(PassBucket::Display), 1);
        assert_eq!(s.passes_in(PassBucket::Guidance), 1);
        c.reset_counters();
        assert_eq!(c.read_counters(), (0, 0));
    }
}
