use crate::error::{Error, Result};
use crate::noise::NoiseStream;
use crate::scalar::Real;
use crate::types::{LatentSeq, Video, VideoShape};

#[derive(Debug, Clone, PartialEq)]
pub enum SynthKind {
    /// Smooth Gaussian blobs moving at `speed` pixels per frame and bouncing
    /// off the frame borders.
    Blobs {
        count: usize,
        speed: f64,
        radius: f64,
        background: f64,
    },
    /// First-order autoregressive Gaussian chunks:
    /// `z^1 ~ N(mu0, sigma_p^2 I)`,
    /// `z^n | z^{n-1} ~ N(mu0 + rho (z^{n-1} - mu0), (1 - rho^2) sigma_p^2 I)`.
    GaussAr1 { rho: f64, sigma_p: f64, mu0: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub shape: VideoShape,
    pub seed: u64,
    pub kind: SynthKind,
}

impl SynthSpec {
    pub fn blobs(shape: VideoShape, seed: u64, count: usize, speed: f64) -> Self {
        Self {
            shape,
            seed,
            kind: SynthKind::Blobs {
                count,
                speed,
                radius: shape.height.min(shape.width) as f64 / 8.0,
                background: 0.2,
            },
        }
    }

    pub fn gauss_ar1(shape: VideoShape, seed: u64, rho: f64, sigma_p: f64, mu0: f64) -> Self {
        Self {
            shape,
            seed,
            kind: SynthKind::GaussAr1 { rho, sigma_p, mu0 },
        }
    }

    fn validate(&self) -> Result<()> {
        let s = self.shape;
        if s.frames == 0 || s.height == 0 || s.width == 0 || s.channels == 0 {
            return Err(Error::Parameter(format!(
                "synthetic shape {s} has a zero dimension"
            )));
        }
        if let SynthKind::GaussAr1 { rho, sigma_p, .. } = self.kind {
            if !(rho.abs() < 1.0) {
                return Err(Error::Parameter(format!(
                    "AR coefficient {rho} must satisfy |rho| < 1"
                )));
            }
            if !(sigma_p > 0.0) {
                return Err(Error::Parameter(format!(
                    "marginal std {sigma_p} must be positive"
                )));
            }
        }
        Ok(())
    }
}

struct Blob {
    pos: [f64; 2],
    vel: [f64; 2],
    sigma: f64,
    amp: Vec<f64>,
}

fn reflect(p: &mut f64, v: &mut f64, hi: f64) {
    if hi <= 0.0 {
        *p = 0.0;
        return;
    }
    // fold the position back into [0, hi], flipping velocity per bounce
    loop {
        if *p < 0.0 {
            *p = -*p;
            *v = -*v;
        } else if *p > hi {
            *p = 2.0 * hi - *p;
            *v = -*v;
        } else {
            break;
        }
    }
}

pub fn synth_blobs<T: Real>(spec: &SynthSpec) -> Result<Video<T>> {
    spec.validate()?;
    let SynthKind::Blobs {
        count,
        speed,
        radius,
        background,
    } = spec.kind
    else {
        return Err(Error::Parameter("synth_blobs needs a blobs spec".into()));
    };
    let s = spec.shape;
    let mut rng = NoiseStream::new("synth:blobs", spec.seed);
    let (h_max, w_max) = ((s.height - 1) as f64, (s.width - 1) as f64);
    let mut blobs: Vec<Blob> = (0..count)
        .map(|_| {
            let angle = rng.uniform_range(0.0, std::f64::consts::TAU);
            Blob {
                pos: [rng.uniform_range(0.0, h_max), rng.uniform_range(0.0, w_max)],
                vel: [speed * angle.sin(), speed * angle.cos()],
                sigma: radius * rng.uniform_range(0.75, 1.25),
                amp: (0..s.channels)
                    .map(|_| rng.uniform_range(0.3, 0.7))
                    .collect(),
            }
        })
        .collect();

    let mut data = Vec::with_capacity(s.len());
    for _ in 0..s.frames {
        for r in 0..s.height {
            for c in 0..s.width {
                for ch in 0..s.channels {
                    let mut v = background;
                    for b in &blobs {
                        let d2 = (r as f64 - b.pos[0]).powi(2) + (c as f64 - b.pos[1]).powi(2);
                        v += b.amp[ch] * (-d2 / (2.0 * b.sigma * b.sigma)).exp();
                    }
                    data.push(T::lit(v.clamp(0.0, 1.0)));
                }
            }
        }
        for b in &mut blobs {
            b.pos[0] += b.vel[0];
            b.pos[1] += b.vel[1];
            let [mut p0, mut p1] = b.pos;
            let [mut v0, mut v1] = b.vel;
            reflect(&mut p0, &mut v0, h_max);
            reflect(&mut p1, &mut v1, w_max);
            b.pos = [p0, p1];
            b.vel = [v0, v1];
        }
    }
    Ok(Video::from_raw(s, data))
}

/// Draws a latent sequence exactly from the AR(1) Gaussian chunk law.
/// `spec.shape.frames` counts latent frames and must be divisible by
/// `chunk_len`.
pub fn synth_gauss_ar1<T: Real>(spec: &SynthSpec, chunk_len: usize) -> Result<LatentSeq<T>> {
    spec.validate()?;
    let SynthKind::GaussAr1 { rho, sigma_p, mu0 } = spec.kind else {
        return Err(Error::Parameter(
            "synth_gauss_ar1 needs a gauss_ar1 spec".into(),
        ));
    };
    if chunk_len == 0 || !spec.shape.frames.is_multiple_of(chunk_len) {
        return Err(Error::Shape(format!(
            "{} latent frames not divisible by chunk length {chunk_len}",
            spec.shape.frames
        )));
    }
    let chunk = spec.shape.with_frames(chunk_len).len();
    let n_chunks = spec.shape.frames / chunk_len;
    let sigma_c = ((1.0 - rho * rho) * sigma_p * sigma_p).sqrt();
    let mut rng = NoiseStream::new("synth:gauss_ar1", spec.seed);
    let mut data: Vec<f64> = Vec::with_capacity(spec.shape.len());
    for n in 0..n_chunks {
        for i in 0..chunk {
            let e = rng.gaussian_scalar();
            let v = if n == 0 {
                mu0 + sigma_p * e
            } else {
                let prev = data[(n - 1) * chunk + i];
                mu0 + rho * (prev - mu0) + sigma_c * e
            };
            data.push(v);
        }
    }
    let tensor = Video::from_raw(spec.shape, data.into_iter().map(T::lit).collect());
    LatentSeq::new(tensor, chunk_len)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corr(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let cov = a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - ma) * (y - mb))
            .sum::<f64>();
        let va = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>();
        let vb = b.iter().map(|y| (y - mb).powi(2)).sum::<f64>();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn blobs_are_deterministic_and_move() {
        let spec = SynthSpec::blobs(VideoShape::new(6, 24, 24, 3), 3, 3, 1.5);
        let a: Video<f64> = synth_blobs(&spec).unwrap();
        let b: Video<f64> = synth_blobs(&spec).unwrap();
        assert_eq!(a, b);
        assert!(a.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        for t in 1..a.frames() {
            let mad: f64 = a
                .frame(t)
                .iter()
                .zip(a.frame(t - 1))
                .map(|(x, y)| (x - y).abs())
                .sum::<f64>()
                / a.frame(t).len() as f64;
            assert!(mad > 0.0);
        }
    }

    #[test]
    fn zero_blobs_is_background() {
        let spec = SynthSpec::blobs(VideoShape::new(2, 8, 8, 1), 3, 0, 1.0);
        let v: Video<f64> = synth_blobs(&spec).unwrap();
        assert!(v.data().iter().all(|&x| x == 0.2));
    }

    #[test]
    fn ar1_rejects_unit_root() {
        let spec = SynthSpec::gauss_ar1(VideoShape::new(3, 2, 2, 1), 0, 1.0, 1.0, 0.0);
        assert!(synth_gauss_ar1::<f64>(&spec, 3).is_err());
    }

    // 10^5 coordinates per chunk, two chunks.
    fn pair(rho: f64, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let spec = SynthSpec::gauss_ar1(VideoShape::new(2, 250, 400, 1), seed, rho, 1.0, 0.0);
        let z: LatentSeq<f64> = synth_gauss_ar1(&spec, 1).unwrap();
        (z.chunk_data(1).to_vec(), z.chunk_data(2).to_vec())
    }

    #[test]
    fn ar1_independent_when_rho_zero() {
        let (a, b) = pair(0.0, 1);
        assert!(corr(&a, &b).abs() < 0.02);
    }

    #[test]
    fn ar1_lag_one_correlation() {
        let (a, b) = pair(0.9, 2);
        assert!((corr(&a, &b) - 0.9).abs() < 0.02);
    }

    #[test]
    fn ar1_marginal_variance() {
        for rho in [0.0, 0.5, 0.9, -0.7] {
            let (_, b) = pair(rho, 3);
            let n = b.len() as f64;
            let m = b.iter().sum::<f64>() / n;
            let var = b.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
            assert!((var - 1.0).abs() < 0.03, "rho {rho}: var {var}");
        }
    }
}
