//! Fidelity metrics and structural efficiency accounting.

use std::path::Path;

use serde::Serialize;

use crate::codec::PassBucket;
use crate::error::{Error, Result};
use crate::sampler::RunTrace;
use crate::scalar::Real;
use crate::types::Video;

pub const PSNR_CAP: f64 = 99.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

fn same_shape<T: Real>(x: &Video<T>, reference: &Video<T>) -> Result<()> {
    if x.shape() != reference.shape() {
        return Err(Error::Shape(format!(
            "comparing {} against {}",
            x.shape(),
            reference.shape()
        )));
    }
    Ok(())
}

/// `10 log10(1 / MSE)` for unit peak, capped at 99 dB when `MSE < 1e-10`.
pub fn psnr<T: Real>(x: &Video<T>, reference: &Video<T>) -> Result<f64> {
    same_shape(x, reference)?;
    let n = x.data().len().max(1) as f64;
    let mse = x
        .data()
        .iter()
        .zip(reference.data())
        .map(|(&a, &b)| {
            let d = a.as_f64() - b.as_f64();
            d * d
        })
        .sum::<f64>()
        / n;
    if mse < 1e-10 {
        Ok(PSNR_CAP)
    } else {
        Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP))
    }
}

/// Per-frame luminance planes: single channel as is, otherwise channel mean.
fn gray_frames<T: Real>(v: &Video<T>) -> Vec<Vec<f64>> {
    let c = v.channels();
    (0..v.frames())
        .map(|t| {
            v.frame(t)
                .chunks_exact(c)
                .map(|px| px.iter().map(|s| s.as_f64()).sum::<f64>() / c as f64)
                .collect()
        })
        .collect()
}

fn gaussian_window() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-((i as f64 - r).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Separable "valid" filtering of an `h x w` plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, g: &[f64]) -> Vec<f64> {
    let k = g.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * ow];
    for r in 0..h {
        for c in 0..ow {
            rows[r * ow + c] = (0..k).map(|j| g[j] * plane[r * w + c + j]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = (0..k).map(|i| g[i] * rows[(r + i) * ow + c]).sum();
        }
    }
    out
}

fn ssim_plane(a: &[f64], b: &[f64], h: usize, w: usize, g: &[f64]) -> f64 {
    let (c1, c2) = ((K1 * 1.0).powi(2), (K2 * 1.0).powi(2));
    let prod = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(x, y)| x * y).collect::<Vec<_>>();
    let mu_a = filter_valid(a, h, w, g);
    let mu_b = filter_valid(b, h, w, g);
    let e_aa = filter_valid(&prod(a, a), h, w, g);
    let e_bb = filter_valid(&prod(b, b), h, w, g);
    let e_ab = filter_valid(&prod(a, b), h, w, g);
    let n = mu_a.len();
    let mut total = 0.0;
    for i in 0..n {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = e_aa[i] - ma * ma;
        let vb = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        total +=
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    total / n as f64
}

/// Mean SSIM over frames (11x11 Gaussian window, sigma 1.5, unit dynamic
/// range, valid region only). Colour frames are reduced to the channel mean.
pub fn ssim<T: Real>(x: &Video<T>, reference: &Video<T>) -> Result<f64> {
    same_shape(x, reference)?;
    let (h, w) = (x.height(), x.width());
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::Shape(format!(
            "{h}x{w} frames are smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"
        )));
    }
    if x.frames() == 0 {
        return Err(Error::Shape("no frames to compare".into()));
    }
    let g = gaussian_window();
    let fa = gray_frames(x);
    let fb = gray_frames(reference);
    let total: f64 = fa
        .iter()
        .zip(&fb)
        .map(|(a, b)| ssim_plane(a, b, h, w, &g))
        .sum();
    Ok(total / fa.len() as f64)
}

/// Structural efficiency figures for one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Efficiency {
    pub mode: String,
    pub chunks: usize,
    pub steps: usize,
    /// Reverse steps completed before the first display.
    pub latency_steps: usize,
    pub guidance_calls: usize,
    pub prerestore_passes: u64,
    pub guidance_passes: u64,
    pub display_passes: u64,
    pub total_reverse_steps: usize,
    /// Displayed pixel frames per reverse step.
    pub frames_per_step: f64,
    pub wall_nanos: u128,
}

pub fn efficiency_report(traces: &[RunTrace]) -> Result<Vec<Efficiency>> {
    if traces.is_empty() {
        return Err(Error::IncompleteTrace("no traces".into()));
    }
    traces
        .iter()
        .map(|tr| {
            if tr.num_chunks == 0 {
                return Err(Error::IncompleteTrace("trace has no chunks".into()));
            }
            if tr.display_order().len() != tr.num_chunks {
                return Err(Error::IncompleteTrace(format!(
                    "{} of {} chunks displayed",
                    tr.display_order().len(),
                    tr.num_chunks
                )));
            }
            let latency = tr.first_display_step().expect("chunks were displayed");
            let c = tr.counters();
            let steps = tr.total_reverse_steps();
            Ok(Efficiency {
                mode: tr.mode.to_string(),
                chunks: tr.num_chunks,
                steps: tr.steps,
                latency_steps: latency,
                guidance_calls: tr.guidance_calls(),
                prerestore_passes: c.passes_in(PassBucket::PreRestore),
                guidance_passes: c.passes_in(PassBucket::Guidance),
                display_passes: c.passes_in(PassBucket::Display),
                total_reverse_steps: steps,
                frames_per_step: tr.pixel_frames as f64 / steps.max(1) as f64,
                wall_nanos: tr.events.iter().map(|e| e.wall_nanos).sum(),
            })
        })
        .collect()
}

/// One line of `metrics.csv`. Column order is the field order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub video: String,
    pub task: String,
    pub mode: String,
    pub psnr_db: f64,
    pub ssim: Option<f64>,
    pub latency_steps: usize,
    pub guidance_calls: usize,
    pub prerestore_passes: u64,
    pub guidance_passes: u64,
    pub display_passes: u64,
    pub total_reverse_steps: usize,
    pub wall_nanos: u128,
    pub frames_per_step: f64,
}

impl MetricsRow {
    /// `ssim` is left empty when frames are smaller than the window.
    pub fn new<T: Real>(
        video: &str,
        task: &str,
        restored: &Video<T>,
        reference: &Video<T>,
        trace: &RunTrace,
    ) -> Result<Self> {
        let eff = efficiency_report(std::slice::from_ref(trace))?.remove(0);
        let ssim = match ssim(restored, reference) {
            Ok(s) => Some(s),
            Err(Error::Shape(_)) if restored.shape() == reference.shape() => None,
            Err(e) => return Err(e),
        };
        Ok(Self {
            video: video.to_string(),
            task: task.to_string(),
            mode: eff.mode,
            psnr_db: psnr(restored, reference)?,
            ssim,
            latency_steps: eff.latency_steps,
            guidance_calls: eff.guidance_calls,
            prerestore_passes: eff.prerestore_passes,
            guidance_passes: eff.guidance_passes,
            display_passes: eff.display_passes,
            total_reverse_steps: eff.total_reverse_steps,
            wall_nanos: eff.wall_nanos,
            frames_per_step: eff.frames_per_step,
        })
    }
}

pub fn write_metrics_csv(rows: &[MetricsRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use crate::noise::NoiseStream;
    use crate::types::VideoShape;

    fn random(shape: VideoShape, seed: u64) -> Video<f64> {
        Video::new(
            shape,
            NoiseStream::new("metric", seed)
                .gaussian::<f64>(shape.len())
                .iter()
                .map(|v| (0.5 + 0.2 * v).clamp(0.0, 1.0))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn psnr_cases() {
        let s = VideoShape::new(2, 4, 4, 1);
        let x = random(s, 1);
        assert_eq!(psnr(&x, &x).unwrap(), 99.0);
        let off = x.map(|v| v + 0.1);
        assert!((psnr(&off, &x).unwrap() - 20.0).abs() < 1e-9);
        let off = x.map(|v| v + 0.01);
        assert!((psnr(&off, &x).unwrap() - 40.0).abs() < 1e-9);
        assert!(psnr(&x, &random(VideoShape::new(1, 4, 4, 1), 0)).is_err());
    }

    /// Direct per-window evaluation with two-pass statistics.
    fn ssim_direct(a: &[f64], b: &[f64], h: usize, w: usize) -> f64 {
        let r = 5i64;
        let mut wts = [[0.0; 11]; 11];
        let mut s = 0.0;
        for i in 0..11 {
            for j in 0..11 {
                let d2 = ((i as i64 - r).pow(2) + (j as i64 - r).pow(2)) as f64;
                wts[i][j] = (-d2 / 4.5).exp();
                s += wts[i][j];
            }
        }
        let (c1, c2) = (1e-4, 9e-4);
        let mut total = 0.0;
        let mut count = 0usize;
        for r0 in 0..=h - 11 {
            for c0 in 0..=w - 11 {
                let at = |p: &[f64], i: usize, j: usize| p[(r0 + i) * w + c0 + j];
                let (mut ma, mut mb) = (0.0, 0.0);
                for i in 0..11 {
                    for j in 0..11 {
                        ma += wts[i][j] / s * at(a, i, j);
                        mb += wts[i][j] / s * at(b, i, j);
                    }
                }
                let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
                for i in 0..11 {
                    for j in 0..11 {
                        let q = wts[i][j] / s;
                        va += q * (at(a, i, j) - ma).powi(2);
                        vb += q * (at(b, i, j) - mb).powi(2);
                        cov += q * (at(a, i, j) - ma) * (at(b, i, j) - mb);
                    }
                }
                total += (2.0 * ma * mb + c1) * (2.0 * cov + c2)
                    / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1;
            }
        }
        total / count as f64
    }

    #[test]
    fn ssim_matches_direct_formula() {
        let s = VideoShape::new(5, 32, 32, 1);
        let x = random(s, 2);
        let y = random(s, 3).map(|v| 0.5 * v);
        let y = Video::new(
            s,
            x.data()
                .iter()
                .zip(y.data())
                .map(|(a, b)| 0.6 * a + b)
                .collect(),
        )
        .unwrap();
        let fast = ssim(&x, &y).unwrap();
        let direct: f64 = (0..5)
            .map(|t| ssim_direct(x.frame(t), y.frame(t), 32, 32))
            .sum::<f64>()
            / 5.0;
        assert!((fast - direct).abs() < 1e-6, "{fast} vs {direct}");
    }

    #[test]
    fn ssim_identity_symmetry_and_mismatch() {
        let s = VideoShape::new(2, 16, 16, 3);
        let x = random(s, 4);
        assert_eq!(ssim(&x, &x).unwrap(), 1.0);
        let inv = x.map(|v| 1.0 - v);
        let a = ssim(&x, &inv).unwrap();
        assert!(a < 1.0);
        assert_eq!(a, ssim(&inv, &x).unwrap());
        assert!(ssim(
            &random(VideoShape::new(1, 8, 8, 1), 0),
            &random(VideoShape::new(1, 8, 8, 1), 1)
        )
        .is_err());
    }

    #[test]
    fn empty_trace_list_is_rejected() {
        assert!(matches!(
            efficiency_report(&[]),
            Err(Error::IncompleteTrace(_))
        ));
    }
}
