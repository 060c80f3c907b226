use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::noise::NoiseStream;
use crate::scalar::Real;
use crate::types::VideoShape;

use super::{ContextCache, Retention, VectorField};

const MAGIC: &str = "LPRM1";
pub const MAX_PARAMS: usize = 10_000;

/// One conditional flow-matching sample: `z_t = (1 - t) z_0 + t z_1` with
/// regression target `z_1 - z_0`.
#[derive(Debug, Clone)]
pub struct CfmExample<T: Real = f64> {
    pub z_t: Vec<T>,
    pub t: T,
    pub ctx: ContextCache<T>,
    pub target: Vec<T>,
}

impl<T: Real> CfmExample<T> {
    /// Draws `t ~ U(0, 1]` and then `z_1 ~ N(0, I)` from `stream`.
    pub fn draw(z0: &[T], ctx: ContextCache<T>, stream: &mut NoiseStream) -> Self {
        let t = T::lit(1.0 - stream.uniform());
        let z1: Vec<T> = stream.gaussian(z0.len());
        let z_t = z0
            .iter()
            .zip(&z1)
            .map(|(&a, &b)| (T::one() - t) * a + t * b)
            .collect();
        let target = z0.iter().zip(&z1).map(|(&a, &b)| b - a).collect();
        Self {
            z_t,
            t,
            ctx,
            target,
        }
    }
}

/// Two-layer tanh network `v = W2 tanh(W1 [z_t; c; t] + b1) + b2`, where `c`
/// is the mean of all finalized chunks (zeros for the first chunk).
#[derive(Debug, Clone, PartialEq)]
pub struct LearnedPrior {
    shape: VideoShape,
    hidden: usize,
    params: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            batch_size: 32,
            epochs: 20,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean minibatch loss per epoch.
    pub loss_history: Vec<f64>,
}

fn param_count(d: usize, hidden: usize) -> usize {
    hidden * (2 * d + 1) + hidden + d * hidden + d
}

impl LearnedPrior {
    /// Randomly initialized network for chunks of `shape`.
    pub fn new(shape: VideoShape, hidden: usize, seed: u64) -> Result<Self> {
        let d = shape.len();
        if d == 0 || hidden == 0 {
            return Err(Error::Parameter("learned prior needs nonzero sizes".into()));
        }
        let n = param_count(d, hidden);
        if n > MAX_PARAMS {
            return Err(Error::Parameter(format!(
                "{n} parameters for chunk {shape} and width {hidden} (limit {MAX_PARAMS})"
            )));
        }
        let mut rng = NoiseStream::new("learned:init", seed);
        let s1 = 1.0 / ((2 * d + 1) as f64).sqrt();
        let s2 = 1.0 / (hidden as f64).sqrt();
        let mut params = Vec::with_capacity(n);
        params.extend(
            rng.gaussian::<f64>(hidden * (2 * d + 1))
                .iter()
                .map(|w| w * s1),
        );
        params.extend(std::iter::repeat_n(0.0, hidden));
        params.extend(rng.gaussian::<f64>(d * hidden).iter().map(|w| w * s2));
        params.extend(std::iter::repeat_n(0.0, d));
        Ok(Self {
            shape,
            hidden,
            params,
        })
    }

    pub fn from_params(shape: VideoShape, hidden: usize, params: Vec<f64>) -> Result<Self> {
        let n = param_count(shape.len(), hidden);
        if params.len() != n {
            return Err(Error::Shape(format!(
                "{} parameters given, network needs {n}",
                params.len()
            )));
        }
        if n > MAX_PARAMS {
            return Err(Error::Parameter(format!(
                "{n} parameters exceed {MAX_PARAMS}"
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Parameter("non-finite parameter".into()));
        }
        Ok(Self {
            shape,
            hidden,
            params,
        })
    }

    pub fn shape(&self) -> VideoShape {
        self.shape
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn dims(&self) -> (usize, usize, usize) {
        let d = self.shape.len();
        (d, self.hidden, 2 * d + 1)
    }

    fn input<T: Real>(&self, z_t: &[T], t: T, ctx: &ContextCache<T>) -> Vec<f64> {
        let d = self.shape.len();
        let mut x: Vec<f64> = z_t.iter().map(|v| v.as_f64()).collect();
        let mut c = vec![0.0; d];
        if !ctx.entries().is_empty() {
            for e in ctx.entries() {
                for (ci, ei) in c.iter_mut().zip(e) {
                    *ci += ei.as_f64();
                }
            }
            let k = ctx.entries().len() as f64;
            c.iter_mut().for_each(|ci| *ci /= k);
        }
        x.extend(c);
        x.push(t.as_f64());
        x
    }

    /// Returns (hidden activations, output).
    fn forward(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (d, h, n_in) = self.dims();
        let (w1, rest) = self.params.split_at(h * n_in);
        let (b1, rest) = rest.split_at(h);
        let (w2, b2) = rest.split_at(d * h);
        let act: Vec<f64> = (0..h)
            .map(|j| {
                let row = &w1[j * n_in..(j + 1) * n_in];
                (row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + b1[j]).tanh()
            })
            .collect();
        let out = (0..d)
            .map(|i| {
                let row = &w2[i * h..(i + 1) * h];
                row.iter().zip(&act).map(|(w, a)| w * a).sum::<f64>() + b2[i]
            })
            .collect();
        (act, out)
    }

    /// Mean over `batch` of `||v - target||^2` and its gradient in the
    /// parameters.
    pub fn loss_and_grad(&self, batch: &[CfmExample<f64>]) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::Parameter("empty CFM batch".into()));
        }
        let (d, h, n_in) = self.dims();
        let inv_b = 1.0 / batch.len() as f64;
        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        let w2 = &self.params[h * n_in + h..h * n_in + h + d * h];
        for ex in batch {
            if ex.z_t.len() != d || ex.target.len() != d {
                return Err(Error::Shape(format!(
                    "example of {} samples, prior expects {d}",
                    ex.z_t.len()
                )));
            }
            let x = self.input(&ex.z_t, ex.t, &ex.ctx);
            let (act, out) = self.forward(&x);
            let g_out: Vec<f64> = out
                .iter()
                .zip(&ex.target)
                .map(|(o, y)| {
                    loss += (o - y) * (o - y) * inv_b;
                    2.0 * (o - y) * inv_b
                })
                .collect();
            let (gw1, rest) = grad.split_at_mut(h * n_in);
            let (gb1, rest) = rest.split_at_mut(h);
            let (gw2, gb2) = rest.split_at_mut(d * h);
            let mut g_act = vec![0.0; h];
            for i in 0..d {
                gb2[i] += g_out[i];
                for j in 0..h {
                    gw2[i * h + j] += g_out[i] * act[j];
                    g_act[j] += w2[i * h + j] * g_out[i];
                }
            }
            for j in 0..h {
                let ga = g_act[j] * (1.0 - act[j] * act[j]);
                gb1[j] += ga;
                for (g, xi) in gw1[j * n_in..(j + 1) * n_in].iter_mut().zip(&x) {
                    *g += ga * xi;
                }
            }
        }
        Ok((loss, grad))
    }

    /// Plain minibatch gradient descent on the CFM loss. Each epoch shuffles
    /// the dataset and draws fresh `(t, z_1)` for every example.
    pub fn train(
        &mut self,
        data: &[(Vec<f64>, ContextCache<f64>)],
        cfg: &TrainConfig,
    ) -> Result<TrainReport> {
        if data.is_empty() {
            return Err(Error::Training("empty training set".into()));
        }
        if cfg.batch_size == 0 || !(cfg.lr >= 0.0) {
            return Err(Error::Parameter(
                "batch size must be positive and lr nonnegative".into(),
            ));
        }
        let mut rng = NoiseStream::new("learned:train", cfg.seed);
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut history = Vec::with_capacity(cfg.epochs);
        for epoch in 0..cfg.epochs {
            for i in (1..order.len()).rev() {
                order.swap(i, rng.index(i + 1));
            }
            let mut total = 0.0;
            let mut batches = 0usize;
            for idx in order.chunks(cfg.batch_size) {
                let batch: Vec<CfmExample<f64>> = idx
                    .iter()
                    .map(|&i| CfmExample::draw(&data[i].0, data[i].1.clone(), &mut rng))
                    .collect();
                let (loss, grad) = self.loss_and_grad(&batch)?;
                if !loss.is_finite() {
                    return Err(Error::Training(format!("non-finite loss in epoch {epoch}")));
                }
                if cfg.lr != 0.0 {
                    for (p, g) in self.params.iter_mut().zip(&grad) {
                        *p -= cfg.lr * g;
                    }
                }
                total += loss;
                batches += 1;
            }
            history.push(total / batches as f64);
        }
        if self.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Training("parameters diverged".into()));
        }
        Ok(TrainReport {
            loss_history: history,
        })
    }
}

impl<T: Real> VectorField<T> for LearnedPrior {
    fn chunk_shape(&self) -> VideoShape {
        self.shape
    }

    fn retention(&self) -> Retention {
        Retention::All
    }

    fn velocity(&self, z_t: &[T], t: T, ctx: &ContextCache<T>) -> Result<Vec<T>> {
        if t <= T::zero() {
            return Err(Error::SingularTimestep);
        }
        if z_t.len() != self.shape.len() {
            return Err(Error::Shape(format!(
                "chunk of {} samples, prior expects {}",
                z_t.len(),
                self.shape.len()
            )));
        }
        let (_, out) = self.forward(&self.input(z_t, t, ctx));
        Ok(out.into_iter().map(T::lit).collect())
    }
}

/// Writes the header `LPRM1\n<frames> <h> <w> <c> <hidden>\n` followed by the
/// parameters as little-endian `f32`.
pub fn write_params(prior: &LearnedPrior, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let s = prior.shape;
    let mut buf = Vec::new();
    write!(
        buf,
        "{MAGIC}\n{} {} {} {} {}\n",
        s.frames, s.height, s.width, s.channels, prior.hidden
    )
    .expect("write to vec");
    for &p in &prior.params {
        buf.extend_from_slice(&(p as f32).to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_params(path: impl AsRef<Path>) -> Result<LearnedPrior> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut lines = bytes.splitn(3, |&b| b == b'\n');
    let magic = lines.next().unwrap_or_default();
    if magic != MAGIC.as_bytes() {
        return Err(Error::Format("bad parameter file magic".into()));
    }
    let header = lines
        .next()
        .and_then(|h| std::str::from_utf8(h).ok())
        .ok_or_else(|| Error::Format("missing parameter header".into()))?;
    let payload = lines
        .next()
        .ok_or_else(|| Error::Format("missing parameter payload".into()))?;
    let dims: Vec<usize> = header
        .split_ascii_whitespace()
        .map(|f| {
            f.parse()
                .map_err(|_| Error::Format(format!("bad header field '{f}'")))
        })
        .collect::<Result<_>>()?;
    let [frames, h, w, c, hidden] = dims[..] else {
        return Err(Error::Format(format!("bad parameter header '{header}'")));
    };
    let shape = VideoShape::new(frames, h, w, c);
    let expected = shape
        .checked_len()
        .map(|d| 4 * param_count(d, hidden))
        .filter(|_| hidden <= MAX_PARAMS)
        .ok_or_else(|| Error::Format("parameter header overflows".into()))?;
    if payload.len() < expected {
        return Err(Error::Truncated {
            expected,
            found: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(Error::Format("trailing bytes after parameters".into()));
    }
    let params = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    LearnedPrior::from_params(shape, hidden, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_io::{synth_gauss_ar1, SynthSpec};
    use crate::prior::cfm_loss;
    use crate::types::LatentSeq;

    fn shape() -> VideoShape {
        VideoShape::new(1, 3, 3, 1)
    }

    fn dataset(seqs: usize, seed: u64) -> Vec<(Vec<f64>, ContextCache<f64>)> {
        let mut out = Vec::new();
        for s in 0..seqs {
            let spec = SynthSpec::gauss_ar1(
                VideoShape::new(4, 3, 3, 1),
                seed * 1000 + s as u64,
                0.9,
                0.5,
                0.0,
            );
            let z: LatentSeq<f64> = synth_gauss_ar1(&spec, 1).unwrap();
            let mut ctx = ContextCache::empty(Retention::All);
            for n in 1..=z.num_chunks() {
                out.push((z.chunk_data(n).to_vec(), ctx.clone()));
                ctx = ctx
                    .push(
                        &crate::types::Chunk::new(n, 0.0, shape(), z.chunk_data(n).to_vec())
                            .unwrap(),
                    )
                    .unwrap();
            }
        }
        out
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let prior = LearnedPrior::new(shape(), 8, 3).unwrap();
        let data = dataset(2, 1);
        let mut rng = NoiseStream::new("ex", 0);
        let batch: Vec<_> = data
            .iter()
            .map(|(z, c)| CfmExample::draw(z, c.clone(), &mut rng))
            .collect();
        let (_, grad) = prior.loss_and_grad(&batch).unwrap();
        let mut pick = NoiseStream::new("pick", 0);
        let h = 1e-5;
        for _ in 0..50 {
            let i = pick.index(prior.num_params());
            let mut p = prior.params.clone();
            p[i] += h;
            let up = LearnedPrior::from_params(shape(), 8, p.clone()).unwrap();
            p[i] -= 2.0 * h;
            let dn = LearnedPrior::from_params(shape(), 8, p).unwrap();
            let fd = (up.loss_and_grad(&batch).unwrap().0 - dn.loss_and_grad(&batch).unwrap().0)
                / (2.0 * h);
            let rel = (fd - grad[i]).abs() / grad[i].abs().max(fd.abs()).max(1e-6);
            assert!(rel < 1e-4, "param {i}: analytic {} fd {fd}", grad[i]);
        }
    }

    #[test]
    fn training_reduces_loss() {
        let data = dataset(40, 2);
        let mut prior = LearnedPrior::new(shape(), 16, 5).unwrap();
        let before = cfm_loss(&prior, &data, &mut NoiseStream::new("eval", 9)).unwrap();
        let cfg = TrainConfig {
            lr: 0.02,
            batch_size: 16,
            epochs: 30,
            seed: 1,
        };
        let report = prior.train(&data, &cfg).unwrap();
        assert_eq!(report.loss_history.len(), 30);
        let after = cfm_loss(&prior, &data, &mut NoiseStream::new("eval", 9)).unwrap();
        assert!(after < before, "{after} >= {before}");
    }

    #[test]
    fn zero_learning_rate_keeps_params() {
        let data = dataset(4, 3);
        let mut prior = LearnedPrior::new(shape(), 8, 5).unwrap();
        let before = prior.params.clone();
        let cfg = TrainConfig {
            lr: 0.0,
            batch_size: 4,
            epochs: 3,
            seed: 1,
        };
        prior.train(&data, &cfg).unwrap();
        assert_eq!(prior.params, before);
    }

    #[test]
    fn training_is_deterministic() {
        let data = dataset(8, 4);
        let cfg = TrainConfig {
            epochs: 3,
            ..TrainConfig::default()
        };
        let mut a = LearnedPrior::new(shape(), 8, 5).unwrap();
        let mut b = a.clone();
        a.train(&data, &cfg).unwrap();
        b.train(&data, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn held_out_denoising_improves() {
        let train = dataset(60, 5);
        let held = dataset(20, 6);
        let mut prior = LearnedPrior::new(shape(), 16, 7).unwrap();
        let mse = |p: &LearnedPrior| {
            let mut rng = NoiseStream::new("held", 0);
            let mut total = 0.0;
            for (z0, ctx) in &held {
                let ex = CfmExample::draw(z0, ctx.clone(), &mut rng);
                let est = p.denoise(&ex.z_t, ex.t, &ex.ctx).unwrap();
                total += est
                    .iter()
                    .zip(z0)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>();
            }
            total / held.len() as f64
        };
        let before = mse(&prior);
        let cfg = TrainConfig {
            lr: 0.02,
            batch_size: 16,
            epochs: 40,
            seed: 2,
        };
        prior.train(&train, &cfg).unwrap();
        assert!(mse(&prior) < before);
    }

    #[test]
    fn context_mean_and_retention() {
        let prior = LearnedPrior::new(shape(), 4, 1).unwrap();
        let data = dataset(1, 7);
        assert_eq!(data[3].1.entries().len(), 3);
        let v: Vec<f64> = prior.velocity(&data[3].0, 0.5, &data[3].1).unwrap();
        assert_eq!(v.len(), 9);
        assert!(matches!(
            prior.velocity(&data[3].0, 0.0, &data[3].1),
            Err(Error::SingularTimestep)
        ));
    }

    #[test]
    fn param_size_limit() {
        assert!(LearnedPrior::new(VideoShape::new(3, 32, 32, 1), 4, 0).is_err());
    }

    #[test]
    fn params_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.lprm");
        let prior = LearnedPrior::new(shape(), 5, 2).unwrap();
        write_params(&prior, &path).unwrap();
        let back = read_params(&path).unwrap();
        assert_eq!(back.hidden(), 5);
        for (a, b) in back.params().iter().zip(prior.params()) {
            assert_eq!(*a, *b as f32 as f64);
        }
        let bytes = fs::read(&path).unwrap();
        assert!(bytes.starts_with(b"LPRM1\n1 3 3 1 5\n"));
        fs::write(&path, &bytes[..bytes.len() - 2]).unwrap();
        assert!(matches!(read_params(&path), Err(Error::Truncated { .. })));
    }
}
