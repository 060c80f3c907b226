//! Spatial resampling kernels used by the operators, the codec and the
//! pre-restoration lift.

use crate::scalar::Real;
use crate::types::{Video, VideoShape};

/// Non-overlapping `f x f` box mean of every frame. `H` and `W` must be
/// divisible by `f`.
pub fn box_downsample<T: Real>(x: &Video<T>, f: usize) -> Video<T> {
    let s = x.shape();
    let out_shape = VideoShape::new(s.frames, s.height / f, s.width / f, s.channels);
    let scale = T::one() / T::from_usize_exact(f * f);
    let mut out = vec![T::zero(); out_shape.len()];
    for t in 0..s.frames {
        for r in 0..s.height {
            for c in 0..s.width {
                for ch in 0..s.channels {
                    out[out_shape.index(t, r / f, c / f, ch)] += x.at(t, r, c, ch);
                }
            }
        }
    }
    for v in &mut out {
        *v *= scale;
    }
    Video::from_raw(out_shape, out)
}

/// Transpose of [`box_downsample`]: each sample is spread over its block with
/// weight `1/f^2`.
pub fn box_downsample_adjoint<T: Real>(u: &Video<T>, f: usize) -> Video<T> {
    let s = u.shape();
    let out_shape = VideoShape::new(s.frames, s.height * f, s.width * f, s.channels);
    let scale = T::one() / T::from_usize_exact(f * f);
    Video::from_fn(out_shape, |t, r, c, ch| u.at(t, r / f, c / f, ch) * scale)
}

/// Source taps for half-pixel-centred bilinear upsampling of one axis.
fn bilinear_taps<T: Real>(len: usize, f: usize) -> Vec<(usize, usize, T)> {
    let ff = T::from_usize_exact(f);
    let half = T::lit(0.5);
    (0..len * f)
        .map(|i| {
            let src = ((T::from_usize_exact(i) + half) / ff - half).max(T::zero());
            let i0 = src.floor().to_usize().unwrap_or(0).min(len - 1);
            let i1 = (i0 + 1).min(len - 1);
            let w = src - T::from_usize_exact(i0);
            (i0, i1, w)
        })
        .collect()
}

/// Bilinear spatial upsampling by an integer factor (half-pixel centres,
/// edge clamped). Constant frames stay constant.
pub fn bilinear_upsample<T: Real>(x: &Video<T>, f: usize) -> Video<T> {
    let s = x.shape();
    let rows = bilinear_taps::<T>(s.height, f);
    let cols = bilinear_taps::<T>(s.width, f);
    let out_shape = VideoShape::new(s.frames, s.height * f, s.width * f, s.channels);
    Video::from_fn(out_shape, |t, r, c, ch| {
        let (r0, r1, wr) = rows[r];
        let (c0, c1, wc) = cols[c];
        let top = x.at(t, r0, c0, ch) * (T::one() - wc) + x.at(t, r0, c1, ch) * wc;
        let bot = x.at(t, r1, c0, ch) * (T::one() - wc) + x.at(t, r1, c1, ch) * wc;
        top * (T::one() - wr) + bot * wr
    })
}
