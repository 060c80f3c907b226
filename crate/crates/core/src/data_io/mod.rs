//! Synthetic clip generation and bit-exact file formats.

mod files;
mod synth;

pub use files::{export_frames, quantize_sample, read_vraw, write_vraw};
pub use synth::{synth_blobs, synth_gauss_ar1, SynthKind, SynthSpec};
