//! Complex linear canonical transformations at the quantum level.
//!
//! The crate is organised bottom-up:
//!
//! * [`symplectic_core`]: exact matrix arithmetic (Möbius action, transport
//!   matrices, extended phase-space flow).
//! * [`hilbert_grid`]: uniform spatial grids, wavefunctions, FFT, dense
//!   operators and Gaussian fitting.
//! * [`coherent`]: coherent states, closed-form overlaps, complex Lagrangians.
//! * [`metaplectic`]: integral kernels of `U(S)` for complex `S` and the
//!   convention auditor.
//! * [`symbols`]: symbol fields, reparametrization, Weyl symbols, push-forward
//!   and twisted convolution.
//! * [`quantize`]: Töplitz and off-diagonal Töplitz quantization, the
//!   conjugation oracle and the off-diagonal representation builder.
//! * [`tables`]: the worked examples recomputed beside their printed values.

pub mod coherent;
pub mod error;
pub mod gauss;
pub mod hilbert_grid;
pub mod metaplectic;
pub mod quantize;
pub mod report;
pub mod symbols;
pub mod symplectic_core;
pub mod tables;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;

/// The imaginary unit.
pub const I: C64 = C64::new(0.0, 1.0);

/// Shorthand constructor for a complex number.
#[inline]
pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}
