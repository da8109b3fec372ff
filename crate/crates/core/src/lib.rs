//! Core engine for a small chest X-ray classifier built around the PEPX
//! (projection-expansion-projection-extension) convolution pattern and
//! hub-style long-range connectivity.
//!
//! The crate is organised as:
//!
//! * [`tensor`] — an f64 NCHW tensor type, the layer primitives, and a
//!   reverse-mode autodiff tape with a finite-difference gradient checker.
//! * [`arch`] — the architecture graph: PEPX blocks, hub nodes, the full
//!   network builder, forward evaluation, and exact parameter/MAC counting.
//! * [`data`] — dataset manifests (multi-source merge, patient-level splits),
//!   image augmentation, bilinear resizing, and class-rebalanced batching.
//! * [`optim`] — Adam, the reduce-on-plateau learning-rate policy, parameter
//!   initialisation, and the deterministic training loop.
//! * [`eval`] — confusion matrices, per-class sensitivity/PPV, accuracy, and
//!   the two COVID-19 design-requirement gates.
//! * [`explain`] — occlusion-based critical-factor attribution producing
//!   interpretation masks over input images.
//!
//! Everything here is pure computation over owned buffers; file formats,
//! image codecs and the command-line interface live in the companion
//! `cxrnet` crate. The crate builds without `std` (with `alloc`) when the
//! default `std` feature is disabled.

#![cfg_attr(not(feature = "std"), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod arch;
pub mod data;
pub mod error;
pub mod eval;
pub mod explain;
mod math;
pub mod optim;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{ConvSpec, Tensor};
