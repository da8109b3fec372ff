//! Reference kernels and synthetic fixtures shared by the test suites.
//!
//! The convolution and dense references here are deliberately written as
//! plain nested loops over the mathematical definition, independent of the
//! optimised paths in `cxrnet-core`, and they count every multiplication
//! they execute so complexity counters can be checked exactly.

pub mod naive;
pub mod synth;

pub use naive::{naive_conv2d, naive_dense, naive_graph_forward};
pub use synth::{synth_dataset, synth_image, SynthConfig};
