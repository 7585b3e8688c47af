//! Winograd F(2x2,3x3) convolution with uniform linear quantization applied
//! in the Winograd domain.
//!
//! The crate provides four convolution engines over NHWC tensors:
//!
//! - [`engines::direct_conv`]: the brute-force reference.
//! - [`engines::quantized_direct_conv`]: direct correlation on quantized codes.
//! - [`engines::winograd_conv_fp`]: full-precision Winograd.
//! - [`engines::lance_faithful`] and [`engines::lance_gemm`]: quantized
//!   Winograd, either tile by tile or as one integer GEMM per Winograd-domain
//!   position.
//!
//! Multiplications in the Hadamard/GEMM stage are counted per thread, see
//! [`lowpgemm::multiply_counter`].

pub mod bench;
pub mod cli;
pub mod engines;
pub mod error;
pub mod lowpgemm;
pub mod metrics;
pub mod quant;
pub mod synthetic;
pub mod tensor;
pub mod verify;
pub mod winograd;

pub use engines::{ConvSpec, Engine, LanceConfig, LanceMode};
pub use error::{Error, Result};
pub use quant::{Granularity, QuantParams};
pub use tensor::{FilterBank, Tensor4, TileSet};
pub use winograd::WinogradBasis;
