//! Convolution engines.
//!
//! Every engine computes a unit-stride, zero-padded 2-D correlation over NHWC
//! input and KRSC filters. Channel contributions are accumulated in ascending
//! channel order regardless of how work is split across threads, so outputs
//! are bitwise reproducible.

mod direct;
mod domain;
mod lance;
mod report;
mod winograd_fp;

pub use direct::{direct_conv, quantized_direct_conv};
pub use domain::{DomainOperand, DomainTensor};
pub use lance::{lance, lance_faithful, lance_gemm, LanceLayer, PreparedFilters};
pub use report::{arithmetic_report, ArithmeticReport};
pub use winograd_fp::winograd_conv_fp;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::quant::{Granularity, MAX_BITS, MIN_BITS};
use crate::tensor::{output_extent, FilterBank, Tensor4};

/// Bit-width that disables quantization for an operand.
pub const PASS_THROUGH_BITS: u8 = 32;

/// Winograd output tile side.
pub const TILE_M: usize = 2;
/// Winograd filter side.
pub const TILE_R: usize = 3;

/// Layer geometry. Stride is always 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub r: usize,
    pub s: usize,
    pub pad: usize,
}

impl ConvSpec {
    /// A 3x3 layer.
    pub fn new(n: usize, c: usize, h: usize, w: usize, k: usize, pad: usize) -> Result<Self> {
        let spec = Self {
            n,
            c,
            h,
            w,
            k,
            r: TILE_R,
            s: TILE_R,
            pad,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Reads the geometry off a pair of operands.
    pub fn infer(x: &Tensor4, w: &FilterBank, pad: usize) -> Result<Self> {
        let (n, h, wd, c) = x.dims();
        let (k, r, s, wc) = w.dims();
        if wc != c {
            return invalid(format!("input has {c} channels, filters have {wc}"));
        }
        let spec = Self {
            n,
            c,
            h,
            w: wd,
            k,
            r,
            s,
            pad,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if [self.n, self.c, self.h, self.w, self.k, self.r, self.s].contains(&0) {
            return invalid(format!("zero-sized dimension in {self:?}"));
        }
        if self.pad > 1 {
            return invalid(format!("pad must be 0 or 1, got {}", self.pad));
        }
        if output_extent(self.h, self.r, self.pad).is_none()
            || output_extent(self.w, self.s, self.pad).is_none()
        {
            return invalid(format!(
                "input {}x{} with pad {} is smaller than the {}x{} filter",
                self.h, self.w, self.pad, self.r, self.s
            ));
        }
        Ok(())
    }

    pub fn out_h(&self) -> usize {
        self.h + 2 * self.pad + 1 - self.r
    }

    pub fn out_w(&self) -> usize {
        self.w + 2 * self.pad + 1 - self.s
    }

    /// Tile grid rows for F(2x2,3x3).
    pub fn tiles_h(&self) -> usize {
        self.out_h().div_ceil(TILE_M)
    }

    pub fn tiles_w(&self) -> usize {
        self.out_w().div_ceil(TILE_M)
    }

    /// Tiles per image.
    pub fn tiles_per_image(&self) -> usize {
        self.tiles_h() * self.tiles_w()
    }

    /// Whether the tile grid computes outputs that are later discarded.
    pub fn has_tile_waste(&self) -> bool {
        self.out_h() % TILE_M != 0 || self.out_w() % TILE_M != 0
    }

    pub(crate) fn check_operands(&self, x: &Tensor4, w: &FilterBank) -> Result<()> {
        self.validate()?;
        if x.dims() != (self.n, self.h, self.w, self.c) {
            return invalid(format!(
                "input dims {:?} do not match layer {}x{}x{}x{}",
                x.dims(),
                self.n,
                self.h,
                self.w,
                self.c
            ));
        }
        if w.dims() != (self.k, self.r, self.s, self.c) {
            return invalid(format!(
                "filter dims {:?} do not match layer {}x{}x{}x{}",
                w.dims(),
                self.k,
                self.r,
                self.s,
                self.c
            ));
        }
        Ok(())
    }

    pub(crate) fn check_winograd(&self) -> Result<()> {
        if self.r != TILE_R || self.s != TILE_R {
            return invalid(format!(
                "Winograd engines support 3x3 filters only, got {}x{}",
                self.r, self.s
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LanceMode {
    /// Tile-by-tile: quantize, integer Hadamard, de-quantize, sum channels.
    Faithful,
    /// One integer GEMM over channels per Winograd-domain position.
    Gemm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LanceConfig {
    pub bits_w: u8,
    pub bits_i: u8,
    pub granularity: Granularity,
    pub mode: LanceMode,
}

impl LanceConfig {
    pub fn faithful(bits_w: u8, bits_i: u8, granularity: Granularity) -> Self {
        Self {
            bits_w,
            bits_i,
            granularity,
            mode: LanceMode::Faithful,
        }
    }

    pub fn gemm(bits_w: u8, bits_i: u8, granularity: Granularity) -> Self {
        Self {
            bits_w,
            bits_i,
            granularity,
            mode: LanceMode::Gemm,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (what, b) in [("weight", self.bits_w), ("input", self.bits_i)] {
            if b != PASS_THROUGH_BITS && !(MIN_BITS..=MAX_BITS).contains(&b) {
                return invalid(format!(
                    "{what} bit-width must be in [{MIN_BITS}, {MAX_BITS}] or {PASS_THROUGH_BITS}, got {b}"
                ));
            }
        }
        if self.mode == LanceMode::Gemm && self.granularity == Granularity::PerTile {
            return invalid(
                "GEMM mode cannot accumulate channels with per-tile scales; use position or tensor granularity",
            );
        }
        Ok(())
    }
}

impl Default for LanceConfig {
    fn default() -> Self {
        Self::faithful(8, 8, Granularity::PerTile)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Engine {
    Direct,
    QuantizedDirect,
    WinogradFp,
    LanceFaithful,
    LanceGemm,
}

impl Engine {
    pub const ALL: [Engine; 5] = [
        Engine::Direct,
        Engine::QuantizedDirect,
        Engine::WinogradFp,
        Engine::LanceFaithful,
        Engine::LanceGemm,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Engine::Direct => "direct",
            Engine::QuantizedDirect => "quantized-direct",
            Engine::WinogradFp => "winograd",
            Engine::LanceFaithful => "lance-faithful",
            Engine::LanceGemm => "lance-gemm",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == s)
    }

    pub fn is_winograd(&self) -> bool {
        matches!(
            self,
            Engine::WinogradFp | Engine::LanceFaithful | Engine::LanceGemm
        )
    }

    /// Runs the engine. `cfg` is ignored by the full-precision engines; the
    /// LANCE engines take their mode from the engine, not from `cfg.mode`.
    pub fn run(
        &self,
        x: &Tensor4,
        w: &FilterBank,
        spec: &ConvSpec,
        cfg: &LanceConfig,
    ) -> Result<Tensor4> {
        match self {
            Engine::Direct => direct_conv(x, w, spec),
            Engine::QuantizedDirect => quantized_direct_conv(x, w, spec, cfg),
            Engine::WinogradFp => winograd_conv_fp(x, w, spec),
            Engine::LanceFaithful => lance_faithful(
                x,
                w,
                spec,
                &LanceConfig {
                    mode: LanceMode::Faithful,
                    ..*cfg
                },
            ),
            Engine::LanceGemm => lance_gemm(
                x,
                w,
                spec,
                &LanceConfig {
                    mode: LanceMode::Gemm,
                    ..*cfg
                },
            ),
        }
    }
}
