use rayon::prelude::*;

use super::PASS_THROUGH_BITS;
use crate::error::Result;
use crate::lowpgemm::affine_dot;
use crate::quant::{quantize_block, DomainLayout, Granularity, QuantParams, QuantizedDomain};
use crate::tensor::{FilterBank, TileSet};
use crate::winograd::WinogradBasis;

/// Winograd-domain values laid out `[position][row][col]`.
///
/// Transformed inputs use rows = tiles (all images), cols = channels;
/// transformed filters use rows = channels, cols = filters. For a fixed
/// position both are therefore contiguous GEMM operands.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainTensor {
    pub layout: DomainLayout,
    pub values: Vec<f32>,
}

impl DomainTensor {
    /// `Bᵀ d B` for every tile and channel.
    pub fn from_tiles(tiles: &TileSet, basis: &WinogradBasis) -> Self {
        let positions = basis.positions();
        let rows = tiles.n * tiles.p();
        let cols = tiles.c;
        let per_tile: Vec<Vec<f32>> = (0..rows)
            .into_par_iter()
            .map(|t| {
                let (image, tile) = (t / tiles.p(), t % tiles.p());
                let mut d = vec![0.0f32; positions];
                let mut out = vec![0.0f32; cols * positions];
                for c in 0..cols {
                    tiles.tile_channel_into(image, tile, c, &mut d);
                    basis.transform_input_into(&d, &mut out[c * positions..(c + 1) * positions]);
                }
                out
            })
            .collect();
        let layout = DomainLayout {
            positions,
            rows,
            cols,
        };
        let mut values = vec![0.0f32; layout.len()];
        for (t, block) in per_tile.iter().enumerate() {
            for c in 0..cols {
                for pos in 0..positions {
                    values[layout.index(pos, t, c)] = block[c * positions + pos];
                }
            }
        }
        Self { layout, values }
    }

    /// `G g Gᵀ` for every filter and channel.
    pub fn from_filters(w: &FilterBank, basis: &WinogradBasis) -> Self {
        let positions = basis.positions();
        let layout = DomainLayout {
            positions,
            rows: w.c(),
            cols: w.k(),
        };
        let mut values = vec![0.0f32; layout.len()];
        let mut u = vec![0.0f32; positions];
        for c in 0..w.c() {
            for k in 0..w.k() {
                basis.transform_filter_into(&w.channel_slice(k, c), &mut u);
                for (pos, &v) in u.iter().enumerate() {
                    values[layout.index(pos, c, k)] = v;
                }
            }
        }
        Self { layout, values }
    }

    #[inline]
    pub fn get(&self, pos: usize, row: usize, col: usize) -> f32 {
        self.values[self.layout.index(pos, row, col)]
    }
}

/// A domain tensor ready for the Hadamard stage: quantized, or passed through
/// in full precision when its bit-width is 32.
#[derive(Debug, Clone, PartialEq)]
pub enum DomainOperand {
    Quantized(QuantizedDomain),
    Float(DomainTensor),
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum Elem<'a> {
    Code(u8, &'a QuantParams),
    Float(f32),
}

impl Elem<'_> {
    #[inline]
    fn value(self) -> f64 {
        match self {
            Elem::Code(c, p) => p.reconstruct(c),
            Elem::Float(v) => v as f64,
        }
    }
}

/// De-quantized product of an input element and a weight element.
#[inline]
pub(crate) fn product(input: Elem<'_>, weight: Elem<'_>) -> f64 {
    match (input, weight) {
        (Elem::Code(a, pa), Elem::Code(b, pb)) => {
            let (a, b) = (a as i64, b as i64);
            affine_dot(pa, pb, a * b, a, b, 1)
        }
        (a, b) => a.value() * b.value(),
    }
}

impl DomainOperand {
    pub fn new(domain: DomainTensor, bits: u8, granularity: Granularity) -> Result<Self> {
        if bits == PASS_THROUGH_BITS {
            return Ok(DomainOperand::Float(domain));
        }
        Ok(DomainOperand::Quantized(quantize_block(
            &domain.values,
            domain.layout,
            bits,
            granularity,
        )?))
    }

    pub fn layout(&self) -> DomainLayout {
        match self {
            DomainOperand::Quantized(q) => q.layout,
            DomainOperand::Float(d) => d.layout,
        }
    }

    #[inline]
    pub(crate) fn elem(&self, pos: usize, row: usize, col: usize) -> Elem<'_> {
        match self {
            DomainOperand::Quantized(q) => {
                Elem::Code(q.code_at(pos, row, col), q.params_at(pos, row, col))
            }
            DomainOperand::Float(d) => Elem::Float(d.get(pos, row, col)),
        }
    }

    /// The `rows x cols` slab at one position, de-quantized.
    pub(crate) fn slab_f64(&self, pos: usize) -> Vec<f64> {
        let l = self.layout();
        let mut out = Vec::with_capacity(l.rows * l.cols);
        for row in 0..l.rows {
            for col in 0..l.cols {
                out.push(self.elem(pos, row, col).value());
            }
        }
        out
    }
}
