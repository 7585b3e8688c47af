//! Quantized Winograd convolution.
//!
//! Transformed filters `G g Gᵀ` and transformed tiles `Bᵀ d B` are quantized
//! in the Winograd domain, multiplied on codes, de-quantized, summed over
//! channels and inverse-transformed.

use rayon::prelude::*;

use super::domain::product;
use super::{ConvSpec, DomainOperand, DomainTensor, LanceConfig, LanceMode, TILE_M, TILE_R};
use crate::error::{invalid, Result};
use crate::lowpgemm::{
    affine_dot, col_sums, gemm_codes_raw, gemm_f64_raw, record_multiplies, row_sums, MAX_INNER,
};
use crate::quant::Granularity;
use crate::tensor::{extract_tiles, merge_tiles, FilterBank, OutputTiles, Tensor4};
use crate::winograd::WinogradBasis;

/// Filters transformed and quantized once, reusable across inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedFilters {
    k: usize,
    c: usize,
    bits_w: u8,
    granularity: Granularity,
    operand: DomainOperand,
}

impl PreparedFilters {
    pub fn new(w: &FilterBank, cfg: &LanceConfig) -> Result<Self> {
        if w.r() != TILE_R || w.s() != TILE_R {
            return invalid(format!(
                "Winograd engines support 3x3 filters only, got {}x{}",
                w.r(),
                w.s()
            ));
        }
        let basis = WinogradBasis::f2x2_3x3();
        let domain = DomainTensor::from_filters(w, &basis);
        Ok(Self {
            k: w.k(),
            c: w.c(),
            bits_w: cfg.bits_w,
            granularity: cfg.granularity,
            operand: DomainOperand::new(domain, cfg.bits_w, cfg.granularity)?,
        })
    }

    pub fn operand(&self) -> &DomainOperand {
        &self.operand
    }

    fn check(&self, spec: &ConvSpec, cfg: &LanceConfig) -> Result<()> {
        if (self.k, self.c) != (spec.k, spec.c) {
            return invalid(format!(
                "prepared filters are {}x{} (K x C), layer expects {}x{}",
                self.k, self.c, spec.k, spec.c
            ));
        }
        if self.bits_w != cfg.bits_w || self.granularity != cfg.granularity {
            return invalid("prepared filters were built for a different configuration");
        }
        Ok(())
    }
}

/// A layer whose filter transform and quantization happen once at
/// construction.
#[derive(Debug, Clone)]
pub struct LanceLayer {
    spec: ConvSpec,
    cfg: LanceConfig,
    filters: PreparedFilters,
}

impl LanceLayer {
    pub fn new(w: &FilterBank, spec: ConvSpec, cfg: LanceConfig) -> Result<Self> {
        cfg.validate()?;
        spec.validate()?;
        spec.check_winograd()?;
        if w.dims() != (spec.k, spec.r, spec.s, spec.c) {
            return invalid(format!("filter dims {:?} do not match layer", w.dims()));
        }
        let filters = PreparedFilters::new(w, &cfg)?;
        Ok(Self { spec, cfg, filters })
    }

    pub fn spec(&self) -> &ConvSpec {
        &self.spec
    }

    pub fn config(&self) -> &LanceConfig {
        &self.cfg
    }

    pub fn forward(&self, x: &Tensor4) -> Result<Tensor4> {
        match self.cfg.mode {
            LanceMode::Faithful => run_faithful(x, &self.filters, &self.spec, &self.cfg),
            LanceMode::Gemm => run_gemm(x, &self.filters, &self.spec, &self.cfg),
        }
    }
}

/// Dispatches on `cfg.mode`.
pub fn lance(x: &Tensor4, w: &FilterBank, spec: &ConvSpec, cfg: &LanceConfig) -> Result<Tensor4> {
    match cfg.mode {
        LanceMode::Faithful => lance_faithful(x, w, spec, cfg),
        LanceMode::Gemm => lance_gemm(x, w, spec, cfg),
    }
}

/// Tile-by-tile quantized Winograd. For every tile, filter and channel the
/// transformed operands are multiplied on codes (16 multiplies), the product
/// is de-quantized and added to the tile's domain accumulator; the
/// accumulator is inverse-transformed once all channels are in.
pub fn lance_faithful(
    x: &Tensor4,
    w: &FilterBank,
    spec: &ConvSpec,
    cfg: &LanceConfig,
) -> Result<Tensor4> {
    let cfg = LanceConfig {
        mode: LanceMode::Faithful,
        ..*cfg
    };
    cfg.validate()?;
    spec.check_operands(x, w)?;
    spec.check_winograd()?;
    let filters = PreparedFilters::new(w, &cfg)?;
    run_faithful(x, &filters, spec, &cfg)
}

/// Quantized Winograd with one `[tiles x C] · [C x K]` integer GEMM per
/// domain position. De-quantization and the channel sum fall out of the
/// zero-point expansion, which requires a single scale per position.
pub fn lance_gemm(x: &Tensor4, w: &FilterBank, spec: &ConvSpec, cfg: &LanceConfig) -> Result<Tensor4> {
    if cfg.mode != LanceMode::Gemm {
        return invalid("lance_gemm requires a GEMM-mode configuration");
    }
    cfg.validate()?;
    spec.check_operands(x, w)?;
    spec.check_winograd()?;
    let filters = PreparedFilters::new(w, cfg)?;
    run_gemm(x, &filters, spec, cfg)
}

fn transform_inputs(x: &Tensor4, spec: &ConvSpec, cfg: &LanceConfig) -> Result<(DomainOperand, OutputTiles)> {
    let basis = WinogradBasis::f2x2_3x3();
    let tiles = extract_tiles(x, TILE_M, TILE_R, spec.pad)?;
    let domain = DomainTensor::from_tiles(&tiles, &basis);
    let operand = DomainOperand::new(domain, cfg.bits_i, cfg.granularity)?;
    let out = OutputTiles::zeros(spec.n, spec.k, tiles.ph, tiles.pw, TILE_M);
    Ok((operand, out))
}

fn write_tile(chunk: &mut [f32], s: &[f32], k: usize, k_n: usize) {
    for a in 0..TILE_M {
        for b in 0..TILE_M {
            chunk[(a * TILE_M + b) * k_n + k] = s[a * TILE_M + b];
        }
    }
}

fn run_faithful(
    x: &Tensor4,
    filters: &PreparedFilters,
    spec: &ConvSpec,
    cfg: &LanceConfig,
) -> Result<Tensor4> {
    spec.check_operands_input(x)?;
    filters.check(spec, cfg)?;
    let basis = WinogradBasis::f2x2_3x3();
    let positions = basis.positions();
    let (v, mut out) = transform_inputs(x, spec, cfg)?;
    let u = &filters.operand;
    let (c_n, k_n) = (spec.c, spec.k);
    let stride = out.tile_stride();
    let mults: u64 = out
        .data
        .par_chunks_mut(stride)
        .enumerate()
        .map(|(t, chunk)| {
            let mut m = vec![0.0f64; positions];
            let mut m32 = vec![0.0f32; positions];
            let mut s = vec![0.0f32; TILE_M * TILE_M];
            let mut count = 0u64;
            for k in 0..k_n {
                for (pos, mv) in m.iter_mut().enumerate() {
                    *mv = product(v.elem(pos, t, 0), u.elem(pos, 0, k));
                }
                for c in 1..c_n {
                    for (pos, mv) in m.iter_mut().enumerate() {
                        *mv += product(v.elem(pos, t, c), u.elem(pos, c, k));
                    }
                }
                count += (c_n * positions) as u64;
                for (d, &src) in m32.iter_mut().zip(&m) {
                    *d = src as f32;
                }
                basis.transform_output_into(&m32, &mut s);
                write_tile(chunk, &s, k, k_n);
            }
            count
        })
        .sum();
    record_multiplies(mults);
    merge_tiles(&out, spec.out_h(), spec.out_w())
}

fn run_gemm(
    x: &Tensor4,
    filters: &PreparedFilters,
    spec: &ConvSpec,
    cfg: &LanceConfig,
) -> Result<Tensor4> {
    spec.check_operands_input(x)?;
    filters.check(spec, cfg)?;
    if spec.c > MAX_INNER {
        return invalid(format!(
            "{} channels exceed the i32 accumulator bound {MAX_INNER}",
            spec.c
        ));
    }
    let basis = WinogradBasis::f2x2_3x3();
    let positions = basis.positions();
    let (v, mut out) = transform_inputs(x, spec, cfg)?;
    let u = &filters.operand;
    let rows = v.layout().rows;
    let (c_n, k_n) = (spec.c, spec.k);

    // per_pos[pos] is the [tiles x K] product at that position
    let per_pos: Vec<(Vec<f32>, u64)> = (0..positions)
        .into_par_iter()
        .map(|pos| match (&v, u) {
            (DomainOperand::Quantized(a), DomainOperand::Quantized(b)) => {
                let a_codes = &a.codes[pos * rows * c_n..(pos + 1) * rows * c_n];
                let b_codes = &b.codes[pos * c_n * k_n..(pos + 1) * c_n * k_n];
                let pa = a.params_at(pos, 0, 0);
                let pb = b.params_at(pos, 0, 0);
                let (acc, count) = gemm_codes_raw(a_codes, b_codes, rows, c_n, k_n);
                let rs = row_sums(a_codes, rows, c_n);
                let cs = col_sums(b_codes, c_n, k_n);
                let mut res = Vec::with_capacity(rows * k_n);
                for i in 0..rows {
                    for j in 0..k_n {
                        let dot = acc[i * k_n + j] as i64;
                        res.push(affine_dot(pa, pb, dot, rs[i], cs[j], c_n) as f32);
                    }
                }
                (res, count)
            }
            _ => {
                let (res, count) = gemm_f64_raw(&v.slab_f64(pos), &u.slab_f64(pos), rows, c_n, k_n);
                (res.into_iter().map(|r| r as f32).collect(), count)
            }
        })
        .collect();
    let mults: u64 = per_pos.iter().map(|(_, c)| c).sum();

    let stride = out.tile_stride();
    out.data
        .par_chunks_mut(stride)
        .enumerate()
        .for_each(|(t, chunk)| {
            let mut m = vec![0.0f32; positions];
            let mut s = vec![0.0f32; TILE_M * TILE_M];
            for k in 0..k_n {
                for (pos, mv) in m.iter_mut().enumerate() {
                    *mv = per_pos[pos].0[t * k_n + k];
                }
                basis.transform_output_into(&m, &mut s);
                write_tile(chunk, &s, k, k_n);
            }
        });
    record_multiplies(mults);
    merge_tiles(&out, spec.out_h(), spec.out_w())
}

impl ConvSpec {
    pub(crate) fn check_operands_input(&self, x: &Tensor4) -> Result<()> {
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
        Ok(())
    }
}
