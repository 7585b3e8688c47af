//! Uniform linear quantization.
//!
//! A value `x` taken from a reference set `T` maps to the unsigned code
//! `round((x - min T) * (2^b - 1) / (max T - min T))` and back to
//! `code * scale + min T` with `scale = (max T - min T) / (2^b - 1)`.
//! Ranges and scales are held in `f64` so that the reconstruction of an
//! `f32` input carries no extra rounding beyond the quantization step.

use crate::error::{invalid, Result};

pub const MIN_BITS: u8 = 2;
pub const MAX_BITS: u8 = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantParams {
    bits: u8,
    t_min: f64,
    t_max: f64,
    scale: f64,
}

impl QuantParams {
    pub fn new(bits: u8, t_min: f64, t_max: f64) -> Result<Self> {
        check_bits(bits)?;
        if !t_min.is_finite() || !t_max.is_finite() {
            return invalid(format!("non-finite quantization range [{t_min}, {t_max}]"));
        }
        if t_max < t_min {
            return invalid(format!("t_max {t_max} < t_min {t_min}"));
        }
        let levels = ((1u32 << bits) - 1) as f64;
        Ok(Self {
            bits,
            t_min,
            t_max,
            scale: (t_max - t_min) / levels,
        })
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }

    pub fn t_min(&self) -> f64 {
        self.t_min
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Largest code, `2^b - 1`.
    pub fn max_code(&self) -> u8 {
        ((1u32 << self.bits) - 1) as u8
    }

    #[inline]
    pub fn quantize(&self, x: f32) -> u8 {
        let range = self.t_max - self.t_min;
        if range == 0.0 {
            return 0;
        }
        let levels = self.max_code() as f64;
        // f64::round rounds half away from zero
        let q = ((x as f64 - self.t_min) * levels / range).round();
        q.clamp(0.0, levels) as u8
    }

    /// Reconstruction without the range check on `code`.
    #[inline]
    pub fn reconstruct(&self, code: u8) -> f64 {
        if self.scale == 0.0 {
            self.t_min
        } else {
            code as f64 * self.scale + self.t_min
        }
    }
}

fn check_bits(bits: u8) -> Result<()> {
    if !(MIN_BITS..=MAX_BITS).contains(&bits) {
        return invalid(format!("bit-width must be in [{MIN_BITS}, {MAX_BITS}], got {bits}"));
    }
    Ok(())
}

/// Fits `[min, max]` of `values`.
pub fn fit_params(values: &[f32], bits: u8) -> Result<QuantParams> {
    check_bits(bits)?;
    if values.is_empty() {
        return invalid("cannot fit quantization parameters to an empty set");
    }
    let mut stats = RangeStats::default();
    for &v in values {
        stats.push(v)?;
    }
    stats.params(bits)
}

pub fn quantize(x: f32, p: &QuantParams) -> u8 {
    p.quantize(x)
}

pub fn dequantize(code: u8, p: &QuantParams) -> Result<f64> {
    if code > p.max_code() {
        return invalid(format!(
            "code {code} out of range for {}-bit quantization",
            p.bits
        ));
    }
    Ok(p.reconstruct(code))
}

#[derive(Debug, Clone, Copy)]
struct RangeStats {
    min: f32,
    max: f32,
}

impl Default for RangeStats {
    fn default() -> Self {
        Self {
            min: f32::INFINITY,
            max: f32::NEG_INFINITY,
        }
    }
}

impl RangeStats {
    #[inline]
    fn push(&mut self, v: f32) -> Result<()> {
        if !v.is_finite() {
            return invalid(format!("cannot quantize non-finite value {v}"));
        }
        self.min = self.min.min(v);
        self.max = self.max.max(v);
        Ok(())
    }

    fn params(&self, bits: u8) -> Result<QuantParams> {
        QuantParams::new(bits, self.min as f64, self.max as f64)
    }
}

/// Scope over which one set of [`QuantParams`] is fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Granularity {
    /// One set per `alpha x alpha` tile (one tile/channel or filter/channel pair).
    PerTile,
    /// One set per Winograd-domain position, shared by every tile and channel.
    PerPosition,
    /// One set for the whole domain tensor.
    PerTensor,
}

impl Granularity {
    pub fn name(&self) -> &'static str {
        match self {
            Granularity::PerTile => "tile",
            Granularity::PerPosition => "position",
            Granularity::PerTensor => "tensor",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "tile" => Some(Granularity::PerTile),
            "position" => Some(Granularity::PerPosition),
            "tensor" => Some(Granularity::PerTensor),
            _ => None,
        }
    }
}

/// Shape of a Winograd-domain buffer: `positions x rows x cols`, row-major.
///
/// A "tile" in this layout is the set of all positions for one `(row, col)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DomainLayout {
    pub positions: usize,
    pub rows: usize,
    pub cols: usize,
}

impl DomainLayout {
    pub fn len(&self) -> usize {
        self.positions * self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, pos: usize, row: usize, col: usize) -> usize {
        (pos * self.rows + row) * self.cols + col
    }

    pub fn group_count(&self, g: Granularity) -> usize {
        match g {
            Granularity::PerTile => self.rows * self.cols,
            Granularity::PerPosition => self.positions,
            Granularity::PerTensor => 1,
        }
    }

    #[inline]
    pub fn group(&self, g: Granularity, pos: usize, row: usize, col: usize) -> usize {
        match g {
            Granularity::PerTile => row * self.cols + col,
            Granularity::PerPosition => pos,
            Granularity::PerTensor => 0,
        }
    }
}

/// Codes for a single reference set.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedBlock {
    pub codes: Vec<u8>,
    pub shape: Vec<usize>,
    pub params: QuantParams,
}

impl QuantizedBlock {
    pub fn quantize(values: &[f32], shape: &[usize], bits: u8) -> Result<Self> {
        if shape.iter().product::<usize>() != values.len() {
            return invalid("block shape does not match value count");
        }
        let params = fit_params(values, bits)?;
        Ok(Self {
            codes: values.iter().map(|&v| params.quantize(v)).collect(),
            shape: shape.to_vec(),
            params,
        })
    }

    pub fn dequantized(&self) -> Vec<f64> {
        self.codes.iter().map(|&c| self.params.reconstruct(c)).collect()
    }
}

/// Codes for a domain buffer, one [`QuantParams`] per granularity group.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedDomain {
    pub layout: DomainLayout,
    pub granularity: Granularity,
    pub codes: Vec<u8>,
    pub params: Vec<QuantParams>,
}

impl QuantizedDomain {
    #[inline]
    pub fn params_at(&self, pos: usize, row: usize, col: usize) -> &QuantParams {
        &self.params[self.layout.group(self.granularity, pos, row, col)]
    }

    #[inline]
    pub fn code_at(&self, pos: usize, row: usize, col: usize) -> u8 {
        self.codes[self.layout.index(pos, row, col)]
    }

    pub fn dequantized(&self) -> Vec<f64> {
        let l = self.layout;
        let mut out = Vec::with_capacity(l.len());
        for pos in 0..l.positions {
            for row in 0..l.rows {
                for col in 0..l.cols {
                    out.push(self.params_at(pos, row, col).reconstruct(self.code_at(pos, row, col)));
                }
            }
        }
        out
    }
}

/// Fits one parameter set per granularity group of `values` and quantizes
/// every element against its group's parameters.
pub fn quantize_block(
    values: &[f32],
    layout: DomainLayout,
    bits: u8,
    granularity: Granularity,
) -> Result<QuantizedDomain> {
    check_bits(bits)?;
    if values.len() != layout.len() {
        return invalid(format!(
            "domain layout {:?} needs {} values, got {}",
            layout,
            layout.len(),
            values.len()
        ));
    }
    if values.is_empty() {
        return invalid("cannot quantize an empty domain buffer");
    }
    let mut stats = vec![RangeStats::default(); layout.group_count(granularity)];
    for pos in 0..layout.positions {
        for row in 0..layout.rows {
            for col in 0..layout.cols {
                let g = layout.group(granularity, pos, row, col);
                stats[g].push(values[layout.index(pos, row, col)])?;
            }
        }
    }
    let params = stats
        .iter()
        .map(|s| s.params(bits))
        .collect::<Result<Vec<_>>>()?;
    let mut codes = Vec::with_capacity(values.len());
    for pos in 0..layout.positions {
        for row in 0..layout.rows {
            for col in 0..layout.cols {
                let g = layout.group(granularity, pos, row, col);
                codes.push(params[g].quantize(values[layout.index(pos, row, col)]));
            }
        }
    }
    Ok(QuantizedDomain {
        layout,
        granularity,
        codes,
        params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp16() -> Vec<f32> {
        (0..16).map(|v| v as f32).collect()
    }

    #[test]
    fn fit_two_bit_ramp() {
        let p = fit_params(&ramp16(), 2).unwrap();
        assert_eq!((p.t_min(), p.t_max(), p.scale()), (0.0, 15.0, 5.0));
    }

    #[test]
    fn fit_degenerate_range() {
        let p = fit_params(&[7.5], 8).unwrap();
        assert_eq!((p.t_min(), p.t_max(), p.scale()), (7.5, 7.5, 0.0));
        assert_eq!(p.quantize(7.5), 0);
        assert_eq!(p.quantize(100.0), 0);
        assert_eq!(dequantize(0, &p).unwrap(), 7.5);
    }

    #[test]
    fn fit_symmetric_eight_bit() {
        let p = fit_params(&[-1.0, 1.0], 8).unwrap();
        assert_eq!(p.scale(), 2.0 / 255.0);
    }

    #[test]
    fn fit_errors() {
        assert!(fit_params(&[], 4).is_err());
        assert!(fit_params(&[1.0, f32::NAN], 4).is_err());
        assert!(fit_params(&[1.0], 1).is_err());
        assert!(fit_params(&[1.0], 9).is_err());
    }

    #[test]
    fn quantize_two_bit_ramp() {
        let p = fit_params(&ramp16(), 2).unwrap();
        assert_eq!(quantize(0.0, &p), 0);
        assert_eq!(quantize(15.0, &p), 3);
        assert_eq!(quantize(7.0, &p), 1);
        // 7.5 * 3 / 15 = 1.5 rounds away from zero
        assert_eq!(quantize(7.5, &p), 2);
        assert_eq!(quantize(-40.0, &p), 0);
        assert_eq!(quantize(99.0, &p), 3);
    }

    #[test]
    fn dequantize_two_bit_ramp() {
        let p = fit_params(&ramp16(), 2).unwrap();
        assert_eq!(dequantize(0, &p).unwrap(), 0.0);
        assert_eq!(dequantize(3, &p).unwrap(), 15.0);
        assert_eq!(dequantize(1, &p).unwrap(), 5.0);
        assert!(dequantize(4, &p).is_err());
    }

    #[test]
    fn constant_tile_quantizes_to_zero() {
        let layout = DomainLayout {
            positions: 16,
            rows: 1,
            cols: 1,
        };
        let q = quantize_block(&[3.25; 16], layout, 8, Granularity::PerTile).unwrap();
        assert!(q.codes.iter().all(|&c| c == 0));
        assert_eq!(q.params[0].scale(), 0.0);
        assert!(q.dequantized().iter().all(|&v| v == 3.25));
    }

    #[test]
    fn ramp_tile_spans_full_code_range() {
        let layout = DomainLayout {
            positions: 16,
            rows: 1,
            cols: 1,
        };
        let q = quantize_block(&ramp16(), layout, 2, Granularity::PerTile).unwrap();
        assert_eq!(q.codes.iter().min(), Some(&0));
        assert_eq!(q.codes.iter().max(), Some(&3));
    }

    #[test]
    fn group_counts() {
        let layout = DomainLayout {
            positions: 16,
            rows: 3,
            cols: 5,
        };
        let values: Vec<f32> = (0..layout.len()).map(|i| (i % 7) as f32).collect();
        for (g, n) in [
            (Granularity::PerTile, 15),
            (Granularity::PerPosition, 16),
            (Granularity::PerTensor, 1),
        ] {
            let q = quantize_block(&values, layout, 4, g).unwrap();
            assert_eq!(q.params.len(), n);
        }
    }

    #[test]
    fn per_position_params_see_only_their_position() {
        let layout = DomainLayout {
            positions: 2,
            rows: 2,
            cols: 1,
        };
        // position 0 holds {0, 1}, position 1 holds {10, 30}
        let q = quantize_block(&[0.0, 1.0, 10.0, 30.0], layout, 8, Granularity::PerPosition)
            .unwrap();
        assert_eq!((q.params[0].t_min(), q.params[0].t_max()), (0.0, 1.0));
        assert_eq!((q.params[1].t_min(), q.params[1].t_max()), (10.0, 30.0));
        assert_eq!(q.codes, vec![0, 255, 0, 255]);
    }

    #[test]
    fn random_tile_round_trip_within_half_step() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let values: Vec<f32> = (0..16).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let block = QuantizedBlock::quantize(&values, &[4, 4], 8).unwrap();
        let half = block.params.scale() / 2.0;
        for (x, y) in values.iter().zip(block.dequantized()) {
            assert!((y - *x as f64).abs() <= half * (1.0 + 1e-6));
        }
    }

    proptest! {
        #[test]
        fn codes_in_range_and_monotone(
            bits in 2u8..=8,
            lo in -1e3f32..1e3,
            span in 0f32..1e3,
            xs in prop::collection::vec(-2e3f32..2e3, 1..64),
        ) {
            let p = QuantParams::new(bits, lo as f64, (lo + span) as f64).unwrap();
            let mut sorted = xs.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let codes: Vec<u8> = sorted.iter().map(|&x| p.quantize(x)).collect();
            prop_assert!(codes.iter().all(|&c| c <= p.max_code()));
            prop_assert!(codes.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
