//! Low-precision integer GEMM.
//!
//! `u8` codes are multiplied and accumulated in `i32`. Affine operands
//! (`value = scale * code + t_min`) are handled by the usual zero-point
//! expansion over row and column sums, so the integer product alone is
//! enough to reconstruct the product of the de-quantized matrices.

use std::cell::Cell;

use crate::error::{invalid, Result};
use crate::quant::QuantParams;

/// Inner dimension bound: `32768 * 255² < 2³¹`.
pub const MAX_INNER: usize = 32768;

thread_local! {
    static MULTIPLIES: Cell<u64> = const { Cell::new(0) };
}

/// Multiplications executed in Hadamard/GEMM stages on this thread since the
/// last [`reset_multiply_counter`]. Transform and de-quantization arithmetic
/// is not counted.
pub fn multiply_counter() -> u64 {
    MULTIPLIES.with(|c| c.get())
}

pub fn reset_multiply_counter() {
    MULTIPLIES.with(|c| c.set(0));
}

pub fn record_multiplies(n: u64) {
    MULTIPLIES.with(|c| c.set(c.get() + n));
}

/// Row-major `u8` codes sharing one set of quantization parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeMatrix {
    pub rows: usize,
    pub cols: usize,
    pub codes: Vec<u8>,
    pub params: QuantParams,
}

impl CodeMatrix {
    pub fn new(rows: usize, cols: usize, codes: Vec<u8>, params: QuantParams) -> Result<Self> {
        if codes.len() != rows * cols {
            return invalid(format!(
                "code matrix {rows}x{cols} needs {} codes, got {}",
                rows * cols,
                codes.len()
            ));
        }
        if let Some(&c) = codes.iter().find(|&&c| c > params.max_code()) {
            return invalid(format!(
                "code {c} exceeds {}-bit range",
                params.bits()
            ));
        }
        Ok(Self {
            rows,
            cols,
            codes,
            params,
        })
    }

    pub fn dequantized(&self) -> Vec<f64> {
        self.codes.iter().map(|&c| self.params.reconstruct(c)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccMatrix {
    pub rows: usize,
    pub cols: usize,
    pub sums: Vec<i32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FloatMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

fn check_dims(a: &CodeMatrix, b: &CodeMatrix) -> Result<()> {
    if a.cols != b.rows {
        return invalid(format!(
            "inner dims differ: {}x{} times {}x{}",
            a.rows, a.cols, b.rows, b.cols
        ));
    }
    if a.cols > MAX_INNER {
        return invalid(format!(
            "inner dim {} exceeds the i32 accumulator bound {MAX_INNER}",
            a.cols
        ));
    }
    Ok(())
}

/// Integer product without touching the thread counter; returns the number of
/// multiplies performed alongside the sums.
pub(crate) fn gemm_codes_raw(
    a: &[u8],
    b: &[u8],
    rows: usize,
    inner: usize,
    cols: usize,
) -> (Vec<i32>, u64) {
    let mut sums = vec![0i32; rows * cols];
    let mut mults = 0u64;
    for i in 0..rows {
        let acc = &mut sums[i * cols..(i + 1) * cols];
        let a_row = &a[i * inner..(i + 1) * inner];
        for (k, &av) in a_row.iter().enumerate() {
            let av = av as i32;
            let b_row = &b[k * cols..(k + 1) * cols];
            for (s, &bv) in acc.iter_mut().zip(b_row) {
                *s += av * bv as i32;
            }
            mults += cols as u64;
        }
    }
    (sums, mults)
}

/// `sums[i][j] = Σ_k a[i][k] · b[k][j]`, exact.
pub fn gemm_codes(a: &CodeMatrix, b: &CodeMatrix) -> Result<AccMatrix> {
    check_dims(a, b)?;
    let (sums, mults) = gemm_codes_raw(&a.codes, &b.codes, a.rows, a.cols, b.cols);
    record_multiplies(mults);
    Ok(AccMatrix {
        rows: a.rows,
        cols: b.cols,
        sums,
    })
}

/// De-quantized value of `Σ_k (sa·â_k + oa)(sb·b̂_k + ob)` from the integer
/// dot product and the operand sums.
#[inline]
pub fn affine_dot(
    pa: &QuantParams,
    pb: &QuantParams,
    dot: i64,
    a_sum: i64,
    b_sum: i64,
    inner: usize,
) -> f64 {
    let (sa, oa) = (pa.scale(), pa.t_min());
    let (sb, ob) = (pb.scale(), pb.t_min());
    sa * sb * dot as f64 + sa * ob * a_sum as f64 + sb * oa * b_sum as f64 + inner as f64 * oa * ob
}

pub(crate) fn row_sums(codes: &[u8], rows: usize, cols: usize) -> Vec<i64> {
    (0..rows)
        .map(|i| codes[i * cols..(i + 1) * cols].iter().map(|&c| c as i64).sum())
        .collect()
}

pub(crate) fn col_sums(codes: &[u8], rows: usize, cols: usize) -> Vec<i64> {
    let mut out = vec![0i64; cols];
    for i in 0..rows {
        for (o, &c) in out.iter_mut().zip(&codes[i * cols..(i + 1) * cols]) {
            *o += c as i64;
        }
    }
    out
}

/// Product of the de-quantized matrices computed on the integer path.
pub fn affine_gemm(a: &CodeMatrix, b: &CodeMatrix) -> Result<FloatMatrix> {
    let acc = gemm_codes(a, b)?;
    let rs = row_sums(&a.codes, a.rows, a.cols);
    let cs = col_sums(&b.codes, b.rows, b.cols);
    let mut data = Vec::with_capacity(a.rows * b.cols);
    for i in 0..a.rows {
        for j in 0..b.cols {
            let dot = acc.sums[i * b.cols + j] as i64;
            data.push(affine_dot(&a.params, &b.params, dot, rs[i], cs[j], a.cols) as f32);
        }
    }
    Ok(FloatMatrix {
        rows: a.rows,
        cols: b.cols,
        data,
    })
}

/// Plain `f64` GEMM; returns the multiply count without recording it.
pub(crate) fn gemm_f64_raw(
    a: &[f64],
    b: &[f64],
    rows: usize,
    inner: usize,
    cols: usize,
) -> (Vec<f64>, u64) {
    let mut out = vec![0.0f64; rows * cols];
    for i in 0..rows {
        let acc = &mut out[i * cols..(i + 1) * cols];
        for k in 0..inner {
            let av = a[i * inner + k];
            for (s, &bv) in acc.iter_mut().zip(&b[k * cols..(k + 1) * cols]) {
                *s += av * bv;
            }
        }
    }
    (out, (rows * inner * cols) as u64)
}
