use rayon::prelude::*;

use super::{ConvSpec, LanceConfig, PASS_THROUGH_BITS};
use crate::error::Result;
use crate::lowpgemm::{affine_dot, record_multiplies};
use crate::quant::{fit_params, QuantParams};
use crate::tensor::{FilterBank, Tensor4};

/// Reference correlation. Each output accumulates `c`, then `r`, then `s`,
/// in ascending order; padded taps are multiplied like any other.
pub fn direct_conv(x: &Tensor4, w: &FilterBank, spec: &ConvSpec) -> Result<Tensor4> {
    spec.check_operands(x, w)?;
    let (oh, ow, k) = (spec.out_h(), spec.out_w(), spec.k);
    let mut y = Tensor4::zeros(spec.n, oh, ow, k)?;
    let pad = spec.pad as isize;
    let mults: u64 = y
        .data_mut()
        .par_chunks_mut(ow * k)
        .enumerate()
        .map(|(row, out)| {
            let (n, i) = (row / oh, row % oh);
            let mut count = 0u64;
            for j in 0..ow {
                for kk in 0..k {
                    let mut acc = 0.0f32;
                    for c in 0..spec.c {
                        for r in 0..spec.r {
                            for s in 0..spec.s {
                                let xv = x.get_padded(
                                    n,
                                    i as isize + r as isize - pad,
                                    j as isize + s as isize - pad,
                                    c,
                                );
                                acc += xv * w.get(kk, r, s, c);
                            }
                        }
                    }
                    count += (spec.c * spec.r * spec.s) as u64;
                    out[j * k + kk] = acc;
                }
            }
            count
        })
        .sum();
    record_multiplies(mults);
    Ok(y)
}

/// One channel plane (padded image channel or filter channel), either as codes
/// or left in full precision.
enum Plane {
    Codes { codes: Vec<u8>, params: QuantParams },
    Float(Vec<f64>),
}

impl Plane {
    fn new(values: Vec<f32>, bits: u8) -> Result<Self> {
        if bits == PASS_THROUGH_BITS {
            return Ok(Plane::Float(values.into_iter().map(f64::from).collect()));
        }
        let params = fit_params(&values, bits)?;
        Ok(Plane::Codes {
            codes: values.iter().map(|&v| params.quantize(v)).collect(),
            params,
        })
    }

    fn value(&self, i: usize) -> f64 {
        match self {
            Plane::Codes { codes, params } => params.reconstruct(codes[i]),
            Plane::Float(v) => v[i],
        }
    }
}

/// Direct correlation on quantized operands.
///
/// Each padded image channel and each filter channel is quantized on its own
/// range; the integer correlation of a channel pair is de-quantized with the
/// zero-point expansion and channel results are summed in ascending order.
/// A bit-width of 32 leaves that operand in full precision.
pub fn quantized_direct_conv(
    x: &Tensor4,
    w: &FilterBank,
    spec: &ConvSpec,
    cfg: &LanceConfig,
) -> Result<Tensor4> {
    spec.check_operands(x, w)?;
    cfg.validate()?;
    let (hp, wp) = (spec.h + 2 * spec.pad, spec.w + 2 * spec.pad);
    let pad = spec.pad as isize;
    let taps = spec.r * spec.s;

    // planes[n * C + c]
    let mut x_planes = Vec::with_capacity(spec.n * spec.c);
    for n in 0..spec.n {
        for c in 0..spec.c {
            let mut vals = Vec::with_capacity(hp * wp);
            for i in 0..hp as isize {
                for j in 0..wp as isize {
                    vals.push(x.get_padded(n, i - pad, j - pad, c));
                }
            }
            x_planes.push(Plane::new(vals, cfg.bits_i)?);
        }
    }
    // w_planes[k * C + c]
    let mut w_planes = Vec::with_capacity(spec.k * spec.c);
    for k in 0..spec.k {
        for c in 0..spec.c {
            w_planes.push(Plane::new(w.channel_slice(k, c), cfg.bits_w)?);
        }
    }

    let (oh, ow, kk) = (spec.out_h(), spec.out_w(), spec.k);
    let mut y = Tensor4::zeros(spec.n, oh, ow, kk)?;
    let mults: u64 = y
        .data_mut()
        .par_chunks_mut(ow * kk)
        .enumerate()
        .map(|(row, out)| {
            let (n, i) = (row / oh, row % oh);
            let mut count = 0u64;
            for j in 0..ow {
                for k in 0..kk {
                    let mut acc = 0.0f64;
                    for c in 0..spec.c {
                        let xp = &x_planes[n * spec.c + c];
                        let wp_ = &w_planes[k * spec.c + c];
                        let term = match (xp, wp_) {
                            (
                                Plane::Codes { codes: xc, params: px },
                                Plane::Codes { codes: wc, params: pw },
                            ) => {
                                let (mut dot, mut xs, mut ws) = (0i64, 0i64, 0i64);
                                for r in 0..spec.r {
                                    for s in 0..spec.s {
                                        let a = xc[(i + r) * wp + j + s] as i64;
                                        let b = wc[r * spec.s + s] as i64;
                                        dot += a * b;
                                        xs += a;
                                        ws += b;
                                    }
                                }
                                affine_dot(px, pw, dot, xs, ws, taps)
                            }
                            _ => {
                                let mut t = 0.0f64;
                                for r in 0..spec.r {
                                    for s in 0..spec.s {
                                        t += xp.value((i + r) * wp + j + s)
                                            * wp_.value(r * spec.s + s);
                                    }
                                }
                                t
                            }
                        };
                        acc += term;
                        count += taps as u64;
                    }
                    out[j * kk + k] = acc as f32;
                }
            }
            count
        })
        .sum();
    record_multiplies(mults);
    Ok(y)
}
