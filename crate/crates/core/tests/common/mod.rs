#![allow(dead_code)]

use lance_core::{FilterBank, Tensor4};

/// Independent reference: f64 correlation over explicit padded coordinates,
/// written against raw NHWC/KRSC offsets rather than the crate accessors.
pub fn oracle_conv(x: &Tensor4, w: &FilterBank, pad: usize) -> Vec<f64> {
    let (n, h, wd, c) = x.dims();
    let (k, r, s, _) = w.dims();
    let oh = h + 2 * pad - r + 1;
    let ow = wd + 2 * pad - s + 1;
    let xd = x.data();
    let wdat = w.data();
    let mut out = vec![0.0f64; n * oh * ow * k];
    for b in 0..n {
        for i in 0..oh {
            for j in 0..ow {
                for f in 0..k {
                    let mut acc = 0.0f64;
                    for u in 0..r {
                        for v in 0..s {
                            let yy = i as i64 + u as i64 - pad as i64;
                            let xx = j as i64 + v as i64 - pad as i64;
                            if yy < 0 || xx < 0 || yy >= h as i64 || xx >= wd as i64 {
                                continue;
                            }
                            let base = ((b * h + yy as usize) * wd + xx as usize) * c;
                            let wbase = (f * r + u) * s * c + v * c;
                            for ch in 0..c {
                                acc += xd[base + ch] as f64 * wdat[wbase + ch] as f64;
                            }
                        }
                    }
                    out[((b * oh + i) * ow + j) * k + f] = acc;
                }
            }
        }
    }
    out
}

pub fn rel_frobenius_f64(got: &[f32], want: &[f64]) -> f64 {
    let (mut d, mut nrm) = (0.0, 0.0);
    for (a, b) in got.iter().zip(want) {
        d += (*a as f64 - b).powi(2);
        nrm += b * b;
    }
    if nrm == 0.0 {
        d.sqrt()
    } else {
        (d / nrm).sqrt()
    }
}
