use rayon::prelude::*;

use super::{ConvSpec, DomainTensor, TILE_M, TILE_R};
use crate::error::Result;
use crate::lowpgemm::record_multiplies;
use crate::tensor::{extract_tiles, merge_tiles, FilterBank, OutputTiles, Tensor4};
use crate::winograd::WinogradBasis;

/// Full-precision F(2x2,3x3): filters are transformed once, channel sums are
/// taken in the Winograd domain and each tile is inverse-transformed once per
/// filter.
pub fn winograd_conv_fp(x: &Tensor4, w: &FilterBank, spec: &ConvSpec) -> Result<Tensor4> {
    spec.check_operands(x, w)?;
    spec.check_winograd()?;
    let basis = WinogradBasis::f2x2_3x3();
    let tiles = extract_tiles(x, TILE_M, TILE_R, spec.pad)?;
    let v = DomainTensor::from_tiles(&tiles, &basis);
    let u = DomainTensor::from_filters(w, &basis);

    let positions = basis.positions();
    let (c_n, k_n) = (spec.c, spec.k);
    let mut out = OutputTiles::zeros(spec.n, k_n, tiles.ph, tiles.pw, TILE_M);
    let stride = out.tile_stride();
    let mults: u64 = out
        .data
        .par_chunks_mut(stride)
        .enumerate()
        .map(|(t, chunk)| {
            let mut m = vec![0.0f32; positions];
            let mut s = vec![0.0f32; TILE_M * TILE_M];
            let mut count = 0u64;
            for k in 0..k_n {
                for (pos, mv) in m.iter_mut().enumerate() {
                    *mv = u.get(pos, 0, k) * v.get(pos, t, 0);
                }
                for c in 1..c_n {
                    for (pos, mv) in m.iter_mut().enumerate() {
                        *mv += u.get(pos, c, k) * v.get(pos, t, c);
                    }
                }
                count += (c_n * positions) as u64;
                basis.transform_output_into(&m, &mut s);
                for a in 0..TILE_M {
                    for b in 0..TILE_M {
                        chunk[(a * TILE_M + b) * k_n + k] = s[a * TILE_M + b];
                    }
                }
            }
            count
        })
        .sum();
    record_multiplies(mults);
    merge_tiles(&out, spec.out_h(), spec.out_w())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lowpgemm::{multiply_counter, reset_multiply_counter};

    #[test]
    fn zero_input_gives_zero() {
        let x = Tensor4::zeros(1, 7, 6, 2).unwrap();
        let w = FilterBank::from_fn(3, 3, 3, 2, |k, r, s, c| (k + r + s + c) as f32).unwrap();
        let spec = ConvSpec::infer(&x, &w, 1).unwrap();
        let y = winograd_conv_fp(&x, &w, &spec).unwrap();
        assert_eq!(y.dims(), (1, 7, 6, 3));
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_tile_matches_module_composition() {
        let basis = WinogradBasis::f2x2_3x3();
        let d: Vec<f32> = (0..16).map(|i| (i as f32 * 0.37).sin()).collect();
        let g: Vec<f32> = (0..9).map(|i| (i as f32 * 0.91).cos()).collect();
        let x = Tensor4::new(1, 4, 4, 1, d.clone()).unwrap();
        let w = FilterBank::new(1, 3, 3, 1, g.clone()).unwrap();
        let spec = ConvSpec::infer(&x, &w, 0).unwrap();
        let y = winograd_conv_fp(&x, &w, &spec).unwrap();
        let u = basis.transform_filter(&g);
        let v = basis.transform_input(&d);
        let m: Vec<f32> = u.iter().zip(&v).map(|(a, b)| a * b).collect();
        assert_eq!(y.data(), basis.transform_output(&m).as_slice());
    }

    #[test]
    fn counts_sixteen_per_tile_channel_filter() {
        let x = Tensor4::zeros(2, 7, 9, 3).unwrap();
        let w = FilterBank::new(5, 3, 3, 3, vec![0.0; 135]).unwrap();
        let spec = ConvSpec::infer(&x, &w, 0).unwrap();
        reset_multiply_counter();
        winograd_conv_fp(&x, &w, &spec).unwrap();
        let p = spec.tiles_per_image();
        assert_eq!(p, 3 * 4);
        assert_eq!(multiply_counter(), (16 * p * 2 * 3 * 5) as u64);
    }

    #[test]
    fn rejects_non_3x3_filters() {
        let x = Tensor4::zeros(1, 6, 6, 1).unwrap();
        let w = FilterBank::new(1, 5, 5, 1, vec![0.0; 25]).unwrap();
        let spec = ConvSpec::infer(&x, &w, 0).unwrap();
        assert!(winograd_conv_fp(&x, &w, &spec).is_err());
    }
}
