//! Self-check suite behind `lance verify`.
//!
//! Every check pits an implementation against an independent scalar oracle
//! or a fixed expected value and reports one pass/fail line.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engines::{
    arithmetic_report, direct_conv, lance_faithful, lance_gemm, winograd_conv_fp, ConvSpec,
    Engine, LanceConfig,
};
use crate::lowpgemm::{
    affine_gemm, gemm_codes, multiply_counter, reset_multiply_counter, CodeMatrix,
};
use crate::metrics::{max_abs_diff, mean_rel_error, rel_frobenius};
use crate::quant::{fit_params, Granularity, QuantParams};
use crate::synthetic::{oracle_grid, random_layer};
use crate::tensor::{read_tensor, write_tensor, Tensor4};
use crate::winograd::WinogradBasis;

/// What the checks (and the bench) do not attempt.
pub const SCOPE_NOTE: &str = "not reproduced here: end-task classification accuracy of \
trained networks and GPU tensor-core speedups; wall time is reported by `bench` but never \
asserted, arithmetic reduction is reported as exact multiply counts";

/// 2-bit codes of the 0..15 ramp tile used as the input-transform golden case.
#[rustfmt::skip]
pub const GOLDEN_TILE: [f32; 16] = [
    0.0, 1.0, 1.0, 1.0,
    1.0, 1.0, 2.0, 2.0,
    2.0, 2.0, 2.0, 3.0,
    3.0, 3.0, 3.0, 3.0,
];

/// `Bᵀ d B` of [`GOLDEN_TILE`].
#[rustfmt::skip]
pub const GOLDEN_TRANSFORMED: [f32; 16] = [
    -1.0, -2.0,  0.0,  1.0,
    -1.0,  7.0,  1.0, -2.0,
     1.0,  1.0, -1.0,  0.0,
    -1.0, -3.0,  1.0, -1.0,
];

pub const WINOGRAD_REL_TOL: f64 = 1e-4;
pub const MODE_EQUIV_ABS_TOL: f64 = 1e-3;
pub const BASIS_ABS_TOL: f64 = 1e-5;
pub const AFFINE_GEMM_REL_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn from(name: &'static str, r: Result<String, String>) -> Self {
        match r {
            Ok(detail) => Self {
                name,
                passed: true,
                detail,
            },
            Err(detail) => Self {
                name,
                passed: false,
                detail,
            },
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {}: {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail
        )
    }
}

/// Runs every check against the shipped transform matrices.
pub fn run_all() -> Vec<CheckResult> {
    run_with_basis(&WinogradBasis::f2x2_3x3())
}

/// Runs every check; the transform-level checks use `basis`, so a corrupted
/// basis shows up as failures there.
pub fn run_with_basis(basis: &WinogradBasis) -> Vec<CheckResult> {
    vec![
        CheckResult::from("input transform golden tile", check_golden(basis)),
        CheckResult::from("transform composition equals 2x2 correlation", check_basis(basis, 1000, 11)),
        CheckResult::from("winograd engine matches direct convolution", check_winograd_grid(&oracle_grid(), 42)),
        CheckResult::from("quantizer range, round-trip, endpoints, monotonicity", check_quantizer(20_000, 3)),
        CheckResult::from("integer GEMM matches 64-bit scalar loop", check_gemm_exact(200, 5)),
        CheckResult::from("affine GEMM matches GEMM of de-quantized operands", check_affine_gemm(100, 6)),
        CheckResult::from("GEMM mode matches faithful mode", check_mode_equivalence(&oracle_grid(), 42)),
        CheckResult::from("multiply counters match arithmetic formulas", check_counters()),
        CheckResult::from("tensor file round-trip is bitwise", check_file_round_trip(7)),
        CheckResult::from("error shrinks as bit-width grows", check_bit_trend(42).map(|v| {
            let parts: Vec<String> = v.iter().map(|(b, e)| format!("{b}b={e:.3e}")).collect();
            parts.join(" ")
        })),
    ]
}

pub fn check_golden(basis: &WinogradBasis) -> Result<String, String> {
    let got = basis.transform_input(&GOLDEN_TILE);
    if got.as_slice() == GOLDEN_TRANSFORMED {
        Ok("16/16 entries equal".into())
    } else {
        Err(format!("got {got:?}"))
    }
}

fn correlate_tile(d: &[f32], g: &[f32], m: usize, r: usize) -> Vec<f64> {
    let a = m + r - 1;
    let mut out = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            for u in 0..r {
                for v in 0..r {
                    out[i * m + j] += d[(i + u) * a + j + v] as f64 * g[u * r + v] as f64;
                }
            }
        }
    }
    out
}

pub fn check_basis(basis: &WinogradBasis, trials: usize, seed: u64) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (m, r, a) = (basis.m(), basis.r(), basis.alpha());
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let d: Vec<f32> = (0..a * a).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let g: Vec<f32> = (0..r * r).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let u = basis.transform_filter(&g);
        let v = basis.transform_input(&d);
        let prod: Vec<f32> = u.iter().zip(&v).map(|(x, y)| x * y).collect();
        let s = basis.transform_output(&prod);
        for (got, want) in s.iter().zip(correlate_tile(&d, &g, m, r)) {
            worst = worst.max((*got as f64 - want).abs());
        }
    }
    let msg = format!("max abs error {worst:.3e} over {trials} tiles (tol {BASIS_ABS_TOL:e})");
    if worst <= BASIS_ABS_TOL {
        Ok(msg)
    } else {
        Err(msg)
    }
}

pub fn check_winograd_grid(grid: &[ConvSpec], seed: u64) -> Result<String, String> {
    let mut worst = 0.0f64;
    for (i, spec) in grid.iter().enumerate() {
        let (x, w) = random_layer(spec, seed + i as u64);
        let want = direct_conv(&x, &w, spec).map_err(|e| e.to_string())?;
        let got = winograd_conv_fp(&x, &w, spec).map_err(|e| e.to_string())?;
        worst = worst.max(rel_frobenius(got.data(), want.data()));
    }
    let msg = format!(
        "max relative error {worst:.3e} over {} layers (tol {WINOGRAD_REL_TOL:e})",
        grid.len()
    );
    if worst <= WINOGRAD_REL_TOL {
        Ok(msg)
    } else {
        Err(msg)
    }
}

pub fn check_quantizer(samples: usize, seed: u64) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for bits in 2..=8u8 {
        let lo: f32 = rng.gen_range(-10.0..0.0);
        let hi: f32 = rng.gen_range(0.0..10.0);
        let mut xs: Vec<f32> = (0..samples).map(|_| rng.gen_range(lo..hi)).collect();
        let p = fit_params(&xs, bits).map_err(|e| e.to_string())?;
        check_quantizer_params(&p, &mut xs)?;
    }
    Ok(format!("7 bit-widths x {samples} values"))
}

/// Property checks for one parameter set; `xs` must lie in `[t_min, t_max]`
/// and is sorted in place.
pub fn check_quantizer_params(p: &QuantParams, xs: &mut [f32]) -> Result<(), String> {
    let bits = p.bits();
    let bound = p.scale() / 2.0 + 1e-6 * p.scale();
    xs.sort_by(|a, b| a.total_cmp(b));
    let mut prev = 0u8;
    for &x in xs.iter() {
        let code = p.quantize(x);
        if code > p.max_code() {
            return Err(format!("{bits}-bit code {code} out of range"));
        }
        if code < prev {
            return Err(format!("{bits}-bit quantizer not monotone at {x}"));
        }
        prev = code;
        let err = (p.reconstruct(code) - x as f64).abs();
        if err > bound {
            return Err(format!("{bits}-bit round-trip error {err:e} > {bound:e} at {x}"));
        }
    }
    // A degenerate range sends everything, t_max included, to code 0.
    let top_code = if p.scale() == 0.0 { 0 } else { p.max_code() };
    if p.quantize(p.t_min() as f32) != 0 || p.quantize(p.t_max() as f32) != top_code {
        return Err(format!("{bits}-bit endpoints do not map to 0 and {top_code}"));
    }
    let top = p.reconstruct(top_code);
    let ulp = f64::EPSILON * p.t_max().abs().max(p.t_min().abs()).max(p.scale() * p.max_code() as f64);
    if p.reconstruct(0) != p.t_min() || (top - p.t_max()).abs() > 2.0 * ulp {
        return Err(format!("{bits}-bit endpoint reconstruction {top} vs {}", p.t_max()));
    }
    Ok(())
}

pub fn check_gemm_exact(trials: usize, seed: u64) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = QuantParams::new(8, 0.0, 1.0).map_err(|e| e.to_string())?;
    for _ in 0..trials {
        let (m, k, n) = (rng.gen_range(1..=32), rng.gen_range(1..=32), rng.gen_range(1..=32));
        let a: Vec<u8> = (0..m * k).map(|_| rng.gen()).collect();
        let b: Vec<u8> = (0..k * n).map(|_| rng.gen()).collect();
        let am = CodeMatrix::new(m, k, a.clone(), p).map_err(|e| e.to_string())?;
        let bm = CodeMatrix::new(k, n, b.clone(), p).map_err(|e| e.to_string())?;
        let got = gemm_codes(&am, &bm).map_err(|e| e.to_string())?;
        for i in 0..m {
            for j in 0..n {
                let want: i64 = (0..k).map(|t| a[i * k + t] as i64 * b[t * n + j] as i64).sum();
                if got.sums[i * n + j] as i64 != want {
                    return Err(format!("{m}x{k}x{n}: ({i},{j}) {} != {want}", got.sums[i * n + j]));
                }
            }
        }
    }
    Ok(format!("{trials} random shapes up to 32x32x32"))
}

pub fn check_affine_gemm(trials: usize, seed: u64) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let (m, k, n) = (rng.gen_range(1..=24), rng.gen_range(1..=24), rng.gen_range(1..=24));
        let lo_a: f64 = rng.gen_range(-3.0..1.0);
        let lo_b: f64 = rng.gen_range(-3.0..1.0);
        let pa = QuantParams::new(rng.gen_range(2..=8), lo_a, lo_a + rng.gen_range(0.1..5.0))
            .map_err(|e| e.to_string())?;
        let pb = QuantParams::new(rng.gen_range(2..=8), lo_b, lo_b + rng.gen_range(0.1..5.0))
            .map_err(|e| e.to_string())?;
        let a: Vec<u8> = (0..m * k).map(|_| rng.gen_range(0..=pa.max_code())).collect();
        let b: Vec<u8> = (0..k * n).map(|_| rng.gen_range(0..=pb.max_code())).collect();
        let am = CodeMatrix::new(m, k, a, pa).map_err(|e| e.to_string())?;
        let bm = CodeMatrix::new(k, n, b, pb).map_err(|e| e.to_string())?;
        let got = affine_gemm(&am, &bm).map_err(|e| e.to_string())?;
        let (da, db) = (am.dequantized(), bm.dequantized());
        let (mut diff, mut norm) = (0.0f64, 0.0f64);
        for i in 0..m {
            for j in 0..n {
                let want: f64 = (0..k).map(|t| da[i * k + t] * db[t * n + j]).sum();
                diff += (got.data[i * n + j] as f64 - want).powi(2);
                norm += want * want;
            }
        }
        if norm > 0.0 {
            worst = worst.max((diff / norm).sqrt());
        }
    }
    let msg = format!("max relative error {worst:.3e} (tol {AFFINE_GEMM_REL_TOL:e})");
    if worst <= AFFINE_GEMM_REL_TOL {
        Ok(msg)
    } else {
        Err(msg)
    }
}

pub fn check_mode_equivalence(grid: &[ConvSpec], seed: u64) -> Result<String, String> {
    let mut worst = 0.0f64;
    for (i, spec) in grid.iter().enumerate() {
        let (x, w) = random_layer(spec, seed + i as u64);
        let faithful = LanceConfig::faithful(8, 8, Granularity::PerPosition);
        let gemm = LanceConfig::gemm(8, 8, Granularity::PerPosition);
        let a = lance_faithful(&x, &w, spec, &faithful).map_err(|e| e.to_string())?;
        let b = lance_gemm(&x, &w, spec, &gemm).map_err(|e| e.to_string())?;
        let d = max_abs_diff(a.data(), b.data());
        if spec.c == 1 && a != b {
            return Err(format!("single-channel layer {spec:?} differs by {d:e}"));
        }
        worst = worst.max(d);
    }
    let msg = format!(
        "max abs difference {worst:.3e} over {} layers (tol {MODE_EQUIV_ABS_TOL:e}); C=1 exact",
        grid.len()
    );
    if worst <= MODE_EQUIV_ABS_TOL {
        Ok(msg)
    } else {
        Err(msg)
    }
}

pub fn check_counters() -> Result<String, String> {
    let specs = [
        ConvSpec::new(1, 3, 8, 8, 4, 1),
        ConvSpec::new(2, 5, 9, 7, 3, 0),
        ConvSpec::new(1, 1, 3, 3, 1, 0),
    ];
    let cfg = LanceConfig::faithful(8, 8, Granularity::PerPosition);
    for spec in specs {
        let spec = spec.map_err(|e| e.to_string())?;
        let (x, w) = random_layer(&spec, 1);
        for engine in [
            Engine::Direct,
            Engine::QuantizedDirect,
            Engine::WinogradFp,
            Engine::LanceFaithful,
            Engine::LanceGemm,
        ] {
            reset_multiply_counter();
            engine.run(&x, &w, &spec, &cfg).map_err(|e| e.to_string())?;
            let counted = multiply_counter();
            let want = arithmetic_report(&spec, engine).multiplies;
            if counted != want {
                return Err(format!("{} on {spec:?}: counted {counted}, formula {want}", engine.name()));
            }
        }
        let even = !spec.has_tile_waste();
        let ratio = arithmetic_report(&spec, Engine::WinogradFp).ratio_vs_direct;
        if even && ratio != 2.25 {
            return Err(format!("even-output ratio {ratio} != 2.25"));
        }
    }
    Ok("5 engines x 3 layers; even-output ratio 2.25".into())
}

pub fn check_file_round_trip(seed: u64) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data: Vec<f32> = (0..2 * 3 * 4 * 5).map(|_| f32::from_bits(rng.gen())).collect();
    data[0] = f32::from_bits(0x7fc0_1234);
    data[1] = f32::from_bits(0xffa0_0001);
    let t = Tensor4::new(2, 3, 4, 5, data).map_err(|e| e.to_string())?;
    let mut buf = Vec::new();
    write_tensor(&t, &mut buf).map_err(|e| e.to_string())?;
    let back = read_tensor(&buf[..]).map_err(|e| e.to_string())?;
    let same = back.dims() == t.dims()
        && back
            .data()
            .iter()
            .zip(t.data())
            .all(|(a, b)| a.to_bits() == b.to_bits());
    if same {
        Ok(format!("{} bytes incl. NaN payloads", buf.len()))
    } else {
        Err("payload changed".into())
    }
}

/// Fixed trend layer: 1x16x16x16 input, 16 filters, pad 1.
pub fn trend_spec() -> ConvSpec {
    ConvSpec::new(1, 16, 16, 16, 16, 1).expect("trend spec")
}

/// Mean relative error of per-tile LANCE against direct convolution at
/// 4..=8 bits (same width for weights and inputs).
pub fn bit_trend(seed: u64) -> crate::Result<Vec<(u8, f64)>> {
    let spec = trend_spec();
    let (x, w) = random_layer(&spec, seed);
    let want = direct_conv(&x, &w, &spec)?;
    (4..=8u8)
        .map(|b| {
            let y = lance_faithful(&x, &w, &spec, &LanceConfig::faithful(b, b, Granularity::PerTile))?;
            Ok((b, mean_rel_error(y.data(), want.data())))
        })
        .collect()
}

/// Non-increasing from 4 to 8 bits, with at most one tie.
pub fn trend_holds(errors: &[(u8, f64)]) -> bool {
    let mut ties = 0;
    for pair in errors.windows(2) {
        let (prev, next) = (pair[0].1, pair[1].1);
        if next > prev {
            return false;
        }
        if next == prev {
            ties += 1;
        }
    }
    ties <= 1
}

pub fn check_bit_trend(seed: u64) -> Result<Vec<(u8, f64)>, String> {
    let errors = bit_trend(seed).map_err(|e| e.to_string())?;
    if trend_holds(&errors) {
        Ok(errors)
    } else {
        Err(format!("not non-increasing: {errors:?}"))
    }
}
