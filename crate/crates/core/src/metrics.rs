//! Error measures between an engine output and a reference.

/// `‖got − want‖₂ / ‖want‖₂`; the absolute norm when `want` is all zero.
pub fn rel_frobenius(got: &[f32], want: &[f32]) -> f64 {
    assert_eq!(got.len(), want.len(), "length mismatch");
    let (mut diff, mut norm) = (0.0f64, 0.0f64);
    for (&a, &b) in got.iter().zip(want) {
        let d = a as f64 - b as f64;
        diff += d * d;
        norm += b as f64 * b as f64;
    }
    if norm == 0.0 {
        diff.sqrt()
    } else {
        (diff / norm).sqrt()
    }
}

pub fn max_abs_diff(got: &[f32], want: &[f32]) -> f64 {
    assert_eq!(got.len(), want.len(), "length mismatch");
    got.iter()
        .zip(want)
        .map(|(&a, &b)| (a as f64 - b as f64).abs())
        .fold(0.0, f64::max)
}

/// Mean absolute error normalized by the mean magnitude of `want`.
pub fn mean_rel_error(got: &[f32], want: &[f32]) -> f64 {
    assert_eq!(got.len(), want.len(), "length mismatch");
    let (mut err, mut mag) = (0.0f64, 0.0f64);
    for (&a, &b) in got.iter().zip(want) {
        err += (a as f64 - b as f64).abs();
        mag += (b as f64).abs();
    }
    if mag == 0.0 {
        err / got.len().max(1) as f64
    } else {
        err / mag
    }
}
