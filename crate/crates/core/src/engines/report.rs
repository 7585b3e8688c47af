use serde::Serialize;

use super::{ConvSpec, Engine};

/// Multiplication count for one engine on one layer. Additions are not
/// counted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ArithmeticReport {
    pub engine: Engine,
    pub multiplies: u64,
    pub direct_multiplies: u64,
    pub adds_ignored: bool,
    /// `direct_multiplies / multiplies`
    pub ratio_vs_direct: f64,
    /// Ragged output edges: part of the last tile row/column is computed and
    /// then discarded.
    pub tile_waste: bool,
}

pub fn arithmetic_report(spec: &ConvSpec, engine: Engine) -> ArithmeticReport {
    let direct = (spec.out_h() * spec.out_w() * spec.r * spec.s * spec.c * spec.k * spec.n) as u64;
    let (multiplies, tile_waste) = if engine.is_winograd() {
        let alpha = (super::TILE_M + super::TILE_R - 1) as u64;
        (
            alpha * alpha * (spec.tiles_per_image() * spec.n * spec.c * spec.k) as u64,
            spec.has_tile_waste(),
        )
    } else {
        (direct, false)
    };
    ArithmeticReport {
        engine,
        multiplies,
        direct_multiplies: direct,
        adds_ignored: true,
        ratio_vs_direct: direct as f64 / multiplies as f64,
        tile_waste,
    }
}
