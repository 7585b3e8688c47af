//! Minimal-filtering transforms for F(2x2, 3x3).
//!
//! A 4x4 input tile `d` and a 3x3 filter `g` produce a 2x2 output tile
//! `Aᵀ [(G g Gᵀ) ⊙ (Bᵀ d B)] A` using 16 multiplications in the element-wise
//! stage, against 36 for direct correlation.

use crate::error::{invalid, Result};

/// Transform matrices with tile geometry, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct WinogradBasis {
    m: usize,
    r: usize,
    alpha: usize,
    /// `alpha x r`
    g_mat: Vec<f32>,
    /// `alpha x alpha`
    bt_mat: Vec<f32>,
    /// `m x alpha`
    at_mat: Vec<f32>,
}

/// Largest `alpha` the stack scratch in [`sandwich`] accommodates.
const MAX_ALPHA: usize = 8;

#[rustfmt::skip]
const G_F2X2_3X3: [f32; 12] = [
    1.0,  0.0, 0.0,
    0.5,  0.5, 0.5,
    0.5, -0.5, 0.5,
    0.0,  0.0, 1.0,
];

#[rustfmt::skip]
const BT_F2X2_3X3: [f32; 16] = [
    1.0,  0.0, -1.0,  0.0,
    0.0,  1.0,  1.0,  0.0,
    0.0, -1.0,  1.0,  0.0,
    0.0,  1.0,  0.0, -1.0,
];

#[rustfmt::skip]
const AT_F2X2_3X3: [f32; 8] = [
    1.0, 1.0,  1.0,  0.0,
    0.0, 1.0, -1.0, -1.0,
];

pub fn basis_f2x2_3x3() -> WinogradBasis {
    WinogradBasis::f2x2_3x3()
}

impl WinogradBasis {
    pub fn f2x2_3x3() -> Self {
        Self {
            m: 2,
            r: 3,
            alpha: 4,
            g_mat: G_F2X2_3X3.to_vec(),
            bt_mat: BT_F2X2_3X3.to_vec(),
            at_mat: AT_F2X2_3X3.to_vec(),
        }
    }

    /// Builds a basis from explicit matrices. Shapes are checked, the
    /// correlation identity is not.
    pub fn from_parts(
        m: usize,
        r: usize,
        g_mat: Vec<f32>,
        bt_mat: Vec<f32>,
        at_mat: Vec<f32>,
    ) -> Result<Self> {
        let alpha = m + r - 1;
        if m == 0 || r == 0 || alpha > MAX_ALPHA {
            return invalid(format!("unsupported tile geometry m={m} r={r}"));
        }
        if g_mat.len() != alpha * r || bt_mat.len() != alpha * alpha || at_mat.len() != m * alpha
        {
            return invalid("transform matrix shapes do not match tile geometry");
        }
        Ok(Self {
            m,
            r,
            alpha,
            g_mat,
            bt_mat,
            at_mat,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn r(&self) -> usize {
        self.r
    }

    /// Input tile side, `m + r - 1`.
    pub fn alpha(&self) -> usize {
        self.alpha
    }

    /// Number of Winograd-domain positions, `alpha²`.
    pub fn positions(&self) -> usize {
        self.alpha * self.alpha
    }

    pub fn g_mat(&self) -> &[f32] {
        &self.g_mat
    }

    pub fn bt_mat(&self) -> &[f32] {
        &self.bt_mat
    }

    pub fn at_mat(&self) -> &[f32] {
        &self.at_mat
    }

    /// `Bᵀ d B` for a row-major `alpha x alpha` tile.
    pub fn transform_input(&self, d: &[f32]) -> Vec<f32> {
        let mut out = vec![0.0; self.alpha * self.alpha];
        self.transform_input_into(d, &mut out);
        out
    }

    pub fn transform_input_into(&self, d: &[f32], out: &mut [f32]) {
        sandwich(&self.bt_mat, self.alpha, self.alpha, d, out);
    }

    /// `G g Gᵀ` for a row-major `r x r` filter.
    pub fn transform_filter(&self, g: &[f32]) -> Vec<f32> {
        let mut out = vec![0.0; self.alpha * self.alpha];
        self.transform_filter_into(g, &mut out);
        out
    }

    pub fn transform_filter_into(&self, g: &[f32], out: &mut [f32]) {
        sandwich(&self.g_mat, self.alpha, self.r, g, out);
    }

    /// `Aᵀ M A` for a row-major `alpha x alpha` domain tile.
    pub fn transform_output(&self, m_dom: &[f32]) -> Vec<f32> {
        let mut out = vec![0.0; self.m * self.m];
        self.transform_output_into(m_dom, &mut out);
        out
    }

    pub fn transform_output_into(&self, m_dom: &[f32], out: &mut [f32]) {
        sandwich(&self.at_mat, self.m, self.alpha, m_dom, out);
    }
}

/// `out = L X Lᵀ` with `L: rows x inner` and `X: inner x inner`.
fn sandwich(l: &[f32], rows: usize, inner: usize, x: &[f32], out: &mut [f32]) {
    assert_eq!(x.len(), inner * inner, "transform operand has wrong size");
    assert_eq!(out.len(), rows * rows, "transform output has wrong size");
    let mut tmp = [0.0f32; MAX_ALPHA * MAX_ALPHA];
    for i in 0..rows {
        for j in 0..inner {
            let mut acc = 0.0;
            for k in 0..inner {
                acc += l[i * inner + k] * x[k * inner + j];
            }
            tmp[i * inner + j] = acc;
        }
    }
    for i in 0..rows {
        for j in 0..rows {
            let mut acc = 0.0;
            for k in 0..inner {
                acc += tmp[i * inner + k] * l[j * inner + k];
            }
            out[i * rows + j] = acc;
        }
    }
}
