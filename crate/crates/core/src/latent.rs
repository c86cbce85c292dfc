//! The disentangled latent code `z = {z^a; z^g; z^h}` and its algebra.
//!
//! The gaze and head sub-codes are 3×F matrices whose columns are 3D vectors,
//! so a rotation acts on them by left multiplication. Flattening to a single
//! column (at MLP and decoder boundaries) is column-major; the structured
//! form is canonical.

use nalgebra::Matrix3xX;

use crate::error::{FazeError, Result};
use crate::geometry::RotationMatrix3;

/// Threshold below which a row is considered degenerate and passed through
/// [`normalize_gaze_code`] unchanged.
pub const ZERO_ROW_GUARD: f64 = 1e-8;

/// Latent code dimensions `(F_a, F_g, F_h)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CodeDims {
    pub appearance: usize,
    pub gaze: usize,
    pub head: usize,
}

impl Default for CodeDims {
    /// Paper-scale defaults: appearance 64, gaze 3×2, head 3×16.
    fn default() -> Self {
        CodeDims {
            appearance: 64,
            gaze: 2,
            head: 16,
        }
    }
}

impl CodeDims {
    /// Total flattened length `F_a + 3·F_g + 3·F_h`.
    pub fn total(&self) -> usize {
        self.appearance + 3 * self.gaze + 3 * self.head
    }
}

/// The disentangled latent code.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCode {
    /// Appearance vector, length `F_a`.
    pub appearance: Vec<f64>,
    /// Gaze sub-code, 3×F_g.
    pub gaze: Matrix3xX<f64>,
    /// Head sub-code, 3×F_h.
    pub head: Matrix3xX<f64>,
}

impl LatentCode {
    /// Split a flat (column-major) vector into a structured code.
    pub fn from_flat(flat: &[f64], dims: &CodeDims) -> Result<Self> {
        if flat.len() != dims.total() {
            return Err(FazeError::Configuration(format!(
                "flat code length {} does not match configured dimensions {}",
                flat.len(),
                dims.total()
            )));
        }
        let a_end = dims.appearance;
        let g_end = a_end + 3 * dims.gaze;
        Ok(LatentCode {
            appearance: flat[..a_end].to_vec(),
            gaze: Matrix3xX::from_column_slice(&flat[a_end..g_end]),
            head: Matrix3xX::from_column_slice(&flat[g_end..]),
        })
    }

    /// Flatten back to a single column (column-major), inverse of
    /// [`LatentCode::from_flat`].
    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat =
            Vec::with_capacity(self.appearance.len() + 3 * self.gaze.ncols() + 3 * self.head.ncols());
        flat.extend_from_slice(&self.appearance);
        flat.extend_from_slice(self.gaze.as_slice());
        flat.extend_from_slice(self.head.as_slice());
        flat
    }

    pub fn dims(&self) -> CodeDims {
        CodeDims {
            appearance: self.appearance.len(),
            gaze: self.gaze.ncols(),
            head: self.head.ncols(),
        }
    }
}

/// Rotate the gaze and head sub-codes, leaving appearance untouched:
/// `{z^a; R_g·z^g; R_h·z^h}`.
pub fn rotate_code(
    z: &LatentCode,
    r_gaze: &RotationMatrix3,
    r_head: &RotationMatrix3,
) -> LatentCode {
    LatentCode {
        appearance: z.appearance.clone(),
        gaze: r_gaze.matrix() * &z.gaze,
        head: r_head.matrix() * &z.head,
    }
}

/// Map a gaze sub-code to the frontal reference orientation by applying the
/// inverse of its ground-truth gaze rotation: `Rᵀ·z^g`.
pub fn frontalize_gaze_code(z_gaze: &Matrix3xX<f64>, r_gaze: &RotationMatrix3) -> Matrix3xX<f64> {
    r_gaze.matrix().transpose() * z_gaze
}

/// Divide each of the 3 rows by its ℓ2 norm over the F_g entries.
/// Rows with norm below [`ZERO_ROW_GUARD`] pass through unchanged.
pub fn normalize_gaze_code(z_gaze: &Matrix3xX<f64>) -> Matrix3xX<f64> {
    let mut out = z_gaze.clone();
    for r in 0..3 {
        let norm = out.row(r).norm();
        if norm >= ZERO_ROW_GUARD {
            for c in 0..out.ncols() {
                out[(r, c)] /= norm;
            }
        }
    }
    out
}
