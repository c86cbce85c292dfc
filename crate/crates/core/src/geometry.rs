//! Rotation, angle, and camera-normalization math.
//!
//! Gaze and head orientations are pitch/yaw pairs (x-y convention, no roll)
//! measured from the frontal orientation `(0, 0)`. The fixed frontal axis is
//! `+z`; a pitch/yaw pair maps to a unit direction by rotating that axis.

use nalgebra::{Matrix3, Vector3};

use crate::error::{FazeError, Result};

/// Clamp bound applied to every arccos argument. arccos has an unbounded
/// derivative at ±1, which destabilizes gradient-based training.
pub const ACOS_CLAMP: f64 = 1.0 - 1e-7;

/// `acos` with the argument clamped to `[-ACOS_CLAMP, ACOS_CLAMP]`.
pub fn clamped_acos(x: f64) -> f64 {
    x.clamp(-ACOS_CLAMP, ACOS_CLAMP).acos()
}

/// Pitch/yaw orientation in radians. Frontal is `(0, 0)`; roll is always zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerAngles {
    /// Pitch (elevation), radians.
    pub pitch: f64,
    /// Yaw (azimuth), radians.
    pub yaw: f64,
}

impl EulerAngles {
    pub fn new(pitch: f64, yaw: f64) -> Self {
        EulerAngles { pitch, yaw }
    }

    /// The frontal orientation.
    pub fn frontal() -> Self {
        EulerAngles::new(0.0, 0.0)
    }

    pub fn from_degrees(pitch_deg: f64, yaw_deg: f64) -> Self {
        EulerAngles::new(pitch_deg.to_radians(), yaw_deg.to_radians())
    }

    pub fn is_finite(&self) -> bool {
        self.pitch.is_finite() && self.yaw.is_finite()
    }
}

/// An orthonormal 3×3 rotation matrix (det +1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix3(Matrix3<f64>);

impl RotationMatrix3 {
    /// Validation slack for user-supplied matrices. Matrices built by this
    /// module are orthonormal to ~1e-15.
    const ORTHONORMAL_TOL: f64 = 1e-9;

    pub fn identity() -> Self {
        RotationMatrix3(Matrix3::identity())
    }

    /// Wrap a matrix, verifying `RᵀR = I` and `det R = 1`.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(FazeError::invalid("rotation matrix has non-finite entries"));
        }
        let gram = m.transpose() * m;
        let ortho_err = (gram - Matrix3::identity()).abs().max();
        if ortho_err > Self::ORTHONORMAL_TOL {
            return Err(FazeError::invalid(format!(
                "matrix is not orthonormal (max |RᵀR - I| = {ortho_err:.3e})"
            )));
        }
        let det = m.determinant();
        if (det - 1.0).abs() > Self::ORTHONORMAL_TOL {
            return Err(FazeError::invalid(format!(
                "matrix determinant {det} is not +1"
            )));
        }
        Ok(RotationMatrix3(m))
    }

    /// Wrap a matrix known to be a rotation (products/transposes of valid
    /// rotations).
    pub(crate) fn new_unchecked(m: Matrix3<f64>) -> Self {
        RotationMatrix3(m)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    /// The inverse rotation. Exact for orthonormal matrices.
    pub fn transpose(&self) -> Self {
        RotationMatrix3(self.0.transpose())
    }

    /// `self · other` (apply `other` first).
    pub fn compose(&self, other: &RotationMatrix3) -> Self {
        RotationMatrix3(self.0 * other.0)
    }

    pub fn apply(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }
}

/// A unit-norm 3D gaze direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GazeVector(Vector3<f64>);

impl GazeVector {
    /// Normalize `v` to unit length.
    pub fn new(v: Vector3<f64>) -> Result<Self> {
        if v.iter().any(|x| !x.is_finite()) {
            return Err(FazeError::invalid("gaze vector has non-finite components"));
        }
        let n = v.norm();
        if n < 1e-12 {
            return Err(FazeError::invalid("gaze vector has zero norm"));
        }
        Ok(GazeVector(v / n))
    }

    /// The frontal axis `(0, 0, 1)`.
    pub fn frontal() -> Self {
        GazeVector(Vector3::new(0.0, 0.0, 1.0))
    }

    pub fn vector(&self) -> &Vector3<f64> {
        &self.0
    }
}

/// Virtual camera used for data normalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VirtualCamera {
    pub focal_length_mm: f64,
    pub distance_mm: f64,
    pub patch_width: u32,
    pub patch_height: u32,
}

impl Default for VirtualCamera {
    fn default() -> Self {
        VirtualCamera {
            focal_length_mm: 1300.0,
            distance_mm: 600.0,
            patch_width: 256,
            patch_height: 64,
        }
    }
}

/// Convert a pitch/yaw pair to a rotation matrix: `R = R_y(yaw) · R_x(pitch)`.
pub fn euler_to_rotation(angles: &EulerAngles) -> Result<RotationMatrix3> {
    if !angles.is_finite() {
        return Err(FazeError::invalid("euler angles must be finite"));
    }
    let (st, ct) = angles.pitch.sin_cos();
    let (sp, cp) = angles.yaw.sin_cos();
    // R_y(φ) · R_x(θ), expanded.
    let m = Matrix3::new(
        cp,
        sp * st,
        sp * ct, //
        0.0,
        ct,
        -st, //
        -sp,
        cp * st,
        cp * ct,
    );
    Ok(RotationMatrix3::new_unchecked(m))
}

/// Rotation taking orientation `a` to orientation `b`: `R_ba = R_b · R_aᵀ`.
pub fn relative_rotation(r_a: &RotationMatrix3, r_b: &RotationMatrix3) -> RotationMatrix3 {
    r_b.compose(&r_a.transpose())
}

/// The unit direction for a pitch/yaw pair: `R(θ, φ) · (0, 0, 1)`.
pub fn gaze_vector_from_euler(angles: &EulerAngles) -> Result<GazeVector> {
    let r = euler_to_rotation(angles)?;
    // Column 2 of R, i.e. R applied to the frontal axis.
    Ok(GazeVector(r.apply(GazeVector::frontal().vector())))
}

/// Inverse of [`gaze_vector_from_euler`] on `|pitch|, |yaw| < π/2`.
pub fn euler_from_gaze_vector(g: &GazeVector) -> Result<EulerAngles> {
    let v = g.vector();
    if v.y.abs() > 1.0 - 1e-9 {
        return Err(FazeError::DegenerateInput(
            "gaze vector is parallel to the y-axis (gimbal lock)".into(),
        ));
    }
    let pitch = (-v.y).asin();
    let yaw = v.x.atan2(v.z);
    Ok(EulerAngles::new(pitch, yaw))
}

/// Angle in radians between two non-zero vectors, in `[0, π]`.
///
/// The cosine is clamped before arccos (see [`ACOS_CLAMP`]).
pub fn angular_distance(a: &Vector3<f64>, b: &Vector3<f64>) -> Result<f64> {
    let (na, nb) = (a.norm(), b.norm());
    if na < 1e-12 || nb < 1e-12 {
        return Err(FazeError::invalid(
            "angular distance is undefined for zero-norm vectors",
        ));
    }
    Ok(clamped_acos(a.dot(b) / (na * nb)))
}

/// Rotation and scale mapping a camera-space reference point onto the
/// virtual camera's optical axis at the canonical distance, with the head's
/// x-axis horizontal after rotation.
///
/// Returns `(R_n, s)` with `s = cam.distance_mm / ‖p‖`, so that
/// `s · R_n · p = (0, 0, cam.distance_mm)`.
pub fn normalization_matrix(
    head_rotation: &RotationMatrix3,
    reference_point: &Vector3<f64>,
    cam: &VirtualCamera,
) -> Result<(RotationMatrix3, f64)> {
    if reference_point.z <= 0.0 {
        return Err(FazeError::invalid(
            "reference point must have positive depth",
        ));
    }
    let dist = reference_point.norm();
    let z_axis = reference_point / dist;
    let head_x = head_rotation.matrix().column(0).into_owned();
    let y_axis = z_axis.cross(&head_x);
    let ny = y_axis.norm();
    if ny < 1e-9 {
        return Err(FazeError::DegenerateInput(
            "head x-axis is parallel to the camera-to-reference direction".into(),
        ));
    }
    let y_axis = y_axis / ny;
    let x_axis = y_axis.cross(&z_axis);
    let rot = Matrix3::from_rows(&[x_axis.transpose(), y_axis.transpose(), z_axis.transpose()]);
    Ok((
        RotationMatrix3::new_unchecked(rot),
        cam.distance_mm / dist,
    ))
}
