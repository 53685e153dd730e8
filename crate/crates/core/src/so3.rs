//! Rotation matrices and the Angle-Axis Space chart of SO(3).
//!
//! The log map sends a rotation into the closed ball of radius π with the
//! negative half of the boundary sphere removed, so every rotation has exactly
//! one representative. Boundary points (angle exactly π) are canonicalized to
//! the positive half sphere: `x > 0`, or `x = 0, y > 0`, or `x = y = 0, z >= 0`.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// Frobenius tolerance on `RᵀR - I` and on `det R - 1`.
pub const ORTHOGONALITY_TOLERANCE: f64 = 1e-8;

/// Slack allowed on `‖ψ‖ <= π` for log map outputs.
pub const BALL_TOLERANCE: f64 = 1e-9;

const SMALL_ANGLE: f64 = 1e-8;
// tr(R) below -1 + this switches log to the axis-extraction branch.
const NEAR_PI_TRACE: f64 = 1e-7;
// sin θ below this is treated as an exact half turn.
const HALF_TURN_SINE: f64 = 1e-12;

/// A 3×3 special orthogonal matrix.
#[derive(Clone, Copy, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl fmt::Debug for Rotation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = &self.0;
        write!(
            f,
            "Rotation[[{:.6}, {:.6}, {:.6}], [{:.6}, {:.6}, {:.6}], [{:.6}, {:.6}, {:.6}]]",
            m[(0, 0)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 0)],
            m[(1, 1)],
            m[(1, 2)],
            m[(2, 0)],
            m[(2, 1)],
            m[(2, 2)]
        )
    }
}

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Matrix3::identity())
    }

    /// Validates `m` against [`ORTHOGONALITY_TOLERANCE`].
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        let residual = orthogonality_residual(&m);
        if residual <= ORTHOGONALITY_TOLERANCE {
            Ok(Rotation(m))
        } else {
            Err(Error::NotARotation { residual })
        }
    }

    /// Projects an arbitrary invertible matrix onto SO(3) with the polar
    /// decomposition. Only for inputs the caller has explicitly opted to repair.
    pub fn from_matrix_orthonormalized(m: Matrix3<f64>) -> Result<Self> {
        if !m.iter().all(|v| v.is_finite()) || m.determinant() <= 0.0 {
            return Err(Error::NotARotation {
                residual: orthogonality_residual(&m),
            });
        }
        let svd = m.svd(true, true);
        let (u, v_t) = match (svd.u, svd.v_t) {
            (Some(u), Some(v_t)) => (u, v_t),
            _ => {
                return Err(Error::NotARotation {
                    residual: orthogonality_residual(&m),
                })
            }
        };
        let mut r = u * v_t;
        if r.determinant() < 0.0 {
            let mut u = u;
            u.column_mut(2).neg_mut();
            r = u * v_t;
        }
        Ok(Rotation(r))
    }

    /// Builds a rotation from row-major entries.
    pub fn from_row_slice(rows: &[f64]) -> Result<Self> {
        if rows.len() != 9 {
            return Err(Error::InvalidInput(format!(
                "rotation needs 9 entries, got {}",
                rows.len()
            )));
        }
        Self::from_matrix(Matrix3::from_row_slice(rows))
    }

    /// Rotation from a unit quaternion `(w, x, y, z)`; the quaternion is normalized.
    pub fn from_quaternion(w: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::InvalidInput("zero or non-finite quaternion".into()));
        }
        let (w, x, y, z) = (w / n, x / n, y / n, z / n);
        let m = Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        );
        Self::from_matrix(m)
    }

    /// Row-major entries.
    pub fn to_row_array(&self) -> [f64; 9] {
        let m = &self.0;
        [
            m[(0, 0)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 0)],
            m[(1, 1)],
            m[(1, 2)],
            m[(2, 0)],
            m[(2, 1)],
            m[(2, 2)],
        ]
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Rotation {
        Rotation(self.0.transpose())
    }

    /// `self · other`.
    pub fn compose(&self, other: &Rotation) -> Rotation {
        Rotation(self.0 * other.0)
    }

    /// `selfᵀ · other`, the rotation taking `self` to `other` in the body frame.
    pub fn between(&self, other: &Rotation) -> Rotation {
        Rotation(self.0.tr_mul(&other.0))
    }

    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }

    /// Column `i` of the matrix, i.e. the body axis `i` in the outer frame.
    pub fn axis(&self, i: usize) -> Vector3<f64> {
        self.0.column(i).into_owned()
    }

    /// Rotation angle in `[0, π]`.
    pub fn angle(&self) -> f64 {
        log_map(self).angle()
    }
}

fn orthogonality_residual(m: &Matrix3<f64>) -> f64 {
    if !m.iter().all(|v| v.is_finite()) {
        return f64::INFINITY;
    }
    let gram = m.transpose() * m - Matrix3::identity();
    gram.norm().max((m.determinant() - 1.0).abs())
}

/// A point of the Angle-Axis Space: axis times angle, `‖v‖ <= π`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AngleAxis(Vector3<f64>);

impl AngleAxis {
    pub fn vector(&self) -> &Vector3<f64> {
        &self.0
    }

    pub fn into_vector(self) -> Vector3<f64> {
        self.0
    }

    pub fn angle(&self) -> f64 {
        self.0.norm()
    }

    /// Unit rotation axis, or `None` for the identity.
    pub fn axis(&self) -> Option<Vector3<f64>> {
        let n = self.0.norm();
        (n > 0.0).then(|| self.0 / n)
    }
}

/// True when `v` lies on the negative half sphere (conditions c₁–c₃).
pub fn on_negative_half_sphere(v: &Vector3<f64>) -> bool {
    v.x < 0.0 || (v.x == 0.0 && v.y < 0.0) || (v.x == 0.0 && v.y == 0.0 && v.z < 0.0)
}

/// Position and chart velocity `η = [ψ; ψ̇]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TangentState {
    pub psi: Vector3<f64>,
    pub psi_dot: Vector3<f64>,
}

impl TangentState {
    pub fn to_array(&self) -> [f64; 6] {
        [
            self.psi.x,
            self.psi.y,
            self.psi.z,
            self.psi_dot.x,
            self.psi_dot.y,
            self.psi_dot.z,
        ]
    }
}

pub fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rodrigues' formula. Total on ℝ³.
pub fn exp_map(psi: &Vector3<f64>) -> Rotation {
    let theta2 = psi.norm_squared();
    let theta = theta2.sqrt();
    let (a, b) = if theta < SMALL_ANGLE {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    let k = hat(psi);
    Rotation(Matrix3::identity() + k * a + k * k * b)
}

/// Inverse of [`exp_map`] onto the Angle-Axis Space.
pub fn log_map(r: &Rotation) -> AngleAxis {
    let m = r.matrix();
    let trace = m.trace();
    let cos_theta = ((trace - 1.0) * 0.5).clamp(-1.0, 1.0);
    // (R - Rᵀ)/2 = sin θ · hat(axis)
    let s = Vector3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    );
    let sin_theta = s.norm();

    if trace > -1.0 + NEAR_PI_TRACE {
        if sin_theta == 0.0 {
            return AngleAxis(Vector3::zeros());
        }
        let theta = sin_theta.atan2(cos_theta);
        return AngleAxis(s * (theta / sin_theta));
    }

    // Near a half turn the skew part vanishes; read the axis from the
    // symmetric part instead: (R + Rᵀ)/2 = cos θ I + (1 - cos θ) u uᵀ.
    let sym = (m + m.transpose()) * 0.5;
    let outer = (sym - Matrix3::identity() * cos_theta) / (1.0 - cos_theta);
    let pivot = (0..3)
        .max_by(|&i, &j| outer[(i, i)].total_cmp(&outer[(j, j)]))
        .unwrap_or(0);
    let mut axis: Vector3<f64> = outer.column(pivot).into_owned();
    let n = axis.norm();
    if n == 0.0 {
        return AngleAxis(Vector3::zeros());
    }
    axis /= n;

    if sin_theta < HALF_TURN_SINE {
        if on_negative_half_sphere(&axis) {
            axis = -axis;
        }
        // -0.0 entries would otherwise defeat the exact-zero tie rules.
        axis.iter_mut().for_each(|c| {
            if *c == 0.0 {
                *c = 0.0
            }
        });
        return AngleAxis(axis * PI);
    }
    if axis.dot(&s) < 0.0 {
        axis = -axis;
    }
    let theta = axis.dot(&s).abs().atan2(cos_theta);
    AngleAxis(axis * theta)
}

/// Angle of `RᵢᵀRⱼ`, in `[0, π]`.
pub fn geodesic_distance(ri: &Rotation, rj: &Rotation) -> f64 {
    log_map(&ri.between(rj)).angle()
}

/// Chart coordinates of `r` in the tangent space extended at `aux`.
pub fn project_to_frame(r: &Rotation, aux: &Rotation) -> AngleAxis {
    log_map(&aux.between(r))
}

/// `aux · exp(ψ)`; `ψ` may lie outside the ball.
pub fn recover_orientation(psi: &Vector3<f64>, aux: &Rotation) -> Rotation {
    aux.compose(&exp_map(psi))
}

/// Derivative of a uniformly sampled vector series: central differences in
/// the interior, second-order one-sided at the ends (plain difference when
/// only two samples exist).
pub fn finite_difference_velocity(series: &[Vector3<f64>], dt: f64) -> Result<Vec<Vector3<f64>>> {
    let n = series.len();
    if n < 2 {
        return Err(Error::SeriesTooShort { len: n, min: 2 });
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "time step must be positive, got {dt}"
        )));
    }
    if n == 2 {
        let v = (series[1] - series[0]) / dt;
        return Ok(vec![v, v]);
    }
    let mut out = Vec::with_capacity(n);
    out.push((series[1] * 4.0 - series[0] * 3.0 - series[2]) / (2.0 * dt));
    for w in series.windows(3) {
        out.push((w[2] - w[0]) / (2.0 * dt));
    }
    out.push((series[n - 1] * 3.0 - series[n - 2] * 4.0 + series[n - 3]) / (2.0 * dt));
    Ok(out)
}

/// Removes `2π` wraps from a chart sequence in place.
///
/// The sample closest to the chart origin stays put; every other sample is
/// moved to the equivalent coordinate `ψ + 2πk·ψ/‖ψ‖` nearest its neighbour,
/// walking outwards from that anchor. The rotations are unchanged.
pub fn unwrap_chart(series: &mut [Vector3<f64>]) {
    let Some(anchor) =
        (0..series.len()).min_by(|&a, &b| series[a].norm().total_cmp(&series[b].norm()))
    else {
        return;
    };
    let nearest = |prev: &Vector3<f64>, v: Vector3<f64>| -> Vector3<f64> {
        let angle = v.norm();
        if angle < 1e-12 {
            return v;
        }
        let u = v / angle;
        // Equivalent coordinates lie on the line through u at angle + 2πk.
        let k = ((prev.dot(&u) - angle) / (2.0 * PI)).round();
        v + u * (2.0 * PI * k)
    };
    for i in anchor + 1..series.len() {
        series[i] = nearest(&series[i - 1], series[i]);
    }
    for i in (0..anchor).rev() {
        series[i] = nearest(&series[i + 1], series[i]);
    }
}

/// Single-axis rotations, mostly for tests and setups.
pub fn rot_x(angle: f64) -> Rotation {
    exp_map(&Vector3::new(angle, 0.0, 0.0))
}

pub fn rot_y(angle: f64) -> Rotation {
    exp_map(&Vector3::new(0.0, angle, 0.0))
}

pub fn rot_z(angle: f64) -> Rotation {
    exp_map(&Vector3::new(0.0, 0.0, angle))
}
