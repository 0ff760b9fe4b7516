//! Axis-angle rotations and their derivatives.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Below this angle the trigonometric coefficients are evaluated from their
/// power series. The series are truncated after the θ⁶ term, which keeps
/// them exact to machine precision on the whole interval.
const SERIES_ANGLE: f64 = 1e-2;

pub fn skew(w: &Vec3) -> Mat3 {
    Mat3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// Coefficients of `R = I + a·K + b·K²` (with `K = skew(w)`) together with
/// `c = a'(θ)/θ` and `d = b'(θ)/θ`, used by the Jacobian.
fn coefficients(theta_sq: f64) -> [f64; 4] {
    let theta = theta_sq.sqrt();
    if theta < SERIES_ANGLE {
        let t2 = theta_sq;
        let t4 = t2 * t2;
        let t6 = t4 * t2;
        [
            1.0 - t2 / 6.0 + t4 / 120.0 - t6 / 5040.0,
            0.5 - t2 / 24.0 + t4 / 720.0 - t6 / 40320.0,
            -1.0 / 3.0 + t2 / 30.0 - t4 / 840.0 + t6 / 45360.0,
            -1.0 / 12.0 + t2 / 180.0 - t4 / 6720.0 + t6 / 453600.0,
        ]
    } else {
        let (s, c) = theta.sin_cos();
        let a = s / theta;
        let b = (1.0 - c) / theta_sq;
        [a, b, (theta * c - s) / (theta_sq * theta), (theta * s - 2.0 * (1.0 - c)) / (theta_sq * theta_sq)]
    }
}

/// Rotation matrix for an axis-angle vector (radians).
pub fn rodrigues(w: &Vec3) -> Result<Mat3> {
    if !w.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite axis-angle {w:?}")));
    }
    Ok(rodrigues_unchecked(w))
}

pub(crate) fn rodrigues_unchecked(w: &Vec3) -> Mat3 {
    let [a, b, _, _] = coefficients(w.norm_squared());
    let k = skew(w);
    Mat3::identity() + k * a + k * k * b
}

/// Rotation matrix and its partial derivatives `∂R/∂w_i`, i = 0..3.
pub fn rodrigues_with_jacobian(w: &Vec3) -> (Mat3, [Mat3; 3]) {
    let [a, b, c, d] = coefficients(w.norm_squared());
    let k = skew(w);
    let k2 = k * k;
    let r = Mat3::identity() + k * a + k2 * b;
    let jac = std::array::from_fn(|i| {
        let mut e = Vec3::zeros();
        e[i] = 1.0;
        let ei = skew(&e);
        k * (c * w[i]) + ei * a + k2 * (d * w[i]) + (ei * k + k * ei) * b
    });
    (r, jac)
}

/// Pulls an upstream gradient on `R(w)` back to `w`.
pub fn rodrigues_backward(jac: &[Mat3; 3], grad_r: &Mat3) -> Vec3 {
    Vec3::new(jac[0].dot(grad_r), jac[1].dot(grad_r), jac[2].dot(grad_r))
}

/// Axis-angle vector of a rotation matrix, angle in `[0, π]`.
pub fn rotation_log(r: &Mat3) -> Vec3 {
    let vee = Vec3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]);
    let angle = (0.5 * vee.norm()).atan2(0.5 * (r.trace() - 1.0));
    if angle < 1e-6 {
        return vee * 0.5;
    }
    if std::f64::consts::PI - angle > 1e-6 {
        return vee * (angle / (2.0 * angle.sin()));
    }
    // Near a half turn: R + I = 2·n·nᵀ (up to O(π - angle)).
    let sym = (r + Mat3::identity()) * 0.5;
    let col = (0..3).max_by(|&i, &j| sym[(i, i)].total_cmp(&sym[(j, j)])).unwrap_or(0);
    let mut axis: Vec3 = sym.column(col).into();
    axis /= axis.norm();
    // Resolve the sign with the antisymmetric part when it is informative.
    if axis.dot(&vee) < 0.0 {
        axis = -axis;
    }
    axis * angle
}

/// Nearest proper rotation in the Frobenius sense: `U·diag(1, 1, det(UVᵀ))·Vᵀ`.
pub fn project_to_rotation(m: &Mat3) -> Result<Mat3> {
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite matrix".into()));
    }
    let svd = m.svd(true, true);
    let (Some(u), Some(v_t)) = (svd.u, svd.v_t) else {
        return Err(Error::DegenerateInput("SVD did not converge".into()));
    };
    let sv = svd.singular_values;
    let tiny = sv.iter().filter(|s| s.abs() < 1e-12).count();
    if tiny >= 2 {
        return Err(Error::DegenerateInput(format!("rank-deficient matrix, singular values {sv:?}")));
    }
    let smallest = (0..3).min_by(|&i, &j| sv[i].total_cmp(&sv[j])).unwrap_or(2);
    let mut u = u;
    if (u * v_t).determinant() < 0.0 {
        u.column_mut(smallest).neg_mut();
    }
    Ok(u * v_t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn assert_close(a: &Mat3, b: &Mat3, tol: f64) {
        assert!((a - b).amax() <= tol, "{a} vs {b}");
    }

    #[test]
    fn zero_rotation_is_identity() {
        assert_eq!(rodrigues(&Vec3::zeros()).unwrap(), Mat3::identity());
    }

    #[test]
    fn quarter_turn_about_z() {
        let r = rodrigues(&Vec3::new(0.0, 0.0, PI / 2.0)).unwrap();
        let expected = Mat3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert_close(&r, &expected, 1e-15);
    }

    #[test]
    fn half_turn_about_x() {
        let r = rodrigues(&Vec3::new(PI, 0.0, 0.0)).unwrap();
        assert_close(&r, &Mat3::from_diagonal(&Vec3::new(1.0, -1.0, -1.0)), 1e-15);
    }

    #[test]
    fn rejects_non_finite() {
        assert!(matches!(rodrigues(&Vec3::new(f64::NAN, 0.0, 0.0)), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn jacobian_matches_central_differences_across_angle_regimes() {
        for w in [
            Vec3::new(1e-9, -2e-9, 3e-10),
            Vec3::new(3e-3, 1e-3, -4e-3),
            Vec3::new(0.4, -0.7, 1.1),
            Vec3::new(PI, 0.0, 0.0),
            Vec3::new(2.0, 2.0, -1.0),
        ] {
            let (_, jac) = rodrigues_with_jacobian(&w);
            for i in 0..3 {
                let h = 1e-6;
                let mut wp = w;
                wp[i] += h;
                let mut wm = w;
                wm[i] -= h;
                let fd = (rodrigues_unchecked(&wp) - rodrigues_unchecked(&wm)) / (2.0 * h);
                assert_close(&jac[i], &fd, 1e-8);
            }
        }
    }

    #[test]
    fn log_inverts_rodrigues() {
        for w in [
            Vec3::new(0.1, 0.2, -0.3),
            Vec3::new(1e-8, 0.0, 0.0),
            Vec3::new(PI, 0.0, 0.0),
            Vec3::new(0.0, (PI - 1e-9) / 2f64.sqrt(), (PI - 1e-9) / 2f64.sqrt()),
        ] {
            let r = rodrigues_unchecked(&w);
            let back = rodrigues_unchecked(&rotation_log(&r));
            assert_close(&back, &r, 1e-9);
        }
    }

    #[test]
    fn projection_strips_scale_and_fixes_reflection() {
        let r = rodrigues_unchecked(&Vec3::new(0.3, -0.2, 0.9));
        assert_close(&project_to_rotation(&r).unwrap(), &r, 1e-12);
        assert_close(&project_to_rotation(&(r * 2.0)).unwrap(), &r, 1e-12);

        let reflect = Mat3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0));
        let p = project_to_rotation(&(r * reflect)).unwrap();
        assert!((p.determinant() - 1.0).abs() < 1e-12);
        assert_close(&(p.transpose() * p), &Mat3::identity(), 1e-12);
    }

    #[test]
    fn projection_rejects_rank_deficient() {
        let m = Mat3::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        assert!(matches!(project_to_rotation(&m), Err(Error::DegenerateInput(_))));
    }
}
