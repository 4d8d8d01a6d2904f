//! The general 6-DOF plane-induced homography and the per-scenario
//! closed-form inverse homographies.

use super::{
    CameraIntrinsics, GeometryError, Homography, PerturbationScenario, PlaneWorld, Pose,
    ScenarioKind, PLANE_TOL,
};
use nalgebra::{Matrix3, Vector3};

/// Body-frame rotation R = Rz(psi) * Ry(theta) * Rx(phi).
fn rot_zyx(phi: f64, theta: f64, psi: f64) -> Matrix3<f64> {
    let rx = Matrix3::new(
        1.0, 0.0, 0.0, //
        0.0, phi.cos(), -phi.sin(),
        0.0, phi.sin(), phi.cos(),
    );
    let ry = Matrix3::new(
        theta.cos(), 0.0, theta.sin(), //
        0.0, 1.0, 0.0,
        -theta.sin(), 0.0, theta.cos(),
    );
    let rz = Matrix3::new(
        psi.cos(), -psi.sin(), 0.0, //
        psi.sin(), psi.cos(), 0.0,
        0.0, 0.0, 1.0,
    );
    rz * ry * rx
}

/// Axis permutation from body (x-forward, y-right, z-down) to camera
/// (x-right, y-down, z-forward) coordinates. Pure permutation, no translation.
fn body_to_cam() -> Matrix3<f64> {
    Matrix3::new(
        0.0, 1.0, 0.0, //
        0.0, 0.0, 1.0,
        1.0, 0.0, 0.0,
    )
}

/// Builds the plane-induced homography `H = K (R - t n^T / d) K^-1` mapping
/// pixels of the unperturbed view to pixels of the perturbed view.
///
/// `pose0` is the pose of the first camera in the world frame (its angles and
/// position move the scene plane into the first camera frame); `delta` is the
/// pose change from first to second viewpoint, expressed in the body frame of
/// the first camera. The result is rescaled to H33 = 1 whenever |H33| is
/// nonzero within tolerance.
pub fn general_homography(
    intr: CameraIntrinsics,
    pose0: Pose,
    delta: Pose,
    plane: PlaneWorld,
) -> Result<Homography, GeometryError> {
    intr.check()?;
    let n_world = Vector3::new(plane.pi[0], plane.pi[1], plane.pi[2]);
    if n_world.norm() == 0.0 {
        return Err(GeometryError::DegeneratePlane);
    }

    // Plane in the first camera frame: pi^C0 = (T^W_C0)^T pi^W with
    // T^W_C0 = [R^W_B0 * P^T | (x, y, z)].
    let p = body_to_cam();
    let r_w_c0 = rot_zyx(pose0.phi, pose0.theta, pose0.psi) * p.transpose();
    let t_w = Vector3::new(pose0.x, pose0.y, pose0.z);
    let n = r_w_c0.transpose() * n_world;
    let d = t_w.dot(&n_world) + plane.pi[3];
    if d.abs() < PLANE_TOL {
        return Err(GeometryError::DegeneratePlane);
    }

    // First-to-second viewpoint motion expressed in camera axes.
    let r_b0_b = rot_zyx(delta.phi, delta.theta, delta.psi);
    let r = p * r_b0_b.transpose() * p.transpose();
    let t = -(p * Vector3::new(delta.x, delta.y, delta.z));

    let m = r - (t * n.transpose()) / d;
    let h = intr.k() * m * intr.k_inv();
    Ok(Homography::new(h)?.normalized())
}

/// The closed-form inverse homography `H^-1(kappa)` for a scenario, written
/// out exactly (no numeric inversion anywhere on this path).
pub fn scenario_inverse_homography(
    intr: CameraIntrinsics,
    s: &PerturbationScenario,
    kappa: f64,
) -> Result<Homography, GeometryError> {
    intr.check()?;
    s.check_kappa(kappa)?;
    let (f, xc, yc) = (intr.f, intr.xc, intr.yc);
    let (c, sn) = (kappa.cos(), kappa.sin());
    let m = match s.kind() {
        ScenarioKind::Roll => Matrix3::new(
            c, -sn, -xc * c + xc + yc * sn,
            sn, c, -xc * sn - yc * c + yc,
            0.0, 0.0, 1.0,
        ),
        ScenarioKind::Pitch => Matrix3::new(
            1.0, xc * sn / f, xc * (f * c - f - yc * sn) / f,
            0.0, c + yc * sn / f, -(f * f + yc * yc) * sn / f,
            0.0, sn / f, c - yc * sn / f,
        ),
        ScenarioKind::Yaw => Matrix3::new(
            c - xc * sn / f, 0.0, (f * f + xc * xc) * sn / f,
            -yc * sn / f, 1.0, yc * (f * (c - 1.0) + xc * sn) / f,
            -sn / f, 0.0, c + xc * sn / f,
        ),
        ScenarioKind::TransX => {
            let z = s.height();
            let fz = f * z;
            Matrix3::new(
                1.0, -kappa * xc / fz, kappa * xc * yc / fz,
                0.0, 1.0 - kappa * yc / fz, kappa * yc * yc / fz,
                0.0, -kappa / fz, 1.0 + kappa * yc / fz,
            )
        }
        ScenarioKind::TransY => {
            let z = s.height();
            Matrix3::new(
                1.0, -kappa / z, kappa * yc / z,
                0.0, 1.0, 0.0,
                0.0, 0.0, 1.0,
            )
        }
        ScenarioKind::TransZ => {
            let z = s.height();
            if (z + kappa).abs() < PLANE_TOL {
                return Err(GeometryError::DegenerateHeight);
            }
            Matrix3::new(
                1.0, 0.0, 0.0,
                0.0, z / (kappa + z), kappa * yc / (kappa + z),
                0.0, 0.0, 1.0,
            )
        }
    };
    Homography::new(m)
}
