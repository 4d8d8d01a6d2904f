//! Closed-form homographies, inverse preimages, analytic gradients,
//! discontinuity sets, and gradient-extremum candidates for the six
//! single-parameter pose-perturbation scenarios, plus the general 6-DOF
//! homography constructor.
//!
//! Conventions: pixel centers sit at integer coordinates, origin top-left,
//! `u` = column, `v` = row. Angles are radians everywhere in the library;
//! translations are meters. The camera frame is x-right/y-down/z-forward,
//! while pose Euler angles live in a body frame with x-forward/y-right/z-down.

mod homography;
mod preimage;

pub use homography::{general_homography, scenario_inverse_homography};
pub use preimage::{
    critical_set, gradient_sup, gradient_sup_candidates, gradient_sup_candidates_on, preimage,
    preimage_gradient, GradientCandidates,
};
pub(crate) use preimage::preimage_extremum_candidates;

use crate::Interval;
use nalgebra::Matrix3;
use std::f64::consts::FRAC_PI_2;
use thiserror::Error;

/// Absolute tolerance below which the perspective denominator h3 counts as
/// vanished.
pub(crate) const PERSPECTIVE_TOL: f64 = 1e-12;
/// Relative tolerance (against the Hadamard bound) below which a homography
/// determinant counts as zero.
pub(crate) const DET_TOL: f64 = 1e-12;
/// Tolerance for the plane-to-camera distance d.
pub(crate) const PLANE_TOL: f64 = 1e-12;
/// |H33| above which the general constructor rescales to H33 = 1.
pub(crate) const NORMALIZE_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("feature plane is degenerate for this pose (|d| < {PLANE_TOL} or zero normal)")]
    DegeneratePlane,
    #[error("camera intrinsics are singular (focal length {f} <= 0 or not finite)")]
    SingularIntrinsics { f: f64 },
    #[error("kappa = {kappa} lies outside the scenario domain {domain}")]
    OutOfDomain { kappa: f64, domain: Interval },
    #[error("camera height is missing, zero, or crossed by the domain")]
    DegenerateHeight,
    #[error("perspective denominator vanished at kappa = {kappa} (|h3| < {PERSPECTIVE_TOL})")]
    PerspectiveDivideByZero { kappa: f64 },
    #[error("gradient requested at a discontinuity (kappa = {kappa} is critical)")]
    AtDiscontinuity { kappa: f64 },
    #[error("scenario domain contains the critical value {kappa} for this pixel")]
    DomainContainsCritical { kappa: f64 },
    #[error("resulting homography is singular (|det| below {DET_TOL} of its scale)")]
    SingularHomography,
    #[error("invalid scenario domain: {reason}")]
    InvalidDomain { reason: String },
}

/// Pinhole intrinsics: focal length in pixels and the principal point.
///
/// Builds the calibration matrix `K = [[f, 0, xc], [0, f, yc], [0, 0, 1]]`
/// (skew-free, square pixels).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    /// Focal length in pixels; must be > 0.
    pub f: f64,
    /// Principal-point column in pixels.
    pub xc: f64,
    /// Principal-point row in pixels.
    pub yc: f64,
}

impl CameraIntrinsics {
    pub fn new(f: f64, xc: f64, yc: f64) -> Self {
        CameraIntrinsics { f, xc, yc }
    }

    /// Library defaults for a `width x height` image: `f` = image width
    /// (roughly a 53 degree horizontal field of view) and the principal point
    /// at the geometric center `((w-1)/2, (h-1)/2)` of the pixel grid.
    pub fn defaults_for(width: usize, height: usize) -> Self {
        CameraIntrinsics {
            f: width as f64,
            xc: (width as f64 - 1.0) / 2.0,
            yc: (height as f64 - 1.0) / 2.0,
        }
    }

    pub(crate) fn check(&self) -> Result<(), GeometryError> {
        if !(self.f.is_finite() && self.f > 0.0 && self.xc.is_finite() && self.yc.is_finite()) {
            return Err(GeometryError::SingularIntrinsics { f: self.f });
        }
        Ok(())
    }

    pub(crate) fn k(&self) -> Matrix3<f64> {
        Matrix3::new(self.f, 0.0, self.xc, 0.0, self.f, self.yc, 0.0, 0.0, 1.0)
    }

    pub(crate) fn k_inv(&self) -> Matrix3<f64> {
        let fi = 1.0 / self.f;
        Matrix3::new(fi, 0.0, -self.xc * fi, 0.0, fi, -self.yc * fi, 0.0, 0.0, 1.0)
    }
}

/// A 6-DOF camera pose (or delta pose): Euler angles in radians using the
/// body convention (x-forward, y-right, z-down; `phi` roll, `theta` pitch,
/// `psi` yaw), translation in meters. Angles are expected in `(-pi, pi]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose {
    pub phi: f64,
    pub theta: f64,
    pub psi: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Pose {
    pub fn zero() -> Self {
        Pose::default()
    }
}

/// A continuous pixel position: `u` = column, `v` = row, centers at integers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelCoord {
    pub u: f64,
    pub v: f64,
}

impl PixelCoord {
    pub fn new(u: f64, v: f64) -> Self {
        PixelCoord { u, v }
    }
}

/// The scene plane in world coordinates as a homogeneous 4-vector.
/// The default is the ground plane `z = 0`, i.e. `(0, 0, 1, 0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneWorld {
    pub pi: [f64; 4],
}

impl PlaneWorld {
    pub fn ground() -> Self {
        PlaneWorld { pi: [0.0, 0.0, 1.0, 0.0] }
    }
}

impl Default for PlaneWorld {
    fn default() -> Self {
        PlaneWorld::ground()
    }
}

/// Which single pose parameter a scenario perturbs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScenarioKind {
    Roll,
    Pitch,
    Yaw,
    TransX,
    TransY,
    TransZ,
}

impl ScenarioKind {
    pub fn is_rotation(&self) -> bool {
        matches!(self, ScenarioKind::Roll | ScenarioKind::Pitch | ScenarioKind::Yaw)
    }

    /// Stable lowercase token used by the CLI and file formats.
    pub fn token(&self) -> &'static str {
        match self {
            ScenarioKind::Roll => "roll",
            ScenarioKind::Pitch => "pitch",
            ScenarioKind::Yaw => "yaw",
            ScenarioKind::TransX => "dx",
            ScenarioKind::TransY => "dy",
            ScenarioKind::TransZ => "dz",
        }
    }

    pub fn from_token(s: &str) -> Option<Self> {
        match s {
            "roll" => Some(ScenarioKind::Roll),
            "pitch" => Some(ScenarioKind::Pitch),
            "yaw" => Some(ScenarioKind::Yaw),
            "dx" => Some(ScenarioKind::TransX),
            "dy" => Some(ScenarioKind::TransY),
            "dz" => Some(ScenarioKind::TransZ),
            _ => None,
        }
    }

    pub const ALL: [ScenarioKind; 6] = [
        ScenarioKind::Roll,
        ScenarioKind::Pitch,
        ScenarioKind::Yaw,
        ScenarioKind::TransX,
        ScenarioKind::TransY,
        ScenarioKind::TransZ,
    ];
}

impl std::fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.token())
    }
}

/// A validated single-parameter perturbation: which pose parameter varies,
/// over which closed interval, and the fixed camera height for translations.
///
/// Construction enforces: a well-ordered finite domain; rotation domains
/// within `[-pi/2, pi/2]`; a nonzero camera height for every translation; and
/// for `TransZ` that `z + kappa` never vanishes on the domain. The remaining,
/// pixel-dependent part of the contract (no critical value inside the domain)
/// is enforced by the operations that need it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationScenario {
    kind: ScenarioKind,
    domain: Interval,
    camera_height: Option<f64>,
}

impl PerturbationScenario {
    pub fn new(
        kind: ScenarioKind,
        domain: Interval,
        camera_height: Option<f64>,
    ) -> Result<Self, GeometryError> {
        if !domain.is_valid() {
            return Err(GeometryError::InvalidDomain {
                reason: format!("domain {domain} is not a finite ordered interval"),
            });
        }
        if kind.is_rotation() && !(domain.lo >= -FRAC_PI_2 && domain.hi <= FRAC_PI_2) {
            return Err(GeometryError::InvalidDomain {
                reason: format!("rotation domain {domain} exceeds [-pi/2, pi/2]"),
            });
        }
        if !kind.is_rotation() {
            let z = camera_height.ok_or(GeometryError::DegenerateHeight)?;
            if !z.is_finite() || z == 0.0 {
                return Err(GeometryError::DegenerateHeight);
            }
            if kind == ScenarioKind::TransZ && domain.contains(-z) {
                // The camera would pass through the scene plane.
                return Err(GeometryError::DegenerateHeight);
            }
        }
        Ok(PerturbationScenario { kind, domain, camera_height })
    }

    pub fn roll(domain: Interval) -> Result<Self, GeometryError> {
        Self::new(ScenarioKind::Roll, domain, None)
    }

    pub fn pitch(domain: Interval) -> Result<Self, GeometryError> {
        Self::new(ScenarioKind::Pitch, domain, None)
    }

    pub fn yaw(domain: Interval) -> Result<Self, GeometryError> {
        Self::new(ScenarioKind::Yaw, domain, None)
    }

    pub fn trans_x(domain: Interval, z: f64) -> Result<Self, GeometryError> {
        Self::new(ScenarioKind::TransX, domain, Some(z))
    }

    pub fn trans_y(domain: Interval, z: f64) -> Result<Self, GeometryError> {
        Self::new(ScenarioKind::TransY, domain, Some(z))
    }

    pub fn trans_z(domain: Interval, z: f64) -> Result<Self, GeometryError> {
        Self::new(ScenarioKind::TransZ, domain, Some(z))
    }

    pub fn kind(&self) -> ScenarioKind {
        self.kind
    }

    pub fn domain(&self) -> Interval {
        self.domain
    }

    pub fn camera_height(&self) -> Option<f64> {
        self.camera_height
    }

    /// Camera height for translation scenarios (validated at construction).
    pub(crate) fn height(&self) -> f64 {
        self.camera_height.expect("translation scenarios always carry a height")
    }

    /// Rejects parameter values outside the scenario domain.
    pub(crate) fn check_kappa(&self, kappa: f64) -> Result<(), GeometryError> {
        if !self.domain.contains(kappa) {
            return Err(GeometryError::OutOfDomain { kappa, domain: self.domain });
        }
        Ok(())
    }
}

/// An invertible 3x3 projective map between image planes.
///
/// The stored matrix is validated to be nonsingular: `|det|` must exceed
/// [`DET_TOL`] relative to the Hadamard bound (product of row norms), which
/// makes the test scale-free.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    m: Matrix3<f64>,
}

impl Homography {
    pub fn new(m: Matrix3<f64>) -> Result<Self, GeometryError> {
        let hadamard: f64 = (0..3).map(|r| m.row(r).norm()).product();
        if !m.iter().all(|x| x.is_finite()) || m.determinant().abs() <= DET_TOL * hadamard {
            return Err(GeometryError::SingularHomography);
        }
        Ok(Homography { m })
    }

    pub fn from_rows(rows: [[f64; 3]; 3]) -> Result<Self, GeometryError> {
        Homography::new(Matrix3::from_row_slice(&[
            rows[0][0], rows[0][1], rows[0][2], rows[1][0], rows[1][1], rows[1][2], rows[2][0],
            rows[2][1], rows[2][2],
        ]))
    }

    pub fn identity() -> Self {
        Homography { m: Matrix3::identity() }
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    /// Zero-based entry access (`at(0, 2)` is the matrix entry H_{1,3}).
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.m[(row, col)]
    }

    /// Applies the projective map to a pixel and dehomogenizes.
    pub fn apply(&self, p: PixelCoord) -> Result<PixelCoord, GeometryError> {
        let h1 = self.m[(0, 0)] * p.u + self.m[(0, 1)] * p.v + self.m[(0, 2)];
        let h2 = self.m[(1, 0)] * p.u + self.m[(1, 1)] * p.v + self.m[(1, 2)];
        let h3 = self.m[(2, 0)] * p.u + self.m[(2, 1)] * p.v + self.m[(2, 2)];
        if h3.abs() < PERSPECTIVE_TOL {
            return Err(GeometryError::PerspectiveDivideByZero { kappa: f64::NAN });
        }
        Ok(PixelCoord::new(h1 / h3, h2 / h3))
    }

    /// Rescales so that H33 = 1 when |H33| is comfortably nonzero; otherwise
    /// returns the matrix unchanged (keeps comparisons deterministic without
    /// amplifying a vanishing scale).
    pub fn normalized(&self) -> Self {
        let h33 = self.m[(2, 2)];
        if h33.abs() > NORMALIZE_TOL {
            Homography { m: self.m / h33 }
        } else {
            *self
        }
    }

    /// Numeric inverse (nalgebra); intended for cross-checks, not the
    /// scenario paths, which use closed forms throughout.
    pub fn try_inverse(&self) -> Option<Self> {
        self.m.try_inverse().map(|m| Homography { m })
    }
}
