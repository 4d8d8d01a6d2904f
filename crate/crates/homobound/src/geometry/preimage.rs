//! Closed-form preimages, analytic gradients, critical (discontinuity) sets,
//! and candidate locations for the gradient suprema.

use super::{
    CameraIntrinsics, GeometryError, PerturbationScenario, PixelCoord, ScenarioKind,
    PERSPECTIVE_TOL, PLANE_TOL,
};
use crate::Interval;
use std::f64::consts::{FRAC_PI_2, PI};

/// Perspective denominator of the preimage, scaled so that it equals the
/// homogeneous coordinate h3 of `H^-1(kappa) p` exactly.
fn h3(intr: CameraIntrinsics, s: &PerturbationScenario, kappa: f64, p: PixelCoord) -> f64 {
    let (f, xc, yc) = (intr.f, intr.xc, intr.yc);
    match s.kind() {
        ScenarioKind::Roll | ScenarioKind::TransY | ScenarioKind::TransZ => 1.0,
        ScenarioKind::Pitch => kappa.cos() + (p.v - yc) * kappa.sin() / f,
        ScenarioKind::Yaw => kappa.cos() - (p.u - xc) * kappa.sin() / f,
        ScenarioKind::TransX => {
            let z = s.height();
            1.0 - kappa * (p.v - yc) / (f * z)
        }
    }
}

/// Source-image coordinates feeding output pixel `p` under `H^-1(kappa)`,
/// evaluated through the per-scenario closed forms.
pub fn preimage(
    intr: CameraIntrinsics,
    s: &PerturbationScenario,
    kappa: f64,
    p: PixelCoord,
) -> Result<PixelCoord, GeometryError> {
    intr.check()?;
    s.check_kappa(kappa)?;
    if h3(intr, s, kappa, p).abs() < PERSPECTIVE_TOL {
        return Err(GeometryError::PerspectiveDivideByZero { kappa });
    }
    let (f, xc, yc) = (intr.f, intr.xc, intr.yc);
    let (c, sn) = (kappa.cos(), kappa.sin());
    let (du, dv) = (p.u - xc, p.v - yc);
    let q = match s.kind() {
        ScenarioKind::Roll => PixelCoord::new(xc + du * c - dv * sn, yc + du * sn + dv * c),
        ScenarioKind::Pitch => {
            let den = f * c + dv * sn;
            PixelCoord::new(xc + f * du / den, yc - f * (f * sn - dv * c) / den)
        }
        ScenarioKind::Yaw => {
            let den = f * c - du * sn;
            PixelCoord::new(xc + f * (f * sn + du * c) / den, yc + f * dv / den)
        }
        ScenarioKind::TransX => {
            let z = s.height();
            let den = kappa * dv - f * z;
            PixelCoord::new(
                (kappa * dv * xc - f * z * p.u) / den,
                (kappa * dv * yc - f * z * p.v) / den,
            )
        }
        ScenarioKind::TransY => {
            let z = s.height();
            PixelCoord::new(p.u - kappa * dv / z, p.v)
        }
        ScenarioKind::TransZ => {
            let z = s.height();
            if (z + kappa).abs() < PLANE_TOL {
                return Err(GeometryError::PerspectiveDivideByZero { kappa });
            }
            PixelCoord::new(p.u, (z * p.v + kappa * yc) / (z + kappa))
        }
    };
    Ok(q)
}

/// Analytic gradient `(du0/dkappa, dv0/dkappa)` of the preimage.
pub fn preimage_gradient(
    intr: CameraIntrinsics,
    s: &PerturbationScenario,
    kappa: f64,
    p: PixelCoord,
) -> Result<(f64, f64), GeometryError> {
    intr.check()?;
    s.check_kappa(kappa)?;
    if h3(intr, s, kappa, p).abs() < PERSPECTIVE_TOL {
        return Err(GeometryError::AtDiscontinuity { kappa });
    }
    let (f, xc, yc) = (intr.f, intr.xc, intr.yc);
    let (c, sn) = (kappa.cos(), kappa.sin());
    let (du, dv) = (p.u - xc, p.v - yc);
    let g = match s.kind() {
        ScenarioKind::Roll => (-du * sn - dv * c, du * c - dv * sn),
        ScenarioKind::Pitch => {
            let den = f * c + dv * sn;
            (
                -f * du * (-f * sn + dv * c) / (den * den),
                -f * (f * f + dv * dv) / (den * den),
            )
        }
        ScenarioKind::Yaw => {
            let den = f * c - du * sn;
            (
                f * (f * f + du * du) / (den * den),
                f * dv * (f * sn + du * c) / (den * den),
            )
        }
        ScenarioKind::TransX => {
            let z = s.height();
            let den = kappa * dv - f * z;
            (f * z * du * dv / (den * den), f * z * dv * dv / (den * den))
        }
        ScenarioKind::TransY => {
            let z = s.height();
            (-dv / z, 0.0)
        }
        ScenarioKind::TransZ => {
            let z = s.height();
            if (z + kappa).abs() < PLANE_TOL {
                return Err(GeometryError::AtDiscontinuity { kappa });
            }
            (0.0, -z * dv / ((z + kappa) * (z + kappa)))
        }
    };
    Ok(g)
}

/// Every parameter value at which the perspective denominator h3 vanishes,
/// breaking continuity of the preimage for pixel `p`.
///
/// Rotation critical sets are pi-periodic; the returned representatives are
/// those within `[-pi/2, pi/2]`, the widest admissible rotation domain. When
/// the pixel sits on the principal axis column (yaw) or row (pitch), both
/// `-pi/2` and `pi/2` are critical and both are returned.
pub fn critical_set(intr: CameraIntrinsics, s: &PerturbationScenario, p: PixelCoord) -> Vec<f64> {
    let (f, xc, yc) = (intr.f, intr.xc, intr.yc);
    match s.kind() {
        ScenarioKind::Roll | ScenarioKind::TransY => Vec::new(),
        ScenarioKind::Yaw => {
            if p.u == xc {
                vec![-FRAC_PI_2, FRAC_PI_2]
            } else {
                vec![(f / (p.u - xc)).atan()]
            }
        }
        ScenarioKind::Pitch => {
            if p.v == yc {
                vec![-FRAC_PI_2, FRAC_PI_2]
            } else {
                vec![(-f / (p.v - yc)).atan()]
            }
        }
        ScenarioKind::TransX => {
            if p.v == yc {
                Vec::new()
            } else {
                vec![f * s.height() / (p.v - yc)]
            }
        }
        ScenarioKind::TransZ => vec![-s.height()],
    }
}

/// Finite candidate sets whose maxima dominate the gradient suprema, one per
/// preimage coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientCandidates {
    /// Candidates for `sup |du0/dkappa|`.
    pub u: Vec<f64>,
    /// Candidates for `sup |dv0/dkappa|`.
    pub v: Vec<f64>,
}

/// Principal-branch location of the interior stationary point of a coordinate
/// gradient, when one exists. `None` means the gradient magnitude is monotone
/// (or constant) and the interval endpoints dominate.
fn stationary_base(
    intr: CameraIntrinsics,
    s: &PerturbationScenario,
    p: PixelCoord,
    coord_u: bool,
) -> Option<f64> {
    let (f, xc, yc) = (intr.f, intr.xc, intr.yc);
    let (du, dv) = (p.u - xc, p.v - yc);
    match (s.kind(), coord_u) {
        // Roll: d/dk of the u-gradient vanishes at tan(k) = du/dv; of the
        // v-gradient at tan(k) = -dv/du. The arctan limit cases apply when
        // the relevant denominator is zero; at the exact center both
        // gradients vanish identically.
        (ScenarioKind::Roll, true) => {
            if dv != 0.0 {
                Some((du / dv).atan())
            } else if du != 0.0 {
                Some(FRAC_PI_2)
            } else {
                None
            }
        }
        (ScenarioKind::Roll, false) => {
            if du != 0.0 {
                Some((-dv / du).atan())
            } else if dv != 0.0 {
                Some(FRAC_PI_2)
            } else {
                None
            }
        }
        // Pitch: the u-gradient is monotone (its derivative is a positive
        // multiple of den^2 + 2 num^2); the v-gradient peaks where the
        // denominator derivative vanishes.
        (ScenarioKind::Pitch, true) => None,
        (ScenarioKind::Pitch, false) => Some((dv / f).atan()),
        // Yaw mirrors pitch with the roles of the coordinates swapped.
        (ScenarioKind::Yaw, true) => Some((-du / f).atan()),
        (ScenarioKind::Yaw, false) => None,
        // All translation gradients are monotone (or constant) in kappa.
        _ => None,
    }
}

/// Interior stationary candidates inside `domain`: every branch
/// `base + k*pi`, k in {-1, 0, 1}, that falls inside the interval.
fn branches_in(base: Option<f64>, domain: Interval) -> Vec<f64> {
    let mut out = Vec::new();
    if let Some(a) = base {
        for k in [-1.0, 0.0, 1.0] {
            let x = a + k * PI;
            if domain.contains(x) {
                out.push(x);
            }
        }
    }
    out
}

fn candidates_for(
    intr: CameraIntrinsics,
    s: &PerturbationScenario,
    p: PixelCoord,
    domain: Interval,
    coord_u: bool,
) -> Vec<f64> {
    let mut c = vec![domain.lo, domain.hi];
    c.extend(branches_in(stationary_base(intr, s, p, coord_u), domain));
    c.sort_by(f64::total_cmp);
    c.dedup();
    c
}

/// Checks that no critical value of pixel `p` lies inside `domain`.
fn ensure_no_critical(
    intr: CameraIntrinsics,
    s: &PerturbationScenario,
    p: PixelCoord,
    domain: Interval,
) -> Result<(), GeometryError> {
    for kappa in critical_set(intr, s, p) {
        if domain.contains(kappa) {
            return Err(GeometryError::DomainContainsCritical { kappa });
        }
    }
    Ok(())
}

/// Candidate locations (domain endpoints plus in-domain interior stationary
/// points) whose maximum absolute gradient equals the supremum over the
/// scenario domain, per preimage coordinate.
pub fn gradient_sup_candidates(
    intr: CameraIntrinsics,
    s: &PerturbationScenario,
    p: PixelCoord,
) -> Result<GradientCandidates, GeometryError> {
    gradient_sup_candidates_on(intr, s, p, s.domain())
}

/// [`gradient_sup_candidates`] restricted to a subinterval of the scenario
/// domain (used per branch-and-bound subdomain).
pub fn gradient_sup_candidates_on(
    intr: CameraIntrinsics,
    s: &PerturbationScenario,
    p: PixelCoord,
    sub: Interval,
) -> Result<GradientCandidates, GeometryError> {
    intr.check()?;
    ensure_no_critical(intr, s, p, sub)?;
    Ok(GradientCandidates {
        u: candidates_for(intr, s, p, sub, true),
        v: candidates_for(intr, s, p, sub, false),
    })
}

/// The per-coordinate gradient suprema `(sup |du0/dk|, sup |dv0/dk|)` over a
/// subinterval, evaluated at the candidate locations.
pub fn gradient_sup(
    intr: CameraIntrinsics,
    s: &PerturbationScenario,
    p: PixelCoord,
    sub: Interval,
) -> Result<(f64, f64), GeometryError> {
    let cands = gradient_sup_candidates_on(intr, s, p, sub)?;
    let mut sup_u = 0.0f64;
    let mut sup_v = 0.0f64;
    for &k in &cands.u {
        sup_u = sup_u.max(preimage_gradient(intr, s, k, p)?.0.abs());
    }
    for &k in &cands.v {
        sup_v = sup_v.max(preimage_gradient(intr, s, k, p)?.1.abs());
    }
    Ok((sup_u, sup_v))
}

/// Parameter values at which either preimage coordinate can attain an
/// extremum over `sub`: the endpoints plus the interior stationary points of
/// both coordinate gradients. A coordinate extremum interior to the domain
/// requires its own gradient to vanish there, and for every scenario those
/// zeros coincide with the other coordinate's stationary branches (or do not
/// exist), so the union is exhaustive.
pub(crate) fn preimage_extremum_candidates(
    intr: CameraIntrinsics,
    s: &PerturbationScenario,
    p: PixelCoord,
    sub: Interval,
) -> Result<Vec<f64>, GeometryError> {
    ensure_no_critical(intr, s, p, sub)?;
    let mut c = vec![sub.lo, sub.hi];
    c.extend(branches_in(stationary_base(intr, s, p, true), sub));
    c.extend(branches_in(stationary_base(intr, s, p, false), sub));
    c.sort_by(f64::total_cmp);
    c.dedup();
    Ok(c)
}
