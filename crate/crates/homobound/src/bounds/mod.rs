//! Piecewise-linear bound synthesis for pixel curves: domain partitioning,
//! sample-based segment fitting, Lipschitz-constant assembly, epsilon-maximal
//! violation search, and the soundifying shift.

mod eps_max;
mod fit;
mod serial;

pub use eps_max::{eps_max, EpsMaxOutcome};
pub use fit::{fit_segment, Side};
pub use serial::{load_bounds, parse_bounds, save_bounds, serialize_bounds};

use crate::geometry::{gradient_sup, CameraIntrinsics, GeometryError, PerturbationScenario};
use crate::imaging::{
    interp_gradient_bound, preimage_box, Image, ImagingError, Padding, PixelCurveContext,
};
use crate::Interval;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BoundsError {
    #[error("empty scenario domain or zero split count")]
    EmptyDomain,
    #[error("degenerate sample set: {reason}")]
    DegenerateSamples { reason: String },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error("{path}: {msg}")]
    Format { path: String, msg: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// One linear bound segment: the line `w kappa + b`, fitted over `subdomain`
/// and active there when the piecewise bound is evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearSegment {
    /// Slope, intensity per radian or per meter.
    pub w: f64,
    /// Intercept, intensity.
    pub b: f64,
    /// The partition cell this segment was fitted on.
    pub subdomain: Interval,
}

impl LinearSegment {
    pub fn eval(&self, kappa: f64) -> f64 {
        self.w * kappa + self.b
    }
}

/// Sound piecewise-linear bound on one pixel curve: per-cell fitted
/// segments, each active on its own cell, pushed outward by the certified
/// shifts.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinearBound {
    /// Lower segments, one per partition cell, in cell order.
    pub lower: Vec<LinearSegment>,
    /// Upper segments over the same partition.
    pub upper: Vec<LinearSegment>,
    /// Soundness shift subtracted from the lower bound; nonnegative.
    pub shift_lower: f64,
    /// Soundness shift added to the upper bound; nonnegative.
    pub shift_upper: f64,
    /// Certificate slack the shifts were computed with.
    pub epsilon: f64,
    /// Whether the shifts certify the piecewise bounds (always true for
    /// bounds produced by [`bound_pixel`]).
    pub sound: bool,
}

impl PiecewiseLinearBound {
    /// The scenario domain covered by the partition.
    pub fn domain(&self) -> Interval {
        let lo = self.lower.first().map_or(f64::NAN, |s| s.subdomain.lo);
        let hi = self.lower.last().map_or(f64::NAN, |s| s.subdomain.hi);
        Interval::new(lo, hi)
    }

    /// Partition cell boundaries, `q + 1` values including both domain ends.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut cuts: Vec<f64> = self.lower.iter().map(|s| s.subdomain.lo).collect();
        if let Some(last) = self.lower.last() {
            cuts.push(last.subdomain.hi);
        }
        cuts
    }

    /// Index of the partition cell containing `kappa`. Shared cell
    /// boundaries resolve to the left cell; out-of-domain values clamp to
    /// the nearest cell. Lower and upper segments share the partition.
    fn piece_index(&self, kappa: f64) -> usize {
        self.lower
            .iter()
            .position(|s| s.subdomain.contains(kappa))
            .unwrap_or_else(|| if kappa < self.domain().lo { 0 } else { self.lower.len() - 1 })
    }

    /// The (lower, upper) segments active at `kappa`.
    pub fn segments_at(&self, kappa: f64) -> (&LinearSegment, &LinearSegment) {
        let j = self.piece_index(kappa);
        (&self.lower[j], &self.upper[j])
    }

    /// Unsound lower bound `LB(kappa)`: the value of the lower segment whose
    /// cell contains `kappa`.
    pub fn lower_unsound(&self, kappa: f64) -> f64 {
        self.lower[self.piece_index(kappa)].eval(kappa)
    }

    /// Unsound upper bound `UB(kappa)`: the value of the upper segment whose
    /// cell contains `kappa`.
    pub fn upper_unsound(&self, kappa: f64) -> f64 {
        self.upper[self.piece_index(kappa)].eval(kappa)
    }

    /// Sound lower bound `LB*(kappa) = LB(kappa) - shift_lower`.
    pub fn lower_star(&self, kappa: f64) -> f64 {
        self.lower_unsound(kappa) - self.shift_lower
    }

    /// Sound upper bound `UB*(kappa) = UB(kappa) + shift_upper`.
    pub fn upper_star(&self, kappa: f64) -> f64 {
        self.upper_unsound(kappa) + self.shift_upper
    }
}

/// Decomposed Lipschitz constant for a bound-violation function
/// `J(kappa) = (w kappa + b) - G(kappa)` over a subinterval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzBudget {
    /// Assembled constant `w_star + interp_u geom_u + interp_v geom_v`.
    pub l: f64,
    /// Absolute slope bound for the linear part of the violation.
    pub w_star: f64,
    /// `sup |dI/du|` over the subinterval's preimage box.
    pub interp_u: f64,
    /// `sup |dI/dv|` over the subinterval's preimage box.
    pub interp_v: f64,
    /// `sup |du0/dkappa|` over the subinterval.
    pub geom_u: f64,
    /// `sup |dv0/dkappa|` over the subinterval.
    pub geom_v: f64,
}

/// Bound-synthesis parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundConfig {
    /// Partition cells per side.
    pub q: usize,
    /// Samples per partition cell.
    pub samples: usize,
    /// Certificate slack for the violation search.
    pub eps: f64,
    /// Branch-and-bound iteration budget per violation search.
    pub max_iters: u64,
}

impl Default for BoundConfig {
    fn default() -> Self {
        BoundConfig { q: 2, samples: 65, eps: 0.01, max_iters: 5000 }
    }
}

/// Per-pixel branch-and-bound statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BabStats {
    /// Queue pops across all violation searches (one per side per cell).
    pub iterations: u64,
    /// Searches that hit the iteration budget (0 to `2q`).
    pub warnings: u32,
}

/// Sound per-pixel bounds for a whole image under one scenario, with enough
/// context to reproduce and verify them.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundSet {
    pub scenario: PerturbationScenario,
    pub intr: CameraIntrinsics,
    pub padding: Padding,
    pub image_height: usize,
    pub image_width: usize,
    pub config: BoundConfig,
    /// Total exhausted violation searches across pixels.
    pub warnings: u64,
    /// Total branch-and-bound queue pops across pixels.
    pub bab_iterations: u64,
    /// Row-major, one bound per pixel.
    pub bounds: Vec<PiecewiseLinearBound>,
}

impl BoundSet {
    pub fn bound_at(&self, i: usize, j: usize) -> &PiecewiseLinearBound {
        &self.bounds[i * self.image_width + j]
    }

    /// Mean queue pops per violation search (`2q` searches per pixel).
    pub fn mean_bab_steps(&self) -> f64 {
        if self.bounds.is_empty() {
            return 0.0;
        }
        let searches = 2.0 * self.config.q as f64 * self.bounds.len() as f64;
        self.bab_iterations as f64 / searches
    }

    /// Total polytope area over all pixels.
    pub fn total_area(&self) -> f64 {
        self.bounds.iter().map(polytope_area).sum()
    }
}

/// Splits `B` into `q` equal-width contiguous cells. Adjacent cells share
/// their boundary value bitwise.
pub fn split_domain(b: Interval, q: usize) -> Result<Vec<Interval>, BoundsError> {
    if q == 0 || !b.is_valid() || b.width() == 0.0 {
        return Err(BoundsError::EmptyDomain);
    }
    let cuts: Vec<f64> = (0..=q).map(|i| b.lerp(i, q + 1)).collect();
    Ok(cuts.windows(2).map(|c| Interval::new(c[0], c[1])).collect())
}

/// Assembles the Lipschitz budget for a violation function with envelope
/// slope bound `w_star` over `subdomain`: geometric gradient suprema from the
/// candidate sets, interpolation gradient suprema over the subinterval's
/// preimage box.
pub fn lipschitz_budget(
    ctx: &PixelCurveContext,
    w_star: f64,
    subdomain: Interval,
) -> Result<LipschitzBudget, BoundsError> {
    let intr = ctx.intrinsics();
    let s = ctx.scenario();
    let p = ctx.target_coord();
    let (geom_u, geom_v) = gradient_sup(intr, s, p, subdomain)?;
    let (u_range, v_range) = preimage_box(intr, s, p, subdomain)?;
    let (interp_u, interp_v) = interp_gradient_bound(ctx.image(), u_range, v_range);
    Ok(LipschitzBudget {
        l: w_star + interp_u * geom_u + interp_v * geom_v,
        w_star,
        interp_u,
        interp_v,
        geom_u,
        geom_v,
    })
}

/// [`lipschitz_budget`] for a single segment (`w_star = |segment.w|`).
pub fn lipschitz_constant(
    ctx: &PixelCurveContext,
    segment: &LinearSegment,
    subdomain: Interval,
) -> Result<LipschitzBudget, BoundsError> {
    lipschitz_budget(ctx, segment.w.abs(), subdomain)
}

/// Synthesizes the sound piecewise-linear bound for one pixel curve: fits
/// per-cell segments to `samples` grid points, then certifies each side by
/// epsilon-maximizing the violation of every segment over its own cell
/// (where the piecewise bound is smooth) and shifting the whole side by the
/// worst certified maximum, clamped to zero.
pub fn bound_pixel(
    ctx: &PixelCurveContext,
    config: &BoundConfig,
) -> Result<(PiecewiseLinearBound, BabStats), BoundsError> {
    if config.samples < 2 {
        return Err(BoundsError::DegenerateSamples {
            reason: format!("need at least 2 samples per cell, got {}", config.samples),
        });
    }
    let b = ctx.scenario().domain();
    let cells = split_domain(b, config.q)?;

    let mut lower = Vec::with_capacity(cells.len());
    let mut upper = Vec::with_capacity(cells.len());
    for cell in &cells {
        let samples = cell
            .grid(config.samples)
            .into_iter()
            .map(|k| Ok((k, ctx.pixel_value(k)?)))
            .collect::<Result<Vec<_>, ImagingError>>()?;
        lower.push(fit_segment(&samples, Side::Lower)?);
        upper.push(fit_segment(&samples, Side::Upper)?);
    }

    let mut stats = BabStats::default();
    let mut certify = |segments: &[LinearSegment], side: Side| -> Result<f64, BoundsError> {
        let mut worst = f64::NEG_INFINITY;
        for seg in segments {
            let violation = |k: f64| -> Result<f64, BoundsError> {
                let g = ctx.pixel_value(k)?;
                Ok(match side {
                    Side::Lower => seg.eval(k) - g,
                    Side::Upper => g - seg.eval(k),
                })
            };
            let out = eps_max(
                violation,
                seg.subdomain,
                |sub| Ok(lipschitz_constant(ctx, seg, sub)?.l),
                config.eps,
                config.max_iters,
            )?;
            stats.iterations += out.iterations;
            stats.warnings += u32::from(out.exhausted);
            worst = worst.max(out.value);
        }
        Ok(worst.max(0.0))
    };
    let shift_lower = certify(&lower, Side::Lower)?;
    let shift_upper = certify(&upper, Side::Upper)?;

    Ok((
        PiecewiseLinearBound {
            lower,
            upper,
            shift_lower,
            shift_upper,
            epsilon: config.eps,
            sound: true,
        },
        stats,
    ))
}

/// [`bound_pixel`] over every pixel, in parallel. The result is independent
/// of scheduling: each pixel is pure and collected in row-major order, and
/// the aggregated counters are integers.
pub fn bound_image(
    img: &Image,
    intr: CameraIntrinsics,
    s: &PerturbationScenario,
    config: &BoundConfig,
) -> Result<BoundSet, BoundsError> {
    let (h, w) = (img.height(), img.width());
    let per_pixel: Vec<(PiecewiseLinearBound, BabStats)> = (0..h * w)
        .into_par_iter()
        .map(|idx| {
            let ctx = PixelCurveContext::new(img, intr, *s, idx / w, idx % w)?;
            bound_pixel(&ctx, config)
        })
        .collect::<Result<_, BoundsError>>()?;
    let bab_iterations = per_pixel.iter().map(|r| r.1.iterations).sum();
    let warnings = per_pixel.iter().map(|r| u64::from(r.1.warnings)).sum();
    Ok(BoundSet {
        scenario: *s,
        intr,
        padding: img.padding(),
        image_height: h,
        image_width: w,
        config: *config,
        warnings,
        bab_iterations,
        bounds: per_pixel.into_iter().map(|r| r.0).collect(),
    })
}

/// Exact area between the sound bounds, `integral of UB* - LB* over B`.
/// Lower and upper segments share the partition, so the gap is linear on
/// each cell and the per-cell trapezoid rule is exact.
pub fn polytope_area(bound: &PiecewiseLinearBound) -> f64 {
    let shift = bound.shift_lower + bound.shift_upper;
    bound
        .lower
        .iter()
        .zip(&bound.upper)
        .map(|(l, u)| {
            let cell = l.subdomain;
            let gap = |k: f64| u.eval(k) - l.eval(k);
            (0.5 * (gap(cell.lo) + gap(cell.hi)) + shift) * cell.width()
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ScenarioKind;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_image(seed: u64, h: usize, w: usize, padding: Padding) -> Image {
        let mut rng = StdRng::seed_from_u64(seed);
        let data = (0..h * w).map(|_| rng.gen_range(0.0..=1.0)).collect();
        Image::new(h, w, data, padding).unwrap()
    }


    fn dense_soundness_check(
        ctx: &PixelCurveContext,
        bound: &PiecewiseLinearBound,
        grid: usize,
        tol: f64,
    ) {
        for k in ctx.scenario().domain().grid(grid) {
            let g = ctx.pixel_value(k).unwrap();
            let (lo, hi) = (bound.lower_star(k), bound.upper_star(k));
            assert!(
                lo - tol <= g && g <= hi + tol,
                "pixel {:?} at kappa = {k}: G = {g} outside [{lo}, {hi}]",
                ctx.target()
            );
        }
    }

    // ==== split_domain ====

    #[test]
    fn split_produces_contiguous_equal_cells() {
        let cells = split_domain(Interval::new(0.0, 1.0), 2).unwrap();
        assert_eq!(cells.len(), 2);
        assert_eq!((cells[0].lo, cells[0].hi), (0.0, 0.5));
        assert_eq!((cells[1].lo, cells[1].hi), (0.5, 1.0));

        let whole = split_domain(Interval::new(0.0, 1.0), 1).unwrap();
        assert_eq!((whole[0].lo, whole[0].hi), (0.0, 1.0));

        let b = Interval::new(-5f64.to_radians(), 5f64.to_radians());
        let quarters = split_domain(b, 4).unwrap();
        let want = 2.5f64.to_radians();
        for (t, cell) in quarters.iter().enumerate() {
            assert!((cell.width() - want).abs() < 1e-15, "cell {t} width {}", cell.width());
        }
        for pair in quarters.windows(2) {
            assert_eq!(pair[0].hi, pair[1].lo, "cells must share boundaries bitwise");
        }
        assert_eq!(quarters[0].lo, b.lo);
        assert_eq!(quarters[3].hi, b.hi);
    }

    #[test]
    fn empty_splits_are_rejected() {
        assert!(matches!(
            split_domain(Interval::new(0.0, 1.0), 0),
            Err(BoundsError::EmptyDomain)
        ));
        assert!(matches!(
            split_domain(Interval::point(0.3), 2),
            Err(BoundsError::EmptyDomain)
        ));
    }

    // ==== lipschitz_constant ====

    #[test]
    fn constant_image_budget_reduces_to_the_slope() {
        let img = Image::constant(6, 6, 0.3, Padding::Black).unwrap();
        let intr = CameraIntrinsics::defaults_for(6, 6);
        let s = PerturbationScenario::roll(Interval::new(-0.5, 0.5)).unwrap();
        let ctx = PixelCurveContext::new(&img, intr, s, 2, 3).unwrap();
        let seg = LinearSegment { w: -0.7, b: 0.1, subdomain: s.domain() };
        let budget = lipschitz_constant(&ctx, &seg, s.domain()).unwrap();
        assert_eq!(budget.l, 0.7, "interp terms vanish on a constant image");
        assert_eq!((budget.interp_u, budget.interp_v), (0.0, 0.0));
    }

    #[test]
    fn trans_y_ramp_slope_is_captured_exactly() {
        // Horizontal ramp: G(kappa) is exactly linear with slope
        // -(v - yc) / (z (w - 1)); the dense-grid slope of J must stay under
        // the assembled constant.
        let img = Image::from_fn(12, 12, Padding::Replicate, |_, j| j as f64 / 11.0).unwrap();
        let intr = CameraIntrinsics::defaults_for(12, 12);
        let s = PerturbationScenario::trans_y(Interval::new(0.0, 1.0), 10.0).unwrap();
        let ctx = PixelCurveContext::new(&img, intr, s, 8, 5).unwrap();
        let slope = -(8.0 - intr.yc) / (10.0 * 11.0);
        let seg = LinearSegment { w: slope, b: 0.0, subdomain: s.domain() };
        let budget = lipschitz_constant(&ctx, &seg, s.domain()).unwrap();
        let grid = s.domain().grid(2000);
        let mut max_slope = 0.0f64;
        for pair in grid.windows(2) {
            let j0 = seg.eval(pair[0]) - ctx.pixel_value(pair[0]).unwrap();
            let j1 = seg.eval(pair[1]) - ctx.pixel_value(pair[1]).unwrap();
            max_slope = max_slope.max(((j1 - j0) / (pair[1] - pair[0])).abs());
        }
        assert!(max_slope <= budget.l + 1e-9, "J slope {max_slope} above L = {}", budget.l);
        assert!(max_slope < 1e-10, "J should be constant for the exact slope");
    }

    #[test]
    fn random_contexts_never_exceed_the_budget() {
        let mut rng = StdRng::seed_from_u64(55);
        for trial in 0..100 {
            let kind = ScenarioKind::ALL[trial % 6];
            let s = match kind {
                ScenarioKind::Roll | ScenarioKind::Pitch | ScenarioKind::Yaw => {
                    let half = rng.gen_range(0.05..0.35);
                    PerturbationScenario::new(kind, Interval::new(-half, half), None).unwrap()
                }
                _ => PerturbationScenario::new(
                    kind,
                    Interval::new(0.0, rng.gen_range(0.5..2.0)),
                    Some(rng.gen_range(5.0..20.0)),
                )
                .unwrap(),
            };
            let img = random_image(1000 + trial as u64, 10, 10, Padding::Reflect);
            let intr = CameraIntrinsics::defaults_for(10, 10);
            let ctx = PixelCurveContext::new(
                &img,
                intr,
                s,
                rng.gen_range(0..10),
                rng.gen_range(0..10),
            )
            .unwrap();
            let seg = LinearSegment {
                w: rng.gen_range(-2.0..2.0),
                b: rng.gen_range(-1.0..1.0),
                subdomain: s.domain(),
            };
            let budget = lipschitz_constant(&ctx, &seg, s.domain()).unwrap();
            let grid = s.domain().grid(1000);
            for pair in grid.windows(2) {
                let j0 = seg.eval(pair[0]) - ctx.pixel_value(pair[0]).unwrap();
                let j1 = seg.eval(pair[1]) - ctx.pixel_value(pair[1]).unwrap();
                let fd = ((j1 - j0) / (pair[1] - pair[0])).abs();
                assert!(
                    fd <= budget.l + 1e-9,
                    "{kind} trial {trial}: finite-difference slope {fd} above {}",
                    budget.l
                );
            }
        }
    }

    // ==== bound_pixel ====

    #[test]
    fn constant_image_bounds_collapse_to_the_constant() {
        let img = Image::constant(6, 6, 0.6, Padding::Replicate).unwrap();
        let intr = CameraIntrinsics::defaults_for(6, 6);
        let s = PerturbationScenario::pitch(Interval::new(-0.3, 0.3)).unwrap();
        let ctx = PixelCurveContext::new(&img, intr, s, 3, 3).unwrap();
        let config = BoundConfig::default();
        let (bound, stats) = bound_pixel(&ctx, &config).unwrap();
        assert!(bound.sound);
        assert_eq!(stats.warnings, 0);
        for k in s.domain().grid(500) {
            let (lo, hi) = (bound.lower_star(k), bound.upper_star(k));
            assert!(lo <= 0.6 && 0.6 <= hi);
            assert!(hi - lo <= 2.0 * config.eps + 1e-9, "width {} at {k}", hi - lo);
        }
    }

    #[test]
    fn linear_curve_needs_at_most_the_slack_shift() {
        // TransY on a ramp keeps the preimage inside one interpolation cell,
        // so G is exactly linear and both fits are exact; the shifts can
        // carry at most the certificate slack.
        let img = Image::from_fn(12, 12, Padding::Replicate, |_, j| j as f64 / 11.0).unwrap();
        let intr = CameraIntrinsics::defaults_for(12, 12);
        let s = PerturbationScenario::trans_y(Interval::new(0.0, 0.5), 10.0).unwrap();
        let ctx = PixelCurveContext::new(&img, intr, s, 8, 5).unwrap();
        let (bound, _) = bound_pixel(&ctx, &BoundConfig::default()).unwrap();
        assert!(bound.shift_lower <= bound.epsilon + 1e-9, "shift {}", bound.shift_lower);
        assert!(bound.shift_upper <= bound.epsilon + 1e-9, "shift {}", bound.shift_upper);
        dense_soundness_check(&ctx, &bound, 2000, 1e-9);
    }

    #[test]
    fn yaw_bounds_are_sound_on_a_dense_grid() {
        let img = random_image(7, 12, 12, Padding::Black);
        let intr = CameraIntrinsics::defaults_for(12, 12);
        let s = PerturbationScenario::yaw(Interval::new(0.0, 10f64.to_radians())).unwrap();
        let config = BoundConfig::default();
        for (i, j) in [(0, 0), (3, 9), (6, 6), (11, 2), (11, 11)] {
            let ctx = PixelCurveContext::new(&img, intr, s, i, j).unwrap();
            let (bound, _) = bound_pixel(&ctx, &config).unwrap();
            dense_soundness_check(&ctx, &bound, 2000, 1e-9);
        }
    }

    #[test]
    fn violation_certificate_brackets_the_dense_maximum() {
        // Deliberately undersample (5 per cell) so the fits really do cross
        // the curve; the shift must then cover the dense-grid violation and
        // stay within eps plus one grid cell of Lipschitz drift above it.
        let img = random_image(11, 12, 12, Padding::Black);
        let intr = CameraIntrinsics::defaults_for(12, 12);
        let s = PerturbationScenario::roll(Interval::new(-0.6, 0.6)).unwrap();
        let config = BoundConfig { samples: 5, ..BoundConfig::default() };
        let ctx = PixelCurveContext::new(&img, intr, s, 2, 10).unwrap();
        let (bound, _) = bound_pixel(&ctx, &config).unwrap();
        let grid = s.domain().grid(100_000);
        let mut max_violation = f64::NEG_INFINITY;
        for &k in &grid {
            let g = ctx.pixel_value(k).unwrap();
            max_violation = max_violation.max(bound.lower_unsound(k) - g);
        }
        assert!(max_violation > 0.0, "want an actually-violating fit for this test");
        assert!(
            max_violation <= bound.shift_lower,
            "dense violation {max_violation} above certified shift {}",
            bound.shift_lower
        );
        let w_star = bound.lower.iter().map(|s| s.w.abs()).fold(0.0, f64::max);
        let l = lipschitz_budget(&ctx, w_star, s.domain()).unwrap().l;
        let step = s.domain().width() / (grid.len() - 1) as f64;
        assert!(
            bound.shift_lower <= max_violation + config.eps + l * step,
            "shift {} too loose vs {max_violation}",
            bound.shift_lower
        );
    }

    #[test]
    fn unsound_envelope_sits_exactly_one_shift_above() {
        let img = random_image(13, 10, 10, Padding::Gray);
        let intr = CameraIntrinsics::defaults_for(10, 10);
        let s = PerturbationScenario::pitch(Interval::new(-0.25, 0.25)).unwrap();
        let ctx = PixelCurveContext::new(&img, intr, s, 4, 4).unwrap();
        let (bound, _) = bound_pixel(&ctx, &BoundConfig::default()).unwrap();
        // `a - (a - s)` can land one ulp away from `s`, so compare with a
        // tolerance instead of bitwise equality.
        for k in s.domain().grid(50) {
            let lower_gap = bound.lower_unsound(k) - bound.lower_star(k);
            let upper_gap = bound.upper_star(k) - bound.upper_unsound(k);
            assert!((lower_gap - bound.shift_lower).abs() < 1e-15, "{lower_gap}");
            assert!((upper_gap - bound.shift_upper).abs() < 1e-15, "{upper_gap}");
        }
    }

    // ==== bound_image ====

    #[test]
    fn two_by_two_constant_image_bounds_every_pixel() {
        let img = Image::constant(2, 2, 0.25, Padding::Black).unwrap();
        let intr = CameraIntrinsics::defaults_for(2, 2);
        let s = PerturbationScenario::roll(Interval::new(-0.2, 0.2)).unwrap();
        let set = bound_image(&img, intr, &s, &BoundConfig::default()).unwrap();
        assert_eq!(set.bounds.len(), 4);
        for bound in &set.bounds {
            assert!(bound.sound);
            assert!(bound.lower_star(0.0) <= 0.25 && 0.25 <= bound.upper_star(0.0));
        }
    }

    #[test]
    fn original_image_lies_inside_the_bounds_at_zero() {
        let img = random_image(17, 8, 8, Padding::Black);
        let intr = CameraIntrinsics::defaults_for(8, 8);
        let s = PerturbationScenario::yaw(Interval::new(-0.15, 0.15)).unwrap();
        let set = bound_image(&img, intr, &s, &BoundConfig::default()).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                let bound = set.bound_at(i, j);
                let x = img.get(i, j);
                assert!(
                    bound.lower_star(0.0) <= x && x <= bound.upper_star(0.0),
                    "pixel ({i},{j})"
                );
            }
        }
    }

    #[test]
    fn refining_the_partition_tightens_the_total_area() {
        // Nested sample grids (65 = 2*33 - 1 = 4*17 - 3) so each refinement
        // fits on a subset of the coarser level's constraints.
        let img = random_image(19, 8, 8, Padding::Black);
        let intr = CameraIntrinsics::defaults_for(8, 8);
        let s = PerturbationScenario::yaw(Interval::new(0.0, 10f64.to_radians())).unwrap();
        let mut areas = Vec::new();
        for (q, samples) in [(1, 65), (2, 33), (4, 17)] {
            let config = BoundConfig { q, samples, ..BoundConfig::default() };
            let set = bound_image(&img, intr, &s, &config).unwrap();
            areas.push(set.total_area());
        }
        assert!(
            areas[1] <= areas[0] + 1e-12 && areas[2] <= areas[1] + 1e-12,
            "areas must tighten: {areas:?}"
        );
    }

    // ==== polytope_area ====

    #[test]
    fn unit_band_has_area_equal_to_the_domain_width() {
        let cell = Interval::new(0.0, 2.0);
        let bound = PiecewiseLinearBound {
            lower: vec![LinearSegment { w: 0.0, b: 0.0, subdomain: cell }],
            upper: vec![LinearSegment { w: 0.0, b: 1.0, subdomain: cell }],
            shift_lower: 0.0,
            shift_upper: 0.0,
            epsilon: 0.01,
            sound: true,
        };
        assert_eq!(polytope_area(&bound), 2.0);
        let collapsed = PiecewiseLinearBound {
            upper: vec![LinearSegment { w: 0.0, b: 0.0, subdomain: cell }],
            ..bound
        };
        assert_eq!(polytope_area(&collapsed), 0.0);
    }

    #[test]
    fn area_matches_a_riemann_sum() {
        let img = random_image(23, 10, 10, Padding::Reflect);
        let intr = CameraIntrinsics::defaults_for(10, 10);
        let s = PerturbationScenario::roll(Interval::new(-0.5, 0.5)).unwrap();
        let ctx = PixelCurveContext::new(&img, intr, s, 1, 8).unwrap();
        let (bound, _) = bound_pixel(&ctx, &BoundConfig::default()).unwrap();
        let exact = polytope_area(&bound);
        let n = 1_000_000usize;
        let step = s.domain().width() / n as f64;
        let riemann: f64 = (0..n)
            .map(|t| {
                let k = s.domain().lo + (t as f64 + 0.5) * step;
                bound.upper_star(k) - bound.lower_star(k)
            })
            .sum::<f64>()
            * step;
        assert!(
            (exact - riemann).abs() <= 1e-6 * exact.abs().max(1e-12),
            "exact {exact} vs riemann {riemann}"
        );
    }
}
