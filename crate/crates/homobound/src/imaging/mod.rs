//! Image storage, padding semantics, bilinear interpolation, rendering under
//! a perturbation, the per-pixel value curve G(kappa), and the interpolation
//! gradient bounds feeding the Lipschitz constant.

mod io;

pub use io::{load_csv, load_image, load_pgm, save_csv, save_image, save_pgm, PgmFlavor};

use crate::geometry::{
    preimage, preimage_extremum_candidates, CameraIntrinsics, GeometryError, PerturbationScenario,
    PixelCoord,
};
use crate::Interval;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("image dimensions must be at least 2x2 (got {h}x{w})")]
    BadDimensions { h: usize, w: usize },
    #[error("intensity {value} at row {i}, column {j} is outside [0, 1]")]
    OutOfRangeIntensity { value: f64, i: usize, j: usize },
    #[error("target pixel ({i}, {j}) is outside the {h}x{w} image")]
    TargetOutOfBounds { i: usize, j: usize, h: usize, w: usize },
    #[error("non-finite interpolation coordinate ({u}, {v})")]
    NonFiniteCoordinate { u: f64, v: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("{path}: {msg}")]
    Format { path: String, msg: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Rule imputing pixel values outside the stored grid during interpolation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Padding {
    /// Constant 0.0 outside the image.
    #[default]
    Black,
    /// Constant 0.5 outside the image.
    Gray,
    /// Clamp to the nearest edge pixel.
    Replicate,
    /// Mirror about the edge pixel without repeating it:
    /// `... I[2] I[1] | I[0] I[1] ... I[n-1] | I[n-2] I[n-3] ...`
    Reflect,
    /// Modular (toroidal) indexing.
    Wrap,
}

impl Padding {
    pub const ALL: [Padding; 5] =
        [Padding::Black, Padding::Gray, Padding::Replicate, Padding::Reflect, Padding::Wrap];

    /// Stable lowercase token used by the CLI and file formats.
    pub fn token(&self) -> &'static str {
        match self {
            Padding::Black => "black",
            Padding::Gray => "gray",
            Padding::Replicate => "replicate",
            Padding::Reflect => "reflect",
            Padding::Wrap => "wrap",
        }
    }

    pub fn from_token(s: &str) -> Option<Self> {
        match s {
            "black" => Some(Padding::Black),
            "gray" => Some(Padding::Gray),
            "replicate" => Some(Padding::Replicate),
            "reflect" => Some(Padding::Reflect),
            "wrap" => Some(Padding::Wrap),
            _ => None,
        }
    }
}

impl std::fmt::Display for Padding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.token())
    }
}

/// Maps an index onto `0..n` for the per-axis padding modes. `None` means the
/// axis mapping is constant-fill (Black/Gray handle that at the call site).
fn map_axis(idx: i64, n: i64, padding: Padding) -> Option<i64> {
    if (0..n).contains(&idx) {
        return Some(idx);
    }
    match padding {
        Padding::Black | Padding::Gray => None,
        Padding::Replicate => Some(idx.clamp(0, n - 1)),
        Padding::Reflect => {
            // Reflection about the first and last pixel centers has period
            // 2(n - 1); fold into one period, then mirror the upper half.
            let p = 2 * (n - 1);
            let m = idx.rem_euclid(p);
            Some(if m < n { m } else { p - m })
        }
        Padding::Wrap => Some(idx.rem_euclid(n)),
    }
}

/// A single-channel intensity grid in `[0, 1]` with its padding mode.
/// Row-major storage; `(i, j)` indexes row `i` (the `v` axis, top-down) and
/// column `j` (the `u` axis, left-right).
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    h: usize,
    w: usize,
    data: Vec<f64>,
    padding: Padding,
}

impl Image {
    /// Builds an image from row-major data, validating dimensions (both at
    /// least 2) and the `[0, 1]` intensity range.
    pub fn new(h: usize, w: usize, data: Vec<f64>, padding: Padding) -> Result<Self, ImagingError> {
        if h < 2 || w < 2 || data.len() != h * w {
            return Err(ImagingError::BadDimensions { h, w });
        }
        for (idx, &value) in data.iter().enumerate() {
            if !(value.is_finite() && (0.0..=1.0).contains(&value)) {
                return Err(ImagingError::OutOfRangeIntensity { value, i: idx / w, j: idx % w });
            }
        }
        Ok(Image { h, w, data, padding })
    }

    /// Builds an image by evaluating `f(i, j)` at every pixel.
    pub fn from_fn(
        h: usize,
        w: usize,
        padding: Padding,
        f: impl Fn(usize, usize) -> f64,
    ) -> Result<Self, ImagingError> {
        let data = (0..h * w).map(|idx| f(idx / w, idx % w)).collect();
        Image::new(h, w, data, padding)
    }

    /// Constant-intensity image.
    pub fn constant(h: usize, w: usize, value: f64, padding: Padding) -> Result<Self, ImagingError> {
        Image::new(h, w, vec![value; h * w], padding)
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn padding(&self) -> Padding {
        self.padding
    }

    /// Same pixels with a different padding mode.
    pub fn with_padding(mut self, padding: Padding) -> Self {
        self.padding = padding;
        self
    }

    /// Stored intensity at in-bounds row `i`, column `j`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.h && j < self.w);
        self.data[i * self.w + j]
    }

    pub fn pixels(&self) -> &[f64] {
        &self.data
    }

    /// Intensity at arbitrary integer indices, imputing out-of-bounds values
    /// per the image's padding mode.
    pub fn sample_padded(&self, i: i64, j: i64) -> f64 {
        let fill = match self.padding {
            Padding::Black => 0.0,
            Padding::Gray => 0.5,
            _ => 0.0, // unreachable fill: the remaining modes always map in-bounds
        };
        match (map_axis(i, self.h as i64, self.padding), map_axis(j, self.w as i64, self.padding)) {
            (Some(r), Some(c)) => self.get(r as usize, c as usize),
            _ => fill,
        }
    }

    /// Bilinear interpolation at continuous coordinates `(u0, v0)`, padding
    /// each of the four corner samples individually. The interpolation cell
    /// lattice is anchored at integer pixel centers, so `frac` is taken
    /// directly on the coordinates. The result is clamped to `[0, 1]` to
    /// absorb round-off in the convex combination.
    pub fn bilinear(&self, u0: f64, v0: f64) -> Result<f64, ImagingError> {
        if !(u0.is_finite() && v0.is_finite()) {
            return Err(ImagingError::NonFiniteCoordinate { u: u0, v: v0 });
        }
        let (fu, fv) = (u0.floor(), v0.floor());
        let (a, b) = (u0 - fu, v0 - fv);
        let (c, r) = (fu as i64, fv as i64); // saturating casts for extreme coordinates
        let p00 = self.sample_padded(r, c);
        let p01 = self.sample_padded(r, c.saturating_add(1));
        let p10 = self.sample_padded(r.saturating_add(1), c);
        let p11 = self.sample_padded(r.saturating_add(1), c.saturating_add(1));
        let value = (1.0 - a) * (1.0 - b) * p00
            + a * (1.0 - b) * p01
            + (1.0 - a) * b * p10
            + a * b * p11;
        Ok(value.clamp(0.0, 1.0))
    }
}

/// The pixel-value curve `G(kappa)`: one output pixel of one image under one
/// perturbation scenario, as a function of the parameter.
#[derive(Debug, Clone, Copy)]
pub struct PixelCurveContext<'a> {
    image: &'a Image,
    intr: CameraIntrinsics,
    scenario: PerturbationScenario,
    /// Target pixel row.
    i: usize,
    /// Target pixel column.
    j: usize,
}

impl<'a> PixelCurveContext<'a> {
    pub fn new(
        image: &'a Image,
        intr: CameraIntrinsics,
        scenario: PerturbationScenario,
        i: usize,
        j: usize,
    ) -> Result<Self, ImagingError> {
        if i >= image.height() || j >= image.width() {
            return Err(ImagingError::TargetOutOfBounds {
                i,
                j,
                h: image.height(),
                w: image.width(),
            });
        }
        Ok(PixelCurveContext { image, intr, scenario, i, j })
    }

    pub fn target(&self) -> (usize, usize) {
        (self.i, self.j)
    }

    pub fn target_coord(&self) -> PixelCoord {
        PixelCoord::new(self.j as f64, self.i as f64)
    }

    pub fn scenario(&self) -> &PerturbationScenario {
        &self.scenario
    }

    pub fn intrinsics(&self) -> CameraIntrinsics {
        self.intr
    }

    pub fn image(&self) -> &'a Image {
        self.image
    }

    /// `G(kappa)`: the interpolated source intensity feeding the target pixel.
    pub fn pixel_value(&self, kappa: f64) -> Result<f64, ImagingError> {
        let q = preimage(self.intr, &self.scenario, kappa, self.target_coord())?;
        self.image.bilinear(q.u, q.v)
    }
}

/// Renders the whole image under the scenario at parameter `kappa`: every
/// output pixel takes its bilinear sample at the inverse-warped position.
/// Dimensions and padding mode carry over.
pub fn render(
    img: &Image,
    intr: CameraIntrinsics,
    s: &PerturbationScenario,
    kappa: f64,
) -> Result<Image, ImagingError> {
    let mut data = Vec::with_capacity(img.height() * img.width());
    for i in 0..img.height() {
        for j in 0..img.width() {
            let q = preimage(intr, s, kappa, PixelCoord::new(j as f64, i as f64))?;
            data.push(img.bilinear(q.u, q.v)?);
        }
    }
    Image::new(img.height(), img.width(), data, img.padding())
}

/// Per-axis canonical cell window: every integer cell is equivalent (same
/// padded corner values, hence same corner differences) to a cell inside
/// `[-(n + 2), 2n + 2]`, because all padding modes act per axis and are
/// either constant beyond one cell (Black/Gray/Replicate) or periodic with
/// period at most `2(n - 1) <= 2n + 2` (Reflect, Wrap).
fn cell_range(range: Interval, n: usize) -> (i64, i64) {
    let n = n as i64;
    let (win_lo, win_hi) = (-(n + 2), 2 * n + 2);
    let lo = range.lo.floor() as i64;
    let hi = range.hi.floor() as i64;
    if hi.saturating_sub(lo) >= win_hi - win_lo {
        (win_lo, win_hi)
    } else {
        (lo, hi)
    }
}

/// `(sup |dI/du|, sup |dI/dv|)` of the bilinear surface over every
/// interpolation cell intersecting `u_range x v_range`. Within a cell the
/// u-derivative is a convex mix of the two horizontal corner differences, so
/// the cell supremum is the larger absolute difference; likewise for v.
pub fn interp_gradient_bound(img: &Image, u_range: Interval, v_range: Interval) -> (f64, f64) {
    debug_assert!(u_range.is_valid() && v_range.is_valid());
    let (c_lo, c_hi) = cell_range(u_range, img.width());
    let (r_lo, r_hi) = cell_range(v_range, img.height());
    let mut sup_u = 0.0f64;
    let mut sup_v = 0.0f64;
    for r in r_lo..=r_hi {
        for c in c_lo..=c_hi {
            let p00 = img.sample_padded(r, c);
            let p01 = img.sample_padded(r, c + 1);
            let p10 = img.sample_padded(r + 1, c);
            let p11 = img.sample_padded(r + 1, c + 1);
            sup_u = sup_u.max((p01 - p00).abs()).max((p11 - p10).abs());
            sup_v = sup_v.max((p10 - p00).abs()).max((p11 - p01).abs());
        }
    }
    (sup_u, sup_v)
}

/// A rectangle guaranteed to contain the preimage trajectory
/// `{preimage(kappa) : kappa in B}` for pixel `p`: the hull of the preimage
/// evaluated at the endpoints of `B` and at every interior stationary
/// candidate of either coordinate's gradient, expanded by one full
/// interpolation cell on each side. Interior extrema of a coordinate are
/// zeros of its gradient, and for every scenario those zeros fall among the
/// other coordinate's stationary branches (or do not exist), so the union of
/// both candidate sets covers all extrema.
pub fn preimage_box(
    intr: CameraIntrinsics,
    s: &PerturbationScenario,
    p: PixelCoord,
    b: Interval,
) -> Result<(Interval, Interval), GeometryError> {
    let mut u = Interval::new(f64::INFINITY, f64::NEG_INFINITY);
    let mut v = Interval::new(f64::INFINITY, f64::NEG_INFINITY);
    for kappa in preimage_extremum_candidates(intr, s, p, b)? {
        let q = preimage(intr, s, kappa, p)?;
        u = Interval::new(u.lo.min(q.u), u.hi.max(q.u));
        v = Interval::new(v.lo.min(q.v), v.hi.max(q.v));
    }
    Ok((Interval::new(u.lo - 1.0, u.hi + 1.0), Interval::new(v.lo - 1.0, v.hi + 1.0)))
}
