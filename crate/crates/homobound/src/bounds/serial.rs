//! Plain-text serialization of [`BoundSet`]s (format `homobound-bounds v1`).
//!
//! The file is line-oriented: a fixed header (scenario, domain, camera
//! height, image dimensions, intrinsics, padding, synthesis configuration,
//! aggregate counters), then one record per pixel in row-major order:
//!
//! ```text
//! pixel <i> <j>
//! breakpoints <k_0> ... <k_q>
//! lower <q>
//! <w> <b>          (q lines)
//! upper <q>
//! <w> <b>          (q lines)
//! shift <lower> <upper>
//! eps <epsilon>
//! ```
//!
//! Floats are written with 17 significant digits, so parsing reproduces the
//! original values bitwise.

use super::{BoundConfig, BoundSet, BoundsError, LinearSegment, PiecewiseLinearBound};
use crate::geometry::{CameraIntrinsics, PerturbationScenario, ScenarioKind};
use crate::imaging::Padding;
use crate::Interval;
use std::fmt::Write as _;
use std::path::Path;

fn fmt_f(v: f64) -> String {
    format!("{v:.16e}")
}

/// Renders a bound set in the v1 text format. Refuses sets containing
/// unsound bounds or mismatched partitions: the format asserts soundness.
pub fn serialize_bounds(set: &BoundSet) -> Result<String, BoundsError> {
    let invalid = |msg: String| BoundsError::Format { path: "<bound set>".into(), msg };
    if set.bounds.len() != set.image_height * set.image_width {
        return Err(invalid(format!(
            "{} bounds for a {}x{} image",
            set.bounds.len(),
            set.image_height,
            set.image_width
        )));
    }
    let mut out = String::new();
    let w = &mut out;
    writeln!(w, "homobound-bounds v1").unwrap();
    writeln!(w, "scenario {}", set.scenario.kind().token()).unwrap();
    let b = set.scenario.domain();
    writeln!(w, "domain {} {}", fmt_f(b.lo), fmt_f(b.hi)).unwrap();
    match set.scenario.camera_height() {
        Some(z) => writeln!(w, "height {}", fmt_f(z)).unwrap(),
        None => writeln!(w, "height none").unwrap(),
    }
    writeln!(w, "image {} {}", set.image_height, set.image_width).unwrap();
    writeln!(w, "focal {}", fmt_f(set.intr.f)).unwrap();
    writeln!(w, "principal {} {}", fmt_f(set.intr.xc), fmt_f(set.intr.yc)).unwrap();
    writeln!(w, "padding {}", set.padding.token()).unwrap();
    writeln!(w, "q {}", set.config.q).unwrap();
    writeln!(w, "samples {}", set.config.samples).unwrap();
    writeln!(w, "eps {}", fmt_f(set.config.eps)).unwrap();
    writeln!(w, "max_iters {}", set.config.max_iters).unwrap();
    writeln!(w, "warnings {}", set.warnings).unwrap();
    writeln!(w, "bab_iterations {}", set.bab_iterations).unwrap();
    writeln!(w, "pixels {}", set.bounds.len()).unwrap();
    for (idx, bound) in set.bounds.iter().enumerate() {
        let (i, j) = (idx / set.image_width, idx % set.image_width);
        if !bound.sound {
            return Err(invalid(format!("pixel ({i}, {j}): refusing to serialize an unsound bound")));
        }
        if bound.lower.len() != set.config.q || bound.upper.len() != set.config.q {
            return Err(invalid(format!(
                "pixel ({i}, {j}): segment counts do not match q = {}",
                set.config.q
            )));
        }
        let cuts = bound.breakpoints();
        for (lo_seg, up_seg) in bound.lower.iter().zip(&bound.upper) {
            if lo_seg.subdomain != up_seg.subdomain {
                return Err(invalid(format!("pixel ({i}, {j}): sides disagree on the partition")));
            }
        }
        writeln!(w, "pixel {i} {j}").unwrap();
        let cuts: Vec<String> = cuts.iter().map(|&k| fmt_f(k)).collect();
        writeln!(w, "breakpoints {}", cuts.join(" ")).unwrap();
        for (label, segments) in [("lower", &bound.lower), ("upper", &bound.upper)] {
            writeln!(w, "{label} {}", segments.len()).unwrap();
            for seg in segments.iter() {
                writeln!(w, "{} {}", fmt_f(seg.w), fmt_f(seg.b)).unwrap();
            }
        }
        writeln!(w, "shift {} {}", fmt_f(bound.shift_lower), fmt_f(bound.shift_upper)).unwrap();
        writeln!(w, "eps {}", fmt_f(bound.epsilon)).unwrap();
    }
    Ok(out)
}

struct Lines<'a> {
    iter: std::str::Lines<'a>,
    origin: &'a str,
    lineno: usize,
}

impl<'a> Lines<'a> {
    fn err(&self, msg: impl Into<String>) -> BoundsError {
        BoundsError::Format {
            path: self.origin.to_string(),
            msg: format!("line {}: {}", self.lineno, msg.into()),
        }
    }

    fn next_line(&mut self) -> Result<&'a str, BoundsError> {
        for line in self.iter.by_ref() {
            self.lineno += 1;
            if !line.trim().is_empty() {
                return Ok(line.trim());
            }
        }
        self.lineno += 1;
        Err(BoundsError::Format {
            path: self.origin.to_string(),
            msg: "unexpected end of file".into(),
        })
    }

    /// Reads a line and strips the expected leading keyword.
    fn keyed(&mut self, key: &str) -> Result<&'a str, BoundsError> {
        let line = self.next_line()?;
        line.strip_prefix(key)
            .filter(|rest| rest.is_empty() || rest.starts_with(' '))
            .map(str::trim)
            .ok_or_else(|| self.err(format!("expected {key:?}, found {line:?}")))
    }

    fn floats(&self, rest: &str, n: usize) -> Result<Vec<f64>, BoundsError> {
        let vals: Result<Vec<f64>, _> = rest.split_whitespace().map(str::parse).collect();
        let vals = vals.map_err(|e| self.err(format!("bad float: {e}")))?;
        if vals.len() != n {
            return Err(self.err(format!("expected {n} values, found {}", vals.len())));
        }
        Ok(vals)
    }

    fn uints(&self, rest: &str, n: usize) -> Result<Vec<u64>, BoundsError> {
        let vals: Result<Vec<u64>, _> = rest.split_whitespace().map(str::parse).collect();
        let vals = vals.map_err(|e| self.err(format!("bad integer: {e}")))?;
        if vals.len() != n {
            return Err(self.err(format!("expected {n} values, found {}", vals.len())));
        }
        Ok(vals)
    }

    fn keyed_floats(&mut self, key: &str, n: usize) -> Result<Vec<f64>, BoundsError> {
        let rest = self.keyed(key)?;
        self.floats(rest, n)
    }

    fn keyed_uints(&mut self, key: &str, n: usize) -> Result<Vec<u64>, BoundsError> {
        let rest = self.keyed(key)?;
        self.uints(rest, n)
    }
}

/// Parses the v1 text format. `origin` names the source in error messages.
pub fn parse_bounds(text: &str, origin: &str) -> Result<BoundSet, BoundsError> {
    let mut lines = Lines { iter: text.lines(), origin, lineno: 0 };

    let magic = lines.next_line()?;
    if magic != "homobound-bounds v1" {
        return Err(lines.err(format!("unrecognized header {magic:?}")));
    }
    let kind_tok = lines.keyed("scenario")?;
    let kind = ScenarioKind::from_token(kind_tok)
        .ok_or_else(|| lines.err(format!("unknown scenario {kind_tok:?}")))?;
    let d = lines.keyed_floats("domain", 2)?;
    let domain = Interval::new(d[0], d[1]);
    let height_tok = lines.keyed("height")?;
    let camera_height = if height_tok == "none" {
        None
    } else {
        Some(lines.floats(height_tok, 1)?[0])
    };
    let scenario = PerturbationScenario::new(kind, domain, camera_height)
        .map_err(|e| lines.err(format!("invalid scenario: {e}")))?;
    let dims = lines.keyed_uints("image", 2)?;
    let (image_height, image_width) = (dims[0] as usize, dims[1] as usize);
    let f = lines.keyed_floats("focal", 1)?[0];
    let pp = lines.keyed_floats("principal", 2)?;
    let intr = CameraIntrinsics::new(f, pp[0], pp[1]);
    let pad_tok = lines.keyed("padding")?;
    let padding = Padding::from_token(pad_tok)
        .ok_or_else(|| lines.err(format!("unknown padding {pad_tok:?}")))?;
    let q = lines.keyed_uints("q", 1)?[0] as usize;
    let samples = lines.keyed_uints("samples", 1)?[0] as usize;
    let eps = lines.keyed_floats("eps", 1)?[0];
    let max_iters = lines.keyed_uints("max_iters", 1)?[0];
    let warnings = lines.keyed_uints("warnings", 1)?[0];
    let bab_iterations = lines.keyed_uints("bab_iterations", 1)?[0];
    let pixels = lines.keyed_uints("pixels", 1)?[0] as usize;
    if pixels != image_height * image_width {
        return Err(lines.err(format!(
            "{pixels} pixel records for a {image_height}x{image_width} image"
        )));
    }

    let mut bounds = Vec::with_capacity(pixels);
    for idx in 0..pixels {
        let (want_i, want_j) = (idx / image_width, idx % image_width);
        let pix = lines.keyed_uints("pixel", 2)?;
        if (pix[0] as usize, pix[1] as usize) != (want_i, want_j) {
            return Err(lines.err(format!(
                "out-of-order pixel record {} {} (expected {want_i} {want_j})",
                pix[0], pix[1]
            )));
        }
        let cuts = lines.keyed_floats("breakpoints", q + 1)?;
        let mut read_side = |label: &str| -> Result<Vec<LinearSegment>, BoundsError> {
            let n = lines.keyed_uints(label, 1)?[0] as usize;
            if n != q {
                return Err(lines.err(format!("{label} lists {n} segments, expected {q}")));
            }
            (0..q)
                .map(|t| {
                    let row = lines.next_line()?;
                    let wb = lines.floats(row, 2)?;
                    Ok(LinearSegment {
                        w: wb[0],
                        b: wb[1],
                        subdomain: Interval::new(cuts[t], cuts[t + 1]),
                    })
                })
                .collect()
        };
        let lower = read_side("lower")?;
        let upper = read_side("upper")?;
        let shifts = lines.keyed_floats("shift", 2)?;
        if shifts[0] < 0.0 || shifts[1] < 0.0 {
            return Err(lines.err(format!("negative shift {} {}", shifts[0], shifts[1])));
        }
        let epsilon = lines.keyed_floats("eps", 1)?[0];
        bounds.push(PiecewiseLinearBound {
            lower,
            upper,
            shift_lower: shifts[0],
            shift_upper: shifts[1],
            epsilon,
            sound: true,
        });
    }
    if let Ok(extra) = lines.next_line() {
        return Err(lines.err(format!("trailing content {extra:?}")));
    }

    Ok(BoundSet {
        scenario,
        intr,
        padding,
        image_height,
        image_width,
        config: BoundConfig { q, samples, eps, max_iters },
        warnings,
        bab_iterations,
        bounds,
    })
}

pub fn save_bounds(set: &BoundSet, path: &Path) -> Result<(), BoundsError> {
    let text = serialize_bounds(set)?;
    std::fs::write(path, text)
        .map_err(|e| BoundsError::Io { path: path.display().to_string(), source: e })
}

pub fn load_bounds(path: &Path) -> Result<BoundSet, BoundsError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| BoundsError::Io { path: path.display().to_string(), source: e })?;
    parse_bounds(&text, &path.display().to_string())
}
