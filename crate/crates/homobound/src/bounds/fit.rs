//! Sample-feasible linear segment fitting.
//!
//! For the lower side the fit solves
//!
//! ```text
//! minimize   mean_i [ G(kappa_i) - (w kappa_i + b) ]
//! subject to w kappa_i + b <= G(kappa_i)   for all i
//! ```
//!
//! (mirrored for the upper side). Minimizing the mean gap is the same as
//! maximizing `w kbar + b` at the sample mean `kbar`, so some optimal line
//! passes through two samples or is horizontal through one; enumerating
//! those O(n^2) candidate slopes with the tightest feasible intercept solves
//! the LP exactly without a solver dependency.

use super::{BoundsError, LinearSegment};
use crate::Interval;

/// Which side of the curve a segment bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Lower,
    Upper,
}

/// Fits the optimal sample-feasible line for one side. The returned segment
/// lies weakly below (Lower) or above (Upper) every sample, touches at least
/// one, and minimizes the mean gap; its subdomain is the sample hull. Ties
/// break toward the smallest `|w|`, then the smallest `b`.
pub fn fit_segment(samples: &[(f64, f64)], side: Side) -> Result<LinearSegment, BoundsError> {
    if samples.len() < 2 {
        return Err(BoundsError::DegenerateSamples {
            reason: format!("need at least 2 samples, got {}", samples.len()),
        });
    }
    let k_min = samples.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let k_max = samples.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
    if !(k_min < k_max) {
        return Err(BoundsError::DegenerateSamples {
            reason: format!("samples share a single parameter value {k_min}"),
        });
    }
    let kbar = samples.iter().map(|s| s.0).sum::<f64>() / samples.len() as f64;

    let mut slopes = vec![0.0f64];
    for (a, &(ka, ga)) in samples.iter().enumerate() {
        for &(kb, gb) in &samples[a + 1..] {
            if ka != kb {
                slopes.push((gb - ga) / (kb - ka));
            }
        }
    }

    // Tightest feasible intercept for a slope, and the resulting objective
    // value at the sample mean (to be maximized for Lower, minimized for
    // Upper; flipping the sign unifies the two).
    let intercept = |w: f64| -> f64 {
        let residuals = samples.iter().map(|&(k, g)| g - w * k);
        match side {
            Side::Lower => residuals.fold(f64::INFINITY, f64::min),
            Side::Upper => residuals.fold(f64::NEG_INFINITY, f64::max),
        }
    };
    let score = |w: f64, b: f64| match side {
        Side::Lower => w * kbar + b,
        Side::Upper => -(w * kbar + b),
    };

    let mut best: Option<(f64, f64, f64)> = None; // (score, w, b)
    for w in slopes {
        let b = intercept(w);
        let s = score(w, b);
        let better = match best {
            None => true,
            Some((bs, bw, bb)) => {
                s > bs || (s == bs && (w.abs() < bw.abs() || (w.abs() == bw.abs() && b < bb)))
            }
        };
        if better {
            best = Some((s, w, b));
        }
    }
    let (_, w, b) = best.expect("slope candidates are never empty");
    Ok(LinearSegment { w, b, subdomain: Interval::new(k_min, k_max) })
}
