//! Branch-and-bound epsilon-maximization of a Lipschitz function.
//!
//! Given `J` on an interval `B` and a provider of per-subinterval Lipschitz
//! constants, finds a certified value `Jhat` with
//! `sup J <= Jhat <= max J + eps` using only endpoint evaluations: over a
//! subinterval `[k1, k2]` with constant `L`, the two cones from the endpoint
//! values cap the function at `f_bound = (J(k1) + J(k2) + L (k2 - k1)) / 2`.
//! Subintervals whose cap cannot beat the running best by more than `eps`
//! are discarded; the rest split at their midpoint (one new evaluation
//! each). The search starts from an immediate dichotomy of `B` and always
//! processes the widest pending subinterval first.

use crate::Interval;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Result of an epsilon-maximization run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsMaxOutcome {
    /// Certified upper bound on `sup J`; at most `max J + eps` when the
    /// search converged, possibly looser when the iteration budget ran out.
    pub value: f64,
    /// Subintervals processed (queue pops).
    pub iterations: u64,
    /// True when the queue was not emptied within the iteration budget; the
    /// value then falls back on the widest caps still pending and remains a
    /// valid upper bound.
    pub exhausted: bool,
}

/// Endpoint-value cap on `sup J` over a subinterval of width `width` with
/// Lipschitz constant `l`.
pub(crate) fn f_bound(j_lo: f64, j_hi: f64, l: f64, width: f64) -> f64 {
    0.5 * (j_lo + j_hi + l * width)
}

struct Entry {
    iv: Interval,
    j_lo: f64,
    j_hi: f64,
    /// Parent's cap: a valid (if loose) bound on this subinterval, used to
    /// report a sound value when the budget is exhausted.
    inherited: f64,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Entry {}
impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Entry {
    // Max-heap: widest first, then smallest lower endpoint.
    fn cmp(&self, other: &Self) -> Ordering {
        self.iv
            .width()
            .total_cmp(&other.iv.width())
            .then_with(|| other.iv.lo.total_cmp(&self.iv.lo))
    }
}

/// Epsilon-maximizes `j` over `b`. `l_provider(sub)` must return a valid
/// Lipschitz constant for `j` restricted to `sub`. Requires `eps > 0`.
pub fn eps_max<E>(
    mut j: impl FnMut(f64) -> Result<f64, E>,
    b: Interval,
    mut l_provider: impl FnMut(Interval) -> Result<f64, E>,
    eps: f64,
    max_iters: u64,
) -> Result<EpsMaxOutcome, E> {
    assert!(eps > 0.0, "eps_max requires eps > 0, got {eps}");
    assert!(b.is_valid(), "eps_max requires a finite ordered interval, got {b}");

    let j_lo = j(b.lo)?;
    let j_hi = j(b.hi)?;
    let mut best = j_lo.max(j_hi);
    if b.width() == 0.0 {
        return Ok(EpsMaxOutcome { value: best + eps, iterations: 0, exhausted: false });
    }

    // Dichotomy from the start: split B once before entering the loop. The
    // root cap seeds the inherited bounds so that even a zero-iteration run
    // reports a sound value.
    let root_cap = f_bound(j_lo, j_hi, l_provider(b)?, b.width());
    let mid = b.midpoint();
    let j_mid = j(mid)?;
    best = best.max(j_mid);
    let mut queue = BinaryHeap::new();
    queue.push(Entry { iv: Interval::new(b.lo, mid), j_lo, j_hi: j_mid, inherited: root_cap });
    queue.push(Entry { iv: Interval::new(mid, b.hi), j_lo: j_mid, j_hi, inherited: root_cap });

    let mut iterations = 0u64;
    while let Some(entry) = queue.pop() {
        if iterations >= max_iters {
            queue.push(entry);
            break;
        }
        iterations += 1;
        let l = l_provider(entry.iv)?;
        let cap = f_bound(entry.j_lo, entry.j_hi, l, entry.iv.width());
        if cap <= best + eps {
            continue;
        }
        let m = entry.iv.midpoint();
        if m <= entry.iv.lo || m >= entry.iv.hi {
            // The interval is at floating-point resolution; its cap collapses
            // to the endpoint values, which `best` already covers.
            continue;
        }
        let j_m = j(m)?;
        best = best.max(j_m);
        queue.push(Entry {
            iv: Interval::new(entry.iv.lo, m),
            j_lo: entry.j_lo,
            j_hi: j_m,
            inherited: cap,
        });
        queue.push(Entry {
            iv: Interval::new(m, entry.iv.hi),
            j_lo: j_m,
            j_hi: entry.j_hi,
            inherited: cap,
        });
    }

    if queue.is_empty() {
        // Every region was either discarded against a best that only grew
        // since, or had its endpoints folded into `best`.
        Ok(EpsMaxOutcome { value: best + eps, iterations, exhausted: false })
    } else {
        let pending = queue.iter().map(|e| e.inherited).fold(f64::NEG_INFINITY, f64::max);
        Ok(EpsMaxOutcome {
            value: (best + eps).max(pending),
            iterations,
            exhausted: true,
        })
    }
}
