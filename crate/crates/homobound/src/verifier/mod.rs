//! Incomplete robustness verification of small feedforward ReLU classifiers
//! against a sound [`BoundSet`]: interval bound propagation over the whole
//! domain, or per-cell linear-in-kappa propagation with triangle ReLU
//! relaxations, deciding whether the true class keeps the largest logit.

mod io;

pub use io::{load_network, parse_network, save_network, serialize_network};

use crate::bounds::BoundSet;
use crate::imaging::{render, Image, ImagingError};
use crate::Interval;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VerifierError {
    #[error("{path}: {msg}")]
    Schema { path: String, msg: String },
    #[error("dimension mismatch ({what}): expected {expected}, got {got}")]
    DimensionMismatch { what: String, expected: usize, got: usize },
    #[error("label {label} out of range for {classes} classes")]
    InvalidLabel { label: usize, classes: usize },
    #[error("layer {layer} has a non-finite parameter")]
    NonFinite { layer: usize },
    #[error("bound set contains unsound bounds")]
    UnsoundBounds,
    #[error("subdomain [{lo}, {hi}] is not contained in one partition cell")]
    MisalignedSubdomain { lo: f64, hi: f64 },
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// One dense layer: `y = W x + b`, optionally followed by an elementwise
/// ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
    relu: bool,
}

impl Layer {
    /// Validates shape (rectangular weights, one bias per row) and
    /// finiteness. `index` is used only for error reporting.
    pub fn new(
        index: usize,
        weights: Vec<Vec<f64>>,
        bias: Vec<f64>,
        relu: bool,
    ) -> Result<Self, VerifierError> {
        if weights.is_empty() || weights[0].is_empty() {
            return Err(VerifierError::DimensionMismatch {
                what: format!("layer {index} size"),
                expected: 1,
                got: 0,
            });
        }
        let in_dim = weights[0].len();
        for row in &weights {
            if row.len() != in_dim {
                return Err(VerifierError::DimensionMismatch {
                    what: format!("layer {index} weight row"),
                    expected: in_dim,
                    got: row.len(),
                });
            }
        }
        if bias.len() != weights.len() {
            return Err(VerifierError::DimensionMismatch {
                what: format!("layer {index} bias"),
                expected: weights.len(),
                got: bias.len(),
            });
        }
        let finite = weights.iter().flatten().chain(&bias).all(|v| v.is_finite());
        if !finite {
            return Err(VerifierError::NonFinite { layer: index });
        }
        Ok(Layer { weights, bias, relu })
    }

    pub fn out_dim(&self) -> usize {
        self.weights.len()
    }

    pub fn in_dim(&self) -> usize {
        self.weights[0].len()
    }

    pub fn relu(&self) -> bool {
        self.relu
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }
}

/// A feedforward fully-connected classifier. Input is a row-major flattened
/// image; output neurons are class logits. The final layer is affine only.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
}

impl Network {
    pub fn new(layers: Vec<Layer>) -> Result<Self, VerifierError> {
        let last = layers.last().ok_or(VerifierError::DimensionMismatch {
            what: "layer count".into(),
            expected: 1,
            got: 0,
        })?;
        if last.relu {
            return Err(VerifierError::Schema {
                path: "<network>".into(),
                msg: "final layer must be linear".into(),
            });
        }
        for (idx, pair) in layers.windows(2).enumerate() {
            if pair[1].in_dim() != pair[0].out_dim() {
                return Err(VerifierError::DimensionMismatch {
                    what: format!("layer {} input", idx + 1),
                    expected: pair[0].out_dim(),
                    got: pair[1].in_dim(),
                });
            }
        }
        Ok(Network { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    /// Number of classes (output logits).
    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim()
    }

    /// Concrete forward pass.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, VerifierError> {
        if x.len() != self.in_dim() {
            return Err(VerifierError::DimensionMismatch {
                what: "network input".into(),
                expected: self.in_dim(),
                got: x.len(),
            });
        }
        let mut act = x.to_vec();
        for layer in &self.layers {
            let mut next: Vec<f64> = layer
                .weights
                .iter()
                .zip(&layer.bias)
                .map(|(row, &b)| b + row.iter().zip(&act).map(|(w, a)| w * a).sum::<f64>())
                .collect();
            if layer.relu {
                for v in &mut next {
                    *v = v.max(0.0);
                }
            }
            act = next;
        }
        Ok(act)
    }
}

/// Bound-propagation flavor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// One interval per pixel over the whole domain.
    Interval,
    /// Linear-in-kappa bounds, one propagation per partition cell.
    Linear,
}

impl Mode {
    pub const ALL: [Mode; 2] = [Mode::Interval, Mode::Linear];

    pub fn token(self) -> &'static str {
        match self {
            Mode::Interval => "interval",
            Mode::Linear => "linear",
        }
    }

    pub fn from_token(tok: &str) -> Option<Mode> {
        Mode::ALL.into_iter().find(|m| m.token() == tok)
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.token())
    }
}

/// Linear-in-kappa enclosure of one neuron over a subdomain: the value lies
/// between the two affine forms pointwise, and inside `concrete` everywhere.
/// The concrete interval is intersected with interval-propagation results,
/// so it may be tighter than the forms' range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeuronBound {
    /// Lower form `(slope, intercept)`: value >= slope * kappa + intercept.
    pub lower: (f64, f64),
    /// Upper form `(slope, intercept)`: value <= slope * kappa + intercept.
    pub upper: (f64, f64),
    /// Sound concrete enclosure over the subdomain.
    pub concrete: Interval,
}

/// One layer's worth of [`NeuronBound`]s over a fixed subdomain.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolicBound {
    pub subdomain: Interval,
    pub neurons: Vec<NeuronBound>,
}

impl SymbolicBound {
    /// Lower form of neuron `k` evaluated at `kappa`.
    pub fn lower_at(&self, k: usize, kappa: f64) -> f64 {
        let (w, b) = self.neurons[k].lower;
        w * kappa + b
    }

    /// Upper form of neuron `k` evaluated at `kappa`.
    pub fn upper_at(&self, k: usize, kappa: f64) -> f64 {
        let (w, b) = self.neurons[k].upper;
        w * kappa + b
    }

    pub fn concretes(&self) -> Vec<Interval> {
        self.neurons.iter().map(|n| n.concrete).collect()
    }
}

/// Verification verdict. This verifier is incomplete: `Unknown` means the
/// abstraction could not certify robustness, not that an attack exists.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Robust,
    Unknown,
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Status::Robust => "robust",
            Status::Unknown => "unknown",
        })
    }
}

/// Advisory counterexample candidate: the parameter with the worst observed
/// margin, never a certified attack.
#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    /// Candidate parameter value.
    pub kappa: f64,
    /// Actual network margin at `kappa` when a source image was available.
    pub margin: Option<f64>,
    /// The image rendered at `kappa` when a source image was available.
    pub image: Option<Image>,
}

/// Outcome of [`verify_robust`].
#[derive(Debug, Clone, PartialEq)]
pub struct VerificationOutcome {
    pub status: Status,
    /// Per-class lower bounds on `logit_true - logit_class`; the true
    /// class's own entry is positive infinity.
    pub margins: Vec<f64>,
    /// Present when the status is `Unknown`.
    pub witness: Option<Witness>,
}

fn ensure_sound(set: &BoundSet) -> Result<(), VerifierError> {
    if set.bounds.iter().all(|b| b.sound) {
        Ok(())
    } else {
        Err(VerifierError::UnsoundBounds)
    }
}

fn ensure_input_dim(net: &Network, set: &BoundSet) -> Result<(), VerifierError> {
    if net.in_dim() != set.bounds.len() {
        return Err(VerifierError::DimensionMismatch {
            what: "network input".into(),
            expected: set.bounds.len(),
            got: net.in_dim(),
        });
    }
    Ok(())
}

/// Conservative per-pixel projection of a bound set: for each pixel, the
/// hull of its sound bounds over the whole domain. Each segment is linear
/// on its cell, so the extrema sit at cell endpoints. The result is
/// intersected with the intensity range `[0, 1]`.
pub fn intervals_from_bounds(set: &BoundSet) -> Vec<Interval> {
    set.bounds
        .iter()
        .map(|bound| {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for (l, u) in bound.lower.iter().zip(&bound.upper) {
                let cell = l.subdomain;
                lo = lo.min(l.eval(cell.lo)).min(l.eval(cell.hi));
                hi = hi.max(u.eval(cell.lo)).max(u.eval(cell.hi));
            }
            Interval::new(
                (lo - bound.shift_lower).max(0.0),
                (hi + bound.shift_upper).min(1.0),
            )
        })
        .collect()
}

fn affine_ibp(layer: &Layer, x: &[Interval]) -> Vec<Interval> {
    layer
        .weights
        .iter()
        .zip(&layer.bias)
        .map(|(row, &b)| {
            let (mut lo, mut hi) = (b, b);
            for (&w, xi) in row.iter().zip(x) {
                if w >= 0.0 {
                    lo += w * xi.lo;
                    hi += w * xi.hi;
                } else {
                    lo += w * xi.hi;
                    hi += w * xi.lo;
                }
            }
            Interval::new(lo, hi)
        })
        .collect()
}

fn ibp_layers(net: &Network, input: &[Interval], count: usize) -> Vec<Interval> {
    let mut act = input.to_vec();
    for layer in &net.layers[..count] {
        act = affine_ibp(layer, &act);
        if layer.relu {
            for v in &mut act {
                *v = Interval::new(v.lo.max(0.0), v.hi.max(0.0));
            }
        }
    }
    act
}

/// Standard interval bound propagation through the whole network.
pub fn ibp_forward(net: &Network, input: &[Interval]) -> Result<Vec<Interval>, VerifierError> {
    if input.len() != net.in_dim() {
        return Err(VerifierError::DimensionMismatch {
            what: "network input".into(),
            expected: net.in_dim(),
            got: input.len(),
        });
    }
    Ok(ibp_layers(net, input, net.layers.len()))
}

/// The two enclosures being intersected both contain the true value range,
/// so they overlap up to roundoff; collapse defensively if rounding makes
/// them cross.
fn intersect_enclosures(lo: f64, hi: f64) -> Interval {
    if lo <= hi {
        Interval::new(lo, hi)
    } else {
        Interval::point(0.5 * (lo + hi))
    }
}

fn form_min(form: (f64, f64), sub: Interval) -> f64 {
    let at = |k: f64| form.0 * k + form.1;
    at(sub.lo).min(at(sub.hi))
}

fn form_max(form: (f64, f64), sub: Interval) -> f64 {
    let at = |k: f64| form.0 * k + form.1;
    at(sub.lo).max(at(sub.hi))
}

/// Input-layer symbolic bounds on one partition cell: each pixel's active
/// shifted segments as forms, concretes narrowed by the global per-pixel
/// intervals and the intensity range.
fn input_bounds(
    set: &BoundSet,
    subdomain: Interval,
    globals: &[Interval],
) -> Result<SymbolicBound, VerifierError> {
    let mid = subdomain.midpoint();
    let cell = set.bounds[0].segments_at(mid).0.subdomain;
    if !(cell.lo <= subdomain.lo && subdomain.hi <= cell.hi) {
        return Err(VerifierError::MisalignedSubdomain { lo: subdomain.lo, hi: subdomain.hi });
    }
    let neurons = set
        .bounds
        .iter()
        .zip(globals)
        .map(|(bound, g)| {
            let (l, u) = bound.segments_at(mid);
            let lower = (l.w, l.b - bound.shift_lower);
            let upper = (u.w, u.b + bound.shift_upper);
            let lo = form_min(lower, subdomain).max(g.lo).max(0.0);
            let hi = form_max(upper, subdomain).min(g.hi).min(1.0);
            NeuronBound { lower, upper, concrete: intersect_enclosures(lo, hi) }
        })
        .collect();
    Ok(SymbolicBound { subdomain, neurons })
}

fn affine_linear(layer: &Layer, x: &SymbolicBound) -> SymbolicBound {
    let sub = x.subdomain;
    let neurons = layer
        .weights
        .iter()
        .zip(&layer.bias)
        .map(|(row, &b)| {
            let mut lower = (0.0, b);
            let mut upper = (0.0, b);
            let (mut ibp_lo, mut ibp_hi) = (b, b);
            for (&w, nb) in row.iter().zip(&x.neurons) {
                let (src_lo, src_hi) =
                    if w >= 0.0 { (nb.lower, nb.upper) } else { (nb.upper, nb.lower) };
                lower.0 += w * src_lo.0;
                lower.1 += w * src_lo.1;
                upper.0 += w * src_hi.0;
                upper.1 += w * src_hi.1;
                if w >= 0.0 {
                    ibp_lo += w * nb.concrete.lo;
                    ibp_hi += w * nb.concrete.hi;
                } else {
                    ibp_lo += w * nb.concrete.hi;
                    ibp_hi += w * nb.concrete.lo;
                }
            }
            let lo = form_min(lower, sub).max(ibp_lo);
            let hi = form_max(upper, sub).min(ibp_hi);
            NeuronBound { lower, upper, concrete: intersect_enclosures(lo, hi) }
        })
        .collect();
    SymbolicBound { subdomain: sub, neurons }
}

fn relu_linear(x: SymbolicBound) -> SymbolicBound {
    let sub = x.subdomain;
    let neurons = x
        .neurons
        .into_iter()
        .map(|nb| {
            let (l, u) = (nb.concrete.lo, nb.concrete.hi);
            if l >= 0.0 {
                nb
            } else if u <= 0.0 {
                NeuronBound {
                    lower: (0.0, 0.0),
                    upper: (0.0, 0.0),
                    concrete: Interval::point(0.0),
                }
            } else {
                // Triangle relaxation: ReLU(v) <= lam (v - l) on [l, u];
                // below, keep the identity when it outweighs zero.
                let lam = u / (u - l);
                let upper = (lam * nb.upper.0, lam * (nb.upper.1 - l));
                let lower = if u > -l { nb.lower } else { (0.0, 0.0) };
                let lo = form_min(lower, sub).max(0.0);
                let hi = form_max(upper, sub).min(u);
                NeuronBound { lower, upper, concrete: intersect_enclosures(lo, hi) }
            }
        })
        .collect();
    SymbolicBound { subdomain: sub, neurons }
}

fn linear_layers(
    net: &Network,
    set: &BoundSet,
    subdomain: Interval,
    globals: &[Interval],
    count: usize,
) -> Result<SymbolicBound, VerifierError> {
    let mut state = input_bounds(set, subdomain, globals)?;
    for layer in &net.layers[..count] {
        state = affine_linear(layer, &state);
        if layer.relu {
            state = relu_linear(state);
        }
    }
    Ok(state)
}

/// Linear-in-kappa bound propagation over one partition cell. The cell must
/// lie inside a single cell of the bound set's partition so each pixel has
/// one active segment pair.
pub fn linear_forward(
    net: &Network,
    set: &BoundSet,
    subdomain: Interval,
) -> Result<SymbolicBound, VerifierError> {
    ensure_sound(set)?;
    ensure_input_dim(net, set)?;
    let globals = intervals_from_bounds(set);
    linear_layers(net, set, subdomain, &globals, net.layers.len())
}

/// Margin lower bound from concrete intervals on the final layer's input:
/// one-step backsubstitution of the logit difference row.
fn margin_from_box(final_layer: &Layer, t: usize, c: usize, h: &[Interval]) -> f64 {
    let mut m = final_layer.bias[t] - final_layer.bias[c];
    for (k, hk) in h.iter().enumerate() {
        let d = final_layer.weights[t][k] - final_layer.weights[c][k];
        m += if d >= 0.0 { d * hk.lo } else { d * hk.hi };
    }
    m
}

/// Margin lower bound from symbolic bounds on the final layer's input: the
/// difference row applied to the forms, minimized over the subdomain.
fn margin_from_forms(final_layer: &Layer, t: usize, c: usize, h: &SymbolicBound) -> f64 {
    let mut form = (0.0, final_layer.bias[t] - final_layer.bias[c]);
    for (k, nb) in h.neurons.iter().enumerate() {
        let d = final_layer.weights[t][k] - final_layer.weights[c][k];
        let src = if d >= 0.0 { nb.lower } else { nb.upper };
        form.0 += d * src.0;
        form.1 += d * src.1;
    }
    form_min(form, h.subdomain)
}

/// Decides robustness of `true_label` over the bound set's domain. Interval
/// mode propagates one box; linear mode propagates per partition cell and
/// takes the worst margins. When the verdict is `Unknown`, a witness kappa
/// is picked from the worst cell's midpoint and endpoints; with `source`
/// present the candidates are ranked by the network's actual margin on the
/// rendered image.
pub fn verify_robust(
    net: &Network,
    set: &BoundSet,
    true_label: usize,
    mode: Mode,
    source: Option<&Image>,
) -> Result<VerificationOutcome, VerifierError> {
    ensure_sound(set)?;
    ensure_input_dim(net, set)?;
    let classes = net.out_dim();
    if true_label >= classes {
        return Err(VerifierError::InvalidLabel { label: true_label, classes });
    }
    if let Some(img) = source {
        if (img.height(), img.width()) != (set.image_height, set.image_width) {
            return Err(VerifierError::DimensionMismatch {
                what: "source image pixels".into(),
                expected: set.bounds.len(),
                got: img.height() * img.width(),
            });
        }
    }
    let final_layer = net.layers.last().unwrap();
    let hidden_count = net.layers.len() - 1;

    let mut margins = vec![f64::INFINITY; classes];
    // The cell whose margin decides the verdict, for witness sampling.
    let mut worst: (f64, Interval) = (f64::INFINITY, set.scenario.domain());
    match mode {
        Mode::Interval => {
            let h = ibp_layers(net, &intervals_from_bounds(set), hidden_count);
            for c in (0..classes).filter(|&c| c != true_label) {
                margins[c] = margin_from_box(final_layer, true_label, c, &h);
                if margins[c] < worst.0 {
                    worst = (margins[c], set.scenario.domain());
                }
            }
        }
        Mode::Linear => {
            let globals = intervals_from_bounds(set);
            let cells: Vec<Interval> =
                set.bounds[0].lower.iter().map(|s| s.subdomain).collect();
            for cell in cells {
                let h = linear_layers(net, set, cell, &globals, hidden_count)?;
                let concretes = h.concretes();
                for c in (0..classes).filter(|&c| c != true_label) {
                    let m = margin_from_forms(final_layer, true_label, c, &h)
                        .max(margin_from_box(final_layer, true_label, c, &concretes));
                    margins[c] = margins[c].min(m);
                    if m < worst.0 {
                        worst = (m, cell);
                    }
                }
            }
        }
    }

    let robust = margins.iter().all(|&m| m > 0.0);
    if robust {
        return Ok(VerificationOutcome { status: Status::Robust, margins, witness: None });
    }

    let cell = worst.1;
    let witness = match source {
        None => Witness { kappa: cell.midpoint(), margin: None, image: None },
        Some(img) => {
            let mut best: Option<Witness> = None;
            for kappa in [cell.midpoint(), cell.lo, cell.hi] {
                let rendered = render(img, set.intr, &set.scenario, kappa)?;
                let logits = net.forward(rendered.pixels())?;
                let margin = logits[true_label]
                    - logits
                        .iter()
                        .enumerate()
                        .filter(|&(c, _)| c != true_label)
                        .map(|(_, &v)| v)
                        .fold(f64::NEG_INFINITY, f64::max);
                if best.as_ref().map_or(true, |b| margin < b.margin.unwrap()) {
                    best = Some(Witness { kappa, margin: Some(margin), image: Some(rendered) });
                }
            }
            best.unwrap()
        }
    };
    Ok(VerificationOutcome { status: Status::Unknown, margins, witness: Some(witness) })
}
