use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::credit::{rule_gradients, Rule, StepView};
use crate::error::{invalid, Result};
use crate::nets::{softmax_cross_entropy, ForwardCache, Network};
use crate::numerics::{orthonormality_error, vector, DenseMatrix};

/// Angle in degrees between `g_tilde` and `g`; `None` if either vanishes.
pub fn cosine_angle(g_tilde: &[f64], g: &[f64]) -> Option<f64> {
    cosine(g_tilde, g).map(|c| libm::acos(c).to_degrees())
}

/// Cosine similarity clamped to `[-1, 1]`; `None` if either vector vanishes.
pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let na = vector::norm(a);
    let nb = vector::norm(b);
    if na == 0.0 || nb == 0.0 || !na.is_finite() || !nb.is_finite() {
        return None;
    }
    Some((vector::dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// `⟨g̃, g⟩/‖g‖²`; `None` if `g` vanishes.
pub fn projected_magnitude(g_tilde: &[f64], g: &[f64]) -> Option<f64> {
    let n2 = vector::norm_sq(g);
    if n2 == 0.0 || !n2.is_finite() {
        return None;
    }
    Some(vector::dot(g_tilde, g) / n2)
}

/// Fraction of the energy of `g` inside `span(U)`: `‖Uᵀg‖²/‖g‖²`.
pub fn alpha_fraction(u: &DenseMatrix, g: &[f64]) -> Result<f64> {
    if u.rows() != g.len() {
        return Err(invalid!(
            "basis dimension {} differs from gradient length {}",
            u.rows(),
            g.len()
        ));
    }
    if orthonormality_error(u) > 1e-8 {
        return Err(invalid!("alpha fraction needs an orthonormal basis"));
    }
    let n2 = vector::norm_sq(g);
    if n2 == 0.0 {
        return Err(invalid!("alpha fraction of a zero gradient"));
    }
    Ok(vector::norm_sq(&u.matvec_t(g)) / n2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Space {
    Activation,
    Weight,
}

impl Space {
    pub fn name(self) -> &'static str {
        match self {
            Space::Activation => "activation",
            Space::Weight => "weight",
        }
    }
}

/// One comparison of an estimated against the true gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentRecord {
    pub epoch: usize,
    pub layer: usize,
    pub space: Space,
    pub angle_degrees: Option<f64>,
    /// `‖g̃‖cos(angle)/‖g‖`.
    pub projected_magnitude: Option<f64>,
    pub pseudo_norm: f64,
    pub true_norm: f64,
}

impl AlignmentRecord {
    pub fn new(epoch: usize, layer: usize, space: Space, pseudo: &[f64], truth: &[f64]) -> Self {
        Self {
            epoch,
            layer,
            space,
            angle_degrees: cosine_angle(pseudo, truth),
            projected_magnitude: projected_magnitude(pseudo, truth),
            pseudo_norm: vector::norm(pseudo),
            true_norm: vector::norm(truth),
        }
    }
}

/// Estimated activation gradients `∂L/∂x_l` that the rule would deliver to
/// every hidden layer (before gating by `φ'`), flattened over the batch.
pub fn pseudo_activation_gradients(
    net: &Network,
    rule: Rule,
    feedback: &[DenseMatrix],
    cache: &ForwardCache,
    targets: &[usize],
) -> Result<Vec<DenseMatrix>> {
    let (_, delta_out) = softmax_cross_entropy(cache.output(), targets)?;
    match rule {
        Rule::Backprop => Ok(net.backprop_from(cache, &delta_out).0),
        Rule::Nmnc | Rule::Vnc | Rule::Dfa => Ok(feedback.iter().map(|b| delta_out.matmul_nt(b)).collect()),
        Rule::Mirror(_) => {
            let depth = net.depth();
            let mut out = alloc::vec![DenseMatrix::zeros(0, 0); depth - 1];
            let mut delta = delta_out;
            for l in (1..depth).rev() {
                let g = net.layers[l].input_gradient_with(&feedback[l - 1], &delta);
                let act = net.layers[l - 1].spec.activation;
                let pre = &cache.pre[l - 1];
                delta = DenseMatrix::from_fn(g.rows(), g.cols(), |r, c| g[(r, c)] * act.derivative(pre[(r, c)]));
                out[l - 1] = g;
            }
            Ok(out)
        }
    }
}

/// Activation- and weight-space alignment of every hidden layer for the
/// batch in `view`. Read-only: the true gradients never reach the trainer.
pub fn step_alignment(view: &StepView<'_>, epoch: usize) -> Result<Vec<AlignmentRecord>> {
    let net = view.net;
    let cache = net.forward(view.inputs)?;
    let truth = net.backprop(&cache, view.targets)?;
    let pseudo_act = pseudo_activation_gradients(net, view.rule, view.feedback, &cache, view.targets)?;
    let (_, pseudo_w) = rule_gradients(net, view.rule, view.feedback, &cache, view.targets)?;
    let mut records = Vec::with_capacity(2 * net.hidden_count());
    for l in 0..net.hidden_count() {
        records.push(AlignmentRecord::new(
            epoch,
            l,
            Space::Activation,
            pseudo_act[l].as_slice(),
            truth.activation[l].as_slice(),
        ));
        records.push(AlignmentRecord::new(
            epoch,
            l,
            Space::Weight,
            &pseudo_w[l].flatten(),
            &truth.params[l].flatten(),
        ));
    }
    Ok(records)
}

/// Per-epoch aggregate of alignment records for one (layer, space).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentSummary {
    pub epoch: usize,
    pub layer: usize,
    pub space: Space,
    /// Angle of the epoch-mean cosine.
    pub angle_of_mean: f64,
    /// Mean of the per-batch angles.
    pub mean_angle: f64,
    pub projected_magnitude: f64,
    pub pseudo_norm: f64,
    pub true_norm: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Default)]
struct Sums {
    cos: f64,
    angle: f64,
    proj: f64,
    pseudo: f64,
    truth: f64,
    count: usize,
}

/// Accumulates records and reduces them per epoch in a fixed order.
#[derive(Debug, Clone, Default)]
pub struct AlignmentAccumulator {
    sums: BTreeMap<(usize, usize, Space), Sums>,
}

impl AlignmentAccumulator {
    pub fn push(&mut self, r: &AlignmentRecord) {
        let (Some(angle), Some(proj)) = (r.angle_degrees, r.projected_magnitude) else {
            return;
        };
        let s = self.sums.entry((r.epoch, r.layer, r.space)).or_default();
        s.cos += libm::cos(angle.to_radians());
        s.angle += angle;
        s.proj += proj;
        s.pseudo += r.pseudo_norm;
        s.truth += r.true_norm;
        s.count += 1;
    }

    pub fn summaries(&self) -> Vec<AlignmentSummary> {
        self.sums
            .iter()
            .map(|(&(epoch, layer, space), s)| {
                let n = s.count as f64;
                AlignmentSummary {
                    epoch,
                    layer,
                    space,
                    angle_of_mean: libm::acos((s.cos / n).clamp(-1.0, 1.0)).to_degrees(),
                    mean_angle: s.angle / n,
                    projected_magnitude: s.proj / n,
                    pseudo_norm: s.pseudo / n,
                    true_norm: s.truth / n,
                    count: s.count,
                }
            })
            .collect()
    }
}
