//! Training objectives: masked reconstruction, instance- and label-level
//! masked contrastive losses, masked binary cross-entropy, and their
//! weighted sum.
//!
//! The [`taped`] functions record onto a [`Tape`] for training; the free
//! functions at the top level evaluate the same graphs on plain matrices.

use serde::{Deserialize, Serialize};

use crate::error::{DclError, Result};
use crate::numerics::{dot, Matrix, Tape, Var, ZERO_NORM};

/// Probabilities are clamped into `[BCE_EPS, 1 - BCE_EPS]` before the log.
pub const BCE_EPS: f64 = 1e-12;

/// Which availability gate weights the denominator of the label-level loss.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DenominatorGate {
    /// View availability `V`.
    #[default]
    View,
    /// The label-level gate (view available and sample has known labels).
    Label,
}

/// Loss weights and temperatures.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub tau_s: f64,
    pub tau_l: f64,
    pub label_denominator: DenominatorGate,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha: 0.01,
            beta: 0.01,
            gamma: 0.1,
            tau_s: 0.5,
            tau_l: 0.5,
            label_denominator: DenominatorGate::View,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(DclError::Config(format!("{name} must be >= 0, got {w}")));
            }
        }
        for (name, t) in [("tau_s", self.tau_s), ("tau_l", self.tau_l)] {
            if !(t > 0.0 && t.is_finite()) {
                return Err(DclError::Config(format!("{name} must be > 0, got {t}")));
            }
        }
        Ok(())
    }
}

/// The four loss values and their weighted total.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub reconstruction: f64,
    pub instance: f64,
    pub label: f64,
    pub classification: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub total: f64,
}

impl LossBreakdown {
    /// `L_c + alpha L_s + beta L_l + gamma L_r`.
    pub fn compose(reconstruction: f64, instance: f64, label: f64, classification: f64, w: &LossWeights) -> Self {
        LossBreakdown {
            reconstruction,
            instance,
            label,
            classification,
            alpha: w.alpha,
            beta: w.beta,
            gamma: w.gamma,
            total: classification + w.alpha * instance + w.beta * label + w.gamma * reconstruction,
        }
    }

    /// Name of the first non-finite component, if any.
    pub fn non_finite_component(&self) -> Option<&'static str> {
        [
            ("reconstruction (L_r)", self.reconstruction),
            ("instance contrastive (L_s)", self.instance),
            ("label contrastive (L_l)", self.label),
            ("classification (L_c)", self.classification),
            ("total (L_all)", self.total),
        ]
        .into_iter()
        .find(|(_, v)| !v.is_finite())
        .map(|(n, _)| n)
    }
}

/// Counts anchors skipped because their denominator vanished after the
/// self-pair was removed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ContrastiveDiagnostics {
    pub degenerate_anchors: usize,
}

/// Cosine similarity rescaled to `[0, 1]`. A zero vector has similarity 0.5
/// with everything.
pub fn cosine_sim01(a: &[f64], b: &[f64]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na < ZERO_NORM || nb < ZERO_NORM {
        log::debug!("cosine similarity with a zero-norm vector; using 0.5");
        return 0.5;
    }
    (dot(a, b) / (na * nb) + 1.0) / 2.0
}

/// Gate for the label-level loss: `V_im` times whether sample `i` has at
/// least one known label.
pub fn label_gate(view_indicator: &Matrix, label_indicator: &Matrix) -> Matrix {
    Matrix::from_fn(view_indicator.rows(), view_indicator.cols(), |i, m| {
        let known = label_indicator.row(i).iter().any(|&w| w != 0.0);
        if known {
            view_indicator.get(i, m)
        } else {
            0.0
        }
    })
}

pub mod taped {
    use super::*;

    /// `(1/v) Σ_m Σ_i (1/d_m) ||X̄_i - X'_i||² V_im`.
    pub fn reconstruction(
        tape: &mut Tape,
        reconstructions: &[Var],
        inputs: &[Matrix],
        view_indicator: &Matrix,
    ) -> Result<Var> {
        let v = reconstructions.len();
        if v == 0 || inputs.len() != v || view_indicator.cols() != v {
            return Err(DclError::shape(
                "reconstruction_loss",
                (reconstructions.len(), inputs.len()),
                view_indicator.shape(),
            ));
        }
        let mut terms = Vec::with_capacity(v);
        for (m, (&xbar, x)) in reconstructions.iter().zip(inputs).enumerate() {
            if tape.shape(xbar) != x.shape() || x.rows() != view_indicator.rows() {
                return Err(DclError::shape("reconstruction_loss", tape.shape(xbar), x.shape()));
            }
            let scale = 1.0 / (v as f64 * x.cols() as f64);
            let w: Vec<f64> = view_indicator.column(m).iter().map(|g| g * scale).collect();
            let target = tape.constant(x.clone());
            let diff = tape.sub(xbar, target)?;
            let sq = tape.mul(diff, diff)?;
            let gated = tape.scale_rows(sq, &w)?;
            terms.push(tape.sum(gated));
        }
        tape.add_all(&terms)
    }

    /// Masked cross-view InfoNCE summed over ordered view pairs and halved.
    ///
    /// For anchor `i` in view `m` against view `n`, the positive is the same
    /// sample in view `n`; the denominator runs over every sample of views
    /// `m` and `n` weighted by `denominator_gate`, minus the anchor's own
    /// self-pair. The term counts only when `anchor_gate[i,m]·anchor_gate[i,n]`
    /// is nonzero. Exponents are shifted by the maximum similarity 1.
    pub fn masked_contrastive(
        tape: &mut Tape,
        feats: &[Var],
        anchor_gate: &Matrix,
        denominator_gate: &Matrix,
        tau: f64,
        diag: &mut ContrastiveDiagnostics,
    ) -> Result<Var> {
        if tau.is_nan() || tau <= 0.0 {
            return Err(DclError::Config(format!("temperature must be > 0, got {tau}")));
        }
        let v = feats.len();
        if v == 0 || anchor_gate.cols() != v || denominator_gate.shape() != anchor_gate.shape() {
            return Err(DclError::shape("contrastive", (0, v), anchor_gate.shape()));
        }
        let n = anchor_gate.rows();
        for &f in feats {
            if tape.shape(f).0 != n {
                return Err(DclError::shape("contrastive", tape.shape(f), anchor_gate.shape()));
            }
        }
        if v < 2 || n == 0 {
            return Ok(tape.constant(Matrix::scalar(0.0)));
        }

        // exp((d - 1)/tau) with d = (cos + 1)/2  =>  exp((cos - 1)/(2 tau)).
        let k = 1.0 / (2.0 * tau);
        let units: Vec<Var> = feats.iter().map(|&f| tape.normalize_rows(f)).collect();
        let gate_cols: Vec<Var> = (0..v)
            .map(|m| tape.constant(Matrix::column_vector(&denominator_gate.column(m))))
            .collect();
        let mut within = Vec::with_capacity(v);
        for m in 0..v {
            let g = tape.matmul_nt(units[m], units[m])?;
            let e = tape.affine(g, k, -k);
            let e = tape.exp(e);
            within.push(tape.matmul(e, gate_cols[m])?);
        }

        let mut terms = Vec::new();
        for m in 0..v {
            for nn in (m + 1)..v {
                let g = tape.matmul_nt(units[m], units[nn])?;
                let e = tape.affine(g, k, -k);
                let e_mn = tape.exp(e);
                let e_nm = tape.transpose(e_mn);
                let pos = tape.mul(units[m], units[nn])?;
                let pos = tape.row_sum(pos);
                let pos = tape.affine(pos, k, -k);
                for (a, b, e_ab) in [(m, nn, e_mn), (nn, m, e_nm)] {
                    let cross = tape.matmul(e_ab, gate_cols[b])?;
                    let s = tape.add(within[a], cross)?;
                    let den = tape.affine(s, 1.0, -1.0);

                    let mut valid = vec![0.0; n];
                    let mut weight = vec![0.0; n];
                    let den_vals = tape.value(den);
                    for i in 0..n {
                        let g = anchor_gate.get(i, a) * anchor_gate.get(i, b);
                        if g == 0.0 {
                            continue;
                        }
                        let d = den_vals.get(i, 0);
                        if d > 0.0 && d.is_finite() {
                            valid[i] = 1.0;
                            weight[i] = -0.5 * g / n as f64;
                        } else {
                            diag.degenerate_anchors += 1;
                        }
                    }
                    let fill = tape.constant(Matrix::column_vector(
                        &valid.iter().map(|&x| 1.0 - x).collect::<Vec<_>>(),
                    ));
                    let kept = tape.scale_rows(den, &valid)?;
                    let safe = tape.add(kept, fill)?;
                    let log_den = tape.ln(safe);
                    let per_anchor = tape.sub(pos, log_den)?;
                    let weighted = tape.scale_rows(per_anchor, &weight)?;
                    terms.push(tape.sum(weighted));
                }
            }
        }
        tape.add_all(&terms)
    }

    /// Instance-level loss on the shared-head features, gated by `V`.
    pub fn instance_contrastive(
        tape: &mut Tape,
        instance: &[Var],
        view_indicator: &Matrix,
        tau_s: f64,
        diag: &mut ContrastiveDiagnostics,
    ) -> Result<Var> {
        masked_contrastive(tape, instance, view_indicator, view_indicator, tau_s, diag)
    }

    /// Label-level loss on the label-head features.
    pub fn label_contrastive(
        tape: &mut Tape,
        label: &[Var],
        gate: &Matrix,
        view_indicator: &Matrix,
        tau_l: f64,
        denominator: DenominatorGate,
        diag: &mut ContrastiveDiagnostics,
    ) -> Result<Var> {
        let den = match denominator {
            DenominatorGate::View => view_indicator,
            DenominatorGate::Label => gate,
        };
        masked_contrastive(tape, label, gate, den, tau_l, diag)
    }

    /// `-(1/(N C)) Σ W ⊙ [Y ln T + (1 - Y) ln(1 - T)]` with clamped `T`.
    pub fn classification(tape: &mut Tape, scores: Var, labels: &Matrix, label_indicator: &Matrix) -> Result<Var> {
        let shape = tape.shape(scores);
        if labels.shape() != shape || label_indicator.shape() != shape {
            return Err(DclError::shape("classification_loss", shape, labels.shape()));
        }
        let (n, c) = shape;
        let pos_w = tape.constant(labels.hadamard(label_indicator)?);
        let neg_w = tape.constant(labels.zip_map(label_indicator, "bce", |y, w| (1.0 - y) * w)?);
        let t = tape.clamp(scores, BCE_EPS, 1.0 - BCE_EPS);
        let log_t = tape.ln(t);
        let one_minus = tape.affine(t, -1.0, 1.0);
        let log_1mt = tape.ln(one_minus);
        let a = tape.mul(pos_w, log_t)?;
        let b = tape.mul(neg_w, log_1mt)?;
        let ab = tape.add(a, b)?;
        let s = tape.sum(ab);
        Ok(tape.scale(s, -1.0 / (n * c) as f64))
    }

    /// Weighted total as a taped scalar.
    pub fn total(
        tape: &mut Tape,
        reconstruction: Var,
        instance: Var,
        label: Var,
        classification: Var,
        w: &LossWeights,
    ) -> Result<Var> {
        let s = tape.scale(instance, w.alpha);
        let l = tape.scale(label, w.beta);
        let r = tape.scale(reconstruction, w.gamma);
        tape.add_all(&[classification, s, l, r])
    }
}

fn constants(tape: &mut Tape, ms: &[Matrix]) -> Vec<Var> {
    ms.iter().map(|m| tape.constant(m.clone())).collect()
}

pub fn reconstruction_loss(reconstructions: &[Matrix], inputs: &[Matrix], view_indicator: &Matrix) -> Result<f64> {
    let mut tape = Tape::new();
    let r = constants(&mut tape, reconstructions);
    let out = taped::reconstruction(&mut tape, &r, inputs, view_indicator)?;
    tape.value(out).to_scalar()
}

pub fn instance_contrastive(
    instance: &[Matrix],
    view_indicator: &Matrix,
    tau_s: f64,
) -> Result<(f64, ContrastiveDiagnostics)> {
    let mut tape = Tape::new();
    let f = constants(&mut tape, instance);
    let mut diag = ContrastiveDiagnostics::default();
    let out = taped::instance_contrastive(&mut tape, &f, view_indicator, tau_s, &mut diag)?;
    Ok((tape.value(out).to_scalar()?, diag))
}

pub fn label_contrastive(
    label: &[Matrix],
    gate: &Matrix,
    view_indicator: &Matrix,
    tau_l: f64,
    denominator: DenominatorGate,
) -> Result<(f64, ContrastiveDiagnostics)> {
    let mut tape = Tape::new();
    let f = constants(&mut tape, label);
    let mut diag = ContrastiveDiagnostics::default();
    let out = taped::label_contrastive(&mut tape, &f, gate, view_indicator, tau_l, denominator, &mut diag)?;
    Ok((tape.value(out).to_scalar()?, diag))
}

pub fn classification_loss(scores: &Matrix, labels: &Matrix, label_indicator: &Matrix) -> Result<f64> {
    let mut tape = Tape::new();
    let t = tape.constant(scores.clone());
    let out = taped::classification(&mut tape, t, labels, label_indicator)?;
    tape.value(out).to_scalar()
}

/// Weighted total of precomputed components.
pub fn total_loss(
    reconstruction: f64,
    instance: f64,
    label: f64,
    classification: f64,
    w: &LossWeights,
) -> Result<LossBreakdown> {
    w.validate()?;
    Ok(LossBreakdown::compose(
        reconstruction,
        instance,
        label,
        classification,
        w,
    ))
}
