//! The forward pass, both as taped building blocks (used by training) and as
//! plain matrix functions.

use super::params::{ModelParams, ParamVars};
use crate::data::{apply_input_mask, MaskBank, MultiViewDataset};
use crate::error::{DclError, Result};
use crate::numerics::{Matrix, Tape, Var};

/// Taped versions of every network component.
pub mod taped {
    use super::*;

    fn check_views(tape: &Tape, pv: &ParamVars, inputs: &[Var]) -> Result<()> {
        if inputs.len() != pv.shared.len() {
            return Err(DclError::shape("encode", (inputs.len(), 0), (pv.shared.len(), 0)));
        }
        for (m, (&x, enc)) in inputs.iter().zip(&pv.shared).enumerate() {
            let want = tape.shape(enc.w1).0;
            if tape.shape(x).1 != want {
                return Err(DclError::Validation {
                    source_name: format!("view {m}"),
                    message: format!("{} features, encoder expects {want}", tape.shape(x).1),
                });
            }
        }
        Ok(())
    }

    /// Shared and private low-level features for every view.
    pub fn encode(tape: &mut Tape, pv: &ParamVars, inputs: &[Var]) -> Result<(Vec<Var>, Vec<Var>)> {
        check_views(tape, pv, inputs)?;
        let mut shared = Vec::with_capacity(inputs.len());
        let mut private = Vec::with_capacity(inputs.len());
        for (m, &x) in inputs.iter().enumerate() {
            shared.push(pv.shared[m].forward(tape, x)?);
            private.push(pv.private[m].forward(tape, x)?);
        }
        Ok((shared, private))
    }

    /// Reconstruction of each view from its private features.
    pub fn decode(tape: &mut Tape, pv: &ParamVars, private: &[Var]) -> Result<Vec<Var>> {
        private
            .iter()
            .zip(&pv.decoders)
            .map(|(&p, dec)| dec.forward(tape, p))
            .collect()
    }

    /// Instance-level features from the shared head.
    pub fn project_instances(tape: &mut Tape, pv: &ParamVars, shared: &[Var]) -> Result<Vec<Var>> {
        shared.iter().map(|&s| pv.instance_head.forward(tape, s)).collect()
    }

    /// Label-space features, squashed into (0, 1).
    pub fn project_labels(tape: &mut Tape, pv: &ParamVars, shared: &[Var]) -> Result<Vec<Var>> {
        shared
            .iter()
            .map(|&s| {
                let logits = pv.label_head.forward(tape, s)?;
                Ok(tape.sigmoid(logits))
            })
            .collect()
    }

    /// Availability-weighted mean over views of each sample's features.
    pub fn fuse(tape: &mut Tape, feats: &[Var], view_indicator: &Matrix) -> Result<Var> {
        let n = view_indicator.rows();
        if feats.len() != view_indicator.cols() {
            return Err(DclError::shape("fuse", (n, feats.len()), view_indicator.shape()));
        }
        let counts: Vec<f64> = (0..n).map(|i| view_indicator.row(i).iter().sum()).collect();
        if let Some(i) = counts.iter().position(|&c| c == 0.0) {
            return Err(DclError::Contract(format!("sample {i} has no available view to fuse")));
        }
        let mut terms = Vec::with_capacity(feats.len());
        for (m, &f) in feats.iter().enumerate() {
            let w: Vec<f64> = (0..n).map(|i| view_indicator.get(i, m) / counts[i]).collect();
            terms.push(tape.scale_rows(f, &w)?);
        }
        tape.add_all(&terms)
    }

    /// `Z = sigmoid(P̄) ⊙ S̄`.
    pub fn interact(tape: &mut Tape, fused_shared: Var, fused_private: Var) -> Result<Var> {
        let gate = tape.sigmoid(fused_private);
        tape.mul(gate, fused_shared)
    }

    /// `T = sigmoid(Z ω + λ)` with a per-class bias row.
    pub fn classify(tape: &mut Tape, pv: &ParamVars, fused: Var) -> Result<Var> {
        let logits = tape.matmul(fused, pv.classifier_weight)?;
        let logits = tape.add_row(logits, pv.classifier_bias)?;
        Ok(tape.sigmoid(logits))
    }

    /// Every intermediate of one forward pass.
    #[derive(Clone, Debug)]
    pub struct ForwardVars {
        pub inputs: Vec<Var>,
        pub shared: Vec<Var>,
        pub private: Vec<Var>,
        pub reconstructions: Vec<Var>,
        pub instance: Vec<Var>,
        pub label: Vec<Var>,
        pub fused_shared: Var,
        pub fused_private: Var,
        pub fused: Var,
        pub scores: Var,
    }

    /// Full forward pass from (already masked) inputs.
    pub fn forward(tape: &mut Tape, pv: &ParamVars, inputs: &[Matrix], view_indicator: &Matrix) -> Result<ForwardVars> {
        let inputs: Vec<Var> = inputs.iter().map(|x| tape.constant(x.clone())).collect();
        let (shared, private) = encode(tape, pv, &inputs)?;
        let reconstructions = decode(tape, pv, &private)?;
        let instance = project_instances(tape, pv, &shared)?;
        let label = project_labels(tape, pv, &shared)?;
        let fused_shared = fuse(tape, &shared, view_indicator)?;
        let fused_private = fuse(tape, &private, view_indicator)?;
        let fused = interact(tape, fused_shared, fused_private)?;
        let scores = classify(tape, pv, fused)?;
        Ok(ForwardVars {
            inputs,
            shared,
            private,
            reconstructions,
            instance,
            label,
            fused_shared,
            fused_private,
            fused,
            scores,
        })
    }
}

/// Intermediate activations of one forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardCache {
    /// Network inputs `X'` (masked during training).
    pub inputs: Vec<Matrix>,
    pub shared: Vec<Matrix>,
    pub private: Vec<Matrix>,
    pub reconstructions: Vec<Matrix>,
    pub instance: Vec<Matrix>,
    pub label: Vec<Matrix>,
    pub fused_shared: Matrix,
    pub fused_private: Matrix,
    pub fused: Matrix,
    pub scores: Matrix,
}

impl ForwardCache {
    pub fn from_tape(tape: &Tape, f: &taped::ForwardVars) -> Self {
        let vals = |vs: &[Var]| vs.iter().map(|&v| tape.value(v).clone()).collect::<Vec<_>>();
        ForwardCache {
            inputs: vals(&f.inputs),
            shared: vals(&f.shared),
            private: vals(&f.private),
            reconstructions: vals(&f.reconstructions),
            instance: vals(&f.instance),
            label: vals(&f.label),
            fused_shared: tape.value(f.fused_shared).clone(),
            fused_private: tape.value(f.fused_private).clone(),
            fused: tape.value(f.fused).clone(),
            scores: tape.value(f.scores).clone(),
        }
    }
}

/// Runs the whole network. Input masks are applied only when `training` is
/// set and a mask bank is given; evaluation sees the unmasked views.
pub fn forward_all(
    params: &ModelParams,
    dataset: &MultiViewDataset,
    masks: Option<&MaskBank>,
    training: bool,
) -> Result<ForwardCache> {
    check_compatible(params, dataset)?;
    let inputs = match masks {
        Some(bank) if training => apply_input_mask(dataset, bank)?,
        _ => dataset.views().to_vec(),
    };
    let mut tape = Tape::new();
    let pv = params.register(&mut tape, false);
    let f = taped::forward(&mut tape, &pv, &inputs, dataset.view_indicator())?;
    Ok(ForwardCache::from_tape(&tape, &f))
}

/// Checks that a dataset's view widths and label count match the model.
pub fn check_compatible(params: &ModelParams, dataset: &MultiViewDataset) -> Result<()> {
    let cfg = &params.config;
    if dataset.view_dims() != cfg.view_dims {
        return Err(DclError::validation(
            "dataset",
            format!(
                "view widths {:?} do not match the model's {:?}",
                dataset.view_dims(),
                cfg.view_dims
            ),
        ));
    }
    if dataset.n_labels() != cfg.n_labels {
        return Err(DclError::validation(
            "dataset",
            format!("{} labels, model predicts {}", dataset.n_labels(), cfg.n_labels),
        ));
    }
    Ok(())
}

fn with_constants<T>(params: &ModelParams, f: impl FnOnce(&mut Tape, &ParamVars) -> Result<T>) -> Result<T> {
    let mut tape = Tape::new();
    let pv = params.register(&mut tape, false);
    f(&mut tape, &pv)
}

fn values(tape: &Tape, vs: &[Var]) -> Vec<Matrix> {
    vs.iter().map(|&v| tape.value(v).clone()).collect()
}

impl ModelParams {
    pub fn encode(&self, inputs: &[Matrix]) -> Result<(Vec<Matrix>, Vec<Matrix>)> {
        with_constants(self, |tape, pv| {
            let xs: Vec<Var> = inputs.iter().map(|x| tape.constant(x.clone())).collect();
            let (s, p) = taped::encode(tape, pv, &xs)?;
            Ok((values(tape, &s), values(tape, &p)))
        })
    }

    pub fn decode(&self, private: &[Matrix]) -> Result<Vec<Matrix>> {
        with_constants(self, |tape, pv| {
            for (m, p) in private.iter().enumerate() {
                if p.cols() != self.config.embed_dim {
                    return Err(DclError::shape("decode", p.shape(), (m, self.config.embed_dim)));
                }
            }
            let ps: Vec<Var> = private.iter().map(|x| tape.constant(x.clone())).collect();
            let out = taped::decode(tape, pv, &ps)?;
            Ok(values(tape, &out))
        })
    }

    pub fn project_instances(&self, shared: &[Matrix]) -> Result<Vec<Matrix>> {
        with_constants(self, |tape, pv| {
            let ss: Vec<Var> = shared.iter().map(|x| tape.constant(x.clone())).collect();
            let out = taped::project_instances(tape, pv, &ss)?;
            Ok(values(tape, &out))
        })
    }

    pub fn project_labels(&self, shared: &[Matrix]) -> Result<Vec<Matrix>> {
        with_constants(self, |tape, pv| {
            let ss: Vec<Var> = shared.iter().map(|x| tape.constant(x.clone())).collect();
            let out = taped::project_labels(tape, pv, &ss)?;
            Ok(values(tape, &out))
        })
    }

    pub fn classify(&self, fused: &Matrix) -> Result<Matrix> {
        with_constants(self, |tape, pv| {
            let z = tape.constant(fused.clone());
            let t = taped::classify(tape, pv, z)?;
            Ok(tape.value(t).clone())
        })
    }
}

/// `(S̄, P̄)` from per-view shared and private features.
pub fn fuse(shared: &[Matrix], private: &[Matrix], view_indicator: &Matrix) -> Result<(Matrix, Matrix)> {
    let mut tape = Tape::new();
    let s: Vec<Var> = shared.iter().map(|x| tape.constant(x.clone())).collect();
    let p: Vec<Var> = private.iter().map(|x| tape.constant(x.clone())).collect();
    let fs = taped::fuse(&mut tape, &s, view_indicator)?;
    let fp = taped::fuse(&mut tape, &p, view_indicator)?;
    Ok((tape.value(fs).clone(), tape.value(fp).clone()))
}

/// `Z_ij = sigmoid(P̄_ij) · S̄_ij`.
pub fn interact(fused_shared: &Matrix, fused_private: &Matrix) -> Result<Matrix> {
    let mut tape = Tape::new();
    let s = tape.constant(fused_shared.clone());
    let p = tape.constant(fused_private.clone());
    let z = taped::interact(&mut tape, s, p)?;
    Ok(tape.value(z).clone())
}
