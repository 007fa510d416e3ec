use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{DclError, Result};
use crate::numerics::{Matrix, Tape, Var};
use crate::rng::{self, Rng};

/// Architecture: every network is a two-layer ReLU MLP of hidden width
/// `hidden_dim`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub view_dims: Vec<usize>,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub n_labels: usize,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.view_dims.is_empty() {
            return Err(DclError::Config("model needs at least one view".into()));
        }
        if self.view_dims.contains(&0) || self.embed_dim == 0 || self.hidden_dim == 0 || self.n_labels == 0 {
            return Err(DclError::Config(format!("all model dimensions must be >= 1: {self:?}")));
        }
        Ok(())
    }

    pub fn n_views(&self) -> usize {
        self.view_dims.len()
    }
}

/// `relu(x W1 + b1) W2 + b2`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
}

impl Mlp {
    /// Uniform in ±1/sqrt(fan_in) for weights and biases of each layer.
    pub fn init(input: usize, hidden: usize, output: usize, rng: &mut Rng) -> Self {
        let mut uniform = |rows: usize, cols: usize, fan_in: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            Matrix::from_fn(rows, cols, |_, _| rng.random_range(-bound..bound))
        };
        Mlp {
            w1: uniform(input, hidden, input),
            b1: uniform(1, hidden, input),
            w2: uniform(hidden, output, hidden),
            b2: uniform(1, output, hidden),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.w2.cols()
    }

    fn tensors(&self) -> [&Matrix; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    fn tensors_mut(&mut self) -> [&mut Matrix; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    fn shapes(input: usize, hidden: usize, output: usize) -> [(usize, usize); 4] {
        [(input, hidden), (1, hidden), (hidden, output), (1, output)]
    }
}

/// All learnable weights of the network.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub shared_encoders: Vec<Mlp>,
    pub private_encoders: Vec<Mlp>,
    pub decoders: Vec<Mlp>,
    /// Shared-feature head producing instance-level features (one copy for all views).
    pub instance_head: Mlp,
    /// Label head producing per-view label-space features (one copy for all views).
    pub label_head: Mlp,
    pub classifier_weight: Matrix,
    pub classifier_bias: Matrix,
}

impl ModelParams {
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = rng::stream(seed, rng::tag::INIT);
        let (d, h, c) = (config.embed_dim, config.hidden_dim, config.n_labels);
        let mut shared_encoders = Vec::new();
        let mut private_encoders = Vec::new();
        let mut decoders = Vec::new();
        for &dm in &config.view_dims {
            shared_encoders.push(Mlp::init(dm, h, d, &mut rng));
            private_encoders.push(Mlp::init(dm, h, d, &mut rng));
            decoders.push(Mlp::init(d, h, dm, &mut rng));
        }
        let instance_head = Mlp::init(d, h, d, &mut rng);
        let label_head = Mlp::init(d, h, c, &mut rng);
        let bound = 1.0 / (d as f64).sqrt();
        let classifier_weight = Matrix::from_fn(d, c, |_, _| rng.random_range(-bound..bound));
        let classifier_bias = Matrix::from_fn(1, c, |_, _| rng.random_range(-bound..bound));
        Ok(ModelParams {
            config: config.clone(),
            shared_encoders,
            private_encoders,
            decoders,
            instance_head,
            label_head,
            classifier_weight,
            classifier_bias,
        })
    }

    /// Parameter names in canonical order.
    pub fn names(config: &ModelConfig) -> Vec<String> {
        let mlp = |prefix: String| ["w1", "b1", "w2", "b2"].map(|s| format!("{prefix}.{s}"));
        let mut out = Vec::new();
        for m in 0..config.n_views() {
            out.extend(mlp(format!("shared_encoder.{m}")));
            out.extend(mlp(format!("private_encoder.{m}")));
            out.extend(mlp(format!("decoder.{m}")));
        }
        out.extend(mlp("instance_head".into()));
        out.extend(mlp("label_head".into()));
        out.push("classifier.weight".into());
        out.push("classifier.bias".into());
        out
    }

    /// Shapes in canonical order.
    pub fn shapes(config: &ModelConfig) -> Vec<(usize, usize)> {
        let (d, h, c) = (config.embed_dim, config.hidden_dim, config.n_labels);
        let mut out = Vec::new();
        for &dm in &config.view_dims {
            out.extend(Mlp::shapes(dm, h, d));
            out.extend(Mlp::shapes(dm, h, d));
            out.extend(Mlp::shapes(d, h, dm));
        }
        out.extend(Mlp::shapes(d, h, d));
        out.extend(Mlp::shapes(d, h, c));
        out.push((d, c));
        out.push((1, c));
        out
    }

    /// Every tensor in canonical order.
    pub fn tensors(&self) -> Vec<&Matrix> {
        let mut out = Vec::new();
        for m in 0..self.config.n_views() {
            out.extend(self.shared_encoders[m].tensors());
            out.extend(self.private_encoders[m].tensors());
            out.extend(self.decoders[m].tensors());
        }
        out.extend(self.instance_head.tensors());
        out.extend(self.label_head.tensors());
        out.push(&self.classifier_weight);
        out.push(&self.classifier_bias);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = Vec::new();
        for ((s, p), dec) in self
            .shared_encoders
            .iter_mut()
            .zip(self.private_encoders.iter_mut())
            .zip(self.decoders.iter_mut())
        {
            out.extend(s.tensors_mut());
            out.extend(p.tensors_mut());
            out.extend(dec.tensors_mut());
        }
        out.extend(self.instance_head.tensors_mut());
        out.extend(self.label_head.tensors_mut());
        out.push(&mut self.classifier_weight);
        out.push(&mut self.classifier_bias);
        out
    }

    pub fn to_vec(&self) -> Vec<Matrix> {
        self.tensors().into_iter().cloned().collect()
    }

    /// Rebuilds parameters from tensors in canonical order, checking shapes.
    pub fn from_tensors(config: &ModelConfig, tensors: Vec<Matrix>) -> Result<Self> {
        config.validate()?;
        let shapes = Self::shapes(config);
        if shapes.len() != tensors.len() {
            return Err(DclError::validation(
                "parameters",
                format!("expected {} tensors, got {}", shapes.len(), tensors.len()),
            ));
        }
        let names = Self::names(config);
        for ((t, s), name) in tensors.iter().zip(&shapes).zip(&names) {
            if t.shape() != *s {
                return Err(DclError::validation(
                    name.clone(),
                    format!("shape {:?} does not match architecture shape {:?}", t.shape(), s),
                ));
            }
        }
        let mut it = tensors.into_iter();
        let mut mlp = || Mlp {
            w1: it.next().unwrap(),
            b1: it.next().unwrap(),
            w2: it.next().unwrap(),
            b2: it.next().unwrap(),
        };
        let mut shared_encoders = Vec::new();
        let mut private_encoders = Vec::new();
        let mut decoders = Vec::new();
        for _ in 0..config.n_views() {
            shared_encoders.push(mlp());
            private_encoders.push(mlp());
            decoders.push(mlp());
        }
        let instance_head = mlp();
        let label_head = mlp();
        let classifier_weight = it.next().unwrap();
        let classifier_bias = it.next().unwrap();
        Ok(ModelParams {
            config: config.clone(),
            shared_encoders,
            private_encoders,
            decoders,
            instance_head,
            label_head,
            classifier_weight,
            classifier_bias,
        })
    }

    pub fn n_scalars(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Puts every tensor on `tape`, differentiable when `trainable`.
    pub fn register(&self, tape: &mut Tape, trainable: bool) -> ParamVars {
        let mut put = |m: &Matrix| {
            if trainable {
                tape.param(m.clone())
            } else {
                tape.constant(m.clone())
            }
        };
        let mut mlp = |p: &Mlp| MlpVars {
            w1: put(&p.w1),
            b1: put(&p.b1),
            w2: put(&p.w2),
            b2: put(&p.b2),
        };
        let mut shared = Vec::new();
        let mut private = Vec::new();
        let mut decoders = Vec::new();
        for m in 0..self.config.n_views() {
            shared.push(mlp(&self.shared_encoders[m]));
            private.push(mlp(&self.private_encoders[m]));
            decoders.push(mlp(&self.decoders[m]));
        }
        let instance_head = mlp(&self.instance_head);
        let label_head = mlp(&self.label_head);
        ParamVars {
            shared,
            private,
            decoders,
            instance_head,
            label_head,
            classifier_weight: put(&self.classifier_weight),
            classifier_bias: put(&self.classifier_bias),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct MlpVars {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

impl MlpVars {
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let a = tape.matmul(x, self.w1)?;
        let a = tape.add_row(a, self.b1)?;
        let a = tape.relu(a);
        let b = tape.matmul(a, self.w2)?;
        tape.add_row(b, self.b2)
    }
}

/// Tape handles for every parameter tensor.
#[derive(Clone, Debug)]
pub struct ParamVars {
    pub shared: Vec<MlpVars>,
    pub private: Vec<MlpVars>,
    pub decoders: Vec<MlpVars>,
    pub instance_head: MlpVars,
    pub label_head: MlpVars,
    pub classifier_weight: Var,
    pub classifier_bias: Var,
}

impl ParamVars {
    /// Handles in canonical order.
    pub fn all(&self) -> Vec<Var> {
        let mlp = |p: &MlpVars| [p.w1, p.b1, p.w2, p.b2];
        let mut out = Vec::new();
        for m in 0..self.shared.len() {
            out.extend(mlp(&self.shared[m]));
            out.extend(mlp(&self.private[m]));
            out.extend(mlp(&self.decoders[m]));
        }
        out.extend(mlp(&self.instance_head));
        out.extend(mlp(&self.label_head));
        out.push(self.classifier_weight);
        out.push(self.classifier_bias);
        out
    }
}
