//! Full-batch (or optionally mini-batch) training with Adam, the per-epoch
//! log, and the channel-similarity diagnostic.

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{apply_input_mask, MaskBank, MultiViewDataset};
use crate::error::{DclError, Result};
use crate::losses::{self, label_gate, ContrastiveDiagnostics, LossBreakdown, LossWeights};
use crate::metrics::{self, MetricsReport};
use crate::model::{check_compatible, forward_all, taped, ModelConfig, ModelParams, ParamVars};
use crate::numerics::{Exec, Matrix, Tape, Var};
use crate::rng::{self, Rng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    #[serde(flatten)]
    pub loss: LossWeights,
    pub mask_ratio: f64,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    /// 0 trains on the full batch.
    pub batch_size: usize,
    pub seed: u64,
    /// Draw the input masks once instead of every epoch.
    pub fixed_mask: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            loss: LossWeights::default(),
            mask_ratio: 0.3,
            embed_dim: 64,
            hidden_dim: 128,
            batch_size: 0,
            seed: 0,
            fixed_mask: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(DclError::Config("epochs must be >= 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(DclError::Config(format!("learning rate must be > 0, got {}", self.lr)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(DclError::Config(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if self.eps.is_nan() || self.eps <= 0.0 {
            return Err(DclError::Config(format!("eps must be > 0, got {}", self.eps)));
        }
        if !(0.0..=1.0).contains(&self.mask_ratio) {
            return Err(DclError::Config(format!(
                "mask ratio must lie in [0, 1], got {}",
                self.mask_ratio
            )));
        }
        if self.embed_dim == 0 || self.hidden_dim == 0 {
            return Err(DclError::Config("embed and hidden widths must be >= 1".into()));
        }
        self.loss.validate()
    }

    pub fn model_config(&self, view_dims: Vec<usize>, n_labels: usize) -> ModelConfig {
        ModelConfig {
            view_dims,
            embed_dim: self.embed_dim,
            hidden_dim: self.hidden_dim,
            n_labels,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }
}

pub fn init_params(config: &TrainConfig, view_dims: &[usize], n_labels: usize) -> Result<ModelParams> {
    config.validate()?;
    ModelParams::init(&config.model_config(view_dims.to_vec(), n_labels), config.seed)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

/// First and second moment estimates, one per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Matrix>,
    pub v: Vec<Matrix>,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let zeros: Vec<Matrix> = params
            .tensors()
            .iter()
            .map(|t| Matrix::zeros(t.rows(), t.cols()))
            .collect();
        AdamState {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(params: &mut ModelParams, grads: &[Matrix], state: &mut AdamState, opt: &AdamConfig) -> Result<()> {
    let mut tensors = params.tensors_mut();
    if grads.len() != tensors.len() || state.m.len() != tensors.len() || state.v.len() != tensors.len() {
        return Err(DclError::Contract(format!(
            "adam: {} tensors, {} gradients, {} moments",
            tensors.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (k, t) in tensors.iter().enumerate() {
        for other in [&grads[k], &state.m[k], &state.v[k]] {
            if other.shape() != t.shape() {
                return Err(DclError::Contract(format!(
                    "adam: tensor {k} is {:?}, got {:?}",
                    t.shape(),
                    other.shape()
                )));
            }
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - opt.beta1.powi(t);
    let c2 = 1.0 - opt.beta2.powi(t);
    for (k, p) in tensors.iter_mut().enumerate() {
        let g = grads[k].as_slice();
        let m = state.m[k].as_mut_slice();
        let v = state.v[k].as_mut_slice();
        for (idx, w) in p.as_mut_slice().iter_mut().enumerate() {
            m[idx] = opt.beta1 * m[idx] + (1.0 - opt.beta1) * g[idx];
            v[idx] = opt.beta2 * v[idx] + (1.0 - opt.beta2) * g[idx] * g[idx];
            let m_hat = m[idx] / c1;
            let v_hat = v[idx] / c2;
            *w -= opt.lr * m_hat / (v_hat.sqrt() + opt.eps);
        }
    }
    Ok(())
}

/// Tape handles of every loss term.
#[derive(Clone, Debug)]
pub struct ObjectiveVars {
    pub forward: taped::ForwardVars,
    pub reconstruction: Var,
    pub instance: Var,
    pub label: Var,
    pub classification: Var,
    pub total: Var,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ObjectiveDiagnostics {
    pub instance: ContrastiveDiagnostics,
    pub label: ContrastiveDiagnostics,
}

/// Records the forward pass and all four losses. `inputs` are the (masked)
/// network inputs; indicators and labels come from `dataset`.
pub fn objective(
    tape: &mut Tape,
    pv: &ParamVars,
    inputs: &[Matrix],
    dataset: &MultiViewDataset,
    weights: &LossWeights,
    diag: &mut ObjectiveDiagnostics,
) -> Result<ObjectiveVars> {
    let v_ind = dataset.view_indicator();
    let forward = taped::forward(tape, pv, inputs, v_ind)?;
    let reconstruction = losses::taped::reconstruction(tape, &forward.reconstructions, inputs, v_ind)?;
    let instance =
        losses::taped::instance_contrastive(tape, &forward.instance, v_ind, weights.tau_s, &mut diag.instance)?;
    let gate = label_gate(v_ind, dataset.label_indicator());
    let label = losses::taped::label_contrastive(
        tape,
        &forward.label,
        &gate,
        v_ind,
        weights.tau_l,
        weights.label_denominator,
        &mut diag.label,
    )?;
    let classification =
        losses::taped::classification(tape, forward.scores, dataset.labels(), dataset.label_indicator())?;
    let total = losses::taped::total(tape, reconstruction, instance, label, classification, weights)?;
    Ok(ObjectiveVars {
        forward,
        reconstruction,
        instance,
        label,
        classification,
        total,
    })
}

fn breakdown(tape: &Tape, o: &ObjectiveVars, w: &LossWeights) -> Result<LossBreakdown> {
    let mut b = LossBreakdown::compose(
        tape.value(o.reconstruction).to_scalar()?,
        tape.value(o.instance).to_scalar()?,
        tape.value(o.label).to_scalar()?,
        tape.value(o.classification).to_scalar()?,
        w,
    );
    // keep the taped total, which is what gets differentiated
    b.total = tape.value(o.total).to_scalar()?;
    Ok(b)
}

/// Loss components and gradients (canonical tensor order) for one batch.
pub fn loss_and_gradients(
    params: &ModelParams,
    dataset: &MultiViewDataset,
    masks: Option<&MaskBank>,
    weights: &LossWeights,
) -> Result<(LossBreakdown, Vec<Matrix>, ObjectiveDiagnostics)> {
    check_compatible(params, dataset)?;
    let inputs = match masks {
        Some(bank) => apply_input_mask(dataset, bank)?,
        None => dataset.views().to_vec(),
    };
    let mut tape = Tape::with_exec(Exec::auto());
    let pv = params.register(&mut tape, true);
    let mut diag = ObjectiveDiagnostics::default();
    let obj = objective(&mut tape, &pv, &inputs, dataset, weights, &mut diag)?;
    let losses = breakdown(&tape, &obj, weights)?;
    if let Some(name) = losses.non_finite_component() {
        return Err(DclError::NonFinite { component: name.into() });
    }
    let grads = tape.backward(obj.total)?;
    let grads: Vec<Matrix> = pv.all().iter().map(|&v| grads.get(v)).collect();
    if let Some(k) = grads.iter().position(|g| !g.is_finite()) {
        return Err(DclError::NonFinite {
            component: format!("gradient of {}", ModelParams::names(&params.config)[k]),
        });
    }
    Ok((losses, grads, diag))
}

/// Scores on a dataset without input masking.
pub fn predict(params: &ModelParams, dataset: &MultiViewDataset) -> Result<Matrix> {
    Ok(forward_all(params, dataset, None, false)?.scores)
}

pub fn evaluate(params: &ModelParams, dataset: &MultiViewDataset) -> Result<MetricsReport> {
    metrics::evaluate_all(&predict(params, dataset)?, dataset.labels())
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub losses: LossBreakdown,
    pub degenerate_anchors: usize,
    pub wall_ms: f64,
    pub metrics: Option<MetricsReport>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
}

const LOG_HEADER: &str = "epoch,L_r,L_s,L_l,L_c,L_all";
const METRIC_HEADER: &str = "ap,one_minus_hl,one_minus_rl,auc,oe,cov";

impl TrainLog {
    /// Loss (and metric) columns only; wall times live in [`TrainLog::timing_csv`]
    /// so that this file is identical across same-seed runs.
    pub fn to_csv(&self) -> String {
        let with_metrics = self.records.iter().any(|r| r.metrics.is_some());
        let mut s = String::from(LOG_HEADER);
        if with_metrics {
            s.push(',');
            s.push_str(METRIC_HEADER);
        }
        s.push('\n');
        for r in &self.records {
            let l = &r.losses;
            let _ = write!(
                s,
                "{},{},{},{},{},{}",
                r.epoch, l.reconstruction, l.instance, l.label, l.classification, l.total
            );
            if with_metrics {
                match &r.metrics {
                    Some(m) => {
                        let _ = write!(
                            s,
                            ",{},{},{},{},{},{}",
                            m.ap, m.one_minus_hl, m.one_minus_rl, m.auc, m.oe, m.cov
                        );
                    }
                    None => s.push_str(",,,,,,"),
                }
            }
            s.push('\n');
        }
        s
    }

    pub fn timing_csv(&self) -> String {
        let mut s = String::from("epoch,wall_ms\n");
        for r in &self.records {
            let _ = writeln!(s, "{},{:.3}", r.epoch, r.wall_ms);
        }
        s
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }
}

/// Extra outputs requested from a training run.
#[derive(Clone, Debug, Default)]
pub struct TrainOptions<'a> {
    /// Evaluated after every epoch when present.
    pub eval: Option<&'a MultiViewDataset>,
    /// Epochs (0 = initialization) whose parameters are kept.
    pub snapshot_epochs: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub log: TrainLog,
    pub snapshots: Vec<(usize, ModelParams)>,
}

pub fn train(dataset: &MultiViewDataset, config: &TrainConfig) -> Result<(ModelParams, TrainLog)> {
    let out = train_with(dataset, config, &TrainOptions::default())?;
    Ok((out.params, out.log))
}

fn select_masks(bank: &MaskBank, rows: &[usize]) -> MaskBank {
    MaskBank::from_masks(bank.masks().iter().map(|m| m.select_rows(rows)).collect())
}

pub fn train_with(dataset: &MultiViewDataset, config: &TrainConfig, opts: &TrainOptions) -> Result<TrainOutcome> {
    config.validate()?;
    let n = dataset.n_samples();
    if n == 0 {
        return Err(DclError::Config("cannot train on an empty dataset".into()));
    }
    let dims = dataset.view_dims();
    let mut params = init_params(config, &dims, dataset.n_labels())?;
    let mut state = AdamState::new(&params);
    let adam = config.adam();
    let mut mask_rng: Rng = rng::stream(config.seed, rng::tag::MASK);
    let mut shuffle_rng: Rng = rng::stream(config.seed, rng::tag::SHUFFLE);
    let fixed = if config.fixed_mask {
        Some(MaskBank::generate(n, &dims, config.mask_ratio, &mut mask_rng)?)
    } else {
        None
    };
    let batch = if config.batch_size == 0 || config.batch_size >= n {
        n
    } else {
        config.batch_size
    };

    let mut snapshots = Vec::new();
    if opts.snapshot_epochs.contains(&0) {
        snapshots.push((0, params.clone()));
    }
    let mut log = TrainLog::default();
    for epoch in 1..=config.epochs {
        let started = Instant::now();
        let bank = match &fixed {
            Some(b) => b.clone(),
            None => MaskBank::generate(n, &dims, config.mask_ratio, &mut mask_rng)?,
        };
        let mut order: Vec<usize> = (0..n).collect();
        if batch < n {
            order.shuffle(&mut shuffle_rng);
        }
        let mut sums = [0.0; 5];
        let mut degenerate = 0;
        for rows in order.chunks(batch) {
            let (losses, grads, diag) = if batch == n {
                loss_and_gradients(&params, dataset, Some(&bank), &config.loss)?
            } else {
                let mut idx = rows.to_vec();
                idx.sort_unstable();
                let part = dataset.select_rows(&idx);
                loss_and_gradients(&params, &part, Some(&select_masks(&bank, &idx)), &config.loss)?
            };
            let share = rows.len() as f64 / n as f64;
            for (acc, x) in sums.iter_mut().zip([
                losses.reconstruction,
                losses.instance,
                losses.label,
                losses.classification,
                losses.total,
            ]) {
                *acc += share * x;
            }
            degenerate += diag.instance.degenerate_anchors + diag.label.degenerate_anchors;
            adam_step(&mut params, &grads, &mut state, &adam)?;
        }
        let mut losses = LossBreakdown::compose(sums[0], sums[1], sums[2], sums[3], &config.loss);
        losses.total = sums[4];
        let metrics = match opts.eval {
            Some(ds) => Some(evaluate(&params, ds)?.with_run(config.seed, epoch)),
            None => None,
        };
        let wall_ms = started.elapsed().as_secs_f64() * 1e3;
        log::debug!(
            "epoch {epoch}: L_all={:.6} L_c={:.6} L_s={:.6} L_l={:.6} L_r={:.6}",
            losses.total,
            losses.classification,
            losses.instance,
            losses.label,
            losses.reconstruction
        );
        if degenerate > 0 {
            log::debug!("epoch {epoch}: {degenerate} degenerate contrastive anchors skipped");
        }
        log.records.push(EpochRecord {
            epoch,
            losses,
            degenerate_anchors: degenerate,
            wall_ms,
            metrics,
        });
        if opts.snapshot_epochs.contains(&epoch) {
            snapshots.push((epoch, params.clone()));
        }
    }
    Ok(TrainOutcome { params, log, snapshots })
}

/// Pairwise similarity of per-channel mean features, channels ordered
/// `S_1..S_v, P_1..P_v`. Means run over samples where the view is present.
pub fn channel_similarity(params: &ModelParams, dataset: &MultiViewDataset) -> Result<Matrix> {
    check_compatible(params, dataset)?;
    let (shared, private) = params.encode(dataset.views())?;
    let v_ind = dataset.view_indicator();
    let d = params.config.embed_dim;
    let mean = |feats: &Matrix, m: usize| -> Vec<f64> {
        let mut acc = vec![0.0; d];
        let mut count = 0.0;
        for i in 0..feats.rows() {
            if v_ind.get(i, m) != 0.0 {
                for (a, x) in acc.iter_mut().zip(feats.row(i)) {
                    *a += x;
                }
                count += 1.0;
            }
        }
        if count > 0.0 {
            acc.iter_mut().for_each(|a| *a /= count);
        }
        acc
    };
    let v = dataset.n_views();
    let channels: Vec<Vec<f64>> = (0..v)
        .map(|m| mean(&shared[m], m))
        .chain((0..v).map(|m| mean(&private[m], m)))
        .collect();
    let k = channels.len();
    let mut out = Matrix::identity(k);
    for a in 0..k {
        for b in (a + 1)..k {
            let s = losses::cosine_sim01(&channels[a], &channels[b]);
            out.set(a, b, s);
            out.set(b, a, s);
        }
    }
    Ok(out)
}

/// Mean off-diagonal similarity inside the shared block and the mean over
/// the shared-vs-private cross block.
pub fn similarity_summary(sim: &Matrix) -> (f64, f64) {
    let v = sim.rows() / 2;
    let (mut within, mut nw) = (0.0, 0usize);
    let (mut cross, mut nc) = (0.0, 0usize);
    for a in 0..v {
        for b in 0..v {
            if a != b {
                within += sim.get(a, b);
                nw += 1;
            }
            cross += sim.get(a, v + b);
            nc += 1;
        }
    }
    let avg = |s: f64, c: usize| if c == 0 { 0.0 } else { s / c as f64 };
    (avg(within, nw), avg(cross, nc))
}
