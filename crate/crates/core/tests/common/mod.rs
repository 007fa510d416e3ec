//! Naive-loop reference implementations and random instance generators
//! shared by the integration tests and the acceptance harness.
#![allow(dead_code)]

use dcl::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gauss(r: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(r)
}

pub fn random_matrix(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| gauss(r))
}

pub fn random_binary(r: &mut ChaCha8Rng, rows: usize, cols: usize, p_one: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| if r.random_bool(p_one) { 1.0 } else { 0.0 })
}

/// Binary matrix with at least one 1 per row.
pub fn random_availability(r: &mut ChaCha8Rng, rows: usize, cols: usize, p_one: f64) -> Matrix {
    let mut m = random_binary(r, rows, cols, p_one);
    for i in 0..rows {
        if m.row(i).iter().all(|&x| x == 0.0) {
            let j = r.random_range(0..cols);
            m.set(i, j, 1.0);
        }
    }
    m
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

// ---------------------------------------------------------------- losses

pub fn oracle_cos01(a: &[f64], b: &[f64]) -> f64 {
    let mut ab = 0.0;
    let mut aa = 0.0;
    let mut bb = 0.0;
    for k in 0..a.len() {
        ab += a[k] * b[k];
        aa += a[k] * a[k];
        bb += b[k] * b[k];
    }
    if aa.sqrt() < 1e-12 || bb.sqrt() < 1e-12 {
        return 0.5;
    }
    (ab / (aa.sqrt() * bb.sqrt()) + 1.0) / 2.0
}

pub fn oracle_reconstruction(xbar: &[Matrix], x: &[Matrix], v: &Matrix) -> f64 {
    let views = xbar.len();
    let mut total = 0.0;
    for m in 0..views {
        let d = x[m].cols() as f64;
        for i in 0..x[m].rows() {
            let mut sq = 0.0;
            for j in 0..x[m].cols() {
                let e = xbar[m].get(i, j) - x[m].get(i, j);
                sq += e * e;
            }
            total += sq / d * v.get(i, m);
        }
    }
    total / views as f64
}

/// The masked cross-view contrastive loss written out as printed, with no
/// exponent shift. Returns the loss and the number of skipped anchors.
pub fn oracle_contrastive(feats: &[Matrix], anchor_gate: &Matrix, den_gate: &Matrix, tau: f64) -> (f64, usize) {
    let v = feats.len();
    let n = anchor_gate.rows();
    let mut total = 0.0;
    let mut skipped = 0;
    for m in 0..v {
        for nn in 0..v {
            if m == nn {
                continue;
            }
            let mut l = 0.0;
            for i in 0..n {
                let g = anchor_gate.get(i, m) * anchor_gate.get(i, nn);
                if g == 0.0 {
                    continue;
                }
                let anchor = feats[m].row(i);
                let num = (oracle_cos01(anchor, feats[nn].row(i)) / tau).exp();
                let mut den = 0.0;
                for j in 0..n {
                    for k in [m, nn] {
                        den += (oracle_cos01(anchor, feats[k].row(j)) / tau).exp() * den_gate.get(j, k);
                    }
                }
                den -= (1.0 / tau).exp();
                if den <= 0.0 {
                    skipped += 1;
                    continue;
                }
                l += g * (num / den).ln();
            }
            total += -l / n as f64;
        }
    }
    (0.5 * total, skipped)
}

/// Label-level gate: view present and at least one label known.
pub fn oracle_label_gate(v: &Matrix, w: &Matrix) -> Matrix {
    let mut g = Matrix::zeros(v.rows(), v.cols());
    for i in 0..v.rows() {
        let mut known = false;
        for j in 0..w.cols() {
            if w.get(i, j) == 1.0 {
                known = true;
            }
        }
        for m in 0..v.cols() {
            if known && v.get(i, m) == 1.0 {
                g.set(i, m, 1.0);
            }
        }
    }
    g
}

pub fn oracle_bce(t: &Matrix, y: &Matrix, w: &Matrix) -> f64 {
    let (n, c) = t.shape();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..c {
            let p = t.get(i, j).clamp(1e-12, 1.0 - 1e-12);
            s += (y.get(i, j) * p.ln() + (1.0 - y.get(i, j)) * (1.0 - p).ln()) * w.get(i, j);
        }
    }
    -s / (n * c) as f64
}

/// Plain two-view InfoNCE over all pairs, self-pair removed, no masks.
pub fn oracle_infonce_two_view(a: &Matrix, b: &Matrix, tau: f64) -> f64 {
    let n = a.rows();
    let one_direction = |x: &Matrix, y: &Matrix| {
        let mut l = 0.0;
        for i in 0..n {
            let pos = oracle_cos01(x.row(i), y.row(i)) / tau;
            let mut logits = Vec::new();
            for j in 0..n {
                if j != i {
                    logits.push(oracle_cos01(x.row(i), x.row(j)) / tau);
                }
                logits.push(oracle_cos01(x.row(i), y.row(j)) / tau);
            }
            let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = mx + logits.iter().map(|z| (z - mx).exp()).sum::<f64>().ln();
            l += lse - pos;
        }
        l / n as f64
    };
    0.5 * (one_direction(a, b) + one_direction(b, a))
}

// --------------------------------------------------------------- metrics

fn relevant(y: &Matrix, i: usize) -> Vec<usize> {
    (0..y.cols()).filter(|&j| y.get(i, j) == 1.0).collect()
}

fn irrelevant(y: &Matrix, i: usize) -> Vec<usize> {
    (0..y.cols()).filter(|&j| y.get(i, j) != 1.0).collect()
}

/// 1-based rank of label `j` in sample `i`: labels strictly above it, plus
/// equal-scored labels with a smaller index, plus one.
pub fn oracle_rank(t: &Matrix, i: usize, j: usize) -> usize {
    let s = t.get(i, j);
    1 + (0..t.cols())
        .filter(|&k| t.get(i, k) > s || (t.get(i, k) == s && k < j))
        .count()
}

pub fn oracle_ap(t: &Matrix, y: &Matrix) -> Option<f64> {
    let mut sum = 0.0;
    let mut count = 0;
    for i in 0..t.rows() {
        let rel = relevant(y, i);
        if rel.is_empty() {
            continue;
        }
        let mut s = 0.0;
        for &j in &rel {
            let rj = oracle_rank(t, i, j);
            let above = rel.iter().filter(|&&k| oracle_rank(t, i, k) <= rj).count();
            s += above as f64 / rj as f64;
        }
        sum += s / rel.len() as f64;
        count += 1;
    }
    (count > 0).then(|| sum / count as f64)
}

pub fn oracle_hamming(t: &Matrix, y: &Matrix) -> f64 {
    let mut wrong = 0;
    for i in 0..t.rows() {
        for j in 0..t.cols() {
            let pred = if t.get(i, j) >= 0.5 { 1.0 } else { 0.0 };
            if pred != y.get(i, j) {
                wrong += 1;
            }
        }
    }
    1.0 - wrong as f64 / (t.rows() * t.cols()) as f64
}

pub fn oracle_ranking(t: &Matrix, y: &Matrix) -> Option<f64> {
    let mut sum = 0.0;
    let mut count = 0;
    for i in 0..t.rows() {
        let (rel, irr) = (relevant(y, i), irrelevant(y, i));
        if rel.is_empty() || irr.is_empty() {
            continue;
        }
        let mut bad = 0.0;
        for &r in &rel {
            for &q in &irr {
                if t.get(i, r) < t.get(i, q) {
                    bad += 1.0;
                } else if t.get(i, r) == t.get(i, q) {
                    bad += 0.5;
                }
            }
        }
        sum += bad / (rel.len() * irr.len()) as f64;
        count += 1;
    }
    (count > 0).then(|| 1.0 - sum / count as f64)
}

pub fn oracle_auc(t: &Matrix, y: &Matrix) -> Option<f64> {
    let mut sum = 0.0;
    let mut count = 0;
    for j in 0..t.cols() {
        let pos: Vec<usize> = (0..t.rows()).filter(|&i| y.get(i, j) == 1.0).collect();
        let neg: Vec<usize> = (0..t.rows()).filter(|&i| y.get(i, j) != 1.0).collect();
        if pos.is_empty() || neg.is_empty() {
            continue;
        }
        let mut good = 0.0;
        for &p in &pos {
            for &q in &neg {
                if t.get(p, j) > t.get(q, j) {
                    good += 1.0;
                } else if t.get(p, j) == t.get(q, j) {
                    good += 0.5;
                }
            }
        }
        sum += good / (pos.len() * neg.len()) as f64;
        count += 1;
    }
    (count > 0).then(|| sum / count as f64)
}

pub fn oracle_one_error(t: &Matrix, y: &Matrix) -> f64 {
    let mut wrong = 0;
    for i in 0..t.rows() {
        let top = (0..t.cols()).find(|&j| oracle_rank(t, i, j) == 1).unwrap();
        if y.get(i, top) != 1.0 {
            wrong += 1;
        }
    }
    wrong as f64 / t.rows() as f64
}

pub fn oracle_coverage(t: &Matrix, y: &Matrix) -> f64 {
    let mut sum = 0.0;
    let mut count = 0;
    for i in 0..t.rows() {
        let rel = relevant(y, i);
        if rel.is_empty() {
            continue;
        }
        let worst = rel.iter().map(|&j| oracle_rank(t, i, j)).max().unwrap();
        sum += (worst - 1) as f64 / t.cols() as f64;
        count += 1;
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Random scores and labels. With `coarse`, scores are drawn from a handful
/// of values so ties are frequent.
pub fn random_scores(r: &mut ChaCha8Rng, coarse: bool) -> (Matrix, Matrix) {
    let n = r.random_range(1..=12);
    let c = r.random_range(1..=7);
    let t = Matrix::from_fn(n, c, |_, _| {
        if coarse {
            r.random_range(0..5) as f64 / 4.0
        } else {
            r.random::<f64>()
        }
    });
    let p = r.random_range(0.1..0.9);
    let y = random_binary(r, n, c, p);
    (t, y)
}

// ----------------------------------------------------------------- model

use dcl::data::{apply_input_mask, MaskBank, MultiViewDataset};
use dcl::losses::LossWeights;
use dcl::model::{ModelConfig, ModelParams};
use dcl::numerics::{GradCheckOptions, GradCheckReport, Tape};
use dcl::train::{objective, ObjectiveDiagnostics};

/// Small dataset with partial view and label availability.
pub fn tiny_dataset(seed: u64, n: usize, dims: &[usize], c: usize) -> MultiViewDataset {
    let mut r = rng(seed);
    let views: Vec<Matrix> = dims.iter().map(|&d| random_matrix(&mut r, n, d)).collect();
    let labels = random_binary(&mut r, n, c, 0.5);
    let v = random_availability(&mut r, n, dims.len(), 0.7);
    let w = random_binary(&mut r, n, c, 0.7);
    MultiViewDataset::new(views, labels, v, w).unwrap()
}

/// `L_all` for parameters given as canonical tensors.
pub fn model_loss(
    cfg: &ModelConfig,
    tensors: &[Matrix],
    ds: &MultiViewDataset,
    inputs: &[Matrix],
    w: &LossWeights,
) -> f64 {
    let params = ModelParams::from_tensors(cfg, tensors.to_vec()).unwrap();
    let mut tape = Tape::new();
    let pv = params.register(&mut tape, false);
    let mut diag = ObjectiveDiagnostics::default();
    let obj = objective(&mut tape, &pv, inputs, ds, w, &mut diag).unwrap();
    tape.value(obj.total).to_scalar().unwrap()
}

/// Finite-difference audit of the full objective.
pub fn audit_full_model(
    seed: u64,
    n: usize,
    dims: &[usize],
    d: usize,
    h: usize,
    c: usize,
    w: &LossWeights,
) -> GradCheckReport {
    let ds = tiny_dataset(seed, n, dims, c);
    let cfg = ModelConfig {
        view_dims: dims.to_vec(),
        embed_dim: d,
        hidden_dim: h,
        n_labels: c,
    };
    let params = ModelParams::init(&cfg, seed).unwrap();
    let bank = MaskBank::generate(n, dims, 0.3, &mut rng(seed + 1)).unwrap();
    let inputs = apply_input_mask(&ds, &bank).unwrap();
    let (_, grads, _) = dcl::train::loss_and_gradients(&params, &ds, Some(&bank), w).unwrap();
    let tensors = params.to_vec();
    dcl::numerics::gradient_check(&tensors, &grads, GradCheckOptions::default(), |ts| {
        Ok(model_loss(&cfg, ts, &ds, &inputs, w))
    })
    .unwrap()
}

/// Perturbs every unavailable view row and every unknown label entry,
/// bypassing zero-fill.
pub fn perturb_masked(ds: &MultiViewDataset, seed: u64) -> MultiViewDataset {
    let mut r = rng(seed);
    let mut out = ds.clone();
    let v = ds.view_indicator().clone();
    let w = ds.label_indicator().clone();
    for (m, x) in out.views_mut_unchecked().iter_mut().enumerate() {
        for i in 0..x.rows() {
            if v.get(i, m) == 0.0 {
                x.row_mut(i).iter_mut().for_each(|e| *e = 10.0 * gauss(&mut r));
            }
        }
    }
    let y = out.labels_mut_unchecked();
    for i in 0..y.rows() {
        for j in 0..y.cols() {
            if w.get(i, j) == 0.0 {
                y.set(i, j, 1.0 - y.get(i, j));
            }
        }
    }
    out
}

/// Random loss inputs with partial view and label availability.
pub struct Instance {
    pub n: usize,
    pub v: usize,
    pub c: usize,
    pub feats: Vec<Matrix>,
    pub recon: Vec<Matrix>,
    pub inputs: Vec<Matrix>,
    pub view: Matrix,
    pub label_ind: Matrix,
    pub labels: Matrix,
    pub scores: Matrix,
    pub tau: f64,
}

pub fn loss_instance(seed: u64) -> Instance {
    let mut r = rng(seed);
    let n = r.random_range(1..=8);
    let v = r.random_range(1..=4);
    let c = r.random_range(1..=5);
    let d = r.random_range(1..=5);
    let mut feats: Vec<Matrix> = (0..v).map(|_| random_matrix(&mut r, n, d)).collect();
    // occasional zero feature row, as produced by zero-filled inputs
    if r.random_bool(0.3) {
        let m = r.random_range(0..v);
        let i = r.random_range(0..n);
        feats[m].row_mut(i).iter_mut().for_each(|x| *x = 0.0);
    }
    let dims: Vec<usize> = (0..v).map(|_| r.random_range(1..=6)).collect();
    let recon = dims.iter().map(|&dm| random_matrix(&mut r, n, dm)).collect();
    let inputs = dims.iter().map(|&dm| random_matrix(&mut r, n, dm)).collect();
    let p_view = r.random_range(0.4..1.0);
    let view = random_availability(&mut r, n, v, p_view);
    let p_label = r.random_range(0.2..1.0);
    let label_ind = random_binary(&mut r, n, c, p_label);
    let labels = random_binary(&mut r, n, c, 0.4);
    let scores = Matrix::from_fn(n, c, |_, _| r.random::<f64>());
    let tau = [0.1, 0.5, 1.0, 2.0][r.random_range(0..4)];
    Instance {
        n,
        v,
        c,
        feats,
        recon,
        inputs,
        view,
        label_ind,
        labels,
        scores,
        tau,
    }
}
