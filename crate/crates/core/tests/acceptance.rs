//! Acceptance suite. Runs every criterion at its stated tolerance and prints
//! one PASS/FAIL line per criterion; exits nonzero if any fails.

mod common;

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use dcl::cli::{cmd_eval, cmd_train, EvalArgs, ProtocolFlags, TrainArgs, TrainFlags};
use dcl::data::{apply_protocol, save_dataset, synth_dataset, MaskBank, Protocol, SynthConfig};
use dcl::losses::{self, DenominatorGate, LossWeights};
use dcl::metrics;
use dcl::model::{forward_all, ModelConfig, ModelParams};
use dcl::train::{channel_similarity, evaluate, similarity_summary, train, train_with, TrainConfig, TrainOptions};
use rand::Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn gradient_audit() -> Outcome {
    let start = Instant::now();
    let w = LossWeights {
        alpha: 0.1,
        beta: 0.1,
        gamma: 0.1,
        tau_s: 0.5,
        tau_l: 0.5,
        ..Default::default()
    };
    let rep = audit_full_model(0, 8, &[4, 4], 4, 8, 3, &w);
    let elapsed = start.elapsed();
    ensure(rep.max_rel_err < 1e-4, || {
        format!("max rel err {:.3e}", rep.max_rel_err)
    })?;
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "max rel err {:.3e} over {} coordinates in {:.2?}",
        rep.max_rel_err, rep.coordinates, elapsed
    ))
}

fn loss_oracles() -> Outcome {
    let err = |name: &str, seed: u64, got: f64, want: f64| format!("{name} seed {seed}: {got} vs {want}");
    for seed in 0..50 {
        let x = loss_instance(seed);
        let got = losses::reconstruction_loss(&x.recon, &x.inputs, &x.view).map_err(|e| e.to_string())?;
        let want = oracle_reconstruction(&x.recon, &x.inputs, &x.view);
        ensure(close(got, want, 1e-10), || err("reconstruction", seed, got, want))?;

        let (got, _) = losses::instance_contrastive(&x.feats, &x.view, x.tau).map_err(|e| e.to_string())?;
        let (want, _) = oracle_contrastive(&x.feats, &x.view, &x.view, x.tau);
        ensure(close(got, want, 1e-10), || err("instance", seed, got, want))?;

        let gate = oracle_label_gate(&x.view, &x.label_ind);
        ensure(losses::label_gate(&x.view, &x.label_ind) == gate, || {
            format!("label gate seed {seed}")
        })?;
        for (mode, den) in [(DenominatorGate::View, &x.view), (DenominatorGate::Label, &gate)] {
            let (got, _) =
                losses::label_contrastive(&x.feats, &gate, &x.view, x.tau, mode).map_err(|e| e.to_string())?;
            let (want, _) = oracle_contrastive(&x.feats, &gate, den, x.tau);
            ensure(close(got, want, 1e-10), || err("label", seed, got, want))?;
        }

        let got = losses::classification_loss(&x.scores, &x.labels, &x.label_ind).map_err(|e| e.to_string())?;
        let want = oracle_bce(&x.scores, &x.labels, &x.label_ind);
        ensure(close(got, want, 1e-10), || err("classification", seed, got, want))?;

        let mut r = rng(seed);
        let w = LossWeights {
            alpha: r.random(),
            beta: r.random(),
            gamma: r.random(),
            ..Default::default()
        };
        let p: [f64; 4] = [r.random(), r.random(), r.random(), r.random()];
        let got = losses::total_loss(p[0], p[1], p[2], p[3], &w)
            .map_err(|e| e.to_string())?
            .total;
        let want = p[3] + w.alpha * p[1] + w.beta * p[2] + w.gamma * p[0];
        ensure(close(got, want, 1e-10), || err("total", seed, got, want))?;
    }
    Ok("5 losses x 50 instances within 1e-10".into())
}

fn masking_invariants() -> Outcome {
    let w = LossWeights {
        alpha: 0.5,
        beta: 0.5,
        gamma: 0.5,
        ..Default::default()
    };
    let dims = [5, 3, 4];
    for seed in 0..20 {
        let ds = tiny_dataset(seed, 8, &dims, 4);
        let noisy = perturb_masked(&ds, seed + 50);
        let cfg = ModelConfig {
            view_dims: dims.to_vec(),
            embed_dim: 3,
            hidden_dim: 6,
            n_labels: 4,
        };
        let p = ModelParams::init(&cfg, seed).map_err(|e| e.to_string())?;
        let bank = MaskBank::generate(8, &dims, 0.3, &mut rng(seed)).map_err(|e| e.to_string())?;
        let (la, ga, _) = dcl::train::loss_and_gradients(&p, &ds, Some(&bank), &w).map_err(|e| e.to_string())?;
        let (lb, gb, _) = dcl::train::loss_and_gradients(&p, &noisy, Some(&bank), &w).map_err(|e| e.to_string())?;
        ensure(la == lb, || format!("seed {seed}: losses differ {la:?} vs {lb:?}"))?;
        ensure(ga == gb, || format!("seed {seed}: gradients differ"))?;
        let fa = forward_all(&p, &ds, None, false).map_err(|e| e.to_string())?;
        let fb = forward_all(&p, &noisy, None, false).map_err(|e| e.to_string())?;
        ensure(fa.scores == fb.scores, || format!("seed {seed}: scores differ"))?;
    }
    Ok("20 perturbed datasets, losses and gradients bit-identical".into())
}

fn metric_oracles() -> Outcome {
    let cmp = |got: dcl::Result<f64>, want: Option<f64>, tag: String| -> Result<(), String> {
        match (got, want) {
            (Ok(g), Some(w)) => ensure((g - w).abs() <= 1e-12, || format!("{tag}: {g} vs {w}")),
            (Err(_), None) => Ok(()),
            (g, w) => Err(format!("{tag}: {g:?} vs {w:?}")),
        }
    };
    for seed in 0..200 {
        let (t, y) = random_scores(&mut rng(seed), seed % 2 == 0);
        cmp(
            metrics::average_precision(&t, &y),
            oracle_ap(&t, &y),
            format!("ap {seed}"),
        )?;
        cmp(
            metrics::hamming(&t, &y, 0.5),
            Some(oracle_hamming(&t, &y)),
            format!("hamming {seed}"),
        )?;
        cmp(
            metrics::ranking_loss(&t, &y),
            oracle_ranking(&t, &y),
            format!("ranking {seed}"),
        )?;
        cmp(metrics::macro_auc(&t, &y), oracle_auc(&t, &y), format!("auc {seed}"))?;
        cmp(
            metrics::one_error(&t, &y),
            Some(oracle_one_error(&t, &y)),
            format!("one-error {seed}"),
        )?;
        cmp(
            metrics::coverage(&t, &y),
            Some(oracle_coverage(&t, &y)),
            format!("coverage {seed}"),
        )?;
    }
    let transforms: [fn(f64, f64) -> f64; 4] = [
        |x, a| 0.5 * a * x + 0.1,
        |x, a| (x - 0.5).powi(3) * a,
        |x, a| (a * x).exp(),
        |x, a| a * (x / (1.0 - x)).ln(),
    ];
    for seed in 0..50u64 {
        let mut r = rng(500 + seed);
        let (t, y) = random_scores(&mut r, seed % 3 == 0);
        let t = t.map(|x| x.clamp(0.01, 0.99));
        let a = r.random_range(0.5..3.0);
        let u = t.map(|x| transforms[seed as usize % 4](x, a));
        let same = metrics::average_precision(&t, &y).ok() == metrics::average_precision(&u, &y).ok()
            && metrics::ranking_loss(&t, &y).ok() == metrics::ranking_loss(&u, &y).ok()
            && metrics::macro_auc(&t, &y).ok() == metrics::macro_auc(&u, &y).ok()
            && metrics::one_error(&t, &y).ok() == metrics::one_error(&u, &y).ok()
            && metrics::coverage(&t, &y).ok() == metrics::coverage(&u, &y).ok();
        ensure(same, || format!("transform seed {seed} changed a ranking metric"))?;
    }
    Ok("6 metrics x 200 instances within 1e-12, 50 monotone transforms invariant".into())
}

const TREND_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const TREND_EPOCHS: usize = 150;

fn trend_config(seed: u64, w: f64) -> TrainConfig {
    TrainConfig {
        epochs: TREND_EPOCHS,
        lr: 2e-3,
        embed_dim: 32,
        hidden_dim: 64,
        seed,
        loss: LossWeights {
            alpha: w,
            beta: w,
            gamma: w,
            ..Default::default()
        },
        ..Default::default()
    }
}

struct TrendRun {
    ap_full: f64,
    ap_backbone: f64,
    within0: f64,
    within_final: f64,
    cross_final: f64,
}

fn trend_run(seed: u64) -> dcl::Result<TrendRun> {
    let ds = synth_dataset(&SynthConfig::uniform(600, 3, 6, 32, 1.0, seed).with_nuisance(4.0))?;
    let (train_set, test_set) = apply_protocol(&ds, &Protocol::standard(), seed)?;
    let test_set = test_set.expect("standard protocol splits");
    let opts = TrainOptions {
        eval: None,
        snapshot_epochs: vec![0, TREND_EPOCHS],
    };
    let full = train_with(&train_set, &trend_config(seed, 0.1), &opts)?;
    let (backbone, _) = train(&train_set, &trend_config(seed, 0.0))?;
    let summary = |p: &ModelParams| channel_similarity(p, &train_set).map(|s| similarity_summary(&s));
    let (within0, _) = summary(&full.snapshots[0].1)?;
    let (within_final, cross_final) = summary(&full.snapshots[1].1)?;
    Ok(TrendRun {
        ap_full: evaluate(&full.params, &test_set)?.ap,
        ap_backbone: evaluate(&backbone, &test_set)?.ap,
        within0,
        within_final,
        cross_final,
    })
}

fn ablation_trend(runs: &[TrendRun], elapsed: Duration) -> Outcome {
    let k = runs.len() as f64;
    let full = runs.iter().map(|r| r.ap_full).sum::<f64>() / k;
    let backbone = runs.iter().map(|r| r.ap_backbone).sum::<f64>() / k;
    let gain = full - backbone;
    let msg = format!("mean test AP full {full:.4} vs backbone {backbone:.4} (gain {gain:+.4}) in {elapsed:.1?}");
    ensure(gain >= 0.01, || msg.clone())?;
    ensure(elapsed < Duration::from_secs(600), || msg.clone())?;
    Ok(msg)
}

fn similarity_trend(runs: &[TrendRun]) -> Outcome {
    let k = runs.len() as f64;
    let w0 = runs.iter().map(|r| r.within0).sum::<f64>() / k;
    let wf = runs.iter().map(|r| r.within_final).sum::<f64>() / k;
    let cf = runs.iter().map(|r| r.cross_final).sum::<f64>() / k;
    let msg = format!(
        "shared-within {w0:.4} -> {wf:.4} (rise {:+.4}), final cross-block {cf:.4}",
        wf - w0
    );
    ensure(wf - w0 >= 0.1 && wf > cf, || msg.clone())?;
    Ok(msg)
}

fn split_protocol() -> ProtocolFlags {
    ProtocolFlags {
        view_missing: 0.5,
        label_missing: 0.5,
        train_frac: Some(0.7),
    }
}

fn train_args(manifest: &Path, out: &Path, epochs: usize) -> TrainArgs {
    TrainArgs {
        manifest: manifest.to_path_buf(),
        train: TrainFlags {
            epochs: Some(epochs),
            embed_dim: Some(16),
            hidden_dim: Some(32),
            seed: Some(7),
            ..Default::default()
        },
        protocol: split_protocol(),
        eval_every_epoch: true,
        snapshot_epochs: vec![0, epochs],
        out: out.to_path_buf(),
    }
}

fn determinism(dir: &Path) -> Outcome {
    let ds =
        synth_dataset(&SynthConfig::uniform(150, 3, 5, 12, 1.0, 11).with_nuisance(2.0)).map_err(|e| e.to_string())?;
    let manifest = save_dataset(&ds, &dir.join("data")).map_err(|e| e.to_string())?;
    let (a, b) = (dir.join("a"), dir.join("b"));
    cmd_train(&train_args(&manifest, &a, 20)).map_err(|e| e.to_string())?;
    cmd_train(&train_args(&manifest, &b, 20)).map_err(|e| e.to_string())?;
    let files = [
        "checkpoint.json",
        "train_log.csv",
        "metrics.txt",
        "metrics.csv",
        "snapshots/epoch_0.json",
        "snapshots/epoch_20.json",
    ];
    for f in files {
        let (x, y) = (fs::read(a.join(f)), fs::read(b.join(f)));
        ensure(matches!((&x, &y), (Ok(x), Ok(y)) if x == y), || {
            format!("{f} differs between runs")
        })?;
    }
    Ok(format!("{} artifacts bit-identical across two runs", files.len()))
}

fn end_to_end(dir: &Path) -> Outcome {
    let cfg = SynthConfig {
        dims: vec![10, 24, 17],
        ..SynthConfig::uniform(200, 3, 7, 10, 1.0, 21)
    };
    let ds = synth_dataset(&cfg).map_err(|e| e.to_string())?;
    let manifest = save_dataset(&ds, &dir.join("user")).map_err(|e| e.to_string())?;
    let run = dir.join("run");
    let trained = cmd_train(&train_args(&manifest, &run, 10)).map_err(|e| e.to_string())?;
    let report = cmd_eval(&EvalArgs {
        checkpoint: trained.checkpoint,
        manifest,
        protocol: split_protocol(),
        seed: None,
        out: Some(dir.join("eval")),
    })
    .map_err(|e| e.to_string())?;
    ensure(report == trained.report, || {
        "eval report differs from train report".into()
    })?;
    let values = [
        report.ap,
        report.one_minus_hl,
        report.one_minus_rl,
        report.auc,
        report.oe,
        report.cov,
    ];
    ensure(values.iter().all(|v| v.is_finite()), || format!("{report:?}"))?;
    Ok(format!(
        "train + eval on {} test samples, AP {:.4}",
        report.n_samples, report.ap
    ))
}

fn main() -> ExitCode {
    let dir = tempfile::tempdir().expect("temp dir");
    let mut results: Vec<(&str, Outcome)> = vec![
        ("1 gradient audit", gradient_audit()),
        ("2 loss oracles", loss_oracles()),
        ("3 masking invariants", masking_invariants()),
        ("4 metric oracles", metric_oracles()),
    ];

    let start = Instant::now();
    let runs: dcl::Result<Vec<TrendRun>> = TREND_SEEDS.iter().map(|&s| trend_run(s)).collect();
    let elapsed = start.elapsed();
    match runs {
        Ok(runs) => {
            for (s, r) in TREND_SEEDS.iter().zip(&runs) {
                println!(
                    "  seed {s}: AP full {:.4} backbone {:.4}; shared-within {:.4} -> {:.4}, cross {:.4}",
                    r.ap_full, r.ap_backbone, r.within0, r.within_final, r.cross_final
                );
            }
            results.push(("5 ablation trend", ablation_trend(&runs, elapsed)));
            results.push(("6 similarity trend", similarity_trend(&runs)));
        }
        Err(e) => {
            results.push(("5 ablation trend", Err(e.to_string())));
            results.push(("6 similarity trend", Err("no runs".into())));
        }
    }

    results.push(("7 determinism", determinism(dir.path())));
    results.push(("8 end-to-end", end_to_end(dir.path())));

    let mut failed = 0;
    for (name, outcome) in &results {
        match outcome {
            Ok(msg) => println!("PASS criterion {name}: {msg}"),
            Err(msg) => {
                failed += 1;
                println!("FAIL criterion {name}: {msg}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
