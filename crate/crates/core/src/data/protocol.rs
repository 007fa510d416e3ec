use serde::{Deserialize, Serialize};

use super::dataset::{split_indices, MultiViewDataset};
use super::missing::{label_indicator, view_indicator};
use crate::error::Result;
use crate::numerics::Matrix;
use crate::rng;

/// Missing-data rates and the train share applied before training.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    pub view_missing: f64,
    pub label_missing: f64,
    /// `None` keeps every sample for training and leaves the test split empty.
    pub train_frac: Option<f64>,
}

impl Protocol {
    /// 50% missing views, 50% missing labels, 70% of samples for training.
    pub fn standard() -> Self {
        Protocol {
            view_missing: 0.5,
            label_missing: 0.5,
            train_frac: Some(0.7),
        }
    }
}

/// Splits the samples, removes views from both parts and labels from the
/// training part only, so test metrics are computed against every label.
///
/// Returns `(train, test)`; `test` is `None` without a train fraction.
pub fn apply_protocol(
    dataset: &MultiViewDataset,
    protocol: &Protocol,
    seed: u64,
) -> Result<(MultiViewDataset, Option<MultiViewDataset>)> {
    let n = dataset.n_samples();
    let v_new = if protocol.view_missing > 0.0 {
        view_indicator(
            n,
            dataset.n_views(),
            protocol.view_missing,
            &mut rng::stream(seed, rng::tag::VIEW_MISSING),
        )?
    } else {
        Matrix::ones(n, dataset.n_views())
    };
    let w_new = if protocol.label_missing > 0.0 {
        label_indicator(
            n,
            dataset.n_labels(),
            protocol.label_missing,
            &mut rng::stream(seed, rng::tag::LABEL_MISSING),
        )?
    } else {
        Matrix::ones(n, dataset.n_labels())
    };
    let Some(frac) = protocol.train_frac else {
        return Ok((dataset.with_missing(&v_new, &w_new)?, None));
    };
    let (train_idx, test_idx) = split_indices(n, frac, seed)?;
    let train = dataset
        .select_rows(&train_idx)
        .with_missing(&v_new.select_rows(&train_idx), &w_new.select_rows(&train_idx))?;
    let test = dataset.select_rows(&test_idx).with_missing(
        &v_new.select_rows(&test_idx),
        &Matrix::ones(test_idx.len(), dataset.n_labels()),
    )?;
    Ok((train, Some(test)))
}
